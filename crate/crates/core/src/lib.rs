//! Synthesis and evaluation engine for multi-event temporal-order benchmarks.
//!
//! The pipeline runs catalog → [`synth`] → [`prompts`] → model backend
//! ([`clients`]) → [`parse`] → [`metrics`], orchestrated and persisted by
//! [`harness`]. [`materialize`] optionally renders instances into real media
//! through an external ffmpeg-compatible tool.

pub mod catalog;
pub mod clients;
pub mod frames;
pub mod harness;
pub mod materialize;
pub mod metrics;
pub mod parse;
pub mod prompts;
pub mod rng;
pub mod synth;
pub mod testkit;
pub mod text;
