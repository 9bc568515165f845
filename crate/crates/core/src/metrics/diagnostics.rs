use serde::{Deserialize, Serialize};

use crate::parse::ParsedAnswer;

/// Below this many eligible pairs an η value is flagged as low confidence.
pub const ETA_MIN_DENOMINATOR: usize = 20;

/// A ratio that may be undefined because its denominator is zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum RatioValue {
    Defined { value: f64 },
    Undefined { reason: String },
}

impl RatioValue {
    pub fn value(&self) -> Option<f64> {
        match self {
            RatioValue::Defined { value } => Some(*value),
            RatioValue::Undefined { .. } => None,
        }
    }

    /// Two decimals, or `undefined`.
    pub fn display(&self, decimals: usize) -> String {
        match self {
            RatioValue::Defined { value } => format!("{value:.decimals$}"),
            RatioValue::Undefined { .. } => "undefined".into(),
        }
    }
}

/// One evaluated shuffle pair: the answers on the original and the
/// event-shuffled video and whether each was exactly right.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairOutcome {
    pub original_id: String,
    pub shuffled_id: String,
    pub p_o: ParsedAnswer,
    pub p_s: ParsedAnswer,
    pub c_o: bool,
    pub c_s: bool,
}

impl PairOutcome {
    pub fn eligible(&self) -> bool {
        self.c_o && !self.c_s
    }

    /// The model repeated its original-order answer on the shuffled video.
    pub fn repeated(&self) -> bool {
        self.eligible() && self.p_o == self.p_s
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShuffleOutcome {
    pub pairs: Vec<PairOutcome>,
    pub total_pairs: usize,
    pub correct_original: usize,
    pub correct_shuffled: usize,
    /// |{C_o ∧ ¬C_s}|
    pub eligible: usize,
    /// |{P_o = P_s ∧ C_o ∧ ¬C_s}|
    pub repeated: usize,
    pub eta: RatioValue,
    pub low_confidence: bool,
}

impl ShuffleOutcome {
    pub fn accuracy_original(&self) -> f64 {
        pct(self.correct_original, self.total_pairs)
    }

    pub fn accuracy_shuffled(&self) -> f64 {
        pct(self.correct_shuffled, self.total_pairs)
    }
}

fn pct(num: usize, den: usize) -> f64 {
    if den == 0 { 0.0 } else { 100.0 * num as f64 / den as f64 }
}

pub fn biased_ratio(pairs: Vec<PairOutcome>) -> ShuffleOutcome {
    let eligible = pairs.iter().filter(|p| p.eligible()).count();
    let repeated = pairs.iter().filter(|p| p.repeated()).count();
    let eta = if eligible == 0 {
        RatioValue::Undefined {
            reason: "no pair was correct on the original and wrong after shuffling".into(),
        }
    } else {
        RatioValue::Defined {
            value: 100.0 * repeated as f64 / eligible as f64,
        }
    };
    ShuffleOutcome {
        total_pairs: pairs.len(),
        correct_original: pairs.iter().filter(|p| p.c_o).count(),
        correct_shuffled: pairs.iter().filter(|p| p.c_s).count(),
        eligible,
        repeated,
        eta,
        low_confidence: eligible < ETA_MIN_DENOMINATOR,
        pairs,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RobustnessOutcome {
    pub accuracy_original: f64,
    pub accuracy_shuffled: f64,
    pub rho: RatioValue,
}

/// Values above 100 are legal and kept as is.
pub fn robustness_ratio(accuracy_original: f64, accuracy_shuffled: f64) -> RobustnessOutcome {
    let rho = if accuracy_original > 0.0 && accuracy_original.is_finite() && accuracy_shuffled.is_finite() {
        RatioValue::Defined {
            value: 100.0 * accuracy_shuffled / accuracy_original,
        }
    } else {
        RatioValue::Undefined {
            reason: format!("original accuracy is {accuracy_original}"),
        }
    };
    RobustnessOutcome {
        accuracy_original,
        accuracy_shuffled,
        rho,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::AnswerKey;

    fn ans(v: &[&str]) -> ParsedAnswer {
        ParsedAnswer::Answer(AnswerKey::FullSequence {
            labels: v.iter().map(|s| s.to_string()).collect(),
        })
    }

    fn pair(p_o: ParsedAnswer, p_s: ParsedAnswer, c_o: bool, c_s: bool) -> PairOutcome {
        PairOutcome {
            original_id: "o".into(),
            shuffled_id: "s".into(),
            p_o,
            p_s,
            c_o,
            c_s,
        }
    }

    #[test]
    fn eta_counts_repeats_among_eligible() {
        let out = biased_ratio(vec![
            pair(ans(&["a", "b"]), ans(&["a", "b"]), true, false),
            pair(ans(&["a", "b"]), ans(&["b", "b"]), true, false),
            pair(ans(&["a", "b"]), ans(&["b", "a"]), true, true),
            pair(ans(&["x"]), ans(&["x"]), false, false),
        ]);
        assert_eq!((out.eligible, out.repeated), (2, 1));
        assert_eq!(out.eta, RatioValue::Defined { value: 50.0 });
        assert!(out.low_confidence);
    }

    #[test]
    fn empty_denominator_is_undefined() {
        let out = biased_ratio(vec![pair(ans(&["a"]), ans(&["b"]), true, true)]);
        assert!(matches!(out.eta, RatioValue::Undefined { .. }));
        assert_eq!(out.eta.display(2), "undefined");
    }

    #[test]
    fn rho_examples() {
        assert_eq!(robustness_ratio(60.10, 60.10).rho.value(), Some(100.0));
        assert_eq!(robustness_ratio(50.0, 0.0).rho.value(), Some(0.0));
        assert!(robustness_ratio(0.0, 10.0).rho.value().is_none());
        let r = robustness_ratio(50.0, 52.2).rho.value().unwrap();
        assert!((r - 104.4).abs() < 1e-9);
    }
}
