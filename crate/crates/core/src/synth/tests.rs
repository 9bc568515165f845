use std::collections::HashSet;

use super::*;
use crate::catalog::{ClipCatalog, GroupId};
use crate::rng::SeededRng;
use crate::testkit::{fixture_catalog, fixture_parts};

fn labels(xs: &[&str]) -> Vec<String> {
    xs.iter().map(|s| s.to_string()).collect()
}

fn assert_common(inst: &TaskInstance, cat: &ClipCatalog) {
    assert_eq!(inst.candidates.len(), 20);
    let cands: HashSet<&String> = inst.candidates.iter().collect();
    assert_eq!(cands.len(), 20, "duplicate candidate");
    for label in inst.video.labels() {
        assert!(cands.contains(&label), "{label} missing from candidates");
    }
    for seg in &inst.video.segments {
        let clip = cat.clip_by_id(&seg.clip_id).expect("clip resolves");
        assert_eq!(clip.category_id, seg.category_id);
        assert_eq!(cat.category(&seg.category_id).unwrap().label, seg.label);
    }
    assert_eq!(inst.instance_id, inst.content_hash());
}

fn assert_distinct_events(inst: &TaskInstance) {
    let set: HashSet<String> = inst.video.labels().into_iter().collect();
    assert_eq!(set.len(), inst.video.event_count());
}

#[test]
fn sequencing_levels() {
    let cat = fixture_catalog();
    for (level, n) in [(Level::L1, 4), (Level::L2, 8)] {
        for i in 0..50 {
            let inst = gen_event_sequencing(&cat, level, &mut SeededRng::new(1, "t", i)).unwrap();
            assert_common(&inst, &cat);
            assert_distinct_events(&inst);
            assert_eq!(inst.video.event_count(), n);
            assert_eq!(inst.key, AnswerKey::FullSequence { labels: inst.video.labels() });
        }
    }
}

#[test]
fn events_between_examples() {
    let v = labels(&["A", "B", "C", "D"]);
    assert_eq!(events_between(&v, 1, 4), labels(&["B", "C"]));
    assert_eq!(events_between(&v, 2, 4), labels(&["C"]));
    assert!(events_between(&v, 3, 4).is_empty());
    assert!(events_between(&v, 4, 2).is_empty());
    assert!(events_between(&v, 1, 5).is_empty());
}

#[test]
fn relative_queries_have_events_between() {
    let cat = fixture_catalog();
    for model in [RelativeQueryModel::UniformGap, RelativeQueryModel::UniformPair] {
        for level in Level::ALL {
            for i in 0..100 {
                let mut rng = SeededRng::new(2, "t2", i);
                let inst = gen_relative_sequencing_with(&cat, level, model, &mut rng).unwrap();
                assert_common(&inst, &cat);
                assert_distinct_events(&inst);
                let TaskQuery::RelativePair { q_i, q_j } = inst.query else { panic!() };
                assert!(q_i >= 1 && q_j <= level.event_count() && q_j - q_i >= 2);
                let expected = events_between(&inst.video.labels(), q_i, q_j);
                assert!(!expected.is_empty());
                assert_eq!(inst.key, AnswerKey::SubSequence { labels: expected });
            }
        }
    }
}

#[test]
fn relative_gap_distribution_matches_model() {
    let cat = fixture_catalog();
    let n = 6000;
    for model in [RelativeQueryModel::UniformGap, RelativeQueryModel::UniformPair] {
        let weights = model.gap_weights(8);
        let mut counts = vec![0usize; 7];
        for i in 0..n {
            let inst = gen_relative_sequencing_with(&cat, Level::L2, model, &mut SeededRng::new(3, "gap", i)).unwrap();
            counts[inst.key.labels().unwrap().len()] += 1;
        }
        for (k, p) in weights {
            let expected = n as f64 * p;
            let sigma = (n as f64 * p * (1.0 - p)).sqrt();
            assert!(
                (counts[k] as f64 - expected).abs() <= 3.0 * sigma,
                "{model:?} gap {k}: {} vs {expected}",
                counts[k]
            );
        }
    }
}

#[test]
fn position_probes() {
    let cat = fixture_catalog();
    for level in Level::ALL {
        for n_q in 1..=3 {
            for i in 0..40 {
                let inst = gen_position_identification(&cat, level, n_q, &mut SeededRng::new(4, "t3", i)).unwrap();
                assert_common(&inst, &cat);
                assert_distinct_events(&inst);
                let TaskQuery::PositionProbe { queried } = &inst.query else { panic!() };
                let AnswerKey::Positions { positions } = &inst.key else { panic!() };
                assert_eq!(queried.len(), n_q);
                assert_eq!(positions.len(), n_q);
                let distinct: HashSet<&String> = queried.iter().collect();
                assert_eq!(distinct.len(), n_q);
                let video = inst.video.labels();
                for (label, &pos) in queried.iter().zip(positions) {
                    assert_eq!(&video[pos - 1], label);
                }
                assert_eq!(inst.variant(), TaskVariant::Position { n_q });
            }
        }
    }
    let mut rng = SeededRng::from_seed(0);
    assert!(gen_position_identification(&cat, Level::L1, 0, &mut rng).is_err());
    assert!(gen_position_identification(&cat, Level::L1, 4, &mut rng).is_err());
}

fn uniform_within_3_sigma(counts: &[usize], n: usize) {
    let p = 1.0 / counts.len() as f64;
    let expected = n as f64 * p;
    let sigma = (n as f64 * p * (1.0 - p)).sqrt();
    for (i, &c) in counts.iter().enumerate() {
        assert!(
            (c as f64 - expected).abs() <= 3.0 * sigma,
            "bin {} has {c}, expected {expected:.1} +- {:.1}",
            i + 1,
            3.0 * sigma
        );
    }
}

#[test]
fn semantic_outlier_structure_and_uniformity() {
    let cat = fixture_catalog();
    for level in Level::ALL {
        let n = 10_000;
        let mut counts = vec![0usize; level.event_count()];
        for i in 0..n {
            let inst = gen_semantic_outlier(&cat, level, &mut SeededRng::new(5, "t4", i as u64)).unwrap();
            let AnswerKey::OutlierPosition { position } = inst.key else { panic!() };
            counts[position - 1] += 1;
            if i < 200 {
                assert_common(&inst, &cat);
                assert_distinct_events(&inst);
                let groups: Vec<Option<GroupId>> = inst
                    .video
                    .segments
                    .iter()
                    .map(|s| cat.group_of(&s.category_id).map(|g| g.group_id.clone()))
                    .collect();
                let dominant = dominant_group(&groups).unwrap();
                assert_eq!(Some(&dominant), inst.dominant_group.as_ref());
                let off: Vec<usize> = (0..groups.len())
                    .filter(|&k| groups[k].as_ref() != Some(&dominant))
                    .collect();
                assert_eq!(off, vec![position - 1]);
                assert!(groups[position - 1].is_some(), "outlier must come from a group");
            }
        }
        uniform_within_3_sigma(&counts, n);
    }
}

#[test]
fn semantic_outlier_needs_two_groups() {
    let (m, c, mut g, k) = fixture_parts();
    g.truncate(1);
    let cat = ClipCatalog::from_parts(m, c, g, k).unwrap();
    let err = gen_semantic_outlier(&cat, Level::L1, &mut SeededRng::from_seed(1)).unwrap_err();
    assert!(matches!(err, SynthError::InsufficientCatalog(_)));
}

#[test]
fn semantic_outlier_skips_excluded_groups() {
    let (m, c, mut g, k) = fixture_parts();
    g[1].excluded = true;
    let cat = ClipCatalog::from_parts(m, c, g, k).unwrap();
    assert!(gen_semantic_outlier(&cat, Level::L1, &mut SeededRng::from_seed(1)).is_err());

    let cat = crate::testkit::demo_catalog();
    for i in 0..300 {
        let inst = gen_semantic_outlier(&cat, Level::L1, &mut SeededRng::new(6, "t4", i)).unwrap();
        for s in &inst.video.segments {
            assert!(!cat.group_of(&s.category_id).unwrap().excluded);
        }
    }
}

#[test]
fn dominant_group_ties_are_none() {
    let a = Some(GroupId::new("a"));
    let b = Some(GroupId::new("b"));
    assert_eq!(dominant_group(&[a.clone(), a.clone(), b.clone()]), a);
    assert_eq!(dominant_group(&[a.clone(), b.clone()]), None);
    assert_eq!(dominant_group(&[None, None]), None);
    assert_eq!(dominant_group(&[None, b.clone(), None]), b);
}

/// Positions whose deletion leaves an exact repetition of `pattern`.
fn repairing_deletions(seq: &[String], pattern: &[String], reps: usize) -> Vec<usize> {
    let target: Vec<&String> = pattern.iter().cycle().take(pattern.len() * reps).collect();
    (0..seq.len())
        .filter(|&skip| {
            let rest: Vec<&String> = seq.iter().enumerate().filter(|(i, _)| *i != skip).map(|(_, s)| s).collect();
            rest == target
        })
        .map(|i| i + 1)
        .collect()
}

#[test]
fn pattern_outlier_layout() {
    let seq = labels(&["s1", "s2", "s1", "x", "s2", "s1", "s2"]);
    assert_eq!(repairing_deletions(&seq, &labels(&["s1", "s2"]), 3), vec![4]);
}

#[test]
fn pattern_outlier_structure_and_uniformity() {
    let cat = fixture_catalog();
    for (m, level, len) in [(2, Level::L1, 7), (2, Level::L2, 9), (3, Level::L1, 7), (3, Level::L2, 10)] {
        let n = 10_000;
        let mut counts = vec![0usize; len];
        for i in 0..n {
            let inst = gen_pattern_outlier(&cat, m, level, &mut SeededRng::new(7, "t5", i as u64)).unwrap();
            assert_eq!(inst.video.event_count(), len);
            let AnswerKey::OutlierPosition { position } = inst.key else { panic!() };
            counts[position - 1] += 1;
            if i < 300 {
                assert_common(&inst, &cat);
                let spec = inst.pattern.as_ref().unwrap();
                assert_eq!(spec.sequence_length(), len);
                assert_eq!(spec.insertion_index, position);
                let distinct: HashSet<&String> = spec.pattern.iter().collect();
                assert_eq!(distinct.len(), m);
                assert!(!spec.pattern.contains(&spec.outlier));
                assert_eq!(
                    repairing_deletions(&inst.video.labels(), &spec.pattern, spec.repetitions),
                    vec![position]
                );
            }
        }
        uniform_within_3_sigma(&counts, n);
    }
    assert!(gen_pattern_outlier(&cat, 4, Level::L1, &mut SeededRng::from_seed(0)).is_err());
}

#[test]
fn single_event_instances() {
    let cat = fixture_catalog();
    for i in 0..50 {
        let inst = gen_single_event(&cat, &mut SeededRng::new(8, "t0", i)).unwrap();
        assert_common(&inst, &cat);
        assert_eq!(inst.video.event_count(), 1);
        assert_eq!(inst.key, AnswerKey::SingleLabel { label: inst.video.segments[0].label.clone() });
    }
}

#[test]
fn batches_are_deterministic_and_index_addressed() {
    let cat = fixture_catalog();
    let spec = GenSpec::Position { level: Level::L2, n_q: 2 };
    let a = generate_batch(&cat, spec, 64, 11).unwrap();
    let b = generate_batch(&cat, spec, 64, 11).unwrap();
    assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
    let solo = spec.generate(&cat, &mut SeededRng::new(11, spec.stream_name(), 17)).unwrap();
    assert_eq!(a[17], solo);
    let other_seed = generate_batch(&cat, spec, 64, 12).unwrap();
    assert_ne!(a, other_seed);
    let ids: HashSet<&String> = a.iter().map(|i| &i.instance_id).collect();
    assert_eq!(ids.len(), 64);
}

#[test]
fn release_counts() {
    let plan = release_plan(RELEASE_PER_ROW);
    let count = |f: &dyn Fn(&GenSpec) -> bool| plan.iter().filter(|(s, _)| f(s)).map(|(_, c)| c).sum::<usize>();
    assert_eq!(count(&|s| matches!(s, GenSpec::Sequencing { .. })), 600);
    assert_eq!(count(&|s| matches!(s, GenSpec::Relative { .. })), 600);
    assert_eq!(count(&|s| matches!(s, GenSpec::Position { .. })), 1800);
    assert_eq!(count(&|s| matches!(s, GenSpec::SemanticOutlier { .. })), 600);
    assert_eq!(count(&|s| matches!(s, GenSpec::PatternOutlier { .. })), 1200);
    assert_eq!(count(&|_| true), 4800);
}

#[test]
fn shuffle_pairs_preserve_events() {
    let cat = fixture_catalog();
    let pairs = generate_shuffle_pairs(&cat, 200, 3, 6, 5).unwrap();
    let mut sizes = HashSet::new();
    for pair in &pairs {
        let n = pair.original.video.event_count();
        sizes.insert(n);
        assert!((3..=6).contains(&n));
        let mut a = pair.original.video.labels();
        let mut b = pair.shuffled.video.labels();
        assert_ne!(a, b);
        a.sort();
        b.sort();
        assert_eq!(a, b);
        assert_ne!(pair.permutation, (1..=n).collect::<Vec<_>>());
        assert_eq!(pair.shuffled.candidates, pair.original.candidates);
    }
    assert_eq!(sizes.len(), 4);
    assert!(generate_shuffle_pairs(&cat, 1, 1, 3, 0).is_err());
}

#[test]
fn description_videos_use_train_clips() {
    let cat = crate::testkit::demo_catalog();
    for n in [3, 4, 5, 6, 8] {
        let v = gen_description_video(&cat, n, &mut SeededRng::new(9, "desc", n as u64)).unwrap();
        assert_eq!(v.event_count(), n);
        for s in &v.segments {
            assert_eq!(cat.clip_by_id(&s.clip_id).unwrap().split, crate::catalog::Split::Train);
        }
    }
    // the fixture catalog has no train clips
    assert!(gen_description_video(&fixture_catalog(), 3, &mut SeededRng::from_seed(0)).is_err());
}

#[test]
fn variant_row_labels() {
    assert_eq!(TaskVariant::PatternOutlier { m: 2 }.row_label(Some(Level::L1)), "s1s2s1s2s1s2 + x");
    assert_eq!(TaskVariant::PatternOutlier { m: 3 }.row_label(Some(Level::L2)), "s1s2s3s1s2s3s1s2s3 + x");
    assert_eq!(TaskVariant::Position { n_q: 2 }.row_label(Some(Level::L1)), "Double event detection");
}
