use rand::seq::SliceRandom;

use super::types::*;
use super::SynthError;
use crate::rng::SeededRng;

/// Copies a sequencing instance with its events reordered by `permutation`
/// (1-based original positions, listed in shuffled order).
pub fn apply_event_permutation(original: &TaskInstance, permutation: &[usize]) -> Result<ShufflePair, SynthError> {
    let labels = match &original.key {
        AnswerKey::FullSequence { labels } => labels,
        _ => {
            return Err(SynthError::InvalidParameter(
                "event shuffling needs a full-sequence (Task 1 style) instance".into(),
            ))
        }
    };
    let n = original.video.event_count();
    if n < 2 {
        return Err(SynthError::InvalidParameter("event shuffling needs at least two events".into()));
    }
    let mut seen = vec![false; n];
    for &p in permutation {
        if p == 0 || p > n || std::mem::replace(&mut seen[p - 1], true) {
            return Err(SynthError::InvalidParameter(format!("{permutation:?} is not a permutation of 1..={n}")));
        }
    }
    if permutation.len() != n {
        return Err(SynthError::InvalidParameter(format!("{permutation:?} is not a permutation of 1..={n}")));
    }

    let segments: Vec<Segment> = permutation.iter().map(|&p| original.video.segments[p - 1].clone()).collect();
    let mut shuffled = original.clone();
    shuffled.video = MultiEventVideo::new(segments);
    shuffled.key = AnswerKey::FullSequence {
        labels: shuffled.video.labels(),
    };
    shuffled.prior_order = Some(labels.clone());
    Ok(ShufflePair {
        original: original.clone(),
        shuffled: shuffled.seal(),
        permutation: permutation.to_vec(),
    })
}

/// Pairs an instance with an event-shuffled copy under a non-identity permutation.
pub fn make_shuffle_pair(instance: &TaskInstance, rng: &mut SeededRng) -> Result<ShufflePair, SynthError> {
    let n = instance.video.event_count();
    if n < 2 {
        return Err(SynthError::InvalidParameter("event shuffling needs at least two events".into()));
    }
    let identity: Vec<usize> = (1..=n).collect();
    let mut perm = identity.clone();
    while perm == identity {
        perm.shuffle(rng);
    }
    apply_event_permutation(instance, &perm)
}

/// Seeded permutation of a frame sequence.
pub fn frame_shuffle<T: Clone>(frames: &[T], rng: &mut SeededRng) -> Result<Vec<T>, SynthError> {
    if frames.len() < 2 {
        return Err(SynthError::InvalidParameter(format!(
            "frame shuffling needs at least 2 frames, got {}",
            frames.len()
        )));
    }
    let mut out = frames.to_vec();
    out.shuffle(rng);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::gen_sequencing_n;
    use crate::testkit::fixture_catalog;

    #[test]
    fn reversal_reverses_video_and_key() {
        let cat = fixture_catalog();
        let inst = gen_sequencing_n(&cat, 3, None, &mut SeededRng::from_seed(1)).unwrap();
        let labels = inst.video.labels();
        let pair = apply_event_permutation(&inst, &[3, 2, 1]).unwrap();
        let reversed: Vec<String> = labels.iter().rev().cloned().collect();
        assert_eq!(pair.shuffled.video.labels(), reversed);
        assert_eq!(pair.shuffled.key, AnswerKey::FullSequence { labels: reversed });
        assert_eq!(pair.shuffled.prior_order.as_deref(), Some(&labels[..]));
        assert_eq!(pair.shuffled.candidates, inst.candidates);
        assert_ne!(pair.shuffled.instance_id, inst.instance_id);
    }

    #[test]
    fn two_event_pairs_always_swap() {
        // With two events the only non-identity permutation is the swap, so
        // every seed exercises the redraw loop's exit condition.
        let cat = fixture_catalog();
        for seed in 0..50 {
            let mut rng = SeededRng::from_seed(seed);
            let inst = gen_sequencing_n(&cat, 2, None, &mut rng).unwrap();
            let pair = make_shuffle_pair(&inst, &mut rng).unwrap();
            assert_eq!(pair.permutation, vec![2, 1]);
        }
    }

    #[test]
    fn rejects_bad_inputs() {
        let cat = fixture_catalog();
        let mut rng = SeededRng::from_seed(2);
        let single = gen_sequencing_n(&cat, 1, None, &mut rng).unwrap();
        assert!(make_shuffle_pair(&single, &mut rng).is_err());
        let inst = gen_sequencing_n(&cat, 3, None, &mut rng).unwrap();
        assert!(apply_event_permutation(&inst, &[1, 1, 2]).is_err());
        assert!(apply_event_permutation(&inst, &[1, 2]).is_err());
        assert!(frame_shuffle(&[1], &mut rng).is_err());
        assert!(frame_shuffle::<u8>(&[], &mut rng).is_err());
    }

    #[test]
    fn frame_shuffle_is_a_seeded_permutation() {
        let frames: Vec<u32> = (0..32).collect();
        let a = frame_shuffle(&frames, &mut SeededRng::from_seed(9)).unwrap();
        let b = frame_shuffle(&frames, &mut SeededRng::from_seed(9)).unwrap();
        assert_eq!(a, b);
        let mut sorted = a.clone();
        sorted.sort();
        assert_eq!(sorted, frames);
    }
}
