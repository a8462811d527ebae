//! BLEU with modified (clipped) n-gram precision and brevity penalty, plus the
//! word-loss scaling factor derived from it.

use std::collections::HashMap;
use std::hash::Hash;

use crate::error::{Error, Result};
use crate::text::Caption;

/// Per-order precisions and the pieces the score is assembled from.
#[derive(Debug, Clone, PartialEq)]
pub struct BleuBreakdown {
    /// Clipped n-gram precision for orders 1..=max_order. Orders the candidate
    /// is too short to populate are recorded as 0 and excluded from the mean.
    pub modified_precisions: Vec<f64>,
    pub brevity_penalty: f64,
    pub candidate_length: usize,
    pub effective_reference_length: usize,
    pub score: f64,
}

/// Counts of all contiguous n-grams of the given order. Empty when the
/// sequence is shorter than the order.
pub fn ngram_counts<T: Eq + Hash + Clone>(tokens: &[T], order: usize) -> HashMap<Vec<T>, usize> {
    assert!(order >= 1, "n-gram order must be at least 1");
    let mut counts = HashMap::new();
    if tokens.len() >= order {
        for window in tokens.windows(order) {
            *counts.entry(window.to_vec()).or_insert(0) += 1;
        }
    }
    counts
}

/// BLEU of a candidate against a reference set.
///
/// Specials (PAD/BOS/EOS/UNK framing below id 4) are stripped before scoring.
/// The brevity penalty is 1 when the candidate is longer than the effective
/// reference length r, exp(1 - r/c) otherwise; r is the reference length
/// closest to c with ties broken toward the shorter reference. If any order
/// the candidate populates has zero clipped matches the score is 0.
pub fn bleu(candidate: &Caption, references: &[Caption], max_order: usize) -> Result<BleuBreakdown> {
    if max_order == 0 {
        return Err(Error::invalid("max_order must be at least 1"));
    }
    if references.is_empty() {
        return Err(Error::invalid("reference list is empty"));
    }
    let cand = candidate.content();
    if cand.is_empty() {
        return Err(Error::EmptyCandidate);
    }
    let refs: Vec<Vec<u32>> = references.iter().map(|r| r.content()).collect();
    if refs.iter().any(|r| r.is_empty()) {
        return Err(Error::EmptyReference);
    }

    let c = cand.len();
    let r = effective_reference_length(c, &refs);

    let mut precisions = Vec::with_capacity(max_order);
    let mut any_required_zero = false;
    for order in 1..=max_order {
        let cand_counts = ngram_counts(&cand, order);
        let total: usize = cand_counts.values().sum();
        if total == 0 {
            // candidate too short for this order; not required
            precisions.push(0.0);
            continue;
        }
        let mut max_ref_counts: HashMap<Vec<u32>, usize> = HashMap::new();
        for r in &refs {
            for (gram, count) in ngram_counts(r, order) {
                let e = max_ref_counts.entry(gram).or_insert(0);
                *e = (*e).max(count);
            }
        }
        let clipped: usize = cand_counts
            .iter()
            .map(|(gram, &count)| count.min(max_ref_counts.get(gram).copied().unwrap_or(0)))
            .sum();
        let p = clipped as f64 / total as f64;
        if p == 0.0 {
            any_required_zero = true;
        }
        precisions.push(p);
    }

    let brevity_penalty =
        if c > r { 1.0 } else { (1.0 - r as f64 / c as f64).exp() };

    let score = if any_required_zero {
        0.0
    } else {
        let contributing: Vec<f64> =
            precisions.iter().copied().filter(|&p| p > 0.0).collect();
        match contributing.len() {
            0 => 0.0,
            1 => brevity_penalty * contributing[0],
            n => {
                let mean_log = contributing.iter().map(|p| p.ln()).sum::<f64>() / n as f64;
                brevity_penalty * mean_log.exp()
            }
        }
    };

    Ok(BleuBreakdown {
        modified_precisions: precisions,
        brevity_penalty,
        candidate_length: c,
        effective_reference_length: r,
        score,
    })
}

fn effective_reference_length(c: usize, refs: &[Vec<u32>]) -> usize {
    let mut best = refs[0].len();
    let mut best_dist = best.abs_diff(c);
    for r in &refs[1..] {
        let len = r.len();
        let dist = len.abs_diff(c);
        if dist < best_dist || (dist == best_dist && len < best) {
            best = len;
            best_dist = dist;
        }
    }
    best
}

/// BLEU-1 of the candidate against a single reference, divided by the
/// reference's text length. This is the factor that scales the word-gradient
/// term of the latent update: a poorly matching prediction contributes weakly.
pub fn gamma1(candidate: &Caption, reference: &Caption) -> Result<f64> {
    let n = reference.content().len();
    if n == 0 {
        return Err(Error::EmptyReference);
    }
    let breakdown = bleu(candidate, std::slice::from_ref(reference), 1)?;
    Ok(breakdown.score / n as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::text::{Vocabulary, EOS};
    use proptest::prelude::*;

    fn cap(v: &Vocabulary, text: &str) -> Caption {
        Caption::from_text(v, text).unwrap()
    }

    #[test]
    fn unigram_counts() {
        let counts = ngram_counts(&["a", "b", "a"], 1);
        assert_eq!(counts[&vec!["a"]], 2);
        assert_eq!(counts[&vec!["b"]], 1);
        assert_eq!(counts.len(), 2);
    }

    #[test]
    fn bigram_counts() {
        let counts = ngram_counts(&["a", "b", "a"], 2);
        assert_eq!(counts[&vec!["a", "b"]], 1);
        assert_eq!(counts[&vec!["b", "a"]], 1);
        assert_eq!(counts.len(), 2);
    }

    #[test]
    fn order_longer_than_sequence_is_empty() {
        assert!(ngram_counts(&["a", "b", "a"], 4).is_empty());
        assert!(ngram_counts::<u32>(&[], 1).is_empty());
    }

    #[test]
    fn identity_scores_one_at_every_order() {
        let v = Vocabulary::toy_world();
        let c = cap(&v, "a red circle left of a blue square");
        for max_order in 1..=4 {
            let b = bleu(&c, std::slice::from_ref(&c), max_order).unwrap();
            assert_eq!(b.score, 1.0, "max_order={max_order}");
        }
        // short sentences too: orders beyond the length are not required
        let short = cap(&v, "red");
        assert_eq!(bleu(&short, std::slice::from_ref(&short), 4).unwrap().score, 1.0);
    }

    #[test]
    fn disjoint_candidate_scores_zero() {
        let v = Vocabulary::toy_world();
        let c = cap(&v, "yellow triangle");
        let r = cap(&v, "a red circle");
        assert_eq!(bleu(&c, &[r], 1).unwrap().score, 0.0);
    }

    #[test]
    fn clipped_counts_hand_example() {
        // candidate [the, the, the] vs reference [the, cat]:
        // clipped unigram matches = min(3, 1) = 1 of 3; c=3 > r=2 so bp=1.
        let v = Vocabulary::new(&["the", "cat"]).unwrap();
        let c = cap(&v, "the the the");
        let r = cap(&v, "the cat");
        let b = bleu(&c, &[r], 1).unwrap();
        assert!((b.modified_precisions[0] - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(b.brevity_penalty, 1.0);
        assert!((b.score - 1.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn brevity_penalty_for_short_candidates() {
        let v = Vocabulary::toy_world();
        let c = cap(&v, "red circle");
        let r = cap(&v, "a red circle left");
        let b = bleu(&c, &[r], 1).unwrap();
        assert_eq!(b.candidate_length, 2);
        assert_eq!(b.effective_reference_length, 4);
        assert!((b.brevity_penalty - (1.0f64 - 4.0 / 2.0).exp()).abs() < 1e-15);
        assert!((b.score - b.brevity_penalty * 1.0).abs() < 1e-15);
    }

    #[test]
    fn closest_reference_length_ties_toward_shorter() {
        let v = Vocabulary::toy_world();
        let c = cap(&v, "red circle above"); // length 3
        let r2 = cap(&v, "red circle");
        let r4 = cap(&v, "a red circle above");
        let b = bleu(&c, &[r4, r2], 1).unwrap();
        assert_eq!(b.effective_reference_length, 2);
    }

    #[test]
    fn specials_are_stripped_before_scoring() {
        let v = Vocabulary::toy_world();
        let with_eos = cap(&v, "a red circle").with_eos();
        let plain = cap(&v, "a red circle");
        let b = bleu(&with_eos, std::slice::from_ref(&plain), 1).unwrap();
        assert_eq!(b.score, 1.0);
        assert_eq!(b.candidate_length, 3);
    }

    #[test]
    fn empty_inputs_are_errors() {
        let v = Vocabulary::toy_world();
        let c = cap(&v, "a red circle");
        assert!(bleu(&c, &[], 1).is_err());
        let only_special = Caption::new(vec![EOS]);
        assert!(bleu(&only_special, std::slice::from_ref(&c), 1).is_err());
        assert!(bleu(&c, &[only_special], 1).is_err());
    }

    #[test]
    fn gamma1_examples() {
        let v = Vocabulary::toy_world();
        let r = cap(&v, "a red circle above"); // n = 4
        assert_eq!(gamma1(&r, &r).unwrap(), 0.25);
        let disjoint = cap(&v, "yellow triangle");
        assert_eq!(gamma1(&disjoint, &r).unwrap(), 0.0);
        // BLEU-1 = 0.5 with n = 4: two of four candidate words overlap
        let half = cap(&v, "red circle below below");
        let g = gamma1(&half, &r).unwrap();
        assert!((g - 0.125).abs() < 1e-15, "{g}");
    }

    #[test]
    fn monotone_clipping() {
        // raising a reference's count of a candidate n-gram never lowers precision
        let v = Vocabulary::toy_world();
        let c = cap(&v, "red red blue");
        let r1 = cap(&v, "red blue blue");
        let r2 = cap(&v, "red red blue");
        let p1 = bleu(&c, &[r1], 1).unwrap().modified_precisions[0];
        let p2 = bleu(&c, &[r2], 1).unwrap().modified_precisions[0];
        assert!(p2 >= p1);
    }

    proptest! {
        #[test]
        fn score_in_unit_interval_and_reference_order_invariant(
            cand in proptest::collection::vec(4u32..20, 1..12),
            mut refs in proptest::collection::vec(proptest::collection::vec(4u32..20, 1..12), 1..4),
            max_order in 1usize..4,
        ) {
            let candidate = Caption::new(cand);
            let captions: Vec<Caption> = refs.iter().cloned().map(Caption::new).collect();
            let b = bleu(&candidate, &captions, max_order).unwrap();
            prop_assert!((0.0..=1.0).contains(&b.score), "score {}", b.score);
            for p in &b.modified_precisions {
                prop_assert!((0.0..=1.0).contains(p));
            }
            refs.reverse();
            let reversed: Vec<Caption> = refs.into_iter().map(Caption::new).collect();
            let b2 = bleu(&candidate, &reversed, max_order).unwrap();
            prop_assert_eq!(b.score, b2.score);
        }

        #[test]
        fn self_bleu1_is_exactly_one(tokens in proptest::collection::vec(4u32..30, 1..15)) {
            let c = Caption::new(tokens);
            prop_assert_eq!(bleu(&c, std::slice::from_ref(&c), 1).unwrap().score, 1.0);
        }
    }
}
