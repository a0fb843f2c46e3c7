//! Brute-force reference implementations shared by the oracle tests and the
//! acceptance run. Nothing here calls the code under test.

#![allow(dead_code)]

pub mod tree;

/// Fraction of (positive, negative) pairs ranked correctly, ties counting
/// one half.
pub fn pairwise_concordance(labels: &[bool], scores: &[f64]) -> f64 {
    let (mut good, mut pairs) = (0.0, 0.0);
    for (i, &li) in labels.iter().enumerate() {
        for (j, &lj) in labels.iter().enumerate() {
            if li && !lj {
                pairs += 1.0;
                if scores[i] > scores[j] {
                    good += 1.0;
                } else if scores[i] == scores[j] {
                    good += 0.5;
                }
            }
        }
    }
    good / pairs
}
