//! Pairwise feature assembly.
//!
//! A candidate pair of titles is described by five similarity scores, all in
//! `[0, 1]`. The order is fixed and is part of the persisted-file contract;
//! no scaling is applied afterwards since the features already share a range.

use crate::strsim;

/// Column names of the feature vector, in persisted order.
pub const FEATURE_NAMES: [&str; 5] =
    ["f_ratio", "f_partial", "f_token_set", "f_jaccard", "f_numeric"];

/// The 5-element numerical description of a product pair:
/// `[title_ratio, title_partial_ratio, title_token_set_ratio, title_jaccard, numeric_jaccard]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FeatureVector(pub [f64; 5]);

impl FeatureVector {
    pub fn ratio(&self) -> f64 {
        self.0[0]
    }

    pub fn partial_ratio(&self) -> f64 {
        self.0[1]
    }

    pub fn token_set_ratio(&self) -> f64 {
        self.0[2]
    }

    pub fn jaccard(&self) -> f64 {
        self.0[3]
    }

    pub fn numeric_jaccard(&self) -> f64 {
        self.0[4]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

/// Assembles the feature vector for one pair of titles.
///
/// Deterministic and symmetric in its arguments; empty titles are fine (the
/// kernels' empty-input conventions apply).
pub fn featurize_pair(title_a: &str, title_b: &str) -> FeatureVector {
    let tokens_a = strsim::tokenize(title_a);
    let tokens_b = strsim::tokenize(title_b);
    FeatureVector([
        strsim::ratio(title_a, title_b),
        strsim::partial_ratio(title_a, title_b),
        strsim::token_set_ratio(title_a, title_b),
        strsim::jaccard_sim(&tokens_a, &tokens_b),
        strsim::numeric_jaccard(title_a, title_b),
    ])
}

/// Featurizes a whole batch of title pairs, preserving row order.
pub fn featurize_dataset<S: AsRef<str>>(pairs: &[(S, S)]) -> Vec<FeatureVector> {
    pairs
        .iter()
        .map(|(a, b)| featurize_pair(a.as_ref(), b.as_ref()))
        .collect()
}
