//! Product-feed entity matching via fuzzy text features and semi-supervised
//! constrained clustering.
//!
//! The pipeline: ingest a product feed (`id,title,category`), cross-join it
//! into labeled candidate pairs, describe every pair with five fuzzy-text
//! similarity features, and decide match / non-match by clustering the pair
//! vectors into two groups. Besides plain k-means, the crate ships two
//! semi-supervised engines that accept must-link / can't-link supervision:
//! COP-k-means and constrained deep embedded clustering.

pub mod cluster;
pub mod constraints;
pub mod dataio;
pub mod eval;
pub mod featurize;
pub mod nn;
pub mod strsim;
