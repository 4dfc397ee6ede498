//! Feed ingestion, candidate-pair generation, and dataset splitting.
//!
//! A feed is a CSV with header `id,title,category`. Candidate pairs come from
//! the unordered cross-join of the feed with a controlled positive fraction;
//! sampling is uniform without replacement and deterministic per seed.

use std::collections::{BTreeMap, HashSet};
use std::io::Write as _;
use std::path::Path;

use rand::seq::{index, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::featurize::{featurize_pair, FeatureVector, FEATURE_NAMES};

/// One product-feed entry. Records with equal `entity_id` describe the same
/// physical product.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ProductRecord {
    pub entity_id: String,
    pub title: String,
    pub category: String,
}

/// An unordered candidate pair of feed rows. `label == 1` iff both rows share
/// an `entity_id`. Features are filled in by [`PairDataset::featurize`].
#[derive(Debug, Clone, PartialEq)]
pub struct PairRecord {
    pub pair_id: u64,
    pub index_a: usize,
    pub index_b: usize,
    pub label: u8,
    pub features: Option<FeatureVector>,
}

/// A labeled pair collection; the clustering dataset.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct PairDataset {
    pub pairs: Vec<PairRecord>,
    pub positive_fraction: f64,
}

#[derive(Debug, Error)]
pub enum DataError {
    #[error("feed is missing required column `{0}`")]
    MissingColumn(String),
    #[error("feed row {0} has an empty title")]
    EmptyTitle(usize),
    #[error("malformed CSV at row {row}: {message}")]
    MalformedCsv { row: usize, message: String },
    #[error("requested {requested} positive pairs but the cross-join only has {available}")]
    InsufficientPositives { requested: usize, available: usize },
    #[error("requested {requested} negative pairs but the cross-join only has {available}")]
    InsufficientNegatives { requested: usize, available: usize },
    #[error("pair {pair_id} has no features; featurize the dataset first")]
    MissingFeatures { pair_id: u64 },
    #[error("pair index {index} out of bounds for feed of {len} records")]
    IndexOutOfBounds { index: usize, len: usize },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Round-half-up for non-negative quantities.
pub(crate) fn round_half_up(x: f64) -> usize {
    (x + 0.5).floor() as usize
}

/// Reads a product feed. Input order is preserved; row numbers in errors are
/// 1-based data rows (the header is row 0).
pub fn load_feed(path: impl AsRef<Path>) -> Result<Vec<ProductRecord>, DataError> {
    let mut reader = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_path(path.as_ref())
        .map_err(|e| csv_error_to_data(e, 0))?;

    let headers = reader.headers().map_err(|e| csv_error_to_data(e, 0))?.clone();
    let col = |name: &str| -> Result<usize, DataError> {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| DataError::MissingColumn(name.to_string()))
    };
    let id_col = col("id")?;
    let title_col = col("title")?;
    let category_col = col("category")?;

    let mut records = Vec::new();
    for (i, row) in reader.records().enumerate() {
        let row_no = i + 1;
        let row = row.map_err(|e| csv_error_to_data(e, row_no))?;
        let field = |idx: usize| -> Result<&str, DataError> {
            row.get(idx).ok_or(DataError::MalformedCsv {
                row: row_no,
                message: "missing field".to_string(),
            })
        };
        let entity_id = field(id_col)?.trim().to_string();
        let title = field(title_col)?.trim().to_string();
        let category = field(category_col)?.trim().to_string();
        if entity_id.is_empty() {
            return Err(DataError::MalformedCsv {
                row: row_no,
                message: "empty id".to_string(),
            });
        }
        if title.is_empty() {
            return Err(DataError::EmptyTitle(row_no));
        }
        records.push(ProductRecord { entity_id, title, category });
    }
    Ok(records)
}

fn csv_error_to_data(e: csv::Error, fallback_row: usize) -> DataError {
    let row = e
        .position()
        .map(|p| p.record() as usize)
        .unwrap_or(fallback_row);
    let message = e.to_string();
    match e.into_kind() {
        csv::ErrorKind::Io(io) => DataError::Io(io),
        _ => DataError::MalformedCsv { row, message },
    }
}

/// Samples `n_pairs` unordered pairs from the cross-join of the feed, of
/// which `round(n_pairs * positive_fraction)` share an entity id.
///
/// Sampling is uniform without replacement within each class and
/// deterministic per seed. No self-pairs, no duplicate unordered pairs.
pub fn generate_pairs(
    feed: &[ProductRecord],
    n_pairs: usize,
    positive_fraction: f64,
    seed: u64,
) -> Result<PairDataset, DataError> {
    let n = feed.len();
    let mut by_entity: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, rec) in feed.iter().enumerate() {
        by_entity.entry(rec.entity_id.as_str()).or_default().push(i);
    }

    let mut positive_pool: Vec<(usize, usize)> = Vec::new();
    for members in by_entity.values() {
        for (k, &a) in members.iter().enumerate() {
            for &b in &members[k + 1..] {
                positive_pool.push((a.min(b), a.max(b)));
            }
        }
    }
    let total_pairs = n * n.saturating_sub(1) / 2;
    let available_neg = total_pairs - positive_pool.len();

    let n_pos = round_half_up(n_pairs as f64 * positive_fraction);
    let n_neg = n_pairs.saturating_sub(n_pos);
    if n_pos > positive_pool.len() || (positive_fraction > 0.0 && positive_pool.is_empty()) {
        return Err(DataError::InsufficientPositives {
            requested: n_pos.max(1),
            available: positive_pool.len(),
        });
    }
    if n_neg > available_neg {
        return Err(DataError::InsufficientNegatives { requested: n_neg, available: available_neg });
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut chosen: Vec<(usize, usize, u8)> = Vec::with_capacity(n_pairs);
    for idx in index::sample(&mut rng, positive_pool.len(), n_pos) {
        let (a, b) = positive_pool[idx];
        chosen.push((a, b, 1));
    }

    // Negatives: rejection-sample from the cross-join unless the request
    // covers most of the pool, in which case materialize and sample.
    if n_neg * 2 > available_neg {
        let positive_set: HashSet<(usize, usize)> = positive_pool.iter().copied().collect();
        let mut negative_pool: Vec<(usize, usize)> = Vec::with_capacity(available_neg);
        for a in 0..n {
            for b in a + 1..n {
                if !positive_set.contains(&(a, b)) {
                    negative_pool.push((a, b));
                }
            }
        }
        for idx in index::sample(&mut rng, negative_pool.len(), n_neg) {
            let (a, b) = negative_pool[idx];
            chosen.push((a, b, 0));
        }
    } else {
        let mut taken: HashSet<(usize, usize)> = HashSet::with_capacity(n_neg);
        while taken.len() < n_neg {
            let i = rng.random_range(0..n);
            let j = rng.random_range(0..n);
            if i == j {
                continue;
            }
            let pair = (i.min(j), i.max(j));
            if feed[pair.0].entity_id == feed[pair.1].entity_id || taken.contains(&pair) {
                continue;
            }
            taken.insert(pair);
            chosen.push((pair.0, pair.1, 0));
        }
    }

    chosen.shuffle(&mut rng);
    let pairs = chosen
        .into_iter()
        .enumerate()
        .map(|(pair_id, (index_a, index_b, label))| PairRecord {
            pair_id: pair_id as u64,
            index_a,
            index_b,
            label,
            features: None,
        })
        .collect::<Vec<_>>();
    let actual_fraction = if pairs.is_empty() { 0.0 } else { n_pos as f64 / pairs.len() as f64 };
    Ok(PairDataset { pairs, positive_fraction: actual_fraction })
}

impl PairDataset {
    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn labels(&self) -> Vec<u8> {
        self.pairs.iter().map(|p| p.label).collect()
    }

    pub fn positive_count(&self) -> usize {
        self.pairs.iter().filter(|p| p.label == 1).count()
    }

    /// Fills in the feature vector of every pair from the feed titles.
    pub fn featurize(&mut self, feed: &[ProductRecord]) -> Result<(), DataError> {
        for pair in &mut self.pairs {
            for idx in [pair.index_a, pair.index_b] {
                if idx >= feed.len() {
                    return Err(DataError::IndexOutOfBounds { index: idx, len: feed.len() });
                }
            }
            pair.features =
                Some(featurize_pair(&feed[pair.index_a].title, &feed[pair.index_b].title));
        }
        Ok(())
    }

    /// Feature rows in dataset order; errors if any pair is unfeaturized.
    pub fn feature_rows(&self) -> Result<Vec<[f64; 5]>, DataError> {
        self.pairs
            .iter()
            .map(|p| {
                p.features
                    .map(|f| f.0)
                    .ok_or(DataError::MissingFeatures { pair_id: p.pair_id })
            })
            .collect()
    }
}

/// Splits into train/test preserving the class ratio within one pair.
///
/// `|train| = round(train_fraction * |ds|)`; the remainder goes to the test
/// side. Both splits are shuffled, deterministically per seed.
pub fn stratified_split(
    ds: &PairDataset,
    train_fraction: f64,
    seed: u64,
) -> (PairDataset, PairDataset) {
    assert!(
        train_fraction > 0.0 && train_fraction < 1.0,
        "train_fraction must lie in (0, 1)"
    );
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pos_idx: Vec<usize> = Vec::new();
    let mut neg_idx: Vec<usize> = Vec::new();
    for (i, p) in ds.pairs.iter().enumerate() {
        if p.label == 1 {
            pos_idx.push(i);
        } else {
            neg_idx.push(i);
        }
    }
    pos_idx.shuffle(&mut rng);
    neg_idx.shuffle(&mut rng);

    let n_train = round_half_up(ds.len() as f64 * train_fraction);
    let n_train_pos = round_half_up(pos_idx.len() as f64 * train_fraction).min(n_train);
    let n_train_neg = (n_train - n_train_pos).min(neg_idx.len());

    let mut train_rows: Vec<usize> = Vec::with_capacity(n_train);
    train_rows.extend(&pos_idx[..n_train_pos]);
    train_rows.extend(&neg_idx[..n_train_neg]);
    let mut test_rows: Vec<usize> = Vec::with_capacity(ds.len() - train_rows.len());
    test_rows.extend(&pos_idx[n_train_pos..]);
    test_rows.extend(&neg_idx[n_train_neg..]);
    train_rows.shuffle(&mut rng);
    test_rows.shuffle(&mut rng);

    let collect = |rows: &[usize]| -> PairDataset {
        let pairs: Vec<PairRecord> = rows.iter().map(|&i| ds.pairs[i].clone()).collect();
        let n_pos = pairs.iter().filter(|p| p.label == 1).count();
        let frac = if pairs.is_empty() { 0.0 } else { n_pos as f64 / pairs.len() as f64 };
        PairDataset { pairs, positive_fraction: frac }
    };
    (collect(&train_rows), collect(&test_rows))
}

const BRANDS: [&str; 16] = [
    "acron", "belvia", "cormax", "dalton", "ecliptar", "fenwick", "gorand", "halcyon", "ivexa",
    "jotun", "kyra", "lumenor", "maxtor", "nerida", "optane", "pylox",
];
const PRODUCT_WORDS: [&str; 8] = ["cam", "shot", "pix", "zoom", "view", "snap", "optic", "lens"];
const LINE_WORDS: [&str; 8] = ["pro", "max", "lite", "plus", "ultra", "neo", "prime", "air"];
const ATTR_WORDS: [&str; 15] = [
    "black", "white", "silver", "red", "blue", "gray", "green", "gold", "kit", "bundle", "case",
    "bag", "battery", "charger", "strap",
];

/// Generates a synthetic feed: every entity gets a base title (brand, product
/// word, line word, digit model number, attributes) and `variants_per_entity`
/// noisy restatements of it.
///
/// Perturbation intensity scales with `noise`; `noise == 0` reproduces the
/// base title verbatim for every variant. Deterministic per seed.
pub fn synth_feed(
    n_entities: usize,
    variants_per_entity: usize,
    noise: f64,
    seed: u64,
) -> Vec<ProductRecord> {
    assert!(n_entities >= 2, "need at least two entities");
    assert!(variants_per_entity >= 1, "need at least one variant per entity");
    assert!((0.0..=1.0).contains(&noise), "noise must lie in [0, 1]");

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut model_numbers: HashSet<String> = HashSet::new();
    let mut feed = Vec::with_capacity(n_entities * variants_per_entity);

    for entity in 0..n_entities {
        let entity_id = format!("e{entity:05}");
        let brand = BRANDS[rng.random_range(0..BRANDS.len())];
        let product = PRODUCT_WORDS[rng.random_range(0..PRODUCT_WORDS.len())];
        let line = LINE_WORDS[rng.random_range(0..LINE_WORDS.len())];
        let model = loop {
            let m = format!("{}", rng.random_range(100..10000));
            if model_numbers.insert(m.clone()) {
                break m;
            }
        };
        let mut base: Vec<String> = vec![
            brand.to_string(),
            product.to_string(),
            line.to_string(),
            model.clone(),
        ];
        let n_attrs = rng.random_range(1..=3);
        for _ in 0..n_attrs {
            base.push(ATTR_WORDS[rng.random_range(0..ATTR_WORDS.len())].to_string());
        }

        for _ in 0..variants_per_entity {
            let title = if noise == 0.0 {
                base.join(" ")
            } else {
                perturb_title(&base, noise, &mut rng)
            };
            feed.push(ProductRecord {
                entity_id: entity_id.clone(),
                title,
                category: "cameras".to_string(),
            });
        }
    }
    feed
}

fn perturb_title(base: &[String], noise: f64, rng: &mut ChaCha8Rng) -> String {
    let mut tokens: Vec<String> = Vec::with_capacity(base.len() + 2);
    for (i, tok) in base.iter().enumerate() {
        // Slots: 0 brand, 1 product word, 2 line word, 3 model number, 4+ attributes.
        let drop_prob = match i {
            0 => 0.15 * noise,
            3 => 0.22 * noise,
            _ if i >= 4 => 0.50 * noise,
            _ => 0.08 * noise,
        };
        if rng.random_range(0.0..1.0) >= drop_prob {
            tokens.push(tok.clone());
        }
    }
    if tokens.is_empty() {
        tokens.push(base[0].clone());
    }
    // Typo: mutate one character of one surviving token.
    if rng.random_range(0.0..1.0) < 0.9 * noise {
        let t = rng.random_range(0..tokens.len());
        let mut chars: Vec<char> = tokens[t].chars().collect();
        let pos = rng.random_range(0..chars.len());
        chars[pos] = (b'a' + rng.random_range(0..26u8)) as char;
        tokens[t] = chars.into_iter().collect();
    }
    // Marketplace junk: extra attribute words and stray numbers.
    if rng.random_range(0.0..1.0) < 0.75 * noise {
        let extras = rng.random_range(1..=2);
        for _ in 0..extras {
            tokens.push(ATTR_WORDS[rng.random_range(0..ATTR_WORDS.len())].to_string());
        }
    }
    if rng.random_range(0.0..1.0) < 0.45 * noise {
        tokens.push(format!("{}", rng.random_range(1..100)));
    }
    if rng.random_range(0.0..1.0) < (1.5 * noise).min(1.0) {
        tokens.shuffle(rng);
    }
    tokens.join(" ")
}

/// Writes a feed in the `id,title,category` schema.
pub fn save_feed(path: impl AsRef<Path>, feed: &[ProductRecord]) -> Result<(), DataError> {
    save_feed_impl(path, feed, None)
}

/// Like [`save_feed`], with a provenance comment (`# key=value,...`) above
/// the header. [`load_feed`] skips comment lines.
pub fn save_feed_with_meta(
    path: impl AsRef<Path>,
    feed: &[ProductRecord],
    meta: &str,
) -> Result<(), DataError> {
    save_feed_impl(path, feed, Some(meta))
}

fn save_feed_impl(
    path: impl AsRef<Path>,
    feed: &[ProductRecord],
    meta: Option<&str>,
) -> Result<(), DataError> {
    let mut file = std::fs::File::create(path.as_ref())?;
    if let Some(meta) = meta {
        writeln!(file, "# {meta}")?;
    }
    let mut w = csv::Writer::from_writer(file);
    w.write_record(["id", "title", "category"])
        .map_err(|e| csv_error_to_data(e, 0))?;
    for rec in feed {
        w.write_record([&rec.entity_id, &rec.title, &rec.category])
            .map_err(|e| csv_error_to_data(e, 0))?;
    }
    w.flush()?;
    Ok(())
}

/// Writes a featurized pair dataset. Floats carry 12 decimal places and the
/// sampling parameters ride along in a leading comment.
pub fn save_pairs(
    path: impl AsRef<Path>,
    ds: &PairDataset,
    seed: u64,
) -> Result<(), DataError> {
    let mut file = std::fs::File::create(path.as_ref())?;
    writeln!(
        file,
        "# n_pairs={},positive_fraction={},seed={}",
        ds.len(),
        ds.positive_fraction,
        seed
    )?;
    let mut w = csv::Writer::from_writer(file);
    let mut header = vec!["pair_id", "index_a", "index_b", "label"];
    header.extend(FEATURE_NAMES);
    w.write_record(&header).map_err(|e| csv_error_to_data(e, 0))?;
    for p in &ds.pairs {
        let f = p.features.ok_or(DataError::MissingFeatures { pair_id: p.pair_id })?;
        let mut row = vec![
            p.pair_id.to_string(),
            p.index_a.to_string(),
            p.index_b.to_string(),
            p.label.to_string(),
        ];
        row.extend(f.0.iter().map(|v| format!("{v:.12}")));
        w.write_record(&row).map_err(|e| csv_error_to_data(e, 0))?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a pair dataset written by [`save_pairs`].
pub fn load_pairs(path: impl AsRef<Path>) -> Result<PairDataset, DataError> {
    let mut reader = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_path(path.as_ref())
        .map_err(|e| csv_error_to_data(e, 0))?;
    let headers = reader.headers().map_err(|e| csv_error_to_data(e, 0))?.clone();
    let col = |name: &str| -> Result<usize, DataError> {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| DataError::MissingColumn(name.to_string()))
    };
    let cols = [
        col("pair_id")?,
        col("index_a")?,
        col("index_b")?,
        col("label")?,
        col(FEATURE_NAMES[0])?,
        col(FEATURE_NAMES[1])?,
        col(FEATURE_NAMES[2])?,
        col(FEATURE_NAMES[3])?,
        col(FEATURE_NAMES[4])?,
    ];
    let mut pairs = Vec::new();
    for (i, row) in reader.records().enumerate() {
        let row_no = i + 1;
        let row = row.map_err(|e| csv_error_to_data(e, row_no))?;
        let get = |idx: usize| -> Result<&str, DataError> {
            row.get(idx).ok_or(DataError::MalformedCsv {
                row: row_no,
                message: "missing field".to_string(),
            })
        };
        let parse_err = |what: &str| DataError::MalformedCsv {
            row: row_no,
            message: format!("unparseable {what}"),
        };
        let mut features = [0.0f64; 5];
        for (slot, &c) in features.iter_mut().zip(&cols[4..]) {
            *slot = get(c)?.parse().map_err(|_| parse_err("feature"))?;
        }
        let label: u8 = get(cols[3])?.parse().map_err(|_| parse_err("label"))?;
        if label > 1 {
            return Err(parse_err("label"));
        }
        pairs.push(PairRecord {
            pair_id: get(cols[0])?.parse().map_err(|_| parse_err("pair_id"))?,
            index_a: get(cols[1])?.parse().map_err(|_| parse_err("index_a"))?,
            index_b: get(cols[2])?.parse().map_err(|_| parse_err("index_b"))?,
            label,
            features: Some(FeatureVector(features)),
        });
    }
    let n_pos = pairs.iter().filter(|p| p.label == 1).count();
    let frac = if pairs.is_empty() { 0.0 } else { n_pos as f64 / pairs.len() as f64 };
    Ok(PairDataset { pairs, positive_fraction: frac })
}
