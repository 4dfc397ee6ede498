//! Must-link / can't-link constraint sampling over labeled pair records.
//!
//! Counts are expressed as fractions of the positive records in the training
//! labels. Must-links join two records of the same class (the 1-1 share is
//! the `frac_11` knob); can't-links join one positive to one negative, with
//! the positive endpoints drawn without replacement, so the can't-link count
//! can never exceed the number of positives.

use std::collections::HashSet;
use std::io::{BufRead, Write};
use std::path::Path;

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ConstraintKind {
    MustLink,
    CantLink,
}

impl ConstraintKind {
    fn tag(self) -> &'static str {
        match self {
            ConstraintKind::MustLink => "ML",
            ConstraintKind::CantLink => "CL",
        }
    }
}

/// One supervision edge between two dataset rows.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Constraint {
    pub kind: ConstraintKind,
    pub i: usize,
    pub j: usize,
}

/// Sampling parameters, kept with the constraints for provenance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConstraintParams {
    pub ml_pct: f64,
    pub cl_pct: f64,
    pub frac_11: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConstraintSet {
    pub constraints: Vec<Constraint>,
    pub params: ConstraintParams,
}

impl ConstraintSet {
    pub fn empty() -> Self {
        ConstraintSet {
            constraints: Vec::new(),
            params: ConstraintParams { ml_pct: 0.0, cl_pct: 0.0, frac_11: 0.0, seed: 0 },
        }
    }

    pub fn len(&self) -> usize {
        self.constraints.len()
    }

    pub fn is_empty(&self) -> bool {
        self.constraints.is_empty()
    }

    pub fn must_links(&self) -> impl Iterator<Item = &Constraint> {
        self.constraints.iter().filter(|c| c.kind == ConstraintKind::MustLink)
    }

    pub fn cant_links(&self) -> impl Iterator<Item = &Constraint> {
        self.constraints.iter().filter(|c| c.kind == ConstraintKind::CantLink)
    }
}

#[derive(Debug, Error)]
pub enum ConstraintError {
    #[error("{0}")]
    CapacityExceeded(String),
    #[error("constraint index {index} out of bounds for {len} records")]
    IndexOutOfBounds { index: usize, len: usize },
    #[error("malformed constraint file: {0}")]
    MalformedFile(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// A constraint whose endpoints contradict the ground-truth labels.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Violation {
    pub constraint: Constraint,
    pub label_i: u8,
    pub label_j: u8,
}

fn choose_distinct_pair(
    pool: &[usize],
    taken: &mut HashSet<(usize, usize)>,
    rng: &mut ChaCha8Rng,
) -> Option<(usize, usize)> {
    // The caller guarantees the pool admits enough distinct pairs; the cap
    // only guards against a logic error turning into a spin.
    for _ in 0..100_000 {
        let a = pool[rng.random_range(0..pool.len())];
        let b = pool[rng.random_range(0..pool.len())];
        if a == b {
            continue;
        }
        let edge = (a.min(b), a.max(b));
        if taken.insert(edge) {
            return Some(edge);
        }
    }
    None
}

/// Samples a constraint set consistent with `labels`.
///
/// With `n_pos` the number of ones in `labels`: must-link count is
/// `floor(ml_pct * n_pos)`, of which `floor(frac_11 * ml_count)` join two
/// positives and the rest join two negatives; can't-link count is
/// `floor(cl_pct * n_pos)`, each joining a fresh positive (without
/// replacement) to a uniformly drawn negative. Deterministic per seed.
pub fn sample_constraints(
    labels: &[u8],
    ml_pct: f64,
    cl_pct: f64,
    frac_11: f64,
    seed: u64,
) -> Result<ConstraintSet, ConstraintError> {
    assert!(ml_pct >= 0.0, "ml_pct must be non-negative");
    assert!((0.0..=1.0).contains(&cl_pct), "cl_pct must lie in [0, 1]");
    assert!((0.0..=1.0).contains(&frac_11), "frac_11 must lie in [0, 1]");

    let positives: Vec<usize> =
        labels.iter().enumerate().filter(|(_, &l)| l == 1).map(|(i, _)| i).collect();
    let negatives: Vec<usize> =
        labels.iter().enumerate().filter(|(_, &l)| l == 0).map(|(i, _)| i).collect();
    let n_pos = positives.len();

    let ml_count = (ml_pct * n_pos as f64).floor() as usize;
    let cl_count = (cl_pct * n_pos as f64).floor() as usize;
    let ml_11 = (frac_11 * ml_count as f64).floor() as usize;
    let ml_00 = ml_count - ml_11;

    if cl_count > n_pos {
        return Err(ConstraintError::CapacityExceeded(format!(
            "can't-link count {cl_count} exceeds the {n_pos} positive records"
        )));
    }
    if ml_11 > 0 && n_pos < 2 {
        return Err(ConstraintError::CapacityExceeded(
            "must-link 1-1 pairs need at least two positive records".to_string(),
        ));
    }
    if ml_00 > 0 && negatives.len() < 2 {
        return Err(ConstraintError::CapacityExceeded(
            "must-link 0-0 pairs need at least two negative records".to_string(),
        ));
    }
    if cl_count > 0 && negatives.is_empty() {
        return Err(ConstraintError::CapacityExceeded(
            "can't-link pairs need at least one negative record".to_string(),
        ));
    }
    let pairs_available = |n: usize| n * n.saturating_sub(1) / 2;
    if ml_11 > pairs_available(n_pos) {
        return Err(ConstraintError::CapacityExceeded(format!(
            "requested {ml_11} distinct 1-1 pairs but only {} exist",
            pairs_available(n_pos)
        )));
    }
    if ml_00 > pairs_available(negatives.len()) {
        return Err(ConstraintError::CapacityExceeded(format!(
            "requested {ml_00} distinct 0-0 pairs but only {} exist",
            pairs_available(negatives.len())
        )));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut constraints = Vec::with_capacity(ml_count + cl_count);

    let mut taken_ml: HashSet<(usize, usize)> = HashSet::new();
    for _ in 0..ml_11 {
        let (i, j) = choose_distinct_pair(&positives, &mut taken_ml, &mut rng)
            .ok_or_else(|| ConstraintError::CapacityExceeded("1-1 pool saturated".into()))?;
        constraints.push(Constraint { kind: ConstraintKind::MustLink, i, j });
    }
    for _ in 0..ml_00 {
        let (i, j) = choose_distinct_pair(&negatives, &mut taken_ml, &mut rng)
            .ok_or_else(|| ConstraintError::CapacityExceeded("0-0 pool saturated".into()))?;
        constraints.push(Constraint { kind: ConstraintKind::MustLink, i, j });
    }

    // Can't-links: positive endpoints without replacement, negative endpoints
    // uniform; resample the negative on a duplicate edge.
    let mut taken_cl: HashSet<(usize, usize)> = HashSet::new();
    let chosen_pos = index::sample(&mut rng, n_pos, cl_count);
    for p in chosen_pos {
        let pos = positives[p];
        loop {
            let neg = negatives[rng.random_range(0..negatives.len())];
            let edge = (pos.min(neg), pos.max(neg));
            if taken_cl.insert(edge) {
                constraints.push(Constraint { kind: ConstraintKind::CantLink, i: pos, j: neg });
                break;
            }
        }
    }

    Ok(ConstraintSet {
        constraints,
        params: ConstraintParams { ml_pct, cl_pct, frac_11, seed },
    })
}

/// Returns every constraint that contradicts the labels: must-links whose
/// endpoints differ, can't-links whose endpoints agree.
pub fn validate(cs: &ConstraintSet, labels: &[u8]) -> Result<Vec<Violation>, ConstraintError> {
    let mut violations = Vec::new();
    for c in &cs.constraints {
        for idx in [c.i, c.j] {
            if idx >= labels.len() {
                return Err(ConstraintError::IndexOutOfBounds { index: idx, len: labels.len() });
            }
        }
        let (li, lj) = (labels[c.i], labels[c.j]);
        let violated = match c.kind {
            ConstraintKind::MustLink => li != lj,
            ConstraintKind::CantLink => li == lj,
        };
        if violated {
            violations.push(Violation { constraint: *c, label_i: li, label_j: lj });
        }
    }
    Ok(violations)
}

/// Writes `kind,i,j` rows preceded by a comment carrying the sampling params.
pub fn save_constraints(path: impl AsRef<Path>, cs: &ConstraintSet) -> Result<(), ConstraintError> {
    let mut file = std::fs::File::create(path.as_ref())?;
    writeln!(
        file,
        "# ml_pct={},cl_pct={},frac_11={},seed={}",
        cs.params.ml_pct, cs.params.cl_pct, cs.params.frac_11, cs.params.seed
    )?;
    writeln!(file, "kind,i,j")?;
    for c in &cs.constraints {
        writeln!(file, "{},{},{}", c.kind.tag(), c.i, c.j)?;
    }
    Ok(())
}

/// Reads a constraint file written by [`save_constraints`].
pub fn load_constraints(path: impl AsRef<Path>) -> Result<ConstraintSet, ConstraintError> {
    let file = std::fs::File::open(path.as_ref())?;
    let reader = std::io::BufReader::new(file);
    let mut params: Option<ConstraintParams> = None;
    let mut constraints = Vec::new();
    let mut seen: HashSet<(ConstraintKind, usize, usize)> = HashSet::new();
    let mut saw_header = false;

    for line in reader.lines() {
        let line = line?;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        if let Some(meta) = line.strip_prefix('#') {
            params = Some(parse_params(meta)?);
            continue;
        }
        if !saw_header {
            if line != "kind,i,j" {
                return Err(ConstraintError::MalformedFile(format!(
                    "expected header `kind,i,j`, found `{line}`"
                )));
            }
            saw_header = true;
            continue;
        }
        let mut fields = line.split(',');
        let kind = match fields.next() {
            Some("ML") => ConstraintKind::MustLink,
            Some("CL") => ConstraintKind::CantLink,
            other => {
                return Err(ConstraintError::MalformedFile(format!(
                    "unknown constraint kind {other:?}"
                )))
            }
        };
        let parse_idx = |f: Option<&str>| -> Result<usize, ConstraintError> {
            f.and_then(|v| v.trim().parse().ok())
                .ok_or_else(|| ConstraintError::MalformedFile(format!("bad row `{line}`")))
        };
        let i = parse_idx(fields.next())?;
        let j = parse_idx(fields.next())?;
        if i == j {
            return Err(ConstraintError::MalformedFile(format!("self edge `{line}`")));
        }
        if !seen.insert((kind, i.min(j), i.max(j))) {
            return Err(ConstraintError::MalformedFile(format!("duplicate edge `{line}`")));
        }
        constraints.push(Constraint { kind, i, j });
    }

    let params = params.ok_or_else(|| {
        ConstraintError::MalformedFile("missing `# ml_pct=..` metadata comment".to_string())
    })?;
    if !saw_header {
        return Err(ConstraintError::MalformedFile("missing `kind,i,j` header".to_string()));
    }
    Ok(ConstraintSet { constraints, params })
}

fn parse_params(meta: &str) -> Result<ConstraintParams, ConstraintError> {
    let mut ml_pct = None;
    let mut cl_pct = None;
    let mut frac_11 = None;
    let mut seed = None;
    for kv in meta.trim().split(',') {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| ConstraintError::MalformedFile(format!("bad metadata `{kv}`")))?;
        let bad = || ConstraintError::MalformedFile(format!("bad metadata value `{kv}`"));
        match k.trim() {
            "ml_pct" => ml_pct = Some(v.trim().parse().map_err(|_| bad())?),
            "cl_pct" => cl_pct = Some(v.trim().parse().map_err(|_| bad())?),
            "frac_11" => frac_11 = Some(v.trim().parse().map_err(|_| bad())?),
            "seed" => seed = Some(v.trim().parse().map_err(|_| bad())?),
            _ => {}
        }
    }
    match (ml_pct, cl_pct, frac_11, seed) {
        (Some(ml_pct), Some(cl_pct), Some(frac_11), Some(seed)) => {
            Ok(ConstraintParams { ml_pct, cl_pct, frac_11, seed })
        }
        _ => Err(ConstraintError::MalformedFile("incomplete metadata comment".to_string())),
    }
}
