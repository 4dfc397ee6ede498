//! Flat key-value experiment configuration with command-line overrides.
//!
//! The file format is one `key = value` pair per line, `#` comments. Every
//! sweep writes a resolved copy of its configuration next to the results.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use anyhow::{bail, Context, Result};

use feedmatch_core::cluster::IdecConfig;

/// Which engine a sweep runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Algorithm {
    KMeans,
    CopKMeans,
    Idec,
}

impl Algorithm {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "kmeans" => Ok(Algorithm::KMeans),
            "cop_kmeans" | "cop-kmeans" => Ok(Algorithm::CopKMeans),
            "idec" => Ok(Algorithm::Idec),
            other => bail!("unknown algorithm `{other}` (expected kmeans, cop_kmeans, or idec)"),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Algorithm::KMeans => "kmeans",
            Algorithm::CopKMeans => "cop_kmeans",
            Algorithm::Idec => "idec",
        }
    }

    /// Constraint knobs only matter for the constrained engines.
    pub fn uses_constraints(&self) -> bool {
        !matches!(self, Algorithm::KMeans)
    }
}

/// Resolved sweep configuration: data source, pair generation, split,
/// algorithm, the constraint grid, and repeat counts.
#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    /// Feed CSV path; when absent the synthetic generator is used.
    pub feed: Option<String>,
    pub entities: usize,
    pub variants: usize,
    pub noise: f64,
    pub data_seed: u64,
    pub n_pairs: usize,
    pub positive_fractions: Vec<f64>,
    pub train_fraction: f64,
    pub algorithm: Algorithm,
    pub ml_pcts: Vec<f64>,
    pub cl_pcts: Vec<f64>,
    pub frac_11s: Vec<f64>,
    pub repeats: usize,
    pub base_seed: u64,
    pub idec: IdecConfig,
    raw: BTreeMap<String, String>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            feed: None,
            entities: 200,
            variants: 3,
            noise: 0.35,
            data_seed: 100,
            n_pairs: 2000,
            positive_fractions: vec![0.25],
            train_fraction: 0.67,
            algorithm: Algorithm::Idec,
            ml_pcts: vec![0.5],
            cl_pcts: vec![0.1],
            frac_11s: vec![1.0],
            repeats: 10,
            base_seed: 0,
            idec: IdecConfig::default(),
            raw: BTreeMap::new(),
        }
    }
}

fn parse_kv_lines(text: &str) -> Result<BTreeMap<String, String>> {
    let mut map = BTreeMap::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .with_context(|| format!("line {}: expected `key = value`", lineno + 1))?;
        map.insert(k.trim().to_string(), v.trim().to_string());
    }
    Ok(map)
}

fn parse_list(v: &str) -> Result<Vec<f64>> {
    let vals: Result<Vec<f64>, _> = v.split(',').map(|s| s.trim().parse::<f64>()).collect();
    let vals = vals.with_context(|| format!("bad numeric list `{v}`"))?;
    if vals.is_empty() {
        bail!("empty list");
    }
    Ok(vals)
}

impl ExperimentConfig {
    /// Loads the file (if any) and applies `key=value` overrides on top.
    pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<Self> {
        let mut raw = match path {
            Some(p) => parse_kv_lines(
                &std::fs::read_to_string(p)
                    .with_context(|| format!("reading config {}", p.display()))?,
            )?,
            None => BTreeMap::new(),
        };
        for item in overrides {
            let (k, v) = item
                .split_once('=')
                .with_context(|| format!("override `{item}` must be key=value"))?;
            raw.insert(k.trim().to_string(), v.trim().to_string());
        }
        Self::from_map(raw)
    }

    fn from_map(raw: BTreeMap<String, String>) -> Result<Self> {
        let mut cfg = ExperimentConfig::default();
        let get = |k: &str| raw.get(k).map(String::as_str);
        macro_rules! set_parse {
            ($field:expr, $key:literal) => {
                if let Some(v) = get($key) {
                    $field = v
                        .parse()
                        .with_context(|| format!("bad value for {}: `{v}`", $key))?;
                }
            };
        }
        cfg.feed = get("feed").map(str::to_string);
        set_parse!(cfg.entities, "entities");
        set_parse!(cfg.variants, "variants");
        set_parse!(cfg.noise, "noise");
        set_parse!(cfg.data_seed, "data_seed");
        set_parse!(cfg.n_pairs, "n_pairs");
        set_parse!(cfg.train_fraction, "train_fraction");
        set_parse!(cfg.repeats, "repeats");
        set_parse!(cfg.base_seed, "base_seed");
        if let Some(v) = get("positive_fraction") {
            cfg.positive_fractions = parse_list(v)?;
        }
        if let Some(v) = get("algorithm") {
            cfg.algorithm = Algorithm::parse(v)?;
        }
        if let Some(v) = get("ml_pct") {
            cfg.ml_pcts = parse_list(v)?;
        }
        if let Some(v) = get("cl_pct") {
            cfg.cl_pcts = parse_list(v)?;
        }
        if let Some(v) = get("frac_11") {
            cfg.frac_11s = parse_list(v)?;
        }
        set_parse!(cfg.idec.epochs, "epochs");
        set_parse!(cfg.idec.pretrain_epochs, "pretrain_epochs");
        set_parse!(cfg.idec.batch_size, "batch_size");
        set_parse!(cfg.idec.learning_rate, "learning_rate");
        set_parse!(cfg.idec.clustering_weight, "gamma");
        set_parse!(cfg.idec.ml_penalty, "ml_penalty");
        set_parse!(cfg.idec.cl_penalty, "cl_penalty");
        if let Some(v) = get("encoder_dims") {
            let dims: Result<Vec<usize>, _> =
                v.split(',').map(|s| s.trim().parse::<usize>()).collect();
            cfg.idec.encoder_dims = dims.with_context(|| format!("bad encoder_dims `{v}`"))?;
        }

        if cfg.repeats == 0 {
            bail!("repeats must be at least 1");
        }
        if !(0.0 < cfg.train_fraction && cfg.train_fraction < 1.0) {
            bail!("train_fraction must lie in (0, 1)");
        }
        cfg.raw = raw;
        Ok(cfg)
    }

    /// The resolved configuration in the same flat format, for provenance.
    pub fn resolved_text(&self) -> String {
        let mut out = String::new();
        let mut kv = |k: &str, v: String| {
            let _ = writeln!(out, "{k} = {v}");
        };
        match &self.feed {
            Some(f) => kv("feed", f.clone()),
            None => {
                kv("entities", self.entities.to_string());
                kv("variants", self.variants.to_string());
                kv("noise", self.noise.to_string());
            }
        }
        kv("data_seed", self.data_seed.to_string());
        kv("n_pairs", self.n_pairs.to_string());
        kv("positive_fraction", join_f64(&self.positive_fractions));
        kv("train_fraction", self.train_fraction.to_string());
        kv("algorithm", self.algorithm.name().to_string());
        kv("ml_pct", join_f64(&self.ml_pcts));
        kv("cl_pct", join_f64(&self.cl_pcts));
        kv("frac_11", join_f64(&self.frac_11s));
        kv("repeats", self.repeats.to_string());
        kv("base_seed", self.base_seed.to_string());
        kv("epochs", self.idec.epochs.to_string());
        kv("pretrain_epochs", self.idec.pretrain_epochs.to_string());
        kv("batch_size", self.idec.batch_size.to_string());
        kv("learning_rate", self.idec.learning_rate.to_string());
        kv("gamma", self.idec.clustering_weight.to_string());
        kv("ml_penalty", self.idec.ml_penalty.to_string());
        kv("cl_penalty", self.idec.cl_penalty.to_string());
        kv(
            "encoder_dims",
            self.idec
                .encoder_dims
                .iter()
                .map(ToString::to_string)
                .collect::<Vec<_>>()
                .join(","),
        );
        out
    }
}

fn join_f64(vals: &[f64]) -> String {
    vals.iter().map(ToString::to_string).collect::<Vec<_>>().join(",")
}
