//! The experiment pipeline: data prep, per-cell execution, the sweep loop,
//! and result aggregation.
//!
//! Protocol notes: constraints are sampled once per cell (from a seed hashed
//! out of the cell parameters and the base seed) and reused across that
//! cell's repeats; only the model seed varies per repeat. Completed
//! (cell, seed) rows found in an existing results file are skipped, which
//! makes sweeps resumable.

use std::collections::HashSet;
use std::io::Write as _;
use std::path::Path;
use std::time::Instant;

use anyhow::{bail, Context, Result};

use feedmatch_core::cluster::{
    cop_kmeans_fit, idec_fit, idec_predict, kmeans_fit, kmeans_predict, IdecConfig, IdecModel,
    KMeansModel,
};
use feedmatch_core::constraints::{sample_constraints, ConstraintSet};
use feedmatch_core::dataio::{
    generate_pairs, load_feed, stratified_split, synth_feed, PairDataset, ProductRecord,
};
use feedmatch_core::eval::{ClusterAlignment, EvalReport};
use feedmatch_core::nn::Matrix;

use crate::config::{Algorithm, ExperimentConfig};

pub const RESULTS_HEADER: &str = "algorithm,positive_fraction,ml_pct,cl_pct,frac_11,constraint_seed,model_seed,accuracy,precision,recall,f_score,rand_index,wall_secs";
pub const SUMMARY_HEADER: &str = "algorithm,positive_fraction,ml_pct,cl_pct,frac_11,n,accuracy_mean,accuracy_std,f_score_mean,f_score_std,rand_index_mean,rand_index_std";

/// One grid point of the sweep.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Cell {
    pub algorithm: Algorithm,
    pub positive_fraction: f64,
    pub ml_pct: f64,
    pub cl_pct: f64,
    pub frac_11: f64,
}

impl Cell {
    /// Constraint seed for the cell: cell parameters hashed with the base
    /// seed, so it is stable under grid reordering.
    pub fn constraint_seed(&self, base_seed: u64) -> u64 {
        let mut h = 0xcbf29ce484222325u64; // FNV-1a
        let mut eat = |bytes: &[u8]| {
            for &b in bytes {
                h ^= b as u64;
                h = h.wrapping_mul(0x100000001b3);
            }
        };
        eat(self.algorithm.name().as_bytes());
        eat(&self.positive_fraction.to_bits().to_le_bytes());
        eat(&self.ml_pct.to_bits().to_le_bytes());
        eat(&self.cl_pct.to_bits().to_le_bytes());
        eat(&self.frac_11.to_bits().to_le_bytes());
        h ^ base_seed
    }
}

/// One completed (cell, repeat) execution.
#[derive(Debug, Clone)]
pub struct ResultRow {
    pub cell: Cell,
    pub constraint_seed: u64,
    pub model_seed: u64,
    pub report: EvalReport,
    pub wall_secs: f64,
}

impl ResultRow {
    /// The deterministic part of the CSV row: everything but wall-clock.
    pub fn key(&self) -> String {
        format!(
            "{},{},{},{},{},{},{}",
            self.cell.algorithm.name(),
            self.cell.positive_fraction,
            self.cell.ml_pct,
            self.cell.cl_pct,
            self.cell.frac_11,
            self.constraint_seed,
            self.model_seed
        )
    }

    pub fn to_csv_row(&self) -> String {
        format!(
            "{},{:.12},{:.12},{:.12},{:.12},{:.12},{:.3}",
            self.key(),
            self.report.accuracy,
            self.report.precision,
            self.report.recall,
            self.report.f_score,
            self.report.rand_index,
            self.wall_secs
        )
    }
}

/// Featurized train/test split plus label vectors, ready for the engines.
pub struct PreparedData {
    pub feed: Vec<ProductRecord>,
    pub train: PairDataset,
    pub test: PairDataset,
    pub x_train: Matrix,
    pub x_test: Matrix,
    pub y_train: Vec<u8>,
    pub y_test: Vec<u8>,
}

pub fn feature_matrix(ds: &PairDataset) -> Result<Matrix> {
    let rows = ds.feature_rows()?;
    Ok(Matrix::from_rows(&rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>()))
}

/// Builds the dataset for one positive fraction: feed (loaded or synthetic),
/// sampled pairs, features, stratified split. Seeds derive from `data_seed`:
/// feed synthesis uses it directly, pair sampling `+1`, the split `+2`.
pub fn prepare_data(config: &ExperimentConfig, positive_fraction: f64) -> Result<PreparedData> {
    let feed = match &config.feed {
        Some(path) => load_feed(path).with_context(|| format!("loading feed {path}"))?,
        None => synth_feed(config.entities, config.variants, config.noise, config.data_seed),
    };
    let mut pairs = generate_pairs(
        &feed,
        config.n_pairs,
        positive_fraction,
        config.data_seed.wrapping_add(1),
    )?;
    pairs.featurize(&feed)?;
    let (train, test) = stratified_split(&pairs, config.train_fraction, config.data_seed.wrapping_add(2));
    let x_train = feature_matrix(&train)?;
    let x_test = feature_matrix(&test)?;
    let y_train = train.labels();
    let y_test = test.labels();
    Ok(PreparedData { feed, train, test, x_train, x_test, y_train, y_test })
}

/// Fits the cell's engine with one model seed and scores the held-out split.
/// The cluster-to-class permutation is chosen on training predictions and
/// then applied to the test side.
pub fn run_cell(
    data: &PreparedData,
    cell: &Cell,
    constraints: &ConstraintSet,
    idec_config: &IdecConfig,
    model_seed: u64,
) -> Result<ResultRow> {
    let started = Instant::now();
    let (train_pred, test_pred): (Vec<usize>, Vec<usize>) = match cell.algorithm {
        Algorithm::KMeans => {
            let model = kmeans_fit(&data.x_train, 2, model_seed)?;
            (kmeans_predict(&model, &data.x_train)?, kmeans_predict(&model, &data.x_test)?)
        }
        Algorithm::CopKMeans => {
            let (model, labels) = cop_kmeans_fit(&data.x_train, 2, constraints, model_seed)?;
            (labels, kmeans_predict(&model, &data.x_test)?)
        }
        Algorithm::Idec => {
            let config = IdecConfig { seed: model_seed, ..idec_config.clone() };
            let fit = idec_fit(&data.x_train, constraints, &config)?;
            (idec_predict(&fit.model, &data.x_train)?, idec_predict(&fit.model, &data.x_test)?)
        }
    };
    let alignment = ClusterAlignment::fit(&train_pred, &data.y_train)?;
    let aligned_test = alignment.apply(&test_pred);
    let report = EvalReport::from_predictions(&aligned_test, &data.y_test)?;
    Ok(ResultRow {
        cell: *cell,
        constraint_seed: constraints.params.seed,
        model_seed,
        report,
        wall_secs: started.elapsed().as_secs_f64(),
    })
}

/// The cartesian grid. K-means ignores the constraint knobs, so its grid
/// collapses to the positive fractions alone.
pub fn cells(config: &ExperimentConfig) -> Vec<Cell> {
    let mut out = Vec::new();
    for &pf in &config.positive_fractions {
        if config.algorithm.uses_constraints() {
            for &ml in &config.ml_pcts {
                for &cl in &config.cl_pcts {
                    for &fr in &config.frac_11s {
                        out.push(Cell {
                            algorithm: config.algorithm,
                            positive_fraction: pf,
                            ml_pct: ml,
                            cl_pct: cl,
                            frac_11: fr,
                        });
                    }
                }
            }
        } else {
            out.push(Cell {
                algorithm: config.algorithm,
                positive_fraction: pf,
                ml_pct: 0.0,
                cl_pct: 0.0,
                frac_11: 0.0,
            });
        }
    }
    out
}

/// A failed cell, reported at the end of the sweep.
#[derive(Debug)]
pub struct CellFailure {
    pub cell: Cell,
    pub model_seed: u64,
    pub error: String,
}

pub struct SweepOutcome {
    pub completed: usize,
    pub skipped: usize,
    pub failures: Vec<CellFailure>,
}

fn existing_row_keys(path: &Path) -> Result<HashSet<String>> {
    let mut keys = HashSet::new();
    if !path.exists() {
        return Ok(keys);
    }
    let text = std::fs::read_to_string(path)?;
    for line in text.lines().skip(1) {
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() >= 7 {
            keys.insert(fields[..7].join(","));
        }
    }
    Ok(keys)
}

/// Runs the whole grid, appending to `<out>/results.csv` as rows finish and
/// rewriting `<out>/summary.csv` at the end. A resolved copy of the
/// configuration lands in `<out>/resolved.cfg`.
pub fn sweep(config: &ExperimentConfig, out_dir: &Path) -> Result<SweepOutcome> {
    std::fs::create_dir_all(out_dir)?;
    std::fs::write(out_dir.join("resolved.cfg"), config.resolved_text())?;
    let results_path = out_dir.join("results.csv");
    let done = existing_row_keys(&results_path)?;

    let mut results_file = if results_path.exists() {
        std::fs::OpenOptions::new().append(true).open(&results_path)?
    } else {
        let mut f = std::fs::File::create(&results_path)?;
        writeln!(f, "{RESULTS_HEADER}")?;
        f
    };

    let mut outcome = SweepOutcome { completed: 0, skipped: 0, failures: Vec::new() };
    for &pf in &config.positive_fractions {
        let data = prepare_data(config, pf)?;
        for cell in cells(config).into_iter().filter(|c| c.positive_fraction == pf) {
            let constraint_seed = cell.constraint_seed(config.base_seed);
            let constraints = if cell.algorithm.uses_constraints() {
                match sample_constraints(
                    &data.y_train,
                    cell.ml_pct,
                    cell.cl_pct,
                    cell.frac_11,
                    constraint_seed,
                ) {
                    Ok(cs) => cs,
                    Err(e) => {
                        for repeat in 0..config.repeats {
                            outcome.failures.push(CellFailure {
                                cell,
                                model_seed: config.base_seed.wrapping_add(repeat as u64),
                                error: e.to_string(),
                            });
                        }
                        continue;
                    }
                }
            } else {
                ConstraintSet::empty()
            };

            for repeat in 0..config.repeats {
                let model_seed = config.base_seed.wrapping_add(repeat as u64);
                let key = format!(
                    "{},{},{},{},{},{},{}",
                    cell.algorithm.name(),
                    cell.positive_fraction,
                    cell.ml_pct,
                    cell.cl_pct,
                    cell.frac_11,
                    constraints.params.seed,
                    model_seed
                );
                if done.contains(&key) {
                    outcome.skipped += 1;
                    continue;
                }
                match run_cell(&data, &cell, &constraints, &config.idec, model_seed) {
                    Ok(row) => {
                        writeln!(results_file, "{}", row.to_csv_row())?;
                        results_file.flush()?;
                        outcome.completed += 1;
                    }
                    Err(e) => outcome.failures.push(CellFailure {
                        cell,
                        model_seed,
                        error: e.to_string(),
                    }),
                }
            }
        }
    }

    write_summary(&results_path, &out_dir.join("summary.csv"))?;
    Ok(outcome)
}

/// Sample mean and standard deviation (n-1 denominator; 0 for n = 1).
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (0.0, 0.0);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n as f64 - 1.0);
    (mean, var.sqrt())
}

/// A parsed results row (the deterministic columns plus the metrics).
#[derive(Debug, Clone)]
pub struct ParsedRow {
    pub algorithm: String,
    pub positive_fraction: f64,
    pub ml_pct: f64,
    pub cl_pct: f64,
    pub frac_11: f64,
    pub accuracy: f64,
    pub f_score: f64,
    pub rand_index: f64,
}

pub fn read_results(path: &Path) -> Result<Vec<ParsedRow>> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("reading results {}", path.display()))?;
    let mut lines = text.lines();
    match lines.next() {
        Some(header) if header == RESULTS_HEADER => {}
        Some(other) => bail!("unexpected results header `{other}`"),
        None => bail!("empty results file"),
    }
    let mut rows = Vec::new();
    for (i, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 13 {
            bail!("results row {} has {} fields, expected 13", i + 2, f.len());
        }
        let num = |s: &str| -> Result<f64> {
            s.parse::<f64>().with_context(|| format!("bad number `{s}` in row {}", i + 2))
        };
        rows.push(ParsedRow {
            algorithm: f[0].to_string(),
            positive_fraction: num(f[1])?,
            ml_pct: num(f[2])?,
            cl_pct: num(f[3])?,
            frac_11: num(f[4])?,
            accuracy: num(f[7])?,
            f_score: num(f[10])?,
            rand_index: num(f[11])?,
        });
    }
    Ok(rows)
}

/// Rewrites the per-cell mean ± std summary from the raw rows.
pub fn write_summary(results_path: &Path, summary_path: &Path) -> Result<()> {
    let rows = read_results(results_path)?;
    // Group by cell, preserving first-seen order.
    let mut order: Vec<String> = Vec::new();
    let mut groups: std::collections::HashMap<String, Vec<&ParsedRow>> =
        std::collections::HashMap::new();
    for row in &rows {
        let key = format!(
            "{},{},{},{},{}",
            row.algorithm, row.positive_fraction, row.ml_pct, row.cl_pct, row.frac_11
        );
        if !groups.contains_key(&key) {
            order.push(key.clone());
        }
        groups.entry(key).or_default().push(row);
    }
    let mut out = String::from(SUMMARY_HEADER);
    out.push('\n');
    for key in order {
        let members = &groups[&key];
        let (acc_m, acc_s) = mean_std(&members.iter().map(|r| r.accuracy).collect::<Vec<_>>());
        let (f_m, f_s) = mean_std(&members.iter().map(|r| r.f_score).collect::<Vec<_>>());
        let (ri_m, ri_s) = mean_std(&members.iter().map(|r| r.rand_index).collect::<Vec<_>>());
        out.push_str(&format!(
            "{key},{},{acc_m:.12},{acc_s:.12},{f_m:.12},{f_s:.12},{ri_m:.12},{ri_s:.12}\n",
            members.len()
        ));
    }
    std::fs::write(summary_path, out)?;
    Ok(())
}

/// Model container written by `fit`: the engines share one file, tagged by
/// their checkpoint magic.
pub enum SavedModel {
    KMeans(KMeansModel),
    Idec(Box<IdecModel>),
}

impl SavedModel {
    pub fn algorithm_name(&self) -> &'static str {
        match self {
            SavedModel::KMeans(_) => "kmeans",
            SavedModel::Idec(_) => "idec",
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut buf = Vec::new();
        match self {
            SavedModel::KMeans(m) => m.write_to(&mut buf)?,
            SavedModel::Idec(m) => m.write_to(&mut buf)?,
        }
        std::fs::write(path, buf)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes =
            std::fs::read(path).with_context(|| format!("reading model {}", path.display()))?;
        if let Ok(m) = KMeansModel::read_from(&mut bytes.as_slice()) {
            return Ok(SavedModel::KMeans(m));
        }
        let idec = IdecModel::read_from(&mut bytes.as_slice())
            .with_context(|| format!("{} is neither a k-means nor an IDEC checkpoint", path.display()))?;
        Ok(SavedModel::Idec(Box::new(idec)))
    }

    pub fn predict(&self, x: &Matrix) -> Result<Vec<usize>> {
        Ok(match self {
            SavedModel::KMeans(m) => kmeans_predict(m, x)?,
            SavedModel::Idec(m) => idec_predict(m, x)?,
        })
    }

    /// Per-row soft assignments; k-means degenerates to one-hot rows.
    pub fn assignment_scores(&self, x: &Matrix) -> Result<Vec<(f64, f64)>> {
        match self {
            SavedModel::KMeans(m) => {
                let labels = kmeans_predict(m, x)?;
                Ok(labels
                    .into_iter()
                    .map(|l| if l == 0 { (1.0, 0.0) } else { (0.0, 1.0) })
                    .collect())
            }
            SavedModel::Idec(m) => {
                let q = m.soft_assignments(x)?;
                Ok((0..q.rows()).map(|i| (q.get(i, 0), q.get(i, 1))).collect())
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mean_std_matches_hand_computation() {
        // 3-row fixture: mean 0.9, sample std sqrt(0.01).
        let vals = [0.8, 0.9, 1.0];
        let (m, s) = mean_std(&vals);
        assert!((m - 0.9).abs() < 1e-12);
        assert!((s - 0.1).abs() < 1e-12);
        let (m1, s1) = mean_std(&[0.42]);
        assert_eq!((m1, s1), (0.42, 0.0));
    }

    #[test]
    fn constraint_seed_is_stable_and_cell_sensitive() {
        let cell = Cell {
            algorithm: Algorithm::Idec,
            positive_fraction: 0.25,
            ml_pct: 0.5,
            cl_pct: 0.7,
            frac_11: 1.0,
        };
        assert_eq!(cell.constraint_seed(3), cell.constraint_seed(3));
        let other = Cell { cl_pct: 0.6, ..cell };
        assert_ne!(cell.constraint_seed(3), other.constraint_seed(3));
    }

    #[test]
    fn kmeans_grid_collapses_constraint_knobs() {
        let config = ExperimentConfig::load(
            None,
            &[
                "algorithm=kmeans".to_string(),
                "ml_pct=0.1,0.2,0.3".to_string(),
                "cl_pct=0.1,0.2".to_string(),
            ],
        )
        .unwrap();
        assert_eq!(cells(&config).len(), 1);

        let config = ExperimentConfig::load(
            None,
            &[
                "algorithm=idec".to_string(),
                "ml_pct=0.1,0.2,0.3".to_string(),
                "cl_pct=0.1,0.2".to_string(),
            ],
        )
        .unwrap();
        assert_eq!(cells(&config).len(), 6);
    }
}
