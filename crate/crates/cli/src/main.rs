//! `feedmatch` — product-matching experiment runner.

use std::io::Write as _;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};

use feedmatch_cli::config::{Algorithm, ExperimentConfig};
use feedmatch_cli::plotdata::emit_plot_data;
use feedmatch_cli::runner::{feature_matrix, sweep, SavedModel};
use feedmatch_core::cluster::{cop_kmeans_fit, idec_fit, kmeans_fit, IdecConfig};
use feedmatch_core::constraints::{load_constraints, sample_constraints, save_constraints, ConstraintSet};
use feedmatch_core::dataio::{
    generate_pairs, load_feed, load_pairs, save_feed_with_meta, save_pairs, stratified_split,
    synth_feed,
};
use feedmatch_core::eval::{ClusterAlignment, EvalReport};
use feedmatch_core::featurize::{featurize_pair, FEATURE_NAMES};

#[derive(Parser)]
#[command(
    name = "feedmatch",
    about = "Product matching via fuzzy text features and constrained clustering",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic product feed (id,title,category CSV).
    Synth {
        #[arg(long, default_value_t = 200)]
        entities: usize,
        #[arg(long, default_value_t = 3)]
        variants: usize,
        #[arg(long, default_value_t = 0.35)]
        noise: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Cross-join a feed into a labeled, featurized pair dataset.
    Pairs {
        #[arg(long)]
        feed: PathBuf,
        #[arg(long, default_value_t = 2000)]
        n_pairs: usize,
        #[arg(long, default_value_t = 0.25)]
        positive_fraction: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Recompute pair features from titles; or featurize one ad-hoc pair.
    Featurize {
        #[arg(long, requires = "pairs")]
        feed: Option<PathBuf>,
        #[arg(long, requires = "feed")]
        pairs: Option<PathBuf>,
        /// Output CSV (pair_id,label,features); defaults to stdout.
        #[arg(long)]
        out: Option<PathBuf>,
        /// First title of an ad-hoc pair.
        #[arg(long, requires = "title_b", conflicts_with = "feed")]
        title_a: Option<String>,
        /// Second title of an ad-hoc pair.
        #[arg(long, requires = "title_a", conflicts_with = "feed")]
        title_b: Option<String>,
    },
    /// Sample must-link / can't-link constraints over the training split.
    Constraints {
        #[arg(long)]
        pairs: PathBuf,
        #[arg(long, default_value_t = 0.67)]
        train_fraction: f64,
        #[arg(long, default_value_t = 0)]
        split_seed: u64,
        #[arg(long, default_value_t = 0.5)]
        ml_pct: f64,
        #[arg(long, default_value_t = 0.1)]
        cl_pct: f64,
        #[arg(long, default_value_t = 1.0)]
        frac_11: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train a matching engine on the training split.
    Fit {
        #[arg(long, value_parser = Algorithm::parse)]
        algo: Algorithm,
        #[arg(long)]
        pairs: PathBuf,
        #[arg(long, default_value_t = 0.67)]
        train_fraction: f64,
        #[arg(long, default_value_t = 0)]
        split_seed: u64,
        /// Constraint CSV (cop-kmeans and idec); empty set when omitted.
        #[arg(long)]
        constraints: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Experiment config supplying IDEC hyperparameters.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Override a config key, e.g. --set epochs=5 (repeatable).
        #[arg(long = "set", value_name = "KEY=VALUE")]
        sets: Vec<String>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Score a trained model on the held-out split.
    Evaluate {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        pairs: PathBuf,
        #[arg(long, default_value_t = 0.67)]
        train_fraction: f64,
        #[arg(long, default_value_t = 0)]
        split_seed: u64,
        /// Metric report destination; printed to stdout as well.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Per-pair predictions CSV (pair_id,predicted_label,q0,q1).
        #[arg(long)]
        predictions: Option<PathBuf>,
        /// Append an `algorithm,ml_pct,...` metrics row to this CSV.
        #[arg(long)]
        results_csv: Option<PathBuf>,
        /// Metadata recorded in the results row.
        #[arg(long, default_value_t = 0.0)]
        ml_pct: f64,
        #[arg(long, default_value_t = 0.0)]
        cl_pct: f64,
        #[arg(long, default_value_t = 0.0)]
        frac_11: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Run a full constraint sweep from a config file.
    Sweep {
        #[arg(long)]
        config: Option<PathBuf>,
        /// Override a config key, e.g. --set cl_pct=0.1,0.2 (repeatable).
        #[arg(long = "set", value_name = "KEY=VALUE")]
        sets: Vec<String>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Aggregate raw sweep results into tidy per-figure CSVs.
    Plotdata {
        #[arg(long)]
        results: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            let summary = serde_json::json!({
                "status": "error",
                "error": format!("{e:#}"),
            });
            eprintln!("{summary}");
            ExitCode::FAILURE
        }
    }
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Synth { entities, variants, noise, seed, out } => {
            let feed = synth_feed(entities, variants, noise, seed);
            let meta = format!("entities={entities},variants={variants},noise={noise},seed={seed}");
            save_feed_with_meta(&out, &feed, &meta)?;
            println!("wrote {} records to {}", feed.len(), out.display());
        }
        Command::Pairs { feed, n_pairs, positive_fraction, seed, out } => {
            let records =
                load_feed(&feed).with_context(|| format!("loading feed {}", feed.display()))?;
            let mut ds = generate_pairs(&records, n_pairs, positive_fraction, seed)?;
            ds.featurize(&records)?;
            save_pairs(&out, &ds, seed)?;
            println!(
                "wrote {} pairs ({} positive) to {}",
                ds.len(),
                ds.positive_count(),
                out.display()
            );
        }
        Command::Featurize { feed, pairs, out, title_a, title_b } => {
            if let (Some(a), Some(b)) = (title_a, title_b) {
                let v = featurize_pair(&a, &b);
                for (name, value) in FEATURE_NAMES.iter().zip(v.as_slice()) {
                    println!("{name} = {value:.12}");
                }
                return Ok(ExitCode::SUCCESS);
            }
            let (Some(feed), Some(pairs)) = (feed, pairs) else {
                bail!("featurize needs either --feed with --pairs, or --title-a with --title-b");
            };
            let records = load_feed(&feed).with_context(|| format!("loading feed {}", feed.display()))?;
            let mut ds = load_pairs(&pairs).with_context(|| format!("loading pairs {}", pairs.display()))?;
            ds.featurize(&records)?;
            let mut text = format!("pair_id,label,{}\n", FEATURE_NAMES.join(","));
            for p in &ds.pairs {
                let f = p.features.expect("just featurized");
                text.push_str(&format!("{},{}", p.pair_id, p.label));
                for v in f.as_slice() {
                    text.push_str(&format!(",{v:.12}"));
                }
                text.push('\n');
            }
            match out {
                Some(path) => {
                    std::fs::write(&path, text)?;
                    println!("wrote {} feature rows to {}", ds.len(), path.display());
                }
                None => print!("{text}"),
            }
        }
        Command::Constraints {
            pairs,
            train_fraction,
            split_seed,
            ml_pct,
            cl_pct,
            frac_11,
            seed,
            out,
        } => {
            let ds = load_pairs(&pairs).with_context(|| format!("loading pairs {}", pairs.display()))?;
            let (train, _) = stratified_split(&ds, train_fraction, split_seed);
            let cs = sample_constraints(&train.labels(), ml_pct, cl_pct, frac_11, seed)?;
            save_constraints(&out, &cs)?;
            println!(
                "wrote {} constraints ({} ML, {} CL) to {}",
                cs.len(),
                cs.must_links().count(),
                cs.cant_links().count(),
                out.display()
            );
        }
        Command::Fit {
            algo,
            pairs,
            train_fraction,
            split_seed,
            constraints,
            seed,
            config,
            sets,
            out,
        } => {
            let ds = load_pairs(&pairs).with_context(|| format!("loading pairs {}", pairs.display()))?;
            let (train, _) = stratified_split(&ds, train_fraction, split_seed);
            let x_train = feature_matrix(&train)?;
            let cs = match constraints {
                Some(path) => load_constraints(&path)?,
                None => ConstraintSet::empty(),
            };
            let model = match algo {
                Algorithm::KMeans => SavedModel::KMeans(kmeans_fit(&x_train, 2, seed)?),
                Algorithm::CopKMeans => {
                    let (model, _) = cop_kmeans_fit(&x_train, 2, &cs, seed)?;
                    SavedModel::KMeans(model)
                }
                Algorithm::Idec => {
                    let exp = ExperimentConfig::load(config.as_deref(), &sets)?;
                    let idec_config = IdecConfig { seed, ..exp.idec };
                    let fit = idec_fit(&x_train, &cs, &idec_config)?;
                    SavedModel::Idec(Box::new(fit.model))
                }
            };
            model.save(&out)?;
            println!("wrote {} model to {}", algo.name(), out.display());
        }
        Command::Evaluate {
            model,
            pairs,
            train_fraction,
            split_seed,
            out,
            predictions,
            results_csv,
            ml_pct,
            cl_pct,
            frac_11,
            seed,
        } => {
            let saved = SavedModel::load(&model)?;
            let ds = load_pairs(&pairs).with_context(|| format!("loading pairs {}", pairs.display()))?;
            let (train, test) = stratified_split(&ds, train_fraction, split_seed);
            let x_train = feature_matrix(&train)?;
            let x_test = feature_matrix(&test)?;

            let alignment = ClusterAlignment::fit(&saved.predict(&x_train)?, &train.labels())?;
            let test_clusters = saved.predict(&x_test)?;
            let aligned = alignment.apply(&test_clusters);
            let report = EvalReport::from_predictions(&aligned, &test.labels())?;

            print!("{}", report.to_text());
            if let Some(path) = out {
                std::fs::write(&path, report.to_text())?;
            }
            if let Some(path) = predictions {
                let scores = saved.assignment_scores(&x_test)?;
                let mut text = String::from("pair_id,predicted_label,q0,q1\n");
                for ((pair, label), (q0, q1)) in test.pairs.iter().zip(&aligned).zip(scores) {
                    text.push_str(&format!("{},{label},{q0:.12},{q1:.12}\n", pair.pair_id));
                }
                std::fs::write(&path, text)?;
            }
            if let Some(path) = results_csv {
                let row =
                    report.to_csv_row(saved.algorithm_name(), ml_pct, cl_pct, frac_11, seed);
                let exists = path.exists();
                let mut f = std::fs::OpenOptions::new()
                    .create(true)
                    .append(true)
                    .open(&path)?;
                if !exists {
                    writeln!(f, "algorithm,ml_pct,cl_pct,frac_11,seed,accuracy,f_score,rand_index")?;
                }
                writeln!(f, "{row}")?;
            }
        }
        Command::Sweep { config, sets, out } => {
            let cfg = ExperimentConfig::load(config.as_deref(), &sets)?;
            let outcome = sweep(&cfg, &out)?;
            println!(
                "sweep finished: {} rows completed, {} skipped (already present), {} failed",
                outcome.completed,
                outcome.skipped,
                outcome.failures.len()
            );
            println!("results: {}", out.join("results.csv").display());
            if !outcome.failures.is_empty() {
                for failure in &outcome.failures {
                    let line = serde_json::json!({
                        "status": "cell_failed",
                        "algorithm": failure.cell.algorithm.name(),
                        "positive_fraction": failure.cell.positive_fraction,
                        "ml_pct": failure.cell.ml_pct,
                        "cl_pct": failure.cell.cl_pct,
                        "frac_11": failure.cell.frac_11,
                        "model_seed": failure.model_seed,
                        "error": failure.error,
                    });
                    eprintln!("{line}");
                }
                return Ok(ExitCode::FAILURE);
            }
        }
        Command::Plotdata { results, out } => {
            // Accept either a results.csv path or a sweep output directory.
            let path = if results.is_dir() { results.join("results.csv") } else { results };
            let written = emit_plot_data(&path, &out)
                .with_context(|| format!("aggregating {}", path.display()))?;
            if written.is_empty() {
                println!("no parameter varies in {}; nothing to plot", path.display());
            } else {
                for name in written {
                    println!("wrote {}", out.join(name).display());
                }
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}
