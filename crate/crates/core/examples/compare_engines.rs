//! Compares plain k-means against constrained IDEC on a synthetic feed.
//!
//! Usage: `compare_engines [noise] [n_seeds] [--full]`
//!
//! The default uses the compact encoder so a run takes seconds; `--full`
//! switches to the full-size architecture (several minutes for 5 seeds).

use std::time::Instant;

use feedmatch_core::cluster::{idec_fit, idec_predict, kmeans_fit, kmeans_predict, IdecConfig};
use feedmatch_core::constraints::sample_constraints;
use feedmatch_core::dataio::{generate_pairs, stratified_split, synth_feed};
use feedmatch_core::eval::{ClusterAlignment, EvalReport};
use feedmatch_core::nn::Matrix;

fn main() {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let full = args.iter().any(|a| a == "--full");
    let numeric: Vec<&String> = args.iter().filter(|a| !a.starts_with("--")).collect();
    let noise: f64 = numeric.first().and_then(|s| s.parse().ok()).unwrap_or(0.35);
    let n_seeds: u64 = numeric.get(1).and_then(|s| s.parse().ok()).unwrap_or(3);

    let t0 = Instant::now();
    let feed = synth_feed(200, 3, noise, 100);
    let mut ds = generate_pairs(&feed, 2000, 0.25, 101).unwrap();
    ds.featurize(&feed).unwrap();
    let (train, test) = stratified_split(&ds, 0.67, 102);
    let to_matrix = |ds: &feedmatch_core::dataio::PairDataset| {
        let rows = ds.feature_rows().unwrap();
        Matrix::from_rows(&rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>())
    };
    let x_train = to_matrix(&train);
    let x_test = to_matrix(&test);
    let y_train = train.labels();
    let y_test = test.labels();
    println!(
        "noise {noise}: train {} pairs ({} pos), test {} pairs ({} pos)",
        train.len(),
        train.positive_count(),
        test.len(),
        test.positive_count()
    );

    let constraints = sample_constraints(&y_train, 0.5, 0.7, 1.0, 200).unwrap();
    println!(
        "constraints: {} must-link, {} can't-link",
        constraints.must_links().count(),
        constraints.cant_links().count()
    );

    let mut km_f = Vec::new();
    let mut idec_f = Vec::new();
    for seed in 0..n_seeds {
        let t = Instant::now();
        let km = kmeans_fit(&x_train, 2, seed).unwrap();
        let align = ClusterAlignment::fit(&kmeans_predict(&km, &x_train).unwrap(), &y_train).unwrap();
        let km_report = EvalReport::from_predictions(
            &align.apply(&kmeans_predict(&km, &x_test).unwrap()),
            &y_test,
        )
        .unwrap();
        km_f.push(km_report.f_score);

        let config = if full {
            IdecConfig { seed, ..IdecConfig::default() }
        } else {
            IdecConfig::compact(seed)
        };
        let fit = idec_fit(&x_train, &constraints, &config).unwrap();
        let align =
            ClusterAlignment::fit(&idec_predict(&fit.model, &x_train).unwrap(), &y_train).unwrap();
        let idec_report = EvalReport::from_predictions(
            &align.apply(&idec_predict(&fit.model, &x_test).unwrap()),
            &y_test,
        )
        .unwrap();
        idec_f.push(idec_report.f_score);

        println!(
            "seed {seed}: kmeans F {:.4} | idec F {:.4} acc {:.4} ri {:.4} ({:.1}s)",
            km_report.f_score,
            idec_report.f_score,
            idec_report.accuracy,
            idec_report.rand_index,
            t.elapsed().as_secs_f64()
        );
    }
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    println!(
        "mean kmeans F {:.4} | mean idec F {:.4} | delta {:+.4} | total {:.1}s",
        mean(&km_f),
        mean(&idec_f),
        mean(&idec_f) - mean(&km_f),
        t0.elapsed().as_secs_f64()
    );
}
