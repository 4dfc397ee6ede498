//! wasm-bindgen surface for the browser demo.
//!
//! Three operations back the static page in `www/`:
//! - [`pair_features`]: featurize two titles and expose the token/number
//!   breakdown behind each score;
//! - [`run_benchmark`]: synthesize a feed and race k-means, COP-k-means, and
//!   IDEC on it with chosen constraint knobs;
//! - [`sweep_metric`]: sweep one constraint knob and return curve points.
//!
//! All inputs and outputs are JSON strings so the page needs no glue types.
//! Model sizes default to a compact architecture so a run stays interactive.

use serde_json::{json, Value};
use wasm_bindgen::prelude::*;

use feedmatch_core::cluster::{
    cop_kmeans_fit, idec_fit, idec_predict, kmeans_fit, kmeans_predict, IdecConfig,
};
use feedmatch_core::constraints::sample_constraints;
use feedmatch_core::dataio::{generate_pairs, stratified_split, synth_feed, PairDataset};
use feedmatch_core::eval::{ClusterAlignment, EvalReport};
use feedmatch_core::featurize::featurize_pair;
use feedmatch_core::nn::Matrix;
use feedmatch_core::strsim::{extract_numbers, tokenize};

fn err_json(message: impl std::fmt::Display) -> String {
    json!({ "error": message.to_string() }).to_string()
}

/// Fuzzy features for one ad-hoc title pair, with the token and digit-run
/// sets behind the Jaccard scores.
#[wasm_bindgen]
pub fn pair_features(title_a: &str, title_b: &str) -> String {
    let v = featurize_pair(title_a, title_b);
    let tokens = |s: &str| tokenize(s).iter().map(str::to_string).collect::<Vec<_>>();
    let numbers = |s: &str| extract_numbers(s).iter().map(str::to_string).collect::<Vec<_>>();
    json!({
        "features": {
            "ratio": v.ratio(),
            "partial_ratio": v.partial_ratio(),
            "token_set_ratio": v.token_set_ratio(),
            "jaccard": v.jaccard(),
            "numeric_jaccard": v.numeric_jaccard(),
        },
        "tokens_a": tokens(title_a),
        "tokens_b": tokens(title_b),
        "numbers_a": numbers(title_a),
        "numbers_b": numbers(title_b),
    })
    .to_string()
}

struct DemoParams {
    entities: usize,
    variants: usize,
    noise: f64,
    n_pairs: usize,
    positive_fraction: f64,
    train_fraction: f64,
    ml_pct: f64,
    cl_pct: f64,
    frac_11: f64,
    data_seed: u64,
    model_seed: u64,
    idec: IdecConfig,
}

fn parse_params(params_json: &str) -> Result<DemoParams, String> {
    let v: Value = if params_json.trim().is_empty() {
        json!({})
    } else {
        serde_json::from_str(params_json).map_err(|e| format!("bad params JSON: {e}"))?
    };
    let get_f = |key: &str, default: f64| -> f64 {
        v.get(key).and_then(Value::as_f64).unwrap_or(default)
    };
    let get_u = |key: &str, default: u64| -> u64 {
        v.get(key).and_then(Value::as_u64).unwrap_or(default)
    };
    let model_seed = get_u("model_seed", 0);
    let mut idec = IdecConfig::compact(model_seed);
    idec.epochs = get_u("epochs", 10) as usize;
    idec.pretrain_epochs = get_u("pretrain_epochs", 30) as usize;
    idec.batch_size = get_u("batch_size", 64) as usize;
    if let Some(dims) = v.get("encoder_dims").and_then(Value::as_array) {
        let parsed: Option<Vec<usize>> =
            dims.iter().map(|d| d.as_u64().map(|u| u as usize)).collect();
        match parsed {
            Some(d) if !d.is_empty() => idec.encoder_dims = d,
            _ => return Err("encoder_dims must be a non-empty array of integers".to_string()),
        }
    }
    Ok(DemoParams {
        entities: get_u("entities", 60) as usize,
        variants: get_u("variants", 3) as usize,
        noise: get_f("noise", 0.35),
        n_pairs: get_u("n_pairs", 600) as usize,
        positive_fraction: get_f("positive_fraction", 0.25),
        train_fraction: get_f("train_fraction", 0.67),
        ml_pct: get_f("ml_pct", 0.5),
        cl_pct: get_f("cl_pct", 0.7),
        frac_11: get_f("frac_11", 1.0),
        data_seed: get_u("data_seed", 100),
        model_seed,
        idec,
    })
}

struct DemoData {
    train: PairDataset,
    test: PairDataset,
    x_train: Matrix,
    x_test: Matrix,
}

fn prepare(p: &DemoParams) -> Result<DemoData, String> {
    if p.entities < 2 || p.variants < 1 {
        return Err("need at least 2 entities and 1 variant".to_string());
    }
    if !(0.0..=1.0).contains(&p.noise) {
        return Err("noise must lie in [0, 1]".to_string());
    }
    if !(0.0 < p.train_fraction && p.train_fraction < 1.0) {
        return Err("train_fraction must lie in (0, 1)".to_string());
    }
    let feed = synth_feed(p.entities, p.variants, p.noise, p.data_seed);
    let mut ds = generate_pairs(&feed, p.n_pairs, p.positive_fraction, p.data_seed.wrapping_add(1))
        .map_err(|e| e.to_string())?;
    ds.featurize(&feed).map_err(|e| e.to_string())?;
    let (train, test) = stratified_split(&ds, p.train_fraction, p.data_seed.wrapping_add(2));
    let to_matrix = |ds: &PairDataset| -> Result<Matrix, String> {
        let rows = ds.feature_rows().map_err(|e| e.to_string())?;
        Ok(Matrix::from_rows(&rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>()))
    };
    let x_train = to_matrix(&train)?;
    let x_test = to_matrix(&test)?;
    Ok(DemoData { train, test, x_train, x_test })
}

fn score(
    train_pred: &[usize],
    test_pred: &[usize],
    data: &DemoData,
) -> Result<EvalReport, String> {
    let alignment =
        ClusterAlignment::fit(train_pred, &data.train.labels()).map_err(|e| e.to_string())?;
    EvalReport::from_predictions(&alignment.apply(test_pred), &data.test.labels())
        .map_err(|e| e.to_string())
}

fn report_json(algorithm: &str, r: &EvalReport) -> Value {
    json!({
        "algorithm": algorithm,
        "accuracy": r.accuracy,
        "precision": r.precision,
        "recall": r.recall,
        "f_score": r.f_score,
        "rand_index": r.rand_index,
    })
}

fn run_benchmark_inner(params_json: &str) -> Result<String, String> {
    let p = parse_params(params_json)?;
    let data = prepare(&p)?;
    let y_train = data.train.labels();
    let constraints =
        sample_constraints(&y_train, p.ml_pct, p.cl_pct, p.frac_11, p.data_seed.wrapping_add(9))
            .map_err(|e| e.to_string())?;

    let mut results = Vec::new();

    let km = kmeans_fit(&data.x_train, 2, p.model_seed).map_err(|e| e.to_string())?;
    let km_report = score(
        &kmeans_predict(&km, &data.x_train).map_err(|e| e.to_string())?,
        &kmeans_predict(&km, &data.x_test).map_err(|e| e.to_string())?,
        &data,
    )?;
    results.push(report_json("kmeans", &km_report));

    match cop_kmeans_fit(&data.x_train, 2, &constraints, p.model_seed) {
        Ok((cop, cop_train)) => {
            let cop_report = score(
                &cop_train,
                &kmeans_predict(&cop, &data.x_test).map_err(|e| e.to_string())?,
                &data,
            )?;
            results.push(report_json("cop_kmeans", &cop_report));
        }
        Err(e) => results.push(json!({ "algorithm": "cop_kmeans", "error": e.to_string() })),
    }

    let idec_config = IdecConfig { seed: p.model_seed, ..p.idec.clone() };
    let fit = idec_fit(&data.x_train, &constraints, &idec_config).map_err(|e| e.to_string())?;
    let idec_report = score(
        &idec_predict(&fit.model, &data.x_train).map_err(|e| e.to_string())?,
        &idec_predict(&fit.model, &data.x_test).map_err(|e| e.to_string())?,
        &data,
    )?;
    results.push(report_json("idec", &idec_report));

    Ok(json!({
        "dataset": {
            "records": p.entities * p.variants,
            "train_pairs": data.train.len(),
            "train_positives": data.train.positive_count(),
            "test_pairs": data.test.len(),
            "test_positives": data.test.positive_count(),
            "must_links": constraints.must_links().count(),
            "cant_links": constraints.cant_links().count(),
        },
        "results": results,
    })
    .to_string())
}

/// Synthesizes a feed and compares the three engines under the given
/// constraint knobs. Returns a JSON report, or `{"error": ...}`.
#[wasm_bindgen]
pub fn run_benchmark(params_json: &str) -> String {
    run_benchmark_inner(params_json).unwrap_or_else(err_json)
}

fn sweep_metric_inner(params_json: &str) -> Result<String, String> {
    let v: Value = if params_json.trim().is_empty() {
        json!({})
    } else {
        serde_json::from_str(params_json).map_err(|e| format!("bad params JSON: {e}"))?
    };
    let param = v.get("param").and_then(Value::as_str).unwrap_or("cl_pct").to_string();
    if !["ml_pct", "cl_pct", "frac_11"].contains(&param.as_str()) {
        return Err(format!("cannot sweep `{param}`; pick ml_pct, cl_pct, or frac_11"));
    }
    let values: Vec<f64> = match v.get("values").and_then(Value::as_array) {
        Some(arr) => {
            let parsed: Option<Vec<f64>> = arr.iter().map(Value::as_f64).collect();
            parsed.ok_or_else(|| "values must be numbers".to_string())?
        }
        None => vec![0.05, 0.1, 0.2, 0.3, 0.5, 0.7, 0.9],
    };
    let repeats = v.get("repeats").and_then(Value::as_u64).unwrap_or(3) as usize;
    if repeats == 0 || values.is_empty() {
        return Err("need at least one repeat and one value".to_string());
    }

    let base = parse_params(params_json)?;
    let data = prepare(&base)?;
    let y_train = data.train.labels();

    let mut points = Vec::new();
    for (i, &x) in values.iter().enumerate() {
        let (ml, cl, fr) = match param.as_str() {
            "ml_pct" => (x, base.cl_pct, base.frac_11),
            "cl_pct" => (base.ml_pct, x, base.frac_11),
            _ => (base.ml_pct, base.cl_pct, x),
        };
        let constraints = sample_constraints(
            &y_train,
            ml,
            cl,
            fr,
            base.data_seed.wrapping_add(9).wrapping_add(i as u64),
        )
        .map_err(|e| format!("{param} = {x}: {e}"))?;
        let mut f_scores = Vec::with_capacity(repeats);
        let mut accuracies = Vec::with_capacity(repeats);
        for r in 0..repeats {
            let config = IdecConfig {
                seed: base.model_seed.wrapping_add(r as u64),
                ..base.idec.clone()
            };
            let fit = idec_fit(&data.x_train, &constraints, &config).map_err(|e| e.to_string())?;
            let report = score(
                &idec_predict(&fit.model, &data.x_train).map_err(|e| e.to_string())?,
                &idec_predict(&fit.model, &data.x_test).map_err(|e| e.to_string())?,
                &data,
            )?;
            f_scores.push(report.f_score);
            accuracies.push(report.accuracy);
        }
        let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
        let std = |v: &[f64], m: f64| {
            if v.len() < 2 {
                0.0
            } else {
                (v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (v.len() as f64 - 1.0)).sqrt()
            }
        };
        let f_mean = mean(&f_scores);
        points.push(json!({
            "x": x,
            "f_score_mean": f_mean,
            "f_score_std": std(&f_scores, f_mean),
            "accuracy_mean": mean(&accuracies),
        }));
    }
    Ok(json!({ "param": param, "points": points }).to_string())
}

/// Sweeps one constraint knob with IDEC and returns curve points
/// (`{param, points: [{x, f_score_mean, f_score_std, accuracy_mean}]}`).
#[wasm_bindgen]
pub fn sweep_metric(params_json: &str) -> String {
    sweep_metric_inner(params_json).unwrap_or_else(err_json)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pair_features_exposes_breakdown() {
        let out = pair_features("sony dsc hx60", "sony dsc rx10 iii");
        let v: Value = serde_json::from_str(&out).unwrap();
        assert!(v["features"]["ratio"].as_f64().unwrap() > 0.0);
        assert_eq!(v["features"]["numeric_jaccard"].as_f64().unwrap(), 0.0);
        let tokens: Vec<&str> =
            v["tokens_a"].as_array().unwrap().iter().map(|t| t.as_str().unwrap()).collect();
        assert_eq!(tokens, vec!["dsc", "hx60", "sony"]);
        assert_eq!(v["numbers_b"].as_array().unwrap().len(), 1);
    }

    #[test]
    fn benchmark_runs_all_three_engines() {
        let out = run_benchmark(
            r#"{"entities": 20, "variants": 3, "n_pairs": 150, "epochs": 2,
                "pretrain_epochs": 3, "encoder_dims": [8, 4]}"#,
        );
        let v: Value = serde_json::from_str(&out).unwrap();
        assert!(v.get("error").is_none(), "unexpected error: {out}");
        let results = v["results"].as_array().unwrap();
        assert_eq!(results.len(), 3);
        for r in results {
            let f = r["f_score"].as_f64().unwrap();
            assert!((0.0..=1.0).contains(&f));
        }
        assert_eq!(v["dataset"]["records"].as_u64().unwrap(), 60);
    }

    #[test]
    fn benchmark_is_deterministic_per_seed() {
        let params = r#"{"entities": 16, "variants": 3, "n_pairs": 100, "epochs": 2,
                         "pretrain_epochs": 3, "encoder_dims": [8, 4], "model_seed": 7}"#;
        assert_eq!(run_benchmark(params), run_benchmark(params));
    }

    #[test]
    fn sweep_returns_one_point_per_value() {
        let out = sweep_metric(
            r#"{"entities": 16, "variants": 3, "n_pairs": 100, "epochs": 2,
                "pretrain_epochs": 2, "encoder_dims": [8, 4],
                "param": "cl_pct", "values": [0.2, 0.6], "repeats": 2}"#,
        );
        let v: Value = serde_json::from_str(&out).unwrap();
        assert!(v.get("error").is_none(), "unexpected error: {out}");
        assert_eq!(v["param"], "cl_pct");
        assert_eq!(v["points"].as_array().unwrap().len(), 2);
    }

    #[test]
    fn bad_input_reports_error_json() {
        let v: Value = serde_json::from_str(&run_benchmark("{not json")).unwrap();
        assert!(v["error"].as_str().unwrap().contains("bad params JSON"));
        let v: Value =
            serde_json::from_str(&sweep_metric(r#"{"param": "noise"}"#)).unwrap();
        assert!(v["error"].as_str().unwrap().contains("cannot sweep"));
    }
}
