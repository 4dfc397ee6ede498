//! Tidy per-figure aggregation of raw sweep results: one file per swept
//! parameter, rows of `x, n, mean, std` per metric.

use std::collections::BTreeMap;
use std::path::Path;

use anyhow::Result;

use crate::runner::{mean_std, read_results, ParsedRow};

pub const TIDY_HEADER: &str =
    "x,n,accuracy_mean,accuracy_std,f_score_mean,f_score_std,rand_index_mean,rand_index_std";

const PARAMS: [&str; 4] = ["positive_fraction", "ml_pct", "cl_pct", "frac_11"];

fn param_value(row: &ParsedRow, param: &str) -> f64 {
    match param {
        "positive_fraction" => row.positive_fraction,
        "ml_pct" => row.ml_pct,
        "cl_pct" => row.cl_pct,
        "frac_11" => row.frac_11,
        _ => unreachable!("unknown parameter"),
    }
}

/// Aggregates one parameter axis: mean and std of each metric per value.
pub fn tidy_for_param(rows: &[ParsedRow], param: &str) -> String {
    let mut groups: BTreeMap<u64, (f64, Vec<&ParsedRow>)> = BTreeMap::new();
    for row in rows {
        let x = param_value(row, param);
        groups.entry(x.to_bits()).or_insert_with(|| (x, Vec::new())).1.push(row);
    }
    let mut out = String::from(TIDY_HEADER);
    out.push('\n');
    let mut ordered: Vec<&(f64, Vec<&ParsedRow>)> = groups.values().collect();
    ordered.sort_by(|a, b| a.0.partial_cmp(&b.0).expect("finite parameter values"));
    for (x, members) in ordered {
        let (acc_m, acc_s) = mean_std(&members.iter().map(|r| r.accuracy).collect::<Vec<_>>());
        let (f_m, f_s) = mean_std(&members.iter().map(|r| r.f_score).collect::<Vec<_>>());
        let (ri_m, ri_s) = mean_std(&members.iter().map(|r| r.rand_index).collect::<Vec<_>>());
        out.push_str(&format!(
            "{x},{},{acc_m:.12},{acc_s:.12},{f_m:.12},{f_s:.12},{ri_m:.12},{ri_s:.12}\n",
            members.len()
        ));
    }
    out
}

/// Emits `fig_<param>.csv` for every parameter that actually varies in the
/// results. Empty results produce every file as a bare header.
pub fn emit_plot_data(results_path: &Path, out_dir: &Path) -> Result<Vec<String>> {
    let rows = read_results(results_path)?;
    std::fs::create_dir_all(out_dir)?;
    let mut written = Vec::new();
    for param in PARAMS {
        let distinct: std::collections::HashSet<u64> =
            rows.iter().map(|r| param_value(r, param).to_bits()).collect();
        if rows.is_empty() || distinct.len() > 1 {
            let name = format!("fig_{param}.csv");
            std::fs::write(out_dir.join(&name), tidy_for_param(&rows, param))?;
            written.push(name);
        }
    }
    Ok(written)
}
