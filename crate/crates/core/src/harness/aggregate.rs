//! Multi-seed summary of final discounted losses.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};

use super::config::Method;
use super::output::RunMeta;

#[derive(Clone, Debug, PartialEq)]
pub struct MethodSummary {
    pub method: Method,
    pub n: usize,
    pub mean: f64,
    /// Sample standard deviation (`n - 1` denominator).
    pub std: f64,
    pub losses: Vec<(u64, f64)>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SummaryTable {
    pub fingerprint: String,
    pub rows: Vec<MethodSummary>,
}

pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Groups runs by method. All runs must share one configuration fingerprint
/// and each method needs at least two seeds.
pub fn aggregate(runs: &[RunMeta]) -> Result<SummaryTable> {
    let Some(first) = runs.first() else {
        return Err(Error::Config("no runs to aggregate".into()));
    };
    if let Some(r) = runs.iter().find(|r| r.fingerprint != first.fingerprint) {
        return Err(Error::Config(format!(
            "configuration mismatch: {} seed {} has fingerprint {}, expected {}",
            r.method.as_str(),
            r.seed,
            r.fingerprint,
            first.fingerprint
        )));
    }
    let mut by_method: BTreeMap<Method, Vec<(u64, f64)>> = BTreeMap::new();
    for r in runs {
        by_method.entry(r.method).or_default().push((r.seed, r.final_disc_loss));
    }
    let mut rows = Vec::new();
    for m in Method::ALL {
        let Some(mut losses) = by_method.remove(&m) else {
            continue;
        };
        if losses.len() < 2 {
            return Err(Error::Config(format!("method {} needs at least two seeds", m.as_str())));
        }
        losses.sort_by_key(|(s, _)| *s);
        let vals: Vec<f64> = losses.iter().map(|(_, l)| *l).collect();
        let (mean, std) = mean_std(&vals);
        rows.push(MethodSummary {
            method: m,
            n: vals.len(),
            mean,
            std,
            losses,
        });
    }
    Ok(SummaryTable {
        fingerprint: first.fingerprint.clone(),
        rows,
    })
}

/// `mean ± std` rounded to one significant digit of the uncertainty, with at
/// least one decimal place.
pub fn format_pm(mean: f64, std: f64) -> String {
    if !(std > 0.0) || !std.is_finite() {
        return format!("{mean} ± {std}");
    }
    let exp = std.log10().floor() as i32;
    let decimals = (-exp).max(1) as usize;
    format!("{mean:.decimals$} ± {std:.decimals$}")
}

impl SummaryTable {
    pub fn render(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "config {}", self.fingerprint);
        let _ = writeln!(out, "{:<20} {:>3}  {:<20} {:>24} {:>24}", "method", "n", "discounted loss", "mean", "std");
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{:<20} {:>3}  {:<20} {:>24} {:>24}",
                r.method.label(),
                r.n,
                format_pm(r.mean, r.std),
                r.mean,
                r.std
            );
        }
        for r in &self.rows {
            let _ = write!(out, "{}:", r.method.as_str());
            for (seed, l) in &r.losses {
                let _ = write!(out, " {seed}={l}");
            }
            out.push('\n');
        }
        out
    }
}

/// Reads every `meta_*.json` in `dir`.
pub fn load_runs(dir: &Path) -> Result<Vec<RunMeta>> {
    let mut paths: Vec<_> = std::fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.file_name()
                .and_then(|n| n.to_str())
                .is_some_and(|n| n.starts_with("meta_") && n.ends_with(".json"))
        })
        .collect();
    paths.sort();
    paths
        .iter()
        .map(|p| {
            let s = std::fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
            Ok(serde_json::from_str(&s)?)
        })
        .collect()
}

/// Aggregates the runs in `dir` and writes `summary.txt`.
pub fn write_summary(dir: &Path) -> Result<SummaryTable> {
    let table = aggregate(&load_runs(dir)?)?;
    let path = dir.join("summary.txt");
    std::fs::write(&path, table.render()).map_err(|e| Error::io(&path, e))?;
    Ok(table)
}
