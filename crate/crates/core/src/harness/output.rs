//! File emission: traces, run metadata, checkpoints and field grids.
//!
//! Numbers are written with Rust's shortest round-trip `f64` formatting,
//! which is locale independent.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::SpaceTimePoint;
use crate::value::{decompose_terms, Knowledge, TermRecord};

use super::config::Method;
use super::run::{build_world, Checkpoint, FitStats, RunTrace};

pub const FIELD_HEADER: &str = "x,t,mu_q,value,free_drift,control_benefit,exploration_bonus,diffusion_cost";

pub fn trace_path(dir: &Path, method: Method, seed: u64) -> PathBuf {
    dir.join(format!("trace_{}_{seed}.csv", method.as_str()))
}

pub fn meta_path(dir: &Path, method: Method, seed: u64) -> PathBuf {
    dir.join(format!("meta_{}_{seed}.json", method.as_str()))
}

pub fn checkpoint_path(dir: &Path, method: Method, seed: u64, step: usize) -> PathBuf {
    dir.join(format!("checkpoint_{}_{seed}_{step}.json", method.as_str()))
}

pub fn fields_path(dir: &Path, step: usize) -> PathBuf {
    dir.join(format!("fields_{step}.csv"))
}

/// Trace rows as CSV with columns `t,x0..,u0..,loss,disc_loss,n_obs`.
pub fn trace_csv(trace: &RunTrace) -> String {
    let (nx, nu) = trace.rows.first().map_or((0, 0), |r| (r.x.len(), r.u.len()));
    let mut out = String::from("t");
    for i in 0..nx {
        let _ = write!(out, ",x{i}");
    }
    for i in 0..nu {
        let _ = write!(out, ",u{i}");
    }
    out.push_str(",loss,disc_loss,n_obs\n");
    for r in &trace.rows {
        let _ = write!(out, "{}", r.t);
        for v in r.x.iter().chain(&r.u) {
            let _ = write!(out, ",{v}");
        }
        let _ = writeln!(out, ",{},{},{}", r.loss, r.disc_loss, r.n_obs);
    }
    out
}

/// Summary of one run, written next to its trace.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunMeta {
    pub method: Method,
    pub seed: u64,
    pub fingerprint: String,
    pub n_steps: usize,
    pub final_disc_loss: f64,
    pub fits: Vec<FitStats>,
    pub warnings: Vec<String>,
    pub aborted: Option<String>,
}

impl RunMeta {
    pub fn from_trace(trace: &RunTrace) -> Self {
        Self {
            method: trace.method,
            seed: trace.seed,
            fingerprint: trace.fingerprint.clone(),
            n_steps: trace.rows.len(),
            final_disc_loss: trace.final_disc_loss(),
            fits: trace.fits.clone(),
            warnings: trace.warnings.clone(),
            aborted: trace.aborted.clone(),
        }
    }
}

fn write(path: &Path, contents: &str) -> Result<()> {
    std::fs::write(path, contents).map_err(|e| Error::io(path, e))
}

/// Writes trace, metadata and checkpoints of a run into `dir`.
pub fn write_run(trace: &RunTrace, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    write(&trace_path(dir, trace.method, trace.seed), &trace_csv(trace))?;
    let meta = serde_json::to_string_pretty(&RunMeta::from_trace(trace))?;
    write(&meta_path(dir, trace.method, trace.seed), &meta)?;
    for c in &trace.checkpoints {
        let json = serde_json::to_string(c)?;
        write(&checkpoint_path(dir, c.method, c.seed, c.step), &json)?;
    }
    Ok(())
}

pub fn read_checkpoint(path: &Path) -> Result<Checkpoint> {
    let s = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_str(&s)?)
}

/// Evaluation grid: the first state coordinate against time over the region,
/// other coordinates held at the checkpoint state.
pub fn field_grid(ckpt: &Checkpoint) -> Result<Vec<SpaceTimePoint>> {
    let cfg = &ckpt.config;
    let region = cfg.region()?;
    let axes = region.n_axes();
    let (nx, nt) = (cfg.field_counts[0], cfg.field_counts[1]);
    let lin = |lo: f64, hi: f64, n: usize, i: usize| lo + (hi - lo) * i as f64 / (n - 1) as f64;
    let mut grid = Vec::with_capacity(nx * nt);
    for j in 0..nt {
        let t = lin(region.lo[axes - 1], region.hi[axes - 1], nt, j);
        for i in 0..nx {
            let mut x = ckpt.state.x.clone();
            x[0] = lin(region.lo[0], region.hi[0], nx, i);
            grid.push(SpaceTimePoint::new(x, t));
        }
    }
    Ok(grid)
}

/// `μ_q`, `v` and the HJB term groups on the field grid of a checkpoint.
pub fn emit_fields(ckpt: &Checkpoint) -> Result<Vec<(SpaceTimePoint, TermRecord)>> {
    let cfg = &ckpt.config;
    let world = build_world(cfg, ckpt.seed)?;
    let w = world.as_world();
    let knowledge = match ckpt.method {
        Method::Gp => Knowledge::from_state(&ckpt.state),
        _ => Knowledge::Exact(w),
    };
    let grid = field_grid(ckpt)?;
    let recs = decompose_terms(&ckpt.bank, &ckpt.weights, &knowledge, w, &cfg.control_cost()?, cfg.hjb()?, &grid)?;
    Ok(grid.into_iter().zip(recs).collect())
}

pub fn fields_csv(rows: &[(SpaceTimePoint, TermRecord)]) -> Result<String> {
    let mut out = String::from(FIELD_HEADER);
    out.push('\n');
    for (s, r) in rows {
        let vals = [r.mu_q, r.value, r.free_drift, r.control_benefit, r.exploration_bonus, r.diffusion_cost];
        if !vals.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite(format!("field row at x={}, t={}", s.x[0], s.t)));
        }
        let _ = write!(out, "{},{}", s.x[0], s.t);
        for v in vals {
            let _ = write!(out, ",{v}");
        }
        out.push('\n');
    }
    Ok(out)
}

/// Locates the checkpoint for `step` in `dir`, preferring the GP learner and the lowest seed.
pub fn find_checkpoint(dir: &Path, step: usize) -> Result<PathBuf> {
    let mut found: Vec<(u8, u64, PathBuf)> = Vec::new();
    let entries = std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    for entry in entries {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        let Some(name) = path.file_name().and_then(|n| n.to_str()) else {
            continue;
        };
        let Some(rest) = name.strip_prefix("checkpoint_").and_then(|r| r.strip_suffix(".json")) else {
            continue;
        };
        let parts: Vec<&str> = rest.split('_').collect();
        if parts.len() != 3 || parts[2].parse::<usize>().ok() != Some(step) {
            continue;
        }
        let Ok(seed) = parts[1].parse::<u64>() else {
            continue;
        };
        let rank = if parts[0] == "gp" { 0 } else { 1 };
        found.push((rank, seed, path));
    }
    found.sort();
    found
        .into_iter()
        .next()
        .map(|(_, _, p)| p)
        .ok_or_else(|| Error::Config(format!("no checkpoint for step {step} in {}", dir.display())))
}

/// Writes `fields_<step>.csv` from the checkpoint at `step` in `dir`.
pub fn write_fields(dir: &Path, step: usize) -> Result<PathBuf> {
    let ckpt = read_checkpoint(&find_checkpoint(dir, step)?)?;
    let csv = fields_csv(&emit_fields(&ckpt)?)?;
    let path = fields_path(dir, step);
    write(&path, &csv)?;
    Ok(path)
}
