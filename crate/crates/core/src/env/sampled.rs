//! Worlds whose loss and drift are draws from the GP prior.
//!
//! Each function is drawn jointly on a regular grid over the region and
//! extended to the whole space by SE-kernel interpolation through the nodes.

use std::fmt::Write as _;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::augmented::ControlGain;
use crate::error::{Error, Result};
use crate::kernel::{SpaceTimePoint, SqExpKernel};
use crate::value::{ExactModel, Region};

use super::World;

/// Relative diagonal jitter for the grid Gram matrix, grown on factorisation failure.
const GRID_JITTER: f64 = 1e-10;

/// A function given by kernel interpolation through grid nodes.
#[derive(Clone, Debug)]
pub struct GridFunction {
    kernel: Option<SqExpKernel>,
    nodes: Vec<SpaceTimePoint>,
    values: Vec<f64>,
    alpha: Vec<f64>,
}

fn jittered_cholesky(k: &DMatrix<f64>, scale: f64) -> Result<nalgebra::Cholesky<f64, nalgebra::Dyn>> {
    let mut jitter = GRID_JITTER * scale;
    for _ in 0..8 {
        let mut m = k.clone();
        for i in 0..m.nrows() {
            m[(i, i)] += jitter;
        }
        if let Some(c) = m.cholesky() {
            return Ok(c);
        }
        jitter *= 10.0;
    }
    Err(Error::NotPositiveDefinite { context: "world grid" })
}

impl GridFunction {
    /// Identically zero.
    pub fn zero() -> Self {
        Self {
            kernel: None,
            nodes: Vec::new(),
            values: Vec::new(),
            alpha: Vec::new(),
        }
    }

    /// Interpolates `values` at `nodes`.
    pub fn interpolate(kernel: SqExpKernel, nodes: Vec<SpaceTimePoint>, values: Vec<f64>) -> Result<Self> {
        if nodes.len() != values.len() {
            return Err(Error::DimensionMismatch {
                expected: nodes.len(),
                got: values.len(),
            });
        }
        let k = kernel.gram(&nodes, 0.0)?;
        let chol = jittered_cholesky(&k, kernel.variance())?;
        let alpha = chol.solve(&DVector::from_column_slice(&values)).as_slice().to_vec();
        Ok(Self {
            kernel: Some(kernel),
            nodes,
            values,
            alpha,
        })
    }

    /// Draws a prior sample at `nodes`. The stored node values are those of the
    /// interpolant, so the function reproduces them at the nodes.
    pub fn draw<R: rand::Rng + ?Sized>(kernel: SqExpKernel, nodes: Vec<SpaceTimePoint>, rng: &mut R) -> Result<Self> {
        let k = kernel.gram(&nodes, 0.0)?;
        let chol = jittered_cholesky(&k, kernel.variance())?;
        let z = DVector::from_iterator(nodes.len(), (0..nodes.len()).map(|_| StandardNormal.sample(rng)));
        let y = chol.l() * z;
        let alpha = chol.solve(&y);
        let values = (&k * &alpha).as_slice().to_vec();
        Ok(Self {
            kernel: Some(kernel),
            nodes,
            values,
            alpha: alpha.as_slice().to_vec(),
        })
    }

    pub fn eval(&self, s: &SpaceTimePoint) -> f64 {
        match &self.kernel {
            None => 0.0,
            Some(k) => self.nodes.iter().zip(&self.alpha).map(|(n, a)| a * k.k(s, n)).sum(),
        }
    }

    pub fn nodes(&self) -> &[SpaceTimePoint] {
        &self.nodes
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SampledWorldConfig {
    pub region: Region,
    pub q_amplitude: f64,
    pub q_length_scales: Vec<f64>,
    pub f_amplitude: f64,
    pub f_length_scales: Vec<f64>,
    /// Grid spacing as a fraction of the length scale on each axis.
    pub spacing_fraction: f64,
}

impl SampledWorldConfig {
    pub fn dim(&self) -> usize {
        self.region.n_axes() - 1
    }

    /// Grid nodes for the given length scales, spacing at most `ℓ · spacing_fraction`.
    pub fn grid(&self, length_scales: &[f64]) -> Vec<SpaceTimePoint> {
        let axes = self.region.n_axes();
        let counts: Vec<usize> = (0..axes)
            .map(|i| (self.region.width(i) / (length_scales[i] * self.spacing_fraction)).ceil() as usize + 1)
            .collect();
        let total: usize = counts.iter().product();
        let mut idx = vec![0usize; axes];
        let mut nodes = Vec::with_capacity(total);
        for _ in 0..total {
            let c: Vec<f64> = (0..axes)
                .map(|i| self.region.lo[i] + self.region.width(i) * idx[i] as f64 / (counts[i] - 1) as f64)
                .collect();
            nodes.push(SpaceTimePoint::new(c[..axes - 1].to_vec(), c[axes - 1]));
            for i in 0..axes {
                idx[i] += 1;
                if idx[i] < counts[i] {
                    break;
                }
                idx[i] = 0;
            }
        }
        nodes
    }

    fn check(&self) -> Result<()> {
        let axes = self.region.n_axes();
        if self.q_length_scales.len() != axes || self.f_length_scales.len() != axes {
            return Err(Error::DimensionMismatch {
                expected: axes,
                got: self.q_length_scales.len().min(self.f_length_scales.len()),
            });
        }
        if !(self.q_amplitude >= 0.0 && self.f_amplitude >= 0.0) {
            return Err(Error::param("world amplitude", "must be non-negative"));
        }
        if !(self.spacing_fraction > 0.0) {
            return Err(Error::param("world_spacing_fraction", "must be positive"));
        }
        Ok(())
    }
}

/// Ground truth drawn from the prior, with identity control gain.
#[derive(Clone, Debug)]
pub struct SampledGPWorld {
    pub q: GridFunction,
    pub f: Vec<GridFunction>,
    pub region: Region,
    /// Grid-resolution warnings raised at construction.
    pub warnings: Vec<String>,
}

const STREAM_Q: u64 = 0;

fn draw_function(
    cfg: &SampledWorldConfig,
    amplitude: f64,
    ls: &[f64],
    rng: &mut ChaCha8Rng,
    name: &str,
    warnings: &mut Vec<String>,
) -> Result<GridFunction> {
    if amplitude == 0.0 {
        return Ok(GridFunction::zero());
    }
    for (i, l) in ls.iter().enumerate() {
        let axes = cfg.region.n_axes();
        let count = (cfg.region.width(i) / (l * cfg.spacing_fraction)).ceil() + 1.0;
        let spacing = cfg.region.width(i) / (count - 1.0);
        if spacing > l / 3.0 {
            let axis = if i + 1 == axes { "t".to_string() } else { format!("x{i}") };
            warnings.push(format!(
                "{name}: grid spacing {spacing} on axis {axis} exceeds a third of the length scale {l}"
            ));
        }
    }
    GridFunction::draw(SqExpKernel::new(amplitude, ls)?, cfg.grid(ls), rng)
}

/// Draws `q` and each `f_d` from independent random streams of `seed`.
pub fn sample_world(cfg: &SampledWorldConfig, seed: u64) -> Result<SampledGPWorld> {
    cfg.check()?;
    let mut warnings = Vec::new();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(STREAM_Q);
    let q = draw_function(cfg, cfg.q_amplitude, &cfg.q_length_scales, &mut rng, "q", &mut warnings)?;
    let f = (0..cfg.dim())
        .map(|d| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(STREAM_Q + 1 + d as u64);
            draw_function(cfg, cfg.f_amplitude, &cfg.f_length_scales, &mut rng, &format!("f{d}"), &mut warnings)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SampledGPWorld {
        q,
        f,
        region: cfg.region.clone(),
        warnings,
    })
}

impl SampledGPWorld {
    pub fn dim(&self) -> usize {
        self.f.len()
    }

    /// Grid nodes and values of every function as CSV with columns
    /// `function,x0..,t,value`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("function");
        for i in 0..self.dim() {
            let _ = write!(out, ",x{i}");
        }
        out.push_str(",t,value\n");
        let named = std::iter::once(("q".to_string(), &self.q))
            .chain(self.f.iter().enumerate().map(|(d, f)| (format!("f{d}"), f)));
        for (name, func) in named {
            for (n, v) in func.nodes().iter().zip(func.values()) {
                out.push_str(&name);
                for x in &n.x {
                    let _ = write!(out, ",{x}");
                }
                let _ = writeln!(out, ",{},{v}", n.t);
            }
        }
        out
    }

    pub fn dump_csv(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv()).map_err(|e| Error::io(path, e))
    }
}

impl ExactModel for SampledGPWorld {
    fn loss_rate(&self, x: &[f64], t: f64) -> f64 {
        self.q.eval(&SpaceTimePoint::new(x.to_vec(), t))
    }

    fn free_dynamics(&self, x: &[f64], t: f64) -> Vec<f64> {
        let s = SpaceTimePoint::new(x.to_vec(), t);
        self.f.iter().map(|f| f.eval(&s)).collect()
    }
}

impl ControlGain for SampledGPWorld {
    fn state_dim(&self) -> usize {
        self.dim()
    }

    fn control_dim(&self) -> usize {
        self.dim()
    }

    fn gain(&self, _x: &[f64], _t: f64) -> DMatrix<f64> {
        DMatrix::identity(self.dim(), self.dim())
    }
}

impl World for SampledGPWorld {}
