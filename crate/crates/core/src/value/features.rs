//! Feature functionals of the factorising value Ansatz and their weights.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::{SpaceTimePoint, SqExpKernel};

/// Radial basis function over phase space-time, `φ_s(z) = k(s_z, s_a)`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PhaseFeature {
    pub center: SpaceTimePoint,
    pub kernel: SqExpKernel,
}

/// Value and derivatives of a phase feature.
#[derive(Clone, Debug, PartialEq)]
pub struct PhaseEval {
    pub value: f64,
    /// `∇_x φ`, length `D`.
    pub grad_x: Vec<f64>,
    /// `∂_t φ`.
    pub d_t: f64,
}

impl PhaseFeature {
    pub fn new(center: SpaceTimePoint, kernel: SqExpKernel) -> Result<Self> {
        kernel.check_point(&center)?;
        Ok(Self { center, kernel })
    }

    pub fn eval(&self, s: &SpaceTimePoint) -> PhaseEval {
        let (value, mut grad) = self
            .kernel
            .eval_with_gradient(s, &self.center)
            .expect("phase point dimension");
        let d_t = grad.pop().expect("time axis");
        PhaseEval {
            value,
            grad_x: grad,
            d_t,
        }
    }
}

/// Phase-feature value with its spatial gradient and time derivative.
pub fn phi_phase(feature: &PhaseFeature, s: &SpaceTimePoint) -> PhaseEval {
    feature.eval(s)
}

/// SE weighting kernel used by the covariance and mean functionals.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct InfoFeature {
    pub center: SpaceTimePoint,
    pub kernel: SqExpKernel,
}

impl InfoFeature {
    pub fn new(center: SpaceTimePoint, kernel: SqExpKernel) -> Result<Self> {
        kernel.check_point(&center)?;
        Ok(Self { center, kernel })
    }
}

/// Covariance and mean functionals for one learned function.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct InfoBlock {
    pub cov: Vec<InfoFeature>,
    pub mean: Vec<InfoFeature>,
}

/// All features of the Ansatz. `blocks[0]` belongs to `q`, `blocks[1 + d]` to `f_d`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FeatureBank {
    dim: usize,
    pub phase: Vec<PhaseFeature>,
    pub blocks: Vec<InfoBlock>,
}

/// How phase features are placed in the region.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PhaseLayout {
    Grid,
    Random,
}

/// Axis-aligned box over `(x, t)`; the last entry of each bound is time.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Region {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl Region {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>) -> Result<Self> {
        if lo.len() != hi.len() || lo.len() < 1 {
            return Err(Error::param("region", "lo/hi must have the same non-zero length"));
        }
        if lo.iter().zip(&hi).any(|(a, b)| !(a.is_finite() && b.is_finite() && a < b)) {
            return Err(Error::param("region", "need finite lo < hi on every axis"));
        }
        Ok(Self { lo, hi })
    }

    pub fn n_axes(&self) -> usize {
        self.lo.len()
    }

    pub fn width(&self, axis: usize) -> f64 {
        self.hi[axis] - self.lo[axis]
    }

    pub fn center(&self) -> SpaceTimePoint {
        let n = self.n_axes();
        let c: Vec<f64> = (0..n).map(|i| 0.5 * (self.lo[i] + self.hi[i])).collect();
        SpaceTimePoint::new(c[..n - 1].to_vec(), c[n - 1])
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> SpaceTimePoint {
        let n = self.n_axes();
        let c: Vec<f64> = (0..n).map(|i| rng.random_range(self.lo[i]..self.hi[i])).collect();
        SpaceTimePoint::new(c[..n - 1].to_vec(), c[n - 1])
    }

    /// Same box with the time axis replaced.
    pub fn with_time(&self, t_lo: f64, t_hi: f64) -> Result<Self> {
        let mut lo = self.lo.clone();
        let mut hi = self.hi.clone();
        *lo.last_mut().expect("axes") = t_lo;
        *hi.last_mut().expect("axes") = t_hi;
        Self::new(lo, hi)
    }
}

/// Parameters for building a bank over a region.
#[derive(Clone, Debug)]
pub struct BankLayout {
    pub region: Region,
    pub layout: PhaseLayout,
    /// Grid counts per axis (grid layout) or total count in the first entry's
    /// product (random layout uses the product of the counts).
    pub counts: Vec<usize>,
    pub amplitude: f64,
    /// Phase length scale as a multiple of the grid pitch on each axis.
    pub length_scale_factor: f64,
    pub cov_per_block: usize,
    pub mean_per_block: usize,
    /// Info-feature length scale as a multiple of the region width.
    pub info_scale_factor: f64,
}

impl FeatureBank {
    pub fn new(dim: usize, phase: Vec<PhaseFeature>, blocks: Vec<InfoBlock>) -> Result<Self> {
        if phase.is_empty() {
            return Err(Error::param("phase", "need at least one phase feature"));
        }
        if blocks.len() != dim + 1 {
            return Err(Error::DimensionMismatch {
                expected: dim + 1,
                got: blocks.len(),
            });
        }
        let axes = dim + 1;
        let ok = phase.iter().all(|f| f.kernel.n_axes() == axes)
            && blocks
                .iter()
                .flat_map(|b| b.cov.iter().chain(&b.mean))
                .all(|f| f.kernel.n_axes() == axes);
        if !ok {
            return Err(Error::param("features", "all kernels must span D + 1 axes"));
        }
        Ok(Self { dim, phase, blocks })
    }

    /// Builds a bank from a layout description. `rng` places random centers.
    pub fn from_layout<R: Rng + ?Sized>(dim: usize, cfg: &BankLayout, rng: &mut R) -> Result<Self> {
        let axes = dim + 1;
        let region = &cfg.region;
        if region.n_axes() != axes || cfg.counts.len() != axes {
            return Err(Error::DimensionMismatch {
                expected: axes,
                got: region.n_axes().min(cfg.counts.len()),
            });
        }
        if cfg.counts.iter().any(|c| *c == 0) {
            return Err(Error::param("phase_counts", "counts must be positive"));
        }
        let pitch: Vec<f64> = (0..axes)
            .map(|i| region.width(i) / cfg.counts[i] as f64)
            .collect();
        let ls: Vec<f64> = pitch.iter().map(|p| p * cfg.length_scale_factor).collect();
        let kernel = SqExpKernel::new(cfg.amplitude, &ls)?;
        let total: usize = cfg.counts.iter().product();
        let mut phase = Vec::with_capacity(total);
        match cfg.layout {
            PhaseLayout::Grid => {
                let mut idx = vec![0usize; axes];
                for _ in 0..total {
                    let c: Vec<f64> = (0..axes)
                        .map(|i| region.lo[i] + (idx[i] as f64 + 0.5) * pitch[i])
                        .collect();
                    phase.push(PhaseFeature::new(
                        SpaceTimePoint::new(c[..dim].to_vec(), c[dim]),
                        kernel.clone(),
                    )?);
                    for i in 0..axes {
                        idx[i] += 1;
                        if idx[i] < cfg.counts[i] {
                            break;
                        }
                        idx[i] = 0;
                    }
                }
            }
            PhaseLayout::Random => {
                for _ in 0..total {
                    phase.push(PhaseFeature::new(region.sample(rng), kernel.clone())?);
                }
            }
        }
        let info_ls: Vec<f64> = (0..axes)
            .map(|i| region.width(i) * cfg.info_scale_factor)
            .collect();
        let info_kernel = SqExpKernel::new(1.0, &info_ls)?;
        let info = |n: usize| -> Result<Vec<InfoFeature>> {
            (0..n)
                .map(|_| InfoFeature::new(region.center(), info_kernel.clone()))
                .collect()
        };
        let blocks = (0..axes)
            .map(|_| {
                Ok(InfoBlock {
                    cov: info(cfg.cov_per_block)?,
                    mean: info(cfg.mean_per_block)?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(dim, phase, blocks)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn layout(&self) -> WeightLayout {
        WeightLayout {
            n_phase: self.phase.len(),
            blocks: self.blocks.iter().map(|b| (b.cov.len(), b.mean.len())).collect(),
        }
    }
}

/// Sizes of the weight blocks, in flattening order: phase, then for each
/// learned function its covariance and mean weights.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct WeightLayout {
    pub n_phase: usize,
    pub blocks: Vec<(usize, usize)>,
}

impl WeightLayout {
    pub fn total(&self) -> usize {
        self.n_phase + self.blocks.iter().map(|(c, m)| c + m).sum::<usize>()
    }

    /// Offsets of the covariance and mean weights of block `c` in the flat vector.
    pub fn block_offsets(&self, c: usize) -> (usize, usize) {
        let mut off = self.n_phase;
        for (cov, mean) in &self.blocks[..c] {
            off += cov + mean;
        }
        (off, off + self.blocks[c].0)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ValueWeights {
    pub x: Vec<f64>,
    pub cov: Vec<Vec<f64>>,
    pub mean: Vec<Vec<f64>>,
}

impl ValueWeights {
    pub fn zeros(bank: &FeatureBank) -> Self {
        Self {
            x: vec![0.0; bank.phase.len()],
            cov: bank.blocks.iter().map(|b| vec![0.0; b.cov.len()]).collect(),
            mean: bank.blocks.iter().map(|b| vec![0.0; b.mean.len()]).collect(),
        }
    }

    pub fn layout(&self) -> WeightLayout {
        WeightLayout {
            n_phase: self.x.len(),
            blocks: self.cov.iter().zip(&self.mean).map(|(c, m)| (c.len(), m.len())).collect(),
        }
    }

    pub fn check(&self, bank: &FeatureBank) -> Result<()> {
        if self.layout() != bank.layout() {
            return Err(Error::param("weights", "layout does not match feature bank"));
        }
        if !self.flatten().iter().all(|w| w.is_finite()) {
            return Err(Error::NonFinite("value weights".into()));
        }
        Ok(())
    }

    pub fn flatten(&self) -> Vec<f64> {
        let mut out = self.x.clone();
        for (c, m) in self.cov.iter().zip(&self.mean) {
            out.extend_from_slice(c);
            out.extend_from_slice(m);
        }
        out
    }

    pub fn from_flat(layout: &WeightLayout, flat: &[f64]) -> Result<Self> {
        if flat.len() != layout.total() {
            return Err(Error::DimensionMismatch {
                expected: layout.total(),
                got: flat.len(),
            });
        }
        let mut it = flat.iter().copied();
        let x = it.by_ref().take(layout.n_phase).collect();
        let mut cov = Vec::with_capacity(layout.blocks.len());
        let mut mean = Vec::with_capacity(layout.blocks.len());
        for (nc, nm) in &layout.blocks {
            cov.push(it.by_ref().take(*nc).collect());
            mean.push(it.by_ref().take(*nm).collect());
        }
        Ok(Self { x, cov, mean })
    }
}
