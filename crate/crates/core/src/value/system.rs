//! Assembly of the quadratic residual system over a set of evaluation points.
//!
//! At each point the residual of the HJB equation under the Ansatz reads
//!
//! ```text
//! r(w) = ½ w_xᵀ Ψ w_x - q + Ξ · w
//! ```
//!
//! with `Ψ = Gᵀ g R gᵀ G` (`G` the `D × N_x` matrix of phase-feature gradients).
//! `Ψ` is stored through its factor `B = Lᵣᵀ gᵀ G` so that `Ψ = Bᵀ B`.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::augmented::{AugmentedState, ControlGain};
use crate::belief::GPBelief;
use crate::error::{Error, Result};
use crate::kernel::SpaceTimePoint;
use crate::policy::ControlCost;

use super::features::{FeatureBank, ValueWeights, WeightLayout};
use super::functionals::PreparedBlock;

/// Ground truth available to a full-information controller.
pub trait ExactModel: Send + Sync {
    fn loss_rate(&self, x: &[f64], t: f64) -> f64;
    fn free_dynamics(&self, x: &[f64], t: f64) -> Vec<f64>;
}

/// What the planner knows about `q` and `f`.
#[derive(Clone, Copy)]
pub enum Knowledge<'a> {
    Beliefs { q: &'a GPBelief, f: &'a [GPBelief] },
    /// Exact means and zero covariance. All belief functionals drop out.
    Exact(&'a dyn ExactModel),
}

impl<'a> Knowledge<'a> {
    pub fn from_state(z: &'a AugmentedState) -> Self {
        Knowledge::Beliefs {
            q: &z.belief_q,
            f: &z.belief_f,
        }
    }

    pub fn loss_mean(&self, s: &SpaceTimePoint) -> f64 {
        match self {
            Knowledge::Beliefs { q, .. } => q.posterior_mean(s),
            Knowledge::Exact(m) => m.loss_rate(&s.x, s.t),
        }
    }

    pub fn drift_mean(&self, s: &SpaceTimePoint) -> Vec<f64> {
        match self {
            Knowledge::Beliefs { f, .. } => f.iter().map(|b| b.posterior_mean(s)).collect(),
            Knowledge::Exact(m) => m.free_dynamics(&s.x, s.t),
        }
    }

    /// Beliefs in block order: `q`, then `f₁..f_D`.
    pub(crate) fn beliefs(&self) -> Option<Vec<&'a GPBelief>> {
        match *self {
            Knowledge::Beliefs { q, f } => Some(std::iter::once(q).chain(f.iter()).collect()),
            Knowledge::Exact(_) => None,
        }
    }

    pub(crate) fn prepare(&self, bank: &'a FeatureBank) -> Result<Option<Vec<PreparedBlock<'a>>>> {
        let Some(beliefs) = self.beliefs() else {
            return Ok(None);
        };
        if beliefs.len() != bank.blocks.len() {
            return Err(Error::DimensionMismatch {
                expected: bank.blocks.len(),
                got: beliefs.len(),
            });
        }
        beliefs
            .into_iter()
            .zip(&bank.blocks)
            .map(|(b, blk)| PreparedBlock::new(b, blk))
            .collect::<Result<Vec<_>>>()
            .map(Some)
    }
}

/// Discount horizon `γ` and observation rate `λ`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HjbParams {
    pub discount: f64,
    pub rate: f64,
}

impl HjbParams {
    pub fn new(discount: f64, rate: f64) -> Result<Self> {
        if !(discount > 0.0 && discount.is_finite()) {
            return Err(Error::param("gamma", "must be positive"));
        }
        if !(rate > 0.0 && rate.is_finite()) {
            return Err(Error::param("lambda", "must be positive"));
        }
        Ok(Self { discount, rate })
    }
}

/// Residual data of one evaluation point.
#[derive(Clone, Debug)]
pub struct PointRow {
    /// `μ_q` at the point.
    pub q: f64,
    /// Linear coefficients over the full flattened weight vector.
    pub xi: Vec<f64>,
    /// `U × N_x` factor of `Ψ`.
    pub b: DMatrix<f64>,
}

impl PointRow {
    pub fn psi(&self) -> DMatrix<f64> {
        self.b.tr_mul(&self.b)
    }

    fn residual(&self, w: &[f64], n_x: usize) -> f64 {
        let bw = &self.b * DVector::from_column_slice(&w[..n_x]);
        0.5 * bw.norm_squared() - self.q + dot(&self.xi, w)
    }

    fn jacobian_row(&self, w: &[f64], n_x: usize) -> Vec<f64> {
        let bw = &self.b * DVector::from_column_slice(&w[..n_x]);
        let quad = self.b.tr_mul(&bw);
        let mut row = self.xi.clone();
        for (r, g) in row[..n_x].iter_mut().zip(quad.iter()) {
            *r += g;
        }
        row
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[derive(Clone, Debug)]
pub struct ResidualSystem {
    layout: WeightLayout,
    rows: Vec<PointRow>,
}

impl ResidualSystem {
    pub fn from_rows(layout: WeightLayout, rows: Vec<PointRow>) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::param("evaluation points", "need at least one"));
        }
        let n = layout.total();
        for r in &rows {
            if r.xi.len() != n {
                return Err(Error::DimensionMismatch {
                    expected: n,
                    got: r.xi.len(),
                });
            }
            if r.b.ncols() != layout.n_phase {
                return Err(Error::DimensionMismatch {
                    expected: layout.n_phase,
                    got: r.b.ncols(),
                });
            }
        }
        Ok(Self { layout, rows })
    }

    pub fn layout(&self) -> &WeightLayout {
        &self.layout
    }

    pub fn rows(&self) -> &[PointRow] {
        &self.rows
    }

    pub fn n_points(&self) -> usize {
        self.rows.len()
    }

    pub fn n_params(&self) -> usize {
        self.layout.total()
    }

    pub fn psi(&self, i: usize) -> DMatrix<f64> {
        self.rows[i].psi()
    }

    pub fn residuals(&self, w: &[f64]) -> Vec<f64> {
        let n_x = self.layout.n_phase;
        self.rows.par_iter().map(|r| r.residual(w, n_x)).collect()
    }

    /// `M × P` Jacobian of the residuals.
    pub fn jacobian(&self, w: &[f64]) -> DMatrix<f64> {
        let n_x = self.layout.n_phase;
        let rows: Vec<Vec<f64>> = self.rows.par_iter().map(|r| r.jacobian_row(w, n_x)).collect();
        DMatrix::from_fn(rows.len(), self.n_params(), |i, j| rows[i][j])
    }

    /// Sum of squared residuals.
    pub fn objective(&self, w: &[f64]) -> f64 {
        self.residuals(w).iter().map(|r| r * r).sum()
    }

    pub fn weights_objective(&self, w: &ValueWeights) -> f64 {
        self.objective(&w.flatten())
    }

    /// Root mean square residual.
    pub fn rms(&self, w: &[f64]) -> f64 {
        (self.objective(w) / self.n_points() as f64).sqrt()
    }

    /// Gradient of the objective, `2 Jᵀ r`.
    pub fn gradient(&self, w: &[f64]) -> DVector<f64> {
        let r = DVector::from_vec(self.residuals(w));
        self.jacobian(w).tr_mul(&r) * 2.0
    }
}

/// Phase-feature gradients at `s` as a `D × N_x` matrix, with values and time derivatives.
pub(crate) fn phase_jet(bank: &FeatureBank, s: &SpaceTimePoint) -> (Vec<f64>, DMatrix<f64>, Vec<f64>) {
    let d = bank.dim();
    let n = bank.phase.len();
    let mut values = Vec::with_capacity(n);
    let mut dts = Vec::with_capacity(n);
    let mut g = DMatrix::zeros(d, n);
    for (a, f) in bank.phase.iter().enumerate() {
        let e = f.eval(s);
        values.push(e.value);
        dts.push(e.d_t);
        for (i, gi) in e.grad_x.iter().enumerate() {
            g[(i, a)] = *gi;
        }
    }
    (values, g, dts)
}

fn check_gain(bank: &FeatureBank, gain: &dyn ControlGain, cost: &ControlCost) -> Result<()> {
    if gain.state_dim() != bank.dim() {
        return Err(Error::DimensionMismatch {
            expected: bank.dim(),
            got: gain.state_dim(),
        });
    }
    if gain.control_dim() != cost.dim() {
        return Err(Error::DimensionMismatch {
            expected: cost.dim(),
            got: gain.control_dim(),
        });
    }
    Ok(())
}

/// Builds `Ξ`, `Ψ` and `q` at every evaluation point. All points share `knowledge`.
pub fn assemble_residual_system(
    bank: &FeatureBank,
    knowledge: &Knowledge,
    points: &[SpaceTimePoint],
    gain: &dyn ControlGain,
    cost: &ControlCost,
    params: HjbParams,
) -> Result<ResidualSystem> {
    check_gain(bank, gain, cost)?;
    if points.is_empty() {
        return Err(Error::param("evaluation points", "need at least one"));
    }
    for p in points {
        if p.dim() != bank.dim() {
            return Err(Error::DimensionMismatch {
                expected: bank.dim(),
                got: p.dim(),
            });
        }
    }
    let layout = bank.layout();
    let prepared = knowledge.prepare(bank)?;
    let inv_gamma = 1.0 / params.discount;
    let lambda = params.rate;
    let lr_t = cost.cholesky_factor().transpose();

    let rows = points
        .par_iter()
        .map(|s| {
            let mut xi = vec![0.0; layout.total()];
            let (values, g_phase, dts) = phase_jet(bank, s);
            let mu_f = DVector::from_vec(knowledge.drift_mean(s));
            let drift = g_phase.tr_mul(&mu_f);
            for a in 0..layout.n_phase {
                xi[a] = inv_gamma * values[a] - drift[a] - dts[a];
            }
            if let Some(blocks) = &prepared {
                for (c, blk) in blocks.iter().enumerate() {
                    let (cov_off, mean_off) = layout.block_offsets(c);
                    let at = blk.at(s);
                    let sb2 = at.scalars.sigma_bar * at.scalars.sigma_bar;
                    for (i, f) in blk.cov.iter().enumerate() {
                        xi[cov_off + i] = inv_gamma * f.phi_cov + lambda * at.j_cov[i] * at.j_cov[i];
                    }
                    for (i, f) in blk.mean.iter().enumerate() {
                        xi[mean_off + i] =
                            inv_gamma * f.phi_mean - lambda * lambda * sb2 * at.j_mean[i] * at.j_mean[i];
                    }
                }
            }
            let gx = gain.gain(&s.x, s.t);
            let b = &lr_t * gx.transpose() * g_phase;
            let row = PointRow {
                q: knowledge.loss_mean(s),
                xi,
                b,
            };
            if !row.q.is_finite() || !row.xi.iter().all(|v| v.is_finite()) {
                return Err(Error::NonFinite(format!("residual row at t={}", s.t)));
            }
            Ok(row)
        })
        .collect::<Result<Vec<_>>>()?;
    ResidualSystem::from_rows(layout, rows)
}
