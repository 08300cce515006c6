//! Closed-form optimal control `u = -R gᵀ ∇_x v` for a quadratic control cost
//! `ρ(u) = ½ uᵀ R⁻¹ u`.

use nalgebra::{DMatrix, DVector};

use crate::augmented::{AugmentedState, ControlGain};
use crate::error::{Error, Result};
use crate::value::{value_gradient, FeatureBank, ValueWeights};

/// Symmetric positive-definite control-cost matrix `R`.
#[derive(Clone, Debug, PartialEq)]
pub struct ControlCost {
    r: DMatrix<f64>,
    chol: DMatrix<f64>,
}

impl ControlCost {
    pub fn new(r: DMatrix<f64>) -> Result<Self> {
        if !r.is_square() || r.nrows() == 0 {
            return Err(Error::param("R", "must be a non-empty square matrix"));
        }
        if !r.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite("control cost".into()));
        }
        if (&r - r.transpose()).amax() > 1e-12 * r.amax() {
            return Err(Error::param("R", "must be symmetric"));
        }
        let chol = r
            .clone()
            .cholesky()
            .ok_or(Error::NotPositiveDefinite { context: "control cost" })?
            .l();
        Ok(Self { r, chol })
    }

    pub fn scalar(r: f64) -> Result<Self> {
        Self::new(DMatrix::from_element(1, 1, r))
    }

    pub fn diagonal(r: &[f64]) -> Result<Self> {
        Self::new(DMatrix::from_diagonal(&DVector::from_column_slice(r)))
    }

    pub fn dim(&self) -> usize {
        self.r.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.r
    }

    /// Lower factor `Lᵣ` with `R = Lᵣ Lᵣᵀ`.
    pub fn cholesky_factor(&self) -> &DMatrix<f64> {
        &self.chol
    }

    /// `R` scaled by `alpha > 0`.
    pub fn scaled(&self, alpha: f64) -> Result<Self> {
        Self::new(&self.r * alpha)
    }

    /// `aᵀ R a`.
    pub fn quadratic_form(&self, a: &DVector<f64>) -> f64 {
        self.chol.tr_mul(a).norm_squared()
    }

    /// `½ uᵀ R⁻¹ u`.
    pub fn penalty(&self, u: &DVector<f64>) -> f64 {
        let y = self
            .chol
            .solve_lower_triangular(u)
            .expect("non-singular Cholesky factor");
        0.5 * y.norm_squared()
    }
}

/// `u = -R gᵀ ∇_x v` for a given value gradient.
pub fn control_from_gradient(
    grad_x: &[f64],
    x: &[f64],
    t: f64,
    gain: &dyn ControlGain,
    cost: &ControlCost,
) -> DVector<f64> {
    let g = gain.gain(x, t);
    let gt_grad = g.tr_mul(&DVector::from_column_slice(grad_x));
    -(cost.matrix() * gt_grad)
}

/// Optimal control at the augmented state under the fitted value.
pub fn control(
    z: &AugmentedState,
    gain: &dyn ControlGain,
    cost: &ControlCost,
    bank: &FeatureBank,
    weights: &ValueWeights,
) -> Result<DVector<f64>> {
    if gain.control_dim() != cost.dim() {
        return Err(Error::DimensionMismatch {
            expected: cost.dim(),
            got: gain.control_dim(),
        });
    }
    let grad = value_gradient(bank, weights, &z.location())?;
    Ok(control_from_gradient(&grad, &z.x, z.t, gain, cost))
}

/// Clips each component to `[-u_max, u_max]`.
pub fn saturate(u: &mut DVector<f64>, u_max: Option<f64>) {
    if let Some(m) = u_max {
        u.apply(|v| *v = v.clamp(-m, m));
    }
}
