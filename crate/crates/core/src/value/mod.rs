//! Parametric value function over the belief-augmented state and its
//! least-squares fit to the HJB equation.
//!
//! The Ansatz factorises into three families:
//!
//! ```text
//! v(z) = Σₐ w_xa φₐ(x, t) + Σ_c Σ_b w_Σcb φ_Σ(Σ_c) + Σ_c Σ_m w_μcm φ_μ(μ_c)
//! ```
//!
//! Only the phase part depends on `x` directly; the belief parts enter the
//! control through the fitted weights.

pub mod features;
pub mod functionals;
pub mod lm;
pub mod system;

pub use features::{
    phi_phase, BankLayout, FeatureBank, InfoBlock, InfoFeature, PhaseEval, PhaseFeature,
    PhaseLayout, Region, ValueWeights, WeightLayout,
};
pub use functionals::{innovation_feature_integral, phi_cov, phi_mean};
pub use lm::{fit_weights, fit_weights_with, LmOptions, LmReport};
pub use system::{assemble_residual_system, ExactModel, HjbParams, Knowledge, PointRow, ResidualSystem};

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::augmented::ControlGain;
use crate::error::Result;
use crate::kernel::SpaceTimePoint;
use crate::policy::ControlCost;

/// `v(z)` and `∇_x v(z)`.
pub fn value_and_gradient(
    bank: &FeatureBank,
    weights: &ValueWeights,
    knowledge: &Knowledge,
    s: &SpaceTimePoint,
) -> Result<(f64, Vec<f64>)> {
    weights.check(bank)?;
    let (v, grad, _) = phase_value(bank, weights, s);
    Ok((v + info_value(bank, weights, knowledge)?, grad))
}

/// `∇_x v(z)`. Only phase features depend on `x`.
pub fn value_gradient(bank: &FeatureBank, weights: &ValueWeights, s: &SpaceTimePoint) -> Result<Vec<f64>> {
    weights.check(bank)?;
    Ok(phase_value(bank, weights, s).1)
}

/// Phase part of the value with its spatial gradient and time derivative.
fn phase_value(bank: &FeatureBank, weights: &ValueWeights, s: &SpaceTimePoint) -> (f64, Vec<f64>, f64) {
    let mut v = 0.0;
    let mut grad = vec![0.0; bank.dim()];
    let mut dt = 0.0;
    for (f, w) in bank.phase.iter().zip(&weights.x) {
        if *w == 0.0 {
            continue;
        }
        let e = f.eval(s);
        v += w * e.value;
        dt += w * e.d_t;
        for (g, ge) in grad.iter_mut().zip(&e.grad_x) {
            *g += w * ge;
        }
    }
    (v, grad, dt)
}

/// Belief part of the value. Zero under exact knowledge.
fn info_value(bank: &FeatureBank, weights: &ValueWeights, knowledge: &Knowledge) -> Result<f64> {
    let Some(blocks) = knowledge.prepare(bank)? else {
        return Ok(0.0);
    };
    let mut v = 0.0;
    for (c, blk) in blocks.iter().enumerate() {
        v += blk.cov.iter().zip(&weights.cov[c]).map(|(f, w)| w * f.phi_cov).sum::<f64>();
        v += blk.mean.iter().zip(&weights.mean[c]).map(|(f, w)| w * f.phi_mean).sum::<f64>();
    }
    Ok(v)
}

/// The labelled groups of the HJB right-hand side at one phase point.
///
/// `free_drift` and `control_benefit` are the exploitation terms,
/// `exploration_bonus` and `diffusion_cost` the exploration terms. The
/// exploration bonus and control benefit enter the equation with a negative sign.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TermRecord {
    pub mu_q: f64,
    pub value: f64,
    /// `μ_fᵀ ∇_x v + ∂_t v`.
    pub free_drift: f64,
    /// `½ ∇_x vᵀ g R gᵀ ∇_x v`.
    pub control_benefit: f64,
    /// `λ Σ_c Σ_b w_Σcb J_cb²`.
    pub exploration_bonus: f64,
    /// `λ² Σ_c σ̄_c² Σ_m w_μcm J_cm²`.
    pub diffusion_cost: f64,
}

/// Evaluates the HJB term groups on a grid of locations, each taken as the
/// current sampling location `s_τ`.
pub fn decompose_terms(
    bank: &FeatureBank,
    weights: &ValueWeights,
    knowledge: &Knowledge,
    gain: &dyn ControlGain,
    cost: &ControlCost,
    params: HjbParams,
    grid: &[SpaceTimePoint],
) -> Result<Vec<TermRecord>> {
    use rayon::prelude::*;

    weights.check(bank)?;
    let prepared = knowledge.prepare(bank)?;
    let info = info_value(bank, weights, knowledge)?;
    let lambda = params.rate;
    grid.par_iter()
        .map(|s| {
            let (vp, grad, dt) = phase_value(bank, weights, s);
            let mu_f = knowledge.drift_mean(s);
            let free_drift = mu_f.iter().zip(&grad).map(|(a, b)| a * b).sum::<f64>() + dt;
            let gt = gain.gain(&s.x, s.t).transpose() * DVector::from_column_slice(&grad);
            let control_benefit = 0.5 * cost.quadratic_form(&gt);
            let (mut exploration_bonus, mut diffusion_cost) = (0.0, 0.0);
            if let Some(blocks) = &prepared {
                for (c, blk) in blocks.iter().enumerate() {
                    let at = blk.at(s);
                    exploration_bonus += lambda
                        * at.j_cov.iter().zip(&weights.cov[c]).map(|(j, w)| w * j * j).sum::<f64>();
                    let sb2 = at.scalars.sigma_bar * at.scalars.sigma_bar;
                    diffusion_cost += lambda
                        * lambda
                        * sb2
                        * at.j_mean.iter().zip(&weights.mean[c]).map(|(j, w)| w * j * j).sum::<f64>();
                }
            }
            Ok(TermRecord {
                mu_q: knowledge.loss_mean(s),
                value: vp + info,
                free_drift,
                control_benefit,
                exploration_bonus,
                diffusion_cost,
            })
        })
        .collect()
}
