//! Comparison controllers: ε-greedy SARSA(λ) with linear features, and the
//! full-information planner that sees the true `q` and `f`.

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::env::World;
use crate::error::{Error, Result};
use crate::kernel::SpaceTimePoint;
use crate::policy::{control_from_gradient, saturate, ControlCost};
use crate::value::{
    assemble_residual_system, fit_weights_with, value_gradient, FeatureBank, HjbParams, Knowledge, LmOptions,
    LmReport, ValueWeights,
};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TdParams {
    /// Step size `α`.
    pub alpha: f64,
    /// Trace decay `λ_td`.
    pub lambda_td: f64,
    /// Initial exploration probability.
    pub epsilon: f64,
    /// Multiplicative decay of `ε` per step.
    pub epsilon_decay: f64,
    /// Per-step discount `γ_td`.
    pub discount: f64,
}

impl TdParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return Err(Error::param("td_alpha", "must be positive"));
        }
        if !(0.0..=1.0).contains(&self.lambda_td) {
            return Err(Error::param("td_lambda", "must lie in [0, 1]"));
        }
        if !(0.0..=1.0).contains(&self.epsilon) {
            return Err(Error::param("td_epsilon", "must lie in [0, 1]"));
        }
        if !(0.0..=1.0).contains(&self.epsilon_decay) {
            return Err(Error::param("td_epsilon_decay", "must lie in [0, 1]"));
        }
        if !(0.0..=1.0).contains(&self.discount) {
            return Err(Error::param("discount", "must lie in [0, 1]"));
        }
        Ok(())
    }
}

/// `n` evenly spaced torques spanning `[-u_max, u_max]`.
pub fn action_set(u_max: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![0.0],
        _ => (0..n).map(|i| -u_max + 2.0 * u_max * i as f64 / (n - 1) as f64).collect(),
    }
}

/// Linear action-value learner minimising discounted losses.
///
/// `Q(s, a) = w_aᵀ φ(s)` with one weight block per discrete action.
#[derive(Clone, Debug)]
pub struct TDAgent {
    params: TdParams,
    actions: Vec<f64>,
    n_features: usize,
    weights: Vec<f64>,
    trace: Vec<f64>,
    epsilon: f64,
    rng: ChaCha8Rng,
}

impl TDAgent {
    pub fn new(n_features: usize, actions: Vec<f64>, params: TdParams, rng: ChaCha8Rng) -> Result<Self> {
        params.validate()?;
        if actions.is_empty() || n_features == 0 {
            return Err(Error::param("td", "need at least one action and one feature"));
        }
        let n = n_features * actions.len();
        Ok(Self {
            epsilon: params.epsilon,
            params,
            actions,
            n_features,
            weights: vec![0.0; n],
            trace: vec![0.0; n],
            rng,
        })
    }

    pub fn actions(&self) -> &[f64] {
        &self.actions
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn trace(&self) -> &[f64] {
        &self.trace
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    fn block(&self, a: usize) -> std::ops::Range<usize> {
        a * self.n_features..(a + 1) * self.n_features
    }

    pub fn q(&self, phi: &[f64], a: usize) -> f64 {
        self.weights[self.block(a)].iter().zip(phi).map(|(w, p)| w * p).sum()
    }

    /// Action with the lowest estimated discounted loss; ties go to the lower index.
    pub fn greedy(&self, phi: &[f64]) -> usize {
        let mut best = 0;
        let mut best_q = self.q(phi, 0);
        for a in 1..self.actions.len() {
            let q = self.q(phi, a);
            if q < best_q {
                best = a;
                best_q = q;
            }
        }
        best
    }

    /// ε-greedy choice.
    pub fn select(&mut self, phi: &[f64]) -> usize {
        if self.rng.random::<f64>() < self.epsilon {
            self.rng.random_range(0..self.actions.len())
        } else {
            self.greedy(phi)
        }
    }

    /// One SARSA(λ) update for `(s, a, loss, s', a')`; returns the TD error.
    pub fn td_step(&mut self, phi: &[f64], a: usize, loss: f64, phi_next: &[f64], a_next: usize) -> Result<f64> {
        if phi.len() != self.n_features || phi_next.len() != self.n_features {
            return Err(Error::DimensionMismatch {
                expected: self.n_features,
                got: phi.len().min(phi_next.len()),
            });
        }
        if !(loss.is_finite() && phi.iter().chain(phi_next).all(|v| v.is_finite())) {
            return Err(Error::NonFinite("td transition".into()));
        }
        let delta = loss + self.params.discount * self.q(phi_next, a_next) - self.q(phi, a);
        let decay = self.params.discount * self.params.lambda_td;
        for e in &mut self.trace {
            *e *= decay;
        }
        let r = self.block(a);
        for (e, p) in self.trace[r].iter_mut().zip(phi) {
            *e += p;
        }
        let step = self.params.alpha * delta;
        for (w, e) in self.weights.iter_mut().zip(&self.trace) {
            *w += step * e;
        }
        self.epsilon *= self.params.epsilon_decay;
        Ok(delta)
    }
}

/// Refits the value under exact knowledge of the world.
#[allow(clippy::too_many_arguments)]
pub fn fit_full_info(
    world: &dyn World,
    bank: &FeatureBank,
    points: &[SpaceTimePoint],
    cost: &ControlCost,
    params: HjbParams,
    w_init: &ValueWeights,
    opts: &LmOptions,
) -> Result<(ValueWeights, LmReport)> {
    let sys = assemble_residual_system(bank, &Knowledge::Exact(world), points, world, cost, params)?;
    fit_weights_with(&sys, w_init, opts)
}

/// Control of the full-information planner at `(x, t)`.
pub fn full_info_control(
    world: &dyn World,
    x: &[f64],
    t: f64,
    bank: &FeatureBank,
    weights: &ValueWeights,
    cost: &ControlCost,
    u_max: Option<f64>,
) -> Result<DVector<f64>> {
    let grad = value_gradient(bank, weights, &SpaceTimePoint::new(x.to_vec(), t))?;
    let mut u = control_from_gradient(&grad, x, t, world, cost);
    saturate(&mut u, u_max);
    Ok(u)
}

/// A seeded generator on a dedicated stream.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}
