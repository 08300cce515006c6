//! The belief-augmented state `z = (x, t, beliefs over q and f₁..f_D)` and the
//! drift of its dynamics under the zero-uncertainty-sample approximation.
//!
//! Only the free drift `A` and controlled drift `B u` are represented. The
//! covariance entries of `A` are functions over pairs of space-time points; they
//! are evaluated lazily through the innovation function rather than stored.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::belief::GPBelief;
use crate::error::{Error, Result};
use crate::kernel::SpaceTimePoint;

/// Known control gain `g(x, t)`, a `D × U` matrix.
pub trait ControlGain: Send + Sync {
    fn state_dim(&self) -> usize;
    fn control_dim(&self) -> usize;
    fn gain(&self, x: &[f64], t: f64) -> DMatrix<f64>;
}

/// `g ≡ I`.
#[derive(Clone, Copy, Debug)]
pub struct IdentityGain {
    pub dim: usize,
}

impl ControlGain for IdentityGain {
    fn state_dim(&self) -> usize {
        self.dim
    }

    fn control_dim(&self) -> usize {
        self.dim
    }

    fn gain(&self, _x: &[f64], _t: f64) -> DMatrix<f64> {
        DMatrix::identity(self.dim, self.dim)
    }
}

/// Which unknown function an observation belongs to.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Target {
    Loss,
    Dynamics(usize),
}

/// A noisy sample of `q` or `f_d` at a space-time point.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub target: Target,
    pub point: SpaceTimePoint,
    pub value: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct AugmentedState {
    pub x: Vec<f64>,
    pub t: f64,
    pub belief_q: GPBelief,
    pub belief_f: Vec<GPBelief>,
}

/// Free drift of the augmented state at its current location.
#[derive(Clone, Debug, PartialEq)]
pub struct DriftEvaluation {
    /// `μ_f(x, t)`.
    pub x_drift: DVector<f64>,
    /// `dt/dt`, always 1.
    pub t_drift: f64,
    /// Sampling rate `λ` scaling the `-L Lᵀ` covariance decrements.
    pub cov_decrement_scale: f64,
}

impl AugmentedState {
    pub fn new(x: Vec<f64>, t: f64, belief_q: GPBelief, belief_f: Vec<GPBelief>) -> Result<Self> {
        let d = x.len();
        if belief_f.len() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                got: belief_f.len(),
            });
        }
        for b in std::iter::once(&belief_q).chain(&belief_f) {
            if b.dim() != d {
                return Err(Error::DimensionMismatch {
                    expected: d,
                    got: b.dim(),
                });
            }
        }
        Ok(Self { x, t, belief_q, belief_f })
    }

    pub fn dim(&self) -> usize {
        self.x.len()
    }

    /// The current phase space-time location `s_τ = (x, t)`.
    pub fn location(&self) -> SpaceTimePoint {
        SpaceTimePoint::new(self.x.clone(), self.t)
    }

    pub fn belief(&self, target: Target) -> Result<&GPBelief> {
        match target {
            Target::Loss => Ok(&self.belief_q),
            Target::Dynamics(d) => self.belief_f.get(d).ok_or(Error::DimensionMismatch {
                expected: self.dim(),
                got: d + 1,
            }),
        }
    }

    fn belief_mut(&mut self, target: Target) -> Result<&mut GPBelief> {
        let d = self.dim();
        match target {
            Target::Loss => Ok(&mut self.belief_q),
            Target::Dynamics(i) => self
                .belief_f
                .get_mut(i)
                .ok_or(Error::DimensionMismatch { expected: d, got: i + 1 }),
        }
    }

    /// Posterior mean of the free dynamics at an arbitrary point.
    pub fn mean_dynamics(&self, s: &SpaceTimePoint) -> DVector<f64> {
        DVector::from_iterator(self.dim(), self.belief_f.iter().map(|b| b.posterior_mean(s)))
    }

    pub fn drift(&self, rate: f64) -> DriftEvaluation {
        DriftEvaluation {
            x_drift: self.mean_dynamics(&self.location()),
            t_drift: 1.0,
            cov_decrement_scale: rate,
        }
    }

    /// Rate of change of `Σ_target(sᵢ, sⱼ)` under the free drift,
    /// `-λ L(sᵢ) L(sⱼ)` with `s_τ` the current location.
    pub fn covariance_rate(
        &self,
        target: Target,
        rate: f64,
        si: &SpaceTimePoint,
        sj: &SpaceTimePoint,
    ) -> Result<f64> {
        Ok(rate * self.belief(target)?.covariance_decrement_rate(&self.location(), si, sj))
    }

    /// Planning drift `μ_f(x, t) + g(x, t) u`.
    pub fn controlled_drift(&self, u: &DVector<f64>, gain: &dyn ControlGain) -> Result<DVector<f64>> {
        if u.len() != gain.control_dim() {
            return Err(Error::DimensionMismatch {
                expected: gain.control_dim(),
                got: u.len(),
            });
        }
        if gain.state_dim() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: gain.state_dim(),
            });
        }
        let g = gain.gain(&self.x, self.t);
        Ok(self.mean_dynamics(&self.location()) + g * u)
    }

    /// Conditions the matching belief on each observation, in order.
    pub fn advance_beliefs(&mut self, events: &[Observation]) -> Result<()> {
        for ev in events {
            self.belief_mut(ev.target)?
                .add_observation(ev.point.clone(), ev.value)?;
        }
        Ok(())
    }

    /// Total number of stored observations across all beliefs.
    pub fn n_observations(&self) -> usize {
        self.belief_q.len() + self.belief_f.iter().map(GPBelief::len).sum::<usize>()
    }
}
