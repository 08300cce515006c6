//! Closed forms of the belief functionals.
//!
//! With SE kernels every integral reduces to weighted sums of
//! [`product_integral`](crate::kernel::product_integral) values. For a belief
//! with kernel `k`, data `S₀` and a weighting feature `k_b(·, s_b)`, write
//! `Iₘ = ∫ k(s, sₘ) k_b(s, s_b) ds`. Then
//!
//! * `φ_Σ = ∬ [Σ(sᵢ, sⱼ) - k(sᵢ, sⱼ)] k_b(sᵢ) k_b(sⱼ) = -Iᵀ K₀⁻¹ I`
//! * `φ_μ = (∫ μ(s) k_b(s) ds)² = (αᵀ I)²`
//! * `J(s_τ) = ∫ L_{s_τ}(s) k_b(s) ds = [P(s_τ) - ξ(s_τ)ᵀ K₀⁻¹ I] / (Σ(s_τ, s_τ) + σ²)^{1/2}`
//!
//! where `P(s_τ) = ∫ k(s, s_τ) k_b(s) ds`. The contractions of `L Lᵀ` with the
//! first derivative of `φ_Σ` and the second derivative of `φ_μ` are `J²` and
//! `2 J²` respectively.

use crate::belief::{BeliefScalars, GPBelief};
use crate::error::Result;
use crate::kernel::{ProductIntegrator, SpaceTimePoint};

use super::features::{InfoBlock, InfoFeature};

fn integrals<'a>(belief: &'a GPBelief, feature: &'a InfoFeature) -> Result<(ProductIntegrator<'a>, Vec<f64>)> {
    let integ = ProductIntegrator::new(belief.kernel(), &feature.kernel, &feature.center)?;
    let i_vec = belief.points().iter().map(|p| integ.at(p)).collect();
    Ok((integ, i_vec))
}

/// `φ_Σ` for one weighting feature. Always `≤ 0`.
pub fn phi_cov(feature: &InfoFeature, belief: &GPBelief) -> Result<f64> {
    let (_, i_vec) = integrals(belief, feature)?;
    let beta = belief.solve_k0(&i_vec);
    Ok(-dot(&i_vec, &beta))
}

/// `φ_μ` for one weighting feature. Always `≥ 0`.
pub fn phi_mean(feature: &InfoFeature, belief: &GPBelief) -> Result<f64> {
    let (_, i_vec) = integrals(belief, feature)?;
    let m = dot(belief.alpha(), &i_vec);
    Ok(m * m)
}

/// `J = ∫ L_{s_τ}(s) k_b(s, s_b) ds`.
pub fn innovation_feature_integral(
    belief: &GPBelief,
    s_tau: &SpaceTimePoint,
    feature: &InfoFeature,
) -> Result<f64> {
    let prepared = PreparedFeature::new(belief, feature)?;
    let at = BeliefPoint::new(belief, s_tau);
    Ok(prepared.innovation_integral(&at))
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Per-feature quantities that do not depend on the sampling location.
pub struct PreparedFeature<'a> {
    integ: ProductIntegrator<'a>,
    /// `K₀⁻¹ I`.
    beta: Vec<f64>,
    pub phi_cov: f64,
    pub phi_mean: f64,
}

impl<'a> PreparedFeature<'a> {
    pub fn new(belief: &'a GPBelief, feature: &'a InfoFeature) -> Result<Self> {
        let (integ, i_vec) = integrals(belief, feature)?;
        let beta = belief.solve_k0(&i_vec);
        let phi_cov = -dot(&i_vec, &beta);
        let m = dot(belief.alpha(), &i_vec);
        Ok(Self {
            integ,
            beta,
            phi_cov,
            phi_mean: m * m,
        })
    }

    pub fn innovation_integral(&self, at: &BeliefPoint) -> f64 {
        (self.integ.at(&at.s_tau) - dot(&at.xi, &self.beta)) * at.scale
    }
}

/// Location-dependent quantities of a belief at `s_τ`.
pub struct BeliefPoint {
    s_tau: SpaceTimePoint,
    /// `k(S₀, s_τ)`.
    xi: Vec<f64>,
    /// `(Σ(s_τ, s_τ) + σ²)^{-1/2}` with the effective (jittered) noise.
    scale: f64,
    pub scalars: BeliefScalars,
}

impl BeliefPoint {
    pub fn new(belief: &GPBelief, s_tau: &SpaceTimePoint) -> Self {
        let xi = belief.cross_kernel(s_tau);
        let marginal = belief.posterior_var_from_cross(&xi);
        Self {
            s_tau: s_tau.clone(),
            xi,
            scale: 1.0 / (marginal + belief.effective_noise_var()).sqrt(),
            scalars: BeliefScalars::new(marginal, belief.noise_std()),
        }
    }
}

/// All functionals of one learned function, prepared once per refit.
pub struct PreparedBlock<'a> {
    belief: &'a GPBelief,
    pub cov: Vec<PreparedFeature<'a>>,
    pub mean: Vec<PreparedFeature<'a>>,
}

/// `J` values and `σ̄` for one block at one sampling location.
#[derive(Clone, Debug, PartialEq)]
pub struct BlockAtPoint {
    pub j_cov: Vec<f64>,
    pub j_mean: Vec<f64>,
    pub scalars: BeliefScalars,
}

impl<'a> PreparedBlock<'a> {
    pub fn new(belief: &'a GPBelief, block: &'a InfoBlock) -> Result<Self> {
        Ok(Self {
            belief,
            cov: block
                .cov
                .iter()
                .map(|f| PreparedFeature::new(belief, f))
                .collect::<Result<_>>()?,
            mean: block
                .mean
                .iter()
                .map(|f| PreparedFeature::new(belief, f))
                .collect::<Result<_>>()?,
        })
    }

    pub fn at(&self, s_tau: &SpaceTimePoint) -> BlockAtPoint {
        let at = BeliefPoint::new(self.belief, s_tau);
        BlockAtPoint {
            j_cov: self.cov.iter().map(|f| f.innovation_integral(&at)).collect(),
            j_mean: self.mean.iter().map(|f| f.innovation_integral(&at)).collect(),
            scalars: at.scalars,
        }
    }

    pub fn belief(&self) -> &GPBelief {
        self.belief
    }
}
