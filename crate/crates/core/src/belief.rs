//! Gaussian-process beliefs over a scalar function on phase space-time.
//!
//! The posterior is conditioned on `N` noisy observations `y₀` at points `S₀`.
//! `K₀ = K(S₀, S₀) + σ² I` is held as a lower Cholesky factor that is extended by
//! one row per observation, so adding data costs `O(N²)`.
//!
//! Under a Poisson observation stream the belief evolves through the innovation
//! function `L_{s_τ}(s*) = Σ(s*, s_τ) / (Σ(s_τ, s_τ) + σ²)^{1/2}`: one
//! observation at `s_τ` lowers the covariance by exactly `L(sᵢ) L(sⱼ)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::{SpaceTimePoint, SqExpKernel};

/// Relative diagonal jitter used when the observation noise is exactly zero.
pub const NOISELESS_JITTER: f64 = 1e-10;

/// Data-conditioned GP posterior with zero prior mean.
#[derive(Clone, Debug)]
pub struct GPBelief {
    kernel: SqExpKernel,
    noise_std: f64,
    points: Vec<SpaceTimePoint>,
    values: Vec<f64>,
    /// Rows of the lower Cholesky factor of `K₀`; row `i` has `i + 1` entries.
    chol: Vec<Vec<f64>>,
    /// `K₀⁻¹ y₀`.
    alpha: Vec<f64>,
    max_points: Option<usize>,
}

/// The scalars `Σ̄` and `σ̄` at a sampling location.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BeliefScalars {
    /// `σ / (Σ(s_τ, s_τ) + σ²)^{1/2}`.
    pub sigma_bar: f64,
    /// `Σ(s_τ, s_τ) / (Σ(s_τ, s_τ) + σ²)`.
    pub big_sigma_bar: f64,
    /// `Σ(s_τ, s_τ)`.
    pub marginal_var: f64,
}

impl GPBelief {
    pub fn new(kernel: SqExpKernel, noise_std: f64) -> Result<Self> {
        if !(noise_std.is_finite() && noise_std >= 0.0) {
            return Err(Error::param("noise_std", format!("must be finite and >= 0, got {noise_std}")));
        }
        Ok(Self {
            kernel,
            noise_std,
            points: Vec::new(),
            values: Vec::new(),
            chol: Vec::new(),
            alpha: Vec::new(),
            max_points: None,
        })
    }

    /// Caps the number of stored observations; the oldest point is evicted once
    /// the cap is exceeded. This is an approximation: the posterior then forgets
    /// the evicted datum.
    pub fn with_max_points(mut self, max_points: Option<usize>) -> Result<Self> {
        if max_points == Some(0) {
            return Err(Error::param("max_points", "must be at least 1"));
        }
        self.max_points = max_points;
        self.enforce_cap();
        Ok(self)
    }

    /// Builds the posterior for a full data set by successive extension.
    pub fn from_data(
        kernel: SqExpKernel,
        noise_std: f64,
        points: Vec<SpaceTimePoint>,
        values: Vec<f64>,
    ) -> Result<Self> {
        if points.len() != values.len() {
            return Err(Error::DimensionMismatch {
                expected: points.len(),
                got: values.len(),
            });
        }
        let mut b = Self::new(kernel, noise_std)?;
        for (p, y) in points.into_iter().zip(values) {
            b.add_observation(p, y)?;
        }
        Ok(b)
    }

    pub fn kernel(&self) -> &SqExpKernel {
        &self.kernel
    }

    pub fn noise_std(&self) -> f64 {
        self.noise_std
    }

    /// Noise variance actually placed on the Gram diagonal.
    pub fn effective_noise_var(&self) -> f64 {
        if self.noise_std > 0.0 {
            self.noise_std * self.noise_std
        } else {
            NOISELESS_JITTER * self.kernel.variance()
        }
    }

    pub fn points(&self) -> &[SpaceTimePoint] {
        &self.points
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn alpha(&self) -> &[f64] {
        &self.alpha
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn max_points(&self) -> Option<usize> {
        self.max_points
    }

    /// Spatial dimension `D` of the modeled function's domain.
    pub fn dim(&self) -> usize {
        self.kernel.n_axes() - 1
    }

    fn check(&self, s: &SpaceTimePoint) {
        assert_eq!(
            s.dim() + 1,
            self.kernel.n_axes(),
            "point dimension does not match belief kernel"
        );
    }

    /// The lower Cholesky factor of `K₀` as a dense matrix.
    pub fn cholesky_factor(&self) -> nalgebra::DMatrix<f64> {
        let n = self.len();
        nalgebra::DMatrix::from_fn(n, n, |i, j| if j <= i { self.chol[i][j] } else { 0.0 })
    }

    /// `k(S₀, s)`.
    pub fn cross_kernel(&self, s: &SpaceTimePoint) -> Vec<f64> {
        self.check(s);
        self.points.iter().map(|p| self.kernel.k(p, s)).collect()
    }

    /// Solves `L v = b` in place.
    pub fn forward_solve(&self, b: &mut [f64]) {
        debug_assert_eq!(b.len(), self.len());
        for i in 0..b.len() {
            let row = &self.chol[i];
            let mut acc = b[i];
            for j in 0..i {
                acc -= row[j] * b[j];
            }
            b[i] = acc / row[i];
        }
    }

    /// Solves `Lᵀ v = b` in place.
    pub fn backward_solve(&self, b: &mut [f64]) {
        debug_assert_eq!(b.len(), self.len());
        let n = b.len();
        for i in (0..n).rev() {
            let mut acc = b[i];
            for j in i + 1..n {
                acc -= self.chol[j][i] * b[j];
            }
            b[i] = acc / self.chol[i][i];
        }
    }

    /// `K₀⁻¹ b`.
    pub fn solve_k0(&self, b: &[f64]) -> Vec<f64> {
        let mut v = b.to_vec();
        self.forward_solve(&mut v);
        self.backward_solve(&mut v);
        v
    }

    /// `μ(s) = k(s, S₀) K₀⁻¹ y₀`.
    pub fn posterior_mean(&self, s: &SpaceTimePoint) -> f64 {
        self.check(s);
        self.points
            .iter()
            .zip(&self.alpha)
            .map(|(p, a)| a * self.kernel.k(s, p))
            .sum()
    }

    /// `Σ(sᵢ, sⱼ) = k(sᵢ, sⱼ) - k(sᵢ, S₀) K₀⁻¹ k(S₀, sⱼ)`.
    pub fn posterior_cov(&self, si: &SpaceTimePoint, sj: &SpaceTimePoint) -> f64 {
        self.check(si);
        self.check(sj);
        let mut vi = self.cross_kernel(si);
        self.forward_solve(&mut vi);
        if si == sj {
            let reduction: f64 = vi.iter().map(|v| v * v).sum();
            return (self.kernel.variance() - reduction).max(0.0);
        }
        let mut vj = self.cross_kernel(sj);
        self.forward_solve(&mut vj);
        let reduction: f64 = vi.iter().zip(&vj).map(|(a, b)| a * b).sum();
        self.kernel.k(si, sj) - reduction
    }

    /// Posterior variance `Σ(s, s)`, clamped at zero against round-off.
    pub fn posterior_var(&self, s: &SpaceTimePoint) -> f64 {
        self.posterior_cov(s, s)
    }

    /// Posterior variance given the precomputed cross-kernel `ξ = k(S₀, s)`.
    pub fn posterior_var_from_cross(&self, xi: &[f64]) -> f64 {
        let mut v = xi.to_vec();
        self.forward_solve(&mut v);
        (self.kernel.variance() - v.iter().map(|a| a * a).sum::<f64>()).max(0.0)
    }

    /// Conditions on one more observation `y` at `s` by extending the Cholesky
    /// factor with one row.
    pub fn add_observation(&mut self, s: SpaceTimePoint, y: f64) -> Result<()> {
        self.kernel.check_point(&s)?;
        if !y.is_finite() {
            return Err(Error::NonFinite(format!("observation value {y}")));
        }
        if !s.is_finite() {
            return Err(Error::NonFinite("observation location".into()));
        }
        let mut row = self.cross_kernel(&s);
        self.forward_solve(&mut row);
        let kappa = self.kernel.variance() + self.effective_noise_var();
        let d2 = kappa - row.iter().map(|v| v * v).sum::<f64>();
        if !(d2 > 0.0 && d2.is_finite()) {
            return Err(Error::NotPositiveDefinite {
                context: "extended K₀ (duplicate noiseless observation?)",
            });
        }
        row.push(d2.sqrt());
        self.chol.push(row);
        self.points.push(s);
        self.values.push(y);
        self.enforce_cap();
        self.refresh_alpha();
        Ok(())
    }

    /// Functional form of [`GPBelief::add_observation`].
    pub fn with_observation(&self, s: SpaceTimePoint, y: f64) -> Result<Self> {
        let mut b = self.clone();
        b.add_observation(s, y)?;
        Ok(b)
    }

    fn refresh_alpha(&mut self) {
        self.alpha = self.solve_k0(&self.values);
    }

    fn enforce_cap(&mut self) {
        let Some(cap) = self.max_points else { return };
        let mut evicted = false;
        while self.points.len() > cap {
            self.evict_oldest();
            evicted = true;
        }
        if evicted {
            self.refresh_alpha();
        }
    }

    /// Drops the first stored point. With `K₀ = L Lᵀ`, the trailing block of
    /// `K₀` equals `L₂₂ L₂₂ᵀ + l lᵀ` where `l` is the first column below the
    /// diagonal, so the new factor is a rank-1 update of `L₂₂`.
    fn evict_oldest(&mut self) {
        let old = std::mem::take(&mut self.chol);
        let mut x: Vec<f64> = old.iter().skip(1).map(|r| r[0]).collect();
        let mut l: Vec<Vec<f64>> = old.into_iter().skip(1).map(|r| r[1..].to_vec()).collect();
        let n = l.len();
        for k in 0..n {
            let lkk = l[k][k];
            let r = lkk.hypot(x[k]);
            let c = r / lkk;
            let s = x[k] / lkk;
            l[k][k] = r;
            for i in k + 1..n {
                l[i][k] = (l[i][k] + s * x[i]) / c;
                x[i] = c * x[i] - s * l[i][k];
            }
        }
        self.chol = l;
        self.points.remove(0);
        self.values.remove(0);
    }

    /// Innovation function at sampling location `s_τ`, ready to evaluate at
    /// arbitrary probe points.
    pub fn innovation_at(&self, s_tau: &SpaceTimePoint) -> Innovation<'_> {
        self.check(s_tau);
        let xi = self.cross_kernel(s_tau);
        let weights = self.solve_k0(&xi);
        let marginal = self.posterior_var_from_cross(&xi);
        Innovation {
            belief: self,
            s_tau: s_tau.clone(),
            weights,
            scale: 1.0 / (marginal + self.effective_noise_var()).sqrt(),
        }
    }

    /// `L_{s_τ}(s*)`.
    pub fn innovation(&self, s_tau: &SpaceTimePoint, s_star: &SpaceTimePoint) -> f64 {
        self.innovation_at(s_tau).eval(s_star)
    }

    pub fn belief_scalars(&self, s_tau: &SpaceTimePoint) -> BeliefScalars {
        let marginal_var = self.posterior_var(s_tau);
        BeliefScalars::new(marginal_var, self.noise_std)
    }

    /// Covariance change direction `-L_{s_τ}(sᵢ) L_{s_τ}(sⱼ)`; the caller
    /// multiplies by `λ dt`.
    pub fn covariance_decrement_rate(
        &self,
        s_tau: &SpaceTimePoint,
        si: &SpaceTimePoint,
        sj: &SpaceTimePoint,
    ) -> f64 {
        let inn = self.innovation_at(s_tau);
        -inn.eval(si) * inn.eval(sj)
    }

    pub fn to_record(&self) -> BeliefRecord {
        BeliefRecord {
            kernel: self.kernel.clone(),
            noise_std: self.noise_std,
            max_points: self.max_points,
            points: self.points.clone(),
            values: self.values.clone(),
        }
    }

    pub fn from_record(r: BeliefRecord) -> Result<Self> {
        let b = Self::from_data(r.kernel, r.noise_std, r.points, r.values)?;
        b.with_max_points(r.max_points)
    }
}

impl BeliefScalars {
    pub fn new(marginal_var: f64, noise_std: f64) -> Self {
        let total = marginal_var + noise_std * noise_std;
        if total <= 0.0 {
            // Noiseless and fully determined; nothing left to learn.
            return Self {
                sigma_bar: 1.0,
                big_sigma_bar: 0.0,
                marginal_var,
            };
        }
        Self {
            sigma_bar: noise_std / total.sqrt(),
            big_sigma_bar: marginal_var / total,
            marginal_var,
        }
    }
}

/// `L_{s_τ}(·)` for a fixed sampling location.
#[derive(Clone, Debug)]
pub struct Innovation<'a> {
    belief: &'a GPBelief,
    s_tau: SpaceTimePoint,
    /// `K₀⁻¹ ξ_τ`.
    weights: Vec<f64>,
    /// `(Σ(s_τ, s_τ) + σ²)^{-1/2}`.
    scale: f64,
}

impl Innovation<'_> {
    pub fn eval(&self, s_star: &SpaceTimePoint) -> f64 {
        let b = self.belief;
        b.check(s_star);
        let k = &b.kernel;
        let corr: f64 = b
            .points
            .iter()
            .zip(&self.weights)
            .map(|(p, w)| w * k.k(s_star, p))
            .sum();
        (k.k(s_star, &self.s_tau) - corr) * self.scale
    }

    /// `L` as coefficients on kernel functions: `L(s) = c₀ k(s, s_τ) + Σ cₘ k(s, sₘ)`.
    pub fn coefficients(&self) -> (f64, Vec<f64>) {
        (self.scale, self.weights.iter().map(|w| -w * self.scale).collect())
    }

    pub fn s_tau(&self) -> &SpaceTimePoint {
        &self.s_tau
    }

    /// `(Σ(s_τ, s_τ) + σ²)^{-1/2}`.
    pub fn scale(&self) -> f64 {
        self.scale
    }

    /// `K₀⁻¹ ξ_τ`.
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }
}

/// Serializable snapshot of a belief. The factorisation is rebuilt on load.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BeliefRecord {
    pub kernel: SqExpKernel,
    pub noise_std: f64,
    #[serde(default)]
    pub max_points: Option<usize>,
    pub points: Vec<SpaceTimePoint>,
    pub values: Vec<f64>,
}

impl Serialize for GPBelief {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        self.to_record().serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for GPBelief {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let r = BeliefRecord::deserialize(deserializer)?;
        GPBelief::from_record(r).map_err(serde::de::Error::custom)
    }
}
