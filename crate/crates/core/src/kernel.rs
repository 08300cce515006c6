//! Square-exponential kernels over phase space-time.
//!
//! A point in phase space-time is `s = (x, t)` with `x` in `R^D`. Kernels are
//! `k(a, b) = θ² exp(-½ (a-b)ᵀ S⁻¹ (a-b))` with `S` symmetric positive definite
//! over all `D + 1` coordinates (time is the last axis).
//!
//! Besides pointwise evaluation this module provides the closed-form integral of
//! a product of two such kernels over all of `R^{D+1}`. Every analytic
//! functional of the value Ansatz is assembled from that primitive.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A point `(x, t)` in phase space-time.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpaceTimePoint {
    pub x: Vec<f64>,
    pub t: f64,
}

impl SpaceTimePoint {
    pub fn new(x: Vec<f64>, t: f64) -> Self {
        Self { x, t }
    }

    /// Spatial dimension `D`.
    pub fn dim(&self) -> usize {
        self.x.len()
    }

    /// Coordinate `i` of the concatenated `(x, t)` vector.
    #[inline]
    pub fn coord(&self, i: usize) -> f64 {
        if i < self.x.len() {
            self.x[i]
        } else {
            self.t
        }
    }

    pub fn to_vector(&self) -> DVector<f64> {
        DVector::from_iterator(self.dim() + 1, (0..=self.dim()).map(|i| self.coord(i)))
    }

    pub fn from_vector(v: &DVector<f64>) -> Self {
        let n = v.len();
        Self {
            x: v.rows(0, n - 1).iter().copied().collect(),
            t: v[n - 1],
        }
    }

    pub fn is_finite(&self) -> bool {
        self.t.is_finite() && self.x.iter().all(|v| v.is_finite())
    }
}

#[derive(Clone, Debug, PartialEq)]
enum Metric {
    /// Axis-aligned: stores the diagonal of `S` and its reciprocal.
    Diagonal { ls: Vec<f64>, var: Vec<f64>, inv: Vec<f64> },
    Full { s: DMatrix<f64>, inv: DMatrix<f64> },
}

impl Metric {
    fn n(&self) -> usize {
        match self {
            Metric::Diagonal { var, .. } => var.len(),
            Metric::Full { s, .. } => s.nrows(),
        }
    }

    fn matrix(&self) -> DMatrix<f64> {
        match self {
            Metric::Diagonal { var, .. } => DMatrix::from_diagonal(&DVector::from_column_slice(var)),
            Metric::Full { s, .. } => s.clone(),
        }
    }
}

/// Square-exponential kernel `k_SE(a, b; θ, S)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "KernelRecord", into = "KernelRecord")]
pub struct SqExpKernel {
    amplitude: f64,
    metric: Metric,
}

#[derive(Serialize, Deserialize)]
struct KernelRecord {
    amplitude: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    length_scales: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    metric: Option<Vec<Vec<f64>>>,
}

impl From<SqExpKernel> for KernelRecord {
    fn from(k: SqExpKernel) -> Self {
        match k.metric {
            Metric::Diagonal { ls, .. } => KernelRecord {
                amplitude: k.amplitude,
                length_scales: Some(ls),
                metric: None,
            },
            Metric::Full { s, .. } => KernelRecord {
                amplitude: k.amplitude,
                length_scales: None,
                metric: Some(s.row_iter().map(|r| r.iter().copied().collect()).collect()),
            },
        }
    }
}

impl TryFrom<KernelRecord> for SqExpKernel {
    type Error = Error;

    fn try_from(r: KernelRecord) -> Result<Self> {
        match (r.length_scales, r.metric) {
            (Some(ls), None) => SqExpKernel::new(r.amplitude, &ls),
            (None, Some(rows)) => {
                let n = rows.len();
                if rows.iter().any(|row| row.len() != n) {
                    return Err(Error::param("metric", "must be square"));
                }
                let s = DMatrix::from_fn(n, n, |i, j| rows[i][j]);
                SqExpKernel::with_metric(r.amplitude, s)
            }
            _ => Err(Error::param(
                "kernel",
                "exactly one of `length_scales` or `metric` is required",
            )),
        }
    }
}

impl SqExpKernel {
    /// Axis-aligned kernel with amplitude `θ` and one length scale per axis of
    /// `(x, t)`, so that `S = diag(ℓ²)`.
    pub fn new(amplitude: f64, length_scales: &[f64]) -> Result<Self> {
        check_amplitude(amplitude)?;
        if length_scales.is_empty() {
            return Err(Error::param("length_scales", "need at least one axis"));
        }
        if let Some(l) = length_scales.iter().find(|l| !(l.is_finite() && **l > 0.0)) {
            return Err(Error::param(
                "length_scales",
                format!("must be finite and positive, got {l}"),
            ));
        }
        let var: Vec<f64> = length_scales.iter().map(|l| l * l).collect();
        let inv = var.iter().map(|v| 1.0 / v).collect();
        Ok(Self {
            amplitude,
            metric: Metric::Diagonal {
                ls: length_scales.to_vec(),
                var,
                inv,
            },
        })
    }

    /// Kernel with a full symmetric positive-definite metric `S`.
    pub(crate) fn with_metric(amplitude: f64, s: DMatrix<f64>) -> Result<Self> {
        check_amplitude(amplitude)?;
        if !s.is_square() || s.nrows() == 0 {
            return Err(Error::param("metric", "must be a non-empty square matrix"));
        }
        if (&s - s.transpose()).amax() > 1e-12 * s.amax() {
            return Err(Error::param("metric", "must be symmetric"));
        }
        let chol = s
            .clone()
            .cholesky()
            .ok_or(Error::NotPositiveDefinite { context: "kernel metric" })?;
        let inv = chol.inverse();
        Ok(Self {
            amplitude,
            metric: Metric::Full { s, inv },
        })
    }

    pub fn amplitude(&self) -> f64 {
        self.amplitude
    }

    /// Number of axes `D + 1`.
    pub fn n_axes(&self) -> usize {
        self.metric.n()
    }

    /// The metric `S` as a dense matrix.
    pub fn metric(&self) -> DMatrix<f64> {
        self.metric.matrix()
    }

    /// Per-axis length scales `sqrt(S_ii)`.
    pub fn length_scales(&self) -> Vec<f64> {
        match &self.metric {
            Metric::Diagonal { ls, .. } => ls.clone(),
            Metric::Full { s, .. } => s.diagonal().iter().map(|v| v.sqrt()).collect(),
        }
    }

    /// `θ²`, the prior variance.
    pub fn variance(&self) -> f64 {
        self.amplitude * self.amplitude
    }

    pub fn with_amplitude(&self, amplitude: f64) -> Result<Self> {
        check_amplitude(amplitude)?;
        Ok(Self {
            amplitude,
            metric: self.metric.clone(),
        })
    }

    pub fn check_point(&self, s: &SpaceTimePoint) -> Result<()> {
        if s.dim() + 1 != self.n_axes() {
            return Err(Error::DimensionMismatch {
                expected: self.n_axes(),
                got: s.dim() + 1,
            });
        }
        Ok(())
    }

    /// `(a-b)ᵀ S⁻¹ (a-b)`.
    #[inline]
    fn mahalanobis(&self, a: &SpaceTimePoint, b: &SpaceTimePoint) -> f64 {
        match &self.metric {
            Metric::Diagonal { inv, .. } => inv
                .iter()
                .enumerate()
                .map(|(i, w)| {
                    let d = a.coord(i) - b.coord(i);
                    d * d * w
                })
                .sum(),
            Metric::Full { inv, .. } => {
                let n = inv.nrows();
                let d: Vec<f64> = (0..n).map(|i| a.coord(i) - b.coord(i)).collect();
                let mut acc = 0.0;
                for i in 0..n {
                    for j in 0..n {
                        acc += d[i] * inv[(i, j)] * d[j];
                    }
                }
                acc
            }
        }
    }

    /// Kernel value `θ² exp(-½ (a-b)ᵀ S⁻¹ (a-b))`.
    pub fn eval(&self, a: &SpaceTimePoint, b: &SpaceTimePoint) -> Result<f64> {
        self.check_point(a)?;
        self.check_point(b)?;
        Ok(self.k(a, b))
    }

    /// Unchecked evaluation for callers that validated dimensions upfront.
    #[inline]
    pub(crate) fn k(&self, a: &SpaceTimePoint, b: &SpaceTimePoint) -> f64 {
        debug_assert_eq!(a.dim() + 1, self.n_axes());
        debug_assert_eq!(b.dim() + 1, self.n_axes());
        self.variance() * (-0.5 * self.mahalanobis(a, b)).exp()
    }

    /// Value and gradient with respect to the first argument, over all `D + 1`
    /// axes: `∇_a k = -k S⁻¹ (a - b)`.
    pub fn eval_with_gradient(&self, a: &SpaceTimePoint, b: &SpaceTimePoint) -> Result<(f64, Vec<f64>)> {
        self.check_point(a)?;
        self.check_point(b)?;
        let k = self.k(a, b);
        let n = self.n_axes();
        let d: Vec<f64> = (0..n).map(|i| a.coord(i) - b.coord(i)).collect();
        let grad = match &self.metric {
            Metric::Diagonal { inv, .. } => d.iter().zip(inv).map(|(di, w)| -k * di * w).collect(),
            Metric::Full { inv, .. } => (0..n)
                .map(|i| -k * (0..n).map(|j| inv[(i, j)] * d[j]).sum::<f64>())
                .collect(),
        };
        Ok((k, grad))
    }

    /// Gram matrix `K₀ = K(S₀, S₀) + σ² I`.
    pub fn gram(&self, points: &[SpaceTimePoint], noise_var: f64) -> Result<DMatrix<f64>> {
        if !(noise_var >= 0.0) {
            return Err(Error::param("noise_var", "must be non-negative"));
        }
        for p in points {
            self.check_point(p)?;
        }
        let n = points.len();
        let mut g = DMatrix::zeros(n, n);
        for i in 0..n {
            g[(i, i)] = self.variance() + noise_var;
            for j in 0..i {
                let v = self.k(&points[i], &points[j]);
                g[(i, j)] = v;
                g[(j, i)] = v;
            }
        }
        Ok(g)
    }
}

fn check_amplitude(amplitude: f64) -> Result<()> {
    if !(amplitude.is_finite() && amplitude > 0.0) {
        return Err(Error::param(
            "amplitude",
            format!("must be finite and positive, got {amplitude}"),
        ));
    }
    Ok(())
}

/// `∫ k₁(s, a) k₂(s, b) ds` over all of `R^{D+1}`.
///
/// Writing each factor as an unnormalised Gaussian density,
/// `exp(-½ (s-a)ᵀ S⁻¹ (s-a)) = (2π)^{n/2} |S|^{1/2} N(s; a, S)`, the integral of
/// the product of two densities is `N(a; b, S₁ + S₂)`. Hence
///
/// `θ₁² θ₂² (2π)^{n/2} |S₁|^{1/2} |S₂|^{1/2} |S₁+S₂|^{-1/2} exp(-½ dᵀ (S₁+S₂)⁻¹ d)`
///
/// with `d = a - b` and `n = D + 1`.
pub fn product_integral(
    k1: &SqExpKernel,
    a: &SpaceTimePoint,
    k2: &SqExpKernel,
    b: &SpaceTimePoint,
) -> Result<f64> {
    if k1.n_axes() != k2.n_axes() {
        return Err(Error::DimensionMismatch {
            expected: k1.n_axes(),
            got: k2.n_axes(),
        });
    }
    k1.check_point(a)?;
    k2.check_point(b)?;
    match (&k1.metric, &k2.metric) {
        (Metric::Diagonal { var: v1, .. }, Metric::Diagonal { var: v2, .. }) => {
            Ok(diagonal_product_integral(k1.variance() * k2.variance(), v1, a, v2, b))
        }
        _ => full_product_integral(k1, a, k2, b),
    }
}

/// Diagonal fast path; the integral factorises over axes.
#[inline]
pub(crate) fn diagonal_product_integral(
    amp2: f64,
    v1: &[f64],
    a: &SpaceTimePoint,
    v2: &[f64],
    b: &SpaceTimePoint,
) -> f64 {
    let mut pref = amp2;
    let mut quad = 0.0;
    for i in 0..v1.len() {
        let sum = v1[i] + v2[i];
        pref *= (std::f64::consts::TAU * v1[i] * v2[i] / sum).sqrt();
        let d = a.coord(i) - b.coord(i);
        quad += d * d / sum;
    }
    pref * (-0.5 * quad).exp()
}

fn full_product_integral(
    k1: &SqExpKernel,
    a: &SpaceTimePoint,
    k2: &SqExpKernel,
    b: &SpaceTimePoint,
) -> Result<f64> {
    let n = k1.n_axes();
    let s1 = k1.metric();
    let s2 = k2.metric();
    let sum = &s1 + &s2;
    let chol_sum = sum
        .clone()
        .cholesky()
        .ok_or(Error::NotPositiveDefinite { context: "S₁ + S₂" })?;
    let det = |m: &DMatrix<f64>| -> Result<f64> {
        Ok(m.clone()
            .cholesky()
            .ok_or(Error::NotPositiveDefinite { context: "kernel metric" })?
            .determinant())
    };
    let d = a.to_vector() - b.to_vector();
    let quad = d.dot(&chol_sum.solve(&d));
    let pref = k1.variance()
        * k2.variance()
        * std::f64::consts::TAU.powf(n as f64 / 2.0)
        * (det(&s1)? * det(&s2)? / chol_sum.determinant()).sqrt();
    Ok(pref * (-0.5 * quad).exp())
}

/// Diagonal metric variances, when the kernel is axis-aligned.
pub(crate) fn diagonal_variances(k: &SqExpKernel) -> Option<&[f64]> {
    match &k.metric {
        Metric::Diagonal { var, .. } => Some(var),
        Metric::Full { .. } => None,
    }
}

/// Product integral of a kernel against a fixed second kernel and center, with
/// the pairing checked once.
pub(crate) struct ProductIntegrator<'a> {
    k1: &'a SqExpKernel,
    k2: &'a SqExpKernel,
    b: &'a SpaceTimePoint,
    diag: Option<(&'a [f64], &'a [f64])>,
}

impl<'a> ProductIntegrator<'a> {
    pub(crate) fn new(k1: &'a SqExpKernel, k2: &'a SqExpKernel, b: &'a SpaceTimePoint) -> Result<Self> {
        if k1.n_axes() != k2.n_axes() {
            return Err(Error::DimensionMismatch {
                expected: k1.n_axes(),
                got: k2.n_axes(),
            });
        }
        k2.check_point(b)?;
        let diag = diagonal_variances(k1).zip(diagonal_variances(k2));
        Ok(Self { k1, k2, b, diag })
    }

    /// `∫ k₁(s, a) k₂(s, b) ds`.
    pub(crate) fn at(&self, a: &SpaceTimePoint) -> f64 {
        match self.diag {
            Some((v1, v2)) => diagonal_product_integral(self.k1.variance() * self.k2.variance(), v1, a, v2, self.b),
            None => full_product_integral(self.k1, a, self.k2, self.b).expect("validated metrics"),
        }
    }
}
