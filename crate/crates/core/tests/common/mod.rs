//! Shared oracles and fixtures for the integration tests.
#![allow(dead_code)]

use optlearn::belief::GPBelief;
use optlearn::kernel::{SpaceTimePoint, SqExpKernel};
use rand::Rng;

// 15-point Kronrod nodes/weights with the embedded 7-point Gauss rule.
const XK: [f64; 8] = [
    0.991455371120812639206854697526329,
    0.949107912342758524526189684047851,
    0.864864423359769072789712788640926,
    0.741531185599394439863864773280788,
    0.586087235467691130294144845693013,
    0.405845151377397166906606412076961,
    0.207784955007898467600689403773245,
    0.000000000000000000000000000000000,
];
const WK: [f64; 8] = [
    0.022935322010529224963732008058970,
    0.063092092629978553290700663189204,
    0.104790010322250183839876322541518,
    0.140653259715525918745189590510238,
    0.169004726639267902826583426598550,
    0.190350578064785409913256402421014,
    0.204432940075298892414161999234649,
    0.209482141084727828012999174891714,
];
const WG: [f64; 4] = [
    0.129484966168869693270611432679082,
    0.279705391489276667901467771423780,
    0.381830050505118944950369775488975,
    0.417959183673469387755102040816327,
];

fn gk15<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut k = WK[7] * fc;
    let mut g = WG[3] * fc;
    for j in 0..7 {
        let dx = h * XK[j];
        let s = f(c - dx) + f(c + dx);
        k += WK[j] * s;
        if j % 2 == 1 {
            g += WG[j / 2] * s;
        }
    }
    (k * h, ((k - g) * h).abs())
}

/// Adaptive Gauss–Kronrod (7/15) quadrature of `f` on `[a, b]` to relative
/// tolerance `rel_tol` of `∫|f|`, or absolute tolerance `abs_tol`, whichever is looser.
pub fn integrate<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, rel_tol: f64, abs_tol: f64) -> f64 {
    fn rec<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, tol: f64, whole: (f64, f64), depth: u32) -> f64 {
        let (val, err) = whole;
        if err <= tol || depth == 0 {
            return val;
        }
        let m = 0.5 * (a + b);
        let left = gk15(f, a, m);
        let right = gk15(f, m, b);
        rec(f, a, m, 0.5 * tol, left, depth - 1) + rec(f, m, b, 0.5 * tol, right, depth - 1)
    }
    let whole = gk15(f, a, b);
    let scale = integrate_abs_estimate(f, a, b).max(whole.0.abs());
    rec(f, a, b, (rel_tol * scale).max(abs_tol), whole, 20)
}

/// Crude `∫|f|` on a 64-point midpoint grid, used to set the error target.
fn integrate_abs_estimate<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> f64 {
    let h = (b - a) / 64.0;
    (0..64).map(|i| f(a + (i as f64 + 0.5) * h).abs()).sum::<f64>() * h
}

/// Integral over the real line of a function that is negligible outside `[lo, hi]`,
/// split at `breaks` so that every bump is resolved.
pub fn integrate_line<F: Fn(f64) -> f64>(f: &F, lo: f64, hi: f64, breaks: &[f64], rel_tol: f64, abs_tol: f64) -> f64 {
    let mut pts: Vec<f64> = breaks.iter().copied().filter(|b| *b > lo && *b < hi).collect();
    pts.push(lo);
    pts.push(hi);
    pts.sort_by(f64::total_cmp);
    pts.windows(2).map(|w| integrate(f, w[0], w[1], rel_tol, abs_tol)).sum()
}

pub fn rel_err(got: f64, want: f64) -> f64 {
    (got - want).abs() / want.abs().max(f64::MIN_POSITIVE)
}

/// Relative error with an absolute floor for quantities that can vanish.
pub fn rel_err_floor(got: f64, want: f64, scale: f64) -> f64 {
    (got - want).abs() / want.abs().max(scale)
}

/// One-axis point (time only).
pub fn p1(t: f64) -> SpaceTimePoint {
    SpaceTimePoint::new(vec![], t)
}

/// Random one-axis kernel with amplitude in `[0.5, 2]` and length scale in `[0.3, 3]`.
pub fn random_kernel_1d<R: Rng>(rng: &mut R) -> SqExpKernel {
    SqExpKernel::new(rng.random_range(0.5..2.0), &[rng.random_range(0.3..3.0)]).unwrap()
}

/// Random one-axis belief with `1..=max_n` observations spread over `[-4, 4]`.
pub fn random_belief_1d<R: Rng>(rng: &mut R, max_n: usize) -> GPBelief {
    let kernel = random_kernel_1d(rng);
    let noise = rng.random_range(0.05..0.5);
    let n = rng.random_range(1..=max_n);
    let points: Vec<_> = (0..n).map(|_| p1(rng.random_range(-4.0..4.0))).collect();
    let values: Vec<f64> = (0..n).map(|_| rng.random_range(-2.0..2.0)).collect();
    GPBelief::from_data(kernel, noise, points, values).unwrap()
}

/// Integration window that covers every kernel bump of the belief and feature.
pub fn window(centers: &[f64], max_ls: f64) -> (f64, f64) {
    let lo = centers.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = centers.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    (lo - 14.0 * max_ls, hi + 14.0 * max_ls)
}

/// Path to a config file shipped in the workspace `configs/` directory.
pub fn config_path(name: &str) -> std::path::PathBuf {
    std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs").join(name)
}

pub mod criteria;
