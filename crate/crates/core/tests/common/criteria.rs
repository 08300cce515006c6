//! Checks behind the acceptance suite. Each returns a one-line summary on
//! success and a diagnostic on failure.

use std::cell::Cell;
use std::sync::OnceLock;
use std::time::{Duration, Instant};

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use optlearn::augmented::ControlGain;
use optlearn::belief::GPBelief;
use optlearn::harness::{
    aggregate, emit_fields, run_episode, ExperimentConfig, Method, MethodSummary, RunMeta, RunTrace,
};
use optlearn::kernel::{product_integral, SpaceTimePoint, SqExpKernel};
use optlearn::policy::{control_from_gradient, ControlCost};
use optlearn::value::{
    assemble_residual_system, innovation_feature_integral, phi_cov, phi_mean, value_and_gradient,
    value_gradient, BankLayout, FeatureBank, HjbParams, InfoFeature, Knowledge, PhaseLayout, Region,
    ValueWeights,
};
use proptest::prelude::*;
use proptest::test_runner::{Config, RngAlgorithm, TestRng, TestRunner};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::{config_path, integrate_line, p1, random_belief_1d, random_kernel_1d, rel_err, window};

pub type Outcome = Result<String, String>;

fn runner(cases: u32) -> TestRunner {
    TestRunner::new_with_rng(
        Config {
            cases,
            failure_persistence: None,
            ..Config::default()
        },
        TestRng::deterministic_rng(RngAlgorithm::ChaCha),
    )
}

// ---------------------------------------------------------------------------
// GP algebra

/// Direct SE kernel, independent of the library implementation.
fn se(amp: f64, ls: &[f64], a: &[f64], b: &[f64]) -> f64 {
    let d2: f64 = a.iter().zip(b).zip(ls).map(|((x, y), l)| ((x - y) / l).powi(2)).sum();
    amp * amp * (-0.5 * d2).exp()
}

fn coords(s: &SpaceTimePoint) -> Vec<f64> {
    let mut c = s.x.clone();
    c.push(s.t);
    c
}

fn point(c: &[f64]) -> SpaceTimePoint {
    SpaceTimePoint::new(c[..c.len() - 1].to_vec(), c[c.len() - 1])
}

#[derive(Clone, Debug)]
struct GpCase {
    axes: usize,
    amp: f64,
    ls: Vec<f64>,
    noise: f64,
    pts: Vec<Vec<f64>>,
    ys: Vec<f64>,
    cap: usize,
    probes: Vec<Vec<f64>>,
}

fn gp_case() -> impl Strategy<Value = GpCase> {
    (1usize..=3, 1usize..=12).prop_flat_map(|(axes, n)| {
        (
            0.5f64..2.0,
            prop::collection::vec(0.5f64..3.0, axes),
            0.01f64..0.5,
            prop::collection::vec(prop::collection::vec(-3.0f64..3.0, axes), n),
            prop::collection::vec(-2.0f64..2.0, n),
            1usize..=n,
            prop::collection::vec(prop::collection::vec(-4.0f64..4.0, axes), 3),
        )
            .prop_map(move |(amp, ls, noise, pts, ys, cap, probes)| GpCase {
                axes,
                amp,
                ls,
                noise,
                pts,
                ys,
                cap,
                probes,
            })
    })
}

fn build(case: &GpCase, cap: Option<usize>) -> GPBelief {
    let k = SqExpKernel::new(case.amp, &case.ls).unwrap();
    let mut b = GPBelief::new(k, case.noise).unwrap().with_max_points(cap).unwrap();
    for (p, y) in case.pts.iter().zip(&case.ys) {
        b.add_observation(point(p), *y).unwrap();
    }
    b
}

/// Posterior mean and variance from a dense recompute on `pts`.
fn recompute(case: &GpCase, pts: &[Vec<f64>], ys: &[f64], probe: &[f64]) -> (f64, f64) {
    let n = pts.len();
    let k = DMatrix::from_fn(n, n, |i, j| {
        se(case.amp, &case.ls, &pts[i], &pts[j]) + if i == j { case.noise * case.noise } else { 0.0 }
    });
    let chol = k.cholesky().expect("SPD gram");
    let kx = DVector::from_fn(n, |i, _| se(case.amp, &case.ls, &pts[i], probe));
    let alpha = chol.solve(&DVector::from_column_slice(ys));
    let v = chol.solve(&kx);
    (kx.dot(&alpha), case.amp * case.amp - kx.dot(&v))
}

fn rank_one_matches_recompute() -> std::result::Result<f64, String> {
    let worst = Cell::new(0.0f64);
    let mut r = runner(200);
    r.run(&gp_case(), |case| {
        assert_eq!(case.axes, case.ls.len());
        for cap in [None, Some(case.cap)] {
            let b = build(&case, cap);
            let keep = cap.unwrap_or(case.pts.len()).min(case.pts.len());
            let start = case.pts.len() - keep;
            let (pts, ys) = (&case.pts[start..], &case.ys[start..]);
            let yscale = ys.iter().fold(1e-3f64, |m, y| m.max(y.abs()));
            for probe in &case.probes {
                let (m_ref, v_ref) = recompute(&case, pts, ys, probe);
                let s = point(probe);
                let em = (b.posterior_mean(&s) - m_ref).abs() / m_ref.abs().max(yscale);
                let ev = (b.posterior_var(&s) - v_ref).abs() / (case.amp * case.amp);
                worst.set(worst.get().max(em).max(ev));
                prop_assert!(em <= 1e-9, "mean rel err {em}");
                prop_assert!(ev <= 1e-9, "variance rel err {ev}");
            }
        }
        Ok(())
    })
    .map_err(|e| format!("rank-1 vs recompute: {e}"))?;
    Ok(worst.get())
}

fn conditioning_identity() -> std::result::Result<f64, String> {
    let worst = Cell::new(0.0f64);
    let mut r = runner(200);
    let strat = (gp_case(), -2.0f64..2.0);
    r.run(&strat, |(case, y)| {
        let b = build(&case, None);
        let tau = point(&case.probes[0]);
        let after = b.with_observation(tau.clone(), y).unwrap();
        let inn = b.innovation_at(&tau);
        let (si, sj) = (point(&case.probes[1]), point(&case.probes[2]));
        let delta = after.posterior_cov(&si, &sj) - b.posterior_cov(&si, &sj);
        let want = -inn.eval(&si) * inn.eval(&sj);
        let err = (delta - want).abs() / (case.amp * case.amp);
        worst.set(worst.get().max(err));
        prop_assert!(err <= 1e-10, "ΔΣ err {err}");
        Ok(())
    })
    .map_err(|e| format!("conditioning identity: {e}"))?;
    Ok(worst.get())
}

fn scalar_identity() -> std::result::Result<f64, String> {
    let worst = Cell::new(0.0f64);
    let mut r = runner(200);
    r.run(&gp_case(), |case| {
        let b = build(&case, None);
        for p in &case.probes {
            let s = b.belief_scalars(&point(p));
            let err = (s.big_sigma_bar + s.sigma_bar * s.sigma_bar - 1.0).abs();
            worst.set(worst.get().max(err));
            prop_assert!(err <= 1e-12, "Σ̄ + σ̄² - 1 = {err}");
        }
        Ok(())
    })
    .map_err(|e| format!("scalar identity: {e}"))?;
    Ok(worst.get())
}

pub fn gp_algebra() -> Outcome {
    let start = Instant::now();
    let a = rank_one_matches_recompute()?;
    let b = conditioning_identity()?;
    let c = scalar_identity()?;
    let el = start.elapsed();
    if el > Duration::from_secs(10) {
        return Err(format!("runtime {el:.2?} exceeds 10 s"));
    }
    Ok(format!(
        "rank-1 max rel err {a:.1e}, ΔΣ max err {b:.1e}, Σ̄+σ̄² max err {c:.1e}, {el:.2?}"
    ))
}

// ---------------------------------------------------------------------------
// Closed forms against quadrature

const QUAD_TOL: f64 = 1e-11;
// Below this the integrands are rounding noise.
const QUAD_FLOOR: f64 = 1e-15;
const CLOSED_FORM_TOL: f64 = 1e-5;

fn quad_product<R: Rng>(rng: &mut R) -> (f64, f64) {
    let (k1, k2) = (random_kernel_1d(rng), random_kernel_1d(rng));
    let (a, b) = (rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0));
    let got = product_integral(&k1, &p1(a), &k2, &p1(b)).unwrap();
    let ls = k1.length_scales()[0].max(k2.length_scales()[0]);
    let (lo, hi) = window(&[a, b], ls);
    let f = |s: f64| k1.eval(&p1(s), &p1(a)).unwrap() * k2.eval(&p1(s), &p1(b)).unwrap();
    (got, integrate_line(&f, lo, hi, &[a, b], QUAD_TOL, QUAD_FLOOR))
}

fn feature_1d<R: Rng>(rng: &mut R) -> (InfoFeature, f64) {
    let c = rng.random_range(-3.0..3.0);
    let k = SqExpKernel::new(1.0, &[rng.random_range(0.5..3.0)]).unwrap();
    (InfoFeature::new(p1(c), k).unwrap(), c)
}

fn breaks(b: &GPBelief, extra: &[f64]) -> Vec<f64> {
    b.points().iter().map(|p| p.t).chain(extra.iter().copied()).collect()
}

fn max_ls(b: &GPBelief, f: &InfoFeature) -> f64 {
    b.kernel().length_scales()[0].max(f.kernel.length_scales()[0])
}

fn quad_phi_cov<R: Rng>(rng: &mut R) -> (f64, f64) {
    let b = random_belief_1d(rng, 5);
    let (feat, c) = feature_1d(rng);
    let got = phi_cov(&feat, &b).unwrap();
    let br = breaks(&b, &[c]);
    let (lo, hi) = window(&br, max_ls(&b, &feat));
    let kb = |s: f64| feat.kernel.eval(&p1(s), &p1(c)).unwrap();
    let outer = |si: f64| {
        let inner = |sj: f64| {
            let (a, bb) = (p1(si), p1(sj));
            (b.posterior_cov(&a, &bb) - b.kernel().eval(&a, &bb).unwrap()) * kb(sj)
        };
        integrate_line(&inner, lo, hi, &br, QUAD_TOL, QUAD_FLOOR) * kb(si)
    };
    (got, integrate_line(&outer, lo, hi, &br, QUAD_TOL, QUAD_FLOOR))
}

fn quad_phi_mean<R: Rng>(rng: &mut R) -> (f64, f64) {
    let b = random_belief_1d(rng, 6);
    let (feat, c) = feature_1d(rng);
    let got = phi_mean(&feat, &b).unwrap();
    let br = breaks(&b, &[c]);
    let (lo, hi) = window(&br, max_ls(&b, &feat));
    let f = |s: f64| b.posterior_mean(&p1(s)) * feat.kernel.eval(&p1(s), &p1(c)).unwrap();
    let m = integrate_line(&f, lo, hi, &br, QUAD_TOL, QUAD_FLOOR);
    (got, m * m)
}

fn quad_innovation<R: Rng>(rng: &mut R) -> (f64, f64) {
    let b = random_belief_1d(rng, 6);
    let (feat, c) = feature_1d(rng);
    // Sampling location near the data or the feature so that J is not negligible.
    let tau = c + rng.random_range(-1.0..1.0) * feat.kernel.length_scales()[0];
    let got = innovation_feature_integral(&b, &p1(tau), &feat).unwrap();
    let br = breaks(&b, &[c, tau]);
    let (lo, hi) = window(&br, max_ls(&b, &feat));
    let inn = b.innovation_at(&p1(tau));
    let f = |s: f64| inn.eval(&p1(s)) * feat.kernel.eval(&p1(s), &p1(c)).unwrap();
    (got, integrate_line(&f, lo, hi, &br, QUAD_TOL, QUAD_FLOOR))
}

fn compare<R: Rng>(name: &str, rng: &mut R, n: usize, f: fn(&mut R) -> (f64, f64)) -> std::result::Result<f64, String> {
    let mut worst = 0.0f64;
    for i in 0..n {
        let (got, want) = f(rng);
        let e = rel_err(got, want);
        if !(e <= CLOSED_FORM_TOL) {
            return Err(format!("{name} instance {i}: closed form {got}, quadrature {want}, rel err {e:.2e}"));
        }
        worst = worst.max(e);
    }
    Ok(worst)
}

pub fn closed_forms() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let n = 100;
    let a = compare("product_integral", &mut rng, n, quad_product)?;
    let b = compare("phi_cov", &mut rng, n, quad_phi_cov)?;
    let c = compare("phi_mean", &mut rng, n, quad_phi_mean)?;
    let d = compare("innovation_feature_integral", &mut rng, n, quad_innovation)?;
    let el = start.elapsed();
    if el > Duration::from_secs(60) {
        return Err(format!("runtime {el:.2?} exceeds 60 s"));
    }
    Ok(format!(
        "{n} instances each; max rel err product {a:.1e}, phi_cov {b:.1e}, phi_mean {c:.1e}, J {d:.1e}; {el:.2?}"
    ))
}

// ---------------------------------------------------------------------------
// Value and control calculus

/// Constant gain matrix for a two-dimensional state and two controls.
pub struct FixedGain(pub DMatrix<f64>);

impl ControlGain for FixedGain {
    fn state_dim(&self) -> usize {
        self.0.nrows()
    }
    fn control_dim(&self) -> usize {
        self.0.ncols()
    }
    fn gain(&self, _x: &[f64], _t: f64) -> DMatrix<f64> {
        self.0.clone()
    }
}

pub struct CalculusFixture {
    pub bank: FeatureBank,
    pub weights: ValueWeights,
    pub q: GPBelief,
    pub f: Vec<GPBelief>,
    pub region: Region,
    pub gain: FixedGain,
    pub cost: ControlCost,
}

pub fn calculus_fixture(seed: u64) -> CalculusFixture {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let region = Region::new(vec![-3.0, -3.0, 0.0], vec![3.0, 3.0, 10.0]).unwrap();
    let layout = BankLayout {
        region: region.clone(),
        layout: PhaseLayout::Grid,
        counts: vec![4, 4, 3],
        amplitude: 1.0,
        length_scale_factor: 1.0,
        cov_per_block: 1,
        mean_per_block: 1,
        info_scale_factor: 1.0,
    };
    let bank = FeatureBank::from_layout(2, &layout, &mut rng).unwrap();
    let mut weights = ValueWeights::zeros(&bank);
    for w in weights.x.iter_mut().chain(weights.cov.iter_mut().flatten()).chain(weights.mean.iter_mut().flatten()) {
        *w = rng.sample(StandardNormal);
    }
    let kernel = SqExpKernel::new(1.0, &[1.5, 1.5, 5.0]).unwrap();
    let belief = |rng: &mut ChaCha8Rng| {
        let pts: Vec<_> = (0..10).map(|_| region.sample(rng)).collect();
        let ys: Vec<f64> = (0..10).map(|_| rng.random_range(-1.0..1.0)).collect();
        GPBelief::from_data(kernel.clone(), 0.1, pts, ys).unwrap()
    };
    let q = belief(&mut rng);
    let f = vec![belief(&mut rng), belief(&mut rng)];
    let gain = FixedGain(DMatrix::from_fn(2, 2, |_, _| rng.random_range(-1.0..1.0)));
    let a = DMatrix::from_fn(2, 2, |_, _| rng.random_range(-1.0..1.0));
    let cost = ControlCost::new(&a * a.transpose() + DMatrix::identity(2, 2) * 0.5).unwrap();
    CalculusFixture {
        bank,
        weights,
        q,
        f,
        region,
        gain,
        cost,
    }
}

pub fn value_calculus() -> Outcome {
    let fx = calculus_fixture(7);
    let know = Knowledge::Beliefs { q: &fx.q, f: &fx.f };
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let r_inv = fx.cost.matrix().clone().try_inverse().expect("invertible R");
    let h = 1e-4;
    let (mut worst_fd, mut min_gap) = (0.0f64, f64::INFINITY);
    for i in 0..50 {
        let s = fx.region.sample(&mut rng);
        let grad = value_gradient(&fx.bank, &fx.weights, &s).map_err(|e| e.to_string())?;
        let v = |x: Vec<f64>| value_and_gradient(&fx.bank, &fx.weights, &know, &SpaceTimePoint::new(x, s.t)).unwrap().0;
        let fd: Vec<f64> = (0..2)
            .map(|d| {
                let (mut xp, mut xm) = (s.x.clone(), s.x.clone());
                xp[d] += h;
                xm[d] -= h;
                (v(xp) - v(xm)) / (2.0 * h)
            })
            .collect();
        let diff = ((fd[0] - grad[0]).powi(2) + (fd[1] - grad[1]).powi(2)).sqrt();
        let norm = (grad[0].powi(2) + grad[1].powi(2)).sqrt();
        let e = diff / norm;
        if !(e <= 1e-5) {
            return Err(format!("state {i}: gradient rel err {e:.2e} (fd {fd:?}, analytic {grad:?})"));
        }
        worst_fd = worst_fd.max(e);

        // H(u) = ∇vᵀ g u + ½ uᵀ R⁻¹ u; the drift and loss terms do not depend on u.
        let g = fx.gain.gain(&s.x, s.t);
        let gv = DVector::from_column_slice(&grad);
        let ham = |u: &DVector<f64>| gv.dot(&(&g * u)) + 0.5 * u.dot(&(&r_inv * u));
        let u_star = control_from_gradient(&grad, &s.x, s.t, &fx.gain, &fx.cost);
        let h_star = ham(&u_star);
        let scale = u_star.norm().max(1e-3);
        for _ in 0..100 {
            let du = DVector::from_fn(2, |_, _| rng.sample::<f64, _>(StandardNormal) * scale * rng.random_range(1e-3..1.0));
            let gap = ham(&(&u_star + du)) - h_star;
            if !(gap >= 0.0) {
                return Err(format!("state {i}: perturbed control lowers the Hamiltonian by {gap:e}"));
            }
            min_gap = min_gap.min(gap);
        }
    }

    let points: Vec<_> = (0..300).map(|_| fx.region.sample(&mut rng)).collect();
    let params = HjbParams::new(10.0, 2.0).unwrap();
    let sys = assemble_residual_system(&fx.bank, &know, &points, &fx.gain, &fx.cost, params).map_err(|e| e.to_string())?;
    let mut worst_psd = 0.0f64;
    for i in 0..sys.n_points() {
        let psi = sys.psi(i);
        if (&psi - psi.transpose()).abs().max() > 1e-12 * psi.abs().max().max(1.0) {
            return Err(format!("Ψ at point {i} is not symmetric"));
        }
        let norm = psi.norm();
        let min_eig = SymmetricEigen::new(psi).eigenvalues.min();
        if min_eig < -1e-10 * norm {
            return Err(format!("Ψ at point {i} has eigenvalue {min_eig:e} (‖Ψ‖ = {norm:e})"));
        }
        worst_psd = worst_psd.min(min_eig / norm.max(f64::MIN_POSITIVE));
    }
    Ok(format!(
        "50 states: gradient max rel err {worst_fd:.1e}, min Hamiltonian gap {min_gap:.1e} over 5000 perturbations; Ψ PSD at {} points (min λ/‖Ψ‖ {worst_psd:.1e})",
        sys.n_points()
    ))
}

// ---------------------------------------------------------------------------
// Experiments

pub fn gp1d_config() -> ExperimentConfig {
    ExperimentConfig::load(&config_path("gp1d.toml")).expect("gp1d config")
}

pub fn furuta_config() -> ExperimentConfig {
    ExperimentConfig::load(&config_path("furuta.toml")).expect("furuta config")
}

struct DeskRuns {
    traces: Vec<RunTrace>,
    elapsed: Duration,
}

fn desk_runs() -> &'static DeskRuns {
    static RUNS: OnceLock<DeskRuns> = OnceLock::new();
    RUNS.get_or_init(|| {
        let cfg = gp1d_config();
        let start = Instant::now();
        let traces = cfg
            .seeds
            .iter()
            .map(|&s| run_episode(&cfg, s, Method::Gp).expect("desk run"))
            .collect();
        DeskRuns {
            traces,
            elapsed: start.elapsed(),
        }
    })
}

pub fn lm_fitting() -> Outcome {
    let runs = desk_runs();
    let per_run = runs.elapsed / runs.traces.len() as u32;
    if per_run > Duration::from_secs(300) {
        return Err(format!("desk run takes {per_run:.2?} (> 5 min)"));
    }
    let mut ratios = Vec::new();
    for tr in &runs.traces {
        if let Some(a) = &tr.aborted {
            return Err(format!("seed {} aborted: {a}", tr.seed));
        }
        if let Some(f) = tr.fits.iter().find(|f| !f.monotone) {
            return Err(format!("seed {} step {}: objective increased on an accepted step", tr.seed, f.step));
        }
        let last = tr.fits.last().ok_or("no fits recorded")?;
        let ratio = last.rms_final / last.rms_zero;
        if !(ratio <= 0.1) {
            return Err(format!(
                "seed {} final fit: RMS {:.4} vs {:.4} at w=0 (ratio {ratio:.3} > 0.1)",
                tr.seed, last.rms_final, last.rms_zero
            ));
        }
        ratios.push(format!("{ratio:.3}"));
    }
    Ok(format!(
        "{} seeds, all accepted steps monotone; final RMS / RMS(w=0) = [{}]; {per_run:.2?} per run",
        runs.traces.len(),
        ratios.join(", ")
    ))
}

fn spread(vals: &[f64]) -> (f64, f64, bool) {
    let finite = vals.iter().all(|v| v.is_finite());
    let lo = vals.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = vals.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mag = vals.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    (hi - lo, mag, finite)
}

pub fn field_structure() -> Outcome {
    let runs = desk_runs();
    let tr = &runs.traces[0];
    let ckpt = tr
        .checkpoints
        .iter()
        .find(|c| c.step == 50)
        .ok_or("no checkpoint at step 50")?;
    let rows = emit_fields(ckpt).map_err(|e| e.to_string())?;
    let mut parts = Vec::new();
    let cols: [(&str, fn(&optlearn::value::TermRecord) -> f64); 3] = [
        ("exploration_bonus", |r| r.exploration_bonus),
        ("free_drift", |r| r.free_drift),
        ("control_benefit", |r| r.control_benefit),
    ];
    for (name, get) in cols {
        let vals: Vec<f64> = rows.iter().map(|(_, r)| get(r)).collect();
        let (range, mag, finite) = spread(&vals);
        if !finite {
            return Err(format!("{name} has non-finite entries"));
        }
        if !(range > 1e-3 * mag) {
            return Err(format!("{name} is flat: range {range:e}, max magnitude {mag:e}"));
        }
        parts.push(format!("{name} range {range:.3e} (max |.| {mag:.3e})"));
    }
    let all_finite = rows.iter().all(|(_, r)| {
        [r.mu_q, r.value, r.free_drift, r.control_benefit, r.exploration_bonus, r.diffusion_cost]
            .iter()
            .all(|v| v.is_finite())
    });
    if !all_finite {
        return Err("non-finite field entry".into());
    }
    Ok(format!("seed {} step 50, {} grid rows: {}", tr.seed, rows.len(), parts.join("; ")))
}

pub fn furuta_ordering() -> Outcome {
    let cfg = furuta_config();
    if cfg.duration < 20.0 || cfg.seeds.len() != 5 {
        return Err(format!("config must have 5 seeds and duration >= 20 s, got {} / {}", cfg.seeds.len(), cfg.duration));
    }
    let start = Instant::now();
    let mut metas = Vec::new();
    for m in Method::ALL {
        for &s in &cfg.seeds {
            let tr = run_episode(&cfg, s, m).map_err(|e| e.to_string())?;
            if let Some(a) = &tr.aborted {
                return Err(format!("{} seed {s} aborted: {a}", m.as_str()));
            }
            metas.push(RunMeta::from_trace(&tr));
        }
    }
    let el = start.elapsed();
    let table = aggregate(&metas).map_err(|e| e.to_string())?;
    let row = |m: Method| table.rows.iter().find(|r| r.method == m).expect("method row");
    let (gp, td, fi) = (row(Method::Gp), row(Method::Td), row(Method::Fullinfo));
    let wins = gp.losses.iter().zip(&td.losses).filter(|(g, t)| g.1 < t.1).count();
    let per_seed = |r: &MethodSummary| r.losses.iter().map(|l| format!("{:.3}", l.1)).collect::<Vec<_>>().join(" ");
    let summary = format!(
        "fullinfo {:.4} ± {:.4}, gp {:.4} ± {:.4}, td {:.4} ± {:.4}; gp < td in {wins}/5 seeds (gp [{}], td [{}]); {el:.2?}",
        fi.mean, fi.std, gp.mean, gp.std, td.mean, td.std, per_seed(gp), per_seed(td)
    );
    if !(fi.mean <= gp.mean && gp.mean < td.mean) {
        return Err(format!("ordering violated: {summary}"));
    }
    if wins < 4 {
        return Err(format!("too few per-seed wins: {summary}"));
    }
    if el > Duration::from_secs(30 * 60) {
        return Err(format!("runtime exceeds 30 min: {summary}"));
    }
    Ok(summary)
}

pub fn determinism() -> Outcome {
    let cfg = gp1d_config();
    let seed = cfg.seeds[0];
    let dirs = [tempfile::tempdir().map_err(|e| e.to_string())?, tempfile::tempdir().map_err(|e| e.to_string())?];
    let mut checked = 0;
    for m in Method::ALL {
        let mut bytes = Vec::new();
        for d in &dirs {
            let tr = run_episode(&cfg, seed, m).map_err(|e| e.to_string())?;
            optlearn::harness::write_run(&tr, d.path()).map_err(|e| e.to_string())?;
            let name = format!("trace_{}_{seed}.csv", m.as_str());
            bytes.push(std::fs::read(d.path().join(&name)).map_err(|e| e.to_string())?);
        }
        if bytes[0] != bytes[1] {
            return Err(format!("{} traces differ between repeated runs", m.as_str()));
        }
        checked += bytes[0].len();
    }
    Ok(format!("gp, td and fullinfo traces byte-identical across repeated runs ({checked} bytes)"))
}
