//! Behaviour of the comparison controllers.

mod common;

use nalgebra::DMatrix;
use optlearn::augmented::ControlGain;
use optlearn::baselines::{action_set, stream_rng, TDAgent, TdParams};
use optlearn::env::World;
use optlearn::harness::{run_episode, run_episode_in, ExperimentConfig, Method};
use optlearn::kernel::SpaceTimePoint;
use optlearn::policy::ControlCost;
use optlearn::value::{decompose_terms, ExactModel, HjbParams, Knowledge, ValueWeights};

use common::config_path;

fn params(epsilon: f64, lambda_td: f64) -> TdParams {
    TdParams {
        alpha: 0.1,
        lambda_td,
        epsilon,
        epsilon_decay: 1.0,
        discount: 0.9,
    }
}

#[test]
fn td_learns_a_cyclic_chain() {
    // 0 → 1 → 2 → 0 with losses 1, 2, 3.
    let losses = [1.0, 2.0, 3.0];
    let gamma = 0.9;
    let p = DMatrix::from_row_slice(3, 3, &[0.0, 1.0, 0.0, 0.0, 0.0, 1.0, 1.0, 0.0, 0.0]);
    let exact = (DMatrix::identity(3, 3) - p * gamma)
        .try_inverse()
        .unwrap()
        * nalgebra::DVector::from_column_slice(&losses);
    for lambda_td in [0.0, 0.5] {
        let mut agent = TDAgent::new(3, vec![0.0], params(0.0, lambda_td), stream_rng(1, 0)).unwrap();
        let one_hot = |s: usize| (0..3).map(|i| if i == s { 1.0 } else { 0.0 }).collect::<Vec<_>>();
        let mut s = 0;
        for _ in 0..100_000 {
            let next = (s + 1) % 3;
            agent.td_step(&one_hot(s), 0, losses[s], &one_hot(next), 0).unwrap();
            s = next;
        }
        for st in 0..3 {
            let q = agent.q(&one_hot(st), 0);
            assert!((q - exact[st]).abs() <= 1e-3, "λ_td {lambda_td}, state {st}: {q} vs {}", exact[st]);
        }
    }
}

#[test]
fn full_exploration_picks_uniformly() {
    let n_actions = 7;
    let mut agent = TDAgent::new(2, action_set(1.0, n_actions), params(1.0, 0.0), stream_rng(4, 0)).unwrap();
    let n = 10_000;
    let mut counts = vec![0usize; n_actions];
    for _ in 0..n {
        counts[agent.select(&[1.0, 0.5])] += 1;
    }
    let p = 1.0 / n_actions as f64;
    let (mean, sd) = (n as f64 * p, (n as f64 * p * (1.0 - p)).sqrt());
    for (a, &c) in counts.iter().enumerate() {
        assert!((c as f64 - mean).abs() <= 3.0 * sd, "action {a}: {c} picks");
    }
}

/// `q ≡ 0`, `f ≡ 0`, unit gain.
struct Quiet;

impl ExactModel for Quiet {
    fn loss_rate(&self, _x: &[f64], _t: f64) -> f64 {
        0.0
    }
    fn free_dynamics(&self, _x: &[f64], _t: f64) -> Vec<f64> {
        vec![0.0]
    }
}

impl ControlGain for Quiet {
    fn state_dim(&self) -> usize {
        1
    }
    fn control_dim(&self) -> usize {
        1
    }
    fn gain(&self, _x: &[f64], _t: f64) -> DMatrix<f64> {
        DMatrix::identity(1, 1)
    }
}

impl World for Quiet {}

fn short_1d() -> ExperimentConfig {
    let mut cfg = ExperimentConfig::load(&config_path("gp1d.toml")).unwrap();
    cfg.duration = 5.0;
    cfg.checkpoint_steps = vec![];
    cfg
}

#[test]
fn full_information_in_a_quiet_world_does_nothing() {
    let tr = run_episode_in(&short_1d(), 1, Method::Fullinfo, &Quiet).unwrap();
    assert!(tr.aborted.is_none());
    assert!(!tr.rows.is_empty());
    for r in &tr.rows {
        assert_eq!(r.u, vec![0.0]);
        assert_eq!(r.loss, 0.0);
    }
    assert!(tr.fits.iter().all(|f| f.rms_final == 0.0));
}

#[test]
fn exact_knowledge_has_no_exploration_terms() {
    let cfg = short_1d();
    let world = optlearn::harness::build_world(&cfg, 2).unwrap();
    let bank = optlearn::harness::build_bank(&cfg, 2).unwrap();
    let mut w = ValueWeights::zeros(&bank);
    for (i, v) in w.x.iter_mut().chain(w.cov.iter_mut().flatten()).chain(w.mean.iter_mut().flatten()).enumerate() {
        *v = ((i * 37 % 11) as f64 - 5.0) * 0.1;
    }
    let grid: Vec<_> = (0..20).map(|i| SpaceTimePoint::new(vec![-4.0 + 0.4 * i as f64], 2.5 * i as f64)).collect();
    let recs = decompose_terms(
        &bank,
        &w,
        &Knowledge::Exact(world.as_world()),
        world.as_world(),
        &ControlCost::scalar(10.0).unwrap(),
        HjbParams::new(cfg.gamma, cfg.lambda).unwrap(),
        &grid,
    )
    .unwrap();
    assert!(recs.iter().all(|r| r.exploration_bonus == 0.0 && r.diffusion_cost == 0.0));
    assert!(recs.iter().any(|r| r.free_drift != 0.0));
}

#[test]
fn full_information_does_at_least_as_well_as_the_learner_on_the_1d_world() {
    let cfg = ExperimentConfig::load(&config_path("gp1d.toml")).unwrap();
    let mean = |m: Method| {
        let losses: Vec<f64> = cfg.seeds.iter().map(|&s| run_episode(&cfg, s, m).unwrap().final_disc_loss()).collect();
        losses.iter().sum::<f64>() / losses.len() as f64
    };
    let (fi, gp) = (mean(Method::Fullinfo), mean(Method::Gp));
    assert!(fi <= gp, "full information {fi} vs learner {gp}");
}
