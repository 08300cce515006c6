//! The closed-loop episode: observe, refit, act, step.

use std::time::Instant;

use nalgebra::DVector;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::augmented::{AugmentedState, Observation};
use crate::baselines::{action_set, stream_rng, TDAgent};
use crate::belief::GPBelief;
use crate::env::{observe, sample_world, step_physics, step_physics_with_events, FurutaWorld, PoissonStream, SampledGPWorld, World};
use crate::error::{Error, Result};
use crate::kernel::SpaceTimePoint;
use crate::policy::{control_from_gradient, saturate, ControlCost};
use crate::value::{
    assemble_residual_system, fit_weights_with, value_gradient, FeatureBank, HjbParams, Knowledge, Region,
    ValueWeights,
};

use super::config::{Environment, ExperimentConfig, Method};

const STREAM_POISSON: u64 = 100;
const STREAM_EVAL: u64 = 101;
const STREAM_TD: u64 = 102;
const STREAM_BANK: u64 = 103;

/// One emitted step.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub t: f64,
    pub x: Vec<f64>,
    pub u: Vec<f64>,
    /// `q(x, t) + ½ uᵀ R⁻¹ u`.
    pub loss: f64,
    /// Discounted loss accrued from the episode start up to `t`.
    pub disc_loss: f64,
    pub n_obs: usize,
}

/// Residual statistics of one refit.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitStats {
    pub step: usize,
    /// RMS residual at all-zero weights.
    pub rms_zero: f64,
    /// RMS residual at the warm-start weights.
    pub rms_start: f64,
    pub rms_final: f64,
    pub iterations: usize,
    /// Whether every accepted step lowered the objective.
    pub monotone: bool,
    pub converged: bool,
}

/// Everything needed to re-evaluate the value model at a step.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Checkpoint {
    pub method: Method,
    pub seed: u64,
    pub step: usize,
    pub config: ExperimentConfig,
    pub state: AugmentedState,
    pub bank: FeatureBank,
    pub weights: ValueWeights,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RunTrace {
    pub method: Method,
    pub seed: u64,
    pub fingerprint: String,
    pub rows: Vec<TraceRow>,
    pub fits: Vec<FitStats>,
    #[serde(skip)]
    pub checkpoints: Vec<Checkpoint>,
    pub warnings: Vec<String>,
    /// Diagnostic when the run stopped early.
    pub aborted: Option<String>,
}

impl RunTrace {
    /// Discounted loss at the last emitted row, zero for an empty trace.
    pub fn final_disc_loss(&self) -> f64 {
        self.rows.last().map_or(0.0, |r| r.disc_loss)
    }
}

/// The ground truth of a run.
pub enum WorldInstance {
    Sampled(SampledGPWorld),
    Furuta(FurutaWorld),
}

impl WorldInstance {
    pub fn as_world(&self) -> &dyn World {
        match self {
            WorldInstance::Sampled(w) => w,
            WorldInstance::Furuta(w) => w,
        }
    }
}

pub fn build_world(cfg: &ExperimentConfig, seed: u64) -> Result<WorldInstance> {
    Ok(match cfg.environment {
        Environment::Gp1d => WorldInstance::Sampled(sample_world(&cfg.world_config()?, seed)?),
        Environment::Furuta => WorldInstance::Furuta(FurutaWorld::new(cfg.furuta_params())?),
    })
}

pub fn build_bank(cfg: &ExperimentConfig, seed: u64) -> Result<FeatureBank> {
    let mut rng = stream_rng(seed, STREAM_BANK);
    FeatureBank::from_layout(cfg.dim(), &cfg.bank_layout()?, &mut rng)
}

pub fn initial_state(cfg: &ExperimentConfig) -> Result<AugmentedState> {
    let q = GPBelief::new(cfg.q_kernel()?, cfg.sigma_q)?.with_max_points(cfg.max_observations)?;
    let f = (0..cfg.dim())
        .map(|_| GPBelief::new(cfg.f_kernel()?, cfg.sigma_f)?.with_max_points(cfg.max_observations))
        .collect::<Result<Vec<_>>>()?;
    AugmentedState::new(cfg.initial_state.clone(), 0.0, q, f)
}

/// Uniform evaluation points over the region.
pub fn sample_points(region: &Region, n: usize, rng: &mut ChaCha8Rng) -> Vec<SpaceTimePoint> {
    (0..n).map(|_| region.sample(rng)).collect()
}

struct Runner<'a> {
    cfg: &'a ExperimentConfig,
    method: Method,
    seed: u64,
    world: &'a dyn World,
    bank: FeatureBank,
    cost: ControlCost,
    hjb: HjbParams,
    region: Region,
    dt: f64,
    state: AugmentedState,
    weights: ValueWeights,
    stream: PoissonStream,
    eval_rng: ChaCha8Rng,
    n_eval: usize,
    td: Option<TDAgent>,
    prev_td: Option<(Vec<f64>, usize, f64)>,
    pending: Vec<Observation>,
    prev_accrual: Option<(f64, f64)>,
    disc: f64,
    trace: RunTrace,
}

impl<'a> Runner<'a> {
    fn refit(&mut self, step: usize) -> Result<()> {
        let points = sample_points(&self.region, self.n_eval, &mut self.eval_rng);
        let knowledge = match self.method {
            Method::Gp => Knowledge::from_state(&self.state),
            _ => Knowledge::Exact(self.world),
        };
        let sys = assemble_residual_system(&self.bank, &knowledge, &points, self.world, &self.cost, self.hjb)?;
        let zeros = vec![0.0; sys.n_params()];
        let rms_zero = sys.rms(&zeros);
        let warm = sys.rms(&self.weights.flatten());
        // The previous weights seed the fit unless they are worse than zero.
        let (start, rms_start) = if warm <= rms_zero {
            (self.weights.clone(), warm)
        } else {
            (ValueWeights::zeros(&self.bank), rms_zero)
        };
        let (w, rep) = fit_weights_with(&sys, &start, &self.cfg.lm_options())?;
        let rms_final = sys.rms(&w.flatten());
        self.trace.fits.push(FitStats {
            step,
            rms_zero,
            rms_start,
            rms_final,
            iterations: rep.iterations,
            monotone: rep.history.windows(2).all(|h| h[1] <= h[0]),
            converged: rep.converged,
        });
        self.weights = w;
        Ok(())
    }

    fn phase_features(&self, s: &SpaceTimePoint) -> Vec<f64> {
        self.bank.phase.iter().map(|f| f.eval(s).value).collect()
    }

    fn act(&mut self, s: &SpaceTimePoint) -> Result<DVector<f64>> {
        match self.method {
            Method::Gp | Method::Fullinfo => {
                let grad = value_gradient(&self.bank, &self.weights, s)?;
                let mut u = control_from_gradient(&grad, &s.x, s.t, self.world, &self.cost);
                saturate(&mut u, self.cfg.u_max);
                Ok(u)
            }
            Method::Td => {
                let phi = self.phase_features(s);
                let agent = self.td.as_mut().expect("td agent");
                let a = agent.select(&phi);
                if let Some((phi_prev, a_prev, cost_prev)) = self.prev_td.take() {
                    agent.td_step(&phi_prev, a_prev, cost_prev, &phi, a)?;
                }
                let u = DVector::from_element(1, agent.actions()[a]);
                self.prev_td = Some((phi, a, 0.0));
                Ok(u)
            }
        }
    }

    /// Trapezoidal accrual of `e^{-t/γ} loss`.
    fn accrue(&mut self, t: f64, loss: f64) {
        let weighted = (-t / self.cfg.gamma).exp() * loss;
        if let Some((t_prev, w_prev)) = self.prev_accrual {
            self.disc += 0.5 * (w_prev + weighted) * (t - t_prev);
        }
        self.prev_accrual = Some((t, weighted));
    }

    /// Runs step `k`. Returns `false` once the episode is complete.
    fn step(&mut self, k: usize, n_steps: usize) -> Result<bool> {
        let t = k as f64 * self.dt;
        let checkpoint = self.cfg.checkpoint_steps.contains(&k) && self.method != Method::Td;
        if k == n_steps && !checkpoint {
            return Ok(false);
        }
        self.state.t = t;
        match self.method {
            Method::Gp => {
                let events = std::mem::take(&mut self.pending);
                self.state.advance_beliefs(&events)?;
                self.refit(k)?;
            }
            Method::Fullinfo => self.refit(k)?,
            Method::Td => {}
        }
        if checkpoint {
            self.trace.checkpoints.push(Checkpoint {
                method: self.method,
                seed: self.seed,
                step: k,
                config: self.cfg.clone(),
                state: self.state.clone(),
                bank: self.bank.clone(),
                weights: self.weights.clone(),
            });
        }
        if k == n_steps {
            return Ok(false);
        }

        let s = self.state.location();
        let u = self.act(&s)?;
        let loss = self.world.loss_rate(&s.x, t) + self.cost.penalty(&u);
        if !loss.is_finite() || !u.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite(format!("loss or control at t={t}")));
        }
        if let Some(prev) = self.prev_td.as_mut() {
            prev.2 = loss * self.dt;
        }
        self.accrue(t, loss);
        self.trace.rows.push(TraceRow {
            t,
            x: s.x.clone(),
            u: u.as_slice().to_vec(),
            loss,
            disc_loss: self.disc,
            n_obs: self.state.n_observations(),
        });

        let x_next = if self.method == Method::Gp {
            let events = self.stream.draw_events(t, t + self.dt)?;
            let (end, states) = step_physics_with_events(self.world, &s.x, t, u.as_slice(), self.dt, &events)?;
            for (te, xe) in events.iter().zip(&states) {
                let obs = observe(self.world, xe, *te, self.cfg.sigma_q, self.cfg.sigma_f, &mut self.stream)?;
                self.pending.extend(obs);
            }
            end
        } else {
            step_physics(self.world, &s.x, t, u.as_slice(), self.dt)?
        };
        self.state.x = x_next;
        Ok(true)
    }
}

/// Runs one episode. Configuration errors are returned as `Err`; failures
/// during the run end the trace early with [`RunTrace::aborted`] set.
pub fn run_episode(cfg: &ExperimentConfig, seed: u64, method: Method) -> Result<RunTrace> {
    cfg.validate()?;
    let world = build_world(cfg, seed)?;
    let mut trace = run_episode_in(cfg, seed, method, world.as_world())?;
    if let WorldInstance::Sampled(w) = &world {
        trace.warnings = w.warnings.clone();
    }
    Ok(trace)
}

/// Like [`run_episode`] with a caller-supplied world.
pub fn run_episode_in(cfg: &ExperimentConfig, seed: u64, method: Method, world: &dyn World) -> Result<RunTrace> {
    cfg.validate()?;
    if world.state_dim() != cfg.dim() {
        return Err(Error::DimensionMismatch {
            expected: cfg.dim(),
            got: world.state_dim(),
        });
    }
    let cost = cfg.control_cost()?;
    if cost.dim() != world.control_dim() {
        return Err(Error::Config(format!(
            "control_cost needs {} entries for this environment",
            world.control_dim()
        )));
    }
    let bank = build_bank(cfg, seed)?;
    let td = match method {
        Method::Td => {
            if world.control_dim() != 1 {
                return Err(Error::Config("the TD baseline needs a scalar control".into()));
            }
            Some(TDAgent::new(
                bank.phase.len(),
                action_set(cfg.td_u_max, cfg.td_actions),
                cfg.td_params()?,
                stream_rng(seed, STREAM_TD),
            )?)
        }
        _ => None,
    };
    let n_eval = cfg.eval_multiplier * bank.layout().total();
    let mut runner = Runner {
        cfg,
        method,
        seed,
        world,
        weights: ValueWeights::zeros(&bank),
        bank,
        cost,
        hjb: cfg.hjb()?,
        region: cfg.region()?,
        dt: cfg.dt(),
        state: initial_state(cfg)?,
        stream: PoissonStream::from_seed(cfg.lambda, seed, STREAM_POISSON)?,
        eval_rng: stream_rng(seed, STREAM_EVAL),
        n_eval,
        td,
        prev_td: None,
        pending: Vec::new(),
        prev_accrual: None,
        disc: 0.0,
        trace: RunTrace {
            method,
            seed,
            fingerprint: cfg.fingerprint(),
            rows: Vec::new(),
            fits: Vec::new(),
            checkpoints: Vec::new(),
            warnings: Vec::new(),
            aborted: None,
        },
    };
    let n_steps = cfg.n_steps();
    let started = Instant::now();
    for k in 0..=n_steps {
        if let Some(limit) = cfg.timeout {
            if started.elapsed().as_secs_f64() > limit {
                runner.trace.aborted = Some(format!("wall-clock budget of {limit} s exceeded at step {k}"));
                break;
            }
        }
        match runner.step(k, n_steps) {
            Ok(true) => {}
            Ok(false) => break,
            Err(e) => {
                runner.trace.aborted = Some(format!("step {k}: {e}"));
                break;
            }
        }
    }
    Ok(runner.trace)
}
