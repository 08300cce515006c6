//! Flat experiment configuration.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::baselines::TdParams;
use crate::env::{FurutaParams, SampledWorldConfig};
use crate::error::{Error, Result};
use crate::kernel::SqExpKernel;
use crate::policy::ControlCost;
use crate::value::{BankLayout, HjbParams, LmOptions, PhaseLayout, Region};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Environment {
    Gp1d,
    Furuta,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Gp,
    Td,
    Fullinfo,
}

impl Method {
    pub const ALL: [Method; 3] = [Method::Fullinfo, Method::Td, Method::Gp];

    pub fn as_str(self) -> &'static str {
        match self {
            Method::Gp => "gp",
            Method::Td => "td",
            Method::Fullinfo => "fullinfo",
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Method::Gp => "GP optimal learner",
            Method::Td => "TD(λ)",
            Method::Fullinfo => "Full Information",
        }
    }
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gp" => Ok(Method::Gp),
            "td" => Ok(Method::Td),
            "fullinfo" => Ok(Method::Fullinfo),
            other => Err(Error::Config(format!("unknown method `{other}`"))),
        }
    }
}

/// All run parameters. Unknown keys are rejected; missing keys take the
/// desk-scale one-dimensional defaults.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub environment: Environment,
    /// Discount horizon `γ` (s).
    pub gamma: f64,
    /// Observation rate `λ` (1/s).
    pub lambda: f64,
    /// Diagonal of the control-cost matrix `R`.
    pub control_cost: Vec<f64>,
    pub sigma_q: f64,
    pub sigma_f: f64,
    pub q_amplitude: f64,
    pub q_length_scales: Vec<f64>,
    pub f_amplitude: f64,
    pub f_length_scales: Vec<f64>,
    pub max_observations: Option<usize>,

    pub region_lo: Vec<f64>,
    pub region_hi: Vec<f64>,
    pub phase_layout: PhaseLayout,
    pub phase_counts: Vec<usize>,
    pub phase_amplitude: f64,
    pub length_scale_factor: f64,
    pub cov_per_block: usize,
    pub mean_per_block: usize,
    pub info_scale_factor: f64,
    pub eval_multiplier: usize,
    pub lm_max_iterations: usize,

    pub duration: f64,
    /// Step length; `1/λ` when absent.
    pub dt: Option<f64>,
    pub seeds: Vec<u64>,
    pub out_dir: String,
    pub u_max: Option<f64>,
    pub initial_state: Vec<f64>,
    pub checkpoint_steps: Vec<usize>,
    /// Field grid resolution along the first state axis and time.
    pub field_counts: Vec<usize>,
    /// Wall-clock budget per run (s); the run aborts with a diagnostic when exceeded.
    pub timeout: Option<f64>,

    pub world_spacing_fraction: f64,

    pub furuta_arm_inertia: f64,
    pub furuta_mass: f64,
    pub furuta_l1: f64,
    pub furuta_l2: f64,
    pub furuta_gravity: f64,
    pub furuta_damping_arm: f64,
    pub furuta_damping_pendulum: f64,
    pub furuta_c1: f64,
    pub furuta_c2: f64,

    pub td_alpha: f64,
    pub td_lambda: f64,
    pub td_epsilon: f64,
    pub td_epsilon_decay: f64,
    pub td_actions: usize,
    pub td_u_max: f64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let furuta = FurutaParams::default();
        Self {
            environment: Environment::Gp1d,
            gamma: 50.0,
            lambda: 2.0,
            control_cost: vec![10.0],
            sigma_q: 0.1,
            sigma_f: 0.1,
            q_amplitude: 1.0,
            q_length_scales: vec![2.0, 30.0],
            f_amplitude: 0.5,
            f_length_scales: vec![2.0, 30.0],
            max_observations: Some(200),
            region_lo: vec![-5.0, 0.0],
            region_hi: vec![5.0, 100.0],
            phase_layout: PhaseLayout::Grid,
            phase_counts: vec![11, 5],
            phase_amplitude: 1.0,
            length_scale_factor: 2.5,
            cov_per_block: 1,
            mean_per_block: 1,
            info_scale_factor: 5.0,
            eval_multiplier: 5,
            lm_max_iterations: 200,
            duration: 50.0,
            dt: None,
            seeds: vec![1, 2, 3, 4, 5],
            out_dir: "out".into(),
            u_max: None,
            initial_state: vec![0.0],
            checkpoint_steps: vec![50],
            field_counts: vec![41, 41],
            timeout: None,
            world_spacing_fraction: 0.2,
            furuta_arm_inertia: furuta.arm_inertia,
            furuta_mass: furuta.mass,
            furuta_l1: furuta.l1,
            furuta_l2: furuta.l2,
            furuta_gravity: furuta.gravity,
            furuta_damping_arm: furuta.damping_arm,
            furuta_damping_pendulum: furuta.damping_pendulum,
            furuta_c1: furuta.c1,
            furuta_c2: furuta.c2,
            td_alpha: 0.05,
            td_lambda: 0.8,
            td_epsilon: 0.1,
            td_epsilon_decay: 0.999,
            td_actions: 7,
            td_u_max: 1.0,
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml_str(s: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(s).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let s = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&s)
    }

    pub fn dim(&self) -> usize {
        self.initial_state.len()
    }

    pub fn dt(&self) -> f64 {
        self.dt.unwrap_or(1.0 / self.lambda)
    }

    pub fn n_steps(&self) -> usize {
        (self.duration / self.dt()).round() as usize
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        for (name, v) in [("gamma", self.gamma), ("lambda", self.lambda), ("dt", self.dt())] {
            if !(v > 0.0 && v.is_finite()) {
                return bad(format!("{name} must be positive, got {v}"));
            }
        }
        if !(self.duration >= 0.0 && self.duration.is_finite()) {
            return bad(format!("duration must be non-negative, got {}", self.duration));
        }
        if self.dt() > self.gamma / 10.0 {
            return bad(format!("dt = {} exceeds gamma / 10", self.dt()));
        }
        if !(self.sigma_q >= 0.0 && self.sigma_f >= 0.0) {
            return bad("noise levels must be non-negative".into());
        }
        let d = self.dim();
        if d == 0 {
            return bad("initial_state must not be empty".into());
        }
        let expected_dim = match self.environment {
            Environment::Gp1d => None,
            Environment::Furuta => Some(4),
        };
        if let Some(e) = expected_dim {
            if d != e {
                return bad(format!("environment needs a {e}-dimensional initial_state"));
            }
        }
        let axes = d + 1;
        for (name, len) in [
            ("q_length_scales", self.q_length_scales.len()),
            ("f_length_scales", self.f_length_scales.len()),
            ("region_lo", self.region_lo.len()),
            ("region_hi", self.region_hi.len()),
            ("phase_counts", self.phase_counts.len()),
        ] {
            if len != axes {
                return bad(format!("{name} needs {axes} entries, got {len}"));
            }
        }
        if self.field_counts.len() != 2 || self.field_counts.iter().any(|c| *c < 2) {
            return bad("field_counts needs two entries of at least 2".into());
        }
        if self.eval_multiplier == 0 {
            return bad("eval_multiplier must be positive".into());
        }
        if self.lm_max_iterations == 0 {
            return bad("lm_max_iterations must be positive".into());
        }
        if let Some(u) = self.u_max {
            if !(u > 0.0) {
                return bad("u_max must be positive".into());
            }
        }
        if !(self.td_u_max > 0.0) || self.td_actions == 0 {
            return bad("td_u_max must be positive and td_actions non-zero".into());
        }
        if self.initial_state.iter().any(|v| !v.is_finite()) {
            return bad("initial_state must be finite".into());
        }
        self.region()?;
        self.q_kernel()?;
        self.f_kernel()?;
        self.control_cost()?;
        self.td_params()?.validate()?;
        if self.environment == Environment::Furuta {
            self.furuta_params().validate()?;
        }
        Ok(())
    }

    pub fn region(&self) -> Result<Region> {
        Region::new(self.region_lo.clone(), self.region_hi.clone())
    }

    pub fn q_kernel(&self) -> Result<SqExpKernel> {
        SqExpKernel::new(self.q_amplitude, &self.q_length_scales)
    }

    pub fn f_kernel(&self) -> Result<SqExpKernel> {
        SqExpKernel::new(self.f_amplitude, &self.f_length_scales)
    }

    pub fn control_cost(&self) -> Result<ControlCost> {
        ControlCost::diagonal(&self.control_cost)
    }

    pub fn hjb(&self) -> Result<HjbParams> {
        HjbParams::new(self.gamma, self.lambda)
    }

    pub fn lm_options(&self) -> LmOptions {
        LmOptions {
            max_iterations: self.lm_max_iterations,
            ..LmOptions::default()
        }
    }

    pub fn bank_layout(&self) -> Result<BankLayout> {
        Ok(BankLayout {
            region: self.region()?,
            layout: self.phase_layout,
            counts: self.phase_counts.clone(),
            amplitude: self.phase_amplitude,
            length_scale_factor: self.length_scale_factor,
            cov_per_block: self.cov_per_block,
            mean_per_block: self.mean_per_block,
            info_scale_factor: self.info_scale_factor,
        })
    }

    pub fn world_config(&self) -> Result<SampledWorldConfig> {
        Ok(SampledWorldConfig {
            region: self.region()?,
            q_amplitude: self.q_amplitude,
            q_length_scales: self.q_length_scales.clone(),
            f_amplitude: self.f_amplitude,
            f_length_scales: self.f_length_scales.clone(),
            spacing_fraction: self.world_spacing_fraction,
        })
    }

    pub fn furuta_params(&self) -> FurutaParams {
        FurutaParams {
            arm_inertia: self.furuta_arm_inertia,
            mass: self.furuta_mass,
            l1: self.furuta_l1,
            l2: self.furuta_l2,
            gravity: self.furuta_gravity,
            damping_arm: self.furuta_damping_arm,
            damping_pendulum: self.furuta_damping_pendulum,
            c1: self.furuta_c1,
            c2: self.furuta_c2,
        }
    }

    pub fn td_params(&self) -> Result<TdParams> {
        Ok(TdParams {
            alpha: self.td_alpha,
            lambda_td: self.td_lambda,
            epsilon: self.td_epsilon,
            epsilon_decay: self.td_epsilon_decay,
            discount: (-self.dt() / self.gamma).exp(),
        })
    }

    /// Hex SHA-256 of the configuration without seeds and output location.
    pub fn fingerprint(&self) -> String {
        let mut c = self.clone();
        c.seeds.clear();
        c.out_dir.clear();
        let json = serde_json::to_string(&c).expect("config serialises");
        Sha256::digest(json.as_bytes())
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect()
    }
}
