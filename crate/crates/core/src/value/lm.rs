//! Levenberg–Marquardt minimisation of the summed squared residuals.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

use super::features::ValueWeights;
use super::system::ResidualSystem;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LmOptions {
    pub initial_damping: f64,
    pub damping_up: f64,
    pub damping_down: f64,
    pub max_iterations: usize,
    /// Stop once an accepted step lowers the objective by less than this fraction.
    pub relative_tolerance: f64,
}

impl Default for LmOptions {
    fn default() -> Self {
        Self {
            initial_damping: 1e-3,
            damping_up: 10.0,
            damping_down: 10.0,
            max_iterations: 200,
            relative_tolerance: 1e-9,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LmReport {
    pub iterations: usize,
    /// Objective at the start and after each accepted step.
    pub history: Vec<f64>,
    pub converged: bool,
}

impl LmReport {
    pub fn initial_objective(&self) -> f64 {
        self.history[0]
    }

    pub fn final_objective(&self) -> f64 {
        *self.history.last().expect("non-empty history")
    }
}

const MAX_DAMPING: f64 = 1e20;

/// Fits weights with default options, starting from `w_init`.
pub fn fit_weights(system: &ResidualSystem, w_init: &ValueWeights) -> Result<ValueWeights> {
    fit_weights_with(system, w_init, &LmOptions::default()).map(|(w, _)| w)
}

pub fn fit_weights_with(
    system: &ResidualSystem,
    w_init: &ValueWeights,
    opts: &LmOptions,
) -> Result<(ValueWeights, LmReport)> {
    let layout = system.layout().clone();
    if w_init.layout() != layout {
        return Err(Error::param("w_init", "layout does not match residual system"));
    }
    let mut w = w_init.flatten();
    let mut obj = system.objective(&w);
    if !obj.is_finite() {
        return Err(Error::NonFinite("initial least-squares objective".into()));
    }
    let p = w.len();
    let mut damping = opts.initial_damping;
    let mut history = vec![obj];
    let mut converged = false;
    let mut iterations = 0;

    while iterations < opts.max_iterations {
        if obj == 0.0 {
            converged = true;
            break;
        }
        iterations += 1;
        let jac = system.jacobian(&w);
        let r = DVector::from_vec(system.residuals(&w));
        let grad = jac.tr_mul(&r);
        if grad.iter().all(|g| *g == 0.0) {
            converged = true;
            break;
        }
        let jtj = jac.tr_mul(&jac);
        // Marquardt scaling D = diag(JᵀJ), solved in the equilibrated basis
        // D^{-1/2} (JᵀJ + μD) D^{-1/2} = C + μI. Zero columns get unit scale.
        let scale: Vec<f64> = (0..p)
            .map(|i| {
                let d = jtj[(i, i)];
                if d > 0.0 { 1.0 / d.sqrt() } else { 1.0 }
            })
            .collect();
        let mut c = DMatrix::from_fn(p, p, |i, j| jtj[(i, j)] * scale[i] * scale[j]);
        for i in 0..p {
            if jtj[(i, i)] == 0.0 {
                c[(i, i)] = 1.0;
            }
        }
        let rhs = DVector::from_fn(p, |i, _| -grad[i] * scale[i]);

        let mut accepted = None;
        while damping <= MAX_DAMPING {
            let mut a = c.clone();
            for i in 0..p {
                a[(i, i)] += damping;
            }
            let Some(chol) = a.cholesky() else {
                damping *= opts.damping_up;
                continue;
            };
            let step = chol.solve(&rhs).component_mul(&DVector::from_column_slice(&scale));
            let trial: Vec<f64> = w.iter().zip(step.iter()).map(|(a, b)| a + b).collect();
            let trial_obj = system.objective(&trial);
            if trial_obj.is_finite() && trial_obj < obj {
                damping /= opts.damping_down;
                accepted = Some((trial, trial_obj));
                break;
            }
            damping *= opts.damping_up;
        }
        let Some((trial, trial_obj)) = accepted else {
            // No descent at any damping: the current point is stationary to working precision.
            converged = true;
            break;
        };
        let decrease = (obj - trial_obj) / obj;
        w = trial;
        obj = trial_obj;
        history.push(obj);
        if decrease < opts.relative_tolerance {
            converged = true;
            break;
        }
    }
    let weights = ValueWeights::from_flat(&layout, &w)?;
    Ok((
        weights,
        LmReport {
            iterations,
            history,
            converged,
        },
    ))
}
