//! Ground-truth worlds, physics integration and the Poisson observation stream.

pub mod furuta;
pub mod poisson;
pub mod sampled;

pub use furuta::{furuta_loss, FurutaParams, FurutaWorld};
pub use poisson::{observe, PoissonStream};
pub use sampled::{sample_world, GridFunction, SampledGPWorld, SampledWorldConfig};

use crate::augmented::ControlGain;
use crate::error::{Error, Result};
use crate::value::ExactModel;

/// A control-affine system `dx = [f(x, t) + g(x, t) u] dt` with loss rate `q(x, t)`.
pub trait World: ExactModel + ControlGain {
    /// `f(x, t) + g(x, t) u`.
    fn controlled_dynamics(&self, x: &[f64], t: f64, u: &[f64]) -> Vec<f64> {
        let mut dx = self.free_dynamics(x, t);
        let g = self.gain(x, t);
        for (i, d) in dx.iter_mut().enumerate() {
            *d += (0..u.len()).map(|j| g[(i, j)] * u[j]).sum::<f64>();
        }
        dx
    }

    /// Maps a state onto its canonical representative, e.g. wrapping angles
    /// whose value does not affect the dynamics.
    fn wrap_state(&self, _x: &mut [f64]) {}
}

/// Sub-steps per physics step.
pub const SUBSTEPS: usize = 10;

fn rk4(world: &dyn World, x: &[f64], t: f64, u: &[f64], h: f64) -> Vec<f64> {
    let axpy = |a: &[f64], k: &[f64], c: f64| -> Vec<f64> { a.iter().zip(k).map(|(a, k)| a + c * k).collect() };
    let k1 = world.controlled_dynamics(x, t, u);
    let k2 = world.controlled_dynamics(&axpy(x, &k1, 0.5 * h), t + 0.5 * h, u);
    let k3 = world.controlled_dynamics(&axpy(x, &k2, 0.5 * h), t + 0.5 * h, u);
    let k4 = world.controlled_dynamics(&axpy(x, &k3, h), t + h, u);
    (0..x.len())
        .map(|i| x[i] + h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]))
        .collect()
}

/// Integrates from `t0` to `t1` under constant `u` with RK4 steps no longer than `max_h`.
pub fn integrate(world: &dyn World, x: &[f64], t0: f64, t1: f64, u: &[f64], max_h: f64) -> Result<Vec<f64>> {
    let span = t1 - t0;
    if span == 0.0 {
        return Ok(x.to_vec());
    }
    let n = (span / max_h).ceil().max(1.0) as usize;
    let h = span / n as f64;
    let mut x = x.to_vec();
    for i in 0..n {
        x = rk4(world, &x, t0 + i as f64 * h, u, h);
    }
    if !x.iter().all(|v| v.is_finite()) {
        return Err(Error::NonFinite(format!("state after integrating to t={t1}")));
    }
    Ok(x)
}

fn check_step(world: &dyn World, x: &[f64], u: &[f64], dt: f64) -> Result<()> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::param("dt", "must be positive"));
    }
    if x.len() != world.state_dim() {
        return Err(Error::DimensionMismatch {
            expected: world.state_dim(),
            got: x.len(),
        });
    }
    if u.len() != world.control_dim() {
        return Err(Error::DimensionMismatch {
            expected: world.control_dim(),
            got: u.len(),
        });
    }
    Ok(())
}

/// One physics step of length `dt` with a zero-order hold on `u`.
pub fn step_physics(world: &dyn World, x: &[f64], t: f64, u: &[f64], dt: f64) -> Result<Vec<f64>> {
    check_step(world, x, u, dt)?;
    let mut end = integrate(world, x, t, t + dt, u, dt / SUBSTEPS as f64)?;
    world.wrap_state(&mut end);
    Ok(end)
}

/// Like [`step_physics`], additionally returning the state at each of the sorted
/// `event_times` in `[t, t + dt)`. The integration is split at the events.
pub fn step_physics_with_events(
    world: &dyn World,
    x: &[f64],
    t: f64,
    u: &[f64],
    dt: f64,
    event_times: &[f64],
) -> Result<(Vec<f64>, Vec<Vec<f64>>)> {
    check_step(world, x, u, dt)?;
    let max_h = dt / SUBSTEPS as f64;
    let mut states = Vec::with_capacity(event_times.len());
    let mut cur = x.to_vec();
    let mut tc = t;
    for &te in event_times {
        if !(te >= tc && te < t + dt) {
            return Err(Error::param("event_times", "must be sorted and inside the step"));
        }
        cur = integrate(world, &cur, tc, te, u, max_h)?;
        tc = te;
        let mut wrapped = cur.clone();
        world.wrap_state(&mut wrapped);
        states.push(wrapped);
    }
    let mut end = integrate(world, &cur, tc, t + dt, u, max_h)?;
    world.wrap_state(&mut end);
    Ok((end, states))
}
