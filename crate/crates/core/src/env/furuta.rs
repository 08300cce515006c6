//! Rotary (Furuta) inverted pendulum with a point-mass pendulum.
//!
//! State `x = [θ₁, θ₂, θ̇₁, θ̇₂]`: arm angle, pendulum angle (0 hanging, π upright)
//! and their rates. The single control is the arm torque.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::augmented::ControlGain;
use crate::error::{Error, Result};
use crate::value::ExactModel;

use super::World;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FurutaParams {
    /// Arm moment of inertia about the vertical axis (kg m²).
    pub arm_inertia: f64,
    /// Pendulum tip mass (kg).
    pub mass: f64,
    /// Arm length (m).
    pub l1: f64,
    /// Pendulum length (m).
    pub l2: f64,
    pub gravity: f64,
    /// Viscous damping on the arm and pendulum joints.
    pub damping_arm: f64,
    pub damping_pendulum: f64,
    /// Loss weight on the pendulum angle.
    pub c1: f64,
    /// Loss weight on the squared joint rates.
    pub c2: f64,
}

impl Default for FurutaParams {
    fn default() -> Self {
        Self {
            arm_inertia: 0.01,
            mass: 0.1,
            l1: 0.2,
            l2: 0.3,
            gravity: 9.81,
            damping_arm: 0.002,
            damping_pendulum: 0.0005,
            c1: 1.0,
            c2: 0.01,
        }
    }
}

impl FurutaParams {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("arm_inertia", self.arm_inertia),
            ("mass", self.mass),
            ("l1", self.l1),
            ("l2", self.l2),
            ("gravity", self.gravity),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::Config(format!("furuta {name} must be positive, got {v}")));
            }
        }
        let non_negative = [
            ("damping_arm", self.damping_arm),
            ("damping_pendulum", self.damping_pendulum),
            ("c1", self.c1),
            ("c2", self.c2),
        ];
        for (name, v) in non_negative {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::Config(format!("furuta {name} must be non-negative, got {v}")));
            }
        }
        Ok(())
    }
}

/// `q = c₁ (1 - cos(θ₂ - π)) / 2 + c₂ (θ̇₁² + θ̇₂²)`. Zero exactly at upright rest.
pub fn furuta_loss(p: &FurutaParams, x: &[f64]) -> f64 {
    p.c1 * 0.5 * (1.0 - (x[1] - std::f64::consts::PI).cos()) + p.c2 * (x[2] * x[2] + x[3] * x[3])
}

#[derive(Clone, Debug, PartialEq)]
pub struct FurutaWorld {
    pub params: FurutaParams,
}

impl FurutaWorld {
    pub fn new(params: FurutaParams) -> Result<Self> {
        params.validate()?;
        Ok(Self { params })
    }

    /// Mass matrix entries `(M₁₁, M₁₂, M₂₂)` at pendulum angle `θ₂`.
    fn mass_matrix(&self, th2: f64) -> (f64, f64, f64) {
        let p = &self.params;
        let (s, c) = th2.sin_cos();
        (
            p.arm_inertia + p.mass * (p.l1 * p.l1 + p.l2 * p.l2 * s * s),
            p.mass * p.l1 * p.l2 * c,
            p.mass * p.l2 * p.l2,
        )
    }

    fn solve_mass(&self, th2: f64, r1: f64, r2: f64) -> (f64, f64) {
        let (m11, m12, m22) = self.mass_matrix(th2);
        let det = m11 * m22 - m12 * m12;
        ((m22 * r1 - m12 * r2) / det, (m11 * r2 - m12 * r1) / det)
    }

    /// Total mechanical energy.
    pub fn energy(&self, x: &[f64]) -> f64 {
        let p = &self.params;
        let (s, c) = x[1].sin_cos();
        let (w1, w2) = (x[2], x[3]);
        0.5 * p.arm_inertia * w1 * w1
            + 0.5
                * p.mass
                * ((p.l1 * p.l1 + p.l2 * p.l2 * s * s) * w1 * w1 + 2.0 * p.l1 * p.l2 * c * w1 * w2 + p.l2 * p.l2 * w2 * w2)
            - p.mass * p.gravity * p.l2 * c
    }

    pub fn loss(&self, x: &[f64]) -> f64 {
        furuta_loss(&self.params, x)
    }
}

impl ExactModel for FurutaWorld {
    fn loss_rate(&self, x: &[f64], _t: f64) -> f64 {
        self.loss(x)
    }

    fn free_dynamics(&self, x: &[f64], _t: f64) -> Vec<f64> {
        let p = &self.params;
        let (s, c) = x[1].sin_cos();
        let (w1, w2) = (x[2], x[3]);
        let ml2 = p.mass * p.l2;
        let r1 = -2.0 * ml2 * p.l2 * s * c * w1 * w2 + ml2 * p.l1 * s * w2 * w2 - p.damping_arm * w1;
        let r2 = ml2 * p.l2 * s * c * w1 * w1 - ml2 * p.gravity * s - p.damping_pendulum * w2;
        let (a1, a2) = self.solve_mass(x[1], r1, r2);
        vec![w1, w2, a1, a2]
    }
}

impl ControlGain for FurutaWorld {
    fn state_dim(&self) -> usize {
        4
    }

    fn control_dim(&self) -> usize {
        1
    }

    fn gain(&self, x: &[f64], _t: f64) -> DMatrix<f64> {
        let (b1, b2) = self.solve_mass(x[1], 1.0, 0.0);
        DMatrix::from_column_slice(4, 1, &[0.0, 0.0, b1, b2])
    }
}

impl World for FurutaWorld {
    /// The arm angle is kept in `[-π, π)`; the dynamics do not depend on it.
    fn wrap_state(&self, x: &mut [f64]) {
        use std::f64::consts::{PI, TAU};
        x[0] = (x[0] + PI).rem_euclid(TAU) - PI;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::step_physics;

    #[test]
    fn arm_angle_wraps() {
        let w = FurutaWorld::new(FurutaParams::default()).unwrap();
        let mut x = [7.0, 0.5, 0.0, 0.0];
        w.wrap_state(&mut x);
        assert!((x[0] - (7.0 - std::f64::consts::TAU)).abs() < 1e-15);
        assert_eq!(x[1], 0.5);
        let x = step_physics(&w, &[3.1, 0.0, 10.0, 0.0], 0.0, &[0.0], 0.1).unwrap();
        assert!((-std::f64::consts::PI..std::f64::consts::PI).contains(&x[0]));
    }
    use std::f64::consts::PI;

    fn undamped() -> FurutaWorld {
        FurutaWorld::new(FurutaParams {
            damping_arm: 0.0,
            damping_pendulum: 0.0,
            ..FurutaParams::default()
        })
        .unwrap()
    }

    #[test]
    fn loss_extremes() {
        let p = FurutaParams {
            c1: 3.0,
            ..FurutaParams::default()
        };
        assert_eq!(furuta_loss(&p, &[0.4, PI, 0.0, 0.0]), 0.0);
        assert!((furuta_loss(&p, &[0.0, 0.0, 0.0, 0.0]) - 3.0).abs() < 1e-15);
    }

    #[test]
    fn upright_is_an_equilibrium() {
        let w = undamped();
        let x0 = [0.2, PI, 0.0, 0.0];
        let x1 = step_physics(&w, &x0, 0.0, &[0.0], 0.05).unwrap();
        for (a, b) in x0.iter().zip(&x1) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn energy_is_conserved_without_damping() {
        let w = undamped();
        let mut x = vec![0.0, 0.5, 1.0, -0.5];
        let e0 = w.energy(&x);
        let dt = 0.01;
        for k in 0..1000 {
            x = step_physics(&w, &x, k as f64 * dt, &[0.0], dt).unwrap();
        }
        assert!((w.energy(&x) - e0).abs() <= 1e-6 * e0.abs());
    }

    #[test]
    fn torque_does_work_on_the_arm() {
        // dE/dt = τ θ̇₁ with no damping.
        let w = undamped();
        let x = [0.0, 0.7, 0.8, -0.3];
        let tau = 0.05;
        let xd = w.controlled_dynamics(&x, 0.0, &[tau]);
        let h = 1e-6;
        let xp: Vec<f64> = x.iter().zip(&xd).map(|(a, b)| a + h * b).collect();
        let xm: Vec<f64> = x.iter().zip(&xd).map(|(a, b)| a - h * b).collect();
        let de = (w.energy(&xp) - w.energy(&xm)) / (2.0 * h);
        assert!((de - tau * x[2]).abs() < 1e-7);
    }

    #[test]
    fn rejects_bad_params() {
        let p = FurutaParams {
            l2: -1.0,
            ..FurutaParams::default()
        };
        assert!(FurutaWorld::new(p).is_err());
    }
}
