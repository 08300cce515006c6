//! Poisson observation clock with Gaussian measurement noise.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Poisson, StandardNormal};

use crate::augmented::{Observation, Target};
use crate::error::{Error, Result};
use crate::kernel::SpaceTimePoint;
use crate::value::ExactModel;

/// Event times at constant rate `λ` and the noise of the resulting samples.
#[derive(Clone, Debug)]
pub struct PoissonStream {
    rate: f64,
    rng: ChaCha8Rng,
}

impl PoissonStream {
    pub fn new(rate: f64, rng: ChaCha8Rng) -> Result<Self> {
        if !(rate > 0.0 && rate.is_finite()) {
            return Err(Error::param("rate", "must be positive"));
        }
        Ok(Self { rate, rng })
    }

    pub fn from_seed(rate: f64, seed: u64, stream: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        Self::new(rate, rng)
    }

    pub fn rate(&self) -> f64 {
        self.rate
    }

    /// Sorted event times in `[t0, t1)`.
    pub fn draw_events(&mut self, t0: f64, t1: f64) -> Result<Vec<f64>> {
        if !(t1 > t0) {
            return Err(Error::param("window", "need t1 > t0"));
        }
        let mean = self.rate * (t1 - t0);
        let n = Poisson::new(mean)
            .map_err(|e| Error::param("rate", e.to_string()))?
            .sample(&mut self.rng) as usize;
        let mut times: Vec<f64> = (0..n).map(|_| self.rng.random_range(t0..t1)).collect();
        times.sort_by(f64::total_cmp);
        Ok(times)
    }

    pub fn standard_normal(&mut self) -> f64 {
        StandardNormal.sample(&mut self.rng)
    }
}

/// Noisy samples of `q` and every `f_d` at `(x, t)`, drawing `1 + D` normals
/// from the stream.
pub fn observe(
    world: &dyn ExactModel,
    x: &[f64],
    t: f64,
    sigma_q: f64,
    sigma_f: f64,
    stream: &mut PoissonStream,
) -> Result<Vec<Observation>> {
    let noise = |s: f64| Normal::new(0.0, s).map_err(|e| Error::param("noise", e.to_string()));
    let nq = noise(sigma_q)?;
    let nf = noise(sigma_f)?;
    let point = SpaceTimePoint::new(x.to_vec(), t);
    let mut out = Vec::with_capacity(1 + x.len());
    out.push(Observation {
        target: Target::Loss,
        point: point.clone(),
        value: world.loss_rate(x, t) + nq.sample(&mut stream.rng),
    });
    for (d, f) in world.free_dynamics(x, t).into_iter().enumerate() {
        out.push(Observation {
            target: Target::Dynamics(d),
            point: point.clone(),
            value: f + nf.sample(&mut stream.rng),
        });
    }
    Ok(out)
}
