//! Positive stable variates, the inverse stable subordinator and
//! Mittag-Leffler waiting times.

use rand::distr::{Distribution, Open01};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::mlf::FracOrder;

/// Identifies one reproducible random stream: the same pair always yields the
/// same variates, distinct `stream_id`s under one seed give independent streams.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RngStream {
    pub master_seed: u64,
    pub stream_id: u64,
}

impl RngStream {
    pub fn new(master_seed: u64, stream_id: u64) -> Self {
        RngStream { master_seed, stream_id }
    }

    /// A fresh generator positioned at the start of this stream.
    pub fn rng(&self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.master_seed);
        rng.set_stream(self.stream_id);
        rng
    }
}

pub const DEFAULT_GRID_CAP: u64 = 100_000_000;

fn open01<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    Open01.sample(rng)
}

/// Unit-rate exponential.
pub fn sample_exp1<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    -open01(rng).ln()
}

/// Standard one-sided stable variable with `E[e^{-sS}] = e^{-s^α}`
/// (Kanter's angular representation).
pub fn sample_stable<R: Rng + ?Sized>(alpha: FracOrder, rng: &mut R) -> f64 {
    let a = alpha.value();
    if alpha.is_one() {
        return 1.0;
    }
    let u = std::f64::consts::PI * open01(rng);
    let w = sample_exp1(rng);
    let ln_s = (a * u).sin().ln() - u.sin().ln() / a
        + (1.0 - a) / a * (((1.0 - a) * u).sin().ln() - w.ln());
    ln_s.exp()
}

/// One draw of the inverse subordinator `E(t)`, using `E(t) =d (t/S)^α`.
pub fn sample_inverse_at<R: Rng + ?Sized>(alpha: FracOrder, t: f64, rng: &mut R) -> Result<f64> {
    if !(t >= 0.0) {
        return domain(format!("time must be nonnegative, got {t}"));
    }
    if t == 0.0 {
        return Ok(0.0);
    }
    if alpha.is_one() {
        return Ok(t);
    }
    let s = sample_stable(alpha, rng);
    Ok((t / s).powf(alpha.value()))
}

/// Waiting time with survival function `E_α(-rate · t^α)`: `X^{1/α} S` with
/// `X ~ Exp(rate)`.
pub fn sample_ml_waiting<R: Rng + ?Sized>(alpha: FracOrder, rate: f64, rng: &mut R) -> f64 {
    let x = sample_exp1(rng) / rate;
    if alpha.is_one() {
        return x;
    }
    x.powf(1.0 / alpha.value()) * sample_stable(alpha, rng)
}

/// Stable subordinator sampled on an operational-time grid of step `Δ`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubordinatorGrid {
    pub operational_step: f64,
    /// `D_0 = 0 ≤ D_1 ≤ ...`; the last value exceeds `horizon`.
    pub values: Vec<f64>,
    pub horizon: f64,
}

pub fn build_grid<R: Rng + ?Sized>(
    alpha: FracOrder,
    delta: f64,
    horizon: f64,
    rng: &mut R,
) -> Result<SubordinatorGrid> {
    build_grid_capped(alpha, delta, horizon, DEFAULT_GRID_CAP, rng)
}

pub fn build_grid_capped<R: Rng + ?Sized>(
    alpha: FracOrder,
    delta: f64,
    horizon: f64,
    cap: u64,
    rng: &mut R,
) -> Result<SubordinatorGrid> {
    if !(delta > 0.0) || !(horizon > 0.0) {
        return domain("grid step and horizon must be positive");
    }
    let scale = delta.powf(1.0 / alpha.value());
    let mut values = vec![0.0];
    let mut level = 0.0;
    while level <= horizon {
        if values.len() as u64 > cap {
            return Err(Error::Resource {
                what: "subordinator grid steps".into(),
                cap,
            });
        }
        level += scale * sample_stable(alpha, rng);
        values.push(level);
    }
    Ok(SubordinatorGrid {
        operational_step: delta,
        values,
        horizon,
    })
}

/// `Δ · min{k : D_k > t}`.
pub fn invert_grid(grid: &SubordinatorGrid, t: f64) -> Result<f64> {
    if !(t >= 0.0 && t <= grid.horizon) {
        return domain(format!("t = {t} outside [0, {}]", grid.horizon));
    }
    let k = grid.values.partition_point(|&d| d <= t);
    Ok(grid.operational_step * k as f64)
}
