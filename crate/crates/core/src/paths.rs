//! Trajectories of the fractional birth-death process and Monte Carlo
//! marginals.
//!
//! Two constructions are provided: the Markov renewal chain with
//! Mittag-Leffler holding times, and the classical chain run on the clock of
//! an inverse stable subordinator.

use std::collections::BTreeMap;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::mlf::FracOrder;
use crate::model::{embedded_step_prob, RateSchedule};
use crate::stable::{build_grid, invert_grid, sample_inverse_at, sample_ml_waiting, RngStream};

pub const DEFAULT_JUMP_CAP: u64 = 10_000_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathSample {
    /// Embedded states `X_0 = i0, X_1, ...`.
    pub states: Vec<usize>,
    /// Jump epochs, `epochs[0] = 0`.
    pub epochs: Vec<f64>,
    pub absorbed: bool,
    /// Absorption epoch, or the horizon for a path still alive.
    pub final_time: f64,
}

impl PathSample {
    /// State occupied at time `t ≤ final_time` (right-continuous).
    pub fn state_at(&self, t: f64) -> usize {
        let k = self.epochs.partition_point(|&e| e <= t);
        self.states[k.max(1) - 1]
    }
}

/// Drives one chain from `i0`, calling `on_jump(epoch, new_state)` after every
/// jump. Stops at absorption or when the next epoch would pass `horizon`.
/// Returns `(final state, absorbed, number of jumps)`.
fn run_chain<R: Rng + ?Sized, F: FnMut(f64, usize)>(
    rates: &RateSchedule,
    alpha: FracOrder,
    i0: usize,
    horizon: f64,
    cap: u64,
    rng: &mut R,
    mut on_jump: F,
) -> Result<(usize, bool, u64)> {
    let mut state = i0;
    let mut clock = 0.0;
    let mut jumps = 0u64;
    while state > 0 {
        let rate = rates.total(state)?;
        let (p_up, _) = embedded_step_prob(rates, state)?;
        let hold = sample_ml_waiting(alpha, rate, rng);
        let up = rng.random::<f64>() < p_up;
        clock += hold;
        if clock > horizon {
            return Ok((state, false, jumps));
        }
        if jumps >= cap {
            return Err(Error::Resource { what: "jumps per path".into(), cap });
        }
        state = if up { state + 1 } else { state - 1 };
        jumps += 1;
        on_jump(clock, state);
    }
    Ok((0, true, jumps))
}

fn check_start(i0: usize, horizon: f64) -> Result<()> {
    if i0 == 0 {
        return domain("initial state must be at least 1");
    }
    if !(horizon > 0.0) || !horizon.is_finite() {
        return domain(format!("horizon must be positive and finite, got {horizon}"));
    }
    Ok(())
}

/// Renewal construction up to `horizon`.
pub fn simulate_renewal<R: Rng + ?Sized>(
    rates: &RateSchedule,
    alpha: FracOrder,
    i0: usize,
    horizon: f64,
    rng: &mut R,
) -> Result<PathSample> {
    simulate_renewal_capped(rates, alpha, i0, horizon, DEFAULT_JUMP_CAP, rng)
}

pub fn simulate_renewal_capped<R: Rng + ?Sized>(
    rates: &RateSchedule,
    alpha: FracOrder,
    i0: usize,
    horizon: f64,
    cap: u64,
    rng: &mut R,
) -> Result<PathSample> {
    check_start(i0, horizon)?;
    let mut states = vec![i0];
    let mut epochs = vec![0.0];
    let (_, absorbed, _) = run_chain(rates, alpha, i0, horizon, cap, rng, |e, s| {
        epochs.push(e);
        states.push(s);
    })?;
    let final_time = if absorbed { *epochs.last().expect("non-empty") } else { horizon };
    Ok(PathSample { states, epochs, absorbed, final_time })
}

/// `N_1(E(t))`: one draw of the inverse subordinator, then the classical chain
/// up to that operational time.
pub fn simulate_timechange_marginal<R: Rng + ?Sized>(
    rates: &RateSchedule,
    alpha: FracOrder,
    i0: usize,
    t: f64,
    rng: &mut R,
) -> Result<usize> {
    timechange_marginal_capped(rates, alpha, i0, t, DEFAULT_JUMP_CAP, rng)
}

fn timechange_marginal_capped<R: Rng + ?Sized>(
    rates: &RateSchedule,
    alpha: FracOrder,
    i0: usize,
    t: f64,
    cap: u64,
    rng: &mut R,
) -> Result<usize> {
    check_start(i0, t)?;
    let u = sample_inverse_at(alpha, t, rng)?;
    if u == 0.0 {
        return Ok(i0);
    }
    let (state, _, _) = run_chain(rates, FracOrder::ONE, i0, u, cap, rng, |_, _| {})?;
    Ok(state)
}

/// States at `query_times` along one coupled trajectory: a single classical
/// path read through a single inverted subordinator grid of step `grid_delta`.
/// At `α = 1` the clock is the identity and no grid is drawn.
pub fn simulate_timechange_path<R: Rng + ?Sized>(
    rates: &RateSchedule,
    alpha: FracOrder,
    i0: usize,
    query_times: &[f64],
    grid_delta: f64,
    rng: &mut R,
) -> Result<Vec<usize>> {
    let Some(&t_max) = query_times.last() else {
        return Ok(Vec::new());
    };
    if query_times.windows(2).any(|w| w[1] < w[0]) || query_times[0] <= 0.0 {
        return domain("query times must be positive and sorted");
    }
    check_start(i0, t_max)?;
    let operational: Vec<f64> = if alpha.is_one() {
        query_times.to_vec()
    } else {
        let grid = build_grid(alpha, grid_delta, t_max, rng)?;
        query_times.iter().map(|&t| invert_grid(&grid, t)).collect::<Result<_>>()?
    };
    let u_max = operational.iter().cloned().fold(0.0, f64::max);
    let path = simulate_renewal(rates, FracOrder::ONE, i0, u_max, rng)?;
    Ok(operational.iter().map(|&u| path.state_at(u)).collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PmfSource {
    Renewal,
    Timechange,
    Spectral,
    ClosedForm,
}

impl PmfSource {
    pub fn name(self) -> &'static str {
        match self {
            PmfSource::Renewal => "renewal",
            PmfSource::Timechange => "timechange",
            PmfSource::Spectral => "spectral",
            PmfSource::ClosedForm => "closed_form",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SimMethod {
    Renewal,
    Timechange,
}

impl std::str::FromStr for SimMethod {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "renewal" => Ok(SimMethod::Renewal),
            "timechange" => Ok(SimMethod::Timechange),
            _ => Err(Error::Input(format!("unknown simulation method `{s}`"))),
        }
    }
}

/// Distribution over states at a fixed time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarginalPmf {
    pub time: f64,
    pub mass: BTreeMap<usize, f64>,
    /// Binomial standard errors; zero for exact sources.
    pub stderr: BTreeMap<usize, f64>,
    /// Accepted paths; zero for exact sources.
    pub n_paths: u64,
    /// Paths dropped for hitting the jump cap.
    pub discarded: u64,
    pub source: PmfSource,
}

impl MarginalPmf {
    pub fn exact(time: f64, masses: impl IntoIterator<Item = (usize, f64)>, source: PmfSource) -> Self {
        let mass: BTreeMap<usize, f64> = masses.into_iter().collect();
        let stderr = mass.keys().map(|&k| (k, 0.0)).collect();
        MarginalPmf { time, mass, stderr, n_paths: 0, discarded: 0, source }
    }

    pub fn get(&self, state: usize) -> f64 {
        self.mass.get(&state).copied().unwrap_or(0.0)
    }

    pub fn se(&self, state: usize) -> f64 {
        self.stderr.get(&state).copied().unwrap_or(0.0)
    }

    /// Binomial standard error for an arbitrary cell, including empty ones.
    pub fn binomial_se(&self, p: f64) -> f64 {
        if self.n_paths == 0 {
            return 0.0;
        }
        (p * (1.0 - p) / self.n_paths as f64).sqrt()
    }

    /// `P[T_0 > t]` estimate.
    pub fn survival(&self) -> f64 {
        1.0 - self.get(0)
    }

    pub fn total(&self) -> f64 {
        self.mass.values().sum()
    }
}

/// Total variation distance over `states`, half the L1 distance.
pub fn tv_distance(a: &MarginalPmf, b: &MarginalPmf, states: impl IntoIterator<Item = usize>) -> f64 {
    0.5 * states.into_iter().map(|s| (a.get(s) - b.get(s)).abs()).sum::<f64>()
}

fn one_path(
    method: SimMethod,
    rates: &RateSchedule,
    alpha: FracOrder,
    i0: usize,
    times: &[f64],
    stream: RngStream,
    cap: u64,
) -> Result<Vec<usize>> {
    let mut rng = stream.rng();
    match method {
        SimMethod::Renewal => {
            let horizon = times.iter().cloned().fold(0.0, f64::max);
            let path = simulate_renewal_capped(rates, alpha, i0, horizon, cap, &mut rng)?;
            Ok(times.iter().map(|&t| path.state_at(t)).collect())
        }
        SimMethod::Timechange => times
            .iter()
            .map(|&t| timechange_marginal_capped(rates, alpha, i0, t, cap, &mut rng))
            .collect(),
    }
}

/// Monte Carlo marginals at several times. Path `p` uses stream `p` under
/// `seed`, and counts are reduced in path order, so the result does not depend
/// on the number of workers. Renewal paths are shared across times; the
/// time-change method draws an independent clock value per time.
pub fn estimate_pmfs(
    method: SimMethod,
    rates: &RateSchedule,
    alpha: FracOrder,
    i0: usize,
    times: &[f64],
    n_paths: u64,
    seed: u64,
) -> Result<Vec<MarginalPmf>> {
    estimate_pmfs_capped(method, rates, alpha, i0, times, n_paths, seed, DEFAULT_JUMP_CAP)
}

#[allow(clippy::too_many_arguments)]
pub fn estimate_pmfs_capped(
    method: SimMethod,
    rates: &RateSchedule,
    alpha: FracOrder,
    i0: usize,
    times: &[f64],
    n_paths: u64,
    seed: u64,
    cap: u64,
) -> Result<Vec<MarginalPmf>> {
    if n_paths == 0 {
        return domain("n_paths must be at least 1");
    }
    if times.is_empty() {
        return domain("at least one time is required");
    }
    for &t in times {
        check_start(i0, t)?;
    }
    let outcomes: Vec<Result<Vec<usize>>> = (0..n_paths)
        .into_par_iter()
        .map(|p| one_path(method, rates, alpha, i0, times, RngStream::new(seed, p), cap))
        .collect();
    let mut counts = vec![BTreeMap::<usize, u64>::new(); times.len()];
    let mut accepted = 0u64;
    let mut discarded = 0u64;
    for out in outcomes {
        match out {
            Ok(states) => {
                accepted += 1;
                for (c, s) in counts.iter_mut().zip(states) {
                    *c.entry(s).or_insert(0) += 1;
                }
            }
            Err(Error::Resource { .. }) => discarded += 1,
            Err(e) => return Err(e),
        }
    }
    if accepted == 0 {
        return Err(Error::Resource { what: "jumps per path (every path discarded)".into(), cap });
    }
    let n = accepted as f64;
    let source = match method {
        SimMethod::Renewal => PmfSource::Renewal,
        SimMethod::Timechange => PmfSource::Timechange,
    };
    Ok(times
        .iter()
        .zip(counts)
        .map(|(&t, c)| {
            let mass: BTreeMap<usize, f64> = c.iter().map(|(&s, &k)| (s, k as f64 / n)).collect();
            let stderr = mass.iter().map(|(&s, &p)| (s, (p * (1.0 - p) / n).sqrt())).collect();
            MarginalPmf { time: t, mass, stderr, n_paths: accepted, discarded, source }
        })
        .collect())
}

pub fn estimate_pmf(
    method: SimMethod,
    rates: &RateSchedule,
    alpha: FracOrder,
    i0: usize,
    t: f64,
    n_paths: u64,
    seed: u64,
) -> Result<MarginalPmf> {
    Ok(estimate_pmfs(method, rates, alpha, i0, &[t], n_paths, seed)?.remove(0))
}
