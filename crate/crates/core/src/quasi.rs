//! Quasi-limiting distributions, the `C_{i,j,k}` functionals, convergence-rate
//! constants and quasi-stationary distributions.

use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::mlf::{gamma_ratio_rate, ml_survival, FracOrder};
use crate::model::{classify, pi_weights, BoundaryPolicy, RateSchedule, SeriesStatus};
use crate::numeric::special::gamma;
use crate::numeric::{Dd, KahanSum};
use crate::spectral::{decompose_rates, SpectralDecomposition};

/// Number of trailing `π_n` used for the geometric tail extrapolation.
pub const TAIL_WINDOW: usize = 20;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QldResult {
    pub i0: usize,
    /// `P_{i0,n}` for `n = 1..=nmax`.
    pub coefficients: Vec<f64>,
    pub pmf: Vec<f64>,
    pub nmax: usize,
    /// Estimated share of the total mass lying beyond `nmax`.
    pub tail_bound: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "outcome", rename_all = "snake_case")]
pub enum QldOutcome {
    Limit(QldResult),
    /// `Σ_n P_{i,n}` diverges: conditioned on survival the mass escapes.
    NoLimit { reason: String },
}

impl QldOutcome {
    pub fn limit(&self) -> Option<&QldResult> {
        match self {
            QldOutcome::Limit(r) => Some(r),
            QldOutcome::NoLimit { .. } => None,
        }
    }
}

/// Geometric extrapolation of a positive sequence's tail: the common ratio is
/// estimated from the last `TAIL_WINDOW` entries.
pub(crate) fn geometric_tail(values: &[f64]) -> f64 {
    let n = values.len();
    if n < 2 {
        return f64::INFINITY;
    }
    let k = (n - 1).min(TAIL_WINDOW - 1);
    let (last, first) = (values[n - 1], values[n - 1 - k]);
    if last == 0.0 {
        return 0.0;
    }
    let r = (last / first).powf(1.0 / k as f64);
    if r < 1.0 {
        last * r / (1.0 - r)
    } else {
        f64::INFINITY
    }
}

/// Normalize coefficients into a QLD result, with `coeff_tail` the estimated
/// mass of the coefficients past `nmax`.
pub(crate) fn qld_from_coefficients(i0: usize, coefficients: Vec<f64>, coeff_tail: f64) -> QldResult {
    let total: KahanSum = coefficients.iter().copied().collect();
    let total = total.value();
    let pmf = coefficients.iter().map(|c| c / total).collect();
    let tail_bound = if coeff_tail.is_finite() { coeff_tail / (total + coeff_tail) } else { 1.0 };
    QldResult { i0, nmax: coefficients.len(), coefficients, pmf, tail_bound }
}

/// `P_{i,n} = π_n (1/μ_1 + Σ_{j ≤ min(i-1, n-1)} 1/(λ_j π_j))`, normalized.
///
/// Existence is decided by the `B` series: `Σ_n P_{i,n}` is within constant
/// factors of `Σ_n π_n`.
pub fn qld_coefficients(rates: &RateSchedule, i0: usize, nmax: usize) -> Result<QldOutcome> {
    if i0 == 0 || nmax < i0 {
        return domain(format!("need 1 <= i0 <= nmax, got i0={i0}, nmax={nmax}"));
    }
    let cls = classify(rates, 1e-10, nmax.max(1000))?;
    match cls.b {
        SeriesStatus::Diverged => {
            return Ok(QldOutcome::NoLimit {
                reason: "B = Σπ_n diverges, so Σ_n P_{i,n} diverges".into(),
            })
        }
        SeriesStatus::Undecided { .. } => {
            return Err(Error::Accuracy("convergence of B = Σπ_n is undecided".into()))
        }
        SeriesStatus::Convergent { .. } => {}
    }
    let pi = pi_weights(rates, nmax)?;
    let mu1 = rates.death(1)?;
    let mut head = KahanSum::new();
    head.add(1.0 / mu1);
    let mut coefficients = Vec::with_capacity(nmax);
    for n in 1..=nmax {
        // Add the j = n-1 term while j ≤ i0-1.
        if n >= 2 && n - 1 < i0 {
            let j = n - 1;
            head.add(1.0 / (rates.birth(j)? * pi.get(j)));
        }
        coefficients.push(pi.get(n) * head.value());
    }
    let exhausted = rates.max_state() == Some(nmax);
    let tail = if exhausted { 0.0 } else { geometric_tail(&coefficients) };
    Ok(QldOutcome::Limit(qld_from_coefficients(i0, coefficients, tail)))
}

/// `P_i[N(t) = j | T_0 > t]` for `j = 1..=M` from a decomposition.
pub fn spectral_conditional(dec: &SpectralDecomposition, alpha: FracOrder, i0: usize, t: f64) -> Result<Vec<f64>> {
    let f = dec.ml_factors(alpha, t)?;
    let s = dec.survival_with(&f, i0)?;
    (1..=dec.dim()).map(|j| Ok(dec.transition_with(&f, i0, j)? / s)).collect()
}

/// `p_{i0,j}(t) / P_{i0}[T_0 > t]` along `t_grid`.
pub fn qld_limit_check(
    dec: &SpectralDecomposition,
    alpha: FracOrder,
    i0: usize,
    j: usize,
    t_grid: &[f64],
) -> Result<Vec<f64>> {
    if !(dec.thetas[0] > 0.0) {
        return domain("principal eigenvalue must be positive");
    }
    t_grid
        .iter()
        .map(|&t| {
            let f = dec.ml_factors(alpha, t)?;
            Ok(dec.transition_with(&f, i0, j)? / dec.survival_with(&f, i0)?)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CIntegrals {
    pub i: usize,
    pub j: usize,
    /// `values[k] = C_{i,j,k} = Σ_m Q_m(i) Q_m(j) Γ̂_m / θ_m^k`.
    pub values: Vec<f64>,
}

pub fn c_integrals(dec: &SpectralDecomposition, i: usize, j: usize, k_max: usize) -> Result<CIntegrals> {
    if k_max > 4 {
        return domain("k_max must not exceed 4");
    }
    let n = dec.dim();
    if i == 0 || j == 0 || i > n || j > n {
        return domain(format!("states ({i}, {j}) outside 1..={n}"));
    }
    let scale = (-0.5 * (dec.pi.ln(i) + dec.pi.ln(j))).exp();
    let values = (0..=k_max)
        .map(|k| {
            let acc: KahanSum = (0..n)
                .map(|m| dec.u(i, m) * dec.u(j, m) / dec.thetas[m].powi(k as i32))
                .collect();
            scale * acc.value()
        })
        .collect();
    Ok(CIntegrals { i, j, values })
}

/// Constant `c` in `P_i[N(t) = j | T_0 > t] - ℓ_j ≈ c t^{-α}` (`c t^{-1}` at
/// `α = 1/2`, where the `1/Γ(1 - 2α)` term vanishes).
pub fn rate_constant(dec: &SpectralDecomposition, alpha: FracOrder, i: usize, j: usize) -> Result<f64> {
    let a = alpha.value();
    if alpha.is_one() {
        return domain("rate constant is defined for α < 1");
    }
    if !(dec.thetas[0] > 0.0) {
        return domain("principal eigenvalue must be positive");
    }
    let ci1 = c_integrals(dec, i, 1, 4)?.values;
    let cij = c_integrals(dec, i, j, 3)?.values;
    // Limit ℓ_j = π_j C_{i,j,1} / (μ_1 C_{i,1,2}).
    let limit = dec.pi.get(j) * cij[1] / (dec.kill_rate * ci1[2]);
    if a == 0.5 {
        // Γ(1/2)/Γ(-1/2) = -1/2 turns the difference around.
        let g = gamma(0.5) / gamma(-0.5);
        Ok(-g * limit * (ci1[4] / ci1[2] - cij[3] / cij[1]))
    } else {
        Ok(limit * gamma_ratio_rate(alpha) * (ci1[3] / ci1[2] - cij[2] / cij[1]))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "class", rename_all = "snake_case")]
pub enum QsdClass {
    Unique { theta_star: f64 },
    /// A family indexed by `θ ∈ (0, θ*]`.
    Family { theta_star: f64 },
    None,
    Undecided,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QsdResult {
    pub theta: f64,
    /// Normalized `ν_1, ..., ν_nmax`.
    pub nu: Vec<f64>,
    /// Largest violation of the stationarity system, relative to its terms.
    pub residual: f64,
    /// `Σ ν_j` before normalization; equals one for a proper qsd, in which case
    /// `θ = μ_1 ν_1` carries over to the normalized vector.
    pub raw_mass: f64,
    pub classification: Option<QsdClass>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "outcome", rename_all = "snake_case")]
pub enum QsdOutcome {
    Accepted(QsdResult),
    Rejected { reason: String },
}

impl QsdOutcome {
    pub fn accepted(&self) -> Option<&QsdResult> {
        match self {
            QsdOutcome::Accepted(r) => Some(r),
            QsdOutcome::Rejected { .. } => None,
        }
    }
}

/// Entries below `-NEGATIVE_TOL · max ν` reject a candidate.
pub const NEGATIVE_TOL: f64 = 1e-12;

/// Solve `-θ ν_j = λ_{j-1} ν_{j-1} - (λ_j + μ_j) ν_j + μ_{j+1} ν_{j+1}` forward
/// from `ν_1 = θ/μ_1`, in double-double arithmetic.
pub fn qsd_solve(rates: &RateSchedule, theta: f64, nmax: usize) -> Result<QsdOutcome> {
    if nmax < 2 {
        return domain("nmax must be at least 2");
    }
    if !(theta >= 0.0) || !theta.is_finite() {
        return domain(format!("θ must be nonnegative, got {theta}"));
    }
    if theta == 0.0 {
        return Ok(QsdOutcome::Rejected { reason: "θ = 0 gives ν ≡ 0".into() });
    }
    let mu1 = rates.death(1)?;
    let mut nu = vec![Dd::ZERO, Dd::new(theta) / mu1];
    for j in 1..nmax {
        let lam_prev = if j > 1 { rates.birth(j - 1)? } else { 0.0 };
        let diag = Dd::new(rates.birth(j)?) + Dd::new(rates.death(j)?) - Dd::new(theta);
        let next = (diag * nu[j] - nu[j - 1] * lam_prev) / rates.death(j + 1)?;
        if !next.is_finite() {
            return Ok(QsdOutcome::Rejected { reason: format!("recursion overflowed at j={}", j + 1) });
        }
        nu.push(next);
    }
    let raw: Vec<f64> = nu[1..].iter().map(|x| x.to_f64()).collect();
    let max = raw.iter().cloned().fold(0.0, f64::max);
    if let Some(j) = raw.iter().position(|&v| v < -NEGATIVE_TOL * max) {
        return Ok(QsdOutcome::Rejected {
            reason: format!("ν_{} is negative: not a qsd for θ = {theta}", j + 1),
        });
    }
    if geometric_tail(&raw) == f64::INFINITY {
        return Ok(QsdOutcome::Rejected { reason: "Σν_j does not converge".into() });
    }
    let mass: KahanSum = raw.iter().copied().collect();
    let raw_mass = mass.value();
    let nu: Vec<f64> = raw.iter().map(|v| v / raw_mass).collect();
    let residual = stationarity_residual(rates, theta, &nu)?;
    Ok(QsdOutcome::Accepted(QsdResult { theta, nu, residual, raw_mass, classification: None }))
}

/// Scale-free residual of the stationarity system on rows `1..nmax-1`.
fn stationarity_residual(rates: &RateSchedule, theta: f64, nu: &[f64]) -> Result<f64> {
    let n = nu.len();
    let at = |j: usize| if j == 0 { 0.0 } else { nu[j - 1] };
    let mut worst: f64 = 0.0;
    let mut scale: f64 = 0.0;
    for j in 1..n {
        let lam_prev = if j > 1 { rates.birth(j - 1)? } else { 0.0 };
        let out = rates.birth(j)? + rates.death(j)?;
        let r = -theta * at(j) - (lam_prev * at(j - 1) - out * at(j) + rates.death(j + 1)? * at(j + 1));
        worst = worst.max(r.abs());
        scale = scale.max((out + theta) * at(j).abs());
    }
    Ok(if scale > 0.0 { worst / scale } else { 0.0 })
}

/// Truncation used for the `θ_1` trend in [`qsd_classify`].
pub const CLASSIFY_M: usize = 100;

/// Van Doorn dichotomy: `D < ∞` gives a unique qsd; `D = ∞` with `θ* > 0` a
/// family on `(0, θ*]`; `θ* = 0` none. `θ*` is read off `θ_1` at `M`, `2M`
/// and `4M`; a drop of more than 1% per doubling is taken as `θ* = 0`.
pub fn qsd_classify(rates: &RateSchedule, tolerance: f64) -> Result<QsdClass> {
    let cls = classify(rates, tolerance, 10_000)?;
    let sizes: Vec<usize> = match rates.max_state() {
        Some(k) => vec![k],
        None => vec![CLASSIFY_M, 2 * CLASSIFY_M, 4 * CLASSIFY_M],
    };
    let thetas = sizes
        .iter()
        .map(|&m| Ok(decompose_rates(rates, m, BoundaryPolicy::Reflect)?.thetas[0]))
        .collect::<Result<Vec<f64>>>()?;
    let last = *thetas.last().expect("non-empty");
    let decaying = thetas.windows(2).all(|w| w[1] < 0.99 * w[0]) && thetas.len() > 1;
    Ok(match cls.d {
        SeriesStatus::Convergent { .. } => QsdClass::Unique { theta_star: last },
        SeriesStatus::Diverged if decaying => QsdClass::None,
        SeriesStatus::Diverged => QsdClass::Family { theta_star: last },
        SeriesStatus::Undecided { .. } => QsdClass::Undecided,
    })
}

/// `(θ_1, ν)` with `ν_j ∝ π_j Q_{θ_1}(j)`, the qsd of the truncated chain.
pub fn principal_qsd(dec: &SpectralDecomposition) -> (f64, Vec<f64>) {
    let raw: Vec<f64> = (1..=dec.dim())
        .map(|j| (0.5 * dec.pi.ln(j)).exp() * dec.u(j, 0))
        .collect();
    let total: f64 = raw.iter().sum();
    (dec.thetas[0], raw.iter().map(|v| v / total).collect())
}

/// `max_{t, j} |Σ_i ν_i p_ij(t) - ν_j E_α(-θ t^α)|`.
pub fn qsd_stationarity_check(
    dec: &SpectralDecomposition,
    alpha: FracOrder,
    nu: &[f64],
    theta: f64,
    t_grid: &[f64],
) -> Result<f64> {
    let n = dec.dim();
    if nu.len() > n {
        return domain(format!("ν has {} entries, truncation has {n}", nu.len()));
    }
    let at = |i: usize| nu.get(i - 1).copied().unwrap_or(0.0);
    let mut worst: f64 = 0.0;
    for &t in t_grid {
        let f = dec.ml_factors(alpha, t)?;
        let e = ml_survival(alpha, theta, t)?;
        // Σ_i ν_i p_ij = √π_j Σ_k E_k U_jk Σ_i ν_i U_ik / √π_i
        let proj: Vec<f64> = (0..n)
            .map(|k| {
                let acc: KahanSum = (1..=n)
                    .map(|i| at(i) * dec.u(i, k) * (-0.5 * dec.pi.ln(i)).exp())
                    .collect();
                f[k] * acc.value()
            })
            .collect();
        for j in 1..=n {
            let acc: KahanSum = (0..n).map(|k| proj[k] * dec.u(j, k)).collect();
            let lhs = (0.5 * dec.pi.ln(j)).exp() * acc.value();
            worst = worst.max((lhs - at(j) * e).abs());
        }
    }
    Ok(worst)
}
