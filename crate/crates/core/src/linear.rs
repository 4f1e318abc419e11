//! Closed forms for the linear process `λ_i = iλ`, `μ_i = iμ` started at 1.

use serde::{Deserialize, Serialize};

use crate::error::{domain, Result};
use crate::mlf::{ml_survival, FracOrder};
use crate::model::{BoundaryPolicy, RateSchedule};
use crate::numeric::quad::{integrate_breakpoints, QuadConfig};
use crate::numeric::special::recip_gamma;
use crate::numeric::KahanSum;
use crate::paths::{estimate_pmfs, SimMethod};
use crate::quasi::{qld_from_coefficients, spectral_conditional, QldOutcome};
use crate::spectral::decompose_rates;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    Subcritical,
    Critical,
    Supercritical,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinearParams {
    pub lambda: f64,
    pub mu: f64,
}

impl LinearParams {
    pub fn new(lambda: f64, mu: f64) -> Result<Self> {
        if !(lambda > 0.0 && mu > 0.0 && lambda.is_finite() && mu.is_finite()) {
            return domain(format!("linear rates must be positive, got λ={lambda}, μ={mu}"));
        }
        Ok(LinearParams { lambda, mu })
    }

    pub fn regime(&self) -> Regime {
        if self.lambda < self.mu {
            Regime::Subcritical
        } else if self.lambda > self.mu {
            Regime::Supercritical
        } else {
            Regime::Critical
        }
    }

    pub fn rates(&self) -> RateSchedule {
        RateSchedule::linear(self.lambda, self.mu).expect("validated rates")
    }
}

/// `p_{1,j}(t)` at `α = 1`, written as `(1 - a)(1 - b) b^{j-1}` with factors
/// that stay in `[0, 1]` for either sign of `λ - μ`.
pub fn p1j_classical(p: &LinearParams, j: usize, t: f64) -> Result<f64> {
    if j == 0 {
        return domain("j must be at least 1");
    }
    if !(t >= 0.0) {
        return domain(format!("time must be nonnegative, got {t}"));
    }
    if t == 0.0 {
        return Ok(if j == 1 { 1.0 } else { 0.0 });
    }
    let (l, m) = (p.lambda, p.mu);
    let k = (j - 1) as i32;
    Ok(match p.regime() {
        Regime::Critical => {
            let x = l * t;
            (x / (1.0 + x)).powi(k) / (1.0 + x).powi(2)
        }
        Regime::Supercritical => {
            let e = (-(l - m) * t).exp();
            let den = l - m * e;
            let b = -l * (-(l - m) * t).exp_m1() / den;
            ((l - m) / den) * ((l - m) * e / den) * b.powi(k)
        }
        Regime::Subcritical => {
            let f = (-(m - l) * t).exp();
            let den = m - l * f;
            let b = -l * (-(m - l) * t).exp_m1() / den;
            ((m - l) * f / den) * ((m - l) / den) * b.powi(k)
        }
    })
}

/// `P_1[T_0 > t]` at `α = 1`. The geometric series of the non-extinction
/// display are summed in closed form.
pub fn survival_classical(p: &LinearParams, t: f64) -> Result<f64> {
    if !(t >= 0.0) {
        return domain(format!("time must be nonnegative, got {t}"));
    }
    let (l, m) = (p.lambda, p.mu);
    Ok(match p.regime() {
        Regime::Critical => 1.0 / (1.0 + l * t),
        Regime::Subcritical => {
            let f = (-(m - l) * t).exp();
            (m - l) * f / (m - l * f)
        }
        Regime::Supercritical => {
            let e = (-(l - m) * t).exp();
            (l - m) / (l - m * e)
        }
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SeriesValue {
    pub value: f64,
    pub terms: usize,
    /// Bound on the omitted terms (quadrature error estimate in the critical case).
    pub tail_bound: f64,
    /// `tail_bound` met the relative target.
    pub converged: bool,
}

/// Relative size of the geometric tail bound at which series are cut.
pub const SERIES_REL_TOL: f64 = 1e-14;

/// `P_1[T_{0,α} > t]`:
///
/// * `λ < μ`: `((μ-λ)/λ) Σ_{m≥1} (λ/μ)^m E_α(-(μ-λ) m t^α)`;
/// * `λ > μ`: `((λ-μ)/λ) (1 + Σ_{m≥1} (μ/λ)^m E_α(-(λ-μ) m t^α))`;
/// * `λ = μ`: `∫_0^∞ e^{-z} E_α(-λ t^α z) dz`.
///
/// Series stop once the bound `c r^{n+1} E_α(·n) / (1 - r)` on the remainder
/// falls below `SERIES_REL_TOL` of the partial sum, or at `n_terms`.
pub fn survival_fractional(p: &LinearParams, alpha: FracOrder, t: f64, n_terms: usize) -> Result<SeriesValue> {
    if !(t >= 0.0) {
        return domain(format!("time must be nonnegative, got {t}"));
    }
    if n_terms == 0 {
        return domain("n_terms must be at least 1");
    }
    let (l, m) = (p.lambda, p.mu);
    match p.regime() {
        Regime::Critical => critical_survival(l, alpha, t),
        regime => {
            let (gap, r, pref, base) = if regime == Regime::Subcritical {
                (m - l, l / m, (m - l) / l, 0.0)
            } else {
                (l - m, m / l, (l - m) / l, 1.0)
            };
            let mut acc = KahanSum::new();
            acc.add(base);
            let mut weight = 1.0;
            let mut tail = f64::INFINITY;
            let mut used = 0;
            for k in 1..=n_terms {
                weight *= r;
                let e = ml_survival(alpha, gap * k as f64, t)?;
                acc.add(weight * e);
                used = k;
                tail = weight * r * e / (1.0 - r);
                if tail <= SERIES_REL_TOL * acc.value() {
                    break;
                }
            }
            Ok(SeriesValue {
                value: pref * acc.value(),
                terms: used,
                tail_bound: pref * tail,
                converged: tail <= SERIES_REL_TOL * acc.value(),
            })
        }
    }
}

fn critical_survival(lambda: f64, alpha: FracOrder, t: f64) -> Result<SeriesValue> {
    if t == 0.0 {
        return Ok(SeriesValue { value: 1.0, terms: 0, tail_bound: 0.0, converged: true });
    }
    if alpha.is_one() {
        return Ok(SeriesValue { value: 1.0 / (1.0 + lambda * t), terms: 0, tail_bound: 0.0, converged: true });
    }
    let c = lambda * t.powf(alpha.value());
    // e^{-z} E ≤ e^{-z}: cutting at z = 40 drops less than 5e-18.
    let z_max = 40.0;
    let mut pts = vec![0.0];
    for s in [1e-3, 1e-2, 0.1, 1.0, 10.0] {
        let z = s / c;
        if z < z_max && z > *pts.last().expect("non-empty") {
            pts.push(z);
        }
    }
    for z in [1.0, 5.0, 15.0] {
        if z > *pts.last().expect("non-empty") {
            pts.push(z);
        }
    }
    pts.push(z_max);
    let cfg = QuadConfig { abs_tol: 1e-15, rel_tol: 1e-12, max_intervals: 2000 };
    let f = |z: f64| (-z).exp() * ml_survival(alpha, lambda, t * z.powf(1.0 / alpha.value())).unwrap_or(f64::NAN);
    let r = integrate_breakpoints(f, &pts, &cfg)?;
    let tail = (-z_max).exp();
    Ok(SeriesValue {
        value: r.value,
        terms: r.evaluations,
        tail_bound: r.error + tail,
        converged: true,
    })
}

/// `lim t^α P_1[T_{0,α} > t] = -ln(1 - λ/μ) / (λ Γ(1-α))` for `λ < μ`.
pub fn tail_constant_subcritical(p: &LinearParams, alpha: FracOrder) -> Result<f64> {
    if p.regime() != Regime::Subcritical {
        return domain("tail constant requires λ < μ");
    }
    if alpha.is_one() {
        return domain("the t^α tail law needs α < 1");
    }
    let rho = p.lambda / p.mu;
    Ok(-(-rho).ln_1p() * recip_gamma(1.0 - alpha.value()) / p.lambda)
}

/// Quasi-limiting distribution of the linear process from `i0`:
/// `P_{i0,n} = (ρ^{n-1} / (nμ)) Σ_{m=0}^{K} ρ^{-m}`, `K = min(i0-1, n-1)`,
/// `ρ = λ/μ`.
pub fn qld_linear(p: &LinearParams, i0: usize, nmax: usize) -> Result<QldOutcome> {
    if i0 == 0 || nmax < i0 {
        return domain(format!("need 1 <= i0 <= nmax, got i0={i0}, nmax={nmax}"));
    }
    if p.regime() != Regime::Subcritical {
        return Ok(QldOutcome::NoLimit {
            reason: "λ ≥ μ: no quasi-limiting distribution".into(),
        });
    }
    let rho = p.lambda / p.mu;
    let coefficients: Vec<f64> = (1..=nmax)
        .map(|n| {
            let k = (i0 - 1).min(n - 1);
            // Σ_{m=0}^{K} ρ^{n-1-m} = ρ^{n-1-K} (1 - ρ^{K+1}) / (1 - ρ)
            let head = -(((k + 1) as f64) * rho.ln()).exp_m1();
            let s = rho.powi((n - 1 - k) as i32) * head / (1.0 - rho);
            s / (n as f64 * p.mu)
        })
        .collect();
    // Beyond nmax ≥ i0 the coefficients are c ρ^n / n, bounded by a geometric tail.
    let last = coefficients[nmax - 1];
    let tail = last * rho / (1.0 - rho);
    Ok(QldOutcome::Limit(qld_from_coefficients(i0, coefficients, tail)))
}

/// The `i0 → ∞` limit of the coefficients, `(1 - ρ^n) / (n (μ - λ))`. It
/// behaves like `1/n`, so it cannot be normalized.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InfiniteStartLimit {
    pub coefficients: Vec<f64>,
    pub normalizable: bool,
}

pub fn infinite_start_limit(p: &LinearParams, nmax: usize) -> Result<InfiniteStartLimit> {
    if p.regime() != Regime::Subcritical {
        return domain("requires λ < μ");
    }
    let rho = p.lambda / p.mu;
    let coefficients = (1..=nmax)
        .map(|n| -((n as f64) * rho.ln()).exp_m1() / (n as f64 * (p.mu - p.lambda)))
        .collect();
    Ok(InfiniteStartLimit { coefficients, normalizable: false })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SupercriticalTail {
    /// `lim P_1[T_{0,α} > t] = (λ - μ)/λ`.
    pub limit: f64,
    /// `lim t^α (P_1[T_{0,α} > t] - limit) = -ln(1 - μ/λ) / (λ Γ(1-α))`.
    pub rate: f64,
    /// `t^α (P_1[T_{0,α} > t] - limit)` at the requested `t`.
    pub scaled_deviation: f64,
}

pub fn supercritical_tail(p: &LinearParams, alpha: FracOrder, t: f64) -> Result<SupercriticalTail> {
    if p.regime() != Regime::Supercritical {
        return domain("supercritical tail requires λ > μ");
    }
    let limit = (p.lambda - p.mu) / p.lambda;
    let rate = -(-p.mu / p.lambda).ln_1p() * recip_gamma(1.0 - alpha.value()) / p.lambda;
    let s = survival_fractional(p, alpha, t, 100_000)?.value;
    let scaled_deviation = t.powf(alpha.value()) * (s - limit);
    Ok(SupercriticalTail { limit, rate, scaled_deviation })
}

/// `f(t) = t^α (ln ln t^α)^{1-α}`; defined for `t^α > e`.
pub fn iterated_log_scale(alpha: FracOrder, t: f64) -> Option<f64> {
    let a = alpha.value();
    let ta = t.powf(a);
    let ll = ta.ln().ln();
    (ta.ln() > 1.0).then(|| ta * ll.powf(1.0 - a))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CriticalWitness {
    pub t_grid: Vec<f64>,
    /// Empirical `P_1[T_{0,α} > t]`.
    pub survival: Vec<f64>,
    /// `f(t) · survival`, `None` where `f` is undefined.
    pub scaled_survival: Vec<Option<f64>>,
    /// Conditional mass on `{1..=j_max}` given survival, and its standard error.
    pub conditional_mass: Vec<f64>,
    pub conditional_se: Vec<f64>,
    pub j_max: usize,
    /// Every defined `scaled_survival` entry is finite and positive.
    pub bounded: bool,
    /// Each step drops by more than three combined standard errors.
    pub decreasing: bool,
}

/// Monte Carlo witness that the critical process has no quasi-limiting
/// distribution: the conditional mass of any fixed finite set keeps falling.
pub fn critical_no_qld_witness(
    p: &LinearParams,
    alpha: FracOrder,
    t_grid: &[f64],
    n_paths: u64,
    seed: u64,
    j_max: usize,
) -> Result<CriticalWitness> {
    if p.regime() != Regime::Critical {
        return domain("the witness requires λ = μ");
    }
    if t_grid.windows(2).any(|w| w[1] <= w[0]) {
        return domain("t_grid must be strictly increasing");
    }
    let pmfs = estimate_pmfs(SimMethod::Renewal, &p.rates(), alpha, 1, t_grid, n_paths, seed)?;
    let mut survival = Vec::new();
    let mut scaled = Vec::new();
    let mut mass = Vec::new();
    let mut se = Vec::new();
    for (pmf, &t) in pmfs.iter().zip(t_grid) {
        let s = pmf.survival();
        let alive = s * pmf.n_paths as f64;
        let inside: f64 = (1..=j_max).map(|j| pmf.get(j)).sum();
        let c = if s > 0.0 { inside / s } else { f64::NAN };
        survival.push(s);
        scaled.push(iterated_log_scale(alpha, t).map(|f| f * s));
        mass.push(c);
        se.push((c * (1.0 - c) / alive).sqrt());
    }
    let bounded = scaled.iter().flatten().all(|v| v.is_finite() && *v > 0.0);
    let decreasing = (1..mass.len()).all(|k| {
        let margin = 3.0 * (se[k] * se[k] + se[k - 1] * se[k - 1]).sqrt();
        mass[k - 1] - mass[k] > margin
    });
    Ok(CriticalWitness {
        t_grid: t_grid.to_vec(),
        survival,
        scaled_survival: scaled,
        conditional_mass: mass,
        conditional_se: se,
        j_max,
        bounded,
        decreasing,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CriticalControl {
    pub m: usize,
    pub conditional_mass: Vec<f64>,
    /// Each step drops by more than `1e-12`.
    pub decreasing: bool,
    /// The last two entries agree within `1e-8`.
    pub converged: bool,
}

/// Classical (`α = 1`) control for the witness: the critical chain reflected
/// at `m` is a finite killed chain, so its conditional law settles on the
/// principal eigenvector instead of draining away.
pub fn critical_truncated_control(p: &LinearParams, m: usize, t_grid: &[f64], j_max: usize) -> Result<CriticalControl> {
    if p.regime() != Regime::Critical {
        return domain("the control requires λ = μ");
    }
    if j_max > m {
        return domain("j_max must not exceed the truncation");
    }
    let dec = decompose_rates(&p.rates(), m, BoundaryPolicy::Reflect)?;
    let mass: Vec<f64> = t_grid
        .iter()
        .map(|&t| Ok(spectral_conditional(&dec, FracOrder::ONE, 1, t)?[..j_max].iter().sum()))
        .collect::<Result<_>>()?;
    let decreasing = mass.windows(2).all(|w| w[0] - w[1] > 1e-12);
    let converged = mass.len() >= 2 && (mass[mass.len() - 1] - mass[mass.len() - 2]).abs() < 1e-8;
    Ok(CriticalControl { m, conditional_mass: mass, decreasing, converged })
}
