//! One-parameter Mittag-Leffler function `E_α(x) = Σ x^k / Γ(αk + 1)` on the
//! real line, with the emphasis on the negative half-axis where it acts as the
//! fractional replacement of `exp(-θt)`.
//!
//! Evaluation strategy for `x = -a < 0`, `0 < α < 1`:
//!
//! * `a <= series_threshold`: power series with compensated summation, accepted
//!   only when the cancellation factor `Σ|terms| / |sum|` keeps the error below
//!   the target;
//! * `a >= asym_threshold`: the algebraic expansion
//!   `Σ_{m=1}^{N} (-1)^{m+1} a^{-m} / Γ(1 - mα)`, accepted when the first
//!   omitted term is below the target;
//! * otherwise: the Laplace-type representation
//!   `E_α(-a) = sin(απ)/(απ) ∫_0^∞ exp(-(a v)^{1/α}) / (v² + 2v cos(απ) + 1) dv`
//!   integrated adaptively.
//!
//! `α = 1` is the exponential.

use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::numeric::quad::{self, QuadConfig};
use crate::numeric::special::{gamma, ln_gamma, recip_gamma};
use crate::numeric::KahanSum;

/// Fractional order `α ∈ (0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct FracOrder(f64);

impl FracOrder {
    pub const ONE: FracOrder = FracOrder(1.0);

    pub fn new(alpha: f64) -> Result<Self> {
        if alpha > 0.0 && alpha <= 1.0 {
            Ok(FracOrder(alpha))
        } else {
            domain(format!("fractional order must lie in (0, 1], got {alpha}"))
        }
    }

    pub fn value(self) -> f64 {
        self.0
    }

    pub fn is_one(self) -> bool {
        self.0 == 1.0
    }
}

impl TryFrom<f64> for FracOrder {
    type Error = Error;
    fn try_from(v: f64) -> Result<Self> {
        FracOrder::new(v)
    }
}

impl From<FracOrder> for f64 {
    fn from(a: FracOrder) -> f64 {
        a.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MlEvalConfig {
    /// `|x|` at or below which the power series is tried.
    pub series_threshold: f64,
    /// `|x|` at or above which the asymptotic expansion is tried.
    pub asym_threshold: f64,
    /// Maximum number of asymptotic terms.
    pub asym_terms: usize,
    pub target_rel_err: f64,
}

impl Default for MlEvalConfig {
    fn default() -> Self {
        MlEvalConfig {
            series_threshold: 15.0,
            asym_threshold: 40.0,
            asym_terms: 12,
            target_rel_err: 1e-10,
        }
    }
}

impl MlEvalConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.series_threshold <= self.asym_threshold) {
            return domain("series_threshold must not exceed asym_threshold");
        }
        if !(self.target_rel_err > 0.0) {
            return domain("target_rel_err must be positive");
        }
        if self.asym_terms < 2 {
            return domain("asym_terms must be at least 2");
        }
        Ok(())
    }
}

/// Which evaluation branch produced a value.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MlMethod {
    Exponential,
    Series,
    Asymptotic,
    Integral,
}

/// `E_α(x)` with the default configuration.
pub fn ml_eval(alpha: FracOrder, x: f64) -> Result<f64> {
    ml_eval_traced(alpha, x, &MlEvalConfig::default()).map(|(v, _)| v)
}

pub fn ml_eval_with(alpha: FracOrder, x: f64, cfg: &MlEvalConfig) -> Result<f64> {
    ml_eval_traced(alpha, x, cfg).map(|(v, _)| v)
}

/// Evaluate and report the branch that was used.
pub fn ml_eval_traced(alpha: FracOrder, x: f64, cfg: &MlEvalConfig) -> Result<(f64, MlMethod)> {
    cfg.validate()?;
    if x.is_nan() {
        return domain("argument is NaN");
    }
    if x == 0.0 {
        return Ok((1.0, MlMethod::Series));
    }
    let a = alpha.value();
    if alpha.is_one() {
        let v = x.exp();
        if v.is_finite() {
            return Ok((v, MlMethod::Exponential));
        }
        return Err(Error::UnsupportedDomain(format!("exp({x}) overflows")));
    }
    if x > 0.0 {
        // No cancellation on the positive axis; only the moderate range is supported.
        if x <= cfg.series_threshold {
            if let Some((v, _)) = power_series(a, x) {
                return Ok((v, MlMethod::Series));
            }
        }
        return Err(Error::UnsupportedDomain(format!(
            "positive argument {x} beyond the series range {}",
            cfg.series_threshold
        )));
    }
    if x.is_infinite() {
        return Ok((0.0, MlMethod::Asymptotic));
    }
    let mag = -x;

    if mag <= cfg.series_threshold && mag.powf(1.0 / a) <= 30.0 {
        if let Some((v, abs_sum)) = power_series(a, x) {
            // Term error is dominated by ln Γ rounding (~1e-16 · |ln Γ|) plus summation.
            let err = abs_sum * 4e-14;
            if v > 0.0 && err <= cfg.target_rel_err * v {
                return Ok((v, MlMethod::Series));
            }
        }
    }
    if mag >= cfg.asym_threshold {
        let v = tail_sum(a, mag, cfg.asym_terms);
        let next = first_omitted_term(a, mag, cfg.asym_terms);
        if v > 0.0 && next <= cfg.target_rel_err * v {
            return Ok((v, MlMethod::Asymptotic));
        }
    }
    integral_repr(a, mag, cfg.target_rel_err).map(|v| (v, MlMethod::Integral))
}

/// Returns `(sum, Σ|terms|)`, or `None` when the series fails to settle.
fn power_series(a: f64, x: f64) -> Option<(f64, f64)> {
    let mag = x.abs();
    let ln_mag = mag.ln();
    let negative = x < 0.0;
    let peak = mag.powf(1.0 / a) / a;
    let mut acc = KahanSum::new();
    let mut abs_sum = 0.0;
    for k in 0..5000usize {
        let kf = k as f64;
        let term_mag = if k == 0 {
            1.0
        } else {
            (kf * ln_mag - ln_gamma(a * kf + 1.0)).exp()
        };
        let term = if negative && k % 2 == 1 { -term_mag } else { term_mag };
        acc.add(term);
        abs_sum += term_mag;
        if kf > peak && term_mag <= 1e-18 * abs_sum {
            return Some((acc.value(), abs_sum));
        }
    }
    None
}

fn tail_term(a: f64, mag: f64, m: usize) -> f64 {
    let r = recip_gamma(1.0 - m as f64 * a);
    if r == 0.0 {
        return 0.0;
    }
    let sign = if m % 2 == 1 { 1.0 } else { -1.0 };
    sign * r * (-(m as f64) * mag.ln()).exp()
}

fn tail_sum(a: f64, mag: f64, n_terms: usize) -> f64 {
    let mut acc = KahanSum::new();
    // Smallest terms first.
    for m in (1..=n_terms).rev() {
        acc.add(tail_term(a, mag, m));
    }
    acc.value()
}

fn first_omitted_term(a: f64, mag: f64, n_terms: usize) -> f64 {
    (n_terms + 1..n_terms + 8)
        .map(|m| tail_term(a, mag, m).abs())
        .find(|t| *t > 0.0)
        .unwrap_or(0.0)
}

fn integral_repr(a: f64, mag: f64, target: f64) -> Result<f64> {
    let c = (a * std::f64::consts::PI).cos();
    let s = (a * std::f64::consts::PI).sin();
    let inv_a = 1.0 / a;
    let f = |v: f64| {
        let e = (mag * v).powf(inv_a);
        if e > 745.0 {
            return 0.0;
        }
        (-e).exp() / (v * v + 2.0 * v * c + 1.0)
    };
    // Past v_max the integrand is below e^{-60} relative to its peak.
    let v_max = 60f64.powf(a) / mag;
    let mut pts = vec![0.0, (1.0 / mag).min(v_max)];
    if v_max > 1.0 {
        let w = s.max(1e-3);
        for p in [1.0 - w, 1.0, 1.0 + w] {
            if p > pts[pts.len() - 1] && p < v_max {
                pts.push(p);
            }
        }
    }
    pts.push(v_max);
    let cfg = QuadConfig {
        abs_tol: 1e-300,
        rel_tol: target * 0.05,
        max_intervals: 20_000,
    };
    let r = quad::integrate_breakpoints(f, &pts, &cfg)?;
    Ok(s / (a * std::f64::consts::PI) * r.value)
}

/// `E_α(-θ t^α)`, the fractional survival kernel.
pub fn ml_survival(alpha: FracOrder, theta: f64, t: f64) -> Result<f64> {
    ml_survival_with(alpha, theta, t, &MlEvalConfig::default())
}

pub fn ml_survival_with(alpha: FracOrder, theta: f64, t: f64, cfg: &MlEvalConfig) -> Result<f64> {
    if !(theta > 0.0) {
        return domain(format!("theta must be positive, got {theta}"));
    }
    if !(t >= 0.0) {
        return domain(format!("time must be nonnegative, got {t}"));
    }
    if t == 0.0 {
        return Ok(1.0);
    }
    ml_eval_with(alpha, -theta * t.powf(alpha.value()), cfg)
}

/// Partial sum of the large-argument expansion of `E_α(-θ t^α)`.
pub fn ml_tail_expansion(alpha: FracOrder, theta: f64, t: f64, n_terms: usize) -> Result<f64> {
    ml_tail_expansion_with(alpha, theta, t, n_terms, &MlEvalConfig::default())
}

pub fn ml_tail_expansion_with(
    alpha: FracOrder,
    theta: f64,
    t: f64,
    n_terms: usize,
    cfg: &MlEvalConfig,
) -> Result<f64> {
    if !(theta > 0.0) || !(t > 0.0) {
        return domain("theta and t must be positive");
    }
    if n_terms < 1 || n_terms > cfg.asym_terms {
        return domain(format!(
            "n_terms must be in 1..={}, got {n_terms}",
            cfg.asym_terms
        ));
    }
    let mag = theta * t.powf(alpha.value());
    if mag < cfg.asym_threshold {
        return Err(Error::Accuracy(format!(
            "θt^α = {mag} below the asymptotic threshold {}",
            cfg.asym_threshold
        )));
    }
    if alpha.is_one() {
        // Every 1/Γ(1 - m) vanishes; the algebraic part of exp(-x) is empty.
        return Ok(0.0);
    }
    Ok(tail_sum(alpha.value(), mag, n_terms))
}

/// `lim_{t→∞} t^α E_α(-θ t^α) = 1/(θ Γ(1-α))`.
pub fn ml_tail_limit(alpha: FracOrder, theta: f64) -> f64 {
    recip_gamma(1.0 - alpha.value()) / theta
}

/// `|∫_0^∞ e^{-st} E_α(-θ t^α) dt - s^{α-1}/(s^α + θ)|`.
pub fn ml_laplace_residual(alpha: FracOrder, theta: f64, s: f64, quad_cfg: &QuadConfig) -> Result<f64> {
    if !(s > 0.0) || !(theta > 0.0) {
        return domain("s and theta must be positive");
    }
    let a = alpha.value();
    let exact = s.powf(a - 1.0) / (s.powf(a) + theta);
    // Since 0 < E ≤ 1 the tail beyond T is below e^{-sT}/s.
    let horizon = 45.0 / s;
    let tail_bound = (-s * horizon).exp() / s;
    let failed = std::cell::Cell::new(None);
    let f = |t: f64| {
        if t == 0.0 {
            return 1.0;
        }
        match ml_survival(alpha, theta, t) {
            Ok(v) => (-s * t).exp() * v,
            Err(e) => {
                failed.set(Some(e));
                f64::NAN
            }
        }
    };
    let pts: Vec<f64> = [0.0, 1e-6, 1e-3, 0.1, 1.0, 10.0]
        .iter()
        .map(|p| p / s)
        .chain(std::iter::once(horizon))
        .collect();
    let r = quad::integrate_breakpoints(f, &pts, quad_cfg);
    if let Some(e) = failed.take() {
        return Err(e);
    }
    let r = r?;
    let achieved = r.error + tail_bound;
    let resid = (r.value - exact).abs();
    if achieved > quad_cfg.abs_tol.max(quad_cfg.rel_tol * exact) * 10.0 {
        return Err(Error::Quadrature {
            achieved,
            requested: quad_cfg.abs_tol.max(quad_cfg.rel_tol * exact),
        });
    }
    Ok(resid)
}

/// `Γ(1-α)/Γ(1-2α)`; zero at α = 1/2 where `1/Γ(0)` vanishes.
pub fn gamma_ratio_rate(alpha: FracOrder) -> f64 {
    let a = alpha.value();
    gamma(1.0 - a) * recip_gamma(1.0 - 2.0 * a)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numeric::special::erfc;

    fn al(a: f64) -> FracOrder {
        FracOrder::new(a).unwrap()
    }

    #[test]
    fn exponential_case() {
        let v = ml_eval(FracOrder::ONE, -1.0).unwrap();
        assert!((v - 0.367_879_441_171_442_3).abs() < 1e-16);
        let v = ml_survival(FracOrder::ONE, 2.0, 1.0).unwrap();
        assert!((v - (-2.0f64).exp()).abs() < 1e-16);
    }

    #[test]
    fn zero_argument_is_one() {
        assert_eq!(ml_eval(al(0.5), 0.0).unwrap(), 1.0);
        for a in [0.2, 0.6, 1.0] {
            assert_eq!(ml_survival(al(a), 3.0, 0.0).unwrap(), 1.0);
        }
    }

    #[test]
    fn invalid_order_rejected() {
        assert!(FracOrder::new(0.0).is_err());
        assert!(FracOrder::new(1.2).is_err());
        assert!(FracOrder::new(f64::NAN).is_err());
    }

    #[test]
    fn large_positive_argument_unsupported() {
        let err = ml_eval(al(0.5), 100.0).unwrap_err();
        assert!(matches!(err, Error::UnsupportedDomain(_)));
        assert!(ml_eval(al(0.5), 1.0).is_ok());
    }

    #[test]
    fn half_order_matches_erfc_in_series_range() {
        // statrs' erfc is only good to ~1e-10; the high-precision oracle lives in
        // the integration tests.
        for x in [0.3, 1.0, 2.0] {
            let v = ml_eval(al(0.5), -x).unwrap();
            let r = (x * x).exp() * erfc(x);
            assert!((v - r).abs() / r < 1e-9, "x={x}: {v} vs {r}");
        }
    }

    #[test]
    fn branches_agree_at_handover() {
        let cfg = MlEvalConfig::default();
        for a in [0.3, 0.5, 0.7, 0.9, 0.99] {
            for mag in [5.0, 15.0, 40.0, 80.0] {
                let v = ml_eval_with(al(a), -mag, &cfg).unwrap();
                let vi = integral_repr(a, mag, 1e-12).unwrap();
                assert!((v - vi).abs() <= 1e-10 * vi, "α={a} x=-{mag}: {v} vs {vi}");
            }
        }
    }

    #[test]
    fn tail_expansion_half_order_drops_even_terms() {
        let a = al(0.5);
        let t = 1e6;
        let one = ml_tail_expansion(a, 1.0, t, 1).unwrap();
        let two = ml_tail_expansion(a, 1.0, t, 2).unwrap();
        assert_eq!(one, two);
        let lead = 1.0 / (std::f64::consts::PI.sqrt() * t.sqrt());
        assert!((one - lead).abs() < 1e-15 * lead);
    }

    #[test]
    fn tail_expansion_single_term() {
        let t: f64 = 1e6;
        let v = ml_tail_expansion(al(0.7), 1.0, t, 1).unwrap();
        let exp = 1.0 / (t.powf(0.7) * gamma(0.3));
        assert!((v - exp).abs() < 1e-14 * exp);
    }

    #[test]
    fn tail_expansion_matches_eval() {
        let a = al(0.7);
        let v = ml_tail_expansion(a, 2.0, 1e4, 3).unwrap();
        let e = ml_survival(a, 2.0, 1e4).unwrap();
        assert!((v - e).abs() < 1e-6 * e);
    }

    #[test]
    fn tail_expansion_rejects_small_argument() {
        let err = ml_tail_expansion(al(0.7), 1.0, 2.0, 2).unwrap_err();
        assert!(matches!(err, Error::Accuracy(_)));
        assert!(ml_tail_expansion(al(0.7), 1.0, 1e6, 13).is_err());
    }

    #[test]
    fn laplace_residual_exponential_case() {
        let r = ml_laplace_residual(FracOrder::ONE, 1.0, 1.0, &QuadConfig::default()).unwrap();
        assert!(r < 1e-10);
    }

    #[test]
    fn laplace_residual_examples() {
        for (a, th, s) in [(0.5, 1.0, 2.0), (0.9, 3.0, 0.5)] {
            let r = ml_laplace_residual(al(a), th, s, &QuadConfig::default()).unwrap();
            assert!(r <= 1e-6, "residual {r}");
        }
    }

    #[test]
    fn gamma_ratio_at_half_is_zero() {
        assert_eq!(gamma_ratio_rate(al(0.5)), 0.0);
        assert!(gamma_ratio_rate(al(0.6)) < 0.0);
    }
}
