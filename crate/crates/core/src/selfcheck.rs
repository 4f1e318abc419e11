//! Embedded invariant suite run by `fracbd selfcheck`. Every check is cheap
//! (a few seconds in total) and independent of the others.

use serde::Serialize;

use crate::error::Result;
use crate::linear::{survival_classical, survival_fractional, LinearParams};
use crate::mlf::{ml_eval, ml_laplace_residual, ml_survival, FracOrder};
use crate::model::{build_generator, classify, pi_weights, BoundaryPolicy, RateSchedule};
use crate::numeric::quad::QuadConfig;
use crate::numeric::special::gamma;
use crate::paths::{estimate_pmf, SimMethod};
use crate::quasi::{principal_qsd, qld_coefficients, qsd_stationarity_check};
use crate::spectral::{decompose_rates, green_function};
use crate::stable::{sample_stable, RngStream};

#[derive(Debug, Clone, Serialize)]
pub struct CheckOutcome {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

fn al(a: f64) -> FracOrder {
    FracOrder::new(a).expect("valid order")
}

fn outcome(name: &'static str, r: Result<(bool, String)>) -> CheckOutcome {
    match r {
        Ok((passed, detail)) => CheckOutcome { name, passed, detail },
        Err(e) => CheckOutcome { name, passed: false, detail: format!("error: {e}") },
    }
}

fn ml_monotone() -> Result<(bool, String)> {
    let mut worst_step: f64 = 0.0;
    for a in [0.3, 0.5, 0.7, 0.9, 1.0] {
        // exp underflows past -745, so the unit order uses a shorter range.
        let lo: f64 = if a == 1.0 { -700.0 } else { -1e6 };
        let xs: Vec<f64> = (0..=400).map(|k| lo * (k as f64 / 400.0).powi(3)).collect();
        let vals = xs.iter().map(|&x| ml_eval(al(a), x)).collect::<Result<Vec<_>>>()?;
        if vals.iter().any(|v| !(*v > 0.0 && *v <= 1.0)) {
            return Ok((false, format!("value outside (0, 1] at α={a}")));
        }
        for w in vals.windows(2) {
            worst_step = worst_step.max(w[1] - w[0]);
        }
    }
    Ok((worst_step <= 0.0, format!("largest increase along the grid {worst_step:e}")))
}

fn laplace() -> Result<(bool, String)> {
    let mut worst: f64 = 0.0;
    for (a, th, s) in [(0.5, 1.0, 2.0), (0.9, 3.0, 0.5), (0.7, 0.5, 1.0)] {
        worst = worst.max(ml_laplace_residual(al(a), th, s, &QuadConfig::default())?);
    }
    Ok((worst <= 1e-6, format!("max residual {worst:e}")))
}

fn tail_limit() -> Result<(bool, String)> {
    let mut worst: f64 = 0.0;
    for a in [0.5, 0.7] {
        let t: f64 = 1e8;
        let v = gamma(1.0 - a) * t.powf(a) * ml_survival(al(a), 1.0, t)?;
        worst = worst.max((v - 1.0).abs());
    }
    Ok((worst <= 1e-2, format!("max relative deviation {worst:e}")))
}

fn stable_transform() -> Result<(bool, String)> {
    let n = 100_000;
    let mut rng = RngStream::new(2024, 0).rng();
    let a = al(0.7);
    let s = 1.0;
    let draws: Vec<f64> = (0..n).map(|_| (-s * sample_stable(a, &mut rng)).exp()).collect();
    let mean = draws.iter().sum::<f64>() / n as f64;
    let var = draws.iter().map(|d| (d - mean) * (d - mean)).sum::<f64>() / (n - 1) as f64;
    let se = (var / n as f64).sqrt();
    let target = (-(s.powf(0.7))).exp();
    let z = (mean - target).abs() / se;
    Ok((z <= 4.0, format!("|z| = {z:.2}")))
}

fn generator_structure() -> Result<(bool, String)> {
    let r = RateSchedule::linear(0.5, 1.0)?;
    let m = 50;
    let g = build_generator(&r, m, BoundaryPolicy::Reflect)?;
    let pi = pi_weights(&r, m)?;
    let sums = g.row_sums();
    let mut ok = (sums[0] + 1.0).abs() < 1e-14 && sums[1..].iter().all(|s| s.abs() < 1e-12);
    for i in 1..m {
        let l = pi.get(i) * g.entry(i, i + 1);
        let rr = pi.get(i + 1) * g.entry(i + 1, i);
        ok &= (l - rr).abs() <= 1e-13 * l;
    }
    Ok((ok, "row sums and detailed balance".into()))
}

fn spectral_conservation() -> Result<(bool, String)> {
    let r = RateSchedule::linear(0.5, 1.0)?;
    let dec = decompose_rates(&r, 60, BoundaryPolicy::Reflect)?;
    let mut worst: f64 = dec.orthonormality_residual();
    for a in [0.5, 1.0] {
        for t in [0.0, 0.5, 5.0, 50.0] {
            let f = dec.ml_factors(al(a), t)?;
            for i in [1, 4] {
                let row: f64 = (1..=60).map(|j| dec.transition_with(&f, i, j)).sum::<Result<f64>>()?;
                let absorbed = dec.absorption_with(&f, i)?;
                worst = worst.max((row + absorbed - 1.0).abs());
            }
        }
    }
    Ok((worst <= 1e-9, format!("max mass defect {worst:e}")))
}

fn green_oracle() -> Result<(bool, String)> {
    let r = RateSchedule::linear(0.5, 1.0)?;
    let g = green_function(&build_generator(&r, 200, BoundaryPolicy::Reflect)?)?;
    let mut worst: f64 = 0.0;
    for i0 in [1, 2, 5] {
        let q = qld_coefficients(&r, i0, 30)?;
        let q = q.limit().expect("subcritical QLD exists");
        for n in 1..=30 {
            worst = worst.max((q.coefficients[n - 1] - g[i0 - 1][n - 1]).abs());
        }
    }
    Ok((worst <= 1e-6, format!("max deviation {worst:e}")))
}

fn qsd_alpha_free() -> Result<(bool, String)> {
    let r = RateSchedule::linear(0.5, 1.0)?;
    let dec = decompose_rates(&r, 60, BoundaryPolicy::Reflect)?;
    let (theta, nu) = principal_qsd(&dec);
    let mut worst: f64 = 0.0;
    for a in [0.5, 0.7, 1.0] {
        worst = worst.max(qsd_stationarity_check(&dec, al(a), &nu, theta, &[0.1, 1.0, 10.0])?);
    }
    Ok((worst <= 1e-6, format!("max deviation {worst:e}")))
}

fn linear_consistency() -> Result<(bool, String)> {
    let p = LinearParams::new(0.5, 1.0)?;
    let dec = decompose_rates(&p.rates(), 200, BoundaryPolicy::Reflect)?;
    let mut worst: f64 = 0.0;
    for t in [0.5, 1.0, 3.0] {
        let c = survival_classical(&p, t)?;
        worst = worst.max((survival_fractional(&p, FracOrder::ONE, t, 10_000)?.value - c).abs());
        let f = dec.ml_factors(FracOrder::ONE, t)?;
        worst = worst.max((dec.survival_with(&f, 1)? - c).abs());
    }
    Ok((worst <= 1e-6, format!("max deviation {worst:e}")))
}

fn classification() -> Result<(bool, String)> {
    let sub = classify(&RateSchedule::linear(0.5, 1.0)?, 1e-10, 2000)?;
    let crit = classify(&RateSchedule::linear(1.0, 1.0)?, 1e-10, 2000)?;
    let sup = classify(&RateSchedule::linear(2.0, 1.0)?, 1e-10, 2000)?;
    let ok = sub.a.is_diverged()
        && sub.b.is_convergent()
        && crit.a.is_diverged()
        && crit.b.is_diverged()
        && sup.a.is_convergent();
    Ok((ok, "linear regime table".into()))
}

fn determinism() -> Result<(bool, String)> {
    let r = RateSchedule::linear(0.5, 1.0)?;
    let a = estimate_pmf(SimMethod::Renewal, &r, al(0.7), 1, 1.0, 200, 7)?;
    let b = estimate_pmf(SimMethod::Renewal, &r, al(0.7), 1, 1.0, 200, 7)?;
    Ok((a == b, "repeated seeded estimate".into()))
}

pub fn run_selfcheck() -> Vec<CheckOutcome> {
    vec![
        outcome("ml_positive_monotone", ml_monotone()),
        outcome("ml_laplace_identity", laplace()),
        outcome("ml_tail_limit", tail_limit()),
        outcome("stable_laplace_transform", stable_transform()),
        outcome("generator_structure", generator_structure()),
        outcome("spectral_conservation", spectral_conservation()),
        outcome("green_function_oracle", green_oracle()),
        outcome("qsd_alpha_independence", qsd_alpha_free()),
        outcome("linear_closed_forms", linear_consistency()),
        outcome("series_classification", classification()),
        outcome("seed_determinism", determinism()),
    ]
}
