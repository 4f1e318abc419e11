//! Acceptance criteria 1–13. Runs as a plain binary so that every criterion
//! prints exactly one PASS/FAIL line; exits nonzero if any fails.

mod common;

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::{Duration, Instant};

use fracbd::linear::{critical_no_qld_witness, critical_truncated_control, survival_fractional, LinearParams};
use fracbd::mlf::{ml_eval, ml_laplace_residual, ml_survival, FracOrder};
use fracbd::model::{build_generator, BoundaryPolicy, RateSchedule};
use fracbd::numeric::quad::QuadConfig;
use fracbd::numeric::special::gamma;
use fracbd::paths::{estimate_pmfs, tv_distance, MarginalPmf, PmfSource, SimMethod};
use fracbd::quasi::{
    principal_qsd, qld_coefficients, qld_limit_check, qsd_stationarity_check, rate_constant, spectral_conditional,
};
use fracbd::spectral::{decompose_rates, forward_residual, green_function, SpectralDecomposition};

type Outcome = (bool, String);
type Criterion = (u32, &'static str, u64, fn() -> Outcome);

fn al(a: f64) -> FracOrder {
    FracOrder::new(a).unwrap()
}

fn linear(l: f64, m: f64) -> RateSchedule {
    RateSchedule::linear(l, m).unwrap()
}

fn pool4<T: Send>(f: impl FnOnce() -> T + Send) -> T {
    rayon::ThreadPoolBuilder::new().num_threads(4).build().unwrap().install(f)
}

fn c1() -> Outcome {
    let xs = [0.1, 1.0, 2.0, 5.0, 10.0, 20.0];
    let oracle: Vec<(f64, f64)> = xs.iter().map(|&x| (common::ml_half_series(x), common::exp_sq_erfc(x))).collect();
    let start = Instant::now();
    let got: Vec<f64> = xs.iter().map(|&x| ml_eval(al(0.5), -x).unwrap()).collect();
    let elapsed = start.elapsed();
    let mut worst: f64 = 0.0;
    for (g, (s, e)) in got.iter().zip(&oracle) {
        worst = worst.max(common::rel_err(*g, *s)).max(common::rel_err(*g, *e));
    }
    (worst <= 1e-9 && elapsed < Duration::from_secs(1), format!("max rel err {worst:.2e}, eval {elapsed:.2?}"))
}

fn c2() -> Outcome {
    let mut worst: f64 = 0.0;
    for a in [0.5, 0.7, 0.9] {
        for th in [0.5, 1.0, 3.0] {
            for s in [0.5, 1.0, 2.0] {
                worst = worst.max(ml_laplace_residual(al(a), th, s, &QuadConfig::default()).unwrap());
            }
        }
    }
    (worst <= 1e-6, format!("max residual {worst:.2e}"))
}

fn c3() -> Outcome {
    let t: f64 = 1e8;
    let mut worst: f64 = 0.0;
    for a in [0.5, 0.7] {
        let v = gamma(1.0 - a) * t.powf(a) * ml_survival(al(a), 1.0, t).unwrap();
        worst = worst.max((v - 1.0).abs());
    }
    (worst <= 1e-2, format!("max |scaled - 1| {worst:.2e}"))
}

const STATES: std::ops::RangeInclusive<usize> = 0..=20;

fn c4() -> Outcome {
    let r = linear(0.5, 1.0);
    let (a, b) = pool4(|| {
        let a = estimate_pmfs(SimMethod::Renewal, &r, al(0.7), 1, &[2.0], 100_000, 4001).unwrap();
        let b = estimate_pmfs(SimMethod::Timechange, &r, al(0.7), 1, &[2.0], 100_000, 4002).unwrap();
        (a, b)
    });
    let tv = tv_distance(&a[0], &b[0], STATES);
    (tv <= 0.01, format!("TV {tv:.4}"))
}

fn spectral_pmf(dec: &SpectralDecomposition, alpha: FracOrder, i0: usize, t: f64) -> MarginalPmf {
    let f = dec.ml_factors(alpha, t).unwrap();
    let mut cells = vec![(0, dec.absorption_with(&f, i0).unwrap())];
    cells.extend((1..=dec.dim()).map(|j| (j, dec.transition_with(&f, i0, j).unwrap())));
    MarginalPmf::exact(t, cells, PmfSource::Spectral)
}

fn c5() -> Outcome {
    let r = linear(0.5, 1.0);
    let dec = decompose_rates(&r, 60, BoundaryPolicy::Reflect).unwrap();
    let exact = spectral_pmf(&dec, al(0.7), 1, 2.0);
    let mc = pool4(|| estimate_pmfs(SimMethod::Renewal, &r, al(0.7), 1, &[2.0], 100_000, 5001).unwrap().remove(0));
    let mut worst: f64 = 0.0;
    let mut ok = true;
    for s in STATES {
        let p = exact.get(s);
        let se = mc.binomial_se(p);
        let dev = (mc.get(s) - p).abs();
        ok &= dev <= 3.0 * se;
        if se > 0.0 {
            worst = worst.max(dev / se);
        } else if dev > 0.0 {
            worst = f64::INFINITY;
        }
    }
    (ok, format!("max |dev|/SE {worst:.2}"))
}

fn c6() -> Outcome {
    let p = LinearParams::new(0.5, 1.0).unwrap();
    let t: f64 = 1e5;
    let s = survival_fractional(&p, al(0.5), t, 100_000).unwrap().value;
    let scaled = t.sqrt() * s;
    let target = 2f64.ln() / (0.5 * std::f64::consts::PI.sqrt());
    let rel = (scaled - target).abs() / target;
    (rel <= 0.01, format!("t^0.5 S(t) = {scaled:.6}, target {target:.6}, rel {rel:.2e}"))
}

fn c7() -> Outcome {
    let r = linear(0.5, 1.0);
    let dec = decompose_rates(&r, 200, BoundaryPolicy::Reflect).unwrap();
    let mut worst: f64 = 0.0;
    let mut p1 = f64::NAN;
    for i0 in [1, 3] {
        let cond = spectral_conditional(&dec, al(0.6), i0, 1e4).unwrap();
        let q = qld_coefficients(&r, i0, 200).unwrap();
        let pmf = &q.limit().unwrap().pmf;
        let tv = 0.5 * cond.iter().zip(pmf).map(|(a, b)| (a - b).abs()).sum::<f64>();
        worst = worst.max(tv);
        if i0 == 1 {
            p1 = pmf[0];
        }
    }
    let target = 1.0 / (2.0 * 2f64.ln());
    let ok = worst <= 1e-2 && (p1 - target).abs() <= 1e-3;
    (ok, format!("max TV {worst:.2e}, pmf(1) = {p1:.6} vs {target:.6}"))
}

fn c8() -> Outcome {
    let r = linear(0.5, 1.0);
    let g = green_function(&build_generator(&r, 200, BoundaryPolicy::Reflect).unwrap()).unwrap();
    let mut worst: f64 = 0.0;
    for i0 in [1, 2, 5] {
        let q = qld_coefficients(&r, i0, 30).unwrap();
        let c = &q.limit().unwrap().coefficients;
        for n in 1..=30 {
            worst = worst.max((c[n - 1] - g[i0 - 1][n - 1]).abs());
        }
    }
    (worst <= 1e-6, format!("max abs dev {worst:.2e}"))
}

fn c9() -> Outcome {
    let dec = decompose_rates(&linear(0.5, 1.0), 200, BoundaryPolicy::Reflect).unwrap();
    let (theta, nu) = principal_qsd(&dec);
    let grid: Vec<f64> = (0..10).map(|k| 10f64.powf(-2.0 + 4.0 * k as f64 / 9.0)).collect();
    let mut worst: f64 = 0.0;
    for a in [0.5, 0.7, 1.0] {
        worst = worst.max(qsd_stationarity_check(&dec, al(a), &nu, theta, &grid).unwrap());
    }
    (worst <= 1e-6, format!("max deviation {worst:.2e}, θ = {theta:.6}"))
}

fn c10() -> Outcome {
    let r = linear(0.5, 1.0);
    let dec = decompose_rates(&r, 200, BoundaryPolicy::Reflect).unwrap();
    let (_, nu) = principal_qsd(&dec);
    let q = qld_coefficients(&r, 1, 200).unwrap();
    let pmf = &q.limit().unwrap().pmf;
    let tv = 0.5 * nu.iter().zip(pmf).map(|(a, b)| (a - b).abs()).sum::<f64>();
    (tv >= 0.01, format!("TV(QLD, QSD) = {tv:.4}"))
}

/// Least-squares fit of `y = a + b x`; returns `a`.
fn intercept(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let (mx, my) = (xs.iter().sum::<f64>() / n, ys.iter().sum::<f64>() / n);
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    my - (sxy / sxx) * mx
}

fn c11() -> Outcome {
    let r = linear(0.5, 1.0);
    let dec = decompose_rates(&r, 200, BoundaryPolicy::Reflect).unwrap();
    let limit = qld_coefficients(&r, 1, 200).unwrap().limit().unwrap().pmf[0];
    let grid: Vec<f64> = (0..=20).map(|k| 10f64.powf(3.0 + 2.0 * k as f64 / 20.0)).collect();
    let mut ok = true;
    let mut notes = Vec::new();
    for a in [0.6, 0.5] {
        let ratio = qld_limit_check(&dec, al(a), 1, 1, &grid).unwrap();
        // Leading order t^{-α}; at α = 1/2 that term vanishes and t^{-2α} leads.
        let p = if a == 0.5 { 2.0 * a } else { a };
        let ys: Vec<f64> = grid.iter().zip(&ratio).map(|(t, q)| t.powf(p) * (q - limit)).collect();
        let xs: Vec<f64> = grid.iter().map(|t| t.powf(-a)).collect();
        let fit = intercept(&xs, &ys);
        let c = rate_constant(&dec, al(a), 1, 1).unwrap();
        let rel = (fit - c).abs() / c.abs();
        ok &= rel <= 0.05;
        notes.push(format!("α={a}: fit {fit:.5} vs {c:.5} (rel {rel:.1e})"));
    }
    (ok, notes.join("; "))
}

fn c12() -> Outcome {
    let p = LinearParams::new(1.0, 1.0).unwrap();
    let grid = [10.0, 100.0, 1000.0];
    let w = critical_no_qld_witness(&p, al(0.5), &grid, 100_000, 1201, 10).unwrap();
    let strict = w.conditional_mass.windows(2).all(|m| m[1] < m[0]);
    let ctl = critical_truncated_control(&p, 20, &grid, 10).unwrap();
    let ok = strict && w.decreasing && ctl.converged && !ctl.decreasing;
    let mass: Vec<String> = w.conditional_mass.iter().map(|m| format!("{m:.4}")).collect();
    let cm: Vec<String> = ctl.conditional_mass.iter().map(|m| format!("{m:.6}")).collect();
    (ok, format!("α=0.5 mass [{}]; α=1 control [{}]", mass.join(", "), cm.join(", ")))
}

fn c13() -> Outcome {
    // Supercritical truncations have θ_1 ≈ (μ/λ)^M; keep M where that is resolvable.
    let mut defect: f64 = 0.0;
    for (l, m, big_m) in [(0.5, 1.0, 60), (0.5, 1.0, 200), (1.0, 1.0, 100), (2.0, 1.0, 30)] {
        for policy in [BoundaryPolicy::Reflect, BoundaryPolicy::Absorb] {
            let dec = decompose_rates(&linear(l, m), big_m, policy).unwrap();
            for a in [0.5, 0.6, 0.7, 0.8, 1.0] {
                for t in [0.0, 0.01, 0.5, 2.0, 10.0, 1e2, 1e4] {
                    let f = dec.ml_factors(al(a), t).unwrap();
                    for i in [1, 3, 10] {
                        let row: f64 = (1..=big_m).map(|j| dec.transition_with(&f, i, j).unwrap()).sum();
                        let gone = dec.absorption_with(&f, i).unwrap() + dec.escape_with(&f, i).unwrap();
                        defect = defect.max((row + gone - 1.0).abs());
                    }
                }
            }
        }
    }
    let r = linear(0.5, 1.0);
    let m = 20;
    let gen = build_generator(&r, m, BoundaryPolicy::Reflect).unwrap();
    let dec = decompose_rates(&r, m, BoundaryPolicy::Reflect).unwrap();
    let mut min_ratio = f64::INFINITY;
    for a in [0.5, 0.8] {
        for (i, j) in [(1, 1), (1, 2)] {
            let res: Vec<f64> = [1.0 / 32.0, 1.0 / 64.0, 1.0 / 128.0]
                .iter()
                .map(|&h| forward_residual(&dec, &gen, al(a), i, j, 1.0, h).unwrap())
                .collect();
            for w in res.windows(2) {
                min_ratio = min_ratio.min(w[0] / w[1]);
            }
        }
    }
    (defect <= 1e-9 && min_ratio >= 1.8, format!("mass defect {defect:.2e}, min residual ratio {min_ratio:.3}"))
}

fn main() {
    let criteria: [Criterion; 13] = [
        (1, "Mittag-Leffler accuracy", 1, c1),
        (2, "Laplace identity", 10, c2),
        (3, "tail limit", 1, c3),
        (4, "simulator equivalence", 60, c4),
        (5, "spectral vs Monte Carlo", 90, c5),
        (6, "subcritical fractional survival", 5, c6),
        (7, "Yaglom limit", 30, c7),
        (8, "Green-function oracle", 5, c8),
        (9, "QSD α-independence", 10, c9),
        (10, "QLD differs from QSD", 5, c10),
        (11, "convergence-rate constants", 30, c11),
        (12, "critical no-QLD witness", 120, c12),
        (13, "conservation and forward residual", 60, c13),
    ];
    let mut failed = 0;
    for (n, name, budget, f) in criteria {
        let start = Instant::now();
        let (ok, detail) = match catch_unwind(AssertUnwindSafe(f)) {
            Ok(r) => r,
            Err(e) => {
                let msg = e
                    .downcast_ref::<String>()
                    .cloned()
                    .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                    .unwrap_or_default();
                (false, format!("panicked: {msg}"))
            }
        };
        let elapsed = start.elapsed();
        let in_time = elapsed <= Duration::from_secs(budget);
        let pass = ok && in_time;
        if !pass {
            failed += 1;
        }
        let timing = if in_time { String::new() } else { " (over budget)".to_string() };
        println!(
            "criterion {n:>2} {}: {name}: {detail} [{elapsed:.2?} of {budget} s{timing}]",
            if pass { "PASS" } else { "FAIL" }
        );
    }
    println!("acceptance: {} passed, {failed} failed", 13 - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
