use fracbd::linear::{
    qld_linear, supercritical_tail, survival_classical, survival_fractional, tail_constant_subcritical,
    LinearParams,
};
use fracbd::mlf::FracOrder;
use fracbd::model::RateSchedule;
use fracbd::numeric::special::gamma;
use fracbd::quasi::{qld_coefficients, qsd_classify, qsd_solve, QsdClass, QsdOutcome};
use proptest::prelude::*;

fn al(a: f64) -> FracOrder {
    FracOrder::new(a).unwrap()
}

#[test]
fn indicator_form_examples() {
    let r = RateSchedule::linear(0.5, 1.0).unwrap();
    let q2 = qld_coefficients(&r, 2, 40).unwrap();
    let q2 = q2.limit().unwrap();
    assert!((q2.coefficients[0] - 1.0).abs() < 1e-15);
    assert!((q2.coefficients[1] - 0.75).abs() < 1e-15);
    let q1 = qld_coefficients(&r, 1, 2000).unwrap();
    let p1 = q1.limit().unwrap().pmf[0];
    assert!((p1 - 1.0 / (2.0 * 2f64.ln())).abs() < 1e-12, "{p1}");
}

#[test]
fn linear_closed_form_matches_general_qld() {
    let p = LinearParams::new(0.5, 1.0).unwrap();
    for i0 in [1, 3, 7] {
        let a = qld_linear(&p, i0, 60).unwrap();
        let b = qld_coefficients(&p.rates(), i0, 60).unwrap();
        for (x, y) in a.limit().unwrap().coefficients.iter().zip(&b.limit().unwrap().coefficients) {
            assert!((x - y).abs() <= 1e-12 * y, "i0={i0}: {x} vs {y}");
        }
    }
}

#[test]
fn no_qld_at_or_above_criticality() {
    for (l, m) in [(1.0, 1.0), (2.0, 1.0)] {
        let r = RateSchedule::linear(l, m).unwrap();
        assert!(qld_coefficients(&r, 1, 100).unwrap().limit().is_none());
    }
}

#[test]
fn qsd_family_boundary() {
    let r = RateSchedule::linear(0.5, 1.0).unwrap();
    match qsd_classify(&r, 1e-10).unwrap() {
        QsdClass::Family { theta_star } => assert!((theta_star - 0.5).abs() < 1e-6),
        other => panic!("expected a family, got {other:?}"),
    }
    assert!(matches!(qsd_solve(&r, 0.6, 400).unwrap(), QsdOutcome::Rejected { .. }));
}

#[test]
fn gamma_ratio_at_half() {
    assert!((gamma(0.5) / gamma(-0.5) + 0.5).abs() < 1e-14);
}

#[test]
fn tail_constant_value() {
    let c = tail_constant_subcritical(&LinearParams::new(0.5, 1.0).unwrap(), al(0.5)).unwrap();
    let want = 2f64.ln() / (0.5 * std::f64::consts::PI.sqrt());
    assert!((c - want).abs() < 1e-14, "{c} vs {want}");
}

#[test]
fn supercritical_limit_and_start() {
    let p = LinearParams::new(2.0, 1.0).unwrap();
    let st = supercritical_tail(&p, al(0.6), 1e3).unwrap();
    assert_eq!(st.limit, 0.5);
    let s0 = survival_fractional(&p, al(0.6), 0.0, 10_000).unwrap().value;
    assert!((s0 - 1.0).abs() < 1e-12, "{s0}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn unit_order_series_matches_classical(l in 0.1f64..3.0, m in 0.1f64..3.0, t in 0.0f64..10.0) {
        prop_assume!((l - m).abs() > 1e-3);
        let p = LinearParams::new(l, m).unwrap();
        let s = survival_fractional(&p, FracOrder::ONE, t, 100_000).unwrap().value;
        let c = survival_classical(&p, t).unwrap();
        prop_assert!((s - c).abs() <= 1e-9, "{} vs {}", s, c);
    }

    #[test]
    fn accepted_qsd_is_a_distribution(theta in 0.02f64..0.5) {
        let r = RateSchedule::linear(0.5, 1.0).unwrap();
        match qsd_solve(&r, theta, 300).unwrap() {
            QsdOutcome::Accepted(q) => {
                prop_assert!(q.nu.iter().all(|&v| v >= 0.0));
                let s: f64 = q.nu.iter().sum();
                prop_assert!((s - 1.0).abs() < 1e-9);
            }
            QsdOutcome::Rejected { reason } => prop_assert!(false, "θ={} rejected: {}", theta, reason),
        }
    }
}

/// Intercept `a` of a least-squares fit `y = a + b x`.
fn intercept(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let (mx, my) = (xs.iter().sum::<f64>() / n, ys.iter().sum::<f64>() / n);
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    my - (sxy / sxx) * mx
}

#[test]
fn supercritical_rate_matches_survival_curve() {
    // At λ - μ = 1 the alternative prefactor (λ - μ)/λ · Σ(μ/λ)^m/m / Γ(1-α)
    // coincides with ours; λ = 3 separates them by a factor of two.
    for (l, m) in [(2.0, 1.0), (3.0, 1.0)] {
        let p = LinearParams::new(l, m).unwrap();
        let a = 0.6;
        let grid: Vec<f64> = (0..=10).map(|k| 10f64.powf(3.0 + 0.2 * k as f64)).collect();
        let ys: Vec<f64> = grid.iter().map(|&t| supercritical_tail(&p, al(a), t).unwrap().scaled_deviation).collect();
        let xs: Vec<f64> = grid.iter().map(|t| t.powf(-a)).collect();
        let fit = intercept(&xs, &ys);
        let rate = supercritical_tail(&p, al(a), 1e3).unwrap().rate;
        assert!((fit - rate).abs() <= 0.05 * rate, "λ={l}: fit {fit} vs {rate}");
        let alt = (l - m) / l * -(-m / l as f64).ln_1p() / gamma(1.0 - a);
        if l == 3.0 {
            assert!((fit - alt).abs() > 0.3 * alt, "fit {fit} should not match {alt}");
        }
    }
}

#[test]
fn subcritical_tail_matches_survival_curve() {
    let p = LinearParams::new(0.5, 1.0).unwrap();
    for a in [0.5, 0.7] {
        let c = tail_constant_subcritical(&p, al(a)).unwrap();
        let t: f64 = 1e7;
        let s = survival_fractional(&p, al(a), t, 100_000).unwrap().value;
        assert!((t.powf(a) * s - c).abs() <= 0.01 * c, "α={a}");
    }
}
