//! Shared oracles for the integration tests.
#![allow(dead_code)]

use astro_float::{BigFloat, Consts, Radix, RoundingMode};

const RM: RoundingMode = RoundingMode::ToEven;

fn to_f64(v: &BigFloat, cc: &mut Consts) -> f64 {
    let s = v.format(Radix::Dec, RM, cc).expect("format");
    s.parse().unwrap_or_else(|_| panic!("cannot parse `{s}`"))
}

/// Enough bits to absorb a cancellation of size `e^{scale·x²}`.
fn bits(x: f64, scale: f64) -> usize {
    let need = (scale * std::f64::consts::LOG2_E * x * x) as usize + 512;
    need.max(1024).div_ceil(64) * 64
}

/// `E_{1/2}(-x)` by its power series in extended precision. Even and odd
/// terms each follow `a_{k+2} = a_k · x² / (k/2 + 1)`.
pub fn ml_half_series(x: f64) -> f64 {
    let p = bits(x, 1.0);
    let big = |v: f64| BigFloat::from_f64(v, p);
    let mut cc = Consts::new().expect("constants");
    let sqrt_pi = cc.pi(p, RM).sqrt(p, RM);
    let x2 = big(x).mul(&big(x), p, RM);
    // a_0 = 1, a_1 = -x / Γ(3/2) = -2x/√π.
    let mut even = big(1.0);
    let mut odd = big(-2.0 * x).div(&sqrt_pi, p, RM);
    let mut sum = big(0.0);
    let kmax = (8.0 * x * x) as usize + 400;
    let mut k = 0;
    while k < kmax {
        sum = sum.add(&even, p, RM).add(&odd, p, RM);
        even = even.mul(&x2, p, RM).div(&big(k as f64 / 2.0 + 1.0), p, RM);
        odd = odd.mul(&x2, p, RM).div(&big((k + 1) as f64 / 2.0 + 1.0), p, RM);
        k += 2;
    }
    to_f64(&sum, &mut cc)
}

/// `e^{x²} erfc(x)` with `erfc = 1 - erf` and the Maclaurin series of `erf`,
/// again in extended precision so the cancellation is harmless.
pub fn exp_sq_erfc(x: f64) -> f64 {
    let p = bits(x, 2.0);
    let big = |v: f64| BigFloat::from_f64(v, p);
    let mut cc = Consts::new().expect("constants");
    let sqrt_pi = cc.pi(p, RM).sqrt(p, RM);
    let bx = big(x);
    let x2 = bx.mul(&bx, p, RM);
    let mut term = bx.clone(); // (-1)^n x^{2n+1} / n!
    let mut erf_sum = big(0.0);
    let nmax = (8.0 * x * x) as usize + 400;
    for n in 0..nmax {
        let t = term.div(&big((2 * n + 1) as f64), p, RM);
        erf_sum = erf_sum.add(&t, p, RM);
        term = term.mul(&x2, p, RM).div(&big(-((n + 1) as f64)), p, RM);
    }
    let erf = erf_sum.mul(&big(2.0), p, RM).div(&sqrt_pi, p, RM);
    let erfc = big(1.0).sub(&erf, p, RM);
    let e = x2.exp(p, RM, &mut cc);
    to_f64(&erfc.mul(&e, p, RM), &mut cc)
}

pub fn rel_err(a: f64, b: f64) -> f64 {
    ((a - b) / b).abs()
}
