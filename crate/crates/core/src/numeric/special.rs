//! Gamma-family helpers on top of `statrs`.

use statrs::function::gamma as sg;

pub fn gamma(x: f64) -> f64 {
    sg::gamma(x)
}

pub fn ln_gamma(x: f64) -> f64 {
    sg::ln_gamma(x)
}

/// `1/Γ(x)`, defined as exactly zero at the poles `x = 0, -1, -2, ...`.
pub fn recip_gamma(x: f64) -> f64 {
    if x <= 0.0 && x == x.round() {
        return 0.0;
    }
    1.0 / sg::gamma(x)
}

pub fn erfc(x: f64) -> f64 {
    statrs::function::erf::erfc(x)
}
