//! Eigen-expansion of the truncated killed generator.
//!
//! `Q` is conjugated by `diag(√π)` to a symmetric tridiagonal matrix `S`;
//! `-S = U Θ Uᵀ` gives
//!
//! ```text
//! p_ij(t) = √(π_j/π_i) Σ_k E_α(-θ_k t^α) U_ik U_jk
//! ```
//!
//! and, with `Q_k(j) = U_jk / (√π_j U_1k)` and `Γ̂({θ_k}) = U_1k²`, the discrete
//! form of `p_ij(t) = π_j ∫ E_α(-θt^α) Q_θ(i) Q_θ(j) dΓ(θ)`.

use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::mlf::{ml_survival, FracOrder};
use crate::model::{build_generator, pi_weights, BoundaryPolicy, GeneratorMatrix, PiWeights, RateSchedule};
use crate::numeric::KahanSum;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SpectralDecomposition {
    /// Eigenvalues of `-Q`, ascending.
    pub thetas: Vec<f64>,
    /// `weights[j - 1][k] = Q_{θ_k}(j)`.
    pub weights: Vec<Vec<f64>>,
    pub pi: PiWeights,
    /// `Γ̂({θ_k})`, summing to one.
    pub gamma_mass: Vec<f64>,
    pub kill_rate: f64,
    /// Exit rate from `M` through the top; zero when reflecting.
    pub top_rate: f64,
    pub policy: BoundaryPolicy,
    /// Orthonormal eigenvectors of `-S`, column-major: `vectors[k * dim + j]`.
    vectors: Vec<f64>,
}

/// Birth-death polynomials `Q_θ(0..=i_max)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolynomialTable {
    pub theta: f64,
    pub values: Vec<f64>,
}

/// Symmetric tridiagonal eigenproblem by implicit QL (the EISPACK `tql2`
/// scheme). `d` is the diagonal, `e[i]` couples `i` and `i + 1` (`e[n-1]` is
/// ignored). On return `d` holds ascending eigenvalues and `v` the matching
/// orthonormal eigenvectors, column-major.
pub fn tql2(d: &mut [f64], e: &mut [f64], v: &mut [f64]) -> Result<()> {
    let n = d.len();
    assert_eq!(e.len(), n);
    assert_eq!(v.len(), n * n);
    v.iter_mut().for_each(|x| *x = 0.0);
    for i in 0..n {
        v[i * n + i] = 1.0;
    }
    if n == 0 {
        return Ok(());
    }
    e[n - 1] = 0.0;
    let max_iter = 30 * n.max(2);
    let eps = f64::EPSILON;
    let mut f = 0.0;
    let mut tst1: f64 = 0.0;
    for l in 0..n {
        tst1 = tst1.max(d[l].abs() + e[l].abs());
        let mut m = l;
        while m < n {
            if e[m].abs() <= eps * tst1 {
                break;
            }
            m += 1;
        }
        if m > l {
            let mut iter = 0;
            loop {
                iter += 1;
                if iter > max_iter {
                    return Err(Error::Numerical(format!(
                        "tridiagonal eigensolver did not converge for eigenvalue {l} after {max_iter} iterations"
                    )));
                }
                let mut g = d[l];
                let mut p = (d[l + 1] - g) / (2.0 * e[l]);
                let mut r = p.hypot(1.0);
                if p < 0.0 {
                    r = -r;
                }
                d[l] = e[l] / (p + r);
                d[l + 1] = e[l] * (p + r);
                let dl1 = d[l + 1];
                let mut h = g - d[l];
                for di in d.iter_mut().skip(l + 2) {
                    *di -= h;
                }
                f += h;

                p = d[m];
                let mut c = 1.0;
                let mut c2 = c;
                let mut c3 = c;
                let el1 = e[l + 1];
                let mut s = 0.0;
                let mut s2 = 0.0;
                for i in (l..m).rev() {
                    c3 = c2;
                    c2 = c;
                    s2 = s;
                    g = c * e[i];
                    h = c * p;
                    r = p.hypot(e[i]);
                    e[i + 1] = s * r;
                    s = e[i] / r;
                    c = p / r;
                    p = c * d[i] - s * g;
                    d[i + 1] = h + s * (c * g + s * d[i]);
                    let (left, right) = v.split_at_mut((i + 1) * n);
                    let vi = &mut left[i * n..];
                    let vi1 = &mut right[..n];
                    for k in 0..n {
                        let h = vi1[k];
                        vi1[k] = s * vi[k] + c * h;
                        vi[k] = c * vi[k] - s * h;
                    }
                }
                p = -s * s2 * c3 * el1 * e[l] / dl1;
                e[l] = s * p;
                d[l] = c * p;
                if !(e[l].abs() > eps * tst1) {
                    break;
                }
            }
        }
        d[l] += f;
        e[l] = 0.0;
    }
    // Selection sort keeps vectors paired with values.
    for i in 0..n.saturating_sub(1) {
        let mut k = i;
        for j in i + 1..n {
            if d[j] < d[k] {
                k = j;
            }
        }
        if k != i {
            d.swap(i, k);
            for r in 0..n {
                v.swap(i * n + r, k * n + r);
            }
        }
    }
    Ok(())
}

pub fn decompose(gen: &GeneratorMatrix, pi: &PiWeights) -> Result<SpectralDecomposition> {
    let n = gen.dim;
    if pi.len() < n {
        return domain(format!("π weights cover {} states, generator has {n}", pi.len()));
    }
    if gen.sup.iter().chain(&gen.sub).any(|x| !(*x > 0.0)) {
        return domain("generator off-diagonals must be positive");
    }
    let mut d: Vec<f64> = gen.diag.iter().map(|x| -x).collect();
    let mut e: Vec<f64> = gen
        .sup
        .iter()
        .zip(&gen.sub)
        .map(|(a, b)| -(a * b).sqrt())
        .chain(std::iter::once(0.0))
        .collect();
    let mut v = vec![0.0; n * n];
    tql2(&mut d, &mut e, &mut v)?;
    // Orient every eigenvector so that its first component is positive.
    for k in 0..n {
        if v[k * n] < 0.0 {
            v[k * n..(k + 1) * n].iter_mut().for_each(|x| *x = -*x);
        }
    }
    if !(d[0] > 0.0) {
        return Err(Error::Numerical(format!(
            "smallest eigenvalue {} of the killed generator is not positive",
            d[0]
        )));
    }
    let gamma_mass: Vec<f64> = (0..n).map(|k| v[k * n] * v[k * n]).collect();
    let weights = (0..n)
        .map(|j| {
            let sj = pi.get(j + 1).sqrt();
            (0..n).map(|k| v[k * n + j] / (sj * v[k * n])).collect()
        })
        .collect();
    Ok(SpectralDecomposition {
        thetas: d,
        weights,
        pi: PiWeights {
            values: pi.values[..n].to_vec(),
            ln_values: pi.ln_values[..n].to_vec(),
        },
        gamma_mass,
        kill_rate: gen.kill_rate,
        top_rate: top_rate(gen),
        policy: gen.policy,
        vectors: v,
    })
}

fn top_rate(gen: &GeneratorMatrix) -> f64 {
    let n = gen.dim;
    let down = if n >= 2 { gen.sub[n - 2] } else { gen.kill_rate };
    (-gen.diag[n - 1] - down).max(0.0)
}

/// Generator, π and decomposition in one call.
pub fn decompose_rates(rates: &RateSchedule, m: usize, policy: BoundaryPolicy) -> Result<SpectralDecomposition> {
    let gen = build_generator(rates, m, policy)?;
    let pi = pi_weights(rates, m)?;
    decompose(&gen, &pi)
}

impl SpectralDecomposition {
    pub fn dim(&self) -> usize {
        self.thetas.len()
    }

    /// Orthonormal eigenvector component `U_jk` (1-based `j`, 0-based `k`).
    pub fn u(&self, j: usize, k: usize) -> f64 {
        self.vectors[k * self.dim() + j - 1]
    }

    fn check(&self, i: usize) -> Result<()> {
        if i == 0 || i > self.dim() {
            return domain(format!("state {i} outside the truncation 1..={}", self.dim()));
        }
        Ok(())
    }

    /// `E_α(-θ_k t^α)` for every mode.
    pub fn ml_factors(&self, alpha: FracOrder, t: f64) -> Result<Vec<f64>> {
        if !(t >= 0.0) {
            return domain(format!("time must be nonnegative, got {t}"));
        }
        self.thetas.iter().map(|&th| ml_survival(alpha, th, t)).collect()
    }

    /// `p_ij` from precomputed mode factors.
    pub fn transition_with(&self, factors: &[f64], i: usize, j: usize) -> Result<f64> {
        self.check(i)?;
        self.check(j)?;
        let acc: KahanSum = (0..self.dim())
            .map(|k| factors[k] * self.u(i, k) * self.u(j, k))
            .collect();
        Ok((0.5 * (self.pi.ln(j) - self.pi.ln(i))).exp() * acc.value())
    }

    /// `P_i[T_0 > t]` from precomputed mode factors.
    pub fn survival_with(&self, factors: &[f64], i: usize) -> Result<f64> {
        self.check(i)?;
        let scale = self.kill_rate / self.pi.get(i).sqrt();
        let live: KahanSum = factors
            .iter()
            .enumerate()
            .map(|(k, f)| f * self.u(i, k) * self.u(1, k) / self.thetas[k])
            .collect();
        let mut s = scale * live.value();
        if self.policy == BoundaryPolicy::Absorb {
            // Mass that left through the top is not absorbed at 0.
            let total: KahanSum = (0..self.dim())
                .map(|k| self.u(i, k) * self.u(1, k) / self.thetas[k])
                .collect();
            s += 1.0 - scale * total.value();
        }
        Ok(s)
    }

    /// `P_i[T_0 ≤ t]`, computed from `1 - E_α` directly.
    pub fn absorption_with(&self, factors: &[f64], i: usize) -> Result<f64> {
        self.check(i)?;
        let scale = self.kill_rate / self.pi.get(i).sqrt();
        let acc: KahanSum = (0..self.dim())
            .map(|k| (1.0 - factors[k]) * self.u(i, k) * self.u(1, k) / self.thetas[k])
            .collect();
        Ok(scale * acc.value())
    }

    /// Mass that has left through the top of the truncation by time `t`;
    /// always zero under reflection.
    pub fn escape_with(&self, factors: &[f64], i: usize) -> Result<f64> {
        self.check(i)?;
        let n = self.dim();
        if self.top_rate == 0.0 {
            return Ok(0.0);
        }
        let scale = self.top_rate * (0.5 * (self.pi.ln(n) - self.pi.ln(i))).exp();
        let acc: KahanSum = (0..n)
            .map(|k| (1.0 - factors[k]) * self.u(i, k) * self.u(n, k) / self.thetas[k])
            .collect();
        Ok(scale * acc.value())
    }

    /// `(p_i1, ..., p_iM)` at time `t`.
    pub fn transition_row(&self, alpha: FracOrder, i: usize, t: f64) -> Result<Vec<f64>> {
        let f = self.ml_factors(alpha, t)?;
        (1..=self.dim()).map(|j| self.transition_with(&f, i, j)).collect()
    }

    /// Largest deviation of `π_j Σ_k Q_k(j) Q_k(j') Γ̂_k` from `δ_{jj'}`.
    pub fn orthonormality_residual(&self) -> f64 {
        let n = self.dim();
        let mut worst: f64 = 0.0;
        for j in 1..=n {
            for jj in 1..=n {
                let acc: KahanSum = (0..n).map(|k| self.u(j, k) * self.u(jj, k)).collect();
                let target = if j == jj { 1.0 } else { 0.0 };
                worst = worst.max((acc.value() - target).abs());
            }
        }
        worst
    }
}

pub fn transition_prob(dec: &SpectralDecomposition, alpha: FracOrder, i: usize, j: usize, t: f64) -> Result<f64> {
    dec.check(i)?;
    dec.check(j)?;
    let f = dec.ml_factors(alpha, t)?;
    dec.transition_with(&f, i, j)
}

pub fn survival_prob(dec: &SpectralDecomposition, alpha: FracOrder, i: usize, t: f64) -> Result<f64> {
    dec.check(i)?;
    let f = dec.ml_factors(alpha, t)?;
    dec.survival_with(&f, i)
}

pub fn eval_polynomial(rates: &RateSchedule, theta: f64, i_max: usize) -> Result<PolynomialTable> {
    if i_max < 1 {
        return domain("i_max must be at least 1");
    }
    let mut values = vec![0.0, 1.0];
    for i in 1..i_max {
        let b = rates.birth(i)?;
        if !(b > 0.0) {
            return domain(format!("zero birth rate at state {i} ends the recursion"));
        }
        let d = rates.death(i)?;
        let next = ((b + d - theta) * values[i] - d * values[i - 1]) / b;
        values.push(next);
    }
    Ok(PolynomialTable { theta, values })
}

/// `(-Q)^{-1}` by one tridiagonal solve per column; entry `(i, j)` is the
/// expected time spent in `j` before absorption, started from `i`.
#[allow(clippy::needless_range_loop)]
pub fn green_function(gen: &GeneratorMatrix) -> Result<Vec<Vec<f64>>> {
    let n = gen.dim;
    // Thomas factorization of -Q: lower diag a, diag b, upper c.
    let b: Vec<f64> = gen.diag.iter().map(|x| -x).collect();
    let mut cp = vec![0.0; n];
    let mut denom = vec![0.0; n];
    for i in 0..n {
        let a = if i > 0 { -gen.sub[i - 1] } else { 0.0 };
        let prev = if i > 0 { cp[i - 1] } else { 0.0 };
        let den = b[i] - a * prev;
        if !(den.abs() > 1e-300) || !den.is_finite() {
            return Err(Error::Numerical("generator is singular".into()));
        }
        denom[i] = den;
        cp[i] = if i + 1 < n { -gen.sup[i] / den } else { 0.0 };
    }
    let mut g = vec![vec![0.0; n]; n];
    let mut y = vec![0.0; n];
    for col in 0..n {
        for i in 0..n {
            let a = if i > 0 { -gen.sub[i - 1] } else { 0.0 };
            let prev = if i > 0 { y[i - 1] } else { 0.0 };
            let rhs = if i == col { 1.0 } else { 0.0 };
            y[i] = (rhs - a * prev) / denom[i];
        }
        let mut next = 0.0;
        for i in (0..n).rev() {
            next = y[i] - cp[i] * next;
            g[i][col] = next;
        }
    }
    Ok(g)
}

/// `θ_1` at `M` and `M/2`, the computable stand-in for `θ*`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThetaStarReport {
    pub m: usize,
    pub theta_1: f64,
    pub theta_1_half: f64,
    /// `θ_1` still falls noticeably with `M`, hinting at `θ* = 0`.
    pub decaying: bool,
}

/// Relative drop of `θ_1` between `M/2` and `M` above which the trend is
/// flagged as decaying.
pub const THETA_DECAY_FLAG: f64 = 0.01;

pub fn principal_eigenvalue(rates: &RateSchedule, m: usize, policy: BoundaryPolicy) -> Result<f64> {
    Ok(decompose_rates(rates, m, policy)?.thetas[0])
}

pub fn theta_star_report(rates: &RateSchedule, m: usize, policy: BoundaryPolicy) -> Result<ThetaStarReport> {
    if m < 2 {
        return domain("θ* report needs M >= 2");
    }
    let theta_1 = principal_eigenvalue(rates, m, policy)?;
    let theta_1_half = principal_eigenvalue(rates, m / 2, policy)?;
    Ok(ThetaStarReport {
        m,
        theta_1,
        theta_1_half,
        decaying: theta_1 < (1.0 - THETA_DECAY_FLAG) * theta_1_half,
    })
}

/// Grünwald–Letnikov weights `(-1)^n C(α, n)`.
pub fn gl_weights(alpha: f64, n: usize) -> Vec<f64> {
    let mut w = Vec::with_capacity(n + 1);
    w.push(1.0);
    for k in 1..=n {
        let prev = w[k - 1];
        w.push(prev * (1.0 - (alpha + 1.0) / k as f64));
    }
    w
}

/// Residual of the forward system `D^α p_ij = Σ_k p_ik q_kj` at time `t`, with
/// the Caputo derivative replaced by the Grünwald–Letnikov difference of step
/// `h` over the whole of `[0, t]`. `t / h` must be an integer.
pub fn forward_residual(
    dec: &SpectralDecomposition,
    gen: &GeneratorMatrix,
    alpha: FracOrder,
    i: usize,
    j: usize,
    t: f64,
    h: f64,
) -> Result<f64> {
    dec.check(i)?;
    dec.check(j)?;
    let steps = (t / h).round();
    if !(steps >= 1.0) || ((steps * h - t).abs() > 1e-9 * t) {
        return domain(format!("t = {t} is not a multiple of h = {h}"));
    }
    let steps = steps as usize;
    let a = alpha.value();
    let w = gl_weights(a, steps);
    let p0 = if i == j { 1.0 } else { 0.0 };
    let mut acc = KahanSum::new();
    for (n, wn) in w.iter().enumerate() {
        let s = (steps - n) as f64 * h;
        let f = dec.ml_factors(alpha, s)?;
        acc.add(wn * (dec.transition_with(&f, i, j)? - p0));
    }
    let lhs = acc.value() / h.powf(a);
    let f = dec.ml_factors(alpha, t)?;
    let mut rhs = 0.0;
    for k in j.saturating_sub(1).max(1)..=(j + 1).min(dec.dim()) {
        rhs += dec.transition_with(&f, i, k)? * gen.entry(k, j);
    }
    Ok((lhs - rhs).abs())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lin(l: f64, m: f64) -> RateSchedule {
        RateSchedule::linear(l, m).unwrap()
    }

    #[test]
    fn tql2_small_matrix() {
        let mut d = vec![2.0, 2.0];
        let mut e = vec![1.0, 0.0];
        let mut v = vec![0.0; 4];
        tql2(&mut d, &mut e, &mut v).unwrap();
        assert!((d[0] - 1.0).abs() < 1e-15 && (d[1] - 3.0).abs() < 1e-15);
        let r = std::f64::consts::FRAC_1_SQRT_2;
        assert!((v[0].abs() - r).abs() < 1e-15 && (v[1].abs() - r).abs() < 1e-15);
    }

    #[test]
    fn one_by_one() {
        let d = decompose_rates(&lin(0.5, 1.0), 1, BoundaryPolicy::Absorb).unwrap();
        assert_eq!(d.thetas, vec![1.5]);
        let d = decompose_rates(&lin(0.5, 1.0), 1, BoundaryPolicy::Reflect).unwrap();
        assert_eq!(d.thetas, vec![1.0]);
    }

    #[test]
    fn two_by_two_eigenvalues() {
        let d = decompose_rates(&lin(0.5, 1.0), 2, BoundaryPolicy::Reflect).unwrap();
        let disc = (3.5f64 * 3.5 - 8.0).sqrt();
        assert!((d.thetas[0] - (3.5 - disc) / 2.0).abs() < 1e-14);
        assert!((d.thetas[1] - (3.5 + disc) / 2.0).abs() < 1e-14);
        assert!((d.thetas[0] - 0.71922).abs() < 1e-5);
    }

    #[test]
    fn orthonormality_and_polynomials() {
        let r = lin(0.5, 1.0);
        let d = decompose_rates(&r, 40, BoundaryPolicy::Reflect).unwrap();
        assert!(d.orthonormality_residual() < 1e-12);
        assert!((d.gamma_mass.iter().sum::<f64>() - 1.0).abs() < 1e-13);
        // Eigenvectors are the polynomials evaluated at the eigenvalues.
        let table = eval_polynomial(&r, d.thetas[0], 10).unwrap();
        for j in 1..=10 {
            let q = d.weights[j - 1][0];
            assert!((q - table.values[j]).abs() < 1e-9 * q.abs().max(1.0), "j={j}");
        }
    }

    #[test]
    fn polynomial_examples() {
        let r = lin(0.5, 1.0);
        let t = eval_polynomial(&r, 0.0, 3).unwrap();
        assert_eq!(t.values[1], 1.0);
        assert_eq!(t.values[2], 3.0);
        let t = eval_polynomial(&r, 1.5, 2).unwrap();
        assert_eq!(t.values[2], 0.0);
    }

    #[test]
    fn initial_condition_and_exponential_case() {
        let d = decompose_rates(&lin(0.5, 1.0), 2, BoundaryPolicy::Reflect).unwrap();
        let a = FracOrder::new(0.7).unwrap();
        assert!((transition_prob(&d, a, 1, 1, 0.0).unwrap() - 1.0).abs() < 1e-12);
        assert!(transition_prob(&d, a, 1, 2, 0.0).unwrap().abs() < 1e-12);
        assert!((survival_prob(&d, a, 2, 0.0).unwrap() - 1.0).abs() < 1e-12);
        // exp of [[-1.5, .5], [2, -2]] at t = 1, entry (1,1).
        let (l1, l2) = (d.thetas[0], d.thetas[1]);
        // (A + l2 I) e^{-l1 t}/(l2 - l1) - (A + l1 I) e^{-l2 t}/(l2 - l1)
        let expect = ((-1.5 + l2) * (-l1).exp() - (-1.5 + l1) * (-l2).exp()) / (l2 - l1);
        let got = transition_prob(&d, FracOrder::ONE, 1, 1, 1.0).unwrap();
        assert!((got - expect).abs() < 1e-14, "{got} vs {expect}");
    }

    #[test]
    fn reflect_survival_is_row_sum() {
        let d = decompose_rates(&lin(0.5, 1.0), 30, BoundaryPolicy::Reflect).unwrap();
        let a = FracOrder::new(0.6).unwrap();
        for t in [0.3, 2.0, 50.0] {
            let f = d.ml_factors(a, t).unwrap();
            let row: f64 = (1..=30).map(|j| d.transition_with(&f, 3, j).unwrap()).sum();
            let s = d.survival_with(&f, 3).unwrap();
            let ab = d.absorption_with(&f, 3).unwrap();
            assert!((row - s).abs() < 1e-12);
            assert!((row + ab - 1.0).abs() < 1e-12);
            assert_eq!(d.escape_with(&f, 3).unwrap(), 0.0);
        }
    }

    #[test]
    fn absorbing_top_accounts_for_escape() {
        let d = decompose_rates(&lin(2.0, 1.0), 12, BoundaryPolicy::Absorb).unwrap();
        assert_eq!(d.top_rate, 24.0);
        let a = FracOrder::new(0.7).unwrap();
        for t in [0.0, 0.5, 5.0, 1e3] {
            let f = d.ml_factors(a, t).unwrap();
            let row: f64 = (1..=12).map(|j| d.transition_with(&f, 2, j).unwrap()).sum();
            let ab = d.absorption_with(&f, 2).unwrap();
            let esc = d.escape_with(&f, 2).unwrap();
            assert!((row + ab + esc - 1.0).abs() < 1e-12, "t={t}");
            assert!((d.survival_with(&f, 2).unwrap() - (1.0 - ab)).abs() < 1e-12);
        }
    }

    #[test]
    fn green_function_examples() {
        let r = lin(0.5, 1.0);
        let g = green_function(&build_generator(&r, 1, BoundaryPolicy::Reflect).unwrap()).unwrap();
        assert!((g[0][0] - 1.0).abs() < 1e-15);
        let g = green_function(&build_generator(&r, 200, BoundaryPolicy::Reflect).unwrap()).unwrap();
        assert!((g[0][0] - 1.0).abs() < 1e-8);
        assert!((g[0][1] - 0.25).abs() < 1e-6);
        assert!(g.iter().flatten().all(|x| *x > 0.0));
    }

    #[test]
    fn theta_star_trend() {
        let sub = theta_star_report(&lin(0.5, 1.0), 200, BoundaryPolicy::Reflect).unwrap();
        assert!(!sub.decaying);
        assert!((sub.theta_1 - 0.5).abs() < 1e-6);
        let crit = theta_star_report(&lin(1.0, 1.0), 200, BoundaryPolicy::Reflect).unwrap();
        assert!(crit.decaying, "{crit:?}");
    }
}
