//! Rate schedules, reversibility weights, the A/B/C/D classification series and
//! truncated killed generators.

use std::io::Read;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};

/// Above this truncation size π is accumulated in log space.
pub const LOG_SPACE_THRESHOLD: usize = 10_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RateKind {
    /// `λ_i = iλ`, `μ_i = iμ`.
    Linear { lambda: f64, mu: f64 },
    /// Explicit rates indexed from 0; entry 0 is the absorbing state.
    Table { birth: Vec<f64>, death: Vec<f64> },
}

/// Birth and death rates with `λ_0 = μ_0 = 0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateSchedule {
    pub kind: RateKind,
}

#[derive(Deserialize)]
struct RateRow {
    i: usize,
    birth: f64,
    death: f64,
}

impl RateSchedule {
    pub fn linear(lambda: f64, mu: f64) -> Result<Self> {
        if !(lambda > 0.0 && lambda.is_finite() && mu > 0.0 && mu.is_finite()) {
            return domain(format!("linear rates must be positive, got λ={lambda}, μ={mu}"));
        }
        Ok(RateSchedule { kind: RateKind::Linear { lambda, mu } })
    }

    /// A finite table. `birth[0]` and `death[0]` must be zero, every other death
    /// rate positive, and every birth rate positive except possibly the last one
    /// (a zero there makes the top state reflecting).
    pub fn table(birth: Vec<f64>, death: Vec<f64>) -> Result<Self> {
        if birth.len() != death.len() {
            return domain("birth and death tables differ in length");
        }
        if birth.len() < 2 {
            return domain("rate table needs at least states 0 and 1");
        }
        if birth[0] != 0.0 || death[0] != 0.0 {
            return domain("row 0 of a rate table must be 0,0,0");
        }
        let k = birth.len() - 1;
        for i in 1..=k {
            let (b, d) = (birth[i], death[i]);
            if !(d > 0.0 && d.is_finite()) {
                return domain(format!("death rate at state {i} must be positive, got {d}"));
            }
            let birth_ok = if i == k { b >= 0.0 } else { b > 0.0 };
            if !(birth_ok && b.is_finite()) {
                return domain(format!("birth rate at state {i} is invalid: {b}"));
            }
        }
        Ok(RateSchedule { kind: RateKind::Table { birth, death } })
    }

    /// Parse CSV with header `i,birth,death`, rows in order from `0,0,0`.
    pub fn from_csv_reader<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let headers = rdr
            .headers()
            .map_err(|e| Error::Input(format!("rate table: {e}")))?
            .clone();
        if headers.iter().collect::<Vec<_>>() != ["i", "birth", "death"] {
            return Err(Error::Input(format!(
                "rate table header must be `i,birth,death`, got `{}`",
                headers.iter().collect::<Vec<_>>().join(",")
            )));
        }
        let mut birth = Vec::new();
        let mut death = Vec::new();
        for (n, row) in rdr.deserialize::<RateRow>().enumerate() {
            let row = row.map_err(|e| Error::Input(format!("rate table: {e}")))?;
            if row.i != n {
                return Err(Error::Input(format!(
                    "rate table rows must be consecutive from 0; row {n} has i={}",
                    row.i
                )));
            }
            birth.push(row.birth);
            death.push(row.death);
        }
        Self::table(birth, death)
    }

    pub fn from_csv_path(path: &Path) -> Result<Self> {
        let f = std::fs::File::open(path)
            .map_err(|e| Error::Input(format!("{}: {e}", path.display())))?;
        Self::from_csv_reader(f)
    }

    /// Largest state with defined rates (`None` for linear schedules).
    pub fn max_state(&self) -> Option<usize> {
        match &self.kind {
            RateKind::Linear { .. } => None,
            RateKind::Table { birth, .. } => Some(birth.len() - 1),
        }
    }

    fn check_index(&self, i: usize) -> Result<()> {
        match self.max_state() {
            Some(k) if i > k => domain(format!("state {i} beyond the rate table (last state {k})")),
            _ => Ok(()),
        }
    }

    pub fn birth(&self, i: usize) -> Result<f64> {
        self.check_index(i)?;
        Ok(match &self.kind {
            RateKind::Linear { lambda, .. } => i as f64 * lambda,
            RateKind::Table { birth, .. } => birth[i],
        })
    }

    pub fn death(&self, i: usize) -> Result<f64> {
        self.check_index(i)?;
        Ok(match &self.kind {
            RateKind::Linear { mu, .. } => i as f64 * mu,
            RateKind::Table { death, .. } => death[i],
        })
    }

    /// Total jump rate `λ_i + μ_i`.
    pub fn total(&self, i: usize) -> Result<f64> {
        Ok(self.birth(i)? + self.death(i)?)
    }
}

/// Reversibility weights `π_1 = 1`, `π_{n+1} = π_n λ_n / μ_{n+1}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PiWeights {
    /// `values[n - 1] = π_n`; may underflow to zero for very long truncations,
    /// in which case `ln_values` carries the information.
    pub values: Vec<f64>,
    pub ln_values: Vec<f64>,
}

impl PiWeights {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// `π_n`, 1-based.
    pub fn get(&self, n: usize) -> f64 {
        self.values[n - 1]
    }

    pub fn ln(&self, n: usize) -> f64 {
        self.ln_values[n - 1]
    }
}

pub fn pi_weights(rates: &RateSchedule, m: usize) -> Result<PiWeights> {
    if m == 0 {
        return domain("truncation size must be at least 1");
    }
    rates.check_index(m)?;
    let mut values = Vec::with_capacity(m);
    let mut ln_values = Vec::with_capacity(m);
    if m > LOG_SPACE_THRESHOLD {
        let mut l = 0.0;
        ln_values.push(0.0);
        for n in 1..m {
            l += rates.birth(n)?.ln() - rates.death(n + 1)?.ln();
            ln_values.push(l);
        }
        values.extend(ln_values.iter().map(|l| l.exp()));
    } else {
        let mut p = 1.0;
        values.push(1.0);
        for n in 1..m {
            p *= rates.birth(n)? / rates.death(n + 1)?;
            values.push(p);
        }
        ln_values.extend(values.iter().map(|p| p.ln()));
    }
    Ok(PiWeights { values, ln_values })
}

/// Up/down probabilities of the embedded jump chain at state `i ≥ 1`.
pub fn embedded_step_prob(rates: &RateSchedule, i: usize) -> Result<(f64, f64)> {
    if i == 0 {
        return domain("state 0 is absorbing and has no embedded step");
    }
    let b = rates.birth(i)?;
    let d = rates.death(i)?;
    Ok((b / (b + d), d / (b + d)))
}

/// Outcome of a numerical series test.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum SeriesStatus {
    Convergent { value: f64 },
    Diverged,
    Undecided { partial_sum: f64 },
}

impl SeriesStatus {
    pub fn is_convergent(&self) -> bool {
        matches!(self, SeriesStatus::Convergent { .. })
    }

    pub fn is_diverged(&self) -> bool {
        matches!(self, SeriesStatus::Diverged)
    }

    pub fn value(&self) -> Option<f64> {
        match self {
            SeriesStatus::Convergent { value } => Some(*value),
            _ => None,
        }
    }

    /// `Some(true)` when convergent, `Some(false)` when diverged.
    pub fn finite(&self) -> Option<bool> {
        match self {
            SeriesStatus::Convergent { .. } => Some(true),
            SeriesStatus::Diverged => Some(false),
            SeriesStatus::Undecided { .. } => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeriesClassification {
    pub a: SeriesStatus,
    pub b: SeriesStatus,
    pub c: SeriesStatus,
    pub d: SeriesStatus,
    pub terms_used: usize,
    pub tolerance: f64,
}

impl SeriesClassification {
    /// Absorption at 0 is almost sure iff `A = ∞`.
    pub fn absorbed_almost_surely(&self) -> Option<bool> {
        self.a.finite().map(|f| !f)
    }

    /// `E_i[T_0] < ∞` iff `B < ∞`.
    pub fn finite_mean_absorption(&self) -> Option<bool> {
        self.b.finite()
    }

    /// Comes down from infinity iff `D < ∞`.
    pub fn comes_down_from_infinity(&self) -> Option<bool> {
        self.d.finite()
    }
}

/// Number of trailing terms that must decrease monotonically before a
/// convergent verdict.
pub const K_TAIL: usize = 50;

// Exponent margin used by the power-law and logarithmic comparison tests.
const MARGIN: f64 = 0.05;

fn log_sum_exp(xs: &[f64]) -> f64 {
    let m = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !m.is_finite() {
        return m;
    }
    m + xs.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

/// Decide a positive series from its log-terms `ln a_1, ..., ln a_N`.
///
/// `exhausted` means there are no terms beyond `N` (finite sum). Otherwise the
/// tail is compared against geometric, `n^{-p}` and `1/(n ln^q n)` families
/// over the span `[N/2, N]`.
fn decide(ln_terms: &[f64], exhausted: bool, tol: f64) -> (SeriesStatus, f64) {
    if ln_terms.iter().any(|l| *l == f64::INFINITY || l.is_nan()) {
        return (SeriesStatus::Diverged, f64::INFINITY);
    }
    let partial = log_sum_exp(ln_terms).exp();
    if exhausted {
        return (SeriesStatus::Convergent { value: partial }, 0.0);
    }
    if partial > 1.0 / tol {
        return (SeriesStatus::Diverged, f64::INFINITY);
    }
    let n = ln_terms.len();
    let undecided = (SeriesStatus::Undecided { partial_sum: partial }, f64::NAN);
    if n < 2 * K_TAIL {
        return undecided;
    }
    let n2 = n;
    let n1 = n / 2;
    let (l1, l2) = (ln_terms[n1 - 1], ln_terms[n2 - 1]);
    let (x1, x2) = (n1 as f64, n2 as f64);
    let monotone = ln_terms[n - K_TAIL..].windows(2).all(|w| w[1] <= w[0]);

    // Power-law exponent p with a_n ~ n^{-p}; geometric decay gives p → ∞.
    let p = -(l2 - l1) / (x2 / x1).ln();
    let verdict = if p > 1.0 + MARGIN {
        Some(true)
    } else if p < 1.0 - MARGIN {
        Some(false)
    } else {
        // a_n ~ 1/(n ln^q n)
        let q = -((l2 + x2.ln()) - (l1 + x1.ln())) / (x2.ln().ln() - x1.ln().ln());
        if q > 1.0 + MARGIN {
            Some(true)
        } else if q < 1.0 - MARGIN {
            Some(false)
        } else {
            None
        }
    };
    match verdict {
        Some(false) => (SeriesStatus::Diverged, f64::INFINITY),
        Some(true) if monotone => {
            let last = l2.exp();
            // Geometric ratio over the final step, else the power-law remainder.
            let r = (ln_terms[n - 1] - ln_terms[n - 2]).exp();
            let tail = if r < 1.0 - 1e-3 {
                last * r / (1.0 - r)
            } else {
                last * x2 / (p - 1.0).max(MARGIN)
            };
            if tail <= tol * partial.max(f64::MIN_POSITIVE) {
                (SeriesStatus::Convergent { value: partial + tail }, tail)
            } else {
                undecided
            }
        }
        _ => undecided,
    }
}

/// Evaluate the series
/// `A = Σ 1/(λ_i π_i)`, `B = Σ π_i`, `C = Σ (λ_i π_i)^{-1} Σ_{j≤i} π_j`,
/// `D = Σ_{i≥2} (μ_i π_i)^{-1} Σ_{j≥i} π_j` with explicit convergence verdicts.
///
/// A table whose last birth rate is zero is a finite chain; the series are then
/// finite sums, with `A` and `C` infinite through the `1/λ_K` term. A table with
/// a positive last birth rate leaves the rates undefined beyond it and is
/// reported undecided.
pub fn classify(rates: &RateSchedule, tolerance: f64, max_terms: usize) -> Result<SeriesClassification> {
    if max_terms < 10 {
        return domain("classify needs max_terms >= 10");
    }
    if !(tolerance > 0.0 && tolerance < 1.0) {
        return domain("classify tolerance must lie in (0, 1)");
    }
    // D needs tails of B; π is generated to twice the term count.
    let (n_terms, n_pi, exhausted) = match rates.max_state() {
        Some(k) => {
            if rates.birth(k)? > 0.0 {
                let partial = SeriesStatus::Undecided { partial_sum: f64::NAN };
                return Ok(SeriesClassification {
                    a: partial,
                    b: partial,
                    c: partial,
                    d: partial,
                    terms_used: k,
                    tolerance,
                });
            }
            (k, k, true)
        }
        None => (max_terms, 2 * max_terms, false),
    };
    let mut ln_pi = Vec::with_capacity(n_pi);
    let mut l = 0.0;
    ln_pi.push(0.0);
    for n in 1..n_pi {
        l += rates.birth(n)?.ln() - rates.death(n + 1)?.ln();
        ln_pi.push(l);
    }
    let ln_lambda_pi: Vec<f64> = (1..=n_terms)
        .map(|i| Ok(rates.birth(i)?.ln() + ln_pi[i - 1]))
        .collect::<Result<_>>()?;

    let ln_a: Vec<f64> = ln_lambda_pi.iter().map(|x| -x).collect();
    let (a, _) = decide(&ln_a, exhausted, tolerance);

    let (b, _) = decide(&ln_pi[..n_terms], exhausted, tolerance);
    // Tail of B beyond the terms used for the test itself.
    let b_far_tail = if exhausted {
        0.0
    } else {
        let (_, t) = decide(&ln_pi, false, tolerance);
        t
    };

    let mut ln_c = Vec::with_capacity(n_terms);
    let mut ln_head = f64::NEG_INFINITY;
    for i in 1..=n_terms {
        ln_head = log_add(ln_head, ln_pi[i - 1]);
        ln_c.push(ln_head - ln_lambda_pi[i - 1]);
    }
    let (c, _) = decide(&ln_c, exhausted, tolerance);

    let d = if b.is_diverged() {
        SeriesStatus::Diverged
    } else if !b.is_convergent() || b_far_tail.is_nan() {
        SeriesStatus::Undecided { partial_sum: f64::NAN }
    } else {
        // Backward tail sums Σ_{j≥i} π_j, seeded with the estimated remainder.
        let mut ln_tail = if b_far_tail > 0.0 { b_far_tail.ln() } else { f64::NEG_INFINITY };
        let mut tails = vec![0.0; n_pi];
        for j in (1..=n_pi).rev() {
            ln_tail = log_add(ln_tail, ln_pi[j - 1]);
            tails[j - 1] = ln_tail;
        }
        let ln_d: Vec<f64> = (2..=n_terms)
            .map(|i| Ok(tails[i - 1] - rates.death(i)?.ln() - ln_pi[i - 1]))
            .collect::<Result<_>>()?;
        if ln_d.is_empty() {
            SeriesStatus::Convergent { value: 0.0 }
        } else {
            decide(&ln_d, exhausted, tolerance).0
        }
    };

    Ok(SeriesClassification { a, b, c, d, terms_used: n_terms, tolerance })
}

fn log_add(x: f64, y: f64) -> f64 {
    if x == f64::NEG_INFINITY {
        return y;
    }
    if y == f64::NEG_INFINITY {
        return x;
    }
    let m = x.max(y);
    m + ((x - m).exp() + (y - m).exp()).ln()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum BoundaryPolicy {
    /// Birth rate at `M` set to zero: mass stays in `{0, ..., M}`.
    #[default]
    Reflect,
    /// Row `M` keeps `-(λ_M + μ_M)`; mass `λ_M` leaks out of the truncation.
    Absorb,
}

impl std::str::FromStr for BoundaryPolicy {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "reflect" | "reflect_at_M" => Ok(BoundaryPolicy::Reflect),
            "absorb" | "absorb_at_M" => Ok(BoundaryPolicy::Absorb),
            _ => Err(Error::Input(format!("unknown boundary policy `{s}`"))),
        }
    }
}

/// Killed generator on states `1..=M` in tridiagonal storage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorMatrix {
    pub dim: usize,
    /// `sub[k] = q_{k+2, k+1} = μ_{k+2}` (0-based storage).
    pub sub: Vec<f64>,
    pub diag: Vec<f64>,
    /// `sup[k] = q_{k+1, k+2} = λ_{k+1}`.
    pub sup: Vec<f64>,
    pub policy: BoundaryPolicy,
    /// `μ_1`, the killing rate from state 1.
    pub kill_rate: f64,
}

impl GeneratorMatrix {
    /// Entry `q_{i,j}`, 1-based.
    pub fn entry(&self, i: usize, j: usize) -> f64 {
        if i == j {
            self.diag[i - 1]
        } else if j == i + 1 {
            self.sup[i - 1]
        } else if i == j + 1 {
            self.sub[j - 1]
        } else {
            0.0
        }
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        (1..=self.dim)
            .map(|i| (1..=self.dim).map(|j| self.entry(i, j)).collect())
            .collect()
    }

    pub fn row_sums(&self) -> Vec<f64> {
        (0..self.dim)
            .map(|k| {
                let mut s = self.diag[k];
                if k > 0 {
                    s += self.sub[k - 1];
                }
                if k + 1 < self.dim {
                    s += self.sup[k];
                }
                s
            })
            .collect()
    }
}

pub fn build_generator(rates: &RateSchedule, m: usize, policy: BoundaryPolicy) -> Result<GeneratorMatrix> {
    if m == 0 {
        return domain("truncation size must be at least 1");
    }
    let mut diag = Vec::with_capacity(m);
    let mut sup = Vec::with_capacity(m.saturating_sub(1));
    let mut sub = Vec::with_capacity(m.saturating_sub(1));
    for i in 1..=m {
        let b = rates.birth(i)?;
        let d = rates.death(i)?;
        let top = i == m && policy == BoundaryPolicy::Reflect;
        diag.push(if top { -d } else { -(b + d) });
        if i < m {
            sup.push(b);
            sub.push(rates.death(i + 1)?);
        }
    }
    Ok(GeneratorMatrix {
        dim: m,
        sub,
        diag,
        sup,
        policy,
        kill_rate: rates.death(1)?,
    })
}
