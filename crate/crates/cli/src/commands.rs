use rayon::prelude::*;
use serde_json::{json, Map, Value};

use fracbd::linear::{
    p1j_classical, qld_linear, supercritical_tail, survival_fractional, tail_constant_subcritical, LinearParams,
    Regime,
};
use fracbd::mlf::{ml_eval_traced, ml_survival, MlEvalConfig};
use fracbd::model::{BoundaryPolicy, RateSchedule};
use fracbd::paths::{estimate_pmfs, SimMethod};
use fracbd::quasi::{qld_coefficients, qsd_classify, qsd_solve, spectral_conditional, QldOutcome, QsdOutcome};
use fracbd::selfcheck::run_selfcheck;
use fracbd::spectral::decompose_rates;
use fracbd::stable::{sample_stable, RngStream};
use fracbd::{Error, FracOrder};

use crate::args::*;
use crate::output::{fmt_num, write_json_file, Cell, Manifest, Sink, Table};

/// Exit 2 for bad input, 1 for everything that went wrong while computing.
#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Failure(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Failure(_) => 1,
        }
    }

    pub fn message(&self) -> &str {
        match self {
            CliError::Usage(m) | CliError::Failure(m) => m,
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        match e {
            Error::Domain(_) | Error::UnsupportedDomain(_) | Error::Input(_) => CliError::Usage(e.to_string()),
            _ => CliError::Failure(e.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Failure(format!("i/o error: {e}"))
    }
}

type CliResult<T> = Result<T, CliError>;

pub const SEED_ENV: &str = "FBD_SEED";

fn order(a: f64) -> CliResult<FracOrder> {
    Ok(FracOrder::new(a)?)
}

fn rates_from(r: &RateArgs) -> CliResult<RateSchedule> {
    match (r.lambda, r.mu, &r.rates_file) {
        (Some(l), Some(m), None) => Ok(RateSchedule::linear(l, m)?),
        (None, None, Some(p)) => Ok(RateSchedule::from_csv_path(p)?),
        _ => Err(CliError::Usage("give either --lambda and --mu, or --rates-file".into())),
    }
}

fn policy(b: Boundary) -> BoundaryPolicy {
    match b {
        Boundary::Reflect => BoundaryPolicy::Reflect,
        Boundary::Absorb => BoundaryPolicy::Absorb,
    }
}

/// The flag seed, unless the environment overrides it.
fn effective_seed(flag: u64) -> CliResult<(u64, &'static str)> {
    match std::env::var(SEED_ENV) {
        Ok(v) => v
            .trim()
            .parse()
            .map(|s| (s, "env"))
            .map_err(|_| CliError::Usage(format!("{SEED_ENV} must be an unsigned integer, got `{v}`"))),
        Err(_) => Ok((flag, "flag")),
    }
}

pub fn run(cli: &Cli) -> CliResult<()> {
    if let Some(w) = cli.workers {
        rayon::ThreadPoolBuilder::new()
            .num_threads(w as usize)
            .build_global()
            .map_err(|e| CliError::Failure(format!("worker pool: {e}")))?;
    }
    let sink = Sink { out: cli.out.clone(), json: cli.json };
    let mut manifest = Manifest {
        build: BUILD_ID,
        subcommand: cli.command.name(),
        inputs: serde_json::to_value(&cli.command).expect("arguments serialize"),
        seed: None,
        seed_source: None,
        workers: cli.workers,
    };
    match &cli.command {
        Command::MlEval(a) => ml_eval_cmd(a, &sink, &manifest),
        Command::SampleStable(a) => {
            let (seed, src) = effective_seed(a.seed)?;
            manifest.seed = Some(seed);
            manifest.seed_source = Some(src);
            sample_stable_cmd(a, seed, &sink, &manifest)
        }
        Command::Simulate(a) => {
            let (seed, src) = effective_seed(a.seed)?;
            manifest.seed = Some(seed);
            manifest.seed_source = Some(src);
            simulate_cmd(a, seed, &sink, &manifest)
        }
        Command::Transition(a) => transition_cmd(a, &sink, &manifest),
        Command::Survival(a) => survival_cmd(a, &sink, &manifest),
        Command::Qld(a) => qld_cmd(a, &sink, &manifest),
        Command::Qsd(a) => qsd_cmd(a, &sink, &manifest),
        Command::Linear(a) => linear_cmd(a, &sink, &manifest),
        Command::Selfcheck => selfcheck_cmd(&sink, &manifest),
    }
}

fn ml_eval_cmd(a: &MlEvalArgs, sink: &Sink, manifest: &Manifest) -> CliResult<()> {
    let alpha = order(a.alpha)?;
    let (value, method) = match (a.x, a.theta, a.t) {
        (Some(x), None, None) => {
            let (v, m) = ml_eval_traced(alpha, x, &MlEvalConfig::default())?;
            (v, format!("{m:?}").to_lowercase())
        }
        (None, Some(th), Some(t)) => (ml_survival(alpha, th, t)?, "survival".to_string()),
        _ => return Err(CliError::Usage("give --x, or --theta with --t".into())),
    };
    if sink.json {
        let mut m = Map::new();
        m.insert("alpha".into(), json!(a.alpha));
        if let Some(x) = a.x {
            m.insert("x".into(), json!(x));
        }
        if let (Some(th), Some(t)) = (a.theta, a.t) {
            m.insert("theta".into(), json!(th));
            m.insert("t".into(), json!(t));
        }
        m.insert("value".into(), json!(value));
        m.insert("method".into(), json!(method));
        m.insert("manifest".into(), serde_json::to_value(manifest).expect("manifest serializes"));
        sink.write_text(&(Value::Object(m).to_string() + "\n"))?;
    } else {
        sink.write_text(&(fmt_num(value) + "\n"))?;
        sink.write_manifest(manifest)?;
    }
    Ok(())
}

fn sample_stable_cmd(a: &SampleStableArgs, seed: u64, sink: &Sink, manifest: &Manifest) -> CliResult<()> {
    let alpha = order(a.alpha)?;
    if alpha.is_one() {
        return Err(CliError::Usage("the stable law needs α < 1".into()));
    }
    let draws: Vec<f64> = (0..a.n)
        .into_par_iter()
        .map(|k| sample_stable(alpha, &mut RngStream::new(seed, k).rng()))
        .collect();
    let mut t = Table::new(&["index", "draw"]);
    for (k, d) in draws.into_iter().enumerate() {
        t.push(vec![k.into(), d.into()]);
    }
    Ok(sink.emit_table(&t, Map::new(), manifest)?)
}

fn simulate_cmd(a: &SimulateArgs, seed: u64, sink: &Sink, manifest: &Manifest) -> CliResult<()> {
    let alpha = order(a.alpha)?;
    let rates = rates_from(&a.rates)?;
    let method = match a.method {
        Method::Renewal => SimMethod::Renewal,
        Method::Timechange => SimMethod::Timechange,
    };
    let pmfs = estimate_pmfs(method, &rates, alpha, a.i0, &a.t, a.n_paths, seed)?;
    let name = match a.method {
        Method::Renewal => "renewal",
        Method::Timechange => "timechange",
    };
    let mut t = Table::new(&["t", "state", "probability", "stderr", "n_paths", "method"]);
    let mut discarded = 0;
    for p in &pmfs {
        discarded = discarded.max(p.discarded);
        for (&s, &m) in &p.mass {
            t.push(vec![p.time.into(), s.into(), m.into(), p.se(s).into(), p.n_paths.into(), name.into()]);
        }
    }
    if discarded > 0 {
        eprintln!("warning: {discarded} paths exceeded the jump cap and were discarded");
    }
    let mut extra = Map::new();
    extra.insert("discarded".into(), json!(discarded));
    Ok(sink.emit_table(&t, extra, manifest)?)
}

fn transition_cmd(a: &TransitionArgs, sink: &Sink, manifest: &Manifest) -> CliResult<()> {
    let alpha = order(a.alpha)?;
    let dec = decompose_rates(&rates_from(&a.rates)?, a.m, policy(a.boundary))?;
    let mut t = Table::new(&["i", "j", "t", "p"]);
    for &time in &a.t {
        let f = dec.ml_factors(alpha, time)?;
        for &j in &a.j {
            t.push(vec![a.i.into(), j.into(), time.into(), dec.transition_with(&f, a.i, j)?.into()]);
        }
    }
    Ok(sink.emit_table(&t, Map::new(), manifest)?)
}

fn survival_cmd(a: &SurvivalArgs, sink: &Sink, manifest: &Manifest) -> CliResult<()> {
    let alpha = order(a.alpha)?;
    let dec = decompose_rates(&rates_from(&a.rates)?, a.m, policy(a.boundary))?;
    let mut t = Table::new(&["i", "t", "survival"]);
    for &time in &a.t {
        let f = dec.ml_factors(alpha, time)?;
        t.push(vec![a.i.into(), time.into(), dec.survival_with(&f, a.i)?.into()]);
    }
    Ok(sink.emit_table(&t, Map::new(), manifest)?)
}

fn qld_cmd(a: &QldArgs, sink: &Sink, manifest: &Manifest) -> CliResult<()> {
    let rates = rates_from(&a.rates)?;
    let q = match qld_coefficients(&rates, a.i0, a.nmax)? {
        QldOutcome::Limit(q) => q,
        QldOutcome::NoLimit { reason } => {
            return Err(CliError::Failure(format!("no quasi-limiting distribution: {reason}")))
        }
    };
    let mut t = Table::new(&["n", "coefficient", "pmf"]);
    for n in 1..=a.nmax {
        t.push(vec![n.into(), q.coefficients[n - 1].into(), q.pmf[n - 1].into()]);
    }
    let mut extra = Map::new();
    extra.insert("tail_bound".into(), json!(q.tail_bound));
    if let Some(ct) = a.check_t {
        let alpha = order(a.alpha)?;
        let dec = decompose_rates(&rates, a.m, BoundaryPolicy::Reflect)?;
        let cond = spectral_conditional(&dec, alpha, a.i0, ct)?;
        let len = cond.len().max(q.pmf.len());
        let tv = 0.5
            * (0..len)
                .map(|k| (cond.get(k).copied().unwrap_or(0.0) - q.pmf.get(k).copied().unwrap_or(0.0)).abs())
                .sum::<f64>();
        extra.insert("check_t".into(), json!(ct));
        extra.insert("check_tv".into(), json!(tv));
        eprintln!("spectral check at t={}: total variation {}", fmt_num(ct), fmt_num(tv));
    }
    Ok(sink.emit_table(&t, extra, manifest)?)
}

fn parse_scan(s: &str) -> CliResult<Vec<f64>> {
    let bad = || CliError::Usage(format!("--theta-scan expects lo:hi:steps, got `{s}`"));
    let parts: Vec<&str> = s.split(':').collect();
    if parts.len() != 3 {
        return Err(bad());
    }
    let lo: f64 = parts[0].parse().map_err(|_| bad())?;
    let hi: f64 = parts[1].parse().map_err(|_| bad())?;
    let steps: usize = parts[2].parse().map_err(|_| bad())?;
    if steps == 0 || !lo.is_finite() || !hi.is_finite() || lo > hi {
        return Err(bad());
    }
    if steps == 1 {
        return Ok(vec![lo]);
    }
    Ok((0..steps).map(|k| lo + (hi - lo) * k as f64 / (steps - 1) as f64).collect())
}

fn qsd_cmd(a: &QsdArgs, sink: &Sink, manifest: &Manifest) -> CliResult<()> {
    let rates = rates_from(&a.rates)?;
    let thetas = match (a.theta, &a.theta_scan) {
        (Some(th), None) => vec![th],
        (None, Some(s)) => parse_scan(s)?,
        _ => return Err(CliError::Usage("give exactly one of --theta and --theta-scan".into())),
    };
    let class = qsd_classify(&rates, 1e-10)?;
    let mut scan = Vec::new();
    let mut chosen = None;
    for &th in &thetas {
        match qsd_solve(&rates, th, a.nmax)? {
            QsdOutcome::Accepted(r) => {
                scan.push(json!({"theta": th, "accepted": true, "residual": r.residual, "raw_mass": r.raw_mass}));
                chosen = Some(r);
            }
            QsdOutcome::Rejected { reason } => {
                scan.push(json!({"theta": th, "accepted": false, "reason": reason}));
            }
        }
    }
    let mut side = Map::new();
    side.insert("classification".into(), serde_json::to_value(class).expect("class serializes"));
    side.insert("theta".into(), json!(chosen.as_ref().map(|r| r.theta)));
    side.insert("scan".into(), Value::Array(scan));
    let side = Value::Object(side);
    match sink.sidecar(".classification.json") {
        Some(p) => write_json_file(&p, &side)?,
        None if !sink.json => eprintln!("classification: {side}"),
        None => {}
    }
    let Some(mut r) = chosen else {
        return Err(CliError::Failure("no θ in the request yields a quasi-stationary distribution".into()));
    };
    r.classification = Some(class);
    let mut t = Table::new(&["j", "nu"]);
    for (k, v) in r.nu.iter().enumerate() {
        t.push(vec![(k + 1).into(), (*v).into()]);
    }
    let mut extra = Map::new();
    if let Value::Object(m) = side {
        extra.extend(m);
    }
    Ok(sink.emit_table(&t, extra, manifest)?)
}

fn linear_cmd(a: &LinearArgs, sink: &Sink, manifest: &Manifest) -> CliResult<()> {
    let alpha = order(a.alpha)?;
    let p = LinearParams::new(a.lambda, a.mu)?;
    let need_t = || {
        if a.t.is_empty() {
            Err(CliError::Usage("at least one --t is required".into()))
        } else {
            Ok(())
        }
    };
    let t = match a.what {
        LinearWhat::Survival => {
            need_t()?;
            let mut t = Table::new(&["t", "survival"]);
            for &time in &a.t {
                t.push(vec![time.into(), survival_fractional(&p, alpha, time, 100_000)?.value.into()]);
            }
            t
        }
        LinearWhat::P1j => {
            need_t()?;
            if !alpha.is_one() {
                return Err(CliError::Usage("p1j closed forms exist only for α = 1".into()));
            }
            if a.j.is_empty() {
                return Err(CliError::Usage("at least one --j is required".into()));
            }
            let mut t = Table::new(&["j", "t", "p"]);
            for &time in &a.t {
                for &j in &a.j {
                    t.push(vec![j.into(), time.into(), p1j_classical(&p, j, time)?.into()]);
                }
            }
            t
        }
        LinearWhat::Qld => match qld_linear(&p, a.i0, a.nmax)? {
            QldOutcome::Limit(q) => {
                let mut t = Table::new(&["n", "coefficient", "pmf"]);
                for n in 1..=a.nmax {
                    t.push(vec![n.into(), q.coefficients[n - 1].into(), q.pmf[n - 1].into()]);
                }
                t
            }
            QldOutcome::NoLimit { reason } => {
                return Err(CliError::Failure(format!("no quasi-limiting distribution: {reason}")))
            }
        },
        LinearWhat::Tail => {
            need_t()?;
            let mut t = Table::new(&["t", "scaled", "constant"]);
            match p.regime() {
                Regime::Subcritical => {
                    let c = tail_constant_subcritical(&p, alpha)?;
                    for &time in &a.t {
                        let s = survival_fractional(&p, alpha, time, 100_000)?.value;
                        t.push(vec![time.into(), (time.powf(alpha.value()) * s).into(), c.into()]);
                    }
                }
                Regime::Supercritical => {
                    for &time in &a.t {
                        let st = supercritical_tail(&p, alpha, time)?;
                        t.push(vec![time.into(), st.scaled_deviation.into(), st.rate.into()]);
                    }
                }
                Regime::Critical => {
                    return Err(CliError::Usage("λ = μ has no power-law tail constant".into()));
                }
            }
            t
        }
    };
    Ok(sink.emit_table(&t, Map::new(), manifest)?)
}

fn selfcheck_cmd(sink: &Sink, manifest: &Manifest) -> CliResult<()> {
    let results = run_selfcheck();
    let mut t = Table::new(&["check", "status", "detail"]);
    for c in &results {
        t.push(vec![c.name.into(), (if c.passed { "pass" } else { "fail" }).into(), Cell::Text(c.detail.replace(',', ";"))]);
    }
    sink.emit_table(&t, Map::new(), manifest)?;
    let failed: Vec<&str> = results.iter().filter(|c| !c.passed).map(|c| c.name).collect();
    if failed.is_empty() {
        Ok(())
    } else {
        Err(CliError::Failure(format!("selfcheck failed: {}", failed.join(", "))))
    }
}
