use std::path::PathBuf;

use causal_rd::exact_oracle::{
    check_markov_chains, directed_information_between, distortion_distribution, enumerate_joint,
    excess_distortion_exact, expected_distortion, min_excess_distortion, DpiReport, EnumerationOptions, InfoReport,
    MarkovReport, Var, DEFAULT_BUDGET,
};
use causal_rd::matching::{capacity_curve, match_source_to_channel};
use causal_rd::montecarlo::{bound_curve, run_excess_experiment, SimConfig, Threshold};
use causal_rd::nrdf::{
    bsms_nrdf, distortion_bisection, fixed_point_solve, nrdf_value, BisectionOptions, SolverOptions,
};
use causal_rd::realization::{build_scheme, InitialState, SchemeKind};
use causal_rd::{Distortion64, Error, Source64};
use clap::Args;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::output::{csv_bytes, emit, json_bytes, num, opt_num, resolve_out};
use crate::{config, CliError};

/// Largest horizon for which the full four-variable table is checked.
const MARKOV_CHECK_MAX_N: usize = 3;

pub struct Context {
    pub config: Option<PathBuf>,
    pub out: Option<PathBuf>,
}

impl Context {
    fn resolve<A: Serialize + DeserializeOwned>(&self, command: &str, flags: &A) -> Result<A, CliError> {
        let cfg = self.config.as_deref().map(|p| config::load(p, command)).transpose()?;
        config::merge(flags, cfg)
    }

    fn write(
        &self,
        default: &str,
        bytes: &[u8],
        command: &str,
        params: &impl Serialize,
        seed: u64,
    ) -> Result<(), CliError> {
        let path = resolve_out(self.out.as_deref(), default);
        let params = serde_json::to_value(params).expect("parameters serialize");
        emit(&path, bytes, command, &params, seed)
    }
}

fn need<T>(v: Option<T>, flag: &str) -> Result<T, CliError> {
    v.ok_or_else(|| CliError::Validation(format!("--{flag} is required")))
}

fn invalid(msg: impl Into<String>) -> CliError {
    CliError::Validation(msg.into())
}

fn parse_kind(s: &str) -> Result<SchemeKind, CliError> {
    match s.parse()? {
        SchemeKind::Custom => Err(invalid("scheme must be unmatched, matched or matched-feedback")),
        k => Ok(k),
    }
}

fn parse_initial(s: &str) -> Result<InitialState, CliError> {
    match s {
        "source-stationary" => Ok(InitialState::default()),
        "stationary" => Ok(InitialState::Stationary),
        other => Err(invalid(format!("unknown initial state {other:?} (source-stationary | stationary)"))),
    }
}

#[derive(Args, Serialize, Deserialize, Debug, Default)]
#[serde(default, deny_unknown_fields, rename_all = "kebab-case")]
pub struct RdfArgs {
    /// Source flip probability.
    #[arg(long)]
    pub p: Option<f64>,
    /// Single distortion level.
    #[arg(long, visible_alias = "D")]
    pub d: Option<f64>,
    #[arg(long)]
    pub d_min: Option<f64>,
    #[arg(long)]
    pub d_max: Option<f64>,
    /// Grid points between --d-min and --d-max (default 11).
    #[arg(long)]
    pub d_steps: Option<usize>,
    /// Also run the fixed-point solver and report its rate and gap.
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub solver: Option<bool>,
}

/// Solver rate at distortion `d`; above the zero-rate point the `s = 0`
/// solution is reported.
fn solver_rate(src: &Source64, d: f64) -> Result<f64, Error> {
    let rho = Distortion64::hamming(2);
    let kernel = src.kernel();
    match distortion_bisection(&kernel, &rho, d, &BisectionOptions::default()) {
        Ok(sol) => Ok(sol.point.rate),
        Err(Error::Range(_)) if d >= 0.5 => {
            let fp = fixed_point_solve(&kernel, &rho, 0.0, &SolverOptions::default())?;
            nrdf_value(&kernel, &rho, 0.0, &fp.reproduction)
        }
        Err(e) => Err(e),
    }
}

pub fn rdf(ctx: &Context, flags: RdfArgs) -> Result<bool, CliError> {
    let mut a = ctx.resolve("rdf", &flags)?;
    let p = need(a.p, "p")?;
    let grid = match (a.d, a.d_min, a.d_max) {
        (Some(d), None, None) => vec![d],
        (None, Some(lo), Some(hi)) => {
            let steps = *a.d_steps.get_or_insert(11);
            if steps == 0 || hi < lo {
                return Err(invalid("need --d-steps >= 1 and --d-min <= --d-max"));
            }
            if steps == 1 {
                vec![lo]
            } else {
                (0..steps).map(|i| lo + (hi - lo) * i as f64 / (steps - 1) as f64).collect()
            }
        }
        _ => return Err(invalid("give either --d or both --d-min and --d-max")),
    };
    let solver = *a.solver.get_or_insert(false);
    let src = Source64::new(p)?;
    let mut header = vec!["p", "D", "R_bits", "s", "m", "alpha", "beta"];
    if solver {
        header.extend(["R_solver", "gap"]);
    }
    let mut rows = Vec::with_capacity(grid.len());
    for d in grid {
        let pt = bsms_nrdf(&src, d)?;
        let mut row =
            vec![num(p), num(d), num(pt.rate), num(pt.multiplier), opt_num(pt.m), opt_num(pt.alpha), opt_num(pt.beta)];
        if solver {
            let r = solver_rate(&src, d)?;
            row.extend([num(r), num((r - pt.rate).abs())]);
        }
        rows.push(row);
    }
    ctx.write("rdf.csv", &csv_bytes(&header, &rows)?, "rdf", &a, 0)?;
    Ok(true)
}

#[derive(Args, Serialize, Deserialize, Debug, Default)]
#[serde(default, deny_unknown_fields, rename_all = "kebab-case")]
pub struct CapacityArgs {
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub beta: Option<f64>,
    /// Take α, β from the reproduction kernel at (p, D) instead.
    #[arg(long)]
    pub p: Option<f64>,
    #[arg(long, visible_alias = "D")]
    pub d: Option<f64>,
    /// Single cost level.
    #[arg(long)]
    pub kappa: Option<f64>,
    /// Grid κ = i / steps, i = 0..=steps (default 100).
    #[arg(long)]
    pub kappa_steps: Option<usize>,
}

pub fn capacity(ctx: &Context, flags: CapacityArgs) -> Result<bool, CliError> {
    let mut a = ctx.resolve("capacity", &flags)?;
    let (alpha, beta) = match (a.alpha, a.beta, a.p, a.d) {
        (Some(al), Some(be), None, None) => (al, be),
        (None, None, Some(p), Some(d)) => {
            let pt = bsms_nrdf(&Source64::new(p)?, d)?;
            (pt.alpha.unwrap(), pt.beta.unwrap())
        }
        _ => return Err(invalid("give either --alpha and --beta, or --p and --d")),
    };
    let grid: Vec<f64> = match a.kappa {
        Some(k) => vec![k],
        None => {
            let steps = *a.kappa_steps.get_or_insert(100);
            if steps == 0 {
                return Err(invalid("--kappa-steps must be at least 1"));
            }
            (0..=steps).map(|i| i as f64 / steps as f64).collect()
        }
    };
    let rows: Vec<Vec<String>> = capacity_curve(alpha, beta, &grid)?
        .into_iter()
        .map(|c| vec![num(c.kappa), num(c.alpha), num(c.beta), num(c.capacity)])
        .collect();
    ctx.write("capacity.csv", &csv_bytes(&["kappa", "alpha", "beta", "C_bits"], &rows)?, "capacity", &a, 0)?;
    Ok(true)
}

#[derive(Args, Serialize, Deserialize, Debug, Default)]
#[serde(default, deny_unknown_fields, rename_all = "kebab-case")]
pub struct MatchArgs {
    #[arg(long)]
    pub p: Option<f64>,
    #[arg(long, visible_alias = "D")]
    pub d: Option<f64>,
}

/// Succeeds only when rate and capacity agree within tolerance.
pub fn matching(ctx: &Context, flags: MatchArgs) -> Result<bool, CliError> {
    let a = ctx.resolve("match", &flags)?;
    let report = match_source_to_channel(need(a.p, "p")?, need(a.d, "d")?)?;
    ctx.write("match.json", &json_bytes(&report), "match", &a, 0)?;
    if !report.matched {
        eprintln!("not matched: |R - C| = {:e}", report.gap);
    }
    Ok(report.matched)
}

#[derive(Args, Serialize, Deserialize, Debug, Default)]
#[serde(default, deny_unknown_fields, rename_all = "kebab-case")]
pub struct SimulateArgs {
    /// unmatched | matched | matched-feedback
    #[arg(long)]
    pub scheme: Option<String>,
    #[arg(long)]
    pub p: Option<f64>,
    /// Design distortion level of the scheme.
    #[arg(long = "D")]
    #[serde(rename = "D")]
    pub distortion: Option<f64>,
    /// Excess threshold per symbol.
    #[arg(long)]
    pub d: Option<f64>,
    /// Threshold as a margin over the stationary distortion.
    #[arg(long)]
    pub delta: Option<f64>,
    #[arg(long)]
    pub n: Option<usize>,
    /// Default 100000.
    #[arg(long)]
    pub trials: Option<u64>,
    /// Default 0.
    #[arg(long)]
    pub seed: Option<u64>,
    /// source-stationary (default) | stationary
    #[arg(long)]
    pub initial: Option<String>,
}

pub fn simulate(ctx: &Context, flags: SimulateArgs) -> Result<bool, CliError> {
    let mut a = ctx.resolve("simulate", &flags)?;
    let kind = parse_kind(a.scheme.get_or_insert_with(|| "unmatched".into()))?;
    let p = need(a.p, "p")?;
    let dist = need(a.distortion, "D")?;
    let n = need(a.n, "n")?;
    let threshold = match (a.d, a.delta) {
        (Some(d), None) => Threshold::Direct(d),
        (None, Some(delta)) => Threshold::Margin(delta),
        _ => return Err(invalid("give exactly one of --d and --delta")),
    };
    let config = SimConfig {
        n,
        trials: *a.trials.get_or_insert(100_000),
        seed: *a.seed.get_or_insert(0),
        initial: parse_initial(a.initial.get_or_insert_with(|| "source-stationary".into()))?,
    };
    let r = run_excess_experiment(kind, p, dist, &config, threshold, DEFAULT_BUDGET)?;
    let header = ["n", "trials", "d", "delta", "estimate", "ci_low", "ci_high", "exact", "bound", "avg_cost"];
    let row = vec![
        r.n.to_string(),
        r.trials.to_string(),
        num(r.d),
        opt_num(r.delta),
        num(r.estimate),
        num(r.ci_low),
        num(r.ci_high),
        opt_num(r.exact),
        opt_num(r.bound),
        opt_num(r.avg_cost),
    ];
    ctx.write("simulate.csv", &csv_bytes(&header, &[row])?, "simulate", &a, config.seed)?;
    Ok(true)
}

#[derive(Args, Serialize, Deserialize, Debug, Default)]
#[serde(default, deny_unknown_fields, rename_all = "kebab-case")]
pub struct BoundArgs {
    #[arg(long)]
    pub p: Option<f64>,
    #[arg(long, visible_alias = "D")]
    pub d: Option<f64>,
    #[arg(long)]
    pub delta: Option<f64>,
    /// Explicit horizons, comma separated; overrides the log grid.
    #[arg(long, value_delimiter = ',')]
    pub n: Option<Vec<usize>>,
    /// Log-spaced grid from --n-min (default 1000) to --n-max (default 1e8).
    #[arg(long)]
    pub n_min: Option<usize>,
    #[arg(long)]
    pub n_max: Option<usize>,
    /// Default 51.
    #[arg(long)]
    pub n_points: Option<usize>,
}

fn log_grid(lo: usize, hi: usize, points: usize) -> Vec<usize> {
    if points <= 1 || lo == hi {
        return vec![lo];
    }
    let (a, b) = ((lo as f64).ln(), (hi as f64).ln());
    let mut g: Vec<usize> =
        (0..points).map(|i| (a + (b - a) * i as f64 / (points - 1) as f64).exp().round() as usize).collect();
    g.dedup();
    g
}

pub fn bound(ctx: &Context, flags: BoundArgs) -> Result<bool, CliError> {
    let mut a = ctx.resolve("bound", &flags)?;
    let p = need(a.p, "p")?;
    let d = need(a.d, "d")?;
    let delta = need(a.delta, "delta")?;
    if delta.is_nan() || delta <= 0.0 {
        return Err(invalid(format!("--delta must be positive, got {delta}")));
    }
    let grid = match a.n.clone() {
        Some(g) if !g.is_empty() => g,
        _ => {
            let lo = *a.n_min.get_or_insert(1000);
            let hi = *a.n_max.get_or_insert(100_000_000);
            let pts = *a.n_points.get_or_insert(51);
            if lo == 0 || hi < lo {
                return Err(invalid("need 1 <= --n-min <= --n-max"));
            }
            log_grid(lo, hi, pts)
        }
    };
    let rows: Vec<Vec<String>> = bound_curve(p, d, delta, &grid)?
        .into_iter()
        .map(|b| vec![b.n.to_string(), num(b.delta), num(b.lambda), opt_num(b.bound), b.bound.is_some().to_string()])
        .collect();
    ctx.write("bound.csv", &csv_bytes(&["n", "delta", "lambda", "bound", "valid"], &rows)?, "bound", &a, 0)?;
    Ok(true)
}

#[derive(Args, Serialize, Deserialize, Debug, Default)]
#[serde(default, deny_unknown_fields, rename_all = "kebab-case")]
pub struct ExactArgs {
    #[arg(long)]
    pub scheme: Option<String>,
    #[arg(long)]
    pub p: Option<f64>,
    #[arg(long, visible_alias = "D")]
    pub d: Option<f64>,
    #[arg(long)]
    pub n: Option<usize>,
    /// Levels for the minimum excess distortion, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub epsilon: Option<Vec<f64>>,
    #[arg(long)]
    pub initial: Option<String>,
}

#[derive(Serialize)]
struct ExcessRow {
    d: f64,
    probability: f64,
}

#[derive(Serialize)]
struct MinExcessRow {
    epsilon: f64,
    d: f64,
}

#[derive(Serialize)]
struct ExactReport {
    scheme: String,
    p: f64,
    distortion: f64,
    n: usize,
    initial: String,
    /// Closed-form stationary rate, for comparison with `info.per_symbol`.
    rate_bits: f64,
    info: InfoReport<f64>,
    dpi: DpiReport<f64>,
    expected_distortion: f64,
    distortion_law: Vec<(f64, f64)>,
    excess: Vec<ExcessRow>,
    min_excess: Vec<MinExcessRow>,
    /// Present for `n <= 3`.
    markov: Option<MarkovReport<f64>>,
}

pub fn exact(ctx: &Context, flags: ExactArgs) -> Result<bool, CliError> {
    let mut a = ctx.resolve("exact", &flags)?;
    let scheme_name = a.scheme.get_or_insert_with(|| "unmatched".into()).clone();
    let kind = parse_kind(&scheme_name)?;
    let p = need(a.p, "p")?;
    let d = need(a.d, "d")?;
    let n = need(a.n, "n")?;
    let initial_name = a.initial.get_or_insert_with(|| "source-stationary".into()).clone();
    let initial = parse_initial(&initial_name)?;
    let epsilons = a.epsilon.get_or_insert_with(|| vec![0.01, 0.05, 0.1, 0.2]).clone();

    let scheme = build_scheme(kind, p, d)?;
    let opts = EnumerationOptions { initial, budget: DEFAULT_BUDGET };
    let xy = enumerate_joint(&scheme, n, &[Var::X, Var::Y], &opts)?;
    let xb = enumerate_joint(&scheme, n, &[Var::X, Var::B], &opts)?;
    let di_xy = directed_information_between(&xy, Var::X, Var::Y)?;
    let di_xb = directed_information_between(&xb, Var::X, Var::B)?;
    let info = InfoReport {
        horizon: n,
        directed_information_xy: di_xy,
        directed_information_xb: Some(di_xb),
        per_symbol: di_xy / (n + 1) as f64,
    };
    let rho = scheme.distortion();
    let steps = (n + 1) as f64;
    let excess = (0..=n + 1)
        .map(|k| {
            let d = k as f64 / steps;
            Ok(ExcessRow { d, probability: excess_distortion_exact(&xy, rho, d)? })
        })
        .collect::<Result<Vec<_>, Error>>()?;
    let min_excess = epsilons
        .iter()
        .map(|&epsilon| Ok(MinExcessRow { epsilon, d: min_excess_distortion(&xy, rho, epsilon)? }))
        .collect::<Result<Vec<_>, Error>>()?;
    let markov = if n <= MARKOV_CHECK_MAX_N {
        Some(check_markov_chains(&enumerate_joint(&scheme, n, &Var::ALL, &opts)?)?)
    } else {
        None
    };
    let report = ExactReport {
        scheme: scheme_name,
        p,
        distortion: d,
        n,
        initial: initial_name,
        rate_bits: bsms_nrdf(&Source64::new(p)?, d)?.rate,
        info,
        dpi: DpiReport::new(di_xy, di_xb),
        expected_distortion: expected_distortion(&xy, rho)?,
        distortion_law: distortion_distribution(&xy, rho)?,
        excess,
        min_excess,
        markov,
    };
    ctx.write("exact.json", &json_bytes(&report), "exact", &a, 0)?;
    Ok(true)
}
