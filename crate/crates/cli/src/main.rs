//! `mista`: simulation, exact oracle and asymptotic analysis from the command
//! line. Every command prints one JSON document on stdout.
//!
//! Exit codes: 0 success, 1 other failure, 2 invalid flags, 3 overflow guard.

mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use mista_core::analytic::{
    active_count_pmf, asymptotic_age, asymptotic_age_from_root, breakeven_payload_ratio,
    max_throughput_and_age_bound, max_throughput_with_tau2, pm_ratio, q0_limit, regime_analysis,
    spectral_ratio, throughput_asymptotic, AgeDistribution,
};
use mista_core::optimizer::{optimize_age, sweep, sweep_minimum, PolicyKind, RegimeFilter, SweepParam};
use mista_core::oracle::exact_stationary;
use mista_core::sim::{run_replicated, InitialState, RunConfig};
use mista_core::{Error, Policy, PolicyParams, ScaledParams};
use serde_json::{json, Value};

use crate::output::{emit, write_csv};

#[derive(Parser)]
#[command(name = "mista", version, about = "Mini-slotted threshold ALOHA toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the slot-level simulator
    Simulate(SimulateArgs),
    /// Stationary active-count distribution of a finite network
    Pmf(ChainArgs),
    /// Roots of the drift function and regime selection
    Roots(ScaledArgs),
    /// Asymptotic normalised age and throughput
    Age(AgeArgs),
    /// Maximum instantaneous throughput and the implied age lower bound
    Bound(BoundArgs),
    /// Spectral-efficiency ratio with minislot overhead
    Spectral(SpectralArgs),
    /// Optimal (r, alpha, tau2), or an age curve along one parameter
    Optimize(OptimizeArgs),
    /// Exact Markov-chain solve checked against the closed-form ratios
    Oracle(ChainArgs),
    /// Age and throughput of every policy over a list of network sizes
    Compare(CompareArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum PolicyArg {
    Sa,
    Ta,
    Mista,
    Mumista,
}

#[derive(Clone, Copy, ValueEnum)]
enum InitialArg {
    Threshold,
    Fresh,
}

#[derive(Args)]
struct NetworkArgs {
    #[arg(long, value_enum, default_value = "mista")]
    policy: PolicyArg,
    #[arg(long)]
    n: usize,
    /// Age threshold in slots
    #[arg(long, conflicts_with = "r")]
    gamma: Option<u32>,
    /// Threshold as a multiple of n; gamma = round(r n)
    #[arg(long)]
    r: Option<f64>,
    /// Minislot attempt probability
    #[arg(long, conflicts_with = "alpha")]
    tau1: Option<f64>,
    /// Attempt rate scaled by n; tau1 = alpha / n
    #[arg(long)]
    alpha: Option<f64>,
    /// Data-slot attempt probability after a minislot collision
    #[arg(long, default_value_t = 1.0)]
    tau2: f64,
    /// Number of minislots (mumista only)
    #[arg(long, default_value_t = 32)]
    minislots: usize,
}

struct Resolved {
    params: PolicyParams,
    conversion: Value,
}

fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidParams(msg.into())
}

impl NetworkArgs {
    fn resolve(&self) -> Result<Resolved, Error> {
        let n = self.n;
        if n == 0 {
            return Err(invalid("--n must be positive"));
        }
        let tau1 = match (self.tau1, self.alpha) {
            (Some(t), _) => t,
            (None, Some(a)) => a / n as f64,
            (None, None) if matches!(self.policy, PolicyArg::Sa) => 1.0 / n as f64,
            (None, None) => return Err(invalid("one of --tau1 or --alpha is required")),
        };
        let gamma = match (self.gamma, self.r) {
            (Some(g), _) => g,
            (None, Some(r)) => {
                let g = (r * n as f64).round();
                if !(1.0..=f64::from(u32::MAX)).contains(&g) {
                    return Err(invalid(format!("--r {r} gives an unusable threshold for n = {n}")));
                }
                g as u32
            }
            (None, None) if matches!(self.policy, PolicyArg::Sa) => 1,
            (None, None) => return Err(invalid("one of --gamma or --r is required")),
        };
        let params = match self.policy {
            PolicyArg::Sa => PolicyParams::slotted_aloha(n, tau1)?,
            PolicyArg::Ta => PolicyParams::threshold_aloha(n, gamma, tau1)?,
            PolicyArg::Mista => PolicyParams::mista(n, gamma, tau1, self.tau2)?,
            PolicyArg::Mumista => {
                if self.minislots == 0 {
                    return Err(invalid("--minislots must be positive"));
                }
                let schedule = Policy::mumista_default(self.minislots, tau1, self.tau2);
                PolicyParams::new(n, gamma, tau1, self.tau2, schedule)?
            }
        };
        let conversion = json!({
            "r": self.r,
            "alpha": self.alpha,
            "gamma": params.gamma,
            "tau1": params.tau1,
            "r_effective": f64::from(params.gamma) / n as f64,
            "alpha_effective": params.tau1 * n as f64,
        });
        Ok(Resolved { params, conversion })
    }
}

#[derive(Args)]
struct SimulateArgs {
    #[command(flatten)]
    network: NetworkArgs,
    #[arg(long, default_value_t = 1_000_000)]
    slots: u64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 1)]
    replications: usize,
    /// Slots discarded before measuring; defaults to 10% of --slots
    #[arg(long)]
    warmup: Option<u64>,
    #[arg(long, value_enum, default_value = "threshold")]
    initial: InitialArg,
    /// Path prefix for `<prefix>_trajectory.csv` and `<prefix>_histogram.csv`
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ChainArgs {
    #[command(flatten)]
    network: NetworkArgs,
}

#[derive(Args)]
struct ScaledArgs {
    #[arg(long)]
    alpha: f64,
    #[arg(long)]
    r: f64,
    #[arg(long, default_value_t = 1.0)]
    tau2: f64,
}

impl ScaledArgs {
    fn scaled(&self) -> Result<ScaledParams, Error> {
        ScaledParams::new(self.alpha, self.r, self.tau2)
    }
}

#[derive(Args)]
struct AgeArgs {
    #[command(flatten)]
    scaled: ScaledArgs,
    /// Evaluate at this load instead of the selected root
    #[arg(long)]
    k0: Option<f64>,
    /// Also report the finite-network mean age for this many sources
    #[arg(long)]
    n: Option<u64>,
}

#[derive(Args)]
struct BoundArgs {
    /// Pin tau2 instead of maximising over it
    #[arg(long)]
    tau2: Option<f64>,
    /// Network size for the absolute bound
    #[arg(long)]
    n: Option<f64>,
}

#[derive(Args)]
struct SpectralArgs {
    #[arg(long)]
    theta2: f64,
    #[arg(long)]
    theta1: f64,
    /// Data payload in bits
    #[arg(long)]
    c: Option<f64>,
    /// Minislot length in bits
    #[arg(long)]
    d: Option<f64>,
}

#[derive(Clone, Copy, ValueEnum)]
enum OptPolicy {
    Sa,
    Ta,
    Mista,
}

#[derive(Clone, Copy, ValueEnum)]
enum RegimeArg {
    Sp,
    Dp,
    Any,
}

#[derive(Clone, Copy, ValueEnum)]
enum SweepArg {
    R,
    Alpha,
    Tau2,
}

#[derive(Args)]
struct OptimizeArgs {
    #[arg(long, value_enum, default_value = "mista")]
    policy: OptPolicy,
    #[arg(long, value_enum, default_value = "any")]
    regime: RegimeArg,
    /// Sweep one parameter instead of optimising
    #[arg(long, value_enum)]
    sweep: Option<SweepArg>,
    #[arg(long, requires = "sweep", allow_negative_numbers = true)]
    from: Option<f64>,
    #[arg(long, requires = "sweep", allow_negative_numbers = true)]
    to: Option<f64>,
    #[arg(long, default_value_t = 101)]
    points: usize,
    /// Fixed values for a sweep
    #[arg(long, default_value_t = 10.0)]
    alpha: f64,
    #[arg(long, default_value_t = 1.59)]
    r: f64,
    #[arg(long, default_value_t = 0.38)]
    tau2: f64,
}

#[derive(Args)]
struct CompareArgs {
    /// Comma-separated network sizes
    #[arg(long, value_delimiter = ',', default_value = "50,100,200")]
    ns: Vec<usize>,
    #[arg(long, default_value_t = 1_000_000)]
    slots: u64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// MiSTA (alpha, r, tau2)
    #[arg(long, value_delimiter = ',', default_value = "10,1.59,0.38")]
    mista: Vec<f64>,
    /// Threshold ALOHA (alpha, r)
    #[arg(long, value_delimiter = ',', default_value = "4.69,2.21")]
    ta: Vec<f64>,
}

fn simulate(a: &SimulateArgs) -> Result<Value, Error> {
    let Resolved { params, conversion } = a.network.resolve()?;
    if a.replications == 0 {
        return Err(invalid("--replications must be at least 1"));
    }
    let mut config = RunConfig::new(params, a.slots, a.seed).with_replications(a.replications);
    if let Some(w) = a.warmup {
        config = config.with_warmup(w);
    }
    config = config.with_initial(match a.initial {
        InitialArg::Threshold => InitialState::AllThreshold,
        InitialArg::Fresh => InitialState::AllFresh,
    });
    let result = run_replicated(&config)?;
    if let Some(prefix) = &a.out {
        write_csv(prefix, &result.aggregate).map_err(|e| Error::Solver(format!("writing CSV: {e}")))?;
    }
    Ok(json!({
        "paper_anchor": "Table III, Figs. 3-9",
        "params": config.params,
        "conversion": conversion,
        "slots": config.slots,
        "warmup_slots": config.warmup_slots,
        "seed": config.seed,
        "replications": config.replications,
        "normalized_aoi": result.normalized_aoi,
        "throughput_summary": result.throughput,
        "network_avg_aoi_summary": result.network_avg_aoi,
        "metrics": result.aggregate,
    }))
}

fn pmf(a: &ChainArgs) -> Result<Value, Error> {
    let Resolved { params, conversion } = a.network.resolve()?;
    let p = active_count_pmf(&params)?;
    Ok(json!({
        "paper_anchor": "Fig. 3",
        "params": params,
        "conversion": conversion,
        "support_min": p.support_min,
        "mode": p.mode(),
        "mean": p.mean(),
        "probabilities": p.probabilities,
    }))
}

fn roots(a: &ScaledArgs) -> Result<Value, Error> {
    let s = a.scaled()?;
    let analysis = regime_analysis(&s)?;
    Ok(json!({
        "paper_anchor": "Table I",
        "scaled": s,
        "analysis": analysis,
    }))
}

fn age(a: &AgeArgs) -> Result<Value, Error> {
    let s = a.scaled.scaled()?;
    let (k0, regime) = match a.k0 {
        Some(k) => (k, None),
        None => {
            let analysis = regime_analysis(&s)?;
            (analysis.selected_k0, Some(analysis.regime))
        }
    };
    let mut out = json!({
        "paper_anchor": "Table I",
        "scaled": s,
        "k0": k0,
        "regime": regime,
        "q0_limit": q0_limit(&s, k0),
        "age_over_n": asymptotic_age(&s, k0),
        "age_over_n_from_root": asymptotic_age_from_root(&s, k0),
        "throughput": throughput_asymptotic(&s, k0),
    });
    if let Some(n) = a.n {
        let gamma = (s.r * n as f64).round() as u64;
        let dist = AgeDistribution::new(gamma.max(1), q0_limit(&s, k0) / n as f64)?;
        out["finite"] = json!({ "n": n, "gamma": gamma, "mean_age": dist.mean() });
    }
    Ok(out)
}

fn bound(a: &BoundArgs) -> Result<Value, Error> {
    let b = match a.tau2 {
        Some(t) => max_throughput_with_tau2(t)?,
        None => max_throughput_and_age_bound(),
    };
    Ok(json!({
        "paper_anchor": "Prop. 4",
        "q_max": b.q_max,
        "G": b.g_star,
        "tau2": b.tau2_star,
        "bound_slope": b.bound_slope(),
        "age_lower_bound": a.n.map(|n| b.age_lower_bound(n)),
    }))
}

fn spectral(a: &SpectralArgs) -> Result<Value, Error> {
    let ratio = match (a.c, a.d) {
        (Some(c), Some(d)) => Some(spectral_ratio(a.theta2, a.theta1, c, d)?),
        (None, None) => None,
        _ => return Err(invalid("--c and --d must be given together")),
    };
    Ok(json!({
        "paper_anchor": "Table III",
        "theta2": a.theta2,
        "theta1": a.theta1,
        "throughput_ratio": a.theta2 / a.theta1,
        "ratio": ratio,
        "breakeven_c_over_d": breakeven_payload_ratio(a.theta2, a.theta1)?,
    }))
}

fn optimize(a: &OptimizeArgs) -> Result<Value, Error> {
    if let Some(param) = a.sweep {
        let (param, name, default) = match param {
            SweepArg::R => (SweepParam::R, "r", (1.0, 3.0)),
            SweepArg::Alpha => (SweepParam::Alpha, "alpha", (1.0, 20.0)),
            SweepArg::Tau2 => (SweepParam::Tau2, "tau2", (0.01, 1.0)),
        };
        let (lo, hi) = (a.from.unwrap_or(default.0), a.to.unwrap_or(default.1));
        if a.points < 2 || lo >= hi {
            return Err(invalid("a sweep needs --points >= 2 and --from < --to"));
        }
        let values: Vec<f64> = (0..a.points)
            .map(|i| lo + (hi - lo) * i as f64 / (a.points - 1) as f64)
            .collect();
        let fixed = ScaledParams::new(a.alpha, a.r, a.tau2)?;
        let curve = sweep(param, &values, &fixed);
        let minimum = sweep_minimum(&curve).cloned();
        return Ok(json!({
            "paper_anchor": "Figs. 6-7",
            "parameter": name,
            "fixed": fixed,
            "minimum": minimum,
            "curve": curve,
        }));
    }
    let policy = match a.policy {
        OptPolicy::Sa => PolicyKind::SlottedAloha,
        OptPolicy::Ta => PolicyKind::ThresholdAloha,
        OptPolicy::Mista => PolicyKind::Mista,
    };
    let filter = match a.regime {
        RegimeArg::Sp => RegimeFilter::SinglePeak,
        RegimeArg::Dp => RegimeFilter::DoublePeak,
        RegimeArg::Any => RegimeFilter::Any,
    };
    let o = optimize_age(policy, filter)?;
    Ok(json!({
        "paper_anchor": "Table I",
        "policy": o.policy,
        "regime_filter": o.filter,
        "optimum": o.best,
        "evaluations": o.evaluations,
    }))
}

fn oracle(a: &ChainArgs) -> Result<Value, Error> {
    let Resolved { params, conversion } = a.network.resolve()?;
    let exact = exact_stationary(&params)?;
    let smin = mista_core::analytic::support_min(params.n, params.gamma);
    let mut max_dev: f64 = 0.0;
    let ratios: Vec<Value> = (smin + 1..=params.n)
        .map(|m| {
            let formula = pm_ratio(m, &params)?;
            let exact_ratio = exact.pm_ratio(m);
            max_dev = max_dev.max((formula - exact_ratio).abs());
            Ok(json!({ "m": m, "exact": exact_ratio, "formula": formula }))
        })
        .collect::<Result<_, Error>>()?;
    Ok(json!({
        "paper_anchor": "Fig. 3",
        "params": params,
        "conversion": conversion,
        "types": exact.types.len(),
        "states": exact.multiplicities.iter().sum::<u128>() as f64,
        "residual": exact.residual,
        "max_row_sum_error": exact.max_row_sum_error,
        "pm": exact.pm,
        "ratios": ratios,
        "max_deviation": max_dev,
    }))
}

fn compare(a: &CompareArgs) -> Result<Value, Error> {
    let [m_alpha, m_r, m_tau2] = a.mista[..] else {
        return Err(invalid("--mista takes alpha,r,tau2"));
    };
    let [t_alpha, t_r] = a.ta[..] else {
        return Err(invalid("--ta takes alpha,r"));
    };
    let mista_scaled = ScaledParams::new(m_alpha, m_r, m_tau2)?;
    let ta_scaled = ScaledParams::new(t_alpha, t_r, 1.0)?;
    let mut series = Vec::new();
    for &n in &a.ns {
        let runs = [
            ("sa", PolicyParams::slotted_aloha(n, 1.0 / n as f64)?),
            ("ta", ta_scaled.to_params(n, Policy::ThresholdAloha)?),
            ("mista", mista_scaled.to_params(n, Policy::Mista)?),
        ];
        for (name, params) in runs {
            let r = run_replicated(&RunConfig::new(params, a.slots, a.seed))?;
            series.push(json!({
                "n": n,
                "policy": name,
                "normalized_aoi": r.normalized_aoi.mean,
                "throughput": r.throughput.mean,
            }));
        }
    }
    Ok(json!({
        "paper_anchor": "Figs. 8-9",
        "slots": a.slots,
        "seed": a.seed,
        "series": series,
    }))
}

fn configure_threads() {
    if let Some(n) = std::env::var("MISTA_THREADS").ok().and_then(|v| v.parse::<usize>().ok()) {
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    configure_threads();
    let result = match &cli.command {
        Command::Simulate(a) => simulate(a),
        Command::Pmf(a) => pmf(a),
        Command::Roots(a) => roots(a),
        Command::Age(a) => age(a),
        Command::Bound(a) => bound(a),
        Command::Spectral(a) => spectral(a),
        Command::Optimize(a) => optimize(a),
        Command::Oracle(a) => oracle(a),
        Command::Compare(a) => compare(a),
    };
    match result {
        Ok(value) => {
            emit(&value);
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(match e {
                Error::InvalidParams(_) | Error::Domain(_) => 2,
                Error::Overflow(_) => 3,
                _ => 1,
            })
        }
    }
}
