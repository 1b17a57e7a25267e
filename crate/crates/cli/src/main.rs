//! Command-line driver: a built-in validation suite, single-point rate
//! reports, and distance sweeps written as CSV.
//!
//! Exit codes: 0 success, 1 usage, 2 validation-check failure, 3 I/O.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Args, CommandFactory, Parser, Subcommand};
use serde_json::Value;

use heraldsim::chsh::{
    chsh_conclusive, chsh_deterministic, joint_distribution, MeasurementSettings,
};
use heraldsim::pipeline::{
    evaluate, run_sweep, Analysis, KeyRatePoint, OptimizeOptions, SweepRequest,
};
use heraldsim::schemes::{
    amplifier_pattern_outcomes, channel_transmittance, closed_form_amplifier_state,
    closed_form_amplifier_success, closed_form_relay_state, phi_plus_fidelity, run_amplifier,
    run_relay, PairSourceModel, SchemeConfig, SchemeKind, SingleSourceModel,
    DEFAULT_ALPHA_DB_PER_KM, DEFAULT_N_MAX_PAIRS,
};
use heraldsim::sources::PairDistribution;

#[derive(Parser)]
#[command(
    name = "heraldsim",
    version,
    about = "Heralded entanglement distribution over lossy fiber: rates, sweeps, checks",
    long_about = "Simulates the two heralding architectures (heralded qubit amplifier and \
                  entanglement-swapping relay) photon by photon and reports key rates under \
                  the conclusive-sifted (A) and deterministic-assignment (B) analyses.\n\n\
                  Parallelism is taken from the RAYON_NUM_THREADS environment variable; \
                  no flag controls it."
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Compare the simulation against its closed-form and limit checks.
    Validate,
    /// Evaluate one fixed configuration and print the full rate report.
    Point(PointArgs),
    /// Sweep distance, optionally optimizing parameters per point; write CSV.
    Sweep(SweepArgs),
}

/// Physical parameters shared by `point` and `sweep`. Every long flag may
/// also be given as a key in the `--config` JSON file (same name); explicit
/// flags win over the file.
#[derive(Args, Debug, Clone, Default)]
struct ConfigArgs {
    /// JSON file of flat key/value pairs; keys equal the long flag names.
    #[arg(long)]
    config: Option<PathBuf>,
    /// relay | amplifier
    #[arg(long)]
    scheme: Option<String>,
    /// Pump parameter of the sender-side pair source [default: 0.1]
    #[arg(long)]
    lambda_ab: Option<f64>,
    /// Pump parameter of the receiver-side pair source (relay only)
    /// [default: --lambda-ab]
    #[arg(long)]
    lambda_bb: Option<f64>,
    /// Pump parameter of the heralded single-photon sources (amplifier
    /// only); omit for ideal one-photon emitters.
    #[arg(long)]
    lambda_single: Option<f64>,
    /// Replace the sender-side source by a fixed one-pair source with this
    /// emission probability (for closed-form comparisons).
    #[arg(long)]
    pair_p: Option<f64>,
    /// Tap transmittance of the amplifier splitter [default: 0.9]
    #[arg(long)]
    t: Option<f64>,
    /// Detector efficiency [default: 1]
    #[arg(long)]
    eta_det: Option<f64>,
    /// Coupling efficiency [default: --eta-det]
    #[arg(long)]
    eta_c: Option<f64>,
    /// Fiber attenuation in dB/km [default: 0.2]
    #[arg(long)]
    alpha_db_per_km: Option<f64>,
    /// Pair-number truncation of every source [default: 4]
    #[arg(long)]
    n_max_pairs: Option<usize>,
}

#[derive(Args, Debug)]
struct PointArgs {
    #[command(flatten)]
    config: ConfigArgs,
    /// Fiber length in km [default: 0]
    #[arg(long)]
    distance_km: Option<f64>,
}

#[derive(Args, Debug)]
struct SweepArgs {
    #[command(flatten)]
    config: ConfigArgs,
    /// A (conclusive-sifted) or B (deterministic assignment) [default: A]
    #[arg(long)]
    analysis: Option<String>,
    /// First distance in km [default: 0]
    #[arg(long)]
    start_km: Option<f64>,
    /// Last distance in km [default: 100]
    #[arg(long)]
    stop_km: Option<f64>,
    /// Distance step in km [default: 10]
    #[arg(long)]
    step_km: Option<f64>,
    /// Optimize the free parameters at every distance [default: true]
    #[arg(long)]
    optimize: Option<bool>,
    /// Optimizer restarts per distance [default: 8]
    #[arg(long)]
    multistarts: Option<usize>,
    /// Objective-evaluation budget per restart [default: 4000]
    #[arg(long)]
    max_evals: Option<usize>,
    /// Seed for the optimizer start points [default: 1]
    #[arg(long)]
    seed: Option<u64>,
    /// CSV output path (required).
    #[arg(long)]
    output: Option<PathBuf>,
}

enum CliError {
    Usage(String),
    Oracle(String),
    Io(String),
}

type CliResult<T> = Result<T, CliError>;

fn usage<E: std::fmt::Display>(err: E) -> CliError {
    CliError::Usage(err.to_string())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            let code = match err.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = err.print();
            return ExitCode::from(code);
        }
    };
    let result = match cli.command {
        Command::Validate => cmd_validate(),
        Command::Point(args) => cmd_point(args),
        Command::Sweep(args) => cmd_sweep(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Usage(msg)) => {
            eprintln!("error: {msg}");
            eprintln!("run `{} --help` for usage", Cli::command().get_name());
            ExitCode::from(1)
        }
        Err(CliError::Oracle(msg)) => {
            eprintln!("validation failed: {msg}");
            ExitCode::from(2)
        }
        Err(CliError::Io(msg)) => {
            eprintln!("i/o error: {msg}");
            ExitCode::from(3)
        }
    }
}

// ---------------------------------------------------------------- config --

fn load_config(path: &Path) -> CliResult<serde_json::Map<String, Value>> {
    let text =
        fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    match serde_json::from_str(&text) {
        Ok(Value::Object(map)) => Ok(map),
        Ok(_) => Err(CliError::Usage(format!(
            "{}: config file must be a JSON object",
            path.display()
        ))),
        Err(e) => Err(CliError::Usage(format!("{}: {e}", path.display()))),
    }
}

fn json_f64(key: &str, value: &Value) -> CliResult<f64> {
    value
        .as_f64()
        .ok_or_else(|| CliError::Usage(format!("config key {key:?} must be a number")))
}

fn json_usize(key: &str, value: &Value) -> CliResult<usize> {
    value.as_u64().map(|v| v as usize).ok_or_else(|| {
        CliError::Usage(format!("config key {key:?} must be a non-negative integer"))
    })
}

fn json_string(key: &str, value: &Value) -> CliResult<String> {
    value
        .as_str()
        .map(str::to_string)
        .ok_or_else(|| CliError::Usage(format!("config key {key:?} must be a string")))
}

impl ConfigArgs {
    /// Fills this struct's empty slots from one config-file entry; returns
    /// false when the key belongs to the caller.
    fn merge(&mut self, key: &str, value: &Value) -> CliResult<bool> {
        macro_rules! fill {
            ($slot:expr, $convert:expr) => {{
                if $slot.is_none() {
                    $slot = Some($convert(key, value)?);
                }
                Ok(true)
            }};
        }
        match key {
            "scheme" => fill!(self.scheme, json_string),
            "lambda-ab" => fill!(self.lambda_ab, json_f64),
            "lambda-bb" => fill!(self.lambda_bb, json_f64),
            "lambda-single" => fill!(self.lambda_single, json_f64),
            "pair-p" => fill!(self.pair_p, json_f64),
            "t" => fill!(self.t, json_f64),
            "eta-det" => fill!(self.eta_det, json_f64),
            "eta-c" => fill!(self.eta_c, json_f64),
            "alpha-db-per-km" => fill!(self.alpha_db_per_km, json_f64),
            "n-max-pairs" => fill!(self.n_max_pairs, json_usize),
            _ => Ok(false),
        }
    }

    fn build(&self, distance_km: f64) -> CliResult<SchemeConfig> {
        let scheme = self
            .scheme
            .as_deref()
            .ok_or_else(|| CliError::Usage("--scheme is required (relay | amplifier)".into()))?;
        let lambda_ab = self.lambda_ab.unwrap_or(0.1);
        let source_ab = match self.pair_p {
            Some(p) => PairSourceModel::Fixed(PairDistribution::single_pair(p).map_err(usage)?),
            None => PairSourceModel::Spdc { lambda: lambda_ab },
        };
        let mut cfg = match scheme {
            "relay" => SchemeConfig::relay(
                source_ab,
                PairSourceModel::Spdc {
                    lambda: self.lambda_bb.or(self.lambda_ab).unwrap_or(0.1),
                },
            ),
            "amplifier" => {
                let singles = match self.lambda_single {
                    Some(lambda) => SingleSourceModel::SpdcHeralded { lambda },
                    None => SingleSourceModel::Ideal,
                };
                SchemeConfig::amplifier(source_ab, singles, self.t.unwrap_or(0.9))
            }
            other => {
                return Err(CliError::Usage(format!(
                    "unknown scheme {other:?}, expected relay or amplifier"
                )))
            }
        };
        cfg.eta_det = self.eta_det.unwrap_or(1.0);
        cfg.eta_c = self.eta_c.unwrap_or(cfg.eta_det);
        cfg.alpha_db_per_km = self.alpha_db_per_km.unwrap_or(DEFAULT_ALPHA_DB_PER_KM);
        cfg.n_max_pairs = self.n_max_pairs.unwrap_or(DEFAULT_N_MAX_PAIRS);
        cfg.distance_km = distance_km;
        cfg.validate().map_err(usage)?;
        Ok(cfg)
    }
}

// ----------------------------------------------------------------- point --

fn cmd_point(mut args: PointArgs) -> CliResult<()> {
    if let Some(path) = args.config.config.clone() {
        for (key, value) in load_config(&path)? {
            if args.config.merge(&key, &value)? {
                continue;
            }
            match key.as_str() {
                "distance-km" => {
                    if args.distance_km.is_none() {
                        args.distance_km = Some(json_f64(&key, &value)?);
                    }
                }
                other => {
                    return Err(CliError::Usage(format!(
                        "config key {other:?} is not a point flag"
                    )))
                }
            }
        }
    }
    let cfg = args.config.build(args.distance_km.unwrap_or(0.0))?;
    let record = match evaluate(&cfg) {
        Ok(report) => serde_json::json!({
            "herald_probability": report.herald_probability,
            "mu_cc": report.mu_cc,
            "s_cc": report.s_cc,
            "s_det": report.s_det,
            "qber_conclusive": report.qber_conclusive,
            "qber_deterministic": report.qber_deterministic,
            "secret_fraction_a": report.secret_fraction_a,
            "secret_fraction_b": report.secret_fraction_b,
            "rate_a": report.rate_a,
            "rate_b": report.rate_b,
        }),
        // Heralding never fires (for instance dead detectors): an all-zero
        // record, not an error.
        Err(heraldsim::Error::ZeroWeight) => serde_json::json!({
            "herald_probability": 0.0,
            "mu_cc": 0.0,
            "s_cc": Value::Null,
            "s_det": 0.0,
            "qber_conclusive": Value::Null,
            "qber_deterministic": Value::Null,
            "secret_fraction_a": 0.0,
            "secret_fraction_b": 0.0,
            "rate_a": 0.0,
            "rate_b": 0.0,
        }),
        Err(e) => return Err(usage(e)),
    };
    println!("{record}");
    Ok(())
}

// ----------------------------------------------------------------- sweep --

const CSV_HEADER: &str = "distance_km,scheme,analysis,eta_det,eta_c,t_opt,lambda_ab_opt,\
                          lambda_bb_opt,lambda_single_opt,herald_prob,mu_cc,s_cc,s_det,qber,\
                          rate_per_pulse,log10_rate";

fn csv_row(row: &KeyRatePoint) -> String {
    let plain = |x: f64| format!("{x}");
    let opt = |v: Option<f64>| v.map(plain).unwrap_or_default();
    // 17 significant digits so rates survive a round trip exactly.
    let rate = |x: f64| format!("{x:.16e}");
    format!(
        "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
        plain(row.distance_km),
        row.scheme.name(),
        row.analysis.label(),
        plain(row.eta_det),
        plain(row.eta_c),
        opt(row.t_opt),
        opt(row.lambda_ab_opt),
        opt(row.lambda_bb_opt),
        opt(row.lambda_single_opt),
        rate(row.herald_prob),
        plain(row.mu_cc),
        opt(row.s_cc),
        plain(row.s_det),
        opt(row.qber),
        rate(row.rate_per_pulse),
        row.log10_rate.map(rate).unwrap_or_default(),
    )
}

fn zero_row(request: &SweepRequest, distance_km: f64) -> KeyRatePoint {
    let cfg = &request.template;
    let lambda_of = |model: &PairSourceModel| match model {
        PairSourceModel::Spdc { lambda } => Some(*lambda),
        PairSourceModel::Fixed(_) => None,
    };
    KeyRatePoint {
        distance_km,
        scheme: cfg.kind,
        analysis: request.analysis,
        eta_det: cfg.eta_det,
        eta_c: cfg.eta_c,
        t_opt: (cfg.kind == SchemeKind::Amplifier).then_some(cfg.splitter_transmittance),
        lambda_ab_opt: lambda_of(&cfg.source_ab),
        lambda_bb_opt: (cfg.kind == SchemeKind::Relay)
            .then(|| lambda_of(&cfg.source_bb))
            .flatten(),
        lambda_single_opt: match (cfg.kind, &cfg.singles) {
            (SchemeKind::Amplifier, SingleSourceModel::SpdcHeralded { lambda }) => Some(*lambda),
            _ => None,
        },
        herald_prob: 0.0,
        mu_cc: 0.0,
        s_cc: None,
        s_det: 0.0,
        qber: None,
        rate_per_pulse: 0.0,
        log10_rate: None,
    }
}

fn cmd_sweep(mut args: SweepArgs) -> CliResult<()> {
    if let Some(path) = args.config.config.clone() {
        for (key, value) in load_config(&path)? {
            if args.config.merge(&key, &value)? {
                continue;
            }
            macro_rules! fill {
                ($slot:expr, $convert:expr) => {{
                    if $slot.is_none() {
                        $slot = Some($convert(&key, &value)?);
                    }
                }};
            }
            match key.as_str() {
                "analysis" => fill!(args.analysis, json_string),
                "start-km" => fill!(args.start_km, json_f64),
                "stop-km" => fill!(args.stop_km, json_f64),
                "step-km" => fill!(args.step_km, json_f64),
                "optimize" => {
                    if args.optimize.is_none() {
                        args.optimize = Some(value.as_bool().ok_or_else(|| {
                            CliError::Usage("config key \"optimize\" must be a boolean".into())
                        })?);
                    }
                }
                "multistarts" => fill!(args.multistarts, json_usize),
                "max-evals" => fill!(args.max_evals, json_usize),
                "seed" => {
                    if args.seed.is_none() {
                        args.seed = Some(value.as_u64().ok_or_else(|| {
                            CliError::Usage(
                                "config key \"seed\" must be a non-negative integer".into(),
                            )
                        })?);
                    }
                }
                "output" => {
                    if args.output.is_none() {
                        args.output = Some(PathBuf::from(json_string(&key, &value)?));
                    }
                }
                other => {
                    return Err(CliError::Usage(format!(
                        "config key {other:?} is not a sweep flag"
                    )))
                }
            }
        }
    }

    let template = args.config.build(0.0)?;
    let analysis = Analysis::parse(args.analysis.as_deref().unwrap_or("A")).map_err(usage)?;
    let output = args
        .output
        .ok_or_else(|| CliError::Usage("--output is required".into()))?;
    let defaults = OptimizeOptions::default();
    let request = SweepRequest {
        template,
        analysis,
        start_km: args.start_km.unwrap_or(0.0),
        stop_km: args.stop_km.unwrap_or(100.0),
        step_km: args.step_km.unwrap_or(10.0),
        optimize: args.optimize.unwrap_or(true),
        options: OptimizeOptions {
            multistarts: args.multistarts.unwrap_or(defaults.multistarts),
            max_evals: args.max_evals.unwrap_or(defaults.max_evals),
            seed: args.seed.unwrap_or(defaults.seed),
        },
    };
    let rows = match run_sweep(&request) {
        Ok(rows) => rows,
        // Heralding never fires at these efficiencies: emit structurally
        // complete zero-rate rows, as `point` does.
        Err(heraldsim::Error::ZeroWeight) => request
            .distances()
            .into_iter()
            .map(|distance_km| zero_row(&request, distance_km))
            .collect(),
        Err(e) => return Err(usage(e)),
    };

    let mut csv = String::with_capacity(64 * (rows.len() + 1));
    csv.push_str(CSV_HEADER);
    csv.push('\n');
    for row in &rows {
        csv.push_str(&csv_row(row));
        csv.push('\n');
    }
    fs::write(&output, csv).map_err(|e| CliError::Io(format!("{}: {e}", output.display())))?;
    eprintln!("wrote {} rows to {}", rows.len(), output.display());
    Ok(())
}

// -------------------------------------------------------------- validate --

struct CheckLog {
    failures: usize,
}

impl CheckLog {
    fn report(&mut self, name: &str, worst: f64, tolerance: f64) {
        let ok = worst <= tolerance;
        if !ok {
            self.failures += 1;
        }
        println!(
            "check {:<52} max |Δ| = {:>10.3e}  (tol {:.0e})  {}",
            name,
            worst,
            tolerance,
            if ok { "ok" } else { "FAIL" }
        );
    }
}

fn oracle<E: std::fmt::Display>(err: E) -> CliError {
    CliError::Oracle(err.to_string())
}

fn cmd_validate() -> CliResult<()> {
    let mut log = CheckLog { failures: 0 };

    // Amplifier conditional state and herald probability against their closed
    // forms, over a (p, t, distance) grid spanning strong to near-dead
    // channels.
    let mut worst_state: f64 = 0.0;
    let mut worst_herald: f64 = 0.0;
    for p in [0.1, 0.5, 1.0] {
        for t in [0.5, 0.9, 0.99] {
            for d in [0.0, 50.0, 100.0] {
                let mut cfg = SchemeConfig::amplifier(
                    PairSourceModel::Fixed(PairDistribution::single_pair(p).map_err(oracle)?),
                    SingleSourceModel::Ideal,
                    t,
                );
                cfg.distance_km = d;
                cfg.n_max_pairs = 1;
                let eta_t = channel_transmittance(d, cfg.alpha_db_per_km).map_err(oracle)?;
                let reference =
                    closed_form_amplifier_state(p, t, eta_t, cfg.photon_cap()).map_err(oracle)?;
                for (_, sigma) in amplifier_pattern_outcomes(&cfg).map_err(oracle)? {
                    worst_state =
                        worst_state.max(sigma.max_coefficient_delta(&reference).map_err(oracle)?);
                }
                let outcome = run_amplifier(&cfg).map_err(oracle)?;
                worst_herald = worst_herald.max(
                    (outcome.herald_probability - closed_form_amplifier_success(p, t, eta_t)).abs(),
                );
            }
        }
    }
    log.report(
        "amplifier conditional state vs closed form",
        worst_state,
        1e-10,
    );
    log.report(
        "amplifier herald probability vs closed form",
        worst_herald,
        1e-10,
    );

    // Relay conditional state across the pair-number simplex.
    let simplex = [
        (1.0, 0.0, 0.0),
        (0.75, 0.25, 0.0),
        (0.5, 0.5, 0.0),
        (0.5, 0.25, 0.25),
        (0.7, 0.25, 0.05),
        (0.25, 0.5, 0.25),
        (0.0, 1.0, 0.0),
        (0.0, 0.5, 0.5),
        (0.2, 0.3, 0.5),
        (0.0, 0.0, 1.0),
    ];
    let mut worst_relay: f64 = 0.0;
    for (p0, p1, p2) in simplex {
        let dist = PairDistribution::new(vec![p0, p1, p2]).map_err(oracle)?;
        let mut cfg = SchemeConfig::relay(
            PairSourceModel::Fixed(dist.clone()),
            PairSourceModel::Fixed(dist),
        );
        cfg.n_max_pairs = 2;
        let outcome = run_relay(&cfg).map_err(oracle)?;
        let reference = closed_form_relay_state(p0, p1, p2, cfg.photon_cap()).map_err(oracle)?;
        worst_relay = worst_relay.max(
            outcome
                .sigma_ab
                .max_coefficient_delta(&reference)
                .map_err(oracle)?,
        );
    }
    log.report("relay conditional state vs closed form", worst_relay, 1e-10);

    // Weak-pump relay limits: conclusive fraction, overlap with the
    // maximally entangled target, and the deterministic CHSH value.
    let cfg = SchemeConfig::relay(
        PairSourceModel::Spdc { lambda: 1e-3 },
        PairSourceModel::Spdc { lambda: 1e-3 },
    );
    let outcome = run_relay(&cfg).map_err(oracle)?;
    let report = evaluate(&cfg).map_err(oracle)?;
    let fidelity = phi_plus_fidelity(&outcome.sigma_ab).map_err(oracle)?;
    let worst_limit = (report.mu_cc - 0.5)
        .abs()
        .max((fidelity - 0.5).abs())
        .max((report.s_det - (1.0 + std::f64::consts::SQRT_2)).abs());
    log.report(
        "weak-pump relay limits (mu_cc, fidelity, S_det)",
        worst_limit,
        0.01,
    );

    // S_det = mu_cc·S_cc + 2(1−mu_cc) on states without cross-conclusive
    // outcomes.
    let settings = MeasurementSettings::standard(1.0);
    let candidates = [
        closed_form_relay_state(0.7, 0.25, 0.05, 4).map_err(oracle)?,
        closed_form_relay_state(0.5, 0.5, 0.0, 4).map_err(oracle)?,
        closed_form_relay_state(0.25, 0.5, 0.25, 4).map_err(oracle)?,
        closed_form_amplifier_state(0.5, 0.9, 0.1, 4).map_err(oracle)?,
    ];
    let mut worst_identity: f64 = 0.0;
    let mut exercised = 0;
    for sigma in &candidates {
        let mut cross: f64 = 0.0;
        for &ta in &settings.alice {
            for &tb in &settings.bob {
                let table = joint_distribution(sigma, ta, tb, settings.eta_det).map_err(oracle)?;
                cross = cross.max(table.cross_conclusive_probability());
            }
        }
        if cross > 1e-14 {
            continue;
        }
        let (mu, s_cc) = chsh_conclusive(sigma, &settings).map_err(oracle)?;
        let s_det = chsh_deterministic(sigma, &settings).map_err(oracle)?;
        let s_cc = s_cc.ok_or_else(|| CliError::Oracle("no conclusive weight".into()))?;
        worst_identity = worst_identity.max((s_det - (mu * s_cc + 2.0 * (1.0 - mu))).abs());
        exercised += 1;
    }
    if exercised < 3 {
        worst_identity = f64::INFINITY;
    }
    log.report(
        "conclusive/deterministic assignment identity",
        worst_identity,
        1e-10,
    );

    // Efficiency at which the deterministic assignment on a maximally
    // entangled pair stops violating.
    let source = closed_form_amplifier_state(1.0, 0.5, 1.0, 2).map_err(oracle)?;
    let s_at = |eta: f64| chsh_deterministic(&source, &MeasurementSettings::standard(eta));
    let (mut lo, mut hi) = (0.5, 1.0);
    for _ in 0..50 {
        let mid = 0.5 * (lo + hi);
        if s_at(mid).map_err(oracle)? > 2.0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    let crossing = 0.5 * (lo + hi);
    log.report(
        "deterministic-assignment efficiency threshold",
        (crossing - 0.8284).abs(),
        1e-3,
    );

    if log.failures == 0 {
        println!("all checks passed");
        Ok(())
    } else {
        Err(CliError::Oracle(format!(
            "{} check(s) failed",
            log.failures
        )))
    }
}
