//! Batch front end: synthesize networks, evaluate and certify them, and
//! emit bound/figure data. Exit codes: 0 success, 1 failed check, 2 invalid
//! config, 3 resource cap, 4 invalid artifact.

use clap::{Args, Parser, Subcommand};
use qnet::bounds::{
    bitwidth_opt, bound_formulas, lambda_opt, memory_bound, overhead_report, BoundModel,
    Theorem,
};
use qnet::json::{from_json, to_json};
use qnet::rational::{parse_rat, to_f64, Rat};
use qnet::synth::dependent::{build_dependent, plan_dependent, Strategy};
use qnet::synth::independent::{build_independent, plan_independent, SynthError};
use qnet::verify::{run_property_suite, sup_error, VerifyError};
use qnet::{QuantMode, QuantizedNetwork, TargetFunction};
use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::PathBuf;
use std::process::ExitCode;
use std::str::FromStr;

#[derive(Parser)]
#[command(name = "qnet", about = "quantized ReLU network toolkit")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Build a network for a registered target function.
    Synth(SynthArgs),
    /// Evaluate a network artifact at a point (exact and float).
    Eval(EvalArgs),
    /// Certify a network's sup-error against a target function.
    Certify(CertifyArgs),
    /// Print complexity-bound formulas and the overhead report.
    Bounds(BoundsArgs),
    /// Emit the optimal-bit-width CSV (memory model sweep).
    Bitwidth(BitwidthArgs),
    /// Run the seeded property suite.
    Suite(SuiteArgs),
}

#[derive(Args)]
struct SynthArgs {
    /// Flat key=value file mirroring the flag names; flags take precedence.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Construction: 1/2 = function-independent (nonlinear/linear codebook),
    /// 3 = cached interpolation, 4 = plain interpolation.
    #[arg(long)]
    thm: Option<u32>,
    /// Target function name (an optional "poly:" prefix is accepted).
    #[arg(long)]
    f: Option<String>,
    #[arg(long)]
    d: Option<u32>,
    #[arg(long)]
    n: Option<u32>,
    /// Target sup-error, as a rational like "1/4" or "0.25".
    #[arg(long)]
    eps: Option<String>,
    /// Codebook size.
    #[arg(long)]
    lambda: Option<u32>,
    /// "nonlinear" or "linear" (defaults to the construction's native mode).
    #[arg(long)]
    mode: Option<String>,
    /// Ignore the predicted-weight-count cap.
    #[arg(long)]
    allow_large: bool,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    net: PathBuf,
    /// Comma-separated rational coordinates, e.g. "1/4,3/8".
    #[arg(long)]
    point: String,
}

#[derive(Args)]
struct CertifyArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    net: Option<PathBuf>,
    #[arg(long)]
    f: Option<String>,
    #[arg(long)]
    eps: Option<String>,
    /// Grid spacing (a rational whose reciprocal is an integer).
    #[arg(long)]
    spacing: Option<String>,
    /// Combined slope bound for the off-grid slack term.
    #[arg(long)]
    lipschitz: Option<f64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct BoundsArgs {
    #[arg(long, default_value_t = 1)]
    thm: u32,
    #[arg(long, default_value_t = 1)]
    d: u64,
    #[arg(long, default_value_t = 1)]
    n: u64,
    #[arg(long, default_value = "1/100")]
    eps: String,
    #[arg(long, default_value_t = 2.0)]
    lambda: f64,
}

#[derive(Args)]
struct BitwidthArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    /// Comma-separated input dimensions.
    #[arg(long)]
    d: Option<String>,
    #[arg(long)]
    n: Option<String>,
    /// Comma-separated target errors (each must be < 1/2).
    #[arg(long)]
    eps: Option<String>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Also write a gnuplot script referencing the CSV.
    #[arg(long)]
    gnuplot: Option<PathBuf>,
}

#[derive(Args)]
struct SuiteArgs {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 100)]
    cases: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

enum CliError {
    /// Exit 1: a requested check ran and failed.
    Failed(String),
    /// Exit 2: parameters outside the operation's range.
    Invalid(String),
    /// Exit 3: predicted or scanned size over the resource cap.
    Cap(String),
    /// Exit 4: unreadable or structurally invalid artifact.
    Artifact(String),
}

impl CliError {
    fn report(&self) -> (u8, &str) {
        match self {
            CliError::Failed(m) => (1, m),
            CliError::Invalid(m) => (2, m),
            CliError::Cap(m) => (3, m),
            CliError::Artifact(m) => (4, m),
        }
    }
}

fn invalid<E: std::fmt::Display>(e: E) -> CliError {
    CliError::Invalid(e.to_string())
}

fn from_synth(e: SynthError) -> CliError {
    match e {
        SynthError::ResourceCap { predicted } => CliError::Cap(format!(
            "predicted weight count {predicted} exceeds the cap (pass --allow-large to force)"
        )),
        other => CliError::Invalid(other.to_string()),
    }
}

/// Flat key=value config document; '#' starts a comment line.
fn load_config(path: &Option<PathBuf>) -> Result<BTreeMap<String, String>, CliError> {
    let mut map = BTreeMap::new();
    if let Some(p) = path {
        let text = std::fs::read_to_string(p)
            .map_err(|e| CliError::Invalid(format!("config {}: {e}", p.display())))?;
        for line in text.lines() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| CliError::Invalid(format!("config line without '=': {line}")))?;
            map.insert(k.trim().to_string(), v.trim().to_string());
        }
    }
    Ok(map)
}

/// Flag value if present, else the config entry, else none.
fn pick<T: FromStr>(
    flag: Option<T>,
    cfg: &BTreeMap<String, String>,
    key: &str,
) -> Result<Option<T>, CliError> {
    if flag.is_some() {
        return Ok(flag);
    }
    match cfg.get(key) {
        None => Ok(None),
        Some(raw) => raw
            .parse()
            .map(Some)
            .map_err(|_| CliError::Invalid(format!("config {key}={raw}: unparseable"))),
    }
}

fn need<T>(v: Option<T>, key: &str) -> Result<T, CliError> {
    v.ok_or_else(|| CliError::Invalid(format!("missing required parameter {key}")))
}

fn parse_eps(s: &str) -> Result<Rat, CliError> {
    parse_rat(s).ok_or_else(|| CliError::Invalid(format!("eps {s}: not a rational")))
}

fn parse_mode(s: &str) -> Result<QuantMode, CliError> {
    match s {
        "nonlinear" => Ok(QuantMode::Nonlinear),
        "linear" => Ok(QuantMode::Linear),
        other => Err(CliError::Invalid(format!(
            "mode must be nonlinear or linear, got {other}"
        ))),
    }
}

fn resolve_target(name: &str) -> Result<TargetFunction, CliError> {
    let bare = name.strip_prefix("poly:").unwrap_or(name);
    TargetFunction::by_name(bare)
        .ok_or_else(|| CliError::Invalid(format!("unknown target function {name}")))
}

fn load_net(path: &PathBuf) -> Result<QuantizedNetwork, CliError> {
    let bytes = std::fs::read(path)
        .map_err(|e| CliError::Artifact(format!("{}: {e}", path.display())))?;
    let net = from_json(&bytes).map_err(|e| CliError::Artifact(e.to_string()))?;
    let violations = net.validate();
    if !violations.is_empty() {
        let mut msg = format!("{}: structural violations:", path.display());
        for v in &violations {
            let _ = write!(msg, "\n  {v:?}");
        }
        return Err(CliError::Artifact(msg));
    }
    Ok(net)
}

fn write_out(path: &PathBuf, bytes: &[u8]) -> Result<(), CliError> {
    std::fs::write(path, bytes)
        .map_err(|e| CliError::Invalid(format!("{}: {e}", path.display())))
}

fn cmd_synth(a: SynthArgs) -> Result<(), CliError> {
    let cfg = load_config(&a.config)?;
    let thm: u32 = pick(a.thm, &cfg, "thm")?.unwrap_or(1);
    let f_name: String = need(pick(a.f, &cfg, "f")?, "f")?;
    let target = resolve_target(&f_name)?;
    let d = pick(a.d, &cfg, "d")?.unwrap_or(target.d as u32);
    let n = pick(a.n, &cfg, "n")?.unwrap_or(target.n);
    let eps = parse_eps(&need(pick(a.eps, &cfg, "eps")?, "eps")?)?;
    let lambda: u32 = pick(a.lambda, &cfg, "lambda")?.unwrap_or(2);
    let mode_flag: Option<String> = pick(a.mode, &cfg, "mode")?;
    let out = pick(a.out, &cfg, "out")?.unwrap_or_else(|| PathBuf::from("network.json"));
    let report_path =
        pick(a.report, &cfg, "report")?.unwrap_or_else(|| PathBuf::from("report.json"));

    if d != target.d as u32 || n != target.n {
        return Err(CliError::Invalid(format!(
            "target {} has d={} n={}, got d={d} n={n}",
            target.name, target.d, target.n
        )));
    }
    let net = match thm {
        1 | 2 => {
            let mode = match &mode_flag {
                Some(s) => parse_mode(s)?,
                None if thm == 1 => QuantMode::Nonlinear,
                None => QuantMode::Linear,
            };
            let plan = plan_independent(d, n, &eps, lambda, mode).map_err(from_synth)?;
            println!(
                "plan: N={} r={} t={} lambda={}",
                plan.big_n, plan.r, plan.t, plan.lambda
            );
            build_independent(&target, &plan, a.allow_large).map_err(from_synth)?
        }
        3 | 4 => {
            if d != 1 || n != 1 {
                return Err(CliError::Invalid(
                    "the function-dependent constructions require d = n = 1".into(),
                ));
            }
            let strategy = if thm == 3 {
                Strategy::Cached
            } else {
                Strategy::InterpolationOnly
            };
            let mode = match &mode_flag {
                Some(s) => parse_mode(s)?,
                None if thm == 3 => QuantMode::Nonlinear,
                None => QuantMode::Linear,
            };
            let plan = plan_dependent(&eps, lambda, mode, strategy).map_err(from_synth)?;
            println!(
                "plan: T={} t={} m={} lambda={}",
                plan.big_t, plan.t, plan.m, plan.lambda
            );
            build_dependent(&target, &plan).map_err(from_synth)?
        }
        other => return Err(CliError::Invalid(format!("unknown construction {other}"))),
    };

    let rep = net.complexity();
    write_out(&out, &to_json(&net))?;
    let report = serde_json::json!({
        "schema_version": 1,
        "target": target.name,
        "thm": thm,
        "epsilon": eps.to_string(),
        "depth": rep.depth,
        "max_width": rep.max_width,
        "weight_count": rep.weight_count,
        "memory_bits": rep.memory_bits,
        "predicted": rep.predicted,
    });
    write_out(&report_path, serde_json::to_string_pretty(&report).unwrap().as_bytes())?;
    let predicted: Vec<String> = rep
        .predicted
        .iter()
        .map(|(k, v)| format!("{k}={v}"))
        .collect();
    println!(
        "synth ok: depth={} weights={} bits={} predicted[{}] -> {} + {}",
        rep.depth,
        rep.weight_count,
        rep.memory_bits,
        predicted.join(" "),
        out.display(),
        report_path.display()
    );
    Ok(())
}

fn cmd_eval(a: EvalArgs) -> Result<(), CliError> {
    let net = load_net(&a.net)?;
    let point: Vec<Rat> = a
        .point
        .split(',')
        .map(|s| parse_rat(s.trim()).ok_or_else(|| invalid(format!("bad coordinate {s}"))))
        .collect::<Result<_, _>>()?;
    let exact = net.eval(&point).map_err(invalid)?;
    println!("exact={exact} float={}", to_f64(&exact));
    Ok(())
}

fn cmd_certify(a: CertifyArgs) -> Result<(), CliError> {
    let cfg = load_config(&a.config)?;
    let net_path: PathBuf = need(pick(a.net, &cfg, "net")?, "net")?;
    let f_name: String = need(pick(a.f, &cfg, "f")?, "f")?;
    let eps = parse_eps(&need(pick(a.eps, &cfg, "eps")?, "eps")?)?;
    let spacing = parse_eps(&need(pick(a.spacing, &cfg, "spacing")?, "spacing")?)?;
    let lipschitz = pick(a.lipschitz, &cfg, "lipschitz")?.unwrap_or(2.0);
    let out = pick(a.out, &cfg, "out")?.unwrap_or_else(|| PathBuf::from("certificate.json"));

    let net = load_net(&net_path)?;
    let target = resolve_target(&f_name)?;
    let cert = sup_error(&net, &target, &spacing, to_f64(&eps), lipschitz).map_err(|e| match e
    {
        VerifyError::ResourceCap { .. } => CliError::Cap(e.to_string()),
        VerifyError::ExactMismatch { .. } => CliError::Artifact(e.to_string()),
        other => CliError::Invalid(other.to_string()),
    })?;
    write_out(&out, &cert.to_json())?;
    println!(
        "measured={} certified={} target={} pass={}",
        cert.measured_sup_error, cert.certified_sup_error, cert.target_epsilon, cert.pass
    );
    if cert.pass {
        Ok(())
    } else {
        Err(CliError::Failed(format!(
            "certified sup-error {} exceeds {}",
            cert.certified_sup_error, cert.target_epsilon
        )))
    }
}

fn cmd_bounds(a: BoundsArgs) -> Result<(), CliError> {
    let theorem = match a.thm {
        1 => Theorem::T1,
        2 => Theorem::T2,
        3 => Theorem::T3,
        4 => Theorem::T4,
        other => return Err(CliError::Invalid(format!("unknown construction {other}"))),
    };
    let eps = to_f64(&parse_eps(&a.eps)?);
    let formulas = bound_formulas(theorem, a.d, a.n, eps, a.lambda).map_err(invalid)?;
    let overhead = overhead_report(a.d, a.n, eps, a.lambda).map_err(invalid)?;
    let mut doc = serde_json::json!({
        "schema_version": 1,
        "thm": a.thm,
        "d": a.d, "n": a.n, "epsilon": eps, "lambda": a.lambda,
        "formulas": formulas,
        "overhead": {
            "quantized_upper": overhead.quantized_upper,
            "unquantized_upper": overhead.unquantized_upper,
            "unquantized_lower": overhead.unquantized_lower,
            "overhead_factor": overhead.overhead_factor,
        },
    });
    // The memory-model optimum only exists for eps < 1/2.
    let model = BoundModel::new(a.d, a.n, eps, 1.0);
    if let (Ok(l), Ok(b)) = (lambda_opt(&model), bitwidth_opt(&model)) {
        doc["lambda_opt"] = serde_json::json!(l);
        doc["bitwidth_opt"] = serde_json::json!(b);
        doc["memory_bound_at_opt"] = serde_json::json!(memory_bound(l, &model).unwrap());
    }
    println!("{}", serde_json::to_string_pretty(&doc).unwrap());
    Ok(())
}

fn parse_list<T: FromStr>(s: &str, what: &str) -> Result<Vec<T>, CliError> {
    s.split(',')
        .map(|p| {
            p.trim()
                .parse()
                .map_err(|_| CliError::Invalid(format!("bad {what} entry {p}")))
        })
        .collect()
}

fn cmd_bitwidth(a: BitwidthArgs) -> Result<(), CliError> {
    let cfg = load_config(&a.config)?;
    let d_list: Vec<u64> =
        parse_list(&pick(a.d, &cfg, "d")?.unwrap_or_else(|| "784,3072,150528".into()), "d")?;
    let n_list: Vec<u64> = parse_list(&pick(a.n, &cfg, "n")?.unwrap_or_else(|| "1".into()), "n")?;
    let eps_list: Vec<f64> =
        parse_list(&pick(a.eps, &cfg, "eps")?.unwrap_or_else(|| "0.1,0.01".into()), "eps")?;
    let out = pick(a.out, &cfg, "out")?.unwrap_or_else(|| PathBuf::from("figure1.csv"));
    for &e in &eps_list {
        if !(e > 0.0 && e < 0.5) {
            return Err(CliError::Invalid(format!(
                "eps {e}: the memory model has no interior minimum unless 0 < eps < 1/2"
            )));
        }
    }
    let csv = qnet::bounds::emit_figure1_data(&d_list, &n_list, &eps_list);
    write_out(&out, csv.as_bytes())?;
    if let Some(gp) = pick(a.gnuplot, &cfg, "gnuplot")? {
        let script = format!(
            "set datafile separator ','\n\
             set logscale x 2\nset xlabel 'lambda'\nset ylabel 'scaled derivative'\n\
             plot '{}' using 4:5 with linespoints title 'dM/dlambda (scaled)'\n",
            out.display()
        );
        write_out(&gp, script.as_bytes())?;
    }
    println!("wrote {} ({} rows)", out.display(), csv.lines().count() - 3);
    Ok(())
}

fn cmd_suite(a: SuiteArgs) -> Result<(), CliError> {
    let report = run_property_suite(a.seed, a.cases);
    print!("{}", report.to_table());
    if let Some(out) = a.out {
        write_out(&out, &report.to_json())?;
    }
    if report.all_passed {
        Ok(())
    } else {
        Err(CliError::Failed("property suite reported failures".into()))
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.cmd {
        Cmd::Synth(a) => cmd_synth(a),
        Cmd::Eval(a) => cmd_eval(a),
        Cmd::Certify(a) => cmd_certify(a),
        Cmd::Bounds(a) => cmd_bounds(a),
        Cmd::Bitwidth(a) => cmd_bitwidth(a),
        Cmd::Suite(a) => cmd_suite(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let (code, msg) = e.report();
            eprintln!("error: {msg}");
            ExitCode::from(code)
        }
    }
}
