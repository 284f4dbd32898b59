use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use serde_json::{json, Value};

use conic_synth::benchmark::{
    build_chain_plant, design_curves_csv, run_benchmark, BenchmarkConfig, ChainOutput, ChainParams,
    Sampling, WeightMode,
};
use conic_synth::conic::{csl_check, csl_report, cst_complement, frequency_cone_oracle, Cone, CslForm, FrequencyGrid};
use conic_synth::init::{
    init_arbitrary, init_conicc, init_ico, w_identity, w_optimize, IcoOptions, IcoOutcome, InitMethod, InitResult,
};
use conic_synth::lti::{is_hurwitz, Controller, Plant, StateSpace};
use conic_synth::parallel::{self, ExecMode};
use conic_synth::synthesis::{build_transform, run_algorithm1_on, SynthesisOptions, SynthesisResult, TransformData};

mod config;
mod output;

use config::{require, RunConfig, SweepMode};
use output::OutDir;

const THREADS_ENV: &str = "CONIC_SYNTH_THREADS";

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Failure { kind: String, message: String, details: Value },
}

impl CliError {
    pub fn usage(msg: impl Into<String>) -> Self {
        CliError::Usage(msg.into())
    }

    pub fn io(msg: impl Into<String>) -> Self {
        CliError::Failure {
            kind: "io".into(),
            message: msg.into(),
            details: Value::Null,
        }
    }

    fn failure(kind: &str, message: impl Into<String>, details: Value) -> Self {
        CliError::Failure {
            kind: kind.into(),
            message: message.into(),
            details,
        }
    }

    fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Failure { .. } => 1,
        }
    }
}

impl From<conic_synth::Error> for CliError {
    fn from(e: conic_synth::Error) -> Self {
        use conic_synth::Error as E;
        let kind = match &e {
            E::InvalidOption(_)
            | E::InvalidCone { .. }
            | E::Dimension(_)
            | E::NotSquare { .. }
            | E::Feedthrough
            | E::Parse { .. } => return CliError::Usage(e.to_string()),
            E::NotHurwitz { .. } => "not-hurwitz",
            E::NoStabilizingSolution(_) => "no-stabilizing-solution",
            E::PlantAssumption(_) => "plant-assumption",
            E::NotInCone { .. } => "not-in-cone",
            E::InfeasibleInit(_) => "infeasible",
            E::IllConditioned { .. } => "ill-conditioned",
            E::Solver(_) => "solver-failure",
            E::NonFinite(_) => "non-finite",
        };
        CliError::failure(kind, e.to_string(), Value::Null)
    }
}

#[derive(Parser)]
#[command(name = "conic-synth", version, about = "Fixed-order H2 controller synthesis under conic-sector constraints")]
struct Cli {
    /// More log output on stderr (-v info, -vv debug).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check whether a system lies in a conic sector.
    AnalyzeCone(AnalyzeArgs),
    /// Compute a feasible starting point (K0, Q0, P0).
    Init(DesignArgs),
    /// Run the iterative synthesis from a chosen starting point.
    Synthesize(DesignArgs),
    /// Reproduce the spring-mass chain comparison.
    Benchmark(BenchArgs),
}

#[derive(Args, Default)]
struct CommonArgs {
    /// TOML or JSON config file; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory for artifacts.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct AnalyzeArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// State-space JSON with fields A, B, C (and optional zero D).
    #[arg(long)]
    sys: Option<PathBuf>,
    #[arg(long, num_args = 2, value_names = ["A", "B"], allow_negative_numbers = true)]
    cone: Option<Vec<f64>>,
    /// Treat the cone as strict.
    #[arg(long)]
    strict: bool,
    /// Sector inequality form (1, 2 or 3).
    #[arg(long)]
    form: Option<u8>,
}

#[derive(Args)]
struct DesignArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Plant JSON with fields A, B1, B2, C1, C2, D12, D21.
    #[arg(long)]
    plant: Option<PathBuf>,
    /// Controller order (defaults to the plant order).
    #[arg(long)]
    nc: Option<usize>,
    /// Plant cone; the controller is designed for its complement.
    #[arg(long, num_args = 2, value_names = ["A", "B"], allow_negative_numbers = true)]
    cone: Option<Vec<f64>>,
    /// Controller cone, used as given (strict).
    #[arg(long, num_args = 2, value_names = ["A", "B"], allow_negative_numbers = true)]
    controller_cone: Option<Vec<f64>>,
    #[arg(long, value_enum)]
    init: Option<InitArg>,
    /// Starting controller JSON (Ahat, Bhat, Chat) for `--init arbitrary`.
    #[arg(long)]
    controller: Option<PathBuf>,
    /// Cost growth per relaxation step for `--init ico`.
    #[arg(long)]
    delta: Option<f64>,
    #[arg(long)]
    epsilon: Option<f64>,
    #[arg(long)]
    gamma_reg: Option<f64>,
    #[arg(long)]
    max_iters: Option<usize>,
    #[arg(long)]
    ico_max_iters: Option<usize>,
    #[arg(long, value_enum)]
    weights: Option<WeightArg>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct BenchArgs {
    #[command(flatten)]
    common: CommonArgs,
    #[arg(long, value_enum)]
    mode: Option<SweepMode>,
    /// Parameter sets drawn in sample mode.
    #[arg(long)]
    samples: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Plant cone of the uncertain family.
    #[arg(long, num_args = 2, value_names = ["A", "B"], allow_negative_numbers = true)]
    cone: Option<Vec<f64>>,
    /// Designs to run: h2, conicc, cnew, inew.
    #[arg(long, value_delimiter = ',')]
    designs: Option<Vec<String>>,
    #[arg(long)]
    epsilon: Option<f64>,
    #[arg(long)]
    max_iters: Option<usize>,
    #[arg(long)]
    ico_max_iters: Option<usize>,
    #[arg(long, value_enum)]
    weights: Option<WeightArg>,
    /// Evaluate parameter sets one at a time.
    #[arg(long)]
    sequential: bool,
}

#[derive(Clone, Copy, clap::ValueEnum)]
enum InitArg {
    Arbitrary,
    Conicc,
    Ico,
}

impl From<InitArg> for InitMethod {
    fn from(a: InitArg) -> Self {
        match a {
            InitArg::Arbitrary => InitMethod::Arbitrary,
            InitArg::Conicc => InitMethod::Conicc,
            InitArg::Ico => InitMethod::Ico,
        }
    }
}

#[derive(Clone, Copy, clap::ValueEnum)]
enum WeightArg {
    Identity,
    Optimize,
}

impl From<WeightArg> for WeightMode {
    fn from(a: WeightArg) -> Self {
        match a {
            WeightArg::Identity => WeightMode::Identity,
            WeightArg::Optimize => WeightMode::Optimize,
        }
    }
}

fn pair(v: Option<Vec<f64>>) -> Option<[f64; 2]> {
    v.map(|v| [v[0], v[1]])
}

fn merged(common: &CommonArgs, flags: RunConfig) -> Result<RunConfig, CliError> {
    let file = match &common.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    Ok(file.overlay(RunConfig {
        out: common.out.clone(),
        ..flags
    }))
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path, what: &str) -> Result<T, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::usage(format!("cannot read {what} file {}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| CliError::usage(format!("invalid {what} file {}: {e}", path.display())))
}

fn to_value<T: Serialize>(v: &T) -> Value {
    serde_json::to_value(v).unwrap_or(Value::Null)
}

fn out_dir(cfg: &RunConfig, resolved: &Value) -> Result<Option<OutDir>, CliError> {
    cfg.out.as_deref().map(|d| OutDir::create(d, resolved.clone())).transpose()
}

fn analyze_cone(cfg: RunConfig) -> Result<Value, CliError> {
    let sys_path = require(&cfg.sys, "sys (state-space JSON)")?;
    let [a, b] = require(&cfg.cone, "cone")?;
    let strict = cfg.strict.unwrap_or(false);
    let cone = if strict { Cone::strict(a, b)? } else { Cone::new(a, b)? };
    let form = CslForm::try_from(cfg.form.unwrap_or(1)).map_err(CliError::usage)?;
    let sys: StateSpace = read_json(&sys_path, "state-space")?;
    sys.validate()?;
    let resolved = json!({
        "command": "analyze-cone", "sys": sys_path, "cone": cone, "form": u8::from(form),
    });

    let report = csl_report(&sys, &cone, form)?;
    let frequency = if is_hurwitz(&sys.a)? {
        Some(frequency_cone_oracle(&sys, &cone, &FrequencyGrid::default())?)
    } else {
        None
    };
    let in_cone = report.certificate.is_some();
    let result = json!({
        "in_cone": in_cone,
        "form": u8::from(form),
        "lmi_t": report.t,
        "tolerance": report.tolerance,
        "certificate": report.certificate,
        "frequency": frequency,
    });
    if let Some(mut out) = out_dir(&cfg, &resolved)? {
        out.json("cone_report.json", &result)?;
    }
    if !in_cone {
        let worst = frequency.map(|f| f.worst_omega);
        return Err(CliError::failure(
            "not-in-cone",
            format!("no certificate for cone [{a}, {b}] (t = {:.3e}, worst frequency {worst:?})", report.t),
            result,
        ));
    }
    Ok(result)
}

struct Design {
    plant: Plant,
    t: TransformData,
    method: InitMethod,
    resolved: Value,
    weights: (conic_synth::linalg::Mat, conic_synth::linalg::Mat),
}

fn controller_cone(cfg: &RunConfig) -> Result<Cone, CliError> {
    match (cfg.controller_cone, cfg.cone) {
        (Some([a, b]), _) => Ok(Cone::strict(a, b)?),
        (None, Some([a, b])) => Ok(cst_complement(&Cone::new(a, b)?)?),
        (None, None) => Err(CliError::usage("one of cone or controller_cone is required")),
    }
}

fn synthesis_options(cfg: &RunConfig) -> SynthesisOptions {
    let d = SynthesisOptions::default();
    SynthesisOptions {
        epsilon: cfg.epsilon.unwrap_or(d.epsilon),
        gamma_reg: cfg.gamma_reg.unwrap_or(d.gamma_reg),
        max_iters: cfg.max_iters.unwrap_or(d.max_iters),
        feas_tol: cfg.feas_tol.unwrap_or(d.feas_tol),
        ..d
    }
}

fn ico_options(cfg: &RunConfig) -> IcoOptions {
    let d = IcoOptions::default();
    IcoOptions {
        delta: cfg.delta.unwrap_or(d.delta),
        gamma_reg: cfg.ico_gamma.unwrap_or(d.gamma_reg),
        max_iters: cfg.ico_max_iters.unwrap_or(d.max_iters),
        feas_tol: cfg.feas_tol.unwrap_or(d.feas_tol),
        ..d
    }
}

fn prepare_design(cfg: &RunConfig, command: &str) -> Result<Design, CliError> {
    let plant_path = require(&cfg.plant, "plant")?;
    let plant: Plant = read_json(&plant_path, "plant")?;
    let nc = cfg.nc.unwrap_or(plant.states());
    let cone = controller_cone(cfg)?;
    let method = cfg.init.unwrap_or(InitMethod::Conicc);
    if method == InitMethod::Arbitrary && cfg.controller.is_none() {
        return Err(CliError::usage("init method 'arbitrary' needs a controller file"));
    }
    let sopts = synthesis_options(cfg);
    sopts.validate()?;
    let iopts = ico_options(cfg);
    if !(iopts.delta >= 0.0 && iopts.delta.is_finite()) {
        return Err(CliError::usage(format!("delta must be >= 0, got {}", iopts.delta)));
    }
    let weight_mode = cfg.weights.unwrap_or(WeightMode::Optimize);
    let t = build_transform(&plant, nc, &cone)?;
    let weights = match weight_mode {
        WeightMode::Identity => w_identity(&t),
        WeightMode::Optimize => w_optimize(&t),
    };
    let resolved = json!({
        "command": command,
        "plant": plant_path,
        "nc": nc,
        "plant_cone": cfg.cone,
        "controller_cone": cone,
        "init": method,
        "controller": cfg.controller,
        "delta": iopts.delta,
        "ico_gamma": iopts.gamma_reg,
        "ico_max_iters": iopts.max_iters,
        "epsilon": sopts.epsilon,
        "gamma_reg": sopts.gamma_reg,
        "max_iters": sopts.max_iters,
        "feas_tol": sopts.feas_tol,
        "weights": weight_mode,
        "seed": cfg.seed.unwrap_or(0),
    });
    Ok(Design {
        plant,
        t,
        method,
        resolved,
        weights,
    })
}

fn run_init(cfg: &RunConfig, d: &Design) -> Result<InitResult, CliError> {
    let feas_tol = synthesis_options(cfg).feas_tol;
    match d.method {
        InitMethod::Arbitrary => {
            let path = require(&cfg.controller, "controller")?;
            let ctrl: Controller = read_json(&path, "controller")?;
            Ok(init_arbitrary(&d.t, &ctrl, feas_tol)?)
        }
        InitMethod::Conicc => Ok(init_conicc(&d.plant, &d.t, feas_tol)?),
        InitMethod::Ico => {
            let opts = IcoOptions {
                w1: Some(d.weights.0.clone()),
                w2: Some(d.weights.1.clone()),
                ..ico_options(cfg)
            };
            let target = match &cfg.controller {
                Some(p) => Some(read_json::<Controller>(p, "controller")?),
                None => None,
            };
            match init_ico(&d.plant, &d.t, target.as_ref(), &opts)? {
                IcoOutcome::Converged(r) => Ok(r),
                IcoOutcome::NotConverged {
                    reason,
                    iterations,
                    eps_trace,
                    message,
                    ..
                } => Err(CliError::failure(
                    "no-convergence",
                    format!("relaxation start did not converge: {message}"),
                    json!({ "reason": reason, "iterations": iterations, "eps_trace": eps_trace }),
                )),
            }
        }
    }
}

fn init_command(cfg: RunConfig) -> Result<Value, CliError> {
    let d = prepare_design(&cfg, "init")?;
    let mut out = out_dir(&cfg, &d.resolved)?;
    let init = run_init(&cfg, &d)?;
    if let Some(out) = out.as_mut() {
        out.json("init.json", &init)?;
    }
    Ok(json!({
        "method": init.method,
        "Jprime": init.jprime,
        "Jtrue": init.jtrue,
        "iterations": init.iterations,
        "warnings": init.warnings,
    }))
}

pub fn history_csv(result: &SynthesisResult) -> String {
    let mut s = String::from("iter,Jprime,Jtrue,lyap_residual,conic_residual\n");
    for r in &result.history {
        s.push_str(&format!(
            "{},{},{},{},{}\n",
            r.iter, r.jprime, r.jtrue, r.lyap_residual, r.conic_residual
        ));
    }
    s
}

fn synthesize_command(cfg: RunConfig) -> Result<Value, CliError> {
    let d = prepare_design(&cfg, "synthesize")?;
    let mut out = out_dir(&cfg, &d.resolved)?;
    let init = run_init(&cfg, &d)?;
    let opts = SynthesisOptions {
        w1: Some(d.weights.0.clone()),
        w2: Some(d.weights.1.clone()),
        ..synthesis_options(&cfg)
    };
    let result = run_algorithm1_on(&d.t, &init.state(), &opts)?;
    let ctrl = result.state.k.to_controller();
    let cert = csl_check(&ctrl.as_state_space(), &d.t.cone, CslForm::One)?;
    let summary = json!({
        "status": result.status,
        "message": result.message,
        "iterations": result.iterations(),
        "Jprime": result.state.jprime,
        "Jtrue": result.state.jtrue,
        "initial_Jtrue": init.jtrue,
        "in_cone": cert.is_some(),
        "cone_residual": cert.as_ref().map(|c| c.residual),
    });
    if let Some(out) = out.as_mut() {
        out.json("init.json", &init)?;
        let mut body = to_value(&ctrl);
        if let (Value::Object(m), Value::Object(s)) = (&mut body, &summary) {
            m.extend(s.clone());
        }
        out.json("controller.json", &body)?;
        out.csv("history.csv", &history_csv(&result))?;
    }
    if !result.status.is_success() {
        return Err(CliError::failure("no-convergence", result.message.clone(), summary));
    }
    Ok(summary)
}

fn bench_config(cfg: &RunConfig) -> Result<BenchmarkConfig, CliError> {
    let d = BenchmarkConfig::default();
    let seed = cfg.seed.unwrap_or(2021);
    let sampling = match cfg.mode.unwrap_or(SweepMode::Sample) {
        SweepMode::Full => Sampling::Full,
        SweepMode::Sample => Sampling::Sample {
            n: cfg.samples.unwrap_or(500),
            seed,
        },
    };
    let plant_cone = match cfg.cone {
        Some([a, b]) => Cone::new(a, b)?,
        None => d.plant_cone,
    };
    Ok(BenchmarkConfig {
        plant_cone,
        sampling,
        epsilon: cfg.epsilon.unwrap_or(d.epsilon),
        gamma_reg: cfg.gamma_reg.unwrap_or(d.gamma_reg),
        max_iters: cfg.max_iters.unwrap_or(d.max_iters),
        weights: cfg.weights.unwrap_or(d.weights),
        ico_delta: cfg.delta.unwrap_or(d.ico_delta),
        ico_gamma: cfg.ico_gamma.unwrap_or(d.ico_gamma),
        ico_max_iters: cfg.ico_max_iters.unwrap_or(d.ico_max_iters),
        designs: cfg.designs.clone().unwrap_or(d.designs.clone()),
        literature: cfg.literature.unwrap_or(d.literature),
        recompute_cone: cfg.recompute_cone.unwrap_or(d.recompute_cone),
        ..d
    })
}

fn threads_from_env() -> Result<Option<usize>, CliError> {
    match std::env::var(THREADS_ENV) {
        Ok(v) if !v.trim().is_empty() => v
            .trim()
            .parse::<usize>()
            .map(Some)
            .map_err(|_| CliError::usage(format!("{THREADS_ENV} must be a positive integer, got '{v}'"))),
        _ => Ok(None),
    }
}

fn benchmark_command(cfg: RunConfig, sequential: bool) -> Result<Value, CliError> {
    let bench = bench_config(&cfg)?;
    let threads = threads_from_env()?;
    let exec = if sequential { ExecMode::Sequential } else { ExecMode::best() };
    let resolved = json!({ "command": "benchmark", "benchmark": bench });
    let mut out = out_dir(&cfg, &resolved)?;
    let outcome = parallel::with_threads(threads, || run_benchmark(&bench, exec))?;
    let r = &outcome.report;
    let summary = json!({
        "reference_cost": r.reference_cost,
        "controllers": r.controllers,
        "controller_cone": outcome.controller_cone,
        "sampled_plant_a": outcome.sampled_plant_a,
        "iteration_bound": outcome.iteration_bound,
        "parameter_sets": r.sets.len(),
        "notes": outcome.notes,
    });
    if let Some(out) = out.as_mut() {
        out.csv("table1.csv", &r.table1_csv())?;
        out.csv("histogram_cost.csv", &r.histogram_cost_csv(200))?;
        out.csv("histogram_regret.csv", &r.histogram_regret_csv(100.0, 201))?;
        out.csv("design_curves.csv", &design_curves_csv(&outcome.curves))?;
        out.json("summary.json", &summary)?;
        let controllers: serde_json::Map<String, Value> = outcome
            .designs
            .iter()
            .filter_map(|d| d.controller.as_ref().map(|c| (d.name.clone(), to_value(c))))
            .collect();
        out.json("controllers.json", &controllers)?;
        let nominal = ChainParams::nominal();
        out.json("chain_g1.json", &build_chain_plant(&nominal, ChainOutput::Velocity)?)?;
        out.json("chain_g2.json", &build_chain_plant(&nominal, ChainOutput::FilteredPosition)?)?;
    }
    Ok(summary)
}

fn run(cli: Cli) -> Result<Value, CliError> {
    match cli.command {
        Command::AnalyzeCone(a) => {
            let flags = RunConfig {
                sys: a.sys,
                cone: pair(a.cone),
                strict: a.strict.then_some(true),
                form: a.form,
                ..RunConfig::default()
            };
            analyze_cone(merged(&a.common, flags)?)
        }
        Command::Init(a) => init_command(merged(&a.common, design_flags(&a))?),
        Command::Synthesize(a) => synthesize_command(merged(&a.common, design_flags(&a))?),
        Command::Benchmark(a) => {
            let flags = RunConfig {
                mode: a.mode,
                samples: a.samples,
                seed: a.seed,
                cone: pair(a.cone.clone()),
                designs: a.designs.clone(),
                epsilon: a.epsilon,
                max_iters: a.max_iters,
                ico_max_iters: a.ico_max_iters,
                weights: a.weights.map(Into::into),
                ..RunConfig::default()
            };
            benchmark_command(merged(&a.common, flags)?, a.sequential)
        }
    }
}

fn design_flags(a: &DesignArgs) -> RunConfig {
    RunConfig {
        plant: a.plant.clone(),
        nc: a.nc,
        cone: pair(a.cone.clone()),
        controller_cone: pair(a.controller_cone.clone()),
        init: a.init.map(Into::into),
        controller: a.controller.clone(),
        delta: a.delta,
        epsilon: a.epsilon,
        gamma_reg: a.gamma_reg,
        max_iters: a.max_iters,
        ico_max_iters: a.ico_max_iters,
        weights: a.weights.map(Into::into),
        seed: a.seed,
        ..RunConfig::default()
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .init();
    match run(cli) {
        Ok(summary) => {
            println!("{}", serde_json::to_string_pretty(&summary).unwrap_or_default());
            ExitCode::SUCCESS
        }
        Err(e) => {
            let code = e.exit_code();
            let body = match &e {
                CliError::Usage(msg) => {
                    eprintln!("error: {msg}\n\nRun 'conic-synth --help' for usage.");
                    json!({ "error": "usage", "message": msg, "exit_code": code })
                }
                CliError::Failure { kind, message, details } => {
                    json!({ "error": kind, "message": message, "details": details, "exit_code": code })
                }
            };
            println!("{}", serde_json::to_string_pretty(&body).unwrap_or_default());
            ExitCode::from(code)
        }
    }
}
