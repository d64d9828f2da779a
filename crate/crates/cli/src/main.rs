use std::io::{self, BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use ctbn::cliquetree::{ApproxConfig, CliqueTree};
use ctbn::error::{Error as CtbnError, ErrorCategory};
use ctbn::exact::{ExactEngine, QuerySpec};
use ctbn::experiment::{format_recalc, parse_recalc, run_experiment, ExperimentSpec, Grid};
use ctbn::fixtures;
use ctbn::io::{read_network, read_scenario, to_canonical_json, Scenario};
use ctbn::marginalize::MarginalizationMethod;
use ctbn::model::{Ctbn, DEFAULT_CAP};
use ctbn::sampling::{sample_many, write_csv};

#[derive(Parser)]
#[command(name = "ctbn", version, about = "Inference and simulation for continuous time Bayesian networks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Marginal distributions at query times, given a scenario's evidence
    Query(QueryArgs),
    /// Distribution of the first time a variable takes a value
    FirstPassage(FirstPassageArgs),
    /// Sample trajectories as CSV
    Sample(SampleArgs),
    /// KL divergence of approximate from exact inference over a time grid
    Experiment(ExperimentArgs),
    /// Check that a network file is valid
    Validate(NetworkArg),
    /// Print a network in canonical form
    Canonicalize(NetworkArg),
}

#[derive(Args)]
struct NetworkArg {
    /// Network file, or `builtin:NAME` for a bundled network
    network: String,
}

#[derive(Args)]
struct Common {
    #[command(flatten)]
    network: NetworkArg,
    /// Scenario file with initial values, evidence and queries
    #[arg(long)]
    scenario: Option<PathBuf>,
    /// Largest number of joint states to enumerate
    #[arg(long, default_value_t = DEFAULT_CAP)]
    cap: usize,
    /// Emit line-delimited JSON instead of CSV
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct ApproxArgs {
    #[arg(long, value_enum)]
    method: Option<MethodArg>,
    /// Look-ahead for reference distributions
    #[arg(long)]
    tstar: Option<f64>,
    /// Interval between recalculations of the dynamics (`inf` for never)
    #[arg(long)]
    recalc: Option<String>,
    /// Use a uniform conditional where a reference distribution has no mass
    #[arg(long)]
    uniform_fallback: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum MethodArg {
    Linear,
    Subsystem,
}

impl From<MethodArg> for MarginalizationMethod {
    fn from(m: MethodArg) -> Self {
        match m {
            MethodArg::Linear => MarginalizationMethod::Linear,
            MethodArg::Subsystem => MarginalizationMethod::Subsystem,
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Engine {
    Exact,
    Approx,
}

#[derive(Args)]
struct QueryArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long, value_enum, default_value = "exact")]
    engine: Engine,
    #[command(flatten)]
    approx: ApproxArgs,
    /// Query time, added to the scenario's queries (with --var)
    #[arg(long)]
    at: Option<f64>,
    /// Variable to report at --at; repeatable
    #[arg(long = "var")]
    vars: Vec<String>,
}

#[derive(Args)]
struct FirstPassageArgs {
    #[command(flatten)]
    common: Common,
    /// Variable whose first passage is tracked
    #[arg(long = "var")]
    var: String,
    /// Target value
    #[arg(long)]
    value: String,
    /// Times at which to report the CDF, start:stop:step
    #[arg(long)]
    grid: Option<Grid>,
}

#[derive(Args)]
struct SampleArgs {
    #[command(flatten)]
    common: Common,
    /// End of each trajectory
    #[arg(long)]
    t_end: f64,
    #[arg(long, default_value_t = 1)]
    count: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct ExperimentArgs {
    #[command(flatten)]
    common: Common,
    #[command(flatten)]
    approx: ApproxArgs,
    /// Comma-separated methods to compare
    #[arg(long, value_enum, value_delimiter = ',')]
    methods: Vec<MethodArg>,
    /// Comma-separated recalculation intervals (`inf` for never)
    #[arg(long = "recalc-list", value_delimiter = ',')]
    recalc_list: Vec<String>,
    /// Times at which to compare, start:stop:step
    #[arg(long)]
    grid: Option<Grid>,
}

fn load_network(arg: &NetworkArg) -> Result<Ctbn> {
    if let Some(name) = arg.network.strip_prefix("builtin:") {
        let (_, text) = fixtures::ALL
            .iter()
            .find(|(n, _)| *n == name)
            .ok_or_else(|| CtbnError::InvalidConfig(format!("no bundled network named '{name}'")))?;
        return Ok(ctbn::io::parse_network(text)?);
    }
    Ok(read_network(&arg.network)?)
}

fn load(common: &Common) -> Result<(Ctbn, Scenario)> {
    let network = load_network(&common.network)?;
    let scenario = match &common.scenario {
        Some(path) => read_scenario(&network, path)?,
        None => Scenario::empty(),
    };
    let started = scenario.apply_initial(&network)?;
    Ok((started, scenario))
}

fn approx_config(args: &ApproxArgs, scenario: &Scenario, cap: usize) -> Result<ApproxConfig> {
    let defaults = ApproxConfig::default();
    let recalc = match &args.recalc {
        Some(s) => parse_recalc(s)?,
        None => scenario.settings.recalc.unwrap_or(defaults.recalc),
    };
    Ok(ApproxConfig {
        method: args.method.map(Into::into).or(scenario.settings.method).unwrap_or(defaults.method),
        tstar: args.tstar.or(scenario.settings.tstar).unwrap_or(defaults.tstar),
        recalc,
        uniform_fallback: args.uniform_fallback,
        cap,
        ..defaults
    })
}

fn query(args: &QueryArgs, out: &mut impl Write) -> Result<()> {
    let (network, scenario) = load(&args.common)?;
    let mut queries = scenario.queries.clone();
    match (args.at, args.vars.is_empty()) {
        (Some(time), false) => {
            let targets = args.vars.iter().map(|n| network.var_by_name(n)).collect::<ctbn::error::Result<Vec<_>>>()?;
            queries.push(QuerySpec { time, targets, given: Vec::new() });
        }
        (None, true) => {}
        _ => bail!(CtbnError::InvalidConfig("--at and --var must be given together".into())),
    }
    if queries.is_empty() {
        bail!(CtbnError::InvalidConfig("nothing to query: give --at and --var or a scenario with queries".into()));
    }
    let cap = args.common.cap;
    let exact = match args.engine {
        Engine::Exact => Some(ExactEngine::new(&network, cap)?),
        Engine::Approx => None,
    };
    let tree = match args.engine {
        Engine::Approx => Some(CliqueTree::build(&network, approx_config(&args.approx, &scenario, cap)?)?),
        Engine::Exact => None,
    };
    if !args.common.json {
        writeln!(out, "t,variable,value,probability")?;
    }
    for q in &queries {
        let exact_posterior = match &exact {
            Some(engine) => Some(engine.posterior_at(&scenario.evidence, q.time)?),
            None => None,
        };
        let approx_tree = match &tree {
            Some(tree) => Some(tree.run_sequence(&scenario.evidence, q.time)?),
            None => None,
        };
        for &x in &q.targets {
            let marginal = match (&exact, &exact_posterior, &approx_tree) {
                (Some(engine), Some(p), _) => engine.marginal(p, &[x])?,
                (_, _, Some(t)) => t.marginal(&[x])?,
                _ => unreachable!("one engine is always selected"),
            };
            let var = network.variable(x);
            for (value, p) in var.values.iter().zip(marginal.as_slice()) {
                if args.common.json {
                    writeln!(out, "{}", json!({"t": q.time, "variable": var.name, "value": value, "probability": p}))?;
                } else {
                    writeln!(out, "{},{},{},{}", q.time, var.name, value, p)?;
                }
            }
        }
    }
    Ok(())
}

fn first_passage(args: &FirstPassageArgs, out: &mut impl Write) -> Result<()> {
    let (network, scenario) = load(&args.common)?;
    if !scenario.evidence.is_empty() {
        bail!(CtbnError::InvalidConfig("first-passage starts from the initial distribution and takes no evidence".into()));
    }
    let x = network.var_by_name(&args.var)?;
    let value = network.value_index(x, &args.value)?;
    let engine = ExactEngine::new(&network, args.common.cap)?;
    let grid = args.grid.or(scenario.settings.grid).unwrap_or_default();
    if !args.common.json {
        writeln!(out, "t,cdf")?;
    }
    for t in grid.points() {
        let cdf = engine.first_passage_cdf(x, value, engine.initial(), t)?;
        if args.common.json {
            writeln!(out, "{}", json!({"t": t, "cdf": cdf}))?;
        } else {
            writeln!(out, "{t},{cdf}")?;
        }
    }
    let mean = engine.expected_first_passage(x, value, engine.initial())?;
    if args.common.json {
        writeln!(out, "{}", json!({"mean": mean}))?;
    } else {
        writeln!(out, "mean,{mean}")?;
    }
    Ok(())
}

fn sample(args: &SampleArgs, out: &mut impl Write) -> Result<()> {
    let (network, scenario) = load(&args.common)?;
    if !scenario.evidence.is_empty() {
        bail!(CtbnError::InvalidConfig("sampling does not condition on evidence".into()));
    }
    let trajectories = sample_many(&network, args.t_end, args.count, args.seed)?;
    if !args.common.json {
        write_csv(&network, &trajectories, out)?;
        return Ok(());
    }
    for (k, tr) in trajectories.iter().enumerate() {
        let rows = network
            .var_ids()
            .map(|x| (0.0, x, tr.initial[x.0]))
            .chain(tr.events.iter().map(|e| (e.time, e.var, e.value)));
        for (time, x, value) in rows {
            let var = network.variable(x);
            writeln!(
                out,
                "{}",
                json!({"trajectory": k, "time": time, "variable": var.name, "new_value": var.values[value]})
            )?;
        }
    }
    Ok(())
}

fn experiment(args: &ExperimentArgs, out: &mut impl Write) -> Result<()> {
    let (network, scenario) = load(&args.common)?;
    let base = approx_config(&args.approx, &scenario, args.common.cap)?;
    let defaults = ExperimentSpec::default();
    let methods = if args.methods.is_empty() {
        match args.approx.method.map(Into::into).or(scenario.settings.method) {
            Some(m) => vec![m],
            None => defaults.methods,
        }
    } else {
        args.methods.iter().map(|&m| m.into()).collect()
    };
    let recalcs = if !args.recalc_list.is_empty() {
        args.recalc_list.iter().map(|s| parse_recalc(s)).collect::<ctbn::error::Result<Vec<_>>>()?
    } else if args.approx.recalc.is_some() || scenario.settings.recalc.is_some() {
        vec![base.recalc]
    } else {
        defaults.recalcs
    };
    let spec = ExperimentSpec {
        methods,
        tstar: base.tstar,
        recalcs,
        grid: args.grid.or(scenario.settings.grid).unwrap_or_default(),
        base,
    };
    let output = run_experiment(&network, &scenario.evidence, &spec)?;
    if !args.common.json {
        output.write_csv(out)?;
        return Ok(());
    }
    for r in &output.rows {
        let row = json!({"method": r.method, "tstar": r.tstar, "recalc": format_recalc(r.recalc), "t": r.t, "kl": r.kl});
        writeln!(out, "{row}")?;
    }
    for s in &output.summaries {
        let row = json!({"method": s.method, "tstar": s.tstar, "recalc": format_recalc(s.recalc), "mean_kl": s.mean_kl});
        writeln!(out, "{row}")?;
    }
    Ok(())
}

fn run(cli: &Cli, out: &mut impl Write) -> Result<()> {
    match &cli.command {
        Command::Query(a) => query(a, out),
        Command::FirstPassage(a) => first_passage(a, out),
        Command::Sample(a) => sample(a, out),
        Command::Experiment(a) => experiment(a, out),
        Command::Validate(a) => {
            let network = load_network(a)?;
            writeln!(out, "ok: {} variables, {} joint states", network.len(), network.joint_size())?;
            Ok(())
        }
        Command::Canonicalize(a) => {
            let network = load_network(a).with_context(|| format!("reading {}", a.network))?;
            out.write_all(to_canonical_json(&network).as_bytes())?;
            Ok(())
        }
    }
}

fn category(err: &anyhow::Error) -> (&'static str, u8) {
    match library_error(err).map(CtbnError::category) {
        Some(ErrorCategory::Validation) => ("validation", 1),
        Some(ErrorCategory::CapExceeded) => ("cap", 3),
        Some(ErrorCategory::Numeric) | None => ("runtime", 2),
    }
}

fn library_error(err: &anyhow::Error) -> Option<&CtbnError> {
    err.chain().find_map(|e| e.downcast_ref::<CtbnError>())
}

fn main() -> ExitCode {
    env_logger::Builder::from_default_env().format_timestamp(None).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let rendered = e.render().to_string();
            eprint!("error[usage]: {}", rendered.strip_prefix("error: ").unwrap_or(&rendered));
            return ExitCode::from(1);
        }
    };
    // output is held back until the command succeeds
    let mut buffer = Vec::new();
    let result = run(&cli, &mut buffer).and_then(|()| {
        let mut out = BufWriter::new(io::stdout().lock());
        out.write_all(&buffer)?;
        out.flush()?;
        Ok(())
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let (label, code) = category(&e);
            eprintln!("error[{label}]: {e:#}");
            if let Some(CtbnError::ZeroMassConditioning { .. }) = library_error(&e).map(CtbnError::innermost) {
                eprintln!("hint: --uniform-fallback replaces undefined conditionals with uniform ones");
            }
            ExitCode::from(code)
        }
    }
}
