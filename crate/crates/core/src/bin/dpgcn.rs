//! Command-line front end.
//!
//! Exit codes: 0 on success, 1 on validation or I/O errors, 2 when a
//! deterministic invariant fails during verification.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use dpgcn::config::{MSetting, RunConfig};
use dpgcn::graph::{generate_sbm, planted_features, read_edge_list, read_features, write_edge_list, write_features};
use dpgcn::harness::{
    audit_asamp, verify_bernstein, verify_consensus_bound, verify_single_graph_bound, write_json, write_trial_csv,
};
use dpgcn::mechanism::{run_mechanism, VoteMode};
use dpgcn::theory::{theory_report, BoundInputs};
use dpgcn::{Activation, Error, FeatureVector, Graph, SbmParams};

#[derive(Parser)]
#[command(name = "dpgcn", version, about = "Private node labeling with subsampled one-layer GCNs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sample a two-community SBM and planted features.
    Gen(GenArgs),
    /// Run the mechanism once.
    Run(RunArgs),
    /// Evaluate the single-subsample bound on a grid of p_s.
    Bound(BoundArgs),
    /// Compute p_s* and the feasible subsampling interval.
    Feasible(RunArgs),
    /// Monte Carlo check of a concentration or misclassification bound.
    Verify(VerifyArgs),
    /// Empirical privacy audit on a neighboring pair.
    Audit(AuditArgs),
    /// Run a declarative experiment file.
    Experiment(ExperimentArgs),
}

#[derive(Args)]
struct GenArgs {
    #[arg(long)]
    n: usize,
    #[arg(long)]
    p_in: f64,
    #[arg(long)]
    p_out: f64,
    /// Gaussian noise level of the planted features.
    #[arg(long, default_value_t = 0.5)]
    noise: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output directory; receives graph.edges and features.txt.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct InputArgs {
    /// Edge-list file.
    #[arg(long)]
    graph: PathBuf,
    /// Feature file, one value per line; normalized on load.
    #[arg(long)]
    features: PathBuf,
    /// TOML key-value config; flags override its keys.
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Args)]
struct ParamArgs {
    #[arg(long = "eps")]
    epsilon: Option<f64>,
    #[arg(long)]
    delta: Option<f64>,
    #[arg(long = "ps")]
    ps: Option<f64>,
    /// Positive integer or `auto`.
    #[arg(long)]
    m: Option<String>,
    #[arg(long)]
    m_cap: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    eta: Option<f64>,
    #[arg(long)]
    activation: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    h0: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    h1: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    tau: Option<f64>,
    #[arg(long, value_enum)]
    vote_mode: Option<VoteModeArg>,
}

#[derive(Clone, Copy, ValueEnum)]
enum VoteModeArg {
    WholeVector,
    PerNode,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    input: InputArgs,
    #[command(flatten)]
    params: ParamArgs,
    /// JSON output file; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct BoundArgs {
    #[command(flatten)]
    run: RunArgs,
    /// Comma-separated p_s values.
    #[arg(long, value_delimiter = ',', default_value = "0.1,0.2,0.3,0.4,0.5,0.6,0.7,0.8,0.9,1.0")]
    grid: Vec<f64>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Check {
    Bernstein,
    Theorem1,
    Theorem2,
}

#[derive(Args)]
struct VerifyArgs {
    #[arg(value_enum)]
    check: Check,
    #[command(flatten)]
    input: InputArgs,
    #[command(flatten)]
    params: ParamArgs,
    /// Subsample trials (bernstein, theorem1) or mechanism repeats (theorem2).
    #[arg(long, default_value_t = 1000)]
    trials: usize,
    /// Count only released repeats in the theorem2 check.
    #[arg(long)]
    released_only: bool,
    /// Output directory; receives trials.csv and summary.json.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct AuditArgs {
    #[command(flatten)]
    input: InputArgs,
    #[command(flatten)]
    params: ParamArgs,
    #[arg(long, default_value_t = 10_000)]
    trials: usize,
    /// Pair to toggle, as `u,v`.
    #[arg(long, value_parser = parse_pair, default_value = "0,1")]
    edge: (usize, usize),
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ExperimentArgs {
    file: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

impl ParamArgs {
    fn to_config(&self) -> Result<RunConfig, Error> {
        Ok(RunConfig {
            epsilon: self.epsilon,
            delta: self.delta,
            ps: self.ps,
            m: self.m.as_deref().map(str::parse::<MSetting>).transpose()?,
            m_cap: self.m_cap,
            seed: self.seed,
            vote_mode: self.vote_mode.map(|v| match v {
                VoteModeArg::WholeVector => VoteMode::WholeVector,
                VoteModeArg::PerNode => VoteMode::PerNode,
            }),
            activation: self.activation.as_deref().map(str::parse::<Activation>).transpose()?,
            h0: self.h0,
            h1: self.h1,
            tau: self.tau,
            eta: self.eta,
        })
    }
}

struct Loaded {
    graph: Graph,
    x: FeatureVector,
    config: RunConfig,
}

fn load(input: &InputArgs, params: &ParamArgs) -> Result<Loaded, Error> {
    let base = match &input.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    let config = base.merged(params.to_config()?);
    let graph = read_edge_list(&input.graph)?;
    let x = FeatureVector::normalized(read_features(&input.features)?)?;
    if x.len() != graph.node_count() {
        return Err(Error::DimensionMismatch {
            expected: graph.node_count(),
            actual: x.len(),
        });
    }
    Ok(Loaded { graph, x, config })
}

fn emit<T: Serialize>(value: &T, out: Option<&Path>) -> Result<(), Error> {
    match out {
        Some(path) => write_json(path, value),
        None => {
            let mut stdout = std::io::stdout().lock();
            writeln!(stdout, "{}", serde_json::to_string_pretty(value)?)?;
            Ok(())
        }
    }
}

fn gen(args: &GenArgs) -> Result<(), Error> {
    let params = SbmParams { n: args.n, p_in: args.p_in, p_out: args.p_out };
    let (g, labels) = generate_sbm(&params, args.seed)?;
    let x = planted_features(&labels, args.noise, args.seed.wrapping_add(1))?;
    std::fs::create_dir_all(&args.out)?;
    write_edge_list(&g, args.out.join("graph.edges"))?;
    write_features(x.as_slice(), args.out.join("features.txt"))?;
    Ok(())
}

fn run(args: &RunArgs) -> Result<(), Error> {
    let l = load(&args.input, &args.params)?;
    let model = l.config.model()?;
    let config = l.config.mechanism(l.graph.node_count())?;
    let outcome = run_mechanism(&l.graph, &l.x, &model, &config)?;
    #[derive(Serialize)]
    struct RunReport<'a> {
        schema: &'static str,
        config: &'a dpgcn::MechanismConfig,
        model: &'a dpgcn::GcnModel,
        outcome: &'a dpgcn::MechanismOutcome,
    }
    emit(
        &RunReport { schema: dpgcn::harness::SCHEMA, config: &config, model: &model, outcome: &outcome },
        args.out.as_deref(),
    )
}

fn theory(args: &RunArgs, grid: &[f64]) -> Result<(), Error> {
    let l = load(&args.input, &args.params)?;
    let model = l.config.model()?;
    let inputs = BoundInputs::from_graph(&l.graph, &l.x, &model)?;
    let report = theory_report(
        &inputs,
        l.config.epsilon(),
        l.config.delta(),
        l.config.eta(),
        grid,
        l.config.m_cap(),
    )?;
    emit(&report, args.out.as_deref())
}

fn verify(args: &VerifyArgs) -> Result<(), Error> {
    let l = load(&args.input, &args.params)?;
    let model = l.config.model()?;
    let (p_s, eta, seed) = (l.config.ps(), l.config.eta(), l.config.seed());
    std::fs::create_dir_all(&args.out)?;
    let csv = args.out.join("trials.csv");
    let json = args.out.join("summary.json");
    match args.check {
        Check::Bernstein => {
            let report = verify_bernstein(&l.graph, p_s, args.trials, eta, seed)?;
            write_trial_csv(&csv, &report.records)?;
            write_json(&json, &report)?;
            report.check_invariants()
        }
        Check::Theorem1 => {
            let report = verify_single_graph_bound(&l.graph, &l.x, &model, p_s, eta, args.trials, seed)?;
            write_trial_csv(&csv, &report.records)?;
            write_json(&json, &report)?;
            report.check_invariants()
        }
        Check::Theorem2 => {
            let config = l.config.mechanism(l.graph.node_count())?;
            let report =
                verify_consensus_bound(&l.graph, &l.x, &model, &config, eta, args.trials, args.released_only)?;
            let mut writer = csv::Writer::from_writer(Vec::new());
            for record in &report.records {
                writer.serialize(record)?;
            }
            let body = writer.into_inner().map_err(|e| Error::Io(e.into_error()))?;
            let mut text = format!("# schema={}\n", dpgcn::harness::SCHEMA).into_bytes();
            text.extend(body);
            std::fs::write(&csv, text)?;
            write_json(&json, &report)
        }
    }
}

fn audit(args: &AuditArgs) -> Result<(), Error> {
    let l = load(&args.input, &args.params)?;
    let model = l.config.model()?;
    let config = l.config.mechanism(l.graph.node_count())?;
    let edge = args.edge;
    let report = audit_asamp(&l.graph, &l.x, &model, &config, args.trials, edge)?;
    emit(&report, args.out.as_deref())
}

fn parse_pair(s: &str) -> Result<(usize, usize), String> {
    let (u, v) = s.split_once(',').ok_or_else(|| format!("expected u,v, got {s:?}"))?;
    let u = u.trim().parse().map_err(|e| format!("{u:?}: {e}"))?;
    let v = v.trim().parse().map_err(|e| format!("{v:?}: {e}"))?;
    Ok((u, v))
}

fn exit_code(err: &Error) -> u8 {
    match err {
        Error::Invariant(_) => 2,
        _ => 1,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Gen(args) => gen(args),
        Command::Run(args) => run(args),
        Command::Bound(args) => theory(&args.run, &args.grid),
        Command::Feasible(args) => theory(args, &[]),
        Command::Verify(args) => verify(args),
        Command::Audit(args) => audit(args),
        Command::Experiment(args) => dpgcn::harness::run_experiment(&args.file, &args.out).map(|_| ()),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(exit_code(&err))
        }
    }
}
