//! Command-line interface. Exit codes: 0 success, 1 input error, 2 numerical failure;
//! errors go to stderr as one JSON line.

use std::ffi::OsString;
use std::fs::{self, File};
use std::io::{self, BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::estimators::{wald_ci, BootstrapConfig, Estimator, EstimatorResult, Evaluator, Interval};
use crate::history::CaptureHistory;
use crate::rb::{diagnose, rb_exact, rb_mcmc, RbResult};
use crate::rng::{derive_seed, purpose, substream};
use crate::samplers::{ChainOptions, MhAcceptance};
use crate::simulate::{draw_nonempty, PopulationConfig};
use crate::study::{run_study, StudyConfig};
use crate::suffstat::Model;

#[derive(Debug, Parser)]
#[command(name = "recap-rb", version, about = "Rao-Blackwellized closed-population size estimation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Draw a capture history from a population config and write it as CSV.
    Simulate(SimulateArgs),
    /// Preliminary estimates (with variances and 95% intervals) as JSON.
    Estimate(EstimateArgs),
    /// Rao-Blackwellized estimates as JSON.
    Rb(RbArgs),
    /// Run a replicated simulation study.
    Study(StudyArgs),
    /// Gelman-Rubin diagnostics over several chains as JSON.
    Diagnose(DiagnoseArgs),
}

#[derive(Debug, Args)]
struct SimulateArgs {
    /// Population config JSON.
    #[arg(long, conflicts_with = "study", required_unless_present = "study")]
    config: Option<PathBuf>,
    /// Use the population of a bundled study config (study1..study5).
    #[arg(long)]
    study: Option<String>,
    /// Master seed.
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Output file; stdout when omitted.
    #[arg(long, short)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct EstimatorArgs {
    /// Comma-separated estimator ids: lp, m0, chao, mb, mt, sc.
    #[arg(long, default_value = "lp,m0,chao,mb,mt,sc")]
    estimators: String,
    /// One-based occasion pair for `lp`.
    #[arg(long, value_delimiter = ',', num_args = 2, default_values_t = [1, 2])]
    lp_occasions: Vec<usize>,
    /// Upper bound on bootstrap resamples.
    #[arg(long, default_value_t = BootstrapConfig::default().b_max)]
    b_max: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
}

impl EstimatorArgs {
    fn estimators(&self) -> Result<Vec<Estimator>> {
        let (a, b) = (self.lp_occasions[0], self.lp_occasions[1]);
        if a == 0 || b == 0 {
            return Err(Error::Input("--lp-occasions are one-based".into()));
        }
        let list = Estimator::parse_list(&self.estimators)?;
        if list.is_empty() {
            return Err(Error::Input("no estimators given".into()));
        }
        Ok(list
            .into_iter()
            .map(|e| match e {
                Estimator::LincolnPetersen { .. } => Estimator::LincolnPetersen { first: a - 1, second: b - 1 },
                other => other,
            })
            .collect())
    }

    fn bootstrap(&self) -> BootstrapConfig {
        BootstrapConfig { b_max: self.b_max, ..BootstrapConfig::default() }
    }
}

#[derive(Debug, Args)]
struct EstimateArgs {
    /// History CSV (`-` for stdin).
    history: PathBuf,
    #[command(flatten)]
    est: EstimatorArgs,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum AcceptanceArg {
    Uniform,
    OutcomeRatio,
}

#[derive(Debug, Args)]
struct ChainArgs {
    /// Capture model whose sufficient statistic is conditioned on: m0, mh, mb or mt.
    #[arg(long, value_parser = parse_model)]
    model: Model,
    /// Chain steps per chain.
    #[arg(long, default_value_t = 500)]
    chain_length: usize,
    /// Proposal-ratio correction for Mt swap moves.
    #[arg(long)]
    hastings_correction: bool,
    /// Mh acceptance rule.
    #[arg(long, value_enum, default_value = "uniform")]
    mh_acceptance: AcceptanceArg,
}

impl ChainArgs {
    fn options(&self) -> ChainOptions {
        ChainOptions {
            hastings_correction: self.hastings_correction,
            mh_acceptance: match self.mh_acceptance {
                AcceptanceArg::Uniform => MhAcceptance::Uniform,
                AcceptanceArg::OutcomeRatio => MhAcceptance::OutcomeRatio,
            },
        }
    }
}

fn parse_model(s: &str) -> std::result::Result<Model, String> {
    s.parse::<Model>().map_err(|e| e.to_string())
}

#[derive(Debug, Args)]
struct RbArgs {
    /// History CSV (`-` for stdin).
    history: PathBuf,
    #[command(flatten)]
    chain: ChainArgs,
    #[command(flatten)]
    est: EstimatorArgs,
    /// Average over every consistent reordering instead of running a chain.
    #[arg(long)]
    exact: bool,
    /// Write the per-iteration trace CSV here.
    #[arg(long)]
    trace: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct StudyArgs {
    /// Study config JSON.
    #[arg(conflicts_with = "bundled", required_unless_present = "bundled")]
    config: Option<PathBuf>,
    /// Bundled config name (study1..study5).
    #[arg(long)]
    bundled: Option<String>,
    /// Override the config's number of runs.
    #[arg(long)]
    runs: Option<usize>,
    /// Override the config's master seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Override the config's chain length.
    #[arg(long)]
    chain_length: Option<usize>,
    /// Also compute Gelman-Rubin statistics per run.
    #[arg(long)]
    gelman_rubin: bool,
    /// Directory for report.csv, report.json, raw.csv, scatter.csv and
    /// correlations.csv; without it the summary CSV goes to stdout.
    #[arg(long)]
    out_dir: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct DiagnoseArgs {
    /// History CSV (`-` for stdin).
    history: PathBuf,
    #[command(flatten)]
    chain: ChainArgs,
    #[command(flatten)]
    est: EstimatorArgs,
    /// Number of independent chains.
    #[arg(long, default_value_t = 3)]
    chains: usize,
}

#[derive(Serialize)]
struct EstimateRow {
    #[serde(flatten)]
    result: EstimatorResult,
    ci95: Option<Interval>,
}

#[derive(Serialize)]
struct EstimateReport {
    observed: usize,
    occasions: usize,
    estimates: Vec<EstimateRow>,
}

#[derive(Serialize)]
struct RbReport {
    model: Model,
    method: &'static str,
    chain_length: Option<usize>,
    acceptance_rate: Option<f64>,
    observed: usize,
    preliminary: Vec<EstimatorResult>,
    rb: Vec<RbRow>,
}

#[derive(Serialize)]
struct RbRow {
    #[serde(flatten)]
    result: RbResult,
    ci95: Option<Interval>,
}

#[derive(Serialize)]
struct ErrorLine<'a> {
    error: &'a str,
    message: String,
}

fn read_history(path: &Path) -> Result<CaptureHistory> {
    if path.as_os_str() == "-" {
        let mut text = String::new();
        io::stdin().read_to_string(&mut text)?;
        CaptureHistory::from_csv_str(&text)
    } else {
        let file = File::open(path)
            .map_err(|e| Error::Input(format!("cannot open {}: {e}", path.display())))?;
        CaptureHistory::read_csv(BufReader::new(file))
    }
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::Input(format!("cannot read {}: {e}", path.display())))
}

fn print_json<T: Serialize>(value: &T) -> Result<()> {
    let mut out = io::stdout().lock();
    serde_json::to_writer_pretty(&mut out, value)?;
    writeln!(out)?;
    Ok(())
}

fn simulate(args: SimulateArgs) -> Result<()> {
    let population = match (&args.config, &args.study) {
        (Some(path), _) => {
            let cfg: PopulationConfig = serde_json::from_str(&read_text(path)?)
                .map_err(|e| Error::Input(format!("population config: {e}")))?;
            cfg.validate()?;
            cfg
        }
        (None, Some(name)) => StudyConfig::bundled(name)?.population,
        (None, None) => unreachable!("clap requires one of --config/--study"),
    };
    let (h, _) = draw_nonempty(&population, &mut substream(args.seed, &[purpose::HISTORY]))?;
    match args.out {
        Some(path) => h.write_csv(BufWriter::new(File::create(path)?)),
        None => h.write_csv(io::stdout().lock()),
    }
}

fn estimate(args: EstimateArgs) -> Result<()> {
    let h = read_history(&args.history)?;
    let mut evaluator = Evaluator::new(
        args.est.estimators()?,
        args.est.bootstrap(),
        derive_seed(args.est.seed, &[purpose::CHAIN_VARIANCE]),
    );
    let observed = h.n_units() as f64;
    let estimates = evaluator
        .evaluate_all(&h)
        .into_iter()
        .map(|result| EstimateRow { ci95: wald_ci(&result, 0.95, observed), result })
        .collect();
    print_json(&EstimateReport { observed: h.n_units(), occasions: h.occasions(), estimates })
}

fn rb(args: RbArgs) -> Result<()> {
    let h = read_history(&args.history)?;
    let model = args.chain.model;
    let mut evaluator = Evaluator::new(
        args.est.estimators()?,
        args.est.bootstrap(),
        derive_seed(args.est.seed, &[purpose::CHAIN_VARIANCE]),
    );
    let preliminary = evaluator.evaluate_all(&h);
    let (results, chain_length, acceptance_rate) = if args.exact {
        (rb_exact(&mut evaluator, &h, model)?, None, None)
    } else {
        let run = rb_mcmc(
            &mut evaluator,
            &h,
            model,
            args.chain.chain_length,
            args.chain.options(),
            &mut substream(args.est.seed, &[purpose::CHAIN]),
        )?;
        if let Some(path) = &args.trace {
            run.trace.write_csv(BufWriter::new(File::create(path)?))?;
        }
        (run.results, Some(args.chain.chain_length), Some(run.acceptance_rate))
    };
    let observed = h.n_units() as f64;
    let rb = results
        .into_iter()
        .map(|result| {
            let as_estimate = EstimatorResult::new(result.estimator, result.point, result.var);
            let ci95 = result.is_valid().then(|| wald_ci(&as_estimate, 0.95, observed)).flatten();
            RbRow { result, ci95 }
        })
        .collect();
    print_json(&RbReport {
        model,
        method: if args.exact { "exact" } else { "mcmc" },
        chain_length,
        acceptance_rate,
        observed: h.n_units(),
        preliminary,
        rb,
    })
}

fn study(args: StudyArgs) -> Result<()> {
    let mut cfg = match (&args.config, &args.bundled) {
        (Some(path), _) => StudyConfig::from_json(&read_text(path)?)?,
        (None, Some(name)) => StudyConfig::bundled(name)?,
        (None, None) => unreachable!("clap requires a config or --bundled"),
    };
    if let Some(runs) = args.runs {
        cfg.runs = runs;
    }
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    if let Some(m) = args.chain_length {
        cfg.chain_length = m;
    }
    if args.gelman_rubin {
        cfg.gr_diagnostics.enabled = true;
    }
    cfg.validate()?;
    let report = run_study(&cfg)?;
    match args.out_dir {
        None => report.write_metrics_csv(io::stdout().lock()),
        Some(dir) => {
            fs::create_dir_all(&dir)?;
            let create = |name: &str| -> Result<BufWriter<File>> { Ok(BufWriter::new(File::create(dir.join(name))?)) };
            report.write_metrics_csv(create("report.csv")?)?;
            report.write_raw_csv(create("raw.csv")?)?;
            report.write_scatter_csv(create("scatter.csv")?)?;
            report.write_correlation_csv(create("correlations.csv")?)?;
            let mut json = create("report.json")?;
            serde_json::to_writer_pretty(&mut json, &report)?;
            writeln!(json)?;
            json.flush()?;
            Ok(())
        }
    }
}

fn diagnose_cmd(args: DiagnoseArgs) -> Result<()> {
    let h = read_history(&args.history)?;
    let mut evaluator = Evaluator::points_only(args.est.estimators()?);
    let report = diagnose(
        &mut evaluator,
        &h,
        args.chain.model,
        args.chains,
        args.chain.chain_length,
        args.chain.options(),
        derive_seed(args.est.seed, &[purpose::DIAGNOSTIC_SEEDS]),
    )?;
    print_json(&report)
}

fn report_error(kind: &str, message: String) {
    let line = serde_json::to_string(&ErrorLine { error: kind, message: message.replace('\n', " ") })
        .unwrap_or_else(|_| format!("{{\"error\":\"{kind}\"}}"));
    eprintln!("{line}");
}

/// Parses `args` (including the program name) and runs the command; returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            print!("{e}");
            return 0;
        }
        Err(e) => {
            let message = e.to_string();
            let first = message.lines().next().unwrap_or("invalid arguments").trim_start_matches("error: ");
            report_error("input", first.to_string());
            return 1;
        }
    };
    let outcome = match cli.command {
        Command::Simulate(a) => simulate(a),
        Command::Estimate(a) => estimate(a),
        Command::Rb(a) => rb(a),
        Command::Study(a) => study(a),
        Command::Diagnose(a) => diagnose_cmd(a),
    };
    match outcome {
        Ok(()) => 0,
        Err(Error::Io(e)) if e.kind() == io::ErrorKind::BrokenPipe => 0,
        Err(e) if e.is_input() => {
            report_error("input", e.to_string());
            1
        }
        Err(e) => {
            report_error("numerical", e.to_string());
            2
        }
    }
}
