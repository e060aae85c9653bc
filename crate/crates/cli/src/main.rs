use std::path::PathBuf;
use std::process::ExitCode;
use std::str::FromStr;

use clap::{Args, Parser, Subcommand};
use serde_json::json;
use tukey_em::harness::{emit_report, emit_sweep, run_experiment, sweep_heuristic};
use tukey_em::{
    DataSource, Error, ExperimentConfig, Method, PrivacyBudget, ReportFormat, SyntheticSpec,
};

/// Differentially private linear regression via approximate Tukey depth.
#[derive(Debug, Parser)]
#[command(name = "tukey-em", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run one mechanism invocation and print the released coefficients.
    Fit(FitArgs),
    /// Run many trials and write a report.
    Experiment(ExperimentArgs),
    /// Tabulate the PTR distance bound over a grid of dimensions and model counts.
    Sweep(SweepArgs),
}

#[derive(Debug, Args)]
struct DataArgs {
    /// Headered numeric CSV file.
    #[arg(
        long,
        conflicts_with = "synthetic",
        required_unless_present = "synthetic"
    )]
    input: Option<PathBuf>,
    /// Label column name (or zero-based index) in the CSV.
    #[arg(long, default_value = "y")]
    label_col: String,
    /// Generate synthetic data instead: rows,features,noise_sigma.
    #[arg(long, value_name = "N,D,SIGMA", value_parser = parse_synthetic)]
    synthetic: Option<SyntheticSpec>,
    /// Do not append a constant intercept column.
    #[arg(long)]
    no_intercept: bool,
}

impl DataArgs {
    fn source(&self) -> DataSource {
        match (&self.input, &self.synthetic) {
            (Some(path), _) => DataSource::Csv {
                path: path.clone(),
                label_column: self.label_col.clone(),
            },
            (None, Some(spec)) => DataSource::Synthetic(*spec),
            (None, None) => unreachable!("clap requires one source"),
        }
    }
}

#[derive(Debug, Args)]
struct BudgetArgs {
    /// Total privacy parameter epsilon (default ln 3).
    #[arg(long, default_value_t = 3f64.ln())]
    epsilon: f64,
    #[arg(long, default_value_t = 1e-5)]
    delta: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Debug, Args)]
struct FitArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    budget: BudgetArgs,
    #[arg(long, default_value = "tukey_em", value_parser = Method::from_str)]
    method: Method,
    /// Number of models (default: size heuristic).
    #[arg(long)]
    models: Option<usize>,
}

#[derive(Debug, Args)]
struct ExperimentArgs {
    #[command(flatten)]
    fit: FitArgs,
    #[arg(long, default_value_t = 10)]
    trials: usize,
    #[arg(long, default_value = "json", value_parser = ReportFormat::from_str)]
    format: ReportFormat,
    /// Also write per-coefficient histograms of the first trial's models.
    #[arg(long)]
    histograms: bool,
    #[arg(long, default_value = "results")]
    out_dir: PathBuf,
}

#[derive(Debug, Args)]
struct SweepArgs {
    #[command(flatten)]
    budget: BudgetArgs,
    /// Feature dimensions, comma separated.
    #[arg(
        long,
        value_delimiter = ',',
        default_value = "5,10,15,20,25,30,35,40,45,50"
    )]
    dims: Vec<usize>,
    /// Model counts, comma separated.
    #[arg(
        long,
        value_delimiter = ',',
        default_value = "250,500,750,1000,1250,1500,1750,2000"
    )]
    models: Vec<usize>,
    #[arg(long, default_value = "csv", value_parser = ReportFormat::from_str)]
    format: ReportFormat,
    #[arg(long, default_value = "results")]
    out_dir: PathBuf,
}

fn parse_synthetic(s: &str) -> Result<SyntheticSpec, String> {
    let parts: Vec<&str> = s.split(',').map(str::trim).collect();
    let [n, d, sigma] = parts.as_slice() else {
        return Err("expected N,D,SIGMA".into());
    };
    let n = n.parse().map_err(|e| format!("rows: {e}"))?;
    let d = d.parse().map_err(|e| format!("features: {e}"))?;
    let sigma = sigma.parse().map_err(|e| format!("sigma: {e}"))?;
    SyntheticSpec::new(n, d, sigma).map_err(|e| e.to_string())
}

fn config(args: &FitArgs, trials: usize) -> Result<ExperimentConfig, Error> {
    let budget = PrivacyBudget::new(args.budget.epsilon, args.budget.delta)?;
    let mut config = ExperimentConfig::new(args.data.source(), args.method, budget);
    config.models = args.models;
    config.seed = args.budget.seed;
    config.add_intercept = !args.data.no_intercept;
    config.trials = trials;
    Ok(config)
}

fn print_json(value: &serde_json::Value) {
    println!(
        "{}",
        serde_json::to_string_pretty(value).expect("serializable")
    );
}

fn run(cli: Cli) -> Result<(), Error> {
    match cli.command {
        Command::Fit(args) => {
            let report = run_experiment(&config(&args, 1)?)?;
            let trial = &report.trials[0];
            if let Some(err) = &trial.error {
                return Err(Error::Parameter(err.clone()));
            }
            print_json(&json!({
                "method": report.config.method,
                "n": report.n,
                "d": report.d,
                "m": report.m,
                "outcome": trial.outcome,
                "coefficients": trial.coefficients,
                "r_squared": trial.r_squared,
            }));
        }
        Command::Experiment(args) => {
            let mut config = config(&args.fit, args.trials)?;
            if args.histograms {
                if config.method != Method::TukeyEm {
                    return Err(Error::Parameter(
                        "--histograms needs --method tukey_em".into(),
                    ));
                }
                config.collect_models = true;
            }
            let report = run_experiment(&config)?;
            let files = emit_report(&report, &args.out_dir, args.format, args.histograms)?;
            print_json(&json!({
                "summary": report.summary,
                "files": files,
            }));
        }
        Command::Sweep(args) => {
            let budget = PrivacyBudget::new(args.budget.epsilon, args.budget.delta)?;
            let rows = sweep_heuristic(&args.dims, &args.models, budget, args.budget.seed)?;
            let path = emit_sweep(&rows, &args.out_dir, args.format)?;
            println!(
                "{:>4} {:>6} {:>8} {:>7} {:>9} pass",
                "d", "m", "n", "bound", "threshold"
            );
            for r in &rows {
                println!(
                    "{:>4} {:>6} {:>8} {:>7} {:>9.3} {}",
                    r.d,
                    r.m,
                    r.n,
                    r.bound,
                    r.threshold,
                    if r.passes { "yes" } else { "no" }
                );
            }
            println!("wrote {}", path.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                // --help / --version
                ExitCode::SUCCESS
            };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::Ingestion { .. } | Error::Io { .. } => ExitCode::from(2),
                _ => ExitCode::from(1),
            }
        }
    }
}
