use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use ogfm_core::commands::{run, Command, RunConfig};

/// Overlapping group plus fused lasso for multivariate-response regression.
#[derive(Parser)]
#[command(name = "ogfm", version)]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Fit one (lambda, alpha) and write coefficients.csv and fit_summary.txt.
    Fit(Opts),
    /// Cross-validate over the lambda and alpha grids; write cv_table.csv and the refit at the best point.
    Cv(Opts),
    /// Write full regularization paths to path_long.csv, flagging the CV-best lambda per alpha.
    Path(Opts),
    /// Run a simulation scenario file and write simulation.csv.
    Simulate(Opts),
}

#[derive(Args)]
struct Opts {
    /// Predictor matrix (n x p), dense CSV/whitespace or %%sparse triplets.
    #[arg(long)]
    x: Option<PathBuf>,
    /// Response matrix (n x K).
    #[arg(long)]
    y: Option<PathBuf>,
    /// Outcome group specification; defaults to the all-outcomes and singleton levels only.
    #[arg(long)]
    groups: Option<PathBuf>,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long, default_value_t = 0.0)]
    alpha: f64,
    /// Use adaptive weights.
    #[arg(long)]
    adaptive: bool,
    #[arg(long, default_value_t = 1.0)]
    gamma1: f64,
    #[arg(long, default_value_t = 1.0)]
    gamma2: f64,
    #[arg(long, default_value_t = 50)]
    nlambda: usize,
    #[arg(long)]
    lambda_min_ratio: Option<f64>,
    /// Comma-separated alpha grid.
    #[arg(long, value_delimiter = ',', default_values_t = ogfm_core::path::DEFAULT_ALPHAS)]
    alphas: Vec<f64>,
    #[arg(long, default_value_t = 10)]
    kfolds: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Worker threads; 0 uses every core.
    #[arg(long, env = "OGFM_THREADS", default_value_t = 0)]
    threads: usize,
    /// Output directory.
    #[arg(long, default_value = ".")]
    out: PathBuf,
    /// Center X without scaling it to unit variance.
    #[arg(long)]
    no_standardize: bool,
    /// Scenario file (simulate).
    #[arg(long)]
    scenario: Option<PathBuf>,
    /// Record wall time per method (simulate); makes output run-dependent.
    #[arg(long)]
    record_time: bool,
    #[arg(long, default_value_t = 5000)]
    max_iter: usize,
}

impl Opts {
    fn into_config(self, command: Command) -> RunConfig {
        let mut cfg = RunConfig::new(command);
        cfg.x = self.x;
        cfg.y = self.y;
        cfg.groups = self.groups;
        cfg.lambda = self.lambda;
        cfg.alpha = self.alpha;
        cfg.adaptive = self.adaptive;
        cfg.gamma1 = self.gamma1;
        cfg.gamma2 = self.gamma2;
        cfg.n_lambda = self.nlambda;
        cfg.lambda_min_ratio = self.lambda_min_ratio;
        cfg.alphas = self.alphas;
        cfg.kfolds = self.kfolds;
        cfg.seed = self.seed;
        cfg.threads = self.threads;
        cfg.out = self.out;
        cfg.standardize = !self.no_standardize;
        cfg.scenario = self.scenario;
        cfg.record_time = self.record_time;
        cfg.solver.max_iter = self.max_iter;
        cfg
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let cfg = match cli.command {
        Cmd::Fit(o) => o.into_config(Command::Fit),
        Cmd::Cv(o) => o.into_config(Command::Cv),
        Cmd::Path(o) => o.into_config(Command::Path),
        Cmd::Simulate(o) => o.into_config(Command::Simulate),
    };
    match run(&cfg) {
        Ok(files) => {
            for f in files {
                println!("{}", f.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("ogfm {}: {e}", cfg.command.name());
            ExitCode::FAILURE
        }
    }
}
