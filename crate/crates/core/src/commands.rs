//! The fit, cv, path and simulate commands: read inputs, run, write tables.

use std::fs;
use std::path::{Path, PathBuf};

use crate::cv::{cross_validate, refit, CVResult, CvOptions};
use crate::data::{ProblemData, Standardization};
use crate::error::{Error, Result};
use crate::exec::{with_threads, Execution};
use crate::io::{coefficients_csv, csv_table, fmt_f64, parse_groups, parse_matrix, parse_scenario, write_atomic};
use crate::path::{fit_grid, PathSpec, DEFAULT_ALPHAS};
use crate::penalty::{PenaltyConfig, WeightScheme};
use crate::sim::{run_scenario_with, Method, SimOptions, SimRecord};
use crate::solver::{FitContext, FitResult, SolverOptions};
use crate::structure::OutcomeGrouping;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Command {
    Fit,
    Cv,
    Path,
    Simulate,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Fit => "fit",
            Command::Cv => "cv",
            Command::Path => "path",
            Command::Simulate => "simulate",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub command: Command,
    pub x: Option<PathBuf>,
    pub y: Option<PathBuf>,
    pub groups: Option<PathBuf>,
    pub lambda: Option<f64>,
    pub alpha: f64,
    pub adaptive: bool,
    pub gamma1: f64,
    pub gamma2: f64,
    pub n_lambda: usize,
    pub lambda_min_ratio: Option<f64>,
    pub alphas: Vec<f64>,
    pub kfolds: usize,
    pub seed: u64,
    /// 0 = all cores.
    pub threads: usize,
    pub out: PathBuf,
    pub standardize: bool,
    pub scenario: Option<PathBuf>,
    /// Fill the simulate table's seconds column instead of writing NA.
    pub record_time: bool,
    pub solver: SolverOptions,
}

impl RunConfig {
    pub fn new(command: Command) -> Self {
        RunConfig {
            command,
            x: None,
            y: None,
            groups: None,
            lambda: None,
            alpha: 0.0,
            adaptive: false,
            gamma1: 1.0,
            gamma2: 1.0,
            n_lambda: PathSpec::default().n_lambda,
            lambda_min_ratio: None,
            alphas: DEFAULT_ALPHAS.to_vec(),
            kfolds: 10,
            seed: 1,
            threads: 0,
            out: PathBuf::from("."),
            standardize: true,
            scenario: None,
            record_time: false,
            solver: SolverOptions::default(),
        }
    }

    /// Checks the flags each command needs before any work starts.
    pub fn validate(&self) -> Result<()> {
        let missing = |flag: &str| {
            Err(Error::InvalidArgument(format!(
                "{} requires {flag}",
                self.command.name()
            )))
        };
        match self.command {
            Command::Simulate => {
                if self.scenario.is_none() {
                    return missing("--scenario");
                }
            }
            _ => {
                if self.x.is_none() {
                    return missing("--x");
                }
                if self.y.is_none() {
                    return missing("--y");
                }
                if self.command == Command::Fit && self.lambda.is_none() {
                    return missing("--lambda");
                }
            }
        }
        if !(self.gamma1 > 0.0 && self.gamma2 > 0.0) {
            return Err(Error::InvalidArgument("--gamma1 and --gamma2 must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(Error::InvalidArgument(format!("--alpha {} is not in [0, 1]", self.alpha)));
        }
        self.path_spec().validate()?;
        self.solver.validate()
    }

    pub fn path_spec(&self) -> PathSpec {
        PathSpec {
            n_lambda: self.n_lambda,
            lambda_min_ratio: self.lambda_min_ratio,
            alphas: self.alphas.clone(),
            lambda_max: None,
        }
    }

    pub fn weight_scheme(&self) -> WeightScheme {
        if self.adaptive {
            WeightScheme::adaptive(self.gamma1, self.gamma2)
        } else {
            WeightScheme::NonAdaptive
        }
    }

    fn cv_options(&self) -> CvOptions {
        CvOptions {
            kfolds: self.kfolds,
            seed: self.seed,
            weight_scheme: self.weight_scheme(),
            ..CvOptions::default()
        }
    }
}

/// Output files written so far; removed again if the command fails.
struct Outputs {
    dir: PathBuf,
    written: Vec<PathBuf>,
}

impl Outputs {
    fn new(dir: &Path) -> Result<Self> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        Ok(Outputs {
            dir: dir.to_path_buf(),
            written: Vec::new(),
        })
    }

    fn write(&mut self, name: &str, contents: &str) -> Result<()> {
        let path = self.dir.join(name);
        write_atomic(&path, contents)?;
        self.written.push(path);
        Ok(())
    }

    fn discard(self) {
        for p in self.written {
            let _ = fs::remove_file(p);
        }
    }
}

/// Runs `cfg` and returns the files it wrote. Nothing is left behind on error.
pub fn run(cfg: &RunConfig) -> Result<Vec<PathBuf>> {
    cfg.validate()?;
    let mut out = Outputs::new(&cfg.out)?;
    let result = with_threads(cfg.threads, || match cfg.command {
        Command::Fit => cmd_fit_impl(cfg, &mut out),
        Command::Cv => cmd_cv_impl(cfg, &mut out),
        Command::Path => cmd_path_impl(cfg, &mut out),
        Command::Simulate => cmd_simulate_impl(cfg, &mut out),
    })
    .and_then(|r| r);
    match result {
        Ok(()) => Ok(out.written),
        Err(e) => {
            out.discard();
            Err(e)
        }
    }
}

fn load(cfg: &RunConfig) -> Result<(ProblemData, OutcomeGrouping)> {
    let x = parse_matrix(cfg.x.as_ref().expect("validated"))?;
    let y = parse_matrix(cfg.y.as_ref().expect("validated"))?.to_dense();
    let standardization = if cfg.standardize {
        Standardization::default()
    } else {
        Standardization::center_only()
    };
    let data = ProblemData::with_standardization(x, y, standardization)?;
    let grouping = match &cfg.groups {
        Some(path) => parse_groups(path, data.k())?,
        None => OutcomeGrouping::build(data.k(), &[], None)?,
    };
    Ok((data, grouping))
}

fn summary(fit: &FitResult) -> String {
    let mut s = String::new();
    let mut line = |k: &str, v: String| s.push_str(&format!("{k}: {v}\n"));
    line("lambda", fmt_f64(fit.lambda));
    line("alpha", fmt_f64(fit.alpha));
    line("objective", fmt_f64(fit.objective));
    line("iterations", fit.iterations.to_string());
    line("converged", fit.converged.to_string());
    line("polished", fit.polished.to_string());
    line("support_size", fit.support.len().to_string());
    line("fused_pairs", fit.fused.len().to_string());
    for w in &fit.warnings {
        line("warning", w.clone());
    }
    s
}

pub fn cmd_fit(cfg: &RunConfig) -> Result<Vec<PathBuf>> {
    run(&RunConfig {
        command: Command::Fit,
        ..cfg.clone()
    })
}

pub fn cmd_cv(cfg: &RunConfig) -> Result<Vec<PathBuf>> {
    run(&RunConfig {
        command: Command::Cv,
        ..cfg.clone()
    })
}

pub fn cmd_path(cfg: &RunConfig) -> Result<Vec<PathBuf>> {
    run(&RunConfig {
        command: Command::Path,
        ..cfg.clone()
    })
}

pub fn cmd_simulate(cfg: &RunConfig) -> Result<Vec<PathBuf>> {
    run(&RunConfig {
        command: Command::Simulate,
        ..cfg.clone()
    })
}

fn cmd_fit_impl(cfg: &RunConfig, out: &mut Outputs) -> Result<()> {
    let (data, grouping) = load(cfg)?;
    let weights = cfg.weight_scheme().weights(&data, &grouping, crate::penalty::DEFAULT_WEIGHT_CAP)?;
    let pcfg = PenaltyConfig::new(cfg.lambda.expect("validated"), cfg.alpha, weights)?;
    let fit = FitContext::new(&data, &grouping)?.fit(&pcfg, &cfg.solver, None)?;
    out.write("coefficients.csv", &coefficients_csv(&fit.coef.beta, &fit.coef.intercept))?;
    out.write("fit_summary.txt", &summary(&fit))
}

fn cv_table(res: &CVResult) -> String {
    let rows = (0..res.alphas.len()).flat_map(|a| {
        (0..res.lambdas[a].len()).map(move |l| {
            vec![
                fmt_f64(res.lambdas[a][l]),
                fmt_f64(res.alphas[a]),
                fmt_f64(res.mean_mse[a][l]),
                fmt_f64(res.se_mse[a][l]),
            ]
        })
    });
    csv_table(&["lambda", "alpha", "mean_mse", "se_mse"], rows)
}

fn cmd_cv_impl(cfg: &RunConfig, out: &mut Outputs) -> Result<()> {
    let (data, grouping) = load(cfg)?;
    let cv = cfg.cv_options();
    let res = cross_validate(&data, &grouping, &cfg.path_spec(), &cfg.solver, &cv)?;
    let fit = refit(&data, &grouping, &res, res.best, &cfg.solver, &cv)?;
    out.write("cv_table.csv", &cv_table(&res))?;
    out.write("coefficients.csv", &coefficients_csv(&fit.coef.beta, &fit.coef.intercept))?;
    let mut s = summary(&fit);
    s.push_str(&format!(
        "best_1se_lambda: {}\nbest_1se_alpha: {}\n",
        fmt_f64(res.lambda(res.best_1se)),
        fmt_f64(res.alpha(res.best_1se))
    ));
    out.write("fit_summary.txt", &s)
}

/// Full-data paths on the cross-validation grids; `cv_min` flags, for each
/// alpha, the lambda with the smallest CV error.
fn cmd_path_impl(cfg: &RunConfig, out: &mut Outputs) -> Result<()> {
    let (data, grouping) = load(cfg)?;
    let cv = cfg.cv_options();
    let res = cross_validate(&data, &grouping, &cfg.path_spec(), &cfg.solver, &cv)?;
    let weights = cv.weight_scheme.weights(&data, &grouping, cv.weight_cap)?;
    let ctx = FitContext::new(&data, &grouping)?;
    let alpha_idx: Vec<usize> = (0..res.alphas.len()).collect();
    let paths = Execution::default().try_map(&alpha_idx, |&a| {
        let pcfg = PenaltyConfig::new(1.0, res.alphas[a], weights.clone())?;
        fit_grid(&ctx, &pcfg, &res.lambdas[a], &cfg.solver)
    })?;
    let (p, k) = (data.p(), data.k());
    let mut rows = Vec::with_capacity(paths.iter().map(Vec::len).sum::<usize>() * p * k);
    for (a, fits) in paths.iter().enumerate() {
        let min_l = (0..res.mean_mse[a].len())
            .reduce(|b, l| if res.mean_mse[a][l] < res.mean_mse[a][b] { l } else { b })
            .unwrap_or(0);
        for (l, fit) in fits.iter().enumerate() {
            let flag = if l == min_l { "1" } else { "0" };
            for j in 0..p {
                for o in 0..k {
                    rows.push(vec![
                        fmt_f64(fit.lambda),
                        fmt_f64(fit.alpha),
                        (j + 1).to_string(),
                        (o + 1).to_string(),
                        fmt_f64(fit.coef.beta[(j, o)]),
                        flag.to_string(),
                    ]);
                }
            }
        }
    }
    out.write(
        "path_long.csv",
        &csv_table(&["lambda", "alpha", "variable", "outcome", "coefficient", "cv_min"], rows),
    )
}

pub fn simulation_table(records: &[SimRecord]) -> String {
    let rows = records.iter().map(|r| {
        vec![
            (r.rep + 1).to_string(),
            r.method.to_string(),
            fmt_f64(r.rmse),
            fmt_f64(r.model_error),
            fmt_f64(r.balanced_accuracy),
            r.seconds.map_or_else(|| "NA".to_string(), fmt_f64),
        ]
    });
    csv_table(&["rep", "method", "rmse", "model_error", "balanced_accuracy", "seconds"], rows)
}

fn cmd_simulate_impl(cfg: &RunConfig, out: &mut Outputs) -> Result<()> {
    let file = parse_scenario(cfg.scenario.as_ref().expect("validated"))?;
    let opts = SimOptions {
        path: cfg.path_spec(),
        kfolds: cfg.kfolds,
        solver: cfg.solver.clone(),
        gamma1: cfg.gamma1,
        gamma2: cfg.gamma2,
        execution: Execution::default(),
        record_time: cfg.record_time,
    };
    let methods = file.methods.clone().unwrap_or_else(|| Method::ALL.to_vec());
    let records = run_scenario_with(&file.scenario, &methods, file.reps, file.seed, &opts)?;
    out.write("simulation.csv", &simulation_table(&records))
}
