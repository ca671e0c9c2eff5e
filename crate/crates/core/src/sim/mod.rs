//! Simulation study: data generation, evaluation metrics and replicated
//! method comparisons.
//!
//! Replication `r` of a run seeded with `s` draws from
//! `ChaCha8Rng::seed_from_u64(s)` on stream `r`, so any single replication
//! can be regenerated on its own and results do not depend on thread count.

pub mod generate;
pub mod metrics;

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub use generate::{
    ar1_covariance, gen_beta0, gen_gaussian_data, gen_ordinal_data, ordinal_level, TrueModel, EFFECT_SIZES,
    ORDINAL_CUTS,
};
pub use metrics::{avg_rmse, balanced_accuracy, model_error, validation_r2};

use crate::cv::{cross_validate, refit, CvOptions};
use crate::data::{predict, ProblemData};
use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::path::PathSpec;
use crate::penalty::WeightScheme;
use crate::solver::SolverOptions;
use crate::structure::OutcomeGrouping;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum ResponseFamily {
    #[default]
    Gaussian,
    Ordinal,
}

impl FromStr for ResponseFamily {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "gaussian" => Ok(ResponseFamily::Gaussian),
            "ordinal" => Ok(ResponseFamily::Ordinal),
            other => Err(Error::InvalidArgument(format!("unknown response family '{other}'"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SimulationScenario {
    pub n: usize,
    pub p: usize,
    pub k: usize,
    /// Outcome groups (0-based), one effect-sharing block each.
    pub groups: Vec<Vec<usize>>,
    /// Rows of the true coefficient matrix that may be nonzero; `None` means `min(p / 2, 50)`.
    pub z: Option<usize>,
    pub p_hs: f64,
    pub p_ge: f64,
    pub family: ResponseFamily,
    pub sigma_scale: f64,
    pub ar_rho_x: f64,
    pub ar_rho_eps: f64,
    pub test_size: usize,
}

impl Default for SimulationScenario {
    fn default() -> Self {
        SimulationScenario {
            n: 200,
            p: 50,
            k: 8,
            groups: vec![vec![0, 1, 2], vec![3, 4], vec![5, 6, 7]],
            z: None,
            p_hs: 0.25,
            p_ge: 0.75,
            family: ResponseFamily::Gaussian,
            sigma_scale: 4.0,
            ar_rho_x: 0.5,
            ar_rho_eps: 0.5,
            test_size: 10_000,
        }
    }
}

impl SimulationScenario {
    pub fn z_effective(&self) -> usize {
        self.z.unwrap_or((self.p / 2).min(50))
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(m));
        if self.n < 2 || self.p == 0 || self.k == 0 || self.test_size == 0 {
            return bad("n must be at least 2 and p, K, test_size positive".into());
        }
        if self.z_effective() > self.p {
            return bad(format!("z = {} exceeds p = {}", self.z_effective(), self.p));
        }
        for (name, v) in [("p_HS", self.p_hs), ("p_GE", self.p_ge)] {
            if !(0.0..=1.0).contains(&v) {
                return bad(format!("{name} = {v} is not a probability"));
            }
        }
        for (name, v) in [("ar_rho_x", self.ar_rho_x), ("ar_rho_eps", self.ar_rho_eps)] {
            if !(v.abs() < 1.0) {
                return bad(format!("{name} = {v} must lie in (-1, 1)"));
            }
        }
        if !(self.sigma_scale > 0.0 && self.sigma_scale.is_finite()) {
            return bad("sigma_scale must be positive".into());
        }
        let mut seen = vec![false; self.k];
        for g in &self.groups {
            if g.is_empty() {
                return bad("empty outcome group".into());
            }
            for &o in g {
                if o >= self.k || seen[o] {
                    return bad(format!("outcome {} is out of range or in two groups", o + 1));
                }
                seen[o] = true;
            }
        }
        if seen.iter().any(|s| !s) {
            return bad("outcome groups must partition the outcomes".into());
        }
        Ok(())
    }

    /// Training and test samples drawn from the scenario's response family.
    pub fn generate<R: rand::Rng + ?Sized>(&self, model: &TrueModel, rng: &mut R) -> Result<(ProblemData, ProblemData)> {
        match self.family {
            ResponseFamily::Gaussian => gen_gaussian_data(self, model, rng),
            ResponseFamily::Ordinal => gen_ordinal_data(self, model, rng),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum Method {
    Ogfm,
    OgfmAdaptive,
    SeparateLasso,
}

impl Method {
    pub const ALL: [Method; 3] = [Method::Ogfm, Method::OgfmAdaptive, Method::SeparateLasso];

    pub fn name(self) -> &'static str {
        match self {
            Method::Ogfm => "ogfm",
            Method::OgfmAdaptive => "ogfm_adaptive",
            Method::SeparateLasso => "separate_lasso",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s.trim())
            .ok_or_else(|| Error::InvalidArgument(format!("unknown method '{s}'")))
    }
}

/// Tuning protocol shared by every method in a run.
#[derive(Clone, Debug, PartialEq)]
pub struct SimOptions {
    /// Grid for the OGFM methods; separate lasso uses its `n_lambda` and ratio with alpha 0.
    pub path: PathSpec,
    pub kfolds: usize,
    pub solver: SolverOptions,
    pub gamma1: f64,
    pub gamma2: f64,
    /// Replications in parallel or in turn.
    pub execution: Execution,
    /// Record wall time per method; off keeps output reproducible byte for byte.
    pub record_time: bool,
}

impl Default for SimOptions {
    fn default() -> Self {
        SimOptions {
            path: PathSpec::default(),
            kfolds: 10,
            solver: SolverOptions::default(),
            gamma1: 0.5,
            gamma2: 0.5,
            execution: Execution::default(),
            record_time: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SimRecord {
    pub rep: usize,
    pub method: Method,
    pub rmse: f64,
    pub model_error: f64,
    pub balanced_accuracy: f64,
    pub seconds: Option<f64>,
}

/// The estimate a method produces on one replication.
pub struct MethodFit {
    pub beta: DMatrix<f64>,
    pub support: DMatrix<bool>,
    pub prediction: DMatrix<f64>,
}

fn fold_seed(seed: u64, rep: usize) -> u64 {
    seed ^ (rep as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

/// Tunes `method` by cross-validation on `train`, refits at the CV minimum
/// and predicts `test`.
pub fn fit_method(
    method: Method,
    sc: &SimulationScenario,
    train: &ProblemData,
    test: &ProblemData,
    opts: &SimOptions,
    cv_seed: u64,
) -> Result<MethodFit> {
    let cv = CvOptions {
        kfolds: opts.kfolds,
        seed: cv_seed,
        execution: Execution::Sequential,
        ..CvOptions::default()
    };
    match method {
        Method::Ogfm | Method::OgfmAdaptive => {
            let grouping = OutcomeGrouping::build(sc.k, std::slice::from_ref(&sc.groups), None)?;
            let cv = CvOptions {
                weight_scheme: if method == Method::Ogfm {
                    WeightScheme::NonAdaptive
                } else {
                    WeightScheme::adaptive(opts.gamma1, opts.gamma2)
                },
                ..cv
            };
            let res = cross_validate(train, &grouping, &opts.path, &opts.solver, &cv)?;
            let fit = refit(train, &grouping, &res, res.best, &opts.solver, &cv)?;
            Ok(MethodFit {
                prediction: predict(&fit.coef, test.x())?,
                support: fit.support_mask(),
                beta: fit.coef.beta,
            })
        }
        Method::SeparateLasso => {
            let grouping = OutcomeGrouping::singletons(1)?;
            let spec = PathSpec {
                alphas: vec![0.0],
                ..opts.path.clone()
            };
            let (p, k) = (train.p(), train.k());
            let mut beta = DMatrix::zeros(p, k);
            let mut support = DMatrix::from_element(p, k, false);
            let mut prediction = DMatrix::zeros(test.n(), k);
            for o in 0..k {
                let single = |d: &ProblemData| {
                    ProblemData::with_standardization(
                        d.x().clone(),
                        d.y().columns(o, 1).into_owned(),
                        d.standardization(),
                    )
                };
                let tr = single(train)?;
                let res = cross_validate(&tr, &grouping, &spec, &opts.solver, &cv)?;
                let fit = refit(&tr, &grouping, &res, res.best, &opts.solver, &cv)?;
                beta.set_column(o, &fit.coef.beta.column(0));
                support.set_column(o, &fit.support_mask().column(0));
                prediction.set_column(o, &predict(&fit.coef, test.x())?.column(0));
            }
            Ok(MethodFit {
                beta,
                support,
                prediction,
            })
        }
    }
}

/// [`run_scenario_with`] under the default tuning protocol.
pub fn run_scenario(sc: &SimulationScenario, methods: &[Method], n_reps: usize, seed: u64) -> Result<Vec<SimRecord>> {
    run_scenario_with(sc, methods, n_reps, seed, &SimOptions::default())
}

/// One record per replication and method, ordered by replication then by
/// the order of `methods`.
pub fn run_scenario_with(
    sc: &SimulationScenario,
    methods: &[Method],
    n_reps: usize,
    seed: u64,
    opts: &SimOptions,
) -> Result<Vec<SimRecord>> {
    sc.validate()?;
    let reps: Vec<usize> = (0..n_reps).collect();
    let per_rep = opts.execution.try_map(&reps, |&rep| -> Result<Vec<SimRecord>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(rep as u64);
        let model = gen_beta0(sc, &mut rng);
        let (train, test) = sc.generate(&model, &mut rng)?;
        methods
            .iter()
            .map(|&method| {
                let start = Instant::now();
                let fit = fit_method(method, sc, &train, &test, opts, fold_seed(seed, rep))?;
                let seconds = start.elapsed().as_secs_f64();
                Ok(SimRecord {
                    rep,
                    method,
                    rmse: avg_rmse(&fit.prediction, test.y())?,
                    model_error: model_error(&fit.beta, &model.beta0, &model.sigma_x)?,
                    balanced_accuracy: balanced_accuracy(&fit.support, &model.beta0),
                    seconds: opts.record_time.then_some(seconds),
                })
            })
            .collect()
    })?;
    Ok(per_rep.into_iter().flatten().collect())
}

/// Mean of `field` over the records of `method`.
pub fn mean_by(records: &[SimRecord], method: Method, field: impl Fn(&SimRecord) -> f64) -> f64 {
    let vals: Vec<f64> = records.iter().filter(|r| r.method == method).map(field).collect();
    vals.iter().sum::<f64>() / vals.len().max(1) as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> (SimulationScenario, SimOptions) {
        let sc = SimulationScenario {
            n: 40,
            p: 6,
            test_size: 200,
            ..SimulationScenario::default()
        };
        let opts = SimOptions {
            path: PathSpec {
                n_lambda: 5,
                alphas: vec![0.0, 0.1],
                ..PathSpec::default()
            },
            kfolds: 3,
            ..SimOptions::default()
        };
        (sc, opts)
    }

    #[test]
    fn zero_reps_is_empty() {
        let (sc, opts) = small();
        assert!(run_scenario_with(&sc, &Method::ALL, 0, 1, &opts).unwrap().is_empty());
    }

    #[test]
    fn deterministic_and_thread_independent() {
        let (sc, opts) = small();
        let a = run_scenario_with(&sc, &Method::ALL, 2, 11, &opts).unwrap();
        let b = run_scenario_with(
            &sc,
            &Method::ALL,
            2,
            11,
            &SimOptions {
                execution: Execution::Sequential,
                ..opts.clone()
            },
        )
        .unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 6);
        assert_eq!((a[3].rep, a[3].method), (1, Method::Ogfm));
        for r in &a {
            assert!(r.rmse.is_finite() && r.model_error >= 0.0);
            assert!((0.0..=1.0).contains(&r.balanced_accuracy));
            assert!(r.seconds.is_none());
        }
    }

    #[test]
    fn ordinal_family_runs() {
        let (mut sc, opts) = small();
        sc.family = ResponseFamily::Ordinal;
        let r = run_scenario_with(&sc, &[Method::Ogfm], 1, 3, &opts).unwrap();
        assert_eq!(r.len(), 1);
        assert!(r[0].rmse.is_finite());
    }

    #[test]
    fn scenario_validation() {
        let ok = SimulationScenario::default();
        assert!(ok.validate().is_ok());
        assert_eq!(ok.z_effective(), 25);
        assert!(SimulationScenario { p_ge: 1.5, ..ok.clone() }.validate().is_err());
        assert!(SimulationScenario { z: Some(60), ..ok.clone() }.validate().is_err());
        assert!(SimulationScenario {
            groups: vec![vec![0, 1], vec![1, 2, 3, 4, 5, 6, 7]],
            ..ok.clone()
        }
        .validate()
        .is_err());
        assert_eq!("ogfm_adaptive".parse::<Method>().unwrap(), Method::OgfmAdaptive);
        assert!("mrce".parse::<Method>().is_err());
    }
}
