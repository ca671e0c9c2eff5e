//! K-fold cross-validation over (lambda, alpha) grids.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::data::ProblemData;
use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::path::{fit_grid, lambda_max, log_grid, PathSpec};
use crate::penalty::{PenaltyConfig, WeightScheme};
use crate::solver::{FitContext, FitResult, SolverOptions};
use crate::structure::OutcomeGrouping;

#[derive(Clone, Debug, PartialEq)]
pub struct CvOptions {
    pub kfolds: usize,
    pub seed: u64,
    pub weight_scheme: WeightScheme,
    pub weight_cap: f64,
    pub execution: Execution,
}

impl Default for CvOptions {
    fn default() -> Self {
        CvOptions {
            kfolds: 10,
            seed: 1,
            weight_scheme: WeightScheme::NonAdaptive,
            weight_cap: crate::penalty::DEFAULT_WEIGHT_CAP,
            execution: Execution::default(),
        }
    }
}

/// A grid point `(alphas[alpha], lambdas[alpha][lambda])`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct GridIndex {
    pub alpha: usize,
    pub lambda: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CVResult {
    pub alphas: Vec<f64>,
    /// One decreasing grid per alpha.
    pub lambdas: Vec<Vec<f64>>,
    /// `fold_mse[a][l][f][k]`: held-out MSE of outcome `k` in fold `f`.
    pub fold_mse: Vec<Vec<Vec<Vec<f64>>>>,
    /// Mean over folds of the outcome-averaged held-out MSE.
    pub mean_mse: Vec<Vec<f64>>,
    pub se_mse: Vec<Vec<f64>>,
    pub best: GridIndex,
    /// Largest lambda, at the best alpha, whose mean is within one SE of the minimum.
    pub best_1se: GridIndex,
    pub fold_assignments: Vec<usize>,
    pub seed: u64,
}

impl CVResult {
    pub fn lambda(&self, at: GridIndex) -> f64 {
        self.lambdas[at.alpha][at.lambda]
    }
    pub fn alpha(&self, at: GridIndex) -> f64 {
        self.alphas[at.alpha]
    }
}

/// Seeded shuffle into `k` folds whose sizes differ by at most one.
pub fn assign_folds(n: usize, k: usize, seed: u64) -> Result<Vec<usize>> {
    if k < 2 {
        return Err(Error::InvalidArgument(format!("need at least 2 folds, got {k}")));
    }
    if k > n {
        return Err(Error::InvalidArgument(format!("{k} folds but only {n} rows")));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut folds = vec![0; n];
    for (pos, &row) in order.iter().enumerate() {
        folds[row] = pos % k;
    }
    Ok(folds)
}

struct Split {
    train: ProblemData,
    test_rows: Vec<usize>,
}

/// Cross-validates every alpha in `spec.alphas`.
///
/// Standardization and weights are recomputed on each training part. Each
/// alpha gets one lambda grid shared by all folds, headed by the largest
/// lambda_max over the full data and every training part, so the head fit
/// is zero in every fold.
pub fn cross_validate(
    data: &ProblemData,
    grouping: &OutcomeGrouping,
    spec: &PathSpec,
    solver: &SolverOptions,
    cv: &CvOptions,
) -> Result<CVResult> {
    spec.validate()?;
    let n = data.n();
    let k = cv.kfolds;
    let folds = assign_folds(n, k, cv.seed)?;
    let splits: Vec<Split> = (0..k)
        .map(|f| {
            let train_rows: Vec<usize> = (0..n).filter(|&i| folds[i] != f).collect();
            let test_rows: Vec<usize> = (0..n).filter(|&i| folds[i] == f).collect();
            Ok(Split {
                train: data.subset(&train_rows)?,
                test_rows,
            })
        })
        .collect::<Result<_>>()?;

    let exec = cv.execution;
    let n_alpha = spec.alphas.len();
    // Weighted configs per (data set, alpha); data set 0 is the full data.
    let sets: Vec<&ProblemData> = std::iter::once(data).chain(splits.iter().map(|s| &s.train)).collect();
    let weights = exec.try_map(&sets, |d| {
        cv.weight_scheme.weights(d, grouping, cv.weight_cap)
    })?;

    let lambdas: Vec<Vec<f64>> = match spec.lambda_max {
        Some(l) => vec![log_grid(l, spec.min_ratio(n, data.p()), spec.n_lambda); n_alpha],
        None => {
            let tasks: Vec<(usize, usize)> =
                (0..sets.len()).flat_map(|s| (0..n_alpha).map(move |a| (s, a))).collect();
            let maxima = exec.try_map(&tasks, |&(s, a)| {
                let ctx = FitContext::new(sets[s], grouping)?;
                let cfg = PenaltyConfig::new(1.0, spec.alphas[a], weights[s].clone())?;
                lambda_max(&ctx, &cfg, solver)
            })?;
            (0..n_alpha)
                .map(|a| {
                    let head = (0..sets.len()).map(|s| maxima[s * n_alpha + a]).fold(0.0, f64::max);
                    log_grid(head, spec.min_ratio(n, data.p()), spec.n_lambda)
                })
                .collect()
        }
    };

    let tasks: Vec<(usize, usize)> = (0..k).flat_map(|f| (0..n_alpha).map(move |a| (f, a))).collect();
    let results = exec.try_map(&tasks, |&(f, a)| -> Result<Vec<Vec<f64>>> {
        let split = &splits[f];
        let ctx = FitContext::new(&split.train, grouping)?;
        let cfg = PenaltyConfig::new(1.0, spec.alphas[a], weights[f + 1].clone())?;
        let fits = fit_grid(&ctx, &cfg, &lambdas[a], solver)?;
        let x_test = data.x().select_rows(&split.test_rows);
        let y_test = data.y().select_rows(&split.test_rows);
        fits.iter()
            .map(|fit| {
                let pred = crate::data::predict(&fit.coef, &x_test)?;
                let nt = split.test_rows.len() as f64;
                Ok((0..data.k())
                    .map(|kk| (y_test.column(kk) - pred.column(kk)).norm_squared() / nt)
                    .collect())
            })
            .collect()
    })?;

    let mut fold_mse = vec![Vec::new(); n_alpha];
    let mut mean_mse = vec![Vec::new(); n_alpha];
    let mut se_mse = vec![Vec::new(); n_alpha];
    for a in 0..n_alpha {
        for l in 0..lambdas[a].len() {
            let per_fold: Vec<Vec<f64>> = (0..k).map(|f| results[f * n_alpha + a][l].clone()).collect();
            let avg: Vec<f64> = per_fold
                .iter()
                .map(|v| v.iter().sum::<f64>() / v.len() as f64)
                .collect();
            let mean = avg.iter().sum::<f64>() / k as f64;
            let var = avg.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (k - 1) as f64;
            fold_mse[a].push(per_fold);
            mean_mse[a].push(mean);
            se_mse[a].push((var / k as f64).sqrt());
        }
    }

    let mut best = GridIndex { alpha: 0, lambda: 0 };
    for a in 0..n_alpha {
        for l in 0..lambdas[a].len() {
            if mean_mse[a][l] < mean_mse[best.alpha][best.lambda] {
                best = GridIndex { alpha: a, lambda: l };
            }
        }
    }
    let bound = mean_mse[best.alpha][best.lambda] + se_mse[best.alpha][best.lambda];
    let l1se = (0..lambdas[best.alpha].len())
        .find(|&l| mean_mse[best.alpha][l] <= bound)
        .unwrap_or(best.lambda);

    Ok(CVResult {
        alphas: spec.alphas.clone(),
        lambdas,
        fold_mse,
        mean_mse,
        se_mse,
        best,
        best_1se: GridIndex {
            alpha: best.alpha,
            lambda: l1se,
        },
        fold_assignments: folds,
        seed: cv.seed,
    })
}

/// Refits `data` at grid point `at` of `result`, warm-starting down the
/// grid from its head, with weights computed on the full data.
pub fn refit(
    data: &ProblemData,
    grouping: &OutcomeGrouping,
    result: &CVResult,
    at: GridIndex,
    solver: &SolverOptions,
    cv: &CvOptions,
) -> Result<FitResult> {
    let weights = cv.weight_scheme.weights(data, grouping, cv.weight_cap)?;
    let cfg = PenaltyConfig::new(1.0, result.alpha(at), weights)?;
    let ctx = FitContext::new(data, grouping)?;
    let mut fits = fit_grid(&ctx, &cfg, &result.lambdas[at.alpha][..=at.lambda], solver)?;
    Ok(fits.pop().expect("grid prefix is non-empty"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use nalgebra::DMatrix;
    use rand::Rng;

    fn problem(n: usize, p: usize, k: usize, noise: f64, seed: u64) -> (ProblemData, DMatrix<f64>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = DMatrix::from_fn(n, p, |_, _| rng.random_range(-1.0..1.0));
        let b = DMatrix::from_fn(p, k, |j, _| if j < 2 { 1.0 } else { 0.0 });
        let y = &x * &b + DMatrix::from_fn(n, k, |_, _| noise * rng.random_range(-1.0..1.0));
        (ProblemData::new(x, y).unwrap(), b)
    }

    fn grouping(k: usize) -> OutcomeGrouping {
        OutcomeGrouping::build(k, &[vec![(0..k / 2).collect(), (k / 2..k).collect()]], None).unwrap()
    }

    #[test]
    fn folds_balanced_and_disjoint() {
        let f = assign_folds(100, 10, 3).unwrap();
        for fold in 0..10 {
            assert_eq!(f.iter().filter(|&&v| v == fold).count(), 10);
        }
        let f = assign_folds(23, 4, 3).unwrap();
        let sizes: Vec<usize> = (0..4).map(|fold| f.iter().filter(|&&v| v == fold).count()).collect();
        assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1);
        assert_eq!(sizes.iter().sum::<usize>(), 23);
        assert!(assign_folds(3, 4, 0).is_err());
        assert!(assign_folds(10, 1, 0).is_err());
    }

    #[test]
    fn deterministic_and_head_is_intercept_only() {
        let (data, _) = problem(60, 4, 2, 0.5, 1);
        let g = grouping(2);
        let spec = PathSpec {
            n_lambda: 6,
            alphas: vec![0.0, 0.1],
            ..PathSpec::default()
        };
        let cv = CvOptions {
            kfolds: 5,
            seed: 7,
            ..CvOptions::default()
        };
        let opts = SolverOptions::default();
        let a = cross_validate(&data, &g, &spec, &opts, &cv).unwrap();
        let b = cross_validate(&data, &g, &spec, &opts, &CvOptions { execution: Execution::Sequential, ..cv.clone() }).unwrap();
        assert_eq!(a, b);

        // Intercept-only predictor per fold: training column means.
        for f in 0..5 {
            let train: Vec<usize> = (0..60).filter(|&i| a.fold_assignments[i] != f).collect();
            let test: Vec<usize> = (0..60).filter(|&i| a.fold_assignments[i] == f).collect();
            for kk in 0..2 {
                let mean = train.iter().map(|&i| data.y()[(i, kk)]).sum::<f64>() / train.len() as f64;
                let mse = test.iter().map(|&i| (data.y()[(i, kk)] - mean).powi(2)).sum::<f64>() / test.len() as f64;
                for al in 0..2 {
                    assert_relative_eq!(a.fold_mse[al][0][f][kk], mse, epsilon = 1e-10);
                }
            }
        }
        assert!(a.best_1se.lambda <= a.best.lambda);
        assert_eq!(a.best_1se.alpha, a.best.alpha);
    }

    #[test]
    fn noiseless_recovery() {
        let (data, _) = problem(200, 5, 2, 0.0, 2);
        let g = grouping(2);
        let spec = PathSpec {
            n_lambda: 20,
            alphas: vec![0.0],
            ..PathSpec::default()
        };
        let cv = CvOptions {
            kfolds: 5,
            ..CvOptions::default()
        };
        let r = cross_validate(&data, &g, &spec, &SolverOptions::default(), &cv).unwrap();
        assert!(r.mean_mse[r.best.alpha][r.best.lambda] <= 1e-4);
    }
}
