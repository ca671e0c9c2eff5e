//! Penalty configuration, objective evaluation and penalty weights.

use nalgebra::{Cholesky, DMatrix, SymmetricEigen};

use crate::data::{CoefficientMatrix, Moments, ProblemData};
use crate::error::{Error, Result};
use crate::structure::OutcomeGrouping;

pub const DEFAULT_WEIGHT_CAP: f64 = 1e8;

/// Per-variable penalty multipliers.
///
/// `groups[(j, g)]` is the weight of group `g` (index into
/// [`OutcomeGrouping::groups`]) for variable `j`; `pairs[(j, q)]` the weight of
/// fuse pair `q` for variable `j`.
#[derive(Clone, Debug, PartialEq)]
pub struct Weights {
    pub groups: DMatrix<f64>,
    pub pairs: DMatrix<f64>,
}

#[derive(Clone, Debug)]
pub struct PenaltyConfig {
    pub lambda: f64,
    pub alpha: f64,
    pub weights: Weights,
    pub gamma1: f64,
    pub gamma2: f64,
    pub weight_cap: f64,
}

impl PenaltyConfig {
    pub fn new(lambda: f64, alpha: f64, weights: Weights) -> Result<Self> {
        let cfg = PenaltyConfig {
            lambda,
            alpha,
            weights,
            gamma1: 1.0,
            gamma2: 1.0,
            weight_cap: DEFAULT_WEIGHT_CAP,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "lambda must be finite and >= 0, got {}",
                self.lambda
            )));
        }
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(Error::InvalidArgument(format!(
                "alpha must lie in [0, 1], got {}",
                self.alpha
            )));
        }
        let bad = self
            .weights
            .groups
            .iter()
            .chain(self.weights.pairs.iter())
            .any(|&w| !(w >= 0.0 && w <= self.weight_cap));
        if bad {
            return Err(Error::InvalidArgument(
                "weights must be finite, non-negative and <= weight_cap".into(),
            ));
        }
        Ok(())
    }

    /// Group-lasso strength `lambda * (1 - alpha)`.
    pub fn lambda1(&self) -> f64 {
        self.lambda * (1.0 - self.alpha)
    }

    /// Fused-lasso strength `lambda * alpha`.
    pub fn lambda2(&self) -> f64 {
        self.lambda * self.alpha
    }

    pub fn with_lambda(&self, lambda: f64) -> Self {
        PenaltyConfig {
            lambda,
            ..self.clone()
        }
    }

    pub(crate) fn check_shape(&self, p: usize, grouping: &OutcomeGrouping) -> Result<()> {
        let g = &self.weights.groups;
        if g.nrows() != p {
            return Err(Error::dim("variables of group weights", p, g.nrows()));
        }
        if g.ncols() != grouping.n_groups() {
            return Err(Error::dim("groups of group weights", grouping.n_groups(), g.ncols()));
        }
        let q = &self.weights.pairs;
        if q.nrows() != p {
            return Err(Error::dim("variables of pair weights", p, q.nrows()));
        }
        if q.ncols() != grouping.n_pairs() {
            return Err(Error::dim("pairs of pair weights", grouping.n_pairs(), q.ncols()));
        }
        Ok(())
    }
}

/// How penalty weights are derived from a data set.
#[derive(Clone, Debug, PartialEq)]
pub enum WeightScheme {
    /// `sqrt(|G|)` per group, 1 per pair.
    NonAdaptive,
    /// Inverse powers of a preliminary estimate.
    Adaptive {
        gamma1: f64,
        gamma2: f64,
        base: BaseEstimate,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum BaseEstimate {
    /// OLS when `n > p` and X'X is well conditioned, marginal regression otherwise.
    #[default]
    Auto,
    Ols,
    Marginal,
}

impl WeightScheme {
    pub fn adaptive(gamma1: f64, gamma2: f64) -> Self {
        WeightScheme::Adaptive {
            gamma1,
            gamma2,
            base: BaseEstimate::Auto,
        }
    }

    /// Weights for `data`'s working (standardized) problem.
    pub fn weights(&self, data: &ProblemData, grouping: &OutcomeGrouping, cap: f64) -> Result<Weights> {
        self.weights_from_moments(&Moments::working(data), grouping, cap)
    }

    pub(crate) fn weights_from_moments(
        &self,
        mom: &Moments,
        grouping: &OutcomeGrouping,
        cap: f64,
    ) -> Result<Weights> {
        match *self {
            WeightScheme::NonAdaptive => Ok(make_nonadaptive_weights(grouping, mom.p())),
            WeightScheme::Adaptive {
                gamma1,
                gamma2,
                base,
            } => {
                let est = match base {
                    BaseEstimate::Ols => ols_from_moments(mom)?,
                    BaseEstimate::Marginal => marginal_from_moments(mom, true)?,
                    BaseEstimate::Auto if mom.n > mom.p() => match ols_from_moments(mom) {
                        Ok(b) => b,
                        Err(Error::IllConditioned { .. }) => marginal_from_moments(mom, true)?,
                        Err(e) => return Err(e),
                    },
                    BaseEstimate::Auto => marginal_from_moments(mom, true)?,
                };
                compute_adaptive_weights(&est, grouping, gamma1, gamma2, cap)
            }
        }
    }
}

fn check_beta(beta: &DMatrix<f64>, grouping: &OutcomeGrouping) -> Result<()> {
    if beta.ncols() != grouping.k() {
        return Err(Error::dim("outcomes of beta", grouping.k(), beta.ncols()));
    }
    Ok(())
}

/// `(P1, P2)`: the weighted overlapping group norm sum and the weighted fused
/// absolute-difference sum. Each unordered fuse pair counts once.
pub fn eval_penalties(
    beta: &DMatrix<f64>,
    grouping: &OutcomeGrouping,
    cfg: &PenaltyConfig,
) -> Result<(f64, f64)> {
    check_beta(beta, grouping)?;
    cfg.check_shape(beta.nrows(), grouping)?;
    let mut p1 = 0.0;
    let mut p2 = 0.0;
    for j in 0..beta.nrows() {
        for (g, grp) in grouping.groups().iter().enumerate() {
            let sq: f64 = grp.members.iter().map(|&k| beta[(j, k)].powi(2)).sum();
            p1 += cfg.weights.groups[(j, g)] * sq.sqrt();
        }
        for (q, &(l, o)) in grouping.fuse_pairs().iter().enumerate() {
            p2 += cfg.weights.pairs[(j, q)] * (beta[(j, l)] - beta[(j, o)]).abs();
        }
    }
    Ok((p1, p2))
}

/// `(2n)^-1 ||Y - 1 c' - X beta||_F^2 + lambda1 P1 + lambda2 P2` on X and Y as stored,
/// where `c` is `coef.intercept`.
pub fn eval_objective(
    data: &ProblemData,
    coef: &CoefficientMatrix,
    grouping: &OutcomeGrouping,
    cfg: &PenaltyConfig,
) -> Result<f64> {
    if coef.p() != data.p() {
        return Err(Error::dim("variables of beta", data.p(), coef.p()));
    }
    if coef.k() != data.k() {
        return Err(Error::dim("outcomes of beta", data.k(), coef.k()));
    }
    let (p1, p2) = eval_penalties(&coef.beta, grouping, cfg)?;
    let fitted = crate::data::predict(coef, data.x())?;
    let rss = (data.y() - fitted).norm_squared();
    Ok(rss / (2.0 * data.n() as f64) + cfg.lambda1() * p1 + cfg.lambda2() * p2)
}

/// Least squares `(X'X)^-1 X'Y` on X and Y as stored (no intercept).
pub fn compute_ols(data: &ProblemData) -> Result<CoefficientMatrix> {
    Ok(CoefficientMatrix::from_beta(ols_from_moments(&Moments::raw(data))?))
}

pub(crate) fn ols_from_moments(mom: &Moments) -> Result<DMatrix<f64>> {
    let eig = SymmetricEigen::new(mom.gram.clone());
    let max = eig.eigenvalues.max();
    let min = eig.eigenvalues.min();
    let ratio = if max > 0.0 { min / max } else { 0.0 };
    if !(ratio > 1e-10) {
        return Err(Error::IllConditioned { ratio });
    }
    let chol = Cholesky::new(mom.gram.clone()).ok_or(Error::IllConditioned { ratio })?;
    Ok(chol.solve(&mom.xty))
}

/// Per-(variable, outcome) univariate regression slopes `x_j' Y_k / x_j' x_j`.
pub fn compute_marginal_weights_base(data: &ProblemData) -> Result<CoefficientMatrix> {
    Ok(CoefficientMatrix::from_beta(marginal_from_moments(
        &Moments::raw(data),
        false,
    )?))
}

/// With `allow_zero`, zero-norm columns get a zero slope instead of an error.
pub(crate) fn marginal_from_moments(mom: &Moments, allow_zero: bool) -> Result<DMatrix<f64>> {
    let (p, k) = (mom.p(), mom.k());
    for j in 0..p {
        if mom.gram[(j, j)] <= 0.0 && !allow_zero {
            return Err(Error::ZeroColumn(j));
        }
    }
    Ok(DMatrix::from_fn(p, k, |j, kk| {
        let d = mom.gram[(j, j)];
        if d > 0.0 {
            mom.xty[(j, kk)] / d
        } else {
            0.0
        }
    }))
}

/// `min(||base_{j,G}||^-gamma1, cap)` per group and `min(|base_jl - base_jo|^-gamma2, cap)`
/// per fuse pair, with duplicated groups contributing once per appearance.
pub fn compute_adaptive_weights(
    base: &DMatrix<f64>,
    grouping: &OutcomeGrouping,
    gamma1: f64,
    gamma2: f64,
    cap: f64,
) -> Result<Weights> {
    check_beta(base, grouping)?;
    if !(gamma1 > 0.0 && gamma2 > 0.0) {
        return Err(Error::InvalidArgument("gamma1 and gamma2 must be positive".into()));
    }
    let p = base.nrows();
    let capped = |x: f64| if x.is_finite() { x.min(cap) } else { cap };
    let groups = DMatrix::from_fn(p, grouping.n_groups(), |j, g| {
        let grp = &grouping.groups()[g];
        let norm = grp
            .members
            .iter()
            .map(|&k| base[(j, k)].powi(2))
            .sum::<f64>()
            .sqrt();
        capped(grp.multiplicity as f64 * capped(norm.powf(-gamma1)))
    });
    let pairs = DMatrix::from_fn(p, grouping.n_pairs(), |j, q| {
        let (l, o) = grouping.fuse_pairs()[q];
        capped((base[(j, l)] - base[(j, o)]).abs().powf(-gamma2))
    });
    Ok(Weights { groups, pairs })
}

/// `sqrt(|G|)` per group (summed over duplicates) and 1 per fuse pair.
pub fn make_nonadaptive_weights(grouping: &OutcomeGrouping, p: usize) -> Weights {
    let per_group: Vec<f64> = grouping
        .groups()
        .iter()
        .map(|g| g.multiplicity as f64 * (g.members.len() as f64).sqrt())
        .collect();
    Weights {
        groups: DMatrix::from_fn(p, grouping.n_groups(), |_, g| per_group[g]),
        pairs: DMatrix::from_element(p, grouping.n_pairs(), 1.0),
    }
}

/// Unit weight on every group and pair.
pub fn unit_weights(grouping: &OutcomeGrouping, p: usize) -> Weights {
    Weights {
        groups: DMatrix::from_element(p, grouping.n_groups(), 1.0),
        pairs: DMatrix::from_element(p, grouping.n_pairs(), 1.0),
    }
}
