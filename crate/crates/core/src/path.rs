//! Regularization paths over (lambda, alpha) grids.

use nalgebra::{DMatrix, RowDVector};

use crate::data::{Design, Moments, ProblemData};
use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::penalty::{PenaltyConfig, Weights};
use crate::solver::{FitContext, FitResult, SolverOptions};
use crate::structure::OutcomeGrouping;

pub const DEFAULT_ALPHAS: [f64; 6] = [0.0, 1e-5, 1e-3, 1e-2, 0.1, 0.5];

#[derive(Clone, Debug, PartialEq)]
pub struct PathSpec {
    pub n_lambda: usize,
    /// Defaults to 1e-3 when n > p and 1e-2 otherwise.
    pub lambda_min_ratio: Option<f64>,
    pub alphas: Vec<f64>,
    /// Skips the lambda_max search when set.
    pub lambda_max: Option<f64>,
}

impl Default for PathSpec {
    fn default() -> Self {
        PathSpec {
            n_lambda: 50,
            lambda_min_ratio: None,
            alphas: DEFAULT_ALPHAS.to_vec(),
            lambda_max: None,
        }
    }
}

impl PathSpec {
    pub fn min_ratio(&self, n: usize, p: usize) -> f64 {
        self.lambda_min_ratio
            .unwrap_or(if n > p { 1e-3 } else { 1e-2 })
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_lambda == 0 {
            return Err(Error::InvalidArgument("n_lambda must be at least 1".into()));
        }
        if let Some(r) = self.lambda_min_ratio {
            if !(r > 0.0 && r < 1.0) {
                return Err(Error::InvalidArgument(format!(
                    "lambda_min_ratio must lie in (0, 1), got {r}"
                )));
            }
        }
        if self.alphas.is_empty() {
            return Err(Error::InvalidArgument("need at least one alpha".into()));
        }
        if let Some(a) = self.alphas.iter().find(|a| !(0.0..=1.0).contains(*a)) {
            return Err(Error::InvalidArgument(format!("alpha must lie in [0, 1], got {a}")));
        }
        if let Some(l) = self.lambda_max {
            if !(l >= 0.0 && l.is_finite()) {
                return Err(Error::InvalidArgument(format!("lambda_max must be >= 0, got {l}")));
            }
        }
        Ok(())
    }
}

/// `n` log-spaced values from `lambda_max` down to `lambda_max * ratio`.
/// A zero `lambda_max` gives the single-point grid `[0]`.
pub fn log_grid(lambda_max: f64, ratio: f64, n: usize) -> Vec<f64> {
    if lambda_max <= 0.0 {
        return vec![0.0];
    }
    if n == 1 {
        return vec![lambda_max];
    }
    let (hi, lo) = (lambda_max.ln(), (lambda_max * ratio).ln());
    (0..n)
        .map(|i| {
            if i == 0 {
                lambda_max
            } else if i == n - 1 {
                lambda_max * ratio
            } else {
                (hi + (lo - hi) * i as f64 / (n - 1) as f64).exp()
            }
        })
        .collect()
}

fn is_zero(fit: &FitResult) -> bool {
    fit.beta_std.iter().all(|&v| v == 0.0)
}

fn fully_fused(fit: &FitResult) -> bool {
    fit.eta.iter().all(|&v| v == 0.0)
}

/// `a1 * sum_G w_G ||b_G|| + a2 * sum_q w_q |b_l - b_o|` for one variable.
fn row_penalty(b: &[f64], grouping: &OutcomeGrouping, w: &Weights, j: usize, a1: f64, a2: f64) -> f64 {
    let mut s = 0.0;
    for (g, grp) in grouping.groups().iter().enumerate() {
        s += a1 * w.groups[(j, g)] * grp.members.iter().map(|&k| b[k] * b[k]).sum::<f64>().sqrt();
    }
    for (q, &(l, o)) in grouping.fuse_pairs().iter().enumerate() {
        s += a2 * w.pairs[(j, q)] * (b[l] - b[o]).abs();
    }
    s
}

fn ratio_bound(c: &[f64], b: &[f64], pen: f64) -> f64 {
    let num: f64 = c.iter().zip(b).map(|(x, y)| x * y).sum();
    if pen > 0.0 {
        num.max(0.0) / pen
    } else if num > 0.0 {
        f64::INFINITY
    } else {
        0.0
    }
}

/// Smallest lambda at which zero is optimal, from the variable-`j` slice alone.
///
/// At `beta = 0` the optimality conditions separate by variable: zero is
/// optimal iff every row `c_j` of `X'Y/n` lies in `lambda` times the
/// subdifferential of that row's penalty at zero. That holds iff the proximal
/// map of the row penalty sends `c_j` to zero, which is a K-dimensional fit.
struct RowGauge<'a> {
    grouping: &'a OutcomeGrouping,
    cfg: &'a PenaltyConfig,
    opts: SolverOptions,
}

impl RowGauge<'_> {
    fn lower(&self, c: &[f64], j: usize) -> f64 {
        let (a1, a2) = (1.0 - self.cfg.alpha, self.cfg.alpha);
        let w = &self.cfg.weights;
        let k = c.len();
        let mut best = ratio_bound(c, c, row_penalty(c, self.grouping, w, j, a1, a2));
        for i in 0..k {
            let mut e = vec![0.0; k];
            e[i] = c[i].signum();
            best = best.max(ratio_bound(c, &e, row_penalty(&e, self.grouping, w, j, a1, a2)));
        }
        best
    }

    fn upper(&self, c: &[f64], j: usize) -> Option<f64> {
        let a1 = 1.0 - self.cfg.alpha;
        if a1 <= 0.0 {
            return None;
        }
        let k = c.len();
        let w = &self.cfg.weights;
        let groups = self.grouping.groups();
        let mut best: Option<f64> = None;
        let mut take = |v: f64| {
            if v.is_finite() {
                best = Some(best.map_or(v, |b: f64| b.min(v)));
            }
        };
        if let Some(g) = groups.iter().position(|g| g.members.len() == k) {
            let norm = c.iter().map(|x| x * x).sum::<f64>().sqrt();
            take(norm / (a1 * w.groups[(j, g)]));
        }
        let mut single = 0.0f64;
        let mut all = true;
        for (i, &ci) in c.iter().enumerate() {
            match groups.iter().position(|g| g.members == [i]) {
                Some(g) => single = single.max(ci.abs() / (a1 * w.groups[(j, g)])),
                None => all = false,
            }
        }
        if all {
            take(single);
        }
        best
    }

    fn zero_at(&self, ctx: &FitContext<'_>, row_cfg: &PenaltyConfig, lambda: f64) -> Result<bool> {
        Ok(is_zero(&ctx.fit(&row_cfg.with_lambda(lambda), &self.opts, None)?))
    }

    fn row_context(&self, c: &[f64]) -> Result<FitContext<'_>> {
        let k = c.len();
        let moments = Moments {
            n: 1,
            gram: DMatrix::from_element(1, 1, 1.0),
            xty: DMatrix::from_row_slice(1, k, c),
            yty: nalgebra::DVector::from_iterator(k, c.iter().map(|x| x * x)),
        };
        FitContext::from_moments(moments, self.grouping)
    }

    fn row_cfg(&self, j: usize) -> PenaltyConfig {
        let w = &self.cfg.weights;
        PenaltyConfig {
            weights: Weights {
                groups: DMatrix::from_rows(&[RowDVector::from_iterator(
                    w.groups.ncols(),
                    w.groups.row(j).iter().copied(),
                )]),
                pairs: DMatrix::from_rows(&[RowDVector::from_iterator(
                    w.pairs.ncols(),
                    w.pairs.row(j).iter().copied(),
                )]),
            },
            ..self.cfg.clone()
        }
    }
}

/// Smallest lambda whose fit is the zero matrix, for `cfg.alpha < 1`.
/// For `alpha = 1` nothing is ever zeroed; the smallest lambda at which
/// every fused difference is exactly zero is returned instead.
///
/// The result is verified by a fit on the full problem and enlarged until
/// that fit is zero (or fully fused). A zero response gives 0.
pub fn lambda_max(ctx: &FitContext<'_>, cfg: &PenaltyConfig, opts: &SolverOptions) -> Result<f64> {
    // Exact zeros come from the support polish.
    let opts = &SolverOptions {
        polish_support: true,
        ..opts.clone()
    };
    let c = &ctx.moments().xty;
    if c.iter().all(|&v| v == 0.0) {
        log::warn!("X'Y is zero; lambda_max is 0");
        return Ok(0.0);
    }
    let p = c.nrows();
    let rows: Vec<Vec<f64>> = (0..p).map(|j| c.row(j).iter().copied().collect()).collect();

    if cfg.alpha >= 1.0 {
        return fused_lambda_max(ctx, cfg, opts, &rows);
    }

    let gauge = RowGauge {
        grouping: ctx.grouping(),
        cfg,
        opts: SolverOptions {
            eps_abs: 1e-10,
            eps_rel: 1e-10,
            max_iter: 20_000,
            ..opts.clone()
        },
    };
    let lower: Vec<f64> = rows.iter().enumerate().map(|(j, r)| gauge.lower(r, j)).collect();
    let mut best = lower.iter().cloned().fold(0.0, f64::max);
    let mut order: Vec<(usize, Option<f64>)> =
        rows.iter().enumerate().map(|(j, r)| (j, gauge.upper(r, j))).collect();
    order.sort_by(|a, b| {
        let ua = a.1.unwrap_or(f64::INFINITY);
        let ub = b.1.unwrap_or(f64::INFINITY);
        ub.total_cmp(&ua).then(a.0.cmp(&b.0))
    });
    for (j, up) in order {
        if up.is_some_and(|u| u <= best) || rows[j].iter().all(|&v| v == 0.0) {
            continue;
        }
        let rctx = gauge.row_context(&rows[j])?;
        let rcfg = gauge.row_cfg(j);
        let lo0 = lower[j].max(best);
        if lo0 > 0.0 && gauge.zero_at(&rctx, &rcfg, lo0)? {
            continue;
        }
        let mut lo = lo0;
        let mut hi = match up {
            Some(u) => u,
            None => {
                let mut h = lo0.max(f64::MIN_POSITIVE) * 2.0;
                let mut tries = 0;
                while !gauge.zero_at(&rctx, &rcfg, h)? {
                    h *= 2.0;
                    tries += 1;
                    if tries > 200 {
                        return Err(Error::InvalidArgument(format!(
                            "no finite lambda zeroes variable {}; check the group weights",
                            j + 1
                        )));
                    }
                }
                h
            }
        };
        while hi - lo > 1e-6 * hi {
            let mid = 0.5 * (lo + hi);
            if gauge.zero_at(&rctx, &rcfg, mid)? {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        best = best.max(hi);
    }
    verify(ctx, cfg, opts, best * (1.0 + 1e-6), is_zero)
}

fn verify(
    ctx: &FitContext<'_>,
    cfg: &PenaltyConfig,
    opts: &SolverOptions,
    mut lambda: f64,
    done: fn(&FitResult) -> bool,
) -> Result<f64> {
    // Near the boundary a loose solve may leave tiny nonzeros; grow in small steps first.
    let mut step = 1e-3;
    for _ in 0..200 {
        if done(&ctx.fit(&cfg.with_lambda(lambda), opts, None)?) {
            return Ok(lambda);
        }
        lambda *= 1.0 + step;
        step = (2.0 * step).min(1.0);
    }
    Err(Error::InvalidArgument(
        "lambda_max search did not terminate; check the penalty weights".into(),
    ))
}

/// Pure fusion: double a starting guess until every difference is fused,
/// then bisect with full fits.
fn fused_lambda_max(
    ctx: &FitContext<'_>,
    cfg: &PenaltyConfig,
    opts: &SolverOptions,
    rows: &[Vec<f64>],
) -> Result<f64> {
    let grouping = ctx.grouping();
    if grouping.n_pairs() == 0 {
        log::warn!("no fuse pairs with alpha = 1; lambda_max is 0");
        return Ok(0.0);
    }
    let mut start = 0.0f64;
    for (j, r) in rows.iter().enumerate() {
        for (q, &(l, o)) in grouping.fuse_pairs().iter().enumerate() {
            let w = cfg.weights.pairs[(j, q)];
            if w > 0.0 {
                start = start.max((r[l] - r[o]).abs() / (2.0 * w));
            }
        }
    }
    let fused_at = |l: f64| -> Result<bool> { Ok(fully_fused(&ctx.fit(&cfg.with_lambda(l), opts, None)?)) };
    let mut hi = start.max(1e-12);
    let mut tries = 0;
    while !fused_at(hi)? {
        hi *= 2.0;
        tries += 1;
        if tries > 200 {
            return Err(Error::InvalidArgument(
                "no finite lambda fuses every pair; check the pair weights".into(),
            ));
        }
    }
    let mut lo = 0.0;
    while hi - lo > 1e-3 * hi {
        let mid = 0.5 * (lo + hi);
        if fused_at(mid)? {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(hi)
}

/// Decreasing lambda grid for `cfg.alpha`.
pub fn make_lambda_grid(
    data: &ProblemData,
    grouping: &OutcomeGrouping,
    cfg: &PenaltyConfig,
    spec: &PathSpec,
    opts: &SolverOptions,
) -> Result<Vec<f64>> {
    spec.validate()?;
    let ctx = FitContext::new(data, grouping)?;
    let lmax = match spec.lambda_max {
        Some(l) => l,
        None => lambda_max(&ctx, cfg, opts)?,
    };
    if lmax == 0.0 {
        log::warn!("lambda_max is 0; the grid is the single point 0");
    }
    Ok(log_grid(lmax, spec.min_ratio(data.n(), data.p()), spec.n_lambda))
}

/// Fits along `grid` in order, warm-starting each point from the previous one.
pub fn fit_grid(
    ctx: &FitContext<'_>,
    cfg: &PenaltyConfig,
    grid: &[f64],
    opts: &SolverOptions,
) -> Result<Vec<FitResult>> {
    let mut out: Vec<FitResult> = Vec::with_capacity(grid.len());
    for &lambda in grid {
        let warm = out.last().map(|f| &f.state);
        let fit = ctx.fit(&cfg.with_lambda(lambda), opts, warm)?;
        out.push(fit);
    }
    Ok(out)
}

/// Paths for every alpha in `spec.alphas`, alpha-major, lambda decreasing.
/// `cfg` supplies the weights; its lambda and alpha are ignored.
pub fn fit_path(
    data: &ProblemData,
    grouping: &OutcomeGrouping,
    cfg: &PenaltyConfig,
    spec: &PathSpec,
    opts: &SolverOptions,
    exec: Execution,
) -> Result<Vec<FitResult>> {
    spec.validate()?;
    let ctx = FitContext::new(data, grouping)?;
    let ratio = spec.min_ratio(data.n(), data.p());
    let per_alpha = exec.try_map(&spec.alphas, |&alpha| {
        let cfg_a = PenaltyConfig { alpha, ..cfg.clone() };
        let lmax = match spec.lambda_max {
            Some(l) => l,
            None => lambda_max(&ctx, &cfg_a, opts)?,
        };
        fit_grid(&ctx, &cfg_a, &log_grid(lmax, ratio, spec.n_lambda), opts)
    })?;
    Ok(per_alpha.into_iter().flatten().collect())
}

/// `X_new * beta + intercept` on the original scale.
pub fn predict(fit: &FitResult, x_new: &Design) -> Result<DMatrix<f64>> {
    crate::data::predict(&fit.coef, x_new)
}
