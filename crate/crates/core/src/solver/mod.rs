//! Multi-block ADMM for the overlapping group plus fused lasso.
//!
//! The solver works on the centered (and by default scaled) problem held by
//! [`Moments::working`]; coefficients are reported back on the original scale.

pub mod admm;
mod polish;
pub mod prox;
pub mod system;

use std::collections::BTreeSet;

use nalgebra::DMatrix;

pub use admm::{Convergence, SolverState};
pub use prox::{block_soft_threshold, soft_threshold};
pub use system::KroneckerSystem;

use crate::data::{CoefficientMatrix, Moments, ProblemData};
use crate::error::{Error, Result};
use crate::penalty::PenaltyConfig;
use crate::structure::{detect_structure, ConstraintMatrices, FusedPair, OutcomeGrouping};

#[derive(Clone, Debug, PartialEq)]
pub struct SolverOptions {
    pub eps_abs: f64,
    pub eps_rel: f64,
    pub max_iter: usize,
    pub rho0: f64,
    pub rho_mu: f64,
    pub rho_tau: f64,
    pub adapt_rho: bool,
    pub polish_support: bool,
    /// Record the augmented Lagrangian after every block update.
    pub trace: bool,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            eps_abs: 1e-5,
            eps_rel: 1e-5,
            max_iter: 5000,
            rho0: 1.0,
            rho_mu: 10.0,
            rho_tau: 2.0,
            adapt_rho: true,
            polish_support: true,
            trace: false,
        }
    }
}

impl SolverOptions {
    pub fn validate(&self) -> Result<()> {
        if !(self.eps_abs > 0.0 && self.eps_rel > 0.0) {
            return Err(Error::InvalidArgument("eps_abs and eps_rel must be positive".into()));
        }
        if !(self.rho0 > 0.0 && self.rho0.is_finite()) {
            return Err(Error::InvalidArgument("rho0 must be positive and finite".into()));
        }
        if !(self.rho_mu > 1.0 && self.rho_tau > 1.0) {
            return Err(Error::InvalidArgument("rho_mu and rho_tau must exceed 1".into()));
        }
        if self.max_iter == 0 {
            return Err(Error::InvalidArgument("max_iter must be at least 1".into()));
        }
        Ok(())
    }
}

/// Augmented Lagrangian values around the three block updates of one iteration.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct IterationTrace {
    pub start: f64,
    pub after_beta: f64,
    pub after_gamma: f64,
    pub after_eta: f64,
}

#[derive(Clone, Debug)]
pub struct FitResult {
    pub lambda: f64,
    pub alpha: f64,
    /// Original-scale coefficients and intercept.
    pub coef: CoefficientMatrix,
    /// Working-scale coefficients the objective refers to.
    pub beta_std: DMatrix<f64>,
    pub gamma: Vec<f64>,
    pub eta: Vec<f64>,
    /// Nonzero coefficients as column-major indices `j + k * p`.
    pub support: BTreeSet<usize>,
    pub fused: Vec<FusedPair>,
    /// Penalized objective of `beta_std` on the working problem.
    pub objective: f64,
    pub iterations: usize,
    pub converged: bool,
    pub primal_residual: f64,
    pub dual_residual: f64,
    pub polished: bool,
    /// Final ADMM iterate, for warm starts.
    pub state: SolverState,
    pub trace: Vec<IterationTrace>,
    pub warnings: Vec<String>,
}

impl FitResult {
    pub fn p(&self) -> usize {
        self.beta_std.nrows()
    }
    pub fn k(&self) -> usize {
        self.beta_std.ncols()
    }

    /// Support as a p x K 0/1 pattern.
    pub fn support_mask(&self) -> DMatrix<bool> {
        let p = self.p();
        DMatrix::from_fn(p, self.k(), |j, k| self.support.contains(&(j + k * p)))
    }
}

/// Everything about a problem that does not depend on `(lambda, alpha)`.
/// Reuse one context along a path.
pub struct FitContext<'a> {
    data: Option<&'a ProblemData>,
    grouping: &'a OutcomeGrouping,
    moments: Moments,
    ops: ConstraintMatrices,
    system: KroneckerSystem,
}

impl<'a> FitContext<'a> {
    pub fn new(data: &'a ProblemData, grouping: &'a OutcomeGrouping) -> Result<Self> {
        if grouping.k() != data.k() {
            return Err(Error::dim("outcomes of grouping", data.k(), grouping.k()));
        }
        let mut ctx = Self::from_moments(Moments::working(data), grouping)?;
        ctx.data = Some(data);
        Ok(ctx)
    }

    /// A context for a problem given only by its moments. Fits report the
    /// working-scale coefficients with a zero intercept.
    pub fn from_moments(moments: Moments, grouping: &'a OutcomeGrouping) -> Result<Self> {
        if grouping.k() != moments.k() {
            return Err(Error::dim("outcomes of grouping", moments.k(), grouping.k()));
        }
        let ops = ConstraintMatrices::new(grouping, moments.p());
        let system = KroneckerSystem::new(&moments.gram, grouping)?;
        Ok(FitContext {
            data: None,
            grouping,
            moments,
            ops,
            system,
        })
    }

    pub fn data(&self) -> Option<&ProblemData> {
        self.data
    }
    pub fn grouping(&self) -> &OutcomeGrouping {
        self.grouping
    }
    pub fn moments(&self) -> &Moments {
        &self.moments
    }
    pub fn ops(&self) -> &ConstraintMatrices {
        &self.ops
    }
    pub fn system(&self) -> &KroneckerSystem {
        &self.system
    }

    /// Working-scale penalized objective.
    pub fn objective(&self, beta_std: &DMatrix<f64>, cfg: &PenaltyConfig) -> f64 {
        let (p1, p2) = penalty_values(beta_std, self.grouping, cfg);
        self.moments.loss(beta_std) + cfg.lambda1() * p1 + cfg.lambda2() * p2
    }

    pub fn fit(
        &self,
        cfg: &PenaltyConfig,
        opts: &SolverOptions,
        warm: Option<&SolverState>,
    ) -> Result<FitResult> {
        cfg.validate()?;
        opts.validate()?;
        let (p, k) = (self.moments.p(), self.moments.k());
        cfg.check_shape(p, self.grouping)?;
        let ops = &self.ops;
        let m = ops.m();

        let mut state = match warm {
            Some(s) => {
                s.check_dims(p, k, ops)?;
                SolverState { iter: 0, ..s.clone() }
            }
            None => SolverState::cold(p, k, ops, opts.rho0),
        };

        let mut trace = Vec::new();
        let mut conv = Convergence {
            converged: false,
            primal: f64::INFINITY,
            dual: f64::INFINITY,
            primal_tol: 0.0,
            dual_tol: 0.0,
        };
        let lagrangian = |s: &SolverState| {
            admm::augmented_lagrangian(&self.moments, ops, cfg, &s.beta, &s.gamma, &s.eta, &s.u, s.rho)
        };

        while state.iter < opts.max_iter {
            let start = if opts.trace { lagrangian(&state) } else { 0.0 };
            let prev_gamma = state.gamma.clone();
            let prev_eta = state.eta.clone();

            state.beta = admm::beta_update(&self.system, &self.moments, ops, &state)?;
            let after_beta = if opts.trace { lagrangian(&state) } else { 0.0 };
            state.gamma = admm::gamma_update(ops, &state.beta, &state.u[..m], cfg, state.rho);
            let after_gamma = if opts.trace { lagrangian(&state) } else { 0.0 };
            state.eta = admm::eta_update(ops, &state.beta, &state.u[m..], cfg, state.rho);
            if opts.trace {
                trace.push(IterationTrace {
                    start,
                    after_beta,
                    after_gamma,
                    after_eta: lagrangian(&state),
                });
            }
            admm::dual_update(ops, &mut state);
            state.iter += 1;

            conv = admm::check_convergence(ops, &state, &prev_gamma, &prev_eta, opts);
            if conv.converged {
                break;
            }
            if opts.adapt_rho && (state.iter <= 100 || state.iter % 10 == 0) {
                admm::update_rho(&mut state, conv.primal, conv.dual, opts);
            }
        }

        let mut warnings = Vec::new();
        if !conv.converged {
            let msg = format!(
                "ADMM stopped at max_iter = {} without converging (lambda = {}, alpha = {}, primal {:.3e} > {:.3e} or dual {:.3e} > {:.3e})",
                opts.max_iter, cfg.lambda, cfg.alpha, conv.primal, conv.primal_tol, conv.dual, conv.dual_tol
            );
            log::warn!("{msg}");
            warnings.push(msg);
        }

        let raw_obj = self.objective(&state.beta, cfg);
        let mut beta = state.beta.clone();
        let mut objective = raw_obj;
        let mut polished = false;
        if opts.polish_support {
            let cand = polish::polish(self, cfg, &state.beta, &state.gamma, &state.eta);
            let cand_obj = self.objective(&cand, cfg);
            if cand_obj <= raw_obj + 1e-12 * raw_obj.abs() {
                beta = cand;
                objective = cand_obj;
                polished = true;
            } else {
                log::debug!("support polish rejected: {cand_obj} > {raw_obj}");
            }
        }

        let coef = match self.data {
            Some(d) => d.to_original(&beta),
            None => CoefficientMatrix::from_beta(beta.clone()),
        };
        let mut fit = FitResult {
            lambda: cfg.lambda,
            alpha: cfg.alpha,
            coef,
            beta_std: beta,
            gamma: state.gamma.clone(),
            eta: state.eta.clone(),
            support: BTreeSet::new(),
            fused: Vec::new(),
            objective,
            iterations: state.iter,
            converged: conv.converged,
            primal_residual: conv.primal,
            dual_residual: conv.dual,
            polished,
            state,
            trace,
            warnings,
        };
        let max_abs = fit.beta_std.amax();
        let tol_zero = if polished { 0.0 } else { 1e-4 * max_abs };
        let tol_fuse = 1e-6 * (1.0 + max_abs);
        let (support, fused) = detect_structure(&fit, self.grouping, tol_zero, tol_fuse);
        fit.support = support;
        fit.fused = fused;
        Ok(fit)
    }
}

pub(crate) fn penalty_values(beta: &DMatrix<f64>, grouping: &OutcomeGrouping, cfg: &PenaltyConfig) -> (f64, f64) {
    let mut p1 = 0.0;
    let mut p2 = 0.0;
    for j in 0..beta.nrows() {
        for (g, grp) in grouping.groups().iter().enumerate() {
            let w = cfg.weights.groups[(j, g)];
            if w != 0.0 {
                p1 += w * grp.members.iter().map(|&k| beta[(j, k)].powi(2)).sum::<f64>().sqrt();
            }
        }
        for (q, &(l, o)) in grouping.fuse_pairs().iter().enumerate() {
            p2 += cfg.weights.pairs[(j, q)] * (beta[(j, l)] - beta[(j, o)]).abs();
        }
    }
    (p1, p2)
}

/// One-off fit. Prefer [`FitContext`] when fitting several penalties on the same data.
pub fn fit(
    data: &ProblemData,
    grouping: &OutcomeGrouping,
    cfg: &PenaltyConfig,
    opts: &SolverOptions,
    warm: Option<&SolverState>,
) -> Result<FitResult> {
    FitContext::new(data, grouping)?.fit(cfg, opts, warm)
}
