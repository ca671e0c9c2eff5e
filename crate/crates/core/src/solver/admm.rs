//! The individual ADMM steps, in scaled-dual form.
//!
//! The constraint is `A beta + B z = 0` with `A = [F; D]`, `z = [gamma; eta]`,
//! `B = -I`. The unscaled dual is `nu = rho * u`; the augmented Lagrangian is
//! `f(beta) + P1(gamma) + P2(eta) + nu'(A beta - z) + rho/2 ||A beta - z||^2`.

use nalgebra::DMatrix;

use super::prox::{block_soft_threshold_in_place, soft_threshold};
use super::system::KroneckerSystem;
use super::SolverOptions;
use crate::data::Moments;
use crate::error::{Error, Result};
use crate::penalty::PenaltyConfig;
use crate::structure::ConstraintMatrices;

/// ADMM iterate. `beta` is on the working (standardized) scale.
#[derive(Clone, Debug, PartialEq)]
pub struct SolverState {
    pub beta: DMatrix<f64>,
    pub gamma: Vec<f64>,
    pub eta: Vec<f64>,
    /// Scaled dual `nu / rho`; the first `m` entries pair with `gamma`.
    pub u: Vec<f64>,
    pub rho: f64,
    pub iter: usize,
}

impl SolverState {
    pub fn cold(p: usize, k: usize, ops: &ConstraintMatrices, rho: f64) -> Self {
        SolverState {
            beta: DMatrix::zeros(p, k),
            gamma: vec![0.0; ops.m()],
            eta: vec![0.0; ops.e()],
            u: vec![0.0; ops.m() + ops.e()],
            rho,
            iter: 0,
        }
    }

    /// Unscaled dual variable.
    pub fn nu(&self) -> Vec<f64> {
        self.u.iter().map(|v| v * self.rho).collect()
    }

    pub(crate) fn check_dims(&self, p: usize, k: usize, ops: &ConstraintMatrices) -> Result<()> {
        if self.beta.shape() != (p, k) {
            return Err(Error::dim("warm-start beta", p * k, self.beta.len()));
        }
        if self.gamma.len() != ops.m() {
            return Err(Error::dim("warm-start gamma", ops.m(), self.gamma.len()));
        }
        if self.eta.len() != ops.e() {
            return Err(Error::dim("warm-start eta", ops.e(), self.eta.len()));
        }
        if self.u.len() != ops.m() + ops.e() {
            return Err(Error::dim("warm-start dual", ops.m() + ops.e(), self.u.len()));
        }
        if !(self.rho > 0.0) {
            return Err(Error::InvalidArgument("warm-start rho must be positive".into()));
        }
        Ok(())
    }
}

/// Solves `(G (x) I + rho (F'F + D'D)) beta = X'Y/n + rho A'(z - u)`.
pub fn beta_update(
    system: &KroneckerSystem,
    moments: &Moments,
    ops: &ConstraintMatrices,
    state: &SolverState,
) -> Result<DMatrix<f64>> {
    let m = ops.m();
    let rho = state.rho;
    let gf: Vec<f64> = state.gamma.iter().zip(&state.u[..m]).map(|(g, u)| rho * (g - u)).collect();
    let ed: Vec<f64> = state.eta.iter().zip(&state.u[m..]).map(|(e, u)| rho * (e - u)).collect();
    let mut rhs = moments.xty.clone();
    ops.f.apply_t_add(&gf, &mut rhs);
    ops.d.apply_t_add(&ed, &mut rhs);
    system.solve(&rhs, rho)
}

/// Block soft-thresholding of `F beta + u_F` per (variable, group) slice with
/// threshold `lambda1 * w / rho`.
pub fn gamma_update(
    ops: &ConstraintMatrices,
    beta: &DMatrix<f64>,
    u_f: &[f64],
    cfg: &PenaltyConfig,
    rho: f64,
) -> Vec<f64> {
    let mut gamma = ops.f.apply(beta);
    gamma.iter_mut().zip(u_f).for_each(|(g, u)| *g += u);
    let l1 = cfg.lambda1();
    for s in &ops.f.slices {
        let t = l1 * cfg.weights.groups[(s.var, s.group)] / rho;
        block_soft_threshold_in_place(&mut gamma[s.rows.clone()], t);
    }
    gamma
}

/// Scalar soft-thresholding of `D beta + u_D` with threshold `lambda2 * w / rho`.
pub fn eta_update(
    ops: &ConstraintMatrices,
    beta: &DMatrix<f64>,
    u_d: &[f64],
    cfg: &PenaltyConfig,
    rho: f64,
) -> Vec<f64> {
    let l2 = cfg.lambda2();
    ops.d
        .apply(beta)
        .into_iter()
        .zip(u_d)
        .zip(&ops.d.rows)
        .map(|((v, u), r)| soft_threshold(v + u, l2 * cfg.weights.pairs[(r.var, r.pair)] / rho))
        .collect()
}

/// `u += A beta - z`, i.e. `nu += rho (A beta - z)`. Returns the primal residual.
pub fn dual_update(ops: &ConstraintMatrices, state: &mut SolverState) -> Vec<f64> {
    let r = primal_residual(ops, &state.beta, &state.gamma, &state.eta);
    state.u.iter_mut().zip(&r).for_each(|(u, r)| *u += r);
    r
}

pub(crate) fn primal_residual(
    ops: &ConstraintMatrices,
    beta: &DMatrix<f64>,
    gamma: &[f64],
    eta: &[f64],
) -> Vec<f64> {
    let mut r = ops.f.apply(beta);
    r.iter_mut().zip(gamma).for_each(|(a, g)| *a -= g);
    let mut rd = ops.d.apply(beta);
    rd.iter_mut().zip(eta).for_each(|(a, e)| *a -= e);
    r.extend(rd);
    r
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Convergence {
    pub converged: bool,
    pub primal: f64,
    pub dual: f64,
    pub primal_tol: f64,
    pub dual_tol: f64,
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Stopping rule with `r = A beta - z` and `s = rho A'(z - z_prev)`:
/// `||r|| <= sqrt(m + e) eps_abs + eps_rel max(||A beta||, ||z||)` and
/// `||s|| <= sqrt(Kp) eps_abs + eps_rel ||A' nu||`.
pub fn check_convergence(
    ops: &ConstraintMatrices,
    state: &SolverState,
    prev_gamma: &[f64],
    prev_eta: &[f64],
    opts: &SolverOptions,
) -> Convergence {
    let m = ops.m();
    let ab_f = ops.f.apply(&state.beta);
    let ab_d = ops.d.apply(&state.beta);
    let r: Vec<f64> = ab_f
        .iter()
        .zip(&state.gamma)
        .map(|(a, g)| a - g)
        .chain(ab_d.iter().zip(&state.eta).map(|(a, e)| a - e))
        .collect();
    let ab_norm = (norm(&ab_f).powi(2) + norm(&ab_d).powi(2)).sqrt();
    let z_norm = (norm(&state.gamma).powi(2) + norm(&state.eta).powi(2)).sqrt();

    let dg: Vec<f64> = state.gamma.iter().zip(prev_gamma).map(|(a, b)| a - b).collect();
    let de: Vec<f64> = state.eta.iter().zip(prev_eta).map(|(a, b)| a - b).collect();
    let mut s = ops.f.apply_t(&dg);
    ops.d.apply_t_add(&de, &mut s);
    let dual = state.rho * s.norm();

    let mut atu = ops.f.apply_t(&state.u[..m]);
    ops.d.apply_t_add(&state.u[m..], &mut atu);
    let at_nu = state.rho * atu.norm();

    let primal = norm(&r);
    let primal_tol = ((m + ops.e()) as f64).sqrt() * opts.eps_abs + opts.eps_rel * ab_norm.max(z_norm);
    let dual_tol = (state.beta.len() as f64).sqrt() * opts.eps_abs + opts.eps_rel * at_nu;
    Convergence {
        converged: primal <= primal_tol && dual <= dual_tol,
        primal,
        dual,
        primal_tol,
        dual_tol,
    }
}

/// Residual balancing. Rescales the scaled dual so `nu` is unchanged.
/// Returns whether `rho` changed.
pub fn update_rho(state: &mut SolverState, primal: f64, dual: f64, opts: &SolverOptions) -> bool {
    let factor = if primal > opts.rho_mu * dual {
        opts.rho_tau
    } else if dual > opts.rho_mu * primal {
        1.0 / opts.rho_tau
    } else {
        return false;
    };
    state.rho *= factor;
    state.u.iter_mut().for_each(|u| *u /= factor);
    true
}

/// Augmented Lagrangian in unscaled form.
pub fn augmented_lagrangian(
    moments: &Moments,
    ops: &ConstraintMatrices,
    cfg: &PenaltyConfig,
    beta: &DMatrix<f64>,
    gamma: &[f64],
    eta: &[f64],
    u: &[f64],
    rho: f64,
) -> f64 {
    let mut p1 = 0.0;
    for s in &ops.f.slices {
        p1 += cfg.weights.groups[(s.var, s.group)] * norm(&gamma[s.rows.clone()]);
    }
    let p2: f64 = ops
        .d
        .rows
        .iter()
        .zip(eta)
        .map(|(r, e)| cfg.weights.pairs[(r.var, r.pair)] * e.abs())
        .sum();
    let r = primal_residual(ops, beta, gamma, eta);
    let lin: f64 = r.iter().zip(u).map(|(r, u)| r * u).sum::<f64>() * rho;
    moments.loss(beta) + cfg.lambda1() * p1 + cfg.lambda2() * p2 + lin + 0.5 * rho * norm(&r).powi(2)
}
