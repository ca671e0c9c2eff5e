//! Data-generating processes for the simulation study.
//!
//! Every generator consumes a fixed number of draws from the stream no
//! matter the probabilities, so scenarios that differ only in `p_hs` or
//! `p_ge` share the same designs and noise for a given seed.

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;

use super::SimulationScenario;
use crate::data::ProblemData;
use crate::error::Result;

pub const EFFECT_SIZES: [f64; 8] = [-1.0, -0.5, -0.25, -0.125, 0.125, 0.25, 0.5, 1.0];

/// Upper cut points of ordinal levels 1..7; level 8 is everything above 2.
pub const ORDINAL_CUTS: [f64; 7] = [-2.0, -1.0, -0.5, 0.0, 0.5, 1.0, 2.0];

#[derive(Clone, Debug, PartialEq)]
pub struct TrueModel {
    pub beta0: DMatrix<f64>,
    pub sigma_x: DMatrix<f64>,
    pub sigma_eps: DMatrix<f64>,
    /// Individual-effect indicators, p x K.
    pub xi: DMatrix<u8>,
    /// Group indicators, p x (number of outcome groups).
    pub xi_group: DMatrix<u8>,
}

/// `scale * rho^|i - j|`.
pub fn ar1_covariance(dim: usize, rho: f64, scale: f64) -> DMatrix<f64> {
    DMatrix::from_fn(dim, dim, |i, j| scale * rho.powi((i as i32 - j as i32).abs()))
}

/// Ordinal level in 1..=8 of a latent value: level 1 up to -2, level 8 above 2.
pub fn ordinal_level(latent: f64) -> u8 {
    1 + ORDINAL_CUTS.iter().filter(|&&c| latent > c).count() as u8
}

fn bernoulli<R: Rng + ?Sized>(rng: &mut R, p: f64) -> u8 {
    (rng.random::<f64>() < p) as u8
}

pub fn gen_beta0<R: Rng + ?Sized>(sc: &SimulationScenario, rng: &mut R) -> TrueModel {
    let (p, k) = (sc.p, sc.k);
    let groups = &sc.groups;
    let z = sc.z_effective();
    let mut xi = DMatrix::<u8>::zeros(p, k);
    let mut xi_group = DMatrix::<u8>::zeros(p, groups.len());
    let mut beta0 = DMatrix::zeros(p, k);
    let mut group_of = vec![0; k];
    for (g, members) in groups.iter().enumerate() {
        for &o in members {
            group_of[o] = g;
        }
    }
    for j in 0..z {
        for o in 0..k {
            xi[(j, o)] = bernoulli(rng, 0.9);
        }
        for g in 0..groups.len() {
            xi_group[(j, g)] = bernoulli(rng, 1.0 - sc.p_hs);
        }
        let mut effect: Vec<f64> = (0..k).map(|_| EFFECT_SIZES[rng.random_range(0..8)]).collect();
        let within = rng.random::<f64>() < sc.p_ge / 2.0;
        let all = rng.random::<f64>() < sc.p_ge / 2.0;
        if within {
            for members in groups {
                let first = effect[members[0]];
                for &o in members {
                    effect[o] = first;
                }
            }
        }
        if all {
            let first = effect[0];
            effect.iter_mut().for_each(|e| *e = first);
        }
        for o in 0..k {
            beta0[(j, o)] = (xi[(j, o)] * xi_group[(j, group_of[o])]) as f64 * effect[o];
        }
    }
    TrueModel {
        beta0,
        sigma_x: ar1_covariance(p, sc.ar_rho_x, 1.0),
        sigma_eps: ar1_covariance(k, sc.ar_rho_eps, sc.sigma_scale),
        xi,
        xi_group,
    }
}

/// Rows of a stationary AR(1) Gaussian vector scaled by `sd`, giving
/// covariance `sd^2 * rho^|i - j|`. The recursion is the closed-form
/// Cholesky factor of the AR(1) correlation matrix.
fn ar1_rows<R: Rng + ?Sized>(rng: &mut R, n: usize, dim: usize, rho: f64, sd: f64) -> DMatrix<f64> {
    let innov = (1.0 - rho * rho).sqrt();
    let mut out = DMatrix::zeros(n, dim);
    for i in 0..n {
        let mut prev = 0.0;
        for j in 0..dim {
            let e: f64 = rng.sample(StandardNormal);
            let v = if j == 0 { e } else { rho * prev + innov * e };
            out[(i, j)] = sd * v;
            prev = v;
        }
    }
    out
}

fn gaussian_sample<R: Rng + ?Sized>(sc: &SimulationScenario, m: &TrueModel, rng: &mut R, n: usize) -> Result<ProblemData> {
    let x = ar1_rows(rng, n, sc.p, sc.ar_rho_x, 1.0);
    let eps = ar1_rows(rng, n, sc.k, sc.ar_rho_eps, sc.sigma_scale.sqrt());
    let y = &x * &m.beta0 + eps;
    ProblemData::new(x, y)
}

fn ordinal_sample<R: Rng + ?Sized>(sc: &SimulationScenario, m: &TrueModel, rng: &mut R, n: usize) -> Result<ProblemData> {
    let x = DMatrix::from_fn(n, sc.p, |_, _| bernoulli(rng, 0.2) as f64);
    let eps = ar1_rows(rng, n, sc.k, sc.ar_rho_eps, sc.sigma_scale.sqrt());
    let latent = &x * &m.beta0 + eps;
    let y = latent.map(|v| ordinal_level(v) as f64);
    ProblemData::new(x, y)
}

/// Training sample of size `n` and test sample of size `test_size`.
pub fn gen_gaussian_data<R: Rng + ?Sized>(
    sc: &SimulationScenario,
    m: &TrueModel,
    rng: &mut R,
) -> Result<(ProblemData, ProblemData)> {
    let train = gaussian_sample(sc, m, rng, sc.n)?;
    let test = gaussian_sample(sc, m, rng, sc.test_size)?;
    Ok((train, test))
}

pub fn gen_ordinal_data<R: Rng + ?Sized>(
    sc: &SimulationScenario,
    m: &TrueModel,
    rng: &mut R,
) -> Result<(ProblemData, ProblemData)> {
    let train = ordinal_sample(sc, m, rng, sc.n)?;
    let test = ordinal_sample(sc, m, rng, sc.test_size)?;
    Ok((train, test))
}
