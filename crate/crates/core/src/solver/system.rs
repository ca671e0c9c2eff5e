//! The beta-step linear system.
//!
//! With vec(beta) stacked by outcome, the system matrix is
//! `I_K (x) G + rho * (M (x) I_p)` where `G` is the (scaled) Gram matrix and
//! `M = diag(group membership counts) + fuse Laplacian` is K x K. In matrix
//! form the system reads `G B + rho B M = R`. Diagonalizing `G = U L U'` and
//! `M = V S V'` once gives an exact solve for any `rho`:
//! `B = U [(U' R V) ./ (l_i + rho s_k)] V'`, so changing `rho` costs nothing.
//! `M` is positive definite whenever every outcome belongs to some group.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};
use crate::structure::OutcomeGrouping;

#[derive(Clone, Debug)]
pub struct KroneckerSystem {
    gram: DMatrix<f64>,
    coupling: DMatrix<f64>,
    gram_vectors: DMatrix<f64>,
    gram_values: DVector<f64>,
    coupling_vectors: DMatrix<f64>,
    coupling_values: DVector<f64>,
}

impl KroneckerSystem {
    pub fn new(gram: &DMatrix<f64>, grouping: &OutcomeGrouping) -> Result<Self> {
        let counts = grouping.membership_counts();
        if let Some(k) = counts.iter().position(|&c| c == 0) {
            return Err(Error::Grouping(format!("outcome {} belongs to no group", k + 1)));
        }
        let mut coupling = grouping.fuse_laplacian();
        for (k, &c) in counts.iter().enumerate() {
            coupling[(k, k)] += c as f64;
        }
        let ge = SymmetricEigen::new(gram.clone());
        let ce = SymmetricEigen::new(coupling.clone());
        let finite = ge.eigenvalues.iter().chain(ce.eigenvalues.iter()).all(|v| v.is_finite());
        if !finite {
            return Err(Error::LinearSolve("eigendecomposition produced non-finite values".into()));
        }
        // Round-off can leave tiny negative eigenvalues on a PSD Gram matrix.
        let gram_values = ge.eigenvalues.map(|v| v.max(0.0));
        Ok(KroneckerSystem {
            gram: gram.clone(),
            coupling,
            gram_vectors: ge.eigenvectors,
            gram_values,
            coupling_vectors: ce.eigenvectors,
            coupling_values: ce.eigenvalues,
        })
    }

    /// K x K matrix `M` such that `F'F + D'D = M (x) I_p`.
    pub fn coupling(&self) -> &DMatrix<f64> {
        &self.coupling
    }

    /// Solves `G B + rho B M = rhs`.
    pub fn solve(&self, rhs: &DMatrix<f64>, rho: f64) -> Result<DMatrix<f64>> {
        let mut t = self.gram_vectors.tr_mul(rhs) * &self.coupling_vectors;
        for k in 0..t.ncols() {
            let s = rho * self.coupling_values[k];
            for i in 0..t.nrows() {
                t[(i, k)] /= self.gram_values[i] + s;
            }
        }
        let b = &self.gram_vectors * t * self.coupling_vectors.transpose();
        if b.iter().any(|v| !v.is_finite()) {
            return Err(Error::LinearSolve(format!(
                "non-finite solution at rho = {rho:e}, rhs norm {:e}",
                rhs.norm()
            )));
        }
        Ok(b)
    }

    /// `G B + rho B M`.
    pub fn apply(&self, b: &DMatrix<f64>, rho: f64) -> DMatrix<f64> {
        &self.gram * b + b * &self.coupling * rho
    }

    pub fn relative_residual(&self, b: &DMatrix<f64>, rhs: &DMatrix<f64>, rho: f64) -> f64 {
        (self.apply(b, rho) - rhs).norm() / rhs.norm().max(f64::MIN_POSITIVE)
    }
}
