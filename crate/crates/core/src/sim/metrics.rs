//! Evaluation metrics for simulated fits.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

fn same_shape(a: &DMatrix<f64>, b: &DMatrix<f64>, what: &'static str) -> Result<()> {
    if a.nrows() != b.nrows() {
        return Err(Error::dim(what, b.nrows(), a.nrows()));
    }
    if a.ncols() != b.ncols() {
        return Err(Error::dim(what, b.ncols(), a.ncols()));
    }
    Ok(())
}

/// `tr[(B - B0)' S (B - B0)]`.
pub fn model_error(beta_hat: &DMatrix<f64>, beta0: &DMatrix<f64>, sigma_x: &DMatrix<f64>) -> Result<f64> {
    same_shape(beta_hat, beta0, "coefficient rows")?;
    let p = beta0.nrows();
    if sigma_x.shape() != (p, p) {
        return Err(Error::dim("rows of sigma_x", p, sigma_x.nrows()));
    }
    let scale = sigma_x.amax().max(1.0);
    if (sigma_x - sigma_x.transpose()).amax() > 1e-12 * scale {
        return Err(Error::InvalidArgument("sigma_x is not symmetric".into()));
    }
    let d = beta_hat - beta0;
    Ok((d.transpose() * sigma_x * &d).trace())
}

/// Per-outcome RMSE, averaged over outcomes.
pub fn avg_rmse(pred: &DMatrix<f64>, y: &DMatrix<f64>) -> Result<f64> {
    same_shape(pred, y, "prediction rows")?;
    let n = y.nrows() as f64;
    let k = y.ncols();
    Ok((0..k)
        .map(|c| ((pred.column(c) - y.column(c)).norm_squared() / n).sqrt())
        .sum::<f64>()
        / k as f64)
}

/// `(TPR + TNR) / 2` of an estimated support against the nonzeros of `beta0`,
/// with `max(1, .)` denominators.
pub fn balanced_accuracy(support: &DMatrix<bool>, beta0: &DMatrix<f64>) -> f64 {
    assert_eq!(support.shape(), beta0.shape(), "support and beta0 shapes differ");
    let (mut tp, mut pos, mut tn, mut neg) = (0usize, 0usize, 0usize, 0usize);
    for (&s, &b) in support.iter().zip(beta0.iter()) {
        if b != 0.0 {
            pos += 1;
            tp += s as usize;
        } else {
            neg += 1;
            tn += (!s) as usize;
        }
    }
    0.5 * (tp as f64 / pos.max(1) as f64 + tn as f64 / neg.max(1) as f64)
}

/// Per-outcome `1 - SSE / SST`, SST about the column mean of `y`.
pub fn validation_r2(pred: &DMatrix<f64>, y: &DMatrix<f64>) -> Result<DVector<f64>> {
    same_shape(pred, y, "prediction rows")?;
    Ok(DVector::from_fn(y.ncols(), |c, _| {
        let col = y.column(c);
        let mean = col.mean();
        let sst: f64 = col.iter().map(|v| (v - mean).powi(2)).sum();
        let sse = (pred.column(c) - col).norm_squared();
        1.0 - sse / sst
    }))
}
