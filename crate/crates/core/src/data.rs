//! Problem data, standardization metadata and coefficient containers.
//!
//! The solver never touches `X` row-by-row once a problem is set up: every
//! quantity it needs is a second-moment summary of the standardized data
//! (see [`Moments`]). This is what lets sparse designs stay sparse.

use nalgebra::{DMatrix, DVector};
use nalgebra_sparse::{CooMatrix, CsrMatrix};

use crate::error::{Error, Result};

/// Predictor storage. Sparse designs are kept in CSR form end-to-end.
#[derive(Clone, Debug)]
pub enum Design {
    Dense(DMatrix<f64>),
    Sparse(CsrMatrix<f64>),
}

impl Design {
    /// Builds a sparse design from 0-based `(row, col, value)` triplets.
    /// Duplicate entries are summed.
    pub fn sparse_from_triplets(
        nrows: usize,
        ncols: usize,
        triplets: &[(usize, usize, f64)],
    ) -> Result<Self> {
        let mut coo = CooMatrix::new(nrows, ncols);
        for &(i, j, v) in triplets {
            if i >= nrows || j >= ncols {
                return Err(Error::InvalidArgument(format!(
                    "sparse entry ({i}, {j}) outside {nrows}x{ncols}"
                )));
            }
            coo.push(i, j, v);
        }
        Ok(Design::Sparse(CsrMatrix::from(&coo)))
    }

    pub fn nrows(&self) -> usize {
        match self {
            Design::Dense(x) => x.nrows(),
            Design::Sparse(x) => x.nrows(),
        }
    }

    pub fn ncols(&self) -> usize {
        match self {
            Design::Dense(x) => x.ncols(),
            Design::Sparse(x) => x.ncols(),
        }
    }

    pub fn is_sparse(&self) -> bool {
        matches!(self, Design::Sparse(_))
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        match self {
            Design::Dense(x) => x.clone(),
            Design::Sparse(x) => {
                let mut out = DMatrix::zeros(x.nrows(), x.ncols());
                for (i, row) in x.row_iter().enumerate() {
                    for (&j, &v) in row.col_indices().iter().zip(row.values()) {
                        out[(i, j)] += v;
                    }
                }
                out
            }
        }
    }

    /// `X * b` for a `p x K` matrix `b`.
    pub fn mul(&self, b: &DMatrix<f64>) -> DMatrix<f64> {
        match self {
            Design::Dense(x) => x * b,
            Design::Sparse(x) => {
                let mut out = DMatrix::zeros(x.nrows(), b.ncols());
                for (i, row) in x.row_iter().enumerate() {
                    for (&j, &v) in row.col_indices().iter().zip(row.values()) {
                        for k in 0..b.ncols() {
                            out[(i, k)] += v * b[(j, k)];
                        }
                    }
                }
                out
            }
        }
    }

    /// `X' X` (unscaled).
    pub fn gram(&self) -> DMatrix<f64> {
        match self {
            Design::Dense(x) => x.tr_mul(x),
            Design::Sparse(x) => {
                let p = x.ncols();
                let mut g = DMatrix::zeros(p, p);
                for row in x.row_iter() {
                    let idx = row.col_indices();
                    let val = row.values();
                    for (a, &ja) in idx.iter().enumerate() {
                        for (b, &jb) in idx.iter().enumerate() {
                            g[(ja, jb)] += val[a] * val[b];
                        }
                    }
                }
                g
            }
        }
    }

    /// `X' Y` (unscaled).
    pub fn t_mul(&self, y: &DMatrix<f64>) -> DMatrix<f64> {
        match self {
            Design::Dense(x) => x.tr_mul(y),
            Design::Sparse(x) => {
                let mut out = DMatrix::zeros(x.ncols(), y.ncols());
                for (i, row) in x.row_iter().enumerate() {
                    for (&j, &v) in row.col_indices().iter().zip(row.values()) {
                        for k in 0..y.ncols() {
                            out[(j, k)] += v * y[(i, k)];
                        }
                    }
                }
                out
            }
        }
    }

    pub fn col_sums(&self) -> DVector<f64> {
        match self {
            Design::Dense(x) => x.row_sum().transpose(),
            Design::Sparse(x) => {
                let mut s = DVector::zeros(x.ncols());
                for row in x.row_iter() {
                    for (&j, &v) in row.col_indices().iter().zip(row.values()) {
                        s[j] += v;
                    }
                }
                s
            }
        }
    }

    pub fn select_rows(&self, rows: &[usize]) -> Design {
        match self {
            Design::Dense(x) => Design::Dense(x.select_rows(rows)),
            Design::Sparse(x) => {
                let mut coo = CooMatrix::new(rows.len(), x.ncols());
                for (new_i, &i) in rows.iter().enumerate() {
                    let row = x.row(i);
                    for (&j, &v) in row.col_indices().iter().zip(row.values()) {
                        coo.push(new_i, j, v);
                    }
                }
                Design::Sparse(CsrMatrix::from(&coo))
            }
        }
    }

    fn first_non_finite(&self) -> Option<(usize, usize)> {
        match self {
            Design::Dense(x) => first_non_finite(x),
            Design::Sparse(x) => x
                .triplet_iter()
                .find(|(_, _, v)| !v.is_finite())
                .map(|(i, j, _)| (i, j)),
        }
    }
}

impl From<DMatrix<f64>> for Design {
    fn from(x: DMatrix<f64>) -> Self {
        Design::Dense(x)
    }
}

fn first_non_finite(m: &DMatrix<f64>) -> Option<(usize, usize)> {
    for j in 0..m.ncols() {
        for i in 0..m.nrows() {
            if !m[(i, j)].is_finite() {
                return Some((i, j));
            }
        }
    }
    None
}

/// Which columns get scaled to unit (population) standard deviation.
/// Centering of both X and Y is always applied.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Standardization {
    pub scale_x: bool,
    pub scale_y: bool,
}

impl Default for Standardization {
    fn default() -> Self {
        Standardization {
            scale_x: true,
            scale_y: false,
        }
    }
}

impl Standardization {
    pub fn center_only() -> Self {
        Standardization {
            scale_x: false,
            scale_y: false,
        }
    }
}

/// Predictors `X` (n x p), responses `Y` (n x K), and column summaries.
#[derive(Clone, Debug)]
pub struct ProblemData {
    x: Design,
    y: DMatrix<f64>,
    center_x: DVector<f64>,
    scale_x: DVector<f64>,
    center_y: DVector<f64>,
    scale_y: DVector<f64>,
    screened: Vec<usize>,
    standardization: Standardization,
}

impl ProblemData {
    pub fn new(x: impl Into<Design>, y: DMatrix<f64>) -> Result<Self> {
        Self::with_standardization(x, y, Standardization::default())
    }

    pub fn with_standardization(
        x: impl Into<Design>,
        y: DMatrix<f64>,
        standardization: Standardization,
    ) -> Result<Self> {
        let x = x.into();
        let n = x.nrows();
        if n == 0 {
            return Err(Error::InvalidArgument("X has no rows".into()));
        }
        if y.nrows() != n {
            return Err(Error::dim("rows of Y", n, y.nrows()));
        }
        if x.ncols() == 0 || y.ncols() == 0 {
            return Err(Error::InvalidArgument(
                "X and Y need at least one column each".into(),
            ));
        }
        if let Some((row, col)) = x.first_non_finite() {
            return Err(Error::NonFinite { what: "X", row, col });
        }
        if let Some((row, col)) = first_non_finite(&y) {
            return Err(Error::NonFinite { what: "Y", row, col });
        }

        let nf = n as f64;
        let center_x = x.col_sums() / nf;
        let ss = column_sq_sums(&x);
        let p = x.ncols();
        let mut scale_x = DVector::from_element(p, 1.0);
        let mut screened = Vec::new();
        for j in 0..p {
            let var = (ss[j] / nf - center_x[j] * center_x[j]).max(0.0);
            let sd = var.sqrt();
            if sd <= 1e-12 * (1.0 + center_x[j].abs()) {
                screened.push(j);
            } else if standardization.scale_x {
                scale_x[j] = sd;
            }
        }
        if !screened.is_empty() {
            log::warn!("zero-variance predictor columns screened: {screened:?}");
        }

        let center_y = y.row_sum().transpose() / nf;
        let mut scale_y = DVector::from_element(y.ncols(), 1.0);
        if standardization.scale_y {
            for k in 0..y.ncols() {
                let var = y
                    .column(k)
                    .iter()
                    .map(|v| (v - center_y[k]).powi(2))
                    .sum::<f64>()
                    / nf;
                if var > 0.0 {
                    scale_y[k] = var.sqrt();
                }
            }
        }

        Ok(ProblemData {
            x,
            y,
            center_x,
            scale_x,
            center_y,
            scale_y,
            screened,
            standardization,
        })
    }

    pub fn n(&self) -> usize {
        self.x.nrows()
    }
    pub fn p(&self) -> usize {
        self.x.ncols()
    }
    pub fn k(&self) -> usize {
        self.y.ncols()
    }
    pub fn x(&self) -> &Design {
        &self.x
    }
    pub fn y(&self) -> &DMatrix<f64> {
        &self.y
    }
    pub fn center_x(&self) -> &DVector<f64> {
        &self.center_x
    }
    pub fn scale_x(&self) -> &DVector<f64> {
        &self.scale_x
    }
    pub fn center_y(&self) -> &DVector<f64> {
        &self.center_y
    }
    pub fn scale_y(&self) -> &DVector<f64> {
        &self.scale_y
    }
    /// Zero-variance predictor columns. Their standardized column is zero,
    /// so the corresponding coefficients are always zero.
    pub fn screened(&self) -> &[usize] {
        &self.screened
    }
    pub fn standardization(&self) -> Standardization {
        self.standardization
    }

    /// Rows `rows` of this problem, with standardization recomputed on the subset.
    pub fn subset(&self, rows: &[usize]) -> Result<ProblemData> {
        ProblemData::with_standardization(
            self.x.select_rows(rows),
            self.y.select_rows(rows),
            self.standardization,
        )
    }

    /// Dense centered and scaled X.
    pub fn standardized_x(&self) -> DMatrix<f64> {
        let mut xs = standardize_matrix(&self.x.to_dense(), &self.center_x, &self.scale_x);
        for &j in &self.screened {
            xs.column_mut(j).fill(0.0);
        }
        xs
    }

    pub fn standardized_y(&self) -> DMatrix<f64> {
        standardize_matrix(&self.y, &self.center_y, &self.scale_y)
    }

    /// Problem whose raw X and Y are this problem's working (standardized)
    /// matrices, with identity standardization. Objectives computed on it with
    /// [`crate::penalty::eval_objective`] equal the objective the solver minimizes.
    pub fn working(&self) -> Result<ProblemData> {
        ProblemData::with_standardization(
            self.standardized_x(),
            self.standardized_y(),
            Standardization::center_only(),
        )
    }

    /// Maps a working-scale coefficient matrix to the original scale, with intercept.
    pub fn to_original(&self, beta_std: &DMatrix<f64>) -> CoefficientMatrix {
        let (p, k) = (self.p(), self.k());
        let mut beta = DMatrix::zeros(p, k);
        for kk in 0..k {
            for j in 0..p {
                beta[(j, kk)] = beta_std[(j, kk)] * self.scale_y[kk] / self.scale_x[j];
            }
        }
        for &j in &self.screened {
            beta.row_mut(j).fill(0.0);
        }
        let intercept = DVector::from_fn(k, |kk, _| {
            self.center_y[kk] - (0..p).map(|j| self.center_x[j] * beta[(j, kk)]).sum::<f64>()
        });
        CoefficientMatrix { beta, intercept }
    }

    /// Inverse of [`ProblemData::to_original`] on the slope part.
    pub fn to_working(&self, coef: &CoefficientMatrix) -> DMatrix<f64> {
        let (p, k) = (self.p(), self.k());
        DMatrix::from_fn(p, k, |j, kk| {
            coef.beta[(j, kk)] * self.scale_x[j] / self.scale_y[kk]
        })
    }
}

fn column_sq_sums(x: &Design) -> DVector<f64> {
    match x {
        Design::Dense(m) => DVector::from_fn(m.ncols(), |j, _| m.column(j).norm_squared()),
        Design::Sparse(m) => {
            let mut s = DVector::zeros(m.ncols());
            for row in m.row_iter() {
                for (&j, &v) in row.col_indices().iter().zip(row.values()) {
                    s[j] += v * v;
                }
            }
            s
        }
    }
}

/// `(x - center) / scale` column-wise.
pub fn standardize_matrix(
    x: &DMatrix<f64>,
    center: &DVector<f64>,
    scale: &DVector<f64>,
) -> DMatrix<f64> {
    DMatrix::from_fn(x.nrows(), x.ncols(), |i, j| (x[(i, j)] - center[j]) / scale[j])
}

/// `xs * scale + center` column-wise.
pub fn destandardize_matrix(
    xs: &DMatrix<f64>,
    center: &DVector<f64>,
    scale: &DVector<f64>,
) -> DMatrix<f64> {
    DMatrix::from_fn(xs.nrows(), xs.ncols(), |i, j| xs[(i, j)] * scale[j] + center[j])
}

/// Slope matrix (p x K) plus per-outcome intercept.
#[derive(Clone, Debug, PartialEq)]
pub struct CoefficientMatrix {
    pub beta: DMatrix<f64>,
    pub intercept: DVector<f64>,
}

impl CoefficientMatrix {
    pub fn zeros(p: usize, k: usize) -> Self {
        CoefficientMatrix {
            beta: DMatrix::zeros(p, k),
            intercept: DVector::zeros(k),
        }
    }

    pub fn from_beta(beta: DMatrix<f64>) -> Self {
        let k = beta.ncols();
        CoefficientMatrix {
            beta,
            intercept: DVector::zeros(k),
        }
    }

    pub fn p(&self) -> usize {
        self.beta.nrows()
    }
    pub fn k(&self) -> usize {
        self.beta.ncols()
    }
}

/// Second-moment summaries of a (working) regression problem, all divided by `n`.
///
/// The least-squares loss `(2n)^-1 ||Y - X b||_F^2` equals
/// `0.5 * (sum(yty) - 2 <xty, b> + <b, gram b>)`.
#[derive(Clone, Debug)]
pub struct Moments {
    pub n: usize,
    pub gram: DMatrix<f64>,
    pub xty: DMatrix<f64>,
    pub yty: DVector<f64>,
}

impl Moments {
    /// Moments of X and Y exactly as stored (no centering).
    pub fn raw(data: &ProblemData) -> Self {
        let nf = data.n() as f64;
        let yty = DVector::from_fn(data.k(), |k, _| data.y.column(k).norm_squared() / nf);
        Moments {
            n: data.n(),
            gram: data.x.gram() / nf,
            xty: data.x.t_mul(&data.y) / nf,
            yty,
        }
    }

    /// Moments of the centered and scaled problem the solver works on.
    pub fn working(data: &ProblemData) -> Self {
        let n = data.n();
        let nf = n as f64;
        let ys = data.standardized_y();
        let yty = DVector::from_fn(data.k(), |k, _| ys.column(k).norm_squared() / nf);
        let (gram, xty) = match &data.x {
            Design::Dense(_) => {
                let xs = data.standardized_x();
                (xs.tr_mul(&xs) / nf, xs.tr_mul(&ys) / nf)
            }
            Design::Sparse(_) => {
                // Centering via rank-one corrections keeps X sparse.
                let (p, k) = (data.p(), data.k());
                let g_raw = data.x.gram() / nf;
                let xy_raw = data.x.t_mul(&data.y) / nf;
                let mx = &data.center_x;
                let my = &data.center_y;
                let mut gram = DMatrix::from_fn(p, p, |a, b| {
                    (g_raw[(a, b)] - mx[a] * mx[b]) / (data.scale_x[a] * data.scale_x[b])
                });
                let mut xty = DMatrix::from_fn(p, k, |j, kk| {
                    (xy_raw[(j, kk)] - mx[j] * my[kk]) / (data.scale_x[j] * data.scale_y[kk])
                });
                for &j in &data.screened {
                    gram.row_mut(j).fill(0.0);
                    gram.column_mut(j).fill(0.0);
                    xty.row_mut(j).fill(0.0);
                }
                (gram, xty)
            }
        };
        Moments { n, gram, xty, yty }
    }

    pub fn p(&self) -> usize {
        self.gram.nrows()
    }
    pub fn k(&self) -> usize {
        self.xty.ncols()
    }

    pub fn loss(&self, beta: &DMatrix<f64>) -> f64 {
        let gb = &self.gram * beta;
        let quad = beta.dot(&gb);
        let lin = beta.dot(&self.xty);
        (0.5 * (self.yty.sum() - 2.0 * lin + quad)).max(0.0)
    }

    /// Gradient of the loss: `gram * b - xty`.
    pub fn gradient(&self, beta: &DMatrix<f64>) -> DMatrix<f64> {
        &self.gram * beta - &self.xty
    }
}

/// Predictions `X_new * beta + 1 * intercept'`.
pub fn predict(coef: &CoefficientMatrix, x_new: &Design) -> Result<DMatrix<f64>> {
    if x_new.ncols() != coef.p() {
        return Err(Error::dim("columns of X_new", coef.p(), x_new.ncols()));
    }
    let mut out = x_new.mul(&coef.beta);
    for k in 0..coef.k() {
        out.column_mut(k).add_scalar_mut(coef.intercept[k]);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn small() -> (DMatrix<f64>, DMatrix<f64>) {
        let x = DMatrix::from_row_slice(4, 2, &[1.0, 0.0, 2.0, 1.0, 3.0, 0.0, 4.0, 2.0]);
        let y = DMatrix::from_row_slice(4, 1, &[1.0, 2.0, 2.0, 5.0]);
        (x, y)
    }

    #[test]
    fn rejects_row_mismatch() {
        let x = DMatrix::<f64>::zeros(3, 2);
        let y = DMatrix::<f64>::zeros(4, 1);
        let err = ProblemData::new(x, y).unwrap_err();
        assert!(matches!(err, Error::Dimension { axis: "rows of Y", .. }));
    }

    #[test]
    fn rejects_nan() {
        let (mut x, y) = small();
        x[(2, 1)] = f64::NAN;
        let err = ProblemData::new(x, y).unwrap_err();
        assert!(matches!(err, Error::NonFinite { row: 2, col: 1, .. }));
    }

    #[test]
    fn screens_constant_columns() {
        let x = DMatrix::from_row_slice(3, 2, &[1.0, 5.0, 2.0, 5.0, 3.0, 5.0]);
        let y = DMatrix::from_row_slice(3, 1, &[1.0, 2.0, 3.0]);
        let d = ProblemData::new(x, y).unwrap();
        assert_eq!(d.screened(), &[1]);
        let m = Moments::working(&d);
        assert_eq!(m.gram[(1, 1)], 0.0);
    }

    #[test]
    fn sparse_and_dense_moments_agree() {
        let (x, y) = small();
        let trip: Vec<_> = (0..4)
            .flat_map(|i| (0..2).map(move |j| (i, j)))
            .filter(|&(i, j)| x[(i, j)] != 0.0)
            .map(|(i, j)| (i, j, x[(i, j)]))
            .collect();
        let xs = Design::sparse_from_triplets(4, 2, &trip).unwrap();
        let dense = Moments::working(&ProblemData::new(x, y.clone()).unwrap());
        let sparse = Moments::working(&ProblemData::new(xs, y).unwrap());
        assert_relative_eq!(dense.gram, sparse.gram, epsilon = 1e-12);
        assert_relative_eq!(dense.xty, sparse.xty, epsilon = 1e-12);
    }

    #[test]
    fn moments_loss_matches_direct_residual() {
        let (x, y) = small();
        let d = ProblemData::new(x, y).unwrap();
        let m = Moments::working(&d);
        let b = DMatrix::from_row_slice(2, 1, &[0.3, -0.7]);
        let r = d.standardized_y() - d.standardized_x() * &b;
        let direct = r.norm_squared() / (2.0 * d.n() as f64);
        assert_relative_eq!(m.loss(&b), direct, epsilon = 1e-12);
    }

    #[test]
    fn original_scale_round_trip() {
        let (x, y) = small();
        let d = ProblemData::new(x, y).unwrap();
        let b = DMatrix::from_row_slice(2, 1, &[0.3, -0.7]);
        let coef = d.to_original(&b);
        assert_relative_eq!(d.to_working(&coef), b, epsilon = 1e-14);
        // Predictions on the training X equal the working-scale fit plus the Y mean.
        let pred = predict(&coef, d.x()).unwrap();
        let work = d.standardized_x() * &b;
        for i in 0..d.n() {
            assert_relative_eq!(pred[(i, 0)], work[(i, 0)] + d.center_y()[0], epsilon = 1e-12);
        }
    }

    #[test]
    fn predict_zero_beta_is_intercept() {
        let coef = CoefficientMatrix {
            beta: DMatrix::zeros(2, 2),
            intercept: DVector::from_vec(vec![1.5, -2.0]),
        };
        let x = Design::Dense(DMatrix::zeros(1, 2));
        let pred = predict(&coef, &x).unwrap();
        assert_eq!(pred, DMatrix::from_row_slice(1, 2, &[1.5, -2.0]));
        let bad = Design::Dense(DMatrix::zeros(1, 3));
        assert!(predict(&coef, &bad).is_err());
    }

    proptest::proptest! {
        #[test]
        fn standardization_round_trips(
            vals in proptest::collection::vec(-1e3f64..1e3, 12),
            shift in -1e4f64..1e4,
        ) {
            let x = DMatrix::from_iterator(4, 3, vals.iter().map(|v| v + shift));
            let center = x.row_mean().transpose();
            let scale = DVector::from_fn(3, |j, _| {
                let c = x.column(j).add_scalar(-center[j]);
                (c.norm_squared() / 4.0).sqrt().max(1e-3)
            });
            let back = destandardize_matrix(&standardize_matrix(&x, &center, &scale), &center, &scale);
            for (a, b) in back.iter().zip(x.iter()) {
                proptest::prop_assert!((a - b).abs() <= 1e-12 * b.abs().max(1.0));
            }
        }
    }
}
