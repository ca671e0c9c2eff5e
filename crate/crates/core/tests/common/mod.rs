//! Reference solvers written against the textbook definitions, sharing no
//! code with the library.

#![allow(dead_code)]

use nalgebra::{DMatrix, DVector, SymmetricEigen};

/// Column-centered copy of `m`.
pub fn center(m: &DMatrix<f64>) -> DMatrix<f64> {
    let n = m.nrows() as f64;
    let mut out = m.clone();
    for mut c in out.column_iter_mut() {
        let mean = c.sum() / n;
        c.add_scalar_mut(-mean);
    }
    out
}

/// Centered columns divided by their population standard deviation.
pub fn standardize(m: &DMatrix<f64>) -> DMatrix<f64> {
    let n = m.nrows() as f64;
    let mut out = center(m);
    for mut c in out.column_iter_mut() {
        let sd = (c.norm_squared() / n).sqrt();
        c /= sd;
    }
    out
}

/// `(2n)^-1 ||Y - X B||^2 + l1 sum w_jg ||B_jG|| + l2 sum v_jq |B_jl - B_jo|`.
pub struct Penalized {
    pub x: DMatrix<f64>,
    pub y: DMatrix<f64>,
    /// Groups listed once per appearance in the hierarchy.
    pub groups: Vec<Vec<usize>>,
    /// `group_w[(j, g)]`.
    pub group_w: DMatrix<f64>,
    pub pairs: Vec<(usize, usize)>,
    pub pair_w: DMatrix<f64>,
    pub l1: f64,
    pub l2: f64,
}

impl Penalized {
    /// `sqrt(|G|)` per group appearance and 1 per pair.
    pub fn new(
        x: DMatrix<f64>,
        y: DMatrix<f64>,
        groups: Vec<Vec<usize>>,
        pairs: Vec<(usize, usize)>,
        l1: f64,
        l2: f64,
    ) -> Self {
        let p = x.ncols();
        let group_w = DMatrix::from_fn(p, groups.len(), |_, g| (groups[g].len() as f64).sqrt());
        let pair_w = DMatrix::from_element(p, pairs.len(), 1.0);
        Penalized {
            x,
            y,
            groups,
            group_w,
            pairs,
            pair_w,
            l1,
            l2,
        }
    }

    pub fn objective(&self, b: &DMatrix<f64>) -> f64 {
        let n = self.x.nrows() as f64;
        let r = &self.y - &self.x * b;
        let mut f = r.norm_squared() / (2.0 * n);
        for j in 0..b.nrows() {
            for (g, members) in self.groups.iter().enumerate() {
                let s: f64 = members.iter().map(|&k| b[(j, k)] * b[(j, k)]).sum();
                f += self.l1 * self.group_w[(j, g)] * s.sqrt();
            }
            for (q, &(l, o)) in self.pairs.iter().enumerate() {
                f += self.l2 * self.pair_w[(j, q)] * (b[(j, l)] - b[(j, o)]).abs();
            }
        }
        f
    }

    /// Subgradient with the zero element chosen at every kink.
    fn subgradient(&self, gram: &DMatrix<f64>, xty: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
        let mut g = gram * b - xty;
        for j in 0..b.nrows() {
            for (gi, members) in self.groups.iter().enumerate() {
                let s: f64 = members.iter().map(|&k| b[(j, k)] * b[(j, k)]).sum::<f64>().sqrt();
                if s > 0.0 {
                    let w = self.l1 * self.group_w[(j, gi)] / s;
                    for &k in members {
                        g[(j, k)] += w * b[(j, k)];
                    }
                }
            }
            for (q, &(l, o)) in self.pairs.iter().enumerate() {
                let d = b[(j, l)] - b[(j, o)];
                if d != 0.0 {
                    let w = self.l2 * self.pair_w[(j, q)] * d.signum();
                    g[(j, l)] += w;
                    g[(j, o)] -= w;
                }
            }
        }
        g
    }

    /// Projects `b` onto the face where groups of norm below `tau` vanish and
    /// pairs closer than `tau` are equal.
    fn project_face(&self, b: &DMatrix<f64>, tau: f64) -> DMatrix<f64> {
        let mut out = b.clone();
        for j in 0..b.nrows() {
            for members in &self.groups {
                let s: f64 = members.iter().map(|&k| b[(j, k)] * b[(j, k)]).sum::<f64>().sqrt();
                if s < tau {
                    for &k in members {
                        out[(j, k)] = 0.0;
                    }
                }
            }
            for &(l, o) in &self.pairs {
                if (out[(j, l)] - out[(j, o)]).abs() < tau {
                    let m = 0.5 * (out[(j, l)] + out[(j, o)]);
                    out[(j, l)] = m;
                    out[(j, o)] = m;
                }
            }
        }
        out
    }

    /// Subgradient descent from zero with steps `2 / (mu (t + 1))` for the
    /// strong-convexity modulus `mu` of the loss, and `t`-weighted iterate
    /// averaging. The averaged point is then projected onto the nearby
    /// zero/fusion faces at a range of thresholds. Returns the candidate with
    /// the smallest objective, which bounds the minimum from above.
    pub fn subgradient_oracle(&self, iters: usize) -> (DMatrix<f64>, f64) {
        let n = self.x.nrows() as f64;
        let gram = self.x.transpose() * &self.x / n;
        let xty = self.x.transpose() * &self.y / n;
        let mu = SymmetricEigen::new(gram.clone()).eigenvalues.min();
        assert!(mu > 0.0, "oracle needs a strongly convex loss");
        let (p, k) = (self.x.ncols(), self.y.ncols());
        let mut b = DMatrix::zeros(p, k);
        let mut avg = DMatrix::zeros(p, k);
        let mut wsum = 0.0;
        let mut best = (b.clone(), self.objective(&b));
        for t in 1..=iters {
            let g = self.subgradient(&gram, &xty, &b);
            b -= g * (2.0 / (mu * (t as f64 + 1.0)));
            let w = t as f64;
            wsum += w;
            avg += (&b - &avg) * (w / wsum);
            if t % 1000 == 0 {
                let f = self.objective(&b);
                if f < best.1 {
                    best = (b.clone(), f);
                }
            }
        }
        let mut cands = vec![avg.clone()];
        cands.extend([1e-3, 1e-4, 1e-5, 1e-6, 1e-7].iter().map(|&tau| self.project_face(&avg, tau)));
        for c in cands {
            let f = self.objective(&c);
            if f < best.1 {
                best = (c, f);
            }
        }
        best
    }
}

/// Cyclic coordinate descent for `(2n)^-1 ||y - X b||^2 + lambda ||b||_1`.
pub fn cd_lasso(x: &DMatrix<f64>, y: &DVector<f64>, lambda: f64) -> DVector<f64> {
    let n = x.nrows() as f64;
    let p = x.ncols();
    let col_sq: Vec<f64> = (0..p).map(|j| x.column(j).norm_squared() / n).collect();
    let mut b = DVector::zeros(p);
    let mut r = y.clone();
    for _ in 0..100_000 {
        let mut delta: f64 = 0.0;
        for j in 0..p {
            let rho: f64 = x.column(j).dot(&r) / n + col_sq[j] * b[j];
            let new = rho.signum() * (rho.abs() - lambda).max(0.0) / col_sq[j];
            let step = new - b[j];
            if step != 0.0 {
                r -= x.column(j) * step;
                b[j] = new;
                delta = delta.max(step.abs());
            }
        }
        if delta < 1e-14 {
            break;
        }
    }
    b
}

pub fn lasso_objective(x: &DMatrix<f64>, y: &DVector<f64>, b: &DVector<f64>, lambda: f64) -> f64 {
    (y - x * b).norm_squared() / (2.0 * x.nrows() as f64) + lambda * b.iter().map(|v| v.abs()).sum::<f64>()
}

/// Least squares with intercept, slopes only.
pub fn ols_slopes(x: &DMatrix<f64>, y: &DMatrix<f64>) -> DMatrix<f64> {
    let xc = center(x);
    let yc = center(y);
    (xc.transpose() * &xc).lu().solve(&(xc.transpose() * yc)).expect("full rank")
}

/// Least squares in which every outcome of a group shares one coefficient
/// per variable: each group's common slopes are the OLS fit of the group's
/// mean response.
pub fn collapsed_ols(x: &DMatrix<f64>, y: &DMatrix<f64>, groups: &[Vec<usize>]) -> DMatrix<f64> {
    let mut out = DMatrix::zeros(x.ncols(), y.ncols());
    for g in groups {
        let mean = DMatrix::from_fn(y.nrows(), 1, |i, _| g.iter().map(|&k| y[(i, k)]).sum::<f64>() / g.len() as f64);
        let theta = ols_slopes(x, &mean);
        for &k in g {
            out.set_column(k, &theta.column(0));
        }
    }
    out
}
