//! Outcome groupings, fuse pairs and the ADMM constraint operators.
//!
//! Outcome indices are 0-based throughout the library; the text formats
//! in [`crate::io`] are 1-based and converted on parse.
//!
//! Coefficients are vectorized column-major: `vec(beta)[j + k * p] = beta[(j, k)]`.
//! Rows of `F` and `D` are ordered variable-major, then by group (level
//! order, then within-level order) or by fuse pair, then by outcome.

use std::collections::{BTreeMap, BTreeSet};
use std::ops::Range;

use nalgebra::DMatrix;
use nalgebra_sparse::{CooMatrix, CsrMatrix};

use crate::error::{Error, Result};
use crate::solver::FitResult;

/// A deduplicated outcome group.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Group {
    /// Sorted outcome indices.
    pub members: Vec<usize>,
    /// How many times the set appeared across levels. Weights of duplicates are summed.
    pub multiplicity: usize,
    /// Level of the first appearance.
    pub level: usize,
}

#[derive(Clone, Debug)]
pub struct OutcomeGrouping {
    k: usize,
    levels: Vec<Vec<Vec<usize>>>,
    groups: Vec<Group>,
    fuse_pairs: Vec<(usize, usize)>,
}

impl OutcomeGrouping {
    /// Full hierarchy: the all-outcomes group, then `user_levels`, then all singletons.
    ///
    /// Without explicit `fuse_pairs`, every within-group pair of the last user
    /// level is fused (none when no user level is given).
    pub fn build(
        k: usize,
        user_levels: &[Vec<Vec<usize>>],
        fuse_pairs: Option<&[(usize, usize)]>,
    ) -> Result<Self> {
        if k == 0 {
            return Err(Error::Grouping("need at least one outcome".into()));
        }
        for (m, level) in user_levels.iter().enumerate() {
            check_level(k, level, m + 1)?;
        }
        let mut levels = Vec::with_capacity(user_levels.len() + 2);
        levels.push(vec![(0..k).collect::<Vec<_>>()]);
        levels.extend(user_levels.iter().map(|l| normalize_level(l)));
        levels.push((0..k).map(|i| vec![i]).collect());

        let pairs = match fuse_pairs {
            Some(p) => p.to_vec(),
            None => match levels.len() {
                2 => Vec::new(),
                n => within_group_pairs(&levels[n - 2]),
            },
        };
        Self::assemble(k, levels, pairs)
    }

    /// A single level of arbitrary groups, with no auto-inserted levels.
    /// The groups must still cover every outcome.
    pub fn custom(k: usize, groups: &[Vec<usize>], fuse_pairs: &[(usize, usize)]) -> Result<Self> {
        if k == 0 {
            return Err(Error::Grouping("need at least one outcome".into()));
        }
        check_level(k, groups, 0)?;
        Self::assemble(k, vec![normalize_level(groups)], fuse_pairs.to_vec())
    }

    /// Singleton groups only and no fusion: the separate-lasso configuration.
    pub fn singletons(k: usize) -> Result<Self> {
        let groups: Vec<Vec<usize>> = (0..k).map(|i| vec![i]).collect();
        Self::custom(k, &groups, &[])
    }

    fn assemble(k: usize, levels: Vec<Vec<Vec<usize>>>, pairs: Vec<(usize, usize)>) -> Result<Self> {
        let mut seen: BTreeMap<Vec<usize>, usize> = BTreeMap::new();
        let mut groups: Vec<Group> = Vec::new();
        for (m, level) in levels.iter().enumerate() {
            for g in level {
                match seen.get(g) {
                    Some(&idx) => groups[idx].multiplicity += 1,
                    None => {
                        seen.insert(g.clone(), groups.len());
                        groups.push(Group {
                            members: g.clone(),
                            multiplicity: 1,
                            level: m,
                        });
                    }
                }
            }
        }

        let mut fuse_pairs = Vec::with_capacity(pairs.len());
        let mut pair_set = BTreeSet::new();
        for (a, b) in pairs {
            if a == b {
                return Err(Error::Grouping(format!("fuse pair ({a}, {b}) repeats an outcome")));
            }
            if a >= k || b >= k {
                return Err(Error::Grouping(format!(
                    "fuse pair ({a}, {b}) references an outcome >= {k}"
                )));
            }
            let pair = (a.min(b), a.max(b));
            if pair_set.insert(pair) {
                fuse_pairs.push(pair);
            }
        }

        Ok(OutcomeGrouping {
            k,
            levels,
            groups,
            fuse_pairs,
        })
    }

    pub fn k(&self) -> usize {
        self.k
    }
    pub fn levels(&self) -> &[Vec<Vec<usize>>] {
        &self.levels
    }
    pub fn groups(&self) -> &[Group] {
        &self.groups
    }
    pub fn fuse_pairs(&self) -> &[(usize, usize)] {
        &self.fuse_pairs
    }
    pub fn n_groups(&self) -> usize {
        self.groups.len()
    }
    pub fn n_pairs(&self) -> usize {
        self.fuse_pairs.len()
    }

    /// Sum of group sizes; the number of F rows per variable.
    pub fn slots_per_variable(&self) -> usize {
        self.groups.iter().map(|g| g.members.len()).sum()
    }

    /// Number of (deduplicated) groups containing each outcome: the diagonal of F'F per variable.
    pub fn membership_counts(&self) -> Vec<usize> {
        let mut c = vec![0; self.k];
        for g in &self.groups {
            for &o in &g.members {
                c[o] += 1;
            }
        }
        c
    }

    /// Graph Laplacian of the fuse pairs: the per-variable block of D'D.
    pub fn fuse_laplacian(&self) -> DMatrix<f64> {
        let mut l = DMatrix::zeros(self.k, self.k);
        for &(a, b) in &self.fuse_pairs {
            l[(a, a)] += 1.0;
            l[(b, b)] += 1.0;
            l[(a, b)] -= 1.0;
            l[(b, a)] -= 1.0;
        }
        l
    }
}

fn normalize_level(level: &[Vec<usize>]) -> Vec<Vec<usize>> {
    level
        .iter()
        .map(|g| {
            let mut g = g.clone();
            g.sort_unstable();
            g.dedup();
            g
        })
        .collect()
}

fn check_level(k: usize, level: &[Vec<usize>], m: usize) -> Result<()> {
    let mut covered = vec![false; k];
    for g in level {
        if g.is_empty() {
            return Err(Error::Grouping(format!("level {m} contains an empty group")));
        }
        for &o in g {
            if o >= k {
                return Err(Error::Grouping(format!(
                    "level {m} references outcome {} but K = {k}",
                    o + 1
                )));
            }
            covered[o] = true;
        }
    }
    if let Some(missing) = covered.iter().position(|c| !c) {
        return Err(Error::Grouping(format!(
            "level {m} does not cover outcome {}",
            missing + 1
        )));
    }
    Ok(())
}

fn within_group_pairs(level: &[Vec<usize>]) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    for g in level {
        for (i, &a) in g.iter().enumerate() {
            for &b in &g[i + 1..] {
                out.push((a, b));
            }
        }
    }
    out
}

/// Rows of F belonging to one (variable, group) pair.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GroupSlice {
    pub var: usize,
    pub group: usize,
    pub rows: Range<usize>,
}

/// The row of D for one (variable, fuse pair).
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct PairRow {
    pub var: usize,
    pub pair: usize,
    /// Column of the +1 entry in vec(beta).
    pub plus: usize,
    /// Column of the -1 entry in vec(beta).
    pub minus: usize,
}

/// The group-copy operator F (m x Kp): each row selects one coefficient.
#[derive(Clone, Debug)]
pub struct GroupOperator {
    pub matrix: CsrMatrix<f64>,
    pub slices: Vec<GroupSlice>,
    cols: Vec<usize>,
    p: usize,
    k: usize,
}

impl GroupOperator {
    pub fn nrows(&self) -> usize {
        self.cols.len()
    }

    /// Column of vec(beta) selected by each row.
    pub fn cols(&self) -> &[usize] {
        &self.cols
    }

    /// `F vec(beta)`.
    pub fn apply(&self, beta: &DMatrix<f64>) -> Vec<f64> {
        let b = beta.as_slice();
        self.cols.iter().map(|&c| b[c]).collect()
    }

    /// Adds `F' v` (reshaped to p x K) into `out`.
    pub fn apply_t_add(&self, v: &[f64], out: &mut DMatrix<f64>) {
        let o = out.as_mut_slice();
        for (&c, &x) in self.cols.iter().zip(v) {
            o[c] += x;
        }
    }

    pub fn apply_t(&self, v: &[f64]) -> DMatrix<f64> {
        let mut out = DMatrix::zeros(self.p, self.k);
        self.apply_t_add(v, &mut out);
        out
    }
}

/// The fused-difference operator D (e x Kp).
#[derive(Clone, Debug)]
pub struct FuseOperator {
    pub matrix: CsrMatrix<f64>,
    pub rows: Vec<PairRow>,
    p: usize,
    k: usize,
}

impl FuseOperator {
    pub fn nrows(&self) -> usize {
        self.rows.len()
    }

    pub fn apply(&self, beta: &DMatrix<f64>) -> Vec<f64> {
        let b = beta.as_slice();
        self.rows.iter().map(|r| b[r.plus] - b[r.minus]).collect()
    }

    pub fn apply_t_add(&self, v: &[f64], out: &mut DMatrix<f64>) {
        let o = out.as_mut_slice();
        for (r, &x) in self.rows.iter().zip(v) {
            o[r.plus] += x;
            o[r.minus] -= x;
        }
    }

    pub fn apply_t(&self, v: &[f64]) -> DMatrix<f64> {
        let mut out = DMatrix::zeros(self.p, self.k);
        self.apply_t_add(v, &mut out);
        out
    }
}

pub fn build_f(grouping: &OutcomeGrouping, p: usize) -> GroupOperator {
    let k = grouping.k();
    let m = p * grouping.slots_per_variable();
    let mut coo = CooMatrix::new(m, k * p);
    let mut cols = Vec::with_capacity(m);
    let mut slices = Vec::with_capacity(p * grouping.n_groups());
    for j in 0..p {
        for (gi, g) in grouping.groups().iter().enumerate() {
            let start = cols.len();
            for &o in &g.members {
                let c = j + o * p;
                coo.push(cols.len(), c, 1.0);
                cols.push(c);
            }
            slices.push(GroupSlice {
                var: j,
                group: gi,
                rows: start..cols.len(),
            });
        }
    }
    GroupOperator {
        matrix: CsrMatrix::from(&coo),
        slices,
        cols,
        p,
        k,
    }
}

pub fn build_d(grouping: &OutcomeGrouping, p: usize) -> FuseOperator {
    let k = grouping.k();
    let e = p * grouping.n_pairs();
    let mut coo = CooMatrix::new(e, k * p);
    let mut rows = Vec::with_capacity(e);
    for j in 0..p {
        for (pi, &(l, o)) in grouping.fuse_pairs().iter().enumerate() {
            let r = PairRow {
                var: j,
                pair: pi,
                plus: j + l * p,
                minus: j + o * p,
            };
            coo.push(rows.len(), r.plus, 1.0);
            coo.push(rows.len(), r.minus, -1.0);
            rows.push(r);
        }
    }
    FuseOperator {
        matrix: CsrMatrix::from(&coo),
        rows,
        p,
        k,
    }
}

/// `A = [F; D]` for a fixed grouping and predictor count.
#[derive(Clone, Debug)]
pub struct ConstraintMatrices {
    pub f: GroupOperator,
    pub d: FuseOperator,
}

impl ConstraintMatrices {
    pub fn new(grouping: &OutcomeGrouping, p: usize) -> Self {
        ConstraintMatrices {
            f: build_f(grouping, p),
            d: build_d(grouping, p),
        }
    }

    pub fn m(&self) -> usize {
        self.f.nrows()
    }
    pub fn e(&self) -> usize {
        self.d.nrows()
    }
}

/// Complement of the union of all groups (expanded per variable) that miss `nonzero`.
/// Indices are positions in vec(beta).
pub fn compute_hull(
    grouping: &OutcomeGrouping,
    p: usize,
    nonzero: &BTreeSet<usize>,
) -> BTreeSet<usize> {
    let total = p * grouping.k();
    let mut removed = vec![false; total];
    for j in 0..p {
        for g in grouping.groups() {
            let disjoint = g.members.iter().all(|&o| !nonzero.contains(&(j + o * p)));
            if disjoint {
                for &o in &g.members {
                    removed[j + o * p] = true;
                }
            }
        }
    }
    (0..total).filter(|&i| !removed[i]).collect()
}

/// A fused pair of outcomes `(l, o)` for variable `var`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub struct FusedPair {
    pub var: usize,
    pub l: usize,
    pub o: usize,
}

/// Support and fused-equality set of a fit, read from its working-scale coefficients.
///
/// A coefficient is in the support when `|beta| > tol_zero`. A fuse pair is
/// fused for variable `j` when both coefficients are in the support and
/// either their difference is at most `tol_fuse` or the matching `eta`
/// entry is exactly zero.
pub fn detect_structure(
    fit: &FitResult,
    grouping: &OutcomeGrouping,
    tol_zero: f64,
    tol_fuse: f64,
) -> (BTreeSet<usize>, Vec<FusedPair>) {
    let beta = &fit.beta_std;
    let p = beta.nrows();
    let support: BTreeSet<usize> = beta
        .iter()
        .enumerate()
        .filter(|(_, v)| v.abs() > tol_zero)
        .map(|(i, _)| i)
        .collect();
    let n_pairs = grouping.n_pairs();
    let mut fused = Vec::new();
    for j in 0..p {
        for (q, &(l, o)) in grouping.fuse_pairs().iter().enumerate() {
            let (a, b) = (j + l * p, j + o * p);
            if !(support.contains(&a) && support.contains(&b)) {
                continue;
            }
            // D rows are variable-major, one per pair.
            let eta_zero = fit.eta.get(j * n_pairs + q).is_some_and(|&e| e == 0.0);
            if eta_zero || (beta[(j, l)] - beta[(j, o)]).abs() <= tol_fuse {
                fused.push(FusedPair { var: j, l, o });
            }
        }
    }
    (support, fused)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dense(m: &CsrMatrix<f64>) -> DMatrix<f64> {
        let mut out = DMatrix::zeros(m.nrows(), m.ncols());
        for (i, j, v) in m.triplet_iter() {
            out[(i, j)] += *v;
        }
        out
    }

    #[test]
    fn paper_preset_grouping() {
        let level = vec![vec![0, 1, 2], vec![3, 4], vec![5, 6, 7]];
        let g = OutcomeGrouping::build(8, &[level], None).unwrap();
        assert_eq!(g.n_groups(), 12);
        assert_eq!(
            g.fuse_pairs(),
            &[(0, 1), (0, 2), (1, 2), (3, 4), (5, 6), (5, 7), (6, 7)]
        );
    }

    #[test]
    fn degenerate_groupings() {
        let g = OutcomeGrouping::build(3, &[], None).unwrap();
        assert_eq!(g.levels().len(), 2);
        assert_eq!(g.n_groups(), 4);
        assert!(g.fuse_pairs().is_empty());

        let g1 = OutcomeGrouping::build(1, &[], None).unwrap();
        assert_eq!(g1.n_groups(), 1);
        assert_eq!(g1.groups()[0].members, vec![0]);
        assert_eq!(g1.groups()[0].multiplicity, 2);
        assert!(g1.fuse_pairs().is_empty());
    }

    #[test]
    fn grouping_errors() {
        let err = OutcomeGrouping::build(3, &[vec![vec![0, 3]]], None).unwrap_err();
        assert!(err.to_string().contains("outcome 4"), "{err}");
        let err = OutcomeGrouping::build(3, &[vec![vec![0, 1]]], None).unwrap_err();
        assert!(err.to_string().contains("does not cover outcome 3"), "{err}");
        assert!(OutcomeGrouping::build(3, &[], Some(&[(1, 1)])).is_err());
        assert!(OutcomeGrouping::build(0, &[], None).is_err());
    }

    #[test]
    fn explicit_pairs_override_and_dedupe() {
        let level = vec![vec![0, 1, 2]];
        let g = OutcomeGrouping::build(3, &[level], Some(&[(2, 0), (0, 2), (1, 2)])).unwrap();
        assert_eq!(g.fuse_pairs(), &[(0, 2), (1, 2)]);
    }

    #[test]
    fn f_worked_example() {
        let g = OutcomeGrouping::custom(3, &[vec![0, 1], vec![1, 2]], &[]).unwrap();
        let f = build_f(&g, 1);
        let expected = DMatrix::from_row_slice(
            4,
            3,
            &[1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0],
        );
        assert_eq!(dense(&f.matrix), expected);
        assert_eq!(f.slices[1].rows, 2..4);
    }

    #[test]
    fn d_worked_example() {
        let g = OutcomeGrouping::custom(3, &[vec![0, 1, 2]], &[(0, 1), (1, 2)]).unwrap();
        let d = build_d(&g, 1);
        let expected = DMatrix::from_row_slice(2, 3, &[1.0, -1.0, 0.0, 0.0, 1.0, -1.0]);
        assert_eq!(dense(&d.matrix), expected);
    }

    #[test]
    fn single_group_f_is_identity() {
        let g = OutcomeGrouping::custom(3, &[vec![0, 1, 2]], &[]).unwrap();
        assert_eq!(dense(&build_f(&g, 1).matrix), DMatrix::identity(3, 3));
        let d = build_d(&g, 1);
        assert_eq!(d.nrows(), 0);
        assert!(d.apply(&DMatrix::from_element(1, 3, 1.0)).is_empty());
    }

    #[test]
    fn every_coefficient_appears_once_per_level() {
        let g = OutcomeGrouping::build(4, &[vec![vec![0, 1], vec![2, 3]]], None).unwrap();
        let p = 3;
        let f = build_f(&g, p);
        let mut count = vec![0; 4 * p];
        for &c in f.cols() {
            count[c] += 1;
        }
        assert!(count.iter().all(|&c| c == 3));
        // F'F is diagonal with those counts.
        let ftf = dense(&f.matrix).transpose() * dense(&f.matrix);
        assert_eq!(ftf, DMatrix::from_diagonal_element(12, 12, 3.0));
    }

    #[test]
    fn d_rows_have_one_plus_one_minus_same_variable() {
        let level = vec![vec![0, 1, 2], vec![3, 4]];
        let g = OutcomeGrouping::build(5, &[level], None).unwrap();
        let p = 4;
        let d = build_d(&g, p);
        let dm = dense(&d.matrix);
        for (r, row) in d.rows.iter().enumerate() {
            assert_eq!(row.plus % p, row.minus % p);
            assert_eq!(dm[(r, row.plus)], 1.0);
            assert_eq!(dm[(r, row.minus)], -1.0);
            assert_eq!(dm.row(r).iter().filter(|v| **v != 0.0).count(), 2);
        }
        // D'D per variable equals the fuse Laplacian.
        let dtd = dm.transpose() * &dm;
        let lap = g.fuse_laplacian();
        for a in 0..5 {
            for b in 0..5 {
                assert_eq!(dtd[(1 + a * p, 1 + b * p)], lap[(a, b)]);
            }
        }
    }

    #[test]
    fn operators_match_sparse_matrices() {
        let g = OutcomeGrouping::build(4, &[vec![vec![0, 1], vec![1, 2, 3]]], None).unwrap();
        let p = 3;
        let a = ConstraintMatrices::new(&g, p);
        let beta = DMatrix::from_fn(p, 4, |j, k| (j as f64 + 1.0) * 0.7 - k as f64 * 1.3);
        let v = nalgebra::DVector::from_column_slice(beta.as_slice());
        let fb = dense(&a.f.matrix) * &v;
        assert_eq!(a.f.apply(&beta), fb.as_slice());
        let db = dense(&a.d.matrix) * &v;
        assert_eq!(a.d.apply(&beta), db.as_slice());
        let w: Vec<f64> = (0..a.m()).map(|i| i as f64 * 0.25 - 1.0).collect();
        let ftw = dense(&a.f.matrix).transpose() * nalgebra::DVector::from_vec(w.clone());
        assert_eq!(a.f.apply_t(&w).as_slice(), ftw.as_slice());
    }

    #[test]
    fn hull_examples() {
        let g = OutcomeGrouping::custom(3, &[vec![0, 1], vec![1, 2]], &[]).unwrap();
        let h = compute_hull(&g, 1, &BTreeSet::from([1]));
        assert_eq!(h, BTreeSet::from([0, 1, 2]));
        let h = compute_hull(&g, 1, &BTreeSet::from([0]));
        assert_eq!(h, BTreeSet::from([0]));
    }

    #[test]
    fn hull_with_singletons_is_identity() {
        let g = OutcomeGrouping::build(5, &[vec![vec![0, 1, 2], vec![3, 4]]], None).unwrap();
        let j: BTreeSet<usize> = [0, 3, 7, 8, 14].into_iter().collect();
        assert_eq!(compute_hull(&g, 3, &j), j);
    }

    proptest::proptest! {
        #[test]
        fn hull_is_monotone_and_extensive(
            a in proptest::collection::btree_set(0usize..12, 0..12),
            extra in proptest::collection::btree_set(0usize..12, 0..6),
        ) {
            let g = OutcomeGrouping::custom(4, &[vec![0, 1], vec![1, 2, 3], vec![0, 3]], &[]).unwrap();
            let b: BTreeSet<usize> = a.union(&extra).copied().collect();
            let ha = compute_hull(&g, 3, &a);
            let hb = compute_hull(&g, 3, &b);
            proptest::prop_assert!(a.is_subset(&ha));
            proptest::prop_assert!(ha.is_subset(&hb));
        }
    }
}
