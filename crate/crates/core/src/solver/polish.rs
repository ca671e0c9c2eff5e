//! Support polishing.
//!
//! ADMM's beta iterate is dense; the exact zeros live in gamma and eta. Polishing
//! reads the zero and fusion pattern from those, collapses beta onto it, and
//! minimizes the objective restricted to that face with damped Newton steps.
//! On the face every nonzero group norm and every unfused difference is
//! smooth, so the restricted problem is smooth and convex.

use nalgebra::{Cholesky, DMatrix, DVector};

use super::FitContext;
use crate::penalty::PenaltyConfig;

/// Newton is skipped above this many free parameters; the collapsed iterate is used as is.
const MAX_NEWTON_DIM: usize = 1500;
const MAX_NEWTON_STEPS: usize = 50;

struct Cluster {
    var: usize,
    outcomes: Vec<usize>,
}

fn find(parent: &mut [usize], mut i: usize) -> usize {
    while parent[i] != i {
        parent[i] = parent[parent[i]];
        i = parent[i];
    }
    i
}

/// Returns the polished working-scale beta.
pub(crate) fn polish(
    ctx: &FitContext<'_>,
    cfg: &PenaltyConfig,
    beta: &DMatrix<f64>,
    gamma: &[f64],
    eta: &[f64],
) -> DMatrix<f64> {
    let (p, k) = beta.shape();
    let ops = ctx.ops();

    // A coefficient is zero when any group containing it has an exactly-zero slice.
    let mut zero = vec![false; p * k];
    for s in &ops.f.slices {
        if gamma[s.rows.clone()].iter().all(|&g| g == 0.0) {
            for &o in &ctx.grouping().groups()[s.group].members {
                zero[s.var + o * p] = true;
            }
        }
    }

    // Exactly-zero fused differences merge coefficients of the same variable.
    let mut parent: Vec<usize> = (0..p * k).collect();
    for (r, &e) in ops.d.rows.iter().zip(eta) {
        if e == 0.0 {
            let (a, b) = (find(&mut parent, r.plus), find(&mut parent, r.minus));
            if a != b {
                parent[a.max(b)] = a.min(b);
            }
        }
    }
    let mut root_zero = vec![false; p * k];
    for i in 0..p * k {
        if zero[i] {
            let r = find(&mut parent, i);
            root_zero[r] = true;
        }
    }

    let mut cluster_of = vec![usize::MAX; p * k];
    let mut clusters: Vec<Cluster> = Vec::new();
    let mut root_cluster = vec![usize::MAX; p * k];
    for o in 0..k {
        for j in 0..p {
            let i = j + o * p;
            let r = find(&mut parent, i);
            if root_zero[r] {
                continue;
            }
            if root_cluster[r] == usize::MAX {
                root_cluster[r] = clusters.len();
                clusters.push(Cluster {
                    var: j,
                    outcomes: Vec::new(),
                });
            }
            let c = root_cluster[r];
            clusters[c].outcomes.push(o);
            cluster_of[i] = c;
        }
    }

    let mut theta = DVector::from_fn(clusters.len(), |c, _| {
        let cl = &clusters[c];
        cl.outcomes.iter().map(|&o| beta[(cl.var, o)]).sum::<f64>() / cl.outcomes.len() as f64
    });
    let expand = |theta: &DVector<f64>| {
        let mut b = DMatrix::zeros(p, k);
        for (c, cl) in clusters.iter().enumerate() {
            for &o in &cl.outcomes {
                b[(cl.var, o)] = theta[c];
            }
        }
        b
    };

    if clusters.is_empty() || clusters.len() > MAX_NEWTON_DIM {
        return expand(&theta);
    }

    let mom = ctx.moments();
    let l1 = cfg.lambda1();
    let mut b = expand(&theta);
    let mut obj = ctx.objective(&b, cfg);
    let d = clusters.len();
    // The loss Hessian couples two clusters through each outcome they share.
    let mut loss_hess = DMatrix::zeros(d, d);
    for o in 0..k {
        let live: Vec<usize> = (0..p).map(|j| cluster_of[j + o * p]).filter(|&c| c != usize::MAX).collect();
        for &c1 in &live {
            for &c2 in &live {
                loss_hess[(c1, c2)] += mom.gram[(clusters[c1].var, clusters[c2].var)];
            }
        }
    }
    for _ in 0..MAX_NEWTON_STEPS {
        // Gradient and Hessian in beta coordinates, pulled back to clusters.
        let grad_b = face_gradient(ctx, cfg, &b);
        let grad = DVector::from_fn(d, |c, _| {
            let cl = &clusters[c];
            cl.outcomes.iter().map(|&o| grad_b[(cl.var, o)]).sum::<f64>()
        });
        if grad.amax() <= 1e-10 * (1.0 + obj.abs()) {
            break;
        }
        let mut hess = loss_hess.clone();
        if l1 > 0.0 {
            for s in &ops.f.slices {
                let members = &ctx.grouping().groups()[s.group].members;
                let v: Vec<f64> = members.iter().map(|&o| b[(s.var, o)]).collect();
                let nrm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
                if nrm == 0.0 {
                    continue;
                }
                let w = l1 * cfg.weights.groups[(s.var, s.group)];
                for (ia, &oa) in members.iter().enumerate() {
                    let ca = cluster_of[s.var + oa * p];
                    if ca == usize::MAX {
                        continue;
                    }
                    for (ib, &ob) in members.iter().enumerate() {
                        let cb = cluster_of[s.var + ob * p];
                        if cb == usize::MAX {
                            continue;
                        }
                        let delta = if ia == ib { 1.0 / nrm } else { 0.0 };
                        hess[(ca, cb)] += w * (delta - v[ia] * v[ib] / nrm.powi(3));
                    }
                }
            }
        }
        let step = match Cholesky::new(hess.clone()) {
            Some(ch) => ch.solve(&(-&grad)),
            None => {
                let ridge = 1e-10 * hess.trace().abs().max(1e-12);
                for i in 0..d {
                    hess[(i, i)] += ridge;
                }
                match Cholesky::new(hess) {
                    Some(ch) => ch.solve(&(-&grad)),
                    None => break,
                }
            }
        };
        let slope = grad.dot(&step);
        if !(slope < 0.0) || -slope <= 1e-15 * obj.abs().max(1e-300) {
            break;
        }
        let mut t = 1.0;
        let mut accepted = false;
        let mut stalled = false;
        for _ in 0..40 {
            let cand = &theta + &step * t;
            let cb = expand(&cand);
            let co = ctx.objective(&cb, cfg);
            if co <= obj + 1e-4 * t * slope {
                stalled = obj - co <= 1e-13 * (1.0 + obj.abs());
                theta = cand;
                b = cb;
                obj = co;
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        if !accepted || stalled {
            break;
        }
    }
    b
}

/// Gradient of the objective at `b`, valid wherever no nonzero group is at
/// zero norm and no penalized difference vanishes.
fn face_gradient(ctx: &FitContext<'_>, cfg: &PenaltyConfig, b: &DMatrix<f64>) -> DMatrix<f64> {
    let ops = ctx.ops();
    let mut grad = ctx.moments().gradient(b);
    let l1 = cfg.lambda1();
    if l1 > 0.0 {
        for s in &ops.f.slices {
            let members = &ctx.grouping().groups()[s.group].members;
            let nrm = members.iter().map(|&o| b[(s.var, o)].powi(2)).sum::<f64>().sqrt();
            if nrm == 0.0 {
                continue;
            }
            let w = l1 * cfg.weights.groups[(s.var, s.group)];
            for &o in members {
                grad[(s.var, o)] += w * b[(s.var, o)] / nrm;
            }
        }
    }
    let l2 = cfg.lambda2();
    if l2 > 0.0 {
        let bs = b.as_slice();
        let g = grad.as_mut_slice();
        for r in &ops.d.rows {
            let diff = bs[r.plus] - bs[r.minus];
            if diff != 0.0 {
                let w = l2 * cfg.weights.pairs[(r.var, r.pair)] * diff.signum();
                g[r.plus] += w;
                g[r.minus] -= w;
            }
        }
    }
    grad
}
