//! Scalar and block soft-thresholding.

/// `sign(u) * max(|u| - t, 0)`.
#[inline]
pub fn soft_threshold(u: f64, t: f64) -> f64 {
    debug_assert!(t >= 0.0);
    if u > t {
        u - t
    } else if u < -t {
        u + t
    } else {
        0.0
    }
}

/// `u * max(1 - t / ||u||_2, 0)`; zero when `||u||_2 <= t`.
pub fn block_soft_threshold(u: &[f64], t: f64) -> Vec<f64> {
    let mut out = u.to_vec();
    block_soft_threshold_in_place(&mut out, t);
    out
}

pub fn block_soft_threshold_in_place(u: &mut [f64], t: f64) {
    debug_assert!(t >= 0.0);
    let norm = u.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm <= t {
        u.fill(0.0);
    } else {
        let s = 1.0 - t / norm;
        u.iter_mut().for_each(|x| *x *= s);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn scalar_examples() {
        assert_eq!(soft_threshold(2.0, 0.5), 1.5);
        assert_eq!(soft_threshold(0.3, 0.5), 0.0);
        assert_eq!(soft_threshold(-2.0, 0.5), -1.5);
        assert_eq!(soft_threshold(-0.5, 0.5), 0.0);
    }

    #[test]
    fn block_examples() {
        assert_eq!(block_soft_threshold(&[3.0, 4.0], 2.5), vec![1.5, 2.0]);
        assert_eq!(block_soft_threshold(&[3.0, 4.0], 6.0), vec![0.0, 0.0]);
        assert_eq!(block_soft_threshold(&[0.0, 0.0, 0.0], 1.0), vec![0.0; 3]);
        assert_eq!(block_soft_threshold(&[0.0, 0.0], 0.0), vec![0.0; 2]);
    }

    proptest! {
        #[test]
        fn scalar_shrinks(u in -100.0f64..100.0, t in 0.0f64..50.0) {
            let s = soft_threshold(u, t);
            prop_assert!(s.abs() <= u.abs());
            prop_assert!(s == 0.0 || s.signum() == u.signum());
        }

        #[test]
        fn block_matches_scalar_in_one_dimension(u in -100.0f64..100.0, t in 0.0f64..50.0) {
            let b = block_soft_threshold(&[u], t)[0];
            prop_assert!((b - soft_threshold(u, t)).abs() <= 1e-12 * u.abs().max(1.0));
        }

        #[test]
        fn block_preserves_direction(u in proptest::collection::vec(-10.0f64..10.0, 1..6), t in 0.0f64..20.0) {
            let out = block_soft_threshold(&u, t);
            let nu = u.iter().map(|x| x * x).sum::<f64>().sqrt();
            let no = out.iter().map(|x| x * x).sum::<f64>().sqrt();
            if nu <= t {
                prop_assert!(out.iter().all(|&x| x == 0.0));
            } else {
                prop_assert!((no - (nu - t)).abs() <= 1e-9 * nu.max(1.0));
                for (a, b) in u.iter().zip(&out) {
                    prop_assert!((a * (1.0 - t / nu) - b).abs() <= 1e-12 * nu.max(1.0));
                }
            }
        }
    }
}
