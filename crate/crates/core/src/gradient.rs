//! The discrete gradient operator, its adjoint and pseudo-inverse, and
//! best s-term gradient supports.
//!
//! The gradient of `x` in R^n is the vector of forward differences
//! `(grad x)_j = x_{j+1} - x_j` of length `N = n - 1`. Throughout this
//! crate, *faces* are numbered 1..=N (matching the staggered-grid picture
//! with ghost faces 0 and n); face `f` lives at slice index `f - 1`.

/// Forward differences of `x`; output has length `n - 1`.
///
/// Panics if `x.len() < 2`.
pub fn grad(x: &[f64]) -> Vec<f64> {
    assert!(x.len() >= 2, "gradient needs at least 2 nodes");
    x.windows(2).map(|w| w[1] - w[0]).collect()
}

/// Adjoint of `grad`: maps a face vector of length `N` back to `n = N + 1`
/// nodes. Satisfies `<grad x, w> = <x, grad_adjoint w>`.
pub fn grad_adjoint(w: &[f64]) -> Vec<f64> {
    let n = w.len() + 1;
    let mut out = vec![0.0; n];
    out[0] = -w[0];
    for j in 1..w.len() {
        out[j] = w[j - 1] - w[j];
    }
    out[n - 1] = w[w.len() - 1];
    out
}

/// Moore-Penrose pseudo-inverse of `grad`: the mean-zero antiderivative.
///
/// Satisfies `grad(grad_pinv(w)) = w` and
/// `grad_pinv(grad(x)) = x - mean(x)` to machine precision.
pub fn grad_pinv(w: &[f64]) -> Vec<f64> {
    let n = w.len() + 1;
    let mut out = vec![0.0; n];
    let mut acc = 0.0;
    for j in 1..n {
        acc += w[j - 1];
        out[j] = acc;
    }
    let mean = out.iter().sum::<f64>() / n as f64;
    for v in &mut out {
        *v -= mean;
    }
    out
}

/// Indices (1-based faces) of the `s` largest entries of `w` in magnitude,
/// ties broken towards the lower face index. Returned sorted ascending.
///
/// Panics if `s` is zero or exceeds `w.len()`.
pub fn best_s_support(w: &[f64], s: usize) -> Vec<usize> {
    assert!(s >= 1 && s <= w.len(), "invalid sparsity level s = {s}");
    let mut faces: Vec<usize> = (1..=w.len()).collect();
    // Stable sort keeps the lowest index first among equal magnitudes.
    faces.sort_by(|&a, &b| {
        w[b - 1]
            .abs()
            .partial_cmp(&w[a - 1].abs())
            .expect("NaN in gradient vector")
    });
    let mut support = faces[..s].to_vec();
    support.sort_unstable();
    support
}

/// Restriction of `w` to the faces in `support` (zero elsewhere).
pub fn project_onto(w: &[f64], support: &[usize]) -> Vec<f64> {
    let mut out = vec![0.0; w.len()];
    for &f in support {
        out[f - 1] = w[f - 1];
    }
    out
}

/// Restriction of `w` to the complement of `support`.
pub fn project_off(w: &[f64], support: &[usize]) -> Vec<f64> {
    let mut out = w.to_vec();
    for &f in support {
        out[f - 1] = 0.0;
    }
    out
}

/// Dense `(n-1) x n` gradient matrix; intended for small test problems.
pub fn dense_grad_matrix(n: usize) -> Vec<Vec<f64>> {
    let mut rows = vec![vec![0.0; n]; n - 1];
    for (j, row) in rows.iter_mut().enumerate() {
        row[j] = -1.0;
        row[j + 1] = 1.0;
    }
    rows
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn grad_basic() {
        assert_eq!(grad(&[1.0, 1.0, 2.0]), vec![0.0, 1.0]);
        assert_eq!(grad(&[3.0, 3.0, 3.0, 3.0]), vec![0.0, 0.0, 0.0]);
        assert_eq!(grad(&[0.0, 1.0, 0.0]), vec![1.0, -1.0]);
    }

    #[test]
    fn adjoint_small() {
        assert_eq!(grad_adjoint(&[1.0]), vec![-1.0, 1.0]);
        assert_eq!(grad_adjoint(&[0.0, 0.0]), vec![0.0, 0.0, 0.0]);
    }

    #[test]
    fn adjoint_identity_random() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for n in [2usize, 3, 17, 256, 4096] {
            let x: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let w: Vec<f64> = (0..n - 1).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let lhs: f64 = grad(&x).iter().zip(&w).map(|(a, b)| a * b).sum();
            let rhs: f64 = x.iter().zip(grad_adjoint(&w)).map(|(a, b)| a * b).sum();
            assert!((lhs - rhs).abs() <= 1e-12 * (1.0 + lhs.abs()));
        }
    }

    #[test]
    fn pinv_identities() {
        // n = 2 example
        assert_eq!(grad_pinv(&[1.0]), vec![-0.5, 0.5]);
        assert_eq!(grad_pinv(&[0.0, 0.0]), vec![0.0, 0.0, 0.0]);

        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..100 {
            let n = rng.gen_range(2..200);
            let w: Vec<f64> = (0..n - 1).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let x = grad_pinv(&w);
            // grad . grad_pinv = identity on faces
            for (a, b) in grad(&x).iter().zip(&w) {
                assert!((a - b).abs() <= 1e-12);
            }
            // zero mean
            let mean = x.iter().sum::<f64>() / n as f64;
            assert!(mean.abs() <= 1e-13 * n as f64);
        }
    }

    #[test]
    fn pinv_centering_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..20 {
            let n = rng.gen_range(2..64);
            let x: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let mean = x.iter().sum::<f64>() / n as f64;
            let back = grad_pinv(&grad(&x));
            for (a, b) in back.iter().zip(&x) {
                assert!((a - (b - mean)).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn best_support_examples() {
        assert_eq!(best_s_support(&[3.0, -1.0, 2.0], 2), vec![1, 3]);
        assert_eq!(best_s_support(&[0.0, 5.0, 0.0, -2.0], 2), vec![2, 4]);
        assert_eq!(best_s_support(&[1.0, 1.0, 1.0], 1), vec![1]);
    }

    #[test]
    fn operator_norm_below_two() {
        // ||grad||_op = 2 sin(pi (n-1) / (2n)) < 2
        let n = 512;
        let mut v: Vec<f64> = (0..n).map(|j| ((j as f64) * 0.7).sin()).collect();
        let mut norm = 0.0;
        for _ in 0..500 {
            let w = grad(&v);
            let u = grad_adjoint(&w);
            norm = u.iter().map(|a| a * a).sum::<f64>().sqrt();
            let scale = 1.0 / norm;
            v = u.iter().map(|a| a * scale).collect();
        }
        let op = norm.sqrt();
        let exact = 2.0 * (std::f64::consts::PI * (n as f64 - 1.0) / (2.0 * n as f64)).sin();
        assert!(op < 2.0);
        assert!((op - exact).abs() < 0.01);
    }
}
