//! Shared helpers for the integration and acceptance suites: a random
//! separated-support generator, an independent ADMM oracle for the TV
//! program, and a grid-search oracle for the empirical width.

#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use rand::prelude::*;

/// `s` faces in `1..n` whose gaps (including the ghost boundaries at 0
/// and n) are all at least `min_gap`. Needs `n >= (s + 1) * min_gap`.
pub fn random_separated_support<R: Rng + ?Sized>(
    n: usize,
    s: usize,
    min_gap: usize,
    rng: &mut R,
) -> Vec<usize> {
    assert!(n >= (s + 1) * min_gap, "no room for {s} faces with gap {min_gap} in n = {n}");
    let slack = (n - (s + 1) * min_gap) as f64;
    let mut extra: Vec<f64> = (0..s).map(|_| rng.gen_range(0.0..=slack)).collect();
    extra.sort_by(|a, b| a.partial_cmp(b).unwrap());
    (1..=s)
        .zip(&extra)
        .map(|(i, e)| i * min_gap + e.floor() as usize)
        .collect()
}

fn forward_difference_matrix(n: usize) -> DMatrix<f64> {
    DMatrix::from_fn(n - 1, n, |i, j| {
        if j == i + 1 {
            1.0
        } else if j == i {
            -1.0
        } else {
            0.0
        }
    })
}

/// Independent oracle for `min ||grad x||_1 s.t. Ax = y` (eta = 0) or
/// `||Ax - y||_2 <= eta`: ADMM on the consensus splitting `z = Gx` with
/// `G = [I; grad; A]`, using a cached Cholesky factorization of
/// `I + grad^T grad + A^T A`. Deliberately a different splitting than
/// the library solver.
pub fn admm_tv(a: &[Vec<f64>], y: &[f64], eta: f64, max_iters: usize, tol: f64) -> Vec<f64> {
    let m = a.len();
    let n = a[0].len();
    let nf = n - 1;
    let amat = DMatrix::from_fn(m, n, |i, j| a[i][j]);
    let d = forward_difference_matrix(n);
    let normal = DMatrix::identity(n, n) + d.transpose() * &d + amat.transpose() * &amat;
    let chol = normal.cholesky().expect("I + D^T D + A^T A is positive definite");
    let yv = DVector::from_row_slice(y);

    let mut x = DVector::zeros(n);
    let mut z0 = DVector::zeros(n);
    let mut z1 = DVector::zeros(nf);
    let mut z2 = yv.clone();
    let mut u0 = DVector::zeros(n);
    let mut u1 = DVector::zeros(nf);
    let mut u2 = DVector::zeros(m);
    for _ in 0..max_iters {
        let rhs = (&z0 - &u0) + d.transpose() * (&z1 - &u1) + amat.transpose() * (&z2 - &u2);
        x = chol.solve(&rhs);
        let dx = &d * &x;
        let ax = &amat * &x;
        let (z0_old, z1_old, z2_old) = (z0.clone(), z1.clone(), z2.clone());
        z0 = &x + &u0;
        z1 = (&dx + &u1).map(|v| v.signum() * (v.abs() - 1.0).max(0.0));
        let v2 = &ax + &u2;
        z2 = if eta == 0.0 {
            yv.clone()
        } else {
            let diff = &v2 - &yv;
            let nrm = diff.norm();
            if nrm <= eta {
                v2
            } else {
                &yv + diff * (eta / nrm)
            }
        };
        u0 += &x - &z0;
        u1 += &dx - &z1;
        u2 += &ax - &z2;
        let primal = ((&x - &z0).norm_squared()
            + (&dx - &z1).norm_squared()
            + (&ax - &z2).norm_squared())
        .sqrt();
        let dual = ((&z0 - &z0_old)
            + d.transpose() * (&z1 - &z1_old)
            + amat.transpose() * (&z2 - &z2_old))
        .norm();
        if primal <= tol && dual <= tol {
            break;
        }
    }
    x.iter().copied().collect()
}

/// Value of the restricted polar program for a fixed off-support
/// direction: the cone element is `t * dir` with `dir` equal to the sign
/// pattern on the support, so the optimal `t >= 0` is closed-form.
fn ray_value(g: &[f64], dir: &[f64]) -> f64 {
    let q = tvcs::gradient::grad_adjoint(dir);
    let qq: f64 = q.iter().map(|v| v * v).sum();
    let gg: f64 = g.iter().map(|v| v * v).sum();
    if qq == 0.0 {
        return gg;
    }
    let gq: f64 = g.iter().zip(&q).map(|(a, b)| a * b).sum();
    let t = (gq / qq).max(0.0);
    gg - 2.0 * t * gq + t * t * qq
}

/// Brute-force oracle for the empirical-width sample value: grid search
/// over the off-support coordinates `w` in `[-1, 1]^{|S^c|}` with the
/// scale handled by the exact one-dimensional minimizer, refined by
/// repeatedly halving the grid around the best point.
pub fn grid_polar_oracle(g: &[f64], support: &[usize], sign: &[f64]) -> f64 {
    let n = g.len();
    let nf = n - 1;
    let free: Vec<usize> = (1..=nf).filter(|f| !support.contains(f)).collect();
    let dims = free.len();

    let mut dir = sign.to_vec();
    let eval = |dir: &mut Vec<f64>, point: &[f64]| {
        for (&f, &w) in free.iter().zip(point) {
            dir[f - 1] = w;
        }
        ray_value(g, dir)
    };

    if dims == 0 {
        return ray_value(g, &dir);
    }

    // global coarse scan: 9 points per coordinate
    let coarse: Vec<f64> = (0..9).map(|k| -1.0 + 0.25 * k as f64).collect();
    let mut best_point = vec![0.0; dims];
    let mut best = f64::INFINITY;
    let mut idx = vec![0usize; dims];
    loop {
        let point: Vec<f64> = idx.iter().map(|&k| coarse[k]).collect();
        let v = eval(&mut dir, &point);
        if v < best {
            best = v;
            best_point = point;
        }
        let mut carry = 0;
        while carry < dims {
            idx[carry] += 1;
            if idx[carry] < coarse.len() {
                break;
            }
            idx[carry] = 0;
            carry += 1;
        }
        if carry == dims {
            break;
        }
    }

    // local refinement: 5 points per coordinate, halving the window
    let mut half = 0.25;
    for _ in 0..40 {
        let offsets = [-1.0, -0.5, 0.0, 0.5, 1.0];
        let mut idx = vec![0usize; dims];
        let center = best_point.clone();
        loop {
            let point: Vec<f64> = center
                .iter()
                .zip(&idx)
                .map(|(c, &k)| (c + half * offsets[k]).clamp(-1.0, 1.0))
                .collect();
            let v = eval(&mut dir, &point);
            if v < best {
                best = v;
                best_point = point;
            }
            let mut carry = 0;
            while carry < dims {
                idx[carry] += 1;
                if idx[carry] < offsets.len() {
                    break;
                }
                idx[carry] = 0;
                carry += 1;
            }
            if carry == dims {
                break;
            }
        }
        half *= 0.5;
    }
    best
}

/// `||grad x||_1`.
pub fn tv_norm(x: &[f64]) -> f64 {
    tvcs::gradient::grad(x).iter().map(|v| v.abs()).sum()
}

/// Euclidean norm of `a - b`.
pub fn dist2(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(p, q)| (p - q) * (p - q)).sum::<f64>().sqrt()
}
