//! Non-dyadic Haar-type orthonormal bases adapted to a signal tree.
//!
//! Every tree vertex contributes one basis vector that is constant on the
//! nodes between its left neighbor face and its pivot, a different
//! constant between the pivot and the right neighbor face, and zero
//! elsewhere; together with the constant vector these form an orthonormal
//! basis of R^n. When the tree is perfectly dyadic the basis coincides
//! with the classical Haar basis.

use crate::tree::SignalTree;

/// One non-constant basis row, stored as two constant segments over the
/// 1-based node ranges `left_start..=pivot` and `pivot+1..=right_end`.
#[derive(Debug, Clone, Copy)]
pub struct HaarRow {
    pub level: usize,
    pub left_start: usize,
    pub pivot: usize,
    pub right_end: usize,
    pub left_val: f64,
    pub right_val: f64,
}

/// Orthonormal basis of R^n: one constant row plus one [`HaarRow`] per
/// tree vertex, in the tree's level order.
#[derive(Debug, Clone)]
pub struct HaarBasis {
    n: usize,
    rows: Vec<HaarRow>,
}

impl HaarBasis {
    pub fn from_tree(tree: &SignalTree) -> Self {
        let rows = tree
            .vertices()
            .iter()
            .map(|v| {
                let d = v.d();
                let total = (v.n_left + v.n_right) as f64;
                HaarRow {
                    level: v.level,
                    left_start: v.left_neighbor + 1,
                    pivot: v.pivot,
                    right_end: v.right_neighbor,
                    left_val: d * v.n_right as f64 / total,
                    right_val: -d * v.n_left as f64 / total,
                }
            })
            .collect();
        Self { n: tree.n(), rows }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Non-constant rows; the implicit row 0 is `1/sqrt(n) * ones`.
    pub fn rows(&self) -> &[HaarRow] {
        &self.rows
    }

    /// Materialize the full `n x n` matrix (row 0 is the constant row).
    /// Intended for small problems and tests.
    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let n = self.n;
        let mut out = vec![vec![0.0; n]; n];
        let c = 1.0 / (n as f64).sqrt();
        out[0] = vec![c; n];
        for (k, r) in self.rows.iter().enumerate() {
            let row = &mut out[k + 1];
            for j in r.left_start..=r.pivot {
                row[j - 1] = r.left_val;
            }
            for j in (r.pivot + 1)..=r.right_end {
                row[j - 1] = r.right_val;
            }
        }
        out
    }

    /// Analysis transform `H x`, computed with prefix sums in O(n).
    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.n);
        let mut prefix = vec![0.0; self.n + 1];
        for (j, &v) in x.iter().enumerate() {
            prefix[j + 1] = prefix[j] + v;
        }
        let mut out = Vec::with_capacity(self.n);
        out.push(prefix[self.n] / (self.n as f64).sqrt());
        for r in &self.rows {
            let left = prefix[r.pivot] - prefix[r.left_start - 1];
            let right = prefix[r.right_end] - prefix[r.pivot];
            out.push(r.left_val * left + r.right_val * right);
        }
        out
    }

    /// Synthesis transform `H^T c` (the inverse, by orthogonality),
    /// computed with a difference array in O(n).
    pub fn apply_transpose(&self, c: &[f64]) -> Vec<f64> {
        assert_eq!(c.len(), self.n);
        let mut diff = vec![0.0; self.n + 2];
        let c0 = c[0] / (self.n as f64).sqrt();
        diff[1] += c0;
        diff[self.n + 1] -= c0;
        for (r, &coef) in self.rows.iter().zip(&c[1..]) {
            diff[r.left_start] += coef * r.left_val;
            diff[r.pivot + 1] += coef * (r.right_val - r.left_val);
            diff[r.right_end + 1] -= coef * r.right_val;
        }
        let mut out = Vec::with_capacity(self.n);
        let mut acc = 0.0;
        for d in &diff[1..=self.n] {
            acc += d;
            out.push(acc);
        }
        out
    }

    /// Sparse rows of `H grad^T` (an `n x (n-1)` matrix over the faces);
    /// row 0 is empty, every other row has at most three entries:
    /// `-d` at the pivot and the reweighted values at the neighbor faces
    /// when those are not ghosts. Entries are `(face, value)` pairs.
    pub fn grad_rows(&self) -> Vec<Vec<(usize, f64)>> {
        let mut out = Vec::with_capacity(self.n);
        out.push(Vec::new());
        for r in &self.rows {
            let mut row = Vec::with_capacity(3);
            if r.left_start > 1 {
                row.push((r.left_start - 1, r.left_val));
            }
            row.push((r.pivot, r.right_val - r.left_val));
            if r.right_end < self.n {
                row.push((r.right_end, -r.right_val));
            }
            out.push(row);
        }
        out
    }

    /// `max_{i,j} |<h_i, h_j> - delta_ij|` over all row pairs, computed
    /// segment-by-segment in O(1) per pair.
    pub fn gram_max_deviation(&self) -> f64 {
        // every row is a short list of (start, end, value) segments
        let c = 1.0 / (self.n as f64).sqrt();
        let seg = |k: usize| -> [(usize, usize, f64); 2] {
            if k == 0 {
                // split the constant row in two so both slots are valid
                [(1, 1, c), (2, self.n, c)]
            } else {
                let r = &self.rows[k - 1];
                [
                    (r.left_start, r.pivot, r.left_val),
                    (r.pivot + 1, r.right_end, r.right_val),
                ]
            }
        };
        let mut worst = 0.0f64;
        for i in 0..self.n {
            let si = seg(i);
            for j in i..self.n {
                let sj = seg(j);
                let mut dot = 0.0;
                for (a0, a1, av) in si {
                    for (b0, b1, bv) in sj {
                        let lo = a0.max(b0);
                        let hi = a1.min(b1);
                        if lo <= hi {
                            dot += (hi - lo + 1) as f64 * av * bv;
                        }
                    }
                }
                let target = if i == j { 1.0 } else { 0.0 };
                worst = worst.max((dot - target).abs());
            }
        }
        worst
    }
}

/// Classical Haar basis for `n = 2^L`, as a dense matrix in the same
/// (level-major) row order used by [`HaarBasis`].
pub fn classical_haar_dense(n: usize) -> Vec<Vec<f64>> {
    assert!(n.is_power_of_two() && n >= 2);
    let levels = n.trailing_zeros() as usize;
    let mut out = vec![vec![1.0 / (n as f64).sqrt(); n]];
    for level in 1..=levels {
        let block = n >> (level - 1);
        // sqrt of the exact reciprocal: correctly rounded for powers of two
        let val = (1.0 / block as f64).sqrt();
        for i in 0..(n / block) {
            let mut row = vec![0.0; n];
            for j in 0..block / 2 {
                row[i * block + j] = val;
                row[i * block + block / 2 + j] = -val;
            }
            out.push(row);
        }
    }
    out
}
