//! Signal-dependent binary trees over the faces of a gradient support.
//!
//! The tree bipartitions the face set `[N]` recursively: each vertex picks
//! a pivot face (the lower median of the remaining support faces if any,
//! otherwise of all remaining faces) and recurses strictly below and above
//! it. Trees built from a well-separated support are nearly balanced; the
//! balancing parameters quantify the deviation from the perfect dyadic
//! case, where they are identically 1.

use crate::signals::separation_of_support;
use crate::{Error, Result};
use serde::Serialize;

/// One vertex of a [`SignalTree`]. Face ranges are inclusive and
/// contiguous; the neighbor faces may be the ghost faces `0` and `n`.
#[derive(Debug, Clone, Serialize)]
pub struct TreeVertex {
    /// Level, starting at 1 for the root.
    pub level: usize,
    /// 1-based index within the level (left child odd, right child even).
    pub index: usize,
    /// Remaining face range at this vertex: `lo..=hi`.
    pub lo: usize,
    pub hi: usize,
    /// Pivot face selected at this vertex.
    pub pivot: usize,
    /// Closest ancestor pivot below (`0` if none).
    pub left_neighbor: usize,
    /// Closest ancestor pivot above (`n` if none).
    pub right_neighbor: usize,
    /// Node counts left/right of the pivot within the enclosing range.
    pub n_left: usize,
    pub n_right: usize,
    /// Positions of the children in the vertex array.
    pub left_child: Option<usize>,
    pub right_child: Option<usize>,
    pub parent: Option<usize>,
}

impl TreeVertex {
    /// `d = sqrt(1/n_left + 1/n_right)`, the amplitude constant of the
    /// associated Haar row.
    pub fn d(&self) -> f64 {
        (1.0 / self.n_left as f64 + 1.0 / self.n_right as f64).sqrt()
    }
}

/// Which part of the tree decomposition a vertex belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum VertexLabel {
    /// Pivot lies in the (extended) support; these form the top subtree.
    Support,
    /// Off-support vertex with a support pivot as neighbor face.
    NearSupport,
    /// Off-support vertex whose neighbor faces are both off-support.
    Interior,
}

/// Binary tree over the faces `1..=N` adapted to a support set.
#[derive(Debug, Clone)]
pub struct SignalTree {
    n: usize,
    support: Vec<usize>,
    vertices: Vec<TreeVertex>,
    /// Maps face `f` (1-based) to the vertex whose pivot is `f`.
    vertex_of_face: Vec<usize>,
    depth: usize,
}

impl SignalTree {
    /// Build the tree for support `support_bar` (sorted 1-based faces,
    /// subset of `1..=n-1`).
    pub fn build(support_bar: &[usize], n: usize) -> Result<Self> {
        if support_bar.is_empty() {
            return Err(Error::InvalidParams("empty support".into()));
        }
        if n < 2 {
            return Err(Error::InvalidParams("need n >= 2".into()));
        }
        let nf = n - 1;
        let mut support = support_bar.to_vec();
        support.sort_unstable();
        support.dedup();
        if support.len() != support_bar.len() || support[0] < 1 || *support.last().unwrap() > nf {
            return Err(Error::InvalidParams("support must be distinct faces in 1..=n-1".into()));
        }

        let mut vertices: Vec<TreeVertex> = Vec::with_capacity(nf);
        let mut vertex_of_face = vec![usize::MAX; n];
        // (level, index, lo, hi, left_nb, right_nb, parent)
        let mut queue = std::collections::VecDeque::new();
        queue.push_back((1usize, 1usize, 1usize, nf, 0usize, n, None));
        let mut depth = 0;
        while let Some((level, index, lo, hi, left_nb, right_nb, parent)) = queue.pop_front() {
            depth = depth.max(level);
            // lower median of the support faces inside lo..=hi, if any,
            // otherwise of the full face range
            let a = support.partition_point(|&f| f < lo);
            let b = support.partition_point(|&f| f <= hi);
            let pivot = if a < b {
                let inside = &support[a..b];
                inside[(inside.len() - 1) / 2]
            } else {
                lo + (hi - lo) / 2
            };
            let pos = vertices.len();
            vertex_of_face[pivot] = pos;
            if let Some(p) = parent {
                let pv: &mut TreeVertex = &mut vertices[p];
                if index % 2 == 1 {
                    pv.left_child = Some(pos);
                } else {
                    pv.right_child = Some(pos);
                }
            }
            vertices.push(TreeVertex {
                level,
                index,
                lo,
                hi,
                pivot,
                left_neighbor: left_nb,
                right_neighbor: right_nb,
                n_left: pivot - left_nb,
                n_right: right_nb - pivot,
                left_child: None,
                right_child: None,
                parent,
            });
            if pivot > lo {
                queue.push_back((level + 1, 2 * index - 1, lo, pivot - 1, left_nb, pivot, Some(pos)));
            }
            if pivot < hi {
                queue.push_back((level + 1, 2 * index, pivot + 1, hi, pivot, right_nb, Some(pos)));
            }
        }
        debug_assert_eq!(vertices.len(), nf);
        Ok(Self { n, support, vertices, vertex_of_face, depth })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Number of faces, `N = n - 1`.
    pub fn num_faces(&self) -> usize {
        self.n - 1
    }

    /// The (extended) support the tree was built from, sorted.
    pub fn support(&self) -> &[usize] {
        &self.support
    }

    /// Vertices in level (BFS) order; position 0 is the root.
    pub fn vertices(&self) -> &[TreeVertex] {
        &self.vertices
    }

    /// Position of the vertex whose pivot is face `f`.
    pub fn vertex_of_face(&self, f: usize) -> usize {
        self.vertex_of_face[f]
    }

    /// Tree depth `L`.
    pub fn depth(&self) -> usize {
        self.depth
    }

    /// Depth of the support subtree, `L0 = ceil(log2(s_bar + 1))`.
    pub fn support_depth(&self) -> usize {
        ceil_log2(self.support.len() + 1)
    }

    pub fn in_support(&self, f: usize) -> bool {
        self.support.binary_search(&f).is_ok()
    }

    /// Label each vertex (same order as [`SignalTree::vertices`]).
    pub fn decompose(&self) -> Vec<VertexLabel> {
        self.vertices
            .iter()
            .map(|v| {
                if self.in_support(v.pivot) {
                    VertexLabel::Support
                } else if (v.left_neighbor > 0 && self.in_support(v.left_neighbor))
                    || (v.right_neighbor < self.n && self.in_support(v.right_neighbor))
                {
                    VertexLabel::NearSupport
                } else {
                    VertexLabel::Interior
                }
            })
            .collect()
    }
}

fn ceil_log2(x: usize) -> usize {
    debug_assert!(x >= 1);
    usize::BITS as usize - (x - 1).leading_zeros() as usize
}

/// Per-vertex balancing parameters `beta = d / c_level` with
/// `c_level = sqrt(2^{level+1} / n)`, plus the extrema entering the
/// analytic width bounds.
#[derive(Debug, Clone)]
pub struct BalancingReport {
    /// Same order as the tree's vertices.
    pub beta: Vec<f64>,
    pub beta_max_support: f64,
    pub beta_max_near: f64,
    /// `None` when there are no interior vertices.
    pub beta_min_interior: Option<f64>,
}

/// `c_level = sqrt(2^{level+1} / n)`.
pub fn level_constant(level: usize, n: usize) -> f64 {
    (2f64.powi(level as i32 + 1) / n as f64).sqrt()
}

pub fn balancing(tree: &SignalTree, labels: &[VertexLabel]) -> BalancingReport {
    let n = tree.n();
    let mut beta = Vec::with_capacity(tree.vertices().len());
    let mut max_support = 0.0f64;
    let mut max_near = 0.0f64;
    let mut min_interior = f64::INFINITY;
    for (v, &label) in tree.vertices().iter().zip(labels) {
        let b = v.d() / level_constant(v.level, n);
        beta.push(b);
        match label {
            VertexLabel::Support => max_support = max_support.max(b),
            VertexLabel::NearSupport => max_near = max_near.max(b),
            VertexLabel::Interior => min_interior = min_interior.min(b),
        }
    }
    BalancingReport {
        beta,
        beta_max_support: max_support,
        beta_max_near: max_near,
        beta_min_interior: (min_interior.is_finite()).then_some(min_interior),
    }
}

/// Pad a support `S` with ghost faces at rounded equidistant grid points
/// so that the padded size is `2^k - 1` and the padded pattern is almost
/// equidistant. Requires `delta >= 8 s / n` and `delta` no larger than the
/// maximal separation constant of `S`.
pub fn extended_support(support: &[usize], delta: f64, n: usize) -> Result<Vec<usize>> {
    let s = support.len();
    if s == 0 {
        return Err(Error::NoJumps);
    }
    let bound = 8.0 * s as f64 / n as f64;
    if delta < bound {
        return Err(Error::SeparationTooSmall { delta, bound });
    }
    let max_delta = separation_of_support(support, n)?.delta_max;
    if delta > max_delta + 1e-12 {
        return Err(Error::InvalidParams(format!(
            "delta = {delta} exceeds the maximal separation constant {max_delta}"
        )));
    }

    // s_bar = 2^{ceil(log2((s+1)/delta))} - 1, with float-safe rounding
    let target = (s + 1) as f64 / delta;
    let mut k = target.log2().ceil() as i32;
    while 2f64.powi(k) < target {
        k += 1;
    }
    while k > 0 && 2f64.powi(k - 1) >= target {
        k -= 1;
    }
    let s_bar = (1usize << k) - 1;
    let grid_step = n as f64 / (s_bar + 1) as f64;

    // each jump claims its nearest grid point; ties go to the smaller index
    let mut claimed = vec![false; s_bar + 1]; // 1-based
    for &v in support {
        let t = v as f64 / grid_step;
        let lo = (t.floor() as usize).clamp(1, s_bar);
        let hi = (lo + 1).min(s_bar);
        let (dl, dh) = ((v as f64 - lo as f64 * grid_step).abs(), (v as f64 - hi as f64 * grid_step).abs());
        let i = if dl <= dh { lo } else { hi };
        assert!(!claimed[i], "two jumps claimed the same grid point; support is not delta-separated");
        claimed[i] = true;
    }

    let mut result = support.to_vec();
    for i in 1..=s_bar {
        if !claimed[i] {
            // round half-up
            let ghost = (i as f64 * grid_step + 0.5).floor() as usize;
            assert!(ghost >= 1 && ghost <= n - 1);
            assert!(
                support.binary_search(&ghost).is_err(),
                "ghost face collided with the support"
            );
            result.push(ghost);
        }
    }
    result.sort_unstable();
    result.dedup();
    assert_eq!(result.len(), s_bar, "extended support has the wrong cardinality");

    debug_assert!((s + 1) as f64 / delta <= (s_bar + 1) as f64 + 1e-9);
    debug_assert!((s_bar + 1) as f64 <= 4.0 * s as f64 / delta + 1e-9);
    Ok(result)
}

/// Serializable per-vertex record for the CLI `tree` subcommand.
#[derive(Debug, Serialize)]
pub struct VertexRecord {
    pub level: usize,
    pub index: usize,
    pub pivot: usize,
    pub left_neighbor: usize,
    pub right_neighbor: usize,
    pub label: VertexLabel,
    pub beta: f64,
}

pub fn describe(tree: &SignalTree) -> Vec<VertexRecord> {
    let labels = tree.decompose();
    let bal = balancing(tree, &labels);
    tree.vertices()
        .iter()
        .enumerate()
        .map(|(k, v)| VertexRecord {
            level: v.level,
            index: v.index,
            pivot: v.pivot,
            left_neighbor: v.left_neighbor,
            right_neighbor: v.right_neighbor,
            label: labels[k],
            beta: bal.beta[k],
        })
        .collect()
}

/// Render the tree in Graphviz DOT format.
pub fn to_dot(tree: &SignalTree) -> String {
    let labels = tree.decompose();
    let mut out = String::from("digraph signal_tree {\n  node [shape=circle];\n");
    for (k, v) in tree.vertices().iter().enumerate() {
        let color = match labels[k] {
            VertexLabel::Support => "black",
            VertexLabel::NearSupport => "gray50",
            VertexLabel::Interior => "gray80",
        };
        out.push_str(&format!(
            "  v{k} [label=\"{}\" color=\"{color}\"];\n",
            v.pivot
        ));
        for child in [v.left_child, v.right_child].into_iter().flatten() {
            out.push_str(&format!("  v{k} -> v{child};\n"));
        }
    }
    out.push_str("}\n");
    out
}

/// Structural invariants of a built tree; returns a description of the
/// first violation, if any. Exercised heavily by the acceptance suite.
pub fn verify_structure(tree: &SignalTree) -> std::result::Result<(), String> {
    let n = tree.n();
    let nf = tree.num_faces();
    let s_bar = tree.support().len();
    let l0 = tree.support_depth();

    // pivot map is a bijection onto [N]
    let mut seen = vec![false; n];
    for v in tree.vertices() {
        if v.pivot < 1 || v.pivot > nf || seen[v.pivot] {
            return Err(format!("pivot map not a bijection at face {}", v.pivot));
        }
        seen[v.pivot] = true;
    }
    if tree.vertices().len() != nf {
        return Err("vertex count != N".into());
    }

    // restricted map is a bijection onto the support, all within depth L0
    let mut support_pivots: Vec<usize> = tree
        .vertices()
        .iter()
        .filter(|v| tree.in_support(v.pivot))
        .map(|v| v.pivot)
        .collect();
    support_pivots.sort_unstable();
    if support_pivots != tree.support() {
        return Err("support vertices do not cover the support".into());
    }

    let mut support_depth = 0;
    for v in tree.vertices() {
        // range/neighbor consistency
        if v.lo != v.left_neighbor + 1 || v.hi + 1 != v.right_neighbor {
            return Err(format!("range/neighbor mismatch at pivot {}", v.pivot));
        }
        if v.n_left < 1 || v.n_right < 1 || v.n_left + v.n_right != (v.hi - v.lo + 1) + 1 {
            return Err(format!("cardinality relation violated at pivot {}", v.pivot));
        }
        // per-level support cardinality bound
        let in_range_support = tree
            .support()
            .iter()
            .filter(|&&f| f >= v.lo && f <= v.hi)
            .count();
        if in_range_support > s_bar >> (v.level - 1) {
            return Err(format!("support halving bound violated at pivot {}", v.pivot));
        }
        if tree.in_support(v.pivot) {
            support_depth = support_depth.max(v.level);
            if v.level > l0 {
                return Err(format!("support pivot {} deeper than L0", v.pivot));
            }
        }
        // near-halving when the child range misses the support
        for (child, side) in [(v.left_child, 0), (v.right_child, 1)] {
            if let Some(c) = child {
                let c = &tree.vertices()[c];
                let child_support = tree
                    .support()
                    .iter()
                    .any(|&f| f >= c.lo && f <= c.hi);
                if !child_support {
                    let parent_q = if side == 0 { v.n_left } else { v.n_right };
                    let lo_b = (parent_q as f64 - 1.0) / 2.0;
                    let hi_b = (parent_q as f64 + 1.0) / 2.0;
                    for q in [c.n_left, c.n_right] {
                        if (q as f64) < lo_b || (q as f64) > hi_b {
                            return Err(format!(
                                "near-halving bound violated at pivot {}",
                                c.pivot
                            ));
                        }
                    }
                }
            }
        }
    }
    if support_depth == 0 {
        return Err("no support vertex found".into());
    }

    // depth bound
    let cap = ceil_log2(s_bar + 1) + ceil_log2((n - s_bar).max(1)).max(1);
    if tree.depth() > cap {
        return Err(format!("depth {} exceeds bound {}", tree.depth(), cap));
    }

    // pairwise node-range relation: disjoint or nested in one half
    let verts = tree.vertices();
    for (a, va) in verts.iter().enumerate() {
        // node range of a vertex is (left_neighbor, right_neighbor]
        let (alo, ahi) = (va.left_neighbor + 1, va.right_neighbor);
        for vb in verts.iter().skip(a + 1) {
            let (deep, shallow) = if vb.level >= va.level { (vb, va) } else { (va, vb) };
            let (dlo, dhi) = (deep.left_neighbor + 1, deep.right_neighbor);
            let (slo, shi) = if std::ptr::eq(deep, vb) { (alo, ahi) } else { (vb.left_neighbor + 1, vb.right_neighbor) };
            let disjoint = dhi < slo || shi < dlo;
            let in_left = dlo >= slo && dhi <= shallow.pivot;
            let in_right = dlo > shallow.pivot && dhi <= shi;
            if !(disjoint ^ (in_left ^ in_right)) || (disjoint && (in_left || in_right)) {
                return Err(format!(
                    "node ranges of pivots {} and {} neither disjoint nor nested",
                    va.pivot, vb.pivot
                ));
            }
        }
    }

    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pivots_by_level(tree: &SignalTree) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); tree.depth()];
        for v in tree.vertices() {
            out[v.level - 1].push(v.pivot);
        }
        out
    }

    #[test]
    fn dyadic_tree_16() {
        let tree = SignalTree::build(&[4, 8, 12], 16).unwrap();
        assert_eq!(
            pivots_by_level(&tree),
            vec![
                vec![8],
                vec![4, 12],
                vec![2, 6, 10, 14],
                vec![1, 3, 5, 7, 9, 11, 13, 15],
            ]
        );
        assert_eq!(tree.depth(), 4);
        assert_eq!(tree.support_depth(), 2);
        verify_structure(&tree).unwrap();
    }

    #[test]
    fn single_face() {
        let tree = SignalTree::build(&[1], 2).unwrap();
        assert_eq!(tree.vertices().len(), 1);
        assert_eq!(tree.vertices()[0].pivot, 1);
        assert_eq!(tree.depth(), 1);
        assert_eq!(tree.support_depth(), 1);
        verify_structure(&tree).unwrap();
    }

    #[test]
    fn lower_median_root() {
        // support {2, 3} in n = 8: root takes the lower median 2,
        // the right subtree is rooted at 3
        let tree = SignalTree::build(&[2, 3], 8).unwrap();
        let root = &tree.vertices()[0];
        assert_eq!(root.pivot, 2);
        let left = &tree.vertices()[root.left_child.unwrap()];
        assert_eq!(left.pivot, 1);
        let right = &tree.vertices()[root.right_child.unwrap()];
        assert_eq!(right.pivot, 3);
        verify_structure(&tree).unwrap();
    }

    #[test]
    fn decompose_small() {
        // support {2} in n = 4: both level-2 vertices have the root
        // pivot 2 as neighbor face
        let tree = SignalTree::build(&[2], 4).unwrap();
        let labels = tree.decompose();
        assert_eq!(labels[0], VertexLabel::Support);
        assert_eq!(labels[1], VertexLabel::NearSupport);
        assert_eq!(labels[2], VertexLabel::NearSupport);
        assert!(!labels.iter().any(|&l| l == VertexLabel::Interior));
    }

    #[test]
    fn decompose_counts_partition() {
        let tree = SignalTree::build(&[4, 8, 12], 16).unwrap();
        let labels = tree.decompose();
        assert_eq!(labels.len(), 15);
        let support = labels.iter().filter(|&&l| l == VertexLabel::Support).count();
        assert_eq!(support, 3);
        // cardinality bounds
        let near = labels.iter().filter(|&&l| l == VertexLabel::NearSupport).count();
        let interior = labels.iter().filter(|&&l| l == VertexLabel::Interior).count();
        assert_eq!(support + near + interior, 15);
        assert!(interior <= 16 - 3);
        assert!(near as f64 <= 4.0 * 3.0 * ((16.0f64 - 3.0).log2()));
    }

    #[test]
    fn dyadic_balancing_is_one() {
        // n = 2^L, equidistant s = 2^{L0} - 1: every beta is exactly 1
        for (l, l0) in [(4usize, 2usize), (6, 3), (8, 1)] {
            let n = 1usize << l;
            let s = (1usize << l0) - 1;
            let support: Vec<usize> = (1..=s).map(|i| i * n / (s + 1)).collect();
            let tree = SignalTree::build(&support, n).unwrap();
            let labels = tree.decompose();
            let bal = balancing(&tree, &labels);
            for (v, b) in tree.vertices().iter().zip(&bal.beta) {
                assert_eq!(*b, 1.0, "beta != 1 at pivot {}", v.pivot);
                // d = sqrt(2^{level - L + 1})
                let expect = 2f64.powi(v.level as i32 - l as i32 + 1).sqrt();
                assert_eq!(v.d(), expect);
            }
        }
    }

    #[test]
    fn balancing_n2() {
        let tree = SignalTree::build(&[1], 2).unwrap();
        let labels = tree.decompose();
        let bal = balancing(&tree, &labels);
        assert_eq!(bal.beta, vec![1.0]);
        assert_eq!(tree.vertices()[0].d(), 2f64.sqrt());
    }

    #[test]
    fn extended_support_examples() {
        // already equidistant: nothing to add
        assert_eq!(extended_support(&[8], 1.0, 16).unwrap(), vec![8]);

        // one jump at 5 with delta = 0.625: grid (4, 8, 12), the jump
        // claims 4, ghosts at 8 and 12
        assert_eq!(extended_support(&[5], 0.625, 16).unwrap(), vec![5, 8, 12]);

        // equidistant support of size 2^k - 1 with delta = 1 is unchanged
        let support: Vec<usize> = (1..=7).map(|i| i * 64 / 8).collect();
        assert_eq!(extended_support(&support, 1.0, 64).unwrap(), support);
    }

    #[test]
    fn extended_support_rejects_small_delta() {
        assert!(matches!(
            extended_support(&[8], 0.4, 16),
            Err(Error::SeparationTooSmall { .. })
        ));
    }

    #[test]
    fn extended_support_isometry() {
        use rand::prelude::*;
        use rand_chacha::ChaCha8Rng;
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for _ in 0..500 {
            let s = rng.gen_range(1usize..=6);
            let n = rng.gen_range(16 * s..=2048);
            let support = random_separated_support(s, n, &mut rng);
            let delta = separation_of_support(&support, n).unwrap().delta_max;
            if delta < 8.0 * s as f64 / n as f64 {
                continue;
            }
            let ext = extended_support(&support, delta, n).unwrap();
            let s_bar = ext.len();
            let step = n as f64 / (s_bar + 1) as f64;
            // approximate isometry including ghost boundaries 0 and n
            let mut zeta = vec![0];
            zeta.extend_from_slice(&ext);
            zeta.push(n);
            for i in 0..zeta.len() {
                for j in (i + 1)..zeta.len() {
                    let dist = (zeta[j] - zeta[i]) as f64;
                    let k = (j - i) as f64;
                    assert!(
                        dist >= 0.25 * k * step - 1e-9 && dist <= 2.0 * k * step + 1e-9,
                        "isometry violated: |z{}-z{}|={} step={} s_bar={}",
                        i, j, dist, step, s_bar
                    );
                }
            }
            // depth bound for trees over extended supports
            let tree = SignalTree::build(&ext, n).unwrap();
            assert!((tree.depth() as f64) <= (4.0 * n as f64).log2() + 1e-9);
        }
    }

    /// Support with maximal separation at least `8 s / n`, built by
    /// distributing slack on top of minimal gaps.
    pub(crate) fn random_separated_support<R: rand::Rng>(
        s: usize,
        n: usize,
        rng: &mut R,
    ) -> Vec<usize> {
        let min_gap = (8.0 * s as f64 / n as f64 * n as f64 / (s + 1) as f64).ceil() as usize;
        let min_gap = min_gap.max(1);
        let mut gaps = vec![min_gap; s + 1];
        let mut slack = n - min_gap * (s + 1);
        while slack > 0 {
            let i = rng.gen_range(0..=s);
            gaps[i] += 1;
            slack -= 1;
        }
        let mut support = Vec::with_capacity(s);
        let mut pos = 0;
        for &g in gaps.iter().take(s) {
            pos += g;
            support.push(pos);
        }
        support
    }

    #[test]
    fn structure_on_random_supports() {
        use rand::prelude::*;
        use rand_chacha::ChaCha8Rng;
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        for _ in 0..100 {
            let s = rng.gen_range(1usize..=8);
            let n = rng.gen_range((16 * s).max(8)..=512);
            let support = random_separated_support(s, n, &mut rng);
            let tree = SignalTree::build(&support, n).unwrap();
            verify_structure(&tree).unwrap();
        }
    }
}
