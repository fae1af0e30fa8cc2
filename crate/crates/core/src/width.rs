//! Estimators for the conic Gaussian mean width of `||grad(.)||_1` at a
//! signal, and conversions from widths to sample sizes.
//!
//! Three routes are provided:
//! * `empirical-polar`: per Gaussian sample, minimize `||g - grad^T v||^2`
//!   over the cone spanned by the subdifferential (a small convex program
//!   solved by accelerated projected gradient with an exact projection
//!   onto the l-inf epigraph cone);
//! * `mc-dual-upper`: Monte-Carlo evaluation of the tree-based dual
//!   vector's objective, an upper bound on the squared width;
//! * `analytic-417` / `analytic-418`: closed-form upper bounds from the
//!   tree cardinalities and balancing extrema (417 is the sharper one,
//!   418 its fully relaxed form).

use crate::gradient::{grad, grad_adjoint};
use crate::signals::Signal;
use crate::solver::operator_norm;
use crate::tree::{balancing, extended_support, level_constant, BalancingReport, SignalTree, VertexLabel};
use crate::{Error, Result};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::Serialize;

/// The truncation constant of the dual-vector construction.
pub const GAMMA: f64 = std::f64::consts::SQRT_2 - 1.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum WidthMethod {
    EmpiricalPolar,
    McDualUpper,
    Analytic417,
    Analytic418,
}

impl WidthMethod {
    pub fn name(self) -> &'static str {
        match self {
            WidthMethod::EmpiricalPolar => "empirical-polar",
            WidthMethod::McDualUpper => "mc-dual-upper",
            WidthMethod::Analytic417 => "analytic-417",
            WidthMethod::Analytic418 => "analytic-418",
        }
    }
}

/// Per-label sums of mean per-pivot errors `e_i` from the Monte-Carlo
/// dual-upper estimator; `per_row` holds the mean squared term of every
/// Haar coordinate (row 0 is the constant row).
#[derive(Debug, Clone, Serialize)]
pub struct LabelBreakdown {
    pub constant: f64,
    pub support: f64,
    pub near: f64,
    pub interior: f64,
    pub per_row: Vec<f64>,
}

/// An estimate of the squared conic mean width (or an upper bound on it).
#[derive(Debug, Clone, Serialize)]
pub struct WidthEstimate {
    pub mean_sq: f64,
    pub std_error: f64,
    pub trials: usize,
    pub method: WidthMethod,
    /// The scaling parameter used, when the method has one.
    pub tau: Option<f64>,
    /// Samples excluded because the inner solver did not converge.
    pub flagged: usize,
    pub breakdown: Option<LabelBreakdown>,
}

/// Feasible dual vector on the faces `1..=N` (ghost entries 0 and n are
/// implicitly zero), built level by level along the tree.
#[derive(Debug, Clone)]
pub struct DualVector {
    /// Indexed by face - 1.
    pub w: Vec<f64>,
    pub tau: f64,
}

/// Left/right reweighting constants of a vertex:
/// `d_left = n_right / (n_left + n_right)` and symmetrically.
fn neighbor_weights(v: &crate::tree::TreeVertex) -> (f64, f64) {
    let total = (v.n_left + v.n_right) as f64;
    (v.n_right as f64 / total, v.n_left as f64 / total)
}

/// Construct the dual vector for a Gaussian sample `g`.
///
/// `sign` is `sign(grad x*)` on the faces (0 on ghost jumps); `g` has
/// one coordinate per Haar row, addressed by pivot face (`g[0]` belongs
/// to the constant row, `g[p]` to the vertex with pivot `p`).
pub fn dual_vector(
    tree: &SignalTree,
    labels: &[VertexLabel],
    sign: &[f64],
    g: &[f64],
    tau: f64,
) -> DualVector {
    assert!(tau > 0.0);
    assert_eq!(g.len(), tree.n());
    assert_eq!(sign.len(), tree.num_faces());
    let l0 = tree.support_depth() as i32;
    let mut w = vec![0.0; tree.num_faces()];
    // vertices are stored in level order, so neighbor faces (ancestor
    // pivots or ghosts) are always assigned before they are read
    for (v, &label) in tree.vertices().iter().zip(labels) {
        let at = |face: usize| -> f64 {
            if face == 0 || face == tree.n() {
                0.0
            } else {
                w[face - 1]
            }
        };
        let (dl, dr) = neighbor_weights(v);
        let anchor = dl * at(v.left_neighbor) + dr * at(v.right_neighbor);
        let spread = 2f64.powi(l0 - v.level as i32).sqrt();
        w[v.pivot - 1] = match label {
            VertexLabel::Support => sign[v.pivot - 1],
            VertexLabel::NearSupport => {
                let r = (1.0 - spread).max(0.0);
                anchor.clamp(-r, r)
            }
            VertexLabel::Interior => {
                // minimizer of (g_p - tau d (anchor - z))^2 over the
                // truncated interval around the anchor
                let z = anchor - g[v.pivot] / (tau * v.d());
                z.clamp(anchor - GAMMA * spread, anchor + GAMMA * spread)
            }
        };
    }
    DualVector { w, tau }
}

/// Check every feasibility requirement of the dual-vector construction;
/// returns the first violation as a message.
pub fn check_dual_feasibility(
    tree: &SignalTree,
    labels: &[VertexLabel],
    sign: &[f64],
    dv: &DualVector,
) -> std::result::Result<(), String> {
    let l0 = tree.support_depth() as i32;
    let eps = 1e-12;
    for (v, &label) in tree.vertices().iter().zip(labels) {
        let val = dv.w[v.pivot - 1];
        match label {
            VertexLabel::Support => {
                if val != sign[v.pivot - 1] {
                    return Err(format!("support face {} deviates from the sign", v.pivot));
                }
            }
            _ => {
                if val.abs() > 1.0 + eps {
                    return Err(format!("off-support face {} outside [-1, 1]", v.pivot));
                }
                let r = (1.0 - 2f64.powi(l0 - v.level as i32).sqrt()).max(0.0);
                if val.abs() > r + eps {
                    return Err(format!(
                        "face {} at level {} outside its interval (|{}| > {})",
                        v.pivot, v.level, val, r
                    ));
                }
            }
        }
    }
    Ok(())
}

/// The tree/Haar context shared by the dual-based estimators.
struct TreeContext {
    tree: SignalTree,
    labels: Vec<VertexLabel>,
    bal: BalancingReport,
    sign: Vec<f64>,
    s_bar: usize,
}

impl TreeContext {
    fn build(x: &Signal, delta: f64) -> Result<Self> {
        let support = x.jump_support();
        if support.is_empty() {
            return Err(Error::NoJumps);
        }
        let n = x.n();
        let ext = extended_support(&support, delta, n)?;
        let tree = SignalTree::build(&ext, n)?;
        let labels = tree.decompose();
        let bal = balancing(&tree, &labels);
        let sign: Vec<f64> = x
            .grad()
            .iter()
            .map(|v| if *v == 0.0 { 0.0 } else { v.signum() })
            .collect();
        let s_bar = ext.len();
        Ok(Self { tree, labels, bal, sign, s_bar })
    }

    /// The default scaling from Step 3(b); `1 / c_{L0}` when there are no
    /// interior vertices (the interior term is then an empty sum).
    fn default_tau(&self) -> f64 {
        let n = self.tree.n();
        let c = level_constant(self.tree.support_depth(), n);
        match self.bal.beta_min_interior {
            Some(bmin) => (2.0 * (n as f64 / self.s_bar as f64).ln()).sqrt() / (GAMMA * bmin * c),
            None => 1.0 / c,
        }
    }

    /// Objective value `||g - tau H grad^T w||^2` for one sample, using
    /// the three-entry sparse structure, plus the per-row squared terms.
    fn sample_value(&self, g: &[f64], tau: f64, per_row: &mut [f64]) -> f64 {
        let dv = dual_vector(&self.tree, &self.labels, &self.sign, g, tau);
        let at = |face: usize| -> f64 {
            if face == 0 || face == self.tree.n() {
                0.0
            } else {
                dv.w[face - 1]
            }
        };
        let mut total = g[0] * g[0];
        per_row[0] += total;
        for (k, v) in self.tree.vertices().iter().enumerate() {
            let (dl, dr) = neighbor_weights(v);
            let anchor = dl * at(v.left_neighbor) + dr * at(v.right_neighbor);
            let term = g[v.pivot] - tau * v.d() * (anchor - dv.w[v.pivot - 1]);
            let term = term * term;
            per_row[k + 1] += term;
            total += term;
        }
        total
    }
}

fn standard_normal_vec<R: Rng + ?Sized>(len: usize, rng: &mut R) -> Vec<f64> {
    (0..len).map(|_| rng.sample(StandardNormal)).collect()
}

fn mean_and_stderr(values: &[f64]) -> (f64, f64) {
    let k = values.len() as f64;
    let mean = values.iter().sum::<f64>() / k;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (k - 1.0);
    (mean, (var / k).sqrt())
}

/// Monte-Carlo upper bound on the squared width via the dual vector,
/// with the Step-3(b) default scaling.
pub fn width_upper_mc<R: Rng + ?Sized>(
    x: &Signal,
    delta: f64,
    trials: usize,
    rng: &mut R,
) -> Result<WidthEstimate> {
    width_upper_mc_with(x, delta, trials, rng, None, false)
}

/// As [`width_upper_mc`], with an explicit `tau` override or an optional
/// golden-section search over `tau` (common random numbers across
/// candidate values, so the search is deterministic given the stream).
pub fn width_upper_mc_with<R: Rng + ?Sized>(
    x: &Signal,
    delta: f64,
    trials: usize,
    rng: &mut R,
    tau: Option<f64>,
    tau_search: bool,
) -> Result<WidthEstimate> {
    if trials == 0 {
        return Err(Error::InvalidParams("need trials >= 1".into()));
    }
    let ctx = TreeContext::build(x, delta)?;
    let n = ctx.tree.n();
    let samples: Vec<Vec<f64>> = (0..trials).map(|_| standard_normal_vec(n, rng)).collect();

    let evaluate = |tau: f64, per_row: &mut [f64]| -> Vec<f64> {
        samples.iter().map(|g| ctx.sample_value(g, tau, per_row)).collect()
    };

    let mut tau = tau.unwrap_or_else(|| ctx.default_tau());
    if tau_search {
        // golden-section on log(tau) around the default choice
        let phi = (5f64.sqrt() - 1.0) / 2.0;
        let mut scratch = vec![0.0; n];
        let f = |t: f64, scratch: &mut Vec<f64>| {
            scratch.iter_mut().for_each(|v| *v = 0.0);
            let vals = evaluate(t.exp(), scratch);
            vals.iter().sum::<f64>() / trials as f64
        };
        let (mut lo, mut hi) = (tau.ln() - 16f64.ln(), tau.ln() + 16f64.ln());
        let mut m1 = hi - phi * (hi - lo);
        let mut m2 = lo + phi * (hi - lo);
        let mut f1 = f(m1, &mut scratch);
        let mut f2 = f(m2, &mut scratch);
        for _ in 0..48 {
            if f1 <= f2 {
                hi = m2;
                m2 = m1;
                f2 = f1;
                m1 = hi - phi * (hi - lo);
                f1 = f(m1, &mut scratch);
            } else {
                lo = m1;
                m1 = m2;
                f1 = f2;
                m2 = lo + phi * (hi - lo);
                f2 = f(m2, &mut scratch);
            }
        }
        tau = (0.5 * (lo + hi)).exp();
    }

    let mut per_row = vec![0.0; n];
    let values = evaluate(tau, &mut per_row);
    for v in &mut per_row {
        *v /= trials as f64;
    }
    let (mean_sq, std_error) = mean_and_stderr(&values);
    let mut breakdown = LabelBreakdown {
        constant: per_row[0],
        support: 0.0,
        near: 0.0,
        interior: 0.0,
        per_row: per_row.clone(),
    };
    for (k, &label) in ctx.labels.iter().enumerate() {
        match label {
            VertexLabel::Support => breakdown.support += per_row[k + 1],
            VertexLabel::NearSupport => breakdown.near += per_row[k + 1],
            VertexLabel::Interior => breakdown.interior += per_row[k + 1],
        }
    }
    Ok(WidthEstimate {
        mean_sq,
        std_error,
        trials,
        method: WidthMethod::McDualUpper,
        tau: Some(tau),
        flagged: 0,
        breakdown: Some(breakdown),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AnalyticMode {
    Eq417,
    Eq418,
}

/// Closed-form upper bound on the squared width from the tree
/// decomposition. `Eq417` uses the instance's actual cardinalities and
/// balancing extrema; `Eq418` is its relaxation in terms of `s_bar` and
/// `log(n)` alone. Always `Eq417 <= Eq418`.
pub fn width_upper_analytic(x: &Signal, delta: f64, mode: AnalyticMode) -> Result<f64> {
    let ctx = TreeContext::build(x, delta)?;
    let n = ctx.tree.n() as f64;
    let s_bar = ctx.s_bar as f64;
    let mut counts = [0usize; 3];
    for &l in &ctx.labels {
        counts[match l {
            VertexLabel::Support => 0,
            VertexLabel::NearSupport => 1,
            VertexLabel::Interior => 2,
        }] += 1;
    }
    let (n_sup, n_near, n_int) = (counts[0] as f64, counts[1] as f64, counts[2] as f64);
    let b_sup = ctx.bal.beta_max_support;
    let b_near = ctx.bal.beta_max_near;
    // with no interior vertices the interior term is an empty sum; the
    // ratio convention 1.0 keeps the remaining terms well-defined
    let b_min = ctx.bal.beta_min_interior.unwrap_or(1.0);
    let value = match mode {
        AnalyticMode::Eq417 => {
            if ctx.bal.beta_min_interior.is_some() {
                let log_ratio = (n / s_bar).ln();
                1.0 + n_sup
                    + n_near
                    + 2.0 / (GAMMA * b_min).powi(2)
                        * (n_near * b_near * b_near + 4.0 * n_sup * b_sup * b_sup)
                        * log_ratio
                    + 2.0 * n_int * s_bar / n
            } else {
                // tau = 1/c_{L0}: per-pivot sums without the interior term
                1.0 + n_sup * (1.0 + 4.0 * b_sup * b_sup) + n_near * (1.0 + b_near * b_near)
            }
        }
        AnalyticMode::Eq418 => {
            let log_n = n.ln();
            1.0 + 3.0 * s_bar
                + (6.0 + 8.0 * (b_sup / (GAMMA * b_min)).powi(2)) * s_bar * log_n
                + 12.0 * (b_near / (GAMMA * b_min)).powi(2) * s_bar * log_n * log_n
        }
    };
    Ok(value)
}

/// Options for the empirical-polar estimator's inner solver.
#[derive(Debug, Clone, Copy)]
pub struct EmpiricalOpts {
    pub max_iters: usize,
    /// Absolute tolerance on the projected-gradient norm.
    pub grad_tol: f64,
}

impl Default for EmpiricalOpts {
    fn default() -> Self {
        Self { max_iters: 50_000, grad_tol: 1e-9 }
    }
}

/// Exact Euclidean projection onto the l-inf epigraph cone
/// `{(s, z) : s >= 0, |z_i| <= s}`; clamps `z` in place and returns the
/// projected apex coordinate. O(k log k) via a sort of the magnitudes.
pub fn project_epigraph_linf(t: f64, z: &mut [f64]) -> f64 {
    let mut mags: Vec<f64> = z.iter().map(|v| v.abs()).collect();
    mags.sort_by(|a, b| b.partial_cmp(a).unwrap());
    // phi(s) = (s - t)^2 + sum (m_i - s)_+^2 is convex; its minimizer
    // over s with exactly the k largest magnitudes active is
    // (t + m_1 + ... + m_k) / (1 + k)
    let mut s_star = t;
    let mut acc = t;
    for k in 0..=mags.len() {
        let cand = acc / (k + 1) as f64;
        let above_ok = k == 0 || mags[k - 1] >= cand;
        let below_ok = k == mags.len() || mags[k] <= cand;
        if above_ok && below_ok {
            s_star = cand;
            break;
        }
        if k < mags.len() {
            acc += mags[k];
        }
    }
    let s_star = s_star.max(0.0);
    for v in z.iter_mut() {
        *v = v.clamp(-s_star, s_star);
    }
    s_star
}

/// Minimize `||g - grad^T v||^2` over the cone
/// `{v : v_S = t * sign_S, |v_j| <= t off S, t >= 0}` by accelerated
/// projected gradient. Returns `(value, converged)`.
pub fn polar_distance_sq(
    g: &[f64],
    support: &[usize],
    sign: &[f64],
    opts: &EmpiricalOpts,
) -> (f64, bool) {
    let n = g.len();
    let nf = n - 1;
    let off_faces: Vec<usize> = {
        let mut in_s = vec![false; nf + 1];
        for &f in support {
            in_s[f] = true;
        }
        (1..=nf).filter(|&f| !in_s[f]).collect()
    };
    let dim = 1 + off_faces.len();

    // v(u) on the faces from the packed variables u = (t, z)
    let assemble = |u: &[f64]| -> Vec<f64> {
        let mut v = vec![0.0; nf];
        for &f in support {
            v[f - 1] = u[0] * sign[f - 1];
        }
        for (k, &f) in off_faces.iter().enumerate() {
            v[f - 1] = u[1 + k];
        }
        v
    };
    // gradient of ||grad^T v(u) - g||^2 in u
    let grad_u = |u: &[f64]| -> (f64, Vec<f64>) {
        let v = assemble(u);
        let mut r = grad_adjoint(&v);
        for (ri, gi) in r.iter_mut().zip(g) {
            *ri -= gi;
        }
        let f: f64 = r.iter().map(|a| a * a).sum();
        let dv = grad(&r); // r is in R^n, so this is 2^-1 * df/dv
        let mut out = vec![0.0; dim];
        for &fc in support {
            out[0] += 2.0 * sign[fc - 1] * dv[fc - 1];
        }
        for (k, &fc) in off_faces.iter().enumerate() {
            out[1 + k] = 2.0 * dv[fc - 1];
        }
        (f, out)
    };
    let project = |u: &mut [f64]| {
        let (head, tail) = u.split_at_mut(1);
        head[0] = project_epigraph_linf(head[0], tail);
    };

    // Lipschitz constant of the gradient: 2 ||M||^2 for the linear map
    // u -> grad^T v(u)
    let m_norm = operator_norm(
        |u| grad_adjoint(&assemble(u)),
        |r| {
            let dv = grad(r);
            let mut out = vec![0.0; dim];
            for &fc in support {
                out[0] += sign[fc - 1] * dv[fc - 1];
            }
            for (k, &fc) in off_faces.iter().enumerate() {
                out[1 + k] = dv[fc - 1];
            }
            out
        },
        dim,
    );
    let step = 1.0 / (2.0 * m_norm * m_norm).max(1e-12);

    let mut u = vec![0.0; dim];
    let mut y = u.clone();
    let mut momentum = 1.0f64;
    let (mut f_prev, _) = grad_u(&u);
    let mut converged = false;
    for _ in 0..opts.max_iters {
        let (_, gy) = grad_u(&y);
        let mut u_new: Vec<f64> = y.iter().zip(&gy).map(|(a, b)| a - step * b).collect();
        project(&mut u_new);
        let (f_new, _) = grad_u(&u_new);
        // restart the momentum sequence on a genuine increase; the
        // relative slack keeps rounding noise at the floor from freezing
        // the iterate in a restart loop
        if f_new > f_prev * (1.0 + 1e-12) {
            momentum = 1.0;
            y = u.clone();
        } else {
            let m_new = 0.5 * (1.0 + (1.0 + 4.0 * momentum * momentum).sqrt());
            let coef = (momentum - 1.0) / m_new;
            y = u_new
                .iter()
                .zip(&u)
                .map(|(new, old)| new + coef * (new - old))
                .collect();
            momentum = m_new;
            u = u_new;
            f_prev = f_new;
        }
        // projected-gradient stationarity at the current iterate
        let (_, gu) = grad_u(&u);
        let mut probe: Vec<f64> = u.iter().zip(&gu).map(|(a, b)| a - step * b).collect();
        project(&mut probe);
        let pg: f64 = probe
            .iter()
            .zip(&u)
            .map(|(a, b)| ((a - b) / step).powi(2))
            .sum::<f64>()
            .sqrt();
        if pg <= opts.grad_tol {
            converged = true;
            break;
        }
    }
    (f_prev, converged)
}

/// Empirical-polar estimate of the squared conic mean width.
pub fn width_empirical<R: Rng + ?Sized>(
    x: &Signal,
    trials: usize,
    rng: &mut R,
    opts: &EmpiricalOpts,
) -> Result<WidthEstimate> {
    if trials == 0 {
        return Err(Error::InvalidParams("need trials >= 1".into()));
    }
    let support = x.jump_support();
    if support.is_empty() {
        return Err(Error::NoJumps);
    }
    let sign: Vec<f64> = x
        .grad()
        .iter()
        .map(|v| if *v == 0.0 { 0.0 } else { v.signum() })
        .collect();
    let mut values = Vec::with_capacity(trials);
    let mut flagged = 0;
    for _ in 0..trials {
        let g = standard_normal_vec(x.n(), rng);
        let (value, converged) = polar_distance_sq(&g, &support, &sign, opts);
        if converged {
            values.push(value);
        } else {
            flagged += 1;
        }
    }
    if values.is_empty() {
        return Err(Error::InfeasibleInput(
            "no empirical-width sample converged within the iteration cap".into(),
        ));
    }
    let (mean_sq, std_error) = mean_and_stderr(&values);
    Ok(WidthEstimate {
        mean_sq,
        std_error,
        trials,
        method: WidthMethod::EmpiricalPolar,
        tau: None,
        flagged,
        breakdown: None,
    })
}

fn smallest_int_above(x: f64) -> usize {
    assert!(x.is_finite() && x >= 0.0);
    x.floor() as usize + 1
}

/// Smallest number of measurements predicted to suffice for exact
/// recovery at effective width `width` and tuning margin `u`:
/// the smallest integer strictly greater than `(width + u)^2 + 1`.
pub fn required_m(width: f64, u: f64) -> usize {
    assert!(width >= 0.0 && u > 0.0);
    smallest_int_above((width + u).powi(2) + 1.0)
}

/// Stable/robust variant: smallest integer strictly greater than
/// `((R+1)/R * (width + 1) + u)^2 + 1`.
pub fn required_m_stable(width: f64, r: f64, u: f64) -> usize {
    assert!(width >= 0.0 && r > 0.0 && u > 0.0);
    smallest_int_above(((r + 1.0) / r * (width + 1.0) + u).powi(2) + 1.0)
}
