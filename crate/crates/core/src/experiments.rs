//! Experiment drivers: phase-transition grids over (n, m), width sweeps
//! across signal families, and stability runs with noisy measurements.
//!
//! All randomness is drawn from streams keyed by (root seed, n, m, trial),
//! so any cell of a grid can be recomputed in isolation and results do not
//! depend on execution order.

use crate::gradient::{best_s_support, grad_pinv, project_off, project_onto};
use crate::signals::{separation_discrete, Signal, SignalFamily};
use crate::solver::{solve_tv, success, MeasurementModel, SolveOpts, SolveStatus};
use crate::width::{
    width_empirical, width_upper_analytic, width_upper_mc, AnalyticMode, EmpiricalOpts,
    WidthMethod,
};
use crate::{Error, Result};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

/// RNG stream keyed by (seed, n, m, trial). Identical keys give
/// bit-identical streams on every platform.
pub fn keyed_rng(seed: u64, n: u64, m: u64, trial: u64) -> ChaCha8Rng {
    let mut bytes = [0u8; 32];
    bytes[..8].copy_from_slice(&seed.to_le_bytes());
    bytes[8..16].copy_from_slice(&n.to_le_bytes());
    bytes[16..24].copy_from_slice(&m.to_le_bytes());
    bytes[24..].copy_from_slice(&trial.to_le_bytes());
    ChaCha8Rng::from_seed(bytes)
}

/// `m x n` matrix with i.i.d. standard normal entries.
pub fn gaussian_matrix<R: Rng + ?Sized>(m: usize, n: usize, rng: &mut R) -> Vec<Vec<f64>> {
    (0..m)
        .map(|_| (0..n).map(|_| rng.sample(StandardNormal)).collect())
        .collect()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PhaseConfig {
    pub family: SignalFamily,
    pub s: usize,
    pub n_grid: Vec<usize>,
    pub m_grid: Vec<usize>,
    pub trials: usize,
    pub tol: f64,
    pub seed: u64,
    #[serde(default = "default_solver_tol")]
    pub solver_tol: f64,
    #[serde(default = "default_solver_iters")]
    pub solver_max_iters: usize,
}

fn default_solver_tol() -> f64 {
    1e-6
}

fn default_solver_iters() -> usize {
    200_000
}

impl PhaseConfig {
    fn solve_opts(&self) -> SolveOpts {
        SolveOpts { tol: self.solver_tol, max_iters: self.solver_max_iters }
    }
}

/// Default m grid for a given n: `s + 2` up to `n`, stepped by
/// `max(1, n / 64)`.
pub fn default_m_grid(n: usize, s: usize) -> Vec<usize> {
    let step = (n / 64).max(1);
    let mut grid: Vec<usize> = ((s + 2)..=n).step_by(step).collect();
    if *grid.last().unwrap_or(&0) != n {
        grid.push(n);
    }
    grid
}

#[derive(Debug, Clone, Serialize)]
pub struct PhaseDiagram {
    pub family: SignalFamily,
    pub s: usize,
    pub n_grid: Vec<usize>,
    pub m_grid: Vec<usize>,
    pub trials_per_cell: usize,
    pub seed: u64,
    pub tol: f64,
    /// `success_counts[i][j]` for `(n_grid[i], m_grid[j])`.
    pub success_counts: Vec<Vec<usize>>,
    /// Cells where more than 10% of solves hit the iteration cap.
    pub flagged_cells: Vec<(usize, usize)>,
}

/// Deterministic signal for a cell. Families with random jump positions
/// redraw per trial; families with fixed supports keep one signal per n
/// (drawn from the trial-independent stream).
fn cell_signal(family: SignalFamily, n: usize, s: usize, seed: u64, trial: u64) -> Result<Signal> {
    let key_trial = match family {
        SignalFamily::Equidistant | SignalFamily::DenseJump => u64::MAX,
        SignalFamily::RandomJump | SignalFamily::Densifying => trial,
    };
    let mut rng = keyed_rng(seed, n as u64, u64::MAX, key_trial);
    family.sample(n, s, &mut rng)
}

/// Run one (n, m) cell; returns (successes, max-iter count).
fn run_cell(cfg: &PhaseConfig, n: usize, m: usize) -> Result<(usize, usize)> {
    let mut successes = 0;
    let mut capped = 0;
    for trial in 0..cfg.trials {
        let x = cell_signal(cfg.family, n, cfg.s, cfg.seed, trial as u64)?;
        let mut rng = keyed_rng(cfg.seed, n as u64, m as u64, trial as u64);
        let a = gaussian_matrix(m, n, &mut rng);
        let y: Vec<f64> = a
            .iter()
            .map(|row| row.iter().zip(x.values()).map(|(a, b)| a * b).sum())
            .collect();
        let model = MeasurementModel::new(a, y, 0.0)?;
        let res = solve_tv(&model, &cfg.solve_opts());
        if res.status == SolveStatus::MaxIters {
            capped += 1;
        }
        if success(&res.x, x.values(), cfg.tol) {
            successes += 1;
        }
    }
    Ok((successes, capped))
}

pub fn phase_transition(cfg: &PhaseConfig) -> Result<PhaseDiagram> {
    if cfg.n_grid.is_empty() || cfg.m_grid.is_empty() || cfg.trials == 0 {
        return Err(Error::InvalidParams("grids and trials must be nonempty".into()));
    }
    let mut counts = Vec::with_capacity(cfg.n_grid.len());
    let mut flagged = Vec::new();
    for (i, &n) in cfg.n_grid.iter().enumerate() {
        let mut row = Vec::with_capacity(cfg.m_grid.len());
        for (j, &m) in cfg.m_grid.iter().enumerate() {
            let (successes, capped) = run_cell(cfg, n, m)?;
            if 10 * capped > cfg.trials {
                flagged.push((i, j));
            }
            row.push(successes);
        }
        counts.push(row);
    }
    Ok(PhaseDiagram {
        family: cfg.family,
        s: cfg.s,
        n_grid: cfg.n_grid.clone(),
        m_grid: cfg.m_grid.clone(),
        trials_per_cell: cfg.trials,
        seed: cfg.seed,
        tol: cfg.tol,
        success_counts: counts,
        flagged_cells: flagged,
    })
}

/// Smallest m with empirical success probability >= 1/2, linearly
/// interpolated between the bracketing grid points. `None` if the curve
/// never reaches 1/2.
pub fn m50(m_grid: &[usize], counts: &[usize], trials: usize) -> Option<f64> {
    let p = |c: usize| c as f64 / trials as f64;
    let first = m_grid.iter().zip(counts).position(|(_, &c)| p(c) >= 0.5)?;
    if first == 0 {
        return Some(m_grid[0] as f64);
    }
    let (m0, p0) = (m_grid[first - 1] as f64, p(counts[first - 1]));
    let (m1, p1) = (m_grid[first] as f64, p(counts[first]));
    Some(m0 + (0.5 - p0) * (m1 - m0) / (p1 - p0))
}

/// Adaptive search for m50 at a single n: exponential bracketing, then
/// bisection, then interpolation between the two bracketing integers.
/// During bracketing, a cell stops early once its outcome (above or
/// below 1/2) is decided; the final bracket is re-run in full so the
/// interpolation uses exact counts.
pub fn m50_search(cfg: &PhaseConfig, n: usize) -> Result<f64> {
    let decided = |cfg: &PhaseConfig, n: usize, m: usize| -> Result<bool> {
        // early-stopped comparison of the success count against trials/2
        let need = cfg.trials.div_ceil(2);
        let mut successes = 0;
        let mut failures = 0;
        for trial in 0..cfg.trials {
            let x = cell_signal(cfg.family, n, cfg.s, cfg.seed, trial as u64)?;
            let mut rng = keyed_rng(cfg.seed, n as u64, m as u64, trial as u64);
            let a = gaussian_matrix(m, n, &mut rng);
            let y: Vec<f64> = a
                .iter()
                .map(|row| row.iter().zip(x.values()).map(|(a, b)| a * b).sum())
                .collect();
            let model = MeasurementModel::new(a, y, 0.0)?;
            let res = solve_tv(&model, &cfg.solve_opts());
            if success(&res.x, x.values(), cfg.tol) {
                successes += 1;
            } else {
                failures += 1;
            }
            if successes >= need {
                return Ok(true);
            }
            if failures > cfg.trials - need {
                return Ok(false);
            }
        }
        Ok(successes >= need)
    };

    let mut lo = cfg.s + 1; // never sufficient: below the kernel dimension + s
    let mut hi = lo + 1;
    while hi < n && !decided(cfg, n, hi)? {
        lo = hi;
        hi = (2 * hi).min(n);
    }
    if hi >= n && !decided(cfg, n, hi)? {
        return Err(Error::InfeasibleInput(format!(
            "success probability never reaches 1/2 up to m = n = {n}"
        )));
    }
    while hi - lo > 1 {
        let mid = (lo + hi) / 2;
        if decided(cfg, n, mid)? {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    // exact counts at the bracket for interpolation
    let (c_lo, _) = run_cell(cfg, n, lo)?;
    let (c_hi, _) = run_cell(cfg, n, hi)?;
    let grid = [lo, hi];
    let counts = [c_lo, c_hi.max(c_lo.max(cfg.trials.div_ceil(2)))];
    Ok(m50(&grid, &counts, cfg.trials).unwrap_or(hi as f64))
}

#[derive(Debug, Clone, Serialize)]
pub struct WidthRow {
    pub family: SignalFamily,
    pub n: usize,
    pub method: WidthMethod,
    pub mean_sq: f64,
    pub std_error: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct WidthSweepConfig {
    pub families: Vec<SignalFamily>,
    pub s: usize,
    pub n_grid: Vec<usize>,
    pub trials: usize,
    pub seed: u64,
}

/// Evaluate all four width methods for each (family, n) pair.
pub fn width_sweep(cfg: &WidthSweepConfig) -> Result<Vec<WidthRow>> {
    let mut rows = Vec::new();
    for &family in &cfg.families {
        for &n in &cfg.n_grid {
            let x = cell_signal(family, n, cfg.s, cfg.seed, 0)?;
            let delta = separation_discrete(&x)?.delta_max;
            let mut push = |method: WidthMethod, mean_sq: f64, std_error: f64| {
                rows.push(WidthRow { family, n, method, mean_sq, std_error });
            };
            let emp = width_empirical(
                &x,
                cfg.trials,
                &mut keyed_rng(cfg.seed, n as u64, 1, 0),
                &EmpiricalOpts::default(),
            )?;
            push(WidthMethod::EmpiricalPolar, emp.mean_sq, emp.std_error);
            match width_upper_mc(&x, delta, cfg.trials, &mut keyed_rng(cfg.seed, n as u64, 2, 0)) {
                Ok(mc) => push(WidthMethod::McDualUpper, mc.mean_sq, mc.std_error),
                Err(Error::SeparationTooSmall { .. }) => {}
                Err(e) => return Err(e),
            }
            if let Ok(v) = width_upper_analytic(&x, delta, AnalyticMode::Eq417) {
                push(WidthMethod::Analytic417, v, 0.0);
            }
            if let Ok(v) = width_upper_analytic(&x, delta, AnalyticMode::Eq418) {
                push(WidthMethod::Analytic418, v, 0.0);
            }
        }
    }
    Ok(rows)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StabilityConfig {
    pub family: SignalFamily,
    pub n: usize,
    pub s: usize,
    /// Amplitude of the dense gradient perturbation.
    pub epsilon: f64,
    pub eta: f64,
    /// Oversampling: measurements per instance.
    pub m: usize,
    pub trials: usize,
    pub seed: u64,
    #[serde(default = "default_solver_tol")]
    pub solver_tol: f64,
    #[serde(default = "default_solver_iters")]
    pub solver_max_iters: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct StabilityRecord {
    /// `tau(x*) = ||grad x*||_1 / ||P_S grad x*||_1 >= 1`.
    pub tau_x: f64,
    /// `||pinv(grad) P_{S^c} grad x*||_2`.
    pub term1: f64,
    /// `||x* - mean(x*) 1||_2`.
    pub term2: f64,
    pub eta: f64,
    pub m: usize,
    pub observed_error: f64,
    /// `| ||grad surrogate||_1 - ||grad x*||_1 |` for the norm-matched
    /// surrogate construction.
    pub surrogate_tv_gap: f64,
    /// True when the perturbation changed the dominant-jump set and the
    /// instance was not solved.
    pub skipped: bool,
}

/// Perturbed signal `x* = base + epsilon * pinv(grad) u` with `u` dense
/// i.i.d. uniform on the faces.
fn perturb(base: &Signal, epsilon: f64, rng: &mut ChaCha8Rng) -> Signal {
    let mut values = base.values().to_vec();
    if epsilon != 0.0 {
        let u: Vec<f64> = (0..base.n() - 1).map(|_| rng.gen_range(-1.0..=1.0)).collect();
        for (v, p) in values.iter_mut().zip(grad_pinv(&u)) {
            *v += epsilon * p;
        }
    }
    Signal::new(values).expect("perturbation keeps values finite")
}

pub fn stability_suite(cfg: &StabilityConfig) -> Result<Vec<StabilityRecord>> {
    if cfg.trials == 0 {
        return Err(Error::InvalidParams("need trials >= 1".into()));
    }
    let mut records = Vec::with_capacity(cfg.trials);
    for trial in 0..cfg.trials {
        let base = cell_signal(cfg.family, cfg.n, cfg.s, cfg.seed, trial as u64)?;
        let mut rng = keyed_rng(cfg.seed, cfg.n as u64, cfg.m as u64, trial as u64);
        let x = perturb(&base, cfg.epsilon, &mut rng);
        let gx = x.grad();
        let support = best_s_support(&gx, cfg.s);
        let skipped = support != base.jump_support();

        let tv: f64 = gx.iter().map(|v| v.abs()).sum();
        let tv_on_s: f64 = project_onto(&gx, &support).iter().map(|v| v.abs()).sum();
        let tau_x = tv / tv_on_s;
        let term1 = {
            let off = project_off(&gx, &support);
            grad_pinv(&off).iter().map(|v| v * v).sum::<f64>().sqrt()
        };
        let mean = x.values().iter().sum::<f64>() / cfg.n as f64;
        let term2 = x.values().iter().map(|v| (v - mean).powi(2)).sum::<f64>().sqrt();

        // norm-matched surrogate: tau (pinv(grad) P_S grad x* + lambda 1)
        let lambda = mean / tau_x;
        let surrogate: Vec<f64> = grad_pinv(&project_onto(&gx, &support))
            .iter()
            .map(|v| tau_x * (v + lambda))
            .collect();
        let surrogate_tv: f64 = crate::gradient::grad(&surrogate).iter().map(|v| v.abs()).sum();
        let surrogate_tv_gap = (surrogate_tv - tv).abs();

        let observed_error = if skipped {
            f64::NAN
        } else {
            let a = gaussian_matrix(cfg.m, cfg.n, &mut rng);
            let mut y: Vec<f64> = a
                .iter()
                .map(|row| row.iter().zip(x.values()).map(|(a, b)| a * b).sum())
                .collect();
            if cfg.eta > 0.0 {
                // noise uniform on the eta-sphere
                let mut e: Vec<f64> = (0..cfg.m).map(|_| rng.sample(StandardNormal)).collect();
                let norm = e.iter().map(|v| v * v).sum::<f64>().sqrt();
                for (yi, ei) in y.iter_mut().zip(&e) {
                    *yi += ei * cfg.eta / norm;
                }
                let _ = &mut e;
            }
            let model = MeasurementModel::new(a, y, cfg.eta)?;
            let opts = SolveOpts { tol: cfg.solver_tol, max_iters: cfg.solver_max_iters };
            let res = solve_tv(&model, &opts);
            res.x
                .iter()
                .zip(x.values())
                .map(|(a, b)| (a - b).powi(2))
                .sum::<f64>()
                .sqrt()
        };

        records.push(StabilityRecord {
            tau_x,
            term1,
            term2,
            eta: cfg.eta,
            m: cfg.m,
            observed_error,
            surrogate_tv_gap,
            skipped,
        });
    }
    Ok(records)
}

/// CSV with the schema `family,n,m,trials,successes,seed,tol`.
pub fn phase_csv(d: &PhaseDiagram) -> String {
    let mut out = String::from("family,n,m,trials,successes,seed,tol\n");
    for (i, &n) in d.n_grid.iter().enumerate() {
        for (j, &m) in d.m_grid.iter().enumerate() {
            out.push_str(&format!(
                "{},{},{},{},{},{},{}\n",
                d.family.name(),
                n,
                m,
                d.trials_per_cell,
                d.success_counts[i][j],
                d.seed,
                d.tol
            ));
        }
    }
    out
}

/// CSV with the schema `family,n,method,mean_sq,std_error`.
pub fn width_csv(rows: &[WidthRow]) -> String {
    let mut out = String::from("family,n,method,mean_sq,std_error\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            r.family.name(),
            r.n,
            r.method.name(),
            r.mean_sq,
            r.std_error
        ));
    }
    out
}

/// Grey-tone heatmap of a phase diagram as a standalone SVG: one
/// rectangle per cell, n on a log-scaled horizontal axis, m vertical.
pub fn phase_svg(d: &PhaseDiagram) -> String {
    let width = 640.0;
    let height = 480.0;
    let margin = 60.0;
    let plot_w = width - 2.0 * margin;
    let plot_h = height - 2.0 * margin;
    let log_n: Vec<f64> = d.n_grid.iter().map(|&n| (n as f64).ln()).collect();
    let (ln_lo, ln_hi) = (log_n[0], *log_n.last().unwrap());
    let ln_span = (ln_hi - ln_lo).max(1e-9);
    let m_max = *d.m_grid.last().unwrap() as f64;
    let m_min = d.m_grid[0] as f64;
    let m_span = (m_max - m_min).max(1e-9);

    // cell edges at midpoints between neighboring grid values
    let edges = |vals: &[f64], lo: f64, hi: f64| -> Vec<(f64, f64)> {
        (0..vals.len())
            .map(|i| {
                let left = if i == 0 { lo } else { 0.5 * (vals[i - 1] + vals[i]) };
                let right = if i + 1 == vals.len() {
                    hi
                } else {
                    0.5 * (vals[i] + vals[i + 1])
                };
                (left, right)
            })
            .collect()
    };
    let half = (log_n.get(1).copied().unwrap_or(ln_lo + 1.0) - ln_lo) / 2.0;
    let n_edges = edges(&log_n, ln_lo - half, ln_hi + half);
    let m_vals: Vec<f64> = d.m_grid.iter().map(|&m| m as f64).collect();
    let m_half = (m_vals.get(1).copied().unwrap_or(m_min + 1.0) - m_min) / 2.0;
    let m_edges = edges(&m_vals, m_min - m_half, m_max + m_half);
    let ln_span_pad = ln_span + 2.0 * half;
    let m_span_pad = m_span + 2.0 * m_half;

    let mut svg = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{width}\" height=\"{height}\" viewBox=\"0 0 {width} {height}\">\n\
         <rect width=\"{width}\" height=\"{height}\" fill=\"white\"/>\n"
    );
    for (i, _) in d.n_grid.iter().enumerate() {
        for (j, _) in d.m_grid.iter().enumerate() {
            let p = d.success_counts[i][j] as f64 / d.trials_per_cell as f64;
            let shade = (255.0 * (1.0 - p)).round() as u8;
            let x0 = margin + (n_edges[i].0 - (ln_lo - half)) / ln_span_pad * plot_w;
            let x1 = margin + (n_edges[i].1 - (ln_lo - half)) / ln_span_pad * plot_w;
            let y0 = height - margin - (m_edges[j].1 - (m_min - m_half)) / m_span_pad * plot_h;
            let y1 = height - margin - (m_edges[j].0 - (m_min - m_half)) / m_span_pad * plot_h;
            svg.push_str(&format!(
                "<rect x=\"{:.2}\" y=\"{:.2}\" width=\"{:.2}\" height=\"{:.2}\" fill=\"rgb({shade},{shade},{shade})\"/>\n",
                x0,
                y0,
                x1 - x0,
                y1 - y0
            ));
        }
    }
    // axis labels
    for (i, &n) in d.n_grid.iter().enumerate() {
        let x = margin + (log_n[i] - (ln_lo - half)) / ln_span_pad * plot_w;
        svg.push_str(&format!(
            "<text x=\"{:.2}\" y=\"{:.2}\" font-size=\"11\" text-anchor=\"middle\">{n}</text>\n",
            x,
            height - margin + 16.0
        ));
    }
    let m_ticks = [d.m_grid[0], d.m_grid[d.m_grid.len() / 2], *d.m_grid.last().unwrap()];
    for &m in &m_ticks {
        let y = height - margin - (m as f64 - (m_min - m_half)) / m_span_pad * plot_h;
        svg.push_str(&format!(
            "<text x=\"{:.2}\" y=\"{:.2}\" font-size=\"11\" text-anchor=\"end\">{m}</text>\n",
            margin - 6.0,
            y + 4.0
        ));
    }
    svg.push_str(&format!(
        "<text x=\"{:.2}\" y=\"{:.2}\" font-size=\"12\" text-anchor=\"middle\">n (log scale)</text>\n\
         <text x=\"14\" y=\"{:.2}\" font-size=\"12\" text-anchor=\"middle\" transform=\"rotate(-90 14 {:.2})\">m</text>\n",
        width / 2.0,
        height - 16.0,
        height / 2.0,
        height / 2.0
    ));
    svg.push_str("</svg>\n");
    svg
}
