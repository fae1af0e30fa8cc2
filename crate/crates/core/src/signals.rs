//! Piecewise-constant signal models and separation constants.
//!
//! A continuous model is a step function on `(0, 1]` with jumps at
//! `0 < v_1 < ... < v_s < 1`; its discrete counterpart is a vector in R^n
//! whose gradient support lives on the faces `1..=n-1`. The separation
//! constant measures how far the jump pattern deviates from equidistant:
//! `delta = (s + 1) * min_gap / domain_length`, always in `(0, 1]` with 1
//! meaning perfectly equidistant jumps (boundary gaps count).

use crate::gradient::grad;
use crate::{Error, Result};
use rand::Rng;
use serde::{Deserialize, Serialize};

/// Relative tolerance used for jump detection on externally loaded data.
pub const DEFAULT_JUMP_TOL: f64 = 1e-12;

/// Minimal difference between adjacent level coefficients when levels are
/// drawn at random; keeps jumps well-conditioned for recovery experiments.
const MIN_LEVEL_GAP: f64 = 0.1;

/// A piecewise constant function on `(0, 1]` with half-open pieces
/// `(v_{i-1}, v_i]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PiecewiseConstantFn {
    jumps: Vec<f64>,
    levels: Vec<f64>,
}

impl PiecewiseConstantFn {
    pub fn new(jumps: Vec<f64>, levels: Vec<f64>) -> Result<Self> {
        if jumps.is_empty() {
            return Err(Error::InvalidParams("need at least one jump".into()));
        }
        if levels.len() != jumps.len() + 1 {
            return Err(Error::InvalidParams(format!(
                "expected {} levels for {} jumps, got {}",
                jumps.len() + 1,
                jumps.len(),
                levels.len()
            )));
        }
        let mut prev = 0.0;
        for &v in &jumps {
            if !(v > prev && v < 1.0) || !v.is_finite() {
                return Err(Error::InvalidParams(
                    "jumps must be strictly increasing in (0, 1)".into(),
                ));
            }
            prev = v;
        }
        for w in levels.windows(2) {
            if !w[0].is_finite() || !w[1].is_finite() || w[0] == w[1] {
                return Err(Error::InvalidParams(
                    "adjacent levels must be finite and distinct".into(),
                ));
            }
        }
        Ok(Self { jumps, levels })
    }

    /// Number of jump discontinuities.
    pub fn num_jumps(&self) -> usize {
        self.jumps.len()
    }

    pub fn jumps(&self) -> &[f64] {
        &self.jumps
    }

    pub fn levels(&self) -> &[f64] {
        &self.levels
    }

    /// Value at `t` in `(0, 1]`; piece membership is half-open, so
    /// `t = v_i` belongs to the i-th piece.
    pub fn value_at(&self, t: f64) -> f64 {
        debug_assert!(t > 0.0 && t <= 1.0);
        // first piece whose right endpoint is >= t
        let i = self.jumps.partition_point(|&v| v < t);
        self.levels[i]
    }

    /// Pointwise samples `x_j = f(j / n)` for `j = 1..=n`.
    pub fn discretize(&self, n: usize) -> Result<Signal> {
        let s = self.num_jumps();
        if n < s + 1 {
            return Err(Error::ResolutionTooCoarse { n, s });
        }
        let values = (1..=n).map(|j| self.value_at(j as f64 / n as f64)).collect();
        Signal::new(values)
    }
}

/// A discrete signal of length `n >= 2`.
#[derive(Debug, Clone, PartialEq)]
pub struct Signal {
    values: Vec<f64>,
}

impl Signal {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.len() < 2 {
            return Err(Error::InvalidParams("signal needs n >= 2".into()));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParams("signal values must be finite".into()));
        }
        Ok(Self { values })
    }

    pub fn n(&self) -> usize {
        self.values.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Gradient support as 1-based faces, by exact comparison. Appropriate
    /// for constructed signals; use [`Signal::jump_support_tol`] for
    /// measured data.
    pub fn jump_support(&self) -> Vec<usize> {
        self.values
            .windows(2)
            .enumerate()
            .filter(|(_, w)| w[0] != w[1])
            .map(|(j, _)| j + 1)
            .collect()
    }

    /// Gradient support with a relative tolerance: face `j` counts as a
    /// jump if `|x_{j+1} - x_j| > tol * max|x|`.
    pub fn jump_support_tol(&self, rel_tol: f64) -> Vec<usize> {
        let scale = self.values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let thresh = rel_tol * scale;
        self.values
            .windows(2)
            .enumerate()
            .filter(|(_, w)| (w[1] - w[0]).abs() > thresh)
            .map(|(j, _)| j + 1)
            .collect()
    }

    pub fn grad(&self) -> Vec<f64> {
        grad(&self.values)
    }
}

/// Separation data of a jump pattern: jump count, minimal gap between
/// consecutive jumps (boundaries included), and the maximal separation
/// constant.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SeparationReport {
    pub s: usize,
    pub min_gap: f64,
    pub delta_max: f64,
}

/// Maximal separation constant of a discrete signal:
/// `delta = (s + 1) * min_i |v_i - v_{i-1}| / n` with ghost faces
/// `v_0 = 0` and `v_{s+1} = n`.
///
/// A constant signal has no separation constant and is rejected; recovery
/// of constants is the one-dimensional kernel case handled by the caller.
pub fn separation_discrete(x: &Signal) -> Result<SeparationReport> {
    let support = x.jump_support();
    separation_of_support(&support, x.n())
}

/// Same as [`separation_discrete`] but for a bare support set.
pub fn separation_of_support(support: &[usize], n: usize) -> Result<SeparationReport> {
    if support.is_empty() {
        return Err(Error::NoJumps);
    }
    let s = support.len();
    let mut min_gap = usize::MAX;
    let mut prev = 0usize;
    for &v in support.iter().chain(std::iter::once(&n)) {
        min_gap = min_gap.min(v - prev);
        prev = v;
    }
    Ok(SeparationReport {
        s,
        min_gap: min_gap as f64,
        delta_max: (s + 1) as f64 * min_gap as f64 / n as f64,
    })
}

/// Maximal separation constant of a piecewise constant function:
/// `delta = (s + 1) * min_i |v_i - v_{i-1}|` with boundaries 0 and 1.
pub fn separation_continuous(f: &PiecewiseConstantFn) -> SeparationReport {
    let s = f.num_jumps();
    let mut min_gap = f64::INFINITY;
    let mut prev = 0.0;
    for &v in f.jumps().iter().chain(std::iter::once(&1.0)) {
        min_gap = min_gap.min(v - prev);
        prev = v;
    }
    SeparationReport {
        s,
        min_gap,
        delta_max: (s + 1) as f64 * min_gap,
    }
}

/// Signal families used by the generators, the experiments, and the CLI.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SignalFamily {
    /// Jumps at faces `floor(i n / (s+1))`, the best-separated pattern.
    Equidistant,
    /// `s` consecutive alternating jumps at faces `1..=s`, the worst case.
    DenseJump,
    /// Discretized step function with jumps i.i.d. uniform on (0, 1).
    RandomJump,
    /// Discretized step function with jumps at `1 - 2^{-i}`.
    Densifying,
}

impl SignalFamily {
    pub fn name(self) -> &'static str {
        match self {
            SignalFamily::Equidistant => "equidistant",
            SignalFamily::DenseJump => "dense-jump",
            SignalFamily::RandomJump => "random-jump",
            SignalFamily::Densifying => "densifying",
        }
    }

    /// Draw a length-`n` signal with `s` jumps from this family.
    /// Deterministic families still use `rng` for level coefficients.
    pub fn sample<R: Rng + ?Sized>(self, n: usize, s: usize, rng: &mut R) -> Result<Signal> {
        match self {
            SignalFamily::Equidistant => equidistant(n, s, Some(rng)),
            SignalFamily::DenseJump => dense_jump(n, s, Some(rng)),
            SignalFamily::RandomJump => random_jump_pcf(s, rng)?.discretize(n),
            SignalFamily::Densifying => densifying_pcf::<R>(s, Some(rng))?.discretize(n),
        }
    }
}

impl std::str::FromStr for SignalFamily {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "equidistant" => Ok(SignalFamily::Equidistant),
            "dense-jump" => Ok(SignalFamily::DenseJump),
            "random-jump" => Ok(SignalFamily::RandomJump),
            "densifying" => Ok(SignalFamily::Densifying),
            other => Err(Error::InvalidParams(format!("unknown family '{other}'"))),
        }
    }
}

/// Level coefficients i.i.d. uniform on [-1, 1], resampled until adjacent
/// levels differ by at least 0.1.
fn random_levels<R: Rng + ?Sized>(s: usize, rng: &mut R) -> Vec<f64> {
    let mut levels = Vec::with_capacity(s + 1);
    levels.push(rng.gen_range(-1.0..=1.0));
    while levels.len() < s + 1 {
        let cand: f64 = rng.gen_range(-1.0..=1.0);
        if (cand - levels.last().unwrap()).abs() >= MIN_LEVEL_GAP {
            levels.push(cand);
        }
    }
    levels
}

/// Fallback levels when no RNG is supplied: alternating 0, 1.
fn alternating_levels(s: usize) -> Vec<f64> {
    (0..=s).map(|i| (i % 2) as f64).collect()
}

/// Signal with jumps at the equidistant faces `floor(i n / (s+1))`.
pub fn equidistant<R: Rng + ?Sized>(n: usize, s: usize, rng: Option<&mut R>) -> Result<Signal> {
    if s == 0 {
        return Err(Error::InvalidParams("need s >= 1".into()));
    }
    if n < s + 1 {
        return Err(Error::ResolutionTooCoarse { n, s });
    }
    let support: Vec<usize> = (1..=s).map(|i| i * n / (s + 1)).collect();
    let levels = match rng {
        Some(r) => random_levels(s, r),
        None => alternating_levels(s),
    };
    signal_from_support(n, &support, &levels)
}

/// Dense-jump signal: `supp(grad x) = {1, ..., s}` with the alternating
/// sign pattern `sign(grad x)_i = (-1)^i`.
pub fn dense_jump<R: Rng + ?Sized>(n: usize, s: usize, rng: Option<&mut R>) -> Result<Signal> {
    if s == 0 {
        return Err(Error::InvalidParams("need s >= 1".into()));
    }
    if n < s + 1 {
        return Err(Error::ResolutionTooCoarse { n, s });
    }
    let mut rng = rng;
    let mut values = Vec::with_capacity(n);
    let mut cur = 0.0;
    values.push(cur);
    for i in 1..=s {
        let mag = match rng.as_deref_mut() {
            Some(r) => r.gen_range(0.5..=1.5),
            None => 1.0,
        };
        let sign = if i % 2 == 1 { -1.0 } else { 1.0 };
        cur += sign * mag;
        values.push(cur);
    }
    values.resize(n, cur);
    Signal::new(values)
}

/// Step function with `s` jumps drawn i.i.d. uniform on (0, 1), sorted;
/// resamples on exact duplicates.
pub fn random_jump_pcf<R: Rng + ?Sized>(s: usize, rng: &mut R) -> Result<PiecewiseConstantFn> {
    if s == 0 {
        return Err(Error::InvalidParams("need s >= 1".into()));
    }
    let jumps = loop {
        let mut jumps: Vec<f64> = (0..s).map(|_| rng.gen_range(0.0..1.0)).collect();
        jumps.retain(|&v| v > 0.0);
        jumps.sort_by(|a, b| a.partial_cmp(b).unwrap());
        jumps.dedup();
        if jumps.len() == s {
            break jumps;
        }
    };
    PiecewiseConstantFn::new(jumps, random_levels(s, rng))
}

/// Step function with exponentially densifying jumps `v_i = 1 - 2^{-i}`;
/// its maximal separation constant is `2^{-s} (s + 1)`.
pub fn densifying_pcf<R: Rng + ?Sized>(
    s: usize,
    rng: Option<&mut R>,
) -> Result<PiecewiseConstantFn> {
    if s == 0 {
        return Err(Error::InvalidParams("need s >= 1".into()));
    }
    let jumps = (1..=s).map(|i| 1.0 - 0.5f64.powi(i as i32)).collect();
    let levels = match rng {
        Some(r) => random_levels(s, r),
        None => alternating_levels(s),
    };
    PiecewiseConstantFn::new(jumps, levels)
}

/// Assemble a signal from a sorted face support and per-piece levels.
pub fn signal_from_support(n: usize, support: &[usize], levels: &[f64]) -> Result<Signal> {
    if levels.len() != support.len() + 1 {
        return Err(Error::InvalidParams("levels/support length mismatch".into()));
    }
    let mut values = Vec::with_capacity(n);
    let mut piece = 0;
    for j in 1..=n {
        while piece < support.len() && j > support[piece] {
            piece += 1;
        }
        values.push(levels[piece]);
    }
    let x = Signal::new(values)?;
    if x.jump_support() != support {
        return Err(Error::InvalidParams(
            "support not realizable (duplicate faces or equal adjacent levels)".into(),
        ));
    }
    Ok(x)
}

/// Write a signal as CSV, one value per line, with an `# n=<n>` header.
pub fn write_signal_csv<W: std::io::Write>(x: &Signal, mut out: W) -> Result<()> {
    writeln!(out, "# n={}", x.n())?;
    for v in x.values() {
        writeln!(out, "{v}")?;
    }
    Ok(())
}

/// Read a signal from CSV as written by [`write_signal_csv`]; the header
/// line is optional.
pub fn read_signal_csv<Rd: std::io::BufRead>(input: Rd) -> Result<Signal> {
    let mut values = Vec::new();
    for line in input.lines() {
        let line = line?;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        values.push(
            line.parse::<f64>()
                .map_err(|e| Error::Parse(format!("bad value '{line}': {e}")))?,
        );
    }
    Signal::new(values)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn densifying_separation() {
        // s = 2: jumps (0.5, 0.75), maximal separation 3/4
        let f = densifying_pcf::<ChaCha8Rng>(2, None).unwrap();
        assert_eq!(f.jumps(), &[0.5, 0.75]);
        let rep = separation_continuous(&f);
        assert!((rep.delta_max - 0.75).abs() < 1e-15);

        // closed form 2^{-s} (s + 1) for s <= 20
        for s in 1..=20 {
            let f = densifying_pcf::<ChaCha8Rng>(s, None).unwrap();
            let rep = separation_continuous(&f);
            let expect = 0.5f64.powi(s as i32) * (s + 1) as f64;
            assert!(
                (rep.delta_max - expect).abs() <= 1e-12 * expect,
                "s={s}: {} vs {expect}",
                rep.delta_max
            );
        }
    }

    #[test]
    fn dense_jump_sign_pattern() {
        let x = dense_jump::<ChaCha8Rng>(16, 4, None).unwrap();
        assert_eq!(x.jump_support(), vec![1, 2, 3, 4]);
        let g = x.grad();
        let signs: Vec<f64> = g.iter().map(|v| v.signum() * (*v != 0.0) as i32 as f64).collect();
        assert_eq!(&signs[..4], &[-1.0, 1.0, -1.0, 1.0]);
        assert!(signs[4..].iter().all(|&v| v == 0.0));
    }

    #[test]
    fn equidistant_support() {
        let x = equidistant::<ChaCha8Rng>(16, 3, None).unwrap();
        assert_eq!(x.jump_support(), vec![4, 8, 12]);
        let rep = separation_discrete(&x).unwrap();
        assert_eq!(rep.delta_max, 1.0);
    }

    #[test]
    fn discretize_half_open() {
        let f = PiecewiseConstantFn::new(vec![0.5], vec![0.0, 1.0]).unwrap();
        let x = f.discretize(4).unwrap();
        assert_eq!(x.values(), &[0.0, 0.0, 1.0, 1.0]);
        assert_eq!(x.jump_support(), vec![2]);
        // discrete delta_max = 1 exceeds the Prop-2.3 bound 1 - 2/4
        let rep = separation_discrete(&x).unwrap();
        assert_eq!(rep.delta_max, 1.0);
        assert!(rep.delta_max > 1.0 - 2.0 / 4.0);
    }

    #[test]
    fn discretize_densifying() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let f = densifying_pcf(2, Some(&mut rng)).unwrap();
        let x = f.discretize(64).unwrap();
        assert_eq!(x.jump_support().len(), 2);
    }

    #[test]
    fn separation_examples() {
        let rep = separation_of_support(&[5], 16).unwrap();
        assert_eq!(rep.min_gap, 5.0);
        assert!((rep.delta_max - 0.625).abs() < 1e-15);

        // dense jumps: delta = (s+1)/n
        let rep = separation_of_support(&[1, 2, 3, 4], 16).unwrap();
        assert!((rep.delta_max - 5.0 / 16.0).abs() < 1e-15);
    }

    #[test]
    fn separation_continuous_examples() {
        // equidistant jumps at i/(s+1) have delta = 1
        for s in [1usize, 3, 7] {
            let jumps: Vec<f64> = (1..=s).map(|i| i as f64 / (s + 1) as f64).collect();
            let f = PiecewiseConstantFn::new(jumps, alternating_levels(s)).unwrap();
            let rep = separation_continuous(&f);
            assert!((rep.delta_max - 1.0).abs() < 1e-12);
        }
        let f = PiecewiseConstantFn::new(vec![0.1, 0.5], vec![0.0, 1.0, 0.0]).unwrap();
        let rep = separation_continuous(&f);
        assert!((rep.min_gap - 0.1).abs() < 1e-15);
        assert!((rep.delta_max - 0.3).abs() < 1e-14);
    }

    #[test]
    fn constant_signal_rejected() {
        let x = Signal::new(vec![2.0; 8]).unwrap();
        assert!(matches!(separation_discrete(&x), Err(Error::NoJumps)));
    }

    #[test]
    fn discretization_preserves_separation() {
        // Prop 2.3: over random draws with n >= 16 s / delta°, the
        // discrete maximum satisfies delta > delta° - (s+1)/n.
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..200 {
            let s = rng.gen_range(1..=6);
            let f = random_jump_pcf(s, &mut rng).unwrap();
            let cont = separation_continuous(&f);
            let n = ((16.0 * s as f64 / cont.delta_max).ceil() as usize).max(s + 1);
            let x = f.discretize(n).unwrap();
            assert_eq!(x.jump_support().len(), s);
            let disc = separation_discrete(&x).unwrap();
            assert!(
                disc.delta_max > cont.delta_max - (s + 1) as f64 / n as f64,
                "delta {} vs bound {}",
                disc.delta_max,
                cont.delta_max - (s + 1) as f64 / n as f64
            );
        }
    }

    #[test]
    fn generated_delta_in_range() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for family in [
            SignalFamily::Equidistant,
            SignalFamily::DenseJump,
            SignalFamily::RandomJump,
        ] {
            for _ in 0..20 {
                let s = rng.gen_range(1..=5);
                let n = rng.gen_range(4 * (s + 1)..256);
                let x = family.sample(n, s, &mut rng).unwrap();
                let support = x.jump_support();
                let rep = separation_of_support(&support, n).unwrap();
                let lower = (support.len() + 1) as f64 / n as f64;
                assert!(rep.delta_max >= lower - 1e-12 && rep.delta_max <= 1.0 + 1e-12);
            }
        }
    }

    #[test]
    fn equidistant_multiple_gives_delta_one() {
        // continuous equidistant jumps discretized at n = k (s+1)
        for (s, k) in [(3usize, 4usize), (7, 8), (2, 5)] {
            let jumps: Vec<f64> = (1..=s).map(|i| i as f64 / (s + 1) as f64).collect();
            let f = PiecewiseConstantFn::new(jumps, alternating_levels(s)).unwrap();
            let x = f.discretize(k * (s + 1)).unwrap();
            let rep = separation_discrete(&x).unwrap();
            assert_eq!(rep.delta_max, 1.0);
        }
    }

    #[test]
    fn csv_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let x = equidistant(32, 3, Some(&mut rng)).unwrap();
        let mut buf = Vec::new();
        write_signal_csv(&x, &mut buf).unwrap();
        let back = read_signal_csv(std::io::Cursor::new(buf)).unwrap();
        assert_eq!(back, x);
    }
}
