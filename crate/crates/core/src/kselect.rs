//! Estimating the number of clusters from cosine distortion curves.
//!
//! For every candidate `K` the data are clustered with spherical K-Means
//! and summarized by the distortion `d_K`, the mean per-dimension cosine
//! distance to the closest center. The log-jump measure is
//! `LJ_K = log d_{K+gap} - log d_K`. By default the estimate is the candidate
//! reached by the steepest log drop, i.e. `K + gap` for the most negative
//! `LJ_K`. [`LogJumpRule::Literal`] instead returns the `K` with the largest
//! `LJ_K`; since K-Means distortion does not grow with `K` this selects the
//! flattest step and drifts toward the top of the range.
//! The classic jump estimator picks the largest first difference of
//! `d_K^{-p/2}`.

use std::io::Write;

use rayon::prelude::*;
use serde::Serialize;

use crate::clustering::{e_step, kmeans_pp_init, m_step};
use crate::error::{Error, Result};
use crate::rng::{derive_seed, seeded};
use crate::scalar::Scalar;
use crate::vector::{cosine_with_norms, l2_norm, Norm};

/// Floor applied to distortions before taking logarithms.
pub const DISTORTION_FLOOR: f64 = 1e-12;

/// Which candidate-range heuristic to use.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Regime {
    /// Few clusters: `[1, floor(sqrt(n) / 2)]` with unit step.
    Traditional,
    /// Many clusters: stepped ranges refined by powers of ten.
    LargeK,
}

impl std::str::FromStr for Regime {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('_', "-").as_str() {
            "traditional" => Ok(Regime::Traditional),
            "large-k" | "largek" => Ok(Regime::LargeK),
            other => Err(Error::Config(format!("unknown regime `{other}`"))),
        }
    }
}

impl std::fmt::Display for Regime {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Regime::Traditional => "traditional",
            Regime::LargeK => "large-k",
        })
    }
}

/// Candidates `lo, lo + gap, ...` up to `hi`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct KCandidateRange {
    pub lo: usize,
    pub hi: usize,
    pub gap: usize,
}

impl KCandidateRange {
    pub fn new(lo: usize, hi: usize, gap: usize) -> Result<Self> {
        if lo == 0 || lo > hi || gap == 0 {
            return Err(Error::domain(format!(
                "invalid candidate range [{lo}, {hi}] step {gap}"
            )));
        }
        Ok(Self { lo, hi, gap })
    }

    pub fn candidates(&self) -> Vec<usize> {
        (self.lo..=self.hi).step_by(self.gap).collect()
    }
}

/// Step size `10^(digits(n) - 2)`, at least 1.
pub fn gap_for(n: usize) -> usize {
    let digits = n.max(1).to_string().len() as u32;
    10usize.pow(digits.saturating_sub(2))
}

/// Initial candidate range for `n` inputs.
///
/// Above 10000 inputs the large-K range `[4 gap, 9 gap]` is always used.
/// Upper ends are clamped to [`max_candidate`]; the traditional range keeps
/// at least two candidates when `n >= 2`.
pub fn candidate_range(n: usize, regime: Regime) -> Result<KCandidateRange> {
    if n < 2 {
        return Err(Error::domain(format!("need at least 2 inputs, got {n}")));
    }
    let cap = max_candidate(n);
    if n > 10_000 {
        let gap = gap_for(n);
        return KCandidateRange::new(4 * gap, (9 * gap).min(cap), gap);
    }
    match regime {
        Regime::Traditional => {
            let hi = (((n as f64).sqrt() / 2.0).floor() as usize).max(2).min(cap);
            KCandidateRange::new(1, hi, 1)
        }
        Regime::LargeK => {
            let gap = gap_for(n);
            let lo = (2 * gap).min(cap);
            KCandidateRange::new(lo, (9 * gap).min(cap), gap)
        }
    }
}

/// Largest `K` worth trying on `n` inputs. `K = n` always has zero
/// distortion, so it is left out once `n >= 3`.
pub fn max_candidate(n: usize) -> usize {
    if n >= 3 {
        n - 1
    } else {
        n
    }
}

/// Next, finer range around `k_star`, or `None` once the step cannot shrink further.
///
/// The new step is `gap / 10` and the range spans one previous step on each
/// side of `k_star`, clamped to `[1, max_candidate(n)]`.
pub fn refine_range(k_star: usize, gap: usize, n: usize) -> Option<KCandidateRange> {
    if gap < 10 {
        return None;
    }
    let lo = k_star.saturating_sub(gap).max(1);
    let hi = (k_star + gap).min(max_candidate(n).max(1));
    KCandidateRange::new(lo, hi.max(lo), gap / 10).ok()
}

/// Mean per-dimension cosine distance of each input to its closest center.
pub fn distortion<T: Scalar>(inputs: &[Vec<T>], centers: &[Vec<T>]) -> Result<T> {
    if centers.is_empty() {
        return Err(Error::domain("distortion needs at least one center"));
    }
    if inputs.is_empty() {
        return Err(Error::domain("distortion of an empty input set"));
    }
    let cnorms: Vec<T> = centers.iter().map(|c| l2_norm(c)).collect();
    if cnorms.iter().any(|&n| n == T::zero()) {
        return Err(Error::domain("zero center vector"));
    }
    let p = inputs[0].len();
    let mut total = T::zero();
    for x in inputs {
        let nx = l2_norm(x);
        if nx == T::zero() {
            return Err(Error::domain("zero input vector"));
        }
        let best = centers
            .iter()
            .zip(&cnorms)
            .map(|(c, &nc)| T::one() - cosine_with_norms(x, nx, c, nc))
            .fold(T::infinity(), T::min);
        total = total + best;
    }
    Ok(total / T::from_count(inputs.len() * p))
}

/// Settings of the spherical K-Means runs behind each distortion value.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct KMeansOptions {
    pub restarts: usize,
    pub max_iter: usize,
    pub norm: Norm,
}

impl Default for KMeansOptions {
    fn default() -> Self {
        Self {
            restarts: 3,
            max_iter: 50,
            norm: Norm::L2,
        }
    }
}

/// Best-of-restarts distortion of a `k`-cluster spherical K-Means fit.
pub fn fitted_distortion<T: Scalar>(inputs: &[Vec<T>], k: usize, opts: &KMeansOptions, seed: u64) -> Result<f64> {
    let mut best = f64::INFINITY;
    for restart in 0..opts.restarts.max(1) {
        let mut rng = seeded(seed, restart as u64);
        let mut centers = kmeans_pp_init(inputs, k, opts.norm, &mut rng)?;
        let mut assignment = e_step(inputs, &centers);
        for _ in 0..opts.max_iter {
            centers = m_step(inputs, &mut assignment, k, opts.norm)?;
            let next = e_step(inputs, &centers);
            if next == assignment {
                break;
            }
            assignment = next;
        }
        best = best.min(distortion(inputs, &centers)?.as_f64());
    }
    Ok(best)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DistortionCurve {
    pub ks: Vec<usize>,
    pub d: Vec<f64>,
    /// Input dimension.
    pub p: usize,
    pub n: usize,
}

impl DistortionCurve {
    pub fn new(ks: Vec<usize>, d: Vec<f64>, p: usize, n: usize) -> Result<Self> {
        if ks.len() != d.len() {
            return Err(Error::domain("one distortion per candidate required"));
        }
        if ks.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::domain("candidates must be strictly ascending"));
        }
        Ok(Self { ks, d, p, n })
    }

    /// `log d_{next} - log d_K` for every candidate but the last.
    pub fn log_jumps(&self) -> Vec<f64> {
        self.d
            .windows(2)
            .map(|w| w[1].max(DISTORTION_FLOOR).ln() - w[0].max(DISTORTION_FLOOR).ln())
            .collect()
    }

    /// Writes `K,d_K,LJ_K` rows; the last candidate has an empty `LJ_K`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "K,d_K,LJ_K")?;
        let lj = self.log_jumps();
        for (i, (k, d)) in self.ks.iter().zip(&self.d).enumerate() {
            match lj.get(i) {
                Some(l) => writeln!(w, "{k},{d},{l}")?,
                None => writeln!(w, "{k},{d},")?,
            }
        }
        Ok(())
    }
}

/// Distortion at every candidate, evaluated in parallel with per-candidate seeds.
pub fn distortion_curve<T: Scalar>(
    inputs: &[Vec<T>],
    range: &KCandidateRange,
    opts: &KMeansOptions,
    seed: u64,
) -> Result<DistortionCurve> {
    let n = inputs.len();
    let ks: Vec<usize> = range.candidates().into_iter().filter(|&k| k <= n).collect();
    let d = ks
        .par_iter()
        .map(|&k| fitted_distortion(inputs, k, opts, derive_seed(seed, k as u64)))
        .collect::<Result<Vec<f64>>>()?;
    DistortionCurve::new(ks, d, inputs.first().map_or(0, Vec::len), n)
}

/// First index of the maximum; NaN never wins.
fn argmax(values: &[f64]) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, &v) in values.iter().enumerate() {
        if best.map_or(!v.is_nan(), |(_, b)| v > b) {
            best = Some((i, v));
        }
    }
    best.map(|(i, _)| i)
}

/// How a log-jump curve is turned into a single `K`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub enum LogJumpRule {
    /// Candidate following the most negative `LJ_K`.
    #[default]
    SteepestDrop,
    /// Candidate with the largest `LJ_K`.
    Literal,
}

impl std::str::FromStr for LogJumpRule {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "steepest-drop" | "steepest" => Ok(Self::SteepestDrop),
            "literal" => Ok(Self::Literal),
            other => Err(Error::Config(format!("unknown log-jump rule `{other}`"))),
        }
    }
}

impl std::fmt::Display for LogJumpRule {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::SteepestDrop => "steepest-drop",
            Self::Literal => "literal",
        })
    }
}

/// Log-jump choice on a computed curve with the default rule.
/// Returns `(K*, LJ values)`.
pub fn select_log_jump(curve: &DistortionCurve) -> Result<(usize, Vec<f64>)> {
    select_log_jump_with(curve, LogJumpRule::default())
}

pub fn select_log_jump_with(curve: &DistortionCurve, rule: LogJumpRule) -> Result<(usize, Vec<f64>)> {
    if curve.ks.len() < 2 {
        return Err(Error::domain("log-jump needs at least two candidates"));
    }
    let lj = curve.log_jumps();
    let k = match rule {
        LogJumpRule::SteepestDrop => {
            let neg: Vec<f64> = lj.iter().map(|v| -v).collect();
            argmax(&neg).map(|i| curve.ks[i + 1])
        }
        LogJumpRule::Literal => argmax(&lj).map(|i| curve.ks[i]),
    };
    let k = k.ok_or_else(|| Error::domain("no finite log-jump value"))?;
    Ok((k, lj))
}

/// Jump choice on a computed curve, with transformation power `p / 2`.
///
/// A curve starting at `K = 1` uses `d_0^{-p/2} = 0`, so `K = 1` is eligible;
/// otherwise the first candidate only serves as the baseline. Jumps are
/// compared in log space to avoid overflow of `d^{-p/2}`.
pub fn select_jump(curve: &DistortionCurve) -> Result<usize> {
    if curve.ks.len() < 2 {
        return Err(Error::domain("jump needs at least two candidates"));
    }
    let y = curve.p as f64 / 2.0;
    let logt: Vec<f64> = curve.d.iter().map(|d| -y * d.max(DISTORTION_FLOOR).ln()).collect();
    // (sign, log magnitude) of d_K^{-y} - d_prev^{-y}
    let mut jumps: Vec<(usize, f64, f64)> = Vec::new();
    if curve.ks[0] == 1 {
        jumps.push((0, 1.0, logt[0]));
    }
    for i in 1..logt.len() {
        let (a, b) = (logt[i], logt[i - 1]);
        let (sign, hi, lo) = if a >= b { (1.0, a, b) } else { (-1.0, b, a) };
        let mag = if hi == lo {
            f64::NEG_INFINITY
        } else {
            hi + (-(lo - hi).exp()).ln_1p()
        };
        jumps.push((i, sign, mag));
    }
    let best = jumps
        .iter()
        .copied()
        .fold(None::<(usize, f64, f64)>, |best, cur| match best {
            None => Some(cur),
            Some(b) => {
                let better = match (cur.1 > 0.0, b.1 > 0.0) {
                    (true, false) => true,
                    (false, true) => false,
                    (true, true) => cur.2 > b.2,
                    (false, false) => cur.2 < b.2,
                };
                if better {
                    Some(cur)
                } else {
                    Some(b)
                }
            }
        })
        .expect("at least one jump");
    Ok(curve.ks[best.0])
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KEstimate {
    pub k: usize,
    pub curve: DistortionCurve,
}

/// Log-jump estimate over one candidate range.
pub fn log_jump<T: Scalar>(
    inputs: &[Vec<T>],
    range: &KCandidateRange,
    opts: &KMeansOptions,
    seed: u64,
) -> Result<KEstimate> {
    let curve = distortion_curve(inputs, range, opts, seed)?;
    let (k, _) = select_log_jump(&curve)?;
    Ok(KEstimate { k, curve })
}

/// Jump estimate over one candidate range, on the same cosine distortion.
pub fn jump_baseline<T: Scalar>(
    inputs: &[Vec<T>],
    range: &KCandidateRange,
    opts: &KMeansOptions,
    seed: u64,
) -> Result<KEstimate> {
    let curve = distortion_curve(inputs, range, opts, seed)?;
    let k = select_jump(&curve)?;
    Ok(KEstimate { k, curve })
}

/// Log-jump estimate with the full range heuristic, refining the step by
/// powers of ten until it reaches one.
pub fn estimate_k<T: Scalar>(inputs: &[Vec<T>], regime: Regime, opts: &KMeansOptions, seed: u64) -> Result<usize> {
    let range = candidate_range(inputs.len(), regime)?;
    estimate_k_with(inputs, range, opts, seed, |c| select_log_jump(c).map(|r| r.0)).map(|r| r.0)
}

/// Runs `select` on the curve over `range`, then on successively refined
/// ranges around its choice. Returns the final `K` and every curve computed.
pub fn estimate_k_with<T, F>(
    inputs: &[Vec<T>],
    mut range: KCandidateRange,
    opts: &KMeansOptions,
    seed: u64,
    select: F,
) -> Result<(usize, Vec<DistortionCurve>)>
where
    T: Scalar,
    F: Fn(&DistortionCurve) -> Result<usize>,
{
    let n = inputs.len();
    let mut curves = Vec::new();
    for round in 0u64.. {
        let k = if range.candidates().len() < 2 {
            range.lo
        } else {
            let curve = distortion_curve(inputs, &range, opts, derive_seed(seed, round))?;
            let k = select(&curve)?;
            curves.push(curve);
            k
        };
        log::debug!("k-selection round {round}: range {range:?} -> K* = {k}");
        match refine_range(k, range.gap, n) {
            Some(next) => range = next,
            None => return Ok((k, curves)),
        }
    }
    unreachable!()
}
