//! Sequential consistency test over sampled color cues.
//!
//! A trial samples half of each region's pixels, forms the two cue
//! probabilities from the sample means and the pooled diagonal
//! covariance, and adds the error-adjusted log-likelihood ratio to an
//! evidence accumulator. The test stops as soon as the accumulator
//! crosses the Wald bound A (consistent) or B (inconsistent) and is
//! truncated after `n0` trials, deciding by the sign of the accumulator.
//!
//! The raw cue model `1 - lambda * exp(-q)` can leave the unit interval
//! (negative for similar means with lambda > 1, zero for identical means
//! with lambda = 1), so probabilities are clamped to
//! `[prob_floor, 1 - prob_floor]` before taking logs.

use crate::graph::Rag;
use crate::pixel::RgbImage;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SprtError {
    #[error("error probabilities must lie strictly inside (0, 1): alpha={alpha}, beta={beta}")]
    InvalidErrorRate { alpha: f64, beta: f64 },
    #[error("bounds must satisfy B < 0 < A, got A={a}, B={b}")]
    InvalidBounds { a: f64, b: f64 },
    #[error("probability floor must lie in (0, 0.5), got {0}")]
    InvalidProbFloor(f64),
    #[error("truncation bound must be >= 1")]
    InvalidTruncation,
    #[error("covariance regularizer must be > 0, got {0}")]
    InvalidRegularizer(f64),
    #[error("drift signs must satisfy eta0 < 0 < eta1, got eta0={eta0}, eta1={eta1}")]
    InvalidDrift { eta0: f64, eta1: f64 },
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct SprtConfig {
    pub lambda1: f64,
    pub lambda2: f64,
    pub alpha: f64,
    pub beta: f64,
    /// Truncation bound on the number of trials.
    pub n0: u32,
    /// Probabilities are clamped to [prob_floor, 1 - prob_floor].
    pub prob_floor: f64,
    /// Added to every diagonal covariance entry, keeping it invertible.
    pub covar_regularizer: f64,
    /// Cap on the per-region sample size of one trial (stochastic mode).
    pub max_samples_per_trial: usize,
    /// Use every pixel in a single trial and decide by the sign of the
    /// accumulator; no randomness is consumed.
    pub deterministic: bool,
}

impl Default for SprtConfig {
    fn default() -> Self {
        Self {
            lambda1: 2.0,
            lambda2: 1.0,
            alpha: 0.05,
            beta: 0.05,
            n0: 10,
            prob_floor: 1e-6,
            covar_regularizer: 1.0,
            max_samples_per_trial: 4096,
            deterministic: false,
        }
    }
}

impl SprtConfig {
    /// Check the hard constraints; returns soft warnings (an
    /// out-of-range lambda1 is legal but suspicious).
    pub fn validate(&self) -> Result<Vec<String>, SprtError> {
        wald_bounds(self.alpha, self.beta)?;
        if !(self.prob_floor > 0.0 && self.prob_floor < 0.5) {
            return Err(SprtError::InvalidProbFloor(self.prob_floor));
        }
        if self.n0 < 1 {
            return Err(SprtError::InvalidTruncation);
        }
        if self.covar_regularizer <= 0.0 {
            return Err(SprtError::InvalidRegularizer(self.covar_regularizer));
        }
        let mut warnings = Vec::new();
        if !(0.5..=5.0).contains(&self.lambda1) {
            warnings.push(format!(
                "lambda1 = {} is outside the usual range [0.5, 5]",
                self.lambda1
            ));
        }
        Ok(warnings)
    }
}

/// Wald's bounds: `A = ln((1-beta)/alpha)`, `B = ln(beta/(1-alpha))`.
/// Rejects parameter combinations that do not give `B < 0 < A`.
pub fn wald_bounds(alpha: f64, beta: f64) -> Result<(f64, f64), SprtError> {
    if !(alpha > 0.0 && alpha < 1.0 && beta > 0.0 && beta < 1.0) {
        return Err(SprtError::InvalidErrorRate { alpha, beta });
    }
    let a = ((1.0 - beta) / alpha).ln();
    let b = (beta / (1.0 - alpha)).ln();
    if !(b < 0.0 && 0.0 < a) {
        return Err(SprtError::InvalidBounds { a, b });
    }
    Ok((a, b))
}

/// One trial's cue observation: sample means of both regions, the mean
/// of the pooled sample, and the pooled diagonal covariance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CueSample {
    pub mean_a: [f64; 3],
    pub mean_b: [f64; 3],
    pub mean_union: [f64; 3],
    pub covar_diag: [f64; 3],
}

fn mahalanobis_diag(d: [f64; 3], covar: [f64; 3]) -> f64 {
    d.iter().zip(covar.iter()).map(|(x, s)| x * x / s).sum()
}

/// The two cue probabilities, clamped into `[floor, 1 - floor]`:
/// `p0 = 1 - lambda1 * exp(-(I_b - I_a)' S^-1 (I_b - I_a))` and
/// `p1 = 1 - lambda2 * exp(-(I_b - I_u)' S^-1 (I_b - I_u))`.
pub fn cue_probabilities(s: &CueSample, cfg: &SprtConfig) -> (f64, f64) {
    let clamp = |p: f64| p.clamp(cfg.prob_floor, 1.0 - cfg.prob_floor);
    let q0 = mahalanobis_diag(
        [
            s.mean_b[0] - s.mean_a[0],
            s.mean_b[1] - s.mean_a[1],
            s.mean_b[2] - s.mean_a[2],
        ],
        s.covar_diag,
    );
    let q1 = mahalanobis_diag(
        [
            s.mean_b[0] - s.mean_union[0],
            s.mean_b[1] - s.mean_union[1],
            s.mean_b[2] - s.mean_union[2],
        ],
        s.covar_diag,
    );
    let p0 = clamp(1.0 - cfg.lambda1 * (-q0).exp());
    let p1 = clamp(1.0 - cfg.lambda2 * (-q1).exp());
    (p0, p1)
}

/// Error-adjusted log-likelihood increment:
/// `ln(p1 * (1-beta)) - ln(p0 * (1-alpha))`. Finite by clamping.
pub fn likelihood_increment(s: &CueSample, cfg: &SprtConfig) -> f64 {
    let (p0, p1) = cue_probabilities(s, cfg);
    (p1 * (1.0 - cfg.beta)).ln() - (p0 * (1.0 - cfg.alpha)).ln()
}

/// `m` distinct indices from `0..n` (Floyd's algorithm), in pick order so
/// downstream accumulation is deterministic for a given stream.
fn sample_indices<R: Rng>(n: usize, m: usize, rng: &mut R) -> Vec<usize> {
    debug_assert!(m <= n);
    let mut chosen = std::collections::HashSet::with_capacity(m);
    let mut out = Vec::with_capacity(m);
    for j in (n - m)..n {
        let t = rng.random_range(0..=j);
        let pick = if chosen.contains(&t) { j } else { t };
        chosen.insert(pick);
        out.push(pick);
    }
    out
}

/// Draw one trial's cue sample for the region pair (a, b).
///
/// Stochastic mode samples `min(max(1, |region|/2), max_samples_per_trial)`
/// pixels from each region without replacement; deterministic mode uses
/// every pixel and consumes no randomness. Returns the sample and whether
/// the per-trial cap clipped either region.
pub fn draw_cue_sample<R: Rng>(
    img: &RgbImage,
    rag: &Rag,
    a: u32,
    b: u32,
    rng: &mut R,
    cfg: &SprtConfig,
) -> (CueSample, bool) {
    let mut cap_hit = false;
    let mut take = |id: u32, rng: &mut R| -> Vec<usize> {
        let pix = rag.region_pixels(id);
        if cfg.deterministic {
            return (0..pix.len()).collect();
        }
        let half = (pix.len() / 2).max(1);
        let m = half.min(cfg.max_samples_per_trial);
        if half > cfg.max_samples_per_trial {
            cap_hit = true;
        }
        sample_indices(pix.len(), m, rng)
    };
    let idx_a = take(a, rng);
    let idx_b = take(b, rng);

    let sum_of = |id: u32, picks: &[usize]| -> [f64; 3] {
        let pix = rag.region_pixels(id);
        let mut s = [0.0f64; 3];
        for &i in picks {
            let rgb = img.rgb_at(pix[i] as usize);
            for c in 0..3 {
                s[c] += rgb[c] as f64;
            }
        }
        s
    };
    let (sa, sb) = (sum_of(a, &idx_a), sum_of(b, &idx_b));
    let (na, nb) = (idx_a.len() as f64, idx_b.len() as f64);
    let n = na + nb;
    let mean_a = [sa[0] / na, sa[1] / na, sa[2] / na];
    let mean_b = [sb[0] / nb, sb[1] / nb, sb[2] / nb];
    let mean_union = [(sa[0] + sb[0]) / n, (sa[1] + sb[1]) / n, (sa[2] + sb[2]) / n];

    // pooled population variance per channel, regularized
    let mut var = [0.0f64; 3];
    for (id, picks) in [(a, &idx_a), (b, &idx_b)] {
        let pix = rag.region_pixels(id);
        for &i in picks {
            let rgb = img.rgb_at(pix[i] as usize);
            for c in 0..3 {
                let d = rgb[c] as f64 - mean_union[c];
                var[c] += d * d;
            }
        }
    }
    let covar_diag = [
        var[0] / n + cfg.covar_regularizer,
        var[1] / n + cfg.covar_regularizer,
        var[2] / n + cfg.covar_regularizer,
    ];
    (CueSample { mean_a, mean_b, mean_union, covar_diag }, cap_hit)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Decision {
    Consistent,
    Inconsistent,
}

/// Outcome of one consistency test.
#[derive(Debug, Clone, Copy)]
pub struct TestOutcome {
    pub decision: Decision,
    pub trials: u32,
    pub delta: f64,
    pub cap_hits: u32,
}

/// Run the truncated sequential test on an adjacent live pair.
///
/// Evidence accumulates over fresh samples until it crosses A or B; after
/// `n0` trials the sign of the accumulator decides. Deterministic mode
/// runs exactly one all-pixel trial and decides by its sign.
pub fn consistency_test<R: Rng>(
    img: &RgbImage,
    rag: &Rag,
    a: u32,
    b: u32,
    rng: &mut R,
    cfg: &SprtConfig,
) -> TestOutcome {
    let (bound_a, bound_b) = wald_bounds(cfg.alpha, cfg.beta).expect("config validated upstream");
    let mut delta = 0.0;
    let mut cap_hits = 0;
    if cfg.deterministic {
        let (sample, cap) = draw_cue_sample(img, rag, a, b, rng, cfg);
        delta = likelihood_increment(&sample, cfg);
        let decision = if delta >= 0.0 { Decision::Consistent } else { Decision::Inconsistent };
        return TestOutcome { decision, trials: 1, delta, cap_hits: cap as u32 };
    }
    for trial in 1..=cfg.n0 {
        let (sample, cap) = draw_cue_sample(img, rag, a, b, rng, cfg);
        cap_hits += cap as u32;
        delta += likelihood_increment(&sample, cfg);
        if delta >= bound_a {
            return TestOutcome { decision: Decision::Consistent, trials: trial, delta, cap_hits };
        }
        if delta <= bound_b {
            return TestOutcome { decision: Decision::Inconsistent, trials: trial, delta, cap_hits };
        }
    }
    let decision = if delta >= 0.0 { Decision::Consistent } else { Decision::Inconsistent };
    TestOutcome { decision, trials: cfg.n0, delta, cap_hits }
}

/// Wald's expected test counts under either hypothesis, given the
/// per-trial drifts `eta0 = E{delta | H0} < 0 < eta1 = E{delta | H1}`.
pub fn expected_tests(
    a: f64,
    b: f64,
    alpha: f64,
    beta: f64,
    eta0: f64,
    eta1: f64,
) -> Result<(f64, f64), SprtError> {
    if !(eta0 < 0.0 && 0.0 < eta1) {
        return Err(SprtError::InvalidDrift { eta0, eta1 });
    }
    let e_h0 = (a * alpha + b * (1.0 - alpha)) / eta0;
    let e_h1 = (a * (1.0 - beta) + b * beta) / eta1;
    Ok((e_h0, e_h1))
}
