//! Binomial confidence intervals, rank statistics and threshold calibration.
//!
//! Scores follow the convention "higher means watermarked": a window is
//! flagged when `score >= threshold`.

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Binomial, Distribution};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Two-sided 95% normal quantile.
pub const Z_95: f64 = 1.959_963_984_540_054;

#[derive(Debug, Error, PartialEq)]
pub enum StatsError {
    #[error("invalid binomial count: k = {k}, n = {n}")]
    InvalidCount { k: u64, n: u64 },
    #[error("{0} must not be empty")]
    Empty(&'static str),
    #[error("{0} must be finite")]
    NonFinite(&'static str),
    #[error("confidence must lie in (0, 1), got {0}")]
    Confidence(f64),
}

fn check_count(k: u64, n: u64) -> Result<(), StatsError> {
    if n == 0 || k > n {
        Err(StatsError::InvalidCount { k, n })
    } else {
        Ok(())
    }
}

/// Wilson score interval for `k` successes in `n` trials at `z`.
pub fn wilson_interval_z(k: u64, n: u64, z: f64) -> Result<(f64, f64), StatsError> {
    check_count(k, n)?;
    let (k, n) = (k as f64, n as f64);
    let p = k / n;
    let z2 = z * z;
    let denom = 1.0 + z2 / n;
    let center = (p + z2 / (2.0 * n)) / denom;
    let half = z / denom * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt();
    Ok(((center - half).clamp(0.0, 1.0), (center + half).clamp(0.0, 1.0)))
}

/// Wilson 95% interval.
pub fn wilson_interval(k: u64, n: u64) -> Result<(f64, f64), StatsError> {
    wilson_interval_z(k, n, Z_95)
}

fn log_sum_exp(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    let (hi, lo) = if a > b { (a, b) } else { (b, a) };
    hi + (lo - hi).exp().ln_1p()
}

/// `P(X <= k)` for `X ~ Binomial(n, p)`, summed in log space.
pub fn binomial_cdf(k: u64, n: u64, p: f64) -> f64 {
    if k >= n || p <= 0.0 {
        return 1.0;
    }
    if p >= 1.0 {
        return 0.0;
    }
    let (lp, lq) = (p.ln(), (-p).ln_1p());
    let mut term = n as f64 * lq;
    let mut acc = term;
    for j in 0..k {
        term += ((n - j) as f64).ln() - ((j + 1) as f64).ln() + lp - lq;
        acc = log_sum_exp(acc, term);
    }
    acc.exp().min(1.0)
}

/// Exact (Clopper–Pearson) upper limit of the two-sided interval at
/// `confidence`. Zero successes has the closed form `1 - (a/2)^(1/n)`.
pub fn clopper_pearson_upper(k: u64, n: u64, confidence: f64) -> Result<f64, StatsError> {
    check_count(k, n)?;
    if !(confidence > 0.0 && confidence < 1.0) {
        return Err(StatsError::Confidence(confidence));
    }
    let tail = (1.0 - confidence) / 2.0;
    if k == n {
        return Ok(1.0);
    }
    if k == 0 {
        return Ok(1.0 - tail.powf(1.0 / n as f64));
    }
    // binomial_cdf is decreasing in p; bisect for cdf(p) = tail.
    let (mut lo, mut hi) = (k as f64 / n as f64, 1.0);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if binomial_cdf(k, n, mid) > tail {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-15 {
            break;
        }
    }
    Ok(hi)
}

/// Percentile bootstrap 95% interval for a Bernoulli rate. Resampling `n`
/// outcomes with replacement makes the resampled count
/// `Binomial(n, k/n)`, which is drawn directly.
pub fn bootstrap_ci(samples: &[bool], resamples: usize, seed: u64) -> Result<(f64, f64), StatsError> {
    if samples.is_empty() {
        return Err(StatsError::Empty("samples"));
    }
    if resamples == 0 {
        return Err(StatsError::Empty("resamples"));
    }
    let n = samples.len() as u64;
    let k = samples.iter().filter(|&&s| s).count() as u64;
    let dist = Binomial::new(n, k as f64 / n as f64).expect("p in [0, 1]");
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut rates: Vec<f64> = (0..resamples).map(|_| dist.sample(&mut rng) as f64 / n as f64).collect();
    rates.sort_by(f64::total_cmp);
    Ok((percentile(&rates, 0.025), percentile(&rates, 0.975)))
}

/// Linear-interpolated percentile of sorted data, `q` in [0, 1].
pub fn percentile(sorted: &[f64], q: f64) -> f64 {
    let pos = q.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let (i, frac) = (pos.floor() as usize, pos.fract());
    match sorted.get(i + 1) {
        Some(&next) => sorted[i] + frac * (next - sorted[i]),
        None => sorted[i],
    }
}

/// ROC area as the Mann–Whitney statistic `P(pos > neg) + P(tie)/2`.
pub fn roc_auc(pos: &[f64], neg: &[f64]) -> Result<f64, StatsError> {
    if pos.is_empty() {
        return Err(StatsError::Empty("positive scores"));
    }
    if neg.is_empty() {
        return Err(StatsError::Empty("negative scores"));
    }
    if pos.iter().chain(neg).any(|s| !s.is_finite()) {
        return Err(StatsError::NonFinite("scores"));
    }
    let mut neg = neg.to_vec();
    neg.sort_by(f64::total_cmp);
    let mut wins = 0.0;
    for &p in pos {
        let below = neg.partition_point(|&v| v < p);
        let ties = neg[below..].partition_point(|&v| v <= p);
        wins += below as f64 + 0.5 * ties as f64;
    }
    Ok(wins / (pos.len() as f64 * neg.len() as f64))
}

/// The next representable value above a finite `x`.
fn next_above(x: f64) -> f64 {
    if x == 0.0 {
        return f64::from_bits(1);
    }
    let bits = x.to_bits();
    f64::from_bits(if x > 0.0 { bits + 1 } else { bits - 1 })
}

/// A calibrated operating point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Threshold {
    pub threshold: f64,
    pub val_false_positives: u64,
    pub val_n: u64,
}

impl Threshold {
    pub fn val_fpr(&self) -> f64 {
        self.val_false_positives as f64 / self.val_n as f64
    }
}

/// Smallest threshold whose validation FPR is at most `target`.
///
/// Candidates are the observed scores plus one value above the maximum.
/// Tied scores are flagged together, so a tie that would overshoot the target
/// pushes the threshold above it. A target below `1/|val|` yields a threshold
/// above every validation score.
pub fn calibrate_threshold(val: &[f64], target: f64) -> Result<Threshold, StatsError> {
    if val.is_empty() {
        return Err(StatsError::Empty("validation scores"));
    }
    if val.iter().any(|s| !s.is_finite()) {
        return Err(StatsError::NonFinite("validation scores"));
    }
    let n = val.len();
    let mut sorted = val.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let mut threshold = next_above(sorted[0]);
    let mut flagged = 0;
    let mut i = 0;
    while i < n {
        let v = sorted[i];
        let mut j = i;
        while j < n && sorted[j] == v {
            j += 1;
        }
        if j as f64 / n as f64 > target {
            break;
        }
        threshold = v;
        flagged = j;
        i = j;
    }
    Ok(Threshold { threshold, val_false_positives: flagged as u64, val_n: n as u64 })
}

/// Number of scores at or above `threshold`.
pub fn count_flagged(scores: &[f64], threshold: f64) -> u64 {
    scores.iter().filter(|&&s| s >= threshold).count() as u64
}

/// Fraction of scores at or above `threshold`.
pub fn measure_fpr(scores: &[f64], threshold: f64) -> Result<f64, StatsError> {
    if scores.is_empty() {
        return Err(StatsError::Empty("test scores"));
    }
    Ok(count_flagged(scores, threshold) as f64 / scores.len() as f64)
}

/// Intersection over union of two boolean masks; two empty masks give 1.
pub fn iou(truth: &[bool], predicted: &[bool]) -> f64 {
    let (mut inter, mut union) = (0usize, 0usize);
    for (&t, &p) in truth.iter().zip(predicted) {
        inter += (t && p) as usize;
        union += (t || p) as usize;
    }
    if union == 0 {
        1.0
    } else {
        inter as f64 / union as f64
    }
}

/// Unweighted mean of per-class F1 over `classes`. A class absent from both
/// truth and prediction scores 1.
pub fn macro_f1<T: PartialEq>(truth: &[T], predicted: &[T], classes: &[T]) -> f64 {
    let mut total = 0.0;
    for c in classes {
        let (mut tp, mut fp, mut fnn) = (0usize, 0usize, 0usize);
        for (t, p) in truth.iter().zip(predicted) {
            match (t == c, p == c) {
                (true, true) => tp += 1,
                (false, true) => fp += 1,
                (true, false) => fnn += 1,
                (false, false) => {}
            }
        }
        total += if tp + fp + fnn == 0 { 1.0 } else { 2.0 * tp as f64 / (2 * tp + fp + fnn) as f64 };
    }
    total / classes.len() as f64
}
