//! Seeded, batched Monte-Carlo accumulation.
//!
//! A run of `samples` draws is cut into a fixed number of batches, batch `b`
//! drawing from `seed.child(b)`. Batches run in parallel and are reduced in
//! batch order, so results depend on `(samples, seed)` only, never on the
//! number of worker threads.
//!
//! Exponential estimands `E[exp(V)]` are accumulated in log-sum-exp form with
//! a running maximum. Their standard error comes from the spread of batch
//! means, which stays meaningful for the heavy-tailed weights that show up
//! near the detection threshold.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::rng::{SeedSpec, StreamRng};

/// Upper bound on the number of batches (and RNG streams) in a run.
pub const MAX_BATCHES: usize = 64;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MCEstimate {
    pub count: u64,
    pub mean: f64,
    pub stderr: f64,
    /// Largest exponent seen, for exponential estimands. Large values relative
    /// to `log(mean)` signal that a few samples dominate the estimate.
    pub log_domain_max: Option<f64>,
    pub seed: SeedSpec,
}

/// Number of batches for a run of `samples` draws.
pub fn batch_count(samples: usize) -> usize {
    samples.clamp(1, MAX_BATCHES)
}

fn batch_len(samples: usize, batches: usize, b: usize) -> usize {
    samples / batches + usize::from(b < samples % batches)
}

/// Runs `body(batch_len, rng)` once per batch, in parallel, returning the
/// per-batch results in batch order.
pub fn run_batches<T, F>(samples: usize, seed: SeedSpec, body: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize, &mut StreamRng) -> T + Sync,
{
    let batches = batch_count(samples);
    (0..batches)
        .into_par_iter()
        .map(|b| {
            let mut rng = seed.child(b as u64).rng();
            body(batch_len(samples, batches, b), &mut rng)
        })
        .collect()
}

/// `Σ exp(vᵢ)` kept as `exp(max)·scaled_sum`, plus the number of samples the
/// batch covered (including samples that contributed nothing).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogSumExp {
    max: f64,
    scaled_sum: f64,
    count: u64,
}

impl Default for LogSumExp {
    fn default() -> Self {
        Self {
            max: f64::NEG_INFINITY,
            scaled_sum: 0.0,
            count: 0,
        }
    }
}

impl LogSumExp {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds `exp(v)`.
    pub fn add(&mut self, v: f64) {
        self.count += 1;
        if v == f64::NEG_INFINITY {
            return;
        }
        if v > self.max {
            self.scaled_sum = self.scaled_sum * (self.max - v).exp() + 1.0;
            self.max = v;
        } else {
            self.scaled_sum += (v - self.max).exp();
        }
    }

    /// Counts a sample that contributes zero.
    pub fn skip(&mut self) {
        self.count += 1;
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    pub fn max(&self) -> f64 {
        self.max
    }

    /// `log((1/count) Σ exp(vᵢ))`.
    pub fn log_mean(&self) -> f64 {
        if self.scaled_sum == 0.0 {
            return f64::NEG_INFINITY;
        }
        self.max + (self.scaled_sum / self.count as f64).ln()
    }

    /// `(1/count) Σ exp(vᵢ − reference)`.
    fn mean_relative_to(&self, reference: f64) -> f64 {
        if self.scaled_sum == 0.0 {
            return 0.0;
        }
        self.scaled_sum * (self.max - reference).exp() / self.count as f64
    }
}

/// Combines per-batch log accumulators into an estimate of `E[exp(V)]`.
pub fn estimate_from_log_batches(batches: &[LogSumExp], seed: SeedSpec) -> MCEstimate {
    let count: u64 = batches.iter().map(|b| b.count).sum();
    let reference = batches.iter().map(|b| b.max).fold(f64::NEG_INFINITY, f64::max);
    if reference == f64::NEG_INFINITY {
        return MCEstimate {
            count,
            mean: 0.0,
            stderr: 0.0,
            log_domain_max: None,
            seed,
        };
    }
    let total: f64 = batches
        .iter()
        .filter(|b| b.scaled_sum > 0.0)
        .map(|b| b.scaled_sum * (b.max - reference).exp())
        .sum();
    let scale = reference.exp();
    let mean = scale * (total / count as f64);
    let relative: Vec<f64> = batches.iter().map(|b| b.mean_relative_to(reference)).collect();
    MCEstimate {
        count,
        mean,
        stderr: scale * standard_error(&relative),
        log_domain_max: Some(reference),
        seed,
    }
}

/// Standard error of the mean of `values` (sample standard deviation / √len).
pub fn standard_error(values: &[f64]) -> f64 {
    let m = values.len();
    if m < 2 {
        return 0.0;
    }
    let mean = values.iter().sum::<f64>() / m as f64;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (m - 1) as f64;
    (var / m as f64).sqrt()
}

/// Running mean and sum of squared deviations (Welford), mergeable.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct MeanVar {
    count: u64,
    mean: f64,
    m2: f64,
}

impl MeanVar {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, x: f64) {
        self.count += 1;
        let delta = x - self.mean;
        self.mean += delta / self.count as f64;
        self.m2 += delta * (x - self.mean);
    }

    pub fn merge(&mut self, other: &Self) {
        if other.count == 0 {
            return;
        }
        if self.count == 0 {
            *self = *other;
            return;
        }
        let n = self.count + other.count;
        let delta = other.mean - self.mean;
        let na = self.count as f64;
        let nb = other.count as f64;
        self.mean += delta * nb / n as f64;
        self.m2 += other.m2 + delta * delta * na * nb / n as f64;
        self.count = n;
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    pub fn stderr(&self) -> f64 {
        if self.count < 2 {
            return 0.0;
        }
        (self.m2.max(0.0) / (self.count - 1) as f64 / self.count as f64).sqrt()
    }

    pub fn into_estimate(self, seed: SeedSpec) -> MCEstimate {
        MCEstimate {
            count: self.count,
            mean: self.mean,
            stderr: self.stderr(),
            log_domain_max: None,
            seed,
        }
    }
}

/// Merges per-batch accumulators in batch order.
pub fn merge_in_order(batches: &[MeanVar]) -> MeanVar {
    batches.iter().fold(MeanVar::new(), |mut acc, b| {
        acc.merge(b);
        acc
    })
}

/// A float `x` with `part + x == total` exactly in f64 arithmetic, as close as
/// possible to `total − part`.
pub fn exact_complement(total: f64, part: f64) -> f64 {
    let mut x = total - part;
    for _ in 0..256 {
        let s = part + x;
        if s == total {
            return x;
        }
        x = if s < total { x.next_up() } else { x.next_down() };
    }
    x
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn log_sum_exp_matches_direct_sum() {
        let vs = [0.3, -1.2, 4.0, 2.5, 4.0, -30.0];
        let mut acc = LogSumExp::new();
        vs.iter().for_each(|&v| acc.add(v));
        let direct = vs.iter().map(|v: &f64| v.exp()).sum::<f64>() / vs.len() as f64;
        assert!((acc.log_mean() - direct.ln()).abs() < 1e-14);
        assert_eq!(acc.max(), 4.0);
    }

    #[test]
    fn zero_exponents_give_exact_one() {
        let seed = SeedSpec::new(0, 0);
        let batches = run_batches(1000, seed, |len, _| {
            let mut acc = LogSumExp::new();
            (0..len).for_each(|_| acc.add(0.0));
            acc
        });
        let est = estimate_from_log_batches(&batches, seed);
        assert_eq!(est.mean, 1.0);
        assert_eq!(est.stderr, 0.0);
        assert_eq!(est.count, 1000);
    }

    #[test]
    fn skipped_samples_count_toward_the_denominator() {
        let mut acc = LogSumExp::new();
        acc.add(0.0);
        acc.skip();
        assert!((acc.log_mean() - 0.5f64.ln()).abs() < 1e-15);
        let empty = estimate_from_log_batches(&[LogSumExp { count: 3, ..Default::default() }], SeedSpec::new(0, 0));
        assert_eq!(empty.mean, 0.0);
    }

    #[test]
    fn batch_lengths_cover_all_samples() {
        for samples in [1, 2, 63, 64, 65, 1000, 12345] {
            let b = batch_count(samples);
            let total: usize = (0..b).map(|i| batch_len(samples, b, i)).sum();
            assert_eq!(total, samples);
        }
    }

    #[test]
    fn welford_merge_matches_single_pass() {
        let xs: Vec<f64> = (0..100).map(|i| (i as f64 * 0.37).sin()).collect();
        let mut whole = MeanVar::new();
        xs.iter().for_each(|&x| whole.add(x));
        let mut a = MeanVar::new();
        let mut b = MeanVar::new();
        xs[..37].iter().for_each(|&x| a.add(x));
        xs[37..].iter().for_each(|&x| b.add(x));
        let merged = merge_in_order(&[a, b]);
        assert!((merged.mean() - whole.mean()).abs() < 1e-15);
        assert!((merged.stderr() - whole.stderr()).abs() < 1e-15);
    }

    #[test]
    fn complement_is_exact() {
        for (t, p) in [(1.0, 0.1), (3.7e5, 2.2e-3), (0.3, 0.29999999), (1e10, 1.0), (2.0, 0.0)] {
            let x = exact_complement(t, p);
            assert_eq!(p + x, t);
            assert!((x - (t - p)).abs() <= 4.0 * f64::EPSILON * t);
        }
    }
}
