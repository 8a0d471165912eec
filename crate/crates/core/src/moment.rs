//! Monte-Carlo estimates of the likelihood-ratio second moment.
//!
//! Two independent routes to `E₀[Λ(Y)²]`:
//! - Haar side: `E[exp(2nη)]` with `η` evaluated on i.i.d. Haar rotations.
//! - Observation side: draw `Y` under the null, estimate
//!   `Λ(Y) = E_X[exp(2nℜ⟨Y,X⟩ − n‖X‖²_F)]` by an inner average over rotated
//!   spikes, and average `Λ̂(Y)²`. The inner average makes this estimator
//!   biased upward by `Var_X/inner`, i.e. `O(1/inner)`.
//!
//! Everything exponential is accumulated in log-sum-exp form (see [`crate::mc`]).
//! Near the threshold `exp(2nη)` has huge relative variance and the estimates
//! are dominated by rare samples; `log_domain_max` on each estimate makes that
//! visible.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{param_err, Result};
use crate::eta::eta_expanded;
use crate::mc::{
    estimate_from_log_batches, exact_complement, merge_in_order, run_batches, LogSumExp, MCEstimate, MeanVar,
};
use crate::rng::{sample_gaussian_tensor, sample_haar_unitary, sample_unit_sphere, SeedSpec, StreamRng};
use crate::spike::{spec_eta_max, SpikeSpec};
use crate::tensor::{build_spike, frobenius_inner, ComplexTensor, ModeOperators};

/// Slack on `|η| ≤ η_max` for sampled values.
pub const ETA_BOUND_TOL: f64 = 1e-9;

/// How the spike is drawn inside the likelihood ratio.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SpikePrior {
    /// Each mode's factors rotated by an independent Haar unitary.
    Haar,
    /// The spike `X₀` itself, unrotated.
    Fixed,
}

/// `d` independent Haar unitaries of size `n`.
pub fn sample_mode_operators<R: Rng + ?Sized>(d: usize, n: usize, rng: &mut R) -> ModeOperators {
    ModeOperators::new_unchecked((0..d).map(|_| sample_haar_unitary(n, rng)).collect())
        .expect("square operators of a common size")
}

/// One draw of `η` over Haar rotations.
pub fn sample_eta<R: Rng + ?Sized>(spec: &SpikeSpec, rng: &mut R) -> f64 {
    let thetas = sample_mode_operators(spec.d(), spec.n(), rng);
    eta_expanded(spec, &thetas).expect("operators match the spike")
}

fn haar_batches(spec: &SpikeSpec, samples: usize, seed: SeedSpec, epsilon: Option<f64>) -> Vec<(LogSumExp, LogSumExp)> {
    let two_n = 2.0 * spec.n() as f64;
    run_batches(samples, seed, |len, rng| {
        let mut total = LogSumExp::new();
        let mut upper = LogSumExp::new();
        for _ in 0..len {
            let eta = sample_eta(spec, rng);
            total.add(two_n * eta);
            match epsilon {
                Some(eps) if eta > eps => upper.add(two_n * eta),
                _ => upper.skip(),
            }
        }
        (total, upper)
    })
}

/// `E[exp(2nη)]` over Haar rotations.
pub fn second_moment_haar_mc(spec: &SpikeSpec, samples: usize, seed: SeedSpec) -> Result<MCEstimate> {
    if samples < 2 {
        return Err(param_err!("need at least 2 samples, got {samples}"));
    }
    let batches: Vec<LogSumExp> = haar_batches(spec, samples, seed, None).into_iter().map(|(t, _)| t).collect();
    Ok(estimate_from_log_batches(&batches, seed))
}

/// Split of `E[exp(2nη)]` over `{η > ε}` and `{η ≤ ε}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitEstimate {
    pub epsilon: f64,
    pub e1: MCEstimate,
    pub e2: MCEstimate,
    /// Identical to [`second_moment_haar_mc`] on the same `(samples, seed)`.
    pub total: MCEstimate,
}

/// `min(η_max/4, r²·max λᵢλⱼ)`.
pub fn default_epsilon(spec: &SpikeSpec) -> f64 {
    let r = spec.r() as f64;
    let top = spec.lambdas().iter().copied().fold(0.0, f64::max);
    (spec_eta_max(spec) / 4.0).min(r * r * top * top)
}

/// `E₁ = E[exp(2nη) 1{η>ε}]` and `E₂ = E[exp(2nη) 1{η≤ε}]` from one pass.
///
/// `e1.mean + e2.mean == total.mean` holds exactly: `E₁` is computed from its
/// own sum and `E₂` takes the exact floating-point complement, which differs
/// from its direct sum by rounding only.
pub fn e1_e2_split(spec: &SpikeSpec, epsilon: f64, samples: usize, seed: SeedSpec) -> Result<SplitEstimate> {
    if epsilon.is_nan() || epsilon <= 0.0 {
        return Err(param_err!("epsilon must be positive, got {epsilon}"));
    }
    if samples < 2 {
        return Err(param_err!("need at least 2 samples, got {samples}"));
    }
    let batches = haar_batches(spec, samples, seed, Some(epsilon));
    let totals: Vec<LogSumExp> = batches.iter().map(|(t, _)| *t).collect();
    let uppers: Vec<LogSumExp> = batches.iter().map(|(_, u)| *u).collect();
    let total = estimate_from_log_batches(&totals, seed);
    let e1 = estimate_from_log_batches(&uppers, seed);
    // Lower part per batch: exp(2nη) on {η ≤ ε}, for its own spread.
    let lower_batch_means: Vec<f64> = totals
        .iter()
        .zip(&uppers)
        .map(|(t, u)| {
            let t = single_mean(t);
            let u = single_mean(u);
            t - u
        })
        .collect();
    let e2 = MCEstimate {
        count: total.count,
        mean: exact_complement(total.mean, e1.mean),
        stderr: crate::mc::standard_error(&lower_batch_means),
        log_domain_max: total.log_domain_max,
        seed,
    };
    Ok(SplitEstimate { epsilon, e1, e2, total })
}

fn single_mean(acc: &LogSumExp) -> f64 {
    let lm = acc.log_mean();
    if lm == f64::NEG_INFINITY {
        0.0
    } else {
        lm.exp()
    }
}

/// `P(|ξ| ≥ t) = (1 − t²)^{n−1}` for `ξ` the first coordinate of a uniform
/// vector on the unit sphere of `ℂⁿ`.
pub fn xi_tail_probability(t: f64, n: usize) -> Result<f64> {
    if !(0.0..=1.0).contains(&t) {
        return Err(param_err!("t must lie in [0, 1], got {t}"));
    }
    if n < 2 {
        return Err(param_err!("n must be at least 2, got {n}"));
    }
    Ok((1.0 - t * t).powi(n as i32 - 1))
}

/// Empirical frequency of `|v₁| ≥ t` over uniform sphere vectors.
pub fn xi_empirical_tail(n: usize, t: f64, samples: usize, seed: SeedSpec) -> Result<MCEstimate> {
    xi_tail_probability(t, n)?;
    if samples < 1 {
        return Err(param_err!("need at least 1 sample"));
    }
    let batches = run_batches(samples, seed, |len, rng| {
        let mut acc = MeanVar::new();
        for _ in 0..len {
            let v = sample_unit_sphere(n, rng);
            acc.add(if v[0].norm() >= t { 1.0 } else { 0.0 });
        }
        acc
    });
    Ok(merge_in_order(&batches).into_estimate(seed))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Hypothesis {
    H0,
    H1,
}

#[derive(Debug, Clone)]
pub struct HypothesisSample {
    pub tensor: ComplexTensor,
    pub hypothesis: Hypothesis,
    /// The rotated spike realization under H1; absent under H0.
    pub spike_used: Option<SpikeSpec>,
}

/// `Y = Z` under H0, `Y = X + Z` under H1 with `X` the spike after an
/// independent Haar rotation of every mode.
pub fn simulate_observation<R: Rng + ?Sized>(spec: &SpikeSpec, hypothesis: Hypothesis, rng: &mut R) -> HypothesisSample {
    let noise = sample_gaussian_tensor(spec.n(), spec.d(), rng).expect("spec shape is valid");
    match hypothesis {
        Hypothesis::H0 => HypothesisSample {
            tensor: noise,
            hypothesis,
            spike_used: None,
        },
        Hypothesis::H1 => {
            let thetas = sample_mode_operators(spec.d(), spec.n(), rng);
            let rotated = spec.rotated(&thetas).expect("operators match the spike");
            let tensor = &build_spike(&rotated) + &noise;
            HypothesisSample {
                tensor,
                hypothesis,
                spike_used: Some(rotated),
            }
        }
    }
}

/// `log Λ̂(Y)` with `Λ̂(Y) = (1/inner) Σ exp(2nℜ⟨Y,X⟩ − n‖X‖²_F)` over
/// spike draws from `prior`.
pub fn log_lr_mc<R: Rng + ?Sized>(y: &ComplexTensor, spec: &SpikeSpec, inner: usize, prior: SpikePrior, rng: &mut R) -> Result<f64> {
    if inner < 1 {
        return Err(param_err!("need at least 1 inner sample"));
    }
    if y.order() != spec.d() || y.dim() != spec.n() {
        return Err(crate::Error::Dimension(format!(
            "observation of order {}, dim {} for a spike with d={}, n={}",
            y.order(),
            y.dim(),
            spec.d(),
            spec.n()
        )));
    }
    let n = spec.n() as f64;
    let fixed = (prior == SpikePrior::Fixed).then(|| build_spike(spec));
    let mut acc = LogSumExp::new();
    for _ in 0..inner {
        let x = match &fixed {
            Some(x) => x.clone(),
            None => {
                let thetas = sample_mode_operators(spec.d(), spec.n(), rng);
                build_spike(&spec.rotated(&thetas)?)
            }
        };
        let cross = frobenius_inner(y, &x)?.re;
        acc.add(2.0 * n * cross - n * x.norm_sqr());
    }
    Ok(acc.log_mean())
}

/// Nested estimate of `E₀[Λ(Y)²]`: `outer` null observations, each with an
/// `inner`-sample likelihood ratio.
pub fn second_moment_direct_mc(
    spec: &SpikeSpec,
    outer: usize,
    inner: usize,
    prior: SpikePrior,
    seed: SeedSpec,
) -> Result<MCEstimate> {
    if outer < 2 || inner < 1 {
        return Err(param_err!("need outer >= 2 and inner >= 1, got {outer}, {inner}"));
    }
    let batches = run_batches(outer, seed, |len, rng| -> Result<LogSumExp> {
        let mut acc = LogSumExp::new();
        for _ in 0..len {
            let y = sample_gaussian_tensor(spec.n(), spec.d(), rng)?;
            acc.add(2.0 * log_lr_mc(&y, spec, inner, prior, rng)?);
        }
        Ok(acc)
    });
    let batches = batches.into_iter().collect::<Result<Vec<_>>>()?;
    Ok(estimate_from_log_batches(&batches, seed))
}

/// `E₀[Λ̂(Y)]`, which equals 1 for any spike.
pub fn lr_mean_under_null(spec: &SpikeSpec, samples: usize, inner: usize, seed: SeedSpec) -> Result<MCEstimate> {
    let batches = run_batches(samples, seed, |len, rng| -> Result<MeanVar> {
        let mut acc = MeanVar::new();
        for _ in 0..len {
            let y = sample_gaussian_tensor(spec.n(), spec.d(), rng)?;
            acc.add(log_lr_mc(&y, spec, inner, SpikePrior::Haar, rng)?.exp());
        }
        Ok(acc)
    });
    let batches = batches.into_iter().collect::<Result<Vec<_>>>()?;
    Ok(merge_in_order(&batches).into_estimate(seed))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RocPoint {
    pub threshold: f64,
    pub fpr: f64,
    pub tpr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RocCurve {
    pub points: Vec<RocPoint>,
    /// `max_t |tpr(t) − fpr(t)|`, an empirical proxy for total variation.
    pub tv_proxy: f64,
    pub trials: usize,
}

/// Empirical ROC of the test `log Λ̂(Y) ≥ t`, from `trials` observations under
/// each hypothesis. Trial `i` under H0 uses stream `seed.child(2i)`, under H1
/// `seed.child(2i+1)`.
pub fn roc_experiment(spec: &SpikeSpec, trials: usize, inner: usize, seed: SeedSpec) -> Result<RocCurve> {
    if trials < 1 {
        return Err(param_err!("need at least 1 trial"));
    }
    let stat = |hyp: Hypothesis, stream: u64| -> Result<f64> {
        let mut rng: StreamRng = seed.child(stream).rng();
        let obs = simulate_observation(spec, hyp, &mut rng);
        log_lr_mc(&obs.tensor, spec, inner, SpikePrior::Haar, &mut rng)
    };
    let pairs = (0..trials)
        .into_par_iter()
        .map(|i| Ok((stat(Hypothesis::H0, 2 * i as u64)?, stat(Hypothesis::H1, 2 * i as u64 + 1)?)))
        .collect::<Result<Vec<_>>>()?;
    let (null, alt): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
    Ok(roc_from_statistics(&null, &alt))
}

/// ROC for the rule "decide H1 when statistic ≥ t", swept over every observed
/// value plus `+∞`.
pub fn roc_from_statistics(null: &[f64], alt: &[f64]) -> RocCurve {
    let mut thresholds: Vec<f64> = null.iter().chain(alt).copied().collect();
    thresholds.sort_by(|a, b| b.total_cmp(a));
    thresholds.dedup();
    let mut null_sorted = null.to_vec();
    let mut alt_sorted = alt.to_vec();
    null_sorted.sort_by(f64::total_cmp);
    alt_sorted.sort_by(f64::total_cmp);
    let rate = |sorted: &[f64], t: f64| {
        let below = sorted.partition_point(|&v| v < t);
        (sorted.len() - below) as f64 / sorted.len() as f64
    };
    let mut points = vec![RocPoint {
        threshold: f64::INFINITY,
        fpr: 0.0,
        tpr: 0.0,
    }];
    points.extend(thresholds.into_iter().map(|t| RocPoint {
        threshold: t,
        fpr: rate(&null_sorted, t),
        tpr: rate(&alt_sorted, t),
    }));
    let tv_proxy = points.iter().map(|p| (p.tpr - p.fpr).abs()).fold(0.0, f64::max);
    RocCurve {
        points,
        tv_proxy,
        trials: null.len(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spike::GramSet;

    fn null_spec(d: usize, n: usize, r: usize) -> SpikeSpec {
        SpikeSpec::relaxed_from_grams(vec![0.0; r], &GramSet::identity(d, r), n, None).unwrap()
    }

    #[test]
    fn null_spike_second_moment_is_exactly_one() {
        let spec = null_spec(3, 3, 2);
        let est = second_moment_haar_mc(&spec, 200, SeedSpec::new(1, 0)).unwrap();
        assert_eq!((est.mean, est.stderr, est.count), (1.0, 0.0, 200));
        let direct = second_moment_direct_mc(&spec, 20, 5, SpikePrior::Haar, SeedSpec::new(1, 0)).unwrap();
        assert_eq!((direct.mean, direct.stderr), (1.0, 0.0));
    }

    #[test]
    fn null_spike_log_lr_is_zero() {
        let spec = null_spec(3, 2, 1);
        let mut rng = SeedSpec::new(2, 0).rng();
        let y = sample_gaussian_tensor(2, 3, &mut rng).unwrap();
        assert_eq!(log_lr_mc(&y, &spec, 10, SpikePrior::Haar, &mut rng).unwrap(), 0.0);
    }

    #[test]
    fn fixed_spike_log_lr_closed_form() {
        let spec = SpikeSpec::from_grams(vec![0.4, 0.3], &GramSet::two_eigenvalue(3, 1.8, 0.2).unwrap(), 3, None).unwrap();
        let mut rng = SeedSpec::new(3, 0).rng();
        let y = sample_gaussian_tensor(3, 3, &mut rng).unwrap();
        let x0 = build_spike(&spec);
        let n = 3.0;
        let expected = 2.0 * n * frobenius_inner(&y, &x0).unwrap().re - n * x0.norm_sqr();
        assert_eq!(log_lr_mc(&y, &spec, 1, SpikePrior::Fixed, &mut rng).unwrap(), expected);
    }

    #[test]
    fn xi_tail_closed_form() {
        assert_eq!(xi_tail_probability(0.0, 5).unwrap(), 1.0);
        assert_eq!(xi_tail_probability(1.0, 5).unwrap(), 0.0);
        assert_eq!(xi_tail_probability(0.5, 3).unwrap(), 0.5625);
        assert!(xi_tail_probability(1.5, 3).is_err());
        assert!(xi_tail_probability(-0.1, 3).is_err());
    }

    #[test]
    fn xi_tail_at_zero_is_exact() {
        let est = xi_empirical_tail(5, 0.0, 1000, SeedSpec::new(0, 0)).unwrap();
        assert_eq!((est.mean, est.stderr), (1.0, 0.0));
    }

    #[test]
    fn split_rejects_bad_epsilon() {
        let spec = null_spec(3, 3, 1);
        assert!(e1_e2_split(&spec, 0.0, 100, SeedSpec::new(0, 0)).is_err());
        assert!(e1_e2_split(&spec, f64::NAN, 100, SeedSpec::new(0, 0)).is_err());
    }

    #[test]
    fn default_epsilon_respects_both_caps() {
        let spec = SpikeSpec::from_grams(vec![0.5, 0.25], &GramSet::identity(3, 2), 3, None).unwrap();
        let eta_max = 0.25 + 0.0625;
        assert!((default_epsilon(&spec) - eta_max / 4.0).abs() < 1e-15);
    }

    #[test]
    fn roc_of_identical_statistics_is_diagonal() {
        let roc = roc_from_statistics(&[0.0; 10], &[0.0; 10]);
        assert_eq!(roc.tv_proxy, 0.0);
        assert_eq!(roc.points.len(), 2);
        assert_eq!((roc.points[1].fpr, roc.points[1].tpr), (1.0, 1.0));
    }

    #[test]
    fn roc_of_separated_statistics() {
        let roc = roc_from_statistics(&[0.0, 1.0, 2.0], &[3.0, 4.0, 5.0]);
        assert_eq!(roc.tv_proxy, 1.0);
        assert!(roc.points.windows(2).all(|w| w[1].fpr >= w[0].fpr && w[1].tpr >= w[0].tpr));
    }

    #[test]
    fn h0_has_no_spike() {
        let spec = null_spec(2, 3, 1);
        let mut rng = SeedSpec::new(0, 0).rng();
        assert!(simulate_observation(&spec, Hypothesis::H0, &mut rng).spike_used.is_none());
        assert!(simulate_observation(&spec, Hypothesis::H1, &mut rng).spike_used.is_some());
    }
}
