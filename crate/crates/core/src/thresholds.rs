//! Second-moment non-detectability thresholds.
//!
//! `β_d = sqrt(min_{u∈(0,1)} −log(1−u²)/u^d)`. A spike is undetectable in the
//! second-moment sense when `Σλᵢ < sqrt(d/2)·β_d` (Hölder route) or, more
//! sharply, when `sqrt(η_max) < sqrt(d/2)·β_d`. For matrices (`d = 2`) the
//! relevant statistic is the top eigenvalue of `X₀X₀*` against `β₂ = 1`.

use serde::{Deserialize, Serialize};

use crate::error::{param_err, Result};
use crate::linalg::{hermitian_eigen, psd_sqrt};
use crate::spike::{eta_max, gram_set, GramSet, SpikeSpec, EIGEN_CLIP};
use crate::CMatrix;

/// Grid resolution of the initial scan in [`beta_d_second`].
pub const GRID_POINTS: usize = 10_000;
/// Golden-section stopping tolerance on the minimizer.
pub const GOLDEN_TOL: f64 = 1e-10;

/// `f(u) = −log(1−u²)/u^d` on `(0, 1)`, extended by its limits: `1` (d=2) or
/// `+∞` (d>2) at `u = 0`, and `+∞` at `u = 1`.
pub fn second_moment_exponent(u: f64, d: usize) -> f64 {
    if u <= 0.0 {
        return if d == 2 { 1.0 } else { f64::INFINITY };
    }
    if u >= 1.0 {
        return f64::INFINITY;
    }
    -(-u * u).ln_1p() / u.powi(d as i32)
}

/// Location and value of the minimum of [`second_moment_exponent`]. The
/// minimizer is `None` when the infimum is the `u → 0` limit (d = 2).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExponentMinimum {
    pub minimizer: Option<f64>,
    pub value: f64,
}

pub fn minimize_exponent(d: usize, tol: f64) -> Result<ExponentMinimum> {
    if d < 2 {
        return Err(param_err!("order d must be at least 2, got {d}"));
    }
    let f = |u: f64| second_moment_exponent(u, d);
    let h = 1.0 / GRID_POINTS as f64;
    let (best_i, best) = (1..GRID_POINTS)
        .map(|i| (i, f(i as f64 * h)))
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .expect("grid is non-empty");
    let endpoint = f(0.0);
    if endpoint <= best && best_i == 1 {
        return Ok(ExponentMinimum {
            minimizer: None,
            value: endpoint,
        });
    }
    let lo = (best_i - 1) as f64 * h;
    let hi = (best_i + 1) as f64 * h;
    let u = golden_section(f, lo, hi, tol);
    let value = f(u).min(best);
    if endpoint <= value {
        return Ok(ExponentMinimum {
            minimizer: None,
            value: endpoint,
        });
    }
    Ok(ExponentMinimum {
        minimizer: Some(u),
        value,
    })
}

/// Golden-section search for a minimum of a unimodal `f` on `[lo, hi]`.
pub fn golden_section<F: Fn(f64) -> f64>(f: F, mut lo: f64, mut hi: f64, tol: f64) -> f64 {
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut x1 = hi - inv_phi * (hi - lo);
    let mut x2 = lo + inv_phi * (hi - lo);
    let mut f1 = f(x1);
    let mut f2 = f(x2);
    while hi - lo > tol {
        if f1 <= f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - inv_phi * (hi - lo);
            f1 = f(x1);
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + inv_phi * (hi - lo);
            f2 = f(x2);
        }
    }
    0.5 * (lo + hi)
}

/// `β_d^{2nd}`.
pub fn beta_d_second(d: usize) -> Result<f64> {
    Ok(minimize_exponent(d, GOLDEN_TOL)?.value.sqrt())
}

/// `sqrt(d/2)·β_d`, the right-hand side of both conditions.
pub fn critical_amplitude(d: usize) -> Result<f64> {
    Ok((d as f64 / 2.0).sqrt() * beta_d_second(d)?)
}

/// A strict-inequality condition and its margin (threshold − statistic).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub ok: bool,
    pub margin: f64,
}

impl Verdict {
    fn strict(statistic: f64, threshold: f64) -> Self {
        Self {
            ok: statistic < threshold,
            margin: threshold - statistic,
        }
    }
}

/// `Σλᵢ < sqrt(d/2)·β_d`.
pub fn hoelder_condition(lambdas: &[f64], d: usize) -> Result<Verdict> {
    let sum: f64 = lambdas.iter().sum();
    Ok(Verdict::strict(sum, critical_amplitude(d)?))
}

/// `sqrt(η_max) < sqrt(d/2)·β_d`.
pub fn main_condition(lambdas: &[f64], grams: &GramSet, d: usize) -> Result<Verdict> {
    Ok(Verdict::strict(eta_max(lambdas, grams).sqrt(), critical_amplitude(d)?))
}

/// Top eigenvalue of `X₀X₀*` for an order-2 spike.
pub fn matrix_case_mu_max(spec: &SpikeSpec) -> Result<f64> {
    if spec.d() != 2 {
        return Err(param_err!("matrix case requires d = 2, got d = {}", spec.d()));
    }
    mu_max_from_grams(spec.lambdas(), &gram_set(spec))
}

/// Top eigenvalue of `Λ Ḡ₂ Λ G₁`, evaluated through the Hermitian similar
/// matrix `G₁^{1/2} Λ Ḡ₂ Λ G₁^{1/2}`.
pub fn mu_max_from_grams(lambdas: &[f64], grams: &GramSet) -> Result<f64> {
    if grams.order() != 2 {
        return Err(param_err!("matrix case requires d = 2, got d = {}", grams.order()));
    }
    let g1 = &grams.grams()[0];
    let g2_conj = grams.grams()[1].map(|z| z.conj());
    let lam = CMatrix::from_diagonal(&nalgebra::DVector::from_iterator(
        lambdas.len(),
        lambdas.iter().map(|&l| l.into()),
    ));
    let root = psd_sqrt(g1, EIGEN_CLIP).ok_or_else(|| param_err!("Gram 0 is not positive semidefinite"))?;
    let m = &root * &lam * g2_conj * &lam * &root;
    let (values, _) = hermitian_eigen(&m);
    Ok(values[0].max(0.0))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdReport {
    pub d: usize,
    pub beta_d: f64,
    pub critical_amplitude: f64,
    pub sum_lambda: f64,
    pub eta_max: f64,
    pub hoelder_ok: bool,
    pub hoelder_margin: f64,
    pub main_ok: bool,
    pub main_margin: f64,
    /// The η_max condition implies `E₀[Λ²] = 1 + o(1)` only for `d > 2`.
    pub conclusive: bool,
    pub d2_mu_max: Option<f64>,
    pub d2_ok: Option<bool>,
}

pub fn threshold_report(lambdas: &[f64], grams: &GramSet) -> Result<ThresholdReport> {
    let d = grams.order();
    if lambdas.len() != grams.rank() {
        return Err(param_err!("{} amplitudes for rank-{} Grams", lambdas.len(), grams.rank()));
    }
    let beta_d = beta_d_second(d)?;
    let hoelder = hoelder_condition(lambdas, d)?;
    let main = main_condition(lambdas, grams, d)?;
    let (d2_mu_max, d2_ok) = if d == 2 {
        let mu = mu_max_from_grams(lambdas, grams)?;
        (Some(mu), Some(mu < beta_d))
    } else {
        (None, None)
    };
    Ok(ThresholdReport {
        d,
        beta_d,
        critical_amplitude: critical_amplitude(d)?,
        sum_lambda: lambdas.iter().sum(),
        eta_max: eta_max(lambdas, grams),
        hoelder_ok: hoelder.ok,
        hoelder_margin: hoelder.margin,
        main_ok: main.ok,
        main_margin: main.margin,
        conclusive: d > 2,
        d2_mu_max,
        d2_ok,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn beta_two_is_one() {
        assert_eq!(beta_d_second(2).unwrap(), 1.0);
        assert!(minimize_exponent(2, GOLDEN_TOL).unwrap().minimizer.is_none());
    }

    #[test]
    fn rejects_order_below_two() {
        assert!(matches!(beta_d_second(1), Err(crate::Error::Parameter(_))));
    }

    #[test]
    fn exponent_limits() {
        assert_eq!(second_moment_exponent(0.0, 2), 1.0);
        assert_eq!(second_moment_exponent(0.0, 3), f64::INFINITY);
        assert_eq!(second_moment_exponent(1.0, 3), f64::INFINITY);
        assert!((second_moment_exponent(1e-6, 2) - 1.0).abs() < 1e-9);
    }

    #[test]
    fn golden_section_on_parabola() {
        let x = golden_section(|x| (x - 0.3).powi(2), 0.0, 1.0, 1e-12);
        assert!((x - 0.3).abs() < 1e-9);
    }

    #[test]
    fn tiny_amplitude_satisfies_hoelder() {
        assert!(hoelder_condition(&[1e-6], 3).unwrap().ok);
    }

    #[test]
    fn boundary_is_not_satisfied() {
        let c = critical_amplitude(3).unwrap();
        let v = hoelder_condition(&[c], 3).unwrap();
        assert!(!v.ok);
        assert_eq!(v.margin, 0.0);
    }

    #[test]
    fn all_ones_grams_reduce_main_to_hoelder() {
        let l = [0.2, 0.4, 0.1];
        let h = hoelder_condition(&l, 3).unwrap();
        let m = main_condition(&l, &GramSet::all_ones(3, 3), 3).unwrap();
        assert_eq!(h.ok, m.ok);
        assert!((h.margin - m.margin).abs() < 1e-12);
    }

    #[test]
    fn identity_grams_weaken_the_requirement() {
        // η_max = 2a², so the main condition is a√2 < c while Hölder needs 2a < c.
        let c = critical_amplitude(3).unwrap();
        let a = 0.6 * c;
        let m = main_condition(&[a, a], &GramSet::identity(3, 2), 3).unwrap();
        let h = hoelder_condition(&[a, a], 3).unwrap();
        assert!(m.ok && !h.ok);
        assert!((m.margin - (c - a * 2f64.sqrt())).abs() < 1e-12);
    }

    #[test]
    fn mu_max_rank_one_and_diagonal() {
        assert!((mu_max_from_grams(&[0.5], &GramSet::identity(2, 1)).unwrap() - 0.25).abs() < 1e-15);
        let mu = mu_max_from_grams(&[0.3, 0.9, 0.5], &GramSet::identity(2, 3)).unwrap();
        assert!((mu - 0.81).abs() < 1e-12);
        assert!(mu_max_from_grams(&[0.3], &GramSet::identity(3, 1)).is_err());
    }

    #[test]
    fn report_flags_order_two() {
        let r = threshold_report(&[0.5], &GramSet::identity(2, 1)).unwrap();
        assert_eq!(r.d2_mu_max, Some(0.25));
        assert_eq!(r.d2_ok, Some(true));
        assert!(!r.conclusive);
        let r = threshold_report(&[0.1], &GramSet::identity(3, 1)).unwrap();
        assert!(r.hoelder_ok && r.main_ok && r.conclusive && r.d2_mu_max.is_none());
    }
}
