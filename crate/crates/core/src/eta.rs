//! The random variable `η` and its large-deviation picture.
//!
//! `E₀[Λ(Y)²] = E[exp(2nη)]` with
//! `η = ℜ Σᵢⱼ λᵢλⱼ Πₖ ⟨Θₖ x⁽ᵏⁱ⁾, x⁽ᵏʲ⁾⟩` over i.i.d. Haar `Θₖ`. Writing
//! `χₖ = Uₖ [Σₖ; 0] Vₖ*` and `Ψₖ` for the upper `r × r` block of `Uₖ*ΘₖUₖ`,
//! the same quantity is `ℜ λᵀ (⊙ₖ Vₖ Σₖ Ψₖ Σₖ Vₖ*) λ`, which only depends on
//! the Grams and the `Ψₖ`.
//!
//! The rate function of `η` has no closed form for `d ≥ 3`. What is available
//! is the lower bound `I_η(x) ≥ −d·log(1 − (|x|/η_max)^{2/d})` and a sampled
//! cloud of `(η(ψ), Σₖ log det(I − ψₖ*ψₖ))` whose upper envelope traces `−I_η`.

use num_complex::Complex64;
use rand::Rng;
use rayon::prelude::*;

use crate::error::{dim_err, Error, Result};
use crate::linalg::{self, hermitian_eigen, spectral_norm};
use crate::rng::{ginibre, sample_haar_unitary, SeedSpec};
use crate::spike::{gram_set, left_singular_basis, spec_eta_max, SpikeSpec, SpikeSvd};
use crate::tensor::ModeOperators;
use crate::CMatrix;

/// Slack on `‖ψ‖₂ ≤ 1`.
pub const CONTRACTION_TOL: f64 = 1e-12;

/// One `r × r` matrix per mode together with its spectral norm.
#[derive(Debug, Clone)]
pub struct PsiSet {
    blocks: Vec<CMatrix>,
    norms: Vec<f64>,
}

impl PsiSet {
    /// Fails with a domain error if some block has spectral norm above `1`.
    pub fn new(blocks: Vec<CMatrix>) -> Result<Self> {
        let norms: Vec<f64> = blocks.iter().map(spectral_norm).collect();
        if let Some((k, a)) = norms.iter().enumerate().find(|(_, &a)| a > 1.0 + CONTRACTION_TOL) {
            return Err(Error::Domain(format!("block {k} has spectral norm {a} > 1")));
        }
        Ok(Self { blocks, norms })
    }

    pub fn blocks(&self) -> &[CMatrix] {
        &self.blocks
    }

    pub fn norms(&self) -> &[f64] {
        &self.norms
    }
}

/// `η = ℜ Σᵢⱼ λᵢλⱼ Πₖ ξₖ⁽ⁱʲ⁾` with `ξₖ⁽ⁱʲ⁾ = ⟨Θₖ x⁽ᵏⁱ⁾, x⁽ᵏʲ⁾⟩`.
pub fn eta_expanded(spec: &SpikeSpec, thetas: &ModeOperators) -> Result<f64> {
    if thetas.order() != spec.d() || thetas.dim() != spec.n() {
        return Err(dim_err!(
            "{} operators of size {} for a spike with d={}, n={}",
            thetas.order(),
            thetas.dim(),
            spec.d(),
            spec.n()
        ));
    }
    let r = spec.r();
    // cross[k][(j, i)] = x⁽ᵏʲ⁾* Θₖ x⁽ᵏⁱ⁾ = ξₖ⁽ⁱʲ⁾
    let cross: Vec<CMatrix> = thetas
        .matrices()
        .iter()
        .zip(spec.factors())
        .map(|(theta, chi)| chi.adjoint() * (theta * chi))
        .collect();
    let lambdas = spec.lambdas();
    let mut acc = 0.0;
    for i in 0..r {
        for j in 0..r {
            let prod = cross.iter().fold(Complex64::new(1.0, 0.0), |p, m| p * m[(j, i)]);
            acc += lambdas[i] * lambdas[j] * prod.re;
        }
    }
    Ok(acc)
}

/// `η = ℜ λᵀ (⊙ₖ Vₖ Σₖ ψₖ Σₖ Vₖ*) λ`.
pub fn eta_hadamard(lambdas: &[f64], svd: &SpikeSvd, psis: &PsiSet) -> Result<f64> {
    let r = lambdas.len();
    if svd.order() != psis.blocks.len() || svd.rank() != r {
        return Err(dim_err!(
            "{} blocks and rank-{} SVD for {r} amplitudes over {} modes",
            psis.blocks.len(),
            svd.rank(),
            svd.order()
        ));
    }
    let mats = psis
        .blocks
        .iter()
        .enumerate()
        .map(|(k, psi)| {
            if psi.nrows() != r || psi.ncols() != r {
                return Err(dim_err!("block {k} is {}x{}, expected {r}x{r}", psi.nrows(), psi.ncols()));
            }
            let a = svd.mode_factor(k);
            Ok(&a * psi * a.adjoint())
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(linalg::real_quadratic_form(lambdas, &linalg::hadamard(&mats)).re)
}

/// Upper `r × r` blocks of `Uₖ* Θₖ Uₖ`, with `Uₖ` the left singular basis of
/// each factor. Feeding these to [`eta_hadamard`] reproduces [`eta_expanded`].
pub fn psi_blocks(spec: &SpikeSpec, svd: &SpikeSvd, thetas: &ModeOperators) -> Result<PsiSet> {
    if thetas.order() != spec.d() || thetas.dim() != spec.n() {
        return Err(dim_err!("mode operators do not match the spike"));
    }
    let r = spec.r();
    let blocks = thetas
        .matrices()
        .iter()
        .enumerate()
        .map(|(k, theta)| {
            let u = left_singular_basis(&spec.factors()[k], &svd.sigmas()[k], &svd.vs()[k]);
            (u.adjoint() * theta * u).view((0, 0), (r, r)).into_owned()
        })
        .collect();
    PsiSet::new(blocks)
}

/// `(Πₖ αₖ) · λᵀ (⊙ₖ Aₖ Aₖ*) λ`: the supremum of `|λᵀ ⊙ₖ(Aₖ ψₖ Aₖ*) λ|`
/// over `ψₖ` with `‖ψₖ‖₂ = αₖ`. Attained at `ψₖ = αₖ I`.
pub fn lemma_sup_bound(lambdas: &[f64], mats: &[CMatrix], alphas: &[f64]) -> f64 {
    let grams: Vec<CMatrix> = mats.iter().map(|a| a * a.adjoint()).collect();
    let alpha: f64 = alphas.iter().product();
    alpha * linalg::real_quadratic_form(lambdas, &linalg::hadamard(&grams)).re
}

/// `|λᵀ ⊙ₖ(Aₖ ψₖ Aₖ*) λ|`, the quantity bounded by [`lemma_sup_bound`].
pub fn lemma_objective(lambdas: &[f64], mats: &[CMatrix], psis: &[CMatrix]) -> f64 {
    let prods: Vec<CMatrix> = mats.iter().zip(psis).map(|(a, p)| a * p * a.adjoint()).collect();
    linalg::real_quadratic_form(lambdas, &linalg::hadamard(&prods)).norm()
}

/// `−d·log(1 − (|x|/η_max)^{2/d})`, `+∞` once `|x| ≥ η_max`.
pub fn grf_lower_bound(x: f64, eta_max: f64, d: usize) -> f64 {
    let ratio = x.abs() / eta_max;
    if ratio >= 1.0 {
        return f64::INFINITY;
    }
    -(d as f64) * (-ratio.powf(2.0 / d as f64)).ln_1p()
}

/// `log det(I − ψ*ψ)`: `−∞` on the unit sphere, domain error outside it.
///
/// Evaluated from the eigenvalues of `I − ψ*ψ`, independently of the SVD used
/// for `‖ψ‖₂`.
pub fn log_det_contraction(psi: &CMatrix) -> Result<f64> {
    let r = psi.ncols();
    let m = CMatrix::identity(r, r) - psi.adjoint() * psi;
    let (values, _) = hermitian_eigen(&m);
    let mut acc = 0.0;
    for &v in values.iter() {
        if v < -CONTRACTION_TOL {
            return Err(Error::Domain(format!("‖ψ‖₂ > 1 (I − ψ*ψ has eigenvalue {v:e})")));
        }
        if v <= CONTRACTION_TOL {
            return Ok(f64::NEG_INFINITY);
        }
        acc += v.ln();
    }
    Ok(acc)
}

/// `Σₖ log det(I − ψₖ*ψₖ)`, the negated rate of the block configuration.
pub fn grf_psi_rate(psis: &PsiSet) -> Result<f64> {
    psis.blocks.iter().map(log_det_contraction).sum()
}

/// One `ψ` with `‖ψ‖₂ ≤ 1`: with probability ½ a Ginibre matrix rescaled to
/// spectral norm `√ρ`, `ρ ~ U[0,1]`; otherwise the upper `r × r` block of a
/// Haar `n × n` unitary.
pub fn sample_contraction<R: Rng + ?Sized>(r: usize, n: usize, rng: &mut R) -> CMatrix {
    if rng.random_bool(0.5) {
        let g = ginibre(r, r, rng);
        let rho: f64 = rng.random();
        let norm = spectral_norm(&g);
        if norm == 0.0 {
            return CMatrix::zeros(r, r);
        }
        g.scale(rho.sqrt() / norm)
    } else {
        sample_haar_unitary(n, rng).view((0, 0), (r, r)).into_owned()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CloudPoint {
    pub x: f64,
    pub y: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnvelopeBin {
    pub center: f64,
    pub max_y: f64,
    /// `−grf_lower_bound(center)`, the upper bound on `y` at the bin center.
    pub bound: f64,
}

#[derive(Debug, Clone)]
pub struct GrfCloud {
    pub points: Vec<CloudPoint>,
    pub eta_max: f64,
    pub d: usize,
    pub envelope: Vec<EnvelopeBin>,
    /// Samples whose per-matrix term exceeded `log(1 − ‖ψ‖²)`.
    pub generous_bound_violations: usize,
}

impl GrfCloud {
    /// Points lying above `d·log(1 − (|x|/η_max)^{2/d}) + tol`.
    pub fn bound_violations(&self, tol: f64) -> usize {
        self.points
            .iter()
            .filter(|p| p.y > -grf_lower_bound(p.x, self.eta_max, self.d) + tol)
            .count()
    }

    /// Median of `bound − max_y` over envelope bins with `|center|/η_max` in
    /// `[lo, hi]`. `None` if no bin qualifies.
    pub fn median_gap(&self, lo: f64, hi: f64) -> Option<f64> {
        let mut gaps: Vec<f64> = self
            .envelope
            .iter()
            .filter(|b| {
                let s = b.center.abs() / self.eta_max;
                (lo..=hi).contains(&s) && b.bound.is_finite()
            })
            .map(|b| b.bound - b.max_y)
            .collect();
        if gaps.is_empty() {
            return None;
        }
        gaps.sort_by(f64::total_cmp);
        let m = gaps.len();
        Some(if m % 2 == 1 { gaps[m / 2] } else { 0.5 * (gaps[m / 2 - 1] + gaps[m / 2]) })
    }
}

/// Points per RNG stream in [`sample_grf_cloud`].
pub const CLOUD_CHUNK: usize = 4096;

/// Samples `count` block configurations and records `(η(ψ), Σₖ log det(I − ψₖ*ψₖ))`.
///
/// Work is split into fixed chunks of [`CLOUD_CHUNK`] points, chunk `c` drawing
/// from `seed.child(c)`, and merged in chunk order; the result does not depend
/// on the thread count.
pub fn sample_grf_cloud(spec: &SpikeSpec, count: usize, seed: SeedSpec, bins: usize) -> Result<GrfCloud> {
    if count == 0 || bins == 0 {
        return Err(Error::Parameter("cloud needs count >= 1 and bins >= 1".into()));
    }
    let eta_max = spec_eta_max(spec);
    if eta_max <= 0.0 {
        return Err(Error::Parameter("cloud requires η_max > 0".into()));
    }
    let svd = SpikeSvd::from_grams(&gram_set(spec));
    let (r, n, d) = (spec.r(), spec.n(), spec.d());
    let lambdas = spec.lambdas();
    let chunks = count.div_ceil(CLOUD_CHUNK);
    let parts: Vec<(Vec<CloudPoint>, usize)> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let len = CLOUD_CHUNK.min(count - c * CLOUD_CHUNK);
            let mut rng = seed.child(c as u64).rng();
            let mut points = Vec::with_capacity(len);
            let mut violations = 0;
            for _ in 0..len {
                let blocks: Vec<CMatrix> = (0..d).map(|_| sample_contraction(r, n, &mut rng)).collect();
                let psis = PsiSet::new(blocks).expect("sampled blocks are contractions");
                let mut y = 0.0;
                for (psi, &alpha) in psis.blocks.iter().zip(&psis.norms) {
                    let term = log_det_contraction(psi).expect("sampled blocks are contractions");
                    if term > (-(alpha * alpha).min(1.0)).ln_1p() + 1e-12 {
                        violations += 1;
                    }
                    y += term;
                }
                let x = eta_hadamard(lambdas, &svd, &psis).expect("shapes agree");
                points.push(CloudPoint { x, y });
            }
            (points, violations)
        })
        .collect();
    let mut points = Vec::with_capacity(count);
    let mut generous_bound_violations = 0;
    for (p, v) in parts {
        points.extend(p);
        generous_bound_violations += v;
    }
    let envelope = upper_envelope(&points, eta_max, d, bins);
    Ok(GrfCloud {
        points,
        eta_max,
        d,
        envelope,
        generous_bound_violations,
    })
}

/// Per-bin maximum of `y` over equal-width bins on `[−η_max, η_max]`. Bins
/// without a finite `y` are omitted.
pub fn upper_envelope(points: &[CloudPoint], eta_max: f64, d: usize, bins: usize) -> Vec<EnvelopeBin> {
    let width = 2.0 * eta_max / bins as f64;
    let mut best = vec![f64::NEG_INFINITY; bins];
    for p in points {
        let idx = (((p.x + eta_max) / width).floor().max(0.0) as usize).min(bins - 1);
        if p.y > best[idx] {
            best[idx] = p.y;
        }
    }
    best.iter()
        .enumerate()
        .filter(|(_, y)| y.is_finite())
        .map(|(i, &max_y)| {
            let center = -eta_max + (i as f64 + 0.5) * width;
            EnvelopeBin {
                center,
                max_y,
                bound: -grf_lower_bound(center, eta_max, d),
            }
        })
        .collect()
}
