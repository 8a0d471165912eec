//! Rank-r spike parameterization.
//!
//! The Gram matrices `G_k = χ_k* χ_k` are the `n`-independent parameters of a
//! spike; the factor matrices `χ_k` are derived from them for simulation at a
//! chosen `n`. Everything here that depends only on the Grams (the SVD pieces
//! `Σ_k`, `V_k` and `η_max`) is computed from `r × r` eigendecompositions.

use num_complex::Complex64;

use crate::error::{dim_err, param_err, Result};
use crate::linalg::{self, hermitian_eigen, psd_sqrt};
use crate::rng::{sample_haar_unitary, SeedSpec};
use crate::tensor::ModeOperators;
use crate::{CMatrix, CVector};

/// Column norms must be within this of 1.
pub const COLUMN_NORM_TOL: f64 = 1e-10;
/// Gram eigenvalues in `[-EIGEN_CLIP, 0)` are treated as zero.
pub const EIGEN_CLIP: f64 = 1e-10;

#[derive(Debug, Clone)]
pub struct SpikeSpec {
    d: usize,
    n: usize,
    lambdas: Vec<f64>,
    factors: Vec<CMatrix>,
}

impl SpikeSpec {
    /// Validated spike: strictly positive amplitudes, `d` factor matrices of
    /// shape `n × r` with unit columns, `r ≤ n`. Columns are renormalized
    /// exactly after the tolerance check.
    pub fn new(d: usize, n: usize, lambdas: Vec<f64>, factors: Vec<CMatrix>) -> Result<Self> {
        if let Some(l) = lambdas.iter().find(|&&l| !(l > 0.0 && l.is_finite())) {
            return Err(param_err!("amplitudes must be strictly positive and finite, got {l}"));
        }
        Self::build(d, n, lambdas, factors)
    }

    /// Like [`SpikeSpec::new`] but accepts zero amplitudes. Intended for the
    /// null-spike test mode where `X₀ = 0` and `η ≡ 0`.
    pub fn relaxed(d: usize, n: usize, lambdas: Vec<f64>, factors: Vec<CMatrix>) -> Result<Self> {
        if let Some(l) = lambdas.iter().find(|&&l| !(l >= 0.0 && l.is_finite())) {
            return Err(param_err!("amplitudes must be non-negative and finite, got {l}"));
        }
        Self::build(d, n, lambdas, factors)
    }

    fn build(d: usize, n: usize, lambdas: Vec<f64>, mut factors: Vec<CMatrix>) -> Result<Self> {
        if d < 2 {
            return Err(param_err!("order d must be at least 2, got {d}"));
        }
        let r = lambdas.len();
        if r == 0 {
            return Err(param_err!("rank must be at least 1"));
        }
        if r > n {
            return Err(param_err!("rank r={r} exceeds dimension n={n}"));
        }
        if factors.len() != d {
            return Err(dim_err!("expected {d} factor matrices, got {}", factors.len()));
        }
        for (k, chi) in factors.iter_mut().enumerate() {
            if chi.nrows() != n || chi.ncols() != r {
                return Err(dim_err!("factor {k} is {}x{}, expected {n}x{r}", chi.nrows(), chi.ncols()));
            }
            for (i, mut col) in chi.column_iter_mut().enumerate() {
                let norm = col.norm();
                if (norm - 1.0).abs() > COLUMN_NORM_TOL {
                    return Err(param_err!("column {i} of factor {k} has norm {norm}, expected 1"));
                }
                col.unscale_mut(norm);
            }
        }
        Ok(Self { d, n, lambdas, factors })
    }

    /// Spike realized from prescribed Grams; see [`factors_from_grams`].
    pub fn from_grams(lambdas: Vec<f64>, grams: &GramSet, n: usize, seed: Option<SeedSpec>) -> Result<Self> {
        let factors = factors_from_grams(grams, n, seed)?;
        Self::new(grams.order(), n, lambdas, factors)
    }

    /// Relaxed counterpart of [`SpikeSpec::from_grams`].
    pub fn relaxed_from_grams(lambdas: Vec<f64>, grams: &GramSet, n: usize, seed: Option<SeedSpec>) -> Result<Self> {
        let factors = factors_from_grams(grams, n, seed)?;
        Self::relaxed(grams.order(), n, lambdas, factors)
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn r(&self) -> usize {
        self.lambdas.len()
    }

    pub fn lambdas(&self) -> &[f64] {
        &self.lambdas
    }

    pub fn factors(&self) -> &[CMatrix] {
        &self.factors
    }

    /// Same factors with every amplitude multiplied by `c`.
    pub fn scaled(&self, c: f64) -> Result<Self> {
        let lambdas = self.lambdas.iter().map(|l| l * c).collect();
        if c > 0.0 {
            Self::new(self.d, self.n, lambdas, self.factors.clone())
        } else {
            Self::relaxed(self.d, self.n, lambdas, self.factors.clone())
        }
    }

    /// Factors replaced by `Θ_k χ_k`; the Grams are unchanged.
    pub fn rotated(&self, thetas: &ModeOperators) -> Result<Self> {
        if thetas.order() != self.d || thetas.dim() != self.n {
            return Err(dim_err!(
                "{} operators of size {} for a spike with d={}, n={}",
                thetas.order(),
                thetas.dim(),
                self.d,
                self.n
            ));
        }
        let factors = thetas.matrices().iter().zip(&self.factors).map(|(t, chi)| t * chi).collect();
        Ok(Self {
            d: self.d,
            n: self.n,
            lambdas: self.lambdas.clone(),
            factors,
        })
    }
}

/// One Hermitian PSD unit-diagonal `r × r` Gram matrix per mode.
#[derive(Debug, Clone)]
pub struct GramSet {
    grams: Vec<CMatrix>,
}

impl GramSet {
    pub fn new(grams: Vec<CMatrix>) -> Result<Self> {
        let Some(first) = grams.first() else {
            return Err(param_err!("at least one Gram matrix required"));
        };
        let r = first.nrows();
        if r == 0 {
            return Err(param_err!("Gram matrices must be non-empty"));
        }
        for (k, g) in grams.iter().enumerate() {
            if g.nrows() != r || g.ncols() != r {
                return Err(dim_err!("Gram {k} is {}x{}, expected {r}x{r}", g.nrows(), g.ncols()));
            }
            let herm = linalg::hermitian_defect(g);
            if herm > 1e-12 {
                return Err(param_err!("Gram {k} is not Hermitian (defect {herm:e})"));
            }
            for i in 0..r {
                if (g[(i, i)] - Complex64::new(1.0, 0.0)).norm() > 1e-12 {
                    return Err(param_err!("Gram {k} has diagonal entry {} at {i}, expected 1", g[(i, i)]));
                }
            }
            if let Some(z) = g.iter().find(|z| z.norm() > 1.0 + 1e-12) {
                return Err(param_err!("Gram {k} has an entry of modulus {} > 1", z.norm()));
            }
            let (values, _) = hermitian_eigen(g);
            let min = values.min();
            if min < -EIGEN_CLIP {
                return Err(param_err!("Gram {k} is not positive semidefinite (eigenvalue {min:e})"));
            }
        }
        Ok(Self { grams })
    }

    /// `I_r` in every mode (orthonormal columns).
    pub fn identity(d: usize, r: usize) -> Self {
        Self {
            grams: vec![CMatrix::identity(r, r); d],
        }
    }

    /// All-ones `J` in every mode (all columns equal).
    pub fn all_ones(d: usize, r: usize) -> Self {
        Self {
            grams: vec![CMatrix::from_element(r, r, Complex64::new(1.0, 0.0)); d],
        }
    }

    /// `r = 2` Gram with eigenvalues `a ≥ b ≥ 0`, `a + b = 2`, in every mode:
    /// `[[1, (a−b)/2], [(a−b)/2, 1]]`.
    pub fn two_eigenvalue(d: usize, a: f64, b: f64) -> Result<Self> {
        if !(a >= 0.0 && b >= 0.0) || ((a + b) - 2.0).abs() > 1e-12 {
            return Err(param_err!("two-eigenvalue Gram needs a, b >= 0 with a + b = 2 (got {a}, {b})"));
        }
        let c = Complex64::new((a - b) / 2.0, 0.0);
        let one = Complex64::new(1.0, 0.0);
        let g = CMatrix::from_row_slice(2, 2, &[one, c, c, one]);
        Self::new(vec![g; d])
    }

    pub fn grams(&self) -> &[CMatrix] {
        &self.grams
    }

    pub fn order(&self) -> usize {
        self.grams.len()
    }

    pub fn rank(&self) -> usize {
        self.grams[0].nrows()
    }
}

/// `G_k = χ_k* χ_k` for every mode.
pub fn gram_set(spec: &SpikeSpec) -> GramSet {
    let grams = spec
        .factors
        .iter()
        .map(|chi| {
            let g = chi.adjoint() * chi;
            (&g + g.adjoint()).scale(0.5)
        })
        .collect();
    GramSet { grams }
}

/// Factor matrices realizing the given Grams at dimension `n`.
///
/// The Hermitian square root of `G_k` fills the top `r` rows, zeros below;
/// with a seed each factor is then left-multiplied by an independent Haar
/// unitary drawn from that stream.
pub fn factors_from_grams(grams: &GramSet, n: usize, seed: Option<SeedSpec>) -> Result<Vec<CMatrix>> {
    let mut rng = seed.map(|s| s.rng());
    let r = grams.rank();
    if n < r {
        return Err(param_err!("dimension n={n} smaller than rank r={r}"));
    }
    grams
        .grams
        .iter()
        .enumerate()
        .map(|(k, g)| {
            let root = psd_sqrt(g, EIGEN_CLIP).ok_or_else(|| param_err!("Gram {k} is not positive semidefinite"))?;
            let mut chi = CMatrix::zeros(n, r);
            chi.view_mut((0, 0), (r, r)).copy_from(&root);
            if let Some(rng) = rng.as_mut() {
                chi = sample_haar_unitary(n, rng) * chi;
            }
            Ok(chi)
        })
        .collect()
}

/// `Σ_k` and `V_k` with `G_k = V_k Σ_k² V_k*`, singular values descending.
#[derive(Debug, Clone)]
pub struct SpikeSvd {
    sigmas: Vec<Vec<f64>>,
    vs: Vec<CMatrix>,
}

impl SpikeSvd {
    pub fn from_grams(grams: &GramSet) -> Self {
        let (sigmas, vs) = grams.grams.iter().map(gram_svd).unzip();
        Self { sigmas, vs }
    }

    /// Diagonal of `Σ_k`.
    pub fn sigmas(&self) -> &[Vec<f64>] {
        &self.sigmas
    }

    pub fn vs(&self) -> &[CMatrix] {
        &self.vs
    }

    pub fn sigma_matrix(&self, k: usize) -> CMatrix {
        CMatrix::from_diagonal(&CVector::from_iterator(
            self.sigmas[k].len(),
            self.sigmas[k].iter().map(|&s| Complex64::new(s, 0.0)),
        ))
    }

    /// `A_k = V_k Σ_k`, so that `A_k A_k* = G_k`.
    pub fn mode_factor(&self, k: usize) -> CMatrix {
        &self.vs[k] * self.sigma_matrix(k)
    }

    pub fn order(&self) -> usize {
        self.vs.len()
    }

    pub fn rank(&self) -> usize {
        self.sigmas.first().map_or(0, Vec::len)
    }
}

fn gram_svd(g: &CMatrix) -> (Vec<f64>, CMatrix) {
    let r = g.nrows();
    let identity = CMatrix::identity(r, r);
    if linalg::max_abs_diff(g, &identity) <= 1e-14 {
        return (vec![1.0; r], identity);
    }
    let (values, mut vectors) = hermitian_eigen(g);
    // Fix each eigenvector's phase: largest-modulus entry real positive.
    for mut col in vectors.column_iter_mut() {
        let pivot = col.iter().copied().max_by(|a, b| a.norm().total_cmp(&b.norm())).unwrap_or_default();
        if pivot.norm() > 0.0 {
            let phase = pivot.conj() / pivot.norm();
            for z in col.iter_mut() {
                *z *= phase;
            }
        }
    }
    let sigmas = values.iter().map(|&v| if v < 0.0 { 0.0 } else { v.sqrt() }).collect();
    (sigmas, vectors)
}

pub fn spike_svd(spec: &SpikeSpec) -> SpikeSvd {
    SpikeSvd::from_grams(&gram_set(spec))
}

/// `n × n` unitary `U_k` with `χ_k = U_k [Σ_k; 0] V_k*`.
///
/// Not needed for any computed bound (`U_k* Θ U_k` is Haar whenever `Θ` is);
/// used to check the block form of `η` against its expanded form.
pub fn left_singular_basis(chi: &CMatrix, sigmas: &[f64], v: &CMatrix) -> CMatrix {
    let n = chi.nrows();
    let scale = sigmas.first().copied().unwrap_or(0.0).max(1.0);
    let mut basis: Vec<CVector> = Vec::with_capacity(n);
    let mut fixed = Vec::with_capacity(sigmas.len());
    for (j, &s) in sigmas.iter().enumerate() {
        if s > 1e-12 * scale {
            basis.push((chi * v.column(j)).unscale(s));
            fixed.push(true);
        } else {
            basis.push(CVector::zeros(n));
            fixed.push(false);
        }
    }
    let mut ortho: Vec<CVector> = Vec::with_capacity(n);
    let mut slots: Vec<Option<CVector>> = vec![None; sigmas.len()];
    for (j, u) in basis.iter().enumerate() {
        if fixed[j] {
            let w = orthonormalize_against(u, &ortho).unwrap_or_else(|| u.clone());
            ortho.push(w.clone());
            slots[j] = Some(w);
        }
    }
    let mut candidates = (0..n).map(|i| {
        let mut e = CVector::zeros(n);
        e[i] = Complex64::new(1.0, 0.0);
        e
    });
    let mut next_completion = || loop {
        let e = candidates.next().expect("standard basis spans the space");
        if let Some(w) = orthonormalize_against(&e, &ortho) {
            ortho.push(w.clone());
            return w;
        }
    };
    let mut columns: Vec<CVector> = Vec::with_capacity(n);
    for slot in slots {
        columns.push(match slot {
            Some(w) => w,
            None => next_completion(),
        });
    }
    while columns.len() < n {
        columns.push(next_completion());
    }
    CMatrix::from_columns(&columns)
}

fn orthonormalize_against(u: &CVector, basis: &[CVector]) -> Option<CVector> {
    let mut w = u.clone();
    // Two passes of modified Gram-Schmidt.
    for _ in 0..2 {
        for b in basis {
            let proj = b.dotc(&w);
            w -= b * proj;
        }
    }
    let norm = w.norm();
    (norm > 1e-6).then(|| w.unscale(norm))
}

/// `λᵀ (⊙_k M_k) λ` without taking the real part.
pub fn hadamard_quadratic(lambdas: &[f64], mats: &[CMatrix]) -> Complex64 {
    linalg::real_quadratic_form(lambdas, &linalg::hadamard(mats))
}

/// `η_max = λᵀ (G₁ ⊙ ⋯ ⊙ G_d) λ`.
pub fn eta_max(lambdas: &[f64], grams: &GramSet) -> f64 {
    hadamard_quadratic(lambdas, &grams.grams).re.max(0.0)
}

/// `η_max` of a spec, from its own Grams.
pub fn spec_eta_max(spec: &SpikeSpec) -> f64 {
    eta_max(&spec.lambdas, &gram_set(spec))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64) -> Complex64 {
        Complex64::new(re, 0.0)
    }

    #[test]
    fn rejects_invalid_specs() {
        let e = CMatrix::from_fn(3, 1, |i, _| c(if i == 0 { 1.0 } else { 0.0 }));
        let f = vec![e.clone(), e.clone(), e.clone()];
        assert!(SpikeSpec::new(3, 3, vec![0.0], f.clone()).is_err());
        assert!(SpikeSpec::new(3, 3, vec![-1.0], f.clone()).is_err());
        assert!(SpikeSpec::relaxed(3, 3, vec![0.0], f.clone()).is_ok());
        assert!(SpikeSpec::new(3, 3, vec![1.0], f[..2].to_vec()).is_err());
        let long = CMatrix::from_fn(3, 1, |_, _| c(1.0));
        assert!(SpikeSpec::new(3, 3, vec![1.0], vec![long.clone(), long.clone(), long]).is_err());
        assert!(SpikeSpec::new(2, 1, vec![1.0, 1.0], vec![CMatrix::zeros(1, 2); 2]).is_err());
    }

    #[test]
    fn gram_of_orthonormal_columns_is_identity() {
        let spec = SpikeSpec::from_grams(vec![1.0, 2.0], &GramSet::identity(3, 2), 4, None).unwrap();
        for g in gram_set(&spec).grams() {
            assert!(linalg::max_abs_diff(g, &CMatrix::identity(2, 2)) < 1e-12);
        }
    }

    #[test]
    fn equal_columns_give_all_ones() {
        let x = CMatrix::from_fn(3, 1, |i, _| c([0.6, 0.8, 0.0][i]));
        let chi = CMatrix::from_columns(&[x.column(0), x.column(0)]);
        let spec = SpikeSpec::new(2, 3, vec![1.0, 1.0], vec![chi.clone(), chi]).unwrap();
        let j = CMatrix::from_element(2, 2, c(1.0));
        for g in gram_set(&spec).grams() {
            assert!(linalg::max_abs_diff(g, &j) < 1e-12);
        }
        let r1 = SpikeSpec::new(2, 3, vec![1.0], vec![x.clone(), x]).unwrap();
        assert!((gram_set(&r1).grams()[0][(0, 0)] - c(1.0)).norm() < 1e-15);
    }

    #[test]
    fn identity_grams_with_n_equal_r_give_unitary_factors() {
        let factors = factors_from_grams(&GramSet::identity(3, 4), 4, None).unwrap();
        for chi in factors {
            assert!(linalg::unitarity_defect(&chi) < 1e-12);
        }
    }

    #[test]
    fn all_ones_grams_give_identical_columns() {
        let factors = factors_from_grams(&GramSet::all_ones(2, 3), 5, Some(SeedSpec::new(3, 0))).unwrap();
        for chi in factors {
            for j in 1..3 {
                assert!((chi.column(j) - chi.column(0)).norm() < 1e-7);
            }
        }
    }

    #[test]
    fn gram_round_trip() {
        let grams = GramSet::two_eigenvalue(3, 1.8, 0.2).unwrap();
        let spec = SpikeSpec::from_grams(vec![1.0, 0.5], &grams, 6, Some(SeedSpec::new(9, 0))).unwrap();
        for (g, h) in gram_set(&spec).grams().iter().zip(grams.grams()) {
            assert!(linalg::max_abs_diff(g, h) < 1e-9);
        }
    }

    #[test]
    fn rejects_indefinite_gram() {
        let bad = CMatrix::from_row_slice(3, 3, &[c(1.0), c(0.9), c(-0.9), c(0.9), c(1.0), c(0.9), c(-0.9), c(0.9), c(1.0)]);
        assert!(GramSet::new(vec![bad]).is_err());
        assert!(GramSet::two_eigenvalue(3, 1.5, 0.2).is_err());
    }

    #[test]
    fn svd_of_identity_and_all_ones() {
        let svd = SpikeSvd::from_grams(&GramSet::identity(2, 3));
        assert_eq!(svd.sigmas()[0], vec![1.0; 3]);
        assert_eq!(svd.vs()[0], CMatrix::identity(3, 3));

        let svd = SpikeSvd::from_grams(&GramSet::all_ones(2, 2));
        let s2: Vec<f64> = svd.sigmas()[0].iter().map(|s| s * s).collect();
        assert!((s2[0] - 2.0).abs() < 1e-12);
        assert!(s2[1].abs() < 1e-12);
    }

    #[test]
    fn svd_reconstructs_gram() {
        let grams = GramSet::two_eigenvalue(3, 1.8, 0.2).unwrap();
        let svd = SpikeSvd::from_grams(&grams);
        for k in 0..3 {
            let a = svd.mode_factor(k);
            assert!(linalg::max_abs_diff(&(&a * a.adjoint()), &grams.grams()[k]) < 1e-10);
            assert!(svd.sigmas()[k][0] >= svd.sigmas()[k][1]);
        }
    }

    #[test]
    fn eta_max_special_cases() {
        let l = [0.7];
        assert!((eta_max(&l, &GramSet::identity(3, 1)) - 0.49).abs() < 1e-15);
        let l = [0.3, 0.5, 1.1];
        assert!((eta_max(&l, &GramSet::all_ones(4, 3)) - 1.9f64.powi(2)).abs() < 1e-12);
        assert!((eta_max(&l, &GramSet::identity(4, 3)) - (0.09 + 0.25 + 1.21)).abs() < 1e-12);
    }

    #[test]
    fn left_basis_factorizes_chi() {
        for (s, grams) in [GramSet::two_eigenvalue(2, 1.8, 0.2).unwrap(), GramSet::all_ones(2, 2), GramSet::identity(2, 2)].into_iter().enumerate() {
            let spec = SpikeSpec::from_grams(vec![1.0, 1.0], &grams, 5, Some(SeedSpec::new(21, s as u64))).unwrap();
            let svd = spike_svd(&spec);
            for k in 0..2 {
                let u = left_singular_basis(&spec.factors()[k], &svd.sigmas()[k], &svd.vs()[k]);
                assert!(linalg::unitarity_defect(&u) < 1e-10);
                let mut stacked = CMatrix::zeros(5, 2);
                stacked.view_mut((0, 0), (2, 2)).copy_from(&svd.sigma_matrix(k));
                let rec = u * stacked * svd.vs()[k].adjoint();
                assert!(linalg::max_abs_diff(&rec, &spec.factors()[k]) < 1e-9);
            }
        }
    }
}
