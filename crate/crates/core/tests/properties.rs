use proptest::prelude::*;
use rand::Rng;
use spikedet_core::eta::{eta_expanded, grf_lower_bound, log_det_contraction, sample_contraction};
use spikedet_core::linalg::{hermitian_eigen, spectral_norm, unitarity_defect};
use spikedet_core::moment::sample_mode_operators;
use spikedet_core::rng::{ginibre, sample_gaussian_tensor, sample_haar_unitary, SeedSpec, StreamRng};
use spikedet_core::spike::{eta_max, gram_set, spec_eta_max, GramSet, SpikeSpec};
use spikedet_core::tensor::{build_spike, frobenius_inner, mode_product, mode_product_reference, ComplexTensor, ModeOperators};
use spikedet_core::thresholds::{critical_amplitude, hoelder_condition, main_condition, matrix_case_mu_max};
use spikedet_core::{CMatrix, Complex64};

fn unit_columns(mut m: CMatrix) -> CMatrix {
    for mut c in m.column_iter_mut() {
        let norm = c.norm();
        c /= Complex64::new(norm, 0.0);
    }
    m
}

fn random_spec(rng: &mut StreamRng, d: usize, r: usize, n: usize) -> SpikeSpec {
    let lambdas = (0..r).map(|_| rng.random_range(0.05..1.5)).collect();
    let factors = (0..d).map(|_| unit_columns(ginibre(n, r, rng))).collect();
    SpikeSpec::new(d, n, lambdas, factors).unwrap()
}

fn config() -> ProptestConfig {
    ProptestConfig::with_cases(64)
}

proptest! {
    #![proptest_config(config())]

    #[test]
    fn unitary_mode_products_preserve_norm(seed in any::<u64>(), d in 2usize..=4, n in 2usize..=5) {
        let mut rng = SeedSpec::new(seed, 0).rng();
        let z = sample_gaussian_tensor(n, d, &mut rng).unwrap();
        let ops = ModeOperators::new((0..d).map(|_| sample_haar_unitary(n, &mut rng)).collect()).unwrap();
        let y = mode_product(&ops, &z).unwrap();
        prop_assert!((y.norm_sqr() - z.norm_sqr()).abs() <= 1e-12 * z.norm_sqr().max(1.0));
        let reference = mode_product_reference(&ops, &z).unwrap();
        let diff = y.try_add(&reference.scale(Complex64::new(-1.0, 0.0))).unwrap();
        prop_assert!(diff.norm_sqr().sqrt() <= 1e-12 * (1.0 + z.norm_sqr().sqrt()));
    }

    #[test]
    fn mode_product_is_linear(seed in any::<u64>(), d in 2usize..=3, n in 2usize..=4, a in -2.0f64..2.0, b in -2.0f64..2.0) {
        let mut rng = SeedSpec::new(seed, 1).rng();
        let x = sample_gaussian_tensor(n, d, &mut rng).unwrap();
        let y = sample_gaussian_tensor(n, d, &mut rng).unwrap();
        let ops = ModeOperators::new_unchecked((0..d).map(|_| ginibre(n, n, &mut rng)).collect()).unwrap();
        let (ca, cb) = (Complex64::new(a, 0.5), Complex64::new(b, -1.0));
        let lhs = mode_product(&ops, &(&x.scale(ca) + &y.scale(cb))).unwrap();
        let rhs = &mode_product(&ops, &x).unwrap().scale(ca) + &mode_product(&ops, &y).unwrap().scale(cb);
        let diff = lhs.try_add(&rhs.scale(Complex64::new(-1.0, 0.0))).unwrap();
        prop_assert!(diff.norm_sqr().sqrt() <= 1e-10 * (1.0 + lhs.norm_sqr().sqrt()));
    }

    #[test]
    fn eta_max_is_spike_energy(seed in any::<u64>(), d in 2usize..=4, r in 1usize..=3, extra in 0usize..=3) {
        let mut rng = SeedSpec::new(seed, 2).rng();
        let spec = random_spec(&mut rng, d, r, r + extra);
        let em = spec_eta_max(&spec);
        prop_assert!((build_spike(&spec).norm_sqr() - em).abs() <= 1e-10 * em);
        // Rotating every mode by a unitary leaves the spike energy unchanged.
        let ops = sample_mode_operators(d, spec.n(), &mut rng);
        prop_assert!((spec_eta_max(&spec.rotated(&ops).unwrap()) - em).abs() <= 1e-10 * em);
        // η at the identity rotation is η_max itself.
        let eta = eta_expanded(&spec, &ModeOperators::identity(d, spec.n())).unwrap();
        prop_assert!((eta - em).abs() <= 1e-10 * em);
    }

    #[test]
    fn scaling_covariance(seed in any::<u64>(), c in 0.1f64..3.0) {
        let mut rng = SeedSpec::new(seed, 3).rng();
        let spec = random_spec(&mut rng, 3, 2, 4);
        let scaled = spec.scaled(c).unwrap();
        prop_assert!((spec_eta_max(&scaled) - c * c * spec_eta_max(&spec)).abs() <= 1e-12 * c * c * spec_eta_max(&spec));
        let x = build_spike(&spec);
        let y = build_spike(&scaled);
        let inner = frobenius_inner(&y, &x).unwrap();
        prop_assert!((inner.re - c * x.norm_sqr()).abs() <= 1e-12 * c * x.norm_sqr());
    }

    #[test]
    fn hoelder_implies_main(seed in any::<u64>(), d in 2usize..=6, r in 1usize..=4, frac in 0.0f64..2.0) {
        let mut rng = SeedSpec::new(seed, 4).rng();
        let spec = random_spec(&mut rng, d, r, r + 1);
        let grams = gram_set(&spec);
        let sum: f64 = spec.lambdas().iter().sum();
        let target = frac * critical_amplitude(d).unwrap();
        let lambdas: Vec<f64> = spec.lambdas().iter().map(|l| l * target / sum).collect();
        prop_assert!(eta_max(&lambdas, &grams) <= target * target + 1e-12);
        let h = hoelder_condition(&lambdas, d).unwrap();
        let m = main_condition(&lambdas, &grams, d).unwrap();
        prop_assert!(!h.ok || m.ok);
        prop_assert!(m.margin >= h.margin - 1e-12);
    }

    #[test]
    fn mu_max_matches_dense_eigensolver(seed in any::<u64>(), r in 1usize..=3, extra in 0usize..=3) {
        let mut rng = SeedSpec::new(seed, 5).rng();
        let spec = random_spec(&mut rng, 2, r, r + extra);
        let n = spec.n();
        let x = build_spike(&spec);
        let m = CMatrix::from_fn(n, n, |i, j| x.get(&[i, j]).unwrap());
        let (values, _) = hermitian_eigen(&(&m * m.adjoint()));
        let mu = matrix_case_mu_max(&spec).unwrap();
        prop_assert!((mu - values[0]).abs() <= 1e-10 * (1.0 + values[0]));
    }

    #[test]
    fn contractions_respect_the_generous_bound(seed in any::<u64>(), r in 1usize..=3, extra in 0usize..=3) {
        let mut rng = SeedSpec::new(seed, 6).rng();
        let psi = sample_contraction(r, r + extra, &mut rng);
        let s = spectral_norm(&psi);
        prop_assert!(s <= 1.0 + 1e-12);
        let ld = log_det_contraction(&psi).unwrap();
        if s < 1.0 - 1e-9 {
            prop_assert!(ld <= (1.0 - s * s).ln() + 1e-12);
        }
    }

    #[test]
    fn grf_bound_is_even_and_increasing(x in 0.0f64..0.99, dx in 0.001f64..0.01, d in 2usize..=6) {
        let b = grf_lower_bound(x, 1.0, d);
        prop_assert_eq!(b, grf_lower_bound(-x, 1.0, d));
        prop_assert!(grf_lower_bound((x + dx).min(0.999), 1.0, d) >= b);
        prop_assert!(b >= 0.0);
    }
}

#[test]
fn haar_samples_are_unitary() {
    let mut rng = SeedSpec::new(7, 0).rng();
    for n in [1, 2, 5, 16] {
        assert!(unitarity_defect(&sample_haar_unitary(n, &mut rng)) < 1e-12);
    }
}

#[test]
fn two_eigenvalue_preset_has_requested_spectrum() {
    let g = GramSet::two_eigenvalue(3, 1.8, 0.2).unwrap();
    for m in g.grams() {
        let (values, _) = hermitian_eigen(m);
        assert!((values[0] - 1.8).abs() < 1e-12 && (values[1] - 0.2).abs() < 1e-12);
    }
    assert!(GramSet::two_eigenvalue(3, 1.5, 0.2).is_err());
}

#[test]
fn basis_tensors_are_orthonormal() {
    let a = ComplexTensor::basis(3, 3, &[0, 1, 2]).unwrap();
    let b = ComplexTensor::basis(3, 3, &[2, 1, 0]).unwrap();
    assert_eq!(frobenius_inner(&a, &a).unwrap(), Complex64::new(1.0, 0.0));
    assert_eq!(frobenius_inner(&a, &b).unwrap(), Complex64::new(0.0, 0.0));
}
