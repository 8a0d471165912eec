//! Seeded sampling: complex Gaussian tensors, Haar unitaries, sphere vectors
//! and upper-left blocks of Haar unitaries.
//!
//! Every generator is derived from a [`SeedSpec`]: ChaCha8 keyed by the master
//! seed, with the stream id selecting one of its 2⁶⁴ independent streams.
//! Parallel drivers hand each worker its own child stream.

use num_complex::Complex64;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{param_err, Result};
use crate::tensor::ComplexTensor;
use crate::{CMatrix, CVector};

pub type StreamRng = ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SeedSpec {
    pub master_seed: u64,
    pub stream_id: u64,
}

impl SeedSpec {
    pub fn new(master_seed: u64, stream_id: u64) -> Self {
        Self { master_seed, stream_id }
    }

    pub fn rng(&self) -> StreamRng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.master_seed);
        rng.set_stream(self.stream_id);
        rng
    }

    /// Deterministic child stream under the same master seed.
    pub fn child(&self, index: u64) -> Self {
        Self {
            master_seed: self.master_seed,
            stream_id: splitmix64(self.stream_id ^ splitmix64(index.wrapping_add(1))),
        }
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Circular complex Gaussian with `E|z|² = variance`.
pub fn complex_gaussian<R: Rng + ?Sized>(rng: &mut R, variance: f64) -> Complex64 {
    let s = (variance / 2.0).sqrt();
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    Complex64::new(s * re, s * im)
}

/// Noise tensor with i.i.d. `N_C(0, 1/n)` entries.
pub fn sample_gaussian_tensor<R: Rng + ?Sized>(n: usize, d: usize, rng: &mut R) -> Result<ComplexTensor> {
    if d < 2 || n < 1 {
        return Err(param_err!("need n >= 1 and d >= 2, got n={n}, d={d}"));
    }
    let variance = 1.0 / n as f64;
    let entries: Vec<_> = (0..n.pow(d as u32)).map(|_| complex_gaussian(rng, variance)).collect();
    ComplexTensor::from_entries(d, n, entries)
}

/// `rows × cols` matrix of i.i.d. `N_C(0, 1)` entries.
pub fn ginibre<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> CMatrix {
    CMatrix::from_fn(rows, cols, |_, _| complex_gaussian(rng, 1.0))
}

/// Haar-distributed `n × n` unitary.
///
/// QR of a complex Ginibre matrix, then `Q ← Q·diag(r_ii / |r_ii|)`. Without
/// the phase correction the law depends on the QR sign convention and is not
/// Haar.
pub fn sample_haar_unitary<R: Rng + ?Sized>(n: usize, rng: &mut R) -> CMatrix {
    let qr = ginibre(n, n, rng).qr();
    let r = qr.r();
    let mut q = qr.q();
    for j in 0..n {
        let rjj = r[(j, j)];
        let norm = rjj.norm();
        let phase = if norm > 0.0 { rjj / norm } else { Complex64::new(1.0, 0.0) };
        for i in 0..n {
            q[(i, j)] *= phase;
        }
    }
    q
}

/// Uniform vector on the unit sphere of `ℂⁿ`.
pub fn sample_unit_sphere<R: Rng + ?Sized>(n: usize, rng: &mut R) -> CVector {
    loop {
        let v = CVector::from_fn(n, |_, _| complex_gaussian(rng, 1.0));
        let norm = v.norm();
        if norm > 0.0 {
            return v.unscale(norm);
        }
    }
}

/// Upper-left `r × r` block of a Haar `n × n` unitary.
pub fn sample_psi_block<R: Rng + ?Sized>(n: usize, r: usize, rng: &mut R) -> Result<CMatrix> {
    if r == 0 || r > n {
        return Err(param_err!("block size r={r} must satisfy 1 <= r <= n={n}"));
    }
    let u = sample_haar_unitary(n, rng);
    Ok(u.view((0, 0), (r, r)).into_owned())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{spectral_norm, unitarity_defect};

    #[test]
    fn same_seed_same_stream() {
        let s = SeedSpec::new(7, 3);
        let a = sample_haar_unitary(4, &mut s.rng());
        let b = sample_haar_unitary(4, &mut s.rng());
        assert_eq!(a, b);
        let c = sample_haar_unitary(4, &mut SeedSpec::new(7, 4).rng());
        assert_ne!(a, c);
    }

    #[test]
    fn children_are_distinct() {
        let s = SeedSpec::new(1, 0);
        let ids: std::collections::HashSet<u64> = (0..1000).map(|i| s.child(i).stream_id).collect();
        assert_eq!(ids.len(), 1000);
        assert_eq!(s.child(5), s.child(5));
    }

    #[test]
    fn haar_samples_are_unitary() {
        let mut rng = SeedSpec::new(11, 0).rng();
        for n in 1..=12 {
            for _ in 0..20 {
                assert!(unitarity_defect(&sample_haar_unitary(n, &mut rng)) <= 1e-10);
            }
        }
    }

    #[test]
    fn sphere_vectors_have_unit_norm() {
        let mut rng = SeedSpec::new(2, 0).rng();
        for n in 1..10 {
            let v = sample_unit_sphere(n, &mut rng);
            assert!((v.norm() - 1.0).abs() <= 1e-12);
        }
    }

    #[test]
    fn psi_blocks() {
        let mut rng = SeedSpec::new(5, 0).rng();
        for _ in 0..200 {
            let psi = sample_psi_block(6, 3, &mut rng).unwrap();
            assert!(spectral_norm(&psi) <= 1.0 + 1e-12);
        }
        let full = sample_psi_block(4, 4, &mut rng).unwrap();
        assert!(unitarity_defect(&full) <= 1e-10);
        let one = sample_psi_block(5, 1, &mut rng).unwrap();
        assert!(one[(0, 0)].norm() <= 1.0);
        assert!(matches!(sample_psi_block(3, 4, &mut rng), Err(crate::Error::Parameter(_))));
    }
}
