//! Dense complex tensors with equal mode sizes.

use std::ops::Add;

use num_complex::Complex64;

use crate::error::{dim_err, param_err, Result};
use crate::spike::SpikeSpec;
use crate::CMatrix;

/// Order-`d` tensor with `n` entries per mode, stored row-major over
/// `(i₁, …, i_d)` (last index fastest).
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexTensor {
    order: usize,
    dim: usize,
    entries: Vec<Complex64>,
}

impl ComplexTensor {
    pub fn zeros(order: usize, dim: usize) -> Result<Self> {
        check_shape(order, dim)?;
        Ok(Self {
            order,
            dim,
            entries: vec![Complex64::new(0.0, 0.0); dim.pow(order as u32)],
        })
    }

    pub fn from_entries(order: usize, dim: usize, entries: Vec<Complex64>) -> Result<Self> {
        check_shape(order, dim)?;
        let expected = dim.pow(order as u32);
        if entries.len() != expected {
            return Err(dim_err!(
                "expected {expected} entries for order {order}, dim {dim}; got {}",
                entries.len()
            ));
        }
        Ok(Self { order, dim, entries })
    }

    /// Tensor with a single unit entry at `index`.
    pub fn basis(order: usize, dim: usize, index: &[usize]) -> Result<Self> {
        let mut t = Self::zeros(order, dim)?;
        let flat = t.flat_index(index)?;
        t.entries[flat] = Complex64::new(1.0, 0.0);
        Ok(t)
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn entries(&self) -> &[Complex64] {
        &self.entries
    }

    pub fn get(&self, index: &[usize]) -> Result<Complex64> {
        Ok(self.entries[self.flat_index(index)?])
    }

    pub fn flat_index(&self, index: &[usize]) -> Result<usize> {
        if index.len() != self.order {
            return Err(dim_err!("index of length {} for order-{} tensor", index.len(), self.order));
        }
        let mut flat = 0;
        for &i in index {
            if i >= self.dim {
                return Err(dim_err!("index {i} out of range for dim {}", self.dim));
            }
            flat = flat * self.dim + i;
        }
        Ok(flat)
    }

    pub fn scale(&self, factor: Complex64) -> Self {
        Self {
            order: self.order,
            dim: self.dim,
            entries: self.entries.iter().map(|z| z * factor).collect(),
        }
    }

    pub fn try_add(&self, other: &Self) -> Result<Self> {
        self.check_same_shape(other)?;
        Ok(Self {
            order: self.order,
            dim: self.dim,
            entries: self.entries.iter().zip(&other.entries).map(|(a, b)| a + b).collect(),
        })
    }

    pub fn norm_sqr(&self) -> f64 {
        self.entries.iter().map(|z| z.norm_sqr()).sum()
    }

    fn check_same_shape(&self, other: &Self) -> Result<()> {
        if self.order != other.order || self.dim != other.dim {
            return Err(dim_err!(
                "shape ({}, {}) vs ({}, {})",
                self.order,
                self.dim,
                other.order,
                other.dim
            ));
        }
        Ok(())
    }
}

impl Add for &ComplexTensor {
    type Output = ComplexTensor;

    /// Panics on shape mismatch; use [`ComplexTensor::try_add`] otherwise.
    fn add(self, rhs: Self) -> ComplexTensor {
        self.try_add(rhs).expect("tensor shapes must match")
    }
}

fn check_shape(order: usize, dim: usize) -> Result<()> {
    if order < 2 {
        return Err(param_err!("tensor order must be at least 2, got {order}"));
    }
    if dim < 1 {
        return Err(param_err!("mode dimension must be at least 1"));
    }
    Ok(())
}

/// `⟨X, Y⟩ = Σ X · conj(Y)`.
pub fn frobenius_inner(x: &ComplexTensor, y: &ComplexTensor) -> Result<Complex64> {
    x.check_same_shape(y)?;
    Ok(x.entries.iter().zip(&y.entries).map(|(a, b)| a * b.conj()).sum())
}

pub fn frobenius_norm(x: &ComplexTensor) -> f64 {
    x.norm_sqr().sqrt()
}

/// One unitary (or at least square) operator per mode.
#[derive(Debug, Clone)]
pub struct ModeOperators {
    matrices: Vec<CMatrix>,
}

/// Max-entry tolerance on `M*M − I` for accepted mode operators.
pub const UNITARY_TOL: f64 = 1e-10;

impl ModeOperators {
    /// Validates that every matrix is square, of a common size, and unitary.
    pub fn new(matrices: Vec<CMatrix>) -> Result<Self> {
        let ops = Self::new_unchecked(matrices)?;
        for (k, m) in ops.matrices.iter().enumerate() {
            let dev = crate::linalg::unitarity_defect(m);
            if dev > UNITARY_TOL {
                return Err(param_err!("mode operator {k} is not unitary (defect {dev:e})"));
            }
        }
        Ok(ops)
    }

    /// Shape checks only. Used for the multilinearity tests with general matrices.
    pub fn new_unchecked(matrices: Vec<CMatrix>) -> Result<Self> {
        let Some(first) = matrices.first() else {
            return Err(param_err!("at least one mode operator required"));
        };
        let n = first.nrows();
        for (k, m) in matrices.iter().enumerate() {
            if m.nrows() != n || m.ncols() != n {
                return Err(dim_err!("mode operator {k} is {}x{}, expected {n}x{n}", m.nrows(), m.ncols()));
            }
        }
        Ok(Self { matrices })
    }

    pub fn identity(order: usize, dim: usize) -> Self {
        Self {
            matrices: vec![CMatrix::identity(dim, dim); order],
        }
    }

    pub fn matrices(&self) -> &[CMatrix] {
        &self.matrices
    }

    pub fn order(&self) -> usize {
        self.matrices.len()
    }

    pub fn dim(&self) -> usize {
        self.matrices[0].nrows()
    }
}

fn check_ops(ops: &ModeOperators, z: &ComplexTensor) -> Result<()> {
    if ops.order() != z.order || ops.dim() != z.dim {
        return Err(dim_err!(
            "{} operators of size {} against tensor of order {}, dim {}",
            ops.order(),
            ops.dim(),
            z.order,
            z.dim
        ));
    }
    Ok(())
}

/// `(Θ₁ ⊗ … ⊗ Θ_d) Z`, entry `(i₁..i_d)` equal to
/// `Σ_{ℓ} (Θ₁)_{i₁ℓ₁} ⋯ (Θ_d)_{i_dℓ_d} Z_{ℓ₁..ℓ_d}`.
///
/// Applied as `d` single-mode contractions, `O(d·n^{d+1})`. For `d = 2` this is
/// `Θ₁ Z Θ₂ᵀ`.
pub fn mode_product(ops: &ModeOperators, z: &ComplexTensor) -> Result<ComplexTensor> {
    check_ops(ops, z)?;
    let n = z.dim;
    let d = z.order;
    let mut cur = z.entries.clone();
    let mut next = vec![Complex64::new(0.0, 0.0); cur.len()];
    let mut fiber = vec![Complex64::new(0.0, 0.0); n];
    for (k, theta) in ops.matrices.iter().enumerate() {
        let inner = n.pow((d - k - 1) as u32);
        let outer = n.pow(k as u32);
        for o in 0..outer {
            let base = o * n * inner;
            for p in 0..inner {
                for (l, f) in fiber.iter_mut().enumerate() {
                    *f = cur[base + l * inner + p];
                }
                for i in 0..n {
                    let mut acc = Complex64::new(0.0, 0.0);
                    for (l, f) in fiber.iter().enumerate() {
                        acc += theta[(i, l)] * f;
                    }
                    next[base + i * inner + p] = acc;
                }
            }
        }
        std::mem::swap(&mut cur, &mut next);
    }
    Ok(ComplexTensor {
        order: d,
        dim: n,
        entries: cur,
    })
}

/// Direct evaluation of the `d`-fold sum, `O(n^{2d})`. Reference for tests.
pub fn mode_product_reference(ops: &ModeOperators, z: &ComplexTensor) -> Result<ComplexTensor> {
    check_ops(ops, z)?;
    let n = z.dim;
    let d = z.order;
    let total = z.entries.len();
    let mut out = vec![Complex64::new(0.0, 0.0); total];
    let unflatten = |mut flat: usize, buf: &mut [usize]| {
        for slot in buf.iter_mut().rev() {
            *slot = flat % n;
            flat /= n;
        }
    };
    let mut out_idx = vec![0; d];
    let mut in_idx = vec![0; d];
    for (fo, out_entry) in out.iter_mut().enumerate() {
        unflatten(fo, &mut out_idx);
        let mut acc = Complex64::new(0.0, 0.0);
        for (fi, zv) in z.entries.iter().enumerate() {
            unflatten(fi, &mut in_idx);
            let mut coef = Complex64::new(1.0, 0.0);
            for k in 0..d {
                coef *= ops.matrices[k][(out_idx[k], in_idx[k])];
            }
            acc += coef * zv;
        }
        *out_entry = acc;
    }
    Ok(ComplexTensor { order: d, dim: n, entries: out })
}

/// `X₀ = Σᵢ λᵢ x⁽¹ⁱ⁾ ⊗ … ⊗ x⁽ᵈⁱ⁾`.
pub fn build_spike(spec: &SpikeSpec) -> ComplexTensor {
    build_from_factors(spec.lambdas(), spec.factors(), spec.n())
}

/// Spike assembly from raw factor matrices (columns need not be unit norm).
pub(crate) fn build_from_factors(lambdas: &[f64], factors: &[CMatrix], n: usize) -> ComplexTensor {
    let d = factors.len();
    let total = n.pow(d as u32);
    let mut entries = vec![Complex64::new(0.0, 0.0); total];
    let mut term = Vec::with_capacity(total);
    let mut scratch = Vec::with_capacity(total);
    for (i, &lambda) in lambdas.iter().enumerate() {
        term.clear();
        term.push(Complex64::new(lambda, 0.0));
        for chi in factors {
            scratch.clear();
            for t in &term {
                scratch.extend(chi.column(i).iter().map(|x| t * x));
            }
            std::mem::swap(&mut term, &mut scratch);
        }
        for (e, t) in entries.iter_mut().zip(&term) {
            *e += t;
        }
    }
    ComplexTensor { order: d, dim: n, entries }
}
