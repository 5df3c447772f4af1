//! Dense complex matrices with tensor-factor bookkeeping.
//!
//! Factor ordering is row-major Kronecker: the first listed factor is the
//! slowest-varying index. `tensor(a, b)` therefore puts `a` first and every
//! partial operation addresses factors by their position in `dims`.

use std::ops::{Add, Mul, Neg, Sub};

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type C64 = Complex64;

pub const ZERO: C64 = C64::new(0.0, 0.0);
pub const ONE: C64 = C64::new(1.0, 0.0);

/// Square complex matrix on a tensor product of factors.
#[derive(Clone, Debug, PartialEq)]
pub struct ComplexMatrix {
    data: DMatrix<C64>,
    dims: Vec<usize>,
    labels: Option<Vec<String>>,
}

impl ComplexMatrix {
    pub fn new(data: DMatrix<C64>, dims: Vec<usize>) -> Result<Self> {
        if data.nrows() != data.ncols() {
            return Err(Error::dims(format!(
                "matrix is {}x{}, expected square",
                data.nrows(),
                data.ncols()
            )));
        }
        let prod: usize = dims.iter().product();
        if dims.is_empty() || prod != data.nrows() {
            return Err(Error::dims(format!(
                "factor dims {:?} do not multiply to order {}",
                dims,
                data.nrows()
            )));
        }
        Ok(ComplexMatrix {
            data,
            dims,
            labels: None,
        })
    }

    /// Single-factor matrix.
    pub fn from_matrix(data: DMatrix<C64>) -> Self {
        let n = data.nrows();
        assert_eq!(n, data.ncols(), "matrix must be square");
        ComplexMatrix {
            data,
            dims: vec![n],
            labels: None,
        }
    }

    pub fn from_real(n: usize, entries: &[f64]) -> Self {
        assert_eq!(entries.len(), n * n);
        Self::from_matrix(DMatrix::from_fn(n, n, |i, j| {
            C64::new(entries[i * n + j], 0.0)
        }))
    }

    pub fn from_complex(n: usize, entries: &[C64]) -> Self {
        assert_eq!(entries.len(), n * n);
        Self::from_matrix(DMatrix::from_fn(n, n, |i, j| entries[i * n + j]))
    }

    pub fn zeros(dims: &[usize]) -> Self {
        let n = dims.iter().product();
        ComplexMatrix {
            data: DMatrix::zeros(n, n),
            dims: dims.to_vec(),
            labels: None,
        }
    }

    pub fn identity(dims: &[usize]) -> Self {
        let n = dims.iter().product();
        ComplexMatrix {
            data: DMatrix::identity(n, n),
            dims: dims.to_vec(),
            labels: None,
        }
    }

    /// `|v><v|` for a column vector `v`.
    pub fn projector(v: &[C64]) -> Self {
        let n = v.len();
        Self::from_matrix(DMatrix::from_fn(n, n, |i, j| v[i] * v[j].conj()))
    }

    pub fn with_dims(mut self, dims: Vec<usize>) -> Result<Self> {
        let prod: usize = dims.iter().product();
        if prod != self.order() {
            return Err(Error::dims(format!(
                "factor dims {:?} do not multiply to order {}",
                dims,
                self.order()
            )));
        }
        if self.labels.as_ref().is_some_and(|l| l.len() != dims.len()) {
            self.labels = None;
        }
        self.dims = dims;
        Ok(self)
    }

    pub fn with_labels(mut self, labels: Vec<String>) -> Result<Self> {
        if labels.len() != self.dims.len() {
            return Err(Error::dims(format!(
                "{} labels for {} factors",
                labels.len(),
                self.dims.len()
            )));
        }
        self.labels = Some(labels);
        Ok(self)
    }

    pub fn order(&self) -> usize {
        self.data.nrows()
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn labels(&self) -> Option<&[String]> {
        self.labels.as_deref()
    }

    pub fn matrix(&self) -> &DMatrix<C64> {
        &self.data
    }

    pub fn into_matrix(self) -> DMatrix<C64> {
        self.data
    }

    pub fn get(&self, i: usize, j: usize) -> C64 {
        self.data[(i, j)]
    }

    pub fn set(&mut self, i: usize, j: usize, v: C64) {
        self.data[(i, j)] = v;
    }

    fn same_shape(&self, data: DMatrix<C64>) -> Self {
        ComplexMatrix {
            data,
            dims: self.dims.clone(),
            labels: self.labels.clone(),
        }
    }

    pub fn adjoint(&self) -> Self {
        self.same_shape(self.data.adjoint())
    }

    pub fn transpose(&self) -> Self {
        self.same_shape(self.data.transpose())
    }

    pub fn conj(&self) -> Self {
        self.same_shape(self.data.map(|z| z.conj()))
    }

    pub fn scale(&self, s: f64) -> Self {
        self.same_shape(self.data.map(|z| z * s))
    }

    pub fn scale_c(&self, s: C64) -> Self {
        self.same_shape(self.data.map(|z| z * s))
    }

    pub fn trace(&self) -> C64 {
        self.data.trace()
    }

    /// Real part of the trace; the natural value for Hermitian matrices.
    pub fn trace_re(&self) -> f64 {
        self.data.trace().re
    }

    /// `Re tr(A^H B)`, the real Hilbert-Schmidt inner product.
    pub fn inner(&self, other: &ComplexMatrix) -> f64 {
        self.data
            .iter()
            .zip(other.data.iter())
            .map(|(a, b)| a.re * b.re + a.im * b.im)
            .sum()
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn max_abs_diff(&self, other: &ComplexMatrix) -> f64 {
        self.data
            .iter()
            .zip(other.data.iter())
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max)
    }

    /// Frobenius distance.
    pub fn distance(&self, other: &ComplexMatrix) -> f64 {
        self.data
            .iter()
            .zip(other.data.iter())
            .map(|(a, b)| (a - b).norm_sqr())
            .sum::<f64>()
            .sqrt()
    }

    pub fn hermitian_residual(&self) -> f64 {
        let n = self.order();
        let mut r: f64 = 0.0;
        for i in 0..n {
            for j in i..n {
                r = r.max((self.data[(i, j)] - self.data[(j, i)].conj()).norm());
            }
        }
        r
    }

    pub fn is_hermitian(&self, tol: f64) -> bool {
        self.hermitian_residual() <= tol
    }

    /// `(M + M^H)/2`.
    pub fn hermitian_part(&self) -> Self {
        self.same_shape((&self.data + self.data.adjoint()) * C64::new(0.5, 0.0))
    }

    pub fn matmul(&self, other: &ComplexMatrix) -> Self {
        self.same_shape(&self.data * &other.data)
    }

    /// Smallest eigenvalue of the Hermitian part.
    pub fn min_eigenvalue(&self) -> f64 {
        let h = self.hermitian_part();
        let eig = nalgebra::SymmetricEigen::new(h.data);
        eig.eigenvalues
            .iter()
            .cloned()
            .fold(f64::INFINITY, f64::min)
    }

    pub fn max_eigenvalue(&self) -> f64 {
        let h = self.hermitian_part();
        let eig = nalgebra::SymmetricEigen::new(h.data);
        eig.eigenvalues
            .iter()
            .cloned()
            .fold(f64::NEG_INFINITY, f64::max)
    }

    fn check_factor(&self, factor: usize) -> Result<()> {
        if factor >= self.dims.len() {
            return Err(Error::InvalidFactor {
                index: factor,
                count: self.dims.len(),
            });
        }
        Ok(())
    }

    /// Reorders tensor factors: factor `k` of the result is factor `perm[k]`
    /// of `self`.
    pub fn permute_factors(&self, perm: &[usize]) -> Result<Self> {
        let k = self.dims.len();
        let mut seen = vec![false; k];
        if perm.len() != k {
            return Err(Error::dims(format!("permutation {perm:?} for {k} factors")));
        }
        for &p in perm {
            self.check_factor(p)?;
            if seen[p] {
                return Err(Error::Invalid(format!("{perm:?} is not a permutation")));
            }
            seen[p] = true;
        }
        let new_dims: Vec<usize> = perm.iter().map(|&p| self.dims[p]).collect();
        let n = self.order();
        // Map each new linear index to the old one.
        let map: Vec<usize> = (0..n)
            .map(|idx| {
                let digits = decompose(idx, &new_dims);
                let mut old = vec![0; k];
                for (pos, &p) in perm.iter().enumerate() {
                    old[p] = digits[pos];
                }
                compose(&old, &self.dims)
            })
            .collect();
        let data = DMatrix::from_fn(n, n, |i, j| self.data[(map[i], map[j])]);
        let labels = self
            .labels
            .as_ref()
            .map(|l| perm.iter().map(|&p| l[p].clone()).collect());
        Ok(ComplexMatrix {
            data,
            dims: new_dims,
            labels,
        })
    }
}

impl Add for &ComplexMatrix {
    type Output = ComplexMatrix;
    fn add(self, rhs: &ComplexMatrix) -> ComplexMatrix {
        assert_eq!(self.order(), rhs.order(), "order mismatch in add");
        self.same_shape(&self.data + &rhs.data)
    }
}

impl Sub for &ComplexMatrix {
    type Output = ComplexMatrix;
    fn sub(self, rhs: &ComplexMatrix) -> ComplexMatrix {
        assert_eq!(self.order(), rhs.order(), "order mismatch in sub");
        self.same_shape(&self.data - &rhs.data)
    }
}

impl Mul for &ComplexMatrix {
    type Output = ComplexMatrix;
    fn mul(self, rhs: &ComplexMatrix) -> ComplexMatrix {
        self.matmul(rhs)
    }
}

impl Neg for &ComplexMatrix {
    type Output = ComplexMatrix;
    fn neg(self) -> ComplexMatrix {
        self.scale(-1.0)
    }
}

pub(crate) fn decompose(mut idx: usize, dims: &[usize]) -> Vec<usize> {
    let mut digits = vec![0; dims.len()];
    for k in (0..dims.len()).rev() {
        digits[k] = idx % dims[k];
        idx /= dims[k];
    }
    digits
}

pub(crate) fn compose(digits: &[usize], dims: &[usize]) -> usize {
    digits.iter().zip(dims).fold(0, |acc, (&d, &n)| acc * n + d)
}

/// Kronecker product; factor lists are concatenated.
pub fn tensor(a: &ComplexMatrix, b: &ComplexMatrix) -> ComplexMatrix {
    let data = a.data.kronecker(&b.data);
    let mut dims = a.dims.clone();
    dims.extend_from_slice(&b.dims);
    let labels = match (&a.labels, &b.labels) {
        (Some(la), Some(lb)) => Some(la.iter().chain(lb).cloned().collect()),
        _ => None,
    };
    ComplexMatrix { data, dims, labels }
}

pub fn tensor_all(ms: &[&ComplexMatrix]) -> ComplexMatrix {
    let mut it = ms.iter();
    let first = (*it.next().expect("tensor_all of nothing")).clone();
    it.fold(first, |acc, m| tensor(&acc, m))
}

/// Traces out every factor not listed in `keep`. Kept factors retain their
/// original relative order.
pub fn partial_trace(m: &ComplexMatrix, keep: &[usize]) -> Result<ComplexMatrix> {
    for &k in keep {
        m.check_factor(k)?;
    }
    let nf = m.dims.len();
    let mut kept: Vec<usize> = keep.to_vec();
    kept.sort_unstable();
    kept.dedup();
    let traced: Vec<usize> = (0..nf).filter(|f| !kept.contains(f)).collect();
    let kept_dims: Vec<usize> = kept.iter().map(|&f| m.dims[f]).collect();
    let traced_dims: Vec<usize> = traced.iter().map(|&f| m.dims[f]).collect();
    let n_out: usize = kept_dims.iter().product();
    let n_tr: usize = traced_dims.iter().product();

    // Precompute the full index for every (kept, traced) pair.
    let mut full = vec![0usize; n_out * n_tr];
    let mut digits = vec![0usize; nf];
    for a in 0..n_out {
        let ka = decompose(a, &kept_dims);
        for t in 0..n_tr {
            let kt = decompose(t, &traced_dims);
            for (pos, &f) in kept.iter().enumerate() {
                digits[f] = ka[pos];
            }
            for (pos, &f) in traced.iter().enumerate() {
                digits[f] = kt[pos];
            }
            full[a * n_tr + t] = compose(&digits, &m.dims);
        }
    }
    let data = DMatrix::from_fn(n_out, n_out, |i, j| {
        let mut s = ZERO;
        for t in 0..n_tr {
            s += m.data[(full[i * n_tr + t], full[j * n_tr + t])];
        }
        s
    });
    let dims = if kept_dims.is_empty() {
        vec![1]
    } else {
        kept_dims
    };
    let labels = m.labels.as_ref().and_then(|l| {
        if kept.is_empty() {
            None
        } else {
            Some(kept.iter().map(|&f| l[f].clone()).collect())
        }
    });
    Ok(ComplexMatrix { data, dims, labels })
}

/// Transpose on a single factor.
pub fn partial_transpose(m: &ComplexMatrix, factor: usize) -> Result<ComplexMatrix> {
    m.check_factor(factor)?;
    let n = m.order();
    let dims = &m.dims;
    let mut out = DMatrix::zeros(n, n);
    for i in 0..n {
        let di = decompose(i, dims);
        for j in 0..n {
            let dj = decompose(j, dims);
            let mut ri = di.clone();
            let mut rj = dj.clone();
            ri[factor] = dj[factor];
            rj[factor] = di[factor];
            out[(compose(&ri, dims), compose(&rj, dims))] = m.data[(i, j)];
        }
    }
    Ok(m.same_shape(out))
}

/// `tr_f(M) ⊗ I_f / d_f`, with the identity reinserted at position `f`.
pub fn trace_and_replace(m: &ComplexMatrix, factor: usize) -> Result<ComplexMatrix> {
    m.check_factor(factor)?;
    let nf = m.dims.len();
    let keep: Vec<usize> = (0..nf).filter(|&f| f != factor).collect();
    let reduced = partial_trace(m, &keep)?;
    let d = m.dims[factor];
    let inv_d = 1.0 / d as f64;
    let n = m.order();
    let dims = &m.dims;
    let reduced_dims: Vec<usize> = keep.iter().map(|&f| dims[f]).collect();
    let reduce_index = |digits: &[usize]| -> usize {
        let r: Vec<usize> = keep.iter().map(|&f| digits[f]).collect();
        compose(&r, &reduced_dims)
    };
    let mut out = DMatrix::zeros(n, n);
    for i in 0..n {
        let di = decompose(i, dims);
        let ri = reduce_index(&di);
        for j in 0..n {
            let dj = decompose(j, dims);
            if di[factor] != dj[factor] {
                continue;
            }
            out[(i, j)] = reduced.data[(ri, reduce_index(&dj))] * inv_d;
        }
    }
    Ok(m.same_shape(out))
}

/// Applies `trace_and_replace` for each listed factor.
pub fn trace_and_replace_all(m: &ComplexMatrix, factors: &[usize]) -> Result<ComplexMatrix> {
    let mut out = m.clone();
    for &f in factors {
        if m.dims[f.min(m.dims.len().saturating_sub(1))] == 1 && f < m.dims.len() {
            continue;
        }
        out = trace_and_replace(&out, f)?;
    }
    Ok(out)
}

/// Eigendecomposition of a Hermitian matrix, eigenvalues ascending.
#[derive(Clone, Debug)]
pub struct HermitianEig {
    pub values: Vec<f64>,
    /// Columns are the eigenvectors, in the same order as `values`.
    pub vectors: DMatrix<C64>,
}

impl HermitianEig {
    /// `V diag(f(λ)) V^H`.
    pub fn reconstruct_with(&self, f: impl Fn(f64) -> f64) -> DMatrix<C64> {
        let n = self.values.len();
        let mut scaled = self.vectors.clone();
        for (k, &l) in self.values.iter().enumerate() {
            let s = f(l);
            for i in 0..n {
                scaled[(i, k)] *= s;
            }
        }
        scaled * self.vectors.adjoint()
    }
}

pub const HERMITIAN_TOL: f64 = 1e-10;

pub fn hermitian_eig(m: &ComplexMatrix) -> Result<HermitianEig> {
    let r = m.hermitian_residual();
    if r > HERMITIAN_TOL * (1.0 + m.frobenius_norm()) {
        return Err(Error::NotHermitian(r));
    }
    Ok(eig_hermitian_matrix(&m.hermitian_part().data))
}

pub(crate) fn eig_hermitian_matrix(m: &DMatrix<C64>) -> HermitianEig {
    let eig = nalgebra::SymmetricEigen::new(m.clone());
    let n = eig.eigenvalues.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let values = order.iter().map(|&k| eig.eigenvalues[k]).collect();
    let vectors = DMatrix::from_fn(n, n, |i, j| eig.eigenvectors[(i, order[j])]);
    HermitianEig { values, vectors }
}

/// Splits a Hermitian matrix into `P - N` with `P, N ⪰ 0` of orthogonal
/// support. Eigenvalues within `drop_tol` of zero are discarded.
pub fn positive_negative_parts(
    m: &ComplexMatrix,
    drop_tol: f64,
) -> Result<(ComplexMatrix, ComplexMatrix)> {
    let eig = hermitian_eig(m)?;
    let pos = eig.reconstruct_with(|l| if l > drop_tol { l } else { 0.0 });
    let neg = eig.reconstruct_with(|l| if l < -drop_tol { -l } else { 0.0 });
    Ok((m.same_shape(pos), m.same_shape(neg)))
}

/// Orthonormal real coordinates for Hermitian matrices.
///
/// Basis order for order `n`: the `n` diagonal units, then for each pair
/// `i < j` (row-major) the elements `(E_ij + E_ji)/√2` and
/// `i(E_ij - E_ji)/√2`. Coordinates satisfy `Re tr(AB) = svec(A)·svec(B)`.
pub mod herm {
    use super::*;

    pub fn dim(n: usize) -> usize {
        n * n
    }

    /// `(i, j)` for the off-diagonal pair with index `p`.
    pub fn pair(n: usize, p: usize) -> (usize, usize) {
        let mut rem = p;
        for i in 0..n {
            let len = n - 1 - i;
            if rem < len {
                return (i, i + 1 + rem);
            }
            rem -= len;
        }
        unreachable!("pair index out of range")
    }

    pub fn pairs(n: usize) -> Vec<(usize, usize)> {
        let mut v = Vec::with_capacity(n * (n - 1) / 2);
        for i in 0..n {
            for j in i + 1..n {
                v.push((i, j));
            }
        }
        v
    }

    pub fn svec_into(m: &DMatrix<C64>, out: &mut [f64]) {
        let n = m.nrows();
        let s2 = std::f64::consts::SQRT_2;
        for i in 0..n {
            out[i] = m[(i, i)].re;
        }
        let mut k = n;
        for i in 0..n {
            for j in i + 1..n {
                // Average the two triangles so slightly non-Hermitian input
                // maps to its Hermitian part.
                let z = (m[(i, j)] + m[(j, i)].conj()) * 0.5;
                out[k] = s2 * z.re;
                out[k + 1] = s2 * z.im;
                k += 2;
            }
        }
    }

    pub fn svec(m: &DMatrix<C64>) -> Vec<f64> {
        let mut v = vec![0.0; m.nrows() * m.nrows()];
        svec_into(m, &mut v);
        v
    }

    pub fn smat(v: &[f64], n: usize) -> DMatrix<C64> {
        let mut m = DMatrix::zeros(n, n);
        let r2 = std::f64::consts::FRAC_1_SQRT_2;
        for i in 0..n {
            m[(i, i)] = C64::new(v[i], 0.0);
        }
        let mut k = n;
        for i in 0..n {
            for j in i + 1..n {
                let z = C64::new(v[k] * r2, v[k + 1] * r2);
                m[(i, j)] = z;
                m[(j, i)] = z.conj();
                k += 2;
            }
        }
        m
    }

    pub fn basis_element(n: usize, k: usize) -> DMatrix<C64> {
        let mut v = vec![0.0; n * n];
        v[k] = 1.0;
        smat(&v, n)
    }
}

/// One term `weight · left ⊗ right` of an operator Schmidt decomposition.
#[derive(Clone, Debug)]
pub struct SchmidtTerm {
    pub weight: f64,
    pub left: ComplexMatrix,
    pub right: ComplexMatrix,
}

/// Relative singular-value cutoff below which Schmidt terms are dropped.
const SCHMIDT_CUTOFF: f64 = 1e-13;

/// Operator Schmidt decomposition `m = Σ w_k L_k ⊗ R_k` with Hermitian,
/// unit-norm factors, across the bipartition `left_factors | rest`.
///
/// Coefficients are taken in an orthonormal Hermitian basis on each side, so
/// the coefficient matrix is real and its SVD yields Hermitian factors.
pub fn operator_schmidt(m: &ComplexMatrix, left_factors: &[usize]) -> Result<Vec<SchmidtTerm>> {
    let r = m.hermitian_residual();
    if r > HERMITIAN_TOL * (1.0 + m.frobenius_norm()) {
        return Err(Error::NotHermitian(r));
    }
    let nf = m.dims.len();
    for &f in left_factors {
        m.check_factor(f)?;
    }
    let mut left: Vec<usize> = left_factors.to_vec();
    left.sort_unstable();
    left.dedup();
    let right: Vec<usize> = (0..nf).filter(|f| !left.contains(f)).collect();
    let mut perm = left.clone();
    perm.extend_from_slice(&right);
    let mp = m.permute_factors(&perm)?;
    let left_dims: Vec<usize> = left.iter().map(|&f| m.dims[f]).collect();
    let right_dims: Vec<usize> = right.iter().map(|&f| m.dims[f]).collect();
    let da: usize = left_dims.iter().product();
    let db: usize = right_dims.iter().product();

    // coeff[(a, b)] = <B_a ⊗ C_b, M>. Reshuffle M[(i,k),(j,l)] -> R[(i,j),(k,l)]
    // then change basis on both sides.
    let mut coeff = DMatrix::<f64>::zeros(da * da, db * db);
    let mut block = DMatrix::<C64>::zeros(db, db);
    let mut svec_b = vec![0.0; db * db];
    // Row index of coeff in the left Hermitian basis is linear in the
    // blocks M_(ij) := <i|_A M |j>_A, so accumulate per basis element.
    let pairs_a = herm::pairs(da);
    let s2 = std::f64::consts::FRAC_1_SQRT_2;
    let sub = |i: usize, j: usize, out: &mut DMatrix<C64>| {
        for k in 0..db {
            for l in 0..db {
                out[(k, l)] = mp.data[(i * db + k, j * db + l)];
            }
        }
    };
    for i in 0..da {
        sub(i, i, &mut block);
        herm::svec_into(&block, &mut svec_b);
        coeff.row_mut(i).copy_from_slice(&svec_b);
    }
    let mut bij = DMatrix::<C64>::zeros(db, db);
    let mut bji = DMatrix::<C64>::zeros(db, db);
    for (p, &(i, j)) in pairs_a.iter().enumerate() {
        sub(i, j, &mut bij);
        sub(j, i, &mut bji);
        // <(E_ij+E_ji)/√2 ⊗ C, M> = tr[C (M_ji + M_ij)]/√2
        let re = (&bij + &bji) * C64::new(s2, 0.0);
        // <i(E_ij-E_ji)/√2 ⊗ C, M>: (iE_ij - iE_ji)^H = -iE_ji + iE_ij, so the
        // partial inner product is tr_A[(-i E_ji + i E_ij) M] = -i M_ij + i M_ji
        let im = (&bji - &bij) * C64::new(0.0, s2);
        herm::svec_into(&re, &mut svec_b);
        coeff.row_mut(da + 2 * p).copy_from_slice(&svec_b);
        herm::svec_into(&im, &mut svec_b);
        coeff.row_mut(da + 2 * p + 1).copy_from_slice(&svec_b);
    }

    let norm = coeff.norm();
    if norm == 0.0 {
        return Ok(Vec::new());
    }
    // Orthonormal basis of the smaller side from a symmetric eigensolve;
    // projecting coeff onto it reconstructs exactly even when singular
    // values are clustered.
    let left_side = da <= db;
    let gram = if left_side {
        &coeff * coeff.transpose()
    } else {
        coeff.transpose() * &coeff
    };
    let basis = gram.symmetric_eigen().eigenvectors;
    let mut cols: Vec<(f64, Vec<f64>, Vec<f64>)> = basis
        .column_iter()
        .map(|b| {
            let other = if left_side {
                coeff.transpose() * b
            } else {
                &coeff * b
            };
            let w = other.norm();
            let (l, r) = if left_side {
                (
                    b.iter().cloned().collect(),
                    other.iter().map(|v| v / w).collect(),
                )
            } else {
                (
                    other.iter().map(|v| v / w).collect(),
                    b.iter().cloned().collect(),
                )
            };
            (w, l, r)
        })
        .collect();
    cols.sort_by(|a, b| b.0.total_cmp(&a.0));
    let mut terms = Vec::new();
    for (w, lv, rv) in cols {
        if w.is_nan() || w <= SCHMIDT_CUTOFF * norm {
            continue;
        }
        let l = ComplexMatrix::new(herm::smat(&lv, da), left_dims.clone())?;
        let r = ComplexMatrix::new(herm::smat(&rv, db), right_dims.clone())?;
        terms.push(SchmidtTerm {
            weight: w,
            left: l,
            right: r,
        });
    }
    Ok(terms)
}

/// `Σ w_k L_k ⊗ R_k` with factors in (left, right) order.
pub fn schmidt_reconstruct(terms: &[SchmidtTerm]) -> Option<ComplexMatrix> {
    let mut it = terms.iter();
    let first = it.next()?;
    let mut acc = tensor(&first.left, &first.right).scale(first.weight);
    for t in it {
        acc = &acc + &tensor(&t.left, &t.right).scale(t.weight);
    }
    Some(acc)
}

/// A product term `weight · F_0 ⊗ F_1 ⊗ ... ` over factor groups.
#[derive(Clone, Debug)]
pub struct ProductTerm {
    pub weight: f64,
    pub factors: Vec<ComplexMatrix>,
    /// Index path through the sequential Schmidt cuts; terms sharing a prefix
    /// share the corresponding factors.
    pub path: Vec<usize>,
}

/// Decomposes a Hermitian matrix into Hermitian product terms over the given
/// groups of factors by cutting off one group at a time. Groups must cover
/// every factor in order (contiguous, ascending).
pub fn operator_schmidt_groups(
    m: &ComplexMatrix,
    groups: &[Vec<usize>],
) -> Result<Vec<ProductTerm>> {
    let flat: Vec<usize> = groups.iter().flatten().cloned().collect();
    if flat != (0..m.dims.len()).collect::<Vec<_>>() {
        return Err(Error::Invalid(format!(
            "groups {groups:?} must list factors 0..{} in order",
            m.dims.len()
        )));
    }
    if groups.is_empty() {
        return Err(Error::Invalid("no factor groups".into()));
    }
    let mut out = Vec::new();
    recurse_groups(m, groups, 1.0, Vec::new(), Vec::new(), &mut out)?;
    Ok(out)
}

fn recurse_groups(
    m: &ComplexMatrix,
    groups: &[Vec<usize>],
    weight: f64,
    prefix: Vec<ComplexMatrix>,
    path: Vec<usize>,
    out: &mut Vec<ProductTerm>,
) -> Result<()> {
    if groups.len() == 1 {
        let norm = m.frobenius_norm();
        if norm == 0.0 {
            return Ok(());
        }
        let mut factors = prefix;
        factors.push(m.scale(1.0 / norm));
        let mut p = path;
        p.push(0);
        out.push(ProductTerm {
            weight: weight * norm,
            factors,
            path: p,
        });
        return Ok(());
    }
    let g0 = groups[0].len();
    let left: Vec<usize> = (0..g0).collect();
    let terms = operator_schmidt(m, &left)?;
    let rest: Vec<Vec<usize>> = groups[1..]
        .iter()
        .map(|g| g.iter().map(|f| f - g0).collect())
        .collect();
    for (k, t) in terms.into_iter().enumerate() {
        let mut pre = prefix.clone();
        pre.push(t.left);
        let mut p = path.clone();
        p.push(k);
        recurse_groups(&t.right, &rest, weight * t.weight, pre, p, out)?;
    }
    Ok(())
}

/// Serialized form: `[re, im]` pairs, row-major.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct MatrixJson {
    pub dims: Vec<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub labels: Option<Vec<String>>,
    pub data: Vec<Vec<[f64; 2]>>,
}

impl From<&ComplexMatrix> for MatrixJson {
    fn from(m: &ComplexMatrix) -> Self {
        let n = m.order();
        MatrixJson {
            dims: m.dims.clone(),
            labels: m.labels.clone(),
            data: (0..n)
                .map(|i| {
                    (0..n)
                        .map(|j| [m.data[(i, j)].re, m.data[(i, j)].im])
                        .collect()
                })
                .collect(),
        }
    }
}

impl TryFrom<&MatrixJson> for ComplexMatrix {
    type Error = Error;
    fn try_from(j: &MatrixJson) -> Result<Self> {
        let n = j.data.len();
        if j.data.iter().any(|row| row.len() != n) {
            return Err(Error::Schema("matrix data must be square".into()));
        }
        let data = DMatrix::from_fn(n, n, |r, c| C64::new(j.data[r][c][0], j.data[r][c][1]));
        let m =
            ComplexMatrix::new(data, j.dims.clone()).map_err(|e| Error::Schema(e.to_string()))?;
        match &j.labels {
            Some(l) => m
                .with_labels(l.clone())
                .map_err(|e| Error::Schema(e.to_string())),
            None => Ok(m),
        }
    }
}

impl Serialize for ComplexMatrix {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        MatrixJson::from(self).serialize(s)
    }
}

impl<'de> Deserialize<'de> for ComplexMatrix {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let j = MatrixJson::deserialize(d)?;
        ComplexMatrix::try_from(&j).map_err(serde::de::Error::custom)
    }
}

/// Pauli matrices and other small constants used throughout.
pub mod pauli {
    use super::*;

    pub fn i2() -> ComplexMatrix {
        ComplexMatrix::identity(&[2])
    }
    pub fn x() -> ComplexMatrix {
        ComplexMatrix::from_real(2, &[0.0, 1.0, 1.0, 0.0])
    }
    pub fn y() -> ComplexMatrix {
        ComplexMatrix::from_complex(2, &[ZERO, C64::new(0.0, -1.0), C64::new(0.0, 1.0), ZERO])
    }
    pub fn z() -> ComplexMatrix {
        ComplexMatrix::from_real(2, &[1.0, 0.0, 0.0, -1.0])
    }
    pub fn hadamard() -> ComplexMatrix {
        let s = std::f64::consts::FRAC_1_SQRT_2;
        ComplexMatrix::from_real(2, &[s, s, s, -s])
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rand_herm(n: usize, seed: u64) -> ComplexMatrix {
        // Small LCG keeps these unit tests free of extra dependencies.
        let mut s = seed
            .wrapping_mul(6364136223846793005)
            .wrapping_add(1442695040888963407);
        let mut next = || {
            s = s
                .wrapping_mul(6364136223846793005)
                .wrapping_add(1442695040888963407);
            ((s >> 11) as f64 / (1u64 << 53) as f64) * 2.0 - 1.0
        };
        let a = DMatrix::from_fn(n, n, |_, _| C64::new(next(), next()));
        ComplexMatrix::from_matrix(&a + a.adjoint())
    }

    #[test]
    fn canonical_factor_order() {
        // |0><0| ⊗ |1><1| must light up basis index 1 (first factor slowest).
        let p0 = ComplexMatrix::from_real(2, &[1.0, 0.0, 0.0, 0.0]);
        let p1 = ComplexMatrix::from_real(2, &[0.0, 0.0, 0.0, 1.0]);
        let t = tensor(&p0, &p1);
        assert_eq!(t.get(1, 1), ONE);
        assert_eq!(t.dims(), &[2, 2]);
        let t3 = ComplexMatrix::zeros(&[2, 3]);
        assert_eq!(t3.order(), 6);
    }

    #[test]
    fn tensor_identities() {
        let i4 = tensor(&pauli::i2(), &pauli::i2());
        assert!(i4.max_abs_diff(&ComplexMatrix::identity(&[4])) < 1e-15);
        let zz = tensor(&pauli::z(), &pauli::z());
        let expected = ComplexMatrix::from_real(
            4,
            &[
                1., 0., 0., 0., 0., -1., 0., 0., 0., 0., -1., 0., 0., 0., 0., 1.,
            ],
        );
        assert!(zz.max_abs_diff(&expected) < 1e-15);
    }

    #[test]
    fn partial_trace_of_product() {
        let a = rand_herm(2, 1);
        let b = rand_herm(3, 2);
        let ab = tensor(&a, &b);
        let ka = partial_trace(&ab, &[0]).unwrap();
        assert!(ka.max_abs_diff(&a.scale_c(b.trace())) < 1e-12);
        let kb = partial_trace(&ab, &[1]).unwrap();
        assert!(kb.max_abs_diff(&b.scale_c(a.trace())) < 1e-12);
        let all = partial_trace(&ab, &[]).unwrap();
        assert_eq!(all.order(), 1);
        assert!((all.get(0, 0) - ab.trace()).norm() < 1e-12);
        assert!(matches!(
            partial_trace(&ab, &[2]),
            Err(Error::InvalidFactor { index: 2, count: 2 })
        ));
    }

    #[test]
    fn partial_transpose_involution() {
        let m = rand_herm(4, 3).with_dims(vec![2, 2]).unwrap();
        let twice = partial_transpose(&partial_transpose(&m, 1).unwrap(), 1).unwrap();
        assert!(twice.max_abs_diff(&m) < 1e-15);
        let a = rand_herm(2, 4);
        let b = rand_herm(2, 5);
        let pt = partial_transpose(&tensor(&a, &b), 1).unwrap();
        assert!(pt.max_abs_diff(&tensor(&a, &b.transpose())) < 1e-14);
        assert!(partial_transpose(&m, 5).is_err());
    }

    #[test]
    fn eig_of_pauli_x_and_identity() {
        let e = hermitian_eig(&pauli::x()).unwrap();
        assert!((e.values[0] + 1.0).abs() < 1e-14 && (e.values[1] - 1.0).abs() < 1e-14);
        let e = hermitian_eig(&ComplexMatrix::identity(&[5])).unwrap();
        assert!(e.values.iter().all(|&l| (l - 1.0).abs() < 1e-14));
        let bad = ComplexMatrix::from_real(2, &[0.0, 1.0, 0.0, 0.0]);
        assert!(matches!(hermitian_eig(&bad), Err(Error::NotHermitian(_))));
    }

    #[test]
    fn eig_reconstructs() {
        for seed in 0..5 {
            let m = rand_herm(6, seed);
            let e = hermitian_eig(&m).unwrap();
            assert!(e.values.windows(2).all(|w| w[0] <= w[1]));
            let r = ComplexMatrix::from_matrix(e.reconstruct_with(|l| l));
            assert!(r.distance(&m) < 1e-10);
        }
    }

    #[test]
    fn svec_is_isometry() {
        let a = rand_herm(4, 7);
        let b = rand_herm(4, 8);
        let va = herm::svec(a.matrix());
        let vb = herm::svec(b.matrix());
        let dot: f64 = va.iter().zip(&vb).map(|(x, y)| x * y).sum();
        assert!((dot - a.inner(&b)).abs() < 1e-12);
        let back = herm::smat(&va, 4);
        assert!(ComplexMatrix::from_matrix(back).max_abs_diff(&a) < 1e-14);
        assert_eq!(herm::pair(4, 0), (0, 1));
        assert_eq!(herm::pair(4, 5), (2, 3));
    }

    #[test]
    fn schmidt_of_product_is_single_term() {
        let a = rand_herm(2, 11);
        let b = rand_herm(3, 12);
        let terms = operator_schmidt(&tensor(&a, &b), &[0]).unwrap();
        assert_eq!(terms.len(), 1);
        let w = a.frobenius_norm() * b.frobenius_norm();
        assert!((terms[0].weight - w).abs() < 1e-12 * w);
    }

    #[test]
    fn schmidt_of_swap_has_four_unit_terms() {
        let mut swap = ComplexMatrix::zeros(&[2, 2]);
        for i in 0..2 {
            for j in 0..2 {
                swap.set(i * 2 + j, j * 2 + i, ONE);
            }
        }
        let terms = operator_schmidt(&swap, &[0]).unwrap();
        assert_eq!(terms.len(), 4);
        for t in &terms {
            assert!((t.weight - 1.0).abs() < 1e-12);
        }
        let r = schmidt_reconstruct(&terms).unwrap();
        assert!(r.distance(&swap) < 1e-12);
    }

    #[test]
    fn schmidt_of_zero_is_empty() {
        let z = ComplexMatrix::zeros(&[2, 2]);
        assert!(operator_schmidt(&z, &[0]).unwrap().is_empty());
    }

    #[test]
    fn schmidt_factors_hermitian_unit_sorted() {
        let m = rand_herm(12, 21).with_dims(vec![3, 4]).unwrap();
        let terms = operator_schmidt(&m, &[0]).unwrap();
        assert!(terms.len() <= 9);
        assert!(terms.windows(2).all(|w| w[0].weight >= w[1].weight));
        for t in &terms {
            assert!(t.left.is_hermitian(1e-14) && t.right.is_hermitian(1e-14));
            assert!((t.left.frobenius_norm() - 1.0).abs() < 1e-12);
            assert!((t.right.frobenius_norm() - 1.0).abs() < 1e-12);
        }
        assert!(schmidt_reconstruct(&terms).unwrap().distance(&m) < 1e-10);
    }

    #[test]
    fn schmidt_noncontiguous_cut() {
        let a = rand_herm(2, 31);
        let b = rand_herm(2, 32);
        let c = rand_herm(2, 33);
        let m = tensor_all(&[&a, &b, &c]);
        // Cutting {0,2} | {1} of a product gives one term.
        let terms = operator_schmidt(&m, &[0, 2]).unwrap();
        assert_eq!(terms.len(), 1);
    }

    #[test]
    fn trace_and_replace_basics() {
        let a = rand_herm(2, 41);
        let b = rand_herm(3, 42);
        let ab = tensor(&a, &b);
        let r = trace_and_replace(&ab, 1).unwrap();
        let expected =
            tensor(&a, &ComplexMatrix::identity(&[3]).scale(1.0 / 3.0)).scale_c(b.trace());
        assert!(r.max_abs_diff(&expected) < 1e-13);
        let rr = trace_and_replace(&r, 1).unwrap();
        assert!(rr.max_abs_diff(&r) < 1e-14);
        assert!((r.trace() - ab.trace()).norm() < 1e-12);
    }

    #[test]
    fn trace_and_replace_commutes() {
        let m = rand_herm(8, 51).with_dims(vec![2, 2, 2]).unwrap();
        let ab = trace_and_replace(&trace_and_replace(&m, 0).unwrap(), 2).unwrap();
        let ba = trace_and_replace(&trace_and_replace(&m, 2).unwrap(), 0).unwrap();
        assert!(ab.max_abs_diff(&ba) < 1e-14);
        // Invariant under partial transpose on the replaced factor.
        let pt = partial_transpose(&ab, 0).unwrap();
        assert!(pt.max_abs_diff(&ab) < 1e-15);
    }

    #[test]
    fn permutation_round_trip() {
        let m = rand_herm(12, 61).with_dims(vec![2, 3, 2]).unwrap();
        let p = m.permute_factors(&[2, 0, 1]).unwrap();
        assert_eq!(p.dims(), &[2, 2, 3]);
        let back = p.permute_factors(&[1, 2, 0]).unwrap();
        assert!(back.max_abs_diff(&m) < 1e-15);
        let a = rand_herm(2, 62);
        let b = rand_herm(3, 63);
        let swapped = tensor(&a, &b).permute_factors(&[1, 0]).unwrap();
        assert!(swapped.max_abs_diff(&tensor(&b, &a)) < 1e-15);
    }

    #[test]
    fn group_decomposition_reconstructs() {
        let m = rand_herm(8, 71).with_dims(vec![2, 2, 2]).unwrap();
        let terms = operator_schmidt_groups(&m, &[vec![0], vec![1], vec![2]]).unwrap();
        let mut acc = ComplexMatrix::zeros(&[2, 2, 2]);
        for t in &terms {
            let refs: Vec<&ComplexMatrix> = t.factors.iter().collect();
            acc = &acc + &tensor_all(&refs).scale(t.weight);
        }
        assert!(acc.distance(&m) < 1e-10);
    }
}
