//! Linear maps on Hermitian blocks and the standard-form cone program
//!
//! ```text
//! minimize    Σ_b <c_b, X_b>
//! subject to  Σ_b A_b(X_b) = b,   X_b ⪰ 0 for every block
//! ```
//!
//! Blocks of order 1 are nonnegative scalars. All coordinates are taken in
//! the orthonormal Hermitian basis of [`crate::linalg::herm`].

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::linalg::{herm, C64};

/// Real-linear map `Herm(n_in) -> Herm(n_out)` stored as a dense matrix in
/// Hermitian coordinates (`n_out² x n_in²`).
#[derive(Clone, Debug, PartialEq)]
pub struct LinearMap {
    n_in: usize,
    n_out: usize,
    m: DMatrix<f64>,
}

impl LinearMap {
    /// Tabulates `f` on the Hermitian basis. `f` must be real-linear and map
    /// Hermitian matrices to Hermitian matrices.
    pub fn from_fn(n_in: usize, n_out: usize, f: impl Fn(&DMatrix<C64>) -> DMatrix<C64>) -> Self {
        let mut m = DMatrix::zeros(n_out * n_out, n_in * n_in);
        let mut col = vec![0.0; n_out * n_out];
        for k in 0..n_in * n_in {
            let out = f(&herm::basis_element(n_in, k));
            debug_assert_eq!(out.nrows(), n_out);
            herm::svec_into(&out, &mut col);
            m.column_mut(k).copy_from_slice(&col);
        }
        LinearMap { n_in, n_out, m }
    }

    pub fn identity(n: usize) -> Self {
        LinearMap {
            n_in: n,
            n_out: n,
            m: DMatrix::identity(n * n, n * n),
        }
    }

    /// Map from a scalar (order-1 block) to `t · target`.
    pub fn embed_scalar(target: &DMatrix<C64>) -> Self {
        let n = target.nrows();
        let v = herm::svec(target);
        LinearMap {
            n_in: 1,
            n_out: n,
            m: DMatrix::from_column_slice(n * n, 1, &v),
        }
    }

    /// Functional `X ↦ Re tr(Q X)` as a map into order-1 blocks.
    pub fn functional(q: &DMatrix<C64>) -> Self {
        let n = q.nrows();
        let v = herm::svec(q);
        LinearMap {
            n_in: n,
            n_out: 1,
            m: DMatrix::from_row_slice(1, n * n, &v),
        }
    }

    pub fn n_in(&self) -> usize {
        self.n_in
    }

    pub fn n_out(&self) -> usize {
        self.n_out
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.m
    }

    pub fn scaled(&self, s: f64) -> Self {
        LinearMap {
            n_in: self.n_in,
            n_out: self.n_out,
            m: &self.m * s,
        }
    }

    /// `self ∘ inner`.
    pub fn compose(&self, inner: &LinearMap) -> Self {
        assert_eq!(self.n_in, inner.n_out, "composition order mismatch");
        LinearMap {
            n_in: inner.n_in,
            n_out: self.n_out,
            m: &self.m * &inner.m,
        }
    }

    pub fn apply(&self, x: &DMatrix<C64>) -> DMatrix<C64> {
        let v = herm::svec(x);
        let out = &self.m * nalgebra::DVector::from_vec(v);
        herm::smat(out.as_slice(), self.n_out)
    }

    /// `Re tr(Q L(X)) = <L^*(Q), X>`: returns `L^*(Q)`.
    pub fn adjoint_apply(&self, q: &DMatrix<C64>) -> DMatrix<C64> {
        let v = herm::svec(q);
        let out = self.m.transpose() * nalgebra::DVector::from_vec(v);
        herm::smat(out.as_slice(), self.n_in)
    }
}

pub type VarId = usize;

/// Linear expression `Σ_k L_k(X_{v_k})` with values in `Herm(n_out)`.
#[derive(Clone, Debug, PartialEq)]
pub struct Expr {
    n_out: usize,
    terms: Vec<(VarId, LinearMap)>,
}

impl Expr {
    pub fn zero(n_out: usize) -> Self {
        Expr {
            n_out,
            terms: Vec::new(),
        }
    }

    pub fn var(id: VarId, n: usize) -> Self {
        Expr {
            n_out: n,
            terms: vec![(id, LinearMap::identity(n))],
        }
    }

    pub fn term(id: VarId, map: LinearMap) -> Self {
        Expr {
            n_out: map.n_out,
            terms: vec![(id, map)],
        }
    }

    pub fn n_out(&self) -> usize {
        self.n_out
    }

    pub fn terms(&self) -> &[(VarId, LinearMap)] {
        &self.terms
    }

    pub fn add_term(&mut self, id: VarId, map: LinearMap) {
        assert_eq!(map.n_out, self.n_out, "expression order mismatch");
        if let Some((_, existing)) = self.terms.iter_mut().find(|(v, _)| *v == id) {
            existing.m += &map.m;
        } else {
            self.terms.push((id, map));
        }
    }

    pub fn plus(mut self, other: &Expr) -> Self {
        for (id, map) in &other.terms {
            self.add_term(*id, map.clone());
        }
        self
    }

    pub fn scaled(&self, s: f64) -> Self {
        Expr {
            n_out: self.n_out,
            terms: self.terms.iter().map(|(v, m)| (*v, m.scaled(s))).collect(),
        }
    }

    /// `outer ∘ self`.
    pub fn then(&self, outer: &LinearMap) -> Self {
        Expr {
            n_out: outer.n_out,
            terms: self
                .terms
                .iter()
                .map(|(v, m)| (*v, outer.compose(m)))
                .collect(),
        }
    }

    pub fn eval(&self, values: &[DMatrix<C64>]) -> DMatrix<C64> {
        let mut acc = vec![0.0; self.n_out * self.n_out];
        for (v, map) in &self.terms {
            let x = herm::svec(&values[*v]);
            let y = &map.m * nalgebra::DVector::from_vec(x);
            for (a, b) in acc.iter_mut().zip(y.iter()) {
                *a += b;
            }
        }
        herm::smat(&acc, self.n_out)
    }
}

/// One scalar equality row `Σ_b <a_b, x_b> = rhs`.
#[derive(Clone, Debug, PartialEq)]
pub struct Row {
    pub terms: Vec<(VarId, Vec<f64>)>,
    pub rhs: f64,
}

/// Standard-form program over a product of Hermitian PSD blocks.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ConeProgram {
    blocks: Vec<usize>,
    c: Vec<Vec<f64>>,
    rows: Vec<Row>,
    /// Free-form provenance string carried into reports.
    pub label: String,
}

/// Largest admissible block order.
pub const MAX_BLOCK: usize = 256;
/// Soft cap on equality rows.
pub const MAX_ROWS: usize = 20_000;

impl ConeProgram {
    pub fn new(label: impl Into<String>) -> Self {
        ConeProgram {
            label: label.into(),
            ..Default::default()
        }
    }

    pub fn add_block(&mut self, n: usize) -> VarId {
        self.blocks.push(n);
        self.c.push(vec![0.0; n * n]);
        self.blocks.len() - 1
    }

    pub fn blocks(&self) -> &[usize] {
        &self.blocks
    }

    pub fn objective(&self) -> &[Vec<f64>] {
        &self.c
    }

    pub fn rows(&self) -> &[Row] {
        &self.rows
    }

    /// Adds `Re tr(Q · expr)` to the objective.
    pub fn add_objective(&mut self, expr: &Expr, q: &DMatrix<C64>) {
        let qv = nalgebra::DVector::from_vec(herm::svec(q));
        for (v, map) in &expr.terms {
            let g = map.m.transpose() * &qv;
            for (a, b) in self.c[*v].iter_mut().zip(g.iter()) {
                *a += b;
            }
        }
    }

    /// Adds the matrix equation `expr = rhs`, one row per Hermitian
    /// coordinate. Rows that vanish identically with zero right-hand side are
    /// skipped.
    pub fn add_equality(&mut self, expr: &Expr, rhs: &DMatrix<C64>) {
        let n = expr.n_out;
        assert_eq!(rhs.nrows(), n, "right-hand side order mismatch");
        let b = herm::svec(rhs);
        for (r, &rhs) in b.iter().enumerate().take(n * n) {
            let mut terms = Vec::new();
            for (v, map) in &expr.terms {
                let row: Vec<f64> = map.m.row(r).iter().cloned().collect();
                if row.iter().any(|&a| a != 0.0) {
                    terms.push((*v, row));
                }
            }
            if terms.is_empty() && rhs == 0.0 {
                continue;
            }
            self.rows.push(Row { terms, rhs });
        }
    }

    pub fn add_row(&mut self, row: Row) {
        self.rows.push(row);
    }

    /// Multiplies the objective by `s`.
    pub fn scale_objective(&mut self, s: f64) {
        for c in &mut self.c {
            for v in c.iter_mut() {
                *v *= s;
            }
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.blocks.is_empty() {
            return Err(Error::Structural("program has no variables".into()));
        }
        if let Some(&n) = self.blocks.iter().find(|&&n| n == 0 || n > MAX_BLOCK) {
            return Err(Error::Overflow(format!(
                "block of order {n} (cap {MAX_BLOCK})"
            )));
        }
        if self.rows.len() > MAX_ROWS {
            return Err(Error::Overflow(format!(
                "{} equality rows (cap {MAX_ROWS})",
                self.rows.len()
            )));
        }
        for row in &self.rows {
            for (v, a) in &row.terms {
                let n = *self.blocks.get(*v).ok_or_else(|| {
                    Error::Structural(format!("row references missing block {v}"))
                })?;
                if a.len() != n * n {
                    return Err(Error::Structural("row coefficient length mismatch".into()));
                }
            }
        }
        Ok(())
    }

    /// Objective value at a block assignment.
    pub fn objective_value(&self, x: &[DMatrix<C64>]) -> f64 {
        self.c
            .iter()
            .zip(x)
            .map(|(c, xb)| dot(c, &herm::svec(xb)))
            .sum()
    }

    /// Equality residuals `A(x) - b` at a block assignment.
    pub fn residuals(&self, x: &[DMatrix<C64>]) -> Vec<f64> {
        let xs: Vec<Vec<f64>> = x.iter().map(herm::svec).collect();
        self.rows
            .iter()
            .map(|r| r.terms.iter().map(|(v, a)| dot(a, &xs[*v])).sum::<f64>() - r.rhs)
            .collect()
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{partial_trace, ComplexMatrix};

    #[test]
    fn linear_map_matches_closure() {
        let pt = LinearMap::from_fn(4, 2, |x| {
            let m = ComplexMatrix::new(x.clone(), vec![2, 2]).unwrap();
            partial_trace(&m, &[0]).unwrap().into_matrix()
        });
        let x = DMatrix::from_fn(4, 4, |i, j| {
            C64::new((i + 2 * j) as f64, i as f64 - j as f64)
        });
        let x = &x + x.adjoint();
        let direct =
            partial_trace(&ComplexMatrix::new(x.clone(), vec![2, 2]).unwrap(), &[0]).unwrap();
        let via = pt.apply(&x);
        assert!((via - direct.into_matrix()).camax() < 1e-12);
    }

    #[test]
    fn adjoint_is_consistent() {
        let l = LinearMap::from_fn(2, 2, |x| x.transpose());
        let x = DMatrix::from_fn(2, 2, |i, j| C64::new(1.0 + i as f64, j as f64 - i as f64));
        let x = &x + x.adjoint();
        let q = DMatrix::from_fn(2, 2, |i, j| {
            C64::new((i * j) as f64, (i as f64) - (j as f64))
        });
        let lhs = (&q * l.apply(&x)).trace().re;
        let rhs = (l.adjoint_apply(&q) * &x).trace().re;
        assert!((lhs - rhs).abs() < 1e-12);
    }

    #[test]
    fn equality_rows_skip_trivial() {
        let mut p = ConeProgram::new("t");
        let v = p.add_block(2);
        let tr = LinearMap::functional(&DMatrix::identity(2, 2));
        p.add_equality(
            &Expr::term(v, tr),
            &DMatrix::from_element(1, 1, C64::new(1.0, 0.0)),
        );
        assert_eq!(p.rows().len(), 1);
        p.add_equality(&Expr::zero(2), &DMatrix::zeros(2, 2));
        assert_eq!(p.rows().len(), 1);
        let x = vec![DMatrix::identity(2, 2) * C64::new(0.5, 0.0)];
        assert!(p.residuals(&x)[0].abs() < 1e-15);
    }
}
