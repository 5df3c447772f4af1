//! Infeasible-start primal-dual path following with Nesterov-Todd scaling and
//! Mehrotra predictor-corrector steps.
//!
//! Dual program: maximize `b·y` subject to `c - A^T y = z`, `z ⪰ 0`.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use serde::{Deserialize, Serialize};

use super::program::{dot, ConeProgram};
use crate::error::Result;
use crate::linalg::{eig_hermitian_matrix, herm, C64};

#[derive(Clone, Debug, PartialEq)]
pub struct SolverOptions {
    /// Relative duality gap `|p - d| / max(1, |p|)` at termination.
    pub gap_tol: f64,
    /// Relative primal and dual infeasibility at termination.
    pub feas_tol: f64,
    pub max_iter: usize,
    /// Fraction of the distance to the cone boundary taken per step.
    pub step: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            gap_tol: 1e-9,
            feas_tol: 1e-10,
            max_iter: 120,
            step: 0.98,
        }
    }
}

impl SolverOptions {
    pub fn with_gap(gap_tol: f64) -> Self {
        SolverOptions {
            gap_tol,
            ..Default::default()
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Optimal,
    Infeasible,
    MaxIterations,
    IllConditioned,
}

impl std::fmt::Display for Status {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            Status::Optimal => "optimal",
            Status::Infeasible => "infeasible",
            Status::MaxIterations => "max_iterations",
            Status::IllConditioned => "ill_conditioned",
        };
        f.write_str(s)
    }
}

#[derive(Clone, Debug)]
pub struct Solution {
    pub status: Status,
    pub primal_value: f64,
    pub dual_value: f64,
    /// `|primal - dual| / max(1, |primal|)`.
    pub gap: f64,
    /// Largest absolute equality residual over all original rows.
    pub primal_residual: f64,
    /// Largest absolute entry of `c - A^T y - z`.
    pub dual_residual: f64,
    /// `Σ_b <X_b, Z_b>`.
    pub complementarity: f64,
    pub x: Vec<DMatrix<C64>>,
    pub z: Vec<DMatrix<C64>>,
    /// One multiplier per original row; dropped dependent rows get 0.
    pub y: Vec<f64>,
    pub iterations: usize,
    pub rows_used: usize,
    pub message: String,
}

impl Solution {
    pub fn is_optimal(&self) -> bool {
        self.status == Status::Optimal
    }
}

struct Block {
    n: usize,
    a: DMatrix<f64>,
    c: DVector<f64>,
}

struct Reduced {
    blocks: Vec<Block>,
    b: DVector<f64>,
    keep: Vec<usize>,
    norms: Vec<f64>,
}

/// Threshold on the squared residual norm of a normalized row against the
/// span of the rows kept before it.
const DEPENDENT_ROW_TOL: f64 = 1e-10;
const INCONSISTENT_ROW_TOL: f64 = 1e-7;

fn reduce(p: &ConeProgram) -> std::result::Result<Reduced, String> {
    let rows = p.rows();
    let nb = p.blocks().len();
    let mut norms = vec![0.0; rows.len()];
    let mut candidates = Vec::new();
    for (i, r) in rows.iter().enumerate() {
        let nn: f64 = r.terms.iter().map(|(_, a)| dot(a, a)).sum();
        if nn == 0.0 {
            if r.rhs.abs() > 1e-12 {
                return Err(format!("row {i} reads 0 = {}", r.rhs));
            }
            continue;
        }
        norms[i] = nn.sqrt();
        candidates.push(i);
    }

    // Gram matrix of the normalized rows, accumulated block by block.
    let m0 = candidates.len();
    let mut gram = DMatrix::<f64>::zeros(m0, m0);
    for v in 0..nb {
        let n2 = p.blocks()[v] * p.blocks()[v];
        let mut touching = Vec::new();
        for (k, &i) in candidates.iter().enumerate() {
            if let Some((_, a)) = rows[i].terms.iter().find(|(b, _)| *b == v) {
                touching.push((k, a, norms[i]));
            }
        }
        if touching.is_empty() {
            continue;
        }
        let local = DMatrix::from_fn(touching.len(), n2, |r, c| touching[r].1[c] / touching[r].2);
        let g = &local * local.transpose();
        for (r, &(kr, _, _)) in touching.iter().enumerate() {
            for (s, &(ks, _, _)) in touching.iter().enumerate() {
                gram[(kr, ks)] += g[(r, s)];
            }
        }
    }

    // Greedy selection in row order via an incremental Cholesky factor.
    let mut kept: Vec<usize> = Vec::new();
    let mut lrows: Vec<Vec<f64>> = Vec::new();
    let mut dropped: Vec<(usize, Vec<f64>)> = Vec::new();
    for k in 0..m0 {
        let mut l = Vec::with_capacity(kept.len() + 1);
        for (t, &kt) in kept.iter().enumerate() {
            let s: f64 = (0..t).map(|u| lrows[t][u] * l[u]).sum();
            l.push((gram[(kt, k)] - s) / lrows[t][t]);
        }
        let res = gram[(k, k)] - l.iter().map(|v| v * v).sum::<f64>();
        if res > DEPENDENT_ROW_TOL {
            l.push(res.sqrt());
            lrows.push(l);
            kept.push(k);
        } else {
            dropped.push((k, l));
        }
    }
    // A dropped row equals sum_t c_t (kept row t) with L^T c = l; its
    // right-hand side has to follow the same combination.
    let rhs = |k: usize| rows[candidates[k]].rhs / norms[candidates[k]];
    for (k, l) in &dropped {
        let mut coef = l.clone();
        for t in (0..coef.len()).rev() {
            let s: f64 = (t + 1..coef.len()).map(|u| lrows[u][t] * coef[u]).sum();
            coef[t] = (coef[t] - s) / lrows[t][t];
        }
        let predicted: f64 = coef.iter().zip(&kept).map(|(c, &kt)| c * rhs(kt)).sum();
        let scale = 1.0
            + coef
                .iter()
                .zip(&kept)
                .map(|(c, &kt)| (c * rhs(kt)).abs())
                .sum::<f64>();
        if (rhs(*k) - predicted).abs() > INCONSISTENT_ROW_TOL * scale {
            return Err(format!(
                "row {} is a combination of earlier rows with a different right-hand side",
                candidates[*k]
            ));
        }
    }
    let keep: Vec<usize> = kept.iter().map(|&k| candidates[k]).collect();
    let m = keep.len();

    let mut blocks: Vec<Block> = p
        .blocks()
        .iter()
        .zip(p.objective())
        .map(|(&n, c)| Block {
            n,
            a: DMatrix::zeros(m, n * n),
            c: DVector::from_column_slice(c),
        })
        .collect();
    let mut b = DVector::zeros(m);
    for (r, &i) in keep.iter().enumerate() {
        let s = 1.0 / norms[i];
        for (v, a) in &rows[i].terms {
            let mut row = blocks[*v].a.row_mut(r);
            for (dst, src) in row.iter_mut().zip(a) {
                *dst += src * s;
            }
        }
        b[r] = rows[i].rhs * s;
    }
    Ok(Reduced {
        blocks,
        b,
        keep,
        norms,
    })
}

fn svec_dv(m: &DMatrix<C64>) -> DVector<f64> {
    DVector::from_vec(herm::svec(m))
}

fn smat_dv(v: &DVector<f64>, n: usize) -> DMatrix<C64> {
    herm::smat(v.as_slice(), n)
}

fn hermitize(m: &DMatrix<C64>) -> DMatrix<C64> {
    (m + m.adjoint()) * C64::new(0.5, 0.0)
}

fn inner(a: &DMatrix<C64>, b: &DMatrix<C64>) -> f64 {
    a.iter()
        .zip(b.iter())
        .map(|(x, y)| x.re * y.re + x.im * y.im)
        .sum()
}

/// Nesterov-Todd scaling of one block: `G^H Z G = G^{-1} X G^{-H} = diag(λ)`.
struct Scaling {
    g: DMatrix<C64>,
    ginv: DMatrix<C64>,
    lambda: Vec<f64>,
    w: DMatrix<C64>,
}

fn nt_scaling(x: &DMatrix<C64>, z: &DMatrix<C64>) -> Option<Scaling> {
    let lx = Cholesky::new(x.clone())?.l();
    let lz = Cholesky::new(z.clone())?.l();
    let prod = lz.adjoint() * &lx;
    let svd = prod.svd(true, true);
    let u = svd.u?;
    let vt = svd.v_t?;
    let lambda: Vec<f64> = svd.singular_values.iter().cloned().collect();
    if lambda
        .iter()
        .any(|&l| l.is_nan() || l <= 0.0 || !l.is_finite())
    {
        return None;
    }
    let n = x.nrows();
    let mut g = lx * vt.adjoint();
    let mut ginv = u.adjoint() * lz.adjoint();
    for k in 0..n {
        let s = lambda[k].sqrt();
        for i in 0..n {
            g[(i, k)] /= s;
            ginv[(k, i)] /= s;
        }
    }
    let w = &g * g.adjoint();
    Some(Scaling {
        g,
        ginv,
        lambda,
        w: hermitize(&w),
    })
}

/// Dense matrix of `V ↦ W V W` in Hermitian coordinates.
fn congruence_matrix(w: &DMatrix<C64>) -> DMatrix<f64> {
    let n = w.nrows();
    let mut out = DMatrix::zeros(n * n, n * n);
    let mut col = vec![0.0; n * n];
    for k in 0..n * n {
        let e = herm::basis_element(n, k);
        let v = w * e * w;
        herm::svec_into(&v, &mut col);
        out.column_mut(k).copy_from_slice(&col);
    }
    out
}

/// Largest `α ≤ cap` keeping `diag(λ) + α D` positive semidefinite.
fn max_step(lambda: &[f64], d: &DMatrix<C64>) -> f64 {
    let n = lambda.len();
    let inv: Vec<f64> = lambda.iter().map(|l| 1.0 / l.sqrt()).collect();
    let m = DMatrix::from_fn(n, n, |i, j| d[(i, j)] * (inv[i] * inv[j]));
    let e = eig_hermitian_matrix(&hermitize(&m));
    let lmin = e.values[0];
    if lmin < 0.0 {
        -1.0 / lmin
    } else {
        f64::INFINITY
    }
}

fn factor_schur(m: &DMatrix<f64>) -> Option<Cholesky<f64, Dyn>> {
    if let Some(c) = Cholesky::new(m.clone()) {
        return Some(c);
    }
    let scale = (0..m.nrows())
        .map(|i| m[(i, i)].abs())
        .fold(1e-300, f64::max);
    let mut reg = 1e-14;
    while reg <= 1e-8 {
        let mut mm = m.clone();
        for i in 0..mm.nrows() {
            mm[(i, i)] += reg * scale;
        }
        if let Some(c) = Cholesky::new(mm) {
            return Some(c);
        }
        reg *= 100.0;
    }
    None
}

const REFINE_STEPS: usize = 3;

/// Solves the program. Structural problems are errors; numerical trouble is
/// reported through [`Solution::status`] together with the last iterate.
pub fn solve(p: &ConeProgram, opts: &SolverOptions) -> Result<Solution> {
    p.validate()?;
    let nb = p.blocks().len();
    let reduced = match reduce(p) {
        Ok(r) => r,
        Err(msg) => {
            let x: Vec<DMatrix<C64>> = p.blocks().iter().map(|&n| DMatrix::zeros(n, n)).collect();
            return Ok(finish(p, Status::Infeasible, x.clone(), x, None, 0, 0, msg));
        }
    };
    let Reduced {
        blocks,
        b,
        keep,
        norms,
    } = reduced;
    let m = b.len();
    let n_total: usize = blocks.iter().map(|bl| bl.n).sum();
    let bnorm = b.norm();
    let cnorm = blocks
        .iter()
        .map(|bl| bl.c.norm_squared())
        .sum::<f64>()
        .sqrt();

    let mut x: Vec<DMatrix<C64>> = blocks
        .iter()
        .map(|bl| DMatrix::identity(bl.n, bl.n))
        .collect();
    let mut z: Vec<DMatrix<C64>> = x.clone();
    let mut y = DVector::<f64>::zeros(m);

    let mut status = Status::MaxIterations;
    let mut message = String::new();
    let mut iter = 0;
    while iter < opts.max_iter {
        // Residuals.
        let mut rp = b.clone();
        let mut rd: Vec<DVector<f64>> = Vec::with_capacity(nb);
        let mut pobj = 0.0;
        for (k, bl) in blocks.iter().enumerate() {
            let xv = svec_dv(&x[k]);
            rp -= &bl.a * &xv;
            pobj += bl.c.dot(&xv);
            rd.push(&bl.c - bl.a.transpose() * &y - svec_dv(&z[k]));
        }
        let dobj = b.dot(&y);
        let pinf = rp.norm() / (1.0 + bnorm);
        let dinf = rd.iter().map(|v| v.norm_squared()).sum::<f64>().sqrt() / (1.0 + cnorm);
        let gap = (pobj - dobj).abs() / pobj.abs().max(1.0);
        let xz: f64 = x.iter().zip(&z).map(|(a, c)| inner(a, c)).sum();
        let mu = xz / n_total as f64;

        if pinf <= opts.feas_tol && dinf <= opts.feas_tol && gap <= opts.gap_tol {
            status = Status::Optimal;
            break;
        }
        if y.amax() > 1e10 && dinf < 1e-6 {
            status = Status::Infeasible;
            message = "dual iterates diverge: primal infeasible".into();
            break;
        }
        if x.iter().map(|v| v.camax()).fold(0.0, f64::max) > 1e10 && pinf < 1e-6 {
            status = Status::Infeasible;
            message = "primal iterates diverge: dual infeasible".into();
            break;
        }

        // Scaling and Schur complement.
        let mut scal = Vec::with_capacity(nb);
        for k in 0..nb {
            match nt_scaling(&x[k], &z[k]) {
                Some(s) => scal.push(s),
                None => {
                    status = Status::IllConditioned;
                    message = format!("iterate lost definiteness in block {k}");
                    break;
                }
            }
        }
        if status == Status::IllConditioned {
            break;
        }
        let mut schur = DMatrix::<f64>::zeros(m, m);
        let mut aw: Vec<DMatrix<f64>> = Vec::with_capacity(nb);
        for (k, bl) in blocks.iter().enumerate() {
            let t = &bl.a * congruence_matrix(&scal[k].w);
            schur += &t * bl.a.transpose();
            aw.push(t);
        }
        let schur = (&schur + schur.transpose()) * 0.5;
        let Some(chol) = factor_schur(&schur) else {
            status = Status::IllConditioned;
            message = "Schur complement is singular".into();
            break;
        };

        // Solves for a given complementarity right-hand side (scaled space).
        let direction =
            |rc: &[DMatrix<C64>]| -> (Vec<DMatrix<C64>>, Vec<DMatrix<C64>>, DVector<f64>) {
                let mut gs = Vec::with_capacity(nb);
                let mut rhs = rp.clone();
                for (k, bl) in blocks.iter().enumerate() {
                    let s = &scal[k];
                    let n = bl.n;
                    let d = DMatrix::from_fn(n, n, |i, j| {
                        rc[k][(i, j)] * (2.0 / (s.lambda[i] + s.lambda[j]))
                    });
                    let g = hermitize(&(&s.g * d * s.g.adjoint()));
                    rhs -= &bl.a * svec_dv(&g);
                    rhs += &aw[k] * &rd[k];
                    gs.push(g);
                }
                let mut dy = chol.solve(&rhs);
                let recover = |dy: &DVector<f64>| {
                    let mut dxs = Vec::with_capacity(nb);
                    let mut dzs = Vec::with_capacity(nb);
                    let mut res = rp.clone();
                    for (k, bl) in blocks.iter().enumerate() {
                        let dzv = &rd[k] - bl.a.transpose() * dy;
                        let dz = smat_dv(&dzv, bl.n);
                        let w = &scal[k].w;
                        let dx = hermitize(&(&gs[k] - w * &dz * w));
                        res -= &bl.a * svec_dv(&dx);
                        dxs.push(dx);
                        dzs.push(dz);
                    }
                    (dxs, dzs, res)
                };
                let (mut dxs, mut dzs, mut res) = recover(&dy);
                // Iterative refinement: A dx is affine in dy with slope equal
                // to the Schur complement.
                for _ in 0..REFINE_STEPS {
                    if res.norm() <= 1e-15 * (1.0 + rp.norm()) {
                        break;
                    }
                    let cand = &dy + chol.solve(&res);
                    let (cx, cz, cr) = recover(&cand);
                    if cr.norm() >= res.norm() {
                        break;
                    }
                    (dy, dxs, dzs, res) = (cand, cx, cz, cr);
                }
                (dxs, dzs, dy)
            };
        let steps = |dxs: &[DMatrix<C64>],
                     dzs: &[DMatrix<C64>]|
         -> (f64, f64, Vec<DMatrix<C64>>, Vec<DMatrix<C64>>) {
            let mut ap = f64::INFINITY;
            let mut ad = f64::INFINITY;
            let mut sx = Vec::with_capacity(nb);
            let mut sz = Vec::with_capacity(nb);
            for k in 0..nb {
                let s = &scal[k];
                let dxt = hermitize(&(&s.ginv * &dxs[k] * s.ginv.adjoint()));
                let dzt = hermitize(&(s.g.adjoint() * &dzs[k] * &s.g));
                ap = ap.min(max_step(&s.lambda, &dxt));
                ad = ad.min(max_step(&s.lambda, &dzt));
                sx.push(dxt);
                sz.push(dzt);
            }
            (ap, ad, sx, sz)
        };

        // Predictor.
        let rc_aff: Vec<DMatrix<C64>> = scal
            .iter()
            .map(|s| {
                DMatrix::from_diagonal(&DVector::from_iterator(
                    s.lambda.len(),
                    s.lambda.iter().map(|l| C64::new(-l * l, 0.0)),
                ))
            })
            .collect();
        let (dx_a, dz_a, _) = direction(&rc_aff);
        let (ap, ad, dxt_a, dzt_a) = steps(&dx_a, &dz_a);
        let ap = ap.min(1.0);
        let ad = ad.min(1.0);
        let mut xz_aff = 0.0;
        for k in 0..nb {
            let xa = &x[k] + &dx_a[k] * C64::new(ap, 0.0);
            let za = &z[k] + &dz_a[k] * C64::new(ad, 0.0);
            xz_aff += inner(&xa, &za);
        }
        let mu_aff = xz_aff / n_total as f64;
        let mut sigma = (mu_aff / mu).clamp(0.0, 1.0).powi(3);
        // Keep the centering target above the remaining infeasibility so the
        // iterates do not hug the boundary before the equalities are met.
        let infeas = pinf.max(dinf);
        if infeas > opts.feas_tol {
            sigma = sigma.max((0.1 * infeas / mu).min(1.0));
        }

        // Corrector.
        let rc: Vec<DMatrix<C64>> = (0..nb)
            .map(|k| {
                let s = &scal[k];
                let n = s.lambda.len();
                let cross = hermitize(&(&dxt_a[k] * &dzt_a[k]));
                DMatrix::from_fn(n, n, |i, j| {
                    let mut v = -cross[(i, j)];
                    if i == j {
                        v += C64::new(sigma * mu - s.lambda[i] * s.lambda[i], 0.0);
                    }
                    v
                })
            })
            .collect();
        let (dx, dz, dy) = direction(&rc);
        let (ap, ad, _, _) = steps(&dx, &dz);
        let ap = (opts.step * ap).min(1.0);
        let ad = (opts.step * ad).min(1.0);
        for k in 0..nb {
            x[k] = hermitize(&(&x[k] + &dx[k] * C64::new(ap, 0.0)));
            z[k] = hermitize(&(&z[k] + &dz[k] * C64::new(ad, 0.0)));
        }
        y += dy * ad;
        iter += 1;
        if ap < 1e-10 && ad < 1e-10 {
            status = Status::IllConditioned;
            message = "step lengths collapsed".into();
            break;
        }
    }

    // Map multipliers back to the original rows.
    let mut y_full = vec![0.0; p.rows().len()];
    for (r, &i) in keep.iter().enumerate() {
        y_full[i] = y[r] / norms[i];
    }
    Ok(finish(p, status, x, z, Some(y_full), iter, m, message))
}

#[allow(clippy::too_many_arguments)]
fn finish(
    p: &ConeProgram,
    status: Status,
    x: Vec<DMatrix<C64>>,
    z: Vec<DMatrix<C64>>,
    y: Option<Vec<f64>>,
    iterations: usize,
    rows_used: usize,
    message: String,
) -> Solution {
    let y = y.unwrap_or_else(|| vec![0.0; p.rows().len()]);
    let primal_value = p.objective_value(&x);
    let dual_value = p.rows().iter().zip(&y).map(|(r, v)| r.rhs * v).sum::<f64>();
    let primal_residual = p.residuals(&x).iter().fold(0.0f64, |a, r| a.max(r.abs()));
    // c - A^T y - z over all original rows.
    let mut aty: Vec<Vec<f64>> = p.blocks().iter().map(|&n| vec![0.0; n * n]).collect();
    for (r, &yr) in p.rows().iter().zip(&y) {
        if yr == 0.0 {
            continue;
        }
        for (v, a) in &r.terms {
            for (dst, src) in aty[*v].iter_mut().zip(a) {
                *dst += src * yr;
            }
        }
    }
    let mut dual_residual: f64 = 0.0;
    for (k, c) in p.objective().iter().enumerate() {
        let zv = herm::svec(&z[k]);
        for i in 0..c.len() {
            dual_residual = dual_residual.max((c[i] - aty[k][i] - zv[i]).abs());
        }
    }
    let complementarity = x.iter().zip(&z).map(|(a, b)| inner(a, b)).sum();
    Solution {
        status,
        primal_value,
        dual_value,
        gap: (primal_value - dual_value).abs() / primal_value.abs().max(1.0),
        primal_residual,
        dual_residual,
        complementarity,
        x,
        z,
        y,
        iterations,
        rows_used,
        message,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::solver::program::{Expr, LinearMap, Row};

    fn c(re: f64) -> C64 {
        C64::new(re, 0.0)
    }

    #[test]
    fn trace_minimization_over_shifted_cone() {
        // minimize tr X  s.t.  X - S = A, X, S ⪰ 0: value Σ max(λ_i(A), 0).
        let a = DMatrix::from_row_slice(
            3,
            3,
            &[
                c(1.0),
                c(2.0),
                c(0.0),
                c(2.0),
                c(-1.0),
                c(0.5),
                c(0.0),
                c(0.5),
                c(0.3),
            ],
        );
        let mut p = ConeProgram::new("shift");
        let xv = p.add_block(3);
        let sv = p.add_block(3);
        p.add_objective(&Expr::var(xv, 3), &DMatrix::identity(3, 3));
        let e = Expr::var(xv, 3).plus(&Expr::var(sv, 3).scaled(-1.0));
        p.add_equality(&e, &a);
        let sol = solve(&p, &SolverOptions::default()).unwrap();
        assert_eq!(sol.status, Status::Optimal, "{}", sol.message);
        let eig = eig_hermitian_matrix(&a);
        let expected: f64 = eig.values.iter().map(|l| l.max(0.0)).sum();
        assert!(
            (sol.primal_value - expected).abs() < 1e-7,
            "{} vs {expected}",
            sol.primal_value
        );
        assert!(sol.gap < 1e-8);
    }

    #[test]
    fn scalar_lp() {
        // minimize x1 + 2 x2  s.t. x1 + x2 = 1  ->  1
        let mut p = ConeProgram::new("lp");
        let a = p.add_block(1);
        let b = p.add_block(1);
        p.add_objective(&Expr::var(a, 1), &DMatrix::from_element(1, 1, c(1.0)));
        p.add_objective(&Expr::var(b, 1), &DMatrix::from_element(1, 1, c(2.0)));
        p.add_row(Row {
            terms: vec![(a, vec![1.0]), (b, vec![1.0])],
            rhs: 1.0,
        });
        let sol = solve(&p, &SolverOptions::default()).unwrap();
        assert!(sol.is_optimal());
        assert!((sol.primal_value - 1.0).abs() < 1e-8);
        assert!((sol.dual_value - 1.0).abs() < 1e-8);
    }

    #[test]
    fn dependent_rows_are_dropped() {
        let mut p = ConeProgram::new("dup");
        let a = p.add_block(2);
        let tr = LinearMap::functional(&DMatrix::identity(2, 2));
        let one = DMatrix::from_element(1, 1, c(1.0));
        p.add_equality(&Expr::term(a, tr.clone()), &one);
        p.add_equality(&Expr::term(a, tr.scaled(2.0)), &(one.clone() * c(2.0)));
        let q = DMatrix::from_row_slice(2, 2, &[c(1.0), c(0.0), c(0.0), c(-1.0)]);
        p.add_objective(&Expr::var(a, 2), &q);
        let sol = solve(&p, &SolverOptions::default()).unwrap();
        assert!(sol.is_optimal(), "{}", sol.message);
        assert_eq!(sol.rows_used, 1);
        assert!((sol.primal_value + 1.0).abs() < 1e-8);
    }

    #[test]
    fn inconsistent_dependent_rows_are_infeasible() {
        let mut p = ConeProgram::new("clash");
        let a = p.add_block(2);
        let tr = LinearMap::functional(&DMatrix::identity(2, 2));
        let one = DMatrix::from_element(1, 1, c(1.0));
        p.add_equality(&Expr::term(a, tr.clone()), &one);
        p.add_equality(&Expr::term(a, tr.scaled(2.0)), &(one.clone() * c(3.0)));
        let sol = solve(&p, &SolverOptions::default()).unwrap();
        assert_eq!(sol.status, Status::Infeasible);
    }

    #[test]
    fn inconsistent_zero_row_is_infeasible() {
        let mut p = ConeProgram::new("bad");
        p.add_block(1);
        p.add_row(Row {
            terms: vec![],
            rhs: 1.0,
        });
        let sol = solve(&p, &SolverOptions::default()).unwrap();
        assert_eq!(sol.status, Status::Infeasible);
    }
}
