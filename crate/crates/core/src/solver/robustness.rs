//! Robustness, witness and support-function programs built from a
//! [`ConicFreeSet`].

use nalgebra::DMatrix;
use serde::Serialize;

use super::ipm::{solve, Solution, SolverOptions, Status};
use super::program::{ConeProgram, Expr, LinearMap, VarId};
use crate::error::{Error, Result};
use crate::free_sets::ConicFreeSet;
use crate::linalg::{eig_hermitian_matrix, C64, ONE};
use crate::objects::{BlockLayout, ChoiObject};

#[derive(Clone, Debug, Default)]
pub struct RobustnessOptions {
    pub solver: SolverOptions,
}

/// Program blocks holding the set variables and inequality slacks.
struct Embedded {
    vars: Vec<VarId>,
}

fn remap(e: &Expr, ids: &[VarId]) -> Expr {
    let mut out = Expr::zero(e.n_out());
    for (v, m) in e.terms() {
        out.add_term(ids[*v], m.clone());
    }
    out
}

fn zeros(n: usize) -> DMatrix<C64> {
    DMatrix::zeros(n, n)
}

/// Adds the set's variables and homogeneous constraints to `p`.
fn embed(p: &mut ConeProgram, f: &ConicFreeSet) -> Embedded {
    let vars: Vec<VarId> = f.vars().iter().map(|&n| p.add_block(n)).collect();
    for e in f.equalities() {
        p.add_equality(&remap(e, &vars), &zeros(e.n_out()));
    }
    for e in f.inequalities() {
        let s = p.add_block(e.n_out());
        let expr = remap(e, &vars).plus(&Expr::var(s, e.n_out()).scaled(-1.0));
        p.add_equality(&expr, &zeros(e.n_out()));
    }
    Embedded { vars }
}

fn fix_alpha(p: &mut ConeProgram, f: &ConicFreeSet, emb: &Embedded) {
    p.add_equality(
        &Expr::var(emb.vars[f.alpha()], 1),
        &DMatrix::from_element(1, 1, ONE),
    );
}

fn var_values(sol: &Solution, emb: &Embedded) -> Vec<DMatrix<C64>> {
    emb.vars.iter().map(|&v| sol.x[v].clone()).collect()
}

/// Dual witness for a robustness program: one Hermitian operator per block.
#[derive(Clone, Debug, Serialize)]
pub struct Witness {
    pub layout: BlockLayout,
    #[serde(serialize_with = "serialize_blocks")]
    pub blocks: Vec<DMatrix<C64>>,
}

pub(crate) fn serialize_blocks<S: serde::Serializer>(
    blocks: &[DMatrix<C64>],
    s: S,
) -> std::result::Result<S::Ok, S::Error> {
    let raw: Vec<Vec<Vec<[f64; 2]>>> = blocks
        .iter()
        .map(|m| {
            (0..m.nrows())
                .map(|i| {
                    (0..m.ncols())
                        .map(|j| [m[(i, j)].re, m[(i, j)].im])
                        .collect()
                })
                .collect()
        })
        .collect();
    serde::Serialize::serialize(&raw, s)
}

impl Witness {
    /// `Σ_b Re tr[Y_b J_b]`.
    pub fn value(&self, candidate: &ChoiObject) -> f64 {
        self.blocks
            .iter()
            .zip(candidate.blocks())
            .map(|(y, j)| (y * j.matrix()).trace().re)
            .sum()
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.blocks
            .iter()
            .map(|y| eig_hermitian_matrix(y).values[0])
            .fold(f64::INFINITY, f64::min)
    }
}

#[derive(Clone, Debug)]
pub struct RobustnessResult {
    pub status: Status,
    /// Optimal value `1 + R` of the primal program.
    pub value: f64,
    pub robustness: f64,
    pub dual_value: f64,
    pub gap: f64,
    pub witness: Witness,
    /// Normalized free object `G / (1 + R)`.
    pub free_point: Vec<DMatrix<C64>>,
    /// Normalized noise `S / R` (absent when `R` is negligible).
    pub noise: Option<Vec<DMatrix<C64>>>,
    pub solution: Solution,
}

impl RobustnessResult {
    pub fn require_optimal(self) -> Result<Self> {
        if self.status == Status::Optimal {
            Ok(self)
        } else {
            Err(Error::Solver(format!(
                "robustness program ended with status {} (gap {:e}, {})",
                self.status, self.gap, self.solution.message
            )))
        }
    }
}

/// Primal robustness program with the block ids of the candidate slacks.
pub struct RobustnessProgram {
    pub program: ConeProgram,
    vars: Embedded,
    slacks: Vec<VarId>,
}

/// `min (1/|X|) Σ_x tr G_x` subject to `G ∈ cone(F)`, `G_x - S_x = J_x`,
/// `S_x ⪰ 0`.
pub fn build_robustness_primal(
    candidate: &ChoiObject,
    f: &ConicFreeSet,
) -> Result<RobustnessProgram> {
    f.check_layout(&candidate.layout())?;
    let mut p = ConeProgram::new(format!("robustness/{}", f.tag().name()));
    let emb = embed(&mut p, f);
    let n = f.layout().block_order();
    let inv = 1.0 / f.n_devices() as f64;
    let id = DMatrix::<C64>::identity(n, n) * C64::new(inv, 0.0);
    let mut slacks = Vec::new();
    for (cand, j) in f.candidates().iter().zip(candidate.blocks()) {
        let s = p.add_block(n);
        let g = remap(cand, &emb.vars);
        p.add_objective(&g, &id);
        p.add_equality(&g.plus(&Expr::var(s, n).scaled(-1.0)), j.matrix());
        slacks.push(s);
    }
    Ok(RobustnessProgram {
        program: p,
        vars: emb,
        slacks,
    })
}

/// Witness `Y_x`: the dual slack of the candidate slack block `S_x`.
pub fn extract_witness(sol: &Solution, prog: &RobustnessProgram, layout: &BlockLayout) -> Witness {
    let blocks = prog
        .slacks
        .iter()
        .map(|&s| {
            let z = &sol.z[s];
            (z + z.adjoint()) * C64::new(0.5, 0.0)
        })
        .collect();
    Witness {
        layout: layout.clone(),
        blocks,
    }
}

/// Generalized robustness of `candidate` with respect to `f`.
pub fn robustness(
    candidate: &ChoiObject,
    f: &ConicFreeSet,
    opts: &RobustnessOptions,
) -> Result<RobustnessResult> {
    let prog = build_robustness_primal(candidate, f)?;
    let sol = solve(&prog.program, &opts.solver)?;
    let witness = extract_witness(&sol, &prog, f.layout());
    let values = var_values(&sol, &prog.vars);
    let cands = f.eval_candidates(&values);
    let value = sol.primal_value;
    let r = value - 1.0;
    let scale = C64::new(1.0 / value.max(f64::MIN_POSITIVE), 0.0);
    let free_point = cands.iter().map(|g| g * scale).collect();
    let noise = (r > 1e-6).then(|| {
        prog.slacks
            .iter()
            .map(|&s| &sol.x[s] * C64::new(1.0 / r, 0.0))
            .collect()
    });
    Ok(RobustnessResult {
        status: sol.status,
        value,
        robustness: r,
        dual_value: sol.dual_value,
        gap: sol.gap,
        witness,
        free_point,
        noise,
        solution: sol,
    })
}

/// Optimum of `Σ_b Re tr[Q_b T_b]` over `T ∈ F`.
#[derive(Clone, Debug)]
pub struct Extremum {
    pub status: Status,
    /// Value at the returned point.
    pub value: f64,
    /// Dual bound (upper bound for maxima, lower bound for minima).
    pub bound: f64,
    pub point: Vec<DMatrix<C64>>,
    pub solution: Solution,
}

fn optimize_over_set(
    f: &ConicFreeSet,
    q: &[DMatrix<C64>],
    maximize: bool,
    opts: &RobustnessOptions,
) -> Result<Extremum> {
    if q.len() != f.candidates().len() {
        return Err(Error::dims(format!(
            "{} weight blocks for {} candidate blocks",
            q.len(),
            f.candidates().len()
        )));
    }
    let mut p = ConeProgram::new(format!("support/{}", f.tag().name()));
    let emb = embed(&mut p, f);
    fix_alpha(&mut p, f, &emb);
    let sign = if maximize { -1.0 } else { 1.0 };
    for (cand, qb) in f.candidates().iter().zip(q) {
        p.add_objective(&remap(cand, &emb.vars), &(qb * C64::new(sign, 0.0)));
    }
    let sol = solve(&p, &opts.solver)?;
    let point = f.eval_candidates(&var_values(&sol, &emb));
    Ok(Extremum {
        status: sol.status,
        value: sign * sol.primal_value,
        bound: sign * sol.dual_value,
        point,
        solution: sol,
    })
}

pub fn max_over_set(
    f: &ConicFreeSet,
    q: &[DMatrix<C64>],
    opts: &RobustnessOptions,
) -> Result<Extremum> {
    optimize_over_set(f, q, true, opts)
}

pub fn min_over_set(
    f: &ConicFreeSet,
    q: &[DMatrix<C64>],
    opts: &RobustnessOptions,
) -> Result<Extremum> {
    optimize_over_set(f, q, false, opts)
}

#[derive(Clone, Debug, Serialize)]
pub struct WitnessCheck {
    pub min_eigenvalue: f64,
    /// `max_{T ∈ F} Σ tr[Y T]`.
    pub free_max: f64,
    /// `Σ tr[Y J]` for the candidate.
    pub value: f64,
    pub pass: bool,
}

/// Witness checks: `Y ⪰ -1e-9`, `max_F tr[Y T] ≤ 1 + 1e-6`.
pub fn verify_witness(
    w: &Witness,
    candidate: &ChoiObject,
    f: &ConicFreeSet,
    opts: &RobustnessOptions,
) -> Result<WitnessCheck> {
    let ext = max_over_set(f, &w.blocks, opts)?;
    let min_eigenvalue = w.min_eigenvalue();
    let free_max = ext.value;
    let value = w.value(candidate);
    Ok(WitnessCheck {
        min_eigenvalue,
        free_max,
        value,
        pass: min_eigenvalue >= -1e-9 && free_max <= 1.0 + 1e-6 && ext.status == Status::Optimal,
    })
}

#[derive(Clone, Debug)]
pub struct NoiseWeight {
    pub status: Status,
    pub weight: f64,
    /// Variables rescaled to `α = 1`.
    pub point: Vec<DMatrix<C64>>,
}

/// `min t` subject to `J + t N ∈ cone(F)`, `N` the maximally mixed object.
pub fn white_noise_weight(
    candidate: &ChoiObject,
    f: &ConicFreeSet,
    opts: &RobustnessOptions,
) -> Result<NoiseWeight> {
    f.check_layout(&candidate.layout())?;
    let mut p = ConeProgram::new(format!("noise/{}", f.tag().name()));
    let emb = embed(&mut p, f);
    let t = p.add_block(1);
    let mixed = f.layout().maximally_mixed_blocks();
    for ((cand, j), m) in f.candidates().iter().zip(candidate.blocks()).zip(&mixed) {
        let expr = remap(cand, &emb.vars).plus(&Expr::term(
            t,
            LinearMap::embed_scalar(&(m.matrix() * C64::new(-1.0, 0.0))),
        ));
        p.add_equality(&expr, j.matrix());
    }
    p.add_objective(&Expr::var(t, 1), &DMatrix::from_element(1, 1, ONE));
    let sol = solve(&p, &opts.solver)?;
    let values = var_values(&sol, &emb);
    let alpha = values[f.alpha()][(0, 0)].re;
    let s = C64::new(1.0 / alpha.max(f64::MIN_POSITIVE), 0.0);
    Ok(NoiseWeight {
        status: sol.status,
        weight: sol.x[t][(0, 0)].re,
        point: values.iter().map(|v| v * s).collect(),
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct SlaterReport {
    pub holds: bool,
    /// Smallest eigenvalue over variable blocks and inequality expressions.
    pub margin: f64,
    pub method: &'static str,
}

/// Required strict-feasibility margin.
pub const SLATER_MARGIN: f64 = 1e-6;

/// Strict feasibility of `F` at `α = 1`: checks the shipped interior point
/// first, then maximizes a uniform eigenvalue margin.
pub fn slater_check(f: &ConicFreeSet, opts: &RobustnessOptions) -> Result<SlaterReport> {
    if let Some(point) = f.slater_point() {
        let (res, min_eig) = f.feasibility(&point);
        let alpha_ok = (point[f.alpha()][(0, 0)].re - 1.0).abs() <= 1e-12;
        if res <= 1e-10 && min_eig >= SLATER_MARGIN && alpha_ok {
            return Ok(SlaterReport {
                holds: true,
                margin: min_eig,
                method: "interior point",
            });
        }
    }
    // X_v = Y_v + s I for every block except α.
    let mut p = ConeProgram::new(format!("slater/{}", f.tag().name()));
    let mut ids = Vec::new();
    for (v, &n) in f.vars().iter().enumerate() {
        let _ = v;
        ids.push(p.add_block(n));
    }
    let s = p.add_block(1);
    let cap = p.add_block(1);
    let shifted = |e: &Expr| -> Expr {
        let mut out = remap(e, &ids);
        let mut shift = DMatrix::<C64>::zeros(e.n_out(), e.n_out());
        for (v, m) in e.terms() {
            if *v != f.alpha() {
                shift += m.apply(&DMatrix::identity(f.vars()[*v], f.vars()[*v]));
            }
        }
        out.add_term(s, LinearMap::embed_scalar(&shift));
        out
    };
    for e in f.equalities() {
        p.add_equality(&shifted(e), &zeros(e.n_out()));
    }
    for e in f.inequalities() {
        let n = e.n_out();
        let slack = p.add_block(n);
        let expr = shifted(e)
            .plus(&Expr::var(slack, n).scaled(-1.0))
            .plus(&Expr::term(
                s,
                LinearMap::embed_scalar(&(DMatrix::identity(n, n) * C64::new(-1.0, 0.0))),
            ));
        p.add_equality(&expr, &zeros(n));
    }
    p.add_equality(
        &Expr::var(ids[f.alpha()], 1),
        &DMatrix::from_element(1, 1, ONE),
    );
    p.add_equality(
        &Expr::var(s, 1).plus(&Expr::var(cap, 1)),
        &DMatrix::from_element(1, 1, ONE),
    );
    p.add_objective(
        &Expr::var(s, 1),
        &DMatrix::from_element(1, 1, C64::new(-1.0, 0.0)),
    );
    let sol = solve(&p, &opts.solver)?;
    let margin = sol.x[s][(0, 0)].re;
    Ok(SlaterReport {
        holds: sol.status == Status::Optimal && margin >= SLATER_MARGIN,
        margin,
        method: "margin program",
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::free_sets::{compile_all_channels, compile_classical_channels, FreeSetTag};
    use crate::objects::ChoiChannel;

    #[test]
    fn identity_channel_classical_robustness() {
        // R = d - 1 for the identity channel against classical channels.
        let obj: ChoiObject = ChoiChannel::identity(2).into();
        let f = compile_classical_channels(1, 2, &DMatrix::identity(2, 2)).unwrap();
        let r = robustness(&obj, &f, &RobustnessOptions::default()).unwrap();
        assert_eq!(r.status, Status::Optimal);
        assert!((r.robustness - 1.0).abs() < 1e-7, "R = {}", r.robustness);
        assert!((r.witness.value(&obj) - r.value).abs() < 1e-6);
    }

    #[test]
    fn slater_fails_for_artificial_set() {
        let mut f = compile_all_channels(1, 2, 2);
        let p = DMatrix::from_fn(4, 4, |i, j| {
            if i == 0 && j == 0 {
                ONE
            } else {
                C64::new(0.0, 0.0)
            }
        });
        f.add_equality(Expr::term(1, LinearMap::functional(&p)));
        let f = {
            // Drop the shipped interior point by rebuilding through the public builder.
            let mut g = ConicFreeSet::custom(FreeSetTag::Custom, f.layout().clone());
            let v = g.add_var(4, None);
            for e in f.equalities() {
                g.add_equality(e.clone());
            }
            g.set_candidate(0, Expr::var(v, 4));
            g
        };
        let rep = slater_check(&f, &RobustnessOptions::default()).unwrap();
        assert!(!rep.holds, "margin {}", rep.margin);
        let all = compile_all_channels(1, 2, 2);
        assert!(
            slater_check(&all, &RobustnessOptions::default())
                .unwrap()
                .holds
        );
    }
}
