//! Conic descriptions of free sets.
//!
//! A [`ConicFreeSet`] describes the cone `{α T : α ≥ 0, T ∈ F}` by PSD
//! variable blocks, one scalar scale `α`, a linear expression for every
//! candidate block, and homogeneous constraints. Setting `α = 1` recovers
//! the free set itself.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};
use crate::linalg::{
    partial_trace, partial_transpose, trace_and_replace_all, ComplexMatrix, C64, ONE,
};
use crate::objects::{BlockLayout, ChoiObject, ProcessDims, I0, I1, I2, O0, O1, O2};
use crate::solver::robustness::{self, RobustnessOptions};
use crate::solver::{Expr, LinearMap, Status, VarId};
use crate::supermaps::{self, Order};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FreeSetTag {
    AllChannels,
    Classical,
    CompatibleChannels,
    JointlyMeasurable,
    PptEntanglementBreaking,
    GCovariant,
    AllInstruments,
    CompatibleInstruments,
    AllProcesses,
    CausallySeparable,
    AllSuperinstruments,
    CompatibleTesters,
    Custom,
}

impl FreeSetTag {
    pub fn parse(s: &str) -> Result<Self> {
        serde_json::from_value(Value::String(s.to_string()))
            .map_err(|_| Error::UnknownTag(s.to_string()))
    }

    pub fn name(&self) -> String {
        serde_json::to_value(self)
            .ok()
            .and_then(|v| v.as_str().map(str::to_string))
            .unwrap_or_default()
    }
}

/// Cap on the order of a single auxiliary block.
pub const MAX_AUX_ORDER: usize = 1024;
/// Cap on the number of deterministic post-processing functions.
pub const MAX_ASSIGNMENTS: usize = 256;

#[derive(Clone, Debug)]
pub struct ConicFreeSet {
    tag: FreeSetTag,
    layout: BlockLayout,
    vars: Vec<usize>,
    alpha: VarId,
    candidates: Vec<Expr>,
    equalities: Vec<Expr>,
    inequalities: Vec<Expr>,
    slater: Vec<Option<DMatrix<C64>>>,
    surrogate: Option<String>,
}

impl ConicFreeSet {
    /// Empty description with only the scale variable; candidates start at 0.
    pub fn custom(tag: FreeSetTag, layout: BlockLayout) -> Self {
        let n = layout.block_order();
        let nb = layout.n_blocks();
        ConicFreeSet {
            tag,
            layout,
            vars: vec![1],
            alpha: 0,
            candidates: vec![Expr::zero(n); nb],
            equalities: Vec::new(),
            inequalities: Vec::new(),
            slater: vec![Some(DMatrix::from_element(1, 1, ONE))],
            surrogate: None,
        }
    }

    /// Adds a PSD variable block with its value at the interior point
    /// (`None` when no interior point is known).
    pub fn add_var(&mut self, n: usize, interior: Option<DMatrix<C64>>) -> VarId {
        self.vars.push(n);
        self.slater.push(interior);
        self.vars.len() - 1
    }

    pub fn set_candidate(&mut self, block: usize, expr: Expr) {
        assert_eq!(
            expr.n_out(),
            self.layout.block_order(),
            "candidate order mismatch"
        );
        self.candidates[block] = expr;
    }

    /// Homogeneous constraint `expr = 0`.
    pub fn add_equality(&mut self, expr: Expr) {
        self.equalities.push(expr);
    }

    /// Homogeneous constraint `expr ⪰ 0`.
    pub fn add_inequality(&mut self, expr: Expr) {
        self.inequalities.push(expr);
    }

    pub fn tag(&self) -> FreeSetTag {
        self.tag
    }

    pub fn layout(&self) -> &BlockLayout {
        &self.layout
    }

    pub fn vars(&self) -> &[usize] {
        &self.vars
    }

    pub fn alpha(&self) -> VarId {
        self.alpha
    }

    pub fn candidates(&self) -> &[Expr] {
        &self.candidates
    }

    pub fn equalities(&self) -> &[Expr] {
        &self.equalities
    }

    pub fn inequalities(&self) -> &[Expr] {
        &self.inequalities
    }

    pub fn surrogate(&self) -> Option<&str> {
        self.surrogate.as_deref()
    }

    /// Aux block orders, excluding the scale variable.
    pub fn aux_blocks(&self) -> Vec<usize> {
        self.vars.iter().skip(1).cloned().collect()
    }

    /// Interior point at `α = 1`, when every block has one.
    pub fn slater_point(&self) -> Option<Vec<DMatrix<C64>>> {
        self.slater.iter().cloned().collect()
    }

    pub fn n_devices(&self) -> usize {
        self.layout.n_devices()
    }

    /// `α · M` as an expression of order `M.nrows()`.
    pub fn scaled_constant(&self, m: &DMatrix<C64>) -> Expr {
        Expr::term(self.alpha, LinearMap::embed_scalar(m))
    }

    /// Candidate blocks at a variable assignment.
    pub fn eval_candidates(&self, values: &[DMatrix<C64>]) -> Vec<DMatrix<C64>> {
        self.candidates.iter().map(|e| e.eval(values)).collect()
    }

    /// Largest equality residual and smallest eigenvalue over variable blocks
    /// and inequality expressions at an assignment.
    pub fn feasibility(&self, values: &[DMatrix<C64>]) -> (f64, f64) {
        let mut res: f64 = 0.0;
        for e in &self.equalities {
            res = res.max(e.eval(values).camax());
        }
        let mut min_eig = f64::INFINITY;
        for v in values {
            min_eig = min_eig.min(crate::linalg::eig_hermitian_matrix(v).values[0]);
        }
        for e in &self.inequalities {
            let m = e.eval(values);
            min_eig = min_eig.min(crate::linalg::eig_hermitian_matrix(&m).values[0]);
        }
        (res, min_eig)
    }

    pub fn check_layout(&self, layout: &BlockLayout) -> Result<()> {
        if &self.layout != layout {
            return Err(Error::Structural(format!(
                "{} set compiled for {:?}, object has {:?}",
                self.tag.name(),
                self.layout,
                layout
            )));
        }
        Ok(())
    }
}

fn identity(n: usize) -> DMatrix<C64> {
    DMatrix::identity(n, n)
}

fn scaled_identity(n: usize, s: f64) -> DMatrix<C64> {
    DMatrix::identity(n, n) * C64::new(s, 0.0)
}

fn ket_projector(n: usize, a: usize) -> DMatrix<C64> {
    let mut m = DMatrix::zeros(n, n);
    m[(a, a)] = ONE;
    m
}

/// `X ↦ tr_{complement of keep} X` for blocks with the given factors.
pub fn partial_trace_map(dims: &[usize], keep: &[usize]) -> LinearMap {
    let n_in: usize = dims.iter().product();
    let n_out: usize = keep.iter().map(|&k| dims[k]).product();
    let dims = dims.to_vec();
    let keep = keep.to_vec();
    LinearMap::from_fn(n_in, n_out, move |x| {
        let m = ComplexMatrix::new(x.clone(), dims.clone()).expect("dims match");
        partial_trace(&m, &keep)
            .expect("valid factors")
            .into_matrix()
    })
}

/// `X ↦ X ⊗ F`.
fn kron_right_map(n_in: usize, f: &DMatrix<C64>) -> LinearMap {
    let f = f.clone();
    LinearMap::from_fn(n_in, n_in * f.nrows(), move |x| x.kronecker(&f))
}

/// `X ↦ tr_out X - α I/d_in` for channel-shaped blocks, as an expression.
fn channel_normalization(set: &ConicFreeSet, sum: &Expr, d_in: usize, d_out: usize) -> Expr {
    sum.then(&partial_trace_map(&[d_in, d_out], &[0]))
        .plus(&set.scaled_constant(&scaled_identity(d_in, -1.0 / d_in as f64)))
}

/// Every function `λ: X -> outcomes`, with `λ(x) < arities[x]`, in
/// lexicographic order (first setting slowest).
pub fn assignments(arities: &[usize]) -> Result<Vec<Vec<usize>>> {
    let mut count: usize = 1;
    for &a in arities {
        count = count
            .checked_mul(a)
            .filter(|&c| c <= MAX_ASSIGNMENTS)
            .ok_or_else(|| {
                Error::Overflow(format!(
                    "{} deterministic post-processings exceed the cap of {MAX_ASSIGNMENTS}",
                    arities.iter().map(|&a| a as f64).product::<f64>()
                ))
            })?;
    }
    Ok((0..count)
        .map(|mut idx| {
            let mut lam = vec![0; arities.len()];
            for x in (0..arities.len()).rev() {
                lam[x] = idx % arities[x];
                idx /= arities[x];
            }
            lam
        })
        .collect())
}

fn channel_layout(layout: &BlockLayout) -> Result<(usize, usize, usize)> {
    match layout {
        BlockLayout::Channels { n, d_in, d_out } => Ok((*n, *d_in, *d_out)),
        other => Err(Error::Structural(format!(
            "expected a channel collection, got {other:?}"
        ))),
    }
}

/// All channel collections (used for canonicalization).
pub fn compile_all_channels(n: usize, d_in: usize, d_out: usize) -> ConicFreeSet {
    let layout = BlockLayout::Channels { n, d_in, d_out };
    let order = d_in * d_out;
    let mut set = ConicFreeSet::custom(FreeSetTag::AllChannels, layout);
    for x in 0..n {
        let g = set.add_var(order, Some(scaled_identity(order, 1.0 / order as f64)));
        let e = Expr::var(g, order);
        let norm = channel_normalization(&set, &e, d_in, d_out);
        set.set_candidate(x, e);
        set.add_equality(norm);
    }
    set
}

/// Measure-and-prepare channels `ρ ↦ Σ_a tr[N_a ρ] |a><a|` whose output
/// basis is the columns of `basis`.
pub fn compile_classical_channels(
    n: usize,
    d_in: usize,
    basis: &DMatrix<C64>,
) -> Result<ConicFreeSet> {
    let d_out = basis.nrows();
    if basis.ncols() != d_out {
        return Err(Error::dims("basis must be square"));
    }
    let r = (basis.adjoint() * basis - identity(d_out)).camax();
    if r > 1e-10 {
        return Err(Error::Invalid(format!(
            "basis is not orthonormal (residual {r:e})"
        )));
    }
    let layout = BlockLayout::Channels { n, d_in, d_out };
    let mut set = ConicFreeSet::custom(FreeSetTag::Classical, layout);
    let interior = scaled_identity(d_in, 1.0 / (d_in * d_out) as f64);
    for x in 0..n {
        let mut cand = Expr::zero(d_in * d_out);
        let mut sum = Expr::zero(d_in);
        for a in 0..d_out {
            let p = set.add_var(d_in, Some(interior.clone()));
            let v: Vec<C64> = basis.column(a).iter().cloned().collect();
            let proj = DMatrix::from_fn(d_out, d_out, |i, j| v[i] * v[j].conj());
            cand.add_term(p, kron_right_map(d_in, &proj));
            sum.add_term(p, LinearMap::identity(d_in));
        }
        set.set_candidate(x, cand);
        set.add_equality(
            sum.plus(&set.scaled_constant(&scaled_identity(d_in, -1.0 / d_in as f64))),
        );
    }
    Ok(set)
}

/// Channels arising as marginals of one broadcast channel `A -> B_1 ... B_n`
/// (outputs in setting order).
pub fn compile_compatible_channels(n: usize, d_in: usize, d_out: usize) -> Result<ConicFreeSet> {
    if n < 2 {
        return Err(Error::Invalid(
            "compatibility needs at least two channels".into(),
        ));
    }
    let order = (0..n).try_fold(d_in, |acc, _| acc.checked_mul(d_out));
    let order = order.filter(|&o| o <= MAX_AUX_ORDER).ok_or_else(|| {
        Error::Overflow(format!(
            "broadcast block for {n} channels exceeds order {MAX_AUX_ORDER}"
        ))
    })?;
    let layout = BlockLayout::Channels { n, d_in, d_out };
    let mut set = ConicFreeSet::custom(FreeSetTag::CompatibleChannels, layout);
    let b = set.add_var(order, Some(scaled_identity(order, 1.0 / order as f64)));
    let mut dims = vec![d_in];
    dims.extend(std::iter::repeat_n(d_out, n));
    for x in 0..n {
        set.set_candidate(x, Expr::term(b, partial_trace_map(&dims, &[0, 1 + x])));
    }
    let marg = Expr::term(b, partial_trace_map(&dims, &[0]));
    set.add_equality(marg.plus(&set.scaled_constant(&scaled_identity(d_in, -1.0 / d_in as f64))));
    Ok(set)
}

/// POVMs (encoded as classical-output channels with `max(outcome_counts)`
/// outputs) that admit a common parent measurement.
pub fn compile_jointly_measurable(outcome_counts: &[usize], d: usize) -> Result<ConicFreeSet> {
    if outcome_counts.len() < 2 {
        return Err(Error::Invalid(
            "joint measurability needs at least two POVMs".into(),
        ));
    }
    let n_out = *outcome_counts.iter().max().expect("nonempty");
    let lambdas = assignments(outcome_counts)?;
    let layout = BlockLayout::Channels {
        n: outcome_counts.len(),
        d_in: d,
        d_out: n_out,
    };
    let mut set = ConicFreeSet::custom(FreeSetTag::JointlyMeasurable, layout);
    let interior = scaled_identity(d, 1.0 / (d * lambdas.len()) as f64);
    let mut cands = vec![Expr::zero(d * n_out); outcome_counts.len()];
    let mut sum = Expr::zero(d);
    for lam in &lambdas {
        // Parent effect stored as G_λ^T / d, matching the channel encoding.
        let g = set.add_var(d, Some(interior.clone()));
        for (x, &a) in lam.iter().enumerate() {
            cands[x].add_term(g, kron_right_map(d, &ket_projector(n_out, a)));
        }
        sum.add_term(g, LinearMap::identity(d));
    }
    for (x, c) in cands.into_iter().enumerate() {
        set.set_candidate(x, c);
    }
    set.add_equality(sum.plus(&set.scaled_constant(&scaled_identity(d, -1.0 / d as f64))));
    Ok(set)
}

/// Channels with positive partial transpose; equals the entanglement-breaking
/// set when `d_in · d_out ≤ 6`.
pub fn compile_entanglement_breaking_ppt(n: usize, d_in: usize, d_out: usize) -> ConicFreeSet {
    let layout = BlockLayout::Channels { n, d_in, d_out };
    let order = d_in * d_out;
    let mut set = ConicFreeSet::custom(FreeSetTag::PptEntanglementBreaking, layout);
    let pt = LinearMap::from_fn(order, order, move |x| {
        let m = ComplexMatrix::new(x.clone(), vec![d_in, d_out]).expect("dims match");
        partial_transpose(&m, 1)
            .expect("valid factor")
            .into_matrix()
    });
    for x in 0..n {
        let g = set.add_var(order, Some(scaled_identity(order, 1.0 / order as f64)));
        let e = Expr::var(g, order);
        set.add_equality(channel_normalization(&set, &e, d_in, d_out));
        set.add_inequality(Expr::term(g, pt.clone()));
        set.set_candidate(x, e);
    }
    if order > 6 {
        set.surrogate = Some("surrogate, exact only for d_in·d_out ≤ 6".into());
    }
    set
}

/// Smallest `‖U - e^{iφ} V‖_max` over global phases.
fn phase_distance(u: &DMatrix<C64>, v: &DMatrix<C64>) -> f64 {
    let ov = (v.adjoint() * u).trace();
    let phase = if ov.norm() > 0.0 { ov / ov.norm() } else { ONE };
    (u - v * phase).camax()
}

/// Checks closure of the unitaries under multiplication up to global phase
/// and returns the largest closure residual.
pub fn group_closure_residual(unitaries: &[DMatrix<C64>]) -> Result<f64> {
    let Some(first) = unitaries.first() else {
        return Err(Error::Invalid("empty group".into()));
    };
    let d = first.nrows();
    let mut worst: f64 = 0.0;
    for u in unitaries {
        if u.nrows() != d || u.ncols() != d {
            return Err(Error::dims("group elements of different dimensions"));
        }
        let r = (u.adjoint() * u - identity(d)).camax();
        if r > 1e-10 {
            return Err(Error::Invalid(format!(
                "group element is not unitary (residual {r:e})"
            )));
        }
    }
    for a in unitaries {
        for b in unitaries {
            let ab = a * b;
            let best = unitaries
                .iter()
                .map(|c| phase_distance(&ab, c))
                .fold(f64::INFINITY, f64::min);
            worst = worst.max(best);
        }
    }
    Ok(worst)
}

/// Channels `Λ` with `Λ(U ρ U†) = U Λ(ρ) U†` for every group element;
/// encoded as `[J, Ū ⊗ U] = 0`.
pub fn compile_g_covariant(n: usize, d: usize, unitaries: &[DMatrix<C64>]) -> Result<ConicFreeSet> {
    let closure = group_closure_residual(unitaries)?;
    if closure > 1e-10 {
        return Err(Error::NotAGroup(closure));
    }
    if unitaries[0].nrows() != d {
        return Err(Error::dims(
            "group dimension does not match channel dimension",
        ));
    }
    let layout = BlockLayout::Channels {
        n,
        d_in: d,
        d_out: d,
    };
    let order = d * d;
    let mut set = ConicFreeSet::custom(FreeSetTag::GCovariant, layout);
    let maps: Vec<LinearMap> = unitaries
        .iter()
        .map(|u| {
            let v = u.map(|z| z.conj()).kronecker(u);
            LinearMap::from_fn(order, order, move |x| &v * x * v.adjoint() - x)
        })
        .collect();
    for x in 0..n {
        let g = set.add_var(order, Some(scaled_identity(order, 1.0 / order as f64)));
        let e = Expr::var(g, order);
        set.add_equality(channel_normalization(&set, &e, d, d));
        for m in &maps {
            set.add_equality(Expr::term(g, m.clone()));
        }
        set.set_candidate(x, e);
    }
    Ok(set)
}

/// Single-qubit Pauli group `{I, X, Y, Z}` (closed up to phase).
pub fn pauli_group() -> Vec<DMatrix<C64>> {
    use crate::linalg::pauli;
    vec![
        pauli::i2().into_matrix(),
        pauli::x().into_matrix(),
        pauli::y().into_matrix(),
        pauli::z().into_matrix(),
    ]
}

fn instrument_layout(layout: &BlockLayout) -> Result<(Vec<usize>, usize, usize)> {
    match layout {
        BlockLayout::Instruments {
            arities,
            d_in,
            d_out,
        } => Ok((arities.clone(), *d_in, *d_out)),
        other => Err(Error::Structural(format!(
            "expected instruments, got {other:?}"
        ))),
    }
}

/// All instrument collections.
pub fn compile_all_instruments(arities: &[usize], d_in: usize, d_out: usize) -> ConicFreeSet {
    let layout = BlockLayout::Instruments {
        arities: arities.to_vec(),
        d_in,
        d_out,
    };
    let order = d_in * d_out;
    let mut set = ConicFreeSet::custom(FreeSetTag::AllInstruments, layout);
    let mut block = 0;
    for &k in arities {
        let mut sum = Expr::zero(order);
        for _ in 0..k {
            let v = set.add_var(
                order,
                Some(scaled_identity(order, 1.0 / (order * k) as f64)),
            );
            sum.add_term(v, LinearMap::identity(order));
            set.set_candidate(block, Expr::var(v, order));
            block += 1;
        }
        set.add_equality(channel_normalization(&set, &sum, d_in, d_out));
    }
    set
}

/// Instruments obtained from one parent instrument by deterministic
/// classical post-processing.
pub fn compile_compatible_instruments(
    arities: &[usize],
    d_in: usize,
    d_out: usize,
) -> Result<ConicFreeSet> {
    if arities.len() < 2 {
        return Err(Error::Invalid(
            "compatibility needs at least two instruments".into(),
        ));
    }
    let lambdas = assignments(arities)?;
    let layout = BlockLayout::Instruments {
        arities: arities.to_vec(),
        d_in,
        d_out,
    };
    let order = d_in * d_out;
    let mut set = ConicFreeSet::custom(FreeSetTag::CompatibleInstruments, layout.clone());
    let interior = scaled_identity(order, 1.0 / (order * lambdas.len()) as f64);
    let index = layout.block_index();
    let mut cands = vec![Expr::zero(order); index.len()];
    let mut sum = Expr::zero(order);
    for lam in &lambdas {
        let v = set.add_var(order, Some(interior.clone()));
        for (b, &(x, a)) in index.iter().enumerate() {
            if lam[x] == a {
                cands[b].add_term(v, LinearMap::identity(order));
            }
        }
        sum.add_term(v, LinearMap::identity(order));
    }
    for (b, c) in cands.into_iter().enumerate() {
        set.set_candidate(b, c);
    }
    let norm = channel_normalization(&set, &sum, d_in, d_out);
    set.add_equality(norm);
    Ok(set)
}

fn process_op(
    dims: &ProcessDims,
    f: impl Fn(&ComplexMatrix) -> ComplexMatrix + 'static,
) -> LinearMap {
    let n = dims.total();
    let d = dims.as_vec();
    LinearMap::from_fn(n, n, move |x| {
        let m = ComplexMatrix::new(x.clone(), d.clone()).expect("dims match");
        f(&m).into_matrix()
    })
}

/// `T_S(W)` for a set of factors.
fn tr_replace(w: &ComplexMatrix, factors: &[usize]) -> ComplexMatrix {
    trace_and_replace_all(w, factors).expect("valid factors")
}

/// `Q_q T_S W = T_S W - T_q T_S W`.
fn q_then_t(w: &ComplexMatrix, q: usize, t: &[usize]) -> ComplexMatrix {
    let tw = tr_replace(w, t);
    &tw - &tr_replace(&tw, &[q])
}

/// Linear maps whose joint kernel is the cone of fixed-order combs.
pub fn comb_constraint_maps(dims: &ProcessDims, order: Order) -> Vec<LinearMap> {
    let (a_in, a_out, b_in, b_out) = match order {
        Order::FirstThenSecond => (I1, O1, I2, O2),
        Order::SecondThenFirst => (I2, O2, I1, O1),
    };
    let mut maps = Vec::new();
    if dims.as_vec()[b_out] > 1 {
        maps.push(process_op(dims, move |w| q_then_t(w, b_out, &[O0])));
    }
    if dims.as_vec()[a_out] > 1 {
        maps.push(process_op(dims, move |w| {
            q_then_t(w, a_out, &[b_in, b_out, O0])
        }));
    }
    if dims.i0 > 1 {
        maps.push(process_op(dims, move |w| {
            q_then_t(w, I0, &[a_in, a_out, b_in, b_out, O0])
        }));
    }
    maps
}

/// `W ↦ W - L_V(W)`; its kernel is the span of valid processes.
pub fn validity_defect_map(dims: &ProcessDims) -> LinearMap {
    let d = *dims;
    process_op(dims, move |w| {
        let p = supermaps::validity_project_unchecked(w, &d);
        w - &p
    })
}

fn process_layout(layout: &BlockLayout) -> Result<ProcessDims> {
    match layout {
        BlockLayout::Process { dims } => Ok(*dims),
        other => Err(Error::Structural(format!(
            "expected a process matrix, got {other:?}"
        ))),
    }
}

fn trace_functional(n: usize) -> LinearMap {
    LinearMap::functional(&identity(n))
}

/// All valid process matrices.
pub fn compile_all_processes(dims: ProcessDims) -> ConicFreeSet {
    let n = dims.total();
    let mut set = ConicFreeSet::custom(FreeSetTag::AllProcesses, BlockLayout::Process { dims });
    let w = set.add_var(n, Some(scaled_identity(n, 1.0 / n as f64)));
    set.add_equality(Expr::term(w, validity_defect_map(&dims)));
    set.add_equality(
        Expr::term(w, trace_functional(n))
            .plus(&set.scaled_constant(&DMatrix::from_element(1, 1, -ONE))),
    );
    set.set_candidate(0, Expr::var(w, n));
    set
}

/// Convex hull of the two fixed-order comb sets.
pub fn compile_causally_separable(dims: ProcessDims) -> ConicFreeSet {
    let n = dims.total();
    let mut set =
        ConicFreeSet::custom(FreeSetTag::CausallySeparable, BlockLayout::Process { dims });
    let half = scaled_identity(n, 0.5 / n as f64);
    let w1 = set.add_var(n, Some(half.clone()));
    let w2 = set.add_var(n, Some(half));
    for m in comb_constraint_maps(&dims, Order::FirstThenSecond) {
        set.add_equality(Expr::term(w1, m));
    }
    for m in comb_constraint_maps(&dims, Order::SecondThenFirst) {
        set.add_equality(Expr::term(w2, m));
    }
    let sum = Expr::var(w1, n).plus(&Expr::var(w2, n));
    set.add_equality(
        sum.then(&trace_functional(n))
            .plus(&set.scaled_constant(&DMatrix::from_element(1, 1, -ONE))),
    );
    set.set_candidate(0, sum);
    set
}

fn super_layout(layout: &BlockLayout) -> Result<(Vec<usize>, ProcessDims)> {
    match layout {
        BlockLayout::Superinstruments { arities, dims } => Ok((arities.clone(), *dims)),
        other => Err(Error::Structural(format!(
            "expected superinstruments, got {other:?}"
        ))),
    }
}

/// All superinstrument collections.
pub fn compile_all_superinstruments(arities: &[usize], dims: ProcessDims) -> ConicFreeSet {
    let n = dims.total();
    let layout = BlockLayout::Superinstruments {
        arities: arities.to_vec(),
        dims,
    };
    let mut set = ConicFreeSet::custom(FreeSetTag::AllSuperinstruments, layout);
    let defect = validity_defect_map(&dims);
    let mut block = 0;
    for &k in arities {
        let mut sum = Expr::zero(n);
        for _ in 0..k {
            let v = set.add_var(n, Some(scaled_identity(n, 1.0 / (n * k) as f64)));
            sum.add_term(v, LinearMap::identity(n));
            set.set_candidate(block, Expr::var(v, n));
            block += 1;
        }
        set.add_equality(sum.then(&defect));
        set.add_equality(
            sum.then(&trace_functional(n))
                .plus(&set.scaled_constant(&DMatrix::from_element(1, 1, -ONE))),
        );
    }
    set
}

/// Testers obtained from one joint sequential superinstrument, whose
/// outcomes sum to a comb of order 1 ≺ 2, by deterministic post-processing.
pub fn compile_compatible_testers(arities: &[usize], dims: ProcessDims) -> Result<ConicFreeSet> {
    if arities.len() < 2 {
        return Err(Error::Invalid(
            "compatibility needs at least two testers".into(),
        ));
    }
    let lambdas = assignments(arities)?;
    let n = dims.total();
    let layout = BlockLayout::Superinstruments {
        arities: arities.to_vec(),
        dims,
    };
    let mut set = ConicFreeSet::custom(FreeSetTag::CompatibleTesters, layout.clone());
    let interior = scaled_identity(n, 1.0 / (n * lambdas.len()) as f64);
    let index = layout.block_index();
    let mut cands = vec![Expr::zero(n); index.len()];
    let mut sum = Expr::zero(n);
    for lam in &lambdas {
        let v = set.add_var(n, Some(interior.clone()));
        for (b, &(x, a)) in index.iter().enumerate() {
            if lam[x] == a {
                cands[b].add_term(v, LinearMap::identity(n));
            }
        }
        sum.add_term(v, LinearMap::identity(n));
    }
    for (b, c) in cands.into_iter().enumerate() {
        set.set_candidate(b, c);
    }
    for m in comb_constraint_maps(&dims, Order::FirstThenSecond) {
        set.add_equality(sum.then(&m));
    }
    set.add_equality(
        sum.then(&trace_functional(n))
            .plus(&set.scaled_constant(&DMatrix::from_element(1, 1, -ONE))),
    );
    Ok(set)
}

/// Set of all objects with the given layout; used for canonicalization.
pub fn compile_all(layout: &BlockLayout) -> ConicFreeSet {
    match layout {
        BlockLayout::Channels { n, d_in, d_out } => compile_all_channels(*n, *d_in, *d_out),
        BlockLayout::Instruments {
            arities,
            d_in,
            d_out,
        } => compile_all_instruments(arities, *d_in, *d_out),
        BlockLayout::Process { dims } => compile_all_processes(*dims),
        BlockLayout::Superinstruments { arities, dims } => {
            compile_all_superinstruments(arities, *dims)
        }
    }
}

fn parse_matrix_list(v: &Value) -> Result<Vec<DMatrix<C64>>> {
    let raw: Vec<Vec<Vec<[f64; 2]>>> =
        serde_json::from_value(v.clone()).map_err(|e| Error::Schema(format!("unitaries: {e}")))?;
    raw.iter()
        .map(|rows| {
            let n = rows.len();
            if rows.iter().any(|r| r.len() != n) {
                return Err(Error::Schema("unitaries must be square".into()));
            }
            Ok(DMatrix::from_fn(n, n, |i, j| {
                C64::new(rows[i][j][0], rows[i][j][1])
            }))
        })
        .collect()
}

fn check_keys(params: &Value, allowed: &[&str]) -> Result<()> {
    match params {
        Value::Null => Ok(()),
        Value::Object(m) => {
            for k in m.keys() {
                if !allowed.contains(&k.as_str()) {
                    return Err(Error::Schema(format!("unknown free-set parameter `{k}`")));
                }
            }
            Ok(())
        }
        _ => Err(Error::Schema(
            "free-set parameters must be an object".into(),
        )),
    }
}

/// Compiles a free set by tag for an object's layout.
///
/// Parameters: `classical` takes `basis` (`"z"` or `"x"`); `g_covariant`
/// takes `group` (`"trivial"`, `"z2"`, `"pauli"`) or explicit `unitaries`.
pub fn compile(tag: FreeSetTag, params: &Value, layout: &BlockLayout) -> Result<ConicFreeSet> {
    match tag {
        FreeSetTag::AllChannels => {
            check_keys(params, &[])?;
            let (n, di, d_o) = channel_layout(layout)?;
            Ok(compile_all_channels(n, di, d_o))
        }
        FreeSetTag::Classical => {
            check_keys(params, &["basis"])?;
            let (n, di, d_o) = channel_layout(layout)?;
            let basis = match params.get("basis").and_then(Value::as_str).unwrap_or("z") {
                "z" => identity(d_o),
                "x" if d_o == 2 => crate::linalg::pauli::hadamard().into_matrix(),
                b => return Err(Error::UnknownTag(format!("basis {b}"))),
            };
            compile_classical_channels(n, di, &basis)
        }
        FreeSetTag::CompatibleChannels => {
            check_keys(params, &[])?;
            let (n, di, d_o) = channel_layout(layout)?;
            compile_compatible_channels(n, di, d_o)
        }
        FreeSetTag::JointlyMeasurable => {
            check_keys(params, &[])?;
            let (n, di, d_o) = channel_layout(layout)?;
            compile_jointly_measurable(&vec![d_o; n], di)
        }
        FreeSetTag::PptEntanglementBreaking => {
            check_keys(params, &[])?;
            let (n, di, d_o) = channel_layout(layout)?;
            Ok(compile_entanglement_breaking_ppt(n, di, d_o))
        }
        FreeSetTag::GCovariant => {
            check_keys(params, &["group", "unitaries"])?;
            let (n, di, d_o) = channel_layout(layout)?;
            if di != d_o {
                return Err(Error::Structural(
                    "covariance needs equal input and output dimension".into(),
                ));
            }
            let group = if let Some(u) = params.get("unitaries") {
                parse_matrix_list(u)?
            } else {
                match params
                    .get("group")
                    .and_then(Value::as_str)
                    .unwrap_or("trivial")
                {
                    "trivial" => vec![identity(di)],
                    "z2" if di == 2 => vec![identity(2), crate::linalg::pauli::z().into_matrix()],
                    "pauli" if di == 2 => pauli_group(),
                    g => return Err(Error::UnknownTag(format!("group {g} for d = {di}"))),
                }
            };
            compile_g_covariant(n, di, &group)
        }
        FreeSetTag::AllInstruments => {
            check_keys(params, &[])?;
            let (ar, di, d_o) = instrument_layout(layout)?;
            Ok(compile_all_instruments(&ar, di, d_o))
        }
        FreeSetTag::CompatibleInstruments => {
            check_keys(params, &[])?;
            let (ar, di, d_o) = instrument_layout(layout)?;
            compile_compatible_instruments(&ar, di, d_o)
        }
        FreeSetTag::AllProcesses => {
            check_keys(params, &[])?;
            Ok(compile_all_processes(process_layout(layout)?))
        }
        FreeSetTag::CausallySeparable => {
            check_keys(params, &[])?;
            Ok(compile_causally_separable(process_layout(layout)?))
        }
        FreeSetTag::AllSuperinstruments => {
            check_keys(params, &[])?;
            let (ar, dims) = super_layout(layout)?;
            Ok(compile_all_superinstruments(&ar, dims))
        }
        FreeSetTag::CompatibleTesters => {
            check_keys(params, &[])?;
            let (ar, dims) = super_layout(layout)?;
            compile_compatible_testers(&ar, dims)
        }
        FreeSetTag::Custom => Err(Error::Schema(
            "custom sets cannot be compiled from a tag".into(),
        )),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    In,
    Out,
}

/// Evidence for a membership verdict.
#[derive(Clone, Debug)]
pub enum MembershipEvidence {
    /// Variable assignment (at `α = 1`) reproducing the candidate.
    Point(Vec<DMatrix<C64>>),
    /// Witness `Y` with `tr[Y J] > 1 ≥ max_F tr[Y T]`.
    Witness {
        y: Vec<DMatrix<C64>>,
        value: f64,
        free_max: f64,
    },
}

#[derive(Clone, Debug)]
pub struct MembershipCertificate {
    pub verdict: Verdict,
    pub evidence: MembershipEvidence,
    /// White-noise weight `t` needed to enter the cone; zero for members,
    /// `None` when no admixture of white noise reaches it.
    pub noise_weight: Option<f64>,
    /// Residual of the re-verification of the evidence.
    pub residual: f64,
}

/// Re-verification tolerance for membership evidence.
pub const CERTIFICATE_TOL: f64 = 1e-7;
/// White-noise weight below which a candidate counts as a member.
pub const MEMBER_TOL: f64 = 1e-6;

/// Decides membership by minimizing the white-noise weight `t` with
/// `J + t N ∈ cone(F)`, `N` maximally mixed. Non-members get a separating
/// witness from the robustness dual.
pub fn membership(candidate: &ChoiObject, f: &ConicFreeSet) -> Result<MembershipCertificate> {
    let opts = RobustnessOptions::default();
    let noise = robustness::white_noise_weight(candidate, f, &opts)?;
    // An infeasible noise program means J is off the affine hull of cone(F)
    // (e.g. coherences against a classical set), so J is excluded.
    let weight = match noise.status {
        Status::Optimal => Some(noise.weight),
        Status::Infeasible => None,
        s => {
            return Err(Error::Solver(format!(
                "white-noise program ended with status {s}"
            )))
        }
    };
    if weight.is_some_and(|w| w <= MEMBER_TOL) {
        // Rescale the variables so that the candidate equals the point at α = 1.
        let point = noise.point;
        let cands = f.eval_candidates(&point);
        let blocks = candidate.blocks();
        let mut residual: f64 = 0.0;
        for (c, j) in cands.iter().zip(&blocks) {
            residual = residual.max((c - j.matrix()).camax());
        }
        let (eq, min_eig) = f.feasibility(&point);
        residual = residual.max(eq).max((-min_eig).max(0.0));
        return Ok(MembershipCertificate {
            verdict: Verdict::In,
            evidence: MembershipEvidence::Point(point),
            noise_weight: weight,
            residual,
        });
    }
    let rob = robustness::robustness(candidate, f, &opts)?;
    let check = robustness::verify_witness(&rob.witness, candidate, f, &opts)?;
    let residual = (check.free_max - 1.0)
        .max(0.0)
        .max((-check.min_eigenvalue).max(0.0));
    Ok(MembershipCertificate {
        verdict: Verdict::Out,
        evidence: MembershipEvidence::Witness {
            y: rob.witness.blocks.clone(),
            value: check.value,
            free_max: check.free_max,
        },
        noise_weight: weight,
        residual,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::objects::ChoiChannel;

    #[test]
    fn assignment_enumeration() {
        let l = assignments(&[2, 3]).unwrap();
        assert_eq!(l.len(), 6);
        assert_eq!(l[0], vec![0, 0]);
        assert_eq!(l[5], vec![1, 2]);
        assert!(matches!(assignments(&[2; 9]), Err(Error::Overflow(_))));
    }

    #[test]
    fn slater_points_are_feasible() {
        let sets = vec![
            compile_all_channels(2, 2, 2),
            compile_classical_channels(2, 2, &identity(2)).unwrap(),
            compile_compatible_channels(2, 2, 2).unwrap(),
            compile_jointly_measurable(&[2, 2], 2).unwrap(),
            compile_entanglement_breaking_ppt(1, 2, 2),
            compile_g_covariant(1, 2, &pauli_group()).unwrap(),
            compile_all_instruments(&[2, 2], 2, 2),
            compile_compatible_instruments(&[2, 2], 2, 2).unwrap(),
            compile_all_processes(ProcessDims::qubit_slots()),
            compile_causally_separable(ProcessDims::qubit_slots()),
            compile_compatible_testers(&[2, 2], ProcessDims::new(1, 2, 2, 1, 1, 1)).unwrap(),
        ];
        for s in &sets {
            let p = s.slater_point().expect("interior point");
            let (eq, min_eig) = s.feasibility(&p);
            assert!(eq < 1e-12, "{:?}: residual {eq}", s.tag());
            assert!(min_eig >= 1e-6, "{:?}: margin {min_eig}", s.tag());
            // The interior point reproduces the maximally mixed object.
            let mm = s.layout().maximally_mixed_blocks();
            for (c, m) in s.eval_candidates(&p).iter().zip(&mm) {
                assert!((c - m.matrix()).camax() < 1e-12, "{:?}", s.tag());
            }
        }
    }

    #[test]
    fn non_group_rejected() {
        let h = crate::linalg::pauli::hadamard().into_matrix();
        let z = crate::linalg::pauli::z().into_matrix();
        assert!(matches!(
            compile_g_covariant(1, 2, &[identity(2), h, z]),
            Err(Error::NotAGroup(_))
        ));
    }

    #[test]
    fn pauli_group_closed_up_to_phase() {
        assert!(group_closure_residual(&pauli_group()).unwrap() < 1e-14);
    }

    #[test]
    fn structural_guard() {
        let s = compile_all_channels(2, 2, 2);
        let obj: ChoiObject = ChoiChannel::identity(2).into();
        assert!(matches!(
            s.check_layout(&obj.layout()),
            Err(Error::Structural(_))
        ));
    }

    #[test]
    fn classical_basis_must_be_orthonormal() {
        let bad = DMatrix::from_element(2, 2, ONE);
        assert!(compile_classical_channels(1, 2, &bad).is_err());
    }

    #[test]
    fn tags_round_trip() {
        for t in [
            FreeSetTag::Classical,
            FreeSetTag::PptEntanglementBreaking,
            FreeSetTag::CausallySeparable,
        ] {
            assert_eq!(FreeSetTag::parse(&t.name()).unwrap(), t);
        }
        assert!(FreeSetTag::parse("bogus").is_err());
    }
}
