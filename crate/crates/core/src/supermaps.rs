//! Two-slot supermaps: validity of process matrices, circuits, the
//! probability rule and collaborative games.
//!
//! Factors are ordered `(I0, I1, O1, I2, O2, O0)`: global past, the two
//! slots as (input, output) pairs, global future.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::free_sets::ConicFreeSet;
use crate::games::{
    verify_equality, CanonicalRecord, LinearGame, Verification, EXACTNESS_TOL, SPLIT_TOL,
};
use crate::linalg::{
    eig_hermitian_matrix, operator_schmidt_groups, partial_trace, partial_transpose, pauli, tensor,
    tensor_all, trace_and_replace_all, ComplexMatrix, C64,
};
use crate::objects::{
    BlockLayout, ChoiChannel, ChoiObject, ProcessDims, ProcessMatrix, I0, I1, I2, O0, O1, O2,
    PROCESS_LABELS,
};
use crate::solver::robustness::{self, RobustnessOptions, RobustnessResult, Witness, WitnessCheck};

/// Causal order of the two slots.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Order {
    #[serde(rename = "1<2")]
    FirstThenSecond,
    #[serde(rename = "2<1")]
    SecondThenFirst,
}

fn check_process_shape(w: &ComplexMatrix, dims: &ProcessDims) -> Result<()> {
    dims.check()?;
    if w.order() != dims.total() {
        return Err(Error::dims(format!(
            "order {} for process dims {:?}",
            w.order(),
            dims.as_vec()
        )));
    }
    if w.dims().len() == 6 && w.dims() != dims.as_vec().as_slice() {
        return Err(Error::dims(format!(
            "factors {:?}, expected {:?}",
            w.dims(),
            dims.as_vec()
        )));
    }
    if let Some(l) = w.labels() {
        if l.len() != 6 || l.iter().zip(PROCESS_LABELS).any(|(a, b)| a != b) {
            return Err(Error::Structural(format!("process factors labelled {l:?}")));
        }
    }
    Ok(())
}

fn t(w: &ComplexMatrix, f: &[usize]) -> ComplexMatrix {
    trace_and_replace_all(w, f).expect("process factors")
}

/// `Q_q T_S W`.
fn qt(w: &ComplexMatrix, q: usize, s: &[usize]) -> ComplexMatrix {
    let tw = t(w, s);
    &tw - &t(&tw, &[q])
}

/// Orthogonal projection onto the span of valid process matrices, without
/// the trace normalization. Assumes `w` is factored by `dims`.
pub fn validity_project_unchecked(w: &ComplexMatrix, dims: &ProcessDims) -> ComplexMatrix {
    let w = w
        .clone()
        .with_dims(dims.as_vec())
        .expect("order checked by caller");
    let a = qt(&w, I0, &[I1, O1, I2, O2, O0]);
    let b = qt(&w, O1, &[I2, O2, O0]);
    let c = qt(&w, O2, &[I1, O1, O0]);
    let to = t(&w, &[O0]);
    let q1 = &to - &t(&to, &[O1]);
    let d = &q1 - &t(&q1, &[O2]);
    &(&(&(&w - &a) - &b) - &c) - &d
}

/// `L_V(W)`: linear, idempotent and self-adjoint; fixes every valid
/// process matrix.
pub fn validity_project(w: &ComplexMatrix, dims: &ProcessDims) -> Result<ComplexMatrix> {
    check_process_shape(w, dims)?;
    Ok(validity_project_unchecked(w, dims))
}

/// Projection onto the affine set `{L_V(W) = W, tr W = 1}`.
pub fn validity_project_affine(w: &ComplexMatrix, dims: &ProcessDims) -> Result<ComplexMatrix> {
    let p = validity_project(w, dims)?;
    let n = dims.total();
    let shift = (p.trace_re() - 1.0) / n as f64;
    Ok(&p - &ComplexMatrix::identity(&dims.as_vec()).scale(shift))
}

/// `max |W - L_V(W)|`.
pub fn validity_residual(w: &ComplexMatrix, dims: &ProcessDims) -> Result<f64> {
    let p = validity_project(w, dims)?;
    Ok(w.max_abs_diff(&p.with_dims(w.dims().to_vec())?))
}

/// Places `op` (factors at `positions` of `big`) into the full space.
fn embed(op: &ComplexMatrix, positions: &[usize], big: &[usize]) -> Result<ComplexMatrix> {
    let rest: Vec<usize> = (0..big.len()).filter(|k| !positions.contains(k)).collect();
    let rest_dims: Vec<usize> = rest.iter().map(|&k| big[k]).collect();
    let full = tensor(op, &ComplexMatrix::identity(&rest_dims));
    let order: Vec<usize> = positions.iter().chain(&rest).cloned().collect();
    let perm: Vec<usize> = (0..big.len())
        .map(|k| order.iter().position(|&o| o == k).expect("covered"))
        .collect();
    full.permute_factors(&perm)
}

/// Unnormalized Choi `Σ |i><j| ⊗ Λ(|i><j|)` split into the given factors.
fn raw_choi(c: &ChoiChannel, factors: Vec<usize>) -> Result<ComplexMatrix> {
    c.matrix()
        .clone()
        .with_dims(factors)
        .map(|m| m.scale(c.d_in() as f64))
}

/// Process matrix of the circuit `pre → slot → mid → slot → post`, with
/// memory lines carried from `pre` to `mid` and from `mid` to `post`.
///
/// For order `1<2`: `pre: I0 → I1·A`, `mid: O1·A → I2·A'`,
/// `post: O2·A' → O0`; for `2<1` the slots swap roles.
pub fn process_of_circuit_with_memory(
    pre: &ChoiChannel,
    mid: &ChoiChannel,
    post: &ChoiChannel,
    dims: ProcessDims,
    order: Order,
) -> Result<ProcessMatrix> {
    dims.check()?;
    let d = dims.as_vec();
    let (fi, fo, si, so) = match order {
        Order::FirstThenSecond => (I1, O1, I2, O2),
        Order::SecondThenFirst => (I2, O2, I1, O1),
    };
    let chain = |ok: bool, what: &str| {
        if ok {
            Ok(())
        } else {
            Err(Error::dims(format!(
                "circuit dimension chain broken at {what}"
            )))
        }
    };
    chain(pre.d_in() == d[I0], "global past")?;
    chain(pre.d_out().is_multiple_of(d[fi]), "first slot input")?;
    let a = pre.d_out() / d[fi];
    chain(mid.d_in() == d[fo] * a, "first slot output")?;
    chain(mid.d_out().is_multiple_of(d[si]), "second slot input")?;
    let a2 = mid.d_out() / d[si];
    chain(post.d_in() == d[so] * a2, "second slot output")?;
    chain(post.d_out() == d[O0], "global future")?;

    // Full space: the six process factors, then A (6) and A' (7).
    let mut big = d.clone();
    big.push(a);
    big.push(a2);
    let c_pre = partial_transpose(&raw_choi(pre, vec![d[I0], d[fi], a])?, 2)?;
    let c_mid = partial_transpose(&raw_choi(mid, vec![d[fo], a, d[si], a2])?, 3)?;
    let c_post = raw_choi(post, vec![d[so], a2, d[O0]])?;
    let e_pre = embed(&c_pre, &[I0, fi, 6], &big)?;
    let e_mid = embed(&c_mid, &[fo, 6, si, 7], &big)?;
    let e_post = embed(&c_post, &[so, 7, O0], &big)?;
    let prod = e_pre.matmul(&e_mid).matmul(&e_post);
    let cw = partial_trace(&prod, &[0, 1, 2, 3, 4, 5])?;
    let norm = (d[I0] * d[O1] * d[O2]) as f64;
    let w = cw.scale(1.0 / norm).hermitian_part();
    ProcessMatrix::new(ComplexMatrix::new(w.into_matrix(), d)?, dims)
}

/// Process matrix of `pre → slot → mid → slot → post` without memory;
/// dimensions follow from the channels.
pub fn process_of_circuit(
    pre: &ChoiChannel,
    mid: &ChoiChannel,
    post: &ChoiChannel,
    order: Order,
) -> Result<ProcessMatrix> {
    let dims = match order {
        Order::FirstThenSecond => ProcessDims::new(
            pre.d_in(),
            pre.d_out(),
            mid.d_in(),
            mid.d_out(),
            post.d_in(),
            post.d_out(),
        ),
        Order::SecondThenFirst => ProcessDims::new(
            pre.d_in(),
            mid.d_out(),
            post.d_in(),
            pre.d_out(),
            mid.d_in(),
            post.d_out(),
        ),
    };
    process_of_circuit_with_memory(pre, mid, post, dims, order)
}

/// `D · tr[W (ρᵀ ⊗ J_Cᵀ ⊗ J_Dᵀ ⊗ M)]` with `D = d_I0 d_I1 d_O1 d_I2 d_O2`;
/// `J_C` on `(I1, O1)`, `J_D` on `(I2, O2)`, `M` on `O0`.
pub fn probability(
    w: &ProcessMatrix,
    j_c: &ComplexMatrix,
    j_d: &ComplexMatrix,
    m: &ComplexMatrix,
    rho: &ComplexMatrix,
) -> Result<f64> {
    let dims = w.dims();
    let want = [
        (rho.order(), dims.i0, "state"),
        (j_c.order(), dims.i1 * dims.o1, "first slot"),
        (j_d.order(), dims.i2 * dims.o2, "second slot"),
        (m.order(), dims.o0, "effect"),
    ];
    for (got, exp, what) in want {
        if got != exp {
            return Err(Error::dims(format!("{what}: order {got}, expected {exp}")));
        }
    }
    let op = tensor_all(&[&rho.transpose(), &j_c.transpose(), &j_d.transpose(), m]);
    Ok(dims.prefactor() * (w.matrix().matrix() * op.matrix()).trace().re)
}

/// Nonseparable two-party process with trivial global past and future:
/// `W = [1 + (Z_O1 Z_I2 + Z_I1 X_I2 Z_O2)/√2] / 16`.
pub fn ocb_process() -> ProcessMatrix {
    let dims = ProcessDims::new(1, 2, 2, 2, 2, 1);
    let one = ComplexMatrix::identity(&[1]);
    let i = pauli::i2();
    let (x, z) = (pauli::x(), pauli::z());
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let id = ComplexMatrix::identity(&dims.as_vec());
    let t1 = tensor_all(&[&one, &i, &z, &z, &i, &one]);
    let t2 = tensor_all(&[&one, &z, &i, &x, &z, &one]);
    let w = &id + &(&t1 + &t2).scale(s);
    ProcessMatrix::new(w.scale(1.0 / 16.0), dims).expect("fixed dims")
}

/// Robustness of a process or superinstrument with re-verified witness.
#[derive(Clone, Debug)]
pub struct SupermapRobustness {
    pub result: RobustnessResult,
    pub witness_check: WitnessCheck,
}

pub fn supermap_robustness(
    obj: &ChoiObject,
    f: &ConicFreeSet,
    opts: &RobustnessOptions,
) -> Result<SupermapRobustness> {
    if !matches!(
        obj,
        ChoiObject::Process(_) | ChoiObject::Superinstruments(_)
    ) {
        return Err(Error::Structural(
            "expected a process matrix or superinstrument".into(),
        ));
    }
    let result = robustness::robustness(obj, f, opts)?.require_optimal()?;
    let witness_check = robustness::verify_witness(&result.witness, obj, f, opts)?;
    Ok(SupermapRobustness {
        result,
        witness_check,
    })
}

/// Referee ensemble, the two players' instruments and the final POVM used
/// with one setting.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CollabDevice {
    pub probs: Vec<f64>,
    /// States on `I0`.
    pub states: Vec<ComplexMatrix>,
    /// Choi blocks on `(I1, O1)`; completion last.
    pub first: Vec<ComplexMatrix>,
    /// Choi blocks on `(I2, O2)`; completion last.
    pub second: Vec<ComplexMatrix>,
    /// Effects on `O0`; completion last.
    pub povm: Vec<ComplexMatrix>,
}

impl CollabDevice {
    fn shape(&self) -> [usize; 4] {
        [
            self.states.len(),
            self.first.len(),
            self.second.len(),
            self.povm.len(),
        ]
    }
}

/// Collaborative game on a process (one block) or superinstrument.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CollaborativeGame {
    pub layout: BlockLayout,
    pub devices: Vec<CollabDevice>,
    /// Per block, dense `ω[i][k][l][j]` (state, first outcome, second
    /// outcome, effect) in row-major order.
    pub rewards: Vec<Vec<f64>>,
    pub canonical_record: CanonicalRecord,
}

fn process_dims_of(layout: &BlockLayout) -> Result<ProcessDims> {
    match layout {
        BlockLayout::Process { dims } | BlockLayout::Superinstruments { dims, .. } => Ok(*dims),
        other => Err(Error::Structural(format!(
            "collaborative games need supermaps, got {other:?}"
        ))),
    }
}

const GAME_TOL: f64 = 1e-9;

fn check_instrument(blocks: &[ComplexMatrix], d_in: usize, d_out: usize, what: &str) -> Result<()> {
    let n = d_in * d_out;
    let mut sum = DMatrix::<C64>::zeros(n, n);
    for b in blocks {
        if b.order() != n {
            return Err(Error::dims(format!("{what}: block of order {}", b.order())));
        }
        if b.min_eigenvalue() < -GAME_TOL {
            return Err(Error::Invalid(format!("{what}: block is not positive")));
        }
        sum += b.matrix();
    }
    let s = ComplexMatrix::new(sum, vec![d_in, d_out])?;
    let marg = partial_trace(&s, &[0])?;
    let r = marg.max_abs_diff(&ComplexMatrix::identity(&[d_in]).scale(1.0 / d_in as f64));
    if r > GAME_TOL {
        return Err(Error::Invalid(format!(
            "{what}: blocks do not sum to a channel ({r:e})"
        )));
    }
    Ok(())
}

impl CollaborativeGame {
    pub fn new(
        layout: BlockLayout,
        devices: Vec<CollabDevice>,
        rewards: Vec<Vec<f64>>,
        canonical_record: CanonicalRecord,
    ) -> Result<Self> {
        let g = CollaborativeGame {
            layout,
            devices,
            rewards,
            canonical_record,
        };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<()> {
        let dims = process_dims_of(&self.layout)?;
        if self.devices.len() != self.layout.n_devices() {
            return Err(Error::dims("one device per setting"));
        }
        let mut total = 0.0;
        for (x, dev) in self.devices.iter().enumerate() {
            if dev.probs.len() != dev.states.len() {
                return Err(Error::dims("probabilities and states differ in length"));
            }
            for (p, rho) in dev.probs.iter().zip(&dev.states) {
                if *p < 0.0 || rho.order() != dims.i0 || rho.min_eigenvalue() < -GAME_TOL {
                    return Err(Error::Invalid(format!(
                        "setting {x}: invalid ensemble member"
                    )));
                }
                if (rho.trace_re() - 1.0).abs() > GAME_TOL {
                    return Err(Error::Invalid(format!(
                        "setting {x}: state trace {}",
                        rho.trace_re()
                    )));
                }
                total += p;
            }
            check_instrument(&dev.first, dims.i1, dims.o1, "first instrument")?;
            check_instrument(&dev.second, dims.i2, dims.o2, "second instrument")?;
            let mut sum = DMatrix::<C64>::zeros(dims.o0, dims.o0);
            for m in &dev.povm {
                if m.order() != dims.o0 || m.min_eigenvalue() < -GAME_TOL {
                    return Err(Error::Invalid("invalid effect".into()));
                }
                sum += m.matrix();
            }
            if (sum - DMatrix::<C64>::identity(dims.o0, dims.o0)).camax() > GAME_TOL {
                return Err(Error::Invalid("effects do not sum to identity".into()));
            }
        }
        if (total - 1.0).abs() > GAME_TOL {
            return Err(Error::Invalid(format!("probabilities sum to {total}")));
        }
        let index = self.layout.block_index();
        if self.rewards.len() != index.len() {
            return Err(Error::dims("one reward table per block"));
        }
        for (b, &(x, _)) in index.iter().enumerate() {
            let n: usize = self.devices[x].shape().iter().product();
            if self.rewards[b].len() != n {
                return Err(Error::dims(format!("reward table of block {b}")));
            }
        }
        Ok(())
    }

    /// `ω[b][i][k][l][j]`.
    pub fn reward(&self, b: usize, i: usize, k: usize, l: usize, j: usize) -> f64 {
        let x = self.layout.block_index()[b].0;
        let [_, nk, nl, nj] = self.devices[x].shape();
        self.rewards[b][((i * nk + k) * nl + l) * nj + j]
    }
}

impl LinearGame for CollaborativeGame {
    fn layout(&self) -> BlockLayout {
        self.layout.clone()
    }

    /// `Q_b = D Σ p_i ω ρ_iᵀ ⊗ A_kᵀ ⊗ B_lᵀ ⊗ M_j`.
    fn payoff_operators(&self) -> Vec<DMatrix<C64>> {
        let dims = process_dims_of(&self.layout).expect("validated layout");
        let n = dims.total();
        let pref = dims.prefactor();
        self.layout
            .block_index()
            .iter()
            .enumerate()
            .map(|(b, &(x, _))| {
                let dev = &self.devices[x];
                let [ni, nk, nl, nj] = dev.shape();
                let mut q = DMatrix::<C64>::zeros(n, n);
                let rt: Vec<ComplexMatrix> =
                    dev.states.iter().map(ComplexMatrix::transpose).collect();
                let at: Vec<ComplexMatrix> =
                    dev.first.iter().map(ComplexMatrix::transpose).collect();
                let bt: Vec<ComplexMatrix> =
                    dev.second.iter().map(ComplexMatrix::transpose).collect();
                #[allow(clippy::needless_range_loop)]
                for i in 0..ni {
                    for k in 0..nk {
                        let left = tensor(&rt[i], &at[k]);
                        for l in 0..nl {
                            let mid = tensor(&left, &bt[l]);
                            for j in 0..nj {
                                let w = self.rewards[b][((i * nk + k) * nl + l) * nj + j];
                                if w != 0.0 {
                                    let op = tensor(&mid, &dev.povm[j]);
                                    q += op.into_matrix() * C64::new(w * dev.probs[i] * pref, 0.0);
                                }
                            }
                        }
                    }
                }
                q
            })
            .collect()
    }

    fn record(&self) -> CanonicalRecord {
        self.canonical_record
    }

    fn remap_rewards(&mut self, shift: f64, scale: f64) {
        for w in self.rewards.iter_mut().flatten() {
            *w = (*w - shift) / scale;
        }
        self.canonical_record = self.canonical_record.then(shift, scale);
    }
}

/// Payoff by summing the probability rule over every outcome combination.
pub fn collaborative_payoff(g: &CollaborativeGame, obj: &ChoiObject) -> Result<f64> {
    if g.layout != obj.layout() {
        return Err(Error::dims("game and object layouts differ"));
    }
    let dims = process_dims_of(&g.layout)?;
    let mut total = 0.0;
    for (b, (&(x, _), wb)) in g.layout.block_index().iter().zip(obj.blocks()).enumerate() {
        let w = ProcessMatrix::new(wb, dims)?;
        let dev = &g.devices[x];
        let [ni, nk, nl, nj] = dev.shape();
        for i in 0..ni {
            for k in 0..nk {
                for l in 0..nl {
                    for j in 0..nj {
                        let r = g.reward(b, i, k, l, j);
                        if r != 0.0 {
                            let p = probability(
                                &w,
                                &dev.first[k],
                                &dev.second[l],
                                &dev.povm[j],
                                &dev.states[i],
                            )?;
                            total += dev.probs[i] * r * p;
                        }
                    }
                }
            }
        }
    }
    Ok(total)
}

/// Factor of one group, split into signed positive parts.
struct SplitFactor {
    /// `(index into the group's part list, sign)`.
    parts: Vec<(usize, f64)>,
}

/// Builds the collaborative game of a supermap witness. Each `Y_b / D` is
/// decomposed into products over `(I0 | I1 O1 | I2 O2 | O0)`; state parts
/// become the ensemble, slot parts instrument blocks (shrunk toward the
/// completely depolarizing channel and completed), final parts effects.
pub fn game_from_process_witness(w: &Witness) -> Result<CollaborativeGame> {
    let dims = process_dims_of(&w.layout)?;
    let min_eig = w.min_eigenvalue();
    if min_eig < -1e-9 {
        return Err(Error::Verification {
            what: "witness positivity".into(),
            residual: -min_eig,
            tolerance: 1e-9,
        });
    }
    let pref = dims.prefactor();
    let groups = vec![vec![0], vec![1, 2], vec![3, 4], vec![5]];
    let index = w.layout.block_index();
    let n_dev = w.layout.n_devices();
    // parts[x][g]: raw positive parts of group g for setting x.
    let mut parts: Vec<[Vec<ComplexMatrix>; 4]> = (0..n_dev).map(|_| Default::default()).collect();
    // (block, part indices per group, coefficient)
    let mut entries: Vec<(usize, [usize; 4], f64)> = Vec::new();
    for (b, &(x, _)) in index.iter().enumerate() {
        let y = ComplexMatrix::new(&w.blocks[b] * C64::new(1.0 / pref, 0.0), dims.as_vec())?;
        let terms = operator_schmidt_groups(&y, &groups)?;
        let mut cache: std::collections::HashMap<(usize, Vec<usize>), SplitFactor> =
            Default::default();
        for term in &terms {
            let mut split: Vec<Vec<(usize, f64)>> = Vec::with_capacity(4);
            #[allow(clippy::needless_range_loop)]
            for g in 0..4 {
                let key = (g, term.path[..=g].to_vec());
                if !cache.contains_key(&key) {
                    let (p, n) =
                        crate::linalg::positive_negative_parts(&term.factors[g], SPLIT_TOL)?;
                    let mut sf = SplitFactor { parts: Vec::new() };
                    for (part, sign) in [(p, 1.0), (n, -1.0)] {
                        if part.frobenius_norm() > SPLIT_TOL {
                            parts[x][g].push(part);
                            sf.parts.push((parts[x][g].len() - 1, sign));
                        }
                    }
                    cache.insert(key.clone(), sf);
                }
                split.push(cache[&key].parts.clone());
            }
            for &(i, s0) in &split[0] {
                for &(k, s1) in &split[1] {
                    for &(l, s2) in &split[2] {
                        for &(j, s3) in &split[3] {
                            entries.push((b, [i, k, l, j], term.weight * s0 * s1 * s2 * s3));
                        }
                    }
                }
            }
        }
    }
    let n_states: usize = parts.iter().map(|p| p[0].len()).sum();
    if n_states == 0 {
        return Err(Error::DegenerateGame(0.0));
    }
    let p = 1.0 / n_states as f64;
    let mut devices = Vec::with_capacity(n_dev);
    // Scalars with F_g = scalar · (device element) for each part.
    let mut scalars: Vec<[Vec<f64>; 4]> = Vec::with_capacity(n_dev);
    for part in parts.iter_mut().take(n_dev) {
        let [st, p1, p2, ef] = std::mem::take(part);
        let state_tr: Vec<f64> = st.iter().map(ComplexMatrix::trace_re).collect();
        let states: Vec<ComplexMatrix> = st
            .iter()
            .zip(&state_tr)
            .map(|(s, tr)| s.transpose().scale(1.0 / tr))
            .collect();
        let (first, s1) = complete_instrument(&p1, dims.i1, dims.o1)?;
        let (second, s2) = complete_instrument(&p2, dims.i2, dims.o2)?;
        let (povm, sigma) = complete_povm(&ef, dims.o0)?;
        scalars.push([
            state_tr,
            vec![1.0 / s1; p1.len()],
            vec![1.0 / s2; p2.len()],
            vec![sigma; ef.len()],
        ]);
        devices.push(CollabDevice {
            probs: vec![p; states.len()],
            states,
            first,
            second,
            povm,
        });
    }
    let mut rewards: Vec<Vec<f64>> = index
        .iter()
        .map(|&(x, _)| vec![0.0; devices[x].shape().iter().product()])
        .collect();
    for (b, [i, k, l, j], c) in entries {
        let x = index[b].0;
        let sc = &scalars[x];
        let [_, nk, nl, nj] = devices[x].shape();
        rewards[b][((i * nk + k) * nl + l) * nj + j] +=
            c * sc[0][i] * sc[1][k] * sc[2][l] * sc[3][j] / p;
    }
    let g = CollaborativeGame::new(
        w.layout.clone(),
        devices,
        rewards,
        CanonicalRecord::default(),
    )?;
    let r = crate::games::exactness_residual(&g, &w.blocks);
    if r > EXACTNESS_TOL {
        return Err(Error::Verification {
            what: "process witness decomposition".into(),
            residual: r,
            tolerance: EXACTNESS_TOL,
        });
    }
    Ok(g)
}

/// Instrument blocks `s Pᵀ` plus the completion `I/(d_in d_out) - s Σ Pᵀ`,
/// with `s = 1 / (d_in d_out λ_max(Σ Pᵀ))`.
fn complete_instrument(
    parts: &[ComplexMatrix],
    d_in: usize,
    d_out: usize,
) -> Result<(Vec<ComplexMatrix>, f64)> {
    let n = d_in * d_out;
    let mut sum = DMatrix::<C64>::zeros(n, n);
    let tp: Vec<ComplexMatrix> = parts.iter().map(ComplexMatrix::transpose).collect();
    for q in &tp {
        sum += q.matrix();
    }
    let lmax = if tp.is_empty() {
        1.0
    } else {
        *eig_hermitian_matrix(&sum).values.last().expect("nonempty")
    };
    if lmax <= 0.0 {
        return Err(Error::Invalid(
            "slot factor cannot be completed to an instrument".into(),
        ));
    }
    let s = 1.0 / (n as f64 * lmax);
    let mut blocks: Vec<ComplexMatrix> = tp
        .iter()
        .map(|q| q.scale(s).with_dims(vec![d_in, d_out]))
        .collect::<Result<_>>()?;
    let completion =
        DMatrix::<C64>::identity(n, n) * C64::new(1.0 / n as f64, 0.0) - sum * C64::new(s, 0.0);
    blocks.push(ComplexMatrix::new(completion, vec![d_in, d_out])?.hermitian_part());
    Ok((blocks, s))
}

/// Effects `P / σ` plus the completion, with `σ = λ_max(Σ P)`.
fn complete_povm(parts: &[ComplexMatrix], d: usize) -> Result<(Vec<ComplexMatrix>, f64)> {
    let mut sum = DMatrix::<C64>::zeros(d, d);
    for q in parts {
        sum += q.matrix();
    }
    let sigma = if parts.is_empty() {
        1.0
    } else {
        *eig_hermitian_matrix(&sum).values.last().expect("nonempty")
    };
    let mut povm: Vec<ComplexMatrix> = parts.iter().map(|q| q.scale(1.0 / sigma)).collect();
    let completion = DMatrix::<C64>::identity(d, d) - sum * C64::new(1.0 / sigma, 0.0);
    povm.push(ComplexMatrix::new(completion, vec![d])?.hermitian_part());
    Ok((povm, sigma))
}

/// Equality check for processes and superinstruments.
pub fn verify_theorem2(
    candidate: &ChoiObject,
    f: &ConicFreeSet,
    tol: f64,
    opts: &RobustnessOptions,
) -> Result<Verification<CollaborativeGame>> {
    verify_equality(candidate, f, tol, opts, game_from_process_witness)
}
