//! States, measurements, channels, instruments and process matrices in the
//! Choi picture.
//!
//! Channel Choi matrices use the unit-trace convention
//! `J = (1/d_in) Σ_ij |i><j| ⊗ Λ(|i><j|)` on factors `(in, out)`, so
//! `tr_out J = I/d_in`. Instrument blocks carry the same prefactor and process
//! matrices are normalized to `tr W = 1`.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};
use crate::linalg::{
    self, partial_trace, pauli, tensor, ComplexMatrix, MatrixJson, C64, ONE, ZERO,
};
use crate::supermaps;

/// Tolerances used for validity checks on objects.
pub mod tol {
    pub const CONSTRUCTION: f64 = 1e-12;
    pub const DECOMPOSITION: f64 = 1e-10;
    pub const SOLVER: f64 = 1e-8;
}

#[derive(Clone, Debug, PartialEq)]
pub struct DensityMatrix {
    mat: ComplexMatrix,
}

impl DensityMatrix {
    pub fn new(mat: ComplexMatrix) -> Result<Self> {
        let h = mat.hermitian_residual();
        if h > tol::DECOMPOSITION {
            return Err(Error::NotHermitian(h));
        }
        let t = (mat.trace() - ONE).norm();
        if t > tol::DECOMPOSITION {
            return Err(Error::Invalid(format!(
                "state trace deviates from 1 by {t:e}"
            )));
        }
        let e = mat.min_eigenvalue();
        if e < -tol::DECOMPOSITION {
            return Err(Error::Invalid(format!(
                "state has negative eigenvalue {e:e}"
            )));
        }
        Ok(DensityMatrix { mat })
    }

    pub fn maximally_mixed(d: usize) -> Self {
        DensityMatrix {
            mat: ComplexMatrix::identity(&[d]).scale(1.0 / d as f64),
        }
    }

    /// `|v><v| / <v|v>`.
    pub fn pure(v: &[C64]) -> Result<Self> {
        let n: f64 = v.iter().map(|z| z.norm_sqr()).sum();
        if n == 0.0 {
            return Err(Error::Invalid("zero state vector".into()));
        }
        Ok(DensityMatrix {
            mat: ComplexMatrix::projector(v).scale(1.0 / n),
        })
    }

    pub fn dim(&self) -> usize {
        self.mat.order()
    }

    pub fn matrix(&self) -> &ComplexMatrix {
        &self.mat
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Povm {
    effects: Vec<ComplexMatrix>,
}

impl Povm {
    pub fn new(effects: Vec<ComplexMatrix>) -> Result<Self> {
        let Some(first) = effects.first() else {
            return Err(Error::Invalid("POVM needs at least one effect".into()));
        };
        let d = first.order();
        let mut sum = ComplexMatrix::zeros(&[d]);
        for e in &effects {
            if e.order() != d {
                return Err(Error::dims("POVM effects of different orders"));
            }
            let h = e.hermitian_residual();
            if h > tol::DECOMPOSITION {
                return Err(Error::NotHermitian(h));
            }
            let m = e.min_eigenvalue();
            if m < -tol::DECOMPOSITION {
                return Err(Error::Invalid(format!(
                    "effect has negative eigenvalue {m:e}"
                )));
            }
            sum = &sum + e;
        }
        let r = sum.max_abs_diff(&ComplexMatrix::identity(&[d]));
        if r > tol::DECOMPOSITION {
            return Err(Error::Invalid(format!(
                "effects sum to identity only within {r:e}"
            )));
        }
        Ok(Povm { effects })
    }

    /// Projective measurement onto the columns of `basis`.
    pub fn from_basis(basis: &DMatrix<C64>) -> Result<Self> {
        let d = basis.nrows();
        let gram = basis.adjoint() * basis;
        let r = (&gram - DMatrix::<C64>::identity(d, d)).camax();
        if r > tol::DECOMPOSITION {
            return Err(Error::Invalid(format!(
                "basis is not orthonormal (residual {r:e})"
            )));
        }
        let effects = (0..d)
            .map(|k| {
                let v: Vec<C64> = basis.column(k).iter().cloned().collect();
                ComplexMatrix::projector(&v)
            })
            .collect();
        Povm::new(effects)
    }

    pub fn computational(d: usize) -> Self {
        Povm::from_basis(&DMatrix::identity(d, d)).expect("computational basis")
    }

    /// Binary qubit measurement `(I ± η n·σ)/2`.
    pub fn noisy_qubit(axis: &ComplexMatrix, eta: f64) -> Result<Self> {
        check_unit_interval("eta", eta)?;
        let i = pauli::i2();
        Povm::new(vec![
            (&i + &axis.scale(eta)).scale(0.5),
            (&i - &axis.scale(eta)).scale(0.5),
        ])
    }

    pub fn effects(&self) -> &[ComplexMatrix] {
        &self.effects
    }

    pub fn dim(&self) -> usize {
        self.effects[0].order()
    }

    pub fn len(&self) -> usize {
        self.effects.len()
    }

    pub fn is_empty(&self) -> bool {
        self.effects.is_empty()
    }
}

fn check_unit_interval(name: &str, v: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&v) || !v.is_finite() {
        return Err(Error::ParameterOutOfRange {
            name: name.into(),
            value: v,
            range: "[0, 1]".into(),
        });
    }
    Ok(())
}

/// Channel Choi matrix on factors `(in, out)`.
#[derive(Clone, Debug, PartialEq)]
pub struct ChoiChannel {
    j: ComplexMatrix,
    d_in: usize,
    d_out: usize,
}

impl ChoiChannel {
    /// Wraps a Choi matrix after checking only its shape; use [`validate`]
    /// for the physical invariants.
    pub fn from_matrix(j: ComplexMatrix, d_in: usize, d_out: usize) -> Result<Self> {
        if j.order() != d_in * d_out {
            return Err(Error::dims(format!(
                "Choi order {} does not match {d_in}x{d_out}",
                j.order()
            )));
        }
        let j = j.with_dims(vec![d_in, d_out])?;
        Ok(ChoiChannel { j, d_in, d_out })
    }

    pub fn matrix(&self) -> &ComplexMatrix {
        &self.j
    }

    pub fn d_in(&self) -> usize {
        self.d_in
    }

    pub fn d_out(&self) -> usize {
        self.d_out
    }

    pub fn identity(d: usize) -> Self {
        channel_to_choi(&[DMatrix::identity(d, d)]).expect("identity is a channel")
    }

    /// `ρ ↦ p ρ + (1 - p) tr(ρ) I/d`.
    pub fn depolarizing(d: usize, p: f64) -> Result<Self> {
        check_unit_interval("p", p)?;
        let id = Self::identity(d);
        let full = ComplexMatrix::identity(&[d, d]).scale(1.0 / (d * d) as f64);
        Self::from_matrix(&id.j.scale(p) + &full.scale(1.0 - p), d, d)
    }

    /// `ρ ↦ Σ_a tr[N_a ρ] |a><a|`.
    pub fn measure_prepare(povm: &Povm) -> Self {
        let d = povm.dim();
        let n = povm.len();
        let mut j = ComplexMatrix::zeros(&[d, n]);
        for (a, e) in povm.effects().iter().enumerate() {
            let mut ket = ComplexMatrix::zeros(&[n]);
            ket.set(a, a, ONE);
            j = &j + &tensor(&e.transpose(), &ket);
        }
        Self::from_matrix(j.scale(1.0 / d as f64), d, n).expect("shape is consistent")
    }

    pub fn unitary(u: &ComplexMatrix) -> Result<Self> {
        channel_to_choi(&[u.matrix().clone()])
    }

    pub fn apply(&self, x: &ComplexMatrix) -> Result<ComplexMatrix> {
        apply_choi(&self.j, self.d_in, self.d_out, x)
    }
}

/// `J = (1/d_in) Σ_ij |i><j| ⊗ Σ_k K|i><j|K^H`.
///
/// Kraus operators are `d_out x d_in` matrices.
pub fn channel_to_choi(kraus: &[DMatrix<C64>]) -> Result<ChoiChannel> {
    let Some(k0) = kraus.first() else {
        return Err(Error::Invalid("empty Kraus list".into()));
    };
    let d_out = k0.nrows();
    let d_in = k0.ncols();
    let mut kk = DMatrix::<C64>::zeros(d_in, d_in);
    for m in kraus {
        if m.nrows() != d_out || m.ncols() != d_in {
            return Err(Error::dims("Kraus operators of different shapes"));
        }
        kk += m.adjoint() * m;
    }
    let r = (&kk - DMatrix::<C64>::identity(d_in, d_in)).camax();
    if r > tol::DECOMPOSITION {
        return Err(Error::NotTracePreserving(r));
    }
    let n = d_in * d_out;
    let mut j = DMatrix::<C64>::zeros(n, n);
    for m in kraus {
        // |K>> = Σ_i |i> ⊗ K|i>
        let v: Vec<C64> = (0..n).map(|idx| m[(idx % d_out, idx / d_out)]).collect();
        for r in 0..n {
            for c in 0..n {
                j[(r, c)] += v[r] * v[c].conj();
            }
        }
    }
    j /= C64::new(d_in as f64, 0.0);
    ChoiChannel::from_matrix(ComplexMatrix::from_matrix(j), d_in, d_out)
}

/// Choi of a general linear map given by its action on matrix units.
pub fn choi_of_map(
    d_in: usize,
    d_out: usize,
    f: impl Fn(&ComplexMatrix) -> ComplexMatrix,
) -> ComplexMatrix {
    let n = d_in * d_out;
    let mut j = DMatrix::<C64>::zeros(n, n);
    for i in 0..d_in {
        for k in 0..d_in {
            let mut e = ComplexMatrix::zeros(&[d_in]);
            e.set(i, k, ONE);
            let out = f(&e);
            for o in 0..d_out {
                for p in 0..d_out {
                    j[(i * d_out + o, k * d_out + p)] = out.get(o, p) / d_in as f64;
                }
            }
        }
    }
    ComplexMatrix::new(j, vec![d_in, d_out]).expect("shape is consistent")
}

/// `Λ(X) = d_in · tr_in[(X^T ⊗ I) J]`, valid for any Choi-like block.
pub fn apply_choi(
    j: &ComplexMatrix,
    d_in: usize,
    d_out: usize,
    x: &ComplexMatrix,
) -> Result<ComplexMatrix> {
    if x.order() != d_in {
        return Err(Error::dims(format!(
            "input of order {} for a channel on dimension {d_in}",
            x.order()
        )));
    }
    if j.order() != d_in * d_out {
        return Err(Error::dims("Choi block does not match channel dimensions"));
    }
    let jm = j.matrix();
    let xm = x.matrix();
    let out = DMatrix::from_fn(d_out, d_out, |o, p| {
        let mut s = ZERO;
        for a in 0..d_in {
            for b in 0..d_in {
                s += xm[(a, b)] * jm[(a * d_out + o, b * d_out + p)];
            }
        }
        s * d_in as f64
    });
    Ok(ComplexMatrix::from_matrix(out))
}

pub fn apply_channel(c: &ChoiChannel, rho: &DensityMatrix) -> Result<DensityMatrix> {
    let out = c.apply(rho.matrix())?;
    DensityMatrix::new(out.hermitian_part())
}

/// Blocks `J_x` sharing input and output dimensions.
#[derive(Clone, Debug, PartialEq)]
pub struct ChannelCollection {
    blocks: Vec<ChoiChannel>,
}

impl ChannelCollection {
    pub fn new(blocks: Vec<ChoiChannel>) -> Result<Self> {
        let Some(first) = blocks.first() else {
            return Err(Error::Invalid("channel collection is empty".into()));
        };
        let (di, d_o) = (first.d_in, first.d_out);
        if blocks.iter().any(|b| b.d_in != di || b.d_out != d_o) {
            return Err(Error::dims(
                "channels in a collection must share dimensions",
            ));
        }
        Ok(ChannelCollection { blocks })
    }

    pub fn blocks(&self) -> &[ChoiChannel] {
        &self.blocks
    }

    pub fn len(&self) -> usize {
        self.blocks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.blocks.is_empty()
    }

    pub fn d_in(&self) -> usize {
        self.blocks[0].d_in
    }

    pub fn d_out(&self) -> usize {
        self.blocks[0].d_out
    }

    /// POVMs encoded as classical-output channels `(1/d) Σ_a A_a^T ⊗ |a><a|`.
    pub fn from_povms(povms: &[Povm]) -> Result<Self> {
        Self::new(povms.iter().map(ChoiChannel::measure_prepare).collect())
    }
}

/// Instrument blocks `J_{a|x}`, indexed `blocks[x][a]`.
#[derive(Clone, Debug, PartialEq)]
pub struct InstrumentCollection {
    blocks: Vec<Vec<ComplexMatrix>>,
    d_in: usize,
    d_out: usize,
}

impl InstrumentCollection {
    pub fn new(blocks: Vec<Vec<ComplexMatrix>>, d_in: usize, d_out: usize) -> Result<Self> {
        if blocks.is_empty() || blocks.iter().any(|b| b.is_empty()) {
            return Err(Error::Invalid(
                "instrument collection needs outcomes for every setting".into(),
            ));
        }
        let mut out = Vec::with_capacity(blocks.len());
        for inst in blocks {
            let mut v = Vec::with_capacity(inst.len());
            for b in inst {
                if b.order() != d_in * d_out {
                    return Err(Error::dims("instrument block does not match dimensions"));
                }
                v.push(b.with_dims(vec![d_in, d_out])?);
            }
            out.push(v);
        }
        Ok(InstrumentCollection {
            blocks: out,
            d_in,
            d_out,
        })
    }

    pub fn blocks(&self) -> &[Vec<ComplexMatrix>] {
        &self.blocks
    }

    pub fn arities(&self) -> Vec<usize> {
        self.blocks.iter().map(|b| b.len()).collect()
    }

    pub fn d_in(&self) -> usize {
        self.d_in
    }

    pub fn d_out(&self) -> usize {
        self.d_out
    }

    /// Lüders instruments `ρ ↦ √A ρ √A` of each POVM.
    pub fn luders(povms: &[Povm]) -> Result<Self> {
        let d = povms
            .first()
            .ok_or_else(|| Error::Invalid("no POVMs".into()))?
            .dim();
        let mut blocks = Vec::new();
        for p in povms {
            let mut inst = Vec::new();
            for e in p.effects() {
                let eig = linalg::hermitian_eig(e)?;
                let root = ComplexMatrix::from_matrix(eig.reconstruct_with(|l| l.max(0.0).sqrt()));
                inst.push(cp_choi(&[root]));
            }
            blocks.push(inst);
        }
        Self::new(blocks, d, d)
    }

    /// `I_{a|x}(ρ) = tr[A_{a|x} ρ] I/d`.
    pub fn measure_prepare_mixed(povms: &[Povm]) -> Result<Self> {
        let d = povms
            .first()
            .ok_or_else(|| Error::Invalid("no POVMs".into()))?
            .dim();
        let id = ComplexMatrix::identity(&[d]).scale(1.0 / d as f64);
        let blocks = povms
            .iter()
            .map(|p| {
                p.effects()
                    .iter()
                    .map(|e| tensor(&e.transpose(), &id).scale(1.0 / d as f64))
                    .collect()
            })
            .collect();
        Self::new(blocks, d, d)
    }

    pub fn channel_sum(&self, x: usize) -> ComplexMatrix {
        let mut s = ComplexMatrix::zeros(&[self.d_in, self.d_out]);
        for b in &self.blocks[x] {
            s = &s + b;
        }
        s
    }
}

/// Choi block of a CP map with square Kraus operators (no trace condition).
pub fn cp_choi(kraus: &[ComplexMatrix]) -> ComplexMatrix {
    let d = kraus[0].order();
    let n = d * d;
    let mut j = DMatrix::<C64>::zeros(n, n);
    for k in kraus {
        let m = k.matrix();
        let v: Vec<C64> = (0..n).map(|idx| m[(idx % d, idx / d)]).collect();
        for r in 0..n {
            for c in 0..n {
                j[(r, c)] += v[r] * v[c].conj();
            }
        }
    }
    j /= C64::new(d as f64, 0.0);
    ComplexMatrix::new(j, vec![d, d]).expect("square Kraus")
}

/// Factor dimensions of a two-slot process, ordered `(I0, I1, O1, I2, O2, O0)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProcessDims {
    #[serde(rename = "I0")]
    pub i0: usize,
    #[serde(rename = "I1")]
    pub i1: usize,
    #[serde(rename = "O1")]
    pub o1: usize,
    #[serde(rename = "I2")]
    pub i2: usize,
    #[serde(rename = "O2")]
    pub o2: usize,
    #[serde(rename = "O0")]
    pub o0: usize,
}

pub const PROCESS_LABELS: [&str; 6] = ["I0", "I1", "O1", "I2", "O2", "O0"];
pub const I0: usize = 0;
pub const I1: usize = 1;
pub const O1: usize = 2;
pub const I2: usize = 3;
pub const O2: usize = 4;
pub const O0: usize = 5;

impl ProcessDims {
    pub fn new(i0: usize, i1: usize, o1: usize, i2: usize, o2: usize, o0: usize) -> Self {
        ProcessDims {
            i0,
            i1,
            o1,
            i2,
            o2,
            o0,
        }
    }

    /// Both slots on qubits, no global past or future.
    pub fn qubit_slots() -> Self {
        Self::new(1, 2, 2, 2, 2, 1)
    }

    pub fn as_vec(&self) -> Vec<usize> {
        vec![self.i0, self.i1, self.o1, self.i2, self.o2, self.o0]
    }

    pub fn total(&self) -> usize {
        self.as_vec().iter().product()
    }

    /// `D = d_I0 d_I1 d_O1 d_I2 d_O2`, the probability-rule prefactor.
    pub fn prefactor(&self) -> f64 {
        (self.i0 * self.i1 * self.o1 * self.i2 * self.o2) as f64
    }

    pub fn labels() -> Vec<String> {
        PROCESS_LABELS.iter().map(|s| s.to_string()).collect()
    }

    pub fn check(&self) -> Result<()> {
        if self.as_vec().contains(&0) {
            return Err(Error::Invalid("process factor of dimension 0".into()));
        }
        Ok(())
    }

    /// Swaps the two slots.
    pub fn swapped(&self) -> Self {
        Self::new(self.i0, self.i2, self.o2, self.i1, self.o1, self.o0)
    }
}

/// Attaches process factor dims and labels.
pub fn label_process(m: ComplexMatrix, dims: &ProcessDims) -> Result<ComplexMatrix> {
    m.with_dims(dims.as_vec())?
        .with_labels(ProcessDims::labels())
}

#[derive(Clone, Debug, PartialEq)]
pub struct ProcessMatrix {
    w: ComplexMatrix,
    dims: ProcessDims,
}

impl ProcessMatrix {
    /// Shape-checked wrapper; physical validity is reported by [`validate`].
    pub fn new(w: ComplexMatrix, dims: ProcessDims) -> Result<Self> {
        dims.check()?;
        if let Some(l) = w.labels() {
            if l.len() == 6 && l.iter().zip(PROCESS_LABELS).any(|(a, b)| a != b) {
                return Err(Error::Structural(format!("process factors labelled {l:?}")));
            }
        }
        let w = label_process(w, &dims)?;
        Ok(ProcessMatrix { w, dims })
    }

    pub fn maximally_mixed(dims: ProcessDims) -> Self {
        let n = dims.total();
        Self::new(ComplexMatrix::identity(&[n]).scale(1.0 / n as f64), dims).expect("valid dims")
    }

    pub fn matrix(&self) -> &ComplexMatrix {
        &self.w
    }

    pub fn dims(&self) -> ProcessDims {
        self.dims
    }
}

/// Probabilistic supermaps `W_{a|x}`, indexed `blocks[x][a]`.
#[derive(Clone, Debug, PartialEq)]
pub struct SuperinstrumentCollection {
    blocks: Vec<Vec<ComplexMatrix>>,
    dims: ProcessDims,
}

impl SuperinstrumentCollection {
    pub fn new(blocks: Vec<Vec<ComplexMatrix>>, dims: ProcessDims) -> Result<Self> {
        dims.check()?;
        if blocks.is_empty() || blocks.iter().any(|b| b.is_empty()) {
            return Err(Error::Invalid(
                "superinstrument collection needs outcomes for every setting".into(),
            ));
        }
        let blocks = blocks
            .into_iter()
            .map(|v| v.into_iter().map(|b| label_process(b, &dims)).collect())
            .collect::<Result<Vec<Vec<_>>>>()?;
        Ok(SuperinstrumentCollection { blocks, dims })
    }

    pub fn blocks(&self) -> &[Vec<ComplexMatrix>] {
        &self.blocks
    }

    pub fn dims(&self) -> ProcessDims {
        self.dims
    }

    pub fn arities(&self) -> Vec<usize> {
        self.blocks.iter().map(|b| b.len()).collect()
    }

    pub fn process_sum(&self, x: usize) -> ComplexMatrix {
        let mut s = ComplexMatrix::zeros(&self.dims.as_vec());
        for b in &self.blocks[x] {
            s = &s + b;
        }
        label_process(s, &self.dims).expect("dims match")
    }
}

/// Any object whose robustness can be computed.
#[derive(Clone, Debug, PartialEq)]
pub enum ChoiObject {
    Channels(ChannelCollection),
    Instruments(InstrumentCollection),
    Process(ProcessMatrix),
    Superinstruments(SuperinstrumentCollection),
}

/// Shape of the block-diagonal operator `⊕ J` that a free set is compiled
/// against.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum BlockLayout {
    Channels {
        n: usize,
        d_in: usize,
        d_out: usize,
    },
    Instruments {
        arities: Vec<usize>,
        d_in: usize,
        d_out: usize,
    },
    Process {
        dims: ProcessDims,
    },
    Superinstruments {
        arities: Vec<usize>,
        dims: ProcessDims,
    },
}

impl BlockLayout {
    /// Number of settings `|X|`.
    pub fn n_devices(&self) -> usize {
        match self {
            BlockLayout::Channels { n, .. } => *n,
            BlockLayout::Instruments { arities, .. }
            | BlockLayout::Superinstruments { arities, .. } => arities.len(),
            BlockLayout::Process { .. } => 1,
        }
    }

    /// Tensor factors of each block.
    pub fn block_dims(&self) -> Vec<usize> {
        match self {
            BlockLayout::Channels { d_in, d_out, .. }
            | BlockLayout::Instruments { d_in, d_out, .. } => {
                vec![*d_in, *d_out]
            }
            BlockLayout::Process { dims } | BlockLayout::Superinstruments { dims, .. } => {
                dims.as_vec()
            }
        }
    }

    pub fn block_order(&self) -> usize {
        self.block_dims().iter().product()
    }

    /// `(x, a)` for every flattened block, in storage order.
    pub fn block_index(&self) -> Vec<(usize, usize)> {
        match self {
            BlockLayout::Channels { n, .. } => (0..*n).map(|x| (x, 0)).collect(),
            BlockLayout::Process { .. } => vec![(0, 0)],
            BlockLayout::Instruments { arities, .. }
            | BlockLayout::Superinstruments { arities, .. } => arities
                .iter()
                .enumerate()
                .flat_map(|(x, &n)| (0..n).map(move |a| (x, a)))
                .collect(),
        }
    }

    pub fn n_blocks(&self) -> usize {
        self.block_index().len()
    }

    /// Maximally mixed object of this shape: every setting's blocks sum to
    /// the maximally mixed channel or process, split evenly over outcomes.
    pub fn maximally_mixed_blocks(&self) -> Vec<ComplexMatrix> {
        let dims = self.block_dims();
        let n = self.block_order();
        let base = ComplexMatrix::identity(&dims).scale(1.0 / n as f64);
        match self {
            BlockLayout::Channels { n, .. } => vec![base; *n],
            BlockLayout::Process { .. } => vec![base],
            BlockLayout::Instruments { arities, .. }
            | BlockLayout::Superinstruments { arities, .. } => arities
                .iter()
                .flat_map(|&k| std::iter::repeat_n(base.scale(1.0 / k as f64), k))
                .collect(),
        }
    }
}

impl ChoiObject {
    pub fn layout(&self) -> BlockLayout {
        match self {
            ChoiObject::Channels(c) => BlockLayout::Channels {
                n: c.len(),
                d_in: c.d_in(),
                d_out: c.d_out(),
            },
            ChoiObject::Instruments(i) => BlockLayout::Instruments {
                arities: i.arities(),
                d_in: i.d_in,
                d_out: i.d_out,
            },
            ChoiObject::Process(p) => BlockLayout::Process { dims: p.dims },
            ChoiObject::Superinstruments(s) => BlockLayout::Superinstruments {
                arities: s.arities(),
                dims: s.dims,
            },
        }
    }

    /// All blocks flattened in `(x, a)` order.
    pub fn blocks(&self) -> Vec<ComplexMatrix> {
        match self {
            ChoiObject::Channels(c) => c.blocks.iter().map(|b| b.j.clone()).collect(),
            ChoiObject::Instruments(i) => i.blocks.iter().flatten().cloned().collect(),
            ChoiObject::Process(p) => vec![p.w.clone()],
            ChoiObject::Superinstruments(s) => s.blocks.iter().flatten().cloned().collect(),
        }
    }

    /// Rebuilds an object of the given layout from flattened blocks.
    pub fn from_blocks(layout: &BlockLayout, blocks: Vec<ComplexMatrix>) -> Result<Self> {
        if blocks.len() != layout.n_blocks() {
            return Err(Error::Structural(format!(
                "{} blocks for a layout with {}",
                blocks.len(),
                layout.n_blocks()
            )));
        }
        let regroup = |arities: &[usize], blocks: Vec<ComplexMatrix>| {
            let mut it = blocks.into_iter();
            arities
                .iter()
                .map(|&k| it.by_ref().take(k).collect::<Vec<_>>())
                .collect::<Vec<_>>()
        };
        Ok(match layout {
            BlockLayout::Channels { d_in, d_out, .. } => {
                ChoiObject::Channels(ChannelCollection::new(
                    blocks
                        .into_iter()
                        .map(|b| ChoiChannel::from_matrix(b, *d_in, *d_out))
                        .collect::<Result<_>>()?,
                )?)
            }
            BlockLayout::Instruments {
                arities,
                d_in,
                d_out,
            } => ChoiObject::Instruments(InstrumentCollection::new(
                regroup(arities, blocks),
                *d_in,
                *d_out,
            )?),
            BlockLayout::Process { dims } => ChoiObject::Process(ProcessMatrix::new(
                blocks.into_iter().next().expect("one block"),
                *dims,
            )?),
            BlockLayout::Superinstruments { arities, dims } => ChoiObject::Superinstruments(
                SuperinstrumentCollection::new(regroup(arities, blocks), *dims)?,
            ),
        })
    }

    pub fn n_devices(&self) -> usize {
        self.layout().n_devices()
    }

    /// Convex mixture `(1 - s) self + s other` of objects with the same layout.
    pub fn mix(&self, other: &ChoiObject, s: f64) -> Result<Self> {
        let layout = self.layout();
        if layout != other.layout() {
            return Err(Error::Structural(
                "mixing objects of different shapes".into(),
            ));
        }
        let blocks = self
            .blocks()
            .iter()
            .zip(other.blocks())
            .map(|(a, b)| &a.scale(1.0 - s) + &b.scale(s))
            .collect();
        Self::from_blocks(&layout, blocks)
    }

    pub fn maximally_mixed(layout: &BlockLayout) -> Self {
        Self::from_blocks(layout, layout.maximally_mixed_blocks()).expect("layout is consistent")
    }
}

impl From<ChannelCollection> for ChoiObject {
    fn from(c: ChannelCollection) -> Self {
        ChoiObject::Channels(c)
    }
}

impl From<ChoiChannel> for ChoiObject {
    fn from(c: ChoiChannel) -> Self {
        ChoiObject::Channels(ChannelCollection::new(vec![c]).expect("single channel"))
    }
}

impl From<InstrumentCollection> for ChoiObject {
    fn from(c: InstrumentCollection) -> Self {
        ChoiObject::Instruments(c)
    }
}

impl From<ProcessMatrix> for ChoiObject {
    fn from(c: ProcessMatrix) -> Self {
        ChoiObject::Process(c)
    }
}

impl From<SuperinstrumentCollection> for ChoiObject {
    fn from(c: SuperinstrumentCollection) -> Self {
        ChoiObject::Superinstruments(c)
    }
}

/// One named invariant with its measured residual.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub residual: f64,
    pub tolerance: f64,
    pub pass: bool,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ValidityReport {
    pub checks: Vec<Check>,
    pub pass: bool,
}

impl ValidityReport {
    fn push(&mut self, name: impl Into<String>, residual: f64, tolerance: f64) {
        let pass = residual.is_finite() && residual <= tolerance;
        self.checks.push(Check {
            name: name.into(),
            residual,
            tolerance,
            pass,
        });
    }

    fn finish(mut self) -> Self {
        self.pass = self.checks.iter().all(|c| c.pass);
        self
    }

    pub fn failures(&self) -> Vec<&Check> {
        self.checks.iter().filter(|c| !c.pass).collect()
    }
}

fn psd_checks(r: &mut ValidityReport, name: &str, m: &ComplexMatrix) {
    let h = m.hermitian_residual();
    r.push(format!("{name}: hermitian"), h, tol::DECOMPOSITION);
    r.push(
        format!("{name}: positive semidefinite"),
        (-m.min_eigenvalue()).max(0.0),
        tol::DECOMPOSITION,
    );
}

fn channel_checks(
    r: &mut ValidityReport,
    name: &str,
    j: &ComplexMatrix,
    d_in: usize,
    d_out: usize,
) {
    psd_checks(r, name, j);
    r.push(
        format!("{name}: unit trace"),
        (j.trace() - ONE).norm(),
        tol::DECOMPOSITION,
    );
    let j = j
        .clone()
        .with_dims(vec![d_in, d_out])
        .expect("order checked at construction");
    let marg = partial_trace(&j, &[0]).expect("two factors");
    let target = ComplexMatrix::identity(&[d_in]).scale(1.0 / d_in as f64);
    r.push(
        format!("{name}: input marginal"),
        marg.distance(&target),
        tol::SOLVER,
    );
}

fn process_checks(r: &mut ValidityReport, name: &str, w: &ComplexMatrix, dims: &ProcessDims) {
    psd_checks(r, name, w);
    r.push(
        format!("{name}: unit trace"),
        (w.trace() - ONE).norm(),
        tol::DECOMPOSITION,
    );
    let res = supermaps::validity_residual(w, dims).unwrap_or(f64::INFINITY);
    r.push(format!("{name}: validity projection"), res, tol::SOLVER);
}

/// Lists every invariant of the object with its residual.
pub fn validate(obj: &ChoiObject) -> ValidityReport {
    let mut r = ValidityReport::default();
    match obj {
        ChoiObject::Channels(c) => {
            for (x, b) in c.blocks.iter().enumerate() {
                channel_checks(&mut r, &format!("J[{x}]"), &b.j, b.d_in, b.d_out);
            }
        }
        ChoiObject::Instruments(i) => {
            for (x, inst) in i.blocks.iter().enumerate() {
                for (a, b) in inst.iter().enumerate() {
                    psd_checks(&mut r, &format!("J[{a}|{x}]"), b);
                }
                channel_checks(
                    &mut r,
                    &format!("sum_a J[a|{x}]"),
                    &i.channel_sum(x),
                    i.d_in,
                    i.d_out,
                );
            }
        }
        ChoiObject::Process(p) => process_checks(&mut r, "W", &p.w, &p.dims),
        ChoiObject::Superinstruments(s) => {
            for (x, inst) in s.blocks.iter().enumerate() {
                for (a, b) in inst.iter().enumerate() {
                    psd_checks(&mut r, &format!("W[{a}|{x}]"), b);
                }
                process_checks(
                    &mut r,
                    &format!("sum_a W[a|{x}]"),
                    &s.process_sum(x),
                    &s.dims,
                );
            }
        }
    }
    r.finish()
}

fn param_f64(params: &Value, name: &str, default: Option<f64>) -> Result<f64> {
    match params.get(name) {
        Some(v) => v
            .as_f64()
            .ok_or_else(|| Error::Schema(format!("parameter `{name}` must be a number"))),
        None => default.ok_or_else(|| Error::Schema(format!("missing parameter `{name}`"))),
    }
}

fn param_usize(
    params: &Value,
    name: &str,
    default: usize,
    range: std::ops::RangeInclusive<usize>,
) -> Result<usize> {
    let v = match params.get(name) {
        Some(v) => v.as_u64().ok_or_else(|| {
            Error::Schema(format!("parameter `{name}` must be a nonnegative integer"))
        })? as usize,
        None => default,
    };
    if !range.contains(&v) {
        return Err(Error::ParameterOutOfRange {
            name: name.into(),
            value: v as f64,
            range: format!("[{}, {}]", range.start(), range.end()),
        });
    }
    Ok(v)
}

fn check_params(params: &Value, allowed: &[&str]) -> Result<()> {
    match params {
        Value::Null => Ok(()),
        Value::Object(map) => {
            for k in map.keys() {
                if !allowed.contains(&k.as_str()) {
                    return Err(Error::Schema(format!("unknown parameter `{k}`")));
                }
            }
            Ok(())
        }
        _ => Err(Error::Schema("parameters must be an object".into())),
    }
}

fn qubit_axis(name: &str) -> Result<ComplexMatrix> {
    match name {
        "x" => Ok(pauli::x()),
        "y" => Ok(pauli::y()),
        "z" => Ok(pauli::z()),
        other => Err(Error::UnknownTag(other.into())),
    }
}

/// Noisy `X` and `Z` qubit measurements with visibility `eta`.
pub fn noisy_xz(eta: f64) -> Result<Vec<Povm>> {
    Ok(vec![
        Povm::noisy_qubit(&pauli::x(), eta)?,
        Povm::noisy_qubit(&pauli::z(), eta)?,
    ])
}

/// Pair of testers that feed a maximally mixed state into slot 1 and read
/// its output with noisy `Z` or `X` measurements.
pub fn xz_testers(eta: f64) -> Result<SuperinstrumentCollection> {
    let dims = ProcessDims::new(1, 2, 2, 1, 1, 1);
    let blocks = [pauli::z(), pauli::x()]
        .iter()
        .map(|axis| {
            let p = Povm::noisy_qubit(axis, eta)?;
            Ok(p.effects()
                .iter()
                .map(|e| tensor(&ComplexMatrix::identity(&[2]), e).scale(0.25))
                .collect())
        })
        .collect::<Result<Vec<Vec<_>>>>()?;
    SuperinstrumentCollection::new(blocks, dims)
}

/// Built-in fixture families.
///
/// | tag | parameters |
/// |---|---|
/// | `identity` | `d` (2), `copies` (1) |
/// | `depolarizing` | `p`, `d` (2), `copies` (1) |
/// | `amplitude_damping` | `gamma`, `copies` (1) |
/// | `hadamard` | `copies` (1) |
/// | `classical` | `basis` (`"z"`), `d` (2), `copies` (1) |
/// | `noisy_xz` | `eta` |
/// | `luders_xz` | `eta` (1) |
/// | `measure_prepare_xz` | `eta` |
/// | `xz_testers` | `eta` (1) |
/// | `maximally_mixed_process` | none (qubit slots) |
/// | `sequential_identity` | `order` (`"1<2"`) |
pub fn standard_object(tag: &str, params: &Value) -> Result<ChoiObject> {
    let copies = |c: ChoiChannel, params: &Value| -> Result<ChoiObject> {
        let n = param_usize(params, "copies", 1, 1..=8)?;
        Ok(ChannelCollection::new(vec![c; n])?.into())
    };
    match tag {
        "identity" => {
            check_params(params, &["d", "copies"])?;
            let d = param_usize(params, "d", 2, 1..=8)?;
            copies(ChoiChannel::identity(d), params)
        }
        "depolarizing" => {
            check_params(params, &["p", "d", "copies"])?;
            let d = param_usize(params, "d", 2, 1..=8)?;
            let p = param_f64(params, "p", None)?;
            copies(ChoiChannel::depolarizing(d, p)?, params)
        }
        "amplitude_damping" => {
            check_params(params, &["gamma", "copies"])?;
            let g = param_f64(params, "gamma", None)?;
            check_unit_interval("gamma", g)?;
            let k0 = ComplexMatrix::from_real(2, &[1.0, 0.0, 0.0, (1.0 - g).sqrt()]);
            let k1 = ComplexMatrix::from_real(2, &[0.0, g.sqrt(), 0.0, 0.0]);
            copies(
                channel_to_choi(&[k0.into_matrix(), k1.into_matrix()])?,
                params,
            )
        }
        "hadamard" => {
            check_params(params, &["copies"])?;
            copies(ChoiChannel::unitary(&pauli::hadamard())?, params)
        }
        "classical" => {
            check_params(params, &["basis", "d", "copies"])?;
            let d = param_usize(params, "d", 2, 1..=8)?;
            let basis = params.get("basis").and_then(Value::as_str).unwrap_or("z");
            let povm = match (basis, d) {
                ("z", _) => Povm::computational(d),
                ("x", 2) => Povm::from_basis(pauli::hadamard().matrix())?,
                ("trivial", _) => Povm::new(vec![ComplexMatrix::identity(&[d])])?,
                (b, _) => return Err(Error::UnknownTag(format!("basis {b} for d = {d}"))),
            };
            let c = ChoiChannel::measure_prepare(&povm);
            // A trivial POVM has one outcome; embed it into d outputs so the
            // channel stays d -> d.
            let c = if povm.len() == d {
                c
            } else {
                let mut zero = vec![ZERO; d];
                zero[0] = ONE;
                let prep = ComplexMatrix::projector(&zero);
                ChoiChannel::from_matrix(
                    tensor(&ComplexMatrix::identity(&[d]).scale(1.0 / d as f64), &prep),
                    d,
                    d,
                )?
            };
            copies(c, params)
        }
        "noisy_xz" => {
            check_params(params, &["eta"])?;
            let eta = param_f64(params, "eta", None)?;
            Ok(ChannelCollection::from_povms(&noisy_xz(eta)?)?.into())
        }
        "noisy_pair" => {
            check_params(params, &["eta", "axes"])?;
            let eta = param_f64(params, "eta", None)?;
            let axes: Vec<String> = match params.get("axes") {
                Some(v) => serde_json::from_value(v.clone())
                    .map_err(|e| Error::Schema(format!("axes: {e}")))?,
                None => vec!["x".into(), "z".into()],
            };
            let povms = axes
                .iter()
                .map(|a| Povm::noisy_qubit(&qubit_axis(a)?, eta))
                .collect::<Result<Vec<_>>>()?;
            Ok(ChannelCollection::from_povms(&povms)?.into())
        }
        "luders_xz" => {
            check_params(params, &["eta"])?;
            let eta = param_f64(params, "eta", Some(1.0))?;
            Ok(InstrumentCollection::luders(&noisy_xz(eta)?)?.into())
        }
        "measure_prepare_xz" => {
            check_params(params, &["eta"])?;
            let eta = param_f64(params, "eta", None)?;
            Ok(InstrumentCollection::measure_prepare_mixed(&noisy_xz(eta)?)?.into())
        }
        "xz_testers" => {
            check_params(params, &["eta"])?;
            let eta = param_f64(params, "eta", Some(1.0))?;
            Ok(xz_testers(eta)?.into())
        }
        "maximally_mixed_process" => {
            check_params(params, &[])?;
            Ok(ProcessMatrix::maximally_mixed(ProcessDims::qubit_slots()).into())
        }
        "sequential_identity" => {
            check_params(params, &["order"])?;
            let order = match params.get("order").and_then(Value::as_str).unwrap_or("1<2") {
                "1<2" => supermaps::Order::FirstThenSecond,
                "2<1" => supermaps::Order::SecondThenFirst,
                o => return Err(Error::UnknownTag(format!("order {o}"))),
            };
            // Trivial global past and future: prepare |0> into the first
            // slot, wire its output to the second, discard the last output.
            let id = ChoiChannel::identity(2);
            Ok(supermaps::process_of_circuit(&prepare_zero(2), &id, &discard(2), order)?.into())
        }
        other => Err(Error::UnknownTag(other.into())),
    }
}

/// Preparation of `|0>` from a trivial input.
pub fn prepare_zero(d: usize) -> ChoiChannel {
    let mut v = vec![ZERO; d];
    v[0] = ONE;
    ChoiChannel::from_matrix(ComplexMatrix::projector(&v), 1, d).expect("1 -> d")
}

/// Trace channel onto a trivial output.
pub fn discard(d: usize) -> ChoiChannel {
    ChoiChannel::from_matrix(ComplexMatrix::identity(&[d]).scale(1.0 / d as f64), d, 1)
        .expect("d -> 1")
}

/// JSON form of every object kind. Matrices are row-major `[re, im]` pairs.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ObjectJson {
    Channels {
        d_in: usize,
        d_out: usize,
        blocks: Vec<MatrixJson>,
    },
    Instruments {
        d_in: usize,
        d_out: usize,
        blocks: Vec<Vec<MatrixJson>>,
    },
    Process {
        dims: ProcessDims,
        w: MatrixJson,
    },
    Superinstruments {
        dims: ProcessDims,
        blocks: Vec<Vec<MatrixJson>>,
    },
}

impl From<&ChoiObject> for ObjectJson {
    fn from(o: &ChoiObject) -> Self {
        match o {
            ChoiObject::Channels(c) => ObjectJson::Channels {
                d_in: c.d_in(),
                d_out: c.d_out(),
                blocks: c.blocks.iter().map(|b| MatrixJson::from(&b.j)).collect(),
            },
            ChoiObject::Instruments(i) => ObjectJson::Instruments {
                d_in: i.d_in,
                d_out: i.d_out,
                blocks: i
                    .blocks
                    .iter()
                    .map(|v| v.iter().map(MatrixJson::from).collect())
                    .collect(),
            },
            ChoiObject::Process(p) => ObjectJson::Process {
                dims: p.dims,
                w: MatrixJson::from(&p.w),
            },
            ChoiObject::Superinstruments(s) => ObjectJson::Superinstruments {
                dims: s.dims,
                blocks: s
                    .blocks
                    .iter()
                    .map(|v| v.iter().map(MatrixJson::from).collect())
                    .collect(),
            },
        }
    }
}

impl TryFrom<&ObjectJson> for ChoiObject {
    type Error = Error;
    fn try_from(j: &ObjectJson) -> Result<Self> {
        let m = |x: &MatrixJson| ComplexMatrix::try_from(x);
        let nested = |v: &Vec<Vec<MatrixJson>>| -> Result<Vec<Vec<ComplexMatrix>>> {
            v.iter().map(|r| r.iter().map(m).collect()).collect()
        };
        Ok(match j {
            ObjectJson::Channels {
                d_in,
                d_out,
                blocks,
            } => ChoiObject::Channels(ChannelCollection::new(
                blocks
                    .iter()
                    .map(|b| ChoiChannel::from_matrix(m(b)?, *d_in, *d_out))
                    .collect::<Result<_>>()?,
            )?),
            ObjectJson::Instruments {
                d_in,
                d_out,
                blocks,
            } => {
                ChoiObject::Instruments(InstrumentCollection::new(nested(blocks)?, *d_in, *d_out)?)
            }
            ObjectJson::Process { dims, w } => {
                ChoiObject::Process(ProcessMatrix::new(m(w)?, *dims)?)
            }
            ObjectJson::Superinstruments { dims, blocks } => ChoiObject::Superinstruments(
                SuperinstrumentCollection::new(nested(blocks)?, *dims)?,
            ),
        })
    }
}

impl Serialize for ChoiObject {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        ObjectJson::from(self).serialize(s)
    }
}

impl<'de> Deserialize<'de> for ChoiObject {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let j = ObjectJson::deserialize(d)?;
        ChoiObject::try_from(&j).map_err(serde::de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn identity_choi_is_max_entangled() {
        let j = ChoiChannel::identity(2);
        let phi = [ONE, ZERO, ZERO, ONE];
        let expected = ComplexMatrix::projector(&phi).scale(0.5);
        assert!(j.matrix().max_abs_diff(&expected) < 1e-15);
        let marg = partial_trace(j.matrix(), &[0]).unwrap();
        assert!(marg.max_abs_diff(&ComplexMatrix::identity(&[2]).scale(0.5)) < 1e-15);
    }

    #[test]
    fn fully_depolarizing_is_flat() {
        let j = ChoiChannel::depolarizing(2, 0.0).unwrap();
        assert!(
            j.matrix()
                .max_abs_diff(&ComplexMatrix::identity(&[4]).scale(0.25))
                < 1e-15
        );
        let rho = DensityMatrix::pure(&[ONE, C64::new(0.0, 1.0)]).unwrap();
        let out = apply_channel(&j, &rho).unwrap();
        assert!(
            out.matrix()
                .max_abs_diff(&ComplexMatrix::identity(&[2]).scale(0.5))
                < 1e-15
        );
    }

    #[test]
    fn identity_channel_acts_trivially() {
        let j = ChoiChannel::identity(3);
        let rho = DensityMatrix::pure(&[ONE, C64::new(0.3, -0.2), C64::new(-0.5, 0.1)]).unwrap();
        let out = apply_channel(&j, &rho).unwrap();
        assert!(out.matrix().max_abs_diff(rho.matrix()) < 1e-14);
    }

    #[test]
    fn non_trace_preserving_kraus_rejected() {
        let k = ComplexMatrix::from_real(2, &[1.0, 0.0, 0.0, 0.5]);
        assert!(matches!(
            channel_to_choi(&[k.into_matrix()]),
            Err(Error::NotTracePreserving(_))
        ));
    }

    #[test]
    fn classical_choi_is_diagonal() {
        let c = ChoiChannel::measure_prepare(&Povm::computational(2));
        let m = c.matrix();
        for i in 0..4 {
            for j in 0..4 {
                if i != j {
                    assert_eq!(m.get(i, j), ZERO);
                }
            }
        }
        assert!(validate(&c.into()).pass);
    }

    #[test]
    fn depolarizing_one_is_identity() {
        let d = ChoiChannel::depolarizing(2, 1.0).unwrap();
        assert!(d.matrix().max_abs_diff(ChoiChannel::identity(2).matrix()) < 1e-15);
        assert!(ChoiChannel::depolarizing(2, 1.5).is_err());
    }

    #[test]
    fn noisy_xz_at_zero_is_trivial() {
        for p in noisy_xz(0.0).unwrap() {
            for e in p.effects() {
                assert!(e.max_abs_diff(&ComplexMatrix::identity(&[2]).scale(0.5)) < 1e-15);
            }
        }
    }

    #[test]
    fn perturbed_choi_fails_marginal() {
        let mut j = ChoiChannel::identity(2).matrix().clone();
        j.set(0, 0, j.get(0, 0) + C64::new(1e-3, 0.0));
        j.set(3, 3, j.get(3, 3) - C64::new(1e-3, 0.0));
        let c = ChoiChannel::from_matrix(j, 2, 2).unwrap();
        let r = validate(&c.into());
        assert!(!r.pass);
        assert!(r.failures().iter().any(|c| c.name.contains("marginal")));
    }

    #[test]
    fn instrument_sum_rules() {
        for obj in [
            standard_object("luders_xz", &json!({"eta": 1.0})).unwrap(),
            standard_object("measure_prepare_xz", &json!({"eta": 0.3})).unwrap(),
        ] {
            let r = validate(&obj);
            assert!(r.pass, "{:?}", r.failures());
        }
    }

    #[test]
    fn testers_are_valid() {
        let r = validate(&standard_object("xz_testers", &json!({})).unwrap());
        assert!(r.pass, "{:?}", r.failures());
    }

    #[test]
    fn standard_object_errors() {
        assert!(matches!(
            standard_object("nope", &Value::Null),
            Err(Error::UnknownTag(_))
        ));
        assert!(matches!(
            standard_object("depolarizing", &json!({"p": 2.0})),
            Err(Error::ParameterOutOfRange { .. })
        ));
        assert!(matches!(
            standard_object("depolarizing", &json!({"p": 0.5, "q": 1})),
            Err(Error::Schema(_))
        ));
    }

    #[test]
    fn object_json_round_trip() {
        let obj = standard_object("luders_xz", &json!({"eta": 0.8})).unwrap();
        let s = serde_json::to_string(&obj).unwrap();
        let back: ChoiObject = serde_json::from_str(&s).unwrap();
        assert_eq!(serde_json::to_string(&back).unwrap(), s);
    }

    #[test]
    fn from_blocks_inverts_blocks() {
        let obj = standard_object("measure_prepare_xz", &json!({"eta": 0.5})).unwrap();
        let again = ChoiObject::from_blocks(&obj.layout(), obj.blocks()).unwrap();
        assert_eq!(again, obj);
        let mm = ChoiObject::maximally_mixed(&obj.layout());
        assert!(validate(&mm).pass);
    }
}
