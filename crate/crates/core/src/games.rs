//! Input-output games: payoffs, construction from witnesses, canonical
//! rescaling and the robustness/advantage equality check.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::free_sets::{compile_all, ConicFreeSet};
use crate::linalg::{
    eig_hermitian_matrix, operator_schmidt, positive_negative_parts, tensor, ComplexMatrix, C64,
};
use crate::objects::{apply_choi, BlockLayout, ChannelCollection, ChoiObject};
use crate::solver::robustness::{
    self, max_over_set, min_over_set, slater_check, RobustnessOptions, RobustnessResult, Witness,
    WitnessCheck,
};
use crate::solver::Status;

/// Eigenvalues this close to zero are dropped when splitting factors.
pub const SPLIT_TOL: f64 = 1e-12;
/// Payoff range below which a game cannot be canonicalized.
pub const DEGENERATE_RANGE: f64 = 1e-10;
/// Largest admissible mismatch between a constructed game and its witness.
pub const EXACTNESS_TOL: f64 = 1e-8;

/// Affine record: `raw payoff = scale · payoff + shift`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CanonicalRecord {
    pub shift: f64,
    pub scale: f64,
}

impl Default for CanonicalRecord {
    fn default() -> Self {
        CanonicalRecord {
            shift: 0.0,
            scale: 1.0,
        }
    }
}

impl CanonicalRecord {
    /// Record after a further remap `ω ↦ (ω - shift) / scale`.
    pub fn then(&self, shift: f64, scale: f64) -> Self {
        CanonicalRecord {
            shift: self.shift + self.scale * shift,
            scale: self.scale * scale,
        }
    }
}

/// A game whose payoff is linear in the object's blocks:
/// `P(J) = Σ_b Re tr[Q_b J_b]`.
pub trait LinearGame: Clone {
    fn layout(&self) -> BlockLayout;
    fn payoff_operators(&self) -> Vec<DMatrix<C64>>;
    fn record(&self) -> CanonicalRecord;
    /// `ω ↦ (ω - shift) / scale` on every reward entry, completion entries
    /// included.
    fn remap_rewards(&mut self, shift: f64, scale: f64);
}

/// `Σ_b Re tr[Q_b J_b]`.
pub fn linear_payoff<G: LinearGame>(g: &G, obj: &ChoiObject) -> Result<f64> {
    if g.layout() != obj.layout() {
        return Err(Error::dims(format!(
            "game for {:?}, object {:?}",
            g.layout(),
            obj.layout()
        )));
    }
    Ok(g.payoff_operators()
        .iter()
        .zip(obj.blocks())
        .map(|(q, j)| (q * j.matrix()).trace().re)
        .sum())
}

/// State ensemble and POVM used with one setting `x`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IoDevice {
    /// `p(i, x)` for the states of this setting.
    pub probs: Vec<f64>,
    pub states: Vec<ComplexMatrix>,
    /// POVM with the completion effect last.
    pub povm: Vec<ComplexMatrix>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InputOutputGame {
    pub layout: BlockLayout,
    pub devices: Vec<IoDevice>,
    /// `ω[b][i][j]` for every block `b = (x, a)`, states and effects of
    /// setting `x`.
    pub rewards: Vec<Vec<Vec<f64>>>,
    pub canonical_record: CanonicalRecord,
}

const GAME_TOL: f64 = 1e-9;

fn io_dims(layout: &BlockLayout) -> Result<(usize, usize)> {
    match layout {
        BlockLayout::Channels { d_in, d_out, .. }
        | BlockLayout::Instruments { d_in, d_out, .. } => Ok((*d_in, *d_out)),
        other => Err(Error::Structural(format!(
            "input-output games need channels or instruments, got {other:?}"
        ))),
    }
}

fn check_povm(povm: &[ComplexMatrix], d: usize, what: &str) -> Result<()> {
    let mut sum = DMatrix::<C64>::zeros(d, d);
    for m in povm {
        if m.order() != d {
            return Err(Error::dims(format!(
                "{what}: effect of order {}",
                m.order()
            )));
        }
        let h = m.hermitian_residual();
        if h > GAME_TOL {
            return Err(Error::NotHermitian(h));
        }
        let e = m.min_eigenvalue();
        if e < -GAME_TOL {
            return Err(Error::Invalid(format!(
                "{what}: effect with eigenvalue {e:e}"
            )));
        }
        sum += m.matrix();
    }
    let r = (sum - DMatrix::<C64>::identity(d, d)).camax();
    if r > GAME_TOL {
        return Err(Error::Invalid(format!(
            "{what}: effects sum to identity up to {r:e}"
        )));
    }
    Ok(())
}

fn check_state(rho: &ComplexMatrix, d: usize, what: &str) -> Result<()> {
    if rho.order() != d {
        return Err(Error::dims(format!(
            "{what}: state of order {}",
            rho.order()
        )));
    }
    let h = rho.hermitian_residual();
    if h > GAME_TOL {
        return Err(Error::NotHermitian(h));
    }
    let t = (rho.trace() - C64::new(1.0, 0.0)).norm();
    let e = rho.min_eigenvalue();
    if t > GAME_TOL || e < -GAME_TOL {
        return Err(Error::Invalid(format!(
            "{what}: not a density matrix (trace {t:e}, eigenvalue {e:e})"
        )));
    }
    Ok(())
}

impl InputOutputGame {
    /// Validated game: probabilities sum to one, states and POVMs are
    /// valid, reward shapes match.
    pub fn new(
        layout: BlockLayout,
        devices: Vec<IoDevice>,
        rewards: Vec<Vec<Vec<f64>>>,
        canonical_record: CanonicalRecord,
    ) -> Result<Self> {
        let g = InputOutputGame {
            layout,
            devices,
            rewards,
            canonical_record,
        };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<()> {
        let (d_in, d_out) = io_dims(&self.layout)?;
        if self.devices.len() != self.layout.n_devices() {
            return Err(Error::dims("one device per setting"));
        }
        let mut total = 0.0;
        for (x, dev) in self.devices.iter().enumerate() {
            if dev.probs.len() != dev.states.len() {
                return Err(Error::dims(format!(
                    "setting {x}: probabilities and states differ in length"
                )));
            }
            for (p, rho) in dev.probs.iter().zip(&dev.states) {
                if *p < 0.0 || !p.is_finite() {
                    return Err(Error::Invalid(format!("setting {x}: probability {p}")));
                }
                check_state(rho, d_in, &format!("setting {x}"))?;
                total += p;
            }
            check_povm(&dev.povm, d_out, &format!("setting {x}"))?;
        }
        if (total - 1.0).abs() > GAME_TOL {
            return Err(Error::Invalid(format!("probabilities sum to {total}")));
        }
        let index = self.layout.block_index();
        if self.rewards.len() != index.len() {
            return Err(Error::dims("one reward table per block"));
        }
        for (b, &(x, _)) in index.iter().enumerate() {
            let dev = &self.devices[x];
            if self.rewards[b].len() != dev.states.len()
                || self.rewards[b]
                    .iter()
                    .any(|r| r.len() != dev.povm.len() || r.iter().any(|w| !w.is_finite()))
            {
                return Err(Error::dims(format!("reward table of block {b}")));
            }
        }
        Ok(())
    }

    pub fn min_reward(&self) -> f64 {
        self.rewards
            .iter()
            .flatten()
            .flatten()
            .cloned()
            .fold(f64::INFINITY, f64::min)
    }
}

impl LinearGame for InputOutputGame {
    fn layout(&self) -> BlockLayout {
        self.layout.clone()
    }

    /// `Q_b = d_in Σ_ij p(i,x) ω_b[i][j] ρ_iᵀ ⊗ M_j`.
    fn payoff_operators(&self) -> Vec<DMatrix<C64>> {
        let (d_in, d_out) = io_dims(&self.layout).expect("validated layout");
        self.layout
            .block_index()
            .iter()
            .enumerate()
            .map(|(b, &(x, _))| {
                let dev = &self.devices[x];
                let mut q = DMatrix::<C64>::zeros(d_in * d_out, d_in * d_out);
                for (i, (p, rho)) in dev.probs.iter().zip(&dev.states).enumerate() {
                    let rt = rho.transpose();
                    for (j, m) in dev.povm.iter().enumerate() {
                        let w = self.rewards[b][i][j] * p * d_in as f64;
                        if w != 0.0 {
                            q += tensor(&rt, m).into_matrix() * C64::new(w, 0.0);
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
        for w in self.rewards.iter_mut().flatten().flatten() {
            *w = (*w - shift) / scale;
        }
        self.canonical_record = self.canonical_record.then(shift, scale);
    }
}

/// `P = Σ p(i,x) ω tr[Λ_b(ρ_i) M_j]` through the Choi pairing.
pub fn payoff(g: &InputOutputGame, obj: &ChoiObject) -> Result<f64> {
    linear_payoff(g, obj)
}

/// Same payoff, evaluated by applying every block to every state.
pub fn payoff_direct(g: &InputOutputGame, obj: &ChoiObject) -> Result<f64> {
    if g.layout != obj.layout() {
        return Err(Error::dims("game and object layouts differ"));
    }
    let (d_in, d_out) = io_dims(&g.layout)?;
    let blocks = obj.blocks();
    let mut total = 0.0;
    for (b, &(x, _)) in g.layout.block_index().iter().enumerate() {
        let dev = &g.devices[x];
        for (i, (p, rho)) in dev.probs.iter().zip(&dev.states).enumerate() {
            let out = apply_choi(&blocks[b], d_in, d_out, rho)?;
            for (j, m) in dev.povm.iter().enumerate() {
                total += p * g.rewards[b][i][j] * (out.matrix() * m.matrix()).trace().re;
            }
        }
    }
    Ok(total)
}

/// Builds the game of a witness: each `Y_b / d_in` is split into Schmidt
/// terms, every factor into positive and negative parts; left parts become
/// states, right parts effects (jointly rescaled per setting), and all
/// weights and signs go into the rewards.
pub fn game_from_witness(w: &Witness) -> Result<InputOutputGame> {
    let (d_in, d_out) = io_dims(&w.layout)?;
    let min_eig = w.min_eigenvalue();
    if min_eig < -1e-9 {
        return Err(Error::Verification {
            what: "witness positivity".into(),
            residual: -min_eig,
            tolerance: 1e-9,
        });
    }
    let index = w.layout.block_index();
    let n_dev = w.layout.n_devices();
    let mut states: Vec<Vec<ComplexMatrix>> = vec![Vec::new(); n_dev];
    let mut effects: Vec<Vec<ComplexMatrix>> = vec![Vec::new(); n_dev];
    // (block, state, effect, coefficient before effect and p scaling)
    let mut entries: Vec<(usize, usize, usize, f64)> = Vec::new();
    for (b, &(x, _)) in index.iter().enumerate() {
        let y = ComplexMatrix::new(
            &w.blocks[b] * C64::new(1.0 / d_in as f64, 0.0),
            vec![d_in, d_out],
        )?;
        for t in operator_schmidt(&y, &[0])? {
            let (lp, ln) = positive_negative_parts(&t.left, SPLIT_TOL)?;
            let (rp, rn) = positive_negative_parts(&t.right, SPLIT_TOL)?;
            let mut lefts = Vec::new();
            for (part, sign) in [(lp, 1.0), (ln, -1.0)] {
                let tr = part.trace_re();
                if tr > SPLIT_TOL {
                    states[x].push(part.transpose().scale(1.0 / tr));
                    lefts.push((states[x].len() - 1, sign * tr));
                }
            }
            let mut rights = Vec::new();
            for (part, sign) in [(rp, 1.0), (rn, -1.0)] {
                if part.frobenius_norm() > SPLIT_TOL {
                    effects[x].push(part);
                    rights.push((effects[x].len() - 1, sign));
                }
            }
            for &(i, cl) in &lefts {
                for &(j, cr) in &rights {
                    entries.push((b, i, j, t.weight * cl * cr));
                }
            }
        }
    }
    let n_states: usize = states.iter().map(Vec::len).sum();
    if n_states == 0 {
        return Err(Error::DegenerateGame(0.0));
    }
    let p = 1.0 / n_states as f64;
    let mut devices = Vec::with_capacity(n_dev);
    let mut sigmas = Vec::with_capacity(n_dev);
    for x in 0..n_dev {
        let mut sum = DMatrix::<C64>::zeros(d_out, d_out);
        for e in &effects[x] {
            sum += e.matrix();
        }
        let sigma = if effects[x].is_empty() {
            1.0
        } else {
            *eig_hermitian_matrix(&sum).values.last().expect("nonempty")
        };
        let mut povm: Vec<ComplexMatrix> =
            effects[x].iter().map(|e| e.scale(1.0 / sigma)).collect();
        let completion = DMatrix::<C64>::identity(d_out, d_out) - sum * C64::new(1.0 / sigma, 0.0);
        povm.push(ComplexMatrix::new(completion, vec![d_out])?.hermitian_part());
        devices.push(IoDevice {
            probs: vec![p; states[x].len()],
            states: std::mem::take(&mut states[x]),
            povm,
        });
        sigmas.push(sigma);
    }
    let mut rewards: Vec<Vec<Vec<f64>>> = index
        .iter()
        .map(|&(x, _)| vec![vec![0.0; devices[x].povm.len()]; devices[x].states.len()])
        .collect();
    for (b, i, j, c) in entries {
        let x = index[b].0;
        rewards[b][i][j] += c * sigmas[x] / p;
    }
    let g = InputOutputGame::new(
        w.layout.clone(),
        devices,
        rewards,
        CanonicalRecord::default(),
    )?;
    let r = exactness_residual(&g, &w.blocks);
    if r > EXACTNESS_TOL {
        return Err(Error::Verification {
            what: "witness decomposition".into(),
            residual: r,
            tolerance: EXACTNESS_TOL,
        });
    }
    Ok(g)
}

/// Largest entrywise mismatch between the game's payoff operators and `y`,
/// relative to the larger of 1 and the largest entry of `y`.
pub fn exactness_residual<G: LinearGame>(g: &G, y: &[DMatrix<C64>]) -> f64 {
    let scale = y.iter().map(|m| m.camax()).fold(1.0, f64::max);
    g.payoff_operators()
        .iter()
        .zip(y)
        .map(|(q, y)| (q - y).camax())
        .fold(0.0, f64::max)
        / scale
}

/// Minimum and maximum payoff over every object of the game's layout.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct GlobalRange {
    pub min: f64,
    pub max: f64,
}

/// Gap used for the range programs; the canonical rewards inherit their
/// accuracy from these two values.
pub const RANGE_GAP: f64 = 1e-12;

/// Solved to [`RANGE_GAP`] when the solver gets there, otherwise to the
/// caller's tolerances.
pub fn global_range<G: LinearGame>(g: &G, opts: &RobustnessOptions) -> Result<GlobalRange> {
    let all = compile_all(&g.layout());
    let q = g.payoff_operators();
    let mut tight = opts.clone();
    tight.solver.gap_tol = tight.solver.gap_tol.min(RANGE_GAP);
    let mut ends = Vec::with_capacity(2);
    for maximize in [false, true] {
        let run = |o: &RobustnessOptions| {
            if maximize {
                max_over_set(&all, &q, o)
            } else {
                min_over_set(&all, &q, o)
            }
        };
        let mut e = run(&tight)?;
        if e.status != Status::Optimal {
            e = run(opts)?;
        }
        if e.status != Status::Optimal {
            return Err(Error::Solver(format!(
                "payoff range: {}",
                e.solution.message
            )));
        }
        ends.push(e.value);
    }
    Ok(GlobalRange {
        min: ends[0],
        max: ends[1],
    })
}

/// Affinely remaps the rewards so the payoff ranges over `[0, 1]` across all
/// objects of the layout.
pub fn canonicalize<G: LinearGame>(g: &G, opts: &RobustnessOptions) -> Result<G> {
    let range = global_range(g, opts)?;
    let width = range.max - range.min;
    if width <= DEGENERATE_RANGE {
        return Err(Error::DegenerateGame(width));
    }
    let mut out = g.clone();
    out.remap_rewards(range.min, width);
    Ok(out)
}

/// `max_{T ∈ F} P(T)`.
pub fn free_max_payoff<G: LinearGame>(
    g: &G,
    f: &ConicFreeSet,
    opts: &RobustnessOptions,
) -> Result<f64> {
    f.check_layout(&g.layout())?;
    let e = max_over_set(f, &g.payoff_operators(), opts)?;
    if e.status != Status::Optimal {
        return Err(Error::Solver(format!(
            "free maximum: {}",
            e.solution.message
        )));
    }
    Ok(e.value)
}

/// One weighted, normalized state to be identified by a POVM.
#[derive(Clone, Debug, Serialize)]
pub struct DiscriminationTerm {
    pub x: usize,
    pub j: usize,
    pub weight: f64,
    pub state: ComplexMatrix,
}

/// `P = N Σ p(j,x) tr[σ̂_{j|x} M_{j|x}]`.
#[derive(Clone, Debug, Serialize)]
pub struct DiscriminationForm {
    pub norm: f64,
    pub terms: Vec<DiscriminationTerm>,
}

impl DiscriminationForm {
    pub fn payoff(&self, g: &InputOutputGame) -> f64 {
        self.norm
            * self
                .terms
                .iter()
                .map(|t| {
                    t.weight
                        * (t.state.matrix() * g.devices[t.x].povm[t.j].matrix())
                            .trace()
                            .re
                })
                .sum::<f64>()
    }
}

/// Rewrites a nonnegative-reward game on channels as minimum-error
/// discrimination of `σ_{j|x} = Σ_i p(i,x) ω_{ijx} Λ_x(ρ_{i|x})`.
pub fn discrimination_form(
    g: &InputOutputGame,
    c: &ChannelCollection,
) -> Result<DiscriminationForm> {
    if g.min_reward() < 0.0 {
        return Err(Error::NegativeRewards);
    }
    let obj: ChoiObject = c.clone().into();
    if g.layout != obj.layout() {
        return Err(Error::dims("game and channels differ in shape"));
    }
    let mut raw = Vec::new();
    for (x, ch) in c.blocks().iter().enumerate() {
        let dev = &g.devices[x];
        for j in 0..dev.povm.len() {
            let mut sigma = DMatrix::<C64>::zeros(ch.d_out(), ch.d_out());
            for (i, (p, rho)) in dev.probs.iter().zip(&dev.states).enumerate() {
                let w = p * g.rewards[x][i][j];
                if w != 0.0 {
                    sigma += ch.apply(rho)?.into_matrix() * C64::new(w, 0.0);
                }
            }
            let tr = sigma.trace().re;
            if tr > 0.0 {
                raw.push((x, j, tr, sigma * C64::new(1.0 / tr, 0.0)));
            }
        }
    }
    let norm: f64 = raw.iter().map(|r| r.2).sum();
    let terms = raw
        .into_iter()
        .map(|(x, j, tr, s)| {
            Ok(DiscriminationTerm {
                x,
                j,
                weight: tr / norm,
                state: ComplexMatrix::new(s, vec![c.d_out()])?,
            })
        })
        .collect::<Result<_>>()?;
    Ok(DiscriminationForm { norm, terms })
}

/// Residuals of the robustness/advantage equality pipeline.
#[derive(Clone, Debug, Serialize)]
pub struct PayoffReport {
    pub payoff: f64,
    pub free_max: f64,
    pub global_max: f64,
    pub global_min: f64,
    pub ratio: f64,
    /// `1 + R`.
    pub robustness_bound: f64,
    pub robustness: f64,
    pub equality_residual: f64,
    pub tolerance: f64,
    pub pass: bool,
    /// Whether the game could be canonicalized; degenerate games (typical
    /// for free candidates) are compared uncanonicalized.
    pub canonical: bool,
    pub exactness_residual: f64,
    pub duality_gap: f64,
    pub witness: WitnessCheck,
    pub slater_margin: f64,
    pub flags: Vec<String>,
}

/// Output of the full pipeline.
#[derive(Clone, Debug)]
pub struct Verification<G> {
    pub report: PayoffReport,
    pub game: G,
    pub robustness: RobustnessResult,
}

/// Robustness solve → witness → game → canonical game → payoff ratio.
pub fn verify_equality<G: LinearGame>(
    candidate: &ChoiObject,
    f: &ConicFreeSet,
    tol: f64,
    opts: &RobustnessOptions,
    build: impl Fn(&Witness) -> Result<G>,
) -> Result<Verification<G>> {
    let slater = slater_check(f, opts)?;
    if !slater.holds {
        return Err(Error::Verification {
            what: "strict feasibility of the free set".into(),
            residual: slater.margin,
            tolerance: robustness::SLATER_MARGIN,
        });
    }
    let rob = robustness::robustness(candidate, f, opts)?.require_optimal()?;
    let check = robustness::verify_witness(&rob.witness, candidate, f, opts)?;
    let raw = build(&rob.witness)?;
    let exactness = exactness_residual(&raw, &rob.witness.blocks);
    let mut flags = Vec::new();
    if let Some(s) = f.surrogate() {
        flags.push(s.to_string());
    }
    let range = global_range(&raw, opts)?;
    let width = range.max - range.min;
    // A free candidate has R = 0 and the witness can be any dual-feasible
    // point; the affine rescaling no longer preserves the ratio there.
    let (game, canonical) = if rob.robustness <= crate::free_sets::MEMBER_TOL {
        flags.push(format!(
            "robustness {:e} within membership tolerance; ratio taken on the raw game",
            rob.robustness
        ));
        (raw, false)
    } else if width > DEGENERATE_RANGE {
        let mut g = raw.clone();
        g.remap_rewards(range.min, width);
        (g, true)
    } else {
        flags.push(format!(
            "payoff range {width:e} too small; ratio taken on the raw game"
        ));
        (raw, false)
    };
    let p = linear_payoff(&game, candidate)?;
    let free_max = free_max_payoff(&game, f, opts)?;
    let ratio = p / free_max;
    let bound = rob.value;
    let residual = (ratio - bound).abs();
    let (gmin, gmax) = if canonical {
        (0.0, 1.0)
    } else {
        (range.min, range.max)
    };
    let report = PayoffReport {
        payoff: p,
        free_max,
        global_max: gmax,
        global_min: gmin,
        ratio,
        robustness_bound: bound,
        robustness: rob.robustness,
        equality_residual: residual,
        tolerance: tol,
        pass: residual <= tol && check.pass,
        canonical,
        exactness_residual: exactness,
        duality_gap: rob.gap,
        witness: check,
        slater_margin: slater.margin,
        flags,
    };
    Ok(Verification {
        report,
        game,
        robustness: rob,
    })
}

/// Equality check for channel or instrument collections.
pub fn verify_theorem1(
    candidate: &ChoiObject,
    f: &ConicFreeSet,
    tol: f64,
    opts: &RobustnessOptions,
) -> Result<Verification<InputOutputGame>> {
    verify_equality(candidate, f, tol, opts, game_from_witness)
}
