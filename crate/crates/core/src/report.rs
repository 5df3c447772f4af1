//! Instance files, task dispatch, reports and parameter scans.

use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};
use crate::free_sets::{self, compile, ConicFreeSet, FreeSetTag, MembershipEvidence, Verdict};
use crate::games::{verify_theorem1, CanonicalRecord, InputOutputGame, PayoffReport};
use crate::objects::{standard_object, validate, BlockLayout, ChoiObject, ObjectJson};
use crate::solver::ipm::{SolverOptions, Status};
use crate::solver::robustness::{self, RobustnessOptions, Witness, WitnessCheck};
use crate::supermaps::{verify_theorem2, CollaborativeGame};

pub const SCHEMA_VERSION: u32 = 1;
/// Largest number of points a scan may request.
pub const MAX_SCAN_STEPS: usize = 10_001;
/// Width at which crossing bisection stops.
pub const BISECTION_WIDTH: f64 = 1e-6;

/// Process exit codes, one per failure class.
pub mod exit {
    pub const OK: i32 = 0;
    pub const SCHEMA: i32 = 2;
    pub const SOLVER: i32 = 3;
    pub const VERIFICATION: i32 = 4;
    pub const IO: i32 = 5;
}

impl Error {
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Solver(_) => exit::SOLVER,
            Error::Verification { .. } | Error::DegenerateGame(_) | Error::NegativeRewards => {
                exit::VERIFICATION
            }
            Error::Io(_) => exit::IO,
            _ => exit::SCHEMA,
        }
    }

    /// Short class name used in reports and scan rows.
    pub fn kind(&self) -> &'static str {
        match self.exit_code() {
            exit::SOLVER => "solver",
            exit::VERIFICATION => "verification",
            exit::IO => "io",
            _ => "schema",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    Robustness,
    Membership,
    Game,
    Verify,
    Scan,
}

/// A named object family with parameters, or an explicit object.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ObjectSpec {
    Family(FamilySpec),
    Explicit(ObjectJson),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FamilySpec {
    pub family: String,
    #[serde(default, skip_serializing_if = "Value::is_null")]
    pub params: Value,
}

impl ObjectSpec {
    /// Builds the object and rejects it unless every validity check passes.
    pub fn build(&self) -> Result<ChoiObject> {
        let obj = match self {
            ObjectSpec::Family(f) => standard_object(&f.family, &f.params)?,
            ObjectSpec::Explicit(j) => ChoiObject::try_from(j)?,
        };
        let rep = validate(&obj);
        if let Some(c) = rep.failures().first() {
            return Err(Error::Schema(format!(
                "object fails `{}` (residual {:e}, tolerance {:e})",
                c.name, c.residual, c.tolerance
            )));
        }
        Ok(obj)
    }

    /// Copy of a family spec with one numeric parameter replaced.
    pub fn with_param(&self, name: &str, value: f64) -> Result<ObjectSpec> {
        match self {
            ObjectSpec::Family(f) => {
                let mut params = match &f.params {
                    Value::Null => serde_json::Map::new(),
                    Value::Object(m) => m.clone(),
                    _ => return Err(Error::Schema("parameters must be an object".into())),
                };
                params.insert(name.to_string(), Value::from(value));
                Ok(ObjectSpec::Family(FamilySpec {
                    family: f.family.clone(),
                    params: Value::Object(params),
                }))
            }
            ObjectSpec::Explicit(_) => Err(Error::Schema(
                "scans need an object given by family and params".into(),
            )),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FreeSetSpec {
    pub tag: FreeSetTag,
    #[serde(default, skip_serializing_if = "Value::is_null")]
    pub params: Value,
}

impl FreeSetSpec {
    pub fn compile(&self, layout: &BlockLayout) -> Result<ConicFreeSet> {
        compile(self.tag, &self.params, layout)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScanSpec {
    pub parameter: String,
    pub start: f64,
    pub stop: f64,
    pub steps: usize,
}

impl ScanSpec {
    pub fn points(&self) -> Vec<f64> {
        let n = self.steps;
        (0..n)
            .map(|k| {
                if k + 1 == n {
                    self.stop
                } else {
                    self.start + (self.stop - self.start) * k as f64 / (n - 1) as f64
                }
            })
            .collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Tolerances {
    /// Allowed |ratio - (1 + R)| in verification.
    #[serde(default = "default_equality")]
    pub equality: f64,
    /// Relative duality gap at which the solver stops.
    #[serde(default = "default_gap")]
    pub gap: f64,
    /// Scaled primal and dual residual at which the solver stops.
    #[serde(default = "default_feasibility")]
    pub feasibility: f64,
}

fn default_equality() -> f64 {
    1e-5
}
fn default_gap() -> f64 {
    1e-9
}
fn default_feasibility() -> f64 {
    1e-10
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            equality: default_equality(),
            gap: default_gap(),
            feasibility: default_feasibility(),
        }
    }
}

impl Tolerances {
    pub fn solver_options(&self) -> RobustnessOptions {
        RobustnessOptions {
            solver: SolverOptions {
                gap_tol: self.gap,
                feas_tol: self.feasibility,
                ..SolverOptions::default()
            },
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InstanceFile {
    pub version: u32,
    pub object: ObjectSpec,
    pub free_set: FreeSetSpec,
    pub task: Task,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scan: Option<ScanSpec>,
    #[serde(default)]
    pub tolerances: Tolerances,
}

impl InstanceFile {
    /// Schema checks that need no numerics.
    pub fn validate(&self) -> Result<()> {
        if self.version != SCHEMA_VERSION {
            return Err(Error::Schema(format!(
                "unsupported version {} (expected {SCHEMA_VERSION})",
                self.version
            )));
        }
        let t = &self.tolerances;
        for (name, v) in [
            ("equality", t.equality),
            ("gap", t.gap),
            ("feasibility", t.feasibility),
        ] {
            if !(v.is_finite() && v > 0.0 && v < 1.0) {
                return Err(Error::Schema(format!(
                    "tolerance `{name}` = {v} must lie in (0, 1)"
                )));
            }
        }
        match (&self.task, &self.scan) {
            (Task::Scan, None) => Err(Error::Schema("task `scan` needs a `scan` block".into())),
            (Task::Scan, Some(s)) => {
                if !(2..=MAX_SCAN_STEPS).contains(&s.steps) {
                    return Err(Error::Schema(format!(
                        "scan steps {} outside 2..={MAX_SCAN_STEPS}",
                        s.steps
                    )));
                }
                if !(s.start.is_finite() && s.stop.is_finite()) {
                    return Err(Error::Schema("scan range must be finite".into()));
                }
                if !matches!(self.object, ObjectSpec::Family(_)) {
                    return Err(Error::Schema(
                        "scans need an object given by family and params".into(),
                    ));
                }
                Ok(())
            }
            (_, Some(_)) => Err(Error::Schema(
                "`scan` block is only valid for task `scan`".into(),
            )),
            _ => Ok(()),
        }
    }

    pub fn parse(text: &str) -> Result<Self> {
        let inst: InstanceFile =
            serde_json::from_str(text).map_err(|e| Error::Schema(e.to_string()))?;
        inst.validate()?;
        Ok(inst)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("instance serializes")
    }
}

/// Directory holding the shipped fixtures; `IOGAMES_FIXTURES` overrides it.
pub fn fixtures_dir() -> PathBuf {
    match std::env::var_os("IOGAMES_FIXTURES") {
        Some(p) => PathBuf::from(p),
        None => Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures"),
    }
}

pub fn load_fixture(name: &str) -> Result<InstanceFile> {
    InstanceFile::load(&fixtures_dir().join(name))
}

/// Every `*.json` instance in the fixture directory, sorted by file name.
pub fn fixture_corpus() -> Result<Vec<(String, InstanceFile)>> {
    let dir = fixtures_dir();
    let entries =
        std::fs::read_dir(&dir).map_err(|e| Error::Io(format!("{}: {e}", dir.display())))?;
    let mut names: Vec<String> = entries
        .filter_map(|e| e.ok())
        .map(|e| e.file_name().to_string_lossy().into_owned())
        .filter(|n| n.ends_with(".json"))
        .collect();
    names.sort();
    names
        .into_iter()
        .map(|n| {
            let inst = load_fixture(&n)?;
            Ok((n, inst))
        })
        .collect()
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct RunOptions {
    pub emit_witness: bool,
    pub emit_game: bool,
    /// Overrides the instance's equality tolerance.
    pub tol: Option<f64>,
    /// Worker threads for scans.
    pub jobs: usize,
}

#[derive(Clone, Debug, Serialize)]
pub struct Diagnostics {
    pub status: Status,
    pub iterations: usize,
    pub rows_used: usize,
    pub primal_residual: f64,
    pub dual_residual: f64,
    pub complementarity: f64,
    pub message: String,
}

#[derive(Clone, Debug, Serialize)]
pub struct RobustnessValues {
    pub robustness: f64,
    /// Primal optimum `1 + R`.
    pub value: f64,
    pub dual_value: f64,
    pub gap: f64,
    pub witness_check: WitnessCheck,
}

#[derive(Clone, Debug, Serialize)]
pub struct MembershipValues {
    pub verdict: Verdict,
    pub robustness: f64,
    pub gap: f64,
    /// White-noise weight needed to enter the cone; null if none suffices.
    pub noise_weight: Option<f64>,
    /// Re-verification residual of the certificate.
    pub certificate_residual: f64,
    /// `max_F tr[Y T]` for an exclusion witness.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub witness_free_max: Option<f64>,
}

#[derive(Clone, Debug, Serialize)]
#[serde(untagged)]
pub enum Values {
    Robustness(RobustnessValues),
    Membership(MembershipValues),
    Payoff(PayoffReport),
}

#[derive(Clone, Debug, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum GamePayload {
    InputOutput(InputOutputGame),
    Collaborative(CollaborativeGame),
}

impl GamePayload {
    pub fn canonical_record(&self) -> CanonicalRecord {
        match self {
            GamePayload::InputOutput(g) => g.canonical_record,
            GamePayload::Collaborative(g) => g.canonical_record,
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct ErrorInfo {
    pub kind: String,
    pub message: String,
    pub exit_code: i32,
}

#[derive(Clone, Debug, Serialize)]
pub struct ReportFile {
    pub instance: InstanceFile,
    /// `ok`, `failed` (verification did not pass) or `error`.
    pub status: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub values: Option<Values>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub diagnostics: Option<Diagnostics>,
    pub flags: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub canonical_record: Option<CanonicalRecord>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub witness: Option<Witness>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub game: Option<GamePayload>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<ErrorInfo>,
    pub timing_ms: f64,
}

impl ReportFile {
    pub fn exit_code(&self) -> i32 {
        match (&self.error, self.status.as_str()) {
            (Some(e), _) => e.exit_code,
            (None, "failed") => exit::VERIFICATION,
            _ => exit::OK,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// The report as a JSON value without the timing field.
    pub fn values_json(&self) -> Value {
        let mut v = serde_json::to_value(self).expect("report serializes");
        if let Value::Object(m) = &mut v {
            m.remove("timing_ms");
        }
        v
    }
}

struct Body {
    status: &'static str,
    values: Values,
    diagnostics: Diagnostics,
    flags: Vec<String>,
    witness: Option<Witness>,
    canonical_record: Option<CanonicalRecord>,
    game: Option<GamePayload>,
}

fn diagnostics(s: &crate::solver::ipm::Solution) -> Diagnostics {
    Diagnostics {
        status: s.status,
        iterations: s.iterations,
        rows_used: s.rows_used,
        primal_residual: s.primal_residual,
        dual_residual: s.dual_residual,
        complementarity: s.complementarity,
        message: s.message.clone(),
    }
}

fn is_supermap(layout: &BlockLayout) -> bool {
    matches!(
        layout,
        BlockLayout::Process { .. } | BlockLayout::Superinstruments { .. }
    )
}

fn run_body(inst: &InstanceFile, opts: &RunOptions) -> Result<Body> {
    let obj = inst.object.build()?;
    let f = inst.free_set.compile(&obj.layout())?;
    let sopts = inst.tolerances.solver_options();
    let mut flags: Vec<String> = f
        .surrogate()
        .map(|s| vec![s.to_string()])
        .unwrap_or_default();
    match inst.task {
        Task::Robustness => {
            let r = robustness::robustness(&obj, &f, &sopts)?.require_optimal()?;
            let check = robustness::verify_witness(&r.witness, &obj, &f, &sopts)?;
            Ok(Body {
                status: "ok",
                values: Values::Robustness(RobustnessValues {
                    robustness: r.robustness,
                    value: r.value,
                    dual_value: r.dual_value,
                    gap: r.gap,
                    witness_check: check,
                }),
                diagnostics: diagnostics(&r.solution),
                flags,
                witness: opts.emit_witness.then(|| r.witness.clone()),
                canonical_record: None,
                game: None,
            })
        }
        Task::Membership => {
            let cert = free_sets::membership(&obj, &f)?;
            let r = robustness::robustness(&obj, &f, &sopts)?.require_optimal()?;
            let witness_free_max = match &cert.evidence {
                MembershipEvidence::Witness { free_max, .. } => Some(*free_max),
                MembershipEvidence::Point(_) => None,
            };
            Ok(Body {
                status: "ok",
                values: Values::Membership(MembershipValues {
                    verdict: cert.verdict,
                    robustness: r.robustness,
                    gap: r.gap,
                    noise_weight: cert.noise_weight,
                    certificate_residual: cert.residual,
                    witness_free_max,
                }),
                diagnostics: diagnostics(&r.solution),
                flags,
                witness: opts.emit_witness.then(|| r.witness.clone()),
                canonical_record: None,
                game: None,
            })
        }
        Task::Game | Task::Verify => {
            let tol = opts.tol.unwrap_or(inst.tolerances.equality);
            let (report, game, witness, sol) = if is_supermap(&obj.layout()) {
                let v = verify_theorem2(&obj, &f, tol, &sopts)?;
                (
                    v.report,
                    GamePayload::Collaborative(v.game),
                    v.robustness.witness,
                    v.robustness.solution,
                )
            } else {
                let v = verify_theorem1(&obj, &f, tol, &sopts)?;
                (
                    v.report,
                    GamePayload::InputOutput(v.game),
                    v.robustness.witness,
                    v.robustness.solution,
                )
            };
            flags = report.flags.clone();
            let status = if inst.task == Task::Verify && !report.pass {
                "failed"
            } else {
                "ok"
            };
            let emit_game = opts.emit_game || inst.task == Task::Game;
            Ok(Body {
                status,
                values: Values::Payoff(report),
                diagnostics: diagnostics(&sol),
                flags,
                witness: opts.emit_witness.then_some(witness),
                canonical_record: Some(game.canonical_record()),
                game: emit_game.then_some(game),
            })
        }
        Task::Scan => Err(Error::Schema(
            "scan instances produce CSV; use `scan`".into(),
        )),
    }
}

/// Wall clock in milliseconds; browsers have no `Instant`, so wasm builds
/// report zero.
struct Clock(#[cfg(not(target_arch = "wasm32"))] std::time::Instant);

impl Clock {
    fn start() -> Self {
        Clock(
            #[cfg(not(target_arch = "wasm32"))]
            std::time::Instant::now(),
        )
    }

    fn elapsed_ms(&self) -> f64 {
        #[cfg(not(target_arch = "wasm32"))]
        return self.0.elapsed().as_secs_f64() * 1e3;
        #[cfg(target_arch = "wasm32")]
        0.0
    }
}

/// Runs a robustness, membership, game or verify instance. Failures are
/// reported inside the returned report rather than as `Err`.
pub fn run(inst: &InstanceFile, opts: &RunOptions) -> ReportFile {
    let t = Clock::start();
    let mut rep = ReportFile {
        instance: inst.clone(),
        status: "error".into(),
        values: None,
        diagnostics: None,
        flags: Vec::new(),
        canonical_record: None,
        witness: None,
        game: None,
        error: None,
        timing_ms: 0.0,
    };
    match inst.validate().and_then(|_| run_body(inst, opts)) {
        Ok(b) => {
            rep.status = b.status.into();
            rep.canonical_record = b.canonical_record;
            rep.values = Some(b.values);
            rep.diagnostics = Some(b.diagnostics);
            rep.flags = b.flags;
            rep.witness = b.witness;
            rep.game = b.game;
        }
        Err(e) => {
            rep.error = Some(ErrorInfo {
                kind: e.kind().into(),
                message: e.to_string(),
                exit_code: e.exit_code(),
            });
        }
    }
    rep.timing_ms = t.elapsed_ms();
    rep
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ScanRow {
    pub param: f64,
    pub robustness: Option<f64>,
    pub gap: Option<f64>,
    /// Solver status, or `error:<kind>` for a failed point.
    pub status: String,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Crossing {
    /// Last parameter known to give `R <= MEMBER_TOL`.
    pub lower: f64,
    /// First parameter known to give `R > MEMBER_TOL`.
    pub upper: f64,
    pub estimate: f64,
    pub bisections: usize,
}

#[derive(Clone, Debug, Serialize)]
pub struct ScanResult {
    pub rows: Vec<ScanRow>,
    pub crossing: Option<Crossing>,
}

impl ScanResult {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("param,robustness,gap,status\n");
        let num = |v: Option<f64>| v.map(|x| format!("{x:e}")).unwrap_or_default();
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{},{}\n",
                r.param,
                num(r.robustness),
                num(r.gap),
                r.status
            ));
        }
        out
    }
}

fn point_robustness(inst: &InstanceFile, param: f64) -> Result<(f64, f64, Status)> {
    let scan = inst
        .scan
        .as_ref()
        .ok_or_else(|| Error::Schema("missing scan block".into()))?;
    let obj = inst.object.with_param(&scan.parameter, param)?.build()?;
    let f = inst.free_set.compile(&obj.layout())?;
    let r = robustness::robustness(&obj, &f, &inst.tolerances.solver_options())?;
    Ok((r.robustness, r.gap, r.status))
}

fn scan_row(inst: &InstanceFile, param: f64) -> ScanRow {
    match point_robustness(inst, param) {
        Ok((rob, gap, status)) => ScanRow {
            param,
            robustness: Some(rob),
            gap: Some(gap),
            status: status.to_string(),
        },
        Err(e) => ScanRow {
            param,
            robustness: None,
            gap: None,
            status: format!("error:{}", e.kind()),
        },
    }
}

/// Evaluates every scan point, up to `jobs` at a time. Row order follows the
/// parameter order.
pub fn scan(inst: &InstanceFile, jobs: usize) -> Result<ScanResult> {
    inst.validate()?;
    let spec = inst
        .scan
        .as_ref()
        .ok_or_else(|| Error::Schema("task `scan` needs a `scan` block".into()))?;
    // Surface schema problems once instead of in every row.
    inst.object
        .with_param(&spec.parameter, spec.start)?
        .build()?;
    let points = spec.points();
    let jobs = jobs.clamp(1, points.len());
    let rows: Vec<ScanRow> = if jobs == 1 {
        points.iter().map(|&p| scan_row(inst, p)).collect()
    } else {
        parallel_rows(inst, &points, jobs)
    };
    let crossing = locate_crossing(inst, &rows)?;
    Ok(ScanResult { rows, crossing })
}

fn parallel_rows(inst: &InstanceFile, points: &[f64], jobs: usize) -> Vec<ScanRow> {
    let next = AtomicUsize::new(0);
    let mut slots: Vec<Option<ScanRow>> = vec![None; points.len()];
    std::thread::scope(|s| {
        let handles: Vec<_> = (0..jobs)
            .map(|_| {
                s.spawn(|| {
                    let mut done = Vec::new();
                    loop {
                        let k = next.fetch_add(1, Ordering::Relaxed);
                        if k >= points.len() {
                            break;
                        }
                        done.push((k, scan_row(inst, points[k])));
                    }
                    done
                })
            })
            .collect();
        for h in handles {
            for (k, row) in h.join().expect("scan worker panicked") {
                slots[k] = Some(row);
            }
        }
    });
    slots.into_iter().map(|r| r.expect("row")).collect()
}

fn is_free(r: &ScanRow) -> Option<bool> {
    if r.status != Status::Optimal.to_string() {
        return None;
    }
    r.robustness.map(|v| v <= free_sets::MEMBER_TOL)
}

/// Finds the first adjacent pair of rows where the candidate leaves the free
/// set and refines the transition by bisection.
pub fn locate_crossing(inst: &InstanceFile, rows: &[ScanRow]) -> Result<Option<Crossing>> {
    let Some(k) = rows
        .windows(2)
        .position(|w| is_free(&w[0]) == Some(true) && is_free(&w[1]) == Some(false))
        .or_else(|| {
            rows.windows(2)
                .position(|w| is_free(&w[0]) == Some(false) && is_free(&w[1]) == Some(true))
        })
    else {
        return Ok(None);
    };
    let (mut inside, mut outside) = if is_free(&rows[k]) == Some(true) {
        (rows[k].param, rows[k + 1].param)
    } else {
        (rows[k + 1].param, rows[k].param)
    };
    let mut n = 0;
    while (outside - inside).abs() > BISECTION_WIDTH {
        let mid = 0.5 * (inside + outside);
        let (rob, _, status) = point_robustness(inst, mid)?;
        if status != Status::Optimal {
            return Err(Error::Solver(format!(
                "bisection point {mid} ended with status {}",
                status
            )));
        }
        if rob <= free_sets::MEMBER_TOL {
            inside = mid;
        } else {
            outside = mid;
        }
        n += 1;
    }
    Ok(Some(Crossing {
        lower: inside.min(outside),
        upper: inside.max(outside),
        estimate: 0.5 * (inside + outside),
        bisections: n,
    }))
}
