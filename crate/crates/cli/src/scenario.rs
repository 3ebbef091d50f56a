//! Scenario files: parsing with field paths in every diagnostic.

use std::fmt;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::Value;

/// A rejected scenario: the offending field and what is wrong with it.
#[derive(Clone, Debug, PartialEq)]
pub struct SchemaError {
    pub field: String,
    pub message: String,
}

impl SchemaError {
    pub fn new(field: impl Into<String>, message: impl Into<String>) -> Self {
        SchemaError { field: field.into(), message: message.into() }
    }
}

impl fmt::Display for SchemaError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.field.is_empty() || self.field == "." {
            write!(f, "{}", self.message)
        } else {
            write!(f, "field `{}`: {}", self.field, self.message)
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TaskKind {
    Classify,
    Jle,
    CertifyDfe,
    Persist,
    Orbit,
    Stabilize,
    Markov,
    Simulate,
}

impl TaskKind {
    pub fn name(self) -> &'static str {
        match self {
            TaskKind::Classify => "classify",
            TaskKind::Jle => "jle",
            TaskKind::CertifyDfe => "certify-dfe",
            TaskKind::Persist => "persist",
            TaskKind::Orbit => "orbit",
            TaskKind::Stabilize => "stabilize",
            TaskKind::Markov => "markov",
            TaskKind::Simulate => "simulate",
        }
    }

    fn min_models(self) -> usize {
        match self {
            TaskKind::Persist | TaskKind::Orbit | TaskKind::Stabilize => 2,
            _ => 1,
        }
    }

    fn uses_seed(self) -> bool {
        matches!(self, TaskKind::Jle | TaskKind::CertifyDfe | TaskKind::Markov)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    /// Diagonal of `D`.
    pub d: Vec<f64>,
    /// Rows of `B`.
    pub b: Vec<Vec<f64>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawScenario {
    name: String,
    models: Vec<ModelSpec>,
    task: TaskKind,
    #[serde(default)]
    params: Option<Value>,
    #[serde(default)]
    seed: Option<u64>,
    #[serde(default)]
    output: Option<String>,
}

fn default_step() -> f64 {
    1e-3
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClassifyParams {
    #[serde(default = "ClassifyParams::tol")]
    pub tol: f64,
    #[serde(default = "ClassifyParams::horizon")]
    pub horizon: f64,
    /// Start of the exported trajectory of the first model; default `0.1·1`.
    #[serde(default)]
    pub x0: Option<Vec<f64>>,
    #[serde(default = "default_step")]
    pub step: f64,
}

impl ClassifyParams {
    fn tol() -> f64 {
        1e-10
    }
    fn horizon() -> f64 {
        20.0
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JleParams {
    #[serde(default = "JleParams::horizon")]
    pub horizon: f64,
    #[serde(default = "JleParams::budget")]
    pub budget: usize,
    #[serde(default = "JleParams::t_block")]
    pub t_block: f64,
    #[serde(default = "JleParams::depth")]
    pub depth: usize,
    /// Length of the exported trajectory under the witness signal.
    #[serde(default = "JleParams::sim_horizon")]
    pub sim_horizon: f64,
    #[serde(default = "default_step")]
    pub step: f64,
}

impl JleParams {
    fn horizon() -> f64 {
        4.0
    }
    fn budget() -> usize {
        256
    }
    fn t_block() -> f64 {
        4.0
    }
    fn depth() -> usize {
        5
    }
    fn sim_horizon() -> f64 {
        10.0
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CertifyParams {
    #[serde(default = "JleParams::horizon")]
    pub jle_horizon: f64,
    #[serde(default = "JleParams::budget")]
    pub budget: usize,
    #[serde(default = "CertifyParams::norm_budget")]
    pub norm_budget: usize,
    #[serde(default = "CertifyParams::samples")]
    pub samples: usize,
    #[serde(default = "CertifyParams::ell")]
    pub ell: f64,
    /// Upper norm level; defaults to `n`.
    #[serde(default)]
    pub big_l: Option<f64>,
    #[serde(default = "CertifyParams::eps")]
    pub eps: f64,
    #[serde(default = "ClassifyParams::horizon")]
    pub horizon: f64,
    #[serde(default = "default_step")]
    pub step: f64,
}

impl CertifyParams {
    fn norm_budget() -> usize {
        200
    }
    fn samples() -> usize {
        1000
    }
    fn ell() -> f64 {
        0.01
    }
    fn eps() -> f64 {
        0.1
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PersistParams {
    pub kappa: Vec<f64>,
    #[serde(default = "PersistParams::horizon")]
    pub horizon: f64,
    #[serde(default = "default_step")]
    pub step: f64,
}

impl PersistParams {
    fn horizon() -> f64 {
        50.0
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OrbitParams {
    pub kappa: Vec<f64>,
    #[serde(default = "ClassifyParams::tol")]
    pub tol: f64,
    /// Number of unit periods in the exported trajectory.
    #[serde(default = "OrbitParams::periods")]
    pub periods: usize,
    #[serde(default = "default_step")]
    pub step: f64,
}

impl OrbitParams {
    fn periods() -> usize {
        3
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StabilizeParams {
    #[serde(default = "ClassifyParams::horizon")]
    pub horizon: f64,
    #[serde(default = "CertifyParams::norm_budget")]
    pub budget: usize,
    #[serde(default = "default_step")]
    pub step: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RateChange {
    pub start: f64,
    pub pi: Vec<Vec<f64>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MarkovParams {
    /// Constant rates; exclusive with `schedule`.
    #[serde(default)]
    pub pi: Option<Vec<Vec<f64>>>,
    #[serde(default)]
    pub schedule: Option<Vec<RateChange>>,
    /// Defaults to `pi` for constant rates; required with a schedule.
    #[serde(default)]
    pub pi_bar: Option<Vec<Vec<f64>>>,
    /// 1-based initial mode.
    #[serde(default = "MarkovParams::sigma0")]
    pub sigma0: usize,
    pub x0: Vec<f64>,
    #[serde(default = "PersistParams::horizon")]
    pub t_end: f64,
    #[serde(default = "MarkovParams::dt")]
    pub dt: f64,
    #[serde(default = "MarkovParams::paths")]
    pub paths: usize,
    #[serde(default = "MarkovParams::step")]
    pub step: f64,
}

impl MarkovParams {
    fn sigma0() -> usize {
        1
    }
    fn dt() -> f64 {
        0.5
    }
    fn paths() -> usize {
        10_000
    }
    fn step() -> f64 {
        1e-2
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SegmentSpec {
    /// 1-based mode.
    pub mode: usize,
    pub duration: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SignalKindSpec {
    Periodic,
    PiecewiseConstant,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SignalSpec {
    pub kind: SignalKindSpec,
    pub segments: Vec<SegmentSpec>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateParams {
    pub signal: SignalSpec,
    pub x0: Vec<f64>,
    pub horizon: f64,
    #[serde(default = "default_step")]
    pub step: f64,
    /// Integrate the linearisation instead of the SIS system.
    #[serde(default)]
    pub linear: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub enum TaskParams {
    Classify(ClassifyParams),
    Jle(JleParams),
    CertifyDfe(CertifyParams),
    Persist(PersistParams),
    Orbit(OrbitParams),
    Stabilize(StabilizeParams),
    Markov(MarkovParams),
    Simulate(SimulateParams),
}

#[derive(Clone, Debug, PartialEq)]
pub struct Scenario {
    pub name: String,
    pub models: Vec<ModelSpec>,
    pub task: TaskKind,
    pub params: TaskParams,
    pub seed: Option<u64>,
    pub output: Option<String>,
    /// The file as parsed, echoed into the report.
    pub raw: Value,
}

fn path_error<E: fmt::Display>(prefix: &str, err: serde_path_to_error::Error<E>) -> SchemaError {
    let path = err.path().to_string();
    let field = match (prefix.is_empty(), path.as_str()) {
        (true, p) => p.to_string(),
        (false, ".") => prefix.to_string(),
        (false, p) => format!("{prefix}.{p}"),
    };
    SchemaError::new(field, err.into_inner().to_string())
}

fn parse_params<P: DeserializeOwned>(value: Value) -> Result<P, SchemaError> {
    serde_path_to_error::deserialize(value).map_err(|e| path_error("params", e))
}

struct Check<'a> {
    errors: &'a mut Vec<SchemaError>,
}

impl Check<'_> {
    fn fail(&mut self, field: impl Into<String>, message: impl Into<String>) {
        self.errors.push(SchemaError::new(field, message));
    }

    fn positive(&mut self, field: &str, v: f64) {
        if !(v > 0.0 && v.is_finite()) {
            self.fail(field, format!("must be positive and finite, got {v}"));
        }
    }

    fn nonneg(&mut self, field: &str, v: f64) {
        if !(v >= 0.0 && v.is_finite()) {
            self.fail(field, format!("must be nonnegative and finite, got {v}"));
        }
    }

    fn state(&mut self, field: &str, x: &[f64], n: usize) {
        if x.len() != n {
            self.fail(field, format!("expected {n} entries, found {}", x.len()));
        }
        for (i, &v) in x.iter().enumerate() {
            if !(0.0..=1.0).contains(&v) {
                self.fail(format!("{field}[{i}]"), format!("must lie in [0, 1], got {v}"));
            }
        }
    }

    fn square(&mut self, field: &str, rows: &[Vec<f64>], n: usize) -> bool {
        if rows.len() != n {
            self.fail(field, format!("expected {n} rows, found {}", rows.len()));
            return false;
        }
        let mut ok = true;
        for (i, r) in rows.iter().enumerate() {
            if r.len() != n {
                self.fail(format!("{field}[{i}]"), format!("expected {n} entries, found {}", r.len()));
                ok = false;
            }
        }
        ok
    }

    fn kappa(&mut self, field: &str, kappa: &[f64], m: usize) {
        if kappa.len() != m {
            self.fail(field, format!("expected {m} weights (one per model), found {}", kappa.len()));
            return;
        }
        for (j, &k) in kappa.iter().enumerate() {
            if !(k >= 0.0) {
                self.fail(format!("{field}[{j}]"), format!("weights must be nonnegative, got {k}"));
            }
        }
        let sum: f64 = kappa.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            self.fail(field, format!("weights must sum to 1, got {sum}"));
        }
    }

    fn generator(&mut self, field: &str, pi: &[Vec<f64>], m: usize) {
        if !self.square(field, pi, m) {
            return;
        }
        for (i, row) in pi.iter().enumerate() {
            for (j, &v) in row.iter().enumerate() {
                if i != j && v < 0.0 {
                    self.fail(format!("{field}[{i}][{j}]"), format!("off-diagonal rate must be nonnegative, got {v}"));
                }
            }
            let s: f64 = row.iter().sum();
            let scale = row.iter().fold(1.0f64, |a, v| a.max(v.abs()));
            if s.abs() > 1e-12 * scale {
                self.fail(format!("{field}[{i}]"), format!("row must sum to 0, got {s}"));
            }
        }
    }
}

fn validate_models(models: &[ModelSpec], check: &mut Check<'_>) -> Option<usize> {
    let n = models.first()?.d.len();
    if n == 0 {
        check.fail("models[0].d", "must not be empty");
        return None;
    }
    for (k, m) in models.iter().enumerate() {
        if m.d.len() != n {
            check.fail(format!("models[{k}].d"), format!("expected {n} entries like models[0], found {}", m.d.len()));
            continue;
        }
        for (i, &v) in m.d.iter().enumerate() {
            if !(v > 0.0) {
                check.fail(format!("models[{k}].d[{i}]"), format!("recovery rate must be positive, got {v}"));
            }
        }
        if check.square(&format!("models[{k}].b"), &m.b, n) {
            for (i, row) in m.b.iter().enumerate() {
                for (j, &v) in row.iter().enumerate() {
                    if v < 0.0 {
                        check.fail(format!("models[{k}].b[{i}][{j}]"), format!("infection rate must be nonnegative, got {v}"));
                    }
                }
            }
        }
    }
    Some(n)
}

fn validate_params(params: &TaskParams, n: usize, m: usize, check: &mut Check<'_>) {
    match params {
        TaskParams::Classify(p) => {
            check.positive("params.tol", p.tol);
            check.positive("params.horizon", p.horizon);
            check.positive("params.step", p.step);
            if let Some(x0) = &p.x0 {
                check.state("params.x0", x0, n);
            }
        }
        TaskParams::Jle(p) => {
            check.positive("params.horizon", p.horizon);
            check.positive("params.t_block", p.t_block);
            check.positive("params.sim_horizon", p.sim_horizon);
            check.positive("params.step", p.step);
            if p.depth == 0 {
                check.fail("params.depth", "must be at least 1");
            }
        }
        TaskParams::CertifyDfe(p) => {
            check.positive("params.jle_horizon", p.jle_horizon);
            check.positive("params.ell", p.ell);
            check.positive("params.horizon", p.horizon);
            check.positive("params.step", p.step);
            if let Some(l) = p.big_l {
                check.positive("params.big_l", l);
                if l <= p.ell {
                    check.fail("params.big_l", format!("must exceed ell = {}", p.ell));
                }
            }
            if !(p.eps > 0.0 && p.eps < 1.0) {
                check.fail("params.eps", format!("must lie in (0, 1), got {}", p.eps));
            }
            if p.samples == 0 {
                check.fail("params.samples", "must be at least 1");
            }
        }
        TaskParams::Persist(p) => {
            check.kappa("params.kappa", &p.kappa, m);
            check.positive("params.horizon", p.horizon);
            check.positive("params.step", p.step);
        }
        TaskParams::Orbit(p) => {
            check.kappa("params.kappa", &p.kappa, m);
            check.positive("params.tol", p.tol);
            check.positive("params.step", p.step);
            if p.periods == 0 {
                check.fail("params.periods", "must be at least 1");
            }
        }
        TaskParams::Stabilize(p) => {
            check.positive("params.horizon", p.horizon);
            check.positive("params.step", p.step);
            if p.budget == 0 {
                check.fail("params.budget", "must be at least 1");
            }
        }
        TaskParams::Markov(p) => {
            match (&p.pi, &p.schedule) {
                (Some(pi), None) => check.generator("params.pi", pi, m),
                (None, Some(s)) => {
                    if s.is_empty() {
                        check.fail("params.schedule", "must not be empty");
                    }
                    for (k, c) in s.iter().enumerate() {
                        check.nonneg(&format!("params.schedule[{k}].start"), c.start);
                        check.generator(&format!("params.schedule[{k}].pi"), &c.pi, m);
                        if k == 0 && c.start != 0.0 {
                            check.fail("params.schedule[0].start", "first rate change must start at 0");
                        }
                        if k > 0 && !(c.start > s[k - 1].start) {
                            check.fail(format!("params.schedule[{k}].start"), "start times must increase");
                        }
                    }
                    if p.pi_bar.is_none() {
                        check.fail("params.pi_bar", "required when a schedule is given");
                    }
                }
                (Some(_), Some(_)) => check.fail("params.schedule", "give either `pi` or `schedule`, not both"),
                (None, None) => check.fail("params.pi", "missing; give `pi` or `schedule`"),
            }
            if let Some(bar) = &p.pi_bar {
                if check.square("params.pi_bar", bar, m) {
                    for (i, row) in bar.iter().enumerate() {
                        for (j, &v) in row.iter().enumerate() {
                            if i != j && v < 0.0 {
                                check.fail(format!("params.pi_bar[{i}][{j}]"), format!("must be Metzler, got {v}"));
                            }
                        }
                    }
                }
            }
            if p.sigma0 == 0 || p.sigma0 > m {
                check.fail("params.sigma0", format!("must be a mode in 1..={m}, got {}", p.sigma0));
            }
            check.state("params.x0", &p.x0, n);
            check.positive("params.t_end", p.t_end);
            check.positive("params.dt", p.dt);
            check.positive("params.step", p.step);
            if p.paths < episwitch_core::markov::MIN_PATHS {
                check.fail("params.paths", format!("must be at least {}, got {}", episwitch_core::markov::MIN_PATHS, p.paths));
            }
        }
        TaskParams::Simulate(p) => {
            if p.signal.segments.is_empty() {
                check.fail("params.signal.segments", "must not be empty");
            }
            for (k, s) in p.signal.segments.iter().enumerate() {
                if s.mode == 0 || s.mode > m {
                    check.fail(format!("params.signal.segments[{k}].mode"), format!("must be a mode in 1..={m}, got {}", s.mode));
                }
                check.positive(&format!("params.signal.segments[{k}].duration"), s.duration);
            }
            check.state("params.x0", &p.x0, n);
            check.positive("params.horizon", p.horizon);
            check.positive("params.step", p.step);
            let covered: f64 = p.signal.segments.iter().map(|s| s.duration).sum();
            if p.signal.kind == SignalKindSpec::PiecewiseConstant && covered < p.horizon {
                check.fail("params.horizon", format!("exceeds the piecewise-constant signal length {covered}"));
            }
        }
    }
}

impl Scenario {
    /// Parses and validates a scenario; every problem found is reported.
    pub fn parse(text: &str) -> Result<Scenario, Vec<SchemaError>> {
        let raw: Value = serde_json::from_str(text).map_err(|e| vec![SchemaError::new("", format!("invalid JSON: {e}"))])?;
        let de: RawScenario = serde_path_to_error::deserialize(raw.clone()).map_err(|e| vec![path_error("", e)])?;
        let value = de.params.clone().unwrap_or_else(|| Value::Object(Default::default()));
        let params = match de.task {
            TaskKind::Classify => parse_params(value).map(TaskParams::Classify),
            TaskKind::Jle => parse_params(value).map(TaskParams::Jle),
            TaskKind::CertifyDfe => parse_params(value).map(TaskParams::CertifyDfe),
            TaskKind::Persist => parse_params(value).map(TaskParams::Persist),
            TaskKind::Orbit => parse_params(value).map(TaskParams::Orbit),
            TaskKind::Stabilize => parse_params(value).map(TaskParams::Stabilize),
            TaskKind::Markov => parse_params(value).map(TaskParams::Markov),
            TaskKind::Simulate => parse_params(value).map(TaskParams::Simulate),
        }
        .map_err(|e| vec![e])?;

        let mut errors = Vec::new();
        let mut check = Check { errors: &mut errors };
        if de.name.trim().is_empty() {
            check.fail("name", "must not be empty");
        }
        let m = de.models.len();
        if m < de.task.min_models() {
            check.fail("models", format!("task `{}` needs at least {} models, found {m}", de.task.name(), de.task.min_models()));
        }
        if let Some(n) = validate_models(&de.models, &mut check) {
            validate_params(&params, n, m, &mut check);
        }
        if !errors.is_empty() {
            return Err(errors);
        }
        Ok(Scenario { name: de.name, models: de.models, task: de.task, params, seed: de.seed, output: de.output, raw })
    }

    /// Seed after applying a command-line override; required for randomised tasks.
    pub fn effective_seed(&self, cli: Option<u64>) -> Result<Option<u64>, SchemaError> {
        match cli.or(self.seed) {
            None if self.task.uses_seed() => {
                Err(SchemaError::new("seed", format!("task `{}` is randomised and needs a seed", self.task.name())))
            }
            s => Ok(s),
        }
    }
}
