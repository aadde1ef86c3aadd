//! Scenario files in, JSON reports and eigenvalue CSV out.
//!
//! A scenario names a complex, a rank window, input fields (explicit or
//! seeded generators), tolerances, depth, seed and command options. Each
//! command runs one pipeline and returns a [`Report`] whose checks decide
//! the exit status. Reports are byte-identical for identical inputs when
//! timing is suppressed.

use std::collections::BTreeMap;
use std::sync::Arc;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::bundles::{BundleError, Certificate, ProjectionField};
use crate::chern::chern_number;
use crate::complex::{builtin, ComplexError, SampleGrid, SimplicialComplex};
use crate::field::{
    lower_semicontinuity_check, membership_check, rank_stratification, spectral_gap_eta, FieldError, Interpolation,
    MatrixField, RankWindow,
};
use crate::generators::{bott_loop, random_window_field, tautological_sphere};
use crate::homotopy::{
    connect, contract_to_trivial_projection, eigenvalue_csv, probe_pi_r, truncation_path, truncation_pipeline,
    verify_with_refinement, EngineConfig, EngineError, HomotopyPath, PathCheck,
};
use crate::linalg::{spectral_projection, CMatrix, HermitianMatrix, LinalgError, Tolerances, C64};
use crate::random::sub_seed;
use crate::suite::run_criteria;

/// Scenario and report schema version.
pub const SCHEMA_VERSION: u32 = 1;

/// Violations and similar lists are cut to this length in reports.
const MAX_LISTED: usize = 16;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("scenario is not valid JSON: {0}")]
    Parse(String),
    #[error("scenario schema_version {found} is not supported (expected {SCHEMA_VERSION})")]
    Schema { found: u32 },
    #[error("invalid scenario: {0}")]
    Validation(String),
    #[error(transparent)]
    Field(#[from] FieldError),
    #[error(transparent)]
    Complex(#[from] ComplexError),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

impl HarnessError {
    fn kind(&self) -> &'static str {
        match self {
            Self::Parse(_) => "parse",
            Self::Schema { .. } => "schema_version",
            Self::Validation(_) => "validation",
            Self::Field(_) => "field",
            Self::Complex(_) => "complex",
            Self::Linalg(_) => "tolerances",
        }
    }
}

/// A matrix as rows of `[re, im]` pairs.
pub type MatrixSpec = Vec<Vec<[f64; 2]>>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ComplexSpec {
    /// Boundary of a regular polygon.
    Circle { vertices: usize },
    /// Subdivided icosahedron on the unit sphere.
    Icosphere { level: usize },
    Torus { a: usize, b: usize },
    Point,
    Explicit {
        vertex_count: usize,
        simplices: Vec<Vec<usize>>,
        #[serde(default)]
        coords: Option<Vec<[f64; 3]>>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WindowSpec {
    pub n: usize,
    pub k: usize,
    pub l: usize,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InterpolationSpec {
    #[default]
    Linear,
    Projection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum FieldSpec {
    /// Vertex values, interpolated linearly or as projections.
    Explicit {
        values: Vec<MatrixSpec>,
        #[serde(default)]
        interpolation: InterpolationSpec,
    },
    /// `G(x) G(x)*` from per-vertex `n x m` factors.
    Gram { factors: Vec<MatrixSpec> },
    /// Seeded Gram field that passes membership for the window at the
    /// scenario depth. `seed` defaults to a sub-seed of the scenario seed.
    RandomWindowField {
        #[serde(default)]
        seed: Option<u64>,
        #[serde(default)]
        window: Option<WindowSpec>,
    },
    /// `(1 + x . sigma) / 2` on a complex embedded in the unit sphere.
    TautologicalSphere,
    /// Rank-one loop with the given winding on a circle.
    BottLoop {
        #[serde(default)]
        n: Option<usize>,
        #[serde(default = "one")]
        winding: i64,
    },
    Constant { value: MatrixSpec },
}

fn one() -> i64 {
    1
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ToleranceSpec {
    #[serde(default)]
    pub rank_threshold: Option<f64>,
    #[serde(default)]
    pub residual_tol: Option<f64>,
    #[serde(default)]
    pub max_jacobi_sweeps: Option<usize>,
}

/// Command-specific knobs; each command reads only its own.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptionsSpec {
    /// `stratify`: semicontinuity level. `truncate`: truncation level.
    #[serde(default)]
    pub eta: Option<f64>,
    /// `contract`: distance budget of the well-supported replacement.
    #[serde(default)]
    pub delta: Option<f64>,
    /// `probe`: sphere dimension.
    #[serde(default)]
    pub r: Option<usize>,
    /// `probe`: number of trials.
    #[serde(default)]
    pub trials: Option<usize>,
    /// `truncate` without explicit fields: spread of the smooth field.
    #[serde(default)]
    pub amplitude: Option<f64>,
    /// `chern`: value to compare against.
    #[serde(default)]
    pub expected_chern: Option<f64>,
    /// `verify-suite`: criterion numbers to run, all when empty.
    #[serde(default)]
    pub criteria: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub schema_version: u32,
    #[serde(default)]
    pub name: Option<String>,
    #[serde(default)]
    pub complex: Option<ComplexSpec>,
    pub window: WindowSpec,
    #[serde(default)]
    pub fields: BTreeMap<String, FieldSpec>,
    #[serde(default)]
    pub tolerances: ToleranceSpec,
    #[serde(default)]
    pub depth: Option<usize>,
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub steps: Option<usize>,
    #[serde(default)]
    pub options: OptionsSpec,
}

/// Parses and validates a scenario document.
pub fn parse_scenario(text: &str) -> Result<Scenario, HarnessError> {
    let raw: Value = serde_json::from_str(text).map_err(|e| HarnessError::Parse(e.to_string()))?;
    let found = raw.get("schema_version").and_then(Value::as_u64);
    match found {
        None => return Err(HarnessError::Validation("missing integer field schema_version".into())),
        Some(v) if v != SCHEMA_VERSION as u64 => return Err(HarnessError::Schema { found: v as u32 }),
        _ => {}
    }
    let scenario: Scenario = serde_json::from_value(raw).map_err(|e| HarnessError::Validation(e.to_string()))?;
    scenario.validate()?;
    Ok(scenario)
}

impl Scenario {
    pub fn window(&self) -> Result<RankWindow, HarnessError> {
        Ok(RankWindow::new(self.window.n, self.window.k, self.window.l)?)
    }

    /// Structural checks that need no numerics.
    pub fn validate(&self) -> Result<(), HarnessError> {
        self.window()?;
        for (name, spec) in &self.fields {
            match spec {
                FieldSpec::Explicit { values, .. } if values.is_empty() => {
                    return Err(HarnessError::Validation(format!("field {name}: no values")));
                }
                FieldSpec::Explicit { values, .. } => {
                    for m in values {
                        if m.len() != self.window.n {
                            return Err(HarnessError::Validation(format!(
                                "field {name}: {}-row value in a window with n = {}",
                                m.len(),
                                self.window.n
                            )));
                        }
                    }
                }
                FieldSpec::Constant { value } if value.len() != self.window.n => {
                    return Err(HarnessError::Validation(format!(
                        "field {name}: {}-row value in a window with n = {}",
                        value.len(),
                        self.window.n
                    )));
                }
                FieldSpec::Gram { factors } => {
                    if factors.iter().any(|f| f.len() != self.window.n) {
                        return Err(HarnessError::Validation(format!("field {name}: factor rows differ from n")));
                    }
                }
                FieldSpec::RandomWindowField { window: Some(w), .. } => {
                    RankWindow::new(w.n, w.k, w.l)?;
                }
                _ => {}
            }
        }
        Ok(())
    }

    pub fn complex(&self) -> Result<SimplicialComplex, HarnessError> {
        let spec = self
            .complex
            .as_ref()
            .ok_or_else(|| HarnessError::Validation("this command needs a complex".into()))?;
        build_complex(spec)
    }
}

pub fn build_complex(spec: &ComplexSpec) -> Result<SimplicialComplex, HarnessError> {
    Ok(match spec {
        ComplexSpec::Circle { vertices } => builtin::circle(*vertices)?,
        ComplexSpec::Icosphere { level } => builtin::icosphere(*level)?,
        ComplexSpec::Torus { a, b } => builtin::torus(*a, *b)?,
        ComplexSpec::Point => SimplicialComplex::point(),
        ComplexSpec::Explicit {
            vertex_count,
            simplices,
            coords,
        } => {
            let k = SimplicialComplex::new(*vertex_count, simplices.clone())?;
            match coords {
                Some(c) => k.with_coords(c.clone())?,
                None => k,
            }
        }
    })
}

pub fn matrix_from_spec(m: &MatrixSpec) -> Result<CMatrix, HarnessError> {
    let rows = m.len();
    let cols = m.first().map_or(0, Vec::len);
    if m.iter().any(|r| r.len() != cols) {
        return Err(HarnessError::Validation("ragged matrix rows".into()));
    }
    let data = m.iter().flatten().map(|&[re, im]| C64::new(re, im)).collect();
    Ok(CMatrix::from_row_major(rows, cols, data)?)
}

pub fn matrix_to_spec(m: &CMatrix) -> MatrixSpec {
    (0..m.rows())
        .map(|r| (0..m.cols()).map(|c| [m[(r, c)].re, m[(r, c)].im]).collect())
        .collect()
}

fn hermitian_from_spec(m: &MatrixSpec) -> Result<HermitianMatrix, HarnessError> {
    Ok(HermitianMatrix::new(matrix_from_spec(m)?)?)
}

/// Everything a generator needs besides its own parameters.
#[derive(Debug, Clone, Copy)]
pub struct GenerationContext<'a> {
    pub complex: &'a SimplicialComplex,
    pub window: RankWindow,
    pub depth: usize,
    pub seed: u64,
    pub tol: &'a Tolerances,
}

/// Builds the field a spec describes.
pub fn build_field(spec: &FieldSpec, ctx: &GenerationContext<'_>) -> Result<MatrixField, HarnessError> {
    let k = ctx.complex.clone();
    Ok(match spec {
        FieldSpec::Explicit { values, interpolation } => {
            let values = values.iter().map(hermitian_from_spec).collect::<Result<Vec<_>, _>>()?;
            match interpolation {
                InterpolationSpec::Linear => MatrixField::linear(k, values, ctx.tol)?,
                InterpolationSpec::Projection => MatrixField::projection(k, values, ctx.tol)?,
            }
        }
        FieldSpec::Gram { factors } => {
            let factors = factors.iter().map(matrix_from_spec).collect::<Result<Vec<_>, _>>()?;
            MatrixField::gram(k, factors, ctx.tol)?
        }
        FieldSpec::RandomWindowField { seed, window } => {
            let w = match window {
                Some(w) => RankWindow::new(w.n, w.k, w.l)?,
                None => ctx.window,
            };
            random_window_field(ctx.complex, w, seed.unwrap_or(ctx.seed), ctx.depth, ctx.tol)?
        }
        FieldSpec::TautologicalSphere => tautological_sphere(ctx.complex, ctx.tol)?,
        FieldSpec::BottLoop { n, winding } => bott_loop(ctx.complex, n.unwrap_or(ctx.window.n), *winding, ctx.tol)?,
        FieldSpec::Constant { value } => MatrixField::constant(k, hermitian_from_spec(value)?, ctx.tol)?,
    })
}

/// An explicit spec reproducing `field` exactly.
pub fn field_to_spec(field: &MatrixField) -> FieldSpec {
    match field.interpolation() {
        Interpolation::Gram { factors } => FieldSpec::Gram {
            factors: factors.iter().map(matrix_to_spec).collect(),
        },
        Interpolation::Projection => FieldSpec::Explicit {
            values: field.values().iter().map(|v| matrix_to_spec(v.matrix())).collect(),
            interpolation: InterpolationSpec::Projection,
        },
        _ => FieldSpec::Explicit {
            values: field.values().iter().map(|v| matrix_to_spec(v.matrix())).collect(),
            interpolation: InterpolationSpec::Linear,
        },
    }
}

/// Runs a generator spec and returns the explicit spec of its output.
pub fn generate(spec: &FieldSpec, ctx: &GenerationContext<'_>) -> Result<FieldSpec, HarnessError> {
    Ok(field_to_spec(&build_field(spec, ctx)?))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    Stratify,
    Membership,
    Gap,
    Contract,
    Connect,
    Truncate,
    Probe,
    Chern,
    VerifySuite,
}

impl Command {
    pub const ALL: [Command; 9] = [
        Command::Stratify,
        Command::Membership,
        Command::Gap,
        Command::Contract,
        Command::Connect,
        Command::Truncate,
        Command::Probe,
        Command::Chern,
        Command::VerifySuite,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            Command::Stratify => "stratify",
            Command::Membership => "membership",
            Command::Gap => "gap",
            Command::Contract => "contract",
            Command::Connect => "connect",
            Command::Truncate => "truncate",
            Command::Probe => "probe",
            Command::Chern => "chern",
            Command::VerifySuite => "verify-suite",
        }
    }
}

impl std::str::FromStr for Command {
    type Err = HarnessError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Command::ALL
            .into_iter()
            .find(|c| c.as_str() == s)
            .ok_or_else(|| HarnessError::Validation(format!("unknown command {s}")))
    }
}

/// Command-line overrides of scenario values.
#[derive(Debug, Clone, Copy, Default)]
pub struct RunOptions {
    pub seed: Option<u64>,
    pub depth: Option<usize>,
    pub steps: Option<usize>,
    /// Omit timing so that reports are byte-identical across runs.
    pub fixed_report: bool,
}

/// Values actually used, after defaults, environment and overrides.
#[derive(Debug, Clone, Serialize)]
pub struct Effective {
    pub seed: u64,
    pub depth: usize,
    pub steps: usize,
    pub window: RankWindow,
    pub tolerances: Tolerances,
}

#[derive(Debug, Clone, Serialize)]
pub struct Check {
    pub name: String,
    pub pass: bool,
    pub diagnostics: Value,
    pub certificate: Option<Value>,
}

impl Check {
    fn new(name: &str, pass: bool, diagnostics: Value) -> Self {
        Self {
            name: name.into(),
            pass,
            diagnostics,
            certificate: None,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ErrorBlock {
    pub kind: String,
    pub message: String,
    pub certificate: Option<Value>,
}

#[derive(Debug, Clone, Serialize)]
pub struct Timing {
    pub elapsed_seconds: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct Report {
    pub tool: &'static str,
    pub version: &'static str,
    pub schema_version: u32,
    pub command: String,
    /// SHA-256 of the canonical scenario JSON and the effective values.
    pub inputs_digest: Option<String>,
    pub effective: Option<Effective>,
    pub pass: bool,
    pub checks: Vec<Check>,
    pub ledgers: Value,
    pub results: Value,
    pub error: Option<ErrorBlock>,
    pub timing: Option<Timing>,
}

impl Report {
    fn empty(command: &str) -> Self {
        Self {
            tool: "rankhom",
            version: env!("CARGO_PKG_VERSION"),
            schema_version: SCHEMA_VERSION,
            command: command.into(),
            inputs_digest: None,
            effective: None,
            pass: false,
            checks: Vec::new(),
            ledgers: json!({}),
            results: json!({}),
            error: None,
            timing: None,
        }
    }

    /// Report for a scenario that failed to parse or validate.
    pub fn invalid(command: &str, err: &HarnessError) -> Self {
        let mut r = Self::empty(command);
        r.error = Some(ErrorBlock {
            kind: err.kind().into(),
            message: err.to_string(),
            certificate: None,
        });
        r
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("reports serialize");
        s.push('\n');
        s
    }
}

/// A report plus the eigenvalue CSV of the path, when the command built one.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub report: Report,
    pub csv: Option<String>,
}

fn digest(command: Command, scenario: &Scenario, effective: &Effective) -> String {
    // serde_json objects are key-sorted, so this text is canonical.
    let doc = json!({
        "command": command.as_str(),
        "scenario": scenario,
        "effective": effective,
    });
    hex::encode(Sha256::digest(doc.to_string().as_bytes()))
}

/// Tolerances: defaults, then `RANKHOM_*` environment overrides, then the
/// scenario's explicit values.
pub fn effective_tolerances(spec: &ToleranceSpec) -> Result<Tolerances, HarnessError> {
    let mut t = Tolerances::from_env()?;
    if let Some(v) = spec.rank_threshold {
        t.rank_threshold = v;
    }
    if let Some(v) = spec.residual_tol {
        t.residual_tol = v;
    }
    if let Some(v) = spec.max_jacobi_sweeps {
        t.max_jacobi_sweeps = v;
    }
    t.validate()?;
    Ok(t)
}

pub const DEFAULT_DEPTH: usize = 2;
pub const DEFAULT_SEED: u64 = 1;

/// Runs one command. Scenario problems found while building inputs and
/// operation errors are embedded in the report; the report passes only
/// when there is no error and every check passes.
pub fn run(command: Command, scenario: &Scenario, opts: &RunOptions) -> RunOutput {
    let start = Instant::now();
    let mut report = Report::empty(command.as_str());
    let mut csv = None;
    let outcome = effective(scenario, opts).and_then(|eff| {
        report.inputs_digest = Some(digest(command, scenario, &eff));
        report.effective = Some(eff.clone());
        let mut ctx = Ctx {
            scenario,
            eff,
            report: &mut report,
            csv: &mut csv,
        };
        ctx.dispatch(command)
    });
    if let Err(e) = outcome {
        report.error = Some(e);
    }
    report.pass = report.error.is_none() && !report.checks.is_empty() && report.checks.iter().all(|c| c.pass);
    if !opts.fixed_report {
        report.timing = Some(Timing {
            elapsed_seconds: start.elapsed().as_secs_f64(),
        });
    }
    RunOutput { report, csv }
}

fn effective(scenario: &Scenario, opts: &RunOptions) -> Result<Effective, ErrorBlock> {
    let wrap = |e: HarnessError| ErrorBlock {
        kind: e.kind().into(),
        message: e.to_string(),
        certificate: None,
    };
    let tolerances = effective_tolerances(&scenario.tolerances).map_err(wrap)?;
    let window = scenario.window().map_err(wrap)?;
    Ok(Effective {
        seed: opts.seed.or(scenario.seed).unwrap_or(DEFAULT_SEED),
        depth: opts.depth.or(scenario.depth).unwrap_or(DEFAULT_DEPTH),
        steps: opts.steps.or(scenario.steps).unwrap_or(EngineConfig::default().steps),
        window,
        tolerances,
    })
}

fn engine_error(e: EngineError) -> ErrorBlock {
    let certificate = match &e {
        EngineError::Refused(c) => Some(certificate_json(c)),
        EngineError::Stage {
            source: BundleError::Obstruction(c),
            ..
        } => Some(certificate_json(c)),
        _ => None,
    };
    let kind = match &e {
        EngineError::Field(_) => "field",
        EngineError::Linalg(_) => "linalg",
        EngineError::Stage { .. } => "stage",
        EngineError::Refused(_) => "refused",
        EngineError::Precondition(_) => "precondition",
        EngineError::Verification { .. } => "verification",
    };
    ErrorBlock {
        kind: kind.into(),
        message: e.to_string(),
        certificate,
    }
}

fn input_error(e: HarnessError) -> ErrorBlock {
    ErrorBlock {
        kind: e.kind().into(),
        message: e.to_string(),
        certificate: None,
    }
}

fn certificate_json(c: &Certificate) -> Value {
    serde_json::to_value(c).unwrap_or(Value::Null)
}

fn path_check(check: &PathCheck) -> Check {
    Check::new("path_membership", check.pass, serde_json::to_value(check).unwrap_or(Value::Null))
}

struct Ctx<'a> {
    scenario: &'a Scenario,
    eff: Effective,
    report: &'a mut Report,
    csv: &'a mut Option<String>,
}

type Step = Result<(), ErrorBlock>;

impl Ctx<'_> {
    fn dispatch(&mut self, command: Command) -> Step {
        match command {
            Command::Stratify => self.stratify(),
            Command::Membership => self.membership(),
            Command::Gap => self.gap(),
            Command::Contract => self.contract(),
            Command::Connect => self.connect(),
            Command::Truncate => self.truncate(),
            Command::Probe => self.probe(),
            Command::Chern => self.chern(),
            Command::VerifySuite => self.verify_suite(),
        }
    }

    fn tol(&self) -> Tolerances {
        self.eff.tolerances
    }

    fn engine(&self) -> EngineConfig {
        EngineConfig {
            seed: self.eff.seed,
            steps: self.eff.steps,
            ..EngineConfig::default()
        }
    }

    fn complex(&self) -> Result<SimplicialComplex, ErrorBlock> {
        self.scenario.complex().map_err(input_error)
    }

    /// The named field; generator seeds default to a sub-seed of the
    /// scenario seed labelled by the field's position in name order.
    fn field(&self, name: &str, complex: &SimplicialComplex) -> Result<MatrixField, ErrorBlock> {
        let (index, spec) = self
            .scenario
            .fields
            .iter()
            .enumerate()
            .find(|(_, (n, _))| n.as_str() == name)
            .map(|(i, (_, s))| (i, s))
            .ok_or_else(|| input_error(HarnessError::Validation(format!("this command needs a field named {name}"))))?;
        let tol = self.tol();
        let ctx = GenerationContext {
            complex,
            window: self.eff.window,
            depth: self.eff.depth,
            seed: sub_seed(self.eff.seed, index as u64 + 1),
            tol: &tol,
        };
        let field = build_field(spec, &ctx).map_err(input_error)?;
        if field.n() != self.eff.window.n {
            return Err(input_error(HarnessError::Validation(format!(
                "field {name} has n = {} but the window has n = {}",
                field.n(),
                self.eff.window.n
            ))));
        }
        Ok(field)
    }

    fn write_csv(&mut self, path: &HomotopyPath) -> Step {
        *self.csv = Some(eigenvalue_csv(path, &self.tol()).map_err(engine_error)?);
        Ok(())
    }

    fn stratify(&mut self) -> Step {
        let k = self.complex()?;
        let a = self.field("a", &k)?;
        let tol = self.tol();
        let s = rank_stratification(&a, self.eff.depth, &tol).map_err(|e| engine_error(e.into()))?;
        let strata: Vec<Value> = s
            .values
            .iter()
            .enumerate()
            .map(|(i, rank)| {
                json!({
                    "rank": rank,
                    "open_samples": s.open_strata[i].len(),
                    "closure_vertices": s.closed_vertices[i].iter().filter(|&&b| b).count(),
                    "closure_simplices": s.closed_simplices[i].len(),
                })
            })
            .collect();
        self.report.results = json!({"samples": s.ranks.len(), "strata": strata});
        let eta = self.scenario.options.eta.unwrap_or(0.0);
        let semi = lower_semicontinuity_check(&a, eta, self.eff.depth, &tol).map_err(|e| engine_error(e.into()))?;
        self.report.checks.push(Check::new(
            "lower_semicontinuity",
            semi.pass,
            json!({
                "eta": semi.eta,
                "depth": semi.depth,
                "violation_count": semi.violations.len(),
                "violations": &semi.violations[..semi.violations.len().min(MAX_LISTED)],
                "gap_hit_count": semi.gap_hits.len(),
                "gap_hits": &semi.gap_hits[..semi.gap_hits.len().min(MAX_LISTED)],
            }),
        ));
        Ok(())
    }

    fn membership(&mut self) -> Step {
        let k = self.complex()?;
        let a = self.field("a", &k)?;
        let m = membership_check(&a, self.eff.window, self.eff.depth, &self.tol()).map_err(|e| engine_error(e.into()))?;
        self.report.checks.push(Check::new(
            "membership",
            m.pass,
            json!({
                "window": m.window,
                "depth": m.depth,
                "samples": m.samples,
                "min_rank": m.min_rank,
                "max_rank": m.max_rank,
                "min_counted_eigenvalue": m.min_counted_eigenvalue,
                "violation_count": m.violations.len(),
                "violations": &m.violations[..m.violations.len().min(MAX_LISTED)],
            }),
        ));
        Ok(())
    }

    fn gap(&mut self) -> Step {
        let k = self.complex()?;
        let a = self.field("a", &k)?;
        let tol = self.tol();
        let l = self.eff.window.l;
        let sel = spectral_gap_eta(&a, l, self.eff.depth, &tol).map_err(|e| engine_error(e.into()))?;
        self.report.results = serde_json::to_value(sel).unwrap_or(Value::Null);
        self.report.checks.push(Check::new(
            "eta_positive",
            sel.eta.is_finite() && sel.eta > 0.0,
            json!({"eta": sel.eta, "sample": sel.sample}),
        ));
        let finer = SampleGrid::new(&k, self.eff.depth + 1);
        let values = a.sample(&finer, &tol).map_err(|e| engine_error(e.into()))?;
        let mut min_rank = usize::MAX;
        let mut worst = 0;
        let mut gap_hits = Vec::new();
        for (s, v) in values.iter().enumerate() {
            match spectral_projection(v, sel.eta, &tol) {
                Ok(p) => {
                    let r = p.matrix().trace().re.round() as usize;
                    if r < min_rank {
                        min_rank = r;
                        worst = s;
                    }
                }
                Err(e) => gap_hits.push(json!({"sample": s, "error": e.to_string()})),
            }
        }
        gap_hits.truncate(MAX_LISTED);
        self.report.checks.push(Check::new(
            "rank_at_least_l_one_level_finer",
            gap_hits.is_empty() && min_rank >= l,
            json!({"l": l, "depth": self.eff.depth + 1, "min_rank": min_rank, "worst_sample": worst, "gap_hits": gap_hits}),
        ));
        Ok(())
    }

    fn contract(&mut self) -> Step {
        let k = self.complex()?;
        let a = self.field("a", &k)?;
        let tol = self.tol();
        let cfg = self.engine();
        let m = membership_check(&a, self.eff.window, self.eff.depth, &tol).map_err(|e| engine_error(e.into()))?;
        self.report.checks.push(Check::new(
            "input_membership",
            m.pass,
            json!({"min_rank": m.min_rank, "max_rank": m.max_rank, "violation_count": m.violations.len()}),
        ));
        let grid = Arc::new(SampleGrid::new(&k, self.eff.depth));
        let values = a.sample(&grid, &tol).map_err(|e| engine_error(e.into()))?;
        let result = contract_to_trivial_projection(
            values,
            grid,
            self.eff.window,
            a.cutoff(&tol),
            self.scenario.options.delta,
            &cfg,
            &tol,
        );
        let mut c = match result {
            Ok(c) => c,
            Err(EngineError::Refused(cert)) => {
                let mut check = Check::new("contraction", false, json!({"refused": true}));
                check.certificate = Some(certificate_json(&cert));
                self.report.checks.push(check);
                return Ok(());
            }
            Err(e) => return Err(engine_error(e)),
        };
        self.report.checks.push(Check::new(
            "well_supported",
            c.well_supported.check.pass,
            serde_json::to_value(&c.well_supported.check).unwrap_or(Value::Null),
        ));
        self.report.checks.push(Check::new(
            "contraction_ledger",
            c.trace.pass,
            json!({"branch": c.trace.branch, "failed_entries": c.trace.ledger.iter().filter(|e| !e.pass).count()}),
        ));
        let check = verify_with_refinement(&mut c.path, &cfg, &tol).map_err(engine_error)?;
        self.report.checks.push(path_check(&check));
        self.report.ledgers = json!({"contraction": c.trace});
        self.report.results = json!({"target_rank": c.target.rank(), "steps": c.path.steps, "segments": c.path.segments.len()});
        self.write_csv(&c.path)
    }

    fn connect(&mut self) -> Step {
        let k = self.complex()?;
        let a = self.field("a", &k)?;
        let b = self.field("b", &k)?;
        let tol = self.tol();
        let c = connect(&a, &b, self.eff.window, self.eff.depth, &self.engine(), &tol).map_err(engine_error)?;
        self.report.checks.push(path_check(&c.check));
        for (name, trace) in [("contraction_ledger_a", &c.contraction_a), ("contraction_ledger_b", &c.contraction_b)] {
            if let Some(t) = trace {
                self.report.checks.push(Check::new(
                    name,
                    t.pass,
                    json!({"branch": t.branch, "failed_entries": t.ledger.iter().filter(|e| !e.pass).count()}),
                ));
            }
        }
        self.report.ledgers = json!({"contraction_a": c.contraction_a, "contraction_b": c.contraction_b});
        self.report.results = json!({
            "projection_path": c.projection_path,
            "steps": c.path.steps,
            "segments": c.path.segments.iter().map(|s| &s.label).collect::<Vec<_>>(),
        });
        self.write_csv(&c.path)
    }

    fn truncate(&mut self) -> Step {
        let k = self.complex()?;
        let tol = self.tol();
        let cfg = self.engine();
        let explicit = self.scenario.fields.contains_key("a") || self.scenario.fields.contains_key("pullback");
        let (t, eta_source) = if explicit {
            let a = self.field("a", &k)?;
            let pulled = self.field("pullback", &k)?;
            let (eta, source) = match self.scenario.options.eta {
                Some(eta) => (eta, json!("options")),
                None => {
                    let sel = spectral_gap_eta(&a, self.eff.window.l, self.eff.depth, &tol).map_err(|e| engine_error(e.into()))?;
                    (sel.eta / 2.0, json!({"gap": sel}))
                }
            };
            let t = truncation_path(&a, &pulled, eta, self.eff.window, self.eff.depth, &cfg, &tol).map_err(engine_error)?;
            (t, source)
        } else {
            let amplitude = self.scenario.options.amplitude.unwrap_or(0.3);
            let (t, sel) = truncation_pipeline(&k, self.eff.window, amplitude, self.eff.depth, &cfg, &tol).map_err(engine_error)?;
            (t, json!({"gap": sel, "amplitude": amplitude}))
        };
        self.report.checks.push(path_check(&t.check));
        self.report.checks.push(Check::new(
            "truncation_ledger",
            t.ledger.pass,
            json!({
                "start_endpoint_error": t.ledger.start_endpoint_error,
                "end_endpoint_error": t.ledger.end_endpoint_error,
                "max_factor_residual": t.ledger.max_factor_residual,
            }),
        ));
        self.report.ledgers = json!({"truncation": t.ledger});
        self.report.results = json!({
            "eta": t.ledger.eta,
            "eta_source": eta_source,
            "steps": t.path.steps,
            "segments": t.path.segments.iter().map(|s| &s.label).collect::<Vec<_>>(),
        });
        self.write_csv(&t.path)
    }

    fn probe(&mut self) -> Step {
        let r = self.scenario.options.r.unwrap_or(1);
        let trials = self.scenario.options.trials.unwrap_or(10);
        let p = probe_pi_r(self.eff.window, r, trials, self.eff.depth, &self.engine(), &self.tol()).map_err(engine_error)?;
        self.report.checks.push(Check::new(
            "all_trials_connected",
            p.successes == trials,
            json!({"successes": p.successes, "trials": trials, "success_rate": p.success_rate}),
        ));
        self.report.results = serde_json::to_value(&p).unwrap_or(Value::Null);
        Ok(())
    }

    fn chern(&mut self) -> Step {
        let k = self.complex()?;
        let a = self.field("a", &k)?;
        let tol = self.tol();
        let p = ProjectionField::new(k, a.values().to_vec(), &tol).map_err(|e| engine_error(EngineError::Stage {
            stage: "projection field".into(),
            source: e,
        }))?;
        let c = chern_number(&p, self.eff.depth, &tol).map_err(|e| engine_error(EngineError::Stage {
            stage: "chern number".into(),
            source: e,
        }))?;
        let rounded = c.round();
        self.report.results = json!({"value": c, "rounded": rounded, "rank": p.rank()});
        self.report.checks.push(Check::new(
            "near_integer",
            (c - rounded).abs() <= 1e-6,
            json!({"value": c, "distance_to_integer": (c - rounded).abs(), "bound": 1e-6}),
        ));
        if let Some(expected) = self.scenario.options.expected_chern {
            self.report.checks.push(Check::new(
                "matches_expected",
                (c - expected).abs() <= 1e-6,
                json!({"value": c, "expected": expected, "bound": 1e-6}),
            ));
        }
        Ok(())
    }

    fn verify_suite(&mut self) -> Step {
        let selected = &self.scenario.options.criteria;
        if let Some(bad) = selected.iter().find(|&&c| !(1..=10).contains(&c)) {
            return Err(input_error(HarnessError::Validation(format!("no acceptance criterion {bad}"))));
        }
        let outcomes = run_criteria(selected, |_| {});
        for o in &outcomes {
            self.report.checks.push(Check::new(
                &format!("criterion_{}", o.id),
                o.pass,
                json!({"name": o.name, "detail": o.detail}),
            ));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scenario(text: &str) -> Scenario {
        parse_scenario(text).unwrap()
    }

    const CIRCLE: &str = r#"{
        "schema_version": 1,
        "complex": {"kind": "circle", "vertices": 6},
        "window": {"n": 3, "k": 2, "l": 1},
        "fields": {"a": {"kind": "random-window-field"}, "b": {"kind": "random-window-field"}},
        "depth": 1,
        "seed": 3
    }"#;

    #[test]
    fn rejects_wrong_schema_version() {
        let err = parse_scenario(r#"{"schema_version": 7, "window": {"n": 1, "k": 1, "l": 1}}"#).unwrap_err();
        assert!(matches!(err, HarnessError::Schema { found: 7 }));
    }

    #[test]
    fn rejects_unknown_fields_and_bad_windows() {
        assert!(matches!(
            parse_scenario(r#"{"schema_version": 1, "window": {"n": 1, "k": 1, "l": 1}, "extra": 0}"#),
            Err(HarnessError::Validation(_))
        ));
        assert!(matches!(
            parse_scenario(r#"{"schema_version": 1, "window": {"n": 2, "k": 1, "l": 2}}"#),
            Err(HarnessError::Field(FieldError::Window { .. }))
        ));
    }

    #[test]
    fn command_names_round_trip() {
        for c in Command::ALL {
            assert_eq!(c.as_str().parse::<Command>().unwrap(), c);
        }
        assert!("frobnicate".parse::<Command>().is_err());
    }

    #[test]
    fn fixed_reports_are_identical() {
        let s = scenario(CIRCLE);
        let opts = RunOptions {
            fixed_report: true,
            ..RunOptions::default()
        };
        let a = run(Command::Connect, &s, &opts);
        let b = run(Command::Connect, &s, &opts);
        assert!(a.report.pass, "{}", a.report.to_json());
        assert_eq!(a.report.to_json(), b.report.to_json());
        assert_eq!(a.csv, b.csv);
        assert!(a.report.timing.is_none());
    }

    #[test]
    fn seed_override_changes_the_digest() {
        let s = scenario(CIRCLE);
        let a = run(Command::Membership, &s, &RunOptions::default());
        let b = run(
            Command::Membership,
            &s,
            &RunOptions {
                seed: Some(4),
                ..RunOptions::default()
            },
        );
        assert_ne!(a.report.inputs_digest, b.report.inputs_digest);
        assert!(a.report.pass && b.report.pass);
    }

    #[test]
    fn missing_field_is_an_embedded_error() {
        let s = scenario(r#"{"schema_version": 1, "complex": {"kind": "point"}, "window": {"n": 2, "k": 1, "l": 1}}"#);
        let out = run(Command::Membership, &s, &RunOptions::default());
        assert!(!out.report.pass);
        assert_eq!(out.report.error.as_ref().unwrap().kind, "validation");
    }

    #[test]
    fn generated_specs_rebuild_the_same_field() {
        let tol = Tolerances::default();
        let k = builtin::circle(6).unwrap();
        let ctx = GenerationContext {
            complex: &k,
            window: RankWindow::new(3, 2, 1).unwrap(),
            depth: 1,
            seed: 9,
            tol: &tol,
        };
        let spec = generate(&FieldSpec::RandomWindowField { seed: None, window: None }, &ctx).unwrap();
        let rebuilt = build_field(&spec, &ctx).unwrap();
        let direct = build_field(&FieldSpec::RandomWindowField { seed: None, window: None }, &ctx).unwrap();
        assert_eq!(rebuilt, direct);
        let text = serde_json::to_string(&spec).unwrap();
        assert_eq!(serde_json::from_str::<FieldSpec>(&text).unwrap(), spec);
    }

    #[test]
    fn chern_of_tautological_sphere_is_one() {
        let s = scenario(
            r#"{"schema_version": 1, "complex": {"kind": "icosphere", "level": 1},
                "window": {"n": 2, "k": 1, "l": 1},
                "fields": {"a": {"kind": "tautological-sphere"}},
                "depth": 1, "options": {"expected_chern": 1.0}}"#,
        );
        let out = run(Command::Chern, &s, &RunOptions::default());
        assert!(out.report.pass, "{}", out.report.to_json());
        let v = out.report.results["value"].as_f64().unwrap();
        assert!((v - 1.0).abs() < 1e-6);
    }

    #[test]
    fn tautological_contraction_fails_with_certificate() {
        let s = scenario(
            r#"{"schema_version": 1, "complex": {"kind": "icosphere", "level": 1},
                "window": {"n": 2, "k": 1, "l": 1},
                "fields": {"a": {"kind": "tautological-sphere"}}, "depth": 1}"#,
        );
        let out = run(Command::Contract, &s, &RunOptions::default());
        assert!(!out.report.pass);
        let check = out.report.checks.iter().find(|c| c.name == "contraction").unwrap();
        let cert = check.certificate.as_ref().unwrap();
        assert_eq!(cert["kind"], "dimension_hypothesis");
        let c = cert["details"]["obstruction"]["chern_number"].as_f64().unwrap();
        assert!((c - 1.0).abs() < 1e-6);
    }

    #[test]
    fn matrices_round_trip_through_specs() {
        let m = CMatrix::from_fn(2, 3, |r, c| C64::new(r as f64, c as f64 - 0.5));
        assert_eq!(matrix_from_spec(&matrix_to_spec(&m)).unwrap(), m);
        assert!(matrix_from_spec(&vec![vec![[0.0, 0.0]], vec![]]).is_err());
    }
}
