//! Rank-window homotopies: well-supported replacement, contraction to a
//! trivial projection, connection of two fields, and the truncation path.
//!
//! All paths are vertex-valued on the fine complex of a [`SampleGrid`]; the
//! grid vertices are the samples at which every claim is checked.

use std::sync::Arc;

use rayon::prelude::*;
use serde::Serialize;
use serde_json::json;
use thiserror::Error;

use crate::bundles::{
    extend_frame, extend_trivial_projection, find_trivial_subbundle, BundleError, Certificate, CertificateKind, Frame,
    FrameConfig, ProjectionHomotopy, ProjectionPathKind, TrivialProjection, projection_homotopy,
};
use crate::generators::{random_window_field, smooth_refinement_pair};
use crate::random::sub_seed;
use crate::complex::{builtin, SampleGrid, SimplicialComplex};
use crate::field::{
    membership_on_grid, same_complex, spectral_gap_eta, stratify_ranks, FieldError, GapSelection, MatrixField, RankWindow,
    Stratification,
};
use crate::linalg::{
    cut_epsilon, domination_residual, hermitian_eig, idempotency_residual, roerdam_factor, HermitianMatrix, LinalgError,
    Tolerances,
};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EngineError {
    #[error(transparent)]
    Field(#[from] FieldError),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error("{stage}: {source}")]
    Stage { stage: String, source: BundleError },
    #[error("refused: {0:?}")]
    Refused(Certificate),
    #[error("precondition failed: {0}")]
    Precondition(String),
    #[error("path failed verification after {steps} steps per segment: {detail}")]
    Verification { steps: usize, detail: String },
}

pub(crate) fn stage<T>(name: &str, r: Result<T, BundleError>) -> Result<T, EngineError> {
    r.map_err(|source| EngineError::Stage {
        stage: name.to_string(),
        source,
    })
}

/// Engine knobs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EngineConfig {
    pub steps: usize,
    pub max_steps: usize,
    /// Largest allowed Frobenius change between consecutive steps.
    pub step_budget: f64,
    pub seed: u64,
    pub frames: FrameConfig,
}

impl Default for EngineConfig {
    fn default() -> Self {
        Self {
            steps: 64,
            max_steps: 1024,
            step_budget: 0.25,
            seed: 0,
            frames: FrameConfig::default(),
        }
    }
}

/// One piece of a path, parametrized by `t` in `[0, 1]`.
#[derive(Debug, Clone)]
pub enum Segment {
    /// `(1 - t) from + t to`.
    Linear {
        from: Vec<HermitianMatrix>,
        to: Vec<HermitianMatrix>,
    },
    /// `((1 - t) from + t to - eta)_+`.
    Truncated {
        from: Vec<HermitianMatrix>,
        to: Vec<HermitianMatrix>,
        eta: f64,
    },
    Projection(Box<ProjectionHomotopy>),
}

impl Segment {
    pub fn at(&self, v: usize, t: f64, tol: &Tolerances) -> Result<HermitianMatrix, EngineError> {
        match self {
            Segment::Linear { from, to } => {
                if t <= 0.0 {
                    Ok(from[v].clone())
                } else if t >= 1.0 {
                    Ok(to[v].clone())
                } else {
                    Ok(from[v].lincomb(1.0 - t, &to[v], t))
                }
            }
            Segment::Truncated { from, to, eta } => {
                let m = from[v].lincomb(1.0 - t, &to[v], t);
                Ok(cut_epsilon(&m, *eta, tol)?)
            }
            Segment::Projection(h) => stage("projection path", h.at(v, t, tol)),
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            Segment::Linear { .. } => "linear",
            Segment::Truncated { .. } => "truncated",
            Segment::Projection(_) => "projection",
        }
    }
}

#[derive(Debug, Clone)]
pub struct LabeledSegment {
    pub label: String,
    pub segment: Segment,
    /// Traverse from `t = 1` to `t = 0`.
    pub reversed: bool,
}

impl LabeledSegment {
    pub fn new(label: impl Into<String>, segment: Segment) -> Self {
        Self {
            label: label.into(),
            segment,
            reversed: false,
        }
    }

    pub fn at(&self, v: usize, t: f64, tol: &Tolerances) -> Result<HermitianMatrix, EngineError> {
        self.segment.at(v, if self.reversed { 1.0 - t } else { t }, tol)
    }
}

/// A discretized path of vertex-valued fields on a sample grid.
#[derive(Debug, Clone)]
pub struct HomotopyPath {
    pub window: RankWindow,
    pub grid: Arc<SampleGrid>,
    pub segments: Vec<LabeledSegment>,
    pub steps: usize,
}

impl HomotopyPath {
    pub fn new(window: RankWindow, grid: Arc<SampleGrid>, steps: usize) -> Self {
        Self {
            window,
            grid,
            segments: Vec::new(),
            steps,
        }
    }

    pub fn push(&mut self, s: LabeledSegment) {
        self.segments.push(s);
    }

    pub fn extend(&mut self, other: HomotopyPath) {
        self.segments.extend(other.segments);
    }

    /// The same path traversed backwards.
    pub fn reversed(&self) -> HomotopyPath {
        let mut out = self.clone();
        out.segments.reverse();
        for s in out.segments.iter_mut() {
            s.reversed = !s.reversed;
        }
        out
    }

    pub fn start(&self, tol: &Tolerances) -> Result<Vec<HermitianMatrix>, EngineError> {
        self.values_at(0, 0.0, tol)
    }

    pub fn end(&self, tol: &Tolerances) -> Result<Vec<HermitianMatrix>, EngineError> {
        self.values_at(self.segments.len().saturating_sub(1), 1.0, tol)
    }

    /// All vertex values of segment `seg` at time `t`.
    pub fn values_at(&self, seg: usize, t: f64, tol: &Tolerances) -> Result<Vec<HermitianMatrix>, EngineError> {
        let s = &self.segments[seg];
        (0..self.grid.len()).into_par_iter().map(|v| s.at(v, t, tol)).collect()
    }

    pub fn total_steps(&self) -> usize {
        self.segments.len() * self.steps
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct PathViolation {
    pub segment: usize,
    pub step: usize,
    pub sample: usize,
    pub rank: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct SegmentSummary {
    pub label: String,
    pub kind: &'static str,
    pub reversed: bool,
    pub min_rank: usize,
    pub max_rank: usize,
    pub step_bound: f64,
    pub min_counted_eigenvalue: f64,
}

/// Outcome of the independent membership sweep over every step and sample.
#[derive(Debug, Clone, Serialize)]
pub struct PathCheck {
    pub pass: bool,
    pub window: RankWindow,
    pub steps: usize,
    pub samples: usize,
    /// Largest Frobenius distance between consecutive steps at any sample;
    /// an upper bound for the operator-norm step.
    pub step_bound: f64,
    pub step_budget: f64,
    pub violation_count: usize,
    pub violations: Vec<PathViolation>,
    pub segments: Vec<SegmentSummary>,
}

const MAX_LISTED_VIOLATIONS: usize = 16;

/// Sweeps every step of every segment at every grid vertex: ranks must
/// lie in the window (cutoff relative to the largest eigenvalue at that
/// step) and consecutive steps must stay within the budget.
pub fn verify_path(path: &HomotopyPath, step_budget: f64, tol: &Tolerances) -> Result<PathCheck, EngineError> {
    let nv = path.grid.len();
    let steps = path.steps.max(1);
    let mut violations = Vec::new();
    let mut violation_count = 0;
    let mut step_bound: f64 = 0.0;
    let mut summaries = Vec::new();
    for (si, seg) in path.segments.iter().enumerate() {
        let mut prev: Option<Vec<HermitianMatrix>> = None;
        let mut summary = SegmentSummary {
            label: seg.label.clone(),
            kind: seg.segment.kind(),
            reversed: seg.reversed,
            min_rank: usize::MAX,
            max_rank: 0,
            step_bound: 0.0,
            min_counted_eigenvalue: f64::INFINITY,
        };
        for step in 0..=steps {
            let t = step as f64 / steps as f64;
            let vals: Vec<HermitianMatrix> = (0..nv).into_par_iter().map(|v| seg.at(v, t, tol)).collect::<Result<_, _>>()?;
            let eigs: Vec<Vec<f64>> = vals
                .par_iter()
                .map(|m| hermitian_eig(m, tol).map(|e| e.eigenvalues))
                .collect::<Result<_, _>>()?;
            let scale = eigs
                .iter()
                .flat_map(|e| e.iter())
                .fold(0.0_f64, |acc, l| acc.max(l.abs()));
            let cutoff = tol.cutoff(scale);
            for (v, e) in eigs.iter().enumerate() {
                let rank = e.iter().filter(|&&l| l > cutoff).count();
                summary.min_rank = summary.min_rank.min(rank);
                summary.max_rank = summary.max_rank.max(rank);
                if let Some(&m) = e.iter().find(|&&l| l > cutoff) {
                    summary.min_counted_eigenvalue = summary.min_counted_eigenvalue.min(m);
                }
                if !path.window.contains(rank) {
                    violation_count += 1;
                    if violations.len() < MAX_LISTED_VIOLATIONS {
                        violations.push(PathViolation {
                            segment: si,
                            step,
                            sample: v,
                            rank,
                        });
                    }
                }
            }
            if let Some(p) = &prev {
                let d = vals
                    .par_iter()
                    .zip(p.par_iter())
                    .map(|(a, b)| (a.matrix() - b.matrix()).frobenius())
                    .reduce(|| 0.0, f64::max);
                summary.step_bound = summary.step_bound.max(d);
            }
            prev = Some(vals);
        }
        step_bound = step_bound.max(summary.step_bound);
        summaries.push(summary);
    }
    Ok(PathCheck {
        pass: violation_count == 0 && step_bound <= step_budget,
        window: path.window,
        steps,
        samples: nv,
        step_bound,
        step_budget,
        violation_count,
        violations,
        segments: summaries,
    })
}

/// Verifies the path, doubling the step count while the check fails (up
/// to `max_steps`). Returns the last check either way.
pub fn verify_with_refinement(path: &mut HomotopyPath, cfg: &EngineConfig, tol: &Tolerances) -> Result<PathCheck, EngineError> {
    loop {
        let check = verify_path(path, cfg.step_budget, tol)?;
        if check.pass || path.steps * 2 > cfg.max_steps {
            return Ok(check);
        }
        // Endpoint failures are not discretization artifacts.
        if check.violations.iter().any(|v| v.step == 0 || v.step == path.steps) && check.step_bound <= cfg.step_budget {
            return Ok(check);
        }
        path.steps *= 2;
    }
}

/// RFC-4180 CSV (CRLF line endings) of eigenvalue curves at the base
/// vertices of the grid.
pub fn eigenvalue_csv(path: &HomotopyPath, tol: &Tolerances) -> Result<String, EngineError> {
    let n = path.window.n;
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::CRLF)
        .from_writer(Vec::new());
    let mut header: Vec<String> = ["segment", "step", "t", "sample", "x0", "x1", "x2"]
        .map(String::from)
        .to_vec();
    header.extend((1..=n).map(|i| format!("lambda_{i}")));
    w.write_record(&header).map_err(csv_error)?;
    let base = path.grid.base.vertex_count();
    let coords = path.grid.fine.coords();
    for (si, seg) in path.segments.iter().enumerate() {
        for step in 0..=path.steps {
            let t = step as f64 / path.steps as f64;
            let rows: Vec<Vec<f64>> = (0..base)
                .into_par_iter()
                .map(|v| Ok(hermitian_eig(&seg.at(v, t, tol)?, tol)?.eigenvalues))
                .collect::<Result<_, EngineError>>()?;
            for (v, eig) in rows.iter().enumerate() {
                let x = coords.map(|c| c[v]).unwrap_or([0.0; 3]);
                let mut record = vec![si.to_string(), step.to_string(), t.to_string(), v.to_string()];
                record.extend(x.iter().chain(eig).map(f64::to_string));
                w.write_record(&record).map_err(csv_error)?;
            }
        }
    }
    let bytes = w.into_inner().map_err(|e| csv_error(e.into_error()))?;
    String::from_utf8(bytes).map_err(|e| EngineError::Precondition(e.to_string()))
}

fn csv_error(e: impl std::fmt::Display) -> EngineError {
    EngineError::Precondition(format!("csv output: {e}"))
}

/// Dimension-hypothesis refusal certificate.
pub(crate) fn dimension_certificate(window: RankWindow, d: usize, extra: serde_json::Value) -> Certificate {
    Certificate::new(
        CertificateKind::DimensionHypothesis,
        json!({
            "k_minus_l": window.k - window.l,
            "half_dim": d / 2,
            "dimension": d,
            "obstruction": extra,
        }),
    )
}

/// Sampled nested projections `p_i` on the closed strata `F_i` of a field,
/// with `b` the field with sub-cutoff eigenvalues removed.
#[derive(Debug, Clone)]
pub struct WellSupported {
    pub grid: Arc<SampleGrid>,
    pub strata: Stratification,
    pub a: Vec<HermitianMatrix>,
    pub b: Vec<HermitianMatrix>,
    /// `projections[i][v]` is `p_i(v)` on `F_i` and zero elsewhere.
    pub projections: Vec<Vec<HermitianMatrix>>,
    pub cutoff: f64,
    pub check: WellSupportedCheck,
}

#[derive(Debug, Clone, Serialize)]
pub struct WellSupportedCheck {
    pub pass: bool,
    pub delta: f64,
    /// `max ||a - b||` over samples.
    pub distance: f64,
    /// Most negative eigenvalue of `a - b`; `b <= a` needs this `>= -cutoff`.
    pub min_eigenvalue_a_minus_b: f64,
    pub rank_mismatches: usize,
    /// Largest `||p_j p_i - p_i||` for `i < j` on `F_i` and `F_j`.
    pub max_nesting_residual: f64,
    /// Largest `||p_i b - b||` on `F_i`.
    pub max_support_residual: f64,
    /// Largest `||p_i(u) - p_i(w)||` over edges of `F_i`; a resolution
    /// diagnostic, bounded below by the sampled variation of `a` itself.
    pub max_jump: f64,
    /// Smallest eigenvalue kept when completing `p_i` off `E_i`.
    pub min_completion_eigenvalue: f64,
    pub strata: Vec<usize>,
}

/// Builds the well-supported replacement `b` of a sampled field `a`.
///
/// On `E_i` the projection `p_i` is the support of `b`. At a vertex of
/// `F_i` outside `E_i` it is the projection of the next lower stratum
/// through that vertex plus the dominant eigenspace of the averaged `p_i`
/// of its `E_i` neighbours, compressed to the complement; strata are
/// processed upward so every `p_i` contains the lower ones.
pub fn well_supported_approximation(
    a: Vec<HermitianMatrix>,
    grid: Arc<SampleGrid>,
    cutoff: f64,
    delta: f64,
    tol: &Tolerances,
) -> Result<WellSupported, EngineError> {
    let nv = grid.len();
    if a.len() != nv {
        return Err(EngineError::Precondition(format!("{} values for {nv} samples", a.len())));
    }
    let n = a.first().map(|m| m.dim()).unwrap_or(0);
    let eigs: Vec<_> = a.par_iter().map(|m| hermitian_eig(m, tol)).collect::<Result<_, _>>()?;
    let b: Vec<HermitianMatrix> = eigs.iter().map(|e| e.reassemble(|l| if l > cutoff { l } else { 0.0 })).collect();
    let supports: Vec<HermitianMatrix> = eigs.iter().map(|e| e.reassemble(|l| if l > cutoff { 1.0 } else { 0.0 })).collect();
    let ranks: Vec<usize> = eigs.iter().map(|e| e.count_above(cutoff)).collect();
    let strata = stratify_ranks((*grid).clone(), ranks);
    let adjacency = grid.adjacency();
    let identity = HermitianMatrix::identity(n);

    let mut projections: Vec<Vec<HermitianMatrix>> = Vec::with_capacity(strata.len());
    let mut min_completion = f64::INFINITY;
    for (i, &ni) in strata.values.iter().enumerate() {
        let mask = &strata.closed_vertices[i];
        let done = &projections;
        let built: Vec<Result<(HermitianMatrix, f64), EngineError>> = (0..nv)
            .into_par_iter()
            .map(|u| {
                if !mask[u] {
                    return Ok((HermitianMatrix::zeros(n), f64::INFINITY));
                }
                if strata.ranks[u] == ni {
                    return Ok((supports[u].clone(), f64::INFINITY));
                }
                let below = (0..i)
                    .rev()
                    .find(|&j| strata.closed_vertices[j][u])
                    .map(|j| &done[j][u])
                    .ok_or_else(|| EngineError::Precondition(format!("sample {u} lies in no lower closed stratum")))?;
                let nbrs: Vec<&HermitianMatrix> = adjacency[u]
                    .iter()
                    .filter(|&&w| strata.ranks[w] == ni)
                    .map(|&w| &supports[w])
                    .collect();
                if nbrs.is_empty() {
                    return Err(EngineError::Precondition(format!("sample {u} of a closed stratum has no open neighbour")));
                }
                let avg = HermitianMatrix::weighted_sum(nbrs.iter().map(|p| (1.0 / nbrs.len() as f64, *p)));
                let comp = identity.sub(below);
                let c = HermitianMatrix::from_symmetrized(&comp.matrix().matmul(avg.matrix()).matmul(comp.matrix()));
                let have = below.matrix().trace().re.round() as usize;
                let extra = ni.saturating_sub(have);
                let es = hermitian_eig(&c, tol)?;
                let kept = if extra == 0 { f64::INFINITY } else { es.eigenvalues[n - extra] };
                let top = es.top_vectors(extra);
                Ok((below.add(&HermitianMatrix::outer(&top)), kept))
            })
            .collect();
        let mut level = Vec::with_capacity(nv);
        for r in built {
            let (p, kept) = r?;
            min_completion = min_completion.min(kept);
            level.push(p);
        }
        projections.push(level);
    }

    let check = check_well_supported(&a, &b, &strata, &projections, adjacency, cutoff, delta, min_completion, tol)?;
    Ok(WellSupported {
        grid,
        strata,
        a,
        b,
        projections,
        cutoff,
        check,
    })
}

#[allow(clippy::too_many_arguments)]
fn check_well_supported(
    a: &[HermitianMatrix],
    b: &[HermitianMatrix],
    strata: &Stratification,
    projections: &[Vec<HermitianMatrix>],
    adjacency: &[Vec<usize>],
    cutoff: f64,
    delta: f64,
    min_completion: f64,
    tol: &Tolerances,
) -> Result<WellSupportedCheck, EngineError> {
    let nv = a.len();
    let per_vertex: Vec<Result<(f64, f64, usize, f64, f64, f64), EngineError>> = (0..nv)
        .into_par_iter()
        .map(|v| {
            let diff = a[v].sub(&b[v]);
            let es = hermitian_eig(&diff, tol)?;
            let dist = es.eigenvalues.iter().fold(0.0_f64, |m, l| m.max(l.abs()));
            let min_eig = es.eigenvalues.first().copied().unwrap_or(0.0);
            let mut mismatches = 0;
            let mut nest: f64 = 0.0;
            let mut support: f64 = 0.0;
            let mut jump: f64 = 0.0;
            let present: Vec<usize> = (0..strata.len()).filter(|&i| strata.closed_vertices[i][v]).collect();
            for (pos, &i) in present.iter().enumerate() {
                let p = &projections[i][v];
                if p.matrix().trace().re.round() as usize != strata.values[i] || idempotency_residual(p) > tol.residual_tol {
                    mismatches += 1;
                }
                support = support.max(domination_residual_of_range(&b[v], p));
                if let Some(&j) = present.get(pos + 1) {
                    nest = nest.max(domination_residual(p, &projections[j][v]));
                }
                for &w in &adjacency[v] {
                    if w > v && strata.closed_vertices[i][w] {
                        jump = jump.max(p.dist(&projections[i][w]));
                    }
                }
            }
            Ok((dist, min_eig, mismatches, nest, support, jump))
        })
        .collect();
    let mut out = WellSupportedCheck {
        pass: false,
        delta,
        distance: 0.0,
        min_eigenvalue_a_minus_b: f64::INFINITY,
        rank_mismatches: 0,
        max_nesting_residual: 0.0,
        max_support_residual: 0.0,
        max_jump: 0.0,
        min_completion_eigenvalue: min_completion,
        strata: strata.values.clone(),
    };
    for r in per_vertex {
        let (d, m, mis, nest, sup, jump) = r?;
        out.distance = out.distance.max(d);
        out.min_eigenvalue_a_minus_b = out.min_eigenvalue_a_minus_b.min(m);
        out.rank_mismatches += mis;
        out.max_nesting_residual = out.max_nesting_residual.max(nest);
        out.max_support_residual = out.max_support_residual.max(sup);
        out.max_jump = out.max_jump.max(jump);
    }
    let scale = b.iter().map(|m| m.matrix().frobenius()).fold(1.0_f64, f64::max);
    out.pass = out.distance < delta
        && out.min_eigenvalue_a_minus_b >= -cutoff
        && out.rank_mismatches == 0
        && out.max_nesting_residual <= tol.residual_tol
        && out.max_support_residual <= tol.residual_tol * scale;
    Ok(out)
}

/// `||p b - b||`: how far the range of `b` is from lying under `p`.
fn domination_residual_of_range(b: &HermitianMatrix, p: &HermitianMatrix) -> f64 {
    (&p.matrix().matmul(b.matrix()) - b.matrix()).op_norm()
}

/// Linear path from `a` to its well-supported replacement.
pub fn path_to_well_supported(ws: &WellSupported, window: RankWindow, steps: usize) -> HomotopyPath {
    let mut path = HomotopyPath::new(window, ws.grid.clone(), steps);
    path.push(LabeledSegment::new(
        "a to well-supported b",
        Segment::Linear {
            from: ws.a.clone(),
            to: ws.b.clone(),
        },
    ));
    path
}

/// One constructed projection and the ranks measured on its domain.
#[derive(Debug, Clone, Serialize)]
pub struct StageRecord {
    pub name: String,
    pub expected_rank: usize,
    pub min_rank: usize,
    pub max_rank: usize,
    pub samples: usize,
    pub max_idempotency_residual: f64,
}

/// A checked inequality of the construction.
#[derive(Debug, Clone, Serialize)]
pub struct LedgerEntry {
    pub name: String,
    pub bound: f64,
    pub worst: f64,
    pub samples: usize,
    pub pass: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct ContractionTrace {
    /// `pointwise`, `coordinate` or `inductive`.
    pub branch: &'static str,
    pub dimension: usize,
    pub half_dim: usize,
    pub strata: Vec<usize>,
    /// Rank `n_r` of the first stratum above `half_dim`.
    pub pivot_rank: Option<usize>,
    pub stages: Vec<StageRecord>,
    pub ledger: Vec<LedgerEntry>,
    pub pass: bool,
}

#[derive(Debug, Clone)]
pub struct Contraction {
    pub target: TrivialProjection,
    pub well_supported: WellSupported,
    /// `a -> b -> R`.
    pub path: HomotopyPath,
    pub trace: ContractionTrace,
}

fn stage_record(name: String, expected: usize, values: &[HermitianMatrix], mask: &[bool]) -> StageRecord {
    let mut rec = StageRecord {
        name,
        expected_rank: expected,
        min_rank: usize::MAX,
        max_rank: 0,
        samples: 0,
        max_idempotency_residual: 0.0,
    };
    for (p, _) in values.iter().zip(mask).filter(|(_, &m)| m) {
        let r = p.matrix().trace().re.round() as usize;
        rec.min_rank = rec.min_rank.min(r);
        rec.max_rank = rec.max_rank.max(r);
        rec.samples += 1;
        rec.max_idempotency_residual = rec.max_idempotency_residual.max(idempotency_residual(p));
    }
    if rec.samples == 0 {
        rec.min_rank = 0;
    }
    rec
}

/// Rank of a PSD sum, with the cutoff relative to its own norm.
fn sum_rank(parts: &[&HermitianMatrix], tol: &Tolerances) -> Result<usize, EngineError> {
    let s = HermitianMatrix::weighted_sum(parts.iter().map(|m| (1.0, *m)));
    let es = hermitian_eig(&s, tol)?;
    let scale = es.eigenvalues.iter().fold(0.0_f64, |m, l| m.max(l.abs()));
    Ok(es.count_above(tol.cutoff(scale)))
}

fn rank_ledger(
    name: String,
    bound: usize,
    mask: &[bool],
    parts: impl Fn(usize) -> Vec<HermitianMatrix> + Sync,
    tol: &Tolerances,
) -> Result<LedgerEntry, EngineError> {
    let ranks: Vec<usize> = (0..mask.len())
        .into_par_iter()
        .filter(|&v| mask[v])
        .map(|v| {
            let p = parts(v);
            sum_rank(&p.iter().collect::<Vec<_>>(), tol)
        })
        .collect::<Result<_, _>>()?;
    let worst = ranks.iter().copied().max().unwrap_or(0);
    Ok(LedgerEntry {
        name,
        bound: bound as f64,
        worst: worst as f64,
        samples: ranks.len(),
        pass: worst <= bound,
    })
}

fn domination_ledger(name: String, q: &[HermitianMatrix], p: &[HermitianMatrix], mask: &[bool], tol: &Tolerances) -> LedgerEntry {
    let worst = (0..mask.len())
        .into_par_iter()
        .filter(|&v| mask[v])
        .map(|v| domination_residual(&q[v], &p[v]))
        .reduce(|| 0.0, f64::max);
    LedgerEntry {
        name,
        bound: tol.residual_tol,
        worst,
        samples: mask.iter().filter(|&&m| m).count(),
        pass: worst <= tol.residual_tol,
    }
}

/// Chern number of the support projection of a constant-rank field on a
/// closed surface, attached to dimension refusals.
fn support_obstruction(ws: &WellSupported, tol: &Tolerances) -> serde_json::Value {
    let fine = &ws.grid.fine;
    if !fine.is_closed_surface() || ws.strata.len() != 1 {
        return json!(null);
    }
    let rank = ws.strata.values[0];
    let supports = &ws.projections[0];
    match crate::chern::chern_from_values(fine, supports, rank, tol) {
        Ok(c) => json!({"support_rank": rank, "chern_number": c, "rounded": c.round()}),
        Err(e) => json!({"support_rank": rank, "chern_error": e.to_string()}),
    }
}

/// Contracts a sampled window field to a constant-rank trivial projection.
///
/// Requires `k - l >= floor(d / 2)`; otherwise refuses with a certificate.
pub fn contract_to_trivial_projection(
    a: Vec<HermitianMatrix>,
    grid: Arc<SampleGrid>,
    window: RankWindow,
    cutoff: f64,
    delta: Option<f64>,
    cfg: &EngineConfig,
    tol: &Tolerances,
) -> Result<Contraction, EngineError> {
    let d = grid.fine.dimension();
    let m = d / 2;
    let delta = delta.unwrap_or(2.0 * cutoff.max(f64::MIN_POSITIVE));
    let ws = well_supported_approximation(a, grid.clone(), cutoff, delta, tol)?;
    if window.k - window.l < m {
        return Err(EngineError::Refused(dimension_certificate(window, d, support_obstruction(&ws, tol))));
    }
    if !ws.check.pass {
        return Err(EngineError::Precondition(format!(
            "well-supported approximation failed its check: {}",
            serde_json::to_string(&ws.check).unwrap_or_default()
        )));
    }
    let (max_rank, min_rank) = (
        ws.strata.values.last().copied().unwrap_or(0),
        ws.strata.values.first().copied().unwrap_or(0),
    );
    if max_rank > window.k || min_rank < window.l || window.n != ws.b.first().map(|b| b.dim()).unwrap_or(window.n) {
        return Err(EngineError::Precondition(format!(
            "sampled ranks {min_rank}..={max_rank} leave the window ({}, {}, {})",
            window.n, window.k, window.l
        )));
    }
    let fine = grid.fine.clone();
    let nv = grid.len();
    let n = window.n;
    let all = vec![true; nv];
    let mut trace = ContractionTrace {
        branch: "inductive",
        dimension: d,
        half_dim: m,
        strata: ws.strata.values.clone(),
        pivot_rank: None,
        stages: Vec::new(),
        ledger: Vec::new(),
        pass: false,
    };

    let target = if d == 0 {
        trace.branch = "pointwise";
        let vectors = ws
            .b
            .iter()
            .map(|b| Ok(hermitian_eig(b, tol)?.top_vectors(window.l)))
            .collect::<Result<Vec<_>, EngineError>>()?;
        stage("R", TrivialProjection::from_frame(stage("R", Frame::new(fine.clone(), all.clone(), vectors))?, tol))?
    } else if max_rank <= m {
        trace.branch = "coordinate";
        stage("R", TrivialProjection::coordinate(&fine, n, window.l, tol))?
    } else {
        inductive_target(&ws, window, m, cfg, tol, &mut trace)?
    };

    let r_values = target.projection.values().to_vec();
    trace.stages.push(stage_record("R".into(), window.l, &r_values, &all));
    trace.ledger.push(rank_ledger(
        "rank(b + R) <= k".into(),
        window.k,
        &all,
        |v| vec![ws.b[v].clone(), r_values[v].clone()],
        tol,
    )?);
    trace.pass = trace.ledger.iter().all(|e| e.pass) && trace.stages.iter().all(|s| s.samples == 0 || (s.min_rank == s.expected_rank && s.max_rank == s.expected_rank));

    let mut path = path_to_well_supported(&ws, window, cfg.steps);
    path.push(LabeledSegment::new(
        "b to trivial projection R",
        Segment::Linear {
            from: ws.b.clone(),
            to: r_values.clone(),
        },
    ));
    Ok(Contraction {
        target,
        well_supported: ws,
        path,
        trace,
    })
}

/// The pivot induction: nested trivial `q_t` under the strata over
/// `U = F_r u ... u F_L`, extended to `R_1` on the whole grid, completed by
/// `R_2 <= 1 - R_1` up to rank `k - m`, then cut to rank `l`.
fn inductive_target(
    ws: &WellSupported,
    window: RankWindow,
    m: usize,
    cfg: &EngineConfig,
    tol: &Tolerances,
    trace: &mut ContractionTrace,
) -> Result<TrivialProjection, EngineError> {
    let fine = &ws.grid.fine;
    let nv = ws.grid.len();
    let n = window.n;
    let vals = &ws.strata.values;
    let closed = &ws.strata.closed_vertices;
    let big_l = vals.len() - 1;
    let r = vals.iter().position(|&ni| ni > m).expect("some stratum exceeds half the dimension");
    trace.pivot_rank = Some(vals[r]);
    let in_u: Vec<bool> = (0..nv).map(|v| (r..=big_l).any(|j| closed[j][v])).collect();
    let lowest_from = |v: usize, from: usize| (from..=big_l).find(|&j| closed[j][v]);
    let identity = HermitianMatrix::identity(n);
    let zero = HermitianMatrix::zeros(n);

    // q_r on F_r, then over U under the lowest stratum through each vertex.
    let rank_r = vals[r] - m;
    let first = stage(
        "q_r on its stratum",
        extend_frame(None, &closed[r], &ws.projections[r], fine, rank_r, sub_seed(cfg.seed, 10), &cfg.frames, tol),
    )?;
    let allowed: Vec<HermitianMatrix> = (0..nv)
        .map(|v| lowest_from(v, r).map(|j| ws.projections[j][v].clone()).unwrap_or_else(|| zero.clone()))
        .collect();
    let q = stage(
        "q_r over the upper strata",
        extend_frame(Some(&first.frame), &in_u, &allowed, fine, rank_r, sub_seed(cfg.seed, 11), &cfg.frames, tol),
    )?;
    let mut frame = q.frame;
    let mut q_values = q.projection.values().to_vec();
    record_q(ws, r, r, &q_values, &in_u, m, trace, tol)?;

    for t in r..big_l {
        let add = vals[t + 1] - vals[t];
        let upper: Vec<HermitianMatrix> = (0..nv)
            .map(|v| ws.projections[t + 1][v].sub(&q_values[v]))
            .collect();
        let piece = stage(
            &format!("q_{{{},{}}} on its stratum", t + 1, t + 2),
            extend_frame(None, &closed[t + 1], &upper, fine, add, sub_seed(cfg.seed, 10 + 2 * (t as u64 + 1)), &cfg.frames, tol),
        )?;
        let allowed: Vec<HermitianMatrix> = (0..nv)
            .map(|v| {
                if !in_u[v] {
                    return zero.clone();
                }
                match lowest_from(v, t + 1) {
                    Some(j) => ws.projections[j][v].sub(&q_values[v]),
                    None => identity.sub(&q_values[v]),
                }
            })
            .collect();
        let piece = stage(
            &format!("q_{{{},{}}} over U", t + 1, t + 2),
            extend_frame(Some(&piece.frame), &in_u, &allowed, fine, add, sub_seed(cfg.seed, 11 + 2 * (t as u64 + 1)), &cfg.frames, tol),
        )?;
        frame = stage("q_t", frame.concat(&piece.frame))?;
        q_values = (0..nv).map(|v| q_values[v].add(piece.projection.value(v))).collect();
        record_q(ws, r, t + 1, &q_values, &in_u, m, trace, tol)?;
    }

    let q_l = stage("q_L", TrivialProjection::from_frame(frame, tol))?;
    let r1 = stage("R_1", extend_trivial_projection(&q_l, sub_seed(cfg.seed, 1000), &cfg.frames, tol))?;
    let all = vec![true; nv];
    let r1_values = r1.projection.values().to_vec();
    let n_l = vals[big_l];
    trace.stages.push(stage_record("R_1".into(), n_l - m, &r1_values, &all));
    let agree = (0..nv)
        .filter(|&v| in_u[v])
        .map(|v| r1_values[v].dist(&q_values[v]))
        .fold(0.0_f64, f64::max);
    trace.ledger.push(LedgerEntry {
        name: "R_1 = q_L on U".into(),
        bound: tol.residual_tol,
        worst: agree,
        samples: in_u.iter().filter(|&&b| b).count(),
        pass: agree <= tol.residual_tol,
    });
    trace.ledger.push(rank_ledger(
        format!("rank(R_1 + b) <= n_L = {n_l}"),
        n_l,
        &all,
        |v| vec![r1_values[v].clone(), ws.b[v].clone()],
        tol,
    )?);

    let full = if window.k > n_l {
        let comp = stage("1 - R_1", r1.projection.complement(tol))?;
        let r2 = stage(
            "R_2",
            find_trivial_subbundle(&comp, window.k - n_l, sub_seed(cfg.seed, 1001), &cfg.frames, tol),
        )?;
        trace.stages.push(stage_record("R_2".into(), window.k - n_l, r2.projection.values(), &all));
        stage("R_1 + R_2", r1.frame.concat(&r2.frame))?
    } else {
        r1.frame
    };
    let sum = stage("R_1 + R_2", TrivialProjection::from_frame(full.clone(), tol))?;
    let sum_values = sum.projection.values().to_vec();
    trace.stages.push(stage_record("R_1 + R_2".into(), window.k - m, &sum_values, &all));
    trace.ledger.push(rank_ledger(
        format!("rank(R_1 + R_2 + b) <= k = {}", window.k),
        window.k,
        &all,
        |v| vec![sum_values[v].clone(), ws.b[v].clone()],
        tol,
    )?);
    stage("R", TrivialProjection::from_frame(full.leading(window.l), tol))
}

/// Rank, domination and rank-sum checks for `q_t`.
#[allow(clippy::too_many_arguments)]
fn record_q(
    ws: &WellSupported,
    r: usize,
    t: usize,
    q: &[HermitianMatrix],
    in_u: &[bool],
    m: usize,
    trace: &mut ContractionTrace,
    tol: &Tolerances,
) -> Result<(), EngineError> {
    let vals = &ws.strata.values;
    let closed = &ws.strata.closed_vertices;
    trace.stages.push(stage_record(format!("q_{}", t + 1), vals[t] - m, q, in_u));
    for j in t..vals.len() {
        trace.ledger.push(domination_ledger(
            format!("q_{} <= p_{} on F_{}", t + 1, j + 1, j + 1),
            q,
            &ws.projections[j],
            &closed[j],
            tol,
        ));
    }
    for j in r..=t {
        trace.ledger.push(rank_ledger(
            format!("rank(q_{} + p_{}) <= n_{} on F_{}", t + 1, j + 1, t + 1, j + 1),
            vals[t],
            &closed[j],
            |v| vec![q[v].clone(), ws.projections[j][v].clone()],
            tol,
        )?);
    }
    Ok(())
}

/// Sampled rank constancy of `(1 - t) a + t b` at the given times, with
/// the cutoff of `a`.
#[derive(Debug, Clone, Serialize)]
pub struct RankConstancy {
    pub pass: bool,
    pub times: Vec<f64>,
    pub samples: usize,
    pub violations: usize,
}

pub fn rank_constancy(ws: &WellSupported, times: &[f64], tol: &Tolerances) -> Result<RankConstancy, EngineError> {
    let mut violations = 0;
    for &t in times {
        let bad: Vec<bool> = (0..ws.a.len())
            .into_par_iter()
            .map(|v| {
                let at = ws.a[v].lincomb(1.0 - t, &ws.b[v], t);
                Ok(hermitian_eig(&at, tol)?.count_above(ws.cutoff) != ws.strata.ranks[v])
            })
            .collect::<Result<_, EngineError>>()?;
        violations += bad.iter().filter(|&&b| b).count();
    }
    Ok(RankConstancy {
        pass: violations == 0,
        times: times.to_vec(),
        samples: ws.a.len(),
        violations,
    })
}

/// Output of [`connect`].
#[derive(Debug, Clone)]
pub struct Connection {
    pub path: HomotopyPath,
    pub check: PathCheck,
    pub contraction_a: Option<ContractionTrace>,
    pub contraction_b: Option<ContractionTrace>,
    /// Kind and diagnostics of the middle projection path.
    pub projection_path: serde_json::Value,
}

fn sample_in_window(f: &MatrixField, window: RankWindow, grid: &SampleGrid, tol: &Tolerances, name: &str) -> Result<Vec<HermitianMatrix>, EngineError> {
    let report = membership_on_grid(f, window, grid, tol)?;
    if !report.pass {
        return Err(EngineError::Precondition(format!(
            "{name} leaves the window at {} samples (ranks {}..={})",
            report.violations.len(),
            report.min_rank,
            report.max_rank
        )));
    }
    Ok(f.sample(grid, tol)?)
}

/// A verified path from `a` to `b` inside the window: contract both to
/// trivial rank-`l` projections and join those through frames. For
/// `n = k` the path runs linearly through the identity instead.
pub fn connect(
    a: &MatrixField,
    b: &MatrixField,
    window: RankWindow,
    depth: usize,
    cfg: &EngineConfig,
    tol: &Tolerances,
) -> Result<Connection, EngineError> {
    if !same_complex(a.complex(), b.complex()) {
        return Err(EngineError::Field(FieldError::Mismatch));
    }
    let grid = Arc::new(SampleGrid::new(a.complex(), depth));
    let va = sample_in_window(a, window, &grid, tol, "a")?;
    let vb = sample_in_window(b, window, &grid, tol, "b")?;
    let d = grid.fine.dimension();
    if window.n == window.k {
        let one = vec![HermitianMatrix::identity(window.n); grid.len()];
        let mut path = HomotopyPath::new(window, grid, cfg.steps);
        path.push(LabeledSegment::new("a to identity", Segment::Linear { from: va, to: one.clone() }));
        let mut back = LabeledSegment::new("identity to b", Segment::Linear { from: vb, to: one });
        back.reversed = true;
        path.push(back);
        let check = verify_with_refinement(&mut path, cfg, tol)?;
        return Ok(Connection {
            path,
            check,
            contraction_a: None,
            contraction_b: None,
            projection_path: json!({"kind": "through_identity"}),
        });
    }
    if window.k - window.l < d / 2 {
        return Err(EngineError::Refused(dimension_certificate(window, d, json!(null))));
    }
    let ca = contract_to_trivial_projection(va, grid.clone(), window, a.cutoff(tol), None, cfg, tol)?;
    let cb = contract_to_trivial_projection(vb, grid.clone(), window, b.cutoff(tol), None, cfg, tol)?;
    let h = stage(
        "projection path",
        projection_homotopy(
            &ca.target.projection,
            &cb.target.projection,
            Some((&ca.target.frame, &cb.target.frame)),
            cfg.steps,
            0,
            sub_seed(cfg.seed, 2000),
            &cfg.frames,
            tol,
        ),
    )?;
    let projection_path = json!({
        "kind": match h.kind {
            ProjectionPathKind::Retracted => "retracted",
            ProjectionPathKind::ThroughFrames { .. } => "through_frames",
        },
        "endpoint_distance": h.endpoint_distance,
        "max_step": h.max_step,
        "max_idempotency_residual": h.max_idempotency_residual,
    });
    let mut path = ca.path.clone();
    path.push(LabeledSegment::new("R_a to R_b", Segment::Projection(Box::new(h))));
    path.extend(cb.path.reversed());
    let check = verify_with_refinement(&mut path, cfg, tol)?;
    Ok(Connection {
        path,
        check,
        contraction_a: Some(ca.trace),
        contraction_b: Some(cb.trace),
        projection_path,
    })
}

/// Output of [`truncation_path`].
#[derive(Debug, Clone)]
pub struct Truncation {
    pub path: HomotopyPath,
    pub check: PathCheck,
    pub ledger: TruncationLedger,
}

#[derive(Debug, Clone, Serialize)]
pub struct TruncationLedger {
    pub eta: f64,
    /// Sampled `max ||a - pullback||`.
    pub distance: f64,
    /// Smallest count of eigenvalues of `a` above `2 eta` over samples.
    pub min_count_above_two_eta: usize,
    /// Largest `||h(0) - (a - eta)_+||` and `||h(1) - (pullback - eta)_+||`
    /// over vertices; both are zero when the endpoints are exact.
    pub start_endpoint_error: f64,
    pub end_endpoint_error: f64,
    /// `(x_t - eta)_+ = c* a c` checks at the sampled times.
    pub factor_times: Vec<f64>,
    pub max_factor_residual: f64,
    pub max_factor_norm: f64,
    pub pass: bool,
}

/// `t -> (1 - t) a + t (a - eta)_+` followed by
/// `t -> [((1 - t) a + t a') - eta]_+`, with `a'` the coarse pullback.
pub fn truncation_path(
    a: &MatrixField,
    pulled: &MatrixField,
    eta: f64,
    window: RankWindow,
    depth: usize,
    cfg: &EngineConfig,
    tol: &Tolerances,
) -> Result<Truncation, EngineError> {
    if !same_complex(a.complex(), pulled.complex()) || a.n() != pulled.n() {
        return Err(EngineError::Field(FieldError::Mismatch));
    }
    if !(eta > 0.0 && eta.is_finite()) {
        return Err(EngineError::Precondition(format!("eta = {eta} is not positive")));
    }
    let grid = Arc::new(SampleGrid::new(a.complex(), depth));
    let va = a.sample(&grid, tol)?;
    let vp = pulled.sample(&grid, tol)?;
    let dists: Vec<f64> = va.par_iter().zip(vp.par_iter()).map(|(x, y)| x.dist(y)).collect();
    let (worst, distance) = dists
        .iter()
        .enumerate()
        .fold((0, 0.0_f64), |acc, (i, &d)| if d > acc.1 { (i, d) } else { acc });
    if distance >= eta {
        return Err(EngineError::Precondition(format!(
            "sup distance {distance} >= eta {eta}, worst at sample {worst}"
        )));
    }
    let counts: Vec<usize> = va
        .par_iter()
        .map(|x| Ok(hermitian_eig(x, tol)?.count_above(2.0 * eta)))
        .collect::<Result<_, EngineError>>()?;
    let min_count = counts.iter().copied().min().unwrap_or(0);
    if min_count < window.l {
        let s = counts.iter().position(|&c| c == min_count).unwrap_or(0);
        return Err(EngineError::Precondition(format!(
            "only {min_count} eigenvalues above 2 eta at sample {s}, need {}",
            window.l
        )));
    }
    let cut_a: Vec<HermitianMatrix> = va.par_iter().map(|x| cut_epsilon(x, eta, tol)).collect::<Result<_, _>>()?;
    let mut path = HomotopyPath::new(window, grid.clone(), cfg.steps);
    path.push(LabeledSegment::new("a to (a - eta)_+", Segment::Linear { from: va.clone(), to: cut_a.clone() }));
    let truncated = Segment::Truncated { from: va.clone(), to: vp.clone(), eta };
    path.push(LabeledSegment::new("truncated path to the pullback", truncated.clone()));

    let cut_p: Vec<HermitianMatrix> = vp.par_iter().map(|x| cut_epsilon(x, eta, tol)).collect::<Result<_, _>>()?;
    let endpoint_error = |t: f64, want: &[HermitianMatrix]| -> Result<f64, EngineError> {
        let got: Vec<HermitianMatrix> = (0..grid.len()).into_par_iter().map(|v| truncated.at(v, t, tol)).collect::<Result<_, _>>()?;
        Ok(got.iter().zip(want).map(|(x, y)| (x.matrix() - y.matrix()).max_abs()).fold(0.0, f64::max))
    };
    let start_endpoint_error = endpoint_error(0.0, &cut_a)?;
    let end_endpoint_error = endpoint_error(1.0, &cut_p)?;

    let factor_times = vec![0.0, 0.25, 0.5, 0.75, 1.0];
    let mut max_res: f64 = 0.0;
    let mut max_norm: f64 = 0.0;
    for &t in &factor_times {
        let stats: Vec<(f64, f64)> = (0..grid.len())
            .into_par_iter()
            .map(|v| {
                let x = va[v].lincomb(1.0 - t, &vp[v], t);
                let f = roerdam_factor(&x, &va[v], eta, tol)?;
                Ok((f.residual, f.norm))
            })
            .collect::<Result<_, EngineError>>()?;
        for (r, n) in stats {
            max_res = max_res.max(r);
            max_norm = max_norm.max(n);
        }
    }
    let check = verify_with_refinement(&mut path, cfg, tol)?;
    let ledger = TruncationLedger {
        eta,
        distance,
        min_count_above_two_eta: min_count,
        start_endpoint_error,
        end_endpoint_error,
        factor_times,
        max_factor_residual: max_res,
        max_factor_norm: max_norm,
        pass: start_endpoint_error == 0.0 && end_endpoint_error == 0.0 && max_norm <= 1.0 + tol.residual_tol,
    };
    Ok(Truncation { path, check, ledger })
}

/// The refinement-level pipeline: a smooth rank-`k` field on one
/// subdivision of `coarse`, its coarse pullback, and `eta` half the
/// selected spectral gap.
pub fn truncation_pipeline(
    coarse: &SimplicialComplex,
    window: RankWindow,
    amplitude: f64,
    depth: usize,
    cfg: &EngineConfig,
    tol: &Tolerances,
) -> Result<(Truncation, GapSelection), EngineError> {
    let (fine, pulled) = smooth_refinement_pair(coarse, window.n, window.k, amplitude, cfg.seed, tol)?;
    let gap = spectral_gap_eta(&fine, window.l, depth, tol)?;
    let t = truncation_path(&fine, &pulled, gap.eta / 2.0, window, depth, cfg, tol)?;
    Ok((t, gap))
}

#[derive(Debug, Clone, Serialize)]
pub struct ProbeTrial {
    pub trial: usize,
    pub seed: u64,
    pub success: bool,
    pub steps: usize,
    pub segments: usize,
    pub error: Option<String>,
    pub certificate: Option<Certificate>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ProbeReport {
    pub window: RankWindow,
    pub sphere_dimension: usize,
    pub trials: Vec<ProbeTrial>,
    pub successes: usize,
    pub success_rate: f64,
}

/// The triangulated `r`-sphere used by the prober.
pub fn probe_sphere(r: usize) -> Result<SimplicialComplex, EngineError> {
    match r {
        1 => Ok(builtin::circle(12).map_err(FieldError::from)?),
        2 => Ok(builtin::icosphere(1).map_err(FieldError::from)?),
        _ => Err(EngineError::Precondition(format!("no built-in sphere of dimension {r}"))),
    }
}

/// Connects seeded random window fields on the `r`-sphere to the constant
/// rank-`l` coordinate projection; trials run concurrently.
pub fn probe_pi_r(
    window: RankWindow,
    r: usize,
    trials: usize,
    depth: usize,
    cfg: &EngineConfig,
    tol: &Tolerances,
) -> Result<ProbeReport, EngineError> {
    if trials == 0 {
        return Err(EngineError::Precondition("at least one trial".into()));
    }
    let sphere = probe_sphere(r)?;
    let base = MatrixField::constant(sphere.clone(), HermitianMatrix::coordinate_projection(window.n, window.l), tol)?;
    let results: Vec<ProbeTrial> = (0..trials)
        .into_par_iter()
        .map(|i| {
            let seed = sub_seed(cfg.seed, 5000 + i as u64);
            let trial_cfg = EngineConfig { seed, ..*cfg };
            let outcome = random_window_field(&sphere, window, seed, depth, tol)
                .map_err(EngineError::from)
                .and_then(|f| connect(&f, &base, window, depth, &trial_cfg, tol));
            match outcome {
                Ok(c) => ProbeTrial {
                    trial: i,
                    seed,
                    success: c.check.pass,
                    steps: c.check.steps,
                    segments: c.path.segments.len(),
                    error: (!c.check.pass).then(|| format!("{} window violations", c.check.violation_count)),
                    certificate: None,
                },
                Err(e) => ProbeTrial {
                    trial: i,
                    seed,
                    success: false,
                    steps: 0,
                    segments: 0,
                    certificate: match &e {
                        EngineError::Refused(c) => Some(c.clone()),
                        EngineError::Stage { source: BundleError::Obstruction(c), .. } => Some(c.clone()),
                        _ => None,
                    },
                    error: Some(e.to_string()),
                },
            }
        })
        .collect();
    let successes = results.iter().filter(|t| t.success).count();
    Ok(ProbeReport {
        window,
        sphere_dimension: r,
        successes,
        success_rate: successes as f64 / trials as f64,
        trials: results,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::generators::tautological_sphere;
    use crate::linalg::{CMatrix, C64};

    fn tol() -> Tolerances {
        Tolerances::default()
    }

    fn cfg(seed: u64) -> EngineConfig {
        EngineConfig { seed, ..EngineConfig::default() }
    }

    #[test]
    fn connects_circle_fields() {
        let c = builtin::circle(12).unwrap();
        let w = RankWindow::new(4, 2, 1).unwrap();
        let a = random_window_field(&c, w, 1, 2, &tol()).unwrap();
        let b = random_window_field(&c, w, 2, 2, &tol()).unwrap();
        let con = connect(&a, &b, w, 2, &cfg(1), &tol()).unwrap();
        assert!(con.check.pass, "{:?}", con.check);
        assert!(con.contraction_a.unwrap().pass);
        let start = con.path.start(&tol()).unwrap();
        let end = con.path.end(&tol()).unwrap();
        let grid = SampleGrid::new(&c, 2);
        assert_eq!(start, a.sample(&grid, &tol()).unwrap());
        assert_eq!(end, b.sample(&grid, &tol()).unwrap());
    }

    #[test]
    fn reversed_connection_passes_the_same_sweep() {
        let c = builtin::circle(6).unwrap();
        let w = RankWindow::new(3, 2, 1).unwrap();
        let a = random_window_field(&c, w, 4, 1, &tol()).unwrap();
        let b = random_window_field(&c, w, 5, 1, &tol()).unwrap();
        let con = connect(&a, &b, w, 1, &cfg(3), &tol()).unwrap();
        let back = con.path.reversed();
        assert!(verify_path(&back, 0.25, &tol()).unwrap().pass);
        let grid = SampleGrid::new(&c, 1);
        assert_eq!(back.start(&tol()).unwrap(), b.sample(&grid, &tol()).unwrap());
    }

    #[test]
    fn connects_sphere_fields() {
        let s = builtin::icosphere(1).unwrap();
        let w = RankWindow::new(5, 3, 2).unwrap();
        let a = random_window_field(&s, w, 1, 0, &tol()).unwrap();
        let b = random_window_field(&s, w, 2, 0, &tol()).unwrap();
        let con = connect(&a, &b, w, 0, &cfg(1), &tol()).unwrap();
        assert!(con.check.pass, "{:?}", con.check);
        let trace = con.contraction_a.unwrap();
        assert!(trace.pass, "{:?}", trace);
        assert_eq!(trace.half_dim, 1);
    }

    #[test]
    fn tautological_sphere_is_refused_with_degree_one() {
        let s = builtin::icosphere(1).unwrap();
        let f = tautological_sphere(&s, &tol()).unwrap();
        let w = RankWindow::new(2, 1, 1).unwrap();
        let grid = Arc::new(SampleGrid::new(&s, 0));
        let err = contract_to_trivial_projection(f.sample(&grid, &tol()).unwrap(), grid, w, f.cutoff(&tol()), None, &cfg(0), &tol())
            .unwrap_err();
        let EngineError::Refused(cert) = err else { panic!("expected a refusal, got {err:?}") };
        assert_eq!(cert.kind, CertificateKind::DimensionHypothesis);
        let c = cert.details["obstruction"]["chern_number"].as_f64().unwrap();
        assert!((c - 1.0).abs() < 1e-6, "chern {c}");
    }

    #[test]
    fn point_contracts_to_top_eigenspace() {
        let point = crate::complex::SimplicialComplex::point();
        let grid = Arc::new(SampleGrid::new(&point, 0));
        let a = HermitianMatrix::diagonal(&[0.0, 3.0, 1.0, 2.0]);
        let w = RankWindow::new(4, 3, 2).unwrap();
        let c = contract_to_trivial_projection(vec![a], grid, w, 1e-8, None, &cfg(0), &tol()).unwrap();
        assert_eq!(c.trace.branch, "pointwise");
        let r = c.target.projection.value(0);
        assert!(r.dist(&HermitianMatrix::diagonal(&[0.0, 1.0, 0.0, 1.0])) < 1e-10);
        assert!(verify_path(&c.path, 10.0, &tol()).unwrap().violation_count == 0);
    }

    #[test]
    fn edge_field_splits_into_two_nested_strata() {
        let edge = crate::complex::SimplicialComplex::new(2, vec![vec![0, 1]]).unwrap();
        let grid = Arc::new(SampleGrid::new(&edge, 2));
        let a: Vec<HermitianMatrix> = grid
            .points
            .iter()
            .map(|p| {
                let t = p.weights().iter().find(|(v, _)| *v == 1).map(|x| x.1).unwrap_or(0.0);
                HermitianMatrix::diagonal(&[1.0, t])
            })
            .collect();
        let ws = well_supported_approximation(a, grid, 1e-8, 1e-6, &tol()).unwrap();
        assert!(ws.check.pass, "{:?}", ws.check);
        assert_eq!(ws.check.strata, vec![1, 2]);
        assert!(rank_constancy(&ws, &[0.1, 0.5, 0.9], &tol()).unwrap().pass);
    }

    #[test]
    fn constant_projection_is_its_own_replacement() {
        let c = builtin::circle(5).unwrap();
        let grid = Arc::new(SampleGrid::new(&c, 1));
        let p = HermitianMatrix::coordinate_projection(3, 2);
        let ws = well_supported_approximation(vec![p.clone(); grid.len()], grid, 1e-8, 1e-6, &tol()).unwrap();
        assert!(ws.check.pass);
        assert!(ws.b.iter().all(|b| b.dist(&p) < 1e-12));
        assert_eq!(ws.strata.len(), 1);
    }

    #[test]
    fn full_rank_window_goes_through_identity() {
        let c = builtin::circle(6).unwrap();
        let w = RankWindow::new(3, 3, 1).unwrap();
        let a = random_window_field(&c, w, 8, 1, &tol()).unwrap();
        let b = random_window_field(&c, w, 9, 1, &tol()).unwrap();
        let con = connect(&a, &b, w, 1, &cfg(0), &tol()).unwrap();
        assert!(con.check.pass);
        assert_eq!(con.path.segments.len(), 2);
    }

    #[test]
    fn truncation_endpoints_are_exact() {
        let c = builtin::circle(12).unwrap();
        let w = RankWindow::new(3, 2, 1).unwrap();
        let (t, gap) = truncation_pipeline(&c, w, 0.3, 1, &cfg(4), &tol()).unwrap();
        assert!(gap.eta > 0.0);
        assert!(t.ledger.pass, "{:?}", t.ledger);
        assert!(t.check.pass, "{:?}", t.check);
        assert_eq!(t.ledger.start_endpoint_error, 0.0);
    }

    #[test]
    fn truncation_refuses_far_pullback() {
        let c = builtin::circle(4).unwrap();
        let w = RankWindow::new(2, 1, 1).unwrap();
        let a = MatrixField::constant(c.clone(), HermitianMatrix::diagonal(&[1.0, 0.0]), &tol()).unwrap();
        let b = MatrixField::constant(c, HermitianMatrix::diagonal(&[0.0, 1.0]), &tol()).unwrap();
        let err = truncation_path(&a, &b, 0.1, w, 0, &cfg(0), &tol()).unwrap_err();
        assert!(matches!(err, EngineError::Precondition(_)));
    }

    #[test]
    fn csv_has_header_and_crlf_rows() {
        let point = crate::complex::SimplicialComplex::point();
        let grid = Arc::new(SampleGrid::new(&point, 0));
        let w = RankWindow::new(2, 2, 1).unwrap();
        let mut path = HomotopyPath::new(w, grid, 2);
        let a = HermitianMatrix::diagonal(&[1.0, 0.0]);
        let mut b = CMatrix::identity(2);
        b[(0, 1)] = C64::new(0.0, 0.0);
        path.push(LabeledSegment::new("s", Segment::Linear { from: vec![a], to: vec![HermitianMatrix::new(b).unwrap()] }));
        let csv = eigenvalue_csv(&path, &tol()).unwrap();
        let lines: Vec<&str> = csv.split("\r\n").collect();
        assert_eq!(lines[0], "segment,step,t,sample,x0,x1,x2,lambda_1,lambda_2");
        assert_eq!(lines.len(), 5);
    }
}
