//! Projection-valued fields viewed as vector bundles.
//!
//! Projections, frames and partial isometries are stored at the vertices of
//! a complex (in practice the fine complex of a sample grid). Between
//! vertices a projection is the spectral retraction of the convex
//! combination and a frame is the polar part of the convex combination
//! compressed by the projection. Every construction that needs a section or
//! a partial isometry goes through [`polar_extend`]: choose a continuous
//! ambient matrix `M`, compress it to `A M q`, take the polar part, and
//! re-seed when the compression comes too close to losing rank.

use std::collections::{HashSet, VecDeque};

use rayon::prelude::*;
use serde::Serialize;
use serde_json::json;
use thiserror::Error;

use crate::complex::{Point, SampleGrid, SimplicialComplex};
use crate::field::{FieldError, MatrixField};
use crate::linalg::{hermitian_eig, idempotency_residual, polar_isometry, CMatrix, HermitianMatrix, LinalgError, Tolerances, C64};
use crate::random::{random_unitary, rng, sub_seed};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum BundleError {
    #[error(transparent)]
    Field(#[from] FieldError),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error("dimension hypothesis fails: {detail}")]
    DimensionHypothesis { detail: String },
    #[error("extension stuck at vertex {vertex}: smallest singular value {sigma_min:e}, largest triangle phase {max_triangle_phase:e} after {attempts} attempts")]
    ExtensionStuck { vertex: usize, sigma_min: f64, max_triangle_phase: f64, attempts: usize },
    #[error("projection rank is not constant on the region: {ranks:?}")]
    RankNotConstant { ranks: Vec<usize> },
    #[error("region or dimension mismatch: {0}")]
    Mismatch(String),
    #[error("overlap {overlap:e} on triangle {triangle:?} below threshold; refine the complex")]
    RefinementNeeded { triangle: [usize; 3], overlap: f64 },
    #[error("obstruction: {0:?}")]
    Obstruction(Certificate),
    #[error("unsupported case: {0}")]
    Unsupported(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum CertificateKind {
    RankMismatch,
    ChernMismatch,
    NormGeOne,
    FrameFailure,
    DimensionHypothesis,
    Unsupported,
}

/// Machine-readable reason why a construction is absent.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Certificate {
    pub kind: CertificateKind,
    pub details: serde_json::Value,
}

impl Certificate {
    pub fn new(kind: CertificateKind, details: serde_json::Value) -> Self {
        Self { kind, details }
    }
}

/// Knobs for section searches.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FrameConfig {
    /// Smallest singular value accepted for a compressed section.
    pub floor: f64,
    pub retries: usize,
    /// Largest accepted triangle phase sum, see [`triangle_phases`].
    pub max_triangle_phase: f64,
    /// Weight of the fresh ambient matrix at each layer away from the
    /// prescribed set.
    pub blend: f64,
    /// Sweeps replacing each free section by the polar part of its
    /// neighbourhood sum, which smooths the gauge before the winding check.
    pub relax: usize,
}

impl Default for FrameConfig {
    fn default() -> Self {
        Self {
            floor: 0.1,
            retries: 32,
            max_triangle_phase: std::f64::consts::PI,
            blend: 0.25,
            relax: 4,
        }
    }
}

/// Projection field of constant rank on a subcomplex.
#[derive(Debug, Clone, PartialEq)]
pub struct ProjectionField {
    field: MatrixField,
    region: Vec<usize>,
    mask: Vec<bool>,
    rank: usize,
}

/// Simplices of `k` all of whose vertices are in `mask`.
pub fn full_subcomplex(k: &SimplicialComplex, mask: &[bool]) -> Vec<usize> {
    k.simplices()
        .iter()
        .enumerate()
        .filter(|(_, s)| s.iter().all(|&v| mask[v]))
        .map(|(i, _)| i)
        .collect()
}

impl ProjectionField {
    /// Projection field on the full subcomplex spanned by `mask`; values
    /// outside the mask are ignored and stored as zero.
    pub fn on_mask(
        complex: SimplicialComplex,
        mut values: Vec<HermitianMatrix>,
        mask: Vec<bool>,
        tol: &Tolerances,
    ) -> Result<Self, BundleError> {
        let region = full_subcomplex(&complex, &mask);
        if values.len() != complex.vertex_count() || mask.len() != complex.vertex_count() {
            return Err(BundleError::Mismatch("value or mask count differs from vertex count".into()));
        }
        let n = values.first().map(|v| v.dim()).unwrap_or(0);
        for (v, m) in mask.iter().enumerate() {
            if !m {
                values[v] = HermitianMatrix::zeros(n);
            }
        }
        let mut ranks = Vec::new();
        for (v, p) in values.iter().enumerate() {
            if mask[v] {
                let tr = p.matrix().trace().re.round() as usize;
                if !ranks.contains(&tr) {
                    ranks.push(tr);
                }
            }
        }
        if ranks.len() > 1 {
            ranks.sort_unstable();
            return Err(BundleError::RankNotConstant { ranks });
        }
        let rank = ranks.first().copied().unwrap_or(0);
        let field = MatrixField::projection(complex, values, tol)?;
        Ok(Self {
            field,
            region,
            mask,
            rank,
        })
    }

    /// Projection field on the whole complex.
    pub fn new(complex: SimplicialComplex, values: Vec<HermitianMatrix>, tol: &Tolerances) -> Result<Self, BundleError> {
        let mask = vec![true; complex.vertex_count()];
        Self::on_mask(complex, values, mask, tol)
    }

    pub fn constant(complex: SimplicialComplex, p: HermitianMatrix, tol: &Tolerances) -> Result<Self, BundleError> {
        let values = vec![p; complex.vertex_count()];
        Self::new(complex, values, tol)
    }

    pub fn field(&self) -> &MatrixField {
        &self.field
    }

    pub fn complex(&self) -> &SimplicialComplex {
        self.field.complex()
    }

    pub fn values(&self) -> &[HermitianMatrix] {
        self.field.values()
    }

    pub fn value(&self, v: usize) -> &HermitianMatrix {
        &self.field.values()[v]
    }

    pub fn n(&self) -> usize {
        self.field.n()
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn region(&self) -> &[usize] {
        &self.region
    }

    pub fn mask(&self) -> &[bool] {
        &self.mask
    }

    pub fn covers_all(&self) -> bool {
        self.mask.iter().all(|&m| m)
    }

    /// `1 - p` on the same region.
    pub fn complement(&self, tol: &Tolerances) -> Result<Self, BundleError> {
        let n = self.n();
        let id = HermitianMatrix::identity(n);
        let values = self.values().iter().map(|p| id.sub(p)).collect();
        Self::on_mask(self.complex().clone(), values, self.mask.clone(), tol)
    }

    /// Whether a grid point of the base lies in the region.
    pub fn region_contains(&self, point: &Point) -> bool {
        let support = point.support();
        if !support.iter().all(|&v| self.mask[v]) {
            return false;
        }
        let set: HashSet<usize> = self.region.iter().copied().collect();
        self.complex().simplex_index(&support).is_some_and(|i| set.contains(&i))
    }

    /// Grid samples lying in the region.
    pub fn region_samples(&self, grid: &SampleGrid) -> Vec<usize> {
        let set: HashSet<usize> = self.region.iter().copied().collect();
        (0..grid.len())
            .filter(|&s| {
                let sup = grid.points[s].support();
                self.complex().simplex_index(&sup).is_some_and(|i| set.contains(&i))
            })
            .collect()
    }

    pub fn restrict(&self, mask: &[bool], tol: &Tolerances) -> Result<Self, BundleError> {
        let combined: Vec<bool> = self.mask.iter().zip(mask).map(|(a, b)| *a && *b).collect();
        Self::on_mask(self.complex().clone(), self.values().to_vec(), combined, tol)
    }
}

/// Outcome of [`is_projection_field`].
#[derive(Debug, Clone, Serialize)]
pub struct ProjectionCheck {
    pub pass: bool,
    pub depth: usize,
    pub samples: usize,
    pub max_idempotency_residual: f64,
    pub max_spectral_deviation: f64,
    /// (rank, sample count), ascending by rank.
    pub rank_histogram: Vec<(usize, usize)>,
}

/// Whether a matrix field is a constant-rank projection at every sample.
pub fn is_projection_field(f: &MatrixField, depth: usize, tol: &Tolerances) -> Result<ProjectionCheck, BundleError> {
    let grid = SampleGrid::new(f.complex(), depth);
    let values = f.sample(&grid, tol)?;
    projection_check_values(&values, depth, tol)
}

pub(crate) fn projection_check_values(values: &[HermitianMatrix], depth: usize, tol: &Tolerances) -> Result<ProjectionCheck, BundleError> {
    let stats: Vec<Result<(f64, f64, usize), LinalgError>> = values
        .par_iter()
        .map(|p| {
            let res = idempotency_residual(p);
            let es = hermitian_eig(p, tol)?;
            let dev = es
                .eigenvalues
                .iter()
                .fold(0.0_f64, |acc, &l| acc.max(l.abs().min((l - 1.0).abs())));
            let rank = es.eigenvalues.iter().filter(|&&l| l > 0.5).count();
            Ok((res, dev, rank))
        })
        .collect();
    let mut max_res: f64 = 0.0;
    let mut max_dev: f64 = 0.0;
    let mut hist: Vec<(usize, usize)> = Vec::new();
    for s in stats {
        let (res, dev, rank) = s?;
        max_res = max_res.max(res);
        max_dev = max_dev.max(dev);
        match hist.iter_mut().find(|(r, _)| *r == rank) {
            Some((_, c)) => *c += 1,
            None => hist.push((rank, 1)),
        }
    }
    hist.sort_unstable();
    Ok(ProjectionCheck {
        pass: max_res <= tol.residual_tol && max_dev <= tol.residual_tol && hist.len() <= 1,
        depth,
        samples: values.len(),
        max_idempotency_residual: max_res,
        max_spectral_deviation: max_dev,
        rank_histogram: hist,
    })
}

/// `n x n` matrix with the given frame in its leading columns.
pub fn pad_frame(frame: &CMatrix) -> CMatrix {
    let (n, r) = frame.shape();
    CMatrix::from_fn(n, n, |i, j| if j < r { frame[(i, j)] } else { C64::new(0.0, 0.0) })
}

/// Where the source projection of an extension comes from.
#[derive(Debug, Clone, Copy)]
pub enum Source<'a> {
    /// The first `r` standard basis vectors, used when building frames.
    Leading(usize),
    PerVertex(&'a [HermitianMatrix]),
}

/// A pointwise completion problem: find partial isometries `s(v)` with
/// `s*s = q(v)` and `s s* <= A(v)` on the domain, equal to the prescribed
/// values where given.
#[derive(Debug, Clone, Copy)]
pub struct ExtensionProblem<'a> {
    pub adjacency: &'a [Vec<usize>],
    /// All 2-simplices, for the winding check.
    pub triangles: &'a [[usize; 3]],
    pub domain: &'a [bool],
    pub allowed: &'a [HermitianMatrix],
    pub source: Source<'a>,
    pub prescribed: &'a [Option<CMatrix>],
    pub rank: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct ExtensionStats {
    pub attempts: usize,
    pub sigma_min: f64,
    pub worst_vertex: Option<usize>,
    /// Largest `||s_u - s_w||` or `||s_u s_u* - s_w s_w*||` over edges.
    pub max_jump: f64,
    /// See [`triangle_phases`].
    pub max_triangle_phase: f64,
    pub unresolved_triangles: usize,
}

#[derive(Debug, Clone)]
pub struct Extension {
    /// `s(v)` on the domain and prescribed vertices, `None` elsewhere.
    pub values: Vec<Option<CMatrix>>,
    pub stats: ExtensionStats,
}

fn identity_ambient(n: usize) -> CMatrix {
    CMatrix::identity(n)
}

/// Continuous ambient matrices: prescribed values on `Y`, then layer by
/// layer `M(v) = (1 - blend) * mean(M on the previous layer) + blend * E`.
/// Vertices not connected to `Y` get `E`.
fn ambient_field(problem: &ExtensionProblem<'_>, e: &CMatrix, blend: f64) -> Vec<Option<CMatrix>> {
    let nv = problem.domain.len();
    let mut layer = vec![usize::MAX; nv];
    let mut m: Vec<Option<CMatrix>> = vec![None; nv];
    let mut queue = VecDeque::new();
    for v in 0..nv {
        if let Some(s0) = &problem.prescribed[v] {
            layer[v] = 0;
            m[v] = Some(s0.clone());
            queue.push_back(v);
        }
    }
    let mut order = Vec::new();
    while let Some(u) = queue.pop_front() {
        for &w in &problem.adjacency[u] {
            if problem.domain[w] && layer[w] == usize::MAX {
                layer[w] = layer[u] + 1;
                queue.push_back(w);
                order.push(w);
            }
        }
    }
    for &w in &order {
        let prev: Vec<&CMatrix> = problem.adjacency[w]
            .iter()
            .filter(|&&u| layer[u] != usize::MAX && layer[u] + 1 == layer[w])
            .filter_map(|&u| m[u].as_ref())
            .collect();
        let mut acc = e.scale(blend);
        let wgt = (1.0 - blend) / prev.len() as f64;
        for p in prev {
            acc = acc.lincomb(1.0, p, wgt);
        }
        m[w] = Some(acc);
    }
    for v in 0..nv {
        if problem.domain[v] && m[v].is_none() {
            m[v] = Some(e.clone());
        }
    }
    m
}

/// Solves an [`ExtensionProblem`] by polar decomposition of `A M q`,
/// re-seeding the ambient matrix until every compressed singular value
/// clears the floor and no triangle winds (see [`triangle_phases`]). The largest edge jump is reported alongside.
pub fn polar_extend(
    problem: &ExtensionProblem<'_>,
    seed: u64,
    cfg: &FrameConfig,
    tol: &Tolerances,
) -> Result<Extension, BundleError> {
    let nv = problem.domain.len();
    let n = problem.allowed.first().map(|a| a.dim()).unwrap_or(0);
    let r = problem.rank;
    let q0 = HermitianMatrix::coordinate_projection(n, r);
    let mut best = ExtensionStats {
        attempts: 0,
        sigma_min: 0.0,
        worst_vertex: None,
        max_jump: f64::INFINITY,
        max_triangle_phase: f64::INFINITY,
        unresolved_triangles: 0,
    };
    for attempt in 0..cfg.retries.max(1) {
        let e = if attempt == 0 {
            identity_ambient(n)
        } else {
            random_unitary(&mut rng(sub_seed(seed, attempt as u64)), n)
        };
        let ambient = ambient_field(problem, &e, cfg.blend);
        let mut current: Vec<Option<CMatrix>> = ambient;
        let mut solved = Vec::new();
        for sweep in 0..=cfg.relax {
            solved = (0..nv)
                .into_par_iter()
                .map(|v| {
                    if let Some(s0) = &problem.prescribed[v] {
                        return Ok(Some((s0.clone(), f64::INFINITY)));
                    }
                    if !problem.domain[v] {
                        return Ok(None);
                    }
                    let q = match problem.source {
                        Source::Leading(_) => &q0,
                        Source::PerVertex(qs) => &qs[v],
                    };
                    if r == 0 {
                        return Ok(Some((CMatrix::zeros(n, n), f64::INFINITY)));
                    }
                    let m = current[v].as_ref().expect("domain vertex has an ambient value");
                    let m = if sweep == 0 {
                        m.clone()
                    } else {
                        let near: Vec<&CMatrix> = problem.adjacency[v].iter().filter_map(|&u| current[u].as_ref()).collect();
                        let w = 1.0 / (near.len() + 1) as f64;
                        near.iter().fold(m.scale(w), |acc, s| acc.lincomb(1.0, s, w))
                    };
                    let x = problem.allowed[v].matrix().matmul(&m).matmul(q.matrix());
                    polar_isometry(&x, r, tol).map(Some)
                })
                .collect::<Result<Vec<_>, LinalgError>>()?;
            current = solved.iter().map(|s| s.as_ref().map(|(u, _)| u.clone())).collect();
        }
        let mut values = Vec::with_capacity(nv);
        let mut sigma_min = f64::INFINITY;
        let mut worst = None;
        for (v, s) in solved.into_iter().enumerate() {
            if let Some((_, smin)) = &s {
                if *smin < sigma_min {
                    sigma_min = *smin;
                    worst = Some(v);
                }
            }
            values.push(s.map(|(u, _)| u));
        }
        let max_jump = max_adjacent_jump(problem.adjacency, &values);
        let (max_triangle_phase, unresolved_triangles) = match problem.source {
            // Prescribed values were certified where they were built.
            Source::Leading(_) => triangle_phases(problem.triangles, &values, r, |t| {
                t.iter().all(|&v| problem.prescribed[v].is_some())
            }),
            Source::PerVertex(_) => (0.0, 0),
        };
        let stats = ExtensionStats {
            attempts: attempt + 1,
            sigma_min,
            worst_vertex: worst,
            max_jump,
            max_triangle_phase,
            unresolved_triangles,
        };
        if sigma_min >= cfg.floor && max_triangle_phase < cfg.max_triangle_phase {
            return Ok(Extension { values, stats });
        }
        let rank_of = |s: &ExtensionStats| (s.sigma_min >= cfg.floor, -s.max_triangle_phase, s.sigma_min);
        if rank_of(&stats).partial_cmp(&rank_of(&best)) == Some(std::cmp::Ordering::Greater) || best.attempts == 0 {
            best = stats;
        }
    }
    Err(BundleError::ExtensionStuck {
        vertex: best.worst_vertex.unwrap_or(0),
        sigma_min: best.sigma_min,
        max_triangle_phase: best.max_triangle_phase,
        attempts: cfg.retries.max(1),
    })
}

pub fn triangles_of(k: &SimplicialComplex) -> Vec<[usize; 3]> {
    k.simplices_of_dim(2).map(|t| [t[0], t[1], t[2]]).collect()
}

/// Winding check for rank-`r` frames stored in the leading columns.
///
/// With links `U_uv = det(S_u* S_w)`, the branch corrections of the
/// triangle products sum to minus the Chern number of the spanned bundle.
/// Returns the largest `|theta_uv + theta_vw + theta_wu|` over triangles
/// whose three links have modulus at least
/// [`MIN_OVERLAP`](crate::chern::MIN_OVERLAP), and the count of the others.
/// A maximum below `pi` means no triangle carries a correction. Triangles
/// for which `skip` holds are left out.
pub fn triangle_phases(triangles: &[[usize; 3]], values: &[Option<CMatrix>], r: usize, skip: impl Fn([usize; 3]) -> bool + Sync) -> (f64, usize) {
    if r == 0 {
        return (0.0, 0);
    }
    let link = |u: usize, w: usize| -> Option<C64> {
        let su = values[u].as_ref()?;
        let sw = values[w].as_ref()?;
        Some(su.leading_columns(r).adjoint().matmul(&sw.leading_columns(r)).determinant())
    };
    let per: Vec<(f64, usize)> = triangles
        .par_iter()
        .map(|&[a, b, c]| {
            if skip([a, b, c]) {
                return (0.0, 0);
            }
            let links = [link(a, b), link(b, c), link(c, a)];
            if links.iter().any(|l| l.is_none()) {
                return (0.0, 0);
            }
            if links.iter().any(|l| l.is_some_and(|l| l.norm() < crate::chern::MIN_OVERLAP)) {
                return (0.0, 1);
            }
            let sum: f64 = links.iter().map(|l| l.expect("checked").arg()).sum();
            (sum.abs(), 0)
        })
        .collect();
    per.into_iter().fold((0.0, 0), |a, b| (a.0.max(b.0), a.1 + b.1))
}

/// Largest `max(||s_u - s_v||, ||s_u s_u* - s_v s_v*||)` over edges with
/// both ends defined.
pub fn max_adjacent_jump(adjacency: &[Vec<usize>], values: &[Option<CMatrix>]) -> f64 {
    let jumps: Vec<f64> = (0..values.len())
        .into_par_iter()
        .map(|u| {
            let Some(su) = &values[u] else { return 0.0 };
            let pu = su.matmul(&su.adjoint());
            adjacency[u]
                .iter()
                .filter(|&&w| w > u)
                .filter_map(|&w| values[w].as_ref())
                .map(|sw| {
                    let pw = sw.matmul(&sw.adjoint());
                    (su - sw).op_norm().max((&pu - &pw).op_norm())
                })
                .fold(0.0, f64::max)
        })
        .collect();
    jumps.into_iter().fold(0.0, f64::max)
}

/// Vertex-indexed `n x r` frames; zero outside the mask.
#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    complex: SimplicialComplex,
    mask: Vec<bool>,
    vectors: Vec<CMatrix>,
    rank: usize,
}

impl Frame {
    pub fn new(complex: SimplicialComplex, mask: Vec<bool>, vectors: Vec<CMatrix>) -> Result<Self, BundleError> {
        if vectors.len() != complex.vertex_count() || mask.len() != complex.vertex_count() {
            return Err(BundleError::Mismatch("frame count differs from vertex count".into()));
        }
        let rank = vectors.first().map(|f| f.cols()).unwrap_or(0);
        if vectors.iter().any(|f| f.cols() != rank) {
            return Err(BundleError::Mismatch("frames of different widths".into()));
        }
        Ok(Self {
            complex,
            mask,
            vectors,
            rank,
        })
    }

    pub fn vectors(&self) -> &[CMatrix] {
        &self.vectors
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn mask(&self) -> &[bool] {
        &self.mask
    }

    pub fn complex(&self) -> &SimplicialComplex {
        &self.complex
    }

    /// `F F*` at every vertex of the mask.
    pub fn projection(&self, tol: &Tolerances) -> Result<ProjectionField, BundleError> {
        let values = self.vectors.iter().map(HermitianMatrix::outer).collect();
        ProjectionField::on_mask(self.complex.clone(), values, self.mask.clone(), tol)
    }

    /// Frame at a point: polar part of `p(x) * sum_i w_i F_i`.
    pub fn evaluate(&self, point: &Point, p: &HermitianMatrix, tol: &Tolerances) -> Result<(CMatrix, f64), BundleError> {
        let w = point.weights();
        let (n, r) = self.vectors[w[0].0].shape();
        let mut f = CMatrix::zeros(n, r);
        for &(v, x) in w {
            f = f.lincomb(1.0, &self.vectors[v], x);
        }
        let x = p.matrix().matmul(&f);
        Ok(polar_isometry(&x, r, tol)?)
    }

    /// Column-wise concatenation on the common mask.
    pub fn concat(&self, other: &Frame) -> Result<Frame, BundleError> {
        let mask: Vec<bool> = self.mask.iter().zip(&other.mask).map(|(a, b)| *a && *b).collect();
        let vectors = self.vectors.iter().zip(&other.vectors).map(|(a, b)| a.hstack(b)).collect();
        Frame::new(self.complex.clone(), mask, vectors)
    }

    /// The first `k` columns.
    pub fn leading(&self, k: usize) -> Frame {
        Frame {
            complex: self.complex.clone(),
            mask: self.mask.clone(),
            vectors: self.vectors.iter().map(|f| f.leading_columns(k)).collect(),
            rank: k,
        }
    }
}

/// A projection together with the frame witnessing its triviality.
#[derive(Debug, Clone)]
pub struct TrivialProjection {
    pub projection: ProjectionField,
    pub frame: Frame,
}

impl TrivialProjection {
    pub fn from_frame(frame: Frame, tol: &Tolerances) -> Result<Self, BundleError> {
        let projection = frame.projection(tol)?;
        Ok(Self { projection, frame })
    }

    /// Constant projection onto the first `r` basis vectors of `C^n`.
    pub fn coordinate(complex: &SimplicialComplex, n: usize, r: usize, tol: &Tolerances) -> Result<Self, BundleError> {
        let f = CMatrix::from_fn(n, r, |i, j| if i == j { C64::new(1.0, 0.0) } else { C64::new(0.0, 0.0) });
        let frame = Frame::new(
            complex.clone(),
            vec![true; complex.vertex_count()],
            vec![f; complex.vertex_count()],
        )?;
        Self::from_frame(frame, tol)
    }

    pub fn rank(&self) -> usize {
        self.frame.rank()
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct FrameCheck {
    pub pass: bool,
    pub depth: usize,
    pub samples: usize,
    pub min_sigma: f64,
    /// Largest `||F F* - p||` over samples.
    pub max_span_residual: f64,
}

/// Checks that a frame spans `p` at every region sample of the given depth.
pub fn verify_frame(frame: &Frame, p: &ProjectionField, depth: usize, cfg: &FrameConfig, tol: &Tolerances) -> Result<FrameCheck, BundleError> {
    let grid = SampleGrid::new(p.complex(), depth);
    let samples = p.region_samples(&grid);
    let results: Vec<Result<(f64, f64), BundleError>> = samples
        .par_iter()
        .map(|&s| {
            let point = &grid.points[s];
            let px = p.field().evaluate(point, tol)?;
            let (f, smin) = frame.evaluate(point, &px, tol)?;
            let span = HermitianMatrix::outer(&f).dist(&px);
            Ok((smin, span))
        })
        .collect();
    let mut min_sigma = f64::INFINITY;
    let mut max_span: f64 = 0.0;
    for r in results {
        let (s, d) = r?;
        min_sigma = min_sigma.min(s);
        max_span = max_span.max(d);
    }
    Ok(FrameCheck {
        pass: frame.rank() == p.rank() && min_sigma >= cfg.floor * 0.1 && max_span <= tol.residual_tol,
        depth,
        samples: samples.len(),
        min_sigma,
        max_span_residual: max_span,
    })
}

#[derive(Debug, Clone)]
pub struct FrameSearch {
    pub frame: Option<Frame>,
    pub stats: Option<ExtensionStats>,
    /// Best smallest section norm reached when no frame was accepted.
    pub best_sigma_min: f64,
    pub check: Option<FrameCheck>,
}

/// Searches for a global frame of `p`. Failure is a diagnostic, never a
/// proof of nontriviality.
pub fn global_frame(p: &ProjectionField, seed: u64, depth: usize, cfg: &FrameConfig, tol: &Tolerances) -> Result<FrameSearch, BundleError> {
    let adjacency = p.complex().adjacency();
    let triangles = triangles_of(p.complex());
    let prescribed = vec![None; p.complex().vertex_count()];
    let problem = ExtensionProblem {
        adjacency: &adjacency,
        triangles: &triangles,
        domain: p.mask(),
        allowed: p.values(),
        source: Source::Leading(p.rank()),
        prescribed: &prescribed,
        rank: p.rank(),
    };
    match polar_extend(&problem, seed, cfg, tol) {
        Ok(ext) => {
            let frame = frame_from_extension(p.complex(), p.mask(), &ext.values, p.rank(), p.n())?;
            let check = verify_frame(&frame, p, depth, cfg, tol)?;
            let ok = check.pass;
            Ok(FrameSearch {
                best_sigma_min: ext.stats.sigma_min,
                frame: ok.then_some(frame),
                stats: Some(ext.stats),
                check: Some(check),
            })
        }
        Err(BundleError::ExtensionStuck { sigma_min, .. }) => Ok(FrameSearch {
            frame: None,
            stats: None,
            best_sigma_min: sigma_min,
            check: None,
        }),
        Err(e) => Err(e),
    }
}

fn frame_from_extension(
    complex: &SimplicialComplex,
    mask: &[bool],
    values: &[Option<CMatrix>],
    r: usize,
    n: usize,
) -> Result<Frame, BundleError> {
    let vectors = values
        .iter()
        .zip(mask)
        .map(|(s, &m)| match (s, m) {
            (Some(s), true) => s.leading_columns(r),
            _ => CMatrix::zeros(n, r),
        })
        .collect();
    Frame::new(complex.clone(), mask.to_vec(), vectors)
}

fn half_dim(k: &SimplicialComplex) -> usize {
    k.dimension() / 2
}

/// A trivial sub-projection of rank `r` under `p`, with its frame.
pub fn find_trivial_subbundle(p: &ProjectionField, r: usize, seed: u64, cfg: &FrameConfig, tol: &Tolerances) -> Result<TrivialProjection, BundleError> {
    let m = half_dim(p.complex());
    if r > p.rank() || p.rank() - r < m {
        return Err(BundleError::DimensionHypothesis {
            detail: format!("rank(p) - r = {} - {r} < floor(d/2) = {m}", p.rank()),
        });
    }
    extend_frame(None, p.mask(), p.values(), p.complex(), r, seed, cfg, tol)
}

/// Extends a frame given on part of `domain` to all of it, keeping the
/// frame inside `allowed(v)`. Prescribed frames are kept exactly.
#[allow(clippy::too_many_arguments)]
pub fn extend_frame(
    on_y: Option<&Frame>,
    domain: &[bool],
    allowed: &[HermitianMatrix],
    complex: &SimplicialComplex,
    r: usize,
    seed: u64,
    cfg: &FrameConfig,
    tol: &Tolerances,
) -> Result<TrivialProjection, BundleError> {
    let nv = complex.vertex_count();
    let n = allowed.first().map(|a| a.dim()).unwrap_or(0);
    let prescribed: Vec<Option<CMatrix>> = match on_y {
        Some(f) => {
            if f.rank() != r {
                return Err(BundleError::Mismatch(format!("prescribed frame has rank {} not {r}", f.rank())));
            }
            (0..nv)
                .map(|v| (f.mask()[v] && domain[v]).then(|| pad_frame(&f.vectors()[v])))
                .collect()
        }
        None => vec![None; nv],
    };
    let adjacency = complex.adjacency();
    let triangles = triangles_of(complex);
    let problem = ExtensionProblem {
        adjacency: &adjacency,
        triangles: &triangles,
        domain,
        allowed,
        source: Source::Leading(r),
        prescribed: &prescribed,
        rank: r,
    };
    let ext = polar_extend(&problem, seed, cfg, tol)?;
    let frame = frame_from_extension(complex, domain, &ext.values, r, n)?;
    TrivialProjection::from_frame(frame, tol)
}

/// Extends a trivial projection on `Y` to a trivial projection on the
/// whole complex.
pub fn extend_trivial_projection(r_on_y: &TrivialProjection, seed: u64, cfg: &FrameConfig, tol: &Tolerances) -> Result<TrivialProjection, BundleError> {
    let k = r_on_y.projection.complex();
    let n = r_on_y.projection.n();
    let r = r_on_y.rank();
    let m = half_dim(k);
    if r + m > n {
        return Err(BundleError::DimensionHypothesis {
            detail: format!("rank {r} > n - floor(d/2) = {n} - {m}"),
        });
    }
    let allowed = vec![HermitianMatrix::identity(n); k.vertex_count()];
    let domain = vec![true; k.vertex_count()];
    extend_frame(Some(&r_on_y.frame), &domain, &allowed, k, r, seed, cfg, tol)
}

/// Extends a trivial `q` on `Y` under nested strata projections `p_i`,
/// each defined on its own closed region. At a vertex the bound is the
/// projection of the lowest stratum containing it.
pub fn extend_trivial_subprojection(
    q_on_y: &TrivialProjection,
    strata: &[ProjectionField],
    seed: u64,
    cfg: &FrameConfig,
    tol: &Tolerances,
) -> Result<TrivialProjection, BundleError> {
    let k = q_on_y.projection.complex();
    let m = half_dim(k);
    let r = q_on_y.rank();
    for p in strata {
        if p.rank() < r + m {
            return Err(BundleError::DimensionHypothesis {
                detail: format!("stratum rank {} - rank(q) {r} < floor(d/2) = {m}", p.rank()),
            });
        }
    }
    let nv = k.vertex_count();
    let n = q_on_y.projection.n();
    let mut allowed = vec![HermitianMatrix::zeros(n); nv];
    let mut domain = vec![false; nv];
    for v in 0..nv {
        if let Some(p) = strata.iter().find(|p| p.mask()[v]) {
            allowed[v] = p.value(v).clone();
            domain[v] = true;
        }
    }
    extend_frame(Some(&q_on_y.frame), &domain, &allowed, k, r, seed, cfg, tol)
}

/// Vertex-indexed partial isometries `s` with `s* s = source`,
/// `s s* = target`.
#[derive(Debug, Clone)]
pub struct PartialIsometryField {
    pub values: Vec<CMatrix>,
    pub source: ProjectionField,
    pub target: ProjectionField,
}

impl PartialIsometryField {
    pub fn adjoint(&self) -> Self {
        Self {
            values: self.values.iter().map(CMatrix::adjoint).collect(),
            source: self.target.clone(),
            target: self.source.clone(),
        }
    }

    pub fn mask(&self) -> &[bool] {
        self.source.mask()
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct PartialIsometryCheck {
    pub pass: bool,
    pub depth: usize,
    pub samples: usize,
    pub max_source_residual: f64,
    pub max_target_residual: f64,
}

/// Sampled check of `s*s = source` and `ss* = target`, with `s(x)` the
/// polar part of `target(x) * sum_i w_i s_i * source(x)`.
pub fn verify_partial_isometry(s: &PartialIsometryField, depth: usize, tol: &Tolerances) -> Result<PartialIsometryCheck, BundleError> {
    let grid = SampleGrid::new(s.source.complex(), depth);
    let samples = s.source.region_samples(&grid);
    let r = s.source.rank();
    let results: Vec<Result<(f64, f64), BundleError>> = samples
        .par_iter()
        .map(|&i| {
            let point = &grid.points[i];
            let p = s.source.field().evaluate(point, tol)?;
            let q = s.target.field().evaluate(point, tol)?;
            let w = point.weights();
            let n = p.dim();
            let mut acc = CMatrix::zeros(n, n);
            for &(v, x) in w {
                acc = acc.lincomb(1.0, &s.values[v], x);
            }
            let x = q.matrix().matmul(&acc).matmul(p.matrix());
            let (u, _) = polar_isometry(&x, r, tol)?;
            let src = HermitianMatrix::from_symmetrized(&u.adjoint().matmul(&u)).dist(&p);
            let tgt = HermitianMatrix::from_symmetrized(&u.matmul(&u.adjoint())).dist(&q);
            Ok((src, tgt))
        })
        .collect();
    let (mut a, mut b) = (0.0_f64, 0.0_f64);
    for res in results {
        let (x, y) = res?;
        a = a.max(x);
        b = b.max(y);
    }
    Ok(PartialIsometryCheck {
        pass: a <= tol.residual_tol && b <= tol.residual_tol,
        depth,
        samples: samples.len(),
        max_source_residual: a,
        max_target_residual: b,
    })
}

/// Extends `s0` (given on its mask `Y`) to `s` with `s*s = q`, `ss* <= p`.
pub fn extend_partial_isometry(
    s0: &PartialIsometryField,
    q: &ProjectionField,
    p: &ProjectionField,
    seed: u64,
    cfg: &FrameConfig,
    tol: &Tolerances,
) -> Result<PartialIsometryField, BundleError> {
    let k = q.complex();
    let m = half_dim(k);
    if q.rank() + m > p.rank() {
        return Err(BundleError::DimensionHypothesis {
            detail: format!("rank(q) {} + floor(d/2) {m} > rank(p) {}", q.rank(), p.rank()),
        });
    }
    let domain: Vec<bool> = q.mask().iter().zip(p.mask()).map(|(a, b)| *a && *b).collect();
    let prescribed: Vec<Option<CMatrix>> = (0..k.vertex_count())
        .map(|v| (s0.mask()[v] && domain[v]).then(|| s0.values[v].clone()))
        .collect();
    let adjacency = k.adjacency();
    let triangles = triangles_of(k);
    let problem = ExtensionProblem {
        adjacency: &adjacency,
        triangles: &triangles,
        domain: &domain,
        allowed: p.values(),
        source: Source::PerVertex(q.values()),
        prescribed: &prescribed,
        rank: q.rank(),
    };
    let ext = polar_extend(&problem, seed, cfg, tol)?;
    let n = q.n();
    let values: Vec<CMatrix> = ext.values.into_iter().map(|s| s.unwrap_or_else(|| CMatrix::zeros(n, n))).collect();
    let ranges: Vec<HermitianMatrix> = values.iter().map(|s| HermitianMatrix::from_symmetrized(&s.matmul(&s.adjoint()))).collect();
    let target = ProjectionField::on_mask(k.clone(), ranges, domain.clone(), tol)?;
    let source = q.restrict(&domain, tol)?;
    Ok(PartialIsometryField { values, source, target })
}

#[derive(Debug, Clone)]
pub struct MvResult {
    pub witness: Option<PartialIsometryField>,
    pub certificate: Option<Certificate>,
    pub check: Option<PartialIsometryCheck>,
    /// Sampled check of the adjoint as a witness in the other direction.
    pub adjoint_check: Option<PartialIsometryCheck>,
}

/// Searches for `v` with `v*v = p`, `vv* = q`.
pub fn mv_equivalent(p: &ProjectionField, q: &ProjectionField, depth: usize, seed: u64, cfg: &FrameConfig, tol: &Tolerances) -> Result<MvResult, BundleError> {
    if p.n() != q.n() || p.mask() != q.mask() {
        return Err(BundleError::Mismatch("projections on different regions".into()));
    }
    let none = |c: Certificate| MvResult {
        witness: None,
        certificate: Some(c),
        check: None,
        adjoint_check: None,
    };
    if p.rank() != q.rank() {
        return Ok(none(Certificate::new(
            CertificateKind::RankMismatch,
            json!({"rank_p": p.rank(), "rank_q": q.rank()}),
        )));
    }
    if p.rank() == 1 && p.covers_all() && p.complex().is_closed_surface() {
        let cp = crate::chern::chern_number(p, depth, tol)?;
        let cq = crate::chern::chern_number(q, depth, tol)?;
        if cp.round() != cq.round() {
            return Ok(none(Certificate::new(
                CertificateKind::ChernMismatch,
                json!({"chern_p": cp, "chern_q": cq}),
            )));
        }
    }
    let adjacency = p.complex().adjacency();
    let triangles = triangles_of(p.complex());
    let prescribed = vec![None; p.complex().vertex_count()];
    let problem = ExtensionProblem {
        adjacency: &adjacency,
        triangles: &triangles,
        domain: p.mask(),
        allowed: q.values(),
        source: Source::PerVertex(p.values()),
        prescribed: &prescribed,
        rank: p.rank(),
    };
    match polar_extend(&problem, seed, cfg, tol) {
        Ok(ext) => {
            let n = p.n();
            let values = ext.values.into_iter().map(|s| s.unwrap_or_else(|| CMatrix::zeros(n, n))).collect();
            let w = PartialIsometryField {
                values,
                source: p.clone(),
                target: q.clone(),
            };
            let check = verify_partial_isometry(&w, depth, tol)?;
            let adjoint_check = verify_partial_isometry(&w.adjoint(), depth, tol)?;
            if check.pass && adjoint_check.pass {
                Ok(MvResult {
                    witness: Some(w),
                    certificate: None,
                    check: Some(check),
                    adjoint_check: Some(adjoint_check),
                })
            } else {
                Ok(MvResult {
                    witness: None,
                    certificate: Some(Certificate::new(
                        CertificateKind::FrameFailure,
                        json!({"stage": "sampled verification", "check": check, "adjoint": adjoint_check}),
                    )),
                    check: Some(check),
                    adjoint_check: Some(adjoint_check),
                })
            }
        }
        Err(BundleError::ExtensionStuck { vertex, sigma_min, attempts, .. }) => Ok(none(Certificate::new(
            CertificateKind::FrameFailure,
            json!({"vertex": vertex, "sigma_min": sigma_min, "attempts": attempts, "note": "diagnostic, not a proof of inequivalence"}),
        ))),
        Err(e) => Err(e),
    }
}

/// How a projection homotopy moves between its endpoints.
#[derive(Debug, Clone, PartialEq)]
pub enum ProjectionPathKind {
    /// `retract((1 - t) p + t q)`, valid when `||p - q|| < 1` pointwise.
    Retracted,
    /// `F F*` with `F` the polar part of `(1 - s) S_p + s E` on the first
    /// half and of `(1 - s) E + s S_q` on the second, `E` a constant isometry.
    ThroughFrames { via: CMatrix },
}

/// A path of projection fields given at the vertices of a complex.
#[derive(Debug, Clone)]
pub struct ProjectionHomotopy {
    pub kind: ProjectionPathKind,
    pub mask: Vec<bool>,
    pub from: Vec<HermitianMatrix>,
    pub to: Vec<HermitianMatrix>,
    pub frames: Option<(Vec<CMatrix>, Vec<CMatrix>)>,
    pub rank: usize,
    pub steps: usize,
    /// Largest operator-norm change between consecutive steps.
    pub max_step: f64,
    pub max_idempotency_residual: f64,
    /// Sampled `max ||p - q||`, reported for both branches.
    pub endpoint_distance: f64,
}

impl ProjectionHomotopy {
    /// The projection at vertex `v` and time `t` in `[0, 1]`.
    pub fn at(&self, v: usize, t: f64, tol: &Tolerances) -> Result<HermitianMatrix, BundleError> {
        if t <= 0.0 {
            return Ok(self.from[v].clone());
        }
        if t >= 1.0 {
            return Ok(self.to[v].clone());
        }
        match &self.kind {
            ProjectionPathKind::Retracted => {
                let m = self.from[v].lincomb(1.0 - t, &self.to[v], t);
                Ok(crate::linalg::spectral_retraction(&m, tol)?.0)
            }
            ProjectionPathKind::ThroughFrames { via } => {
                let (sa, sb) = self.frames.as_ref().expect("frame path carries frames");
                let (f, _) = frame_blend(&sa[v], &sb[v], via, t, self.rank, tol)?;
                Ok(HermitianMatrix::outer(&f))
            }
        }
    }

    pub fn vertex_count(&self) -> usize {
        self.from.len()
    }
}

fn frame_blend(sa: &CMatrix, sb: &CMatrix, e: &CMatrix, t: f64, r: usize, tol: &Tolerances) -> Result<(CMatrix, f64), LinalgError> {
    let x = if t <= 0.5 {
        let s = 2.0 * t;
        sa.lincomb(1.0 - s, e, s)
    } else {
        let s = 2.0 * t - 1.0;
        e.lincomb(1.0 - s, sb, s)
    };
    polar_isometry(&x, r, tol)
}

/// Step-sweep statistics: (max consecutive distance, max idempotency residual,
/// min blend singular value).
fn sweep_path(h: &ProjectionHomotopy, tol: &Tolerances) -> Result<(f64, f64, f64), BundleError> {
    let steps = h.steps.max(1);
    let per_vertex: Vec<Result<(f64, f64, f64), BundleError>> = (0..h.vertex_count())
        .into_par_iter()
        .filter(|&v| h.mask[v])
        .map(|v| {
            let mut prev = h.at(v, 0.0, tol)?;
            let mut max_step: f64 = 0.0;
            let mut max_res: f64 = idempotency_residual(&prev);
            let mut min_sigma = f64::INFINITY;
            for i in 1..=steps {
                let t = i as f64 / steps as f64;
                let cur = match (&h.kind, &h.frames) {
                    (ProjectionPathKind::ThroughFrames { via }, Some((sa, sb))) if i < steps => {
                        let (f, s) = frame_blend(&sa[v], &sb[v], via, t, h.rank, tol)?;
                        min_sigma = min_sigma.min(s);
                        HermitianMatrix::outer(&f)
                    }
                    _ => h.at(v, t, tol)?,
                };
                max_step = max_step.max(cur.dist(&prev));
                max_res = max_res.max(idempotency_residual(&cur));
                prev = cur;
            }
            Ok((max_step, max_res, min_sigma))
        })
        .collect();
    let mut out = (0.0_f64, 0.0_f64, f64::INFINITY);
    for r in per_vertex {
        let (a, b, c) = r?;
        out.0 = out.0.max(a);
        out.1 = out.1.max(b);
        out.2 = out.2.min(c);
    }
    Ok(out)
}

/// Above this endpoint distance the retraction path turns too fast near
/// its midpoint, so the frame path is preferred when available.
pub const RETRACT_BELOW: f64 = 0.9;

/// Intermediate frames tried before settling for the best one above the
/// floor.
const VIA_CANDIDATES: usize = 8;

/// Homotopy of projections between `p` and `q`.
///
/// Uses the retraction path when `||p - q|| < RETRACT_BELOW` at every
/// sample of the given depth; otherwise, when both are trivial of equal
/// rank `r` with `n - r >= ceil(d / 2)`, a path through frames. Without
/// frame room the retraction is still used below distance one. Any other
/// case is reported as an obstruction with a certificate.
#[allow(clippy::too_many_arguments)]
pub fn projection_homotopy(
    p: &ProjectionField,
    q: &ProjectionField,
    frames: Option<(&Frame, &Frame)>,
    steps: usize,
    depth: usize,
    seed: u64,
    cfg: &FrameConfig,
    tol: &Tolerances,
) -> Result<ProjectionHomotopy, BundleError> {
    if p.n() != q.n() || p.mask() != q.mask() {
        return Err(BundleError::Mismatch("projections on different regions".into()));
    }
    if p.rank() != q.rank() {
        return Err(BundleError::Obstruction(Certificate::new(
            CertificateKind::RankMismatch,
            json!({"rank_p": p.rank(), "rank_q": q.rank()}),
        )));
    }
    let grid = SampleGrid::new(p.complex(), depth);
    let samples = p.region_samples(&grid);
    let dists: Vec<Result<f64, BundleError>> = samples
        .par_iter()
        .map(|&s| {
            let pt = &grid.points[s];
            Ok(p.field().evaluate(pt, tol)?.dist(&q.field().evaluate(pt, tol)?))
        })
        .collect();
    let mut far = Vec::new();
    let mut endpoint_distance: f64 = 0.0;
    for (s, d) in samples.iter().zip(dists) {
        let d = d?;
        endpoint_distance = endpoint_distance.max(d);
        if d >= 1.0 - tol.residual_tol {
            far.push(*s);
        }
    }
    let base = ProjectionHomotopy {
        kind: ProjectionPathKind::Retracted,
        mask: p.mask().to_vec(),
        from: p.values().to_vec(),
        to: q.values().to_vec(),
        frames: None,
        rank: p.rank(),
        steps,
        max_step: 0.0,
        max_idempotency_residual: 0.0,
        endpoint_distance,
    };
    let n = p.n();
    let r = p.rank();
    let d = p.complex().dimension();
    let need = d.div_ceil(2);
    if far.is_empty() && (endpoint_distance < RETRACT_BELOW || n - r < need) {
        let mut h = base;
        let (step, res, _) = sweep_path(&h, tol)?;
        h.max_step = step;
        h.max_idempotency_residual = res;
        return Ok(h);
    }
    let norm_details = json!({
        "samples_with_norm_ge_one": far.len(),
        "first_samples": far.iter().take(8).collect::<Vec<_>>(),
        "max_distance": endpoint_distance,
    });
    if n - r < need {
        return Err(BundleError::Obstruction(Certificate::new(
            CertificateKind::NormGeOne,
            json!({"norm": norm_details, "unsupported": format!("n - rank = {} < ceil(d/2) = {need}", n - r)}),
        )));
    }
    let owned;
    let (fa, fb) = match frames {
        Some(f) => f,
        None => {
            let a = global_frame(p, sub_seed(seed, 1), depth, cfg, tol)?;
            let b = global_frame(q, sub_seed(seed, 2), depth, cfg, tol)?;
            match (a.frame, b.frame) {
                (Some(x), Some(y)) => {
                    owned = (x, y);
                    (&owned.0, &owned.1)
                }
                _ => {
                    return Err(BundleError::Obstruction(Certificate::new(
                        CertificateKind::FrameFailure,
                        json!({
                            "norm": norm_details,
                            "best_sigma_p": a.best_sigma_min,
                            "best_sigma_q": b.best_sigma_min,
                            "note": "no witnessed frame; triviality not established",
                        }),
                    )))
                }
            }
        }
    };
    let frames_v = (fa.vectors().to_vec(), fb.vectors().to_vec());
    // First candidate: the polar part of the mean frame, which keeps both
    // blends away from cancellation when the frames vary little.
    let mean = frames_v
        .0
        .iter()
        .chain(frames_v.1.iter())
        .fold(CMatrix::zeros(n, r), |acc, f| acc.lincomb(1.0, &f.leading_columns(r), 1.0));
    let mut best: Option<(f64, ProjectionHomotopy)> = None;
    for attempt in 0..cfg.retries.max(1) {
        let via = match (attempt, polar_isometry(&mean, r, tol)) {
            (0, Ok((u, s))) if s > tol.residual_tol => u.leading_columns(r),
            _ => crate::random::random_isometry(&mut rng(sub_seed(seed, 100 + attempt as u64)), n, r),
        };
        let mut h = ProjectionHomotopy {
            kind: ProjectionPathKind::ThroughFrames { via },
            frames: Some(frames_v.clone()),
            ..base.clone()
        };
        let (step, res, sigma) = sweep_path(&h, tol)?;
        h.max_step = step;
        h.max_idempotency_residual = res;
        if best.as_ref().is_none_or(|(b, _)| sigma > *b) {
            best = Some((sigma, h));
        }
        // Further searching buys little once well conditioned, or once a
        // handful of candidates cleared the floor.
        let found = best.as_ref().map_or(0.0, |(b, _)| *b);
        if found >= 0.5 || (attempt + 1 >= VIA_CANDIDATES && found >= cfg.floor) {
            break;
        }
    }
    let best_sigma = best.as_ref().map(|(s, _)| *s).unwrap_or(0.0);
    if let Some((sigma, h)) = best {
        if sigma >= cfg.floor {
            return Ok(h);
        }
    }
    Err(BundleError::Obstruction(Certificate::new(
        CertificateKind::FrameFailure,
        json!({"norm": norm_details, "stage": "frame path", "best_sigma": best_sigma}),
    )))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chern::{bloch_projection, chern_number};
    use crate::complex::builtin;
    use crate::linalg::domination_residual;
    use crate::random::{random_projection, random_unitary};

    fn tol() -> Tolerances {
        Tolerances::default()
    }

    fn cfg() -> FrameConfig {
        FrameConfig::default()
    }

    fn d(x: &[f64]) -> HermitianMatrix {
        HermitianMatrix::diagonal(x)
    }

    fn sphere() -> SimplicialComplex {
        builtin::icosphere(1).unwrap()
    }

    fn tautological(k: &SimplicialComplex) -> ProjectionField {
        let values = k.coords().unwrap().iter().map(|x| bloch_projection(*x)).collect();
        ProjectionField::new(k.clone(), values, &tol()).unwrap()
    }

    /// `p(x) + e_3 e_3*` inside `M_3`.
    fn tautological_plus_line(k: &SimplicialComplex) -> ProjectionField {
        let values = k
            .coords()
            .unwrap()
            .iter()
            .map(|x| {
                let b = bloch_projection(*x);
                HermitianMatrix::from_symmetrized(&CMatrix::from_fn(3, 3, |i, j| {
                    if i < 2 && j < 2 {
                        b.matrix()[(i, j)]
                    } else if i == 2 && j == 2 {
                        C64::new(1.0, 0.0)
                    } else {
                        C64::new(0.0, 0.0)
                    }
                }))
            })
            .collect();
        ProjectionField::new(k.clone(), values, &tol()).unwrap()
    }

    #[test]
    fn projection_field_checks() {
        let k = builtin::circle(5).unwrap();
        let c = MatrixField::constant(k.clone(), d(&[1.0, 0.0]), &tol()).unwrap();
        assert!(is_projection_field(&c, 2, &tol()).unwrap().pass);
        let bad = MatrixField::constant(k.clone(), d(&[2.0, 0.0]), &tol()).unwrap();
        let rep = is_projection_field(&bad, 1, &tol()).unwrap();
        assert!(!rep.pass);
        assert!((rep.max_idempotency_residual - 2.0).abs() < 1e-12);
    }

    #[test]
    fn mv_reflexive_and_conjugate() {
        let k = builtin::circle(6).unwrap();
        let mut r = rng(4);
        let p0 = random_projection(&mut r, 3, 1);
        let p = ProjectionField::constant(k.clone(), p0.clone(), &tol()).unwrap();
        let res = mv_equivalent(&p, &p, 1, 1, &cfg(), &tol()).unwrap();
        let w = res.witness.unwrap();
        assert!((&w.values[0] - p0.matrix()).op_norm() < 1e-12);
        let u = random_unitary(&mut r, 3);
        let q = ProjectionField::constant(k, p0.conjugate_by(&u), &tol()).unwrap();
        let res = mv_equivalent(&p, &q, 1, 1, &cfg(), &tol()).unwrap();
        assert!(res.check.unwrap().pass);
        assert!(res.adjoint_check.unwrap().pass);
    }

    #[test]
    fn mv_rank_and_chern_certificates() {
        let k = sphere();
        let taut = tautological(&k);
        let flat = ProjectionField::constant(k.clone(), d(&[1.0, 0.0]), &tol()).unwrap();
        let res = mv_equivalent(&flat, &taut, 1, 1, &cfg(), &tol()).unwrap();
        assert!(res.witness.is_none());
        assert_eq!(res.certificate.unwrap().kind, CertificateKind::ChernMismatch);
        let big = ProjectionField::constant(k, d(&[1.0, 1.0]), &tol()).unwrap();
        let res = mv_equivalent(&flat, &big, 1, 1, &cfg(), &tol()).unwrap();
        assert_eq!(res.certificate.unwrap().kind, CertificateKind::RankMismatch);
    }

    #[test]
    fn frames_of_constant_and_identity() {
        let k = builtin::circle(5).unwrap();
        let id = ProjectionField::constant(k.clone(), HermitianMatrix::identity(3), &tol()).unwrap();
        let f = global_frame(&id, 0, 1, &cfg(), &tol()).unwrap().frame.unwrap();
        assert!((&f.vectors()[2] - &CMatrix::identity(3)).op_norm() < 1e-12);
        let mut r = rng(5);
        let p0 = random_projection(&mut r, 4, 2);
        let p = ProjectionField::constant(k, p0, &tol()).unwrap();
        let f = global_frame(&p, 0, 1, &cfg(), &tol()).unwrap().frame.unwrap();
        assert!(f.vectors().iter().all(|x| (x - &f.vectors()[0]).max_abs() < 1e-12));
    }

    #[test]
    fn tautological_bundle_has_no_frame() {
        let k = sphere();
        let p = tautological(&k);
        let search = global_frame(&p, 3, 1, &cfg(), &tol()).unwrap();
        assert!(search.frame.is_none());
        assert!((chern_number(&p, 0, &tol()).unwrap() - 1.0).abs() < 1e-6);
    }

    #[test]
    fn trivial_subbundle_of_tautological_plus_line() {
        let k = sphere();
        let p = tautological_plus_line(&k);
        let q = find_trivial_subbundle(&p, 1, 7, &cfg(), &tol()).unwrap();
        assert_eq!(q.rank(), 1);
        for v in 0..k.vertex_count() {
            assert!(domination_residual(q.projection.value(v), p.value(v)) < 1e-10);
        }
        assert!(verify_frame(&q.frame, &q.projection, 1, &cfg(), &tol()).unwrap().pass);
        let err = find_trivial_subbundle(&tautological(&k), 1, 7, &cfg(), &tol()).unwrap_err();
        assert!(matches!(err, BundleError::DimensionHypothesis { .. }));
    }

    #[test]
    fn trivial_subbundle_on_a_circle_needs_no_gap() {
        let k = builtin::circle(8).unwrap();
        let p = ProjectionField::constant(k, d(&[1.0, 1.0, 0.0]), &tol()).unwrap();
        let q = find_trivial_subbundle(&p, 2, 1, &cfg(), &tol()).unwrap();
        assert!(q.projection.value(3).dist(p.value(3)) < 1e-12);
    }

    #[test]
    fn chern_additive_and_refinement_stable() {
        let k = sphere();
        let c1 = chern_number(&tautological_plus_line(&k), 0, &tol()).unwrap();
        assert!((c1 - 1.0).abs() < 1e-6);
        let c2 = chern_number(&tautological_plus_line(&k), 1, &tol()).unwrap();
        assert!((c1 - c2).abs() < 1e-6);
    }

    fn equator_mask(k: &SimplicialComplex) -> Vec<bool> {
        k.coords().unwrap().iter().map(|x| x[2].abs() < 0.3).collect()
    }

    fn e1_frame(k: &SimplicialComplex, n: usize, mask: Vec<bool>) -> Frame {
        let f = CMatrix::from_fn(n, 1, |i, _| C64::new(if i == 0 { 1.0 } else { 0.0 }, 0.0));
        Frame::new(k.clone(), mask, vec![f; k.vertex_count()]).unwrap()
    }

    #[test]
    fn extend_trivial_projection_from_equator() {
        let k = sphere();
        let mask = equator_mask(&k);
        assert!(mask.iter().any(|&m| m));
        let r = TrivialProjection::from_frame(e1_frame(&k, 2, mask.clone()), &tol()).unwrap();
        let ext = extend_trivial_projection(&r, 11, &cfg(), &tol()).unwrap();
        for v in 0..k.vertex_count() {
            if mask[v] {
                assert_eq!(ext.frame.vectors()[v], r.frame.vectors()[v]);
            }
        }
        assert!(verify_frame(&ext.frame, &ext.projection, 1, &cfg(), &tol()).unwrap().pass);
        let full = TrivialProjection::coordinate(&k, 2, 2, &tol()).unwrap();
        assert!(matches!(
            extend_trivial_projection(&full, 0, &cfg(), &tol()),
            Err(BundleError::DimensionHypothesis { .. })
        ));
    }

    #[test]
    fn extend_when_y_is_everything() {
        let k = builtin::circle(6).unwrap();
        let r = TrivialProjection::coordinate(&k, 3, 1, &tol()).unwrap();
        let ext = extend_trivial_projection(&r, 0, &cfg(), &tol()).unwrap();
        assert_eq!(ext.frame.vectors(), r.frame.vectors());
    }

    #[test]
    fn extend_partial_isometry_from_equator() {
        let k = sphere();
        let mask = equator_mask(&k);
        let q = ProjectionField::constant(k.clone(), d(&[1.0, 0.0, 0.0]), &tol()).unwrap();
        let p = ProjectionField::constant(k.clone(), HermitianMatrix::identity(3), &tol()).unwrap();
        // s0 rotates e1 to e2 on the equator
        let mut s = CMatrix::zeros(3, 3);
        s[(1, 0)] = C64::new(1.0, 0.0);
        let s0 = PartialIsometryField {
            values: vec![s.clone(); k.vertex_count()],
            source: q.restrict(&mask, &tol()).unwrap(),
            target: ProjectionField::on_mask(k.clone(), vec![d(&[0.0, 1.0, 0.0]); k.vertex_count()], mask.clone(), &tol()).unwrap(),
        };
        let ext = extend_partial_isometry(&s0, &q, &p, 2, &cfg(), &tol()).unwrap();
        for v in 0..k.vertex_count() {
            if mask[v] {
                assert_eq!(ext.values[v], s);
            }
        }
        assert!(verify_partial_isometry(&ext, 1, &tol()).unwrap().pass);
    }

    #[test]
    fn extend_partial_isometry_at_a_point() {
        let k = SimplicialComplex::point();
        let q = ProjectionField::constant(k.clone(), d(&[1.0, 0.0]), &tol()).unwrap();
        let p = ProjectionField::constant(k.clone(), d(&[0.0, 1.0]), &tol()).unwrap();
        let s0 = PartialIsometryField {
            values: vec![CMatrix::zeros(2, 2)],
            source: q.restrict(&[false], &tol()).unwrap(),
            target: p.restrict(&[false], &tol()).unwrap(),
        };
        let ext = extend_partial_isometry(&s0, &q, &p, 0, &cfg(), &tol()).unwrap();
        assert!(verify_partial_isometry(&ext, 0, &tol()).unwrap().pass);
    }

    #[test]
    fn extend_under_two_nested_strata() {
        let k = SimplicialComplex::new(5, (0..4).map(|i| vec![i, i + 1]).collect()).unwrap();
        let lower = vec![true, true, false, false, false];
        let upper = vec![true; 5];
        let p1 = ProjectionField::on_mask(k.clone(), vec![d(&[1.0, 1.0, 0.0, 0.0]); 5], lower, &tol()).unwrap();
        let p2 = ProjectionField::on_mask(k.clone(), vec![d(&[1.0, 1.0, 1.0, 0.0]); 5], upper, &tol()).unwrap();
        let mut y = vec![false; 5];
        y[4] = true;
        let f = CMatrix::from_fn(4, 1, |i, _| C64::new(if i == 2 { 1.0 } else { 0.0 }, 0.0));
        let q = TrivialProjection::from_frame(Frame::new(k.clone(), y, vec![f; 5]).unwrap(), &tol()).unwrap();
        let ext = extend_trivial_subprojection(&q, &[p1.clone(), p2.clone()], 5, &cfg(), &tol()).unwrap();
        for v in 0..5 {
            let bound = if v < 2 { p1.value(v) } else { p2.value(v) };
            assert!(domination_residual(ext.projection.value(v), bound) < 1e-10);
        }
        assert!(verify_frame(&ext.frame, &ext.projection, 2, &cfg(), &tol()).unwrap().pass);
    }

    #[test]
    fn projection_homotopy_branches() {
        let pt = SimplicialComplex::point();
        let p = ProjectionField::constant(pt.clone(), d(&[1.0, 0.0]), &tol()).unwrap();
        let h = projection_homotopy(&p, &p, None, 8, 0, 0, &cfg(), &tol()).unwrap();
        assert_eq!(h.kind, ProjectionPathKind::Retracted);
        assert_eq!(h.max_step, 0.0);
        let theta: f64 = 0.2;
        let mut v = CMatrix::zeros(2, 1);
        v[(0, 0)] = C64::new(theta.cos(), 0.0);
        v[(1, 0)] = C64::new(theta.sin(), 0.0);
        let q = ProjectionField::constant(pt, HermitianMatrix::outer(&v), &tol()).unwrap();
        let h = projection_homotopy(&p, &q, None, 16, 0, 0, &cfg(), &tol()).unwrap();
        assert!(h.max_idempotency_residual <= 10.0 * tol().residual_tol);

        let k = sphere();
        let taut = tautological(&k);
        let comp = taut.complement(&tol()).unwrap();
        match projection_homotopy(&taut, &comp, None, 8, 0, 0, &cfg(), &tol()) {
            Err(BundleError::Obstruction(c)) => assert_eq!(c.kind, CertificateKind::FrameFailure),
            other => panic!("expected obstruction, got {other:?}"),
        }
    }

    #[test]
    fn projection_homotopy_through_frames() {
        let k = builtin::circle(8).unwrap();
        let p = ProjectionField::constant(k.clone(), d(&[1.0, 0.0, 0.0]), &tol()).unwrap();
        let q = ProjectionField::constant(k, d(&[0.0, 1.0, 0.0]), &tol()).unwrap();
        let h = projection_homotopy(&p, &q, None, 32, 1, 9, &cfg(), &tol()).unwrap();
        assert!(matches!(h.kind, ProjectionPathKind::ThroughFrames { .. }));
        assert!(h.max_idempotency_residual <= 10.0 * tol().residual_tol);
        assert!(h.at(0, 1.0, &tol()).unwrap().dist(&d(&[0.0, 1.0, 0.0])) < 1e-12);
    }
}
