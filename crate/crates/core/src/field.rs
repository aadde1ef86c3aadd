//! Continuous PSD matrix fields over simplicial complexes and the sampled
//! checks built on them.

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::complex::{CoarseningMap, ComplexError, Point, SampleGrid, SimplicialComplex};
use crate::linalg::{hermitian_eig, spectral_retraction, CMatrix, EigenSystem, HermitianMatrix, LinalgError, Tolerances};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FieldError {
    #[error(transparent)]
    Complex(#[from] ComplexError),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error("field has no vertex values")]
    Empty,
    #[error("matrix at vertex {vertex} is {got}x{got}, expected {expected}x{expected}")]
    Dimension { vertex: usize, got: usize, expected: usize },
    #[error("expected {expected} vertex values, got {got}")]
    ValueCount { got: usize, expected: usize },
    #[error("value at vertex {vertex} is not PSD (min eigenvalue {min_eigenvalue:e})")]
    NotPsd { vertex: usize, min_eigenvalue: f64 },
    #[error("value at vertex {vertex} is not a projection (residual {residual:e})")]
    NotProjection { vertex: usize, residual: f64 },
    #[error("fields live on different complexes or dimensions")]
    Mismatch,
    #[error("interpolated projection has an eigenvalue at 1/2 near {point:?}")]
    RetractionAmbiguous { point: Vec<(usize, f64)> },
    #[error("sample {sample} has rank {rank} < {l}")]
    RankBelow { sample: usize, rank: usize, l: usize },
    #[error("invalid rank window n={n}, k={k}, l={l}: need n >= k >= l")]
    Window { n: usize, k: usize, l: usize },
    #[error("no seeded field landed in ({n}, {k}, {l}) after {attempts} tries")]
    NoWindowField { n: usize, k: usize, l: usize, attempts: u64 },
}

/// `l <= rank <= k` inside `M_n`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct RankWindow {
    pub n: usize,
    pub k: usize,
    pub l: usize,
}

impl RankWindow {
    pub fn new(n: usize, k: usize, l: usize) -> Result<Self, FieldError> {
        if n == 0 || k > n || l > k {
            return Err(FieldError::Window { n, k, l });
        }
        Ok(Self { n, k, l })
    }

    pub fn contains(&self, rank: usize) -> bool {
        self.l <= rank && rank <= self.k
    }
}

/// How values between vertices are produced.
#[derive(Debug, Clone, PartialEq)]
pub enum Interpolation {
    /// Convex combination of vertex values.
    Linear,
    /// `G(x) G(x)*` with `G` the convex combination of vertex factors.
    /// Keeps the rank at most the factor width everywhere.
    Gram { factors: Vec<CMatrix> },
    /// Nearest projection to the convex combination of projection values.
    Projection,
    /// `inner(psi(x))` for a simplicial map `psi` into `inner`'s complex.
    Pullback { inner: Box<MatrixField>, map: Vec<Point> },
}

#[derive(Debug, Clone, PartialEq)]
pub struct MatrixField {
    complex: SimplicialComplex,
    n: usize,
    values: Vec<HermitianMatrix>,
    interpolation: Interpolation,
    max_norm: f64,
}

impl MatrixField {
    fn assemble(
        complex: SimplicialComplex,
        values: Vec<HermitianMatrix>,
        interpolation: Interpolation,
        tol: &Tolerances,
    ) -> Result<Self, FieldError> {
        if values.len() != complex.vertex_count() {
            return Err(FieldError::ValueCount {
                got: values.len(),
                expected: complex.vertex_count(),
            });
        }
        let n = values.first().ok_or(FieldError::Empty)?.dim();
        for (vertex, v) in values.iter().enumerate() {
            if v.dim() != n {
                return Err(FieldError::Dimension {
                    vertex,
                    got: v.dim(),
                    expected: n,
                });
            }
        }
        let eigs: Vec<Result<EigenSystem, LinalgError>> = values.par_iter().map(|v| hermitian_eig(v, tol)).collect();
        let mut max_norm: f64 = 0.0;
        let mut mins = Vec::with_capacity(values.len());
        for e in eigs {
            let e = e?;
            let lo = e.eigenvalues.first().copied().unwrap_or(0.0);
            let hi = e.eigenvalues.last().copied().unwrap_or(0.0);
            max_norm = max_norm.max(hi.abs()).max(lo.abs());
            mins.push(lo);
        }
        let cutoff = tol.cutoff(max_norm);
        if let Some((vertex, &min_eigenvalue)) = mins.iter().enumerate().find(|(_, &m)| m < -cutoff) {
            return Err(FieldError::NotPsd { vertex, min_eigenvalue });
        }
        Ok(Self {
            complex,
            n,
            values,
            interpolation,
            max_norm,
        })
    }

    /// Barycentric-linear field.
    pub fn linear(complex: SimplicialComplex, values: Vec<HermitianMatrix>, tol: &Tolerances) -> Result<Self, FieldError> {
        Self::assemble(complex, values, Interpolation::Linear, tol)
    }

    pub fn constant(complex: SimplicialComplex, value: HermitianMatrix, tol: &Tolerances) -> Result<Self, FieldError> {
        let values = vec![value; complex.vertex_count()];
        Self::linear(complex, values, tol)
    }

    /// Field `G(x) G(x)*` from per-vertex `n x m` factors.
    pub fn gram(complex: SimplicialComplex, factors: Vec<CMatrix>, tol: &Tolerances) -> Result<Self, FieldError> {
        let values = factors.iter().map(HermitianMatrix::outer).collect();
        Self::assemble(complex, values, Interpolation::Gram { factors }, tol)
    }

    /// Projection-valued field interpolated by spectral retraction.
    pub fn projection(complex: SimplicialComplex, values: Vec<HermitianMatrix>, tol: &Tolerances) -> Result<Self, FieldError> {
        for (vertex, p) in values.iter().enumerate() {
            let residual = crate::linalg::idempotency_residual(p);
            if residual > 1e3 * tol.residual_tol {
                return Err(FieldError::NotProjection { vertex, residual });
            }
        }
        Self::assemble(complex, values, Interpolation::Projection, tol)
    }

    pub fn complex(&self) -> &SimplicialComplex {
        &self.complex
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn values(&self) -> &[HermitianMatrix] {
        &self.values
    }

    pub fn interpolation(&self) -> &Interpolation {
        &self.interpolation
    }

    /// Largest vertex-value norm; the scale for relative rank cutoffs.
    pub fn max_norm(&self) -> f64 {
        self.max_norm
    }

    pub fn cutoff(&self, tol: &Tolerances) -> f64 {
        tol.cutoff(self.max_norm)
    }

    pub fn evaluate(&self, point: &Point, tol: &Tolerances) -> Result<HermitianMatrix, FieldError> {
        self.complex.check_point(point)?;
        self.evaluate_unchecked(point, tol)
    }

    fn evaluate_unchecked(&self, point: &Point, tol: &Tolerances) -> Result<HermitianMatrix, FieldError> {
        let w = point.weights();
        if let [(v, _)] = w {
            return Ok(self.values[*v].clone());
        }
        match &self.interpolation {
            Interpolation::Linear => Ok(HermitianMatrix::weighted_sum(w.iter().map(|&(v, x)| (x, &self.values[v])))),
            Interpolation::Gram { factors } => {
                let (rows, cols) = factors[w[0].0].shape();
                let mut g = CMatrix::zeros(rows, cols);
                for &(v, x) in w {
                    g = g.lincomb(1.0, &factors[v], x);
                }
                Ok(HermitianMatrix::outer(&g))
            }
            Interpolation::Projection => {
                let avg = HermitianMatrix::weighted_sum(w.iter().map(|&(v, x)| (x, &self.values[v])));
                let (p, gap) = spectral_retraction(&avg, tol)?;
                if gap <= tol.rank_threshold {
                    return Err(FieldError::RetractionAmbiguous { point: w.to_vec() });
                }
                Ok(p)
            }
            Interpolation::Pullback { inner, map } => inner.evaluate_unchecked(&point.push_forward(map), tol),
        }
    }

    /// Values at every sample of the grid, in sample order.
    pub fn sample(&self, grid: &SampleGrid, tol: &Tolerances) -> Result<Vec<HermitianMatrix>, FieldError> {
        self.check_grid(grid)?;
        grid.points.par_iter().map(|p| self.evaluate_unchecked(p, tol)).collect()
    }

    fn check_grid(&self, grid: &SampleGrid) -> Result<(), FieldError> {
        if !same_complex(&grid.base, &self.complex) {
            return Err(FieldError::Mismatch);
        }
        Ok(())
    }

    /// The same function on the barycentric subdivision.
    pub fn refine(&self, tol: &Tolerances) -> Result<MatrixField, FieldError> {
        let (fine, points) = self.complex.barycentric_subdivision();
        match &self.interpolation {
            Interpolation::Linear => {
                let values = points
                    .iter()
                    .map(|p| self.evaluate_unchecked(p, tol))
                    .collect::<Result<_, _>>()?;
                MatrixField::linear(fine, values, tol)
            }
            Interpolation::Gram { factors } => {
                let fine_factors = points
                    .iter()
                    .map(|p| {
                        let w = p.weights();
                        let (rows, cols) = factors[w[0].0].shape();
                        let mut g = CMatrix::zeros(rows, cols);
                        for &(v, x) in w {
                            g = g.lincomb(1.0, &factors[v], x);
                        }
                        g
                    })
                    .collect();
                MatrixField::gram(fine, fine_factors, tol)
            }
            Interpolation::Projection | Interpolation::Pullback { .. } => {
                let map = CoarseningMap {
                    source: fine,
                    target: self.complex.clone(),
                    vertex_map: points,
                };
                pullback(self, &map, tol)
            }
        }
    }

    /// Fresh linear field on the grid's fine complex holding the sampled values.
    pub fn sampled_linear(&self, grid: &SampleGrid, tol: &Tolerances) -> Result<MatrixField, FieldError> {
        let values = self.sample(grid, tol)?;
        MatrixField::linear(grid.fine.clone(), values, tol)
    }
}

/// Structural equality of complexes, ignoring embeddings.
pub fn same_complex(a: &SimplicialComplex, b: &SimplicialComplex) -> bool {
    a.vertex_count() == b.vertex_count() && a.simplices() == b.simplices()
}

/// `b o psi` on the map's source complex.
pub fn pullback(field: &MatrixField, map: &CoarseningMap, tol: &Tolerances) -> Result<MatrixField, FieldError> {
    if !same_complex(&map.target, &field.complex) {
        return Err(FieldError::Mismatch);
    }
    let checked = CoarseningMap::new(map.source.clone(), map.target.clone(), map.vertex_map.clone())?;
    let values = checked
        .vertex_map
        .par_iter()
        .map(|p| field.evaluate_unchecked(p, tol))
        .collect::<Result<Vec<_>, _>>()?;
    MatrixField::assemble(
        checked.source,
        values,
        Interpolation::Pullback {
            inner: Box::new(field.clone()),
            map: checked.vertex_map,
        },
        tol,
    )
}

/// Max operator-norm distance over the samples at `depth`.
pub fn sup_distance(a: &MatrixField, b: &MatrixField, depth: usize, tol: &Tolerances) -> Result<f64, FieldError> {
    if !same_complex(&a.complex, &b.complex) || a.n != b.n {
        return Err(FieldError::Mismatch);
    }
    let grid = SampleGrid::new(&a.complex, depth);
    let va = a.sample(&grid, tol)?;
    let vb = b.sample(&grid, tol)?;
    Ok(va
        .par_iter()
        .zip(vb.par_iter())
        .map(|(x, y)| x.dist(y))
        .collect::<Vec<f64>>()
        .into_iter()
        .fold(0.0, f64::max))
}

/// Eigensystems of a list of matrices, computed in parallel, in order.
pub fn eig_all(values: &[HermitianMatrix], tol: &Tolerances) -> Result<Vec<EigenSystem>, FieldError> {
    values
        .par_iter()
        .map(|v| hermitian_eig(v, tol).map_err(FieldError::from))
        .collect()
}

#[derive(Debug, Clone, Serialize)]
pub struct RankViolation {
    pub sample: usize,
    pub point: Vec<(usize, f64)>,
    pub rank: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct MembershipReport {
    pub pass: bool,
    pub window: RankWindow,
    pub depth: usize,
    pub samples: usize,
    pub min_rank: usize,
    pub max_rank: usize,
    /// Smallest eigenvalue counted toward a rank, over all samples.
    pub min_counted_eigenvalue: f64,
    pub violations: Vec<RankViolation>,
}

pub fn membership_check(field: &MatrixField, window: RankWindow, depth: usize, tol: &Tolerances) -> Result<MembershipReport, FieldError> {
    let grid = SampleGrid::new(field.complex(), depth);
    membership_on_grid(field, window, &grid, tol)
}

pub fn membership_on_grid(field: &MatrixField, window: RankWindow, grid: &SampleGrid, tol: &Tolerances) -> Result<MembershipReport, FieldError> {
    if field.n() != window.n {
        return Err(FieldError::Dimension {
            vertex: 0,
            got: field.n(),
            expected: window.n,
        });
    }
    let values = field.sample(grid, tol)?;
    let eigs = eig_all(&values, tol)?;
    Ok(membership_from_eigs(&eigs, field.cutoff(tol), window, grid))
}

pub fn membership_from_eigs(eigs: &[EigenSystem], cutoff: f64, window: RankWindow, grid: &SampleGrid) -> MembershipReport {
    let mut violations = Vec::new();
    let mut min_rank = usize::MAX;
    let mut max_rank = 0;
    let mut min_counted = f64::INFINITY;
    for (sample, e) in eigs.iter().enumerate() {
        let rank = e.count_above(cutoff);
        min_rank = min_rank.min(rank);
        max_rank = max_rank.max(rank);
        if let Some(&m) = e.eigenvalues.iter().find(|&&l| l > cutoff) {
            min_counted = min_counted.min(m);
        }
        if !window.contains(rank) {
            violations.push(RankViolation {
                sample,
                point: grid.points[sample].weights().to_vec(),
                rank,
            });
        }
    }
    MembershipReport {
        pass: violations.is_empty(),
        window,
        depth: grid.depth,
        samples: eigs.len(),
        min_rank: if eigs.is_empty() { 0 } else { min_rank },
        max_rank,
        min_counted_eigenvalue: min_counted,
        violations,
    }
}

/// Sampled rank strata of a field at a fixed depth.
#[derive(Debug, Clone)]
pub struct Stratification {
    pub grid: SampleGrid,
    /// Rank at every sample.
    pub ranks: Vec<usize>,
    /// Distinct ranks, ascending.
    pub values: Vec<usize>,
    /// Samples of each rank.
    pub open_strata: Vec<Vec<usize>>,
    /// Per stratum, a vertex mask of the sampled closure.
    pub closed_vertices: Vec<Vec<bool>>,
    /// Per stratum, indices into `grid.fine.simplices()` of the sampled closure.
    pub closed_simplices: Vec<Vec<usize>>,
}

impl Stratification {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Index of the stratum a sample belongs to.
    pub fn stratum_of(&self, sample: usize) -> usize {
        self.values
            .binary_search(&self.ranks[sample])
            .expect("every rank is listed")
    }
}

pub fn rank_stratification(field: &MatrixField, depth: usize, tol: &Tolerances) -> Result<Stratification, FieldError> {
    let grid = SampleGrid::new(field.complex(), depth);
    let values = field.sample(&grid, tol)?;
    let eigs = eig_all(&values, tol)?;
    let cutoff = field.cutoff(tol);
    let ranks: Vec<usize> = eigs.iter().map(|e| e.count_above(cutoff)).collect();
    Ok(stratify_ranks(grid, ranks))
}

/// Builds strata from per-sample ranks. The closed stratum of rank `n_i` is
/// the face closure of every grid simplex that meets `E_i` and whose
/// vertices all have rank at most `n_i`.
pub fn stratify_ranks(grid: SampleGrid, ranks: Vec<usize>) -> Stratification {
    let mut values: Vec<usize> = ranks.clone();
    values.sort_unstable();
    values.dedup();
    let mut open_strata = vec![Vec::new(); values.len()];
    for (s, r) in ranks.iter().enumerate() {
        let i = values.binary_search(r).expect("listed");
        open_strata[i].push(s);
    }
    let simplices = grid.fine.simplices();
    let mut closed_vertices = vec![vec![false; grid.len()]; values.len()];
    let mut closed_simplices = vec![Vec::new(); values.len()];
    for (i, &ni) in values.iter().enumerate() {
        let mask = &mut closed_vertices[i];
        let mut keep = vec![false; simplices.len()];
        for (si, s) in simplices.iter().enumerate() {
            if s.iter().any(|&v| ranks[v] == ni) && s.iter().all(|&v| ranks[v] <= ni) {
                keep[si] = true;
                for &v in s {
                    mask[v] = true;
                }
            }
        }
        let kept: Vec<usize> = (0..simplices.len()).filter(|&si| keep[si]).collect();
        for si in kept {
            let s = &simplices[si];
            for mask_bits in 1u32..(1u32 << s.len()) {
                let face: Vec<usize> = (0..s.len()).filter(|b| mask_bits >> b & 1 == 1).map(|b| s[b]).collect();
                if let Some(fi) = grid.fine.simplex_index(&face) {
                    keep[fi] = true;
                }
            }
        }
        closed_simplices[i] = (0..simplices.len()).filter(|&si| keep[si]).collect();
    }
    Stratification {
        grid,
        ranks,
        values,
        open_strata,
        closed_vertices,
        closed_simplices,
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SemicontinuityViolation {
    pub sample: usize,
    pub rank: usize,
    pub neighbor: usize,
    pub neighbor_rank: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct GapHit {
    pub sample: usize,
    pub eigenvalue: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct SemicontinuityReport {
    pub pass: bool,
    pub eta: f64,
    pub depth: usize,
    pub violations: Vec<SemicontinuityViolation>,
    pub gap_hits: Vec<GapHit>,
}

/// Count of eigenvalues above `eta`, or the offending eigenvalue when one
/// sits within `cutoff` of a positive `eta`.
fn eta_rank(e: &EigenSystem, eta: f64, cutoff: f64) -> Result<usize, f64> {
    if eta <= cutoff {
        return Ok(e.count_above(cutoff));
    }
    if let Some(&l) = e.eigenvalues.iter().find(|&&l| (l - eta).abs() <= cutoff) {
        return Err(l);
    }
    Ok(e.count_above(eta))
}

/// For every sample `x` at `depth`, compares the rank of the spectral
/// projection at `eta` with its value at the half-way points toward each
/// neighbour (the neighbours of `x` one subdivision further).
pub fn lower_semicontinuity_check(field: &MatrixField, eta: f64, depth: usize, tol: &Tolerances) -> Result<SemicontinuityReport, FieldError> {
    let coarse = SampleGrid::new(field.complex(), depth);
    let fine = coarse.refined();
    let values = field.sample(&fine, tol)?;
    let eigs = eig_all(&values, tol)?;
    let cutoff = field.cutoff(tol);
    let mut ranks = vec![None; fine.len()];
    let mut gap_hits = Vec::new();
    for (s, e) in eigs.iter().enumerate() {
        match eta_rank(e, eta, cutoff) {
            Ok(r) => ranks[s] = Some(r),
            Err(eigenvalue) => gap_hits.push(GapHit { sample: s, eigenvalue }),
        }
    }
    let mut violations = Vec::new();
    for x in 0..coarse.len() {
        let Some(rx) = ranks[x] else { continue };
        for &u in fine.neighbors(x) {
            if let Some(ru) = ranks[u] {
                if ru < rx {
                    violations.push(SemicontinuityViolation {
                        sample: x,
                        rank: rx,
                        neighbor: u,
                        neighbor_rank: ru,
                    });
                }
            }
        }
    }
    Ok(SemicontinuityReport {
        pass: violations.is_empty() && gap_hits.is_empty(),
        eta,
        depth,
        violations,
        gap_hits,
    })
}

/// Selected gap together with where it was attained.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct GapSelection {
    pub eta: f64,
    pub sample: usize,
    pub depth: usize,
}

/// `eta = min_x (1/2) min { lambda in spec a(x) : lambda > 0 }` over samples.
pub fn spectral_gap_eta(field: &MatrixField, l: usize, depth: usize, tol: &Tolerances) -> Result<GapSelection, FieldError> {
    let grid = SampleGrid::new(field.complex(), depth);
    let values = field.sample(&grid, tol)?;
    let eigs = eig_all(&values, tol)?;
    let cutoff = field.cutoff(tol);
    let mut best = GapSelection {
        eta: f64::INFINITY,
        sample: 0,
        depth,
    };
    for (sample, e) in eigs.iter().enumerate() {
        let rank = e.count_above(cutoff);
        if rank < l {
            return Err(FieldError::RankBelow { sample, rank, l });
        }
        if let Some(&m) = e.eigenvalues.iter().find(|&&x| x > cutoff) {
            let eta = 0.5 * m;
            if eta < best.eta {
                best = GapSelection { eta, sample, depth };
            }
        }
    }
    Ok(best)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::complex::builtin;
    use crate::linalg::C64;
    use crate::random::{random_psd, rng};

    fn tol() -> Tolerances {
        Tolerances::default()
    }

    fn edge() -> SimplicialComplex {
        SimplicialComplex::new(2, vec![vec![0, 1]]).unwrap()
    }

    fn d(x: &[f64]) -> HermitianMatrix {
        HermitianMatrix::diagonal(x)
    }

    #[test]
    fn evaluate_vertex_and_midpoint() {
        let f = MatrixField::linear(edge(), vec![d(&[1.0, 0.0]), d(&[0.0, 1.0])], &tol()).unwrap();
        assert_eq!(f.evaluate(&Point::vertex(1), &tol()).unwrap(), d(&[0.0, 1.0]));
        let mid = f.evaluate(&Point::barycenter(&[0, 1]), &tol()).unwrap();
        assert!(mid.dist(&d(&[0.5, 0.5])) < 1e-15);
    }

    #[test]
    fn evaluate_rejects_non_simplex() {
        let k = builtin::circle(4).unwrap();
        let f = MatrixField::constant(k, d(&[1.0]), &tol()).unwrap();
        assert!(f.evaluate(&Point::barycenter(&[0, 2]), &tol()).is_err());
    }

    #[test]
    fn refine_matches_barycenter_mean() {
        let k = SimplicialComplex::new(3, vec![vec![0, 1, 2]]).unwrap();
        let mut r = rng(1);
        let vals: Vec<_> = (0..3).map(|_| random_psd(&mut r, 3, 2)).collect();
        let f = MatrixField::linear(k, vals.clone(), &tol()).unwrap();
        let g = f.refine(&tol()).unwrap();
        // the centroid is the last new vertex
        let centroid_vertex = g.complex().vertex_count() - 1;
        let mean = HermitianMatrix::weighted_sum(vals.iter().map(|v| (1.0 / 3.0, v)));
        assert!(g.values()[centroid_vertex].dist(&mean) < 1e-14);
    }

    #[test]
    fn membership_midpoint_failure() {
        let f = MatrixField::linear(edge(), vec![d(&[1.0, 0.0]), d(&[0.0, 1.0])], &tol()).unwrap();
        let rep = membership_check(&f, RankWindow::new(2, 1, 1).unwrap(), 1, &tol()).unwrap();
        assert!(!rep.pass);
        assert_eq!(rep.violations.len(), 1);
        assert_eq!(rep.violations[0].rank, 2);
        assert_eq!(rep.violations[0].point, vec![(0, 0.5), (1, 0.5)]);
    }

    #[test]
    fn membership_zero_and_identity() {
        let k = builtin::circle(3).unwrap();
        let z = MatrixField::constant(k.clone(), HermitianMatrix::zeros(2), &tol()).unwrap();
        let rep = membership_check(&z, RankWindow::new(2, 2, 1).unwrap(), 1, &tol()).unwrap();
        assert_eq!(rep.violations.len(), rep.samples);
        let i = MatrixField::constant(k, HermitianMatrix::identity(2), &tol()).unwrap();
        assert!(membership_check(&i, RankWindow::new(2, 2, 1).unwrap(), 2, &tol()).unwrap().pass);
    }

    #[test]
    fn stratification_of_rank_dropping_edge() {
        let f = MatrixField::linear(edge(), vec![d(&[1.0, 0.0]), d(&[1.0, 1.0])], &tol()).unwrap();
        let s = rank_stratification(&f, 2, &tol()).unwrap();
        assert_eq!(s.values, vec![1, 2]);
        assert_eq!(s.open_strata[0], vec![0]);
        assert_eq!(s.open_strata[1].len(), s.grid.len() - 1);
        // closure of the rank-2 stratum reaches t = 0
        assert!(s.closed_vertices[1][0]);
        assert!(!s.closed_vertices[0][1]);
    }

    #[test]
    fn semicontinuity_examples() {
        let f = MatrixField::linear(edge(), vec![d(&[1.0, 0.0]), d(&[1.0, 1.0])], &tol()).unwrap();
        // t = 1/2 is sampled and carries the eigenvalue 0.5 itself
        let rep = lower_semicontinuity_check(&f, 0.5, 2, &tol()).unwrap();
        assert!(rep.violations.is_empty());
        assert_eq!(rep.gap_hits.len(), 1);
        assert_eq!(rep.gap_hits[0].eigenvalue, 0.5);
        assert!(lower_semicontinuity_check(&f, 0.3, 2, &tol()).unwrap().pass);
        assert!(lower_semicontinuity_check(&f, 0.0, 2, &tol()).unwrap().pass);
        assert!(lower_semicontinuity_check(&f, 2.0, 1, &tol()).unwrap().pass);
    }

    #[test]
    fn gap_eta_examples() {
        let k = builtin::circle(3).unwrap();
        let c = MatrixField::constant(k, d(&[0.8, 2.0, 0.0]), &tol()).unwrap();
        assert_eq!(spectral_gap_eta(&c, 1, 2, &tol()).unwrap().eta, 0.4);
        let two = MatrixField::linear(edge(), vec![d(&[0.8, 0.0]), d(&[0.0, 0.2])], &tol());
        // interpolated interior has rank 2 with small eigenvalues; the vertex pair alone is checked at depth 0
        assert_eq!(spectral_gap_eta(&two.unwrap(), 1, 0, &tol()).unwrap().eta, 0.1);
        let z = MatrixField::constant(edge(), HermitianMatrix::zeros(2), &tol()).unwrap();
        assert!(matches!(
            spectral_gap_eta(&z, 1, 1, &tol()),
            Err(FieldError::RankBelow { sample: 0, .. })
        ));
    }

    #[test]
    fn pullback_identity_and_collapse() {
        let k = builtin::circle(5).unwrap();
        let mut r = rng(3);
        let vals: Vec<_> = (0..5).map(|_| random_psd(&mut r, 2, 1)).collect();
        let f = MatrixField::linear(k.clone(), vals, &tol()).unwrap();
        let id = pullback(&f, &CoarseningMap::identity(&k), &tol()).unwrap();
        assert!(sup_distance(&f, &id, 2, &tol()).unwrap() < 1e-15);
        let pt = MatrixField::constant(SimplicialComplex::point(), d(&[1.0, 0.5]), &tol()).unwrap();
        let col = pullback(&pt, &CoarseningMap::collapse(&k), &tol()).unwrap();
        assert!(col.values().iter().all(|v| *v == d(&[1.0, 0.5])));
    }

    #[test]
    fn gram_field_keeps_rank() {
        let k = SimplicialComplex::new(3, vec![vec![0, 1, 2]]).unwrap();
        let mut r = rng(8);
        let factors: Vec<_> = (0..3).map(|_| crate::random::random_matrix(&mut r, 4, 2)).collect();
        let f = MatrixField::gram(k, factors, &tol()).unwrap();
        let rep = membership_check(&f, RankWindow::new(4, 2, 2).unwrap(), 2, &tol()).unwrap();
        assert!(rep.pass, "{rep:?}");
    }

    #[test]
    fn projection_field_retracts() {
        let mut a = CMatrix::zeros(2, 1);
        a[(0, 0)] = C64::new(1.0, 0.0);
        let mut b = CMatrix::zeros(2, 1);
        b[(0, 0)] = C64::new(0.6, 0.0);
        b[(1, 0)] = C64::new(0.8, 0.0);
        let f = MatrixField::projection(
            edge(),
            vec![HermitianMatrix::outer(&a), HermitianMatrix::outer(&b)],
            &tol(),
        )
        .unwrap();
        let m = f.evaluate(&Point::barycenter(&[0, 1]), &tol()).unwrap();
        assert!(crate::linalg::idempotency_residual(&m) < 1e-12);
    }
}
