//! Finite simplicial complexes, barycentric subdivision and sample grids.

use std::collections::{BTreeSet, HashMap, HashSet};

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ComplexError {
    #[error("complex must have at least one vertex")]
    Empty,
    #[error("vertex index {index} out of range for {vertex_count} vertices")]
    VertexOutOfRange { index: usize, vertex_count: usize },
    #[error("simplex {0:?} repeats a vertex")]
    DegenerateSimplex(Vec<usize>),
    #[error("point weights must be nonnegative and sum to 1 (sum = {sum})")]
    BadWeights { sum: f64 },
    #[error("point support {0:?} is not a simplex of the complex")]
    NotASimplex(Vec<usize>),
    #[error("coordinate list has {got} entries, expected {expected}")]
    CoordinateCount { got: usize, expected: usize },
    #[error("map is not simplicial: image of {0:?} is not contained in a simplex")]
    NotSimplicial(Vec<usize>),
    #[error("invalid builtin parameters: {0}")]
    BadParameters(String),
}

/// A point of `|K|` as a sparse list of (vertex, weight) pairs,
/// sorted by vertex, with weights summing to 1.
#[derive(Debug, Clone, PartialEq)]
pub struct Point(Vec<(usize, f64)>);

impl Point {
    pub fn vertex(v: usize) -> Self {
        Self(vec![(v, 1.0)])
    }

    /// Validates nonnegativity and the unit sum (within 1e-12), merges
    /// duplicate vertices and drops zero weights.
    pub fn new(weights: impl IntoIterator<Item = (usize, f64)>) -> Result<Self, ComplexError> {
        let mut merged: Vec<(usize, f64)> = Vec::new();
        let mut items: Vec<(usize, f64)> = weights.into_iter().collect();
        items.sort_by_key(|&(v, _)| v);
        let mut sum = 0.0;
        for (v, w) in items {
            if !(w >= 0.0) {
                return Err(ComplexError::BadWeights { sum: f64::NAN });
            }
            sum += w;
            if w == 0.0 {
                continue;
            }
            match merged.last_mut() {
                Some((lv, lw)) if *lv == v => *lw += w,
                _ => merged.push((v, w)),
            }
        }
        if (sum - 1.0).abs() > 1e-12 || merged.is_empty() {
            return Err(ComplexError::BadWeights { sum });
        }
        Ok(Self(merged))
    }

    /// Uniform weights on the given vertices.
    pub fn barycenter(vertices: &[usize]) -> Self {
        let w = 1.0 / vertices.len() as f64;
        let mut v: Vec<(usize, f64)> = vertices.iter().map(|&i| (i, w)).collect();
        v.sort_by_key(|&(i, _)| i);
        Self(v)
    }

    pub fn weights(&self) -> &[(usize, f64)] {
        &self.0
    }

    pub fn support(&self) -> Vec<usize> {
        self.0.iter().map(|&(v, _)| v).collect()
    }

    /// `sum_i w_i * points[v_i]`, for composing barycentric maps.
    pub fn push_forward(&self, images: &[Point]) -> Point {
        let mut acc: HashMap<usize, f64> = HashMap::new();
        for &(v, w) in &self.0 {
            for &(u, x) in &images[v].0 {
                *acc.entry(u).or_insert(0.0) += w * x;
            }
        }
        let mut out: Vec<(usize, f64)> = acc.into_iter().filter(|&(_, w)| w > 0.0).collect();
        out.sort_by_key(|&(v, _)| v);
        Point(out)
    }

    /// Affine image under vertex coordinates.
    pub fn embed(&self, coords: &[[f64; 3]]) -> [f64; 3] {
        let mut x = [0.0; 3];
        for &(v, w) in &self.0 {
            for (xi, ci) in x.iter_mut().zip(coords[v]) {
                *xi += w * ci;
            }
        }
        x
    }
}

/// A finite abstract simplicial complex.
///
/// `facets` keep the orientation they were given in; `simplices` is the
/// face closure with each simplex stored as a sorted vertex list, ordered by
/// dimension then lexicographically. Every vertex `0..vertex_count` is a
/// 0-simplex.
#[derive(Debug, Clone, PartialEq)]
pub struct SimplicialComplex {
    vertex_count: usize,
    facets: Vec<Vec<usize>>,
    simplices: Vec<Vec<usize>>,
    index: HashMap<Vec<usize>, usize>,
    coords: Option<Vec<[f64; 3]>>,
}

impl SimplicialComplex {
    pub fn new(vertex_count: usize, simplices: Vec<Vec<usize>>) -> Result<Self, ComplexError> {
        if vertex_count == 0 {
            return Err(ComplexError::Empty);
        }
        for s in &simplices {
            for &v in s {
                if v >= vertex_count {
                    return Err(ComplexError::VertexOutOfRange {
                        index: v,
                        vertex_count,
                    });
                }
            }
            let set: BTreeSet<usize> = s.iter().copied().collect();
            if set.len() != s.len() || s.is_empty() {
                return Err(ComplexError::DegenerateSimplex(s.clone()));
            }
        }
        let mut closure: BTreeSet<(usize, Vec<usize>)> = BTreeSet::new();
        for v in 0..vertex_count {
            closure.insert((1, vec![v]));
        }
        for s in &simplices {
            let mut sorted = s.clone();
            sorted.sort_unstable();
            for face in nonempty_subsets(&sorted) {
                closure.insert((face.len(), face));
            }
        }
        let all: Vec<Vec<usize>> = closure.into_iter().map(|(_, s)| s).collect();
        let sorted_inputs: BTreeSet<Vec<usize>> = simplices
            .iter()
            .map(|s| {
                let mut t = s.clone();
                t.sort_unstable();
                t
            })
            .collect();
        // A facet is an input simplex that is not a proper face of another input.
        let mut proper_faces: HashSet<Vec<usize>> = HashSet::new();
        for t in &sorted_inputs {
            for i in 0..t.len() {
                if t.len() > 1 {
                    let mut f = t.clone();
                    f.remove(i);
                    proper_faces.insert(f);
                }
            }
        }
        // Faces of faces are covered by closing downward once more.
        let mut frontier: Vec<Vec<usize>> = proper_faces.iter().cloned().collect();
        while let Some(f) = frontier.pop() {
            if f.len() > 1 {
                for i in 0..f.len() {
                    let mut g = f.clone();
                    g.remove(i);
                    if proper_faces.insert(g.clone()) {
                        frontier.push(g);
                    }
                }
            }
        }
        let mut facets = Vec::new();
        let mut seen = HashSet::new();
        for s in &simplices {
            let mut key = s.clone();
            key.sort_unstable();
            if !proper_faces.contains(&key) && seen.insert(key) {
                facets.push(s.clone());
            }
        }
        // Isolated vertices are facets too.
        let covered: HashSet<usize> = sorted_inputs.iter().flatten().copied().collect();
        for v in 0..vertex_count {
            if !covered.contains(&v) {
                facets.push(vec![v]);
            }
        }
        let index = all.iter().enumerate().map(|(i, s)| (s.clone(), i)).collect();
        Ok(Self {
            vertex_count,
            facets,
            simplices: all,
            index,
            coords: None,
        })
    }

    pub fn with_coords(mut self, coords: Vec<[f64; 3]>) -> Result<Self, ComplexError> {
        if coords.len() != self.vertex_count {
            return Err(ComplexError::CoordinateCount {
                got: coords.len(),
                expected: self.vertex_count,
            });
        }
        self.coords = Some(coords);
        Ok(self)
    }

    pub fn point() -> Self {
        Self::new(1, vec![]).expect("single vertex")
    }

    pub fn vertex_count(&self) -> usize {
        self.vertex_count
    }

    pub fn simplices(&self) -> &[Vec<usize>] {
        &self.simplices
    }

    pub fn facets(&self) -> &[Vec<usize>] {
        &self.facets
    }

    pub fn coords(&self) -> Option<&[[f64; 3]]> {
        self.coords.as_deref()
    }

    pub fn dimension(&self) -> usize {
        self.simplices.iter().map(|s| s.len()).max().unwrap_or(1) - 1
    }

    pub fn contains(&self, simplex: &[usize]) -> bool {
        let mut s = simplex.to_vec();
        s.sort_unstable();
        self.index.contains_key(&s)
    }

    pub fn simplex_index(&self, simplex: &[usize]) -> Option<usize> {
        let mut s = simplex.to_vec();
        s.sort_unstable();
        self.index.get(&s).copied()
    }

    pub fn simplices_of_dim(&self, d: usize) -> impl Iterator<Item = &Vec<usize>> {
        self.simplices.iter().filter(move |s| s.len() == d + 1)
    }

    pub fn edges(&self) -> Vec<(usize, usize)> {
        self.simplices_of_dim(1).map(|s| (s[0], s[1])).collect()
    }

    /// Sorted neighbour lists along edges.
    pub fn adjacency(&self) -> Vec<Vec<usize>> {
        let mut adj = vec![Vec::new(); self.vertex_count];
        for (a, b) in self.edges() {
            adj[a].push(b);
            adj[b].push(a);
        }
        for a in adj.iter_mut() {
            a.sort_unstable();
        }
        adj
    }

    /// Oriented 2-dimensional facets.
    pub fn oriented_triangles(&self) -> Vec<[usize; 3]> {
        self.facets
            .iter()
            .filter(|f| f.len() == 3)
            .map(|f| [f[0], f[1], f[2]])
            .collect()
    }

    /// True when the 2-facets form a closed surface: every edge of a
    /// triangle lies on exactly two triangles and there are no other facets.
    pub fn is_closed_surface(&self) -> bool {
        if self.facets.iter().any(|f| f.len() != 3) {
            return false;
        }
        let mut count: HashMap<(usize, usize), usize> = HashMap::new();
        for t in self.oriented_triangles() {
            for (a, b) in [(t[0], t[1]), (t[1], t[2]), (t[2], t[0])] {
                *count.entry((a.min(b), a.max(b))).or_insert(0) += 1;
            }
        }
        !count.is_empty() && count.values().all(|&c| c == 2)
    }

    /// Whether the support of `point` spans a simplex.
    pub fn check_point(&self, point: &Point) -> Result<(), ComplexError> {
        let s = point.support();
        if let Some(&v) = s.iter().find(|&&v| v >= self.vertex_count) {
            return Err(ComplexError::VertexOutOfRange {
                index: v,
                vertex_count: self.vertex_count,
            });
        }
        if self.contains(&s) {
            Ok(())
        } else {
            Err(ComplexError::NotASimplex(s))
        }
    }

    /// Barycentric subdivision. Old vertices keep their indices; the vertex
    /// for simplex `s` (of dimension >= 1) is appended in simplex order.
    /// Returns the subdivided complex and, for each new vertex, its point
    /// in `self`.
    pub fn barycentric_subdivision(&self) -> (SimplicialComplex, Vec<Point>) {
        let mut vertex_of: HashMap<&[usize], usize> = HashMap::new();
        let mut points = Vec::with_capacity(self.simplices.len());
        for v in 0..self.vertex_count {
            points.push(Point::vertex(v));
        }
        for s in &self.simplices {
            if s.len() == 1 {
                vertex_of.insert(s.as_slice(), s[0]);
            } else {
                vertex_of.insert(s.as_slice(), points.len());
                points.push(Point::barycenter(s));
            }
        }
        let mut new_facets = Vec::new();
        for f in &self.facets {
            for perm in permutations(f.len()) {
                let odd = parity_is_odd(&perm);
                let mut chain = Vec::with_capacity(f.len());
                let mut acc: Vec<usize> = Vec::with_capacity(f.len());
                for &p in &perm {
                    acc.push(f[p]);
                    let mut key = acc.clone();
                    key.sort_unstable();
                    chain.push(vertex_of[key.as_slice()]);
                }
                if odd && chain.len() >= 2 {
                    chain.swap(0, 1);
                }
                new_facets.push(chain);
            }
        }
        let mut fine = SimplicialComplex::new(points.len(), new_facets).expect("subdivision of a valid complex");
        if let Some(c) = &self.coords {
            fine.coords = Some(points.iter().map(|p| p.embed(c)).collect());
        }
        (fine, points)
    }
}

fn nonempty_subsets(s: &[usize]) -> Vec<Vec<usize>> {
    let n = s.len();
    (1u64..(1u64 << n))
        .map(|mask| (0..n).filter(|i| mask >> i & 1 == 1).map(|i| s[i]).collect())
        .collect()
}

/// All permutations of `0..n` in lexicographic order.
fn permutations(n: usize) -> Vec<Vec<usize>> {
    fn rec(cur: &mut Vec<usize>, used: &mut [bool], out: &mut Vec<Vec<usize>>) {
        if cur.len() == used.len() {
            out.push(cur.clone());
            return;
        }
        for i in 0..used.len() {
            if !used[i] {
                used[i] = true;
                cur.push(i);
                rec(cur, used, out);
                cur.pop();
                used[i] = false;
            }
        }
    }
    let mut out = Vec::new();
    rec(&mut Vec::new(), &mut vec![false; n], &mut out);
    out
}

fn parity_is_odd(perm: &[usize]) -> bool {
    let mut inv = 0;
    for i in 0..perm.len() {
        for j in i + 1..perm.len() {
            if perm[i] > perm[j] {
                inv += 1;
            }
        }
    }
    inv % 2 == 1
}

/// A simplicial map from a fine complex to barycentric points of a coarse one.
#[derive(Debug, Clone)]
pub struct CoarseningMap {
    pub source: SimplicialComplex,
    pub target: SimplicialComplex,
    pub vertex_map: Vec<Point>,
}

impl CoarseningMap {
    /// Checks that every source simplex lands inside a target simplex.
    pub fn new(source: SimplicialComplex, target: SimplicialComplex, vertex_map: Vec<Point>) -> Result<Self, ComplexError> {
        if vertex_map.len() != source.vertex_count() {
            return Err(ComplexError::CoordinateCount {
                got: vertex_map.len(),
                expected: source.vertex_count(),
            });
        }
        for p in &vertex_map {
            target.check_point(p)?;
        }
        for s in source.facets() {
            let mut image: BTreeSet<usize> = BTreeSet::new();
            for &v in s {
                image.extend(vertex_map[v].support());
            }
            let image: Vec<usize> = image.into_iter().collect();
            if !target.contains(&image) {
                return Err(ComplexError::NotSimplicial(s.clone()));
            }
        }
        Ok(Self {
            source,
            target,
            vertex_map,
        })
    }

    pub fn identity(k: &SimplicialComplex) -> Self {
        let map = (0..k.vertex_count()).map(Point::vertex).collect();
        Self {
            source: k.clone(),
            target: k.clone(),
            vertex_map: map,
        }
    }

    /// Every vertex to vertex 0 of the single-point complex.
    pub fn collapse(k: &SimplicialComplex) -> Self {
        Self {
            source: k.clone(),
            target: SimplicialComplex::point(),
            vertex_map: vec![Point::vertex(0); k.vertex_count()],
        }
    }
}

/// The vertices of `sd^depth(K)` with their positions in `K`.
#[derive(Debug, Clone)]
pub struct SampleGrid {
    pub base: SimplicialComplex,
    pub fine: SimplicialComplex,
    pub points: Vec<Point>,
    pub depth: usize,
    adjacency: Vec<Vec<usize>>,
}

impl SampleGrid {
    pub fn new(base: &SimplicialComplex, depth: usize) -> Self {
        let mut fine = base.clone();
        let mut points: Vec<Point> = (0..base.vertex_count()).map(Point::vertex).collect();
        for _ in 0..depth {
            let (next, local) = fine.barycentric_subdivision();
            points = local.iter().map(|p| p.push_forward(&points)).collect();
            fine = next;
        }
        let adjacency = fine.adjacency();
        Self {
            base: base.clone(),
            fine,
            points,
            depth,
            adjacency,
        }
    }

    /// Same base, one more level of subdivision.
    pub fn refined(&self) -> Self {
        let (next, local) = self.fine.barycentric_subdivision();
        let points = local.iter().map(|p| p.push_forward(&self.points)).collect();
        let adjacency = next.adjacency();
        Self {
            base: self.base.clone(),
            fine: next,
            points,
            depth: self.depth + 1,
            adjacency,
        }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn neighbors(&self, v: usize) -> &[usize] {
        &self.adjacency[v]
    }

    pub fn adjacency(&self) -> &[Vec<usize>] {
        &self.adjacency
    }

    /// The coarsening map `sd^depth(K) -> K`.
    pub fn coarsening(&self) -> CoarseningMap {
        CoarseningMap {
            source: self.fine.clone(),
            target: self.base.clone(),
            vertex_map: self.points.clone(),
        }
    }

    /// Embedded position of a sample when the base carries coordinates.
    pub fn position(&self, v: usize) -> Option<[f64; 3]> {
        self.fine.coords().map(|c| c[v])
    }
}

pub mod builtin {
    //! Standard triangulations with embedded coordinates.

    use std::collections::HashMap;
    use std::f64::consts::TAU;

    use super::{ComplexError, SimplicialComplex};

    /// Boundary of an `m`-gon on the unit circle.
    pub fn circle(m: usize) -> Result<SimplicialComplex, ComplexError> {
        if m < 3 {
            return Err(ComplexError::BadParameters(format!("circle needs m >= 3, got {m}")));
        }
        let edges = (0..m).map(|i| vec![i, (i + 1) % m]).collect();
        let coords = (0..m)
            .map(|i| {
                let a = TAU * i as f64 / m as f64;
                [a.cos(), a.sin(), 0.0]
            })
            .collect();
        SimplicialComplex::new(m, edges)?.with_coords(coords)
    }

    /// Icosahedron with `level` rounds of edge-midpoint 4-splitting,
    /// vertices projected to the unit sphere, triangles oriented outward.
    pub fn icosphere(level: usize) -> Result<SimplicialComplex, ComplexError> {
        if level > 5 {
            return Err(ComplexError::BadParameters(format!("icosphere level {level} > 5")));
        }
        let t = (1.0 + 5f64.sqrt()) / 2.0;
        let mut verts: Vec<[f64; 3]> = vec![
            [-1.0, t, 0.0],
            [1.0, t, 0.0],
            [-1.0, -t, 0.0],
            [1.0, -t, 0.0],
            [0.0, -1.0, t],
            [0.0, 1.0, t],
            [0.0, -1.0, -t],
            [0.0, 1.0, -t],
            [t, 0.0, -1.0],
            [t, 0.0, 1.0],
            [-t, 0.0, -1.0],
            [-t, 0.0, 1.0],
        ];
        for v in verts.iter_mut() {
            *v = normalize(*v);
        }
        let mut faces: Vec<[usize; 3]> = vec![
            [0, 11, 5],
            [0, 5, 1],
            [0, 1, 7],
            [0, 7, 10],
            [0, 10, 11],
            [1, 5, 9],
            [5, 11, 4],
            [11, 10, 2],
            [10, 7, 6],
            [7, 1, 8],
            [3, 9, 4],
            [3, 4, 2],
            [3, 2, 6],
            [3, 6, 8],
            [3, 8, 9],
            [4, 9, 5],
            [2, 4, 11],
            [6, 2, 10],
            [8, 6, 7],
            [9, 8, 1],
        ];
        for _ in 0..level {
            let mut mid: HashMap<(usize, usize), usize> = HashMap::new();
            let mut midpoint = |a: usize, b: usize, verts: &mut Vec<[f64; 3]>| -> usize {
                let key = (a.min(b), a.max(b));
                *mid.entry(key).or_insert_with(|| {
                    let (p, q) = (verts[a], verts[b]);
                    verts.push(normalize([p[0] + q[0], p[1] + q[1], p[2] + q[2]]));
                    verts.len() - 1
                })
            };
            let mut next = Vec::with_capacity(faces.len() * 4);
            for [a, b, c] in faces {
                let ab = midpoint(a, b, &mut verts);
                let bc = midpoint(b, c, &mut verts);
                let ca = midpoint(c, a, &mut verts);
                next.extend([[a, ab, ca], [b, bc, ab], [c, ca, bc], [ab, bc, ca]]);
            }
            faces = next;
        }
        let n = verts.len();
        SimplicialComplex::new(n, faces.iter().map(|f| f.to_vec()).collect())?.with_coords(verts)
    }

    /// An `a x b` grid on the torus, each square split into two triangles.
    pub fn torus(a: usize, b: usize) -> Result<SimplicialComplex, ComplexError> {
        if a < 3 || b < 3 {
            return Err(ComplexError::BadParameters(format!("torus needs a, b >= 3, got {a}x{b}")));
        }
        let idx = |i: usize, j: usize| (i % a) * b + (j % b);
        let mut faces = Vec::with_capacity(2 * a * b);
        for i in 0..a {
            for j in 0..b {
                faces.push(vec![idx(i, j), idx(i + 1, j), idx(i + 1, j + 1)]);
                faces.push(vec![idx(i, j), idx(i + 1, j + 1), idx(i, j + 1)]);
            }
        }
        let (big, small) = (2.0, 1.0);
        let mut coords = Vec::with_capacity(a * b);
        for i in 0..a {
            for j in 0..b {
                let u = TAU * i as f64 / a as f64;
                let v = TAU * j as f64 / b as f64;
                let r = big + small * v.cos();
                coords.push([r * u.cos(), r * u.sin(), small * v.sin()]);
            }
        }
        SimplicialComplex::new(a * b, faces)?.with_coords(coords)
    }

    fn normalize(v: [f64; 3]) -> [f64; 3] {
        let n = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
        [v[0] / n, v[1] / n, v[2] / n]
    }
}

/// Signed volume test used to check outward orientation of embedded
/// triangles on a sphere centred at the origin.
pub fn triangle_orientation(c: &[[f64; 3]], t: [usize; 3]) -> f64 {
    let (a, b, d) = (c[t[0]], c[t[1]], c[t[2]]);
    a[0] * (b[1] * d[2] - b[2] * d[1]) - a[1] * (b[0] * d[2] - b[2] * d[0]) + a[2] * (b[0] * d[1] - b[1] * d[0])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn face_closure() {
        let k = SimplicialComplex::new(3, vec![vec![0, 1, 2]]).unwrap();
        assert_eq!(k.simplices().len(), 7);
        assert_eq!(k.dimension(), 2);
        assert!(k.contains(&[2, 0]));
    }

    #[test]
    fn rejects_out_of_range() {
        assert!(matches!(
            SimplicialComplex::new(2, vec![vec![0, 2]]),
            Err(ComplexError::VertexOutOfRange { index: 2, .. })
        ));
    }

    #[test]
    fn subdivide_edge() {
        let k = SimplicialComplex::new(2, vec![vec![0, 1]]).unwrap();
        let (sd, pts) = k.barycentric_subdivision();
        assert_eq!(sd.vertex_count(), 3);
        assert_eq!(sd.simplices_of_dim(1).count(), 2);
        assert_eq!(pts[2], Point::barycenter(&[0, 1]));
    }

    #[test]
    fn subdivide_triangle() {
        let k = SimplicialComplex::new(3, vec![vec![0, 1, 2]]).unwrap();
        let (sd, _) = k.barycentric_subdivision();
        assert_eq!(sd.vertex_count(), 7);
        assert_eq!(sd.simplices_of_dim(2).count(), 6);
    }

    #[test]
    fn subdivision_preserves_orientation() {
        let k = builtin::icosphere(0).unwrap();
        let grid = SampleGrid::new(&k, 2);
        let c = grid.fine.coords().unwrap();
        for t in grid.fine.oriented_triangles() {
            assert!(triangle_orientation(c, t) > 0.0);
        }
        assert!(grid.fine.is_closed_surface());
    }

    #[test]
    fn icosphere_outward_and_closed() {
        for level in 0..3 {
            let k = builtin::icosphere(level).unwrap();
            let c = k.coords().unwrap();
            assert!(k.oriented_triangles().iter().all(|&t| triangle_orientation(c, t) > 0.0));
            assert!(k.is_closed_surface());
            let v = k.vertex_count() as i64;
            let e = k.edges().len() as i64;
            let f = k.oriented_triangles().len() as i64;
            assert_eq!(v - e + f, 2);
        }
    }

    #[test]
    fn torus_euler_characteristic() {
        let k = builtin::torus(4, 5).unwrap();
        let v = k.vertex_count() as i64;
        let e = k.edges().len() as i64;
        let f = k.oriented_triangles().len() as i64;
        assert_eq!(v - e + f, 0);
        assert!(k.is_closed_surface());
    }

    #[test]
    fn grid_points_are_valid() {
        let k = builtin::circle(5).unwrap();
        let g = SampleGrid::new(&k, 2);
        assert_eq!(g.len(), 20);
        for p in &g.points {
            k.check_point(p).unwrap();
        }
        CoarseningMap::new(g.fine.clone(), k.clone(), g.points.clone()).unwrap();
    }

    #[test]
    fn non_simplicial_map_rejected() {
        let k = builtin::circle(4).unwrap();
        let edge = SimplicialComplex::new(2, vec![vec![0, 1]]).unwrap();
        let err = CoarseningMap::new(edge, k, vec![Point::vertex(0), Point::vertex(2)]).unwrap_err();
        assert!(matches!(err, ComplexError::NotSimplicial(_)));
    }

    #[test]
    fn point_weights_validated() {
        assert!(Point::new([(0, 0.5), (1, 0.4)]).is_err());
        assert!(Point::new([(0, -0.1), (1, 1.1)]).is_err());
        assert_eq!(Point::new([(1, 0.5), (0, 0.5)]).unwrap().support(), vec![0, 1]);
    }
}
