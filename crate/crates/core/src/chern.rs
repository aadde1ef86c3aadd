//! First Chern number of a projection field on a closed oriented surface.
//!
//! Lattice holonomy: pick an orthonormal frame of `p` at each sample, take
//! the unit-modulus link `U_uv = det(F_u* F_v) / |det(F_u* F_v)|` on every
//! edge and sum the principal arguments of the triangle products. The
//! frame choices cancel, so the sum is gauge invariant.

use std::f64::consts::TAU;

use rayon::prelude::*;

use crate::bundles::{BundleError, ProjectionField};
use crate::complex::{SampleGrid, SimplicialComplex};
use crate::linalg::{hermitian_eig, CMatrix, HermitianMatrix, Tolerances, C64};

/// Overlaps below this modulus mean the sampling is too coarse.
pub const MIN_OVERLAP: f64 = 1e-3;

/// Chern number of `p` sampled at `depth`. The sign makes the range of
/// `(1 + x . sigma) / 2` over an outward-oriented sphere count as +1.
pub fn chern_number(p: &ProjectionField, depth: usize, tol: &Tolerances) -> Result<f64, BundleError> {
    if !p.covers_all() {
        return Err(BundleError::Mismatch("chern number needs a projection on the whole surface".into()));
    }
    if !p.complex().is_closed_surface() {
        return Err(BundleError::Mismatch("chern number needs a closed triangulated surface".into()));
    }
    let grid = SampleGrid::new(p.complex(), depth);
    let values = p.field().sample(&grid, tol)?;
    chern_from_values(&grid.fine, &values, p.rank(), tol)
}

/// Holonomy sum over the oriented triangles of `surface` for a projection
/// of rank `rank` given at its vertices.
pub fn chern_from_values(surface: &SimplicialComplex, values: &[HermitianMatrix], rank: usize, tol: &Tolerances) -> Result<f64, BundleError> {
    let frames: Vec<Result<CMatrix, BundleError>> = values
        .par_iter()
        .map(|p| Ok(hermitian_eig(p, tol)?.top_vectors(rank)))
        .collect();
    let frames: Vec<CMatrix> = frames.into_iter().collect::<Result<_, _>>()?;
    let link = |u: usize, v: usize| -> C64 { frames[u].adjoint().matmul(&frames[v]).determinant() };
    let triangles = surface.oriented_triangles();
    let angles: Vec<Result<f64, BundleError>> = triangles
        .par_iter()
        .map(|&t| {
            let [a, b, c] = t;
            let mut prod = C64::new(1.0, 0.0);
            for (u, v) in [(a, b), (b, c), (c, a)] {
                let z = link(u, v);
                let m = z.norm();
                if m < MIN_OVERLAP {
                    return Err(BundleError::RefinementNeeded { triangle: t, overlap: m });
                }
                prod *= z / m;
            }
            Ok(prod.arg())
        })
        .collect();
    let mut total = 0.0;
    for a in angles {
        total += a?;
    }
    Ok(total / TAU)
}

/// `(1 + x . sigma) / 2` for the direction of `x`, the rank-one projection
/// onto the spin-up state along `x`.
pub fn bloch_projection(x: [f64; 3]) -> HermitianMatrix {
    let r = (x[0] * x[0] + x[1] * x[1] + x[2] * x[2]).sqrt();
    let (a, b, c) = (x[0] / r, x[1] / r, x[2] / r);
    let m = CMatrix::from_fn(2, 2, |i, j| match (i, j) {
        (0, 0) => C64::new(0.5 * (1.0 + c), 0.0),
        (1, 1) => C64::new(0.5 * (1.0 - c), 0.0),
        (0, 1) => C64::new(0.5 * a, -0.5 * b),
        _ => C64::new(0.5 * a, 0.5 * b),
    });
    HermitianMatrix::from_symmetrized(&m)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::complex::builtin;

    fn tautological(k: &SimplicialComplex) -> Vec<HermitianMatrix> {
        k.coords().unwrap().iter().map(|x| bloch_projection(*x)).collect()
    }

    /// Solid angle of the geodesic triangle on the unit sphere.
    fn solid_angle(a: [f64; 3], b: [f64; 3], c: [f64; 3]) -> f64 {
        let dot = |x: [f64; 3], y: [f64; 3]| x[0] * y[0] + x[1] * y[1] + x[2] * y[2];
        let triple = crate::complex::triangle_orientation(&[a, b, c], [0, 1, 2]);
        2.0 * triple.atan2(1.0 + dot(a, b) + dot(b, c) + dot(c, a))
    }

    fn normalize(x: [f64; 3]) -> [f64; 3] {
        let r = (x[0] * x[0] + x[1] * x[1] + x[2] * x[2]).sqrt();
        [x[0] / r, x[1] / r, x[2] / r]
    }

    #[test]
    fn per_triangle_phase_is_half_the_solid_angle() {
        let k = builtin::icosphere(1).unwrap();
        let values = tautological(&k);
        let tol = Tolerances::default();
        let c = k.coords().unwrap();
        let mut total_omega = 0.0;
        for t in k.oriented_triangles() {
            let one = SimplicialComplex::new(3, vec![vec![0, 1, 2]]).unwrap();
            let vals = vec![values[t[0]].clone(), values[t[1]].clone(), values[t[2]].clone()];
            let phase = chern_from_values(&one, &vals, 1, &tol).unwrap() * TAU;
            let omega = solid_angle(normalize(c[t[0]]), normalize(c[t[1]]), normalize(c[t[2]]));
            assert!((phase - 0.5 * omega).abs() < 1e-12, "{phase} vs {omega}");
            total_omega += omega;
        }
        assert!((total_omega - 2.0 * TAU).abs() < 1e-10);
    }

    #[test]
    fn tautological_sphere_has_degree_one() {
        let k = builtin::icosphere(0).unwrap();
        let tol = Tolerances::default();
        let p = ProjectionField::new(k, tautological(&builtin::icosphere(0).unwrap()), &tol).unwrap();
        for depth in 0..3 {
            let c = chern_number(&p, depth, &tol).unwrap();
            assert!((c - 1.0).abs() < 1e-6, "depth {depth}: {c}");
        }
    }

    #[test]
    fn constant_projection_is_zero() {
        let k = builtin::torus(4, 4).unwrap();
        let tol = Tolerances::default();
        let p = ProjectionField::constant(k, HermitianMatrix::diagonal(&[1.0, 0.0, 0.0]), &tol).unwrap();
        assert!(chern_number(&p, 1, &tol).unwrap().abs() < 1e-12);
    }
}
