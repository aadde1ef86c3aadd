//! Seeded field generators.

use std::f64::consts::TAU;

use rand::Rng;

use crate::chern::bloch_projection;
use crate::complex::{SampleGrid, SimplicialComplex};
use crate::field::{membership_check, FieldError, MatrixField, RankWindow};
use crate::linalg::{CMatrix, HermitianMatrix, Tolerances, C64};
use crate::random::{gaussian, rng, sub_seed};

/// Sub-seeds tried before giving up on a window field.
pub const GENERATOR_RETRIES: u64 = 64;

/// Gram field `G G*` whose vertex factors have `r_v` live columns, with
/// `r_v = k` at about half the vertices and uniform in `[l, k)` elsewhere.
/// Retries sub-seeds until the field passes membership at `depth`.
pub fn random_window_field(
    complex: &SimplicialComplex,
    window: RankWindow,
    seed: u64,
    depth: usize,
    tol: &Tolerances,
) -> Result<MatrixField, FieldError> {
    for attempt in 0..GENERATOR_RETRIES {
        let f = window_field_once(complex, window, sub_seed(seed, attempt), tol)?;
        let report = membership_check(&f, window, depth, tol)?;
        if report.pass {
            return Ok(f);
        }
    }
    Err(FieldError::NoWindowField {
        n: window.n,
        k: window.k,
        l: window.l,
        attempts: GENERATOR_RETRIES,
    })
}

fn window_field_once(complex: &SimplicialComplex, window: RankWindow, seed: u64, tol: &Tolerances) -> Result<MatrixField, FieldError> {
    let mut r = rng(seed);
    let (n, k, l) = (window.n, window.k, window.l);
    let scale = 1.0 / (k.max(1) as f64).sqrt();
    let factors = (0..complex.vertex_count())
        .map(|_| {
            let live = if k == l || r.gen_bool(0.5) { k } else { r.gen_range(l..k) };
            CMatrix::from_fn(n, k, |_, j| if j < live { gaussian(&mut r) * scale } else { C64::new(0.0, 0.0) })
        })
        .collect();
    MatrixField::gram(complex.clone(), factors, tol)
}

/// `p(x) = (1 + x . sigma) / 2` at the vertices, projection-interpolated.
pub fn tautological_sphere(sphere: &SimplicialComplex, tol: &Tolerances) -> Result<MatrixField, FieldError> {
    let coords = sphere.coords().ok_or(FieldError::Empty)?;
    let values = coords.iter().map(|&x| bloch_projection(x)).collect();
    MatrixField::projection(sphere.clone(), values, tol)
}

/// Rank-one loop `theta -> |u><u|`, `u = (1, e^{i w theta}) / sqrt 2`, in
/// the top-left corner of `M_n`, with `theta` the angle of the vertex.
pub fn bott_loop(circle: &SimplicialComplex, n: usize, winding: i64, tol: &Tolerances) -> Result<MatrixField, FieldError> {
    if n < 2 {
        return Err(FieldError::Dimension { vertex: 0, got: n, expected: 2 });
    }
    let m = circle.vertex_count();
    let values = (0..m)
        .map(|v| {
            let theta = match circle.coords() {
                Some(c) => c[v][1].atan2(c[v][0]),
                None => TAU * v as f64 / m as f64,
            };
            let phase = C64::from_polar(1.0, winding as f64 * theta);
            let mut u = CMatrix::zeros(n, 1);
            u[(0, 0)] = C64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0);
            u[(1, 0)] = phase * std::f64::consts::FRAC_1_SQRT_2;
            HermitianMatrix::outer(&u)
        })
        .collect();
    MatrixField::projection(circle.clone(), values, tol)
}

pub fn constant(complex: &SimplicialComplex, value: HermitianMatrix, tol: &Tolerances) -> Result<MatrixField, FieldError> {
    MatrixField::constant(complex.clone(), value, tol)
}

/// A smooth Gram field sampled on one barycentric refinement of `coarse`,
/// and the pullback of its restriction to `coarse`.
///
/// The factor is `G(x) = G_0 + amplitude * (x_0 G_1 + x_1 G_2 + x_2 G_3)`
/// at the unit-normalized vertex positions, with `G_0` an isometry and the
/// `G_i` Ginibre matrices scaled to norm about one, so for small amplitude
/// the field has constant rank `rank`.
pub fn smooth_refinement_pair(
    coarse: &SimplicialComplex,
    n: usize,
    rank: usize,
    amplitude: f64,
    seed: u64,
    tol: &Tolerances,
) -> Result<(MatrixField, MatrixField), FieldError> {
    let coords = coarse.coords().ok_or(FieldError::Empty)?;
    let mut r = rng(seed);
    let g0 = crate::random::random_isometry(&mut r, n, rank);
    let spread = 1.0 / ((n as f64).sqrt() + (rank as f64).sqrt());
    let g: Vec<CMatrix> = (0..3).map(|_| crate::random::random_matrix(&mut r, n, rank).scale(spread)).collect();
    let factor = |x: [f64; 3]| {
        let norm = (x[0] * x[0] + x[1] * x[1] + x[2] * x[2]).sqrt();
        let y = if norm > 0.0 { x.map(|c| c / norm) } else { x };
        let mut f = g0.clone();
        for (gi, yi) in g.iter().zip(y) {
            f = f.lincomb(1.0, gi, amplitude * yi);
        }
        f
    };
    let grid = SampleGrid::new(coarse, 1);
    let fine_coords: Vec<[f64; 3]> = grid.points.iter().map(|p| p.embed(coords)).collect();
    let fine = grid.fine.clone().with_coords(fine_coords.clone())?;
    let fine_field = MatrixField::gram(fine.clone(), fine_coords.iter().map(|&x| factor(x)).collect(), tol)?;
    let coarse_field = MatrixField::gram(coarse.clone(), coords.iter().map(|&x| factor(x)).collect(), tol)?;
    let map = crate::complex::CoarseningMap::new(fine, coarse.clone(), grid.points.clone())?;
    let pulled = crate::field::pullback(&coarse_field, &map, tol)?;
    Ok((fine_field, pulled))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chern::chern_number;
    use crate::bundles::ProjectionField;
    use crate::complex::builtin;
    use crate::field::sup_distance;

    #[test]
    fn window_field_on_circle_passes_membership() {
        let tol = Tolerances::default();
        let c = builtin::circle(12).unwrap();
        let w = RankWindow::new(4, 2, 1).unwrap();
        let f = random_window_field(&c, w, 7, 2, &tol).unwrap();
        assert!(membership_check(&f, w, 2, &tol).unwrap().pass);
    }

    #[test]
    fn window_field_is_deterministic() {
        let tol = Tolerances::default();
        let c = builtin::circle(6).unwrap();
        let w = RankWindow::new(3, 2, 1).unwrap();
        let a = random_window_field(&c, w, 3, 1, &tol).unwrap();
        let b = random_window_field(&c, w, 3, 1, &tol).unwrap();
        assert_eq!(a.values(), b.values());
    }

    #[test]
    fn tautological_field_has_degree_one() {
        let tol = Tolerances::default();
        let s = builtin::icosphere(1).unwrap();
        let f = tautological_sphere(&s, &tol).unwrap();
        let p = ProjectionField::new(s, f.values().to_vec(), &tol).unwrap();
        assert!((chern_number(&p, 0, &tol).unwrap() - 1.0).abs() < 1e-6);
    }

    #[test]
    fn bott_loop_is_rank_one() {
        let tol = Tolerances::default();
        let c = builtin::circle(8).unwrap();
        let f = bott_loop(&c, 3, 1, &tol).unwrap();
        for v in f.values() {
            assert!((v.matrix().trace().re - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn refinement_pair_is_close() {
        let tol = Tolerances::default();
        let c = builtin::circle(12).unwrap();
        let (fine, pulled) = smooth_refinement_pair(&c, 3, 2, 0.3, 5, &tol).unwrap();
        let d = sup_distance(&fine, &pulled, 1, &tol).unwrap();
        assert!(d > 0.0 && d < 0.2, "distance {d}");
    }
}
