//! Randomized invariants of the linear algebra, fields and the harness.

use proptest::prelude::*;
use rankhom::complex::{builtin, CoarseningMap, Point, SampleGrid, SimplicialComplex};
use rankhom::field::{
    lower_semicontinuity_check, membership_check, pullback, spectral_gap_eta, sup_distance, MatrixField, RankWindow,
};
use rankhom::harness::{parse_scenario, run, Command, RunOptions};
use rankhom::linalg::{
    cut_epsilon, hermitian_eig, idempotency_residual, rank, spectral_projection, support_projection, HermitianMatrix,
    Tolerances,
};
use rankhom::random::{random_hermitian, random_psd, random_unitary, rng};

fn tol() -> Tolerances {
    Tolerances::default()
}

fn eigenvalues(a: &HermitianMatrix) -> Vec<f64> {
    hermitian_eig(a, &tol()).unwrap().eigenvalues
}

fn rank_trace(p: &HermitianMatrix) -> usize {
    p.matrix().trace().re.round() as usize
}

/// `dim`-simplex with all faces.
fn simplex(dim: usize) -> SimplicialComplex {
    SimplicialComplex::new(dim + 1, vec![(0..=dim).collect()]).unwrap()
}

fn random_linear_field(complex: SimplicialComplex, n: usize, seed: u64, max_rank: usize) -> MatrixField {
    let mut r = rng(seed);
    let values = (0..complex.vertex_count())
        .map(|v| random_psd(&mut r, n, 1 + (v + seed as usize) % max_rank))
        .collect();
    MatrixField::linear(complex, values, &tol()).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn cut_epsilon_moves_at_most_eps(seed in any::<u64>(), n in 1usize..7, eps in 0.0f64..2.0) {
        let a = random_psd(&mut rng(seed), n, n);
        let c = cut_epsilon(&a, eps, &tol()).unwrap();
        prop_assert!(c.sub(&a).norm() <= eps + 1e-10);
        prop_assert!(eigenvalues(&c)[0] >= -1e-10);
    }

    #[test]
    fn spectral_projection_is_idempotent_off_the_spectrum(seed in any::<u64>(), n in 1usize..7, frac in 0.05f64..0.95) {
        let a = random_psd(&mut rng(seed), n, n);
        let eta = frac * a.norm();
        match spectral_projection(&a, eta, &tol()) {
            Ok(p) => {
                prop_assert!(idempotency_residual(&p) <= tol().residual_tol);
                let above = eigenvalues(&a).iter().filter(|&&l| l > eta).count();
                prop_assert_eq!(rank_trace(&p), above);
            }
            Err(_) => {
                let hit = eigenvalues(&a).iter().any(|&l| (l - eta).abs() <= tol().cutoff(a.norm()));
                prop_assert!(hit);
            }
        }
    }

    #[test]
    fn support_projection_rank_counts_eigenvalues(seed in any::<u64>(), n in 1usize..7, k in 0usize..7) {
        let k = k.min(n);
        let a = random_psd(&mut rng(seed), n, k);
        let p = support_projection(&a, &tol()).unwrap();
        let cutoff = tol().cutoff(a.norm());
        let above = eigenvalues(&a).iter().filter(|&&l| l > cutoff).count();
        prop_assert_eq!(rank_trace(&p), above);
        prop_assert_eq!(rank(&a, &tol()).unwrap(), above);
        prop_assert_eq!(above, k);
    }

    #[test]
    fn eigenvalues_are_unitarily_invariant(seed in any::<u64>(), n in 1usize..7) {
        let mut r = rng(seed);
        let a = random_hermitian(&mut r, n);
        let u = random_unitary(&mut r, n);
        let before = eigenvalues(&a);
        let after = eigenvalues(&a.conjugate_by(&u));
        for (x, y) in before.iter().zip(&after) {
            prop_assert!((x - y).abs() <= 1e-10, "{} vs {}", x, y);
        }
    }

    #[test]
    fn weyl_perturbation_bound(seed in any::<u64>(), n in 1usize..7, s in 0.0f64..1.0) {
        let mut r = rng(seed);
        let a = random_hermitian(&mut r, n);
        let b = a.add(&random_hermitian(&mut r, n).scale(s));
        let d = a.sub(&b).norm();
        for (x, y) in eigenvalues(&a).iter().zip(&eigenvalues(&b)) {
            prop_assert!((x - y).abs() <= d + 1e-10);
        }
    }

    #[test]
    fn interpolation_stays_psd(seed in any::<u64>(), dim in 1usize..4, n in 1usize..5) {
        let field = random_linear_field(simplex(dim), n, seed, n);
        let mut r = rng(seed ^ 0x55);
        let w: Vec<f64> = (0..=dim).map(|_| rand::Rng::gen_range(&mut r, 0.0..1.0)).collect();
        let total: f64 = w.iter().sum();
        let point = Point::new(w.iter().enumerate().map(|(v, x)| (v, x / total)));
        prop_assume!(point.is_ok());
        let value = field.evaluate(&point.unwrap(), &tol()).unwrap();
        prop_assert!(eigenvalues(&value)[0] >= -tol().rank_threshold);
    }

    #[test]
    fn refinement_preserves_the_field(seed in any::<u64>(), dim in 1usize..3, n in 1usize..4) {
        let field = random_linear_field(simplex(dim), n, seed, n);
        let fine = field.refine(&tol()).unwrap();
        let grid = SampleGrid::new(field.complex(), 2);
        let coarse_values = field.sample(&grid, &tol()).unwrap();
        let fine_grid = SampleGrid::new(fine.complex(), 1);
        let fine_values = fine.sample(&fine_grid, &tol()).unwrap();
        prop_assert_eq!(coarse_values.len(), fine_values.len());
        for (a, b) in coarse_values.iter().zip(&fine_values) {
            prop_assert!(a.sub(b).norm() <= 1e-12);
        }
    }

    #[test]
    fn rank_is_lower_semicontinuous_on_samples(seed in any::<u64>(), dim in 1usize..3, n in 2usize..5) {
        let field = random_linear_field(simplex(dim), n, seed, n);
        let report = lower_semicontinuity_check(&field, 0.0, 1, &tol()).unwrap();
        prop_assert!(report.pass, "{:?}", report.violations);
    }

    #[test]
    fn gap_eta_survives_one_refinement(seed in any::<u64>(), n in 2usize..5) {
        let field = random_linear_field(builtin::circle(5).unwrap(), n, seed, n);
        let l = 1;
        let sel = spectral_gap_eta(&field, l, 1, &tol()).unwrap();
        prop_assert!(sel.eta > 0.0);
        let finer = SampleGrid::new(field.complex(), 2);
        for v in field.sample(&finer, &tol()).unwrap() {
            // An exact hit of eta by a finer sample is reported, not hidden.
            if let Ok(p) = spectral_projection(&v, sel.eta, &tol()) {
                prop_assert!(rank_trace(&p) >= l);
            }
        }
    }

    #[test]
    fn pullback_of_collapse_is_constant(seed in any::<u64>(), m in 3usize..9, n in 1usize..5) {
        let circle = builtin::circle(m).unwrap();
        let value = random_psd(&mut rng(seed), n, n);
        let on_point = MatrixField::constant(SimplicialComplex::point(), value.clone(), &tol()).unwrap();
        let pulled = pullback(&on_point, &CoarseningMap::collapse(&circle), &tol()).unwrap();
        let direct = MatrixField::constant(circle.clone(), value, &tol()).unwrap();
        prop_assert!(sup_distance(&pulled, &direct, 2, &tol()).unwrap() <= 1e-12);
        let field = random_linear_field(circle.clone(), n, seed, n);
        let same = pullback(&field, &CoarseningMap::identity(&circle), &tol()).unwrap();
        prop_assert!(sup_distance(&same, &field, 2, &tol()).unwrap() <= 1e-12);
    }

    #[test]
    fn membership_is_deterministic(seed in any::<u64>(), n in 2usize..5) {
        let field = random_linear_field(builtin::circle(6).unwrap(), n, seed, n);
        let window = RankWindow::new(n, n, 1).unwrap();
        let a = membership_check(&field, window, 2, &tol()).unwrap();
        let b = membership_check(&field, window, 2, &tol()).unwrap();
        prop_assert_eq!(format!("{a:?}"), format!("{b:?}"));
        prop_assert!(a.pass);
    }
}

fn circle_scenario(seed: u64) -> String {
    format!(
        r#"{{"schema_version": 1,
            "complex": {{"kind": "circle", "vertices": 6}},
            "window": {{"n": 3, "k": 2, "l": 1}},
            "fields": {{"a": {{"kind": "random-window-field"}}, "b": {{"kind": "random-window-field"}}}},
            "depth": 1, "seed": {seed}}}"#
    )
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(6))]

    #[test]
    fn fixed_reports_are_byte_identical(seed in 0u64..1000) {
        let scenario = parse_scenario(&circle_scenario(seed)).unwrap();
        let opts = RunOptions { fixed_report: true, ..RunOptions::default() };
        for command in [Command::Membership, Command::Stratify, Command::Connect] {
            let a = run(command, &scenario, &opts);
            let b = run(command, &scenario, &opts);
            prop_assert_eq!(a.report.to_json(), b.report.to_json());
            prop_assert_eq!(a.csv, b.csv);
        }
    }

    #[test]
    fn passing_reports_have_no_failed_checks(seed in 0u64..1000) {
        let scenario = parse_scenario(&circle_scenario(seed)).unwrap();
        let opts = RunOptions { fixed_report: true, ..RunOptions::default() };
        for command in [Command::Membership, Command::Gap, Command::Connect, Command::Contract] {
            let out = run(command, &scenario, &opts);
            let failed = out.report.checks.iter().filter(|c| !c.pass).count();
            prop_assert_eq!(out.report.pass, failed == 0 && out.report.error.is_none() && !out.report.checks.is_empty());
        }
    }
}
