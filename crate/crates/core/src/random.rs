//! Seeded random matrices. All randomness in the crate flows through
//! [`rng`] so that a scenario seed fixes every output.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::linalg::{polar_isometry, CMatrix, HermitianMatrix, Tolerances, C64};

pub type Rng64 = ChaCha8Rng;

pub fn rng(seed: u64) -> Rng64 {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Derives an independent stream for a labelled sub-task.
pub fn sub_seed(seed: u64, label: u64) -> u64 {
    // splitmix64 finalizer
    let mut z = seed ^ label.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn gaussian(r: &mut Rng64) -> C64 {
    let re: f64 = r.sample(StandardNormal);
    let im: f64 = r.sample(StandardNormal);
    C64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
}

/// Complex Ginibre matrix with unit-variance entries.
pub fn random_matrix(r: &mut Rng64, rows: usize, cols: usize) -> CMatrix {
    CMatrix::from_fn(rows, cols, |_, _| gaussian(r))
}

pub fn random_hermitian(r: &mut Rng64, n: usize) -> HermitianMatrix {
    HermitianMatrix::from_symmetrized(&random_matrix(r, n, n))
}

/// `G G* / rank` with `G` an `n x rank` Ginibre matrix.
pub fn random_psd(r: &mut Rng64, n: usize, rank: usize) -> HermitianMatrix {
    let g = random_matrix(r, n, rank);
    HermitianMatrix::outer(&g).scale(1.0 / rank.max(1) as f64)
}

/// Haar-ish unitary from the polar factor of a Ginibre matrix.
pub fn random_unitary(r: &mut Rng64, n: usize) -> CMatrix {
    random_isometry(r, n, n)
}

pub fn random_isometry(r: &mut Rng64, n: usize, k: usize) -> CMatrix {
    loop {
        let g = random_matrix(r, n, k);
        if let Ok((u, smin)) = polar_isometry(&g, k, &Tolerances::default()) {
            if smin > 1e-6 {
                return u;
            }
        }
    }
}

/// Random rank-`k` orthogonal projection in `M_n`.
pub fn random_projection(r: &mut Rng64, n: usize, k: usize) -> HermitianMatrix {
    HermitianMatrix::outer(&random_isometry(r, n, k))
}
