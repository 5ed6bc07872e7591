//! Seeded samplers for states and matrices.

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::linalg::{c, ComplexMatrix};
use crate::state::{density_from_bloch, BlochVector, DensityMatrix, PureState};

pub type SeededRng = ChaCha8Rng;

pub fn rng(seed: u64) -> SeededRng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Independent stream `index` derived from a base seed.
pub fn rng_stream(seed: u64, index: u64) -> SeededRng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(index.wrapping_add(1));
    r
}

fn normal(rng: &mut impl Rng) -> f64 {
    rng.sample(StandardNormal)
}

/// Uniform point on the unit sphere.
pub fn unit_vector3(rng: &mut impl Rng) -> [f64; 3] {
    loop {
        let v = [normal(rng), normal(rng), normal(rng)];
        let n = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
        if n > 1e-12 {
            return [v[0] / n, v[1] / n, v[2] / n];
        }
    }
}

/// Bloch vector uniform in the unit ball.
pub fn bloch_in_ball(rng: &mut impl Rng) -> BlochVector {
    let u = unit_vector3(rng);
    let r = rng.random::<f64>().cbrt();
    BlochVector {
        x: u[0] * r,
        y: u[1] * r,
        z: u[2] * r,
    }
}

pub fn qubit_state(rng: &mut impl Rng) -> DensityMatrix {
    density_from_bloch(&bloch_in_ball(rng)).expect("sampled inside the unit ball")
}

pub fn pure_qubit(rng: &mut impl Rng) -> DensityMatrix {
    let u = unit_vector3(rng);
    density_from_bloch(&BlochVector {
        x: u[0],
        y: u[1],
        z: u[2],
    })
    .expect("unit Bloch vector")
}

/// Haar-random pure state.
pub fn pure_state(d: usize, rng: &mut impl Rng) -> PureState {
    let v = DVector::from_iterator(d, (0..d).map(|_| c(normal(rng), normal(rng))));
    PureState::normalized(v).expect("gaussian vector is non-zero")
}

/// Complex Ginibre matrix with standard normal entries.
pub fn ginibre(rows: usize, cols: usize, rng: &mut impl Rng) -> ComplexMatrix {
    ComplexMatrix::from_fn(rows, cols, |_, _| c(normal(rng), normal(rng)))
}

/// Random density matrix of the given rank (Hilbert–Schmidt measure when
/// `rank == d`).
pub fn density(d: usize, rank: usize, rng: &mut impl Rng) -> DensityMatrix {
    let g = ginibre(d, rank.max(1), rng);
    let w = &g * g.adjoint();
    let tr = crate::linalg::trace(&w).re;
    DensityMatrix::from_trusted(w * c(1.0 / tr, 0.0), vec![d])
}

/// Random Hermitian matrix with Gaussian entries.
pub fn hermitian(d: usize, rng: &mut impl Rng) -> ComplexMatrix {
    crate::linalg::hermitian_part(&ginibre(d, d, rng))
}
