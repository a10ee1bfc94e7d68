use nalgebra::DMatrix;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::model::{Coordinator, ModelState};
use crate::potentials::Record;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_orthogonal(n: usize, r: &mut ChaCha8Rng) -> DMatrix<f64> {
    crate::linalg::random_orthonormal(n, n, r)
}


pub fn random_model(n: usize, f: usize, nb: usize, m: usize, seed: u64) -> ModelState {
    let mut r = rng(seed);
    let pts: Vec<Vec<f64>> = (0..50)
        .map(|_| (0..n).map(|_| r.random_range(-1.0..1.0)).collect())
        .collect();
    let mut model = ModelState::initialize(n, f, nb, m, m, &pts, 0.3, &mut r).unwrap();
    let u = crate::linalg::random_orthonormal(n, f, &mut r);
    model.set_coordinator(Coordinator::new(u).unwrap()).unwrap();
    for e in model.basis_mut().weights_mut() {
        *e.0 = r.random_range(0.5..1.5);
        *e.1 = r.random_range(-0.5..0.5);
    }
    model.refresh_basis();
    model
}

pub fn random_batch(n: usize, count: usize, seed: u64) -> Vec<Record> {
    let mut r = rng(seed);
    (0..count)
        .map(|_| Record {
            x: (0..n).map(|_| r.random_range(-1.0..1.0)).collect(),
            energy: r.random_range(0.0..2.0),
            force: (0..n).map(|_| r.random_range(-1.0..1.0)).collect(),
        })
        .collect()
}
