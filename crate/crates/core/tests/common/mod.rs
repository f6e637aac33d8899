#![allow(dead_code)]

use hkbary::experiment::sampling::{rng, Stream};
use hkbary::{DiscreteMeasure, Domain, InputMeasure, ParticleMeasure, Point};
use rand::Rng;
use rand_chacha::ChaCha20Rng;

pub fn instances(seed: u64) -> ChaCha20Rng {
    rng(seed, Stream::Instances)
}

/// Random weights on `n` points, bounded away from zero and normalized.
pub fn random_weights(r: &mut ChaCha20Rng, n: usize) -> Vec<f64> {
    let w: Vec<f64> = (0..n).map(|_| r.random_range(0.1..1.0)).collect();
    let total: f64 = w.iter().sum();
    w.into_iter().map(|x| x / total).collect()
}

pub fn random_input_1d(r: &mut ChaCha20Rng, n: usize) -> DiscreteMeasure {
    let points = (0..n).map(|_| Point::new1(r.random_range(0.0..1.0))).collect();
    DiscreteMeasure::normalizing(Domain::unit_interval(), points, random_weights(r, n)).unwrap()
}

pub fn random_particles_1d(r: &mut ChaCha20Rng, n: usize) -> ParticleMeasure {
    let positions = (0..n).map(|_| Point::new1(r.random_range(0.0..1.0))).collect();
    let masses = (0..n).map(|_| r.random_range(0.01..1.0)).collect();
    ParticleMeasure::new(1, positions, masses).unwrap()
}

/// Particles next to every input point, so every input is covered.
pub fn covering_particles(r: &mut ChaCha20Rng, rho: &DiscreteMeasure, jitter: f64) -> ParticleMeasure {
    let positions = rho
        .points()
        .iter()
        .map(|p| Point::new1((p.x() + r.random_range(-jitter..jitter)).clamp(0.0, 1.0)))
        .collect();
    let masses = (0..rho.len()).map(|_| r.random_range(0.05..0.5)).collect();
    ParticleMeasure::new(1, positions, masses).unwrap()
}

pub fn four_masses() -> InputMeasure {
    DiscreteMeasure::from_atoms_1d(&[(0.0, 0.4), (0.4, 0.1), (0.6, 0.1), (1.0, 0.4)])
        .unwrap()
        .into()
}
