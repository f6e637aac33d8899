//! Reproducible sampling of input measures.
//!
//! Every draw comes from ChaCha20 (a counter-based generator) seeded with the
//! user seed and switched to a fixed stream per purpose, so results do not
//! depend on platform or on how other work is scheduled. Gaussian variates use
//! the inverse normal CDF applied to open-interval uniforms.

use rand::distr::Open01;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::measure::{DensityKind, DiscreteMeasure, Domain, Point};

/// Stream identifiers; one per consumer of randomness.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[repr(u64)]
pub enum Stream {
    Sample = 1,
    Instances = 2,
}

pub fn rng(seed: u64, stream: Stream) -> ChaCha20Rng {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(stream as u64);
    rng
}

/// Standard normal variate by inversion.
pub fn standard_normal(rng: &mut ChaCha20Rng) -> f64 {
    let u: f64 = rng.sample(Open01);
    Normal::standard().inverse_cdf(u)
}

/// Splits `n` draws across mixture components by largest remainder; ties go
/// to the lower index.
pub fn component_counts(weights: &[f64], n: usize) -> Vec<usize> {
    let total: f64 = weights.iter().sum();
    let exact: Vec<f64> = weights.iter().map(|w| w / total * n as f64).collect();
    let mut counts: Vec<usize> = exact.iter().map(|e| e.floor() as usize).collect();
    let assigned: usize = counts.iter().sum();
    let mut order: Vec<usize> = (0..weights.len()).collect();
    order.sort_by(|&a, &b| {
        let ra = exact[a] - exact[a].floor();
        let rb = exact[b] - exact[b].floor();
        rb.total_cmp(&ra).then(a.cmp(&b))
    });
    for &j in order.iter().take(n.saturating_sub(assigned)) {
        counts[j] += 1;
    }
    counts
}

/// Draws `n` points from a 1D density; each atom gets weight `1/n`.
///
/// Mixtures are sampled per component, with counts fixed by
/// [`component_counts`], in component order. Draws outside the domain are
/// clamped to its boundary.
pub fn sample_density(kind: &DensityKind, domain: &Domain, n: usize, seed: u64) -> Result<DiscreteMeasure> {
    if n == 0 {
        return Err(Error::EmptySample);
    }
    if domain.dim() != 1 {
        return Err(Error::Config("densities can only be sampled on 1D domains".into()));
    }
    kind.validate()?;
    let (lo, hi) = (domain.lower().x(), domain.upper().x());
    let mut rng = rng(seed, Stream::Sample);
    let mut xs = Vec::with_capacity(n);
    match kind {
        DensityKind::Uniform { a, b } => {
            for _ in 0..n {
                let u: f64 = rng.sample(Open01);
                xs.push(a + (b - a) * u);
            }
        }
        DensityKind::GaussianMixture {
            means,
            stddevs,
            weights,
        } => {
            for (j, count) in component_counts(weights, n).into_iter().enumerate() {
                for _ in 0..count {
                    xs.push(means[j] + stddevs[j] * standard_normal(&mut rng));
                }
            }
        }
    }
    let points = xs.into_iter().map(|x| Point::new1(x.clamp(lo, hi))).collect();
    DiscreteMeasure::uniform_weights(*domain, points)
}

/// Parameters of the five-component mixture used in the sampling experiments.
pub fn five_gaussian_mixture() -> DensityKind {
    DensityKind::GaussianMixture {
        means: vec![0.15, 0.30, 0.46, 0.71, 0.81],
        stddevs: vec![0.05, 0.03, 0.08, 0.03, 0.06],
        weights: vec![0.2; 5],
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_sample_is_rejected() {
        let kind = DensityKind::Uniform { a: 0.0, b: 1.0 };
        assert_eq!(sample_density(&kind, &Domain::unit_interval(), 0, 1), Err(Error::EmptySample));
    }

    #[test]
    fn uniform_sample_mean() {
        // Standard error of the mean is 1/sqrt(12 n) ≈ 9.1e-4.
        let kind = DensityKind::Uniform { a: 0.0, b: 1.0 };
        let s = sample_density(&kind, &Domain::unit_interval(), 100_000, 7).unwrap();
        let mean = s.points().iter().map(|p| p.x()).sum::<f64>() / s.len() as f64;
        assert!((mean - 0.5).abs() < 0.01, "{mean}");
    }

    #[test]
    fn mixture_sample_has_equal_weights() {
        let s = sample_density(&five_gaussian_mixture(), &Domain::unit_interval(), 1000, 3).unwrap();
        assert_eq!(s.len(), 1000);
        assert!(s.weights().iter().all(|&w| w == 0.001));
        assert!(s.points().iter().all(|p| (0.0..=1.0).contains(&p.x())));
    }

    #[test]
    fn streams_and_seeds_are_independent_and_repeatable() {
        let kind = five_gaussian_mixture();
        let d = Domain::unit_interval();
        assert_eq!(sample_density(&kind, &d, 50, 11).unwrap(), sample_density(&kind, &d, 50, 11).unwrap());
        assert_ne!(sample_density(&kind, &d, 50, 11).unwrap(), sample_density(&kind, &d, 50, 12).unwrap());
        let a: u64 = rng(5, Stream::Sample).random();
        let b: u64 = rng(5, Stream::Instances).random();
        assert_ne!(a, b);
    }

    #[test]
    fn largest_remainder_counts() {
        assert_eq!(component_counts(&[0.2; 5], 1000), vec![200; 5]);
        assert_eq!(component_counts(&[0.2; 5], 7), vec![2, 2, 1, 1, 1]);
        assert_eq!(component_counts(&[0.5, 0.25, 0.25], 3), vec![1, 1, 1]);
        assert_eq!(component_counts(&[1.0], 4), vec![4]);
    }

    #[test]
    fn inverse_normal_reference_values() {
        let n = Normal::standard();
        assert!((n.inverse_cdf(0.975) - 1.959963984540054).abs() < 1e-12);
        assert!((n.inverse_cdf(0.5)).abs() < 1e-15);
        assert!((n.inverse_cdf(1e-10) + 6.361340902404056).abs() < 1e-9);
    }
}
