//! Hellinger–Kantorovich barycenters of Dirac measures across length scales.
//!
//! The barycenter of a probability measure ρ of Dirac masses minimizes
//!
//! ```text
//! J(ν) = 1 + ‖ν‖ − 2 ∫ √(∫ Cos²(|x − y|/κ) dν(y)) dρ(x)
//! ```
//!
//! over nonnegative measures ν. This crate approximates minimizers with freely
//! moving weighted particles, certifies them through a rescaled dual
//! potential, and drives sweeps over the length scale κ.
//!
//! | Module | Contents |
//! |--------|----------|
//! | [`measure`] | points, domains, κ, particle and input measures, the `Cos²` kernel |
//! | [`closed_form`] | Dirac-case HK distance, Hellinger limits, mass bounds |
//! | [`objective`] | `J` and its gradient (finite sums or adaptive quadrature) |
//! | [`certificate`] | dual potential, constraint function scans, duality gaps |
//! | [`solver`] | particle descent, pruning/merging, insertion, κ sweeps |
//! | [`oracle`] | fixed-grid convex reference solver |
//! | [`experiment`] | configs, sampling, single linkage, CSV output |

pub mod certificate;
pub mod closed_form;
pub mod error;
pub mod experiment;
pub mod measure;
pub mod neighbors;
pub mod objective;
pub mod oracle;
pub mod quadrature;
pub mod solver;
pub mod sum;

pub use error::{Error, Result};
pub use measure::{Density1D, DensityKind, DiscreteMeasure, Domain, InputMeasure, Kappa, ParticleMeasure, Point};
