//! Domain types: points, boxes, length scales, particle and input measures,
//! and the truncated trigonometric kernel shared by every formula.

use std::f64::consts::FRAC_PI_2;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sum::pairwise_sum;

/// A point in the plane; one-dimensional points keep the second coordinate at zero.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Point(pub [f64; 2]);

impl Point {
    pub const fn new1(x: f64) -> Self {
        Point([x, 0.0])
    }

    pub const fn new2(x: f64, y: f64) -> Self {
        Point([x, y])
    }

    pub fn from_coords(coords: &[f64]) -> Result<Self> {
        match coords {
            [x] => Ok(Point::new1(*x)),
            [x, y] => Ok(Point::new2(*x, *y)),
            other => Err(Error::UnsupportedDimension(other.len())),
        }
    }

    pub fn x(&self) -> f64 {
        self.0[0]
    }

    pub fn coords(&self, dim: usize) -> &[f64] {
        &self.0[..dim]
    }

    pub fn is_finite(&self) -> bool {
        self.0[0].is_finite() && self.0[1].is_finite()
    }

    /// Euclidean distance. Exact `|dx|` in 1D, `hypot` otherwise.
    #[inline]
    pub fn dist(&self, other: &Point) -> f64 {
        let dx = self.0[0] - other.0[0];
        let dy = self.0[1] - other.0[1];
        if dy == 0.0 {
            dx.abs()
        } else {
            dx.hypot(dy)
        }
    }

    pub fn sub(&self, other: &Point) -> Point {
        Point([self.0[0] - other.0[0], self.0[1] - other.0[1]])
    }

    pub fn add_scaled(&self, other: &Point, t: f64) -> Point {
        Point([self.0[0] + t * other.0[0], self.0[1] + t * other.0[1]])
    }

    pub fn scale(&self, t: f64) -> Point {
        Point([t * self.0[0], t * self.0[1]])
    }

    pub fn norm(&self) -> f64 {
        self.dist(&Point::default())
    }

    /// Lexicographic order, used for deterministic tie-breaking.
    pub fn lex_cmp(&self, other: &Point) -> std::cmp::Ordering {
        self.0[0]
            .total_cmp(&other.0[0])
            .then(self.0[1].total_cmp(&other.0[1]))
    }
}

/// Axis-aligned box `[lower, upper]` in dimension 1 or 2.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Domain {
    dim: usize,
    lower: Point,
    upper: Point,
}

impl Domain {
    pub fn new(lower: &[f64], upper: &[f64]) -> Result<Self> {
        if lower.len() != upper.len() {
            return Err(Error::InvalidDomain(format!(
                "bounds have lengths {} and {}",
                lower.len(),
                upper.len()
            )));
        }
        let dim = lower.len();
        if !(1..=2).contains(&dim) {
            return Err(Error::UnsupportedDimension(dim));
        }
        for k in 0..dim {
            if !(lower[k].is_finite() && upper[k].is_finite()) {
                return Err(Error::NonFinite("domain bounds"));
            }
            if lower[k] >= upper[k] {
                return Err(Error::InvalidDomain(format!(
                    "lower bound {} is not below upper bound {} in coordinate {k}",
                    lower[k], upper[k]
                )));
            }
        }
        Ok(Domain {
            dim,
            lower: Point::from_coords(lower)?,
            upper: Point::from_coords(upper)?,
        })
    }

    pub fn unit_interval() -> Self {
        Domain::new(&[0.0], &[1.0]).unwrap()
    }

    pub fn unit_square() -> Self {
        Domain::new(&[0.0, 0.0], &[1.0, 1.0]).unwrap()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn lower(&self) -> Point {
        self.lower
    }

    pub fn upper(&self) -> Point {
        self.upper
    }

    pub fn diameter(&self) -> f64 {
        self.lower.dist(&self.upper)
    }

    pub fn contains(&self, p: &Point) -> bool {
        (0..self.dim).all(|k| p.0[k] >= self.lower.0[k] && p.0[k] <= self.upper.0[k])
            && (self.dim == 2 || p.0[1] == 0.0)
    }

    pub fn clamp(&self, p: &Point) -> Point {
        let mut q = Point::default();
        for k in 0..self.dim {
            q.0[k] = p.0[k].clamp(self.lower.0[k], self.upper.0[k]);
        }
        q
    }
}

/// Length scale of the transport part of the metric.
#[derive(Clone, Copy, Debug, PartialEq, PartialOrd, Serialize, Deserialize)]
pub struct Kappa(f64);

impl Kappa {
    pub fn new(value: f64) -> Result<Self> {
        if value.is_finite() && value > 0.0 {
            Ok(Kappa(value))
        } else {
            Err(Error::InvalidKappa(value))
        }
    }

    pub fn get(self) -> f64 {
        self.0
    }

    /// Interaction radius `κπ/2`; the kernel vanishes at and beyond it.
    pub fn radius(self) -> f64 {
        self.0 * FRAC_PI_2
    }
}

/// `cos(min(|s|, π/2))`.
#[inline]
pub fn cos_trunc(s: f64) -> f64 {
    let a = s.abs();
    if a >= FRAC_PI_2 {
        0.0
    } else {
        a.cos()
    }
}

/// `sin(s)` on `[0, π/2]`, zero elsewhere.
#[inline]
pub fn sin_trunc(s: f64) -> f64 {
    if (0.0..=FRAC_PI_2).contains(&s) {
        s.sin()
    } else {
        0.0
    }
}

/// `Cos²(|x - y| / κ)`.
#[inline]
pub fn cos2_kernel(x: &Point, y: &Point, kappa: Kappa) -> f64 {
    let c = cos_trunc(x.dist(y) / kappa.get());
    c * c
}

/// Kernel value together with the gradient of `y ↦ Cos²(|x - y|/κ)`.
#[inline]
pub(crate) fn kernel_and_grad(x: &Point, y: &Point, kappa: Kappa) -> (f64, Point) {
    let k = kappa.get();
    let d = x.dist(y);
    let s = d / k;
    if s >= FRAC_PI_2 {
        return (0.0, Point::default());
    }
    let (sn, cs) = s.sin_cos();
    if d == 0.0 {
        return (1.0, Point::default());
    }
    // d/dy cos²(|x-y|/κ) = -2 cos sin (y - x) / (κ |x - y|)
    let coef = -2.0 * cs * sn / (k * d);
    (cs * cs, y.sub(x).scale(coef))
}

/// Kernel value, gradient and Hessian of `y ↦ Cos²(|x − y|/κ)`.
///
/// With `v = y − x`, `r = |v|`, `t = r/κ` and `u = v/r`, the Hessian is
/// `−2 cos(2t)/κ² · u uᵀ − sin(2t)/(κ r) · (I − u uᵀ)`, tending to `−2/κ² I`
/// as `r → 0`.
pub(crate) fn kernel_derivatives(x: &Point, y: &Point, kappa: Kappa) -> (f64, Point, [[f64; 2]; 2]) {
    let k = kappa.get();
    let v = y.sub(x);
    let r = v.norm();
    let t = r / k;
    if t >= FRAC_PI_2 {
        return (0.0, Point::default(), [[0.0; 2]; 2]);
    }
    if r == 0.0 {
        let h = -2.0 / (k * k);
        return (1.0, Point::default(), [[h, 0.0], [0.0, h]]);
    }
    let (s2, c2) = (2.0 * t).sin_cos();
    let c = t.cos();
    let u = v.scale(1.0 / r);
    let radial = -2.0 * c2 / (k * k);
    let tangential = -s2 / (k * r);
    let mut h = [[0.0; 2]; 2];
    for (a, row) in h.iter_mut().enumerate() {
        for (b, e) in row.iter_mut().enumerate() {
            let uu = u.0[a] * u.0[b];
            *e = radial * uu + tangential * (if a == b { 1.0 } else { 0.0 } - uu);
        }
    }
    (c * c, u.scale(-s2 / k), h)
}

/// A finite nonnegative atomic measure `Σ m_j δ_{y_j}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParticleMeasure {
    dim: usize,
    positions: Vec<Point>,
    masses: Vec<f64>,
}

impl ParticleMeasure {
    pub fn new(dim: usize, positions: Vec<Point>, masses: Vec<f64>) -> Result<Self> {
        if !(1..=2).contains(&dim) {
            return Err(Error::UnsupportedDimension(dim));
        }
        if positions.len() != masses.len() {
            return Err(Error::InvalidMeasure(format!(
                "{} positions but {} masses",
                positions.len(),
                masses.len()
            )));
        }
        if positions.iter().any(|p| !p.is_finite()) {
            return Err(Error::NonFinite("particle positions"));
        }
        if dim == 1 && positions.iter().any(|p| p.0[1] != 0.0) {
            return Err(Error::InvalidMeasure(
                "one-dimensional positions must have a zero second coordinate".into(),
            ));
        }
        for &m in &masses {
            if !m.is_finite() {
                return Err(Error::NonFinite("particle masses"));
            }
            if m < 0.0 {
                return Err(Error::InvalidMeasure(format!("negative mass {m}")));
            }
        }
        Ok(ParticleMeasure {
            dim,
            positions,
            masses,
        })
    }

    /// Convenience constructor for 1D atoms `(x, m)`.
    pub fn from_atoms_1d(atoms: &[(f64, f64)]) -> Result<Self> {
        let (p, m) = atoms.iter().map(|&(x, m)| (Point::new1(x), m)).unzip();
        ParticleMeasure::new(1, p, m)
    }

    pub fn empty(dim: usize) -> Self {
        ParticleMeasure {
            dim,
            positions: Vec::new(),
            masses: Vec::new(),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.masses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.masses.is_empty()
    }

    pub fn positions(&self) -> &[Point] {
        &self.positions
    }

    pub fn masses(&self) -> &[f64] {
        &self.masses
    }

    pub fn total_mass(&self) -> f64 {
        pairwise_sum(&self.masses)
    }

    pub fn atoms(&self) -> impl Iterator<Item = (&Point, f64)> + '_ {
        self.positions.iter().zip(self.masses.iter().copied())
    }

    pub fn push(&mut self, position: Point, mass: f64) {
        debug_assert!(mass >= 0.0 && mass.is_finite());
        self.positions.push(position);
        self.masses.push(mass);
    }

    pub fn remove(&mut self, index: usize) -> (Point, f64) {
        (self.positions.remove(index), self.masses.remove(index))
    }

    pub fn scaled(&self, factor: f64) -> ParticleMeasure {
        ParticleMeasure {
            dim: self.dim,
            positions: self.positions.clone(),
            masses: self.masses.iter().map(|m| m * factor).collect(),
        }
    }

    /// Atoms with mass at or below `threshold` removed.
    pub fn pruned(&self, threshold: f64) -> ParticleMeasure {
        let (positions, masses) = self
            .atoms()
            .filter(|&(_, m)| m > threshold)
            .map(|(p, m)| (*p, m))
            .unzip();
        ParticleMeasure {
            dim: self.dim,
            positions,
            masses,
        }
    }

    /// Strips zero-mass atoms before reporting.
    pub fn without_empty(&self) -> ParticleMeasure {
        self.pruned(0.0)
    }

    pub fn check_in(&self, domain: &Domain) -> Result<()> {
        if domain.dim() != self.dim {
            return Err(Error::InvalidMeasure(format!(
                "measure dimension {} does not match domain dimension {}",
                self.dim,
                domain.dim()
            )));
        }
        if let Some(p) = self.positions.iter().find(|p| !domain.contains(p)) {
            return Err(Error::InvalidMeasure(format!(
                "atom at {p:?} lies outside the domain"
            )));
        }
        Ok(())
    }

    /// Atoms sorted lexicographically by position; useful for stable comparisons.
    pub fn sorted(&self) -> ParticleMeasure {
        let mut idx: Vec<usize> = (0..self.len()).collect();
        idx.sort_by(|&a, &b| self.positions[a].lex_cmp(&self.positions[b]));
        ParticleMeasure {
            dim: self.dim,
            positions: idx.iter().map(|&i| self.positions[i]).collect(),
            masses: idx.iter().map(|&i| self.masses[i]).collect(),
        }
    }
}

/// Weighted point cloud `Σ λ_i δ_{x_i}` with `Σ λ_i = 1`.
#[derive(Clone, Debug, PartialEq)]
pub struct DiscreteMeasure {
    domain: Domain,
    points: Vec<Point>,
    weights: Vec<f64>,
}

const WEIGHT_SUM_TOL: f64 = 1e-12;

impl DiscreteMeasure {
    pub fn new(domain: Domain, points: Vec<Point>, weights: Vec<f64>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::EmptySample);
        }
        if points.len() != weights.len() {
            return Err(Error::InvalidMeasure(format!(
                "{} points but {} weights",
                points.len(),
                weights.len()
            )));
        }
        if let Some(p) = points.iter().find(|p| !domain.contains(p)) {
            return Err(Error::InvalidMeasure(format!(
                "input point {p:?} lies outside the domain"
            )));
        }
        if weights.iter().any(|w| !w.is_finite()) {
            return Err(Error::NonFinite("input weights"));
        }
        if let Some(w) = weights.iter().find(|&&w| w <= 0.0) {
            return Err(Error::InvalidMeasure(format!(
                "input weights must be strictly positive, got {w}"
            )));
        }
        let total = pairwise_sum(&weights);
        if (total - 1.0).abs() > WEIGHT_SUM_TOL {
            return Err(Error::InvalidMeasure(format!(
                "input weights sum to {total}, expected 1"
            )));
        }
        Ok(DiscreteMeasure {
            domain,
            points,
            weights,
        })
    }

    /// Divides positive weights by their sum. The barycenter problem is
    /// linear in ρ, so this leaves minimizers unchanged.
    pub fn normalizing(domain: Domain, points: Vec<Point>, weights: Vec<f64>) -> Result<Self> {
        let total = pairwise_sum(&weights);
        if !(total.is_finite() && total > 0.0) {
            return Err(Error::InvalidMeasure(format!(
                "input weights sum to {total}, cannot normalize"
            )));
        }
        let weights = weights.iter().map(|w| w / total).collect();
        DiscreteMeasure::new(domain, points, weights)
    }

    /// Equal weights `1/n`.
    pub fn uniform_weights(domain: Domain, points: Vec<Point>) -> Result<Self> {
        let n = points.len();
        if n == 0 {
            return Err(Error::EmptySample);
        }
        DiscreteMeasure::new(domain, points, vec![1.0 / n as f64; n])
    }

    pub fn from_atoms_1d(atoms: &[(f64, f64)]) -> Result<Self> {
        let (p, w) = atoms.iter().map(|&(x, w)| (Point::new1(x), w)).unzip();
        DiscreteMeasure::new(Domain::unit_interval(), p, w)
    }

    pub fn domain(&self) -> &Domain {
        &self.domain
    }

    pub fn points(&self) -> &[Point] {
        &self.points
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// Named one-dimensional densities.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DensityKind {
    Uniform {
        a: f64,
        b: f64,
    },
    GaussianMixture {
        means: Vec<f64>,
        stddevs: Vec<f64>,
        weights: Vec<f64>,
    },
}

impl DensityKind {
    pub fn validate(&self) -> Result<()> {
        match self {
            DensityKind::Uniform { a, b } => {
                if !(a.is_finite() && b.is_finite()) {
                    return Err(Error::NonFinite("uniform bounds"));
                }
                if a >= b {
                    return Err(Error::InvalidDensity(format!("uniform({a}, {b}) is empty")));
                }
            }
            DensityKind::GaussianMixture {
                means,
                stddevs,
                weights,
            } => {
                if means.is_empty() || means.len() != stddevs.len() || means.len() != weights.len()
                {
                    return Err(Error::InvalidDensity(
                        "mixture needs equally many means, stddevs and weights".into(),
                    ));
                }
                if means.iter().chain(stddevs).chain(weights).any(|v| !v.is_finite()) {
                    return Err(Error::NonFinite("mixture parameters"));
                }
                if stddevs.iter().any(|&s| s <= 0.0) {
                    return Err(Error::InvalidDensity("stddevs must be positive".into()));
                }
                if weights.iter().any(|&w| w < 0.0) {
                    return Err(Error::InvalidDensity("weights must be nonnegative".into()));
                }
                let total = pairwise_sum(weights);
                if (total - 1.0).abs() > 1e-12 {
                    return Err(Error::InvalidDensity(format!(
                        "mixture weights sum to {total}, expected 1"
                    )));
                }
            }
        }
        Ok(())
    }

    /// Unnormalized density on the real line.
    pub fn raw_pdf(&self, x: f64) -> f64 {
        match self {
            DensityKind::Uniform { a, b } => {
                if x >= *a && x <= *b {
                    1.0 / (b - a)
                } else {
                    0.0
                }
            }
            DensityKind::GaussianMixture {
                means,
                stddevs,
                weights,
            } => {
                let inv_sqrt_2pi = 0.5 * std::f64::consts::FRAC_2_SQRT_PI * std::f64::consts::FRAC_1_SQRT_2;
                let mut acc = 0.0;
                for ((m, s), w) in means.iter().zip(stddevs).zip(weights) {
                    let z = (x - m) / s;
                    acc += w * inv_sqrt_2pi / s * (-0.5 * z * z).exp();
                }
                acc
            }
        }
    }

    pub fn raw_cdf(&self, x: f64) -> f64 {
        match self {
            DensityKind::Uniform { a, b } => ((x - a) / (b - a)).clamp(0.0, 1.0),
            DensityKind::GaussianMixture {
                means,
                stddevs,
                weights,
            } => means
                .iter()
                .zip(stddevs)
                .zip(weights)
                .map(|((m, s), w)| w * 0.5 * libm::erfc(-(x - m) / (s * std::f64::consts::SQRT_2)))
                .sum(),
        }
    }

    /// Support on the real line (infinite for mixtures).
    pub fn support(&self) -> (f64, f64) {
        match self {
            DensityKind::Uniform { a, b } => (*a, *b),
            DensityKind::GaussianMixture { .. } => (f64::NEG_INFINITY, f64::INFINITY),
        }
    }
}

/// A density restricted to a 1D domain and renormalized to a probability measure.
#[derive(Clone, Debug, PartialEq)]
pub struct Density1D {
    kind: DensityKind,
    domain: Domain,
    lower: f64,
    upper: f64,
    cdf_lower: f64,
    norm: f64,
    tolerance: f64,
}

impl Density1D {
    pub fn new(kind: DensityKind, domain: Domain, tolerance: f64) -> Result<Self> {
        if domain.dim() != 1 {
            return Err(Error::InvalidDensity(
                "densities are only supported in one dimension".into(),
            ));
        }
        kind.validate()?;
        if !(tolerance.is_finite() && tolerance > 0.0) {
            return Err(Error::InvalidDensity(format!(
                "quadrature tolerance must be positive, got {tolerance}"
            )));
        }
        let (s0, s1) = kind.support();
        let lower = s0.max(domain.lower().x());
        let upper = s1.min(domain.upper().x());
        if lower >= upper {
            return Err(Error::InvalidDensity(
                "density support does not meet the domain".into(),
            ));
        }
        let cdf_lower = kind.raw_cdf(lower);
        let norm = kind.raw_cdf(upper) - cdf_lower;
        if norm <= 1e-300 {
            return Err(Error::InvalidDensity(
                "density has no mass inside the domain".into(),
            ));
        }
        Ok(Density1D {
            kind,
            domain,
            lower,
            upper,
            cdf_lower,
            norm,
            tolerance,
        })
    }

    pub fn uniform(a: f64, b: f64, tolerance: f64) -> Result<Self> {
        Density1D::new(DensityKind::Uniform { a, b }, Domain::unit_interval(), tolerance)
    }

    pub fn kind(&self) -> &DensityKind {
        &self.kind
    }

    pub fn domain(&self) -> &Domain {
        &self.domain
    }

    /// Integration interval: support intersected with the domain.
    pub fn interval(&self) -> (f64, f64) {
        (self.lower, self.upper)
    }

    pub fn tolerance(&self) -> f64 {
        self.tolerance
    }

    pub fn with_tolerance(&self, tolerance: f64) -> Result<Self> {
        Density1D::new(self.kind.clone(), self.domain, tolerance)
    }

    pub fn pdf(&self, x: f64) -> f64 {
        if x < self.lower || x > self.upper {
            0.0
        } else {
            self.kind.raw_pdf(x) / self.norm
        }
    }

    pub fn cdf(&self, x: f64) -> f64 {
        let x = x.clamp(self.lower, self.upper);
        ((self.kind.raw_cdf(x) - self.cdf_lower) / self.norm).clamp(0.0, 1.0)
    }

    /// Probability of the closed interval `[a, b]`.
    pub fn interval_mass(&self, a: f64, b: f64) -> f64 {
        if b <= a {
            return 0.0;
        }
        (self.cdf(b) - self.cdf(a)).max(0.0)
    }
}

/// The data measure: a weighted point cloud or a named 1D density.
#[derive(Clone, Debug, PartialEq)]
pub enum InputMeasure {
    Discrete(DiscreteMeasure),
    Density(Density1D),
}

impl InputMeasure {
    pub fn domain(&self) -> &Domain {
        match self {
            InputMeasure::Discrete(d) => d.domain(),
            InputMeasure::Density(d) => d.domain(),
        }
    }

    pub fn dim(&self) -> usize {
        self.domain().dim()
    }

    pub fn as_discrete(&self) -> Option<&DiscreteMeasure> {
        match self {
            InputMeasure::Discrete(d) => Some(d),
            InputMeasure::Density(_) => None,
        }
    }
}

impl From<DiscreteMeasure> for InputMeasure {
    fn from(d: DiscreteMeasure) -> Self {
        InputMeasure::Discrete(d)
    }
}

impl From<Density1D> for InputMeasure {
    fn from(d: Density1D) -> Self {
        InputMeasure::Density(d)
    }
}
