//! Exact HK quantities available when one argument is a Dirac mass, the
//! Hellinger distance between atomic measures, the two limit barycenters,
//! and the mass/concentration constants that bound barycenter mass.

use std::collections::BTreeMap;
use std::f64::consts::{FRAC_PI_2, PI};
use std::sync::OnceLock;

use crate::error::{Error, Result};
use crate::measure::{cos2_kernel, InputMeasure, Kappa, ParticleMeasure, Point};
use crate::quadrature::{integrate_scalar, QuadOptions};
use crate::sum::pairwise_sum_by;

/// Squared HK distance, bounded by the sum of the two total masses.
#[derive(Clone, Copy, Debug, PartialEq, PartialOrd)]
pub struct HkValue {
    pub squared_distance: f64,
}

fn kernel_mass(xbar: &Point, nu: &ParticleMeasure, kappa: Kappa) -> f64 {
    let pos = nu.positions();
    let m = nu.masses();
    pairwise_sum_by(nu.len(), |j| m[j] * cos2_kernel(xbar, &pos[j], kappa))
}

/// `HK²_κ(m δ_x̄, ν) = m + ‖ν‖ − 2 √m √(∫ Cos²(|x̄ − y|/κ) dν(y))`.
pub fn hk2_dirac(m: f64, xbar: &Point, nu: &ParticleMeasure, kappa: Kappa) -> Result<HkValue> {
    if !m.is_finite() || !xbar.is_finite() {
        return Err(Error::NonFinite("Dirac mass or location"));
    }
    if m <= 0.0 {
        return Err(Error::InvalidMeasure(format!("Dirac mass must be positive, got {m}")));
    }
    let overlap = kernel_mass(xbar, nu, kappa);
    let value = m + nu.total_mass() - 2.0 * m.sqrt() * overlap.sqrt();
    Ok(HkValue {
        squared_distance: value.max(0.0),
    })
}

fn atom_key(p: &Point) -> [u64; 2] {
    // Adding zero folds -0.0 into +0.0.
    [(p.0[0] + 0.0).to_bits(), (p.0[1] + 0.0).to_bits()]
}

/// Hellinger distance between atomic measures; atoms match by exact coordinates.
pub fn hellinger2_atomic(mu: &ParticleMeasure, nu: &ParticleMeasure) -> HkValue {
    let mut table: BTreeMap<[u64; 2], (f64, f64)> = BTreeMap::new();
    for (p, m) in mu.atoms() {
        table.entry(atom_key(p)).or_default().0 += m;
    }
    for (p, m) in nu.atoms() {
        table.entry(atom_key(p)).or_default().1 += m;
    }
    let terms: Vec<f64> = table
        .values()
        .map(|&(a, b)| (a.sqrt() - b.sqrt()).powi(2))
        .collect();
    HkValue {
        squared_distance: crate::sum::pairwise_sum(&terms),
    }
}

/// Limit barycenter as κ → 0: every atom of ρ with weight λ becomes an atom of
/// mass λ²; atomless parts contribute nothing.
pub fn hellinger_barycenter(rho: &InputMeasure) -> ParticleMeasure {
    match rho {
        InputMeasure::Discrete(d) => {
            // Coincident input points form a single atom whose weight is squared once.
            let mut order: Vec<[u64; 2]> = Vec::new();
            let mut acc: BTreeMap<[u64; 2], (Point, f64)> = BTreeMap::new();
            for (p, &w) in d.points().iter().zip(d.weights()) {
                let key = atom_key(p);
                acc.entry(key)
                    .or_insert_with(|| {
                        order.push(key);
                        (*p, 0.0)
                    })
                    .1 += w;
            }
            let (positions, masses) = order
                .iter()
                .map(|k| {
                    let (p, w) = acc[k];
                    (p, w * w)
                })
                .unzip();
            ParticleMeasure::new(d.domain().dim(), positions, masses)
                .expect("squared input weights are valid masses")
        }
        InputMeasure::Density(d) => ParticleMeasure::empty(d.domain().dim()),
    }
}

/// Limit barycenter as κ → ∞: a unit mass at the mean of ρ.
pub fn wasserstein_limit_barycenter(rho: &InputMeasure) -> Result<ParticleMeasure> {
    let mean = match rho {
        InputMeasure::Discrete(d) => {
            let w = d.weights();
            let p = d.points();
            Point([
                pairwise_sum_by(d.len(), |i| w[i] * p[i].0[0]),
                pairwise_sum_by(d.len(), |i| w[i] * p[i].0[1]),
            ])
        }
        InputMeasure::Density(d) => {
            let (a, b) = d.interval();
            let opts = QuadOptions {
                abs_tol: d.tolerance(),
                ..QuadOptions::default()
            };
            let (m, _) = integrate_scalar(|x| x * d.pdf(x), a, b, &[], opts)?;
            Point::new1(m)
        }
    };
    ParticleMeasure::new(rho.dim(), vec![mean], vec![1.0])
}

/// Absolute slack added to numerically maximized interval masses.
pub const CONCENTRATION_SLACK: f64 = 1e-9;

/// `C_{ρ,κ} = sup_y ρ(B(y, κπ/2))` with closed balls.
///
/// Exact for discrete ρ. For densities the window mass is maximized on a grid
/// followed by golden-section refinement, and [`CONCENTRATION_SLACK`] is added
/// so the result stays an upper bound.
pub fn concentration_bound(rho: &InputMeasure, kappa: Kappa) -> f64 {
    let r = kappa.radius();
    match rho {
        InputMeasure::Discrete(d) if d.domain().dim() == 1 => {
            let mut pts: Vec<(f64, f64)> = d
                .points()
                .iter()
                .zip(d.weights())
                .map(|(p, &w)| (p.x(), w))
                .collect();
            pts.sort_by(|a, b| a.0.total_cmp(&b.0));
            let mut best = 0.0f64;
            let mut window = 0.0;
            let mut hi = 0;
            for lo in 0..pts.len() {
                while hi < pts.len() && pts[hi].0 - pts[lo].0 <= 2.0 * r {
                    window += pts[hi].1;
                    hi += 1;
                }
                best = best.max(window);
                window -= pts[lo].1;
            }
            best.min(1.0)
        }
        InputMeasure::Discrete(d) => disk_sweep(d.points(), d.weights(), r).min(1.0),
        InputMeasure::Density(d) => {
            let (lo, hi) = d.interval();
            let window = |y: f64| d.interval_mass(y - r, y + r);
            let n = 2000;
            let step = (hi - lo) / n as f64;
            let (mut best_y, mut best) = (lo, window(lo));
            for k in 1..=n {
                let y = lo + step * k as f64;
                let v = window(y);
                if v > best {
                    best = v;
                    best_y = y;
                }
            }
            let (_, refined) = golden_section_max(
                window,
                (best_y - step).max(lo),
                (best_y + step).min(hi),
                60,
            );
            (best.max(refined) + CONCENTRATION_SLACK).min(1.0)
        }
    }
}

/// Maximum weight of a closed disk of radius `r`: some optimal disk has a point
/// on its boundary, so sweep the centers on each point's circle.
fn disk_sweep(points: &[Point], weights: &[f64], r: f64) -> f64 {
    let index = crate::neighbors::PointIndex::new(points, 2, 2.0 * r);
    let mut best = 0.0f64;
    let eps = 1e-12 * (1.0 + r);
    for (i, p) in points.iter().enumerate() {
        let mut events: Vec<(f64, i8, f64)> = Vec::new();
        let mut base = weights[i];
        index.for_each_candidate(p, |j| {
            if j == i {
                return;
            }
            let q = &points[j];
            let d = p.dist(q);
            if d > 2.0 * r + eps {
                return;
            }
            if d == 0.0 {
                base += weights[j];
                return;
            }
            let theta = (q.0[1] - p.0[1]).atan2(q.0[0] - p.0[0]);
            let alpha = (d / (2.0 * r)).min(1.0).acos();
            let (mut s, mut e) = (theta - alpha, theta + alpha);
            while s < -PI {
                s += 2.0 * PI;
                e += 2.0 * PI;
            }
            if e > PI {
                // Wraps around: covered on [s, π] and [-π, e - 2π].
                events.push((s, 1, weights[j]));
                events.push((PI, -1, weights[j]));
                events.push((-PI, 1, weights[j]));
                events.push((e - 2.0 * PI, -1, weights[j]));
            } else {
                events.push((s, 1, weights[j]));
                events.push((e, -1, weights[j]));
            }
        });
        // Entries before exits at equal angles: closed arcs.
        events.sort_by(|a, b| a.0.total_cmp(&b.0).then(b.1.cmp(&a.1)));
        let mut cur = base;
        best = best.max(cur);
        for (_, kind, w) in events {
            if kind > 0 {
                cur += w;
                best = best.max(cur);
            } else {
                cur -= w;
            }
        }
    }
    best
}

pub(crate) fn golden_section_max<F: FnMut(f64) -> f64>(mut f: F, mut a: f64, mut b: f64, steps: usize) -> (f64, f64) {
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    for _ in 0..steps {
        if fc >= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = f(d);
        }
    }
    if fc >= fd {
        (c, fc)
    } else {
        (d, fd)
    }
}

/// `C_d = ‖Cos²(|·|)‖_{L¹(ℝᵈ)}`.
pub fn cd_constant(d: usize) -> Result<f64> {
    static C2: OnceLock<f64> = OnceLock::new();
    match d {
        1 => Ok(FRAC_PI_2),
        2 => Ok(*C2.get_or_init(|| {
            let opts = QuadOptions {
                abs_tol: 1e-14,
                max_subdivisions: 1000,
            };
            let (v, _) = integrate_scalar(|r| r.cos().powi(2) * r, 0.0, FRAC_PI_2, &[], opts)
                .expect("smooth radial integrand");
            2.0 * PI * v
        })),
        other => Err(Error::UnsupportedDimension(other)),
    }
}

/// Optimal semi-coupling target for `HK²(m δ_x̄, ν)`: ν reweighted atomwise by
/// `Cos²(|x̄ − ·|/κ) √(m / ‖ν Cos²‖)`. Zero measure when ν is blind to x̄.
pub fn semicoupling_sigma(m: f64, xbar: &Point, nu: &ParticleMeasure, kappa: Kappa) -> Result<ParticleMeasure> {
    if !(m.is_finite() && m > 0.0) {
        return Err(Error::InvalidMeasure(format!("Dirac mass must be positive, got {m}")));
    }
    let overlap = kernel_mass(xbar, nu, kappa);
    if overlap == 0.0 {
        return Ok(ParticleMeasure::empty(nu.dim()));
    }
    let scale = (m / overlap).sqrt();
    let masses = nu
        .atoms()
        .map(|(p, w)| w * cos2_kernel(xbar, p, kappa) * scale)
        .collect();
    Ok(ParticleMeasure::new(nu.dim(), nu.positions().to_vec(), masses)?.without_empty())
}
