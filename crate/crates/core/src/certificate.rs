//! Dual potentials, the constraint function and certified duality gaps.
//!
//! A particle measure ν induces the potential `ψ(x) = 1 − √S(x)` and the
//! constraint function
//!
//! ```text
//! F(y) = ∫ Cos²(|x − y|/κ) / (1 − ψ(x)) dρ(x).
//! ```
//!
//! Rescaling `1 − ψ` by `s ≥ sup F` gives a feasible dual point, so
//! `1 − s ∫ √S dρ` is a lower bound on the optimal objective. The supremum
//! is bounded rigorously from grid values using the curvature estimate
//! `F'' ≥ −(2/κ²) ∫_{window} dρ/√S`, refined by branch and bound.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use serde::Serialize;

use crate::closed_form::golden_section_max;
use crate::error::{Error, Result};
use crate::measure::{cos2_kernel, Density1D, Domain, InputMeasure, Kappa, ParticleMeasure, Point};
use crate::neighbors::PointIndex;
use crate::objective::{kink_breakpoints, AtomIndex, Evaluator, ObjectiveValue, MAX_SUBDIVISIONS};
use crate::quadrature::{integrate_cumulative, integrate_scalar, Cumulative, QuadOptions};
use crate::sum::pairwise_sum;

/// Golden-section steps used to polish grid maxima.
pub const GOLDEN_STEPS: usize = 40;

/// `ψ(x) = 1 − √(Σ_j m_j Cos²(|x − y_j|/κ))`, represented by its generating atoms.
#[derive(Debug)]
pub struct DualPotential {
    generator: ParticleMeasure,
    kappa: Kappa,
    atoms: AtomIndex,
}

impl DualPotential {
    pub fn new(generator: ParticleMeasure, kappa: Kappa) -> Self {
        let atoms = AtomIndex::new(&generator, kappa);
        DualPotential {
            generator,
            kappa,
            atoms,
        }
    }

    pub fn generator(&self) -> &ParticleMeasure {
        &self.generator
    }

    pub fn kappa(&self) -> Kappa {
        self.kappa
    }

    /// `S(x) = (1 − ψ(x))²`.
    pub fn coverage(&self, x: &Point) -> f64 {
        let ys = self.generator.positions();
        let ms = self.generator.masses();
        let mut s = 0.0;
        self.atoms.for_each(x, |j| {
            if ms[j] > 0.0 {
                s += ms[j] * cos2_kernel(x, &ys[j], self.kappa);
            }
        });
        s
    }

    pub fn eval(&self, x: &Point) -> f64 {
        1.0 - self.coverage(x).sqrt()
    }
}

pub fn psi_eval(psi: &DualPotential, x: &Point) -> f64 {
    psi.eval(x)
}

/// Grid scan settings.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ScanOptions {
    /// Grid spacing δ.
    pub spacing: f64,
    /// Branch and bound stops once the certified bound is within this of the best value.
    pub slack: f64,
    /// Cap on extra F evaluations spent refining the bound.
    pub max_refinements: usize,
    /// Local maxima above this value are reported as violations.
    pub violation_threshold: f64,
}

impl ScanOptions {
    pub fn new(domain: &Domain, kappa: Kappa) -> Self {
        ScanOptions {
            spacing: default_spacing(domain, kappa),
            slack: 1e-10,
            max_refinements: 200_000,
            violation_threshold: 1.0,
        }
    }
}

/// Default scan spacing: `κ/1000` in 1D and `κ/20` in 2D, never below
/// `diam/10⁶` and with at most 1000 cells per axis in 2D.
pub fn default_spacing(domain: &Domain, kappa: Kappa) -> f64 {
    let floor = domain.diameter() / 1e6;
    match domain.dim() {
        1 => (kappa.get() / 1000.0).max(floor),
        _ => {
            let extent = domain.upper().sub(&domain.lower());
            (kappa.get() / 20.0).max(floor).max(extent.0[0].max(extent.0[1]) / 1000.0)
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ScanResult {
    pub max_f: f64,
    pub argmax: Point,
    /// Certified upper bound on `sup_y F(y)`.
    pub sup_bound: f64,
    pub grid_spacing: f64,
    /// Largest local curvature constant used in a cell bound.
    pub curvature_bound: f64,
    pub evaluations: usize,
    /// Local maxima of F above the violation threshold, largest first.
    pub violations: Vec<(Point, f64)>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CertificateReport {
    pub max_f: f64,
    pub argmax: Point,
    pub lipschitz_bound: f64,
    pub curvature_bound: f64,
    /// Certified upper bound on `sup F`.
    pub sup_bound: f64,
    /// Rescaling factor `s = max(1, sup_bound)`.
    pub scale: f64,
    /// `∫ ψ dρ` before rescaling.
    pub dual_value: f64,
    pub feasible_dual_value: f64,
    pub objective: f64,
    pub gap_bound: f64,
    pub grid_spacing: f64,
    pub evaluations: usize,
    /// Input locations where `ψ = 1` (empty when the certificate is finite).
    pub uncovered: Vec<Point>,
    pub violations: Vec<(Point, f64)>,
}

impl CertificateReport {
    pub fn is_finite(&self) -> bool {
        self.uncovered.is_empty()
    }
}

enum Kind<'a> {
    Discrete {
        points: &'a [Point],
        /// `λ_i / √S_i`, infinite for uncovered inputs.
        w: Vec<f64>,
        index: PointIndex,
    },
    Density {
        d: &'a Density1D,
        /// Closed uncovered intervals inside the support.
        gaps: Vec<(f64, f64)>,
    },
}

/// `F` for a fixed input measure and potential.
pub struct ConstraintFunction<'a> {
    rho: &'a InputMeasure,
    psi: &'a DualPotential,
    kind: Kind<'a>,
    uncovered: Vec<Point>,
}

impl<'a> ConstraintFunction<'a> {
    pub fn new(rho: &'a InputMeasure, psi: &'a DualPotential) -> Self {
        let coverage = rho
            .as_discrete()
            .map(|d| d.points().iter().map(|x| psi.coverage(x)).collect::<Vec<_>>());
        Self::build(rho, psi, coverage)
    }

    /// Reuses the coverage computed alongside an objective evaluation.
    fn with_objective(rho: &'a InputMeasure, psi: &'a DualPotential, obj: &ObjectiveValue) -> Self {
        let coverage = rho.as_discrete().map(|_| obj.coverage.clone());
        Self::build(rho, psi, coverage)
    }

    fn build(rho: &'a InputMeasure, psi: &'a DualPotential, coverage: Option<Vec<f64>>) -> Self {
        let r = psi.kappa.radius();
        match rho {
            InputMeasure::Discrete(d) => {
                let coverage = coverage.expect("discrete coverage");
                let mut uncovered = Vec::new();
                let w = coverage
                    .iter()
                    .zip(d.weights())
                    .zip(d.points())
                    .map(|((&s, &l), x)| {
                        if s > 0.0 {
                            l / s.sqrt()
                        } else {
                            uncovered.push(*x);
                            f64::INFINITY
                        }
                    })
                    .collect();
                ConstraintFunction {
                    rho,
                    psi,
                    kind: Kind::Discrete {
                        points: d.points(),
                        w,
                        index: PointIndex::new(d.points(), d.domain().dim(), r),
                    },
                    uncovered,
                }
            }
            InputMeasure::Density(d) => {
                let gaps = uncovered_intervals(d, psi.generator(), r);
                let uncovered = gaps
                    .iter()
                    .flat_map(|&(u, v)| {
                        let count = ((v - u) / (1.5 * r)).ceil().max(1.0) as usize;
                        (0..count).map(move |k| Point::new1(u + (k as f64 + 0.5) * (v - u) / count as f64))
                    })
                    .collect();
                ConstraintFunction {
                    rho,
                    psi,
                    kind: Kind::Density { d, gaps },
                    uncovered,
                }
            }
        }
    }

    /// Suggested insertion sites where the potential equals one on the support of ρ.
    pub fn uncovered(&self) -> &[Point] {
        &self.uncovered
    }

    fn kappa(&self) -> Kappa {
        self.psi.kappa
    }

    fn quad_options(d: &Density1D) -> QuadOptions {
        QuadOptions {
            abs_tol: d.tolerance(),
            max_subdivisions: MAX_SUBDIVISIONS,
        }
    }

    /// `F(y)`.
    pub fn value(&self, y: &Point) -> Result<f64> {
        let kappa = self.kappa();
        match &self.kind {
            Kind::Discrete { points, w, index } => {
                let mut acc = 0.0;
                let mut bad = None;
                index.for_each_candidate(y, |i| {
                    let k = cos2_kernel(&points[i], y, kappa);
                    if k > 0.0 {
                        if w[i].is_infinite() {
                            bad.get_or_insert(i);
                        } else {
                            acc += w[i] * k;
                        }
                    }
                });
                match bad {
                    Some(i) => Err(Error::UncoveredInput { point: points[i] }),
                    None => Ok(acc),
                }
            }
            Kind::Density { d, gaps } => {
                let r = kappa.radius();
                let yv = y.x();
                if let Some(&(u, v)) = gaps.iter().find(|&&(u, v)| u < yv + r && v > yv - r) {
                    return Err(Error::UncoveredInput {
                        point: Point::new1(yv.clamp(u, v)),
                    });
                }
                let (a, b) = d.interval();
                let lo = (yv - r).max(a);
                let hi = (yv + r).min(b);
                let breaks = kink_breakpoints(self.psi.generator(), kappa, &[]);
                let (v, _) = integrate_scalar(
                    |x| {
                        let xp = Point::new1(x);
                        let k = cos2_kernel(&xp, y, kappa);
                        let s = self.psi.coverage(&xp);
                        if k > 0.0 && s > 0.0 {
                            d.pdf(x) * k / s.sqrt()
                        } else {
                            0.0
                        }
                    },
                    lo,
                    hi,
                    &breaks,
                    Self::quad_options(d),
                )?;
                Ok(v)
            }
        }
    }

    /// `L̂ = (1/κ) ∫ dρ / (1 − ψ)`, a Lipschitz constant of F.
    pub fn lipschitz_bound(&self) -> Result<f64> {
        if let Some(p) = self.uncovered.first() {
            return Err(Error::UncoveredInput { point: *p });
        }
        let total = match &self.kind {
            Kind::Discrete { w, .. } => pairwise_sum(w),
            Kind::Density { d, .. } => {
                let (a, b) = d.interval();
                let breaks = kink_breakpoints(self.psi.generator(), self.kappa(), &[]);
                let (v, e) = integrate_scalar(|x| self.weight_density(d, x), a, b, &breaks, Self::quad_options(d))?;
                v + e
            }
        };
        Ok(total / self.kappa().get())
    }

    fn weight_density(&self, d: &Density1D, x: f64) -> f64 {
        let p = d.pdf(x);
        if p == 0.0 {
            return 0.0;
        }
        let s = self.psi.coverage(&Point::new1(x));
        if s > 0.0 {
            p / s.sqrt()
        } else {
            0.0
        }
    }

    /// Scans F on a regular grid over the domain and certifies its supremum.
    pub fn scan(&self, opts: &ScanOptions) -> Result<ScanResult> {
        if !(opts.spacing > 0.0 && opts.spacing.is_finite()) {
            return Err(Error::Config(format!("scan spacing must be positive, got {}", opts.spacing)));
        }
        if let Some(p) = self.uncovered.first() {
            return Err(Error::UncoveredInput { point: *p });
        }
        match self.rho.dim() {
            1 => self.scan_1d(opts),
            _ => self.scan_2d(opts),
        }
    }

    fn extra_candidates(&self) -> Vec<Point> {
        let mut pts: Vec<Point> = self.psi.generator().positions().to_vec();
        if let Kind::Discrete { points, .. } = &self.kind {
            pts.extend_from_slice(points);
        }
        pts
    }

    fn scan_1d(&self, opts: &ScanOptions) -> Result<ScanResult> {
        let domain = self.rho.domain();
        let (lo, hi) = (domain.lower().x(), domain.upper().x());
        let n = ((hi - lo) / opts.spacing).ceil().max(1.0) as usize;
        let h = (hi - lo) / n as f64;
        let ys: Vec<f64> = (0..=n).map(|k| if k == n { hi } else { lo + k as f64 * h }).collect();
        let kappa = self.kappa();
        let r = kappa.radius();
        let curv = 2.0 / (kappa.get() * kappa.get());

        // Grid values, per-cell window weights and an evaluation error bound.
        let (fs, cell_w, eval_err) = match &self.kind {
            Kind::Discrete { points, w, .. } => {
                let fs = ys.iter().map(|&y| self.value(&Point::new1(y))).collect::<Result<Vec<_>>>()?;
                let mut order: Vec<usize> = (0..points.len()).collect();
                order.sort_by(|&a, &b| points[a].x().total_cmp(&points[b].x()));
                let xs: Vec<f64> = order.iter().map(|&i| points[i].x()).collect();
                let mut prefix = vec![0.0; xs.len() + 1];
                for (k, &i) in order.iter().enumerate() {
                    prefix[k + 1] = prefix[k] + w[i];
                }
                let cell_w = ys
                    .windows(2)
                    .map(|c| {
                        let i0 = xs.partition_point(|&x| x < c[0] - r);
                        let i1 = xs.partition_point(|&x| x <= c[1] + r);
                        (prefix[i1] - prefix[i0]) * (1.0 + 1e-12)
                    })
                    .collect();
                let fmax = fs.iter().fold(1.0f64, |m, &f| m.max(f));
                (fs, cell_w, 1e-14 * fmax)
            }
            Kind::Density { d, .. } => self.density_grid(d, &ys)?,
        };

        let mut best = (f64::NEG_INFINITY, 0.0);
        for (&y, &f) in ys.iter().zip(&fs) {
            if f > best.0 {
                best = (f, y);
            }
        }
        let mut evaluations = ys.len();
        for p in self.extra_candidates() {
            if p.x() >= lo && p.x() <= hi {
                let f = self.value(&p)?;
                evaluations += 1;
                if f > best.0 || (f == best.0 && p.x() < best.1) {
                    best = (f, p.x());
                }
            }
        }

        let mut heap = BinaryHeap::new();
        let mut cells = Vec::with_capacity(n);
        let mut curvature_bound = 0.0f64;
        for k in 0..n {
            let m = curv * cell_w[k];
            curvature_bound = curvature_bound.max(m);
            let c = Cell1 {
                a: ys[k],
                b: ys[k + 1],
                fa: fs[k],
                fb: fs[k + 1],
                m,
            };
            heap.push(Ranked(c.bound(eval_err), cells.len()));
            cells.push(c);
        }
        let mut refinements = 0;
        while let Some(&Ranked(ub, id)) = heap.peek() {
            if ub <= best.0 + opts.slack || refinements >= opts.max_refinements {
                break;
            }
            heap.pop();
            let c = cells[id];
            let mid = 0.5 * (c.a + c.b);
            if mid <= c.a || mid >= c.b {
                // Cannot split; keep the bound as is.
                heap.push(Ranked(c.fa.max(c.fb) + eval_err, id));
                cells[id].m = 0.0;
                continue;
            }
            let fm = self.value(&Point::new1(mid))?;
            refinements += 1;
            if fm > best.0 {
                best = (fm, mid);
            }
            let left = Cell1 { b: mid, fb: fm, ..c };
            let right = Cell1 { a: mid, fa: fm, ..c };
            cells[id] = left;
            heap.push(Ranked(left.bound(eval_err), id));
            heap.push(Ranked(right.bound(eval_err), cells.len()));
            cells.push(right);
        }
        let mut sup_bound = heap.peek().map_or(best.0, |r| r.0).max(best.0);

        let mut eval_error = None;
        let mut f1 = |y: f64| match self.value(&Point::new1(y)) {
            Ok(v) => v,
            Err(e) => {
                eval_error.get_or_insert(e);
                f64::NEG_INFINITY
            }
        };
        let (gy, gf) = golden_section_max(&mut f1, (best.1 - h).max(lo), (best.1 + h).min(hi), GOLDEN_STEPS);
        evaluations += GOLDEN_STEPS + 2;
        if gf > best.0 {
            best = (gf, gy);
        }

        // Grid local maxima above the threshold (leftmost point of a plateau).
        let mut peaks: Vec<usize> = (0..fs.len())
            .filter(|&k| {
                fs[k] > opts.violation_threshold
                    && (k == 0 || fs[k] > fs[k - 1])
                    && (k + 1 == fs.len() || fs[k] >= fs[k + 1])
            })
            .collect();
        peaks.sort_by(|&a, &b| fs[b].total_cmp(&fs[a]).then(a.cmp(&b)));
        peaks.truncate(64);
        let mut violations: Vec<(Point, f64)> = Vec::with_capacity(peaks.len() + 1);
        for k in peaks {
            let (py, pf) = golden_section_max(&mut f1, (ys[k] - h).max(lo), (ys[k] + h).min(hi), GOLDEN_STEPS);
            evaluations += GOLDEN_STEPS + 2;
            let (py, pf) = if pf >= fs[k] { (py, pf) } else { (ys[k], fs[k]) };
            violations.push((Point::new1(py), pf));
        }
        if let Some(e) = eval_error {
            return Err(e);
        }
        if best.0 > opts.violation_threshold && violations.iter().all(|(p, _)| (p.x() - best.1).abs() > h) {
            violations.push((Point::new1(best.1), best.0));
        }
        sort_violations(&mut violations);
        sup_bound = sup_bound.max(best.0);
        Ok(ScanResult {
            max_f: best.0,
            argmax: Point::new1(best.1),
            sup_bound,
            grid_spacing: h,
            curvature_bound,
            evaluations: evaluations + refinements,
            violations,
        })
    }

    /// F at the grid nodes through the decomposition
    /// `Cos²(t) = (1 + cos 2t)/2`, so that one cumulative integral of
    /// `g = p/√S` times `{1, cos(2x/κ), sin(2x/κ)}` serves every node.
    fn density_grid(&self, d: &Density1D, ys: &[f64]) -> Result<(Vec<f64>, Vec<f64>, f64)> {
        let kappa = self.kappa();
        let r = kappa.radius();
        let two_over_k = 2.0 / kappa.get();
        let (a, b) = d.interval();
        let clamp = |t: f64| t.clamp(a, b);
        let windows: Vec<f64> = ys.iter().flat_map(|&y| [clamp(y - r), clamp(y + r)]).collect();
        let nodes = kink_breakpoints(self.psi.generator(), kappa, &windows);
        let cum: Cumulative = integrate_cumulative(
            |x, out| {
                let g = self.weight_density(d, x);
                let (s, c) = (two_over_k * x).sin_cos();
                out[0] = g;
                out[1] = g * c;
                out[2] = g * s;
            },
            3,
            a,
            b,
            &nodes,
            Self::quad_options(d),
        )?;
        let node = |t: f64| cum.node_index(clamp(t)).expect("window end is a node");
        let mut fs = Vec::with_capacity(ys.len());
        for &y in ys {
            let (k0, k1) = (node(y - r), node(y + r));
            let g: [f64; 3] = std::array::from_fn(|c| cum.at(k1, c) - cum.at(k0, c));
            let (s, c) = (two_over_k * y).sin_cos();
            fs.push(0.5 * (g[0] + c * g[1] + s * g[2]));
        }
        let cell_w = ys
            .windows(2)
            .map(|c| cum.at(node(c[1] + r), 0) - cum.at(node(c[0] - r), 0) + 2.0 * cum.error)
            .collect();
        Ok((fs, cell_w, (3.0 * cum.error).max(d.tolerance())))
    }

    fn scan_2d(&self, opts: &ScanOptions) -> Result<ScanResult> {
        let Kind::Discrete { points, w, .. } = &self.kind else {
            return Err(Error::UnsupportedDimension(2));
        };
        let domain = self.rho.domain();
        let (lo, hi) = (domain.lower(), domain.upper());
        let nx = ((hi.0[0] - lo.0[0]) / opts.spacing).ceil().max(1.0) as usize;
        let ny = ((hi.0[1] - lo.0[1]) / opts.spacing).ceil().max(1.0) as usize;
        let hx = (hi.0[0] - lo.0[0]) / nx as f64;
        let hy = (hi.0[1] - lo.0[1]) / ny as f64;
        let gx: Vec<f64> = (0..=nx).map(|k| if k == nx { hi.0[0] } else { lo.0[0] + k as f64 * hx }).collect();
        let gy: Vec<f64> = (0..=ny).map(|k| if k == ny { hi.0[1] } else { lo.0[1] + k as f64 * hy }).collect();
        let at = |i: usize, j: usize| j * (nx + 1) + i;
        let mut fs = vec![0.0; (nx + 1) * (ny + 1)];
        for j in 0..=ny {
            for i in 0..=nx {
                fs[at(i, j)] = self.value(&Point::new2(gx[i], gy[j]))?;
            }
        }
        let kappa = self.kappa();
        let curv = 2.0 / (kappa.get() * kappa.get());
        let fmax = fs.iter().fold(1.0f64, |m, &f| m.max(f));
        let eval_err = 1e-14 * fmax;

        let mut best = (f64::NEG_INFINITY, Point::default());
        let consider = |f: f64, p: Point, best: &mut (f64, Point)| {
            if f > best.0 || (f == best.0 && p.lex_cmp(&best.1) == Ordering::Less) {
                *best = (f, p);
            }
        };
        for j in 0..=ny {
            for i in 0..=nx {
                consider(fs[at(i, j)], Point::new2(gx[i], gy[j]), &mut best);
            }
        }
        let mut evaluations = fs.len();
        for p in self.extra_candidates() {
            if domain.contains(&p) {
                consider(self.value(&p)?, p, &mut best);
                evaluations += 1;
            }
        }

        let half_diag = 0.5 * hx.hypot(hy);
        let wide = PointIndex::new(points, 2, kappa.radius() + half_diag);
        let window_weight = |c: &Point, reach: f64| {
            let mut acc = 0.0;
            wide.for_each_candidate(c, |i| {
                if points[i].dist(c) <= reach {
                    acc += w[i];
                }
            });
            acc * (1.0 + 1e-12)
        };
        let mut heap = BinaryHeap::new();
        let mut cells = Vec::with_capacity(nx * ny);
        let mut curvature_bound = 0.0f64;
        for j in 0..ny {
            for i in 0..nx {
                let center = Point::new2(0.5 * (gx[i] + gx[i + 1]), 0.5 * (gy[j] + gy[j + 1]));
                let m = curv * window_weight(&center, kappa.radius() + half_diag);
                curvature_bound = curvature_bound.max(m);
                let c = Cell2 {
                    lo: Point::new2(gx[i], gy[j]),
                    hi: Point::new2(gx[i + 1], gy[j + 1]),
                    f: [fs[at(i, j)], fs[at(i + 1, j)], fs[at(i, j + 1)], fs[at(i + 1, j + 1)]],
                    m,
                };
                heap.push(Ranked(c.bound(eval_err), cells.len()));
                cells.push(c);
            }
        }
        let mut refinements = 0;
        while let Some(&Ranked(ub, id)) = heap.peek() {
            if ub <= best.0 + opts.slack || refinements >= opts.max_refinements {
                break;
            }
            heap.pop();
            let c = cells[id];
            let (x0, y0, x1, y1) = (c.lo.0[0], c.lo.0[1], c.hi.0[0], c.hi.0[1]);
            let (xm, ym) = (0.5 * (x0 + x1), 0.5 * (y0 + y1));
            if xm <= x0 || xm >= x1 || ym <= y0 || ym >= y1 {
                heap.push(Ranked(c.f.iter().fold(f64::NEG_INFINITY, |m, &v| m.max(v)) + eval_err, id));
                cells[id].m = 0.0;
                continue;
            }
            let mut eval = |x: f64, y: f64| -> Result<f64> {
                let p = Point::new2(x, y);
                let f = self.value(&p)?;
                consider(f, p, &mut best);
                Ok(f)
            };
            let fb = eval(xm, y0)?;
            let ft = eval(xm, y1)?;
            let fl = eval(x0, ym)?;
            let fr = eval(x1, ym)?;
            let fc = eval(xm, ym)?;
            refinements += 5;
            let [f00, f10, f01, f11] = c.f;
            let kids = [
                Cell2 { lo: c.lo, hi: Point::new2(xm, ym), f: [f00, fb, fl, fc], m: c.m },
                Cell2 { lo: Point::new2(xm, y0), hi: Point::new2(x1, ym), f: [fb, f10, fc, fr], m: c.m },
                Cell2 { lo: Point::new2(x0, ym), hi: Point::new2(xm, y1), f: [fl, fc, f01, ft], m: c.m },
                Cell2 { lo: Point::new2(xm, ym), hi: c.hi, f: [fc, fr, ft, f11], m: c.m },
            ];
            cells[id] = kids[0];
            heap.push(Ranked(kids[0].bound(eval_err), id));
            for k in &kids[1..] {
                heap.push(Ranked(k.bound(eval_err), cells.len()));
                cells.push(*k);
            }
        }
        let sup_bound = heap.peek().map_or(best.0, |r| r.0).max(best.0);

        let mut eval_error = None;
        let mut f2 = |p: Point| match self.value(&p) {
            Ok(v) => v,
            Err(e) => {
                eval_error.get_or_insert(e);
                f64::NEG_INFINITY
            }
        };
        let mut polish = |p: Point, f: f64, evaluations: &mut usize| -> (Point, f64) {
            let (mut p, mut f) = (p, f);
            for _ in 0..3 {
                for axis in 0..2 {
                    let step = if axis == 0 { hx } else { hy };
                    let a = (p.0[axis] - step).max(lo.0[axis]);
                    let b = (p.0[axis] + step).min(hi.0[axis]);
                    let (t, v) = golden_section_max(
                        |t| {
                            let mut q = p;
                            q.0[axis] = t;
                            f2(q)
                        },
                        a,
                        b,
                        GOLDEN_STEPS,
                    );
                    *evaluations += GOLDEN_STEPS + 2;
                    if v > f {
                        p.0[axis] = t;
                        f = v;
                    }
                }
            }
            (p, f)
        };
        let polished = polish(best.1, best.0, &mut evaluations);
        if polished.1 > best.0 {
            best = (polished.1, polished.0);
        }

        let mut peaks: Vec<(usize, usize)> = Vec::new();
        for j in 0..=ny {
            for i in 0..=nx {
                let f = fs[at(i, j)];
                if f <= opts.violation_threshold {
                    continue;
                }
                let mut is_peak = true;
                for (di, dj) in [(-1i64, -1i64), (0, -1), (1, -1), (-1, 0), (1, 0), (-1, 1), (0, 1), (1, 1)] {
                    let (ii, jj) = (i as i64 + di, j as i64 + dj);
                    if ii < 0 || jj < 0 || ii > nx as i64 || jj > ny as i64 {
                        continue;
                    }
                    let g = fs[at(ii as usize, jj as usize)];
                    // Earlier neighbors must be strictly lower so plateaus yield one peak.
                    let earlier = dj < 0 || (dj == 0 && di < 0);
                    if g > f || (earlier && g == f) {
                        is_peak = false;
                        break;
                    }
                }
                if is_peak {
                    peaks.push((i, j));
                }
            }
        }
        peaks.sort_by(|&a, &b| fs[at(b.0, b.1)].total_cmp(&fs[at(a.0, a.1)]).then(a.1.cmp(&b.1)).then(a.0.cmp(&b.0)));
        peaks.truncate(64);
        let mut violations = Vec::with_capacity(peaks.len() + 1);
        for (i, j) in peaks {
            violations.push(polish(Point::new2(gx[i], gy[j]), fs[at(i, j)], &mut evaluations));
        }
        if let Some(e) = eval_error {
            return Err(e);
        }
        if best.0 > opts.violation_threshold && violations.iter().all(|(p, _)| p.dist(&best.1) > half_diag) {
            violations.push((best.1, best.0));
        }
        sort_violations(&mut violations);
        Ok(ScanResult {
            max_f: best.0,
            argmax: best.1,
            sup_bound: sup_bound.max(best.0),
            grid_spacing: hx.max(hy),
            curvature_bound,
            evaluations: evaluations + refinements,
            violations,
        })
    }
}

fn sort_violations(v: &mut [(Point, f64)]) {
    v.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.lex_cmp(&b.0)));
}

/// Closed subintervals of the density's integration interval not covered
/// by any open disk `(y_j − κπ/2, y_j + κπ/2)` of a positive-mass atom.
fn uncovered_intervals(d: &Density1D, nu: &ParticleMeasure, r: f64) -> Vec<(f64, f64)> {
    let (a, b) = d.interval();
    let mut disks: Vec<(f64, f64)> = nu
        .atoms()
        .filter(|(_, m)| *m > 0.0)
        .map(|(p, _)| (p.x() - r, p.x() + r))
        .collect();
    disks.sort_by(|s, t| s.0.total_cmp(&t.0));
    let mut gaps = Vec::new();
    // [a, reach) is covered; `reach` itself is not.
    let mut reach = a;
    for (s, e) in disks {
        if e <= reach {
            continue;
        }
        if s >= reach && reach <= b {
            gaps.push((reach, s.min(b)));
        }
        reach = e;
    }
    if reach <= b {
        gaps.push((reach, b));
    }
    gaps
}

#[derive(Clone, Copy, Debug)]
struct Cell1 {
    a: f64,
    b: f64,
    fa: f64,
    fb: f64,
    m: f64,
}

impl Cell1 {
    /// With `F'' ≥ −m`, F exceeds its chord by at most `m h²/8`.
    fn bound(&self, err: f64) -> f64 {
        let h = self.b - self.a;
        self.fa.max(self.fb) + self.m * h * h / 8.0 + err
    }
}

#[derive(Clone, Copy, Debug)]
struct Cell2 {
    lo: Point,
    hi: Point,
    /// Corner values: (lo,lo), (hi,lo), (lo,hi), (hi,hi).
    f: [f64; 4],
    m: f64,
}

impl Cell2 {
    /// `F + (m/2)|y − c|²` is convex, so it peaks at a corner.
    fn bound(&self, err: f64) -> f64 {
        let d = self.hi.sub(&self.lo);
        let fmax = self.f.iter().fold(f64::NEG_INFINITY, |m, &v| m.max(v));
        fmax + self.m * (d.0[0] * d.0[0] + d.0[1] * d.0[1]) / 8.0 + err
    }
}

#[derive(PartialEq)]
struct Ranked(f64, usize);

impl Eq for Ranked {}

impl PartialOrd for Ranked {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Ranked {
    fn cmp(&self, other: &Self) -> Ordering {
        self.0.total_cmp(&other.0).then(other.1.cmp(&self.1))
    }
}

pub fn constraint_f(rho: &InputMeasure, psi: &DualPotential, y: &Point) -> Result<f64> {
    ConstraintFunction::new(rho, psi).value(y)
}

pub fn lipschitz_bound(rho: &InputMeasure, psi: &DualPotential) -> Result<f64> {
    ConstraintFunction::new(rho, psi).lipschitz_bound()
}

pub fn scan_max_f(rho: &InputMeasure, psi: &DualPotential, delta: f64) -> Result<ScanResult> {
    let opts = ScanOptions {
        spacing: delta,
        ..ScanOptions::new(rho.domain(), psi.kappa())
    };
    ConstraintFunction::new(rho, psi).scan(&opts)
}

/// Certificate for ν with grid spacing `delta` and default refinement settings.
pub fn certify(rho: &InputMeasure, nu: &ParticleMeasure, kappa: Kappa, delta: f64) -> Result<CertificateReport> {
    let opts = ScanOptions {
        spacing: delta,
        ..ScanOptions::new(rho.domain(), kappa)
    };
    certify_with(&Evaluator::new(rho, kappa), nu, &opts)
}

pub fn certify_with(eval: &Evaluator, nu: &ParticleMeasure, opts: &ScanOptions) -> Result<CertificateReport> {
    let rho = eval.rho();
    let obj = eval.objective(nu)?;
    let psi = DualPotential::new(nu.clone(), eval.kappa());
    let cf = ConstraintFunction::with_objective(rho, &psi, &obj);
    let dual_value = 1.0 - obj.sqrt_coverage;
    if let Some(&first) = cf.uncovered().first() {
        return Ok(CertificateReport {
            max_f: f64::INFINITY,
            argmax: first,
            lipschitz_bound: f64::INFINITY,
            curvature_bound: f64::INFINITY,
            sup_bound: f64::INFINITY,
            scale: f64::INFINITY,
            dual_value,
            feasible_dual_value: f64::NEG_INFINITY,
            objective: obj.value,
            gap_bound: f64::INFINITY,
            grid_spacing: opts.spacing,
            evaluations: 0,
            uncovered: cf.uncovered().to_vec(),
            violations: cf.uncovered().iter().map(|p| (*p, f64::INFINITY)).collect(),
        });
    }
    let scan = cf.scan(opts)?;
    let lipschitz = cf.lipschitz_bound()?;
    let scale = scan.sup_bound.max(1.0);
    let q = obj.quadrature_error;
    // Quadrature error enters both the dual integral and the objective.
    let feasible = 1.0 - scale * (obj.sqrt_coverage + q) - 2.0 * q;
    Ok(CertificateReport {
        max_f: scan.max_f,
        argmax: scan.argmax,
        lipschitz_bound: lipschitz,
        curvature_bound: scan.curvature_bound,
        sup_bound: scan.sup_bound,
        scale,
        dual_value,
        feasible_dual_value: feasible,
        objective: obj.value,
        gap_bound: obj.value - feasible,
        grid_spacing: scan.grid_spacing,
        evaluations: scan.evaluations,
        uncovered: Vec::new(),
        violations: scan.violations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::closed_form::hellinger_barycenter;
    use crate::measure::DiscreteMeasure;

    fn k(v: f64) -> Kappa {
        Kappa::new(v).unwrap()
    }

    fn four_mass() -> InputMeasure {
        DiscreteMeasure::from_atoms_1d(&[(0.0, 0.4), (0.4, 0.1), (0.6, 0.1), (1.0, 0.4)])
            .unwrap()
            .into()
    }

    fn delta0() -> InputMeasure {
        DiscreteMeasure::from_atoms_1d(&[(0.0, 1.0)]).unwrap().into()
    }

    #[test]
    fn psi_examples() {
        let psi = DualPotential::new(ParticleMeasure::from_atoms_1d(&[(0.0, 1.0)]).unwrap(), k(1.0));
        assert_eq!(psi_eval(&psi, &Point::new1(0.0)), 0.0);
        assert_eq!(psi_eval(&psi, &Point::new1(std::f64::consts::FRAC_PI_2)), 1.0);
        let psi = DualPotential::new(ParticleMeasure::from_atoms_1d(&[(0.0, 0.25)]).unwrap(), k(1.0));
        assert_eq!(psi_eval(&psi, &Point::new1(0.0)), 0.5);
    }

    #[test]
    fn single_dirac_constraint() {
        let rho = delta0();
        let psi = DualPotential::new(ParticleMeasure::from_atoms_1d(&[(0.0, 1.0)]).unwrap(), k(1.0));
        for y in [0.0, 0.3, 1.0] {
            let f = constraint_f(&rho, &psi, &Point::new1(y)).unwrap();
            assert!((f - y.cos().powi(2)).abs() < 1e-15);
        }
        assert_eq!(lipschitz_bound(&rho, &psi).unwrap(), 1.0);
        let scan = scan_max_f(&rho, &psi, 0.01).unwrap();
        assert_eq!(scan.max_f, 1.0);
        assert_eq!(scan.argmax, Point::new1(0.0));
    }

    #[test]
    fn four_mass_hellinger_solution() {
        let rho = four_mass();
        let nu = hellinger_barycenter(&rho);
        let psi = DualPotential::new(nu.clone(), k(0.08));
        let f_mid = constraint_f(&rho, &psi, &Point::new1(0.5)).unwrap();
        // Two symmetric terms λ Cos²(0.1/0.08) / 0.1 with λ = 0.1.
        let want = 2.0 * 1.25f64.cos().powi(2);
        assert!((f_mid - want).abs() < 1e-14);
        assert!((want - 0.198_856_384_453_066_3).abs() < 1e-15);
        for x in [0.0, 0.4, 0.6, 1.0] {
            assert!((constraint_f(&rho, &psi, &Point::new1(x)).unwrap() - 1.0).abs() < 1e-15);
        }
        assert!((lipschitz_bound(&rho, &psi).unwrap() - 50.0).abs() < 1e-12);

        let report = certify(&rho, &nu, k(0.08), 1e-4).unwrap();
        assert!((report.max_f - 1.0).abs() < 1e-8);
        assert!(report.gap_bound <= 1e-8, "gap {}", report.gap_bound);
        assert!(report.gap_bound >= -1e-12);
        assert!(report.violations.is_empty());
    }

    #[test]
    fn missing_cluster_is_uncovered() {
        let rho = four_mass();
        let nu = ParticleMeasure::from_atoms_1d(&[(0.0, 0.16), (0.4, 0.01), (0.6, 0.01)]).unwrap();
        let psi = DualPotential::new(nu.clone(), k(0.08));
        let err = constraint_f(&rho, &psi, &Point::new1(0.98)).unwrap_err();
        assert_eq!(err, Error::UncoveredInput { point: Point::new1(1.0) });
        let report = certify(&rho, &nu, k(0.08), 1e-3).unwrap();
        assert!(report.max_f.is_infinite());
        assert_eq!(report.uncovered, vec![Point::new1(1.0)]);
    }

    #[test]
    fn undersized_cluster_reports_violation_near_it() {
        let rho = four_mass();
        let nu = ParticleMeasure::from_atoms_1d(&[(0.0, 0.16), (0.4, 0.01), (0.6, 0.01), (1.0, 0.04)]).unwrap();
        let report = certify(&rho, &nu, k(0.08), 1e-4).unwrap();
        assert!(report.max_f > 1.0);
        let (p, f) = report.violations[0];
        assert!((p.x() - 1.0).abs() < 1e-6);
        assert!((f - 2.0).abs() < 1e-9);
        assert!(report.gap_bound >= 0.0);
    }

    #[test]
    fn rescaling_formula() {
        let rho = four_mass();
        let nu = ParticleMeasure::from_atoms_1d(&[(0.0, 0.16), (0.4, 0.01), (0.6, 0.01), (1.0, 0.04)]).unwrap();
        let r = certify(&rho, &nu, k(0.08), 1e-4).unwrap();
        let expected = 1.0 - r.scale * (1.0 - r.dual_value);
        assert!((r.feasible_dual_value - expected).abs() < 1e-15);
        assert!(r.feasible_dual_value <= r.objective);
    }

    #[test]
    fn rescaled_potential_divides_f() {
        let rho = four_mass();
        let nu = ParticleMeasure::from_atoms_1d(&[(0.05, 0.1), (0.5, 0.05), (0.95, 0.2)]).unwrap();
        let psi = DualPotential::new(nu.clone(), k(0.3));
        let s = 1.7;
        let psi2 = DualPotential::new(nu.scaled(s * s), k(0.3));
        for y in [0.0, 0.2, 0.5, 0.77] {
            let y = Point::new1(y);
            let f1 = constraint_f(&rho, &psi, &y).unwrap();
            let f2 = constraint_f(&rho, &psi2, &y).unwrap();
            assert!((f2 - f1 / s).abs() < 1e-14);
        }
    }

    #[test]
    fn sup_bound_dominates_dense_evaluation() {
        let rho: InputMeasure =
            DiscreteMeasure::from_atoms_1d(&[(0.1, 0.2), (0.25, 0.3), (0.5, 0.1), (0.8, 0.4)]).unwrap().into();
        let nu = ParticleMeasure::from_atoms_1d(&[(0.15, 0.2), (0.7, 0.3)]).unwrap();
        let psi = DualPotential::new(nu, k(0.2));
        let scan = scan_max_f(&rho, &psi, 0.01).unwrap();
        let dense = (0..=200_000)
            .map(|i| constraint_f(&rho, &psi, &Point::new1(i as f64 / 200_000.0)).unwrap())
            .fold(f64::NEG_INFINITY, f64::max);
        // The dense grid only bounds the supremum from below.
        assert!(scan.sup_bound >= dense);
        assert!(scan.max_f >= dense - 1e-12);
        assert!(scan.sup_bound - scan.max_f <= 1e-9);
        assert_eq!(constraint_f(&rho, &psi, &scan.argmax).unwrap(), scan.max_f);
    }

    #[test]
    fn uncovered_interval_detection() {
        let d = Density1D::uniform(0.0, 1.0, 1e-10).unwrap();
        let r = 0.125;
        let nu = ParticleMeasure::from_atoms_1d(&[(0.125, 1.0), (0.375, 1.0), (0.75, 0.5), (0.9, 0.0)]).unwrap();
        let gaps = uncovered_intervals(&d, &nu, r);
        // Disks (0, 0.25), (0.25, 0.5), (0.625, 0.875): 0 and 0.25 are boundary points.
        assert_eq!(gaps, vec![(0.0, 0.0), (0.25, 0.25), (0.5, 0.625), (0.875, 1.0)]);
        let full = ParticleMeasure::from_atoms_1d(&[(0.05, 1.0), (0.2, 1.0), (0.35, 1.0), (0.5, 1.0), (0.65, 1.0), (0.8, 1.0), (0.95, 1.0)]).unwrap();
        assert!(uncovered_intervals(&d, &full, r).is_empty());
    }

    #[test]
    fn density_grid_agrees_with_direct_quadrature() {
        let rho: InputMeasure = Density1D::uniform(0.0, 1.0, 1e-11).unwrap().into();
        let nu = ParticleMeasure::from_atoms_1d(&[(0.1, 0.2), (0.4, 0.25), (0.75, 0.3)]).unwrap();
        let psi = DualPotential::new(nu, k(0.2));
        let cf = ConstraintFunction::new(&rho, &psi);
        let InputMeasure::Density(d) = &rho else { unreachable!() };
        let ys: Vec<f64> = (0..=50).map(|i| i as f64 / 50.0).collect();
        let (fs, _, err) = cf.density_grid(d, &ys).unwrap();
        assert!(err < 1e-9);
        for (y, f) in ys.iter().zip(fs) {
            let direct = cf.value(&Point::new1(*y)).unwrap();
            assert!((f - direct).abs() < 1e-9, "y={y}: {f} vs {direct}");
        }
    }

    #[test]
    fn uniform_single_atom_optimum_is_certified() {
        let rho: InputMeasure = Density1D::uniform(0.0, 1.0, 1e-12).unwrap().into();
        let m = (2.0 * 0.5f64.sin()).powi(2);
        let nu = ParticleMeasure::from_atoms_1d(&[(0.5, m)]).unwrap();
        let r = certify(&rho, &nu, k(1.0), 1e-3).unwrap();
        assert!((r.max_f - 1.0).abs() < 1e-9);
        assert!(r.gap_bound < 1e-8, "gap {}", r.gap_bound);
    }

    #[test]
    fn two_dimensional_scan_bounds_dense_grid() {
        let pts = vec![Point::new2(0.2, 0.2), Point::new2(0.7, 0.3), Point::new2(0.5, 0.8)];
        let rho: InputMeasure = DiscreteMeasure::new(Domain::unit_square(), pts, vec![0.3, 0.3, 0.4]).unwrap().into();
        let nu = ParticleMeasure::new(2, vec![Point::new2(0.3, 0.25), Point::new2(0.5, 0.7)], vec![0.2, 0.3]).unwrap();
        let psi = DualPotential::new(nu, k(0.4));
        let scan = scan_max_f(&rho, &psi, 0.05).unwrap();
        let n = 600;
        let mut dense = f64::NEG_INFINITY;
        for i in 0..=n {
            for j in 0..=n {
                let y = Point::new2(i as f64 / n as f64, j as f64 / n as f64);
                dense = dense.max(constraint_f(&rho, &psi, &y).unwrap());
            }
        }
        assert!(scan.sup_bound >= dense);
        assert!(scan.max_f >= dense - 1e-12);
        assert!(scan.sup_bound - scan.max_f <= 1e-9, "{} vs {}", scan.sup_bound, scan.max_f);
        assert_eq!(constraint_f(&rho, &psi, &scan.argmax).unwrap(), scan.max_f);
    }
}
