//! The barycenter objective
//!
//! ```text
//! J(ν) = 1 + Σ_j m_j − 2 ∫ √S(x) dρ(x),     S(x) = Σ_j m_j Cos²(|x − y_j|/κ)
//! ```
//!
//! and its exact gradient in masses and positions. Discrete ρ gives finite
//! sums; a 1D density is integrated with adaptive Gauss–Kronrod quadrature
//! whose partition is seeded at every kernel kink `y_j ± κπ/2`.

use crate::error::{Error, Result};
use crate::measure::{kernel_and_grad, Density1D, DiscreteMeasure, InputMeasure, Kappa, ParticleMeasure, Point};
use crate::neighbors::PointIndex;
use crate::quadrature::{integrate, integrate_unchecked, QuadOptions, QuadResult};
use crate::sum::{pairwise_sum, pairwise_sum_by};

/// Upper limit on adaptive subdivisions for density integrals.
pub const MAX_SUBDIVISIONS: usize = 10_000;

/// Quadrature tolerance of [`Evaluator::objective_delta`] relative to the
/// magnitude of the change.
const DELTA_REL_TOL: f64 = 1e-13;

/// One atom of a perturbed measure: mass `from_mass` at `from` becomes
/// `to_mass` at `to`. A zero `from_mass` inserts an atom, a zero `to_mass`
/// removes one.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AtomMove {
    pub from: Point,
    pub from_mass: f64,
    pub to: Point,
    pub to_mass: f64,
}

impl AtomMove {
    /// Contribution of this move to `S(x)`.
    fn coverage_change(&self, x: &Point, kappa: Kappa) -> f64 {
        let dm = self.to_mass - self.from_mass;
        let grow = if dm != 0.0 {
            dm * crate::measure::cos2_kernel(x, &self.to, kappa)
        } else {
            0.0
        };
        let shift = if self.from_mass != 0.0 && self.from != self.to {
            self.from_mass * kernel_difference(x, &self.from, &self.to, kappa)
        } else {
            0.0
        };
        grow + shift
    }
}

/// `Cos²(|x − to|/κ) − Cos²(|x − from|/κ)` without cancellation:
/// `sin(a + b) sin(a − b)` with `a − b = (to − from)·(u + v) / (κ (|u| + |v|))`
/// for `u = x − from`, `v = x − to`.
pub(crate) fn kernel_difference(x: &Point, from: &Point, to: &Point, kappa: Kappa) -> f64 {
    let k = kappa.get();
    let (u, v) = (x.sub(from), x.sub(to));
    let (a, b) = (u.norm() / k, v.norm() / k);
    if a >= std::f64::consts::FRAC_PI_2 || b >= std::f64::consts::FRAC_PI_2 {
        return crate::measure::cos2_kernel(x, to, kappa) - crate::measure::cos2_kernel(x, from, kappa);
    }
    let sum = u.norm() + v.norm();
    if sum == 0.0 {
        return 0.0;
    }
    let step = to.sub(from);
    let dot = step.0[0] * (u.0[0] + v.0[0]) + step.0[1] * (u.0[1] + v.0[1]);
    (a + b).sin() * (dot / (sum * k)).sin()
}

#[derive(Clone, Debug, PartialEq)]
pub struct ObjectiveValue {
    pub value: f64,
    /// `S_i` for each input point of a discrete ρ; empty for densities.
    pub coverage: Vec<f64>,
    /// `∫ √S dρ`, so that `∫ ψ dρ = 1 − sqrt_coverage` for the induced potential.
    pub sqrt_coverage: f64,
    /// Quadrature error estimate (zero for discrete ρ).
    pub quadrature_error: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Gradient {
    pub d_mass: Vec<f64>,
    pub d_pos: Vec<Point>,
}

/// Objective evaluator with a prebuilt neighbor index over the input points.
#[derive(Clone, Debug)]
pub struct Evaluator<'a> {
    rho: &'a InputMeasure,
    kappa: Kappa,
    rho_index: Option<PointIndex>,
}

impl<'a> Evaluator<'a> {
    pub fn new(rho: &'a InputMeasure, kappa: Kappa) -> Self {
        let rho_index = rho
            .as_discrete()
            .map(|d| PointIndex::new(d.points(), d.domain().dim(), kappa.radius()));
        Evaluator { rho, kappa, rho_index }
    }

    pub fn rho(&self) -> &'a InputMeasure {
        self.rho
    }

    pub fn kappa(&self) -> Kappa {
        self.kappa
    }

    pub fn objective(&self, nu: &ParticleMeasure) -> Result<ObjectiveValue> {
        match self.rho {
            InputMeasure::Discrete(d) => Ok(self.discrete(d, nu, None)),
            InputMeasure::Density(d) => self.density(d, nu, None),
        }
    }

    pub fn value(&self, nu: &ParticleMeasure) -> Result<f64> {
        Ok(self.objective(nu)?.value)
    }

    pub fn objective_and_gradient(&self, nu: &ParticleMeasure) -> Result<(ObjectiveValue, Gradient)> {
        let mut grad = Gradient {
            d_mass: vec![0.0; nu.len()],
            d_pos: vec![Point::default(); nu.len()],
        };
        let value = match self.rho {
            InputMeasure::Discrete(d) => self.discrete(d, nu, Some(&mut grad)),
            InputMeasure::Density(d) => self.density(d, nu, Some(&mut grad))?,
        };
        Ok((value, grad))
    }

    fn discrete(&self, d: &DiscreteMeasure, nu: &ParticleMeasure, grad: Option<&mut Gradient>) -> ObjectiveValue {
        let index = self.rho_index.as_ref().expect("discrete input has an index");
        let xs = d.points();
        let lambda = d.weights();
        let mut coverage = vec![0.0; xs.len()];
        for (y, m) in nu.atoms() {
            if m == 0.0 {
                continue;
            }
            index.for_each_candidate(y, |i| {
                let k = crate::measure::cos2_kernel(&xs[i], y, self.kappa);
                if k > 0.0 {
                    coverage[i] += m * k;
                }
            });
        }
        let sqrt_coverage = pairwise_sum_by(xs.len(), |i| lambda[i] * coverage[i].sqrt());
        let value = 1.0 + nu.total_mass() - 2.0 * sqrt_coverage;

        if let Some(grad) = grad {
            let w: Vec<f64> = coverage
                .iter()
                .zip(lambda)
                .map(|(&s, &l)| if s > 0.0 { l / s.sqrt() } else { 0.0 })
                .collect();
            for (j, (y, m)) in nu.atoms().enumerate() {
                let mut f = 0.0;
                let mut g = Point::default();
                index.for_each_candidate(y, |i| {
                    if w[i] == 0.0 {
                        return;
                    }
                    let (k, dk) = kernel_and_grad(&xs[i], y, self.kappa);
                    if k > 0.0 {
                        f += w[i] * k;
                        g = g.add_scaled(&dk, w[i]);
                    }
                });
                grad.d_mass[j] = 1.0 - f;
                grad.d_pos[j] = g.scale(-m);
            }
        }
        ObjectiveValue {
            value,
            coverage,
            sqrt_coverage,
            quadrature_error: 0.0,
        }
    }

    fn density(&self, d: &Density1D, nu: &ParticleMeasure, grad: Option<&mut Gradient>) -> Result<ObjectiveValue> {
        let s = nu.len();
        let want_grad = grad.is_some();
        let n_out = if want_grad { 1 + 2 * s } else { 1 };
        let ys = nu.positions();
        let ms = nu.masses();
        let atoms = AtomIndex::new(nu, self.kappa);
        let kappa = self.kappa;
        let mut kernels: Vec<(usize, f64, f64)> = Vec::with_capacity(s);
        let integrand = |x: f64, out: &mut [f64]| {
            out.iter_mut().for_each(|v| *v = 0.0);
            let p = d.pdf(x);
            if p == 0.0 {
                return;
            }
            let xp = Point::new1(x);
            kernels.clear();
            let mut cov = 0.0;
            atoms.for_each(&xp, |j| {
                let (k, dk) = kernel_and_grad(&xp, &ys[j], kappa);
                if k > 0.0 {
                    cov += ms[j] * k;
                    kernels.push((j, k, dk.0[0]));
                }
            });
            let root = cov.sqrt();
            out[0] = p * root;
            if want_grad && root > 0.0 {
                let scale = p / root;
                for &(j, k, dk) in &kernels {
                    out[1 + j] = scale * k;
                    out[1 + s + j] = -scale * ms[j] * dk;
                }
            }
        };
        let r = self.integrate(d, nu, integrand, n_out)?;
        let value = 1.0 + nu.total_mass() - 2.0 * r.values[0];
        if let Some(grad) = grad {
            for j in 0..s {
                grad.d_mass[j] = 1.0 - r.values[1 + j];
                grad.d_pos[j] = Point::new1(r.values[1 + s + j]);
            }
        }
        Ok(ObjectiveValue {
            value,
            coverage: Vec::new(),
            sqrt_coverage: r.values[0],
            quadrature_error: r.error,
        })
    }

    fn integrate<F: FnMut(f64, &mut [f64])>(
        &self,
        d: &Density1D,
        nu: &ParticleMeasure,
        f: F,
        n_out: usize,
    ) -> Result<QuadResult> {
        let (a, b) = d.interval();
        let breaks = kink_breakpoints(nu, self.kappa, &[]);
        integrate(
            f,
            n_out,
            a,
            b,
            &breaks,
            QuadOptions {
                abs_tol: d.tolerance(),
                max_subdivisions: MAX_SUBDIVISIONS,
            },
        )
    }

    /// `J(ν + m δ_y) − J(ν)`.
    pub fn insertion_delta(&self, nu: &ParticleMeasure, y: &Point, m: f64) -> Result<f64> {
        let mv = AtomMove {
            from: *y,
            from_mass: 0.0,
            to: *y,
            to_mass: m,
        };
        self.objective_delta(nu, &[mv])
    }

    /// `J(ν′) − J(ν)` where ν′ applies `moves` to ν, computed without
    /// cancellation as
    ///
    /// ```text
    /// Σ_t (m′_t − m_t) − 2 ∫ δS / (√(S + δS) + √S) dρ
    /// ```
    ///
    /// with `δS` assembled from mass changes and stable kernel differences.
    /// Atoms of ν not named in a move are unchanged. Density integrals are
    /// refined to a tolerance relative to the size of the change.
    pub fn objective_delta(&self, nu: &ParticleMeasure, moves: &[AtomMove]) -> Result<f64> {
        if moves.is_empty() {
            return Ok(0.0);
        }
        let kappa = self.kappa;
        let mass_part = pairwise_sum_by(moves.len(), |t| moves[t].to_mass - moves[t].from_mass);
        let atoms = AtomIndex::new(nu, kappa);
        let (ys, ms) = (nu.positions(), nu.masses());
        let coverage = |x: &Point| {
            let mut s = 0.0;
            atoms.for_each(x, |j| s += ms[j] * crate::measure::cos2_kernel(x, &ys[j], kappa));
            s
        };
        let term = |s: f64, ds: f64| {
            let den = (s + ds).max(0.0).sqrt() + s.sqrt();
            if den > 0.0 {
                ds / den
            } else {
                0.0
            }
        };
        let integral = match self.rho {
            InputMeasure::Discrete(d) => {
                let index = self.rho_index.as_ref().expect("discrete input has an index");
                let (xs, lambda) = (d.points(), d.weights());
                let mut delta = vec![0.0; xs.len()];
                let mut stamp = vec![usize::MAX; xs.len()];
                let mut touched: Vec<usize> = Vec::new();
                let mut seen = vec![false; xs.len()];
                for (t, mv) in moves.iter().enumerate() {
                    let mut visit = |i: usize| {
                        if stamp[i] == t {
                            return;
                        }
                        stamp[i] = t;
                        let ds = mv.coverage_change(&xs[i], kappa);
                        if ds != 0.0 {
                            delta[i] += ds;
                            if !seen[i] {
                                seen[i] = true;
                                touched.push(i);
                            }
                        }
                    };
                    index.for_each_candidate(&mv.from, &mut visit);
                    index.for_each_candidate(&mv.to, &mut visit);
                }
                touched.sort_unstable();
                pairwise_sum_by(touched.len(), |t| {
                    let i = touched[t];
                    lambda[i] * term(coverage(&xs[i]), delta[i])
                })
            }
            InputMeasure::Density(d) => {
                let r = kappa.radius();
                let (a, b) = d.interval();
                let lo = moves.iter().map(|m| m.from.x().min(m.to.x())).fold(f64::INFINITY, f64::min) - r;
                let hi = moves.iter().map(|m| m.from.x().max(m.to.x())).fold(f64::NEG_INFINITY, f64::max) + r;
                let (lo, hi) = (lo.max(a), hi.min(b));
                if lo >= hi {
                    return Ok(mass_part);
                }
                let extra: Vec<f64> = moves.iter().flat_map(|m| [m.from.x() - r, m.from.x() + r, m.to.x() - r, m.to.x() + r]).collect();
                let breaks = kink_breakpoints(nu, kappa, &extra);
                let ends: Vec<Point> = moves.iter().flat_map(|m| [m.from, m.to]).collect();
                let ends = ParticleMeasure::new(1, ends, vec![0.0; 2 * moves.len()])?;
                let move_index = AtomIndex::new(&ends, kappa);
                let mut stamp = vec![0usize; moves.len()];
                let mut calls = 0usize;
                let mut integrand = |x: f64, out: &mut [f64]| {
                    out[0] = 0.0;
                    out[1] = 0.0;
                    let p = d.pdf(x);
                    if p == 0.0 {
                        return;
                    }
                    calls += 1;
                    let xp = Point::new1(x);
                    let mut ds = 0.0;
                    move_index.for_each(&xp, |e| {
                        let t = e / 2;
                        if stamp[t] != calls {
                            stamp[t] = calls;
                            ds += moves[t].coverage_change(&xp, kappa);
                        }
                    });
                    let v = p * term(coverage(&xp), ds);
                    out[0] = v;
                    out[1] = v.abs();
                };
                let rough = QuadOptions {
                    abs_tol: f64::INFINITY,
                    max_subdivisions: 0,
                };
                let first = integrate_unchecked(&mut integrand, 2, lo, hi, &breaks, rough)?;
                let scale = mass_part.abs() + 2.0 * first.values[1];
                let fine = QuadOptions {
                    abs_tol: (DELTA_REL_TOL * scale).max(f64::MIN_POSITIVE),
                    max_subdivisions: MAX_SUBDIVISIONS,
                };
                integrate_unchecked(&mut integrand, 2, lo, hi, &breaks, fine)?.values[0]
            }
        };
        Ok(mass_part - 2.0 * integral)
    }

    /// `S(x) = Σ_j m_j Cos²(|x − y_j|/κ)`.
    pub fn coverage_at(&self, nu: &ParticleMeasure, x: &Point) -> f64 {
        let m = nu.masses();
        let p = nu.positions();
        pairwise_sum_by(nu.len(), |j| m[j] * crate::measure::cos2_kernel(x, &p[j], self.kappa))
    }

    /// Dense Hessian of `J` in all variables, ordered as the masses
    /// followed by the position coordinates of each atom (row-major,
    /// `n × n` with `n = s (1 + d)`):
    ///
    /// ```text
    /// H = ∫ u uᵀ / (2 S^{3/2}) dρ − ∫ B / √S dρ
    /// ```
    ///
    /// where `u = ∂S` (entries `k_j` and `m_j ∇k_j`) and `B = ∂²S` is block
    /// diagonal with blocks `[[0, ∇k_jᵀ], [∇k_j, m_j ∇²k_j]]`. Density
    /// integrals use the relative accuracy `tol`.
    pub fn hessian(&self, nu: &ParticleMeasure, tol: f64) -> Result<Vec<f64>> {
        let s = nu.len();
        let dim = nu.dim();
        let n = s * (1 + dim);
        let atoms = AtomIndex::new(nu, self.kappa);
        let ys = nu.positions();
        let ms = nu.masses();
        let kappa = self.kappa;
        // Local derivative data at one input point: (variable index, ∂S) and
        // the second-derivative entries of S.
        struct Local {
            first: Vec<(usize, f64)>,
            second: Vec<(usize, usize, f64)>,
        }
        let gather = |x: &Point, loc: &mut Local| -> f64 {
            loc.first.clear();
            loc.second.clear();
            let mut cov = 0.0;
            atoms.for_each(x, |j| {
                let (k, g, h) = crate::measure::kernel_derivatives(x, &ys[j], kappa);
                if k <= 0.0 {
                    return;
                }
                cov += ms[j] * k;
                loc.first.push((j, k));
                for a in 0..dim {
                    let pa = s + j * dim + a;
                    loc.first.push((pa, ms[j] * g.0[a]));
                    loc.second.push((j, pa, g.0[a]));
                    for b in a..dim {
                        loc.second.push((pa, s + j * dim + b, ms[j] * h[a][b]));
                    }
                }
            });
            cov
        };
        let mut hess = vec![0.0; n * n];
        let mut loc = Local {
            first: Vec::new(),
            second: Vec::new(),
        };
        match self.rho {
            InputMeasure::Discrete(d) => {
                for (x, &lam) in d.points().iter().zip(d.weights()) {
                    let cov = gather(x, &mut loc);
                    if cov <= 0.0 {
                        continue;
                    }
                    let root = cov.sqrt();
                    let ca = lam / (2.0 * cov * root);
                    for &(a, ua) in &loc.first {
                        for &(b, ub) in &loc.first {
                            if b >= a {
                                hess[a * n + b] += ca * ua * ub;
                            }
                        }
                    }
                    let cb = lam / root;
                    for &(a, b, v) in &loc.second {
                        hess[a * n + b] -= cb * v;
                    }
                }
            }
            InputMeasure::Density(d) => {
                // Between consecutive kinks the set of atoms covering x is
                // fixed, so each piece only touches a small block.
                let (lo, hi) = d.interval();
                let mut edges = vec![lo];
                edges.extend(kink_breakpoints(nu, kappa, &[]).into_iter().filter(|&t| t > lo && t < hi));
                edges.push(hi);
                let mut slot = vec![usize::MAX; n];
                let mut vars: Vec<usize> = Vec::new();
                for w in edges.windows(2) {
                    let (a, b) = (w[0], w[1]);
                    if b <= a {
                        continue;
                    }
                    vars.iter().for_each(|&v| slot[v] = usize::MAX);
                    vars.clear();
                    let mid = Point::new1(0.5 * (a + b));
                    atoms.for_each(&mid, |j| {
                        if crate::measure::cos2_kernel(&mid, &ys[j], kappa) > 0.0 {
                            vars.push(j);
                            vars.extend((0..dim).map(|c| s + j * dim + c));
                        }
                    });
                    if vars.is_empty() {
                        continue;
                    }
                    for (i, &v) in vars.iter().enumerate() {
                        slot[v] = i;
                    }
                    let nl = vars.len();
                    let integrand = |x: f64, out: &mut [f64]| {
                        out.iter_mut().for_each(|v| *v = 0.0);
                        let p = d.pdf(x);
                        if p == 0.0 {
                            return;
                        }
                        let cov = gather(&Point::new1(x), &mut loc);
                        if cov <= 0.0 {
                            return;
                        }
                        let root = cov.sqrt();
                        let ca = p / (2.0 * cov * root);
                        for &(u, uu) in &loc.first {
                            for &(v, uv) in &loc.first {
                                let (iu, iv) = (slot[u], slot[v]);
                                if iu <= iv && iv != usize::MAX {
                                    out[tri_index(iu, iv, nl)] += ca * uu * uv;
                                }
                            }
                        }
                        let cb = p / root;
                        for &(u, v, val) in &loc.second {
                            let (iu, iv) = (slot[u].min(slot[v]), slot[u].max(slot[v]));
                            if iv != usize::MAX {
                                out[tri_index(iu, iv, nl)] -= cb * val;
                            }
                        }
                    };
                    let opts = QuadOptions {
                        abs_tol: tol * (b - a) / (hi - lo),
                        max_subdivisions: MAX_SUBDIVISIONS,
                    };
                    let r = integrate_unchecked(integrand, nl * (nl + 1) / 2, a, b, &[], opts)?;
                    for (i, &u) in vars.iter().enumerate() {
                        for (k, &v) in vars.iter().enumerate().skip(i) {
                            let (ru, rv) = (u.min(v), u.max(v));
                            hess[ru * n + rv] += r.values[tri_index(i, k, nl)];
                        }
                    }
                }
            }
        }
        for a in 0..n {
            for b in 0..a {
                hess[a * n + b] = hess[b * n + a];
            }
        }
        Ok(hess)
    }

    /// Dense Hessian of `J` in the masses (row-major, `s × s`):
    /// `H_jl = ∫ Cos²_j Cos²_l / (2 S^{3/2}) dρ` over covered input points.
    pub fn mass_hessian(&self, nu: &ParticleMeasure) -> Result<Vec<f64>> {
        let s = nu.len();
        let mut h = vec![0.0; s * s];
        let atoms = AtomIndex::new(nu, self.kappa);
        let ys = nu.positions();
        let ms = nu.masses();
        let kappa = self.kappa;
        match self.rho {
            InputMeasure::Discrete(d) => {
                let mut local: Vec<(usize, f64)> = Vec::new();
                for (x, &lam) in d.points().iter().zip(d.weights()) {
                    local.clear();
                    let mut cov = 0.0;
                    atoms.for_each(x, |j| {
                        let k = crate::measure::cos2_kernel(x, &ys[j], kappa);
                        if k > 0.0 {
                            cov += ms[j] * k;
                            local.push((j, k));
                        }
                    });
                    if cov <= 0.0 {
                        continue;
                    }
                    let c = lam / (2.0 * cov * cov.sqrt());
                    for &(j, kj) in &local {
                        for &(l, kl) in &local {
                            h[j * s + l] += c * kj * kl;
                        }
                    }
                }
            }
            InputMeasure::Density(d) => {
                let n_out = s * (s + 1) / 2;
                let mut local: Vec<(usize, f64)> = Vec::new();
                let integrand = |x: f64, out: &mut [f64]| {
                    out.iter_mut().for_each(|v| *v = 0.0);
                    let p = d.pdf(x);
                    if p == 0.0 {
                        return;
                    }
                    let xp = Point::new1(x);
                    local.clear();
                    let mut cov = 0.0;
                    atoms.for_each(&xp, |j| {
                        let k = crate::measure::cos2_kernel(&xp, &ys[j], kappa);
                        if k > 0.0 {
                            cov += ms[j] * k;
                            local.push((j, k));
                        }
                    });
                    if cov <= 0.0 {
                        return;
                    }
                    let c = p / (2.0 * cov * cov.sqrt());
                    for &(j, kj) in &local {
                        for &(l, kl) in &local {
                            if l >= j {
                                out[tri_index(j, l, s)] = c * kj * kl;
                            }
                        }
                    }
                };
                let r = self.integrate(d, nu, integrand, n_out)?;
                for j in 0..s {
                    for l in j..s {
                        let v = r.values[tri_index(j, l, s)];
                        h[j * s + l] = v;
                        h[l * s + j] = v;
                    }
                }
            }
        }
        Ok(h)
    }
}

fn tri_index(j: usize, l: usize, s: usize) -> usize {
    // Row-major upper triangle including the diagonal.
    j * s - j * (j + 1) / 2 + l
}

/// Kernel kinks `y_j ± κπ/2` of all atoms plus any extra points.
pub(crate) fn kink_breakpoints(nu: &ParticleMeasure, kappa: Kappa, extra: &[f64]) -> Vec<f64> {
    let r = kappa.radius();
    let mut b: Vec<f64> = nu
        .positions()
        .iter()
        .flat_map(|p| [p.x() - r, p.x() + r])
        .chain(extra.iter().copied())
        .collect();
    b.sort_by(f64::total_cmp);
    b.dedup();
    b
}

/// Neighbor lookup over atom positions (skips the index for tiny measures).
#[derive(Clone, Debug)]
pub(crate) struct AtomIndex {
    index: Option<PointIndex>,
    len: usize,
}

impl AtomIndex {
    pub(crate) fn new(nu: &ParticleMeasure, kappa: Kappa) -> Self {
        let index = (nu.len() > 8).then(|| PointIndex::new(nu.positions(), nu.dim(), kappa.radius()));
        AtomIndex { index, len: nu.len() }
    }

    #[inline]
    pub(crate) fn for_each<F: FnMut(usize)>(&self, x: &Point, mut f: F) {
        match &self.index {
            Some(idx) => idx.for_each_candidate(x, f),
            None => (0..self.len).for_each(&mut f),
        }
    }
}

pub fn objective(rho: &InputMeasure, nu: &ParticleMeasure, kappa: Kappa) -> Result<ObjectiveValue> {
    check_dims(rho, nu)?;
    Evaluator::new(rho, kappa).objective(nu)
}

pub fn gradient(rho: &InputMeasure, nu: &ParticleMeasure, kappa: Kappa) -> Result<Gradient> {
    check_dims(rho, nu)?;
    Ok(Evaluator::new(rho, kappa).objective_and_gradient(nu)?.1)
}

/// `J(tν₁ + (1−t)ν₂) − [t J(ν₁) + (1−t) J(ν₂)]`; nonpositive by convexity.
pub fn convexity_probe(
    rho: &InputMeasure,
    nu1: &ParticleMeasure,
    nu2: &ParticleMeasure,
    kappa: Kappa,
    t: f64,
) -> Result<f64> {
    if !(0.0..=1.0).contains(&t) {
        return Err(Error::InvalidMeasure(format!("mixing weight {t} outside [0, 1]")));
    }
    check_dims(rho, nu1)?;
    check_dims(rho, nu2)?;
    let eval = Evaluator::new(rho, kappa);
    let mut mix = nu1.scaled(t);
    for (p, m) in nu2.atoms() {
        mix.push(*p, (1.0 - t) * m);
    }
    let terms = [eval.value(&mix)?, -t * eval.value(nu1)?, -(1.0 - t) * eval.value(nu2)?];
    Ok(pairwise_sum(&terms))
}

fn check_dims(rho: &InputMeasure, nu: &ParticleMeasure) -> Result<()> {
    if rho.dim() != nu.dim() {
        return Err(Error::InvalidMeasure(format!(
            "input dimension {} does not match particle dimension {}",
            rho.dim(),
            nu.dim()
        )));
    }
    Ok(())
}
