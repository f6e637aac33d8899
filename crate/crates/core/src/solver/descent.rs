//! Joint descent in masses and positions.
//!
//! Variables are packed as `[m_0 … m_{s−1}, y_0 … y_{s−1}]`. Masses are
//! bounded below by zero and positions by the domain box. Each step uses a
//! two-metric projection scheme: coordinates pinned at a bound with the
//! gradient pushing outward are frozen, masses that one scaled gradient step
//! would drive through zero are set to zero outright, and the remaining
//! coordinates follow a regularized Newton, L-BFGS or plain scaled gradient
//! direction. Trial points are projected onto the bounds, so the line search
//! runs along a piecewise linear path.

use std::collections::VecDeque;

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use super::line_search::{backtrack, hager_zhang, LineSearchParams};
use super::{OptimizerKind, SolverConfig};
use crate::error::{Error, Result};
use crate::measure::{Domain, ParticleMeasure, Point};
use crate::objective::{AtomMove, Evaluator, Gradient};

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct DescentReport {
    pub iterations: usize,
    pub evaluations: usize,
    /// Scaled projected-gradient residual at exit.
    pub residual: f64,
    /// `Σ_j m_j |∂J/∂m_j|` at exit.
    pub complementarity: f64,
    pub converged: bool,
    pub stalled: bool,
    /// Masses set to zero by the projection rule.
    pub zeroed: usize,
}

/// Consecutive negligible decreases tolerated before declaring a stall.
const MAX_FLAT_STEPS: usize = 8;

/// Decreases below this fraction of `max(|J|, 1)` count as negligible.
const FLAT_DECREASE: f64 = 1e-30;

/// Absolute quadrature tolerance for density Hessians.
const HESSIAN_TOL: f64 = 1e-9;

/// Above this many variables Newton steps give way to L-BFGS.
const NEWTON_MAX_VARS: usize = 300;

/// Per-atom changes turning `from` into `to` (same atom count).
pub(crate) fn moves_between(from: &ParticleMeasure, to: &ParticleMeasure) -> Vec<AtomMove> {
    from.atoms()
        .zip(to.atoms())
        .filter(|((p, m), (q, n))| p != q || m != n)
        .map(|((p, m), (q, n))| AtomMove {
            from: *p,
            from_mass: m,
            to: *q,
            to_mass: n,
        })
        .collect()
}

struct Layout {
    s: usize,
    dim: usize,
    lo: [f64; 2],
    hi: [f64; 2],
}

impl Layout {
    fn new(s: usize, dim: usize, domain: &Domain) -> Self {
        Layout {
            s,
            dim,
            lo: domain.lower().0,
            hi: domain.upper().0,
        }
    }

    fn len(&self) -> usize {
        self.s * (1 + self.dim)
    }

    /// Bounds of coordinate `c`.
    fn bounds(&self, c: usize) -> (f64, f64) {
        if c < self.s {
            (0.0, f64::INFINITY)
        } else {
            let k = (c - self.s) % self.dim;
            (self.lo[k], self.hi[k])
        }
    }

    /// Atom owning coordinate `c`.
    fn atom(&self, c: usize) -> usize {
        if c < self.s {
            c
        } else {
            (c - self.s) / self.dim
        }
    }

    fn pack(&self, nu: &ParticleMeasure) -> Vec<f64> {
        let mut x = nu.masses().to_vec();
        for p in nu.positions() {
            x.extend_from_slice(p.coords(self.dim));
        }
        x
    }

    fn unpack(&self, x: &[f64]) -> Result<ParticleMeasure> {
        let masses = x[..self.s].iter().map(|&m| m.max(0.0)).collect();
        let positions = (0..self.s)
            .map(|j| {
                let mut p = Point::default();
                for k in 0..self.dim {
                    p.0[k] = x[self.s + j * self.dim + k].clamp(self.lo[k], self.hi[k]);
                }
                p
            })
            .collect();
        ParticleMeasure::new(self.dim, positions, masses)
    }

    fn pack_grad(&self, g: &Gradient) -> Vec<f64> {
        let mut v = g.d_mass.clone();
        for p in &g.d_pos {
            v.extend_from_slice(p.coords(self.dim));
        }
        v
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Diagonal preconditioner: `max(m_j, floor)` for masses and
/// `κ² / max(m_j, floor)` for the positions of atom `j`.
fn preconditioner(layout: &Layout, x: &[f64], kappa: f64, floor: f64) -> Vec<f64> {
    (0..layout.len())
        .map(|c| {
            let m = x[layout.atom(c)].max(floor);
            if c < layout.s {
                m
            } else {
                kappa * kappa / m
            }
        })
        .collect()
}

/// Scaled projected-gradient residual and complementarity.
fn residuals(layout: &Layout, x: &[f64], g: &[f64], d: &[f64], kappa: f64) -> (f64, f64) {
    let mut res = 0.0f64;
    for c in 0..layout.len() {
        let (lo, hi) = layout.bounds(c);
        let moved = (x[c] - d[c] * g[c]).clamp(lo, hi) - x[c];
        let scaled = if c < layout.s { moved.abs() / d[c] } else { moved.abs() / kappa };
        res = res.max(scaled);
    }
    let compl = (0..layout.s).map(|j| x[j] * g[j].abs()).sum();
    (res, compl)
}

struct Iterate {
    x: Vec<f64>,
    nu: ParticleMeasure,
    /// Objective tracked by accumulating accepted differences.
    value: f64,
    g: Vec<f64>,
}

/// Runs descent steps until stationarity, stall or the iteration cap.
///
/// Steps are judged by the directly computed difference `J(ν′) − J(ν)`,
/// which stays accurate when the decrease is far below the rounding level of
/// `J` itself. Accepted differences are never positive; the returned value is
/// `J(ν)` plus their sum.
pub fn minimize(
    eval: &Evaluator,
    nu: ParticleMeasure,
    cfg: &SolverConfig,
) -> Result<(ParticleMeasure, f64, DescentReport)> {
    let domain = *eval.rho().domain();
    let kappa = eval.kappa().get();
    let layout = Layout::new(nu.len(), nu.dim(), &domain);
    let mut report = DescentReport::default();
    if nu.is_empty() {
        let v = eval.value(&nu)?;
        report.converged = true;
        return Ok((nu, v, report));
    }
    // Trial point: measure, difference from `base`, gradient. `None` when the
    // gradient quadrature fails, which happens where coverage nearly vanishes;
    // such points are rejected.
    let evaluate = |base: &ParticleMeasure, x: &[f64]| -> Result<Option<(ParticleMeasure, f64, Vec<f64>)>> {
        let nu = layout.unpack(x)?;
        let delta = eval.objective_delta(base, &moves_between(base, &nu))?;
        match eval.objective_and_gradient(&nu) {
            Ok((_, grad)) => Ok(Some((nu, delta, layout.pack_grad(&grad)))),
            Err(Error::QuadratureNoConvergence { .. }) => Ok(None),
            Err(e) => Err(e),
        }
    };

    let x0 = layout.pack(&nu);
    let (obj0, grad0) = eval.objective_and_gradient(&nu)?;
    report.evaluations += 1;
    let mut cur = Iterate {
        x: x0,
        nu,
        value: obj0.value,
        g: layout.pack_grad(&grad0),
    };
    let mut memory: VecDeque<(Vec<f64>, Vec<f64>, f64)> = VecDeque::new();
    let ls_params = LineSearchParams {
        delta: cfg.line_search.sufficient_decrease,
        sigma: cfg.line_search.curvature,
        ..LineSearchParams::default()
    };
    let mut hold_zeroing = false;
    let mut flat = 0;

    for _ in 0..cfg.max_inner_iters {
        let d = preconditioner(&layout, &cur.x, kappa, cfg.insertion_mass);
        let (res, compl) = residuals(&layout, &cur.x, &cur.g, &d, kappa);
        report.residual = res;
        report.complementarity = compl;
        if res <= cfg.grad_tol {
            report.converged = true;
            break;
        }

        let to_zero: Vec<usize> = (0..layout.s)
            .filter(|&j| cur.g[j] > 0.0 && cur.x[j] > 0.0 && cur.x[j] <= d[j] * cur.g[j])
            .collect();
        if !to_zero.is_empty() && !hold_zeroing {
            let mut x = cur.x.clone();
            for &j in &to_zero {
                x[j] = 0.0;
            }
            let trial = evaluate(&cur.nu, &x)?;
            report.evaluations += 1;
            report.iterations += 1;
            if let Some((nu, delta, g)) = trial.filter(|t| t.1 <= 0.0) {
                report.zeroed += to_zero.len();
                cur = Iterate {
                    x,
                    nu,
                    value: cur.value + delta,
                    g,
                };
                memory.clear();
                continue;
            }
            hold_zeroing = true;
        }

        // Frozen coordinates: at a bound with the scaled step pointing outward,
        // or masses the zeroing rule could not remove this round.
        let frozen: Vec<bool> = (0..layout.len())
            .map(|c| {
                let (lo, hi) = layout.bounds(c);
                (cur.x[c] <= lo && cur.g[c] > 0.0)
                    || (cur.x[c] >= hi && cur.g[c] < 0.0)
                    || (hold_zeroing && c < layout.s && to_zero.contains(&c))
            })
            .collect();
        let masked: Vec<f64> = (0..layout.len()).map(|c| if frozen[c] { 0.0 } else { cur.g[c] }).collect();
        let scaled_gradient = || -> Vec<f64> { masked.iter().zip(&d).map(|(g, s)| -g * s).collect() };
        let mut dir = match cfg.optimizer {
            OptimizerKind::Newton if layout.len() <= NEWTON_MAX_VARS => {
                let hess = eval.hessian(&cur.nu, HESSIAN_TOL)?;
                newton_direction(&hess, &cur.g, &d, &frozen).unwrap_or_else(scaled_gradient)
            }
            OptimizerKind::Newton => two_loop(&memory, &masked, &d),
            OptimizerKind::Bfgs => two_loop(&memory, &masked, &d),
            OptimizerKind::PreconditionedDescent => scaled_gradient(),
        };
        for c in 0..layout.len() {
            if frozen[c] {
                dir[c] = 0.0;
            }
        }
        let mut slope = dot(&cur.g, &dir);
        if !(slope < 0.0) {
            memory.clear();
            dir = scaled_gradient();
            slope = dot(&cur.g, &dir);
            if !(slope < 0.0) {
                report.converged = true;
                break;
            }
        }

        // Beyond the last bound crossing the path is constant.
        let mut alpha_max = 0.0f64;
        for c in 0..layout.len() {
            let (lo, hi) = layout.bounds(c);
            let reach = if dir[c] < 0.0 {
                (cur.x[c] - lo) / -dir[c]
            } else if dir[c] > 0.0 {
                (hi - cur.x[c]) / dir[c]
            } else {
                0.0
            };
            alpha_max = alpha_max.max(reach);
        }
        let step_at = |alpha: f64| -> (Vec<f64>, Vec<bool>) {
            (0..layout.len())
                .map(|c| {
                    let (lo, hi) = layout.bounds(c);
                    let raw = cur.x[c] + alpha * dir[c];
                    (raw.clamp(lo, hi), raw < lo || raw > hi)
                })
                .unzip()
        };

        let mut trials: Vec<(f64, Vec<f64>, ParticleMeasure, f64, Vec<f64>)> = Vec::new();
        let mut phi = |alpha: f64| -> Result<(f64, f64)> {
            let (x, clamped) = step_at(alpha);
            let Some((nu, delta, g)) = evaluate(&cur.nu, &x)? else {
                return Ok((f64::INFINITY, f64::NAN));
            };
            let slope: f64 = (0..g.len()).filter(|&c| !clamped[c]).map(|c| g[c] * dir[c]).sum();
            trials.push((alpha, x, nu, delta, g));
            Ok((delta, slope))
        };
        let found = hager_zhang(&mut phi, 0.0, slope, 1.0, alpha_max, &ls_params)?;
        let accepted_alpha = match found {
            Some(r) => Some(r.step.alpha),
            None => {
                let start = alpha_max.min(1.0);
                backtrack(|a| phi(a).map(|(v, _)| v), 0.0, slope, start, ls_params.delta, 60)?.map(|s| s.alpha)
            }
        };
        report.evaluations += trials.len();
        report.iterations += 1;
        let Some(alpha) = accepted_alpha else {
            if memory.is_empty() {
                report.stalled = true;
                break;
            }
            memory.clear();
            continue;
        };
        let (_, x, nu, delta, g) = trials
            .into_iter()
            .rev()
            .find(|t| t.0 == alpha)
            .expect("accepted step was evaluated");
        let s: Vec<f64> = x.iter().zip(&cur.x).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = g.iter().zip(&cur.g).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);
        if sy > 1e-12 * dot(&s, &s).sqrt() * dot(&y, &y).sqrt() && sy > 0.0 {
            memory.push_back((s, y, 1.0 / sy));
            if memory.len() > cfg.bfgs_memory {
                memory.pop_front();
            }
        }
        flat = if -delta <= FLAT_DECREASE * cur.value.abs().max(1.0) { flat + 1 } else { 0 };
        cur = Iterate {
            x,
            nu,
            value: cur.value + delta,
            g,
        };
        hold_zeroing = false;
        if flat >= MAX_FLAT_STEPS {
            report.stalled = true;
            break;
        }
    }
    if !report.converged {
        let d = preconditioner(&layout, &cur.x, kappa, cfg.insertion_mass);
        let (res, compl) = residuals(&layout, &cur.x, &cur.g, &d, kappa);
        report.residual = res;
        report.complementarity = compl;
        report.converged = res <= cfg.grad_tol;
    }
    Ok((cur.nu, cur.value, report))
}

/// Scaled projected-gradient residual and complementarity of `nu`, measured
/// as in [`minimize`].
pub fn stationarity(eval: &Evaluator, nu: &ParticleMeasure, cfg: &SolverConfig) -> Result<(f64, f64)> {
    if nu.is_empty() {
        return Ok((0.0, 0.0));
    }
    let layout = Layout::new(nu.len(), nu.dim(), eval.rho().domain());
    let kappa = eval.kappa().get();
    let x = layout.pack(nu);
    let (_, grad) = eval.objective_and_gradient(nu)?;
    let g = layout.pack_grad(&grad);
    let d = preconditioner(&layout, &x, kappa, cfg.insertion_mass);
    Ok(residuals(&layout, &x, &g, &d, kappa))
}

/// Regularized Newton direction on the free coordinates: solves
/// `(D^{1/2} H D^{1/2} + μ I) q = −D^{1/2} g` with the smallest `μ` (0 or a
/// power of ten times a scale) giving a Cholesky factorization, and returns
/// `D^{1/2} q`.
fn newton_direction(hess: &[f64], g: &[f64], d: &[f64], frozen: &[bool]) -> Option<Vec<f64>> {
    let n = g.len();
    let free: Vec<usize> = (0..n).filter(|&c| !frozen[c]).collect();
    let f = free.len();
    if f == 0 {
        return None;
    }
    let sd: Vec<f64> = free.iter().map(|&c| d[c].sqrt()).collect();
    let h = DMatrix::from_fn(f, f, |a, b| sd[a] * hess[free[a] * n + free[b]] * sd[b]);
    let rhs = DVector::from_fn(f, |a, _| -sd[a] * g[free[a]]);
    let scale = (0..f).map(|a| h[(a, a)].abs()).fold(f64::MIN_POSITIVE, f64::max);
    let mut mu = rhs.norm();
    for _ in 0..40 {
        let mut m = h.clone();
        for a in 0..f {
            m[(a, a)] += mu;
        }
        if let Some(chol) = m.cholesky() {
            let q = chol.solve(&rhs);
            let mut dir = vec![0.0; n];
            for (a, &c) in free.iter().enumerate() {
                dir[c] = sd[a] * q[a];
            }
            if dir.iter().all(|v| v.is_finite()) {
                return Some(dir);
            }
        }
        mu = 10.0 * mu.max(1e-12 * scale);
    }
    None
}

/// L-BFGS two-loop recursion with initial matrix `γ · diag(d)`.
fn two_loop(memory: &VecDeque<(Vec<f64>, Vec<f64>, f64)>, g: &[f64], d: &[f64]) -> Vec<f64> {
    let mut q = g.to_vec();
    let mut alphas = Vec::with_capacity(memory.len());
    for (s, y, rho) in memory.iter().rev() {
        let a = rho * dot(s, &q);
        for (qc, yc) in q.iter_mut().zip(y) {
            *qc -= a * yc;
        }
        alphas.push(a);
    }
    let gamma = memory.back().map_or(1.0, |(s, y, _)| {
        let dy: f64 = y.iter().zip(d).map(|(yc, dc)| yc * yc * dc).sum();
        if dy > 0.0 {
            dot(s, y) / dy
        } else {
            1.0
        }
    });
    let mut r: Vec<f64> = q.iter().zip(d).map(|(qc, dc)| gamma * dc * qc).collect();
    for ((s, y, rho), a) in memory.iter().zip(alphas.iter().rev()) {
        let b = rho * dot(y, &r);
        for (rc, sc) in r.iter_mut().zip(s) {
            *rc += sc * (a - b);
        }
    }
    r.iter().map(|v| -v).collect()
}
