//! Fixed-grid reference solver.
//!
//! With atom positions restricted to a regular grid the problem becomes
//! convex in the masses alone:
//!
//! ```text
//! min_{m ≥ 0}  1 + Σ_j m_j − 2 Σ_i λ_i √(Σ_j K_ij m_j),   K_ij = Cos²(|x_i − z_j|/κ)
//! ```
//!
//! It is solved by two-metric projected Newton steps (Bertsekas) with an
//! Armijo search along the projection arc until the KKT conditions hold: `F_j ≤ 1 + tol`
//! at every node and `|F_j − 1| ≤ tol` wherever `m_j > tol`, where
//! `F_j = Σ_i λ_i K_ij / √S_i = 1 − ∂J/∂m_j`. Grid optima can only be worse
//! than free-support optima, which makes the oracle an upper reference.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::measure::{cos2_kernel, DiscreteMeasure, Domain, Kappa, ParticleMeasure, Point};
use crate::sum::pairwise_sum;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GridSolution {
    pub positions: Vec<Point>,
    pub masses: Vec<f64>,
    pub objective: f64,
    pub iterations: usize,
    /// Largest KKT violation at termination.
    pub stationarity: f64,
}

impl GridSolution {
    /// Nodes with positive mass as a particle measure.
    pub fn measure(&self, dim: usize) -> Result<ParticleMeasure> {
        let (p, m): (Vec<Point>, Vec<f64>) = self
            .positions
            .iter()
            .zip(&self.masses)
            .filter(|(_, &m)| m > 0.0)
            .map(|(p, &m)| (*p, m))
            .unzip();
        ParticleMeasure::new(dim, p, m)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OracleOptions {
    pub tol: f64,
    pub max_iters: usize,
}

impl Default for OracleOptions {
    fn default() -> Self {
        OracleOptions {
            tol: 1e-9,
            max_iters: 1_000_000,
        }
    }
}

const ARMIJO: f64 = 1e-4;
/// Upper bound on the width of the set of nodes treated as pinned at zero.
const ACTIVE_EPS: f64 = 1e-3;
/// Empty nodes with `F > 1` that may enter the support per iteration.
const MAX_ENTERING: usize = 32;

/// `grid_n` equally spaced nodes per axis, including the domain corners.
/// Nodes are ordered with the first coordinate varying fastest.
pub fn grid_nodes(domain: &Domain, grid_n: usize) -> Result<Vec<Point>> {
    if grid_n < 2 {
        return Err(Error::Config(format!("grid needs at least 2 nodes per axis, got {grid_n}")));
    }
    let (lo, hi) = (domain.lower(), domain.upper());
    let axis = |a: usize, k: usize| {
        let (l, h) = (lo.coords(domain.dim())[a], hi.coords(domain.dim())[a]);
        if k == grid_n - 1 {
            h
        } else {
            l + (h - l) * k as f64 / (grid_n - 1) as f64
        }
    };
    Ok(match domain.dim() {
        1 => (0..grid_n).map(|k| Point::new1(axis(0, k))).collect(),
        _ => (0..grid_n)
            .flat_map(|k1| (0..grid_n).map(move |k0| (k0, k1)))
            .map(|(k0, k1)| Point::new2(axis(0, k0), axis(1, k1)))
            .collect(),
    })
}

struct Problem<'a> {
    weights: &'a [f64],
    /// Nonzero kernel entries `(node, K_ij)` per input point.
    rows: Vec<Vec<(usize, f64)>>,
    nodes: usize,
}

impl Problem<'_> {
    fn coverage(&self, m: &[f64]) -> Vec<f64> {
        self.rows.iter().map(|row| row.iter().map(|&(j, k)| k * m[j]).sum()).collect()
    }

    fn objective(&self, m: &[f64], cov: &[f64]) -> f64 {
        let attraction: Vec<f64> = self.weights.iter().zip(cov).map(|(l, s)| l * s.sqrt()).collect();
        1.0 + pairwise_sum(m) - 2.0 * pairwise_sum(&attraction)
    }

    /// `∂J/∂m_j = 1 − F_j`; uncovered inputs push the gradient to −∞ on the
    /// nodes that reach them.
    fn gradient(&self, cov: &[f64]) -> Vec<f64> {
        let mut f = vec![0.0; self.nodes];
        for ((row, &lam), &s) in self.rows.iter().zip(self.weights).zip(cov) {
            let c = if s > 0.0 { lam / s.sqrt() } else { f64::INFINITY };
            for &(j, k) in row {
                f[j] += c * k;
            }
        }
        f.iter().map(|fj| 1.0 - fj).collect()
    }

    /// Two-metric projected Newton direction. Masses at (or within `ε` of)
    /// zero whose gradient points outward are sent to zero; the remaining
    /// support, plus the most violated empty nodes, takes a regularized Newton
    /// step with the exact Hessian `Σ_i λ_i K_ij K_il / (2 S_i^{3/2})`.
    fn direction(&self, m: &[f64], g: &[f64], cov: &[f64]) -> Vec<f64> {
        let w = m
            .iter()
            .zip(g)
            .map(|(&mj, &gj)| (mj - (mj - gj).max(0.0)).powi(2))
            .sum::<f64>()
            .sqrt();
        let eps = w.min(ACTIVE_EPS);
        let mut dir = vec![0.0; self.nodes];
        let mut free: Vec<usize> = Vec::new();
        let mut entering: Vec<usize> = Vec::new();
        for j in 0..self.nodes {
            if m[j] > eps {
                free.push(j);
            } else if g[j] > 0.0 {
                dir[j] = -m[j];
            } else if g[j] < 0.0 {
                entering.push(j);
            }
        }
        entering.sort_by(|&a, &b| g[a].total_cmp(&g[b]).then(a.cmp(&b)));
        entering.truncate(MAX_ENTERING);
        free.extend(entering);
        free.sort_unstable();

        let f = free.len();
        let mut slot = vec![usize::MAX; self.nodes];
        for (a, &j) in free.iter().enumerate() {
            slot[j] = a;
        }
        let mut h = DMatrix::<f64>::zeros(f, f);
        let mut local: Vec<(usize, f64)> = Vec::new();
        for ((row, &lam), &s) in self.rows.iter().zip(self.weights).zip(cov) {
            if s <= 0.0 {
                continue;
            }
            local.clear();
            local.extend(row.iter().filter(|(j, _)| slot[*j] != usize::MAX).map(|&(j, k)| (slot[j], k)));
            let c = lam / (2.0 * s * s.sqrt());
            for &(a, ka) in &local {
                for &(b, kb) in &local {
                    h[(a, b)] += c * ka * kb;
                }
            }
        }
        let rhs = DVector::from_fn(f, |a, _| -g[free[a]]);
        let scale = (0..f).map(|a| h[(a, a)]).fold(f64::MIN_POSITIVE, f64::max);
        let mut mu = rhs.norm();
        for _ in 0..40 {
            let mut reg = h.clone();
            for a in 0..f {
                reg[(a, a)] += mu;
            }
            if let Some(chol) = reg.cholesky() {
                let q = chol.solve(&rhs);
                if q.iter().all(|v| v.is_finite()) {
                    for (a, &j) in free.iter().enumerate() {
                        dir[j] = q[a];
                    }
                    return dir;
                }
            }
            mu = 10.0 * mu.max(1e-12 * scale);
        }
        for &j in &free {
            dir[j] = -g[j] / scale;
        }
        dir
    }

    /// `J(m + δ) − J(m)` without cancellation.
    fn delta(&self, step: &[f64], cov: &[f64], new_cov: &[f64]) -> f64 {
        let attraction: Vec<f64> = self
            .rows
            .iter()
            .zip(self.weights)
            .zip(cov.iter().zip(new_cov))
            .map(|((row, &lam), (&s, &t))| {
                let ds: f64 = row.iter().map(|&(j, k)| k * step[j]).sum();
                let denom = s.sqrt() + t.sqrt();
                if denom > 0.0 {
                    lam * ds / denom
                } else {
                    0.0
                }
            })
            .collect();
        pairwise_sum(step) - 2.0 * pairwise_sum(&attraction)
    }
}

fn kkt_violation(m: &[f64], g: &[f64], tol: f64) -> f64 {
    m.iter()
        .zip(g)
        .map(|(&mj, &gj)| if mj > tol { gj.abs() } else { (-gj).max(0.0) })
        .fold(0.0, f64::max)
}

/// Solves the grid-restricted problem for a discrete input.
pub fn solve_on_grid(rho: &DiscreteMeasure, kappa: Kappa, grid_n: usize, opts: OracleOptions) -> Result<GridSolution> {
    if !(opts.tol > 0.0 && opts.tol.is_finite()) {
        return Err(Error::Config(format!("oracle tolerance must be positive, got {}", opts.tol)));
    }
    let positions = grid_nodes(rho.domain(), grid_n)?;
    let rows: Vec<Vec<(usize, f64)>> = rho
        .points()
        .iter()
        .map(|x| {
            positions
                .iter()
                .enumerate()
                .filter_map(|(j, z)| {
                    let k = cos2_kernel(x, z, kappa);
                    (k > 0.0).then_some((j, k))
                })
                .collect()
        })
        .collect();
    let problem = Problem {
        weights: rho.weights(),
        rows,
        nodes: positions.len(),
    };

    // Start from the small-κ limit: λ_i² on the node nearest to x_i.
    let mut m = vec![0.0; positions.len()];
    for (x, &lam) in rho.points().iter().zip(rho.weights()) {
        let nearest = (0..positions.len())
            .min_by(|&a, &b| positions[a].dist(x).total_cmp(&positions[b].dist(x)))
            .expect("grid is not empty");
        m[nearest] += lam * lam;
    }
    let mut cov = problem.coverage(&m);
    let mut g = problem.gradient(&cov);
    let mut iterations = 0;
    loop {
        let violation = kkt_violation(&m, &g, opts.tol);
        if violation <= opts.tol {
            let objective = problem.objective(&m, &cov);
            return Ok(GridSolution {
                positions,
                masses: m,
                objective,
                iterations,
                stationarity: violation,
            });
        }
        if iterations >= opts.max_iters {
            return Err(Error::NoConvergence {
                iterations,
                residual: violation,
            });
        }
        iterations += 1;

        let dir = problem.direction(&m, &g, &cov);
        let mut lambda = 1.0;
        let mut accepted = None;
        for _ in 0..60 {
            let next: Vec<f64> = m.iter().zip(&dir).map(|(a, d)| (a + lambda * d).max(0.0)).collect();
            let step: Vec<f64> = next.iter().zip(&m).map(|(a, b)| a - b).collect();
            let predicted: f64 = step.iter().zip(&g).filter(|(s, _)| **s != 0.0).map(|(s, gj)| s * gj).sum();
            let next_cov = problem.coverage(&next);
            let covered = cov.iter().zip(&next_cov).all(|(&s, &t)| s <= 0.0 || t > 0.0);
            if predicted < 0.0 && covered {
                let change = problem.delta(&step, &cov, &next_cov);
                if change <= ARMIJO * predicted {
                    accepted = Some((next, next_cov));
                    break;
                }
            }
            lambda *= 0.5;
        }
        let Some((next, next_cov)) = accepted else {
            return Err(Error::NoConvergence {
                iterations,
                residual: violation,
            });
        };
        m = next;
        cov = next_cov;
        g = problem.gradient(&cov);
    }
}

/// Grid solution together with its nodes as a measure in `dim` dimensions.
pub fn oracle_measure(rho: &DiscreteMeasure, kappa: Kappa, grid_n: usize, opts: OracleOptions) -> Result<(GridSolution, ParticleMeasure)> {
    let sol = solve_on_grid(rho, kappa, grid_n, opts)?;
    let nu = sol.measure(rho.domain().dim())?;
    Ok((sol, nu))
}
