//! Creating, removing and merging atoms.

use super::SolverConfig;
use crate::certificate::CertificateReport;
use crate::closed_form::cd_constant;
use crate::error::Result;
use crate::measure::{InputMeasure, Kappa, ParticleMeasure, Point};
use crate::neighbors::PointIndex;
use crate::objective::{AtomMove, Evaluator};

/// Initial guess for a solve without warm start.
///
/// Discrete inputs start from the small-κ limit (atom `x_i` with mass `λ_i²`).
/// Inputs with more than `init_bin_threshold` points are first aggregated into
/// cells of side `κπ/8`. Densities start from `⌈diam/(κπ/2)⌉ + 1` equally
/// spaced atoms of mass `C_d κ^d ρ̄²`, with `ρ̄` the mean density.
pub fn init_particles(rho: &InputMeasure, kappa: Kappa, cfg: &SolverConfig) -> Result<ParticleMeasure> {
    match rho {
        InputMeasure::Discrete(d) => {
            if d.len() <= cfg.init_bin_threshold {
                let masses = d.weights().iter().map(|l| l * l).collect();
                return ParticleMeasure::new(d.domain().dim(), d.points().to_vec(), masses);
            }
            let (points, weights) = bin_points(d.points(), d.weights(), d.domain().dim(), kappa.get() * std::f64::consts::PI / 8.0);
            let masses = weights.iter().map(|l| l * l).collect();
            ParticleMeasure::new(d.domain().dim(), points, masses)
        }
        InputMeasure::Density(d) => {
            let (lo, hi) = (d.domain().lower().x(), d.domain().upper().x());
            let diam = hi - lo;
            let n = (diam / kappa.radius()).ceil() as usize + 1;
            let mean_density = 1.0 / diam;
            let mass = cd_constant(1)? * kappa.get() * mean_density * mean_density;
            let atoms: Vec<(f64, f64)> = (0..n)
                .map(|k| (lo + diam * k as f64 / (n - 1) as f64, mass))
                .collect();
            ParticleMeasure::from_atoms_1d(&atoms)
        }
    }
}

/// Aggregates weighted points into square cells: one point per nonempty cell
/// at the weighted mean, carrying the summed weight. Cells are emitted in
/// row-major order.
fn bin_points(points: &[Point], weights: &[f64], dim: usize, side: f64) -> (Vec<Point>, Vec<f64>) {
    let mut lo = [f64::INFINITY; 2];
    for p in points {
        for k in 0..dim {
            lo[k] = lo[k].min(p.0[k]);
        }
    }
    let key = |p: &Point| -> (i64, i64) {
        let c = |k: usize| ((p.0[k] - lo[k]) / side).floor() as i64;
        if dim == 1 {
            (0, c(0))
        } else {
            (c(1), c(0))
        }
    };
    let mut order: Vec<usize> = (0..points.len()).collect();
    order.sort_by_key(|&i| (key(&points[i]), i));
    let mut out_p = Vec::new();
    let mut out_w = Vec::new();
    let mut start = 0;
    while start < order.len() {
        let k0 = key(&points[order[start]]);
        let mut end = start;
        let mut w = 0.0;
        let mut acc = Point::default();
        while end < order.len() && key(&points[order[end]]) == k0 {
            let i = order[end];
            w += weights[i];
            acc = acc.add_scaled(&points[i], weights[i]);
            end += 1;
        }
        out_p.push(acc.scale(1.0 / w));
        out_w.push(w);
        start = end;
    }
    (out_p, out_w)
}

/// Groups atoms closer than `radius` (transitively). Groups are listed by
/// their first member; members keep their original order.
fn merge_groups(nu: &ParticleMeasure, radius: f64) -> Vec<Vec<usize>> {
    let n = nu.len();
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(parent: &mut [usize], mut i: usize) -> usize {
        while parent[i] != i {
            parent[i] = parent[parent[i]];
            i = parent[i];
        }
        i
    }
    if radius > 0.0 && n > 1 {
        let index = PointIndex::new(nu.positions(), nu.dim(), radius);
        for i in 0..n {
            let p = nu.positions()[i];
            index.for_each_candidate(&p, |j| {
                if j > i && nu.positions()[j].dist(&p) < radius {
                    let (a, b) = (find(&mut parent, i), find(&mut parent, j));
                    if a != b {
                        parent[a.max(b)] = a.min(b);
                    }
                }
            });
        }
    }
    let mut groups: Vec<Vec<usize>> = Vec::new();
    let mut slot = vec![usize::MAX; n];
    for i in 0..n {
        let r = find(&mut parent, i);
        if slot[r] == usize::MAX {
            slot[r] = groups.len();
            groups.push(Vec::new());
        }
        groups[slot[r]].push(i);
    }
    groups
}

/// Replaces each group by one atom at the mass-weighted mean with the summed mass.
fn merge_selected(nu: &ParticleMeasure, groups: &[Vec<usize>], selected: &[bool]) -> Result<ParticleMeasure> {
    let mut positions = Vec::with_capacity(groups.len());
    let mut masses = Vec::with_capacity(groups.len());
    for (g, &sel) in groups.iter().zip(selected) {
        if !sel || g.len() == 1 {
            for &i in g {
                positions.push(nu.positions()[i]);
                masses.push(nu.masses()[i]);
            }
            continue;
        }
        let total: f64 = g.iter().map(|&i| nu.masses()[i]).sum();
        let center = if total > 0.0 {
            g.iter()
                .fold(Point::default(), |acc, &i| acc.add_scaled(&nu.positions()[i], nu.masses()[i] / total))
        } else {
            nu.positions()[g[0]]
        };
        positions.push(center);
        masses.push(total);
    }
    ParticleMeasure::new(nu.dim(), positions, masses)
}

/// Drops atoms with mass at most `prune_mass` and merges atoms closer than
/// `merge_radius_factor · κ`, repeating until nothing changes.
pub fn prune_and_merge(nu: &ParticleMeasure, kappa: Kappa, cfg: &SolverConfig) -> Result<ParticleMeasure> {
    let radius = cfg.merge_radius_factor * kappa.get();
    let mut cur = nu.pruned(cfg.prune_mass);
    loop {
        let groups = merge_groups(&cur, radius);
        if groups.len() == cur.len() {
            return Ok(cur);
        }
        cur = merge_selected(&cur, &groups, &vec![true; groups.len()])?;
    }
}

/// Counts of structural changes made by [`prune_and_merge_checked`].
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub(crate) struct Cleanup {
    pub prunes: usize,
    pub merges: usize,
}

/// Moves that collapse each selected group onto its mass-weighted mean.
fn merge_moves(nu: &ParticleMeasure, groups: &[Vec<usize>], selected: &[bool]) -> Result<(ParticleMeasure, Vec<AtomMove>)> {
    let merged = merge_selected(nu, groups, selected)?;
    let mut moves = Vec::new();
    let mut k = 0;
    for (g, &sel) in groups.iter().zip(selected) {
        if !sel || g.len() == 1 {
            k += g.len();
            continue;
        }
        let center = merged.positions()[k];
        for &i in g {
            moves.push(AtomMove {
                from: nu.positions()[i],
                from_mass: nu.masses()[i],
                to: center,
                to_mass: nu.masses()[i],
            });
        }
        k += 1;
    }
    Ok((merged, moves))
}

fn removal(nu: &ParticleMeasure, j: usize) -> AtomMove {
    let p = nu.positions()[j];
    AtomMove {
        from: p,
        from_mass: nu.masses()[j],
        to: p,
        to_mass: 0.0,
    }
}

/// Objective-aware pruning and merging: a change is kept only if it does not
/// increase J. `value` is the objective of `nu` and is updated by the exact
/// differences of the accepted changes.
pub(crate) fn prune_and_merge_checked(
    eval: &Evaluator,
    nu: ParticleMeasure,
    value: f64,
    cfg: &SolverConfig,
) -> Result<(ParticleMeasure, f64, Cleanup)> {
    let mut stats = Cleanup::default();
    let (mut cur, mut value) = (nu, value);

    let small: Vec<usize> = (0..cur.len()).filter(|&j| cur.masses()[j] <= cfg.prune_mass).collect();
    if !small.is_empty() {
        let moves: Vec<AtomMove> = small.iter().map(|&j| removal(&cur, j)).collect();
        let delta = eval.objective_delta(&cur, &moves)?;
        if delta <= 0.0 {
            stats.prunes += small.len();
            cur = cur.pruned(cfg.prune_mass);
            value += delta;
        } else {
            for &j in small.iter().rev() {
                let delta = eval.objective_delta(&cur, &[removal(&cur, j)])?;
                if delta <= 0.0 {
                    stats.prunes += 1;
                    cur.remove(j);
                    value += delta;
                }
            }
        }
    }

    let radius = cfg.merge_radius_factor * eval.kappa().get();
    loop {
        let groups = merge_groups(&cur, radius);
        if groups.len() == cur.len() {
            break;
        }
        let (merged, moves) = merge_moves(&cur, &groups, &vec![true; groups.len()])?;
        let delta = eval.objective_delta(&cur, &moves)?;
        if delta <= 0.0 {
            stats.merges += cur.len() - merged.len();
            cur = merged;
            value += delta;
            continue;
        }
        // Fall back to one group at a time, last group first so that earlier
        // indices stay valid.
        let mut any = false;
        for k in (0..groups.len()).rev() {
            if groups[k].len() < 2 {
                continue;
            }
            let mut sel = vec![false; groups.len()];
            sel[k] = true;
            let (merged, moves) = merge_moves(&cur, &groups, &sel)?;
            let delta = eval.objective_delta(&cur, &moves)?;
            if delta <= 0.0 {
                stats.merges += groups[k].len() - 1;
                cur = merged;
                value += delta;
                any = true;
                break;
            }
        }
        if !any {
            break;
        }
    }
    Ok((cur, value, stats))
}

/// Adds atoms at certificate violations, largest first, at least `merge
/// radius` apart, up to the per-round cap. Each insertion starts at
/// `insertion_mass` and is halved until it strictly decreases J. Returns the
/// number of atoms added and the total change in J.
pub(crate) fn insert_at_violations(
    eval: &Evaluator,
    nu: &mut ParticleMeasure,
    cert: &CertificateReport,
    cfg: &SolverConfig,
) -> Result<(usize, f64)> {
    let threshold = 1.0 + cfg.feas_tol;
    let radius = cfg.merge_radius_factor * eval.kappa().get();
    let mut sites: Vec<Point> = Vec::new();
    for &(p, f) in &cert.violations {
        if sites.len() >= cfg.max_insertions_per_round {
            break;
        }
        if f > threshold && sites.iter().all(|q| q.dist(&p) >= radius) {
            sites.push(p);
        }
    }
    let mut inserted = 0;
    let mut total = 0.0;
    for p in sites {
        let mut m = cfg.insertion_mass;
        for _ in 0..48 {
            let delta = eval.insertion_delta(nu, &p, m)?;
            if delta < 0.0 {
                nu.push(p, m);
                inserted += 1;
                total += delta;
                break;
            }
            m *= 0.5;
        }
    }
    Ok((inserted, total))
}
