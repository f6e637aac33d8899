//! Globally adaptive Gauss–Kronrod (7–15) quadrature for vector-valued
//! integrands, seeded with caller-supplied breakpoints.
//!
//! All components share one adaptive partition. The error of a subinterval is
//! the largest componentwise `|K15 - G7|` difference, and refinement continues
//! until the summed error is below the absolute tolerance.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::error::{Error, Result};
use crate::sum::pairwise_sum_by;

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_5,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_48,
    0.0,
];

const WGK: [f64; 8] = [
    0.022_935_322_010_529_224,
    0.063_092_092_629_978_56,
    0.104_790_010_322_250_19,
    0.140_653_259_715_525_92,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_42,
    0.204_432_940_075_298_89,
    0.209_482_141_084_727_82,
];

// Gauss weights for XGK[1], XGK[3], XGK[5] and the center.
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_64,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct QuadOptions {
    pub abs_tol: f64,
    pub max_subdivisions: usize,
}

impl Default for QuadOptions {
    fn default() -> Self {
        QuadOptions {
            abs_tol: 1e-10,
            max_subdivisions: 10_000,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct QuadResult {
    pub values: Vec<f64>,
    /// Summed error estimate; bounds every component's error estimate.
    pub error: f64,
    pub intervals: usize,
    pub evaluations: usize,
}

struct Segment {
    a: f64,
    b: f64,
    values: Vec<f64>,
    error: f64,
}

#[derive(PartialEq)]
struct Pending(f64, usize);

impl Eq for Pending {}

impl PartialOrd for Pending {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Pending {
    fn cmp(&self, other: &Self) -> Ordering {
        // Largest error first; lower index wins ties so refinement order is fixed.
        self.0.total_cmp(&other.0).then(other.1.cmp(&self.1))
    }
}

fn gk15<F: FnMut(f64, &mut [f64])>(
    f: &mut F,
    a: f64,
    b: f64,
    n: usize,
    scratch: &mut [Vec<f64>; 2],
) -> (Vec<f64>, f64) {
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let mut kron = vec![0.0; n];
    let mut gauss = vec![0.0; n];

    f(center, &mut scratch[0]);
    for c in 0..n {
        kron[c] = WGK[7] * scratch[0][c];
        gauss[c] = WG[3] * scratch[0][c];
    }
    for (j, &x) in XGK[..7].iter().enumerate() {
        let dx = half * x;
        f(center - dx, &mut scratch[0]);
        f(center + dx, &mut scratch[1]);
        for c in 0..n {
            let pair = scratch[0][c] + scratch[1][c];
            kron[c] += WGK[j] * pair;
            if j % 2 == 1 {
                gauss[c] += WG[j / 2] * pair;
            }
        }
    }
    let mut err = 0.0f64;
    for c in 0..n {
        kron[c] *= half;
        gauss[c] *= half;
        err = err.max((kron[c] - gauss[c]).abs());
    }
    (kron, err)
}

/// Integrates `f` over `[a, b]`; `f(x, out)` writes `n` components into `out`.
///
/// Breakpoints strictly inside `(a, b)` seed the initial partition; points
/// outside are ignored.
pub fn integrate<F>(
    f: F,
    n: usize,
    a: f64,
    b: f64,
    breakpoints: &[f64],
    opts: QuadOptions,
) -> Result<QuadResult>
where
    F: FnMut(f64, &mut [f64]),
{
    let r = integrate_unchecked(f, n, a, b, breakpoints, opts)?;
    if r.error > opts.abs_tol {
        return Err(Error::QuadratureNoConvergence {
            achieved: r.error,
            intervals: r.intervals,
        });
    }
    Ok(r)
}

/// Like [`integrate`], but returns the best estimate when the tolerance is
/// not met within the subdivision budget.
pub(crate) fn integrate_unchecked<F>(
    f: F,
    n: usize,
    a: f64,
    b: f64,
    breakpoints: &[f64],
    opts: QuadOptions,
) -> Result<QuadResult>
where
    F: FnMut(f64, &mut [f64]),
{
    let Some(edges) = initial_edges(a, b, breakpoints)? else {
        return Ok(QuadResult {
            values: vec![0.0; n],
            error: 0.0,
            intervals: 0,
            evaluations: 0,
        });
    };
    let (segments, evaluations) = adaptive(f, n, &edges, opts);
    let error = pairwise_sum_by(segments.len(), |i| segments[i].error);
    let values = (0..n)
        .map(|c| pairwise_sum_by(segments.len(), |i| segments[i].values[c]))
        .collect();
    Ok(QuadResult {
        values,
        error,
        intervals: segments.len(),
        evaluations,
    })
}

/// Running integrals `∫_a^t f` at every node `t`.
#[derive(Clone, Debug, PartialEq)]
pub struct Cumulative {
    /// Sorted, deduplicated nodes including both end points.
    pub nodes: Vec<f64>,
    /// `values[k * n + c]` is component `c` integrated from `a` to `nodes[k]`.
    pub values: Vec<f64>,
    /// Bounds the error of every running integral.
    pub error: f64,
}

impl Cumulative {
    /// Running integral of component `c` at node `k`.
    pub fn at(&self, k: usize, c: usize) -> f64 {
        let n = self.values.len() / self.nodes.len();
        self.values[k * n + c]
    }

    /// Index of the node equal to `t` (nodes are exact copies of the inputs).
    pub fn node_index(&self, t: f64) -> Option<usize> {
        self.nodes.binary_search_by(|v| v.total_cmp(&t)).ok()
    }
}

/// Like [`integrate`], but also reports the running integral at every node.
///
/// Nodes become forced breakpoints. The subdivision budget is counted on top
/// of the initial partition.
pub fn integrate_cumulative<F>(
    f: F,
    n: usize,
    a: f64,
    b: f64,
    nodes: &[f64],
    opts: QuadOptions,
) -> Result<Cumulative>
where
    F: FnMut(f64, &mut [f64]),
{
    let Some(edges) = initial_edges(a, b, nodes)? else {
        return Ok(Cumulative {
            nodes: vec![a],
            values: vec![0.0; n],
            error: 0.0,
        });
    };
    let budget = QuadOptions {
        max_subdivisions: opts.max_subdivisions + edges.len(),
        ..opts
    };
    let (segments, _) = adaptive(f, n, &edges, budget);
    let error = pairwise_sum_by(segments.len(), |i| segments[i].error);
    if error > opts.abs_tol {
        return Err(Error::QuadratureNoConvergence {
            achieved: error,
            intervals: segments.len(),
        });
    }
    let mut values = vec![0.0; edges.len() * n];
    // Compensated running sums keep the prefix error at rounding level.
    let mut acc = vec![(0.0f64, 0.0f64); n];
    let mut seg = segments.iter().peekable();
    for k in 1..edges.len() {
        while let Some(s) = seg.next_if(|s| s.a < edges[k]) {
            for (c, (sum, comp)) in acc.iter_mut().enumerate() {
                let v = s.values[c];
                let t = *sum + v;
                if sum.abs() >= v.abs() {
                    *comp += (*sum - t) + v;
                } else {
                    *comp += (v - t) + *sum;
                }
                *sum = t;
            }
        }
        for (c, (sum, comp)) in acc.iter().enumerate() {
            values[k * n + c] = sum + comp;
        }
    }
    Ok(Cumulative {
        nodes: edges,
        values,
        error,
    })
}

/// `a`, the breakpoints inside `(a, b)`, and `b`; `None` for an empty interval.
fn initial_edges(a: f64, b: f64, breakpoints: &[f64]) -> Result<Option<Vec<f64>>> {
    if !(a.is_finite() && b.is_finite()) {
        return Err(Error::NonFinite("integration limits"));
    }
    if b <= a {
        return Ok(None);
    }
    let mut cuts: Vec<f64> = breakpoints
        .iter()
        .copied()
        .filter(|&t| t > a && t < b && t.is_finite())
        .collect();
    cuts.sort_by(f64::total_cmp);
    cuts.dedup();
    let mut edges = Vec::with_capacity(cuts.len() + 2);
    edges.push(a);
    edges.extend(cuts);
    edges.push(b);
    Ok(Some(edges))
}

/// Refines the partition given by `edges`; returns segments sorted by position.
fn adaptive<F>(mut f: F, n: usize, edges: &[f64], opts: QuadOptions) -> (Vec<Segment>, usize)
where
    F: FnMut(f64, &mut [f64]),
{
    let mut scratch = [vec![0.0; n], vec![0.0; n]];
    let mut segments: Vec<Segment> = Vec::with_capacity(edges.len() * 2);
    let mut heap = BinaryHeap::new();
    let mut total_err = 0.0;
    let mut evaluations = 0;
    for w in edges.windows(2) {
        let (values, error) = gk15(&mut f, w[0], w[1], n, &mut scratch);
        evaluations += 15;
        total_err += error;
        heap.push(Pending(error, segments.len()));
        segments.push(Segment {
            a: w[0],
            b: w[1],
            values,
            error,
        });
    }

    let mut frozen_err = 0.0;
    while total_err + frozen_err > opts.abs_tol && segments.len() < opts.max_subdivisions {
        let Some(Pending(err, idx)) = heap.pop() else { break };
        if err == 0.0 {
            break;
        }
        let (sa, sb) = (segments[idx].a, segments[idx].b);
        let mid = 0.5 * (sa + sb);
        if mid <= sa || mid >= sb {
            // Cannot split further in floating point.
            total_err -= err;
            frozen_err += err;
            continue;
        }
        let (lv, le) = gk15(&mut f, sa, mid, n, &mut scratch);
        let (rv, re) = gk15(&mut f, mid, sb, n, &mut scratch);
        evaluations += 30;
        total_err += le + re - err;
        segments[idx] = Segment {
            a: sa,
            b: mid,
            values: lv,
            error: le,
        };
        heap.push(Pending(le, idx));
        heap.push(Pending(re, segments.len()));
        segments.push(Segment {
            a: mid,
            b: sb,
            values: rv,
            error: re,
        });
    }
    segments.sort_by(|s, t| s.a.total_cmp(&t.a));
    (segments, evaluations)
}

/// Scalar convenience wrapper.
pub fn integrate_scalar<F: FnMut(f64) -> f64>(
    mut f: F,
    a: f64,
    b: f64,
    breakpoints: &[f64],
    opts: QuadOptions,
) -> Result<(f64, f64)> {
    let r = integrate(|x, out| out[0] = f(x), 1, a, b, breakpoints, opts)?;
    Ok((r.values[0], r.error))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::{FRAC_PI_2, PI};

    #[test]
    fn polynomials_are_exact() {
        let (v, _) = integrate_scalar(|x| x.powi(7) - 3.0 * x * x, 0.0, 2.0, &[], QuadOptions::default()).unwrap();
        assert!((v - (32.0 - 8.0)).abs() < 1e-12);
    }

    #[test]
    fn cosine_squared_integral() {
        let (v, _) = integrate_scalar(|x| x.cos().powi(2), -FRAC_PI_2, FRAC_PI_2, &[], QuadOptions::default()).unwrap();
        assert!((v - FRAC_PI_2).abs() < 1e-12);
    }

    #[test]
    fn kinks_are_resolved_with_breakpoints() {
        let f = |x: f64| (x - 0.3).abs().sqrt();
        let exact = (2.0 / 3.0) * (0.3f64.powf(1.5) + 0.7f64.powf(1.5));
        let opts = QuadOptions { abs_tol: 1e-11, max_subdivisions: 10_000 };
        let (v, err) = integrate_scalar(f, 0.0, 1.0, &[0.3], opts).unwrap();
        assert!((v - exact).abs() < 1e-10, "{v} vs {exact} (err {err})");
    }

    #[test]
    fn vector_components_share_partition() {
        let r = integrate(
            |x, out| {
                out[0] = x.sin();
                out[1] = (3.0 * x).cos().abs();
            },
            2,
            0.0,
            PI,
            &[PI / 6.0, PI / 2.0, 5.0 * PI / 6.0],
            QuadOptions::default(),
        )
        .unwrap();
        assert!((r.values[0] - 2.0).abs() < 1e-12);
        assert!((r.values[1] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn reports_non_convergence() {
        let opts = QuadOptions { abs_tol: 1e-14, max_subdivisions: 8 };
        let err = integrate_scalar(|x| 1.0 / x.sqrt(), 1e-12, 1.0, &[], opts).unwrap_err();
        assert!(matches!(err, Error::QuadratureNoConvergence { .. }));
    }

    #[test]
    fn cumulative_matches_antiderivative() {
        let nodes: Vec<f64> = (1..20).map(|k| k as f64 * 0.05).collect();
        let c = integrate_cumulative(
            |x, out| {
                out[0] = x.cos();
                out[1] = 1.0;
            },
            2,
            0.0,
            1.0,
            &nodes,
            QuadOptions::default(),
        )
        .unwrap();
        assert_eq!(c.nodes.len(), 21);
        for (k, &t) in c.nodes.iter().enumerate() {
            assert!((c.at(k, 0) - t.sin()).abs() < 1e-12);
            assert!((c.at(k, 1) - t).abs() < 1e-14);
        }
        assert_eq!(c.node_index(nodes[4]), Some(5));
        assert_eq!(c.node_index(0.251), None);
    }

    #[test]
    fn empty_interval_is_zero() {
        let (v, e) = integrate_scalar(|x| x, 1.0, 1.0, &[], QuadOptions::default()).unwrap();
        assert_eq!((v, e), (0.0, 0.0));
    }
}
