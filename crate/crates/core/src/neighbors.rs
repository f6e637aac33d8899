//! Fixed-radius neighbor queries over a static point set.

use crate::measure::Point;

/// Index answering "which points lie within `radius` of `center`" for a fixed radius.
///
/// The visiting order depends only on the indexed points, never on the query,
/// beyond which points qualify.
#[derive(Clone, Debug)]
pub struct PointIndex {
    radius: f64,
    kind: IndexKind,
}

#[derive(Clone, Debug)]
enum IndexKind {
    /// Point indices sorted by first coordinate, with the sorted coordinates.
    Line { order: Vec<usize>, xs: Vec<f64> },
    /// Uniform buckets of side at least `radius`.
    Grid {
        origin: [f64; 2],
        cell: f64,
        cols: usize,
        rows: usize,
        cells: Vec<Vec<usize>>,
    },
}

impl PointIndex {
    pub fn new(points: &[Point], dim: usize, radius: f64) -> Self {
        assert!(radius > 0.0 && radius.is_finite());
        if dim == 1 {
            let mut order: Vec<usize> = (0..points.len()).collect();
            order.sort_by(|&a, &b| points[a].0[0].total_cmp(&points[b].0[0]).then(a.cmp(&b)));
            let xs = order.iter().map(|&i| points[i].0[0]).collect();
            return PointIndex {
                radius,
                kind: IndexKind::Line { order, xs },
            };
        }
        let (mut lo, mut hi) = ([f64::INFINITY; 2], [f64::NEG_INFINITY; 2]);
        for p in points {
            for k in 0..2 {
                lo[k] = lo[k].min(p.0[k]);
                hi[k] = hi[k].max(p.0[k]);
            }
        }
        if points.is_empty() {
            lo = [0.0; 2];
            hi = [0.0; 2];
        }
        let cell = radius.max((hi[0] - lo[0]).max(hi[1] - lo[1]) / 1024.0);
        let cols = ((hi[0] - lo[0]) / cell).floor() as usize + 1;
        let rows = ((hi[1] - lo[1]) / cell).floor() as usize + 1;
        let mut cells = vec![Vec::new(); cols * rows];
        let index = |p: &Point| -> usize {
            let c = (((p.0[0] - lo[0]) / cell) as usize).min(cols - 1);
            let r = (((p.0[1] - lo[1]) / cell) as usize).min(rows - 1);
            r * cols + c
        };
        for (i, p) in points.iter().enumerate() {
            cells[index(p)].push(i);
        }
        PointIndex {
            radius,
            kind: IndexKind::Grid {
                origin: lo,
                cell,
                cols,
                rows,
                cells,
            },
        }
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    /// Calls `f(i)` for every indexed point that may lie within `radius` of
    /// `center` (a superset: callers evaluate the kernel, which vanishes outside).
    #[inline]
    pub fn for_each_candidate<F: FnMut(usize)>(&self, center: &Point, mut f: F) {
        match &self.kind {
            IndexKind::Line { order, xs } => {
                let lo = center.0[0] - self.radius;
                let hi = center.0[0] + self.radius;
                let start = xs.partition_point(|&x| x < lo);
                for (k, &x) in xs[start..].iter().enumerate() {
                    if x > hi {
                        break;
                    }
                    f(order[start + k]);
                }
            }
            IndexKind::Grid {
                origin,
                cell,
                cols,
                rows,
                cells,
            } => {
                let cell_of = |v: f64, o: f64, n: usize| -> (usize, usize) {
                    let lo = ((v - self.radius - o) / cell).floor();
                    let hi = ((v + self.radius - o) / cell).floor();
                    let clamp = |t: f64| t.max(0.0).min((n - 1) as f64) as usize;
                    (clamp(lo), clamp(hi))
                };
                let (c0, c1) = cell_of(center.0[0], origin[0], *cols);
                let (r0, r1) = cell_of(center.0[1], origin[1], *rows);
                for r in r0..=r1 {
                    for c in c0..=c1 {
                        for &i in &cells[r * cols + c] {
                            f(i);
                        }
                    }
                }
            }
        }
    }
}
