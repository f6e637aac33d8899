//! Single-linkage clustering.
//!
//! The merge tree is read off a minimum spanning tree (Prim, O(n²) time,
//! O(n) memory): sorting its edges by length and joining components with a
//! union-find gives exactly the single-linkage merges. Cluster ids follow the
//! usual convention: leaves are `0..n`, and merge `k` creates cluster `n + k`.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::measure::Point;

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Merge {
    /// The smaller of the two merged cluster ids.
    pub a: usize,
    pub b: usize,
    pub distance: f64,
    /// Number of points in the new cluster.
    pub size: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Dendrogram {
    pub n_points: usize,
    pub merges: Vec<Merge>,
}

impl Dendrogram {
    pub fn distances(&self) -> Vec<f64> {
        self.merges.iter().map(|m| m.distance).collect()
    }
}

/// Minimum spanning tree edges `(i, j, length)` with `i < j`.
fn prim(points: &[Point]) -> Vec<(usize, usize, f64)> {
    let n = points.len();
    let mut in_tree = vec![false; n];
    let mut best = vec![f64::INFINITY; n];
    let mut parent = vec![0usize; n];
    let mut edges = Vec::with_capacity(n - 1);
    let mut current = 0;
    in_tree[0] = true;
    for _ in 1..n {
        let mut next = usize::MAX;
        for j in 0..n {
            if in_tree[j] {
                continue;
            }
            let d = points[current].dist(&points[j]);
            if d < best[j] {
                best[j] = d;
                parent[j] = current;
            }
            if next == usize::MAX || best[j] < best[next] {
                next = j;
            }
        }
        in_tree[next] = true;
        let (i, j) = (parent[next].min(next), parent[next].max(next));
        edges.push((i, j, best[next]));
        current = next;
    }
    edges
}

fn find(parent: &mut [usize], mut x: usize) -> usize {
    while parent[x] != x {
        parent[x] = parent[parent[x]];
        x = parent[x];
    }
    x
}

/// Exact single-linkage merge tree under the Euclidean distance. Equal
/// distances merge in order of the smaller point index, then the larger.
pub fn single_linkage(points: &[Point]) -> Result<Dendrogram> {
    let n = points.len();
    if n < 2 {
        return Err(Error::TooFewPoints(n));
    }
    if points.iter().any(|p| !p.is_finite()) {
        return Err(Error::NonFinite("single linkage points"));
    }
    let mut edges = prim(points);
    edges.sort_by(|x, y| x.2.total_cmp(&y.2).then(x.0.cmp(&y.0)).then(x.1.cmp(&y.1)));

    let mut parent: Vec<usize> = (0..n).collect();
    // Cluster id and size stored at each union-find root.
    let mut id: Vec<usize> = (0..n).collect();
    let mut size = vec![1usize; n];
    let mut merges = Vec::with_capacity(n - 1);
    for (k, (i, j, d)) in edges.into_iter().enumerate() {
        let (ri, rj) = (find(&mut parent, i), find(&mut parent, j));
        let (a, b) = (id[ri].min(id[rj]), id[ri].max(id[rj]));
        let merged = size[ri] + size[rj];
        parent[rj] = ri;
        id[ri] = n + k;
        size[ri] = merged;
        merges.push(Merge {
            a,
            b,
            distance: d,
            size: merged,
        });
    }
    Ok(Dendrogram { n_points: n, merges })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line(xs: &[f64]) -> Vec<Point> {
        xs.iter().map(|&x| Point::new1(x)).collect()
    }

    #[test]
    fn three_points() {
        let d = single_linkage(&line(&[0.0, 0.1, 0.5])).unwrap();
        assert_eq!(d.merges.len(), 2);
        assert_eq!((d.merges[0].a, d.merges[0].b, d.merges[0].size), (0, 1, 2));
        assert_eq!(d.merges[0].distance, 0.1);
        assert_eq!((d.merges[1].a, d.merges[1].b, d.merges[1].size), (2, 3, 3));
        assert!((d.merges[1].distance - 0.4).abs() < 1e-15);
    }

    #[test]
    fn equal_spacing_merges_in_index_order() {
        let d = single_linkage(&line(&[0.0, 0.25, 0.5, 0.75, 1.0])).unwrap();
        assert!(d.distances().iter().all(|&x| x == 0.25));
        let pairs: Vec<_> = d.merges.iter().map(|m| (m.a, m.b)).collect();
        assert_eq!(pairs, vec![(0, 1), (2, 5), (3, 6), (4, 7)]);
        assert_eq!(d.merges.last().unwrap().size, 5);
    }

    #[test]
    fn duplicates_merge_first() {
        let d = single_linkage(&line(&[0.3, 0.9, 0.3])).unwrap();
        assert_eq!(d.merges[0].distance, 0.0);
        assert_eq!((d.merges[0].a, d.merges[0].b), (0, 2));
    }

    #[test]
    fn needs_two_points() {
        assert_eq!(single_linkage(&line(&[0.5])), Err(Error::TooFewPoints(1)));
        assert_eq!(single_linkage(&[]), Err(Error::TooFewPoints(0)));
    }

    #[test]
    fn two_dimensional_distances_are_monotone() {
        let pts: Vec<Point> = (0..40)
            .map(|i| {
                let t = i as f64 * 0.37;
                Point::new2(t.sin().abs(), (2.0 * t).cos().abs())
            })
            .collect();
        let d = single_linkage(&pts).unwrap();
        assert_eq!(d.merges.len(), 39);
        assert!(d.distances().windows(2).all(|w| w[0] <= w[1]));
        assert_eq!(d.merges.last().unwrap().size, 40);
    }
}
