//! Fixed-radius clustering of same-frame detections.

use crate::geometry::{wrap_angle, Detection, Point2};

/// Static 2-D k-d tree over a point set, supporting fixed-radius queries.
pub struct KdTree {
    points: Vec<Point2>,
    /// Point indices arranged so every subtree occupies a contiguous range
    /// with its splitting point at the range midpoint.
    order: Vec<usize>,
}

impl KdTree {
    pub fn build(points: &[Point2]) -> Self {
        let mut order: Vec<usize> = (0..points.len()).collect();
        Self::build_range(points, &mut order, 0);
        Self {
            points: points.to_vec(),
            order,
        }
    }

    fn coord(p: &Point2, axis: usize) -> f64 {
        if axis == 0 {
            p.x
        } else {
            p.y
        }
    }

    fn build_range(points: &[Point2], idx: &mut [usize], axis: usize) {
        if idx.len() <= 1 {
            return;
        }
        let mid = idx.len() / 2;
        idx.select_nth_unstable_by(mid, |&a, &b| {
            Self::coord(&points[a], axis)
                .total_cmp(&Self::coord(&points[b], axis))
                .then(a.cmp(&b))
        });
        let (left, right) = idx.split_at_mut(mid);
        Self::build_range(points, left, 1 - axis);
        Self::build_range(points, &mut right[1..], 1 - axis);
    }

    /// Indices of all points within `radius` (inclusive) of `q`, ascending.
    pub fn within(&self, q: &Point2, radius: f64) -> Vec<usize> {
        let mut out = Vec::new();
        self.search(0, self.order.len(), 0, q, radius, &mut out);
        out.sort_unstable();
        out
    }

    fn search(&self, lo: usize, hi: usize, axis: usize, q: &Point2, r: f64, out: &mut Vec<usize>) {
        if lo >= hi {
            return;
        }
        let mid = lo + (hi - lo) / 2;
        let idx = self.order[mid];
        let p = &self.points[idx];
        if p.dist(q) <= r {
            out.push(idx);
        }
        let d = Self::coord(q, axis) - Self::coord(p, axis);
        if d <= r {
            self.search(lo, mid, 1 - axis, q, r, out);
        }
        if d >= -r {
            self.search(mid + 1, hi, 1 - axis, q, r, out);
        }
    }
}

/// Disjoint-set forest with path halving and union by index (smaller root wins).
pub struct UnionFind {
    parent: Vec<usize>,
}

impl UnionFind {
    pub fn new(n: usize) -> Self {
        Self {
            parent: (0..n).collect(),
        }
    }

    pub fn find(&mut self, mut a: usize) -> usize {
        while self.parent[a] != a {
            self.parent[a] = self.parent[self.parent[a]];
            a = self.parent[a];
        }
        a
    }

    pub fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            let (lo, hi) = if ra < rb { (ra, rb) } else { (rb, ra) };
            self.parent[hi] = lo;
        }
    }
}

/// Single-linkage clusters (distance ≤ `radius`), each listed by ascending
/// member index, clusters ordered by their smallest member.
pub fn single_linkage(points: &[Point2], radius: f64) -> Vec<Vec<usize>> {
    let tree = KdTree::build(points);
    let mut uf = UnionFind::new(points.len());
    for (i, p) in points.iter().enumerate() {
        for j in tree.within(p, radius) {
            if j > i {
                uf.union(i, j);
            }
        }
    }
    let mut clusters: Vec<Vec<usize>> = Vec::new();
    let mut slot = vec![usize::MAX; points.len()];
    for i in 0..points.len() {
        let root = uf.find(i);
        if slot[root] == usize::MAX {
            slot[root] = clusters.len();
            clusters.push(Vec::new());
        }
        clusters[slot[root]].push(i);
    }
    clusters
}

#[derive(Clone, Copy)]
struct Weighted {
    det: Detection,
    weight: f64,
}

fn centroid(members: &[Weighted]) -> Weighted {
    if let [single] = members {
        return *single;
    }
    let total: f64 = members.iter().map(|m| m.weight).sum();
    let x = members.iter().map(|m| m.weight * m.det.x).sum::<f64>() / total;
    let y = members.iter().map(|m| m.weight * m.det.y).sum::<f64>() / total;

    let with_yaw: Vec<_> = members.iter().filter_map(|m| m.det.yaw.map(|a| (m.weight, a))).collect();
    let yaw = (!with_yaw.is_empty()).then(|| {
        let s: f64 = with_yaw.iter().map(|(w, a)| w * a.sin()).sum();
        let c: f64 = with_yaw.iter().map(|(w, a)| w * a.cos()).sum();
        wrap_angle(s.atan2(c))
    });
    let with_v: Vec<_> = members.iter().filter_map(|m| m.det.v.map(|v| (m.weight, v))).collect();
    let v = (!with_v.is_empty()).then(|| {
        let w: f64 = with_v.iter().map(|(w, _)| w).sum();
        with_v.iter().map(|(w, v)| w * v).sum::<f64>() / w
    });
    Weighted {
        det: Detection { x, y, yaw, v },
        weight: total,
    }
}

/// Replaces every single-linkage cluster (distance ≤ `d_mrg`) by its centroid
/// and repeats until no two outputs lie within `d_mrg`, which makes the result
/// a fixed point. Centroids weight members by the number of original
/// detections they represent; yaw uses a circular mean and speed is averaged
/// over members that report it. Output is ordered by the smallest original
/// index in each cluster; isolated detections pass through unchanged.
pub fn merge_overlaps(dets: &[Detection], d_mrg: f64) -> Vec<Detection> {
    let mut current: Vec<Weighted> = dets.iter().map(|&det| Weighted { det, weight: 1.0 }).collect();
    loop {
        let points: Vec<Point2> = current.iter().map(|w| w.det.position()).collect();
        let clusters = single_linkage(&points, d_mrg);
        if clusters.len() == current.len() {
            return current.into_iter().map(|w| w.det).collect();
        }
        current = clusters
            .iter()
            .map(|members| {
                let m: Vec<Weighted> = members.iter().map(|&i| current[i]).collect();
                centroid(&m)
            })
            .collect();
    }
}
