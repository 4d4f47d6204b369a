use serde::{Deserialize, Serialize};

use super::lidar::LidarScan;

/// A conic has five degrees of freedom plus scale.
pub const MIN_FIT_POINTS: usize = 6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointCluster {
    pub points: Vec<[f64; 2]>,
    pub source_scan_time: f64,
}

impl PointCluster {
    pub fn new(points: Vec<[f64; 2]>, source_scan_time: f64) -> Self {
        Self {
            points,
            source_scan_time,
        }
    }

    pub fn centroid(&self) -> [f64; 2] {
        let n = self.points.len().max(1) as f64;
        let (sx, sy) = self
            .points
            .iter()
            .fold((0.0, 0.0), |(sx, sy), p| (sx + p[0], sy + p[1]));
        [sx / n, sy / n]
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ClusterOutput {
    /// Clusters with at least [`MIN_FIT_POINTS`] points.
    pub clusters: Vec<PointCluster>,
    /// Clusters too small to fit a conic.
    pub unfittable: Vec<PointCluster>,
}

fn find(parent: &mut [usize], mut i: usize) -> usize {
    while parent[i] != i {
        parent[i] = parent[parent[i]];
        i = parent[i];
    }
    i
}

/// Single-linkage clustering of the scan's hit points: any two points closer
/// than `eps` end up in the same cluster. Clusters are ordered by their first
/// beam index, points by beam index.
pub fn cluster_points(scan: &LidarScan, eps: f64) -> ClusterOutput {
    assert!(eps > 0.0, "cluster gap threshold must be positive");
    let hits = scan.hit_points();
    let n = hits.len();
    let mut parent: Vec<usize> = (0..n).collect();
    let eps2 = eps * eps;
    for i in 0..n {
        for j in (i + 1)..n {
            let dx = hits[i].1[0] - hits[j].1[0];
            let dy = hits[i].1[1] - hits[j].1[1];
            if dx * dx + dy * dy <= eps2 {
                let (ri, rj) = (find(&mut parent, i), find(&mut parent, j));
                if ri != rj {
                    parent[ri.max(rj)] = ri.min(rj);
                }
            }
        }
    }

    let mut order: Vec<usize> = Vec::new();
    let mut groups: Vec<Vec<[f64; 2]>> = Vec::new();
    for i in 0..n {
        let root = find(&mut parent, i);
        match order.iter().position(|&r| r == root) {
            Some(k) => groups[k].push(hits[i].1),
            None => {
                order.push(root);
                groups.push(vec![hits[i].1]);
            }
        }
    }

    let mut out = ClusterOutput::default();
    for points in groups {
        let c = PointCluster::new(points, scan.time);
        if c.points.len() >= MIN_FIT_POINTS {
            out.clusters.push(c);
        } else {
            out.unfittable.push(c);
        }
    }
    out
}
