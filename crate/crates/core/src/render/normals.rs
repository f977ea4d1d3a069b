use nalgebra::Matrix3;
use rayon::prelude::*;

use crate::geom::{Point3, Vec3};
use crate::index::SpatialGridIndex;

/// Fewest neighbors (the point included) for a covariance fit.
pub const MIN_NORMAL_NEIGHBORS: usize = 3;

/// Per-point normals plus how many points fell back to facing the viewpoint.
#[derive(Clone, Debug, PartialEq)]
pub struct NormalEstimate {
    pub normals: Vec<Vec3>,
    pub isolated: usize,
}

/// Normal of each indexed point from its neighbors within `radius`: the
/// eigenvector of the smallest covariance eigenvalue, flipped to face
/// `viewpoint`. Points with too few neighbors, or whose neighborhood is a
/// line, get the unit vector toward `viewpoint` instead.
pub fn estimate_point_normals(index: &SpatialGridIndex, radius: f64, viewpoint: &Point3) -> NormalEstimate {
    let out: Vec<(Vec3, bool)> = (0..index.len())
        .into_par_iter()
        .map(|i| {
            let p = index.point(i);
            let toward = viewpoint - p;
            let fallback = if toward.norm() > 0.0 { toward.normalize() } else { Vec3::z() };
            match fit_normal(index, p, radius) {
                Some(n) => (if n.dot(&toward) < 0.0 { -n } else { n }, false),
                None => (fallback, true),
            }
        })
        .collect();
    NormalEstimate {
        isolated: out.iter().filter(|(_, iso)| *iso).count(),
        normals: out.into_iter().map(|(n, _)| n).collect(),
    }
}

fn fit_normal(index: &SpatialGridIndex, p: &Point3, radius: f64) -> Option<Vec3> {
    let mut n = 0usize;
    let mut sum = Vec3::zeros();
    let mut outer = Matrix3::zeros();
    index.for_each_within(p, radius, |j, _| {
        // Centered on p for conditioning.
        let q = index.point(j) - p;
        n += 1;
        sum += q;
        outer += q * q.transpose();
    });
    if n < MIN_NORMAL_NEIGHBORS {
        return None;
    }
    let mean = sum / n as f64;
    let cov = outer / n as f64 - mean * mean.transpose();
    let eig = cov.symmetric_eigen();
    let mut order = [0usize, 1, 2];
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let (lo, mid) = (eig.eigenvalues[order[0]], eig.eigenvalues[order[1]]);
    let scale = eig.eigenvalues[order[2]];
    if !(scale > 0.0) || mid <= 1e-9 * scale || lo > mid {
        return None;
    }
    let v: Vec3 = eig.eigenvectors.column(order[0]).into_owned();
    let len = v.norm();
    (len > 0.0).then(|| v / len)
}
