//! Ground-truth labels for simulated frames: per-instance boxes fitted to
//! the returned points, dropout augmentation, and frame bundle I/O.

mod format;

use std::path::PathBuf;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use format::{
    parse_labels, read_frame, write_frame, FrameFormat, LabelLine, KITTI_LABELS, KITTI_POINTS, KITTI_POINT_LABELS, LABELS,
    META, POINTS, POINTS_EXT,
};

use crate::geom::{Obb, Point3, RigidPose, Vec3, YawPose};
use crate::render::{FrameCounters, SimulatedPoint};

/// Default minimum number of points for an instance to get a box.
pub const DEFAULT_MIN_SUPPORT: usize = 1;

#[derive(Debug, Error)]
pub enum AnnotationError {
    #[error("dropout ratio {0} outside [0, 1)")]
    DropoutRatio(f64),
    #[error("{path}: {msg}")]
    Format { path: PathBuf, msg: String },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

/// One placed obstacle of a frame.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ObstacleRecord {
    pub instance: u32,
    pub category: String,
    pub model_id: String,
    /// World pose of the model.
    pub pose: YawPose,
    /// Box fitted to the instance's points, sensor frame; absent when the
    /// instance has fewer points than the minimum support.
    pub obb: Option<Obb>,
    pub points: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrameMeta {
    pub seed: u64,
    pub config_hash: String,
    pub counters: FrameCounters,
    /// Padding added around fitted boxes, meters.
    pub obb_padding: f64,
    pub min_support: usize,
    /// Dropout ratio applied to this frame, 0 when none.
    pub dropout: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct AnnotatedFrame {
    /// Sensor frame.
    pub points: Vec<SimulatedPoint>,
    pub obstacles: Vec<ObstacleRecord>,
    pub sensor_pose: YawPose,
    pub meta: FrameMeta,
}

/// Input for [`annotate_frame`]: a placed model and its canonical box.
#[derive(Clone, Debug)]
pub struct PlacedInstance {
    pub category: String,
    pub model_id: String,
    pub pose: YawPose,
    /// Model-frame box.
    pub canonical: Obb,
}

/// Box of `canonical` under `pose`, shrunk per local axis to the extent of
/// `points` (never beyond the canonical interval) and then grown by `pad`.
/// `None` without points.
pub fn fit_obb(points: &[Point3], canonical: &Obb, pose: &RigidPose, pad: f64) -> Option<Obb> {
    if points.is_empty() {
        return None;
    }
    let b = canonical.transformed(pose);
    let mut lo = Vec3::repeat(f64::INFINITY);
    let mut hi = Vec3::repeat(f64::NEG_INFINITY);
    for p in points {
        let l = b.to_local(p);
        lo = lo.inf(&l);
        hi = hi.sup(&l);
    }
    let mut center = Vec3::zeros();
    let mut half = Vec3::zeros();
    for i in 0..3 {
        let h = b.half_extents[i];
        let a = lo[i].clamp(-h, h) - pad;
        let z = hi[i].clamp(-h, h) + pad;
        center[i] = 0.5 * (a + z);
        half[i] = 0.5 * (z - a);
    }
    Some(Obb {
        center: b.from_local(&center),
        half_extents: half,
        yaw: b.yaw,
    })
}

/// Groups points by instance, fits a box per placed obstacle (instance k is
/// `placed[k - 1]`) and records point counts. Boxes are in the sensor frame.
pub fn annotate_frame(
    points: Vec<SimulatedPoint>,
    placed: &[PlacedInstance],
    sensor_pose: &RigidPose,
    meta: FrameMeta,
) -> AnnotatedFrame {
    let mut per: Vec<Vec<Point3>> = vec![Vec::new(); placed.len()];
    for p in &points {
        if p.instance > 0 {
            if let Some(v) = per.get_mut(p.instance as usize - 1) {
                v.push(p.position.cast::<f64>());
            }
        }
    }
    let to_sensor = sensor_pose.inverse();
    let obstacles = placed
        .iter()
        .zip(&per)
        .enumerate()
        .map(|(k, (inst, pts))| {
            let pose = to_sensor.compose(&RigidPose::from(inst.pose));
            let obb = if pts.len() >= meta.min_support.max(1) {
                fit_obb(pts, &inst.canonical, &pose, meta.obb_padding)
            } else {
                None
            };
            ObstacleRecord {
                instance: k as u32 + 1,
                category: inst.category.clone(),
                model_id: inst.model_id.clone(),
                pose: inst.pose,
                obb,
                points: pts.len(),
            }
        })
        .collect();
    AnnotatedFrame {
        points,
        obstacles,
        sensor_pose: sensor_pose.into(),
        meta,
    }
}

/// Keeps each point independently with probability `1 − ratio`; instances
/// left below the minimum support lose their box.
pub fn apply_dropout(frame: &AnnotatedFrame, ratio: f64, seed: u64) -> Result<AnnotatedFrame, AnnotationError> {
    if !(0.0..1.0).contains(&ratio) {
        return Err(AnnotationError::DropoutRatio(ratio));
    }
    let mut out = frame.clone();
    if ratio == 0.0 {
        return Ok(out);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    out.points.retain(|_| rng.random::<f64>() >= ratio);
    for o in &mut out.obstacles {
        o.points = 0;
    }
    for p in &out.points {
        if let Some(o) = (p.instance as usize).checked_sub(1).and_then(|k| out.obstacles.get_mut(k)) {
            o.points += 1;
        }
    }
    let min = out.meta.min_support.max(1);
    for o in &mut out.obstacles {
        if o.points < min {
            o.obb = None;
        }
    }
    out.meta.dropout = ratio;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn meta() -> FrameMeta {
        FrameMeta {
            seed: 1,
            config_hash: "x".into(),
            counters: FrameCounters::default(),
            obb_padding: 0.015,
            min_support: 1,
            dropout: 0.0,
        }
    }

    fn pt(x: f32, y: f32, z: f32, instance: u32) -> SimulatedPoint {
        SimulatedPoint {
            position: nalgebra::Point3::new(x, y, z),
            beam: 0,
            instance,
            class: if instance > 0 { 5 } else { 1 },
            material: 0,
            energy: 0.5,
        }
    }

    fn unit_cube() -> Obb {
        Obb::new(Point3::new(0.0, 0.0, 0.5), Vec3::repeat(0.5), 0.0)
    }

    #[test]
    fn no_points_no_box() {
        assert!(fit_obb(&[], &unit_cube(), &RigidPose::identity(), 0.01).is_none());
    }

    #[test]
    fn full_extent_keeps_canonical() {
        let c = unit_cube();
        let pose = RigidPose::from_yaw(Vec3::new(3.0, 1.0, 0.0), 0.4);
        let pts: Vec<Point3> = c.transformed(&pose).corners().to_vec();
        let f = fit_obb(&pts, &c, &pose, 0.015).unwrap();
        let t = c.transformed(&pose);
        assert!((f.center - t.center).norm() < 1e-12);
        assert!((f.half_extents - t.half_extents.add_scalar(0.015)).norm() < 1e-12);
        assert!((f.yaw - t.yaw).abs() < 1e-12);
    }

    #[test]
    fn half_visible_cube_shrinks() {
        let c = unit_cube();
        let pad = 0.015;
        // Only the +x half is seen: x ∈ [0, 0.5], y ∈ [−0.2, 0.3], z ∈ [0.1, 0.9].
        let pts = vec![
            Point3::new(0.0, -0.2, 0.1),
            Point3::new(0.5, 0.3, 0.9),
            Point3::new(0.25, 0.0, 0.5),
        ];
        let f = fit_obb(&pts, &c, &RigidPose::identity(), pad).unwrap();
        assert!((f.half_extents.x - (0.25 + pad)).abs() < 1e-12);
        assert!((f.center.x - 0.25).abs() < 1e-12);
        assert!((f.half_extents.y - (0.25 + pad)).abs() < 1e-12);
        assert!((f.center.y - 0.05).abs() < 1e-12);
        assert!((f.half_extents.z - (0.4 + pad)).abs() < 1e-12);
        assert!(pts.iter().all(|p| f.contains(p, 1e-12)));
        assert!(f.within(&c, pad + 1e-12));
    }

    #[test]
    fn points_outside_canonical_are_clamped() {
        let c = unit_cube();
        let pts = vec![Point3::new(0.51, 0.0, 0.5), Point3::new(-0.49, 0.0, 0.5)];
        let f = fit_obb(&pts, &c, &RigidPose::identity(), 0.015).unwrap();
        assert!(f.within(&c, 0.015 + 1e-12));
        assert!(pts.iter().all(|p| f.contains(p, 0.015)));
    }

    fn frame(n: usize) -> AnnotatedFrame {
        let placed = vec![PlacedInstance {
            category: "car".into(),
            model_id: "m".into(),
            pose: YawPose {
                x: 10.0,
                y: 0.0,
                z: 0.0,
                yaw: 0.0,
            },
            canonical: unit_cube(),
        }];
        let mut pts: Vec<SimulatedPoint> = (0..n).map(|i| pt(10.0 + (i % 10) as f32 * 0.01, 0.0, 0.5, 1)).collect();
        pts.push(pt(3.0, 0.0, 0.0, 0));
        annotate_frame(pts, &placed, &RigidPose::identity(), meta())
    }

    #[test]
    fn annotate_fits_in_sensor_frame() {
        let f = frame(10);
        let o = &f.obstacles[0];
        assert_eq!(o.points, 10);
        let b = o.obb.unwrap();
        assert!((b.center.x - 10.045).abs() < 1e-6);
        assert!((b.half_extents.y - 0.015).abs() < 1e-12);
        assert!(f.points.iter().filter(|p| p.instance == 1).all(|p| b.contains(&p.position.cast(), 1e-6)));
    }

    #[test]
    fn dropout_zero_is_identity() {
        let f = frame(10);
        let mut g = apply_dropout(&f, 0.0, 3).unwrap();
        g.meta.dropout = 0.0;
        assert_eq!(g, f);
        assert!(apply_dropout(&f, 1.0, 3).is_err());
    }

    #[test]
    fn heavy_dropout_removes_box() {
        let f = frame(10);
        let mut dropped = 0;
        for seed in 0..100 {
            let g = apply_dropout(&f, 0.999, seed).unwrap();
            let o = &g.obstacles[0];
            assert_eq!(o.points, g.points.iter().filter(|p| p.instance == 1).count());
            if o.points == 0 {
                assert!(o.obb.is_none());
                dropped += 1;
            }
        }
        assert!(dropped > 90);
    }

    #[test]
    fn dropout_is_deterministic() {
        let f = frame(500);
        assert_eq!(apply_dropout(&f, 0.3, 8).unwrap(), apply_dropout(&f, 0.3, 8).unwrap());
        assert_ne!(apply_dropout(&f, 0.3, 8).unwrap().points, apply_dropout(&f, 0.3, 9).unwrap().points);
    }
}
