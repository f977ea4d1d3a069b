//! Rigid poses and upright oriented boxes in the world frame.
//!
//! World frame: right-handed, z-up, meters.

use std::f64::consts::PI;

use nalgebra::{Isometry3, Rotation3, Translation3, UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};

/// A position in meters.
pub type Point3 = nalgebra::Point3<f64>;
/// A displacement or direction in meters.
pub type Vec3 = Vector3<f64>;

/// Wraps an angle into `[-π, π)`.
pub fn normalize_angle(a: f64) -> f64 {
    let mut r = (a + PI).rem_euclid(2.0 * PI) - PI;
    // rem_euclid can round up to exactly 2π for tiny negative inputs.
    if r >= PI {
        r -= 2.0 * PI;
    }
    r
}

/// A rigid transform. Obstacle placement only ever builds yaw-only poses,
/// but the rotation is a full 3D rotation so sensor mounts can tilt.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RigidPose {
    iso: Isometry3<f64>,
}

impl Default for RigidPose {
    fn default() -> Self {
        Self::identity()
    }
}

impl RigidPose {
    pub fn identity() -> Self {
        Self {
            iso: Isometry3::identity(),
        }
    }

    pub fn from_yaw(translation: Vec3, yaw: f64) -> Self {
        Self {
            iso: Isometry3::from_parts(
                Translation3::from(translation),
                UnitQuaternion::from_axis_angle(&Vector3::z_axis(), normalize_angle(yaw)),
            ),
        }
    }

    pub fn from_rotation(translation: Vec3, rotation: Rotation3<f64>) -> Self {
        Self {
            iso: Isometry3::from_parts(
                Translation3::from(translation),
                UnitQuaternion::from_rotation_matrix(&rotation),
            ),
        }
    }

    pub fn translation(&self) -> Vec3 {
        self.iso.translation.vector
    }

    pub fn rotation(&self) -> Rotation3<f64> {
        self.iso.rotation.to_rotation_matrix()
    }

    /// Heading about the world up-axis, in `[-π, π)`.
    pub fn yaw(&self) -> f64 {
        let m = self.rotation();
        normalize_angle(m[(1, 0)].atan2(m[(0, 0)]))
    }

    pub fn compose(&self, other: &RigidPose) -> RigidPose {
        RigidPose {
            iso: self.iso * other.iso,
        }
    }

    pub fn inverse(&self) -> RigidPose {
        RigidPose {
            iso: self.iso.inverse(),
        }
    }

    pub fn transform_point(&self, p: &Point3) -> Point3 {
        self.iso.transform_point(p)
    }

    pub fn transform_vector(&self, v: &Vec3) -> Vec3 {
        self.iso.transform_vector(v)
    }

    pub fn inverse_transform_point(&self, p: &Point3) -> Point3 {
        self.iso.inverse_transform_point(p)
    }

    pub fn transform_points(&self, points: &[Point3]) -> Vec<Point3> {
        points.iter().map(|p| self.transform_point(p)).collect()
    }
}

/// Serializable yaw-only pose used in manifests and frame metadata.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct YawPose {
    pub x: f64,
    pub y: f64,
    pub z: f64,
    pub yaw: f64,
}

impl From<&RigidPose> for YawPose {
    fn from(p: &RigidPose) -> Self {
        let t = p.translation();
        YawPose {
            x: t.x,
            y: t.y,
            z: t.z,
            yaw: p.yaw(),
        }
    }
}

impl From<YawPose> for RigidPose {
    fn from(p: YawPose) -> Self {
        RigidPose::from_yaw(Vec3::new(p.x, p.y, p.z), p.yaw)
    }
}

/// Upright oriented bounding box: rotated about z only.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Obb {
    pub center: Point3,
    pub half_extents: Vec3,
    pub yaw: f64,
}

impl Obb {
    pub fn new(center: Point3, half_extents: Vec3, yaw: f64) -> Self {
        debug_assert!(half_extents.iter().all(|h| *h > 0.0));
        Self {
            center,
            half_extents,
            yaw: normalize_angle(yaw),
        }
    }

    /// Axis-aligned box around `points`; `None` when empty. Zero-thickness
    /// axes get a 1 mm half extent so the box stays non-degenerate.
    pub fn from_points_aabb(points: &[Point3]) -> Option<Self> {
        let first = points.first()?;
        let mut lo = first.coords;
        let mut hi = first.coords;
        for p in points {
            lo = lo.inf(&p.coords);
            hi = hi.sup(&p.coords);
        }
        let half = ((hi - lo) * 0.5).map(|h| h.max(1e-3));
        Some(Self::new(Point3::from((lo + hi) * 0.5), half, 0.0))
    }

    pub fn local_axes(&self) -> (Vec3, Vec3) {
        let (s, c) = self.yaw.sin_cos();
        (Vec3::new(c, s, 0.0), Vec3::new(-s, c, 0.0))
    }

    /// Coordinates of `p` in the box frame (origin at center, x along heading).
    pub fn to_local(&self, p: &Point3) -> Vec3 {
        let d = p - self.center;
        let (ax, ay) = self.local_axes();
        Vec3::new(d.dot(&ax), d.dot(&ay), d.z)
    }

    pub fn from_local(&self, v: &Vec3) -> Point3 {
        let (ax, ay) = self.local_axes();
        self.center + ax * v.x + ay * v.y + Vec3::z() * v.z
    }

    /// True when `p` lies inside the box grown by `pad` on every side.
    pub fn contains(&self, p: &Point3, pad: f64) -> bool {
        let l = self.to_local(p);
        (0..3).all(|i| l[i].abs() <= self.half_extents[i] + pad)
    }

    /// Like [`Obb::contains`] but ignoring height.
    pub fn contains_xy(&self, x: f64, y: f64, pad: f64) -> bool {
        let l = self.to_local(&Point3::new(x, y, self.center.z));
        l.x.abs() <= self.half_extents.x + pad && l.y.abs() <= self.half_extents.y + pad
    }

    pub fn inflated(&self, pad: f64) -> Obb {
        Obb {
            center: self.center,
            half_extents: self.half_extents.add_scalar(pad),
            yaw: self.yaw,
        }
    }

    /// Applies a yaw-only pose (the pitch/roll part of `pose` is ignored).
    pub fn transformed(&self, pose: &RigidPose) -> Obb {
        Obb {
            center: pose.transform_point(&self.center),
            half_extents: self.half_extents,
            yaw: normalize_angle(self.yaw + pose.yaw()),
        }
    }

    /// Footprint corners in counter-clockwise order.
    pub fn footprint(&self) -> [[f64; 2]; 4] {
        let (ax, ay) = self.local_axes();
        let (hx, hy) = (self.half_extents.x, self.half_extents.y);
        let c = self.center;
        [(-1.0, -1.0), (1.0, -1.0), (1.0, 1.0), (-1.0, 1.0)].map(|(sx, sy)| {
            [
                c.x + ax.x * sx * hx + ay.x * sy * hy,
                c.y + ax.y * sx * hx + ay.y * sy * hy,
            ]
        })
    }

    pub fn corners(&self) -> [Point3; 8] {
        let fp = self.footprint();
        let (z0, z1) = (
            self.center.z - self.half_extents.z,
            self.center.z + self.half_extents.z,
        );
        let mut out = [Point3::origin(); 8];
        for (i, c) in fp.iter().enumerate() {
            out[i] = Point3::new(c[0], c[1], z0);
            out[i + 4] = Point3::new(c[0], c[1], z1);
        }
        out
    }

    /// Separating-axis test on the ground-projected rectangles. Touching
    /// boundaries do not count as overlap.
    pub fn overlaps_xy(&self, other: &Obb) -> bool {
        let a = self.footprint();
        let b = other.footprint();
        for axis in [self.local_axes(), other.local_axes()]
            .into_iter()
            .flat_map(|(u, v)| [u, v])
        {
            let (amin, amax) = project(&a, &axis);
            let (bmin, bmax) = project(&b, &axis);
            if amax <= bmin || bmax <= amin {
                return false;
            }
        }
        true
    }

    pub fn overlaps(&self, other: &Obb) -> bool {
        let dz = (self.center.z - other.center.z).abs();
        dz < self.half_extents.z + other.half_extents.z && self.overlaps_xy(other)
    }

    /// True when every corner of `self` lies within `other` grown by `pad`.
    pub fn within(&self, other: &Obb, pad: f64) -> bool {
        self.corners().iter().all(|c| other.contains(c, pad))
    }
}

fn project(corners: &[[f64; 2]; 4], axis: &Vec3) -> (f64, f64) {
    corners
        .iter()
        .map(|c| c[0] * axis.x + c[1] * axis.y)
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), d| {
            (lo.min(d), hi.max(d))
        })
}
