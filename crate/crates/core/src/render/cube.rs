use std::io::Write;
use std::path::Path;

use crate::geom::{Point3, Vec3};

/// Face order: +x, −x, +y, −y, +z, −z.
pub const FACE_NAMES: [&str; 6] = ["px", "nx", "py", "ny", "pz", "nz"];

/// Axis index and sign of a face.
pub fn face_axis(face: usize) -> (usize, f64) {
    (face / 2, if face % 2 == 0 { 1.0 } else { -1.0 })
}

/// Face, perspective coordinates in `[-1, 1]` and pixel of a direction.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FacePixel {
    pub face: usize,
    pub u: f64,
    pub v: f64,
    pub px: usize,
    pub py: usize,
}

/// Projects `d` onto the cube face of its largest component. Ties go to the
/// earlier axis (x before y before z). On face axis `a`, `u` is component
/// `(a+1) mod 3` and `v` component `(a+2) mod 3`, both divided by `|d_a|`.
/// `None` for zero or non-finite directions.
pub fn direction_to_face_pixel(d: &Vec3, resolution: usize) -> Option<FacePixel> {
    if !d.iter().all(|c| c.is_finite()) {
        return None;
    }
    let (ax, ay, az) = (d.x.abs(), d.y.abs(), d.z.abs());
    let a = if ax >= ay && ax >= az {
        0
    } else if ay >= az {
        1
    } else {
        2
    };
    let m = d[a].abs();
    if m == 0.0 {
        return None;
    }
    let face = 2 * a + usize::from(d[a] < 0.0);
    let u = d[(a + 1) % 3] / m;
    let v = d[(a + 2) % 3] / m;
    Some(FacePixel {
        face,
        u,
        v,
        px: to_pixel(u, resolution),
        py: to_pixel(v, resolution),
    })
}

pub(crate) fn to_pixel(u: f64, resolution: usize) -> usize {
    let p = ((u + 1.0) * 0.5 * resolution as f64).floor();
    p.clamp(0.0, (resolution - 1) as f64) as usize
}

pub(crate) fn pixel_center_uv(p: usize, resolution: usize) -> f64 {
    (p as f64 + 0.5) / resolution as f64 * 2.0 - 1.0
}

/// Unnormalized direction through `(u, v)` of `face`.
pub fn uv_direction(face: usize, u: f64, v: f64) -> Vec3 {
    let (a, s) = face_axis(face);
    let mut d = Vec3::zeros();
    d[a] = s;
    d[(a + 1) % 3] = u;
    d[(a + 2) % 3] = v;
    d
}

/// Unit direction through the center of a pixel.
pub fn pixel_direction(face: usize, px: usize, py: usize, resolution: usize) -> Vec3 {
    uv_direction(face, pixel_center_uv(px, resolution), pixel_center_uv(py, resolution)).normalize()
}

/// Largest angle between a pixel's center ray and its corner rays.
pub fn pixel_half_angle(face: usize, px: usize, py: usize, resolution: usize) -> f64 {
    let c = pixel_direction(face, px, py, resolution);
    let step = 2.0 / resolution as f64;
    let (u0, v0) = (px as f64 * step - 1.0, py as f64 * step - 1.0);
    [(u0, v0), (u0 + step, v0), (u0, v0 + step), (u0 + step, v0 + step)]
        .iter()
        .map(|&(u, v)| c.angle(&uv_direction(face, u, v)))
        .fold(0.0, f64::max)
}

/// A background point as a disk in the sensor frame.
#[derive(Clone, Copy, Debug)]
pub(crate) struct LocalSplat {
    pub center: Vec3,
    pub normal: Vec3,
    pub material: u32,
    pub class: u32,
}

/// An obstacle triangle in the sensor frame.
#[derive(Clone, Copy, Debug)]
pub(crate) struct LocalTriangle {
    pub v: [Vec3; 3],
    pub normal: Vec3,
    pub material: u32,
    pub instance: u32,
    pub class: u32,
}

pub(crate) const SKY: u32 = u32::MAX;
pub(crate) const MESH_BIT: u32 = 1 << 31;

#[derive(Clone, Debug)]
pub(crate) struct FaceBuffer {
    pub depth: Vec<f32>,
    /// Splat index, triangle index with [`MESH_BIT`] set, or [`SKY`].
    pub source: Vec<u32>,
}

/// What a pixel (or a beam) sees.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Surface {
    /// Range along the ray, meters.
    pub depth: f64,
    /// Unit normal facing the sensor.
    pub normal: Vec3,
    pub material: u32,
    /// 0 for background, k for the k-th obstacle.
    pub instance: u32,
    pub class: u32,
    pub from_mesh: bool,
}

/// Depth and surface identity on six `resolution²` faces around the sensor,
/// in the sensor frame. Per pixel only the depth and the index of the
/// winning splat or triangle are stored; normal, material, instance and
/// class come from that source.
#[derive(Clone, Debug)]
pub struct CubeFaceMaps {
    pub(crate) resolution: usize,
    pub(crate) faces: Vec<FaceBuffer>,
    pub(crate) splats: Vec<LocalSplat>,
    pub(crate) triangles: Vec<LocalTriangle>,
}

impl CubeFaceMaps {
    pub fn resolution(&self) -> usize {
        self.resolution
    }

    pub(crate) fn source(&self, face: usize, px: usize, py: usize) -> u32 {
        self.faces[face].source[py * self.resolution + px]
    }

    /// `None` for sky.
    pub fn pixel(&self, face: usize, px: usize, py: usize) -> Option<Surface> {
        let i = py * self.resolution + px;
        let src = self.faces[face].source[i];
        if src == SKY {
            return None;
        }
        let w = pixel_direction(face, px, py, self.resolution);
        let depth = self.faces[face].depth[i] as f64;
        Some(self.surface(src, depth, &w))
    }

    pub(crate) fn surface(&self, src: u32, depth: f64, ray: &Vec3) -> Surface {
        let (n, material, instance, class, from_mesh) = if src & MESH_BIT != 0 {
            let t = &self.triangles[(src & !MESH_BIT) as usize];
            (t.normal, t.material, t.instance, t.class, true)
        } else {
            let s = &self.splats[src as usize];
            (s.normal, s.material, 0, s.class, false)
        };
        let normal = if n.dot(ray) > 0.0 { -n } else { n };
        Surface {
            depth,
            normal,
            material,
            instance,
            class,
            from_mesh,
        }
    }

    pub fn sky_pixels(&self) -> usize {
        self.faces.iter().map(|f| f.source.iter().filter(|s| **s == SKY).count()).sum()
    }

    /// Center of a pixel's surface hit, sensor frame; `None` for sky.
    pub fn pixel_point(&self, face: usize, px: usize, py: usize) -> Option<Point3> {
        self.pixel(face, px, py)
            .map(|s| Point3::from(pixel_direction(face, px, py, self.resolution) * s.depth))
    }

    /// Writes one face as a binary 16-bit PGM: value = depth in centimeters
    /// (saturating at 65535), 0 = sky. Row `py`, column `px`.
    pub fn write_depth_pgm(&self, face: usize, path: &Path) -> std::io::Result<()> {
        let r = self.resolution;
        let mut out = Vec::with_capacity(r * r * 2 + 32);
        write!(out, "P5\n{r} {r}\n65535\n")?;
        let f = &self.faces[face];
        for i in 0..r * r {
            let v: u16 = if f.source[i] == SKY {
                0
            } else {
                ((f.depth[i] as f64 * 100.0).round()).clamp(1.0, 65535.0) as u16
            };
            out.extend_from_slice(&v.to_be_bytes());
        }
        crate::util::write_atomic(path, &out)
    }
}
