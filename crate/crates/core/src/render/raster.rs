use rayon::prelude::*;

use super::cube::{
    face_axis, pixel_direction, to_pixel, CubeFaceMaps, FaceBuffer, LocalSplat, LocalTriangle, MESH_BIT, SKY,
};
use super::{FrameScene, RenderParams};
use crate::geom::{RigidPose, Vec3};

/// Near-plane distance used when clipping triangles to a face, meters.
const NEAR: f64 = 1e-6;
/// Barycentric slack so triangles sharing an edge leave no cracks.
const EDGE_SLACK: f64 = 1e-9;
/// Below this |cos| between a splat normal and the ray the splat is drawn
/// at its center depth instead of on its tangent plane.
pub(crate) const GRAZING_COS: f64 = 0.05;

/// Rasterizes background splats and obstacle triangles onto the six faces
/// around `sensor`. Transparent materials are skipped; splats closer than
/// twice their radius or beyond `max_range` plus the radius are ignored.
pub fn render_cube_maps(scene: &FrameScene<'_>, sensor: &RigidPose, params: &RenderParams) -> CubeFaceMaps {
    let inv = sensor.inverse();
    let r = params.splat.radius;
    let min_dist = 2.0 * r;
    let max_dist = params.max_range + r;

    let mut splats = Vec::new();
    if let Some(cloud) = scene.splats {
        for i in 0..cloud.points.len() {
            let c = inv.transform_point(&cloud.points[i]).coords;
            let d = c.norm();
            if !(min_dist..=max_dist).contains(&d) {
                continue;
            }
            if scene.is_transparent(cloud.materials[i]) {
                continue;
            }
            splats.push(LocalSplat {
                center: c,
                normal: inv.transform_vector(&cloud.normals[i]),
                material: cloud.materials[i],
                class: cloud.classes[i],
            });
        }
    }

    let mut triangles = Vec::new();
    for m in &scene.meshes {
        for (t, &slot) in m.mesh.triangles.iter().zip(&m.mesh.materials) {
            let material = m.slot_materials[slot as usize];
            if scene.is_transparent(material) {
                continue;
            }
            let v = t.map(|k| inv.transform_point(&m.mesh.vertices[k as usize]).coords);
            let n = (v[1] - v[0]).cross(&(v[2] - v[0]));
            let len = n.norm();
            if len == 0.0 || !len.is_finite() {
                continue;
            }
            triangles.push(LocalTriangle {
                v,
                normal: n / len,
                material,
                instance: m.instance,
                class: m.class,
            });
        }
    }
    assert!(triangles.len() < MESH_BIT as usize && splats.len() < MESH_BIT as usize);

    let res = params.resolution;
    let mut splat_buckets: Vec<Vec<(u32, [usize; 4])>> = vec![Vec::new(); 6];
    for (i, s) in splats.iter().enumerate() {
        for (face, rect) in splat_faces(&s.center, r, res) {
            splat_buckets[face].push((i as u32, rect));
        }
    }
    let mut tri_buckets: Vec<Vec<(u32, [usize; 4])>> = vec![Vec::new(); 6];
    for (i, t) in triangles.iter().enumerate() {
        for face in 0..6 {
            if let Some(rect) = triangle_rect(&t.v, face, res) {
                tri_buckets[face].push((i as u32, rect));
            }
        }
    }

    let faces: Vec<FaceBuffer> = (0..6usize)
        .into_par_iter()
        .map(|face| {
            let mut buf = FaceRaster::new(res);
            for &(i, rect) in &tri_buckets[face] {
                buf.triangle(face, &triangles[i as usize], i | MESH_BIT, rect, params.splat.depth_epsilon);
            }
            for &(i, rect) in &splat_buckets[face] {
                buf.splat(face, &splats[i as usize], i, rect, r, params.splat.depth_epsilon);
            }
            FaceBuffer {
                depth: buf.depth,
                source: buf.source,
            }
        })
        .collect();

    CubeFaceMaps {
        resolution: res,
        faces,
        splats,
        triangles,
    }
}

struct FaceRaster {
    res: usize,
    depth: Vec<f32>,
    source: Vec<u32>,
    /// Distance from the ray to the writer's center; 0 for triangles.
    metric: Vec<f32>,
}

impl FaceRaster {
    fn new(res: usize) -> Self {
        Self {
            res,
            depth: vec![f32::INFINITY; res * res],
            source: vec![SKY; res * res],
            metric: vec![f32::INFINITY; res * res],
        }
    }

    /// Depth test: clearly nearer wins; within `eps` the smaller metric wins,
    /// then the nearer depth.
    fn write(&mut self, i: usize, depth: f64, metric: f64, src: u32, eps: f64) {
        let (d, m) = (depth as f32, metric as f32);
        let old = self.depth[i];
        let wins = if old == f32::INFINITY || (d as f64) < old as f64 - eps {
            true
        } else if ((d - old).abs() as f64) <= eps {
            m < self.metric[i] || (m == self.metric[i] && d < old)
        } else {
            false
        };
        if wins {
            self.depth[i] = d;
            self.metric[i] = m;
            self.source[i] = src;
        }
    }

    fn triangle(&mut self, face: usize, t: &LocalTriangle, src: u32, rect: [usize; 4], eps: f64) {
        let [x0, x1, y0, y1] = rect;
        let e1 = t.v[1] - t.v[0];
        let e2 = t.v[2] - t.v[0];
        let s = -t.v[0];
        let q = s.cross(&e1);
        let qe2 = e2.dot(&q);
        for py in y0..=y1 {
            for px in x0..=x1 {
                let w = pixel_direction(face, px, py, self.res);
                if let Some(depth) = intersect(&w, &e1, &e2, &s, &q, qe2) {
                    self.write(py * self.res + px, depth, 0.0, src, eps);
                }
            }
        }
    }

    fn splat(&mut self, face: usize, s: &LocalSplat, src: u32, rect: [usize; 4], r: f64, eps: f64) {
        let [x0, x1, y0, y1] = rect;
        let c = s.center;
        let c2 = c.norm_squared();
        for py in y0..=y1 {
            for px in x0..=x1 {
                let w = pixel_direction(face, px, py, self.res);
                if let Some((depth, perp)) = splat_hit(&c, c2, &s.normal, &w, r) {
                    self.write(py * self.res + px, depth, perp, src, eps);
                }
            }
        }
    }
}

/// Möller–Trumbore from the origin along `w`, with the direction-independent
/// terms precomputed.
#[inline]
fn intersect(w: &Vec3, e1: &Vec3, e2: &Vec3, s: &Vec3, q: &Vec3, qe2: f64) -> Option<f64> {
    let p = w.cross(e2);
    let det = e1.dot(&p);
    if det.abs() < 1e-15 {
        return None;
    }
    let inv = 1.0 / det;
    let u = s.dot(&p) * inv;
    if !(-EDGE_SLACK..=1.0 + EDGE_SLACK).contains(&u) {
        return None;
    }
    let v = w.dot(q) * inv;
    if v < -EDGE_SLACK || u + v > 1.0 + EDGE_SLACK {
        return None;
    }
    let t = qe2 * inv;
    (t > NEAR).then_some(t)
}

/// Range along `w` at which a camera-facing disk of radius `r` centered at
/// `c` is seen, plus the ray's distance to the center.
#[inline]
pub(crate) fn splat_hit(c: &Vec3, c2: f64, n: &Vec3, w: &Vec3, r: f64) -> Option<(f64, f64)> {
    let proj = c.dot(w);
    if proj <= 0.0 {
        return None;
    }
    let perp2 = (c2 - proj * proj).max(0.0);
    if perp2 > r * r {
        return None;
    }
    Some((splat_range(c, n, w, proj), perp2.sqrt()))
}

/// Range on the splat's tangent plane, or the center's projection onto the
/// ray when the ray grazes that plane.
#[inline]
pub(crate) fn splat_range(c: &Vec3, n: &Vec3, w: &Vec3, proj: f64) -> f64 {
    let nw = n.dot(w);
    if nw.abs() > GRAZING_COS {
        let t = n.dot(c) / nw;
        if t > 0.0 {
            return t;
        }
    }
    proj
}

/// Face-frame coordinates `(x along the face axis, u, v)` of `p`.
#[inline]
fn face_coords(p: &Vec3, face: usize) -> (f64, f64, f64) {
    let (a, s) = face_axis(face);
    (p[a] * s, p[(a + 1) % 3], p[(a + 2) % 3])
}

fn pixel_rect(u0: f64, u1: f64, v0: f64, v1: f64, res: usize) -> Option<[usize; 4]> {
    if u1 < -1.0 || u0 > 1.0 || v1 < -1.0 || v0 > 1.0 || !(u0 <= u1 && v0 <= v1) {
        return None;
    }
    Some([to_pixel(u0, res), to_pixel(u1, res), to_pixel(v0, res), to_pixel(v1, res)])
}

/// Conservative uv bounds of a sphere of radius `r` around `c` on a face
/// whose axis coordinate exceeds `r`.
fn sphere_uv(c: &Vec3, r: f64, face: usize) -> Option<(f64, f64, f64, f64)> {
    let (x, u, v) = face_coords(c, face);
    if x <= r {
        return None;
    }
    let bounds = |y: f64| {
        let q = [(y - r) / (x - r), (y - r) / (x + r), (y + r) / (x - r), (y + r) / (x + r)];
        (q.iter().copied().fold(f64::INFINITY, f64::min), q.iter().copied().fold(f64::NEG_INFINITY, f64::max))
    };
    let (u0, u1) = bounds(u);
    let (v0, v1) = bounds(v);
    Some((u0, u1, v0, v1))
}

/// Faces and pixel rectangles a splat may touch: its own face, plus the
/// neighboring faces when its bounds spill over an edge.
fn splat_faces(c: &Vec3, r: f64, res: usize) -> Vec<(usize, [usize; 4])> {
    let Some(home) = super::cube::direction_to_face_pixel(c, res) else { return Vec::new() };
    let mut out = Vec::with_capacity(1);
    let Some((u0, u1, v0, v1)) = sphere_uv(c, r, home.face) else { return out };
    if let Some(rect) = pixel_rect(u0, u1, v0, v1, res) {
        out.push((home.face, rect));
    }
    if u0 >= -1.0 && u1 <= 1.0 && v0 >= -1.0 && v1 <= 1.0 {
        return out;
    }
    for face in 0..6 {
        if face / 2 == home.face / 2 {
            continue;
        }
        if let Some((u0, u1, v0, v1)) = sphere_uv(c, r, face) {
            if let Some(rect) = pixel_rect(u0, u1, v0, v1, res) {
                out.push((face, rect));
            }
        }
    }
    out
}

/// Pixel rectangle covering a triangle on one face, after clipping it to the
/// half-space in front of the face.
fn triangle_rect(v: &[Vec3; 3], face: usize, res: usize) -> Option<[usize; 4]> {
    let pts: Vec<(f64, f64, f64)> = v.iter().map(|p| face_coords(p, face)).collect();
    let mut poly: Vec<(f64, f64, f64)> = Vec::with_capacity(4);
    for i in 0..3 {
        let a = pts[i];
        let b = pts[(i + 1) % 3];
        let (ina, inb) = (a.0 > NEAR, b.0 > NEAR);
        if ina {
            poly.push(a);
        }
        if ina != inb {
            let t = (NEAR - a.0) / (b.0 - a.0);
            poly.push((NEAR, a.1 + t * (b.1 - a.1), a.2 + t * (b.2 - a.2)));
        }
    }
    if poly.is_empty() {
        return None;
    }
    let (mut u0, mut u1, mut v0, mut v1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for (x, y, z) in poly {
        let (u, w) = (y / x, z / x);
        u0 = u0.min(u);
        u1 = u1.max(u);
        v0 = v0.min(w);
        v1 = v1.max(w);
    }
    pixel_rect(u0, u1, v0, v1, res)
}
