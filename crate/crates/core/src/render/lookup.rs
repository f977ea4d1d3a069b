use super::cube::{
    direction_to_face_pixel, pixel_center_uv, pixel_direction, uv_direction, CubeFaceMaps, Surface, MESH_BIT, SKY,
};
use super::raster::splat_range;
use crate::geom::Vec3;

/// Result of intersecting one beam with the cube maps.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum BeamHit {
    /// The nearest pixel is empty.
    Sky,
    /// Every candidate surface near the beam failed validation.
    Rejected,
    /// `depth` is the range along the beam.
    Hit(Surface),
}

#[derive(Clone, Copy)]
struct Candidate {
    src: u32,
    w: Vec3,
    depth: f64,
    cos: f64,
}

impl CubeFaceMaps {
    /// Looks up the surface seen along unit direction `d` (sensor frame).
    ///
    /// The nearest pixel decides sky versus surface. The range is then
    /// refined on the plane of the chosen surface, so flat geometry gives
    /// exact ranges regardless of where the beam falls inside the pixel.
    /// Near a mesh crease the 3×3 pixel neighborhood is searched for the
    /// surface that is actually in front along `d`: a triangle stays valid
    /// only while its depth ordering against every other neighboring
    /// triangle plane matches the ordering at its own pixel center. Obstacle
    /// hits must also pass `accept(instance, point)`; a caller typically
    /// checks the point against the obstacle's box to drop silhouette
    /// leaks. Candidates are tried nearest pixel first.
    pub fn lookup(&self, d: &Vec3, accept: impl Fn(u32, &Vec3) -> bool) -> BeamHit {
        let Some(fp) = direction_to_face_pixel(d, self.resolution) else { return BeamHit::Sky };
        if self.source(fp.face, fp.px, fp.py) == SKY {
            return BeamHit::Sky;
        }
        let cands = self.neighborhood(d, fp.face, fp.px, fp.py);
        let tris: Vec<&Candidate> = cands.iter().filter(|c| c.src & MESH_BIT != 0).collect();

        for x in &cands {
            let range = if x.src & MESH_BIT != 0 {
                let tx_d = self.plane_range(x.src, d);
                let tx_w = self.plane_range(x.src, &x.w);
                let tol = 1e-6 * x.depth + 1e-9;
                let crosses = tris.iter().any(|y| {
                    if y.src == x.src {
                        return false;
                    }
                    let a0 = tx_w - self.plane_range(y.src, &x.w);
                    let a1 = tx_d - self.plane_range(y.src, d);
                    (a0 > tol && a1 < -tol) || (a0 < -tol && a1 > tol)
                });
                if crosses {
                    continue;
                }
                if tx_d.is_finite() {
                    tx_d
                } else {
                    x.depth
                }
            } else {
                let s = &self.splats[x.src as usize];
                let proj = s.center.dot(d);
                if proj > 0.0 {
                    splat_range(&s.center, &s.normal, d, proj)
                } else {
                    x.depth
                }
            };
            let surf = self.surface(x.src, range, d);
            if surf.instance != 0 && !accept(surf.instance, &(d * range)) {
                continue;
            }
            return BeamHit::Hit(surf);
        }
        BeamHit::Rejected
    }

    /// Range along `d` to the plane of triangle `src`; +∞ when the plane is
    /// parallel or behind.
    fn plane_range(&self, src: u32, d: &Vec3) -> f64 {
        let t = &self.triangles[(src & !MESH_BIT) as usize];
        let nd = t.normal.dot(d);
        if nd.abs() < 1e-12 {
            return f64::INFINITY;
        }
        let r = t.normal.dot(&t.v[0]) / nd;
        if r > 0.0 {
            r
        } else {
            f64::INFINITY
        }
    }

    /// Non-sky pixels of the 3×3 block around `(face, px, py)`, continuing
    /// onto neighboring faces at edges. Center first, then by angle to `d`.
    fn neighborhood(&self, d: &Vec3, face: usize, px: usize, py: usize) -> Vec<Candidate> {
        let res = self.resolution;
        let mut seen: Vec<(usize, usize, usize)> = Vec::with_capacity(9);
        let mut out: Vec<Candidate> = Vec::with_capacity(9);
        for (dx, dy) in [(0, 0), (-1, 0), (1, 0), (0, -1), (0, 1), (-1, -1), (1, -1), (-1, 1), (1, 1)] {
            let (qx, qy) = (px as i64 + dx, py as i64 + dy);
            let key = if (0..res as i64).contains(&qx) && (0..res as i64).contains(&qy) {
                (face, qx as usize, qy as usize)
            } else {
                let step = 2.0 / res as f64;
                let u = pixel_center_uv(px, res) + dx as f64 * step;
                let v = pixel_center_uv(py, res) + dy as f64 * step;
                match direction_to_face_pixel(&uv_direction(face, u, v), res) {
                    Some(p) => (p.face, p.px, p.py),
                    None => continue,
                }
            };
            if seen.contains(&key) {
                continue;
            }
            seen.push(key);
            let (f, x, y) = key;
            let src = self.source(f, x, y);
            if src == SKY {
                continue;
            }
            let w = pixel_direction(f, x, y, res);
            out.push(Candidate {
                src,
                w,
                depth: self.faces[f].depth[y * res + x] as f64,
                cos: w.dot(d),
            });
        }
        out[1..].sort_by(|a, b| b.cos.total_cmp(&a.cos));
        out
    }
}
