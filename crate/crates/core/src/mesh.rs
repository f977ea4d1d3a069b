//! Triangle meshes for obstacle models and a Wavefront OBJ reader.

use std::collections::HashMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geom::{Obb, Point3, RigidPose, Vec3};

/// Surface properties that matter to the return-energy model.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Material {
    pub reflectivity: f64,
    pub transparent: bool,
}

impl Material {
    pub fn new(reflectivity: f64, transparent: bool) -> Result<Self, MeshError> {
        if !(0.0..=1.0).contains(&reflectivity) {
            return Err(MeshError::Reflectivity(reflectivity));
        }
        Ok(Self {
            reflectivity,
            transparent,
        })
    }

    pub fn opaque(reflectivity: f64) -> Self {
        Self::new(reflectivity, false).expect("reflectivity in [0, 1]")
    }
}

#[derive(Debug, Error)]
pub enum MeshError {
    #[error("reflectivity {0} outside [0, 1]")]
    Reflectivity(f64),
    #[error("triangle {tri} references vertex {index} but the mesh has {len} vertices")]
    IndexOutOfRange { tri: usize, index: u32, len: usize },
    #[error("{path}:{line}: {msg}")]
    Obj { path: PathBuf, line: usize, msg: String },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

/// Triangle soup with one material slot per triangle. Material slots index
/// into `material_names`; how a slot maps to a [`Material`] is decided by the
/// owner (the obstacle library).
#[derive(Clone, Debug, Default, PartialEq)]
pub struct TriangleMesh {
    pub vertices: Vec<Point3>,
    pub triangles: Vec<[u32; 3]>,
    pub materials: Vec<u32>,
    pub material_names: Vec<String>,
}

/// Triangles whose area is below this many square meters are dropped at load.
pub const DEGENERATE_AREA: f64 = 1e-12;

impl TriangleMesh {
    /// Builds a mesh, dropping degenerate triangles. Returns the mesh and the
    /// number of dropped triangles.
    pub fn new(
        vertices: Vec<Point3>,
        triangles: Vec<[u32; 3]>,
        materials: Vec<u32>,
        material_names: Vec<String>,
    ) -> Result<(Self, usize), MeshError> {
        assert_eq!(triangles.len(), materials.len(), "one material slot per triangle");
        for (tri, t) in triangles.iter().enumerate() {
            if let Some(&index) = t.iter().find(|&&i| i as usize >= vertices.len()) {
                return Err(MeshError::IndexOutOfRange {
                    tri,
                    index,
                    len: vertices.len(),
                });
            }
        }
        let mut mesh = TriangleMesh {
            vertices,
            triangles: Vec::with_capacity(triangles.len()),
            materials: Vec::with_capacity(materials.len()),
            material_names,
        };
        let mut dropped = 0;
        for (t, m) in triangles.into_iter().zip(materials) {
            let [a, b, c] = t.map(|i| mesh.vertices[i as usize]);
            if 0.5 * (b - a).cross(&(c - a)).norm() < DEGENERATE_AREA {
                dropped += 1;
            } else {
                mesh.triangles.push(t);
                mesh.materials.push(m);
            }
        }
        if dropped > 0 {
            log::warn!("dropped {dropped} degenerate triangles");
        }
        Ok((mesh, dropped))
    }

    pub fn triangle(&self, i: usize) -> [Point3; 3] {
        self.triangles[i].map(|k| self.vertices[k as usize])
    }

    pub fn transformed(&self, pose: &RigidPose) -> TriangleMesh {
        TriangleMesh {
            vertices: pose.transform_points(&self.vertices),
            ..self.clone()
        }
    }

    /// Axis-aligned bounds in the model frame as a zero-yaw box.
    pub fn bounding_box(&self) -> Option<Obb> {
        Obb::from_points_aabb(&self.vertices)
    }

    /// Moves the model so its footprint is centered on the origin and its
    /// lowest vertex sits at z = 0.
    pub fn recenter_on_ground(&mut self) {
        let Some(b) = self.bounding_box() else { return };
        let shift = Vec3::new(b.center.x, b.center.y, b.center.z - b.half_extents.z);
        for v in &mut self.vertices {
            *v -= shift;
        }
    }
}

/// Reads an OBJ file. Each distinct `usemtl` name gets its own material slot;
/// files without `usemtl` fall back to `g`/`o` group names. Polygons are
/// fan-triangulated; negative (relative) indices are supported.
pub fn read_obj(path: &Path) -> Result<(TriangleMesh, usize), MeshError> {
    let text = std::fs::read_to_string(path).map_err(|source| MeshError::Io {
        path: path.into(),
        source,
    })?;
    parse_obj(&text).map_err(|(line, msg)| MeshError::Obj {
        path: path.into(),
        line,
        msg,
    })
}

pub fn parse_obj(text: &str) -> Result<(TriangleMesh, usize), (usize, String)> {
    let mut vertices = Vec::new();
    let mut triangles = Vec::new();
    let mut tri_slots = Vec::new();
    let mut names: Vec<String> = Vec::new();
    let mut slot_of: HashMap<String, u32> = HashMap::new();
    let mut group_slot: Option<u32> = None;
    let mut mtl_slot: Option<u32> = None;
    let mut slot = |name: &str, names: &mut Vec<String>| -> u32 {
        *slot_of.entry(name.to_string()).or_insert_with(|| {
            names.push(name.to_string());
            names.len() as u32 - 1
        })
    };
    for (ln, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        let mut tok = line.split_whitespace();
        match tok.next() {
            Some("v") => {
                let c: Vec<f64> = tok
                    .take(3)
                    .map(|t| t.parse::<f64>())
                    .collect::<Result<_, _>>()
                    .map_err(|e| (ln + 1, format!("bad vertex: {e}")))?;
                if c.len() != 3 {
                    return Err((ln + 1, "vertex needs three coordinates".into()));
                }
                vertices.push(Point3::new(c[0], c[1], c[2]));
            }
            Some("f") => {
                let idx: Vec<u32> = tok
                    .map(|t| {
                        let v = t.split('/').next().unwrap_or("");
                        let i: i64 = v.parse().map_err(|_| (ln + 1, format!("bad face index `{t}`")))?;
                        let n = vertices.len() as i64;
                        let abs = if i < 0 { n + i } else { i - 1 };
                        if abs < 0 || abs >= n {
                            return Err((ln + 1, format!("face index {i} out of range")));
                        }
                        Ok(abs as u32)
                    })
                    .collect::<Result<_, _>>()?;
                if idx.len() < 3 {
                    return Err((ln + 1, "face needs at least three vertices".into()));
                }
                let s = match mtl_slot.or(group_slot) {
                    Some(s) => s,
                    None => slot("default", &mut names),
                };
                for k in 1..idx.len() - 1 {
                    triangles.push([idx[0], idx[k], idx[k + 1]]);
                    tri_slots.push(s);
                }
            }
            Some("usemtl") => {
                let name = tok.next().unwrap_or("default");
                mtl_slot = Some(slot(name, &mut names));
            }
            Some("g") | Some("o") => {
                if let Some(name) = tok.next() {
                    group_slot = Some(slot(name, &mut names));
                }
            }
            _ => {}
        }
    }
    TriangleMesh::new(vertices, triangles, tri_slots, names).map_err(|e| (0, e.to_string()))
}

/// Closed axis-aligned box, outward-facing triangles.
pub fn box_mesh(min: Point3, max: Point3, material: u32) -> TriangleMesh {
    let v: Vec<Point3> = (0..8)
        .map(|i| {
            Point3::new(
                if i & 1 == 0 { min.x } else { max.x },
                if i & 2 == 0 { min.y } else { max.y },
                if i & 4 == 0 { min.z } else { max.z },
            )
        })
        .collect();
    let quads = [
        [0, 2, 6, 4], // -x
        [1, 5, 7, 3], // +x
        [0, 4, 5, 1], // -y
        [2, 3, 7, 6], // +y
        [0, 1, 3, 2], // -z
        [4, 6, 7, 5], // +z
    ];
    let mut tris = Vec::new();
    for q in quads {
        tris.push([q[0], q[1], q[2]]);
        tris.push([q[0], q[2], q[3]]);
    }
    let n = tris.len();
    TriangleMesh::new(v, tris, vec![material; n], vec![format!("m{material}")])
        .expect("valid box")
        .0
}
