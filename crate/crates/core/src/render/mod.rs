//! Cube-map rendering of the hybrid scene (background splats plus obstacle
//! triangles) and beam simulation against the rendered maps.

mod cube;
mod lookup;
mod normals;
mod raster;
mod simulate;

use serde::{Deserialize, Serialize};

pub use cube::{
    direction_to_face_pixel, face_axis, pixel_direction, pixel_half_angle, uv_direction, CubeFaceMaps, FacePixel,
    Surface, FACE_NAMES,
};
pub use lookup::BeamHit;
pub use normals::{estimate_point_normals, NormalEstimate, MIN_NORMAL_NEIGHBORS};
pub use raster::render_cube_maps;
pub use simulate::{simulate_beams, simulate_frame, FrameCounters, SimulatedFrame, SimulatedPoint, BOX_TOLERANCE};

use crate::background::BackgroundScene;
use crate::geom::{Point3, Vec3};
use crate::mesh::{Material, TriangleMesh};

/// Background points are drawn as disks of `radius`; two surfaces within
/// `depth_epsilon` of each other along a ray are resolved by which writer's
/// center is closest to the ray.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplatParams {
    pub radius: f64,
    pub depth_epsilon: f64,
}

impl Default for SplatParams {
    fn default() -> Self {
        Self {
            radius: 0.03,
            depth_epsilon: 0.02,
        }
    }
}

impl SplatParams {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.radius > 0.0 && self.radius.is_finite()) {
            return Err(format!("splat radius must be positive, got {}", self.radius));
        }
        if !(self.depth_epsilon >= 0.0 && self.depth_epsilon.is_finite()) {
            return Err(format!("depth epsilon must be non-negative, got {}", self.depth_epsilon));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RenderParams {
    /// Pixels per face side.
    pub resolution: usize,
    pub splat: SplatParams,
    /// Splats beyond this distance (plus their radius) are not drawn.
    pub max_range: f64,
}

pub const DEFAULT_RESOLUTION: usize = 1024;
pub const MIN_RESOLUTION: usize = 64;

impl Default for RenderParams {
    fn default() -> Self {
        Self {
            resolution: DEFAULT_RESOLUTION,
            splat: SplatParams::default(),
            max_range: 120.0,
        }
    }
}

/// Reflectivity of background points by class ID when the cloud carries no
/// materials: unknown, ground, building, vegetation, pole, then the movable
/// classes (which cleaned backgrounds no longer contain).
pub const DEFAULT_CLASS_REFLECTIVITY: [f64; 10] = [0.4, 0.3, 0.5, 0.4, 0.6, 0.5, 0.5, 0.5, 0.5, 0.5];

pub fn default_background_palette() -> Vec<Material> {
    DEFAULT_CLASS_REFLECTIVITY.iter().map(|&r| Material::opaque(r)).collect()
}

/// Background points ready for splatting, world frame.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct SplatCloud {
    pub points: Vec<Point3>,
    pub normals: Vec<Vec3>,
    /// Index into the frame palette.
    pub materials: Vec<u32>,
    pub classes: Vec<u32>,
}

impl SplatCloud {
    /// Estimates normals once for the whole scene. Material IDs are the
    /// cloud's own when present, otherwise the class ID (matching
    /// [`default_background_palette`]). Returns the number of points whose
    /// normal fell back to facing `viewpoint`.
    pub fn from_scene(scene: &BackgroundScene, normal_radius: f64, viewpoint: &Point3) -> (Self, usize) {
        let est = estimate_point_normals(&scene.index, normal_radius, viewpoint);
        let c = &scene.cloud;
        let splats = SplatCloud {
            points: c.points.clone(),
            normals: est.normals,
            materials: (0..c.len())
                .map(|i| if c.materials.is_some() { c.material(i) } else { c.labels[i].0 })
                .collect(),
            classes: c.labels.iter().map(|l| l.0).collect(),
        };
        (splats, est.isolated)
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// An obstacle mesh placed in the world.
#[derive(Clone, Debug, PartialEq)]
pub struct MeshInstance {
    pub mesh: TriangleMesh,
    /// Palette index for each of the mesh's material slots.
    pub slot_materials: Vec<u32>,
    /// 1-based instance ID.
    pub instance: u32,
    pub class: u32,
}

/// Everything drawn into one frame's cube maps.
#[derive(Clone, Debug, Default)]
pub struct FrameScene<'a> {
    pub splats: Option<&'a SplatCloud>,
    pub meshes: Vec<MeshInstance>,
    pub palette: Vec<Material>,
}

impl FrameScene<'_> {
    pub(crate) fn is_transparent(&self, material: u32) -> bool {
        self.palette.get(material as usize).is_some_and(|m| m.transparent)
    }

    pub fn reflectivity(&self, material: u32) -> f64 {
        self.palette.get(material as usize).map_or(0.0, |m| m.reflectivity)
    }

    /// Appends a mesh whose slots use `materials`, registering them in the
    /// palette. Returns the instance ID.
    pub fn add_mesh(&mut self, mesh: TriangleMesh, materials: &[Material], class: u32) -> u32 {
        assert!(
            mesh.materials.iter().all(|&m| (m as usize) < materials.len()),
            "every material slot needs a material"
        );
        let base = self.palette.len() as u32;
        self.palette.extend_from_slice(materials);
        let instance = self.meshes.len() as u32 + 1;
        self.meshes.push(MeshInstance {
            slot_materials: (0..materials.len() as u32).map(|i| base + i).collect(),
            mesh,
            instance,
            class,
        });
        instance
    }
}
