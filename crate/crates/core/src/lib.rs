//! Scan-and-simulate LiDAR data generation.
//!
//! A scanned, semantically labeled background is cleaned of movable
//! obstacles ([`background`]), CAD obstacles are placed with learned
//! probability maps ([`placement`]), and a multi-beam scanner with a physical
//! return model ([`sensor`]) is rendered through cube maps of the hybrid
//! point/mesh scene ([`render`]). Frames come out auto-labeled with tight
//! boxes ([`annotation`]); [`pipeline`] ties the stages into reproducible runs.

pub mod annotation;
pub mod background;
pub mod cloud;
pub mod demo;
pub mod geom;
pub mod index;
pub mod io;
pub mod mesh;
pub mod pipeline;
pub mod placement;
pub mod render;
pub mod sensor;
pub mod util;

pub use cloud::{ClassId, ClassTable, SemanticPointCloud};
pub use geom::{Obb, Point3, RigidPose, Vec3};
pub use index::SpatialGridIndex;
pub use mesh::{Material, TriangleMesh};
