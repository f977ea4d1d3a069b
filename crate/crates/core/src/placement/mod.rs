//! Learned obstacle placement: per-category probability maps built from
//! annotated poses, weighted pose sampling around a scanner, model selection
//! priors, and collision-free scene composition.

mod compose;
mod library;
mod map;

use std::collections::BTreeMap;
use std::path::PathBuf;

use thiserror::Error;

pub use compose::{compose_scene, ComposeParams, PlacedObstacle, ScenePlacement};
pub use library::{
    is_transparent_name, select_model, CategoryPrior, FrequencyGroup, ObstacleLibrary, ObstacleModel,
    DEFAULT_MIXING_RATIO,
};
pub use map::{
    build_probability_maps, parse_annotations, sample_poses, Annotation, AreaBounds, GaussianTemplate, MapSampler,
    ProbabilityMap, SamplingParams,
};

use crate::mesh::MeshError;

/// File extension of serialized probability maps.
pub const MAP_EXTENSION: &str = "pmap";

#[derive(Debug, Error)]
pub enum PlacementError {
    #[error("annotation {index} at ({x:.2}, {y:.2}) lies outside the map bounds")]
    AnnotationOutOfBounds { index: usize, x: f64, y: f64 },
    #[error("annotations line {line}: {msg}")]
    AnnotationSyntax { line: usize, msg: String },
    #[error("no annotations")]
    NoAnnotations,
    #[error("template: {0}")]
    Template(String),
    #[error("no placement weight for `{category}` within sensor range")]
    NoPlacementMass { category: String },
    #[error("no ground under the weighted cells of `{category}`")]
    NoGroundUnderMass { category: String },
    #[error("category `{0}` has no models in the library")]
    UnknownCategory(String),
    #[error("no probability map for category `{0}`")]
    MissingMap(String),
    #[error("placement gave up after max attempts: placed {achieved:?} of {targets:?}")]
    PlacementExhausted {
        achieved: BTreeMap<String, usize>,
        targets: BTreeMap<String, usize>,
        placement: Box<ScenePlacement>,
    },
    #[error("probability map raster: {0}")]
    Raster(String),
    #[error("library: {0}")]
    Library(String),
    #[error("{path}: {msg}")]
    Manifest { path: PathBuf, msg: String },
    #[error(transparent)]
    Mesh(#[from] MeshError),
}
