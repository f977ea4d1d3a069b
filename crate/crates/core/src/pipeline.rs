//! End-to-end commands: each validates its inputs completely before writing
//! anything, and every output is a pure function of inputs and seeds.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::annotation::{
    annotate_frame, apply_dropout, read_frame, write_frame, FrameFormat, FrameMeta, PlacedInstance, DEFAULT_MIN_SUPPORT,
};
use crate::background::{clean_background, BackgroundScene, CleanParams, SceneStats};
use crate::cloud::ClassTable;
use crate::geom::{Point3, RigidPose, Vec3, YawPose};
use crate::io::{read_raw, CloudFormat};
use crate::placement::{
    build_probability_maps, compose_scene, parse_annotations, AreaBounds, CategoryPrior, ComposeParams,
    GaussianTemplate, ObstacleLibrary, PlacementError, ProbabilityMap, SamplingParams, MAP_EXTENSION,
    DEFAULT_MIXING_RATIO,
};
use crate::render::{
    default_background_palette, simulate_frame, FrameCounters, FrameScene, RenderParams, SplatCloud, SplatParams,
    MIN_RESOLUTION,
};
use crate::sensor::{calibrate_beams, SensorConfig, SensorModel};
use crate::util::{mix64, write_atomic};

pub const RUN_CONFIG_VERSION: u32 = 1;
/// Environment variable overriding the frame worker count.
pub const WORKERS_ENV: &str = "AUGSIM_WORKERS";
pub const MANIFEST: &str = "manifest.json";
pub const FRAMES_DIR: &str = "frames";

#[derive(Debug, Error)]
pub enum PipelineError {
    /// Bad arguments, configs or inputs; nothing was written.
    #[error("{0}")]
    Validation(String),
    #[error("{0}")]
    Runtime(String),
    #[error("frame {index}: {msg}")]
    Frame { index: usize, msg: String },
}

impl PipelineError {
    /// 2 for validation failures, 3 for runtime failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            PipelineError::Validation(_) => 2,
            _ => 3,
        }
    }
}

fn invalid(msg: impl std::fmt::Display) -> PipelineError {
    PipelineError::Validation(msg.to_string())
}

fn runtime(msg: impl std::fmt::Display) -> PipelineError {
    PipelineError::Runtime(msg.to_string())
}

// ---------------------------------------------------------------------------
// clean-background

/// Cleans a labeled scan into a background bundle in `out`.
pub fn cmd_clean_background(input: &Path, out: &Path, params: &CleanParams) -> Result<SceneStats, PipelineError> {
    let format = CloudFormat::from_path(input).ok_or_else(|| invalid(format!("{}: unknown cloud format", input.display())))?;
    let raw = read_raw(input, Some(format)).map_err(invalid)?;
    if !raw.has_labels() {
        return Err(invalid(format!(
            "{}: the cloud has no label field; semantic labels are required",
            input.display()
        )));
    }
    let cloud = raw.into_cloud();
    cloud.validate().map_err(invalid)?;
    let (scene, stats) = clean_background(&cloud, params).map_err(invalid)?;
    scene.save(out, &stats).map_err(runtime)?;
    Ok(stats)
}

// ---------------------------------------------------------------------------
// build-map

#[derive(Clone, Debug, PartialEq)]
pub struct MapParams {
    pub cell_size: f64,
    pub template: GaussianTemplate,
    /// Margin around the annotations when bounds are not given.
    pub margin: f64,
    pub bounds: Option<AreaBounds>,
}

impl Default for MapParams {
    fn default() -> Self {
        Self {
            cell_size: 0.5,
            template: GaussianTemplate::default(),
            margin: 5.0,
            bounds: None,
        }
    }
}

/// Writes `<category>.pmap` into `out` for every category in the file.
pub fn cmd_build_map(annotations: &Path, out: &Path, params: &MapParams) -> Result<Vec<PathBuf>, PipelineError> {
    let text = fs::read_to_string(annotations).map_err(|e| invalid(format!("{}: {e}", annotations.display())))?;
    let anns = parse_annotations(&text).map_err(invalid)?;
    if anns.is_empty() {
        return Err(invalid(PlacementError::NoAnnotations));
    }
    let bounds = match params.bounds {
        Some(b) => b,
        None => AreaBounds::around(&anns, params.margin).ok_or_else(|| invalid(PlacementError::NoAnnotations))?,
    };
    let maps = build_probability_maps(&anns, &bounds, params.cell_size, &params.template).map_err(invalid)?;
    fs::create_dir_all(out).map_err(|e| runtime(format!("{}: {e}", out.display())))?;
    let mut written = Vec::new();
    for m in &maps {
        let p = out.join(format!("{}.{MAP_EXTENSION}", m.category));
        write_atomic(&p, &m.to_bytes()).map_err(|e| runtime(format!("{}: {e}", p.display())))?;
        written.push(p);
    }
    Ok(written)
}

/// Loads every `*.pmap` in `dir`, keyed by category.
pub fn load_maps(dir: &Path) -> Result<BTreeMap<String, ProbabilityMap>, PipelineError> {
    let entries = fs::read_dir(dir).map_err(|e| invalid(format!("{}: {e}", dir.display())))?;
    let mut paths: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == MAP_EXTENSION))
        .collect();
    paths.sort();
    let mut maps = BTreeMap::new();
    for p in paths {
        let bytes = fs::read(&p).map_err(|e| invalid(format!("{}: {e}", p.display())))?;
        let m = ProbabilityMap::from_bytes(&bytes).map_err(|e| invalid(format!("{}: {e}", p.display())))?;
        maps.insert(m.category.clone(), m);
    }
    Ok(maps)
}

// ---------------------------------------------------------------------------
// calibrate

/// Fits a beam table from a calibration scan and writes it as CSV. The
/// input is a PLY/PCD cloud whose label field holds the beam index, or a
/// CSV with columns `beam,x,y,z`. Beams are renumbered by ascending angle.
pub fn cmd_calibrate(input: &Path, out: &Path) -> Result<crate::sensor::BeamTable, PipelineError> {
    let (points, beams) = match CloudFormat::from_path(input) {
        Some(f) => {
            let raw = read_raw(input, Some(f)).map_err(invalid)?;
            let beams = raw
                .labels
                .ok_or_else(|| invalid(format!("{}: no label field carrying beam indices", input.display())))?;
            (raw.points, beams)
        }
        None => read_calibration_csv(input)?,
    };
    let (table, _) = calibrate_beams(&points, &beams).map_err(invalid)?;
    write_atomic(out, table.to_csv().as_bytes()).map_err(|e| runtime(format!("{}: {e}", out.display())))?;
    Ok(table)
}

fn read_calibration_csv(path: &Path) -> Result<(Vec<Point3>, Vec<u32>), PipelineError> {
    #[derive(Deserialize)]
    struct Row {
        beam: u32,
        x: f64,
        y: f64,
        z: f64,
    }
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| invalid(format!("{}: {e}", path.display())))?;
    let mut points = Vec::new();
    let mut beams = Vec::new();
    for row in rdr.deserialize() {
        let r: Row = row.map_err(|e| invalid(format!("{}: {e}", path.display())))?;
        points.push(Point3::new(r.x, r.y, r.z));
        beams.push(r.beam);
    }
    Ok((points, beams))
}

// ---------------------------------------------------------------------------
// simulate

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RenderSection {
    pub resolution: usize,
    pub splat_radius: f64,
    pub depth_epsilon: f64,
    /// Neighborhood radius for background normals.
    pub normal_radius: f64,
    /// Cell size of the background neighbor index.
    pub index_cell: f64,
}

impl Default for RenderSection {
    fn default() -> Self {
        let s = SplatParams::default();
        Self {
            resolution: crate::render::DEFAULT_RESOLUTION,
            splat_radius: s.radius,
            depth_epsilon: s.depth_epsilon,
            normal_radius: 0.15,
            index_cell: 0.5,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScannerSection {
    /// Sensor height above the ground model.
    #[serde(default = "default_height")]
    pub height: f64,
    /// `[x, y, yaw]` per scanner position; frame i uses entry i mod len.
    pub poses: Vec<[f64; 3]>,
}

fn default_height() -> f64 {
    1.73
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PlacementSection {
    pub clearance: f64,
    pub attempts_per_target: usize,
    pub yaw_sigma_deg: f64,
    pub mixing_ratio: f64,
    pub static_min_height: f64,
}

impl Default for PlacementSection {
    fn default() -> Self {
        let c = ComposeParams::default();
        Self {
            clearance: c.clearance,
            attempts_per_target: c.attempts_per_target,
            yaw_sigma_deg: c.sampling.yaw_sigma.to_degrees(),
            mixing_ratio: DEFAULT_MIXING_RATIO,
            static_min_height: c.static_min_height,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AnnotationSection {
    pub min_support: usize,
}

impl Default for AnnotationSection {
    fn default() -> Self {
        Self {
            min_support: DEFAULT_MIN_SUPPORT,
        }
    }
}

/// A simulation run. Relative paths are resolved against the config file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub version: u32,
    /// Directory written by clean-background.
    pub background: PathBuf,
    /// Library manifest CSV.
    pub library: PathBuf,
    /// Directory of probability maps.
    pub maps: PathBuf,
    pub output: PathBuf,
    /// Sensor TOML; the default sensor when absent.
    #[serde(default)]
    pub sensor: Option<PathBuf>,
    pub frames: usize,
    pub master_seed: u64,
    #[serde(default)]
    pub dropout: f64,
    #[serde(default)]
    pub format: FrameFormat,
    /// Frames simulated in parallel; overridden by `AUGSIM_WORKERS`.
    #[serde(default)]
    pub workers: Option<usize>,
    pub targets: BTreeMap<String, usize>,
    #[serde(default)]
    pub render: RenderSection,
    pub scanner: ScannerSection,
    #[serde(default)]
    pub placement: PlacementSection,
    #[serde(default)]
    pub annotation: AnnotationSection,
}

impl RunConfig {
    /// Parses and checks everything that does not need the referenced files.
    pub fn from_toml(text: &str, base: &Path) -> Result<Self, PipelineError> {
        Ok(Self::parse(text)?.resolved(base))
    }

    fn parse(text: &str) -> Result<Self, PipelineError> {
        let c: RunConfig = toml::from_str(text).map_err(|e| invalid(format!("run config: {e}")))?;
        if c.version != RUN_CONFIG_VERSION {
            return Err(invalid(format!(
                "run config version {} is not supported (expected {RUN_CONFIG_VERSION})",
                c.version
            )));
        }
        if !(0.0..1.0).contains(&c.dropout) {
            return Err(invalid(format!("dropout {} outside [0, 1)", c.dropout)));
        }
        if c.render.resolution < MIN_RESOLUTION {
            return Err(invalid(format!("resolution must be at least {MIN_RESOLUTION}")));
        }
        c.splat_params().validate().map_err(invalid)?;
        if !(c.render.normal_radius > 0.0 && c.render.index_cell > 0.0) {
            return Err(invalid("normal_radius and index_cell must be positive"));
        }
        if c.scanner.poses.is_empty() {
            return Err(invalid("scanner.poses is empty"));
        }
        if c.workers == Some(0) {
            return Err(invalid("workers must be at least 1"));
        }
        Ok(c)
    }

    fn resolved(mut self, base: &Path) -> Self {
        for p in [&mut self.background, &mut self.library, &mut self.maps, &mut self.output] {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        if let Some(s) = &mut self.sensor {
            if s.is_relative() {
                *s = base.join(&*s);
            }
        }
        self
    }

    /// Loads a config file. Also returns a canonical serialization of the
    /// settings that determine frame content (paths as written, without the
    /// output directory and worker count), used for the run's config hash.
    pub fn load(path: &Path) -> Result<(Self, String), PipelineError> {
        let text = fs::read_to_string(path).map_err(|e| invalid(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        let raw = Self::parse(&text)?;
        let canonical = serde_json::to_string(&RunConfig {
            output: PathBuf::new(),
            workers: None,
            ..raw.clone()
        })
        .expect("config serializes");
        Ok((raw.resolved(base), canonical))
    }

    fn splat_params(&self) -> SplatParams {
        SplatParams {
            radius: self.render.splat_radius,
            depth_epsilon: self.render.depth_epsilon,
        }
    }
}

/// Seed of frame `index`: the SplitMix64 finalizer of `master + index`,
/// injective in `index` for a fixed master seed.
pub fn frame_seed(master: u64, index: usize) -> u64 {
    mix64(master.wrapping_add(index as u64))
}

const SALT_SIMULATE: u64 = 0x5349_4d55_4c41_5445;
const SALT_DROPOUT: u64 = 0x4452_4f50_4f55_5421;

/// Per-frame manifest entry.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrameSummary {
    pub index: usize,
    pub dir: String,
    pub seed: u64,
    pub scanner: YawPose,
    pub points: usize,
    pub points_before_dropout: usize,
    pub obstacles: usize,
    pub labeled: usize,
    pub requested: usize,
    pub counters: FrameCounters,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub version: u32,
    pub config_hash: String,
    pub master_seed: u64,
    pub format: FrameFormat,
    pub frames: Vec<FrameSummary>,
}

/// Validated, loaded inputs of a run.
struct RunInputs {
    config: RunConfig,
    config_hash: String,
    scene: BackgroundScene,
    splats: SplatCloud,
    library: ObstacleLibrary,
    maps: BTreeMap<String, ProbabilityMap>,
    prior: CategoryPrior,
    sensor: SensorModel,
    compose: ComposeParams,
}

fn hash_hex(parts: &[&[u8]]) -> String {
    let mut h = Sha256::new();
    for p in parts {
        h.update((p.len() as u64).to_le_bytes());
        h.update(p);
    }
    h.finalize().iter().fold(String::with_capacity(64), |mut s, b| {
        let _ = write!(s, "{b:02x}");
        s
    })
}

fn load_inputs(config_path: &Path) -> Result<RunInputs, PipelineError> {
    let (config, canonical) = RunConfig::load(config_path)?;
    let (sensor_cfg, sensor_text) = match &config.sensor {
        Some(p) => (
            SensorConfig::load(p).map_err(invalid)?,
            fs::read(p).map_err(|e| invalid(format!("{}: {e}", p.display())))?,
        ),
        None => (SensorConfig::default(), Vec::new()),
    };
    let table_text = match &sensor_cfg.beam_table {
        Some(p) => fs::read(p).map_err(|e| invalid(format!("{}: {e}", p.display())))?,
        None => Vec::new(),
    };
    let config_hash = hash_hex(&[canonical.as_bytes(), &sensor_text, &table_text]);
    let sensor = SensorModel::new(sensor_cfg, config.master_seed).map_err(invalid)?;

    let scene = BackgroundScene::load(&config.background, config.render.index_cell).map_err(invalid)?;
    let library = ObstacleLibrary::load(&config.library).map_err(invalid)?;
    let maps = load_maps(&config.maps)?;
    let counts = library.category_counts();
    for (cat, &n) in &config.targets {
        if n == 0 {
            continue;
        }
        if counts.get(cat).copied().unwrap_or(0) == 0 {
            return Err(invalid(PlacementError::UnknownCategory(cat.clone())));
        }
        if !maps.contains_key(cat) {
            return Err(invalid(PlacementError::MissingMap(cat.clone())));
        }
    }
    let prior = CategoryPrior::from_counts(&counts, config.placement.mixing_ratio).map_err(invalid)?;
    for (i, p) in config.scanner.poses.iter().enumerate() {
        if scene.ground.height_at(p[0], p[1]).is_none() {
            return Err(invalid(format!("scanner pose {i} at ({}, {}) has no ground below it", p[0], p[1])));
        }
    }
    let viewpoint = {
        let p = config.scanner.poses[0];
        Point3::new(p[0], p[1], scene.ground.height_at(p[0], p[1]).unwrap_or(0.0) + config.scanner.height)
    };
    let (splats, isolated) = SplatCloud::from_scene(&scene, config.render.normal_radius, &viewpoint);
    if isolated > 0 {
        log::info!("{isolated} background points have no usable neighborhood; their normals face the scanner");
    }
    let compose = ComposeParams {
        sampling: SamplingParams {
            max_range: sensor.config.max_range,
            yaw_sigma: config.placement.yaw_sigma_deg.to_radians(),
        },
        clearance: config.placement.clearance,
        attempts_per_target: config.placement.attempts_per_target,
        static_min_height: config.placement.static_min_height,
    };
    Ok(RunInputs {
        config,
        config_hash,
        scene,
        splats,
        library,
        maps,
        prior,
        sensor,
        compose,
    })
}

fn worker_count(config: &RunConfig) -> Result<usize, PipelineError> {
    if let Ok(v) = std::env::var(WORKERS_ENV) {
        return match v.trim().parse::<usize>() {
            Ok(n) if n > 0 => Ok(n),
            _ => Err(invalid(format!("{WORKERS_ENV}={v} is not a positive integer"))),
        };
    }
    let available = std::thread::available_parallelism().map_or(1, |n| n.get());
    Ok(config.workers.unwrap_or(available.min(4)))
}

fn scanner_pose(inputs: &RunInputs, index: usize) -> RigidPose {
    let c = &inputs.config.scanner;
    let p = c.poses[index % c.poses.len()];
    let z = inputs.scene.ground.height_at(p[0], p[1]).expect("validated ground") + c.height;
    RigidPose::from_yaw(Vec3::new(p[0], p[1], z), p[2])
}

fn simulate_one(inputs: &RunInputs, index: usize) -> Result<FrameSummary, PipelineError> {
    let cfg = &inputs.config;
    let seed = frame_seed(cfg.master_seed, index);
    let pose = scanner_pose(inputs, index);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let placement = match compose_scene(
        &inputs.scene,
        &inputs.maps,
        &inputs.prior,
        &inputs.library,
        &cfg.targets,
        &pose,
        &inputs.compose,
        &mut rng,
    ) {
        Ok(p) => p,
        Err(PlacementError::PlacementExhausted {
            achieved, placement, ..
        }) => {
            log::warn!("frame {index}: placement exhausted its attempts, continuing with {achieved:?}");
            *placement
        }
        Err(e) => return Err(PipelineError::Frame { index, msg: e.to_string() }),
    };

    let mut scene = FrameScene {
        splats: Some(&inputs.splats),
        meshes: Vec::new(),
        palette: default_background_palette(),
    };
    let classes = ClassTable::default();
    let mut placed = Vec::with_capacity(placement.obstacles.len());
    let mut boxes = Vec::with_capacity(placement.obstacles.len());
    for o in &placement.obstacles {
        let model = &inputs.library.models[&o.model_id];
        let world = o.rigid_pose();
        let class = classes.by_name(&o.category).map_or(crate::cloud::ClassId::OTHER_MOVABLE.0, |c| c.0);
        scene.add_mesh(model.mesh.transformed(&world), &model.materials, class);
        boxes.push(model.canonical.transformed(&world));
        placed.push(PlacedInstance {
            category: o.category.clone(),
            model_id: o.model_id.clone(),
            pose: o.pose,
            canonical: model.canonical,
        });
    }
    let params = RenderParams {
        resolution: cfg.render.resolution,
        splat: cfg.splat_params(),
        max_range: inputs.sensor.config.max_range,
    };
    let sim = simulate_frame(&scene, &inputs.sensor, &pose, &params, &boxes, mix64(seed ^ SALT_SIMULATE));
    let meta = FrameMeta {
        seed,
        config_hash: inputs.config_hash.clone(),
        counters: sim.counters,
        obb_padding: 3.0 * inputs.sensor.config.distance_sigma,
        min_support: cfg.annotation.min_support,
        dropout: 0.0,
    };
    let before = sim.points.len();
    let mut frame = annotate_frame(sim.points, &placed, &pose, meta);
    if cfg.dropout > 0.0 {
        frame = apply_dropout(&frame, cfg.dropout, mix64(seed ^ SALT_DROPOUT)).map_err(|e| PipelineError::Frame {
            index,
            msg: e.to_string(),
        })?;
    }
    let dir = format!("{FRAMES_DIR}/{index:06}");
    write_frame(&frame, &cfg.output.join(&dir), cfg.format).map_err(|e| PipelineError::Frame {
        index,
        msg: e.to_string(),
    })?;
    Ok(FrameSummary {
        index,
        dir,
        seed,
        scanner: (&pose).into(),
        points: frame.points.len(),
        points_before_dropout: before,
        obstacles: frame.obstacles.len(),
        labeled: frame.obstacles.iter().filter(|o| o.obb.is_some()).count(),
        requested: cfg.targets.values().sum(),
        counters: frame.meta.counters,
    })
}

/// Simulates every frame of the run described by `config_path` and writes
/// `frames/NNNNNN/` bundles plus `manifest.json` under the output directory.
pub fn cmd_simulate(config_path: &Path) -> Result<RunManifest, PipelineError> {
    let inputs = load_inputs(config_path)?;
    let workers = worker_count(&inputs.config)?;
    let out = &inputs.config.output;
    fs::create_dir_all(out.join(FRAMES_DIR)).map_err(|e| runtime(format!("{}: {e}", out.display())))?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(runtime)?;
    log::info!("simulating {} frames on {workers} workers", inputs.config.frames);
    let results: Vec<Result<FrameSummary, PipelineError>> = pool.install(|| {
        (0..inputs.config.frames)
            .into_par_iter()
            .map(|i| {
                let r = simulate_one(&inputs, i);
                if let Ok(s) = &r {
                    log::info!("frame {i}: {} points, {} obstacles", s.points, s.obstacles);
                }
                r
            })
            .collect()
    });
    let frames = results.into_iter().collect::<Result<Vec<_>, _>>()?;
    let manifest = RunManifest {
        version: RUN_CONFIG_VERSION,
        config_hash: inputs.config_hash.clone(),
        master_seed: inputs.config.master_seed,
        format: inputs.config.format,
        frames,
    };
    let mut json = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    json.push('\n');
    let mp = out.join(MANIFEST);
    write_atomic(&mp, json.as_bytes()).map_err(|e| runtime(format!("{}: {e}", mp.display())))?;
    Ok(manifest)
}

// ---------------------------------------------------------------------------
// stats

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct StatsReport {
    pub frames: usize,
    pub point_counts: Vec<usize>,
    pub mean_points: f64,
    /// Sample standard deviation; 0 for a single frame.
    pub std_points: f64,
    /// Labeled obstacles per category.
    pub labeled: BTreeMap<String, usize>,
    /// Points per class name.
    pub points_per_class: BTreeMap<String, usize>,
    /// Ten equal-width bins over the per-frame point counts: (low, high, frames).
    pub histogram: Vec<(usize, usize, usize)>,
}

impl StatsReport {
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        writeln!(s, "frames: {}", self.frames).unwrap();
        writeln!(s, "points per frame: mean {:.1}, std {:.1}", self.mean_points, self.std_points).unwrap();
        writeln!(s, "labeled obstacles:").unwrap();
        for (k, v) in &self.labeled {
            writeln!(s, "  {k}: {v}").unwrap();
        }
        writeln!(s, "points per class:").unwrap();
        for (k, v) in &self.points_per_class {
            writeln!(s, "  {k}: {v}").unwrap();
        }
        writeln!(s, "point count histogram:").unwrap();
        for (lo, hi, n) in &self.histogram {
            writeln!(s, "  [{lo}, {hi}]: {n}").unwrap();
        }
        s
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("section,key,value\n");
        writeln!(s, "summary,frames,{}", self.frames).unwrap();
        writeln!(s, "summary,mean_points,{}", self.mean_points).unwrap();
        writeln!(s, "summary,std_points,{}", self.std_points).unwrap();
        for (k, v) in &self.labeled {
            writeln!(s, "labeled,{k},{v}").unwrap();
        }
        for (k, v) in &self.points_per_class {
            writeln!(s, "class_points,{k},{v}").unwrap();
        }
        for (i, n) in self.point_counts.iter().enumerate() {
            writeln!(s, "frame_points,{i},{n}").unwrap();
        }
        s
    }
}

fn frame_dirs(dir: &Path) -> Result<Vec<PathBuf>, PipelineError> {
    if dir.join(crate::annotation::META).is_file() {
        return Ok(vec![dir.to_path_buf()]);
    }
    let root = if dir.join(FRAMES_DIR).is_dir() { dir.join(FRAMES_DIR) } else { dir.to_path_buf() };
    let entries = fs::read_dir(&root).map_err(|e| invalid(format!("{}: {e}", root.display())))?;
    let mut dirs: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.join(crate::annotation::META).is_file())
        .collect();
    dirs.sort();
    Ok(dirs)
}

/// Summarizes every frame bundle under `dir` (a run output, its `frames/`
/// directory, or a single frame).
pub fn cmd_stats(dir: &Path) -> Result<StatsReport, PipelineError> {
    let dirs = frame_dirs(dir)?;
    if dirs.is_empty() {
        return Err(invalid(format!("{}: no frame bundles found", dir.display())));
    }
    let classes = ClassTable::default();
    let mut counts = Vec::with_capacity(dirs.len());
    let mut labeled = BTreeMap::new();
    let mut per_class = BTreeMap::new();
    for d in &dirs {
        let f = read_frame(d).map_err(invalid)?;
        counts.push(f.points.len());
        for o in f.obstacles.iter().filter(|o| o.obb.is_some()) {
            *labeled.entry(o.category.clone()).or_insert(0) += 1;
        }
        for p in &f.points {
            let name = classes
                .name(crate::cloud::ClassId(p.class))
                .map_or_else(|| format!("class_{}", p.class), str::to_string);
            *per_class.entry(name).or_insert(0) += 1;
        }
    }
    let n = counts.len() as f64;
    let mean = counts.iter().sum::<usize>() as f64 / n;
    let std = if counts.len() > 1 {
        (counts.iter().map(|&c| (c as f64 - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    } else {
        0.0
    };
    Ok(StatsReport {
        frames: counts.len(),
        mean_points: mean,
        std_points: std,
        labeled,
        points_per_class: per_class,
        histogram: histogram(&counts, 10),
        point_counts: counts,
    })
}

fn histogram(values: &[usize], bins: usize) -> Vec<(usize, usize, usize)> {
    let (lo, hi) = (*values.iter().min().unwrap(), *values.iter().max().unwrap());
    if lo == hi {
        return vec![(lo, hi, values.len())];
    }
    let width = (hi - lo) / bins + 1;
    let mut out: Vec<(usize, usize, usize)> =
        (0..bins).map(|b| (lo + b * width, lo + (b + 1) * width - 1, 0)).collect();
    for &v in values {
        out[((v - lo) / width).min(bins - 1)].2 += 1;
    }
    out.retain(|b| b.0 <= hi);
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn frame_seeds_are_distinct() {
        let seeds: std::collections::BTreeSet<u64> = (0..10_000).map(|i| frame_seed(7, i)).collect();
        assert_eq!(seeds.len(), 10_000);
        assert_ne!(frame_seed(7, 0), frame_seed(8, 0));
    }

    #[test]
    fn config_rejects_unknown_keys_and_bad_version() {
        let base = "version = 1\nbackground = \"s\"\nlibrary = \"l.csv\"\nmaps = \"m\"\noutput = \"o\"\nframes = 1\nmaster_seed = 1\n[targets]\ncar = 1\n[scanner]\nposes = [[0.0, 0.0, 0.0]]\n";
        let c = RunConfig::from_toml(base, Path::new("/cfg")).unwrap();
        assert_eq!(c.background, PathBuf::from("/cfg/s"));
        assert_eq!(c.render.resolution, 1024);
        let bad = base.replace("frames = 1", "frames = 1\nframe = 2");
        assert!(matches!(RunConfig::from_toml(&bad, Path::new(".")), Err(PipelineError::Validation(_))));
        let v2 = base.replace("version = 1", "version = 2");
        assert!(RunConfig::from_toml(&v2, Path::new(".")).is_err());
        let drop = base.replace("master_seed = 1", "master_seed = 1\ndropout = 1.0");
        assert!(RunConfig::from_toml(&drop, Path::new(".")).is_err());
    }

    #[test]
    fn histogram_bins_cover_values() {
        let h = histogram(&[10, 12, 19, 30], 10);
        assert_eq!(h.iter().map(|b| b.2).sum::<usize>(), 4);
        assert_eq!(h[0].0, 10);
        assert!(h.last().unwrap().1 >= 30);
        assert_eq!(histogram(&[5, 5], 10), vec![(5, 5, 2)]);
    }

    #[test]
    fn exit_codes() {
        assert_eq!(invalid("x").exit_code(), 2);
        assert_eq!(runtime("x").exit_code(), 3);
        assert_eq!(PipelineError::Frame { index: 1, msg: "x".into() }.exit_code(), 3);
    }
}
