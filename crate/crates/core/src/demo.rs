//! Procedural stand-in for a scanned street: a labeled background cloud,
//! obstacle annotations, a small CAD library and ready-to-run configs.

use std::f64::consts::{FRAC_PI_2, PI};
use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::cloud::{ClassId, SemanticPointCloud};
use crate::geom::{Obb, Point3, Vec3};
use crate::io::{write_point_cloud, CloudFormat, Encoding};
use crate::placement::Annotation;
use crate::sensor::SensorConfig;
use crate::util::write_atomic;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DemoParams {
    /// The scene covers `[-half_extent, half_extent]²`.
    pub half_extent: f64,
    /// Sample spacing of the synthetic scan.
    pub spacing: f64,
    pub seed: u64,
}

impl Default for DemoParams {
    fn default() -> Self {
        Self {
            half_extent: 30.0,
            spacing: 0.1,
            seed: 1,
        }
    }
}

/// Half-width of the two crossing roads.
const ROAD_HALF: f64 = 4.0;
/// Distance of the building blocks from the road axes.
const BLOCK_SETBACK: f64 = 9.0;
const BLOCK_HEIGHT: f64 = 8.0;

pub struct DemoScene {
    /// Labeled scan including a few movable objects.
    pub cloud: SemanticPointCloud,
    /// Obstacle poses the maps are learned from.
    pub annotations: Vec<Annotation>,
}

pub fn ground_height(x: f64, y: f64) -> f64 {
    0.05 * (x / 10.0).sin() + 0.01 * y
}

fn block_footprints(h: f64) -> Vec<(f64, f64, f64, f64)> {
    let (a, b) = (BLOCK_SETBACK, h - 3.0);
    if b <= a + 1.0 {
        return Vec::new();
    }
    vec![(a, b, a, b), (-b, -a, a, b), (a, b, -b, -a), (-b, -a, -b, -a)]
}

fn in_block(blocks: &[(f64, f64, f64, f64)], x: f64, y: f64) -> bool {
    blocks.iter().any(|&(x0, x1, y0, y1)| x >= x0 && x <= x1 && y >= y0 && y <= y1)
}

/// Samples the six faces of a box with roughly `step` spacing.
fn box_surface(obb: &Obb, step: f64, out: &mut Vec<Point3>) {
    let h = obb.half_extents;
    for axis in 0..3 {
        let (b, c) = ((axis + 1) % 3, (axis + 2) % 3);
        let nb = ((2.0 * h[b] / step).ceil() as usize).max(1);
        let nc = ((2.0 * h[c] / step).ceil() as usize).max(1);
        for s in [-1.0, 1.0] {
            for i in 0..=nb {
                for j in 0..=nc {
                    let mut l = Vec3::zeros();
                    l[axis] = s * h[axis];
                    l[b] = -h[b] + 2.0 * h[b] * i as f64 / nb as f64;
                    l[c] = -h[c] + 2.0 * h[c] * j as f64 / nc as f64;
                    out.push(obb.from_local(&l));
                }
            }
        }
    }
}

fn car_box(x: f64, y: f64, yaw: f64) -> Obb {
    Obb::new(Point3::new(x, y, ground_height(x, y) + 0.75), Vec3::new(2.25, 0.9, 0.75), yaw)
}

fn pedestrian_box(x: f64, y: f64, yaw: f64) -> Obb {
    Obb::new(Point3::new(x, y, ground_height(x, y) + 0.85), Vec3::new(0.25, 0.3, 0.85), yaw)
}

/// Builds the demo street: two crossing roads with sidewalks, four building
/// blocks, poles and shrubs, plus parked cars and pedestrians that the
/// cleaning stage has to remove.
pub fn demo_scene(params: &DemoParams) -> DemoScene {
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let h = params.half_extent;
    let s = params.spacing;
    let blocks = block_footprints(h);

    let mut annotations = Vec::new();
    let mut x = -h + 4.0;
    while x < h - 4.0 {
        if x.abs() > ROAD_HALF + 3.0 {
            for (lane, yaw) in [(-2.0, 0.0), (2.0, PI)] {
                let j = rng.random_range(-0.3..0.3);
                annotations.push(ann("car", x + j, lane, yaw));
                annotations.push(ann("car", lane, x - j, yaw + FRAC_PI_2));
            }
            for side in [-5.5, 5.5] {
                let yaw = rng.random_range(-PI..PI);
                annotations.push(ann("pedestrian", x, side, yaw));
                annotations.push(ann("pedestrian", side, x, yaw));
            }
            annotations.push(ann("cyclist", x, -3.4, 0.0));
            annotations.push(ann("truck_bus", -x, 2.0, PI));
        }
        x += 7.0;
    }

    // A few annotated objects are physically present in the scan.
    let mut movers: Vec<(Obb, ClassId)> = Vec::new();
    for a in annotations.iter().step_by(5) {
        let obb = match a.category.as_str() {
            "car" => car_box(a.pose.x, a.pose.y, a.pose.yaw),
            "pedestrian" => pedestrian_box(a.pose.x, a.pose.y, a.pose.yaw),
            _ => continue,
        };
        let class = if a.category == "car" { ClassId::CAR } else { ClassId::PEDESTRIAN };
        if movers.iter().all(|(o, _)| !o.inflated(0.3).overlaps_xy(&obb)) {
            movers.push((obb, class));
        }
    }

    let mut cloud = SemanticPointCloud::default();
    let n = (2.0 * h / s).round() as i64;
    for i in 0..n {
        for j in 0..n {
            let x = -h + (i as f64 + 0.5) * s;
            let y = -h + (j as f64 + 0.5) * s;
            if in_block(&blocks, x, y) || movers.iter().any(|(o, _)| o.contains_xy(x, y, 0.0)) {
                continue;
            }
            cloud.push(Point3::new(x, y, ground_height(x, y)), ClassId::GROUND);
        }
    }
    let mut pts = Vec::new();
    for &(x0, x1, y0, y1) in &blocks {
        let (cx, cy) = (0.5 * (x0 + x1), 0.5 * (y0 + y1));
        let base = ground_height(cx, cy) - 0.3;
        let obb = Obb::new(
            Point3::new(cx, cy, base + BLOCK_HEIGHT / 2.0),
            Vec3::new(0.5 * (x1 - x0), 0.5 * (y1 - y0), BLOCK_HEIGHT / 2.0),
            0.0,
        );
        pts.clear();
        box_surface(&obb, s, &mut pts);
        for p in &pts {
            if p.z > base + 1e-9 {
                cloud.push(*p, ClassId::BUILDING);
            }
        }
    }
    let mut px = -h + 6.0;
    while px < h - 6.0 {
        if px.abs() > ROAD_HALF + 1.0 {
            for py in [-7.0, 7.0] {
                let g = ground_height(px, py);
                let steps = (6.0 / (s * 0.5)) as usize;
                for k in 0..steps {
                    let z = g + k as f64 * s * 0.5;
                    for a in 0..8 {
                        let t = a as f64 * PI / 4.0;
                        cloud.push(Point3::new(px + 0.1 * t.cos(), py + 0.1 * t.sin(), z), ClassId::POLE);
                    }
                }
            }
        }
        px += 12.0;
    }
    for _ in 0..12 {
        let cx = rng.random_range(-h + 2.0..h - 2.0);
        let cy = if rng.random_bool(0.5) { 7.8 } else { -7.8 };
        let g = ground_height(cx, cy);
        for _ in 0..(400.0 / (s * 10.0)) as usize {
            let d = Vec3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
            if d.norm() > 1.0 || d.norm() < 1e-6 {
                continue;
            }
            let p = Point3::new(cx, cy, g + 0.8) + d.normalize() * 0.7;
            cloud.push(p, ClassId::VEGETATION);
        }
    }
    for (obb, class) in &movers {
        pts.clear();
        box_surface(obb, s, &mut pts);
        for p in &pts {
            cloud.push(*p, *class);
        }
    }
    DemoScene { cloud, annotations }
}

fn ann(category: &str, x: f64, y: f64, yaw: f64) -> Annotation {
    Annotation {
        category: category.to_string(),
        pose: crate::geom::YawPose {
            x,
            y,
            z: ground_height(x, y),
            yaw: crate::geom::normalize_angle(yaw),
        },
    }
}

/// Text of an annotations file: `category x y z yaw` per line.
pub fn annotations_text(annotations: &[Annotation]) -> String {
    let mut s = String::from("# category x y z yaw(rad)\n");
    for a in annotations {
        writeln!(s, "{} {} {} {} {}", a.category, a.pose.x, a.pose.y, a.pose.z, a.pose.yaw).unwrap();
    }
    s
}

/// Model part: box bounds and material slot name.
type Part = ([f64; 3], [f64; 3], &'static str);

/// Demo CAD library: `(id, category, group, reflectivity, parts)`.
pub fn demo_models() -> Vec<(&'static str, &'static str, &'static str, f64, Vec<Part>)> {
    vec![
        (
            "sedan",
            "car",
            "high",
            0.6,
            vec![
                ([-2.25, -0.9, 0.25], [2.25, 0.9, 0.95], "body"),
                ([-1.1, -0.8, 0.95], [1.0, 0.8, 1.45], "body"),
                ([1.0, -0.75, 1.0], [1.05, 0.75, 1.4], "windshield_glass"),
            ],
        ),
        ("hatchback", "car", "high", 0.5, vec![([-1.9, -0.85, 0.2], [1.9, 0.85, 1.5], "body")]),
        ("van", "car", "low", 0.7, vec![([-2.5, -1.0, 0.25], [2.5, 1.0, 2.0], "body")]),
        ("bus", "truck_bus", "high", 0.5, vec![([-5.5, -1.25, 0.3], [5.5, 1.25, 3.2], "body")]),
        ("adult", "pedestrian", "high", 0.4, vec![([-0.2, -0.25, 0.0], [0.2, 0.25, 1.75], "clothes")]),
        ("child", "pedestrian", "low", 0.4, vec![([-0.15, -0.2, 0.0], [0.15, 0.2, 1.2], "clothes")]),
        (
            "cyclist",
            "cyclist",
            "high",
            0.45,
            vec![
                ([-0.85, -0.05, 0.0], [0.85, 0.05, 1.0], "frame"),
                ([-0.25, -0.25, 1.0], [0.25, 0.25, 1.75], "clothes"),
            ],
        ),
    ]
}

/// OBJ text of box parts, one `usemtl` per distinct slot name.
pub fn parts_obj(parts: &[Part]) -> String {
    let mut s = String::new();
    let mut base = 1;
    for (lo, hi, mat) in parts {
        writeln!(s, "usemtl {mat}").unwrap();
        for k in 0..8 {
            let x = if k & 1 == 0 { lo[0] } else { hi[0] };
            let y = if k & 2 == 0 { lo[1] } else { hi[1] };
            let z = if k & 4 == 0 { lo[2] } else { hi[2] };
            writeln!(s, "v {x} {y} {z}").unwrap();
        }
        // Outward-facing quads over corners indexed by bit pattern (x, y, z).
        for q in [[0, 2, 3, 1], [4, 5, 7, 6], [0, 1, 5, 4], [2, 6, 7, 3], [0, 4, 6, 2], [1, 3, 7, 5]] {
            writeln!(s, "f {} {} {} {}", base + q[0], base + q[1], base + q[2], base + q[3]).unwrap();
        }
        base += 8;
    }
    s
}

/// Files written by [`write_demo`], relative to the demo directory.
pub const DEMO_RAW: &str = "raw.ply";
pub const DEMO_ANNOTATIONS: &str = "annotations.txt";
pub const DEMO_MANIFEST: &str = "library/manifest.csv";
pub const DEMO_SENSOR: &str = "sensor.toml";
pub const DEMO_RUN: &str = "run.toml";

/// Writes a complete demo workspace into `dir`: the raw labeled scan, the
/// annotations, the library, a sensor config and a run config expecting
/// `scene/` (from clean-background) and `maps/` (from build-map).
pub fn write_demo(dir: &Path, params: &DemoParams, frames: usize) -> io::Result<PathBuf> {
    let scene = demo_scene(params);
    fs::create_dir_all(dir.join("library"))?;
    write_point_cloud(&scene.cloud, &dir.join(DEMO_RAW), CloudFormat::Ply, Encoding::Binary)
        .map_err(|e| io::Error::other(e.to_string()))?;
    write_atomic(&dir.join(DEMO_ANNOTATIONS), annotations_text(&scene.annotations).as_bytes())?;
    let mut manifest = String::from("id,category,mesh,group,reflectivity\n");
    for (id, cat, group, refl, parts) in demo_models() {
        write_atomic(&dir.join("library").join(format!("{id}.obj")), parts_obj(&parts).as_bytes())?;
        writeln!(manifest, "{id},{cat},{id}.obj,{group},{refl}").unwrap();
    }
    write_atomic(&dir.join(DEMO_MANIFEST), manifest.as_bytes())?;
    let sensor = toml::to_string(&SensorConfig::default()).map_err(io::Error::other)?;
    write_atomic(
        &dir.join(DEMO_SENSOR),
        format!("# Frame: right-handed, z-up, meters.\n{sensor}").as_bytes(),
    )?;
    let run = format!(
        r#"version = 1
background = "scene"
library = "{DEMO_MANIFEST}"
maps = "maps"
output = "out"
sensor = "{DEMO_SENSOR}"
frames = {frames}
master_seed = {seed}
dropout = 0.0
format = "native"

[targets]
car = 10
pedestrian = 4
cyclist = 2
truck_bus = 1

[render]
resolution = 1024
splat_radius = {radius}
depth_epsilon = 0.05
normal_radius = {normal_radius}

[scanner]
height = 1.73
poses = [[0.0, -6.5, 0.0], [-6.5, 0.0, 1.5707963267948966]]
"#,
        seed = params.seed,
        radius = params.spacing * 0.8,
        normal_radius = params.spacing * 3.0,
    );
    let run_path = dir.join(DEMO_RUN);
    write_atomic(&run_path, run.as_bytes())?;
    Ok(run_path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::parse_obj;

    #[test]
    fn scene_has_all_classes() {
        let d = demo_scene(&DemoParams {
            half_extent: 20.0,
            spacing: 0.25,
            seed: 3,
        });
        let counts = d.cloud.count_by_class();
        for c in [ClassId::GROUND, ClassId::BUILDING, ClassId::POLE, ClassId::VEGETATION, ClassId::CAR] {
            assert!(counts.get(&c).copied().unwrap_or(0) > 0, "{c:?}");
        }
        assert!(d.annotations.iter().any(|a| a.category == "pedestrian"));
        let again = demo_scene(&DemoParams {
            half_extent: 20.0,
            spacing: 0.25,
            seed: 3,
        });
        assert_eq!(again.cloud, d.cloud);
    }

    #[test]
    fn models_parse() {
        for (id, _, _, _, parts) in demo_models() {
            let (mesh, dropped) = parse_obj(&parts_obj(&parts)).unwrap();
            assert_eq!(dropped, 0, "{id}");
            assert_eq!(mesh.triangles.len(), 12 * parts.len());
            // Outward winding: every face normal points away from its part center.
            for (t, tri) in mesh.triangles.iter().enumerate() {
                let [a, b, c] = tri.map(|k| mesh.vertices[k as usize]);
                let n = (b - a).cross(&(c - a));
                let part = &parts[t / 12];
                let center = Point3::new(
                    0.5 * (part.0[0] + part.1[0]),
                    0.5 * (part.0[1] + part.1[1]),
                    0.5 * (part.0[2] + part.1[2]),
                );
                assert!(n.dot(&(a - center)) > 0.0, "{id} triangle {t}");
            }
        }
    }
}
