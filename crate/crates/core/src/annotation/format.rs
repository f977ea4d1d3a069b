use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{AnnotatedFrame, AnnotationError, FrameMeta, ObstacleRecord};
use crate::geom::{Obb, Point3, Vec3, YawPose};
use crate::render::SimulatedPoint;
use crate::util::{write_atomic, LeReader};

pub const POINTS: &str = "points.bin";
pub const POINTS_EXT: &str = "points_ext.bin";
pub const LABELS: &str = "labels.txt";
pub const META: &str = "meta.json";
pub const KITTI_POINTS: &str = "velodyne.bin";
pub const KITTI_POINT_LABELS: &str = "velodyne.label";
pub const KITTI_LABELS: &str = "label.txt";

const POINTS_MAGIC: &[u8; 8] = b"AUGSPNTS";
const EXT_MAGIC: &[u8; 8] = b"AUGSPEXT";
const VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum FrameFormat {
    #[default]
    Native,
    KittiLike,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct MetaFile {
    version: u32,
    format: FrameFormat,
    sensor_pose: YawPose,
    point_count: usize,
    #[serde(flatten)]
    meta: FrameMeta,
    obstacles: Vec<ObstacleRecord>,
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> AnnotationError + '_ {
    move |source| AnnotationError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn fmt_err(path: &Path, msg: impl Into<String>) -> AnnotationError {
    AnnotationError::Format {
        path: path.to_path_buf(),
        msg: msg.into(),
    }
}

fn header(magic: &[u8; 8], count: usize) -> Vec<u8> {
    let mut b = Vec::with_capacity(16);
    b.extend_from_slice(magic);
    b.extend_from_slice(&VERSION.to_le_bytes());
    b.extend_from_slice(&(count as u32).to_le_bytes());
    b
}

/// Writes a frame bundle into `dir` (created if missing). Every file is
/// written atomically.
///
/// Native: `points.bin`, `points_ext.bin`, `labels.txt`, `meta.json`.
/// Kitti-like: `velodyne.bin`, `velodyne.label`, `label.txt`, `meta.json`.
pub fn write_frame(frame: &AnnotatedFrame, dir: &Path, format: FrameFormat) -> Result<(), AnnotationError> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let n = frame.points.len();
    let write = |name: &str, bytes: &[u8]| {
        let p = dir.join(name);
        write_atomic(&p, bytes).map_err(io_err(&p))
    };
    match format {
        FrameFormat::Native => {
            let mut pts = header(POINTS_MAGIC, n);
            let mut ext = header(EXT_MAGIC, n);
            pts.reserve(n * 20);
            ext.reserve(n * 12);
            for p in &frame.points {
                for c in p.position.coords.iter() {
                    pts.extend_from_slice(&c.to_le_bytes());
                }
                pts.extend_from_slice(&p.instance.to_le_bytes());
                pts.extend_from_slice(&p.class.to_le_bytes());
                ext.extend_from_slice(&p.beam.to_le_bytes());
                ext.extend_from_slice(&p.material.to_le_bytes());
                ext.extend_from_slice(&p.energy.to_le_bytes());
            }
            write(POINTS, &pts)?;
            write(POINTS_EXT, &ext)?;
            write(LABELS, native_labels(&frame.obstacles).as_bytes())?;
        }
        FrameFormat::KittiLike => {
            let mut pts = Vec::with_capacity(n * 16);
            let mut ids = Vec::with_capacity(n * 4);
            for p in &frame.points {
                for c in p.position.coords.iter() {
                    pts.extend_from_slice(&c.to_le_bytes());
                }
                pts.extend_from_slice(&0f32.to_le_bytes());
                ids.extend_from_slice(&((p.instance << 16) | (p.class & 0xffff)).to_le_bytes());
            }
            write(KITTI_POINTS, &pts)?;
            write(KITTI_POINT_LABELS, &ids)?;
            write(KITTI_LABELS, kitti_labels(&frame.obstacles).as_bytes())?;
        }
    }
    let meta = MetaFile {
        version: VERSION,
        format,
        sensor_pose: frame.sensor_pose,
        point_count: n,
        meta: frame.meta.clone(),
        obstacles: frame.obstacles.clone(),
    };
    let mut json = serde_json::to_string_pretty(&meta).expect("meta serializes");
    json.push('\n');
    write(META, json.as_bytes())
}

/// `category cx cy cz l w h yaw` per boxed obstacle, instance order.
fn native_labels(obstacles: &[ObstacleRecord]) -> String {
    let mut s = String::new();
    for o in obstacles {
        if let Some(b) = &o.obb {
            let e = b.half_extents * 2.0;
            writeln!(
                s,
                "{} {} {} {} {} {} {} {}",
                o.category, b.center.x, b.center.y, b.center.z, e.x, e.y, e.z, b.yaw
            )
            .unwrap();
        }
    }
    s
}

/// `category h w l x y z yaw` with the bottom-face center as location.
fn kitti_labels(obstacles: &[ObstacleRecord]) -> String {
    let mut s = String::new();
    for o in obstacles {
        if let Some(b) = &o.obb {
            let e = b.half_extents * 2.0;
            let bottom = b.center.z - b.half_extents.z;
            writeln!(
                s,
                "{} {} {} {} {} {} {} {}",
                o.category, e.z, e.y, e.x, b.center.x, b.center.y, bottom, b.yaw
            )
            .unwrap();
        }
    }
    s
}

/// One label line parsed back into a category and a box.
#[derive(Clone, Debug, PartialEq)]
pub struct LabelLine {
    pub category: String,
    pub obb: Obb,
}

/// Parses a `labels.txt` (native) or `label.txt` (kitti-like) file body.
pub fn parse_labels(text: &str, format: FrameFormat) -> Result<Vec<LabelLine>, String> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split_whitespace().collect();
        if f.len() != 8 {
            return Err(format!("line {}: expected 8 fields, got {}", i + 1, f.len()));
        }
        let v: Vec<f64> = f[1..]
            .iter()
            .map(|x| x.parse::<f64>().map_err(|e| format!("line {}: {e}", i + 1)))
            .collect::<Result<_, _>>()?;
        let obb = match format {
            FrameFormat::Native => Obb {
                center: Point3::new(v[0], v[1], v[2]),
                half_extents: Vec3::new(v[3], v[4], v[5]) / 2.0,
                yaw: v[6],
            },
            FrameFormat::KittiLike => Obb {
                center: Point3::new(v[3], v[4], v[5] + v[0] / 2.0),
                half_extents: Vec3::new(v[2], v[1], v[0]) / 2.0,
                yaw: v[6],
            },
        };
        out.push(LabelLine {
            category: f[0].to_string(),
            obb,
        });
    }
    Ok(out)
}

fn read(path: PathBuf) -> Result<Vec<u8>, AnnotationError> {
    fs::read(&path).map_err(io_err(&path))
}

/// Reads a bundle written by [`write_frame`]. Native bundles round-trip
/// exactly; kitti-like bundles restore positions, IDs and labels, with beam,
/// material and energy set to zero.
pub fn read_frame(dir: &Path) -> Result<AnnotatedFrame, AnnotationError> {
    let meta_path = dir.join(META);
    let text = fs::read_to_string(&meta_path).map_err(io_err(&meta_path))?;
    let m: MetaFile = serde_json::from_str(&text).map_err(|e| fmt_err(&meta_path, e.to_string()))?;
    if m.version != VERSION {
        return Err(fmt_err(&meta_path, format!("unsupported version {}", m.version)));
    }
    let points = match m.format {
        FrameFormat::Native => read_native_points(dir, m.point_count)?,
        FrameFormat::KittiLike => read_kitti_points(dir, m.point_count)?,
    };
    Ok(AnnotatedFrame {
        points,
        obstacles: m.obstacles,
        sensor_pose: m.sensor_pose,
        meta: m.meta,
    })
}

fn counted<'a>(path: &Path, bytes: &'a [u8], magic: &[u8; 8], record: usize, expect: usize) -> Result<LeReader<'a>, AnnotationError> {
    let version = crate::util::check_raster_header(bytes, magic).map_err(|e| fmt_err(path, e))?;
    if version != VERSION {
        return Err(fmt_err(path, format!("unsupported version {version}")));
    }
    let count = u32::from_le_bytes(bytes[12..16].try_into().unwrap()) as usize;
    if count != expect || bytes.len() != 16 + count * record {
        return Err(fmt_err(
            path,
            format!("{} bytes for {count} records (metadata says {expect})", bytes.len()),
        ));
    }
    Ok(LeReader::new(bytes, 16))
}

fn read_native_points(dir: &Path, n: usize) -> Result<Vec<SimulatedPoint>, AnnotationError> {
    let pp = dir.join(POINTS);
    let ep = dir.join(POINTS_EXT);
    let pb = read(pp.clone())?;
    let eb = read(ep.clone())?;
    let mut pr = counted(&pp, &pb, POINTS_MAGIC, 20, n)?;
    let mut er = counted(&ep, &eb, EXT_MAGIC, 12, n)?;
    let mut out = Vec::with_capacity(n);
    // Lengths were checked against the count, so reads cannot run short.
    for _ in 0..n {
        let (x, y, z) = (pr.f32().unwrap(), pr.f32().unwrap(), pr.f32().unwrap());
        let (instance, class) = (pr.u32().unwrap(), pr.u32().unwrap());
        let (beam, material, energy) = (er.u32().unwrap(), er.u32().unwrap(), er.f32().unwrap());
        out.push(SimulatedPoint {
            position: nalgebra::Point3::new(x, y, z),
            beam,
            instance,
            class,
            material,
            energy,
        });
    }
    Ok(out)
}

fn read_kitti_points(dir: &Path, n: usize) -> Result<Vec<SimulatedPoint>, AnnotationError> {
    let pp = dir.join(KITTI_POINTS);
    let lp = dir.join(KITTI_POINT_LABELS);
    let pb = read(pp.clone())?;
    let lb = read(lp.clone())?;
    if pb.len() != n * 16 || lb.len() != n * 4 {
        return Err(fmt_err(dir, format!("point files do not hold {n} records")));
    }
    Ok((0..n)
        .map(|i| {
            let f = |k: usize| f32::from_le_bytes(pb[i * 16 + k * 4..i * 16 + k * 4 + 4].try_into().unwrap());
            let id = u32::from_le_bytes(lb[i * 4..i * 4 + 4].try_into().unwrap());
            SimulatedPoint {
                position: nalgebra::Point3::new(f(0), f(1), f(2)),
                beam: 0,
                instance: id >> 16,
                class: id & 0xffff,
                material: 0,
                energy: 0.0,
            }
        })
        .collect())
}
