//! Turning a labeled scan into an obstacle-free environment.
//!
//! Movable-obstacle points are removed, the ground under them is rebuilt as a
//! height field, and the resulting holes are filled with resampled ground
//! points. Only ground holes are filled; gaps in walls behind removed
//! obstacles stay open and are counted in [`SceneStats`].

mod ground;

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use ground::{build_ground_model, percentile, GroundError, GroundModel, GROUND_PERCENTILE};

use crate::cloud::{ClassId, SemanticPointCloud};
use crate::geom::Point3;
use crate::index::SpatialGridIndex;
use crate::io::{self, CloudFormat, Encoding, FormatError};
use crate::util::write_atomic;

/// Grid cells (absolute indices at `cell_size`) that lost points to obstacle
/// removal.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct HoleFootprints {
    pub cell_size: f64,
    pub cells: BTreeSet<(i64, i64)>,
}

impl HoleFootprints {
    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    /// 8-connected groups of hole cells.
    pub fn components(&self) -> Vec<Vec<(i64, i64)>> {
        let mut seen = BTreeSet::new();
        let mut out = Vec::new();
        for &start in &self.cells {
            if !seen.insert(start) {
                continue;
            }
            let mut comp = vec![start];
            let mut queue = VecDeque::from([start]);
            while let Some((i, j)) = queue.pop_front() {
                for (di, dj) in NEIGHBORS8 {
                    let n = (i + di, j + dj);
                    if self.cells.contains(&n) && seen.insert(n) {
                        comp.push(n);
                        queue.push_back(n);
                    }
                }
            }
            comp.sort();
            out.push(comp);
        }
        out
    }
}

const NEIGHBORS8: [(i64, i64); 8] = [(-1, -1), (0, -1), (1, -1), (-1, 0), (1, 0), (-1, 1), (0, 1), (1, 1)];

/// Drops every point whose label is in `movable`. The footprint cells of the
/// dropped points (their ground shadow) are returned as holes.
pub fn remove_movable(
    cloud: &SemanticPointCloud,
    movable: &[ClassId],
    cell_size: f64,
) -> (SemanticPointCloud, HoleFootprints) {
    let is_movable = |l: &ClassId| movable.contains(l);
    let mut holes = HoleFootprints {
        cell_size,
        cells: BTreeSet::new(),
    };
    for (p, l) in cloud.points.iter().zip(&cloud.labels) {
        if is_movable(l) {
            holes
                .cells
                .insert(((p.x / cell_size).floor() as i64, (p.y / cell_size).floor() as i64));
        }
    }
    let cleaned = cloud.filter(|i| !is_movable(&cloud.labels[i]));
    (cleaned, holes)
}

#[derive(Debug, Error, PartialEq)]
pub enum FillIssue {
    #[error("hole of {cells} cells around ({x:.2}, {y:.2}) has no valid neighboring ground; left open")]
    HoleUnfillable { cells: usize, x: f64, y: f64 },
}

#[derive(Debug)]
pub struct FillReport {
    pub cloud: SemanticPointCloud,
    pub added: usize,
    pub filled_cells: usize,
    pub issues: Vec<FillIssue>,
}

/// Fills hole cells with ground points on a regular lattice of roughly
/// `target_spacing`. Heights come from the ground model, with invalid hole
/// cells first completed by a least-squares plane through the valid cells
/// bordering the hole. Lattice points that already have a ground point within
/// half of `target_spacing` are skipped. Existing points are never moved or relabeled.
pub fn fill_holes(
    cloud: &SemanticPointCloud,
    ground: &GroundModel,
    holes: &HoleFootprints,
    target_spacing: f64,
) -> FillReport {
    let mut out = cloud.clone();
    let mut report_issues = Vec::new();
    if holes.is_empty() {
        return FillReport {
            cloud: out,
            added: 0,
            filled_cells: 0,
            issues: report_issues,
        };
    }
    assert!(target_spacing > 0.0, "target spacing must be positive");
    let c = ground.cell_size();
    // Holes are expressed on the ground grid; re-bin if sizes differ.
    let hole_cells: BTreeSet<(i64, i64)> = if (holes.cell_size - c).abs() < 1e-12 {
        holes.cells.clone()
    } else {
        rebin(holes, c)
    };
    let holes = HoleFootprints {
        cell_size: c,
        cells: hole_cells,
    };

    let ground_pts: Vec<Point3> = cloud
        .points
        .iter()
        .zip(&cloud.labels)
        .filter(|(_, l)| **l == ClassId::GROUND)
        .map(|(p, _)| *p)
        .collect();
    let existing = SpatialGridIndex::build(&ground_pts, target_spacing.max(1e-3)).expect("positive cell");

    let mut completed = ground.clone();
    let mut fillable = Vec::new();
    for comp in holes.components() {
        let members: BTreeSet<_> = comp.iter().copied().collect();
        let mut support: Vec<([f64; 2], f64)> = Vec::new();
        let mut ring = BTreeSet::new();
        for &cell in &comp {
            if let Some(h) = ground.cell_height(cell) {
                support.push((ground.cell_center(cell), h));
            }
            for (di, dj) in NEIGHBORS8 {
                let n = (cell.0 + di, cell.1 + dj);
                if !members.contains(&n) {
                    ring.insert(n);
                }
            }
        }
        let ring_valid: Vec<_> = ring
            .iter()
            .filter_map(|&n| ground.cell_height(n).map(|h| (ground.cell_center(n), h)))
            .collect();
        if ring_valid.is_empty() {
            let ctr = ground.cell_center(comp[comp.len() / 2]);
            report_issues.push(FillIssue::HoleUnfillable {
                cells: comp.len(),
                x: ctr[0],
                y: ctr[1],
            });
            continue;
        }
        support.extend(ring_valid);
        let plane = fit_height_plane(&support);
        for &cell in &comp {
            if completed.contains_cell(cell) && completed.cell_height(cell).is_none() {
                let [x, y] = ground.cell_center(cell);
                completed.set_cell_height(cell, Some(plane(x, y)));
            }
        }
        fillable.extend(comp);
    }

    let per_side = ((c / target_spacing).round() as usize).max(1);
    let step = c / per_side as f64;
    let mut added = 0;
    for &cell in &fillable {
        let x0 = cell.0 as f64 * c;
        let y0 = cell.1 as f64 * c;
        for a in 0..per_side {
            for b in 0..per_side {
                let x = x0 + (a as f64 + 0.5) * step;
                let y = y0 + (b as f64 + 0.5) * step;
                let Some(z) = completed.height_at(x, y) else { continue };
                let p = Point3::new(x, y, z);
                if existing.any_within(&p, 0.5 * target_spacing) {
                    continue;
                }
                out.push(p, ClassId::GROUND);
                added += 1;
            }
        }
    }
    FillReport {
        cloud: out,
        added,
        filled_cells: fillable.len(),
        issues: report_issues,
    }
}

fn rebin(holes: &HoleFootprints, c: f64) -> BTreeSet<(i64, i64)> {
    let mut out = BTreeSet::new();
    for &(i, j) in &holes.cells {
        let (x0, y0) = (i as f64 * holes.cell_size, j as f64 * holes.cell_size);
        let (x1, y1) = (x0 + holes.cell_size, y0 + holes.cell_size);
        for a in (x0 / c).floor() as i64..=((x1 / c).ceil() as i64 - 1) {
            for b in (y0 / c).floor() as i64..=((y1 / c).ceil() as i64 - 1) {
                out.insert((a, b));
            }
        }
    }
    out
}

/// Least-squares `z = a + b·x + c·y`; falls back to the mean height when the
/// support is (nearly) collinear.
fn fit_height_plane(support: &[([f64; 2], f64)]) -> impl Fn(f64, f64) -> f64 {
    let n = support.len() as f64;
    let mean_z = support.iter().map(|s| s.1).sum::<f64>() / n;
    let mx = support.iter().map(|s| s.0[0]).sum::<f64>() / n;
    let my = support.iter().map(|s| s.0[1]).sum::<f64>() / n;
    let (mut sxx, mut sxy, mut syy, mut sxz, mut syz) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for ([x, y], z) in support {
        let (dx, dy, dz) = (x - mx, y - my, z - mean_z);
        sxx += dx * dx;
        sxy += dx * dy;
        syy += dy * dy;
        sxz += dx * dz;
        syz += dy * dz;
    }
    let det = sxx * syy - sxy * sxy;
    let (b, c) = if support.len() >= 3 && det > 1e-9 * (sxx + syy).powi(2).max(1e-300) {
        ((sxz * syy - syz * sxy) / det, (syz * sxx - sxz * sxy) / det)
    } else {
        (0.0, 0.0)
    };
    move |x, y| mean_z + b * (x - mx) + c * (y - my)
}

/// Cleaning parameters.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CleanParams {
    /// Ground height-field cell size in meters.
    pub ground_cell: f64,
    /// Spacing of synthetic ground points in filled holes, meters.
    pub fill_spacing: f64,
    /// Cell size of the neighbor index kept with the scene.
    pub index_cell: f64,
}

impl Default for CleanParams {
    fn default() -> Self {
        Self {
            ground_cell: 0.5,
            fill_spacing: 0.03,
            index_cell: 0.5,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SceneStats {
    pub input_points: usize,
    /// Removed point count per movable class name.
    pub removed: BTreeMap<String, usize>,
    pub hole_cells: usize,
    pub filled_cells: usize,
    pub fill_points: usize,
    pub unfillable_holes: usize,
    /// Hole cells that also hold building points: likely wall gaps behind
    /// removed obstacles, which are not filled.
    pub open_wall_cells: usize,
    pub output_points: usize,
    pub valid_ground_cells: usize,
}

/// Cleaned scene: no movable points, a ground height field and an index.
#[derive(Clone, Debug)]
pub struct BackgroundScene {
    pub cloud: SemanticPointCloud,
    pub ground: GroundModel,
    pub index: SpatialGridIndex,
}

#[derive(Debug, Error)]
pub enum BackgroundError {
    #[error("background cloud carries no labels; semantic labels are required")]
    Unlabeled,
    #[error(transparent)]
    Ground(#[from] GroundError),
    #[error(transparent)]
    Format(#[from] FormatError),
    #[error("{path}: {source}")]
    Io {
        path: std::path::PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub fn clean_background(
    raw: &SemanticPointCloud,
    params: &CleanParams,
) -> Result<(BackgroundScene, SceneStats), BackgroundError> {
    let movable = raw.classes.movable();
    let (cleaned, holes) = remove_movable(raw, &movable, params.ground_cell);
    let mut stats = SceneStats {
        input_points: raw.len(),
        hole_cells: holes.cells.len(),
        ..Default::default()
    };
    for (class, n) in raw.count_by_class() {
        if movable.contains(&class) {
            let name = raw.classes.name(class).unwrap_or("?").to_string();
            stats.removed.insert(name, n);
        }
    }
    let building_cells: BTreeSet<(i64, i64)> = cleaned
        .points
        .iter()
        .zip(&cleaned.labels)
        .filter(|(_, l)| **l == ClassId::BUILDING)
        .map(|(p, _)| ((p.x / params.ground_cell).floor() as i64, (p.y / params.ground_cell).floor() as i64))
        .collect();
    stats.open_wall_cells = holes.cells.intersection(&building_cells).count();

    let ground0 = build_ground_model(&cleaned, params.ground_cell)?;
    let fill = fill_holes(&cleaned, &ground0, &holes, params.fill_spacing);
    for issue in &fill.issues {
        log::warn!("{issue}");
    }
    stats.filled_cells = fill.filled_cells;
    stats.fill_points = fill.added;
    stats.unfillable_holes = fill.issues.len();
    let cloud = fill.cloud;
    let ground = build_ground_model(&cloud, params.ground_cell)?;
    stats.valid_ground_cells = ground.valid_count();
    stats.output_points = cloud.len();
    let index = SpatialGridIndex::build(&cloud.points, params.index_cell).map_err(|_| GroundError::CellSize(params.index_cell))?;
    Ok((BackgroundScene { cloud, ground, index }, stats))
}

pub const BUNDLE_CLOUD: &str = "cloud.ply";
pub const BUNDLE_GROUND: &str = "ground.grid";
pub const BUNDLE_STATS: &str = "stats.json";

impl BackgroundScene {
    /// Writes `cloud.ply` (binary), `ground.grid` and `stats.json`.
    pub fn save(&self, dir: &Path, stats: &SceneStats) -> Result<(), BackgroundError> {
        let io_err = |path: &Path| {
            let path = path.to_path_buf();
            move |source| BackgroundError::Io { path, source }
        };
        fs::create_dir_all(dir).map_err(io_err(dir))?;
        io::write_point_cloud(&self.cloud, &dir.join(BUNDLE_CLOUD), CloudFormat::Ply, Encoding::Binary)?;
        let gp = dir.join(BUNDLE_GROUND);
        write_atomic(&gp, &self.ground.to_bytes()).map_err(io_err(&gp))?;
        let sp = dir.join(BUNDLE_STATS);
        let json = serde_json::to_string_pretty(stats).expect("stats serialize");
        write_atomic(&sp, json.as_bytes()).map_err(io_err(&sp))?;
        Ok(())
    }

    pub fn load(dir: &Path, index_cell: f64) -> Result<Self, BackgroundError> {
        let cloud = io::read_point_cloud(&dir.join(BUNDLE_CLOUD), Some(CloudFormat::Ply))?;
        let gp = dir.join(BUNDLE_GROUND);
        let bytes = fs::read(&gp).map_err(|source| BackgroundError::Io { path: gp, source })?;
        let ground = GroundModel::from_bytes(&bytes)?;
        let index =
            SpatialGridIndex::build(&cloud.points, index_cell).map_err(|_| GroundError::CellSize(index_cell))?;
        Ok(Self { cloud, ground, index })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid_points(x0: f64, x1: f64, y0: f64, y1: f64, step: f64) -> Vec<Point3> {
        let mut v = Vec::new();
        let mut x = x0 + step / 2.0;
        while x < x1 {
            let mut y = y0 + step / 2.0;
            while y < y1 {
                v.push(Point3::new(x, y, 0.0));
                y += step;
            }
            x += step;
        }
        v
    }

    #[test]
    fn nothing_movable_nothing_changes() {
        let mut c = SemanticPointCloud::default();
        for p in grid_points(0.0, 2.0, 0.0, 2.0, 0.1) {
            c.push(p, ClassId::GROUND);
        }
        let (cleaned, holes) = remove_movable(&c, &c.classes.movable(), 0.5);
        assert_eq!(cleaned, c);
        assert!(holes.is_empty());
    }

    #[test]
    fn label_filter_counts() {
        let mut c = SemanticPointCloud::default();
        for i in 0..100 {
            c.push(Point3::new(i as f64 * 0.1, 0.0, 0.0), ClassId::GROUND);
        }
        for i in 0..20 {
            c.push(Point3::new(i as f64 * 0.1, 0.5, 1.0), ClassId::CAR);
        }
        let (cleaned, _) = remove_movable(&c, &c.classes.movable(), 0.5);
        assert_eq!(cleaned.len(), 100);
        assert!(cleaned.labels.iter().all(|l| *l == ClassId::GROUND));
        let (twice, holes2) = remove_movable(&cleaned, &c.classes.movable(), 0.5);
        assert_eq!(twice, cleaned);
        assert!(holes2.is_empty());
    }

    /// Car box over [2, 4.5] × [1, 2.75] on 0.5 m cells: shadow spans cells
    /// x ∈ 4..=8, y ∈ 2..=5.
    #[test]
    fn hole_footprint_is_car_shadow() {
        let mut c = SemanticPointCloud::default();
        for p in grid_points(0.0, 8.0, 0.0, 6.0, 0.1) {
            let inside = p.x > 2.0 && p.x < 4.5 && p.y > 1.0 && p.y < 2.75;
            if !inside {
                c.push(p, ClassId::GROUND);
            }
        }
        for p in grid_points(2.0, 4.5, 1.0, 2.75, 0.1) {
            c.push(Point3::new(p.x, p.y, 0.3), ClassId::CAR);
            c.push(Point3::new(p.x, p.y, 1.4), ClassId::CAR);
        }
        let (_, holes) = remove_movable(&c, &[ClassId::CAR], 0.5);
        let expected: BTreeSet<_> = (4..=8).flat_map(|i| (2..=5).map(move |j| (i, j))).collect();
        assert_eq!(holes.cells, expected);
        assert_eq!(holes.components().len(), 1);
    }

    #[test]
    fn fills_square_meter_hole_on_plane() {
        let mut c = SemanticPointCloud::default();
        for p in grid_points(0.0, 4.0, 0.0, 4.0, 0.05) {
            if !(p.x > 1.5 && p.x < 2.5 && p.y > 1.5 && p.y < 2.5) {
                c.push(p, ClassId::GROUND);
            }
        }
        let g = build_ground_model(&c, 0.5).unwrap();
        let holes = HoleFootprints {
            cell_size: 0.5,
            cells: [(3, 3), (3, 4), (4, 3), (4, 4)].into_iter().collect(),
        };
        let r = fill_holes(&c, &g, &holes, 0.1);
        assert!(r.issues.is_empty());
        assert_eq!(r.added, 100);
        assert_eq!(&r.cloud.points[..c.len()], &c.points[..]);
        assert_eq!(&r.cloud.labels[..c.len()], &c.labels[..]);
        for p in &r.cloud.points[c.len()..] {
            assert!(p.z.abs() <= 1e-6);
            assert!(p.x > 1.5 && p.x < 2.5 && p.y > 1.5 && p.y < 2.5);
        }
        assert!(r.cloud.labels[c.len()..].iter().all(|l| *l == ClassId::GROUND));
    }

    #[test]
    fn fill_follows_slope() {
        let mut c = SemanticPointCloud::default();
        for p in grid_points(0.0, 6.0, 0.0, 6.0, 0.05) {
            if !(p.x > 2.0 && p.x < 4.0 && p.y > 2.0 && p.y < 4.0) {
                c.push(Point3::new(p.x, p.y, 0.2 * p.x - 0.1 * p.y), ClassId::GROUND);
            }
        }
        let g = build_ground_model(&c, 0.5).unwrap();
        let holes = HoleFootprints {
            cell_size: 0.5,
            cells: (4..8).flat_map(|i| (4..8).map(move |j| (i, j))).collect(),
        };
        let r = fill_holes(&c, &g, &holes, 0.1);
        assert!(r.added > 300);
        for p in &r.cloud.points[c.len()..] {
            // Percentile bias is at most one cell's rise.
            assert!((p.z - (0.2 * p.x - 0.1 * p.y)).abs() <= 0.5 * 0.3 + 1e-6);
        }
    }

    #[test]
    fn unfillable_hole_reported() {
        let mut c = SemanticPointCloud::default();
        for p in grid_points(0.0, 1.0, 0.0, 1.0, 0.1) {
            c.push(p, ClassId::GROUND);
        }
        c.push(Point3::new(10.0, 10.0, 5.0), ClassId::BUILDING);
        let g = build_ground_model(&c, 0.5).unwrap();
        let holes = HoleFootprints {
            cell_size: 0.5,
            cells: [(10, 10), (10, 11)].into_iter().collect(),
        };
        let r = fill_holes(&c, &g, &holes, 0.1);
        assert_eq!(r.added, 0);
        assert_eq!(r.cloud.len(), c.len());
        assert!(matches!(r.issues[..], [FillIssue::HoleUnfillable { cells: 2, .. }]));
    }

    #[test]
    fn clean_and_bundle_roundtrip() {
        let mut c = SemanticPointCloud::default();
        for p in grid_points(-5.0, 5.0, -5.0, 5.0, 0.1) {
            if !(p.x > -1.0 && p.x < 1.0 && p.y > -0.5 && p.y < 0.5) {
                c.push(p, ClassId::GROUND);
            }
        }
        for p in grid_points(-1.0, 1.0, -0.5, 0.5, 0.1) {
            c.push(Point3::new(p.x, p.y, 1.2), ClassId::CAR);
        }
        c.push(Point3::new(0.3, 0.0, 1.0), ClassId::PEDESTRIAN);
        let params = CleanParams {
            fill_spacing: 0.1,
            ..Default::default()
        };
        let (scene, stats) = clean_background(&c, &params).unwrap();
        assert_eq!(stats.removed["car"], 200);
        assert_eq!(stats.removed["pedestrian"], 1);
        assert!(scene.cloud.labels.iter().all(|l| !c.classes.movable().contains(l)));
        assert!(stats.fill_points > 150);
        let h = scene.ground.height_at(0.0, 0.0).unwrap();
        assert!(h.abs() < 1e-6);

        let dir = tempfile::tempdir().unwrap();
        scene.save(dir.path(), &stats).unwrap();
        let back = BackgroundScene::load(dir.path(), 0.5).unwrap();
        assert_eq!(back.ground, scene.ground);
        assert_eq!(back.cloud.len(), scene.cloud.len());

        // Cleaning an already clean scene is a no-op on the point set.
        let (again, stats2) = clean_background(&back.cloud, &params).unwrap();
        assert_eq!(again.cloud.len(), back.cloud.len());
        assert_eq!(stats2.fill_points, 0);
    }
}
