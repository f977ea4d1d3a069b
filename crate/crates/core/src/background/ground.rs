use thiserror::Error;

use crate::cloud::{ClassId, SemanticPointCloud};
use crate::util::{check_raster_header, raster_header, LeReader};

const MAGIC: &[u8; 8] = b"AUGSGRND";
const VERSION: u32 = 1;

/// Percentile of ground z used for each cell's height.
pub const GROUND_PERCENTILE: f64 = 5.0;

#[derive(Debug, Error, PartialEq)]
pub enum GroundError {
    #[error("cloud has no ground-labeled points")]
    NoGroundPoints,
    #[error("cell size must be positive, got {0}")]
    CellSize(f64),
    #[error("ground raster: {0}")]
    Raster(String),
}

/// Height field over the x-y extent of a cloud. Cells are aligned to
/// multiples of the cell size in the world frame, so cell `(i, j)` is
/// `[i·c, (i+1)·c) × [j·c, (j+1)·c)` in absolute indices.
#[derive(Clone, Debug, PartialEq)]
pub struct GroundModel {
    cell_size: f64,
    first: [i64; 2],
    nx: usize,
    ny: usize,
    heights: Vec<Option<f64>>,
}

impl GroundModel {
    /// Grid covering `[lo, hi]` with every cell invalid.
    pub fn empty(lo: [f64; 2], hi: [f64; 2], cell_size: f64) -> Result<Self, GroundError> {
        if !(cell_size > 0.0 && cell_size.is_finite()) {
            return Err(GroundError::CellSize(cell_size));
        }
        let first = [(lo[0] / cell_size).floor() as i64, (lo[1] / cell_size).floor() as i64];
        let last = [(hi[0] / cell_size).floor() as i64, (hi[1] / cell_size).floor() as i64];
        let nx = (last[0] - first[0] + 1) as usize;
        let ny = (last[1] - first[1] + 1) as usize;
        Ok(Self {
            cell_size,
            first,
            nx,
            ny,
            heights: vec![None; nx * ny],
        })
    }

    pub fn cell_size(&self) -> f64 {
        self.cell_size
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.nx, self.ny)
    }

    pub fn origin(&self) -> [f64; 2] {
        [self.first[0] as f64 * self.cell_size, self.first[1] as f64 * self.cell_size]
    }

    /// Absolute cell containing `(x, y)`.
    pub fn cell_of(&self, x: f64, y: f64) -> (i64, i64) {
        ((x / self.cell_size).floor() as i64, (y / self.cell_size).floor() as i64)
    }

    pub fn cell_center(&self, cell: (i64, i64)) -> [f64; 2] {
        [(cell.0 as f64 + 0.5) * self.cell_size, (cell.1 as f64 + 0.5) * self.cell_size]
    }

    fn local(&self, cell: (i64, i64)) -> Option<usize> {
        let i = cell.0 - self.first[0];
        let j = cell.1 - self.first[1];
        (i >= 0 && j >= 0 && (i as usize) < self.nx && (j as usize) < self.ny)
            .then(|| j as usize * self.nx + i as usize)
    }

    pub fn contains_cell(&self, cell: (i64, i64)) -> bool {
        self.local(cell).is_some()
    }

    pub fn cell_height(&self, cell: (i64, i64)) -> Option<f64> {
        self.local(cell).and_then(|k| self.heights[k])
    }

    pub fn set_cell_height(&mut self, cell: (i64, i64), h: Option<f64>) {
        if let Some(k) = self.local(cell) {
            self.heights[k] = h;
        }
    }

    pub fn cells(&self) -> impl Iterator<Item = (i64, i64)> + '_ {
        (0..self.ny).flat_map(move |j| (0..self.nx).map(move |i| (self.first[0] + i as i64, self.first[1] + j as i64)))
    }

    pub fn valid_count(&self) -> usize {
        self.heights.iter().filter(|h| h.is_some()).count()
    }

    /// Bilinear interpolation between the four surrounding cell centers,
    /// renormalized over the valid ones. `None` outside the grid or when no
    /// valid neighbor carries weight.
    pub fn height_at(&self, x: f64, y: f64) -> Option<f64> {
        if !self.contains_cell(self.cell_of(x, y)) {
            return None;
        }
        let fx = x / self.cell_size - 0.5;
        let fy = y / self.cell_size - 0.5;
        let (i0, j0) = (fx.floor() as i64, fy.floor() as i64);
        let (tx, ty) = (fx - i0 as f64, fy - j0 as f64);
        let mut acc = 0.0;
        let mut wsum = 0.0;
        for (di, dj, w) in [
            (0, 0, (1.0 - tx) * (1.0 - ty)),
            (1, 0, tx * (1.0 - ty)),
            (0, 1, (1.0 - tx) * ty),
            (1, 1, tx * ty),
        ] {
            if w <= 0.0 {
                continue;
            }
            if let Some(h) = self.cell_height((i0 + di, j0 + dj)) {
                acc += w * h;
                wsum += w;
            }
        }
        (wsum > 1e-12).then(|| acc / wsum)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = raster_header(MAGIC, VERSION).to_vec();
        out.extend_from_slice(&self.cell_size.to_le_bytes());
        let o = self.origin();
        out.extend_from_slice(&o[0].to_le_bytes());
        out.extend_from_slice(&o[1].to_le_bytes());
        out.extend_from_slice(&(self.nx as u32).to_le_bytes());
        out.extend_from_slice(&(self.ny as u32).to_le_bytes());
        for h in &self.heights {
            out.push(h.is_some() as u8);
            out.extend_from_slice(&h.unwrap_or(0.0).to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, GroundError> {
        let version = check_raster_header(bytes, MAGIC).map_err(GroundError::Raster)?;
        if version != VERSION {
            return Err(GroundError::Raster(format!("unsupported version {version}")));
        }
        let mut r = LeReader::new(bytes, 16);
        let parse = |r: &mut LeReader| -> Result<GroundModel, String> {
            let cell_size = r.f64()?;
            if !(cell_size > 0.0) {
                return Err(format!("cell size {cell_size}"));
            }
            let ox = r.f64()?;
            let oy = r.f64()?;
            let nx = r.u32()? as usize;
            let ny = r.u32()? as usize;
            let mut heights = Vec::with_capacity(nx * ny);
            for _ in 0..nx * ny {
                let valid = r.u8()? != 0;
                let h = r.f64()?;
                heights.push(valid.then_some(h));
            }
            if !r.finished() {
                return Err(format!("trailing bytes after offset {}", r.pos));
            }
            Ok(GroundModel {
                cell_size,
                first: [(ox / cell_size).round() as i64, (oy / cell_size).round() as i64],
                nx,
                ny,
                heights,
            })
        };
        parse(&mut r).map_err(GroundError::Raster)
    }
}

/// Per-cell ground height: the 5th percentile of the z values of ground
/// points in the cell. The grid spans the whole cloud's x-y rectangle.
pub fn build_ground_model(cloud: &SemanticPointCloud, cell_size: f64) -> Result<GroundModel, GroundError> {
    if !(cell_size > 0.0 && cell_size.is_finite()) {
        return Err(GroundError::CellSize(cell_size));
    }
    let (lo, hi) = cloud.xy_bounds().ok_or(GroundError::NoGroundPoints)?;
    let mut model = GroundModel::empty(lo, hi, cell_size)?;
    let mut per_cell: Vec<Vec<f64>> = vec![Vec::new(); model.nx * model.ny];
    let mut any = false;
    for (p, l) in cloud.points.iter().zip(&cloud.labels) {
        if *l == ClassId::GROUND {
            let k = model.local(model.cell_of(p.x, p.y)).expect("point inside its own bounds");
            per_cell[k].push(p.z);
            any = true;
        }
    }
    if !any {
        return Err(GroundError::NoGroundPoints);
    }
    for (k, zs) in per_cell.iter_mut().enumerate() {
        if !zs.is_empty() {
            model.heights[k] = Some(percentile(zs, GROUND_PERCENTILE));
        }
    }
    Ok(model)
}

/// Linear-interpolated percentile (same convention as numpy's default).
pub fn percentile(values: &mut [f64], pct: f64) -> f64 {
    values.sort_by(|a, b| a.total_cmp(b));
    let pos = (pct / 100.0) * (values.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    values[lo] + (values[hi] - values[lo]) * (pos - lo as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::Point3;

    fn plane_cloud(f: impl Fn(f64, f64) -> f64, extent: f64, step: f64) -> SemanticPointCloud {
        let mut c = SemanticPointCloud::default();
        let n = (extent / step) as i64;
        for i in -n..=n {
            for j in -n..=n {
                let (x, y) = (i as f64 * step + 0.013, j as f64 * step - 0.007);
                c.push(Point3::new(x, y, f(x, y)), ClassId::GROUND);
            }
        }
        c
    }

    #[test]
    fn flat_plane_heights() {
        let c = plane_cloud(|_, _| 0.0, 5.0, 0.05);
        let g = build_ground_model(&c, 0.5).unwrap();
        assert!(g.valid_count() > 0);
        for cell in g.cells().collect::<Vec<_>>() {
            if let Some(h) = g.cell_height(cell) {
                assert!(h.abs() <= 1e-6);
            }
        }
    }

    #[test]
    fn sloped_plane_within_one_cell_of_slope() {
        let slope = 0.1;
        let cell = 0.5;
        let c = plane_cloud(|x, _| slope * x, 6.0, 0.04);
        let g = build_ground_model(&c, cell).unwrap();
        // Every valid cell: height within the cell's x-span times the slope.
        for c in g.cells().collect::<Vec<_>>() {
            if let Some(h) = g.cell_height(c) {
                let cx = g.cell_center(c)[0];
                assert!((h - slope * cx).abs() <= cell * slope + 1e-6, "cell {c:?}");
            }
        }
        // Interpolated heights inside the sampled area.
        for k in 0..200 {
            let x = -5.0 + 10.0 * (k as f64 / 199.0);
            let y = 2.5 - 0.02 * k as f64;
            let h = g.height_at(x, y).unwrap();
            assert!((h - slope * x).abs() <= cell * slope + 1e-6);
        }
    }

    #[test]
    fn no_ground_labels() {
        let mut c = SemanticPointCloud::default();
        c.push(Point3::new(0.0, 0.0, 1.0), ClassId::BUILDING);
        assert_eq!(build_ground_model(&c, 0.5).unwrap_err(), GroundError::NoGroundPoints);
        assert_eq!(build_ground_model(&c, 0.0).unwrap_err(), GroundError::CellSize(0.0));
    }

    #[test]
    fn bilinear_queries() {
        let mut g = GroundModel::empty([0.0, 0.0], [1.9, 0.9], 1.0).unwrap();
        g.set_cell_height((0, 0), Some(0.0));
        g.set_cell_height((1, 0), Some(1.0));
        assert_eq!(g.height_at(0.5, 0.5), Some(0.0));
        assert_eq!(g.height_at(1.5, 0.5), Some(1.0));
        assert!((g.height_at(1.0, 0.5).unwrap() - 0.5).abs() < 1e-12);
        assert_eq!(g.height_at(-0.1, 0.5), None);
        assert_eq!(g.height_at(2.5, 0.5), None);
    }

    #[test]
    fn raster_roundtrip() {
        let mut g = GroundModel::empty([-3.2, 1.1], [4.0, 2.0], 0.5).unwrap();
        g.set_cell_height((-6, 2), Some(0.25));
        g.set_cell_height((7, 3), Some(-1.5));
        let bytes = g.to_bytes();
        assert_eq!(&bytes[..8], b"AUGSGRND");
        assert_eq!(GroundModel::from_bytes(&bytes).unwrap(), g);
        assert!(GroundModel::from_bytes(&bytes[..bytes.len() - 1]).is_err());
    }
}
