use std::f64::consts::PI;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;
use rand_distr::Normal;

use super::PlacementError;
use crate::background::GroundModel;
use crate::geom::{normalize_angle, RigidPose, Vec3, YawPose};
use crate::util::{check_raster_header, raster_header, LeReader};

const MAGIC: &[u8; 8] = b"AUGSPMAP";
const VERSION: u32 = 1;

/// One annotated obstacle: category name and pose.
#[derive(Clone, Debug, PartialEq)]
pub struct Annotation {
    pub category: String,
    pub pose: YawPose,
}

/// Parses `category x y z yaw` records, one per line. `#` starts a comment;
/// yaw is in radians.
pub fn parse_annotations(text: &str) -> Result<Vec<Annotation>, PlacementError> {
    let mut out = Vec::new();
    for (ln, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let bad = |msg: String| PlacementError::AnnotationSyntax { line: ln + 1, msg };
        let tok: Vec<&str> = line.split_whitespace().collect();
        if tok.len() != 5 {
            return Err(bad(format!("expected 5 fields, found {}", tok.len())));
        }
        let mut v = [0.0f64; 4];
        for (k, t) in tok[1..].iter().enumerate() {
            v[k] = t.parse().map_err(|_| bad(format!("`{t}` is not a number")))?;
            if !v[k].is_finite() {
                return Err(bad(format!("`{t}` is not finite")));
            }
        }
        out.push(Annotation {
            category: tok[0].to_ascii_lowercase(),
            pose: YawPose {
                x: v[0],
                y: v[1],
                z: v[2],
                yaw: normalize_angle(v[3]),
            },
        });
    }
    Ok(out)
}

/// Square `(2k+1)²` Gaussian kernel with `T(0,0) = 1`. Stored through its
/// edge factor `w = exp(-1/(2σ²))`, so `T(m,n) = w^(m²+n²)`.
#[derive(Clone, Debug, PartialEq)]
pub struct GaussianTemplate {
    k: usize,
    weights: Vec<f64>,
}

impl GaussianTemplate {
    pub fn from_sigma(k: usize, sigma: f64) -> Result<Self, PlacementError> {
        if !(sigma > 0.0 && sigma.is_finite()) {
            return Err(PlacementError::Template(format!("sigma must be positive, got {sigma}")));
        }
        Self::from_edge_weight(k, (-1.0 / (2.0 * sigma * sigma)).exp())
    }

    /// Template whose 4-neighbors carry weight `w` (diagonals `w²`, ...).
    pub fn from_edge_weight(k: usize, w: f64) -> Result<Self, PlacementError> {
        if !(w > 0.0 && w <= 1.0) {
            return Err(PlacementError::Template(format!("edge weight must be in (0, 1], got {w}")));
        }
        let side = 2 * k + 1;
        let mut weights = Vec::with_capacity(side * side);
        for m in -(k as i64)..=k as i64 {
            for n in -(k as i64)..=k as i64 {
                weights.push(w.powi((m * m + n * n) as i32));
            }
        }
        Ok(Self { k, weights })
    }

    pub fn half_width(&self) -> usize {
        self.k
    }

    pub fn at(&self, m: i64, n: i64) -> f64 {
        let k = self.k as i64;
        self.weights[((m + k) * (2 * k + 1) + n + k) as usize]
    }
}

impl Default for GaussianTemplate {
    /// k = 2, σ = 1 cell.
    fn default() -> Self {
        Self::from_sigma(2, 1.0).expect("valid default")
    }
}

/// Axis-aligned rectangle of the ground plane.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AreaBounds {
    pub min: [f64; 2],
    pub max: [f64; 2],
}

impl AreaBounds {
    /// Smallest rectangle around the annotations, grown by `margin`.
    pub fn around(annotations: &[Annotation], margin: f64) -> Option<Self> {
        let first = annotations.first()?;
        let mut b = AreaBounds {
            min: [first.pose.x, first.pose.y],
            max: [first.pose.x, first.pose.y],
        };
        for a in annotations {
            b.min = [b.min[0].min(a.pose.x), b.min[1].min(a.pose.y)];
            b.max = [b.max[0].max(a.pose.x), b.max[1].max(a.pose.y)];
        }
        b.min = [b.min[0] - margin, b.min[1] - margin];
        b.max = [b.max[0] + margin, b.max[1] + margin];
        Some(b)
    }
}

/// Placement weights `W` and heading accumulators over an `M × N` grid for
/// one category. Cell `(i, j)` covers
/// `[ox + i·c, ox + (i+1)·c) × [oy + j·c, oy + (j+1)·c)`; `i` runs along x.
#[derive(Clone, Debug, PartialEq)]
pub struct ProbabilityMap {
    pub category: String,
    pub origin: [f64; 2],
    pub cell_size: f64,
    pub m: usize,
    pub n: usize,
    /// Row-major in `i`: `weights[i * n + j]`.
    pub weights: Vec<f64>,
    /// Template-weighted sums of `(cos yaw, sin yaw)`.
    pub directions: Vec<[f64; 2]>,
}

impl ProbabilityMap {
    pub fn zeros(category: &str, bounds: &AreaBounds, cell_size: f64) -> Result<Self, PlacementError> {
        if !(cell_size > 0.0 && cell_size.is_finite()) {
            return Err(PlacementError::Template(format!("cell size must be positive, got {cell_size}")));
        }
        let span = |a: usize| ((bounds.max[a] - bounds.min[a]) / cell_size).ceil().max(1.0) as usize;
        let (m, n) = (span(0), span(1));
        Ok(Self {
            category: category.to_string(),
            origin: bounds.min,
            cell_size,
            m,
            n,
            weights: vec![0.0; m * n],
            directions: vec![[0.0; 2]; m * n],
        })
    }

    pub fn weight(&self, i: usize, j: usize) -> f64 {
        self.weights[i * self.n + j]
    }

    /// Cell holding `(x, y)`; points on the far edge belong to the last cell.
    pub fn cell_of(&self, x: f64, y: f64) -> Option<(usize, usize)> {
        let fi = ((x - self.origin[0]) / self.cell_size).floor();
        let fj = ((y - self.origin[1]) / self.cell_size).floor();
        let clamp = |f: f64, len: usize| {
            if f == len as f64 {
                Some(len - 1)
            } else if f >= 0.0 && f < len as f64 {
                Some(f as usize)
            } else {
                None
            }
        };
        Some((clamp(fi, self.m)?, clamp(fj, self.n)?))
    }

    pub fn cell_center(&self, i: usize, j: usize) -> [f64; 2] {
        [
            self.origin[0] + (i as f64 + 0.5) * self.cell_size,
            self.origin[1] + (j as f64 + 0.5) * self.cell_size,
        ]
    }

    /// Heading of cell `(i, j)`; `None` where no direction was accumulated or
    /// opposing headings cancel.
    pub fn direction(&self, i: usize, j: usize) -> Option<f64> {
        let [c, s] = self.directions[i * self.n + j];
        (c.hypot(s) > 1e-12).then(|| s.atan2(c))
    }

    pub fn total_weight(&self) -> f64 {
        self.weights.iter().sum()
    }

    /// Adds one obstacle: the template centered on its cell (clipped at the
    /// edges) goes into `W`, and the same weights scale its heading vector.
    pub fn add(&mut self, x: f64, y: f64, yaw: f64, template: &GaussianTemplate) -> bool {
        let Some((ci, cj)) = self.cell_of(x, y) else {
            return false;
        };
        let k = template.half_width() as i64;
        let (s, c) = yaw.sin_cos();
        for m in -k..=k {
            for n in -k..=k {
                let (i, j) = (ci as i64 + m, cj as i64 + n);
                if i < 0 || j < 0 || i as usize >= self.m || j as usize >= self.n {
                    continue;
                }
                let t = template.at(m, n);
                let idx = i as usize * self.n + j as usize;
                self.weights[idx] += t;
                self.directions[idx][0] += t * c;
                self.directions[idx][1] += t * s;
            }
        }
        true
    }

    /// Elementwise sum with a map on the same grid.
    pub fn merged(&self, other: &ProbabilityMap) -> Option<ProbabilityMap> {
        if (self.origin, self.cell_size, self.m, self.n) != (other.origin, other.cell_size, other.m, other.n) {
            return None;
        }
        let mut out = self.clone();
        for (a, b) in out.weights.iter_mut().zip(&other.weights) {
            *a += b;
        }
        for (a, b) in out.directions.iter_mut().zip(&other.directions) {
            a[0] += b[0];
            a[1] += b[1];
        }
        Some(out)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = raster_header(MAGIC, VERSION).to_vec();
        out.extend_from_slice(&(self.category.len() as u32).to_le_bytes());
        out.extend_from_slice(self.category.as_bytes());
        for v in [self.origin[0], self.origin[1], self.cell_size] {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out.extend_from_slice(&(self.m as u32).to_le_bytes());
        out.extend_from_slice(&(self.n as u32).to_le_bytes());
        for w in &self.weights {
            out.extend_from_slice(&w.to_le_bytes());
        }
        for d in &self.directions {
            out.extend_from_slice(&d[0].to_le_bytes());
            out.extend_from_slice(&d[1].to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, PlacementError> {
        let version = check_raster_header(bytes, MAGIC).map_err(PlacementError::Raster)?;
        if version != VERSION {
            return Err(PlacementError::Raster(format!("unsupported version {version}")));
        }
        let mut r = LeReader::new(bytes, 16);
        let parse = |r: &mut LeReader| -> Result<ProbabilityMap, String> {
            let len = r.u32()? as usize;
            let mut name = Vec::with_capacity(len);
            for _ in 0..len {
                name.push(r.u8()?);
            }
            let category = String::from_utf8(name).map_err(|_| "category is not UTF-8".to_string())?;
            let origin = [r.f64()?, r.f64()?];
            let cell_size = r.f64()?;
            let m = r.u32()? as usize;
            let n = r.u32()? as usize;
            let mut weights = Vec::with_capacity(m * n);
            for _ in 0..m * n {
                let w = r.f64()?;
                if !(w >= 0.0) {
                    return Err(format!("negative weight before offset {}", r.pos));
                }
                weights.push(w);
            }
            let mut directions = Vec::with_capacity(m * n);
            for _ in 0..m * n {
                directions.push([r.f64()?, r.f64()?]);
            }
            if !r.finished() {
                return Err(format!("trailing bytes after offset {}", r.pos));
            }
            Ok(ProbabilityMap {
                category,
                origin,
                cell_size,
                m,
                n,
                weights,
                directions,
            })
        };
        parse(&mut r).map_err(PlacementError::Raster)
    }
}

/// One map per category present in `annotations`, all on the same grid.
pub fn build_probability_maps(
    annotations: &[Annotation],
    bounds: &AreaBounds,
    cell_size: f64,
    template: &GaussianTemplate,
) -> Result<Vec<ProbabilityMap>, PlacementError> {
    let mut maps: Vec<ProbabilityMap> = Vec::new();
    for (index, a) in annotations.iter().enumerate() {
        let pos = match maps.iter().position(|m| m.category == a.category) {
            Some(p) => p,
            None => {
                maps.push(ProbabilityMap::zeros(&a.category, bounds, cell_size)?);
                maps.len() - 1
            }
        };
        if !maps[pos].add(a.pose.x, a.pose.y, a.pose.yaw, template) {
            return Err(PlacementError::AnnotationOutOfBounds {
                index,
                x: a.pose.x,
                y: a.pose.y,
            });
        }
    }
    maps.sort_by(|a, b| a.category.cmp(&b.category));
    Ok(maps)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SamplingParams {
    /// Cells whose centers are farther than this from the scanner are never drawn.
    pub max_range: f64,
    /// Heading jitter, radians.
    pub yaw_sigma: f64,
}

impl Default for SamplingParams {
    fn default() -> Self {
        Self {
            max_range: 120.0,
            yaw_sigma: 5f64.to_radians(),
        }
    }
}

/// Categorical sampler over the map cells within range of one scanner pose.
pub struct MapSampler<'a> {
    map: &'a ProbabilityMap,
    cells: Vec<(usize, usize)>,
    dist: WeightedIndex<f64>,
    yaw_noise: Normal<f64>,
}

impl<'a> MapSampler<'a> {
    pub fn new(map: &'a ProbabilityMap, scanner: &RigidPose, params: &SamplingParams) -> Result<Self, PlacementError> {
        let s = scanner.translation();
        let mut cells = Vec::new();
        let mut weights = Vec::new();
        for i in 0..map.m {
            for j in 0..map.n {
                let w = map.weight(i, j);
                let [cx, cy] = map.cell_center(i, j);
                if w > 0.0 && (cx - s.x).hypot(cy - s.y) <= params.max_range {
                    cells.push((i, j));
                    weights.push(w);
                }
            }
        }
        let no_mass = || PlacementError::NoPlacementMass {
            category: map.category.clone(),
        };
        if cells.is_empty() {
            return Err(no_mass());
        }
        let dist = WeightedIndex::new(&weights).map_err(|_| no_mass())?;
        let yaw_noise = Normal::new(0.0, params.yaw_sigma.max(0.0)).map_err(|e| PlacementError::Template(e.to_string()))?;
        Ok(Self {
            map,
            cells,
            dist,
            yaw_noise,
        })
    }

    /// Draws one pose. `None` when the drawn spot has no ground height.
    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R, ground: &GroundModel) -> Option<RigidPose> {
        let (i, j) = self.cells[self.dist.sample(rng)];
        let c = self.map.cell_size;
        let x = self.map.origin[0] + (i as f64 + rng.random::<f64>()) * c;
        let y = self.map.origin[1] + (j as f64 + rng.random::<f64>()) * c;
        let yaw = match self.map.direction(i, j) {
            Some(d) => d + self.yaw_noise.sample(rng),
            None => rng.random_range(-PI..PI),
        };
        let z = ground.height_at(x, y)?;
        Some(RigidPose::from_yaw(Vec3::new(x, y, z), yaw))
    }
}

/// Draws `count` poses: cells by weight within range of the scanner,
/// positions uniform inside the cell, headings from the cell direction plus
/// jitter, heights snapped to the ground.
pub fn sample_poses<R: Rng + ?Sized>(
    map: &ProbabilityMap,
    scanner: &RigidPose,
    count: usize,
    rng: &mut R,
    ground: &GroundModel,
    params: &SamplingParams,
) -> Result<Vec<RigidPose>, PlacementError> {
    let sampler = MapSampler::new(map, scanner, params)?;
    let mut out = Vec::with_capacity(count);
    let budget = 1000 * count.max(1);
    let mut tries = 0;
    while out.len() < count {
        if tries == budget {
            return Err(PlacementError::NoGroundUnderMass {
                category: map.category.clone(),
            });
        }
        tries += 1;
        if let Some(p) = sampler.draw(rng, ground) {
            out.push(p);
        }
    }
    Ok(out)
}
