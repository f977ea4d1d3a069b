//! Uniform hash grid for fixed-radius neighbor queries.

use std::collections::HashMap;

use thiserror::Error;

use crate::geom::Point3;

#[derive(Debug, Error, PartialEq)]
#[error("cell size must be positive and finite, got {0}")]
pub struct InvalidCellSize(pub f64);

type Cell = (i64, i64, i64);

#[derive(Clone, Debug)]
pub struct SpatialGridIndex {
    cell_size: f64,
    points: Vec<Point3>,
    cells: HashMap<Cell, Vec<u32>>,
}

impl SpatialGridIndex {
    pub fn build(points: &[Point3], cell_size: f64) -> Result<Self, InvalidCellSize> {
        if !(cell_size > 0.0 && cell_size.is_finite()) {
            return Err(InvalidCellSize(cell_size));
        }
        let mut cells: HashMap<Cell, Vec<u32>> = HashMap::new();
        for (i, p) in points.iter().enumerate() {
            cells.entry(cell_of(p, cell_size)).or_default().push(i as u32);
        }
        Ok(Self {
            cell_size,
            points: points.to_vec(),
            cells,
        })
    }

    pub fn cell_size(&self) -> f64 {
        self.cell_size
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn point(&self, i: usize) -> &Point3 {
        &self.points[i]
    }

    /// Indices of all points with `‖q − p‖ ≤ radius`, in no particular order.
    pub fn query(&self, p: &Point3, radius: f64) -> Vec<usize> {
        let mut out = Vec::new();
        self.for_each_within(p, radius, |i, _| out.push(i));
        out
    }

    pub fn for_each_within(&self, p: &Point3, radius: f64, mut f: impl FnMut(usize, f64)) {
        if radius < 0.0 || self.points.is_empty() {
            return;
        }
        let r2 = radius * radius;
        let lo = cell_of(&(p - nalgebra::Vector3::repeat(radius)), self.cell_size);
        let hi = cell_of(&(p + nalgebra::Vector3::repeat(radius)), self.cell_size);
        let span = (hi.0 - lo.0 + 1) * (hi.1 - lo.1 + 1) * (hi.2 - lo.2 + 1);
        if span as usize > self.cells.len() {
            // Query box larger than the occupied set: walk occupied cells.
            for (c, ids) in &self.cells {
                if (lo.0..=hi.0).contains(&c.0)
                    && (lo.1..=hi.1).contains(&c.1)
                    && (lo.2..=hi.2).contains(&c.2)
                {
                    self.visit(ids, p, r2, &mut f);
                }
            }
            return;
        }
        for x in lo.0..=hi.0 {
            for y in lo.1..=hi.1 {
                for z in lo.2..=hi.2 {
                    if let Some(ids) = self.cells.get(&(x, y, z)) {
                        self.visit(ids, p, r2, &mut f);
                    }
                }
            }
        }
    }

    fn visit(&self, ids: &[u32], p: &Point3, r2: f64, f: &mut impl FnMut(usize, f64)) {
        for &i in ids {
            let d2 = (self.points[i as usize] - p).norm_squared();
            if d2 <= r2 {
                f(i as usize, d2);
            }
        }
    }

    /// True when some indexed point lies within `radius` of `p`.
    pub fn any_within(&self, p: &Point3, radius: f64) -> bool {
        let mut hit = false;
        self.for_each_within(p, radius, |_, _| hit = true);
        hit
    }
}

fn cell_of(p: &Point3, size: f64) -> Cell {
    (
        (p.x / size).floor() as i64,
        (p.y / size).floor() as i64,
        (p.z / size).floor() as i64,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn brute(points: &[Point3], q: &Point3, r: f64) -> Vec<usize> {
        (0..points.len())
            .filter(|&i| (points[i] - q).norm() <= r)
            .collect()
    }

    #[test]
    fn rejects_bad_cell_size() {
        assert!(SpatialGridIndex::build(&[], 0.0).is_err());
        assert!(SpatialGridIndex::build(&[], -1.0).is_err());
        assert!(SpatialGridIndex::build(&[], f64::NAN).is_err());
    }

    #[test]
    fn empty_index_returns_nothing() {
        let idx = SpatialGridIndex::build(&[], 0.5).unwrap();
        assert!(idx.query(&Point3::origin(), 100.0).is_empty());
    }

    #[test]
    fn unit_cube_corner_neighbors() {
        let mut pts = Vec::new();
        for x in [0.0, 1.0] {
            for y in [0.0, 1.0] {
                for z in [0.0, 1.0] {
                    pts.push(Point3::new(x, y, z));
                }
            }
        }
        let idx = SpatialGridIndex::build(&pts, 0.3).unwrap();
        let mut got = idx.query(&Point3::origin(), 1.01);
        got.sort();
        assert_eq!(got, brute(&pts, &Point3::origin(), 1.01));
        assert_eq!(got.len(), 4);
    }

    #[test]
    fn random_queries_match_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let pts: Vec<Point3> = (0..10_000)
            .map(|_| {
                Point3::new(
                    rng.random_range(-20.0..20.0),
                    rng.random_range(-20.0..20.0),
                    rng.random_range(-3.0..3.0),
                )
            })
            .collect();
        for cell in [0.25, 1.0, 7.0] {
            let idx = SpatialGridIndex::build(&pts, cell).unwrap();
            for _ in 0..100 {
                let q = Point3::new(
                    rng.random_range(-22.0..22.0),
                    rng.random_range(-22.0..22.0),
                    rng.random_range(-4.0..4.0),
                );
                let r = rng.random_range(0.0..4.0);
                let mut got = idx.query(&q, r);
                got.sort();
                assert_eq!(got, brute(&pts, &q, r));
            }
        }
    }
}
