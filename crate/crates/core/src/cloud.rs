//! Labeled point clouds and the class table shared by every stage.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::geom::Point3;

/// Per-point semantic class. Values index into a [`ClassTable`].
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ClassId(pub u32);

impl ClassId {
    pub const UNKNOWN: ClassId = ClassId(0);
    pub const GROUND: ClassId = ClassId(1);
    pub const BUILDING: ClassId = ClassId(2);
    pub const VEGETATION: ClassId = ClassId(3);
    pub const POLE: ClassId = ClassId(4);
    pub const CAR: ClassId = ClassId(5);
    pub const TRUCK_BUS: ClassId = ClassId(6);
    pub const CYCLIST: ClassId = ClassId(7);
    pub const PEDESTRIAN: ClassId = ClassId(8);
    pub const OTHER_MOVABLE: ClassId = ClassId(9);
}

impl fmt::Display for ClassId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassInfo {
    pub name: String,
    pub movable: bool,
}

/// Registered classes. Files carry the table in their header comments so a
/// label value is never interpreted without its name.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassTable {
    classes: BTreeMap<ClassId, ClassInfo>,
}

impl Default for ClassTable {
    /// Static classes plus the five obstacle categories of the CAD library
    /// (cars/SUVs, trucks/buses, bicyclists & motorcyclists, pedestrians, others).
    fn default() -> Self {
        let mut t = ClassTable::empty();
        for (id, name, movable) in [
            (ClassId::UNKNOWN, "unknown", false),
            (ClassId::GROUND, "ground", false),
            (ClassId::BUILDING, "building", false),
            (ClassId::VEGETATION, "vegetation", false),
            (ClassId::POLE, "pole", false),
            (ClassId::CAR, "car", true),
            (ClassId::TRUCK_BUS, "truck_bus", true),
            (ClassId::CYCLIST, "cyclist", true),
            (ClassId::PEDESTRIAN, "pedestrian", true),
            (ClassId::OTHER_MOVABLE, "other_movable", true),
        ] {
            t.register(id, name, movable);
        }
        t
    }
}

impl ClassTable {
    pub fn empty() -> Self {
        Self {
            classes: BTreeMap::new(),
        }
    }

    pub fn register(&mut self, id: ClassId, name: &str, movable: bool) {
        self.classes.insert(
            id,
            ClassInfo {
                name: name.to_string(),
                movable,
            },
        );
    }

    pub fn contains(&self, id: ClassId) -> bool {
        self.classes.contains_key(&id)
    }

    pub fn get(&self, id: ClassId) -> Option<&ClassInfo> {
        self.classes.get(&id)
    }

    pub fn name(&self, id: ClassId) -> Option<&str> {
        self.classes.get(&id).map(|c| c.name.as_str())
    }

    pub fn by_name(&self, name: &str) -> Option<ClassId> {
        self.classes
            .iter()
            .find(|(_, c)| c.name.eq_ignore_ascii_case(name))
            .map(|(id, _)| *id)
    }

    pub fn movable(&self) -> Vec<ClassId> {
        self.classes
            .iter()
            .filter(|(_, c)| c.movable)
            .map(|(id, _)| *id)
            .collect()
    }

    pub fn iter(&self) -> impl Iterator<Item = (ClassId, &ClassInfo)> {
        self.classes.iter().map(|(id, c)| (*id, c))
    }

    /// Header comment lines: `class <id> <name> <static|movable>`.
    pub fn to_comment_lines(&self) -> Vec<String> {
        self.iter()
            .map(|(id, c)| {
                format!(
                    "class {} {} {}",
                    id.0,
                    c.name,
                    if c.movable { "movable" } else { "static" }
                )
            })
            .collect()
    }

    /// Parses one header comment; returns false if the line is not a class entry.
    pub fn parse_comment_line(&mut self, line: &str) -> bool {
        let mut it = line.split_whitespace();
        if it.next() != Some("class") {
            return false;
        }
        let (Some(id), Some(name)) = (it.next().and_then(|s| s.parse().ok()), it.next()) else {
            return false;
        };
        let movable = it.next() == Some("movable");
        self.register(ClassId(id), name, movable);
        true
    }
}

/// Background scan: points with one class label each and an optional
/// per-point material ID.
#[derive(Clone, Debug, PartialEq)]
pub struct SemanticPointCloud {
    pub points: Vec<Point3>,
    pub labels: Vec<ClassId>,
    pub materials: Option<Vec<u32>>,
    pub classes: ClassTable,
}

impl Default for SemanticPointCloud {
    fn default() -> Self {
        Self::new(ClassTable::default())
    }
}

impl SemanticPointCloud {
    pub fn new(classes: ClassTable) -> Self {
        Self {
            points: Vec::new(),
            labels: Vec::new(),
            materials: None,
            classes,
        }
    }

    pub fn from_parts(points: Vec<Point3>, labels: Vec<ClassId>, classes: ClassTable) -> Self {
        assert_eq!(points.len(), labels.len(), "one label per point");
        Self {
            points,
            labels,
            materials: None,
            classes,
        }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn push(&mut self, p: Point3, label: ClassId) {
        self.points.push(p);
        self.labels.push(label);
        if let Some(m) = &mut self.materials {
            m.push(0);
        }
    }

    pub fn material(&self, i: usize) -> u32 {
        self.materials.as_ref().map_or(0, |m| m[i])
    }

    /// Copy holding only the points where `keep` is true.
    pub fn filter(&self, mut keep: impl FnMut(usize) -> bool) -> SemanticPointCloud {
        let idx: Vec<usize> = (0..self.len()).filter(|&i| keep(i)).collect();
        SemanticPointCloud {
            points: idx.iter().map(|&i| self.points[i]).collect(),
            labels: idx.iter().map(|&i| self.labels[i]).collect(),
            materials: self
                .materials
                .as_ref()
                .map(|m| idx.iter().map(|&i| m[i]).collect()),
            classes: self.classes.clone(),
        }
    }

    pub fn count_by_class(&self) -> BTreeMap<ClassId, usize> {
        let mut out = BTreeMap::new();
        for l in &self.labels {
            *out.entry(*l).or_insert(0) += 1;
        }
        out
    }

    /// Checks the length and finiteness invariants.
    pub fn validate(&self) -> Result<(), String> {
        if self.labels.len() != self.points.len() {
            return Err(format!(
                "{} labels for {} points",
                self.labels.len(),
                self.points.len()
            ));
        }
        if let Some(m) = &self.materials {
            if m.len() != self.points.len() {
                return Err(format!("{} materials for {} points", m.len(), self.points.len()));
            }
        }
        if let Some(i) = self.points.iter().position(|p| !p.coords.iter().all(|c| c.is_finite())) {
            return Err(format!("point {i} has a non-finite coordinate"));
        }
        Ok(())
    }

    /// `(min, max)` corners of the x-y bounding rectangle.
    pub fn xy_bounds(&self) -> Option<([f64; 2], [f64; 2])> {
        let first = self.points.first()?;
        let mut lo = [first.x, first.y];
        let mut hi = lo;
        for p in &self.points {
            lo = [lo[0].min(p.x), lo[1].min(p.y)];
            hi = [hi[0].max(p.x), hi[1].max(p.y)];
        }
        Some((lo, hi))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn comment_lines_roundtrip() {
        let t = ClassTable::default();
        let mut back = ClassTable::empty();
        for line in t.to_comment_lines() {
            assert!(back.parse_comment_line(&line));
        }
        assert_eq!(t, back);
        assert!(!back.parse_comment_line("frame z-up meters"));
    }

    #[test]
    fn movable_classes_are_the_obstacle_categories() {
        let t = ClassTable::default();
        assert_eq!(
            t.movable(),
            vec![
                ClassId::CAR,
                ClassId::TRUCK_BUS,
                ClassId::CYCLIST,
                ClassId::PEDESTRIAN,
                ClassId::OTHER_MOVABLE
            ]
        );
        assert_eq!(t.by_name("Pedestrian"), Some(ClassId::PEDESTRIAN));
    }

    #[test]
    fn validate_catches_nan() {
        let mut c = SemanticPointCloud::default();
        c.push(Point3::new(0.0, f64::NAN, 0.0), ClassId::GROUND);
        assert!(c.validate().is_err());
    }
}
