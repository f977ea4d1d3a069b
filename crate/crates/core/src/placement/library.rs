use std::collections::BTreeMap;
use std::path::Path;

use rand::Rng;
use serde::Deserialize;

use super::PlacementError;
use crate::geom::Obb;
use crate::mesh::{read_obj, Material, TriangleMesh};

/// Which selection group a model belongs to.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FrequencyGroup {
    High,
    Low,
}

/// A CAD obstacle, recentered so its footprint is centered on the origin and
/// its base sits at z = 0.
#[derive(Clone, Debug)]
pub struct ObstacleModel {
    pub id: String,
    pub category: String,
    pub group: FrequencyGroup,
    pub mesh: TriangleMesh,
    /// One material per mesh material slot.
    pub materials: Vec<Material>,
    /// Model-frame box around every vertex.
    pub canonical: Obb,
}

/// Slot names containing these words are treated as see-through.
const TRANSPARENT_HINTS: [&str; 2] = ["glass", "transparent"];

pub fn is_transparent_name(name: &str) -> bool {
    let lower = name.to_ascii_lowercase();
    TRANSPARENT_HINTS.iter().any(|h| lower.contains(h))
}

impl ObstacleModel {
    /// Recenters `mesh` and assigns `reflectivity` to every slot; slots named
    /// like glass become transparent.
    pub fn new(
        id: &str,
        category: &str,
        group: FrequencyGroup,
        mut mesh: TriangleMesh,
        reflectivity: f64,
    ) -> Result<Self, PlacementError> {
        if mesh.triangles.is_empty() {
            return Err(PlacementError::Library(format!("model `{id}` has no triangles")));
        }
        mesh.recenter_on_ground();
        let slots = mesh
            .material_names
            .len()
            .max(mesh.materials.iter().map(|m| *m as usize + 1).max().unwrap_or(0));
        let materials = (0..slots)
            .map(|s| {
                let transparent = mesh.material_names.get(s).is_some_and(|n| is_transparent_name(n));
                Material::new(reflectivity, transparent)
            })
            .collect::<Result<Vec<_>, _>>()?;
        let canonical = mesh.bounding_box().expect("mesh has vertices");
        Ok(Self {
            id: id.to_string(),
            category: category.to_ascii_lowercase(),
            group,
            mesh,
            materials,
            canonical,
        })
    }

    pub fn material(&self, slot: u32) -> Material {
        self.materials[slot as usize]
    }
}

#[derive(Clone, Debug, Default)]
pub struct ObstacleLibrary {
    pub models: BTreeMap<String, ObstacleModel>,
}

#[derive(Deserialize)]
struct ManifestRow {
    id: String,
    category: String,
    mesh: String,
    group: FrequencyGroup,
    reflectivity: f64,
}

impl ObstacleLibrary {
    pub fn insert(&mut self, model: ObstacleModel) {
        self.models.insert(model.id.clone(), model);
    }

    pub fn get(&self, id: &str) -> Option<&ObstacleModel> {
        self.models.get(id)
    }

    /// Loads a CSV manifest with columns `id,category,mesh,group,reflectivity`.
    /// Mesh paths are relative to the manifest.
    pub fn load(manifest: &Path) -> Result<Self, PlacementError> {
        let mut rdr = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .comment(Some(b'#'))
            .from_path(manifest)
            .map_err(|e| PlacementError::Manifest {
                path: manifest.into(),
                msg: e.to_string(),
            })?;
        let base = manifest.parent().unwrap_or(Path::new("."));
        let mut lib = ObstacleLibrary::default();
        for row in rdr.deserialize() {
            let row: ManifestRow = row.map_err(|e| PlacementError::Manifest {
                path: manifest.into(),
                msg: e.to_string(),
            })?;
            if lib.models.contains_key(&row.id) {
                return Err(PlacementError::Manifest {
                    path: manifest.into(),
                    msg: format!("duplicate model id `{}`", row.id),
                });
            }
            let (mesh, _) = read_obj(&base.join(&row.mesh))?;
            lib.insert(ObstacleModel::new(&row.id, &row.category, row.group, mesh, row.reflectivity)?);
        }
        Ok(lib)
    }

    /// Number of models per category.
    pub fn category_counts(&self) -> BTreeMap<String, usize> {
        let mut out = BTreeMap::new();
        for m in self.models.values() {
            *out.entry(m.category.clone()).or_insert(0) += 1;
        }
        out
    }

    fn group(&self, category: &str, group: FrequencyGroup) -> Vec<&str> {
        self.models
            .values()
            .filter(|m| m.category == category && m.group == group)
            .map(|m| m.id.as_str())
            .collect()
    }
}

/// Category occurrence frequencies and the high/low-frequency mixing ratio.
#[derive(Clone, Debug, PartialEq)]
pub struct CategoryPrior {
    pub frequencies: BTreeMap<String, f64>,
    /// Probability of drawing from the high-frequency group.
    pub mixing_ratio: f64,
}

pub const DEFAULT_MIXING_RATIO: f64 = 0.9;

impl CategoryPrior {
    /// Normalizes per-category counts into frequencies.
    pub fn from_counts(counts: &BTreeMap<String, usize>, mixing_ratio: f64) -> Result<Self, PlacementError> {
        let total: usize = counts.values().sum();
        if total == 0 {
            return Err(PlacementError::NoAnnotations);
        }
        if !(0.0..=1.0).contains(&mixing_ratio) {
            return Err(PlacementError::Library(format!("mixing ratio {mixing_ratio} outside [0, 1]")));
        }
        let frequencies = counts
            .iter()
            .filter(|(_, n)| **n > 0)
            .map(|(c, n)| (c.clone(), *n as f64 / total as f64))
            .collect();
        Ok(Self {
            frequencies,
            mixing_ratio,
        })
    }

    /// Splits `total` obstacles over categories by largest remainder.
    pub fn draw_counts(&self, total: usize) -> BTreeMap<String, usize> {
        let mut out: BTreeMap<String, usize> = BTreeMap::new();
        let mut rem: Vec<(f64, &String)> = Vec::new();
        let mut assigned = 0;
        for (c, f) in &self.frequencies {
            let exact = f * total as f64;
            let n = exact.floor() as usize;
            out.insert(c.clone(), n);
            assigned += n;
            rem.push((exact - n as f64, c));
        }
        rem.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(b.1)));
        for (_, c) in rem.into_iter().take(total.saturating_sub(assigned)) {
            *out.get_mut(c).expect("present") += 1;
        }
        out
    }
}

/// Picks a model of `category`: the high-frequency group with probability
/// `mixing_ratio`, otherwise the low-frequency group, uniformly within the
/// group. A missing group falls back to the other one.
pub fn select_model<'a, R: Rng + ?Sized>(
    prior: &CategoryPrior,
    library: &'a ObstacleLibrary,
    category: &str,
    rng: &mut R,
) -> Result<&'a ObstacleModel, PlacementError> {
    let high = library.group(category, FrequencyGroup::High);
    let low = library.group(category, FrequencyGroup::Low);
    let pick = match (high.is_empty(), low.is_empty()) {
        (true, true) => return Err(PlacementError::UnknownCategory(category.to_string())),
        (false, true) => &high,
        (true, false) => &low,
        (false, false) => {
            if rng.random::<f64>() < prior.mixing_ratio {
                &high
            } else {
                &low
            }
        }
    };
    let id = pick[rng.random_range(0..pick.len())];
    Ok(&library.models[id])
}
