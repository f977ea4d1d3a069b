use std::collections::BTreeMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::library::{select_model, CategoryPrior, ObstacleLibrary};
use super::map::{MapSampler, ProbabilityMap, SamplingParams};
use super::PlacementError;
use crate::background::BackgroundScene;
use crate::cloud::ClassId;
use crate::geom::{Obb, RigidPose, YawPose};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlacedObstacle {
    pub model_id: String,
    pub category: String,
    pub pose: YawPose,
}

impl PlacedObstacle {
    pub fn rigid_pose(&self) -> RigidPose {
        self.pose.into()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScenePlacement {
    pub scanner: YawPose,
    pub obstacles: Vec<PlacedObstacle>,
}

impl ScenePlacement {
    /// World-frame boxes of the placed models.
    pub fn world_boxes(&self, library: &ObstacleLibrary) -> Vec<Obb> {
        self.obstacles
            .iter()
            .map(|o| library.models[&o.model_id].canonical.transformed(&o.rigid_pose()))
            .collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ComposeParams {
    pub sampling: SamplingParams,
    /// Gap kept around every obstacle, meters.
    pub clearance: f64,
    /// Attempts allowed per requested obstacle.
    pub attempts_per_target: usize,
    /// Background points higher than this above the ground count as solid
    /// when checking a candidate box against static structure.
    pub static_min_height: f64,
}

impl Default for ComposeParams {
    fn default() -> Self {
        Self {
            sampling: SamplingParams::default(),
            clearance: 0.3,
            attempts_per_target: 100,
            static_min_height: 0.2,
        }
    }
}

/// Rejection-samples obstacles until every category reaches its target.
/// A candidate is rejected when its box, grown by the clearance, touches an
/// accepted box, the scanner, or solid background points, or when any
/// footprint corner or its center lies over a ground cell without height.
/// Categories are visited round-robin so an impossible category cannot
/// starve the others.
pub fn compose_scene<R: Rng + ?Sized>(
    scene: &BackgroundScene,
    maps: &BTreeMap<String, ProbabilityMap>,
    prior: &CategoryPrior,
    library: &ObstacleLibrary,
    targets: &BTreeMap<String, usize>,
    scanner: &RigidPose,
    params: &ComposeParams,
    rng: &mut R,
) -> Result<ScenePlacement, PlacementError> {
    let mut samplers = BTreeMap::new();
    for (cat, &n) in targets {
        if n == 0 {
            continue;
        }
        let map = maps.get(cat).ok_or_else(|| PlacementError::MissingMap(cat.clone()))?;
        if library.category_counts().get(cat).copied().unwrap_or(0) == 0 {
            return Err(PlacementError::UnknownCategory(cat.clone()));
        }
        samplers.insert(cat.clone(), MapSampler::new(map, scanner, &params.sampling)?);
    }
    let mut placement = ScenePlacement {
        scanner: scanner.into(),
        obstacles: Vec::new(),
    };
    let mut accepted: Vec<Obb> = Vec::new();
    let mut achieved: BTreeMap<String, usize> = targets.keys().map(|k| (k.clone(), 0)).collect();
    let total: usize = targets.values().sum();
    let budget = params.attempts_per_target * total;
    let s = scanner.translation();

    let mut attempts = 0;
    'outer: while attempts < budget {
        let mut progressed = false;
        for (cat, sampler) in &samplers {
            if achieved[cat] >= targets[cat] {
                continue;
            }
            if attempts == budget {
                break 'outer;
            }
            attempts += 1;
            progressed = true;
            let Some(pose) = sampler.draw(rng, &scene.ground) else { continue };
            let model = select_model(prior, library, cat, rng)?;
            let obb = model.canonical.transformed(&pose);
            let grown = obb.inflated(params.clearance);
            if accepted.iter().any(|a| grown.overlaps_xy(a)) {
                continue;
            }
            if grown.contains_xy(s.x, s.y, 0.0) {
                continue;
            }
            if !on_valid_ground(scene, &obb) || hits_static(scene, &obb, params.static_min_height) {
                continue;
            }
            accepted.push(obb);
            *achieved.get_mut(cat).expect("target category") += 1;
            placement.obstacles.push(PlacedObstacle {
                model_id: model.id.clone(),
                category: cat.clone(),
                pose: (&pose).into(),
            });
        }
        if !progressed {
            break;
        }
    }
    if achieved.iter().any(|(c, n)| *n < targets[c]) {
        return Err(PlacementError::PlacementExhausted {
            achieved,
            targets: targets.clone(),
            placement: Box::new(placement),
        });
    }
    Ok(placement)
}

fn on_valid_ground(scene: &BackgroundScene, obb: &Obb) -> bool {
    let g = &scene.ground;
    let mut probes = obb.footprint().to_vec();
    probes.push([obb.center.x, obb.center.y]);
    probes.iter().all(|[x, y]| g.cell_height(g.cell_of(*x, *y)).is_some())
}

fn hits_static(scene: &BackgroundScene, obb: &Obb, min_height: f64) -> bool {
    let r = obb.half_extents.norm();
    let mut hit = false;
    scene.index.for_each_within(&obb.center, r, |i, _| {
        if hit {
            return;
        }
        let p = scene.index.point(i);
        let label = scene.cloud.labels[i];
        if label == ClassId::GROUND || !obb.contains(p, 0.0) {
            return;
        }
        let floor = scene.ground.height_at(p.x, p.y).unwrap_or(f64::NEG_INFINITY);
        if p.z > floor + min_height {
            hit = true;
        }
    });
    hit
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::background::{clean_background, CleanParams};
    use crate::cloud::SemanticPointCloud;
    use crate::geom::{Point3, Vec3};
    use crate::mesh::box_mesh;
    use crate::placement::library::{FrequencyGroup, ObstacleModel};
    use crate::placement::map::{AreaBounds, GaussianTemplate};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn ground_scene(half: f64) -> BackgroundScene {
        let mut c = SemanticPointCloud::default();
        let n = (half / 0.25) as i64;
        for i in -n..n {
            for j in -n..n {
                c.push(Point3::new(i as f64 * 0.25 + 0.125, j as f64 * 0.25 + 0.125, 0.0), ClassId::GROUND);
            }
        }
        clean_background(&c, &CleanParams::default()).unwrap().0
    }

    fn car_library() -> ObstacleLibrary {
        let mut lib = ObstacleLibrary::default();
        let mesh = box_mesh(Point3::new(0.0, 0.0, 0.0), Point3::new(4.5, 1.8, 1.5), 0);
        lib.insert(ObstacleModel::new("sedan", "car", FrequencyGroup::High, mesh, 0.5).unwrap());
        lib
    }

    fn uniform_map(half: f64, cell: f64) -> ProbabilityMap {
        let b = AreaBounds {
            min: [-half, -half],
            max: [half, half],
        };
        let mut m = ProbabilityMap::zeros("car", &b, cell).unwrap();
        m.weights.iter_mut().for_each(|w| *w = 1.0);
        m
    }

    fn prior() -> CategoryPrior {
        CategoryPrior::from_counts(&BTreeMap::from([("car".to_string(), 1)]), 0.9).unwrap()
    }

    #[test]
    fn zero_target_is_empty() {
        let scene = ground_scene(10.0);
        let maps = BTreeMap::new();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let p = compose_scene(
            &scene,
            &maps,
            &prior(),
            &car_library(),
            &BTreeMap::from([("car".to_string(), 0)]),
            &RigidPose::identity(),
            &ComposeParams::default(),
            &mut rng,
        )
        .unwrap();
        assert!(p.obstacles.is_empty());
    }

    #[test]
    fn single_cell_map_exhausts() {
        let scene = ground_scene(20.0);
        let b = AreaBounds {
            min: [-20.0, -20.0],
            max: [20.0, 20.0],
        };
        let mut m = ProbabilityMap::zeros("car", &b, 0.5).unwrap();
        let t = GaussianTemplate::from_edge_weight(0, 0.5).unwrap();
        m.add(10.2, 5.2, 0.0, &t);
        let maps = BTreeMap::from([("car".to_string(), m)]);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let err = compose_scene(
            &scene,
            &maps,
            &prior(),
            &car_library(),
            &BTreeMap::from([("car".to_string(), 2)]),
            &RigidPose::identity(),
            &ComposeParams::default(),
            &mut rng,
        )
        .unwrap_err();
        match err {
            PlacementError::PlacementExhausted { achieved, placement, .. } => {
                assert_eq!(achieved["car"], 1);
                assert_eq!(placement.obstacles.len(), 1);
            }
            e => panic!("unexpected {e}"),
        }
    }

    #[test]
    fn fifty_cars_no_overlap() {
        let scene = ground_scene(40.0);
        let maps = BTreeMap::from([("car".to_string(), uniform_map(40.0, 0.5))]);
        let lib = car_library();
        let run = |seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            compose_scene(
                &scene,
                &maps,
                &prior(),
                &lib,
                &BTreeMap::from([("car".to_string(), 50)]),
                &RigidPose::from_yaw(Vec3::new(0.0, 0.0, 1.8), 0.0),
                &ComposeParams::default(),
                &mut rng,
            )
            .unwrap()
        };
        let p = run(5);
        assert_eq!(p.obstacles.len(), 50);
        let boxes = p.world_boxes(&lib);
        for i in 0..boxes.len() {
            for j in i + 1..boxes.len() {
                assert!(!boxes[i].overlaps(&boxes[j]), "{i} overlaps {j}");
            }
            let o = &p.obstacles[i].pose;
            assert!((o.z - scene.ground.height_at(o.x, o.y).unwrap()).abs() <= 0.01);
            assert!(!boxes[i].contains(&Point3::new(0.0, 0.0, 1.8), 0.0));
        }
        assert_eq!(run(5), p);
    }

    #[test]
    fn static_structure_blocks_placement() {
        let mut c = SemanticPointCloud::default();
        for i in -40..40 {
            for j in -40..40 {
                c.push(Point3::new(i as f64 * 0.25, j as f64 * 0.25, 0.0), ClassId::GROUND);
            }
        }
        // A wall of building points filling x ∈ [2, 3].
        for i in 0..5 {
            for j in -40..40 {
                for k in 1..10 {
                    c.push(Point3::new(2.0 + i as f64 * 0.25, j as f64 * 0.25, k as f64 * 0.3), ClassId::BUILDING);
                }
            }
        }
        let scene = clean_background(&c, &CleanParams::default()).unwrap().0;
        let b = AreaBounds {
            min: [2.0, -1.0],
            max: [3.0, 1.0],
        };
        let mut m = ProbabilityMap::zeros("car", &b, 0.5).unwrap();
        m.weights.iter_mut().for_each(|w| *w = 1.0);
        let maps = BTreeMap::from([("car".to_string(), m)]);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let r = compose_scene(
            &scene,
            &maps,
            &prior(),
            &car_library(),
            &BTreeMap::from([("car".to_string(), 1)]),
            &RigidPose::identity(),
            &ComposeParams::default(),
            &mut rng,
        );
        assert!(matches!(r, Err(PlacementError::PlacementExhausted { .. })));
    }
}
