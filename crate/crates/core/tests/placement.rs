use std::collections::BTreeMap;
use std::sync::OnceLock;

use augsim::background::{clean_background, BackgroundScene, GroundModel};
use augsim::demo::{demo_scene, write_demo, DemoParams, DEMO_MANIFEST};
use augsim::geom::{RigidPose, Vec3};
use augsim::placement::{
    build_probability_maps, compose_scene, sample_poses, AreaBounds, CategoryPrior, ComposeParams, GaussianTemplate,
    ObstacleLibrary, PlacementError, ProbabilityMap, SamplingParams, ScenePlacement, DEFAULT_MIXING_RATIO,
};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

struct World {
    scene: BackgroundScene,
    library: ObstacleLibrary,
    maps: BTreeMap<String, ProbabilityMap>,
    prior: CategoryPrior,
}

fn world() -> &'static World {
    static W: OnceLock<World> = OnceLock::new();
    W.get_or_init(|| {
        let params = DemoParams {
            half_extent: 25.0,
            spacing: 0.25,
            seed: 4,
        };
        let demo = demo_scene(&params);
        let (scene, _) = clean_background(&demo.cloud, &Default::default()).unwrap();
        let dir = tempfile::tempdir().unwrap().keep();
        write_demo(&dir, &params, 0).unwrap();
        let library = ObstacleLibrary::load(&dir.join(DEMO_MANIFEST)).unwrap();
        let bounds = AreaBounds::around(&demo.annotations, 2.0).unwrap();
        let maps = build_probability_maps(&demo.annotations, &bounds, 0.5, &GaussianTemplate::default())
            .unwrap()
            .into_iter()
            .map(|m| (m.category.clone(), m))
            .collect();
        let prior = CategoryPrior::from_counts(&library.category_counts(), DEFAULT_MIXING_RATIO).unwrap();
        World {
            scene,
            library,
            maps,
            prior,
        }
    })
}

fn compose(seed: u64, x: f64) -> ScenePlacement {
    let w = world();
    let targets: BTreeMap<String, usize> =
        [("car", 8), ("pedestrian", 4), ("cyclist", 2), ("truck_bus", 1)].map(|(k, v)| (k.to_string(), v)).into();
    let z = w.scene.ground.height_at(x, -6.5).unwrap() + 1.73;
    let scanner = RigidPose::from_yaw(Vec3::new(x, -6.5, z), 0.0);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    match compose_scene(&w.scene, &w.maps, &w.prior, &w.library, &targets, &scanner, &ComposeParams::default(), &mut rng) {
        Ok(p) => p,
        Err(PlacementError::PlacementExhausted { placement, .. }) => *placement,
        Err(e) => panic!("{e}"),
    }
}

fn flat_ground(hi: [f64; 2]) -> GroundModel {
    let mut g = GroundModel::empty([0.0, 0.0], hi, 0.5).unwrap();
    for c in g.cells().collect::<Vec<_>>() {
        g.set_cell_height(c, Some(0.0));
    }
    g
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn samples_only_where_weight_is_positive(
        weights in proptest::collection::vec(prop_oneof![Just(0.0), 0.01..1.0f64], 30),
        seed in any::<u64>(),
    ) {
        prop_assume!(weights.iter().any(|w| *w > 0.0));
        let bounds = AreaBounds { min: [0.0, 0.0], max: [6.0, 5.0] };
        let mut map = ProbabilityMap::zeros("car", &bounds, 1.0).unwrap();
        map.weights = weights;
        let g = flat_ground([6.0, 5.0]);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let poses = sample_poses(&map, &RigidPose::identity(), 300, &mut rng, &g, &SamplingParams::default()).unwrap();
        for p in poses {
            let t = p.translation();
            let (i, j) = map.cell_of(t.x, t.y).unwrap();
            prop_assert!(map.weight(i, j) > 0.0);
        }
    }

    #[test]
    fn composed_scenes_are_disjoint_and_grounded(seed in any::<u64>(), x in -15.0..15.0f64) {
        let w = world();
        let p = compose(seed, x);
        prop_assert!(!p.obstacles.is_empty());
        let boxes = p.world_boxes(&w.library);
        for i in 0..boxes.len() {
            for j in i + 1..boxes.len() {
                prop_assert!(!boxes[i].overlaps(&boxes[j]));
            }
        }
        for o in &p.obstacles {
            let g = w.scene.ground.height_at(o.pose.x, o.pose.y).unwrap();
            prop_assert!((o.pose.z - g).abs() <= 0.01);
        }
    }
}

#[test]
fn composition_is_deterministic() {
    assert_eq!(compose(5, 3.0), compose(5, 3.0));
    assert_ne!(compose(5, 3.0), compose(6, 3.0));
}
