use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{render_cube_maps, BeamHit, CubeFaceMaps, FrameScene, RenderParams};
use crate::geom::{Obb, Point3, RigidPose};
use crate::sensor::{incidence_angle, SensorModel};
use crate::util::mix64;

/// Slack when checking an obstacle hit against its box, meters.
pub const BOX_TOLERANCE: f64 = 1e-6;

/// One emitted return, sensor frame.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SimulatedPoint {
    pub position: nalgebra::Point3<f32>,
    pub beam: u32,
    /// 0 for background, k for the k-th obstacle.
    pub instance: u32,
    pub class: u32,
    pub material: u32,
    pub energy: f32,
}

/// Where each beam of a frame ended up.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FrameCounters {
    pub beams: usize,
    pub sky: usize,
    pub rejected: usize,
    pub out_of_range: usize,
    pub below_threshold: usize,
    pub emitted: usize,
}

#[derive(Clone, Debug)]
pub struct SimulatedFrame {
    pub points: Vec<SimulatedPoint>,
    pub counters: FrameCounters,
}

/// Renders `scene` around `pose` and fires every beam of `sensor` at it.
///
/// Beams that see sky, whose obstacle hit falls outside that obstacle's box
/// (`boxes[instance - 1]`, world frame), whose range exceeds the sensor's
/// maximum, or whose return energy is below threshold are discarded.
/// Survivors get Gaussian range noise. The output is a pure function of
/// the inputs and `seed`.
pub fn simulate_frame(
    scene: &FrameScene<'_>,
    sensor: &SensorModel,
    pose: &RigidPose,
    params: &RenderParams,
    boxes: &[Obb],
    seed: u64,
) -> SimulatedFrame {
    let params = RenderParams {
        max_range: sensor.config.max_range,
        ..*params
    };
    let maps = render_cube_maps(scene, pose, &params);
    simulate_beams(&maps, scene, sensor, pose, boxes, seed)
}

/// Beam stage of [`simulate_frame`] against prebuilt maps.
pub fn simulate_beams(
    maps: &CubeFaceMaps,
    scene: &FrameScene<'_>,
    sensor: &SensorModel,
    pose: &RigidPose,
    boxes: &[Obb],
    seed: u64,
) -> SimulatedFrame {
    let beams = sensor.beams(mix64(seed));
    let hits: Vec<BeamHit> = beams
        .par_iter()
        .map(|b| {
            maps.lookup(&b.dir, |instance, p| {
                boxes
                    .get(instance as usize - 1)
                    .is_none_or(|obb| obb.contains(&pose.transform_point(&Point3::from(*p)), BOX_TOLERANCE))
            })
        })
        .collect();

    let cfg = &sensor.config;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(1);
    let noise = (cfg.distance_sigma > 0.0).then(|| Normal::new(0.0, cfg.distance_sigma).expect("validated sigma"));
    let mut counters = FrameCounters {
        beams: beams.len(),
        ..Default::default()
    };
    let mut points = Vec::new();
    for (b, hit) in beams.iter().zip(hits) {
        let s = match hit {
            BeamHit::Sky => {
                counters.sky += 1;
                continue;
            }
            BeamHit::Rejected => {
                counters.rejected += 1;
                continue;
            }
            BeamHit::Hit(s) => s,
        };
        if s.depth > cfg.max_range {
            counters.out_of_range += 1;
            continue;
        }
        let theta = incidence_angle(&b.dir, &s.normal);
        let energy = sensor.energy.return_energy(scene.reflectivity(s.material), theta, s.depth);
        if !sensor.energy.detected(energy) {
            counters.below_threshold += 1;
            continue;
        }
        let range = match &noise {
            Some(n) => s.depth + n.sample(&mut rng),
            None => s.depth,
        };
        if !(range > 0.0 && range <= cfg.max_range) {
            counters.out_of_range += 1;
            continue;
        }
        let p = b.dir * range;
        points.push(SimulatedPoint {
            position: nalgebra::Point3::new(p.x as f32, p.y as f32, p.z as f32),
            beam: b.beam,
            instance: s.instance,
            class: s.class,
            material: s.material,
            energy: energy as f32,
        });
    }
    counters.emitted = points.len();
    SimulatedFrame { points, counters }
}
