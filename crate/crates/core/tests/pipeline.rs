mod common;

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use augsim::annotation::read_frame;
use augsim::cloud::ClassTable;
use augsim::demo::{demo_scene, DemoParams, DEMO_ANNOTATIONS, DEMO_RAW};
use augsim::io::read_raw;
use augsim::pipeline::{
    cmd_build_map, cmd_calibrate, cmd_clean_background, cmd_simulate, cmd_stats, frame_seed, MapParams, PipelineError,
    RunManifest, MANIFEST,
};
use augsim::sensor::{direction_from_angles, BeamTable};

fn small_demo() -> DemoParams {
    DemoParams {
        half_extent: 20.0,
        spacing: 0.25,
        seed: 2,
    }
}

/// Demo workspace with a fast render setup and `frames` frames.
fn fast_workspace(dir: &Path, frames: usize) -> std::path::PathBuf {
    let run = common::demo_workspace(dir, &small_demo(), frames);
    let text = fs::read_to_string(&run).unwrap();
    let text = common::set_toml_line(&text, "resolution", "256");
    let text = common::set_toml_line(&text, "splat_radius", "0.2");
    let text = common::set_toml_line(&text, "normal_radius", "0.75");
    fs::write(&run, text).unwrap();
    run
}

#[test]
fn zero_frames_writes_manifest_only() {
    let dir = tempfile::tempdir().unwrap();
    let run = fast_workspace(dir.path(), 0);
    let m = cmd_simulate(&run).unwrap();
    assert!(m.frames.is_empty());
    let out = dir.path().join("out");
    let back: RunManifest = serde_json::from_str(&fs::read_to_string(out.join(MANIFEST)).unwrap()).unwrap();
    assert_eq!(back, m);
    assert_eq!(fs::read_dir(out.join("frames")).unwrap().count(), 0);
}

#[test]
fn simulate_records_frames_and_stats_recompute() {
    let dir = tempfile::tempdir().unwrap();
    let run = fast_workspace(dir.path(), 3);
    let text = fs::read_to_string(&run).unwrap();
    fs::write(&run, common::set_toml_line(&text, "dropout", "0.128")).unwrap();
    let m = cmd_simulate(&run).unwrap();
    assert_eq!(m.frames.len(), 3);
    let out = dir.path().join("out");
    let classes = ClassTable::default();
    let mut counts = Vec::new();
    let mut labeled: BTreeMap<String, usize> = BTreeMap::new();
    for (i, f) in m.frames.iter().enumerate() {
        assert_eq!(f.seed, frame_seed(m.master_seed, i));
        let frame = read_frame(&out.join(&f.dir)).unwrap();
        assert_eq!(frame.points.len(), f.points);
        assert!(f.points < f.points_before_dropout);
        assert_eq!(f.counters.emitted, f.points_before_dropout);
        assert_eq!(
            f.counters.beams,
            f.counters.sky + f.counters.rejected + f.counters.out_of_range + f.counters.below_threshold + f.counters.emitted
        );
        assert_eq!(frame.meta.config_hash, m.config_hash);
        assert_eq!(frame.meta.dropout, 0.128);
        counts.push(frame.points.len());
        for o in frame.obstacles.iter().filter(|o| o.obb.is_some()) {
            *labeled.entry(o.category.clone()).or_default() += 1;
        }
        for p in &frame.points {
            assert!(classes.name(augsim::cloud::ClassId(p.class)).is_some());
        }
    }
    let stats = cmd_stats(&out).unwrap();
    assert_eq!(stats.frames, 3);
    assert_eq!(stats.point_counts, counts);
    assert_eq!(stats.labeled, labeled);
    let mean = counts.iter().sum::<usize>() as f64 / 3.0;
    let var = counts.iter().map(|&c| (c as f64 - mean).powi(2)).sum::<f64>() / 2.0;
    assert!((stats.mean_points - mean).abs() < 1e-9);
    assert!((stats.std_points - var.sqrt()).abs() < 1e-9);
    assert_eq!(stats.histogram.iter().map(|b| b.2).sum::<usize>(), 3);
    assert!(stats.to_csv().starts_with("section,key,value\n"));
    // A single frame directory works too.
    assert_eq!(cmd_stats(&out.join(&m.frames[0].dir)).unwrap().frames, 1);
}

#[test]
fn stats_on_empty_dir_is_an_error() {
    let dir = tempfile::tempdir().unwrap();
    assert!(matches!(cmd_stats(dir.path()), Err(PipelineError::Validation(_))));
}

#[test]
fn invalid_config_writes_nothing() {
    let dir = tempfile::tempdir().unwrap();
    let run = fast_workspace(dir.path(), 1);
    let text = fs::read_to_string(&run).unwrap();
    for bad in [
        text.replace("[targets]", "[targets]\nspaceship = 1"),
        text.replace("maps = \"maps\"", "maps = \"nowhere\""),
        text.replace("version = 1", "version = 1\ncolour = 3"),
        common::set_toml_line(&text, "poses", "[[500.0, 500.0, 0.0]]"),
    ] {
        fs::write(&run, bad).unwrap();
        let e = cmd_simulate(&run).unwrap_err();
        assert_eq!(e.exit_code(), 2, "{e}");
        assert!(!dir.path().join("out").exists());
    }
}

#[test]
fn clean_background_counts_and_idempotence() {
    let dir = tempfile::tempdir().unwrap();
    augsim::demo::write_demo(dir.path(), &small_demo(), 1).unwrap();
    let raw = dir.path().join(DEMO_RAW);
    let stats = cmd_clean_background(&raw, &dir.path().join("a"), &Default::default()).unwrap();
    // Removed counts equal the movable labels of the input.
    let input = read_raw(&raw, None).unwrap().into_cloud();
    let mut want: BTreeMap<String, usize> = BTreeMap::new();
    for c in &input.labels {
        let info = input.classes.get(*c).unwrap();
        if info.movable {
            *want.entry(info.name.clone()).or_default() += 1;
        }
    }
    assert!(!want.is_empty());
    assert_eq!(stats.removed, want);
    cmd_clean_background(&raw, &dir.path().join("b"), &Default::default()).unwrap();
    for f in fs::read_dir(dir.path().join("a")).unwrap() {
        let name = f.unwrap().file_name();
        assert_eq!(
            fs::read(dir.path().join("a").join(&name)).unwrap(),
            fs::read(dir.path().join("b").join(&name)).unwrap(),
            "{name:?}"
        );
    }
}

#[test]
fn clean_background_requires_labels() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("plain.pcd");
    fs::write(
        &p,
        "VERSION .7\nFIELDS x y z\nSIZE 4 4 4\nTYPE F F F\nCOUNT 1 1 1\nWIDTH 1\nHEIGHT 1\nPOINTS 1\nDATA ascii\n1 2 3\n",
    )
    .unwrap();
    let e = cmd_clean_background(&p, &dir.path().join("out"), &Default::default()).unwrap_err();
    assert_eq!(e.exit_code(), 2);
    assert!(e.to_string().contains("label"));
    assert!(!dir.path().join("out").exists());
}

#[test]
fn build_map_per_category_and_empty_input() {
    let dir = tempfile::tempdir().unwrap();
    let scene = demo_scene(&small_demo());
    let ann = dir.path().join(DEMO_ANNOTATIONS);
    fs::write(&ann, augsim::demo::annotations_text(&scene.annotations)).unwrap();
    let files = cmd_build_map(&ann, &dir.path().join("maps"), &MapParams::default()).unwrap();
    let mut cats: Vec<String> = scene.annotations.iter().map(|a| a.category.clone()).collect();
    cats.sort();
    cats.dedup();
    let names: Vec<String> = files.iter().map(|f| f.file_stem().unwrap().to_string_lossy().into_owned()).collect();
    assert_eq!(names, cats);

    let empty = dir.path().join("empty.txt");
    fs::write(&empty, "# nothing\n").unwrap();
    let e = cmd_build_map(&empty, &dir.path().join("m2"), &MapParams::default()).unwrap_err();
    assert!(e.to_string().contains("no annotations"), "{e}");
    assert!(!dir.path().join("m2").exists());
}

#[test]
fn calibrate_from_csv() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("scan.csv");
    let mut csv = String::from("beam,x,y,z\n");
    let angles = [-10.0, -3.0, 1.5];
    for (b, a) in angles.iter().enumerate() {
        for k in 0..50 {
            let p = direction_from_angles(k as f64 * 7.2, *a) * (10.0 + k as f64);
            csv.push_str(&format!("{b},{},{},{}\n", p.x, p.y, p.z));
        }
    }
    fs::write(&input, csv).unwrap();
    let out = dir.path().join("table.csv");
    let t = cmd_calibrate(&input, &out).unwrap();
    for (got, want) in t.angles_deg.iter().zip(angles) {
        assert!((got - want).abs() < 1e-9);
    }
    assert_eq!(BeamTable::load(&out).unwrap(), t);
    fs::write(&input, "beam,x,y,z\n0,1,0,0\n").unwrap();
    assert_eq!(cmd_calibrate(&input, &dir.path().join("t2.csv")).unwrap_err().exit_code(), 2);
}
