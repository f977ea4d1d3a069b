//! Test oracles shared by integration tests.
#![allow(dead_code)]

use augsim::geom::{Point3, Vec3};
use augsim::render::{direction_to_face_pixel, pixel_half_angle};

/// Nearest hit of a ray from the origin against a triangle soup, by plane
/// intersection and same-side edge tests. `None` = miss.
pub fn brute_force_range(tris: &[[Point3; 3]], d: &Vec3) -> Option<f64> {
    let mut best: Option<f64> = None;
    for t in tris {
        let [a, b, c] = t.map(|p| p.coords);
        let n = (b - a).cross(&(c - a));
        let nd = n.dot(d);
        if nd.abs() < 1e-15 {
            continue;
        }
        let s = n.dot(&a) / nd;
        if s <= 0.0 {
            continue;
        }
        let p = d * s;
        let inside = [(a, b), (b, c), (c, a)]
            .iter()
            .all(|(u, v)| (v - u).cross(&(p - u)).dot(&n) >= -1e-12 * n.norm_squared());
        if inside && best.is_none_or(|r| s < r) {
            best = Some(s);
        }
    }
    best
}

/// Directions on two rings around `d` at half and full `angle`, plus `d`.
pub fn cone_samples(d: &Vec3, angle: f64) -> Vec<Vec3> {
    let d = d.normalize();
    let helper = if d.x.abs() < 0.9 { Vec3::x() } else { Vec3::y() };
    let e1 = d.cross(&helper).normalize();
    let e2 = d.cross(&e1);
    let mut out = vec![d];
    for ring in [0.5, 1.0] {
        let a = angle * ring;
        for k in 0..16 {
            let phi = k as f64 * std::f64::consts::TAU / 16.0;
            out.push((d * a.cos() + (e1 * phi.cos() + e2 * phi.sin()) * a.sin()).normalize());
        }
    }
    out
}

/// Whether a looked-up range agrees with the brute-force scene within the
/// half-pixel cone of `d` at `resolution`: either it matches the exact hit
/// along `d` to 1e-6 relative, or some ray in the cone sees the same thing
/// (a miss, or a range between two sampled ranges).
pub fn agrees_within_pixel(tris: &[[Point3; 3]], d: &Vec3, looked_up: Option<f64>, resolution: usize) -> bool {
    let exact = brute_force_range(tris, d);
    match (exact, looked_up) {
        (None, None) => return true,
        (Some(e), Some(l)) if (e - l).abs() <= 1e-6 * e => return true,
        _ => {}
    }
    let fp = direction_to_face_pixel(d, resolution).unwrap();
    let angle = pixel_half_angle(fp.face, fp.px, fp.py, resolution);
    let ranges: Vec<Option<f64>> = cone_samples(d, angle).iter().map(|w| brute_force_range(tris, w)).collect();
    match looked_up {
        None => ranges.iter().any(|r| r.is_none()),
        Some(l) => {
            let hits: Vec<f64> = ranges.iter().flatten().copied().collect();
            if hits.is_empty() {
                return false;
            }
            let lo = hits.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = hits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            l >= lo * (1.0 - 1e-6) && l <= hi * (1.0 + 1e-6)
        }
    }
}

/// Small demo workspace in `dir`, cleaned and mapped, ready for `simulate`.
/// Returns the run config path.
pub fn demo_workspace(dir: &std::path::Path, params: &augsim::demo::DemoParams, frames: usize) -> std::path::PathBuf {
    use augsim::pipeline::{cmd_build_map, cmd_clean_background, MapParams};
    let run = augsim::demo::write_demo(dir, params, frames).unwrap();
    cmd_clean_background(
        &dir.join(augsim::demo::DEMO_RAW),
        &dir.join("scene"),
        &augsim::background::CleanParams::default(),
    )
    .unwrap();
    cmd_build_map(&dir.join(augsim::demo::DEMO_ANNOTATIONS), &dir.join("maps"), &MapParams::default()).unwrap();
    run
}

/// Replaces `key = ...` lines of a flat TOML document.
pub fn set_toml_line(text: &str, key: &str, value: &str) -> String {
    let prefix = format!("{key} =");
    let mut found = false;
    let out: Vec<String> = text
        .lines()
        .map(|l| {
            if l.starts_with(&prefix) {
                found = true;
                format!("{key} = {value}")
            } else {
                l.to_string()
            }
        })
        .collect();
    assert!(found, "{key} not in config");
    out.join("\n") + "\n"
}
