//! Multi-beam scanner geometry, noise and the return-energy model, plus
//! per-beam calibration from real scans.

use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geom::{Point3, Vec3};

pub const CONFIG_VERSION: u32 = 1;

/// How the incidence angle enters the reflection term.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum IncidenceConvention {
    /// `R_ia = (1 − cos θ)^0.5` with θ measured from the surface normal.
    #[default]
    Literal,
    /// `R_ia = (cos θ)^0.5`: full return at normal incidence.
    Complementary,
}

/// Scanner description. Angles in degrees, lengths in meters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SensorConfig {
    pub version: u32,
    pub channels: usize,
    pub vertical_min_deg: f64,
    pub vertical_max_deg: f64,
    pub horizontal_fov_deg: f64,
    pub azimuth_step_deg: f64,
    pub max_range: f64,
    pub e_emit: f64,
    /// Atmospheric attenuation, 1/m.
    pub sigma_air: f64,
    pub energy_threshold: f64,
    pub incidence: IncidenceConvention,
    /// Standard deviation of the range noise.
    pub distance_sigma: f64,
    pub azimuth_sigma_deg: f64,
    /// Default per-beam elevation noise when no calibration table is given.
    pub vertical_sigma_deg: f64,
    /// Spread of the per-beam elevation offsets drawn when no calibration
    /// table is given. Zero keeps the ideal table.
    pub beam_offset_sigma_deg: f64,
    /// Calibration CSV (`beam,angle_deg,variance_deg2`), relative to the
    /// config file.
    pub beam_table: Option<PathBuf>,
}

impl Default for SensorConfig {
    /// 64-channel spinning scanner, −24.33° to +2°, 0.2° azimuth step.
    fn default() -> Self {
        Self {
            version: CONFIG_VERSION,
            channels: 64,
            vertical_min_deg: -24.33,
            vertical_max_deg: 2.0,
            horizontal_fov_deg: 360.0,
            azimuth_step_deg: 0.2,
            max_range: 120.0,
            e_emit: 1.0,
            sigma_air: 0.004,
            energy_threshold: DEFAULT_THRESHOLD,
            incidence: IncidenceConvention::Literal,
            distance_sigma: 0.005,
            azimuth_sigma_deg: 0.05,
            vertical_sigma_deg: 0.05,
            beam_offset_sigma_deg: 1.0,
            beam_table: None,
        }
    }
}

/// Drops a reflectivity-0.05 target seen 80° off its normal at 120 m under
/// the complementary convention: `0.05 · cos(80°)^0.5 · e^(−0.48) ≈ 0.0129`.
pub const DEFAULT_THRESHOLD: f64 = 0.013;

#[derive(Debug, Error)]
pub enum SensorError {
    #[error("invalid sensor config: {0}")]
    Config(String),
    #[error("{path}: {msg}")]
    File { path: PathBuf, msg: String },
    #[error("beam table: {0}")]
    Table(String),
    #[error("cone fit needs at least {MIN_CONE_POINTS} points, got {found}")]
    TooFewPoints { found: usize },
    #[error("cone fit: point {index} is at the scanner origin")]
    PointAtOrigin { index: usize },
}

impl SensorConfig {
    pub fn validate(&self) -> Result<(), SensorError> {
        let bad = |m: String| Err(SensorError::Config(m));
        if self.version != CONFIG_VERSION {
            return bad(format!("unsupported version {}, expected {CONFIG_VERSION}", self.version));
        }
        if self.channels == 0 {
            return bad("channels must be at least 1".into());
        }
        if !(self.vertical_min_deg < self.vertical_max_deg) && self.channels > 1 {
            return bad("vertical_min_deg must be below vertical_max_deg".into());
        }
        if !(self.azimuth_step_deg > 0.0) {
            return bad("azimuth_step_deg must be positive".into());
        }
        if !(self.horizontal_fov_deg > 0.0 && self.horizontal_fov_deg <= 360.0) {
            return bad("horizontal_fov_deg must be in (0, 360]".into());
        }
        if !(self.max_range > 0.0) {
            return bad("max_range must be positive".into());
        }
        for (name, v) in [
            ("e_emit", self.e_emit),
            ("sigma_air", self.sigma_air),
            ("energy_threshold", self.energy_threshold),
            ("distance_sigma", self.distance_sigma),
            ("azimuth_sigma_deg", self.azimuth_sigma_deg),
            ("vertical_sigma_deg", self.vertical_sigma_deg),
            ("beam_offset_sigma_deg", self.beam_offset_sigma_deg),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return bad(format!("{name} must be finite and non-negative, got {v}"));
            }
        }
        Ok(())
    }

    /// Parses and validates a TOML config. A relative `beam_table` path is
    /// resolved against `base`.
    pub fn from_toml(text: &str, base: Option<&Path>) -> Result<Self, SensorError> {
        let mut cfg: SensorConfig = toml::from_str(text).map_err(|e| SensorError::Config(e.to_string()))?;
        if let (Some(t), Some(b)) = (&cfg.beam_table, base) {
            if t.is_relative() {
                cfg.beam_table = Some(b.join(t));
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, SensorError> {
        let text = std::fs::read_to_string(path).map_err(|e| SensorError::File {
            path: path.into(),
            msg: e.to_string(),
        })?;
        Self::from_toml(&text, path.parent()).map_err(|e| match e {
            SensorError::Config(msg) => SensorError::File { path: path.into(), msg },
            e => e,
        })
    }

    pub fn azimuth_steps(&self) -> usize {
        (self.horizontal_fov_deg / self.azimuth_step_deg).round() as usize
    }

    /// Beams per frame: channels × azimuth steps.
    pub fn beam_count(&self) -> usize {
        self.channels * self.azimuth_steps()
    }

    pub fn energy_model(&self) -> EnergyModel {
        EnergyModel {
            e_emit: self.e_emit,
            sigma_air: self.sigma_air,
            threshold: self.energy_threshold,
            convention: self.incidence,
        }
    }
}

/// Per-beam elevation angles (degrees, strictly increasing) and elevation
/// noise variances (degrees²).
#[derive(Clone, Debug, PartialEq)]
pub struct BeamTable {
    pub angles_deg: Vec<f64>,
    pub variances_deg2: Vec<f64>,
}

#[derive(Debug, Serialize, Deserialize)]
struct TableRow {
    beam: usize,
    angle_deg: f64,
    variance_deg2: f64,
}

impl BeamTable {
    pub fn new(angles_deg: Vec<f64>, variances_deg2: Vec<f64>) -> Result<Self, SensorError> {
        if angles_deg.is_empty() || angles_deg.len() != variances_deg2.len() {
            return Err(SensorError::Table(format!(
                "{} angles and {} variances",
                angles_deg.len(),
                variances_deg2.len()
            )));
        }
        if let Some(i) = angles_deg.windows(2).position(|w| !(w[0] < w[1])) {
            return Err(SensorError::Table(format!("angles not strictly increasing at beam {}", i + 1)));
        }
        if variances_deg2.iter().any(|v| !(*v >= 0.0)) {
            return Err(SensorError::Table("negative variance".into()));
        }
        Ok(Self {
            angles_deg,
            variances_deg2,
        })
    }

    pub fn len(&self) -> usize {
        self.angles_deg.len()
    }

    pub fn is_empty(&self) -> bool {
        self.angles_deg.is_empty()
    }

    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        for (beam, (a, v)) in self.angles_deg.iter().zip(&self.variances_deg2).enumerate() {
            w.serialize(TableRow {
                beam,
                angle_deg: *a,
                variance_deg2: *v,
            })
            .expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("csv is UTF-8")
    }

    /// Rows may come in any beam order; they are sorted by angle.
    pub fn from_csv(text: &str) -> Result<Self, SensorError> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(text.as_bytes());
        let mut rows: Vec<TableRow> = Vec::new();
        for r in rdr.deserialize() {
            rows.push(r.map_err(|e| SensorError::Table(e.to_string()))?);
        }
        rows.sort_by(|a, b| a.angle_deg.total_cmp(&b.angle_deg));
        Self::new(
            rows.iter().map(|r| r.angle_deg).collect(),
            rows.iter().map(|r| r.variance_deg2).collect(),
        )
    }

    pub fn load(path: &Path) -> Result<Self, SensorError> {
        let text = std::fs::read_to_string(path).map_err(|e| SensorError::File {
            path: path.into(),
            msg: e.to_string(),
        })?;
        Self::from_csv(&text).map_err(|e| SensorError::File {
            path: path.into(),
            msg: e.to_string(),
        })
    }
}

/// Channel angles evenly spaced from the vertical minimum to the maximum,
/// both inclusive. A single channel sits at the minimum.
pub fn ideal_beam_table(config: &SensorConfig) -> BeamTable {
    let n = config.channels;
    let (lo, hi) = (config.vertical_min_deg, config.vertical_max_deg);
    let angles = (0..n)
        .map(|i| {
            if i + 1 == n && n > 1 {
                hi
            } else if n == 1 {
                lo
            } else {
                lo + (hi - lo) * i as f64 / (n - 1) as f64
            }
        })
        .collect();
    let var = config.vertical_sigma_deg.powi(2);
    BeamTable {
        angles_deg: angles,
        variances_deg2: vec![var; n],
    }
}

/// Ideal table with each angle offset by `N(0, sigma_deg)`. The result is
/// re-sorted so angles stay increasing.
pub fn perturbed_beam_table<R: Rng + ?Sized>(ideal: &BeamTable, sigma_deg: f64, rng: &mut R) -> BeamTable {
    let noise = Normal::new(0.0, sigma_deg).expect("non-negative sigma");
    let mut angles: Vec<f64> = ideal.angles_deg.iter().map(|a| a + noise.sample(rng)).collect();
    angles.sort_by(f64::total_cmp);
    BeamTable {
        angles_deg: angles,
        variances_deg2: ideal.variances_deg2.clone(),
    }
}

/// Return-energy parameters.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EnergyModel {
    pub e_emit: f64,
    pub sigma_air: f64,
    pub threshold: f64,
    pub convention: IncidenceConvention,
}

impl EnergyModel {
    /// `E_emit · R_rel · R_ia(θ) · exp(−σ_air · D)`.
    pub fn return_energy(&self, r_rel: f64, theta: f64, distance: f64) -> f64 {
        let r_ia = match self.convention {
            IncidenceConvention::Literal => (1.0 - theta.cos()).max(0.0).sqrt(),
            IncidenceConvention::Complementary => theta.cos().max(0.0).sqrt(),
        };
        self.e_emit * r_rel * r_ia * (-self.sigma_air * distance).exp()
    }

    pub fn detected(&self, energy: f64) -> bool {
        energy >= self.threshold
    }
}

pub fn return_energy(model: &EnergyModel, r_rel: f64, theta: f64, distance: f64) -> f64 {
    model.return_energy(r_rel, theta, distance)
}

/// Angle in `[0, π/2]` between the reversed beam and the surface normal;
/// the normal's sign is irrelevant.
pub fn incidence_angle(beam: &Vec3, normal: &Vec3) -> f64 {
    let c = (beam.dot(normal).abs() / (beam.norm() * normal.norm())).min(1.0);
    c.acos()
}

pub const MIN_CONE_POINTS: usize = 10;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ConeFit {
    pub angle_deg: f64,
    /// Sample variance of the elevations (n − 1 denominator), degrees².
    pub variance_deg2: f64,
}

/// Fits a cone with its apex at the origin to one beam's points: the angle is
/// the mean elevation `asin(z/‖p‖)`, the variance their sample variance.
pub fn fit_beam_cone(points: &[Point3]) -> Result<ConeFit, SensorError> {
    if points.len() < MIN_CONE_POINTS {
        return Err(SensorError::TooFewPoints { found: points.len() });
    }
    let mut elev = Vec::with_capacity(points.len());
    for (index, p) in points.iter().enumerate() {
        let r = p.coords.norm();
        if r == 0.0 {
            return Err(SensorError::PointAtOrigin { index });
        }
        elev.push((p.z / r).clamp(-1.0, 1.0).asin().to_degrees());
    }
    let n = elev.len() as f64;
    let mean = elev.iter().sum::<f64>() / n;
    let var = elev.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / (n - 1.0);
    Ok(ConeFit {
        angle_deg: mean,
        variance_deg2: var,
    })
}

/// Fits every beam in a labeled scan (label = beam index) and returns the
/// table sorted by angle, with the original beam indices.
pub fn calibrate_beams(points: &[Point3], beams: &[u32]) -> Result<(BeamTable, Vec<u32>), SensorError> {
    let mut groups: std::collections::BTreeMap<u32, Vec<Point3>> = Default::default();
    for (p, b) in points.iter().zip(beams) {
        groups.entry(*b).or_default().push(*p);
    }
    let mut fits = Vec::with_capacity(groups.len());
    for (b, pts) in &groups {
        let f = fit_beam_cone(pts).map_err(|e| SensorError::Table(format!("beam {b}: {e}")))?;
        fits.push((*b, f));
    }
    fits.sort_by(|a, b| a.1.angle_deg.total_cmp(&b.1.angle_deg));
    let table = BeamTable::new(
        fits.iter().map(|f| f.1.angle_deg).collect(),
        fits.iter().map(|f| f.1.variance_deg2).collect(),
    )?;
    Ok((table, fits.iter().map(|f| f.0).collect()))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BeamDirection {
    pub beam: u32,
    pub azimuth: u32,
    pub dir: Vec3,
}

/// Unit vector at `azimuth` from +x toward +y and `elevation` above the
/// horizon, both in degrees.
pub fn direction_from_angles(azimuth_deg: f64, elevation_deg: f64) -> Vec3 {
    let (sa, ca) = azimuth_deg.to_radians().sin_cos();
    let (se, ce) = elevation_deg.to_radians().sin_cos();
    Vec3::new(ce * ca, ce * sa, se)
}

/// One frame's beams, azimuth-major: for each azimuth step every channel
/// fires once. Each beam's elevation and azimuth get independent Gaussian
/// noise; the stream is a pure function of the inputs and `seed`.
pub fn generate_beam_directions(table: &BeamTable, config: &SensorConfig, seed: u64) -> Vec<BeamDirection> {
    let steps = config.azimuth_steps();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let az_noise = Normal::new(0.0, config.azimuth_sigma_deg).expect("validated sigma");
    let el_noise: Vec<Normal<f64>> = table
        .variances_deg2
        .iter()
        .map(|v| Normal::new(0.0, v.sqrt()).expect("validated variance"))
        .collect();
    let mut out = Vec::with_capacity(steps * table.len());
    for a in 0..steps {
        let nominal = a as f64 * config.azimuth_step_deg;
        for (b, angle) in table.angles_deg.iter().enumerate() {
            let az = nominal + az_noise.sample(&mut rng);
            let el = angle + el_noise[b].sample(&mut rng);
            out.push(BeamDirection {
                beam: b as u32,
                azimuth: a as u32,
                dir: direction_from_angles(az, el),
            });
        }
    }
    out
}

/// A configured scanner instance: config, beam table and energy model.
#[derive(Clone, Debug, PartialEq)]
pub struct SensorModel {
    pub config: SensorConfig,
    pub table: BeamTable,
    pub energy: EnergyModel,
}

impl SensorModel {
    /// Uses the calibration table when the config names one; otherwise the
    /// ideal table perturbed once with `beam_offset_sigma_deg` from `seed`.
    pub fn new(config: SensorConfig, seed: u64) -> Result<Self, SensorError> {
        config.validate()?;
        let table = match &config.beam_table {
            Some(path) => BeamTable::load(path)?,
            None => {
                let ideal = ideal_beam_table(&config);
                if config.beam_offset_sigma_deg > 0.0 {
                    perturbed_beam_table(&ideal, config.beam_offset_sigma_deg, &mut ChaCha8Rng::seed_from_u64(seed))
                } else {
                    ideal
                }
            }
        };
        if table.len() != config.channels {
            return Err(SensorError::Table(format!(
                "table has {} beams but the config has {} channels",
                table.len(),
                config.channels
            )));
        }
        let energy = config.energy_model();
        Ok(Self { config, table, energy })
    }

    /// Sensor with the unperturbed ideal table; noise settings are kept.
    pub fn ideal(config: SensorConfig) -> Result<Self, SensorError> {
        Self::new(
            SensorConfig {
                beam_offset_sigma_deg: 0.0,
                beam_table: None,
                ..config
            },
            0,
        )
    }

    pub fn beams(&self, seed: u64) -> Vec<BeamDirection> {
        generate_beam_directions(&self.table, &self.config, seed)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::FRAC_PI_2;

    fn model() -> EnergyModel {
        SensorConfig::default().energy_model()
    }

    #[test]
    fn energy_examples() {
        let m = model();
        assert!((m.return_energy(1.0, FRAC_PI_2, 0.0) - 1.0).abs() < 1e-15);
        assert!((m.return_energy(1.0, FRAC_PI_2, 100.0) - 0.670320046035639).abs() < 1e-12);
        assert_eq!(m.return_energy(1.0, 0.0, 10.0), 0.0);
        let c = EnergyModel {
            convention: IncidenceConvention::Complementary,
            ..m
        };
        assert_eq!(c.return_energy(1.0, 0.0, 0.0), 1.0);
        assert!(c.return_energy(1.0, FRAC_PI_2, 0.0) < 1e-7);
    }

    #[test]
    fn default_threshold_drops_dark_grazing_target() {
        let c = EnergyModel {
            convention: IncidenceConvention::Complementary,
            ..model()
        };
        let e = c.return_energy(0.05, 80f64.to_radians(), 120.0);
        assert!(!c.detected(e));
        assert!(c.detected(c.return_energy(0.05, 70f64.to_radians(), 120.0)));
    }

    #[test]
    fn incidence_angle_range() {
        let d = Vec3::new(1.0, 0.0, 0.0);
        assert!(incidence_angle(&d, &Vec3::new(-1.0, 0.0, 0.0)).abs() < 1e-12);
        assert!(incidence_angle(&d, &Vec3::new(1.0, 0.0, 0.0)).abs() < 1e-12);
        assert!((incidence_angle(&d, &Vec3::new(0.0, 0.0, 1.0)) - FRAC_PI_2).abs() < 1e-12);
    }

    #[test]
    fn ideal_table_endpoints() {
        let t = ideal_beam_table(&SensorConfig::default());
        assert_eq!(t.len(), 64);
        assert_eq!(t.angles_deg[0], -24.33);
        assert_eq!(t.angles_deg[63], 2.0);
        for w in t.angles_deg.windows(2) {
            assert!((w[1] - w[0] - 26.33 / 63.0).abs() < 1e-12);
        }
        let one = ideal_beam_table(&SensorConfig {
            channels: 1,
            ..Default::default()
        });
        assert_eq!(one.angles_deg, vec![-24.33]);
    }

    #[test]
    fn perturbed_table_stays_sorted() {
        let ideal = ideal_beam_table(&SensorConfig::default());
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let t = perturbed_beam_table(&ideal, 1.0, &mut rng);
        assert!(BeamTable::new(t.angles_deg.clone(), t.variances_deg2.clone()).is_ok());
        assert_ne!(t, ideal);
    }

    #[test]
    fn config_toml() {
        let c = SensorConfig::from_toml("version = 1\nchannels = 32\nazimuth_step_deg = 0.4\n", None).unwrap();
        assert_eq!(c.channels, 32);
        assert_eq!(c.beam_count(), 32 * 900);
        assert!(SensorConfig::from_toml("version = 1\nchanels = 32\n", None).is_err());
        assert!(SensorConfig::from_toml("version = 2\n", None).is_err());
        assert!(SensorConfig::from_toml("version = 1\nazimuth_step_deg = 0\n", None).is_err());
        let round = toml::to_string(&SensorConfig::default()).unwrap();
        assert_eq!(SensorConfig::from_toml(&round, None).unwrap(), SensorConfig::default());
    }

    #[test]
    fn table_csv_roundtrip() {
        let t = ideal_beam_table(&SensorConfig::default());
        let back = BeamTable::from_csv(&t.to_csv()).unwrap();
        assert_eq!(back, t);
        assert!(BeamTable::from_csv("beam,angle_deg,variance_deg2\n0,1,0\n1,1,0\n").is_err());
    }

    #[test]
    fn cone_fit_noiseless() {
        let pts: Vec<Point3> = (0..100)
            .map(|i| Point3::from(direction_from_angles(i as f64 * 3.6, 5.0) * (5.0 + i as f64 * 0.3)))
            .collect();
        let f = fit_beam_cone(&pts).unwrap();
        assert!((f.angle_deg - 5.0).abs() < 1e-9);
        assert!(f.variance_deg2 < 1e-18);
        assert!(matches!(fit_beam_cone(&pts[..5]), Err(SensorError::TooFewPoints { found: 5 })));
    }

    #[test]
    fn cone_fit_noisy() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let noise = Normal::new(0.0, 0.05).unwrap();
        let pts: Vec<Point3> = (0..10_000)
            .map(|_| {
                let az = rng.random_range(0.0..360.0);
                let r = rng.random_range(2.0..80.0);
                Point3::from(direction_from_angles(az, -7.0 + noise.sample(&mut rng)) * r)
            })
            .collect();
        let f = fit_beam_cone(&pts).unwrap();
        assert!((f.angle_deg + 7.0).abs() < 0.005);
        assert!((f.variance_deg2.sqrt() / 0.05 - 1.0).abs() < 0.15);
    }

    #[test]
    fn direction_stream() {
        let cfg = SensorConfig::default();
        let t = ideal_beam_table(&cfg);
        let a = generate_beam_directions(&t, &cfg, 3);
        assert_eq!(a.len(), 115_200);
        assert_eq!(a, generate_beam_directions(&t, &cfg, 3));
        assert_ne!(a, generate_beam_directions(&t, &cfg, 4));
        let quiet = SensorConfig {
            azimuth_sigma_deg: 0.0,
            vertical_sigma_deg: 0.0,
            ..cfg
        };
        let t = ideal_beam_table(&quiet);
        for d in generate_beam_directions(&t, &quiet, 3).iter().step_by(997) {
            let want = direction_from_angles(d.azimuth as f64 * 0.2, t.angles_deg[d.beam as usize]);
            assert_eq!(d.dir, want);
        }
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn energy_monotone(r in 0.0..=1.0f64, t1 in 0.0..=FRAC_PI_2, t2 in 0.0..=FRAC_PI_2,
                               d1 in 0.0..500.0f64, d2 in 0.0..500.0f64) {
                let m = model();
                let (tl, th) = if t1 <= t2 { (t1, t2) } else { (t2, t1) };
                let (dl, dh) = if d1 <= d2 { (d1, d2) } else { (d2, d1) };
                prop_assert!(m.return_energy(r, th, dl) >= m.return_energy(r, tl, dl));
                prop_assert!(m.return_energy(r, tl, dh) <= m.return_energy(r, tl, dl));
                prop_assert!(m.return_energy(r, th, dl) <= m.return_energy(1.0, th, dl));
            }

            #[test]
            fn stream_length(ch in 1usize..80, step in 0.05..5.0f64, fov in 1.0..=360.0f64) {
                let cfg = SensorConfig {
                    channels: ch,
                    azimuth_step_deg: step,
                    horizontal_fov_deg: fov,
                    vertical_max_deg: 10.0,
                    ..Default::default()
                };
                let t = ideal_beam_table(&cfg);
                prop_assert!(t.angles_deg.windows(2).all(|w| w[0] < w[1]));
                let n = generate_beam_directions(&t, &cfg, 1).len();
                prop_assert_eq!(n, ch * (fov / step).round() as usize);
            }
        }
    }
}
