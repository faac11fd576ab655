//! Camera orbit geometry and sweep enumeration.
//!
//! World frame is right-handed and z-up with the orbit center at the origin
//! and the ground at z = 0. Azimuth is measured counterclockwise from +x.
//! Camera frames follow the usual graphics convention: the camera looks
//! along its own −z axis and +y is image-up, so roll is always zero.

use std::collections::HashSet;

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scene::SunCondition;

pub type Vec3 = Vector3<f64>;

/// Threshold below which a view direction counts as parallel to the up hint.
const PARALLEL_EPS: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CameraPose {
    pub position: Vec3,
    /// Camera-to-world rotation. Columns are the camera x, y and z axes in world coordinates.
    pub rotation: Matrix3<f64>,
}

impl CameraPose {
    /// Unit vector along which the camera looks (the camera −z axis in world coordinates).
    pub fn optical_axis(&self) -> Vec3 {
        -self.rotation.column(2).into_owned()
    }

    pub fn right(&self) -> Vec3 {
        self.rotation.column(0).into_owned()
    }

    pub fn up(&self) -> Vec3 {
        self.rotation.column(1).into_owned()
    }

    /// Expresses a world point in the camera frame.
    pub fn world_to_camera(&self, p: &Vec3) -> Vec3 {
        self.rotation.transpose() * (p - self.position)
    }
}

/// Builds a camera-to-world rotation whose −z axis points from `eye` to `target`
/// and whose +x axis is perpendicular to `up_hint`.
pub fn look_at(eye: &Vec3, target: &Vec3, up_hint: &Vec3) -> Result<Matrix3<f64>> {
    let view = target - eye;
    let len = view.norm();
    if len <= PARALLEL_EPS {
        return Err(Error::DegenerateLookAt(format!(
            "eye and target coincide (|target - eye| = {len:e})"
        )));
    }
    let forward = view / len;
    let up_len = up_hint.norm();
    if up_len <= PARALLEL_EPS {
        return Err(Error::DegenerateLookAt("up hint has zero length".into()));
    }
    let right = forward.cross(&(up_hint / up_len));
    let right_len = right.norm();
    if right_len <= PARALLEL_EPS {
        return Err(Error::DegenerateLookAt(
            "view direction is parallel to the up hint".into(),
        ));
    }
    let right = right / right_len;
    let up = right.cross(&forward);
    Ok(Matrix3::from_columns(&[right, up, -forward]))
}

/// Pose of a camera on a circular orbit of `radius_m` around `center`, at
/// `altitude_m` above it, looking at the point `look_at_height_m` above the center.
pub fn orbit_pose(
    center: &Vec3,
    radius_m: f64,
    altitude_m: f64,
    azimuth_deg: f64,
    look_at_height_m: f64,
) -> Result<CameraPose> {
    if !(radius_m > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "orbit radius must be positive, got {radius_m}"
        )));
    }
    let phi = azimuth_deg.to_radians();
    let position = center + Vec3::new(radius_m * phi.cos(), radius_m * phi.sin(), altitude_m);
    let target = center + Vec3::new(0.0, 0.0, look_at_height_m);
    let rotation = look_at(&position, &target, &Vec3::z())?;
    Ok(CameraPose { position, rotation })
}

/// Pitch angle (degrees, positive when looking down) and line-of-sight distance
/// from a camera at (`radius_m`, `altitude_m`) to the look-at point.
pub fn pitch_and_distance(radius_m: f64, altitude_m: f64, look_at_height_m: f64) -> (f64, f64) {
    let dz = altitude_m - look_at_height_m;
    (dz.atan2(radius_m).to_degrees(), radius_m.hypot(dz))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub altitudes_m: Vec<f64>,
    pub radii_m: Vec<f64>,
    #[serde(default)]
    pub azimuth_start_deg: f64,
    #[serde(default = "default_azimuth_end")]
    pub azimuth_end_deg: f64,
    #[serde(default = "default_azimuth_step")]
    pub azimuth_step_deg: f64,
    pub sun_conditions: Vec<SunCondition>,
    /// Look-at height above the orbit center. `None` means "use the target's
    /// bounding-box center", which the pipeline resolves before enumeration;
    /// [`enumerate_sweep`] treats an unresolved value as ground level.
    #[serde(default)]
    pub look_at_height_m: Option<f64>,
}

fn default_azimuth_end() -> f64 {
    358.0
}

fn default_azimuth_step() -> f64 {
    2.0
}

impl SweepConfig {
    /// Altitudes 5–50 m and radii 5–30 m in 5 m steps, a full orbit every 2°,
    /// under all four sun conditions.
    pub fn paper_trial() -> Self {
        SweepConfig {
            altitudes_m: (1..=10).map(|i| 5.0 * i as f64).collect(),
            radii_m: (1..=6).map(|i| 5.0 * i as f64).collect(),
            azimuth_start_deg: 0.0,
            azimuth_end_deg: 358.0,
            azimuth_step_deg: 2.0,
            sun_conditions: SunCondition::ALL.to_vec(),
            look_at_height_m: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        check_axis("sweep.altitudes_m", &self.altitudes_m, |h| h >= 0.0, "must be >= 0")?;
        check_axis("sweep.radii_m", &self.radii_m, |r| r > 0.0, "must be > 0")?;
        if !(self.azimuth_step_deg > 0.0) {
            return Err(Error::config("sweep.azimuth_step_deg", "must be > 0"));
        }
        if !(0.0..360.0).contains(&self.azimuth_start_deg) {
            return Err(Error::config("sweep.azimuth_start_deg", "must lie in [0, 360)"));
        }
        if !(self.azimuth_start_deg..360.0).contains(&self.azimuth_end_deg) {
            return Err(Error::config(
                "sweep.azimuth_end_deg",
                "must lie in [azimuth_start_deg, 360)",
            ));
        }
        if self.sun_conditions.is_empty() {
            return Err(Error::config("sweep.sun_conditions", "must not be empty"));
        }
        let mut seen = HashSet::new();
        if !self.sun_conditions.iter().all(|s| seen.insert(*s)) {
            return Err(Error::config("sweep.sun_conditions", "contains duplicates"));
        }
        if let Some(z) = self.look_at_height_m {
            if !z.is_finite() {
                return Err(Error::config("sweep.look_at_height_m", "must be finite"));
            }
        }
        Ok(())
    }

    /// Azimuths from start to end inclusive.
    pub fn azimuths_deg(&self) -> Vec<f64> {
        let span = self.azimuth_end_deg - self.azimuth_start_deg;
        let n = (span / self.azimuth_step_deg + 1e-9).floor() as usize + 1;
        (0..n)
            .map(|k| self.azimuth_start_deg + k as f64 * self.azimuth_step_deg)
            .collect()
    }

    pub fn frame_count(&self) -> usize {
        self.altitudes_m.len() * self.radii_m.len() * self.azimuths_deg().len() * self.sun_conditions.len()
    }
}

fn check_axis(field: &str, values: &[f64], ok: impl Fn(f64) -> bool, rule: &str) -> Result<()> {
    if values.is_empty() {
        return Err(Error::config(field, "must not be empty"));
    }
    if let Some(v) = values.iter().find(|v| !v.is_finite() || !ok(**v)) {
        return Err(Error::config(field, format!("value {v} {rule}")));
    }
    if values.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::config(field, "must be strictly increasing"));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameSpec {
    pub frame_id: String,
    pub altitude_m: f64,
    pub radius_m: f64,
    pub azimuth_deg: f64,
    pub sun: SunCondition,
    pub sun_index: usize,
    pub look_at_height_m: f64,
    pub pitch_deg: f64,
    pub distance_m: f64,
    pub camera: CameraPose,
}

/// `<trial>/<sun-index>/h<h>_r<r>_a<azimuth>`, zero padded so ids sort in sweep order.
pub fn frame_id(trial: &str, sun_index: usize, altitude_m: f64, radius_m: f64, azimuth_deg: f64) -> String {
    format!("{trial}/{sun_index}/h{altitude_m:06.2}_r{radius_m:06.2}_a{azimuth_deg:06.2}")
}

pub fn validate_trial_name(trial: &str) -> Result<()> {
    let ok = !trial.is_empty()
        && !trial.starts_with('.')
        && trial
            .chars()
            .all(|c| c.is_ascii_alphanumeric() || matches!(c, '_' | '-' | '.'));
    if ok {
        Ok(())
    } else {
        Err(Error::config(
            "trial",
            format!("`{trial}` must be non-empty and use only [A-Za-z0-9_.-]"),
        ))
    }
}

/// Enumerates the full Cartesian sweep: sun outermost, then altitude, radius,
/// and azimuth innermost. The orbit center is the world origin.
pub fn enumerate_sweep(trial: &str, config: &SweepConfig) -> Result<Vec<FrameSpec>> {
    validate_trial_name(trial)?;
    config.validate()?;
    let z_c = config.look_at_height_m.unwrap_or(0.0);
    let azimuths = config.azimuths_deg();
    // distinct id tokens per axis make every frame id distinct
    let tokens = |field: &str, values: &[f64], prefix: char| -> Result<Vec<String>> {
        let out: Vec<String> = values.iter().map(|v| format!("{prefix}{v:06.2}")).collect();
        if out.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::config(field, "values too close together: frame ids would repeat"));
        }
        Ok(out)
    };
    let h_tokens = tokens("sweep.altitudes_m", &config.altitudes_m, 'h')?;
    let r_tokens = tokens("sweep.radii_m", &config.radii_m, 'r')?;
    let a_tokens = tokens("sweep.azimuth_step_deg", &azimuths, 'a')?;

    let center = Vec3::zeros();
    let mut poses = Vec::with_capacity(config.altitudes_m.len() * config.radii_m.len() * azimuths.len());
    for &h in &config.altitudes_m {
        for &r in &config.radii_m {
            for &a in &azimuths {
                poses.push(orbit_pose(&center, r, h, a, z_c)?);
            }
        }
    }

    let mut frames = Vec::with_capacity(config.frame_count());
    for (sun_index, &sun) in config.sun_conditions.iter().enumerate() {
        let mut pose = poses.iter();
        let prefix = format!("{trial}/{sun_index}/");
        for (&h, h_tok) in config.altitudes_m.iter().zip(&h_tokens) {
            for (&r, r_tok) in config.radii_m.iter().zip(&r_tokens) {
                let (pitch_deg, distance_m) = pitch_and_distance(r, h, z_c);
                for (&a, a_tok) in azimuths.iter().zip(&a_tokens) {
                    let mut id = String::with_capacity(prefix.len() + 24);
                    id.push_str(&prefix);
                    id.push_str(h_tok);
                    id.push('_');
                    id.push_str(r_tok);
                    id.push('_');
                    id.push_str(a_tok);
                    frames.push(FrameSpec {
                        frame_id: id,
                        altitude_m: h,
                        radius_m: r,
                        azimuth_deg: a,
                        sun,
                        sun_index,
                        look_at_height_m: z_c,
                        pitch_deg,
                        distance_m,
                        camera: pose.next().expect("one pose per cell and azimuth").clone(),
                    });
                }
            }
        }
    }
    Ok(frames)
}
