//! Run configuration and the generate / oracle / evaluate / report stages.
//!
//! A generated trial directory holds `config.json` (the resolved run config),
//! `scene.json`, `annotations.json`, and `frames/<frame_id>{.png,_id.png}`.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::annotate::{annotate_frame, read_trial_json, write_trial_json, AnnotationRecord, FrameView, TrialAnnotations};
use crate::error::{Error, Result};
use crate::eval::{evaluate, ingest_predictions, oracle_detect, write_predictions, EvalConfig, EvalResults};
use crate::fsutil::{read_input, write_atomic};
use crate::geometry::{enumerate_sweep, validate_trial_name, FrameSpec, SweepConfig};
use crate::raster::{render, CameraIntrinsics};
use crate::report::{emit_report, ReportBundle};
use crate::scene::{build_target_with, build_terrain, IlluminationCondition, Pose, SceneSpec, SunCondition, VARIANT_COUNT};

pub const ANNOTATIONS_FILE: &str = "annotations.json";
pub const SCENE_FILE: &str = "scene.json";
pub const CONFIG_FILE: &str = "config.json";
pub const FRAMES_DIR: &str = "frames";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SceneConfig {
    pub seed: u64,
    pub pose: Pose,
    pub variant: u8,
    pub target_yaw_deg: f64,
    /// When false the target is rotationally symmetric about the vertical.
    pub chest_marker: bool,
    pub terrain_extent_m: f64,
    pub terrain_cell_m: f64,
    /// Replaces the built-in row of each listed condition.
    pub sun_table: Vec<IlluminationCondition>,
}

impl Default for SceneConfig {
    fn default() -> Self {
        SceneConfig {
            seed: 1,
            pose: Pose::Standing,
            variant: 0,
            target_yaw_deg: 0.0,
            chest_marker: true,
            terrain_extent_m: 512.0,
            terrain_cell_m: 2.0,
            sun_table: Vec::new(),
        }
    }
}

impl SceneConfig {
    pub fn validate(&self) -> Result<()> {
        if self.variant >= VARIANT_COUNT {
            return Err(Error::config("scene.variant", format!("must be below {VARIANT_COUNT}")));
        }
        if !self.target_yaw_deg.is_finite() {
            return Err(Error::config("scene.target_yaw_deg", "must be finite"));
        }
        if !(self.terrain_cell_m > 0.0 && self.terrain_cell_m.is_finite()) {
            return Err(Error::config("scene.terrain_cell_m", "must be > 0"));
        }
        if !(self.terrain_extent_m >= 2.0 * self.terrain_cell_m && self.terrain_extent_m.is_finite()) {
            return Err(Error::config("scene.terrain_extent_m", "must span at least two cells"));
        }
        let mut seen = BTreeMap::new();
        for row in &self.sun_table {
            row.validate()?;
            if seen.insert(row.name, ()).is_some() {
                return Err(Error::config(
                    "scene.sun_table",
                    format!("{} listed twice", row.name.name()),
                ));
            }
        }
        Ok(())
    }

    pub fn illumination(&self, sun: SunCondition) -> IlluminationCondition {
        self.sun_table
            .iter()
            .find(|r| r.name == sun)
            .copied()
            .unwrap_or_else(|| sun.default_illumination())
    }

    /// Terrain plus one target at the orbit center, lit by `sun`.
    pub fn build_scene(&self, sun: SunCondition) -> Result<SceneSpec> {
        let terrain = build_terrain(self.seed, self.terrain_extent_m, self.terrain_cell_m)?;
        let mut scene = SceneSpec::new(terrain, self.illumination(sun));
        let model = build_target_with(self.pose, self.variant, self.chest_marker)?;
        scene.place_target(&model, (0.0, 0.0), self.target_yaw_deg)?;
        Ok(scene)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub trial: String,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    pub sweep: SweepConfig,
    #[serde(default)]
    pub scene: SceneConfig,
    #[serde(default)]
    pub intrinsics: CameraIntrinsics,
    #[serde(default)]
    pub eval: EvalConfig,
    /// Render worker count; 0 uses every available core.
    #[serde(default)]
    pub workers: usize,
    #[serde(default)]
    pub write_depth: bool,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let bytes = read_input(path)?;
        let config: RunConfig = serde_json::from_slice(&bytes).map_err(|e| match Error::from_json(path, e) {
            Error::Schema { message, .. } => Error::config("config", message),
            other => other,
        })?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        validate_trial_name(&self.trial)?;
        self.sweep.validate()?;
        self.scene.validate()?;
        self.intrinsics.validate()?;
        self.eval.validate()
    }
}

pub fn resolve_workers(requested: usize) -> usize {
    if requested > 0 {
        requested
    } else {
        std::thread::available_parallelism().map_or(1, |n| n.get())
    }
}

/// Where rendered frames go, if anywhere.
#[derive(Debug, Clone)]
pub struct FrameSink {
    pub dir: PathBuf,
    pub write_depth: bool,
}

/// Renders and annotates every frame of the sweep over `workers` threads.
/// Output order and bytes do not depend on the worker count.
pub fn render_sweep(
    trial: &str,
    sweep: &SweepConfig,
    scene_config: &SceneConfig,
    intrinsics: &CameraIntrinsics,
    workers: usize,
    sink: Option<&FrameSink>,
) -> Result<(SceneSpec, TrialAnnotations)> {
    let base = scene_config.build_scene(sweep.sun_conditions[0])?;
    let mut sweep = sweep.clone();
    if sweep.look_at_height_m.is_none() {
        sweep.look_at_height_m = Some(base.targets[0].center_height());
    }
    let frames = enumerate_sweep(trial, &sweep)?;
    base.triangles();
    let scenes: BTreeMap<SunCondition, SceneSpec> = sweep
        .sun_conditions
        .iter()
        .map(|&s| (s, base.with_sun(scene_config.illumination(s))))
        .collect();

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(resolve_workers(workers))
        .build()
        .map_err(|e| Error::InvalidArgument(format!("worker pool: {e}")))?;
    let done = AtomicUsize::new(0);
    let total = frames.len();
    let step = (total / 10).max(1);
    let per_frame = |frame: &FrameSpec| -> Result<Vec<AnnotationRecord>> {
        let scene = &scenes[&frame.sun];
        let buffers = render(scene, &frame.camera, intrinsics);
        if let Some(sink) = sink {
            buffers.write(&sink.dir, &frame.frame_id, sink.write_depth)?;
        }
        let records = annotate_frame(frame, scene, &buffers.id_buffer())?;
        let n = done.fetch_add(1, Ordering::Relaxed) + 1;
        if n.is_multiple_of(step) || n == total {
            log::info!("{trial}: rendered {n}/{total} frames");
        }
        Ok(records)
    };
    let per_frame_records: Vec<Vec<AnnotationRecord>> =
        pool.install(|| frames.par_iter().map(per_frame).collect::<Result<_>>())?;

    let annotations = TrialAnnotations::new(
        trial,
        intrinsics.width_px,
        intrinsics.height_px,
        per_frame_records.into_iter().flatten().collect(),
    )
    .with_rendered_frames(frames.iter().map(FrameView::from).collect());
    Ok((base, annotations))
}

#[derive(Debug, Clone, PartialEq)]
pub struct GenerateSummary {
    pub trial_dir: PathBuf,
    pub frame_count: usize,
    pub record_count: usize,
}

fn json_bytes<T: Serialize>(value: &T) -> Vec<u8> {
    let mut out = serde_json::to_vec_pretty(value).expect("serializable");
    out.push(b'\n');
    out
}

/// Renders the configured trial into `out_dir` (or the config's `output_dir`).
pub fn generate(config: &RunConfig, out_dir: Option<&Path>, workers: Option<usize>) -> Result<GenerateSummary> {
    config.validate()?;
    let trial_dir = out_dir
        .map(Path::to_path_buf)
        .or_else(|| config.output_dir.clone())
        .ok_or_else(|| Error::config("output_dir", "not set in the config and no --out given"))?;
    let sink = FrameSink {
        dir: trial_dir.join(FRAMES_DIR),
        write_depth: config.write_depth,
    };
    let (scene, annotations) = render_sweep(
        &config.trial,
        &config.sweep,
        &config.scene,
        &config.intrinsics,
        workers.unwrap_or(config.workers),
        Some(&sink),
    )?;
    // the echoed config omits run-local settings so trees compare across runs
    let echo = RunConfig {
        output_dir: None,
        workers: 0,
        ..config.clone()
    };
    write_atomic(&trial_dir.join(CONFIG_FILE), &json_bytes(&echo))?;
    write_atomic(&trial_dir.join(SCENE_FILE), &json_bytes(&scene.to_document()))?;
    write_trial_json(&annotations, &trial_dir.join(ANNOTATIONS_FILE))?;
    Ok(GenerateSummary {
        trial_dir,
        frame_count: annotations.rendered_frames.len(),
        record_count: annotations.frames.len(),
    })
}

pub fn oracle_file(annotations_path: &Path, min_pixels: u64, out: &Path) -> Result<usize> {
    let annotations = read_trial_json(annotations_path)?;
    let preds = oracle_detect(&annotations.frames, min_pixels);
    write_predictions(&preds, out)?;
    Ok(preds.len())
}

pub fn evaluate_files(annotations_path: &Path, predictions_path: &Path, config: &EvalConfig, out: &Path) -> Result<EvalResults> {
    config.validate()?;
    let annotations = read_trial_json(annotations_path)?;
    let preds = ingest_predictions(predictions_path, Some(&annotations.known_frames()))?;
    let results = evaluate(&annotations, &preds, config)?;
    results.write(out)?;
    Ok(results)
}

pub fn report_file(results_path: &Path, out_dir: &Path) -> Result<ReportBundle> {
    emit_report(&EvalResults::read(results_path)?, out_dir)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny(trial: &str) -> RunConfig {
        RunConfig {
            trial: trial.into(),
            output_dir: None,
            sweep: SweepConfig {
                altitudes_m: vec![10.0],
                radii_m: vec![10.0],
                azimuth_start_deg: 0.0,
                azimuth_end_deg: 0.0,
                azimuth_step_deg: 2.0,
                sun_conditions: vec![SunCondition::Noon],
                look_at_height_m: None,
            },
            scene: SceneConfig {
                terrain_extent_m: 160.0,
                terrain_cell_m: 4.0,
                ..Default::default()
            },
            intrinsics: CameraIntrinsics {
                width_px: 128,
                height_px: 128,
                ..Default::default()
            },
            eval: EvalConfig::default(),
            workers: 1,
            write_depth: false,
        }
    }

    #[test]
    fn single_frame_trial() {
        let dir = tempfile::tempdir().unwrap();
        let s = generate(&tiny("t1"), Some(dir.path()), None).unwrap();
        assert_eq!(s.frame_count, 1);
        assert_eq!(s.record_count, 1);
        let frames = dir.path().join(FRAMES_DIR).join("t1/0");
        let mut names: Vec<_> = std::fs::read_dir(&frames)
            .unwrap()
            .map(|e| e.unwrap().file_name().into_string().unwrap())
            .collect();
        names.sort();
        assert_eq!(names, ["h010.00_r010.00_a000.00.png", "h010.00_r010.00_a000.00_id.png"]);
        let ann = read_trial_json(&dir.path().join(ANNOTATIONS_FILE)).unwrap();
        assert_eq!(ann.frames.len(), 1);
        assert!((ann.frames[0].look_at_height_m - 0.9).abs() < 1e-6);
    }

    #[test]
    fn config_rejects_unknown_keys_and_bad_fields() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.json");
        let mut v = serde_json::to_value(tiny("t")).unwrap();
        v["sweep"]["radius_m"] = serde_json::json!([5.0]);
        std::fs::write(&path, v.to_string()).unwrap();
        assert!(matches!(RunConfig::load(&path), Err(Error::InvalidConfig { .. })));

        let mut c = tiny("t");
        c.sweep.radii_m = vec![0.0];
        assert!(matches!(c.validate(), Err(Error::InvalidConfig { ref field, .. }) if field == "sweep.radii_m"));
        let mut c = tiny("t");
        c.scene.variant = 9;
        assert!(matches!(c.validate(), Err(Error::InvalidConfig { ref field, .. }) if field == "scene.variant"));
        assert!(generate(&tiny("t"), None, None).is_err());
    }

    #[test]
    fn sun_table_override() {
        let mut c = tiny("t").scene;
        let row = IlluminationCondition {
            name: SunCondition::Noon,
            sun_elevation_deg: 80.0,
            sun_azimuth_deg: 0.0,
            ambient_fraction: 0.5,
        };
        c.sun_table = vec![row];
        assert_eq!(c.illumination(SunCondition::Noon), row);
        assert_eq!(c.illumination(SunCondition::EarlyMorning), SunCondition::EarlyMorning.default_illumination());
        c.sun_table = vec![row, row];
        assert!(c.validate().is_err());
    }

    #[test]
    fn worker_count_does_not_change_annotations() {
        let mut c = tiny("w");
        c.sweep.azimuth_end_deg = 330.0;
        c.sweep.azimuth_step_deg = 30.0;
        c.sweep.altitudes_m = vec![5.0, 20.0];
        let (_, one) = render_sweep(&c.trial, &c.sweep, &c.scene, &c.intrinsics, 1, None).unwrap();
        let (_, eight) = render_sweep(&c.trial, &c.sweep, &c.scene, &c.intrinsics, 8, None).unwrap();
        assert_eq!(one.to_json_bytes(), eight.to_json_bytes());
        assert_eq!(one.rendered_frames.len(), 24);
    }
}
