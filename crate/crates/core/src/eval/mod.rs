//! Detector evaluation: IoU matching, AP/mAP surfaces over the sweep, angular
//! dependency, view regions, and degradation boundaries.

mod matching;
mod surface;

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::annotate::{AnnotationRecord, FrameView, TrialAnnotations};
use crate::error::{Error, Result};
use crate::fsutil::{read_input, write_atomic};
use crate::scene::SunCondition;

pub use matching::{average_precision, average_precision_with, iou, match_predictions, match_predictions_in, ApMethod, MatchResult};
pub use surface::{
    angular_histogram, bin_by_height_radius, bin_count, boundary_map, classify_region, AngularHistogram, ApGrid,
    BoundaryMap, EnvelopeRow, HistogramMode, Region,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PredictionRecord {
    pub frame_id: String,
    /// `[x_min, y_min, width, height]` in pixels.
    pub bbox: [f64; 4],
    pub score: f64,
    pub label: String,
}

impl PredictionRecord {
    fn check(&self) -> std::result::Result<(), String> {
        if self.frame_id.is_empty() {
            return Err("frame_id must not be empty".into());
        }
        if self.bbox.iter().any(|v| !v.is_finite()) {
            return Err(format!("bbox {:?} must be finite", self.bbox));
        }
        if !(self.bbox[2] > 0.0 && self.bbox[3] > 0.0) {
            return Err(format!("bbox extents {}x{} must be positive", self.bbox[2], self.bbox[3]));
        }
        if !(0.0..=1.0).contains(&self.score) {
            return Err(format!("score {} outside [0, 1]", self.score));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PredictionFile {
    pub predictions: Vec<PredictionRecord>,
}

/// Reads and validates a prediction file. When `known_frames` is given, every
/// record must reference one of them.
pub fn ingest_predictions(path: &Path, known_frames: Option<&BTreeSet<String>>) -> Result<Vec<PredictionRecord>> {
    let bytes = read_input(path)?;
    let file: PredictionFile = serde_json::from_slice(&bytes).map_err(|e| Error::from_json(path, e))?;
    for (i, p) in file.predictions.iter().enumerate() {
        p.check().map_err(|message| Error::Schema {
            path: path.to_path_buf(),
            record: Some(i),
            message,
        })?;
    }
    if let Some(known) = known_frames {
        let unknown: BTreeSet<&str> = file
            .predictions
            .iter()
            .map(|p| p.frame_id.as_str())
            .filter(|f| !known.contains(*f))
            .collect();
        if !unknown.is_empty() {
            return Err(Error::UnknownFrames(unknown.into_iter().map(str::to_owned).collect()));
        }
    }
    Ok(file.predictions)
}

pub fn write_predictions(preds: &[PredictionRecord], path: &Path) -> Result<()> {
    let file = PredictionFile {
        predictions: preds.to_vec(),
    };
    let mut bytes = serde_json::to_vec_pretty(&file).expect("predictions serialize");
    bytes.push(b'\n');
    write_atomic(path, &bytes)
}

/// Self-test detector: reports the ground-truth box of every annotation with
/// at least `min_pixels` mask pixels, scored `min(1, pixels / (4·min_pixels))`.
pub fn oracle_detect(annotations: &[AnnotationRecord], min_pixels: u64) -> Vec<PredictionRecord> {
    let min_pixels = min_pixels.max(1);
    annotations
        .iter()
        .filter(|a| a.pixel_count >= min_pixels)
        .map(|a| PredictionRecord {
            frame_id: a.frame_id.clone(),
            bbox: a.corner_box(),
            score: (a.pixel_count as f64 / (4.0 * min_pixels as f64)).min(1.0),
            label: a.object_label.clone(),
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalConfig {
    pub iou_threshold: f64,
    /// AP level below which a cell counts as degraded.
    pub tau: f64,
    /// Altitude split between low and high quadrants; midpoint of the sweep when unset.
    pub h_split: Option<f64>,
    /// Radius split between small and large quadrants; midpoint of the sweep when unset.
    pub r_split: Option<f64>,
    pub bin_width_deg: f64,
    pub ap_method: ApMethod,
    pub histogram_mode: HistogramMode,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            iou_threshold: 0.5,
            tau: 0.5,
            h_split: None,
            r_split: None,
            bin_width_deg: 10.0,
            ap_method: ApMethod::AllPoint,
            histogram_mode: HistogramMode::TruePositive,
        }
    }
}

impl EvalConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.iou_threshold > 0.0 && self.iou_threshold <= 1.0) {
            return Err(Error::config("eval.iou_threshold", "must lie in (0, 1]"));
        }
        if !(self.tau > 0.0 && self.tau < 1.0) {
            return Err(Error::config("eval.tau", "must lie in (0, 1)"));
        }
        if bin_count(self.bin_width_deg).is_err() {
            return Err(Error::config("eval.bin_width_deg", "must be positive and divide 360"));
        }
        for (field, v) in [("eval.h_split", self.h_split), ("eval.r_split", self.r_split)] {
            if v.is_some_and(|v| !v.is_finite()) {
                return Err(Error::config(field, "must be finite"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegionCell {
    pub altitude_m: f64,
    pub radius_m: f64,
    pub region: Region,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HistogramReport {
    /// `all`, `nadir`, `outside_nadir`, or a cell tag `h<h>_r<r>`.
    pub scope: String,
    pub histogram: AngularHistogram,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundaryReport {
    /// `all` or an illumination condition name.
    pub scope: String,
    pub boundary: BoundaryMap,
}

/// Everything `evaluate` produces, serialized as the results JSON.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalResults {
    pub trial: String,
    pub iou_threshold: f64,
    pub tau: f64,
    pub h_split: f64,
    pub r_split: f64,
    pub ap_method: ApMethod,
    pub histogram_mode: HistogramMode,
    pub ground_truth_count: usize,
    pub prediction_count: usize,
    pub true_positive_count: usize,
    /// The pooled grid first, then one per illumination condition present.
    pub grids: Vec<ApGrid>,
    pub map_by_illumination: BTreeMap<String, Option<f64>>,
    pub regions: Vec<RegionCell>,
    /// Mean AP of the pooled grid's defined cells within each region.
    pub map_by_region: BTreeMap<String, Option<f64>>,
    pub boundaries: Vec<BoundaryReport>,
    pub histograms: Vec<HistogramReport>,
}

impl EvalResults {
    pub fn to_json_bytes(&self) -> Vec<u8> {
        let mut out = serde_json::to_vec_pretty(self).expect("results serialize");
        out.push(b'\n');
        out
    }

    pub fn read(path: &Path) -> Result<Self> {
        let bytes = read_input(path)?;
        serde_json::from_slice(&bytes).map_err(|e| Error::from_json(path, e))
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        write_atomic(path, &self.to_json_bytes())
    }

    pub fn pooled_grid(&self) -> &ApGrid {
        &self.grids[0]
    }
}

pub fn cell_tag(altitude_m: f64, radius_m: f64) -> String {
    format!("h{altitude_m:06.2}_r{radius_m:06.2}")
}

fn midpoint(values: impl Iterator<Item = f64>) -> f64 {
    let (lo, hi) = values.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
    if lo.is_finite() {
        0.5 * (lo + hi)
    } else {
        0.0
    }
}

/// Full evaluation of one trial's predictions.
pub fn evaluate(annotations: &TrialAnnotations, preds: &[PredictionRecord], config: &EvalConfig) -> Result<EvalResults> {
    config.validate()?;
    let gts = &annotations.frames;
    let matched = match_predictions_in(preds, gts, &annotations.known_frames(), config.iou_threshold)?;

    let h_split = config
        .h_split
        .unwrap_or_else(|| midpoint(gts.iter().map(|a| a.camera_altitude_m)));
    let r_split = config.r_split.unwrap_or_else(|| midpoint(gts.iter().map(|a| a.radius_m)));

    let suns: BTreeSet<SunCondition> = gts.iter().map(|a| a.sun).collect();
    let mut grids = vec![bin_by_height_radius(gts, &annotations.rendered_frames, preds, &matched, None, config.ap_method)?];
    for &sun in &suns {
        grids.push(bin_by_height_radius(gts, &annotations.rendered_frames, preds, &matched, Some(sun), config.ap_method)?);
    }
    let map_by_illumination = grids
        .iter()
        .map(|g| (g.scope_name().to_string(), g.map_value))
        .collect();

    let pooled = &grids[0];
    let mut regions = Vec::new();
    let mut region_cells: BTreeMap<Region, Vec<Option<f64>>> = BTreeMap::new();
    for (i, &altitude_m) in pooled.altitudes_m.iter().enumerate() {
        for (j, &radius_m) in pooled.radii_m.iter().enumerate() {
            let region = classify_region(altitude_m, radius_m, h_split, r_split);
            regions.push(RegionCell {
                altitude_m,
                radius_m,
                region,
            });
            region_cells.entry(region).or_default().push(pooled.get(i, j));
        }
    }
    let map_by_region = Region::ALL
        .iter()
        .map(|r| {
            let v = region_cells.get(r).and_then(|c| surface::mean_defined(c.iter()));
            (r.name().to_string(), v)
        })
        .collect();

    let boundaries = grids
        .iter()
        .filter(|g| g.map_value.is_some())
        .map(|g| {
            Ok(BoundaryReport {
                scope: g.scope_name().to_string(),
                boundary: boundary_map(g, config.tau)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let rendered = &annotations.rendered_frames;
    let hist = |filter: &dyn Fn(&FrameView) -> bool| {
        angular_histogram(gts, rendered, preds, &matched, config.bin_width_deg, config.histogram_mode, filter)
    };
    let is_nadir = |a: &FrameView| {
        classify_region(a.camera_altitude_m, a.radius_m, h_split, r_split) == Region::NadirView
    };
    let mut histograms = vec![
        HistogramReport {
            scope: "all".into(),
            histogram: hist(&|_| true)?,
        },
        HistogramReport {
            scope: "nadir".into(),
            histogram: hist(&is_nadir)?,
        },
        HistogramReport {
            scope: "outside_nadir".into(),
            histogram: hist(&|a| !is_nadir(a))?,
        },
    ];
    for &h in &pooled.altitudes_m {
        for &r in &pooled.radii_m {
            histograms.push(HistogramReport {
                scope: cell_tag(h, r),
                histogram: hist(&|a| a.camera_altitude_m == h && a.radius_m == r)?,
            });
        }
    }

    Ok(EvalResults {
        trial: annotations.trial.clone(),
        iou_threshold: config.iou_threshold,
        tau: config.tau,
        h_split,
        r_split,
        ap_method: config.ap_method,
        histogram_mode: config.histogram_mode,
        ground_truth_count: gts.len(),
        prediction_count: preds.len(),
        true_positive_count: matched.true_positives(),
        grids,
        map_by_illumination,
        regions,
        map_by_region,
        boundaries,
        histograms,
    })
}
