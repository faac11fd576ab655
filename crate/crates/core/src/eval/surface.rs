//! Binned evaluation surfaces: AP grids over (altitude, radius), angular
//! histograms, quadrant regions, and sub-threshold boundaries.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::annotate::{AnnotationRecord, FrameView};
use crate::error::{Error, Result};
use crate::eval::matching::{average_precision_with, ApMethod, MatchResult};
use crate::eval::PredictionRecord;
use crate::scene::SunCondition;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ApGrid {
    /// Illumination condition the grid was filtered to; `None` pools all.
    pub sun: Option<SunCondition>,
    pub altitudes_m: Vec<f64>,
    pub radii_m: Vec<f64>,
    /// `cells[altitude][radius]`, `None` where the cell has no ground truth.
    pub cells: Vec<Vec<Option<f64>>>,
    pub map_value: Option<f64>,
}

impl ApGrid {
    /// Builds a grid and computes its mAP as the mean over defined cells.
    pub fn new(sun: Option<SunCondition>, altitudes_m: Vec<f64>, radii_m: Vec<f64>, cells: Vec<Vec<Option<f64>>>) -> Self {
        let map_value = mean_defined(cells.iter().flatten());
        ApGrid {
            sun,
            altitudes_m,
            radii_m,
            cells,
            map_value,
        }
    }

    pub fn get(&self, altitude_idx: usize, radius_idx: usize) -> Option<f64> {
        self.cells.get(altitude_idx).and_then(|row| row.get(radius_idx)).copied().flatten()
    }

    pub fn scope_name(&self) -> &'static str {
        self.sun.map_or("all", SunCondition::name)
    }
}

pub(crate) fn mean_defined<'a>(values: impl Iterator<Item = &'a Option<f64>>) -> Option<f64> {
    let (sum, n) = values.flatten().fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    (n > 0).then(|| sum / n as f64)
}

fn sorted_unique(values: impl Iterator<Item = f64>) -> Vec<f64> {
    let mut v: Vec<f64> = values.collect();
    v.sort_by(f64::total_cmp);
    v.dedup();
    v
}

fn axis_index(axis: &[f64], v: f64) -> usize {
    axis.binary_search_by(|a| a.total_cmp(&v)).expect("value drawn from the axis")
}

/// Sweep position of every frame: from `rendered`, else from the frame's first annotation.
fn frame_index(annotations: &[AnnotationRecord], rendered: &[FrameView]) -> HashMap<String, FrameView> {
    let mut map: HashMap<String, FrameView> = rendered.iter().map(|f| (f.frame_id.clone(), f.clone())).collect();
    for a in annotations {
        if !map.contains_key(&a.frame_id) {
            map.insert(a.frame_id.clone(), a.view());
        }
    }
    map
}

/// AP per (altitude, radius) cell over the frames passing `sun` (all when `None`).
/// Axes come from all annotations and rendered frames so grids of different suns
/// align. Predictions on rendered frames without ground truth count against
/// their cell.
pub fn bin_by_height_radius(
    annotations: &[AnnotationRecord],
    rendered: &[FrameView],
    preds: &[PredictionRecord],
    matched: &MatchResult,
    sun: Option<SunCondition>,
    method: ApMethod,
) -> Result<ApGrid> {
    if matched.pred_tp.len() != preds.len() || matched.gt_matched.len() != annotations.len() {
        return Err(Error::InvalidArgument("match result does not belong to these records".into()));
    }
    let frames = frame_index(annotations, rendered);
    if let Some(p) = preds.iter().find(|p| !frames.contains_key(&p.frame_id)) {
        return Err(Error::UnknownFrames(vec![p.frame_id.clone()]));
    }
    let altitudes = sorted_unique(frames.values().map(|f| f.camera_altitude_m));
    let radii = sorted_unique(frames.values().map(|f| f.radius_m));
    let keep = |s: SunCondition| sun.is_none_or(|want| want == s);

    let mut n_gt = vec![vec![0usize; radii.len()]; altitudes.len()];
    for a in annotations.iter().filter(|a| keep(a.sun)) {
        n_gt[axis_index(&altitudes, a.camera_altitude_m)][axis_index(&radii, a.radius_m)] += 1;
    }
    let mut flags = vec![vec![Vec::new(); radii.len()]; altitudes.len()];
    for &p in &matched.order {
        let meta = &frames[&preds[p].frame_id];
        if keep(meta.sun) {
            flags[axis_index(&altitudes, meta.camera_altitude_m)][axis_index(&radii, meta.radius_m)]
                .push(matched.pred_tp[p]);
        }
    }
    let cells = flags
        .iter()
        .zip(&n_gt)
        .map(|(row, counts)| {
            row.iter()
                .zip(counts)
                .map(|(f, &n)| average_precision_with(f, n, method))
                .collect()
        })
        .collect();
    Ok(ApGrid::new(sun, altitudes, radii, cells))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HistogramMode {
    /// Count IoU-qualified true positives.
    #[default]
    TruePositive,
    /// Count every prediction regardless of matching.
    RawDetection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AngularHistogram {
    pub bin_width_deg: f64,
    /// Bin `k` covers azimuths `[k·w, (k+1)·w)`.
    pub counts: Vec<u64>,
}

impl AngularHistogram {
    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }
}

pub fn bin_count(bin_width_deg: f64) -> Result<usize> {
    let n = 360.0 / bin_width_deg;
    if !(bin_width_deg > 0.0) || (n - n.round()).abs() > 1e-9 || n.round() < 1.0 {
        return Err(Error::InvalidArgument(format!(
            "bin width {bin_width_deg} does not divide 360"
        )));
    }
    Ok(n.round() as usize)
}

/// Positive detections per camera azimuth bin over frames accepted by `filter`.
pub fn angular_histogram(
    annotations: &[AnnotationRecord],
    rendered: &[FrameView],
    preds: &[PredictionRecord],
    matched: &MatchResult,
    bin_width_deg: f64,
    mode: HistogramMode,
    filter: impl Fn(&FrameView) -> bool,
) -> Result<AngularHistogram> {
    let bins = bin_count(bin_width_deg)?;
    let frames = frame_index(annotations, rendered);
    let mut counts = vec![0u64; bins];
    for (p, pred) in preds.iter().enumerate() {
        let counted = match mode {
            HistogramMode::TruePositive => matched.pred_tp[p],
            HistogramMode::RawDetection => true,
        };
        if !counted {
            continue;
        }
        let meta = frames
            .get(&pred.frame_id)
            .ok_or_else(|| Error::UnknownFrames(vec![pred.frame_id.clone()]))?;
        if filter(meta) {
            let az = meta.azimuth_deg.rem_euclid(360.0);
            let k = ((az / bin_width_deg).floor() as usize).min(bins - 1);
            counts[k] += 1;
        }
    }
    Ok(AngularHistogram { bin_width_deg, counts })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Region {
    LargeTarget,
    NadirView,
    SmallTarget,
    EyeLevelView,
}

impl Region {
    pub const ALL: [Region; 4] = [Region::LargeTarget, Region::NadirView, Region::SmallTarget, Region::EyeLevelView];

    pub fn name(self) -> &'static str {
        match self {
            Region::LargeTarget => "large_target",
            Region::NadirView => "nadir_view",
            Region::SmallTarget => "small_target",
            Region::EyeLevelView => "eye_level_view",
        }
    }
}

/// Quadrant of the (altitude, radius) plane a sweep cell falls into.
pub fn classify_region(altitude_m: f64, radius_m: f64, h_split: f64, r_split: f64) -> Region {
    match (altitude_m >= h_split, radius_m >= r_split) {
        (false, false) => Region::LargeTarget,
        (true, false) => Region::NadirView,
        (true, true) => Region::SmallTarget,
        (false, true) => Region::EyeLevelView,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnvelopeRow {
    pub altitude_m: f64,
    /// Smallest radius whose AP reaches the threshold, if any.
    pub min_usable_radius_m: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundaryMap {
    pub threshold: f64,
    /// `(altitude_m, radius_m)` of cells at or above threshold with a defined 4-neighbor below it.
    pub boundary_cells: Vec<(f64, f64)>,
    pub usable_envelope: Vec<EnvelopeRow>,
}

pub fn boundary_map(grid: &ApGrid, threshold: f64) -> Result<BoundaryMap> {
    if !(threshold > 0.0 && threshold < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "boundary threshold {threshold} must lie in (0, 1)"
        )));
    }
    if grid.cells.iter().flatten().all(Option::is_none) {
        return Err(Error::EmptyGrid);
    }
    let rows = grid.altitudes_m.len();
    let cols = grid.radii_m.len();
    let mut boundary_cells = Vec::new();
    for i in 0..rows {
        for j in 0..cols {
            let Some(ap) = grid.get(i, j) else { continue };
            if ap < threshold {
                continue;
            }
            let neighbors = [
                (i.wrapping_sub(1), j),
                (i + 1, j),
                (i, j.wrapping_sub(1)),
                (i, j + 1),
            ];
            if neighbors
                .iter()
                .any(|&(a, b)| grid.get(a, b).is_some_and(|n| n < threshold))
            {
                boundary_cells.push((grid.altitudes_m[i], grid.radii_m[j]));
            }
        }
    }
    let usable_envelope = grid
        .altitudes_m
        .iter()
        .enumerate()
        .map(|(i, &altitude_m)| EnvelopeRow {
            altitude_m,
            min_usable_radius_m: (0..cols)
                .find(|&j| grid.get(i, j).is_some_and(|ap| ap >= threshold))
                .map(|j| grid.radii_m[j]),
        })
        .collect();
    Ok(BoundaryMap {
        threshold,
        boundary_cells,
        usable_envelope,
    })
}
