//! Automatic annotation: tight boxes from id buffers and per-trial JSON records.
//!
//! Pixel coordinates have their origin at the top-left, x right and y down.
//! Box centers are pixel-index midpoints, so an object covering columns
//! 50..=149 has center x 99.5 and width 100.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fsutil::{read_input, write_atomic};
use crate::geometry::FrameSpec;
use crate::raster::IdBuffer;
use crate::scene::{SceneSpec, SunCondition};

/// Inclusive pixel-index bounds of an object's mask.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PixelBounds {
    pub min_x: u32,
    pub min_y: u32,
    pub max_x: u32,
    pub max_y: u32,
}

impl PixelBounds {
    fn single(x: u32, y: u32) -> Self {
        PixelBounds {
            min_x: x,
            min_y: y,
            max_x: x,
            max_y: y,
        }
    }

    fn include(&mut self, x: u32, y: u32) {
        self.min_x = self.min_x.min(x);
        self.min_y = self.min_y.min(y);
        self.max_x = self.max_x.max(x);
        self.max_y = self.max_y.max(y);
    }

    pub fn width(&self) -> u32 {
        self.max_x - self.min_x + 1
    }

    pub fn height(&self) -> u32 {
        self.max_y - self.min_y + 1
    }

    /// `[center_x, center_y, width, height]`.
    pub fn center_box(&self) -> [f64; 4] {
        [
            0.5 * f64::from(self.min_x + self.max_x),
            0.5 * f64::from(self.min_y + self.max_y),
            f64::from(self.width()),
            f64::from(self.height()),
        ]
    }

    pub fn touches_border(&self, width: u32, height: u32) -> bool {
        self.min_x == 0 || self.min_y == 0 || self.max_x + 1 == width || self.max_y + 1 == height
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ObjectBox {
    pub object_id: u32,
    pub label: String,
    pub category: String,
    pub bounds: PixelBounds,
    pub pixel_count: u64,
}

/// Tight box and pixel count for every nonzero id in the buffer, ordered by id.
/// Fragments of one id are never split into separate boxes.
pub fn extract_boxes(ids: &IdBuffer<'_>, labels: &BTreeMap<u32, (String, String)>) -> Result<Vec<ObjectBox>> {
    let expected = ids.width as usize * ids.height as usize;
    if ids.ids.len() != expected {
        return Err(Error::InvalidArgument(format!(
            "id buffer holds {} pixels, expected {}x{}",
            ids.ids.len(),
            ids.width,
            ids.height
        )));
    }
    let mut found: BTreeMap<u32, (PixelBounds, u64)> = BTreeMap::new();
    for (row, y) in ids.ids.chunks_exact(ids.width as usize).zip(0u32..) {
        for (&id, x) in row.iter().zip(0u32..) {
            if id == 0 {
                continue;
            }
            found
                .entry(id)
                .and_modify(|(b, n)| {
                    b.include(x, y);
                    *n += 1;
                })
                .or_insert((PixelBounds::single(x, y), 1));
        }
    }
    found
        .into_iter()
        .map(|(object_id, (bounds, pixel_count))| {
            let (label, category) = labels.get(&object_id).ok_or(Error::UnlabeledObject(object_id))?;
            Ok(ObjectBox {
                object_id,
                label: label.clone(),
                category: category.clone(),
                bounds,
                pixel_count,
            })
        })
        .collect()
}

/// View angle of the camera around the target, 0 when the camera faces the
/// target's front (+x at yaw 0), increasing counterclockwise.
pub fn orientation_relative(target_yaw_deg: f64, camera_azimuth_deg: f64) -> f64 {
    let w = (camera_azimuth_deg - target_yaw_deg).rem_euclid(360.0);
    if w >= 360.0 {
        0.0
    } else {
        w
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnnotationRecord {
    pub frame_id: String,
    pub object_id: u32,
    pub object_label: String,
    pub label_category: String,
    /// `[center_x, center_y, width, height]` in pixels.
    pub bbox: [f64; 4],
    pub camera_altitude_m: f64,
    pub orientation_deg: f64,
    pub distance_m: f64,
    pub pitch_deg: f64,
    pub pixel_count: u64,
    pub sun: SunCondition,
    pub radius_m: f64,
    pub azimuth_deg: f64,
    pub look_at_height_m: f64,
    /// The box reaches the image edge, so the object may be cut off.
    pub touches_border: bool,
}

impl AnnotationRecord {
    /// Corner-form box `[x_min, y_min, width, height]` in continuous pixel
    /// coordinates, where pixel `i` spans `[i, i + 1)`.
    pub fn corner_box(&self) -> [f64; 4] {
        let [cx, cy, w, h] = self.bbox;
        [cx - 0.5 * (w - 1.0), cy - 0.5 * (h - 1.0), w, h]
    }

    /// Rounds every float field to 6 decimals, the precision stored on disk.
    pub fn quantized(mut self) -> Self {
        self.bbox = self.bbox.map(round6);
        self.camera_altitude_m = round6(self.camera_altitude_m);
        self.orientation_deg = round6(self.orientation_deg);
        self.distance_m = round6(self.distance_m);
        self.pitch_deg = round6(self.pitch_deg);
        self.radius_m = round6(self.radius_m);
        self.azimuth_deg = round6(self.azimuth_deg);
        self.look_at_height_m = round6(self.look_at_height_m);
        if self.orientation_deg >= 360.0 {
            self.orientation_deg = 0.0;
        }
        self
    }
}

fn round6(x: f64) -> f64 {
    let r = (x * 1e6).round() / 1e6;
    if r == 0.0 {
        0.0
    } else {
        r
    }
}

/// Builds the annotation records of one rendered frame.
pub fn annotate_frame(frame: &FrameSpec, scene: &SceneSpec, ids: &IdBuffer<'_>) -> Result<Vec<AnnotationRecord>> {
    let labels: BTreeMap<u32, (String, String)> = scene
        .targets
        .iter()
        .map(|t| (t.object_id, (t.label.clone(), t.category.clone())))
        .collect();
    let cam = frame.camera.position;
    extract_boxes(ids, &labels)?
        .into_iter()
        .map(|b| {
            let target = scene.target(b.object_id).ok_or(Error::UnlabeledObject(b.object_id))?;
            let view_azimuth = (cam.y - target.position.y).atan2(cam.x - target.position.x).to_degrees();
            Ok(AnnotationRecord {
                frame_id: frame.frame_id.clone(),
                object_id: b.object_id,
                object_label: b.label,
                label_category: b.category,
                bbox: b.bounds.center_box(),
                camera_altitude_m: frame.altitude_m,
                orientation_deg: orientation_relative(target.yaw_deg, view_azimuth),
                distance_m: frame.distance_m,
                pitch_deg: frame.pitch_deg,
                pixel_count: b.pixel_count,
                sun: frame.sun,
                radius_m: frame.radius_m,
                azimuth_deg: frame.azimuth_deg,
                look_at_height_m: frame.look_at_height_m,
                touches_border: b.bounds.touches_border(ids.width, ids.height),
            }
            .quantized())
        })
        .collect()
}

/// Sweep position of one rendered frame, recorded whether or not a target is visible.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FrameView {
    pub frame_id: String,
    pub camera_altitude_m: f64,
    pub radius_m: f64,
    pub azimuth_deg: f64,
    pub sun: SunCondition,
}

impl From<&FrameSpec> for FrameView {
    fn from(f: &FrameSpec) -> Self {
        FrameView {
            frame_id: f.frame_id.clone(),
            camera_altitude_m: f.altitude_m,
            radius_m: f.radius_m,
            azimuth_deg: f.azimuth_deg,
            sun: f.sun,
        }
    }
}

impl AnnotationRecord {
    pub fn view(&self) -> FrameView {
        FrameView {
            frame_id: self.frame_id.clone(),
            camera_altitude_m: self.camera_altitude_m,
            radius_m: self.radius_m,
            azimuth_deg: self.azimuth_deg,
            sun: self.sun,
        }
    }
}

/// One trial's annotations: `{"trial": ..., "frames": [...]}` plus the image size.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrialAnnotations {
    pub trial: String,
    pub image_width_px: u32,
    pub image_height_px: u32,
    /// Every rendered frame, sorted by id, including frames where no target is visible.
    #[serde(default)]
    pub rendered_frames: Vec<FrameView>,
    pub frames: Vec<AnnotationRecord>,
}

impl TrialAnnotations {
    pub fn new(trial: impl Into<String>, width: u32, height: u32, records: Vec<AnnotationRecord>) -> Self {
        let mut frames: Vec<_> = records.into_iter().map(AnnotationRecord::quantized).collect();
        frames.sort_by(|a, b| a.frame_id.cmp(&b.frame_id).then(a.object_id.cmp(&b.object_id)));
        TrialAnnotations {
            trial: trial.into(),
            image_width_px: width,
            image_height_px: height,
            rendered_frames: Vec::new(),
            frames,
        }
    }

    /// Records the full rendered frame list.
    pub fn with_rendered_frames(mut self, mut frames: Vec<FrameView>) -> Self {
        frames.sort_by(|a, b| a.frame_id.cmp(&b.frame_id));
        frames.dedup_by(|a, b| a.frame_id == b.frame_id);
        self.rendered_frames = frames;
        self
    }

    /// Frame ids a prediction may reference.
    pub fn known_frames(&self) -> BTreeSet<String> {
        self.rendered_frames
            .iter()
            .map(|f| f.frame_id.clone())
            .chain(self.frames.iter().map(|r| r.frame_id.clone()))
            .collect()
    }

    pub fn to_json_bytes(&self) -> Vec<u8> {
        let mut out = serde_json::to_vec_pretty(self).expect("annotations serialize");
        out.push(b'\n');
        out
    }

    /// Checks every record against the schema invariants; the error names the record index.
    pub fn validate(&self, path: &Path) -> Result<()> {
        let bad = |i: usize, message: String| Error::Schema {
            path: path.to_path_buf(),
            record: Some(i),
            message,
        };
        if self.rendered_frames.windows(2).any(|p| p[0].frame_id >= p[1].frame_id) {
            return Err(Error::Schema {
                path: path.to_path_buf(),
                record: None,
                message: "rendered_frames must be sorted and unique by frame_id".into(),
            });
        }
        let (w, h) = (f64::from(self.image_width_px), f64::from(self.image_height_px));
        for (i, r) in self.frames.iter().enumerate() {
            let [cx, cy, bw, bh] = r.bbox;
            if !(bw >= 1.0 && bh >= 1.0) {
                return Err(bad(i, format!("bbox size {bw}x{bh} must be at least 1x1")));
            }
            let [x0, y0, _, _] = r.corner_box();
            if x0 < 0.0 || y0 < 0.0 || x0 + bw > w || y0 + bh > h {
                return Err(bad(i, format!("bbox centered at ({cx}, {cy}) leaves the {w}x{h} image")));
            }
            if r.pixel_count < 1 || r.pixel_count as f64 > bw * bh {
                return Err(bad(i, format!("pixel_count {} inconsistent with bbox", r.pixel_count)));
            }
            if !(0.0..360.0).contains(&r.orientation_deg) {
                return Err(bad(i, "orientation_deg must lie in [0, 360)".into()));
            }
            if r.object_id == 0 {
                return Err(bad(i, "object_id must be >= 1".into()));
            }
            if !self.rendered_frames.is_empty() {
                let found = self
                    .rendered_frames
                    .binary_search_by(|f| f.frame_id.as_str().cmp(&r.frame_id))
                    .map(|k| &self.rendered_frames[k]);
                match found {
                    Ok(view) if *view == r.view() => {}
                    Ok(_) => return Err(bad(i, format!("sweep position disagrees with rendered frame {}", r.frame_id))),
                    Err(_) => return Err(bad(i, format!("frame_id {} missing from rendered_frames", r.frame_id))),
                }
            }
        }
        if self.frames.windows(2).any(|p| (&p[0].frame_id, p[0].object_id) >= (&p[1].frame_id, p[1].object_id)) {
            return Err(Error::Schema {
                path: path.to_path_buf(),
                record: None,
                message: "frames must be sorted by frame_id and unique per object".into(),
            });
        }
        Ok(())
    }
}

pub fn write_trial_json(annotations: &TrialAnnotations, path: &Path) -> Result<()> {
    write_atomic(path, &annotations.to_json_bytes())
}

pub fn read_trial_json(path: &Path) -> Result<TrialAnnotations> {
    let bytes = read_input(path)?;
    let doc: TrialAnnotations = serde_json::from_slice(&bytes).map_err(|e| Error::from_json(path, e))?;
    doc.validate(path)?;
    Ok(doc)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn labels(ids: &[u32]) -> BTreeMap<u32, (String, String)> {
        ids.iter().map(|&i| (i, ("person".to_string(), "human".to_string()))).collect()
    }

    /// Independent per-id scan: extents and count straight from the definition.
    fn brute_force(ids: &[u32], width: u32, id: u32) -> Option<([f64; 4], u64)> {
        let pts: Vec<(u32, u32)> = ids
            .iter()
            .enumerate()
            .filter(|(_, &v)| v == id)
            .map(|(i, _)| (i as u32 % width, i as u32 / width))
            .collect();
        if pts.is_empty() {
            return None;
        }
        let min_x = pts.iter().map(|p| p.0).min().unwrap() as f64;
        let max_x = pts.iter().map(|p| p.0).max().unwrap() as f64;
        let min_y = pts.iter().map(|p| p.1).min().unwrap() as f64;
        let max_y = pts.iter().map(|p| p.1).max().unwrap() as f64;
        Some((
            [(min_x + max_x) / 2.0, (min_y + max_y) / 2.0, max_x - min_x + 1.0, max_y - min_y + 1.0],
            pts.len() as u64,
        ))
    }

    #[test]
    fn constructed_square() {
        let (w, h) = (512u32, 512u32);
        let mut ids = vec![0u32; (w * h) as usize];
        for y in 100..200 {
            for x in 50..150 {
                ids[(y * w + x) as usize] = 1;
            }
        }
        let buf = IdBuffer { width: w, height: h, ids: &ids };
        let boxes = extract_boxes(&buf, &labels(&[1])).unwrap();
        assert_eq!(boxes.len(), 1);
        assert_eq!(boxes[0].bounds.center_box(), [99.5, 149.5, 100.0, 100.0]);
        assert_eq!(boxes[0].pixel_count, 10_000);
    }

    #[test]
    fn empty_buffer() {
        let ids = vec![0u32; 64];
        let buf = IdBuffer { width: 8, height: 8, ids: &ids };
        assert!(extract_boxes(&buf, &labels(&[])).unwrap().is_empty());
    }

    #[test]
    fn disjoint_ids_match_brute_force() {
        let (w, h) = (40u32, 30u32);
        let mut ids = vec![0u32; (w * h) as usize];
        for y in 2..9 {
            for x in 3..11 {
                ids[(y * w + x) as usize] = 1;
            }
        }
        for y in 15..28 {
            for x in 20..39 {
                if (x + y) % 3 != 0 {
                    ids[(y * w + x) as usize] = 2;
                }
            }
        }
        let buf = IdBuffer { width: w, height: h, ids: &ids };
        let boxes = extract_boxes(&buf, &labels(&[1, 2])).unwrap();
        assert_eq!(boxes.len(), 2);
        for b in &boxes {
            let (bbox, n) = brute_force(&ids, w, b.object_id).unwrap();
            assert_eq!(b.bounds.center_box(), bbox);
            assert_eq!(b.pixel_count, n);
        }
    }

    #[test]
    fn unlabeled_id_is_an_error() {
        let ids = vec![0, 0, 7, 0];
        let buf = IdBuffer { width: 2, height: 2, ids: &ids };
        assert!(matches!(extract_boxes(&buf, &labels(&[1])), Err(Error::UnlabeledObject(7))));
    }

    #[test]
    fn orientation_examples() {
        assert_eq!(orientation_relative(0.0, 0.0), 0.0);
        assert_eq!(orientation_relative(0.0, 180.0), 180.0);
        assert!((orientation_relative(90.0, 30.0) - 300.0).abs() < 1e-12);
        assert_eq!(orientation_relative(0.0, 360.0), 0.0);
        assert!(orientation_relative(1e-17, 0.0) < 360.0);
    }

    fn record(frame: &str, n: u64) -> AnnotationRecord {
        AnnotationRecord {
            frame_id: frame.to_string(),
            object_id: 1,
            object_label: "person".into(),
            label_category: "human".into(),
            bbox: [99.5, 149.5, 100.0, 100.0],
            camera_altitude_m: 25.0,
            orientation_deg: 12.345_678_9,
            distance_m: 32.015_621_187,
            pitch_deg: 51.340_191_7,
            pixel_count: n,
            sun: SunCondition::MidAfternoon,
            radius_m: 20.0,
            azimuth_deg: 12.0,
            look_at_height_m: 0.9,
            touches_border: false,
        }
    }

    #[test]
    fn empty_trial_json() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.json");
        write_trial_json(&TrialAnnotations::new("t", 512, 512, vec![]), &path).unwrap();
        let v: serde_json::Value = serde_json::from_slice(&std::fs::read(&path).unwrap()).unwrap();
        assert_eq!(v["frames"], serde_json::json!([]));
        assert_eq!(read_trial_json(&path).unwrap().frames.len(), 0);
    }

    #[test]
    fn trial_json_sorted_and_six_decimals() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.json");
        let t = TrialAnnotations::new("t", 512, 512, vec![record("t/0/b", 5), record("t/0/a", 9)]);
        write_trial_json(&t, &path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.find("t/0/a").unwrap() < text.find("t/0/b").unwrap());
        assert!(text.contains("32.015621"));
        assert!(!text.contains("32.0156211"));
        assert_eq!(read_trial_json(&path).unwrap(), t);
    }

    #[test]
    fn schema_violations_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.json");
        let mut r = record("t/0/a", 5);
        r.bbox = [2.0, 2.0, 10.0, 10.0];
        write_trial_json(&TrialAnnotations::new("t", 512, 512, vec![r]), &path).unwrap();
        assert!(matches!(read_trial_json(&path), Err(Error::Schema { record: Some(0), .. })));

        std::fs::write(&path, "{\"trial\": \"t\", \"frames\": [").unwrap();
        assert!(matches!(read_trial_json(&path), Err(Error::MalformedJson { .. })));

        std::fs::write(&path, "{\"trial\": \"t\", \"image_width_px\": 1, \"image_height_px\": 1, \"frames\": [], \"extra\": 1}").unwrap();
        assert!(matches!(read_trial_json(&path), Err(Error::Schema { .. })));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn boxes_are_minimal_and_cover(
            w in 1u32..24, h in 1u32..24,
            cells in proptest::collection::vec(0u32..4, 576)
        ) {
            let ids: Vec<u32> = cells[..(w * h) as usize].to_vec();
            let buf = IdBuffer { width: w, height: h, ids: &ids };
            let boxes = extract_boxes(&buf, &labels(&[1, 2, 3])).unwrap();
            for b in &boxes {
                let (bbox, n) = brute_force(&ids, w, b.object_id).unwrap();
                prop_assert_eq!(b.bounds.center_box(), bbox);
                prop_assert_eq!(b.pixel_count, n);
                let inside = |x: u32, y: u32| x >= b.bounds.min_x && x <= b.bounds.max_x && y >= b.bounds.min_y && y <= b.bounds.max_y;
                let on = |pred: &dyn Fn(u32, u32) -> bool| ids.iter().enumerate().any(|(i, &v)| {
                    v == b.object_id && pred(i as u32 % w, i as u32 / w)
                });
                // coverage
                prop_assert!(!on(&|x, y| !inside(x, y)));
                // minimality: each side touches at least one pixel
                prop_assert!(on(&|x, _| x == b.bounds.min_x));
                prop_assert!(on(&|x, _| x == b.bounds.max_x));
                prop_assert!(on(&|_, y| y == b.bounds.min_y));
                prop_assert!(on(&|_, y| y == b.bounds.max_y));
            }
            for id in 1..4 {
                prop_assert_eq!(boxes.iter().any(|b| b.object_id == id), ids.contains(&id));
            }
        }
    }
}
