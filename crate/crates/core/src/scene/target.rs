//! Posed human-proxy meshes built from primitive composites.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Vec3;

pub const VARIANT_COUNT: u8 = 8;

/// Uniform size factor per variant, within ±10% of the base dimensions.
const VARIANT_SCALE: [f64; VARIANT_COUNT as usize] = [1.00, 0.92, 1.08, 0.96, 1.04, 0.90, 1.10, 0.98];

const SEGMENTS: usize = 24;
const CAP_RINGS: usize = 8;
const SKIN: [f64; 3] = [0.86, 0.68, 0.55];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Pose {
    Standing,
    Squatting,
    Prone,
}

impl Pose {
    pub const ALL: [Pose; 3] = [Pose::Standing, Pose::Prone, Pose::Squatting];

    pub fn name(self) -> &'static str {
        match self {
            Pose::Standing => "standing",
            Pose::Squatting => "squatting",
            Pose::Prone => "prone",
        }
    }
}

/// One closed primitive surface with a single base color.
#[derive(Debug, Clone, PartialEq)]
pub struct Part {
    pub name: &'static str,
    pub color: [f64; 3],
    pub vertices: Vec<Vec3>,
    /// Counterclockwise seen from outside.
    pub indices: Vec<[u32; 3]>,
}

impl Part {
    pub fn triangles(&self) -> impl Iterator<Item = [Vec3; 3]> + '_ {
        self.indices
            .iter()
            .map(|t| [self.vertices[t[0] as usize], self.vertices[t[1] as usize], self.vertices[t[2] as usize]])
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Mesh {
    pub parts: Vec<Part>,
}

impl Mesh {
    pub fn vertices(&self) -> impl Iterator<Item = &Vec3> {
        self.parts.iter().flat_map(|p| p.vertices.iter())
    }

    /// Axis-aligned bounds as (min, max).
    pub fn bounds(&self) -> (Vec3, Vec3) {
        let mut lo = Vec3::repeat(f64::INFINITY);
        let mut hi = Vec3::repeat(f64::NEG_INFINITY);
        for v in self.vertices() {
            lo = lo.inf(v);
            hi = hi.sup(v);
        }
        (lo, hi)
    }

    pub fn extents(&self) -> Vec3 {
        let (lo, hi) = self.bounds();
        hi - lo
    }

    pub fn triangle_count(&self) -> usize {
        self.parts.iter().map(|p| p.indices.len()).sum()
    }

    pub fn transformed(&self, f: impl Fn(&Vec3) -> Vec3) -> Mesh {
        Mesh {
            parts: self
                .parts
                .iter()
                .map(|p| Part {
                    vertices: p.vertices.iter().map(&f).collect(),
                    ..p.clone()
                })
                .collect(),
        }
    }
}

/// A posed target in its local frame: feet on z = 0, facing +x.
#[derive(Debug, Clone, PartialEq)]
pub struct TargetModel {
    pub pose: Pose,
    pub variant: u8,
    pub chest_marker: bool,
    pub label: String,
    pub category: String,
    pub mesh: Mesh,
}

pub fn build_target(pose: Pose, variant: u8) -> Result<TargetModel> {
    build_target_with(pose, variant, true)
}

/// Builds the target mesh. Without the chest marker, standing and squatting
/// targets are rotationally symmetric about the vertical axis.
pub fn build_target_with(pose: Pose, variant: u8, chest_marker: bool) -> Result<TargetModel> {
    if variant >= VARIANT_COUNT {
        return Err(Error::InvalidArgument(format!(
            "target variant must be in 0..{VARIANT_COUNT}, got {variant}"
        )));
    }
    let s = VARIANT_SCALE[variant as usize];
    let body = body_color(variant);
    let marker = marker_color(variant);
    let v = |x: f64, y: f64, z: f64| Vec3::new(x, y, z) * s;

    let mut parts = Vec::with_capacity(3);
    match pose {
        Pose::Standing => {
            let r = 0.25 * s;
            parts.push(capsule("body", body, v(0.0, 0.0, 0.25), v(0.0, 0.0, 1.55), r));
            parts.push(sphere("head", SKIN, v(0.0, 0.0, 1.65), 0.12 * s));
            if chest_marker {
                parts.push(cuboid("chest", marker, v(0.12, -0.16, 1.05), v(0.33, 0.16, 1.40)));
            }
        }
        Pose::Squatting => {
            let r = 0.30 * s;
            parts.push(capsule("body", body, v(0.0, 0.0, 0.30), v(0.0, 0.0, 0.70), r));
            parts.push(sphere("head", SKIN, v(0.0, 0.0, 0.85), 0.12 * s));
            if chest_marker {
                parts.push(cuboid("chest", marker, v(0.18, -0.16, 0.45), v(0.40, 0.16, 0.72)));
            }
        }
        Pose::Prone => {
            // Body spans x in [-1.0, 0.8]; the head sits at the forward tip.
            let r = 0.25 * s;
            parts.push(capsule("body", body, v(-0.75, 0.0, 0.25), v(0.55, 0.0, 0.25), r));
            parts.push(sphere("head", SKIN, v(0.80, 0.0, 0.25), 0.12 * s));
            if chest_marker {
                parts.push(cuboid("chest", marker, v(0.05, -0.18, 0.0), v(0.45, 0.18, 0.12)));
            }
        }
    }
    Ok(TargetModel {
        pose,
        variant,
        chest_marker,
        label: "person".to_string(),
        category: "human".to_string(),
        mesh: Mesh { parts },
    })
}

fn body_color(variant: u8) -> [f64; 3] {
    hsv_to_rgb(f64::from(variant) * 45.0, 0.55, 0.50)
}

fn marker_color(variant: u8) -> [f64; 3] {
    hsv_to_rgb(f64::from(variant) * 45.0 + 180.0, 0.70, 0.80)
}

fn hsv_to_rgb(h_deg: f64, s: f64, v: f64) -> [f64; 3] {
    let h = h_deg.rem_euclid(360.0) / 60.0;
    let c = v * s;
    let x = c * (1.0 - (h % 2.0 - 1.0).abs());
    let (r, g, b) = match h as u32 {
        0 => (c, x, 0.0),
        1 => (x, c, 0.0),
        2 => (0.0, c, x),
        3 => (0.0, x, c),
        4 => (x, 0.0, c),
        _ => (c, 0.0, x),
    };
    let m = v - c;
    [r + m, g + m, b + m]
}

/// Surface of revolution of `profile` (radial, axial) pairs around `axis`
/// through `origin`. Profile points with zero radius collapse to poles.
fn revolve(name: &'static str, color: [f64; 3], origin: Vec3, axis: Vec3, profile: &[(f64, f64)]) -> Part {
    let u = axis.normalize();
    let helper = if u.z.abs() < 0.9 { Vec3::z() } else { Vec3::x() };
    let e1 = helper.cross(&u).normalize();
    let e2 = u.cross(&e1);

    let mut vertices = Vec::new();
    let mut rings: Vec<Vec<u32>> = Vec::with_capacity(profile.len());
    for &(radial, axial) in profile {
        let center = origin + u * axial;
        if radial == 0.0 {
            vertices.push(center);
            rings.push(vec![(vertices.len() - 1) as u32; SEGMENTS]);
        } else {
            let ring = (0..SEGMENTS)
                .map(|j| {
                    let phi = std::f64::consts::TAU * j as f64 / SEGMENTS as f64;
                    vertices.push(center + (e1 * phi.cos() + e2 * phi.sin()) * radial);
                    (vertices.len() - 1) as u32
                })
                .collect();
            rings.push(ring);
        }
    }

    let mut indices = Vec::new();
    for w in rings.windows(2) {
        let (lower, upper) = (&w[0], &w[1]);
        for j in 0..SEGMENTS {
            let k = (j + 1) % SEGMENTS;
            let (a, b, c, d) = (lower[j], lower[k], upper[k], upper[j]);
            if a != b {
                indices.push([a, b, c]);
            }
            if c != d {
                indices.push([a, c, d]);
            }
        }
    }
    Part {
        name,
        color,
        vertices,
        indices,
    }
}

/// Capsule whose hemispherical caps are centered on `a` and `b`.
fn capsule(name: &'static str, color: [f64; 3], a: Vec3, b: Vec3, radius: f64) -> Part {
    let axis = b - a;
    let len = axis.norm();
    let mut profile = Vec::with_capacity(2 * CAP_RINGS + 2);
    for i in 0..=CAP_RINGS {
        let t = std::f64::consts::FRAC_PI_2 * i as f64 / CAP_RINGS as f64;
        profile.push((radius * t.sin(), -radius * t.cos()));
    }
    for i in 0..=CAP_RINGS {
        let t = std::f64::consts::FRAC_PI_2 * i as f64 / CAP_RINGS as f64;
        profile.push((radius * t.cos(), len + radius * t.sin()));
    }
    // exact poles
    profile[0].0 = 0.0;
    profile.last_mut().unwrap().0 = 0.0;
    revolve(name, color, a, axis, &profile)
}

fn sphere(name: &'static str, color: [f64; 3], center: Vec3, radius: f64) -> Part {
    let rings = 2 * CAP_RINGS;
    let profile: Vec<(f64, f64)> = (0..=rings)
        .map(|i| {
            let t = std::f64::consts::PI * i as f64 / rings as f64;
            let radial = if i == 0 || i == rings { 0.0 } else { radius * t.sin() };
            (radial, -radius * t.cos())
        })
        .collect();
    revolve(name, color, center, Vec3::z(), &profile)
}

fn cuboid(name: &'static str, color: [f64; 3], lo: Vec3, hi: Vec3) -> Part {
    let corner = |i: usize| {
        Vec3::new(
            if i & 1 == 0 { lo.x } else { hi.x },
            if i & 2 == 0 { lo.y } else { hi.y },
            if i & 4 == 0 { lo.z } else { hi.z },
        )
    };
    let vertices = (0..8).map(corner).collect();
    let indices = vec![
        [0, 2, 3], [0, 3, 1], // -z
        [4, 5, 7], [4, 7, 6], // +z
        [0, 1, 5], [0, 5, 4], // -y
        [2, 6, 7], [2, 7, 3], // +y
        [0, 4, 6], [0, 6, 2], // -x
        [1, 3, 7], [1, 7, 5], // +x
    ];
    Part {
        name,
        color,
        vertices,
        indices,
    }
}

#[cfg(test)]
mod tests {
    use std::collections::HashMap;

    use super::*;

    #[test]
    fn standing_height() {
        let t = build_target(Pose::Standing, 0).unwrap();
        assert!((t.mesh.extents().z - 1.80).abs() < 1e-9);
        assert!(t.mesh.bounds().0.z.abs() < 1e-12);
    }

    #[test]
    fn prone_extents() {
        let t = build_target(Pose::Prone, 0).unwrap();
        let e = t.mesh.extents();
        assert!((e.x - 1.92).abs() < 1e-9, "{e:?}");
        assert!((e.y - 0.50).abs() < 1e-9, "{e:?}");
        assert!((e.z - 0.50).abs() < 1e-9, "{e:?}");
    }

    #[test]
    fn pose_height_ordering_per_variant() {
        for variant in 0..VARIANT_COUNT {
            for marker in [true, false] {
                let h = |p| build_target_with(p, variant, marker).unwrap().mesh.extents();
                let (st, sq, pr) = (h(Pose::Standing), h(Pose::Squatting), h(Pose::Prone));
                assert!(st.z > sq.z && sq.z > pr.z, "variant {variant}");
                let horiz = |e: Vec3| e.x.max(e.y);
                assert!(horiz(pr) > horiz(st) && horiz(pr) > horiz(sq));
            }
        }
    }

    #[test]
    fn variant_scaling_within_ten_percent() {
        let base = build_target(Pose::Standing, 0).unwrap().mesh.extents().z;
        for variant in 1..VARIANT_COUNT {
            let h = build_target(Pose::Standing, variant).unwrap().mesh.extents().z;
            assert!((h / base - 1.0).abs() <= 0.1 + 1e-12);
        }
        assert!(build_target(Pose::Standing, 8).is_err());
    }

    #[test]
    fn meshes_above_ground() {
        for pose in Pose::ALL {
            for variant in 0..VARIANT_COUNT {
                let t = build_target(pose, variant).unwrap();
                assert!(t.mesh.vertices().all(|v| v.z >= -1e-12));
            }
        }
    }

    #[test]
    fn parts_are_watertight() {
        for pose in Pose::ALL {
            let t = build_target(pose, 3).unwrap();
            for part in &t.mesh.parts {
                let mut edges: HashMap<(u32, u32), i32> = HashMap::new();
                for tri in &part.indices {
                    for k in 0..3 {
                        let (a, b) = (tri[k], tri[(k + 1) % 3]);
                        // directed edge +1, its reverse -1: closed oriented surfaces cancel
                        let key = (a.min(b), a.max(b));
                        *edges.entry(key).or_default() += if a < b { 1 } else { -1 };
                    }
                }
                assert!(edges.values().all(|&n| n == 0), "{} of {pose:?} not closed", part.name);
            }
        }
    }

    #[test]
    fn outward_winding() {
        for pose in Pose::ALL {
            let t = build_target(pose, 0).unwrap();
            for part in &t.mesh.parts {
                let n = part.vertices.len() as f64;
                let centroid = part.vertices.iter().sum::<Vec3>() / n;
                for [a, b, c] in part.triangles() {
                    let normal = (b - a).cross(&(c - a));
                    let mid = (a + b + c) / 3.0;
                    assert!(normal.dot(&(mid - centroid)) > 0.0, "{} of {pose:?}", part.name);
                }
            }
        }
    }

    #[test]
    fn symmetric_target_has_no_marker() {
        let t = build_target_with(Pose::Standing, 0, false).unwrap();
        assert_eq!(t.mesh.parts.len(), 2);
        let e = t.mesh.extents();
        assert!((e.x - e.y).abs() < 1e-9);
    }
}
