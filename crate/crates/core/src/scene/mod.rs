//! Procedural scenes: terrain, posed targets with object ids, and sun conditions.

mod target;
mod terrain;

use std::sync::{Arc, OnceLock};

use nalgebra::Rotation3;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Vec3;

pub use target::{build_target, build_target_with, Mesh, Part, Pose, TargetModel, VARIANT_COUNT};
pub use terrain::{build_terrain, Terrain, TerrainParams};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SunCondition {
    EarlyMorning,
    Noon,
    MidAfternoon,
    LateAfternoon,
}

impl SunCondition {
    pub const ALL: [SunCondition; 4] = [
        SunCondition::EarlyMorning,
        SunCondition::Noon,
        SunCondition::MidAfternoon,
        SunCondition::LateAfternoon,
    ];

    pub fn name(self) -> &'static str {
        match self {
            SunCondition::EarlyMorning => "early_morning",
            SunCondition::Noon => "noon",
            SunCondition::MidAfternoon => "mid_afternoon",
            SunCondition::LateAfternoon => "late_afternoon",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|s| s.name() == name)
    }

    pub fn default_illumination(self) -> IlluminationCondition {
        let (e, a, ambient) = match self {
            SunCondition::EarlyMorning => (15.0, 90.0, 0.25),
            SunCondition::Noon => (60.0, 180.0, 0.40),
            SunCondition::MidAfternoon => (35.0, 225.0, 0.30),
            SunCondition::LateAfternoon => (10.0, 270.0, 0.20),
        };
        IlluminationCondition {
            name: self,
            sun_elevation_deg: e,
            sun_azimuth_deg: a,
            ambient_fraction: ambient,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IlluminationCondition {
    pub name: SunCondition,
    pub sun_elevation_deg: f64,
    pub sun_azimuth_deg: f64,
    pub ambient_fraction: f64,
}

impl IlluminationCondition {
    pub fn validate(&self) -> Result<()> {
        if !(self.sun_elevation_deg > 0.0 && self.sun_elevation_deg <= 90.0) {
            return Err(Error::config(
                format!("scene.sun_table.{}.sun_elevation_deg", self.name.name()),
                "must lie in (0, 90]",
            ));
        }
        if !self.sun_azimuth_deg.is_finite() {
            return Err(Error::config(
                format!("scene.sun_table.{}.sun_azimuth_deg", self.name.name()),
                "must be finite",
            ));
        }
        if !(0.0..=1.0).contains(&self.ambient_fraction) {
            return Err(Error::config(
                format!("scene.sun_table.{}.ambient_fraction", self.name.name()),
                "must lie in [0, 1]",
            ));
        }
        Ok(())
    }
}

/// Unit vector pointing from the sun toward the scene.
pub fn sun_direction(condition: &IlluminationCondition) -> Vec3 {
    let e = condition.sun_elevation_deg.to_radians();
    let a = condition.sun_azimuth_deg.to_radians();
    -Vec3::new(e.cos() * a.cos(), e.cos() * a.sin(), e.sin())
}

#[derive(Debug, Clone, PartialEq)]
pub struct TargetInstance {
    pub object_id: u32,
    pub label: String,
    pub category: String,
    pub variant: u8,
    pub pose: Pose,
    pub chest_marker: bool,
    /// Position of the local origin in the world; z is the ground elevation there.
    pub position: Vec3,
    pub yaw_deg: f64,
    /// Local-frame mesh (feet on z = 0, facing +x).
    pub mesh: Mesh,
}

impl TargetInstance {
    pub fn world_mesh(&self) -> Mesh {
        let rot = Rotation3::from_axis_angle(&Vec3::z_axis(), self.yaw_deg.to_radians());
        self.mesh.transformed(|v| rot * v + self.position)
    }

    pub fn world_bounds(&self) -> (Vec3, Vec3) {
        self.world_mesh().bounds()
    }

    /// Height of the world bounding-box center, the default camera look-at height.
    pub fn center_height(&self) -> f64 {
        let (lo, hi) = self.world_bounds();
        0.5 * (lo.z + hi.z)
    }
}

/// A world-space triangle ready for rasterization. `object_id` 0 is terrain.
#[derive(Debug, Clone, PartialEq)]
pub struct SceneTriangle {
    pub vertices: [Vec3; 3],
    pub normal: Vec3,
    pub color: [f64; 3],
    pub object_id: u32,
}

#[derive(Debug, Clone)]
pub struct SceneSpec {
    pub terrain: Arc<Terrain>,
    pub targets: Vec<TargetInstance>,
    pub sun: IlluminationCondition,
    triangles: OnceLock<Arc<Vec<SceneTriangle>>>,
}

impl SceneSpec {
    pub fn new(terrain: Terrain, sun: IlluminationCondition) -> Self {
        SceneSpec {
            terrain: Arc::new(terrain),
            targets: Vec::new(),
            sun,
            triangles: OnceLock::new(),
        }
    }

    /// Same geometry under a different sun; shares terrain and triangle cache.
    pub fn with_sun(&self, sun: IlluminationCondition) -> Self {
        SceneSpec {
            sun,
            ..self.clone()
        }
    }

    /// Places `model` at `position_xy` rotated by `yaw_deg` about the vertical,
    /// resting on the terrain, and returns its new object id.
    pub fn place_target(&mut self, model: &TargetModel, position_xy: (f64, f64), yaw_deg: f64) -> Result<u32> {
        if !position_xy.0.is_finite() || !position_xy.1.is_finite() || !yaw_deg.is_finite() {
            return Err(Error::InvalidArgument("target placement must be finite".into()));
        }
        let reach = model
            .mesh
            .vertices()
            .map(|v| v.x.hypot(v.y))
            .fold(0.0_f64, f64::max);
        let flat = self.terrain.params.flat_radius_m;
        if position_xy.0.hypot(position_xy.1) + reach > flat {
            return Err(Error::InvalidArgument(format!(
                "target at ({:.3}, {:.3}) extends outside the {flat} m flat disc",
                position_xy.0, position_xy.1
            )));
        }
        let ground = self.terrain.elevation_at(position_xy.0, position_xy.1);
        let (lo, _) = model.mesh.bounds();
        let object_id = self.targets.iter().map(|t| t.object_id).max().unwrap_or(0) + 1;
        if object_id > u32::from(u16::MAX) {
            return Err(Error::InvalidArgument("too many targets for a 16-bit id buffer".into()));
        }
        self.targets.push(TargetInstance {
            object_id,
            label: model.label.clone(),
            category: model.category.clone(),
            variant: model.variant,
            pose: model.pose,
            chest_marker: model.chest_marker,
            position: Vec3::new(position_xy.0, position_xy.1, ground - lo.z),
            yaw_deg,
            mesh: model.mesh.clone(),
        });
        self.triangles = OnceLock::new();
        Ok(object_id)
    }

    /// All terrain and target triangles in world space, built once and cached.
    pub fn triangles(&self) -> Arc<Vec<SceneTriangle>> {
        self.triangles
            .get_or_init(|| {
                let mut out = Vec::new();
                for v in self.terrain.triangles() {
                    let c = (v[0] + v[1] + v[2]) / 3.0;
                    out.push(SceneTriangle {
                        normal: face_normal(&v),
                        color: self.terrain.color_at(c.x, c.y, c.z),
                        vertices: v,
                        object_id: 0,
                    });
                }
                for t in &self.targets {
                    for part in &t.world_mesh().parts {
                        for v in part.triangles() {
                            out.push(SceneTriangle {
                                normal: face_normal(&v),
                                color: part.color,
                                vertices: v,
                                object_id: t.object_id,
                            });
                        }
                    }
                }
                Arc::new(out)
            })
            .clone()
    }

    pub fn target(&self, object_id: u32) -> Option<&TargetInstance> {
        self.targets.iter().find(|t| t.object_id == object_id)
    }

    pub fn to_document(&self) -> SceneDocument {
        SceneDocument {
            terrain: self.terrain.params.clone(),
            sun: self.sun,
            targets: self
                .targets
                .iter()
                .map(|t| TargetDescriptor {
                    object_id: t.object_id,
                    label: t.label.clone(),
                    category: t.category.clone(),
                    variant: t.variant,
                    pose: t.pose,
                    chest_marker: t.chest_marker,
                    position: [t.position.x, t.position.y, t.position.z],
                    yaw_deg: t.yaw_deg,
                })
                .collect(),
        }
    }

    /// Rebuilds a scene from its provenance document.
    pub fn from_document(doc: &SceneDocument) -> Result<Self> {
        let mut scene = SceneSpec::new(Terrain::build(doc.terrain.clone())?, doc.sun);
        for d in &doc.targets {
            let model = build_target_with(d.pose, d.variant, d.chest_marker)?;
            let id = scene.place_target(&model, (d.position[0], d.position[1]), d.yaw_deg)?;
            if id != d.object_id {
                return Err(Error::InvalidArgument(format!(
                    "scene document object ids must be sequential, expected {id} got {}",
                    d.object_id
                )));
            }
            let t = scene.targets.last_mut().expect("just placed");
            t.label = d.label.clone();
            t.category = d.category.clone();
        }
        Ok(scene)
    }
}

fn face_normal(v: &[Vec3; 3]) -> Vec3 {
    let n = (v[1] - v[0]).cross(&(v[2] - v[0]));
    let len = n.norm();
    if len > 0.0 {
        n / len
    } else {
        Vec3::z()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TargetDescriptor {
    pub object_id: u32,
    pub label: String,
    pub category: String,
    pub variant: u8,
    pub pose: Pose,
    pub chest_marker: bool,
    pub position: [f64; 3],
    pub yaw_deg: f64,
}

/// Serializable scene provenance: terrain parameters and target list.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneDocument {
    pub terrain: TerrainParams,
    pub sun: IlluminationCondition,
    pub targets: Vec<TargetDescriptor>,
}
