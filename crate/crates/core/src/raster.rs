//! Deterministic software rasterizer: perspective projection, near-plane
//! clipping, edge-function triangle fill with a top-left rule, and a z-buffer
//! that also records the owning object id of every pixel.

use std::io::Cursor;
use std::path::{Path, PathBuf};

use image::{ImageBuffer, ImageFormat, Luma, Rgb};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fsutil::write_atomic;
use crate::geometry::{CameraPose, Vec3};
use crate::scene::{sun_direction, SceneSpec};

const SKY: [f64; 3] = [0.62, 0.75, 0.90];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CameraIntrinsics {
    pub width_px: u32,
    pub height_px: u32,
    pub vertical_fov_deg: f64,
    pub near_m: f64,
    pub far_m: f64,
}

impl Default for CameraIntrinsics {
    fn default() -> Self {
        CameraIntrinsics {
            width_px: 512,
            height_px: 512,
            vertical_fov_deg: 60.0,
            near_m: 0.1,
            far_m: 2000.0,
        }
    }
}

impl CameraIntrinsics {
    pub fn validate(&self) -> Result<()> {
        if self.width_px == 0 || self.width_px > 16384 {
            return Err(Error::config("intrinsics.width_px", "must lie in [1, 16384]"));
        }
        if self.height_px == 0 || self.height_px > 16384 {
            return Err(Error::config("intrinsics.height_px", "must lie in [1, 16384]"));
        }
        if !(self.vertical_fov_deg > 0.0 && self.vertical_fov_deg < 180.0) {
            return Err(Error::config("intrinsics.vertical_fov_deg", "must lie in (0, 180)"));
        }
        if !(self.near_m > 0.0) {
            return Err(Error::config("intrinsics.near_m", "must be > 0"));
        }
        if !(self.far_m > self.near_m && self.far_m.is_finite()) {
            return Err(Error::config("intrinsics.far_m", "must be finite and > near_m"));
        }
        Ok(())
    }

    /// Focal length in pixels.
    pub fn focal_px(&self) -> f64 {
        0.5 * self.height_px as f64 / (0.5 * self.vertical_fov_deg.to_radians()).tan()
    }

    pub fn principal_point(&self) -> (f64, f64) {
        (0.5 * self.width_px as f64, 0.5 * self.height_px as f64)
    }
}

/// Pinhole projection of a world point to (u, v, depth), with u right, v down
/// and the origin at the image's top-left corner. `None` when the point is at
/// or behind the near plane.
pub fn project_point(camera: &CameraPose, intrinsics: &CameraIntrinsics, world: &Vec3) -> Option<(f64, f64, f64)> {
    let p = camera.world_to_camera(world);
    let depth = -p.z;
    if depth <= intrinsics.near_m {
        return None;
    }
    let f = intrinsics.focal_px();
    let (cx, cy) = intrinsics.principal_point();
    Some((cx + f * p.x / depth, cy - f * p.y / depth, depth))
}

#[derive(Debug, Clone, PartialEq)]
pub struct FrameBuffers {
    pub width: u32,
    pub height: u32,
    /// Row-major interleaved RGB.
    pub rgb: Vec<u8>,
    /// Row-major object ids, 0 for background and terrain.
    pub id: Vec<u32>,
    /// Camera-space depth in meters; `far_m` where nothing was drawn.
    pub depth: Vec<f64>,
}

impl FrameBuffers {
    fn new(intrinsics: &CameraIntrinsics, sky: [u8; 3]) -> Self {
        let n = intrinsics.width_px as usize * intrinsics.height_px as usize;
        FrameBuffers {
            width: intrinsics.width_px,
            height: intrinsics.height_px,
            rgb: sky.iter().copied().cycle().take(3 * n).collect(),
            id: vec![0; n],
            depth: vec![intrinsics.far_m; n],
        }
    }

    pub fn id_at(&self, x: u32, y: u32) -> u32 {
        self.id[(y * self.width + x) as usize]
    }

    pub fn depth_at(&self, x: u32, y: u32) -> f64 {
        self.depth[(y * self.width + x) as usize]
    }

    pub fn id_buffer(&self) -> IdBuffer<'_> {
        IdBuffer {
            width: self.width,
            height: self.height,
            ids: &self.id,
        }
    }

    pub fn encode_rgb_png(&self) -> Result<Vec<u8>> {
        let img: ImageBuffer<Rgb<u8>, &[u8]> = ImageBuffer::from_raw(self.width, self.height, &self.rgb[..])
            .expect("rgb buffer sized by construction");
        encode_png(&img)
    }

    pub fn encode_id_png(&self) -> Result<Vec<u8>> {
        let mut ids = Vec::with_capacity(self.id.len());
        for &id in &self.id {
            ids.push(u16::try_from(id).map_err(|_| {
                Error::InvalidArgument(format!("object id {id} does not fit a 16-bit id image"))
            })?);
        }
        let img: ImageBuffer<Luma<u16>, Vec<u16>> =
            ImageBuffer::from_raw(self.width, self.height, ids).expect("id buffer sized by construction");
        encode_png(&img)
    }

    /// Little-endian f32 depth values, row-major.
    pub fn encode_depth(&self) -> Vec<u8> {
        self.depth.iter().flat_map(|d| (*d as f32).to_le_bytes()).collect()
    }

    /// Writes `<frame_id>.png`, `<frame_id>_id.png` and optionally
    /// `<frame_id>_depth.f32` under `dir`, each atomically.
    pub fn write(&self, dir: &Path, frame_id: &str, with_depth: bool) -> Result<Vec<PathBuf>> {
        let base = dir.join(frame_id);
        let name = |suffix: &str| {
            let mut s = base.clone().into_os_string();
            s.push(suffix);
            PathBuf::from(s)
        };
        let mut written = vec![name(".png"), name("_id.png")];
        write_atomic(&written[0], &self.encode_rgb_png()?)?;
        write_atomic(&written[1], &self.encode_id_png()?)?;
        if with_depth {
            written.push(name("_depth.f32"));
            write_atomic(&written[2], &self.encode_depth())?;
        }
        Ok(written)
    }
}

fn encode_png<P, C>(img: &ImageBuffer<P, C>) -> Result<Vec<u8>>
where
    P: image::PixelWithColorType,
    [P::Subpixel]: image::EncodableLayout,
    C: std::ops::Deref<Target = [P::Subpixel]>,
{
    let mut out = Vec::new();
    img.write_to(&mut Cursor::new(&mut out), ImageFormat::Png)
        .map_err(|e| Error::Encode {
            path: PathBuf::new(),
            message: e.to_string(),
        })?;
    Ok(out)
}

/// Borrowed view of a row-major id image.
#[derive(Debug, Clone, Copy)]
pub struct IdBuffer<'a> {
    pub width: u32,
    pub height: u32,
    pub ids: &'a [u32],
}

/// Reads a 16-bit id PNG back into a row-major id vector.
pub fn read_id_png(path: &Path) -> Result<(u32, u32, Vec<u32>)> {
    let img = image::open(path).map_err(|e| match e {
        image::ImageError::IoError(io) => Error::read(path, io),
        other => Error::Encode {
            path: path.to_path_buf(),
            message: other.to_string(),
        },
    })?;
    let img = img.into_luma16();
    let (w, h) = img.dimensions();
    Ok((w, h, img.into_raw().into_iter().map(u32::from).collect()))
}

#[derive(Clone, Copy)]
struct ScreenVertex {
    x: f64,
    y: f64,
    inv_depth: f64,
}

/// Renders the scene from `camera`: flat Lambert shading plus ambient, no shadows.
pub fn render(scene: &SceneSpec, camera: &CameraPose, intrinsics: &CameraIntrinsics) -> FrameBuffers {
    let sun = sun_direction(&scene.sun);
    let ambient = scene.sun.ambient_fraction;
    let sky_gain = 0.55 + 0.45 * scene.sun.sun_elevation_deg.to_radians().sin();
    let mut fb = FrameBuffers::new(intrinsics, SKY.map(|c| quantize(c * sky_gain)));

    let f = intrinsics.focal_px();
    let (cx, cy) = intrinsics.principal_point();
    let near = intrinsics.near_m;
    let to_camera = camera.rotation.transpose();

    for tri in scene.triangles().iter() {
        let cam: [Vec3; 3] = tri.vertices.map(|v| to_camera * (v - camera.position));
        if cam.iter().all(|p| -p.z <= near) || cam.iter().all(|p| -p.z >= intrinsics.far_m) {
            continue;
        }
        let lambert = tri.normal.dot(&(-sun)).max(0.0);
        let shade = ambient + (1.0 - ambient) * lambert;
        let color = tri.color.map(|c| quantize(c * shade));

        let poly = clip_near(&cam, near);
        let screen: Vec<ScreenVertex> = poly
            .iter()
            .map(|p| {
                let depth = -p.z;
                ScreenVertex {
                    x: cx + f * p.x / depth,
                    y: cy - f * p.y / depth,
                    inv_depth: 1.0 / depth,
                }
            })
            .collect();
        for k in 1..screen.len().saturating_sub(1) {
            fill_triangle(&mut fb, intrinsics.far_m, [screen[0], screen[k], screen[k + 1]], tri.object_id, color);
        }
    }
    fb
}

fn quantize(c: f64) -> u8 {
    (c.clamp(0.0, 1.0) * 255.0).round() as u8
}

/// Sutherland–Hodgman against the plane depth = near (camera looks along −z).
fn clip_near(tri: &[Vec3; 3], near: f64) -> Vec<Vec3> {
    let inside = |p: &Vec3| -p.z >= near;
    if tri.iter().all(inside) {
        return tri.to_vec();
    }
    let mut out = Vec::with_capacity(4);
    for i in 0..3 {
        let a = tri[i];
        let b = tri[(i + 1) % 3];
        let (ia, ib) = (inside(&a), inside(&b));
        if ia {
            out.push(a);
        }
        if ia != ib {
            let t = (-a.z - near) / ((-a.z) - (-b.z));
            let mut p = a + (b - a) * t;
            p.z = -near;
            out.push(p);
        }
    }
    out
}

fn edge(a: &ScreenVertex, b: &ScreenVertex, px: f64, py: f64) -> f64 {
    (b.x - a.x) * (py - a.y) - (b.y - a.y) * (px - a.x)
}

/// Whether edge a→b is a top or left edge for a triangle with positive
/// `edge` area in y-down screen space.
fn is_top_left(a: &ScreenVertex, b: &ScreenVertex) -> bool {
    let dx = b.x - a.x;
    let dy = b.y - a.y;
    (dy == 0.0 && dx > 0.0) || dy < 0.0
}

fn fill_triangle(fb: &mut FrameBuffers, far: f64, v: [ScreenVertex; 3], object_id: u32, color: [u8; 3]) {
    let [v0, mut v1, mut v2] = v;
    let mut area = edge(&v0, &v1, v2.x, v2.y);
    if area == 0.0 || !area.is_finite() {
        return;
    }
    if area < 0.0 {
        std::mem::swap(&mut v1, &mut v2);
        area = -area;
    }
    let (w, h) = (fb.width as f64, fb.height as f64);
    let min_x = v0.x.min(v1.x).min(v2.x);
    let max_x = v0.x.max(v1.x).max(v2.x);
    let min_y = v0.y.min(v1.y).min(v2.y);
    let max_y = v0.y.max(v1.y).max(v2.y);
    if max_x < 0.0 || max_y < 0.0 || min_x >= w || min_y >= h {
        return;
    }
    // pixel (i, j) is sampled at its center (i + 0.5, j + 0.5)
    let x0 = (min_x - 0.5).ceil().max(0.0) as u32;
    let x1 = (max_x - 0.5).floor().min(w - 1.0);
    let y0 = (min_y - 0.5).ceil().max(0.0) as u32;
    let y1 = (max_y - 0.5).floor().min(h - 1.0);
    if x1 < 0.0 || y1 < 0.0 {
        return;
    }
    let (x1, y1) = (x1 as u32, y1 as u32);

    let tl0 = is_top_left(&v1, &v2);
    let tl1 = is_top_left(&v2, &v0);
    let tl2 = is_top_left(&v0, &v1);
    let covers = |e: f64, top_left: bool| e > 0.0 || (e == 0.0 && top_left);

    for y in y0..=y1 {
        let py = y as f64 + 0.5;
        let row = (y * fb.width) as usize;
        for x in x0..=x1 {
            let px = x as f64 + 0.5;
            let e0 = edge(&v1, &v2, px, py);
            let e1 = edge(&v2, &v0, px, py);
            let e2 = edge(&v0, &v1, px, py);
            if !(covers(e0, tl0) && covers(e1, tl1) && covers(e2, tl2)) {
                continue;
            }
            let inv = (e0 * v0.inv_depth + e1 * v1.inv_depth + e2 * v2.inv_depth) / area;
            let depth = 1.0 / inv;
            if !(depth < far) {
                continue;
            }
            let idx = row + x as usize;
            let stored = fb.depth[idx];
            if depth < stored || (depth == stored && object_id < fb.id[idx]) {
                fb.depth[idx] = depth;
                fb.id[idx] = object_id;
                fb.rgb[3 * idx..3 * idx + 3].copy_from_slice(&color);
            }
        }
    }
}
