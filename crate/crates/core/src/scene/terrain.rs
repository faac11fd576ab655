//! Procedural desert terrain: a value-noise heightmap with a flat disc around
//! the origin so targets placed there always sit on z = 0.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Vec3;

const SAND: [f64; 3] = [0.80, 0.69, 0.49];
const ROCK: [f64; 3] = [0.58, 0.46, 0.36];
const OCTAVES: u32 = 4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TerrainParams {
    pub seed: u64,
    pub extent_m: f64,
    pub cell_m: f64,
    #[serde(default = "default_flat_radius")]
    pub flat_radius_m: f64,
    #[serde(default = "default_amplitude")]
    pub amplitude_m: f64,
}

fn default_flat_radius() -> f64 {
    60.0
}

fn default_amplitude() -> f64 {
    8.0
}

impl TerrainParams {
    pub fn new(seed: u64, extent_m: f64, cell_m: f64) -> Self {
        TerrainParams {
            seed,
            extent_m,
            cell_m,
            flat_radius_m: default_flat_radius(),
            amplitude_m: default_amplitude(),
        }
    }
}

/// Square heightmap centered on the origin with `cells + 1` vertices per side.
#[derive(Debug, Clone, PartialEq)]
pub struct Terrain {
    pub params: TerrainParams,
    pub cells: usize,
    heights: Vec<f64>,
}

pub fn build_terrain(seed: u64, extent_m: f64, cell_m: f64) -> Result<Terrain> {
    Terrain::build(TerrainParams::new(seed, extent_m, cell_m))
}

impl Terrain {
    pub fn build(params: TerrainParams) -> Result<Self> {
        if !(params.extent_m > 0.0 && params.extent_m.is_finite()) {
            return Err(Error::config("scene.terrain.extent_m", "must be > 0"));
        }
        if !(params.cell_m > 0.0 && params.cell_m.is_finite()) {
            return Err(Error::config("scene.terrain.cell_m", "must be > 0"));
        }
        if !(params.flat_radius_m >= 0.0) {
            return Err(Error::config("scene.terrain.flat_radius_m", "must be >= 0"));
        }
        if !(0.0..=8.0).contains(&params.amplitude_m) {
            return Err(Error::config("scene.terrain.amplitude_m", "must lie in [0, 8]"));
        }
        let cells = ((params.extent_m / params.cell_m).round() as usize).max(1);
        if cells > 4096 {
            return Err(Error::config(
                "scene.terrain.cell_m",
                format!("grid of {cells} cells per side is too fine"),
            ));
        }
        let mut heights = Vec::with_capacity((cells + 1) * (cells + 1));
        let mut terrain = Terrain {
            params,
            cells,
            heights: Vec::new(),
        };
        for j in 0..=cells {
            for i in 0..=cells {
                let p = terrain.vertex_xy(i, j);
                heights.push(terrain.height_fn(p.0, p.1));
            }
        }
        terrain.heights = heights;
        Ok(terrain)
    }

    fn origin(&self) -> f64 {
        -0.5 * self.cells as f64 * self.params.cell_m
    }

    fn vertex_xy(&self, i: usize, j: usize) -> (f64, f64) {
        let o = self.origin();
        (o + i as f64 * self.params.cell_m, o + j as f64 * self.params.cell_m)
    }

    /// Blend factor from the flat disc to full relief. The disc is padded by one
    /// cell diagonal so no mesh triangle overlapping the disc has a raised vertex.
    fn relief_weight(&self, x: f64, y: f64) -> f64 {
        let inner = self.params.flat_radius_m + 1.5 * self.params.cell_m;
        let outer = inner + 40.0;
        let r = x.hypot(y);
        if r <= inner {
            0.0
        } else if r >= outer {
            1.0
        } else {
            let t = (r - inner) / (outer - inner);
            t * t * (3.0 - 2.0 * t)
        }
    }

    fn height_fn(&self, x: f64, y: f64) -> f64 {
        let w = self.relief_weight(x, y);
        if w == 0.0 {
            return 0.0;
        }
        self.params.amplitude_m * w * fbm(self.params.seed, x / 64.0, y / 64.0)
    }

    pub fn vertex(&self, i: usize, j: usize) -> Vec3 {
        let (x, y) = self.vertex_xy(i, j);
        Vec3::new(x, y, self.heights[j * (self.cells + 1) + i])
    }

    pub fn heights(&self) -> &[f64] {
        &self.heights
    }

    /// Elevation of the triangulated surface at (x, y); 0 outside the grid.
    pub fn elevation_at(&self, x: f64, y: f64) -> f64 {
        let fx = (x - self.origin()) / self.params.cell_m;
        let fy = (y - self.origin()) / self.params.cell_m;
        if fx < 0.0 || fy < 0.0 || fx > self.cells as f64 || fy > self.cells as f64 {
            return 0.0;
        }
        let i = (fx.floor() as usize).min(self.cells - 1);
        let j = (fy.floor() as usize).min(self.cells - 1);
        let (u, v) = (fx - i as f64, fy - j as f64);
        let h = |di, dj| self.heights[(j + dj) * (self.cells + 1) + i + di];
        // Same diagonal split as `triangles`: (0,0)-(1,0)-(1,1) and (0,0)-(1,1)-(0,1).
        if u >= v {
            h(0, 0) + u * (h(1, 0) - h(0, 0)) + v * (h(1, 1) - h(1, 0))
        } else {
            h(0, 0) + v * (h(0, 1) - h(0, 0)) + u * (h(1, 1) - h(0, 1))
        }
    }

    /// Sand base tone with noise mottling, shading toward rock with elevation.
    pub fn color_at(&self, x: f64, y: f64, z: f64) -> [f64; 3] {
        let mottle = 0.88 + 0.24 * value_noise(self.params.seed ^ 0x5eed_c0105, x / 6.0, y / 6.0);
        let rock = (z / 8.0).clamp(0.0, 1.0);
        let mut c = [0.0; 3];
        for k in 0..3 {
            c[k] = ((SAND[k] * (1.0 - rock) + ROCK[k] * rock) * mottle).clamp(0.0, 1.0);
        }
        c
    }

    /// Triangles of the heightmap, two per cell, counterclockwise seen from above.
    pub fn triangles(&self) -> impl Iterator<Item = [Vec3; 3]> + '_ {
        (0..self.cells).flat_map(move |j| {
            (0..self.cells).flat_map(move |i| {
                let a = self.vertex(i, j);
                let b = self.vertex(i + 1, j);
                let c = self.vertex(i + 1, j + 1);
                let d = self.vertex(i, j + 1);
                [[a, b, c], [a, c, d]]
            })
        })
    }
}

fn hash2(seed: u64, ix: i64, iy: i64) -> f64 {
    // splitmix64 finalizer over the packed lattice coordinates
    let mut z = seed
        .wrapping_add((ix as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15))
        .wrapping_add((iy as u64).wrapping_mul(0xC2B2_AE3D_27D4_EB4F));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^= z >> 31;
    (z >> 11) as f64 / (1u64 << 53) as f64
}

fn value_noise(seed: u64, x: f64, y: f64) -> f64 {
    let (x0, y0) = (x.floor(), y.floor());
    let (ix, iy) = (x0 as i64, y0 as i64);
    let s = |t: f64| t * t * (3.0 - 2.0 * t);
    let (u, v) = (s(x - x0), s(y - y0));
    let a = hash2(seed, ix, iy);
    let b = hash2(seed, ix + 1, iy);
    let c = hash2(seed, ix, iy + 1);
    let d = hash2(seed, ix + 1, iy + 1);
    let top = a + (b - a) * u;
    let bottom = c + (d - c) * u;
    top + (bottom - top) * v
}

/// Fractal sum of value noise, normalized to [0, 1].
fn fbm(seed: u64, x: f64, y: f64) -> f64 {
    let mut sum = 0.0;
    let mut norm = 0.0;
    let mut amp = 1.0;
    let mut freq = 1.0;
    for octave in 0..OCTAVES {
        sum += amp * value_noise(seed.wrapping_add(octave as u64 * 7919), x * freq, y * freq);
        norm += amp;
        amp *= 0.5;
        freq *= 2.0;
    }
    sum / norm
}
