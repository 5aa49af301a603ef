//! Ground-truth synthetic collections: a height field with albedo texture,
//! Blinn specular highlights and hard cast shadows, seen orthographically
//! from above.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Result, RtiError};
use crate::geometry::LightDirection;
use crate::mlic::Mlic;
use crate::raster::ImagePlane;

/// Surface description; heights are in pixel units.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticScene {
    width: usize,
    height: usize,
    height_field: Vec<f32>,
    albedo: Vec<f32>,
    ks: f64,
    shininess: f64,
    chroma: (f64, f64),
    max_height: f32,
}

impl SyntheticScene {
    pub fn new(
        width: usize,
        height: usize,
        height_field: Vec<f32>,
        albedo: Vec<f32>,
        ks: f64,
        shininess: f64,
        chroma: (f64, f64),
    ) -> Result<Self> {
        let n = width * height;
        if n == 0 || height_field.len() != n || albedo.len() != n {
            return Err(RtiError::invalid("height field and albedo must cover the whole image"));
        }
        if height_field.iter().any(|h| !h.is_finite()) {
            return Err(RtiError::invalid("heights must be finite"));
        }
        if albedo.iter().any(|a| !(0.0..=1.0).contains(a)) {
            return Err(RtiError::invalid("albedo must lie in [0, 1]"));
        }
        if !(ks >= 0.0) || !(shininess >= 1.0) {
            return Err(RtiError::invalid("need ks >= 0 and shininess >= 1"));
        }
        let max_height = height_field.iter().copied().fold(f32::NEG_INFINITY, f32::max);
        Ok(Self {
            width,
            height,
            height_field,
            albedo,
            ks,
            shininess,
            chroma,
            max_height,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn chroma(&self) -> (f64, f64) {
        self.chroma
    }

    pub fn height_at(&self, x: usize, y: usize) -> f32 {
        self.height_field[y * self.width + x]
    }

    /// Unit normal from central differences (one-sided at the border).
    pub fn normal(&self, x: usize, y: usize) -> [f64; 3] {
        let h = |x: usize, y: usize| self.height_at(x, y) as f64;
        let (x0, x1) = (x.saturating_sub(1), (x + 1).min(self.width - 1));
        let (y0, y1) = (y.saturating_sub(1), (y + 1).min(self.height - 1));
        let dx = if x1 > x0 { (h(x1, y) - h(x0, y)) / (x1 - x0) as f64 } else { 0.0 };
        let dy = if y1 > y0 { (h(x, y1) - h(x, y0)) / (y1 - y0) as f64 } else { 0.0 };
        let len = (dx * dx + dy * dy + 1.0).sqrt();
        [-dx / len, -dy / len, 1.0 / len]
    }

    fn height_bilinear(&self, x: f64, y: f64) -> f64 {
        let x0 = x.floor() as usize;
        let y0 = y.floor() as usize;
        let x1 = (x0 + 1).min(self.width - 1);
        let y1 = (y0 + 1).min(self.height - 1);
        let (fx, fy) = (x - x0 as f64, y - y0 as f64);
        let h = |x: usize, y: usize| self.height_at(x, y) as f64;
        let top = h(x0, y0) * (1.0 - fx) + h(x1, y0) * fx;
        let bottom = h(x0, y1) * (1.0 - fx) + h(x1, y1) * fx;
        top * (1.0 - fy) + bottom * fy
    }

    /// Whether the ray from the surface at `(x, y)` towards `l` hits the
    /// height field before leaving the image or rising above its top.
    pub fn in_cast_shadow(&self, x: usize, y: usize, l: &LightDirection) -> bool {
        let planar = (l.x() * l.x() + l.y() * l.y()).sqrt();
        if planar < 1e-12 {
            return false;
        }
        // half-pixel steps in the image plane
        let step = 0.5;
        let (dx, dy) = (l.x() / planar * step, l.y() / planar * step);
        let dz = l.z() / planar * step;
        let (mut px, mut py) = (x as f64, y as f64);
        let mut pz = self.height_at(x, y) as f64;
        let top = self.max_height as f64;
        // skip the first pixel to avoid sampling the starting facet
        for i in 1.. {
            px += dx;
            py += dy;
            pz += dz;
            if px < 0.0 || py < 0.0 || px > (self.width - 1) as f64 || py > (self.height - 1) as f64 || pz > top {
                return false;
            }
            if i >= 2 && self.height_bilinear(px, py) > pz + 1e-3 {
                return true;
            }
        }
        unreachable!()
    }

    /// Luminance of pixel `(x, y)` under light `l`.
    pub fn shade(&self, x: usize, y: usize, l: &LightDirection) -> f32 {
        let n = self.normal(x, y);
        let la = l.as_array();
        let ndotl = n[0] * la[0] + n[1] * la[1] + n[2] * la[2];
        if ndotl <= 0.0 || self.in_cast_shadow(x, y, l) {
            return 0.0;
        }
        let half = [la[0], la[1], la[2] + 1.0];
        let hl = (half[0] * half[0] + half[1] * half[1] + half[2] * half[2]).sqrt();
        let ndoth = ((n[0] * half[0] + n[1] * half[1] + n[2] * half[2]) / hl).max(0.0);
        let albedo = self.albedo[y * self.width + x] as f64;
        (albedo * ndotl + self.ks * ndoth.powf(self.shininess)).clamp(0.0, 1.0) as f32
    }
}

/// Renders the scene's luminance under light `l`.
pub fn synth_render(scene: &SyntheticScene, l: &LightDirection) -> ImagePlane {
    let w = scene.width;
    let mut data = vec![0.0f32; w * scene.height];
    data.par_chunks_mut(w).enumerate().for_each(|(y, row)| {
        for (x, v) in row.iter_mut().enumerate() {
            *v = scene.shade(x, y, l);
        }
    });
    ImagePlane::new(w, scene.height, data).expect("sized buffer")
}

/// Generator parameters of the standard test scene, stored as `truth.json`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SceneSpec {
    pub width: usize,
    pub height: usize,
    pub ks: f64,
    pub shininess: f64,
    pub chroma_u: f64,
    pub chroma_v: f64,
    pub seed: u64,
}

impl Default for SceneSpec {
    fn default() -> Self {
        Self {
            width: 128,
            height: 128,
            ks: 0.4,
            shininess: 32.0,
            chroma_u: 0.03,
            chroma_v: -0.02,
            seed: 0,
        }
    }
}

impl SceneSpec {
    /// A central hemispherical dome, a few random Gaussian bumps and a
    /// striped, speckled albedo.
    pub fn build(&self) -> Result<SyntheticScene> {
        let (w, h) = (self.width, self.height);
        if w < 8 || h < 8 {
            return Err(RtiError::invalid("synthetic scenes need at least 8x8 pixels"));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let s = w.min(h) as f64;
        let dome = (w as f64 * 0.5, h as f64 * 0.5, s * 0.22);
        let bumps: Vec<(f64, f64, f64, f64)> = (0..5)
            .map(|_| {
                (
                    rng.random_range(0.1..0.9) * w as f64,
                    rng.random_range(0.1..0.9) * h as f64,
                    rng.random_range(0.04..0.08) * s,
                    rng.random_range(0.05..0.12) * s,
                )
            })
            .collect();
        let mut heights = Vec::with_capacity(w * h);
        let mut albedo = Vec::with_capacity(w * h);
        let phase: f64 = rng.random_range(0.0..std::f64::consts::TAU);
        for y in 0..h {
            for x in 0..w {
                let (fx, fy) = (x as f64, y as f64);
                let r2 = (fx - dome.0).powi(2) + (fy - dome.1).powi(2);
                let mut z = (dome.2 * dome.2 - r2).max(0.0).sqrt();
                for &(cx, cy, sigma, amp) in &bumps {
                    z += amp * (-((fx - cx).powi(2) + (fy - cy).powi(2)) / (2.0 * sigma * sigma)).exp();
                }
                heights.push(z as f32);
                let stripes = 0.5 + 0.5 * (fx * 0.35 + fy * 0.12 + phase).sin();
                let speckle: f64 = rng.random_range(-0.05..0.05);
                albedo.push((0.45 + 0.35 * stripes + speckle).clamp(0.0, 1.0) as f32);
            }
        }
        SyntheticScene::new(w, h, heights, albedo, self.ks, self.shininess, (self.chroma_u, self.chroma_v))
    }
}

/// Light sampling patterns.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Trajectory {
    /// `n` lights covering the hemisphere with equal area each.
    Dome { n: usize },
    /// `n` lights on a circle of constant zenith, perturbed like a handheld
    /// capture. Jitter is a standard deviation in degrees, truncated at three
    /// deviations.
    Orbit { n: usize, zenith_deg: f64, jitter_deg: f64 },
}

impl Trajectory {
    pub fn len(&self) -> usize {
        match *self {
            Trajectory::Dome { n } | Trajectory::Orbit { n, .. } => n,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn lights(&self, seed: u64) -> Result<Vec<LightDirection>> {
        match *self {
            Trajectory::Dome { n } => (0..n)
                .map(|i| {
                    let z = 1.0 - (i as f64 + 0.5) / n as f64;
                    let golden = std::f64::consts::PI * (3.0 - 5f64.sqrt());
                    LightDirection::from_angles(z.acos(), golden * i as f64)
                })
                .collect(),
            Trajectory::Orbit { n, zenith_deg, jitter_deg } => {
                if !(0.0..=90.0).contains(&zenith_deg) || !(jitter_deg >= 0.0) {
                    return Err(RtiError::invalid("orbit needs zenith in [0, 90] and non-negative jitter"));
                }
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let normal = Normal::new(0.0, jitter_deg.max(f64::MIN_POSITIVE)).expect("valid sigma");
                let draw = |rng: &mut ChaCha8Rng| loop {
                    let d: f64 = normal.sample(rng);
                    if d.abs() <= 3.0 * jitter_deg {
                        return d;
                    }
                };
                (0..n)
                    .map(|i| {
                        let mut zenith = zenith_deg + draw(&mut rng);
                        // reflect back into [0, 90]
                        if zenith < 0.0 {
                            zenith = -zenith;
                        }
                        if zenith > 90.0 {
                            zenith = 180.0 - zenith;
                        }
                        let azimuth = 360.0 * i as f64 / n as f64 + draw(&mut rng);
                        LightDirection::from_angles(zenith.to_radians(), azimuth.to_radians())
                    })
                    .collect()
            }
        }
    }
}

/// Renders the scene under every light of the trajectory.
pub fn synth_mlic(scene: &SyntheticScene, trajectory: &Trajectory, seed: u64) -> Result<Mlic> {
    if trajectory.is_empty() {
        return Err(RtiError::invalid("trajectory has no lights"));
    }
    let lights = trajectory.lights(seed)?;
    synth_mlic_from_lights(scene, &lights)
}

/// Renders the scene under the given lights.
pub fn synth_mlic_from_lights(scene: &SyntheticScene, lights: &[LightDirection]) -> Result<Mlic> {
    let planes: Vec<ImagePlane> = lights.par_iter().map(|l| synth_render(scene, l)).collect();
    let (u, v) = scene.chroma;
    let plane = |c: f64| ImagePlane::filled(scene.width, scene.height, (c + 0.5).clamp(0.0, 1.0) as f32);
    Mlic::new(planes, lights.to_vec(), plane(u), plane(v), (0..lights.len()).collect())
}
