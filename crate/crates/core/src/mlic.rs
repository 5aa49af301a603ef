//! Multi-light image collection assembly, persistence and train/test splits.

use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::color::rgb_to_yuv;
use crate::error::{Result, RtiError};
use crate::geometry::{LightDirection, Point2};
use crate::marker::MarkerDetection;
use crate::pose::estimate_homography;
use crate::raster::{unit_to_u8, ImagePlane, RgbImage};
use crate::sync::FrameIndexMap;

/// Default rectified crop edge, in pixels.
pub const DEFAULT_CROP_SIZE: usize = 400;
/// Default train/test exclusion radius in the `(l_u, l_v)` plane.
pub const DEFAULT_EXCLUSION_RADIUS: f64 = 0.05;

/// Co-registered luminance planes, one per light, plus mean chroma.
///
/// Chroma planes store `value + 0.5` so that zero chroma is exactly `0.5`.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlic {
    width: usize,
    height: usize,
    luminance: Vec<ImagePlane>,
    lights: Vec<LightDirection>,
    mean_u: ImagePlane,
    mean_v: ImagePlane,
    frame_ids: Vec<usize>,
}

impl Mlic {
    pub fn new(
        luminance: Vec<ImagePlane>,
        lights: Vec<LightDirection>,
        mean_u: ImagePlane,
        mean_v: ImagePlane,
        frame_ids: Vec<usize>,
    ) -> Result<Self> {
        if luminance.is_empty() {
            return Err(RtiError::EmptyMlic("no luminance planes".into()));
        }
        if lights.len() != luminance.len() || frame_ids.len() != luminance.len() {
            return Err(RtiError::invalid(format!(
                "{} planes but {} lights and {} frame ids",
                luminance.len(),
                lights.len(),
                frame_ids.len()
            )));
        }
        let (width, height) = (luminance[0].width(), luminance[0].height());
        if luminance.iter().chain([&mean_u, &mean_v]).any(|p| p.width() != width || p.height() != height) {
            return Err(RtiError::invalid("all planes must share the same dimensions"));
        }
        Ok(Self {
            width,
            height,
            luminance,
            lights,
            mean_u,
            mean_v,
            frame_ids,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixel_count(&self) -> usize {
        self.width * self.height
    }

    /// Number of lights `N`.
    pub fn len(&self) -> usize {
        self.lights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lights.is_empty()
    }

    pub fn luminance(&self) -> &[ImagePlane] {
        &self.luminance
    }

    pub fn lights(&self) -> &[LightDirection] {
        &self.lights
    }

    pub fn mean_u(&self) -> &ImagePlane {
        &self.mean_u
    }

    pub fn mean_v(&self) -> &ImagePlane {
        &self.mean_v
    }

    pub fn frame_ids(&self) -> &[usize] {
        &self.frame_ids
    }

    /// The `N` observed intensities of pixel index `p` (row-major).
    pub fn pixel_vector(&self, p: usize) -> Vec<f64> {
        self.luminance.iter().map(|plane| plane.data()[p] as f64).collect()
    }

    /// Collection restricted to the given light indices (chroma unchanged).
    pub fn subset(&self, indices: &[usize]) -> Result<Mlic> {
        if let Some(&bad) = indices.iter().find(|&&i| i >= self.len()) {
            return Err(RtiError::invalid(format!("light index {bad} out of range")));
        }
        Mlic::new(
            indices.iter().map(|&i| self.luminance[i].clone()).collect(),
            indices.iter().map(|&i| self.lights[i]).collect(),
            self.mean_u.clone(),
            self.mean_v.clone(),
            indices.iter().map(|&i| self.frame_ids[i]).collect(),
        )
    }

    /// Appends the planes of `other`, which must share dimensions. Chroma is
    /// the light-count weighted average of both.
    pub fn concat(&self, other: &Mlic) -> Result<Mlic> {
        if other.width != self.width || other.height != self.height {
            return Err(RtiError::invalid("collections have different dimensions"));
        }
        let (a, b) = (self.len() as f32, other.len() as f32);
        let blend = |p: &ImagePlane, q: &ImagePlane| {
            let data = p.data().iter().zip(q.data()).map(|(x, y)| (x * a + y * b) / (a + b)).collect();
            ImagePlane::new(self.width, self.height, data)
        };
        Mlic::new(
            self.luminance.iter().chain(&other.luminance).cloned().collect(),
            self.lights.iter().chain(&other.lights).copied().collect(),
            blend(&self.mean_u, &other.mean_u)?,
            blend(&self.mean_v, &other.mean_v)?,
            self.frame_ids.iter().chain(&other.frame_ids).copied().collect(),
        )
    }

    /// Writes `meta.json`, `y_%05d.png`, `meanU.png` and `meanV.png` into `dir`.
    pub fn save(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir)?;
        let meta = MlicMeta {
            width: self.width,
            height: self.height,
            n: self.len(),
            lights: self.lights.iter().map(|l| [l.x(), l.y(), l.z()]).collect(),
            frame_ids: self.frame_ids.clone(),
        };
        std::fs::write(dir.join("meta.json"), serde_json::to_string_pretty(&meta)?)?;
        self.luminance
            .par_iter()
            .enumerate()
            .try_for_each(|(i, plane)| plane.save_png(dir.join(format!("y_{i:05}.png"))))?;
        self.mean_u.save_png(dir.join("meanU.png"))?;
        self.mean_v.save_png(dir.join("meanV.png"))?;
        Ok(())
    }

    pub fn load(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        let meta: MlicMeta = serde_json::from_slice(&std::fs::read(dir.join("meta.json"))?)?;
        if meta.lights.len() != meta.n || meta.frame_ids.len() != meta.n {
            return Err(RtiError::invalid("meta.json: light/frame counts disagree with n"));
        }
        let luminance = (0..meta.n)
            .into_par_iter()
            .map(|i| ImagePlane::load_png(dir.join(format!("y_{i:05}.png"))))
            .collect::<Result<Vec<_>>>()?;
        let lights = meta
            .lights
            .iter()
            .map(|l| LightDirection::new(l[0], l[1], l[2]))
            .collect::<Result<Vec<_>>>()?;
        let mlic = Mlic::new(
            luminance,
            lights,
            ImagePlane::load_png(dir.join("meanU.png"))?,
            ImagePlane::load_png(dir.join("meanV.png"))?,
            meta.frame_ids,
        )?;
        if mlic.width != meta.width || mlic.height != meta.height {
            return Err(RtiError::invalid("meta.json dimensions disagree with the stored planes"));
        }
        Ok(mlic)
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct MlicMeta {
    width: usize,
    height: usize,
    n: usize,
    lights: Vec<[f64; 3]>,
    frame_ids: Vec<usize>,
}

/// Per-frame light estimate handed from pose estimation to extraction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LightRecord {
    pub frame: usize,
    pub lu: f64,
    pub lv: f64,
    pub lz: f64,
}

impl LightRecord {
    pub fn new(frame: usize, l: &LightDirection) -> Self {
        Self {
            frame,
            lu: l.x(),
            lv: l.y(),
            lz: l.z(),
        }
    }

    pub fn direction(&self) -> Result<LightDirection> {
        LightDirection::new(self.lu, self.lv, self.lz)
    }
}

/// Warps the quadrilateral spanned by the detected corners onto an
/// `out_w x out_h` image (bilinear, edge clamped).
pub fn rectify_crop(frame: &RgbImage, det: &MarkerDetection, out_w: usize, out_h: usize) -> Result<RgbImage> {
    if out_w == 0 || out_h == 0 {
        return Err(RtiError::invalid("crop size must be positive"));
    }
    let (w, h) = (out_w as f64, out_h as f64);
    let target = [Point2::new(0.0, 0.0), Point2::new(w, 0.0), Point2::new(w, h), Point2::new(0.0, h)];
    let to_crop = estimate_homography(&det.corners, &target)?;
    let to_frame = to_crop.inverse()?;
    Ok(RgbImage::from_fn(out_w, out_h, |x, y| {
        let p = to_frame.apply(Point2::new(x as f64, y as f64));
        frame.sample(p.x, p.y).map(|v| v.round().clamp(0.0, 255.0) as u8)
    }))
}

/// Splits a rectified RGB crop into luminance and signed chroma planes.
fn split_yuv(img: &RgbImage) -> (Vec<f32>, Vec<f64>, Vec<f64>) {
    let n = img.width() * img.height();
    let mut y = Vec::with_capacity(n);
    let mut u = Vec::with_capacity(n);
    let mut v = Vec::with_capacity(n);
    for p in img.data().chunks_exact(3) {
        let (yy, uu, vv) = rgb_to_yuv(p[0] as f64 / 255.0, p[1] as f64 / 255.0, p[2] as f64 / 255.0);
        y.push(yy as f32);
        u.push(uu);
        v.push(vv);
    }
    (y, u, v)
}

/// Assembles the collection from synchronised frame pairs.
///
/// A pair contributes only when the static frame has a marker detection and
/// the moving frame produced a light direction. `load_static` fetches static
/// frame `i` on demand.
pub fn build_mlic<F>(
    pairs: &FrameIndexMap,
    static_dets: &[Option<MarkerDetection>],
    moving_lights: &[Option<LightDirection>],
    load_static: F,
    out_size: usize,
) -> Result<Mlic>
where
    F: Fn(usize) -> Result<RgbImage> + Sync,
{
    let usable: Vec<(usize, MarkerDetection, LightDirection)> = pairs
        .pairs
        .iter()
        .filter_map(|p| {
            let det = static_dets.get(p.static_idx).copied().flatten()?;
            let light = moving_lights.get(p.moving_idx).copied().flatten()?;
            Some((p.static_idx, det, light))
        })
        .collect();
    if usable.is_empty() {
        return Err(RtiError::EmptyMlic(
            "no synchronised pair has both a static detection and a moving light".into(),
        ));
    }

    let n_px = out_size * out_size;
    let mut sum_u = vec![0.0f64; n_px];
    let mut sum_v = vec![0.0f64; n_px];
    let mut luminance = Vec::with_capacity(usable.len());
    // bounded batches keep at most a few frames' chroma alive at once
    for batch in usable.chunks(16) {
        let processed = batch
            .par_iter()
            .map(|(idx, det, _)| {
                let frame = load_static(*idx).map_err(|e| e.context(format!("loading static frame {idx}")))?;
                let crop = rectify_crop(&frame, det, out_size, out_size)
                    .map_err(|e| e.context(format!("rectifying static frame {idx}")))?;
                Ok(split_yuv(&crop))
            })
            .collect::<Result<Vec<_>>>()?;
        for (y, u, v) in processed {
            sum_u.iter_mut().zip(&u).for_each(|(s, x)| *s += x);
            sum_v.iter_mut().zip(&v).for_each(|(s, x)| *s += x);
            luminance.push(ImagePlane::new(out_size, out_size, y)?);
        }
    }
    let n = usable.len() as f64;
    let mean_plane = |sum: &[f64]| {
        ImagePlane::new(
            out_size,
            out_size,
            sum.iter().map(|s| ((s / n + 0.5).clamp(0.0, 1.0)) as f32).collect(),
        )
    };
    Mlic::new(
        luminance,
        usable.iter().map(|u| u.2).collect(),
        mean_plane(&sum_u)?,
        mean_plane(&sum_v)?,
        usable.iter().map(|u| u.0).collect(),
    )
}

/// Disjoint train and test light indices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LightSplit {
    pub train_idx: Vec<usize>,
    pub test_idx: Vec<usize>,
    pub exclusion_radius: f64,
}

impl LightSplit {
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Ok(serde_json::from_slice(&std::fs::read(path)?)?)
    }

    /// Checks index ranges and disjointness against a collection of `n` lights.
    pub fn validate(&self, n: usize) -> Result<()> {
        let mut seen = vec![false; n];
        for &i in self.train_idx.iter().chain(&self.test_idx) {
            if i >= n {
                return Err(RtiError::invalid(format!("split index {i} out of range for {n} lights")));
            }
            if seen[i] {
                return Err(RtiError::invalid(format!("split index {i} appears twice")));
            }
            seen[i] = true;
        }
        Ok(())
    }
}

/// Samples `n_test` test lights uniformly and drops every train light closer
/// than `radius` (in the `(l_u, l_v)` plane) to any test light.
pub fn split_lights(lights: &[LightDirection], n_test: usize, radius: f64, seed: u64) -> Result<LightSplit> {
    if n_test >= lights.len() {
        return Err(RtiError::invalid(format!(
            "cannot hold out {n_test} of {} lights",
            lights.len()
        )));
    }
    if !(radius >= 0.0) {
        return Err(RtiError::invalid("exclusion radius must be non-negative"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut test_idx = rand::seq::index::sample(&mut rng, lights.len(), n_test).into_vec();
    test_idx.sort_unstable();
    let mut is_test = vec![false; lights.len()];
    test_idx.iter().for_each(|&i| is_test[i] = true);
    let train_idx: Vec<usize> = (0..lights.len())
        .filter(|&i| !is_test[i])
        .filter(|&i| test_idx.iter().all(|&t| lights[i].planar_distance(&lights[t]) >= radius))
        .collect();
    if train_idx.is_empty() {
        return Err(RtiError::SplitFailure(format!(
            "exclusion radius {radius} removes every training light"
        )));
    }
    Ok(LightSplit {
        train_idx,
        test_idx,
        exclusion_radius: radius,
    })
}

/// Mean luminance of every plane; handy for quick diagnostics.
pub fn plane_means(mlic: &Mlic) -> Vec<f64> {
    mlic.luminance
        .iter()
        .map(|p| p.data().iter().map(|&v| v as f64).sum::<f64>() / p.data().len() as f64)
        .collect()
}

/// Quantises a chroma plane the same way the on-disk format does.
pub fn quantise(plane: &ImagePlane) -> ImagePlane {
    let data = plane.data().iter().map(|&v| unit_to_u8(v) as f32 / 255.0).collect();
    ImagePlane::new(plane.width(), plane.height(), data).expect("same dimensions")
}
