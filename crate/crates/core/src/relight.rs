//! The packaged relightable model and its `RTIM` file format.
//!
//! Layout, little-endian throughout:
//!
//! | offset | type      | field                    |
//! |--------|-----------|--------------------------|
//! | 0      | `[u8; 4]` | magic `RTIM`             |
//! | 4      | `u16`     | version (1)              |
//! | 6      | `u32`     | width                    |
//! | 10     | `u32`     | height                   |
//! | 14     | `u8`      | bases `B`                |
//! | 15     | `u8`      | frequencies `Hf`         |
//! | 16     | `f32`     | Fourier sigma            |
//! | 20     | `u64`     | seed                     |
//! | 28     | `f32[]`   | Fourier matrix (`Hf x 2`)|
//!
//! followed by `f32` arrays for each network layer (the `in x out` weight
//! matrix row-major, then the `out` biases), the k-grid (`W * H * B`,
//! pixel-major) and the offset-coded mean chroma planes `U` and `V`.

use std::path::Path;

use rayon::prelude::*;

use crate::color::yuv_to_rgb;
use crate::error::{Result, RtiError};
use crate::geometry::LightDirection;
use crate::neural::mlp::{affine, architecture, elu};
use crate::neural::{FourierMatrix, MlpWeights};
use crate::pca::KGrid;
use crate::raster::{unit_to_u8, ImagePlane, RgbImage};

pub const RTIM_MAGIC: [u8; 4] = *b"RTIM";
pub const RTIM_VERSION: u16 = 1;
pub const RTIM_HEADER_LEN: usize = 28;

/// Anything that predicts a luminance image for a light direction.
pub trait Relight {
    fn width(&self) -> usize;
    fn height(&self) -> usize;
    /// Predicted luminance, clamped to `[0, 1]`.
    fn relight_luminance(&self, l: &LightDirection) -> ImagePlane;
}

/// Fourier matrix, decoder weights, coefficient grid and mean chroma.
#[derive(Debug, Clone, PartialEq)]
pub struct RelightModel {
    fourier: FourierMatrix,
    mlp: MlpWeights<f32>,
    kgrid: KGrid,
    mean_u: ImagePlane,
    mean_v: ImagePlane,
}

impl RelightModel {
    pub fn new(
        fourier: FourierMatrix,
        mlp: MlpWeights<f32>,
        kgrid: KGrid,
        mean_u: ImagePlane,
        mean_v: ImagePlane,
    ) -> Result<Self> {
        if mlp.dims() != architecture(kgrid.bases() + fourier.embedding_len()).as_slice() {
            return Err(RtiError::invalid(format!(
                "network widths {:?} do not fit B={} and Hf={}",
                mlp.dims(),
                kgrid.bases(),
                fourier.frequencies()
            )));
        }
        if kgrid.bases() > u8::MAX as usize {
            return Err(RtiError::invalid("at most 255 bases are supported"));
        }
        for plane in [&mean_u, &mean_v] {
            if plane.width() != kgrid.width() || plane.height() != kgrid.height() {
                return Err(RtiError::invalid("chroma planes and k-grid dimensions differ"));
            }
        }
        Ok(Self {
            fourier,
            mlp,
            kgrid,
            mean_u,
            mean_v,
        })
    }

    pub fn version(&self) -> u16 {
        RTIM_VERSION
    }

    pub fn width(&self) -> usize {
        self.kgrid.width()
    }

    pub fn height(&self) -> usize {
        self.kgrid.height()
    }

    pub fn bases(&self) -> usize {
        self.kgrid.bases()
    }

    pub fn frequencies(&self) -> usize {
        self.fourier.frequencies()
    }

    pub fn sigma(&self) -> f32 {
        self.fourier.sigma()
    }

    pub fn seed(&self) -> u64 {
        self.fourier.seed()
    }

    pub fn fourier(&self) -> &FourierMatrix {
        &self.fourier
    }

    pub fn mlp(&self) -> &MlpWeights<f32> {
        &self.mlp
    }

    pub fn kgrid(&self) -> &KGrid {
        &self.kgrid
    }

    pub fn mean_u(&self) -> &ImagePlane {
        &self.mean_u
    }

    pub fn mean_v(&self) -> &ImagePlane {
        &self.mean_v
    }

    /// Byte range of the k-grid segment inside the serialised file.
    pub fn kgrid_byte_range(&self) -> std::ops::Range<usize> {
        let start = RTIM_HEADER_LEN + 4 * (self.fourier.values().len() + self.mlp.param_count());
        start..start + 4 * self.kgrid.coeffs().len()
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let floats = self.fourier.values().len()
            + self.mlp.param_count()
            + self.kgrid.coeffs().len()
            + 2 * self.width() * self.height();
        let mut out = Vec::with_capacity(RTIM_HEADER_LEN + 4 * floats);
        out.extend_from_slice(&RTIM_MAGIC);
        out.extend_from_slice(&RTIM_VERSION.to_le_bytes());
        out.extend_from_slice(&(self.width() as u32).to_le_bytes());
        out.extend_from_slice(&(self.height() as u32).to_le_bytes());
        out.push(self.bases() as u8);
        out.push(self.frequencies() as u8);
        out.extend_from_slice(&self.sigma().to_le_bytes());
        out.extend_from_slice(&self.seed().to_le_bytes());
        for v in self
            .fourier
            .values()
            .iter()
            .chain(self.mlp.params())
            .chain(self.kgrid.coeffs())
            .chain(self.mean_u.data())
            .chain(self.mean_v.data())
        {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        let magic = r.take(4, "magic")?;
        if magic != RTIM_MAGIC {
            return Err(RtiError::format(0, format!("bad magic {magic:?}, expected \"RTIM\"")));
        }
        let version = u16::from_le_bytes(r.array("version")?);
        if version != RTIM_VERSION {
            return Err(RtiError::format(4, format!("unsupported version {version}")));
        }
        let width = u32::from_le_bytes(r.array("width")?) as usize;
        let height = u32::from_le_bytes(r.array("height")?) as usize;
        let bases = r.take(1, "bases")?[0] as usize;
        let hf = r.take(1, "frequencies")?[0] as usize;
        let sigma = f32::from_le_bytes(r.array("sigma")?);
        let seed = u64::from_le_bytes(r.array("seed")?);
        if width == 0 || height == 0 || bases == 0 {
            return Err(RtiError::format(6, format!("empty model {width}x{height} with {bases} bases")));
        }

        let at = r.pos as u64;
        let fourier = FourierMatrix::new(r.floats(2 * hf, "fourier matrix")?, sigma, seed)
            .map_err(|e| RtiError::format(at, e.to_string()))?;
        let dims = architecture(bases + 2 * hf);
        let n_params = MlpWeights::<f32>::zeros(&dims)?.param_count();
        let at = r.pos as u64;
        let mlp = MlpWeights::from_params(&dims, r.floats(n_params, "network weights")?)
            .map_err(|e| RtiError::format(at, e.to_string()))?;
        let px = width
            .checked_mul(height)
            .ok_or_else(|| RtiError::format(6, "image dimensions overflow"))?;
        let at = r.pos as u64;
        let kgrid = KGrid::new(width, height, bases, r.floats(px * bases, "k-grid")?)
            .map_err(|e| RtiError::format(at, e.to_string()))?;
        let mean_u = ImagePlane::new(width, height, r.floats(px, "mean U")?)?;
        let mean_v = ImagePlane::new(width, height, r.floats(px, "mean V")?)?;
        if r.pos != bytes.len() {
            return Err(RtiError::format(
                r.pos as u64,
                format!("{} unexpected trailing bytes", bytes.len() - r.pos),
            ));
        }
        Self::new(fourier, mlp, kgrid, mean_u, mean_v)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_bytes(&std::fs::read(path)?)
    }

    /// Per-light evaluator sharing the embedding across pixels.
    fn evaluator(&self, l: &LightDirection) -> Evaluator<'_> {
        let b = self.bases();
        let (w0, b0) = self.mlp.layer(0);
        let out = b0.len();
        let embedding = self.fourier.embed_light(l);
        // fold the light-dependent inputs into the first layer's bias
        let mut bias = b0.to_vec();
        for (row, &e) in w0[b * out..].chunks_exact(out).zip(&embedding) {
            bias.iter_mut().zip(row).for_each(|(a, w)| *a += e * w);
        }
        Evaluator {
            model: self,
            bias,
            w0: &w0[..b * out],
        }
    }

    /// Relit `(r, g, b)` in `[0, 1]` at pixel `(x, y)`.
    pub fn relight_pixel(&self, x: usize, y: usize, l: &LightDirection) -> Result<[f32; 3]> {
        if x >= self.width() || y >= self.height() {
            return Err(RtiError::invalid(format!(
                "pixel ({x}, {y}) outside {}x{}",
                self.width(),
                self.height()
            )));
        }
        let eval = self.evaluator(l);
        let mut scratch = eval.scratch();
        let p = y * self.width() + x;
        Ok(self.compose(p, eval.luminance(p, &mut scratch)))
    }

    fn compose(&self, p: usize, y: f32) -> [f32; 3] {
        let u = self.mean_u.data()[p] as f64 - 0.5;
        let v = self.mean_v.data()[p] as f64 - 0.5;
        let (r, g, b) = yuv_to_rgb(y as f64, u, v);
        [r as f32, g as f32, b as f32]
    }

    /// Renders every pixel for light `l`.
    pub fn relight_image(&self, l: &LightDirection) -> RgbImage {
        let lum = self.relight_luminance(l);
        let data: Vec<u8> = lum
            .data()
            .par_iter()
            .enumerate()
            .flat_map_iter(|(p, &y)| self.compose(p, y).map(unit_to_u8))
            .collect();
        RgbImage::new(self.width(), self.height(), data).expect("sized buffer")
    }
}

impl Relight for RelightModel {
    fn width(&self) -> usize {
        self.kgrid.width()
    }

    fn height(&self) -> usize {
        self.kgrid.height()
    }

    fn relight_luminance(&self, l: &LightDirection) -> ImagePlane {
        let eval = self.evaluator(l);
        let w = RelightModel::width(self);
        let mut data = vec![0.0f32; w * RelightModel::height(self)];
        data.par_chunks_mut(w).enumerate().for_each(|(row, out)| {
            let mut scratch = eval.scratch();
            for (x, o) in out.iter_mut().enumerate() {
                *o = eval.luminance(row * w + x, &mut scratch);
            }
        });
        ImagePlane::new(w, RelightModel::height(self), data).expect("sized buffer")
    }
}

struct Evaluator<'a> {
    model: &'a RelightModel,
    bias: Vec<f32>,
    w0: &'a [f32],
}

impl Evaluator<'_> {
    fn scratch(&self) -> (Vec<f32>, Vec<f32>) {
        let width = self.model.mlp.dims().iter().copied().max().unwrap_or(1);
        (vec![0.0; width], vec![0.0; width])
    }

    #[inline]
    fn luminance(&self, p: usize, (a, b): &mut (Vec<f32>, Vec<f32>)) -> f32 {
        let mlp = &self.model.mlp;
        let dims = mlp.dims();
        let h = &mut a[..dims[1]];
        affine(self.w0, &self.bias, self.model.kgrid.pixel(p), h);
        h.iter_mut().for_each(|v| *v = elu(*v));
        let last = mlp.layer_count() - 1;
        for l in 1..=last {
            let (w, bias) = mlp.layer(l);
            let (inp, out) = (&a[..dims[l]], &mut b[..dims[l + 1]]);
            affine(w, bias, inp, out);
            if l < last {
                out.iter_mut().for_each(|v| *v = elu(*v));
            }
            std::mem::swap(a, b);
        }
        let y = a[0];
        if y.is_nan() {
            0.0
        } else {
            y.clamp(0.0, 1.0)
        }
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len()).ok_or_else(|| {
            RtiError::format(
                self.pos as u64,
                format!(
                    "truncated {what}: need {n} bytes, {} remain",
                    self.bytes.len() - self.pos
                ),
            )
        })?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn array<const N: usize>(&mut self, what: &str) -> Result<[u8; N]> {
        Ok(self.take(N, what)?.try_into().expect("exact length"))
    }

    fn floats(&mut self, n: usize, what: &str) -> Result<Vec<f32>> {
        let len = n
            .checked_mul(4)
            .ok_or_else(|| RtiError::format(self.pos as u64, format!("{what} too large")))?;
        Ok(self
            .take(len, what)?
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().expect("four bytes")))
            .collect())
    }
}
