//! Relighting quality: metrics, the polynomial baseline and parameter sweeps.

pub mod metrics;
pub mod ptm;
pub mod sweep;

use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Result, RtiError};
use crate::mlic::{LightSplit, Mlic};
use crate::relight::Relight;

pub use metrics::{psnr, ssim};
pub use ptm::{ptm_fit, PtmModel};
pub use sweep::{sweep, SweepAxis, SweepPoint, SweepReport};

/// Scores for one held-out light.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LightScore {
    pub index: usize,
    pub lu: f64,
    pub lv: f64,
    pub psnr: f64,
    pub ssim: f64,
}

/// Mean scores over the test lights plus the per-light table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub mean_psnr: f64,
    pub mean_ssim: f64,
    pub lights: Vec<LightScore>,
}

impl Evaluation {
    /// `method,light,lu,lv,psnr,ssim` rows, the mean last.
    pub fn csv_rows(&self, method: &str) -> String {
        let mut out = String::new();
        for s in &self.lights {
            let _ = writeln!(out, "{method},{},{:.6},{:.6},{:.6},{:.6}", s.index, s.lu, s.lv, s.psnr, s.ssim);
        }
        let _ = writeln!(out, "{method},mean,,,{:.6},{:.6}", self.mean_psnr, self.mean_ssim);
        out
    }
}

/// Renders every test light with `model` and scores its luminance against
/// the stored plane.
pub fn evaluate<M: Relight + Sync>(model: &M, mlic: &Mlic, split: &LightSplit) -> Result<Evaluation> {
    if split.test_idx.is_empty() {
        return Err(RtiError::invalid("the test split is empty"));
    }
    split.validate(mlic.len())?;
    if model.width() != mlic.width() || model.height() != mlic.height() {
        return Err(RtiError::invalid("model and collection dimensions differ"));
    }
    let lights = split
        .test_idx
        .par_iter()
        .map(|&i| {
            let l = &mlic.lights()[i];
            let rendered = model.relight_luminance(l);
            let truth = &mlic.luminance()[i];
            Ok(LightScore {
                index: i,
                lu: l.lu(),
                lv: l.lv(),
                psnr: psnr(&rendered, truth)?,
                ssim: ssim(&rendered, truth)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let n = lights.len() as f64;
    Ok(Evaluation {
        mean_psnr: lights.iter().map(|s| s.psnr).sum::<f64>() / n,
        mean_ssim: lights.iter().map(|s| s.ssim).sum::<f64>() / n,
        lights,
    })
}
