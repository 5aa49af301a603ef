use std::fmt::Write as _;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::evaluate;
use crate::error::{Result, RtiError};
use crate::mlic::{LightSplit, Mlic};
use crate::pipeline::{fit_model, PipelineConfig};

/// Parameter varied by a sweep.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SweepAxis {
    /// Number of PCA bases.
    Bases,
    /// Fourier frequency standard deviation.
    Sigma,
    /// Number of training lights kept after the split.
    Lights,
}

impl SweepAxis {
    pub fn name(self) -> &'static str {
        match self {
            SweepAxis::Bases => "B",
            SweepAxis::Sigma => "sigma",
            SweepAxis::Lights => "nLights",
        }
    }
}

impl std::str::FromStr for SweepAxis {
    type Err = RtiError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "B" | "b" | "bases" => Ok(SweepAxis::Bases),
            "sigma" => Ok(SweepAxis::Sigma),
            "nLights" | "lights" | "n" => Ok(SweepAxis::Lights),
            _ => Err(RtiError::invalid(format!("unknown sweep axis {s:?}"))),
        }
    }
}

/// Aggregated scores at one sweep value.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub value: f64,
    pub psnr: f64,
    pub ssim: f64,
    pub stderr_psnr: f64,
    pub stderr_ssim: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub axis: String,
    pub repeats: usize,
    pub points: Vec<SweepPoint>,
}

impl SweepReport {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("axis,value,psnr,ssim,stderr_psnr,stderr_ssim\n");
        for p in &self.points {
            let _ = writeln!(
                out,
                "{},{},{:.6},{:.6},{:.6},{:.6}",
                self.axis, p.value, p.psnr, p.ssim, p.stderr_psnr, p.stderr_ssim
            );
        }
        out
    }

    pub fn point(&self, value: f64) -> Option<&SweepPoint> {
        self.points.iter().find(|p| p.value == value)
    }
}

/// Mean and standard error of the mean (0 for a single sample).
fn mean_stderr(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Keeps `count` of the training lights, chosen with `seed`.
fn subsample_train(split: &LightSplit, count: usize, seed: u64) -> Result<LightSplit> {
    if count == 0 || count > split.train_idx.len() {
        return Err(RtiError::invalid(format!(
            "cannot keep {count} of {} training lights",
            split.train_idx.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut keep: Vec<usize> = rand::seq::index::sample(&mut rng, split.train_idx.len(), count)
        .into_iter()
        .map(|i| split.train_idx[i])
        .collect();
    keep.sort_unstable();
    Ok(LightSplit {
        train_idx: keep,
        ..split.clone()
    })
}

/// Runs split, compression, training and evaluation for every value of
/// `axis`, `repeats` times with seeds `cfg.seed + r`. Within a repeat all
/// values share the same held-out lights.
///
/// `split` overrides the random split (the light-count axis then subsamples
/// its training part).
pub fn sweep(
    mlic: &Mlic,
    axis: SweepAxis,
    values: &[f64],
    repeats: usize,
    cfg: &PipelineConfig,
    split: Option<&LightSplit>,
) -> Result<SweepReport> {
    if values.is_empty() || repeats == 0 {
        return Err(RtiError::invalid("a sweep needs at least one value and one repeat"));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut points = Vec::with_capacity(sorted.len());
    for &value in &sorted {
        let mut psnrs = Vec::with_capacity(repeats);
        let mut ssims = Vec::with_capacity(repeats);
        for r in 0..repeats {
            let run = || -> Result<(f64, f64)> {
                let mut c = *cfg;
                c.seed = cfg.seed.wrapping_add(r as u64);
                let mut s = match split {
                    Some(s) => s.clone(),
                    None => c.split(mlic)?,
                };
                match axis {
                    SweepAxis::Bases => c.bases = value as usize,
                    SweepAxis::Sigma => c.sigma = value,
                    SweepAxis::Lights => s = subsample_train(&s, value as usize, c.seed)?,
                }
                let trained = fit_model(mlic, &s, &c, |_| {})?;
                let e = evaluate(&trained.model, mlic, &s)?;
                Ok((e.mean_psnr, e.mean_ssim))
            };
            let (p, s) = run().map_err(|e| e.context(format!("sweep {}={value} repeat {r}", axis.name())))?;
            psnrs.push(p);
            ssims.push(s);
        }
        let (psnr, stderr_psnr) = mean_stderr(&psnrs);
        let (ssim, stderr_ssim) = mean_stderr(&ssims);
        points.push(SweepPoint {
            value,
            psnr,
            ssim,
            stderr_psnr,
            stderr_ssim,
        });
    }
    Ok(SweepReport {
        axis: axis.name().to_string(),
        repeats,
        points,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{synth_mlic, SceneSpec, Trajectory};

    #[test]
    fn stderr_of_single_repeat_is_zero() {
        assert_eq!(mean_stderr(&[3.5]), (3.5, 0.0));
        let (m, s) = mean_stderr(&[1.0, 2.0, 3.0]);
        assert_eq!(m, 2.0);
        assert!((s - (1.0f64 / 3.0).sqrt()).abs() < 1e-12);
    }

    #[test]
    fn small_sweep_runs_and_formats() {
        let scene = SceneSpec { width: 16, height: 16, ..SceneSpec::default() }.build().unwrap();
        let m = synth_mlic(&scene, &Trajectory::Dome { n: 40 }, 0).unwrap();
        let mut cfg = PipelineConfig { n_test: 4, ..PipelineConfig::default() };
        cfg.train.epochs_phase1 = 1;
        cfg.train.epochs_phase2 = 1;
        cfg.train.batch_size = 256;
        let report = sweep(&m, SweepAxis::Bases, &[4.0, 2.0], 1, &cfg, None).unwrap();
        assert_eq!(report.points.len(), 2);
        assert_eq!(report.points[0].value, 2.0);
        assert!(report.points.iter().all(|p| p.stderr_psnr == 0.0 && p.psnr.is_finite()));
        let csv = report.to_csv();
        assert!(csv.starts_with("axis,value,psnr,ssim,stderr_psnr,stderr_ssim\nB,2,"));
        let err = sweep(&m, SweepAxis::Lights, &[1000.0], 1, &cfg, None).unwrap_err();
        assert!(err.to_string().contains("nLights=1000"), "{err}");
    }
}
