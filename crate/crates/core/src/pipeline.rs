//! Stage wiring shared by the command line, the sweeps and the tests.

use std::path::Path;

use crate::error::{Result, RtiError};
use crate::mlic::{split_lights, LightSplit, Mlic, DEFAULT_CROP_SIZE, DEFAULT_EXCLUSION_RADIUS};
use crate::neural::fourier::{DEFAULT_FREQUENCIES, DEFAULT_SIGMA};
use crate::neural::{train_with_progress, EpochRecord, FourierMatrix, TrainConfig};
use crate::pca::{pca_fit_lights, pca_project_lights, KGrid, PcaBasis, DEFAULT_BASES, DEFAULT_SAMPLE_CAP};
use crate::relight::RelightModel;

/// Default number of held-out test lights.
pub const DEFAULT_TEST_LIGHTS: usize = 25;

/// Every tunable of the pipeline. Loaded from flat `key = value` files.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PipelineConfig {
    pub crop_size: usize,
    pub bases: usize,
    pub frequencies: usize,
    pub sigma: f64,
    pub n_test: usize,
    pub exclusion_radius: f64,
    pub sample_cap: usize,
    pub train: TrainConfig,
    pub seed: u64,
    /// Worker threads; `None` uses every core.
    pub threads: Option<usize>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            crop_size: DEFAULT_CROP_SIZE,
            bases: DEFAULT_BASES,
            frequencies: DEFAULT_FREQUENCIES,
            sigma: DEFAULT_SIGMA,
            n_test: DEFAULT_TEST_LIGHTS,
            exclusion_radius: DEFAULT_EXCLUSION_RADIUS,
            sample_cap: DEFAULT_SAMPLE_CAP,
            train: TrainConfig::default(),
            seed: 0,
            threads: None,
        }
    }
}

fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| RtiError::invalid(format!("invalid value {value:?} for {key}")))
}

impl PipelineConfig {
    /// Names accepted by [`set`](Self::set).
    pub const KEYS: &'static [&'static str] = &[
        "crop_size",
        "bases",
        "frequencies",
        "sigma",
        "n_test",
        "exclusion_radius",
        "sample_cap",
        "seed",
        "threads",
        "lr_phase1",
        "epochs_phase1",
        "lr_phase2",
        "epochs_phase2",
        "batch_size",
        "steps_per_epoch_cap",
        "beta1",
        "beta2",
        "epsilon",
    ];

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let t = &mut self.train;
        match key {
            "crop_size" => self.crop_size = parse(key, value)?,
            "bases" => self.bases = parse(key, value)?,
            "frequencies" => self.frequencies = parse(key, value)?,
            "sigma" => self.sigma = parse(key, value)?,
            "n_test" => self.n_test = parse(key, value)?,
            "exclusion_radius" => self.exclusion_radius = parse(key, value)?,
            "sample_cap" => self.sample_cap = parse(key, value)?,
            "seed" => self.seed = parse(key, value)?,
            "threads" => self.threads = Some(parse(key, value)?),
            "lr_phase1" => t.lr_phase1 = parse(key, value)?,
            "epochs_phase1" => t.epochs_phase1 = parse(key, value)?,
            "lr_phase2" => t.lr_phase2 = parse(key, value)?,
            "epochs_phase2" => t.epochs_phase2 = parse(key, value)?,
            "batch_size" => t.batch_size = parse(key, value)?,
            "steps_per_epoch_cap" => t.steps_per_epoch_cap = parse(key, value)?,
            "beta1" => t.beta1 = parse(key, value)?,
            "beta2" => t.beta2 = parse(key, value)?,
            "epsilon" => t.epsilon = parse(key, value)?,
            _ => return Err(RtiError::invalid(format!("unknown configuration key {key:?}"))),
        }
        Ok(())
    }

    /// Applies `key = value` lines; `#` starts a comment.
    pub fn apply_str(&mut self, text: &str) -> Result<()> {
        for (n, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| RtiError::invalid(format!("line {}: expected key = value", n + 1)))?;
            self.set(key.trim(), value.trim())
                .map_err(|e| e.context(format!("configuration line {}", n + 1)))?;
        }
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let mut cfg = Self::default();
        cfg.apply_str(&std::fs::read_to_string(path)?)?;
        Ok(cfg)
    }

    /// Training settings carrying the pipeline seed.
    pub fn train_config(&self) -> TrainConfig {
        TrainConfig { seed: self.seed, ..self.train }
    }

    pub fn split(&self, mlic: &Mlic) -> Result<LightSplit> {
        split_lights(mlic.lights(), self.n_test, self.exclusion_radius, self.seed)
    }
}

/// Trained model together with its intermediate products.
#[derive(Debug, Clone)]
pub struct TrainedModel {
    pub model: RelightModel,
    pub basis: PcaBasis,
    pub history: Vec<EpochRecord>,
}

/// PCA over the training lights only, and the projected coefficient grid.
pub fn compress(mlic: &Mlic, split: &LightSplit, cfg: &PipelineConfig) -> Result<(PcaBasis, KGrid)> {
    split.validate(mlic.len())?;
    let basis = pca_fit_lights(mlic, &split.train_idx, cfg.bases, cfg.sample_cap, cfg.seed)?;
    let kgrid = pca_project_lights(&basis, mlic, &split.train_idx)?;
    Ok((basis, kgrid))
}

/// Compression followed by decoder training.
pub fn fit_model(
    mlic: &Mlic,
    split: &LightSplit,
    cfg: &PipelineConfig,
    on_epoch: impl FnMut(&EpochRecord),
) -> Result<TrainedModel> {
    let (basis, kgrid) = compress(mlic, split, cfg).map_err(|e| e.context("compress"))?;
    let fourier = FourierMatrix::sample(cfg.frequencies, cfg.sigma, cfg.seed)?;
    let (mlp, history) = train_with_progress(mlic, &kgrid, &fourier, split, &cfg.train_config(), on_epoch)
        .map_err(|e| e.context("train"))?;
    let model = RelightModel::new(fourier, mlp, kgrid, mlic.mean_u().clone(), mlic.mean_v().clone())?;
    Ok(TrainedModel { model, basis, history })
}

/// Runs `f` on a pool with the configured thread count.
pub fn with_threads<T: Send>(threads: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T> {
    match threads {
        None => Ok(f()),
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| RtiError::invalid(format!("cannot start {n} threads: {e}")))?;
            Ok(pool.install(f))
        }
    }
}
