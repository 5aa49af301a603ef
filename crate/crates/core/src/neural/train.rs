use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::fourier::FourierMatrix;
use super::mlp::{architecture, MlpWeights};
use crate::error::{Result, RtiError};
use crate::mlic::{LightSplit, Mlic};
use crate::pca::KGrid;

// samples per parallel work unit; fixed so results do not depend on the thread count
const CHUNK: usize = 512;

/// Optimiser schedule and minibatch settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub lr_phase1: f64,
    pub epochs_phase1: usize,
    pub lr_phase2: f64,
    pub epochs_phase2: usize,
    pub batch_size: usize,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub seed: u64,
    /// Upper bound on minibatches per epoch; 0 means a full pass.
    pub steps_per_epoch_cap: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lr_phase1: 1e-3,
            epochs_phase1: 20,
            lr_phase2: 1e-4,
            epochs_phase2: 20,
            batch_size: 4096,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            seed: 0,
            steps_per_epoch_cap: 2000,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let rates_ok = [self.lr_phase1, self.lr_phase2, self.epsilon]
            .iter()
            .all(|&r| r > 0.0 && r.is_finite());
        let betas_ok = [self.beta1, self.beta2].iter().all(|&b| (0.0..1.0).contains(&b));
        if !rates_ok || !betas_ok || self.batch_size == 0 || self.epochs_phase1 + self.epochs_phase2 == 0 {
            return Err(RtiError::invalid(format!("invalid training configuration {self:?}")));
        }
        Ok(())
    }

    pub fn total_epochs(&self) -> usize {
        self.epochs_phase1 + self.epochs_phase2
    }
}

/// Training progress for one epoch.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub phase: u8,
    /// Mean absolute error over the samples seen during the epoch.
    pub mae: f64,
    /// Wall time since training started.
    pub seconds: f64,
}

/// Pseudo-random permutation of `0..n` without materialising it: a
/// four-round Feistel network on the next even power of two, cycle-walked
/// back into range.
#[derive(Debug, Clone)]
pub struct SamplePermutation {
    n: u64,
    half_bits: u32,
    keys: [u64; 4],
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

impl SamplePermutation {
    pub fn new(n: u64, key: u64) -> Self {
        let bits = (64 - n.saturating_sub(1).leading_zeros()).max(2);
        let half_bits = bits.div_ceil(2);
        let mut state = key;
        let keys = std::array::from_fn(|_| {
            state = splitmix64(state);
            state
        });
        Self { n, half_bits, keys }
    }

    pub fn len(&self) -> u64 {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    fn encrypt(&self, x: u64) -> u64 {
        let mask = (1u64 << self.half_bits) - 1;
        let (mut l, mut r) = (x >> self.half_bits, x & mask);
        for &k in &self.keys {
            let f = splitmix64(r ^ k) & mask;
            (l, r) = (r, l ^ f);
        }
        (l << self.half_bits) | r
    }

    /// Image of `i` (which must be below `len()`).
    pub fn apply(&self, i: u64) -> u64 {
        debug_assert!(i < self.n);
        let mut y = self.encrypt(i);
        while y >= self.n {
            y = self.encrypt(y);
        }
        y
    }
}

/// Flattened training set: every (pixel, train light) pair.
struct Samples<'a> {
    kgrid: &'a KGrid,
    targets: Vec<&'a [f32]>,
    embeddings: Vec<Vec<f32>>,
}

impl Samples<'_> {
    fn len(&self) -> u64 {
        (self.kgrid.width() * self.kgrid.height()) as u64 * self.targets.len() as u64
    }

    /// Writes the network input for sample `s` and returns its target.
    #[inline]
    fn fill(&self, s: u64, input: &mut [f32]) -> f32 {
        let lights = self.targets.len() as u64;
        let (p, n) = ((s / lights) as usize, (s % lights) as usize);
        let k = self.kgrid.pixel(p);
        input[..k.len()].copy_from_slice(k);
        input[k.len()..].copy_from_slice(&self.embeddings[n]);
        self.targets[n][p]
    }
}

/// Adam state over a flat parameter vector.
struct Adam {
    m: Vec<f32>,
    v: Vec<f32>,
    t: i32,
    beta1: f64,
    beta2: f64,
    epsilon: f64,
}

impl Adam {
    fn new(len: usize, cfg: &TrainConfig) -> Self {
        Self {
            m: vec![0.0; len],
            v: vec![0.0; len],
            t: 0,
            beta1: cfg.beta1,
            beta2: cfg.beta2,
            epsilon: cfg.epsilon,
        }
    }

    fn step(&mut self, params: &mut [f32], grad: &[f32], lr: f64) {
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t);
        let c2 = 1.0 - self.beta2.powi(self.t);
        let (b1, b2) = (self.beta1 as f32, self.beta2 as f32);
        let step = (lr / c1) as f32;
        let inv_c2 = (1.0 / c2) as f32;
        let eps = self.epsilon as f32;
        for (((p, g), m), v) in params.iter_mut().zip(grad).zip(&mut self.m).zip(&mut self.v) {
            *m = b1 * *m + (1.0 - b1) * g;
            *v = b2 * *v + (1.0 - b2) * g * g;
            *p -= step * *m / ((*v * inv_c2).sqrt() + eps);
        }
    }
}

/// Sum of absolute errors and the summed MAE gradient (scaled by `scale`)
/// over the samples at `positions` of the permutation.
fn chunk_gradient(
    net: &MlpWeights<f32>,
    samples: &Samples,
    perm: &SamplePermutation,
    positions: std::ops::Range<u64>,
    scale: f32,
) -> (f64, Vec<f32>) {
    let mut grad = vec![0.0f32; net.param_count()];
    let mut acts = vec![0.0f32; net.activation_len()];
    let width = net.dims().iter().copied().max().unwrap_or(1);
    let (mut delta, mut delta_prev) = (Vec::with_capacity(width), Vec::with_capacity(width));
    let inputs = net.input_len();
    let mut loss = 0.0f64;
    for pos in positions {
        let target = samples.fill(perm.apply(pos), &mut acts[..inputs]);
        let y = net.forward_store(&mut acts);
        let diff = y - target;
        loss += diff.abs() as f64;
        let dy = if diff > 0.0 {
            scale
        } else if diff < 0.0 {
            -scale
        } else {
            0.0
        };
        if dy != 0.0 {
            net.backward_store(&acts, dy, &mut grad, &mut delta, &mut delta_prev);
        }
    }
    (loss, grad)
}

/// Trains the decoder on every (pixel, train light) pair of `mlic`.
pub fn train(
    mlic: &Mlic,
    kgrid: &KGrid,
    fm: &FourierMatrix,
    split: &LightSplit,
    cfg: &TrainConfig,
) -> Result<(MlpWeights<f32>, Vec<EpochRecord>)> {
    train_with_progress(mlic, kgrid, fm, split, cfg, |_| {})
}

/// [`train`] with a callback after every epoch.
pub fn train_with_progress(
    mlic: &Mlic,
    kgrid: &KGrid,
    fm: &FourierMatrix,
    split: &LightSplit,
    cfg: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochRecord),
) -> Result<(MlpWeights<f32>, Vec<EpochRecord>)> {
    cfg.validate()?;
    split.validate(mlic.len())?;
    if split.train_idx.is_empty() {
        return Err(RtiError::invalid("training split is empty"));
    }
    if kgrid.width() != mlic.width() || kgrid.height() != mlic.height() {
        return Err(RtiError::invalid("k-grid and collection dimensions differ"));
    }
    let samples = Samples {
        kgrid,
        targets: split.train_idx.iter().map(|&i| mlic.luminance()[i].data()).collect(),
        embeddings: split.train_idx.iter().map(|&i| fm.embed_light(&mlic.lights()[i])).collect(),
    };
    let total = samples.len();
    let batch = cfg.batch_size as u64;
    let mut steps = total.div_ceil(batch);
    if cfg.steps_per_epoch_cap > 0 {
        steps = steps.min(cfg.steps_per_epoch_cap as u64);
    }

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut net = MlpWeights::<f32>::glorot(&architecture(kgrid.bases() + fm.embedding_len()), &mut rng)?;
    let mut adam = Adam::new(net.param_count(), cfg);
    let mut history = Vec::with_capacity(cfg.total_epochs());
    let started = Instant::now();

    for epoch in 1..=cfg.total_epochs() {
        let (phase, lr) = if epoch <= cfg.epochs_phase1 {
            (1, cfg.lr_phase1)
        } else {
            (2, cfg.lr_phase2)
        };
        let perm = SamplePermutation::new(total, splitmix64(cfg.seed ^ splitmix64(epoch as u64)));
        let mut epoch_loss = 0.0f64;
        let mut seen = 0u64;
        for step in 0..steps {
            let lo = step * batch;
            let hi = (lo + batch).min(total);
            let scale = 1.0 / (hi - lo) as f32;
            let chunks: Vec<(u64, u64)> = (lo..hi)
                .step_by(CHUNK)
                .map(|c| (c, (c + CHUNK as u64).min(hi)))
                .collect();
            let parts: Vec<(f64, Vec<f32>)> = chunks
                .par_iter()
                .map(|&(a, b)| chunk_gradient(&net, &samples, &perm, a..b, scale))
                .collect();
            let mut grad = vec![0.0f32; net.param_count()];
            let mut loss = 0.0f64;
            for (l, g) in &parts {
                loss += l;
                grad.iter_mut().zip(g).for_each(|(a, b)| *a += b);
            }
            if !loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
                return Err(RtiError::Divergence {
                    epoch,
                    step: step as usize,
                    detail: format!("batch loss {loss}, learning rate {lr}"),
                });
            }
            epoch_loss += loss;
            seen += hi - lo;
            adam.step(net.params_mut(), &grad, lr);
        }
        let record = EpochRecord {
            epoch,
            phase,
            mae: epoch_loss / seen as f64,
            seconds: started.elapsed().as_secs_f64(),
        };
        on_epoch(&record);
        history.push(record);
    }
    Ok((net, history))
}

/// Mean absolute error of `net` over every sample of the given lights.
pub fn mean_abs_error(mlic: &Mlic, kgrid: &KGrid, fm: &FourierMatrix, lights: &[usize], net: &MlpWeights<f32>) -> f64 {
    let mut input = vec![0.0f32; net.input_len()];
    let mut acts = vec![0.0f32; net.activation_len()];
    let b = kgrid.bases();
    let mut sum = 0.0;
    let mut count = 0usize;
    for &n in lights {
        fm.embed_into(mlic.lights()[n].lu(), mlic.lights()[n].lv(), &mut input[b..]);
        let plane = mlic.luminance()[n].data();
        for (p, &target) in plane.iter().enumerate() {
            input[..b].copy_from_slice(kgrid.pixel(p));
            acts[..input.len()].copy_from_slice(&input);
            sum += (net.forward_store(&mut acts) - target).abs() as f64;
            count += 1;
        }
    }
    sum / count.max(1) as f64
}
