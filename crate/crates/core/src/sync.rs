//! Audio-based alignment of the static and moving recordings.
//!
//! Both audio tracks are reduced to a 100 Hz RMS energy envelope; the offset
//! is the lag maximising the normalised cross-correlation of the zero-mean
//! envelopes. Frame timestamps are then paired by nearest shifted timestamp.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Result, RtiError};

/// Envelope rate used for cross-correlation.
pub const ENVELOPE_RATE_HZ: f64 = 100.0;

/// Mono PCM audio.
#[derive(Debug, Clone, PartialEq)]
pub struct AudioTrack {
    sample_rate: u32,
    samples: Vec<f32>,
}

impl AudioTrack {
    pub fn new(sample_rate: u32, samples: Vec<f32>) -> Result<Self> {
        if sample_rate == 0 {
            return Err(RtiError::invalid("sample rate must be positive"));
        }
        if samples.is_empty() {
            return Err(RtiError::invalid("audio track has no samples"));
        }
        Ok(Self {
            sample_rate,
            samples,
        })
    }

    /// Reads a PCM WAV file (integer or float), averaging channels to mono.
    pub fn load_wav(path: impl AsRef<Path>) -> Result<Self> {
        let mut reader = hound::WavReader::open(path)?;
        let spec = reader.spec();
        let channels = spec.channels.max(1) as usize;
        let interleaved: Vec<f32> = match spec.sample_format {
            hound::SampleFormat::Float => reader.samples::<f32>().collect::<std::result::Result<_, _>>()?,
            hound::SampleFormat::Int => {
                let scale = 1.0 / (1u64 << (spec.bits_per_sample - 1)) as f32;
                reader
                    .samples::<i32>()
                    .map(|s| s.map(|v| v as f32 * scale))
                    .collect::<std::result::Result<_, _>>()?
            }
        };
        let samples = interleaved
            .chunks(channels)
            .map(|frame| frame.iter().sum::<f32>() / frame.len() as f32)
            .collect();
        Self::new(spec.sample_rate, samples)
    }

    /// Writes the track as 32-bit float mono WAV.
    pub fn save_wav(&self, path: impl AsRef<Path>) -> Result<()> {
        let spec = hound::WavSpec {
            channels: 1,
            sample_rate: self.sample_rate,
            bits_per_sample: 32,
            sample_format: hound::SampleFormat::Float,
        };
        let mut writer = hound::WavWriter::create(path, spec)?;
        for &s in &self.samples {
            writer.write_sample(s)?;
        }
        writer.finalize()?;
        Ok(())
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    pub fn samples(&self) -> &[f32] {
        &self.samples
    }

    pub fn duration(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }

    /// RMS energy over consecutive non-overlapping windows of `1/rate` seconds.
    pub fn envelope(&self, rate: f64) -> Vec<f64> {
        let per_window = self.sample_rate as f64 / rate;
        let n_windows = (self.samples.len() as f64 / per_window).floor().max(1.0) as usize;
        (0..n_windows)
            .map(|k| {
                let start = (k as f64 * per_window).round() as usize;
                let end = (((k + 1) as f64 * per_window).round() as usize).min(self.samples.len());
                let win = &self.samples[start.min(end)..end];
                if win.is_empty() {
                    return 0.0;
                }
                let e: f64 = win.iter().map(|&s| (s as f64) * (s as f64)).sum();
                (e / win.len() as f64).sqrt()
            })
            .collect()
    }
}

/// Time offset (seconds) between two recordings of the same event.
///
/// A positive result means `b` lags `a`: `b(t) ~ a(t - offset)`.
pub fn audio_offset(a: &AudioTrack, b: &AudioTrack, max_lag: f64) -> Result<f64> {
    let shortest = a.duration().min(b.duration());
    if !(max_lag >= 0.0) || max_lag > shortest {
        return Err(RtiError::invalid(format!(
            "max lag {max_lag} s must lie in [0, {shortest}] (shortest track duration)"
        )));
    }
    let ea = centred(a.envelope(ENVELOPE_RATE_HZ)).ok_or_else(|| {
        RtiError::SyncFailure("first audio track is silent (zero-variance envelope)".into())
    })?;
    let eb = centred(b.envelope(ENVELOPE_RATE_HZ)).ok_or_else(|| {
        RtiError::SyncFailure("second audio track is silent (zero-variance envelope)".into())
    })?;
    let norm = (dot(&ea, &ea) * dot(&eb, &eb)).sqrt();
    let max_steps = (max_lag * ENVELOPE_RATE_HZ).round() as i64;

    let mut best = (f64::NEG_INFINITY, 0i64);
    for lag in -max_steps..=max_steps {
        let r = lagged_dot(&ea, &eb, lag) / norm;
        // prefer the smallest |lag| on exact ties
        if r > best.0 || (r == best.0 && lag.abs() < best.1.abs()) {
            best = (r, lag);
        }
    }
    if !best.0.is_finite() {
        return Err(RtiError::SyncFailure("cross-correlation is not finite".into()));
    }
    Ok(best.1 as f64 / ENVELOPE_RATE_HZ)
}

fn centred(mut e: Vec<f64>) -> Option<Vec<f64>> {
    let mean = e.iter().sum::<f64>() / e.len() as f64;
    e.iter_mut().for_each(|v| *v -= mean);
    let var = dot(&e, &e) / e.len() as f64;
    (var > 1e-20).then_some(e)
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `sum_i a[i] * b[i + lag]` over the overlapping range.
fn lagged_dot(a: &[f64], b: &[f64], lag: i64) -> f64 {
    let (a, b) = if lag >= 0 {
        (a, b.get(lag as usize..).unwrap_or(&[]))
    } else {
        (a.get((-lag) as usize..).unwrap_or(&[]), b)
    };
    dot(a, b)
}

/// One synchronised frame pair.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FramePair {
    pub static_idx: usize,
    pub moving_idx: usize,
    /// Shifted moving timestamp minus static timestamp, in seconds.
    pub skew: f64,
}

/// Synchronised frame pairs, strictly increasing in both indices.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct FrameIndexMap {
    pub offset: f64,
    pub tolerance: f64,
    pub pairs: Vec<FramePair>,
}

impl FrameIndexMap {
    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Ok(serde_json::from_slice(&std::fs::read(path)?)?)
    }
}

/// Pairs each static frame with the moving frame whose shifted timestamp
/// (`t_moving - offset`) is nearest, within `1 / min(fps)`.
///
/// When several static frames share the same nearest moving frame, only the
/// one with the smallest skew is kept, so every moving frame is used at most
/// once.
pub fn pair_frames(ts_static: &[f64], ts_moving: &[f64], offset: f64) -> Result<FrameIndexMap> {
    check_increasing(ts_static, "static")?;
    check_increasing(ts_moving, "moving")?;
    let tolerance = match (median_interval(ts_static), median_interval(ts_moving)) {
        (Some(a), Some(b)) => a.max(b),
        (Some(a), None) | (None, Some(a)) => a,
        (None, None) => {
            return Err(RtiError::invalid(
                "at least one timestamp list needs two frames to infer a frame rate",
            ))
        }
    };

    let shifted: Vec<f64> = ts_moving.iter().map(|t| t - offset).collect();
    let mut pairs: Vec<FramePair> = Vec::new();
    for (si, &ts) in ts_static.iter().enumerate() {
        let Some(mi) = nearest(&shifted, ts) else { continue };
        let skew = shifted[mi] - ts;
        if skew.abs() > tolerance {
            continue;
        }
        let candidate = FramePair {
            static_idx: si,
            moving_idx: mi,
            skew,
        };
        match pairs.last_mut() {
            Some(last) if last.moving_idx == mi => {
                if skew.abs() < last.skew.abs() {
                    *last = candidate;
                }
            }
            _ => pairs.push(candidate),
        }
    }
    if pairs.is_empty() {
        return Err(RtiError::SyncFailure(format!(
            "no overlap between the two frame sequences at offset {offset} s"
        )));
    }
    Ok(FrameIndexMap {
        offset,
        tolerance,
        pairs,
    })
}

fn check_increasing(ts: &[f64], name: &str) -> Result<()> {
    if ts.is_empty() {
        return Err(RtiError::invalid(format!("{name} timestamp list is empty")));
    }
    if ts.iter().any(|t| !t.is_finite()) || ts.windows(2).any(|w| w[1] <= w[0]) {
        return Err(RtiError::invalid(format!(
            "{name} timestamps must be finite and strictly increasing"
        )));
    }
    Ok(())
}

fn median_interval(ts: &[f64]) -> Option<f64> {
    if ts.len() < 2 {
        return None;
    }
    let mut d: Vec<f64> = ts.windows(2).map(|w| w[1] - w[0]).collect();
    d.sort_by(f64::total_cmp);
    Some(d[d.len() / 2])
}

/// Index of the value in sorted `xs` nearest to `t` (earlier index on ties).
fn nearest(xs: &[f64], t: f64) -> Option<usize> {
    if xs.is_empty() {
        return None;
    }
    let i = xs.partition_point(|&x| x < t);
    if i == 0 {
        return Some(0);
    }
    if i == xs.len() {
        return Some(xs.len() - 1);
    }
    if (xs[i] - t).abs() < (t - xs[i - 1]).abs() {
        Some(i)
    } else {
        Some(i - 1)
    }
}

/// Timestamps of `n` frames captured at a constant rate.
pub fn constant_rate_timestamps(n: usize, fps: f64) -> Vec<f64> {
    (0..n).map(|i| i as f64 / fps).collect()
}

/// Reads one timestamp (seconds) per line; blank lines and `#` comments are skipped.
pub fn read_timestamps(path: impl AsRef<Path>) -> Result<Vec<f64>> {
    let text = std::fs::read_to_string(path)?;
    text.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(|l| {
            l.parse::<f64>()
                .map_err(|e| RtiError::invalid(format!("bad timestamp {l:?}: {e}")))
        })
        .collect()
}
