use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Result, RtiError};
use crate::geometry::LightDirection;

/// Default number of frequencies.
pub const DEFAULT_FREQUENCIES: usize = 10;
/// Default standard deviation of the frequency entries.
pub const DEFAULT_SIGMA: f64 = 0.3;

/// Fixed random projection of `(l_u, l_v)` onto `Hf` frequencies.
#[derive(Debug, Clone, PartialEq)]
pub struct FourierMatrix {
    /// `Hf x 2`, row-major.
    values: Vec<f32>,
    sigma: f32,
    seed: u64,
}

impl FourierMatrix {
    pub fn new(values: Vec<f32>, sigma: f32, seed: u64) -> Result<Self> {
        if !values.len().is_multiple_of(2) {
            return Err(RtiError::invalid("fourier matrix needs two columns"));
        }
        if values.len() / 2 > u8::MAX as usize {
            return Err(RtiError::invalid("at most 255 fourier frequencies are supported"));
        }
        if values.iter().any(|v| !v.is_finite()) || !sigma.is_finite() {
            return Err(RtiError::invalid("fourier matrix entries must be finite"));
        }
        Ok(Self { values, sigma, seed })
    }

    /// Draws every entry from `N(0, sigma^2)`.
    pub fn sample(hf: usize, sigma: f64, seed: u64) -> Result<Self> {
        if !(sigma >= 0.0 && sigma.is_finite()) {
            return Err(RtiError::invalid(format!("invalid fourier sigma {sigma}")));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let normal = Normal::new(0.0, sigma).map_err(|e| RtiError::invalid(e.to_string()))?;
        let values = (0..2 * hf).map(|_| normal.sample(&mut rng) as f32).collect();
        Self::new(values, sigma as f32, seed)
    }

    pub fn frequencies(&self) -> usize {
        self.values.len() / 2
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    pub fn sigma(&self) -> f32 {
        self.sigma
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Width of the embedding, `2 Hf`.
    pub fn embedding_len(&self) -> usize {
        self.values.len()
    }

    /// Writes `(cos s, sin s)` with `s = F (l_u, l_v)` into `out`.
    pub fn embed_into(&self, lu: f64, lv: f64, out: &mut [f32]) {
        let hf = self.frequencies();
        assert_eq!(out.len(), 2 * hf, "embedding buffer has the wrong length");
        for i in 0..hf {
            let s = self.values[2 * i] as f64 * lu + self.values[2 * i + 1] as f64 * lv;
            out[i] = s.cos() as f32;
            out[hf + i] = s.sin() as f32;
        }
    }

    pub fn embed(&self, lu: f64, lv: f64) -> Vec<f32> {
        let mut out = vec![0.0; self.embedding_len()];
        self.embed_into(lu, lv, &mut out);
        out
    }

    /// Embedding of a light direction; depends only on its planar components.
    pub fn embed_light(&self, l: &LightDirection) -> Vec<f32> {
        self.embed(l.lu(), l.lv())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn zero_frequencies_give_unit_cosines() {
        let fm = FourierMatrix::new(vec![0.0; 6], 0.0, 0).unwrap();
        assert_eq!(fm.embed(0.4, -0.7), vec![1.0, 1.0, 1.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn single_frequency_reference_values() {
        let fm = FourierMatrix::new(vec![1.0, 0.0], 1.0, 0).unwrap();
        let e = fm.embed(0.5, 0.9);
        assert!((e[0] - 0.877_582_6).abs() < 1e-7);
        assert!((e[1] - 0.479_425_5).abs() < 1e-7);
    }

    #[test]
    fn embedding_ignores_z() {
        let fm = FourierMatrix::sample(10, 0.3, 4).unwrap();
        let a = LightDirection::new(0.3, -0.2, 0.9).unwrap();
        let b = LightDirection::from_uv(a.lu(), a.lv()).unwrap();
        assert_eq!(fm.embed_light(&a), fm.embed_light(&b));
    }

    #[test]
    fn sampling_is_seeded() {
        let a = FourierMatrix::sample(10, 0.3, 7).unwrap();
        assert_eq!(a, FourierMatrix::sample(10, 0.3, 7).unwrap());
        assert_ne!(a, FourierMatrix::sample(10, 0.3, 8).unwrap());
        assert_eq!(a.values().len(), 20);
        // 20 draws from N(0, 0.09): all well inside 6 sigma
        assert!(a.values().iter().all(|v| v.abs() < 1.8));
    }

    proptest! {
        #[test]
        fn components_are_bounded(lu in -1.0f64..1.0, lv in -1.0f64..1.0, seed in 0u64..1000) {
            let fm = FourierMatrix::sample(10, 5.0, seed).unwrap();
            for v in fm.embed(lu, lv) {
                prop_assert!((-1.0..=1.0).contains(&v));
            }
        }
    }
}
