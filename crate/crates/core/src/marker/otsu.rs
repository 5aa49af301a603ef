use crate::error::{Result, RtiError};

/// 256-bin intensity histogram of an 8-bit image.
pub fn histogram(gray: &[u8]) -> [u64; 256] {
    let mut h = [0u64; 256];
    for &g in gray {
        h[g as usize] += 1;
    }
    h
}

/// Otsu's threshold: the `t` maximising the between-class variance of the
/// split `{0..=t} | {t+1..=255}`. Ties resolve to the smallest `t`.
pub fn otsu_threshold(hist: &[u64; 256]) -> Result<u8> {
    let occupied = hist.iter().filter(|&&c| c > 0).count();
    if occupied < 2 {
        return Err(RtiError::DegenerateImage(
            "histogram has fewer than two occupied bins".into(),
        ));
    }
    let total: f64 = hist.iter().map(|&c| c as f64).sum();
    let sum_all: f64 = hist.iter().enumerate().map(|(i, &c)| i as f64 * c as f64).sum();

    let mut n0 = 0.0;
    let mut s0 = 0.0;
    let mut best = (f64::NEG_INFINITY, 0u8);
    for t in 0..256usize {
        n0 += hist[t] as f64;
        s0 += t as f64 * hist[t] as f64;
        let n1 = total - n0;
        let var = if n0 == 0.0 || n1 == 0.0 {
            0.0
        } else {
            // w0 w1 (mu0 - mu1)^2 == (s0 N - S n0)^2 / (N^2 n0 n1)
            let d = s0 * total - sum_all * n0;
            d * d / (total * total * n0 * n1)
        };
        if var > best.0 {
            best = (var, t as u8);
        }
    }
    Ok(best.1)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Textbook between-class variance evaluated from scratch for one split.
    fn between_class_variance(hist: &[u64; 256], t: usize) -> f64 {
        let total: f64 = hist.iter().map(|&c| c as f64).sum();
        let (mut w0, mut m0, mut w1, mut m1) = (0.0, 0.0, 0.0, 0.0);
        for (i, &c) in hist.iter().enumerate() {
            if i <= t {
                w0 += c as f64;
                m0 += i as f64 * c as f64;
            } else {
                w1 += c as f64;
                m1 += i as f64 * c as f64;
            }
        }
        if w0 == 0.0 || w1 == 0.0 {
            return 0.0;
        }
        let (mu0, mu1) = (m0 / w0, m1 / w1);
        (w0 / total) * (w1 / total) * (mu0 - mu1).powi(2)
    }

    #[test]
    fn two_delta_histogram_is_separated() {
        let mut h = [0u64; 256];
        h[50] = 1000;
        h[200] = 300;
        let t = otsu_threshold(&h).unwrap() as usize;
        assert!((50..200).contains(&t));
        assert_eq!(t, 50, "ties resolve to the smallest threshold");
    }

    #[test]
    fn matches_exhaustive_scan() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..200 {
            let mut h = [0u64; 256];
            let modes = rng.random_range(1..4);
            for _ in 0..modes {
                let c = rng.random_range(0..256i32);
                let w = rng.random_range(2..40i32);
                for _ in 0..rng.random_range(100..5000) {
                    let v = (c + rng.random_range(-w..=w)).clamp(0, 255);
                    h[v as usize] += 1;
                }
            }
            if h.iter().filter(|&&c| c > 0).count() < 2 {
                continue;
            }
            let scores: Vec<f64> = (0..256).map(|t| between_class_variance(&h, t)).collect();
            let max = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let oracle = scores.iter().position(|&s| s >= max * (1.0 - 1e-12)).unwrap();
            assert_eq!(otsu_threshold(&h).unwrap() as usize, oracle);
        }
    }

    #[test]
    fn uniform_image_is_degenerate() {
        let h = histogram(&[77u8; 64]);
        assert!(matches!(otsu_threshold(&h), Err(RtiError::DegenerateImage(_))));
    }
}
