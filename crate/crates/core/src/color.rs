//! BT.601 analog full-range YUV.

const WR: f64 = 0.299;
const WG: f64 = 0.587;
const WB: f64 = 0.114;
const U_SCALE: f64 = 0.492;
const V_SCALE: f64 = 0.877;

/// Converts an RGB triple in `[0, 1]` to `(y, u, v)`. Inputs are clamped.
#[inline]
pub fn rgb_to_yuv(r: f64, g: f64, b: f64) -> (f64, f64, f64) {
    let r = clamp01(r);
    let g = clamp01(g);
    let b = clamp01(b);
    let y = WR * r + WG * g + WB * b;
    // differences taken before weighting so that gray gives exactly zero chroma
    let u = U_SCALE * (WR * (b - r) + WG * (b - g));
    let v = V_SCALE * (WG * (r - g) + WB * (r - b));
    (y, u, v)
}

/// Algebraic inverse of [`rgb_to_yuv`]; outputs are clamped to `[0, 1]`.
#[inline]
pub fn yuv_to_rgb(y: f64, u: f64, v: f64) -> (f64, f64, f64) {
    let b = y + u / U_SCALE;
    let r = y + v / V_SCALE;
    let g = (y - WR * r - WB * b) / WG;
    (clamp01(r), clamp01(g), clamp01(b))
}

#[inline]
fn clamp01(x: f64) -> f64 {
    if x.is_nan() {
        0.0
    } else {
        x.clamp(0.0, 1.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn close(a: (f64, f64, f64), b: (f64, f64, f64), tol: f64) -> bool {
        (a.0 - b.0).abs() < tol && (a.1 - b.1).abs() < tol && (a.2 - b.2).abs() < tol
    }

    #[test]
    fn reference_triples() {
        assert!(close(rgb_to_yuv(1.0, 1.0, 1.0), (1.0, 0.0, 0.0), 1e-12));
        assert_eq!(rgb_to_yuv(0.0, 0.0, 0.0), (0.0, 0.0, 0.0));
        assert!(close(rgb_to_yuv(1.0, 0.0, 0.0), (0.299, -0.147108, 0.614777), 1e-9));
    }

    #[test]
    fn inverse_reference_triples() {
        assert!(close(yuv_to_rgb(0.5, 0.0, 0.0), (0.5, 0.5, 0.5), 1e-12));
        assert!(close(yuv_to_rgb(1.0, 0.0, 0.0), (1.0, 1.0, 1.0), 1e-12));
    }

    #[test]
    fn gray_has_exactly_zero_chroma() {
        for i in 0..=255 {
            let c = i as f64 / 255.0;
            let (_, u, v) = rgb_to_yuv(c, c, c);
            assert_eq!(u, 0.0);
            assert_eq!(v, 0.0);
        }
    }

    #[test]
    fn out_of_range_inputs_are_clamped() {
        assert_eq!(rgb_to_yuv(2.0, -1.0, 0.0), rgb_to_yuv(1.0, 0.0, 0.0));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]
        #[test]
        fn round_trip(r in 0.0f64..=1.0, g in 0.0f64..=1.0, b in 0.0f64..=1.0) {
            let (y, u, v) = rgb_to_yuv(r, g, b);
            prop_assert!((0.0..=1.0).contains(&y));
            prop_assert!(close(yuv_to_rgb(y, u, v), (r, g, b), 1e-6));
        }
    }
}
