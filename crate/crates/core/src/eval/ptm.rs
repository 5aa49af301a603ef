use nalgebra::{DMatrix, Matrix6, SVector, Vector6};
use rayon::prelude::*;

use crate::color::yuv_to_rgb;
use crate::error::{Result, RtiError};
use crate::geometry::LightDirection;
use crate::mlic::{LightSplit, Mlic};
use crate::raster::{unit_to_u8, ImagePlane, RgbImage};
use crate::relight::Relight;

/// Relative ridge added to the normal equations.
const RIDGE: f64 = 1e-10;
/// Smallest accepted ratio of extreme singular values of the design matrix.
const MIN_CONDITION: f64 = 1e-9;

/// `(l_u^2, l_v^2, l_u l_v, l_u, l_v, 1)`.
pub fn ptm_basis(lu: f64, lv: f64) -> Vector6<f64> {
    Vector6::new(lu * lu, lv * lv, lu * lv, lu, lv, 1.0)
}

/// Polynomial texture map: a biquadratic in `(l_u, l_v)` per pixel.
#[derive(Debug, Clone, PartialEq)]
pub struct PtmModel {
    width: usize,
    height: usize,
    coeffs: Vec<f64>,
    mean_u: ImagePlane,
    mean_v: ImagePlane,
}

impl PtmModel {
    pub fn new(width: usize, height: usize, coeffs: Vec<f64>, mean_u: ImagePlane, mean_v: ImagePlane) -> Result<Self> {
        if coeffs.len() != width * height * 6 || coeffs.iter().any(|c| !c.is_finite()) {
            return Err(RtiError::invalid("PTM coefficients must be W*H*6 finite values"));
        }
        for plane in [&mean_u, &mean_v] {
            if plane.width() != width || plane.height() != height {
                return Err(RtiError::invalid("PTM chroma planes have the wrong size"));
            }
        }
        Ok(Self {
            width,
            height,
            coeffs,
            mean_u,
            mean_v,
        })
    }

    /// `(a0..a5)` of pixel index `p`.
    pub fn pixel(&self, p: usize) -> &[f64] {
        &self.coeffs[p * 6..(p + 1) * 6]
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    /// Unclamped biquadratic value at pixel index `p`.
    pub fn evaluate(&self, p: usize, l: &LightDirection) -> f64 {
        let basis = ptm_basis(l.lu(), l.lv());
        self.pixel(p).iter().zip(basis.iter()).map(|(a, b)| a * b).sum()
    }

    /// Relit image, composing chroma as the neural model does.
    pub fn ptm_relight(&self, l: &LightDirection) -> RgbImage {
        let lum = self.relight_luminance(l);
        let data = lum
            .data()
            .iter()
            .enumerate()
            .flat_map(|(p, &y)| {
                let (r, g, b) = yuv_to_rgb(
                    y as f64,
                    self.mean_u.data()[p] as f64 - 0.5,
                    self.mean_v.data()[p] as f64 - 0.5,
                );
                [r, g, b].map(|c| unit_to_u8(c as f32))
            })
            .collect();
        RgbImage::new(self.width, self.height, data).expect("sized buffer")
    }
}

impl Relight for PtmModel {
    fn width(&self) -> usize {
        self.width
    }

    fn height(&self) -> usize {
        self.height
    }

    fn relight_luminance(&self, l: &LightDirection) -> ImagePlane {
        let data = (0..self.width * self.height)
            .into_par_iter()
            .map(|p| self.evaluate(p, l).clamp(0.0, 1.0) as f32)
            .collect();
        ImagePlane::new(self.width, self.height, data).expect("sized buffer")
    }
}

/// Least-squares biquadratic per pixel over the training lights.
pub fn ptm_fit(mlic: &Mlic, split: &LightSplit) -> Result<PtmModel> {
    split.validate(mlic.len())?;
    let lights: Vec<&LightDirection> = split.train_idx.iter().map(|&i| &mlic.lights()[i]).collect();
    if lights.len() < 6 {
        return Err(RtiError::DegenerateLights(format!(
            "{} training lights cannot determine 6 coefficients",
            lights.len()
        )));
    }
    let design = DMatrix::from_fn(lights.len(), 6, |r, c| ptm_basis(lights[r].lu(), lights[r].lv())[c]);
    let sv = design.singular_values();
    let (smax, smin) = (sv.max(), sv.min());
    if !(smin > MIN_CONDITION * smax) {
        return Err(RtiError::DegenerateLights(format!(
            "light design matrix is rank deficient (singular values {smin:.3e} / {smax:.3e})"
        )));
    }
    let mut gram: Matrix6<f64> = (design.transpose() * &design).fixed_view::<6, 6>(0, 0).into_owned();
    let ridge = RIDGE * gram.trace() / 6.0;
    for i in 0..6 {
        gram[(i, i)] += ridge;
    }
    let chol = gram
        .cholesky()
        .ok_or_else(|| RtiError::DegenerateLights("normal equations are not positive definite".into()))?;
    // solve once for the whole pixel-independent projector
    let projector = chol.solve(&design.transpose().fixed_rows::<6>(0).into_owned());

    let planes: Vec<&[f32]> = split.train_idx.iter().map(|&i| mlic.luminance()[i].data()).collect();
    let mut coeffs = vec![0.0f64; mlic.pixel_count() * 6];
    coeffs.par_chunks_mut(6).enumerate().for_each(|(p, out)| {
        let mut acc = SVector::<f64, 6>::zeros();
        for (j, plane) in planes.iter().enumerate() {
            acc += projector.column(j) * plane[p] as f64;
        }
        out.copy_from_slice(acc.as_slice());
    });
    PtmModel::new(mlic.width(), mlic.height(), coeffs, mlic.mean_u().clone(), mlic.mean_v().clone())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_lights(n: usize, rng: &mut ChaCha8Rng) -> Vec<LightDirection> {
        (0..n)
            .map(|_| {
                let r = rng.random_range(0.0..0.9f64).sqrt();
                let a = rng.random_range(0.0..std::f64::consts::TAU);
                LightDirection::from_uv(r * a.cos(), r * a.sin()).unwrap()
            })
            .collect()
    }

    fn mlic_from(lights: &[LightDirection], w: usize, h: usize, f: impl Fn(usize, &LightDirection) -> f64) -> Mlic {
        let planes = lights
            .iter()
            .map(|l| ImagePlane::new(w, h, (0..w * h).map(|p| f(p, l) as f32).collect()).unwrap())
            .collect();
        Mlic::new(
            planes,
            lights.to_vec(),
            ImagePlane::filled(w, h, 0.5),
            ImagePlane::filled(w, h, 0.5),
            (0..lights.len()).collect(),
        )
        .unwrap()
    }

    fn all(n: usize) -> LightSplit {
        LightSplit {
            train_idx: (0..n).collect(),
            test_idx: vec![],
            exclusion_radius: 0.0,
        }
    }

    /// Coefficients from the ridged normal equations, solved by Gauss-Jordan
    /// elimination.
    fn normal_equations(a: &[[f64; 6]], y: &[f64]) -> [f64; 6] {
        let mut m = [[0.0f64; 7]; 6];
        for (row, &t) in a.iter().zip(y) {
            for i in 0..6 {
                for j in 0..6 {
                    m[i][j] += row[i] * row[j];
                }
                m[i][6] += row[i] * t;
            }
        }
        let ridge = 1e-10 * (0..6).map(|i| m[i][i]).sum::<f64>() / 6.0;
        for (i, row) in m.iter_mut().enumerate() {
            row[i] += ridge;
        }
        for c in 0..6 {
            let piv = (c..6).max_by(|&i, &j| m[i][c].abs().total_cmp(&m[j][c].abs())).unwrap();
            m.swap(c, piv);
            for r in 0..6 {
                if r != c {
                    let f = m[r][c] / m[c][c];
                    for k in c..7 {
                        m[r][k] -= f * m[c][k];
                    }
                }
            }
        }
        std::array::from_fn(|i| m[i][6] / m[i][i])
    }

    #[test]
    fn constant_pixels() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let lights = random_lights(12, &mut rng);
        let m = mlic_from(&lights, 3, 2, |_, _| 0.375);
        let ptm = ptm_fit(&m, &all(12)).unwrap();
        for p in 0..6 {
            let c = ptm.pixel(p);
            for (i, v) in c.iter().enumerate() {
                let want = if i == 5 { 0.375 } else { 0.0 };
                assert!((v - want).abs() < 1e-9, "{c:?}");
            }
        }
    }

    #[test]
    fn recovers_generating_coefficients() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let lights = random_lights(20, &mut rng);
        // values stay exactly representable in f32 after the forward construction
        let truth: Vec<[f64; 6]> = (0..4)
            .map(|_| std::array::from_fn(|_| (rng.random_range(-64..64) as f64) / 256.0))
            .collect();
        let lights: Vec<LightDirection> = lights
            .iter()
            .map(|l| {
                let q = |v: f64| (v * 16.0).round() / 16.0;
                LightDirection::from_uv(q(l.lu()), q(l.lv())).unwrap()
            })
            .collect();
        let m = mlic_from(&lights, 2, 2, |p, l| {
            truth[p].iter().zip(ptm_basis(l.lu(), l.lv()).iter()).map(|(a, b)| a * b).sum()
        });
        let ptm = ptm_fit(&m, &all(20)).unwrap();
        for p in 0..4 {
            for (a, b) in ptm.pixel(p).iter().zip(&truth[p]) {
                assert!((a - b).abs() < 1e-8, "{a} vs {b}");
            }
        }
    }

    #[test]
    fn matches_normal_equation_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let lights = random_lights(8, &mut rng);
        let values: Vec<Vec<f32>> = (0..8).map(|_| (0..9).map(|_| rng.random_range(0.0..1.0f32)).collect()).collect();
        let m = mlic_from(&lights, 3, 3, |p, l| {
            let n = lights.iter().position(|x| x == l).unwrap();
            values[n][p] as f64
        });
        let ptm = ptm_fit(&m, &all(8)).unwrap();
        let a: Vec<[f64; 6]> = lights
            .iter()
            .map(|l| {
                let b = ptm_basis(l.lu(), l.lv());
                std::array::from_fn(|i| b[i])
            })
            .collect();
        for p in 0..9 {
            let y: Vec<f64> = (0..8).map(|n| values[n][p] as f64).collect();
            let want = normal_equations(&a, &y);
            for (got, w) in ptm.pixel(p).iter().zip(&want) {
                assert!((got - w).abs() < 1e-8, "{got} vs {w}");
            }
        }
    }

    #[test]
    fn fit_beats_perturbations() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let lights = random_lights(15, &mut rng);
        let m = mlic_from(&lights, 1, 1, |_, l| (3.0 * l.lu()).sin() * 0.3 + 0.5 + l.lv().powi(3));
        let ptm = ptm_fit(&m, &all(15)).unwrap();
        let residual = |c: &[f64]| -> f64 {
            lights
                .iter()
                .enumerate()
                .map(|(n, l)| {
                    let pred: f64 = c.iter().zip(ptm_basis(l.lu(), l.lv()).iter()).map(|(a, b)| a * b).sum();
                    (pred - m.luminance()[n].data()[0] as f64).powi(2)
                })
                .sum()
        };
        let best = residual(ptm.pixel(0));
        for _ in 0..100 {
            let c: Vec<f64> = ptm.pixel(0).iter().map(|v| v + rng.random_range(-0.01..0.01)).collect();
            assert!(residual(&c) >= best - 1e-12);
        }
    }

    #[test]
    fn degenerate_lights_are_rejected() {
        // all lights on one line through the origin: l_u^2, l_u l_v, ... are dependent
        let lights: Vec<LightDirection> = (0..10)
            .map(|i| LightDirection::from_uv(0.03 * i as f64, 0.06 * i as f64).unwrap())
            .collect();
        let m = mlic_from(&lights, 2, 2, |_, _| 0.5);
        assert!(matches!(ptm_fit(&m, &all(10)), Err(RtiError::DegenerateLights(_))));
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let m = mlic_from(&random_lights(5, &mut rng), 2, 2, |_, _| 0.5);
        assert!(matches!(ptm_fit(&m, &all(5)), Err(RtiError::DegenerateLights(_))));
    }

    #[test]
    fn relight_is_definitional_and_deterministic() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let lights = random_lights(10, &mut rng);
        let m = mlic_from(&lights, 4, 3, |p, l| 0.2 + 0.1 * p as f64 * l.lu().abs());
        let ptm = ptm_fit(&m, &all(10)).unwrap();
        let l = LightDirection::from_uv(0.3, 0.3).unwrap();
        let img = ptm.ptm_relight(&l);
        for y in 0..3 {
            for x in 0..4 {
                let v = unit_to_u8(ptm.evaluate(y * 4 + x, &l).clamp(0.0, 1.0) as f32);
                assert_eq!(img.pixel(x, y), [v, v, v]);
            }
        }
        assert_eq!(img, ptm.ptm_relight(&l));
    }
}
