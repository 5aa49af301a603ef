//! Per-pixel light-vector compression with principal component analysis.

use std::path::Path;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Result, RtiError};
use crate::mlic::Mlic;

/// Default number of bases.
pub const DEFAULT_BASES: usize = 8;
/// Default cap on the number of pixels used to accumulate the scatter matrix.
pub const DEFAULT_SAMPLE_CAP: usize = 50_000;

// pixels processed per scatter update; bounds the dense block at CHUNK x N
const CHUNK: usize = 2048;

/// Orthonormal basis of the `N`-dimensional intensity space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PcaBasis {
    n_in: usize,
    n_out: usize,
    mean: Vec<f64>,
    /// `n_out x n_in`, row-major.
    components: Vec<f64>,
    explained_variance: Vec<f64>,
}

impl PcaBasis {
    pub fn n_in(&self) -> usize {
        self.n_in
    }

    pub fn n_out(&self) -> usize {
        self.n_out
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    pub fn component(&self, i: usize) -> &[f64] {
        &self.components[i * self.n_in..(i + 1) * self.n_in]
    }

    pub fn explained_variance(&self) -> &[f64] {
        &self.explained_variance
    }

    /// Coefficients of one intensity vector.
    pub fn project(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.n_in {
            return Err(RtiError::invalid(format!(
                "vector has {} entries, basis expects {}",
                x.len(),
                self.n_in
            )));
        }
        Ok((0..self.n_out)
            .map(|i| {
                self.component(i)
                    .iter()
                    .zip(x.iter().zip(&self.mean))
                    .map(|(c, (v, m))| c * (v - m))
                    .sum()
            })
            .collect())
    }

    /// `mean + components^T k`.
    pub fn reconstruct(&self, k: &[f64]) -> Result<Vec<f64>> {
        if k.len() != self.n_out {
            return Err(RtiError::invalid(format!(
                "coefficient vector has {} entries, basis has {}",
                k.len(),
                self.n_out
            )));
        }
        let mut out = self.mean.clone();
        for (i, &ki) in k.iter().enumerate() {
            for (o, c) in out.iter_mut().zip(self.component(i)) {
                *o += ki * c;
            }
        }
        Ok(out)
    }

    pub fn save_json(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, serde_json::to_string(self)?)?;
        Ok(())
    }

    pub fn load_json(path: impl AsRef<Path>) -> Result<Self> {
        let b: PcaBasis = serde_json::from_slice(&std::fs::read(path)?)?;
        if b.mean.len() != b.n_in || b.components.len() != b.n_in * b.n_out || b.explained_variance.len() != b.n_out {
            return Err(RtiError::invalid("pca.json: array lengths disagree with declared sizes"));
        }
        Ok(b)
    }
}

/// Per-pixel coefficient grid, pixel-major (`W * H * B` values).
#[derive(Debug, Clone, PartialEq)]
pub struct KGrid {
    width: usize,
    height: usize,
    bases: usize,
    coeffs: Vec<f32>,
}

impl KGrid {
    pub fn new(width: usize, height: usize, bases: usize, coeffs: Vec<f32>) -> Result<Self> {
        if coeffs.len() != width * height * bases {
            return Err(RtiError::invalid(format!(
                "k-grid of {width}x{height}x{bases} needs {} values, got {}",
                width * height * bases,
                coeffs.len()
            )));
        }
        if coeffs.iter().any(|c| !c.is_finite()) {
            return Err(RtiError::invalid("k-grid contains non-finite values"));
        }
        Ok(Self {
            width,
            height,
            bases,
            coeffs,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn bases(&self) -> usize {
        self.bases
    }

    pub fn coeffs(&self) -> &[f32] {
        &self.coeffs
    }

    /// Coefficients of pixel index `p` (row-major).
    pub fn pixel(&self, p: usize) -> &[f32] {
        &self.coeffs[p * self.bases..(p + 1) * self.bases]
    }
}

/// Fits a `b`-dimensional basis to the pixel intensity vectors of `mlic`.
///
/// At most `sample_cap` pixels (0 = all) are drawn without replacement using
/// `seed`. When the data has rank below `b` the remaining rows are still an
/// orthonormal completion, reported with zero explained variance.
pub fn pca_fit(mlic: &Mlic, b: usize, sample_cap: usize, seed: u64) -> Result<PcaBasis> {
    let all: Vec<usize> = (0..mlic.len()).collect();
    pca_fit_lights(mlic, &all, b, sample_cap, seed)
}

/// [`pca_fit`] restricted to the planes listed in `lights`, in that order.
pub fn pca_fit_lights(mlic: &Mlic, lights: &[usize], b: usize, sample_cap: usize, seed: u64) -> Result<PcaBasis> {
    let planes = select_planes(mlic, lights)?;
    let n = planes.len();
    if b == 0 || b > n {
        return Err(RtiError::invalid(format!("cannot extract {b} bases from {n} lights")));
    }
    let total = mlic.pixel_count();
    let pixels: Vec<usize> = if sample_cap == 0 || sample_cap >= total {
        (0..total).collect()
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut idx = rand::seq::index::sample(&mut rng, total, sample_cap).into_vec();
        idx.sort_unstable();
        idx
    };
    let s = pixels.len() as f64;

    let mut mean = vec![0.0f64; n];
    for (m, d) in mean.iter_mut().zip(&planes) {
        *m = pixels.iter().map(|&p| d[p] as f64).sum::<f64>() / s;
    }

    // scatter = sum over chunks of X_c^T X_c with X_c the centred chunk
    let scatter = pixels
        .par_chunks(CHUNK)
        .fold(
            || DMatrix::zeros(n, n),
            |mut acc: DMatrix<f64>, chunk| {
                let x = DMatrix::from_fn(chunk.len(), n, |r, c| planes[c][chunk[r]] as f64 - mean[c]);
                acc.gemm_tr(1.0, &x, &x, 1.0);
                acc
            },
        )
        .reduce(|| DMatrix::zeros(n, n), |a, b| a + b);

    let eig = SymmetricEigen::new(scatter);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[j].total_cmp(&eig.eigenvalues[i]).then(i.cmp(&j)));
    let top = eig.eigenvalues[order[0]].max(0.0);
    let tol = top * n as f64 * f64::EPSILON * 16.0;

    let mut components = Vec::with_capacity(b * n);
    let mut explained_variance = Vec::with_capacity(b);
    for &i in order.iter().take(b) {
        let mut v: Vec<f64> = eig.eigenvectors.column(i).iter().copied().collect();
        fix_sign(&mut v);
        components.extend_from_slice(&v);
        let lambda = eig.eigenvalues[i];
        explained_variance.push(if lambda > tol { lambda / s } else { 0.0 });
    }
    Ok(PcaBasis {
        n_in: n,
        n_out: b,
        mean,
        components,
        explained_variance,
    })
}

/// Flips `v` so its largest-magnitude entry is positive (first one on ties).
fn fix_sign(v: &mut [f64]) {
    let mut best = 0;
    for (i, x) in v.iter().enumerate() {
        if x.abs() > v[best].abs() {
            best = i;
        }
    }
    if v[best] < 0.0 {
        v.iter_mut().for_each(|x| *x = -*x);
    }
}

fn select_planes<'a>(mlic: &'a Mlic, lights: &[usize]) -> Result<Vec<&'a [f32]>> {
    lights
        .iter()
        .map(|&i| {
            mlic.luminance()
                .get(i)
                .map(|p| p.data())
                .ok_or_else(|| RtiError::invalid(format!("light index {i} out of range")))
        })
        .collect()
}

/// Projects every pixel of `mlic` onto the basis.
pub fn pca_project(basis: &PcaBasis, mlic: &Mlic) -> Result<KGrid> {
    let all: Vec<usize> = (0..mlic.len()).collect();
    pca_project_lights(basis, mlic, &all)
}

/// [`pca_project`] using only the planes listed in `lights`.
pub fn pca_project_lights(basis: &PcaBasis, mlic: &Mlic, lights: &[usize]) -> Result<KGrid> {
    let planes = select_planes(mlic, lights)?;
    if planes.len() != basis.n_in {
        return Err(RtiError::invalid(format!(
            "{} planes selected, basis expects {}",
            planes.len(),
            basis.n_in
        )));
    }
    let b = basis.n_out;
    let n = basis.n_in;
    let comps = DMatrix::from_row_slice(b, n, &basis.components);
    let mean = DVector::from_column_slice(&basis.mean);
    let mut coeffs = vec![0.0f32; mlic.pixel_count() * b];
    coeffs
        .par_chunks_mut(CHUNK * b)
        .enumerate()
        .for_each(|(ci, out)| {
            let first = ci * CHUNK;
            let count = out.len() / b;
            // columns are centred pixel vectors
            let x = DMatrix::from_fn(n, count, |r, c| planes[r][first + c] as f64 - mean[r]);
            let k = &comps * x;
            for c in 0..count {
                for i in 0..b {
                    out[c * b + i] = k[(i, c)] as f32;
                }
            }
        });
    KGrid::new(mlic.width(), mlic.height(), b, coeffs)
}

/// Reconstructs the intensity vector of coefficient vector `k`.
pub fn pca_reconstruct(basis: &PcaBasis, k: &[f64]) -> Result<Vec<f64>> {
    basis.reconstruct(k)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::LightDirection;
    use crate::raster::ImagePlane;
    use rand::Rng;

    /// Builds an MLIC whose pixel `p` has intensity vector `rows[p]`.
    fn mlic_from_rows(w: usize, h: usize, rows: &[Vec<f64>]) -> Mlic {
        let n = rows[0].len();
        let planes = (0..n)
            .map(|i| ImagePlane::new(w, h, rows.iter().map(|r| r[i] as f32).collect()).unwrap())
            .collect();
        let lights = (0..n)
            .map(|i| LightDirection::from_uv(0.5 * (i as f64 / n as f64), 0.1).unwrap())
            .collect();
        Mlic::new(planes, lights, ImagePlane::filled(w, h, 0.5), ImagePlane::filled(w, h, 0.5), (0..n).collect())
            .unwrap()
    }

    fn random_rows(count: usize, n: usize, seed: u64) -> Vec<Vec<f64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..count)
            .map(|_| (0..n).map(|_| rng.random_range(0.0..1.0f32) as f64).collect())
            .collect()
    }

    /// Cyclic Jacobi eigensolver used as an independent reference.
    fn jacobi_eigen(mut a: Vec<Vec<f64>>) -> (Vec<f64>, Vec<Vec<f64>>) {
        let n = a.len();
        let mut v: Vec<Vec<f64>> = (0..n).map(|i| (0..n).map(|j| (i == j) as u8 as f64).collect()).collect();
        for _ in 0..100 {
            let off: f64 = (0..n).flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j))).map(|(i, j)| a[i][j] * a[i][j]).sum();
            if off < 1e-30 {
                break;
            }
            for p in 0..n {
                for q in p + 1..n {
                    if a[p][q].abs() < 1e-300 {
                        continue;
                    }
                    let theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
                    let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                    let t = if theta == 0.0 { 1.0 } else { t };
                    let c = 1.0 / (t * t + 1.0).sqrt();
                    let s = t * c;
                    for k in 0..n {
                        let (akp, akq) = (a[k][p], a[k][q]);
                        a[k][p] = c * akp - s * akq;
                        a[k][q] = s * akp + c * akq;
                    }
                    for k in 0..n {
                        let (apk, aqk) = (a[p][k], a[q][k]);
                        a[p][k] = c * apk - s * aqk;
                        a[q][k] = s * apk + c * aqk;
                    }
                    for row in v.iter_mut() {
                        let (vp, vq) = (row[p], row[q]);
                        row[p] = c * vp - s * vq;
                        row[q] = s * vp + c * vq;
                    }
                }
            }
        }
        let vals = (0..n).map(|i| a[i][i]).collect();
        let vecs = (0..n).map(|j| (0..n).map(|i| v[i][j]).collect()).collect();
        (vals, vecs)
    }

    #[test]
    fn constant_vectors_have_zero_variance() {
        let v = vec![0.1, 0.4, 0.7, 0.2];
        let rows = vec![v.clone(); 12];
        let basis = pca_fit(&mlic_from_rows(4, 3, &rows), 3, 0, 0).unwrap();
        for (m, e) in basis.mean().iter().zip(&v) {
            assert!((m - e).abs() < 1e-7);
        }
        assert!(basis.explained_variance().iter().all(|&e| e == 0.0));
    }

    #[test]
    fn components_match_jacobi_reference() {
        let rows = random_rows(10, 5, 7);
        let basis = pca_fit(&mlic_from_rows(5, 2, &rows), 5, 0, 0).unwrap();
        let f32_rows: Vec<Vec<f64>> = rows.iter().map(|r| r.iter().map(|&x| x as f32 as f64).collect()).collect();
        let mean: Vec<f64> = (0..5).map(|j| f32_rows.iter().map(|r| r[j]).sum::<f64>() / 10.0).collect();
        let cov: Vec<Vec<f64>> = (0..5)
            .map(|i| {
                (0..5)
                    .map(|j| f32_rows.iter().map(|r| (r[i] - mean[i]) * (r[j] - mean[j])).sum::<f64>() / 10.0)
                    .collect()
            })
            .collect();
        let (vals, vecs) = jacobi_eigen(cov);
        let mut order: Vec<usize> = (0..5).collect();
        order.sort_by(|&a, &b| vals[b].total_cmp(&vals[a]));
        for (row, &j) in order.iter().enumerate() {
            let dot: f64 = basis.component(row).iter().zip(&vecs[j]).map(|(a, b)| a * b).sum();
            assert!(dot.abs() > 1.0 - 1e-9, "row {row}: {dot}");
            assert!((basis.explained_variance()[row] - vals[j]).abs() < 1e-12);
        }
    }

    #[test]
    fn complete_basis_reconstructs_exactly() {
        let rows = random_rows(30, 6, 3);
        let m = mlic_from_rows(6, 5, &rows);
        let basis = pca_fit(&m, 6, 0, 0).unwrap();
        for p in [0, 7, 29] {
            let x = m.pixel_vector(p);
            let back = basis.reconstruct(&basis.project(&x).unwrap()).unwrap();
            for (a, b) in back.iter().zip(&x) {
                assert!((a - b).abs() < 1e-5);
            }
        }
    }

    #[test]
    fn rows_are_orthonormal_and_sorted() {
        let rows = random_rows(200, 12, 4);
        let basis = pca_fit(&mlic_from_rows(20, 10, &rows), 8, 0, 0).unwrap();
        for i in 0..8 {
            for j in 0..8 {
                let d: f64 = basis.component(i).iter().zip(basis.component(j)).map(|(a, b)| a * b).sum();
                assert!((d - (i == j) as u8 as f64).abs() < 1e-6);
            }
            let c = basis.component(i);
            let big = c.iter().copied().fold(0.0f64, |a, x| if x.abs() > a.abs() { x } else { a });
            assert!(big > 0.0);
        }
        assert!(basis.explained_variance().windows(2).all(|w| w[0] >= w[1]));
    }

    #[test]
    fn rank_deficient_data_is_padded() {
        // every vector is a multiple of one direction: rank 1 after centring
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let dir = [0.2, 0.5, -0.1, 0.3];
        let rows: Vec<Vec<f64>> = (0..16)
            .map(|_| {
                let t: f64 = rng.random_range(0.0..1.0);
                dir.iter().map(|d| 0.4 + t * d).collect()
            })
            .collect();
        let basis = pca_fit(&mlic_from_rows(4, 4, &rows), 3, 0, 0).unwrap();
        assert!(basis.explained_variance()[0] > 0.0);
        assert_eq!(&basis.explained_variance()[1..], &[0.0, 0.0]);
    }

    #[test]
    fn project_examples() {
        let rows = random_rows(40, 6, 5);
        let m = mlic_from_rows(8, 5, &rows);
        let basis = pca_fit(&m, 3, 0, 0).unwrap();
        let k = basis.project(basis.mean()).unwrap();
        assert!(k.iter().all(|x| x.abs() < 1e-12));
        let shifted: Vec<f64> = basis.mean().iter().zip(basis.component(0)).map(|(a, b)| a + b).collect();
        let k = basis.project(&shifted).unwrap();
        assert!((k[0] - 1.0).abs() < 1e-12 && k[1].abs() < 1e-12 && k[2].abs() < 1e-12);
        assert_eq!(basis.reconstruct(&[0.0; 3]).unwrap(), basis.mean());
        assert!(basis.project(&[0.0; 5]).is_err());
    }

    #[test]
    fn residual_energy_matches_discarded_variance() {
        let rows = random_rows(300, 10, 6);
        let m = mlic_from_rows(20, 15, &rows);
        let basis = pca_fit(&m, 4, 0, 0).unwrap();
        let grid = pca_project(&basis, &m).unwrap();
        let mut residual = 0.0;
        let mut total = 0.0;
        for p in 0..m.pixel_count() {
            let x = m.pixel_vector(p);
            let k: Vec<f64> = grid.pixel(p).iter().map(|&v| v as f64).collect();
            let r = basis.reconstruct(&k).unwrap();
            residual += x.iter().zip(&r).map(|(a, b)| (a - b).powi(2)).sum::<f64>();
            total += x.iter().zip(basis.mean()).map(|(a, b)| (a - b).powi(2)).sum::<f64>();
        }
        let expected = total - 300.0 * basis.explained_variance().iter().sum::<f64>();
        assert!((residual - expected).abs() <= 1e-4 * expected, "{residual} vs {expected}");
    }

    #[test]
    fn reconstruction_error_decreases_with_bases() {
        let rows = random_rows(150, 10, 8);
        let m = mlic_from_rows(15, 10, &rows);
        let mut last = f64::INFINITY;
        for b in 1..=10 {
            let basis = pca_fit(&m, b, 0, 0).unwrap();
            let mse = (0..m.pixel_count())
                .map(|p| {
                    let x = m.pixel_vector(p);
                    let r = basis.reconstruct(&basis.project(&x).unwrap()).unwrap();
                    x.iter().zip(&r).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / 10.0
                })
                .sum::<f64>()
                / m.pixel_count() as f64;
            assert!(mse <= last + 1e-7, "B={b}: {mse} > {last}");
            last = mse;
        }
    }

    #[test]
    fn grid_projection_agrees_with_pointwise() {
        let rows = random_rows(5000, 7, 9);
        let m = mlic_from_rows(100, 50, &rows);
        let basis = pca_fit(&m, 3, 1000, 2).unwrap();
        let grid = pca_project(&basis, &m).unwrap();
        for p in [0, 2047, 2048, 4999] {
            let k = basis.project(&m.pixel_vector(p)).unwrap();
            for (a, b) in grid.pixel(p).iter().zip(&k) {
                assert!((*a as f64 - b).abs() < 1e-5);
            }
        }
    }

    #[test]
    fn fit_is_deterministic_and_validates_b() {
        let rows = random_rows(400, 6, 10);
        let m = mlic_from_rows(20, 20, &rows);
        assert_eq!(pca_fit(&m, 3, 100, 5).unwrap(), pca_fit(&m, 3, 100, 5).unwrap());
        assert!(pca_fit(&m, 7, 0, 0).is_err());
        assert!(pca_fit(&m, 0, 0, 0).is_err());
    }

    #[test]
    fn json_round_trip() {
        let rows = random_rows(20, 4, 11);
        let basis = pca_fit(&mlic_from_rows(5, 4, &rows), 2, 0, 0).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("pca.json");
        basis.save_json(&path).unwrap();
        assert_eq!(PcaBasis::load_json(&path).unwrap(), basis);
    }
}
