//! Plane-induced homographies and their factorisation into a camera pose.

use nalgebra::{Matrix3, SMatrix, Vector3};

use crate::error::{Result, RtiError};
use crate::geometry::{CameraIntrinsics, LightDirection, Point2};

/// 3x3 projective map, defined up to scale.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Homography(Matrix3<f64>);

impl Homography {
    /// Wraps a matrix, rejecting (near-)singular ones.
    pub fn new(m: Matrix3<f64>) -> Result<Self> {
        let n = m.norm();
        if !n.is_finite() || n == 0.0 || (m / n).determinant().abs() <= 1e-12 {
            return Err(RtiError::DegenerateHomography("matrix is singular".into()));
        }
        Ok(Self(m))
    }

    pub fn identity() -> Self {
        Self(Matrix3::identity())
    }

    pub fn matrix(&self) -> &Matrix3<f64> {
        &self.0
    }

    pub fn apply(&self, p: Point2) -> Point2 {
        let v = self.0 * Vector3::new(p.x, p.y, 1.0);
        Point2::new(v.x / v.z, v.y / v.z)
    }

    pub fn inverse(&self) -> Result<Self> {
        self.0
            .try_inverse()
            .map(Self)
            .ok_or_else(|| RtiError::DegenerateHomography("matrix is not invertible".into()))
    }

    pub fn scaled(&self, s: f64) -> Self {
        Self(self.0 * s)
    }
}

/// Four-point DLT on Hartley-normalised coordinates: returns `H` with
/// `H * src[i] ~ dst[i]`, scaled so that `h33 = 1` when possible.
pub fn estimate_homography(src: &[Point2; 4], dst: &[Point2; 4]) -> Result<Homography> {
    check_general_position(src, "source")?;
    check_general_position(dst, "destination")?;
    let (ts, ns) = normalising_transform(src);
    let (td, nd) = normalising_transform(dst);

    // 8 equations padded with a zero row so the full SVD exposes the null space.
    let mut a = SMatrix::<f64, 9, 9>::zeros();
    for i in 0..4 {
        let (x, y) = (ns[i].x, ns[i].y);
        let (u, v) = (nd[i].x, nd[i].y);
        let r0 = 2 * i;
        let r1 = r0 + 1;
        a.row_mut(r0).copy_from_slice(&[-x, -y, -1.0, 0.0, 0.0, 0.0, u * x, u * y, u]);
        a.row_mut(r1).copy_from_slice(&[0.0, 0.0, 0.0, -x, -y, -1.0, v * x, v * y, v]);
    }
    let svd = a.svd(false, true);
    let v_t = svd
        .v_t
        .ok_or_else(|| RtiError::DegenerateConfiguration("SVD failed".into()))?;
    let (min_idx, _) = svd
        .singular_values
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .expect("nine singular values");
    let h = v_t.row(min_idx);
    let hn = Matrix3::new(h[0], h[1], h[2], h[3], h[4], h[5], h[6], h[7], h[8]);

    let td_inv = td
        .try_inverse()
        .ok_or_else(|| RtiError::DegenerateConfiguration("normalisation not invertible".into()))?;
    let m = td_inv * hn * ts;
    Homography::new(canonical_scale(m))
}

fn canonical_scale(m: Matrix3<f64>) -> Matrix3<f64> {
    let h33 = m[(2, 2)];
    if h33.abs() > 1e-12 {
        m / h33
    } else {
        m / m.norm()
    }
}

fn check_general_position(p: &[Point2; 4], which: &str) -> Result<()> {
    let scale = p
        .iter()
        .flat_map(|a| p.iter().map(move |b| a.dist(*b)))
        .fold(0.0f64, f64::max);
    if !scale.is_finite() || scale == 0.0 {
        return Err(RtiError::DegenerateConfiguration(format!("{which} points coincide")));
    }
    for (i, j, k) in [(0, 1, 2), (0, 1, 3), (0, 2, 3), (1, 2, 3)] {
        let cross = (p[j].x - p[i].x) * (p[k].y - p[i].y) - (p[j].y - p[i].y) * (p[k].x - p[i].x);
        if cross.abs() <= 1e-9 * scale * scale {
            return Err(RtiError::DegenerateConfiguration(format!(
                "{which} points {i}, {j}, {k} are collinear"
            )));
        }
    }
    Ok(())
}

/// Similarity moving the centroid to the origin with mean distance sqrt(2).
fn normalising_transform(p: &[Point2; 4]) -> (Matrix3<f64>, [Point2; 4]) {
    let cx = p.iter().map(|q| q.x).sum::<f64>() / 4.0;
    let cy = p.iter().map(|q| q.y).sum::<f64>() / 4.0;
    let mean_d = p.iter().map(|q| (q.x - cx).hypot(q.y - cy)).sum::<f64>() / 4.0;
    let s = std::f64::consts::SQRT_2 / mean_d;
    let t = Matrix3::new(s, 0.0, -s * cx, 0.0, s, -s * cy, 0.0, 0.0, 1.0);
    let n = p.map(|q| Point2::new(s * (q.x - cx), s * (q.y - cy)));
    (t, n)
}

/// Rigid transform taking marker-frame points into the camera frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pose {
    pub rotation: Matrix3<f64>,
    pub translation: Vector3<f64>,
}

impl Pose {
    /// Camera optical centre expressed in the marker frame.
    pub fn camera_centre(&self) -> Vector3<f64> {
        -(self.rotation.transpose() * self.translation)
    }

    /// `K [r1 r2 t]`, the homography this pose induces on the marker plane.
    pub fn homography(&self, k: &CameraIntrinsics) -> Homography {
        let mut m = Matrix3::zeros();
        m.set_column(0, &self.rotation.column(0));
        m.set_column(1, &self.rotation.column(1));
        m.set_column(2, &self.translation);
        Homography(k.matrix() * m)
    }
}

/// Factorises a marker-to-image homography into the camera pose.
///
/// `K^-1 H = alpha [r1 r2 t]` with `alpha = 2 / (|m1| + |m2|)`; the rotation is
/// projected onto SO(3) and the sign chosen so the marker lies in front of the
/// camera (`t.z > 0`).
pub fn factor_homography(h: &Homography, k: &CameraIntrinsics) -> Result<Pose> {
    let m = k.inverse_matrix() * h.matrix();
    let m1 = m.column(0).into_owned();
    let m2 = m.column(1).into_owned();
    let m3 = m.column(2).into_owned();
    let denom = m1.norm() + m2.norm();
    if !(denom >= 1e-12) {
        return Err(RtiError::DegenerateHomography(
            "first two columns of K^-1 H vanish".into(),
        ));
    }
    let alpha = 2.0 / denom;
    let r1 = m1 * alpha;
    let r2 = m2 * alpha;
    let mut t = m3 * alpha;
    let r3 = r1.cross(&r2);
    let mut rotation = nearest_rotation(&Matrix3::from_columns(&[r1, r2, r3]))?;
    if t.z < 0.0 {
        for c in 0..2 {
            let col = -rotation.column(c);
            rotation.set_column(c, &col);
        }
        t = -t;
    }
    Ok(Pose {
        rotation,
        translation: t,
    })
}

fn nearest_rotation(m: &Matrix3<f64>) -> Result<Matrix3<f64>> {
    let svd = m.svd(true, true);
    let (Some(mut u), Some(v_t)) = (svd.u, svd.v_t) else {
        return Err(RtiError::DegenerateHomography("SVD failed".into()));
    };
    if (u * v_t).determinant() < 0.0 {
        let c = -u.column(2);
        u.set_column(2, &c);
    }
    Ok(u * v_t)
}

/// Direction from the marker-frame point `anchor` towards the camera centre,
/// expressed with `z` pointing up out of the marker plane.
///
/// The marker frame has `x` along `c0 -> c1` and `y` along `c0 -> c3`; its
/// third axis `x × y` points away from the camera, so the height axis is its
/// negation.
pub fn light_direction_at(pose: &Pose, anchor: [f64; 3]) -> Result<LightDirection> {
    let c = pose.camera_centre() - Vector3::from(anchor);
    if !(c.norm() > 1e-9) {
        return Err(RtiError::invalid("light position coincides with the anchor point"));
    }
    if c.z > 0.0 {
        return Err(RtiError::invalid("camera lies behind the marker plane"));
    }
    LightDirection::new(c.x, c.y, -c.z)
}

/// Light direction towards the camera centre as seen from the marker origin.
pub fn light_direction(pose: &Pose) -> Result<LightDirection> {
    if !(pose.translation.norm() > 1e-9) {
        return Err(RtiError::invalid("pose translation is zero"));
    }
    light_direction_at(pose, [0.0; 3])
}

/// Rotation about the x axis.
pub fn rot_x(angle: f64) -> Matrix3<f64> {
    let (s, c) = angle.sin_cos();
    Matrix3::new(1.0, 0.0, 0.0, 0.0, c, -s, 0.0, s, c)
}

/// Rotation about the y axis.
pub fn rot_y(angle: f64) -> Matrix3<f64> {
    let (s, c) = angle.sin_cos();
    Matrix3::new(c, 0.0, s, 0.0, 1.0, 0.0, -s, 0.0, c)
}

/// Rotation about the z axis.
pub fn rot_z(angle: f64) -> Matrix3<f64> {
    let (s, c) = angle.sin_cos();
    Matrix3::new(c, -s, 0.0, s, c, 0.0, 0.0, 0.0, 1.0)
}

/// Angle of the relative rotation `a^T b`.
pub fn rotation_angle_between(a: &Matrix3<f64>, b: &Matrix3<f64>) -> f64 {
    let r = a.transpose() * b;
    // acos loses precision near zero; use the antisymmetric part as well
    let s = Vector3::new(r[(2, 1)] - r[(1, 2)], r[(0, 2)] - r[(2, 0)], r[(1, 0)] - r[(0, 1)]).norm() / 2.0;
    let c = (r.trace() - 1.0) / 2.0;
    s.atan2(c)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn square() -> [Point2; 4] {
        [
            Point2::new(0.0, 0.0),
            Point2::new(1.0, 0.0),
            Point2::new(1.0, 1.0),
            Point2::new(0.0, 1.0),
        ]
    }

    #[test]
    fn identity_from_equal_point_sets() {
        let h = estimate_homography(&square(), &square()).unwrap();
        assert!((h.matrix() - Matrix3::identity()).norm() < 1e-12);
    }

    #[test]
    fn recovers_known_homography() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..50 {
            let mut m = Matrix3::identity();
            for v in m.iter_mut() {
                *v += rng.random_range(-0.3..0.3);
            }
            m[(2, 0)] *= 0.01;
            m[(2, 1)] *= 0.01;
            m /= m[(2, 2)];
            let truth = Homography(m);
            let src = [
                Point2::new(10.0, 20.0),
                Point2::new(310.0, 25.0),
                Point2::new(300.0, 280.0),
                Point2::new(15.0, 290.0),
            ];
            let dst = src.map(|p| truth.apply(p));
            let h = estimate_homography(&src, &dst).unwrap();
            for (a, b) in h.matrix().iter().zip(m.iter()) {
                assert!((a - b).abs() <= 1e-9 * b.abs().max(1e-3), "{a} vs {b}");
            }
            for (s, d) in src.iter().zip(&dst) {
                assert!(h.apply(*s).dist(*d) < 1e-9);
                assert!(h.inverse().unwrap().apply(*d).dist(*s) < 1e-9);
            }
        }
    }

    #[test]
    fn collinear_points_rejected() {
        let mut src = square();
        src[2] = Point2::new(2.0, 0.0);
        assert!(matches!(
            estimate_homography(&src, &square()),
            Err(RtiError::DegenerateConfiguration(_))
        ));
    }

    #[test]
    fn canonical_pose_from_identity() {
        let p = factor_homography(&Homography::identity(), &CameraIntrinsics::identity()).unwrap();
        assert!((p.rotation - Matrix3::identity()).norm() < 1e-15);
        assert!((p.translation - Vector3::new(0.0, 0.0, 1.0)).norm() < 1e-15);
    }

    #[test]
    fn recovers_tilted_pose() {
        let k = CameraIntrinsics::new(800.0, 800.0, 320.0, 240.0).unwrap();
        let truth = Pose {
            rotation: rot_x(30f64.to_radians()),
            translation: Vector3::new(0.1, 0.2, 1.0),
        };
        let p = factor_homography(&truth.homography(&k), &k).unwrap();
        assert!(rotation_angle_between(&p.rotation, &truth.rotation) < 1e-6);
        assert!((p.translation - truth.translation).norm() < 1e-6);
    }

    #[test]
    fn scale_invariance() {
        let k = CameraIntrinsics::new(700.0, 710.0, 300.0, 200.0).unwrap();
        let truth = Pose {
            rotation: rot_z(0.4) * rot_x(0.5),
            translation: Vector3::new(-0.3, 0.2, 2.0),
        };
        let h = truth.homography(&k);
        let base = factor_homography(&h, &k).unwrap();
        for s in [5.0, 0.01, 1e4, -1.0, -5.0, -1e3] {
            let p = factor_homography(&h.scaled(s), &k).unwrap();
            assert!((p.rotation - base.rotation).norm() < 1e-12, "scale {s}");
            assert!((p.translation - base.translation).norm() < 1e-12, "scale {s}");
        }
    }

    #[test]
    fn zero_columns_rejected() {
        let m = Matrix3::new(0.0, 0.0, 1.0, 0.0, 0.0, 2.0, 0.0, 0.0, 3.0);
        assert!(factor_homography(&Homography(m), &CameraIntrinsics::identity()).is_err());
    }

    #[test]
    fn light_direction_examples() {
        let overhead = Pose {
            rotation: Matrix3::identity(),
            translation: Vector3::new(0.0, 0.0, 2.0),
        };
        let l = light_direction(&overhead).unwrap();
        assert_eq!(l.as_array(), [0.0, 0.0, 1.0]);

        // camera centre at (1, 1, -sqrt 2) in the marker frame
        let oblique = Pose {
            rotation: Matrix3::identity(),
            translation: Vector3::new(-1.0, -1.0, 2f64.sqrt()),
        };
        let l = light_direction(&oblique).unwrap();
        assert!((l.x() - 0.5).abs() < 1e-12);
        assert!((l.y() - 0.5).abs() < 1e-12);
        assert!((l.z() - 0.7071068).abs() < 1e-7);

        let zero = Pose {
            rotation: Matrix3::identity(),
            translation: Vector3::zeros(),
        };
        assert!(light_direction(&zero).is_err());
    }

    #[test]
    fn rotation_stays_orthonormal_under_noise() {
        let k = CameraIntrinsics::new(800.0, 800.0, 320.0, 240.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..200 {
            let pose = Pose {
                rotation: rot_z(rng.random_range(-3.0..3.0)) * rot_x(rng.random_range(-1.0..1.0)),
                translation: Vector3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), 4.0),
            };
            let mut m = *pose.homography(&k).matrix();
            for v in m.iter_mut() {
                *v *= 1.0 + rng.random_range(-0.01..0.01);
            }
            let p = factor_homography(&Homography(m), &k).unwrap();
            assert!((p.rotation.transpose() * p.rotation - Matrix3::identity()).norm() < 1e-9);
            assert!((p.rotation.determinant() - 1.0).abs() < 1e-9);
            assert!(p.translation.z > 0.0);
        }
    }
}
