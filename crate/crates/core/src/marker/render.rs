//! Synthetic renders of the fiducial marker with known ground truth.
//!
//! Marker-frame units put the inner white square at `[0, side]^2` with the
//! white dot inside the black border at the `(0, 0)` corner, so the four
//! model corners `(0,0), (side,0), (side,side), (0,side)` are the
//! ground-truth `c0..c3`.

use nalgebra::{Matrix3, Vector3};
use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::geometry::{CameraIntrinsics, Point2};
use crate::pose::{Homography, Pose};
use crate::raster::RgbImage;

/// Marker geometry and reflectances.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MarkerLayout {
    pub side: f64,
    pub border: f64,
    pub dot_radius: f64,
    /// White paper margin around the black border.
    pub margin: f64,
    pub white: f64,
    pub black: f64,
    pub background: f64,
}

impl Default for MarkerLayout {
    fn default() -> Self {
        Self {
            side: 1.0,
            border: 0.3,
            dot_radius: 0.09,
            margin: 0.25,
            white: 0.62,
            black: 0.06,
            background: 0.35,
        }
    }
}

impl MarkerLayout {
    pub fn model_corners(&self) -> [Point2; 4] {
        let s = self.side;
        [
            Point2::new(0.0, 0.0),
            Point2::new(s, 0.0),
            Point2::new(s, s),
            Point2::new(0.0, s),
        ]
    }

    pub fn dot_centre(&self) -> Point2 {
        Point2::new(-self.border / 2.0, -self.border / 2.0)
    }

    /// Reflectance at marker-frame point `(x, y)`; the interior is uniform white.
    pub fn reflectance(&self, x: f64, y: f64) -> f64 {
        let s = self.side;
        let b = self.border;
        let m = self.margin;
        let within = |lo: f64, hi: f64| x >= lo && x < hi && y >= lo && y < hi;
        if within(0.0, s) {
            self.white
        } else if within(-b, s + b) {
            let d = self.dot_centre();
            if (x - d.x).hypot(y - d.y) <= self.dot_radius {
                self.white
            } else {
                self.black
            }
        } else if within(-b - m, s + b + m) {
            self.white
        } else {
            self.background
        }
    }
}

/// A rendered frame and its ground truth.
#[derive(Debug, Clone)]
pub struct MarkerRender {
    pub image: RgbImage,
    pub pose: Pose,
    pub corners: [Point2; 4],
    pub dot: Point2,
}

/// Render settings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RenderOptions {
    pub width: usize,
    pub height: usize,
    pub supersample: usize,
    /// Global illumination multiplier applied to the reflectance.
    pub gain: f64,
    /// Standard deviation of additive Gaussian noise, in `[0, 1]` units.
    pub noise_sigma: f64,
}

impl Default for RenderOptions {
    fn default() -> Self {
        Self {
            width: 640,
            height: 480,
            supersample: 4,
            gain: 1.0,
            noise_sigma: 0.0,
        }
    }
}

/// Renders the marker seen by a pinhole camera at `pose` (marker to camera).
pub fn render_marker<R: Rng + ?Sized>(
    layout: &MarkerLayout,
    k: &CameraIntrinsics,
    pose: &Pose,
    opts: &RenderOptions,
    rng: &mut R,
) -> MarkerRender {
    let h = pose.homography(k);
    let inv = h.inverse().expect("pose homography is invertible");
    let ss = opts.supersample.max(1);
    let noise = Normal::new(0.0, opts.noise_sigma.max(1e-300)).expect("valid sigma");
    let mut gray = Vec::with_capacity(opts.width * opts.height);
    for y in 0..opts.height {
        for x in 0..opts.width {
            let mut acc = 0.0;
            for sy in 0..ss {
                for sx in 0..ss {
                    let px = x as f64 - 0.5 + (sx as f64 + 0.5) / ss as f64;
                    let py = y as f64 - 0.5 + (sy as f64 + 0.5) / ss as f64;
                    let v = inv.matrix() * Vector3::new(px, py, 1.0);
                    // points behind the camera map to w <= 0
                    acc += if v.z > 0.0 {
                        layout.reflectance(v.x / v.z, v.y / v.z)
                    } else {
                        layout.background
                    };
                }
            }
            let mut val = acc / (ss * ss) as f64 * opts.gain;
            if opts.noise_sigma > 0.0 {
                val += noise.sample(rng);
            }
            gray.push((val.clamp(0.0, 1.0) * 255.0).round() as u8);
        }
    }
    let image = RgbImage::from_gray(&gray, opts.width, opts.height).expect("sized buffer");
    MarkerRender {
        image,
        pose: *pose,
        corners: layout.model_corners().map(|p| h.apply(p)),
        dot: h.apply(layout.dot_centre()),
    }
}

/// Camera looking at the marker centre from `distance`, tilted by `zenith`
/// from the marker normal, at `azimuth` around it, rolled about its axis.
pub fn look_at_pose(layout: &MarkerLayout, distance: f64, zenith: f64, azimuth: f64, roll: f64) -> Pose {
    let c = layout.side / 2.0;
    let target = Vector3::new(c, c, 0.0);
    // the marker's +z axis points away from the camera side
    let eye = target
        + distance * Vector3::new(zenith.sin() * azimuth.cos(), zenith.sin() * azimuth.sin(), -zenith.cos());
    let fwd = (target - eye).normalize();
    let helper = if fwd.x.abs() < 0.9 { Vector3::x() } else { Vector3::y() };
    let down = fwd.cross(&helper).normalize();
    let right = down.cross(&fwd).normalize();
    let (s, co) = roll.sin_cos();
    let x_axis = right * co + down * s;
    let y_axis = fwd.cross(&x_axis);
    let r = Matrix3::from_rows(&[x_axis.transpose(), y_axis.transpose(), fwd.transpose()]);
    Pose {
        rotation: r,
        translation: -(r * eye),
    }
}

/// Random viewpoint with zenith at most `max_zenith` radians.
pub fn random_pose<R: Rng + ?Sized>(layout: &MarkerLayout, rng: &mut R, max_zenith: f64) -> Pose {
    // uniform over the spherical cap
    let cos_min = max_zenith.cos();
    let zenith = rng.random_range(cos_min..=1.0f64).acos();
    let azimuth = rng.random_range(0.0..std::f64::consts::TAU);
    let roll = rng.random_range(0.0..std::f64::consts::TAU);
    let distance = rng.random_range(3.6..4.6);
    look_at_pose(layout, distance, zenith, azimuth, roll)
}

/// Camera used by the synthetic marker corpus.
pub fn default_camera() -> CameraIntrinsics {
    CameraIntrinsics {
        fx: 700.0,
        fy: 700.0,
        cx: 320.0,
        cy: 240.0,
    }
}

/// Ground-truth homography mapping marker model points into the image.
pub fn model_to_image(k: &CameraIntrinsics, pose: &Pose) -> Homography {
    pose.homography(k)
}
