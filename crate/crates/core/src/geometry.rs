use nalgebra::Matrix3;
use serde::{Deserialize, Serialize};

use crate::error::{Result, RtiError};

/// Image-plane point in pixels.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Point2 {
    pub x: f64,
    pub y: f64,
}

impl Point2 {
    #[inline]
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    #[inline]
    pub fn dist(self, o: Point2) -> f64 {
        (self.x - o.x).hypot(self.y - o.y)
    }

    #[inline]
    pub fn midpoint(self, o: Point2) -> Point2 {
        Point2::new(0.5 * (self.x + o.x), 0.5 * (self.y + o.y))
    }
}

/// Unit vector pointing from the object towards the light, with `z >= 0`.
///
/// `(x, y)` are the `(l_u, l_v)` coordinates fed to the reflectance models.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LightDirection {
    x: f64,
    y: f64,
    z: f64,
}

impl LightDirection {
    /// Normalises `(x, y, z)`. Rejects non-finite or zero vectors and lights
    /// below the object plane.
    pub fn new(x: f64, y: f64, z: f64) -> Result<Self> {
        let n = (x * x + y * y + z * z).sqrt();
        if !n.is_finite() || n < 1e-12 {
            return Err(RtiError::invalid("light direction must be a non-zero finite vector"));
        }
        if z < 0.0 {
            return Err(RtiError::invalid(format!("light below the object plane (z = {z})")));
        }
        Ok(Self {
            x: x / n,
            y: y / n,
            z: z / n,
        })
    }

    /// Builds the direction from its projection on the object plane.
    pub fn from_uv(lu: f64, lv: f64) -> Result<Self> {
        let r2 = lu * lu + lv * lv;
        if !r2.is_finite() || r2 > 1.0 + 1e-9 {
            return Err(RtiError::invalid(format!(
                "invalid light: lu^2 + lv^2 = {r2} exceeds 1"
            )));
        }
        let z = (1.0 - r2).max(0.0).sqrt();
        Self::new(lu, lv, z)
    }

    /// Direction at the given zenith and azimuth angles (radians).
    pub fn from_angles(zenith: f64, azimuth: f64) -> Result<Self> {
        let s = zenith.sin();
        Self::new(s * azimuth.cos(), s * azimuth.sin(), zenith.cos())
    }

    #[inline]
    pub fn x(&self) -> f64 {
        self.x
    }
    #[inline]
    pub fn y(&self) -> f64 {
        self.y
    }
    #[inline]
    pub fn z(&self) -> f64 {
        self.z
    }
    #[inline]
    pub fn lu(&self) -> f64 {
        self.x
    }
    #[inline]
    pub fn lv(&self) -> f64 {
        self.y
    }

    #[inline]
    pub fn as_array(&self) -> [f64; 3] {
        [self.x, self.y, self.z]
    }

    pub fn zenith(&self) -> f64 {
        self.z.clamp(-1.0, 1.0).acos()
    }

    /// Distance between the `(l_u, l_v)` projections of two lights.
    pub fn planar_distance(&self, o: &LightDirection) -> f64 {
        (self.x - o.x).hypot(self.y - o.y)
    }
}

/// Pinhole intrinsics with zero skew.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CameraIntrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
}

impl CameraIntrinsics {
    pub fn new(fx: f64, fy: f64, cx: f64, cy: f64) -> Result<Self> {
        if !(fx > 0.0 && fy > 0.0) || !cx.is_finite() || !cy.is_finite() {
            return Err(RtiError::invalid("focal lengths must be positive"));
        }
        Ok(Self { fx, fy, cx, cy })
    }

    pub fn identity() -> Self {
        Self {
            fx: 1.0,
            fy: 1.0,
            cx: 0.0,
            cy: 0.0,
        }
    }

    /// Intrinsics from a 35mm-equivalent focal length (36 mm frame width),
    /// principal point at the image centre.
    pub fn from_exif(focal35_mm: f64, width: u32, height: u32) -> Result<Self> {
        if !(focal35_mm > 0.0) || !focal35_mm.is_finite() {
            return Err(RtiError::invalid(format!(
                "35mm-equivalent focal length must be positive, got {focal35_mm}"
            )));
        }
        let f = focal35_mm / 36.0 * width as f64;
        Self::new(f, f, width as f64 / 2.0, height as f64 / 2.0)
    }

    pub fn matrix(&self) -> Matrix3<f64> {
        Matrix3::new(self.fx, 0.0, self.cx, 0.0, self.fy, self.cy, 0.0, 0.0, 1.0)
    }

    pub fn inverse_matrix(&self) -> Matrix3<f64> {
        Matrix3::new(
            1.0 / self.fx,
            0.0,
            -self.cx / self.fx,
            0.0,
            1.0 / self.fy,
            -self.cy / self.fy,
            0.0,
            0.0,
            1.0,
        )
    }
}
