//! Detection of the square fiducial: thick black border, white interior and a
//! white dot inside the border at one corner.
//!
//! Pipeline: luma, Otsu binarisation, hierarchical border following, RDP
//! simplification to quadrilaterals, quad-in-quad candidate selection, dot
//! search between corresponding corners, sub-pixel edge refinement.

mod contour;
mod otsu;
mod rdp;
pub mod render;

use serde::{Deserialize, Serialize};

pub use contour::{extract_contours, Contour, Polarity};
pub use otsu::{histogram, otsu_threshold};
pub use rdp::{polyline_distance, rdp_simplify, rdp_simplify_closed, segment_distance};

use crate::error::{Result, RtiError};
use crate::geometry::Point2;
use crate::raster::{ImagePlane, RgbImage};

/// RDP tolerance as a fraction of the contour perimeter.
pub const RDP_PERIMETER_FRACTION: f64 = 0.02;
/// Radius of the disc probed for the white dot, in pixels.
pub const DOT_PROBE_RADIUS: f64 = 3.0;
const MIN_QUAD_AREA: f64 = 100.0;
const MIN_INNER_TO_OUTER_AREA: f64 = 0.1;
const MAX_INNER_TO_OUTER_AREA: f64 = 0.95;

/// Inner-square corners, clockwise in image coordinates starting from the
/// corner next to the white dot.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MarkerDetection {
    pub corners: [Point2; 4],
    pub dot: Point2,
}

impl MarkerDetection {
    /// Shoelace area in image coordinates; positive for clockwise order on screen.
    pub fn signed_area(&self) -> f64 {
        signed_area(&self.corners)
    }
}

/// Detects the single marker in `img`.
///
/// Fails with [`RtiError::MarkerNotFound`] or [`RtiError::AmbiguousMarker`];
/// callers treat both as "skip this frame".
pub fn detect_marker(img: &RgbImage) -> Result<MarkerDetection> {
    let gray8 = img.gray8();
    let threshold = match otsu_threshold(&histogram(&gray8)) {
        Ok(t) => t,
        Err(_) => return Err(RtiError::MarkerNotFound),
    };
    let w = img.width();
    let h = img.height();
    let binary = ImagePlane::new(
        w,
        h,
        gray8.iter().map(|&g| if g > threshold { 1.0 } else { 0.0 }).collect(),
    )?;
    let contours = extract_contours(&binary);
    let quads: Vec<Option<[Point2; 4]>> = contours.iter().map(simplify_to_quad).collect();

    let gray = ImagePlane::new(w, h, gray8.iter().map(|&g| g as f32).collect())?;
    let mut found: Vec<([Point2; 4], Point2)> = Vec::new();
    let mut ambiguity: Option<String> = None;

    for (i, c) in contours.iter().enumerate() {
        if c.polarity != Polarity::BlackToWhite {
            continue;
        }
        let (Some(inner), Some(parent)) = (quads[i], c.parent) else {
            continue;
        };
        if contours[parent].polarity != Polarity::WhiteToBlack {
            continue;
        }
        let Some(outer) = quads[parent] else { continue };
        let ratio = signed_area(&inner).abs() / signed_area(&outer).abs();
        if !(MIN_INNER_TO_OUTER_AREA..=MAX_INNER_TO_OUTER_AREA).contains(&ratio) {
            continue;
        }
        let Some(pairing) = pair_vertices(&inner, &outer) else {
            ambiguity = Some("inner/outer corner pairing is not one-to-one".into());
            continue;
        };
        let dots: Vec<usize> = (0..4)
            .filter(|&v| {
                let m = inner[v].midpoint(outer[pairing[v]]);
                disc_mean(&gray, m, DOT_PROBE_RADIUS) > threshold as f64
            })
            .collect();
        match dots.len() {
            1 => {
                let v = dots[0];
                found.push((orient(inner, v), inner[v].midpoint(outer[pairing[v]])));
            }
            0 => {}
            n => ambiguity = Some(format!("{n} white dots found on one candidate")),
        }
    }

    match found.len() {
        0 => Err(match ambiguity {
            Some(msg) => RtiError::AmbiguousMarker(msg),
            None => RtiError::MarkerNotFound,
        }),
        1 => {
            let (rough, dot) = found[0];
            let smooth = gaussian_blur(&gray, 1.0);
            let corners = refine_corners(&smooth, &rough);
            Ok(MarkerDetection { corners, dot })
        }
        n => Err(RtiError::AmbiguousMarker(format!("{n} marker candidates"))),
    }
}

fn simplify_to_quad(c: &Contour) -> Option<[Point2; 4]> {
    if c.points.len() < 8 {
        return None;
    }
    let pts: Vec<Point2> = c.points.iter().map(|&(x, y)| Point2::new(x as f64, y as f64)).collect();
    let eps = RDP_PERIMETER_FRACTION * c.perimeter();
    let s = rdp_simplify_closed(&pts, eps);
    if s.len() != 4 {
        return None;
    }
    let q = [s[0], s[1], s[2], s[3]];
    (signed_area(&q).abs() >= MIN_QUAD_AREA && is_convex(&q)).then_some(q)
}

pub(crate) fn signed_area(q: &[Point2; 4]) -> f64 {
    (0..4)
        .map(|i| {
            let a = q[i];
            let b = q[(i + 1) % 4];
            a.x * b.y - b.x * a.y
        })
        .sum::<f64>()
        / 2.0
}

fn is_convex(q: &[Point2; 4]) -> bool {
    let cross: Vec<f64> = (0..4)
        .map(|i| {
            let a = q[i];
            let b = q[(i + 1) % 4];
            let c = q[(i + 2) % 4];
            (b.x - a.x) * (c.y - b.y) - (b.y - a.y) * (c.x - b.x)
        })
        .collect();
    cross.iter().all(|&c| c > 0.0) || cross.iter().all(|&c| c < 0.0)
}

/// For every inner vertex, the index of its nearest outer vertex, if that
/// assignment is a bijection.
fn pair_vertices(inner: &[Point2; 4], outer: &[Point2; 4]) -> Option<[usize; 4]> {
    let mut pairing = [0usize; 4];
    let mut used = [false; 4];
    for (v, p) in inner.iter().enumerate() {
        let j = (0..4)
            .min_by(|&a, &b| p.dist(outer[a]).total_cmp(&p.dist(outer[b])))
            .expect("four vertices");
        if used[j] {
            return None;
        }
        used[j] = true;
        pairing[v] = j;
    }
    Some(pairing)
}

/// Clockwise (on screen) ordering starting at vertex `first`.
fn orient(q: [Point2; 4], first: usize) -> [Point2; 4] {
    
    if signed_area(&q) >= 0.0 {
        [q[first], q[(first + 1) % 4], q[(first + 2) % 4], q[(first + 3) % 4]]
    } else {
        [q[first], q[(first + 3) % 4], q[(first + 2) % 4], q[(first + 1) % 4]]
    }
}

fn disc_mean(gray: &ImagePlane, c: Point2, radius: f64) -> f64 {
    let (w, h) = (gray.width() as i64, gray.height() as i64);
    let r = radius.ceil() as i64;
    let (cx, cy) = (c.x.round() as i64, c.y.round() as i64);
    let mut sum = 0.0;
    let mut n = 0usize;
    for y in cy - r..=cy + r {
        for x in cx - r..=cx + r {
            if x < 0 || y < 0 || x >= w || y >= h {
                continue;
            }
            if ((x as f64 - c.x).powi(2) + (y as f64 - c.y).powi(2)).sqrt() <= radius {
                sum += gray.get(x as usize, y as usize) as f64;
                n += 1;
            }
        }
    }
    if n == 0 {
        0.0
    } else {
        sum / n as f64
    }
}

/// Separable Gaussian blur with edge clamping.
pub(crate) fn gaussian_blur(img: &ImagePlane, sigma: f64) -> ImagePlane {
    let r = (3.0 * sigma).ceil() as i64;
    let kernel: Vec<f64> = (-r..=r).map(|i| (-(i * i) as f64 / (2.0 * sigma * sigma)).exp()).collect();
    let norm: f64 = kernel.iter().sum();
    let (w, h) = (img.width() as i64, img.height() as i64);
    let pass = |src: &ImagePlane, horizontal: bool| {
        ImagePlane::from_fn(src.width(), src.height(), |x, y| {
            let mut acc = 0.0;
            for (k, &kv) in kernel.iter().enumerate() {
                let o = k as i64 - r;
                let (sx, sy) = if horizontal {
                    ((x as i64 + o).clamp(0, w - 1), y as i64)
                } else {
                    (x as i64, (y as i64 + o).clamp(0, h - 1))
                };
                acc += kv * src.get(sx as usize, sy as usize) as f64;
            }
            (acc / norm) as f32
        })
    };
    pass(&pass(img, true), false)
}

/// Sub-pixel corners: each side is re-located from gradient peaks sampled
/// along its normal (parabolic interpolation), fitted with a total
/// least-squares line, and adjacent lines are intersected.
fn refine_corners(gray: &ImagePlane, rough: &[Point2; 4]) -> [Point2; 4] {
    let lines: Vec<Option<Line>> = (0..4).map(|i| fit_edge(gray, rough[i], rough[(i + 1) % 4])).collect();
    let mut out = *rough;
    for i in 0..4 {
        let prev = &lines[(i + 3) % 4];
        let next = &lines[i];
        if let (Some(a), Some(b)) = (prev, next) {
            if let Some(p) = a.intersect(b) {
                if p.dist(rough[i]) <= 4.0 {
                    out[i] = p;
                }
            }
        }
    }
    out
}

#[derive(Debug, Clone, Copy)]
struct Line {
    point: Point2,
    dir: (f64, f64),
}

impl Line {
    fn intersect(&self, o: &Line) -> Option<Point2> {
        let det = self.dir.0 * (-o.dir.1) - self.dir.1 * (-o.dir.0);
        if det.abs() < 1e-9 {
            return None;
        }
        let (bx, by) = (o.point.x - self.point.x, o.point.y - self.point.y);
        let s = (bx * (-o.dir.1) - by * (-o.dir.0)) / det;
        Some(Point2::new(self.point.x + s * self.dir.0, self.point.y + s * self.dir.1))
    }
}

const EDGE_SEARCH: f64 = 4.0;
const EDGE_STEP: f64 = 0.5;

fn fit_edge(gray: &ImagePlane, a: Point2, b: Point2) -> Option<Line> {
    let len = a.dist(b);
    if len < 8.0 {
        return None;
    }
    let d = ((b.x - a.x) / len, (b.y - a.y) / len);
    let n = (-d.1, d.0);
    let samples = (len * 0.7).floor().max(5.0) as usize;
    let steps = (EDGE_SEARCH / EDGE_STEP) as i64;
    let mut pts = Vec::with_capacity(samples);
    for s in 0..samples {
        let t = 0.15 + 0.7 * s as f64 / (samples - 1) as f64;
        let p = Point2::new(a.x + t * (b.x - a.x), a.y + t * (b.y - a.y));
        let profile: Vec<f64> = (-steps - 1..=steps + 1)
            .map(|k| gray.sample(p.x + n.0 * k as f64 * EDGE_STEP, p.y + n.1 * k as f64 * EDGE_STEP))
            .collect();
        let grad: Vec<f64> = (1..profile.len() - 1).map(|i| (profile[i + 1] - profile[i - 1]).abs()).collect();
        let (k, _) = grad
            .iter()
            .enumerate()
            .max_by(|x, y| x.1.total_cmp(y.1))
            .expect("non-empty profile");
        if k == 0 || k + 1 >= grad.len() {
            continue;
        }
        let (g0, g1, g2) = (grad[k - 1], grad[k], grad[k + 1]);
        let denom = g0 - 2.0 * g1 + g2;
        let frac = if denom.abs() > 1e-12 { 0.5 * (g0 - g2) / denom } else { 0.0 };
        let off = (k as f64 - steps as f64 + frac.clamp(-0.5, 0.5)) * EDGE_STEP;
        pts.push(Point2::new(p.x + n.0 * off, p.y + n.1 * off));
    }
    let line = fit_line(&pts)?;
    // one trimming pass against stray gradients from interior content
    let kept: Vec<Point2> = pts.iter().copied().filter(|p| line.distance(*p) <= 1.0).collect();
    if kept.len() >= 5 && kept.len() < pts.len() {
        fit_line(&kept)
    } else {
        Some(line)
    }
}

impl Line {
    fn distance(&self, p: Point2) -> f64 {
        ((p.x - self.point.x) * self.dir.1 - (p.y - self.point.y) * self.dir.0).abs()
    }
}

fn fit_line(pts: &[Point2]) -> Option<Line> {
    if pts.len() < 3 {
        return None;
    }
    let n = pts.len() as f64;
    let cx = pts.iter().map(|p| p.x).sum::<f64>() / n;
    let cy = pts.iter().map(|p| p.y).sum::<f64>() / n;
    let (mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0);
    for p in pts {
        let (dx, dy) = (p.x - cx, p.y - cy);
        sxx += dx * dx;
        sxy += dx * dy;
        syy += dy * dy;
    }
    // principal axis of the 2x2 scatter
    let angle = 0.5 * (2.0 * sxy).atan2(sxx - syy);
    Some(Line {
        point: Point2::new(cx, cy),
        dir: (angle.cos(), angle.sin()),
    })
}
