//! Hierarchical border following on binary images (Suzuki & Abe).
//!
//! Foreground is any pixel with value `>= 0.5`. Borders between a foreground
//! component and its surrounding background are *outer* borders; borders of
//! background holes inside a component are *hole* borders. With foreground
//! standing for white, outer borders go black-to-white and hole borders go
//! white-to-black (read from outside in).

use crate::raster::ImagePlane;

/// Transition crossed when entering the region enclosed by the border.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Polarity {
    /// Outer border of a foreground (white) component.
    BlackToWhite,
    /// Border of a background (black) hole inside a foreground component.
    WhiteToBlack,
}

/// A closed pixel border with its place in the containment tree.
#[derive(Debug, Clone, PartialEq)]
pub struct Contour {
    /// Pixel coordinates `(x, y)` of the traced border pixels, in order.
    pub points: Vec<(i32, i32)>,
    pub closed: bool,
    /// Index of the enclosing border in the same list, `None` for top level.
    pub parent: Option<usize>,
    pub polarity: Polarity,
}

impl Contour {
    pub fn is_hole(&self) -> bool {
        self.polarity == Polarity::WhiteToBlack
    }

    /// Length of the closed polyline through the traced pixels.
    pub fn perimeter(&self) -> f64 {
        let n = self.points.len();
        if n < 2 {
            return 0.0;
        }
        (0..n)
            .map(|i| {
                let a = self.points[i];
                let b = self.points[(i + 1) % n];
                (((a.0 - b.0).pow(2) + (a.1 - b.1).pow(2)) as f64).sqrt()
            })
            .sum()
    }
}

// Neighbour offsets (drow, dcol) in counter-clockwise order as displayed
// (rows grow downwards): E, NE, N, NW, W, SW, S, SE.
const DIRS: [(i32, i32); 8] = [(0, 1), (-1, 1), (-1, 0), (-1, -1), (0, -1), (1, -1), (1, 0), (1, 1)];

fn dir_index(dr: i32, dc: i32) -> usize {
    DIRS.iter()
        .position(|&d| d == (dr, dc))
        .expect("offset is a unit neighbour")
}

/// Extracts every border of the binary image with parent links.
pub fn extract_contours(binary: &ImagePlane) -> Vec<Contour> {
    let w = binary.width();
    let h = binary.height();
    if w == 0 || h == 0 {
        return Vec::new();
    }
    let pw = w + 2;
    let ph = h + 2;
    // Padded label image; 1 marks unvisited foreground.
    let mut f = vec![0i32; pw * ph];
    for y in 0..h {
        for x in 0..w {
            if binary.get(x, y) >= 0.5 {
                f[(y + 1) * pw + x + 1] = 1;
            }
        }
    }
    let at = |r: i32, c: i32| (r as usize) * pw + c as usize;

    // Border bookkeeping indexed by NBD; entry 1 is the image frame (a hole border).
    let mut is_hole_by_nbd: Vec<bool> = vec![false, true];
    let mut parent_by_nbd: Vec<Option<i32>> = vec![None, None];
    let mut contours: Vec<Contour> = Vec::new();
    let mut nbd: i32 = 1;

    for r in 1..(ph as i32 - 1) {
        let mut lnbd: i32 = 1;
        for c in 1..(pw as i32 - 1) {
            let v = f[at(r, c)];
            let start = if v == 1 && f[at(r, c - 1)] == 0 {
                Some((false, (r, c - 1)))
            } else if v >= 1 && f[at(r, c + 1)] == 0 {
                if v > 1 {
                    lnbd = v;
                }
                Some((true, (r, c + 1)))
            } else {
                None
            };

            if let Some((hole, from)) = start {
                nbd += 1;
                let lnbd_hole = is_hole_by_nbd[lnbd as usize];
                let parent = if hole == lnbd_hole {
                    parent_by_nbd[lnbd as usize]
                } else {
                    Some(lnbd)
                };
                is_hole_by_nbd.push(hole);
                parent_by_nbd.push(parent);

                let points = follow_border(&mut f, pw, (r, c), from, nbd);
                contours.push(Contour {
                    points,
                    closed: true,
                    parent: parent.filter(|&p| p >= 2).map(|p| (p - 2) as usize),
                    polarity: if hole {
                        Polarity::WhiteToBlack
                    } else {
                        Polarity::BlackToWhite
                    },
                });
            }

            let v = f[at(r, c)];
            if v != 1 && v != 0 {
                lnbd = v.abs();
            }
        }
    }
    contours
}

/// Steps 3.1-3.5 of the border following algorithm; returns the traced
/// pixels in unpadded `(x, y)` coordinates.
fn follow_border(f: &mut [i32], pw: usize, start: (i32, i32), from: (i32, i32), nbd: i32) -> Vec<(i32, i32)> {
    let at = |p: (i32, i32)| (p.0 as usize) * pw + p.1 as usize;
    let to_xy = |p: (i32, i32)| (p.1 - 1, p.0 - 1);

    // 3.1: clockwise search from `from` around `start`.
    let d0 = dir_index(from.0 - start.0, from.1 - start.1);
    let mut first = None;
    for k in 0..8 {
        let d = DIRS[(d0 + 8 - k) % 8];
        let p = (start.0 + d.0, start.1 + d.1);
        if f[at(p)] != 0 {
            first = Some(p);
            break;
        }
    }
    let Some(p1) = first else {
        f[at(start)] = -nbd;
        return vec![to_xy(start)];
    };

    let mut points = Vec::new();
    let mut p2 = p1;
    let mut p3 = start;
    loop {
        // 3.3: counter-clockwise search around p3 starting after p2.
        let d2 = dir_index(p2.0 - p3.0, p2.1 - p3.1);
        let mut p4 = p3;
        let mut east_examined_zero = false;
        for k in 1..=8 {
            let di = (d2 + k) % 8;
            let d = DIRS[di];
            let q = (p3.0 + d.0, p3.1 + d.1);
            if f[at(q)] != 0 {
                p4 = q;
                break;
            }
            if di == 0 {
                east_examined_zero = true;
            }
        }
        // 3.4
        if east_examined_zero {
            f[at(p3)] = -nbd;
        } else if f[at(p3)] == 1 {
            f[at(p3)] = nbd;
        }
        points.push(to_xy(p3));
        // 3.5
        if p4 == start && p3 == p1 {
            break;
        }
        p2 = p3;
        p3 = p4;
    }
    points
}
