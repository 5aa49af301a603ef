use crate::geometry::Point2;

/// Ramer-Douglas-Peucker simplification of an open polyline.
///
/// Endpoints are always kept; every dropped point lies within `epsilon` of the
/// segment that replaces it.
pub fn rdp_simplify(points: &[Point2], epsilon: f64) -> Vec<Point2> {
    if points.len() < 3 {
        return points.to_vec();
    }
    let mut keep = vec![false; points.len()];
    keep[0] = true;
    keep[points.len() - 1] = true;
    mark(points, 0, points.len() - 1, epsilon.max(0.0), &mut keep);
    points
        .iter()
        .zip(&keep)
        .filter_map(|(p, &k)| k.then_some(*p))
        .collect()
}

fn mark(points: &[Point2], first: usize, last: usize, eps: f64, keep: &mut [bool]) {
    // explicit stack: long jittery contours would otherwise recurse deeply
    let mut stack = vec![(first, last)];
    while let Some((a, b)) = stack.pop() {
        if b <= a + 1 {
            continue;
        }
        let (mut far, mut dmax) = (a, -1.0);
        for i in a + 1..b {
            let d = segment_distance(points[i], points[a], points[b]);
            if d > dmax {
                dmax = d;
                far = i;
            }
        }
        if dmax > eps {
            keep[far] = true;
            stack.push((a, far));
            stack.push((far, b));
        }
    }
}

/// Simplifies a closed polygon (first point not repeated at the end).
///
/// The ring is split at two mutually distant vertices, each half simplified,
/// then vertices that still lie within `epsilon` of their neighbours' chord
/// are pruned so the split points carry no special status.
pub fn rdp_simplify_closed(points: &[Point2], epsilon: f64) -> Vec<Point2> {
    let n = points.len();
    if n < 4 {
        return points.to_vec();
    }
    let cx = points.iter().map(|p| p.x).sum::<f64>() / n as f64;
    let cy = points.iter().map(|p| p.y).sum::<f64>() / n as f64;
    let centre = Point2::new(cx, cy);
    let a = argmax(points, |p| p.dist(centre));
    let b = argmax(points, |p| p.dist(points[a]));
    let (a, b) = (a.min(b), a.max(b));
    if a == b {
        return vec![points[a]];
    }
    let first: Vec<Point2> = points[a..=b].to_vec();
    let second: Vec<Point2> = points[b..].iter().chain(&points[..=a]).copied().collect();
    let mut ring = rdp_simplify(&first, epsilon);
    ring.pop();
    let mut tail = rdp_simplify(&second, epsilon);
    tail.pop();
    ring.extend(tail);

    loop {
        let m = ring.len();
        if m <= 3 {
            break;
        }
        let weakest = (0..m)
            .map(|i| {
                let d = segment_distance(ring[i], ring[(i + m - 1) % m], ring[(i + 1) % m]);
                (d, i)
            })
            .min_by(|x, y| x.0.total_cmp(&y.0));
        match weakest {
            Some((d, i)) if d <= epsilon => {
                ring.remove(i);
            }
            _ => break,
        }
    }
    ring
}

fn argmax(points: &[Point2], f: impl Fn(&Point2) -> f64) -> usize {
    let mut best = (0, f64::NEG_INFINITY);
    for (i, p) in points.iter().enumerate() {
        let v = f(p);
        if v > best.1 {
            best = (i, v);
        }
    }
    best.0
}

/// Distance from `p` to the segment `[a, b]`.
pub fn segment_distance(p: Point2, a: Point2, b: Point2) -> f64 {
    let (dx, dy) = (b.x - a.x, b.y - a.y);
    let len2 = dx * dx + dy * dy;
    if len2 == 0.0 {
        return p.dist(a);
    }
    let t = (((p.x - a.x) * dx + (p.y - a.y) * dy) / len2).clamp(0.0, 1.0);
    p.dist(Point2::new(a.x + t * dx, a.y + t * dy))
}

/// Distance from `p` to the polyline (minimum over its segments).
pub fn polyline_distance(p: Point2, line: &[Point2]) -> f64 {
    match line.len() {
        0 => f64::INFINITY,
        1 => p.dist(line[0]),
        _ => line
            .windows(2)
            .map(|w| segment_distance(p, w[0], w[1]))
            .fold(f64::INFINITY, f64::min),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn collinear_points_collapse() {
        let pts: Vec<Point2> = (0..100).map(|i| Point2::new(i as f64, 2.0 * i as f64)).collect();
        let s = rdp_simplify(&pts, 1.0);
        assert_eq!(s, vec![pts[0], pts[99]]);
    }

    fn jittery_square(rng: &mut ChaCha8Rng) -> Vec<Point2> {
        let mut pts = Vec::new();
        let side = 60;
        let corners = [(10.0, 10.0), (70.0, 10.0), (70.0, 70.0), (10.0, 70.0)];
        for e in 0..4 {
            let (x0, y0) = corners[e];
            let (x1, y1) = corners[(e + 1) % 4];
            for k in 0..side {
                let t = k as f64 / side as f64;
                let jitter = if k == 0 { 0.0 } else { rng.random_range(-1.0..=1.0) };
                // jitter perpendicular to the edge
                let (nx, ny) = (-(y1 - y0) / 60.0, (x1 - x0) / 60.0);
                pts.push(Point2::new(x0 + t * (x1 - x0) + jitter * nx, y0 + t * (y1 - y0) + jitter * ny));
            }
        }
        pts
    }

    #[test]
    fn jittery_square_simplifies_to_four_vertices() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..20 {
            let pts = jittery_square(&mut rng);
            let s = rdp_simplify_closed(&pts, 3.0);
            assert_eq!(s.len(), 4, "{s:?}");
            let mut ring = s.clone();
            ring.push(s[0]);
            for p in &pts {
                assert!(polyline_distance(*p, &ring) <= 3.0 + 1e-9);
            }
        }
    }

    #[test]
    fn open_jittery_edge_keeps_within_epsilon() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let pts = jittery_square(&mut rng);
        let s = rdp_simplify(&pts, 3.0);
        for p in &pts {
            assert!(polyline_distance(*p, &s) <= 3.0 + 1e-9);
        }
    }

    #[test]
    fn zero_epsilon_only_drops_exactly_collinear_points() {
        let pts = vec![
            Point2::new(0.0, 0.0),
            Point2::new(1.0, 0.0),
            Point2::new(2.0, 0.0),
            Point2::new(2.0, 1.0),
            Point2::new(3.0, 3.5),
            Point2::new(5.0, 3.0),
        ];
        let s = rdp_simplify(&pts, 0.0);
        let expected: Vec<Point2> = pts.iter().enumerate().filter(|(i, _)| *i != 1).map(|(_, p)| *p).collect();
        assert_eq!(s, expected);
    }

    #[test]
    fn short_inputs_pass_through() {
        let pts = vec![Point2::new(0.0, 0.0), Point2::new(1.0, 1.0)];
        assert_eq!(rdp_simplify(&pts, 5.0), pts);
    }

    proptest! {
        #[test]
        fn output_is_subset_within_epsilon(
            raw in proptest::collection::vec((-50.0f64..50.0, -50.0f64..50.0), 2..60),
            eps in 0.0f64..10.0,
        ) {
            let pts: Vec<Point2> = raw.iter().map(|&(x, y)| Point2::new(x, y)).collect();
            let s = rdp_simplify(&pts, eps);
            prop_assert_eq!(s[0], pts[0]);
            prop_assert_eq!(*s.last().unwrap(), *pts.last().unwrap());
            for q in &s {
                prop_assert!(pts.contains(q));
            }
            for p in &pts {
                prop_assert!(polyline_distance(*p, &s) <= eps + 1e-9);
            }
        }
    }
}
