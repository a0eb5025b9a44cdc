//! Gauss rules on segments, triangles (collapsed tensor Gauss) and convex
//! polygons (fan of triangles around the vertex centroid).

use std::collections::HashMap;
use std::f64::consts::PI;
use std::sync::{Arc, OnceLock, RwLock};

use thiserror::Error;

pub type Point = [f64; 2];

#[derive(Debug, Error, Clone, PartialEq)]
pub enum QuadError {
    #[error("unsupported quadrature order {0}")]
    UnsupportedOrder(usize),
    #[error("polygon is not convex or not counter-clockwise")]
    NonConvex,
}

pub const MAX_SEGMENT_POINTS: usize = 20;

/// Gauss-Legendre nodes and weights on `[-1, 1]` by Newton iteration.
fn gauss_legendre(n: usize) -> Vec<(f64, f64)> {
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 1.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            let pn = if n == 0 { 1.0 } else { p1 };
            let pm = if n == 1 { 1.0 } else { p0 };
            dp = n as f64 * (x * pn - pm) / (x * x - 1.0);
            let dx = pn / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        out.push((x, 2.0 / ((1.0 - x * x) * dp * dp)));
    }
    out.sort_by(|a, b| a.0.total_cmp(&b.0));
    out
}

/// Gauss-Legendre rule on `[0, 1]`, exact to degree `2 npts - 1`.
pub fn gauss_segment(npts: usize) -> Result<Arc<Vec<(f64, f64)>>, QuadError> {
    if !(1..=MAX_SEGMENT_POINTS).contains(&npts) {
        return Err(QuadError::UnsupportedOrder(npts));
    }
    static CACHE: OnceLock<RwLock<HashMap<usize, Arc<Vec<(f64, f64)>>>>> = OnceLock::new();
    let cache = CACHE.get_or_init(Default::default);
    if let Some(r) = cache.read().unwrap().get(&npts) {
        return Ok(r.clone());
    }
    let rule: Vec<(f64, f64)> = gauss_legendre(npts).into_iter().map(|(x, w)| (0.5 * (x + 1.0), 0.5 * w)).collect();
    Ok(cache.write().unwrap().entry(npts).or_insert_with(|| Arc::new(rule)).clone())
}

/// Number of Gauss points for exactness of `degree` on a segment.
pub fn segment_points_for(degree: usize) -> usize {
    degree / 2 + 1
}

/// Triangle rule exact for total degree `degree`: barycentric nodes and
/// weights summing to one (multiply by the triangle area).
pub fn rule_triangle(degree: usize) -> Result<Arc<Vec<([f64; 3], f64)>>, QuadError> {
    let n = (degree + 2).div_ceil(2);
    if n > MAX_SEGMENT_POINTS {
        return Err(QuadError::UnsupportedOrder(degree));
    }
    static CACHE: OnceLock<RwLock<HashMap<usize, Arc<Vec<([f64; 3], f64)>>>>> = OnceLock::new();
    let cache = CACHE.get_or_init(Default::default);
    if let Some(r) = cache.read().unwrap().get(&degree) {
        return Ok(r.clone());
    }
    let g = gauss_segment(n)?;
    let mut rule = Vec::with_capacity(n * n);
    for &(u, wu) in g.iter() {
        for &(v, wv) in g.iter() {
            // (u, v) in the unit square -> (x, y) = (u, v (1 - u)), Jacobian 1 - u
            let x = u;
            let y = v * (1.0 - u);
            rule.push(([1.0 - x - y, x, y], 2.0 * wu * wv * (1.0 - u)));
        }
    }
    Ok(cache.write().unwrap().entry(degree).or_insert_with(|| Arc::new(rule)).clone())
}

pub fn triangle_area(t: &[Point; 3]) -> f64 {
    0.5 * ((t[1][0] - t[0][0]) * (t[2][1] - t[0][1]) - (t[2][0] - t[0][0]) * (t[1][1] - t[0][1]))
}

/// Physical points and weights on a triangle.
pub fn triangle_points(t: &[Point; 3], degree: usize) -> Result<Vec<(Point, f64)>, QuadError> {
    let area = triangle_area(t).abs();
    Ok(rule_triangle(degree)?
        .iter()
        .map(|(b, w)| {
            let x = b[0] * t[0][0] + b[1] * t[1][0] + b[2] * t[2][0];
            let y = b[0] * t[0][1] + b[1] * t[1][1] + b[2] * t[2][1];
            ([x, y], w * area)
        })
        .collect())
}

/// True if the vertex cycle is strictly convex and counter-clockwise.
pub fn is_convex_ccw(poly: &[Point]) -> bool {
    let n = poly.len();
    if n < 3 {
        return false;
    }
    (0..n).all(|i| {
        let (a, b, c) = (poly[i], poly[(i + 1) % n], poly[(i + 2) % n]);
        (b[0] - a[0]) * (c[1] - b[1]) - (b[1] - a[1]) * (c[0] - b[0]) > 0.0
    })
}

/// Rule on a convex counter-clockwise polygon.
pub fn rule_polygon(poly: &[Point], degree: usize) -> Result<Vec<(Point, f64)>, QuadError> {
    if !is_convex_ccw(poly) {
        return Err(QuadError::NonConvex);
    }
    if poly.len() == 3 {
        return triangle_points(&[poly[0], poly[1], poly[2]], degree);
    }
    let n = poly.len() as f64;
    let c = [poly.iter().map(|p| p[0]).sum::<f64>() / n, poly.iter().map(|p| p[1]).sum::<f64>() / n];
    let mut out = Vec::new();
    for i in 0..poly.len() {
        out.extend(triangle_points(&[c, poly[i], poly[(i + 1) % poly.len()]], degree)?);
    }
    Ok(out)
}

/// Gauss points on the segment `a -> b`, weights scaled by its length.
pub fn segment_points(a: Point, b: Point, degree: usize) -> Result<Vec<(Point, f64)>, QuadError> {
    let len = ((b[0] - a[0]).powi(2) + (b[1] - a[1]).powi(2)).sqrt();
    Ok(gauss_segment(segment_points_for(degree))?
        .iter()
        .map(|&(t, w)| ([a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1])], w * len))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn integrate(rule: &[(Point, f64)], f: impl Fn(f64, f64) -> f64) -> f64 {
        rule.iter().map(|(p, w)| w * f(p[0], p[1])).sum()
    }

    #[test]
    fn segment_examples() {
        let g2 = gauss_segment(2).unwrap();
        let cube: f64 = g2.iter().map(|(x, w)| w * x.powi(3)).sum();
        assert!((cube - 0.25).abs() < 1e-16);
        for n in 1..=20 {
            let s: f64 = gauss_segment(n).unwrap().iter().map(|p| p.1).sum();
            assert!((s - 1.0).abs() < 1e-14);
        }
        let g5 = gauss_segment(5).unwrap();
        let x9: f64 = g5.iter().map(|(x, w)| w * x.powi(9)).sum();
        assert!((x9 - 0.1).abs() <= 1e-15);
        assert_eq!(gauss_segment(0), Err(QuadError::UnsupportedOrder(0)));
        assert_eq!(gauss_segment(21), Err(QuadError::UnsupportedOrder(21)));
    }

    #[test]
    fn segment_exactness() {
        for n in 1..=20 {
            let g = gauss_segment(n).unwrap();
            for k in 0..2 * n {
                let s: f64 = g.iter().map(|(x, w)| w * x.powi(k as i32)).sum();
                assert!((s - 1.0 / (k as f64 + 1.0)).abs() < 1e-14, "n={n} k={k}");
            }
        }
    }

    #[test]
    fn triangle_examples() {
        let unit = [[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]];
        let r = triangle_points(&unit, 4).unwrap();
        assert!((integrate(&r, |_, _| 1.0) - 0.5).abs() < 1e-15);
        assert!((integrate(&r, |x, _| x) - 1.0 / 6.0).abs() < 1e-15);
        assert!((integrate(&r, |x, y| x * x * y * y) - 1.0 / 180.0).abs() < 1e-15);
    }

    #[test]
    fn polygon_examples() {
        let sq = [[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]];
        let r = rule_polygon(&sq, 4).unwrap();
        assert!((integrate(&r, |_, _| 1.0) - 1.0).abs() < 1e-15);
        assert!((integrate(&r, |x, _| x) - 0.5).abs() < 1e-15);
        assert!((integrate(&r, |x, y| x.powi(3) * y) - 0.125).abs() < 1e-15);
        let dart = [[0.0, 0.0], [1.0, 0.0], [0.2, 0.2], [0.0, 1.0]];
        assert_eq!(rule_polygon(&dart, 2), Err(QuadError::NonConvex));
    }

    #[test]
    fn weights_are_positive() {
        for q in 0..=30 {
            assert!(rule_triangle(q).unwrap().iter().all(|&(_, w)| w > 0.0));
        }
    }

    /// Exact integral of `x^a y^b` over the reference triangle: `a! b! / (a+b+2)!`.
    fn ref_moment(a: u32, b: u32) -> f64 {
        let f = |n: u32| (1..=n).map(f64::from).product::<f64>();
        f(a) * f(b) / f(a + b + 2)
    }

    #[test]
    fn exactness_on_random_affine_images() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for q in 0..=16u32 {
            for _ in 0..3 {
                let o: Point = [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)];
                let mut e1: Point = [rng.random_range(0.2..1.5), rng.random_range(-0.5..0.5)];
                let e2: Point = [rng.random_range(-0.5..0.5), rng.random_range(0.2..1.5)];
                if e1[0] * e2[1] - e1[1] * e2[0] < 0.0 {
                    e1 = [-e1[0], -e1[1]];
                }
                let t = [o, [o[0] + e1[0], o[1] + e1[1]], [o[0] + e2[0], o[1] + e2[1]]];
                let det = (e1[0] * e2[1] - e1[1] * e2[0]).abs();
                let rule = triangle_points(&t, q as usize).unwrap();
                for a in 0..=q {
                    let b = q - a;
                    // pull back x^a y^b in reference coordinates (r, s)
                    let got = integrate(&rule, |x, y| {
                        let (dx, dy) = (x - o[0], y - o[1]);
                        let inv = 1.0 / (e1[0] * e2[1] - e1[1] * e2[0]);
                        let r = (dx * e2[1] - dy * e2[0]) * inv;
                        let s = (e1[0] * dy - e1[1] * dx) * inv;
                        r.powi(a as i32) * s.powi(b as i32)
                    });
                    let expect = det * ref_moment(a, b);
                    assert!((got - expect).abs() <= 1e-12 * expect.abs().max(1e-3), "q={q} a={a}");
                }
            }
        }
    }
}
