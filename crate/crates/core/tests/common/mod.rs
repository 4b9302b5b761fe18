//! Shared fixtures and brute-force oracles for the integration tests.
#![allow(dead_code)]

use nalgebra::{Vector2, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use roomtex::layout::{PlaneInfo, RoomLayout};

pub type V2 = Vector2<f64>;
pub type V3 = Vector3<f64>;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Shoelace area, positive for counter-clockwise polygons.
pub fn shoelace(poly: &[V2]) -> f64 {
    let n = poly.len();
    0.5 * (0..n).map(|i| poly[i].x * poly[(i + 1) % n].y - poly[(i + 1) % n].x * poly[i].y).sum::<f64>()
}

/// Random star-shaped counter-clockwise polygon around the origin: one vertex
/// per equal angular sector, jittered so consecutive vertices stay less than
/// half a turn apart.
pub fn star_polygon(rng: &mut impl Rng, n: usize, r_min: f64, r_max: f64) -> Vec<V2> {
    let sector = std::f64::consts::TAU / n as f64;
    (0..n)
        .map(|i| {
            let a = (i as f64 + rng.random_range(0.3..0.7)) * sector;
            let r = rng.random_range(r_min..r_max);
            V2::new(r * a.cos(), r * a.sin())
        })
        .collect()
}

/// Inward-facing walls along a counter-clockwise polygon in the X-Z plane.
pub fn walls_from_polygon(poly: &[V2], height: f64) -> Vec<PlaneInfo> {
    let n = poly.len();
    (0..n)
        .map(|i| {
            let (a, b) = (poly[i], poly[(i + 1) % n]);
            let d = b - a;
            let len = d.norm();
            let normal = V3::new(-d.y / len, 0.0, d.x / len);
            let mid = 0.5 * (a + b);
            PlaneInfo::wall(i as u32, V3::new(mid.x, height / 2.0, mid.y), normal, len, height)
        })
        .collect()
}

/// Axis-aligned L-shaped room: a `w x d` rectangle with its
/// `(w - cw) x (d - cd)` top-right corner removed.
pub fn l_room(w: f64, d: f64, cw: f64, cd: f64, height: f64) -> RoomLayout {
    let poly = [
        V2::new(0.0, 0.0),
        V2::new(w, 0.0),
        V2::new(w, cd),
        V2::new(cw, cd),
        V2::new(cw, d),
        V2::new(0.0, d),
    ];
    RoomLayout::from_walls(walls_from_polygon(&poly, height), 0.0, height).unwrap()
}

/// Even-odd point in polygon test.
pub fn inside_polygon(p: V2, poly: &[V2]) -> bool {
    let n = poly.len();
    let mut inside = false;
    for i in 0..n {
        let (a, b) = (poly[i], poly[(i + 1) % n]);
        if (a.y > p.y) != (b.y > p.y) {
            let x = a.x + (p.y - a.y) / (b.y - a.y) * (b.x - a.x);
            if p.x < x {
                inside = !inside;
            }
        }
    }
    inside
}

/// Minimum-area enclosing rectangle by brute force: every direction defined
/// by a pair of points is tried (the optimum has a side along a hull edge,
/// and hull edges join input points).
pub fn brute_force_min_rect_area(pts: &[V2]) -> f64 {
    let mut best = f64::INFINITY;
    for i in 0..pts.len() {
        for j in 0..pts.len() {
            let d = pts[j] - pts[i];
            if d.norm() < 1e-12 {
                continue;
            }
            let u = d / d.norm();
            let v = V2::new(-u.y, u.x);
            let (mut u0, mut u1, mut v0, mut v1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
            for p in pts {
                let (a, b) = (p.dot(&u), p.dot(&v));
                u0 = u0.min(a);
                u1 = u1.max(a);
                v0 = v0.min(b);
                v1 = v1.max(b);
            }
            best = best.min((u1 - u0) * (v1 - v0));
        }
    }
    best
}

/// Moller-Trumbore ray/triangle intersection: parameter `t` along `dir`.
pub fn ray_triangle(o: &V3, dir: &V3, tri: &[V3; 3]) -> Option<f64> {
    let e1 = tri[1] - tri[0];
    let e2 = tri[2] - tri[0];
    let p = dir.cross(&e2);
    let det = e1.dot(&p);
    if det.abs() < 1e-14 {
        return None;
    }
    let inv = 1.0 / det;
    let s = o - tri[0];
    let u = s.dot(&p) * inv;
    if !(0.0..=1.0).contains(&u) {
        return None;
    }
    let q = s.cross(&e1);
    let v = dir.dot(&q) * inv;
    if v < 0.0 || u + v > 1.0 {
        return None;
    }
    Some(e2.dot(&q) * inv)
}

/// Neumaier-compensated sum.
pub fn sum_compensated(values: impl IntoIterator<Item = f64>) -> f64 {
    let (mut s, mut c) = (0.0f64, 0.0f64);
    for v in values {
        let t = s + v;
        if s.abs() >= v.abs() {
            c += (s - t) + v;
        } else {
            c += (v - t) + s;
        }
        s = t;
    }
    s + c
}

/// Reference SSIM: BT.601 luma, direct (non-separable) 11x11 Gaussian
/// window with sigma 1.5, compensated sums, valid region only.
pub fn reference_ssim(a: &image::RgbImage, b: &image::RgbImage) -> f64 {
    let (w, h) = (a.width() as usize, a.height() as usize);
    let luma = |img: &image::RgbImage| -> Vec<f64> {
        img.pixels().map(|p| 0.299 * p[0] as f64 + 0.587 * p[1] as f64 + 0.114 * p[2] as f64).collect()
    };
    let (x, y) = (luma(a), luma(b));
    let g1: Vec<f64> = (0..11).map(|i| (-((i as f64 - 5.0).powi(2)) / (2.0 * 1.5 * 1.5)).exp()).collect();
    let norm = sum_compensated(g1.iter().copied());
    let g: Vec<f64> = g1.iter().map(|v| v / norm).collect();
    let c1 = (0.01f64 * 255.0).powi(2);
    let c2 = (0.03f64 * 255.0).powi(2);
    let mut vals = Vec::new();
    for oy in 0..=h - 11 {
        for ox in 0..=w - 11 {
            let weighted = |f: &dyn Fn(usize) -> f64| {
                sum_compensated((0..11).flat_map(|j| (0..11).map(move |i| (i, j))).map(|(i, j)| g[i] * g[j] * f((oy + j) * w + ox + i)))
            };
            let mx = weighted(&|k| x[k]);
            let my = weighted(&|k| y[k]);
            let sxx = weighted(&|k| x[k] * x[k]) - mx * mx;
            let syy = weighted(&|k| y[k] * y[k]) - my * my;
            let sxy = weighted(&|k| x[k] * y[k]) - mx * my;
            vals.push(((2.0 * mx * my + c1) * (2.0 * sxy + c2)) / ((mx * mx + my * my + c1) * (sxx + syy + c2)));
        }
    }
    let n = vals.len() as f64;
    sum_compensated(vals) / n
}

/// Reference PSNR from the exact integer sum of squared differences,
/// capped at 60 dB.
pub fn reference_psnr(a: &image::RgbImage, b: &image::RgbImage) -> f64 {
    let sse: u128 = a
        .as_raw()
        .iter()
        .zip(b.as_raw())
        .map(|(&p, &q)| {
            let d = p as i64 - q as i64;
            (d * d) as u128
        })
        .sum();
    if sse == 0 {
        return 60.0;
    }
    let n = a.as_raw().len() as f64;
    (10.0 * ((255.0f64 * 255.0 * n).log10() - (sse as f64).log10())).min(60.0)
}

/// Reference no-reference blur score: re-blur with a 9-tap box filter
/// (replicated border) and measure the share of neighbor variation lost,
/// taking the worse of the two directions.
pub fn reference_blur(img: &image::RgbImage) -> f64 {
    let (w, h) = (img.width() as i64, img.height() as i64);
    let f: Vec<f64> = img.pixels().map(|p| 0.299 * p[0] as f64 + 0.587 * p[1] as f64 + 0.114 * p[2] as f64).collect();
    let at = |x: i64, y: i64| f[(y.clamp(0, h - 1) * w + x.clamp(0, w - 1)) as usize];
    let mut score = [0.0f64; 2];
    for (k, (dx, dy)) in [(0i64, 1i64), (1, 0)].into_iter().enumerate() {
        let blur = |x: i64, y: i64| (-4..=4).map(|t| at(x + t * dx, y + t * dy)).sum::<f64>() / 9.0;
        let (mut sf, mut sv) = (0.0, 0.0);
        for y in 1..h {
            for x in 1..w {
                let df = (at(x, y) - at(x - dx, y - dy)).abs();
                let db = (blur(x, y) - blur(x - dx, y - dy)).abs();
                sf += df;
                sv += (df - db).max(0.0);
            }
        }
        score[k] = if sf > 0.0 { (sf - sv) / sf } else { 0.0 };
    }
    score[0].max(score[1])
}

/// Dead-leaves image: random opaque discs with radius density proportional
/// to r^-3, painted back to front, a standard model of natural-image
/// statistics (edges at every scale).
pub fn dead_leaves(seed: u64, width: u32, height: u32) -> image::RgbImage {
    let mut r = rng(seed);
    let mut img = image::RgbImage::from_pixel(width, height, image::Rgb([128, 128, 128]));
    let (r_min, r_max) = (2.0f64, 60.0f64);
    for _ in 0..1500 {
        // Inverse-CDF sample of the r^-3 density on [r_min, r_max].
        let u: f64 = r.random();
        let rad = 1.0 / (r_min.powi(-2) - u * (r_min.powi(-2) - r_max.powi(-2))).sqrt();
        let (cx, cy) = (r.random_range(-rad..width as f64 + rad), r.random_range(-rad..height as f64 + rad));
        let color = image::Rgb(r.random::<[u8; 3]>());
        let (x0, x1) = ((cx - rad).max(0.0) as u32, ((cx + rad).ceil().max(0.0) as u32).min(width));
        let (y0, y1) = ((cy - rad).max(0.0) as u32, ((cy + rad).ceil().max(0.0) as u32).min(height));
        for y in y0..y1 {
            for x in x0..x1 {
                let (dx, dy) = (x as f64 + 0.5 - cx, y as f64 + 0.5 - cy);
                if dx * dx + dy * dy <= rad * rad {
                    img.put_pixel(x, y, color);
                }
            }
        }
    }
    img
}
