//! Pixel-level helpers shared by rendering, texturing and metrics.

use image::{GrayImage, Luma, Rgb, RgbImage, Rgba, RgbaImage};

/// Bilinear RGBA lookup at normalized coordinates (`u` right, `v` down),
/// texel centers at half-integers, clamped to the edge.
pub fn sample_rgba(img: &RgbaImage, u: f64, v: f64) -> [f64; 4] {
    let (w, h) = img.dimensions();
    let x = u * w as f64 - 0.5;
    let y = v * h as f64 - 0.5;
    bilinear(w, h, x, y, |i, j| {
        let p = img.get_pixel(i, j).0;
        [p[0] as f64, p[1] as f64, p[2] as f64, p[3] as f64]
    })
}

/// Bilinear RGB lookup at pixel coordinates (pixel centers at half-integers).
pub fn sample_rgb_px(img: &RgbImage, x: f64, y: f64) -> [f64; 3] {
    let (w, h) = img.dimensions();
    let s = bilinear(w, h, x - 0.5, y - 0.5, |i, j| {
        let p = img.get_pixel(i, j).0;
        [p[0] as f64, p[1] as f64, p[2] as f64, 0.0]
    });
    [s[0], s[1], s[2]]
}

fn bilinear(w: u32, h: u32, x: f64, y: f64, fetch: impl Fn(u32, u32) -> [f64; 4]) -> [f64; 4] {
    let x = x.clamp(0.0, (w - 1) as f64);
    let y = y.clamp(0.0, (h - 1) as f64);
    let (x0, y0) = (x.floor(), y.floor());
    let (fx, fy) = (x - x0, y - y0);
    let (x0, y0) = (x0 as u32, y0 as u32);
    let (x1, y1) = ((x0 + 1).min(w - 1), (y0 + 1).min(h - 1));
    let (a, b, c, d) = (fetch(x0, y0), fetch(x1, y0), fetch(x0, y1), fetch(x1, y1));
    let mut out = [0.0; 4];
    for k in 0..4 {
        let top = a[k] + (b[k] - a[k]) * fx;
        let bot = c[k] + (d[k] - c[k]) * fx;
        out[k] = top + (bot - top) * fy;
    }
    out
}

#[inline]
pub fn to_u8(x: f64) -> u8 {
    x.round().clamp(0.0, 255.0) as u8
}

/// ITU-R BT.601 luma as floating point.
pub fn luma(img: &RgbImage) -> Vec<f64> {
    img.pixels()
        .map(|p| 0.299 * p[0] as f64 + 0.587 * p[1] as f64 + 0.114 * p[2] as f64)
        .collect()
}

/// Sobel gradient magnitude of a row-major scalar image (borders clamped).
pub fn sobel_magnitude(data: &[f64], w: usize, h: usize) -> Vec<f64> {
    let at = |x: isize, y: isize| {
        let x = x.clamp(0, w as isize - 1) as usize;
        let y = y.clamp(0, h as isize - 1) as usize;
        data[y * w + x]
    };
    let mut out = vec![0.0; w * h];
    for y in 0..h as isize {
        for x in 0..w as isize {
            let gx = (at(x + 1, y - 1) + 2.0 * at(x + 1, y) + at(x + 1, y + 1))
                - (at(x - 1, y - 1) + 2.0 * at(x - 1, y) + at(x - 1, y + 1));
            let gy = (at(x - 1, y + 1) + 2.0 * at(x, y + 1) + at(x + 1, y + 1))
                - (at(x - 1, y - 1) + 2.0 * at(x, y - 1) + at(x + 1, y - 1));
            out[y as usize * w + x as usize] = (gx * gx + gy * gy).sqrt();
        }
    }
    out
}

/// Gaussian blur with the given sigma in pixels; zero sigma is a copy.
pub fn gaussian_blur(img: &RgbImage, sigma: f64) -> RgbImage {
    if sigma <= 0.0 {
        return img.clone();
    }
    let r = (3.0 * sigma).ceil() as isize;
    let mut k: Vec<f64> = (-r..=r).map(|i| (-(i * i) as f64 / (2.0 * sigma * sigma)).exp()).collect();
    let s: f64 = k.iter().sum();
    k.iter_mut().for_each(|x| *x /= s);
    let (w, h) = (img.width() as isize, img.height() as isize);
    let src: Vec<[f64; 3]> = img.pixels().map(|p| [p[0] as f64, p[1] as f64, p[2] as f64]).collect();
    let mut tmp = vec![[0.0; 3]; src.len()];
    for y in 0..h {
        for x in 0..w {
            let mut acc = [0.0; 3];
            for (i, kv) in k.iter().enumerate() {
                let xx = (x + i as isize - r).clamp(0, w - 1);
                let p = src[(y * w + xx) as usize];
                for c in 0..3 {
                    acc[c] += kv * p[c];
                }
            }
            tmp[(y * w + x) as usize] = acc;
        }
    }
    let mut out = RgbImage::new(w as u32, h as u32);
    for y in 0..h {
        for x in 0..w {
            let mut acc = [0.0; 3];
            for (i, kv) in k.iter().enumerate() {
                let yy = (y + i as isize - r).clamp(0, h - 1);
                let p = tmp[(yy * w + x) as usize];
                for c in 0..3 {
                    acc[c] += kv * p[c];
                }
            }
            out.put_pixel(x as u32, y as u32, Rgb([to_u8(acc[0]), to_u8(acc[1]), to_u8(acc[2])]));
        }
    }
    out
}

/// Square-window box blur (odd `size`), clamped borders.
pub fn box_blur(img: &RgbImage, size: u32) -> RgbImage {
    let r = (size / 2) as i64;
    let (w, h) = (img.width() as i64, img.height() as i64);
    let n = ((2 * r + 1) * (2 * r + 1)) as f64;
    RgbImage::from_fn(w as u32, h as u32, |x, y| {
        let mut acc = [0.0; 3];
        for dy in -r..=r {
            for dx in -r..=r {
                let xx = (x as i64 + dx).clamp(0, w - 1) as u32;
                let yy = (y as i64 + dy).clamp(0, h - 1) as u32;
                let p = img.get_pixel(xx, yy);
                for c in 0..3 {
                    acc[c] += p[c] as f64;
                }
            }
        }
        Rgb([to_u8(acc[0] / n), to_u8(acc[1] / n), to_u8(acc[2] / n)])
    })
}

/// Bilinear resampling to `w x h` with pixel-center alignment.
pub fn resize_bilinear(img: &RgbImage, w: u32, h: u32) -> RgbImage {
    if img.dimensions() == (w, h) {
        return img.clone();
    }
    let sx = img.width() as f64 / w as f64;
    let sy = img.height() as f64 / h as f64;
    RgbImage::from_fn(w, h, |x, y| {
        let s = sample_rgb_px(img, (x as f64 + 0.5) * sx, (y as f64 + 0.5) * sy);
        Rgb([to_u8(s[0]), to_u8(s[1]), to_u8(s[2])])
    })
}

/// Binary dilation with a `(2r+1)` square structuring element.
pub fn dilate(mask: &[bool], w: usize, h: usize, r: usize) -> Vec<bool> {
    // Separable: rows then columns.
    let mut tmp = vec![false; w * h];
    for y in 0..h {
        for x in 0..w {
            let lo = x.saturating_sub(r);
            let hi = (x + r).min(w - 1);
            tmp[y * w + x] = (lo..=hi).any(|xx| mask[y * w + xx]);
        }
    }
    let mut out = vec![false; w * h];
    for y in 0..h {
        for x in 0..w {
            let lo = y.saturating_sub(r);
            let hi = (y + r).min(h - 1);
            out[y * w + x] = (lo..=hi).any(|yy| tmp[yy * w + x]);
        }
    }
    out
}

pub fn mask_to_image(mask: &[bool], w: u32, h: u32) -> GrayImage {
    GrayImage::from_fn(w, h, |x, y| Luma([if mask[(y * w + x) as usize] { 255 } else { 0 }]))
}

pub fn image_to_mask(img: &GrayImage) -> Vec<bool> {
    img.pixels().map(|p| p[0] >= 128).collect()
}

pub fn rgb_to_rgba(img: &RgbImage, mask: Option<&[bool]>) -> RgbaImage {
    let w = img.width();
    RgbaImage::from_fn(img.width(), img.height(), |x, y| {
        let p = img.get_pixel(x, y);
        let a = match mask {
            Some(m) if m[(y * w + x) as usize] => 0,
            _ => 255,
        };
        Rgba([p[0], p[1], p[2], a])
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bilinear_hits_texel_centers() {
        let img = RgbaImage::from_fn(4, 2, |x, y| Rgba([(x * 10 + y) as u8, 0, 0, 255]));
        let s = sample_rgba(&img, 2.5 / 4.0, 1.5 / 2.0);
        assert_eq!(s[0], 21.0);
        let mid = sample_rgba(&img, 2.0 / 4.0, 0.25);
        assert!((mid[0] - 15.0).abs() < 1e-12);
    }

    #[test]
    fn dilation_grows_by_radius() {
        let (w, h) = (9, 9);
        let mut m = vec![false; w * h];
        m[4 * w + 4] = true;
        let d = dilate(&m, w, h, 2);
        assert_eq!(d.iter().filter(|&&b| b).count(), 25);
    }

    #[test]
    fn resize_passthrough_and_solid() {
        let img = RgbImage::from_pixel(8, 6, Rgb([10, 20, 30]));
        assert_eq!(resize_bilinear(&img, 8, 6), img);
        let r = resize_bilinear(&img, 3, 5);
        assert!(r.pixels().all(|p| p.0 == [10, 20, 30]));
    }
}
