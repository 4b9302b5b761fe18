//! Image quality metrics and sharpness-based frame subsampling.

use image::RgbImage;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::camera::{pose_difference, Frame};
use crate::error::{Error, Result};
use crate::geom::Mat4;
use crate::imageops::luma;

/// Upper bound reported by [`psnr`].
pub const PSNR_CAP: f64 = 60.0;
pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;
pub const SSIM_K1: f64 = 0.01;
pub const SSIM_K2: f64 = 0.03;
/// Length of the averaging filter used to re-blur in [`blurriness`].
pub const BLUR_TAPS: usize = 9;
pub const BLUR_MIN_SIDE: u32 = 16;

fn check_dims(a: &RgbImage, b: &RgbImage) -> Result<()> {
    if a.dimensions() != b.dimensions() {
        return Err(Error::DimensionMismatch {
            expected: a.dimensions(),
            actual: b.dimensions(),
        });
    }
    Ok(())
}

/// Mean squared error over all RGB samples.
pub fn mse(a: &RgbImage, b: &RgbImage) -> Result<f64> {
    check_dims(a, b)?;
    let n = a.as_raw().len();
    if n == 0 {
        return Err(Error::EmptyInput("image has no pixels"));
    }
    let sum: u64 = a
        .as_raw()
        .iter()
        .zip(b.as_raw())
        .map(|(&x, &y)| {
            let d = x as i64 - y as i64;
            (d * d) as u64
        })
        .sum();
    Ok(sum as f64 / n as f64)
}

/// Peak signal-to-noise ratio in dB over RGB, capped at [`PSNR_CAP`].
pub fn psnr(a: &RgbImage, b: &RgbImage) -> Result<f64> {
    Ok(psnr_from_mse(mse(a, b)?))
}

pub fn psnr_from_mse(mse: f64) -> f64 {
    if mse <= 0.0 {
        return PSNR_CAP;
    }
    (10.0 * (255.0f64 * 255.0 / mse).log10()).min(PSNR_CAP)
}

fn gaussian_window() -> Vec<f64> {
    let r = (SSIM_WINDOW / 2) as f64;
    let g: Vec<f64> = (0..SSIM_WINDOW)
        .map(|i| {
            let d = i as f64 - r;
            (-d * d / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp()
        })
        .collect();
    let s: f64 = g.iter().sum();
    g.into_iter().map(|v| v / s).collect()
}

/// Separable filtering over the fully covered ("valid") region.
fn filter_valid(data: &[f64], w: usize, h: usize, k: &[f64]) -> (Vec<f64>, usize, usize) {
    let n = k.len();
    let (ow, oh) = (w + 1 - n, h + 1 - n);
    let mut rows = vec![0.0; ow * h];
    for y in 0..h {
        for x in 0..ow {
            rows[y * ow + x] = (0..n).map(|i| k[i] * data[y * w + x + i]).sum();
        }
    }
    let mut out = vec![0.0; ow * oh];
    for y in 0..oh {
        for x in 0..ow {
            out[y * ow + x] = (0..n).map(|i| k[i] * rows[(y + i) * ow + x]).sum();
        }
    }
    (out, ow, oh)
}

/// Mean structural similarity of the luma channels (11x11 Gaussian window,
/// sigma 1.5, no padding).
pub fn ssim(a: &RgbImage, b: &RgbImage) -> Result<f64> {
    check_dims(a, b)?;
    let (w, h) = a.dimensions();
    if (w.min(h) as usize) < SSIM_WINDOW {
        return Err(Error::TooSmall { width: w, height: h, min: SSIM_WINDOW as u32 });
    }
    Ok(ssim_luma(&luma(a), &luma(b), w as usize, h as usize))
}

pub(crate) fn ssim_luma(x: &[f64], y: &[f64], w: usize, h: usize) -> f64 {
    let k = gaussian_window();
    let c1 = (SSIM_K1 * 255.0).powi(2);
    let c2 = (SSIM_K2 * 255.0).powi(2);
    let xx: Vec<f64> = x.iter().map(|v| v * v).collect();
    let yy: Vec<f64> = y.iter().map(|v| v * v).collect();
    let xy: Vec<f64> = x.iter().zip(y).map(|(a, b)| a * b).collect();
    let (mx, ow, oh) = filter_valid(x, w, h, &k);
    let (my, _, _) = filter_valid(y, w, h, &k);
    let (sxx, _, _) = filter_valid(&xx, w, h, &k);
    let (syy, _, _) = filter_valid(&yy, w, h, &k);
    let (sxy, _, _) = filter_valid(&xy, w, h, &k);
    let mut total = 0.0;
    for i in 0..ow * oh {
        let (ux, uy) = (mx[i], my[i]);
        let vx = sxx[i] - ux * ux;
        let vy = syy[i] - uy * uy;
        let cxy = sxy[i] - ux * uy;
        total += ((2.0 * ux * uy + c1) * (2.0 * cxy + c2)) / ((ux * ux + uy * uy + c1) * (vx + vy + c2));
    }
    total / (ow * oh) as f64
}

/// No-reference blur score in [0, 1] (higher is blurrier): the share of
/// neighboring-pixel variation that survives a strong re-blur, taking the
/// worse of the horizontal and vertical directions. Constant images score 0.
pub fn blurriness(img: &RgbImage) -> Result<f64> {
    let (w, h) = img.dimensions();
    if w.min(h) < BLUR_MIN_SIDE {
        return Err(Error::TooSmall { width: w, height: h, min: BLUR_MIN_SIDE });
    }
    Ok(blurriness_luma(&luma(img), w as usize, h as usize))
}

fn blurriness_luma(f: &[f64], w: usize, h: usize) -> f64 {
    let r = (BLUR_TAPS / 2) as i64;
    let at = |x: i64, y: i64| f[(y.clamp(0, h as i64 - 1) as usize) * w + x.clamp(0, w as i64 - 1) as usize];
    let n = BLUR_TAPS as f64;
    let mut b_ver = vec![0.0; w * h];
    let mut b_hor = vec![0.0; w * h];
    for y in 0..h as i64 {
        for x in 0..w as i64 {
            let i = y as usize * w + x as usize;
            b_ver[i] = (-r..=r).map(|d| at(x, y + d)).sum::<f64>() / n;
            b_hor[i] = (-r..=r).map(|d| at(x + d, y)).sum::<f64>() / n;
        }
    }
    let (mut sf_v, mut sv_v, mut sf_h, mut sv_h) = (0.0, 0.0, 0.0, 0.0);
    for y in 1..h {
        for x in 1..w {
            let i = y * w + x;
            let df_v = (f[i] - f[i - w]).abs();
            let df_h = (f[i] - f[i - 1]).abs();
            let db_v = (b_ver[i] - b_ver[i - w]).abs();
            let db_h = (b_hor[i] - b_hor[i - 1]).abs();
            sf_v += df_v;
            sf_h += df_h;
            sv_v += (df_v - db_v).max(0.0);
            sv_h += (df_h - db_h).max(0.0);
        }
    }
    let score = |sf: f64, sv: f64| if sf > 0.0 { (sf - sv) / sf } else { 0.0 };
    score(sf_v, sv_v).max(score(sf_h, sv_h))
}

/// Frame subsampling thresholds.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", default, deny_unknown_fields)]
pub struct SamplingParams {
    pub group_size: usize,
    /// A discarded frame is kept when its pose differs from its group's
    /// keeper by more than either threshold.
    pub pose_translation: f64,
    pub pose_rotation_deg: f64,
}

impl Default for SamplingParams {
    fn default() -> Self {
        SamplingParams {
            group_size: 4,
            pose_translation: 0.10,
            pose_rotation_deg: 10.0,
        }
    }
}

/// Indices kept from consecutive groups given per-frame blur scores: the
/// sharpest of each group, plus group members whose pose differs enough
/// from it. The last group may be shorter.
pub fn sample_by_blur(blur: &[f64], poses: &[Mat4], params: &SamplingParams) -> Vec<usize> {
    let g = params.group_size.max(1);
    let mut keep = Vec::new();
    for start in (0..blur.len()).step_by(g) {
        let end = (start + g).min(blur.len());
        let best = (start..end)
            .min_by(|&a, &b| blur[a].total_cmp(&blur[b]).then(a.cmp(&b)))
            .expect("non-empty group");
        for i in start..end {
            if i == best {
                keep.push(i);
                continue;
            }
            let (dt, dr) = pose_difference(&poses[best], &poses[i]);
            if dt > params.pose_translation || dr > params.pose_rotation_deg {
                keep.push(i);
            }
        }
    }
    keep
}

/// Blurriness of every frame (frames too small to score count as sharp).
pub fn frame_blurriness(frames: &[Frame]) -> Vec<f64> {
    frames.par_iter().map(|f| blurriness(&f.color).unwrap_or(0.0)).collect()
}

/// Sharpness-based subsampling of time-ordered frames; returns indices.
pub fn sample_frames(frames: &[Frame], params: &SamplingParams) -> Vec<usize> {
    let blur = frame_blurriness(frames);
    let poses: Vec<Mat4> = frames.iter().map(|f| f.pose).collect();
    sample_by_blur(&blur, &poses, params)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::camera::look_at;
    use crate::geom::Vec3;
    use crate::imageops::box_blur;
    use image::Rgb;

    fn checker(n: u32, cell: u32) -> RgbImage {
        RgbImage::from_fn(n, n, |x, y| if (x / cell + y / cell) % 2 == 0 { Rgb([255; 3]) } else { Rgb([0; 3]) })
    }

    #[test]
    fn psnr_limits() {
        let a = RgbImage::from_pixel(8, 8, Rgb([0; 3]));
        let b = RgbImage::from_pixel(8, 8, Rgb([255; 3]));
        assert_eq!(psnr(&a, &a).unwrap(), PSNR_CAP);
        assert!(psnr(&a, &b).unwrap().abs() < 1e-12);
        assert!(matches!(psnr(&a, &RgbImage::new(4, 4)), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn ssim_identity_and_size() {
        let a = checker(32, 4);
        assert!((ssim(&a, &a).unwrap() - 1.0).abs() < 1e-12);
        assert!(matches!(ssim(&checker(10, 2), &checker(10, 2)), Err(Error::TooSmall { .. })));
    }

    #[test]
    fn blur_increases_after_box_filter() {
        let a = checker(64, 4);
        let b = box_blur(&a, 5);
        assert!(blurriness(&b).unwrap() > blurriness(&a).unwrap());
        assert_eq!(blurriness(&RgbImage::from_pixel(20, 20, Rgb([7; 3]))).unwrap(), 0.0);
    }

    #[test]
    fn sharpest_of_each_group() {
        let blur = [0.5, 0.2, 0.4, 0.3, 0.1, 0.6, 0.2, 0.4];
        let pose = look_at(Vec3::new(0.0, 1.0, 0.0), Vec3::new(0.0, 1.0, -1.0), Vec3::y());
        let poses = vec![pose; 8];
        let p = SamplingParams::default();
        assert_eq!(sample_by_blur(&blur, &poses, &p), vec![1, 4]);
        assert_eq!(sample_by_blur(&blur[..3], &poses[..3], &p), vec![1]);
        let mut turned = poses.clone();
        turned[2] = look_at(Vec3::new(0.0, 1.0, 0.0), Vec3::new(1.0, 1.0, -1.0), Vec3::y());
        assert_eq!(sample_by_blur(&blur, &turned, &p), vec![1, 2, 4]);
    }
}
