//! Evaluation protocols: rendered model against ground-truth frames (local)
//! and plane images against rectified wall photos (global).

use std::path::Path;

use image::{Rgb, RgbImage, RgbaImage};
use nalgebra::{DMatrix, Matrix3, Vector3};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::camera::{Frame, DEFAULT_FAR, DEFAULT_NEAR};
use crate::error::{Error, Result};
use crate::geom::Vec2;
use crate::imageops::{sample_rgb_px, to_u8};
use crate::metrics::{blurriness, psnr, ssim};
use crate::plane2image::PlaneImage;
use crate::raster::{render, RenderMesh};

/// Metrics of one comparison; NaN marks a skipped comparison.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalItem {
    pub name: String,
    pub psnr: f64,
    pub ssim: f64,
    /// Blurriness of the evaluated (non ground-truth) image.
    pub blur: f64,
}

impl EvalItem {
    fn skipped(name: String) -> Self {
        EvalItem { name, psnr: f64::NAN, ssim: f64::NAN, blur: f64::NAN }
    }
}

/// Mean and sample standard deviation over the finite values.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub mean: f64,
    pub std: f64,
    pub count: usize,
}

impl Aggregate {
    pub fn of(values: impl IntoIterator<Item = f64>) -> Self {
        let v: Vec<f64> = values.into_iter().filter(|x| x.is_finite()).collect();
        let n = v.len();
        if n == 0 {
            return Aggregate { mean: f64::NAN, std: f64::NAN, count: 0 };
        }
        let mean = v.iter().sum::<f64>() / n as f64;
        let std = if n > 1 {
            (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
        } else {
            0.0
        };
        Aggregate { mean, std, count: n }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub items: Vec<EvalItem>,
    pub psnr: Aggregate,
    pub ssim: Aggregate,
    pub blur: Aggregate,
}

impl EvalReport {
    pub fn from_items(items: Vec<EvalItem>) -> Self {
        EvalReport {
            psnr: Aggregate::of(items.iter().map(|i| i.psnr)),
            ssim: Aggregate::of(items.iter().map(|i| i.ssim)),
            blur: Aggregate::of(items.iter().map(|i| i.blur)),
            items,
        }
    }

    /// JSON text; non-finite values are written as `null`.
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// One row per item followed by `mean` and `std` rows.
    pub fn to_csv(&self) -> String {
        let f = |v: f64| if v.is_finite() { format!("{v:.6}") } else { String::new() };
        let mut s = String::from("name,psnr,ssim,blur\n");
        for i in &self.items {
            s.push_str(&format!("{},{},{},{}\n", i.name, f(i.psnr), f(i.ssim), f(i.blur)));
        }
        s.push_str(&format!("mean,{},{},{}\n", f(self.psnr.mean), f(self.ssim.mean), f(self.blur.mean)));
        s.push_str(&format!("std,{},{},{}\n", f(self.psnr.std), f(self.ssim.std), f(self.blur.std)));
        s
    }

    /// Writes `<stem>.json` and `<stem>.csv` into `dir`.
    pub fn save(&self, dir: &Path, stem: &str) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let json = dir.join(format!("{stem}.json"));
        std::fs::write(&json, self.to_json()?).map_err(|e| Error::io(&json, e))?;
        let csv = dir.join(format!("{stem}.csv"));
        std::fs::write(&csv, self.to_csv()).map_err(|e| Error::io(&csv, e))
    }
}

/// Metrics of `test` against `gt`, SSIM clamped to [0, 1].
pub fn compare(name: String, test: &RgbImage, gt: &RgbImage) -> Result<EvalItem> {
    Ok(EvalItem {
        name,
        psnr: psnr(test, gt)?,
        ssim: ssim(test, gt)?.clamp(0.0, 1.0),
        blur: blurriness(test).unwrap_or(f64::NAN),
    })
}

/// Ground-truth frame with its evaluation mask (row-major, set = compared).
#[derive(Clone, Debug)]
pub struct GtFrame {
    pub frame: Frame,
    pub mask: Vec<bool>,
}

fn apply_mask(img: &RgbImage, mask: &[bool]) -> RgbImage {
    let w = img.width();
    RgbImage::from_fn(img.width(), img.height(), |x, y| {
        if mask[(y * w + x) as usize] {
            *img.get_pixel(x, y)
        } else {
            Rgb([0; 3])
        }
    })
}

/// Renders the textured model at every ground-truth pose and compares the
/// masked images. Frames with an empty mask are reported as skipped.
pub fn local_eval(mesh: &RenderMesh, pages: &[RgbaImage], gt: &[GtFrame]) -> Result<EvalReport> {
    let items: Result<Vec<EvalItem>> = gt
        .par_iter()
        .map(|g| {
            let name = format!("frame_{:05}", g.frame.index);
            let (w, h) = g.frame.color.dimensions();
            if g.mask.len() != (w * h) as usize {
                return Err(Error::DimensionMismatch {
                    expected: (w, h),
                    actual: (g.mask.len() as u32, 1),
                });
            }
            if !g.mask.iter().any(|&m| m) {
                return Ok(EvalItem::skipped(name));
            }
            let cam = g.frame.camera();
            let fb = render(mesh, pages, &cam.view_projection(DEFAULT_NEAR, DEFAULT_FAR), w, h);
            compare(name, &apply_mask(&fb.color, &g.mask), &apply_mask(&g.frame.color, &g.mask))
        })
        .collect();
    Ok(EvalReport::from_items(items?))
}

/// Photo of one wall with its four corners in pixel coordinates, ordered as
/// the plane image's top-left, top-right, bottom-right, bottom-left.
#[derive(Clone, Debug)]
pub struct GtWallPhoto {
    pub plane_id: u32,
    pub image: RgbImage,
    pub corners: [Vec2; 4],
}

/// True if any three of the points are collinear (relative tolerance).
fn has_collinear_triple(p: &[Vec2; 4]) -> bool {
    let scale = p.iter().map(|q| q.norm()).fold(1.0, f64::max);
    let tol = 1e-9 * scale * scale;
    for (a, b, c) in [(0, 1, 2), (0, 1, 3), (0, 2, 3), (1, 2, 3)] {
        if (p[b] - p[a]).perp(&(p[c] - p[a])).abs() <= tol {
            return true;
        }
    }
    false
}

/// Homography taking `src[i]` to `dst[i]` from four correspondences,
/// normalized so that `h[(2, 2)]` is 1 when possible.
pub fn homography(src: &[Vec2; 4], dst: &[Vec2; 4]) -> Result<Matrix3<f64>> {
    if has_collinear_triple(src) || has_collinear_triple(dst) {
        return Err(Error::DegenerateCorners);
    }
    let mut a = DMatrix::<f64>::zeros(9, 9);
    for i in 0..4 {
        let (x, y) = (src[i].x, src[i].y);
        let (u, v) = (dst[i].x, dst[i].y);
        let r = 2 * i;
        a.row_mut(r).copy_from_slice(&[-x, -y, -1.0, 0.0, 0.0, 0.0, u * x, u * y, u]);
        a.row_mut(r + 1).copy_from_slice(&[0.0, 0.0, 0.0, -x, -y, -1.0, v * x, v * y, v]);
    }
    let svd = a.svd(false, true);
    let vt = svd.v_t.ok_or(Error::DegenerateCorners)?;
    let (k, _) = svd
        .singular_values
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .expect("nine singular values");
    let h = vt.row(k);
    let mut m = Matrix3::new(h[0], h[1], h[2], h[3], h[4], h[5], h[6], h[7], h[8]);
    if m[(2, 2)].abs() > 1e-12 {
        m /= m[(2, 2)];
    }
    Ok(m)
}

fn apply_h(h: &Matrix3<f64>, p: Vec2) -> Vector3<f64> {
    h * Vector3::new(p.x, p.y, 1.0)
}

/// Warps the photo into a `width x height` plane image frame: plane pixel
/// centers are mapped through the homography and sampled bilinearly.
pub fn rectify(photo: &GtWallPhoto, width: u32, height: u32) -> Result<RgbImage> {
    let (w, h) = (width as f64, height as f64);
    let src = [Vec2::new(0.0, 0.0), Vec2::new(w, 0.0), Vec2::new(w, h), Vec2::new(0.0, h)];
    let mut hm = homography(&src, &photo.corners)?;
    let center = apply_h(&hm, Vec2::new(w / 2.0, h / 2.0));
    if center.z < 0.0 {
        hm = -hm;
    }
    if src.iter().any(|&c| apply_h(&hm, c).z <= 0.0) || hm.determinant() <= 0.0 {
        return Err(Error::FlippedCorners);
    }
    Ok(RgbImage::from_fn(width, height, |x, y| {
        let q = apply_h(&hm, Vec2::new(x as f64 + 0.5, y as f64 + 0.5));
        let s = sample_rgb_px(&photo.image, q.x / q.z, q.y / q.z);
        Rgb([to_u8(s[0]), to_u8(s[1]), to_u8(s[2])])
    }))
}

/// Compares plane images with rectified wall photos of the same planes.
pub fn global_eval(planes: &[PlaneImage], photos: &[GtWallPhoto]) -> Result<EvalReport> {
    let items: Result<Vec<EvalItem>> = photos
        .par_iter()
        .map(|ph| {
            let name = format!("plane_{}", ph.plane_id);
            let Some(plane) = planes.iter().find(|p| p.plane_id == ph.plane_id) else {
                return Ok(EvalItem::skipped(name));
            };
            let gt = rectify(ph, plane.width(), plane.height())?;
            compare(name, &plane.pixels, &gt)
        })
        .collect();
    Ok(EvalReport::from_items(items?))
}

/// Plane-to-plane comparison against ground-truth textures that are already
/// rectified (corners at the image corners).
pub fn plane_eval(planes: &[PlaneImage], gt: &[(u32, RgbImage)]) -> Result<EvalReport> {
    let photos: Vec<GtWallPhoto> = gt
        .iter()
        .map(|(id, img)| {
            let (w, h) = (img.width() as f64, img.height() as f64);
            GtWallPhoto {
                plane_id: *id,
                image: img.clone(),
                corners: [Vec2::new(0.0, 0.0), Vec2::new(w, 0.0), Vec2::new(w, h), Vec2::new(0.0, h)],
            }
        })
        .collect();
    global_eval(planes, &photos)
}

/// Runs an external metric command as `<program> [args..] <a> <b>` and parses
/// the first number printed on stdout.
pub fn external_metric(command: &[String], a: &Path, b: &Path) -> Result<f64> {
    let (program, args) = command
        .split_first()
        .ok_or_else(|| Error::InvalidParameter("empty metric command".into()))?;
    let out = std::process::Command::new(program)
        .args(args)
        .arg(a)
        .arg(b)
        .output()
        .map_err(|e| Error::io(Path::new(program), e))?;
    if !out.status.success() {
        return Err(Error::InvalidParameter(format!("metric command exited with {}", out.status)));
    }
    let text = String::from_utf8_lossy(&out.stdout);
    text.split_whitespace()
        .find_map(|t| t.parse::<f64>().ok())
        .ok_or_else(|| Error::InvalidParameter(format!("metric command printed no number: {text:?}")))
}
