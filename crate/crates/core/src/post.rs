//! Editing of rectified plane images: exemplar tiling (SampleMode), whole
//! image substitution (ImageMode) and the file exchange with external
//! inpainting tools.

use std::path::{Path, PathBuf};

use image::{Rgb, RgbImage};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::Vec2;
use crate::imageops::{dilate, image_to_mask, resize_bilinear};
use crate::plane2image::PlaneImage;

/// Pixels added around the untextured region of an exported mask.
pub const INPAINT_DILATION: usize = 2;
/// Largest per-channel change tolerated outside the mask on import.
pub const IMPORT_TOLERANCE: i32 = 1;

/// Exemplar and lattice parameters for SampleMode. Lengths are in meters,
/// the angle in degrees.
#[derive(Clone, Debug)]
pub struct SampleSpec {
    pub sample: RgbImage,
    pub sample_width: f64,
    pub sample_height: f64,
    /// Gap between consecutive tiles.
    pub sample_offset: f64,
    /// Lattice rotation about the plane center, counter-clockwise on the
    /// image as viewed.
    pub sample_angle: f64,
    /// Lattice translation, in meters along the rotated tile axes.
    pub phase: Vec2,
}

/// Scalar part of a [`SampleSpec`] as stored in configuration files.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct SampleParams {
    pub sample_width: f64,
    pub sample_height: f64,
    #[serde(default)]
    pub sample_offset: f64,
    #[serde(default)]
    pub sample_angle: f64,
}

impl SampleSpec {
    pub fn new(sample: RgbImage, params: &SampleParams) -> Self {
        SampleSpec {
            sample,
            sample_width: params.sample_width,
            sample_height: params.sample_height,
            sample_offset: params.sample_offset,
            sample_angle: params.sample_angle,
            phase: Vec2::zeros(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let finite = [self.sample_width, self.sample_height, self.sample_offset, self.sample_angle, self.phase.x, self.phase.y]
            .iter()
            .all(|v| v.is_finite());
        if !finite || self.sample_width <= 0.0 || self.sample_height <= 0.0 || self.sample_offset < 0.0 {
            return Err(Error::InvalidParameter(format!(
                "sample size must be positive and offset non-negative (got {} x {}, offset {})",
                self.sample_width, self.sample_height, self.sample_offset
            )));
        }
        if self.sample.width() == 0 || self.sample.height() == 0 {
            return Err(Error::EmptyInput("sample image is empty"));
        }
        Ok(())
    }

    /// Tile pitch in meters.
    pub fn pitch(&self) -> Vec2 {
        Vec2::new(self.sample_width + self.sample_offset, self.sample_height + self.sample_offset)
    }
}

/// Mean color of an image, rounded per channel.
pub fn mean_color(img: &RgbImage) -> Rgb<u8> {
    let mut acc = [0u64; 3];
    for p in img.pixels() {
        for c in 0..3 {
            acc[c] += p[c] as u64;
        }
    }
    let n = (img.width() as u64 * img.height() as u64).max(1);
    Rgb(acc.map(|a| ((a as f64 / n as f64).round()) as u8))
}

/// Cosine and sine with values within 1e-12 of 0 or +-1 snapped, so right
/// angles rotate pixel lattices exactly.
fn snapped_cos_sin(deg: f64) -> (f64, f64) {
    let snap = |v: f64| {
        for t in [-1.0, 0.0, 1.0] {
            if (v - t).abs() < 1e-12 {
                return t;
            }
        }
        v
    };
    let r = deg.to_radians();
    (snap(r.cos()), snap(r.sin()))
}

/// Pixel lengths within 1e-9 of an integer are snapped to it, so lattices
/// with integer-pixel pitch are evaluated in exact arithmetic.
fn snap_px(v: Vec2) -> Vec2 {
    v.map(|c| if (c - c.round()).abs() < 1e-9 { c.round() } else { c })
}

/// Maps an image point (pixels, `y` down) into lattice coordinates
/// (pixels along the rotated tile axes, origin at the unrotated top-left).
struct Lattice {
    center: Vec2,
    cos: f64,
    sin: f64,
    phase: Vec2,
}

impl Lattice {
    fn new(width: u32, height: u32, spec: &SampleSpec, px_per_m: f64) -> Self {
        let (cos, sin) = snapped_cos_sin(spec.sample_angle);
        Lattice {
            center: Vec2::new(width as f64 / 2.0, height as f64 / 2.0),
            cos,
            sin,
            phase: snap_px(spec.phase * px_per_m),
        }
    }

    fn to_lattice(&self, p: Vec2) -> Vec2 {
        // Counter-clockwise as viewed is clockwise in y-down coordinates, so
        // undoing it rotates by +angle in this frame.
        let d = p - self.center;
        let r = Vec2::new(self.cos * d.x - self.sin * d.y, self.sin * d.x + self.cos * d.y);
        r + self.center + self.phase
    }

    fn to_image(&self, q: Vec2) -> Vec2 {
        let d = q - self.phase - self.center;
        Vec2::new(self.cos * d.x + self.sin * d.y, -self.sin * d.x + self.cos * d.y) + self.center
    }
}

/// Replaces the plane image by a rigid lattice of the exemplar. Gaps between
/// tiles take the exemplar's mean color; tile texels are sampled nearest.
pub fn sample_mode(target: &PlaneImage, spec: &SampleSpec) -> Result<PlaneImage> {
    spec.validate()?;
    let px_per_m = 1.0 / target.meters_per_pixel;
    let (w, h) = (target.width(), target.height());
    let lat = Lattice::new(w, h, spec, px_per_m);
    let pitch = snap_px(spec.pitch() * px_per_m);
    let tile = snap_px(Vec2::new(spec.sample_width, spec.sample_height) * px_per_m);
    let (sw, sh) = (spec.sample.width(), spec.sample.height());
    let gutter = mean_color(&spec.sample);
    let pixels = RgbImage::from_fn(w, h, |x, y| {
        let q = lat.to_lattice(Vec2::new(x as f64 + 0.5, y as f64 + 0.5));
        let f = Vec2::new(q.x - (q.x / pitch.x).floor() * pitch.x, q.y - (q.y / pitch.y).floor() * pitch.y);
        if f.x >= tile.x || f.y >= tile.y {
            return gutter;
        }
        let sx = ((f.x / tile.x * sw as f64) as u32).min(sw - 1);
        let sy = ((f.y / tile.y * sh as f64) as u32).min(sh - 1);
        *spec.sample.get_pixel(sx, sy)
    });
    Ok(PlaneImage {
        plane_id: target.plane_id,
        pixels,
        meters_per_pixel: target.meters_per_pixel,
        untextured: vec![false; (w * h) as usize],
    })
}

/// Image-space centers (pixels) of the tiles of `spec` whose centers fall
/// inside a `width x height` image.
pub fn tile_centers(width: u32, height: u32, meters_per_pixel: f64, spec: &SampleSpec) -> Vec<Vec2> {
    let px_per_m = 1.0 / meters_per_pixel;
    let lat = Lattice::new(width, height, spec, px_per_m);
    let pitch = snap_px(spec.pitch() * px_per_m);
    let half = snap_px(Vec2::new(spec.sample_width, spec.sample_height) * px_per_m) * 0.5;
    // Lattice-space bounds of the image.
    let corners = [(0.0, 0.0), (width as f64, 0.0), (0.0, height as f64), (width as f64, height as f64)]
        .map(|(x, y)| lat.to_lattice(Vec2::new(x, y)));
    let lo = corners.iter().fold(Vec2::repeat(f64::INFINITY), |a, c| a.inf(c));
    let hi = corners.iter().fold(Vec2::repeat(f64::NEG_INFINITY), |a, c| a.sup(c));
    let mut out = Vec::new();
    let (i0, i1) = ((lo.x / pitch.x).floor() as i64 - 1, (hi.x / pitch.x).ceil() as i64);
    let (j0, j1) = ((lo.y / pitch.y).floor() as i64 - 1, (hi.y / pitch.y).ceil() as i64);
    for j in j0..=j1 {
        for i in i0..=i1 {
            let c = lat.to_image(Vec2::new(i as f64 * pitch.x, j as f64 * pitch.y) + half);
            if c.x >= 0.0 && c.y >= 0.0 && c.x < width as f64 && c.y < height as f64 {
                out.push(c);
            }
        }
    }
    out
}

/// Substitutes the plane image, stretching the replacement to the plane's
/// pixel dimensions.
pub fn image_mode(target: &PlaneImage, replacement: &RgbImage) -> Result<PlaneImage> {
    if replacement.width() == 0 || replacement.height() == 0 {
        return Err(Error::EmptyInput("replacement image is empty"));
    }
    let (w, h) = (target.width(), target.height());
    Ok(PlaneImage {
        plane_id: target.plane_id,
        pixels: resize_bilinear(replacement, w, h),
        meters_per_pixel: target.meters_per_pixel,
        untextured: vec![false; (w * h) as usize],
    })
}

/// Region handed to the inpainting tool: the untextured mask grown by
/// [`INPAINT_DILATION`] pixels.
pub fn inpaint_mask(plane: &PlaneImage) -> Vec<bool> {
    dilate(&plane.untextured, plane.width() as usize, plane.height() as usize, INPAINT_DILATION)
}

/// Outcome of [`export_inpaint_job`].
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum InpaintExport {
    /// The plane is fully textured; nothing was written.
    NoOp,
    Written { image: PathBuf, mask: PathBuf },
}

pub fn job_dir(jobs_dir: &Path, plane_id: u32) -> PathBuf {
    jobs_dir.join(plane_id.to_string())
}

/// Writes `<jobs_dir>/<plane_id>/image.png` and `mask.png` (255 marks the
/// region to fill).
pub fn export_inpaint_job(plane: &PlaneImage, jobs_dir: &Path) -> Result<InpaintExport> {
    if plane.untextured_count() == 0 {
        return Ok(InpaintExport::NoOp);
    }
    let dir = job_dir(jobs_dir, plane.plane_id);
    std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    let (image, mask) = (dir.join("image.png"), dir.join("mask.png"));
    plane.pixels.save(&image)?;
    crate::imageops::mask_to_image(&inpaint_mask(plane), plane.width(), plane.height()).save(&mask)?;
    Ok(InpaintExport::Written { image, mask })
}

/// Accepts an inpainted image for `plane`. Pixels outside the exported mask
/// must match the plane within [`IMPORT_TOLERANCE`] and keep their original
/// values; pixels inside are taken from `inpainted`.
pub fn import_inpaint_result(plane: &PlaneImage, inpainted: &RgbImage) -> Result<PlaneImage> {
    import_with_mask(plane, inpainted, &inpaint_mask(plane))
}

fn import_with_mask(plane: &PlaneImage, inpainted: &RgbImage, mask: &[bool]) -> Result<PlaneImage> {
    if inpainted.dimensions() != plane.pixels.dimensions() {
        return Err(Error::DimensionMismatch {
            expected: plane.pixels.dimensions(),
            actual: inpainted.dimensions(),
        });
    }
    let w = plane.width();
    let mut out = plane.pixels.clone();
    let mut modified = 0usize;
    for (x, y, p) in out.enumerate_pixels_mut() {
        let q = inpainted.get_pixel(x, y);
        if mask[(y * w + x) as usize] {
            *p = *q;
        } else if (0..3).any(|c| (p[c] as i32 - q[c] as i32).abs() > IMPORT_TOLERANCE) {
            modified += 1;
        }
    }
    if modified > 0 {
        return Err(Error::OutsideMaskModified { count: modified });
    }
    Ok(PlaneImage {
        plane_id: plane.plane_id,
        pixels: out,
        meters_per_pixel: plane.meters_per_pixel,
        untextured: vec![false; mask.len()],
    })
}

/// Reads `result.png` from the plane's job directory and imports it against
/// the mask that was exported with it.
pub fn import_inpaint_job(plane: &PlaneImage, jobs_dir: &Path) -> Result<PlaneImage> {
    let dir = job_dir(jobs_dir, plane.plane_id);
    let result = image::open(dir.join("result.png"))?.to_rgb8();
    let mask_path = dir.join("mask.png");
    let mask = if mask_path.exists() {
        let m = image::open(&mask_path)?.to_luma8();
        if m.dimensions() != plane.pixels.dimensions() {
            return Err(Error::DimensionMismatch {
                expected: plane.pixels.dimensions(),
                actual: m.dimensions(),
            });
        }
        image_to_mask(&m)
    } else {
        inpaint_mask(plane)
    };
    import_with_mask(plane, &result, &mask)
}
