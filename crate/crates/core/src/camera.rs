//! Pinhole cameras, poses and captured frames.
//!
//! Poses are camera-to-world matrices. Cameras look down their local -Z axis
//! with +Y up; pixel `(u, v)` has `u = cx + fx * x / -z` and
//! `v = cy - fy * y / -z`, with pixel centers at half-integers.

use image::RgbImage;
use nalgebra::{Matrix3, Vector4};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::{Mat4, Vec2, Vec3};

pub const DEFAULT_NEAR: f64 = 0.01;
pub const DEFAULT_FAR: f64 = 100.0;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CameraIntrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    #[serde(rename = "w")]
    pub width: u32,
    #[serde(rename = "h")]
    pub height: u32,
}

impl CameraIntrinsics {
    /// Portrait phone-like camera: 480 x 640 px, fx = fy = 500.
    pub fn phone() -> Self {
        CameraIntrinsics {
            fx: 500.0,
            fy: 500.0,
            cx: 240.0,
            cy: 320.0,
            width: 480,
            height: 640,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.fx > 0.0
            && self.fy > 0.0
            && self.cx > 0.0
            && self.cy > 0.0
            && self.cx < self.width as f64
            && self.cy < self.height as f64;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidParameter(format!("invalid intrinsics {self:?}")))
        }
    }

    /// Horizontal field of view (radians).
    pub fn hfov(&self) -> f64 {
        2.0 * (self.width as f64 / (2.0 * self.fx)).atan()
    }

    /// Vertical field of view (radians).
    pub fn vfov(&self) -> f64 {
        2.0 * (self.height as f64 / (2.0 * self.fy)).atan()
    }

    /// OpenGL-style projection matching the pixel convention above.
    pub fn projection(&self, near: f64, far: f64) -> Mat4 {
        let (w, h) = (self.width as f64, self.height as f64);
        Mat4::new(
            2.0 * self.fx / w, 0.0, 1.0 - 2.0 * self.cx / w, 0.0,
            0.0, 2.0 * self.fy / h, 2.0 * self.cy / h - 1.0, 0.0,
            0.0, 0.0, -(far + near) / (far - near), -2.0 * far * near / (far - near),
            0.0, 0.0, -1.0, 0.0,
        )
    }
}

/// Element-wise mean of a set of intrinsics sharing one resolution.
pub fn k_average(list: &[CameraIntrinsics]) -> Result<CameraIntrinsics> {
    let first = list.first().ok_or(Error::EmptyInput("no intrinsics to average"))?;
    if list.iter().any(|k| k.width != first.width || k.height != first.height) {
        return Err(Error::MixedResolutions);
    }
    let n = list.len() as f64;
    let mean = |f: fn(&CameraIntrinsics) -> f64| list.iter().map(f).sum::<f64>() / n;
    Ok(CameraIntrinsics {
        fx: mean(|k| k.fx),
        fy: mean(|k| k.fy),
        cx: mean(|k| k.cx),
        cy: mean(|k| k.cy),
        width: first.width,
        height: first.height,
    })
}

/// Camera-to-world pose looking from `eye` toward `target`.
pub fn look_at(eye: Vec3, target: Vec3, up: Vec3) -> Mat4 {
    let f = (target - eye).normalize();
    let mut x = f.cross(&up);
    if x.norm() < 1e-12 {
        // Looking along `up`: fall back to any perpendicular axis.
        let alt = if f.x.abs() < 0.9 { Vec3::x() } else { Vec3::z() };
        x = f.cross(&alt);
    }
    let x = x.normalize();
    let y = x.cross(&f);
    let z = -f;
    Mat4::new(
        x.x, y.x, z.x, eye.x,
        x.y, y.y, z.y, eye.y,
        x.z, y.z, z.z, eye.z,
        0.0, 0.0, 0.0, 1.0,
    )
}

pub fn rotation(m: &Mat4) -> Matrix3<f64> {
    m.fixed_view::<3, 3>(0, 0).into_owned()
}

pub fn translation(m: &Mat4) -> Vec3 {
    Vec3::new(m[(0, 3)], m[(1, 3)], m[(2, 3)])
}

/// Inverse of a rigid transform.
pub fn rigid_inverse(m: &Mat4) -> Mat4 {
    let rt = rotation(m).transpose();
    let t = -(rt * translation(m));
    let mut out = Mat4::identity();
    out.fixed_view_mut::<3, 3>(0, 0).copy_from(&rt);
    out[(0, 3)] = t.x;
    out[(1, 3)] = t.y;
    out[(2, 3)] = t.z;
    out
}

/// Builds a rigid transform from rotation and translation.
pub fn rigid(r: &Matrix3<f64>, t: &Vec3) -> Mat4 {
    let mut out = Mat4::identity();
    out.fixed_view_mut::<3, 3>(0, 0).copy_from(r);
    out[(0, 3)] = t.x;
    out[(1, 3)] = t.y;
    out[(2, 3)] = t.z;
    out
}

/// Translation distance (m) and rotation angle (degrees) between two poses.
pub fn pose_difference(a: &Mat4, b: &Mat4) -> (f64, f64) {
    let dt = (translation(a) - translation(b)).norm();
    let r = rotation(a).transpose() * rotation(b);
    let c = ((r.trace() - 1.0) / 2.0).clamp(-1.0, 1.0);
    (dt, c.acos().to_degrees())
}

/// A posed pinhole camera.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Camera {
    pub k: CameraIntrinsics,
    pub cam_to_world: Mat4,
    pub world_to_cam: Mat4,
}

impl Camera {
    pub fn new(k: CameraIntrinsics, cam_to_world: Mat4) -> Self {
        Camera {
            k,
            cam_to_world,
            world_to_cam: rigid_inverse(&cam_to_world),
        }
    }

    pub fn center(&self) -> Vec3 {
        translation(&self.cam_to_world)
    }

    /// Viewing direction in world space.
    pub fn forward(&self) -> Vec3 {
        -Vec3::new(self.cam_to_world[(0, 2)], self.cam_to_world[(1, 2)], self.cam_to_world[(2, 2)])
    }

    pub fn to_camera(&self, p: &Vec3) -> Vec3 {
        let q = self.world_to_cam * Vector4::new(p.x, p.y, p.z, 1.0);
        Vec3::new(q.x, q.y, q.z)
    }

    /// Pixel coordinates and positive depth, or `None` behind the camera.
    pub fn project(&self, p: &Vec3) -> Option<(Vec2, f64)> {
        let q = self.to_camera(p);
        let d = -q.z;
        if d <= 0.0 {
            return None;
        }
        Some((
            Vec2::new(self.k.cx + self.k.fx * q.x / d, self.k.cy - self.k.fy * q.y / d),
            d,
        ))
    }

    /// True if `px` lies inside `[0, W] x [0, H]`.
    pub fn in_bounds(&self, px: &Vec2) -> bool {
        px.x >= 0.0 && px.y >= 0.0 && px.x <= self.k.width as f64 && px.y <= self.k.height as f64
    }

    /// World-space ray direction through pixel position `px`.
    pub fn ray(&self, px: &Vec2) -> Vec3 {
        let d = Vec3::new((px.x - self.k.cx) / self.k.fx, -(px.y - self.k.cy) / self.k.fy, -1.0);
        (rotation(&self.cam_to_world) * d).normalize()
    }

    /// Clip-from-world matrix.
    pub fn view_projection(&self, near: f64, far: f64) -> Mat4 {
        self.k.projection(near, far) * self.world_to_cam
    }
}

/// One RGB(-D) capture.
#[derive(Clone, Debug)]
pub struct Frame {
    pub index: usize,
    pub color: RgbImage,
    /// Depth in millimeters, row-major, 0 = missing.
    pub depth: Option<Vec<u16>>,
    pub intrinsics: CameraIntrinsics,
    pub pose: Mat4,
}

impl Frame {
    pub fn camera(&self) -> Camera {
        Camera::new(self.intrinsics, self.pose)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn projection_matches_pixel_model() {
        let k = CameraIntrinsics::phone();
        let pose = look_at(Vec3::new(0.0, 1.0, 3.0), Vec3::new(0.0, 1.0, 0.0), Vec3::y());
        let cam = Camera::new(k, pose);
        let p = Vec3::new(0.3, 1.2, 0.5);
        let (px, d) = cam.project(&p).unwrap();
        assert!((d - 2.5).abs() < 1e-12);
        assert!((px.x - (240.0 + 500.0 * 0.3 / 2.5)).abs() < 1e-9);
        assert!((px.y - (320.0 - 500.0 * 0.2 / 2.5)).abs() < 1e-9);

        let clip = cam.view_projection(0.01, 100.0) * Vector4::new(p.x, p.y, p.z, 1.0);
        let sx = (clip.x / clip.w + 1.0) * 0.5 * 480.0;
        let sy = (1.0 - clip.y / clip.w) * 0.5 * 640.0;
        assert!((sx - px.x).abs() < 1e-9 && (sy - px.y).abs() < 1e-9);
    }

    #[test]
    fn average_and_mixed() {
        let mut a = CameraIntrinsics::phone();
        let mut b = a;
        a.fx = 1000.0;
        b.fx = 1200.0;
        assert_eq!(k_average(&[a, b]).unwrap().fx, 1100.0);
        b.width = 10;
        assert!(matches!(k_average(&[a, b]), Err(Error::MixedResolutions)));
        assert!(matches!(k_average(&[]), Err(Error::EmptyInput(_))));
    }

    #[test]
    fn pose_difference_angle() {
        let a = look_at(Vec3::zeros(), Vec3::new(0.0, 0.0, -1.0), Vec3::y());
        let b = look_at(Vec3::zeros(), Vec3::new(1.0, 0.0, -1.0), Vec3::y());
        let (t, r) = pose_difference(&a, &b);
        assert!(t < 1e-12);
        assert!((r - 45.0).abs() < 1e-9);
    }
}
