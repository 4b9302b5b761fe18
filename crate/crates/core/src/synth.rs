//! Synthetic rooms with known textures, and simulated capture sessions.

use image::{Rgb, RgbImage, RgbaImage};
use nalgebra::Rotation3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::camera::{look_at, rigid, rotation, translation, CameraIntrinsics, Frame, DEFAULT_FAR, DEFAULT_NEAR};
use crate::error::{Error, Result};
use crate::geom::{Mat4, Vec2, Vec3};
use crate::imageops::{gaussian_blur, rgb_to_rgba};
use crate::layout::{point_in_room, rectangular_walls, RoomLayout};
use crate::mesh::{FaceLabel, TriMesh};
use crate::plane2image::{pixel_extent, plane_camera, quad_render_mesh, simplify_and_remap};
use crate::planner::CapturePlan;
use crate::raster::{render, RenderMesh};

/// Side lengths drawn by [`RoomSpec::random`] are multiples of this, so
/// plan subdivisions fall on the default wall grid.
pub const SIDE_STEP: f64 = 0.8;
pub const DEFAULT_ROOM_HEIGHT: f64 = 2.44;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct RoomSpec {
    pub width: f64,
    pub depth: f64,
    pub height: f64,
    /// Number of box occluders (0 to 3).
    pub occluders: usize,
    pub seed: u64,
}

impl RoomSpec {
    /// Rectangular room with sides in `[2.4, max_side]` m.
    pub fn random(seed: u64, max_side: f64, occluders: usize) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let steps = ((max_side / SIDE_STEP).floor() as u32).max(3);
        let mut side = || SIDE_STEP * rng.random_range(3..=steps) as f64;
        let (width, depth) = (side(), side());
        RoomSpec { width, depth, height: DEFAULT_ROOM_HEIGHT, occluders, seed }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = [self.width, self.depth, self.height].iter().all(|v| v.is_finite() && *v > 0.0);
        if !ok || self.occluders > 3 {
            return Err(Error::InvalidParameter(format!(
                "room dimensions must be positive and occluders at most 3 (got {} x {} x {}, {} boxes)",
                self.width, self.depth, self.height, self.occluders
            )));
        }
        Ok(())
    }
}

/// Axis-aligned textured box resting on the floor.
#[derive(Clone, Debug, PartialEq)]
pub struct BoxOccluder {
    pub min: Vec3,
    pub max: Vec3,
    pub texture: RgbImage,
}

impl BoxOccluder {
    /// Quads as corner lists, counter-clockwise seen from outside.
    fn quads(&self) -> [[Vec3; 4]; 6] {
        let (a, b) = (self.min, self.max);
        let p = |x: f64, y: f64, z: f64| Vec3::new(x, y, z);
        [
            [p(a.x, a.y, b.z), p(b.x, a.y, b.z), p(b.x, b.y, b.z), p(a.x, b.y, b.z)],
            [p(b.x, a.y, a.z), p(a.x, a.y, a.z), p(a.x, b.y, a.z), p(b.x, b.y, a.z)],
            [p(b.x, a.y, b.z), p(b.x, a.y, a.z), p(b.x, b.y, a.z), p(b.x, b.y, b.z)],
            [p(a.x, a.y, a.z), p(a.x, a.y, b.z), p(a.x, b.y, b.z), p(a.x, b.y, a.z)],
            [p(a.x, b.y, b.z), p(b.x, b.y, b.z), p(b.x, b.y, a.z), p(a.x, b.y, a.z)],
            [p(a.x, a.y, a.z), p(b.x, a.y, a.z), p(b.x, a.y, b.z), p(a.x, a.y, b.z)],
        ]
    }

    pub fn mesh(&self) -> TriMesh {
        let mut m = TriMesh::default();
        for q in self.quads() {
            let base = m.vertices.len() as u32;
            m.vertices.extend_from_slice(&q);
            m.faces.extend([[base, base + 1, base + 2], [base, base + 2, base + 3]]);
            m.labels.extend([FaceLabel::Object; 2]);
        }
        m
    }
}

#[derive(Clone, Debug)]
pub struct SyntheticRoom {
    pub spec: RoomSpec,
    pub layout: RoomLayout,
    /// Ground-truth texture per plane id, at 500 px/m in the plane image frame.
    pub textures: Vec<(u32, RgbImage)>,
    pub boxes: Vec<BoxOccluder>,
}

impl SyntheticRoom {
    pub fn texture(&self, plane_id: u32) -> Option<&RgbImage> {
        self.textures.iter().find(|(id, _)| *id == plane_id).map(|(_, t)| t)
    }

    /// Render geometry and texture pages of the whole scene.
    pub fn render_scene(&self) -> (RenderMesh, Vec<RgbaImage>) {
        let mut rm = RenderMesh::default();
        let mut pages = Vec::new();
        for plane in self.layout.all_planes() {
            let quad = simplify_and_remap(&plane, &plane_camera(&plane, self.layout.mbb.align));
            let page = pages.len() as u32;
            let q = quad_render_mesh(&quad, page);
            for f in 0..q.faces.len() {
                rm.push_face(q.faces[f].map(|i| q.positions[i as usize]), page, q.face_uv[f]);
            }
            pages.push(rgb_to_rgba(self.texture(plane.id).expect("texture for every plane"), None));
        }
        let uv = [Vec2::new(0.0, 1.0), Vec2::new(1.0, 1.0), Vec2::new(1.0, 0.0), Vec2::new(0.0, 0.0)];
        for b in &self.boxes {
            let page = pages.len() as u32;
            for q in b.quads() {
                rm.push_face([q[0], q[1], q[2]], page, [uv[0], uv[1], uv[2]]);
                rm.push_face([q[0], q[2], q[3]], page, [uv[0], uv[2], uv[3]]);
            }
            pages.push(rgb_to_rgba(&b.texture, None));
        }
        (rm, pages)
    }

    /// Captured-mesh surrogate: every plane as a quad, plus the boxes.
    pub fn scene_mesh(&self) -> TriMesh {
        let mut m = TriMesh::default();
        for plane in self.layout.all_planes() {
            let c = plane.corners;
            let base = m.vertices.len() as u32;
            m.vertices.extend_from_slice(&c);
            m.faces.extend([[base, base + 1, base + 2], [base, base + 2, base + 3]]);
            m.labels.extend([FaceLabel::Object; 2]);
        }
        for b in &self.boxes {
            m.append(&b.mesh());
        }
        m
    }
}

fn random_color(rng: &mut ChaCha8Rng) -> [f64; 3] {
    [rng.random_range(40.0..215.0), rng.random_range(40.0..215.0), rng.random_range(40.0..215.0)]
}

/// Smooth procedural texture of `w x h` pixels; all styles are band-limited
/// to a few cycles per meter so resampling stays accurate.
fn procedural_texture(w: u32, h: u32, style: u32, rng: &mut ChaCha8Rng) -> RgbImage {
    let px = 1.0 / 500.0;
    let base = random_color(rng);
    let other = random_color(rng);
    let tau = std::f64::consts::TAU;
    match style % 3 {
        0 => {
            // Soft checkerboard.
            let f = rng.random_range(1.5..4.0);
            let (ox, oy) = (rng.random_range(0.0..1.0), rng.random_range(0.0..1.0));
            RgbImage::from_fn(w, h, |x, y| {
                let (u, v) = ((x as f64 + 0.5) * px, (y as f64 + 0.5) * px);
                let s = (1.5 * (tau * f * u + ox).sin() * (tau * f * v + oy).sin()).tanh() * 0.5 + 0.5;
                Rgb(std::array::from_fn(|c| (base[c] + (other[c] - base[c]) * s).round() as u8))
            })
        }
        1 => {
            // Diagonal gradient with gentle waves.
            let dir = rng.random_range(0.0..tau);
            let f = rng.random_range(1.0..3.0);
            let (dx, dy) = (dir.cos(), dir.sin());
            let (ww, hh) = (w as f64 * px, h as f64 * px);
            RgbImage::from_fn(w, h, |x, y| {
                let (u, v) = ((x as f64 + 0.5) * px, (y as f64 + 0.5) * px);
                let t = ((u * dx + v * dy) / (ww.abs() + hh.abs())).clamp(-1.0, 1.0) * 0.5 + 0.5;
                let wave = 20.0 * (tau * f * (u * dy - v * dx)).sin();
                Rgb(std::array::from_fn(|c| (base[c] + (other[c] - base[c]) * t + wave).round().clamp(0.0, 255.0) as u8))
            })
        }
        _ => {
            // "Painting": colored Gaussian blobs on a plain background.
            let n = rng.random_range(4..9);
            let (ww, hh) = (w as f64 * px, h as f64 * px);
            let blobs: Vec<(f64, f64, f64, [f64; 3])> = (0..n)
                .map(|_| (rng.random_range(0.0..ww), rng.random_range(0.0..hh), rng.random_range(0.12..0.4), random_color(rng)))
                .collect();
            RgbImage::from_fn(w, h, |x, y| {
                let (u, v) = ((x as f64 + 0.5) * px, (y as f64 + 0.5) * px);
                let mut col = base;
                for (bx, by, s, bc) in &blobs {
                    let a = (-((u - bx).powi(2) + (v - by).powi(2)) / (2.0 * s * s)).exp();
                    for c in 0..3 {
                        col[c] += (bc[c] - col[c]) * a;
                    }
                }
                Rgb(col.map(|c| c.round().clamp(0.0, 255.0) as u8))
            })
        }
    }
}

/// Deterministic synthetic room for `spec`.
pub fn generate_room(spec: &RoomSpec) -> Result<SyntheticRoom> {
    spec.validate()?;
    let layout = RoomLayout::from_walls(rectangular_walls(spec.width, spec.depth, spec.height), 0.0, spec.height)?;
    let planes = layout.all_planes();
    let textures = planes
        .par_iter()
        .enumerate()
        .map(|(k, p)| {
            let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
            rng.set_stream(1 + k as u64);
            let style = (spec.seed as u32).wrapping_add(k as u32);
            (p.id, procedural_texture(pixel_extent(p.width), pixel_extent(p.height), style, &mut rng))
        })
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    rng.set_stream(0);
    let mut boxes = Vec::with_capacity(spec.occluders);
    for _ in 0..spec.occluders {
        let sx = rng.random_range(0.3..0.7f64).min(spec.width / 4.0);
        let sz = rng.random_range(0.3..0.7f64).min(spec.depth / 4.0);
        let sy = rng.random_range(0.4..1.0f64).min(spec.height / 2.0);
        // Kept clear of the walls so filtering retains the box.
        let x0 = rng.random_range(0.3..(spec.width - sx - 0.3).max(0.31));
        let z0 = rng.random_range(0.3..(spec.depth - sz - 0.3).max(0.31));
        let mut trng = ChaCha8Rng::seed_from_u64(spec.seed);
        trng.set_stream(1000 + boxes.len() as u64);
        boxes.push(BoxOccluder {
            min: Vec3::new(x0, 0.0, z0),
            max: Vec3::new(x0 + sx, sy, z0 + sz),
            texture: procedural_texture(64, 64, 1, &mut trng),
        });
    }
    Ok(SyntheticRoom { spec: spec.clone(), layout, textures, boxes })
}

/// Pose and image perturbations applied to simulated captures.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", default, deny_unknown_fields)]
pub struct NoiseModel {
    /// Standard deviation of the recorded position error per axis (m).
    pub pose_sigma_t: f64,
    /// Standard deviation of the recorded rotation error per axis (degrees).
    pub pose_sigma_r: f64,
    /// Gaussian blur applied to the images (px).
    pub blur_sigma: f64,
    pub seed: u64,
    /// Accumulate pose errors along the trajectory instead of drawing them
    /// independently per frame.
    pub random_walk: bool,
}

impl Default for NoiseModel {
    fn default() -> Self {
        NoiseModel { pose_sigma_t: 0.0, pose_sigma_r: 0.0, blur_sigma: 0.0, seed: 0, random_walk: false }
    }
}

impl NoiseModel {
    pub fn validate(&self) -> Result<()> {
        let v = [self.pose_sigma_t, self.pose_sigma_r, self.blur_sigma];
        if v.iter().any(|x| !x.is_finite() || *x < 0.0) {
            return Err(Error::InvalidParameter(format!("noise parameters must be non-negative, got {v:?}")));
        }
        Ok(())
    }

    fn frame_rng(&self, index: usize) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(index as u64);
        rng
    }

    /// Error transform for one frame (translation, rotation vector).
    fn draw(&self, index: usize) -> (Vec3, Vec3) {
        let mut rng = self.frame_rng(index);
        let t = Normal::new(0.0, self.pose_sigma_t).expect("validated sigma");
        let r = Normal::new(0.0, self.pose_sigma_r.to_radians()).expect("validated sigma");
        let dt = Vec3::new(t.sample(&mut rng), t.sample(&mut rng), t.sample(&mut rng));
        let dr = Vec3::new(r.sample(&mut rng), r.sample(&mut rng), r.sample(&mut rng));
        (dt, dr)
    }

    /// Recorded poses for the true camera-to-world poses.
    pub fn perturb(&self, poses: &[Mat4]) -> Vec<Mat4> {
        let draws: Vec<(Vec3, Vec3)> = (0..poses.len()).map(|i| self.draw(i)).collect();
        let mut acc = (Vec3::zeros(), Vec3::zeros());
        poses
            .iter()
            .zip(draws)
            .map(|(p, (dt, dr))| {
                let (dt, dr) = if self.random_walk {
                    acc = (acc.0 + dt, acc.1 + dr);
                    acc
                } else {
                    (dt, dr)
                };
                let r = Rotation3::new(dr).into_inner() * rotation(p);
                rigid(&r, &(translation(p) + dt))
            })
            .collect()
    }
}

/// Frames with the poses they were rendered from.
#[derive(Clone, Debug)]
pub struct SimulatedCapture {
    pub frames: Vec<Frame>,
    pub true_poses: Vec<Mat4>,
}

/// Renders the room from each true pose, blurs the images and records
/// perturbed poses.
pub fn simulate_capture(room: &SyntheticRoom, poses: &[Mat4], k: &CameraIntrinsics, noise: &NoiseModel) -> Result<SimulatedCapture> {
    noise.validate()?;
    k.validate()?;
    for (i, p) in poses.iter().enumerate() {
        let c = translation(p);
        let inside = point_in_room(Vec2::new(c.x, c.z), &room.layout)
            && c.y > room.layout.floor_height
            && c.y < room.layout.ceiling_height;
        if !inside {
            return Err(Error::PoseOutsideRoom { index: i });
        }
    }
    let (mesh, pages) = room.render_scene();
    let recorded = noise.perturb(poses);
    let frames = poses
        .par_iter()
        .zip(recorded.par_iter())
        .enumerate()
        .map(|(i, (pose, rec))| {
            let cam = crate::camera::Camera::new(*k, *pose);
            let fb = render(&mesh, &pages, &cam.view_projection(DEFAULT_NEAR, DEFAULT_FAR), k.width, k.height);
            let depth = fb
                .depth
                .iter()
                .map(|d| if d.is_finite() { (d * 1000.0).round().clamp(0.0, u16::MAX as f64) as u16 } else { 0 })
                .collect();
            Frame {
                index: i,
                color: gaussian_blur(&fb.color, noise.blur_sigma),
                depth: Some(depth),
                intrinsics: *k,
                pose: *rec,
            }
        })
        .collect();
    Ok(SimulatedCapture { frames, true_poses: poses.to_vec() })
}

/// Camera-to-world poses of a capture plan.
pub fn plan_poses(plan: &CapturePlan) -> Vec<Mat4> {
    plan.entries.iter().map(|e| e.pose()).collect()
}

/// Dense hand-held style trajectory: a slow circle about the room center,
/// looking outward, with the view swept up and down every eight frames.
pub fn dense_orbit(layout: &RoomLayout, n: usize, eye_height: f64) -> Vec<Mat4> {
    let c = layout.mbb.center;
    let radius = 0.2 * layout.mbb.width.min(layout.mbb.height);
    let tau = std::f64::consts::TAU;
    (0..n)
        .map(|i| {
            let a = tau * i as f64 / n as f64;
            let eye = Vec3::new(c.x + radius * a.cos(), eye_height, c.y + radius * a.sin());
            let pitch = 30f64.to_radians() * (tau * i as f64 / 8.0).sin();
            let dir = Vec3::new(a.cos() * pitch.cos(), pitch.sin(), a.sin() * pitch.cos());
            look_at(eye, eye + dir, Vec3::y())
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::camera::pose_difference;

    fn spec(occluders: usize) -> RoomSpec {
        RoomSpec { width: 4.0, depth: 3.2, height: 2.44, occluders, seed: 7 }
    }

    #[test]
    fn room_is_deterministic() {
        let a = generate_room(&spec(2)).unwrap();
        let b = generate_room(&spec(2)).unwrap();
        assert_eq!(a.textures, b.textures);
        assert_eq!(a.boxes, b.boxes);
        assert_eq!(a.textures.len(), 6);
        assert_eq!(a.boxes.len(), 2);
    }

    #[test]
    fn texture_sizes_follow_plane_sizes() {
        let r = generate_room(&RoomSpec { width: 2.0, depth: 3.2, height: 2.44, occluders: 0, seed: 1 }).unwrap();
        assert_eq!(r.texture(0).unwrap().dimensions(), (1000, 1220));
        for p in r.layout.all_planes() {
            let t = r.texture(p.id).unwrap();
            assert_eq!(t.dimensions(), (pixel_extent(p.width), pixel_extent(p.height)));
        }
    }

    #[test]
    fn zero_noise_keeps_poses_and_images() {
        let r = generate_room(&spec(0)).unwrap();
        let poses = dense_orbit(&r.layout, 6, 1.22);
        let cap = simulate_capture(&r, &poses, &CameraIntrinsics::phone(), &NoiseModel::default()).unwrap();
        let (mesh, pages) = r.render_scene();
        for (f, p) in cap.frames.iter().zip(&poses) {
            assert_eq!(&f.pose, p);
            let cam = f.camera();
            let fb = render(&mesh, &pages, &cam.view_projection(DEFAULT_NEAR, DEFAULT_FAR), 480, 640);
            assert_eq!(fb.color, f.color);
        }
    }

    #[test]
    fn noise_moves_recorded_poses() {
        let r = generate_room(&spec(0)).unwrap();
        let poses = dense_orbit(&r.layout, 4, 1.22);
        let noise = NoiseModel { pose_sigma_t: 0.02, pose_sigma_r: 1.0, ..Default::default() };
        let rec = noise.perturb(&poses);
        assert!(rec.iter().zip(&poses).all(|(a, b)| pose_difference(a, b).0 > 0.0));
        assert_eq!(rec, noise.perturb(&poses));
    }

    #[test]
    fn pose_outside_room_is_rejected() {
        let r = generate_room(&spec(0)).unwrap();
        let bad = vec![look_at(Vec3::new(-1.0, 1.0, 1.0), Vec3::new(0.0, 1.0, 1.0), Vec3::y())];
        assert!(matches!(
            simulate_capture(&r, &bad, &CameraIntrinsics::phone(), &NoiseModel::default()),
            Err(Error::PoseOutsideRoom { index: 0 })
        ));
    }

    #[test]
    fn orbit_stays_inside() {
        let r = generate_room(&spec(0)).unwrap();
        let poses = dense_orbit(&r.layout, 240, 1.22);
        assert_eq!(poses.len(), 240);
        assert!(poses.iter().all(|p| {
            let c = translation(p);
            point_in_room(Vec2::new(c.x, c.z), &r.layout)
        }));
    }
}
