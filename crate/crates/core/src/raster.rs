//! Deterministic software rasterizer for textured triangle meshes.
//!
//! Triangles are clipped against the near and far planes in clip space,
//! filled with edge functions under the top-left rule, depth-tested on NDC
//! depth and shaded by perspective-correct bilinear texture lookups.

use image::{Rgb, RgbImage, RgbaImage};
use nalgebra::Vector4;

use crate::geom::{Mat4, Vec2, Vec3};
use crate::imageops::{sample_rgba, to_u8};

/// Page index of faces without texture.
pub const NO_TEXTURE: u32 = u32::MAX;
/// Face index of pixels not covered by any face.
pub const NO_FACE: u32 = u32::MAX;
const DEPTH_EPS: f64 = 1e-6;

/// Geometry with per-face texture page and per-corner texture coordinates.
#[derive(Clone, Debug, Default)]
pub struct RenderMesh {
    pub positions: Vec<Vec3>,
    pub faces: Vec<[u32; 3]>,
    pub face_page: Vec<u32>,
    /// Normalized coordinates, `u` right and `v` down.
    pub face_uv: Vec<[Vec2; 3]>,
}

impl RenderMesh {
    pub fn push_face(&mut self, tri: [Vec3; 3], page: u32, uv: [Vec2; 3]) {
        let base = self.positions.len() as u32;
        self.positions.extend_from_slice(&tri);
        self.faces.push([base, base + 1, base + 2]);
        self.face_page.push(page);
        self.face_uv.push(uv);
    }
}

#[derive(Clone, Debug)]
pub struct Framebuffer {
    pub color: RgbImage,
    /// Pixels that are background or whose texel alpha is below 128.
    pub untextured: Vec<bool>,
    /// Linear view depth (m), infinite where nothing was drawn.
    pub depth: Vec<f64>,
    /// Index of the visible face, [`NO_FACE`] for background.
    pub face: Vec<u32>,
    ndc_z: Vec<f64>,
}

impl Framebuffer {
    pub fn new(width: u32, height: u32) -> Self {
        let n = (width * height) as usize;
        Framebuffer {
            color: RgbImage::new(width, height),
            untextured: vec![true; n],
            depth: vec![f64::INFINITY; n],
            face: vec![NO_FACE; n],
            ndc_z: vec![f64::INFINITY; n],
        }
    }

    pub fn width(&self) -> u32 {
        self.color.width()
    }

    pub fn height(&self) -> u32 {
        self.color.height()
    }
}

#[derive(Clone, Copy)]
struct ClipVert {
    c: Vector4<f64>,
    uv: Vec2,
}

fn lerp(a: &ClipVert, b: &ClipVert, t: f64) -> ClipVert {
    ClipVert {
        c: a.c + (b.c - a.c) * t,
        uv: a.uv + (b.uv - a.uv) * t,
    }
}

/// Sutherland-Hodgman against `dist(v) >= 0`.
fn clip_polygon(poly: &[ClipVert], dist: impl Fn(&Vector4<f64>) -> f64) -> Vec<ClipVert> {
    let mut out = Vec::with_capacity(poly.len() + 2);
    for i in 0..poly.len() {
        let a = &poly[i];
        let b = &poly[(i + 1) % poly.len()];
        let (da, db) = (dist(&a.c), dist(&b.c));
        if da >= 0.0 {
            out.push(*a);
        }
        if (da >= 0.0) != (db >= 0.0) {
            out.push(lerp(a, b, da / (da - db)));
        }
    }
    out
}

#[derive(Clone, Copy)]
struct ScreenVert {
    p: Vec2,
    z: f64,
    inv_w: f64,
    uv_w: Vec2,
}

#[inline]
fn edge(a: &Vec2, b: &Vec2, p: &Vec2) -> f64 {
    (b.x - a.x) * (p.y - a.y) - (b.y - a.y) * (p.x - a.x)
}

/// Top or left edge for positive-area triangles in y-down screen space.
#[inline]
fn top_left(a: &Vec2, b: &Vec2) -> bool {
    b.y < a.y || (b.y == a.y && b.x > a.x)
}

#[inline]
fn covers(w: f64, a: &Vec2, b: &Vec2) -> bool {
    w > 0.0 || (w == 0.0 && top_left(a, b))
}

/// Draws `mesh` with `clip_from_world` into `fb`.
pub fn render_into(fb: &mut Framebuffer, mesh: &RenderMesh, pages: &[RgbaImage], clip_from_world: &Mat4) {
    let (w, h) = (fb.width() as f64, fb.height() as f64);
    for (f, tri) in mesh.faces.iter().enumerate() {
        let mut poly: Vec<ClipVert> = (0..3)
            .map(|k| {
                let p = mesh.positions[tri[k] as usize];
                ClipVert {
                    c: clip_from_world * Vector4::new(p.x, p.y, p.z, 1.0),
                    uv: mesh.face_uv[f][k],
                }
            })
            .collect();
        poly = clip_polygon(&poly, |c| c.z + c.w);
        if poly.len() < 3 {
            continue;
        }
        poly = clip_polygon(&poly, |c| c.w - c.z);
        if poly.len() < 3 {
            continue;
        }
        let sv: Vec<ScreenVert> = poly
            .iter()
            .map(|v| {
                let iw = 1.0 / v.c.w;
                ScreenVert {
                    p: Vec2::new((v.c.x * iw + 1.0) * 0.5 * w, (1.0 - v.c.y * iw) * 0.5 * h),
                    z: v.c.z * iw,
                    inv_w: iw,
                    uv_w: v.uv * iw,
                }
            })
            .collect();
        let page = pages.get(mesh.face_page[f] as usize);
        for k in 1..sv.len() - 1 {
            raster_triangle(fb, [sv[0], sv[k], sv[k + 1]], page, f as u32);
        }
    }
}

/// Renders `mesh` into a fresh `width x height` framebuffer.
pub fn render(mesh: &RenderMesh, pages: &[RgbaImage], clip_from_world: &Mat4, width: u32, height: u32) -> Framebuffer {
    let mut fb = Framebuffer::new(width, height);
    render_into(&mut fb, mesh, pages, clip_from_world);
    fb
}

fn raster_triangle(fb: &mut Framebuffer, v: [ScreenVert; 3], page: Option<&RgbaImage>, face: u32) {
    let [mut v0, mut v1, mut v2] = v;
    let mut area = edge(&v0.p, &v1.p, &v2.p);
    if area == 0.0 || !area.is_finite() {
        return;
    }
    if area < 0.0 {
        std::mem::swap(&mut v1, &mut v2);
        area = -area;
    }
    let _ = &mut v0;
    let (wi, hi) = (fb.width() as i64, fb.height() as i64);
    let minx = v0.p.x.min(v1.p.x).min(v2.p.x);
    let maxx = v0.p.x.max(v1.p.x).max(v2.p.x);
    let miny = v0.p.y.min(v1.p.y).min(v2.p.y);
    let maxy = v0.p.y.max(v1.p.y).max(v2.p.y);
    let x0 = ((minx - 0.5).floor() as i64).max(0);
    let x1 = ((maxx - 0.5).ceil() as i64).min(wi - 1);
    let y0 = ((miny - 0.5).floor() as i64).max(0);
    let y1 = ((maxy - 0.5).ceil() as i64).min(hi - 1);
    if x0 > x1 || y0 > y1 {
        return;
    }
    let inv_area = 1.0 / area;
    for y in y0..=y1 {
        for x in x0..=x1 {
            let p = Vec2::new(x as f64 + 0.5, y as f64 + 0.5);
            let e0 = edge(&v1.p, &v2.p, &p);
            let e1 = edge(&v2.p, &v0.p, &p);
            let e2 = edge(&v0.p, &v1.p, &p);
            if !(covers(e0, &v1.p, &v2.p) && covers(e1, &v2.p, &v0.p) && covers(e2, &v0.p, &v1.p)) {
                continue;
            }
            let (b0, b1, b2) = (e0 * inv_area, e1 * inv_area, e2 * inv_area);
            let z = b0 * v0.z + b1 * v1.z + b2 * v2.z;
            let idx = (y * wi + x) as usize;
            if !(z < fb.ndc_z[idx] - DEPTH_EPS) {
                continue;
            }
            let iw = b0 * v0.inv_w + b1 * v1.inv_w + b2 * v2.inv_w;
            let uv = (v0.uv_w * b0 + v1.uv_w * b1 + v2.uv_w * b2) / iw;
            let (rgb, untextured) = match page {
                Some(img) => {
                    let s = sample_rgba(img, uv.x, uv.y);
                    ([to_u8(s[0]), to_u8(s[1]), to_u8(s[2])], s[3] < 127.5)
                }
                None => ([255, 0, 255], true),
            };
            fb.ndc_z[idx] = z;
            fb.depth[idx] = 1.0 / iw;
            fb.face[idx] = face;
            fb.untextured[idx] = untextured;
            fb.color.put_pixel(x as u32, y as u32, Rgb(rgb));
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::camera::{look_at, Camera, CameraIntrinsics};
    use image::Rgba;

    fn quad_mesh() -> RenderMesh {
        let mut m = RenderMesh::default();
        let p = [
            Vec3::new(-1.0, -1.0, 0.0),
            Vec3::new(1.0, -1.0, 0.0),
            Vec3::new(1.0, 1.0, 0.0),
            Vec3::new(-1.0, 1.0, 0.0),
        ];
        let uv = [Vec2::new(0.0, 1.0), Vec2::new(1.0, 1.0), Vec2::new(1.0, 0.0), Vec2::new(0.0, 0.0)];
        m.push_face([p[0], p[1], p[2]], 0, [uv[0], uv[1], uv[2]]);
        m.push_face([p[0], p[2], p[3]], 0, [uv[0], uv[2], uv[3]]);
        m
    }

    #[test]
    fn shared_edge_pixels_drawn_once() {
        // Two triangles covering the whole viewport; every pixel owned by one.
        let k = CameraIntrinsics { fx: 50.0, fy: 50.0, cx: 50.0, cy: 50.0, width: 100, height: 100 };
        let cam = Camera::new(k, look_at(Vec3::new(0.0, 0.0, 1.0), Vec3::zeros(), Vec3::y()));
        let page = RgbaImage::from_pixel(4, 4, Rgba([10, 20, 30, 255]));
        let fb = render(&quad_mesh(), &[page], &cam.view_projection(0.01, 100.0), 100, 100);
        assert!(fb.untextured.iter().all(|u| !u));
        let c0 = fb.face.iter().filter(|&&f| f == 0).count();
        let c1 = fb.face.iter().filter(|&&f| f == 1).count();
        assert_eq!(c0 + c1, 10_000);
        // The diagonal passes through pixel centers; ownership splits it.
        assert!(c0 == 4950 || c0 == 5050, "{c0}");
    }

    #[test]
    fn nearer_face_wins() {
        let k = CameraIntrinsics { fx: 50.0, fy: 50.0, cx: 50.0, cy: 50.0, width: 100, height: 100 };
        let cam = Camera::new(k, look_at(Vec3::new(0.0, 0.0, 3.0), Vec3::zeros(), Vec3::y()));
        let mut m = quad_mesh();
        let z = Vec3::new(0.0, 0.0, 1.0);
        let uv = [Vec2::zeros(); 3];
        m.push_face([Vec3::new(-0.2, -0.2, 0.0) + z, Vec3::new(0.2, -0.2, 0.0) + z, Vec3::new(0.0, 0.2, 0.0) + z], 1, uv);
        let pages = [
            RgbaImage::from_pixel(1, 1, Rgba([255, 0, 0, 255])),
            RgbaImage::from_pixel(1, 1, Rgba([0, 255, 0, 255])),
        ];
        let fb = render(&m, &pages, &cam.view_projection(0.01, 100.0), 100, 100);
        assert_eq!(fb.color.get_pixel(50, 50).0, [0, 255, 0]);
        assert!((fb.depth[50 * 100 + 50] - 2.0).abs() < 1e-9);
        assert_eq!(fb.color.get_pixel(40, 50).0, [255, 0, 0]);
    }

    #[test]
    fn near_plane_clipping_keeps_visible_part() {
        let k = CameraIntrinsics { fx: 50.0, fy: 50.0, cx: 50.0, cy: 50.0, width: 100, height: 100 };
        let cam = Camera::new(k, look_at(Vec3::zeros(), Vec3::new(0.0, 0.0, -1.0), Vec3::y()));
        let mut m = RenderMesh::default();
        // A floor triangle that passes behind the camera.
        m.push_face(
            [Vec3::new(-5.0, -1.0, 5.0), Vec3::new(5.0, -1.0, 5.0), Vec3::new(0.0, -1.0, -10.0)],
            0,
            [Vec2::zeros(); 3],
        );
        let fb = render(&m, &[RgbaImage::from_pixel(1, 1, Rgba([1, 2, 3, 255]))], &cam.view_projection(0.01, 100.0), 100, 100);
        assert!(fb.face.iter().any(|&f| f == 0));
        assert_eq!(fb.color.get_pixel(50, 99).0, [1, 2, 3]);
        assert_eq!(fb.face[10 * 100 + 50], NO_FACE);
    }
}
