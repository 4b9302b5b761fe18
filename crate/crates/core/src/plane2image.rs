//! Rectified per-plane texture images and their two-triangle remapping.
//!
//! Each layout plane is rendered by a perspective camera placed on the plane
//! normal at a distance equal to the plane height, at 500 pixels per meter.
//! The textured plane is then replaced by a single quad whose corner texture
//! coordinates address the rendered image.

use std::path::Path;

use image::{GrayImage, RgbImage};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::camera::{look_at, Camera, CameraIntrinsics};
use crate::error::{Error, Result};
use crate::geom::{Mat4, Vec2, Vec3, UP};
use crate::imageops::{image_to_mask, mask_to_image, rgb_to_rgba};
use crate::layout::{PlaneInfo, PlaneKind, RoomLayout};
use crate::mesh::{write_obj, FaceLabel, TriMesh};
use crate::raster::{render, RenderMesh};
use crate::texturing::TextureAtlas;

pub const PIXELS_PER_METER: f64 = 500.0;
pub const PLANE_NEAR: f64 = 0.001;
pub const PLANE_FAR: f64 = 100.0;

/// Camera that maps one plane exactly onto its image rectangle.
#[derive(Clone, Debug, PartialEq)]
pub struct PlaneCamera {
    pub view: Mat4,
    pub projection: Mat4,
    pub image_width: u32,
    pub image_height: u32,
    pub intrinsics: CameraIntrinsics,
    pub pose: Mat4,
}

impl PlaneCamera {
    pub fn clip_from_world(&self) -> Mat4 {
        self.projection * self.view
    }

    pub fn camera(&self) -> Camera {
        Camera::new(self.intrinsics, self.pose)
    }

    pub fn position(&self) -> Vec3 {
        crate::camera::translation(&self.pose)
    }
}

/// Pixel count for an extent in meters (at least one pixel).
pub fn pixel_extent(meters: f64) -> u32 {
    ((meters * PIXELS_PER_METER).round() as u32).max(1)
}

/// Builds the plane camera. `kind` selects the up vector: world up for
/// walls, `-align` for the floor and `+align` for the ceiling.
pub fn setup_cam(center: Vec3, normal: Vec3, width: f64, height: f64, kind: PlaneKind, mbb_align: Vec2) -> PlaneCamera {
    let (w_px, h_px) = (pixel_extent(width), pixel_extent(height));
    let eye = center + normal * height;
    let up = match kind {
        PlaneKind::Wall => UP,
        PlaneKind::Floor => -Vec3::new(mbb_align.x, 0.0, mbb_align.y),
        PlaneKind::Ceiling => Vec3::new(mbb_align.x, 0.0, mbb_align.y),
    };
    let pose = look_at(eye, center, up);
    // Focal lengths that place the plane edges on the image border; the
    // horizontal one absorbs the rounding of the pixel extents.
    let intrinsics = CameraIntrinsics {
        fx: w_px as f64 * height / width,
        fy: h_px as f64,
        cx: w_px as f64 / 2.0,
        cy: h_px as f64 / 2.0,
        width: w_px,
        height: h_px,
    };
    PlaneCamera {
        view: crate::camera::rigid_inverse(&pose),
        projection: intrinsics.projection(PLANE_NEAR, PLANE_FAR),
        image_width: w_px,
        image_height: h_px,
        intrinsics,
        pose,
    }
}

/// [`setup_cam`] for a layout plane.
pub fn plane_camera(plane: &PlaneInfo, mbb_align: Vec2) -> PlaneCamera {
    setup_cam(plane.center, plane.normal, plane.width, plane.height, plane.kind, mbb_align)
}

/// Rectified texture of one plane.
#[derive(Clone, Debug, PartialEq)]
pub struct PlaneImage {
    pub plane_id: u32,
    pub pixels: RgbImage,
    pub meters_per_pixel: f64,
    /// Row-major; set where no texture reached the pixel.
    pub untextured: Vec<bool>,
}

impl PlaneImage {
    pub fn width(&self) -> u32 {
        self.pixels.width()
    }

    pub fn height(&self) -> u32 {
        self.pixels.height()
    }

    pub fn untextured_count(&self) -> usize {
        self.untextured.iter().filter(|&&m| m).count()
    }

    pub fn mask_image(&self) -> GrayImage {
        mask_to_image(&self.untextured, self.width(), self.height())
    }

    /// Writes `plane_<id>.png` and `plane_<id>.mask.png` into `dir`.
    pub fn save(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        self.pixels.save(dir.join(format!("plane_{}.png", self.plane_id)))?;
        self.mask_image().save(dir.join(format!("plane_{}.mask.png", self.plane_id)))?;
        Ok(())
    }

    /// Reads the pair written by [`PlaneImage::save`]; a missing mask reads
    /// as fully textured.
    pub fn load(dir: &Path, plane_id: u32) -> Result<PlaneImage> {
        let pixels = image::open(dir.join(format!("plane_{plane_id}.png")))?.to_rgb8();
        let mask_path = dir.join(format!("plane_{plane_id}.mask.png"));
        let untextured = if mask_path.exists() {
            let m = image::open(&mask_path)?.to_luma8();
            if m.dimensions() != pixels.dimensions() {
                return Err(Error::DimensionMismatch {
                    expected: pixels.dimensions(),
                    actual: m.dimensions(),
                });
            }
            image_to_mask(&m)
        } else {
            vec![false; (pixels.width() * pixels.height()) as usize]
        };
        Ok(PlaneImage {
            plane_id,
            pixels,
            meters_per_pixel: 1.0 / PIXELS_PER_METER,
            untextured,
        })
    }
}

/// Renders the faces labeled `Structure(plane_id)` through the plane camera.
pub fn render_plane(plane_id: u32, mesh: &TriMesh, atlas: &TextureAtlas, cam: &PlaneCamera) -> PlaneImage {
    let rm = atlas.render_mesh(mesh, |f| mesh.labels[f] == FaceLabel::Structure(plane_id));
    let fb = render(&rm, &atlas.pages, &cam.clip_from_world(), cam.image_width, cam.image_height);
    PlaneImage {
        plane_id,
        pixels: fb.color,
        meters_per_pixel: 1.0 / PIXELS_PER_METER,
        untextured: fb.untextured,
    }
}

/// Renders every plane of `layout` in parallel.
pub fn render_all_planes(layout: &RoomLayout, mesh: &TriMesh, atlas: &TextureAtlas) -> Vec<(PlaneCamera, PlaneImage)> {
    layout
        .all_planes()
        .par_iter()
        .map(|p| {
            let cam = plane_camera(p, layout.mbb.align);
            let img = render_plane(p.id, mesh, atlas, &cam);
            (cam, img)
        })
        .collect()
}

/// Two-triangle quad over the plane corners. Texture coordinates follow the
/// OBJ convention (`v` up) and are read off the plane camera, so floors and
/// ceilings are addressed through their MBB-aligned camera frame.
pub fn simplify_and_remap(plane: &PlaneInfo, cam: &PlaneCamera) -> TriMesh {
    let pc = cam.camera();
    let (w, h) = (cam.image_width as f64, cam.image_height as f64);
    let texcoords = plane
        .corners
        .iter()
        .map(|c| {
            let (px, _) = pc.project(c).unwrap_or((Vec2::zeros(), 0.0));
            Vec2::new((px.x / w).round(), 1.0 - (px.y / h).round())
        })
        .collect();
    let mut m = TriMesh::new(
        plane.corners.to_vec(),
        vec![[0, 1, 2], [0, 2, 3]],
        vec![FaceLabel::Structure(plane.id); 2],
    );
    m.texcoords = Some(texcoords);
    m
}

/// Render geometry of a remapped quad whose texture is page `page`.
pub fn quad_render_mesh(quad: &TriMesh, page: u32) -> RenderMesh {
    let tc = quad.texcoords.as_deref().unwrap_or(&[]);
    let mut rm = RenderMesh::default();
    for (f, tri) in quad.faces.iter().enumerate() {
        let uv = tri.map(|i| {
            let t = tc.get(i as usize).copied().unwrap_or_default();
            Vec2::new(t.x, 1.0 - t.y)
        });
        rm.push_face(quad.tri(f), page, uv);
    }
    rm
}

/// Renders a remapped quad textured with `image` (masked texels keep alpha 0).
pub fn render_quad(quad: &TriMesh, image: &PlaneImage, cam: &PlaneCamera) -> PlaneImage {
    let page = rgb_to_rgba(&image.pixels, Some(&image.untextured));
    let fb = render(&quad_render_mesh(quad, 0), &[page], &cam.clip_from_world(), cam.image_width, cam.image_height);
    PlaneImage {
        plane_id: image.plane_id,
        pixels: fb.color,
        meters_per_pixel: image.meters_per_pixel,
        untextured: fb.untextured,
    }
}

/// Manifest row describing one rendered plane.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct PlaneRecord {
    pub plane_id: u32,
    pub image: String,
    pub mask: String,
    pub image_width: u32,
    pub image_height: u32,
    pub meters_per_pixel: f64,
    /// Row-major 4x4.
    pub view_matrix: [f64; 16],
    pub projection_matrix: [f64; 16],
    pub camera_position: [f64; 3],
}

fn row_major(m: &Mat4) -> [f64; 16] {
    let mut out = [0.0; 16];
    for r in 0..4 {
        for c in 0..4 {
            out[r * 4 + c] = m[(r, c)];
        }
    }
    out
}

pub fn plane_record(cam: &PlaneCamera, img: &PlaneImage) -> PlaneRecord {
    let p = cam.position();
    PlaneRecord {
        plane_id: img.plane_id,
        image: format!("plane_{}.png", img.plane_id),
        mask: format!("plane_{}.mask.png", img.plane_id),
        image_width: cam.image_width,
        image_height: cam.image_height,
        meters_per_pixel: img.meters_per_pixel,
        view_matrix: row_major(&cam.view),
        projection_matrix: row_major(&cam.projection),
        camera_position: [p.x, p.y, p.z],
    }
}

/// Writes the plane images and `planes.json` into `dir`.
pub fn save_planes(dir: &Path, planes: &[(PlaneCamera, PlaneImage)]) -> Result<()> {
    for (_, img) in planes {
        img.save(dir)?;
    }
    let records: Vec<PlaneRecord> = planes.iter().map(|(c, i)| plane_record(c, i)).collect();
    let path = dir.join("planes.json");
    std::fs::write(&path, serde_json::to_string_pretty(&records)?).map_err(|e| Error::io(&path, e))
}

pub fn load_plane_records(dir: &Path) -> Result<Vec<PlaneRecord>> {
    let path = dir.join("planes.json");
    let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    Ok(serde_json::from_str(&text)?)
}

/// Writes the simplified model (`<stem>.obj`, `<stem>.mtl`) with one
/// material per plane referring to `<texture_dir>/plane_<id>.png`.
pub fn save_simplified_model(dir: &Path, stem: &str, quads: &[TriMesh], texture_dir: &str) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut model = TriMesh::default();
    let mut tcs = Vec::new();
    let mut groups = Vec::new();
    let mut mtl = String::new();
    for q in quads {
        let first = model.num_faces();
        model.append(q);
        tcs.extend_from_slice(q.texcoords.as_deref().unwrap_or(&[]));
        let id = match q.labels.first() {
            Some(FaceLabel::Structure(id)) => *id,
            _ => continue,
        };
        groups.push((format!("plane_{id}"), (first..model.num_faces()).collect::<Vec<_>>()));
        mtl.push_str(&format!("newmtl plane_{id}\nKa 1 1 1\nKd 1 1 1\nmap_Kd {texture_dir}/plane_{id}.png\n\n"));
    }
    model.texcoords = Some(tcs);
    let mtl_name = format!("{stem}.mtl");
    let mut buf = Vec::new();
    write_obj(&model, &mut buf, Some((&mtl_name, &groups)))?;
    let obj = dir.join(format!("{stem}.obj"));
    std::fs::write(&obj, buf).map_err(|e| Error::io(&obj, e))?;
    let mtl_path = dir.join(mtl_name);
    std::fs::write(&mtl_path, mtl).map_err(|e| Error::io(&mtl_path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::layout::Mbb;

    fn wall(w: f64, h: f64) -> PlaneInfo {
        PlaneInfo::wall(0, Vec3::new(0.0, h / 2.0, 0.0), Vec3::z(), w, h)
    }

    #[test]
    fn two_by_one_wall_is_1000_by_500() {
        let c = plane_camera(&wall(2.0, 1.0), Vec2::x());
        assert_eq!((c.image_width, c.image_height), (1000, 500));
    }

    #[test]
    fn camera_sits_at_plane_height() {
        let c = setup_cam(Vec3::new(0.0, 1.22, 0.0), Vec3::z(), 3.0, 2.44, PlaneKind::Wall, Vec2::x());
        assert!((c.position() - Vec3::new(0.0, 1.22, 2.44)).norm() < 1e-12);
    }

    #[test]
    fn floor_up_is_negative_align() {
        let c = setup_cam(Vec3::zeros(), UP, 2.0, 2.0, PlaneKind::Floor, Vec2::x());
        let up = crate::camera::rotation(&c.pose).column(1).into_owned();
        assert!((up - Vec3::new(-1.0, 0.0, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn corners_land_on_image_corners() {
        let p = wall(2.37, 1.13);
        let cam = plane_camera(&p, Vec2::x());
        let pc = cam.camera();
        let (w, h) = (cam.image_width as f64, cam.image_height as f64);
        let want = [(0.0, h), (w, h), (w, 0.0), (0.0, 0.0)];
        for (c, e) in p.corners.iter().zip(want) {
            let (q, _) = pc.project(c).unwrap();
            assert!((q.x - e.0).abs() < 1e-9 && (q.y - e.1).abs() < 1e-9);
        }
    }

    #[test]
    fn quad_has_two_faces_and_unit_texcoords() {
        let p = wall(2.0, 1.0);
        let q = simplify_and_remap(&p, &plane_camera(&p, Vec2::x()));
        assert_eq!((q.num_faces(), q.vertices.len()), (2, 4));
        let tc = q.texcoords.unwrap();
        assert_eq!(tc, vec![Vec2::new(0.0, 0.0), Vec2::new(1.0, 0.0), Vec2::new(1.0, 1.0), Vec2::new(0.0, 1.0)]);
    }

    #[test]
    fn floor_quad_spans_mbb() {
        let mbb = Mbb { width: 4.0, height: 3.0, center: Vec2::new(2.0, 1.5), align: Vec2::x() };
        let layout_walls =
            crate::layout::RoomLayout::from_walls(crate::layout::rectangular_walls(4.0, 3.0, 2.44), 0.0, 2.44).unwrap();
        assert_eq!(layout_walls.mbb.align, mbb.align);
        let f = layout_walls.floor_plane();
        let q = simplify_and_remap(&f, &plane_camera(&f, layout_walls.mbb.align));
        let area: f64 = (0..2).map(|i| q.face_area(i)).sum();
        assert!((area - mbb.area()).abs() < 1e-9);
        let mut tc = q.texcoords.unwrap();
        tc.sort_by(|a, b| (a.x, a.y).partial_cmp(&(b.x, b.y)).unwrap());
        assert_eq!(tc, vec![Vec2::new(0.0, 0.0), Vec2::new(0.0, 1.0), Vec2::new(1.0, 0.0), Vec2::new(1.0, 1.0)]);
    }

    #[test]
    fn render_remap_render_is_fixed_point() {
        let p = wall(1.3, 0.7);
        let cam = plane_camera(&p, Vec2::x());
        let (w, h) = (cam.image_width, cam.image_height);
        let img = PlaneImage {
            plane_id: 0,
            pixels: RgbImage::from_fn(w, h, |x, y| image::Rgb([(x * 13 % 256) as u8, (y * 7 % 256) as u8, ((x ^ y) % 256) as u8])),
            meters_per_pixel: 1.0 / PIXELS_PER_METER,
            untextured: (0..w * h).map(|i| (i % w) < 20 && (i / w) < 30).collect(),
        };
        let q = simplify_and_remap(&p, &cam);
        let once = render_quad(&q, &img, &cam);
        assert_eq!(once, img);
        assert_eq!(render_quad(&q, &once, &cam), once);
    }
}
