//! Per (image, face) visibility and quality scores.

use rayon::prelude::*;

use crate::bvh::Bvh;
use crate::camera::{Camera, Frame};
use crate::geom::{Vec2, Vec3};
use crate::imageops::{luma, sobel_magnitude};
use crate::mesh::TriMesh;

/// Ray hits closer than this fraction of the vertex distance count as
/// occluders; the remainder absorbs hits on faces sharing the vertex.
const RAY_END: f64 = 1.0 - 1e-6;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Candidate {
    pub image: u32,
    /// Projected area times mean gradient magnitude.
    pub score: f64,
    /// Projected area in pixels.
    pub area: f64,
}

/// Sparse images x faces table, stored by face column.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ViewCandidateTable {
    pub num_images: usize,
    pub columns: Vec<Vec<Candidate>>,
}

impl ViewCandidateTable {
    pub fn num_faces(&self) -> usize {
        self.columns.len()
    }

    pub fn num_entries(&self) -> usize {
        self.columns.iter().map(Vec::len).sum()
    }

    pub fn entry(&self, image: u32, face: usize) -> Option<&Candidate> {
        self.columns[face].iter().find(|c| c.image == image)
    }

    /// Scores of one column scaled so the best entry is 1. Columns whose
    /// scores are all zero (textureless footprints) fall back to areas.
    pub fn normalized(&self, face: usize) -> Vec<(u32, f64)> {
        let col = &self.columns[face];
        let max_s = col.iter().map(|c| c.score).fold(0.0, f64::max);
        if max_s > 0.0 {
            return col.iter().map(|c| (c.image, c.score / max_s)).collect();
        }
        let max_a = col.iter().map(|c| c.area).fold(0.0, f64::max);
        col.iter()
            .map(|c| (c.image, if max_a > 0.0 { c.area / max_a } else { 1.0 }))
            .collect()
    }

    /// Distinct images used by at least one entry.
    pub fn label_space(&self) -> usize {
        let mut seen = vec![false; self.num_images];
        for c in self.columns.iter().flatten() {
            seen[c.image as usize] = true;
        }
        seen.iter().filter(|&&s| s).count()
    }
}

/// True if every vertex of `face` projects into the image with positive
/// depth and no other triangle blocks the vertex-to-camera segments.
pub fn occlusion_test(face: usize, cam: &Camera, mesh: &TriMesh, bvh: &Bvh) -> bool {
    let tri = mesh.tri(face);
    project_all(cam, &tri).is_some() && !blocked(face, cam, &tri, bvh)
}

fn project_all(cam: &Camera, tri: &[Vec3; 3]) -> Option<[Vec2; 3]> {
    let mut out = [Vec2::zeros(); 3];
    for (k, v) in tri.iter().enumerate() {
        let (px, _) = cam.project(v)?;
        if !cam.in_bounds(&px) {
            return None;
        }
        out[k] = px;
    }
    Some(out)
}

fn blocked(face: usize, cam: &Camera, tri: &[Vec3; 3], bvh: &Bvh) -> bool {
    let c = cam.center();
    tri.iter().any(|v| bvh.any_hit(&c, &(v - c), RAY_END, Some(face as u32)))
}

/// Mean of `grad` over pixel centers inside the projected triangle; the
/// pixel under the centroid stands in for sub-pixel footprints.
fn footprint_mean(px: &[Vec2; 3], grad: &[f64], w: usize, h: usize) -> f64 {
    let lo = px[0].inf(&px[1]).inf(&px[2]);
    let hi = px[0].sup(&px[1]).sup(&px[2]);
    let x0 = (lo.x - 0.5).floor().max(0.0) as usize;
    let y0 = (lo.y - 0.5).floor().max(0.0) as usize;
    let x1 = ((hi.x - 0.5).ceil().max(0.0) as usize).min(w - 1);
    let y1 = ((hi.y - 0.5).ceil().max(0.0) as usize).min(h - 1);
    let e = |a: &Vec2, b: &Vec2, p: &Vec2| (b.x - a.x) * (p.y - a.y) - (b.y - a.y) * (p.x - a.x);
    let area = e(&px[0], &px[1], &px[2]);
    let (mut sum, mut n) = (0.0, 0usize);
    if area != 0.0 {
        for y in y0..=y1 {
            for x in x0..=x1 {
                let p = Vec2::new(x as f64 + 0.5, y as f64 + 0.5);
                let (a, b, c) = (e(&px[1], &px[2], &p), e(&px[2], &px[0], &p), e(&px[0], &px[1], &p));
                let inside = if area > 0.0 { a >= 0.0 && b >= 0.0 && c >= 0.0 } else { a <= 0.0 && b <= 0.0 && c <= 0.0 };
                if inside {
                    sum += grad[y * w + x];
                    n += 1;
                }
            }
        }
    }
    if n == 0 {
        let c = (px[0] + px[1] + px[2]) / 3.0;
        let x = (c.x.floor().max(0.0) as usize).min(w - 1);
        let y = (c.y.floor().max(0.0) as usize).min(h - 1);
        return grad[y * w + x];
    }
    sum / n as f64
}

/// Builds the candidate table of `mesh` over `frames` (image id = index).
pub fn build_candidate_table(mesh: &TriMesh, frames: &[Frame], angle_max_deg: f64) -> ViewCandidateTable {
    let bvh = Bvh::build(mesh);
    let cos_max = angle_max_deg.to_radians().cos();
    let centroids: Vec<Vec3> = (0..mesh.num_faces()).map(|f| mesh.face_centroid(f)).collect();
    let normals: Vec<Vec3> = (0..mesh.num_faces()).map(|f| mesh.face_normal(f)).collect();
    let rows: Vec<Vec<(usize, Candidate)>> = frames
        .par_iter()
        .enumerate()
        .map(|(i, frame)| {
            let cam = frame.camera();
            let (w, h) = (frame.color.width() as usize, frame.color.height() as usize);
            let grad = sobel_magnitude(&luma(&frame.color), w, h);
            let center = cam.center();
            let mut row = Vec::new();
            for f in 0..mesh.num_faces() {
                let to_cam = center - centroids[f];
                let dist = to_cam.norm();
                // Front-facing and within the viewing-angle limit.
                if dist == 0.0 || to_cam.dot(&normals[f]) < cos_max * dist {
                    continue;
                }
                let tri = mesh.tri(f);
                let Some(px) = project_all(&cam, &tri) else { continue };
                if blocked(f, &cam, &tri, &bvh) {
                    continue;
                }
                let area = 0.5 * ((px[1] - px[0]).perp(&(px[2] - px[0]))).abs();
                let g = footprint_mean(&px, &grad, w, h);
                row.push((
                    f,
                    Candidate {
                        image: i as u32,
                        score: area * g,
                        area,
                    },
                ));
            }
            row
        })
        .collect();
    let mut columns = vec![Vec::new(); mesh.num_faces()];
    for row in rows {
        for (f, c) in row {
            columns[f].push(c);
        }
    }
    ViewCandidateTable {
        num_images: frames.len(),
        columns,
    }
}
