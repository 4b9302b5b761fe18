//! Layout-guided mesh processing: filtering the captured mesh against the
//! walls, remeshing the layout planes and combining both into one mesh.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cdt::triangulate_polygon;
use crate::error::{Error, Result};
use crate::geom::{wall_right, xz, Vec2, Vec3, UP};
use crate::layout::{point_in_room, PlaneInfo, RoomLayout};
use crate::mesh::{FaceLabel, TriMesh};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", default)]
pub struct FilterParams {
    /// Faces closer than this to a layout plane are removed (m).
    pub dist_band_near: f64,
    /// Outer edge of the normal-checked band (m).
    pub dist_band_far: f64,
    /// Faces in the outer band roughly parallel to the plane within this
    /// angle are removed (degrees).
    pub normal_angle_max: f64,
}

impl Default for FilterParams {
    fn default() -> Self {
        FilterParams {
            dist_band_near: 0.05,
            dist_band_far: 0.10,
            normal_angle_max: 10.0,
        }
    }
}

impl FilterParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.dist_band_near > 0.0 && self.dist_band_near < self.dist_band_far) {
            return Err(Error::InvalidParameter(format!(
                "need 0 < distBandNear ({}) < distBandFar ({})",
                self.dist_band_near, self.dist_band_far
            )));
        }
        if !(self.normal_angle_max > 0.0 && self.normal_angle_max < 90.0) {
            return Err(Error::InvalidParameter(format!(
                "normalAngleMax {} outside (0, 90)",
                self.normal_angle_max
            )));
        }
        Ok(())
    }
}

/// Decision for a single face against one plane band.
fn band_removes(dist: f64, cos_angle: f64, p: &FilterParams) -> bool {
    let d = dist.abs();
    if d < p.dist_band_near {
        return true;
    }
    if d <= p.dist_band_far {
        // Angle between the face and plane normals as undirected lines.
        let ang = cos_angle.abs().min(1.0).acos().to_degrees();
        return ang <= p.normal_angle_max;
    }
    false
}

fn wall_removes(w: &PlaneInfo, c: &Vec3, nf: &Vec3, p: &FilterParams) -> bool {
    let d = c - w.center;
    let r = wall_right(&w.normal);
    let lateral = d.dot(&r).abs() <= 0.5 * w.width + p.dist_band_near
        && d.y.abs() <= 0.5 * w.height + p.dist_band_near;
    lateral && band_removes(d.dot(&w.normal), nf.dot(&w.normal), p)
}

/// Keeps the object faces that lie inside the room and away from its
/// layout planes. Surviving faces are labeled [`FaceLabel::Object`].
pub fn filter_mesh(mesh: &TriMesh, layout: &RoomLayout, params: &FilterParams) -> TriMesh {
    let keep: Vec<bool> = (0..mesh.num_faces())
        .into_par_iter()
        .map(|f| {
            let c = mesh.face_centroid(f);
            if !point_in_room(xz(&c), layout) {
                return false;
            }
            let nf = mesh.face_normal(f);
            if !nf.iter().all(|x| x.is_finite()) {
                return false;
            }
            if layout.walls.iter().any(|w| wall_removes(w, &c, &nf, params)) {
                return false;
            }
            let cos_y = nf.dot(&UP);
            !(band_removes(c.y - layout.floor_height, cos_y, params)
                || band_removes(layout.ceiling_height - c.y, cos_y, params))
        })
        .collect();
    let mut out = mesh.select(|f| keep[f]);
    out.labels.iter_mut().for_each(|l| *l = FaceLabel::Object);
    out
}

/// Number of equal segments for a span of `len` meters.
fn segments(len: f64, per_meter: f64) -> usize {
    ((len * per_meter).round() as usize).max(1)
}

/// Triangulates one wall rectangle with a regular point lattice.
pub fn remesh_wall(wall: &PlaneInfo, grid_per_meter: f64) -> Result<TriMesh> {
    let (w, h) = (wall.width, wall.height);
    let rect = [Vec2::new(0.0, 0.0), Vec2::new(w, 0.0), Vec2::new(w, h), Vec2::new(0.0, h)];
    let mut pts = Vec::new();
    if grid_per_meter > 0.0 {
        let (nu, nv) = (segments(w, grid_per_meter), segments(h, grid_per_meter));
        for i in 0..=nu {
            for j in 0..=nv {
                pts.push(Vec2::new(w * i as f64 / nu as f64, h * j as f64 / nv as f64));
            }
        }
    }
    let t = triangulate_polygon(&rect, &pts)?;
    let vertices = t
        .points
        .iter()
        .map(|p| wall.local_to_world(p.x, p.y))
        .collect();
    let n = t.triangles.len();
    Ok(TriMesh::new(vertices, t.triangles, vec![FaceLabel::Structure(wall.id); n]))
}

/// Remeshes every wall of the layout into one mesh labeled per wall.
pub fn remesh_walls(layout: &RoomLayout, grid_per_meter: f64) -> Result<TriMesh> {
    let parts: Vec<TriMesh> = layout
        .walls
        .par_iter()
        .map(|w| remesh_wall(w, grid_per_meter))
        .collect::<Result<_>>()?;
    let mut out = TriMesh::default();
    for p in &parts {
        out.append(p);
    }
    Ok(out)
}

/// Floor and ceiling triangulations of the room polygon with a
/// `grid_n` x `grid_n` lattice over the MBB and edge points every
/// `1 / grid_per_meter` meters.
pub fn remesh_horizontal(layout: &RoomLayout, grid_n: usize, grid_per_meter: f64) -> Result<TriMesh> {
    let poly = layout.room_polygon();
    let mbb = &layout.mbb;
    let mut pts = Vec::new();
    if grid_n >= 2 {
        let (a, p) = (mbb.align, mbb.perp());
        for i in 0..grid_n {
            for j in 0..grid_n {
                let s = i as f64 / (grid_n - 1) as f64 - 0.5;
                let t = j as f64 / (grid_n - 1) as f64 - 0.5;
                pts.push(mbb.center + a * (s * mbb.width) + p * (t * mbb.height));
            }
        }
    }
    if grid_per_meter > 0.0 {
        let n = poly.len();
        for k in 0..n {
            let (a, b) = (poly[k], poly[(k + 1) % n]);
            let m = segments((b - a).norm(), grid_per_meter);
            for i in 1..m {
                pts.push(a + (b - a) * (i as f64 / m as f64));
            }
        }
    }
    let t = triangulate_polygon(poly, &pts)?;
    let n = t.triangles.len();
    let at = |y: f64| t.points.iter().map(|p| Vec3::new(p.x, y, p.y)).collect::<Vec<_>>();
    // Counter-clockwise in (x, z) faces -Y, so the floor is flipped.
    let floor = TriMesh::new(
        at(layout.floor_height),
        t.triangles.iter().map(|f| [f[0], f[2], f[1]]).collect(),
        vec![FaceLabel::Structure(layout.floor_id()); n],
    );
    let ceiling = TriMesh::new(
        at(layout.ceiling_height),
        t.triangles.clone(),
        vec![FaceLabel::Structure(layout.ceiling_id()); n],
    );
    let mut out = floor;
    out.append(&ceiling);
    Ok(out)
}

/// Concatenates the filtered object mesh and the structure mesh.
pub fn combine(filtered: &TriMesh, structures: &TriMesh) -> TriMesh {
    let mut out = filtered.clone();
    out.append(structures);
    out
}

/// Full mesh-processing stage: filter, remesh walls and horizontal planes,
/// combine.
pub fn process_mesh(
    original: Option<&TriMesh>,
    layout: &RoomLayout,
    params: &FilterParams,
    wall_grid_per_meter: f64,
    horizontal_grid_n: usize,
) -> Result<TriMesh> {
    params.validate()?;
    let filtered = original
        .map(|m| filter_mesh(m, layout, params))
        .unwrap_or_default();
    let mut structures = remesh_walls(layout, wall_grid_per_meter)?;
    structures.append(&remesh_horizontal(layout, horizontal_grid_n, wall_grid_per_meter)?);
    Ok(combine(&filtered, &structures))
}
