//! Room layouts: wall planes, open/closed classification, convex hull and the
//! minimum-area bounding rectangle used as the texture orientation reference.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::{self, orient2d, point_in_polygon, wall_right, xz, Vec2, Vec3, UP};

/// Endpoint snapping distance for the wall loop check.
pub const LOOP_SNAP: f64 = 0.02;
const MIN_EXTENT: f64 = 1e-4;
const MAX_NORMAL_Y: f64 = 1e-3;
const CORNER_TOL: f64 = 1e-3;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PlaneKind {
    Wall,
    Floor,
    Ceiling,
}

/// A rectangular planar structure of the room.
///
/// Corners are ordered bottom-left, bottom-right, top-right, top-left as seen
/// from inside the room. For floors and ceilings "up" is the MBB align axis.
#[derive(Clone, Debug, PartialEq)]
pub struct PlaneInfo {
    pub id: u32,
    pub center: Vec3,
    pub normal: Vec3,
    pub width: f64,
    pub height: f64,
    pub corners: [Vec3; 4],
    pub kind: PlaneKind,
}

impl PlaneInfo {
    /// Builds a vertical wall with canonical corners. `normal` must be a
    /// horizontal unit vector pointing into the room.
    pub fn wall(id: u32, center: Vec3, normal: Vec3, width: f64, height: f64) -> Self {
        let right = wall_right(&normal);
        let hw = right * (0.5 * width);
        let hh = UP * (0.5 * height);
        PlaneInfo {
            id,
            center,
            normal,
            width,
            height,
            corners: [center - hw - hh, center + hw - hh, center + hw + hh, center - hw + hh],
            kind: PlaneKind::Wall,
        }
    }

    /// In-plane horizontal axis (left to right as seen from inside).
    pub fn right(&self) -> Vec3 {
        (self.corners[1] - self.corners[0]).normalize()
    }

    /// In-plane "up" axis (bottom to top).
    pub fn up(&self) -> Vec3 {
        (self.corners[3] - self.corners[0]).normalize()
    }

    /// Bottom edge endpoints projected on the floor plane.
    pub fn endpoints_xz(&self) -> [Vec2; 2] {
        [xz(&self.corners[0]), xz(&self.corners[1])]
    }

    /// Maps plane-local coordinates (meters from the bottom-left corner) to
    /// world space.
    pub fn local_to_world(&self, u: f64, v: f64) -> Vec3 {
        self.corners[0] + self.right() * u + self.up() * v
    }

    pub fn is_vertical(&self) -> bool {
        self.kind == PlaneKind::Wall
    }
}

/// Minimum-area bounding rectangle of the walls in the X-Z plane.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Mbb {
    pub width: f64,
    pub height: f64,
    pub center: Vec2,
    /// Unit direction of the width edge, polar angle in `[0, pi)`.
    pub align: Vec2,
}

impl Mbb {
    pub fn area(&self) -> f64 {
        self.width * self.height
    }

    /// Unit vector perpendicular to `align` (counter-clockwise).
    pub fn perp(&self) -> Vec2 {
        Vec2::new(-self.align.y, self.align.x)
    }

    /// Rectangle corners, counter-clockwise.
    pub fn corners(&self) -> [Vec2; 4] {
        let a = self.align * (0.5 * self.width);
        let p = self.perp() * (0.5 * self.height);
        let c = self.center;
        [c - a - p, c + a - p, c + a + p, c - a + p]
    }

    /// True if `q` lies within the rectangle inflated by `tol`.
    pub fn contains(&self, q: Vec2, tol: f64) -> bool {
        let d = q - self.center;
        d.dot(&self.align).abs() <= 0.5 * self.width + tol
            && d.dot(&self.perp()).abs() <= 0.5 * self.height + tol
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RoomLayout {
    pub walls: Vec<PlaneInfo>,
    pub floor_height: f64,
    pub ceiling_height: f64,
    pub closed: bool,
    /// Counter-clockwise convex hull of all wall endpoints.
    pub hull: Vec<Vec2>,
    /// Counter-clockwise wall loop, present for closed rooms.
    pub loop_polygon: Option<Vec<Vec2>>,
    pub mbb: Mbb,
}

/// On-disk layout schema.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct LayoutFile {
    pub walls: Vec<WallRecord>,
    pub floor_height: f64,
    pub ceiling_height: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct WallRecord {
    pub id: u32,
    pub center: [f64; 3],
    pub normal: [f64; 3],
    pub width: f64,
    pub height: f64,
    pub corners: [[f64; 3]; 4],
}

impl RoomLayout {
    /// Builds a layout from walls, classifying the room and computing hull
    /// and MBB.
    pub fn from_walls(walls: Vec<PlaneInfo>, floor_height: f64, ceiling_height: f64) -> Result<Self> {
        if walls.is_empty() {
            return Err(Error::EmptyInput("layout has no walls"));
        }
        if !(ceiling_height > floor_height) {
            return Err(Error::MalformedLayout(format!(
                "ceiling height {ceiling_height} not above floor height {floor_height}"
            )));
        }
        let pts: Vec<Vec2> = walls.iter().flat_map(|w| w.endpoints_xz()).collect();
        let hull = match convex_hull_2d(&pts) {
            Ok(h) => h,
            Err(Error::CollinearInput) => collinear_extremes(&pts).to_vec(),
            Err(e) => return Err(e),
        };
        let loop_polygon = detect_loop(&walls);
        let mbb = compute_mbb(&walls)?;
        Ok(RoomLayout {
            walls,
            floor_height,
            ceiling_height,
            closed: loop_polygon.is_some(),
            hull,
            loop_polygon,
            mbb,
        })
    }

    /// Polygon bounding the room: the wall loop when closed, else the hull.
    pub fn room_polygon(&self) -> &[Vec2] {
        self.loop_polygon.as_deref().unwrap_or(&self.hull)
    }

    pub fn wall(&self, id: u32) -> Option<&PlaneInfo> {
        self.walls.iter().find(|w| w.id == id)
    }

    pub fn floor_id(&self) -> u32 {
        self.walls.iter().map(|w| w.id).max().unwrap_or(0) + 1
    }

    pub fn ceiling_id(&self) -> u32 {
        self.floor_id() + 1
    }

    pub fn room_height(&self) -> f64 {
        self.ceiling_height - self.floor_height
    }

    /// Floor plane spanning the MBB. Its "up" axis is the MBB align vector.
    pub fn floor_plane(&self) -> PlaneInfo {
        self.horizontal_plane(true)
    }

    pub fn ceiling_plane(&self) -> PlaneInfo {
        self.horizontal_plane(false)
    }

    fn horizontal_plane(&self, floor: bool) -> PlaneInfo {
        let y = if floor { self.floor_height } else { self.ceiling_height };
        let m = &self.mbb;
        let to3 = |p: Vec2| Vec3::new(p.x, y, p.y);
        let a = m.align * (0.5 * m.width);
        let p = m.perp() * (0.5 * m.height);
        let c = m.center;
        // Bottom-left/right along -perp, "up" along +align.
        let corners = [to3(c - a - p), to3(c - a + p), to3(c + a + p), to3(c + a - p)];
        PlaneInfo {
            id: if floor { self.floor_id() } else { self.ceiling_id() },
            center: to3(c),
            normal: if floor { UP } else { -UP },
            width: m.height,
            height: m.width,
            corners,
            kind: if floor { PlaneKind::Floor } else { PlaneKind::Ceiling },
        }
    }

    /// All planes: walls, then floor and ceiling.
    pub fn all_planes(&self) -> Vec<PlaneInfo> {
        let mut v = self.walls.clone();
        v.push(self.floor_plane());
        v.push(self.ceiling_plane());
        v
    }

    pub fn plane(&self, id: u32) -> Option<PlaneInfo> {
        if id == self.floor_id() {
            Some(self.floor_plane())
        } else if id == self.ceiling_id() {
            Some(self.ceiling_plane())
        } else {
            self.wall(id).cloned()
        }
    }

    pub fn to_file(&self) -> LayoutFile {
        let a3 = |v: &Vec3| [v.x, v.y, v.z];
        LayoutFile {
            walls: self
                .walls
                .iter()
                .map(|w| WallRecord {
                    id: w.id,
                    center: a3(&w.center),
                    normal: a3(&w.normal),
                    width: w.width,
                    height: w.height,
                    corners: [a3(&w.corners[0]), a3(&w.corners[1]), a3(&w.corners[2]), a3(&w.corners[3])],
                })
                .collect(),
            floor_height: self.floor_height,
            ceiling_height: self.ceiling_height,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.to_file()).expect("layout serializes")
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()).map_err(|e| Error::io(path, e))
    }
}

/// Reads and validates a layout JSON file.
pub fn parse_layout(path: &Path) -> Result<RoomLayout> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_layout_str(&text)
}

pub fn parse_layout_str(text: &str) -> Result<RoomLayout> {
    let file: LayoutFile =
        serde_json::from_str(text).map_err(|e| Error::MalformedLayout(e.to_string()))?;
    layout_from_file(&file)
}

pub fn layout_from_file(file: &LayoutFile) -> Result<RoomLayout> {
    let mut walls = Vec::with_capacity(file.walls.len());
    for rec in &file.walls {
        walls.push(validate_wall(rec)?);
    }
    RoomLayout::from_walls(walls, file.floor_height, file.ceiling_height)
}

fn validate_wall(rec: &WallRecord) -> Result<PlaneInfo> {
    let v3 = |a: [f64; 3]| Vec3::new(a[0], a[1], a[2]);
    let finite = rec.center.iter().chain(rec.normal.iter()).all(|x| x.is_finite())
        && rec.corners.iter().flatten().all(|x| x.is_finite())
        && rec.width.is_finite()
        && rec.height.is_finite();
    if !finite {
        return Err(Error::MalformedLayout(format!("wall {} has non-finite values", rec.id)));
    }
    if rec.width <= MIN_EXTENT || rec.height <= MIN_EXTENT {
        return Err(Error::DegenerateWall {
            id: rec.id,
            width: rec.width,
            height: rec.height,
        });
    }
    let mut n = v3(rec.normal);
    let len = n.norm();
    if len < 1e-6 {
        return Err(Error::MalformedLayout(format!("wall {} has a zero normal", rec.id)));
    }
    if (n.y / len).abs() > MAX_NORMAL_Y {
        return Err(Error::NonVerticalWall {
            id: rec.id,
            normal_y: n.y / len,
        });
    }
    n.y = 0.0;
    // Leave already-unit normals untouched so serialization round-trips exactly.
    if (n.norm_squared() - 1.0).abs() > 4.0 * f64::EPSILON {
        n = n.normalize();
    }
    let center = v3(rec.center);
    let wall = PlaneInfo::wall(rec.id, center, n, rec.width, rec.height);

    for c in rec.corners.iter().map(|c| v3(*c)) {
        let off = (c - center).dot(&n);
        if off.abs() > CORNER_TOL {
            return Err(Error::MalformedLayout(format!(
                "wall {} corner is {off:.4} m off its plane",
                rec.id
            )));
        }
        let matched = wall.corners.iter().any(|k| (k - c).norm() <= 10.0 * CORNER_TOL);
        if !matched {
            return Err(Error::MalformedLayout(format!(
                "wall {} corners do not span {} x {} m",
                rec.id, rec.width, rec.height
            )));
        }
    }
    Ok(wall)
}

/// Snaps wall endpoints within [`LOOP_SNAP`] and returns the loop polygon
/// (counter-clockwise) when the walls form one closed cycle.
fn detect_loop(walls: &[PlaneInfo]) -> Option<Vec<Vec2>> {
    let n = walls.len();
    if n < 3 {
        return None;
    }
    let pts: Vec<Vec2> = walls.iter().flat_map(|w| w.endpoints_xz()).collect();
    let mut parent: Vec<usize> = (0..pts.len()).collect();
    fn find(p: &mut [usize], mut i: usize) -> usize {
        while p[i] != i {
            p[i] = p[p[i]];
            i = p[i];
        }
        i
    }
    for i in 0..pts.len() {
        for j in (i + 1)..pts.len() {
            if (pts[i] - pts[j]).norm() <= LOOP_SNAP {
                let (a, b) = (find(&mut parent, i), find(&mut parent, j));
                if a != b {
                    parent[b] = a;
                }
            }
        }
    }
    let roots: Vec<usize> = (0..pts.len()).map(|i| find(&mut parent, i)).collect();
    let mut ids: Vec<usize> = roots.clone();
    ids.sort_unstable();
    ids.dedup();
    let vid = |r: usize| ids.binary_search(&r).unwrap();
    let nv = ids.len();
    let mut pos = vec![Vec2::zeros(); nv];
    let mut cnt = vec![0usize; nv];
    for (i, r) in roots.iter().enumerate() {
        pos[vid(*r)] += pts[i];
        cnt[vid(*r)] += 1;
    }
    for (p, c) in pos.iter_mut().zip(&cnt) {
        *p /= *c as f64;
    }
    let edges: Vec<(usize, usize)> = (0..n).map(|w| (vid(roots[2 * w]), vid(roots[2 * w + 1]))).collect();
    if nv != n || edges.iter().any(|(a, b)| a == b) {
        return None;
    }
    let mut adj = vec![Vec::new(); nv];
    for (w, &(a, b)) in edges.iter().enumerate() {
        adj[a].push(w);
        adj[b].push(w);
    }
    if adj.iter().any(|a| a.len() != 2) {
        return None;
    }
    // Walk the single cycle.
    let mut order = Vec::with_capacity(nv);
    let mut used = vec![false; n];
    let mut v = 0usize;
    for _ in 0..n {
        order.push(v);
        let w = adj[v].iter().copied().find(|&w| !used[w])?;
        used[w] = true;
        let (a, b) = edges[w];
        v = if a == v { b } else { a };
    }
    if v != 0 || used.iter().any(|u| !u) {
        return None;
    }
    let mut poly: Vec<Vec2> = order.into_iter().map(|i| pos[i]).collect();
    if geom::polygon_area(&poly) < 0.0 {
        poly.reverse();
    }
    Some(poly)
}

fn collinear_extremes(pts: &[Vec2]) -> [Vec2; 2] {
    let mut best = (pts[0], pts[0], 0.0);
    for (i, a) in pts.iter().enumerate() {
        for b in &pts[i + 1..] {
            let d = (a - b).norm();
            if d > best.2 {
                best = (*a, *b, d);
            }
        }
    }
    [best.0, best.1]
}

/// Convex hull (Andrew's monotone chain), counter-clockwise, no collinear
/// vertices, starting at the lexicographically smallest point.
pub fn convex_hull_2d(points: &[Vec2]) -> Result<Vec<Vec2>> {
    let mut pts: Vec<Vec2> = points.to_vec();
    if pts.iter().any(|p| !p.x.is_finite() || !p.y.is_finite()) {
        return Err(Error::InvalidParameter("non-finite hull input".into()));
    }
    pts.sort_by(|a, b| a.x.total_cmp(&b.x).then(a.y.total_cmp(&b.y)));
    pts.dedup();
    if pts.len() < 3 {
        return Err(Error::CollinearInput);
    }
    let mut lower: Vec<Vec2> = Vec::new();
    for &p in &pts {
        while lower.len() >= 2 && orient2d(lower[lower.len() - 2], lower[lower.len() - 1], p) <= 0.0 {
            lower.pop();
        }
        lower.push(p);
    }
    let mut upper: Vec<Vec2> = Vec::new();
    for &p in pts.iter().rev() {
        while upper.len() >= 2 && orient2d(upper[upper.len() - 2], upper[upper.len() - 1], p) <= 0.0 {
            upper.pop();
        }
        upper.push(p);
    }
    lower.pop();
    upper.pop();
    lower.extend(upper);
    if lower.len() < 3 {
        return Err(Error::CollinearInput);
    }
    Ok(lower)
}

/// Minimum-area enclosing rectangle of all wall corners projected on X-Z.
pub fn compute_mbb(walls: &[PlaneInfo]) -> Result<Mbb> {
    if walls.is_empty() {
        return Err(Error::EmptyInput("no walls for MBB"));
    }
    let pts: Vec<Vec2> = walls.iter().flat_map(|w| w.corners.iter().map(xz)).collect();
    mbb_of_points(&pts)
}

/// Minimum-area enclosing rectangle of a point set: one side of the optimum
/// lies along a convex hull edge, so every hull edge is tried.
pub fn mbb_of_points(pts: &[Vec2]) -> Result<Mbb> {
    if pts.is_empty() {
        return Err(Error::EmptyInput("no points for MBB"));
    }
    let hull = match convex_hull_2d(pts) {
        Ok(h) => h,
        Err(Error::CollinearInput) => {
            let [a, b] = collinear_extremes(pts);
            let d = b - a;
            let len = d.norm();
            let align = if len > 0.0 { canonical_dir(d / len) } else { Vec2::new(1.0, 0.0) };
            return Ok(Mbb {
                width: len,
                height: 0.0,
                center: (a + b) * 0.5,
                align,
            });
        }
        Err(e) => return Err(e),
    };
    let n = hull.len();
    let mut best: Option<(f64, Mbb)> = None;
    for i in 0..n {
        let e = (hull[(i + 1) % n] - hull[i]).normalize();
        let p = Vec2::new(-e.y, e.x);
        let (mut lo_e, mut hi_e, mut hi_p) = (f64::INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY);
        for q in &hull {
            lo_e = lo_e.min(q.dot(&e));
            hi_e = hi_e.max(q.dot(&e));
            hi_p = hi_p.max(q.dot(&p));
        }
        // Edge i is a supporting line: its points have the minimum perp projection.
        let min_p = hull[i].dot(&p);
        let len_e = hi_e - lo_e;
        let len_p = hi_p - min_p;
        let center = e * (0.5 * (lo_e + hi_e)) + p * (0.5 * (min_p + hi_p));
        let area = len_e * len_p;
        let tie = (len_e - len_p).abs() <= 1e-12 * len_e.max(len_p);
        let mut cands = Vec::with_capacity(2);
        if len_e >= len_p || tie {
            cands.push(Mbb { width: len_e, height: len_p, center, align: canonical_dir(e) });
        }
        if len_p > len_e || tie {
            cands.push(Mbb { width: len_p, height: len_e, center, align: canonical_dir(p) });
        }
        for c in cands {
            best = Some(match best {
                None => (area, c),
                Some((ba, bm)) => {
                    let scale = ba.abs().max(area.abs()).max(f64::MIN_POSITIVE);
                    let tie = (area - ba).abs() <= 1e-12 * scale;
                    if area < ba - 1e-12 * scale || (tie && polar(&c.align) < polar(&bm.align)) {
                        (area, c)
                    } else {
                        (ba, bm)
                    }
                }
            });
        }
    }
    Ok(best.expect("hull has edges").1)
}

fn polar(v: &Vec2) -> f64 {
    v.y.atan2(v.x)
}

/// Maps a direction to the representative with polar angle in `[0, pi)`.
fn canonical_dir(d: Vec2) -> Vec2 {
    let mut d = d;
    if d.y < 0.0 || (d.y == 0.0 && d.x < 0.0) {
        d = -d;
    }
    // Normalize signed zeros.
    Vec2::new(d.x + 0.0, d.y + 0.0)
}

/// Strict even-odd containment in the room polygon (loop or hull).
pub fn point_in_room(p: Vec2, layout: &RoomLayout) -> bool {
    point_in_polygon(p, layout.room_polygon())
}

/// Four inward-facing walls of an axis-aligned `width x depth` room with
/// one corner at the origin, numbered counter-clockwise from the `z = 0` wall.
pub fn rectangular_walls(width: f64, depth: f64, height: f64) -> Vec<PlaneInfo> {
    let (w, d, y) = (width, depth, height / 2.0);
    vec![
        PlaneInfo::wall(0, Vec3::new(w / 2.0, y, 0.0), Vec3::new(0.0, 0.0, 1.0), w, height),
        PlaneInfo::wall(1, Vec3::new(w, y, d / 2.0), Vec3::new(-1.0, 0.0, 0.0), d, height),
        PlaneInfo::wall(2, Vec3::new(w / 2.0, y, d), Vec3::new(0.0, 0.0, -1.0), w, height),
        PlaneInfo::wall(3, Vec3::new(0.0, y, d / 2.0), Vec3::new(1.0, 0.0, 0.0), d, height),
    ]
}
