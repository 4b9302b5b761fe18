//! Divide-and-conquer capture planning: each wall is split in halves along
//! its longer side until every piece can be photographed in one shot from
//! a valid in-room camera position.

use serde::{Deserialize, Serialize};

use crate::camera::{look_at, Camera, CameraIntrinsics};
use crate::error::{Error, Result};
use crate::geom::{angle_deg, xz, Vec3, UP};
use crate::layout::{point_in_room, PlaneInfo, RoomLayout};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", default)]
pub struct PlannerParams {
    /// Largest allowed camera-to-plane distance (m).
    pub max_distance: f64,
    /// Height of every planned camera (m).
    pub camera_height: f64,
    /// Fraction of the field of view held in reserve.
    pub margin: f64,
    /// Recursion stops below this subplane side (m).
    pub min_subplane: f64,
    /// Largest angle between a corner-to-camera ray and the plane normal
    /// (degrees). Matches the texturing angle limit so every planned
    /// subplane is usable by the texturing stage.
    pub max_view_angle_deg: f64,
    /// Angle limit used for walls that cannot be planned under
    /// `max_view_angle_deg` (degrees).
    pub fallback_view_angle_deg: f64,
}

impl Default for PlannerParams {
    fn default() -> Self {
        PlannerParams {
            max_distance: 5.0,
            camera_height: 1.22,
            margin: 0.05,
            min_subplane: 0.1,
            max_view_angle_deg: 45.0,
            fallback_view_angle_deg: 60.0,
        }
    }
}

impl PlannerParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.max_distance > 0.0)
            || !(0.0..0.5).contains(&self.margin)
            || !(self.min_subplane > 0.0)
            || !(self.max_view_angle_deg > 0.0 && self.max_view_angle_deg <= 90.0)
            || !(self.fallback_view_angle_deg >= self.max_view_angle_deg && self.fallback_view_angle_deg <= 90.0)
        {
            return Err(Error::InvalidParameter(format!("invalid planner parameters {self:?}")));
        }
        Ok(())
    }
}

/// Rectangle of a parent plane in its local coordinates (m): `u` runs
/// along the plane's right axis from the bottom-left corner, `v` upward.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct SubPlane {
    pub parent_id: u32,
    pub rect: [f64; 4],
    pub center: Vec3,
    pub width: f64,
    pub height: f64,
}

impl SubPlane {
    fn new(plane: &PlaneInfo, rect: [f64; 4]) -> Self {
        let [u0, v0, u1, v1] = rect;
        SubPlane {
            parent_id: plane.id,
            rect,
            center: plane.local_to_world(0.5 * (u0 + u1), 0.5 * (v0 + v1)),
            width: u1 - u0,
            height: v1 - v0,
        }
    }

    pub fn corners(&self, plane: &PlaneInfo) -> [Vec3; 4] {
        let [u0, v0, u1, v1] = self.rect;
        [
            plane.local_to_world(u0, v0),
            plane.local_to_world(u1, v0),
            plane.local_to_world(u1, v1),
            plane.local_to_world(u0, v1),
        ]
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct PlanEntry {
    pub subplane: SubPlane,
    pub camera_pos: Vec3,
    pub look_at: Vec3,
    pub up: Vec3,
    pub distance: f64,
}

impl PlanEntry {
    pub fn pose(&self) -> crate::geom::Mat4 {
        look_at(self.camera_pos, self.look_at, self.up)
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct CapturePlan {
    pub entries: Vec<PlanEntry>,
}

/// `plan.json` record.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct PlanRecord {
    pub plane_id: u32,
    pub sub_rect: [f64; 4],
    pub camera_pos: [f64; 3],
    pub look_at: [f64; 3],
    pub up: [f64; 3],
    pub distance: f64,
}

impl CapturePlan {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn records(&self) -> Vec<PlanRecord> {
        let a = |v: &Vec3| [v.x, v.y, v.z];
        self.entries
            .iter()
            .map(|e| PlanRecord {
                plane_id: e.subplane.parent_id,
                sub_rect: e.subplane.rect,
                camera_pos: a(&e.camera_pos),
                look_at: a(&e.look_at),
                up: a(&e.up),
                distance: e.distance,
            })
            .collect()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.records()).expect("plan serializes")
    }

    /// Rebuilds a plan from records against its layout.
    pub fn from_records(records: &[PlanRecord], layout: &RoomLayout) -> Result<Self> {
        let v = |a: [f64; 3]| Vec3::new(a[0], a[1], a[2]);
        let entries = records
            .iter()
            .map(|r| {
                let plane = layout
                    .plane(r.plane_id)
                    .ok_or_else(|| Error::MalformedDataset(format!("plan references unknown plane {}", r.plane_id)))?;
                Ok(PlanEntry {
                    subplane: SubPlane::new(&plane, r.sub_rect),
                    camera_pos: v(r.camera_pos),
                    look_at: v(r.look_at),
                    up: v(r.up),
                    distance: r.distance,
                })
            })
            .collect::<Result<_>>()?;
        Ok(CapturePlan { entries })
    }
}

/// Smallest distance at which a `width x height` rectangle fits the
/// frustum with `margin` of the field of view held in reserve. The image
/// height spans the plane's vertical extent (portrait capture).
pub fn optimal_distance(width: f64, height: f64, k: &CameraIntrinsics, margin: f64) -> f64 {
    let tv = (k.vfov() / 2.0).tan();
    let th = (k.hfov() / 2.0).tan();
    let s = 1.0 - margin;
    ((height / 2.0) / (s * tv)).max((width / 2.0) / (s * th))
}

/// Why a candidate camera position was rejected.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Rejection {
    TooFar,
    OutsideRoom,
    OutOfFrame,
    ViewAngle,
}

/// Step used when searching outward for the closest valid distance (m).
pub const DISTANCE_STEP: f64 = 0.01;

/// Camera entry for `sub` at the closest valid distance, or the reason it
/// is not capturable in one shot. The search starts at the larger of the
/// frustum fit and the view-angle bound (the camera height is fixed, so
/// high or low pieces may need to be viewed from further back) and steps
/// outward until the camera is inside the room and every corner is in
/// frame.
pub fn evaluate_subplane(
    plane: &PlaneInfo,
    sub: &SubPlane,
    layout: &RoomLayout,
    k: &CameraIntrinsics,
    params: &PlannerParams,
) -> std::result::Result<PlanEntry, Rejection> {
    let corners = sub.corners(plane);
    let tan_max = params.max_view_angle_deg.to_radians().tan();
    let angle_bound = corners
        .iter()
        .map(|c| {
            let lateral = c - sub.center;
            let dy = params.camera_height - c.y;
            let du = lateral - UP * lateral.dot(&UP);
            (du.norm_squared() + dy * dy).sqrt() / tan_max
        })
        .fold(0.0, f64::max);
    let d0 = optimal_distance(sub.width, sub.height, k, params.margin).max(angle_bound);
    if d0 > params.max_distance {
        return Err(Rejection::TooFar);
    }
    let steps = ((params.max_distance - d0) / DISTANCE_STEP).floor() as usize;
    let mut first = None;
    for i in 0..=steps {
        let d = d0 + i as f64 * DISTANCE_STEP;
        match place(plane, sub, &corners, d, layout, k, params) {
            Ok(e) => return Ok(e),
            Err(why) => {
                first.get_or_insert(why);
                if why == Rejection::OutsideRoom {
                    break;
                }
            }
        }
    }
    Err(first.unwrap_or(Rejection::TooFar))
}

fn place(
    plane: &PlaneInfo,
    sub: &SubPlane,
    corners: &[Vec3; 4],
    d: f64,
    layout: &RoomLayout,
    k: &CameraIntrinsics,
    params: &PlannerParams,
) -> std::result::Result<PlanEntry, Rejection> {
    let mut pos = sub.center + plane.normal * d;
    pos.y = params.camera_height;
    if !point_in_room(xz(&pos), layout) {
        return Err(Rejection::OutsideRoom);
    }
    let entry = PlanEntry {
        subplane: *sub,
        camera_pos: pos,
        look_at: sub.center,
        up: UP,
        distance: d,
    };
    let cam = Camera::new(*k, entry.pose());
    for c in corners {
        let Some((px, _)) = cam.project(c) else {
            return Err(Rejection::OutOfFrame);
        };
        let inside = px.x > 0.0 && px.y > 0.0 && px.x < k.width as f64 && px.y < k.height as f64;
        if !inside {
            return Err(Rejection::OutOfFrame);
        }
        if angle_deg(&(pos - c), &plane.normal) > params.max_view_angle_deg {
            return Err(Rejection::ViewAngle);
        }
    }
    Ok(entry)
}

/// Plans one wall. Pieces are split in half along their longer side
/// (ties split the width) until each is capturable. The view-angle limit
/// is a preference: a wall that cannot be planned under it (for example
/// in a room shallower than the wall is tall) is planned again under the
/// looser fallback limit.
pub fn divide_and_conquer(
    plane: &PlaneInfo,
    layout: &RoomLayout,
    k: &CameraIntrinsics,
    params: &PlannerParams,
) -> Result<CapturePlan> {
    params.validate()?;
    k.validate()?;
    if !plane.is_vertical() {
        return Err(Error::InvalidParameter(format!("plane {} is not a wall", plane.id)));
    }
    match split_wall(plane, layout, k, params) {
        Err(Error::Unplannable { .. }) if params.fallback_view_angle_deg > params.max_view_angle_deg => {
            let loose = PlannerParams { max_view_angle_deg: params.fallback_view_angle_deg, ..*params };
            split_wall(plane, layout, k, &loose)
        }
        r => r,
    }
}

fn split_wall(plane: &PlaneInfo, layout: &RoomLayout, k: &CameraIntrinsics, params: &PlannerParams) -> Result<CapturePlan> {
    let mut entries = Vec::new();
    let mut stack = vec![[0.0, 0.0, plane.width, plane.height]];
    while let Some(rect) = stack.pop() {
        let sub = SubPlane::new(plane, rect);
        match evaluate_subplane(plane, &sub, layout, k, params) {
            Ok(e) => entries.push(e),
            Err(why) => {
                let [u0, v0, u1, v1] = rect;
                let split_u = sub.width >= sub.height;
                let half = if split_u { sub.width } else { sub.height } / 2.0;
                if half < params.min_subplane {
                    return Err(Error::Unplannable {
                        plane_id: plane.id,
                        reason: format!(
                            "no valid position for a {:.3} x {:.3} m piece ({why:?})",
                            sub.width, sub.height
                        ),
                    });
                }
                if split_u {
                    let um = 0.5 * (u0 + u1);
                    stack.push([um, v0, u1, v1]);
                    stack.push([u0, v0, um, v1]);
                } else {
                    let vm = 0.5 * (v0 + v1);
                    stack.push([u0, v0, u1, vm]);
                    stack.push([u0, vm, u1, v1]);
                }
            }
        }
    }
    // Raster order: top row first, then left to right.
    entries.sort_by(|a, b| {
        b.subplane.rect[3]
            .total_cmp(&a.subplane.rect[3])
            .then(a.subplane.rect[0].total_cmp(&b.subplane.rect[0]))
    });
    Ok(CapturePlan { entries })
}

/// Plans every wall in id order; unplannable walls are reported and
/// skipped.
pub fn plan_room(layout: &RoomLayout, k: &CameraIntrinsics, params: &PlannerParams) -> (CapturePlan, Vec<Error>) {
    let mut walls: Vec<&PlaneInfo> = layout.walls.iter().collect();
    walls.sort_by_key(|w| w.id);
    let mut plan = CapturePlan::default();
    let mut failures = Vec::new();
    for w in walls {
        match divide_and_conquer(w, layout, k, params) {
            Ok(p) => plan.entries.extend(p.entries),
            Err(e) => failures.push(e),
        }
    }
    (plan, failures)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rect_room(w: f64, d: f64) -> RoomLayout {
        RoomLayout::from_walls(crate::layout::rectangular_walls(w, d, 2.44), 0.0, 2.44).unwrap()
    }

    #[test]
    fn unit_square_distance() {
        let k = CameraIntrinsics { fx: 500.0, fy: 500.0, cx: 250.0, cy: 250.0, width: 500, height: 500 };
        assert!((optimal_distance(1.0, 1.0, &k, 0.0) - 1.0).abs() < 1e-12);
        assert!((optimal_distance(2.0, 2.0, &k, 0.0) - 2.0).abs() < 1e-12);
    }

    #[test]
    fn four_by_four_room() {
        let l = rect_room(4.0, 4.0);
        let (plan, fails) = plan_room(&l, &CameraIntrinsics::phone(), &PlannerParams::default());
        assert!(fails.is_empty());
        assert_eq!(plan.len(), 8);
        for e in &plan.entries {
            assert!(point_in_room(xz(&e.camera_pos), &l));
            assert!((e.subplane.width - 2.0).abs() < 1e-12);
        }
    }

    #[test]
    fn shallow_room_uses_fallback_angle() {
        let l = rect_room(1.0, 1.0);
        let (plan, fails) = plan_room(&l, &CameraIntrinsics::phone(), &PlannerParams::default());
        assert!(fails.is_empty());
        assert!(plan.len() >= 4);
        let strict = PlannerParams { fallback_view_angle_deg: 45.0, ..Default::default() };
        assert_eq!(plan_room(&l, &CameraIntrinsics::phone(), &strict).1.len(), 4);
    }

    #[test]
    fn corridor_is_unplannable() {
        let l = rect_room(4.0, 0.3);
        let r = divide_and_conquer(&l.walls[0], &l, &CameraIntrinsics::phone(), &PlannerParams::default());
        assert!(matches!(r, Err(Error::Unplannable { .. })));
    }

    #[test]
    fn wide_wall_splits_in_two() {
        let l = rect_room(6.0, 4.0);
        let p = divide_and_conquer(&l.walls[0], &l, &CameraIntrinsics::phone(), &PlannerParams::default()).unwrap();
        assert_eq!(p.len(), 2);
        assert_eq!(p.entries[0].subplane.rect, [0.0, 0.0, 3.0, 2.44]);
    }
}
