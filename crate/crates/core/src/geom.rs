//! Small geometric toolkit shared by every stage: vector aliases, exact
//! orientation predicates and 2D polygon helpers in the X-Z floor plane.

use nalgebra::{Matrix4, Vector2, Vector3};

pub type Vec2 = Vector2<f64>;
pub type Vec3 = Vector3<f64>;
pub type Mat4 = Matrix4<f64>;

/// World up axis. X-Z is the floor plane.
pub const UP: Vec3 = Vec3::new(0.0, 1.0, 0.0);

/// Projects a world point onto the floor plane, returning `(x, z)`.
#[inline]
pub fn xz(p: &Vec3) -> Vec2 {
    Vec2::new(p.x, p.z)
}

/// Exact sign of the orientation determinant of `(a, b, c)`.
///
/// Positive when `c` lies to the left of the directed line `a -> b`.
#[inline]
pub fn orient2d(a: Vec2, b: Vec2, c: Vec2) -> f64 {
    robust::orient2d(coord(a), coord(b), coord(c))
}

/// Exact in-circle predicate. Positive when `d` lies strictly inside the
/// circle through the counter-clockwise triangle `(a, b, c)`.
#[inline]
pub fn incircle(a: Vec2, b: Vec2, c: Vec2, d: Vec2) -> f64 {
    robust::incircle(coord(a), coord(b), coord(c), coord(d))
}

#[inline]
fn coord(p: Vec2) -> robust::Coord<f64> {
    robust::Coord { x: p.x, y: p.y }
}

/// Signed polygon area (positive for counter-clockwise vertex order).
pub fn polygon_area(poly: &[Vec2]) -> f64 {
    let n = poly.len();
    if n < 3 {
        return 0.0;
    }
    let mut acc = 0.0;
    for i in 0..n {
        let a = poly[i];
        let b = poly[(i + 1) % n];
        acc += a.x * b.y - b.x * a.y;
    }
    0.5 * acc
}

/// True if `p` lies on the closed segment `a-b` (exact collinearity).
pub fn on_segment(p: Vec2, a: Vec2, b: Vec2) -> bool {
    if orient2d(a, b, p) != 0.0 {
        return false;
    }
    p.x >= a.x.min(b.x) && p.x <= a.x.max(b.x) && p.y >= a.y.min(b.y) && p.y <= a.y.max(b.y)
}

/// Even-odd point-in-polygon test. Points on the boundary are reported as
/// outside.
pub fn point_in_polygon(p: Vec2, poly: &[Vec2]) -> bool {
    let n = poly.len();
    if n < 3 {
        return false;
    }
    let mut inside = false;
    for i in 0..n {
        let a = poly[i];
        let b = poly[(i + 1) % n];
        if on_segment(p, a, b) {
            return false;
        }
        // Half-open rule on y so shared vertices are counted once.
        if (a.y > p.y) != (b.y > p.y) {
            let o = orient2d(a, b, p);
            if (b.y > a.y && o > 0.0) || (b.y < a.y && o < 0.0) {
                inside = !inside;
            }
        }
    }
    inside
}

/// Euclidean distance from `p` to the segment `a-b`, and the closest point.
pub fn closest_on_segment(p: Vec2, a: Vec2, b: Vec2) -> (f64, Vec2) {
    let ab = b - a;
    let len2 = ab.norm_squared();
    let t = if len2 > 0.0 {
        ((p - a).dot(&ab) / len2).clamp(0.0, 1.0)
    } else {
        0.0
    };
    let q = a + ab * t;
    ((p - q).norm(), q)
}

/// True if the open segments `a-b` and `c-d` cross at a single interior point.
pub fn segments_cross(a: Vec2, b: Vec2, c: Vec2, d: Vec2) -> bool {
    let o1 = orient2d(a, b, c);
    let o2 = orient2d(a, b, d);
    let o3 = orient2d(c, d, a);
    let o4 = orient2d(c, d, b);
    o1 * o2 < 0.0 && o3 * o4 < 0.0
}

pub fn triangle_area3(a: &Vec3, b: &Vec3, c: &Vec3) -> f64 {
    0.5 * (b - a).cross(&(c - a)).norm()
}

/// Angle in degrees between two vectors.
pub fn angle_deg(a: &Vec3, b: &Vec3) -> f64 {
    let d = a.normalize().dot(&b.normalize()).clamp(-1.0, 1.0);
    d.acos().to_degrees()
}

/// Right-handed orthonormal frame for a vertical wall with inward normal `n`:
/// returns the in-plane horizontal axis pointing to the viewer's right when
/// looking at the wall from inside the room.
#[inline]
pub fn wall_right(n: &Vec3) -> Vec3 {
    UP.cross(n).normalize()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn square_area_and_containment() {
        let sq = [
            Vec2::new(0.0, 0.0),
            Vec2::new(1.0, 0.0),
            Vec2::new(1.0, 1.0),
            Vec2::new(0.0, 1.0),
        ];
        assert_eq!(polygon_area(&sq), 1.0);
        assert!(point_in_polygon(Vec2::new(0.5, 0.5), &sq));
        assert!(!point_in_polygon(Vec2::new(1.0, 0.5), &sq));
        assert!(!point_in_polygon(Vec2::new(0.0, 0.0), &sq));
        assert!(!point_in_polygon(Vec2::new(-0.5, 0.5), &sq));
    }

    #[test]
    fn wall_right_axis() {
        let r = wall_right(&Vec3::new(0.0, 0.0, 1.0));
        assert!((r - Vec3::new(1.0, 0.0, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn crossing_segments() {
        let a = Vec2::new(0.0, 0.0);
        let b = Vec2::new(1.0, 1.0);
        assert!(segments_cross(a, b, Vec2::new(0.0, 1.0), Vec2::new(1.0, 0.0)));
        assert!(!segments_cross(a, b, Vec2::new(1.0, 1.0), Vec2::new(2.0, 0.0)));
    }
}
