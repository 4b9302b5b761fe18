//! Bounding volume hierarchy over triangles with watertight ray tests.

use crate::geom::Vec3;
use crate::mesh::TriMesh;

const LEAF_SIZE: usize = 4;

#[derive(Clone, Copy, Debug)]
struct Aabb {
    lo: Vec3,
    hi: Vec3,
}

impl Aabb {
    fn empty() -> Self {
        Aabb {
            lo: Vec3::repeat(f64::INFINITY),
            hi: Vec3::repeat(f64::NEG_INFINITY),
        }
    }

    fn grow(&mut self, p: &Vec3) {
        self.lo = self.lo.inf(p);
        self.hi = self.hi.sup(p);
    }

    fn merge(&mut self, o: &Aabb) {
        self.lo = self.lo.inf(&o.lo);
        self.hi = self.hi.sup(&o.hi);
    }

    /// Slab test against `[0, t_max]`.
    fn hit(&self, o: &Vec3, inv: &Vec3, t_max: f64) -> bool {
        let mut t0: f64 = 0.0;
        let mut t1 = t_max;
        for a in 0..3 {
            let mut ta = (self.lo[a] - o[a]) * inv[a];
            let mut tb = (self.hi[a] - o[a]) * inv[a];
            if ta.is_nan() || tb.is_nan() {
                // Ray parallel to the slab and starting on its plane.
                if o[a] < self.lo[a] || o[a] > self.hi[a] {
                    return false;
                }
                continue;
            }
            if ta > tb {
                std::mem::swap(&mut ta, &mut tb);
            }
            t0 = t0.max(ta);
            // Pad for rounding so boundary hits are never culled.
            t1 = t1.min(tb * (1.0 + 4.0 * f64::EPSILON));
            if t0 > t1 {
                return false;
            }
        }
        true
    }
}

#[derive(Clone, Copy, Debug)]
struct Node {
    bounds: Aabb,
    /// Leaf: first index into `order`; inner: index of the left child.
    first: u32,
    /// Leaf: triangle count; inner: 0.
    count: u32,
}

#[derive(Clone, Debug)]
pub struct Bvh {
    tris: Vec<[Vec3; 3]>,
    order: Vec<u32>,
    nodes: Vec<Node>,
}

impl Bvh {
    pub fn build(mesh: &TriMesh) -> Self {
        let tris: Vec<[Vec3; 3]> = (0..mesh.num_faces()).map(|f| mesh.tri(f)).collect();
        Self::from_triangles(tris)
    }

    pub fn from_triangles(tris: Vec<[Vec3; 3]>) -> Self {
        let mut bvh = Bvh {
            order: (0..tris.len() as u32).collect(),
            tris,
            nodes: Vec::new(),
        };
        if !bvh.tris.is_empty() {
            let centroids: Vec<Vec3> = bvh.tris.iter().map(|t| (t[0] + t[1] + t[2]) / 3.0).collect();
            bvh.nodes.push(Node {
                bounds: Aabb::empty(),
                first: 0,
                count: 0,
            });
            bvh.split(0, 0, bvh.tris.len(), &centroids);
        }
        bvh
    }

    fn split(&mut self, node: usize, start: usize, end: usize, centroids: &[Vec3]) {
        let mut b = Aabb::empty();
        let mut cb = Aabb::empty();
        for &i in &self.order[start..end] {
            for p in &self.tris[i as usize] {
                b.grow(p);
            }
            cb.grow(&centroids[i as usize]);
        }
        self.nodes[node].bounds = b;
        let ext = cb.hi - cb.lo;
        if end - start <= LEAF_SIZE || ext.max() <= 0.0 {
            self.nodes[node].first = start as u32;
            self.nodes[node].count = (end - start) as u32;
            return;
        }
        let axis = ext.imax();
        let mid = (start + end) / 2;
        self.order[start..end].select_nth_unstable_by(mid - start, |&a, &b| {
            centroids[a as usize][axis]
                .total_cmp(&centroids[b as usize][axis])
                .then(a.cmp(&b))
        });
        let left = self.nodes.len();
        let empty = Node {
            bounds: Aabb::empty(),
            first: 0,
            count: 0,
        };
        self.nodes.push(empty);
        self.nodes.push(empty);
        self.nodes[node].first = left as u32;
        self.nodes[node].count = 0;
        self.split(left, start, mid, centroids);
        self.split(left + 1, mid, end, centroids);
        let mut bb = self.nodes[left].bounds;
        bb.merge(&self.nodes[left + 1].bounds);
        self.nodes[node].bounds = bb;
    }

    /// True if the segment `origin + t * dir`, `0 < t < t_max`, hits any
    /// triangle other than `skip`.
    pub fn any_hit(&self, origin: &Vec3, dir: &Vec3, t_max: f64, skip: Option<u32>) -> bool {
        if self.nodes.is_empty() {
            return false;
        }
        let inv = Vec3::new(1.0 / dir.x, 1.0 / dir.y, 1.0 / dir.z);
        let mut stack = vec![0usize];
        while let Some(n) = stack.pop() {
            let node = &self.nodes[n];
            if !node.bounds.hit(origin, &inv, t_max) {
                continue;
            }
            if node.count > 0 {
                let s = node.first as usize;
                for &i in &self.order[s..s + node.count as usize] {
                    if Some(i) == skip {
                        continue;
                    }
                    if let Some(t) = intersect_watertight(origin, dir, &self.tris[i as usize]) {
                        if t > 0.0 && t < t_max {
                            return true;
                        }
                    }
                }
            } else {
                stack.push(node.first as usize);
                stack.push(node.first as usize + 1);
            }
        }
        false
    }
}

/// Watertight ray/triangle intersection (Woop, Benthin and Wald, 2013).
/// Returns the ray parameter of the hit, or `None`. Hits on shared edges
/// are reported for exactly one side or both, never neither.
pub fn intersect_watertight(o: &Vec3, d: &Vec3, tri: &[Vec3; 3]) -> Option<f64> {
    let kz = d.iamax();
    let mut kx = (kz + 1) % 3;
    let mut ky = (kx + 1) % 3;
    if d[kz] < 0.0 {
        std::mem::swap(&mut kx, &mut ky);
    }
    let sx = d[kx] / d[kz];
    let sy = d[ky] / d[kz];
    let sz = 1.0 / d[kz];
    let a = tri[0] - o;
    let b = tri[1] - o;
    let c = tri[2] - o;
    let ax = a[kx] - sx * a[kz];
    let ay = a[ky] - sy * a[kz];
    let bx = b[kx] - sx * b[kz];
    let by = b[ky] - sy * b[kz];
    let cx = c[kx] - sx * c[kz];
    let cy = c[ky] - sy * c[kz];
    let u = cx * by - cy * bx;
    let v = ax * cy - ay * cx;
    let w = bx * ay - by * ax;
    if (u < 0.0 || v < 0.0 || w < 0.0) && (u > 0.0 || v > 0.0 || w > 0.0) {
        return None;
    }
    let det = u + v + w;
    if det == 0.0 {
        return None;
    }
    let az = sz * a[kz];
    let bz = sz * b[kz];
    let cz = sz * c[kz];
    let t = (u * az + v * bz + w * cz) / det;
    t.is_finite().then_some(t)
}
