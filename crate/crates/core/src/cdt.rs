//! Constrained Delaunay triangulation of a simple polygon with interior
//! Steiner points.
//!
//! Points are inserted with Bowyer-Watson into a super-triangle. Boundary
//! edges are then recovered by removing the triangles they cross and
//! re-triangulating both pseudo-polygons with the Delaunay choice. Triangles
//! outside the boundary are removed by flood fill. All decisions use exact
//! orientation and in-circle predicates.

use std::collections::{HashMap, HashSet};

use crate::error::{Error, Result};
use crate::geom::{closest_on_segment, incircle, orient2d, point_in_polygon, polygon_area, segments_cross, Vec2};

/// Distance under which a Steiner point is moved onto a boundary edge.
pub const SNAP_DIST: f64 = 1e-6;
/// Distance under which two input points are treated as one.
const MERGE_DIST: f64 = 1e-9;

#[derive(Clone, Debug, Default)]
pub struct Triangulation {
    pub points: Vec<Vec2>,
    /// Counter-clockwise triangles indexing `points`.
    pub triangles: Vec<[u32; 3]>,
    /// Boundary sub-segments, as undirected vertex pairs `(min, max)`.
    pub constraints: Vec<(u32, u32)>,
}

impl Triangulation {
    pub fn area(&self) -> f64 {
        self.triangles
            .iter()
            .map(|t| {
                let [a, b, c] = t.map(|i| self.points[i as usize]);
                0.5 * ((b - a).perp(&(c - a)))
            })
            .sum()
    }

    /// Undirected edges of the triangulation, sorted.
    pub fn edges(&self) -> Vec<(u32, u32)> {
        let mut e: Vec<(u32, u32)> = self
            .triangles
            .iter()
            .flat_map(|t| (0..3).map(move |k| (t[k].min(t[(k + 1) % 3]), t[k].max(t[(k + 1) % 3]))))
            .collect();
        e.sort_unstable();
        e.dedup();
        e
    }
}

/// Checks that a closed polygon has no crossing or touching non-adjacent edges.
pub fn check_simple(poly: &[Vec2]) -> Result<()> {
    let n = poly.len();
    if n < 3 {
        return Err(Error::CollinearInput);
    }
    for i in 0..n {
        let (a, b) = (poly[i], poly[(i + 1) % n]);
        if a == b {
            return Err(Error::SelfIntersectingLoop);
        }
        for j in (i + 1)..n {
            let (c, d) = (poly[j], poly[(j + 1) % n]);
            let adjacent = j == i + 1 || (i == 0 && j == n - 1);
            if adjacent {
                // Adjacent edges may only share their common endpoint.
                let (shared, p, q) = if j == i + 1 { (b, a, d) } else { (a, b, c) };
                let _ = shared;
                if orient2d(p, shared, q) == 0.0 && (q - shared).dot(&(p - shared)) > 0.0 {
                    return Err(Error::SelfIntersectingLoop);
                }
                continue;
            }
            if segments_cross(a, b, c, d)
                || crate::geom::on_segment(c, a, b)
                || crate::geom::on_segment(d, a, b)
                || crate::geom::on_segment(a, c, d)
                || crate::geom::on_segment(b, c, d)
            {
                return Err(Error::SelfIntersectingLoop);
            }
        }
    }
    Ok(())
}

/// Triangulates the polygon `boundary` (either orientation) with `interior`
/// Steiner points. Points outside the polygon are discarded; points within
/// [`SNAP_DIST`] of an edge are moved onto it and split the edge.
pub fn triangulate_polygon(boundary: &[Vec2], interior: &[Vec2]) -> Result<Triangulation> {
    check_simple(boundary)?;
    if polygon_area(boundary) == 0.0 {
        return Err(Error::CollinearInput);
    }
    let mut poly: Vec<Vec2> = boundary.to_vec();
    if polygon_area(&poly) < 0.0 {
        poly.reverse();
    }
    let n = poly.len();

    // Snap Steiner points and attach on-edge points to their edge.
    let mut on_edge: Vec<Vec<(f64, Vec2)>> = vec![Vec::new(); n];
    let mut free: Vec<Vec2> = Vec::new();
    'pts: for &p in interior {
        if !p.x.is_finite() || !p.y.is_finite() {
            return Err(Error::InvalidParameter("non-finite Steiner point".into()));
        }
        for k in 0..n {
            let (a, b) = (poly[k], poly[(k + 1) % n]);
            let (d, q) = closest_on_segment(p, a, b);
            if d <= SNAP_DIST {
                if (q - a).norm() <= SNAP_DIST || (q - b).norm() <= SNAP_DIST {
                    continue 'pts;
                }
                let t = (q - a).norm() / (b - a).norm();
                on_edge[k].push((t, q));
                continue 'pts;
            }
        }
        if point_in_polygon(p, &poly) {
            free.push(p);
        }
    }

    // Boundary vertex chain with edge splits.
    let mut points: Vec<Vec2> = Vec::new();
    let mut chain: Vec<u32> = Vec::new();
    for k in 0..n {
        chain.push(points.len() as u32);
        points.push(poly[k]);
        let e = &mut on_edge[k];
        e.sort_by(|x, y| x.0.total_cmp(&y.0));
        let mut last = poly[k];
        for &(_, q) in e.iter() {
            if (q - last).norm() > MERGE_DIST {
                chain.push(points.len() as u32);
                points.push(q);
                last = q;
            }
        }
        if (last - poly[(k + 1) % n]).norm() <= MERGE_DIST && last != poly[k] {
            chain.pop();
            points.pop();
        }
    }
    let boundary_count = points.len();
    free.sort_by(|a, b| a.x.total_cmp(&b.x).then(a.y.total_cmp(&b.y)));
    let mut kept: Vec<Vec2> = Vec::new();
    for p in free {
        let dup = kept.iter().rev().take_while(|q| p.x - q.x <= MERGE_DIST).any(|q| (p - q).norm() <= MERGE_DIST);
        if !dup {
            kept.push(p);
        }
    }
    points.extend(kept);

    let mut tri = Incremental::new(&points);
    for i in 0..points.len() {
        tri.insert(i as u32);
    }
    let m = chain.len();
    let mut constraints = Vec::with_capacity(m);
    for k in 0..m {
        let (a, b) = (chain[k], chain[(k + 1) % m]);
        tri.insert_constraint(a, b)?;
        constraints.push((a.min(b), a.max(b)));
    }
    tri.remove_exterior();
    tri.lawson_flip();

    let mut triangles: Vec<[u32; 3]> = tri.alive_triangles();
    // Deterministic output order.
    for t in triangles.iter_mut() {
        let r = (0..3).min_by_key(|&k| t[k]).unwrap();
        *t = [t[r], t[(r + 1) % 3], t[(r + 2) % 3]];
    }
    triangles.sort_unstable();
    constraints.sort_unstable();
    let _ = boundary_count;
    Ok(Triangulation {
        points,
        triangles,
        constraints,
    })
}

/// Working triangulation: real points followed by three super vertices.
struct Incremental {
    pts: Vec<Vec2>,
    tris: Vec<[u32; 3]>,
    alive: Vec<bool>,
    edges: HashMap<(u32, u32), u32>,
    constrained: HashSet<(u32, u32)>,
    n_real: u32,
    last: u32,
}

impl Incremental {
    fn new(points: &[Vec2]) -> Self {
        let (mut lo, mut hi) = (points[0], points[0]);
        for p in points {
            lo = lo.inf(p);
            hi = hi.sup(p);
        }
        let c = (lo + hi) * 0.5;
        let m = (hi - lo).max().max(1.0);
        let mut pts = points.to_vec();
        let n_real = pts.len() as u32;
        pts.push(Vec2::new(c.x - 40.0 * m, c.y - 30.0 * m));
        pts.push(Vec2::new(c.x + 40.0 * m, c.y - 30.0 * m));
        pts.push(Vec2::new(c.x, c.y + 40.0 * m));
        let mut s = Incremental {
            pts,
            tris: Vec::new(),
            alive: Vec::new(),
            edges: HashMap::new(),
            constrained: HashSet::new(),
            n_real,
            last: 0,
        };
        s.add([n_real, n_real + 1, n_real + 2]);
        s
    }

    fn p(&self, i: u32) -> Vec2 {
        self.pts[i as usize]
    }

    fn add(&mut self, t: [u32; 3]) -> u32 {
        let id = self.tris.len() as u32;
        for k in 0..3 {
            self.edges.insert((t[k], t[(k + 1) % 3]), id);
        }
        self.tris.push(t);
        self.alive.push(true);
        self.last = id;
        id
    }

    fn remove(&mut self, id: u32) {
        let t = self.tris[id as usize];
        for k in 0..3 {
            let e = (t[k], t[(k + 1) % 3]);
            if self.edges.get(&e) == Some(&id) {
                self.edges.remove(&e);
            }
        }
        self.alive[id as usize] = false;
    }

    fn neighbor(&self, a: u32, b: u32) -> Option<u32> {
        self.edges.get(&(b, a)).copied()
    }

    fn locate(&self, q: Vec2) -> u32 {
        let mut cur = self.last;
        if !self.alive[cur as usize] {
            cur = self.alive.iter().rposition(|&a| a).unwrap() as u32;
        }
        let limit = 4 * self.tris.len() + 16;
        'walk: for _ in 0..limit {
            let t = self.tris[cur as usize];
            for k in 0..3 {
                let (a, b) = (t[k], t[(k + 1) % 3]);
                if orient2d(self.p(a), self.p(b), q) < 0.0 {
                    match self.neighbor(a, b) {
                        Some(nb) => {
                            cur = nb;
                            continue 'walk;
                        }
                        None => break 'walk,
                    }
                }
            }
            return cur;
        }
        // Fallback scan.
        (0..self.tris.len() as u32)
            .find(|&i| {
                self.alive[i as usize] && {
                    let t = self.tris[i as usize];
                    (0..3).all(|k| orient2d(self.p(t[k]), self.p(t[(k + 1) % 3]), q) >= 0.0)
                }
            })
            .expect("point lies inside the super-triangle")
    }

    fn in_circle(&self, t: u32, q: Vec2) -> bool {
        let [a, b, c] = self.tris[t as usize];
        incircle(self.p(a), self.p(b), self.p(c), q) > 0.0
    }

    fn insert(&mut self, i: u32) {
        let q = self.p(i);
        let start = self.locate(q);
        let mut cavity = vec![start];
        let mut in_cavity: HashSet<u32> = HashSet::from([start]);
        let mut k = 0;
        while k < cavity.len() {
            let t = self.tris[cavity[k] as usize];
            k += 1;
            for e in 0..3 {
                if let Some(nb) = self.neighbor(t[e], t[(e + 1) % 3]) {
                    if !in_cavity.contains(&nb) && self.in_circle(nb, q) {
                        in_cavity.insert(nb);
                        cavity.push(nb);
                    }
                }
            }
        }
        let mut boundary = Vec::new();
        for &c in &cavity {
            let t = self.tris[c as usize];
            for e in 0..3 {
                let (a, b) = (t[e], t[(e + 1) % 3]);
                match self.neighbor(a, b) {
                    Some(nb) if in_cavity.contains(&nb) => {}
                    _ => boundary.push((a, b)),
                }
            }
        }
        for &c in &cavity {
            self.remove(c);
        }
        for (a, b) in boundary {
            self.add([a, b, i]);
        }
    }

    fn has_edge(&self, a: u32, b: u32) -> bool {
        self.edges.contains_key(&(a, b)) || self.edges.contains_key(&(b, a))
    }

    fn insert_constraint(&mut self, a: u32, b: u32) -> Result<()> {
        if self.has_edge(a, b) {
            self.constrained.insert((a.min(b), a.max(b)));
            return Ok(());
        }
        let (pa, pb) = (self.p(a), self.p(b));
        // Triangle around `a` whose opposite edge the segment leaves through.
        let start = (0..self.tris.len() as u32).find_map(|id| {
            if !self.alive[id as usize] {
                return None;
            }
            let t = self.tris[id as usize];
            let r = t.iter().position(|&v| v == a)?;
            let (v1, v2) = (t[(r + 1) % 3], t[(r + 2) % 3]);
            let (o1, o2) = (orient2d(pa, pb, self.p(v1)), orient2d(pa, pb, self.p(v2)));
            (o1 < 0.0 && o2 > 0.0).then_some((id, v1, v2))
        });
        let Some((t0, mut r, mut l)) = start else {
            return Err(Error::SelfIntersectingLoop);
        };
        let mut crossed = vec![t0];
        let mut right = vec![r];
        let mut left = vec![l];
        loop {
            if self.constrained.contains(&(r.min(l), r.max(l))) {
                return Err(Error::SelfIntersectingLoop);
            }
            let nb = self.neighbor(r, l).ok_or(Error::SelfIntersectingLoop)?;
            crossed.push(nb);
            let t = self.tris[nb as usize];
            let w = t.iter().copied().find(|&v| v != r && v != l).unwrap();
            if w == b {
                break;
            }
            let o = orient2d(pa, pb, self.p(w));
            if o > 0.0 {
                left.push(w);
                l = w;
            } else if o < 0.0 {
                right.push(w);
                r = w;
            } else {
                return Err(Error::SelfIntersectingLoop);
            }
        }
        for &t in &crossed {
            self.remove(t);
        }
        let mut upper = vec![a, b];
        upper.extend(left.iter().rev());
        let mut lower = vec![b, a];
        lower.extend(right.iter());
        let mut out = Vec::new();
        self.pseudo_polygon(&upper, &mut out);
        self.pseudo_polygon(&lower, &mut out);
        for t in out {
            self.add(t);
        }
        self.constrained.insert((a.min(b), a.max(b)));
        Ok(())
    }

    /// Triangulates a counter-clockwise pseudo-polygon whose first two
    /// vertices form the base edge, picking the Delaunay apex recursively.
    fn pseudo_polygon(&self, poly: &[u32], out: &mut Vec<[u32; 3]>) {
        if poly.len() < 3 {
            return;
        }
        let (p0, p1) = (self.p(poly[0]), self.p(poly[1]));
        let mut j = 2;
        for i in 3..poly.len() {
            if incircle(p0, p1, self.p(poly[j]), self.p(poly[i])) > 0.0 {
                j = i;
            }
        }
        out.push([poly[0], poly[1], poly[j]]);
        let mut a = vec![poly[j], poly[1]];
        a.extend_from_slice(&poly[2..j]);
        self.pseudo_polygon(&a, out);
        let mut b = vec![poly[0], poly[j]];
        b.extend_from_slice(&poly[j + 1..]);
        self.pseudo_polygon(&b, out);
    }

    fn is_constrained(&self, a: u32, b: u32) -> bool {
        self.constrained.contains(&(a.min(b), a.max(b)))
    }

    /// Removes triangles reachable from the super vertices without crossing
    /// a constraint.
    fn remove_exterior(&mut self) {
        let mut stack: Vec<u32> = (0..self.tris.len() as u32)
            .filter(|&i| self.alive[i as usize] && self.tris[i as usize].iter().any(|&v| v >= self.n_real))
            .collect();
        let mut outside: HashSet<u32> = stack.iter().copied().collect();
        while let Some(t) = stack.pop() {
            let tv = self.tris[t as usize];
            for e in 0..3 {
                let (a, b) = (tv[e], tv[(e + 1) % 3]);
                if self.is_constrained(a, b) {
                    continue;
                }
                if let Some(nb) = self.neighbor(a, b) {
                    if outside.insert(nb) {
                        stack.push(nb);
                    }
                }
            }
        }
        for t in outside {
            self.remove(t);
        }
    }

    /// Flips non-constrained edges until every edge is locally Delaunay.
    fn lawson_flip(&mut self) {
        let mut queue: Vec<(u32, u32)> = self.edges.keys().copied().filter(|&(a, b)| a < b).collect();
        queue.sort_unstable();
        while let Some((a, b)) = queue.pop() {
            if self.is_constrained(a, b) {
                continue;
            }
            let (Some(t1), Some(t2)) = (self.edges.get(&(a, b)).copied(), self.edges.get(&(b, a)).copied()) else {
                continue;
            };
            let c = self.tris[t1 as usize].iter().copied().find(|&v| v != a && v != b).unwrap();
            let d = self.tris[t2 as usize].iter().copied().find(|&v| v != a && v != b).unwrap();
            if incircle(self.p(a), self.p(b), self.p(c), self.p(d)) > 0.0 {
                self.remove(t1);
                self.remove(t2);
                self.add([a, d, c]);
                self.add([d, b, c]);
                for e in [(a, d), (d, b), (b, c), (c, a)] {
                    queue.push((e.0.min(e.1), e.0.max(e.1)));
                }
            }
        }
    }

    fn alive_triangles(&self) -> Vec<[u32; 3]> {
        self.tris
            .iter()
            .zip(&self.alive)
            .filter(|(_, &a)| a)
            .map(|(t, _)| *t)
            .collect()
    }
}
