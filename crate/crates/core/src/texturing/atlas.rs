//! Texture atlas baking: same-label face patches become image-space charts
//! copied from their source frames and shelf-packed into RGBA pages.

use std::path::Path;

use image::{Rgba, RgbaImage};

use super::mrf::{LabelAssignment, UNTEXTURED};
use crate::camera::Frame;
use crate::error::{Error, Result};
use crate::geom::Vec2;
use crate::mesh::{write_obj, TriMesh};
use crate::raster::RenderMesh;

/// Texels added around each chart.
pub const GUTTER: i64 = 2;
const MIN_PAGE: u32 = 2048;
const SENTINEL_SIZE: u32 = 4;
/// Color of texels reserved for untextured faces (alpha 0 marks them).
pub const SENTINEL: Rgba<u8> = Rgba([255, 0, 255, 0]);

/// Placement of one chart in the atlas (pixels).
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ChartRect {
    pub page: u32,
    pub x: u32,
    pub y: u32,
    pub w: u32,
    pub h: u32,
    /// Source image, or [`UNTEXTURED`] for the sentinel patch.
    pub source: u32,
}

#[derive(Clone, Debug)]
pub struct TextureAtlas {
    pub pages: Vec<RgbaImage>,
    pub face_page: Vec<u32>,
    /// Per-corner normalized coordinates (`u` right, `v` down).
    pub face_uv: Vec<[Vec2; 3]>,
    pub face_source: Vec<u32>,
    pub charts: Vec<ChartRect>,
}

struct Chart {
    source: u32,
    faces: Vec<usize>,
    /// Crop rectangle in the source frame: x0, y0, w, h.
    crop: (i64, i64, u32, u32),
}

/// Groups faces into connected same-label charts.
fn charts(mesh: &TriMesh, labels: &[u32]) -> Vec<(u32, Vec<usize>)> {
    let n = mesh.num_faces();
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(p: &mut [usize], mut i: usize) -> usize {
        while p[i] != i {
            p[i] = p[p[i]];
            i = p[i];
        }
        i
    }
    for (f, g) in mesh.face_adjacency() {
        let (f, g) = (f as usize, g as usize);
        if labels[f] == labels[g] && labels[f] != UNTEXTURED {
            let (a, b) = (find(&mut parent, f), find(&mut parent, g));
            if a != b {
                parent[a.max(b)] = a.min(b);
            }
        }
    }
    let mut groups: std::collections::BTreeMap<usize, Vec<usize>> = Default::default();
    for f in 0..n {
        if labels[f] != UNTEXTURED {
            let r = find(&mut parent, f);
            groups.entry(r).or_default().push(f);
        }
    }
    groups.into_values().map(|fs| (labels[fs[0]], fs)).collect()
}

/// Copies a chart's crop from its source frame. Crop pixels whose centers
/// do not lie on the chart's own surface (faces sharing a label with the
/// chart) are replaced by dilating surface pixels outward, so bilinear
/// lookups along a plane boundary never pick up the neighboring plane.
fn chart_patch(
    mesh: &TriMesh,
    by_label: &std::collections::HashMap<crate::mesh::FaceLabel, Vec<usize>>,
    chart: &Chart,
    frame: &Frame,
) -> RgbaImage {
    let (x0, y0, w, h) = chart.crop;
    let (wu, hu) = (w as usize, h as usize);
    let mut patch = RgbaImage::from_fn(w, h, |xx, yy| {
        let c = frame.color.get_pixel(x0 as u32 + xx, y0 as u32 + yy);
        Rgba([c[0], c[1], c[2], 255])
    });
    let cam = frame.camera();
    let mut labels: Vec<crate::mesh::FaceLabel> = chart.faces.iter().map(|&f| mesh.labels[f]).collect();
    labels.sort();
    labels.dedup();
    let mut valid = vec![false; wu * hu];
    for f in labels.iter().flat_map(|l| &by_label[l]) {
        let Some(q) = mesh.tri(*f).iter().map(|v| cam.project(v).map(|(p, _)| p)).collect::<Option<Vec<Vec2>>>() else {
            continue;
        };
        let orient = (q[1] - q[0]).perp(&(q[2] - q[0]));
        if orient == 0.0 {
            continue;
        }
        let lo = q[0].inf(&q[1]).inf(&q[2]);
        let hi = q[0].sup(&q[1]).sup(&q[2]);
        let xa = ((lo.x - 0.5).ceil() as i64 - x0).max(0);
        let xb = ((hi.x - 0.5).floor() as i64 - x0).min(w as i64 - 1);
        let ya = ((lo.y - 0.5).ceil() as i64 - y0).max(0);
        let yb = ((hi.y - 0.5).floor() as i64 - y0).min(h as i64 - 1);
        for yy in ya..=yb {
            for xx in xa..=xb {
                let c = Vec2::new((x0 + xx) as f64 + 0.5, (y0 + yy) as f64 + 0.5);
                let inside = (0..3).all(|k| (q[(k + 1) % 3] - q[k]).perp(&(c - q[k])) * orient >= 0.0);
                if inside {
                    valid[yy as usize * wu + xx as usize] = true;
                }
            }
        }
    }
    if !valid.iter().any(|&v| v) {
        return patch;
    }
    // Breadth-first dilation: each pass fills pixels with a valid
    // 8-neighbor by the mean of those neighbors.
    loop {
        let mut fills = Vec::new();
        for yy in 0..hu {
            for xx in 0..wu {
                if valid[yy * wu + xx] {
                    continue;
                }
                let (mut acc, mut cnt) = ([0u32; 3], 0u32);
                for ny in yy.saturating_sub(1)..(yy + 2).min(hu) {
                    for nx in xx.saturating_sub(1)..(xx + 2).min(wu) {
                        if valid[ny * wu + nx] {
                            let c = patch.get_pixel(nx as u32, ny as u32);
                            (0..3).for_each(|k| acc[k] += c[k] as u32);
                            cnt += 1;
                        }
                    }
                }
                if cnt > 0 {
                    let c = acc.map(|a| ((a + cnt / 2) / cnt) as u8);
                    fills.push((xx, yy, Rgba([c[0], c[1], c[2], 255])));
                }
            }
        }
        if fills.is_empty() {
            return patch;
        }
        for (xx, yy, c) in fills {
            patch.put_pixel(xx as u32, yy as u32, c);
            valid[yy * wu + xx] = true;
        }
    }
}

/// Bakes the atlas for `assignment`; image ids index `frames`.
pub fn bake_atlas(mesh: &TriMesh, assignment: &LabelAssignment, frames: &[Frame]) -> TextureAtlas {
    let labels = &assignment.labels;
    let mut list: Vec<Chart> = Vec::new();
    for (source, faces) in charts(mesh, labels) {
        let frame = &frames[source as usize];
        let cam = frame.camera();
        let (fw, fh) = (frame.color.width() as i64, frame.color.height() as i64);
        let mut lo = Vec2::repeat(f64::INFINITY);
        let mut hi = Vec2::repeat(f64::NEG_INFINITY);
        for &f in &faces {
            for v in mesh.tri(f) {
                let (px, _) = cam.project(&v).unwrap_or((Vec2::zeros(), 0.0));
                lo = lo.inf(&px);
                hi = hi.sup(&px);
            }
        }
        let x0 = (lo.x.floor() as i64 - GUTTER).clamp(0, fw - 1);
        let y0 = (lo.y.floor() as i64 - GUTTER).clamp(0, fh - 1);
        let x1 = (hi.x.ceil() as i64 + GUTTER).clamp(x0 + 1, fw);
        let y1 = (hi.y.ceil() as i64 + GUTTER).clamp(y0 + 1, fh);
        list.push(Chart {
            source,
            faces,
            crop: (x0, y0, (x1 - x0) as u32, (y1 - y0) as u32),
        });
    }

    // Shelf packing, tallest first; the sentinel patch goes first.
    let mut sizes: Vec<(u32, u32)> = vec![(SENTINEL_SIZE, SENTINEL_SIZE)];
    sizes.extend(list.iter().map(|c| (c.crop.2, c.crop.3)));
    let page_w = sizes.iter().map(|s| s.0).max().unwrap().max(MIN_PAGE);
    let page_h = sizes.iter().map(|s| s.1).max().unwrap().max(MIN_PAGE);
    let mut order: Vec<usize> = (1..sizes.len()).collect();
    order.sort_by(|&a, &b| sizes[b].1.cmp(&sizes[a].1).then(a.cmp(&b)));
    order.insert(0, 0);
    let mut place = vec![(0u32, 0u32, 0u32); sizes.len()];
    let mut used_h: Vec<u32> = vec![0];
    let (mut page, mut x, mut y, mut shelf) = (0u32, 0u32, 0u32, 0u32);
    for &i in &order {
        let (w, h) = sizes[i];
        if x + w > page_w {
            y += shelf;
            x = 0;
            shelf = 0;
        }
        if y + h > page_h {
            page += 1;
            used_h.push(0);
            x = 0;
            y = 0;
            shelf = 0;
        }
        place[i] = (page, x, y);
        x += w;
        shelf = shelf.max(h);
        used_h[page as usize] = used_h[page as usize].max(y + h);
    }
    let mut pages: Vec<RgbaImage> = used_h.iter().map(|&h| RgbaImage::new(page_w, h.max(1))).collect();

    let n = mesh.num_faces();
    let mut face_page = vec![0u32; n];
    let mut face_uv = vec![[Vec2::zeros(); 3]; n];
    let mut chart_rects = Vec::with_capacity(sizes.len());

    let (sp, sx, sy) = place[0];
    for yy in 0..SENTINEL_SIZE {
        for xx in 0..SENTINEL_SIZE {
            pages[sp as usize].put_pixel(sx + xx, sy + yy, SENTINEL);
        }
    }
    chart_rects.push(ChartRect { page: sp, x: sx, y: sy, w: SENTINEL_SIZE, h: SENTINEL_SIZE, source: UNTEXTURED });
    let (pw0, ph0) = (pages[sp as usize].width() as f64, pages[sp as usize].height() as f64);
    let sentinel_uv = Vec2::new(
        (sx as f64 + SENTINEL_SIZE as f64 / 2.0) / pw0,
        (sy as f64 + SENTINEL_SIZE as f64 / 2.0) / ph0,
    );
    for f in 0..n {
        if labels[f] == UNTEXTURED {
            face_page[f] = sp;
            face_uv[f] = [sentinel_uv; 3];
        }
    }

    let mut by_label: std::collections::HashMap<crate::mesh::FaceLabel, Vec<usize>> = Default::default();
    for f in 0..n {
        by_label.entry(mesh.labels[f]).or_default().push(f);
    }
    for (ci, chart) in list.iter().enumerate() {
        let (p, px, py) = place[ci + 1];
        let frame = &frames[chart.source as usize];
        let (x0, y0, w, h) = chart.crop;
        let patch = chart_patch(mesh, &by_label, chart, frame);
        image::imageops::replace(&mut pages[p as usize], &patch, px as i64, py as i64);
        let page = &pages[p as usize];
        chart_rects.push(ChartRect { page: p, x: px, y: py, w, h, source: chart.source });
        let (pw, ph) = (page.width() as f64, page.height() as f64);
        let cam = frame.camera();
        for &f in &chart.faces {
            face_page[f] = p;
            let tri = mesh.tri(f);
            for k in 0..3 {
                let (q, _) = cam.project(&tri[k]).unwrap_or((Vec2::zeros(), 0.0));
                face_uv[f][k] = Vec2::new(
                    (px as f64 + q.x - x0 as f64) / pw,
                    (py as f64 + q.y - y0 as f64) / ph,
                );
            }
        }
    }

    TextureAtlas {
        pages,
        face_page,
        face_uv,
        face_source: labels.clone(),
        charts: chart_rects,
    }
}

impl TextureAtlas {
    /// Render geometry for the faces selected by `keep`.
    pub fn render_mesh(&self, mesh: &TriMesh, mut keep: impl FnMut(usize) -> bool) -> RenderMesh {
        let mut rm = RenderMesh::default();
        for f in 0..mesh.num_faces() {
            if keep(f) {
                rm.push_face(mesh.tri(f), self.face_page[f], self.face_uv[f]);
            }
        }
        rm
    }

    /// Writes `<stem>.obj`, `<stem>.mtl` and `<stem>_<k>.png` into `dir`.
    pub fn save_obj(&self, mesh: &TriMesh, dir: &Path, stem: &str) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let mut flat = TriMesh::default();
        let mut tcs = Vec::new();
        for f in 0..mesh.num_faces() {
            let base = flat.vertices.len() as u32;
            flat.vertices.extend_from_slice(&mesh.tri(f));
            tcs.extend_from_slice(&self.face_uv[f]);
            flat.faces.push([base, base + 1, base + 2]);
            flat.labels.push(mesh.labels[f]);
        }
        flat.texcoords = Some(tcs);
        let groups: Vec<(String, Vec<usize>)> = (0..self.pages.len())
            .map(|p| {
                let faces = (0..mesh.num_faces()).filter(|&f| self.face_page[f] == p as u32).collect();
                (format!("page_{p}"), faces)
            })
            .collect();
        let mtl_name = format!("{stem}.mtl");
        let obj_path = dir.join(format!("{stem}.obj"));
        let mut buf = Vec::new();
        write_obj(&flat, &mut buf, Some((&mtl_name, &groups)))?;
        std::fs::write(&obj_path, buf).map_err(|e| Error::io(&obj_path, e))?;
        let mut mtl = String::new();
        for (p, page) in self.pages.iter().enumerate() {
            let png = format!("{stem}_{p}.png");
            mtl.push_str(&format!("newmtl page_{p}\nKa 1 1 1\nKd 1 1 1\nmap_Kd {png}\n\n"));
            page.save(dir.join(&png))?;
        }
        let mtl_path = dir.join(mtl_name);
        std::fs::write(&mtl_path, mtl).map_err(|e| Error::io(&mtl_path, e))
    }
}
