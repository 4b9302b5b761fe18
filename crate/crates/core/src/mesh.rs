//! Indexed triangle mesh with per-face semantic labels, plus OBJ / PLY and
//! `labels.json` sidecar IO.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::{triangle_area3, Vec2, Vec3};

/// Minimum face area kept by constructors that drop degenerate triangles.
pub const MIN_FACE_AREA: f64 = 1e-12;

/// Semantic tag of a face: captured geometry or a layout structure.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FaceLabel {
    Object,
    Structure(u32),
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct TriMesh {
    pub vertices: Vec<Vec3>,
    pub faces: Vec<[u32; 3]>,
    pub labels: Vec<FaceLabel>,
    /// Optional per-vertex texture coordinates (u right, v down, in [0,1]).
    pub texcoords: Option<Vec<Vec2>>,
}

impl TriMesh {
    pub fn new(vertices: Vec<Vec3>, faces: Vec<[u32; 3]>, labels: Vec<FaceLabel>) -> Self {
        TriMesh {
            vertices,
            faces,
            labels,
            texcoords: None,
        }
    }

    pub fn num_faces(&self) -> usize {
        self.faces.len()
    }

    pub fn is_empty(&self) -> bool {
        self.faces.is_empty()
    }

    pub fn tri(&self, f: usize) -> [Vec3; 3] {
        let [a, b, c] = self.faces[f];
        [
            self.vertices[a as usize],
            self.vertices[b as usize],
            self.vertices[c as usize],
        ]
    }

    pub fn face_area(&self, f: usize) -> f64 {
        let [a, b, c] = self.tri(f);
        triangle_area3(&a, &b, &c)
    }

    pub fn face_centroid(&self, f: usize) -> Vec3 {
        let [a, b, c] = self.tri(f);
        (a + b + c) / 3.0
    }

    /// Unit normal following the counter-clockwise winding.
    pub fn face_normal(&self, f: usize) -> Vec3 {
        let [a, b, c] = self.tri(f);
        (b - a).cross(&(c - a)).normalize()
    }

    pub fn total_area(&self) -> f64 {
        (0..self.faces.len()).map(|f| self.face_area(f)).sum()
    }

    /// Checks index bounds, label count and non-degeneracy.
    pub fn validate(&self) -> Result<()> {
        if self.labels.len() != self.faces.len() {
            return Err(Error::MalformedMesh(format!(
                "{} labels for {} faces",
                self.labels.len(),
                self.faces.len()
            )));
        }
        if let Some(tc) = &self.texcoords {
            if tc.len() != self.vertices.len() {
                return Err(Error::MalformedMesh("texcoord count differs from vertex count".into()));
            }
        }
        let nv = self.vertices.len() as u32;
        for (i, f) in self.faces.iter().enumerate() {
            if f.iter().any(|&v| v >= nv) {
                return Err(Error::MalformedMesh(format!("face {i} indexes past {nv} vertices")));
            }
            if self.face_area(i) <= MIN_FACE_AREA {
                return Err(Error::MalformedMesh(format!("face {i} is degenerate")));
            }
        }
        Ok(())
    }

    /// Returns the sub-mesh of faces for which `keep` is true, with unused
    /// vertices removed. Vertex order follows first use.
    pub fn select(&self, mut keep: impl FnMut(usize) -> bool) -> TriMesh {
        let mut remap = vec![u32::MAX; self.vertices.len()];
        let mut out = TriMesh::default();
        let mut tcs = self.texcoords.as_ref().map(|_| Vec::new());
        for f in 0..self.faces.len() {
            if !keep(f) {
                continue;
            }
            let mut nf = [0u32; 3];
            for (k, &v) in self.faces[f].iter().enumerate() {
                let v = v as usize;
                if remap[v] == u32::MAX {
                    remap[v] = out.vertices.len() as u32;
                    out.vertices.push(self.vertices[v]);
                    if let (Some(dst), Some(src)) = (tcs.as_mut(), self.texcoords.as_ref()) {
                        dst.push(src[v]);
                    }
                }
                nf[k] = remap[v];
            }
            out.faces.push(nf);
            out.labels.push(self.labels[f]);
        }
        out.texcoords = tcs;
        out
    }

    /// Faces carrying the given label.
    pub fn split_label(&self, label: FaceLabel) -> TriMesh {
        self.select(|f| self.labels[f] == label)
    }

    /// Appends `other`, shifting its indices.
    pub fn append(&mut self, other: &TriMesh) {
        let off = self.vertices.len() as u32;
        match (&mut self.texcoords, &other.texcoords) {
            (Some(a), Some(b)) => a.extend_from_slice(b),
            (Some(a), None) => a.extend(std::iter::repeat_n(Vec2::zeros(), other.vertices.len())),
            (None, Some(b)) if self.vertices.is_empty() => self.texcoords = Some(b.clone()),
            (None, Some(b)) => {
                let mut a = vec![Vec2::zeros(); self.vertices.len()];
                a.extend_from_slice(b);
                self.texcoords = Some(a);
            }
            (None, None) => {}
        }
        self.vertices.extend_from_slice(&other.vertices);
        self.faces
            .extend(other.faces.iter().map(|f| [f[0] + off, f[1] + off, f[2] + off]));
        self.labels.extend_from_slice(&other.labels);
    }

    /// Face adjacency via shared undirected edges (pairs `f < g`), sorted.
    pub fn face_adjacency(&self) -> Vec<(u32, u32)> {
        let mut edges: Vec<(u32, u32, u32)> = Vec::with_capacity(self.faces.len() * 3);
        for (f, t) in self.faces.iter().enumerate() {
            for k in 0..3 {
                let (a, b) = (t[k], t[(k + 1) % 3]);
                edges.push((a.min(b), a.max(b), f as u32));
            }
        }
        edges.sort_unstable();
        let mut adj = Vec::new();
        let mut i = 0;
        while i < edges.len() {
            let mut j = i + 1;
            while j < edges.len() && edges[j].0 == edges[i].0 && edges[j].1 == edges[i].1 {
                j += 1;
            }
            for a in i..j {
                for b in (a + 1)..j {
                    let (f, g) = (edges[a].2, edges[b].2);
                    if f != g {
                        adj.push((f.min(g), f.max(g)));
                    }
                }
            }
            i = j;
        }
        adj.sort_unstable();
        adj.dedup();
        adj
    }

    /// Merges vertices that are bit-identical. Useful after concatenating
    /// patches that share boundary points.
    pub fn weld_exact(&self) -> TriMesh {
        let mut map: BTreeMap<[u64; 3], u32> = BTreeMap::new();
        let mut remap = Vec::with_capacity(self.vertices.len());
        let mut verts = Vec::new();
        for v in &self.vertices {
            let key = [v.x.to_bits(), v.y.to_bits(), v.z.to_bits()];
            let id = *map.entry(key).or_insert_with(|| {
                verts.push(*v);
                (verts.len() - 1) as u32
            });
            remap.push(id);
        }
        TriMesh {
            vertices: verts,
            faces: self
                .faces
                .iter()
                .map(|f| [remap[f[0] as usize], remap[f[1] as usize], remap[f[2] as usize]])
                .collect(),
            labels: self.labels.clone(),
            texcoords: None,
        }
    }
}

/// Serialized form of one label in `labels.json`.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(untagged)]
enum LabelRecord {
    Object(String),
    Structure { structure: u32 },
}

pub fn labels_to_json(labels: &[FaceLabel]) -> String {
    let map: BTreeMap<usize, LabelRecord> = labels
        .iter()
        .enumerate()
        .map(|(i, l)| {
            let rec = match l {
                FaceLabel::Object => LabelRecord::Object("object".into()),
                FaceLabel::Structure(id) => LabelRecord::Structure { structure: *id },
            };
            (i, rec)
        })
        .collect();
    serde_json::to_string(&map).expect("labels serialize")
}

pub fn labels_from_json(text: &str, num_faces: usize) -> Result<Vec<FaceLabel>> {
    let map: BTreeMap<String, LabelRecord> = serde_json::from_str(text)?;
    let mut out = vec![FaceLabel::Object; num_faces];
    let mut seen = vec![false; num_faces];
    for (k, rec) in map {
        let i: usize = k
            .parse()
            .map_err(|_| Error::MalformedMesh(format!("label key {k:?} is not a face index")))?;
        if i >= num_faces {
            return Err(Error::MalformedMesh(format!("label for face {i} of {num_faces}")));
        }
        out[i] = match rec {
            LabelRecord::Object(s) if s == "object" => FaceLabel::Object,
            LabelRecord::Object(s) => return Err(Error::MalformedMesh(format!("unknown label {s:?}"))),
            LabelRecord::Structure { structure } => FaceLabel::Structure(structure),
        };
        seen[i] = true;
    }
    if let Some(i) = seen.iter().position(|s| !s) {
        return Err(Error::MalformedMesh(format!("face {i} has no label")));
    }
    Ok(out)
}

/// Sidecar path: `mesh.ply` -> `mesh.labels.json`.
pub fn labels_path(mesh_path: &Path) -> std::path::PathBuf {
    mesh_path.with_extension("labels.json")
}

/// Loads a mesh by extension (`.obj` or `.ply`). Labels are read from the
/// sidecar when present, otherwise every face is an object face.
pub fn load_mesh(path: &Path) -> Result<TriMesh> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let ext = path.extension().and_then(|e| e.to_str()).unwrap_or("").to_ascii_lowercase();
    let mut mesh = match ext.as_str() {
        "obj" => read_obj(&bytes[..])?,
        "ply" => read_ply(&bytes[..])?,
        _ => return Err(Error::MalformedMesh(format!("unsupported mesh format {ext:?}"))),
    };
    let lp = labels_path(path);
    if lp.exists() {
        let text = std::fs::read_to_string(&lp).map_err(|e| Error::io(&lp, e))?;
        mesh.labels = labels_from_json(&text, mesh.faces.len())?;
    }
    Ok(mesh)
}

/// Writes a mesh by extension and its labels sidecar.
pub fn save_mesh(mesh: &TriMesh, path: &Path) -> Result<()> {
    let ext = path.extension().and_then(|e| e.to_str()).unwrap_or("").to_ascii_lowercase();
    let mut buf = Vec::new();
    match ext.as_str() {
        "obj" => write_obj(mesh, &mut buf, None)?,
        "ply" => write_ply(mesh, &mut buf)?,
        _ => return Err(Error::MalformedMesh(format!("unsupported mesh format {ext:?}"))),
    }
    std::fs::write(path, buf).map_err(|e| Error::io(path, e))?;
    let lp = labels_path(path);
    std::fs::write(&lp, labels_to_json(&mesh.labels)).map_err(|e| Error::io(&lp, e))
}

/// Parses triangles (polygons are fan-triangulated) and optional `vt`.
pub fn read_obj(reader: impl Read) -> Result<TriMesh> {
    let mut verts = Vec::new();
    let mut vts: Vec<Vec2> = Vec::new();
    let mut faces = Vec::new();
    let mut face_vt: Vec<[Option<u32>; 3]> = Vec::new();
    for (ln, line) in BufReader::new(reader).lines().enumerate() {
        let line = line.map_err(|e| Error::MalformedMesh(e.to_string()))?;
        let mut it = line.split_whitespace();
        let bad = |what: &str| Error::MalformedMesh(format!("obj line {}: {what}", ln + 1));
        match it.next() {
            Some("v") => {
                let c: Vec<f64> = it.take(3).map(str::parse).collect::<std::result::Result<_, _>>().map_err(|_| bad("bad vertex"))?;
                if c.len() != 3 {
                    return Err(bad("vertex needs 3 coordinates"));
                }
                verts.push(Vec3::new(c[0], c[1], c[2]));
            }
            Some("vt") => {
                let c: Vec<f64> = it.take(2).map(str::parse).collect::<std::result::Result<_, _>>().map_err(|_| bad("bad texcoord"))?;
                if c.len() != 2 {
                    return Err(bad("texcoord needs 2 values"));
                }
                vts.push(Vec2::new(c[0], 1.0 - c[1]));
            }
            Some("f") => {
                let mut idx = Vec::new();
                for tok in it {
                    let mut parts = tok.split('/');
                    let resolve = |s: Option<&str>, n: usize| -> Result<Option<u32>> {
                        match s {
                            None | Some("") => Ok(None),
                            Some(s) => {
                                let i: i64 = s.parse().map_err(|_| bad("bad index"))?;
                                let r = if i < 0 { n as i64 + i } else { i - 1 };
                                if r < 0 || r as usize >= n {
                                    return Err(bad("index out of range"));
                                }
                                Ok(Some(r as u32))
                            }
                        }
                    };
                    let v = resolve(parts.next(), verts.len())?.ok_or_else(|| bad("missing vertex index"))?;
                    let t = resolve(parts.next(), vts.len())?;
                    idx.push((v, t));
                }
                if idx.len() < 3 {
                    return Err(bad("face needs 3 vertices"));
                }
                for k in 1..idx.len() - 1 {
                    faces.push([idx[0].0, idx[k].0, idx[k + 1].0]);
                    face_vt.push([idx[0].1, idx[k].1, idx[k + 1].1]);
                }
            }
            _ => {}
        }
    }
    let n = faces.len();
    let mut mesh = TriMesh::new(verts, faces, vec![FaceLabel::Object; n]);
    // Per-vertex texcoords only when every face corner agrees with its vertex.
    if !vts.is_empty() {
        let mut tc: Vec<Option<Vec2>> = vec![None; mesh.vertices.len()];
        let mut consistent = true;
        for (f, t) in mesh.faces.iter().zip(&face_vt) {
            for k in 0..3 {
                let Some(ti) = t[k] else {
                    consistent = false;
                    continue;
                };
                let uv = vts[ti as usize];
                match tc[f[k] as usize] {
                    None => tc[f[k] as usize] = Some(uv),
                    Some(prev) if prev != uv => consistent = false,
                    _ => {}
                }
            }
        }
        if consistent {
            mesh.texcoords = Some(tc.into_iter().map(|t| t.unwrap_or_else(Vec2::zeros)).collect());
        }
    }
    Ok(mesh)
}

/// Writes OBJ. With `mtl` set, emits `mtllib`/`usemtl` per face group given
/// as `(material name, face range)`.
pub fn write_obj(mesh: &TriMesh, mut w: impl Write, mtl: Option<(&str, &[(String, Vec<usize>)])>) -> Result<()> {
    let mut s = String::new();
    if let Some((lib, _)) = mtl {
        writeln!(s, "mtllib {lib}").unwrap();
    }
    for v in &mesh.vertices {
        writeln!(s, "v {} {} {}", v.x, v.y, v.z).unwrap();
    }
    if let Some(tc) = &mesh.texcoords {
        for t in tc {
            writeln!(s, "vt {} {}", t.x, 1.0 - t.y).unwrap();
        }
    }
    let face_line = |s: &mut String, f: &[u32; 3]| {
        if mesh.texcoords.is_some() {
            writeln!(s, "f {0}/{0} {1}/{1} {2}/{2}", f[0] + 1, f[1] + 1, f[2] + 1).unwrap();
        } else {
            writeln!(s, "f {} {} {}", f[0] + 1, f[1] + 1, f[2] + 1).unwrap();
        }
    };
    match mtl {
        Some((_, groups)) => {
            for (name, faces) in groups {
                writeln!(s, "usemtl {name}").unwrap();
                for &f in faces {
                    face_line(&mut s, &mesh.faces[f]);
                }
            }
        }
        None => {
            for f in &mesh.faces {
                face_line(&mut s, f);
            }
        }
    }
    w.write_all(s.as_bytes()).map_err(|e| Error::MalformedMesh(e.to_string()))
}

/// Binary little-endian PLY with float vertices and uchar/int face lists.
pub fn write_ply(mesh: &TriMesh, mut w: impl Write) -> Result<()> {
    let mut buf = Vec::new();
    write!(
        buf,
        "ply\nformat binary_little_endian 1.0\nelement vertex {}\nproperty double x\nproperty double y\nproperty double z\nelement face {}\nproperty list uchar int vertex_indices\nend_header\n",
        mesh.vertices.len(),
        mesh.faces.len()
    )
    .unwrap();
    for v in &mesh.vertices {
        for c in [v.x, v.y, v.z] {
            buf.extend_from_slice(&c.to_le_bytes());
        }
    }
    for f in &mesh.faces {
        buf.push(3);
        for &i in f {
            buf.extend_from_slice(&(i as i32).to_le_bytes());
        }
    }
    w.write_all(&buf).map_err(|e| Error::MalformedMesh(e.to_string()))
}

#[derive(Clone, Copy, Debug, PartialEq)]
enum PlyType {
    I8,
    U8,
    I16,
    U16,
    I32,
    U32,
    F32,
    F64,
}

impl PlyType {
    fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "char" | "int8" => PlyType::I8,
            "uchar" | "uint8" => PlyType::U8,
            "short" | "int16" => PlyType::I16,
            "ushort" | "uint16" => PlyType::U16,
            "int" | "int32" => PlyType::I32,
            "uint" | "uint32" => PlyType::U32,
            "float" | "float32" => PlyType::F32,
            "double" | "float64" => PlyType::F64,
            _ => return None,
        })
    }

    fn size(self) -> usize {
        match self {
            PlyType::I8 | PlyType::U8 => 1,
            PlyType::I16 | PlyType::U16 => 2,
            PlyType::I32 | PlyType::U32 | PlyType::F32 => 4,
            PlyType::F64 => 8,
        }
    }

    fn read(self, b: &[u8], le: bool) -> f64 {
        macro_rules! rd {
            ($t:ty, $n:expr) => {{
                let a: [u8; $n] = b[..$n].try_into().unwrap();
                (if le { <$t>::from_le_bytes(a) } else { <$t>::from_be_bytes(a) }) as f64
            }};
        }
        match self {
            PlyType::I8 => b[0] as i8 as f64,
            PlyType::U8 => b[0] as f64,
            PlyType::I16 => rd!(i16, 2),
            PlyType::U16 => rd!(u16, 2),
            PlyType::I32 => rd!(i32, 4),
            PlyType::U32 => rd!(u32, 4),
            PlyType::F32 => rd!(f32, 4),
            PlyType::F64 => rd!(f64, 8),
        }
    }
}

#[derive(Debug)]
enum PlyProp {
    Scalar(String, PlyType),
    List(String, PlyType, PlyType),
}

struct PlyElement {
    name: String,
    count: usize,
    props: Vec<PlyProp>,
}

/// Reads binary (either endianness) or ASCII PLY meshes.
pub fn read_ply(mut reader: impl Read) -> Result<TriMesh> {
    let mut data = Vec::new();
    reader.read_to_end(&mut data).map_err(|e| Error::MalformedMesh(e.to_string()))?;
    let bad = |m: &str| Error::MalformedMesh(format!("ply: {m}"));
    let end = find_subslice(&data, b"end_header").ok_or_else(|| bad("missing end_header"))?;
    let header_end = data[end..].iter().position(|&c| c == b'\n').map(|p| end + p + 1).ok_or_else(|| bad("truncated header"))?;
    let header = std::str::from_utf8(&data[..header_end]).map_err(|_| bad("header is not text"))?;
    let mut format = "";
    let mut elements: Vec<PlyElement> = Vec::new();
    for line in header.lines() {
        let t: Vec<&str> = line.split_whitespace().collect();
        match t.as_slice() {
            ["format", f, ..] => format = f,
            ["element", name, count] => elements.push(PlyElement {
                name: name.to_string(),
                count: count.parse().map_err(|_| bad("bad element count"))?,
                props: Vec::new(),
            }),
            ["property", "list", ct, it, name] => {
                let el = elements.last_mut().ok_or_else(|| bad("property before element"))?;
                el.props.push(PlyProp::List(
                    name.to_string(),
                    PlyType::parse(ct).ok_or_else(|| bad("bad type"))?,
                    PlyType::parse(it).ok_or_else(|| bad("bad type"))?,
                ));
            }
            ["property", ty, name] => {
                let el = elements.last_mut().ok_or_else(|| bad("property before element"))?;
                el.props.push(PlyProp::Scalar(name.to_string(), PlyType::parse(ty).ok_or_else(|| bad("bad type"))?));
            }
            _ => {}
        }
    }
    let ascii = match format {
        "ascii" => true,
        "binary_little_endian" | "binary_big_endian" => false,
        _ => return Err(bad("unknown format")),
    };
    let le = format == "binary_little_endian";
    let body = &data[header_end..];
    let mut tokens = if ascii {
        Some(std::str::from_utf8(body).map_err(|_| bad("ascii body is not text"))?.split_ascii_whitespace())
    } else {
        None
    };
    let mut pos = 0usize;
    let mut next = |ty: PlyType| -> Result<f64> {
        if let Some(tok) = tokens.as_mut() {
            tok.next().ok_or_else(|| bad("truncated body"))?.parse().map_err(|_| bad("bad number"))
        } else {
            let n = ty.size();
            if pos + n > body.len() {
                return Err(bad("truncated body"));
            }
            let v = ty.read(&body[pos..], le);
            pos += n;
            Ok(v)
        }
    };
    let mut verts = Vec::new();
    let mut faces = Vec::new();
    for el in &elements {
        for _ in 0..el.count {
            let mut xyz = [0.0; 3];
            for p in &el.props {
                match p {
                    PlyProp::Scalar(name, ty) => {
                        let v = next(*ty)?;
                        match name.as_str() {
                            "x" => xyz[0] = v,
                            "y" => xyz[1] = v,
                            "z" => xyz[2] = v,
                            _ => {}
                        }
                    }
                    PlyProp::List(name, ct, it) => {
                        let n = next(*ct)? as usize;
                        let mut idx = Vec::with_capacity(n);
                        for _ in 0..n {
                            idx.push(next(*it)? as i64);
                        }
                        if el.name == "face" && (name == "vertex_indices" || name == "vertex_index") {
                            if n < 3 {
                                return Err(bad("face with fewer than 3 vertices"));
                            }
                            for k in 1..n - 1 {
                                faces.push([idx[0], idx[k], idx[k + 1]]);
                            }
                        }
                    }
                }
            }
            if el.name == "vertex" {
                verts.push(Vec3::new(xyz[0], xyz[1], xyz[2]));
            }
        }
    }
    let nv = verts.len() as i64;
    let faces: Vec<[u32; 3]> = faces
        .into_iter()
        .map(|f| {
            if f.iter().any(|&i| i < 0 || i >= nv) {
                Err(bad("face index out of range"))
            } else {
                Ok([f[0] as u32, f[1] as u32, f[2] as u32])
            }
        })
        .collect::<Result<_>>()?;
    let n = faces.len();
    Ok(TriMesh::new(verts, faces, vec![FaceLabel::Object; n]))
}

fn find_subslice(h: &[u8], n: &[u8]) -> Option<usize> {
    h.windows(n.len()).position(|w| w == n)
}
