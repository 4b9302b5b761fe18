//! On-disk capture datasets.
//!
//! ```text
//! <root>/frames/NNNNN.color.png    RGB frames, indices contiguous from 0
//! <root>/frames/NNNNN.depth.png    optional 16-bit depth in millimeters
//! <root>/poses.json                per-frame 4x4 camera-to-world, row-major
//! <root>/intrinsics.json           per-frame {fx, fy, cx, cy, w, h}
//! <root>/layout.json               room layout
//! <root>/mesh.ply                  optional captured mesh
//! <root>/gt/planes/plane_<id>.png  optional rectified ground-truth textures
//! <root>/gt/views/...              optional ground-truth frames (same layout
//!                                  as the capture, plus NNNNN.mask.png)
//! ```

use std::path::{Path, PathBuf};

use image::{ImageBuffer, Luma, RgbImage};
use rayon::prelude::*;

use crate::camera::{CameraIntrinsics, Frame};
use crate::error::{Error, Result};
use crate::eval::GtFrame;
use crate::geom::Mat4;
use crate::imageops::{image_to_mask, mask_to_image};
use crate::layout::{parse_layout, RoomLayout};
use crate::mesh::{load_mesh, save_mesh, TriMesh};

pub const FRAMES_DIR: &str = "frames";
pub const POSES_FILE: &str = "poses.json";
pub const INTRINSICS_FILE: &str = "intrinsics.json";
pub const LAYOUT_FILE: &str = "layout.json";
pub const MESH_FILE: &str = "mesh.ply";
pub const GT_PLANES_DIR: &str = "gt/planes";
pub const GT_VIEWS_DIR: &str = "gt/views";

pub fn color_path(dir: &Path, index: usize) -> PathBuf {
    dir.join(format!("{index:05}.color.png"))
}

pub fn depth_path(dir: &Path, index: usize) -> PathBuf {
    dir.join(format!("{index:05}.depth.png"))
}

pub fn mask_path(dir: &Path, index: usize) -> PathBuf {
    dir.join(format!("{index:05}.mask.png"))
}

fn row_major(m: &Mat4) -> [f64; 16] {
    std::array::from_fn(|i| m[(i / 4, i % 4)])
}

fn from_row_major(v: &[f64; 16]) -> Mat4 {
    Mat4::from_fn(|r, c| v[r * 4 + c])
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_str(&text)?)
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Number of contiguous `NNNNN.color.png` files in `dir`.
fn count_frames(dir: &Path) -> Result<usize> {
    let entries = std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut indices = Vec::new();
    for e in entries {
        let e = e.map_err(|err| Error::io(dir, err))?;
        let name = e.file_name().to_string_lossy().into_owned();
        if let Some(stem) = name.strip_suffix(".color.png") {
            let i: usize = stem
                .parse()
                .map_err(|_| Error::MalformedDataset(format!("unexpected frame file name {name:?}")))?;
            indices.push(i);
        }
    }
    indices.sort_unstable();
    if indices.iter().enumerate().any(|(k, &i)| k != i) {
        return Err(Error::MalformedDataset(format!("frame indices in {} are not contiguous from 0", dir.display())));
    }
    Ok(indices.len())
}

/// Reads a frame directory with its sibling pose and intrinsics files.
fn read_frames(frames_dir: &Path, poses_file: &Path, intrinsics_file: &Path) -> Result<Vec<Frame>> {
    let n = count_frames(frames_dir)?;
    if !poses_file.exists() {
        return Err(Error::MalformedDataset(format!("missing {}", poses_file.display())));
    }
    if !intrinsics_file.exists() {
        return Err(Error::MalformedDataset(format!("missing {}", intrinsics_file.display())));
    }
    let poses: Vec<[f64; 16]> = read_json(poses_file)?;
    let intr: Vec<CameraIntrinsics> = read_json(intrinsics_file)?;
    if poses.len() != n || intr.len() != n {
        return Err(Error::MalformedDataset(format!(
            "{n} color frames but {} poses and {} intrinsics",
            poses.len(),
            intr.len()
        )));
    }
    (0..n)
        .into_par_iter()
        .map(|i| {
            let color = image::open(color_path(frames_dir, i))?.to_rgb8();
            let k = intr[i];
            k.validate()?;
            if color.dimensions() != (k.width, k.height) {
                return Err(Error::DimensionMismatch { expected: (k.width, k.height), actual: color.dimensions() });
            }
            let dp = depth_path(frames_dir, i);
            let depth = if dp.exists() { Some(image::open(&dp)?.to_luma16().into_raw()) } else { None };
            Ok(Frame { index: i, color, depth, intrinsics: k, pose: from_row_major(&poses[i]) })
        })
        .collect()
}

fn write_frames(frames_dir: &Path, poses_file: &Path, intrinsics_file: &Path, frames: &[Frame]) -> Result<()> {
    std::fs::create_dir_all(frames_dir).map_err(|e| Error::io(frames_dir, e))?;
    frames.par_iter().enumerate().try_for_each(|(i, f)| -> Result<()> {
        f.color.save(color_path(frames_dir, i))?;
        if let Some(d) = &f.depth {
            let img: ImageBuffer<Luma<u16>, Vec<u16>> = ImageBuffer::from_raw(f.color.width(), f.color.height(), d.clone())
                .ok_or_else(|| Error::MalformedDataset(format!("depth of frame {i} has the wrong size")))?;
            img.save(depth_path(frames_dir, i))?;
        }
        Ok(())
    })?;
    let poses: Vec<[f64; 16]> = frames.iter().map(|f| row_major(&f.pose)).collect();
    let intr: Vec<CameraIntrinsics> = frames.iter().map(|f| f.intrinsics).collect();
    write_text(poses_file, &serde_json::to_string_pretty(&poses)?)?;
    write_text(intrinsics_file, &serde_json::to_string_pretty(&intr)?)
}

/// Ground truth shipped with a dataset.
#[derive(Clone, Debug, Default)]
pub struct GroundTruth {
    /// Rectified textures per plane id.
    pub planes: Vec<(u32, RgbImage)>,
    pub views: Vec<GtFrame>,
}

impl GroundTruth {
    pub fn is_empty(&self) -> bool {
        self.planes.is_empty() && self.views.is_empty()
    }

    pub fn load(root: &Path) -> Result<GroundTruth> {
        let mut gt = GroundTruth::default();
        let pdir = root.join(GT_PLANES_DIR);
        if pdir.is_dir() {
            let mut ids = Vec::new();
            for e in std::fs::read_dir(&pdir).map_err(|e| Error::io(&pdir, e))? {
                let name = e.map_err(|err| Error::io(&pdir, err))?.file_name().to_string_lossy().into_owned();
                let id = name.strip_prefix("plane_").and_then(|s| s.strip_suffix(".png")).and_then(|s| s.parse::<u32>().ok());
                if let Some(id) = id {
                    ids.push(id);
                }
            }
            ids.sort_unstable();
            for id in ids {
                gt.planes.push((id, image::open(pdir.join(format!("plane_{id}.png")))?.to_rgb8()));
            }
        }
        let vdir = root.join(GT_VIEWS_DIR);
        if vdir.is_dir() {
            let frames = read_frames(&vdir.join(FRAMES_DIR), &vdir.join(POSES_FILE), &vdir.join(INTRINSICS_FILE))?;
            for f in frames {
                let mp = mask_path(&vdir.join(FRAMES_DIR), f.index);
                let n = (f.color.width() * f.color.height()) as usize;
                let mask = if mp.exists() { image_to_mask(&image::open(&mp)?.to_luma8()) } else { vec![true; n] };
                if mask.len() != n {
                    return Err(Error::MalformedDataset(format!("mask of ground-truth view {} has the wrong size", f.index)));
                }
                gt.views.push(GtFrame { frame: f, mask });
            }
        }
        Ok(gt)
    }

    pub fn save(&self, root: &Path) -> Result<()> {
        if !self.planes.is_empty() {
            let pdir = root.join(GT_PLANES_DIR);
            std::fs::create_dir_all(&pdir).map_err(|e| Error::io(&pdir, e))?;
            for (id, img) in &self.planes {
                img.save(pdir.join(format!("plane_{id}.png")))?;
            }
        }
        if !self.views.is_empty() {
            let vdir = root.join(GT_VIEWS_DIR);
            let frames: Vec<Frame> = self.views.iter().map(|v| v.frame.clone()).collect();
            write_frames(&vdir.join(FRAMES_DIR), &vdir.join(POSES_FILE), &vdir.join(INTRINSICS_FILE), &frames)?;
            for (i, v) in self.views.iter().enumerate() {
                let (w, h) = v.frame.color.dimensions();
                mask_to_image(&v.mask, w, h).save(mask_path(&vdir.join(FRAMES_DIR), i))?;
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct Dataset {
    pub root: PathBuf,
    pub frames: Vec<Frame>,
    /// Captured mesh, when the dataset ships one.
    pub mesh: Option<TriMesh>,
}

impl Dataset {
    pub fn layout_path(root: &Path) -> PathBuf {
        root.join(LAYOUT_FILE)
    }

    /// Parses `layout.json` of a dataset root.
    pub fn load_layout(root: &Path) -> Result<RoomLayout> {
        let p = Self::layout_path(root);
        if !p.exists() {
            return Err(Error::MalformedDataset(format!("missing {}", p.display())));
        }
        parse_layout(&p)
    }

    /// Reads frames, poses, intrinsics and the optional mesh.
    pub fn load(root: &Path) -> Result<Dataset> {
        let fdir = root.join(FRAMES_DIR);
        if !fdir.is_dir() {
            return Err(Error::MalformedDataset(format!("missing {}", fdir.display())));
        }
        let frames = read_frames(&fdir, &root.join(POSES_FILE), &root.join(INTRINSICS_FILE))?;
        let mp = root.join(MESH_FILE);
        let mesh = if mp.exists() { Some(load_mesh(&mp)?) } else { None };
        Ok(Dataset { root: root.to_path_buf(), frames, mesh })
    }

    /// Writes a dataset; frames are renumbered from 0 in order.
    pub fn write(root: &Path, layout: &RoomLayout, frames: &[Frame], mesh: Option<&TriMesh>) -> Result<()> {
        std::fs::create_dir_all(root).map_err(|e| Error::io(root, e))?;
        write_frames(&root.join(FRAMES_DIR), &root.join(POSES_FILE), &root.join(INTRINSICS_FILE), frames)?;
        layout.save(&Self::layout_path(root))?;
        if let Some(m) = mesh {
            save_mesh(m, &root.join(MESH_FILE))?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::camera::look_at;
    use crate::geom::Vec3;
    use crate::layout::rectangular_walls;
    use image::Rgb;

    fn frame(i: usize) -> Frame {
        let k = CameraIntrinsics { fx: 20.0, fy: 20.0, cx: 8.0, cy: 6.0, width: 16, height: 12 };
        Frame {
            index: i,
            color: RgbImage::from_fn(16, 12, |x, y| Rgb([x as u8 * 9, y as u8 * 11, i as u8])),
            depth: Some((0..16 * 12).map(|v| v as u16 * 100).collect()),
            intrinsics: k,
            pose: look_at(Vec3::new(1.0, 1.2, 1.0 + i as f64 * 0.1), Vec3::new(1.0, 1.2, 0.0), Vec3::y()),
        }
    }

    #[test]
    fn round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let layout = RoomLayout::from_walls(rectangular_walls(2.0, 2.0, 2.44), 0.0, 2.44).unwrap();
        let frames = vec![frame(0), frame(1)];
        Dataset::write(dir.path(), &layout, &frames, None).unwrap();
        let d = Dataset::load(dir.path()).unwrap();
        assert_eq!(d.frames.len(), 2);
        for (a, b) in d.frames.iter().zip(&frames) {
            assert_eq!(a.color, b.color);
            assert_eq!(a.depth, b.depth);
            assert_eq!(a.intrinsics, b.intrinsics);
            assert!((a.pose - b.pose).abs().max() < 1e-12);
        }
        assert_eq!(Dataset::load_layout(dir.path()).unwrap().walls.len(), 4);
    }

    #[test]
    fn gaps_and_missing_files_are_malformed() {
        let dir = tempfile::tempdir().unwrap();
        let layout = RoomLayout::from_walls(rectangular_walls(2.0, 2.0, 2.44), 0.0, 2.44).unwrap();
        Dataset::write(dir.path(), &layout, &[frame(0), frame(1), frame(2)], None).unwrap();
        std::fs::remove_file(color_path(&dir.path().join(FRAMES_DIR), 1)).unwrap();
        assert!(matches!(Dataset::load(dir.path()), Err(Error::MalformedDataset(_))));
        std::fs::remove_file(dir.path().join(LAYOUT_FILE)).unwrap();
        assert!(matches!(Dataset::load_layout(dir.path()), Err(Error::MalformedDataset(_))));
    }
}
