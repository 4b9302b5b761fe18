//! End-to-end orchestration: configuration, stage timing, and the run over a
//! dataset directory.

use std::path::{Path, PathBuf};
use std::time::Instant;

use image::RgbImage;
use serde::{Deserialize, Serialize};

use crate::camera::{k_average, CameraIntrinsics, Frame};
use crate::dataset::{Dataset, GroundTruth};
use crate::error::{Error, Result};
use crate::eval::{local_eval, plane_eval, EvalReport};
use crate::imageops::rgb_to_rgba;
use crate::layout::RoomLayout;
use crate::mesh::TriMesh;
use crate::meshproc::{process_mesh, FilterParams};
use crate::metrics::{sample_frames, SamplingParams};
use crate::plane2image::{render_all_planes, save_planes, save_simplified_model, simplify_and_remap, quad_render_mesh, PlaneCamera, PlaneImage};
use crate::planner::{plan_room, CapturePlan, PlannerParams};
use crate::post::{image_mode, sample_mode, SampleParams, SampleSpec};
use crate::raster::RenderMesh;
use crate::texturing::{bake_atlas, build_candidate_table, solve_labels, LabelAssignment, TextureAtlas, UNTEXTURED};

pub const STAGE_LAYOUT: &str = "layoutParsing";
pub const STAGE_MESH: &str = "meshProc";
pub const STAGE_PLANNING: &str = "planning";
pub const STAGE_TEXTURING: &str = "texturing";
pub const STAGE_PLANE2IMAGE: &str = "plane2image";
pub const STAGE_POST: &str = "postTexturing";
pub const STAGE_EVAL: &str = "evaluation";

/// Which frames of the dataset feed the texturing stage.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CaptureMode {
    /// The dataset holds frames recaptured along the plan; all are used.
    #[default]
    Planned,
    /// Sharpness-based subsampling of a dense capture.
    Sampled,
    /// Every frame, unfiltered.
    All,
}

/// Plane selector in post-texturing jobs: a numeric id, `"floor"` or
/// `"ceiling"`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PlaneRef {
    Id(u32),
    Name(String),
}

impl PlaneRef {
    pub fn resolve(&self, layout: &RoomLayout) -> Result<u32> {
        match self {
            PlaneRef::Id(id) if layout.plane(*id).is_some() => Ok(*id),
            PlaneRef::Id(id) => Err(Error::InvalidParameter(format!("no plane with id {id}"))),
            PlaneRef::Name(n) if n == "floor" => Ok(layout.floor_id()),
            PlaneRef::Name(n) if n == "ceiling" => Ok(layout.ceiling_id()),
            PlaneRef::Name(n) => n
                .parse::<u32>()
                .ok()
                .filter(|id| layout.plane(*id).is_some())
                .ok_or_else(|| Error::InvalidParameter(format!("unknown plane {n:?}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct SampleJob {
    pub plane: PlaneRef,
    pub image: PathBuf,
    pub sample_width: f64,
    pub sample_height: f64,
    #[serde(default)]
    pub sample_offset: f64,
    #[serde(default)]
    pub sample_angle: f64,
}

impl SampleJob {
    pub fn params(&self) -> SampleParams {
        SampleParams {
            sample_width: self.sample_width,
            sample_height: self.sample_height,
            sample_offset: self.sample_offset,
            sample_angle: self.sample_angle,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct ImageJob {
    pub plane: PlaneRef,
    pub image: PathBuf,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", default, deny_unknown_fields)]
pub struct PostConfig {
    pub sample: Vec<SampleJob>,
    pub image: Vec<ImageJob>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", default, deny_unknown_fields)]
pub struct Config {
    pub mode: CaptureMode,
    pub filter: FilterParams,
    pub wall_grid_per_meter: f64,
    pub horizontal_grid_n: usize,
    pub planner: PlannerParams,
    pub sampling: SamplingParams,
    pub angle_max_deg: f64,
    pub lambda: f64,
    /// Worker threads; 0 uses every core.
    pub workers: usize,
    pub post: PostConfig,
    /// Directory that relative paths in `post` are resolved against.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

impl Default for Config {
    fn default() -> Self {
        Config {
            mode: CaptureMode::Planned,
            filter: FilterParams::default(),
            wall_grid_per_meter: 5.0,
            horizontal_grid_n: 15,
            planner: PlannerParams::default(),
            sampling: SamplingParams::default(),
            angle_max_deg: 45.0,
            lambda: 1.0,
            workers: 0,
            post: PostConfig::default(),
            base_dir: PathBuf::new(),
        }
    }
}

impl Config {
    pub fn from_toml(text: &str) -> Result<Config> {
        let c: Config = toml::from_str(text)?;
        c.validate()?;
        Ok(c)
    }

    pub fn load(path: &Path) -> Result<Config> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut c = Self::from_toml(&text)?;
        c.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(c)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config is always serializable")
    }

    pub fn validate(&self) -> Result<()> {
        self.filter.validate()?;
        self.planner.validate()?;
        if !(self.wall_grid_per_meter >= 0.0) || !(self.lambda >= 0.0) || !(self.angle_max_deg > 0.0 && self.angle_max_deg <= 90.0) {
            return Err(Error::InvalidParameter(format!(
                "need wallGridPerMeter >= 0, lambda >= 0 and 0 < angleMaxDeg <= 90 (got {}, {}, {})",
                self.wall_grid_per_meter, self.lambda, self.angle_max_deg
            )));
        }
        if self.sampling.group_size == 0 {
            return Err(Error::InvalidParameter("sampling.groupSize must be at least 1".into()));
        }
        Ok(())
    }

    fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }
}

/// Wall-clock milliseconds per stage.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct TimingReport {
    pub layout_parsing: f64,
    pub mesh_proc: f64,
    pub planning: f64,
    pub texturing: f64,
    pub plane2image: f64,
    pub post_texturing: f64,
    pub evaluation: f64,
    pub total: f64,
}

impl TimingReport {
    pub fn stage_sum(&self) -> f64 {
        self.layout_parsing + self.mesh_proc + self.planning + self.texturing + self.plane2image + self.post_texturing + self.evaluation
    }

    fn slot(&mut self, stage: &str) -> &mut f64 {
        match stage {
            STAGE_LAYOUT => &mut self.layout_parsing,
            STAGE_MESH => &mut self.mesh_proc,
            STAGE_PLANNING => &mut self.planning,
            STAGE_TEXTURING => &mut self.texturing,
            STAGE_PLANE2IMAGE => &mut self.plane2image,
            STAGE_POST => &mut self.post_texturing,
            _ => &mut self.evaluation,
        }
    }

    /// Runs `f`, adds its duration to `stage` and tags its error.
    pub fn time<T>(&mut self, stage: &'static str, f: impl FnOnce() -> Result<T>) -> Result<T> {
        let t = Instant::now();
        let r = f();
        *self.slot(stage) += t.elapsed().as_secs_f64() * 1000.0;
        r.map_err(|e| e.in_stage(stage))
    }
}

/// Result of the texturing stage.
#[derive(Clone, Debug)]
pub struct Texturing {
    pub assignment: LabelAssignment,
    pub atlas: TextureAtlas,
    /// Milliseconds spent building the candidate table and solving.
    pub table_and_solve_ms: f64,
}

/// Candidate table, MRF labeling and atlas for `mesh` over `frames`.
pub fn texture_mesh(mesh: &TriMesh, frames: &[Frame], angle_max_deg: f64, lambda: f64) -> Texturing {
    let t = Instant::now();
    let table = build_candidate_table(mesh, frames, angle_max_deg);
    let assignment = solve_labels(&table, mesh, lambda);
    let table_and_solve_ms = t.elapsed().as_secs_f64() * 1000.0;
    let atlas = bake_atlas(mesh, &assignment, frames);
    Texturing { assignment, atlas, table_and_solve_ms }
}

/// Everything produced by [`process_room`].
#[derive(Clone, Debug)]
pub struct RoomModel {
    pub plan: CapturePlan,
    /// Planner failures as messages (for example unplannable walls).
    pub plan_failures: Vec<String>,
    /// Dataset indices of the frames used for texturing.
    pub frames_used: Vec<usize>,
    pub combined: TriMesh,
    pub texturing: Texturing,
    pub planes: Vec<(PlaneCamera, PlaneImage)>,
    /// Two-triangle quads, one per plane, in the order of `planes`.
    pub quads: Vec<TriMesh>,
}

impl RoomModel {
    pub fn plane_image(&self, id: u32) -> Option<&PlaneImage> {
        self.planes.iter().map(|(_, p)| p).find(|p| p.plane_id == id)
    }

    /// Render geometry and pages of the simplified model.
    pub fn render_model(&self) -> (RenderMesh, Vec<image::RgbaImage>) {
        let mut rm = RenderMesh::default();
        let mut pages = Vec::new();
        for (k, (q, (_, img))) in self.quads.iter().zip(&self.planes).enumerate() {
            let part = quad_render_mesh(q, k as u32);
            for f in 0..part.faces.len() {
                rm.push_face(part.faces[f].map(|i| part.positions[i as usize]), k as u32, part.face_uv[f]);
            }
            pages.push(rgb_to_rgba(&img.pixels, Some(&img.untextured)));
        }
        (rm, pages)
    }
}

/// Frames chosen for texturing under `mode`.
pub fn select_frames(frames: &[Frame], mode: CaptureMode, sampling: &SamplingParams) -> Vec<usize> {
    match mode {
        CaptureMode::Sampled => sample_frames(frames, sampling),
        CaptureMode::Planned | CaptureMode::All => (0..frames.len()).collect(),
    }
}

/// Runs mesh processing through plane-image rendering on in-memory inputs.
pub fn process_room(
    layout: &RoomLayout,
    mesh: Option<&TriMesh>,
    frames: &[Frame],
    config: &Config,
    timing: &mut TimingReport,
) -> Result<RoomModel> {
    config.validate()?;
    let combined = timing.time(STAGE_MESH, || {
        process_mesh(mesh, layout, &config.filter, config.wall_grid_per_meter, config.horizontal_grid_n)
    })?;
    let (plan, plan_failures, frames_used) = timing.time(STAGE_PLANNING, || {
        let k = if frames.is_empty() {
            CameraIntrinsics::phone()
        } else {
            k_average(&frames.iter().map(|f| f.intrinsics).collect::<Vec<_>>())?
        };
        let (plan, failures) = plan_room(layout, &k, &config.planner);
        let used = select_frames(frames, config.mode, &config.sampling);
        Ok((plan, failures.iter().map(ToString::to_string).collect(), used))
    })?;
    let chosen: Vec<Frame> = frames_used.iter().map(|&i| frames[i].clone()).collect();
    let texturing = timing.time(STAGE_TEXTURING, || Ok(texture_mesh(&combined, &chosen, config.angle_max_deg, config.lambda)))?;
    let (planes, quads) = timing.time(STAGE_PLANE2IMAGE, || {
        let planes = render_all_planes(layout, &combined, &texturing.atlas);
        let quads = layout
            .all_planes()
            .iter()
            .zip(&planes)
            .map(|(p, (cam, _))| simplify_and_remap(p, cam))
            .collect();
        Ok((planes, quads))
    })?;
    Ok(RoomModel { plan, plan_failures, frames_used, combined, texturing, planes, quads })
}

/// Applies the configured SampleMode and ImageMode jobs.
pub fn post_texture(model: &mut RoomModel, layout: &RoomLayout, post: &PostConfig, config: &Config) -> Result<()> {
    let mut set = |id: u32, f: &dyn Fn(&PlaneImage) -> Result<PlaneImage>| -> Result<()> {
        let slot = model
            .planes
            .iter_mut()
            .find(|(_, p)| p.plane_id == id)
            .ok_or_else(|| Error::InvalidParameter(format!("no plane image for plane {id}")))?;
        slot.1 = f(&slot.1)?;
        Ok(())
    };
    for job in &post.sample {
        let id = job.plane.resolve(layout)?;
        let sample = image::open(config.resolve(&job.image))?.to_rgb8();
        let spec = SampleSpec::new(sample, &job.params());
        set(id, &|p| sample_mode(p, &spec))?;
    }
    for job in &post.image {
        let id = job.plane.resolve(layout)?;
        let img: RgbImage = image::open(config.resolve(&job.image))?.to_rgb8();
        set(id, &|p| image_mode(p, &img))?;
    }
    Ok(())
}

/// Evaluation reports of one run.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct EvalSummary {
    /// Plane images against ground-truth plane textures.
    pub global: Option<EvalReport>,
    /// Renders of the simplified model against ground-truth views.
    pub local: Option<EvalReport>,
}

pub fn evaluate(model: &RoomModel, gt: &GroundTruth) -> Result<EvalSummary> {
    if gt.is_empty() {
        return Err(Error::NoGroundTruth);
    }
    let images: Vec<PlaneImage> = model.planes.iter().map(|(_, p)| p.clone()).collect();
    let global = if gt.planes.is_empty() { None } else { Some(plane_eval(&images, &gt.planes)?) };
    let local = if gt.views.is_empty() {
        None
    } else {
        let (rm, pages) = model.render_model();
        Some(local_eval(&rm, &pages, &gt.views)?)
    };
    Ok(EvalSummary { global, local })
}

/// Output of [`run_pipeline`].
#[derive(Clone, Debug)]
pub struct PipelineRun {
    pub model: RoomModel,
    pub eval: Option<EvalSummary>,
    pub timing: TimingReport,
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

#[derive(Serialize)]
struct AssignmentFile<'a> {
    /// Dataset frame index of each image id.
    frames: &'a [usize],
    /// Per face: dataset frame index, or -1 when untextured.
    labels: Vec<i64>,
}

/// Runs the full pipeline on the dataset at `root`, writing artifacts into
/// `out` as each stage completes.
pub fn run_pipeline(root: &Path, config: &Config, out: &Path) -> Result<PipelineRun> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.workers)
        .build()
        .map_err(|e| Error::InvalidParameter(format!("thread pool: {e}")))?;
    pool.install(|| run_in_pool(root, config, out))
}

fn run_in_pool(root: &Path, config: &Config, out: &Path) -> Result<PipelineRun> {
    let start = Instant::now();
    let mut timing = TimingReport::default();
    std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let (layout, dataset) = timing.time(STAGE_LAYOUT, || Ok((Dataset::load_layout(root)?, Dataset::load(root)?)))?;
    let result = process_room(&layout, dataset.mesh.as_ref(), &dataset.frames, config, &mut timing);
    let mut model = match result {
        Ok(m) => m,
        Err(e) => {
            timing.total = start.elapsed().as_secs_f64() * 1000.0;
            let _ = write_json(&out.join("timing.json"), &timing);
            return Err(e);
        }
    };
    timing.time(STAGE_PLANNING, || std::fs::write(out.join("plan.json"), model.plan.to_json()).map_err(|e| Error::io(out, e)))?;
    timing.time(STAGE_TEXTURING, || {
        let labels = model
            .texturing
            .assignment
            .labels
            .iter()
            .map(|&l| if l == UNTEXTURED { -1 } else { model.frames_used[l as usize] as i64 })
            .collect();
        write_json(&out.join("assignment.json"), &AssignmentFile { frames: &model.frames_used, labels })
    })?;
    timing.time(STAGE_POST, || {
        post_texture(&mut model, &layout, &config.post, config)?;
        save_planes(&out.join("planes"), &model.planes)?;
        save_simplified_model(&out.join("model"), "model", &model.quads, "../planes")
    })?;
    let gt = timing.time(STAGE_EVAL, || GroundTruth::load(root))?;
    let eval = if gt.is_empty() {
        None
    } else {
        Some(timing.time(STAGE_EVAL, || {
            let s = evaluate(&model, &gt)?;
            write_json(&out.join("eval-report.json"), &s)?;
            if let Some(g) = &s.global {
                std::fs::write(out.join("eval-global.csv"), g.to_csv()).map_err(|e| Error::io(out, e))?;
            }
            if let Some(l) = &s.local {
                std::fs::write(out.join("eval-local.csv"), l.to_csv()).map_err(|e| Error::io(out, e))?;
            }
            Ok(s)
        })?)
    };
    timing.total = start.elapsed().as_secs_f64() * 1000.0;
    write_json(&out.join("timing.json"), &timing)?;
    Ok(PipelineRun { model, eval, timing })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_defaults_round_trip() {
        let c = Config::default();
        let back = Config::from_toml(&c.to_toml()).unwrap();
        assert_eq!(back, c);
        let partial = Config::from_toml("mode = \"sampled\"\nlambda = 2.0\n[filter]\ndistBandNear = 0.04\n").unwrap();
        assert_eq!(partial.mode, CaptureMode::Sampled);
        assert_eq!(partial.filter.dist_band_far, 0.10);
        assert!(Config::from_toml("bogus = 1").is_err());
    }

    #[test]
    fn post_jobs_parse() {
        let c = Config::from_toml(
            "[[post.sample]]\nplane = \"floor\"\nimage = \"tile.png\"\nsampleWidth = 0.5\nsampleHeight = 0.5\n\n[[post.image]]\nplane = 2\nimage = \"art.png\"\n",
        )
        .unwrap();
        assert_eq!(c.post.sample[0].plane, PlaneRef::Name("floor".into()));
        assert_eq!(c.post.image[0].plane, PlaneRef::Id(2));
    }

    #[test]
    fn stage_errors_are_tagged() {
        let mut t = TimingReport::default();
        let e = t.time(STAGE_LAYOUT, || -> Result<()> { Err(Error::MalformedDataset("x".into())) }).unwrap_err();
        assert!(matches!(e, Error::Stage { stage: STAGE_LAYOUT, .. }));
        assert!(e.is_data_error());
        assert!(t.layout_parsing >= 0.0);
    }
}
