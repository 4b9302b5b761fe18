use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use log::info;
use sha2::{Digest, Sha256};

use roomtex::camera::{k_average, CameraIntrinsics};
use roomtex::dataset::{Dataset, GroundTruth};
use roomtex::eval::GtFrame;
use roomtex::layout::parse_layout;
use roomtex::mesh::{load_mesh, save_mesh};
use roomtex::meshproc::process_mesh;
use roomtex::pipeline::{process_room, run_pipeline, select_frames, texture_mesh, Config, PlaneRef, TimingReport};
use roomtex::plane2image::{save_planes, save_simplified_model, PlaneImage};
use roomtex::planner::plan_room;
use roomtex::post::{export_inpaint_job, import_inpaint_job, sample_mode, InpaintExport, SampleParams, SampleSpec};
use roomtex::synth::{dense_orbit, generate_room, plan_poses, simulate_capture, NoiseModel, RoomSpec};
use roomtex::Error;

const EXIT_USAGE: u8 = 2;
const EXIT_DATA: u8 = 3;
const EXIT_STAGE: u8 = 4;

#[derive(Parser)]
#[command(name = "roomtex", version, about = "Layout-guided room texturing")]
struct Cli {
    /// TOML configuration; unset keys keep their defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Worker threads (overrides the configuration; 0 uses every core).
    #[arg(long, global = true)]
    workers: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Plan texture captures for every wall of a layout.
    Plan {
        #[arg(long)]
        layout: PathBuf,
        /// Intrinsics JSON (object or list); defaults to a portrait phone camera.
        #[arg(long)]
        intrinsics: Option<PathBuf>,
        #[arg(long, default_value = "plan.json")]
        out: PathBuf,
    },
    /// Filter a captured mesh against the layout and merge the remeshed planes.
    Mesh {
        #[arg(long)]
        layout: PathBuf,
        /// Captured mesh (PLY or OBJ); omit to build the layout planes only.
        #[arg(long)]
        mesh: Option<PathBuf>,
        #[arg(long, default_value = "combined.ply")]
        out: PathBuf,
    },
    /// Texture the combined mesh of a dataset and write the atlas model.
    Texture {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Render every plane of a dataset's textured model to plane images.
    Render {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Tile an exemplar image across a plane image.
    SampleMode {
        /// Directory holding plane_<id>.png and its mask.
        #[arg(long)]
        planes: PathBuf,
        /// Plane id, or "floor" / "ceiling" together with --layout.
        #[arg(long)]
        plane: String,
        #[arg(long)]
        layout: Option<PathBuf>,
        #[arg(long)]
        sample: PathBuf,
        #[arg(long)]
        sample_width: f64,
        #[arg(long)]
        sample_height: f64,
        #[arg(long, default_value_t = 0.0)]
        sample_offset: f64,
        #[arg(long, default_value_t = 0.0)]
        sample_angle: f64,
        /// Output directory; defaults to overwriting the input plane.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write image and mask for an external inpainting tool.
    InpaintExport {
        #[arg(long)]
        planes: PathBuf,
        #[arg(long)]
        plane: u32,
        #[arg(long)]
        jobs: PathBuf,
    },
    /// Merge an inpainted result.png back into a plane image.
    InpaintImport {
        #[arg(long)]
        planes: PathBuf,
        #[arg(long)]
        plane: u32,
        #[arg(long)]
        jobs: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Evaluate plane images of a run against the dataset ground truth.
    Eval {
        #[arg(long)]
        dataset: PathBuf,
        /// Output directory of a previous run.
        #[arg(long)]
        run: PathBuf,
    },
    /// Generate a synthetic room and write it as a dataset.
    Synth {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        width: Option<f64>,
        #[arg(long)]
        depth: Option<f64>,
        #[arg(long, default_value_t = 6.0)]
        max_side: f64,
        #[arg(long, default_value_t = 0)]
        occluders: usize,
        #[arg(long, value_enum, default_value_t = Trajectory::Plan)]
        trajectory: Trajectory,
        /// Frames of the orbit trajectory.
        #[arg(long, default_value_t = 240)]
        frames: usize,
        #[arg(long, default_value_t = 0.0)]
        pose_sigma_t: f64,
        #[arg(long, default_value_t = 0.0)]
        pose_sigma_r: f64,
        #[arg(long, default_value_t = 0.0)]
        blur_sigma: f64,
        #[arg(long)]
        random_walk: bool,
        /// Also write noise-free ground-truth views from the planned poses.
        #[arg(long)]
        gt_views: bool,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the pipeline and report stage timings and artifact hashes.
    Bench {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the full pipeline on a dataset.
    Run {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Trajectory {
    Plan,
    Orbit,
}

/// A bad command line or configuration file.
#[derive(Debug)]
struct Usage(String);

impl std::fmt::Display for Usage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Usage {}

fn load_config(cli: &Cli) -> Result<Config> {
    let mut config = match &cli.config {
        Some(p) => Config::load(p).map_err(|e| Usage(format!("config {}: {e}", p.display())))?,
        None => Config::default(),
    };
    if let Some(w) = cli.workers {
        config.workers = w;
    }
    config.validate().map_err(|e| Usage(format!("config: {e}")))?;
    Ok(config)
}

fn load_intrinsics(path: &Path) -> Result<CameraIntrinsics> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    if let Ok(k) = serde_json::from_str::<CameraIntrinsics>(&text) {
        return Ok(k);
    }
    let list: Vec<CameraIntrinsics> = serde_json::from_str(&text).map_err(Error::from)?;
    Ok(k_average(&list)?)
}

fn write_json(path: &Path, value: &impl serde::Serialize) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    fs::write(path, serde_json::to_string_pretty(value)?).with_context(|| format!("writing {}", path.display()))
}

fn load_plane(dir: &Path, id: u32) -> Result<PlaneImage> {
    Ok(PlaneImage::load(dir, id)?)
}

fn resolve_plane(plane: &str, layout: Option<&Path>) -> Result<u32> {
    let r = match plane.parse::<u32>() {
        Ok(id) => return Ok(id),
        Err(_) => PlaneRef::Name(plane.to_string()),
    };
    let Some(path) = layout else {
        bail!("plane {plane:?} needs --layout to resolve");
    };
    Ok(r.resolve(&parse_layout(path)?)?)
}

/// SHA-256 of every file below `dir` except timing reports, keyed by
/// relative path.
fn artifact_hashes(dir: &Path) -> Result<BTreeMap<String, String>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in fs::read_dir(&d)? {
            let path = entry?.path();
            if path.is_dir() {
                stack.push(path);
                continue;
            }
            let rel = path.strip_prefix(dir)?.to_string_lossy().replace('\\', "/");
            if rel == "timing.json" || rel == "bench.json" {
                continue;
            }
            out.insert(rel, hex::encode(Sha256::digest(fs::read(&path)?)));
        }
    }
    Ok(out)
}

fn run(cli: Cli) -> Result<()> {
    let config = load_config(&cli)?;
    match cli.command {
        Command::Plan { layout, intrinsics, out } => {
            let layout = parse_layout(&layout)?;
            let k = match intrinsics {
                Some(p) => load_intrinsics(&p)?,
                None => CameraIntrinsics::phone(),
            };
            let (plan, failures) = plan_room(&layout, &k, &config.planner);
            for f in &failures {
                log::warn!("{f}");
            }
            fs::write(&out, plan.to_json()).with_context(|| format!("writing {}", out.display()))?;
            info!("{} captures planned, {} walls unplannable", plan.len(), failures.len());
        }
        Command::Mesh { layout, mesh, out } => {
            let layout = parse_layout(&layout)?;
            let captured = mesh.as_deref().map(load_mesh).transpose()?;
            let combined = process_mesh(
                captured.as_ref(),
                &layout,
                &config.filter,
                config.wall_grid_per_meter,
                config.horizontal_grid_n,
            )?;
            save_mesh(&combined, &out)?;
            info!("{} faces written", combined.num_faces());
        }
        Command::Texture { dataset, out } => {
            let layout = Dataset::load_layout(&dataset)?;
            let data = Dataset::load(&dataset)?;
            let combined = process_mesh(
                data.mesh.as_ref(),
                &layout,
                &config.filter,
                config.wall_grid_per_meter,
                config.horizontal_grid_n,
            )?;
            let used = select_frames(&data.frames, config.mode, &config.sampling);
            let frames: Vec<_> = used.iter().map(|&i| data.frames[i].clone()).collect();
            let tex = texture_mesh(&combined, &frames, config.angle_max_deg, config.lambda);
            fs::create_dir_all(&out)?;
            tex.atlas.save_obj(&combined, &out, "textured")?;
            write_json(&out.join("assignment.json"), &tex.assignment)?;
            info!(
                "{} of {} faces untextured, table and solve {:.1} ms",
                tex.assignment.num_untextured(),
                combined.num_faces(),
                tex.table_and_solve_ms
            );
        }
        Command::Render { dataset, out } => {
            let layout = Dataset::load_layout(&dataset)?;
            let data = Dataset::load(&dataset)?;
            let mut timing = TimingReport::default();
            let model = process_room(&layout, data.mesh.as_ref(), &data.frames, &config, &mut timing)?;
            save_planes(&out.join("planes"), &model.planes)?;
            save_simplified_model(&out.join("model"), "model", &model.quads, "../planes")?;
        }
        Command::SampleMode { planes, plane, layout, sample, sample_width, sample_height, sample_offset, sample_angle, out } => {
            let id = resolve_plane(&plane, layout.as_deref())?;
            let target = load_plane(&planes, id)?;
            let img = image::open(&sample).with_context(|| format!("reading {}", sample.display()))?.to_rgb8();
            let params = SampleParams { sample_width, sample_height, sample_offset, sample_angle };
            let result = sample_mode(&target, &SampleSpec::new(img, &params))?;
            result.save(out.as_deref().unwrap_or(&planes))?;
        }
        Command::InpaintExport { planes, plane, jobs } => match export_inpaint_job(&load_plane(&planes, plane)?, &jobs)? {
            InpaintExport::NoOp => println!("plane {plane} is fully textured; nothing to inpaint"),
            InpaintExport::Written { image, mask } => println!("{}\n{}", image.display(), mask.display()),
        },
        Command::InpaintImport { planes, plane, jobs, out } => {
            let merged = import_inpaint_job(&load_plane(&planes, plane)?, &jobs)?;
            merged.save(out.as_deref().unwrap_or(&planes))?;
        }
        Command::Eval { dataset, run } => {
            let gt = GroundTruth::load(&dataset)?;
            if gt.is_empty() {
                return Err(Error::NoGroundTruth.into());
            }
            let planes_dir = run.join("planes");
            let mut images = Vec::new();
            for (id, _) in &gt.planes {
                images.push(load_plane(&planes_dir, *id)?);
            }
            let report = roomtex::eval::plane_eval(&images, &gt.planes)?;
            report.save(&run, "eval-global")?;
            println!("{}", report.to_json()?);
        }
        Command::Synth {
            seed,
            width,
            depth,
            max_side,
            occluders,
            trajectory,
            frames,
            pose_sigma_t,
            pose_sigma_r,
            blur_sigma,
            random_walk,
            gt_views,
            out,
        } => {
            let mut spec = RoomSpec::random(seed, max_side, occluders);
            spec.width = width.unwrap_or(spec.width);
            spec.depth = depth.unwrap_or(spec.depth);
            let room = generate_room(&spec)?;
            let k = CameraIntrinsics::phone();
            let (plan, failures) = plan_room(&room.layout, &k, &config.planner);
            for f in &failures {
                log::warn!("{f}");
            }
            let poses = match trajectory {
                Trajectory::Plan => plan_poses(&plan),
                Trajectory::Orbit => dense_orbit(&room.layout, frames, config.planner.camera_height),
            };
            let noise = NoiseModel { pose_sigma_t, pose_sigma_r, blur_sigma, seed, random_walk };
            let capture = simulate_capture(&room, &poses, &k, &noise)?;
            Dataset::write(&out, &room.layout, &capture.frames, Some(&room.scene_mesh()))?;
            let mut gt = GroundTruth { planes: room.textures.clone(), views: Vec::new() };
            if gt_views {
                let clean = simulate_capture(&room, &plan_poses(&plan), &k, &NoiseModel::default())?;
                gt.views = clean
                    .frames
                    .into_iter()
                    .map(|f| {
                        let n = (f.color.width() * f.color.height()) as usize;
                        GtFrame { frame: f, mask: vec![true; n] }
                    })
                    .collect();
            }
            gt.save(&out)?;
            info!("{} frames written to {}", poses.len(), out.display());
        }
        Command::Bench { dataset, out } => {
            let run = run_pipeline(&dataset, &config, &out)?;
            let hashes = artifact_hashes(&out)?;
            #[derive(serde::Serialize)]
            struct Bench<'a> {
                timing: &'a TimingReport,
                artifacts: BTreeMap<String, String>,
            }
            let report = Bench { timing: &run.timing, artifacts: hashes };
            write_json(&out.join("bench.json"), &report)?;
            println!("{}", serde_json::to_string_pretty(&report)?);
        }
        Command::Run { dataset, out } => {
            let run = run_pipeline(&dataset, &config, &out)?;
            if let Some(g) = run.eval.as_ref().and_then(|e| e.global.as_ref()) {
                info!("plane PSNR {:.2} dB, SSIM {:.4}, blur {:.4}", g.psnr.mean, g.ssim.mean, g.blur.mean);
            }
            info!("done in {:.0} ms", run.timing.total);
        }
    }
    Ok(())
}

fn exit_code(err: &anyhow::Error) -> u8 {
    if err.downcast_ref::<Usage>().is_some() {
        return EXIT_USAGE;
    }
    match err.downcast_ref::<Error>() {
        Some(e) if e.is_data_error() => EXIT_DATA,
        Some(Error::NoGroundTruth) => EXIT_DATA,
        Some(_) => EXIT_STAGE,
        None if err.downcast_ref::<std::io::Error>().is_some() => EXIT_DATA,
        None => EXIT_USAGE,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            // Library errors already carry their cause in the message.
            match err.downcast_ref::<Error>() {
                Some(e) => eprintln!("error: {e}"),
                None => eprintln!("error: {err:#}"),
            }
            ExitCode::from(exit_code(&err))
        }
    }
}
