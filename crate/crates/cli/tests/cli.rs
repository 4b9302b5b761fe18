use std::path::Path;
use std::process::{Command, Output};

use roomtex::layout::{rectangular_walls, RoomLayout};
use roomtex::plane2image::PlaneImage;
use serde_json::Value;

fn roomtex(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_roomtex"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn synth_small(dir: &Path) {
    let out = roomtex(&["synth", "--seed", "7", "--width", "2.4", "--depth", "2.4", "--out", s(dir)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn plan_on_unit_square_room() {
    let tmp = tempfile::tempdir().unwrap();
    let layout = tmp.path().join("layout.json");
    RoomLayout::from_walls(rectangular_walls(1.0, 1.0, 2.44), 0.0, 2.44).unwrap().save(&layout).unwrap();
    let plan = tmp.path().join("plan.json");
    let out = roomtex(&["plan", "--layout", s(&layout), "--out", s(&plan)]);
    assert!(out.status.success());
    let v: Value = serde_json::from_str(&std::fs::read_to_string(&plan).unwrap()).unwrap();
    let entries = v.as_array().unwrap();
    assert!(entries.len() >= 4, "{} entries", entries.len());
    for e in entries {
        let p = e["cameraPos"].as_array().unwrap();
        let (x, z) = (p[0].as_f64().unwrap(), p[2].as_f64().unwrap());
        assert!(x > 0.0 && x < 1.0 && z > 0.0 && z < 1.0);
    }
}

#[test]
fn usage_errors_exit_2() {
    assert_eq!(roomtex(&["bogus"]).status.code(), Some(2));
    assert_eq!(roomtex(&["plan"]).status.code(), Some(2));
}

#[test]
fn missing_layout_is_a_data_error_in_layout_parsing() {
    let tmp = tempfile::tempdir().unwrap();
    let out = roomtex(&["run", "--dataset", s(tmp.path()), "--out", s(&tmp.path().join("out"))]);
    assert_eq!(out.status.code(), Some(3));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("layoutParsing"), "{err}");
}

#[test]
fn bad_config_is_a_usage_error() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("c.toml");
    std::fs::write(&cfg, "lambda = -1.0\n").unwrap();
    let layout = tmp.path().join("layout.json");
    RoomLayout::from_walls(rectangular_walls(2.0, 2.0, 2.44), 0.0, 2.44).unwrap().save(&layout).unwrap();
    let out = roomtex(&["--config", s(&cfg), "plan", "--layout", s(&layout)]);
    assert_eq!(out.status.code(), Some(2));
    std::fs::write(&cfg, "lamda = 1.0\n").unwrap();
    let out = roomtex(&["--config", s(&cfg), "plan", "--layout", s(&layout)]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn eval_without_ground_truth_fails() {
    let tmp = tempfile::tempdir().unwrap();
    let ds = tmp.path().join("ds");
    synth_small(&ds);
    std::fs::remove_dir_all(ds.join("gt")).unwrap();
    let run = tmp.path().join("run");
    assert!(roomtex(&["run", "--dataset", s(&ds), "--out", s(&run)]).status.success());
    let out = roomtex(&["eval", "--dataset", s(&ds), "--run", s(&run)]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("no ground truth"));
}

#[test]
fn bench_is_deterministic_and_timed() {
    let tmp = tempfile::tempdir().unwrap();
    let ds = tmp.path().join("ds");
    synth_small(&ds);
    let mut reports = Vec::new();
    for k in 0..2 {
        let out_dir = tmp.path().join(format!("bench{k}"));
        let out = roomtex(&["bench", "--dataset", s(&ds), "--out", s(&out_dir)]);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        let v: Value = serde_json::from_slice(&out.stdout).unwrap();
        reports.push(v);
    }
    assert_eq!(reports[0]["artifacts"], reports[1]["artifacts"]);
    let artifacts = reports[0]["artifacts"].as_object().unwrap();
    for name in ["plan.json", "assignment.json", "planes/planes.json", "model/model.obj", "eval-report.json"] {
        assert!(artifacts.contains_key(name), "missing {name}");
    }
    for r in &reports {
        let t = &r["timing"];
        for stage in ["layoutParsing", "meshProc", "planning", "texturing", "plane2image", "postTexturing"] {
            assert!(t[stage].as_f64().unwrap() >= 0.0);
        }
    }
    assert_ne!(reports[0]["timing"]["total"], reports[1]["timing"]["total"]);
}

#[test]
fn post_texturing_subcommands() {
    let tmp = tempfile::tempdir().unwrap();
    let ds = tmp.path().join("ds");
    synth_small(&ds);
    let run = tmp.path().join("run");
    assert!(roomtex(&["render", "--dataset", s(&ds), "--out", s(&run)]).status.success());
    let planes = run.join("planes");
    let floor = PlaneImage::load(&planes, 4).unwrap();
    assert!(floor.untextured_count() > 0);

    let jobs = tmp.path().join("jobs");
    let out = roomtex(&["inpaint-export", "--planes", s(&planes), "--plane", "4", "--jobs", s(&jobs)]);
    assert!(out.status.success());
    let job = jobs.join("4");
    let mut filled = image::open(job.join("image.png")).unwrap().to_rgb8();
    let mask = image::open(job.join("mask.png")).unwrap().to_luma8();
    for (x, y, p) in filled.enumerate_pixels_mut() {
        if mask.get_pixel(x, y)[0] > 0 {
            *p = image::Rgb([10, 200, 30]);
        }
    }
    filled.save(job.join("result.png")).unwrap();
    let merged_dir = tmp.path().join("merged");
    let out = roomtex(&["inpaint-import", "--planes", s(&planes), "--plane", "4", "--jobs", s(&jobs), "--out", s(&merged_dir)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(PlaneImage::load(&merged_dir, 4).unwrap().untextured_count(), 0);

    let sample = tmp.path().join("tile.png");
    image::RgbImage::from_fn(50, 50, |x, y| image::Rgb([(x * 5) as u8, (y * 5) as u8, 90])).save(&sample).unwrap();
    let tiled_dir = tmp.path().join("tiled");
    let out = roomtex(&[
        "sample-mode",
        "--planes",
        s(&planes),
        "--plane",
        "floor",
        "--layout",
        s(&ds.join("layout.json")),
        "--sample",
        s(&sample),
        "--sample-width",
        "0.4",
        "--sample-height",
        "0.4",
        "--out",
        s(&tiled_dir),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let tiled = PlaneImage::load(&tiled_dir, 4).unwrap();
    assert_eq!(tiled.untextured_count(), 0);
    assert_eq!(tiled.pixels.dimensions(), floor.pixels.dimensions());
}

#[test]
fn mesh_and_texture_subcommands() {
    let tmp = tempfile::tempdir().unwrap();
    let ds = tmp.path().join("ds");
    synth_small(&ds);
    let combined = tmp.path().join("combined.ply");
    let out = roomtex(&["mesh", "--layout", s(&ds.join("layout.json")), "--mesh", s(&ds.join("mesh.ply")), "--out", s(&combined)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(roomtex::mesh::load_mesh(&combined).unwrap().num_faces() > 0);
    let tex = tmp.path().join("tex");
    let out = roomtex(&["texture", "--dataset", s(&ds), "--out", s(&tex)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(tex.join("textured.obj").exists());
    assert!(tex.join("assignment.json").exists());
}
