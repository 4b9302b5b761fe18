//! End-to-end properties of the pipeline on synthetic rooms.

use roomtex::camera::{Camera, CameraIntrinsics};
use roomtex::geom::Vec3;
use roomtex::dataset::Dataset;
use roomtex::pipeline::{process_room, run_pipeline, Config, TimingReport};
use roomtex::planner::{plan_room, PlannerParams};
use roomtex::synth::{generate_room, plan_poses, simulate_capture, BoxOccluder, NoiseModel, RoomSpec};

/// Slab test: does the open segment `o -> p` pass through the box?
fn segment_hits_box(o: &Vec3, p: &Vec3, b: &BoxOccluder) -> bool {
    let d = p - o;
    let (mut t0, mut t1) = (1e-9f64, 1.0 - 1e-6f64);
    for k in 0..3 {
        if d[k].abs() < 1e-15 {
            if o[k] < b.min[k] || o[k] > b.max[k] {
                return false;
            }
            continue;
        }
        let (a, c) = ((b.min[k] - o[k]) / d[k], (b.max[k] - o[k]) / d[k]);
        t0 = t0.max(a.min(c));
        t1 = t1.min(a.max(c));
    }
    t0 <= t1
}

#[test]
fn pipeline_is_deterministic() {
    let room = generate_room(&RoomSpec { width: 2.4, depth: 3.2, height: 2.44, occluders: 1, seed: 11 }).unwrap();
    let k = CameraIntrinsics::phone();
    let (plan, _) = plan_room(&room.layout, &k, &PlannerParams::default());
    let noise = NoiseModel { pose_sigma_t: 0.02, pose_sigma_r: 1.0, blur_sigma: 1.0, seed: 3, random_walk: false };
    let cap = simulate_capture(&room, &plan_poses(&plan), &k, &noise).unwrap();
    let mesh = room.scene_mesh();
    let process = || {
        let mut timing = TimingReport::default();
        let model = process_room(&room.layout, Some(&mesh), &cap.frames, &Config::default(), &mut timing).unwrap();
        (model, timing)
    };
    let (a, _) = process();
    let (b, _) = process();
    assert_eq!(a.frames_used, b.frames_used);
    assert_eq!(a.texturing.assignment.labels, b.texturing.assignment.labels);
    for ((_, pa), (_, pb)) in a.planes.iter().zip(&b.planes) {
        assert!(pa.pixels == pb.pixels && pa.untextured == pb.untextured, "plane {} differs", pa.plane_id);
    }
}

#[test]
fn stage_timings_add_up_to_the_total() {
    let room = generate_room(&RoomSpec { width: 2.4, depth: 2.4, height: 2.44, occluders: 0, seed: 5 }).unwrap();
    let k = CameraIntrinsics::phone();
    let (plan, _) = plan_room(&room.layout, &k, &PlannerParams::default());
    let cap = simulate_capture(&room, &plan_poses(&plan), &k, &NoiseModel::default()).unwrap();
    let tmp = tempfile::tempdir().unwrap();
    let root = tmp.path().join("dataset");
    Dataset::write(&root, &room.layout, &cap.frames, Some(&room.scene_mesh())).unwrap();
    let run = run_pipeline(&root, &Config::default(), &tmp.path().join("out")).unwrap();
    let t = &run.timing;
    assert!(t.total > 0.0);
    assert!((t.stage_sum() - t.total).abs() <= 0.05 * t.total, "{t:?}");
}

#[test]
fn occluder_shadow_matches_the_untextured_mask() {
    let k = CameraIntrinsics::phone();
    let (mut inter, mut union) = (0usize, 0usize);
    for seed in [21, 22, 23] {
        let room = generate_room(&RoomSpec { width: 3.2, depth: 3.2, height: 2.44, occluders: 2, seed }).unwrap();
        let (plan, _) = plan_room(&room.layout, &k, &PlannerParams::default());
        let cap = simulate_capture(&room, &plan_poses(&plan), &k, &NoiseModel::default()).unwrap();
        let config = Config { wall_grid_per_meter: 25.0, ..Config::default() };
        let model = process_room(&room.layout, Some(&room.scene_mesh()), &cap.frames, &config, &mut TimingReport::default()).unwrap();
        let cos_max = config.angle_max_deg.to_radians().cos();
        let cams: Vec<Camera> = model.frames_used.iter().map(|&i| cap.frames[i].camera()).collect();
        for (pcam, img) in &model.planes {
            let Some(wall) = room.layout.wall(img.plane_id) else { continue };
            let view = pcam.camera();
            let (o, n) = (view.center(), wall.normal);
            for y in 0..img.height() {
                for x in 0..img.width() {
                    let dir = view.ray(&roomtex::geom::Vec2::new(x as f64 + 0.5, y as f64 + 0.5));
                    let p = o + dir * (n.dot(&(wall.center - o)) / n.dot(&dir));
                    // Seen: in frame, within the texturing angle limit, and not behind a box.
                    let seen = cams.iter().any(|c| {
                        c.project(&p).is_some_and(|(q, _)| c.in_bounds(&q))
                            && (c.center() - p).normalize().dot(&n) >= cos_max
                            && !room.boxes.iter().any(|b| segment_hits_box(&c.center(), &p, b))
                    });
                    let hidden = !seen;
                    let masked = img.untextured[(y * img.width() + x) as usize];
                    inter += (hidden && masked) as usize;
                    union += (hidden || masked) as usize;
                }
            }
        }
    }
    assert!(union > 0, "no wall is shadowed by the boxes");
    let iou = inter as f64 / union as f64;
    println!("shadow IoU {iou:.3} ({inter} / {union} px)");
    assert!(iou >= 0.9, "IoU {iou:.3} ({inter} / {union})");
}
