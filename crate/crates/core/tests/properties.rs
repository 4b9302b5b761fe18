//! Property tests for the module invariants.

mod common;

use std::collections::BTreeSet;

use common::*;
use proptest::prelude::*;
use rand::Rng;
use roomtex::camera::{look_at, CameraIntrinsics};
use roomtex::cdt::triangulate_polygon;
use roomtex::geom::{Mat4, Vec2, Vec3};
use roomtex::layout::{mbb_of_points, parse_layout_str, rectangular_walls, RoomLayout};
use roomtex::mesh::{FaceLabel, TriMesh};
use roomtex::meshproc::{combine, filter_mesh, remesh_walls, FilterParams};
use roomtex::metrics::{blurriness, psnr, sample_by_blur, ssim, SamplingParams, PSNR_CAP};
use roomtex::plane2image::{pixel_extent, plane_camera, render_quad, simplify_and_remap, PlaneImage, PIXELS_PER_METER};
use roomtex::planner::{plan_room, PlannerParams};
use roomtex::post::{import_inpaint_result, sample_mode, SampleSpec};
use roomtex::texturing::mrf::{solve, MrfProblem, SolverOptions};

fn shoelace2(poly: &[Vec2]) -> f64 {
    shoelace(&poly.iter().map(|p| V2::new(p.x, p.y)).collect::<Vec<_>>())
}

fn star_layout(seed: u64, n: usize) -> RoomLayout {
    let mut r = rng(seed);
    let poly = star_polygon(&mut r, n, 1.5, 4.0);
    RoomLayout::from_walls(walls_from_polygon(&poly, 2.5), 0.0, 2.5).unwrap()
}

fn random_image(seed: u64, w: u32, h: u32) -> image::RgbImage {
    let mut r = rng(seed);
    image::RgbImage::from_fn(w, h, |_, _| image::Rgb(r.random()))
}

/// Triangles scattered through a `w x d x h` room, some flush with walls.
fn clutter(seed: u64, w: f64, d: f64, h: f64, n: usize) -> TriMesh {
    let mut r = rng(seed);
    let mut vertices = Vec::new();
    let mut faces = Vec::new();
    for i in 0..n {
        let c = Vec3::new(r.random_range(0.0..w), r.random_range(0.0..h), r.random_range(0.0..d));
        let s = r.random_range(0.02..0.3);
        for _ in 0..3 {
            vertices.push(c + Vec3::new(r.random_range(-s..s), r.random_range(-s..s), r.random_range(-s..s)));
        }
        faces.push([3 * i as u32, 3 * i as u32 + 1, 3 * i as u32 + 2]);
    }
    TriMesh::new(vertices, faces, vec![FaceLabel::Object; n])
}

fn face_keys(m: &TriMesh) -> BTreeSet<[u64; 9]> {
    (0..m.num_faces())
        .map(|f| {
            let t = m.tri(f);
            [t[0].x, t[0].y, t[0].z, t[1].x, t[1].y, t[1].z, t[2].x, t[2].y, t[2].z].map(f64::to_bits)
        })
        .collect()
}

fn random_problem(seed: u64) -> MrfProblem {
    let mut r = rng(seed);
    let n = r.random_range(1..40usize);
    let labels = r.random_range(1..6u32);
    let mut unary = vec![Vec::new(); n];
    for u in &mut unary {
        for l in 0..labels {
            if r.random_bool(0.7) {
                u.push((l, -r.random_range(0.0..1.0)));
            }
        }
    }
    let mut edges: Vec<(u32, u32)> = (1..n as u32).map(|i| (r.random_range(0..i), i)).collect();
    edges.sort_unstable();
    MrfProblem { unary, edges, lambda: r.random_range(0.0..1.5) }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn mbb_is_rigid_invariant_and_within_the_aabb(seed in 0u64..10_000, angle in 0.0f64..std::f64::consts::TAU, tx in -10.0f64..10.0, ty in -10.0f64..10.0) {
        let mut r = rng(seed);
        let n = r.random_range(3..20);
        let pts: Vec<Vec2> = (0..n).map(|_| Vec2::new(r.random_range(-3.0..3.0), r.random_range(-3.0..3.0))).collect();
        let (s, c) = angle.sin_cos();
        let moved: Vec<Vec2> = pts.iter().map(|p| Vec2::new(c * p.x - s * p.y + tx, s * p.x + c * p.y + ty)).collect();
        let a = mbb_of_points(&pts).unwrap().area();
        let b = mbb_of_points(&moved).unwrap().area();
        prop_assert!((a - b).abs() <= 1e-6 * a.max(b));
        let (lo, hi) = pts.iter().fold((Vec2::repeat(f64::INFINITY), Vec2::repeat(f64::NEG_INFINITY)), |(lo, hi), p| (lo.inf(p), hi.sup(p)));
        prop_assert!(a <= (hi.x - lo.x) * (hi.y - lo.y) * (1.0 + 1e-12));
    }

    #[test]
    fn hull_area_covers_loop_area(seed in 0u64..10_000, n in 3usize..12) {
        let layout = star_layout(seed, n);
        prop_assert!(layout.closed);
        let loop_area = shoelace2(layout.loop_polygon.as_ref().unwrap()).abs();
        prop_assert!(shoelace2(&layout.hull).abs() >= loop_area * (1.0 - 1e-12));
    }

    #[test]
    fn layout_json_round_trips(seed in 0u64..10_000, n in 3usize..12) {
        let layout = parse_layout_str(&star_layout(seed, n).to_json()).unwrap();
        let text = layout.to_json();
        let back = parse_layout_str(&text).unwrap();
        prop_assert_eq!(&back, &layout);
        prop_assert_eq!(back.to_json(), text);
    }

    #[test]
    fn filter_is_idempotent_and_monotone_in_the_near_band(seed in 0u64..10_000, near in 0.01f64..0.2, extra in 0.01f64..0.2) {
        let layout = RoomLayout::from_walls(rectangular_walls(4.0, 3.0, 2.5), 0.0, 2.5).unwrap();
        let mesh = clutter(seed, 4.0, 3.0, 2.5, 60);
        let p = FilterParams { dist_band_near: near, dist_band_far: near + 0.1, ..FilterParams::default() };
        let once = filter_mesh(&mesh, &layout, &p);
        let twice = filter_mesh(&once, &layout, &p);
        prop_assert_eq!(face_keys(&once), face_keys(&twice));
        let wider = FilterParams { dist_band_near: near + extra, dist_band_far: near + extra + 0.1, ..p };
        let kept_wide = face_keys(&filter_mesh(&mesh, &layout, &wider));
        prop_assert!(kept_wide.is_subset(&face_keys(&once)));
    }

    #[test]
    fn combine_preserves_area(seed in 0u64..10_000, grid in 2.0f64..8.0) {
        let layout = RoomLayout::from_walls(rectangular_walls(3.0, 2.0, 2.4), 0.0, 2.4).unwrap();
        let objects = clutter(seed, 3.0, 2.0, 2.4, 20);
        let walls = remesh_walls(&layout, grid).unwrap();
        let both = combine(&objects, &walls);
        let want = objects.total_area() + walls.total_area();
        prop_assert!((both.total_area() - want).abs() <= 1e-9 * want);
        prop_assert_eq!(both.num_faces(), objects.num_faces() + walls.num_faces());
    }

    #[test]
    fn cdt_keeps_constraints_and_area(seed in 0u64..10_000, n in 3usize..16, steiner in 0usize..40) {
        let mut r = rng(seed);
        let poly = star_polygon(&mut r, n, 1.0, 3.0);
        let interior: Vec<Vec2> = (0..steiner)
            .map(|_| V2::new(r.random_range(-3.0..3.0), r.random_range(-3.0..3.0)))
            .filter(|p| inside_polygon(*p, &poly))
            .map(|p| Vec2::new(p.x, p.y))
            .collect();
        let boundary: Vec<Vec2> = poly.iter().map(|p| Vec2::new(p.x, p.y)).collect();
        let t = triangulate_polygon(&boundary, &interior).unwrap();
        let want = shoelace(&poly);
        prop_assert!((t.area() - want).abs() <= 1e-9 * want);
        let edges: BTreeSet<(u32, u32)> = t.edges().into_iter().collect();
        for &(a, b) in &t.constraints {
            prop_assert!(edges.contains(&(a.min(b), a.max(b))));
        }
    }

    #[test]
    fn plans_partition_walls_and_are_deterministic(w in 1.5f64..7.0, d in 1.5f64..7.0, h in 2.2f64..3.2) {
        let layout = RoomLayout::from_walls(rectangular_walls(w, d, h), 0.0, h).unwrap();
        let k = CameraIntrinsics::phone();
        let params = PlannerParams::default();
        let (plan, failures) = plan_room(&layout, &k, &params);
        let (again, _) = plan_room(&layout, &k, &params);
        prop_assert_eq!(serde_json::to_string(&plan).unwrap(), serde_json::to_string(&again).unwrap());
        prop_assert!(failures.is_empty());
        for wall in &layout.walls {
            let rects: Vec<[f64; 4]> = plan.entries.iter().filter(|e| e.subplane.parent_id == wall.id).map(|e| e.subplane.rect).collect();
            let area: f64 = rects.iter().map(|r| (r[2] - r[0]) * (r[3] - r[1])).sum();
            prop_assert!((area - wall.width * wall.height).abs() <= 1e-9 * wall.width * wall.height);
            for (i, a) in rects.iter().enumerate() {
                for b in &rects[i + 1..] {
                    let ox = (a[2].min(b[2]) - a[0].max(b[0])).max(0.0);
                    let oy = (a[3].min(b[3]) - a[1].max(b[1])).max(0.0);
                    prop_assert!(ox * oy <= 1e-12);
                }
            }
        }
        for e in &plan.entries {
            prop_assert!(e.distance <= params.max_distance);
        }
    }

    #[test]
    fn shrinking_max_distance_never_drops_entries(w in 3.0f64..7.0, d in 3.0f64..7.0, shrink in 0.3f64..1.0) {
        let layout = RoomLayout::from_walls(rectangular_walls(w, d, 2.44), 0.0, 2.44).unwrap();
        let k = CameraIntrinsics::phone();
        let wide = PlannerParams::default();
        let narrow = PlannerParams { max_distance: wide.max_distance * shrink, ..wide.clone() };
        let (a, _) = plan_room(&layout, &k, &wide);
        let (b, _) = plan_room(&layout, &k, &narrow);
        prop_assert!(b.entries.len() >= a.entries.len());
    }

    #[test]
    fn solver_never_loses_to_independent_argmax(seed in 0u64..10_000) {
        let p = random_problem(seed);
        let opts = SolverOptions { lambda: p.lambda, ..SolverOptions::default() };
        let labels = solve(&p, None, &opts).labels;
        let e = p.energy(&labels);
        prop_assert!(e <= p.energy(&p.argmax_labels()) + 1e-9);
        let warm = solve(&p, Some(&labels), &opts).labels;
        prop_assert!((p.energy(&warm) - e).abs() <= 1e-9);
    }

    #[test]
    fn plane_image_size_tracks_plane_size(width in 0.2f64..8.0, height in 0.2f64..4.0) {
        prop_assert!((pixel_extent(width) as f64 / PIXELS_PER_METER - width).abs() <= 1e-3);
        prop_assert!((pixel_extent(height) as f64 / PIXELS_PER_METER - height).abs() <= 1e-3);
    }

    #[test]
    fn plane_render_is_deterministic_and_stable(seed in 0u64..10_000, width in 0.3f64..1.5, height in 0.3f64..1.2) {
        let layout = RoomLayout::from_walls(rectangular_walls(width, 1.0, height), 0.0, height).unwrap();
        let plane = &layout.walls[0];
        let cam = plane_camera(plane, layout.mbb.align);
        let n = (cam.image_width * cam.image_height) as usize;
        let src = PlaneImage {
            plane_id: plane.id,
            pixels: random_image(seed, cam.image_width, cam.image_height),
            meters_per_pixel: 1.0 / PIXELS_PER_METER,
            untextured: vec![false; n],
        };
        let quad = simplify_and_remap(plane, &cam);
        let a = render_quad(&quad, &src, &cam);
        let b = render_quad(&quad, &src, &cam);
        prop_assert!(a.pixels == b.pixels);
        let c = render_quad(&quad, &a, &cam);
        prop_assert!(c.pixels == a.pixels);
        prop_assert!(c.untextured == a.untextured);
    }

    #[test]
    fn sample_mode_repeats_with_the_pitch(seed in 0u64..10_000, tw in 10u32..60, th in 10u32..60, kx in -3i32..3, ky in -3i32..3) {
        let mpp = 1.0 / PIXELS_PER_METER;
        let target = PlaneImage { plane_id: 0, pixels: image::RgbImage::new(300, 200), meters_per_pixel: mpp, untextured: vec![true; 300 * 200] };
        let spec = SampleSpec {
            sample: random_image(seed, 16, 16),
            sample_width: tw as f64 * mpp,
            sample_height: th as f64 * mpp,
            sample_offset: 0.0,
            sample_angle: 0.0,
            phase: Vec2::zeros(),
        };
        let shifted = SampleSpec { phase: Vec2::new(kx as f64 * spec.sample_width, ky as f64 * spec.sample_height), ..spec.clone() };
        let a = sample_mode(&target, &spec).unwrap();
        let b = sample_mode(&target, &shifted).unwrap();
        prop_assert_eq!(a.pixels.dimensions(), (300, 200));
        prop_assert_eq!(a.meters_per_pixel, mpp);
        prop_assert!(a.pixels == b.pixels);
    }

    #[test]
    fn identity_inpainting_is_a_fixed_point(seed in 0u64..10_000, holes in 0.0f64..0.5) {
        let mut r = rng(seed);
        let (w, h) = (40u32, 30u32);
        let plane = PlaneImage {
            plane_id: 2,
            pixels: random_image(seed, w, h),
            meters_per_pixel: 0.002,
            untextured: (0..w * h).map(|_| r.random_bool(holes)).collect(),
        };
        let back = import_inpaint_result(&plane, &plane.pixels).unwrap();
        prop_assert!(back.pixels == plane.pixels);
        prop_assert_eq!(back.meters_per_pixel, plane.meters_per_pixel);
    }

    #[test]
    fn metrics_are_symmetric_bounded_and_exact_on_identity(seed in 0u64..10_000, w in 16u32..48, h in 16u32..48) {
        let a = random_image(seed, w, h);
        let b = random_image(seed + 1, w, h);
        prop_assert_eq!(psnr(&a, &b).unwrap(), psnr(&b, &a).unwrap());
        prop_assert!((ssim(&a, &b).unwrap() - ssim(&b, &a).unwrap()).abs() <= 1e-12);
        prop_assert_eq!(psnr(&a, &a).unwrap(), PSNR_CAP);
        prop_assert_eq!(ssim(&a, &a).unwrap(), 1.0);
        let s = blurriness(&a).unwrap();
        prop_assert!((0.0..=1.0).contains(&s));
        prop_assert!((s - reference_blur(&a)).abs() <= 1e-12);
    }

    #[test]
    fn frame_sampling_size_is_bounded(seed in 0u64..10_000, n in 1usize..120, step in 0.0f64..0.08) {
        let mut r = rng(seed);
        let blur: Vec<f64> = (0..n).map(|_| r.random()).collect();
        let poses: Vec<Mat4> = (0..n)
            .map(|i| {
                let eye = Vec3::new(i as f64 * step, 1.2, 0.0);
                look_at(eye, eye + Vec3::new(r.random_range(-0.1..0.1), 0.0, -1.0), Vec3::y())
            })
            .collect();
        let params = SamplingParams::default();
        let kept = sample_by_blur(&blur, &poses, &params);
        // Independent count of group members far from their group's sharpest frame.
        let mut exceptions = 0;
        for start in (0..n).step_by(params.group_size) {
            let end = (start + params.group_size).min(n);
            let best = (start..end).min_by(|&a, &b| blur[a].total_cmp(&blur[b])).unwrap();
            prop_assert!(kept.contains(&best));
            for i in (start..end).filter(|&i| i != best) {
                let (dt, dr) = roomtex::camera::pose_difference(&poses[best], &poses[i]);
                exceptions += (dt > params.pose_translation || dr > params.pose_rotation_deg) as usize;
            }
        }
        prop_assert_eq!(kept.len(), n.div_ceil(params.group_size) + exceptions);
    }
}
