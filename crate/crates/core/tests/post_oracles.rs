//! Post-texturing operations against direct geometric constructions.

mod common;

use common::rng;
use rand::Rng;
use roomtex::geom::Vec2;
use roomtex::plane2image::PlaneImage;
use roomtex::post::{inpaint_mask, mean_color, sample_mode, tile_centers, SampleSpec, INPAINT_DILATION};

const MPP: f64 = 0.002;

fn blank(w: u32, h: u32) -> PlaneImage {
    PlaneImage { plane_id: 4, pixels: image::RgbImage::new(w, h), meters_per_pixel: MPP, untextured: vec![true; (w * h) as usize] }
}

#[test]
fn inpaint_mask_is_the_square_dilation_of_the_holes() {
    let mut r = rng(77);
    let (w, h) = (37usize, 23usize);
    for _ in 0..20 {
        let p = r.random_range(0.0..0.1);
        let holes: Vec<bool> = (0..w * h).map(|_| r.random_bool(p)).collect();
        let plane = PlaneImage { untextured: holes.clone(), ..blank(w as u32, h as u32) };
        let got = inpaint_mask(&plane);
        let d = INPAINT_DILATION as i64;
        for y in 0..h as i64 {
            for x in 0..w as i64 {
                let want = (-d..=d).any(|dy| {
                    (-d..=d).any(|dx| {
                        let (xx, yy) = (x + dx, y + dy);
                        xx >= 0 && yy >= 0 && xx < w as i64 && yy < h as i64 && holes[(yy * w as i64 + xx) as usize]
                    })
                });
                assert_eq!(got[(y * w as i64 + x) as usize], want, "pixel ({x}, {y})");
            }
        }
    }
}

/// Exemplar whose central half is red and border blue.
fn bullseye(n: u32) -> image::RgbImage {
    image::RgbImage::from_fn(n, n, |x, y| {
        let inner = (n / 4..3 * n / 4).contains(&x) && (n / 4..3 * n / 4).contains(&y);
        if inner { image::Rgb([220, 20, 20]) } else { image::Rgb([20, 20, 220]) }
    })
}

#[test]
fn rotated_lattice_with_offset_matches_its_construction() {
    let (w, h) = (800u32, 600u32);
    let spec = SampleSpec {
        sample: bullseye(40),
        sample_width: 0.3,
        sample_height: 0.2,
        sample_offset: 0.1,
        sample_angle: 30.0,
        phase: Vec2::zeros(),
    };
    let out = sample_mode(&blank(w, h), &spec).unwrap();
    assert_eq!(out.untextured_count(), 0);
    let px = 1.0 / MPP;
    let (pitch_u, pitch_v) = ((spec.sample_width + spec.sample_offset) * px, (spec.sample_height + spec.sample_offset) * px);
    // Tile axes in image coordinates (y down): counter-clockwise as viewed.
    let a = spec.sample_angle.to_radians();
    let (u, v) = (Vec2::new(a.cos(), -a.sin()), Vec2::new(a.sin(), a.cos()));
    let centers = tile_centers(w, h, MPP, &spec);
    assert!(centers.len() > 10);
    let gutter = mean_color(&spec.sample);
    let red = image::Rgb([220, 20, 20]);
    let at = |p: Vec2| out.pixels.get_pixel(p.x.floor() as u32, p.y.floor() as u32);
    let inside = |p: Vec2| p.x >= 0.0 && p.y >= 0.0 && p.x < w as f64 && p.y < h as f64;
    for c in &centers {
        // Every center has a lattice neighbor exactly one pitch away along an axis.
        let neighbor = [u * pitch_u, u * -pitch_u, v * pitch_v, v * -pitch_v]
            .iter()
            .any(|step| centers.iter().any(|d| (d - (c + step)).norm() < 1e-6));
        assert!(neighbor || centers.len() == 1, "isolated tile center {c:?}");
        assert_eq!(*at(*c), red, "tile center {c:?}");
        // Halfway across the gap between tiles lies in the gutter.
        let gap = c + u * (0.5 * spec.sample_width * px + 0.5 * spec.sample_offset * px);
        if inside(gap) {
            assert_eq!(*at(gap), gutter, "gap point {gap:?}");
        }
        let gap = c + v * (0.5 * spec.sample_height * px + 0.5 * spec.sample_offset * px);
        if inside(gap) {
            assert_eq!(*at(gap), gutter, "gap point {gap:?}");
        }
    }
}
