mod common;

use common::{blob_scene, center_zoom, psnr_u8, render_view};
use dualcam_core::registration::{
    detect_and_describe, match_descriptors, scale_align, warp_projective, Descriptor, Homography,
    ScaleAlignConfig, SiftParams,
};
use dualcam_core::{Error, Raster};

#[test]
fn zoomed_view_recovers_scale() {
    let wide = blob_scene(512, 384, 900, 7);
    let zoom = 65.0 / 24.0;
    let truth = center_zoom(512, 384, 512, 384, zoom);
    let t1 = render_view(&wide, &truth, 512, 384);
    let t = std::time::Instant::now();
    let r = scale_align(&wide, &t1, &wide, &ScaleAlignConfig { min_matches: 20, ..Default::default() }).unwrap();
    eprintln!("scale_align {:?} matches {} inliers {}", t.elapsed(), r.matches, r.inliers);
    let recovered = 1.0 / r.h_overlap.local_scale(255.5, 191.5);
    eprintln!("recovered zoom {recovered}");
    assert!((recovered - 2.708).abs() < 0.01, "zoom {recovered}");
    let p = psnr_u8(&r.w_cal, &r.gt_cal);
    eprintln!("psnr {p}");
    assert!(p >= 45.0, "psnr {p}");
    assert_eq!(r.w_transform, r.t_transform);
}

#[test]
fn same_fov_is_identity() {
    let wide = blob_scene(256, 192, 300, 3);
    let cfg = ScaleAlignConfig { min_matches: 20, ..Default::default() };
    let r = scale_align(&wide, &wide, &wide, &cfg).unwrap();
    let m = r.h_overlap.matrix();
    for i in 0..3 {
        for j in 0..3 {
            let e = if i == j { 1.0 } else { 0.0 };
            let tol = if i == 2 { 1e-5 } else { 1e-2 };
            assert!((m[i][j] - e).abs() < tol, "{m:?}");
        }
    }
    assert_eq!((r.overlap.x, r.overlap.y, r.overlap.width, r.overlap.height), (0, 0, 256, 192));
}

#[test]
fn featureless_wide_fails() {
    let flat = Raster::filled_u8(256, 192, 3, 90).unwrap();
    let tele = blob_scene(256, 192, 300, 3);
    let err = scale_align(&flat, &tele, &flat, &ScaleAlignConfig::default()).unwrap_err();
    assert!(matches!(err, Error::AlignmentFailed { .. }));
}

#[test]
fn rotated_copy_matches() {
    let img = blob_scene(200, 200, 400, 11);
    let rot = Raster::from_fn_u8(200, 200, 3, |c, x, y| img.get(c, y, 199 - x) as u8).unwrap();
    let p = SiftParams::default();
    let fa = detect_and_describe(&img, &p);
    let fb = detect_and_describe(&rot, &p);
    let da: Vec<Descriptor> = fa.iter().map(|f| f.descriptor.clone()).collect();
    let db: Vec<Descriptor> = fb.iter().map(|f| f.descriptor.clone()).collect();
    let m = match_descriptors(&da, &db, 0.75).unwrap();
    // rot(x, y) = img(y, 199 - x), so img point (u, v) appears at (199 - v, u)
    let good = m
        .iter()
        .filter(|m| {
            let a = fa[m.idx_a].keypoint;
            let b = fb[m.idx_b].keypoint;
            let (ex, ey) = (199.0 - a.y, a.x);
            (b.x - ex).hypot(b.y - ey) < 2.0
        })
        .count();
    eprintln!("features {} {} matches {} good {}", fa.len(), fb.len(), m.len(), good);
    assert!(m.len() >= 20);
    assert!(good as f64 >= 0.8 * m.len() as f64);
}

#[test]
fn warp_composition() {
    let img = blob_scene(160, 120, 200, 5);
    let h1 = Homography::new([[1.02, 0.03, 2.5], [-0.02, 0.98, -1.5], [1e-4, 0.0, 1.0]]).unwrap();
    let h2 = Homography::new([[0.97, -0.01, -1.0], [0.015, 1.01, 2.0], [0.0, -1e-4, 1.0]]).unwrap();
    let (a, ca) = warp_projective(&img, &h1, 160, 120).unwrap();
    let (ab, cab) = warp_projective(&a, &h2, 160, 120).unwrap();
    let (c, cc) = warp_projective(&img, &(h2 * h1), 160, 120).unwrap();
    // pixels covered by both paths, and whose first-stage taps were covered too
    let h2_inv = h2.inverse().unwrap();
    let mut se = 0.0;
    let mut n = 0usize;
    for y in 0..120 {
        for x in 0..160 {
            if !(cab.is_valid(x, y) && cc.is_valid(x, y)) {
                continue;
            }
            let (sx, sy) = h2_inv.apply(x as f64, y as f64);
            let (fx, fy) = (sx.floor() as isize, sy.floor() as isize);
            let inside = (-1..=2).all(|dy| {
                (-1..=2).all(|dx| {
                    let (px, py) = (fx + dx, fy + dy);
                    px >= 0 && py >= 0 && px < 160 && py < 120 && ca.is_valid(px as usize, py as usize)
                })
            });
            if !inside {
                continue;
            }
            for ch in 0..3 {
                se += (ab.get(ch, x, y) as f64 - c.get(ch, x, y) as f64).powi(2);
            }
            n += 3;
        }
    }
    let psnr = 10.0 * (255.0f64.powi(2) / (se / n as f64)).log10();
    assert!(n > 160 * 120, "{n}");
    assert!(psnr >= 35.0, "{psnr}");
}
