mod common;

use common::{blob_scene, psnr_u8, shifted, smooth_texture};
use dualcam_core::flowalign::{compute_flow, residual_map, warp_with_flow, FlowField, FlowParams};

#[test]
fn integer_translations() {
    let scene = blob_scene(272, 272, 1400, 21);
    let reference = shifted(&scene, 0, 0, 256, 256);
    let t = std::time::Instant::now();
    for d in 1..=8usize {
        let moving = shifted(&scene, d, 0, 256, 256);
        let f = compute_flow(&reference, &moving, &FlowParams::default()).unwrap();
        let epe = f.mean_endpoint_error(-(d as f32), 0.0).unwrap();
        eprintln!("shift {d}: epe {epe:.4} valid {}", f.valid_count());
        assert!(epe < 0.25, "shift {d}: {epe}");
        assert!(f.valid_count() > 256 * 128);
    }
    eprintln!("elapsed {:?}", t.elapsed());
}

#[test]
fn vertical_translation() {
    let scene = blob_scene(256, 272, 1400, 4);
    let reference = shifted(&scene, 0, 0, 256, 256);
    let moving = shifted(&scene, 0, 5, 256, 256);
    let f = compute_flow(&reference, &moving, &FlowParams::default()).unwrap();
    let epe = f.mean_endpoint_error(0.0, -5.0).unwrap();
    assert!(epe < 0.25, "{epe}");
}

#[test]
fn subpixel_translation() {
    let reference = smooth_texture(256, 256, 0.0, 0.0);
    let moving = smooth_texture(256, 256, 0.5, 0.0);
    let f = compute_flow(&reference, &moving, &FlowParams::default()).unwrap();
    let epe = f.mean_endpoint_error(-0.5, 0.0).unwrap();
    eprintln!("subpixel epe {epe}");
    assert!(epe < 0.1, "{epe}");
}

#[test]
fn inverse_shift_roundtrip() {
    let scene = blob_scene(272, 256, 1000, 8);
    let original = shifted(&scene, 0, 0, 256, 256);
    let moved = shifted(&scene, 3, 0, 256, 256);
    let mut f = FlowField::zero(256, 256);
    f.u.iter_mut().for_each(|u| *u = -3.0);
    let back = warp_with_flow(&moved, &f).unwrap();
    let inner = |r: &dualcam_core::Raster| common::shifted(r, 8, 8, 240, 240);
    assert!(psnr_u8(&inner(&back), &inner(&original)) >= 40.0);
}

#[test]
fn flow_warp_aligns_pair() {
    let scene = blob_scene(272, 256, 1000, 9);
    let reference = shifted(&scene, 0, 0, 256, 256);
    let moving = shifted(&scene, 4, 0, 256, 256);
    let f = compute_flow(&reference, &moving, &FlowParams::default()).unwrap();
    let aligned = warp_with_flow(&moving, &f).unwrap();
    let before = residual_map(&reference, &moving, 1.0).unwrap();
    let after = residual_map(&reference, &aligned, 1.0).unwrap();
    let mean = |r: &dualcam_core::Raster| r.as_f32().unwrap().iter().map(|&v| v as f64).sum::<f64>();
    assert!(mean(&after) < 0.5 * mean(&before));
}

#[test]
fn flow_is_deterministic() {
    let scene = blob_scene(140, 128, 300, 2);
    let a = shifted(&scene, 0, 0, 128, 128);
    let b = shifted(&scene, 6, 0, 128, 128);
    let f1 = compute_flow(&a, &b, &FlowParams::default()).unwrap();
    let f2 = compute_flow(&a, &b, &FlowParams::default()).unwrap();
    assert_eq!(f1.to_bytes(), f2.to_bytes());
}
