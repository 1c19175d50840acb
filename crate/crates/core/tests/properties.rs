use dualcam_core::colormap::{apply_lut, build_intensity_lut};
use dualcam_core::imagekit::{center_crop, crop, resample_bicubic, CropRect};
use dualcam_core::mask::rasterize_even_odd;
use dualcam_core::quality::{psnr, ssim, PSNR_CAP};
use dualcam_core::registration::{
    estimate_homography, warp_with_map, Correspondence, EstimationMethod, Homography, RansacParams,
};
use dualcam_core::Raster;
use proptest::prelude::*;

fn raster(w: usize, h: usize, c: usize, seed: u64) -> Raster {
    Raster::from_fn_u8(w, h, c, |c, x, y| {
        let v = seed
            .wrapping_mul(6364136223846793005)
            .wrapping_add((c * 1_000_003 + y * 7919 + x * 31) as u64);
        ((v >> 33) % 256) as u8
    })
    .unwrap()
}

fn homography() -> impl Strategy<Value = Homography> {
    (0.5f64..3.0, -0.2f64..0.2, -50.0f64..50.0, -50.0f64..50.0, -1e-4f64..1e-4, -1e-4f64..1e-4, 0.5f64..3.0)
        .prop_filter_map("invertible", |(s, r, tx, ty, g, k, sy)| {
            let (c, n) = (r.cos(), r.sin());
            Homography::new([[s * c, -s * n, tx], [sy * n, sy * c, ty], [g, k, 1.0]]).ok()
        })
}

fn inside(poly: &[[f64; 2]], px: f64, py: f64) -> bool {
    let mut odd = false;
    for i in 0..poly.len() {
        let [x0, y0] = poly[i];
        let [x1, y1] = poly[(i + 1) % poly.len()];
        if (y0 <= py) != (y1 <= py) && px < x0 + (py - y0) * (x1 - x0) / (y1 - y0) {
            odd = !odd;
        }
    }
    odd
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn homography_is_normalized_and_invertible(h in homography(), x in -100.0f64..100.0, y in -100.0f64..100.0) {
        prop_assert_eq!(h.matrix()[2][2], 1.0);
        let inv = h.inverse().unwrap();
        prop_assert_eq!(inv.matrix()[2][2], 1.0);
        let (u, v) = h.apply(x, y);
        let (bx, by) = inv.apply(u, v);
        prop_assert!((bx - x).abs() < 1e-6 && (by - y).abs() < 1e-6);
        let s = Homography::new(h.matrix().map(|r| r.map(|v| v * 3.5))).unwrap();
        for (a, b) in s.row_major().iter().zip(h.row_major()) {
            prop_assert!((a - b).abs() <= 1e-12 * b.abs().max(1.0));
        }
    }

    #[test]
    fn ransac_is_deterministic(h in homography(), seed in any::<u64>()) {
        let mut state = seed | 1;
        let mut next = || { state ^= state << 13; state ^= state >> 7; state ^= state << 17; (state % 10_000) as f64 / 50.0 };
        let corr: Vec<Correspondence> = (0..40).map(|i| {
            let src = [next(), next()];
            let (u, v) = h.apply(src[0], src[1]);
            let dst = if i % 4 == 0 { [next(), next()] } else { [u, v] };
            Correspondence { src, dst }
        }).collect();
        let m = EstimationMethod::Ransac(RansacParams { seed, ..Default::default() });
        let a = estimate_homography(&corr, &m);
        let b = estimate_homography(&corr, &m);
        match (a, b) {
            (Ok(a), Ok(b)) => prop_assert_eq!(a, b),
            (Err(a), Err(b)) => prop_assert_eq!(a, b),
            _ => prop_assert!(false, "outcomes differ"),
        }
    }

    #[test]
    fn even_odd_mask_matches_oracle(pts in proptest::collection::vec((-4.0f64..36.0, -4.0f64..36.0), 3..9)) {
        let poly: Vec<[f64; 2]> = pts.iter().map(|&(x, y)| [x, y]).collect();
        let m = rasterize_even_odd(32, 32, std::slice::from_ref(&poly));
        for y in 0..32 {
            for x in 0..32 {
                prop_assert_eq!(!m.is_valid(x, y), inside(&poly, x as f64 + 0.5, y as f64 + 0.5), "({}, {})", x, y);
            }
        }
    }

    #[test]
    fn resampling_and_warps_stay_in_range(w in 4usize..24, h in 4usize..24, ow in 1usize..40, oh in 1usize..40, seed in any::<u64>(), hm in homography()) {
        let img = raster(w, h, 3, seed);
        let r = resample_bicubic(&img, ow, oh);
        prop_assert_eq!(r.dims(), (ow, oh, 3));
        let f = resample_bicubic(&img.to_f32(), ow, oh);
        prop_assert!(f.as_f32().unwrap().iter().all(|v| (0.0..=1.0).contains(v)));
        let (warped, cov) = warp_with_map(&img.to_f32(), &hm, ow, oh);
        prop_assert!(warped.as_f32().unwrap().iter().all(|v| (0.0..=1.0).contains(v)));
        for y in 0..oh {
            for x in 0..ow {
                if !cov.is_valid(x, y) {
                    prop_assert!((0..3).all(|c| warped.get(c, x, y) == 0.0));
                }
            }
        }
    }

    #[test]
    fn metrics_are_bounded_and_symmetric(seed_a in any::<u64>(), seed_b in any::<u64>()) {
        let a = raster(16, 14, 3, seed_a);
        let b = raster(16, 14, 3, seed_b);
        let p = psnr(&a, &b, None).unwrap();
        prop_assert!((0.0..=PSNR_CAP).contains(&p));
        prop_assert_eq!(p, psnr(&b, &a, None).unwrap());
        let s = ssim(&a, &b, None).unwrap();
        prop_assert!((-1.0..=1.0).contains(&s));
        prop_assert!((s - ssim(&b, &a, None).unwrap()).abs() <= 1e-12);
    }

    #[test]
    fn lut_is_exact_on_its_own_pair(seed in any::<u64>()) {
        let a = raster(12, 12, 3, seed);
        let lut = build_intensity_lut(&a, &a, None).unwrap();
        prop_assert_eq!(apply_lut(&a, &lut).unwrap(), a);
    }

    #[test]
    fn crops_have_requested_size(w in 1usize..30, h in 1usize..30, cw in 1usize..30, ch in 1usize..30, x in 0usize..30, y in 0usize..30) {
        let img = raster(w, h, 1, 3);
        match center_crop(&img, cw, ch) {
            Ok(c) => prop_assert_eq!((c.width(), c.height()), (cw, ch)),
            Err(_) => prop_assert!(cw > w || ch > h),
        }
        let rect = CropRect { x, y, width: cw, height: ch };
        match crop(&img, rect) {
            Ok(c) => prop_assert_eq!(c.get(0, 0, 0), img.get(0, x, y)),
            Err(_) => prop_assert!(x + cw > w || y + ch > h),
        }
    }
}
