use alloc::vec;
use alloc::vec::Vec;
use core::ops::Mul;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::linalg::null_vector;
use crate::error::{Error, Result};
use crate::math;

/// Projective transform, normalized so that `h[2][2] == 1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "[f64; 9]", into = "[f64; 9]")]
pub struct Homography {
    h: [[f64; 3]; 3],
}

impl TryFrom<[f64; 9]> for Homography {
    type Error = Error;

    fn try_from(v: [f64; 9]) -> Result<Self> {
        Homography::new([[v[0], v[1], v[2]], [v[3], v[4], v[5]], [v[6], v[7], v[8]]])
    }
}

impl From<Homography> for [f64; 9] {
    fn from(h: Homography) -> Self {
        h.row_major()
    }
}

fn det3(m: &[[f64; 3]; 3]) -> f64 {
    m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
        - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
        + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
}

fn matmul(a: &[[f64; 3]; 3], b: &[[f64; 3]; 3]) -> [[f64; 3]; 3] {
    let mut out = [[0.0; 3]; 3];
    for (i, row) in out.iter_mut().enumerate() {
        for (j, v) in row.iter_mut().enumerate() {
            *v = a[i][0] * b[0][j] + a[i][1] * b[1][j] + a[i][2] * b[2][j];
        }
    }
    out
}

impl Homography {
    pub const IDENTITY: Homography = Homography {
        h: [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]],
    };

    /// Normalizes `m` by its bottom-right entry and validates it.
    pub fn new(m: [[f64; 3]; 3]) -> Result<Self> {
        let s = m[2][2];
        if !s.is_finite() || s.abs() < 1e-300 {
            return Err(Error::Degenerate("homography has h22 == 0".into()));
        }
        let mut h = [[0.0; 3]; 3];
        for i in 0..3 {
            for j in 0..3 {
                h[i][j] = m[i][j] / s;
            }
        }
        h[2][2] = 1.0;
        if h.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::Degenerate("homography has non-finite entries".into()));
        }
        if det3(&h).abs() <= 1e-12 {
            return Err(Error::Degenerate("homography is singular".into()));
        }
        Ok(Self { h })
    }

    pub fn translation(tx: f64, ty: f64) -> Self {
        Self {
            h: [[1.0, 0.0, tx], [0.0, 1.0, ty], [0.0, 0.0, 1.0]],
        }
    }

    pub fn scaling(sx: f64, sy: f64) -> Self {
        Self {
            h: [[sx, 0.0, 0.0], [0.0, sy, 0.0], [0.0, 0.0, 1.0]],
        }
    }

    pub fn matrix(&self) -> [[f64; 3]; 3] {
        self.h
    }

    pub fn row_major(&self) -> [f64; 9] {
        let h = &self.h;
        [
            h[0][0], h[0][1], h[0][2], h[1][0], h[1][1], h[1][2], h[2][0], h[2][1], h[2][2],
        ]
    }

    pub fn determinant(&self) -> f64 {
        det3(&self.h)
    }

    #[inline]
    pub fn apply(&self, x: f64, y: f64) -> (f64, f64) {
        let h = &self.h;
        let w = h[2][0] * x + h[2][1] * y + h[2][2];
        (
            (h[0][0] * x + h[0][1] * y + h[0][2]) / w,
            (h[1][0] * x + h[1][1] * y + h[1][2]) / w,
        )
    }

    pub fn inverse(&self) -> Result<Homography> {
        let m = &self.h;
        let det = det3(m);
        if det.abs() <= 1e-12 || !det.is_finite() {
            return Err(Error::Degenerate("homography is not invertible".into()));
        }
        let adj = [
            [
                m[1][1] * m[2][2] - m[1][2] * m[2][1],
                m[0][2] * m[2][1] - m[0][1] * m[2][2],
                m[0][1] * m[1][2] - m[0][2] * m[1][1],
            ],
            [
                m[1][2] * m[2][0] - m[1][0] * m[2][2],
                m[0][0] * m[2][2] - m[0][2] * m[2][0],
                m[0][2] * m[1][0] - m[0][0] * m[1][2],
            ],
            [
                m[1][0] * m[2][1] - m[1][1] * m[2][0],
                m[0][1] * m[2][0] - m[0][0] * m[2][1],
                m[0][0] * m[1][1] - m[0][1] * m[1][0],
            ],
        ];
        Homography::new(adj)
    }

    /// Square root of the Jacobian determinant at `(x, y)`: the local linear
    /// magnification of the mapping.
    pub fn local_scale(&self, x: f64, y: f64) -> f64 {
        let h = &self.h;
        let w = h[2][0] * x + h[2][1] * y + h[2][2];
        let (u, v) = self.apply(x, y);
        let j00 = (h[0][0] - u * h[2][0]) / w;
        let j01 = (h[0][1] - u * h[2][1]) / w;
        let j10 = (h[1][0] - v * h[2][0]) / w;
        let j11 = (h[1][1] - v * h[2][1]) / w;
        math::sqrt((j00 * j11 - j01 * j10).abs())
    }
}

impl Mul for Homography {
    type Output = Homography;

    /// `(a * b).apply(p) == a.apply(b.apply(p))`.
    fn mul(self, rhs: Homography) -> Homography {
        let m = matmul(&self.h, &rhs.h);
        // products of valid homographies stay invertible; only h22 can vanish
        Homography::new(m).unwrap_or(Homography { h: m })
    }
}

/// A point in the source frame and its image in the destination frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Correspondence {
    pub src: [f64; 2],
    pub dst: [f64; 2],
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RansacParams {
    /// Symmetric transfer error threshold in pixels.
    pub inlier_px: f64,
    pub max_iters: usize,
    pub seed: u64,
    /// Early-exit confidence for the adaptive iteration count.
    pub confidence: f64,
}

impl Default for RansacParams {
    fn default() -> Self {
        Self {
            inlier_px: 2.0,
            max_iters: 2000,
            seed: 0,
            confidence: 0.999,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum EstimationMethod {
    /// Normalized DLT over every correspondence.
    DltExact,
    Ransac(RansacParams),
}

#[derive(Debug, Clone, PartialEq)]
pub struct HomographyEstimate {
    pub homography: Homography,
    pub inliers: Vec<bool>,
}

impl HomographyEstimate {
    pub fn inlier_count(&self) -> usize {
        self.inliers.iter().filter(|&&b| b).count()
    }
}

/// Similarity taking the centroid to the origin and the mean distance to sqrt(2).
fn normalizing_transform(pts: impl Iterator<Item = [f64; 2]> + Clone) -> [[f64; 3]; 3] {
    let mut n = 0.0;
    let (mut cx, mut cy) = (0.0, 0.0);
    for p in pts.clone() {
        cx += p[0];
        cy += p[1];
        n += 1.0;
    }
    cx /= n;
    cy /= n;
    let mut mean_dist = 0.0;
    for p in pts {
        mean_dist += math::sqrt((p[0] - cx) * (p[0] - cx) + (p[1] - cy) * (p[1] - cy));
    }
    mean_dist /= n;
    let s = if mean_dist > 0.0 {
        core::f64::consts::SQRT_2 / mean_dist
    } else {
        1.0
    };
    [[s, 0.0, -s * cx], [0.0, s, -s * cy], [0.0, 0.0, 1.0]]
}

fn transform_point(t: &[[f64; 3]; 3], p: [f64; 2]) -> [f64; 2] {
    [
        t[0][0] * p[0] + t[0][1] * p[1] + t[0][2],
        t[1][0] * p[0] + t[1][1] * p[1] + t[1][2],
    ]
}

/// Direct linear transform with isotropic (Hartley) normalization.
pub fn dlt(corr: &[Correspondence]) -> Result<Homography> {
    if corr.len() < 4 {
        return Err(Error::InsufficientData {
            needed: 4,
            found: corr.len(),
        });
    }
    let t_src = normalizing_transform(corr.iter().map(|c| c.src));
    let t_dst = normalizing_transform(corr.iter().map(|c| c.dst));
    let rows = 2 * corr.len();
    let mut a = vec![0f64; rows * 9];
    for (k, c) in corr.iter().enumerate() {
        let [x, y] = transform_point(&t_src, c.src);
        let [u, v] = transform_point(&t_dst, c.dst);
        let r0 = &mut a[(2 * k) * 9..(2 * k + 1) * 9];
        r0.copy_from_slice(&[-x, -y, -1.0, 0.0, 0.0, 0.0, u * x, u * y, u]);
        let r1 = &mut a[(2 * k + 1) * 9..(2 * k + 2) * 9];
        r1.copy_from_slice(&[0.0, 0.0, 0.0, -x, -y, -1.0, v * x, v * y, v]);
    }
    let h = null_vector(&mut a, rows, 9);
    let hn = [[h[0], h[1], h[2]], [h[3], h[4], h[5]], [h[6], h[7], h[8]]];
    // undo normalization: H = T_dst^-1 * Hn * T_src
    let sd = t_dst[0][0];
    let t_dst_inv = [
        [1.0 / sd, 0.0, -t_dst[0][2] / sd],
        [0.0, 1.0 / sd, -t_dst[1][2] / sd],
        [0.0, 0.0, 1.0],
    ];
    Homography::new(matmul(&matmul(&t_dst_inv, &hn), &t_src))
}

fn dist2(a: (f64, f64), b: [f64; 2]) -> f64 {
    (a.0 - b[0]) * (a.0 - b[0]) + (a.1 - b[1]) * (a.1 - b[1])
}

/// Squared symmetric transfer error `|dst - H src|^2 + |src - H^-1 dst|^2`.
pub fn symmetric_transfer_error2(h: &Homography, h_inv: &Homography, c: &Correspondence) -> f64 {
    let fwd = dist2(h.apply(c.src[0], c.src[1]), c.dst);
    let bwd = dist2(h_inv.apply(c.dst[0], c.dst[1]), c.src);
    let e = fwd + bwd;
    if e.is_finite() {
        e
    } else {
        f64::INFINITY
    }
}

fn collinear(a: [f64; 2], b: [f64; 2], c: [f64; 2]) -> bool {
    let (abx, aby) = (b[0] - a[0], b[1] - a[1]);
    let (acx, acy) = (c[0] - a[0], c[1] - a[1]);
    let cross = (abx * acy - aby * acx).abs();
    let norms = math::sqrt((abx * abx + aby * aby) * (acx * acx + acy * acy));
    norms == 0.0 || cross <= 1e-6 * norms
}

fn sample_degenerate(sample: &[Correspondence; 4]) -> bool {
    const TRIPLES: [[usize; 3]; 4] = [[0, 1, 2], [0, 1, 3], [0, 2, 3], [1, 2, 3]];
    TRIPLES.iter().any(|t| {
        collinear(sample[t[0]].src, sample[t[1]].src, sample[t[2]].src)
            || collinear(sample[t[0]].dst, sample[t[1]].dst, sample[t[2]].dst)
    })
}

fn classify(h: &Homography, corr: &[Correspondence], thresh2: f64) -> Option<(Vec<bool>, usize)> {
    let h_inv = h.inverse().ok()?;
    let mask: Vec<bool> = corr
        .iter()
        .map(|c| symmetric_transfer_error2(h, &h_inv, c) < thresh2)
        .collect();
    let n = mask.iter().filter(|&&b| b).count();
    Some((mask, n))
}

fn adaptive_iterations(inlier_ratio: f64, confidence: f64, cap: usize) -> usize {
    let p_good = inlier_ratio * inlier_ratio * inlier_ratio * inlier_ratio;
    if p_good >= 1.0 {
        return 1;
    }
    if p_good <= 0.0 {
        return cap;
    }
    let n = libm::log(1.0 - confidence) / libm::log(1.0 - p_good);
    if !n.is_finite() || n > cap as f64 {
        cap
    } else {
        (math::ceil(n) as usize).max(1)
    }
}

fn ransac(corr: &[Correspondence], params: &RansacParams) -> Result<HomographyEstimate> {
    let n = corr.len();
    let thresh2 = params.inlier_px * params.inlier_px;
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let mut best: Option<(Homography, Vec<bool>, usize)> = None;
    let mut needed = params.max_iters;
    let mut iter = 0;
    while iter < needed.min(params.max_iters) {
        iter += 1;
        let mut idx = [0usize; 4];
        let mut k = 0;
        while k < 4 {
            let i = rng.random_range(0..n as u32) as usize;
            if !idx[..k].contains(&i) {
                idx[k] = i;
                k += 1;
            }
        }
        let sample = [corr[idx[0]], corr[idx[1]], corr[idx[2]], corr[idx[3]]];
        if sample_degenerate(&sample) {
            continue;
        }
        let Ok(h) = dlt(&sample) else { continue };
        let Some((mask, count)) = classify(&h, corr, thresh2) else {
            continue;
        };
        if best.as_ref().is_none_or(|b| count > b.2) {
            needed = adaptive_iterations(count as f64 / n as f64, params.confidence, params.max_iters);
            best = Some((h, mask, count));
        }
    }
    let Some((mut h, mut mask, mut count)) = best else {
        return Err(Error::Degenerate(alloc::format!(
            "all minimal samples degenerate after {iter} iterations"
        )));
    };
    // refit on the consensus set until it stops changing
    for _ in 0..5 {
        if count < 4 {
            break;
        }
        let inliers: Vec<Correspondence> = corr
            .iter()
            .zip(&mask)
            .filter(|(_, &m)| m)
            .map(|(c, _)| *c)
            .collect();
        let Ok(refit) = dlt(&inliers) else { break };
        let Some((new_mask, new_count)) = classify(&refit, corr, thresh2) else {
            break;
        };
        if new_count < count {
            break;
        }
        let stable = new_mask == mask;
        h = refit;
        mask = new_mask;
        count = new_count;
        if stable {
            break;
        }
    }
    Ok(HomographyEstimate {
        homography: h,
        inliers: mask,
    })
}

/// Estimates the homography taking `src` points to `dst` points.
pub fn estimate_homography(
    corr: &[Correspondence],
    method: &EstimationMethod,
) -> Result<HomographyEstimate> {
    if corr.len() < 4 {
        return Err(Error::InsufficientData {
            needed: 4,
            found: corr.len(),
        });
    }
    match method {
        EstimationMethod::DltExact => Ok(HomographyEstimate {
            homography: dlt(corr)?,
            inliers: vec![true; corr.len()],
        }),
        EstimationMethod::Ransac(params) => ransac(corr, params),
    }
}
