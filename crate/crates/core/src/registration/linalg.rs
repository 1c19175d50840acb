use alloc::vec;

use crate::math;

/// Right singular vector for the smallest singular value of the row-major
/// `rows x cols` matrix `a`, via one-sided (Hestenes) Jacobi rotations.
/// `a` is overwritten.
pub fn null_vector(a: &mut [f64], rows: usize, cols: usize) -> vec::Vec<f64> {
    let mut v = vec![0f64; cols * cols];
    for i in 0..cols {
        v[i * cols + i] = 1.0;
    }
    for _sweep in 0..60 {
        let mut rotated = false;
        for p in 0..cols - 1 {
            for q in p + 1..cols {
                let (mut alpha, mut beta, mut gamma) = (0.0, 0.0, 0.0);
                for r in 0..rows {
                    let ap = a[r * cols + p];
                    let aq = a[r * cols + q];
                    alpha += ap * ap;
                    beta += aq * aq;
                    gamma += ap * aq;
                }
                if gamma == 0.0 || alpha < 1e-300 || beta < 1e-300 {
                    continue;
                }
                if gamma.abs() <= 1e-15 * math::sqrt(alpha * beta) {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + math::sqrt(1.0 + zeta * zeta));
                let c = 1.0 / math::sqrt(1.0 + t * t);
                let s = c * t;
                for r in 0..rows {
                    let ap = a[r * cols + p];
                    let aq = a[r * cols + q];
                    a[r * cols + p] = c * ap - s * aq;
                    a[r * cols + q] = s * ap + c * aq;
                }
                for r in 0..cols {
                    let vp = v[r * cols + p];
                    let vq = v[r * cols + q];
                    v[r * cols + p] = c * vp - s * vq;
                    v[r * cols + q] = s * vp + c * vq;
                }
            }
        }
        if !rotated {
            break;
        }
    }
    let mut best = 0;
    let mut best_norm = f64::INFINITY;
    for j in 0..cols {
        let norm: f64 = (0..rows).map(|r| a[r * cols + j] * a[r * cols + j]).sum();
        if norm < best_norm {
            best_norm = norm;
            best = j;
        }
    }
    (0..cols).map(|r| v[r * cols + best]).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn finds_null_space_of_rank_deficient_matrix() {
        // rows orthogonal to (1, -2, 1)
        let mut a = vec![1.0, 1.0, 1.0, 2.0, 1.0, 0.0, 0.0, 1.0, 2.0, 3.0, 2.0, 1.0];
        let n = null_vector(&mut a, 4, 3);
        let scale = n[0];
        assert!((n[1] / scale + 2.0).abs() < 1e-12);
        assert!((n[2] / scale - 1.0).abs() < 1e-12);
    }
}
