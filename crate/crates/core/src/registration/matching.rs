use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::sift::Descriptor;
use crate::error::{contract, Result};
use crate::math;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Match {
    pub idx_a: usize,
    pub idx_b: usize,
    /// L2 distance to the nearest neighbour.
    pub distance: f32,
    /// Nearest over second-nearest distance.
    pub ratio: f32,
}

/// Nearest and second-nearest squared distances from `q` into `set`; ties go
/// to the lowest index.
fn two_nearest(q: &Descriptor, set: &[Descriptor]) -> (usize, f32, f32) {
    let (mut best, mut d1, mut d2) = (usize::MAX, f32::INFINITY, f32::INFINITY);
    for (j, c) in set.iter().enumerate() {
        let d = q.distance2(c);
        if d < d1 {
            d2 = d1;
            d1 = d;
            best = j;
        } else if d < d2 {
            d2 = d;
        }
    }
    (best, d1, d2)
}

/// Ratio-test matching with mutual-best filtering. Queries with fewer than
/// two candidates produce no match.
pub fn match_descriptors(
    a: &[Descriptor],
    b: &[Descriptor],
    ratio_threshold: f32,
) -> Result<Vec<Match>> {
    if !(ratio_threshold > 0.0 && ratio_threshold < 1.0) {
        return Err(contract("ratio threshold must lie in (0, 1)"));
    }
    if b.len() < 2 {
        return Ok(Vec::new());
    }
    let reverse: Vec<usize> = b.iter().map(|q| two_nearest(q, a).0).collect();
    let mut out = Vec::new();
    for (i, q) in a.iter().enumerate() {
        let (j, d1, d2) = two_nearest(q, b);
        let (d1, d2) = (math::sqrtf(d1), math::sqrtf(d2));
        let ratio = if d2 > 0.0 { d1 / d2 } else { 1.0 };
        if ratio < ratio_threshold && reverse[j] == i {
            out.push(Match {
                idx_a: i,
                idx_b: j,
                distance: d1,
                ratio,
            });
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::registration::sift::DESCRIPTOR_LEN;

    fn unit(i: usize) -> Descriptor {
        let mut v = [0f32; DESCRIPTOR_LEN];
        v[i] = 1.0;
        Descriptor(v)
    }

    fn pseudo_random(seed: usize) -> Descriptor {
        let mut v = [0f32; DESCRIPTOR_LEN];
        let mut s = seed as u64 * 2654435761 + 1;
        for x in v.iter_mut() {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            *x = ((s >> 33) % 1000) as f32 / 1000.0;
        }
        let n = v.iter().map(|x| x * x).sum::<f32>().sqrt();
        v.iter_mut().for_each(|x| *x /= n);
        Descriptor(v)
    }

    #[test]
    fn identical_sets_match_identity() {
        let a: Vec<_> = (0..20).map(pseudo_random).collect();
        let m = match_descriptors(&a, &a, 0.75).unwrap();
        assert_eq!(m.len(), 20);
        assert!(m.iter().all(|m| m.idx_a == m.idx_b && m.distance == 0.0));
    }

    #[test]
    fn recovers_permutation() {
        let a: Vec<_> = (0..30).map(pseudo_random).collect();
        let perm: Vec<usize> = (0..30).map(|i| (i * 7 + 3) % 30).collect();
        let b: Vec<_> = perm.iter().map(|&p| a[p].clone()).collect();
        let m = match_descriptors(&a, &b, 0.75).unwrap();
        assert_eq!(m.len(), 30);
        for mm in m {
            assert_eq!(perm[mm.idx_b], mm.idx_a);
        }
    }

    #[test]
    fn duplicated_candidate_fails_ratio_test() {
        let a: Vec<_> = (0..5).map(unit).collect();
        let mut b = a.clone();
        b.push(unit(0));
        let m = match_descriptors(&a, &b, 0.75).unwrap();
        assert_eq!(m.len(), 4);
        assert!(m.iter().all(|m| m.idx_a != 0));
    }

    #[test]
    fn single_candidate_gives_nothing() {
        let a = [unit(0)];
        assert!(match_descriptors(&a, &a, 0.75).unwrap().is_empty());
        assert!(match_descriptors(&a, &a, 1.0).is_err());
    }
}
