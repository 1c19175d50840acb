use alloc::vec::Vec;

/// Nearest-rank percentile (`q` in `[0, 1]`); NaNs are ignored. `None` for
/// empty input.
pub fn percentile(values: &[f32], q: f64) -> Option<f32> {
    let mut v: Vec<f32> = values.iter().copied().filter(|x| !x.is_nan()).collect();
    if v.is_empty() {
        return None;
    }
    v.sort_by(f32::total_cmp);
    let rank = crate::math::ceil(q.clamp(0.0, 1.0) * v.len() as f64) as usize;
    Some(v[rank.clamp(1, v.len()) - 1])
}
