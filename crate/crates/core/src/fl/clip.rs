/// Euclidean norm, accumulated in index order.
pub fn l2_norm(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// Scales `delta` by `min(1, C/‖delta‖)`. Deltas already within `C` come
/// back untouched; otherwise the scale is nudged down until the computed
/// norm is at most `C`, so the bound holds in floating point too.
pub fn clip_delta(mut delta: Vec<f64>, clip_norm: f64) -> (Vec<f64>, f64) {
    let norm = l2_norm(&delta);
    if norm <= clip_norm {
        return (delta, norm);
    }
    let original = delta.clone();
    let mut scale = clip_norm / norm;
    loop {
        for (d, o) in delta.iter_mut().zip(&original) {
            *d = o * scale;
        }
        if l2_norm(&delta) <= clip_norm {
            return (delta, norm);
        }
        scale = f64::from_bits(scale.to_bits() - 1);
    }
}
