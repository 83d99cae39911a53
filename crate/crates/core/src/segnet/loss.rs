use super::{SegMask, WeightMap};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

const PROB_FLOOR: f64 = 1e-12;

/// Weight-normalised pixelwise cross-entropy over a two-channel softmax map.
///
/// Returns `−Σ w(x)·log p_ℓ(x) / Σ w(x)` and its gradient with respect to the
/// pre-softmax logits.
pub fn weighted_cross_entropy(probs: &Tensor, mask: &SegMask, wmap: &WeightMap) -> Result<(f64, Tensor)> {
    let (h, w, k) = probs.dims3()?;
    if (mask.height, mask.width) != (h, w) || (wmap.height, wmap.width) != (h, w) {
        return Err(Error::shape(
            "weighted_cross_entropy",
            format!(
                "probs {h}×{w}, mask {}×{}, weights {}×{}",
                mask.height, mask.width, wmap.height, wmap.width
            ),
        ));
    }
    if k != 2 {
        return Err(Error::shape("weighted_cross_entropy", format!("{k} classes, expected 2")));
    }
    let total: f64 = wmap.weights.iter().sum();
    let mut loss = 0.0;
    let mut grad = vec![0.0; probs.len()];
    for ((px, g), (&label, &wt)) in probs
        .data()
        .chunks_exact(k)
        .zip(grad.chunks_exact_mut(k))
        .zip(mask.labels.iter().zip(&wmap.weights))
    {
        let target = (label != 0) as usize;
        loss -= wt * px[target].max(PROB_FLOOR).ln();
        let scale = wt / total;
        for c in 0..k {
            g[c] = scale * (px[c] - if c == target { 1.0 } else { 0.0 });
        }
    }
    Ok((loss / total, Tensor::new(probs.shape().to_vec(), grad)?))
}
