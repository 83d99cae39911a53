//! Boundary-emphasising per-pixel loss weights.
//!
//! `w(x) = w_c(x) + boundary(d1(x), d2(x))` where `d1`/`d2` are the Euclidean
//! distances from `x` to the nearest and second-nearest distinct edge pixels.
//! An edge pixel is one with a 4-neighbour of the opposite class.

use serde::{Deserialize, Serialize};

use super::SegMask;
use crate::error::{Error, Result};

/// How the distance sum enters the exponential.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundaryForm {
    /// `w0 · [exp(−(d1+d2) / 2σ²)]²`
    #[default]
    SquaredExponential,
    /// `w0 · exp(−(d1+d2)² / 2σ²)`
    SquaredDistance,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct WeightMapParams {
    pub w0: f64,
    pub sigma: f64,
    pub class_balance: bool,
    #[serde(default)]
    pub form: BoundaryForm,
}

impl Default for WeightMapParams {
    fn default() -> Self {
        WeightMapParams {
            w0: 10.0,
            sigma: 5.0,
            class_balance: true,
            form: BoundaryForm::SquaredExponential,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct WeightMap {
    pub width: usize,
    pub height: usize,
    pub weights: Vec<f64>,
}

impl WeightMap {
    pub fn uniform(width: usize, height: usize) -> Self {
        WeightMap {
            width,
            height,
            weights: vec![1.0; width * height],
        }
    }

    pub fn get(&self, y: usize, x: usize) -> f64 {
        self.weights[y * self.width + x]
    }
}

/// The boundary term on its own, for given nearest/second-nearest distances.
pub fn boundary_weight(d1: f64, d2: f64, w0: f64, sigma: f64, form: BoundaryForm) -> f64 {
    let two_sigma_sq = 2.0 * sigma * sigma;
    match form {
        BoundaryForm::SquaredExponential => {
            let e = (-(d1 + d2) / two_sigma_sq).exp();
            w0 * (e * e)
        }
        BoundaryForm::SquaredDistance => {
            let s = d1 + d2;
            w0 * (-(s * s) / two_sigma_sq).exp()
        }
    }
}

/// Boolean edge map under 4-connectivity.
pub fn edge_pixels(mask: &SegMask) -> Vec<bool> {
    let (w, h) = (mask.width, mask.height);
    let mut edges = vec![false; w * h];
    for y in 0..h {
        for x in 0..w {
            let v = mask.get(y, x);
            let differs = (y > 0 && mask.get(y - 1, x) != v)
                || (y + 1 < h && mask.get(y + 1, x) != v)
                || (x > 0 && mask.get(y, x - 1) != v)
                || (x + 1 < w && mask.get(y, x + 1) != v);
            edges[y * w + x] = differs;
        }
    }
    edges
}

/// Squared distances to the nearest and second-nearest edge pixels, found by
/// scanning square rings of growing Chebyshev radius.
fn two_nearest_sq(edges: &[bool], w: usize, h: usize, y: usize, x: usize) -> Option<(i64, i64)> {
    let mut best = (i64::MAX, i64::MAX);
    let max_r = w.max(h) as i64;
    let (yi, xi) = (y as i64, x as i64);
    let consider = |dy: i64, dx: i64, best: &mut (i64, i64)| {
        let (py, px) = (yi + dy, xi + dx);
        if py < 0 || px < 0 || py >= h as i64 || px >= w as i64 {
            return;
        }
        if !edges[py as usize * w + px as usize] {
            return;
        }
        let d = dy * dy + dx * dx;
        if d < best.0 {
            best.1 = best.0;
            best.0 = d;
        } else if d < best.1 {
            best.1 = d;
        }
    };
    for r in 0..=max_r {
        if r == 0 {
            consider(0, 0, &mut best);
        } else {
            for d in -r..=r {
                consider(-r, d, &mut best);
                consider(r, d, &mut best);
            }
            for d in (-r + 1)..r {
                consider(d, -r, &mut best);
                consider(d, r, &mut best);
            }
        }
        // every unvisited pixel lies at Euclidean distance > r
        if best.1 <= r * r {
            break;
        }
    }
    (best.1 != i64::MAX).then_some(best)
}

pub fn compute_weight_map(mask: &SegMask, params: &WeightMapParams) -> Result<WeightMap> {
    if mask.labels.is_empty() {
        return Err(Error::Empty("weight map of an empty mask".into()));
    }
    if !(params.sigma > 0.0) {
        return Err(Error::config("sigma", "must be positive"));
    }
    let (w, h) = (mask.width, mask.height);
    let n = (w * h) as f64;
    let n_vessel = mask.labels.iter().filter(|&&l| l != 0).count() as f64;
    let class_weight = |label: u8| -> f64 {
        if !params.class_balance {
            return 1.0;
        }
        let freq = if label != 0 { n_vessel / n } else { (n - n_vessel) / n };
        0.5 / freq
    };
    let wc = [class_weight(0), class_weight(1)];

    let edges = edge_pixels(mask);
    let any_edge = edges.iter().any(|&e| e);
    let mut weights = Vec::with_capacity(w * h);
    for y in 0..h {
        for x in 0..w {
            let base = wc[(mask.get(y, x) != 0) as usize];
            let extra = if any_edge {
                match two_nearest_sq(&edges, w, h, y, x) {
                    Some((a, b)) => boundary_weight(
                        (a as f64).sqrt(),
                        (b as f64).sqrt(),
                        params.w0,
                        params.sigma,
                        params.form,
                    ),
                    None => 0.0,
                }
            } else {
                0.0
            };
            weights.push(base + extra);
        }
    }
    Ok(WeightMap {
        width: w,
        height: h,
        weights,
    })
}
