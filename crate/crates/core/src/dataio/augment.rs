//! Random training-time augmentation: with probability 0.7 one of
//! {horizontal flip, rotation by 90/180/270, transpose} followed by a random
//! square crop resized back to the original side.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::image::resize_bilinear;
use crate::error::{Error, Result};
use crate::segnet::SegMask;
use crate::tensor::Tensor;

pub const AUGMENT_PROBABILITY: f64 = 0.7;
/// Smallest crop side as a fraction of the image side.
pub const MIN_CROP_FRACTION: f64 = 0.875;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum AugmentOp {
    FlipHorizontal,
    Rotate90,
    Rotate180,
    Rotate270,
    Transpose,
}

impl AugmentOp {
    pub const ALL: [AugmentOp; 5] = [
        AugmentOp::FlipHorizontal,
        AugmentOp::Rotate90,
        AugmentOp::Rotate180,
        AugmentOp::Rotate270,
        AugmentOp::Transpose,
    ];

    /// Source coordinate read by destination `(y, x)` in an `n×n` square.
    fn source(self, y: usize, x: usize, n: usize) -> (usize, usize) {
        match self {
            AugmentOp::FlipHorizontal => (y, n - 1 - x),
            AugmentOp::Rotate90 => (n - 1 - x, y),
            AugmentOp::Rotate180 => (n - 1 - y, n - 1 - x),
            AugmentOp::Rotate270 => (x, n - 1 - y),
            AugmentOp::Transpose => (x, y),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct AugmentPlan {
    pub op: AugmentOp,
    pub crop_size: usize,
    pub crop_y: usize,
    pub crop_x: usize,
}

/// Draws a plan for an `side×side` sample, or `None` (identity) with
/// probability 0.3.
pub fn sample_plan<R: Rng + ?Sized>(side: usize, rng: &mut R) -> Option<AugmentPlan> {
    if rng.random::<f64>() >= AUGMENT_PROBABILITY {
        return None;
    }
    let op = AugmentOp::ALL[rng.random_range(0..AugmentOp::ALL.len())];
    let min_side = ((side as f64 * MIN_CROP_FRACTION).ceil() as usize).clamp(1, side);
    let crop_size = rng.random_range(min_side..=side);
    let crop_y = rng.random_range(0..=side - crop_size);
    let crop_x = rng.random_range(0..=side - crop_size);
    Some(AugmentPlan {
        op,
        crop_size,
        crop_y,
        crop_x,
    })
}

fn remap<T: Copy>(src: &[T], n: usize, channels: usize, op: AugmentOp) -> Vec<T> {
    let mut out = Vec::with_capacity(src.len());
    for y in 0..n {
        for x in 0..n {
            let (sy, sx) = op.source(y, x, n);
            out.extend_from_slice(&src[(sy * n + sx) * channels..][..channels]);
        }
    }
    out
}

fn crop<T: Copy>(src: &[T], n: usize, channels: usize, plan: &AugmentPlan) -> Vec<T> {
    let mut out = Vec::with_capacity(plan.crop_size * plan.crop_size * channels);
    for y in plan.crop_y..plan.crop_y + plan.crop_size {
        let row = (y * n + plan.crop_x) * channels;
        out.extend_from_slice(&src[row..row + plan.crop_size * channels]);
    }
    out
}

/// Applies a plan to an image and, identically, to its mask.
pub fn apply_plan(image: &Tensor, mask: Option<&SegMask>, plan: &AugmentPlan) -> Result<(Tensor, Option<SegMask>)> {
    let (h, w, c) = image.dims3()?;
    if h != w {
        return Err(Error::shape("augment", format!("image must be square, got {h}×{w}")));
    }
    let n = h;
    if plan.crop_size == 0 || plan.crop_y + plan.crop_size > n || plan.crop_x + plan.crop_size > n {
        return Err(Error::shape("augment", "crop window outside the image"));
    }
    let turned = remap(image.data(), n, c, plan.op);
    let cropped = Tensor::new(vec![plan.crop_size; 2].into_iter().chain([c]).collect(), crop(&turned, n, c, plan))?;
    let out_img = if plan.crop_size == n {
        cropped
    } else {
        resize_bilinear(&cropped, n, n)?
    };
    let out_mask = match mask {
        None => None,
        Some(m) => {
            if (m.width, m.height) != (n, n) {
                return Err(Error::shape("augment", "mask and image sizes differ"));
            }
            let turned = remap(&m.labels, n, 1, plan.op);
            let cropped = SegMask {
                width: plan.crop_size,
                height: plan.crop_size,
                labels: crop(&turned, n, 1, plan),
            };
            Some(if plan.crop_size == n {
                cropped
            } else {
                resize_mask_bilinear(&cropped, n)?
            })
        }
    };
    Ok((out_img, out_mask))
}

/// Same resampling as the image, re-binarised at 0.5.
fn resize_mask_bilinear(mask: &SegMask, n: usize) -> Result<SegMask> {
    let t = Tensor::new(vec![mask.height, mask.width, 1], mask.to_reals())?;
    let labels = resize_bilinear(&t, n, n)?.data().iter().map(|&v| (v >= 0.5) as u8).collect();
    SegMask::new(n, n, labels)
}

/// Samples and applies a random augmentation; labels are never touched.
pub fn augment<R: Rng + ?Sized>(image: &Tensor, mask: Option<&SegMask>, rng: &mut R) -> Result<(Tensor, Option<SegMask>)> {
    let (h, w, _) = image.dims3()?;
    if h != w {
        return Err(Error::shape("augment", format!("image must be square, got {h}×{w}")));
    }
    match sample_plan(h, rng) {
        Some(plan) => apply_plan(image, mask, &plan),
        None => Ok((image.clone(), mask.cloned())),
    }
}
