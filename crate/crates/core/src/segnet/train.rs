use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{compute_weight_map, NetGradients, SegMask, SegNet, WeightMap, WeightMapParams};
use crate::dataio::augment;
use crate::error::{Error, Result};
use crate::seeds::mix_seed;
use crate::tensor::Tensor;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainOptions {
    pub lr: f64,
    pub momentum: f64,
    pub max_epochs: usize,
    /// Training stops once the epoch's mean loss drops below this.
    pub stop_loss: f64,
    pub batch_size: usize,
    pub augment: bool,
    pub augment_seed: u64,
    pub weight_map: WeightMapParams,
}

impl Default for TrainOptions {
    fn default() -> Self {
        TrainOptions {
            lr: 0.01,
            momentum: 0.9,
            max_epochs: 60,
            stop_loss: 1e-3,
            batch_size: 4,
            augment: true,
            augment_seed: 0,
            weight_map: WeightMapParams::default(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    Converged,
    MaxEpochs,
    Diverged,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub epochs_run: usize,
    pub loss_curve: Vec<f64>,
    pub stop_reason: StopReason,
    pub pixel_accuracy_test: Option<f64>,
}

/// Fraction of correctly labelled pixels over all pairs.
pub fn pixel_accuracy(net: &SegNet, pairs: &[(Tensor, SegMask)]) -> Result<f64> {
    if pairs.is_empty() {
        return Err(Error::Empty("pixel accuracy over no images".into()));
    }
    let counts = pairs
        .par_iter()
        .map(|(img, truth)| {
            let pred = net.segment(img)?;
            let hits = pred.labels.iter().zip(&truth.labels).filter(|(a, b)| a == b).count();
            Ok((hits, truth.labels.len()))
        })
        .collect::<Result<Vec<_>>>()?;
    let (hits, total) = counts.iter().fold((0, 0), |(h, t), (a, b)| (h + a, t + b));
    Ok(hits as f64 / total as f64)
}

/// SGD with momentum on the weighted cross-entropy.
///
/// Each epoch visits the training pairs in a seeded shuffled order, in
/// mini-batches whose per-sample gradients are reduced in index order, so the
/// loss curve is reproducible regardless of thread count.
pub fn train_segnet(
    mut net: SegNet,
    train: &[(Tensor, SegMask)],
    eval: &[(Tensor, SegMask)],
    opts: &TrainOptions,
) -> Result<(SegNet, TrainReport)> {
    if train.is_empty() {
        return Err(Error::Empty("segmentation training set".into()));
    }
    if opts.batch_size == 0 {
        return Err(Error::config("batch_size", "must be at least 1"));
    }
    if !(opts.lr >= 0.0) || !(0.0..1.0).contains(&opts.momentum) {
        return Err(Error::config("lr/momentum", "lr ≥ 0 and 0 ≤ momentum < 1 required"));
    }
    for (img, mask) in train {
        net.check_input(img)?;
        if (mask.width, mask.height) != (net.config.input_size, net.config.input_size) {
            return Err(Error::shape("train_segnet", "mask size differs from network input size"));
        }
    }

    let base_maps: Vec<WeightMap> = train
        .par_iter()
        .map(|(_, m)| compute_weight_map(m, &opts.weight_map))
        .collect::<Result<_>>()?;

    let mut velocity = vec![0.0; net.parameter_count()];
    let mut params = net.flat_parameters();
    let mut loss_curve = Vec::new();
    let mut stop_reason = StopReason::MaxEpochs;
    let mut order: Vec<usize> = (0..train.len()).collect();

    for epoch in 0..opts.max_epochs {
        let last_good = params.clone();
        let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(opts.augment_seed, &[epoch as u64, 0x5eed]));
        order.sort_unstable();
        order.shuffle(&mut rng);

        let mut epoch_loss = 0.0;
        for batch in order.chunks(opts.batch_size) {
            let results = batch
                .par_iter()
                .map(|&i| {
                    let (img, mask) = &train[i];
                    if opts.augment {
                        let mut srng =
                            ChaCha8Rng::seed_from_u64(mix_seed(opts.augment_seed, &[epoch as u64, i as u64]));
                        let (aimg, amask) = augment(img, Some(mask), &mut srng)?;
                        let amask = amask.expect("mask passed through augmentation");
                        if amask == *mask {
                            net.loss_and_gradient(&aimg, mask, &base_maps[i])
                        } else {
                            let wmap = compute_weight_map(&amask, &opts.weight_map)?;
                            net.loss_and_gradient(&aimg, &amask, &wmap)
                        }
                    } else {
                        net.loss_and_gradient(img, mask, &base_maps[i])
                    }
                })
                .collect::<Result<Vec<(f64, NetGradients)>>>()?;

            let mut iter = results.into_iter();
            let (first_loss, mut total) = iter.next().expect("non-empty batch");
            epoch_loss += first_loss;
            for (l, g) in iter {
                epoch_loss += l;
                total.add_assign(&g);
            }
            let scale = opts.lr / batch.len() as f64;
            for ((v, p), g) in velocity.iter_mut().zip(params.iter_mut()).zip(total.flatten()) {
                *v = opts.momentum * *v - scale * g;
                *p += *v;
            }
            net.set_flat_parameters(&params)?;
        }
        let mean = epoch_loss / train.len() as f64;
        if !mean.is_finite() || !params.iter().all(|p| p.is_finite()) {
            log::warn!("segmentation training diverged at epoch {}", epoch + 1);
            net.set_flat_parameters(&last_good)?;
            stop_reason = StopReason::Diverged;
            break;
        }
        loss_curve.push(mean);
        log::info!("segnet epoch {:>3}  mean loss {mean:.6}", epoch + 1);
        if mean < opts.stop_loss {
            stop_reason = StopReason::Converged;
            break;
        }
    }

    let pixel_accuracy_test = if eval.is_empty() {
        None
    } else {
        Some(pixel_accuracy(&net, eval)?)
    };
    Ok((
        net,
        TrainReport {
            epochs_run: loss_curve.len(),
            loss_curve,
            stop_reason,
            pixel_accuracy_test,
        },
    ))
}
