//! Weighted-vote fusion of an RGB-channel and a vessel-channel classifier.

use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::codec;
use crate::dataio::grayscale;
use crate::error::{Error, Result};
use crate::pca::PcaModel;
use crate::segnet::SegNet;
use crate::svm::{argmax_first, KernelKind, MultiClassSvm};
use crate::tensor::Tensor;

pub const ENSEMBLE_FORMAT_VERSION: u32 = 1;
/// Ratios evaluated by default in a sweep.
pub const DEFAULT_SWEEP: [f64; 5] = [0.0, 0.40, 0.47, 0.61, 1.0];

fn check_ratio(ratio: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&ratio) {
        return Err(Error::config("ratio", format!("must lie in [0, 1], got {ratio}")));
    }
    Ok(())
}

fn check_resolution(image: &Tensor, d: usize) -> Result<()> {
    let (h, w, _) = image.dims3()?;
    if h * w != d {
        return Err(Error::shape("featurize", format!("{h}×{w} image does not match a {d}-dimensional PCA")));
    }
    Ok(())
}

/// Grayscale-flatten then project.
pub fn featurize_rgb(image: &Tensor, pca_rgb: &PcaModel) -> Result<Vec<f64>> {
    check_resolution(image, pca_rgb.d())?;
    pca_rgb.project(&grayscale(image)?)
}

/// Segment, flatten the mask as reals, then project.
pub fn featurize_vessel(image: &Tensor, segnet: &SegNet, pca_vessel: &PcaModel) -> Result<Vec<f64>> {
    check_resolution(image, pca_vessel.d())?;
    pca_vessel.project(&segnet.segment(image)?.to_reals())
}

/// `r·rgb[c]/V + (1−r)·vessel[c]/V` with `V = K(K−1)/2`.
pub fn fuse(votes_rgb: &[usize], votes_vessel: &[usize], ratio: f64) -> Vec<f64> {
    let k = votes_rgb.len();
    let v = (k * (k.saturating_sub(1)) / 2).max(1) as f64;
    votes_rgb
        .iter()
        .zip(votes_vessel)
        .map(|(&a, &b)| ratio * (a as f64 / v) + (1.0 - ratio) * (b as f64 / v))
        .collect()
}

/// Vote vectors of both channels for one input.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChannelVotes {
    pub rgb: Vec<usize>,
    pub vessel: Vec<usize>,
}

impl ChannelVotes {
    pub fn fused(&self, ratio: f64) -> (usize, Vec<f64>) {
        let scores = fuse(&self.rgb, &self.vessel, ratio);
        (argmax_first(&scores), scores)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct HybridEnsemble {
    pub segnet: SegNet,
    pub pca_rgb: PcaModel,
    pub pca_vessel: PcaModel,
    pub model_rgb: MultiClassSvm,
    pub model_vessel: MultiClassSvm,
    /// Weight on the RGB channel.
    pub ratio: f64,
}

impl HybridEnsemble {
    pub fn new(
        segnet: SegNet,
        pca_rgb: PcaModel,
        pca_vessel: PcaModel,
        model_rgb: MultiClassSvm,
        model_vessel: MultiClassSvm,
        ratio: f64,
    ) -> Result<Self> {
        check_ratio(ratio)?;
        if model_rgb.classes != model_vessel.classes {
            return Err(Error::ClassMismatch(format!(
                "rgb model classes {:?} differ from vessel model classes {:?}",
                model_rgb.classes, model_vessel.classes
            )));
        }
        if pca_rgb.k() != model_rgb.dim || pca_vessel.k() != model_vessel.dim {
            return Err(Error::shape("hybrid", "PCA output size differs from SVM input size"));
        }
        let side = segnet.config().input_size;
        if pca_rgb.d() != side * side || pca_vessel.d() != side * side {
            return Err(Error::shape("hybrid", "PCA input size differs from the segmentation resolution"));
        }
        Ok(HybridEnsemble { segnet, pca_rgb, pca_vessel, model_rgb, model_vessel, ratio })
    }

    pub fn classes(&self) -> &[String] {
        &self.model_rgb.classes
    }

    pub fn kernel_kind(&self) -> Option<KernelKind> {
        self.model_rgb.machines.first().map(|m| m.svm.kernel.kind)
    }

    pub fn channel_votes(&self, image: &Tensor) -> Result<ChannelVotes> {
        let rgb = self.model_rgb.votes(&featurize_rgb(image, &self.pca_rgb)?)?;
        let vessel = self.model_vessel.votes(&featurize_vessel(image, &self.segnet, &self.pca_vessel)?)?;
        Ok(ChannelVotes { rgb, vessel })
    }

    pub fn predict(&self, image: &Tensor) -> Result<(usize, Vec<f64>)> {
        Ok(self.channel_votes(image)?.fused(self.ratio))
    }

    /// Writes each component next to `bundle_path` and the bundle itself.
    pub fn save_bundle(&self, bundle_path: &Path) -> Result<()> {
        let dir = bundle_path.parent().unwrap_or(Path::new("."));
        let bundle = EnsembleBundle::default_names(self.ratio);
        self.segnet.save(&dir.join(&bundle.segnet))?;
        self.pca_rgb.save(&dir.join(&bundle.pca_rgb))?;
        self.pca_vessel.save(&dir.join(&bundle.pca_vessel))?;
        self.model_rgb.save(&dir.join(&bundle.svm_rgb))?;
        self.model_vessel.save(&dir.join(&bundle.svm_vessel))?;
        bundle.save(bundle_path)
    }

    pub fn load_bundle(bundle_path: &Path) -> Result<Self> {
        EnsembleBundle::load(bundle_path)?.resolve(bundle_path.parent().unwrap_or(Path::new(".")))
    }
}

pub fn hybrid_predict(ens: &HybridEnsemble, image: &Tensor) -> Result<(usize, Vec<f64>)> {
    ens.predict(image)
}

/// On-disk ensemble: component model paths relative to the bundle file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnsembleBundle {
    pub format_version: u32,
    pub segnet: PathBuf,
    pub pca_rgb: PathBuf,
    pub pca_vessel: PathBuf,
    pub svm_rgb: PathBuf,
    pub svm_vessel: PathBuf,
    pub ratio: f64,
}

impl EnsembleBundle {
    pub fn default_names(ratio: f64) -> Self {
        EnsembleBundle {
            format_version: ENSEMBLE_FORMAT_VERSION,
            segnet: "segnet.json".into(),
            pca_rgb: "pca_rgb.json".into(),
            pca_vessel: "pca_vessel.json".into(),
            svm_rgb: "svm_rgb.json".into(),
            svm_vessel: "svm_vessel.json".into(),
            ratio,
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        codec::write_text(path, &serde_json::to_string_pretty(self)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let b: EnsembleBundle = serde_json::from_str(&codec::read_text(path)?)?;
        if b.format_version != ENSEMBLE_FORMAT_VERSION {
            return Err(Error::FormatVersion { found: b.format_version, expected: ENSEMBLE_FORMAT_VERSION });
        }
        Ok(b)
    }

    pub fn resolve(&self, dir: &Path) -> Result<HybridEnsemble> {
        HybridEnsemble::new(
            SegNet::load(&dir.join(&self.segnet))?,
            PcaModel::load(&dir.join(&self.pca_rgb))?,
            PcaModel::load(&dir.join(&self.pca_vessel))?,
            MultiClassSvm::load(&dir.join(&self.svm_rgb))?,
            MultiClassSvm::load(&dir.join(&self.svm_vessel))?,
            self.ratio,
        )
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub accuracy: f64,
    /// `confusion[true][predicted]`.
    pub confusion: Vec<Vec<usize>>,
    /// `None` for classes absent from the test set.
    pub per_class_recall: Vec<Option<f64>>,
    pub n_test: usize,
}

/// Scores predictions against ground truth over `n_classes` classes.
pub fn evaluate(predicted: &[usize], truth: &[usize], n_classes: usize) -> Result<EvalReport> {
    if predicted.len() != truth.len() {
        return Err(Error::Dimension { expected: truth.len(), got: predicted.len() });
    }
    if truth.is_empty() {
        return Err(Error::Empty("evaluation set".into()));
    }
    let mut confusion = vec![vec![0usize; n_classes]; n_classes];
    for (&p, &t) in predicted.iter().zip(truth) {
        if t >= n_classes || p >= n_classes {
            return Err(Error::UnknownLabel { label: t.max(p).to_string() });
        }
        confusion[t][p] += 1;
    }
    let correct: usize = (0..n_classes).map(|c| confusion[c][c]).sum();
    let per_class_recall = confusion
        .iter()
        .enumerate()
        .map(|(c, row)| {
            let n: usize = row.iter().sum();
            (n > 0).then(|| row[c] as f64 / n as f64)
        })
        .collect();
    Ok(EvalReport {
        accuracy: correct as f64 / truth.len() as f64,
        confusion,
        per_class_recall,
        n_test: truth.len(),
    })
}

/// Evaluates a prediction function over a labelled set.
pub fn evaluate_with<T: Sync, F>(predict: F, set: &[(T, usize)], n_classes: usize) -> Result<EvalReport>
where
    F: Fn(&T) -> Result<usize> + Sync,
{
    let predicted = set.par_iter().map(|(x, _)| predict(x)).collect::<Result<Vec<_>>>()?;
    let truth: Vec<usize> = set.iter().map(|(_, l)| *l).collect();
    evaluate(&predicted, &truth, n_classes)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub ratio: f64,
    pub kernel: KernelKind,
    pub accuracy: f64,
}

/// Accuracy at each ratio from precomputed channel votes.
pub fn sweep_votes(votes: &[ChannelVotes], truth: &[usize], ratios: &[f64], kernel: KernelKind) -> Result<Vec<SweepRow>> {
    if votes.is_empty() {
        return Err(Error::Empty("sweep test set".into()));
    }
    if votes.len() != truth.len() {
        return Err(Error::Dimension { expected: truth.len(), got: votes.len() });
    }
    ratios
        .iter()
        .map(|&ratio| {
            check_ratio(ratio)?;
            let hits = votes.iter().zip(truth).filter(|(v, &t)| v.fused(ratio).0 == t).count();
            Ok(SweepRow { ratio, kernel, accuracy: hits as f64 / truth.len() as f64 })
        })
        .collect()
}

/// Sweeps every ensemble in `family` over `ratios`; rows are grouped by
/// ensemble, then in ratio order.
pub fn ratio_sweep(family: &[&HybridEnsemble], ratios: &[f64], test: &[(Tensor, usize)]) -> Result<Vec<SweepRow>> {
    if test.is_empty() {
        return Err(Error::Empty("sweep test set".into()));
    }
    let truth: Vec<usize> = test.iter().map(|(_, l)| *l).collect();
    let mut rows = Vec::new();
    for ens in family {
        let votes = test.par_iter().map(|(img, _)| ens.channel_votes(img)).collect::<Result<Vec<_>>>()?;
        let kind = ens.kernel_kind().ok_or_else(|| Error::Empty("ensemble without trained machines".into()))?;
        rows.extend(sweep_votes(&votes, &truth, ratios, kind)?);
    }
    Ok(rows)
}

pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["ratio", "kernel", "accuracy"]).expect("in-memory write");
    for r in rows {
        w.write_record([format!("{:.2}", r.ratio), r.kernel.as_str().to_string(), format!("{:.6}", r.accuracy)])
            .expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 csv")
}
