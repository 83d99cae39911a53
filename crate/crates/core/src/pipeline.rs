//! End-to-end commands: each reads its inputs from disk, writes its model
//! and a JSON report carrying a provenance block.

use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::codec;
use crate::config::{Channel, RunConfig, SeedConfig};
use crate::dataio::{self, grayscale, load_image, load_mask, DatasetManifest, Split, SyntheticSpec};
use crate::error::{Error, Result};
use crate::hybrid::{self, ChannelVotes, EvalReport, HybridEnsemble, SweepRow};
use crate::pca::{max_components, PcaModel};
use crate::segnet::{build_segnet, train_segnet, SegMask, SegNet, TrainReport};
use crate::svm::{train_multiclass, KernelKind, MultiClassSvm};
use crate::tensor::Tensor;

pub const SEGNET_FILE: &str = "segnet.json";
pub const ENSEMBLE_FILE: &str = "ensemble.json";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub command: String,
    pub config_hash: String,
    pub seeds: SeedConfig,
    pub version: String,
    /// Seconds since the Unix epoch; the only field allowed to differ between
    /// otherwise identical runs.
    pub timestamp: u64,
}

impl Provenance {
    pub fn new(command: &str, cfg: &RunConfig) -> Self {
        Provenance {
            command: command.into(),
            config_hash: cfg.hash(),
            seeds: cfg.seeds.clone(),
            version: env!("CARGO_PKG_VERSION").into(),
            timestamp: SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs()),
        }
    }
}

#[derive(Serialize)]
struct Report<'a, T: Serialize> {
    provenance: Provenance,
    result: &'a T,
}

pub fn write_report<T: Serialize>(path: &Path, command: &str, cfg: &RunConfig, result: &T) -> Result<()> {
    let report = Report { provenance: Provenance::new(command, cfg), result };
    codec::write_text(path, &(serde_json::to_string_pretty(&report)? + "\n"))
}

pub fn report_path(cfg: &RunConfig, name: &str) -> PathBuf {
    cfg.paths.report_dir.join(name)
}

pub fn model_path(cfg: &RunConfig, name: &str) -> PathBuf {
    cfg.paths.model_dir.join(name)
}

pub fn pca_file(channel: Channel) -> String {
    format!("pca_{}.json", channel.as_str())
}

#[derive(Clone, Debug)]
pub struct Sample {
    pub path: PathBuf,
    pub image: Tensor,
    pub mask: Option<SegMask>,
    pub label: usize,
}

pub fn load_dataset_manifest(cfg: &RunConfig) -> Result<DatasetManifest> {
    let m = dataio::load_manifest(&cfg.paths.manifest, None)?;
    if m.records.iter().all(|r| r.split == Split::Unassigned) && !m.records.is_empty() {
        return Err(Error::config("paths.manifest", "manifest has no split column; run `split` first"));
    }
    Ok(m)
}

/// Loads the records of one split, resized to the network input size.
pub fn load_split(cfg: &RunConfig, manifest: &DatasetManifest, split: Split, with_masks: bool) -> Result<Vec<Sample>> {
    let root = cfg.paths.image_root();
    let size = cfg.seg.input_size;
    manifest
        .split(split)
        .collect::<Vec<_>>()
        .par_iter()
        .map(|r| {
            let path = root.join(&r.image_path);
            let image = load_image(&path, size)?;
            let mask = if with_masks {
                let name = r
                    .image_path
                    .file_name()
                    .ok_or_else(|| Error::Manifest { line: 0, reason: format!("no file name in {}", r.image_path.display()) })?;
                Some(load_mask(&cfg.paths.mask_dir.join(name), size)?)
            } else {
                None
            };
            Ok(Sample { path, image, mask, label: manifest.class_index(&r.label)? })
        })
        .collect()
}

/// Interleaves classes so a prefix of the result is class-balanced.
fn class_interleaved(samples: &[Sample]) -> Vec<usize> {
    let mut rank = vec![0usize; samples.len()];
    let mut seen = std::collections::HashMap::new();
    for (i, s) in samples.iter().enumerate() {
        let c = seen.entry(s.label).or_insert(0usize);
        rank[i] = *c;
        *c += 1;
    }
    let mut idx: Vec<usize> = (0..samples.len()).collect();
    idx.sort_by_key(|&i| (rank[i], samples[i].label, i));
    idx
}

fn mask_pairs(samples: &[Sample]) -> Vec<(Tensor, SegMask)> {
    samples
        .iter()
        .filter_map(|s| s.mask.clone().map(|m| (s.image.clone(), m)))
        .collect()
}

pub fn cmd_synth(spec: &SyntheticSpec, out_dir: &Path) -> Result<DatasetManifest> {
    let corpus = dataio::synth_generate(spec)?;
    dataio::write_corpus(&corpus, out_dir)
}

pub fn cmd_split(manifest: &Path, out: &Path, fractions: [f64; 3], seed: u64) -> Result<DatasetManifest> {
    let m = dataio::load_manifest(manifest, None)?;
    let split = dataio::split_dataset(&m, fractions, seed, true)?;
    split.save(out)?;
    Ok(split)
}

pub fn cmd_train_seg(cfg: &RunConfig) -> Result<TrainReport> {
    cfg.validate_inputs()?;
    let manifest = load_dataset_manifest(cfg)?;
    let train = load_split(cfg, &manifest, Split::Train, true)?;
    let test = load_split(cfg, &manifest, Split::Test, true)?;
    let mut order = class_interleaved(&train);
    if cfg.seg.max_train_images > 0 {
        order.truncate(cfg.seg.max_train_images);
    }
    let chosen: Vec<Sample> = order.iter().map(|&i| train[i].clone()).collect();
    let net = build_segnet(&cfg.segnet_config())?;
    log::info!("training segmentation on {} images ({} parameters)", chosen.len(), net.parameter_count());
    let (net, report) = train_segnet(net, &mask_pairs(&chosen), &mask_pairs(&test), &cfg.train_options())?;
    net.save(&model_path(cfg, SEGNET_FILE))?;
    write_report(&report_path(cfg, "train_seg.json"), "train-seg", cfg, &report)?;
    Ok(report)
}

pub fn cmd_segment(model: &Path, image: &Path, out: &Path) -> Result<SegMask> {
    let net = SegNet::load(model)?;
    let img = load_image(image, net.config().input_size)?;
    let mask = net.segment(&img)?;
    dataio::save_mask(out, &mask)?;
    Ok(mask)
}

/// Raw (pre-PCA) feature vectors of one channel.
pub fn channel_features(channel: Channel, images: &[&Tensor], segnet: Option<&SegNet>) -> Result<Vec<Vec<f64>>> {
    images
        .par_iter()
        .map(|img| match channel {
            Channel::Rgb => grayscale(img),
            Channel::Vessel => {
                let net = segnet.ok_or_else(|| Error::config("segnet", "vessel features need a segmentation model"))?;
                Ok(net.segment(img)?.to_reals())
            }
        })
        .collect()
}

/// Fits PCA with `k` clamped to what the data supports.
pub fn fit_pca_clamped(features: &[Vec<f64>], k: usize) -> Result<PcaModel> {
    let d = features.first().map_or(0, Vec::len);
    let limit = max_components(features.len(), d);
    let k_eff = k.min(limit);
    if k_eff < k {
        log::warn!("pca k={k} exceeds min(n-1, d)={limit}; using k={k_eff}");
    }
    PcaModel::fit(features, k_eff)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PcaSummary {
    pub channel: String,
    pub k: usize,
    pub d: usize,
    pub n_fit: usize,
    pub explained_variance: Vec<f64>,
}

fn load_segnet(cfg: &RunConfig) -> Result<SegNet> {
    let net = SegNet::load(&model_path(cfg, SEGNET_FILE))?;
    if net.config().input_size != cfg.seg.input_size {
        return Err(Error::config("seg.input_size", "differs from the trained segmentation model"));
    }
    Ok(net)
}

pub fn cmd_fit_pca(cfg: &RunConfig, channel: Channel) -> Result<PcaModel> {
    cfg.validate_inputs()?;
    let manifest = load_dataset_manifest(cfg)?;
    let train = load_split(cfg, &manifest, Split::Train, false)?;
    let segnet = match channel {
        Channel::Vessel => Some(load_segnet(cfg)?),
        Channel::Rgb => None,
    };
    let images: Vec<&Tensor> = train.iter().map(|s| &s.image).collect();
    let feats = channel_features(channel, &images, segnet.as_ref())?;
    let model = fit_pca_clamped(&feats, cfg.pca.k)?;
    model.save(&model_path(cfg, &pca_file(channel)))?;
    let summary = PcaSummary {
        channel: channel.as_str().into(),
        k: model.k(),
        d: model.d(),
        n_fit: feats.len(),
        explained_variance: model.explained_variance(),
    };
    write_report(&report_path(cfg, &format!("pca_{}.json", channel.as_str())), "fit-pca", cfg, &summary)?;
    Ok(model)
}

/// PCA-projected features of both channels for a set of samples.
pub struct ProjectedSet {
    pub rgb: Vec<Vec<f64>>,
    pub vessel: Vec<Vec<f64>>,
    pub labels: Vec<usize>,
}

pub fn project_samples(samples: &[Sample], segnet: &SegNet, pca_rgb: &PcaModel, pca_vessel: &PcaModel) -> Result<ProjectedSet> {
    let images: Vec<&Tensor> = samples.iter().map(|s| &s.image).collect();
    let rgb = pca_rgb.project_all(&channel_features(Channel::Rgb, &images, None)?)?;
    let vessel = pca_vessel.project_all(&channel_features(Channel::Vessel, &images, Some(segnet))?)?;
    Ok(ProjectedSet { rgb, vessel, labels: samples.iter().map(|s| s.label).collect() })
}

/// Trains the two channel models, optionally forcing the kernel kind.
pub fn train_channel_models(
    cfg: &RunConfig,
    classes: &[String],
    train: &ProjectedSet,
    kind: Option<KernelKind>,
) -> Result<(MultiClassSvm, MultiClassSvm)> {
    let rgb = train_multiclass(&train.rgb, &train.labels, classes, &cfg.svm.params(Channel::Rgb, kind), cfg.seeds.train)?;
    let vessel = train_multiclass(
        &train.vessel,
        &train.labels,
        classes,
        &cfg.svm.params(Channel::Vessel, kind),
        crate::seeds::mix_seed(cfg.seeds.train, &[1]),
    )?;
    Ok((rgb, vessel))
}

pub fn channel_votes(set: &ProjectedSet, rgb: &MultiClassSvm, vessel: &MultiClassSvm) -> Result<Vec<ChannelVotes>> {
    set.rgb
        .iter()
        .zip(&set.vessel)
        .map(|(a, b)| Ok(ChannelVotes { rgb: rgb.votes(a)?, vessel: vessel.votes(b)? }))
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HybridSummary {
    pub classes: Vec<String>,
    pub ratio: f64,
    pub machines_rgb: usize,
    pub machines_vessel: usize,
    pub omitted_pairs: Vec<(usize, usize)>,
    pub all_converged: bool,
    pub n_train: usize,
}

struct Stage {
    manifest: DatasetManifest,
    segnet: SegNet,
    pca_rgb: PcaModel,
    pca_vessel: PcaModel,
}

fn load_stage(cfg: &RunConfig) -> Result<Stage> {
    cfg.validate_inputs()?;
    Ok(Stage {
        manifest: load_dataset_manifest(cfg)?,
        segnet: load_segnet(cfg)?,
        pca_rgb: PcaModel::load(&model_path(cfg, &pca_file(Channel::Rgb)))?,
        pca_vessel: PcaModel::load(&model_path(cfg, &pca_file(Channel::Vessel)))?,
    })
}

pub fn cmd_train_hybrid(cfg: &RunConfig) -> Result<HybridEnsemble> {
    let st = load_stage(cfg)?;
    let train = load_split(cfg, &st.manifest, Split::Train, false)?;
    let set = project_samples(&train, &st.segnet, &st.pca_rgb, &st.pca_vessel)?;
    let (rgb, vessel) = train_channel_models(cfg, &st.manifest.classes, &set, None)?;
    let summary = HybridSummary {
        classes: st.manifest.classes.clone(),
        ratio: cfg.hybrid.ratio,
        machines_rgb: rgb.machines.len(),
        machines_vessel: vessel.machines.len(),
        omitted_pairs: rgb.omitted.clone(),
        all_converged: rgb.machines.iter().chain(&vessel.machines).all(|m| m.svm.converged),
        n_train: set.labels.len(),
    };
    let ens = HybridEnsemble::new(st.segnet, st.pca_rgb, st.pca_vessel, rgb, vessel, cfg.hybrid.ratio)?;
    ens.save_bundle(&model_path(cfg, ENSEMBLE_FILE))?;
    write_report(&report_path(cfg, "train_hybrid.json"), "train-hybrid", cfg, &summary)?;
    Ok(ens)
}

pub fn cmd_sweep(cfg: &RunConfig) -> Result<Vec<SweepRow>> {
    let st = load_stage(cfg)?;
    let train = load_split(cfg, &st.manifest, Split::Train, false)?;
    let test = load_split(cfg, &st.manifest, Split::Test, false)?;
    if test.is_empty() {
        return Err(Error::Empty("test split".into()));
    }
    let train_set = project_samples(&train, &st.segnet, &st.pca_rgb, &st.pca_vessel)?;
    let test_set = project_samples(&test, &st.segnet, &st.pca_rgb, &st.pca_vessel)?;
    let mut rows = Vec::new();
    for &kind in &cfg.hybrid.sweep_kernels {
        let (rgb, vessel) = train_channel_models(cfg, &st.manifest.classes, &train_set, Some(kind))?;
        let votes = channel_votes(&test_set, &rgb, &vessel)?;
        rows.extend(hybrid::sweep_votes(&votes, &test_set.labels, &cfg.hybrid.sweep, kind)?);
    }
    codec::write_text(&report_path(cfg, "sweep.csv"), &hybrid::sweep_csv(&rows))?;
    write_report(&report_path(cfg, "sweep.json"), "sweep", cfg, &rows)?;
    Ok(rows)
}

pub fn parse_split(s: &str) -> Result<Split> {
    match Split::parse(s) {
        Some(Split::Unassigned) | None => Err(Error::config("split", format!("expected train, val or test, got `{s}`"))),
        Some(sp) => Ok(sp),
    }
}

pub fn cmd_eval(cfg: &RunConfig, bundle: &Path, split: Split) -> Result<EvalReport> {
    cfg.validate_inputs()?;
    let ens = HybridEnsemble::load_bundle(bundle)?;
    let manifest = load_dataset_manifest(cfg)?;
    if manifest.classes != ens.classes() {
        return Err(Error::ClassMismatch(format!(
            "manifest classes {:?} differ from ensemble classes {:?}",
            manifest.classes,
            ens.classes()
        )));
    }
    let samples = load_split(cfg, &manifest, split, false)?;
    let set: Vec<(Tensor, usize)> = samples.into_iter().map(|s| (s.image, s.label)).collect();
    let report = hybrid::evaluate_with(|img| Ok(ens.predict(img)?.0), &set, ens.classes().len())?;
    write_report(&report_path(cfg, &format!("eval_{}.json", split.as_str())), "eval", cfg, &report)?;
    Ok(report)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub segmentation: TrainReport,
    pub sweep: Vec<SweepRow>,
    pub eval: EvalReport,
}

/// Runs every stage in order on an already split manifest.
pub fn cmd_run(cfg: &RunConfig) -> Result<RunSummary> {
    let segmentation = cmd_train_seg(cfg)?;
    cmd_fit_pca(cfg, Channel::Rgb)?;
    cmd_fit_pca(cfg, Channel::Vessel)?;
    cmd_train_hybrid(cfg)?;
    let sweep = cmd_sweep(cfg)?;
    let eval = cmd_eval(cfg, &model_path(cfg, ENSEMBLE_FILE), Split::Test)?;
    let summary = RunSummary { segmentation, sweep, eval };
    write_report(&report_path(cfg, "run.json"), "run", cfg, &summary)?;
    Ok(summary)
}
