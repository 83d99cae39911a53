//! Run configuration: TOML file plus command-line overrides.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::codec;
use crate::error::{Error, Result};
use crate::hybrid::DEFAULT_SWEEP;
use crate::pca::DEFAULT_COMPONENTS;
use crate::segnet::{BoundaryForm, SegNetConfig, SkipMode, TrainOptions, WeightMapParams};
use crate::svm::{KernelKind, KernelSpec, SvmParams, DEFAULT_DEGREE, DEFAULT_GAMMA};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PathsConfig {
    pub manifest: PathBuf,
    /// Directory holding ground-truth masks, named like their images.
    pub mask_dir: PathBuf,
    /// Root that manifest image paths are relative to; defaults to the
    /// manifest's directory.
    pub image_root: Option<PathBuf>,
    pub model_dir: PathBuf,
    pub report_dir: PathBuf,
}

impl Default for PathsConfig {
    fn default() -> Self {
        PathsConfig {
            manifest: "data/manifest.csv".into(),
            mask_dir: "data/masks".into(),
            image_root: None,
            model_dir: "models".into(),
            report_dir: "reports".into(),
        }
    }
}

impl PathsConfig {
    pub fn image_root(&self) -> PathBuf {
        self.image_root
            .clone()
            .unwrap_or_else(|| self.manifest.parent().map(Path::to_path_buf).unwrap_or_default())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SegConfig {
    pub input_size: usize,
    pub levels: usize,
    pub base_channels: usize,
    pub skip_mode: SkipMode,
    pub lr: f64,
    pub momentum: f64,
    pub epochs: usize,
    pub stop_loss: f64,
    pub batch_size: usize,
    pub augment: bool,
    pub w0: f64,
    pub sigma: f64,
    pub class_balance: bool,
    pub boundary_form: BoundaryForm,
    /// Cap on training images used for segmentation (0 = all).
    pub max_train_images: usize,
}

impl Default for SegConfig {
    fn default() -> Self {
        let net = SegNetConfig::default();
        let train = TrainOptions::default();
        let wm = WeightMapParams::default();
        SegConfig {
            input_size: net.input_size,
            levels: net.levels,
            base_channels: net.base_channels,
            skip_mode: net.skip_mode,
            lr: train.lr,
            momentum: train.momentum,
            epochs: train.max_epochs,
            stop_loss: train.stop_loss,
            batch_size: train.batch_size,
            augment: train.augment,
            w0: wm.w0,
            sigma: wm.sigma,
            class_balance: wm.class_balance,
            boundary_form: wm.form,
            max_train_images: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PcaConfig {
    pub k: usize,
}

impl Default for PcaConfig {
    fn default() -> Self {
        PcaConfig { k: DEFAULT_COMPONENTS }
    }
}

/// Per-channel SVM overrides; unset fields fall back to `[svm]`.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SvmOverride {
    #[serde(rename = "C")]
    pub c: Option<f64>,
    pub kernel: Option<KernelKind>,
    pub gamma: Option<f64>,
    pub degree: Option<u32>,
    pub coef0: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SvmConfig {
    #[serde(rename = "C")]
    pub c: f64,
    pub kernel: KernelKind,
    pub gamma: f64,
    pub degree: u32,
    pub coef0: f64,
    pub tol: f64,
    pub max_iter: usize,
    pub rgb: SvmOverride,
    pub vessel: SvmOverride,
}

impl Default for SvmConfig {
    fn default() -> Self {
        SvmConfig {
            c: 128.0,
            kernel: KernelKind::Rbf,
            gamma: DEFAULT_GAMMA,
            degree: DEFAULT_DEGREE,
            coef0: 0.0,
            tol: 1e-3,
            max_iter: 1_000_000,
            rgb: SvmOverride::default(),
            vessel: SvmOverride::default(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Channel {
    Rgb,
    Vessel,
}

impl Channel {
    pub fn as_str(self) -> &'static str {
        match self {
            Channel::Rgb => "rgb",
            Channel::Vessel => "vessel",
        }
    }

    pub fn parse(s: &str) -> Result<Channel> {
        match s {
            "rgb" => Ok(Channel::Rgb),
            "vessel" => Ok(Channel::Vessel),
            other => Err(Error::config("channel", format!("expected rgb or vessel, got `{other}`"))),
        }
    }
}

impl SvmConfig {
    /// Effective parameters for a channel, optionally forcing the kernel kind.
    pub fn params(&self, channel: Channel, kind: Option<KernelKind>) -> SvmParams {
        let o = match channel {
            Channel::Rgb => &self.rgb,
            Channel::Vessel => &self.vessel,
        };
        let kind = kind.or(o.kernel).unwrap_or(self.kernel);
        SvmParams {
            c: o.c.unwrap_or(self.c),
            kernel: KernelSpec {
                kind,
                gamma: o.gamma.unwrap_or(self.gamma),
                degree: o.degree.unwrap_or(self.degree),
                coef0: o.coef0.unwrap_or(self.coef0),
            },
            tol: self.tol,
            max_iter: self.max_iter,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HybridConfig {
    pub ratio: f64,
    pub sweep: Vec<f64>,
    pub sweep_kernels: Vec<KernelKind>,
}

impl Default for HybridConfig {
    fn default() -> Self {
        HybridConfig {
            ratio: 0.47,
            sweep: DEFAULT_SWEEP.to_vec(),
            sweep_kernels: vec![KernelKind::Rbf, KernelKind::Polynomial],
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SeedConfig {
    pub split: u64,
    pub init: u64,
    pub train: u64,
    pub augment: u64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub paths: PathsConfig,
    pub seg: SegConfig,
    pub pca: PcaConfig,
    pub svm: SvmConfig,
    pub hybrid: HybridConfig,
    pub seeds: SeedConfig,
}

/// Command-line overrides applied on top of a loaded config.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Overrides {
    /// Sets every seed.
    pub seed: Option<u64>,
    pub ratio: Option<f64>,
    pub k: Option<usize>,
    pub c: Option<f64>,
    pub gamma: Option<f64>,
    pub kernel: Option<KernelKind>,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Toml(e.message().to_string()))
    }

    /// Loads a config; relative paths inside it resolve against its directory.
    pub fn load(path: &Path) -> Result<Self> {
        let mut cfg = Self::from_toml(&codec::read_text(path)?)?;
        let base = path.parent().unwrap_or(Path::new(""));
        let p = &mut cfg.paths;
        for field in [&mut p.manifest, &mut p.mask_dir, &mut p.model_dir, &mut p.report_dir] {
            if field.is_relative() {
                *field = base.join(&*field);
            }
        }
        if let Some(root) = p.image_root.as_mut().filter(|r| r.is_relative()) {
            *root = base.join(&*root);
        }
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config is always representable as TOML")
    }

    pub fn apply(&mut self, o: &Overrides) {
        if let Some(s) = o.seed {
            self.seeds = SeedConfig { split: s, init: s, train: s, augment: s };
        }
        if let Some(r) = o.ratio {
            self.hybrid.ratio = r;
        }
        if let Some(k) = o.k {
            self.pca.k = k;
        }
        if let Some(c) = o.c {
            self.svm.c = c;
        }
        if let Some(g) = o.gamma {
            self.svm.gamma = g;
        }
        if let Some(kind) = o.kernel {
            self.svm.kernel = kind;
        }
    }

    /// Hex SHA-256 of the canonical TOML rendering.
    pub fn hash(&self) -> String {
        let digest = Sha256::digest(self.to_toml().as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn segnet_config(&self) -> SegNetConfig {
        SegNetConfig {
            input_size: self.seg.input_size,
            levels: self.seg.levels,
            base_channels: self.seg.base_channels,
            skip_mode: self.seg.skip_mode,
            seed: self.seeds.init,
            ..SegNetConfig::default()
        }
    }

    pub fn train_options(&self) -> TrainOptions {
        TrainOptions {
            lr: self.seg.lr,
            momentum: self.seg.momentum,
            max_epochs: self.seg.epochs,
            stop_loss: self.seg.stop_loss,
            batch_size: self.seg.batch_size,
            augment: self.seg.augment,
            augment_seed: self.seeds.augment,
            weight_map: WeightMapParams {
                w0: self.seg.w0,
                sigma: self.seg.sigma,
                class_balance: self.seg.class_balance,
                form: self.seg.boundary_form,
            },
        }
    }

    /// Range checks on every numeric field.
    pub fn validate(&self) -> Result<()> {
        self.segnet_config().validate()?;
        let s = &self.seg;
        if !(s.lr >= 0.0 && s.lr.is_finite()) {
            return Err(Error::config("seg.lr", "must be a non-negative number"));
        }
        if !(0.0..1.0).contains(&s.momentum) {
            return Err(Error::config("seg.momentum", "must lie in [0, 1)"));
        }
        if s.batch_size == 0 {
            return Err(Error::config("seg.batch_size", "must be at least 1"));
        }
        if !(s.sigma > 0.0) || !(s.w0 >= 0.0) {
            return Err(Error::config("seg.sigma/w0", "sigma > 0 and w0 ≥ 0 required"));
        }
        if self.pca.k == 0 {
            return Err(Error::config("pca.k", "must be at least 1"));
        }
        for ch in [Channel::Rgb, Channel::Vessel] {
            let p = self.svm.params(ch, None);
            if !(p.c > 0.0 && p.c.is_finite()) {
                return Err(Error::config(format!("svm.{}.C", ch.as_str()), "must be positive"));
            }
            p.kernel.validate()?;
        }
        if !(self.svm.tol > 0.0) {
            return Err(Error::config("svm.tol", "must be positive"));
        }
        if !(0.0..=1.0).contains(&self.hybrid.ratio) {
            return Err(Error::config("hybrid.ratio", "must lie in [0, 1]"));
        }
        if let Some(r) = self.hybrid.sweep.iter().find(|r| !(0.0..=1.0).contains(*r)) {
            return Err(Error::config("hybrid.sweep", format!("ratio {r} outside [0, 1]")));
        }
        if self.hybrid.sweep.is_empty() || self.hybrid.sweep_kernels.is_empty() {
            return Err(Error::config("hybrid.sweep", "needs at least one ratio and one kernel"));
        }
        Ok(())
    }

    /// `validate` plus existence of the dataset inputs.
    pub fn validate_inputs(&self) -> Result<()> {
        self.validate()?;
        if !self.paths.manifest.is_file() {
            return Err(Error::MissingFile(self.paths.manifest.clone()));
        }
        if !self.paths.mask_dir.is_dir() {
            return Err(Error::MissingFile(self.paths.mask_dir.clone()));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate_and_round_trip() {
        let cfg = RunConfig::default();
        cfg.validate().unwrap();
        assert_eq!(RunConfig::from_toml(&cfg.to_toml()).unwrap(), cfg);
        assert_eq!(cfg.pca.k, 62);
        assert_eq!(cfg.svm.c, 128.0);
        assert_eq!(cfg.hybrid.sweep, vec![0.0, 0.40, 0.47, 0.61, 1.0]);
    }

    #[test]
    fn partial_file_fills_defaults() {
        let cfg = RunConfig::from_toml("[svm]\nC = 4.0\nkernel = \"poly\"\n[svm.vessel]\ngamma = 0.5\n").unwrap();
        assert_eq!(cfg.svm.c, 4.0);
        let p = cfg.svm.params(Channel::Vessel, None);
        assert_eq!(p.kernel.kind, KernelKind::Polynomial);
        assert_eq!(p.kernel.gamma, 0.5);
        assert_eq!(cfg.svm.params(Channel::Rgb, None).kernel.gamma, DEFAULT_GAMMA);
    }

    #[test]
    fn unknown_fields_and_bad_ranges_rejected() {
        assert!(matches!(RunConfig::from_toml("[svm]\ncost = 3\n"), Err(Error::Toml(_))));
        let mut cfg = RunConfig::default();
        cfg.hybrid.ratio = 1.5;
        assert!(matches!(cfg.validate(), Err(Error::InvalidConfig { .. })));
        let mut cfg = RunConfig::default();
        cfg.seg.input_size = 60;
        assert!(cfg.validate().is_err());
        let mut cfg = RunConfig::default();
        cfg.svm.vessel.gamma = Some(-1.0);
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn overrides_apply_and_change_hash() {
        let mut cfg = RunConfig::default();
        let h = cfg.hash();
        assert_eq!(h.len(), 64);
        cfg.apply(&Overrides { seed: Some(9), ratio: Some(0.61), kernel: Some(KernelKind::Polynomial), ..Default::default() });
        assert_eq!(cfg.seeds.augment, 9);
        assert_eq!(cfg.hybrid.ratio, 0.61);
        assert_ne!(cfg.hash(), h);
    }

    #[test]
    fn missing_inputs_fail_fast() {
        let mut cfg = RunConfig::default();
        cfg.paths.manifest = "/nonexistent/manifest.csv".into();
        assert!(matches!(cfg.validate_inputs(), Err(Error::MissingFile(_))));
    }
}
