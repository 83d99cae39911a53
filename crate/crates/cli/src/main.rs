use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use fundus_core::config::{Channel, Overrides, RunConfig};
use fundus_core::dataio::SyntheticSpec;
use fundus_core::pipeline::{self, parse_split};
use fundus_core::svm::KernelKind;
use fundus_core::{Error, Result};

#[derive(Parser)]
#[command(name = "fundus", version, about = "Retinal image classification: vessel segmentation, PCA and SVM ensemble")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum KernelArg {
    Rbf,
    Poly,
}

#[derive(Clone, Copy, ValueEnum)]
enum ChannelArg {
    Rgb,
    Vessel,
}

#[derive(Args)]
struct ConfigArgs {
    /// Run configuration (TOML); defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Sets every seed.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    ratio: Option<f64>,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long = "c")]
    c: Option<f64>,
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long, value_enum)]
    kernel: Option<KernelArg>,
}

impl ConfigArgs {
    fn load(&self) -> Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::default(),
        };
        cfg.apply(&Overrides {
            seed: self.seed,
            ratio: self.ratio,
            k: self.k,
            c: self.c,
            gamma: self.gamma,
            kernel: self.kernel.map(|k| match k {
                KernelArg::Rbf => KernelKind::Rbf,
                KernelArg::Poly => KernelKind::Polynomial,
            }),
        });
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Generate the synthetic vessel corpus (images, masks, manifest.csv).
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 8)]
        classes: usize,
        #[arg(long, default_value_t = 50)]
        per_class: usize,
        #[arg(long, default_value_t = 64)]
        size: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Assign stratified train/val/test splits to a manifest.
    Split {
        #[arg(long)]
        manifest: PathBuf,
        /// Output manifest; overwrites the input when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, default_value_t = 0.7)]
        train: f64,
        #[arg(long, default_value_t = 0.1)]
        val: f64,
        #[arg(long, default_value_t = 0.2)]
        test: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Train the segmentation network.
    TrainSeg(ConfigArgs),
    /// Segment one image with a trained network.
    Segment {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        image: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Fit PCA for one channel on the training split.
    FitPca {
        #[arg(long, value_enum)]
        channel: ChannelArg,
        #[command(flatten)]
        cfg: ConfigArgs,
    },
    /// Train both channel SVMs and write the ensemble bundle.
    TrainHybrid(ConfigArgs),
    /// Accuracy over the ratio sweep for each kernel.
    Sweep(ConfigArgs),
    /// Evaluate an ensemble bundle on one split.
    Eval {
        /// Ensemble bundle; defaults to the model directory's ensemble.json.
        #[arg(long)]
        ensemble: Option<PathBuf>,
        #[arg(long, default_value = "test")]
        split: String,
        #[command(flatten)]
        cfg: ConfigArgs,
    },
    /// Every stage in order on an already split manifest.
    Run(ConfigArgs),
    /// Print the default configuration as TOML.
    DefaultConfig,
}

fn configure_threads() {
    let Ok(v) = std::env::var("FUNDUS_THREADS") else { return };
    match v.trim().parse::<usize>() {
        Ok(n) if n > 0 => {
            if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
                log::warn!("could not size the thread pool: {e}");
            }
        }
        _ => log::warn!("ignoring FUNDUS_THREADS={v}: expected a positive integer"),
    }
}

fn exec(cmd: Command) -> Result<String> {
    Ok(match cmd {
        Command::Synth { out, classes, per_class, size, seed } => {
            let spec = SyntheticSpec {
                n_classes: classes,
                n_per_class: per_class,
                image_size: size,
                seed,
                ..SyntheticSpec::default()
            };
            let m = pipeline::cmd_synth(&spec, &out)?;
            format!("wrote {} images in {} classes to {}", m.records.len(), m.classes.len(), out.display())
        }
        Command::Split { manifest, out, train, val, test, seed } => {
            let out = out.unwrap_or_else(|| manifest.clone());
            let m = pipeline::cmd_split(&manifest, &out, [train, val, test], seed)?;
            format!(
                "train {} / val {} / test {} -> {}",
                m.count(fundus_core::dataio::Split::Train),
                m.count(fundus_core::dataio::Split::Val),
                m.count(fundus_core::dataio::Split::Test),
                out.display()
            )
        }
        Command::TrainSeg(a) => {
            let r = pipeline::cmd_train_seg(&a.load()?)?;
            format!(
                "{} epochs ({:?}); test pixel accuracy {}",
                r.epochs_run,
                r.stop_reason,
                r.pixel_accuracy_test.map_or("n/a".into(), |v| format!("{v:.4}"))
            )
        }
        Command::Segment { model, image, out } => {
            let m = pipeline::cmd_segment(&model, &image, &out)?;
            format!("vessel fraction {:.4} -> {}", m.vessel_fraction(), out.display())
        }
        Command::FitPca { channel, cfg } => {
            let ch = match channel {
                ChannelArg::Rgb => Channel::Rgb,
                ChannelArg::Vessel => Channel::Vessel,
            };
            let m = pipeline::cmd_fit_pca(&cfg.load()?, ch)?;
            format!("{} PCA: k={} d={}", ch.as_str(), m.k(), m.d())
        }
        Command::TrainHybrid(a) => {
            let e = pipeline::cmd_train_hybrid(&a.load()?)?;
            format!("ensemble over {} classes at ratio {}", e.classes().len(), e.ratio)
        }
        Command::Sweep(a) => {
            let rows = pipeline::cmd_sweep(&a.load()?)?;
            fundus_core::hybrid::sweep_csv(&rows).trim_end().to_string()
        }
        Command::Eval { ensemble, split, cfg } => {
            let cfg = cfg.load()?;
            let bundle = ensemble.unwrap_or_else(|| pipeline::model_path(&cfg, pipeline::ENSEMBLE_FILE));
            let r = pipeline::cmd_eval(&cfg, &bundle, parse_split(&split)?)?;
            format!("accuracy {:.4} on {} {split} samples", r.accuracy, r.n_test)
        }
        Command::Run(a) => {
            let cfg = a.load()?;
            let s = pipeline::cmd_run(&cfg)?;
            format!("test accuracy {:.4}; reports in {}", s.eval.accuracy, cfg.paths.report_dir.display())
        }
        Command::DefaultConfig => RunConfig::default().to_toml().trim_end().to_string(),
    })
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    configure_threads();
    match exec(cli.command) {
        Ok(msg) => {
            println!("{msg}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error[{}]: {}", e.code(), one_line(&e));
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn one_line(e: &Error) -> String {
    e.to_string().replace(['\n', '\r'], " ")
}
