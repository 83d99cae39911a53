//! Synthetic fundus-like corpus: a dark circular field, class-specific vessel
//! trees drawn as cubic Bézier strokes, and bright lesion blobs.
//!
//! Vessels are drawn as an isoluminant chroma shift, so they are invisible in
//! the grayscale feature but visible to the segmentation network. With
//! `paired_confounds` on, the lesion pattern only identifies the class pair
//! `{2g, 2g+1}` while the vessel template only identifies the shifted pair
//! `{2t-1, 2t}`, so each channel alone is ambiguous and the two combined are
//! not.

use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::image::{save_image, save_mask, LUMA};
use super::manifest::{DatasetManifest, Record, Split};
use crate::error::{Error, Result};
use crate::segnet::SegMask;
use crate::seeds::mix_seed;
use crate::tensor::Tensor;

/// Direction in RGB space with zero luminance.
const CHROMA_AXIS: [f64; 3] = [-LUMA[1], LUMA[0], 0.0];
const FIELD_COLOR: [f64; 3] = [0.55, 0.30, 0.15];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticSpec {
    pub n_classes: usize,
    pub n_per_class: usize,
    pub image_size: usize,
    /// Inclusive range of strokes per vessel template.
    pub vessel_count_range: (usize, usize),
    /// Bézier control-point offset as a fraction of stroke length.
    pub curvature_range: (f64, f64),
    /// Stroke width in pixels.
    pub vessel_width: f64,
    /// Strength of the chroma shift that draws vessels.
    pub vessel_chroma: f64,
    /// Extra luminance drop on vessel pixels; 0 keeps vessels isoluminant.
    pub vessel_luma_contrast: f64,
    pub lesion_intensity: f64,
    /// Lesion radius as a fraction of the image side.
    pub lesion_radius: f64,
    /// Per-image control-point jitter in pixels.
    pub jitter: f64,
    pub noise_std: f64,
    pub paired_confounds: bool,
    /// Declared bounds on the vessel-pixel fraction of every mask.
    pub vessel_fraction_range: (f64, f64),
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        SyntheticSpec {
            n_classes: 8,
            n_per_class: 50,
            image_size: 64,
            vessel_count_range: (4, 6),
            curvature_range: (0.1, 0.35),
            vessel_width: 2.0,
            vessel_chroma: 0.25,
            vessel_luma_contrast: 0.0,
            lesion_intensity: 0.35,
            lesion_radius: 0.11,
            jitter: 1.5,
            noise_std: 0.01,
            paired_confounds: true,
            vessel_fraction_range: (0.02, 0.35),
            seed: 0,
        }
    }
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n_classes < 2 {
            return Err(Error::config("n_classes", "at least 2 classes required"));
        }
        if self.n_classes > 32 {
            return Err(Error::config("n_classes", "at most 32 classes supported"));
        }
        if self.image_size < 16 {
            return Err(Error::config("image_size", "must be at least 16"));
        }
        let (lo, hi) = self.vessel_count_range;
        if lo == 0 || lo > hi {
            return Err(Error::config("vessel_count_range", "need 1 ≤ min ≤ max"));
        }
        let (clo, chi) = self.curvature_range;
        if !(clo >= 0.0 && clo <= chi && chi.is_finite()) {
            return Err(Error::config("curvature_range", "need 0 ≤ min ≤ max"));
        }
        let (flo, fhi) = self.vessel_fraction_range;
        if !(0.0..=1.0).contains(&flo) || !(flo..=1.0).contains(&fhi) {
            return Err(Error::config("vessel_fraction_range", "need 0 ≤ min ≤ max ≤ 1"));
        }
        for (name, v) in [
            ("vessel_width", self.vessel_width),
            ("lesion_radius", self.lesion_radius),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::config(name, "must be positive"));
            }
        }
        for (name, v) in [
            ("vessel_chroma", self.vessel_chroma),
            ("vessel_luma_contrast", self.vessel_luma_contrast),
            ("lesion_intensity", self.lesion_intensity),
            ("jitter", self.jitter),
            ("noise_std", self.noise_std),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::config(name, "must be non-negative"));
            }
        }
        Ok(())
    }

    fn template_count(&self) -> usize {
        if self.paired_confounds {
            self.n_classes.div_ceil(2).max(2)
        } else {
            self.n_classes
        }
    }

    fn group_count(&self) -> usize {
        if self.paired_confounds {
            self.n_classes.div_ceil(2)
        } else {
            self.n_classes
        }
    }

    pub fn vessel_template(&self, class: usize) -> usize {
        if self.paired_confounds {
            class.div_ceil(2) % self.template_count()
        } else {
            class
        }
    }

    pub fn lesion_group(&self, class: usize) -> usize {
        if self.paired_confounds {
            class / 2
        } else {
            class
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticCorpus {
    pub class_names: Vec<String>,
    pub images: Vec<Tensor>,
    pub masks: Vec<SegMask>,
    pub labels: Vec<usize>,
}

impl SyntheticCorpus {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

pub fn class_name(index: usize) -> String {
    format!("class_{index:02}")
}

type Point = (f64, f64);

#[derive(Clone, Debug)]
struct Stroke {
    ctrl: [Point; 4],
}

impl Stroke {
    fn at(&self, t: f64) -> Point {
        let s = 1.0 - t;
        let w = [s * s * s, 3.0 * s * s * t, 3.0 * s * t * t, t * t * t];
        let mut p = (0.0, 0.0);
        for (wi, c) in w.iter().zip(&self.ctrl) {
            p.0 += wi * c.0;
            p.1 += wi * c.1;
        }
        p
    }
}

fn field_radius(size: usize) -> f64 {
    0.46 * size as f64
}

fn centre(size: usize) -> Point {
    let c = size as f64 / 2.0;
    (c, c)
}

fn in_field(size: usize, y: f64, x: f64) -> bool {
    let (cy, cx) = centre(size);
    (y - cy).powi(2) + (x - cx).powi(2) <= field_radius(size).powi(2)
}

fn random_in_field<R: Rng>(size: usize, frac: f64, rng: &mut R) -> Point {
    let (cy, cx) = centre(size);
    let r = field_radius(size) * frac * rng.random::<f64>().sqrt();
    let a = rng.random::<f64>() * 2.0 * PI;
    (cy + r * a.sin(), cx + r * a.cos())
}

/// Strokes shared by every image using template `t`.
fn vessel_template(spec: &SyntheticSpec, t: usize) -> Vec<Stroke> {
    let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(spec.seed, &[1, t as u64]));
    let n = spec.image_size;
    let count = rng.random_range(spec.vessel_count_range.0..=spec.vessel_count_range.1);
    (0..count)
        .map(|_| {
            let p0 = random_in_field(n, 0.9, &mut rng);
            // farthest of a few candidates keeps strokes long
            let p3 = (0..8)
                .map(|_| random_in_field(n, 0.9, &mut rng))
                .max_by(|a, b| {
                    let da = (a.0 - p0.0).powi(2) + (a.1 - p0.1).powi(2);
                    let db = (b.0 - p0.0).powi(2) + (b.1 - p0.1).powi(2);
                    da.total_cmp(&db)
                })
                .expect("non-empty candidates");
            let (dy, dx) = (p3.0 - p0.0, p3.1 - p0.1);
            let (py, px) = (-dx, dy);
            let bend = |rng: &mut ChaCha8Rng| {
                let c = rng.random_range(spec.curvature_range.0..=spec.curvature_range.1);
                if rng.random::<bool>() {
                    c
                } else {
                    -c
                }
            };
            let b1 = bend(&mut rng);
            let b2 = bend(&mut rng);
            let p1 = (p0.0 + dy / 3.0 + b1 * py, p0.1 + dx / 3.0 + b1 * px);
            let p2 = (p0.0 + 2.0 * dy / 3.0 + b2 * py, p0.1 + 2.0 * dx / 3.0 + b2 * px);
            Stroke { ctrl: [p0, p1, p2, p3] }
        })
        .collect()
}

fn lesion_centre(spec: &SyntheticSpec, g: usize) -> Point {
    let (cy, cx) = centre(spec.image_size);
    let a = 2.0 * PI * g as f64 / spec.group_count() as f64;
    let r = 0.5 * field_radius(spec.image_size);
    (cy + r * a.sin(), cx + r * a.cos())
}

fn render_mask<R: Rng>(spec: &SyntheticSpec, strokes: &[Stroke], rng: &mut R) -> SegMask {
    let n = spec.image_size;
    let mut mask = SegMask::empty(n, n);
    let jitter = Normal::new(0.0, spec.jitter.max(1e-12)).expect("finite std");
    let radius = spec.vessel_width / 2.0;
    for s in strokes {
        let mut ctrl = s.ctrl;
        if spec.jitter > 0.0 {
            for c in &mut ctrl {
                c.0 += jitter.sample(rng);
                c.1 += jitter.sample(rng);
            }
        }
        let stroke = Stroke { ctrl };
        let steps = 8 * n;
        for i in 0..=steps {
            let (py, px) = stroke.at(i as f64 / steps as f64);
            let y0 = (py - radius).floor().max(0.0) as usize;
            let x0 = (px - radius).floor().max(0.0) as usize;
            let y1 = ((py + radius).ceil().max(0.0) as usize).min(n - 1);
            let x1 = ((px + radius).ceil().max(0.0) as usize).min(n - 1);
            for y in y0..=y1 {
                for x in x0..=x1 {
                    let (fy, fx) = (y as f64 + 0.5, x as f64 + 0.5);
                    if (fy - py).powi(2) + (fx - px).powi(2) <= radius * radius && in_field(n, fy, fx) {
                        mask.labels[y * n + x] = 1;
                    }
                }
            }
        }
    }
    mask
}

fn render_image<R: Rng>(spec: &SyntheticSpec, class: usize, mask: &SegMask, rng: &mut R) -> Tensor {
    let n = spec.image_size;
    let noise = Normal::new(0.0, spec.noise_std.max(1e-12)).expect("finite std");
    let lc = lesion_centre(spec, spec.lesion_group(class));
    let lc = (lc.0 + rng.random_range(-1.5..=1.5), lc.1 + rng.random_range(-1.5..=1.5));
    let lr = spec.lesion_radius * n as f64;
    let brightness = rng.random_range(-0.03..=0.03);
    let mut data = Vec::with_capacity(n * n * 3);
    for y in 0..n {
        for x in 0..n {
            let (fy, fx) = (y as f64 + 0.5, x as f64 + 0.5);
            if !in_field(n, fy, fx) {
                data.extend([0.0; 3]);
                continue;
            }
            let mut px = FIELD_COLOR.map(|c| c + brightness);
            let d2 = (fy - lc.0).powi(2) + (fx - lc.1).powi(2);
            let lesion = spec.lesion_intensity * (-d2 / (2.0 * (lr / 2.0).powi(2))).exp();
            let vessel = mask.labels[y * n + x] == 1;
            for (ch, v) in px.iter_mut().enumerate() {
                *v += lesion;
                if vessel {
                    *v += spec.vessel_chroma * CHROMA_AXIS[ch] - spec.vessel_luma_contrast;
                }
                if spec.noise_std > 0.0 {
                    *v += noise.sample(rng);
                }
                *v = v.clamp(0.0, 1.0);
            }
            data.extend(px);
        }
    }
    Tensor::new(vec![n, n, 3], data).expect("consistent buffer")
}

/// Generates `n_classes × n_per_class` images, masks and labels, ordered by
/// class then index. Identical specs give identical corpora.
pub fn synth_generate(spec: &SyntheticSpec) -> Result<SyntheticCorpus> {
    spec.validate()?;
    let templates: Vec<Vec<Stroke>> = (0..spec.template_count()).map(|t| vessel_template(spec, t)).collect();
    let mut corpus = SyntheticCorpus {
        class_names: (0..spec.n_classes).map(class_name).collect(),
        images: Vec::new(),
        masks: Vec::new(),
        labels: Vec::new(),
    };
    for class in 0..spec.n_classes {
        let strokes = &templates[spec.vessel_template(class)];
        for i in 0..spec.n_per_class {
            let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(spec.seed, &[2, class as u64, i as u64]));
            let mask = render_mask(spec, strokes, &mut rng);
            let image = render_image(spec, class, &mask, &mut rng);
            corpus.images.push(image);
            corpus.masks.push(mask);
            corpus.labels.push(class);
        }
    }
    Ok(corpus)
}

/// Writes `images/*.png`, `masks/*.png` and `manifest.csv` under `dir`.
/// Mask files share the image file name.
pub fn write_corpus(corpus: &SyntheticCorpus, dir: &Path) -> Result<DatasetManifest> {
    let mut records = Vec::with_capacity(corpus.len());
    let mut counters = vec![0usize; corpus.class_names.len()];
    for ((img, mask), &label) in corpus.images.iter().zip(&corpus.masks).zip(&corpus.labels) {
        let name = format!("{}_{:04}.png", corpus.class_names[label], counters[label]);
        counters[label] += 1;
        save_image(&dir.join("images").join(&name), img)?;
        save_mask(&dir.join("masks").join(&name), mask)?;
        records.push(Record {
            image_path: PathBuf::from("images").join(&name),
            label: corpus.class_names[label].clone(),
            split: Split::Unassigned,
        });
    }
    let manifest = DatasetManifest::new(corpus.class_names.clone(), records)?;
    manifest.save(&dir.join("manifest.csv"))?;
    Ok(manifest)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataio::image::grayscale;

    fn small() -> SyntheticSpec {
        SyntheticSpec { n_classes: 4, n_per_class: 3, image_size: 32, seed: 5, ..Default::default() }
    }

    #[test]
    fn zero_per_class_is_empty() {
        let c = synth_generate(&SyntheticSpec { n_per_class: 0, ..small() }).unwrap();
        assert!(c.is_empty());
    }

    #[test]
    fn same_seed_same_corpus() {
        assert_eq!(synth_generate(&small()).unwrap(), synth_generate(&small()).unwrap());
        let other = synth_generate(&SyntheticSpec { seed: 6, ..small() }).unwrap();
        assert_ne!(other, synth_generate(&small()).unwrap());
    }

    #[test]
    fn vessel_fraction_within_declared_range() {
        let spec = SyntheticSpec { n_classes: 8, n_per_class: 5, image_size: 64, ..Default::default() };
        let c = synth_generate(&spec).unwrap();
        let (lo, hi) = spec.vessel_fraction_range;
        for m in &c.masks {
            let f = m.labels.iter().filter(|&&l| l == 1).count() as f64 / m.labels.len() as f64;
            assert!(f >= lo && f <= hi, "fraction {f}");
        }
    }

    #[test]
    fn vessels_are_isoluminant() {
        let spec = SyntheticSpec { noise_std: 0.0, jitter: 0.0, lesion_intensity: 0.0, ..small() };
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let strokes = vessel_template(&spec, 0);
        let mask = render_mask(&spec, &strokes, &mut rng);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let with = render_image(&spec, 0, &mask, &mut rng);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let without = render_image(&spec, 0, &SegMask::empty(32, 32), &mut rng);
        assert!(with.max_abs_diff(&without) > 0.1);
        let (a, b) = (grayscale(&with).unwrap(), grayscale(&without).unwrap());
        assert!(a.iter().zip(&b).all(|(x, y)| (x - y).abs() < 1e-12));
    }

    #[test]
    fn paired_confounds_identify_class_jointly() {
        let spec = SyntheticSpec::default();
        let keys: Vec<(usize, usize)> = (0..8).map(|c| (spec.lesion_group(c), spec.vessel_template(c))).collect();
        for a in 0..8 {
            for b in a + 1..8 {
                assert_ne!(keys[a], keys[b]);
            }
        }
        assert_eq!(spec.lesion_group(0), spec.lesion_group(1));
        assert_eq!(spec.vessel_template(1), spec.vessel_template(2));
        assert_eq!(spec.vessel_template(7), spec.vessel_template(0));
    }

    #[test]
    fn rejects_single_class() {
        assert!(synth_generate(&SyntheticSpec { n_classes: 1, ..small() }).is_err());
    }

    #[test]
    fn writes_corpus_layout() {
        let dir = tempfile::tempdir().unwrap();
        let corpus = synth_generate(&small()).unwrap();
        let m = write_corpus(&corpus, dir.path()).unwrap();
        assert_eq!(m.records.len(), 12);
        assert!(dir.path().join("manifest.csv").exists());
        assert!(dir.path().join("masks/class_03_0002.png").exists());
        let back = crate::dataio::load_manifest(&dir.path().join("manifest.csv"), None).unwrap();
        assert_eq!(back.records.len(), 12);
    }
}
