use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::kernel::KernelSpec;
use super::smo::{smo_train, BinarySvm, SmoOptions};
use crate::codec;
use crate::error::{Error, Result};
use crate::seeds::mix_seed;

pub const SVM_FORMAT_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SvmParams {
    #[serde(rename = "C")]
    pub c: f64,
    pub kernel: KernelSpec,
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for SvmParams {
    fn default() -> Self {
        SvmParams { c: 128.0, kernel: KernelSpec::default(), tol: 1e-3, max_iter: 1_000_000 }
    }
}

/// One-vs-one machine: positive side is class `a`, negative side class `b`.
#[derive(Clone, Debug, PartialEq)]
pub struct PairMachine {
    pub a: usize,
    pub b: usize,
    pub svm: BinarySvm,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MultiClassSvm {
    pub classes: Vec<String>,
    pub dim: usize,
    /// Pairs `(a, b)` with `a < b` in lexicographic order.
    pub machines: Vec<PairMachine>,
    /// Pairs skipped because one side had no training samples.
    pub omitted: Vec<(usize, usize)>,
}

/// Trains one binary SVM per class pair on that pair's samples.
///
/// `labels[i]` indexes `classes`. Pair `(a, b)` uses the seed
/// `mix_seed(seed, [a, b])`, so the result is independent of scheduling.
pub fn train_multiclass(
    x: &[Vec<f64>],
    labels: &[usize],
    classes: &[String],
    params: &SvmParams,
    seed: u64,
) -> Result<MultiClassSvm> {
    if x.len() != labels.len() {
        return Err(Error::Dimension { expected: x.len(), got: labels.len() });
    }
    if x.is_empty() {
        return Err(Error::Empty("multiclass SVM training set".into()));
    }
    if classes.len() < 2 {
        return Err(Error::config("classes", "at least 2 classes required"));
    }
    if let Some(&bad) = labels.iter().find(|&&l| l >= classes.len()) {
        return Err(Error::UnknownLabel { label: bad.to_string() });
    }
    let dim = x[0].len();
    if let Some(bad) = x.iter().find(|r| r.len() != dim) {
        return Err(Error::Dimension { expected: dim, got: bad.len() });
    }
    params.kernel.validate()?;
    let k = classes.len();
    let mut members = vec![Vec::new(); k];
    for (i, &l) in labels.iter().enumerate() {
        members[l].push(i);
    }
    if members.iter().filter(|m| !m.is_empty()).count() < 2 {
        return Err(Error::SingleClass);
    }

    let pairs: Vec<(usize, usize)> = (0..k).flat_map(|a| (a + 1..k).map(move |b| (a, b))).collect();
    let trained: Vec<Option<PairMachine>> = pairs
        .par_iter()
        .map(|&(a, b)| {
            if members[a].is_empty() || members[b].is_empty() {
                return Ok(None);
            }
            let mut idx: Vec<usize> = members[a].iter().chain(&members[b]).copied().collect();
            idx.sort_unstable();
            let px: Vec<Vec<f64>> = idx.iter().map(|&i| x[i].clone()).collect();
            let py: Vec<i8> = idx.iter().map(|&i| if labels[i] == a { 1 } else { -1 }).collect();
            let opts = SmoOptions {
                c: params.c,
                tol: params.tol,
                max_iter: params.max_iter,
                seed: mix_seed(seed, &[a as u64, b as u64]),
            };
            let svm = smo_train(&px, &py, &params.kernel, &opts)?;
            Ok(Some(PairMachine { a, b, svm }))
        })
        .collect::<Result<_>>()?;

    let mut machines = Vec::new();
    let mut omitted = Vec::new();
    for (pair, m) in pairs.into_iter().zip(trained) {
        match m {
            Some(m) => machines.push(m),
            None => {
                log::warn!("class pair ({}, {}) has an empty side; machine omitted", classes[pair.0], classes[pair.1]);
                omitted.push(pair);
            }
        }
    }
    Ok(MultiClassSvm { classes: classes.to_vec(), dim, machines, omitted })
}

impl MultiClassSvm {
    pub fn n_classes(&self) -> usize {
        self.classes.len()
    }

    /// Total pair count `K(K−1)/2`, including omitted machines.
    pub fn pair_count(&self) -> usize {
        let k = self.n_classes();
        k * (k - 1) / 2
    }

    /// Per-class vote counts: each machine votes for `a` when `f > 0`, else `b`.
    pub fn votes(&self, x: &[f64]) -> Result<Vec<usize>> {
        if x.len() != self.dim {
            return Err(Error::Dimension { expected: self.dim, got: x.len() });
        }
        let mut votes = vec![0usize; self.n_classes()];
        for m in &self.machines {
            if m.svm.decision_unchecked(x) > 0.0 {
                votes[m.a] += 1;
            } else {
                votes[m.b] += 1;
            }
        }
        Ok(votes)
    }

    pub fn predict(&self, x: &[f64]) -> Result<(usize, Vec<usize>)> {
        let votes = self.votes(x)?;
        Ok((argmax_first(&votes), votes))
    }

    pub fn to_json(&self) -> Result<String> {
        let file = SvmFile {
            format_version: SVM_FORMAT_VERSION,
            classes: self.classes.clone(),
            dim: self.dim,
            machines: self
                .machines
                .iter()
                .map(|m| MachineFile {
                    a: m.a,
                    b: m.b,
                    kernel: m.svm.kernel,
                    c: m.svm.c,
                    support_vectors: m.svm.support_vectors.concat(),
                    dual_coefs: m.svm.dual_coefs.clone(),
                    bias: m.svm.bias,
                    converged: m.svm.converged,
                })
                .collect(),
            omitted: self.omitted.clone(),
        };
        Ok(serde_json::to_string_pretty(&file)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: SvmFile = serde_json::from_str(text)?;
        if file.format_version != SVM_FORMAT_VERSION {
            return Err(Error::FormatVersion { found: file.format_version, expected: SVM_FORMAT_VERSION });
        }
        let k = file.classes.len();
        let mut machines = Vec::with_capacity(file.machines.len());
        for m in file.machines {
            if m.a >= m.b || m.b >= k {
                return Err(Error::Decode(format!("machine pair ({}, {}) invalid for {k} classes", m.a, m.b)));
            }
            let n_sv = m.dual_coefs.len();
            if m.support_vectors.len() != n_sv * file.dim {
                return Err(Error::Decode("support vector payload does not match dual coefficients".into()));
            }
            let support_vectors = if file.dim == 0 {
                vec![Vec::new(); n_sv]
            } else {
                m.support_vectors.chunks(file.dim).map(<[f64]>::to_vec).collect()
            };
            machines.push(PairMachine {
                a: m.a,
                b: m.b,
                svm: BinarySvm {
                    support_vectors,
                    dual_coefs: m.dual_coefs,
                    bias: m.bias,
                    c: m.c,
                    kernel: m.kernel,
                    converged: m.converged,
                },
            });
        }
        Ok(MultiClassSvm { classes: file.classes, dim: file.dim, machines, omitted: file.omitted })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        codec::write_text(path, &self.to_json()?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&codec::read_text(path)?)
    }
}

pub fn predict_multiclass(model: &MultiClassSvm, x: &[f64]) -> Result<(usize, Vec<usize>)> {
    model.predict(x)
}

/// Index of the largest value, lowest index on ties.
pub fn argmax_first<T: PartialOrd + Copy>(values: &[T]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate() {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

#[derive(Serialize, Deserialize)]
struct SvmFile {
    format_version: u32,
    classes: Vec<String>,
    dim: usize,
    machines: Vec<MachineFile>,
    omitted: Vec<(usize, usize)>,
}

#[derive(Serialize, Deserialize)]
struct MachineFile {
    a: usize,
    b: usize,
    kernel: KernelSpec,
    #[serde(rename = "C")]
    c: f64,
    #[serde(with = "codec::b64")]
    support_vectors: Vec<f64>,
    dual_coefs: Vec<f64>,
    bias: f64,
    converged: bool,
}
