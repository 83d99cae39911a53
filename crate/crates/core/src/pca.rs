use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::codec;
use crate::error::{Error, Result};
use crate::linalg::{canonical_sign, dot, sym_eig};

pub const PCA_FORMAT_VERSION: u32 = 1;
/// Default number of retained components.
pub const DEFAULT_COMPONENTS: usize = 62;

/// Relative eigenvalue below which a Gram-route direction is treated as null.
const NULL_TOL: f64 = 1e-11;

#[derive(Clone, Debug, PartialEq)]
pub struct PcaModel {
    pub mean: Vec<f64>,
    /// `k` orthonormal rows of length `d`.
    pub components: Vec<Vec<f64>>,
    /// Descending, clamped at zero.
    pub eigenvalues: Vec<f64>,
    /// Sum of all covariance eigenvalues (its trace).
    pub total_variance: f64,
}

fn validate_samples(samples: &[Vec<f64>]) -> Result<usize> {
    if samples.len() < 2 {
        return Err(Error::Empty(format!("PCA needs at least 2 samples, got {}", samples.len())));
    }
    let d = samples[0].len();
    if d == 0 {
        return Err(Error::Empty("PCA on zero-dimensional samples".into()));
    }
    for s in samples {
        if s.len() != d {
            return Err(Error::Dimension { expected: d, got: s.len() });
        }
        if !s.iter().all(|v| v.is_finite()) {
            return Err(Error::shape("pca_fit", "non-finite sample value"));
        }
    }
    Ok(d)
}

/// Largest `k` a fit on `n` samples of dimension `d` supports.
pub fn max_components(n: usize, d: usize) -> usize {
    n.saturating_sub(1).min(d)
}

/// Appends unit vectors orthogonal to `basis` until it has `k` rows.
fn complete_basis(basis: &mut Vec<Vec<f64>>, k: usize, d: usize) {
    let mut j = 0;
    while basis.len() < k && j < d {
        let mut v = vec![0.0; d];
        v[j] = 1.0;
        j += 1;
        for _ in 0..2 {
            for b in basis.iter() {
                let p = dot(&v, b);
                v.iter_mut().zip(b).for_each(|(x, y)| *x -= p * y);
            }
        }
        let norm = dot(&v, &v).sqrt();
        if norm > 1e-6 {
            v.iter_mut().for_each(|x| *x /= norm);
            canonical_sign(&mut v);
            basis.push(v);
        }
    }
}

impl PcaModel {
    /// Fits on the rows of `samples`, keeping `k` components.
    ///
    /// Rows are put in a canonical order first, so any permutation of the
    /// same samples yields a bit-identical model. The eigenproblem is solved
    /// on the `d×d` covariance or the `n×n` Gram matrix, whichever is smaller.
    pub fn fit(samples: &[Vec<f64>], k: usize) -> Result<Self> {
        let d = validate_samples(samples)?;
        let n = samples.len();
        let limit = max_components(n, d);
        if k == 0 || k > limit {
            return Err(Error::config("k", format!("must be in 1..={limit} for n={n}, d={d}; got {k}")));
        }

        let mut rows: Vec<&Vec<f64>> = samples.iter().collect();
        rows.sort_by(|a, b| {
            a.iter()
                .zip(b.iter())
                .map(|(x, y)| x.total_cmp(y))
                .find(|o| o.is_ne())
                .unwrap_or(std::cmp::Ordering::Equal)
        });

        let mut mean = vec![0.0; d];
        for r in &rows {
            mean.iter_mut().zip(r.iter()).for_each(|(m, v)| *m += v);
        }
        mean.iter_mut().for_each(|m| *m /= n as f64);
        let centred: Vec<Vec<f64>> = rows
            .iter()
            .map(|r| r.iter().zip(&mean).map(|(v, m)| v - m).collect())
            .collect();
        let denom = (n - 1) as f64;

        let (eigenvalues, total_variance, mut components) = if d <= n {
            let mut cov = vec![0.0; d * d];
            for r in &centred {
                for i in 0..d {
                    let ri = r[i];
                    if ri == 0.0 {
                        continue;
                    }
                    let row = &mut cov[i * d..(i + 1) * d];
                    for j in i..d {
                        row[j] += ri * r[j];
                    }
                }
            }
            for i in 0..d {
                for j in i..d {
                    let v = cov[i * d + j] / denom;
                    cov[i * d + j] = v;
                    cov[j * d + i] = v;
                }
            }
            let trace = (0..d).map(|i| cov[i * d + i]).sum::<f64>();
            let eig = sym_eig(&cov, d)?;
            let comps = eig.eigenvectors.into_iter().take(k).collect::<Vec<_>>();
            (eig.eigenvalues, trace, comps)
        } else {
            let mut gram = vec![0.0; n * n];
            for i in 0..n {
                for j in i..n {
                    let v = dot(&centred[i], &centred[j]) / denom;
                    gram[i * n + j] = v;
                    gram[j * n + i] = v;
                }
            }
            let trace = (0..n).map(|i| gram[i * n + i]).sum::<f64>();
            let eig = sym_eig(&gram, n)?;
            let top = eig.eigenvalues.first().copied().unwrap_or(0.0).max(0.0);
            let mut comps: Vec<Vec<f64>> = Vec::with_capacity(k);
            for (lambda, u) in eig.eigenvalues.iter().zip(&eig.eigenvectors).take(k) {
                if *lambda <= NULL_TOL * top || *lambda <= 0.0 {
                    break;
                }
                let mut v = vec![0.0; d];
                for (ui, r) in u.iter().zip(&centred) {
                    v.iter_mut().zip(r).for_each(|(a, b)| *a += ui * b);
                }
                // re-orthogonalise against earlier directions to hold 1e-10
                for b in &comps {
                    let p = dot(&v, b);
                    v.iter_mut().zip(b).for_each(|(x, y)| *x -= p * y);
                }
                let norm = dot(&v, &v).sqrt();
                v.iter_mut().for_each(|x| *x /= norm);
                canonical_sign(&mut v);
                comps.push(v);
            }
            (eig.eigenvalues, trace, comps)
        };
        if components.len() < k {
            complete_basis(&mut components, k, d);
        }
        let eigenvalues = eigenvalues
            .iter()
            .take(k)
            .map(|&l| if l < 0.0 { 0.0 } else { l })
            .collect();
        let total_variance = total_variance.max(0.0);
        Ok(PcaModel { mean, components, eigenvalues, total_variance })
    }

    pub fn k(&self) -> usize {
        self.components.len()
    }

    pub fn d(&self) -> usize {
        self.mean.len()
    }

    pub fn project(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.d() {
            return Err(Error::Dimension { expected: self.d(), got: x.len() });
        }
        let centred: Vec<f64> = x.iter().zip(&self.mean).map(|(a, m)| a - m).collect();
        Ok(self.components.iter().map(|c| dot(c, &centred)).collect())
    }

    pub fn project_all(&self, xs: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
        xs.iter().map(|x| self.project(x)).collect()
    }

    pub fn reconstruct(&self, z: &[f64]) -> Result<Vec<f64>> {
        if z.len() != self.k() {
            return Err(Error::Dimension { expected: self.k(), got: z.len() });
        }
        let mut out = self.mean.clone();
        for (zi, c) in z.iter().zip(&self.components) {
            out.iter_mut().zip(c).for_each(|(o, v)| *o += zi * v);
        }
        Ok(out)
    }

    /// Retained eigenvalues as fractions of the total variance.
    pub fn explained_variance(&self) -> Vec<f64> {
        if self.total_variance <= 0.0 {
            return vec![0.0; self.k()];
        }
        self.eigenvalues.iter().map(|l| l / self.total_variance).collect()
    }

    pub fn to_json(&self) -> Result<String> {
        let file = PcaFile {
            format_version: PCA_FORMAT_VERSION,
            k: self.k(),
            d: self.d(),
            mean: self.mean.clone(),
            components: self.components.concat(),
            eigenvalues: self.eigenvalues.clone(),
            total_variance: self.total_variance,
        };
        Ok(serde_json::to_string_pretty(&file)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: PcaFile = serde_json::from_str(text)?;
        if file.format_version != PCA_FORMAT_VERSION {
            return Err(Error::FormatVersion { found: file.format_version, expected: PCA_FORMAT_VERSION });
        }
        if file.mean.len() != file.d || file.components.len() != file.k * file.d || file.eigenvalues.len() != file.k {
            return Err(Error::Decode("PCA model arrays disagree with k and d".into()));
        }
        Ok(PcaModel {
            mean: file.mean,
            components: if file.d == 0 { Vec::new() } else { file.components.chunks(file.d).map(<[f64]>::to_vec).collect() },
            eigenvalues: file.eigenvalues,
            total_variance: file.total_variance,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        codec::write_text(path, &self.to_json()?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&codec::read_text(path)?)
    }
}

#[derive(Serialize, Deserialize)]
struct PcaFile {
    format_version: u32,
    k: usize,
    d: usize,
    #[serde(with = "codec::b64")]
    mean: Vec<f64>,
    #[serde(with = "codec::b64")]
    components: Vec<f64>,
    eigenvalues: Vec<f64>,
    total_variance: f64,
}
