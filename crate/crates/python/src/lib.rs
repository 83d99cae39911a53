//! Python bindings for the fundus classifier.

use std::path::PathBuf;

use fundus_core::config::RunConfig;
use fundus_core::dataio::{self, SyntheticSpec};
use fundus_core::hybrid::{self, HybridEnsemble};
use fundus_core::pca::PcaModel;
use fundus_core::pipeline;
use fundus_core::segnet::{build_segnet, SegNet, SegNetConfig, SkipMode};
use fundus_core::svm::{self, KernelKind, KernelSpec, MultiClassSvm, SmoOptions, SvmParams};
use fundus_core::{Error, Tensor};
use pyo3::exceptions::{PyIOError, PyValueError};
use pyo3::prelude::*;

fn py_err(e: Error) -> PyErr {
    let msg = format!("[{}] {e}", e.code());
    match e {
        Error::Io { .. } | Error::MissingFile(_) => PyIOError::new_err(msg),
        _ => PyValueError::new_err(msg),
    }
}

trait IntoPy<T> {
    fn py(self) -> PyResult<T>;
}

impl<T> IntoPy<T> for fundus_core::Result<T> {
    fn py(self) -> PyResult<T> {
        self.map_err(py_err)
    }
}

/// `H×W×C` nested lists to a tensor.
fn to_tensor(image: Vec<Vec<Vec<f64>>>) -> PyResult<Tensor> {
    let h = image.len();
    let w = image.first().map_or(0, Vec::len);
    let c = image.first().and_then(|r| r.first()).map_or(0, Vec::len);
    let mut data = Vec::with_capacity(h * w * c);
    for row in &image {
        if row.len() != w {
            return Err(PyValueError::new_err("ragged image rows"));
        }
        for px in row {
            if px.len() != c {
                return Err(PyValueError::new_err("ragged image channels"));
            }
            data.extend_from_slice(px);
        }
    }
    Tensor::new(vec![h, w, c], data).py()
}

fn kernel_spec(kernel: &str, gamma: f64, degree: u32, coef0: f64) -> PyResult<KernelSpec> {
    match kernel {
        "rbf" => Ok(KernelSpec::rbf(gamma)),
        "poly" | "polynomial" => Ok(KernelSpec::polynomial(gamma, degree, coef0)),
        other => Err(PyValueError::new_err(format!("unknown kernel `{other}`; expected rbf or poly"))),
    }
}

#[pyclass(name = "PcaModel", module = "fundus", skip_from_py_object)]
#[derive(Clone)]
struct PyPca {
    inner: PcaModel,
}

#[pymethods]
impl PyPca {
    #[staticmethod]
    fn fit(samples: Vec<Vec<f64>>, k: usize) -> PyResult<Self> {
        Ok(PyPca { inner: PcaModel::fit(&samples, k).py()? })
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Ok(PyPca { inner: PcaModel::load(&path).py()? })
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        self.inner.save(&path).py()
    }

    fn project(&self, x: Vec<f64>) -> PyResult<Vec<f64>> {
        self.inner.project(&x).py()
    }

    fn reconstruct(&self, z: Vec<f64>) -> PyResult<Vec<f64>> {
        self.inner.reconstruct(&z).py()
    }

    fn explained_variance(&self) -> Vec<f64> {
        self.inner.explained_variance()
    }

    #[getter]
    fn mean(&self) -> Vec<f64> {
        self.inner.mean.clone()
    }

    #[getter]
    fn components(&self) -> Vec<Vec<f64>> {
        self.inner.components.clone()
    }

    #[getter]
    fn eigenvalues(&self) -> Vec<f64> {
        self.inner.eigenvalues.clone()
    }

    #[getter]
    fn k(&self) -> usize {
        self.inner.k()
    }
}

#[pyclass(name = "MultiClassSvm", module = "fundus", skip_from_py_object)]
#[derive(Clone)]
struct PySvm {
    inner: MultiClassSvm,
}

#[pymethods]
impl PySvm {
    /// One-vs-one training; `labels` index into `classes`.
    #[staticmethod]
    #[pyo3(signature = (x, labels, classes, c=128.0, kernel="rbf", gamma=svm::DEFAULT_GAMMA, degree=svm::DEFAULT_DEGREE, coef0=0.0, tol=1e-3, seed=0))]
    #[allow(clippy::too_many_arguments)]
    fn train(
        x: Vec<Vec<f64>>,
        labels: Vec<usize>,
        classes: Vec<String>,
        c: f64,
        kernel: &str,
        gamma: f64,
        degree: u32,
        coef0: f64,
        tol: f64,
        seed: u64,
    ) -> PyResult<Self> {
        let params = SvmParams { c, kernel: kernel_spec(kernel, gamma, degree, coef0)?, tol, ..SvmParams::default() };
        Ok(PySvm { inner: svm::train_multiclass(&x, &labels, &classes, &params, seed).py()? })
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Ok(PySvm { inner: MultiClassSvm::load(&path).py()? })
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        self.inner.save(&path).py()
    }

    /// `(class index, vote counts)`.
    fn predict(&self, x: Vec<f64>) -> PyResult<(usize, Vec<usize>)> {
        self.inner.predict(&x).py()
    }

    fn votes(&self, x: Vec<f64>) -> PyResult<Vec<usize>> {
        self.inner.votes(&x).py()
    }

    #[getter]
    fn classes(&self) -> Vec<String> {
        self.inner.classes.clone()
    }
}

#[pyclass(name = "SegNet", module = "fundus", skip_from_py_object)]
#[derive(Clone)]
struct PySegNet {
    inner: SegNet,
}

#[pymethods]
impl PySegNet {
    #[new]
    #[pyo3(signature = (input_size=64, levels=3, base_channels=8, seed=0))]
    fn new(input_size: usize, levels: usize, base_channels: usize, seed: u64) -> PyResult<Self> {
        let cfg = SegNetConfig { input_size, levels, base_channels, skip_mode: SkipMode::Halved, classes: 2, seed };
        Ok(PySegNet { inner: build_segnet(&cfg).py()? })
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Ok(PySegNet { inner: SegNet::load(&path).py()? })
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        self.inner.save(&path).py()
    }

    /// Binary vessel mask of an `H×W×3` image as rows of 0/1.
    fn segment(&self, image: Vec<Vec<Vec<f64>>>) -> PyResult<Vec<Vec<u8>>> {
        let m = self.inner.segment(&to_tensor(image)?).py()?;
        Ok(m.labels.chunks(m.width).map(<[u8]>::to_vec).collect())
    }

    fn parameter_count(&self) -> usize {
        self.inner.parameter_count()
    }
}

#[pyclass(name = "HybridEnsemble", module = "fundus")]
struct PyEnsemble {
    inner: HybridEnsemble,
}

#[pymethods]
impl PyEnsemble {
    #[staticmethod]
    fn load(bundle: PathBuf) -> PyResult<Self> {
        Ok(PyEnsemble { inner: HybridEnsemble::load_bundle(&bundle).py()? })
    }

    /// `(class index, fused scores)` at the ensemble's ratio.
    fn predict(&self, image: Vec<Vec<Vec<f64>>>) -> PyResult<(usize, Vec<f64>)> {
        self.inner.predict(&to_tensor(image)?).py()
    }

    /// `(rgb votes, vessel votes)`.
    fn channel_votes(&self, image: Vec<Vec<Vec<f64>>>) -> PyResult<(Vec<usize>, Vec<usize>)> {
        let v = self.inner.channel_votes(&to_tensor(image)?).py()?;
        Ok((v.rgb, v.vessel))
    }

    #[getter]
    fn classes(&self) -> Vec<String> {
        self.inner.classes().to_vec()
    }

    #[getter]
    fn ratio(&self) -> f64 {
        self.inner.ratio
    }
}

/// Binary SMO solve: returns `(alpha, bias, converged)`.
#[pyfunction]
#[pyo3(signature = (x, y, c=128.0, kernel="rbf", gamma=svm::DEFAULT_GAMMA, degree=svm::DEFAULT_DEGREE, coef0=0.0, tol=1e-3, seed=0))]
#[allow(clippy::too_many_arguments)]
fn smo_solve(
    x: Vec<Vec<f64>>,
    y: Vec<i8>,
    c: f64,
    kernel: &str,
    gamma: f64,
    degree: u32,
    coef0: f64,
    tol: f64,
    seed: u64,
) -> PyResult<(Vec<f64>, f64, bool)> {
    let spec = kernel_spec(kernel, gamma, degree, coef0)?;
    let sol = svm::solve_dual(&x, &y, &spec, &SmoOptions { c, tol, seed, ..SmoOptions::default() }).py()?;
    Ok((sol.alpha, sol.bias, sol.converged))
}

#[pyfunction]
fn fuse(votes_rgb: Vec<usize>, votes_vessel: Vec<usize>, ratio: f64) -> Vec<f64> {
    hybrid::fuse(&votes_rgb, &votes_vessel, ratio)
}

/// Loads a PNG as `H×W×3` nested lists in [0, 1], resized to `size`.
#[pyfunction]
#[pyo3(signature = (path, size=64))]
fn load_image(path: PathBuf, size: usize) -> PyResult<Vec<Vec<Vec<f64>>>> {
    let t = dataio::load_image(&path, size).py()?;
    let (h, w, c) = t.dims3().py()?;
    let d = t.data();
    Ok((0..h).map(|y| (0..w).map(|x| d[(y * w + x) * c..][..c].to_vec()).collect()).collect())
}

/// Writes the synthetic corpus and returns the number of images.
#[pyfunction]
#[pyo3(signature = (out_dir, n_classes=8, n_per_class=50, image_size=64, seed=0))]
fn synth_generate(out_dir: PathBuf, n_classes: usize, n_per_class: usize, image_size: usize, seed: u64) -> PyResult<usize> {
    let spec = SyntheticSpec { n_classes, n_per_class, image_size, seed, ..SyntheticSpec::default() };
    Ok(pipeline::cmd_synth(&spec, &out_dir).py()?.records.len())
}

#[pyfunction]
#[pyo3(signature = (manifest, out, fractions=(0.7, 0.1, 0.2), seed=0))]
fn split_manifest(manifest: PathBuf, out: PathBuf, fractions: (f64, f64, f64), seed: u64) -> PyResult<()> {
    pipeline::cmd_split(&manifest, &out, [fractions.0, fractions.1, fractions.2], seed).py()?;
    Ok(())
}

/// Runs every stage from a TOML config; returns the summary as JSON text.
#[pyfunction]
fn run_pipeline(config: PathBuf) -> PyResult<String> {
    let cfg = RunConfig::load(&config).py()?;
    cfg.validate().py()?;
    let summary = pipeline::cmd_run(&cfg).py()?;
    serde_json::to_string(&summary).map_err(|e| py_err(e.into()))
}

#[pyfunction]
fn kernel_names() -> Vec<&'static str> {
    [KernelKind::Rbf, KernelKind::Polynomial].iter().map(|k| k.as_str()).collect()
}

#[pymodule]
fn fundus(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyPca>()?;
    m.add_class::<PySvm>()?;
    m.add_class::<PySegNet>()?;
    m.add_class::<PyEnsemble>()?;
    m.add_function(wrap_pyfunction!(smo_solve, m)?)?;
    m.add_function(wrap_pyfunction!(fuse, m)?)?;
    m.add_function(wrap_pyfunction!(load_image, m)?)?;
    m.add_function(wrap_pyfunction!(synth_generate, m)?)?;
    m.add_function(wrap_pyfunction!(split_manifest, m)?)?;
    m.add_function(wrap_pyfunction!(run_pipeline, m)?)?;
    m.add_function(wrap_pyfunction!(kernel_names, m)?)?;
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    Ok(())
}
