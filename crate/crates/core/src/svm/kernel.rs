use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{dot, sq_dist};

pub const DEFAULT_GAMMA: f64 = 0.0078;
pub const DEFAULT_DEGREE: u32 = 3;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KernelKind {
    Rbf,
    #[serde(alias = "poly")]
    Polynomial,
}

impl KernelKind {
    pub fn as_str(self) -> &'static str {
        match self {
            KernelKind::Rbf => "rbf",
            KernelKind::Polynomial => "poly",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct KernelSpec {
    pub kind: KernelKind,
    pub gamma: f64,
    /// Polynomial only.
    pub degree: u32,
    /// Polynomial only.
    pub coef0: f64,
}

impl Default for KernelSpec {
    fn default() -> Self {
        KernelSpec::rbf(DEFAULT_GAMMA)
    }
}

impl KernelSpec {
    pub fn rbf(gamma: f64) -> Self {
        KernelSpec { kind: KernelKind::Rbf, gamma, degree: DEFAULT_DEGREE, coef0: 0.0 }
    }

    pub fn polynomial(gamma: f64, degree: u32, coef0: f64) -> Self {
        KernelSpec { kind: KernelKind::Polynomial, gamma, degree, coef0 }
    }

    /// Plain dot product: polynomial of degree 1, γ = 1, coef0 = 0.
    pub fn linear() -> Self {
        KernelSpec::polynomial(1.0, 1, 0.0)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.gamma > 0.0 && self.gamma.is_finite()) {
            return Err(Error::config("gamma", format!("must be positive, got {}", self.gamma)));
        }
        if self.kind == KernelKind::Polynomial {
            if self.degree == 0 {
                return Err(Error::config("degree", "must be at least 1"));
            }
            if !self.coef0.is_finite() {
                return Err(Error::config("coef0", "must be finite"));
            }
        }
        Ok(())
    }

    pub fn eval(&self, x: &[f64], y: &[f64]) -> Result<f64> {
        if x.len() != y.len() {
            return Err(Error::Dimension { expected: x.len(), got: y.len() });
        }
        Ok(self.eval_unchecked(x, y))
    }

    #[inline]
    pub(crate) fn eval_unchecked(&self, x: &[f64], y: &[f64]) -> f64 {
        match self.kind {
            KernelKind::Rbf => (-self.gamma * sq_dist(x, y)).exp(),
            KernelKind::Polynomial => (self.gamma * dot(x, y) + self.coef0).powi(self.degree as i32),
        }
    }

    /// Row-major `n×n` Gram matrix.
    pub fn gram(&self, xs: &[Vec<f64>]) -> Vec<f64> {
        let n = xs.len();
        let mut g = vec![0.0; n * n];
        for i in 0..n {
            for j in i..n {
                let v = self.eval_unchecked(&xs[i], &xs[j]);
                g[i * n + j] = v;
                g[j * n + i] = v;
            }
        }
        g
    }
}

pub fn kernel_eval(spec: &KernelSpec, x: &[f64], y: &[f64]) -> Result<f64> {
    spec.eval(x, y)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::sym_eig;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn rbf_self_similarity_is_one() {
        let x = [0.3, -1.2, 4.0];
        assert_eq!(kernel_eval(&KernelSpec::rbf(0.5), &x, &x).unwrap(), 1.0);
    }

    #[test]
    fn rbf_at_default_gamma() {
        let v = kernel_eval(&KernelSpec::default(), &[10.0, 0.0], &[0.0, 0.0]).unwrap();
        assert!((v - (-0.78f64).exp()).abs() < 1e-15);
        assert!((v - 0.4584).abs() < 5e-5);
    }

    #[test]
    fn linear_is_dot_product() {
        let v = kernel_eval(&KernelSpec::linear(), &[1.0, 2.0, 3.0], &[4.0, -5.0, 6.0]).unwrap();
        assert_eq!(v, 12.0);
    }

    #[test]
    fn polynomial_by_hand() {
        let v = kernel_eval(&KernelSpec::polynomial(0.5, 3, 1.0), &[1.0, 2.0], &[2.0, 1.0]).unwrap();
        assert!((v - 27.0).abs() < 1e-12);
    }

    #[test]
    fn symmetric_and_dimension_checked() {
        let k = KernelSpec::polynomial(0.3, 2, 0.7);
        let (a, b) = ([0.1, 0.9], [-2.0, 0.4]);
        assert_eq!(k.eval(&a, &b).unwrap(), k.eval(&b, &a).unwrap());
        assert!(matches!(k.eval(&a, &[1.0]), Err(Error::Dimension { .. })));
    }

    #[test]
    fn validation() {
        assert!(KernelSpec::rbf(0.0).validate().is_err());
        assert!(KernelSpec::polynomial(1.0, 0, 0.0).validate().is_err());
        assert!(KernelSpec::default().validate().is_ok());
    }

    #[test]
    fn rbf_gram_is_psd() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..20 {
            let xs: Vec<Vec<f64>> = (0..12).map(|_| (0..3).map(|_| rng.random_range(-2.0..2.0)).collect()).collect();
            let g = KernelSpec::rbf(rng.random_range(0.1..3.0)).gram(&xs);
            let eig = sym_eig(&g, 12).unwrap();
            assert!(*eig.eigenvalues.last().unwrap() >= -1e-8);
        }
    }

    #[test]
    fn rbf_scale_invariance() {
        let k = KernelSpec::rbf(0.7);
        let k2 = KernelSpec::rbf(0.7 / 9.0);
        let (a, b) = ([0.2, -0.5], [1.0, 0.3]);
        let (a3, b3) = (a.map(|v| 3.0 * v), b.map(|v| 3.0 * v));
        assert!((k.eval(&a, &b).unwrap() - k2.eval(&a3, &b3).unwrap()).abs() < 1e-15);
    }
}
