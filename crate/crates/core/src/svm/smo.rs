use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::kernel::KernelSpec;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SmoOptions {
    pub c: f64,
    /// Stop once the maximal KKT violation falls to this.
    pub tol: f64,
    pub max_iter: usize,
    pub seed: u64,
}

impl Default for SmoOptions {
    fn default() -> Self {
        SmoOptions { c: 128.0, tol: 1e-3, max_iter: 1_000_000, seed: 0 }
    }
}

/// Dual variables for every training point together with the bias.
#[derive(Clone, Debug, PartialEq)]
pub struct DualSolution {
    pub alpha: Vec<f64>,
    pub bias: f64,
    pub converged: bool,
    pub iterations: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct BinarySvm {
    pub support_vectors: Vec<Vec<f64>>,
    /// `αᵢ·yᵢ` per support vector.
    pub dual_coefs: Vec<f64>,
    pub bias: f64,
    pub c: f64,
    pub kernel: KernelSpec,
    pub converged: bool,
}

impl BinarySvm {
    pub fn dim(&self) -> usize {
        self.support_vectors.first().map_or(0, Vec::len)
    }

    /// `Σ coefᵢ·K(svᵢ, x) + b`; the sign is the predicted label.
    pub fn decision_value(&self, x: &[f64]) -> Result<f64> {
        if !self.support_vectors.is_empty() && x.len() != self.dim() {
            return Err(Error::Dimension { expected: self.dim(), got: x.len() });
        }
        Ok(self.decision_unchecked(x))
    }

    pub(crate) fn decision_unchecked(&self, x: &[f64]) -> f64 {
        self.support_vectors
            .iter()
            .zip(&self.dual_coefs)
            .map(|(sv, a)| a * self.kernel.eval_unchecked(sv, x))
            .sum::<f64>()
            + self.bias
    }

    pub fn predict(&self, x: &[f64]) -> Result<i8> {
        Ok(if self.decision_value(x)? > 0.0 { 1 } else { -1 })
    }
}

fn check_problem(x: &[Vec<f64>], y: &[i8], kernel: &KernelSpec, opts: &SmoOptions) -> Result<()> {
    if x.len() != y.len() {
        return Err(Error::Dimension { expected: x.len(), got: y.len() });
    }
    if x.len() < 2 {
        return Err(Error::Empty(format!("SVM training needs at least 2 points, got {}", x.len())));
    }
    let d = x[0].len();
    if let Some(bad) = x.iter().find(|r| r.len() != d) {
        return Err(Error::Dimension { expected: d, got: bad.len() });
    }
    if y.iter().any(|&v| v != 1 && v != -1) {
        return Err(Error::config("labels", "binary labels must be +1 or -1"));
    }
    if !(y.contains(&1) && y.contains(&-1)) {
        return Err(Error::SingleClass);
    }
    if !(opts.c > 0.0 && opts.c.is_finite()) {
        return Err(Error::config("C", format!("must be positive, got {}", opts.c)));
    }
    if !(opts.tol > 0.0) {
        return Err(Error::config("tol", "must be positive"));
    }
    kernel.validate()
}

/// Picks uniformly among indices whose score equals the best score exactly.
fn pick<R: Rng>(cands: &[usize], rng: &mut R) -> usize {
    if cands.len() == 1 {
        cands[0]
    } else {
        cands[rng.random_range(0..cands.len())]
    }
}

/// Solves the C-SVM dual
/// `min ½ΣΣ αᵢαⱼyᵢyⱼK(xᵢ,xⱼ) − Σαᵢ  s.t. 0 ≤ αᵢ ≤ C, Σαᵢyᵢ = 0`
/// by SMO with maximal-violating-pair selection; exact ties in the selection
/// are broken by a generator seeded from `opts.seed`.
pub fn solve_dual(x: &[Vec<f64>], y: &[i8], kernel: &KernelSpec, opts: &SmoOptions) -> Result<DualSolution> {
    check_problem(x, y, kernel, opts)?;
    let n = x.len();
    let c = opts.c;
    let k = kernel.gram(x);
    let yf: Vec<f64> = y.iter().map(|&v| v as f64).collect();
    let mut alpha = vec![0.0; n];
    let mut grad = vec![-1.0; n];
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);

    let in_up = |a: f64, yi: f64| (yi > 0.0 && a < c) || (yi < 0.0 && a > 0.0);
    let in_low = |a: f64, yi: f64| (yi > 0.0 && a > 0.0) || (yi < 0.0 && a < c);

    let mut converged = false;
    let mut iterations = 0;
    let mut up = Vec::with_capacity(n);
    let mut low = Vec::with_capacity(n);
    while iterations < opts.max_iter {
        let mut gmax = f64::NEG_INFINITY;
        let mut gmin = f64::INFINITY;
        up.clear();
        low.clear();
        for t in 0..n {
            let v = -yf[t] * grad[t];
            if in_up(alpha[t], yf[t]) {
                if v > gmax {
                    gmax = v;
                    up.clear();
                }
                if v == gmax {
                    up.push(t);
                }
            }
            if in_low(alpha[t], yf[t]) {
                if v < gmin {
                    gmin = v;
                    low.clear();
                }
                if v == gmin {
                    low.push(t);
                }
            }
        }
        if up.is_empty() || low.is_empty() || gmax - gmin <= opts.tol {
            converged = true;
            break;
        }
        let i = pick(&up, &mut rng);
        let j = pick(&low, &mut rng);

        let eta = (k[i * n + i] + k[j * n + j] - 2.0 * k[i * n + j]).max(1e-12);
        let cap_i = if yf[i] > 0.0 { c - alpha[i] } else { alpha[i] };
        let cap_j = if yf[j] > 0.0 { alpha[j] } else { c - alpha[j] };
        let step = (gmax - gmin) / eta;
        let t = step.min(cap_i).min(cap_j);

        let old_i = alpha[i];
        let old_j = alpha[j];
        alpha[i] = if t == cap_i { if yf[i] > 0.0 { c } else { 0.0 } } else { old_i + yf[i] * t };
        alpha[j] = if t == cap_j { if yf[j] > 0.0 { 0.0 } else { c } } else { old_j - yf[j] * t };
        let (di, dj) = (alpha[i] - old_i, alpha[j] - old_j);
        for (s, g) in grad.iter_mut().enumerate() {
            *g += yf[s] * (yf[i] * k[s * n + i] * di + yf[j] * k[s * n + j] * dj);
        }
        iterations += 1;
    }
    if !converged {
        log::warn!("SMO stopped at the iteration cap ({}) before reaching tol {}", opts.max_iter, opts.tol);
    }

    // b = −yᵢGᵢ on free vectors; otherwise the midpoint of the feasible interval
    let mut free_sum = 0.0;
    let mut free_n = 0usize;
    let mut ub = f64::INFINITY;
    let mut lb = f64::NEG_INFINITY;
    for t in 0..n {
        let yg = yf[t] * grad[t];
        if alpha[t] >= c {
            if yf[t] < 0.0 {
                ub = ub.min(yg);
            } else {
                lb = lb.max(yg);
            }
        } else if alpha[t] <= 0.0 {
            if yf[t] > 0.0 {
                ub = ub.min(yg);
            } else {
                lb = lb.max(yg);
            }
        } else {
            free_sum += yg;
            free_n += 1;
        }
    }
    let rho = if free_n > 0 { free_sum / free_n as f64 } else { (ub + lb) / 2.0 };
    Ok(DualSolution { alpha, bias: -rho, converged, iterations })
}

pub fn smo_train(x: &[Vec<f64>], y: &[i8], kernel: &KernelSpec, opts: &SmoOptions) -> Result<BinarySvm> {
    let sol = solve_dual(x, y, kernel, opts)?;
    let mut support_vectors = Vec::new();
    let mut dual_coefs = Vec::new();
    for ((xi, &yi), &a) in x.iter().zip(y).zip(&sol.alpha) {
        if a > 0.0 {
            support_vectors.push(xi.clone());
            dual_coefs.push(a * yi as f64);
        }
    }
    Ok(BinarySvm {
        support_vectors,
        dual_coefs,
        bias: sol.bias,
        c: opts.c,
        kernel: *kernel,
        converged: sol.converged,
    })
}

/// `½ΣΣ αᵢαⱼyᵢyⱼKᵢⱼ − Σαᵢ`, the minimised dual objective.
pub fn dual_objective(alpha: &[f64], x: &[Vec<f64>], y: &[i8], kernel: &KernelSpec) -> f64 {
    let n = x.len();
    let mut quad = 0.0;
    for i in 0..n {
        if alpha[i] == 0.0 {
            continue;
        }
        for j in 0..n {
            quad += alpha[i] * alpha[j] * (y[i] * y[j]) as f64 * kernel.eval_unchecked(&x[i], &x[j]);
        }
    }
    0.5 * quad - alpha.iter().sum::<f64>()
}

/// Largest violation of the KKT conditions for `(α, b)` on the training set:
/// αᵢ = 0 needs yᵢf ≥ 1, 0 < αᵢ < C needs yᵢf = 1, αᵢ = C needs yᵢf ≤ 1.
pub fn kkt_violation(sol: &DualSolution, x: &[Vec<f64>], y: &[i8], kernel: &KernelSpec, c: f64) -> f64 {
    let mut worst = 0.0f64;
    for (i, xi) in x.iter().enumerate() {
        let f: f64 = x
            .iter()
            .zip(y)
            .zip(&sol.alpha)
            .map(|((xj, &yj), &a)| a * yj as f64 * kernel.eval_unchecked(xj, xi))
            .sum::<f64>()
            + sol.bias;
        let m = y[i] as f64 * f;
        let a = sol.alpha[i];
        let v = if a <= 0.0 {
            (1.0 - m).max(0.0)
        } else if a >= c {
            (m - 1.0).max(0.0)
        } else {
            (m - 1.0).abs()
        };
        worst = worst.max(v);
    }
    worst
}

/// `(1/n)Σ max(0, 1 − yᵢ(w·xᵢ + b)) + λ‖w‖²` for an explicit linear model.
pub fn primal_hinge_objective(x: &[Vec<f64>], y: &[i8], w: &[f64], bias: f64, lambda: f64) -> f64 {
    let n = x.len() as f64;
    let hinge: f64 = x
        .iter()
        .zip(y)
        .map(|(xi, &yi)| {
            let f: f64 = xi.iter().zip(w).map(|(a, b)| a * b).sum::<f64>() + bias;
            (1.0 - yi as f64 * f).max(0.0)
        })
        .sum();
    hinge / n + lambda * w.iter().map(|v| v * v).sum::<f64>()
}

/// Primal weight vector `Σαᵢyᵢxᵢ` of a linear-kernel solution.
pub fn primal_weights(alpha: &[f64], x: &[Vec<f64>], y: &[i8]) -> Vec<f64> {
    let d = x.first().map_or(0, Vec::len);
    let mut w = vec![0.0; d];
    for ((xi, &yi), &a) in x.iter().zip(y).zip(alpha) {
        w.iter_mut().zip(xi).for_each(|(wj, v)| *wj += a * yi as f64 * v);
    }
    w
}
