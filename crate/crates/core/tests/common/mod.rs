#![allow(dead_code)]

use fundus_core::segnet::{BoundaryForm, SegMask, WeightMapParams};
use fundus_core::svm::KernelSpec;
use nalgebra::{DMatrix, DVector};
use rand::Rng;

/// Result of the exhaustive QP solve.
#[derive(Clone, Debug)]
pub struct QpSolution {
    pub alpha: Vec<f64>,
    pub objective: f64,
    pub bias: f64,
}

const FEAS_TOL: f64 = 1e-9;
const COND_TOL: f64 = 1e-12;

pub fn gram_signed(x: &[Vec<f64>], y: &[i8], kernel: &KernelSpec) -> DMatrix<f64> {
    let n = x.len();
    DMatrix::from_fn(n, n, |i, j| y[i] as f64 * y[j] as f64 * kernel.eval(&x[i], &x[j]).unwrap())
}

fn objective(q: &DMatrix<f64>, a: &DVector<f64>) -> f64 {
    0.5 * a.dot(&(q * a)) - a.sum()
}

/// Minimises `½αᵀQα − 1ᵀα` s.t. `0 ≤ α ≤ C`, `yᵀα = 0` by enumerating
/// every assignment of variables to {lower bound, upper bound, free} and
/// solving the equality-constrained stationarity system on the free set.
pub fn brute_force_qp(x: &[Vec<f64>], y: &[i8], kernel: &KernelSpec, c: f64) -> QpSolution {
    let n = x.len();
    let q = gram_signed(x, y, kernel);
    let yv = DVector::from_iterator(n, y.iter().map(|&v| v as f64));
    let mut best: Option<(f64, DVector<f64>)> = None;
    let total = 3usize.pow(n as u32);
    for code in 0..total {
        let mut state = vec![0u8; n];
        let mut rest = code;
        for s in state.iter_mut() {
            *s = (rest % 3) as u8;
            rest /= 3;
        }
        let free: Vec<usize> = (0..n).filter(|&i| state[i] == 2).collect();
        let mut a = DVector::from_fn(n, |i, _| if state[i] == 1 { c } else { 0.0 });
        if !free.is_empty() {
            let m = free.len();
            let mut sys = DMatrix::zeros(m + 1, m + 1);
            let mut rhs = DVector::zeros(m + 1);
            let qa = &q * &a;
            for (r, &i) in free.iter().enumerate() {
                for (s, &j) in free.iter().enumerate() {
                    sys[(r, s)] = q[(i, j)];
                }
                sys[(r, m)] = yv[i];
                sys[(m, r)] = yv[i];
                rhs[r] = 1.0 - qa[i];
            }
            rhs[m] = -yv.dot(&a);
            let svd = sys.clone().svd(true, true);
            let smax = svd.singular_values.max();
            let smin = svd.singular_values.min();
            if smax == 0.0 || smin / smax < COND_TOL {
                continue;
            }
            let sol = svd.solve(&rhs, 0.0).unwrap();
            for (r, &i) in free.iter().enumerate() {
                a[i] = sol[r];
            }
        }
        let feasible = a.iter().all(|&v| v >= -FEAS_TOL && v <= c + FEAS_TOL) && yv.dot(&a).abs() <= FEAS_TOL;
        if !feasible {
            continue;
        }
        let a = a.map(|v| v.clamp(0.0, c));
        let obj = objective(&q, &a);
        if best.as_ref().is_none_or(|(b, _)| obj < *b) {
            best = Some((obj, a));
        }
    }
    let (objective, a) = best.expect("the zero vector is always feasible");
    let bias = bias_from_alpha(&q, &yv, &a, c);
    QpSolution { alpha: a.iter().copied().collect(), objective, bias }
}

/// Bias implied by the KKT conditions: averaged over free variables, or the
/// midpoint of the feasible interval when none is free.
fn bias_from_alpha(q: &DMatrix<f64>, y: &DVector<f64>, a: &DVector<f64>, c: f64) -> f64 {
    let n = a.len();
    let g = q * a - DVector::from_element(n, 1.0);
    let bound_tol = 1e-9 * c.max(1.0);
    let mut free_sum = 0.0;
    let mut free_n = 0usize;
    let mut ub = f64::INFINITY;
    let mut lb = f64::NEG_INFINITY;
    for i in 0..n {
        let v = -y[i] * g[i];
        let at_lo = a[i] <= bound_tol;
        let at_hi = a[i] >= c - bound_tol;
        if !at_lo && !at_hi {
            free_sum += v;
            free_n += 1;
        } else if (y[i] > 0.0 && at_lo) || (y[i] < 0.0 && at_hi) {
            lb = lb.max(v);
        } else {
            ub = ub.min(v);
        }
    }
    if free_n > 0 {
        free_sum / free_n as f64
    } else {
        0.5 * (ub + lb)
    }
}

pub fn decision(x: &[Vec<f64>], y: &[i8], alpha: &[f64], bias: f64, kernel: &KernelSpec, p: &[f64]) -> f64 {
    x.iter()
        .zip(y)
        .zip(alpha)
        .map(|((xi, &yi), &a)| a * yi as f64 * kernel.eval(xi, p).unwrap())
        .sum::<f64>()
        + bias
}

/// Edge map: pixels with a 4-neighbour of the other class.
pub fn oracle_edges(mask: &SegMask) -> Vec<(i64, i64)> {
    let (w, h) = (mask.width as i64, mask.height as i64);
    let mut out = Vec::new();
    for y in 0..h {
        for x in 0..w {
            let l = mask.get(y as usize, x as usize) != 0;
            let differs = [(-1, 0), (1, 0), (0, -1), (0, 1)].iter().any(|&(dy, dx)| {
                let (ny, nx) = (y + dy, x + dx);
                ny >= 0 && nx >= 0 && ny < h && nx < w && (mask.get(ny as usize, nx as usize) != 0) != l
            });
            if differs {
                out.push((y, x));
            }
        }
    }
    out
}

/// Exhaustive weight map: for every pixel, sort the squared distances to all
/// edge pixels and take the two smallest.
pub fn oracle_weight_map(mask: &SegMask, p: &WeightMapParams) -> Vec<f64> {
    let n = (mask.width * mask.height) as f64;
    let n_vessel = mask.labels.iter().filter(|&&l| l != 0).count() as f64;
    let edges = oracle_edges(mask);
    let mut out = Vec::with_capacity(mask.labels.len());
    for y in 0..mask.height as i64 {
        for x in 0..mask.width as i64 {
            let vessel = mask.get(y as usize, x as usize) != 0;
            let wc = if p.class_balance {
                let freq = if vessel { n_vessel / n } else { (n - n_vessel) / n };
                0.5 / freq
            } else {
                1.0
            };
            let mut d: Vec<i64> = edges.iter().map(|&(ey, ex)| (ey - y).pow(2) + (ex - x).pow(2)).collect();
            d.sort_unstable();
            let extra = if d.len() >= 2 {
                oracle_boundary((d[0] as f64).sqrt(), (d[1] as f64).sqrt(), p.w0, p.sigma, p.form)
            } else {
                0.0
            };
            out.push(wc + extra);
        }
    }
    out
}

pub fn oracle_boundary(d1: f64, d2: f64, w0: f64, sigma: f64, form: BoundaryForm) -> f64 {
    let denom = 2.0 * sigma * sigma;
    match form {
        BoundaryForm::SquaredExponential => {
            let e = (-(d1 + d2) / denom).exp();
            w0 * (e * e)
        }
        BoundaryForm::SquaredDistance => w0 * (-((d1 + d2) * (d1 + d2)) / denom).exp(),
    }
}

/// Random mask built from a few filled discs and rectangles plus a sprinkle
/// of isolated pixels.
pub fn random_mask<R: Rng>(side: usize, rng: &mut R) -> SegMask {
    let mut labels = vec![0u8; side * side];
    let shapes = rng.random_range(0..6);
    for _ in 0..shapes {
        let cy = rng.random_range(0..side) as f64;
        let cx = rng.random_range(0..side) as f64;
        let r = rng.random_range(1.0..side as f64 / 3.0);
        let disc = rng.random_bool(0.5);
        for y in 0..side {
            for x in 0..side {
                let (dy, dx) = (y as f64 - cy, x as f64 - cx);
                let inside = if disc { dy * dy + dx * dx <= r * r } else { dy.abs() <= r && dx.abs() <= r / 2.0 };
                if inside {
                    labels[y * side + x] = 1;
                }
            }
        }
    }
    let specks = rng.random_range(0..10);
    for _ in 0..specks {
        let i = rng.random_range(0..side * side);
        labels[i] ^= 1;
    }
    SegMask::new(side, side, labels).unwrap()
}

/// `|a − n| / max(|a|, |n|, floor)`.
pub fn rel_err(analytic: f64, numeric: f64, floor: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(floor)
}

/// Central difference of `f` along coordinate `i` of `x`.
pub fn central_diff<F: FnMut(&[f64]) -> f64>(f: &mut F, x: &[f64], i: usize, eps: f64) -> f64 {
    let mut xp = x.to_vec();
    xp[i] += eps;
    let fp = f(&xp);
    xp[i] = x[i] - eps;
    let fm = f(&xp);
    (fp - fm) / (2.0 * eps)
}
