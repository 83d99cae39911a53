use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Eigenpairs of a real symmetric matrix, eigenvalues descending.
#[derive(Clone, Debug)]
pub struct SymmetricEigenResult {
    pub eigenvalues: Vec<f64>,
    /// `eigenvectors[i]` pairs with `eigenvalues[i]`; unit length, mutually
    /// orthogonal, largest-magnitude entry positive.
    pub eigenvectors: Vec<Vec<f64>>,
}

/// Symmetric eigendecomposition of a row-major `d×d` matrix.
pub fn sym_eig(matrix: &[f64], d: usize) -> Result<SymmetricEigenResult> {
    if matrix.len() != d * d {
        return Err(Error::shape(
            "sym_eig",
            format!("{} values cannot form a {d}×{d} matrix", matrix.len()),
        ));
    }
    if d == 0 {
        return Err(Error::Empty("sym_eig on a 0×0 matrix".into()));
    }
    let scale = matrix.iter().fold(1.0f64, |m, v| m.max(v.abs()));
    let mut asym = 0.0f64;
    for i in 0..d {
        for j in (i + 1)..d {
            asym = asym.max((matrix[i * d + j] - matrix[j * d + i]).abs());
        }
    }
    if asym > 1e-10 * scale {
        return Err(Error::NotSymmetric(asym));
    }

    let m = DMatrix::from_row_slice(d, d, matrix);
    let eig = m.symmetric_eigen();

    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));

    let eigenvalues = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let eigenvectors = order
        .iter()
        .map(|&i| {
            let mut v: Vec<f64> = eig.eigenvectors.column(i).iter().copied().collect();
            canonical_sign(&mut v);
            v
        })
        .collect();
    Ok(SymmetricEigenResult {
        eigenvalues,
        eigenvectors,
    })
}

/// Flips `v` so its largest-magnitude entry (first on ties) is positive.
pub fn canonical_sign(v: &mut [f64]) {
    let mut best = 0usize;
    for (i, x) in v.iter().enumerate() {
        if x.abs() > v[best].abs() {
            best = i;
        }
    }
    if v.get(best).is_some_and(|&x| x < 0.0) {
        v.iter_mut().for_each(|x| *x = -*x);
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}
