//! Small dense vector/matrix helpers shared by the solvers.

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm_sq(a: &[f64]) -> f64 {
    dot(a, a)
}

pub fn norm(a: &[f64]) -> f64 {
    norm_sq(a).sqrt()
}

pub fn mean(a: &[f64]) -> f64 {
    a.iter().sum::<f64>() / a.len() as f64
}

pub fn sub(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

/// Distance to the mean vector: ||x - mean(x) 1_V||.
pub fn dist_to_mean(x: &[f64]) -> f64 {
    let m = mean(x);
    x.iter().map(|v| (v - m) * (v - m)).sum::<f64>().sqrt()
}

/// Solves the symmetric positive definite system `m y = rhs` by Cholesky.
/// `m` is row-major n x n. Returns `None` when the factorization fails.
pub(crate) fn solve_spd(n: usize, m: &[f64], rhs: &[f64]) -> Option<Vec<f64>> {
    let mat = nalgebra::DMatrix::from_row_slice(n, n, m);
    let chol = mat.cholesky()?;
    let sol = chol.solve(&nalgebra::DVector::from_column_slice(rhs));
    Some(sol.data.into())
}
