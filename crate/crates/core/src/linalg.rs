//! Small dense linear-algebra helpers: power-iteration spectral norm and
//! radius, Frobenius norms, and relative errors.

use ndarray::Array2;

const MAX_POWER_ITERS: usize = 100_000;

/// Largest singular value of `a`, by power iteration on `a^T a`.
///
/// `tol` bounds the change of the singular-value estimate between
/// iterations. Deterministic: starts from the all-ones vector, which cannot
/// be orthogonal to the dominant eigenvector when `a^T a` is entrywise
/// nonnegative with a positive dominant eigenvector.
pub fn spectral_norm(a: &Array2<f64>, tol: f64) -> f64 {
    let (rows, cols) = a.dim();
    if rows == 0 || cols == 0 {
        return 0.0;
    }
    let gram = a.t().dot(a);
    let mut v = vec![1.0 / (cols as f64).sqrt(); cols];
    let mut sigma_prev = 0.0;
    for _ in 0..MAX_POWER_ITERS {
        let mut w = vec![0.0; cols];
        for i in 0..cols {
            let mut acc = 0.0;
            for j in 0..cols {
                acc += gram[[i, j]] * v[j];
            }
            w[i] = acc;
        }
        let norm = w.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm == 0.0 {
            return 0.0;
        }
        for x in &mut w {
            *x /= norm;
        }
        let sigma = norm.sqrt();
        v = w;
        if (sigma - sigma_prev).abs() <= tol * sigma.max(1.0) {
            return sigma;
        }
        sigma_prev = sigma;
    }
    sigma_prev
}

/// Spectral radius of a nonnegative square matrix by power iteration;
/// the Perron root is the dominant eigenvalue so a positive start vector
/// converges to it.
pub fn spectral_radius(a: &Array2<f64>, tol: f64) -> f64 {
    let n = a.dim().0;
    debug_assert_eq!(n, a.dim().1);
    if n == 0 {
        return 0.0;
    }
    let mut v = vec![1.0 / (n as f64).sqrt(); n];
    let mut lambda_prev = 0.0;
    for _ in 0..MAX_POWER_ITERS {
        let mut w = vec![0.0; n];
        for i in 0..n {
            let mut acc = 0.0;
            for j in 0..n {
                acc += a[[i, j]] * v[j];
            }
            w[i] = acc;
        }
        let norm = w.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm == 0.0 {
            return 0.0;
        }
        let lambda = w.iter().zip(&v).map(|(wi, vi)| wi * vi).sum::<f64>();
        for x in &mut w {
            *x /= norm;
        }
        v = w;
        if (lambda - lambda_prev).abs() <= tol * lambda.abs().max(1.0) {
            return lambda;
        }
        lambda_prev = lambda;
    }
    lambda_prev
}

/// Frobenius norm of a slice of entries.
pub fn frobenius(entries: &[f64]) -> f64 {
    entries.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// `||truth - est||_F / ||truth||_F` over flat entries; `None` when the
/// truth has zero norm.
pub fn relative_frobenius_error(est: &[f64], truth: &[f64]) -> Option<f64> {
    debug_assert_eq!(est.len(), truth.len());
    let denom = frobenius(truth);
    if denom == 0.0 {
        return None;
    }
    let diff: f64 = est
        .iter()
        .zip(truth)
        .map(|(e, t)| {
            let d = e - t;
            d * d
        })
        .sum();
    Some(diff.sqrt() / denom)
}
