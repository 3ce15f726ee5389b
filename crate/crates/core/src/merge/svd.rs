//! One-sided Jacobi singular value decomposition.
//!
//! Adapter deltas are small (rank a few dozen, sides at most a few
//! thousand), so a dependency-free Jacobi sweep is plenty: it rotates
//! column pairs until all columns are mutually orthogonal, at which point
//! the column norms are the singular values.

use super::matrix::Dense;

const ORTHO_TOL: f64 = 1e-13;
const MAX_SWEEPS: usize = 64;

/// Full SVD `a = U · diag(sigma) · Vᵀ` with `U: rows×m`, `sigma: m`,
/// `V: cols×m`, `m = min(rows, cols)`, singular values descending.
pub fn svd(a: &Dense) -> (Dense, Vec<f64>, Dense) {
    if a.cols() > a.rows() {
        // work on the transpose so the sweep runs over the short side
        let (u, sigma, v) = svd_tall(&a.transpose());
        return (v, sigma, u);
    }
    svd_tall(a)
}

fn svd_tall(a: &Dense) -> (Dense, Vec<f64>, Dense) {
    let rows = a.rows();
    let cols = a.cols();
    let mut w = a.clone();
    let mut v = Dense::zeros(cols, cols);
    for j in 0..cols {
        v.set(j, j, 1.0);
    }

    let col_dot = |m: &Dense, p: usize, q: usize| -> f64 {
        let mut sum = 0.0;
        for i in 0..m.rows() {
            sum += m.get(i, p) * m.get(i, q);
        }
        sum
    };

    for _ in 0..MAX_SWEEPS {
        let mut converged = true;
        for p in 0..cols.saturating_sub(1) {
            for q in (p + 1)..cols {
                let alpha = col_dot(&w, p, p);
                let beta = col_dot(&w, q, q);
                let gamma = col_dot(&w, p, q);
                let norm = (alpha * beta).sqrt();
                if norm == 0.0 || gamma.abs() <= ORTHO_TOL * norm {
                    continue;
                }
                converged = false;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                for i in 0..rows {
                    let wp = w.get(i, p);
                    let wq = w.get(i, q);
                    w.set(i, p, c * wp - s * wq);
                    w.set(i, q, s * wp + c * wq);
                }
                for i in 0..cols {
                    let vp = v.get(i, p);
                    let vq = v.get(i, q);
                    v.set(i, p, c * vp - s * vq);
                    v.set(i, q, s * vp + c * vq);
                }
            }
        }
        if converged {
            break;
        }
    }

    // column norms are the singular values; sort descending
    let mut order: Vec<usize> = (0..cols).collect();
    let norms: Vec<f64> = (0..cols).map(|j| col_dot(&w, j, j).sqrt()).collect();
    order.sort_by(|&a, &b| norms[b].partial_cmp(&norms[a]).unwrap_or(std::cmp::Ordering::Equal));

    let mut u = Dense::zeros(rows, cols);
    let mut v_sorted = Dense::zeros(cols, cols);
    let mut sigma = Vec::with_capacity(cols);
    for (dst, &src) in order.iter().enumerate() {
        let norm = norms[src];
        sigma.push(norm);
        if norm > f64::MIN_POSITIVE {
            for i in 0..rows {
                u.set(i, dst, w.get(i, src) / norm);
            }
        }
        for i in 0..cols {
            v_sorted.set(i, dst, v.get(i, src));
        }
    }
    (u, sigma, v_sorted)
}

/// Rank-`target` factorization of `delta`: returns `(a, b)` with
/// `a: target×cols`, `b: rows×target`, and `b · a` the best rank-`target`
/// approximation of `delta`.
pub fn refactor(delta: &Dense, target: usize) -> (Dense, Dense) {
    let (u, sigma, v) = svd(delta);
    let m = sigma.len().min(target);
    let mut b = Dense::zeros(delta.rows(), target);
    let mut a = Dense::zeros(target, delta.cols());
    for (j, &sv) in sigma.iter().enumerate().take(m) {
        for i in 0..delta.rows() {
            b.set(i, j, u.get(i, j) * sv);
        }
        for i in 0..delta.cols() {
            a.set(j, i, v.get(i, j));
        }
    }
    (a, b)
}
