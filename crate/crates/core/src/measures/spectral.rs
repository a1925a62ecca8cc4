use serde::{Deserialize, Serialize};

use crate::linalg::{norm, Matrix};

pub const DEFAULT_TOL: f64 = 1e-9;
pub const DEFAULT_MAX_ITERS: usize = 20_000;

/// Result of a power iteration. `residual` is the relative eigen-residual
/// `‖WᵀW v − μ v‖ / μ` of the final iterate; the value error is of order
/// `residual²`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpectralNorm {
    pub value: f64,
    pub residual: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Largest singular value by power iteration on `WᵀW`.
///
/// The start vector is fixed (a deterministic, non-symmetric pattern), so the
/// result is reproducible. A zero matrix yields value 0.
pub fn spectral_norm(w: &Matrix, tol: f64, max_iters: usize) -> SpectralNorm {
    if w.is_zero() || w.cols == 0 {
        return SpectralNorm {
            value: 0.0,
            residual: 0.0,
            iterations: 0,
            converged: true,
        };
    }
    let mut v: Vec<f64> = (0..w.cols).map(|i| 1.0 + (i as f64 * 0.618_033_988_749_895).fract()).collect();
    let n0 = norm(&v);
    v.iter_mut().for_each(|x| *x /= n0);
    let mut last = SpectralNorm {
        value: 0.0,
        residual: f64::INFINITY,
        iterations: 0,
        converged: false,
    };
    for it in 1..=max_iters {
        let z = w.matvec_t(&w.matvec(&v));
        let mu = crate::linalg::dot(&v, &z);
        let zn = norm(&z);
        if zn == 0.0 {
            // start vector in the null space: restart on a unit vector
            v = vec![0.0; w.cols];
            v[it % w.cols] = 1.0;
            continue;
        }
        let residual = z
            .iter()
            .zip(&v)
            .map(|(zi, vi)| (zi - mu * vi).powi(2))
            .sum::<f64>()
            .sqrt()
            / mu;
        last = SpectralNorm {
            value: mu.sqrt(),
            residual,
            iterations: it,
            converged: residual <= tol,
        };
        if last.converged {
            break;
        }
        v = z.iter().map(|x| x / zn).collect();
    }
    last
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn diagonal_and_rank_one() {
        let d = Matrix::from_rows(&[vec![3.0, 0.0], vec![0.0, 1.0]]);
        let s = spectral_norm(&d, DEFAULT_TOL, DEFAULT_MAX_ITERS);
        assert!(s.converged);
        assert!((s.value - 3.0).abs() < 1e-12);

        let u = [1.0, -2.0, 0.5];
        let v = [3.0, 4.0];
        let m = Matrix::from_vec(3, 2, u.iter().flat_map(|a| v.iter().map(move |b| a * b)).collect());
        let s = spectral_norm(&m, DEFAULT_TOL, DEFAULT_MAX_ITERS);
        assert!((s.value - norm(&u) * norm(&v)).abs() < 1e-12);
    }

    #[test]
    fn zero_matrix() {
        assert_eq!(spectral_norm(&Matrix::zeros(2, 3), 1e-9, 10).value, 0.0);
    }
}
