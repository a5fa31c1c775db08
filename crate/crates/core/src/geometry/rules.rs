//! One-dimensional Gauss rules used to build the surface and radial grids.

use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{Error, Result};

/// Gauss–Legendre nodes and weights on [-1, 1].
///
/// Newton iteration on P_n starting from the Chebyshev-like guess; exact for
/// polynomials of degree <= 2n - 1.
pub fn gauss_legendre(n: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    if n == 0 {
        return Err(Error::invalid("gauss_legendre needs n >= 1"));
    }
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    // Symmetric rule: solve for the lower half and mirror.
    let m = n.div_ceil(2);
    for i in 0..m {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        for _ in 0..100 {
            let (p, d) = legendre_and_derivative(n, x);
            let dx = p / d;
            x -= dx;
            if dx.abs() < 1e-15 {
                break;
            }
        }
        let (_, dp) = legendre_and_derivative(n, x);
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    if n % 2 == 1 {
        nodes[n / 2] = 0.0;
        let (_, d) = legendre_and_derivative(n, 0.0);
        weights[n / 2] = 2.0 / (d * d);
    }
    Ok((nodes, weights))
}

/// Legendre polynomial P_n(x) and its derivative by the three-term recurrence.
pub fn legendre_and_derivative(n: usize, x: f64) -> (f64, f64) {
    if n == 0 {
        return (1.0, 0.0);
    }
    let mut p_prev = 1.0;
    let mut p = x;
    for k in 2..=n {
        let kf = k as f64;
        let p_next = ((2.0 * kf - 1.0) * x * p - (kf - 1.0) * p_prev) / kf;
        p_prev = p;
        p = p_next;
    }
    // P'_n(x) = n (x P_n - P_{n-1}) / (x^2 - 1); at the endpoints use the
    // closed form n(n+1)/2 with sign.
    let d = if (1.0 - x * x).abs() < 1e-14 {
        let sign = if x > 0.0 { 1.0 } else { (-1.0f64).powi(n as i32 + 1) };
        sign * 0.5 * n as f64 * (n as f64 + 1.0)
    } else {
        n as f64 * (x * p - p_prev) / (x * x - 1.0)
    };
    (p, d)
}

/// Legendre polynomials P_0(x) .. P_k(x).
pub fn legendre_all(k: usize, x: f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(k + 1);
    out.push(1.0);
    if k == 0 {
        return out;
    }
    out.push(x);
    for j in 2..=k {
        let jf = j as f64;
        let next = ((2.0 * jf - 1.0) * x * out[j - 1] - (jf - 1.0) * out[j - 2]) / jf;
        out.push(next);
    }
    out
}

/// Gauss–Jacobi rule for the weight (1+x)^beta on [-1, 1], beta a nonnegative
/// integer, via Golub–Welsch on the Jacobi recurrence matrix.
pub fn gauss_jacobi_beta(n: usize, beta: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    if n == 0 {
        return Err(Error::invalid("gauss_jacobi_beta needs n >= 1"));
    }
    let b = beta as f64;
    // Monic Jacobi recurrence coefficients for (a, b) = (0, beta).
    let alpha = |k: usize| -> f64 {
        let kf = k as f64;
        if k == 0 {
            b / (b + 2.0)
        } else {
            b * b / ((2.0 * kf + b) * (2.0 * kf + b + 2.0))
        }
    };
    let beta_sq = |k: usize| -> f64 {
        let kf = k as f64;
        let s = 2.0 * kf + b;
        4.0 * kf * kf * (kf + b) * (kf + b) / (s * s * (s * s - 1.0))
    };
    let mu0 = 2f64.powf(b + 1.0) / (b + 1.0);

    let mut jac = DMatrix::zeros(n, n);
    for k in 0..n {
        jac[(k, k)] = alpha(k);
        if k + 1 < n {
            let off = beta_sq(k + 1).sqrt();
            jac[(k, k + 1)] = off;
            jac[(k + 1, k)] = off;
        }
    }
    let eig = SymmetricEigen::new(jac);
    let mut pairs: Vec<(f64, f64)> = (0..n)
        .map(|j| {
            let v0 = eig.eigenvectors[(0, j)];
            (eig.eigenvalues[j], mu0 * v0 * v0)
        })
        .collect();
    pairs.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    Ok(pairs.into_iter().unzip())
}
