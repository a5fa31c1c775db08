//! Log-log exponent fitting and the sharp L^p growth exponent table.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Ordinary least squares fit of log(value) against log(lambda) over a
/// window, with residual diagnostics.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExponentFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
    pub residual_max: f64,
    pub window: (f64, f64),
    /// (log lambda, log value) pairs that entered the fit.
    pub points: Vec<(f64, f64)>,
}

/// Fit `value ~ C * lambda^slope` over the points with lambda inside the
/// window. Requires at least 4 points and positive values.
pub fn fit_exponent(points: &[(f64, f64)], window: (f64, f64)) -> Result<ExponentFit> {
    let logs: Vec<(f64, f64)> = points
        .iter()
        .filter(|(l, _)| *l >= window.0 && *l <= window.1)
        .map(|(l, v)| {
            if *v <= 0.0 || *l <= 0.0 {
                Err(Error::invalid(format!(
                    "exponent fit needs positive data, got ({l}, {v})"
                )))
            } else {
                Ok((l.ln(), v.ln()))
            }
        })
        .collect::<Result<_>>()?;
    if logs.len() < 4 {
        return Err(Error::invalid(format!(
            "exponent fit needs >= 4 points in window [{}, {}], got {}",
            window.0,
            window.1,
            logs.len()
        )));
    }
    let n = logs.len() as f64;
    let sx: f64 = logs.iter().map(|p| p.0).sum();
    let sy: f64 = logs.iter().map(|p| p.1).sum();
    let sxx: f64 = logs.iter().map(|p| p.0 * p.0).sum();
    let sxy: f64 = logs.iter().map(|p| p.0 * p.1).sum();
    let denom = n * sxx - sx * sx;
    if denom.abs() < 1e-14 {
        return Err(Error::invalid("exponent fit window has no lambda spread"));
    }
    let slope = (n * sxy - sx * sy) / denom;
    let intercept = (sy - slope * sx) / n;
    let mean_y = sy / n;
    let mut ss_res = 0.0;
    let mut ss_tot = 0.0;
    let mut residual_max = 0.0f64;
    for (x, y) in &logs {
        let r = y - (slope * x + intercept);
        ss_res += r * r;
        ss_tot += (y - mean_y) * (y - mean_y);
        residual_max = residual_max.max(r.abs());
    }
    let r_squared = if ss_tot > 0.0 { (1.0 - ss_res / ss_tot).clamp(0.0, 1.0) } else { 1.0 };
    Ok(ExponentFit {
        slope,
        intercept,
        r_squared,
        residual_max,
        window,
        points: logs,
    })
}

/// Slopes over a ladder of doubling windows [l0, 2^w l0], [2 l0, 2^(w+1) l0], ...
/// Asymptotic claims are declared stable when consecutive window slopes agree
/// to 0.05.
pub fn windowed_slopes(
    points: &[(f64, f64)],
    lambda0: f64,
    octaves_per_window: u32,
    num_windows: usize,
) -> Result<Vec<ExponentFit>> {
    let mut out = Vec::with_capacity(num_windows);
    for w in 0..num_windows {
        let lo = lambda0 * 2f64.powi(w as i32);
        let hi = lo * 2f64.powi(octaves_per_window as i32);
        out.push(fit_exponent(points, (lo, hi))?);
    }
    Ok(out)
}

/// The sharp L^p eigenfunction growth exponent on an n-manifold:
/// (n-1)/2 * (1/2 - 1/p) below the critical exponent p_c = 2(n+1)/(n-1),
/// and (n-1)/2 - n/p at and above it. On the circle (n = 1) the critical
/// exponent degenerates to infinity and the exponent vanishes for finite p.
pub fn sogge_exponent(p: f64, n: usize) -> Result<f64> {
    if p.is_nan() || p < 2.0 {
        return Err(Error::invalid(format!("sogge_exponent needs p >= 2, got {p}")));
    }
    let nf = n as f64;
    if n == 1 {
        // p_c = infinity: the subcritical branch applies for all finite p
        // and both branches vanish identically at p = infinity.
        return Ok(0.0);
    }
    let p_c = 2.0 * (nf + 1.0) / (nf - 1.0);
    Ok(if p < p_c {
        0.5 * (nf - 1.0) * (0.5 - 1.0 / p)
    } else if p.is_infinite() {
        0.5 * (nf - 1.0)
    } else {
        0.5 * (nf - 1.0) - nf / p
    })
}

/// Critical exponent 2(n+1)/(n-1); infinite on the circle.
pub fn critical_exponent(n: usize) -> f64 {
    if n == 1 {
        f64::INFINITY
    } else {
        let nf = n as f64;
        2.0 * (nf + 1.0) / (nf - 1.0)
    }
}
