use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// Monte Carlo estimate of `E Z(t, x)^p`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MomentEstimate {
    pub p: f64,
    pub t: f64,
    pub x: f64,
    pub mean: f64,
    /// Sample standard deviation over `√n`.
    pub stderr: f64,
    pub n_replicas: usize,
    pub n_zero: usize,
    pub seed: u64,
    /// `(1/t) log mean`
    pub log_rate: f64,
    /// Delta-method stderr of `log_rate`: `stderr / (mean t)`.
    pub log_rate_stderr: f64,
}

/// Mean and standard error of `v^p` (with `0^p = 0`).
pub fn estimate_moment(
    values: &[f64],
    p: f64,
    t: f64,
    x: f64,
    seed: u64,
) -> Result<MomentEstimate> {
    if values.is_empty() {
        return Err(invalid("empty ensemble"));
    }
    if !(p > 0.0) {
        return Err(invalid(format!("p must be positive, got {p}")));
    }
    let n = values.len();
    let n_zero = values.iter().filter(|&&v| v <= 0.0).count();
    if n_zero == n {
        return Err(Error::Degenerate("every replica is zero".into()));
    }
    let powered: Vec<f64> = values
        .iter()
        .map(|&v| {
            if v <= 0.0 {
                0.0
            } else if p == 1.0 {
                v
            } else {
                v.powf(p)
            }
        })
        .collect();
    let (mean, stderr) = mean_stderr(&powered);
    let (log_rate, log_rate_stderr) = if t > 0.0 {
        (mean.ln() / t, stderr / (mean * t))
    } else {
        (f64::NAN, f64::NAN)
    };
    Ok(MomentEstimate {
        p,
        t,
        x,
        mean,
        stderr,
        n_replicas: n,
        n_zero,
        seed,
        log_rate,
        log_rate_stderr,
    })
}

/// Two-pass sample mean and standard error, in index order.
pub fn mean_stderr(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    if v.len() < 2 {
        return (mean, 0.0);
    }
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Slope of `log E Z^p` against `t`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SlopeFit {
    pub slope: f64,
    pub stderr: f64,
    pub intercept: f64,
    pub n_points: usize,
    pub window: (f64, f64),
    pub target: Option<f64>,
}

/// Weighted least-squares slope over `t ∈ [window.0, window.1]`. Weights are
/// `1/stderr²` when every stderr is positive; otherwise the fit is
/// unweighted with a residual-based stderr.
pub fn lyapunov_slope_fit(
    t: &[f64],
    log_mean: &[f64],
    stderr: &[f64],
    window: (f64, f64),
    target: Option<f64>,
) -> Result<SlopeFit> {
    if t.len() != log_mean.len() || t.len() != stderr.len() {
        return Err(invalid("series lengths differ"));
    }
    let idx: Vec<usize> = (0..t.len())
        .filter(|&i| t[i] >= window.0 && t[i] <= window.1)
        .collect();
    if idx.len() < 4 {
        return Err(Error::Degenerate(format!(
            "slope window [{}, {}] holds {} points; need at least 4",
            window.0,
            window.1,
            idx.len()
        )));
    }
    let weighted = idx.iter().all(|&i| stderr[i] > 0.0);
    let w: Vec<f64> = idx
        .iter()
        .map(|&i| if weighted { stderr[i].powi(-2) } else { 1.0 })
        .collect();
    let sw: f64 = w.iter().sum();
    let tbar = idx.iter().zip(&w).map(|(&i, wi)| wi * t[i]).sum::<f64>() / sw;
    let ybar = idx
        .iter()
        .zip(&w)
        .map(|(&i, wi)| wi * log_mean[i])
        .sum::<f64>()
        / sw;
    let sxx: f64 = idx
        .iter()
        .zip(&w)
        .map(|(&i, wi)| wi * (t[i] - tbar).powi(2))
        .sum();
    if !(sxx > 0.0) {
        return Err(Error::Degenerate(
            "slope window has a single distinct time".into(),
        ));
    }
    let sxy: f64 = idx
        .iter()
        .zip(&w)
        .map(|(&i, wi)| wi * (t[i] - tbar) * (log_mean[i] - ybar))
        .sum();
    let slope = sxy / sxx;
    let intercept = ybar - slope * tbar;
    let se = if weighted {
        (1.0 / sxx).sqrt()
    } else {
        let rss: f64 = idx
            .iter()
            .map(|&i| (log_mean[i] - intercept - slope * t[i]).powi(2))
            .sum();
        (rss / (idx.len() as f64 - 2.0) / sxx).sqrt()
    };
    Ok(SlopeFit {
        slope,
        stderr: se,
        intercept,
        n_points: idx.len(),
        window,
        target,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_ensemble() {
        let e = estimate_moment(&[2.0; 50], 2.0, 1.0, 0.0, 0).unwrap();
        assert_eq!(e.mean, 4.0);
        assert_eq!(e.stderr, 0.0);
        assert_eq!(e.log_rate, 4f64.ln());
    }

    #[test]
    fn zeros_and_errors() {
        let e = estimate_moment(&[0.0, 4.0], 0.5, 1.0, 0.0, 0).unwrap();
        assert_eq!(e.mean, 1.0);
        assert_eq!(e.n_zero, 1);
        assert!(matches!(
            estimate_moment(&[0.0; 3], 1.0, 1.0, 0.0, 0),
            Err(Error::Degenerate(_))
        ));
        assert!(estimate_moment(&[], 1.0, 1.0, 0.0, 0).is_err());
        assert!(estimate_moment(&[1.0], 0.0, 1.0, 0.0, 0).is_err());
    }

    #[test]
    fn exact_linear_series() {
        let t: Vec<f64> = (1..=8).map(f64::from).collect();
        let y: Vec<f64> = t.iter().map(|v| 0.7 * v).collect();
        let fit = lyapunov_slope_fit(&t, &y, &[0.0; 8], (0.0, 10.0), Some(0.7)).unwrap();
        assert!((fit.slope - 0.7).abs() < 1e-14);
        assert!(fit.stderr < 1e-14);
        assert_eq!(fit.n_points, 8);
    }

    #[test]
    fn weighted_fit_and_window() {
        let t = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0];
        let y = [0.1, 0.2, 0.3, 0.4, 0.5, 9.0];
        let fit = lyapunov_slope_fit(&t, &y, &[0.01; 6], (1.0, 5.0), None).unwrap();
        assert!((fit.slope - 0.1).abs() < 1e-12);
        assert!((fit.stderr - (1.0f64 / (1e4 * 10.0)).sqrt()).abs() < 1e-12);
        assert!(lyapunov_slope_fit(&t, &y, &[0.01; 6], (1.0, 3.0), None).is_err());
    }
}
