//! Rate functions from sampled moment exponents `h(p)`: if
//! `h(p) = lim (1/t) log E[e^{p X(t)}]` is C¹ with increasing slope, then
//! `(1/t) log P(X(t) > s t) → −(s q − h(q))` where `h'(q) = s`.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::numerics::{bisect, hermite, poly_fit, Pchip};

/// Second-order finite-difference slopes of `y` on a (possibly uneven) grid.
pub fn finite_difference_slopes(x: &[f64], y: &[f64]) -> Vec<f64> {
    let n = x.len();
    let mut d = vec![0.0; n];
    for i in 1..n - 1 {
        let h0 = x[i] - x[i - 1];
        let h1 = x[i + 1] - x[i];
        d[i] = (h0 * h0 * (y[i + 1] - y[i]) + h1 * h1 * (y[i] - y[i - 1])) / (h0 * h1 * (h0 + h1));
    }
    // one-sided three-point formulas at the ends
    let one_sided = |x0: f64, x1: f64, x2: f64, y0: f64, y1: f64, y2: f64| {
        let h0 = x1 - x0;
        let h1 = x2 - x1;
        -(2.0 * h0 + h1) / (h0 * (h0 + h1)) * y0 + (h0 + h1) / (h0 * h1) * y1
            - h0 / (h1 * (h0 + h1)) * y2
    };
    d[0] = one_sided(x[0], x[1], x[2], y[0], y[1], y[2]);
    d[n - 1] = -one_sided(
        -x[n - 1],
        -x[n - 2],
        -x[n - 3],
        y[n - 1],
        y[n - 2],
        y[n - 3],
    );
    d
}

/// `lim_{p→0} y'(p)` from the polynomial through the four smallest grid
/// points (three when that is all there is), differentiated at 0.
pub fn slope_at_zero(x: &[f64], y: &[f64]) -> f64 {
    let k = x.len().min(4);
    poly_fit(&x[..k], &y[..k], k - 1)[1]
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LdpPoint {
    pub s: f64,
    pub rate: f64,
    /// `q(s) = (h')^{-1}(s)`
    pub q: f64,
}

/// Precomputed slope interpolant for repeated rate evaluations.
#[derive(Debug, Clone)]
pub struct LdpEngine {
    p: Vec<f64>,
    h: Vec<f64>,
    slopes: Vec<f64>,
    slope_fn: Pchip,
    zeta: f64,
    /// Interior grid points where the curvature of `h` jumps.
    pub kinks: Vec<f64>,
}

impl LdpEngine {
    /// `p` must be positive and increasing with at least four points. Fails
    /// with [`Error::NonMonotoneSlope`] if the fitted `h'` is not increasing.
    pub fn new(p: Vec<f64>, h: Vec<f64>) -> Result<Self> {
        if p.len() != h.len() || p.len() < 4 {
            return Err(invalid("need at least four (p, h) samples"));
        }
        if p[0] <= 0.0 || p.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(invalid("p grid must be positive and increasing"));
        }
        let slopes = finite_difference_slopes(&p, &h);
        let scale = slopes.iter().fold(1.0_f64, |m, v| m.max(v.abs()));
        for i in 1..slopes.len() {
            if slopes[i] <= slopes[i - 1] - 1e-12 * scale {
                return Err(Error::NonMonotoneSlope { p: p[i] });
            }
        }
        let zeta = slope_at_zero(&p, &h);
        let kinks = detect_kinks(&p, &slopes);
        let slope_fn = Pchip::new(p.clone(), slopes.clone());
        Ok(Self {
            p,
            h,
            slopes,
            slope_fn,
            zeta,
            kinks,
        })
    }

    /// Extrapolated `lim_{p→0} h'(p)`.
    pub fn zeta(&self) -> f64 {
        self.zeta
    }

    pub fn slopes(&self) -> &[f64] {
        &self.slopes
    }

    /// Largest jump of the fitted slope between neighbouring grid points,
    /// divided by the grid step: a finite value indicates a continuous `h'`.
    pub fn max_slope_jump(&self) -> f64 {
        self.p
            .windows(2)
            .zip(self.slopes.windows(2))
            .map(|(pw, sw)| (sw[1] - sw[0]).abs() / (pw[1] - pw[0]))
            .fold(0.0, f64::max)
    }

    fn h_at(&self, q: f64) -> f64 {
        let n = self.p.len();
        let i = match self.p.binary_search_by(|v| v.total_cmp(&q)) {
            Ok(i) => i.min(n - 2),
            Err(0) => 0,
            Err(i) => (i - 1).min(n - 2),
        };
        let w = self.p[i + 1] - self.p[i];
        hermite(
            self.h[i],
            self.h[i + 1],
            self.slopes[i] * w,
            self.slopes[i + 1] * w,
            (q - self.p[i]) / w,
        )
    }

    pub fn rate(&self, s: f64) -> Result<LdpPoint> {
        if !(s > self.zeta) {
            return Err(Error::OutOfDomain { s, zeta: self.zeta });
        }
        let (lo, hi) = self.slope_fn.domain();
        let (smin, smax) = (self.slopes[0], self.slopes[self.slopes.len() - 1]);
        if s < smin || s > smax {
            return Err(invalid(format!(
                "s={s} outside the sampled slope range [{smin}, {smax}]; extend the p grid"
            )));
        }
        let q = bisect(|p| self.slope_fn.eval(p) - s, lo, hi, 1e-14 * hi);
        Ok(LdpPoint {
            s,
            rate: s * q - self.h_at(q),
            q,
        })
    }
}

fn detect_kinks(p: &[f64], slopes: &[f64]) -> Vec<f64> {
    // Curvature of h on each cell; flag cells where it jumps by more than
    // ten times the typical cell-to-cell change.
    let curv: Vec<f64> = p
        .windows(2)
        .zip(slopes.windows(2))
        .map(|(pw, sw)| (sw[1] - sw[0]) / (pw[1] - pw[0]))
        .collect();
    if curv.len() < 3 {
        return vec![];
    }
    let mut jumps: Vec<f64> = curv.windows(2).map(|w| (w[1] - w[0]).abs()).collect();
    let mut sorted = jumps.clone();
    sorted.sort_by(f64::total_cmp);
    let median = sorted[sorted.len() / 2];
    let threshold = 10.0 * median.max(1e-12);
    let mut out = Vec::new();
    for (i, j) in jumps.iter_mut().enumerate() {
        if *j > threshold {
            out.push(p[i + 1]);
        }
    }
    out
}

/// One-shot helper: rate at `s` from samples of `h`.
pub fn ldp_from_lyapunov(p: &[f64], h: &[f64], s: f64) -> Result<LdpPoint> {
    LdpEngine::new(p.to_vec(), h.to_vec())?.rate(s)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rates::{closed_form_rate, deterministic_rate, Family};

    fn grid() -> Vec<f64> {
        (1..=600).map(|i| 0.01 * i as f64).collect()
    }

    #[test]
    fn gaussian_cramer() {
        let p = grid();
        let h: Vec<f64> = p.iter().map(|q| q * q / 2.0).collect();
        let r = ldp_from_lyapunov(&p, &h, 1.0).unwrap();
        assert!((r.rate - 0.5).abs() < 1e-10 && (r.q - 1.0).abs() < 1e-10);
    }

    #[test]
    fn cubic_reproduces_deterministic_rate() {
        let p = grid();
        let h: Vec<f64> = p.iter().map(|q| q * q * q / 24.0).collect();
        let r = ldp_from_lyapunov(&p, &h, 1.0).unwrap();
        assert!((r.rate - deterministic_rate(1.0)).abs() < 1e-4);
    }

    #[test]
    fn brownian_zero_drift() {
        let p = grid();
        let h: Vec<f64> = p
            .iter()
            .map(|q| q * q * q / 24.0 + q / 2.0 * (q / 2.0).powi(2))
            .collect();
        let r = ldp_from_lyapunov(&p, &h, 1.0).unwrap();
        let exact = closed_form_rate(1.0, Family::Brownian { a: 0.0 }).unwrap();
        assert!((r.rate - exact).abs() < 1e-4);
    }

    #[test]
    fn kinked_brownian_slope_is_continuous() {
        let p = grid();
        let a = -1.0;
        let h: Vec<f64> = p
            .iter()
            .map(|&q| q * q * q / 24.0 + crate::rates::g_brownian(q, a, a).unwrap())
            .collect();
        let eng = LdpEngine::new(p, h).unwrap();
        // g is C¹ but not C² at p = 2; h' stays continuous
        // a jump in h' would show up as a difference quotient of order 1/step = 100
        assert!(eng.max_slope_jump() < 10.0);
        assert!(
            eng.kinks.iter().any(|k| (k - 2.0).abs() < 0.03),
            "{:?}",
            eng.kinks
        );
        for s in [0.3, 0.5, 1.5] {
            let r = eng.rate(s).unwrap();
            let exact = closed_form_rate(s, Family::Brownian { a }).unwrap();
            assert!((r.rate - exact).abs() < 1e-4, "s={s}");
        }
    }

    #[test]
    fn rejects_non_monotone_and_out_of_domain() {
        let p = grid();
        let h: Vec<f64> = p.iter().map(|q| q.sin()).collect();
        assert!(matches!(
            LdpEngine::new(p.clone(), h),
            Err(Error::NonMonotoneSlope { .. })
        ));
        let h: Vec<f64> = p.iter().map(|q| q * q / 2.0 + 0.3 * q).collect();
        let eng = LdpEngine::new(p, h).unwrap();
        assert!((eng.zeta() - 0.3).abs() < 1e-9);
        assert!(matches!(eng.rate(0.2), Err(Error::OutOfDomain { .. })));
        assert!(eng.rate(100.0).is_err());
    }
}
