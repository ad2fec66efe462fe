//! Moment Lyapunov exponents `Lya_p = (p³ − p)/24 + g(p)` and upper-tail rate
//! functions, obtained as the Legendre dual
//!
//! ```text
//! rate(s) = sup_{p ≥ 0} { s p − p³/24 − g(p) },      s > ζ = lim_{p→0} g'(p).
//! ```
//!
//! Rates are reported as positive numbers; the tail probability decays like
//! `exp(−t · rate(s))`.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::numerics::{golden_max, Pchip};

pub mod cramer;
pub mod ldp;

pub use cramer::{cramer_toy_validate, CramerPoint, CramerReport};
pub use ldp::{ldp_from_lyapunov, LdpEngine, LdpPoint};

/// `(p/2) max{p/2 + a, 0}²` with `a = max{a_plus, a_minus}`.
pub fn g_brownian(p: f64, a_plus: f64, a_minus: f64) -> Result<f64> {
    if !(p > 0.0) {
        return Err(invalid(format!("p must be positive, got {p}")));
    }
    let c = (p / 2.0 + a_plus.max(a_minus)).max(0.0);
    Ok(p / 2.0 * c * c)
}

fn g_brownian_derivative(p: f64, a: f64) -> f64 {
    let c = p / 2.0 + a;
    if c > 0.0 {
        0.5 * c * c + 0.5 * p * c
    } else {
        0.0
    }
}

/// Sampled `g` on an increasing p grid, interpolated monotonically.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GTable {
    pub p: Vec<f64>,
    pub g: Vec<f64>,
}

/// Where the initial-data term `g` comes from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case")]
pub enum GSource {
    ClosedFormZero,
    ClosedFormBrownian { a_plus: f64, a_minus: f64 },
    Numeric(GTable),
}

impl GSource {
    pub fn brownian(a: f64) -> Self {
        GSource::ClosedFormBrownian {
            a_plus: a,
            a_minus: a,
        }
    }

    pub fn table(p: Vec<f64>, g: Vec<f64>) -> Result<Self> {
        if p.len() != g.len() || p.len() < 3 {
            return Err(invalid("g table needs at least three matching samples"));
        }
        if p.windows(2).any(|w| !(w[1] > w[0])) || p[0] <= 0.0 {
            return Err(invalid("g table p grid must be positive and increasing"));
        }
        Ok(GSource::Numeric(GTable { p, g }))
    }

    pub fn value(&self, p: f64) -> f64 {
        match self {
            GSource::ClosedFormZero => 0.0,
            GSource::ClosedFormBrownian { a_plus, a_minus } => {
                let c = (p / 2.0 + a_plus.max(*a_minus)).max(0.0);
                p / 2.0 * c * c
            }
            GSource::Numeric(tab) => table_eval(tab, p),
        }
    }

    pub fn derivative(&self, p: f64) -> f64 {
        match self {
            GSource::ClosedFormZero => 0.0,
            GSource::ClosedFormBrownian { a_plus, a_minus } => {
                g_brownian_derivative(p, a_plus.max(*a_minus))
            }
            GSource::Numeric(_) => {
                let h = 1e-5 * p.max(1e-3);
                let lo = (p - h).max(0.0);
                (self.value(p + h) - self.value(lo)) / (p + h - lo)
            }
        }
    }

    /// `ζ = lim_{p→0} g'(p)`. For tables, the slope at 0 of the cubic
    /// through the four smallest grid points.
    pub fn zeta(&self) -> f64 {
        match self {
            GSource::ClosedFormZero => 0.0,
            GSource::ClosedFormBrownian { a_plus, a_minus } => {
                let a = a_plus.max(*a_minus);
                if a > 0.0 {
                    a * a / 2.0
                } else {
                    0.0
                }
            }
            GSource::Numeric(tab) => ldp::slope_at_zero(&tab.p, &tab.g),
        }
    }
}

fn table_eval(tab: &GTable, p: f64) -> f64 {
    let n = tab.p.len();
    if p <= tab.p[0] {
        // linear continuation toward the origin
        let s = (tab.g[1] - tab.g[0]) / (tab.p[1] - tab.p[0]);
        return tab.g[0] + s * (p - tab.p[0]);
    }
    if p >= tab.p[n - 1] {
        let s = (tab.g[n - 1] - tab.g[n - 2]) / (tab.p[n - 1] - tab.p[n - 2]);
        return tab.g[n - 1] + s * (p - tab.p[n - 1]);
    }
    Pchip::new(tab.p.clone(), tab.g.clone()).eval(p)
}

/// `(p³ − p)/24 + g(p)`.
pub fn lyapunov(p: f64, g: &GSource) -> Result<f64> {
    if !(p > 0.0) {
        return Err(invalid(format!("p must be positive, got {p}")));
    }
    Ok((p * p * p - p) / 24.0 + g.value(p))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LyapunovCurve {
    /// `(p, Lya_p, g(p))`
    pub entries: Vec<(f64, f64, f64)>,
    pub g_source: GSource,
}

pub fn lyapunov_curve(p_grid: &[f64], g: &GSource) -> Result<LyapunovCurve> {
    let entries = p_grid
        .iter()
        .map(|&p| Ok((p, lyapunov(p, g)?, g.value(p))))
        .collect::<Result<_>>()?;
    Ok(LyapunovCurve {
        entries,
        g_source: g.clone(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RatePoint {
    pub s: f64,
    pub rate: f64,
    pub p_star: f64,
}

/// `sup_{p ≥ 0} { s p − p³/24 − g(p) }` and its maximizer, for `s > ζ`.
///
/// The objective is concave; the upper end of the bracket is doubled until
/// the derivative `s − p²/8 − g'(p)` turns negative, then golden-section
/// search narrows the maximizer to 1e-10.
pub fn rate_function(s: f64, g: &GSource, zeta: f64) -> Result<RatePoint> {
    if !(s > zeta) {
        return Err(Error::OutOfDomain { s, zeta });
    }
    let f = |p: f64| s * p - p * p * p / 24.0 - g.value(p);
    let df = |p: f64| s - p * p / 8.0 - g.derivative(p);
    let mut hi = 1.0;
    while df(hi) >= 0.0 {
        hi *= 2.0;
        if hi > 1e12 {
            return Err(invalid("rate objective has no finite maximizer"));
        }
    }
    let (p_star, value) = golden_max(f, 0.0, hi, 1e-10);
    Ok(RatePoint {
        s,
        rate: value,
        p_star,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateCurve {
    pub entries: Vec<RatePoint>,
    pub zeta: f64,
    pub g_source: GSource,
}

impl RateCurve {
    /// Smallest second divided difference of the tabulated rates and the
    /// smallest first difference; both should be `>= -tol`.
    pub fn shape_margins(&self) -> (f64, f64) {
        let e = &self.entries;
        let mut min_dd = f64::INFINITY;
        let mut min_d = f64::INFINITY;
        for w in e.windows(2) {
            min_d = min_d.min(w[1].rate - w[0].rate);
        }
        for w in e.windows(3) {
            let s1 = (w[1].rate - w[0].rate) / (w[1].s - w[0].s);
            let s2 = (w[2].rate - w[1].rate) / (w[2].s - w[1].s);
            min_dd = min_dd.min(2.0 * (s2 - s1) / (w[2].s - w[0].s));
        }
        (min_dd, min_d)
    }
}

/// Tabulates the rate function on `s_grid`, skipping points with `s <= ζ`.
pub fn rate_curve(s_grid: &[f64], g: &GSource) -> Result<RateCurve> {
    let zeta = g.zeta();
    let entries = s_grid
        .iter()
        .filter(|&&s| s > zeta)
        .map(|&s| rate_function(s, g, zeta))
        .collect::<Result<_>>()?;
    Ok(RateCurve {
        entries,
        zeta,
        g_source: g.clone(),
    })
}

/// Initial-data families with explicit rate functions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum Family {
    Deterministic,
    Brownian { a: f64 },
}

impl Family {
    pub fn g_source(&self) -> GSource {
        match *self {
            Family::Deterministic => GSource::ClosedFormZero,
            Family::Brownian { a } => GSource::brownian(a),
        }
    }
}

/// `(4√2/3) s^{3/2}`: the rate for `g ≡ 0`.
pub fn deterministic_rate(s: f64) -> f64 {
    4.0 * std::f64::consts::SQRT_2 / 3.0 * s.powf(1.5)
}

/// `(2√2/3) s^{3/2} − s a + a³/6`: the Brownian rate on `s >= a²/2`.
pub fn brownian_rate_upper(s: f64, a: f64) -> f64 {
    2.0 * std::f64::consts::SQRT_2 / 3.0 * s.powf(1.5) - s * a + a * a * a / 6.0
}

/// Exact rate for the family. For Brownian data with `a < 0` the branch is
/// picked by comparing `s` with `a²/2`.
pub fn closed_form_rate(s: f64, family: Family) -> Result<f64> {
    match family {
        Family::Deterministic => {
            if !(s > 0.0) {
                return Err(Error::OutOfDomain { s, zeta: 0.0 });
            }
            Ok(deterministic_rate(s))
        }
        Family::Brownian { a } => {
            let edge = a * a / 2.0;
            if a >= 0.0 {
                if !(s > edge) {
                    return Err(Error::OutOfDomain { s, zeta: edge });
                }
                Ok(brownian_rate_upper(s, a))
            } else if !(s > 0.0) {
                Err(Error::OutOfDomain { s, zeta: 0.0 })
            } else if s <= edge {
                Ok(deterministic_rate(s))
            } else {
                Ok(brownian_rate_upper(s, a))
            }
        }
    }
}
