//! Small numerical kernels shared by the variational, verification and rate
//! modules: golden-section search, Gauss–Kronrod quadrature in the log
//! domain, power-law extrapolation, monotone cubic interpolation and a few
//! least-squares helpers.

use serde::{Deserialize, Serialize};

/// 1/φ where φ is the golden ratio.
const INV_PHI: f64 = 0.618_033_988_749_894_9;

/// Maximizes `f` on `[lo, hi]`, assuming it is unimodal there.
///
/// Returns `(argmax, value)`. Terminates when the bracket is narrower than
/// `xtol` (absolute, floored at a few ulps of the endpoints).
pub fn golden_max<F>(f: F, mut lo: f64, mut hi: f64, xtol: f64) -> (f64, f64)
where
    F: Fn(f64) -> f64,
{
    if hi < lo {
        std::mem::swap(&mut lo, &mut hi);
    }
    let mut x1 = hi - INV_PHI * (hi - lo);
    let mut x2 = lo + INV_PHI * (hi - lo);
    let mut f1 = f(x1);
    let mut f2 = f(x2);
    for _ in 0..400 {
        let scale = lo.abs().max(hi.abs()).max(1.0);
        if hi - lo <= xtol.max(4.0 * f64::EPSILON * scale) {
            break;
        }
        if f1 < f2 {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + INV_PHI * (hi - lo);
            f2 = f(x2);
        } else {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - INV_PHI * (hi - lo);
            f1 = f(x1);
        }
    }
    // Endpoints can win for monotone pieces.
    let mut best = if f1 >= f2 { (x1, f1) } else { (x2, f2) };
    for x in [lo, hi] {
        let v = f(x);
        if v > best.1 {
            best = (x, v);
        }
    }
    best
}

/// Bisection for a sign change of `f` on `[a, b]`. `f(a)` and `f(b)` must
/// have opposite signs (zero counts as either).
pub fn bisect<F>(f: F, mut a: f64, mut b: f64, xtol: f64) -> f64
where
    F: Fn(f64) -> f64,
{
    let mut fa = f(a);
    for _ in 0..200 {
        if (b - a).abs() <= xtol {
            break;
        }
        let m = 0.5 * (a + b);
        let fm = f(m);
        if (fm <= 0.0) == (fa <= 0.0) {
            a = m;
            fa = fm;
        } else {
            b = m;
        }
    }
    0.5 * (a + b)
}

// Gauss–Kronrod 7/15 nodes and weights on [-1, 1].
const GK_NODES: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const K15_WEIGHTS: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];
const G7_WEIGHTS: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

fn gk15<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut kronrod = K15_WEIGHTS[7] * fc;
    let mut gauss = G7_WEIGHTS[3] * fc;
    for (i, &node) in GK_NODES.iter().take(7).enumerate() {
        let s = f(c - h * node) + f(c + h * node);
        kronrod += K15_WEIGHTS[i] * s;
        if i % 2 == 1 {
            gauss += G7_WEIGHTS[i / 2] * s;
        }
    }
    (kronrod * h, ((kronrod - gauss) * h).abs())
}

/// Adaptive Gauss–Kronrod integration of `f` over `[a, b]` to relative
/// tolerance `rtol`.
pub fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, rtol: f64) -> f64 {
    if a == b {
        return 0.0;
    }
    integrate_pieces(&f, &[a, b], rtol)
}

const MAX_INTERVALS: usize = 20_000;

/// Globally adaptive integration over consecutive pieces `pts`: the
/// interval with the largest error estimate is bisected until the summed
/// error is below `rtol` times the summed value.
fn integrate_pieces<F: Fn(f64) -> f64>(f: &F, pts: &[f64], rtol: f64) -> f64 {
    struct Piece {
        err: f64,
        lo: f64,
        hi: f64,
        val: f64,
    }
    impl PartialEq for Piece {
        fn eq(&self, o: &Self) -> bool {
            self.err.total_cmp(&o.err).is_eq()
        }
    }
    impl Eq for Piece {}
    impl PartialOrd for Piece {
        fn partial_cmp(&self, o: &Self) -> Option<std::cmp::Ordering> {
            Some(self.cmp(o))
        }
    }
    impl Ord for Piece {
        fn cmp(&self, o: &Self) -> std::cmp::Ordering {
            self.err.total_cmp(&o.err)
        }
    }
    let piece = |lo: f64, hi: f64| {
        let (val, err) = gk15(f, lo, hi);
        Piece { err, lo, hi, val }
    };
    let mut heap: std::collections::BinaryHeap<Piece> =
        pts.windows(2).map(|w| piece(w[0], w[1])).collect();
    let mut total: f64 = heap.iter().map(|p| p.val).sum();
    let mut err: f64 = heap.iter().map(|p| p.err).sum();
    for _ in 0..MAX_INTERVALS {
        if err <= rtol * total.abs() {
            break;
        }
        let Some(worst) = heap.pop() else { break };
        let mid = 0.5 * (worst.lo + worst.hi);
        if mid == worst.lo || mid == worst.hi {
            err -= worst.err;
            heap.push(Piece { err: 0.0, ..worst });
            continue;
        }
        let (l, r) = (piece(worst.lo, mid), piece(mid, worst.hi));
        total += l.val + r.val - worst.val;
        err += l.err + r.err - worst.err;
        heap.push(l);
        heap.push(r);
    }
    // re-sum to shed drift from the running updates
    heap.iter().map(|p| p.val).sum()
}

/// `log ∫ exp(psi(x)) dx` over `[a, b]`, with the integrand shifted by
/// `psi_peak` to keep it in range. `breaks` are interior kink or peak
/// locations used to split the domain; each resulting segment is further
/// cut into equal pieces so that narrow peaks near an end are resolved.
pub fn log_integrate<F: Fn(f64) -> f64>(
    psi: F,
    a: f64,
    b: f64,
    psi_peak: f64,
    breaks: &[f64],
    rtol: f64,
) -> f64 {
    const PIECES: usize = 32;
    let mut cuts: Vec<f64> = breaks.iter().copied().filter(|&x| x > a && x < b).collect();
    cuts.push(a);
    cuts.push(b);
    cuts.sort_by(f64::total_cmp);
    cuts.dedup();
    let mut pts = Vec::with_capacity(cuts.len() * PIECES);
    for w in cuts.windows(2) {
        for k in 0..PIECES {
            pts.push(w[0] + (w[1] - w[0]) * k as f64 / PIECES as f64);
        }
    }
    pts.push(b);
    let shifted = |x: f64| (psi(x) - psi_peak).exp();
    psi_peak + integrate_pieces(&shifted, &pts, rtol).ln()
}

/// Upper tail of the standard normal, `P(N(0,1) > u)`.
pub fn normal_sf(u: f64) -> f64 {
    0.5 * libm::erfc(u / std::f64::consts::SQRT_2)
}

/// `log P(N(0,1) > u)`, accurate far into the tail.
pub fn log_normal_sf(u: f64) -> f64 {
    if u < 30.0 {
        return normal_sf(u).ln();
    }
    // Asymptotic series; at u >= 30 three terms are exact to double precision.
    let u2 = u * u;
    -0.5 * u2 - u.ln() - 0.5 * (2.0 * std::f64::consts::PI).ln()
        + (1.0 - 1.0 / u2 + 3.0 / (u2 * u2)).ln()
}

/// Ordinary least squares line through `(x, y)`: returns `(intercept, slope)`.
pub fn linear_fit(x: &[f64], y: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|v| (v - mx).powi(2)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    (my - slope * mx, slope)
}

/// Least-squares polynomial of the given degree; coefficients in increasing
/// powers. Solved through the normal equations, which is fine for the
/// degree <= 3 fits used here.
pub fn poly_fit(x: &[f64], y: &[f64], degree: usize) -> Vec<f64> {
    let m = degree + 1;
    let mut a = vec![vec![0.0; m + 1]; m];
    for (&xi, &yi) in x.iter().zip(y) {
        let mut pows = vec![1.0; 2 * m];
        for k in 1..2 * m {
            pows[k] = pows[k - 1] * xi;
        }
        for r in 0..m {
            for c in 0..m {
                a[r][c] += pows[r + c];
            }
            a[r][m] += pows[r] * yi;
        }
    }
    // Gaussian elimination with partial pivoting.
    for col in 0..m {
        let piv = (col..m)
            .max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))
            .unwrap_or(col);
        a.swap(col, piv);
        let d = a[col][col];
        if d == 0.0 {
            continue;
        }
        for r in 0..m {
            if r != col {
                let factor = a[r][col] / d;
                for c in col..=m {
                    a[r][c] -= factor * a[col][c];
                }
            }
        }
    }
    (0..m)
        .map(|i| {
            if a[i][i] != 0.0 {
                a[i][m] / a[i][i]
            } else {
                0.0
            }
        })
        .collect()
}

/// Result of fitting `y(t) = limit + b * t^(-gamma)` to a trace.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerFit {
    pub limit: f64,
    pub amplitude: f64,
    pub gamma: f64,
    pub rss: f64,
}

fn fit_fixed_gamma(t: &[f64], y: &[f64], gamma: f64) -> PowerFit {
    let u: Vec<f64> = t.iter().map(|v| v.powf(-gamma)).collect();
    let (limit, amplitude) = linear_fit(&u, y);
    let rss = u
        .iter()
        .zip(y)
        .map(|(ui, yi)| (yi - limit - amplitude * ui).powi(2))
        .sum();
    PowerFit {
        limit,
        amplitude,
        gamma,
        rss,
    }
}

/// Fits `y = limit + b t^(-gamma)` by least squares, with `gamma` searched
/// over `(0, 4]` (profiled on the linear parameters). Traces that are
/// constant to rounding return that constant with zero amplitude.
pub fn fit_power_tail(t: &[f64], y: &[f64]) -> PowerFit {
    let spread = y
        .iter()
        .fold(0.0_f64, |m, v| m.max((v - y[y.len() - 1]).abs()));
    let scale = y.iter().fold(1e-300_f64, |m, v| m.max(v.abs()));
    if spread <= 1e-13 * scale.max(1.0) {
        return PowerFit {
            limit: y[y.len() - 1],
            amplitude: 0.0,
            gamma: 0.0,
            rss: 0.0,
        };
    }
    // Coarse scan of log(gamma), then golden refinement around the best cell.
    let grid: Vec<f64> = (0..=120)
        .map(|i| (-4.0 + 5.4 * i as f64 / 120.0).exp())
        .collect();
    let mut best_i = 0;
    let mut best = f64::INFINITY;
    for (i, &g) in grid.iter().enumerate() {
        let r = fit_fixed_gamma(t, y, g).rss;
        if r < best {
            best = r;
            best_i = i;
        }
    }
    let lo = grid[best_i.saturating_sub(1)].ln();
    let hi = grid[(best_i + 1).min(grid.len() - 1)].ln();
    let (lg, _) = golden_max(|lg| -fit_fixed_gamma(t, y, lg.exp()).rss, lo, hi, 1e-10);
    fit_fixed_gamma(t, y, lg.exp())
}

/// Extrapolated limit of a trace `y(t)` and whether it is stable.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Extrapolation {
    pub limit: f64,
    /// Limits fitted over the last k points for each k tried.
    pub per_window: Vec<(usize, f64)>,
    pub converged: bool,
}

/// Extrapolates `y(t) -> limit` as `t -> inf` by fitting a power tail over
/// the last `k` points for `k` in {3, 4, 5} (as many as the trace allows).
/// Declares convergence when every window's limit agrees within `tol`.
pub fn extrapolate_limit(t: &[f64], y: &[f64], tol: f64) -> Extrapolation {
    let n = t.len();
    if n < 3 {
        let limit = y.last().copied().unwrap_or(f64::NAN);
        return Extrapolation {
            limit,
            per_window: vec![],
            converged: false,
        };
    }
    let per_window: Vec<(usize, f64)> = (3..=5.min(n))
        .map(|k| (k, fit_power_tail(&t[n - k..], &y[n - k..]).limit))
        .collect();
    let lo = per_window.iter().map(|w| w.1).fold(f64::INFINITY, f64::min);
    let hi = per_window
        .iter()
        .map(|w| w.1)
        .fold(f64::NEG_INFINITY, f64::max);
    let limit = per_window.last().map(|w| w.1).unwrap_or(f64::NAN);
    Extrapolation {
        limit,
        converged: (hi - lo) <= tol && limit.is_finite(),
        per_window,
    }
}

/// Monotone piecewise-cubic Hermite interpolant (Fritsch–Carlson).
#[derive(Debug, Clone)]
pub struct Pchip {
    x: Vec<f64>,
    y: Vec<f64>,
    d: Vec<f64>,
}

impl Pchip {
    /// `x` must be strictly increasing with at least two points.
    pub fn new(x: Vec<f64>, y: Vec<f64>) -> Self {
        let n = x.len();
        let h: Vec<f64> = x.windows(2).map(|w| w[1] - w[0]).collect();
        let delta: Vec<f64> = (0..n - 1).map(|i| (y[i + 1] - y[i]) / h[i]).collect();
        let mut d = vec![0.0; n];
        if n == 2 {
            d[0] = delta[0];
            d[1] = delta[0];
        } else {
            for i in 1..n - 1 {
                if delta[i - 1] * delta[i] <= 0.0 {
                    d[i] = 0.0;
                } else {
                    let w1 = 2.0 * h[i] + h[i - 1];
                    let w2 = h[i] + 2.0 * h[i - 1];
                    d[i] = (w1 + w2) / (w1 / delta[i - 1] + w2 / delta[i]);
                }
            }
            d[0] = Self::end_slope(h[0], h[1], delta[0], delta[1]);
            d[n - 1] = Self::end_slope(h[n - 2], h[n - 3], delta[n - 2], delta[n - 3]);
        }
        Self { x, y, d }
    }

    fn end_slope(h0: f64, h1: f64, d0: f64, d1: f64) -> f64 {
        let mut s = ((2.0 * h0 + h1) * d0 - h0 * d1) / (h0 + h1);
        if s.signum() != d0.signum() {
            s = 0.0;
        } else if d0.signum() != d1.signum() && s.abs() > 3.0 * d0.abs() {
            s = 3.0 * d0;
        }
        s
    }

    pub fn domain(&self) -> (f64, f64) {
        (self.x[0], self.x[self.x.len() - 1])
    }

    pub fn eval(&self, t: f64) -> f64 {
        let n = self.x.len();
        let i = match self.x.binary_search_by(|v| v.total_cmp(&t)) {
            Ok(i) => i.min(n - 2),
            Err(0) => 0,
            Err(i) => (i - 1).min(n - 2),
        };
        let h = self.x[i + 1] - self.x[i];
        let s = (t - self.x[i]) / h;
        hermite(
            self.y[i],
            self.y[i + 1],
            self.d[i] * h,
            self.d[i + 1] * h,
            s,
        )
    }
}

/// Cubic Hermite basis on the unit interval; slopes already scaled by the
/// interval width.
pub fn hermite(y0: f64, y1: f64, m0: f64, m1: f64, s: f64) -> f64 {
    let s2 = s * s;
    let s3 = s2 * s;
    (2.0 * s3 - 3.0 * s2 + 1.0) * y0
        + (s3 - 2.0 * s2 + s) * m0
        + (-2.0 * s3 + 3.0 * s2) * y1
        + (s3 - s2) * m1
}

/// Parses `lo:hi:step` into an inclusive arithmetic grid.
pub fn parse_linear_grid(spec: &str) -> Option<Vec<f64>> {
    let parts: Vec<f64> = spec
        .split(':')
        .map(|s| s.trim().parse().ok())
        .collect::<Option<_>>()?;
    match parts.as_slice() {
        [v] => Some(vec![*v]),
        [lo, hi, step] if *step > 0.0 && hi >= lo => {
            let n = ((hi - lo) / step + 1e-9).floor() as usize;
            Some((0..=n).map(|i| lo + i as f64 * step).collect())
        }
        _ => None,
    }
}

/// Parses `geom:lo:hi:n` into `n` geometrically spaced points.
pub fn parse_geom_schedule(spec: &str) -> Option<Vec<f64>> {
    let rest = spec.strip_prefix("geom:")?;
    let parts: Vec<&str> = rest.split(':').collect();
    if parts.len() != 3 {
        return None;
    }
    let lo: f64 = parts[0].parse().ok()?;
    let hi: f64 = parts[1].parse().ok()?;
    let n: usize = parts[2].parse().ok()?;
    if !(lo > 0.0 && hi > lo && n >= 2) {
        return None;
    }
    Some(geometric(lo, hi, n))
}

/// `n` points from `lo` to `hi` inclusive, equally spaced in log.
pub fn geometric(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    let r = (hi / lo).ln() / (n - 1) as f64;
    (0..n).map(|i| lo * (r * i as f64).exp()).collect()
}
