//! The spatial variational problem behind `g(p)`:
//!
//! ```text
//! φ_t(x) = −p x² / (2t) + log M_p(t, x),     g(p) = lim_{t→∞} (1/t) sup_x φ_t(x)
//! ```
//!
//! together with the ω-slack near-argmax set and its farthest point.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::numerics::{bisect, extrapolate_limit, golden_max};
use crate::profiles::Profile;

/// Points in the seeding mesh for the global search.
pub const SEARCH_MESH: usize = 4096;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SupResult {
    pub value: f64,
    pub argmax: f64,
    /// Symmetric interval `[-w, w]` that was searched.
    pub bracket: (f64, f64),
    pub p: f64,
    pub t: f64,
    /// True when the value comes from a closed form.
    pub exact: bool,
}

/// `φ_t(x)` for the given profile.
pub fn objective(profile: &Profile, p: f64, t: f64) -> impl Fn(f64) -> f64 + '_ {
    move |x| -p * x * x / (2.0 * t) + profile.log_mgf_unchecked(p, t, x)
}

/// Half-width `max(10, 4 C t / (p (1 − α)))` of the search interval, from
/// the profile's growth envelope. Beyond it `φ_t` stays below `φ_t(0)`.
pub fn search_half_width(profile: &Profile, p: f64, t: f64) -> Result<f64> {
    check_pt(p, t)?;
    let env = profile.envelope(p);
    if env.alpha >= 1.0 {
        return Err(invalid(
            "growth envelope has alpha >= 1; the sup may be infinite",
        ));
    }
    Ok((4.0 * env.c_lin * t / (p * (1.0 - env.alpha))).max(10.0))
}

fn check_pt(p: f64, t: f64) -> Result<()> {
    if !(p > 0.0) {
        return Err(invalid(format!("p must be positive, got {p}")));
    }
    if !(t > 0.0) {
        return Err(invalid(format!("t must be positive, got {t}")));
    }
    Ok(())
}

/// Closed-form sup for the Brownian law: on each half-line `φ_t` is the
/// concave quadratic `−p y²/(2t) + p (p/2 + a_±) y`, maximized at
/// `y = t (p/2 + a_±)` when that is positive.
fn brownian_sup(a_plus: f64, a_minus: f64, p: f64, t: f64) -> (f64, f64) {
    let side = |a: f64| {
        let c = p / 2.0 + a;
        if c > 0.0 {
            (p * t * c * c / 2.0, t * c)
        } else {
            (0.0, 0.0)
        }
    };
    let (vp, xp) = side(a_plus);
    let (vm, xm) = side(a_minus);
    if vp >= vm {
        (vp, xp)
    } else {
        (vm, -xm)
    }
}

/// All local maxima of `f` on `[-w, w]`, seeded on a uniform mesh and
/// refined by golden-section search inside each seeding cell.
pub fn local_maxima<F: Fn(f64) -> f64>(f: &F, w: f64, mesh: usize) -> Vec<(f64, f64)> {
    let xs: Vec<f64> = (0..=mesh)
        .map(|i| -w + 2.0 * w * i as f64 / mesh as f64)
        .collect();
    let vs: Vec<f64> = xs.iter().map(|&x| f(x)).collect();
    let mut out = Vec::new();
    for i in 0..xs.len() {
        let left = if i > 0 { vs[i - 1] } else { f64::NEG_INFINITY };
        let right = if i + 1 < xs.len() {
            vs[i + 1]
        } else {
            f64::NEG_INFINITY
        };
        if vs[i] >= left && vs[i] >= right {
            let lo = xs[i.saturating_sub(1)];
            let hi = xs[(i + 1).min(xs.len() - 1)];
            let (x, v) = golden_max(f, lo, hi, 1e-12 * w.max(1.0));
            let best = if vs[i] > v { (xs[i], vs[i]) } else { (x, v) };
            out.push(best);
        }
    }
    // x = 0 is a kink for |x|-type profiles; make sure it is seen.
    let v0 = f(0.0);
    if out.iter().all(|m| m.1 < v0) {
        out.push((0.0, v0));
    }
    out
}

/// Global `sup_x φ_t(x)`.
pub fn sup_phi(profile: &Profile, p: f64, t: f64) -> Result<SupResult> {
    let w = search_half_width(profile, p, t)?;
    if let Profile::BrownianDrift { a_plus, a_minus } = *profile {
        let (value, argmax) = brownian_sup(a_plus, a_minus, p, t);
        return Ok(SupResult {
            value,
            argmax,
            bracket: (-w, w),
            p,
            t,
            exact: true,
        });
    }
    // Surface growth violations of checked profiles as errors.
    profile.log_mgf(p, t, w)?;
    profile.log_mgf(p, t, -w)?;
    let f = objective(profile, p, t);
    let maxima = local_maxima(&f, w, SEARCH_MESH);
    let mut best = (0.0, f64::NEG_INFINITY);
    for (x, v) in maxima {
        // prefer the larger value; ties go to the positive side
        if v > best.1 || (v == best.1 && x > best.0) {
            best = (x, v);
        }
    }
    if !best.1.is_finite() {
        return Err(invalid("objective is not finite on the search bracket"));
    }
    Ok(SupResult {
        value: best.1,
        argmax: best.0,
        bracket: (-w, w),
        p,
        t,
        exact: false,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GEstimate {
    pub p: f64,
    pub g: f64,
    /// `(t, sup_x φ_t(x) / t)` for each schedule point.
    pub trace: Vec<(f64, f64)>,
    /// Limits fitted over the last k trace points.
    pub per_window: Vec<(usize, f64)>,
    pub converged: bool,
    pub exact: bool,
}

/// Extrapolated `g(p) = lim (1/t) sup φ_t` over an increasing `t` schedule.
pub fn g_estimate(profile: &Profile, p: f64, t_schedule: &[f64], tol: f64) -> Result<GEstimate> {
    if t_schedule.windows(2).any(|w| !(w[1] > w[0])) || t_schedule.is_empty() {
        return Err(invalid("t schedule must be non-empty and increasing"));
    }
    let mut trace = Vec::with_capacity(t_schedule.len());
    let mut exact = true;
    for &t in t_schedule {
        let s = sup_phi(profile, p, t)?;
        exact &= s.exact;
        trace.push((t, s.value / t));
    }
    let ts: Vec<f64> = trace.iter().map(|v| v.0).collect();
    let ys: Vec<f64> = trace.iter().map(|v| v.1).collect();
    if exact {
        let g = ys[ys.len() - 1];
        let converged = ys.iter().all(|v| (v - g).abs() <= tol);
        return Ok(GEstimate {
            p,
            g,
            trace,
            per_window: vec![],
            converged,
            exact,
        });
    }
    let ex = extrapolate_limit(&ts, &ys, tol);
    Ok(GEstimate {
        p,
        g: ex.limit,
        trace,
        per_window: ex.per_window,
        converged: ex.converged,
        exact,
    })
}

/// The set `{x : φ_t(x) >= sup φ_t − ω}` as disjoint intervals.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaxSet {
    pub intervals: Vec<(f64, f64)>,
    /// Point of the set with the largest `|x|` (positive on ties).
    pub x_extreme: f64,
    pub sup: f64,
    pub omega: f64,
    pub t: f64,
}

impl MaxSet {
    pub fn is_empty(&self) -> bool {
        self.intervals.is_empty()
    }
}

pub fn max_set(profile: &Profile, p: f64, omega: f64, t: f64) -> Result<MaxSet> {
    if !(omega > 0.0) {
        return Err(invalid("omega must be positive"));
    }
    let sup = sup_phi(profile, p, t)?;
    let w = -sup.bracket.0;
    let f = objective(profile, p, t);
    let level = sup.value - omega;

    let mut pts: Vec<f64> = (0..=SEARCH_MESH)
        .map(|i| -w + 2.0 * w * i as f64 / SEARCH_MESH as f64)
        .collect();
    pts.extend(local_maxima(&f, w, SEARCH_MESH).into_iter().map(|m| m.0));
    pts.push(sup.argmax);
    pts.push(0.0);
    pts.sort_by(f64::total_cmp);
    pts.dedup();

    let g = |x: f64| f(x) - level;
    let xtol = 1e-13 * w;
    let mut intervals: Vec<(f64, f64)> = Vec::new();
    let mut i = 0;
    while i < pts.len() {
        if g(pts[i]) < 0.0 {
            i += 1;
            continue;
        }
        let start = i;
        while i + 1 < pts.len() && g(pts[i + 1]) >= 0.0 {
            i += 1;
        }
        let lo = if start == 0 {
            pts[0]
        } else {
            bisect(g, pts[start - 1], pts[start], xtol)
        };
        let hi = if i + 1 == pts.len() {
            pts[i]
        } else {
            bisect(g, pts[i], pts[i + 1], xtol)
        };
        intervals.push((lo, hi));
        i += 1;
    }
    let mut x_extreme = 0.0_f64;
    for &(a, b) in &intervals {
        for x in [a, b] {
            if x.abs() > x_extreme.abs() || (x.abs() == x_extreme.abs() && x > x_extreme) {
                x_extreme = x;
            }
        }
    }
    Ok(MaxSet {
        intervals,
        x_extreme,
        sup: sup.value,
        omega,
        t,
    })
}

/// `|x_extreme(t)| / t` over a schedule, with the first schedule time at
/// which the set was non-empty.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearBoundTrace {
    pub q: f64,
    pub omega: f64,
    pub ratios: Vec<(f64, f64)>,
    pub first_nonempty_t: Option<f64>,
}

pub fn extreme_point_trace(
    profile: &Profile,
    q: f64,
    omega: f64,
    t_schedule: &[f64],
) -> Result<LinearBoundTrace> {
    let mut ratios = Vec::new();
    let mut first_nonempty_t = None;
    for &t in t_schedule {
        let set = max_set(profile, q, omega, t)?;
        if !set.is_empty() && first_nonempty_t.is_none() {
            first_nonempty_t = Some(t);
        }
        ratios.push((t, set.x_extreme.abs() / t));
    }
    Ok(LinearBoundTrace {
        q,
        omega,
        ratios,
        first_nonempty_t,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvexityReport {
    pub passed: bool,
    pub min_second_difference: f64,
    pub min_value: f64,
    /// Indices `i` of triples `(i-1, i, i+1)` with a negative second difference.
    pub concave_at: Vec<usize>,
    pub negative_at: Vec<usize>,
}

/// Checks that samples of `g` are convex (second divided differences
/// `>= -tol`) and non-negative (`>= -tol`).
pub fn check_g_convexity(p: &[f64], g: &[f64], tol: f64) -> Result<ConvexityReport> {
    if p.len() != g.len() || p.len() < 3 {
        return Err(invalid("need at least three (p, g) samples"));
    }
    if p.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(invalid("p grid must be increasing"));
    }
    let mut min_dd = f64::INFINITY;
    let mut concave_at = Vec::new();
    for i in 1..p.len() - 1 {
        let s1 = (g[i] - g[i - 1]) / (p[i] - p[i - 1]);
        let s2 = (g[i + 1] - g[i]) / (p[i + 1] - p[i]);
        let dd = 2.0 * (s2 - s1) / (p[i + 1] - p[i - 1]);
        min_dd = min_dd.min(dd);
        if dd < -tol {
            concave_at.push(i);
        }
    }
    let min_value = g.iter().copied().fold(f64::INFINITY, f64::min);
    let negative_at: Vec<usize> = (0..g.len()).filter(|&i| g[i] < -tol).collect();
    Ok(ConvexityReport {
        passed: concave_at.is_empty() && negative_at.is_empty(),
        min_second_difference: min_dd,
        min_value,
        concave_at,
        negative_at,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::geometric;
    use crate::rates::g_brownian;

    #[test]
    fn brownian_sup_example() {
        let b = Profile::brownian(0.0, 0.0).unwrap();
        let s = sup_phi(&b, 1.0, 10.0).unwrap();
        assert!((s.value - 1.25).abs() < 1e-15);
        assert_eq!(s.argmax, 5.0);
        assert!(s.exact);
    }

    #[test]
    fn brownian_closed_form_matches_mesh_search() {
        for (ap, am) in [(0.0, 0.0), (1.0, -2.0), (-0.3, 0.8), (-1.0, -1.0)] {
            let b = Profile::brownian(ap, am).unwrap();
            for (p, t) in [(1.0, 10.0), (2.5, 3.0), (0.5, 40.0)] {
                let exact = sup_phi(&b, p, t).unwrap();
                let f = objective(&b, p, t);
                let w = -exact.bracket.0;
                let num = local_maxima(&f, w, SEARCH_MESH)
                    .into_iter()
                    .fold(f64::NEG_INFINITY, |m, v| m.max(v.1));
                assert!(
                    (num - exact.value).abs() < 1e-9 * (1.0 + exact.value),
                    "{ap} {am} {p} {t}"
                );
            }
        }
    }

    #[test]
    fn flat_sup_is_zero() {
        let s = sup_phi(&Profile::flat(), 3.0, 7.0).unwrap();
        assert_eq!(s.value, 0.0);
        assert_eq!(s.argmax, 0.0);
    }

    #[test]
    fn power_law_sup_against_dense_mesh() {
        let prof = Profile::power_law(0.5, 1.0).unwrap();
        let s = sup_phi(&prof, 1.0, 100.0).unwrap();
        let w = -s.bracket.0;
        let f = objective(&prof, 1.0, 100.0);
        let n = 1_000_000;
        let brute = (0..=n)
            .map(|i| f(-w + 2.0 * w * i as f64 / n as f64))
            .fold(f64::NEG_INFINITY, f64::max);
        assert!(s.value >= brute - 1e-12);
        assert!((s.value - brute).abs() < 1e-8, "{} vs {}", s.value, brute);
        // stationary point x^{3/2} = 50
        assert!((s.argmax - 50f64.powf(2.0 / 3.0)).abs() < 1e-5);
    }

    #[test]
    fn sup_dominates_random_points() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(9);
        let profiles = [
            Profile::flat(),
            Profile::sine(2.0, 1.3),
            Profile::power_law(0.25, 2.0).unwrap(),
            Profile::power_law(0.75, 1.0).unwrap(),
            Profile::parabolic(0.5).unwrap(),
            Profile::brownian(0.5, -1.0).unwrap(),
        ];
        for prof in &profiles {
            for (p, t) in [(0.5, 2.0), (1.0, 10.0), (3.0, 50.0)] {
                let s = sup_phi(prof, p, t).unwrap();
                let f = objective(prof, p, t);
                for _ in 0..10_000 {
                    let x = rng.random_range(s.bracket.0..s.bracket.1);
                    assert!(s.value >= f(x) - 1e-9, "{prof:?} p={p} t={t} x={x}");
                }
            }
        }
    }

    #[test]
    fn g_estimates() {
        let sched = geometric(10.0, 1e4, 7);
        let b = Profile::brownian(1.0, 0.0).unwrap();
        let e = g_estimate(&b, 1.0, &sched, 1e-3).unwrap();
        assert!((e.g - 1.125).abs() < 1e-15);
        assert!(e.trace.iter().all(|v| (v.1 - 1.125).abs() < 1e-15));
        let e = g_estimate(&Profile::parabolic(0.5).unwrap(), 1.0, &sched, 1e-3).unwrap();
        assert!(e.g.abs() < 1e-12);
        let e = g_estimate(&Profile::sine(1.0, 2.0), 2.0, &sched, 1e-3).unwrap();
        assert!(e.g.abs() < 1e-3, "{e:?}");
        let e = g_estimate(
            &Profile::power_law(0.5, 1.0).unwrap(),
            1.0,
            &geometric(10.0, 1e5, 9),
            1e-3,
        )
        .unwrap();
        assert!(e.g.abs() < 1e-3 && e.converged, "{e:?}");
    }

    #[test]
    fn brownian_g_equals_closed_form() {
        for (ap, am) in [(0.0, 0.0), (1.0, 0.0), (-1.0, -1.0), (0.5, 2.0)] {
            let b = Profile::brownian(ap, am).unwrap();
            for p in [0.25, 1.0, 2.0, 3.5] {
                let e = g_estimate(&b, p, &[10.0, 100.0, 1000.0], 1e-3).unwrap();
                let exact = g_brownian(p, ap, am).unwrap();
                assert!(
                    (e.g - exact).abs() <= 1e-15 * exact.max(1.0),
                    "{ap} {am} {p}"
                );
            }
        }
    }

    #[test]
    fn max_set_examples() {
        let b = Profile::brownian(0.0, 0.0).unwrap();
        let m = max_set(&b, 1.0, 1e-10, 10.0).unwrap();
        assert_eq!(m.intervals.len(), 2);
        assert!((m.x_extreme - 5.0).abs() < 1e-3);
        for (a, c) in &m.intervals {
            assert!((c - a) < 1e-3);
        }
        let flat = max_set(&Profile::flat(), 1.0, 0.5, 1.0).unwrap();
        assert_eq!(flat.intervals.len(), 1);
        assert!(
            (flat.intervals[0].0 + 1.0).abs() < 1e-9 && (flat.intervals[0].1 - 1.0).abs() < 1e-9
        );
        assert!((flat.x_extreme - 1.0).abs() < 1e-9);
        assert!(max_set(&b, 1.0, 0.0, 1.0).is_err());
    }

    #[test]
    fn extreme_point_grows_at_most_linearly() {
        let prof = Profile::power_law(0.5, 1.0).unwrap();
        let sched = [10.0, 100.0, 1000.0];
        for q in [0.6, 1.0, 1.9] {
            let tr = extreme_point_trace(&prof, q, 0.5, &sched).unwrap();
            assert_eq!(tr.first_nonempty_t, Some(10.0));
            assert!(tr.ratios.iter().all(|r| r.1 <= 5.0), "{tr:?}");
        }
    }

    #[test]
    fn convexity_reports() {
        let p: Vec<f64> = (1..=8).map(|i| 0.5 * i as f64).collect();
        let cubic: Vec<f64> = p.iter().map(|q| q / 2.0 * (q / 2.0).powi(2)).collect();
        assert!(check_g_convexity(&p, &cubic, 1e-12).unwrap().passed);
        assert!(check_g_convexity(&p, &[0.0; 8], 1e-12).unwrap().passed);
        let concave: Vec<f64> = p.iter().map(|q| q.sqrt()).collect();
        let r = check_g_convexity(&p, &concave, 1e-12).unwrap();
        assert!(!r.passed && !r.concave_at.is_empty());
        assert!(check_g_convexity(&p[..2], &cubic[..2], 0.0).is_err());
    }

    #[test]
    fn brownian_kinked_g_is_convex() {
        let b = Profile::brownian(-1.0, -1.0).unwrap();
        let p: Vec<f64> = (0..=35).map(|i| 0.5 + 0.1 * i as f64).collect();
        let g: Vec<f64> = p
            .iter()
            .map(|&q| g_estimate(&b, q, &[10.0, 100.0, 1000.0], 1e-3).unwrap().g)
            .collect();
        assert!(check_g_convexity(&p, &g, 1e-12).unwrap().passed);
        assert!(g.iter().all(|v| *v >= 0.0));
    }
}
