//! Finite-resolution checks of the admissibility conditions on `(g, f_t)`:
//! coherence of the variational limit, the ε-perturbed integral bound,
//! growth and lower bounds on `log M_p`, and pseudo-stationarity of `f_t`
//! on grid cells.
//!
//! Every verdict ships with the numbers it was based on.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::error::{invalid, Result};
use crate::numerics::{bisect, extrapolate_limit, geometric, log_integrate, normal_sf, poly_fit};
use crate::profiles::{check_grid_axioms, GridPoints, Profile};
use crate::rates::g_brownian;
use crate::report::SCHEMA_VERSION;
use crate::rng::{chunks, map_indexed, replica_rng};
use crate::variational::{g_estimate, local_maxima, search_half_width, SEARCH_MESH};

pub use crate::sim::CheckStatus as Status;

pub const HYP_SCHEMA: &str = "kpzlab.hyp";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Condition {
    CoherenceLimit,
    IntegralBound,
    Growth,
    LowerBound,
    PseudoStationarity,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HypEntry {
    pub condition: Condition,
    pub status: Status,
    pub witness: Value,
    /// Choices that the verdict depends on.
    pub notes: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HypReport {
    pub schema: String,
    pub version: u32,
    pub kind: String,
    pub profile: Value,
    pub p: f64,
    pub g_claimed: f64,
    pub entries: Vec<HypEntry>,
    pub status: Status,
}

impl HypReport {
    pub fn entry(&self, c: Condition) -> Option<&HypEntry> {
        self.entries.iter().find(|e| e.condition == c)
    }
}

/// Combined status: any fail, else any inconclusive, else pass.
pub fn combine(statuses: impl IntoIterator<Item = Status>) -> Status {
    let mut out = Status::Pass;
    for s in statuses {
        match s {
            Status::Fail => return Status::Fail,
            Status::Inconclusive => out = Status::Inconclusive,
            Status::Pass => {}
        }
    }
    out
}

/// `sup_{x ∈ [θ_n, θ_{n+1}]} |f_t(x) − f_t(θ_n)|` over sampled points.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TvStatistic {
    pub n: i64,
    pub value: f64,
}

/// Default tolerances; the CLI can override them from the environment.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Tolerances {
    /// Absolute tolerance for limit comparisons.
    pub limit: f64,
    /// Standard errors allowed in Monte Carlo comparisons.
    pub k_sigma: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            limit: 1e-3,
            k_sigma: 3.0,
        }
    }
}

fn ln_add_exp(a: f64, b: f64) -> f64 {
    let m = a.max(b);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + ((a - m).exp() + (b - m).exp()).ln()
}

/// Constants `(C, α)` for the growth check, derived from the profile's
/// envelope `log M_p <= c (1 + |x|) + α₀ p x²/(2t)`.
pub fn default_growth_constants(profile: &Profile, p: f64) -> (f64, f64) {
    let env = profile.envelope(p);
    let c = 2f64.max(env.c_lin.exp()).max(env.c_lin);
    let alpha = if env.alpha > 0.0 {
        0.5 * (1.0 + env.alpha)
    } else {
        0.5
    };
    (c, alpha)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct GrowthWitness {
    c: f64,
    alpha: f64,
    t_list: Vec<f64>,
    mesh: (f64, f64, usize),
    min_margin: f64,
    min_margin_at: (f64, f64),
    violations: usize,
    first_violation: Option<(f64, f64)>,
}

/// Checks `M_p(t, x) <= C (e^{C|x|} + e^{α p x²/(2t)})` in log form on the
/// mesh for each `t`.
pub fn verify_growth(
    profile: &Profile,
    p: f64,
    t_list: &[f64],
    x_mesh: &[f64],
    c: f64,
    alpha: f64,
) -> Result<HypEntry> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(invalid("alpha must lie in (0, 1)"));
    }
    if !(c > 0.0) {
        return Err(invalid("C must be positive"));
    }
    let mut min_margin = f64::INFINITY;
    let mut min_at = (f64::NAN, f64::NAN);
    let mut violations = 0;
    let mut first = None;
    for &t in t_list {
        for &x in x_mesh {
            let lhs = profile.log_mgf(p, t, x)?;
            let rhs = c.ln() + ln_add_exp(c * x.abs(), alpha * p * x * x / (2.0 * t));
            let margin = rhs - lhs;
            if margin < min_margin {
                min_margin = margin;
                min_at = (t, x);
            }
            if !(margin >= -1e-12 * rhs.abs().max(1.0)) {
                violations += 1;
                first.get_or_insert((t, x));
            }
        }
    }
    let lo = x_mesh.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = x_mesh.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    Ok(HypEntry {
        condition: Condition::Growth,
        status: if violations == 0 {
            Status::Pass
        } else {
            Status::Fail
        },
        witness: serde_json::to_value(GrowthWitness {
            c,
            alpha,
            t_list: t_list.to_vec(),
            mesh: (lo, hi, x_mesh.len()),
            min_margin,
            min_margin_at: min_at,
            violations,
            first_violation: first,
        })?,
        notes: vec!["log-domain comparison on a finite mesh".into()],
    })
}

/// Checks `sup_{x ∈ [−L, L]} log M_p(t, x) > −K` for each `t`.
pub fn verify_lower_bound(
    profile: &Profile,
    p: f64,
    t_list: &[f64],
    l: f64,
    k: f64,
) -> Result<HypEntry> {
    if !(l > 0.0 && k > 0.0) {
        return Err(invalid("L and K must be positive"));
    }
    let n = 2000;
    let mut sups = Vec::with_capacity(t_list.len());
    let mut failed_at = None;
    for &t in t_list {
        let mut sup = profile.log_mgf(p, t, 0.0)?;
        for i in 0..=n {
            let x = -l + 2.0 * l * i as f64 / n as f64;
            sup = sup.max(profile.log_mgf(p, t, x)?);
        }
        if !(sup > -k) {
            failed_at.get_or_insert(t);
        }
        sups.push((t, sup));
    }
    Ok(HypEntry {
        condition: Condition::LowerBound,
        status: if failed_at.is_none() {
            Status::Pass
        } else {
            Status::Fail
        },
        witness: json!({"l": l, "k": k, "mesh_points": n + 2, "sup_by_t": sups, "failed_at_t": failed_at}),
        notes: vec![],
    })
}

/// Pseudo-stationarity parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StationarityParams {
    pub t_list: Vec<f64>,
    pub n_range: (i64, i64),
    /// Deviation threshold; `None` selects the profile default.
    pub s0: Option<f64>,
    /// Monte Carlo paths for random profiles.
    pub n_samples: usize,
    /// Mesh points per cell for sampled paths.
    pub cell_mesh: usize,
    /// Offsets above `s0` at which random tails are compared.
    pub s_offsets: Vec<f64>,
    pub seed: u64,
    pub k_sigma: f64,
}

impl Default for StationarityParams {
    fn default() -> Self {
        Self {
            t_list: vec![1.0, 10.0, 100.0, 1000.0],
            n_range: (-50, 50),
            s0: None,
            n_samples: 100_000,
            cell_mesh: 256,
            s_offsets: vec![0.5, 1.0, 2.0, 3.0],
            seed: 1,
            k_sigma: 3.0,
        }
    }
}

/// Default deviation threshold at time `t`.
pub fn default_s0(profile: &Profile, t: f64) -> f64 {
    match profile {
        Profile::Bounded { bound, .. } => 2.0 * bound,
        Profile::PowerLaw { scale, .. } => *scale,
        Profile::Parabolic { .. } => 1.0 / (2.0 * t),
        Profile::BrownianDrift { a_plus, a_minus } => a_plus.abs().max(a_minus.abs()).max(1.0),
        Profile::Custom { growth, .. } => 2.0 * growth.c + 1.0,
    }
}

/// Deterministic TV statistic from 10³ interior points plus the endpoints.
pub fn tv_statistic(profile: &Profile, grid: &GridPoints, n: i64, t: f64) -> Result<TvStatistic> {
    let (a, b) = grid.cell(n);
    let fa = profile
        .value(t, a)?
        .ok_or_else(|| invalid("tv statistic by sampling needs a deterministic profile"))?;
    let mut value: f64 = 0.0;
    let m = 1000;
    for i in 0..=m + 1 {
        let x = a + (b - a) * i as f64 / (m + 1) as f64;
        let v = profile.value(t, x)?.unwrap_or(fa);
        value = value.max((v - fa).abs());
    }
    Ok(TvStatistic { n, value })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
struct TailPoint {
    s: f64,
    hits: usize,
    prob: f64,
    stderr: f64,
    bound: f64,
    status: Status,
}

pub fn verify_pseudo_stationarity(
    profile: &Profile,
    grid: &GridPoints,
    params: &StationarityParams,
) -> Result<HypEntry> {
    let (lo, hi) = params.n_range;
    if hi <= lo {
        return Err(invalid("n range must contain at least one cell"));
    }
    let axioms = check_grid_axioms(grid, lo, hi);
    let mut notes = vec!["s0, C and delta are chosen defaults, not derived constants".to_string()];
    if !axioms.passed() {
        return Ok(HypEntry {
            condition: Condition::PseudoStationarity,
            status: Status::Inconclusive,
            witness: json!({"grid": axioms}),
            notes: vec!["grid fails its spacing axioms on the requested range".into()],
        });
    }
    if profile.is_deterministic() {
        let mut per_t = Vec::new();
        let mut status = Status::Pass;
        for &t in &params.t_list {
            let s0 = params.s0.unwrap_or_else(|| default_s0(profile, t));
            let mut worst = TvStatistic { n: lo, value: 0.0 };
            for n in lo..hi {
                let tv = tv_statistic(profile, grid, n, t)?;
                if tv.value > worst.value {
                    worst = tv;
                }
            }
            if worst.value > s0 * (1.0 + 1e-12) {
                status = Status::Fail;
            }
            per_t.push(json!({"t": t, "s0": s0, "worst": worst}));
        }
        notes.push("1000 interior points per cell plus endpoints".into());
        return Ok(HypEntry {
            condition: Condition::PseudoStationarity,
            status,
            witness: json!({"n_range": params.n_range, "per_t": per_t}),
            notes,
        });
    }

    // Brownian law: the statistic's law depends only on the cell's side and
    // length, so each distinct (side, length) is sampled once.
    let Profile::BrownianDrift { a_plus, a_minus } = *profile else {
        unreachable!("only the Brownian law is random")
    };
    let m = a_plus.abs().max(a_minus.abs());
    let s0 = params.s0.unwrap_or_else(|| default_s0(profile, 1.0));
    let mut cells: Vec<(bool, f64, i64)> = Vec::new();
    for n in lo..hi {
        let (a, b) = grid.cell(n);
        let right = a >= 0.0;
        let h = b - a;
        if !cells
            .iter()
            .any(|c| c.0 == right && (c.1 - h).abs() <= 1e-12 * h)
        {
            cells.push((right, h, n));
        }
    }
    let mut per_cell = Vec::new();
    let mut statuses = Vec::new();
    for (k, &(right, h, n)) in cells.iter().enumerate() {
        let drift = if right { a_plus } else { -a_minus };
        let tv = sample_brownian_tv(
            drift,
            h,
            params.n_samples,
            params.cell_mesh,
            params.seed,
            k as u64,
        );
        let mut points = Vec::new();
        for &off in &params.s_offsets {
            let s = s0 + off;
            let hits = tv.iter().filter(|&&v| v >= s).count();
            let nn = tv.len() as f64;
            let prob = hits as f64 / nn;
            let stderr = (prob * (1.0 - prob) / nn).sqrt();
            // reflection principle: P(sup |B| on a cell of length h ≥ u) ≤ 4 Q(u/√h)
            let u = (s - m * h) / h.sqrt();
            let bound = if u > 0.0 {
                (4.0 * normal_sf(u)).min(1.0)
            } else {
                1.0
            };
            let status = if prob + params.k_sigma * stderr <= bound {
                Status::Pass
            } else if prob - params.k_sigma * stderr > bound {
                Status::Fail
            } else {
                Status::Inconclusive
            };
            statuses.push(status);
            points.push(TailPoint {
                s,
                hits,
                prob,
                stderr,
                bound,
                status,
            });
        }
        per_cell.push(
            json!({"n": n, "side": if right {"right"} else {"left"}, "length": h, "tails": points}),
        );
    }
    notes.push(format!(
        "{} paths per cell on {} mesh points; bound 4Q((s - m h)/sqrt(h)) with m = {m}, delta = 1",
        params.n_samples, params.cell_mesh
    ));
    Ok(HypEntry {
        condition: Condition::PseudoStationarity,
        status: combine(statuses),
        witness: json!({"s0": s0, "n_range": params.n_range, "cells": per_cell, "seed": params.seed}),
        notes,
    })
}

/// Samples `sup_{0≤y≤h} |B(y) + slope·y|` on a uniform mesh: the deviation
/// of the profile from its value at the left end of a cell.
fn sample_brownian_tv(
    slope: f64,
    h: f64,
    n: usize,
    mesh: usize,
    seed: u64,
    stream: u64,
) -> Vec<f64> {
    let dy = h / mesh as f64;
    let sd = dy.sqrt();
    let chunk = 10_000;
    let parts = map_indexed(chunks(n, chunk).len(), |c| {
        let (a, b) = chunks(n, chunk)[c];
        let mut rng = replica_rng(seed, (stream << 32) | c as u64);
        (a..b)
            .map(|_| {
                let mut x: f64 = 0.0;
                let mut sup: f64 = 0.0;
                for i in 1..=mesh {
                    let z: f64 = rng.sample(StandardNormal);
                    x += sd * z;
                    sup = sup.max((x + slope * dy * i as f64).abs());
                }
                sup
            })
            .collect::<Vec<f64>>()
    });
    parts.into_iter().flatten().collect()
}

pub fn verify_coherence_limit(
    profile: &Profile,
    p: f64,
    g_claimed: f64,
    t_schedule: &[f64],
    tol: f64,
) -> Result<HypEntry> {
    let est = g_estimate(profile, p, t_schedule, tol)?;
    let status = if !est.converged {
        Status::Inconclusive
    } else if (est.g - g_claimed).abs() <= tol {
        Status::Pass
    } else {
        Status::Fail
    };
    let mut notes = vec![];
    if !est.exact {
        notes
            .push("limit fitted as g + b t^-gamma over the last 3, 4 and 5 schedule points".into());
    }
    Ok(HypEntry {
        condition: Condition::CoherenceLimit,
        status,
        witness: json!({
            "g_claimed": g_claimed,
            "g_estimate": est.g,
            "exact": est.exact,
            "trace": est.trace,
            "per_window": est.per_window,
            "tolerance": tol,
        }),
        notes,
    })
}

/// Largest admissible ε, if the profile restricts it.
pub fn epsilon_limit(profile: &Profile, p: f64) -> Option<f64> {
    match *profile {
        Profile::BrownianDrift { a_plus, a_minus } => {
            let a = a_plus.max(a_minus);
            (a < -p / 2.0).then(|| -2.0 * a / p - 1.0)
        }
        Profile::Parabolic { alpha } => Some((1.0 - alpha) / (1.0 + alpha)),
        Profile::Custom { growth, .. } => Some((1.0 - growth.alpha) / (1.0 + growth.alpha)),
        _ => None,
    }
}

/// `{0.1, 0.05, 0.025, 0.0125}`, scaled down to stay below half the
/// profile's ε limit.
pub fn default_epsilons(profile: &Profile, p: f64) -> Vec<f64> {
    let scale = epsilon_limit(profile, p).map_or(1.0, |e| (e / 0.2).min(1.0));
    [0.1, 0.05, 0.025, 0.0125]
        .iter()
        .map(|e| e * scale)
        .collect()
}

/// `(1/t) log ∫ exp(−p(1−ε)x²/(2t) + log M_{p(1+ε)}(t, x)) dx`, truncated
/// where the integrand has fallen `e^{40}` below its peak.
pub fn integral_rate(profile: &Profile, p: f64, eps: f64, t: f64, rtol: f64) -> Result<f64> {
    let q = p * (1.0 + eps);
    let psi = |x: f64| -p * (1.0 - eps) * x * x / (2.0 * t) + profile.log_mgf_unchecked(q, t, x);
    let w0 = search_half_width(profile, q, t)?;
    let maxima = local_maxima(&psi, w0, SEARCH_MESH);
    let (arg, peak) = maxima
        .iter()
        .copied()
        .fold((0.0, psi(0.0)), |b, m| if m.1 > b.1 { m } else { b });
    if !peak.is_finite() {
        return Err(invalid("integrand is not finite"));
    }
    let level = peak - 40.0;
    let edge = |dir: f64| -> Result<f64> {
        let mut w = w0.max(arg.abs() + 1.0);
        let mut tries = 0;
        while psi(dir * w) > level {
            w *= 2.0;
            tries += 1;
            if tries > 60 {
                return Err(invalid(
                    "integrand does not decay; the integral may diverge",
                ));
            }
        }
        let inner = if dir * arg > 0.0 { arg.abs() } else { 0.0 };
        let start = if psi(dir * inner) > level { inner } else { 0.0 };
        Ok(dir * bisect(|r| psi(dir * r) - level, start, w, 1e-12 * w))
    };
    let lo = edge(-1.0)?;
    let hi = edge(1.0)?;
    let mut breaks = vec![0.0, arg];
    breaks.extend(maxima.iter().map(|m| m.0));
    Ok(log_integrate(psi, lo, hi, peak, &breaks, rtol) / t)
}

pub fn verify_integral_bound(
    profile: &Profile,
    p: f64,
    g_claimed: f64,
    eps_schedule: &[f64],
    t_schedule: &[f64],
    tol: f64,
) -> Result<HypEntry> {
    if eps_schedule.len() < 3 {
        return Err(invalid("need at least three epsilon values"));
    }
    if let Some(e0) = epsilon_limit(profile, p) {
        if let Some(bad) = eps_schedule.iter().find(|&&e| !(e > 0.0 && e < e0)) {
            return Err(invalid(format!(
                "epsilon={bad} is outside (0, {e0}) for this profile"
            )));
        }
    }
    let mut per_eps = Vec::new();
    let mut limits = Vec::new();
    let mut converged = true;
    for &eps in eps_schedule {
        let trace: Vec<f64> = t_schedule
            .iter()
            .map(|&t| integral_rate(profile, p, eps, t, 1e-10))
            .collect::<Result<_>>()?;
        let ex = extrapolate_limit(t_schedule, &trace, tol);
        converged &= ex.converged;
        limits.push(ex.limit);
        per_eps.push(
            json!({"eps": eps, "trace": trace, "limit": ex.limit, "per_window": ex.per_window}),
        );
    }
    let degree = if eps_schedule.len() >= 4 { 2 } else { 1 };
    let coef = poly_fit(eps_schedule, &limits, degree);
    let limit = coef[0];
    let status = if !converged {
        Status::Inconclusive
    } else if limit <= g_claimed + tol {
        Status::Pass
    } else {
        Status::Fail
    };
    Ok(HypEntry {
        condition: Condition::IntegralBound,
        status,
        witness: json!({
            "g_claimed": g_claimed,
            "limit": limit,
            "t_schedule": t_schedule,
            "per_eps": per_eps,
            "eps_fit_degree": degree,
            "tolerance": tol,
        }),
        notes: vec![
            "extrapolated in t at each epsilon, then polynomially in epsilon to 0; the two limit orders are not distinguished".into(),
        ],
    })
}

/// Settings for [`full_report`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HypOptions {
    pub t_schedule: Vec<f64>,
    pub eps_schedule: Option<Vec<f64>>,
    pub g_claimed: Option<f64>,
    pub growth_t_list: Vec<f64>,
    pub growth_mesh: (f64, usize),
    pub lower_l: f64,
    pub lower_k: f64,
    pub stationarity: StationarityParams,
    pub tolerances: Tolerances,
}

impl Default for HypOptions {
    fn default() -> Self {
        Self {
            t_schedule: geometric(10.0, 1e5, 9),
            eps_schedule: None,
            g_claimed: None,
            growth_t_list: vec![1.0, 10.0, 100.0, 1000.0],
            growth_mesh: (100.0, 4001),
            lower_l: 1.0,
            lower_k: 1.0,
            stationarity: StationarityParams::default(),
            tolerances: Tolerances::default(),
        }
    }
}

/// `g` predicted for the built-in families: 0 for deterministic data and
/// the closed form for the Brownian law.
pub fn default_g(profile: &Profile, p: f64) -> Result<f64> {
    match *profile {
        Profile::BrownianDrift { a_plus, a_minus } => g_brownian(p, a_plus, a_minus),
        _ => Ok(0.0),
    }
}

/// Runs all five checks.
pub fn full_report(profile: &Profile, p: f64, opts: &HypOptions) -> Result<HypReport> {
    let g = match opts.g_claimed {
        Some(g) => g,
        None => default_g(profile, p)?,
    };
    let tol = opts.tolerances.limit;
    let eps = opts
        .eps_schedule
        .clone()
        .unwrap_or_else(|| default_epsilons(profile, p));
    let (w, n) = opts.growth_mesh;
    let mesh: Vec<f64> = (0..n)
        .map(|i| -w + 2.0 * w * i as f64 / (n - 1) as f64)
        .collect();
    let (c, alpha) = default_growth_constants(profile, p);
    let mut st = opts.stationarity.clone();
    st.k_sigma = opts.tolerances.k_sigma;

    let entries = vec![
        verify_coherence_limit(profile, p, g, &opts.t_schedule, tol)?,
        verify_integral_bound(profile, p, g, &eps, &opts.t_schedule, tol)?,
        verify_growth(profile, p, &opts.growth_t_list, &mesh, c, alpha)?,
        verify_lower_bound(profile, p, &opts.growth_t_list, opts.lower_l, opts.lower_k)?,
        verify_pseudo_stationarity(profile, &profile.default_grid(), &st)?,
    ];
    Ok(HypReport {
        schema: HYP_SCHEMA.into(),
        version: SCHEMA_VERSION,
        kind: "hyp_report".into(),
        profile: profile
            .descriptor()
            .and_then(|d| serde_json::to_value(d).ok())
            .unwrap_or(json!({"kind": "custom"})),
        p,
        g_claimed: g,
        status: combine(entries.iter().map(|e| e.status)),
        entries,
    })
}
