//! Monte Carlo checks of structural identities of the scheme.

use serde::{Deserialize, Serialize};

use super::estimate::mean_stderr;
use super::oracle::first_moment_oracle;
use super::{simulate, Initial, LatticeConfig};
use crate::error::{invalid, Result};
use crate::profiles::Profile;
use crate::rng::derive_seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CheckStatus {
    Pass,
    Fail,
    Inconclusive,
}

/// Relative confidence half-width above which a comparison is inconclusive.
pub const MAX_RELATIVE_HALF_WIDTH: f64 = 0.2;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SideStats {
    pub mean: f64,
    pub mean_stderr: f64,
    pub second: f64,
    pub second_stderr: f64,
}

impl SideStats {
    fn from_values(v: &[f64]) -> Self {
        let (mean, se) = mean_stderr(v);
        let sq: Vec<f64> = v.iter().map(|x| x * x).collect();
        let (second, second_stderr) = mean_stderr(&sq);
        Self {
            mean,
            mean_stderr: se,
            second,
            second_stderr,
        }
    }
}

/// Both sides of `Z^f(t, 0) = ∫ Z^{nw}(t, y) e^{f(y)} dy` in law.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvolutionReport {
    pub t: f64,
    pub n_replicas: usize,
    pub seed: u64,
    pub k_sigma: f64,
    /// Direct run from `e^f`.
    pub lhs: SideStats,
    /// Narrow-wedge run integrated against `e^f`.
    pub rhs: SideStats,
    pub z_mean: f64,
    pub z_second: f64,
    pub clamp_rate: f64,
    pub status: CheckStatus,
    /// Replica count that would bring the relative half-width to 5%.
    pub required_replicas: Option<usize>,
}

fn z_score(a: f64, sa: f64, b: f64, sb: f64) -> f64 {
    let s = (sa * sa + sb * sb).sqrt();
    if s == 0.0 {
        if a == b {
            0.0
        } else {
            f64::INFINITY
        }
    } else {
        (a - b) / s
    }
}

pub fn convolution_check(
    profile: &Profile,
    cfg: &LatticeConfig,
    n_replicas: usize,
    seed: u64,
    k_sigma: f64,
) -> Result<ConvolutionReport> {
    let direct = Initial::Profile(profile.clone());
    let o = cfg.origin();
    let lhs = simulate(&direct, cfg, n_replicas, seed, &[cfg.t_final], |_, _, f| {
        f[o]
    })?;
    let lhs_v: Vec<f64> = lhs.observations.iter().map(|v| v[0]).collect();

    let nw_seed = derive_seed(seed, 1);
    let f_seed = derive_seed(seed, 2);
    let weights = if profile.is_deterministic() {
        Some(direct.field(cfg, f_seed, 0)?)
    } else {
        None
    };
    let rhs = simulate(
        &Initial::NarrowWedge,
        cfg,
        n_replicas,
        nw_seed,
        &[cfg.t_final],
        |r, _, z| {
            let sampled;
            let w = match &weights {
                Some(w) => w,
                None => {
                    sampled = direct
                        .field(cfg, f_seed, r as u64)
                        .unwrap_or_else(|_| vec![0.0; z.len()]);
                    &sampled
                }
            };
            z.iter().zip(w).map(|(a, b)| a * b).sum::<f64>() * cfg.dx
        },
    )?;
    let rhs_v: Vec<f64> = rhs.observations.iter().map(|v| v[0]).collect();

    let l = SideStats::from_values(&lhs_v);
    let r = SideStats::from_values(&rhs_v);
    let z_mean = z_score(l.mean, l.mean_stderr, r.mean, r.mean_stderr);
    let z_second = z_score(l.second, l.second_stderr, r.second, r.second_stderr);

    let rel = |m: f64, a: f64, b: f64| k_sigma * (a * a + b * b).sqrt() / m.abs().max(1e-300);
    let worst = rel(l.mean, l.mean_stderr, r.mean_stderr).max(rel(
        l.second,
        l.second_stderr,
        r.second_stderr,
    ));
    let (status, required_replicas) = if worst > MAX_RELATIVE_HALF_WIDTH {
        let need = n_replicas as f64 * (worst / 0.05).powi(2);
        (CheckStatus::Inconclusive, Some(need.ceil() as usize))
    } else if z_mean.abs() <= k_sigma && z_second.abs() <= k_sigma {
        (CheckStatus::Pass, None)
    } else {
        (CheckStatus::Fail, None)
    };
    let updates = lhs.site_updates + rhs.site_updates;
    Ok(ConvolutionReport {
        t: cfg.t_final,
        n_replicas,
        seed,
        k_sigma,
        lhs: l,
        rhs: r,
        z_mean,
        z_second,
        clamp_rate: (lhs.clamps + rhs.clamps) as f64 / updates.max(1) as f64,
        status,
        required_replicas,
    })
}

/// Statistics of `log Z^{nw}(t, x) + x²/(2t)` at one site.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SiteStats {
    pub x: f64,
    pub n_used: usize,
    pub n_zero: usize,
    pub mean: f64,
    pub mean_stderr: f64,
    pub var: f64,
    /// `E Z e^{x²/2t} √(2πt)`; 1 for the continuum heat kernel.
    pub first_moment_ratio: f64,
    pub first_moment_ratio_stderr: f64,
    /// Empirical `E Z` against the lattice heat recursion, in stderrs.
    pub first_moment_z: f64,
}

/// Paired comparison of two sites over the same replicas.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairStats {
    pub x1: f64,
    pub x2: f64,
    pub mean_diff: f64,
    pub z_mean: f64,
    pub var_diff: f64,
    /// Diagnostic only. The lattice variance drifts with |x| at coarse dx.
    pub z_var: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StationarityReport {
    pub t: f64,
    pub n_replicas: usize,
    pub seed: u64,
    pub k_sigma: f64,
    pub sites: Vec<SiteStats>,
    pub pairs: Vec<PairStats>,
    pub clamp_rate: f64,
    pub zero_rate: f64,
    pub status: CheckStatus,
}

/// Zero fraction above which the log statistic is considered unreliable.
pub const MAX_ZERO_RATE: f64 = 0.01;
/// Clamp fraction above which the run is considered unreliable.
pub const MAX_CLAMP_RATE: f64 = 1e-3;

pub fn stationarity_check(
    cfg: &LatticeConfig,
    n_replicas: usize,
    x_list: &[f64],
    seed: u64,
    k_sigma: f64,
) -> Result<StationarityReport> {
    if x_list.is_empty() {
        return Err(invalid("x list is empty"));
    }
    let mut sites = Vec::with_capacity(x_list.len());
    for &x in x_list {
        if x.abs() > cfg.half_width / 2.0 {
            return Err(invalid(format!(
                "x={x} lies outside the trusted interior |x| <= W/2"
            )));
        }
        sites.push(
            cfg.site(x)
                .ok_or_else(|| invalid(format!("x={x} is off the lattice")))?,
        );
    }
    let t = cfg.t_final;
    let out = simulate(
        &Initial::NarrowWedge,
        cfg,
        n_replicas,
        seed,
        &[t],
        |_, _, f| sites.iter().map(|&i| f[i]).collect::<Vec<f64>>(),
    )?;
    let raw: Vec<&Vec<f64>> = out.observations.iter().map(|o| &o[0]).collect();
    let oracle = first_moment_oracle(&Initial::NarrowWedge, cfg, &[t])?.remove(0);

    // Replicas with a zero at any requested site are dropped from the log
    // statistics so that the pairs stay paired.
    let keep: Vec<usize> = (0..n_replicas)
        .filter(|&r| raw[r].iter().all(|&v| v > 0.0))
        .collect();
    let n_zero = n_replicas - keep.len();
    let shift = |k: usize| cfg.x(sites[k]).powi(2) / (2.0 * t);
    let logs: Vec<Vec<f64>> = (0..sites.len())
        .map(|k| keep.iter().map(|&r| raw[r][k].ln() + shift(k)).collect())
        .collect();

    let norm = (2.0 * std::f64::consts::PI * t).sqrt();
    let mut site_stats = Vec::with_capacity(sites.len());
    for (k, &i) in sites.iter().enumerate() {
        let (mean, mean_se) = mean_stderr(&logs[k]);
        let var =
            logs[k].iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (logs[k].len() as f64 - 1.0);
        let z: Vec<f64> = raw.iter().map(|o| o[k]).collect();
        let (zm, zs) = mean_stderr(&z);
        let factor = shift(k).exp() * norm;
        site_stats.push(SiteStats {
            x: cfg.x(i),
            n_used: keep.len(),
            n_zero: z.iter().filter(|&&v| v <= 0.0).count(),
            mean,
            mean_stderr: mean_se,
            var,
            first_moment_ratio: zm * factor,
            first_moment_ratio_stderr: zs * factor,
            first_moment_z: z_score(zm, zs, oracle[i], 0.0),
        });
    }

    let mut pairs = Vec::new();
    for a in 0..sites.len() {
        for b in a + 1..sites.len() {
            let d: Vec<f64> = logs[a].iter().zip(&logs[b]).map(|(u, v)| u - v).collect();
            let (md, sd) = mean_stderr(&d);
            let (ma, mb) = (site_stats[a].mean, site_stats[b].mean);
            let dv: Vec<f64> = logs[a]
                .iter()
                .zip(&logs[b])
                .map(|(u, v)| (u - ma).powi(2) - (v - mb).powi(2))
                .collect();
            let (mv, sv) = mean_stderr(&dv);
            pairs.push(PairStats {
                x1: site_stats[a].x,
                x2: site_stats[b].x,
                mean_diff: md,
                z_mean: z_score(md, sd, 0.0, 0.0),
                var_diff: mv,
                z_var: z_score(mv, sv, 0.0, 0.0),
            });
        }
    }

    let zero_rate = n_zero as f64 / n_replicas as f64;
    let clamp_rate = out.clamp_rate();
    let status = if zero_rate > MAX_ZERO_RATE || clamp_rate > MAX_CLAMP_RATE {
        CheckStatus::Inconclusive
    } else if pairs.iter().all(|p| p.z_mean.abs() <= k_sigma)
        && site_stats.iter().all(|s| s.first_moment_z.abs() <= k_sigma)
    {
        CheckStatus::Pass
    } else {
        CheckStatus::Fail
    };
    Ok(StationarityReport {
        t,
        n_replicas,
        seed,
        k_sigma,
        sites: site_stats,
        pairs,
        clamp_rate,
        zero_rate,
        status,
    })
}

/// Empirical survival functions of
/// `S = sup_{x∈[0,t^{1/3}]} {H(x) − H(0) − νx²/2}` and
/// `I = inf_{x∈[0,t^{1/3}]} {H(x) − H(0) + νx²/2}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TailRow {
    pub s: f64,
    /// Replicas with `S ≥ s`.
    pub sup_count: usize,
    pub sup_prob: f64,
    /// Replicas with `I ≤ −s`.
    pub inf_count: usize,
    pub inf_prob: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IncrementReport {
    pub t: f64,
    pub nu: f64,
    pub window: (f64, f64),
    pub n_replicas: usize,
    pub n_used: usize,
    pub seed: u64,
    pub rows: Vec<TailRow>,
}

pub fn increment_diagnostic(
    cfg: &LatticeConfig,
    n_replicas: usize,
    nu: f64,
    s_grid: &[f64],
    seed: u64,
) -> Result<IncrementReport> {
    let t = cfg.t_final;
    if t < 1.0 {
        return Err(invalid("increment diagnostic needs t >= 1"));
    }
    let hi = t.cbrt();
    let o = cfg.origin();
    let last = cfg
        .site(hi.min(cfg.half_width))
        .unwrap_or(cfg.n_sites() - 1);
    let out = simulate(
        &Initial::NarrowWedge,
        cfg,
        n_replicas,
        seed,
        &[t],
        |_, _, f| {
            if f[o] <= 0.0 {
                return None;
            }
            let h0 = f[o].ln();
            let mut sup = f64::NEG_INFINITY;
            let mut inf = f64::INFINITY;
            for i in o..=last {
                let x = cfg.x(i);
                let h = if f[i] > 0.0 {
                    f[i].ln()
                } else {
                    f64::NEG_INFINITY
                };
                sup = sup.max(h - h0 - nu * x * x / 2.0);
                inf = inf.min(h - h0 + nu * x * x / 2.0);
            }
            Some((sup, inf))
        },
    )?;
    let stats: Vec<(f64, f64)> = out.observations.iter().filter_map(|o| o[0]).collect();
    let n_used = stats.len();
    let rows = s_grid
        .iter()
        .map(|&s| {
            let sup_count = stats.iter().filter(|v| v.0 >= s).count();
            let inf_count = stats.iter().filter(|v| v.1 <= -s).count();
            TailRow {
                s,
                sup_count,
                sup_prob: sup_count as f64 / n_used.max(1) as f64,
                inf_count,
                inf_prob: inf_count as f64 / n_used.max(1) as f64,
            }
        })
        .collect();
    Ok(IncrementReport {
        t,
        nu,
        window: (0.0, hi),
        n_replicas,
        n_used,
        seed,
        rows,
    })
}
