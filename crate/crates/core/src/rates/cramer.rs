//! Monte Carlo check of the rate engine on a process with known exponent:
//! `X(t)` is a sum of `t` independent standard Gaussians, so
//! `h(p) = p²/2` and the upper-tail rate is `s²/2`.
//!
//! Tail probabilities far beyond reach of direct counting are estimated
//! under the exponentially tilted measure (increments shifted by `θ = q(s)`)
//! and reweighted by `exp(−θ X(k) + k θ²/2)`. One tilted path serves every
//! time `k <= t`, which gives `log P(X(k) > s k)` along a window of times;
//! the slope of that curve estimates the rate without the polynomial
//! prefactor that biases `(1/t) log P` at finite `t`.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::numerics::{linear_fit, log_normal_sf};
use crate::rates::ldp::LdpEngine;
use crate::rng::{chunks, map_indexed, replica_rng};

/// Minimum number of hits for a direct-counting estimate.
pub const MIN_HITS: u64 = 100;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CramerPoint {
    pub s: f64,
    pub tilt: f64,
    pub hits: u64,
    pub too_few_hits: bool,
    /// `−(1/t) log(hits / n)` when there are enough hits.
    pub direct_rate: Option<f64>,
    /// `−(1/t) log P̂` from the tilted estimator at the final time.
    pub tilted_rate: f64,
    pub tilted_rate_stderr: f64,
    /// Slope of `−log P̂(X(k) > s k)` over `k` in the window.
    pub tilted_slope_rate: f64,
    /// `−(1/t) log P(N(0, t) > s t)`, exact.
    pub oracle_rate: f64,
    /// Slope of the exact `−log P(N(0, k) > s k)` over the same window.
    pub oracle_slope_rate: f64,
    /// Rate from the Legendre engine applied to `h(p) = p²/2`.
    pub ldp_rate: Option<f64>,
    /// `|tilted − oracle| / stderr` at the final time.
    pub oracle_z: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CramerReport {
    pub t: usize,
    pub window: (usize, usize),
    pub n_replicas: usize,
    pub seed: u64,
    pub points: Vec<CramerPoint>,
}

struct Partial {
    hits: Vec<u64>,
    /// per s, per window time: sum of weights
    weights: Vec<Vec<f64>>,
    /// per s: sum of squared weights at the final time
    weights_sq: Vec<f64>,
}

fn gaussian_engine() -> Result<LdpEngine> {
    let p: Vec<f64> = (1..=600).map(|i| 0.01 * i as f64).collect();
    let h: Vec<f64> = p.iter().map(|q| q * q / 2.0).collect();
    LdpEngine::new(p, h)
}

/// Runs the toy for each `s` in `s_list`.
pub fn cramer_toy_validate(
    s_list: &[f64],
    t: usize,
    n_replicas: usize,
    seed: u64,
) -> Result<CramerReport> {
    if t < 4 || n_replicas == 0 {
        return Err(invalid("need t >= 4 and at least one replica"));
    }
    let engine = gaussian_engine()?;
    let k0 = t / 2;
    let width = t - k0 + 1;
    let tilts: Vec<f64> = s_list
        .iter()
        .map(|&s| engine.rate(s).map(|r| r.q).unwrap_or(0.0))
        .collect();
    let ns = s_list.len();

    let parts = map_indexed(chunks(n_replicas, 10_000).len(), |c| {
        let (start, end) = chunks(n_replicas, 10_000)[c];
        let mut part = Partial {
            hits: vec![0; ns],
            weights: vec![vec![0.0; width]; ns],
            weights_sq: vec![0.0; ns],
        };
        let mut sums = vec![0.0; t + 1];
        for r in start..end {
            let mut rng = replica_rng(seed, r as u64);
            for k in 1..=t {
                let z: f64 = rng.sample(StandardNormal);
                sums[k] = sums[k - 1] + z;
            }
            for j in 0..ns {
                let (s, th) = (s_list[j], tilts[j]);
                if sums[t] > s * t as f64 {
                    part.hits[j] += 1;
                }
                for k in k0..=t {
                    let kf = k as f64;
                    let x = sums[k] + th * kf;
                    if x > s * kf {
                        let w = (-th * x + kf * th * th / 2.0).exp();
                        part.weights[j][k - k0] += w;
                        if k == t {
                            part.weights_sq[j] += w * w;
                        }
                    }
                }
            }
        }
        part
    });

    let mut hits = vec![0u64; ns];
    let mut weights = vec![vec![0.0; width]; ns];
    let mut weights_sq = vec![0.0; ns];
    for part in parts {
        for j in 0..ns {
            hits[j] += part.hits[j];
            weights_sq[j] += part.weights_sq[j];
            for (acc, w) in weights[j].iter_mut().zip(&part.weights[j]) {
                *acc += w;
            }
        }
    }

    let n = n_replicas as f64;
    let tf = t as f64;
    let ks: Vec<f64> = (k0..=t).map(|k| k as f64).collect();
    let points = s_list
        .iter()
        .enumerate()
        .map(|(j, &s)| {
            let p_hat = weights[j][width - 1] / n;
            let var = (weights_sq[j] / n - p_hat * p_hat).max(0.0) / n;
            let tilted_rate = -p_hat.ln() / tf;
            let tilted_rate_stderr = var.sqrt() / p_hat / tf;
            let neg_log: Vec<f64> = weights[j].iter().map(|w| -(w / n).ln()).collect();
            let (_, tilted_slope_rate) = linear_fit(&ks, &neg_log);
            let oracle = |k: f64| -log_normal_sf(s * k.sqrt());
            let oracle_rate = oracle(tf) / tf;
            let exact: Vec<f64> = ks.iter().map(|&k| oracle(k)).collect();
            let (_, oracle_slope_rate) = linear_fit(&ks, &exact);
            let too_few_hits = hits[j] < MIN_HITS;
            CramerPoint {
                s,
                tilt: tilts[j],
                hits: hits[j],
                too_few_hits,
                direct_rate: (!too_few_hits).then(|| -(hits[j] as f64 / n).ln() / tf),
                tilted_rate,
                tilted_rate_stderr,
                tilted_slope_rate,
                oracle_rate,
                oracle_slope_rate,
                ldp_rate: engine.rate(s).ok().map(|r| r.rate),
                oracle_z: (tilted_rate - oracle_rate).abs()
                    / tilted_rate_stderr.max(f64::MIN_POSITIVE),
            }
        })
        .collect();
    Ok(CramerReport {
        t,
        window: (k0, t),
        n_replicas,
        seed,
        points,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn symmetric_point() {
        let r = cramer_toy_validate(&[0.0], 50, 20_000, 1).unwrap();
        let p = &r.points[0];
        assert!(!p.too_few_hits);
        // P = 1/2 so the rate is log 2 / t
        assert!((p.direct_rate.unwrap() - 2f64.ln() / 50.0).abs() < 3e-3);
        assert!(p.ldp_rate.is_none());
    }

    #[test]
    fn moderate_deviation_direct_and_tilted_agree() {
        let r = cramer_toy_validate(&[0.2], 50, 50_000, 3).unwrap();
        let p = &r.points[0];
        assert!(!p.too_few_hits);
        assert!((p.direct_rate.unwrap() - p.oracle_rate).abs() < 0.01);
        assert!(p.oracle_z < 3.0, "{p:?}");
    }

    #[test]
    fn far_tail_is_flagged() {
        let r = cramer_toy_validate(&[1.0], 200, 10_000, 5).unwrap();
        let p = &r.points[0];
        assert!(p.too_few_hits && p.direct_rate.is_none());
        // −(1/t) log P = s²/2 + O(log t / t)
        let prefactor = (p.oracle_rate - 0.5) * 200.0;
        let expected = (1.0f64 * (2.0 * std::f64::consts::PI * 200.0).sqrt()).ln();
        assert!(
            (prefactor - expected).abs() < 0.05,
            "{prefactor} {expected}"
        );
        assert!(p.oracle_z < 3.0);
    }

    #[test]
    fn deterministic_per_seed() {
        let a = cramer_toy_validate(&[0.5], 20, 5_000, 11).unwrap();
        let b = cramer_toy_validate(&[0.5], 20, 5_000, 11).unwrap();
        assert_eq!(a, b);
    }
}
