//! Exact first and second moments of the lattice scheme (clamping ignored).
//!
//! With `L` the one-step heat operator and `σ² = dt/dx`,
//!
//! ```text
//! m_{n+1} = L m_n
//! C_{n+1} = L C_n L + σ² diag(C_n)
//! ```
//!
//! since the noise at step `n` multiplies `Z_n` and is independent of it.

use serde::{Deserialize, Serialize};

use super::{Boundary, Initial, LatticeConfig, MEMORY_LIMIT};
use crate::error::{invalid, Error, Result};
use crate::profiles::Profile;

fn check_times(cfg: &LatticeConfig, times: &[f64]) -> Result<Vec<usize>> {
    let steps: Vec<usize> = times.iter().map(|&t| cfg.steps_to(t)).collect();
    if times.iter().any(|&t| !(t >= 0.0)) || steps.windows(2).any(|w| w[1] < w[0]) {
        return Err(invalid(
            "oracle times must be non-negative and non-decreasing",
        ));
    }
    Ok(steps)
}

/// `out = L v`.
fn heat(v: &[f64], out: &mut [f64], r: f64, boundary: Boundary) {
    let n = v.len();
    let (lo, hi) = match boundary {
        Boundary::DirichletZero => (0.0, 0.0),
        Boundary::Periodic => (v[n - 1], v[0]),
    };
    for i in 0..n {
        let l = if i == 0 { lo } else { v[i - 1] };
        let h = if i + 1 == n { hi } else { v[i + 1] };
        out[i] = v[i] + r * (l - 2.0 * v[i] + h);
    }
}

fn mean_initial(initial: &Initial, cfg: &LatticeConfig) -> Result<Vec<f64>> {
    match initial {
        Initial::NarrowWedge => Initial::NarrowWedge.field(cfg, 0, 0),
        Initial::Profile(p) => (0..cfg.n_sites())
            .map(|i| {
                let v = p.log_mgf(1.0, cfg.t_final, cfg.x(i))?.exp();
                Ok(v)
            })
            .collect(),
    }
}

/// `E Z(t, x_i)` on the lattice for each requested time.
pub fn first_moment_oracle(
    initial: &Initial,
    cfg: &LatticeConfig,
    times: &[f64],
) -> Result<Vec<Vec<f64>>> {
    cfg.validate()?;
    let steps = check_times(cfg, times)?;
    let mut m = mean_initial(initial, cfg)?;
    let mut tmp = vec![0.0; m.len()];
    let r = cfg.diffusion_ratio();
    let mut out = Vec::with_capacity(steps.len());
    let mut n = 0;
    for &s in &steps {
        while n < s {
            heat(&m, &mut tmp, r, cfg.boundary);
            std::mem::swap(&mut m, &mut tmp);
            n += 1;
        }
        out.push(m.clone());
    }
    Ok(out)
}

/// `E Z(t, x_i) Z(t, x_j)` stored row-major for each requested time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SecondMomentTable {
    pub config: LatticeConfig,
    pub times: Vec<f64>,
    pub n_sites: usize,
    pub matrices: Vec<Vec<f64>>,
}

impl SecondMomentTable {
    pub fn get(&self, k: usize, i: usize, j: usize) -> f64 {
        self.matrices[k][i * self.n_sites + j]
    }

    /// `E Z(t_k, 0)²`.
    pub fn at_origin(&self, k: usize) -> f64 {
        let o = self.config.origin();
        self.get(k, o, o)
    }
}

fn initial_covariance(initial: &Initial, cfg: &LatticeConfig) -> Result<Vec<f64>> {
    let n = cfg.n_sites();
    let mut c = vec![0.0; n * n];
    match initial {
        Initial::Profile(p @ Profile::BrownianDrift { .. }) => {
            for i in 0..n {
                let x = cfg.x(i);
                for j in 0..n {
                    let y = cfg.x(j);
                    let cov = if x * y > 0.0 {
                        x.abs().min(y.abs())
                    } else {
                        0.0
                    };
                    let var = x.abs() + y.abs() + 2.0 * cov;
                    c[i * n + j] = (p.drift_term(x) + p.drift_term(y) + 0.5 * var).exp();
                }
            }
        }
        _ => {
            let u = mean_initial(initial, cfg)?;
            for i in 0..n {
                for j in 0..n {
                    c[i * n + j] = u[i] * u[j];
                }
            }
        }
    }
    Ok(c)
}

fn covariance_step(c: &mut [f64], d: &mut [f64], n: usize, cfg: &LatticeConfig) {
    let r = cfg.diffusion_ratio();
    let s2 = cfg.dt / cfg.dx;
    // d = C L, one row at a time (L is symmetric).
    for i in 0..n {
        heat(
            &c[i * n..(i + 1) * n],
            &mut d[i * n..(i + 1) * n],
            r,
            cfg.boundary,
        );
    }
    let diag: Vec<f64> = (0..n).map(|i| c[i * n + i]).collect();
    // c = L d, combining neighbouring rows.
    let periodic = cfg.boundary == Boundary::Periodic;
    for i in 0..n {
        let up = if i > 0 {
            Some(i - 1)
        } else if periodic {
            Some(n - 1)
        } else {
            None
        };
        let down = if i + 1 < n {
            Some(i + 1)
        } else if periodic {
            Some(0)
        } else {
            None
        };
        for j in 0..n {
            let mid = d[i * n + j];
            let a = up.map_or(0.0, |u| d[u * n + j]);
            let b = down.map_or(0.0, |w| d[w * n + j]);
            c[i * n + j] = mid + r * (a - 2.0 * mid + b);
        }
        c[i * n + i] += s2 * diag[i];
    }
}

fn guard(n: usize, snapshots: usize) -> Result<()> {
    let requested = n
        .saturating_mul(n)
        .saturating_mul(8)
        .saturating_mul(2 + snapshots);
    if requested > MEMORY_LIMIT {
        return Err(Error::MemoryGuard {
            requested,
            limit: MEMORY_LIMIT,
        });
    }
    Ok(())
}

/// Iterates the exact two-point recursion and stores the full table at
/// each requested time.
pub fn second_moment_oracle(
    initial: &Initial,
    cfg: &LatticeConfig,
    times: &[f64],
) -> Result<SecondMomentTable> {
    cfg.validate()?;
    let steps = check_times(cfg, times)?;
    let n = cfg.n_sites();
    guard(n, steps.len())?;
    let mut c = initial_covariance(initial, cfg)?;
    let mut d = vec![0.0; n * n];
    let mut matrices = Vec::with_capacity(steps.len());
    let mut k = 0;
    for &s in &steps {
        while k < s {
            covariance_step(&mut c, &mut d, n, cfg);
            k += 1;
        }
        matrices.push(c.clone());
    }
    Ok(SecondMomentTable {
        config: *cfg,
        times: times.to_vec(),
        n_sites: n,
        matrices,
    })
}

/// `E Z(t, 0)²` at each requested time without storing the tables.
pub fn second_moment_series(
    initial: &Initial,
    cfg: &LatticeConfig,
    times: &[f64],
) -> Result<Vec<f64>> {
    cfg.validate()?;
    let steps = check_times(cfg, times)?;
    let n = cfg.n_sites();
    guard(n, 0)?;
    let o = cfg.origin();
    let mut c = initial_covariance(initial, cfg)?;
    let mut d = vec![0.0; n * n];
    let mut out = Vec::with_capacity(steps.len());
    let mut k = 0;
    for &s in &steps {
        while k < s {
            covariance_step(&mut c, &mut d, n, cfg);
            k += 1;
        }
        out.push(c[o * n + o]);
    }
    Ok(out)
}
