//! Lattice Monte Carlo for the stochastic heat equation with multiplicative
//! space-time white noise, `∂ₜZ = ½∂ₓₓZ + Zξ`, discretized by explicit
//! Euler–Maruyama (Itô):
//!
//! ```text
//! Z_{n+1}(x) = Z_n(x) + (dt/2) ΔZ_n(x) / dx² + Z_n(x) ξ_{n,x} √(dt/dx)
//! ```
//!
//! with independent standard Gaussians `ξ_{n,x}`. Negative updates are
//! clamped to zero and counted.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::profiles::{sample_brownian_path_with, Profile, ProfileDescriptor};
use crate::rng::{derive_seed, map_indexed, replica_rng};

pub mod checks;
pub mod estimate;
pub mod io;
pub mod oracle;

pub use checks::{
    convolution_check, increment_diagnostic, stationarity_check, CheckStatus, ConvolutionReport,
    IncrementReport, PairStats, SideStats, SiteStats, StationarityReport, TailRow,
};
pub use estimate::{estimate_moment, lyapunov_slope_fit, mean_stderr, MomentEstimate, SlopeFit};
pub use io::{read_ensemble, write_ensemble};
pub use oracle::{
    first_moment_oracle, second_moment_oracle, second_moment_series, SecondMomentTable,
};

/// Default time step as a fraction of `dx²`.
pub const DEFAULT_DT_RATIO: f64 = 0.125;
/// Memory ceiling for stored ensembles and oracle tables.
pub const MEMORY_LIMIT: usize = 1 << 30;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Boundary {
    DirichletZero,
    Periodic,
}

/// Discretization of `[−W, W]` with sites `x_i = (i − m) dx`, `i = 0..=2m`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LatticeConfig {
    pub dx: f64,
    pub dt: f64,
    pub half_width: f64,
    pub boundary: Boundary,
    pub t_final: f64,
}

impl LatticeConfig {
    /// `dt = dx²/8` and `W = 6√t_final`, Dirichlet boundary.
    pub fn new(dx: f64, t_final: f64) -> Result<Self> {
        Self::with_drift(dx, t_final, 0.0)
    }

    /// Like [`LatticeConfig::new`] with `W = 6√t_final + t_final·drift`.
    pub fn with_drift(dx: f64, t_final: f64, drift: f64) -> Result<Self> {
        if !(dx > 0.0 && dx.is_finite()) {
            return Err(invalid("dx must be positive"));
        }
        let cfg = Self {
            dx,
            dt: DEFAULT_DT_RATIO * dx * dx,
            half_width: 6.0 * t_final.max(0.0).sqrt() + t_final.max(0.0) * drift.max(0.0),
            boundary: Boundary::DirichletZero,
            t_final,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn dt(mut self, dt: f64) -> Result<Self> {
        self.dt = dt;
        self.validate()?;
        Ok(self)
    }

    pub fn half_width(mut self, w: f64) -> Result<Self> {
        self.half_width = w;
        self.validate()?;
        Ok(self)
    }

    pub fn boundary(mut self, b: Boundary) -> Self {
        self.boundary = b;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dx > 0.0) {
            return Err(invalid("dx must be positive"));
        }
        if !(self.dt > 0.0) {
            return Err(invalid("dt must be positive"));
        }
        let limit = self.dx * self.dx / 2.0;
        if self.dt > limit * (1.0 + 1e-12) {
            return Err(Error::Unstable { dt: self.dt, limit });
        }
        if !(self.t_final >= 10.0 * self.dt) {
            return Err(invalid(format!(
                "t_final={} is too small: need at least 10 time steps (dt={})",
                self.t_final, self.dt
            )));
        }
        if !(self.half_width >= self.dx) {
            return Err(invalid("half width must cover at least one site"));
        }
        Ok(())
    }

    /// Sites on each side of the origin.
    pub fn half_sites(&self) -> usize {
        (self.half_width / self.dx - 1e-9).ceil() as usize
    }

    pub fn n_sites(&self) -> usize {
        2 * self.half_sites() + 1
    }

    pub fn origin(&self) -> usize {
        self.half_sites()
    }

    pub fn x(&self, i: usize) -> f64 {
        (i as f64 - self.half_sites() as f64) * self.dx
    }

    pub fn mesh(&self) -> Vec<f64> {
        (0..self.n_sites()).map(|i| self.x(i)).collect()
    }

    /// Site index nearest to `x`, if inside the lattice.
    pub fn site(&self, x: f64) -> Option<usize> {
        let k = (x / self.dx).round() as i64 + self.half_sites() as i64;
        (0..self.n_sites() as i64)
            .contains(&k)
            .then_some(k as usize)
    }

    pub fn steps_to(&self, t: f64) -> usize {
        (t / self.dt).round() as usize
    }

    /// `dt / (2 dx²)`
    pub fn diffusion_ratio(&self) -> f64 {
        self.dt / (2.0 * self.dx * self.dx)
    }

    /// `√(dt / dx)`
    pub fn noise_scale(&self) -> f64 {
        (self.dt / self.dx).sqrt()
    }
}

/// Initial condition of a run.
#[derive(Debug, Clone)]
pub enum Initial {
    /// `Z(0, ·) = δ₀`, represented by mass `1/dx` at the origin site.
    NarrowWedge,
    /// `Z(0, x) = e^{f(x)}`; deterministic families are evaluated at
    /// `t = t_final`, Brownian data are sampled once per replica.
    Profile(Profile),
}

impl Initial {
    pub fn descriptor(&self) -> serde_json::Value {
        match self {
            Initial::NarrowWedge => serde_json::json!({"kind": "narrow_wedge"}),
            Initial::Profile(p) => p
                .descriptor()
                .and_then(|d: ProfileDescriptor| serde_json::to_value(d).ok())
                .unwrap_or(serde_json::json!({"kind": "custom"})),
        }
    }

    /// Initial field for `replica` of a run keyed by `seed`.
    pub fn field(&self, cfg: &LatticeConfig, seed: u64, replica: u64) -> Result<Vec<f64>> {
        let n = cfg.n_sites();
        match self {
            Initial::NarrowWedge => {
                let mut z = vec![0.0; n];
                z[cfg.origin()] = 1.0 / cfg.dx;
                Ok(z)
            }
            Initial::Profile(p @ Profile::BrownianDrift { .. }) => {
                let key = derive_seed(seed, 0x1d);
                let mut right = replica_rng(key, 2 * replica);
                let mut left = replica_rng(key, 2 * replica + 1);
                let path = sample_brownian_path_with(p, &cfg.mesh(), &mut right, &mut left)?;
                Ok(path.into_iter().map(f64::exp).collect())
            }
            Initial::Profile(p) => (0..n)
                .map(|i| Ok(p.value(cfg.t_final, cfg.x(i))?.unwrap_or(0.0).exp()))
                .collect(),
        }
    }
}

/// One replica's field.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldState {
    pub values: Vec<f64>,
    pub step: u64,
    pub replica: u64,
    pub clamps: u64,
    scratch: Vec<f64>,
}

impl FieldState {
    pub fn new(values: Vec<f64>, replica: u64) -> Self {
        let n = values.len();
        Self {
            values,
            step: 0,
            replica,
            clamps: 0,
            scratch: vec![0.0; n],
        }
    }

    pub fn time(&self, cfg: &LatticeConfig) -> f64 {
        self.step as f64 * cfg.dt
    }
}

/// Applies one step of the scheme using the given standard-normal draws
/// (one per site). Returns the number of clamped sites.
pub fn step(state: &mut FieldState, cfg: &LatticeConfig, noise: &[f64]) -> Result<u64> {
    let limit = cfg.dx * cfg.dx / 2.0;
    if cfg.dt > limit * (1.0 + 1e-12) {
        return Err(Error::Unstable { dt: cfg.dt, limit });
    }
    if noise.len() != state.values.len() {
        return Err(invalid("noise slice must have one entry per site"));
    }
    Ok(step_unchecked(state, cfg, noise))
}

fn step_unchecked(state: &mut FieldState, cfg: &LatticeConfig, noise: &[f64]) -> u64 {
    let r = cfg.diffusion_ratio();
    let sigma = cfg.noise_scale();
    let z = &state.values;
    let out = &mut state.scratch;
    let n = z.len();
    let (first_left, last_right) = match cfg.boundary {
        Boundary::DirichletZero => (0.0, 0.0),
        Boundary::Periodic => (z[n - 1], z[0]),
    };
    let mut clamps = 0;
    for i in 0..n {
        let left = if i == 0 { first_left } else { z[i - 1] };
        let right = if i + 1 == n { last_right } else { z[i + 1] };
        let mut v = z[i] + r * (left - 2.0 * z[i] + right) + z[i] * sigma * noise[i];
        if v < 0.0 {
            v = 0.0;
            clamps += 1;
        }
        out[i] = v;
    }
    std::mem::swap(&mut state.values, &mut state.scratch);
    state.step += 1;
    state.clamps += clamps;
    clamps
}

/// Per-replica observations plus clamp accounting.
#[derive(Debug, Clone, PartialEq)]
pub struct SimOutput<R> {
    /// `observations[replica][k]` for the k-th requested time.
    pub observations: Vec<Vec<R>>,
    pub times: Vec<f64>,
    pub clamps: u64,
    pub site_updates: u64,
}

impl<R> SimOutput<R> {
    pub fn clamp_rate(&self) -> f64 {
        if self.site_updates == 0 {
            0.0
        } else {
            self.clamps as f64 / self.site_updates as f64
        }
    }
}

/// Runs `n_replicas` independent replicas and calls `observe(replica,
/// k, field)` at each requested time. Output is bit-identical for a given
/// `(initial, cfg, seed)` whatever the thread count.
pub fn simulate<R, F>(
    initial: &Initial,
    cfg: &LatticeConfig,
    n_replicas: usize,
    seed: u64,
    times: &[f64],
    observe: F,
) -> Result<SimOutput<R>>
where
    R: Send,
    F: Fn(usize, usize, &[f64]) -> R + Sync + Send,
{
    cfg.validate()?;
    if n_replicas == 0 {
        return Err(invalid("need at least one replica"));
    }
    let mut steps: Vec<usize> = Vec::with_capacity(times.len());
    for &t in times {
        if !(t >= 0.0 && t <= cfg.t_final * (1.0 + 1e-12)) {
            return Err(invalid(format!(
                "observation time {t} outside [0, {}]",
                cfg.t_final
            )));
        }
        steps.push(cfg.steps_to(t));
    }
    if steps.windows(2).any(|w| w[1] < w[0]) {
        return Err(invalid("observation times must be non-decreasing"));
    }
    let last = steps.last().copied().unwrap_or(0);
    let n = cfg.n_sites();

    let results = map_indexed(n_replicas, |r| -> Result<(Vec<R>, u64)> {
        let mut state = FieldState::new(initial.field(cfg, seed, r as u64)?, r as u64);
        let mut rng = replica_rng(seed, r as u64);
        let mut noise = vec![0.0; n];
        let mut obs = Vec::with_capacity(steps.len());
        let mut k = 0;
        while k < steps.len() && steps[k] == 0 {
            obs.push(observe(r, k, &state.values));
            k += 1;
        }
        for s in 1..=last {
            for v in noise.iter_mut() {
                *v = rng.sample(StandardNormal);
            }
            step_unchecked(&mut state, cfg, &noise);
            while k < steps.len() && steps[k] == s {
                obs.push(observe(r, k, &state.values));
                k += 1;
            }
        }
        Ok((obs, state.clamps))
    });

    let mut observations = Vec::with_capacity(n_replicas);
    let mut clamps = 0;
    for res in results {
        let (obs, c) = res?;
        observations.push(obs);
        clamps += c;
    }
    Ok(SimOutput {
        observations,
        times: times.to_vec(),
        clamps,
        site_updates: (n_replicas * last * n) as u64,
    })
}

/// Final fields of every replica, stored replica-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Ensemble {
    pub config: LatticeConfig,
    pub initial: serde_json::Value,
    pub seed: u64,
    pub n_replicas: usize,
    pub n_sites: usize,
    pub fields: Vec<f64>,
    pub clamps: u64,
    pub site_updates: u64,
}

impl Ensemble {
    pub fn replica(&self, r: usize) -> &[f64] {
        &self.fields[r * self.n_sites..(r + 1) * self.n_sites]
    }

    /// Values `Z(t_final, x)` across replicas.
    pub fn column(&self, site: usize) -> Vec<f64> {
        (0..self.n_replicas)
            .map(|r| self.fields[r * self.n_sites + site])
            .collect()
    }

    pub fn clamp_rate(&self) -> f64 {
        if self.site_updates == 0 {
            0.0
        } else {
            self.clamps as f64 / self.site_updates as f64
        }
    }

    /// Moment estimate of `Z(t_final, x)^p`.
    pub fn estimate_moment(&self, p: f64, x: f64) -> Result<MomentEstimate> {
        let site = self
            .config
            .site(x)
            .ok_or_else(|| invalid(format!("x={x} is outside the lattice")))?;
        estimate_moment(&self.column(site), p, self.config.t_final, x, self.seed)
    }
}

/// Runs to `t_final` and keeps every replica's field.
pub fn run(
    initial: &Initial,
    cfg: &LatticeConfig,
    n_replicas: usize,
    seed: u64,
) -> Result<Ensemble> {
    let n = cfg.n_sites();
    let requested = n_replicas.saturating_mul(n).saturating_mul(8);
    if requested > MEMORY_LIMIT {
        return Err(Error::MemoryGuard {
            requested,
            limit: MEMORY_LIMIT,
        });
    }
    let out = simulate(initial, cfg, n_replicas, seed, &[cfg.t_final], |_, _, f| {
        f.to_vec()
    })?;
    let mut fields = Vec::with_capacity(n_replicas * n);
    for mut obs in out.observations {
        fields.append(&mut obs[0]);
    }
    Ok(Ensemble {
        config: *cfg,
        initial: initial.descriptor(),
        seed,
        n_replicas,
        n_sites: n,
        fields,
        clamps: out.clamps,
        site_updates: out.site_updates,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg() -> LatticeConfig {
        LatticeConfig::new(0.25, 1.0).unwrap()
    }

    #[test]
    fn config_geometry() {
        let c = cfg();
        assert_eq!(c.dt, 0.25 * 0.25 / 8.0);
        assert_eq!(c.half_sites(), 24);
        assert_eq!(c.x(c.origin()), 0.0);
        assert_eq!(c.site(0.5), Some(26));
        assert_eq!(c.site(100.0), None);
        assert_eq!(c.steps_to(1.0), 128);
        assert!(matches!(c.dt(0.1), Err(Error::Unstable { .. })));
        assert!(LatticeConfig::new(1.0, 0.0).is_err());
    }

    #[test]
    fn constant_field_is_fixed_without_noise() {
        let c = cfg();
        let mut s = FieldState::new(vec![1.0; c.n_sites()], 0);
        let noise = vec![0.0; c.n_sites()];
        let c = c.boundary(Boundary::Periodic);
        step(&mut s, &c, &noise).unwrap();
        assert!(s.values.iter().all(|&v| v == 1.0));
    }

    #[test]
    fn single_site_spreads() {
        let c = cfg();
        let n = c.n_sites();
        let mut z = vec![0.0; n];
        z[c.origin()] = 2.0;
        let mut s = FieldState::new(z, 0);
        step(&mut s, &c, &vec![0.0; n]).unwrap();
        let r = c.diffusion_ratio();
        assert_eq!(s.values[c.origin() - 1], r * 2.0);
        assert_eq!(s.values[c.origin() + 1], r * 2.0);
        assert_eq!(s.values[c.origin()], 2.0 * (1.0 - 2.0 * r));
    }

    #[test]
    fn clamping_is_counted() {
        let c = cfg();
        let n = c.n_sites();
        let mut s = FieldState::new(vec![1.0; n], 0);
        let mut noise = vec![0.0; n];
        noise[3] = -100.0;
        assert_eq!(step(&mut s, &c, &noise).unwrap(), 1);
        assert_eq!(s.values[3], 0.0);
        assert!(step(&mut s, &c, &noise[..3]).is_err());
    }

    #[test]
    fn flat_mean_is_preserved() {
        let c = cfg();
        let out = simulate(
            &Initial::Profile(Profile::flat()),
            &c,
            10_000,
            3,
            &[1.0],
            |_, _, f| f[c.origin()],
        )
        .unwrap();
        let v: Vec<f64> = out.observations.iter().map(|o| o[0]).collect();
        let est = estimate_moment(&v, 1.0, 1.0, 0.0, 3).unwrap();
        assert!((est.mean - 1.0).abs() < 3.0 * est.stderr, "{est:?}");
        assert!(out.clamp_rate() < 1e-3);
    }

    #[test]
    fn initial_fields() {
        let c = cfg();
        let nw = Initial::NarrowWedge.field(&c, 0, 0).unwrap();
        assert_eq!(nw[c.origin()], 4.0);
        assert_eq!(nw.iter().sum::<f64>(), 4.0);
        let flat = Initial::Profile(Profile::flat()).field(&c, 0, 0).unwrap();
        assert!(flat.iter().all(|&v| v == 1.0));
    }

    #[test]
    fn brownian_initial_is_lognormal() {
        let c = cfg();
        let init = Initial::Profile(Profile::brownian(0.0, 0.0).unwrap());
        let n = 20_000;
        let site = c.site(1.0).unwrap();
        let vals: Vec<f64> = (0..n)
            .map(|r| init.field(&c, 5, r).unwrap()[site])
            .collect();
        let est = estimate_moment(&vals, 1.0, 1.0, 1.0, 5).unwrap();
        // E e^{B(1)} = e^{1/2}
        assert!(
            (est.mean - 0.5f64.exp()).abs() < 3.0 * est.stderr,
            "{est:?}"
        );
        assert_eq!(init.field(&c, 5, 7).unwrap(), init.field(&c, 5, 7).unwrap());
    }

    #[test]
    fn run_respects_memory_guard() {
        let c = cfg();
        assert!(matches!(
            run(&Initial::NarrowWedge, &c, usize::MAX / 64, 1),
            Err(Error::MemoryGuard { .. })
        ));
        let e = run(&Initial::NarrowWedge, &c, 4, 1).unwrap();
        assert_eq!(e.fields.len(), 4 * c.n_sites());
        assert!(e.replica(2).iter().all(|v| *v >= 0.0));
    }
}
