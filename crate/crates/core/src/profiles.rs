//! Initial-data families `f_t` and their log moment generating functions
//! `log M_p(t, x)`, together with grid-point sequences `{θ_n}`.

use std::fmt;
use std::sync::Arc;

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// Space-only function `x ↦ h(x)`.
pub type SpaceFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;
/// Time-indexed family `(t, x) ↦ f_t(x)`.
pub type FamilyFn = Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>;
/// Grid generator `n ↦ θ_n`.
pub type GridFn = Arc<dyn Fn(i64) -> f64 + Send + Sync>;

/// Shape of a bounded deterministic profile.
#[derive(Clone)]
pub enum BoundedShape {
    Constant(f64),
    /// `amplitude * sin(frequency * x)`
    Sine {
        amplitude: f64,
        frequency: f64,
    },
    Custom(SpaceFn),
}

impl BoundedShape {
    fn eval(&self, x: f64) -> f64 {
        match self {
            BoundedShape::Constant(c) => *c,
            BoundedShape::Sine {
                amplitude,
                frequency,
            } => amplitude * (frequency * x).sin(),
            BoundedShape::Custom(h) => h(x),
        }
    }
}

/// Declared growth constants of a custom family:
/// `|f_t(x)| <= c (1 + |x|^delta) + alpha x² / (2t)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GrowthConstants {
    pub c: f64,
    pub delta: f64,
    pub alpha: f64,
}

/// Linear-plus-Gaussian envelope of `log M_p`:
/// `log M_p(t, x) <= c_lin (1 + |x|) + alpha p x² / (2t)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Envelope {
    pub c_lin: f64,
    pub alpha: f64,
}

/// An initial-data family `f_t`, deterministic or the Brownian-with-drift law.
#[derive(Clone)]
pub enum Profile {
    Bounded {
        shape: BoundedShape,
        bound: f64,
    },
    /// `f_t(x) = scale |x|^delta`
    PowerLaw {
        delta: f64,
        scale: f64,
    },
    /// `f_t(x) = alpha x² / (2t)`
    Parabolic {
        alpha: f64,
    },
    /// `f(x) = B(x) + a_plus x 1{x>=0} - a_minus x 1{x<=0}` for a two-sided
    /// standard Brownian motion `B` with `B(0) = 0`.
    BrownianDrift {
        a_plus: f64,
        a_minus: f64,
    },
    Custom {
        f: FamilyFn,
        growth: GrowthConstants,
    },
}

impl fmt::Debug for Profile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Profile::Bounded { shape, bound } => {
                let s = match shape {
                    BoundedShape::Constant(c) => format!("Constant({c})"),
                    BoundedShape::Sine {
                        amplitude,
                        frequency,
                    } => format!("Sine({amplitude}, {frequency})"),
                    BoundedShape::Custom(_) => "Custom".into(),
                };
                write!(f, "Bounded {{ shape: {s}, bound: {bound} }}")
            }
            Profile::PowerLaw { delta, scale } => {
                write!(f, "PowerLaw {{ delta: {delta}, scale: {scale} }}")
            }
            Profile::Parabolic { alpha } => write!(f, "Parabolic {{ alpha: {alpha} }}"),
            Profile::BrownianDrift { a_plus, a_minus } => {
                write!(
                    f,
                    "BrownianDrift {{ a_plus: {a_plus}, a_minus: {a_minus} }}"
                )
            }
            Profile::Custom { growth, .. } => write!(f, "Custom {{ growth: {growth:?} }}"),
        }
    }
}

impl Profile {
    /// `h ≡ 0`, i.e. flat initial data `Z(0, ·) ≡ 1`.
    pub fn flat() -> Self {
        Self::constant(0.0)
    }

    pub fn constant(c: f64) -> Self {
        Profile::Bounded {
            shape: BoundedShape::Constant(c),
            bound: c.abs(),
        }
    }

    pub fn bounded(h: SpaceFn, bound: f64) -> Result<Self> {
        if !(bound >= 0.0 && bound.is_finite()) {
            return Err(invalid("bound must be finite and non-negative"));
        }
        Ok(Profile::Bounded {
            shape: BoundedShape::Custom(h),
            bound,
        })
    }

    pub fn sine(amplitude: f64, frequency: f64) -> Self {
        Profile::Bounded {
            shape: BoundedShape::Sine {
                amplitude,
                frequency,
            },
            bound: amplitude.abs(),
        }
    }

    pub fn power_law(delta: f64, scale: f64) -> Result<Self> {
        if !(delta > 0.0 && delta < 1.0) {
            return Err(invalid(format!(
                "power-law exponent must lie in (0,1), got {delta}"
            )));
        }
        if !(scale >= 0.0 && scale.is_finite()) {
            return Err(invalid("power-law scale must be non-negative"));
        }
        Ok(Profile::PowerLaw { delta, scale })
    }

    pub fn parabolic(alpha: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(invalid(format!(
                "parabolic alpha must lie in (0,1), got {alpha}"
            )));
        }
        Ok(Profile::Parabolic { alpha })
    }

    pub fn brownian(a_plus: f64, a_minus: f64) -> Result<Self> {
        if !(a_plus.is_finite() && a_minus.is_finite()) {
            return Err(invalid("drift parameters must be finite"));
        }
        Ok(Profile::BrownianDrift { a_plus, a_minus })
    }

    pub fn custom(f: FamilyFn, growth: GrowthConstants) -> Result<Self> {
        let GrowthConstants { c, delta, alpha } = growth;
        if !(c > 0.0 && delta > 0.0 && delta < 1.0 && alpha > 0.0 && alpha < 1.0) {
            return Err(invalid(
                "custom growth constants need c>0 and delta, alpha in (0,1)",
            ));
        }
        Ok(Profile::Custom { f, growth })
    }

    pub fn is_deterministic(&self) -> bool {
        !matches!(self, Profile::BrownianDrift { .. })
    }

    /// `max{a_plus, a_minus}` for Brownian data, `None` otherwise.
    pub fn drift(&self) -> Option<f64> {
        match self {
            Profile::BrownianDrift { a_plus, a_minus } => Some(a_plus.max(*a_minus)),
            _ => None,
        }
    }

    /// Deterministic value `f_t(x)`; `None` for the Brownian law.
    ///
    /// Bounded and custom profiles are checked against their declared
    /// bounds on every query.
    pub fn value(&self, t: f64, x: f64) -> Result<Option<f64>> {
        let v = match self {
            Profile::Bounded { shape, bound } => {
                let v = shape.eval(x);
                if v.abs() > bound * (1.0 + 1e-12) + 1e-300 {
                    return Err(Error::GrowthViolation {
                        t,
                        x,
                        value: v.abs(),
                        bound: *bound,
                    });
                }
                v
            }
            Profile::PowerLaw { delta, scale } => scale * x.abs().powf(*delta),
            Profile::Parabolic { alpha } => alpha * x * x / (2.0 * t),
            Profile::BrownianDrift { .. } => return Ok(None),
            Profile::Custom { f, growth } => {
                let v = f(t, x);
                let bound = growth.c * (1.0 + x.abs().powf(growth.delta))
                    + growth.alpha * x * x / (2.0 * t);
                if !(v.abs() <= bound * (1.0 + 1e-12)) {
                    return Err(Error::GrowthViolation {
                        t,
                        x,
                        value: v.abs(),
                        bound,
                    });
                }
                v
            }
        };
        Ok(Some(v))
    }

    /// Drift part `a_plus x 1{x>=0} - a_minus x 1{x<=0}` of the Brownian law.
    pub fn drift_term(&self, x: f64) -> f64 {
        match self {
            Profile::BrownianDrift { a_plus, a_minus } => {
                if x >= 0.0 {
                    a_plus * x
                } else {
                    -a_minus * x
                }
            }
            _ => 0.0,
        }
    }

    /// `log M_p(t, x)`: `p f_t(x)` for deterministic data, `log E[e^{p f(x)}]`
    /// in closed form for the Brownian law.
    pub fn log_mgf(&self, p: f64, t: f64, x: f64) -> Result<f64> {
        if !(p > 0.0) {
            return Err(invalid(format!("p must be positive, got {p}")));
        }
        if !(t > 0.0) {
            return Err(invalid(format!("t must be positive, got {t}")));
        }
        Ok(self.log_mgf_unchecked(p, t, x))
    }

    /// Like [`Profile::log_mgf`] without argument validation; growth
    /// violations of custom profiles surface as NaN.
    pub(crate) fn log_mgf_unchecked(&self, p: f64, t: f64, x: f64) -> f64 {
        match self {
            Profile::BrownianDrift { .. } => p * p * x.abs() / 2.0 + p * self.drift_term(x),
            _ => match self.value(t, x) {
                Ok(Some(v)) => p * v,
                _ => f64::NAN,
            },
        }
    }

    /// Evaluator view of `log M_p`.
    pub fn log_mgf_fn(&self) -> LogMgf<'_> {
        LogMgf { profile: self }
    }

    /// Envelope used to bracket the variational sup.
    pub fn envelope(&self, p: f64) -> Envelope {
        match self {
            Profile::Bounded { bound, .. } => Envelope {
                c_lin: p * bound,
                alpha: 0.0,
            },
            Profile::PowerLaw { scale, .. } => Envelope {
                c_lin: p * scale,
                alpha: 0.0,
            },
            Profile::Parabolic { alpha } => Envelope {
                c_lin: 0.0,
                alpha: *alpha,
            },
            Profile::BrownianDrift { a_plus, a_minus } => Envelope {
                c_lin: p * p / 2.0 + p * a_plus.abs().max(a_minus.abs()),
                alpha: 0.0,
            },
            Profile::Custom { growth, .. } => Envelope {
                c_lin: p * growth.c,
                alpha: growth.alpha,
            },
        }
    }

    /// Default grid points: `θ_n = n`, except `sign(n)|n|^{1/2}` for the
    /// parabolic family.
    pub fn default_grid(&self) -> GridPoints {
        match self {
            Profile::Parabolic { .. } => GridPoints::signed_sqrt(),
            _ => GridPoints::unit(),
        }
    }

    /// JSON-serializable descriptor, if the profile has one.
    pub fn descriptor(&self) -> Option<ProfileDescriptor> {
        Some(match self {
            Profile::Bounded { shape, .. } => match shape {
                BoundedShape::Constant(c) => ProfileDescriptor::Bounded {
                    h: ShapeDescriptor::Constant { value: *c },
                },
                BoundedShape::Sine {
                    amplitude,
                    frequency,
                } => ProfileDescriptor::Bounded {
                    h: ShapeDescriptor::Sine {
                        amplitude: *amplitude,
                        frequency: *frequency,
                    },
                },
                BoundedShape::Custom(_) => return None,
            },
            Profile::PowerLaw { delta, scale } => ProfileDescriptor::PowerLaw {
                delta: *delta,
                scale: *scale,
            },
            Profile::Parabolic { alpha } => ProfileDescriptor::Parabolic { alpha: *alpha },
            Profile::BrownianDrift { a_plus, a_minus } => ProfileDescriptor::Brownian {
                a_plus: *a_plus,
                a_minus: *a_minus,
            },
            Profile::Custom { .. } => return None,
        })
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let d: ProfileDescriptor = serde_json::from_str(s)?;
        d.build()
    }
}

/// Evaluator for `log M_p(t, x)`. Every built-in profile is evaluated in
/// closed form, so `exact()` is always true.
#[derive(Debug, Clone, Copy)]
pub struct LogMgf<'a> {
    profile: &'a Profile,
}

impl LogMgf<'_> {
    pub fn eval(&self, p: f64, t: f64, x: f64) -> Result<f64> {
        self.profile.log_mgf(p, t, x)
    }

    pub fn exact(&self) -> bool {
        true
    }
}

fn one() -> f64 {
    1.0
}

/// JSON form of a profile, e.g. `{"kind": "brownian", "a_plus": 1.0, "a_minus": -0.5}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ProfileDescriptor {
    Flat,
    Bounded {
        #[serde(default)]
        h: ShapeDescriptor,
    },
    PowerLaw {
        delta: f64,
        #[serde(default = "one")]
        scale: f64,
    },
    Parabolic {
        alpha: f64,
    },
    Brownian {
        #[serde(default)]
        a_plus: f64,
        #[serde(default)]
        a_minus: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ShapeDescriptor {
    Constant { value: f64 },
    Sine { amplitude: f64, frequency: f64 },
}

impl Default for ShapeDescriptor {
    fn default() -> Self {
        ShapeDescriptor::Constant { value: 0.0 }
    }
}

impl ProfileDescriptor {
    pub fn build(&self) -> Result<Profile> {
        match *self {
            ProfileDescriptor::Flat => Ok(Profile::flat()),
            ProfileDescriptor::Bounded { ref h } => Ok(match *h {
                ShapeDescriptor::Constant { value } => Profile::constant(value),
                ShapeDescriptor::Sine {
                    amplitude,
                    frequency,
                } => Profile::sine(amplitude, frequency),
            }),
            ProfileDescriptor::PowerLaw { delta, scale } => Profile::power_law(delta, scale),
            ProfileDescriptor::Parabolic { alpha } => Profile::parabolic(alpha),
            ProfileDescriptor::Brownian { a_plus, a_minus } => Profile::brownian(a_plus, a_minus),
        }
    }
}

#[derive(Clone)]
enum Generator {
    Unit,
    SignedSqrt,
    Custom(GridFn),
}

/// Grid points `{θ_n}` with the spacing constants `(c, β)` of the lower
/// bound `(max{c|n|, 1})^{-β} <= |θ_{n+1} - θ_n| <= 1`.
#[derive(Clone)]
pub struct GridPoints {
    generator: Generator,
    pub c: f64,
    pub beta: f64,
}

impl fmt::Debug for GridPoints {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let g = match self.generator {
            Generator::Unit => "unit",
            Generator::SignedSqrt => "signed_sqrt",
            Generator::Custom(_) => "custom",
        };
        write!(
            f,
            "GridPoints {{ {g}, c: {}, beta: {} }}",
            self.c, self.beta
        )
    }
}

impl GridPoints {
    /// `θ_n = n`.
    pub fn unit() -> Self {
        Self {
            generator: Generator::Unit,
            c: 1.0,
            beta: 0.5,
        }
    }

    /// `θ_n = sign(n)|n|^{1/2}`; spacing is at least `min{1, |n|^{-1/2}/4}`,
    /// which is the lower bound with `c = 16`, `β = 1/2`.
    pub fn signed_sqrt() -> Self {
        Self {
            generator: Generator::SignedSqrt,
            c: 16.0,
            beta: 0.5,
        }
    }

    pub fn custom(theta: GridFn, c: f64, beta: f64) -> Self {
        Self {
            generator: Generator::Custom(theta),
            c,
            beta,
        }
    }

    pub fn with_constants(mut self, c: f64, beta: f64) -> Self {
        self.c = c;
        self.beta = beta;
        self
    }

    pub fn theta(&self, n: i64) -> f64 {
        match &self.generator {
            Generator::Unit => n as f64,
            Generator::SignedSqrt => (n.signum() as f64) * (n.unsigned_abs() as f64).sqrt(),
            Generator::Custom(g) => g(n),
        }
    }

    /// Cell `[θ_n, θ_{n+1}]`.
    pub fn cell(&self, n: i64) -> (f64, f64) {
        (self.theta(n), self.theta(n + 1))
    }

    /// Largest `n` with `θ_n <= x`, found by bracketing and bisection.
    pub fn cell_index(&self, x: f64) -> i64 {
        let mut lo: i64 = -1;
        while self.theta(lo) > x {
            lo *= 2;
        }
        let mut hi: i64 = 1;
        while self.theta(hi) <= x {
            hi *= 2;
        }
        while hi - lo > 1 {
            let mid = lo + (hi - lo) / 2;
            if self.theta(mid) <= x {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        lo
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GridViolationKind {
    NotIncreasing,
    OriginNotZero,
    SpacingTooLarge,
    SpacingTooSmall,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridViolation {
    pub n: i64,
    pub kind: GridViolationKind,
    /// The offending spacing `|θ_{n+1} - θ_n|` (or `θ_0`).
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridReport {
    pub range: (i64, i64),
    pub c: f64,
    pub beta: f64,
    pub violations: Vec<GridViolation>,
}

impl GridReport {
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Checks monotonicity, `θ_0 = 0` and both spacing bounds for every `n`
/// with `n, n+1` in `[lo, hi]`.
pub fn check_grid_axioms(grid: &GridPoints, lo: i64, hi: i64) -> GridReport {
    let mut violations = Vec::new();
    if lo <= 0 && 0 <= hi && grid.theta(0) != 0.0 {
        violations.push(GridViolation {
            n: 0,
            kind: GridViolationKind::OriginNotZero,
            value: grid.theta(0),
        });
    }
    for n in lo..hi {
        let gap = grid.theta(n + 1) - grid.theta(n);
        if !(gap > 0.0) {
            violations.push(GridViolation {
                n,
                kind: GridViolationKind::NotIncreasing,
                value: gap,
            });
            continue;
        }
        if gap > 1.0 + 1e-15 {
            violations.push(GridViolation {
                n,
                kind: GridViolationKind::SpacingTooLarge,
                value: gap,
            });
        }
        let lower = (grid.c * n.unsigned_abs() as f64).max(1.0).powf(-grid.beta);
        if gap < lower * (1.0 - 1e-15) {
            violations.push(GridViolation {
                n,
                kind: GridViolationKind::SpacingTooSmall,
                value: gap,
            });
        }
    }
    GridReport {
        range: (lo, hi),
        c: grid.c,
        beta: grid.beta,
        violations,
    }
}

/// Samples the Brownian-with-drift profile on a strictly increasing mesh
/// containing 0. The two half-lines use independent ChaCha streams of
/// `seed`, so the right half does not depend on the left mesh.
pub fn sample_brownian_path(profile: &Profile, mesh: &[f64], seed: u64) -> Result<Vec<f64>> {
    let mut right = ChaCha8Rng::seed_from_u64(seed);
    right.set_stream(0);
    let mut left = ChaCha8Rng::seed_from_u64(seed);
    left.set_stream(1);
    sample_brownian_path_with(profile, mesh, &mut right, &mut left)
}

/// Same as [`sample_brownian_path`] with caller-supplied generators for the
/// right and left half-lines.
pub fn sample_brownian_path_with<R: Rng + ?Sized>(
    profile: &Profile,
    mesh: &[f64],
    right: &mut R,
    left: &mut R,
) -> Result<Vec<f64>> {
    if !matches!(profile, Profile::BrownianDrift { .. }) {
        return Err(invalid("path sampling requires a Brownian profile"));
    }
    if mesh.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(invalid("mesh must be strictly increasing"));
    }
    let zero = mesh
        .iter()
        .position(|&x| x == 0.0)
        .ok_or_else(|| invalid("mesh must contain 0"))?;
    let mut out = vec![0.0; mesh.len()];
    let mut b = 0.0;
    for i in zero + 1..mesh.len() {
        let z: f64 = right.sample(StandardNormal);
        b += (mesh[i] - mesh[i - 1]).sqrt() * z;
        out[i] = b;
    }
    b = 0.0;
    for i in (0..zero).rev() {
        let z: f64 = left.sample(StandardNormal);
        b += (mesh[i + 1] - mesh[i]).sqrt() * z;
        out[i] = b;
    }
    for (v, &x) in out.iter_mut().zip(mesh) {
        *v += profile.drift_term(x);
    }
    Ok(out)
}

/// Linear interpolation of a sampled path at `x` (clamped to the mesh ends).
pub fn interpolate_path(mesh: &[f64], values: &[f64], x: f64) -> f64 {
    match mesh.binary_search_by(|v| v.total_cmp(&x)) {
        Ok(i) => values[i],
        Err(0) => values[0],
        Err(i) if i == mesh.len() => values[mesh.len() - 1],
        Err(i) => {
            let w = (x - mesh[i - 1]) / (mesh[i] - mesh[i - 1]);
            values[i - 1] * (1.0 - w) + values[i] * w
        }
    }
}
