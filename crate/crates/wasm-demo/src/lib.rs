//! Browser bindings for the interactive demo in `www/`.
//!
//! Curves are returned as flat `Float64Array`s of `(x, y, ...)` tuples;
//! structured results are JSON strings.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

use kpzlab::profiles::Profile;
use kpzlab::rates::{closed_form_rate, lyapunov, rate_function, Family, GSource};
use kpzlab::variational::{max_set, objective, sup_phi};
use serde_json::json;
use wasm_bindgen::prelude::*;

fn err(e: impl std::fmt::Display) -> JsError {
    JsError::new(&e.to_string())
}

fn source(family: &str, a: f64) -> Result<GSource, JsError> {
    match family {
        "deterministic" => Ok(GSource::ClosedFormZero),
        "brownian" => Ok(GSource::brownian(a)),
        other => Err(err(format!("unknown family {other:?}"))),
    }
}

/// `[s, rate, closed_form, p_star, ...]` for `n` points of `s ∈ (ζ, s_max]`.
#[wasm_bindgen]
pub fn rate_curve(family: &str, a: f64, s_max: f64, n: usize) -> Result<Vec<f64>, JsError> {
    let g = source(family, a)?;
    let zeta = g.zeta();
    if !(s_max > zeta) || n < 2 {
        return Err(err(format!("need s_max > zeta = {zeta} and n >= 2")));
    }
    let fam = match family {
        "brownian" => Family::Brownian { a },
        _ => Family::Deterministic,
    };
    let mut out = Vec::with_capacity(4 * n);
    for i in 1..=n {
        let s = zeta + (s_max - zeta) * i as f64 / n as f64;
        let r = rate_function(s, &g, zeta).map_err(err)?;
        out.extend([s, r.rate, closed_form_rate(s, fam).map_err(err)?, r.p_star]);
    }
    Ok(out)
}

/// `[p, lya, g, ...]` for `n` points of `p ∈ (0, p_max]`.
#[wasm_bindgen]
pub fn lyapunov_curve(family: &str, a: f64, p_max: f64, n: usize) -> Result<Vec<f64>, JsError> {
    let g = source(family, a)?;
    if !(p_max > 0.0) || n < 2 {
        return Err(err("need p_max > 0 and n >= 2"));
    }
    let mut out = Vec::with_capacity(3 * n);
    for i in 1..=n {
        let p = p_max * i as f64 / n as f64;
        out.extend([p, lyapunov(p, &g).map_err(err)?, g.value(p)]);
    }
    Ok(out)
}

/// `φ_t(x) = −p x²/(2t) + log M_p(t, x)` on `[−w, w]` with its sup and
/// near-argmax set. `profile` is a JSON descriptor such as
/// `{"kind": "power_law", "delta": 0.5}`.
#[wasm_bindgen]
pub fn phi_objective(
    profile: &str,
    p: f64,
    t: f64,
    omega: f64,
    w: f64,
    n: usize,
) -> Result<String, JsError> {
    let prof = Profile::from_json(profile).map_err(err)?;
    if !(w > 0.0) || n < 2 {
        return Err(err("need w > 0 and n >= 2"));
    }
    let sup = sup_phi(&prof, p, t).map_err(err)?;
    let set = max_set(&prof, p, omega, t).map_err(err)?;
    let f = objective(&prof, p, t);
    let xs: Vec<f64> = (0..n)
        .map(|i| -w + 2.0 * w * i as f64 / (n - 1) as f64)
        .collect();
    let ys: Vec<f64> = xs.iter().map(|&x| f(x)).collect();
    Ok(json!({
        "x": xs,
        "phi": ys,
        "sup": sup.value,
        "argmax": sup.argmax,
        "sup_over_t": sup.value / t,
        "exact": sup.exact,
        "max_set": set.intervals,
        "x_extreme": set.x_extreme,
    })
    .to_string())
}
