//! Numerical laboratory for moment Lyapunov exponents of the (1+1)-dimensional
//! stochastic heat equation `∂ₜZ = ½∂ₓₓZ + Zξ` and upper-tail large-deviation
//! rate functions of the KPZ equation `H = log Z`.
//!
//! The crate is organized around the initial-data families `f_t` for which
//! `Lya_p = (p³ − p)/24 + g(p)`:
//!
//! - [`profiles`]: initial-data families and their log moment generating
//!   functions, plus grid-point sequences.
//! - [`variational`]: the spatial sup defining `g(p)`, its near-argmax set,
//!   and convexity checks.
//! - [`hyp`]: finite-resolution checks of every admissibility condition.
//! - [`rates`]: Lyapunov exponents, Legendre-dual rate functions and the
//!   closed forms for deterministic and Brownian initial data.
//! - [`sim`]: an Euler–Maruyama lattice simulator with exact first- and
//!   second-moment recursions used as oracles.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod error;
pub mod hyp;
pub mod numerics;
pub mod profiles;
pub mod rates;
pub mod report;
pub mod rng;
pub mod sim;
pub mod variational;

pub use error::{Error, Result};
pub use profiles::{GridPoints, Profile};
