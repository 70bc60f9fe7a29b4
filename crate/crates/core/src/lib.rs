//! Two-species Lotka–Volterra competition with finite-time extinction
//! mechanisms.
//!
//! The crate covers the harvested ODE model
//!
//! ```text
//! u' = a1 u - b1 u^2 - c1 u v
//! v' = a2 q v - b2 v^2 - c2 u v - (1 - q) v^p
//! ```
//!
//! (equilibria, stability, saddle-node and boundary-collision bifurcations in
//! `q`, event-aware simulation), a 1-D competition–diffusion PDE where a
//! fraction `k` of the `v` population moves by fast `p`-Laplacian diffusion,
//! and a soybean-aphid biotype model with harvesting of the avirulent biotype.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod aphid;
pub mod bifurcation;
pub mod equilibria;
pub mod error;
pub mod integrator;
pub mod linalg;
pub mod model;
pub mod ode;
pub mod pde;
pub mod roots;

pub use error::{FtemError, Result};
pub use model::{CompetitionParams, Regime, State2};

/// Format a float with 17 significant digits, enough for an exact
/// round trip of any `f64`.
pub fn fmt_f64(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.16e}")
    } else {
        x.to_string()
    }
}
