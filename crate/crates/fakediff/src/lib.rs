//! Fake diffusions: continuous martingales that share every one-dimensional
//! marginal law with Brownian motion or exponential Brownian motion yet are
//! not those processes.
//!
//! The construction mixes two well-chosen martingales. A slowed copy
//! `G_t = X_{a(t)}` of the reference diffusion runs on a clock `a` with
//! `a'(t) < 1`, and the probability mass this frees up is absorbed by a
//! local-volatility diffusion `H` whose marginals are the residual
//! densities `h_t = (f_t - c f_{a(t)}) / (1 - c)`. Starting a path as `G`
//! with probability `c` (decided once, at time zero) and as `H` otherwise
//! produces a martingale whose time-t density is `f_t` for every `t`, even
//! though its quadratic variation gives it away as a different process.
//! A separate construction stops a Brownian motion on nested barycentre
//! domains and yields a discontinuous process with the same lognormal
//! marginals.
//!
//! Capabilities, one runnable example each (see `examples/`):
//!
//! * [`laws`] — analytic marginal data of the two reference diffusions;
//! * [`timechange`] — slowdown clocks and the density-ratio bound `K`;
//! * [`mixture`] — residual density, local volatility `eta`, validation;
//! * [`simulate`] — seeded, reproducible Monte Carlo for all components;
//! * [`embed`] — the stopped-Brownian (barycentre) discontinuous variant;
//! * [`verify`] — PDE cross-check, convex order, statistical test battery;
//! * [`cli`] — the `fakediff` binary: `inspect`, `simulate`, `verify`,
//!   `madan-yor` subcommands with CSV/JSON outputs.

pub mod cli;
pub mod embed;
pub mod error;
pub mod laws;
pub mod mixture;
pub mod numerics;
pub mod simulate;
pub mod timechange;
pub mod verify;

pub use error::{Error, Result};
