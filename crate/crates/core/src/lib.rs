//! Boundary expansions for minimal graphs in hyperbolic half-space.
//!
//! The crate covers the full pipeline around the Dirichlet problem for
//! hyperbolic minimal graphs near the boundary `t = 0`:
//!
//! - [`jet`]: truncated Taylor arithmetic backing exact analytic derivatives;
//! - [`fields`]: tangential boundary data (analytic or sampled) and its
//!   differential geometry (mean/Gauss curvature, Willmore residual);
//! - [`logpoly`]: log-polynomials `sum c_{i,j}(y') t^i (log t)^j` with
//!   singular integration;
//! - [`expansion`]: the formal boundary expansion of the minimal graph
//!   operator, coefficient by coefficient;
//! - [`ode`]: the singular ODE engine (integral representations, level
//!   reduction, formal log expansions);
//! - [`mesh`], [`pde`]: graded-mesh nonlinear finite-difference solver for
//!   the interior equation;
//! - [`remainder`]: decay-exponent and log-power fitting of remainders;
//! - [`config`], [`cli`]: the `graphexp` command-line front end.

pub mod band;
pub mod cli;
pub mod config;
pub mod error;
pub mod expansion;
pub mod fields;
pub mod jet;
pub mod logpoly;
pub mod mesh;
pub mod ode;
pub mod pde;
pub mod remainder;

pub use error::{Error, Result};
