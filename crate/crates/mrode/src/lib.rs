//! Multirate time integration for ODEs with slow and fast parts.
//!
//! A system may be split two ways: by components,
//!
//! ```text
//! d/dt [y_slow; y_fast] = [f_slow(y_slow, y_fast); f_fast(y_slow, y_fast)],
//! ```
//!
//! or additively, `dy/dt = f_slow(y) + f_fast(y)`. Multirate schemes advance
//! the slow part with a macro-step `H` and the fast part with `m` micro-steps
//! `h = H/m`, saving slow right-hand-side evaluations when those are the
//! expensive ones.
//!
//! The crate provides:
//!
//! * [`core`] — problem representations, the component/additive transforms,
//!   and dense linear-algebra / Newton plumbing shared by all integrators.
//! * [`problems`] — benchmark problems with reference solutions.
//! * [`tableaux`] — Runge-Kutta and multirate GARK coefficient data, a method
//!   registry with load-time validation, order-condition residuals, and
//!   coupled/decoupled classification.
//! * [`euler_mr`] — multirate forward Euler and the five backward Euler
//!   coupling strategies.
//! * [`gark_runner`] — execution of multirate GARK methods, embedded error
//!   estimation, and step-size/multirate-ratio controllers.
//! * [`lmm_mr`] — multirate linear multistep methods over coarse/fine history
//!   grids.
//! * [`rosw_mr`] — linearly implicit (Rosenbrock-type) multirate methods.
//! * [`mri`] — multirate infinitesimal methods, where the fast part is
//!   advanced by an inner ODE solve with polynomial slow forcing.
//! * [`extrap`] — Richardson extrapolation of first-order multirate base
//!   methods, plus selective per-component extrapolation.
//! * [`stability`] — transfer matrices on 2x2 linear test problems, phi
//!   functions, Routh-Hurwitz criteria, and stability-region scans.
//! * [`catalog`] — string-addressable problem and method catalogs used by the
//!   command-line harness.

pub mod catalog;
pub mod core;
pub mod error;
pub mod euler_mr;
pub mod extrap;
pub mod gark_runner;
pub mod lmm_mr;
pub mod mri;
pub mod problems;
pub mod refsol;
pub mod rosw_mr;
pub mod stability;
pub mod tableaux;

pub use error::{Error, Result};
