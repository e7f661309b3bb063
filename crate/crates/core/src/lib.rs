//! Finite-volume simulation and estimate auditing for the chemotaxis
//! consumption system
//!
//! ```text
//! u_t = ∇·(D(u)∇u) − ∇·((u/v)∇v),   v_t = Δv − uv,   ∂_ν u = ∂_ν v = 0
//! ```
//!
//! with nonlinear, possibly degenerate diffusion D(s) ≥ δ s^{m−1}.

pub mod audit;
pub mod config;
pub mod diagnostics;
pub mod driver;
pub mod error;
pub mod grid;
pub mod io;
pub mod ladder;
pub mod model;
pub mod snapshot;
pub mod solver;
pub mod stepper;
pub mod sweep;

pub use error::{Error, Result};
pub use grid::{GridSpec, ScalarField};
pub use model::{DiffusionSpec, InitialData, InitialSpec};
pub use stepper::{run, Formulation, RunOptions, RunOutput, RunStatus, SchemeConfig, SimState};
