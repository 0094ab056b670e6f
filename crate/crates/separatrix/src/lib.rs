//! Committor functions, stochastic separatrices and a geometric early-warning
//! indicator for bistable stochastic differential equations.
//!
//! The crate solves the backward Kolmogorov boundary-value problems for the
//! committor q(x) and the mean first passage time τ(x) on uniform grids,
//! extracts the stochastic separatrix Γ = {q = 1/2}, and averages the local
//! transition-layer width along Γ to obtain the indicator
//!
//! ```text
//! EWS_geom = (1/L(Γ)) ∫_Γ 2α/‖∇q‖ ds,
//! ```
//!
//! which connects to escape times through log⟨τ⟩ ≈ c₁ + c₂/EWS_geom².
//! Monte Carlo simulation, 1D stationary densities, classic variance/AC(1)
//! early-warning statistics and the regression pipelines used to verify the
//! scaling law live in the corresponding modules.
//!
//! # Example
//!
//! Committor and indicator for the Schlögl model:
//!
//! ```
//! use separatrix::model::SdeSystem;
//! use separatrix::pde::{self, EllipseRegion, Grid};
//!
//! let sys = SdeSystem::schlogl(0.1, 0.5, 0.9, 0.04)?;
//! let grid = Grid::new(sys.domain.clone(), vec![2001]);
//! let op = pde::assemble_generator(&sys, &grid)?;
//! let r1 = EllipseRegion::new(vec![0.1], vec![0.015]);
//! let r3 = EllipseRegion::new(vec![0.9], vec![0.015]);
//! let q = pde::solve_committor(&op, &r1, &r3)?;
//! let ews = separatrix::geometry::ews_geom_1d(&q, 0.1)?;
//! assert!(ews > 0.0 && ews < 0.5);
//! # Ok::<(), separatrix::Error>(())
//! ```

pub mod analysis;
pub mod error;
pub mod geometry;
pub mod indicators;
pub(crate) mod linalg;
pub mod model;
pub mod pde;
pub mod simulate;
pub mod stationary;

pub use error::{Error, Result};
