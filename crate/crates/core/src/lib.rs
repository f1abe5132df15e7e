//! Numerical laboratory for the equivariant self-dual Chern-Simons-Schrodinger
//! equation in Coulomb gauge: radial grids and quadrature, gauge potentials and
//! covariant Cauchy-Riemann operators, the conjugation cascade, linearized
//! operators at the ground state with their outgoing Green's functions, modified
//! blow-up profiles, modulation decompositions, and time integration in the lab
//! and dynamically rescaled frames.

pub mod banded;
pub mod cascade;
pub mod cutoff;
pub mod decompose;
pub mod dynamics;
pub mod field;
pub mod gauge;
pub mod grid;
pub mod io;
pub mod norms;
pub mod profiles;
pub mod spectral;
pub mod testfields;

pub use field::EquivariantField;
pub use grid::RadialGrid;

use thiserror::Error;

/// Errors shared across the numerical modules.
#[derive(Debug, Error)]
pub enum CssError {
    #[error("grid configuration error: {0}")]
    GridConfig(String),
    #[error("fields live on different grids")]
    GridMismatch,
    #[error("unsupported derivative order {0}")]
    UnsupportedOrder(usize),
    #[error("equivariance index mismatch: expected {expected}, got {got}")]
    IndexMismatch { expected: usize, got: usize },
    #[error("{0}")]
    Domain(String),
    #[error("Newton did not converge after {iters} iterations (last residual {residual:e})")]
    NewtonDiverged { iters: usize, residual: f64 },
    #[error("Volterra marching did not converge: {0}")]
    VolterraDiverged(String),
    #[error("Picard iteration did not converge: {0}")]
    PicardDiverged(String),
    #[error("shooting bracket invalid: {0}")]
    BracketError(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("parse error: {0}")]
    Parse(String),
}

pub type Result<T> = std::result::Result<T, CssError>;
