//! Pseudo-spectral simulation of incompressible viscoelastic fluids of
//! Oldroyd-B type (Hookean elasticity, infinite Weissenberg number) on the
//! periodic box `[0, 2π)^d`, `d ∈ {2, 3}`.
//!
//! The unknowns are the velocity `v` and the strain `E = F - I` of the
//! deformation tensor `F`. Every structural identity of the system is exposed
//! as a checkable quantity: incompressibility of the strain
//! (`det(I+E) = 1`, `∇·Eᵀ = 0`), the curl identity linking `∇×E` to a
//! quadratic term, the energy law, and the low-Mach limit of the compressible
//! model.
//!
//! Module map:
//! - [`spectral`]: transforms, derivatives, dealiasing, Leray projection, Sobolev norms;
//! - [`constraints`]: admissible initial data and constraint residuals;
//! - [`dynamics`]: right-hand side, pressure recovery, time stepping, runs;
//! - [`diagnostics`]: energies, auxiliary variable, Hodge split, monitors, CSV;
//! - [`mach`]: compressible system and incompressible-limit study;
//! - [`snapshot`]: binary field snapshots and JSON sidecars.

pub mod constraints;
pub mod diagnostics;
pub mod dynamics;
pub mod field;
pub mod grid;
pub mod mach;
pub mod presets;
pub mod snapshot;
pub mod spectral;
mod kernels;
mod tensor;

pub use field::{Field, Rank, Repr, Samples};
pub use grid::{Grid, GridError};
pub use rustfft::num_complex::Complex64;
pub use spectral::{SobolevIndex, Spectral, SpectralConfig, SpectralError};
