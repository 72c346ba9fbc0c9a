//! Mixed finite elements and stability diagnostics for three-field Biot
//! poroelasticity on the unit square.
//!
//! The crate discretizes the displacement / Darcy-flux / pressure form of the
//! Biot consolidation system with a backward-Euler step in time, and ships the
//! numerical toolkit needed to study its robustness as the permeability and
//! storage coefficients degenerate: structured triangulations, reference
//! elements, mixed-space assembly, a sparse symmetric-indefinite direct
//! solver, eigenvalue-based inf-sup diagnostics, and a CLI that drives
//! convergence studies and stability reports.

pub mod assemble;
pub mod cli;
pub mod diagnostics;
pub mod driver;
pub mod linsolve;
pub mod mesh;
pub mod metrics;
pub mod pairing;
pub mod problem;
pub mod refelem;
pub mod report;
pub mod space;
pub mod sparse;
