//! Taylor–Hood finite element solver for the 2D incompressible
//! Navier–Stokes equations with continuous data assimilation (nudging)
//! toward coarse observations of a manufactured solution.

pub mod assembly;
pub mod error;
pub mod fem;
pub mod harness;
pub mod manufactured;
pub mod mesh;
pub mod observe;
pub mod solver;
pub mod sparse;
pub mod timeloop;

pub use error::{Error, Result};
pub use mesh::{build_coarse_grid, build_fine_mesh, CoarseGrid, FineMesh};
pub use observe::InterpolantKind;
pub use sparse::SparseMatrix;
