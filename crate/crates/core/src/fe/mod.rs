//! Plane-stress finite elements on a structured grid of square bilinear
//! quadrilaterals: element stiffness, banded assembly over active elements,
//! constrained direct solves, and floating-island detection.

mod assembly;
mod banded;
mod connectivity;
pub mod element;
mod grid;
mod solve;

pub use assembly::{assemble, assemble_with, gather, orphan_dofs};
pub use banded::{BandedCholesky, BandedMatrix};
pub use connectivity::detect_floating_regions;
pub use element::{element_stiffness, ElementMatrix};
pub use grid::{BoundaryConditionSet, DensityField, ElasticProperties, StructuredGrid};
pub use solve::{constrain_and_solve, constrain_and_solve_detailed, Solution};
