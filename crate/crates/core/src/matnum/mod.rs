//! Dense kernels for small real matrices and scalar / 2-D root finding.

mod eigen;
mod expm;
mod matrix;
mod roots;

pub use eigen::{eigenvalues, spectral_radius, MAX_EIGEN_DIM};
pub use expm::{expm, expm_pair};
pub use matrix::{Lu, Matrix};
pub use roots::{bisect_root, bracketed_roots, golden_extremum, newton_2d, DEFAULT_GRID};
