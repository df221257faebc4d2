//! Periodic lattice, Fourier-multiplier fractional operators, region masks,
//! norms and the matrix-free CG solver. Every other module touches fields only
//! through this one.

mod cg;
mod field;
mod grid;
pub mod io;
mod mask;
mod ops;

pub use cg::{cg_solve, CgReport, ConjugateGradient};
pub use field::{ScalarField, SpaceTimeField};
pub use grid::{Grid, GridParams};
pub use mask::{AxisBox, Region, RegionMask};
pub use ops::{
    hs_tilde_norm, inner, l2_norm, masked_stiffness, spacetime_inner, spacetime_l2, sup_hs, sup_l2,
    time_weights,
};

pub(crate) use field::dot;
pub(crate) use ops::{hs_sq, inner_raw, region_sq, stiffness_into};
