//! Duration laws, the stationary-excess transform and convolution kernels.

mod dist;
mod joint;
mod kernels;

pub use dist::{equilibrium_dist, DurationDist};
pub use joint::{Conditional, JointDurationDist};
pub use kernels::{
    tabulate_cdf, tabulate_kernels, tabulate_phi, tabulate_phi_psi, JointExitTable, KernelTable,
    NodePath,
};
