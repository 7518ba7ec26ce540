//! Gaussian fluctuation limits: driver covariances, driver sampling, the linearized Volterra
//! equations, and the diffusion representation of the Markovian SIS case.

mod covariance;
mod drivers;
mod sample;
mod sde;
mod solve;

pub use covariance::{cholesky_with_jitter, driver_covariance, DriverCovariance};
pub use drivers::{drivers_of, Driver};
pub use sample::{sample_drivers, DriverPaths, DriverSampler};
pub use sde::{sis_sde_drift_path, sis_sde_path};
pub use solve::{
    fclt_ensemble, path_rng, sample_fclt_path, solve_fclt_path, FcltPath, InitialDraws,
    InitialFluctuation,
};
