pub mod homogeneous;
pub mod leja;
pub mod rk45;
pub mod trajectory;

pub use homogeneous::{propagate_homogeneous, OutputGrid};
pub use leja::{leja_points, phi_divided_differences, relpm_propagate, relpm_propagate_with_stats, spectral_interval, LejaConfig, RelpmStats};
pub use rk45::{rk45_integrate, rk45_solve, RkConfig, RkStats};
pub use trajectory::{History, Trajectory};
