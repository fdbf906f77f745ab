//! Spatial Bergsma dependence measure for regional panels.
//!
//! A panel holds `T` time points for each of `R` regions. The statistic
//! `S~_B` aggregates Bergsma's consistent pairwise dependence coefficient
//! `rho~` over a spatial proximity matrix `W`, and tests spatial pairwise
//! independence against a Monte Carlo or asymptotic null.

pub mod builtin;
pub mod distribution;
pub mod error;
pub mod inference;
pub mod io;
pub mod kernel;
pub mod models;
pub mod null;
pub mod panel;
pub mod quadrature;
pub mod rng;
pub mod statistic;
pub mod stats;
pub mod timeseries;
pub mod weights;

pub use distribution::ReferenceDistribution;
pub use error::{Error, Result};
pub use inference::{
    bootstrap_ci, pairwise_screen, render_table, rho_null_quantile, test_spatial_independence, ConfidenceInterval,
    PairwiseScreen, TestOptions, TestReport, Transform,
};
pub use io::{load_panel, load_weights, save_panel, save_weights, Provenance, WeightsKind};
pub use kernel::{empirical_kernel_matrix, kappa_tilde, rho_tilde, CenteredKernelMatrix};
pub use models::{simulate_panel, theta_sweep, DependenceModel, DependenceSpec, SweepPoint};
pub use null::{
    asymptotic_null_sample, monte_carlo_null, nystrom_eigenvalues, p_value, p_value_with, Alternative, EigenSpectrum,
    NullDistribution, NullMethod,
};
pub use panel::SpatialPanel;
pub use statistic::{sb_statistic, SBResult};
pub use timeseries::{acf, fit_ar, moments, residual_panel, Acf, ArFit, Moments};
pub use weights::{ProximityMatrix, RegionCoordinates};
