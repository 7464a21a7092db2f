//! Experiments built on the solver: error metrics, slope and rate fits,
//! decay-rate prediction, CSV output and the property suite.

pub mod config;
pub mod metrics;
pub mod series;
pub mod studies;
pub mod verify;

pub use metrics::{
    asymptotic_max, fit_decay, fit_exponential_rate, fit_slope, l2_error, predict_gamma, DecayFit,
    DecayPrediction, DEFAULT_WINDOW,
};
pub use series::{ErrorSeries, Sample};
pub use studies::{
    convergence_base, decay_base, lagrange_base, dominance_guard, richardson_dt_study, run_convergence, run_decay_study,
    run_guarded_study, run_lagrange_study, run_series, run_spatial_study, ConvergencePoint, ConvergenceReport, DecayStudy,
    DtPolicy, Gate, GuardReport, GuardedStudy, LagrangeMode, SpatialStudy, TemporalStudy, DEFAULT_BETAS,
};
pub use verify::{run_property_suite, PropertyCheck};
