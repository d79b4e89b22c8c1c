//! Atomic-clock layer: laser noise, the closed servo loop, Allan deviations
//! and analytic instability predictions.
//!
//! Times are expressed through the dimensionless product `b_α T` of the
//! rescaled laser bandwidth and the Ramsey time. Phases are in radians and
//! fractional frequencies follow from `ȳ = φ / (ω_A T)`.

pub mod allan;
pub mod analytic;
pub mod dick;
pub mod noise;
pub mod servo;

pub use allan::{overlapping_allan, AllanSeries, WhiteFit};
pub use analytic::{
    css_sigma, ctl_oqc_sigma, hl_sigma, oqc_numeric_optimum, oqc_scaling, pi_hl_sigma, predict_allan, prior_width, AllanPrediction,
    sql_sigma, OqcScaling,
};
pub use dick::{dick_limits, dick_series, dick_sigma_sq, DickLimits};
pub use noise::{closed_loop_unit_variance, implied_chi, LaserNoiseSpec, NoiseExponent, PhaseNoise};
pub use servo::{
    run_servo_ensemble, run_servo_loop, servo_loop, ClockProtocol, ClockRunConfig, PhaseMeter, ServoEnsemble,
    ServoRun,
};
