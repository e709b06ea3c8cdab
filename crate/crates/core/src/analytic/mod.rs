//! Closed-form analysis.

mod age;
mod bound;
mod drift;
mod pmf;

pub use age::{
    asymptotic_age, asymptotic_age_from_root, q0_limit, throughput_asymptotic, AgeDistribution,
};
pub use bound::{
    breakeven_payload_ratio, instantaneous_throughput, max_throughput_and_age_bound,
    max_throughput_with_tau2, spectral_ratio, ThroughputBound,
};
pub use drift::{
    drift_domain, drift_f, drift_f_extended, regime_analysis, regime_analysis_with,
    DriftAnalysis, Regime, DEFAULT_GRID_POINTS,
};
pub use pmf::{active_count_pmf, ln_pm_ratio, pm_ratio, support_min, ActiveCountPmf};
