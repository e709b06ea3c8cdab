//! Mini-slotted threshold ALOHA.
//!
//! * [`protocol`]: slot transition function for slotted ALOHA, threshold
//!   ALOHA, MiSTA and the multi-minislot MuMiSTA variant.
//! * [`sim`]: seeded slot-level Monte Carlo driver.
//! * [`analytic`]: finite-`n` active-count distribution, large-`n` drift
//!   function and regime selection, age and throughput formulas, bounds.
//! * [`oracle`]: brute-force stationary solve of the truncated age chain
//!   for tiny networks.
//! * [`optimizer`]: parameter search and sweeps over the asymptotic age.

pub mod analytic;
pub mod error;
pub mod numeric;
pub mod optimizer;
pub mod oracle;
pub mod protocol;
pub mod sim;

pub use error::{Error, Result};
pub use protocol::{NetworkState, Policy, PolicyParams, ScaledParams, SlotOutcome};
