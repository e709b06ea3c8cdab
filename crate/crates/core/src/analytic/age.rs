use serde::{Deserialize, Serialize};

use crate::protocol::ScaledParams;

/// Limit of `n * q0`, the scaled per-slot success probability of an active
/// source when a fraction `k0` of the network is active.
pub fn q0_limit(scaled: &ScaledParams, k0: f64) -> f64 {
    let g = k0 * scaled.alpha;
    scaled.alpha * (-g).exp() + scaled.alpha * scaled.tau2 * ((-scaled.tau2 * g).exp() - (-g).exp())
}

/// Limiting network throughput `k0 * lim n q0`.
pub fn throughput_asymptotic(scaled: &ScaledParams, k0: f64) -> f64 {
    k0 * q0_limit(scaled, k0)
}

/// Limiting `Delta / n` from the scaled success rate:
/// `r^2 / (2 (r + 1/Q)) + 1/Q` with `Q = lim n q0`.
pub fn asymptotic_age(scaled: &ScaledParams, k0: f64) -> f64 {
    let inv_q = 1.0 / q0_limit(scaled, k0);
    scaled.r * scaled.r / (2.0 * (scaled.r + inv_q)) + inv_q
}

/// `r (k0^2 + 1) / (2 (1 - k0))`. Equal to [`asymptotic_age`] only where
/// `k0` is a root of the drift function.
pub fn asymptotic_age_from_root(scaled: &ScaledParams, k0: f64) -> f64 {
    scaled.r * (k0 * k0 + 1.0) / (2.0 * (1.0 - k0))
}

/// Stationary age of a single source that succeeds with probability `q0`
/// in every slot once its age reaches `gamma`:
/// `pi_j = (1 - q0)^max(j - gamma, 0) / (gamma - 1 + 1/q0)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AgeDistribution {
    pub gamma: u64,
    pub q0: f64,
}

impl AgeDistribution {
    pub fn new(gamma: u64, q0: f64) -> crate::Result<Self> {
        if gamma == 0 || !(q0 > 0.0 && q0 <= 1.0) {
            return Err(crate::Error::InvalidParams(format!(
                "need gamma >= 1 and q0 in (0, 1], got gamma = {gamma}, q0 = {q0}"
            )));
        }
        Ok(AgeDistribution { gamma, q0 })
    }

    pub fn pmf(&self, j: u64) -> f64 {
        if j == 0 {
            return 0.0;
        }
        let excess = j.saturating_sub(self.gamma) as f64;
        (1.0 - self.q0).powf(excess) / (self.gamma as f64 - 1.0 + 1.0 / self.q0)
    }

    /// `gamma (gamma - 1) / (2 (gamma - 1 + 1/q0)) + 1/q0`
    pub fn mean(&self) -> f64 {
        let g = self.gamma as f64;
        g * (g - 1.0) / (2.0 * (g - 1.0 + 1.0 / self.q0)) + 1.0 / self.q0
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn series_mean(d: &AgeDistribution) -> (f64, f64) {
        let mut mass = 0.0;
        let mut mean = 0.0;
        let mut j = 1u64;
        loop {
            let p = d.pmf(j);
            mass += p;
            mean += j as f64 * p;
            if j > d.gamma && 1.0 - mass < 1e-13 {
                break;
            }
            j += 1;
        }
        (mass, mean)
    }

    #[test]
    fn series_matches_closed_form() {
        for &(g, q) in &[(5u64, 0.3), (1, 0.2), (40, 0.05), (159, 0.0341), (3, 1.0)] {
            let d = AgeDistribution::new(g, q).unwrap();
            let (mass, mean) = series_mean(&d);
            assert!((mass - 1.0).abs() < 1e-11, "mass {mass}");
            assert!((mean - d.mean()).abs() < 1e-9 * d.mean().max(1.0), "{g} {q}");
        }
    }

    #[test]
    fn special_cases() {
        let d = AgeDistribution::new(1, 0.25).unwrap();
        assert!((d.mean() - 4.0).abs() < 1e-12);
        let d = AgeDistribution::new(9, 1.0).unwrap();
        assert!((d.mean() - ((9.0 - 1.0) / 2.0 + 1.0)).abs() < 1e-12);
        assert!(AgeDistribution::new(3, 0.0).is_err());
    }

    #[test]
    fn q0_limits() {
        let s = ScaledParams::new(10.0, 1.59, 0.38).unwrap();
        assert!((q0_limit(&s, 1e-12) - 10.0).abs() < 1e-9);
        let ta = ScaledParams::new(4.0, 2.0, 1.0).unwrap();
        assert!((q0_limit(&ta, 0.3) - 4.0 * (-1.2f64).exp()).abs() < 1e-14);
        let q = q0_limit(&s, 0.1555);
        assert!((q - 3.41).abs() < 0.01, "{q}");
    }

    #[test]
    fn table_one_age_values() {
        let dp = ScaledParams::new(10.0, 1.59, 0.38).unwrap();
        assert!((asymptotic_age_from_root(&dp, 0.1555) - 0.9641).abs() < 5e-5);
        let ta = ScaledParams::new(4.69, 2.21, 1.0).unwrap();
        assert!((asymptotic_age_from_root(&ta, 0.1915) - 1.4169).abs() < 2e-4);
        let sa = ScaledParams { alpha: 1.0, r: 0.0, tau2: 1.0 };
        assert!((asymptotic_age(&sa, 1.0) - std::f64::consts::E).abs() < 1e-12);
        assert!((throughput_asymptotic(&sa, 1.0) - (-1f64).exp()).abs() < 1e-15);
    }
}
