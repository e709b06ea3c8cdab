use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::log_sum_exp;
use crate::protocol::{pow_one_minus, Policy, PolicyParams};

/// Distribution of the number of active sources, indexed
/// `m = support_min ..= support_min + probabilities.len() - 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActiveCountPmf {
    pub support_min: usize,
    pub probabilities: Vec<f64>,
}

impl ActiveCountPmf {
    pub fn prob(&self, m: usize) -> f64 {
        m.checked_sub(self.support_min)
            .and_then(|i| self.probabilities.get(i))
            .copied()
            .unwrap_or(0.0)
    }

    pub fn support_max(&self) -> usize {
        self.support_min + self.probabilities.len().saturating_sub(1)
    }

    pub fn mode(&self) -> usize {
        let (i, _) = self
            .probabilities
            .iter()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |acc, (i, &p)| if p > acc.1 { (i, p) } else { acc });
        self.support_min + i
    }

    pub fn mean(&self) -> f64 {
        self.probabilities
            .iter()
            .enumerate()
            .map(|(i, p)| (self.support_min + i) as f64 * p)
            .sum()
    }

    pub fn total(&self) -> f64 {
        self.probabilities.iter().sum()
    }

    /// Mass on `m < below`.
    pub fn mass_below(&self, below: usize) -> f64 {
        (self.support_min..below.min(self.support_max() + 1))
            .map(|m| self.prob(m))
            .sum()
    }

    pub fn total_variation(&self, other: &ActiveCountPmf) -> f64 {
        let lo = self.support_min.min(other.support_min);
        let hi = self.support_max().max(other.support_max());
        0.5 * (lo..=hi)
            .map(|m| (self.prob(m) - other.prob(m)).abs())
            .sum::<f64>()
    }
}

/// Smallest active count with a recurrent state: passive ages are distinct
/// values in `1..gamma`, so at most `gamma - 1` sources can be passive.
pub fn support_min(n: usize, gamma: u32) -> usize {
    n.saturating_sub(gamma.saturating_sub(1) as usize)
}

fn check_chain_params(params: &PolicyParams) -> Result<()> {
    if matches!(params.policy, Policy::MuMista { .. } | Policy::SlottedAloha) {
        return Err(Error::InvalidParams(format!(
            "no closed-form active-count distribution for policy {}",
            params.policy.name()
        )));
    }
    if params.gamma < 2 {
        return Err(Error::InvalidParams("gamma must be at least 2".into()));
    }
    Ok(())
}

/// `(1 - tau2)(1 - tau1)^j + tau2 (1 - tau1 tau2)^j`
fn stage_weight(j: f64, tau1: f64, tau2: f64) -> f64 {
    (1.0 - tau2) * pow_one_minus(tau1, j) + tau2 * pow_one_minus(tau1 * tau2, j)
}

/// Natural log of `P_m / P_{m-1}`.
pub fn ln_pm_ratio(m: usize, params: &PolicyParams) -> Result<f64> {
    check_chain_params(params)?;
    let n = params.n;
    let smin = support_min(n, params.gamma);
    if m <= smin || m > n {
        return Err(Error::Domain(format!(
            "P_m/P_(m-1) is defined for {} < m <= {n}, got m = {m}",
            smin
        )));
    }
    let (t1, t2) = (params.tau1, params.effective_tau2());
    let mf = m as f64;
    let prev = if m >= 2 {
        (mf - 1.0) * stage_weight(mf - 2.0, t1, t2)
    } else {
        0.0
    };
    let numerator = (1.0 / t1 - prev) * (n - m + 1) as f64;
    let passive_slots = params.gamma as f64 - 1.0 - n as f64 + mf;
    let denominator = stage_weight(mf - 1.0, t1, t2) * mf * passive_slots;
    Ok(numerator.ln() - denominator.ln())
}

/// `P_m / P_{m-1}` for the truncated age chain.
pub fn pm_ratio(m: usize, params: &PolicyParams) -> Result<f64> {
    ln_pm_ratio(m, params).map(f64::exp)
}

/// Stationary distribution of the active count, assembled from cumulative
/// log ratios and normalised once.
pub fn active_count_pmf(params: &PolicyParams) -> Result<ActiveCountPmf> {
    check_chain_params(params)?;
    let smin = support_min(params.n, params.gamma);
    let mut log_p = Vec::with_capacity(params.n - smin + 1);
    log_p.push(0.0);
    let mut acc = 0.0;
    for m in smin + 1..=params.n {
        acc += ln_pm_ratio(m, params)?;
        log_p.push(acc);
    }
    let norm = log_sum_exp(&log_p);
    Ok(ActiveCountPmf {
        support_min: smin,
        probabilities: log_p.into_iter().map(|l| (l - norm).exp()).collect(),
    })
}
