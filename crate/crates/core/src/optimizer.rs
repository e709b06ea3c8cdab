//! Search over `(r, alpha, tau2)` for the smallest asymptotic normalised age.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analytic::{asymptotic_age, regime_analysis_with, throughput_asymptotic, Regime};
use crate::error::{Error, Result};
use crate::protocol::ScaledParams;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PolicyKind {
    Mista,
    ThresholdAloha,
    SlottedAloha,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RegimeFilter {
    SinglePeak,
    DoublePeak,
    Any,
}

impl RegimeFilter {
    fn admits(self, regime: Regime) -> bool {
        match (self, regime) {
            (_, Regime::Degenerate) => false,
            (RegimeFilter::Any, _) => true,
            (RegimeFilter::SinglePeak, r) => r == Regime::SinglePeak,
            (RegimeFilter::DoublePeak, r) => r == Regime::DoublePeak,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub r: f64,
    pub alpha: f64,
    pub tau2: f64,
    pub k0: f64,
    pub age: f64,
    pub throughput: f64,
    pub regime: Regime,
}

impl Candidate {
    /// Strictly better, with single-peak winning ties.
    fn beats(&self, other: &Candidate) -> bool {
        const TIE: f64 = 1e-12;
        if (self.age - other.age).abs() <= TIE {
            self.regime == Regime::SinglePeak && other.regime != Regime::SinglePeak
        } else {
            self.age < other.age
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Optimum {
    pub policy: PolicyKind,
    pub filter: RegimeFilter,
    pub best: Candidate,
    pub evaluations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizerConfig {
    pub r_range: (f64, f64),
    pub alpha_range: (f64, f64),
    pub tau2_range: (f64, f64),
    pub r_points: usize,
    pub alpha_points: usize,
    pub tau2_points: usize,
    /// Refinement stops once every step is below this.
    pub min_step: f64,
    /// Best grid points used as refinement starts.
    pub starts: usize,
    /// Grid resolution of the root search inside each evaluation.
    pub drift_grid: usize,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        OptimizerConfig {
            r_range: (1.0, 3.0),
            alpha_range: (1.0, 20.0),
            tau2_range: (1e-3, 1.0),
            r_points: 21,
            alpha_points: 39,
            tau2_points: 21,
            min_step: 1e-4,
            starts: 4,
            drift_grid: 2_000,
        }
    }
}

fn linspace((lo, hi): (f64, f64), points: usize) -> Vec<f64> {
    if points <= 1 {
        return vec![lo];
    }
    (0..points)
        .map(|i| lo + (hi - lo) * i as f64 / (points - 1) as f64)
        .collect()
}

/// Regime analysis plus age at one parameter point. `None` when the point
/// is invalid, rootless or rejected by the filter.
pub fn evaluate(r: f64, alpha: f64, tau2: f64, filter: RegimeFilter, drift_grid: usize) -> Option<Candidate> {
    let scaled = ScaledParams::new(alpha, r, tau2).ok()?;
    let analysis = regime_analysis_with(&scaled, drift_grid).ok()?;
    if !filter.admits(analysis.regime) {
        return None;
    }
    let k0 = analysis.selected_k0;
    let age = asymptotic_age(&scaled, k0);
    age.is_finite().then(|| Candidate {
        r,
        alpha,
        tau2,
        k0,
        age,
        throughput: throughput_asymptotic(&scaled, k0),
        regime: analysis.regime,
    })
}

fn slotted_aloha_optimum() -> Candidate {
    let e = std::f64::consts::E;
    Candidate {
        r: 0.0,
        alpha: 1.0,
        tau2: 1.0,
        k0: 1.0,
        age: e,
        throughput: 1.0 / e,
        regime: Regime::SinglePeak,
    }
}

pub fn optimize_age(policy: PolicyKind, filter: RegimeFilter) -> Result<Optimum> {
    optimize_age_with(policy, filter, &OptimizerConfig::default())
}

/// Grid search followed by pattern-search refinement from the best grid
/// points. Each refinement move tries every offset of a small integer
/// lattice scaled by the current steps, so that curved ridges along regime
/// boundaries can be followed; steps halve when no offset improves.
pub fn optimize_age_with(policy: PolicyKind, filter: RegimeFilter, config: &OptimizerConfig) -> Result<Optimum> {
    if policy == PolicyKind::SlottedAloha {
        return Ok(Optimum {
            policy,
            filter,
            best: slotted_aloha_optimum(),
            evaluations: 0,
        });
    }
    let pinned = policy == PolicyKind::ThresholdAloha;
    let rs = linspace(config.r_range, config.r_points);
    let alphas = linspace(config.alpha_range, config.alpha_points);
    let tau2s = if pinned {
        vec![1.0]
    } else {
        linspace(config.tau2_range, config.tau2_points)
    };
    let mut grid = Vec::with_capacity(rs.len() * alphas.len() * tau2s.len());
    for &r in &rs {
        for &a in &alphas {
            grid.extend(tau2s.iter().map(|&t| (r, a, t)));
        }
    }
    let eval = |(r, a, t): (f64, f64, f64)| evaluate(r, a, t, filter, config.drift_grid);
    let mut evaluations = grid.len();
    let mut found: Vec<Candidate> = grid.par_iter().filter_map(|&p| eval(p)).collect();
    if found.is_empty() {
        return Err(Error::NoFeasiblePoint(format!(
            "every {:?} grid candidate was rejected for {filter:?}",
            policy
        )));
    }
    found.sort_by(|a, b| a.age.total_cmp(&b.age));
    found.truncate(config.starts.max(1));

    let spacing = |(lo, hi): (f64, f64), n: usize| (hi - lo) / (n.max(2) - 1) as f64;
    let clamp = |v: f64, (lo, hi): (f64, f64)| v.clamp(lo, hi);
    let reach = if pinned { 3 } else { 2 };
    let dirs: Vec<[i32; 3]> = (-reach..=reach)
        .flat_map(|i| (-reach..=reach).flat_map(move |j| (-reach..=reach).map(move |k| [i, j, k])))
        .filter(|d| *d != [0, 0, 0] && !(pinned && d[2] != 0))
        .collect();
    let mut best: Option<Candidate> = None;
    for start in found {
        let mut cur = start;
        let mut steps = [
            spacing(config.r_range, config.r_points),
            spacing(config.alpha_range, config.alpha_points),
            if pinned { 0.0 } else { spacing(config.tau2_range, config.tau2_points) },
        ];
        while steps.iter().any(|&s| s >= config.min_step) {
            evaluations += dirs.len();
            let moved = dirs
                .par_iter()
                .filter_map(|d| {
                    eval((
                        clamp(cur.r + f64::from(d[0]) * steps[0], config.r_range),
                        clamp(cur.alpha + f64::from(d[1]) * steps[1], config.alpha_range),
                        clamp(cur.tau2 + f64::from(d[2]) * steps[2], config.tau2_range),
                    ))
                })
                .reduce_with(|a, b| if b.beats(&a) { b } else { a });
            match moved {
                Some(c) if c.beats(&cur) => cur = c,
                _ => steps.iter_mut().for_each(|s| *s /= 2.0),
            }
        }
        if best.as_ref().is_none_or(|b| cur.beats(b)) {
            best = Some(cur);
        }
    }
    Ok(Optimum {
        policy,
        filter,
        best: best.expect("at least one start"),
        evaluations,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepParam {
    R,
    Alpha,
    Tau2,
}

impl std::str::FromStr for SweepParam {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "r" => Ok(SweepParam::R),
            "alpha" => Ok(SweepParam::Alpha),
            "tau2" => Ok(SweepParam::Tau2),
            other => Err(Error::InvalidParams(format!("unknown sweep parameter {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub value: f64,
    pub age: Option<f64>,
    pub k0: Option<f64>,
    pub regime: Option<Regime>,
    /// Why the point is a gap, if it is one.
    pub error: Option<String>,
}

/// Age along one parameter with the other two fixed. Failing points become
/// gaps rather than aborting the curve.
pub fn sweep(param: SweepParam, values: &[f64], fixed: &ScaledParams) -> Vec<SweepPoint> {
    values
        .par_iter()
        .map(|&value| {
            let mut s = *fixed;
            match param {
                SweepParam::R => s.r = value,
                SweepParam::Alpha => s.alpha = value,
                SweepParam::Tau2 => s.tau2 = value,
            }
            let gap = |e: Error| SweepPoint {
                value,
                age: None,
                k0: None,
                regime: None,
                error: Some(e.to_string()),
            };
            let s = match ScaledParams::new(s.alpha, s.r, s.tau2) {
                Ok(s) => s,
                Err(e) => return gap(e),
            };
            match crate::analytic::regime_analysis(&s) {
                Ok(a) => SweepPoint {
                    value,
                    age: Some(asymptotic_age(&s, a.selected_k0)),
                    k0: Some(a.selected_k0),
                    regime: Some(a.regime),
                    error: None,
                },
                Err(e) => gap(e),
            }
        })
        .collect()
}

/// Location of the smallest age on a sweep curve.
pub fn sweep_minimum(curve: &[SweepPoint]) -> Option<&SweepPoint> {
    curve
        .iter()
        .filter(|p| p.age.is_some())
        .min_by(|a, b| a.age.unwrap().total_cmp(&b.age.unwrap()))
}
