//! Brute-force stationary solve of the truncated age chain.
//!
//! Transitions are generated from first principles: every coin-flip path of
//! [`protocol::step`] is enumerated with its probability, ages are truncated
//! at the threshold, and the resulting states are lumped into types
//! `(m, passive ages)`. Nothing here uses the closed-form success
//! probability, so agreement with [`crate::analytic`] is a real check.

use std::collections::HashMap;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::analytic::{q0_limit, support_min};
use crate::error::{Error, Result};
use crate::protocol::{self, Coins, NetworkState, Policy, PolicyParams, ScaledParams};

/// Upper bound on the number of states handled by the exact solvers.
pub const STATE_LIMIT: u128 = 1_000_000;
/// Dense unmerged solves are cubic in the state count.
const UNMERGED_LIMIT: u128 = 5_000;
const RESIDUAL_TOL: f64 = 1e-12;

/// Lumped recurrent state: `m` active sources plus the set of distinct
/// passive ages (ascending, each in `1..gamma`).
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct StateType {
    pub m: usize,
    pub passive_ages: Vec<u32>,
}

impl StateType {
    /// Canonical representative: sources `0..m` active, the rest passive in
    /// ascending age order.
    fn representative(&self, gamma: u32) -> NetworkState {
        let mut ages = vec![u64::from(gamma); self.m];
        ages.extend(self.passive_ages.iter().map(|&a| u64::from(a)));
        NetworkState { ages, t: 0 }
    }

    fn of_ages(ages: &[u64], gamma: u32) -> StateType {
        let g = u64::from(gamma);
        let m = ages.iter().filter(|&&a| a >= g).count();
        let mut passive_ages: Vec<u32> =
            ages.iter().filter(|&&a| a < g).map(|&a| a as u32).collect();
        passive_ages.sort_unstable();
        StateType { m, passive_ages }
    }
}

fn binomial(n: u128, k: u128) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc = 1u128;
    for i in 0..k {
        match acc.checked_mul(n - i) {
            Some(v) => acc = v / (i + 1),
            None => return u128::MAX,
        }
    }
    acc
}

fn falling(from: u128, count: u128) -> u128 {
    (0..count).fold(1u128, |acc, i| acc.saturating_mul(from - i))
}

/// Number of recurrent states with `m` active sources:
/// `C(n, m) (gamma - 1)! / (gamma - n - 1 + m)!`, zero when the passive ages
/// cannot be distinct.
pub fn recurrent_state_count(n: usize, gamma: u32, m: usize) -> u128 {
    if m > n || m < support_min(n, gamma) {
        return 0;
    }
    binomial(n as u128, m as u128).saturating_mul(falling(u128::from(gamma) - 1, (n - m) as u128))
}

/// States lumped into one type: `n! / m!` orderings.
fn type_multiplicity(n: usize, m: usize) -> u128 {
    falling(n as u128, (n - m) as u128)
}

fn combinations(pool: &[u32], size: usize, out: &mut Vec<Vec<u32>>, current: &mut Vec<u32>, at: usize) {
    if current.len() == size {
        out.push(current.clone());
        return;
    }
    for i in at..pool.len() {
        if pool.len() - i < size - current.len() {
            break;
        }
        current.push(pool[i]);
        combinations(pool, size, out, current, i + 1);
        current.pop();
    }
}

/// Recurrent types with their multiplicities, ordered by `m` then ages.
pub fn enumerate_recurrent_types(n: usize, gamma: u32) -> Result<Vec<(StateType, u128)>> {
    if n == 0 || gamma < 2 {
        return Err(Error::InvalidParams("need n >= 1 and gamma >= 2".into()));
    }
    let states = (0..=n).fold(0u128, |acc, m| acc.saturating_add(recurrent_state_count(n, gamma, m)));
    if states > STATE_LIMIT {
        return Err(Error::Size {
            states,
            limit: STATE_LIMIT,
        });
    }
    let pool: Vec<u32> = (1..gamma).collect();
    let mut out = Vec::new();
    for m in support_min(n, gamma)..=n {
        let mut sets = Vec::new();
        combinations(&pool, n - m, &mut sets, &mut Vec::new(), 0);
        for passive_ages in sets {
            out.push((StateType { m, passive_ages }, type_multiplicity(n, m)));
        }
    }
    Ok(out)
}

/// Coin source that walks the binary tree of flip outcomes, one path per
/// slot evaluation.
struct PathCoins {
    prefix: Vec<bool>,
    taken: Vec<(bool, f64)>,
}

impl Coins for PathCoins {
    fn flip(&mut self, p: f64) -> bool {
        let i = self.taken.len();
        let choice = self.prefix.get(i).copied().unwrap_or(false);
        self.taken.push((choice, p));
        choice
    }
}

/// Every outcome of one slot from `state`, with its probability. Paths of
/// probability zero are dropped.
pub fn enumerate_slot(state: &NetworkState, params: &PolicyParams) -> Vec<(f64, NetworkState)> {
    let mut out = Vec::new();
    let mut prefix: Vec<bool> = Vec::new();
    loop {
        let mut coins = PathCoins {
            prefix: prefix.clone(),
            taken: Vec::new(),
        };
        let (next, _) = protocol::step(state, params, &mut coins);
        let prob: f64 = coins
            .taken
            .iter()
            .map(|&(c, p)| if c { p } else { 1.0 - p })
            .product();
        if prob > 0.0 {
            out.push((prob, next));
        }
        // advance to the next path: flip the deepest `false` to `true`
        let mut path: Vec<bool> = coins.taken.iter().map(|&(c, _)| c).collect();
        while path.last() == Some(&true) {
            path.pop();
        }
        match path.last_mut() {
            Some(last) => *last = true,
            None => break,
        }
        prefix = path;
    }
    out
}

fn check_params(params: &PolicyParams) -> Result<()> {
    if matches!(params.policy, Policy::SlottedAloha) || params.gamma < 2 {
        return Err(Error::InvalidParams(
            "the truncated chain needs a threshold policy with gamma >= 2".into(),
        ));
    }
    Ok(())
}

/// Stationary vector of a row-stochastic matrix: direct solve of
/// `(P^T - I) x = 0` with one equation replaced by normalisation, then
/// power-iteration polish.
fn stationary(p: &DMatrix<f64>) -> Result<(DVector<f64>, f64)> {
    let size = p.nrows();
    let mut a = p.transpose() - DMatrix::<f64>::identity(size, size);
    for j in 0..size {
        a[(size - 1, j)] = 1.0;
    }
    let mut b = DVector::<f64>::zeros(size);
    b[size - 1] = 1.0;
    let mut x = a
        .lu()
        .solve(&b)
        .ok_or_else(|| Error::Solver("singular balance system".into()))?;
    let residual = |x: &DVector<f64>| (x.transpose() * p - x.transpose()).amax();
    let mut res = residual(&x);
    let mut iterations = 0;
    while res >= RESIDUAL_TOL && iterations < 10_000 {
        x = (x.transpose() * p).transpose();
        let s = x.sum();
        x /= s;
        res = residual(&x);
        iterations += 1;
    }
    if res >= RESIDUAL_TOL {
        return Err(Error::Solver(format!("residual {res:e} after polishing")));
    }
    Ok((x, res))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExactStationary {
    pub n: usize,
    pub gamma: u32,
    pub types: Vec<StateType>,
    pub multiplicities: Vec<u128>,
    /// Total probability of each type (all its orderings).
    pub type_probabilities: Vec<f64>,
    /// `P_m` for `m = 0..=n`.
    pub pm: Vec<f64>,
    pub residual: f64,
    pub max_row_sum_error: f64,
}

impl ExactStationary {
    /// `P_m / P_{m-1}`.
    pub fn pm_ratio(&self, m: usize) -> f64 {
        self.pm[m] / self.pm[m - 1]
    }

    /// Probability of a single state of the given type.
    pub fn state_probability(&self, t: &StateType) -> Option<f64> {
        self.types
            .iter()
            .position(|x| x == t)
            .map(|i| self.type_probabilities[i] / self.multiplicities[i] as f64)
    }
}

/// Exact stationary distribution over lumped types.
pub fn exact_stationary(params: &PolicyParams) -> Result<ExactStationary> {
    check_params(params)?;
    let (n, gamma) = (params.n, params.gamma);
    let types = enumerate_recurrent_types(n, gamma)?;
    let index: HashMap<&StateType, usize> =
        types.iter().enumerate().map(|(i, (t, _))| (t, i)).collect();
    let size = types.len();
    let mut p = DMatrix::<f64>::zeros(size, size);
    for (i, (t, _)) in types.iter().enumerate() {
        for (prob, next) in enumerate_slot(&t.representative(gamma), params) {
            let truncated: Vec<u64> = next.ages.iter().map(|&a| a.min(u64::from(gamma))).collect();
            let nt = StateType::of_ages(&truncated, gamma);
            let j = *index.get(&nt).ok_or_else(|| {
                Error::Solver(format!("transition from {t:?} left the recurrent class: {nt:?}"))
            })?;
            p[(i, j)] += prob;
        }
    }
    let max_row_sum_error = p
        .row_iter()
        .map(|r| (r.sum() - 1.0).abs())
        .fold(0.0, f64::max);
    let (x, residual) = stationary(&p)?;
    let mut pm = vec![0.0; n + 1];
    for (i, (t, _)) in types.iter().enumerate() {
        pm[t.m] += x[i];
    }
    let (types, multiplicities) = types.into_iter().unzip();
    Ok(ExactStationary {
        n,
        gamma,
        types,
        multiplicities,
        type_probabilities: x.iter().copied().collect(),
        pm,
        residual,
        max_row_sum_error,
    })
}

/// Stationary distribution of the full truncated chain over every age
/// vector in `{1..gamma}^n`, transient states included.
pub fn exact_stationary_unmerged(params: &PolicyParams) -> Result<Vec<(Vec<u64>, f64)>> {
    check_params(params)?;
    let (n, gamma) = (params.n, u64::from(params.gamma));
    let size = (gamma as u128).checked_pow(n as u32).unwrap_or(u128::MAX);
    if size > UNMERGED_LIMIT {
        return Err(Error::Size {
            states: size,
            limit: UNMERGED_LIMIT,
        });
    }
    let size = size as usize;
    let decode = |mut code: usize| -> Vec<u64> {
        (0..n)
            .map(|_| {
                let a = code as u64 % gamma + 1;
                code /= gamma as usize;
                a
            })
            .collect()
    };
    let encode = |ages: &[u64]| -> usize {
        ages.iter()
            .rev()
            .fold(0usize, |acc, &a| acc * gamma as usize + (a.min(gamma) - 1) as usize)
    };
    let mut p = DMatrix::<f64>::zeros(size, size);
    for i in 0..size {
        let state = NetworkState {
            ages: decode(i),
            t: 0,
        };
        for (prob, next) in enumerate_slot(&state, params) {
            p[(i, encode(&next.ages))] += prob;
        }
    }
    let (x, _) = stationary(&p)?;
    Ok((0..size).map(|i| (decode(i), x[i])).collect())
}

/// Finite-`n` pivot ratio against its large-network limit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PivotCheck {
    /// `pi(S1) / (n pi(S2))`, `S1` with `m` active sources besides the
    /// passive pivot at age `s`, `S2` with `m - 1`.
    pub ratio: f64,
    /// `1 / Q(k) - k` at `k = m / n`, `alpha = n tau1`.
    pub limit: f64,
}

pub fn pivot_ratio_check(params: &PolicyParams, s: u32, m: usize) -> Result<PivotCheck> {
    check_params(params)?;
    let (n, gamma) = (params.n, params.gamma);
    if s == 0 || s >= gamma {
        return Err(Error::Domain(format!("pivot age must lie in 1..{gamma}, got {s}")));
    }
    // S2 has n - m + 1 passive sources including the pivot
    if m == 0 || m >= n || (n - m + 1) as u32 > gamma - 1 {
        return Err(Error::Domain(format!(
            "no pair of recurrent states with m = {m} and m - 1 active for n = {n}, gamma = {gamma}"
        )));
    }
    let others: Vec<u32> = (1..gamma).filter(|&a| a != s).collect();
    let make = |actives: usize| {
        let mut passive: Vec<u32> = others[..n - 1 - actives].to_vec();
        passive.push(s);
        passive.sort_unstable();
        StateType {
            m: actives,
            passive_ages: passive,
        }
    };
    let exact = exact_stationary(params)?;
    let p1 = exact
        .state_probability(&make(m))
        .ok_or_else(|| Error::Domain("S1 is not recurrent".into()))?;
    let p2 = exact
        .state_probability(&make(m - 1))
        .ok_or_else(|| Error::Domain("S2 is not recurrent".into()))?;
    let k = m as f64 / n as f64;
    let scaled = ScaledParams {
        alpha: n as f64 * params.tau1,
        r: f64::from(gamma) / n as f64,
        tau2: params.effective_tau2(),
    };
    Ok(PivotCheck {
        ratio: p1 / (n as f64 * p2),
        limit: 1.0 / q0_limit(&scaled, k) - k,
    })
}
