//! Slot-level protocol mechanics.
//!
//! Everything here is a pure function of `(state, params, coins)`. A slot
//! runs as follows for the mini-slotted policy: every active source (age at
//! or above the threshold) signals in the minislot with probability `tau1`.
//! A sole signaller owns the data slot. When two or more signal, each of
//! them independently sends data with probability `tau2`, and the slot
//! succeeds only if exactly one does. The winner's age resets to 1 and every
//! other age grows by one.

use rand::Rng;
use rand_distr::{Binomial, Distribution};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Source of Bernoulli trials. Implemented for every [`Rng`]; tests and the
/// exact oracle supply scripted or enumerating implementations.
pub trait Coins {
    /// Returns `true` with probability `p`.
    fn flip(&mut self, p: f64) -> bool;
}

impl<R: Rng + ?Sized> Coins for R {
    fn flip(&mut self, p: f64) -> bool {
        self.random::<f64>() < p
    }
}

/// Medium access policy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Policy {
    SlottedAloha,
    ThresholdAloha,
    Mista,
    /// Multiple sequential minislots. `schedule[0]` is the attempt
    /// probability in the first minislot; `schedule[j]` is the probability
    /// that a surviving contender re-signals in minislot `j + 1`.
    MuMista { schedule: Vec<f64> },
}

impl Policy {
    /// `num_minislots` minislots: first at `tau1`, the rest retaining
    /// contenders with probability `tau2`.
    pub fn mumista_default(num_minislots: usize, tau1: f64, tau2: f64) -> Policy {
        let mut schedule = vec![tau2; num_minislots];
        if let Some(first) = schedule.first_mut() {
            *first = tau1;
        }
        Policy::MuMista { schedule }
    }

    pub fn num_minislots(&self) -> usize {
        match self {
            Policy::SlottedAloha => 0,
            Policy::ThresholdAloha | Policy::Mista => 1,
            Policy::MuMista { schedule } => schedule.len(),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Policy::SlottedAloha => "sa",
            Policy::ThresholdAloha => "ta",
            Policy::Mista => "mista",
            Policy::MuMista { .. } => "mumista",
        }
    }
}

/// Finite-network protocol configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyParams {
    pub n: usize,
    pub gamma: u32,
    pub tau1: f64,
    pub tau2: f64,
    pub policy: Policy,
}

fn check_probability(name: &str, p: f64) -> Result<()> {
    if p > 0.0 && p <= 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidParams(format!("{name} must lie in (0, 1], got {p}")))
    }
}

impl PolicyParams {
    pub fn new(n: usize, gamma: u32, tau1: f64, tau2: f64, policy: Policy) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidParams("n must be positive".into()));
        }
        if gamma == 0 {
            return Err(Error::InvalidParams("gamma must be positive".into()));
        }
        check_probability("tau1", tau1)?;
        check_probability("tau2", tau2)?;
        if let Policy::MuMista { schedule } = &policy {
            if schedule.is_empty() {
                return Err(Error::InvalidParams("MuMiSTA needs at least one minislot".into()));
            }
            for (j, &p) in schedule.iter().enumerate() {
                check_probability(&format!("retention_schedule[{j}]"), p)?;
            }
        }
        Ok(PolicyParams {
            n,
            gamma,
            tau1,
            tau2,
            policy,
        })
    }

    pub fn mista(n: usize, gamma: u32, tau1: f64, tau2: f64) -> Result<Self> {
        Self::new(n, gamma, tau1, tau2, Policy::Mista)
    }

    /// Threshold ALOHA; `tau2` is pinned to 1.
    pub fn threshold_aloha(n: usize, gamma: u32, tau1: f64) -> Result<Self> {
        Self::new(n, gamma, tau1, 1.0, Policy::ThresholdAloha)
    }

    pub fn slotted_aloha(n: usize, tau1: f64) -> Result<Self> {
        Self::new(n, 1, tau1, 1.0, Policy::SlottedAloha)
    }

    /// Set when `tau2 > tau1`, outside the usual operating regime. The
    /// parameters are still accepted.
    pub fn tau_order_warning(&self) -> bool {
        matches!(self.policy, Policy::Mista) && self.tau2 > self.tau1
    }

    /// Age at which a source becomes active. Slotted ALOHA keeps every
    /// source active.
    pub fn activity_threshold(&self) -> u32 {
        match self.policy {
            Policy::SlottedAloha => 1,
            _ => self.gamma,
        }
    }

    /// Data-stage probability used by the analytic formulas: 1 for the
    /// policies without a post-collision data attempt.
    pub fn effective_tau2(&self) -> f64 {
        match self.policy {
            Policy::Mista => self.tau2,
            _ => 1.0,
        }
    }
}

/// Asymptotic configuration: `alpha = n * tau1`, `r = gamma / n`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScaledParams {
    pub alpha: f64,
    pub r: f64,
    pub tau2: f64,
}

impl ScaledParams {
    pub fn new(alpha: f64, r: f64, tau2: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha.is_finite()) {
            return Err(Error::InvalidParams(format!("alpha must be positive, got {alpha}")));
        }
        if !(r > 0.0 && r.is_finite()) {
            return Err(Error::InvalidParams(format!("r must be positive, got {r}")));
        }
        check_probability("tau2", tau2)?;
        Ok(ScaledParams { alpha, r, tau2 })
    }

    /// Finite-`n` parameters: `tau1 = alpha / n`, `gamma = round(r * n)`.
    pub fn to_params(&self, n: usize, policy: Policy) -> Result<PolicyParams> {
        if n == 0 {
            return Err(Error::InvalidParams("n must be positive".into()));
        }
        let tau1 = self.alpha / n as f64;
        let gamma = (self.r * n as f64).round();
        if gamma < 1.0 || gamma > u32::MAX as f64 {
            return Err(Error::InvalidParams(format!(
                "r * n = {} does not give a usable threshold",
                self.r * n as f64
            )));
        }
        PolicyParams::new(n, gamma as u32, tau1, self.tau2, policy)
    }
}

/// Per-source ages at the start of slot `t`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetworkState {
    pub ages: Vec<u64>,
    pub t: u64,
}

impl NetworkState {
    /// Every source at the threshold, i.e. all active.
    pub fn all_threshold(n: usize, gamma: u32) -> Self {
        NetworkState {
            ages: vec![u64::from(gamma.max(1)); n],
            t: 0,
        }
    }

    /// Every source just delivered.
    pub fn all_fresh(n: usize) -> Self {
        NetworkState {
            ages: vec![1; n],
            t: 0,
        }
    }

    pub fn is_valid(&self) -> bool {
        !self.ages.is_empty() && self.ages.iter().all(|&a| a >= 1)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "winner", rename_all = "snake_case")]
pub enum OutcomeKind {
    Idle,
    MiniSuccess(usize),
    CollisionThenSuccess(usize),
    CollisionThenFail,
    /// Minislot collision and nobody delivered data. Also used for a plain
    /// collision under the policies without a data-stage retry.
    CollisionThenSilent,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SlotOutcome {
    pub kind: OutcomeKind,
    pub attempters: Vec<usize>,
    pub data_transmitters: Vec<usize>,
}

impl SlotOutcome {
    pub fn winner(&self) -> Option<usize> {
        match self.kind {
            OutcomeKind::MiniSuccess(w) | OutcomeKind::CollisionThenSuccess(w) => Some(w),
            _ => None,
        }
    }

    /// Structural invariants linking the outcome kind to the sets.
    pub fn is_consistent(&self) -> bool {
        match self.kind {
            OutcomeKind::Idle => self.attempters.is_empty() && self.data_transmitters.is_empty(),
            OutcomeKind::MiniSuccess(w) => self.attempters == [w],
            OutcomeKind::CollisionThenSuccess(w) => {
                self.attempters.len() >= 2 && self.data_transmitters == [w]
            }
            OutcomeKind::CollisionThenFail => self.data_transmitters.len() >= 2,
            OutcomeKind::CollisionThenSilent => {
                self.attempters.len() >= 2 && self.data_transmitters.is_empty()
            }
        }
    }
}

/// Indices of sources whose age has reached the activity threshold.
pub fn active_set(state: &NetworkState, params: &PolicyParams) -> Vec<usize> {
    let threshold = u64::from(params.activity_threshold());
    state
        .ages
        .iter()
        .enumerate()
        .filter(|(_, &a)| a >= threshold)
        .map(|(i, _)| i)
        .collect()
}

fn advance(state: &NetworkState, winner: Option<usize>) -> NetworkState {
    let ages = state
        .ages
        .iter()
        .enumerate()
        .map(|(i, &a)| if Some(i) == winner { 1 } else { a + 1 })
        .collect();
    NetworkState {
        ages,
        t: state.t + 1,
    }
}

/// Runs one slot.
pub fn step<C: Coins + ?Sized>(
    state: &NetworkState,
    params: &PolicyParams,
    coins: &mut C,
) -> (NetworkState, SlotOutcome) {
    if let Policy::MuMista { .. } = params.policy {
        return mumista_step(state, params, coins);
    }
    let active = active_set(state, params);
    let attempters: Vec<usize> = active.into_iter().filter(|_| coins.flip(params.tau1)).collect();

    let outcome = match attempters.len() {
        0 => SlotOutcome {
            kind: OutcomeKind::Idle,
            attempters,
            data_transmitters: Vec::new(),
        },
        1 => SlotOutcome {
            kind: OutcomeKind::MiniSuccess(attempters[0]),
            attempters,
            data_transmitters: Vec::new(),
        },
        _ => match params.policy {
            Policy::Mista => {
                let data: Vec<usize> = attempters
                    .iter()
                    .copied()
                    .filter(|_| coins.flip(params.tau2))
                    .collect();
                let kind = match data.len() {
                    0 => OutcomeKind::CollisionThenSilent,
                    1 => OutcomeKind::CollisionThenSuccess(data[0]),
                    _ => OutcomeKind::CollisionThenFail,
                };
                SlotOutcome {
                    kind,
                    attempters,
                    data_transmitters: data,
                }
            }
            _ => SlotOutcome {
                kind: OutcomeKind::CollisionThenSilent,
                attempters,
                data_transmitters: Vec::new(),
            },
        },
    };
    (advance(state, outcome.winner()), outcome)
}

/// One MuMiSTA slot.
///
/// Minislot 1 works as in MiSTA with attempt probability `schedule[0]`.
/// After a collision, the colliding sources stay contenders and each
/// re-signals in minislot `j + 1` with probability `schedule[j]`. A minislot
/// with re-signallers replaces the contender set by them; a silent minislot
/// leaves it unchanged. The first sole signaller wins the data slot. If no
/// minislot isolates a source the slot is lost.
///
/// This contention rule is this crate's own definition.
pub fn mumista_step<C: Coins + ?Sized>(
    state: &NetworkState,
    params: &PolicyParams,
    coins: &mut C,
) -> (NetworkState, SlotOutcome) {
    let schedule: &[f64] = match &params.policy {
        Policy::MuMista { schedule } => schedule,
        _ => panic!("mumista_step called with policy {:?}", params.policy),
    };
    let active = active_set(state, params);
    let attempters: Vec<usize> = active.into_iter().filter(|_| coins.flip(schedule[0])).collect();
    let outcome = match attempters.len() {
        0 => SlotOutcome {
            kind: OutcomeKind::Idle,
            attempters,
            data_transmitters: Vec::new(),
        },
        1 => SlotOutcome {
            kind: OutcomeKind::MiniSuccess(attempters[0]),
            attempters,
            data_transmitters: Vec::new(),
        },
        _ => {
            let mut contenders = attempters.clone();
            let mut winner = None;
            for &keep in &schedule[1..] {
                let survivors: Vec<usize> =
                    contenders.iter().copied().filter(|_| coins.flip(keep)).collect();
                match survivors.len() {
                    0 => {}
                    1 => {
                        winner = Some(survivors[0]);
                        break;
                    }
                    _ => contenders = survivors,
                }
            }
            match winner {
                Some(w) => SlotOutcome {
                    kind: OutcomeKind::CollisionThenSuccess(w),
                    attempters,
                    data_transmitters: vec![w],
                },
                None => SlotOutcome {
                    kind: OutcomeKind::CollisionThenSilent,
                    attempters,
                    data_transmitters: Vec::new(),
                },
            }
        }
    };
    (advance(state, outcome.winner()), outcome)
}

/// `(1 - x)^e`, evaluated through `ln_1p` once the result is small.
pub fn pow_one_minus(x: f64, e: f64) -> f64 {
    if e == 0.0 {
        return 1.0;
    }
    if x >= 1.0 {
        return 0.0;
    }
    let log_base = (-x).ln_1p();
    if e * log_base.abs() > 30.0 {
        (e * log_base).exp()
    } else {
        (1.0 - x).powf(e)
    }
}

/// Per-slot success probability with `m` contenders under the mini-slotted
/// rule: sole minislot attempter, or minislot collision followed by exactly
/// one data transmitter.
pub fn success_probability(m: u64, tau1: f64, tau2: f64) -> f64 {
    if m == 0 {
        return 0.0;
    }
    let mf = m as f64;
    mf * tau1 * ((1.0 - tau2) * pow_one_minus(tau1, mf - 1.0)
        + tau2 * pow_one_minus(tau1 * tau2, mf - 1.0))
}

/// Resolves a slot on counts alone: returns whether the slot delivered a
/// packet given `m` active sources. By symmetry the winner is uniform over
/// the active set, so the simulator only needs this bit.
pub fn slot_succeeds<R: Rng + ?Sized>(m: usize, params: &PolicyParams, rng: &mut R) -> bool {
    fn binomial<R: Rng + ?Sized>(n: usize, p: f64, rng: &mut R) -> usize {
        if n == 0 {
            return 0;
        }
        if p >= 1.0 {
            return n;
        }
        Binomial::new(n as u64, p)
            .expect("probability validated at construction")
            .sample(rng) as usize
    }

    match &params.policy {
        Policy::SlottedAloha | Policy::ThresholdAloha => binomial(m, params.tau1, rng) == 1,
        Policy::Mista => match binomial(m, params.tau1, rng) {
            0 => false,
            1 => true,
            j => binomial(j, params.tau2, rng) == 1,
        },
        Policy::MuMista { schedule } => {
            let mut contenders = binomial(m, schedule[0], rng);
            if contenders <= 1 {
                return contenders == 1;
            }
            for &keep in &schedule[1..] {
                match binomial(contenders, keep, rng) {
                    0 => {}
                    1 => return true,
                    j => contenders = j,
                }
            }
            false
        }
    }
}
