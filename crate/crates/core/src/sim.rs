//! Seeded slot-level Monte Carlo driver.
//!
//! Each replication is a sequential run of `slots` slots from a pinned
//! generator: `ChaCha8Rng::seed_from_u64(seed)`, replication `i` using seed
//! `seed + i` (wrapping). Statistics cover the slots `warmup_slots..slots`;
//! the sampled load trajectory covers the whole run.
//!
//! The engine keeps, per source, the slot of its last delivery, so an age is
//! `t - origin`. Passive sources sit in a FIFO ordered by delivery slot
//! (one delivery per slot keeps it sorted) and move to the active list when
//! their age reaches the threshold. A slot is resolved on the active count
//! alone; the winner is then drawn uniformly from the active list, which has
//! the same law as running [`crate::protocol::step`] on the full age vector.

use std::collections::VecDeque;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analytic::ActiveCountPmf;
use crate::error::{Error, Result};
use crate::protocol::{slot_succeeds, PolicyParams};

/// Number of samples kept in the load trajectory.
pub const TRAJECTORY_SAMPLES: u64 = 10_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitialState {
    /// Every source at the threshold (all active).
    #[default]
    AllThreshold,
    /// Every source with age 1.
    AllFresh,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub params: PolicyParams,
    pub slots: u64,
    pub warmup_slots: u64,
    pub seed: u64,
    pub replications: usize,
    pub initial: InitialState,
}

impl RunConfig {
    /// One replication, warm-up of 10% of the horizon, all-threshold start.
    pub fn new(params: PolicyParams, slots: u64, seed: u64) -> Self {
        RunConfig {
            params,
            slots,
            warmup_slots: slots / 10,
            seed,
            replications: 1,
            initial: InitialState::AllThreshold,
        }
    }

    pub fn with_warmup(mut self, warmup_slots: u64) -> Self {
        self.warmup_slots = warmup_slots;
        self
    }

    pub fn with_replications(mut self, replications: usize) -> Self {
        self.replications = replications;
        self
    }

    pub fn with_initial(mut self, initial: InitialState) -> Self {
        self.initial = initial;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.slots == 0 {
            return Err(Error::InvalidParams("slots must be positive".into()));
        }
        if self.warmup_slots >= self.slots {
            return Err(Error::InvalidParams(format!(
                "warmup ({}) must be smaller than slots ({})",
                self.warmup_slots, self.slots
            )));
        }
        if self.replications == 0 {
            return Err(Error::InvalidParams("replications must be positive".into()));
        }
        // per-source age sums are bounded by T (T + gamma); the network
        // total by n times that
        let t = u128::from(self.slots);
        let bound = t
            .checked_add(u128::from(self.params.gamma))
            .and_then(|x| x.checked_mul(t))
            .and_then(|x| x.checked_mul(self.params.n as u128));
        if bound.is_none() || self.slots > i64::MAX as u64 / 4 {
            return Err(Error::Overflow(format!(
                "n = {} with {} slots may overflow the age accumulators",
                self.params.n, self.slots
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryPoint {
    pub slot: u64,
    /// Active fraction `m / n` at the start of the slot.
    pub k: f64,
    /// Instantaneous network-average age at the start of the slot.
    pub mean_age: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMetrics {
    pub n: usize,
    pub measured_slots: u64,
    pub avg_aoi_per_source: Vec<f64>,
    pub network_avg_aoi: f64,
    /// Deliveries per measured slot.
    pub throughput: f64,
    pub successes: u64,
    pub successes_per_source: Vec<u64>,
    /// Relative frequency of each active count `m = 0..=n`.
    pub active_count_histogram: Vec<f64>,
    pub k_trajectory: Vec<TrajectoryPoint>,
    /// Correlation over measured slots between the (untruncated) age of
    /// source 0 and the number of other active sources.
    pub pivot_age_correlation: f64,
}

impl RunMetrics {
    pub fn normalized_aoi(&self) -> f64 {
        self.network_avg_aoi / self.n as f64
    }
}

/// Running co-moments for a correlation estimate.
#[derive(Default)]
struct CoMoments {
    count: f64,
    mean_x: f64,
    mean_y: f64,
    m2_x: f64,
    m2_y: f64,
    c_xy: f64,
}

impl CoMoments {
    fn push(&mut self, x: f64, y: f64) {
        self.count += 1.0;
        let dx = x - self.mean_x;
        self.mean_x += dx / self.count;
        let dy = y - self.mean_y;
        self.mean_y += dy / self.count;
        self.m2_x += dx * (x - self.mean_x);
        self.m2_y += dy * (y - self.mean_y);
        self.c_xy += dx * (y - self.mean_y);
    }

    fn correlation(&self) -> f64 {
        let denom = (self.m2_x * self.m2_y).sqrt();
        if denom > 0.0 {
            self.c_xy / denom
        } else {
            0.0
        }
    }
}

/// Sum of `s - origin` over `s = from..=to`.
fn age_sum(from: i64, to: i64, origin: i64) -> i128 {
    if to < from {
        return 0;
    }
    let count = i128::from(to - from + 1);
    count * i128::from(from + to) / 2 - count * i128::from(origin)
}

/// Runs a single replication with the config's seed.
pub fn run(config: &RunConfig) -> Result<RunMetrics> {
    config.validate()?;
    Ok(run_seeded(config, config.seed))
}

fn run_seeded(config: &RunConfig, seed: u64) -> RunMetrics {
    let params = &config.params;
    let n = params.n;
    let threshold = i64::from(params.activity_threshold());
    let total = config.slots as i64;
    let warmup = config.warmup_slots as i64;
    let sample_every = (config.slots / TRAJECTORY_SAMPLES).max(1) as i64;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let start_age = match config.initial {
        InitialState::AllThreshold => threshold,
        InitialState::AllFresh => 1,
    };
    // age at slot 0 is `0 - origin`
    let mut origin = vec![-start_age; n];
    let mut sum_origin: i128 = -i128::from(start_age) * n as i128;
    let mut passive: VecDeque<usize> = (0..n).collect();
    let mut actives: Vec<usize> = Vec::with_capacity(n);
    let mut position = vec![usize::MAX; n];
    let mut segment_start = vec![warmup; n];
    let mut age_totals = vec![0i128; n];

    let mut histogram = vec![0u64; n + 1];
    let mut successes_per_source = vec![0u64; n];
    let mut successes = 0u64;
    let mut trajectory = Vec::with_capacity(TRAJECTORY_SAMPLES as usize + 1);
    let mut pivot = CoMoments::default();

    for t in 0..total {
        while let Some(&i) = passive.front() {
            if t - origin[i] < threshold {
                break;
            }
            passive.pop_front();
            position[i] = actives.len();
            actives.push(i);
        }
        let m = actives.len();
        if t % sample_every == 0 {
            trajectory.push(TrajectoryPoint {
                slot: t as u64,
                k: m as f64 / n as f64,
                mean_age: t as f64 - sum_origin as f64 / n as f64,
            });
        }
        let measuring = t >= warmup;
        if measuring {
            histogram[m] += 1;
            let pivot_age = t - origin[0];
            let others = m - usize::from(pivot_age >= threshold);
            pivot.push(others as f64, pivot_age as f64);
        }
        if !slot_succeeds(m, params, &mut rng) {
            continue;
        }
        let winner = actives[rng.random_range(0..m)];
        let slot = position[winner];
        actives.swap_remove(slot);
        if let Some(&moved) = actives.get(slot) {
            position[moved] = slot;
        }
        position[winner] = usize::MAX;

        let from = segment_start[winner].max(warmup);
        age_totals[winner] += age_sum(from, t, origin[winner]);
        segment_start[winner] = t + 1;
        sum_origin += i128::from(t - origin[winner]);
        origin[winner] = t;
        passive.push_back(winner);
        if measuring {
            successes += 1;
            successes_per_source[winner] += 1;
        }
    }

    let measured = (total - warmup) as u64;
    let avg_aoi_per_source: Vec<f64> = (0..n)
        .map(|i| {
            let tail = age_sum(segment_start[i].max(warmup), total - 1, origin[i]);
            (age_totals[i] + tail) as f64 / measured as f64
        })
        .collect();
    let network_avg_aoi = avg_aoi_per_source.iter().sum::<f64>() / n as f64;
    RunMetrics {
        n,
        measured_slots: measured,
        avg_aoi_per_source,
        network_avg_aoi,
        throughput: successes as f64 / measured as f64,
        successes,
        successes_per_source,
        active_count_histogram: histogram
            .into_iter()
            .map(|c| c as f64 / measured as f64)
            .collect(),
        k_trajectory: trajectory,
        pivot_age_correlation: pivot.correlation(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub mean: f64,
    /// Sample standard deviation; zero for a single replication.
    pub std: f64,
}

impl Summary {
    pub fn of(values: &[f64]) -> Summary {
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let std = if values.len() > 1 {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
        } else {
            0.0
        };
        Summary { mean, std }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicatedMetrics {
    /// Element-wise mean over replications; trajectory of replication 0.
    pub aggregate: RunMetrics,
    pub throughput: Summary,
    pub network_avg_aoi: Summary,
    pub normalized_aoi: Summary,
    pub replications: Vec<RunMetrics>,
}

fn mean_vec(runs: &[RunMetrics], pick: impl Fn(&RunMetrics) -> &[f64]) -> Vec<f64> {
    let len = pick(&runs[0]).len();
    let mut out = vec![0.0; len];
    for r in runs {
        for (o, v) in out.iter_mut().zip(pick(r)) {
            *o += v;
        }
    }
    let k = runs.len() as f64;
    out.into_iter().map(|x| x / k).collect()
}

/// Runs `config.replications` independent replications in parallel,
/// replication `i` seeded with `seed + i`.
pub fn run_replicated(config: &RunConfig) -> Result<ReplicatedMetrics> {
    config.validate()?;
    let runs: Vec<RunMetrics> = (0..config.replications as u64)
        .into_par_iter()
        .map(|i| run_seeded(config, config.seed.wrapping_add(i)))
        .collect();
    let scalars = |f: fn(&RunMetrics) -> f64| Summary::of(&runs.iter().map(f).collect::<Vec<_>>());
    let throughput = scalars(|r| r.throughput);
    let network_avg_aoi = scalars(|r| r.network_avg_aoi);
    let normalized_aoi = scalars(RunMetrics::normalized_aoi);
    let count = runs.len() as u64;
    let first = &runs[0];
    let per_source_successes = (0..first.n)
        .map(|i| runs.iter().map(|r| r.successes_per_source[i]).sum::<u64>() / count)
        .collect();
    let aggregate = RunMetrics {
        n: first.n,
        measured_slots: first.measured_slots,
        avg_aoi_per_source: mean_vec(&runs, |r| &r.avg_aoi_per_source),
        network_avg_aoi: network_avg_aoi.mean,
        throughput: throughput.mean,
        successes: runs.iter().map(|r| r.successes).sum::<u64>() / count,
        successes_per_source: per_source_successes,
        active_count_histogram: mean_vec(&runs, |r| &r.active_count_histogram),
        k_trajectory: first.k_trajectory.clone(),
        pivot_age_correlation: scalars(|r| r.pivot_age_correlation).mean,
    };
    Ok(ReplicatedMetrics {
        aggregate,
        throughput,
        network_avg_aoi,
        normalized_aoi,
        replications: runs,
    })
}

/// Normalised active-count histogram as a PMF starting at the smallest
/// observed count.
pub fn empirical_active_pmf(metrics: &RunMetrics) -> Result<ActiveCountPmf> {
    let hist = &metrics.active_count_histogram;
    let first = hist.iter().position(|&p| p > 0.0);
    let last = hist.iter().rposition(|&p| p > 0.0);
    let (Some(first), Some(last)) = (first, last) else {
        return Err(Error::Domain("active-count histogram is empty".into()));
    };
    let total: f64 = hist.iter().sum();
    Ok(ActiveCountPmf {
        support_min: first,
        probabilities: hist[first..=last].iter().map(|p| p / total).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::protocol::{step, NetworkState, Policy};

    fn mista(n: usize, gamma: u32, t1: f64, t2: f64) -> PolicyParams {
        PolicyParams::mista(n, gamma, t1, t2).unwrap()
    }

    #[test]
    fn age_sum_arithmetic() {
        assert_eq!(age_sum(3, 5, 1), 2 + 3 + 4);
        assert_eq!(age_sum(5, 4, 0), 0);
        assert_eq!(age_sum(0, 2, -4), 4 + 5 + 6);
    }

    #[test]
    fn config_validation() {
        let p = mista(10, 12, 0.1, 0.1);
        assert!(RunConfig::new(p.clone(), 100, 1).validate().is_ok());
        assert!(RunConfig::new(p.clone(), 100, 1).with_warmup(100).validate().is_err());
        assert!(RunConfig::new(p.clone(), 100, 1).with_replications(0).validate().is_err());
        let big = mista(1_000_000, 12, 0.1, 0.1);
        assert!(matches!(
            RunConfig::new(big, u64::MAX / 2, 1).validate(),
            Err(Error::Overflow(_))
        ));
    }

    #[test]
    fn deterministic_and_conserving() {
        let cfg = RunConfig::new(mista(20, 30, 0.4, 0.4), 50_000, 9);
        let a = run(&cfg).unwrap();
        let b = run(&cfg).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.successes, a.successes_per_source.iter().sum::<u64>());
        assert!((a.throughput - a.successes as f64 / 45_000.0).abs() < 1e-15);
        assert!((a.active_count_histogram.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        let mean = a.avg_aoi_per_source.iter().sum::<f64>() / 20.0;
        assert!((mean - a.network_avg_aoi).abs() < 1e-12);
        assert!(a.throughput >= 0.0 && a.throughput <= 1.0);
    }

    #[test]
    fn trajectory_sampling_stride() {
        let cfg = RunConfig::new(mista(5, 6, 0.3, 0.3), 100_000, 1);
        let m = run(&cfg).unwrap();
        assert_eq!(m.k_trajectory.len(), 10_000);
        assert_eq!(m.k_trajectory[1].slot, 10);
        assert_eq!(m.k_trajectory[0].k, 1.0);
        let short = run(&RunConfig::new(mista(5, 6, 0.3, 0.3), 50, 1)).unwrap();
        assert_eq!(short.k_trajectory.len(), 50);
    }

    #[test]
    fn initial_state_all_threshold_histogram() {
        let cfg = RunConfig::new(mista(7, 9, 0.2, 0.2), 1, 3).with_warmup(0);
        let m = run(&cfg).unwrap();
        let pmf = empirical_active_pmf(&m).unwrap();
        assert_eq!(pmf.support_min, 7);
        assert_eq!(pmf.probabilities, vec![1.0]);
        // the first-slot age of every source is the threshold
        assert_eq!(m.network_avg_aoi, 9.0);
    }

    #[test]
    fn all_fresh_start() {
        let cfg = RunConfig::new(mista(4, 10, 0.2, 0.2), 5, 3)
            .with_warmup(0)
            .with_initial(InitialState::AllFresh);
        let m = run(&cfg).unwrap();
        // nobody is active before slot 9: ages 1..=5
        assert_eq!(m.successes, 0);
        assert_eq!(m.network_avg_aoi, 3.0);
        assert_eq!(m.active_count_histogram[0], 1.0);
    }

    /// Single source: renewal argument gives
    /// `gamma (gamma - 1) / 2 / (gamma - 1 + 1/tau1) + 1/tau1`.
    #[test]
    fn single_source_renewal_age() {
        for &(gamma, tau1) in &[(4u32, 0.3), (10, 0.7), (2, 0.1)] {
            let cfg = RunConfig::new(mista(1, gamma, tau1, 0.5), 2_000_000, 17);
            let m = run(&cfg).unwrap();
            let g = gamma as f64;
            let expected = g * (g - 1.0) / (2.0 * (g - 1.0 + 1.0 / tau1)) + 1.0 / tau1;
            assert!(
                (m.network_avg_aoi - expected).abs() < 0.01 * expected,
                "gamma {gamma}: {} vs {expected}",
                m.network_avg_aoi
            );
            let rate = 1.0 / (g - 1.0 + 1.0 / tau1);
            assert!((m.throughput - rate).abs() < 0.01 * rate);
        }
    }

    /// Reference loop built on `protocol::step` over full age vectors.
    fn reference_run(params: &PolicyParams, slots: u64, seed: u64) -> (f64, f64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut s = NetworkState::all_threshold(params.n, params.activity_threshold());
        let (mut wins, mut age) = (0u64, 0u64);
        for _ in 0..slots {
            age += s.ages.iter().sum::<u64>();
            let (next, out) = step(&s, params, &mut rng);
            wins += u64::from(out.winner().is_some());
            s = next;
        }
        (
            wins as f64 / slots as f64,
            age as f64 / slots as f64 / (params.n * params.n) as f64,
        )
    }

    #[test]
    fn fast_engine_agrees_with_step() {
        let cases = [
            mista(8, 10, 0.3, 0.5),
            PolicyParams::threshold_aloha(6, 5, 0.25).unwrap(),
            PolicyParams::slotted_aloha(5, 0.2).unwrap(),
            PolicyParams::new(8, 6, 0.4, 0.4, Policy::mumista_default(3, 0.4, 0.4)).unwrap(),
        ];
        for p in cases {
            let slots = 400_000;
            let (thr_ref, age_ref) = reference_run(&p, slots, 3);
            let m = run(&RunConfig::new(p.clone(), slots, 4).with_warmup(0)).unwrap();
            assert!(
                (m.throughput - thr_ref).abs() < 0.01,
                "{:?}: {} vs {thr_ref}",
                p.policy,
                m.throughput
            );
            assert!(
                (m.normalized_aoi() - age_ref).abs() < 0.03 * age_ref,
                "{:?}: {} vs {age_ref}",
                p.policy,
                m.normalized_aoi()
            );
        }
    }

    #[test]
    fn replication_identity() {
        let cfg = RunConfig::new(mista(10, 14, 0.3, 0.3), 20_000, 5);
        let single = run(&cfg).unwrap();
        let rep = run_replicated(&cfg).unwrap();
        assert_eq!(rep.aggregate, single);
        assert_eq!(rep.throughput.std, 0.0);
        let rep2 = run_replicated(&cfg.clone().with_replications(3)).unwrap();
        assert_eq!(rep2.replications[0], single);
        let seeded = run(&RunConfig { seed: 7, ..cfg.clone() }).unwrap();
        assert_eq!(rep2.replications[2], seeded);
        assert_eq!(rep2, run_replicated(&cfg.with_replications(3)).unwrap());
    }
}
