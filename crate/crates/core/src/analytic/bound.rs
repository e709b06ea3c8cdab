use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::bisect;

/// Large-`m` instantaneous throughput with offered minislot load `g = m tau1`:
/// `tau2 g e^{-tau2 g} + (1 - tau2) g e^{-g}`.
pub fn instantaneous_throughput(g: f64, tau2: f64) -> f64 {
    tau2 * g * (-tau2 * g).exp() + (1.0 - tau2) * g * (-g).exp()
}

/// Maximum achievable throughput and the induced age lower bound
/// `Delta / n >= 1 / (2 q_max) + 1 / (2 n)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThroughputBound {
    pub q_max: f64,
    pub g_star: f64,
    pub tau2_star: f64,
}

impl ThroughputBound {
    /// Coefficient of `n` in the age lower bound.
    pub fn bound_slope(&self) -> f64 {
        1.0 / (2.0 * self.q_max)
    }

    /// Lower bound on the average age for `n` sources.
    pub fn age_lower_bound(&self, n: f64) -> f64 {
        n * self.bound_slope() + 0.5
    }
}

const G_RANGE: (f64, f64) = (0.0, 10.0);

fn refine<F: Fn(f64, f64) -> f64>(
    f: &F,
    mut x: [f64; 2],
    lo: [f64; 2],
    hi: [f64; 2],
    mut step: [f64; 2],
    free: [bool; 2],
) -> [f64; 2] {
    let mut best = f(x[0], x[1]);
    while step.iter().zip(free).any(|(&s, fr)| fr && s > 1e-12) {
        let mut improved = false;
        for d in 0..2 {
            if !free[d] {
                continue;
            }
            for sign in [1.0, -1.0] {
                let mut y = x;
                y[d] = (y[d] + sign * step[d]).clamp(lo[d], hi[d]);
                let v = f(y[0], y[1]);
                if v > best {
                    best = v;
                    x = y;
                    improved = true;
                }
            }
        }
        if !improved {
            step = [step[0] * 0.5, step[1] * 0.5];
        }
    }
    x
}

fn maximise(fixed_tau2: Option<f64>) -> ThroughputBound {
    let tau2_range = match fixed_tau2 {
        Some(t) => (t, t),
        None => (1e-6, 1.0),
    };
    let (gn, tn) = (400usize, if fixed_tau2.is_some() { 1 } else { 400 });
    let mut best = (f64::NEG_INFINITY, 0.0, 0.0);
    for i in 1..=gn {
        let g = G_RANGE.0 + (G_RANGE.1 - G_RANGE.0) * i as f64 / gn as f64;
        for j in 0..tn {
            let t = if tn == 1 {
                tau2_range.0
            } else {
                tau2_range.0 + (tau2_range.1 - tau2_range.0) * j as f64 / (tn - 1) as f64
            };
            let q = instantaneous_throughput(g, t);
            if q > best.0 {
                best = (q, g, t);
            }
        }
    }
    let x = refine(
        &instantaneous_throughput,
        [best.1, best.2],
        [1e-9, tau2_range.0],
        [G_RANGE.1, tau2_range.1],
        [0.025, 0.0025],
        [true, fixed_tau2.is_none()],
    );
    ThroughputBound {
        q_max: instantaneous_throughput(x[0], x[1]),
        g_star: x[0],
        tau2_star: x[1],
    }
}

/// Joint maximisation over `(g, tau2)` in `(0, 10] x (0, 1]`.
pub fn max_throughput_and_age_bound() -> ThroughputBound {
    maximise(None)
}

/// Maximisation over `g` with `tau2` held fixed; `tau2 = 1` is the slotted
/// and threshold ALOHA case.
pub fn max_throughput_with_tau2(tau2: f64) -> Result<ThroughputBound> {
    if !(tau2 > 0.0 && tau2 <= 1.0) {
        return Err(Error::InvalidParams(format!("tau2 must lie in (0, 1], got {tau2}")));
    }
    Ok(maximise(Some(tau2)))
}

/// Spectral efficiency of the mini-slotted scheme relative to plain
/// threshold ALOHA: `(theta2 / theta1) * c / (c + d)`, where `c` and `d` are
/// the data-slot and minislot sizes in bits. Bandwidth, horizon and bit
/// time cancel.
pub fn spectral_ratio(theta2: f64, theta1: f64, c_bits: f64, d_bits: f64) -> Result<f64> {
    if !(theta2 > 0.0 && theta1 > 0.0 && c_bits > 0.0 && d_bits >= 0.0) {
        return Err(Error::InvalidParams(
            "throughputs and data size must be positive, minislot size non-negative".into(),
        ));
    }
    Ok(theta2 / theta1 * c_bits / (c_bits + d_bits))
}

/// Payload ratio `c / d` at which [`spectral_ratio`] equals one, found by
/// bisection. `None` when the throughput gain cannot pay for any minislot.
pub fn breakeven_payload_ratio(theta2: f64, theta1: f64) -> Result<Option<f64>> {
    spectral_ratio(theta2, theta1, 1.0, 1.0)?;
    if theta2 <= theta1 {
        return Ok(None);
    }
    let excess = |x: f64| spectral_ratio(theta2, theta1, x, 1.0).map(|v| v - 1.0).unwrap_or(-1.0);
    let mut hi = 1.0;
    while excess(hi) <= 0.0 {
        hi *= 2.0;
        if hi > 1e15 {
            return Ok(None);
        }
    }
    Ok(Some(bisect(excess, 1e-12, hi, 1e-13)))
}
