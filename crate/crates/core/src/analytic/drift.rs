//! Large-network drift of the active fraction.
//!
//! With `alpha = n tau1`, `r = gamma / n` and `k = m / n`, the log ratio of
//! consecutive active-count probabilities converges to
//!
//! ```text
//! f(k) = ln(1 / (k Q(k)) - 1) + ln(r / (k + r - 1) - 1)
//! Q(k) = alpha e^{-k alpha} + alpha tau2 (e^{-tau2 k alpha} - e^{-k alpha})
//! ```
//!
//! Decreasing zero crossings of `f` are the candidate steady loads.

use serde::{Deserialize, Serialize};

use super::age::q0_limit;
use crate::error::{Error, Result};
use crate::numeric::{adaptive_simpson, bisect, sign_change_brackets};
use crate::protocol::ScaledParams;

pub const DEFAULT_GRID_POINTS: usize = 10_000;
const EDGE: f64 = 1e-12;
const ROOT_TOL: f64 = 1e-14;
const QUAD_TOL: f64 = 1e-8;

/// Open interval on which both logarithms of `f` are defined.
pub fn drift_domain(scaled: &ScaledParams) -> (f64, f64) {
    ((1.0 - scaled.r).max(0.0), 1.0)
}

fn log_args(k: f64, s: &ScaledParams) -> (f64, f64) {
    let load = k * q0_limit(s, k);
    (1.0 / load - 1.0, s.r / (k + s.r - 1.0) - 1.0)
}

/// Drift function; errors outside the region where both log arguments are
/// positive.
pub fn drift_f(k: f64, scaled: &ScaledParams) -> Result<f64> {
    let (lo, hi) = drift_domain(scaled);
    let (a, b) = log_args(k, scaled);
    let positive = |x: f64| x > 0.0;
    if !(k > lo && k < hi && positive(a) && positive(b)) {
        return Err(Error::Domain(format!(
            "f(k) undefined at k = {k} (domain ({lo}, {hi}))"
        )));
    }
    Ok(a.ln() + b.ln())
}

/// Drift function extended with `+inf` left of the domain and `-inf` right
/// of it, for bracketing.
pub fn drift_f_extended(k: f64, scaled: &ScaledParams) -> f64 {
    let (lo, hi) = drift_domain(scaled);
    if k <= lo {
        return f64::INFINITY;
    }
    if k >= hi {
        return f64::NEG_INFINITY;
    }
    let edge = if k - lo < hi - k {
        f64::INFINITY
    } else {
        f64::NEG_INFINITY
    };
    drift_f(k, scaled).unwrap_or(edge)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    SinglePeak,
    DoublePeak,
    /// Root count other than 1 or 3.
    Degenerate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DriftAnalysis {
    pub roots: Vec<f64>,
    pub decreasing_roots: Vec<f64>,
    /// Integral of `f` between the outer roots, double-peak case only.
    pub integral_k0_k2: Option<f64>,
    pub selected_k0: f64,
    pub regime: Regime,
    /// Double-peak integral was exactly zero; the lower root was kept.
    pub tie_warning: bool,
}

pub fn regime_analysis(scaled: &ScaledParams) -> Result<DriftAnalysis> {
    regime_analysis_with(scaled, DEFAULT_GRID_POINTS)
}

/// Finds all sign changes of `f` on a uniform grid, refines them by
/// bisection, classifies the regime and selects the limiting load.
///
/// For three roots `k0 < k1 < k2` the lower root is selected when
/// `integral(f, k0, k2) <= 0`, the upper one otherwise. For a degenerate
/// root count the decreasing root maximising the running integral of `f`
/// (the limiting log-probability) is reported.
pub fn regime_analysis_with(scaled: &ScaledParams, grid_points: usize) -> Result<DriftAnalysis> {
    let (lo, hi) = drift_domain(scaled);
    let (lo, hi) = (lo + EDGE, hi - EDGE);
    let f = |k: f64| drift_f_extended(k, scaled);
    let brackets = sign_change_brackets(&f, lo, hi, grid_points);
    if brackets.is_empty() {
        return Err(Error::NoRoot { lo, hi });
    }
    let mut roots = Vec::with_capacity(brackets.len());
    let mut decreasing_roots = Vec::new();
    for &(a, b, decreasing) in &brackets {
        let root = bisect(f, a, b, ROOT_TOL);
        roots.push(root);
        if decreasing {
            decreasing_roots.push(root);
        }
    }
    let integral = |a: f64, b: f64| adaptive_simpson(&f, a, b, QUAD_TOL);

    let (regime, integral_k0_k2, selected_k0, tie_warning) = match roots.len() {
        1 => (Regime::SinglePeak, None, roots[0], false),
        3 => {
            let i = integral(roots[0], roots[2]);
            let pick = if i > 0.0 { roots[2] } else { roots[0] };
            (Regime::DoublePeak, Some(i), pick, i == 0.0)
        }
        _ => {
            let first = decreasing_roots[0];
            let mut best = (first, 0.0);
            for &k in &decreasing_roots[1..] {
                let v = integral(first, k);
                if v > best.1 {
                    best = (k, v);
                }
            }
            (Regime::Degenerate, None, best.0, false)
        }
    };
    Ok(DriftAnalysis {
        roots,
        decreasing_roots,
        integral_k0_k2,
        selected_k0,
        regime,
        tie_warning,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sp(alpha: f64, r: f64, tau2: f64) -> ScaledParams {
        ScaledParams::new(alpha, r, tau2).unwrap()
    }

    #[test]
    fn near_zero_at_published_root() {
        let v = drift_f(0.1555, &sp(10.0, 1.59, 0.38)).unwrap();
        assert!(v.abs() < 0.01, "{v}");
    }

    #[test]
    fn tau2_one_collapse() {
        let s = sp(4.69, 2.21, 1.0);
        for &k in &[0.1, 0.3, 0.6, 0.9] {
            let ka = k * s.alpha;
            let ta = (1.0 / (ka * (-ka).exp()) - 1.0).ln() + (s.r / (k + s.r - 1.0) - 1.0).ln();
            assert!((drift_f(k, &s).unwrap() - ta).abs() < 1e-12);
        }
    }

    #[test]
    fn right_edge_diverges_down() {
        let s = sp(10.0, 1.59, 0.38);
        assert!(drift_f(1.0 - 1e-9, &s).unwrap() < -10.0);
        assert!(drift_f(1.0, &s).is_err());
        assert!(drift_f(0.0, &s).is_err());
        assert_eq!(drift_f_extended(1.5, &s), f64::NEG_INFINITY);
        let narrow = sp(5.0, 0.5, 0.5);
        assert!(drift_f(0.4, &narrow).is_err());
        assert_eq!(drift_f_extended(0.4, &narrow), f64::INFINITY);
    }

    #[test]
    fn double_peak_selects_lower_root() {
        let a = regime_analysis(&sp(10.0, 1.59, 0.38)).unwrap();
        assert_eq!(a.regime, Regime::DoublePeak);
        assert_eq!(a.roots.len(), 3);
        assert_eq!(a.decreasing_roots.len(), 2);
        assert!(a.integral_k0_k2.unwrap() < 0.0);
        assert_eq!(a.selected_k0, a.roots[0]);
        assert!((a.selected_k0 - 0.1555).abs() < 0.002);
        let s = sp(10.0, 1.59, 0.38);
        assert!(drift_f(a.selected_k0, &s).unwrap().abs() < 1e-9);
    }

    #[test]
    fn single_peak_root() {
        let a = regime_analysis(&sp(9.8, 1.59, 0.37)).unwrap();
        assert_eq!(a.regime, Regime::SinglePeak);
        assert!((a.selected_k0 - 0.1565).abs() < 0.002);
    }
}
