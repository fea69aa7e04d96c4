//! Ramp surrogate loss, the Rademacher-style generalization bound and the
//! sample-complexity solver built on it.
//!
//! Hidden constants are collapsed into one factor `c_rad` (default 1), so
//! every number here holds up to that constant.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Below e² the bound is not monotone in n.
pub const MIN_SAMPLES: u64 = 8;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum BoundError {
    #[error("gamma must be positive, got {0}")]
    InvalidGamma(f64),
    #[error("the bound needs n ≥ {MIN_SAMPLES}, got {0}")]
    TooFewSamples(u64),
    #[error("{name} must be positive and finite, got {value}")]
    NonPositive { name: &'static str, value: f64 },
    #[error("confidence must lie in (0, 1), got {0}")]
    InvalidConfidence(f64),
    #[error("no n below 2^62 reaches eps = {0}")]
    Unreachable(f64),
}

fn positive(name: &'static str, value: f64) -> Result<f64, BoundError> {
    if value > 0.0 && value.is_finite() {
        Ok(value)
    } else {
        Err(BoundError::NonPositive { name, value })
    }
}

/// 1 for margin ≤ 0, 1 − margin/γ on (0, γ), 0 from γ on.
pub fn surrogate_loss(margin: f64, gamma: f64) -> Result<f64, BoundError> {
    if !(gamma > 0.0 && gamma.is_finite()) {
        return Err(BoundError::InvalidGamma(gamma));
    }
    Ok(if margin <= 0.0 {
        1.0
    } else if margin < gamma {
        1.0 - margin / gamma
    } else {
        0.0
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundQuery {
    /// ℓ₁ bound on the parameters.
    pub alpha: f64,
    /// Parameter count.
    pub p: f64,
    pub gamma: f64,
    pub eps: f64,
    pub n: u64,
    pub delta_conf: f64,
    pub c_rad: f64,
}

impl Default for BoundQuery {
    fn default() -> Self {
        BoundQuery { alpha: 1.0, p: std::f64::consts::E, gamma: 1.0, eps: 0.1, n: 1000, delta_conf: 0.01, c_rad: 1.0 }
    }
}

/// c_rad · α · ln n · √(ln p) / (γ √n).
pub fn rademacher_bound(q: &BoundQuery) -> Result<f64, BoundError> {
    if q.n < MIN_SAMPLES {
        return Err(BoundError::TooFewSamples(q.n));
    }
    let alpha = positive("alpha", q.alpha)?;
    let p = positive("p", q.p)?;
    if !(q.gamma > 0.0 && q.gamma.is_finite()) {
        return Err(BoundError::InvalidGamma(q.gamma));
    }
    let c = positive("c_rad", q.c_rad)?;
    let n = q.n as f64;
    // ln p < 0 only for p < 1; clamp so the bound stays defined.
    let lp = p.ln().max(0.0);
    Ok(c * alpha * n.ln() * lp.sqrt() / (q.gamma * n.sqrt()))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SampleComplexity {
    pub n: u64,
    pub bound_at_n: f64,
    /// Bound at n − 1, absent when n is the smallest admissible sample size.
    pub bound_below: Option<f64>,
}

/// Smallest integer n ≥ 8 with `rademacher_bound(n) ≤ eps`.
pub fn solve_sample_complexity(alpha: f64, p: f64, gamma: f64, eps: f64, c_rad: f64) -> Result<SampleComplexity, BoundError> {
    positive("eps", eps)?;
    let at = |n: u64| rademacher_bound(&BoundQuery { alpha, p, gamma, eps, n, delta_conf: 0.01, c_rad });
    if at(MIN_SAMPLES)? <= eps {
        return Ok(SampleComplexity { n: MIN_SAMPLES, bound_at_n: at(MIN_SAMPLES)?, bound_below: None });
    }
    let mut lo = MIN_SAMPLES;
    let mut hi = MIN_SAMPLES * 2;
    while at(hi)? > eps {
        lo = hi;
        hi = hi.checked_mul(2).filter(|&h| h < 1 << 62).ok_or(BoundError::Unreachable(eps))?;
    }
    // Invariant: bound(lo) > eps ≥ bound(hi).
    while hi - lo > 1 {
        let mid = lo + (hi - lo) / 2;
        if at(mid)? <= eps {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(SampleComplexity { n: hi, bound_at_n: at(hi)?, bound_below: Some(at(hi - 1)?) })
}

/// 5ε + 2 √(ln(2/δ) / n).
pub fn sm_bound(eps_surrogate: f64, n: u64, delta_conf: f64) -> Result<f64, BoundError> {
    if n == 0 {
        return Err(BoundError::TooFewSamples(0));
    }
    if !(delta_conf > 0.0 && delta_conf < 1.0) {
        return Err(BoundError::InvalidConfidence(delta_conf));
    }
    if !(eps_surrogate >= 0.0 && eps_surrogate.is_finite()) {
        return Err(BoundError::NonPositive { name: "eps", value: eps_surrogate });
    }
    Ok(5.0 * eps_surrogate + 2.0 * ((2.0 / delta_conf).ln() / n as f64).sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NetSampleComplexity {
    pub alpha: f64,
    pub p: f64,
    pub gamma: f64,
    pub eps: f64,
    pub c_rad: f64,
    pub result: SampleComplexity,
}

/// Reads α = ‖θ‖₁ and p from a model and solves for n.
pub fn sample_complexity_from_params(
    l1_norm: f64,
    param_count: usize,
    gamma_hat: f64,
    eps: f64,
    c_rad: f64,
) -> Result<NetSampleComplexity, BoundError> {
    if !(gamma_hat > 0.0 && gamma_hat.is_finite()) {
        return Err(BoundError::InvalidGamma(gamma_hat));
    }
    let p = param_count as f64;
    let result = solve_sample_complexity(l1_norm, p, gamma_hat, eps, c_rad)?;
    Ok(NetSampleComplexity { alpha: l1_norm, p, gamma: gamma_hat, eps, c_rad, result })
}

pub fn sample_complexity_from_net(
    net: &crate::ffnet::LayeredNet<f64>,
    gamma_hat: f64,
    eps: f64,
    c_rad: f64,
) -> Result<NetSampleComplexity, BoundError> {
    sample_complexity_from_params(net.l1_norm(), net.param_count(), gamma_hat, eps, c_rad)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn ramp_cases() {
        assert_eq!(surrogate_loss(-0.1, 0.5).unwrap(), 1.0);
        assert_eq!(surrogate_loss(0.25, 0.5).unwrap(), 0.5);
        assert_eq!(surrogate_loss(0.7, 0.5).unwrap(), 0.0);
        assert!(matches!(surrogate_loss(0.1, 0.0), Err(BoundError::InvalidGamma(_))));
    }

    fn oracle(n: f64) -> f64 {
        n.ln() / n.sqrt()
    }

    #[test]
    fn rademacher_at_8000() {
        let q = BoundQuery { n: 8000, ..Default::default() };
        let b = rademacher_bound(&q).unwrap();
        assert!((b - oracle(8000.0)).abs() < 1e-12);
        assert!((b - 0.1005).abs() < 5e-5);
        let q2 = BoundQuery { gamma: 2.0, ..q };
        assert!((rademacher_bound(&q2).unwrap() - b / 2.0).abs() < 1e-15);
        assert!(matches!(rademacher_bound(&BoundQuery { n: 7, ..q }), Err(BoundError::TooFewSamples(7))));
    }

    #[test]
    fn solver_boundary_near_8100() {
        let s = solve_sample_complexity(1.0, std::f64::consts::E, 1.0, 0.1, 1.0).unwrap();
        assert!(s.n > 8000 && s.n <= 8200, "{}", s.n);
        // Linear scan oracle over the window.
        let first = (8000u64..=8200).find(|&n| oracle(n as f64) <= 0.1).unwrap();
        assert_eq!(s.n, first);
        assert!(s.bound_at_n <= 0.1 && s.bound_below.unwrap() > 0.1);
    }

    #[test]
    fn halving_eps_roughly_quadruples() {
        let a = solve_sample_complexity(1.0, 10.0, 1.0, 0.1, 1.0).unwrap().n as f64;
        let b = solve_sample_complexity(1.0, 10.0, 1.0, 0.05, 1.0).unwrap().n as f64;
        let ratio = b / a;
        assert!(ratio > 4.0 && ratio < 6.0, "{ratio}");
    }

    #[test]
    fn sm_bound_at_530() {
        let v = sm_bound(0.0, 530, 0.01).unwrap();
        let oracle = 2.0 * (200f64.ln() / 530.0).sqrt();
        assert!((v - oracle).abs() < 1e-12);
        assert!((v - 0.200).abs() < 1e-3);
        assert!(sm_bound(0.1, u64::MAX, 0.01).unwrap() - 0.5 < 1e-6);
    }

    #[test]
    fn gamma_hat_validation() {
        assert!(sample_complexity_from_params(3.0, 10, 0.0, 0.1, 1.0).is_err());
        assert!(sample_complexity_from_params(3.0, 10, -1.0, 0.1, 1.0).is_err());
    }

    proptest! {
        #[test]
        fn surrogate_dominates_zero_one(m in -2.0f64..2.0, g in 1e-3f64..2.0) {
            let s = surrogate_loss(m, g).unwrap();
            prop_assert!((0.0..=1.0).contains(&s));
            let zero_one = if m <= 0.0 { 1.0 } else { 0.0 };
            prop_assert!(s >= zero_one);
        }

        #[test]
        fn surrogate_monotone(m in -2.0f64..2.0, dm in 0.0f64..1.0, g in 1e-3f64..2.0, dg in 0.0f64..1.0) {
            prop_assert!(surrogate_loss(m + dm, g).unwrap() <= surrogate_loss(m, g).unwrap());
            prop_assert!(surrogate_loss(m, g + dg).unwrap() >= surrogate_loss(m, g).unwrap());
        }

        #[test]
        fn solver_exact_boundary(alpha in 0.1f64..10.0, p in 2.0f64..1e6, gamma in 0.05f64..5.0, eps in 0.01f64..0.5) {
            let s = solve_sample_complexity(alpha, p, gamma, eps, 1.0).unwrap();
            let q = BoundQuery { alpha, p, gamma, eps, n: s.n, delta_conf: 0.01, c_rad: 1.0 };
            prop_assert!(rademacher_bound(&q).unwrap() <= eps);
            if s.n > MIN_SAMPLES {
                let below = BoundQuery { n: s.n - 1, ..q };
                prop_assert!(rademacher_bound(&below).unwrap() > eps);
            }
        }

        #[test]
        fn doubling_gamma_never_needs_more(alpha in 0.1f64..10.0, p in 2.0f64..1e4, gamma in 0.05f64..5.0) {
            let a = solve_sample_complexity(alpha, p, gamma, 0.1, 1.0).unwrap().n;
            let b = solve_sample_complexity(alpha, p, 2.0 * gamma, 0.1, 1.0).unwrap().n;
            prop_assert!(b <= a);
        }
    }
}
