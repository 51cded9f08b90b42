//! Closed-form delay bounds, delay-ratio brackets and measurement planning.
//!
//! Every function returns the leading-order expression: the `(1 + o(1))`
//! factor that vanishes as α → 0 is dropped. Concentration constants that the
//! underlying results leave abstract are inputs ([`ConcentrationConstants`]),
//! never baked into a formula.

use serde::{Deserialize, Serialize};

use crate::error::{check_open_unit, check_positive, Error, Result};
use crate::sensing::{projection_energy, SensingMatrix, Signal};

/// Default slack multiplier applied to upper brackets when comparing finite-α
/// simulation with the asymptotic expressions.
pub const DEFAULT_SLACK: f64 = 1.15;

/// `10^(dB/10)`.
pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

pub fn linear_to_db(x: f64) -> f64 {
    10.0 * x.log10()
}

/// |log(1 − ρ)|: the delay-per-sample contribution of the geometric prior.
pub fn prior_rate(rho: f64) -> f64 {
    -(-rho).ln_1p()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConcentrationConstants {
    /// Exponent constant in `1 − 2exp(−c M δ²)`.
    pub c: f64,
    pub c1: f64,
    pub c2: f64,
    pub delta1: f64,
    pub delta2: f64,
}

impl Default for ConcentrationConstants {
    fn default() -> Self {
        Self {
            c: 0.25,
            c1: 1.0,
            c2: 1.0,
            delta1: 1.0,
            delta2: 1.0,
        }
    }
}

impl ConcentrationConstants {
    pub fn validate(&self) -> Result<()> {
        check_positive("c", self.c)?;
        check_positive("c1", self.c1)?;
        check_positive("c2", self.c2)?;
        check_positive("delta1", self.delta1)?;
        check_positive("delta2", self.delta2)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundInputs {
    pub alpha: f64,
    pub rho: f64,
    /// ‖s‖²/σ², linear.
    pub snr: f64,
    /// M/N.
    pub gamma: f64,
    pub delta: f64,
}

impl BoundInputs {
    pub fn validate(&self) -> Result<()> {
        check_open_unit("alpha", self.alpha)?;
        check_open_unit("rho", self.rho)?;
        check_positive("snr", self.snr)?;
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return Err(Error::InvalidParameter {
                name: "gamma",
                value: self.gamma,
                reason: "must lie in (0, 1]",
            });
        }
        check_delta(self.delta)
    }
}

fn check_delta(delta: f64) -> Result<()> {
    if (0.0..1.0).contains(&delta) {
        Ok(())
    } else {
        Err(Error::InvalidParameter {
            name: "delta",
            value: delta,
            reason: "must lie in [0, 1)",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DelayBounds {
    pub add_lower: f64,
    pub add_upper: f64,
}

impl DelayBounds {
    pub fn contains(&self, value: f64, slack: f64) -> bool {
        value >= self.add_lower && value <= self.add_upper * slack
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RatioBounds {
    pub r_lower: f64,
    pub r_upper: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeasurementPlan {
    /// Measurements for the subgaussian concentration property over K-sparse
    /// signals with probability 1 − β.
    pub m1: f64,
    /// Measurements for the delay-ratio target r0.
    pub m2: f64,
    pub m: u64,
    pub feasible: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ToeplitzBound {
    pub add_upper: f64,
    /// 1 − exp(−c1 M / K²).
    pub prob_floor: f64,
    /// c2 K² log N.
    pub m_min: f64,
}

/// `|log α| / (D + |log(1−ρ)|)`.
pub fn add_asymptotic(alpha: f64, rho: f64, kl: f64) -> Result<f64> {
    check_open_unit("alpha", alpha)?;
    if !(0.0..1.0).contains(&rho) {
        return Err(Error::InvalidParameter {
            name: "rho",
            value: rho,
            reason: "must lie in [0, 1)",
        });
    }
    if !(kl >= 0.0) {
        return Err(Error::InvalidParameter {
            name: "kl",
            value: kl,
            reason: "must be nonnegative",
        });
    }
    let rate = kl + prior_rate(rho);
    if !(rate > 0.0) {
        return Err(Error::InvalidParameter {
            name: "kl",
            value: kl,
            reason: "kl + |log(1 - rho)| must be positive",
        });
    }
    Ok(-alpha.ln() / rate)
}

/// KL divergence between post- and pre-change compressed laws:
/// `‖Qs‖² / (2σ²)`.
pub fn kl_compressed(phi: &SensingMatrix, s: &Signal, sigma2: f64) -> Result<f64> {
    check_positive("sigma2", sigma2)?;
    Ok(projection_energy(phi, s)? / (2.0 * sigma2))
}

/// Delay bracket when ‖Qs‖² concentrates within (1 ± δ)γ‖s‖².
pub fn add_bounds_projection(inputs: &BoundInputs) -> Result<DelayBounds> {
    inputs.validate()?;
    let BoundInputs {
        alpha,
        rho,
        snr,
        gamma,
        delta,
    } = *inputs;
    Ok(DelayBounds {
        add_lower: add_asymptotic(alpha, rho, (1.0 + delta) * gamma * snr / 2.0)?,
        add_upper: add_asymptotic(alpha, rho, (1.0 - delta) * gamma * snr / 2.0)?,
    })
}

/// Bracket on ADD(compressed)/ADD(uncompressed).
pub fn delay_ratio_bounds(snr: f64, rho: f64, gamma: f64, delta: f64) -> Result<RatioBounds> {
    BoundInputs {
        alpha: 0.5,
        rho,
        snr,
        gamma,
        delta,
    }
    .validate()?;
    let prior = 2.0 * prior_rate(rho);
    let numerator = snr + prior;
    Ok(RatioBounds {
        r_lower: numerator / (gamma * (1.0 + delta) * snr + prior),
        r_upper: numerator / (gamma * (1.0 - delta) * snr + prior),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlanInputs {
    pub n: usize,
    pub k: usize,
    pub delta: f64,
    pub beta: f64,
    pub r0: f64,
    pub rho: f64,
    pub snr: f64,
}

/// Measurements sufficient for delay ratio `r ≤ r0` with probability `1 − β`.
///
/// `m2` is floored at 0 when the prior term alone meets the target.
pub fn plan_measurements(inputs: &PlanInputs, constants: &ConcentrationConstants) -> Result<MeasurementPlan> {
    let PlanInputs {
        n,
        k,
        delta,
        beta,
        r0,
        rho,
        snr,
    } = *inputs;
    if !(r0 > 1.0) {
        return Err(Error::RatioTarget(r0));
    }
    check_open_unit("delta", delta)?;
    check_open_unit("beta", beta)?;
    check_open_unit("rho", rho)?;
    check_positive("snr", snr)?;
    constants.validate()?;
    if k == 0 || k > n {
        return Err(Error::InvalidParameter {
            name: "K",
            value: k as f64,
            reason: "sparsity must satisfy 1 <= K <= N",
        });
    }
    let m1 = concentration_measurements(k as f64, delta, beta, constants);
    let m2 = n as f64 * ratio_fraction(delta, r0, rho, snr);
    let m = m1.max(m2).max(1.0).ceil() as u64;
    Ok(MeasurementPlan {
        m1,
        m2,
        m,
        feasible: m <= n as u64,
    })
}

fn concentration_measurements(k: f64, delta: f64, beta: f64, constants: &ConcentrationConstants) -> f64 {
    2.0 * (k * (42.0 / delta).ln() + (2.0 / beta).ln()) / (constants.c * delta * delta)
}

/// γ₂ = m2/N, which does not depend on N.
fn ratio_fraction(delta: f64, r0: f64, rho: f64, snr: f64) -> f64 {
    let factor = 1.0 - 2.0 * (r0 - 1.0) / snr * prior_rate(rho);
    (factor / (r0 * (1.0 - delta))).max(0.0)
}

/// `ceil(k_scale · ln N)`, clamped to `[1, N]`.
pub fn sparsity_for(n: usize, k_scale: f64) -> usize {
    ((k_scale * (n as f64).ln()).ceil().max(1.0) as usize).min(n.max(1))
}

/// Smallest N from which on the concentration requirement `γ₁ = m1/N` never
/// exceeds the ratio requirement `γ₂ = m2/N`, so that `γ = γ₂`.
///
/// K follows [`sparsity_for`] when `k_scale` is given, otherwise `inputs.k` is
/// held fixed; `inputs.n` is ignored. `None` when `γ₂ = 0`.
pub fn plan_crossover(
    inputs: &PlanInputs,
    k_scale: Option<f64>,
    constants: &ConcentrationConstants,
) -> Result<Option<u64>> {
    plan_measurements(
        &PlanInputs {
            n: inputs.k.max(1),
            k: inputs.k.max(1),
            ..*inputs
        },
        constants,
    )?;
    let PlanInputs {
        delta, beta, r0, rho, snr, ..
    } = *inputs;
    let gamma2 = ratio_fraction(delta, r0, rho, snr);
    if gamma2 <= 0.0 {
        return Ok(None);
    }
    let m1 = |k: f64| concentration_measurements(k, delta, beta, constants);
    let Some(a) = k_scale else {
        return Ok(Some((m1(inputs.k as f64) / gamma2).ceil().max(1.0) as u64));
    };
    check_positive("k_scale", a)?;
    let below = |n: u64| m1(sparsity_for(n as usize, a) as f64) <= gamma2 * n as f64;
    // K + 1 ≥ ceil(a ln N) envelope, decreasing in N for N ≥ 3.
    let relaxed = |n: u64| m1(a * (n as f64).ln() + 1.0) <= gamma2 * n as f64;
    let mut hi = 4u64;
    while !relaxed(hi) {
        hi = hi.checked_mul(2).ok_or(Error::Undefined("planner crossover"))?;
    }
    let mut lo = 3u64;
    while lo < hi {
        let mid = lo + (hi - lo) / 2;
        if relaxed(mid) {
            hi = mid;
        } else {
            lo = mid + 1;
        }
    }
    let mut n = hi;
    while n > 1 && below(n - 1) {
        n -= 1;
    }
    Ok(Some(n))
}

/// Smallest M with `1 − 2exp(−c M δ²) ≥ 1 − β` for a single fixed signal.
pub fn measurements_for_confidence(delta: f64, beta: f64, constants: &ConcentrationConstants) -> Result<u64> {
    check_open_unit("delta", delta)?;
    check_open_unit("beta", beta)?;
    constants.validate()?;
    Ok(((2.0 / beta).ln() / (constants.c * delta * delta)).ceil().max(1.0) as u64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RipInputs {
    pub alpha: f64,
    pub rho: f64,
    pub snr: f64,
    pub delta: f64,
    pub lambda_min: f64,
    pub lambda_max: f64,
}

/// Delay bracket from the Gram extremes of an RIP matrix.
pub fn add_bounds_rip(inputs: &RipInputs) -> Result<DelayBounds> {
    let RipInputs {
        alpha,
        rho,
        snr,
        delta,
        lambda_min,
        lambda_max,
    } = *inputs;
    check_delta(delta)?;
    check_positive("snr", snr)?;
    if !(lambda_min > 0.0) {
        return Err(Error::InvalidParameter {
            name: "lambda_min",
            value: lambda_min,
            reason: "must be positive",
        });
    }
    if !(lambda_max >= lambda_min) {
        return Err(Error::InvalidParameter {
            name: "lambda_max",
            value: lambda_max,
            reason: "must be at least lambda_min",
        });
    }
    Ok(DelayBounds {
        add_lower: add_asymptotic(alpha, rho, snr / (2.0 * lambda_min) * (1.0 + delta))?,
        add_upper: add_asymptotic(alpha, rho, snr / (2.0 * lambda_max) * (1.0 - delta))?,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ToeplitzInputs {
    pub alpha: f64,
    pub rho: f64,
    pub snr: f64,
    pub delta: f64,
    pub n: usize,
    pub k: usize,
    pub m: usize,
}

/// ADD upper bound for Gaussian Toeplitz sensing, with its probability floor
/// at the given M and the minimum M for the RIP regime.
pub fn add_upper_toeplitz(inputs: &ToeplitzInputs, constants: &ConcentrationConstants) -> Result<ToeplitzBound> {
    let ToeplitzInputs {
        alpha,
        rho,
        snr,
        delta,
        n,
        k,
        m,
    } = *inputs;
    check_delta(delta)?;
    check_positive("snr", snr)?;
    constants.validate()?;
    if k == 0 || k > n {
        return Err(Error::InvalidParameter {
            name: "K",
            value: k as f64,
            reason: "sparsity must satisfy 1 <= K <= N",
        });
    }
    let (n, k) = (n as f64, k as f64);
    let effective = snr / 2.0 * (1.0 - delta) / (1.0 + delta * n / k);
    Ok(ToeplitzBound {
        add_upper: add_asymptotic(alpha, rho, effective)?,
        prob_floor: 1.0 - (-constants.c1 * m as f64 / (k * k)).exp(),
        m_min: constants.c2 * k * k * n.ln(),
    })
}

/// Geršgorin-derived ceiling `1 + δN/K` on λ_max for Toeplitz Gram matrices.
pub fn toeplitz_lambda_max_ceiling(delta: f64, n: usize, k: usize) -> f64 {
    1.0 + delta * n as f64 / k as f64
}

/// `max(0, 1 − 2exp(−c M δ²))`.
pub fn concentration_probability(m: usize, delta: f64, c: f64) -> f64 {
    (1.0 - 2.0 * (-c * m as f64 * delta * delta).exp()).max(0.0)
}

/// Toeplitz Gram-entry tail bounds `(2N e^{−δ1 M/K²}, 2N² e^{−δ2 M/K²})` for
/// the diagonal and off-diagonal deviation events.
pub fn toeplitz_entry_tail_bounds(m: usize, n: usize, k: usize, constants: &ConcentrationConstants) -> (f64, f64) {
    let ratio = m as f64 / (k * k) as f64;
    let n = n as f64;
    (
        2.0 * n * (-constants.delta1 * ratio).exp(),
        2.0 * n * n * (-constants.delta2 * ratio).exp(),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn inputs(alpha: f64, rho: f64, snr: f64, gamma: f64, delta: f64) -> BoundInputs {
        BoundInputs {
            alpha,
            rho,
            snr,
            gamma,
            delta,
        }
    }

    #[test]
    fn asymptotic_delay() {
        assert_relative_eq!(add_asymptotic((-1.0f64).exp(), 0.0, 1.0).unwrap(), 1.0, max_relative = 1e-15);
        // 4.605170 / 1.105361
        assert_relative_eq!(add_asymptotic(0.01, 0.1, 1.0).unwrap(), 4.166216, max_relative = 1e-6);
        let a = add_asymptotic(0.02, 0.1, 1.0).unwrap();
        let b = add_asymptotic(0.01, 0.1, 1.0).unwrap();
        assert_relative_eq!(b - a, 2f64.ln() / (1.0 + prior_rate(0.1)), max_relative = 1e-12);
        assert!(add_asymptotic(0.01, 0.0, 0.0).is_err());
    }

    #[test]
    fn projection_bracket_collapses() {
        let b = add_bounds_projection(&inputs(0.01, 0.1, 3.0, 0.4, 0.0)).unwrap();
        let expected = add_asymptotic(0.01, 0.1, 0.4 * 3.0 / 2.0).unwrap();
        assert_eq!(b.add_lower, expected);
        assert_eq!(b.add_upper, expected);
    }

    #[test]
    fn projection_bracket_golden() {
        // alpha=0.01, rho=0.1, snr=10^0.5, gamma=0.3, delta=0.5
        let snr = db_to_linear(5.0);
        let b = add_bounds_projection(&inputs(0.01, 0.1, snr, 0.3, 0.5)).unwrap();
        let l = prior_rate(0.1);
        let lower = 0.01f64.ln().abs() / (1.5 * 0.3 * snr / 2.0 + l);
        let upper = 0.01f64.ln().abs() / (0.5 * 0.3 * snr / 2.0 + l);
        assert_relative_eq!(b.add_lower, lower, max_relative = 1e-14);
        assert_relative_eq!(b.add_upper, upper, max_relative = 1e-14);
        assert_relative_eq!(b.add_lower, 5.637560, max_relative = 1e-6);
        assert_relative_eq!(b.add_upper, 13.444522, max_relative = 1e-6);
    }

    #[test]
    fn ratio_bounds_cases() {
        let r = delay_ratio_bounds(5.0, 0.1, 1.0, 0.0).unwrap();
        assert_relative_eq!(r.r_lower, 1.0, max_relative = 1e-15);
        assert_relative_eq!(r.r_upper, 1.0, max_relative = 1e-15);

        let r = delay_ratio_bounds(1e-12, 0.1, 0.25, 0.5).unwrap();
        assert_relative_eq!(r.r_lower, 1.0, max_relative = 1e-9);
        assert_relative_eq!(r.r_upper, 1.0, max_relative = 1e-9);

        let snr = db_to_linear(25.0);
        let r = delay_ratio_bounds(snr, 0.1, 0.25, 0.1).unwrap();
        let l2 = 2.0 * prior_rate(0.1);
        assert_relative_eq!(r.r_lower, (snr + l2) / (0.25 * 1.1 * snr + l2), max_relative = 1e-14);
        assert_relative_eq!(r.r_upper, (snr + l2) / (0.25 * 0.9 * snr + l2), max_relative = 1e-14);
        assert_relative_eq!(r.r_lower, 3.629991, max_relative = 1e-6);
        assert_relative_eq!(r.r_upper, 4.434274, max_relative = 1e-6);
    }

    #[test]
    fn planner_golden_values() {
        let consts = ConcentrationConstants::default();
        let plan = plan_measurements(
            &PlanInputs {
                n: 1000,
                k: 14,
                delta: 0.5,
                beta: 0.1,
                r0: 4.0,
                rho: 0.1,
                snr: db_to_linear(25.0),
            },
            &consts,
        )
        .unwrap();
        assert_relative_eq!(plan.m1, 2080.87, max_relative = 1e-4);
        assert_relative_eq!(plan.m2, 499.0, max_relative = 1e-3);
        assert_eq!(plan.m, plan.m1.ceil() as u64);
        assert!(!plan.feasible);
    }

    #[test]
    fn planner_prior_boundary_and_errors() {
        let consts = ConcentrationConstants::default();
        let rho = 0.1;
        let r0 = 3.0;
        let snr = 2.0 * (r0 - 1.0) * prior_rate(rho);
        let base = PlanInputs {
            n: 100,
            k: 2,
            delta: 0.5,
            beta: 0.1,
            r0,
            rho,
            snr,
        };
        let plan = plan_measurements(&base, &consts).unwrap();
        assert!(plan.m2.abs() < 1e-12);
        let plan = plan_measurements(&PlanInputs { snr: snr / 2.0, ..base }, &consts).unwrap();
        assert_eq!(plan.m2, 0.0);
        assert_eq!(plan.m, plan.m1.ceil() as u64);
        assert!(matches!(
            plan_measurements(&PlanInputs { r0: 1.0, ..base }, &consts),
            Err(Error::RatioTarget(_))
        ));
    }

    #[test]
    fn rip_bounds() {
        let b = add_bounds_rip(&RipInputs {
            alpha: 0.01,
            rho: 0.1,
            snr: 4.0,
            delta: 0.0,
            lambda_min: 1.0,
            lambda_max: 1.0,
        })
        .unwrap();
        let expected = add_asymptotic(0.01, 0.1, 2.0).unwrap();
        assert_eq!(b.add_lower, expected);
        assert_eq!(b.add_upper, expected);

        let b = add_bounds_rip(&RipInputs {
            alpha: 0.01,
            rho: 0.1,
            snr: 10.0,
            delta: 0.2,
            lambda_min: 0.8,
            lambda_max: 1.3,
        })
        .unwrap();
        let l = prior_rate(0.1);
        let la = 0.01f64.ln().abs();
        assert_relative_eq!(b.add_lower, la / (10.0 / 1.6 * 1.2 + l), max_relative = 1e-14);
        assert_relative_eq!(b.add_upper, la / (10.0 / 2.6 * 0.8 + l), max_relative = 1e-14);
        assert_relative_eq!(b.add_lower, 0.605516, max_relative = 1e-5);
        assert_relative_eq!(b.add_upper, 1.447128, max_relative = 1e-5);

        let wider = add_bounds_rip(&RipInputs {
            alpha: 0.01,
            rho: 0.1,
            snr: 10.0,
            delta: 0.2,
            lambda_min: 0.8,
            lambda_max: 2.0,
        })
        .unwrap();
        assert!(wider.add_upper > b.add_upper);
        assert!(add_bounds_rip(&RipInputs {
            alpha: 0.01,
            rho: 0.1,
            snr: 10.0,
            delta: 0.2,
            lambda_min: 0.0,
            lambda_max: 1.0,
        })
        .is_err());
    }

    #[test]
    fn toeplitz_bound() {
        let consts = ConcentrationConstants::default();
        let base = ToeplitzInputs {
            alpha: 0.01,
            rho: 0.1,
            snr: 10.0,
            delta: 0.1,
            n: 100,
            k: 10,
            m: 400,
        };
        let t = add_upper_toeplitz(&ToeplitzInputs { delta: 0.0, ..base }, &consts).unwrap();
        assert_eq!(t.add_upper, add_asymptotic(0.01, 0.1, 5.0).unwrap());

        let t = add_upper_toeplitz(&ToeplitzInputs { k: 100, ..base }, &consts).unwrap();
        assert_relative_eq!(
            t.add_upper,
            add_asymptotic(0.01, 0.1, 5.0 * 0.9 / 1.1).unwrap(),
            max_relative = 1e-14
        );

        let t = add_upper_toeplitz(&base, &consts).unwrap();
        // effective kl = 5 * 0.9 / 2
        assert_relative_eq!(t.add_upper, 4.605170 / (2.25 + 0.105361), max_relative = 1e-6);
        assert_relative_eq!(t.prob_floor, 1.0 - (-4.0f64).exp(), max_relative = 1e-14);
        assert_relative_eq!(t.m_min, 100.0 * 100f64.ln(), max_relative = 1e-14);
    }

    #[test]
    fn concentration_probability_cases() {
        let c = 0.25;
        let m = 4;
        let delta = (2f64.ln() / (c * m as f64)).sqrt();
        assert!(concentration_probability(m, delta, c).abs() < 1e-15);
        assert_eq!(concentration_probability(1_000_000, 0.5, c), 1.0);
        assert_relative_eq!(concentration_probability(100, 0.5, c), 0.996139, max_relative = 1e-6);
    }

    #[test]
    fn confidence_measurements() {
        // ln(20) / (0.25 * 0.25) = 47.93
        let m = measurements_for_confidence(0.5, 0.1, &ConcentrationConstants::default()).unwrap();
        assert_eq!(m, 48);
        assert!(concentration_probability(m as usize, 0.5, 0.25) >= 0.9);
        assert!(concentration_probability(m as usize - 1, 0.5, 0.25) < 0.9);
    }

    #[test]
    fn db_conversion() {
        assert_relative_eq!(db_to_linear(25.0), 316.227766, max_relative = 1e-8);
        assert_relative_eq!(linear_to_db(db_to_linear(5.0)), 5.0, max_relative = 1e-14);
    }

    #[test]
    fn consistency_chain_is_exact() {
        let snr = 3.7;
        let p = add_bounds_projection(&inputs(0.003, 0.2, snr, 1.0, 0.0)).unwrap();
        let r = add_bounds_rip(&RipInputs {
            alpha: 0.003,
            rho: 0.2,
            snr,
            delta: 0.0,
            lambda_min: 1.0,
            lambda_max: 1.0,
        })
        .unwrap();
        let a = add_asymptotic(0.003, 0.2, snr / 2.0).unwrap();
        assert_eq!(p.add_lower, a);
        assert_eq!(r.add_upper, a);
        assert_eq!(p, r);
    }

    #[test]
    fn crossover_separates_the_regimes() {
        let snr = db_to_linear(25.0);
        let base = PlanInputs {
            n: 100,
            k: 10,
            delta: 0.5,
            beta: 0.1,
            r0: 4.0,
            rho: 0.1,
            snr,
        };
        let consts = ConcentrationConstants::default();
        let n_star = plan_crossover(&base, Some(2.0), &consts).unwrap().unwrap();
        let plan_at = |n: u64| {
            let inputs = PlanInputs {
                n: n as usize,
                k: sparsity_for(n as usize, 2.0),
                ..base
            };
            plan_measurements(&inputs, &consts).unwrap()
        };
        assert!(plan_at(n_star - 1).m1 > plan_at(n_star - 1).m2);
        for n in (n_star..n_star + 5000).step_by(7).chain([10_u64.pow(6), 10_u64.pow(9)]) {
            let p = plan_at(n);
            assert!(p.m1 <= p.m2, "N = {n}");
        }
        // fixed K: exact m1/γ₂
        let fixed = plan_crossover(&base, None, &consts).unwrap().unwrap();
        let p = plan_measurements(&PlanInputs { n: fixed as usize, ..base }, &consts).unwrap();
        assert!(p.m1 <= p.m2);
        let p = plan_measurements(&PlanInputs { n: fixed as usize - 1, ..base }, &consts).unwrap();
        assert!(p.m1 > p.m2);
    }

    #[test]
    fn no_crossover_without_ratio_requirement() {
        let inputs = PlanInputs {
            n: 100,
            k: 5,
            delta: 0.5,
            beta: 0.1,
            r0: 4.0,
            rho: 0.5,
            snr: 1.0,
        };
        let consts = ConcentrationConstants::default();
        assert_eq!(plan_crossover(&inputs, Some(2.0), &consts).unwrap(), None);
        assert_eq!(plan_measurements(&inputs, &consts).unwrap().m2, 0.0);
    }

    #[test]
    fn sparsity_rule() {
        assert_eq!(sparsity_for(100, 2.0), 10);
        assert_eq!(sparsity_for(1_000_000, 2.0), 28);
        assert_eq!(sparsity_for(1, 2.0), 1);
        assert_eq!(sparsity_for(2, 10.0), 2);
    }

    proptest! {
        #[test]
        fn brackets_are_ordered_and_nested(
            alpha in 1e-6f64..0.5,
            rho in 0.001f64..0.9,
            snr in 0.01f64..1000.0,
            gamma in 0.01f64..1.0,
            delta in 0.01f64..0.9,
            bump in 0.001f64..0.09,
        ) {
            let b = add_bounds_projection(&inputs(alpha, rho, snr, gamma, delta)).unwrap();
            prop_assert!(b.add_lower < b.add_upper);
            let wide = add_bounds_projection(&inputs(alpha, rho, snr, gamma, delta + bump)).unwrap();
            prop_assert!(wide.add_lower <= b.add_lower && wide.add_upper >= b.add_upper);
            let more_snr = add_bounds_projection(&inputs(alpha, rho, snr * 1.5, gamma, delta)).unwrap();
            prop_assert!(more_snr.add_lower < b.add_lower && more_snr.add_upper < b.add_upper);
            let more_gamma = add_bounds_projection(&inputs(alpha, rho, snr, (gamma * 1.05).min(1.0), delta)).unwrap();
            prop_assert!(more_gamma.add_lower <= b.add_lower && more_gamma.add_upper <= b.add_upper);

            let r = delay_ratio_bounds(snr, rho, gamma, delta).unwrap();
            prop_assert!(r.r_lower <= r.r_upper);
            if gamma * (1.0 + delta) <= 1.0 {
                prop_assert!(r.r_lower >= 1.0 - 1e-12);
            }
        }

        #[test]
        fn m2_decreases_with_target_increases_with_snr(
            r0 in 1.1f64..10.0,
            snr in 1.0f64..1000.0,
        ) {
            let consts = ConcentrationConstants::default();
            let base = PlanInputs { n: 1000, k: 5, delta: 0.3, beta: 0.1, r0, rho: 0.1, snr };
            let p = plan_measurements(&base, &consts).unwrap();
            let p_r = plan_measurements(&PlanInputs { r0: r0 * 1.2, ..base }, &consts).unwrap();
            let p_s = plan_measurements(&PlanInputs { snr: snr * 2.0, ..base }, &consts).unwrap();
            prop_assert!(p_r.m2 <= p.m2);
            // a stronger signal makes compression relatively costlier
            prop_assert!(p_s.m2 >= p.m2);
            prop_assert!(p.m as f64 >= p.m1.max(p.m2));
        }
    }
}
