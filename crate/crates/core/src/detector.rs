//! Shiryaev stopping rule on compressed observations.
//!
//! The posterior-odds statistic obeys
//! `Λ_n = (Λ_{n-1} + ρ) / (1 − ρ) · exp(z_n)` with per-sample increment
//! `z_n = (y_nᵀh − ½‖Qs‖²) / σ²`. It grows geometrically after the change, so
//! the state is kept as `log Λ_n` and combined with log-sum-exp.

use serde::{Deserialize, Serialize};

use crate::error::{check_open_unit, check_positive, Error, Result};
use crate::numeric::{log_add_exp, log_sum_exp};
use crate::sensing::MatchedFilter;

/// Threshold `A = (1 − α)/α`, which keeps PFA at or below α.
pub fn threshold_from_alpha(alpha: f64) -> Result<f64> {
    check_open_unit("alpha", alpha)?;
    Ok((1.0 - alpha) / alpha)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectorConfig {
    /// Geometric change-time parameter.
    pub rho: f64,
    /// Prior mass on a change before the first sample.
    pub pi0: f64,
    /// Noise variance.
    pub sigma2: f64,
    pub threshold_a: f64,
}

impl DetectorConfig {
    pub fn new(rho: f64, pi0: f64, sigma2: f64, threshold_a: f64) -> Result<Self> {
        let config = Self {
            rho,
            pi0,
            sigma2,
            threshold_a,
        };
        config.validate()?;
        Ok(config)
    }

    /// Config with `A = (1 − α)/α`.
    pub fn for_alpha(rho: f64, pi0: f64, sigma2: f64, alpha: f64) -> Result<Self> {
        Self::new(rho, pi0, sigma2, threshold_from_alpha(alpha)?)
    }

    pub fn validate(&self) -> Result<()> {
        check_open_unit("rho", self.rho)?;
        if !(0.0..1.0).contains(&self.pi0) {
            return Err(Error::InvalidParameter {
                name: "pi0",
                value: self.pi0,
                reason: "must lie in [0, 1)",
            });
        }
        check_positive("sigma2", self.sigma2)?;
        check_positive("threshold_a", self.threshold_a)
    }

    /// log(π0 / (1 − π0)), −∞ when π0 = 0.
    pub fn log_prior_odds(&self) -> f64 {
        if self.pi0 == 0.0 {
            f64::NEG_INFINITY
        } else {
            (self.pi0 / (1.0 - self.pi0)).ln()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShiryaevState {
    /// log Λ_n, possibly −∞.
    pub log_lambda: f64,
    pub n: u64,
}

pub fn init_state(config: &DetectorConfig) -> ShiryaevState {
    ShiryaevState {
        log_lambda: config.log_prior_odds(),
        n: 0,
    }
}

/// Log-likelihood-ratio increment from the filter response `u = yᵀh`.
pub fn increment_from_response(u: f64, mf: &MatchedFilter, sigma2: f64) -> f64 {
    (u - mf.offset_b) / sigma2
}

/// `(yᵀh − b)/σ²` for one observation vector.
pub fn llr_increment(y: &[f64], mf: &MatchedFilter, sigma2: f64) -> Result<f64> {
    Ok(increment_from_response(mf.respond(y)?, mf, sigma2))
}

/// One step of the recursion in log domain.
pub fn update(state: ShiryaevState, z: f64, rho: f64) -> Result<ShiryaevState> {
    if !z.is_finite() {
        return Err(Error::NonFiniteIncrement(z));
    }
    let log_lambda = log_add_exp(state.log_lambda, rho.ln()) - (-rho).ln_1p() + z;
    Ok(ShiryaevState {
        log_lambda,
        n: state.n + 1,
    })
}

/// Stopping condition `Λ_n ≥ A` for `n ≥ 1`.
pub fn has_stopped(state: &ShiryaevState, threshold_a: f64) -> bool {
    state.n >= 1 && state.log_lambda >= threshold_a.ln()
}

/// log Λ_n from the explicit sum over candidate change times.
///
/// With `Z_n^k = Σ_{t=k}^n z_t` and `π_k = ρ(1−ρ)^{k−1}`:
/// `Λ_n = [q·e^{Z_n^1} + Σ_k π_k e^{Z_n^k}] / (1−ρ)^n`, `q = π0/(1−π0)`.
/// The prior-odds term carries the full likelihood product, as the recursion
/// requires. Quadratic in `n` when evaluated along a trajectory; meant as a
/// reference for [`update`].
pub fn direct_log_statistic(increments: &[f64], config: &DetectorConfig) -> f64 {
    let n = increments.len();
    let log_q = config.log_prior_odds();
    if n == 0 {
        return log_q;
    }
    let log_rho = config.rho.ln();
    let log_keep = (-config.rho).ln_1p();
    // suffix[k] = Z_n^{k+1}
    let mut suffix = vec![0.0; n];
    let mut acc = 0.0;
    for k in (0..n).rev() {
        acc += increments[k];
        suffix[k] = acc;
    }
    let mut terms = Vec::with_capacity(n + 1);
    if log_q > f64::NEG_INFINITY {
        terms.push(log_q + suffix[0]);
    }
    for (k, z) in suffix.iter().enumerate() {
        terms.push(log_rho + k as f64 * log_keep + z);
    }
    log_sum_exp(&terms) - n as f64 * log_keep
}

pub fn direct_statistic(increments: &[f64], config: &DetectorConfig) -> f64 {
    direct_log_statistic(increments, config).exp()
}

/// A running Shiryaev detector.
#[derive(Debug, Clone)]
pub struct ShiryaevDetector {
    config: DetectorConfig,
    state: ShiryaevState,
    log_threshold: f64,
}

impl ShiryaevDetector {
    pub fn new(config: DetectorConfig) -> Result<Self> {
        config.validate()?;
        Ok(Self {
            state: init_state(&config),
            log_threshold: config.threshold_a.ln(),
            config,
        })
    }

    pub fn config(&self) -> &DetectorConfig {
        &self.config
    }

    pub fn state(&self) -> ShiryaevState {
        self.state
    }

    pub fn reset(&mut self) {
        self.state = init_state(&self.config);
    }

    /// Feeds one increment; returns whether the rule has stopped.
    pub fn observe(&mut self, z: f64) -> Result<bool> {
        self.state = update(self.state, z, self.config.rho)?;
        Ok(self.stopped())
    }

    pub fn stopped(&self) -> bool {
        self.state.n >= 1 && self.state.log_lambda >= self.log_threshold
    }

    /// Runs until stopping; returns the stopping time or `None` if the
    /// sequence ran out first.
    pub fn run<I: IntoIterator<Item = f64>>(&mut self, increments: I) -> Result<Option<u64>> {
        for z in increments {
            if self.observe(z)? {
                return Ok(Some(self.state.n));
            }
        }
        Ok(None)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn config(rho: f64, pi0: f64) -> DetectorConfig {
        DetectorConfig::new(rho, pi0, 1.0, 99.0).unwrap()
    }

    fn chained(zs: &[f64], cfg: &DetectorConfig) -> ShiryaevState {
        zs.iter()
            .fold(init_state(cfg), |s, &z| update(s, z, cfg.rho).unwrap())
    }

    #[test]
    fn thresholds() {
        assert_eq!(threshold_from_alpha(0.5).unwrap(), 1.0);
        assert_relative_eq!(threshold_from_alpha(0.01).unwrap(), 99.0, max_relative = 1e-14);
        assert_relative_eq!(threshold_from_alpha(1e-4).unwrap(), 9999.0, max_relative = 1e-14);
        assert!(threshold_from_alpha(0.0).is_err());
        assert!(threshold_from_alpha(1.0).is_err());
    }

    #[test]
    fn config_validation() {
        assert!(DetectorConfig::new(0.0, 0.0, 1.0, 1.0).is_err());
        assert!(DetectorConfig::new(0.1, 1.0, 1.0, 1.0).is_err());
        assert!(DetectorConfig::new(0.1, 0.0, 0.0, 1.0).is_err());
        assert!(DetectorConfig::new(0.1, 0.0, 1.0, -1.0).is_err());
    }

    #[test]
    fn initial_state() {
        assert_eq!(init_state(&config(0.1, 0.0)).log_lambda, f64::NEG_INFINITY);
        assert_eq!(init_state(&config(0.1, 0.5)).log_lambda, 0.0);
        assert_relative_eq!(
            init_state(&config(0.1, 0.1)).log_lambda,
            (1.0f64 / 9.0).ln(),
            max_relative = 1e-14
        );
    }

    #[test]
    fn increments() {
        let mf = MatchedFilter {
            h: vec![1.0, 2.0],
            offset_b: 1.5,
            projection_energy: 3.0,
            signal_response: 3.0,
            filter_gain: 3.0,
        };
        assert_eq!(llr_increment(&[0.0, 0.0], &mf, 2.0).unwrap(), -0.75);
        // y = Φs with orthonormal rows: yᵀh = ‖Φs‖² = 2b
        assert_eq!(llr_increment(&[1.0, 1.0], &mf, 1.0).unwrap(), 1.5);
        assert!(llr_increment(&[1.0], &mf, 1.0).is_err());
    }

    #[test]
    fn update_cases() {
        let s = update(ShiryaevState { log_lambda: f64::NEG_INFINITY, n: 0 }, 0.0, 0.5).unwrap();
        assert_eq!(s.n, 1);
        assert!(s.log_lambda.abs() < 1e-15);

        let s = update(ShiryaevState { log_lambda: 0.0, n: 0 }, 0.0, 1e-12).unwrap();
        assert!(s.log_lambda.abs() < 1e-11);

        let big = update(ShiryaevState { log_lambda: 700.0, n: 3 }, 50.0, 0.1).unwrap();
        assert!(big.log_lambda.is_finite());
        assert_relative_eq!(big.log_lambda, 750.0 - (0.9f64).ln(), max_relative = 1e-14);

        for bad in [f64::NAN, f64::INFINITY, f64::NEG_INFINITY] {
            assert!(matches!(
                update(s, bad, 0.1),
                Err(Error::NonFiniteIncrement(_))
            ));
        }
    }

    #[test]
    fn direct_statistic_closed_forms() {
        let cfg = config(0.2, 0.0);
        let z1 = 0.7;
        assert_relative_eq!(
            direct_statistic(&[z1], &cfg),
            0.2 * z1.exp() / 0.8,
            max_relative = 1e-14
        );
        // all-zero increments: geometric series
        for n in [1usize, 5, 40] {
            let expected = (1.0 - 0.8f64.powi(n as i32)) / 0.8f64.powi(n as i32);
            assert_relative_eq!(
                direct_statistic(&vec![0.0; n], &cfg),
                expected,
                max_relative = 1e-12
            );
        }
    }

    #[test]
    fn stopping_boundary() {
        let a = 99.0f64;
        assert!(has_stopped(&ShiryaevState { log_lambda: a.ln(), n: 4 }, a));
        assert!(!has_stopped(&ShiryaevState { log_lambda: 10.0, n: 0 }, a));
        assert!(!has_stopped(&ShiryaevState { log_lambda: f64::NEG_INFINITY, n: 7 }, a));
    }

    #[test]
    fn prior_above_threshold_stops_immediately() {
        let cfg = DetectorConfig::new(0.1, 0.9, 1.0, 2.0).unwrap();
        let mut det = ShiryaevDetector::new(cfg).unwrap();
        assert_eq!(det.run([0.0, 0.0]).unwrap(), Some(1));
    }

    #[test]
    fn detector_run_reports_exhaustion() {
        let mut det = ShiryaevDetector::new(config(0.01, 0.0)).unwrap();
        assert_eq!(det.run([-1.0; 5]).unwrap(), None);
        det.reset();
        assert_eq!(det.state().n, 0);
    }

    proptest! {
        #[test]
        fn recursion_matches_direct_sum(
            zs in prop::collection::vec(-3.0f64..3.0, 1..200),
            rho in prop::sample::select(vec![0.01, 0.1, 0.5]),
            pi0 in prop::sample::select(vec![0.0, 0.1]),
        ) {
            let cfg = config(rho, pi0);
            let a = chained(&zs, &cfg).log_lambda;
            let b = direct_log_statistic(&zs, &cfg);
            prop_assert!((a - b).abs() <= 1e-9 * a.abs().max(1.0));
        }

        #[test]
        fn statistic_is_monotone_in_each_increment(
            zs in prop::collection::vec(-2.0f64..2.0, 2..60),
            pick in any::<prop::sample::Index>(),
            bump in 0.01f64..1.0,
        ) {
            let cfg = config(0.1, 0.0);
            let t = pick.index(zs.len());
            let mut raised = zs.clone();
            raised[t] += bump;
            let base = chained(&zs, &cfg).log_lambda;
            let up = chained(&raised, &cfg).log_lambda;
            prop_assert!(up > base);
        }

        #[test]
        fn raising_threshold_never_stops_earlier(
            zs in prop::collection::vec(-1.0f64..2.0, 1..100),
            a in 1.0f64..50.0,
            factor in 1.0f64..10.0,
        ) {
            let lo = DetectorConfig::new(0.1, 0.0, 1.0, a).unwrap();
            let hi = DetectorConfig::new(0.1, 0.0, 1.0, a * factor).unwrap();
            let t_lo = ShiryaevDetector::new(lo).unwrap().run(zs.iter().copied()).unwrap();
            let t_hi = ShiryaevDetector::new(hi).unwrap().run(zs.iter().copied()).unwrap();
            match (t_lo, t_hi) {
                (Some(x), Some(y)) => prop_assert!(y >= x),
                (None, Some(_)) => prop_assert!(false, "higher threshold stopped first"),
                _ => {}
            }
        }
    }
}
