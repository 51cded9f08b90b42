//! End-to-end simulation of compressed change detection.
//!
//! Each trial draws a geometric change time, generates pre- and post-change
//! compressed observations and runs the Shiryaev rule until it stops or the
//! horizon is reached. Trial `i` uses its own ChaCha stream derived from
//! `(master_seed, i)`, so every estimate is a deterministic function of the
//! spec and trial count regardless of how many workers run it.

pub mod concentration;
pub mod export;
pub mod observation;

use std::sync::Arc;

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Geometric};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{Beta, ContinuousCDF};

pub use concentration::{concentration_experiment, find_concentrated_matrix, ConcentrationForm, ConcentrationResult};
pub use observation::{FullVector, ModelRegistry, ObservationContext, ObservationModel, ScalarResponse};

use crate::detector::{increment_from_response, init_state, update, DetectorConfig};
use crate::error::{check_positive, Error, Result};
use crate::numeric::CompensatedSum;
use crate::sensing::{build_matrix, matched_filter, MatchedFilter, SensingMatrix, Signal};

/// Two-sided 95% normal quantile.
pub const Z_95: f64 = 1.959_963_984_540_054;

/// Censoring above this fraction invalidates a run.
pub const MAX_CENSORED_FRACTION: f64 = 1e-3;

const MATRIX_STREAM_SALT: u64 = 0x6d61_7472_6978_5f73;

/// ChaCha8 stream for work item `index` under `master_seed`.
pub fn stream_rng(master_seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(index);
    rng
}

/// Independent 64-bit seed for work item `index`.
pub fn derive_seed(master_seed: u64, index: u64) -> u64 {
    stream_rng(master_seed ^ MATRIX_STREAM_SALT, index).next_u64()
}

/// Maps `f` over `0..n` on `threads` workers (global pool when `None`),
/// returning results in index order.
pub fn run_indexed<T, F>(n: usize, threads: Option<usize>, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    let work = || (0..n).into_par_iter().map(&f).collect();
    match threads {
        Some(k) => rayon::ThreadPoolBuilder::new()
            .num_threads(k.max(1))
            .build()
            .expect("thread pool")
            .install(work),
        None => work(),
    }
}

/// Change time λ with `P(λ = k) = ρ(1 − ρ)^{k−1}`, `k ≥ 1`.
pub fn draw_change_time<R: Rng + ?Sized>(rho: f64, rng: &mut R) -> u64 {
    debug_assert!(rho > 0.0 && rho <= 1.0);
    if rho >= 1.0 {
        return 1;
    }
    let failures = Geometric::new(rho).expect("rho in (0, 1)").sample(rng);
    failures.saturating_add(1)
}

/// Horizon of `50 × add_upper`, but never short of `20/ρ` so that change times
/// are almost never cut off.
pub fn default_horizon(add_upper: f64, rho: f64) -> u64 {
    (50.0 * add_upper).ceil().max((20.0 / rho).ceil()).max(1.0) as u64
}

#[derive(Debug, Clone)]
pub struct TrialSpec {
    pub matrix: SensingMatrix,
    pub signal: Signal,
    pub config: DetectorConfig,
    /// Censoring limit in samples.
    pub horizon: u64,
    pub master_seed: u64,
}

impl TrialSpec {
    pub fn new(
        matrix: SensingMatrix,
        signal: Signal,
        config: DetectorConfig,
        horizon: u64,
        master_seed: u64,
    ) -> Result<Self> {
        let spec = Self {
            matrix,
            signal,
            config,
            horizon,
            master_seed,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        self.config.validate()?;
        if self.horizon == 0 {
            return Err(Error::InvalidParameter {
                name: "horizon",
                value: 0.0,
                reason: "must be at least 1",
            });
        }
        if self.matrix.cols() != self.signal.len() {
            return Err(Error::DimensionMismatch {
                context: "signal length vs matrix columns",
                expected: self.matrix.cols(),
                found: self.signal.len(),
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrialOutcome {
    pub trial_index: u64,
    /// Realized change time.
    pub lambda: u64,
    /// Stopping time; `None` when censored.
    pub tau: Option<u64>,
    /// `τ − λ` when `τ ≥ λ`.
    pub delay: Option<u64>,
    pub false_alarm: bool,
    pub censored: bool,
}

impl TrialOutcome {
    fn stopped(trial_index: u64, lambda: u64, tau: u64) -> Self {
        let false_alarm = tau < lambda;
        Self {
            trial_index,
            lambda,
            tau: Some(tau),
            delay: (!false_alarm).then(|| tau - lambda),
            false_alarm,
            censored: false,
        }
    }

    fn censored(trial_index: u64, lambda: u64) -> Self {
        Self {
            trial_index,
            lambda,
            tau: None,
            delay: None,
            false_alarm: false,
            censored: true,
        }
    }
}

/// Whether each trial reuses the `TrialSpec` matrix or draws a fresh one.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MatrixPolicy {
    #[default]
    Fixed,
    RedrawPerTrial,
}

struct Prepared {
    filter: MatchedFilter,
    context: ObservationContext,
}

impl Prepared {
    fn new(matrix: &SensingMatrix, signal: &Signal, sigma2: f64) -> Result<Self> {
        let filter = matched_filter(matrix, signal)?;
        let context = ObservationContext::new(matrix, signal, &filter, sigma2);
        Ok(Self { filter, context })
    }
}

/// A prepared simulation: matched filter, observation model and parallelism.
pub struct Simulator {
    spec: TrialSpec,
    model: Arc<dyn ObservationModel>,
    policy: MatrixPolicy,
    threads: Option<usize>,
    prepared: Prepared,
}

impl Simulator {
    /// Scalar-response simulator on the global thread pool.
    pub fn new(spec: TrialSpec) -> Result<Self> {
        spec.validate()?;
        let prepared = Prepared::new(&spec.matrix, &spec.signal, spec.config.sigma2)?;
        Ok(Self {
            spec,
            model: Arc::new(ScalarResponse),
            policy: MatrixPolicy::Fixed,
            threads: None,
            prepared,
        })
    }

    pub fn with_model(mut self, model: Arc<dyn ObservationModel>) -> Self {
        self.model = model;
        self
    }

    /// Selects an observation model from the standard registry by name.
    pub fn with_model_named(self, name: &str) -> Result<Self> {
        let model = ModelRegistry::standard().get(name)?;
        Ok(self.with_model(model))
    }

    pub fn with_policy(self, policy: MatrixPolicy) -> Result<Self> {
        if policy == MatrixPolicy::RedrawPerTrial && self.spec.matrix.construction().is_none() {
            return Err(Error::InvalidParameter {
                name: "matrix_policy",
                value: f64::NAN,
                reason: "per-trial redraws need a generated matrix",
            });
        }
        Ok(Self { policy, ..self })
    }

    pub fn with_threads(mut self, threads: Option<usize>) -> Self {
        self.threads = threads;
        self
    }

    pub fn spec(&self) -> &TrialSpec {
        &self.spec
    }

    pub fn filter(&self) -> &MatchedFilter {
        &self.prepared.filter
    }

    pub fn model_name(&self) -> &'static str {
        self.model.name()
    }

    fn trial_matrix(&self, trial_index: u64) -> Result<Option<Prepared>> {
        match self.policy {
            MatrixPolicy::Fixed => Ok(None),
            MatrixPolicy::RedrawPerTrial => {
                let m = &self.spec.matrix;
                let construction = m.construction().expect("checked in with_policy");
                let seed = derive_seed(self.spec.master_seed, trial_index);
                let matrix = build_matrix(construction, m.rows(), m.cols(), seed)?;
                Prepared::new(&matrix, &self.spec.signal, self.spec.config.sigma2).map(Some)
            }
        }
    }

    fn simulate(&self, trial_index: u64, mut record: Option<&mut Vec<f64>>) -> Result<TrialOutcome> {
        let redrawn = self.trial_matrix(trial_index)?;
        let prepared = redrawn.as_ref().unwrap_or(&self.prepared);
        let config = &self.spec.config;
        let log_threshold = config.threshold_a.ln();
        let mut rng = stream_rng(self.spec.master_seed, trial_index);
        let lambda = draw_change_time(config.rho, &mut rng);
        let mut state = init_state(config);
        for n in 1..=self.spec.horizon {
            let u = self.model.response(&prepared.context, n >= lambda, &mut rng);
            if let Some(buf) = record.as_deref_mut() {
                buf.push(u);
            }
            let z = increment_from_response(u, &prepared.filter, config.sigma2);
            state = update(state, z, config.rho)?;
            if state.log_lambda >= log_threshold {
                return Ok(TrialOutcome::stopped(trial_index, lambda, n));
            }
        }
        Ok(TrialOutcome::censored(trial_index, lambda))
    }

    pub fn run_trial(&self, trial_index: u64) -> Result<TrialOutcome> {
        self.simulate(trial_index, None)
    }

    /// Runs a trial and also returns the filter responses `yᵀh` it consumed.
    pub fn run_trial_recorded(&self, trial_index: u64) -> Result<(TrialOutcome, Vec<f64>)> {
        let mut responses = Vec::new();
        let outcome = self.simulate(trial_index, Some(&mut responses))?;
        Ok((outcome, responses))
    }

    pub fn outcomes(&self, n_trials: usize) -> Result<Vec<TrialOutcome>> {
        run_indexed(n_trials, self.threads, |i| self.run_trial(i as u64))
            .into_iter()
            .collect()
    }

    pub fn estimate(&self, n_trials: usize) -> Result<MonteCarloEstimate> {
        if n_trials == 0 {
            return Err(Error::InvalidParameter {
                name: "n_trials",
                value: 0.0,
                reason: "must be at least 1",
            });
        }
        Ok(MonteCarloEstimate::from_outcomes(&self.outcomes(n_trials)?))
    }
}

/// Re-runs the stopping rule on stored filter responses.
pub fn replay_responses(
    trial_index: u64,
    lambda: u64,
    responses: &[f64],
    filter: &MatchedFilter,
    config: &DetectorConfig,
) -> Result<TrialOutcome> {
    let log_threshold = config.threshold_a.ln();
    let mut state = init_state(config);
    for (i, &u) in responses.iter().enumerate() {
        state = update(state, increment_from_response(u, filter, config.sigma2), config.rho)?;
        if state.log_lambda >= log_threshold {
            return Ok(TrialOutcome::stopped(trial_index, lambda, i as u64 + 1));
        }
    }
    Ok(TrialOutcome::censored(trial_index, lambda))
}

pub fn run_trial(spec: &TrialSpec, trial_index: u64) -> Result<TrialOutcome> {
    Simulator::new(spec.clone())?.run_trial(trial_index)
}

pub fn estimate(spec: &TrialSpec, n_trials: usize) -> Result<MonteCarloEstimate> {
    Simulator::new(spec.clone())?.estimate(n_trials)
}

/// Aggregated ADD and PFA estimates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonteCarloEstimate {
    /// Mean of `τ − λ` over trials with `τ ≥ λ`; `None` without such trials.
    pub add_hat: Option<f64>,
    pub add_ci_half: Option<f64>,
    /// Fraction of all trials with `τ < λ`.
    pub pfa_hat: f64,
    pub pfa_ci_half: Option<f64>,
    /// Clopper–Pearson 95% interval, reported when fewer than 30 false alarms.
    pub pfa_exact_ci: Option<(f64, f64)>,
    pub n_trials: usize,
    pub n_detections: usize,
    pub n_false_alarms: usize,
    pub n_censored: usize,
}

impl MonteCarloEstimate {
    pub fn from_outcomes(outcomes: &[TrialOutcome]) -> Self {
        let n_trials = outcomes.len();
        let n_false_alarms = outcomes.iter().filter(|o| o.false_alarm).count();
        let n_censored = outcomes.iter().filter(|o| o.censored).count();
        let delays: Vec<f64> = outcomes.iter().filter_map(|o| o.delay).map(|d| d as f64).collect();
        let n_detections = delays.len();

        let add_hat = (n_detections > 0).then(|| {
            let mut sum = CompensatedSum::default();
            delays.iter().for_each(|&d| sum.add(d));
            sum.value() / n_detections as f64
        });
        let add_ci_half = match add_hat {
            Some(mean) if n_detections > 1 => {
                let mut ss = CompensatedSum::default();
                delays.iter().for_each(|&d| ss.add((d - mean) * (d - mean)));
                let var = ss.value() / (n_detections - 1) as f64;
                Some(Z_95 * (var / n_detections as f64).sqrt())
            }
            _ => None,
        };
        let pfa_hat = if n_trials == 0 {
            0.0
        } else {
            n_false_alarms as f64 / n_trials as f64
        };
        let pfa_ci_half =
            (n_trials > 1).then(|| Z_95 * (pfa_hat * (1.0 - pfa_hat) / n_trials as f64).sqrt());
        let pfa_exact_ci = (n_trials > 0 && n_false_alarms < 30)
            .then(|| clopper_pearson(n_false_alarms as u64, n_trials as u64, 0.05));
        Self {
            add_hat,
            add_ci_half,
            pfa_hat,
            pfa_ci_half,
            pfa_exact_ci,
            n_trials,
            n_detections,
            n_false_alarms,
            n_censored,
        }
    }

    pub fn add(&self) -> Result<f64> {
        self.add_hat.ok_or(Error::Undefined("average detection delay"))
    }

    pub fn censored_fraction(&self) -> f64 {
        if self.n_trials == 0 {
            0.0
        } else {
            self.n_censored as f64 / self.n_trials as f64
        }
    }

    /// Fails when censoring exceeds [`MAX_CENSORED_FRACTION`].
    pub fn check_censoring(&self) -> Result<()> {
        let fraction = self.censored_fraction();
        if fraction > MAX_CENSORED_FRACTION {
            Err(Error::CensoringBreach {
                fraction,
                limit: MAX_CENSORED_FRACTION,
            })
        } else {
            Ok(())
        }
    }
}

/// Exact binomial confidence interval at level `1 − level_alpha`.
pub fn clopper_pearson(successes: u64, trials: u64, level_alpha: f64) -> (f64, f64) {
    let (k, n) = (successes as f64, trials as f64);
    let lower = if successes == 0 {
        0.0
    } else {
        Beta::new(k, n - k + 1.0).expect("valid beta").inverse_cdf(level_alpha / 2.0)
    };
    let upper = if successes == trials {
        1.0
    } else {
        Beta::new(k + 1.0, n - k)
            .expect("valid beta")
            .inverse_cdf(1.0 - level_alpha / 2.0)
    };
    (lower, upper)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DelayRatioEstimate {
    pub r_hat: f64,
    /// Delta-method 95% half-width.
    pub ci_half: f64,
    pub compressed: MonteCarloEstimate,
    pub uncompressed: MonteCarloEstimate,
}

/// Ratio of compressed to uncompressed ADD.
pub fn estimate_delay_ratio(
    compressed: &Simulator,
    uncompressed: &Simulator,
    n_trials: usize,
) -> Result<DelayRatioEstimate> {
    let (a, b) = (&compressed.spec, &uncompressed.spec);
    let same = |name: &'static str, x: f64, y: f64| -> Result<()> {
        if x == y {
            Ok(())
        } else {
            Err(Error::InvalidParameter {
                name,
                value: y,
                reason: "compressed and uncompressed runs must share this parameter",
            })
        }
    };
    same("threshold_a", a.config.threshold_a, b.config.threshold_a)?;
    same("rho", a.config.rho, b.config.rho)?;
    same("pi0", a.config.pi0, b.config.pi0)?;
    same("sigma2", a.config.sigma2, b.config.sigma2)?;
    if a.signal.values() != b.signal.values() {
        return Err(Error::InvalidParameter {
            name: "signal",
            value: f64::NAN,
            reason: "compressed and uncompressed runs must share the signal",
        });
    }
    let ec = compressed.estimate(n_trials)?;
    let eu = uncompressed.estimate(n_trials)?;
    let (mc, mu) = (ec.add()?, eu.add()?);
    check_positive("uncompressed ADD", mu)?;
    let r_hat = mc / mu;
    let rel = |e: &MonteCarloEstimate, mean: f64| e.add_ci_half.map_or(0.0, |h| h / Z_95 / mean);
    let ci_half = Z_95 * r_hat * (rel(&ec, mc).powi(2) + rel(&eu, mu).powi(2)).sqrt();
    Ok(DelayRatioEstimate {
        r_hat,
        ci_half,
        compressed: ec,
        uncompressed: eu,
    })
}
