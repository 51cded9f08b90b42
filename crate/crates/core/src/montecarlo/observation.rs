//! Observation generators.
//!
//! The statistic depends on an observation only through the filter response
//! `u = yᵀh`. Pre-change `u ~ N(0, σ² hᵀΦΦᵀh)`; after the change its mean
//! shifts by `sᵀΦᵀh`. [`ScalarResponse`] samples `u` directly; [`FullVector`]
//! draws `w ~ N(0, σ²I_N)`, forms `y = Φ(s + w)` and filters it, and serves as
//! the reference path.

use std::collections::BTreeMap;
use std::sync::{Arc, OnceLock};

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::sensing::{MatchedFilter, SensingMatrix, Signal};

/// Everything an observation generator needs for one sensing setup.
#[derive(Debug, Clone)]
pub struct ObservationContext {
    phi: DMatrix<f64>,
    signal: DVector<f64>,
    h: DVector<f64>,
    sigma: f64,
    response_mean: f64,
    response_std: f64,
}

impl ObservationContext {
    pub fn new(phi: &SensingMatrix, signal: &Signal, filter: &MatchedFilter, sigma2: f64) -> Self {
        let sigma = sigma2.sqrt();
        Self {
            phi: phi.entries().clone(),
            signal: signal.to_vector(),
            h: DVector::from_column_slice(&filter.h),
            sigma,
            response_mean: filter.signal_response,
            response_std: sigma * filter.filter_gain.sqrt(),
        }
    }
}

pub trait ObservationModel: Send + Sync {
    fn name(&self) -> &'static str;

    /// Draws the filter response `yᵀh` of one sample.
    fn response(&self, ctx: &ObservationContext, post_change: bool, rng: &mut ChaCha8Rng) -> f64;
}

/// Samples `yᵀh` directly from its Gaussian law: one normal draw per sample.
pub struct ScalarResponse;

impl ObservationModel for ScalarResponse {
    fn name(&self) -> &'static str {
        "scalar"
    }

    fn response(&self, ctx: &ObservationContext, post_change: bool, rng: &mut ChaCha8Rng) -> f64 {
        let noise: f64 = rng.sample(StandardNormal);
        let mean = if post_change { ctx.response_mean } else { 0.0 };
        mean + ctx.response_std * noise
    }
}

/// Generates the full observation `y = Φ(1{post}·s + w)`: N normal draws and
/// an M×N product per sample.
pub struct FullVector;

impl FullVector {
    pub fn observation(ctx: &ObservationContext, post_change: bool, rng: &mut ChaCha8Rng) -> DVector<f64> {
        let n = ctx.signal.len();
        let mut x = DVector::from_fn(n, |_, _| ctx.sigma * rng.sample::<f64, _>(StandardNormal));
        if post_change {
            x += &ctx.signal;
        }
        &ctx.phi * x
    }
}

impl ObservationModel for FullVector {
    fn name(&self) -> &'static str {
        "vector"
    }

    fn response(&self, ctx: &ObservationContext, post_change: bool, rng: &mut ChaCha8Rng) -> f64 {
        Self::observation(ctx, post_change, rng).dot(&ctx.h)
    }
}

#[derive(Clone, Default)]
pub struct ModelRegistry {
    models: BTreeMap<&'static str, Arc<dyn ObservationModel>>,
}

impl ModelRegistry {
    pub fn with_defaults() -> Self {
        let mut registry = Self::default();
        registry.register(Arc::new(ScalarResponse));
        registry.register(Arc::new(FullVector));
        registry
    }

    pub fn standard() -> &'static ModelRegistry {
        static STANDARD: OnceLock<ModelRegistry> = OnceLock::new();
        STANDARD.get_or_init(ModelRegistry::with_defaults)
    }

    pub fn register(&mut self, model: Arc<dyn ObservationModel>) {
        self.models.insert(model.name(), model);
    }

    pub fn get(&self, name: &str) -> Result<Arc<dyn ObservationModel>> {
        self.models
            .get(name)
            .cloned()
            .ok_or_else(|| Error::UnknownStrategy {
                kind: "observation model",
                name: name.to_string(),
                available: self.names().join(", "),
            })
    }

    pub fn names(&self) -> Vec<&'static str> {
        self.models.keys().copied().collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sensing::{build_matrix, generate_sparse_signal, matched_filter, Construction};
    use rand::SeedableRng;

    fn moments(model: &dyn ObservationModel, ctx: &ObservationContext, post: bool) -> (f64, f64) {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let n = 40_000;
        let draws: Vec<f64> = (0..n).map(|_| model.response(ctx, post, &mut rng)).collect();
        let mean = draws.iter().sum::<f64>() / n as f64;
        let var = draws.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        (mean, var)
    }

    #[test]
    fn scalar_and_vector_share_moments() {
        let phi = build_matrix(Construction::GaussianEnsemble, 8, 20, 5).unwrap();
        let s = generate_sparse_signal(20, 6, 1.5, 2).unwrap();
        let mf = matched_filter(&phi, &s).unwrap();
        let sigma2 = 0.7;
        let ctx = ObservationContext::new(&phi, &s, &mf, sigma2);
        let target_var = sigma2 * mf.projection_energy;
        let se_mean = (target_var / 40_000.0).sqrt();
        for model in [&ScalarResponse as &dyn ObservationModel, &FullVector] {
            for post in [false, true] {
                let (mean, var) = moments(model, &ctx, post);
                let expected = if post { mf.projection_energy } else { 0.0 };
                assert!((mean - expected).abs() < 4.0 * se_mean, "{} post={post}", model.name());
                assert!((var / target_var - 1.0).abs() < 0.05, "{} var {var}", model.name());
            }
        }
    }

    #[test]
    fn registry_lookup() {
        let reg = ModelRegistry::standard();
        assert_eq!(reg.names(), vec!["scalar", "vector"]);
        assert!(reg.get("importance").is_err());
    }
}
