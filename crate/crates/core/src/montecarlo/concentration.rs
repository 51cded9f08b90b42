//! Empirical concentration of projected signal energy over matrix draws.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use super::{derive_seed, run_indexed};
use crate::error::{Error, Result};
use crate::sensing::{build_matrix, projection_energy, Construction, SensingMatrix, Signal};

/// Which energy is bracketed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ConcentrationForm {
    /// `(1−δ)(M/N)‖s‖² ≤ ‖Qs‖² ≤ (1+δ)(M/N)‖s‖²`.
    Projection,
    /// `(1−δ)‖s‖² ≤ ‖Φs‖² ≤ (1+δ)‖s‖²`.
    Raw,
}

impl ConcentrationForm {
    /// `(lower, upper)` edges for a signal of energy `norm_sq`; the lower edge
    /// is clamped at zero.
    pub fn bracket(self, rows: usize, cols: usize, delta: f64, norm_sq: f64) -> (f64, f64) {
        let scale = match self {
            ConcentrationForm::Projection => rows as f64 / cols as f64,
            ConcentrationForm::Raw => 1.0,
        };
        let center = scale * norm_sq;
        (((1.0 - delta) * center).max(0.0), (1.0 + delta) * center)
    }

    pub fn energy(self, phi: &SensingMatrix, s: &Signal) -> Result<f64> {
        match self {
            ConcentrationForm::Projection => projection_energy(phi, s),
            ConcentrationForm::Raw => {
                if s.len() != phi.cols() {
                    return Err(Error::DimensionMismatch {
                        context: "signal length vs matrix columns",
                        expected: phi.cols(),
                        found: s.len(),
                    });
                }
                Ok((phi.entries() * DVector::from_column_slice(s.values())).norm_squared())
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConcentrationSetup {
    pub construction: Construction,
    pub rows: usize,
    pub cols: usize,
    pub delta: f64,
    pub n_draws: usize,
    pub form: ConcentrationForm,
    pub master_seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConcentrationResult {
    pub empirical_prob: f64,
    pub n_inside: usize,
    pub n_draws: usize,
    /// Smallest and largest observed energy relative to the bracket center.
    pub min_ratio: f64,
    pub max_ratio: f64,
}

/// Fraction of independent matrix draws whose energy falls in the bracket.
pub fn concentration_experiment(
    setup: &ConcentrationSetup,
    s: &Signal,
    threads: Option<usize>,
) -> Result<ConcentrationResult> {
    if setup.n_draws == 0 {
        return Err(Error::InvalidParameter {
            name: "n_draws",
            value: 0.0,
            reason: "must be at least 1",
        });
    }
    if !(setup.delta > 0.0) {
        return Err(Error::InvalidParameter {
            name: "delta",
            value: setup.delta,
            reason: "must be positive",
        });
    }
    let norm_sq = s.norm_sq();
    let (lo, hi) = setup.form.bracket(setup.rows, setup.cols, setup.delta, norm_sq);
    let center = setup.form.bracket(setup.rows, setup.cols, 0.0, norm_sq).1;
    let energies: Vec<Result<f64>> = run_indexed(setup.n_draws, threads, |i| {
        let seed = derive_seed(setup.master_seed, i as u64);
        let phi = build_matrix(setup.construction, setup.rows, setup.cols, seed)?;
        setup.form.energy(&phi, s)
    });
    let mut n_inside = 0;
    let mut min_ratio = f64::INFINITY;
    let mut max_ratio = f64::NEG_INFINITY;
    for e in energies {
        let e = e?;
        if e >= lo && e <= hi {
            n_inside += 1;
        }
        min_ratio = min_ratio.min(e / center);
        max_ratio = max_ratio.max(e / center);
    }
    Ok(ConcentrationResult {
        empirical_prob: n_inside as f64 / setup.n_draws as f64,
        n_inside,
        n_draws: setup.n_draws,
        min_ratio,
        max_ratio,
    })
}

/// First matrix, in derived-seed order, whose projected energy satisfies the
/// concentration bracket. Returns it with the number of draws tried.
pub fn find_concentrated_matrix(
    construction: Construction,
    rows: usize,
    cols: usize,
    s: &Signal,
    delta: f64,
    master_seed: u64,
    max_attempts: usize,
) -> Result<(SensingMatrix, usize)> {
    let (lo, hi) = ConcentrationForm::Projection.bracket(rows, cols, delta, s.norm_sq());
    for attempt in 0..max_attempts {
        let phi = build_matrix(construction, rows, cols, derive_seed(master_seed, attempt as u64))?;
        let e = projection_energy(&phi, s)?;
        if e >= lo && e <= hi {
            return Ok((phi, attempt + 1));
        }
    }
    Err(Error::Undefined("concentration-passing matrix draw"))
}
