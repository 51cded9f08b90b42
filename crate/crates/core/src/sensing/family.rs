//! Sensing-matrix families.
//!
//! Each random construction is a [`MatrixFamily`] implementation. Families are
//! looked up by name through a [`FamilyRegistry`], so experiment configs and the
//! CLI can pick a construction at runtime (`--construction toeplitz`).

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;
use std::sync::{Arc, OnceLock};

use nalgebra::{Cholesky, DMatrix};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::small_gram;
use crate::error::{Error, Result};

/// Named sensing-matrix construction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Construction {
    Identity,
    GaussianEnsemble,
    UnitNormRows,
    RandomOrthoProjection,
    GaussianToeplitz,
}

impl Construction {
    pub const ALL: [Construction; 5] = [
        Construction::Identity,
        Construction::GaussianEnsemble,
        Construction::UnitNormRows,
        Construction::RandomOrthoProjection,
        Construction::GaussianToeplitz,
    ];

    /// Registry key.
    pub fn name(self) -> &'static str {
        match self {
            Construction::Identity => "identity",
            Construction::GaussianEnsemble => "gaussian-ensemble",
            Construction::UnitNormRows => "unit-norm-rows",
            Construction::RandomOrthoProjection => "random-ortho-projection",
            Construction::GaussianToeplitz => "gaussian-toeplitz",
        }
    }
}

impl fmt::Display for Construction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Construction {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        FamilyRegistry::standard()
            .get(s)
            .map(|family| family.construction())
    }
}

/// A random sensing-matrix construction.
///
/// Implementations must draw every entry from `rng` in a fixed order so that a
/// matrix is reproducible from `(construction, rows, cols, seed)` alone.
pub trait MatrixFamily: Send + Sync {
    fn construction(&self) -> Construction;

    fn name(&self) -> &'static str {
        self.construction().name()
    }

    /// Validates the requested shape. Default: `1 <= rows <= cols`.
    fn check_shape(&self, rows: usize, cols: usize) -> Result<()> {
        check_wide(rows, cols)
    }

    fn sample(&self, rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Result<DMatrix<f64>>;

    /// [`sample`](Self::sample) plus the row Gram `ΦΦᵀ` of the returned
    /// matrix when the construction computes it anyway.
    fn sample_with_gram(
        &self,
        rows: usize,
        cols: usize,
        rng: &mut ChaCha8Rng,
    ) -> Result<(DMatrix<f64>, Option<DMatrix<f64>>)> {
        Ok((self.sample(rows, cols, rng)?, None))
    }
}

fn check_nonempty(rows: usize, cols: usize) -> Result<()> {
    if rows == 0 || cols == 0 {
        return Err(Error::InvalidParameter {
            name: "rows/cols",
            value: 0.0,
            reason: "matrix dimensions must be at least 1",
        });
    }
    Ok(())
}

fn check_wide(rows: usize, cols: usize) -> Result<()> {
    check_nonempty(rows, cols)?;
    if rows > cols {
        return Err(Error::InvalidParameter {
            name: "rows",
            value: rows as f64,
            reason: "number of measurements M must not exceed the signal dimension N",
        });
    }
    Ok(())
}

/// Row-major i.i.d. N(0, variance) draws.
fn gaussian_matrix(rows: usize, cols: usize, variance: f64, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    let scale = variance.sqrt();
    DMatrix::from_row_iterator(
        rows,
        cols,
        (0..rows * cols).map(|_| scale * rng.sample::<f64, _>(StandardNormal)),
    )
}

pub struct IdentityFamily;

impl MatrixFamily for IdentityFamily {
    fn construction(&self) -> Construction {
        Construction::Identity
    }

    fn check_shape(&self, rows: usize, cols: usize) -> Result<()> {
        check_nonempty(rows, cols)?;
        if rows != cols {
            return Err(Error::InvalidParameter {
                name: "rows",
                value: rows as f64,
                reason: "identity construction requires M = N",
            });
        }
        Ok(())
    }

    fn sample(&self, rows: usize, _cols: usize, _rng: &mut ChaCha8Rng) -> Result<DMatrix<f64>> {
        Ok(DMatrix::identity(rows, rows))
    }
}

/// i.i.d. N(0, 1/M) entries, so that E[ΦᵀΦ] = I.
pub struct GaussianEnsembleFamily;

impl MatrixFamily for GaussianEnsembleFamily {
    fn construction(&self) -> Construction {
        Construction::GaussianEnsemble
    }

    fn sample(&self, rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Result<DMatrix<f64>> {
        Ok(gaussian_matrix(rows, cols, 1.0 / rows as f64, rng))
    }
}

/// Isotropic Gaussian rows rescaled to unit Euclidean norm.
pub struct UnitNormRowsFamily;

impl MatrixFamily for UnitNormRowsFamily {
    fn construction(&self) -> Construction {
        Construction::UnitNormRows
    }

    fn sample(&self, rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Result<DMatrix<f64>> {
        let mut phi = gaussian_matrix(rows, cols, 1.0, rng);
        for mut row in phi.row_iter_mut() {
            let norm = row.norm();
            row /= norm;
        }
        Ok(phi)
    }
}

/// Orthonormalized rows of a Gaussian matrix: a uniformly oriented M-dimensional
/// subspace with ΦΦᵀ = I.
pub struct RandomOrthoProjectionFamily;

impl MatrixFamily for RandomOrthoProjectionFamily {
    fn construction(&self) -> Construction {
        Construction::RandomOrthoProjection
    }

    fn sample(&self, rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Result<DMatrix<f64>> {
        self.sample_with_gram(rows, cols, rng).map(|(q, _)| q)
    }

    fn sample_with_gram(
        &self,
        rows: usize,
        cols: usize,
        rng: &mut ChaCha8Rng,
    ) -> Result<(DMatrix<f64>, Option<DMatrix<f64>>)> {
        orthonormal_rows(gaussian_matrix(rows, cols, 1.0, rng))
    }
}

/// Toeplitz matrix with M + N − 1 distinct i.i.d. N(0, 1/M) values.
///
/// Tall shapes (M > N) are accepted: the Toeplitz RIP regime needs
/// M on the order of K² log N, which can exceed N.
pub struct GaussianToeplitzFamily;

impl MatrixFamily for GaussianToeplitzFamily {
    fn construction(&self) -> Construction {
        Construction::GaussianToeplitz
    }

    fn check_shape(&self, rows: usize, cols: usize) -> Result<()> {
        check_nonempty(rows, cols)
    }

    fn sample(&self, rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Result<DMatrix<f64>> {
        let scale = (1.0 / rows as f64).sqrt();
        // diagonal offset d = i - j + (cols - 1) indexes the distinct values
        let values: Vec<f64> = (0..rows + cols - 1)
            .map(|_| scale * rng.sample::<f64, _>(StandardNormal))
            .collect();
        Ok(DMatrix::from_fn(rows, cols, |i, j| values[i + cols - 1 - j]))
    }
}

/// Orthonormal basis of the row space of a wide full-rank matrix.
///
/// Cholesky QR (`Q ← L⁻¹Q` with `QQᵀ = LLᵀ`) repeated until `QQᵀ = I` to
/// 1e-13; two passes suffice unless the input is badly conditioned, in which
/// case a Householder QR of the transpose takes over. The verified `QQᵀ` is
/// returned alongside on the Cholesky path.
fn orthonormal_rows(g: DMatrix<f64>) -> Result<(DMatrix<f64>, Option<DMatrix<f64>>)> {
    let m = g.nrows();
    let identity = DMatrix::<f64>::identity(m, m);
    let mut q = g.clone();
    for pass in 0..3 {
        let gram = small_gram(&q);
        if pass > 0 && (&gram - &identity).amax() < 1e-13 {
            return Ok((q, Some(gram)));
        }
        let Some(chol) = Cholesky::new(gram) else {
            break;
        };
        let Some(l_inv) = chol.l().solve_lower_triangular(&identity) else {
            break;
        };
        q = l_inv * q;
    }
    Ok((householder_rows(g)?, None))
}

fn householder_rows(g: DMatrix<f64>) -> Result<DMatrix<f64>> {
    let qr = g.transpose().qr();
    let r = qr.r();
    let diag_max = r.diagonal().iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    let diag_min = r.diagonal().iter().fold(f64::INFINITY, |m, v| m.min(v.abs()));
    if !(diag_min > super::RANK_TOL * diag_max) {
        return Err(Error::RankDeficient {
            smallest_singular: diag_min,
            condition: diag_max / diag_min,
        });
    }
    Ok(qr.q().transpose())
}

/// Name-keyed collection of [`MatrixFamily`] strategies.
#[derive(Clone, Default)]
pub struct FamilyRegistry {
    families: BTreeMap<&'static str, Arc<dyn MatrixFamily>>,
}

impl FamilyRegistry {
    pub fn empty() -> Self {
        Self::default()
    }

    /// Registry holding every built-in construction.
    pub fn with_defaults() -> Self {
        let mut registry = Self::empty();
        registry.register(Arc::new(IdentityFamily));
        registry.register(Arc::new(GaussianEnsembleFamily));
        registry.register(Arc::new(UnitNormRowsFamily));
        registry.register(Arc::new(RandomOrthoProjectionFamily));
        registry.register(Arc::new(GaussianToeplitzFamily));
        registry
    }

    /// Process-wide default registry.
    pub fn standard() -> &'static FamilyRegistry {
        static STANDARD: OnceLock<FamilyRegistry> = OnceLock::new();
        STANDARD.get_or_init(FamilyRegistry::with_defaults)
    }

    /// Adds or replaces a family under its own name.
    pub fn register(&mut self, family: Arc<dyn MatrixFamily>) {
        self.families.insert(family.name(), family);
    }

    pub fn get(&self, name: &str) -> Result<Arc<dyn MatrixFamily>> {
        self.families
            .get(name)
            .cloned()
            .ok_or_else(|| Error::UnknownStrategy {
                kind: "matrix construction",
                name: name.to_string(),
                available: self.names().join(", "),
            })
    }

    pub fn for_construction(&self, construction: Construction) -> Result<Arc<dyn MatrixFamily>> {
        self.get(construction.name())
    }

    pub fn names(&self) -> Vec<&'static str> {
        self.families.keys().copied().collect()
    }
}
