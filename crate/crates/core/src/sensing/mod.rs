//! Sensing matrices, row-space projections and matched filters.
//!
//! The detection statistic only sees a measurement `y = Φx` through the
//! matched filter `h = (ΦΦᵀ)⁻¹Φs`, and the information it carries is governed
//! by the energy `‖Qs‖²` of the signal projected onto the row space of `Φ`
//! (`Q = Φᵀ(ΦΦᵀ)⁻¹Φ`). Both are computed here with a Cholesky solve against
//! the cached row Gram matrix, never with an explicit inverse.

mod family;
pub mod storage;

use std::sync::{Arc, OnceLock};

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

pub use family::{
    Construction, FamilyRegistry, GaussianEnsembleFamily, GaussianToeplitzFamily, IdentityFamily,
    MatrixFamily, RandomOrthoProjectionFamily, UnitNormRowsFamily,
};

use crate::error::{Error, Result};

/// Relative singular-value cutoff for rank decisions.
pub const RANK_TOL: f64 = 1e-10;

/// Largest admissible condition number of ΦΦᵀ for a matched filter.
pub const MAX_ROW_GRAM_CONDITION: f64 = 1e12;

/// Cholesky pivot ratio below which the rank decision falls back to an SVD.
const RANK_SCREEN: f64 = 1e-4;

/// How a matrix came to be; enough to regenerate it bit for bit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Origin {
    Generated { construction: Construction, seed: u64 },
    Orthonormalized { source: Box<Origin> },
    Explicit,
}

#[derive(Debug)]
struct RowGram {
    gram: DMatrix<f64>,
    cholesky: Cholesky<f64, Dyn>,
    condition: OnceLock<f64>,
}

impl RowGram {
    fn condition(&self) -> f64 {
        *self.condition.get_or_init(|| {
            let eig = self.gram.clone().symmetric_eigenvalues();
            let (lmin, lmax) = (eig.min(), eig.max());
            if lmin > 0.0 {
                lmax / lmin
            } else {
                f64::INFINITY
            }
        })
    }
}

/// An M×N real sensing matrix.
#[derive(Debug, Clone)]
pub struct SensingMatrix {
    entries: DMatrix<f64>,
    origin: Origin,
    // present iff rows <= cols
    row_gram: Option<Arc<RowGram>>,
}

impl PartialEq for SensingMatrix {
    fn eq(&self, other: &Self) -> bool {
        self.entries == other.entries && self.origin == other.origin
    }
}

/// Builds a matrix from the standard family registry.
pub fn build_matrix(
    construction: Construction,
    rows: usize,
    cols: usize,
    seed: u64,
) -> Result<SensingMatrix> {
    build_with(FamilyRegistry::standard(), construction.name(), rows, cols, seed)
}

/// Builds a matrix from a named family of `registry`.
pub fn build_with(
    registry: &FamilyRegistry,
    family_name: &str,
    rows: usize,
    cols: usize,
    seed: u64,
) -> Result<SensingMatrix> {
    let family = registry.get(family_name)?;
    family.check_shape(rows, cols)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (entries, gram) = family.sample_with_gram(rows, cols, &mut rng)?;
    SensingMatrix::with_gram(
        entries,
        gram,
        Origin::Generated {
            construction: family.construction(),
            seed,
        },
    )
}

impl SensingMatrix {
    /// Wraps an explicit matrix after a rank check.
    pub fn from_dmatrix(entries: DMatrix<f64>) -> Result<Self> {
        Self::with_origin(entries, Origin::Explicit)
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let m = rows.len();
        let n = rows.first().map_or(0, Vec::len);
        if m == 0 || n == 0 {
            return Err(Error::InvalidParameter {
                name: "rows",
                value: 0.0,
                reason: "matrix must be non-empty",
            });
        }
        if let Some(bad) = rows.iter().find(|r| r.len() != n) {
            return Err(Error::DimensionMismatch {
                context: "matrix row length",
                expected: n,
                found: bad.len(),
            });
        }
        Self::from_dmatrix(DMatrix::from_fn(m, n, |i, j| rows[i][j]))
    }

    pub(crate) fn with_origin(entries: DMatrix<f64>, origin: Origin) -> Result<Self> {
        Self::with_gram(entries, None, origin)
    }

    /// `gram`, when given, must be the smaller Gram product of `entries`.
    fn with_gram(entries: DMatrix<f64>, gram: Option<DMatrix<f64>>, origin: Origin) -> Result<Self> {
        if entries.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter {
                name: "entries",
                value: f64::NAN,
                reason: "matrix entries must be finite",
            });
        }
        let (m, n) = entries.shape();
        let small_gram = gram.unwrap_or_else(|| small_gram(&entries));
        // Screen on the Cholesky pivots; anything not clearly full rank gets
        // the exact singular-value test.
        let cholesky = Cholesky::new(small_gram.clone());
        let clearly_full_rank = cholesky.as_ref().is_some_and(|c| {
            let d = c.l_dirty().diagonal();
            d.min() > RANK_SCREEN * d.max()
        });
        if !clearly_full_rank {
            let sv = entries.singular_values();
            let smax = sv.max();
            let smin = sv.min();
            if !(smin > RANK_TOL * smax) {
                return Err(Error::RankDeficient {
                    smallest_singular: smin,
                    condition: smax / smin,
                });
            }
        }
        let row_gram = match cholesky {
            Some(cholesky) if m <= n => Some(Arc::new(RowGram {
                gram: small_gram,
                cholesky,
                condition: OnceLock::new(),
            })),
            _ => None,
        };
        Ok(Self {
            entries,
            origin,
            row_gram,
        })
    }

    pub fn rows(&self) -> usize {
        self.entries.nrows()
    }

    pub fn cols(&self) -> usize {
        self.entries.ncols()
    }

    pub fn entries(&self) -> &DMatrix<f64> {
        &self.entries
    }

    pub fn origin(&self) -> &Origin {
        &self.origin
    }

    /// Construction of a generated matrix, if any.
    pub fn construction(&self) -> Option<Construction> {
        match &self.origin {
            Origin::Generated { construction, .. } => Some(*construction),
            _ => None,
        }
    }

    pub fn seed(&self) -> Option<u64> {
        match &self.origin {
            Origin::Generated { seed, .. } => Some(*seed),
            _ => None,
        }
    }

    pub fn compression_ratio(&self) -> f64 {
        self.rows() as f64 / self.cols() as f64
    }

    /// Condition number of ΦΦᵀ (infinite for tall matrices).
    pub fn row_gram_condition(&self) -> f64 {
        self.row_gram
            .as_ref()
            .map_or(f64::INFINITY, |g| g.condition())
    }

    fn row_cholesky(&self) -> Result<&Cholesky<f64, Dyn>> {
        self.row_gram
            .as_ref()
            .map(|g| &g.cholesky)
            .ok_or(Error::RankDeficient {
                smallest_singular: 0.0,
                condition: f64::INFINITY,
            })
    }

    fn check_signal(&self, s: &Signal) -> Result<()> {
        if s.len() != self.cols() {
            return Err(Error::DimensionMismatch {
                context: "signal length vs matrix columns",
                expected: self.cols(),
                found: s.len(),
            });
        }
        Ok(())
    }

    /// Solves (ΦΦᵀ)h = Φx.
    fn row_solve(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        let chol = self.row_cholesky()?;
        Ok(chol.solve(&(&self.entries * x)))
    }

    /// Applies Q = Φᵀ(ΦΦᵀ)⁻¹Φ to a vector of length N.
    pub fn project(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        if x.len() != self.cols() {
            return Err(Error::DimensionMismatch {
                context: "vector length vs matrix columns",
                expected: self.cols(),
                found: x.len(),
            });
        }
        Ok(self.entries.tr_mul(&self.row_solve(x)?))
    }

    /// Matrix with the same row space and orthonormal rows (Φ̌ = Σ⁻¹UᵀΦ = Vᵀ
    /// from the reduced SVD).
    pub fn orthonormalize(&self) -> Result<SensingMatrix> {
        if self.rows() > self.cols() {
            return Err(Error::RankDeficient {
                smallest_singular: 0.0,
                condition: f64::INFINITY,
            });
        }
        let svd = self.entries.clone().svd(false, true);
        let smax = svd.singular_values.max();
        let smin = svd.singular_values.min();
        if !(smin > RANK_TOL * smax) {
            return Err(Error::RankDeficient {
                smallest_singular: smin,
                condition: smax / smin,
            });
        }
        let v_t = svd.v_t.expect("right singular vectors requested");
        Self::with_origin(
            v_t,
            Origin::Orthonormalized {
                source: Box::new(self.origin.clone()),
            },
        )
    }
}

/// `AAᵀ` for wide `a`, `AᵀA` for tall `a`, without materializing `Aᵀ`.
pub(crate) fn small_gram(a: &DMatrix<f64>) -> DMatrix<f64> {
    let (m, n) = a.shape();
    let (k, inner) = (m.min(n), m.max(n));
    // column-major m×n: entry (i, j) sits at i + j·m
    let (row_stride, col_stride) = if m <= n { (1, m as isize) } else { (m as isize, 1) };
    let mut g = DMatrix::<f64>::zeros(k, k);
    if k == 0 || inner == 0 {
        return g;
    }
    // SAFETY: the left operand is the k×inner view of `a` with the given
    // strides and the right operand its transpose, so every index stays
    // inside `a`'s m·n buffer; `g` is an owned, column-major k×k buffer.
    unsafe {
        matrixmultiply::dgemm(
            k,
            inner,
            k,
            1.0,
            a.as_ptr(),
            row_stride,
            col_stride,
            a.as_ptr(),
            col_stride,
            row_stride,
            0.0,
            g.as_mut_ptr(),
            1,
            k as isize,
        );
    }
    g
}

/// A real signal of length N, optionally with an explicit support set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Signal {
    values: Vec<f64>,
    support: Option<Vec<usize>>,
}

impl Signal {
    /// Dense signal; rejects the zero vector.
    pub fn new(values: Vec<f64>) -> Result<Self> {
        let signal = Self {
            values,
            support: None,
        };
        signal.check_nonzero()?;
        Ok(signal)
    }

    /// Sparse signal on `support`; entries off the support must be zero.
    pub fn sparse(values: Vec<f64>, mut support: Vec<usize>) -> Result<Self> {
        if support.is_empty() {
            return Err(Error::EmptySupport);
        }
        support.sort_unstable();
        support.dedup();
        let n = values.len();
        if let Some(&bad) = support.iter().find(|&&i| i >= n) {
            return Err(Error::SupportOutOfRange { index: bad, dim: n });
        }
        let off_support_nonzero = values
            .iter()
            .enumerate()
            .any(|(i, v)| *v != 0.0 && support.binary_search(&i).is_err());
        if off_support_nonzero {
            return Err(Error::InvalidParameter {
                name: "values",
                value: f64::NAN,
                reason: "nonzero entry outside the declared support",
            });
        }
        let signal = Self {
            values,
            support: Some(support),
        };
        signal.check_nonzero()?;
        Ok(signal)
    }

    /// The all-zero signal: no change in distribution. Only meaningful as a
    /// null-hypothesis control in simulation.
    pub fn null(len: usize) -> Self {
        Self {
            values: vec![0.0; len],
            support: None,
        }
    }

    fn check_nonzero(&self) -> Result<()> {
        if self.values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter {
                name: "values",
                value: f64::NAN,
                reason: "signal entries must be finite",
            });
        }
        if self.norm_sq() > 0.0 {
            Ok(())
        } else {
            Err(Error::InvalidParameter {
                name: "values",
                value: 0.0,
                reason: "signal must have positive norm",
            })
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn support(&self) -> Option<&[usize]> {
        self.support.as_deref()
    }

    /// Number of nonzero entries.
    pub fn sparsity(&self) -> usize {
        self.values.iter().filter(|v| **v != 0.0).count()
    }

    pub fn norm_sq(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum()
    }

    pub fn to_vector(&self) -> DVector<f64> {
        DVector::from_column_slice(&self.values)
    }
}

/// K-sparse signal on a uniformly random support, Gaussian amplitudes rescaled
/// to the requested norm.
pub fn generate_sparse_signal(n: usize, k: usize, norm: f64, seed: u64) -> Result<Signal> {
    if k == 0 || k > n {
        return Err(Error::InvalidParameter {
            name: "K",
            value: k as f64,
            reason: "sparsity must satisfy 1 <= K <= N",
        });
    }
    crate::error::check_positive("norm", norm)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut support = index::sample(&mut rng, n, k).into_vec();
    support.sort_unstable();
    let mut amplitudes: Vec<f64> = loop {
        let draw: Vec<f64> = (0..k).map(|_| rng.sample(StandardNormal)).collect();
        if draw.iter().all(|v: &f64| *v != 0.0) {
            break draw;
        }
    };
    let current = amplitudes.iter().map(|v| v * v).sum::<f64>().sqrt();
    for a in &mut amplitudes {
        *a *= norm / current;
    }
    let mut values = vec![0.0; n];
    for (&i, &a) in support.iter().zip(&amplitudes) {
        values[i] = a;
    }
    Signal::sparse(values, support)
}

/// ‖Qs‖² through the normal-equations path: ‖Φᵀ(ΦΦᵀ)⁻¹Φs‖².
pub fn projection_energy(phi: &SensingMatrix, s: &Signal) -> Result<f64> {
    phi.check_signal(s)?;
    Ok(phi.project(&s.to_vector())?.norm_squared())
}

/// ‖Φ̌s‖² for the orthonormalized matrix; the second route to ‖Qs‖².
pub fn projection_energy_orthonormal(phi: &SensingMatrix, s: &Signal) -> Result<f64> {
    phi.check_signal(s)?;
    let orth = phi.orthonormalize()?;
    Ok((orth.entries() * s.to_vector()).norm_squared())
}

/// Precomputed per-sample detection vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchedFilter {
    /// h = (ΦΦᵀ)⁻¹Φs, length M.
    pub h: Vec<f64>,
    /// ½‖Qs‖².
    pub offset_b: f64,
    /// ‖Qs‖².
    pub projection_energy: f64,
    /// sᵀΦᵀh: mean of yᵀh after the change.
    pub signal_response: f64,
    /// hᵀΦΦᵀh: variance of yᵀh per unit noise variance.
    pub filter_gain: f64,
}

impl MatchedFilter {
    pub fn len(&self) -> usize {
        self.h.len()
    }

    pub fn is_empty(&self) -> bool {
        self.h.is_empty()
    }

    /// yᵀh.
    pub fn respond(&self, y: &[f64]) -> Result<f64> {
        if y.len() != self.h.len() {
            return Err(Error::DimensionMismatch {
                context: "observation length vs matched filter",
                expected: self.h.len(),
                found: y.len(),
            });
        }
        Ok(y.iter().zip(&self.h).map(|(a, b)| a * b).sum())
    }
}

pub fn matched_filter(phi: &SensingMatrix, s: &Signal) -> Result<MatchedFilter> {
    phi.check_signal(s)?;
    let condition = phi.row_gram_condition();
    if !(condition <= MAX_ROW_GRAM_CONDITION) {
        return Err(Error::IllConditioned {
            condition,
            limit: MAX_ROW_GRAM_CONDITION,
        });
    }
    let sv = s.to_vector();
    let h = phi.row_solve(&sv)?;
    let qs = phi.entries().tr_mul(&h);
    let projection_energy = qs.norm_squared();
    let signal_response = qs.dot(&sv);
    let filter_gain = qs.dot(&qs);
    Ok(MatchedFilter {
        h: h.as_slice().to_vec(),
        offset_b: projection_energy / 2.0,
        projection_energy,
        signal_response,
        filter_gain,
    })
}

fn select_columns(phi: &SensingMatrix, support: Option<&[usize]>) -> Result<DMatrix<f64>> {
    match support {
        None => Ok(phi.entries().clone()),
        Some([]) => Err(Error::EmptySupport),
        Some(cols) => {
            let n = phi.cols();
            if let Some(&bad) = cols.iter().find(|&&j| j >= n) {
                return Err(Error::SupportOutOfRange { index: bad, dim: n });
            }
            Ok(phi.entries().select_columns(cols))
        }
    }
}

/// Extreme eigenvalues of the Gram matrix Φ_Jᵀ Φ_J (J = all columns when
/// `support` is `None`).
///
/// When |J| exceeds the number of rows the Gram matrix is singular; the
/// smallest eigenvalue is then exactly 0 and the largest is taken from the
/// smaller companion matrix Φ_J Φ_Jᵀ, which shares the nonzero spectrum.
pub fn gram_extremes(phi: &SensingMatrix, support: Option<&[usize]>) -> Result<(f64, f64)> {
    let sub = select_columns(phi, support)?;
    let (m, k) = sub.shape();
    if k > m {
        let eig = (&sub * sub.transpose()).symmetric_eigenvalues();
        return Ok((0.0, eig.max()));
    }
    let eig = sub.tr_mul(&sub).symmetric_eigenvalues();
    Ok((eig.min().max(0.0), eig.max()))
}

/// Geršgorin upper bound on λ_max(ΦᵀΦ):
/// `max_i G_ii + (N − 1) · max_{i≠j} |G_ij|`.
pub fn gershgorin_lambda_max_bound(phi: &SensingMatrix) -> f64 {
    let g = phi.entries().tr_mul(phi.entries());
    let n = g.nrows();
    let mut diag_max = f64::NEG_INFINITY;
    let mut off_max = 0.0_f64;
    for j in 0..n {
        for i in 0..n {
            let v = g[(i, j)];
            if i == j {
                diag_max = diag_max.max(v);
            } else {
                off_max = off_max.max(v.abs());
            }
        }
    }
    diag_max + (n as f64 - 1.0) * off_max
}
