//! Linear operators `K: X -> U` and the spectral constants the stepsize rules
//! depend on.
//!
//! Every operator is stored as a dense matrix. Structured constructors
//! (identity, diagonal, first differences) materialize the matrix but keep a
//! tag so that `apply` can shortcut the identity.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::Vector;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Structure {
    Dense,
    Identity,
    Diagonal,
    Difference,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinearMap {
    matrix: DMatrix<f64>,
    structure: Structure,
}

impl LinearMap {
    /// Wraps a dense matrix. Rejects the zero operator.
    pub fn dense(matrix: DMatrix<f64>) -> Result<Self> {
        if matrix.nrows() == 0 || matrix.ncols() == 0 {
            return Err(Error::Input("linear map must have nonzero dimensions".into()));
        }
        if matrix.iter().any(|v| !v.is_finite()) {
            return Err(Error::Input("linear map has non-finite entries".into()));
        }
        if matrix.iter().all(|&v| v == 0.0) {
            return Err(Error::Input("linear map must be nonzero".into()));
        }
        Ok(Self {
            matrix,
            structure: Structure::Dense,
        })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let nrows = rows.len();
        let ncols = rows.first().map_or(0, Vec::len);
        if let Some(bad) = rows.iter().find(|r| r.len() != ncols) {
            return Err(Error::dim("matrix row", ncols, bad.len()));
        }
        Self::dense(DMatrix::from_fn(nrows, ncols, |i, j| rows[i][j]))
    }

    pub fn identity(n: usize) -> Self {
        Self {
            matrix: DMatrix::identity(n, n),
            structure: Structure::Identity,
        }
    }

    pub fn scaled_identity(n: usize, scale: f64) -> Result<Self> {
        let mut map = Self::diagonal(&vec![scale; n])?;
        if scale == 1.0 {
            map.structure = Structure::Identity;
        }
        Ok(map)
    }

    pub fn diagonal(diag: &[f64]) -> Result<Self> {
        let mut map = Self::dense(DMatrix::from_diagonal(&DVector::from_column_slice(diag)))?;
        map.structure = Structure::Diagonal;
        Ok(map)
    }

    /// Forward differences `(Kx)_i = x_{i+1} - x_i`, an `(n-1) x n` operator.
    pub fn difference(n: usize) -> Result<Self> {
        if n < 2 {
            return Err(Error::Input("difference operator needs n >= 2".into()));
        }
        let mut m = DMatrix::zeros(n - 1, n);
        for i in 0..n - 1 {
            m[(i, i)] = -1.0;
            m[(i, i + 1)] = 1.0;
        }
        let mut map = Self::dense(m)?;
        map.structure = Structure::Difference;
        Ok(map)
    }

    /// Parses one row per line, whitespace-separated decimals. Blank lines and
    /// lines starting with `#` are skipped.
    pub fn from_text(text: &str) -> Result<Self> {
        let mut rows = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let row = line
                .split_whitespace()
                .map(|tok| {
                    tok.parse::<f64>()
                        .map_err(|e| Error::Parse(format!("line {}: {tok:?}: {e}", lineno + 1)))
                })
                .collect::<Result<Vec<_>>>()?;
            rows.push(row);
        }
        Self::from_rows(&rows)
    }

    pub fn rows(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn cols(&self) -> usize {
        self.matrix.ncols()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn structure(&self) -> Structure {
        self.structure
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        crate::matrix_to_rows(&self.matrix)
    }

    /// `Kx`.
    pub fn apply(&self, x: &Vector) -> Result<Vector> {
        if x.len() != self.cols() {
            return Err(Error::dim("LinearMap::apply", self.cols(), x.len()));
        }
        Ok(match self.structure {
            Structure::Identity => x.clone(),
            _ => &self.matrix * x,
        })
    }

    /// `K* u`.
    pub fn adjoint_apply(&self, u: &Vector) -> Result<Vector> {
        if u.len() != self.rows() {
            return Err(Error::dim("LinearMap::adjoint_apply", self.rows(), u.len()));
        }
        Ok(match self.structure {
            Structure::Identity => u.clone(),
            _ => self.matrix.tr_mul(u),
        })
    }

    /// The `rows x rows` Gram matrix `K K*`.
    pub fn gram(&self) -> DMatrix<f64> {
        &self.matrix * self.matrix.transpose()
    }
}

#[derive(Serialize, Deserialize)]
struct LinearMapRepr {
    structure: Structure,
    matrix: Vec<Vec<f64>>,
}

impl Serialize for LinearMap {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        LinearMapRepr {
            structure: self.structure,
            matrix: self.to_rows(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for LinearMap {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let repr = LinearMapRepr::deserialize(d)?;
        let mut map = LinearMap::from_rows(&repr.matrix).map_err(serde::de::Error::custom)?;
        map.structure = repr.structure;
        Ok(map)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpectralMethod {
    ExactEig,
    PowerIteration,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpectralBounds {
    /// Upper estimate of `||K||^2`.
    pub op_norm_sq: f64,
    /// Smallest eigenvalue of `K K*`, clamped to zero below the rank threshold.
    pub lam_min: f64,
    /// Smallest eigenvalue of `K K*` above the rank threshold.
    pub lam_min_plus: f64,
    pub method: SpectralMethod,
}

/// Relative numerical-rank threshold for separating zero eigenvalues of `K K*`.
pub const RANK_THRESHOLD: f64 = 1e-10;

fn gram_eigenvalues(k: &LinearMap) -> Vec<f64> {
    let mut eig: Vec<f64> = SymmetricEigen::new(k.gram()).eigenvalues.iter().copied().collect();
    eig.sort_by(f64::total_cmp);
    eig
}

fn lower_bounds(eig: &[f64], norm_sq: f64) -> Result<(f64, f64)> {
    let threshold = RANK_THRESHOLD * norm_sq;
    let smallest = eig[0];
    let lam_min = if smallest <= threshold { 0.0 } else { smallest };
    let lam_min_plus = eig
        .iter()
        .copied()
        .find(|&e| e > threshold)
        .ok_or_else(|| Error::Input("K K* has no eigenvalue above the rank threshold".into()))?;
    Ok((lam_min, lam_min_plus))
}

/// Exact eigendecomposition of `K K*` for all three constants.
pub fn exact_spectral_bounds(k: &LinearMap) -> Result<SpectralBounds> {
    let eig = gram_eigenvalues(k);
    let top = *eig.last().expect("nonempty");
    let (lam_min, lam_min_plus) = lower_bounds(&eig, top)?;
    Ok(SpectralBounds {
        op_norm_sq: top,
        lam_min,
        lam_min_plus,
        method: SpectralMethod::ExactEig,
    })
}

/// `||K||^2` by power iteration on `K* K`, inflated by `1 + 10 tol`; the lower
/// constants come from the exact eigenvalues of `K K*`.
///
/// The returned norm bound is never below the largest exact Gram eigenvalue.
pub fn estimate_spectral_bounds(k: &LinearMap, tol: f64, max_iters: usize) -> Result<SpectralBounds> {
    if !(tol > 0.0) {
        return Err(Error::Input(format!("tol must be positive, got {tol}")));
    }
    let rayleigh = power_iteration(k, tol, max_iters)?;
    let inflated = rayleigh * (1.0 + 10.0 * tol);
    let eig = gram_eigenvalues(k);
    let op_norm_sq = inflated.max(*eig.last().expect("nonempty"));
    let (lam_min, lam_min_plus) = lower_bounds(&eig, op_norm_sq)?;
    Ok(SpectralBounds {
        op_norm_sq,
        lam_min,
        lam_min_plus,
        method: SpectralMethod::PowerIteration,
    })
}

/// Rayleigh quotient of `K* K` at convergence (relative change below `tol`).
pub fn power_iteration(k: &LinearMap, tol: f64, max_iters: usize) -> Result<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    let mut x = DVector::from_fn(k.cols(), |_, _| StandardNormal.sample(&mut rng));
    x /= x.norm();
    let mut prev = 0.0_f64;
    for it in 0..max_iters {
        let kx = k.apply(&x)?;
        let rho = kx.norm_squared();
        let mut next = k.adjoint_apply(&kx)?;
        let nrm = next.norm();
        if nrm == 0.0 {
            return Err(Error::Input("power iteration hit the kernel of K".into()));
        }
        next /= nrm;
        x = next;
        if it > 0 && (rho - prev).abs() <= tol * rho {
            return Ok(rho);
        }
        prev = rho;
    }
    Err(Error::Estimation {
        iters: max_iters,
        best_bound: prev * (1.0 + 10.0 * tol),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::dvector;

    #[test]
    fn apply_examples() {
        let id = LinearMap::identity(2);
        assert_eq!(id.apply(&dvector![3.0, -1.0]).unwrap(), dvector![3.0, -1.0]);
        let d = LinearMap::diagonal(&[3.0, 1.0]).unwrap();
        assert_eq!(d.apply(&dvector![1.0, 1.0]).unwrap(), dvector![3.0, 1.0]);
        let row = LinearMap::from_rows(&[vec![1.0, -1.0]]).unwrap();
        assert_eq!(row.apply(&dvector![2.0, 5.0]).unwrap(), dvector![-3.0]);
    }

    #[test]
    fn adjoint_examples() {
        let id = LinearMap::identity(2);
        assert_eq!(id.adjoint_apply(&dvector![3.0, -1.0]).unwrap(), dvector![3.0, -1.0]);
        let row = LinearMap::from_rows(&[vec![1.0, -1.0]]).unwrap();
        assert_eq!(row.adjoint_apply(&dvector![4.0]).unwrap(), dvector![4.0, -4.0]);
    }

    #[test]
    fn dimension_mismatch_is_input_error() {
        let row = LinearMap::from_rows(&[vec![1.0, -1.0]]).unwrap();
        assert!(matches!(row.apply(&dvector![1.0]), Err(Error::Dimension { .. })));
        assert!(matches!(
            row.adjoint_apply(&dvector![1.0, 2.0]),
            Err(Error::Dimension { .. })
        ));
    }

    #[test]
    fn zero_map_rejected() {
        assert!(LinearMap::dense(DMatrix::zeros(2, 3)).is_err());
    }

    #[test]
    fn spectral_diag() {
        let d = LinearMap::diagonal(&[3.0, 1.0]).unwrap();
        let sb = estimate_spectral_bounds(&d, 1e-10, 10_000).unwrap();
        assert!((sb.op_norm_sq - 9.0).abs() < 1e-6 && sb.op_norm_sq >= 9.0);
        assert!((sb.lam_min - 1.0).abs() < 1e-12);
        assert!((sb.lam_min_plus - 1.0).abs() < 1e-12);
    }

    #[test]
    fn spectral_difference_row() {
        // K K* = [2]
        let row = LinearMap::from_rows(&[vec![1.0, -1.0]]).unwrap();
        let sb = estimate_spectral_bounds(&row, 1e-10, 10_000).unwrap();
        assert!((sb.op_norm_sq - 2.0).abs() < 1e-6);
        assert!((sb.lam_min - 2.0).abs() < 1e-12);
        assert!((sb.lam_min_plus - 2.0).abs() < 1e-12);
    }

    #[test]
    fn spectral_rank_deficient() {
        // eigenvalues of K K* are {1, 0}
        let k = LinearMap::from_rows(&[vec![1.0, 0.0], vec![0.0, 0.0]]).unwrap();
        let sb = estimate_spectral_bounds(&k, 1e-10, 10_000).unwrap();
        assert_eq!(sb.lam_min, 0.0);
        assert!((sb.lam_min_plus - 1.0).abs() < 1e-12);
        let exact = exact_spectral_bounds(&k).unwrap();
        assert_eq!(exact.method, SpectralMethod::ExactEig);
        assert!((exact.op_norm_sq - 1.0).abs() < 1e-12);
    }

    #[test]
    fn power_iteration_reports_best_bound() {
        // two nearly equal top singular values converge slowly
        let k = LinearMap::diagonal(&[1.0, 1.0 - 1e-9, 0.5]).unwrap();
        match power_iteration(&k, 1e-16, 3) {
            Err(Error::Estimation { iters, best_bound }) => {
                assert_eq!(iters, 3);
                assert!(best_bound > 0.0);
            }
            other => panic!("expected estimation error, got {other:?}"),
        }
    }

    #[test]
    fn text_format() {
        let k = LinearMap::from_text("# comment\n1 2.5\n\n-3 4e-1\n").unwrap();
        assert_eq!(k.rows(), 2);
        assert_eq!(k.matrix()[(1, 1)], 0.4);
        assert!(LinearMap::from_text("1 2\n3\n").is_err());
        assert!(LinearMap::from_text("1 x\n").is_err());
    }

    #[test]
    fn structured_constructors() {
        let diff = LinearMap::difference(4).unwrap();
        assert_eq!((diff.rows(), diff.cols()), (3, 4));
        assert_eq!(diff.apply(&dvector![1.0, 4.0, 9.0, 16.0]).unwrap(), dvector![3.0, 5.0, 7.0]);
        assert_eq!(LinearMap::scaled_identity(3, 1.0).unwrap().structure(), Structure::Identity);
        let s = LinearMap::scaled_identity(2, 2.0).unwrap();
        assert_eq!(s.apply(&dvector![1.0, -1.0]).unwrap(), dvector![2.0, -2.0]);
    }
}
