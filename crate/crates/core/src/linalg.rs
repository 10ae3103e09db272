//! Linear algebra on the sum-zero hyperplane `H = {v : 1ᵀv = 0}`.
//!
//! Everything here works on small dense matrices (d up to a few hundred), so
//! the pseudoinverse is taken through a full symmetric eigendecomposition.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default relative eigenvalue cutoff used by [`pseudoinverse`].
pub const DEFAULT_PINV_REL_TOL: f64 = 1e-10;

/// A real vector with entries summing to zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct CenteredVector(DVector<f64>);

impl CenteredVector {
    /// Wraps `entries`, checking that they already sum to zero within
    /// `1e-9 · d · max|entry|`.
    pub fn new(entries: Vec<f64>) -> Result<Self> {
        let d = entries.len();
        if d < 2 {
            return Err(Error::Dimension(format!("need d >= 2, got {d}")));
        }
        let sum: f64 = entries.iter().sum();
        let scale = entries.iter().fold(0.0_f64, |m, x| m.max(x.abs()));
        if sum.abs() > 1e-9 * d as f64 * scale {
            return Err(Error::NotCentered { sum });
        }
        Ok(Self(DVector::from_vec(entries)))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        self.0.as_slice()
    }

    pub fn as_vector(&self) -> &DVector<f64> {
        &self.0
    }

    pub fn into_vector(self) -> DVector<f64> {
        self.0
    }

    pub fn neg(&self) -> Self {
        Self(-&self.0)
    }
}

impl TryFrom<Vec<f64>> for CenteredVector {
    type Error = Error;

    fn try_from(v: Vec<f64>) -> Result<Self> {
        Self::new(v)
    }
}

impl From<CenteredVector> for Vec<f64> {
    fn from(v: CenteredVector) -> Self {
        v.0.as_slice().to_vec()
    }
}

/// Subtracts the mean, landing on `H`.
pub fn project_to_h(v: &[f64]) -> Result<CenteredVector> {
    let d = v.len();
    if d < 2 {
        return Err(Error::Dimension(format!("need d >= 2, got {d}")));
    }
    let mean = v.iter().sum::<f64>() / d as f64;
    Ok(CenteredVector(DVector::from_iterator(
        d,
        v.iter().map(|x| x - mean),
    )))
}

/// Dense symmetric matrix. Symmetry is exact: constructors either verify it
/// or build the matrix from one triangle.
#[derive(Debug, Clone, PartialEq)]
pub struct SymmetricMatrix(DMatrix<f64>);

impl SymmetricMatrix {
    /// Fails with [`Error::NotSymmetric`] unless `m[i][j] == m[j][i]` bit for bit.
    pub fn new(m: DMatrix<f64>) -> Result<Self> {
        if !m.is_square() {
            return Err(Error::Dimension(format!(
                "matrix is {}x{}, expected square",
                m.nrows(),
                m.ncols()
            )));
        }
        let d = m.nrows();
        for i in 0..d {
            for j in (i + 1)..d {
                if m[(i, j)] != m[(j, i)] {
                    return Err(Error::NotSymmetric { row: i, col: j });
                }
            }
        }
        Ok(Self(m))
    }

    /// Averages `m` with its transpose.
    pub fn symmetrize(m: DMatrix<f64>) -> Self {
        let d = m.nrows();
        let mut out = m;
        for i in 0..d {
            for j in (i + 1)..d {
                let avg = 0.5 * (out[(i, j)] + out[(j, i)]);
                out[(i, j)] = avg;
                out[(j, i)] = avg;
            }
        }
        Self(out)
    }

    pub fn zeros(d: usize) -> Self {
        Self(DMatrix::zeros(d, d))
    }

    /// `I − J/d`, the orthogonal projector onto `H`.
    pub fn centering(d: usize) -> Self {
        let inv = 1.0 / d as f64;
        Self(DMatrix::from_fn(d, d, |i, j| {
            if i == j {
                1.0 - inv
            } else {
                -inv
            }
        }))
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.0
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self(&self.0 * c)
    }

    pub fn apply(&self, v: &DVector<f64>) -> DVector<f64> {
        &self.0 * v
    }

    /// Largest absolute row sum of `S·1`, relative to the matrix scale.
    pub fn kernel_defect(&self) -> f64 {
        let scale = self.0.amax().max(f64::MIN_POSITIVE);
        self.0.row_iter().map(|r| r.sum().abs()).fold(0.0, f64::max) / scale
    }

    /// Whether every row sums to zero within `rel_tol` of the largest entry.
    pub fn has_ones_in_kernel(&self, rel_tol: f64) -> bool {
        self.0.amax() == 0.0 || self.kernel_defect() <= rel_tol
    }
}

/// Eigenvalues sorted in descending order with matching eigenvector columns.
#[derive(Debug, Clone)]
pub struct SortedEigen {
    pub values: Vec<f64>,
    pub vectors: DMatrix<f64>,
}

pub fn sorted_eigen(s: &SymmetricMatrix) -> SortedEigen {
    let d = s.dim();
    if d == 0 {
        return SortedEigen {
            values: Vec::new(),
            vectors: DMatrix::zeros(0, 0),
        };
    }
    let eig = SymmetricEigen::new(s.0.clone());
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let values = order.iter().map(|&k| eig.eigenvalues[k]).collect();
    let vectors = DMatrix::from_fn(d, d, |i, c| eig.eigenvectors[(i, order[c])]);
    SortedEigen { values, vectors }
}

#[derive(Debug, Clone)]
pub struct PseudoinverseResult {
    pub dagger: SymmetricMatrix,
    pub rank: usize,
    /// Eigenvalues of the input, descending.
    pub eigenvalues: Vec<f64>,
    /// `rank == d − 1`: for a comparison-graph Laplacian, the graph is connected.
    pub connected: bool,
}

/// Moore–Penrose pseudoinverse of a symmetric matrix. Eigenvalues at or below
/// `rel_tol · λ_max` are treated as zero.
pub fn pseudoinverse(s: &SymmetricMatrix, rel_tol: f64) -> Result<PseudoinverseResult> {
    if !(rel_tol > 0.0 && rel_tol < 1.0) {
        return Err(Error::Parameter(format!(
            "rel_tol must lie in (0, 1), got {rel_tol}"
        )));
    }
    let d = s.dim();
    let eig = sorted_eigen(s);
    let lambda_max = eig.values.first().copied().unwrap_or(0.0);
    let cutoff = rel_tol * lambda_max;
    let mut dagger = DMatrix::<f64>::zeros(d, d);
    let mut rank = 0;
    if lambda_max > 0.0 {
        for (k, &lambda) in eig.values.iter().enumerate() {
            if lambda > cutoff {
                rank += 1;
                let v = eig.vectors.column(k);
                dagger += (v * v.transpose()) / lambda;
            }
        }
    }
    Ok(PseudoinverseResult {
        dagger: SymmetricMatrix::symmetrize(dagger),
        rank,
        eigenvalues: eig.values,
        connected: d >= 2 && rank == d - 1,
    })
}

/// `‖S‖_op`; for a PSD input this is `λ_max`.
pub fn spectral_norm(s: &SymmetricMatrix) -> f64 {
    sorted_eigen(s)
        .values
        .iter()
        .fold(0.0_f64, |m, x| m.max(x.abs()))
}

/// Maximum absolute row sum: the unrestricted `ℓ∞ → ℓ∞` norm, which bounds the
/// norm restricted to `H` from above.
pub fn linf_norm_upper(s: &SymmetricMatrix) -> f64 {
    s.0.row_iter()
        .map(|r| r.iter().map(|x| x.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// Monte-Carlo lower bound on `max{‖Sv‖∞ : v ∈ H, ‖v‖∞ = 1}` from random sign
/// vectors. Sign vectors that center to zero are skipped.
pub fn linf_norm_restricted_lower<R: Rng + ?Sized>(
    s: &SymmetricMatrix,
    n_samples: usize,
    rng: &mut R,
) -> Result<f64> {
    if n_samples == 0 {
        return Err(Error::Parameter("n_samples must be at least 1".into()));
    }
    let d = s.dim();
    let mut best = 0.0_f64;
    let mut raw = vec![0.0; d];
    for _ in 0..n_samples {
        for x in raw.iter_mut() {
            *x = if rng.random::<bool>() { 1.0 } else { -1.0 };
        }
        let v = project_to_h(&raw)?;
        let scale = v.0.amax();
        if scale == 0.0 {
            continue;
        }
        let v = v.0 / scale;
        best = best.max((&s.0 * v).amax());
    }
    Ok(best)
}

pub fn trace_of(s: &SymmetricMatrix) -> f64 {
    s.0.trace()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    fn laplacian_k3() -> SymmetricMatrix {
        // 3I − J
        SymmetricMatrix::new(DMatrix::from_row_slice(
            3,
            3,
            &[2.0, -1.0, -1.0, -1.0, 2.0, -1.0, -1.0, -1.0, 2.0],
        ))
        .unwrap()
    }

    fn assert_mat_close(a: &DMatrix<f64>, b: &DMatrix<f64>, tol: f64) {
        assert_eq!(a.shape(), b.shape());
        let diff = (a - b).amax();
        assert!(diff <= tol, "max entry diff {diff:e} > {tol:e}");
    }

    #[test]
    fn project_examples() {
        assert_eq!(
            project_to_h(&[1.0, 1.0, 1.0]).unwrap().as_slice(),
            &[0.0; 3]
        );
        assert_eq!(
            project_to_h(&[1.0, 2.0, 3.0]).unwrap().as_slice(),
            &[-1.0, 0.0, 1.0]
        );
        assert_eq!(
            project_to_h(&[5.0, 0.0, 0.0, 0.0]).unwrap().as_slice(),
            &[3.75, -1.25, -1.25, -1.25]
        );
        assert!(matches!(project_to_h(&[1.0]), Err(Error::Dimension(_))));
    }

    #[test]
    fn centered_vector_rejects_off_plane() {
        assert!(CenteredVector::new(vec![1.0, 1.0]).is_err());
        assert!(CenteredVector::new(vec![0.5]).is_err());
        assert!(CenteredVector::new(vec![-0.5, 0.5]).is_ok());
        let json = serde_json::to_string(&CenteredVector::new(vec![-1.0, 1.0]).unwrap()).unwrap();
        assert_eq!(json, "[-1.0,1.0]");
        assert!(serde_json::from_str::<CenteredVector>("[1.0,1.0]").is_err());
    }

    #[test]
    fn symmetric_matrix_rejects_asymmetry() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0 + 1e-15, 1.0]);
        assert!(matches!(
            SymmetricMatrix::new(m),
            Err(Error::NotSymmetric { row: 0, col: 1 })
        ));
    }

    #[test]
    fn pinv_of_projector_is_itself() {
        let p = SymmetricMatrix::centering(3);
        let r = pseudoinverse(&p, DEFAULT_PINV_REL_TOL).unwrap();
        assert_eq!(r.rank, 2);
        assert!(r.connected);
        assert_mat_close(r.dagger.matrix(), p.matrix(), 1e-12);
    }

    #[test]
    fn pinv_of_complete_graph_laplacian() {
        let s = laplacian_k3();
        let r = pseudoinverse(&s, DEFAULT_PINV_REL_TOL).unwrap();
        assert_eq!(r.rank, 2);
        let expected = SymmetricMatrix::centering(3).scaled(1.0 / 3.0);
        assert_mat_close(r.dagger.matrix(), expected.matrix(), 1e-12);
        // S · S† = I − J/3 by direct multiplication
        let prod = s.matrix() * r.dagger.matrix();
        assert_mat_close(&prod, SymmetricMatrix::centering(3).matrix(), 1e-12);
    }

    #[test]
    fn pinv_of_zero_is_zero() {
        let r = pseudoinverse(&SymmetricMatrix::zeros(4), DEFAULT_PINV_REL_TOL).unwrap();
        assert_eq!(r.rank, 0);
        assert!(!r.connected);
        assert_eq!(r.dagger.matrix().amax(), 0.0);
    }

    #[test]
    fn pinv_rejects_bad_tolerance() {
        assert!(pseudoinverse(&laplacian_k3(), 0.0).is_err());
        assert!(pseudoinverse(&laplacian_k3(), 1.0).is_err());
    }

    #[test]
    fn norms_and_traces() {
        let p = SymmetricMatrix::centering(3);
        let l = laplacian_k3();
        let z = SymmetricMatrix::zeros(3);
        assert_abs_diff_eq!(spectral_norm(&p), 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(spectral_norm(&l), 3.0, epsilon = 1e-12);
        assert_eq!(spectral_norm(&z), 0.0);

        assert_abs_diff_eq!(linf_norm_upper(&p), 4.0 / 3.0, epsilon = 1e-15);
        assert_abs_diff_eq!(linf_norm_upper(&l), 4.0, epsilon = 1e-15);
        assert_eq!(linf_norm_upper(&z), 0.0);

        assert_abs_diff_eq!(trace_of(&p), 2.0, epsilon = 1e-15);
        assert_eq!(trace_of(&z), 0.0);
        assert_abs_diff_eq!(trace_of(&p.scaled(1.0 / 3.0)), 2.0 / 3.0, epsilon = 1e-15);
    }

    #[test]
    fn restricted_lower_bound() {
        let mut rng = ChaCha20Rng::seed_from_u64(7);
        for d in [3, 5, 12] {
            let p = SymmetricMatrix::centering(d);
            let lo = linf_norm_restricted_lower(&p, 200, &mut rng).unwrap();
            assert!(lo > 0.0 && lo <= 1.0 + 1e-12, "d={d} lo={lo}");
            assert!(lo <= linf_norm_upper(&p));
        }
        let l = laplacian_k3();
        let lo = linf_norm_restricted_lower(&l, 50, &mut rng).unwrap();
        assert_abs_diff_eq!(lo, 3.0, epsilon = 1e-12);
        // direct product for v = (−1, 0, 1)
        let v = DVector::from_vec(vec![-1.0, 0.0, 1.0]);
        assert_abs_diff_eq!(l.apply(&v).amax(), 3.0, epsilon = 1e-15);
        assert!(linf_norm_restricted_lower(&l, 0, &mut rng).is_err());
    }
}
