//! Hermitian operators, Hilbert–Schmidt geometry and subspace projectors.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, CMat};
use crate::superop::Superoperator;

/// Entrywise tolerance for the Hermiticity invariant.
pub const HERMITIAN_TOL: f64 = 1e-12;
/// Default relative rank-discard threshold for orthonormalization.
pub const DEFAULT_RANK_TOL: f64 = 1e-9;

/// A Hermitian `d×d` matrix. Construction checks the invariant and stores the
/// exactly symmetrized matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(
    try_from = "crate::io::matrix_json::MatrixJson",
    into = "crate::io::matrix_json::MatrixJson"
)]
pub struct HermitianMatrix(CMat);

impl HermitianMatrix {
    pub fn new(m: CMat) -> Result<Self> {
        Self::with_tol(m, HERMITIAN_TOL)
    }

    pub fn with_tol(m: CMat, tol: f64) -> Result<Self> {
        if m.nrows() != m.ncols() {
            return Err(Error::DimensionMismatch {
                expected: m.nrows(),
                found: m.ncols(),
            });
        }
        let residual = linalg::hermiticity_residual(&m);
        if residual > tol {
            return Err(Error::NotHermitian { residual });
        }
        Ok(Self(linalg::hermitian_part(&m)))
    }

    /// Hermitian part of an arbitrary square matrix; never fails.
    pub fn from_hermitian_part(m: &CMat) -> Self {
        Self(linalg::hermitian_part(m))
    }

    pub fn zeros(d: usize) -> Self {
        Self(linalg::zeros(d, d))
    }

    pub fn identity(d: usize) -> Self {
        Self(linalg::identity(d))
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn matrix(&self) -> &CMat {
        &self.0
    }

    pub fn into_matrix(self) -> CMat {
        self.0
    }

    pub fn trace(&self) -> f64 {
        linalg::trace(&self.0).re
    }

    /// Eigenvalues in ascending order.
    pub fn eigenvalues(&self) -> Vec<f64> {
        linalg::eigvalsh(&self.0)
    }

    pub fn scale(&self, s: f64) -> Self {
        Self(self.0.scale(s))
    }
}

impl TryFrom<CMat> for HermitianMatrix {
    type Error = Error;
    fn try_from(m: CMat) -> Result<Self> {
        Self::new(m)
    }
}

impl AsRef<CMat> for HermitianMatrix {
    fn as_ref(&self) -> &CMat {
        &self.0
    }
}

/// A density operator: Hermitian, PSD (min eigenvalue ≥ −1e-10) and unit trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "HermitianMatrix", into = "HermitianMatrix")]
pub struct DensityMatrix(HermitianMatrix);

impl DensityMatrix {
    pub const TOL: f64 = 1e-10;

    pub fn new(m: CMat) -> Result<Self> {
        Self::try_from(HermitianMatrix::new(m)?)
    }

    pub fn maximally_mixed(d: usize) -> Self {
        Self(HermitianMatrix(linalg::identity(d).scale(1.0 / d as f64)))
    }

    pub fn pure(v: &linalg::CVec) -> Result<Self> {
        Self::new(linalg::projector(&v.normalize()))
    }

    pub fn dim(&self) -> usize {
        self.0.dim()
    }

    pub fn matrix(&self) -> &CMat {
        self.0.matrix()
    }

    pub fn as_hermitian(&self) -> &HermitianMatrix {
        &self.0
    }
}

impl TryFrom<HermitianMatrix> for DensityMatrix {
    type Error = Error;
    fn try_from(h: HermitianMatrix) -> Result<Self> {
        let tr = h.trace();
        if (tr - 1.0).abs() > Self::TOL {
            return Err(Error::InvalidDensity(format!("trace {tr} ≠ 1")));
        }
        let min = h.eigenvalues()[0];
        if min < -Self::TOL {
            return Err(Error::InvalidDensity(format!(
                "negative eigenvalue {min:.3e}"
            )));
        }
        Ok(Self(h))
    }
}

impl From<DensityMatrix> for HermitianMatrix {
    fn from(d: DensityMatrix) -> Self {
        d.0
    }
}

/// Orthonormal (Hilbert–Schmidt) Hermitian basis of an operator subspace.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SubspaceBasis {
    /// Operator dimension `d` (elements are `d×d`).
    pub dim: usize,
    pub elements: Vec<HermitianMatrix>,
    /// Rank tolerance used to build the basis.
    pub tol: f64,
}

impl SubspaceBasis {
    pub fn empty(dim: usize, tol: f64) -> Self {
        Self {
            dim,
            elements: Vec::new(),
            tol,
        }
    }

    /// The whole space of `d×d` operators.
    pub fn full(dim: usize) -> Self {
        Self {
            dim,
            elements: linalg::hermitian_basis(dim)
                .into_iter()
                .map(HermitianMatrix)
                .collect(),
            tol: DEFAULT_RANK_TOL,
        }
    }

    pub fn len(&self) -> usize {
        self.elements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.elements.is_empty()
    }

    pub fn matrices(&self) -> impl Iterator<Item = &CMat> {
        self.elements.iter().map(HermitianMatrix::matrix)
    }

    /// Coordinates `Tr(G_α X)` of `X` in this basis.
    pub fn coordinates(&self, x: &CMat) -> Vec<Complex64> {
        self.matrices().map(|g| hs_inner(g, x)).collect()
    }

    /// HS distance of `X` from the subspace.
    pub fn distance(&self, x: &CMat) -> f64 {
        let mut rem = x.clone();
        for g in self.matrices() {
            rem -= g * hs_inner(g, x);
        }
        linalg::hs_norm(&rem)
    }
}

/// Trace norm `Σ|λ_i|` of a Hermitian matrix.
pub fn trace_norm(a: &HermitianMatrix) -> f64 {
    trace_norm_unchecked(a.matrix())
}

/// Trace norm of a matrix assumed Hermitian (only its Hermitian part is read).
pub fn trace_norm_unchecked(a: &CMat) -> f64 {
    linalg::eigvalsh(a).iter().map(|v| v.abs()).sum()
}

/// Trace norm with the Hermiticity contract checked.
pub fn trace_norm_checked(a: &CMat) -> Result<f64> {
    Ok(trace_norm(&HermitianMatrix::new(a.clone())?))
}

/// Hilbert–Schmidt pairing `Tr(A†B)`.
pub fn hs_inner(a: &CMat, b: &CMat) -> Complex64 {
    a.iter().zip(b.iter()).map(|(x, y)| x.conj() * y).sum()
}

pub fn hs_inner_checked(a: &CMat, b: &CMat) -> Result<Complex64> {
    if a.shape() != b.shape() {
        return Err(Error::DimensionMismatch {
            expected: a.nrows(),
            found: b.nrows(),
        });
    }
    Ok(hs_inner(a, b))
}

/// Modified Gram–Schmidt with one reorthogonalization pass. Elements whose
/// residual norm falls below `tol · max input norm` are discarded.
pub fn gram_schmidt_hermitian(spanning: &[HermitianMatrix], tol: f64) -> Result<SubspaceBasis> {
    let Some(first) = spanning.first() else {
        return Err(Error::EmptyBasis);
    };
    let dim = first.dim();
    if let Some(bad) = spanning.iter().find(|h| h.dim() != dim) {
        return Err(Error::DimensionMismatch {
            expected: dim,
            found: bad.dim(),
        });
    }
    let max_norm = spanning
        .iter()
        .map(|h| linalg::hs_norm(h.matrix()))
        .fold(0.0, f64::max);
    if max_norm == 0.0 {
        return Err(Error::EmptyBasis);
    }
    let cutoff = tol * max_norm;
    let mut basis: Vec<CMat> = Vec::new();
    for h in spanning {
        let mut v = h.matrix().clone();
        for _pass in 0..2 {
            for g in &basis {
                // Hermitian pairs have real HS products, keeping `v` Hermitian.
                let coeff = hs_inner(g, &v).re;
                v -= g.scale(coeff);
            }
        }
        let norm = linalg::hs_norm(&v);
        if norm > cutoff {
            basis.push(linalg::hermitian_part(&v.scale(1.0 / norm)));
        }
    }
    if basis.is_empty() {
        return Err(Error::EmptyBasis);
    }
    Ok(SubspaceBasis {
        dim,
        elements: basis.into_iter().map(HermitianMatrix).collect(),
        tol,
    })
}

/// Hermitian orthonormal basis of the span of orthonormal vectorized operators.
///
/// The canonical Hermitian basis is pushed through the span projector,
/// Hermitized and re-orthonormalized. The span must be closed under `X ↦ X†`
/// (true for kernels, images and real eigenspaces of HP maps).
pub fn hermitian_basis_from_span(
    vectors: &[linalg::CVec],
    d: usize,
    tol: f64,
) -> Result<SubspaceBasis> {
    if vectors.is_empty() {
        return Ok(SubspaceBasis::empty(d, tol));
    }
    let mut proj = linalg::zeros(d * d, d * d);
    for v in vectors {
        proj += v * v.adjoint();
    }
    let images: Vec<HermitianMatrix> = linalg::hermitian_basis(d)
        .iter()
        .map(|g| {
            let v = &proj * linalg::vectorize(g);
            HermitianMatrix::from_hermitian_part(&linalg::devectorize(&v, d))
        })
        .collect();
    match gram_schmidt_hermitian(&images, tol) {
        Ok(mut basis) => {
            basis.elements.truncate(vectors.len());
            basis.tol = tol;
            Ok(basis)
        }
        Err(Error::EmptyBasis) => Ok(SubspaceBasis::empty(d, tol)),
        Err(e) => Err(e),
    }
}

/// Hermiticity-preserving HS-orthogonal projector `Π(X) = Σ_α Tr(G_α X) G_α`.
pub fn orthogonal_projector(m: &SubspaceBasis) -> Superoperator {
    let d = m.dim;
    let mut natural = linalg::zeros(d * d, d * d);
    for g in m.matrices() {
        let v = linalg::vectorize(g);
        natural += &v * v.adjoint();
    }
    Superoperator::from_natural(d, natural).expect("square by construction")
}

/// PSD test: `(min eigenvalue ≥ −tol, min eigenvalue)`.
pub fn psd_check(a: &HermitianMatrix, tol: f64) -> (bool, f64) {
    let min = a.eigenvalues().first().copied().unwrap_or(0.0);
    (min >= -tol, min)
}

/// Minimum eigenvalue of the Hermitian part of `a`.
pub fn min_eigenvalue(a: &CMat) -> f64 {
    linalg::eigvalsh(a).first().copied().unwrap_or(0.0)
}
