//! Superoperators in natural representation, Choi matrices, Kraus
//! decompositions, CP/TP/HP tests and ancilla extension.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, CMat, ONE};
use crate::operator::{self, trace_norm_unchecked, SubspaceBasis};

/// Default number of random rank-one differences used by the induced-norm estimator.
pub const DEFAULT_NORM_SAMPLES: usize = 200;

/// Linear map on `d×d` operators stored as its `d²×d²` natural matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Superoperator {
    dim: usize,
    #[serde(with = "crate::io::matrix_json")]
    natural: CMat,
}

/// Unnormalized Choi matrix `Σ_ij |i⟩⟨j| ⊗ Φ(|i⟩⟨j|)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChoiMatrix {
    pub dim: usize,
    #[serde(with = "crate::io::matrix_json")]
    pub matrix: CMat,
}

impl Superoperator {
    pub fn from_natural(dim: usize, natural: CMat) -> Result<Self> {
        let n = dim * dim;
        if natural.nrows() != n || natural.ncols() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                found: natural.nrows(),
            });
        }
        Ok(Self { dim, natural })
    }

    pub fn identity(dim: usize) -> Self {
        Self {
            dim,
            natural: linalg::identity(dim * dim),
        }
    }

    pub fn zero(dim: usize) -> Self {
        Self {
            dim,
            natural: linalg::zeros(dim * dim, dim * dim),
        }
    }

    /// Builds the natural matrix of an arbitrary linear action.
    pub fn from_fn(dim: usize, f: impl Fn(&CMat) -> CMat) -> Self {
        let n = dim * dim;
        let mut natural = linalg::zeros(n, n);
        for j in 0..dim {
            for i in 0..dim {
                let out = f(&linalg::unit(dim, i, j));
                natural.set_column(i + dim * j, &linalg::vectorize(&out));
            }
        }
        Self { dim, natural }
    }

    /// `X ↦ Σ_k K_k X K_k†`.
    pub fn from_kraus(ops: &[CMat]) -> Result<Self> {
        let dim = ops.first().map(CMat::nrows).ok_or(Error::EmptyBasis)?;
        let n = dim * dim;
        let mut natural = linalg::zeros(n, n);
        for k in ops {
            if k.shape() != (dim, dim) {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    found: k.nrows(),
                });
            }
            natural += linalg::kron(&k.conjugate(), k);
        }
        Ok(Self { dim, natural })
    }

    /// `X ↦ A X B`.
    pub fn sandwich(a: &CMat, b: &CMat) -> Self {
        Self {
            dim: a.nrows(),
            natural: linalg::kron(&b.transpose(), a),
        }
    }

    /// Replacement map `X ↦ ω Tr(X)`.
    pub fn replacement(omega: &CMat) -> Self {
        let d = omega.nrows();
        let v = linalg::vectorize(omega);
        let tr = linalg::vectorize(&linalg::identity(d));
        Self {
            dim: d,
            natural: v * tr.adjoint(),
        }
    }

    pub fn transpose_map(dim: usize) -> Self {
        Self::from_fn(dim, |x| x.transpose())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn natural(&self) -> &CMat {
        &self.natural
    }

    pub fn into_natural(self) -> CMat {
        self.natural
    }

    pub fn apply(&self, a: &CMat) -> CMat {
        linalg::devectorize(&(&self.natural * linalg::vectorize(a)), self.dim)
    }

    pub fn apply_checked(&self, a: &CMat) -> Result<CMat> {
        if a.shape() != (self.dim, self.dim) {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                found: a.nrows(),
            });
        }
        Ok(self.apply(a))
    }

    /// `self ∘ first`.
    pub fn compose(&self, first: &Superoperator) -> Result<Self> {
        self.check_dim(first)?;
        Ok(Self {
            dim: self.dim,
            natural: &self.natural * &first.natural,
        })
    }

    pub fn add(&self, other: &Superoperator) -> Result<Self> {
        self.check_dim(other)?;
        Ok(Self {
            dim: self.dim,
            natural: &self.natural + &other.natural,
        })
    }

    pub fn sub(&self, other: &Superoperator) -> Result<Self> {
        self.check_dim(other)?;
        Ok(Self {
            dim: self.dim,
            natural: &self.natural - &other.natural,
        })
    }

    pub fn scale(&self, s: f64) -> Self {
        Self {
            dim: self.dim,
            natural: self.natural.scale(s),
        }
    }

    /// HS (Frobenius) norm of the natural matrix.
    pub fn hs_norm(&self) -> f64 {
        linalg::hs_norm(&self.natural)
    }

    pub fn distance(&self, other: &Superoperator) -> f64 {
        linalg::hs_norm(&(&self.natural - &other.natural))
    }

    fn check_dim(&self, other: &Superoperator) -> Result<()> {
        if self.dim != other.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                found: other.dim,
            });
        }
        Ok(())
    }

    pub fn to_choi(&self) -> ChoiMatrix {
        let d = self.dim;
        // C[(i,k),(j,l)] = Φ(E_ij)[k,l] = N[k + d·l, i + d·j]
        let matrix = CMat::from_fn(d * d, d * d, |row, col| {
            let (i, k) = (row / d, row % d);
            let (j, l) = (col / d, col % d);
            self.natural[(k + d * l, i + d * j)]
        });
        ChoiMatrix { dim: d, matrix }
    }

    pub fn from_choi(c: &ChoiMatrix) -> Self {
        let d = c.dim;
        let natural = CMat::from_fn(d * d, d * d, |row, col| {
            let (k, l) = (row % d, row / d);
            let (i, j) = (col % d, col / d);
            c.matrix[(i * d + k, j * d + l)]
        });
        Self { dim: d, natural }
    }

    /// `(is CP, min Choi eigenvalue)`.
    pub fn is_cp(&self, tol: f64) -> (bool, f64) {
        let min = self.to_choi().min_eigenvalue();
        (min >= -tol, min)
    }

    /// `(is TP, max |Tr Φ(E_ij) − δ_ij|)`.
    pub fn is_tp(&self, tol: f64) -> (bool, f64) {
        let residual = self.to_choi().tp_residual();
        (residual <= tol, residual)
    }

    /// `(is HP, max Choi asymmetry)`.
    pub fn is_hp(&self, tol: f64) -> (bool, f64) {
        let residual = linalg::hermiticity_residual(&self.to_choi().matrix);
        (residual <= tol, residual)
    }

    /// `𝟙_a ⊗ S` acting on `(a·d)×(a·d)` operators, ancilla factor first.
    pub fn tensor_with_identity(&self, a: usize) -> Self {
        let big = a * self.dim;
        Self::from_fn(big, |x| self.apply_with_ancilla(x, a))
    }

    /// Blockwise action of `𝟙_a ⊗ S` without forming the large natural matrix.
    pub fn apply_with_ancilla(&self, x: &CMat, a: usize) -> CMat {
        let d = self.dim;
        let mut out = linalg::zeros(a * d, a * d);
        for p in 0..a {
            for q in 0..a {
                let block = x.view((p * d, q * d), (d, d)).into_owned();
                let mapped = self.apply(&block);
                out.view_mut((p * d, q * d), (d, d)).copy_from(&mapped);
            }
        }
        out
    }
}

impl ChoiMatrix {
    pub fn min_eigenvalue(&self) -> f64 {
        operator::min_eigenvalue(&self.matrix)
    }

    /// Partial trace over the output factor.
    pub fn output_partial_trace(&self) -> CMat {
        let d = self.dim;
        CMat::from_fn(d, d, |i, j| {
            (0..d).map(|k| self.matrix[(i * d + k, j * d + k)]).sum()
        })
    }

    pub fn tp_residual(&self) -> f64 {
        linalg::max_abs(&(self.output_partial_trace() - linalg::identity(self.dim)))
    }
}

/// Kraus operators from a PSD Choi matrix. Eigenvalues in `[−tol, 0)` are
/// clipped to zero; anything more negative is rejected.
pub fn kraus_from_choi(c: &ChoiMatrix, tol: f64) -> Result<Vec<CMat>> {
    let d = c.dim;
    let (vals, vecs) = linalg::eigh(&c.matrix);
    if vals[0] < -tol {
        return Err(Error::NotCompletelyPositive { min_eig: vals[0] });
    }
    let scale = vals.last().copied().unwrap_or(0.0).max(1.0);
    let mut ops = Vec::new();
    for (k, &lambda) in vals.iter().enumerate().rev() {
        if lambda <= tol * scale {
            continue;
        }
        let v = vecs.column(k);
        // u[i·d + k] = K[k, i]: the eigenvector is the column-stacked operator.
        let op = CMat::from_column_slice(d, d, v.as_slice()).scale(lambda.sqrt());
        ops.push(op);
    }
    Ok(ops)
}

/// Largest ratio `‖S(X)‖₁ / ‖X‖₁` over the given Hermitian samples.
pub fn max_trace_norm_ratio<'a>(
    s: &Superoperator,
    samples: impl IntoIterator<Item = &'a CMat>,
) -> f64 {
    samples
        .into_iter()
        .filter_map(|x| {
            let n = trace_norm_unchecked(x);
            (n > 1e-14).then(|| trace_norm_unchecked(&s.apply(x)) / n)
        })
        .fold(0.0, f64::max)
}

/// Lower-bound estimate of the induced trace norm
/// `sup_{X Hermitian} ‖S(X)‖₁ / ‖X‖₁` from the canonical Hermitian basis,
/// random pure states and `n_samples` random differences of pure states.
/// This is not a certified value.
pub fn induced_trace_norm_estimate(s: &Superoperator, n_samples: usize, seed: u64) -> f64 {
    let d = s.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut samples = linalg::hermitian_basis(d);
    for _ in 0..n_samples {
        let psi = linalg::projector(&linalg::random_pure_state(&mut rng, d));
        let phi = linalg::projector(&linalg::random_pure_state(&mut rng, d));
        samples.push(&psi - &phi);
        samples.push(psi);
    }
    max_trace_norm_ratio(s, &samples)
}

/// Induced-norm estimate restricted to the Hermitian elements of a subspace:
/// basis elements plus `n_samples` Gaussian combinations.
pub fn induced_trace_norm_estimate_on(
    s: &Superoperator,
    domain: &SubspaceBasis,
    n_samples: usize,
    seed: u64,
) -> f64 {
    use rand_distr::{Distribution, StandardNormal};
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut samples: Vec<CMat> = domain.matrices().cloned().collect();
    for _ in 0..n_samples {
        let mut x = linalg::zeros(domain.dim, domain.dim);
        for g in domain.matrices() {
            let w: f64 = StandardNormal.sample(&mut rng);
            x += g.scale(w);
        }
        samples.push(x);
    }
    max_trace_norm_ratio(s, &samples)
}

/// The maximally entangled projector `|Ω⟩⟨Ω|` on `H ⊗ H`, `|Ω⟩ = Σ|ii⟩/√d`.
pub fn maximally_entangled(d: usize) -> CMat {
    let mut v = linalg::CVec::zeros(d * d);
    for i in 0..d {
        v[i * d + i] = ONE.scale(1.0 / (d as f64).sqrt());
    }
    linalg::projector(&v)
}
