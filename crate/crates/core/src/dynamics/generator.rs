use std::sync::Arc;

use super::family::MapFamily;
use super::integrate::GeneratorFn;
use super::signal::ScalarSignal;
use crate::error::{Error, Result};
use crate::linalg::{self, CMat, I};
use crate::operator::{HermitianMatrix, DEFAULT_RANK_TOL};
use crate::superop::Superoperator;

/// `−i[H,·] + Σ γ_k (L_k · L_k† − ½{L_k†L_k, ·})` in the natural representation.
pub fn gkls_generator(hamiltonian: &CMat, channels: &[(CMat, f64)]) -> Superoperator {
    let d = hamiltonian.nrows();
    let id = linalg::identity(d);
    let mut n =
        (linalg::kron(&id, hamiltonian) - linalg::kron(&hamiltonian.transpose(), &id)) * (-I);
    for (l, rate) in channels {
        let ldl = l.adjoint() * l;
        let term = linalg::kron(&l.conjugate(), l)
            - linalg::kron(&id, &ldl).scale(0.5)
            - linalg::kron(&ldl.transpose(), &id).scale(0.5);
        n += term.scale(*rate);
    }
    Superoperator::from_natural(d, n).expect("square by construction")
}

#[derive(Debug, Clone, PartialEq)]
pub struct GklsChannel {
    pub op: CMat,
    pub rate: ScalarSignal,
}

/// A time-dependent GKLS generator with a static Hamiltonian and
/// time-dependent rates.
#[derive(Debug, Clone, PartialEq)]
pub struct GklsSpec {
    pub dim: usize,
    pub hamiltonian: Option<CMat>,
    pub channels: Vec<GklsChannel>,
}

impl GklsSpec {
    pub fn validate(&self) -> Result<()> {
        if let Some(h) = &self.hamiltonian {
            HermitianMatrix::new(h.clone())?;
            if h.nrows() != self.dim {
                return Err(Error::DimensionMismatch {
                    expected: self.dim,
                    found: h.nrows(),
                });
            }
        }
        for ch in &self.channels {
            if ch.op.nrows() != self.dim || ch.op.ncols() != self.dim {
                return Err(Error::DimensionMismatch {
                    expected: self.dim,
                    found: ch.op.nrows(),
                });
            }
            ch.rate.validate()?;
        }
        Ok(())
    }

    pub fn at(&self, t: f64) -> Superoperator {
        let h = self
            .hamiltonian
            .clone()
            .unwrap_or_else(|| linalg::zeros(self.dim, self.dim));
        let channels: Vec<(CMat, f64)> = self
            .channels
            .iter()
            .map(|c| (c.op.clone(), c.rate.value(t)))
            .collect();
        gkls_generator(&h, &channels)
    }

    pub fn generator_fn(&self) -> GeneratorFn {
        let spec = self.clone();
        Arc::new(move |t| spec.at(t))
    }
}

/// `𝓛_t = (dΛ_t/dt)·Λ_t⁻¹` by central differences of step `h`
/// (second-order one-sided when `t < h`).
pub fn generator_from_family(family: &MapFamily, t: f64, h: f64) -> Result<Superoperator> {
    let d = family.dim();
    let n = family.evaluate(t).into_natural();
    let sv = linalg::singular_values(&n);
    let min = sv[sv.len() - 1];
    if !(min > DEFAULT_RANK_TOL) {
        return Err(Error::SingularGenerator {
            time: t,
            min_singular: min,
        });
    }
    let dn = if t >= h {
        (family.evaluate(t + h).into_natural() - family.evaluate(t - h).into_natural())
            .scale(0.5 / h)
    } else {
        (family.evaluate(t).into_natural().scale(-3.0)
            + family.evaluate(t + h).into_natural().scale(4.0)
            - family.evaluate(t + 2.0 * h).into_natural())
        .scale(0.5 / h)
    };
    let inv = n.try_inverse().ok_or(Error::SingularGenerator {
        time: t,
        min_singular: min,
    })?;
    Superoperator::from_natural(d, dn * inv)
}

/// Canonical split `𝓛 = −i[H,·] + Σ γ_k (L_k · L_k† − ½{L_k†L_k, ·})` with
/// traceless, HS-orthonormal `L_k` and traceless `H`.
#[derive(Debug, Clone)]
pub struct GklsDecomposition {
    pub hamiltonian: HermitianMatrix,
    /// Kossakowski matrix in the generalized Gell-Mann basis.
    pub kossakowski: CMat,
    /// Descending.
    pub rates: Vec<f64>,
    pub lindblad_ops: Vec<CMat>,
}

impl GklsDecomposition {
    pub fn reconstruct(&self) -> Superoperator {
        let channels: Vec<(CMat, f64)> = self
            .lindblad_ops
            .iter()
            .cloned()
            .zip(self.rates.iter().copied())
            .collect();
        gkls_generator(self.hamiltonian.matrix(), &channels)
    }
}

/// `‖Tr∘𝓛‖`: the largest entry of `vec(I)ᴴ N`.
pub fn trace_annihilation_residual(l: &Superoperator) -> f64 {
    let d = l.dim();
    let row = linalg::vectorize(&linalg::identity(d)).adjoint() * l.natural();
    row.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

pub fn canonical_gkls(l: &Superoperator, tol: f64) -> Result<GklsDecomposition> {
    let d = l.dim();
    let residual = trace_annihilation_residual(l);
    if residual > tol {
        return Err(Error::NotTraceAnnihilating { residual });
    }
    let choi = linalg::hermitian_part(&l.to_choi().matrix);
    let omega = linalg::vectorize(&linalg::identity(d)).scale(1.0 / (d as f64).sqrt());
    let basis: Vec<_> = linalg::traceless_hermitian_basis(d)
        .iter()
        .map(linalg::vectorize)
        .collect();
    let m = basis.len();

    let c_omega = &choi * &omega;
    let c00 = omega.dotc(&c_omega).re;
    // w = Q·C·Ω with Q the projector onto traceless operators.
    let w = &c_omega - &omega * omega.dotc(&c_omega);
    let j = linalg::identity(d).scale(c00 / (2.0 * d as f64))
        + linalg::devectorize(&w, d).scale(1.0 / (d as f64).sqrt());
    let hamiltonian =
        HermitianMatrix::from_hermitian_part(&((&j - j.adjoint()) * linalg::c(0.0, 0.5)));

    let kossakowski = CMat::from_fn(m, m, |a, b| basis[a].dotc(&(&choi * &basis[b])));
    let (vals, vecs) = linalg::eigh(&kossakowski);
    let mut rates = Vec::with_capacity(m);
    let mut ops = Vec::with_capacity(m);
    for k in (0..m).rev() {
        let mut v = linalg::zeros(d * d, 1).column(0).into_owned();
        for (a, g) in basis.iter().enumerate() {
            v += g * vecs[(a, k)];
        }
        rates.push(vals[k]);
        ops.push(linalg::devectorize(&v, d));
    }
    Ok(GklsDecomposition {
        hamiltonian,
        kossakowski,
        rates,
        lindblad_ops: ops,
    })
}
