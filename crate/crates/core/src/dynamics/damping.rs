use num_complex::Complex64;

use super::family::MapFamily;
use crate::error::{Error, Result};
use crate::linalg::{self, CMat, CVec};
use crate::operator::hermitian_basis_from_span;

/// Biorthonormal eigen-decomposition `Λ_t ρ = Σ_α λ_α F_α Tr(G_α† ρ)` with
/// `Tr(G_α† F_β) = δ_αβ`.
#[derive(Debug, Clone)]
pub struct DampingBasis {
    pub eigenvalues: Vec<Complex64>,
    pub right: Vec<CMat>,
    pub left: Vec<CMat>,
}

impl DampingBasis {
    pub fn reconstruct(&self) -> CMat {
        let d = self.right.first().map_or(0, |f| f.nrows());
        let mut n = linalg::zeros(d * d, d * d);
        for ((l, f), g) in self.eigenvalues.iter().zip(&self.right).zip(&self.left) {
            n += (linalg::vectorize(f) * linalg::vectorize(g).adjoint()) * *l;
        }
        n
    }
}

/// Eigenvalues within this distance (relative to `max(1, |λ|)`) form one cluster.
const CLUSTER_TOL: f64 = 1e-7;

fn cluster(values: &[Complex64]) -> Vec<(Complex64, usize)> {
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| {
        b.norm()
            .total_cmp(&a.norm())
            .then(b.arg().total_cmp(&a.arg()))
    });
    let mut out: Vec<(Complex64, usize)> = Vec::new();
    for v in sorted {
        match out
            .iter_mut()
            .find(|(c, _)| (*c - v).norm() <= CLUSTER_TOL * c.norm().max(1.0))
        {
            Some((c, n)) => {
                *c = (*c * *n as f64 + v) / (*n as f64 + 1.0);
                *n += 1;
            }
            None => out.push((v, 1)),
        }
    }
    for (c, _) in &mut out {
        if c.im.abs() <= CLUSTER_TOL * c.norm().max(1.0) {
            c.im = 0.0;
        }
    }
    out
}

/// Damping basis of `Λ_t`. Real eigenvalues get Hermitian right eigenoperators.
/// Errors with [`Error::Defective`] when an eigenspace is too small or the
/// eigenvector matrix has condition number ≥ `1/tol`.
pub fn damping_basis(family: &MapFamily, t: f64, tol: f64) -> Result<DampingBasis> {
    let d = family.dim();
    let n = family.evaluate(t).into_natural();
    let n2 = d * d;
    let scale = linalg::hs_norm(&n).max(1.0);
    let values = n.clone().schur().eigenvalues().ok_or(Error::Defective {
        time: t,
        condition: f64::INFINITY,
    })?;
    let values: Vec<Complex64> = values.iter().copied().collect();

    let mut eigenvalues = Vec::with_capacity(n2);
    let mut right: Vec<CMat> = Vec::with_capacity(n2);
    for (lambda, mult) in cluster(&values) {
        let shifted = &n - linalg::identity(n2) * lambda;
        let svd = linalg::svd(&shifted);
        let sv = &svd.singular_values;
        let null_tol = tol.sqrt() * scale;
        if sv[n2 - mult] > null_tol {
            return Err(Error::Defective {
                time: t,
                condition: sv[n2 - mult] / null_tol,
            });
        }
        let null: Vec<CVec> = (n2 - mult..n2)
            .map(|k| svd.v.column(k).into_owned())
            .collect();
        let ops: Vec<CMat> = if lambda.im == 0.0 {
            hermitian_basis_from_span(&null, d, 1e-8)?
                .matrices()
                .cloned()
                .collect()
        } else {
            null.iter().map(|v| linalg::devectorize(v, d)).collect()
        };
        for op in ops.into_iter().take(mult) {
            eigenvalues.push(lambda);
            right.push(op);
        }
    }
    if right.len() != n2 {
        return Err(Error::Defective {
            time: t,
            condition: f64::INFINITY,
        });
    }
    let r = CMat::from_fn(n2, n2, |i, k| linalg::vectorize(&right[k])[i]);
    let sv = linalg::singular_values(&r);
    let condition = sv[0] / sv[n2 - 1];
    if !(condition < 1.0 / tol) {
        return Err(Error::Defective { time: t, condition });
    }
    let inv = r
        .try_inverse()
        .ok_or(Error::Defective { time: t, condition })?;
    let left = (0..n2)
        .map(|a| {
            let row: CVec = inv.row(a).adjoint();
            linalg::devectorize(&row, d)
        })
        .collect();
    Ok(DampingBasis {
        eigenvalues,
        right,
        left,
    })
}
