use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::{self, CMat};
use crate::operator::{gram_schmidt_hermitian, hs_inner, HermitianMatrix, SubspaceBasis};

const ASCENT_ITERS: usize = 600;

#[derive(Debug, Clone, Serialize)]
pub struct PositivityCertificate {
    pub generated: bool,
    /// Rank of the common support of the subspace.
    pub support_rank: usize,
    /// Best `λ_min` of an HS-unit element compressed to the support.
    pub best_min_eigenvalue: f64,
    /// Element of `M` positive definite on the support, when found.
    #[serde(with = "crate::io::matrix_json::option")]
    pub certificate: Option<CMat>,
}

/// Orthonormal basis (columns) of the support `Ran(Σ_α G_α²)`.
fn support_basis(m: &SubspaceBasis, tol: f64) -> CMat {
    let d = m.dim;
    let mut sum = linalg::zeros(d, d);
    for g in m.matrices() {
        sum += g * g;
    }
    let (vals, vecs) = linalg::eigh(&sum);
    let top = vals.last().copied().unwrap_or(0.0).max(f64::MIN_POSITIVE);
    let cols: Vec<usize> = (0..d).filter(|&k| vals[k] > tol * top).collect();
    CMat::from_fn(d, cols.len(), |i, j| vecs[(i, cols[j])])
}

fn combine(m: &SubspaceBasis, c: &[f64]) -> CMat {
    let mut x = linalg::zeros(m.dim, m.dim);
    for (g, &ck) in m.matrices().zip(c) {
        x += g.scale(ck);
    }
    x
}

/// Is `M` spanned by positive operators? Decided by maximizing the smallest
/// eigenvalue, on the common support, over HS-unit elements of `M`
/// (projected supergradient ascent from the projection of the support
/// projector). `M` is positively generated iff the optimum exceeds `tol`.
pub fn positively_generated_check(m: &SubspaceBasis, tol: f64) -> PositivityCertificate {
    if m.is_empty() {
        return PositivityCertificate {
            generated: false,
            support_rank: 0,
            best_min_eigenvalue: 0.0,
            certificate: None,
        };
    }
    let w = support_basis(m, 1e-10);
    let compress = |x: &CMat| w.adjoint() * x * &w;
    let p = &w * w.adjoint();
    let mut c: Vec<f64> = m.coordinates(&p).iter().map(|z| z.re).collect();
    let norm = c.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm > 1e-12 {
        c.iter_mut().for_each(|v| *v /= norm);
    } else {
        c = vec![0.0; m.len()];
        c[0] = 1.0;
    }

    let mut best = (f64::NEG_INFINITY, c.clone());
    for k in 0..ASCENT_ITERS {
        let (vals, vecs) = linalg::eigh(&compress(&combine(m, &c)));
        if vals[0] > best.0 {
            best = (vals[0], c.clone());
        }
        // Supergradient of λ_min: g_α = ⟨u|W†G_αW|u⟩ for the bottom eigenvector u.
        let u = vecs.column(0).into_owned();
        let g: Vec<f64> = m
            .matrices()
            .map(|ga| u.dotc(&(compress(ga) * &u)).re)
            .collect();
        let step = 0.5 / ((k + 1) as f64).sqrt();
        c.iter_mut().zip(&g).for_each(|(ci, gi)| *ci += step * gi);
        let n = c.iter().map(|v| v * v).sum::<f64>().sqrt();
        if n > 1.0 {
            c.iter_mut().for_each(|v| *v /= n);
        }
    }
    let generated = best.0 > tol;
    PositivityCertificate {
        generated,
        support_rank: w.ncols(),
        best_min_eigenvalue: best.0,
        certificate: generated.then(|| linalg::hermitian_part(&combine(m, &best.1))),
    }
}

/// `M' = ρ^{-1/2} M ρ^{-1/2}`, an operator system on `P B(H) P` with unit `P`.
#[derive(Debug, Clone)]
pub struct JencovaReduction {
    pub rho: CMat,
    pub support: CMat,
    pub reduced: SubspaceBasis,
    sqrt: CMat,
    inv_sqrt: CMat,
}

impl JencovaReduction {
    pub fn to_reduced(&self, x: &CMat) -> CMat {
        &self.inv_sqrt * x * &self.inv_sqrt
    }

    pub fn from_reduced(&self, y: &CMat) -> CMat {
        &self.sqrt * y * &self.sqrt
    }
}

/// Builds `ρ`, its support projector `P`, and the conjugated basis. When `P`
/// itself lies in `M` the choice is `ρ = P/Tr P`; otherwise the positivity
/// certificate is used.
pub fn jencova_reduce(m: &SubspaceBasis, tol: f64) -> Result<JencovaReduction> {
    let cert = positively_generated_check(m, tol);
    let Some(x) = cert.certificate else {
        return Err(Error::NotPositivelyGenerated);
    };
    let w = support_basis(m, 1e-10);
    let p = &w * w.adjoint();
    let rho = if m.distance(&p) < 1e-10 * linalg::hs_norm(&p) {
        p.clone()
    } else {
        x
    };
    let rho = rho.scale(1.0 / linalg::trace(&rho).re);
    let cutoff = 1e-12 * linalg::eigvalsh(&rho).last().copied().unwrap_or(1.0);
    let sqrt = linalg::hermitian_fn(&rho, |v| if v > cutoff { v.sqrt() } else { 0.0 });
    let inv_sqrt = linalg::hermitian_fn(&rho, |v| if v > cutoff { 1.0 / v.sqrt() } else { 0.0 });
    let conjugated: Vec<HermitianMatrix> = m
        .matrices()
        .map(|g| HermitianMatrix::from_hermitian_part(&(&inv_sqrt * g * &inv_sqrt)))
        .collect();
    let reduced = gram_schmidt_hermitian(&conjugated, m.tol.max(1e-12))?;
    debug_assert!(hs_inner(&p, &p).re > 0.0);
    Ok(JencovaReduction {
        rho,
        support: p,
        reduced,
        sqrt,
        inv_sqrt,
    })
}
