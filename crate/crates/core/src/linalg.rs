//! Small dense complex linear-algebra helpers shared by every module.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;

pub type CMat = DMatrix<Complex64>;
pub type CVec = DVector<Complex64>;

pub const ZERO: Complex64 = Complex64::new(0.0, 0.0);
pub const ONE: Complex64 = Complex64::new(1.0, 0.0);
pub const I: Complex64 = Complex64::new(0.0, 1.0);

#[inline]
pub fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

#[inline]
pub fn r(re: f64) -> Complex64 {
    Complex64::new(re, 0.0)
}

pub fn identity(n: usize) -> CMat {
    CMat::identity(n, n)
}

pub fn zeros(n: usize, m: usize) -> CMat {
    CMat::zeros(n, m)
}

/// Pauli matrices `[I, σx, σy, σz]`.
pub fn paulis() -> [CMat; 4] {
    [
        CMat::from_row_slice(2, 2, &[ONE, ZERO, ZERO, ONE]),
        CMat::from_row_slice(2, 2, &[ZERO, ONE, ONE, ZERO]),
        CMat::from_row_slice(2, 2, &[ZERO, -I, I, ZERO]),
        CMat::from_row_slice(2, 2, &[ONE, ZERO, ZERO, -ONE]),
    ]
}

pub fn sigma_x() -> CMat {
    paulis()[1].clone()
}

pub fn sigma_y() -> CMat {
    paulis()[2].clone()
}

pub fn sigma_z() -> CMat {
    paulis()[3].clone()
}

/// Matrix unit `|i⟩⟨j|` of size `d`.
pub fn unit(d: usize, i: usize, j: usize) -> CMat {
    let mut m = zeros(d, d);
    m[(i, j)] = ONE;
    m
}

/// Column-stacking vectorization.
pub fn vectorize(a: &CMat) -> CVec {
    // nalgebra storage is column-major, which is exactly column stacking.
    CVec::from_column_slice(a.as_slice())
}

pub fn devectorize(v: &CVec, d: usize) -> CMat {
    CMat::from_column_slice(d, d, v.as_slice())
}

pub fn kron(a: &CMat, b: &CMat) -> CMat {
    a.kronecker(b)
}

/// Frobenius (Hilbert–Schmidt) norm.
pub fn hs_norm(a: &CMat) -> f64 {
    a.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

pub fn max_abs(a: &CMat) -> f64 {
    a.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

pub fn trace(a: &CMat) -> Complex64 {
    a.diagonal().iter().sum()
}

pub fn hermitian_part(a: &CMat) -> CMat {
    (a + a.adjoint()).scale(0.5)
}

/// Largest entrywise deviation from Hermiticity.
pub fn hermiticity_residual(a: &CMat) -> f64 {
    max_abs(&(a - a.adjoint()))
}

/// Eigen-decomposition of a Hermitian matrix, eigenvalues ascending.
/// The input is symmetrized first so roundoff asymmetry never leaks in.
pub fn eigh(a: &CMat) -> (Vec<f64>, CMat) {
    let n = a.nrows();
    let eig = hermitian_part(a).symmetric_eigen();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&x, &y| eig.eigenvalues[x].total_cmp(&eig.eigenvalues[y]));
    let values = order.iter().map(|&k| eig.eigenvalues[k]).collect();
    let mut vectors = zeros(n, n);
    for (col, &k) in order.iter().enumerate() {
        vectors.set_column(col, &eig.eigenvectors.column(k));
    }
    (values, vectors)
}

pub fn eigvalsh(a: &CMat) -> Vec<f64> {
    let mut v: Vec<f64> = hermitian_part(a)
        .symmetric_eigenvalues()
        .iter()
        .copied()
        .collect();
    v.sort_by(f64::total_cmp);
    v
}

/// Thin SVD with singular values sorted descending: `a = U diag(s) Vᴴ`.
pub struct Svd {
    pub u: CMat,
    pub singular_values: Vec<f64>,
    pub v: CMat,
}

/// One-sided Jacobi. Singular values carry high relative accuracy, which the
/// rank and image tests rely on near rank drops.
pub fn svd(a: &CMat) -> Svd {
    let (m, n) = a.shape();
    if m < n {
        let t = svd(&a.adjoint());
        return Svd {
            u: t.v,
            singular_values: t.singular_values,
            v: t.u,
        };
    }
    let mut w = a.clone();
    let mut v = identity(n);
    let tol = n.max(1) as f64 * f64::EPSILON;
    for _sweep in 0..80 {
        let mut rotated = false;
        for p in 0..n {
            for q in p + 1..n {
                let alpha = w.column(p).norm_squared();
                let beta = w.column(q).norm_squared();
                let gamma = w.column(p).dotc(&w.column(q));
                let g = gamma.norm();
                if g == 0.0 || g <= tol * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let phase = (gamma / g).conj();
                let zeta = (beta - alpha) / (2.0 * g);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                for mat in [&mut w, &mut v] {
                    for i in 0..mat.nrows() {
                        let xp = mat[(i, p)];
                        let xq = mat[(i, q)] * phase;
                        mat[(i, p)] = xp.scale(c) - xq.scale(s);
                        mat[(i, q)] = xp.scale(s) + xq.scale(c);
                    }
                }
            }
        }
        if !rotated {
            break;
        }
    }
    let mut order: Vec<(usize, f64)> = (0..n).map(|k| (k, w.column(k).norm())).collect();
    order.sort_by(|x, y| y.1.total_cmp(&x.1));
    let mut u = zeros(m, n);
    let mut v_sorted = zeros(n, n);
    let mut singular_values = Vec::with_capacity(n);
    let mut filled = 0;
    for (j, &(k, sk)) in order.iter().enumerate() {
        v_sorted.set_column(j, &v.column(k));
        singular_values.push(sk);
        let col = w.column(k).unscale(sk);
        if sk > 0.0 && col.iter().all(|z| z.re.is_finite() && z.im.is_finite()) {
            u.set_column(j, &col);
            filled = j + 1;
        }
    }
    // Columns for exactly zero singular values: complete to an orthonormal set.
    for j in filled..n {
        let residual = |e: usize| {
            let mut x = CVec::zeros(m);
            x[e] = ONE;
            for _ in 0..2 {
                for i in 0..j {
                    let proj = u.column(i).dotc(&x);
                    x -= u.column(i) * proj;
                }
            }
            x
        };
        let best = (0..m)
            .map(residual)
            .max_by(|x, y| x.norm().total_cmp(&y.norm()))
            .expect("m ≥ n ≥ 1");
        let norm = best.norm();
        u.set_column(j, &best.unscale(norm));
    }
    Svd {
        u,
        singular_values,
        v: v_sorted,
    }
}

pub fn singular_values(a: &CMat) -> Vec<f64> {
    svd(a).singular_values
}

/// Moore–Penrose pseudoinverse with an absolute singular-value cutoff.
pub fn pinv(a: &CMat, cutoff: f64) -> CMat {
    let s = svd(a);
    let mut out = zeros(a.ncols(), a.nrows());
    for (k, &sv) in s.singular_values.iter().enumerate() {
        if sv > cutoff {
            let vk = s.v.column(k);
            let uk = s.u.column(k);
            out += (vk * uk.adjoint()).scale(1.0 / sv);
        }
    }
    out
}

/// Applies `f` to the eigenvalues of a Hermitian matrix.
pub fn hermitian_fn(a: &CMat, f: impl Fn(f64) -> f64) -> CMat {
    let (vals, vecs) = eigh(a);
    let n = a.nrows();
    let mut out = zeros(n, n);
    for (k, &v) in vals.iter().enumerate() {
        let col = vecs.column(k);
        out += (col * col.adjoint()).scale(f(v));
    }
    out
}

/// Orthonormal Hermitian basis of all `d×d` Hermitian matrices:
/// `E_kk`, `(E_kl + E_lk)/√2`, `i(E_kl − E_lk)/√2` for `k < l`.
pub fn hermitian_basis(d: usize) -> Vec<CMat> {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let mut out = Vec::with_capacity(d * d);
    for k in 0..d {
        out.push(unit(d, k, k));
    }
    for k in 0..d {
        for l in (k + 1)..d {
            out.push((unit(d, k, l) + unit(d, l, k)).scale(s));
            let mut m = zeros(d, d);
            m[(k, l)] = c(0.0, -s);
            m[(l, k)] = c(0.0, s);
            out.push(m);
        }
    }
    out
}

/// Orthonormal traceless Hermitian basis (generalized Gell-Mann, HS-normalized),
/// `d² − 1` elements.
pub fn traceless_hermitian_basis(d: usize) -> Vec<CMat> {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let mut out = Vec::with_capacity(d * d - 1);
    for k in 0..d {
        for l in (k + 1)..d {
            out.push((unit(d, k, l) + unit(d, l, k)).scale(s));
            let mut m = zeros(d, d);
            m[(k, l)] = c(0.0, -s);
            m[(l, k)] = c(0.0, s);
            out.push(m);
        }
    }
    for k in 1..d {
        let norm = ((k * (k + 1)) as f64).sqrt();
        let mut m = zeros(d, d);
        for j in 0..k {
            m[(j, j)] = r(1.0 / norm);
        }
        m[(k, k)] = r(-(k as f64) / norm);
        out.push(m);
    }
    out
}

pub fn random_gaussian<R: Rng + ?Sized>(rng: &mut R, n: usize, m: usize) -> CMat {
    CMat::from_fn(n, m, |_, _| {
        c(
            rng.sample::<f64, _>(StandardNormal),
            rng.sample::<f64, _>(StandardNormal),
        )
    })
}

/// Hermitian matrix from the Gaussian unitary ensemble (unnormalized).
pub fn random_hermitian<R: Rng + ?Sized>(rng: &mut R, n: usize) -> CMat {
    hermitian_part(&random_gaussian(rng, n, n))
}

pub fn random_pure_state<R: Rng + ?Sized>(rng: &mut R, n: usize) -> CVec {
    let v = random_gaussian(rng, n, 1);
    let norm = v.norm();
    CVec::from_column_slice(v.scale(1.0 / norm).as_slice())
}

pub fn projector(v: &CVec) -> CMat {
    v * v.adjoint()
}

/// Random full-rank density matrix `G Gᴴ / Tr(G Gᴴ)` (Ginibre ensemble).
pub fn random_density<R: Rng + ?Sized>(rng: &mut R, n: usize) -> CMat {
    let g = random_gaussian(rng, n, n);
    let rho = &g * g.adjoint();
    let tr = trace(&rho).re;
    rho.scale(1.0 / tr)
}

/// Random unitary via QR of a Ginibre matrix.
pub fn random_unitary<R: Rng + ?Sized>(rng: &mut R, n: usize) -> CMat {
    let g = random_gaussian(rng, n, n);
    let qr = g.qr();
    let (q, rr) = (qr.q(), qr.r());
    let mut u = q;
    for k in 0..n {
        let d = rr[(k, k)];
        let phase = if d.norm() > 0.0 { d / d.norm() } else { ONE };
        let col = u.column(k) * phase;
        u.set_column(k, &col);
    }
    u
}
