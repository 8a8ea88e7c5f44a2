use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, CMat};
use crate::operator::SubspaceBasis;
use crate::superop::{ChoiMatrix, Superoperator};

use super::reduction::positively_generated_check;

/// A linear map given on a subspace: `G_α ↦ Y_α` for the basis elements `G_α`.
#[derive(Debug, Clone, Serialize)]
pub struct SubspaceMapSpec {
    pub dim: usize,
    pub domain: SubspaceBasis,
    #[serde(with = "crate::io::matrix_json::vec")]
    pub images: Vec<CMat>,
    pub require_tp: bool,
}

impl SubspaceMapSpec {
    pub fn new(domain: SubspaceBasis, images: Vec<CMat>, require_tp: bool) -> Result<Self> {
        if images.len() != domain.len() {
            return Err(Error::DimensionMismatch {
                expected: domain.len(),
                found: images.len(),
            });
        }
        if let Some(bad) = images
            .iter()
            .find(|y| y.nrows() != domain.dim || y.ncols() != domain.dim)
        {
            return Err(Error::DimensionMismatch {
                expected: domain.dim,
                found: bad.nrows(),
            });
        }
        Ok(Self {
            dim: domain.dim,
            domain,
            images,
            require_tp,
        })
    }

    /// The restriction of `v` to `domain`.
    pub fn from_map(domain: &SubspaceBasis, v: &Superoperator, require_tp: bool) -> Self {
        let images = domain.matrices().map(|g| v.apply(g)).collect();
        Self {
            dim: domain.dim,
            domain: domain.clone(),
            images,
            require_tp,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum FeasibilityStatus {
    Feasible,
    /// Residual stagnated above `100·tol_affine`. Heuristic, not a certificate.
    InfeasibleEvidence,
    MaxIter,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExtendOptions {
    pub max_iter: usize,
    pub tol_psd: f64,
    pub tol_affine: f64,
    pub use_dykstra: bool,
}

impl Default for ExtendOptions {
    fn default() -> Self {
        Self {
            max_iter: 5000,
            tol_psd: 1e-9,
            tol_affine: 1e-8,
            use_dykstra: true,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct FeasibilityResult {
    pub status: FeasibilityStatus,
    pub choi: Option<ChoiMatrix>,
    pub action_residual: f64,
    pub tp_residual: f64,
    /// Smallest eigenvalue of the returned Choi matrix.
    pub min_eigenvalue: f64,
    pub iterations: usize,
    /// Affine residual of the PSD iterate after each iteration.
    pub history: Vec<f64>,
    /// Dimension of the face of the PSD cone the search ran in.
    pub face_dim: usize,
    pub note: Option<String>,
}

/// Real-coordinate form of the constraints on a Hermitian Choi matrix
/// `C = Σ_k x_k B_k` over an orthonormal Hermitian basis `{B_k}`.
struct Constraints {
    dim: usize,
    basis: Vec<CMat>,
    a: DMatrix<f64>,
    a_pinv: DMatrix<f64>,
    b: DVector<f64>,
    /// Number of leading rows that encode the action constraints.
    action_rows: usize,
}

/// `Φ_C(X) = Σ_ij X_ij C_(i,j)` where `C_(i,j)` is the output block for input `|i⟩⟨j|`.
fn choi_action(c: &CMat, x: &CMat, d: usize) -> CMat {
    let mut out = linalg::zeros(d, d);
    for i in 0..d {
        for j in 0..d {
            let xij = x[(i, j)];
            if xij.norm() == 0.0 {
                continue;
            }
            out += c.view((i * d, j * d), (d, d)) * xij;
        }
    }
    out
}

/// `Tr_out C`, the map's adjoint applied to the identity (transposed).
fn output_trace(c: &CMat, d: usize) -> CMat {
    CMat::from_fn(d, d, |i, j| (0..d).map(|k| c[(i * d + k, j * d + k)]).sum())
}

fn push_complex(rows: &mut Vec<f64>, m: &CMat) {
    rows.extend(m.iter().map(|z| z.re));
    rows.extend(m.iter().map(|z| z.im));
}

/// Face of the PSD cone containing every CP extension.
enum Face {
    Full,
    /// Orthonormal columns spanning the allowed range of `C`.
    Reduced(CMat),
    /// No CP extension can exist.
    Empty(String),
}

/// If `ρ ∈ M` is positive definite on the support of `M` and `Y = V(ρ)`, any
/// CP extension satisfies `Tr[(ρᵀ ⊗ |k⟩⟨k|) C] = ⟨k|Y|k⟩ = 0` for `k ∈ Ker Y`,
/// so `C` vanishes on `supp(ρᵀ) ⊗ Ker Y`. Restricting to the complement
/// restores a Slater point in the common cases and keeps alternating
/// projections linearly convergent.
fn facial_reduction(spec: &SubspaceMapSpec) -> Face {
    let d = spec.dim;
    if spec.domain.is_empty() {
        return Face::Full;
    }
    let Some(rho) = positively_generated_check(&spec.domain, 1e-9).certificate else {
        return Face::Full;
    };
    let mut y = linalg::zeros(d, d);
    for (g, img) in spec.domain.matrices().zip(&spec.images) {
        y += img * crate::operator::hs_inner(g, &rho);
    }
    let scale = linalg::max_abs(&y).max(f64::MIN_POSITIVE);
    let asym = linalg::hermiticity_residual(&y);
    if asym > 1e-8 * scale.max(1.0) {
        return Face::Empty(format!(
            "image of a positive domain element is not Hermitian (asymmetry {asym:.3e})"
        ));
    }
    let (vals, vecs) = linalg::eigh(&y);
    if vals[0] < -1e-8 * scale.max(1.0) {
        return Face::Empty(format!(
            "image of a positive domain element has eigenvalue {:.3e}",
            vals[0]
        ));
    }
    let kernel: Vec<usize> = (0..d).filter(|&k| vals[k] <= 1e-9 * scale).collect();
    if kernel.is_empty() {
        return Face::Full;
    }
    let (rv, rvecs) = linalg::eigh(&rho.transpose());
    let top = rv[d - 1];
    let mut excluded = linalg::zeros(d * d, d * d);
    for i in (0..d).filter(|&i| rv[i] > 1e-10 * top) {
        for &k in &kernel {
            let e = linalg::kron(
                &CMat::from_column_slice(d, 1, rvecs.column(i).as_slice()),
                &CMat::from_column_slice(d, 1, vecs.column(k).as_slice()),
            );
            excluded += &e * e.adjoint();
        }
    }
    let (pv, pvecs) = linalg::eigh(&(linalg::identity(d * d) - excluded));
    let cols: Vec<usize> = (0..d * d).filter(|&k| pv[k] > 0.5).collect();
    Face::Reduced(CMat::from_fn(d * d, cols.len(), |r, c| pvecs[(r, cols[c])]))
}

impl Constraints {
    fn build(spec: &SubspaceMapSpec, face: Option<&CMat>) -> Result<Self> {
        let d = spec.dim;
        let basis: Vec<CMat> = match face {
            None => linalg::hermitian_basis(d * d),
            Some(f) => linalg::hermitian_basis(f.ncols())
                .iter()
                .map(|b| f * b * f.adjoint())
                .collect(),
        };
        let linear = |c: &CMat| {
            let mut rows = Vec::new();
            for g in spec.domain.matrices() {
                push_complex(&mut rows, &choi_action(c, g, d));
            }
            if spec.require_tp {
                push_complex(&mut rows, &output_trace(c, d));
            }
            rows
        };
        let columns: Vec<Vec<f64>> = basis.iter().map(linear).collect();
        let m = columns.first().map_or(0, Vec::len);
        let a = DMatrix::from_fn(m, basis.len(), |r, k| columns[k][r]);
        let mut target = Vec::with_capacity(m);
        for y in &spec.images {
            push_complex(&mut target, y);
        }
        if spec.require_tp {
            push_complex(&mut target, &linalg::identity(d));
        }
        let b = DVector::from_vec(target);
        let a_pinv = if m == 0 {
            DMatrix::zeros(basis.len(), 0)
        } else {
            let ac = a.map(linalg::r);
            let cutoff = 1e-10 * linalg::singular_values(&ac)[0].max(f64::MIN_POSITIVE);
            linalg::pinv(&ac, cutoff).map(|z| z.re)
        };
        let residual = if m == 0 {
            0.0
        } else {
            (&a * (&a_pinv * &b) - &b).norm()
        };
        if residual > 1e-8 * (1.0 + b.norm()) {
            return Err(Error::InconsistentConstraints { residual });
        }
        Ok(Self {
            dim: d,
            basis,
            a,
            a_pinv,
            b,
            action_rows: 2 * d * d * spec.domain.len(),
        })
    }

    fn to_coords(&self, c: &CMat) -> DVector<f64> {
        DVector::from_iterator(
            self.basis.len(),
            self.basis.iter().map(|bk| linalg::trace(&(bk * c)).re),
        )
    }

    fn to_matrix(&self, x: &DVector<f64>) -> CMat {
        let n = self.dim * self.dim;
        let mut c = linalg::zeros(n, n);
        for (bk, &xk) in self.basis.iter().zip(x.iter()) {
            c += bk.scale(xk);
        }
        c
    }

    fn project_affine(&self, x: &DVector<f64>) -> DVector<f64> {
        if self.b.is_empty() {
            return x.clone();
        }
        x - &self.a_pinv * (&self.a * x - &self.b)
    }

    fn project_psd(&self, x: &DVector<f64>) -> DVector<f64> {
        let c = linalg::hermitian_fn(&self.to_matrix(x), |v| v.max(0.0));
        self.to_coords(&c)
    }

    /// `(action residual, tp residual)` as Euclidean norms of the row blocks.
    fn residuals(&self, x: &DVector<f64>) -> (f64, f64) {
        if self.b.is_empty() {
            return (0.0, 0.0);
        }
        let r = &self.a * x - &self.b;
        let action = r.rows(0, self.action_rows).norm();
        let tp = r.rows(self.action_rows, r.len() - self.action_rows).norm();
        (action, tp)
    }
}

/// Fraction of the run inspected for stagnation.
const STAGNATION_WINDOW: f64 = 0.2;

/// Searches for a PSD Choi matrix satisfying `spec` by alternating
/// projections (with Dykstra corrections when `use_dykstra`).
pub fn extend_cp(spec: &SubspaceMapSpec, opts: &ExtendOptions) -> Result<FeasibilityResult> {
    extend_cp_observed(spec, opts, None, |_, _| {})
}

/// As [`extend_cp`], with an optional warm start and an observer called with
/// each PSD iterate.
pub fn extend_cp_observed(
    spec: &SubspaceMapSpec,
    opts: &ExtendOptions,
    warm_start: Option<&ChoiMatrix>,
    mut observer: impl FnMut(usize, &CMat),
) -> Result<FeasibilityResult> {
    let full = Constraints::build(spec, None)?;
    let d = spec.dim;
    let cons = match facial_reduction(spec) {
        Face::Full => full,
        Face::Empty(reason) => return Ok(no_extension(&full, reason)),
        Face::Reduced(f) => match Constraints::build(spec, Some(&f)) {
            Ok(c) => c,
            Err(Error::InconsistentConstraints { residual }) => {
                return Ok(no_extension(
                    &full,
                    format!(
                        "constraints inconsistent on the forced face (residual {residual:.3e})"
                    ),
                ))
            }
            Err(e) => return Err(e),
        },
    };
    let start = warm_start.map_or_else(
        || linalg::identity(d * d).scale(1.0 / d as f64),
        |c| c.matrix.clone(),
    );
    let mut x = cons.to_coords(&start);
    let mut q = DVector::zeros(x.len());
    let mut history = Vec::with_capacity(opts.max_iter);
    let mut best: Option<(f64, DVector<f64>)> = None;

    for it in 0..opts.max_iter {
        let y = cons.project_affine(&x);
        // The affine set is a translated subspace, so its Dykstra correction
        // never changes the projection and only the cone needs one.
        let z = cons.project_psd(&(&y + &q));
        if opts.use_dykstra {
            q = &y + &q - &z;
        }
        x = z;
        observer(it, &cons.to_matrix(&x));

        let (action, tp) = cons.residuals(&x);
        let total = (action * action + tp * tp).sqrt();
        history.push(total);
        if best.as_ref().is_none_or(|(r, _)| total < *r) {
            best = Some((total, x.clone()));
        }
        if total < opts.tol_affine {
            return Ok(finish(
                &cons,
                FeasibilityStatus::Feasible,
                &x,
                it + 1,
                history,
            ));
        }
        // The affine iterate may already be PSD within slack.
        let (ya, yt) = cons.residuals(&y);
        if (ya * ya + yt * yt).sqrt() < opts.tol_affine
            && linalg::eigvalsh(&cons.to_matrix(&y))[0] >= -opts.tol_psd
        {
            return Ok(finish(
                &cons,
                FeasibilityStatus::Feasible,
                &y,
                it + 1,
                history,
            ));
        }
    }

    let window = ((opts.max_iter as f64 * STAGNATION_WINDOW) as usize)
        .max(1)
        .min(history.len());
    let tail = &history[history.len() - window..];
    let floor = tail.iter().copied().fold(f64::INFINITY, f64::min);
    let head = tail[0];
    let stagnant = floor > 100.0 * opts.tol_affine && (head - floor) <= 0.01 * head;
    let status = if stagnant {
        FeasibilityStatus::InfeasibleEvidence
    } else {
        FeasibilityStatus::MaxIter
    };
    let (_, xb) = best.expect("max_iter ≥ 1");
    log::debug!(
        "extend_cp: {status:?} after {} iterations, residual floor {floor:.3e}",
        opts.max_iter
    );
    Ok(finish(&cons, status, &xb, opts.max_iter, history))
}

/// Result for specs ruled out before iterating.
fn no_extension(full: &Constraints, reason: String) -> FeasibilityResult {
    let x = full.to_coords(&linalg::identity(full.dim * full.dim).scale(1.0 / full.dim as f64));
    let mut r = finish(
        full,
        FeasibilityStatus::InfeasibleEvidence,
        &x,
        0,
        Vec::new(),
    );
    r.note = Some(reason);
    r
}

fn finish(
    cons: &Constraints,
    status: FeasibilityStatus,
    x: &DVector<f64>,
    iterations: usize,
    history: Vec<f64>,
) -> FeasibilityResult {
    let matrix = linalg::hermitian_part(&cons.to_matrix(x));
    let (action_residual, tp_residual) = cons.residuals(x);
    let min_eigenvalue = linalg::eigvalsh(&matrix)[0];
    let choi = ChoiMatrix {
        dim: cons.dim,
        matrix,
    };
    FeasibilityResult {
        status,
        choi: (status == FeasibilityStatus::Feasible).then_some(choi),
        action_residual,
        tp_residual,
        min_eigenvalue,
        iterations,
        history,
        face_dim: (cons.basis.len() as f64).sqrt().round() as usize,
        note: None,
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ExtensionReport {
    pub min_eigenvalue: f64,
    /// `max_α ‖Φ_C(G_α) − Y_α‖_HS`
    pub action_residual: f64,
    /// `‖Tr_out C − I‖_HS`, reported even when TP is not required.
    pub tp_residual: f64,
    pub passes: bool,
}

/// Independent re-check of a candidate extension with fresh eigensolves.
pub fn verify_extension(c: &ChoiMatrix, spec: &SubspaceMapSpec, tol: f64) -> ExtensionReport {
    let d = spec.dim;
    let map = Superoperator::from_choi(c);
    let min_eigenvalue = crate::operator::min_eigenvalue(&c.matrix);
    let action_residual = spec
        .domain
        .matrices()
        .zip(&spec.images)
        .map(|(g, y)| linalg::hs_norm(&(map.apply(g) - y)))
        .fold(0.0, f64::max);
    let trace_dual = CMat::from_fn(d, d, |i, j| {
        (0..d).map(|k| c.matrix[(i * d + k, j * d + k)]).sum()
    });
    let tp_residual = linalg::hs_norm(&(trace_dual - linalg::identity(d)));
    let passes = min_eigenvalue >= -tol
        && action_residual <= tol
        && (!spec.require_tp || tp_residual <= tol)
        && linalg::hermiticity_residual(&c.matrix) <= tol;
    ExtensionReport {
        min_eigenvalue,
        action_residual,
        tp_residual,
        passes,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::family::ground_state;
    use crate::linalg::{identity, sigma_x, sigma_z};
    use crate::operator::{gram_schmidt_hermitian, HermitianMatrix};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn span(ms: &[CMat]) -> SubspaceBasis {
        let h: Vec<HermitianMatrix> = ms
            .iter()
            .map(|m| HermitianMatrix::new(m.clone()).unwrap())
            .collect();
        gram_schmidt_hermitian(&h, 1e-9).unwrap()
    }

    fn dephasing() -> Superoperator {
        Superoperator::identity(2)
            .add(&Superoperator::sandwich(&sigma_z(), &sigma_z()))
            .unwrap()
            .scale(0.5)
    }

    fn p0_spec() -> SubspaceMapSpec {
        SubspaceMapSpec::new(span(&[ground_state()]), vec![ground_state()], true).unwrap()
    }

    fn assert_feasible(spec: &SubspaceMapSpec) -> FeasibilityResult {
        let r = extend_cp(spec, &ExtendOptions::default()).unwrap();
        assert_eq!(
            r.status,
            FeasibilityStatus::Feasible,
            "residual {}",
            r.history.last().unwrap()
        );
        let report = verify_extension(r.choi.as_ref().unwrap(), spec, 1e-7);
        assert!(report.passes, "{report:?}");
        r
    }

    #[test]
    fn total_map_extends_to_itself() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let u = linalg::random_unitary(&mut rng, 2);
        let channel = Superoperator::sandwich(&u, &u.adjoint())
            .scale(0.7)
            .add(&dephasing().scale(0.3))
            .unwrap();
        let spec = SubspaceMapSpec::from_map(&SubspaceBasis::full(2), &channel, true);
        let r = assert_feasible(&spec);
        assert!(r.action_residual < 1e-8);
        assert!(linalg::hs_norm(&(&r.choi.unwrap().matrix - &channel.to_choi().matrix)) < 1e-7);
    }

    #[test]
    fn breakpoint_specs_are_feasible() {
        assert_feasible(&p0_spec());
        let m = span(&[identity(2), sigma_z()]);
        let images: Vec<CMat> = m.matrices().cloned().collect();
        assert_feasible(&SubspaceMapSpec::new(m, images, true).unwrap());
    }

    #[test]
    fn hand_built_certificates_verify() {
        let collapse = Superoperator::replacement(&ground_state()).to_choi();
        assert!(verify_extension(&collapse, &p0_spec(), 1e-7).passes);
        let m = span(&[identity(2), sigma_z()]);
        let images: Vec<CMat> = m.matrices().cloned().collect();
        let spec = SubspaceMapSpec::new(m, images, true).unwrap();
        assert!(verify_extension(&dephasing().to_choi(), &spec, 1e-7).passes);
    }

    #[test]
    fn wrong_action_is_reported() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let g = linalg::random_gaussian(&mut rng, 4, 4);
        let c = ChoiMatrix {
            dim: 2,
            matrix: &g * g.adjoint(),
        };
        let report = verify_extension(&c, &p0_spec(), 1e-7);
        assert!(!report.passes && report.action_residual > 1e-7);
    }

    #[test]
    fn inconsistent_constraints_are_rejected() {
        let m = span(&[identity(2)]);
        let spec =
            SubspaceMapSpec::new(m, vec![identity(2).scale(3.0 / 2f64.sqrt())], true).unwrap();
        assert!(matches!(
            extend_cp(&spec, &ExtendOptions::default()),
            Err(Error::InconsistentConstraints { .. })
        ));
    }

    #[test]
    fn non_positive_action_has_no_cp_extension() {
        // P₀ ↦ σ_x is not positive, so no CP extension exists.
        let spec = SubspaceMapSpec::new(span(&[ground_state()]), vec![sigma_x()], false).unwrap();
        let r = extend_cp(
            &spec,
            &ExtendOptions {
                max_iter: 500,
                ..Default::default()
            },
        )
        .unwrap();
        assert_eq!(r.status, FeasibilityStatus::InfeasibleEvidence);
        assert!(r.choi.is_none());
    }

    #[test]
    fn iterates_approach_a_known_certificate() {
        let cert = Superoperator::replacement(&ground_state()).to_choi().matrix;
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let g = linalg::random_gaussian(&mut rng, 4, 4);
        let start = ChoiMatrix {
            dim: 2,
            matrix: &g * g.adjoint(),
        };
        for use_dykstra in [true, false] {
            let mut dist = Vec::new();
            let opts = ExtendOptions {
                use_dykstra,
                ..Default::default()
            };
            let r = extend_cp_observed(&p0_spec(), &opts, Some(&start), |_, c| {
                dist.push(linalg::hs_norm(&(c - &cert)))
            })
            .unwrap();
            assert_eq!(r.status, FeasibilityStatus::Feasible);
            assert!(r.face_dim < 4);
            assert!(
                r.iterations < 500,
                "slow convergence: {} iterations",
                r.iterations
            );
            if !use_dykstra {
                // Dykstra iterates need not be Fejér monotone; plain alternating projections are.
                assert!(dist.windows(2).all(|w| w[1] <= w[0] + 1e-12));
            }
        }
    }
}
