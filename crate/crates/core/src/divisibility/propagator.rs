use rayon::prelude::*;
use serde::Serialize;

use super::grid::TimeGrid;
use super::rank::{image_basis_abs, kernel_basis_abs, reference_scale, span_projector, split_svd};
use super::verdict::Tolerances;
use crate::dynamics::MapFamily;
use crate::error::{Error, Result};
use crate::linalg::{self, CMat};
use crate::operator::SubspaceBasis;
use crate::superop::Superoperator;

#[derive(Debug, Clone, Serialize)]
pub struct KernelCheck {
    pub divisible: bool,
    pub worst_residual: f64,
    /// First consecutive pair `(s, t)` whose kernel inclusion fails.
    pub first_violation: Option<(f64, f64)>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ImageCheck {
    pub nonincreasing: bool,
    pub worst_residual: f64,
    pub first_violation: Option<(f64, f64)>,
}

#[derive(Debug, Clone, Serialize)]
pub struct PropagatorResult {
    pub v: Superoperator,
    pub s: f64,
    pub t: f64,
    /// Basis of `Im(Λ_s)`.
    pub domain: SubspaceBasis,
    /// `‖V·Λ_s − Λ_t‖_HS`
    pub composition_residual: f64,
    /// `max |Tr V(B) − Tr B|` over the domain basis.
    pub tp_on_domain_residual: f64,
    pub cp_full: bool,
    pub min_choi_eigenvalue: f64,
    pub tp_full_residual: f64,
}

/// `max_k ‖Λ_t(K_k)‖_HS` over a Hermitian basis of `Ker(Λ_s)`.
fn kernel_residual(kernel: &SubspaceBasis, map_t: &Superoperator) -> f64 {
    kernel
        .matrices()
        .map(|k| linalg::hs_norm(&map_t.apply(k)))
        .fold(0.0, f64::max)
}

/// Kernel inclusion `Ker Λ_s ⊆ Ker Λ_t` on consecutive grid pairs.
pub fn is_divisible(family: &MapFamily, grid: &TimeGrid, tol: &Tolerances) -> Result<KernelCheck> {
    let threshold = tol.rank_rtol * reference_scale(family);
    let times = grid.times();
    let residuals: Vec<f64> = times
        .par_windows(2)
        .map(|w| {
            let kernel = kernel_basis_abs(&family.evaluate(w[0]), threshold)?;
            Ok(kernel_residual(&kernel, &family.evaluate(w[1])))
        })
        .collect::<Result<_>>()?;
    let worst_residual = residuals.iter().copied().fold(0.0, f64::max);
    let first_violation = residuals
        .iter()
        .position(|&r| !(r <= tol.kernel_tol))
        .map(|k| (times[k], times[k + 1]));
    Ok(KernelCheck {
        divisible: first_violation.is_none(),
        worst_residual,
        first_violation,
    })
}

/// `Im Λ_t ⊆ Im Λ_s` on consecutive pairs, residual `‖(𝟙 − P_s)P_t‖_HS`.
pub fn is_image_nonincreasing(family: &MapFamily, grid: &TimeGrid, tol: &Tolerances) -> ImageCheck {
    let threshold = tol.rank_rtol * reference_scale(family);
    let n2 = family.dim() * family.dim();
    let projectors: Vec<CMat> = grid
        .times()
        .par_iter()
        .map(|&t| span_projector(&split_svd(family.evaluate(t).natural(), threshold).0, n2))
        .collect();
    let residuals: Vec<f64> = projectors
        .windows(2)
        .map(|w| linalg::hs_norm(&((linalg::identity(n2) - &w[0]) * &w[1])))
        .collect();
    let worst_residual = residuals.iter().copied().fold(0.0, f64::max);
    let times = grid.times();
    let first_violation = residuals
        .iter()
        .position(|&r| !(r <= tol.image_tol))
        .map(|k| (times[k], times[k + 1]));
    ImageCheck {
        nonincreasing: first_violation.is_none(),
        worst_residual,
        first_violation,
    }
}

/// `N_t · N_s⁺` with the pseudoinverse cut at `threshold`.
pub(crate) fn pinv_propagator(
    map_t: &Superoperator,
    map_s: &Superoperator,
    threshold: f64,
) -> Superoperator {
    let v = map_t.natural() * linalg::pinv(map_s.natural(), threshold);
    Superoperator::from_natural(map_t.dim(), v).expect("same dimension")
}

fn assess(
    v: Superoperator,
    s: f64,
    t: f64,
    map_s: &Superoperator,
    map_t: &Superoperator,
    threshold: f64,
    tol: &Tolerances,
) -> Result<PropagatorResult> {
    let domain = image_basis_abs(map_s, threshold)?;
    let composition_residual = v.compose(map_s)?.distance(map_t);
    let tp_on_domain_residual = domain
        .matrices()
        .map(|b| (linalg::trace(&v.apply(b)) - linalg::trace(b)).norm())
        .fold(0.0, f64::max);
    let (cp_full, min_choi_eigenvalue) = v.is_cp(tol.choi_tol);
    let (_, tp_full_residual) = v.is_tp(tol.tp_tol);
    Ok(PropagatorResult {
        v,
        s,
        t,
        domain,
        composition_residual,
        tp_on_domain_residual,
        cp_full,
        min_choi_eigenvalue,
        tp_full_residual,
    })
}

/// Pseudoinverse propagator `V_{t,s} = N_t N_s⁺` after checking kernel inclusion.
pub fn propagator(
    family: &MapFamily,
    t: f64,
    s: f64,
    tol: &Tolerances,
) -> Result<PropagatorResult> {
    let threshold = tol.rank_rtol * reference_scale(family);
    let (map_s, map_t) = (family.evaluate(s), family.evaluate(t));
    let residual = kernel_residual(&kernel_basis_abs(&map_s, threshold)?, &map_t);
    if !(residual <= tol.kernel_tol) {
        return Err(Error::NotDivisible { s, t, residual });
    }
    let v = pinv_propagator(&map_t, &map_s, threshold);
    assess(v, s, t, &map_s, &map_t, threshold, tol)
}

#[derive(Debug, Clone)]
pub struct LimitOptions {
    /// Initial offset; defaults to `1e-2·T`.
    pub eps0: Option<f64>,
    pub shrink: f64,
    pub max_steps: usize,
    /// HS Cauchy tolerance; validation uses `10·tol`.
    pub tol: f64,
    pub rank_rtol: f64,
    /// Product of earlier limit projectors. TP and CP are validated on
    /// `Π ∘ domain`, which is what composite propagators use.
    pub domain: Option<Superoperator>,
}

impl Default for LimitOptions {
    fn default() -> Self {
        Self {
            eps0: None,
            shrink: 0.5,
            max_steps: 40,
            tol: 1e-8,
            rank_rtol: 1e-9,
            domain: None,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct LimitProjector {
    pub t_star: f64,
    pub projector: Superoperator,
    pub steps: usize,
    pub last_difference: f64,
    pub idempotence_residual: f64,
    pub tp_residual: f64,
    pub min_choi_eigenvalue: f64,
    pub image_residual: f64,
}

/// `Π_{t*} = lim_{ε→0⁺} V_{t*, t*−ε}` over `ε_k = ε₀·shrink^k`, stopping on
/// an HS Cauchy test, then validated as an idempotent CPTP map onto `Im Λ_{t*}`.
pub fn limit_projector(
    family: &MapFamily,
    t_star: f64,
    opts: &LimitOptions,
) -> Result<LimitProjector> {
    let eps0 = opts.eps0.unwrap_or(1e-2 * family.t_max()).min(t_star);
    let threshold = opts.rank_rtol * reference_scale(family);
    let map_star = family.evaluate(t_star);
    let mut prev: Option<Superoperator> = None;
    let mut last_difference = f64::INFINITY;
    let mut converged = None;
    for k in 0..opts.max_steps {
        let eps = eps0 * opts.shrink.powi(k as i32);
        let s = t_star - eps;
        if !(s >= 0.0 && s < t_star) {
            continue;
        }
        let v = pinv_propagator(&map_star, &family.evaluate(s), threshold);
        if let Some(p) = &prev {
            last_difference = v.distance(p);
            if last_difference < opts.tol {
                converged = Some((v, k + 1));
                break;
            }
        }
        prev = Some(v);
    }
    let Some((pi, steps)) = converged else {
        return Err(Error::LimitDivergence {
            t_star,
            steps: opts.max_steps,
            last_diff: last_difference,
        });
    };

    let check_tol = 10.0 * opts.tol;
    let fail = |property: &'static str, residual: f64| {
        Err(Error::ProjectorValidation {
            t_star,
            property,
            residual,
        })
    };
    let idempotence_residual = pi.compose(&pi)?.distance(&pi);
    if !(idempotence_residual < check_tol) {
        return fail("idempotence", idempotence_residual);
    }
    let effective = match &opts.domain {
        Some(d) => pi.compose(d)?,
        None => pi.clone(),
    };
    let (_, tp_residual) = effective.is_tp(check_tol);
    if !(tp_residual < check_tol) {
        return fail("trace preservation", tp_residual);
    }
    let (_, min_choi_eigenvalue) = effective.is_cp(check_tol);
    if !(min_choi_eigenvalue >= -check_tol) {
        return fail("complete positivity", -min_choi_eigenvalue);
    }
    let n2 = family.dim() * family.dim();
    let p_star = span_projector(&split_svd(map_star.natural(), threshold).0, n2);
    let p_pi = span_projector(&split_svd(pi.natural(), 0.5).0, n2);
    let image_residual = linalg::hs_norm(&(&p_star - &p_pi));
    if !(image_residual < check_tol) {
        return fail("image", image_residual);
    }
    Ok(LimitProjector {
        t_star,
        projector: pi,
        steps,
        last_difference,
        idempotence_residual,
        tp_residual,
        min_choi_eigenvalue,
        image_residual,
    })
}

/// Limit projectors at each breakpoint in order, each validated on the
/// product of the earlier ones.
pub fn limit_projectors(
    family: &MapFamily,
    breakpoints: &[f64],
    tol: &Tolerances,
) -> Result<Vec<LimitProjector>> {
    let mut out: Vec<LimitProjector> = Vec::with_capacity(breakpoints.len());
    let mut product: Option<Superoperator> = None;
    for &t_star in breakpoints {
        let opts = LimitOptions {
            rank_rtol: tol.rank_rtol,
            domain: product.clone(),
            ..Default::default()
        };
        let lp = limit_projector(family, t_star, &opts)?;
        product = Some(match product {
            Some(p) => lp.projector.compose(&p)?,
            None => lp.projector.clone(),
        });
        out.push(lp);
    }
    Ok(out)
}

/// `Ṽ_{t,s} = V_{t,s} Π_{t_i} ⋯ Π_{t_1}` over the projectors with `t_k ≤ s`.
pub fn composite_propagator(
    family: &MapFamily,
    t: f64,
    s: f64,
    projectors: &[LimitProjector],
    tol: &Tolerances,
) -> Result<PropagatorResult> {
    let base = propagator(family, t, s, tol)?;
    let mut v = base.v.clone();
    for lp in projectors.iter().rev().filter(|lp| lp.t_star <= s) {
        v = v.compose(&lp.projector)?;
    }
    let threshold = tol.rank_rtol * reference_scale(family);
    assess(
        v,
        s,
        t,
        &family.evaluate(s),
        &family.evaluate(t),
        threshold,
        tol,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::family::{
        ground_state, preset_amplitude_damping, preset_equilibrium_relaxation,
        preset_pauli_channel, DampingFunction, PauliEigenvalues,
    };
    use crate::dynamics::ScalarSignal;
    use crate::linalg::{sigma_x, sigma_z};
    use crate::operator::DensityMatrix;
    use std::f64::consts::FRAC_PI_2;

    fn tol() -> Tolerances {
        Tolerances::default()
    }

    fn clipped() -> MapFamily {
        preset_amplitude_damping(
            DampingFunction::Direct(ScalarSignal::CosineClipped {
                omega: 1.0,
                t_star: FRAC_PI_2,
            }),
            3.0,
        )
        .unwrap()
    }

    fn two_stage_pauli() -> MapFamily {
        let lin = || ScalarSignal::PiecewiseLinear {
            knots: vec![[0.0, 1.0], [1.0, 0.0]],
        };
        let l3 = ScalarSignal::PiecewiseLinear {
            knots: vec![[0.0, 1.0], [1.0, 1.0], [2.0, 0.0]],
        };
        preset_pauli_channel(PauliEigenvalues::Direct([lin(), lin(), l3]), 3.0).unwrap()
    }

    fn dephasing() -> Superoperator {
        Superoperator::identity(2)
            .add(&Superoperator::sandwich(&sigma_z(), &sigma_z()))
            .unwrap()
            .scale(0.5)
    }

    /// Rank-1 maps whose image rotates after `t = 1`.
    pub(crate) fn rotating_image() -> MapFamily {
        MapFamily::custom(2, 2.0, "rotating_image", |t| {
            let collapse = Superoperator::replacement(&ground_state());
            if t < 1.0 {
                Superoperator::identity(2)
                    .scale(1.0 - t)
                    .add(&collapse.scale(t))
                    .unwrap()
            } else {
                let theta = t - 1.0;
                let u = linalg::identity(2).scale(theta.cos())
                    - sigma_x() * linalg::c(0.0, theta.sin());
                Superoperator::replacement(&(&u * ground_state() * u.adjoint()))
            }
        })
    }

    #[test]
    fn divisibility_examples() {
        let grid = TimeGrid::uniform(3.0, 61)
            .unwrap()
            .with_breakpoints(&[FRAC_PI_2]);
        let decay = preset_amplitude_damping(
            DampingFunction::Direct(ScalarSignal::ExpDecay { rate: 0.5 }),
            3.0,
        )
        .unwrap();
        assert!(is_divisible(&decay, &grid, &tol()).unwrap().divisible);
        assert!(is_divisible(&clipped(), &grid, &tol()).unwrap().divisible);

        let revived = preset_amplitude_damping(
            DampingFunction::Direct(ScalarSignal::Sinusoidal {
                amplitude: 1.0,
                omega: 1.0,
                phase: FRAC_PI_2,
                offset: 0.0,
            }),
            3.0,
        )
        .unwrap();
        let check = is_divisible(&revived, &grid, &tol()).unwrap();
        assert!(!check.divisible);
        let (s, t) = check.first_violation.unwrap();
        assert_eq!(s, FRAC_PI_2);
        assert_eq!(
            t,
            grid.times()[grid.times().iter().position(|&x| x == FRAC_PI_2).unwrap() + 1]
        );
    }

    #[test]
    fn image_examples() {
        let grid = TimeGrid::uniform(2.0, 41).unwrap();
        assert!(is_image_nonincreasing(&MapFamily::identity(2, 2.0), &grid, &tol()).nonincreasing);
        assert!(is_image_nonincreasing(&two_stage_pauli(), &grid, &tol()).nonincreasing);
        let grid3 = TimeGrid::uniform(3.0, 61)
            .unwrap()
            .with_breakpoints(&[FRAC_PI_2]);
        assert!(is_image_nonincreasing(&clipped(), &grid3, &tol()).nonincreasing);
        let rot = rotating_image();
        assert!(is_divisible(&rot, &grid, &tol()).unwrap().divisible);
        assert!(!is_image_nonincreasing(&rot, &grid, &tol()).nonincreasing);
    }

    #[test]
    fn propagator_examples() {
        let decay = preset_amplitude_damping(
            DampingFunction::Direct(ScalarSignal::ExpDecay { rate: 0.5 }),
            3.0,
        )
        .unwrap();
        let same = propagator(&decay, 1.0, 1.0, &tol()).unwrap();
        assert!(same.v.distance(&Superoperator::identity(2)) < 1e-12);
        let p = propagator(&decay, 2.0, 1.0, &tol()).unwrap();
        assert!(p.min_choi_eigenvalue >= -1e-9 && p.tp_full_residual < 1e-9);
        assert!(p.composition_residual < 1e-8);

        let omega = DensityMatrix::new(CMat::from_row_slice(
            2,
            2,
            &[
                linalg::r(0.6),
                linalg::c(0.2, 0.1),
                linalg::c(0.2, -0.1),
                linalg::r(0.4),
            ],
        ))
        .unwrap();
        let f = ScalarSignal::PiecewiseLinear {
            knots: vec![[0.0, 0.0], [1.0, 1.0]],
        };
        let relax = preset_equilibrium_relaxation(omega.clone(), f, 2.0).unwrap();
        let p = propagator(&relax, 1.8, 1.3, &tol()).unwrap();
        assert!(linalg::hs_norm(&(p.v.apply(omega.matrix()) - omega.matrix())) < 1e-12);
        assert!(p.tp_on_domain_residual < 1e-9);
        assert!(p.composition_residual < 1e-8);

        let revived = preset_amplitude_damping(
            DampingFunction::Direct(ScalarSignal::Sinusoidal {
                amplitude: 1.0,
                omega: 1.0,
                phase: FRAC_PI_2,
                offset: 0.0,
            }),
            3.0,
        )
        .unwrap();
        assert!(matches!(
            propagator(&revived, 2.0, FRAC_PI_2, &tol()),
            Err(Error::NotDivisible { .. })
        ));
    }

    #[test]
    fn limit_projector_examples() {
        let lp = limit_projector(&clipped(), FRAC_PI_2, &LimitOptions::default()).unwrap();
        assert!(
            lp.projector
                .distance(&Superoperator::replacement(&ground_state()))
                < 1e-6
        );

        let fam = two_stage_pauli();
        let projectors = limit_projectors(&fam, &[1.0, 2.0], &tol()).unwrap();
        assert!(projectors[0].projector.distance(&dephasing()) < 1e-6);
        let half_trace = Superoperator::replacement(&linalg::identity(2).scale(0.5));
        assert!(projectors[1].projector.distance(&half_trace) < 1e-6);

        let omega = DensityMatrix::new(CMat::from_row_slice(
            2,
            2,
            &[
                linalg::r(0.3),
                linalg::c(0.1, 0.2),
                linalg::c(0.1, -0.2),
                linalg::r(0.7),
            ],
        ))
        .unwrap();
        let relax = preset_equilibrium_relaxation(
            omega.clone(),
            ScalarSignal::PiecewiseLinear {
                knots: vec![[0.0, 0.0], [1.0, 1.0]],
            },
            2.0,
        )
        .unwrap();
        let lp = limit_projector(&relax, 1.0, &LimitOptions::default()).unwrap();
        assert!(
            lp.projector
                .distance(&Superoperator::replacement(omega.matrix()))
                < 1e-6
        );
    }

    #[test]
    fn composite_examples() {
        let fam = two_stage_pauli();
        let projectors = limit_projectors(&fam, &[1.0, 2.0], &tol()).unwrap();
        let c = composite_propagator(&fam, 0.6, 0.5, &projectors, &tol()).unwrap();
        assert!(c.v.distance(&propagator(&fam, 0.6, 0.5, &tol()).unwrap().v) < 1e-15);
        let c = composite_propagator(&fam, 2.5, 2.2, &projectors, &tol()).unwrap();
        assert!(c.cp_full && c.tp_full_residual < 1e-8);
        assert!(c.v.distance(&Superoperator::replacement(&linalg::identity(2).scale(0.5))) < 1e-8);

        let fam = clipped();
        let lp = limit_projectors(&fam, &[FRAC_PI_2], &tol()).unwrap();
        let c = composite_propagator(&fam, 2.5, 2.0, &lp, &tol()).unwrap();
        assert!(c.v.distance(&Superoperator::replacement(&ground_state())) < 1e-8);
        assert!(c.tp_full_residual < 1e-8);
        // The bare pseudoinverse propagator is not TP on the whole space.
        assert!(propagator(&fam, 2.5, 2.0, &tol()).unwrap().tp_full_residual > 0.1);
    }
}
