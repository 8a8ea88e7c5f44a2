use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::grid::TimeGrid;
use super::propagator::{
    composite_propagator, is_divisible, is_image_nonincreasing, limit_projectors, pinv_propagator,
    propagator, LimitProjector, PropagatorResult,
};
use super::rank::{image_basis_abs, rank_profile, reference_scale, RankProfile};
use crate::dynamics::MapFamily;
use crate::error::Result;
use crate::extension::{extend_cp, ExtendOptions, FeasibilityStatus, SubspaceMapSpec};
use crate::linalg;
use crate::superop::induced_trace_norm_estimate;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Tolerances {
    /// Singular values `≤ rank_rtol·σ_max(Λ₀)` count as zero.
    pub rank_rtol: f64,
    /// Allowed negative slack on Choi eigenvalues.
    pub choi_tol: f64,
    pub tp_tol: f64,
    pub kernel_tol: f64,
    pub image_tol: f64,
    /// Finite-difference tolerance for witness derivatives.
    pub fd_tol: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            rank_rtol: 1e-9,
            choi_tol: 1e-7,
            tp_tol: 1e-7,
            kernel_tol: 1e-8,
            image_tol: 1e-8,
            fd_tol: 1e-6,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum VerdictStatus {
    NotDivisible,
    DivisibleOnly,
    CpOnImageOnly,
    PDivisible,
    CpDivisible,
}

impl VerdictStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::NotDivisible => "NOT_DIVISIBLE",
            Self::DivisibleOnly => "DIVISIBLE_ONLY",
            Self::CpOnImageOnly => "CP_ON_IMAGE_ONLY",
            Self::PDivisible => "P_DIVISIBLE",
            Self::CpDivisible => "CP_DIVISIBLE",
        }
    }
}

/// Sampled positivity of invertible propagators. Evidence, not a certificate.
#[derive(Debug, Clone, Serialize)]
pub struct PositivityEvidence {
    pub samples_per_pair: usize,
    pub min_output_eigenvalue: f64,
    pub max_trace_norm_ratio: f64,
    pub positive: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct ImageExtensionEvidence {
    pub pairs_checked: usize,
    pub solver_calls: usize,
    pub all_extendable: bool,
    pub first_failure: Option<(f64, f64)>,
}

#[derive(Debug, Clone, Serialize)]
pub struct DivisibilityVerdict {
    pub status: VerdictStatus,
    pub tolerances: Tolerances,
    pub invertible_everywhere: bool,
    pub image_nonincreasing: Option<bool>,
    pub worst_kernel_residual: f64,
    pub first_kernel_violation: Option<(f64, f64)>,
    pub worst_min_choi_eigenvalue: Option<f64>,
    pub worst_choi_pair: Option<(f64, f64)>,
    pub worst_tp_residual: Option<f64>,
    pub worst_composition_residual: Option<f64>,
    pub positivity: Option<PositivityEvidence>,
    pub projectors: Vec<LimitProjector>,
    pub image_extension: Option<ImageExtensionEvidence>,
    pub notes: Vec<String>,
    pub rank_profile: RankProfile,
}

pub const POSITIVITY_SAMPLES: usize = 500;
const POSITIVITY_SEED: u64 = 0x5eed_0001;

struct PairSummary {
    worst_choi: f64,
    worst_pair: (f64, f64),
    worst_tp: f64,
    worst_composition: f64,
    all_cptp: bool,
}

fn summarize(results: &[PropagatorResult], tol: &Tolerances) -> PairSummary {
    let mut s = PairSummary {
        worst_choi: f64::INFINITY,
        worst_pair: (0.0, 0.0),
        worst_tp: 0.0,
        worst_composition: 0.0,
        all_cptp: true,
    };
    for r in results {
        if r.min_choi_eigenvalue < s.worst_choi {
            s.worst_choi = r.min_choi_eigenvalue;
            s.worst_pair = (r.s, r.t);
        }
        s.worst_tp = s.worst_tp.max(r.tp_full_residual);
        s.worst_composition = s.worst_composition.max(r.composition_residual);
        s.all_cptp &= r.min_choi_eigenvalue >= -tol.choi_tol && r.tp_full_residual <= tol.tp_tol;
    }
    s
}

/// Positivity of each propagator on random pure states, plus the sampled
/// induced trace-norm ratio (positive TP maps are trace-norm contractions).
fn positivity_evidence(props: &[PropagatorResult], tol: &Tolerances) -> PositivityEvidence {
    let stats: Vec<(f64, f64)> = props
        .par_iter()
        .enumerate()
        .map(|(k, p)| {
            let mut rng = ChaCha8Rng::seed_from_u64(POSITIVITY_SEED.wrapping_add(k as u64));
            let d = p.v.dim();
            let mut min = f64::INFINITY;
            for _ in 0..POSITIVITY_SAMPLES {
                let psi = linalg::random_pure_state(&mut rng, d);
                let out = p.v.apply(&linalg::projector(&psi));
                min = min.min(linalg::eigvalsh(&out)[0]);
            }
            (
                min,
                induced_trace_norm_estimate(&p.v, 64, POSITIVITY_SEED.wrapping_add(k as u64)),
            )
        })
        .collect();
    let min_output_eigenvalue = stats.iter().map(|s| s.0).fold(f64::INFINITY, f64::min);
    let max_trace_norm_ratio = stats.iter().map(|s| s.1).fold(0.0, f64::max);
    PositivityEvidence {
        samples_per_pair: POSITIVITY_SAMPLES,
        min_output_eigenvalue,
        max_trace_norm_ratio,
        positive: min_output_eigenvalue >= -tol.choi_tol
            && max_trace_norm_ratio <= 1.0 + tol.choi_tol,
    }
}

/// Does each pseudoinverse propagator, restricted to `Im Λ_s`, admit a CP
/// extension? Pairs whose propagator is already CP need no solver call.
fn image_extension_evidence(
    family: &MapFamily,
    grid: &TimeGrid,
    tol: &Tolerances,
) -> Result<ImageExtensionEvidence> {
    let threshold = tol.rank_rtol * reference_scale(family);
    let d = family.dim();
    let mut ev = ImageExtensionEvidence {
        pairs_checked: 0,
        solver_calls: 0,
        all_extendable: true,
        first_failure: None,
    };
    for (s, t) in grid.pairs() {
        ev.pairs_checked += 1;
        let (map_s, map_t) = (family.evaluate(s), family.evaluate(t));
        let v = pinv_propagator(&map_t, &map_s, threshold);
        if v.is_cp(tol.choi_tol).0 {
            continue;
        }
        let domain = image_basis_abs(&map_s, threshold)?;
        if domain.len() == d * d {
            // Full domain: the only extension is V itself.
            ev.all_extendable = false;
            ev.first_failure = Some((s, t));
            break;
        }
        ev.solver_calls += 1;
        let spec = SubspaceMapSpec::from_map(&domain, &v, false);
        let result = extend_cp(&spec, &ExtendOptions::default())?;
        if result.status != FeasibilityStatus::Feasible {
            ev.all_extendable = false;
            ev.first_failure = Some((s, t));
            break;
        }
    }
    Ok(ev)
}

/// The full decision pipeline. Failures are recorded as evidence.
pub fn cp_divisibility_verdict(
    family: &MapFamily,
    grid: &TimeGrid,
    tol: &Tolerances,
) -> Result<DivisibilityVerdict> {
    let d2 = family.dim() * family.dim();
    let profile = rank_profile(family, grid, tol.rank_rtol);
    let aug = grid.with_breakpoints(&profile.breakpoint_times());
    let kernel = is_divisible(family, &aug, tol)?;
    let invertible_everywhere =
        profile.ranks.iter().all(|&r| r == d2) && profile.breakpoints.is_empty();

    let mut v = DivisibilityVerdict {
        status: VerdictStatus::NotDivisible,
        tolerances: *tol,
        invertible_everywhere,
        image_nonincreasing: None,
        worst_kernel_residual: kernel.worst_residual,
        first_kernel_violation: kernel.first_violation,
        worst_min_choi_eigenvalue: None,
        worst_choi_pair: None,
        worst_tp_residual: None,
        worst_composition_residual: None,
        positivity: None,
        projectors: Vec::new(),
        image_extension: None,
        notes: Vec::new(),
        rank_profile: profile,
    };
    if !kernel.divisible {
        v.notes
            .push("kernel inclusion fails: family is not divisible".into());
        return Ok(v);
    }

    let pairs: Vec<(f64, f64)> = aug.pairs().collect();
    if invertible_everywhere {
        let props: Vec<PropagatorResult> = pairs
            .par_iter()
            .map(|&(s, t)| propagator(family, t, s, tol))
            .collect::<Result<_>>()?;
        let sum = summarize(&props, tol);
        v.worst_min_choi_eigenvalue = Some(sum.worst_choi);
        v.worst_choi_pair = Some(sum.worst_pair);
        v.worst_tp_residual = Some(sum.worst_tp);
        v.worst_composition_residual = Some(sum.worst_composition);
        if sum.all_cptp {
            v.status = VerdictStatus::CpDivisible;
            return Ok(v);
        }
        let pos = positivity_evidence(&props, tol);
        v.status = if pos.positive && sum.worst_tp <= tol.tp_tol {
            VerdictStatus::PDivisible
        } else {
            VerdictStatus::DivisibleOnly
        };
        v.notes
            .push("P-divisibility is sampled evidence, not a certificate".into());
        v.positivity = Some(pos);
        return Ok(v);
    }

    let image = is_image_nonincreasing(family, &aug, tol);
    v.image_nonincreasing = Some(image.nonincreasing);
    if image.nonincreasing {
        match limit_projectors(family, aug.breakpoints(), tol) {
            Ok(lps) => {
                let comps: Vec<PropagatorResult> = pairs
                    .par_iter()
                    .map(|&(s, t)| composite_propagator(family, t, s, &lps, tol))
                    .collect::<Result<_>>()?;
                let sum = summarize(&comps, tol);
                v.worst_min_choi_eigenvalue = Some(sum.worst_choi);
                v.worst_choi_pair = Some(sum.worst_pair);
                v.worst_tp_residual = Some(sum.worst_tp);
                v.worst_composition_residual = Some(sum.worst_composition);
                v.projectors = lps;
                if sum.all_cptp {
                    v.status = VerdictStatus::CpDivisible;
                    return Ok(v);
                }
                v.notes
                    .push("composite propagators are not all CPTP".into());
            }
            Err(e) => v.notes.push(format!("limit projector failed: {e}")),
        }
    } else {
        v.notes.push(
            "image increases between grid points; checking CP extension on images only".into(),
        );
    }

    let ext = image_extension_evidence(family, &aug, tol)?;
    v.status = if ext.all_extendable {
        VerdictStatus::CpOnImageOnly
    } else {
        VerdictStatus::DivisibleOnly
    };
    if v.worst_min_choi_eigenvalue.is_none() {
        let threshold = tol.rank_rtol * reference_scale(family);
        let worst = pairs
            .par_iter()
            .map(|&(s, t)| {
                let p = pinv_propagator(&family.evaluate(t), &family.evaluate(s), threshold);
                (p.is_cp(tol.choi_tol).1, (s, t))
            })
            .reduce(
                || (f64::INFINITY, (0.0, 0.0)),
                |a, b| if b.0 < a.0 { b } else { a },
            );
        v.worst_min_choi_eigenvalue = Some(worst.0);
        v.worst_choi_pair = Some(worst.1);
    }
    v.image_extension = Some(ext);
    Ok(v)
}
