use rayon::prelude::*;
use serde::Serialize;

use super::grid::TimeGrid;
use crate::dynamics::MapFamily;
use crate::error::Result;
use crate::linalg::{self, CMat, CVec};
use crate::operator::{hermitian_basis_from_span, SubspaceBasis};
use crate::superop::Superoperator;

/// Singular values below `ZERO_RTOL·σ_max(Λ₀)` count as exact zeros when
/// locating the onset of a rank drop.
pub const ZERO_RTOL: f64 = 1e-13;

const BISECTION_MAX_ITER: usize = 200;
const GOLDEN_MAX_ITER: usize = 120;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum BreakpointKind {
    /// Rank drops between grid neighbours and stays lower.
    Drop,
    /// Isolated singular point between grid neighbours of equal rank.
    Transient,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Breakpoint {
    pub time: f64,
    pub rank_before: usize,
    pub rank_after: usize,
    pub kind: BreakpointKind,
}

#[derive(Debug, Clone, Serialize)]
pub struct RankProfile {
    pub times: Vec<f64>,
    pub ranks: Vec<usize>,
    pub singular_values: Vec<Vec<f64>>,
    pub rtol: f64,
    /// Absolute singular-value threshold, `rtol·σ_max(Λ₀)`.
    pub threshold: f64,
    pub breakpoints: Vec<Breakpoint>,
}

impl RankProfile {
    pub fn breakpoint_times(&self) -> Vec<f64> {
        self.breakpoints.iter().map(|b| b.time).collect()
    }

    pub fn is_nonincreasing(&self) -> bool {
        self.ranks.windows(2).all(|w| w[1] <= w[0])
    }
}

fn count_above(sv: &[f64], threshold: f64) -> usize {
    sv.iter().filter(|&&s| s > threshold).count()
}

fn svals(family: &MapFamily, t: f64) -> Vec<f64> {
    linalg::singular_values(family.evaluate(t).natural())
}

/// Largest singular value of `Λ₀`; the scale for relative rank tolerances.
pub fn reference_scale(family: &MapFamily) -> f64 {
    svals(family, 0.0)[0].max(f64::MIN_POSITIVE)
}

/// Smallest `τ ∈ (lo, hi]` (to machine resolution) with `pred(τ)` true,
/// given `pred(lo)` false and `pred(hi)` true.
fn bisect(mut lo: f64, mut hi: f64, pred: impl Fn(f64) -> bool) -> f64 {
    for _ in 0..BISECTION_MAX_ITER {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if pred(mid) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    hi
}

/// Golden-section minimum of `f` on `[a, b]`.
fn golden_min(mut a: f64, mut b: f64, f: impl Fn(f64) -> f64) -> (f64, f64) {
    let g = 0.5 * (5f64.sqrt() - 1.0);
    let mut x1 = b - g * (b - a);
    let mut x2 = a + g * (b - a);
    let (mut f1, mut f2) = (f(x1), f(x2));
    for _ in 0..GOLDEN_MAX_ITER {
        if b - a <= 4.0 * f64::EPSILON * b.abs().max(1.0) {
            break;
        }
        if f1 <= f2 {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - g * (b - a);
            f1 = f(x1);
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + g * (b - a);
            f2 = f(x2);
        }
    }
    if f1 <= f2 {
        (x1, f1)
    } else {
        (x2, f2)
    }
}

/// Numerical rank of `Λ_t` on the grid with refined rank-drop times.
///
/// Drops are located by bisection on "at most `r_after` singular values
/// above `ZERO_RTOL·σ_max(Λ₀)`", falling back to the rank threshold itself
/// when the values never become that small. Interior local minima of the
/// smallest retained singular value are refined by golden-section search and
/// recorded as transient breakpoints when they fall below the threshold.
pub fn rank_profile(family: &MapFamily, grid: &TimeGrid, rtol: f64) -> RankProfile {
    let times = grid.times().to_vec();
    let reference = reference_scale(family);
    let threshold = rtol * reference;
    let zero = ZERO_RTOL * reference;
    let singular_values: Vec<Vec<f64>> = times.par_iter().map(|&t| svals(family, t)).collect();
    let ranks: Vec<usize> = singular_values
        .iter()
        .map(|sv| count_above(sv, threshold))
        .collect();

    let mut breakpoints = Vec::new();
    for k in 0..times.len().saturating_sub(1) {
        let (ra, rb) = (ranks[k], ranks[k + 1]);
        if rb < ra {
            let (lo, hi) = (times[k], times[k + 1]);
            let exact = |t: f64| count_above(&svals(family, t), zero) <= rb;
            let time = if exact(hi) {
                bisect(lo, hi, exact)
            } else {
                bisect(lo, hi, |t| count_above(&svals(family, t), threshold) <= rb)
            };
            breakpoints.push(Breakpoint {
                time,
                rank_before: ra,
                rank_after: rb,
                kind: BreakpointKind::Drop,
            });
        }
        if k >= 1 && ranks[k - 1] == ra && ra == rb && ra > 0 {
            let idx = ra - 1;
            let (prev, here, next) = (
                singular_values[k - 1][idx],
                singular_values[k][idx],
                singular_values[k + 1][idx],
            );
            if here < prev && here <= next {
                let (tm, fm) = golden_min(times[k - 1], times[k + 1], |t| svals(family, t)[idx]);
                if fm <= threshold && !times.contains(&tm) {
                    let rank_at = count_above(&svals(family, tm), threshold);
                    breakpoints.push(Breakpoint {
                        time: tm,
                        rank_before: ra,
                        rank_after: rank_at,
                        kind: BreakpointKind::Transient,
                    });
                }
            }
        }
    }
    breakpoints.sort_by(|a, b| a.time.total_cmp(&b.time));
    breakpoints.dedup_by(|a, b| (a.time - b.time).abs() <= 1e-12);
    RankProfile {
        times,
        ranks,
        singular_values,
        rtol,
        threshold,
        breakpoints,
    }
}

/// Orthonormal vectorized bases `(image, kernel)` split at an absolute threshold.
pub(crate) fn split_svd(n: &CMat, threshold: f64) -> (Vec<CVec>, Vec<CVec>) {
    let svd = linalg::svd(n);
    let mut image = Vec::new();
    let mut kernel = Vec::new();
    for (k, &s) in svd.singular_values.iter().enumerate() {
        if s > threshold {
            image.push(svd.u.column(k).into_owned());
            kernel.push(None);
        } else {
            kernel.push(Some(svd.v.column(k).into_owned()));
        }
    }
    (image, kernel.into_iter().flatten().collect())
}

/// HS-orthogonal projector (natural matrix) onto the span of orthonormal vectors.
pub(crate) fn span_projector(vectors: &[CVec], n2: usize) -> CMat {
    let mut p = linalg::zeros(n2, n2);
    for v in vectors {
        p += v * v.adjoint();
    }
    p
}

pub(crate) fn relative_threshold(s: &Superoperator, rtol: f64) -> f64 {
    rtol * linalg::singular_values(s.natural())[0]
}

pub fn kernel_basis_abs(s: &Superoperator, threshold: f64) -> Result<SubspaceBasis> {
    let (_, kernel) = split_svd(s.natural(), threshold);
    hermitian_basis_from_span(&kernel, s.dim(), 1e-8)
}

pub fn image_basis_abs(s: &Superoperator, threshold: f64) -> Result<SubspaceBasis> {
    let (image, _) = split_svd(s.natural(), threshold);
    hermitian_basis_from_span(&image, s.dim(), 1e-8)
}

/// Hermitian orthonormal basis of `Ker(S)`, singular values `≤ rtol·σ_max(S)`.
pub fn kernel_basis(s: &Superoperator, rtol: f64) -> Result<SubspaceBasis> {
    kernel_basis_abs(s, relative_threshold(s, rtol))
}

/// Hermitian orthonormal basis of `Im(S)`, singular values `> rtol·σ_max(S)`.
pub fn image_basis(s: &Superoperator, rtol: f64) -> Result<SubspaceBasis> {
    image_basis_abs(s, relative_threshold(s, rtol))
}
