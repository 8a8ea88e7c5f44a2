use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::family::{FamilyKind, MapFamily};
use crate::divisibility::TimeGrid;
use crate::error::{Error, Result};
use crate::linalg::{self, CMat};
use crate::superop::Superoperator;

pub type GeneratorFn = Arc<dyn Fn(f64) -> Superoperator + Send + Sync>;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IntegrationOptions {
    /// Largest RK4 step used for the reported solution.
    pub max_step: f64,
    /// Allowed HS discrepancy between the step-`h` and step-`h/2` solutions.
    pub tol: f64,
}

impl Default for IntegrationOptions {
    fn default() -> Self {
        Self {
            max_step: 1e-2,
            tol: 1e-8,
        }
    }
}

fn rk4_step(l: &GeneratorFn, t: f64, h: f64, n: &CMat) -> CMat {
    let gen = |tau: f64, x: &CMat| l(tau).natural() * x;
    let k1 = gen(t, n);
    let k2 = gen(t + 0.5 * h, &(n + k1.scale(0.5 * h)));
    let k3 = gen(t + 0.5 * h, &(n + k2.scale(0.5 * h)));
    let k4 = gen(t + h, &(n + k3.scale(h)));
    n + (k1 + k2.scale(2.0) + k3.scale(2.0) + k4).scale(h / 6.0)
}

/// Integrates from `(t0, n0)` to `t1` using equal steps no longer than `max_step`.
fn propagate(l: &GeneratorFn, t0: f64, n0: &CMat, t1: f64, max_step: f64) -> CMat {
    let span = t1 - t0;
    if span <= 0.0 {
        return n0.clone();
    }
    let steps = (span / max_step).ceil().max(1.0) as usize;
    let h = span / steps as f64;
    let mut n = n0.clone();
    for k in 0..steps {
        n = rk4_step(l, t0 + k as f64 * h, h, &n);
    }
    n
}

fn trajectory(l: &GeneratorFn, dim: usize, times: &[f64], max_step: f64) -> Vec<CMat> {
    let mut out = Vec::with_capacity(times.len());
    let mut n = linalg::identity(dim * dim);
    let mut prev = 0.0;
    for &t in times {
        n = propagate(l, prev, &n, t, max_step);
        out.push(n.clone());
        prev = t;
    }
    out
}

/// Solves `dΛ_t/dt = 𝓛_t Λ_t`, `Λ_0 = 𝟙` on the grid with fixed-step RK4.
///
/// The trajectory is computed twice, at step `max_step` and `max_step/2`; the
/// finer one is kept and the HS discrepancy must stay below `opts.tol`.
/// Off-grid times integrate forward from the nearest earlier grid snapshot.
pub fn integrate_generator(
    dim: usize,
    generator: GeneratorFn,
    grid: &TimeGrid,
    opts: IntegrationOptions,
) -> Result<MapFamily> {
    if !(opts.max_step > 0.0) {
        return Err(Error::InvalidGrid(format!(
            "max_step = {} must be positive",
            opts.max_step
        )));
    }
    let times = grid.times().to_vec();
    let coarse = trajectory(&generator, dim, &times, opts.max_step);
    let fine_step = 0.5 * opts.max_step;
    let fine = trajectory(&generator, dim, &times, fine_step);
    let discrepancy = coarse
        .iter()
        .zip(&fine)
        .map(|(a, b)| linalg::hs_norm(&(a - b)))
        .fold(0.0, f64::max);
    log::debug!(
        "integrate_generator: {} grid points, step-halving discrepancy {discrepancy:.3e}",
        times.len()
    );
    if !(discrepancy <= opts.tol) {
        return Err(Error::IntegrationError {
            discrepancy,
            tol: opts.tol,
        });
    }
    let snapshots = Arc::new(fine);
    let eval_times = Arc::new(times);
    let kind = FamilyKind::Integrated {
        step: fine_step,
        discrepancy,
    };
    let eval = move |t: f64| {
        let idx = eval_times.partition_point(|&s| s <= t);
        let natural = if idx == 0 {
            propagate(&generator, 0.0, &linalg::identity(dim * dim), t, fine_step)
        } else if eval_times[idx - 1] == t {
            snapshots[idx - 1].clone()
        } else {
            propagate(
                &generator,
                eval_times[idx - 1],
                &snapshots[idx - 1],
                t,
                fine_step,
            )
        };
        Superoperator::from_natural(dim, natural).expect("generator dimension is fixed")
    };
    Ok(MapFamily::from_parts(
        dim,
        grid.t_max(),
        kind,
        Arc::new(eval),
    ))
}
