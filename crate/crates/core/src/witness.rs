//! Information-backflow diagnostics: trace-norm trajectories of
//! `(𝟙_a ⊗ Λ_t)(X)` and their time derivatives.
//!
//! A positive derivative anywhere rules out the corresponding Markovianity
//! class. The converse needs the supremum over all witnesses, so scans only
//! ever report "no violation found".

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::divisibility::TimeGrid;
use crate::dynamics::MapFamily;
use crate::error::{Error, Result};
use crate::linalg::{self, CMat};
use crate::operator::{trace_norm_unchecked, DensityMatrix, HermitianMatrix};
use crate::superop::Superoperator;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AncillaKind {
    None,
    D,
    DPlus1,
}

impl AncillaKind {
    /// Ancilla dimension for a system of dimension `d`.
    pub fn ancilla_dim(self, d: usize) -> usize {
        match self {
            Self::None => 1,
            Self::D => d,
            Self::DPlus1 => d + 1,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Self::None => "none",
            Self::D => "d",
            Self::DPlus1 => "d_plus_1",
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct WitnessRecord {
    #[serde(with = "crate::io::matrix_json")]
    pub witness: CMat,
    pub ancilla_kind: AncillaKind,
    pub times: Vec<f64>,
    pub norms: Vec<f64>,
    /// Central differences at interior grid points, `derivatives[k]` at `times[k + 1]`.
    pub derivatives: Vec<f64>,
    /// One-sided differences at the two endpoints.
    pub endpoint_derivatives: [f64; 2],
    /// Largest derivative estimate, signed.
    pub max_derivative: f64,
    /// `max(0, max_derivative)`.
    pub max_backflow: f64,
    pub max_backflow_time: f64,
    /// Grid interval the difference quotient was taken over.
    pub max_backflow_bracket: (f64, f64),
    /// `10·h²` with `h` the largest grid spacing.
    pub backflow_tolerance: f64,
    pub violation_found: bool,
    /// Grid times where the second difference spikes (non-smooth norm).
    pub kinks: Vec<f64>,
}

/// The maps `Λ_t` on a grid, evaluated once and shared by many witnesses.
pub struct Trajectory {
    times: Vec<f64>,
    maps: Vec<Superoperator>,
    dim: usize,
}

impl Trajectory {
    pub fn new(family: &MapFamily, grid: &TimeGrid) -> Self {
        let times = grid.times().to_vec();
        let maps = times.par_iter().map(|&t| family.evaluate(t)).collect();
        Self {
            times,
            maps,
            dim: family.dim(),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    /// `‖(𝟙_a ⊗ Λ_t)(X)‖₁` along the grid.
    pub fn norms(&self, x: &CMat, a: usize) -> Vec<f64> {
        self.maps
            .iter()
            .map(|m| trace_norm_unchecked(&m.apply_with_ancilla(x, a)))
            .collect()
    }

    pub fn record(&self, x: &CMat, kind: AncillaKind) -> Result<WitnessRecord> {
        let a = kind.ancilla_dim(self.dim);
        let n = a * self.dim;
        if x.nrows() != n || x.ncols() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                found: x.nrows(),
            });
        }
        if self.times.len() < 3 {
            return Err(Error::InvalidGrid(
                "witness trajectories need at least 3 grid points".into(),
            ));
        }
        Ok(analyze(
            x.clone(),
            kind,
            self.times.clone(),
            self.norms(x, a),
        ))
    }
}

fn analyze(
    witness: CMat,
    ancilla_kind: AncillaKind,
    times: Vec<f64>,
    norms: Vec<f64>,
) -> WitnessRecord {
    let n = times.len();
    let derivatives: Vec<f64> = (1..n - 1)
        .map(|k| (norms[k + 1] - norms[k - 1]) / (times[k + 1] - times[k - 1]))
        .collect();
    let endpoint_derivatives = [
        (norms[1] - norms[0]) / (times[1] - times[0]),
        (norms[n - 1] - norms[n - 2]) / (times[n - 1] - times[n - 2]),
    ];

    let mut best = (endpoint_derivatives[0], times[0], (times[0], times[1]));
    for (k, &dv) in derivatives.iter().enumerate() {
        if dv > best.0 {
            best = (dv, times[k + 1], (times[k], times[k + 2]));
        }
    }
    if endpoint_derivatives[1] > best.0 {
        best = (
            endpoint_derivatives[1],
            times[n - 1],
            (times[n - 2], times[n - 1]),
        );
    }

    let h = times.windows(2).map(|w| w[1] - w[0]).fold(0.0, f64::max);
    let backflow_tolerance = 10.0 * h * h;
    let max_backflow = best.0.max(0.0);
    WitnessRecord {
        witness,
        ancilla_kind,
        kinks: kinks(&times, &norms),
        times,
        norms,
        derivatives,
        endpoint_derivatives,
        max_derivative: best.0,
        max_backflow,
        max_backflow_time: best.1,
        max_backflow_bracket: best.2,
        backflow_tolerance,
        violation_found: max_backflow > backflow_tolerance,
    }
}

/// A kink between grid points inflates the second difference to `O(h)`,
/// against `O(h²)` where the norm is smooth. Flag spikes well above the
/// second differences two steps away, which the kink does not touch.
fn kinks(times: &[f64], norms: &[f64]) -> Vec<f64> {
    let n = norms.len();
    if n < 3 {
        return Vec::new();
    }
    let second: Vec<f64> = (1..n - 1)
        .map(|k| (norms[k + 1] - 2.0 * norms[k] + norms[k - 1]).abs())
        .collect();
    let scale = norms
        .iter()
        .fold(0.0, |m: f64, v| m.max(v.abs()))
        .max(f64::MIN_POSITIVE);
    (0..second.len())
        .filter(|&k| {
            let left = if k >= 2 {
                second[k - 2]
            } else {
                second[(k + 2).min(second.len() - 1)]
            };
            let right = if k + 2 < second.len() {
                second[k + 2]
            } else {
                left
            };
            second[k] > 1e-9 * scale && second[k] > 8.0 * left.max(right)
        })
        .map(|k| times[k + 1])
        .collect()
}

/// `‖Λ_t(ρ₁ − ρ₂)‖₁`, whose derivative is the BLP information flow.
pub fn blp_sigma(
    family: &MapFamily,
    rho1: &DensityMatrix,
    rho2: &DensityMatrix,
    grid: &TimeGrid,
) -> Result<WitnessRecord> {
    let x = HermitianMatrix::new(rho1.matrix() - rho2.matrix())?;
    helstrom_witness(family, &x, AncillaKind::None, grid)
}

/// `‖(𝟙_a ⊗ Λ_t)(X)‖₁` for a Hermitian `X` on the space set by the ancilla
/// kind. Read `X = p₁ρ₁ − p₂ρ₂` as a biased discrimination problem; the
/// norm is then tied to the optimal success probability.
pub fn helstrom_witness(
    family: &MapFamily,
    x: &HermitianMatrix,
    kind: AncillaKind,
    grid: &TimeGrid,
) -> Result<WitnessRecord> {
    Trajectory::new(family, grid).record(x.matrix(), kind)
}

/// `Δ = X ⊕ 0 − Tr(X)·|d⟩⟨d| ⊗ ρ_S` on `H′ ⊗ H`, `H′ = C^{d+1}` with `C^d`
/// spanned by the first `d` basis vectors. `Tr Δ = 0`, so `Δ` is a multiple of
/// a difference of two states.
pub fn embed_delta(x: &HermitianMatrix, rho_s: &DensityMatrix) -> Result<HermitianMatrix> {
    let d = rho_s.dim();
    if x.dim() != d * d {
        return Err(Error::DimensionMismatch {
            expected: d * d,
            found: x.dim(),
        });
    }
    let n = (d + 1) * d;
    let mut delta = linalg::zeros(n, n);
    delta.view_mut((0, 0), (d * d, d * d)).copy_from(x.matrix());
    let tr = x.trace();
    delta
        .view_mut((d * d, d * d), (d, d))
        .copy_from(&rho_s.matrix().scale(-tr));
    Ok(HermitianMatrix::from_hermitian_part(&delta))
}

/// `X = p₁ρ₁ − p₂ρ₂` from the positive and negative parts of `X`. A vanishing
/// part is returned as the maximally mixed state with weight zero.
pub fn helstrom_decomposition(
    x: &HermitianMatrix,
) -> Result<(f64, DensityMatrix, f64, DensityMatrix)> {
    let n = x.dim();
    let part = |sign: f64| -> Result<(f64, DensityMatrix)> {
        let m = linalg::hermitian_fn(x.matrix(), |v| (sign * v).max(0.0));
        let p = linalg::trace(&m).re;
        if p <= 1e-300 {
            return Ok((0.0, DensityMatrix::maximally_mixed(n)));
        }
        Ok((p, DensityMatrix::new(m.scale(1.0 / p))?))
    };
    let (p1, rho1) = part(1.0)?;
    let (p2, rho2) = part(-1.0)?;
    Ok((p1, rho1, p2, rho2))
}

/// `‖(𝟙_{d+1} ⊗ Λ_t)(ρ₁ − ρ₂)‖₁` for states on `H′ ⊗ H`.
pub fn bogna_witness(
    family: &MapFamily,
    rho1: &DensityMatrix,
    rho2: &DensityMatrix,
    grid: &TimeGrid,
) -> Result<WitnessRecord> {
    let n = (family.dim() + 1) * family.dim();
    for rho in [rho1, rho2] {
        if rho.dim() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                found: rho.dim(),
            });
        }
    }
    let x = HermitianMatrix::new(rho1.matrix() - rho2.matrix())?;
    helstrom_witness(family, &x, AncillaKind::DPlus1, grid)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScanOptions {
    pub ancilla_kind: AncillaKind,
    pub n_samples: usize,
    pub n_refine: usize,
    pub seed: u64,
}

impl Default for ScanOptions {
    fn default() -> Self {
        Self {
            ancilla_kind: AncillaKind::D,
            n_samples: 64,
            n_refine: 32,
            seed: 0,
        }
    }
}

/// GUE sample normalized to unit trace norm.
fn sample_witness(rng: &mut ChaCha8Rng, n: usize) -> CMat {
    normalize(linalg::random_hermitian(rng, n))
}

fn normalize(x: CMat) -> CMat {
    let norm = trace_norm_unchecked(&x);
    x.scale(1.0 / norm.max(f64::MIN_POSITIVE))
}

fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Random search for the witness with the largest derivative, followed by
/// hill climbing on the best sample (perturbation scale halved on failure).
/// Witness `i` draws from stream `i` of the seed, the refinement from stream
/// `n_samples`, so results do not depend on scheduling.
pub fn witness_scan(
    family: &MapFamily,
    grid: &TimeGrid,
    opts: &ScanOptions,
) -> Result<WitnessRecord> {
    if opts.n_samples == 0 {
        return Err(Error::Config("witness scan needs n_samples >= 1".into()));
    }
    let traj = Trajectory::new(family, grid);
    let n = opts.ancilla_kind.ancilla_dim(traj.dim) * traj.dim;
    let records: Vec<WitnessRecord> = (0..opts.n_samples)
        .into_par_iter()
        .map(|i| {
            traj.record(
                &sample_witness(&mut stream_rng(opts.seed, i as u64), n),
                opts.ancilla_kind,
            )
        })
        .collect::<Result<_>>()?;
    // First index wins ties.
    let mut best = records
        .into_iter()
        .reduce(|a, b| {
            if b.max_derivative > a.max_derivative {
                b
            } else {
                a
            }
        })
        .unwrap();

    let mut rng = stream_rng(opts.seed, opts.n_samples as u64);
    let mut step = 0.5;
    for _ in 0..opts.n_refine {
        let trial = normalize(&best.witness + sample_witness(&mut rng, n).scale(step));
        let rec = traj.record(&trial, opts.ancilla_kind)?;
        if rec.max_derivative > best.max_derivative {
            best = rec;
        } else {
            step *= 0.5;
        }
    }
    Ok(best)
}

#[cfg(test)]
mod tests {
    use std::f64::consts::{FRAC_PI_2, PI};

    use proptest::prelude::*;

    use super::*;
    use crate::dynamics::{preset_amplitude_damping, DampingFunction, ScalarSignal};
    use crate::linalg::sigma_x;
    use crate::superop::maximally_entangled;

    fn decay() -> MapFamily {
        preset_amplitude_damping(
            DampingFunction::Direct(ScalarSignal::ExpDecay { rate: 0.5 }),
            4.0,
        )
        .unwrap()
    }

    fn sin_rate() -> MapFamily {
        let rate = ScalarSignal::Sinusoidal {
            amplitude: 1.0,
            omega: 1.0,
            phase: 0.0,
            offset: 0.0,
        };
        preset_amplitude_damping(
            DampingFunction::Rates {
                rate,
                detuning: None,
            },
            2.0 * PI,
        )
        .unwrap()
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

    fn plus_minus() -> (DensityMatrix, DensityMatrix) {
        let half = |s: f64| {
            DensityMatrix::new((linalg::identity(2) + sigma_x().scale(s)).scale(0.5)).unwrap()
        };
        (half(1.0), half(-1.0))
    }

    #[test]
    fn blp_examples() {
        let grid = TimeGrid::uniform(4.0, 201).unwrap();
        let (p, m) = plus_minus();
        let same = blp_sigma(&decay(), &p, &p, &grid).unwrap();
        assert!(same.norms.iter().all(|&v| v == 0.0));

        let rec = blp_sigma(&decay(), &p, &m, &grid).unwrap();
        for (t, v) in rec.times.iter().zip(&rec.norms) {
            assert!((v - 2.0 * (-0.5 * t).exp()).abs() < 1e-12);
        }
        assert!(rec.derivatives.iter().all(|&d| d < 0.0));
        assert_eq!(rec.derivatives.len(), rec.times.len() - 2);

        let grid = TimeGrid::uniform(2.0 * PI, 401).unwrap();
        let rec = blp_sigma(&sin_rate(), &p, &m, &grid).unwrap();
        assert!(rec.violation_found);
        assert!(rec.max_backflow_time > PI && rec.max_backflow_time < 2.0 * PI);
    }

    #[test]
    fn helstrom_examples() {
        let grid = TimeGrid::uniform(2.0 * PI, 401).unwrap();
        let zero = HermitianMatrix::zeros(4);
        assert!(helstrom_witness(&decay(), &zero, AncillaKind::D, &grid)
            .unwrap()
            .norms
            .iter()
            .all(|&v| v == 0.0));

        let omega = HermitianMatrix::new(maximally_entangled(2)).unwrap();
        let rec = helstrom_witness(&decay(), &omega, AncillaKind::D, &grid).unwrap();
        assert!((rec.norms[0] - 1.0).abs() < 1e-12);
        assert!(rec.max_backflow <= 1e-12);

        let x =
            HermitianMatrix::new(maximally_entangled(2) - linalg::identity(4).scale(0.25)).unwrap();
        let rec = helstrom_witness(&sin_rate(), &x, AncillaKind::D, &grid).unwrap();
        assert!(rec.max_backflow > 1e-3);
        assert!(rec.max_backflow_time > PI && rec.max_backflow_time < 2.0 * PI);

        assert!(matches!(
            helstrom_witness(&decay(), &omega, AncillaKind::None, &grid),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn delta_examples() {
        let rho_s = DensityMatrix::maximally_mixed(2);
        let traceless = HermitianMatrix::new(linalg::kron(&sigma_x(), &linalg::sigma_z())).unwrap();
        let delta = embed_delta(&traceless, &rho_s).unwrap();
        assert_eq!(delta.dim(), 6);
        assert!(linalg::max_abs(&delta.matrix().view((4, 0), (2, 6)).into_owned()) == 0.0);

        let omega = HermitianMatrix::new(maximally_entangled(2)).unwrap();
        let delta = embed_delta(&omega, &rho_s).unwrap();
        assert!(delta.trace().abs() < 1e-15);
        assert!((delta.matrix()[(4, 4)].re + 0.5).abs() < 1e-15);
        assert!(linalg::max_abs(&(delta.matrix().view((0, 0), (4, 4)) - omega.matrix())) == 0.0);
    }

    #[test]
    fn bogna_pair_from_delta_matches_helstrom_plus_trace() {
        let grid = TimeGrid::uniform(3.0, 31).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x = HermitianMatrix::new(linalg::random_hermitian(&mut rng, 4)).unwrap();
        let rho_s = DensityMatrix::new(linalg::random_density(&mut rng, 2)).unwrap();
        let delta = embed_delta(&x, &rho_s).unwrap();
        let (p1, rho1, p2, rho2) = helstrom_decomposition(&delta).unwrap();
        assert!((p1 - p2).abs() < 1e-12);
        let bogna = bogna_witness(&clipped(), &rho1, &rho2, &grid).unwrap();
        let helstrom = helstrom_witness(&clipped(), &x, AncillaKind::D, &grid).unwrap();
        for (b, h) in bogna.norms.iter().zip(&helstrom.norms) {
            assert!((p1 * b - h - x.trace().abs()).abs() < 1e-9);
        }
        assert!(matches!(
            bogna_witness(&clipped(), &rho_s, &rho_s, &grid),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn cp_divisible_decay_has_no_bogna_backflow() {
        let grid = TimeGrid::uniform(4.0, 201).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let r1 = DensityMatrix::new(linalg::random_density(&mut rng, 6)).unwrap();
        let r2 = DensityMatrix::new(linalg::random_density(&mut rng, 6)).unwrap();
        assert!(
            bogna_witness(&decay(), &r1, &r2, &grid)
                .unwrap()
                .max_backflow
                <= 1e-6
        );
    }

    #[test]
    fn scan_examples() {
        let grid = TimeGrid::uniform(2.0, 101).unwrap();
        let id = MapFamily::identity(2, 2.0);
        for seed in [0, 1, 99] {
            let rec = witness_scan(
                &id,
                &grid,
                &ScanOptions {
                    seed,
                    n_samples: 8,
                    n_refine: 4,
                    ..Default::default()
                },
            )
            .unwrap();
            assert!(rec.max_backflow <= 1e-10);
        }

        let grid = TimeGrid::uniform(2.0 * PI, 401).unwrap();
        let rec = witness_scan(&sin_rate(), &grid, &ScanOptions::default()).unwrap();
        assert!(rec.max_backflow > 1e-3);
        assert!(rec.max_backflow_time > PI && rec.max_backflow_time < 2.0 * PI);

        let grid = TimeGrid::uniform(3.0, 401).unwrap();
        let rec = witness_scan(&clipped(), &grid, &ScanOptions::default()).unwrap();
        assert!(rec.max_backflow <= 1e-6);
        assert!(!rec.violation_found);

        assert!(witness_scan(
            &id,
            &grid,
            &ScanOptions {
                n_samples: 0,
                ..Default::default()
            }
        )
        .is_err());
    }

    #[test]
    fn scan_is_deterministic() {
        let grid = TimeGrid::uniform(2.0 * PI, 101).unwrap();
        let opts = ScanOptions {
            n_samples: 16,
            n_refine: 8,
            seed: 42,
            ..Default::default()
        };
        let a = witness_scan(&sin_rate(), &grid, &opts).unwrap();
        let b = rayon::ThreadPoolBuilder::new()
            .num_threads(1)
            .build()
            .unwrap()
            .install(|| witness_scan(&sin_rate(), &grid, &opts).unwrap());
        assert_eq!(a.witness, b.witness);
        assert_eq!(a.norms, b.norms);
    }

    #[test]
    fn clipped_decay_has_a_kink_at_zero_crossing() {
        let grid = TimeGrid::uniform(3.0, 301).unwrap();
        let (p, m) = plus_minus();
        let rec = blp_sigma(&clipped(), &p, &m, &grid).unwrap();
        assert!(
            rec.kinks.iter().any(|&t| (t - FRAC_PI_2).abs() < 0.03),
            "kinks: {:?}",
            rec.kinks
        );
        assert!(rec.kinks.iter().all(|&t| (t - FRAC_PI_2).abs() < 0.03));
    }

    #[test]
    fn refined_grid_does_not_lose_backflow() {
        let x =
            HermitianMatrix::new(maximally_entangled(2) - linalg::identity(4).scale(0.25)).unwrap();
        let coarse = helstrom_witness(
            &sin_rate(),
            &x,
            AncillaKind::D,
            &TimeGrid::uniform(2.0 * PI, 101).unwrap(),
        )
        .unwrap();
        let fine = helstrom_witness(
            &sin_rate(),
            &x,
            AncillaKind::D,
            &TimeGrid::uniform(2.0 * PI, 401).unwrap(),
        )
        .unwrap();
        assert!(fine.max_backflow >= coarse.max_backflow - 1e-6 - coarse.backflow_tolerance);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn norms_are_absolutely_homogeneous(seed in any::<u64>(), c in 0.01f64..10.0) {
            let grid = TimeGrid::uniform(2.0 * PI, 41).unwrap();
            let traj = Trajectory::new(&sin_rate(), &grid);
            let x = linalg::random_hermitian(&mut ChaCha8Rng::seed_from_u64(seed), 4);
            let base = traj.norms(&x, 2);
            let neg = traj.norms(&(-&x), 2);
            let scaled = traj.norms(&x.scale(c), 2);
            for k in 0..base.len() {
                prop_assert!(base[k] >= 0.0);
                prop_assert!((neg[k] - base[k]).abs() <= 1e-12 * base[k].max(1.0));
                prop_assert!((scaled[k] - c * base[k]).abs() <= 1e-10 * c * base[k].max(1.0));
            }
        }

        #[test]
        fn blp_is_helstrom_without_ancilla(seed in any::<u64>()) {
            let grid = TimeGrid::uniform(2.0 * PI, 41).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let r1 = DensityMatrix::new(linalg::random_density(&mut rng, 2)).unwrap();
            let r2 = DensityMatrix::new(linalg::random_density(&mut rng, 2)).unwrap();
            let blp = blp_sigma(&sin_rate(), &r1, &r2, &grid).unwrap();
            let x = HermitianMatrix::new(r1.matrix() - r2.matrix()).unwrap();
            let h = helstrom_witness(&sin_rate(), &x, AncillaKind::None, &grid).unwrap();
            for (a, b) in blp.norms.iter().zip(&h.norms) {
                prop_assert!((a - b).abs() <= 1e-12);
            }
        }

        #[test]
        fn delta_splits_the_norm(seed in any::<u64>()) {
            let grid = TimeGrid::uniform(3.0, 21).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let x = HermitianMatrix::new(linalg::random_hermitian(&mut rng, 4)).unwrap();
            let rho_s = DensityMatrix::new(linalg::random_density(&mut rng, 2)).unwrap();
            let delta = embed_delta(&x, &rho_s).unwrap();
            prop_assert!(delta.trace().abs() < 1e-12);
            let traj = Trajectory::new(&clipped(), &grid);
            let big = traj.norms(delta.matrix(), 3);
            let small = traj.norms(x.matrix(), 2);
            for (b, s) in big.iter().zip(&small) {
                prop_assert!((b - s - x.trace().abs()).abs() < 1e-9);
            }
        }
    }
}
