use std::fmt;
use std::sync::Arc;

use num_complex::Complex64;
use serde::Serialize;

use super::signal::ScalarSignal;
use crate::error::{Error, Result};
use crate::linalg::{self, c, CMat};
use crate::operator::DensityMatrix;
use crate::superop::Superoperator;

pub type Evaluator = Arc<dyn Fn(f64) -> Superoperator + Send + Sync>;

/// Number of uniformly spaced points used to validate presets on their domain.
const VALIDATION_POINTS: usize = 2001;

/// Parameterization of the amplitude-damping function `G(t)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum DampingFunction {
    /// `G(t)` given directly (real).
    Direct(ScalarSignal),
    /// `G(t) = exp(−½ ∫(γ + i s))` from a decay rate and optional detuning.
    Rates {
        rate: ScalarSignal,
        detuning: Option<ScalarSignal>,
    },
}

impl DampingFunction {
    pub fn value(&self, t: f64) -> Complex64 {
        match self {
            Self::Direct(g) => c(g.value(t), 0.0),
            Self::Rates { rate, detuning } => {
                let gamma = rate.integral(t);
                let phase = detuning.as_ref().map_or(0.0, |s| s.integral(t));
                if gamma == f64::INFINITY {
                    return c(0.0, 0.0);
                }
                Complex64::from_polar((-0.5 * gamma).exp(), -0.5 * phase)
            }
        }
    }
}

/// The three Pauli eigenvalues, either directly or from rates via
/// `λ_i = exp(−Γ_j − Γ_k)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum PauliEigenvalues {
    Direct([ScalarSignal; 3]),
    Rates([ScalarSignal; 3]),
}

impl PauliEigenvalues {
    pub fn values(&self, t: f64) -> [f64; 3] {
        match self {
            Self::Direct(l) => [l[0].value(t), l[1].value(t), l[2].value(t)],
            Self::Rates(g) => {
                let big: Vec<f64> = g.iter().map(|s| s.integral(t)).collect();
                [
                    (-big[1] - big[2]).exp(),
                    (-big[0] - big[2]).exp(),
                    (-big[0] - big[1]).exp(),
                ]
            }
        }
    }
}

#[derive(Debug, Clone, Serialize)]
#[serde(tag = "preset", rename_all = "snake_case")]
pub enum FamilyKind {
    AmplitudeDamping {
        g: DampingFunction,
    },
    PauliChannel {
        eigenvalues: PauliEigenvalues,
    },
    EquilibriumRelaxation {
        #[serde(with = "crate::io::matrix_json")]
        omega: CMat,
        f: ScalarSignal,
    },
    Integrated {
        step: f64,
        discrepancy: f64,
    },
    Custom {
        name: String,
    },
}

/// A time-parameterized family `t ↦ Λ_t` on the domain `[0, t_max]`.
#[derive(Clone)]
pub struct MapFamily {
    dim: usize,
    t_max: f64,
    kind: FamilyKind,
    eval: Evaluator,
}

impl fmt::Debug for MapFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("MapFamily")
            .field("dim", &self.dim)
            .field("t_max", &self.t_max)
            .field("kind", &self.kind)
            .finish()
    }
}

impl MapFamily {
    /// A family from an arbitrary evaluator. No dynamical-map checks are made.
    pub fn custom(
        dim: usize,
        t_max: f64,
        name: &str,
        eval: impl Fn(f64) -> Superoperator + Send + Sync + 'static,
    ) -> Self {
        Self {
            dim,
            t_max,
            kind: FamilyKind::Custom {
                name: name.to_string(),
            },
            eval: Arc::new(eval),
        }
    }

    pub(crate) fn from_parts(dim: usize, t_max: f64, kind: FamilyKind, eval: Evaluator) -> Self {
        Self {
            dim,
            t_max,
            kind,
            eval,
        }
    }

    pub fn identity(dim: usize, t_max: f64) -> Self {
        Self::custom(dim, t_max, "identity", move |_| {
            Superoperator::identity(dim)
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn t_max(&self) -> f64 {
        self.t_max
    }

    pub fn kind(&self) -> &FamilyKind {
        &self.kind
    }

    pub fn evaluate(&self, t: f64) -> Superoperator {
        (self.eval)(t)
    }

    /// Checks `Λ_0 = 𝟙` and CPTP at each given time.
    pub fn check_dynamical_map(&self, times: &[f64], tol: f64) -> Result<()> {
        let dist = self
            .evaluate(0.0)
            .distance(&Superoperator::identity(self.dim));
        if dist > 1e-10 {
            return Err(Error::InvalidMap {
                time: 0.0,
                reason: format!("Λ_0 differs from identity by {dist:.3e}"),
            });
        }
        for &t in times {
            let map = self.evaluate(t);
            let (cp, min) = map.is_cp(tol);
            if !cp {
                return Err(Error::InvalidMap {
                    time: t,
                    reason: format!("not CP (min Choi eigenvalue {min:.3e})"),
                });
            }
            let (tp, res) = map.is_tp(tol);
            if !tp {
                return Err(Error::InvalidMap {
                    time: t,
                    reason: format!("not TP (residual {res:.3e})"),
                });
            }
        }
        Ok(())
    }
}

fn validation_times(t_max: f64) -> impl Iterator<Item = f64> {
    (0..VALIDATION_POINTS).map(move |k| t_max * k as f64 / (VALIDATION_POINTS - 1) as f64)
}

/// Qubit amplitude damping with the excited state first: `ρ₀₀ ↦ |G|²ρ₀₀`,
/// `ρ₀₁ ↦ Gρ₀₁`, `ρ₁₁ ↦ (1−|G|²)ρ₀₀ + ρ₁₁`. The ground state is `P₀ = |1⟩⟨1|`.
pub fn amplitude_damping_natural(g: Complex64) -> CMat {
    let mut n = linalg::zeros(4, 4);
    let g2 = g.norm_sqr();
    n[(0, 0)] = c(g2, 0.0);
    n[(2, 2)] = g;
    n[(1, 1)] = g.conj();
    n[(3, 0)] = c(1.0 - g2, 0.0);
    n[(3, 3)] = c(1.0, 0.0);
    n
}

/// Ground-state projector `P₀ = σ₋σ₊` in the amplitude-damping convention.
pub fn ground_state() -> CMat {
    linalg::unit(2, 1, 1)
}

pub fn preset_amplitude_damping(g: DampingFunction, t_max: f64) -> Result<MapFamily> {
    if let DampingFunction::Direct(s) = &g {
        s.validate()?;
    }
    if let DampingFunction::Rates { rate, detuning } = &g {
        rate.validate()?;
        if let Some(s) = detuning {
            s.validate()?;
        }
    }
    let g0 = g.value(0.0);
    if (g0 - c(1.0, 0.0)).norm() > 1e-12 {
        return Err(Error::InvalidMap {
            time: 0.0,
            reason: format!("G(0) = {g0} must equal 1"),
        });
    }
    for t in validation_times(t_max) {
        let v = g.value(t);
        if !(v.norm() <= 1.0 + 1e-12) {
            return Err(Error::InvalidMap {
                time: t,
                reason: format!("|G(t)| = {} exceeds 1; map not CP", v.norm()),
            });
        }
    }
    let kind = FamilyKind::AmplitudeDamping { g: g.clone() };
    Ok(MapFamily::from_parts(
        2,
        t_max,
        kind,
        Arc::new(move |t| {
            Superoperator::from_natural(2, amplitude_damping_natural(g.value(t))).expect("4×4")
        }),
    ))
}

/// `N = ½ Σ_α λ_α vec(σ_α) vec(σ_α)ᴴ` with `λ_0 = 1`.
pub fn pauli_natural(lambda: [f64; 3]) -> CMat {
    let p = linalg::paulis();
    let mut n = linalg::zeros(4, 4);
    for (a, s) in p.iter().enumerate() {
        let weight = if a == 0 { 1.0 } else { lambda[a - 1] };
        let v = linalg::vectorize(s);
        n += (&v * v.adjoint()).scale(0.5 * weight);
    }
    n
}

pub fn preset_pauli_channel(eigenvalues: PauliEigenvalues, t_max: f64) -> Result<MapFamily> {
    match &eigenvalues {
        PauliEigenvalues::Direct(s) | PauliEigenvalues::Rates(s) => {
            s.iter().try_for_each(ScalarSignal::validate)?
        }
    }
    let l0 = eigenvalues.values(0.0);
    if l0.iter().any(|l| (l - 1.0).abs() > 1e-12) {
        return Err(Error::InvalidMap {
            time: 0.0,
            reason: format!("λ(0) = {l0:?} must be all ones"),
        });
    }
    for t in validation_times(t_max) {
        let [l1, l2, l3] = eigenvalues.values(t);
        // Pauli-channel probabilities must be nonnegative for CP.
        let p = [
            1.0 + l1 + l2 + l3,
            1.0 + l1 - l2 - l3,
            1.0 - l1 + l2 - l3,
            1.0 - l1 - l2 + l3,
        ];
        let min = p.iter().copied().fold(f64::INFINITY, f64::min) / 4.0;
        if !(min >= -1e-12) {
            return Err(Error::InvalidMap {
                time: t,
                reason: format!("Pauli weight {min:.3e} < 0; map not CP"),
            });
        }
    }
    let kind = FamilyKind::PauliChannel {
        eigenvalues: eigenvalues.clone(),
    };
    Ok(MapFamily::from_parts(
        2,
        t_max,
        kind,
        Arc::new(move |t| {
            Superoperator::from_natural(2, pauli_natural(eigenvalues.values(t))).expect("4×4")
        }),
    ))
}

/// `Λ_t ρ = (1 − F(t)) ρ + F(t) ω Tr(ρ)`.
pub fn preset_equilibrium_relaxation(
    omega: DensityMatrix,
    f: ScalarSignal,
    t_max: f64,
) -> Result<MapFamily> {
    f.validate()?;
    if f.value(0.0).abs() > 1e-12 {
        return Err(Error::InvalidMap {
            time: 0.0,
            reason: format!("F(0) = {} must be 0", f.value(0.0)),
        });
    }
    for t in validation_times(t_max) {
        let v = f.value(t);
        if !(-1e-12..=1.0 + 1e-12).contains(&v) {
            return Err(Error::InvalidMap {
                time: t,
                reason: format!("F(t) = {v} outside [0, 1]"),
            });
        }
    }
    let d = omega.dim();
    let om = omega.matrix().clone();
    let replace = Superoperator::replacement(&om);
    let kind = FamilyKind::EquilibriumRelaxation {
        omega: om,
        f: f.clone(),
    };
    Ok(MapFamily::from_parts(
        d,
        t_max,
        kind,
        Arc::new(move |t| {
            let v = f.value(t);
            Superoperator::identity(d)
                .scale(1.0 - v)
                .add(&replace.scale(v))
                .expect("same dim")
        }),
    ))
}
