use std::f64::consts::{FRAC_PI_2, PI};

use markovlens::divisibility::{
    cp_divisibility_verdict, DivisibilityVerdict, TimeGrid, Tolerances, VerdictStatus,
};
use markovlens::dynamics::family::{ground_state, pauli_natural};
use markovlens::dynamics::{
    preset_amplitude_damping, preset_equilibrium_relaxation, preset_pauli_channel, DampingFunction,
    MapFamily, PauliEigenvalues, ScalarSignal,
};
use markovlens::linalg::{self, sigma_x};
use markovlens::{DensityMatrix, Superoperator};

fn verdict(family: &MapFamily, n: usize) -> DivisibilityVerdict {
    let grid = TimeGrid::uniform(family.t_max(), n).unwrap();
    cp_divisibility_verdict(family, &grid, &Tolerances::default()).unwrap()
}

fn direct_ad(signal: ScalarSignal, t_max: f64) -> MapFamily {
    preset_amplitude_damping(DampingFunction::Direct(signal), t_max).unwrap()
}

#[test]
fn markovian_decay_is_cp_divisible() {
    let v = verdict(&direct_ad(ScalarSignal::ExpDecay { rate: 1.0 }, 3.0), 61);
    assert_eq!(v.status, VerdictStatus::CpDivisible);
    assert!(v.invertible_everywhere);
}

#[test]
fn oscillating_rate_breaks_cp_divisibility() {
    let rate = ScalarSignal::Sinusoidal {
        amplitude: 1.0,
        omega: 1.0,
        phase: 0.0,
        offset: 0.0,
    };
    let family = preset_amplitude_damping(
        DampingFunction::Rates {
            rate,
            detuning: None,
        },
        2.0 * PI,
    )
    .unwrap();
    let v = verdict(&family, 121);
    assert_ne!(v.status, VerdictStatus::CpDivisible);
    assert!(v.worst_min_choi_eigenvalue.unwrap() < -1e-4);
}

#[test]
fn positive_but_not_cp_pauli_family() {
    let family = MapFamily::custom(2, 2.0, "p_divisible_pauli", |t| {
        let e = (-2.0 * t).exp();
        let l = 0.5 * (1.0 + e);
        Superoperator::from_natural(2, pauli_natural([l, l, e])).unwrap()
    });
    let v = verdict(&family, 41);
    assert_eq!(v.status, VerdictStatus::PDivisible);
    assert!(v.positivity.as_ref().unwrap().positive);
}

#[test]
fn two_stage_pauli_is_cp_divisible() {
    let knots = |k: Vec<[f64; 2]>| ScalarSignal::PiecewiseLinear { knots: k };
    let eig = PauliEigenvalues::Direct([
        knots(vec![[0.0, 1.0], [1.0, 0.0]]),
        knots(vec![[0.0, 1.0], [1.0, 0.0]]),
        knots(vec![[0.0, 1.0], [1.0, 1.0], [2.0, 0.0]]),
    ]);
    let v = verdict(&preset_pauli_channel(eig, 2.0).unwrap(), 41);
    assert_eq!(v.status, VerdictStatus::CpDivisible);
    assert!(!v.invertible_everywhere);
}

#[test]
fn clipped_decay_is_cp_divisible() {
    let v = verdict(
        &direct_ad(
            ScalarSignal::CosineClipped {
                omega: 1.0,
                t_star: FRAC_PI_2,
            },
            3.0,
        ),
        61,
    );
    assert_eq!(v.status, VerdictStatus::CpDivisible);
    assert_eq!(v.rank_profile.breakpoints.len(), 1);
}

#[test]
fn revival_after_zero_is_not_divisible() {
    let v = verdict(
        &direct_ad(
            ScalarSignal::Sinusoidal {
                amplitude: 1.0,
                omega: 1.0,
                phase: FRAC_PI_2,
                offset: 0.0,
            },
            3.0,
        ),
        61,
    );
    assert_eq!(v.status, VerdictStatus::NotDivisible);
    assert!(v.first_kernel_violation.is_some());
}

#[test]
fn relaxation_to_equilibrium() {
    let omega = DensityMatrix::new(ground_state()).unwrap();
    let ramp = ScalarSignal::PiecewiseLinear {
        knots: vec![[0.0, 0.0], [1.0, 1.0]],
    };
    let v = verdict(
        &preset_equilibrium_relaxation(omega.clone(), ramp, 2.0).unwrap(),
        41,
    );
    assert_eq!(v.status, VerdictStatus::CpDivisible);

    let dip = ScalarSignal::PiecewiseLinear {
        knots: vec![[0.0, 0.0], [1.0, 1.0], [1.5, 0.8], [2.0, 1.0]],
    };
    let v = verdict(&preset_equilibrium_relaxation(omega, dip, 2.0).unwrap(), 41);
    assert_eq!(v.status, VerdictStatus::NotDivisible);
}

#[test]
fn rotating_image_is_cp_on_image_only() {
    let family = MapFamily::custom(2, 2.0, "rotating_image", |t| {
        let collapse = Superoperator::replacement(&ground_state());
        if t < 1.0 {
            Superoperator::identity(2)
                .scale(1.0 - t)
                .add(&collapse.scale(t))
                .unwrap()
        } else {
            let theta = t - 1.0;
            let u =
                linalg::identity(2).scale(theta.cos()) - sigma_x() * linalg::c(0.0, theta.sin());
            Superoperator::replacement(&(&u * ground_state() * u.adjoint()))
        }
    });
    let v = verdict(&family, 41);
    assert_eq!(v.status, VerdictStatus::CpOnImageOnly);
    // Same rank, different subspace: the image is not nested.
    assert_eq!(v.image_nonincreasing, Some(false));
    assert!(v.image_extension.unwrap().all_extendable);
}
