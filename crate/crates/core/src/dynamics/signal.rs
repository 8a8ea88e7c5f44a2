use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Scalar time signals used as map parameters (`G(t)`, `F(t)`, `λ_i(t)`) or
/// as rates (`γ_k(t)`), with closed-form integrals from 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ScalarSignal {
    /// `e^{−rate·t}`
    ExpDecay {
        rate: f64,
    },
    /// `cos(ω t)` for `t < t_star`, exactly 0 afterwards.
    CosineClipped {
        omega: f64,
        t_star: f64,
    },
    /// Linear interpolation through `[t, value]` knots, constant outside.
    PiecewiseLinear {
        knots: Vec<[f64; 2]>,
    },
    /// `1/(t1 − t)` for `t < t1`, `+∞` afterwards.
    InverseGap {
        t1: f64,
    },
    /// `offset + amplitude·sin(ω t + phase)`
    Sinusoidal {
        amplitude: f64,
        omega: f64,
        #[serde(default)]
        phase: f64,
        #[serde(default)]
        offset: f64,
    },
    Constant {
        value: f64,
    },
}

impl ScalarSignal {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidSignal(msg));
        match self {
            Self::ExpDecay { rate } if !rate.is_finite() => bad(format!("exp_decay rate {rate}")),
            Self::CosineClipped { omega, t_star } if !(omega.is_finite() && t_star.is_finite()) => {
                bad("cosine_clipped parameters must be finite".into())
            }
            Self::PiecewiseLinear { knots } => {
                if knots.is_empty() {
                    return bad("piecewise_linear needs at least one knot".into());
                }
                if knots
                    .iter()
                    .any(|k| !(k[0].is_finite() && k[1].is_finite()))
                {
                    return bad("piecewise_linear knots must be finite".into());
                }
                if knots.windows(2).any(|w| w[1][0] <= w[0][0]) {
                    return bad("piecewise_linear knot times must be strictly increasing".into());
                }
                Ok(())
            }
            Self::InverseGap { t1 } if !(t1.is_finite() && *t1 > 0.0) => {
                bad(format!("inverse_gap t1 = {t1} must be > 0"))
            }
            Self::Sinusoidal {
                amplitude,
                omega,
                phase,
                offset,
            } if ![amplitude, omega, phase, offset]
                .iter()
                .all(|v| v.is_finite()) =>
            {
                bad("sinusoidal parameters must be finite".into())
            }
            Self::Constant { value } if !value.is_finite() => bad(format!("constant {value}")),
            _ => Ok(()),
        }
    }

    pub fn value(&self, t: f64) -> f64 {
        match self {
            Self::ExpDecay { rate } => (-rate * t).exp(),
            Self::CosineClipped { omega, t_star } => {
                if t < *t_star {
                    (omega * t).cos()
                } else {
                    0.0
                }
            }
            Self::PiecewiseLinear { knots } => interpolate(knots, t),
            Self::InverseGap { t1 } => {
                if t < *t1 {
                    1.0 / (t1 - t)
                } else {
                    f64::INFINITY
                }
            }
            Self::Sinusoidal {
                amplitude,
                omega,
                phase,
                offset,
            } => offset + amplitude * (omega * t + phase).sin(),
            Self::Constant { value } => *value,
        }
    }

    /// `∫_0^t value(τ) dτ`; may be `+∞` for `inverse_gap` at or past `t1`.
    pub fn integral(&self, t: f64) -> f64 {
        match self {
            Self::ExpDecay { rate } => {
                if rate.abs() < 1e-300 {
                    t
                } else {
                    -(-rate * t).exp_m1() / rate
                }
            }
            Self::CosineClipped { omega, t_star } => {
                let end = t.min(*t_star);
                if omega.abs() < 1e-300 {
                    end
                } else {
                    (omega * end).sin() / omega
                }
            }
            Self::PiecewiseLinear { knots } => integrate_piecewise(knots, t),
            Self::InverseGap { t1 } => {
                if t < *t1 {
                    -(-t / t1).ln_1p()
                } else {
                    f64::INFINITY
                }
            }
            Self::Sinusoidal {
                amplitude,
                omega,
                phase,
                offset,
            } => {
                let osc = if omega.abs() < 1e-300 {
                    amplitude * phase.sin() * t
                } else {
                    amplitude * (phase.cos() - (omega * t + phase).cos()) / omega
                };
                offset * t + osc
            }
            Self::Constant { value } => value * t,
        }
    }
}

fn interpolate(knots: &[[f64; 2]], t: f64) -> f64 {
    let first = knots[0];
    let last = knots[knots.len() - 1];
    if t <= first[0] {
        return first[1];
    }
    if t >= last[0] {
        return last[1];
    }
    let idx = knots.partition_point(|k| k[0] <= t);
    let (a, b) = (knots[idx - 1], knots[idx]);
    let w = (t - a[0]) / (b[0] - a[0]);
    a[1] + w * (b[1] - a[1])
}

/// Exact integral of the piecewise-linear interpolant from 0 to `t`.
fn integrate_piecewise(knots: &[[f64; 2]], t: f64) -> f64 {
    let (lo, hi, sign) = if t >= 0.0 {
        (0.0, t, 1.0)
    } else {
        (t, 0.0, -1.0)
    };
    let mut points = vec![lo];
    points.extend(knots.iter().map(|k| k[0]).filter(|&x| x > lo && x < hi));
    points.push(hi);
    let total: f64 = points
        .windows(2)
        .map(|w| 0.5 * (w[1] - w[0]) * (interpolate(knots, w[0]) + interpolate(knots, w[1])))
        .sum();
    sign * total
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::FRAC_PI_2;

    /// Composite Simpson quadrature, used as an independent check on the
    /// closed-form integrals.
    fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
        let n = n + n % 2;
        let h = (b - a) / n as f64;
        let mut s = f(a) + f(b);
        for k in 1..n {
            s += f(a + k as f64 * h) * if k % 2 == 1 { 4.0 } else { 2.0 };
        }
        s * h / 3.0
    }

    #[test]
    fn closed_form_integrals_match_quadrature() {
        let signals = [
            ScalarSignal::ExpDecay { rate: 0.7 },
            ScalarSignal::CosineClipped {
                omega: 1.0,
                t_star: FRAC_PI_2,
            },
            ScalarSignal::Sinusoidal {
                amplitude: 1.0,
                omega: 1.3,
                phase: 0.2,
                offset: 0.1,
            },
            ScalarSignal::Constant { value: 2.5 },
            ScalarSignal::InverseGap { t1: 1.0 },
        ];
        for s in &signals {
            for &t in &[0.1, 0.5, 0.9] {
                let q = simpson(|x| s.value(x), 0.0, t, 20_000);
                assert!((s.integral(t) - q).abs() < 1e-9, "{s:?} at {t}");
            }
        }
        // Piecewise-linear: Simpson on each linear piece is exact.
        let pl = ScalarSignal::PiecewiseLinear {
            knots: vec![[0.0, 1.0], [1.0, 0.0], [2.0, 0.5]],
        };
        let q = simpson(|x| pl.value(x), 0.0, 1.0, 2)
            + simpson(|x| pl.value(x), 1.0, 2.0, 2)
            + 0.5 * 0.5;
        assert!((pl.integral(2.5) - q).abs() < 1e-14);
    }

    #[test]
    fn inverse_gap_gives_linear_eigenvalue() {
        let s = ScalarSignal::InverseGap { t1: 1.0 };
        for &t in &[0.0, 0.25, 0.5, 0.99] {
            assert!(((-s.integral(t)).exp() - (1.0 - t)).abs() < 1e-12);
        }
        assert_eq!(s.integral(1.0), f64::INFINITY);
        assert_eq!((-s.integral(1.5)).exp(), 0.0);
    }

    #[test]
    fn cosine_clipped_is_exactly_zero_after_cutoff() {
        let s = ScalarSignal::CosineClipped {
            omega: 1.0,
            t_star: FRAC_PI_2,
        };
        assert_eq!(s.value(FRAC_PI_2), 0.0);
        assert_eq!(s.value(3.0), 0.0);
        assert!((s.value(1.0) - 1f64.cos()).abs() < 1e-15);
    }

    #[test]
    fn validation_and_json() {
        assert!(ScalarSignal::PiecewiseLinear {
            knots: vec![[0.0, 0.0], [0.0, 1.0]]
        }
        .validate()
        .is_err());
        assert!(ScalarSignal::InverseGap { t1: -1.0 }.validate().is_err());
        let s: ScalarSignal = serde_json::from_str(r#"{"kind":"exp_decay","rate":0.5}"#).unwrap();
        assert_eq!(s, ScalarSignal::ExpDecay { rate: 0.5 });
        assert!(
            serde_json::from_str::<ScalarSignal>(r#"{"kind":"exp_decay","rate":0.5,"x":1}"#)
                .is_err()
        );
        assert!(serde_json::from_str::<ScalarSignal>(r#"{"kind":"bogus"}"#).is_err());
    }
}
