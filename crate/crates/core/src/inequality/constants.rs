use serde::Serialize;

use crate::error::{Error, Result};

/// Largest admissible `c₀` and the resulting coercivity constant `γ`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CoercivityConstants {
    pub c0_max: f64,
    pub gamma: f64,
    /// `δ = 0` is only the limiting case: the bound on `c₀` becomes
    /// `3/(d+2)`, which the strict inequality excludes.
    pub limiting: bool,
}

/// `c₀ ≤ 1 - (d-1) / ((d+2)(1 - (d+2)δ/d))` and `γ = (1 + (d-1)c₀)/d`.
pub fn eval_c0_gamma(d: usize, delta: f64) -> Result<CoercivityConstants> {
    if !(d == 2 || d == 3) {
        return Err(Error::InvalidArgument(format!(
            "coercivity constants are defined for d in {{2, 3}}, got {d}"
        )));
    }
    if !(delta >= 0.0) {
        return Err(Error::InvalidArgument(format!(
            "delta must be nonnegative, got {delta}"
        )));
    }
    let df = d as f64;
    let shrink = 1.0 - (df + 2.0) * delta / df;
    if !(shrink > (df - 1.0) / (df + 2.0)) {
        return Err(Error::DeltaTooLarge { d, delta });
    }
    let c0_max = 1.0 - (df - 1.0) / ((df + 2.0) * shrink);
    let gamma = (1.0 + (df - 1.0) * c0_max) / df;
    Ok(CoercivityConstants {
        c0_max,
        gamma,
        limiting: delta == 0.0,
    })
}

/// γ used by the stepper's entropy-dissipation check. In one dimension
/// `μ ≡ 0`, the dummy integral with `c₁ = -1/3` absorbs the mixed term for
/// any `δ ≤ 1/3`, and the bound holds with `γ = 1`.
pub fn gamma_for_dimension(d: usize, delta: f64) -> Result<f64> {
    if d == 1 {
        if delta <= 1.0 / 3.0 {
            Ok(1.0)
        } else {
            Err(Error::DeltaTooLarge { d, delta })
        }
    } else {
        Ok(eval_c0_gamma(d, delta)?.gamma)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn closed_form_values() {
        let c = eval_c0_gamma(2, 0.0).unwrap();
        assert!((c.c0_max - 0.75).abs() < 1e-15 && (c.gamma - 0.875).abs() < 1e-15);
        assert!(c.limiting);
        let c = eval_c0_gamma(2, 0.1).unwrap();
        assert!((c.c0_max - 0.6875).abs() < 1e-15);
        assert!((c.gamma - 0.84375).abs() < 1e-15);
        let c = eval_c0_gamma(3, 0.0).unwrap();
        assert!((c.c0_max - 0.6).abs() < 1e-15);
        assert!(eval_c0_gamma(3, 1e-6).unwrap().c0_max < 0.6);
    }

    #[test]
    fn gamma_decreases_in_delta() {
        for d in [2, 3] {
            let mut prev = f64::INFINITY;
            for k in 1..40 {
                let delta = k as f64 * 0.005;
                let Ok(c) = eval_c0_gamma(d, delta) else { break };
                assert!(c.gamma < prev);
                assert!(c.c0_max < 3.0 / (d as f64 + 2.0));
                prev = c.gamma;
            }
        }
    }

    #[test]
    fn rejects_large_delta_and_bad_dimension() {
        assert!(matches!(eval_c0_gamma(2, 0.4), Err(Error::DeltaTooLarge { .. })));
        assert!(eval_c0_gamma(1, 0.1).is_err());
        assert!(eval_c0_gamma(4, 0.1).is_err());
        assert_eq!(gamma_for_dimension(1, 0.05).unwrap(), 1.0);
    }
}
