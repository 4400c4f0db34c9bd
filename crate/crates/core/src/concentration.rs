//! Coverage level to confidence-ball radius under three concentration regimes.
//!
//! Each regime supplies a tail bound `exp(-psi(r))` for the deviation of the
//! (square-rooted) empirical covariance distance above its mean; the radius
//! `r_alpha` solves `exp(-psi(r_alpha)) = alpha`.

use std::fmt;

use serde::Serialize;

use crate::error::{check_domain, CovError, Result};

/// Concentration assumption on the observations.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "regime", rename_all = "snake_case")]
pub enum Regime {
    /// Strongly log-concave with Hessian bound `c`; tail `exp(-n c r^2 / 2)`.
    LogConcave { c: f64 },
    /// Poincaré-type measure with constant `k`;
    /// radius `max(-k log(alpha) / sqrt(n), sqrt(-k log(alpha)))`.
    SubExponential { k: f64 },
    /// Observations bounded by `u` in norm; tail `exp(-2 n r^2 / u^2)`.
    Bounded { u: f64 },
}

impl Regime {
    pub fn log_concave(c: f64) -> Result<Self> {
        check_positive("c", c)?;
        Ok(Regime::LogConcave { c })
    }

    /// Gaussian data: the log-concavity constant is the reciprocal of the
    /// largest eigenvalue of the covariance.
    pub fn gaussian(max_eigenvalue: f64) -> Result<Self> {
        check_positive("max_eigenvalue", max_eigenvalue)?;
        Self::log_concave(1.0 / max_eigenvalue)
    }

    pub fn sub_exponential(k: f64) -> Result<Self> {
        check_positive("k", k)?;
        Ok(Regime::SubExponential { k })
    }

    pub fn bounded(u: f64) -> Result<Self> {
        check_positive("u", u)?;
        Ok(Regime::Bounded { u })
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            Regime::LogConcave { c } => check_positive("c", c),
            Regime::SubExponential { k } => check_positive("k", k),
            Regime::Bounded { u } => check_positive("u", u),
        }
    }
}

impl fmt::Display for Regime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Regime::LogConcave { c } => write!(f, "logconcave(c={c})"),
            Regime::SubExponential { k } => write!(f, "subexp(K={k})"),
            Regime::Bounded { u } => write!(f, "bounded(U={u})"),
        }
    }
}

pub fn radius_from_alpha(regime: Regime, n: usize, alpha: f64) -> Result<f64> {
    regime.validate()?;
    check_n(n)?;
    check_domain(
        "alpha",
        alpha,
        alpha > 0.0 && alpha < 1.0,
        "coverage level must lie in (0, 1)",
    )?;
    let n = n as f64;
    let neg_log = -alpha.ln();
    Ok(match regime {
        Regime::LogConcave { c } => (2.0 * neg_log / (n * c)).sqrt(),
        Regime::SubExponential { k } => {
            let l = k * neg_log;
            (l / n.sqrt()).max(l.sqrt())
        }
        Regime::Bounded { u } => u * (neg_log / (2.0 * n)).sqrt(),
    })
}

/// Inverse of [`radius_from_alpha`].
pub fn alpha_from_radius(regime: Regime, n: usize, r: f64) -> Result<f64> {
    regime.validate()?;
    check_n(n)?;
    check_domain("r", r, r > 0.0 && r.is_finite(), "radius must be positive")?;
    let nf = n as f64;
    let exponent = match regime {
        Regime::LogConcave { c } => nf * c * r * r / 2.0,
        Regime::SubExponential { k } => {
            // r = sqrt(L) while L < n, r = L / sqrt(n) beyond; L = -k log(alpha)
            let l = if r * r < nf { r * r } else { r * nf.sqrt() };
            l / k
        }
        Regime::Bounded { u } => 2.0 * nf * r * r / (u * u),
    };
    let alpha = (-exponent).exp();
    if alpha <= 0.0 {
        return Err(CovError::Domain {
            name: "r",
            value: r,
            expected: "radius so large that the coverage level underflows",
        });
    }
    Ok(alpha)
}

fn check_positive(name: &'static str, v: f64) -> Result<()> {
    check_domain(
        name,
        v,
        v > 0.0 && v.is_finite(),
        "constant must be positive",
    )
}

fn check_n(n: usize) -> Result<()> {
    if n == 0 {
        return Err(CovError::SampleSize {
            required: 1,
            actual: 0,
        });
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::test_util::rng;
    use rand::Rng;

    fn rel(a: f64, b: f64) -> f64 {
        (a - b).abs() / b.abs().max(f64::MIN_POSITIVE)
    }

    #[test]
    fn formula_examples() {
        let e = std::f64::consts::E;
        let r = radius_from_alpha(Regime::LogConcave { c: 1.0 }, 100, e.powi(-2)).unwrap();
        assert!(rel(r, 0.2) < 1e-12);
        let r = radius_from_alpha(Regime::SubExponential { k: 1.0 }, 4, e.powi(-4)).unwrap();
        assert!(rel(r, 2.0) < 1e-12);
        let r = radius_from_alpha(Regime::Bounded { u: 1.0 }, 50, e.powi(-1)).unwrap();
        assert!(rel(r, 0.1) < 1e-12);
    }

    #[test]
    fn inverse_examples() {
        let a = alpha_from_radius(Regime::LogConcave { c: 1.0 }, 100, 0.2).unwrap();
        assert!(rel(a, (-2.0f64).exp()) < 1e-12);
        let (u, n, r) = (2.5, 40, 0.3);
        let a = alpha_from_radius(Regime::Bounded { u }, n, r).unwrap();
        assert!(rel(a, (-2.0 * n as f64 * r * r / (u * u)).exp()) < 1e-14);
    }

    #[test]
    fn gaussian_constructor_inverts_max_eigenvalue() {
        assert_eq!(
            Regime::gaussian(4.0).unwrap(),
            Regime::LogConcave { c: 0.25 }
        );
    }

    #[test]
    fn domain_errors() {
        let reg = Regime::LogConcave { c: 1.0 };
        assert!(radius_from_alpha(reg, 10, 0.0).is_err());
        assert!(radius_from_alpha(reg, 10, 1.0).is_err());
        assert!(radius_from_alpha(reg, 0, 0.5).is_err());
        assert!(alpha_from_radius(reg, 10, 0.0).is_err());
        assert!(alpha_from_radius(reg, 10, -1.0).is_err());
        assert!(Regime::bounded(0.0).is_err());
        assert!(radius_from_alpha(Regime::SubExponential { k: -1.0 }, 10, 0.5).is_err());
    }

    fn random_regime(r: &mut impl Rng) -> Regime {
        let v = r.random_range(0.1..10.0);
        match r.random_range(0..3) {
            0 => Regime::LogConcave { c: v },
            1 => Regime::SubExponential { k: v },
            _ => Regime::Bounded { u: v },
        }
    }

    #[test]
    fn round_trip() {
        let mut g = rng(8);
        for _ in 0..1000 {
            let reg = random_regime(&mut g);
            let n = g.random_range(1..5000);
            let alpha = g.random_range(1e-6..0.999);
            let r = radius_from_alpha(reg, n, alpha).unwrap();
            assert!(r > 0.0);
            let back = alpha_from_radius(reg, n, r).unwrap();
            assert!(
                rel(back, alpha) < 1e-10,
                "{reg} n={n} a={alpha} back={back}"
            );
            let again = radius_from_alpha(reg, n, back).unwrap();
            assert!(rel(again, r) < 1e-10);
        }
    }

    #[test]
    fn monotone_in_alpha_and_n() {
        let regimes = [
            Regime::LogConcave { c: 1.0 },
            Regime::SubExponential { k: 1.0 },
            Regime::Bounded { u: 1.0 },
        ];
        for reg in regimes {
            let grid: Vec<f64> = (1..100).map(|i| i as f64 / 100.0).collect();
            let radii: Vec<f64> = grid
                .iter()
                .map(|&a| radius_from_alpha(reg, 30, a).unwrap())
                .collect();
            assert!(radii.windows(2).all(|w| w[0] > w[1]), "{reg}");
            for alpha in [0.01, 0.3, 0.9] {
                let by_n: Vec<f64> = (1..200)
                    .map(|n| radius_from_alpha(reg, n, alpha).unwrap())
                    .collect();
                match reg {
                    Regime::SubExponential { .. } => {
                        assert!(by_n.windows(2).all(|w| w[0] >= w[1]))
                    }
                    _ => assert!(by_n.windows(2).all(|w| w[0] > w[1])),
                }
            }
        }
        for reg in [Regime::LogConcave { c: 1.0 }, Regime::Bounded { u: 1.0 }] {
            assert!(radius_from_alpha(reg, 10, 1.0 - 1e-12).unwrap() < 1e-5);
        }
    }
}
