//! Generalized thresholding operators.
//!
//! Every rule acts on `|z|` and restores the sign, so all of them are odd
//! functions of `z`. Each satisfies `|s(z)| <= |z|`, `s(z) = 0` for
//! `|z| < lambda` and `|s(z) - z| <= lambda`.

use std::fmt;
use std::str::FromStr;

use serde::Serialize;

use crate::error::{check_domain, CovError, Result};
use crate::linalg::SymMatrix;

pub const DEFAULT_SCAD_A: f64 = 3.7;
pub const DEFAULT_ADAPTIVE_ETA: f64 = 1.0;

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
#[serde(tag = "rule", rename_all = "snake_case")]
pub enum ThresholdRule {
    /// Keeps entries with `|z| >= lambda`.
    #[default]
    Hard,
    Soft,
    Scad {
        a: f64,
    },
    AdaptiveLasso {
        eta: f64,
    },
}

impl ThresholdRule {
    pub fn scad(a: f64) -> Result<Self> {
        check_domain(
            "a",
            a,
            a > 2.0 && a.is_finite(),
            "SCAD parameter must exceed 2",
        )?;
        Ok(ThresholdRule::Scad { a })
    }

    pub fn adaptive_lasso(eta: f64) -> Result<Self> {
        check_domain(
            "eta",
            eta,
            eta >= 0.0 && eta.is_finite(),
            "adaptive lasso exponent must be >= 0",
        )?;
        Ok(ThresholdRule::AdaptiveLasso { eta })
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            ThresholdRule::Scad { a } => Self::scad(a).map(drop),
            ThresholdRule::AdaptiveLasso { eta } => Self::adaptive_lasso(eta).map(drop),
            _ => Ok(()),
        }
    }

    /// Shrinks `z` at threshold `lambda`; `lambda` must already be known to be
    /// nonnegative.
    #[inline]
    pub(crate) fn apply(&self, z: f64, lambda: f64) -> f64 {
        let mag = z.abs();
        let shrunk = match *self {
            ThresholdRule::Hard => {
                if mag >= lambda {
                    mag
                } else {
                    0.0
                }
            }
            ThresholdRule::Soft => (mag - lambda).max(0.0),
            ThresholdRule::Scad { a } => {
                if mag <= 2.0 * lambda {
                    (mag - lambda).max(0.0)
                } else if mag <= a * lambda {
                    (a - 1.0) / (a - 2.0) * (mag - 2.0 * lambda) + lambda
                } else {
                    mag
                }
            }
            ThresholdRule::AdaptiveLasso { eta } => {
                if mag == 0.0 || lambda == 0.0 {
                    mag
                } else if mag <= lambda {
                    0.0
                } else {
                    (mag - lambda.powf(eta + 1.0) * mag.powf(-eta)).max(0.0)
                }
            }
        };
        shrunk.copysign(z)
    }
}

impl fmt::Display for ThresholdRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ThresholdRule::Hard => f.write_str("hard"),
            ThresholdRule::Soft => f.write_str("soft"),
            ThresholdRule::Scad { a } => write!(f, "scad:{a}"),
            ThresholdRule::AdaptiveLasso { eta } => write!(f, "adaptive:{eta}"),
        }
    }
}

impl FromStr for ThresholdRule {
    type Err = CovError;

    /// `hard`, `soft`, `scad[:a]`, `adaptive[:eta]`.
    fn from_str(s: &str) -> Result<Self> {
        let lower = s.trim().to_ascii_lowercase();
        let (name, param) = match lower.split_once(':') {
            Some((n, p)) => (n, Some(p)),
            None => (lower.as_str(), None),
        };
        let param = |default: f64| -> Result<f64> {
            match param {
                None => Ok(default),
                Some(p) => p
                    .parse()
                    .map_err(|_| CovError::Config(format!("bad rule parameter in `{s}`"))),
            }
        };
        match name {
            "hard" => Ok(ThresholdRule::Hard),
            "soft" => Ok(ThresholdRule::Soft),
            "scad" => ThresholdRule::scad(param(DEFAULT_SCAD_A)?),
            "adaptive" | "adpt" | "alasso" => {
                ThresholdRule::adaptive_lasso(param(DEFAULT_ADAPTIVE_ETA)?)
            }
            _ => Err(CovError::Config(format!("unknown threshold rule `{s}`"))),
        }
    }
}

pub fn shrink(rule: ThresholdRule, z: f64, lambda: f64) -> Result<f64> {
    check_lambda(lambda)?;
    Ok(rule.apply(z, lambda))
}

/// Shrinks every off-diagonal entry of `m`; the diagonal passes through.
pub fn apply_threshold(m: &SymMatrix, rule: ThresholdRule, lambda: f64) -> Result<SymMatrix> {
    check_lambda(lambda)?;
    rule.validate()?;
    Ok(m.map_off_diagonal(|_, _, z| rule.apply(z, lambda)))
}

fn check_lambda(lambda: f64) -> Result<()> {
    check_domain(
        "lambda",
        lambda,
        lambda >= 0.0 && lambda.is_finite(),
        "threshold must be finite and >= 0",
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::entrywise_norm;
    use crate::linalg::test_util::{random_symmetric, rng};
    use rand::Rng;

    const RULES: [ThresholdRule; 4] = [
        ThresholdRule::Hard,
        ThresholdRule::Soft,
        ThresholdRule::Scad { a: 3.7 },
        ThresholdRule::AdaptiveLasso { eta: 1.0 },
    ];

    #[test]
    fn hand_examples() {
        assert!((shrink(ThresholdRule::Soft, 0.5, 0.2).unwrap() - 0.3).abs() < 1e-15);
        assert_eq!(shrink(ThresholdRule::Hard, -0.19, 0.2).unwrap(), 0.0);
        let scad = shrink(ThresholdRule::Scad { a: 3.7 }, 2.5, 1.0).unwrap();
        assert!((scad - (2.7 / 1.7 * 0.5 + 1.0)).abs() < 1e-14);
        assert!((scad - 1.794_12).abs() < 1e-5);
        let ad = shrink(ThresholdRule::AdaptiveLasso { eta: 1.0 }, 0.5, 0.3).unwrap();
        assert!((ad - 0.32).abs() < 1e-14);
    }

    #[test]
    fn hard_keeps_at_equality() {
        assert_eq!(shrink(ThresholdRule::Hard, 0.4, 0.4).unwrap(), 0.4);
        assert_eq!(shrink(ThresholdRule::Hard, -0.4, 0.4).unwrap(), -0.4);
    }

    #[test]
    fn negative_lambda_is_rejected() {
        assert!(matches!(
            shrink(ThresholdRule::Soft, 1.0, -0.1),
            Err(CovError::Domain { name: "lambda", .. })
        ));
        assert!(ThresholdRule::scad(2.0).is_err());
        assert!(ThresholdRule::adaptive_lasso(-1.0).is_err());
    }

    #[test]
    fn contract_triple_on_grid() {
        for rule in RULES {
            for li in 0..=20 {
                let lambda = li as f64 * 0.1;
                for zi in -5000..=5000 {
                    let z = zi as f64 * 1e-3;
                    let s = shrink(rule, z, lambda).unwrap();
                    assert!(s.abs() <= z.abs() + 1e-12, "{rule} z={z} l={lambda}");
                    if z.abs() < lambda {
                        assert_eq!(s, 0.0, "{rule} z={z} l={lambda}");
                    }
                    assert!((s - z).abs() <= lambda + 1e-12, "{rule} z={z} l={lambda}");
                    assert_eq!(shrink(rule, -z, lambda).unwrap(), -s);
                }
            }
        }
    }

    #[test]
    fn continuity_at_branch_points() {
        let h = 1e-9;
        for lambda in [0.1, 0.5, 1.0, 2.0] {
            for rule in &RULES[1..] {
                let mut points = vec![lambda];
                if let ThresholdRule::Scad { a } = rule {
                    points.extend([2.0 * lambda, a * lambda]);
                }
                for z in points {
                    let jump = (rule.apply(z + h, lambda) - rule.apply(z - h, lambda)).abs();
                    assert!(jump < 1e-6, "{rule} jumps by {jump} at {z}");
                }
            }
            let hard_jump = ThresholdRule::Hard.apply(lambda, lambda)
                - ThresholdRule::Hard.apply(lambda - h, lambda);
            assert!((hard_jump - lambda).abs() < 1e-12);
        }
    }

    #[test]
    fn apply_threshold_examples() {
        let mut r = rng(1);
        let m = random_symmetric(&mut r, 5);
        for rule in RULES {
            assert_eq!(apply_threshold(&m, rule, 0.0).unwrap(), m);
        }
        let big = m.max_abs_off_diagonal() + 1e-9;
        assert_eq!(
            apply_threshold(&m, ThresholdRule::Hard, big).unwrap(),
            m.diagonal_part()
        );
        let tri =
            crate::covmodel::model_matrix(&crate::covmodel::CovModel::TriDiag(0.3), 3).unwrap();
        assert_eq!(
            apply_threshold(&tri, ThresholdRule::Hard, 0.2).unwrap(),
            tri
        );
    }

    #[test]
    fn larger_threshold_moves_further_from_input() {
        let mut r = rng(77);
        let norms = [
            (1.0, 1.0),
            (2.0, 2.0),
            (1.0, 2.0),
            (f64::INFINITY, 1.0),
            (3.0, f64::INFINITY),
        ];
        for _ in 0..100 {
            let m = random_symmetric(&mut r, 6);
            for rule in RULES {
                let mut lambdas: Vec<f64> = (0..6).map(|_| r.random_range(0.0..1.2)).collect();
                lambdas.sort_by(f64::total_cmp);
                for w in lambdas.windows(2) {
                    let lo = apply_threshold(&m, rule, w[0]).unwrap().sub(&m).unwrap();
                    let hi = apply_threshold(&m, rule, w[1]).unwrap().sub(&m).unwrap();
                    for (p, q) in norms {
                        let a = entrywise_norm(hi.as_matrix(), p, q).unwrap();
                        let b = entrywise_norm(lo.as_matrix(), p, q).unwrap();
                        assert!(a >= b - 1e-12, "{rule}: {a} < {b}");
                    }
                }
            }
        }
    }

    #[test]
    fn parse_rules() {
        assert_eq!(
            "hard".parse::<ThresholdRule>().unwrap(),
            ThresholdRule::Hard
        );
        assert_eq!(
            "scad".parse::<ThresholdRule>().unwrap(),
            ThresholdRule::Scad { a: 3.7 }
        );
        assert_eq!(
            "adaptive:0.5".parse::<ThresholdRule>().unwrap(),
            ThresholdRule::AdaptiveLasso { eta: 0.5 }
        );
        assert!("scad:1.5".parse::<ThresholdRule>().is_err());
        assert!("median".parse::<ThresholdRule>().is_err());
    }
}
