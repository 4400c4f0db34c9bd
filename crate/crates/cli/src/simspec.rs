//! Key/value simulation spec files.
//!
//! ```text
//! distribution = "gaussian"
//! model = "tridiag:0.3"
//! n = 50
//! d = [50, 100, 200, 500]
//! reps = 100
//! methods = ["com:0.05", "com:0.01", "hard", "soft"]
//! seed = 2024
//! ```

use covcal::baseline::{DEFAULT_GRID_SIZE, DEFAULT_SPLITS};
use covcal::{CovModel, Distribution, ExperimentSpec, Method};
use serde::Deserialize;

use crate::CliError;

pub const DEFAULT_SEED: u64 = 2024;

#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum OneOrMany {
    One(usize),
    Many(Vec<usize>),
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSpec {
    distribution: String,
    model: String,
    n: usize,
    d: OneOrMany,
    reps: Option<usize>,
    methods: Vec<String>,
    seed: Option<u64>,
    loss_report: Option<bool>,
    cv_splits: Option<usize>,
    cv_grid_size: Option<usize>,
}

/// One experiment per dimension, sharing everything else.
pub fn parse_spec(text: &str) -> Result<Vec<ExperimentSpec>, CliError> {
    let raw: RawSpec = toml::from_str(text).map_err(|e| CliError::Parse(e.to_string()))?;
    let parse = |e: covcal::CovError| CliError::Parse(e.to_string());
    let distribution: Distribution = raw.distribution.parse().map_err(parse)?;
    let model: CovModel = raw.model.parse().map_err(parse)?;
    let methods: Vec<Method> = raw
        .methods
        .iter()
        .map(|m| m.parse())
        .collect::<Result<_, _>>()
        .map_err(parse)?;
    let dims = match raw.d {
        OneOrMany::One(d) => vec![d],
        OneOrMany::Many(v) => v,
    };
    if dims.is_empty() {
        return Err(CliError::Parse("`d` lists no dimensions".into()));
    }
    dims.into_iter()
        .map(|d| {
            let spec = ExperimentSpec {
                distribution,
                model: model.clone(),
                n: raw.n,
                d,
                reps: raw.reps.unwrap_or(100),
                methods: methods.clone(),
                seed: raw.seed.unwrap_or(DEFAULT_SEED),
                loss_report: raw.loss_report.unwrap_or(false),
                cv_splits: raw.cv_splits.unwrap_or(DEFAULT_SPLITS),
                cv_grid_size: raw.cv_grid_size.unwrap_or(DEFAULT_GRID_SIZE),
            };
            spec.validate().map_err(parse)?;
            Ok(spec)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bundled_table1_spec_parses() {
        let specs = parse_spec(include_str!("../specs/table1.spec")).unwrap();
        assert_eq!(
            specs.iter().map(|s| s.d).collect::<Vec<_>>(),
            vec![50, 100, 200, 500]
        );
        assert!(specs.iter().all(|s| s.n == 50 && s.reps == 100));
    }

    #[test]
    fn scalar_dimension_and_defaults() {
        let s = parse_spec(
            "distribution = \"laplace\"\nmodel = \"ma:0.3\"\nn = 20\nd = 10\nmethods = [\"diagonal\"]\n",
        )
        .unwrap();
        assert_eq!(s.len(), 1);
        assert_eq!(s[0].seed, DEFAULT_SEED);
        assert_eq!(s[0].distribution, Distribution::Laplace);
    }

    #[test]
    fn bad_tokens_are_named() {
        let err = parse_spec(
            "distribution = \"cauchy\"\nmodel = \"ma:0.3\"\nn = 20\nd = 10\nmethods = [\"diagonal\"]\n",
        )
        .unwrap_err();
        assert!(err.to_string().contains("cauchy"));
        assert!(parse_spec("distribution = \"gaussian\"\nbogus = 1\n").is_err());
    }
}
