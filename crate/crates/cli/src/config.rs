use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use taylode::integrate::ControllerKind;
use taylode::problems::PROBLEM_NAMES;
use thiserror::Error;

use crate::method::MethodSpec;

/// Environment variable that redirects output files into a directory.
pub const OUT_DIR_VAR: &str = "TAYLODE_OUT_DIR";

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("invalid configuration JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error("cannot read {path}: {source}")]
    Read {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("unknown problem '{0}'; known problems: {}", PROBLEM_NAMES.join(", "))]
    Problem(String),
    #[error("the method list is empty")]
    NoMethods,
    #[error("the tolerance list is empty")]
    NoTolerances,
    #[error("tolerances must be non-negative and finite with reltol > 0, got ({0}, {1})")]
    Tolerance(f64, f64),
    #[error("at least 3 repetitions are required, got {0}")]
    Repetitions(usize),
    #[error("jobs must be at least 1")]
    Jobs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    #[default]
    Csv,
    Json,
}

impl FromStr for Format {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "csv" => Ok(Format::Csv),
            "json" => Ok(Format::Json),
            _ => Err(format!("unknown format '{s}'; expected csv or json")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TolPair {
    pub abstol: f64,
    pub reltol: f64,
}

/// One work-precision sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchConfig {
    pub problem: String,
    pub methods: Vec<MethodSpec>,
    pub tolerances: Vec<TolPair>,
    #[serde(default = "default_repetitions")]
    pub repetitions: usize,
    /// Output file; standard output when absent.
    #[serde(default)]
    pub output: Option<PathBuf>,
    #[serde(default)]
    pub format: Format,
    #[serde(default, with = "controller_name")]
    pub controller: ControllerKind,
    /// Worker threads for independent cells.
    #[serde(default = "default_jobs")]
    pub jobs: usize,
}

fn default_repetitions() -> usize {
    5
}

fn default_jobs() -> usize {
    1
}

mod controller_name {
    use serde::{Deserialize, Deserializer, Serializer};
    use taylode::integrate::ControllerKind;

    pub fn serialize<S: Serializer>(kind: &ControllerKind, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(match kind {
            ControllerKind::I => "i",
            ControllerKind::PI => "pi",
            ControllerKind::PID => "pid",
        })
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<ControllerKind, D::Error> {
        let name = String::deserialize(d)?;
        name.parse().map_err(serde::de::Error::custom)
    }
}

impl BenchConfig {
    pub fn from_json(text: &str) -> Result<Self, ConfigError> {
        let config: BenchConfig = serde_json::from_str(text)?;
        config.validate()?;
        Ok(config)
    }

    pub fn from_file(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_json(&text)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if !PROBLEM_NAMES.contains(&self.problem.as_str()) {
            return Err(ConfigError::Problem(self.problem.clone()));
        }
        if self.methods.is_empty() {
            return Err(ConfigError::NoMethods);
        }
        if self.tolerances.is_empty() {
            return Err(ConfigError::NoTolerances);
        }
        for t in &self.tolerances {
            let ok =
                t.abstol >= 0.0 && t.abstol.is_finite() && t.reltol > 0.0 && t.reltol.is_finite();
            if !ok {
                return Err(ConfigError::Tolerance(t.abstol, t.reltol));
            }
        }
        if self.repetitions < 3 {
            return Err(ConfigError::Repetitions(self.repetitions));
        }
        if self.jobs == 0 {
            return Err(ConfigError::Jobs);
        }
        Ok(())
    }

    /// Where results go, after applying [`OUT_DIR_VAR`].
    pub fn output_path(&self) -> Option<PathBuf> {
        resolve_output(
            self.output.as_deref(),
            std::env::var_os(OUT_DIR_VAR).map(PathBuf::from),
        )
    }
}

/// Places the file name of `output` inside `out_dir` when both are given.
pub fn resolve_output(output: Option<&Path>, out_dir: Option<PathBuf>) -> Option<PathBuf> {
    let output = output?;
    match (out_dir, output.file_name()) {
        (Some(dir), Some(name)) => Some(dir.join(name)),
        _ => Some(output.to_path_buf()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const SAMPLE: &str = r#"{
        "problem": "lotka_volterra",
        "methods": ["taylor:8", "taylor-adaptive:6:12", "dp5"],
        "tolerances": [{"abstol": 1e-8, "reltol": 1e-8}],
        "repetitions": 3,
        "format": "json",
        "controller": "pi"
    }"#;

    #[test]
    fn parses_a_full_config() {
        let c = BenchConfig::from_json(SAMPLE).unwrap();
        assert_eq!(c.methods.len(), 3);
        assert_eq!(c.format, Format::Json);
        assert_eq!(c.controller, ControllerKind::PI);
        assert_eq!(c.jobs, 1);
        assert_eq!(c.output, None);
    }

    #[test]
    fn enforces_invariants() {
        let with = |from: &str, to: &str| BenchConfig::from_json(&SAMPLE.replace(from, to));
        assert!(matches!(
            with("\"repetitions\": 3", "\"repetitions\": 2"),
            Err(ConfigError::Repetitions(2))
        ));
        assert!(matches!(
            with(r#"["taylor:8", "taylor-adaptive:6:12", "dp5"]"#, "[]"),
            Err(ConfigError::NoMethods)
        ));
        assert!(matches!(
            with(r#"[{"abstol": 1e-8, "reltol": 1e-8}]"#, "[]"),
            Err(ConfigError::NoTolerances)
        ));
        assert!(matches!(
            with("lotka_volterra", "brusselator"),
            Err(ConfigError::Problem(_))
        ));
        assert!(matches!(
            with("\"dp5\"", "\"rk4\""),
            Err(ConfigError::Json(_))
        ));
        assert!(matches!(
            with("\"pi\"", "\"pd\""),
            Err(ConfigError::Json(_))
        ));
        assert!(matches!(
            with("\"format\"", "\"colour\""),
            Err(ConfigError::Json(_))
        ));
    }

    #[test]
    fn output_directory_override() {
        let out = resolve_output(Some(Path::new("runs/a.csv")), Some(PathBuf::from("/tmp/x")));
        assert_eq!(out, Some(PathBuf::from("/tmp/x/a.csv")));
        assert_eq!(
            resolve_output(Some(Path::new("a.csv")), None),
            Some(PathBuf::from("a.csv"))
        );
        assert_eq!(resolve_output(None, Some(PathBuf::from("/tmp"))), None);
    }
}
