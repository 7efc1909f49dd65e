use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use taylode::integrate::DegreePolicy;
use thiserror::Error;

/// Largest degree accepted on the command line.
pub const MAX_DEGREE: usize = 64;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ParseError {
    #[error(
        "unknown method '{0}'; expected taylor:<p>, taylor-adaptive:<p_min>:<p_max>, dp5 or tsit5"
    )]
    UnknownMethod(String),
    #[error("invalid degree '{0}'")]
    Degree(String),
    #[error("degree {0} is outside 1..={MAX_DEGREE}")]
    DegreeRange(usize),
    #[error("degree range needs p_min <= p_max, got {0}:{1}")]
    Policy(usize, usize),
    #[error("empty degree list")]
    EmptyList,
}

/// An integration method as named on the command line.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum MethodSpec {
    /// `taylor:<p>`: adaptive step, fixed degree.
    Taylor(usize),
    /// `taylor-adaptive:<p_min>:<p_max>`: adaptive step and degree.
    TaylorAdaptive(usize, usize),
    Dp5,
    Tsit5,
}

impl MethodSpec {
    pub fn is_taylor(&self) -> bool {
        matches!(self, MethodSpec::Taylor(_) | MethodSpec::TaylorAdaptive(..))
    }

    pub fn policy(&self) -> Option<DegreePolicy> {
        match *self {
            MethodSpec::TaylorAdaptive(lo, hi) => DegreePolicy::new(lo, hi).ok(),
            _ => None,
        }
    }
}

pub fn parse_degree(s: &str) -> Result<usize, ParseError> {
    let p: usize = s
        .trim()
        .parse()
        .map_err(|_| ParseError::Degree(s.to_string()))?;
    if (1..=MAX_DEGREE).contains(&p) {
        Ok(p)
    } else {
        Err(ParseError::DegreeRange(p))
    }
}

/// Parses a comma-separated degree list such as `6,8,10`.
pub fn parse_degree_list(s: &str) -> Result<Vec<usize>, ParseError> {
    if s.trim().is_empty() {
        return Err(ParseError::EmptyList);
    }
    s.split(',').map(parse_degree).collect()
}

impl FromStr for MethodSpec {
    type Err = ParseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let lower = s.trim().to_ascii_lowercase();
        let parts: Vec<&str> = lower.split(':').collect();
        match parts.as_slice() {
            ["dp5"] => Ok(MethodSpec::Dp5),
            ["tsit5"] => Ok(MethodSpec::Tsit5),
            ["taylor", p] => Ok(MethodSpec::Taylor(parse_degree(p)?)),
            ["taylor-adaptive", lo, hi] => {
                let (lo, hi) = (parse_degree(lo)?, parse_degree(hi)?);
                if lo > hi {
                    return Err(ParseError::Policy(lo, hi));
                }
                Ok(MethodSpec::TaylorAdaptive(lo, hi))
            }
            _ => Err(ParseError::UnknownMethod(s.to_string())),
        }
    }
}

impl TryFrom<String> for MethodSpec {
    type Error = ParseError;

    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

impl From<MethodSpec> for String {
    fn from(m: MethodSpec) -> String {
        m.to_string()
    }
}

impl fmt::Display for MethodSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MethodSpec::Taylor(p) => write!(f, "taylor:{p}"),
            MethodSpec::TaylorAdaptive(lo, hi) => write!(f, "taylor-adaptive:{lo}:{hi}"),
            MethodSpec::Dp5 => f.write_str("dp5"),
            MethodSpec::Tsit5 => f.write_str("tsit5"),
        }
    }
}
