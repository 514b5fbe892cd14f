//! Bounded hypothesis classes `F ⊂ [-1, 1]^X` and per-bin supremum
//! correlations.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{argument, config, domain, Error, Result};
use crate::property::parse_params;

const NORM_TOL: f64 = 1e-12;

/// A feature vector in the closed Euclidean unit ball.
#[derive(Debug, Clone, PartialEq)]
pub struct Context(Vec<f64>);

impl Context {
    pub fn new(features: Vec<f64>) -> Result<Self> {
        if features.iter().any(|v| !v.is_finite()) {
            return Err(domain("context has non-finite entries"));
        }
        let norm = l2_norm(&features);
        if norm > 1.0 + NORM_TOL {
            return Err(domain(format!("context norm {norm} exceeds 1")));
        }
        Ok(Self(features))
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn features(&self) -> &[f64] {
        &self.0
    }

    pub fn norm(&self) -> f64 {
        l2_norm(&self.0)
    }
}

pub(crate) fn l2_norm(v: &[f64]) -> f64 {
    v.iter().map(|a| a * a).sum::<f64>().sqrt()
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// A concrete test function with outputs in `[-1, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub enum TestFunction {
    ConstantOne,
    /// `polarity * 1[x[coordinate] >= threshold]`, so outputs lie in `{0, ±1}`.
    GroupIndicator {
        coordinate: usize,
        threshold: f64,
        polarity: i8,
    },
    /// `<theta, x>` for a fixed `theta` with `|theta| <= 1`.
    LinearFixed(Vec<f64>),
    NegationOf(Box<TestFunction>),
}

impl TestFunction {
    pub fn group_indicator(coordinate: usize, threshold: f64, polarity: i8) -> Result<Self> {
        if polarity != 1 && polarity != -1 {
            return Err(argument("polarity must be +1 or -1"));
        }
        if !threshold.is_finite() {
            return Err(argument("threshold must be finite"));
        }
        Ok(Self::GroupIndicator {
            coordinate,
            threshold,
            polarity,
        })
    }

    pub fn linear_fixed(theta: Vec<f64>) -> Result<Self> {
        if theta.iter().any(|v| !v.is_finite()) || l2_norm(&theta) > 1.0 + NORM_TOL {
            return Err(argument("linear test function needs |theta| <= 1"));
        }
        Ok(Self::LinearFixed(theta))
    }

    pub fn negation(self) -> Self {
        Self::NegationOf(Box::new(self))
    }

    pub fn evaluate(&self, x: &Context) -> Result<f64> {
        match self {
            TestFunction::ConstantOne => Ok(1.0),
            TestFunction::GroupIndicator {
                coordinate,
                threshold,
                polarity,
            } => {
                let v = x.features().get(*coordinate).ok_or_else(|| {
                    argument(format!(
                        "coordinate {coordinate} out of range for context of dimension {}",
                        x.dim()
                    ))
                })?;
                Ok(if *v >= *threshold {
                    f64::from(*polarity)
                } else {
                    0.0
                })
            }
            TestFunction::LinearFixed(theta) => {
                if theta.len() != x.dim() {
                    return Err(argument(format!(
                        "theta has dimension {}, context {}",
                        theta.len(),
                        x.dim()
                    )));
                }
                Ok(dot(theta, x.features()))
            }
            TestFunction::NegationOf(inner) => Ok(-inner.evaluate(x)?),
        }
    }
}

/// The hypothesis class audited by the forecaster.
#[derive(Debug, Clone, PartialEq)]
pub enum HypothesisClass {
    Finite(Vec<TestFunction>),
    /// `{x -> <theta, x> : |theta| <= 1}` over `dim`-dimensional contexts.
    Linear {
        dim: usize,
    },
}

/// Maximizer returned alongside a supremum correlation.
#[derive(Debug, Clone, PartialEq)]
pub enum Witness {
    Member(usize),
    Direction(Vec<f64>),
}

impl HypothesisClass {
    pub fn finite(members: Vec<TestFunction>) -> Result<Self> {
        if members.is_empty() {
            return Err(argument(
                "finite hypothesis class needs at least one member",
            ));
        }
        Ok(Self::Finite(members))
    }

    pub fn linear(dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(argument("linear class dimension must be positive"));
        }
        Ok(Self::Linear { dim })
    }

    /// The `F = {1}` class, under which multicalibration reduces to calibration.
    pub fn singleton() -> Self {
        Self::Finite(vec![TestFunction::ConstantOne])
    }

    /// `groups` coordinate-threshold indicators over `dim`-dimensional
    /// contexts. Member `j` tests coordinate `j mod dim` against a threshold
    /// drawn uniformly from `[-0.5, 0.5)` by a seeded stream.
    pub fn group_indicators(groups: usize, dim: usize, seed: u64) -> Result<Self> {
        if groups == 0 || dim == 0 {
            return Err(argument("group count and dimension must be positive"));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let members = (0..groups)
            .map(|j| {
                let threshold = rng.random::<f64>() - 0.5;
                TestFunction::group_indicator(j % dim, threshold, 1)
            })
            .collect::<Result<Vec<_>>>()?;
        Self::finite(members)
    }

    /// Number of coordinates each per-context evaluation vector has: member
    /// count for finite classes, context dimension for the linear class.
    pub fn feature_len(&self) -> usize {
        match self {
            HypothesisClass::Finite(m) => m.len(),
            HypothesisClass::Linear { dim } => *dim,
        }
    }

    /// Context dimension the class requires, if any.
    pub fn context_dim(&self) -> Option<usize> {
        match self {
            HypothesisClass::Linear { dim } => Some(*dim),
            HypothesisClass::Finite(members) => members.iter().filter_map(required_dim).max(),
        }
    }

    pub fn members(&self) -> Option<&[TestFunction]> {
        match self {
            HypothesisClass::Finite(m) => Some(m),
            HypothesisClass::Linear { .. } => None,
        }
    }

    /// Evaluation vector of `x`: `(f(x))_f` for finite classes, `x` itself for
    /// the linear class. Every learner and aggregate in the crate is linear in
    /// this vector.
    pub fn features_into(&self, x: &Context, out: &mut Vec<f64>) -> Result<()> {
        out.clear();
        match self {
            HypothesisClass::Finite(members) => {
                for f in members {
                    out.push(f.evaluate(x)?);
                }
            }
            HypothesisClass::Linear { dim } => {
                if x.dim() != *dim {
                    return Err(argument(format!(
                        "context dimension {} does not match linear class dimension {dim}",
                        x.dim()
                    )));
                }
                out.extend_from_slice(x.features());
            }
        }
        Ok(())
    }

    pub fn features(&self, x: &Context) -> Result<Vec<f64>> {
        let mut out = Vec::with_capacity(self.feature_len());
        self.features_into(x, &mut out)?;
        Ok(out)
    }

    /// `sup_f |sum_t f(x_t) V_t|` over one bin, given the bin's accumulated
    /// evaluation-weighted residuals (one sum per member, or the moment vector
    /// for the linear class).
    pub fn sup_correlation(&self, accumulated: &[f64]) -> Result<(f64, Witness)> {
        if accumulated.len() != self.feature_len() {
            return Err(argument(format!(
                "expected {} accumulated values, got {}",
                self.feature_len(),
                accumulated.len()
            )));
        }
        Ok(match self {
            HypothesisClass::Finite(_) => {
                let (idx, value) = accumulated.iter().map(|s| s.abs()).enumerate().fold(
                    (0, f64::NEG_INFINITY),
                    |best, (i, v)| if v > best.1 { (i, v) } else { best },
                );
                (value, Witness::Member(idx))
            }
            HypothesisClass::Linear { .. } => {
                let norm = l2_norm(accumulated);
                let theta = if norm > 0.0 {
                    accumulated.iter().map(|v| v / norm).collect()
                } else {
                    vec![0.0; accumulated.len()]
                };
                (norm, Witness::Direction(theta))
            }
        })
    }
}

fn required_dim(f: &TestFunction) -> Option<usize> {
    match f {
        TestFunction::ConstantOne => None,
        TestFunction::GroupIndicator { coordinate, .. } => Some(coordinate + 1),
        TestFunction::LinearFixed(theta) => Some(theta.len()),
        TestFunction::NegationOf(inner) => required_dim(inner),
    }
}

/// Class specification as written in experiment configs:
/// `finite:groups=8,dim=4,seed=7`, `linear:dim=16`, or `singleton`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ClassSpec {
    Groups {
        groups: usize,
        dim: usize,
        seed: u64,
    },
    Linear {
        dim: usize,
    },
    Singleton,
}

impl ClassSpec {
    pub fn build(&self) -> Result<HypothesisClass> {
        match *self {
            ClassSpec::Groups { groups, dim, seed } => {
                HypothesisClass::group_indicators(groups, dim, seed)
            }
            ClassSpec::Linear { dim } => HypothesisClass::linear(dim),
            ClassSpec::Singleton => Ok(HypothesisClass::singleton()),
        }
    }

    pub fn context_dim(&self) -> Option<usize> {
        match *self {
            ClassSpec::Groups { dim, .. } | ClassSpec::Linear { dim } => Some(dim),
            ClassSpec::Singleton => None,
        }
    }
}

impl FromStr for ClassSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (head, rest) = s.split_once(':').unwrap_or((s, ""));
        let params = parse_params("class", rest)?;
        let allowed: &[&str] = match head.trim() {
            "finite" => &["groups", "dim", "seed"],
            "linear" => &["dim"],
            "singleton" => &[],
            other => return Err(config("class", format!("unknown class `{other}`"))),
        };
        if let Some((k, _)) = params.iter().find(|(k, _)| !allowed.contains(&k.as_str())) {
            return Err(config("class", format!("unknown parameter `{k}`")));
        }
        let int = |key: &str, default: Option<u64>| -> Result<u64> {
            match params.iter().find(|(k, _)| k == key) {
                Some((_, v)) if v.fract() == 0.0 && *v >= 0.0 && *v <= u64::MAX as f64 => {
                    Ok(*v as u64)
                }
                Some(_) => Err(config(
                    "class",
                    format!("`{key}` must be a nonnegative integer"),
                )),
                None => default.ok_or_else(|| config("class", format!("missing `{key}=`"))),
            }
        };
        let spec = match head.trim() {
            "finite" => ClassSpec::Groups {
                groups: int("groups", None)? as usize,
                dim: int("dim", None)? as usize,
                seed: int("seed", Some(0))?,
            },
            "linear" => ClassSpec::Linear {
                dim: int("dim", None)? as usize,
            },
            _ => ClassSpec::Singleton,
        };
        spec.build().map_err(|e| config("class", e.to_string()))?;
        Ok(spec)
    }
}

impl fmt::Display for ClassSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ClassSpec::Groups { groups, dim, seed } => {
                write!(f, "finite:groups={groups},dim={dim},seed={seed}")
            }
            ClassSpec::Linear { dim } => write!(f, "linear:dim={dim}"),
            ClassSpec::Singleton => f.write_str("singleton"),
        }
    }
}
