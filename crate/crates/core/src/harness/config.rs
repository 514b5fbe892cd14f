//! Experiment configuration.
//!
//! A config is one TOML document. Unknown keys are rejected.
//!
//! ```toml
//! engine = "efficient"            # or "inefficient"
//! property = "mean"               # quantile:q=0.5 | expectile:tau=0.3 | moment:k=2
//! class = "finite:groups=8,dim=4,seed=7"   # linear:dim=16 | singleton
//! horizon = 10000
//! r = 2.0                         # default 2
//! bins = 22                       # default ceil(horizon^(1/(r+1)))
//! seed = 1                        # default 0
//! out = "runs/example"            # optional output directory
//!
//! [adversary]
//! kind = "logistic"
//! weights = [1.0, -0.5, 0.25, 0.0]
//! ```

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::adversary::AdversarySpec;
use crate::error::{config, Error, Result};
use crate::forecaster::{default_bins, GridConfig};
use crate::hypothesis::{ClassSpec, HypothesisClass};
use crate::metrics::MAX_R;
use crate::property::Property;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Engine {
    /// Per-bin online agnostic learners, `2N` experts.
    Efficient,
    /// Enumerates a finite class, `2N|F|` experts.
    Inefficient,
}

impl fmt::Display for Engine {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Engine::Efficient => "efficient",
            Engine::Inefficient => "inefficient",
        })
    }
}

fn default_r() -> f64 {
    2.0
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    engine: Engine,
    property: String,
    class: String,
    horizon: u64,
    #[serde(default = "default_r")]
    r: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    bins: Option<usize>,
    #[serde(default)]
    seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    out: Option<PathBuf>,
    adversary: AdversarySpec,
}

/// A validated experiment configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub engine: Engine,
    pub property: Property,
    pub class: ClassSpec,
    pub adversary: AdversarySpec,
    pub horizon: u64,
    pub r: f64,
    /// Explicit bin count; `None` selects the default for `horizon` and `r`.
    pub bins: Option<usize>,
    pub seed: u64,
    pub out: Option<PathBuf>,
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self> {
        std::fs::read_to_string(path)?.parse()
    }

    /// Checks cross-field constraints; every error names the offending key.
    pub fn validate(&self) -> Result<()> {
        if self.horizon == 0 {
            return Err(config("horizon", "must be positive"));
        }
        if !(self.r >= 1.0 && self.r <= MAX_R) {
            return Err(config("r", format!("must lie in [1, {MAX_R}]")));
        }
        if let Some(n) = self.bins {
            if n == 0 || n as u64 > self.horizon {
                return Err(config(
                    "bins",
                    format!("must lie in [1, horizon = {}]", self.horizon),
                ));
            }
        }
        self.adversary.validate(&self.property)?;
        if let Some(d) = self.class.context_dim() {
            if d != self.adversary.dim() {
                return Err(config(
                    "class",
                    format!(
                        "class expects {d}-dimensional contexts, adversary produces {}",
                        self.adversary.dim()
                    ),
                ));
            }
        }
        if self.engine == Engine::Inefficient && matches!(self.class, ClassSpec::Linear { .. }) {
            return Err(config(
                "engine",
                "the inefficient engine needs a finite class",
            ));
        }
        Ok(())
    }

    pub fn grid(&self) -> Result<GridConfig> {
        let bins = match self.bins {
            Some(n) => n,
            None => default_bins(self.horizon, self.r)?,
        };
        GridConfig::new(bins, self.horizon)
    }

    pub fn build_class(&self) -> Result<HypothesisClass> {
        self.class.build()
    }

    /// The same experiment at another horizon, with the default bin count.
    pub fn at_horizon(&self, horizon: u64) -> Self {
        Self {
            horizon,
            bins: None,
            ..self.clone()
        }
    }

    /// Canonical TOML; parsing it yields an equal config.
    pub fn to_toml_string(&self) -> String {
        let raw = RawConfig {
            engine: self.engine,
            property: self.property.to_string(),
            class: self.class.to_string(),
            horizon: self.horizon,
            r: self.r,
            bins: self.bins,
            seed: self.seed,
            out: self.out.clone(),
            adversary: self.adversary.clone(),
        };
        toml::to_string(&raw).expect("config serializes")
    }

    /// SHA-256 of the canonical form, excluding `seed` and `out`, as 16 hex digits.
    pub fn hash(&self) -> String {
        let canonical = Self {
            seed: 0,
            out: None,
            ..self.clone()
        }
        .to_toml_string();
        let digest = Sha256::digest(canonical.as_bytes());
        hex::encode(&digest[..8])
    }
}

impl FromStr for ExperimentConfig {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let raw: RawConfig =
            toml::from_str(s).map_err(|e| config("config", e.message().to_string()))?;
        let cfg = Self {
            engine: raw.engine,
            property: raw.property.parse()?,
            class: raw.class.parse()?,
            adversary: raw.adversary,
            horizon: raw.horizon,
            r: raw.r,
            bins: raw.bins,
            seed: raw.seed,
            out: raw.out,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}
