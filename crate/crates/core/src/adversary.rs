//! Simulated adversaries: context streams and per-round label laws.
//!
//! Each round the adversary draws a context, commits to a label law `Y_t`
//! (using only the history of earlier rounds), and after the forecaster has
//! predicted, reveals `y_t ~ Y_t`. Label laws are materialized so audits can
//! evaluate marginals in closed form.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{config, Result};
use crate::forecaster::RoundRecord;
use crate::hypothesis::{dot, l2_norm, Context};
use crate::property::{LabelLaw, Property, PropertyKind};

/// How contexts are drawn.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ContextLaw {
    /// Uniform on `[-1, 1]^d`, radially projected onto the unit ball.
    #[default]
    Cube,
    /// Uniform on `[-1, 1]^d` scaled by `1 / sqrt(d)`.
    ScaledCube,
}

impl ContextLaw {
    /// Maps `d` uniform variates to a context.
    pub fn context_from(&self, variates: &[f64]) -> Context {
        let mut x: Vec<f64> = variates.iter().map(|u| 2.0 * u - 1.0).collect();
        match self {
            ContextLaw::Cube => {
                let norm = l2_norm(&x);
                if norm > 1.0 {
                    x.iter_mut().for_each(|v| *v /= norm);
                }
            }
            ContextLaw::ScaledCube => {
                let scale = 1.0 / (x.len() as f64).sqrt();
                x.iter_mut().for_each(|v| *v *= scale);
            }
        }
        Context::new(x).expect("projected context lies in the unit ball")
    }
}

fn default_concentration() -> f64 {
    4.0
}

fn default_aggressiveness() -> f64 {
    0.5
}

/// Adversary family and parameters, as written in experiment configs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum AdversarySpec {
    /// `y ~ Bernoulli(sigmoid(<w, x>))`.
    Logistic {
        weights: Vec<f64>,
        #[serde(default)]
        context: ContextLaw,
    },
    /// `y ~ Beta(c m, c (1 - m))` with `m = 1/4 + sigmoid(<w, x>) / 2`.
    /// `c >= 4` keeps both shapes at least 1, so the CDF is Lipschitz.
    Beta {
        weights: Vec<f64>,
        #[serde(default = "default_concentration")]
        concentration: f64,
        #[serde(default)]
        context: ContextLaw,
    },
    /// Bernoulli labels pushed toward the sign of the running residual of the
    /// most-predicted bin: `mu = 1/2 + a/2 * clamp(R / sqrt(n), -1, 1)`.
    Deficit {
        dim: usize,
        #[serde(default = "default_aggressiveness")]
        aggressiveness: f64,
        #[serde(default)]
        context: ContextLaw,
    },
}

impl AdversarySpec {
    pub fn dim(&self) -> usize {
        match self {
            AdversarySpec::Logistic { weights, .. } | AdversarySpec::Beta { weights, .. } => {
                weights.len()
            }
            AdversarySpec::Deficit { dim, .. } => *dim,
        }
    }

    fn context_law(&self) -> ContextLaw {
        match self {
            AdversarySpec::Logistic { context, .. }
            | AdversarySpec::Beta { context, .. }
            | AdversarySpec::Deficit { context, .. } => *context,
        }
    }

    /// Checks the parameters and that the label laws satisfy the
    /// identification assumption for `property`.
    pub fn validate(&self, property: &Property) -> Result<()> {
        if self.dim() == 0 {
            return Err(config("adversary", "context dimension must be positive"));
        }
        match self {
            AdversarySpec::Logistic { weights, .. } | AdversarySpec::Beta { weights, .. } => {
                if weights.iter().any(|w| !w.is_finite()) {
                    return Err(config("adversary.weights", "weights must be finite"));
                }
            }
            AdversarySpec::Deficit { aggressiveness, .. } => {
                if !(0.0..=1.0).contains(aggressiveness) {
                    return Err(config("adversary.aggressiveness", "must lie in [0, 1]"));
                }
            }
        }
        if let AdversarySpec::Beta { concentration, .. } = self {
            if !(concentration.is_finite() && *concentration >= 4.0) {
                return Err(config(
                    "adversary.concentration",
                    "must be at least 4 so both beta shapes stay >= 1",
                ));
            }
        }
        let atomic = !matches!(self, AdversarySpec::Beta { .. });
        if atomic && matches!(property.kind, PropertyKind::Quantile { .. }) {
            return Err(config(
                "adversary",
                "quantile runs need a label law with a Lipschitz CDF; bernoulli labels have atoms",
            ));
        }
        Ok(())
    }

    /// Lipschitz constant of `p -> E[V(p, Y)]` over every law this adversary
    /// can produce.
    pub fn lipschitz_bound(&self, property: &Property) -> f64 {
        match property.kind {
            PropertyKind::Mean | PropertyKind::RawMoment { .. } => 1.0,
            PropertyKind::Expectile { tau } => tau.max(1.0 - tau),
            PropertyKind::Quantile { .. } => match self {
                AdversarySpec::Beta {
                    weights,
                    concentration,
                    ..
                } => beta_family_density_bound(l2_norm(weights), *concentration),
                _ => f64::INFINITY,
            },
        }
    }
}

fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

fn beta_mean(logit: f64) -> f64 {
    0.25 + 0.5 * sigmoid(logit)
}

/// Largest density of `Beta(c m, c (1 - m))` for `m` between
/// `beta_mean(-r)` and `beta_mean(r)`.
fn beta_family_density_bound(logit_radius: f64, concentration: f64) -> f64 {
    const STEPS: usize = 2000;
    let lo = beta_mean(-logit_radius);
    let hi = beta_mean(logit_radius);
    (0..=STEPS)
        .map(|s| lo + (hi - lo) * s as f64 / STEPS as f64)
        .map(|m| {
            LabelLaw::Beta {
                a: concentration * m,
                b: concentration * (1.0 - m),
            }
            .density_bound()
            .unwrap_or(f64::INFINITY)
        })
        .fold(0.0, f64::max)
}

/// A running adversary. Single-owner; histories are per stream.
#[derive(Debug, Clone)]
pub struct Adversary {
    spec: AdversarySpec,
    property: Property,
    /// Per-bin `(count, residual sum)` of the realized history.
    bins: Vec<(u64, f64)>,
    variates: Vec<f64>,
}

impl Adversary {
    pub fn new(spec: AdversarySpec, property: Property) -> Result<Self> {
        spec.validate(&property)?;
        let dim = spec.dim();
        Ok(Self {
            spec,
            property,
            bins: Vec::new(),
            variates: vec![0.0; dim],
        })
    }

    pub fn spec(&self) -> &AdversarySpec {
        &self.spec
    }

    pub fn next_context<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Context {
        for v in self.variates.iter_mut() {
            *v = rng.random();
        }
        self.spec.context_law().context_from(&self.variates)
    }

    /// Label law for the current round; depends only on `x` and earlier rounds.
    pub fn next_label_law(&self, x: &Context) -> LabelLaw {
        match &self.spec {
            AdversarySpec::Logistic { weights, .. } => LabelLaw::Bernoulli {
                mu: sigmoid(dot(weights, x.features())),
            },
            AdversarySpec::Beta {
                weights,
                concentration,
                ..
            } => {
                let m = beta_mean(dot(weights, x.features()));
                LabelLaw::Beta {
                    a: concentration * m,
                    b: concentration * (1.0 - m),
                }
            }
            AdversarySpec::Deficit { aggressiveness, .. } => {
                let hit = self.bins.iter().enumerate().fold(
                    None::<(usize, u64)>,
                    |best, (i, &(n, _))| match best {
                        Some((_, m)) if m >= n => best,
                        _ if n > 0 => Some((i, n)),
                        _ => best,
                    },
                );
                let mu = match hit {
                    None => 0.5,
                    Some((i, n)) => {
                        let pressure = (self.bins[i].1 / (n as f64).sqrt()).clamp(-1.0, 1.0);
                        0.5 + 0.5 * aggressiveness * pressure
                    }
                };
                LabelLaw::Bernoulli { mu }
            }
        }
    }

    pub fn sample_label<R: Rng + ?Sized>(&self, law: &LabelLaw, rng: &mut R) -> f64 {
        law.sample(rng)
    }

    /// Records a completed round.
    pub fn observe(&mut self, record: &RoundRecord) {
        if self.bins.len() < record.bin {
            self.bins.resize(record.bin, (0, 0.0));
        }
        let slot = &mut self.bins[record.bin - 1];
        slot.0 += 1;
        slot.1 += self.property.identify(record.p, record.y);
    }
}
