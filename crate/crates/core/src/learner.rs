//! Online agnostic learners.
//!
//! A learner outputs a test function `q_n` with values in `[-1, 1]` and, after
//! seeing the outcome `kappa_n`, competes with the best fixed `f` in the class
//! on the cumulative correlation `sum_n f(x_n) kappa_n`.
//!
//! Both learners are linear in the class evaluation vector of a context
//! ([`HypothesisClass::features`]): member outputs for a finite class, the
//! context itself for the linear class. The `*_features` methods take that
//! vector directly so callers evaluating many learners on one context can
//! compute it once.

use std::sync::Arc;

use crate::error::{argument, domain, Result};
use crate::hypothesis::{dot, l2_norm, Context, HypothesisClass};

const KAPPA_TOL: f64 = 1e-12;

#[derive(Debug, Clone)]
pub enum LearnerState {
    /// Exponential weights over members of a finite class with rate
    /// `eta_n = sqrt(ln |F| / n)` applied to the full cumulative correlation.
    FiniteMwu {
        cumulative: Vec<f64>,
        weights: Vec<f64>,
        rounds: u64,
    },
    /// Projected online gradient ascent on the unit ball, `theta_1 = 0`,
    /// step `2 / sqrt(n)`.
    LinearOgd { theta: Vec<f64>, rounds: u64 },
}

#[derive(Debug, Clone)]
pub struct AgnosticLearner {
    class: Arc<HypothesisClass>,
    state: LearnerState,
}

impl AgnosticLearner {
    pub fn new(class: Arc<HypothesisClass>) -> Self {
        let state = match class.as_ref() {
            HypothesisClass::Finite(members) => {
                let size = members.len();
                LearnerState::FiniteMwu {
                    cumulative: vec![0.0; size],
                    weights: vec![1.0 / size as f64; size],
                    rounds: 0,
                }
            }
            HypothesisClass::Linear { dim } => LearnerState::LinearOgd {
                theta: vec![0.0; *dim],
                rounds: 0,
            },
        };
        Self { class, state }
    }

    pub fn class(&self) -> &HypothesisClass {
        &self.class
    }

    pub fn state(&self) -> &LearnerState {
        &self.state
    }

    /// Number of observed rounds.
    pub fn rounds(&self) -> u64 {
        match &self.state {
            LearnerState::FiniteMwu { rounds, .. } | LearnerState::LinearOgd { rounds, .. } => {
                *rounds
            }
        }
    }

    /// Member distribution for finite classes.
    pub fn member_weights(&self) -> Option<&[f64]> {
        match &self.state {
            LearnerState::FiniteMwu { weights, .. } => Some(weights),
            LearnerState::LinearOgd { .. } => None,
        }
    }

    pub fn theta(&self) -> Option<&[f64]> {
        match &self.state {
            LearnerState::LinearOgd { theta, .. } => Some(theta),
            LearnerState::FiniteMwu { .. } => None,
        }
    }

    /// Current test function evaluated at `x`.
    pub fn predict(&self, x: &Context) -> Result<f64> {
        let features = self.class.features(x)?;
        Ok(self.predict_features(&features))
    }

    #[inline]
    pub fn predict_features(&self, features: &[f64]) -> f64 {
        match &self.state {
            LearnerState::FiniteMwu { weights, .. } => dot(weights, features),
            LearnerState::LinearOgd { theta, .. } => dot(theta, features),
        }
        .clamp(-1.0, 1.0)
    }

    pub fn observe(&mut self, x: &Context, kappa: f64) -> Result<()> {
        let features = self.class.features(x)?;
        self.observe_features(&features, kappa)
    }

    pub fn observe_features(&mut self, features: &[f64], kappa: f64) -> Result<()> {
        if kappa.is_nan() || kappa.abs() > 1.0 + KAPPA_TOL {
            return Err(domain(format!("outcome {kappa} outside [-1, 1]")));
        }
        if features.len() != self.class.feature_len() {
            return Err(argument(format!(
                "feature vector has length {}, expected {}",
                features.len(),
                self.class.feature_len()
            )));
        }
        match &mut self.state {
            LearnerState::FiniteMwu {
                cumulative,
                weights,
                rounds,
            } => {
                *rounds += 1;
                for (c, f) in cumulative.iter_mut().zip(features) {
                    *c += f * kappa;
                }
                let eta = ((cumulative.len() as f64).ln() / *rounds as f64).sqrt();
                let max = cumulative.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let mut total = 0.0;
                for (w, c) in weights.iter_mut().zip(cumulative.iter()) {
                    *w = (eta * (c - max)).exp();
                    total += *w;
                }
                weights.iter_mut().for_each(|w| *w /= total);
            }
            LearnerState::LinearOgd { theta, rounds } => {
                *rounds += 1;
                let step = 2.0 / (*rounds as f64).sqrt() * kappa;
                for (t, f) in theta.iter_mut().zip(features) {
                    *t += step * f;
                }
                let norm = l2_norm(theta);
                if norm > 1.0 {
                    theta.iter_mut().for_each(|t| *t /= norm);
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::error::Error;
    use crate::hypothesis::TestFunction;

    fn ctx(v: &[f64]) -> Context {
        Context::new(v.to_vec()).unwrap()
    }

    fn plus_minus_one() -> Arc<HypothesisClass> {
        Arc::new(
            HypothesisClass::finite(vec![
                TestFunction::ConstantOne,
                TestFunction::ConstantOne.negation(),
            ])
            .unwrap(),
        )
    }

    #[test]
    fn fresh_predictions_are_zero() {
        let sym = AgnosticLearner::new(plus_minus_one());
        assert_eq!(sym.predict(&ctx(&[0.3])).unwrap(), 0.0);
        let lin = AgnosticLearner::new(Arc::new(HypothesisClass::linear(2).unwrap()));
        assert_eq!(lin.predict(&ctx(&[0.6, 0.8])).unwrap(), 0.0);
    }

    #[test]
    fn ogd_update_projects_onto_ball() {
        let mut lin = AgnosticLearner::new(Arc::new(HypothesisClass::linear(2).unwrap()));
        lin.observe(&ctx(&[1.0, 0.0]), 0.5).unwrap();
        // theta = 2 * 0.5 * (1, 0) = (1, 0), on the boundary.
        assert_eq!(lin.theta().unwrap(), &[1.0, 0.0]);
        assert!((lin.predict(&ctx(&[0.6, 0.8])).unwrap() - 0.6).abs() < 1e-15);

        // theta = (1, 0) at n = 1 (eta = 2), kappa = 1, x = (0, 1).
        let mut fresh = AgnosticLearner::new(Arc::new(HypothesisClass::linear(2).unwrap()));
        if let LearnerState::LinearOgd { theta, .. } = &mut fresh.state {
            theta.copy_from_slice(&[1.0, 0.0]);
        }
        fresh.observe(&ctx(&[0.0, 1.0]), 1.0).unwrap();
        let s5 = 5f64.sqrt();
        let th = fresh.theta().unwrap();
        assert!((th[0] - 1.0 / s5).abs() < 1e-15);
        assert!((th[1] - 2.0 / s5).abs() < 1e-15);
    }

    #[test]
    fn mwu_first_update() {
        let mut l = AgnosticLearner::new(plus_minus_one());
        l.observe(&ctx(&[0.0]), 1.0).unwrap();
        let eta = 2f64.ln().sqrt();
        let expected = eta.exp() / (eta.exp() + (-eta).exp());
        assert!((l.member_weights().unwrap()[0] - expected).abs() < 1e-15);
        assert_eq!(l.rounds(), 1);
    }

    #[test]
    fn zero_outcome_keeps_weights() {
        let mut l = AgnosticLearner::new(plus_minus_one());
        l.observe(&ctx(&[0.0]), 0.0).unwrap();
        assert_eq!(l.member_weights().unwrap(), &[0.5, 0.5]);
        assert_eq!(l.rounds(), 1);
    }

    #[test]
    fn rate_applies_to_full_cumulative_sum() {
        // After a zero outcome the cumulative sums are unchanged but the rate
        // shrinks from sqrt(ln 2) to sqrt(ln 2 / 2).
        let mut l = AgnosticLearner::new(plus_minus_one());
        l.observe(&ctx(&[0.0]), 1.0).unwrap();
        l.observe(&ctx(&[0.0]), 0.0).unwrap();
        let eta = (2f64.ln() / 2.0).sqrt();
        let expected = eta.exp() / (eta.exp() + (-eta).exp());
        assert!((l.member_weights().unwrap()[0] - expected).abs() < 1e-15);
    }

    #[test]
    fn predict_is_idempotent() {
        let mut l = AgnosticLearner::new(Arc::new(HypothesisClass::linear(3).unwrap()));
        l.observe(&ctx(&[0.1, 0.2, 0.3]), -0.7).unwrap();
        let x = ctx(&[0.5, -0.5, 0.1]);
        assert_eq!(l.predict(&x).unwrap(), l.predict(&x).unwrap());
    }

    #[test]
    fn rejects_bad_outcomes() {
        let mut l = AgnosticLearner::new(plus_minus_one());
        assert!(matches!(
            l.observe(&ctx(&[0.0]), 1.5),
            Err(Error::Domain(_))
        ));
        assert!(matches!(
            l.observe_features(&[1.0], 0.5),
            Err(Error::Argument(_))
        ));
        assert_eq!(l.rounds(), 0);
    }
}
