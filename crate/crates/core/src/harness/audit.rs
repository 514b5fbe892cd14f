//! Post-hoc verification of a run.
//!
//! The hedging audit recomputes, for every round,
//! `h_t = E_{p ~ P_t}[Phi_t(p) E[V(p, Y_t)]]` from the logged label law and
//! the logged profile values, and compares it with `rho / T`. `rho` is the
//! Lipschitz bound of the adversary family for the configured property.
//!
//! The gain replay rebuilds every logged expert gain from the transcript
//! alone, replaying the online learners where the engine uses them.

use std::path::Path;

use super::config::{Engine, ExperimentConfig};
use super::io::{self, AuditRow, GainRow, LawRow, AUDIT_FILE, GAINS_FILE, LAWS_FILE};
use super::run::{load_run, RunResult};
use crate::error::{argument, Error, Result};
use crate::learner::AgnosticLearner;
use crate::metrics::Transcript;
use crate::property::{LabelLaw, Property};

/// Numerical slack on the hedging bound.
pub const AUDIT_SLACK: f64 = 1e-9;
/// Tolerance for replayed gains.
pub const GAIN_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct GainCheck {
    pub checked: usize,
    pub max_error: f64,
}

impl GainCheck {
    pub fn passed(&self) -> bool {
        self.max_error <= GAIN_TOLERANCE
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AuditReport {
    pub rows: Vec<AuditRow>,
    pub rho: f64,
    pub bound: f64,
    pub max_value: f64,
    /// Round attaining `max_value`.
    pub max_round: u64,
    pub gains: Option<GainCheck>,
}

impl AuditReport {
    pub fn hedging_passed(&self) -> bool {
        self.rows.iter().all(|r| r.pass)
    }

    pub fn passed(&self) -> bool {
        self.hedging_passed() && self.gains.as_ref().is_none_or(GainCheck::passed)
    }
}

/// `h_t` for each round.
pub fn hedging_values(
    transcript: &Transcript,
    property: &Property,
    laws: &[LabelLaw],
    phi_support: &[(f64, f64)],
) -> Result<Vec<f64>> {
    if laws.len() != transcript.len() || phi_support.len() != transcript.len() {
        return Err(argument(format!(
            "{} rounds but {} laws and {} profile entries",
            transcript.len(),
            laws.len(),
            phi_support.len()
        )));
    }
    let horizon = transcript.grid.horizon() as f64;
    Ok(transcript
        .rounds
        .iter()
        .zip(laws.iter().zip(phi_support))
        .map(|(round, (law, &(phi_lo, phi_hi)))| {
            let d = &round.distribution;
            let lo = d.prob_lo() * phi_lo * property.marginal(d.lo_index() as f64 / horizon, law);
            if d.is_point_mass() {
                lo
            } else {
                lo + d.prob_hi() * phi_hi * property.marginal(d.hi_index() as f64 / horizon, law)
            }
        })
        .collect())
}

fn report(
    cfg: &ExperimentConfig,
    transcript: &Transcript,
    laws: &[LabelLaw],
    phi_support: &[(f64, f64)],
    gains: Option<GainCheck>,
) -> Result<AuditReport> {
    let rho = cfg.adversary.lipschitz_bound(&cfg.property);
    let bound = rho / cfg.horizon as f64 + AUDIT_SLACK;
    let values = hedging_values(transcript, &cfg.property, laws, phi_support)?;
    let mut max_value = f64::NEG_INFINITY;
    let mut max_round = 0;
    let rows = values
        .iter()
        .zip(&transcript.rounds)
        .map(|(&value, round)| {
            if value > max_value {
                max_value = value;
                max_round = round.t;
            }
            AuditRow {
                t: round.t,
                value,
                bound,
                pass: value <= bound,
            }
        })
        .collect();
    Ok(AuditReport {
        rows,
        rho,
        bound,
        max_value,
        max_round,
        gains,
    })
}

/// Audits an in-memory run; needs [`RunOptions::FULL`](super::run::RunOptions::FULL) or at least logged laws.
pub fn audit_result(cfg: &ExperimentConfig, result: &RunResult) -> Result<AuditReport> {
    if result.laws.is_empty() && !result.transcript.is_empty() {
        return Err(Error::AuditUnavailable(
            "run was executed without law logging".into(),
        ));
    }
    let gains = if result.gains.is_empty() {
        None
    } else {
        Some(replay_gains(cfg, &result.transcript, &result.gains)?)
    };
    report(
        cfg,
        &result.transcript,
        &result.laws,
        &result.phi_support,
        gains,
    )
}

/// Audits a run directory and writes `audit.csv` into it.
pub fn audit_run(dir: &Path) -> Result<AuditReport> {
    let (cfg, transcript) = load_run(dir)?;
    let laws_path = dir.join(LAWS_FILE);
    if !laws_path.exists() {
        return Err(Error::AuditUnavailable(format!(
            "{} not found",
            laws_path.display()
        )));
    }
    let rows: Vec<LawRow> = io::read_rows(&laws_path)?;
    let laws = rows.iter().map(LawRow::law).collect::<Result<Vec<_>>>()?;
    let phi: Vec<(f64, f64)> = rows.iter().map(|r| (r.phi_lo, r.phi_hi)).collect();
    let gains_path = dir.join(GAINS_FILE);
    let gains = if gains_path.exists() {
        let logged: Vec<GainRow> = io::read_rows(&gains_path)?;
        Some(replay_gains(&cfg, &transcript, &logged)?)
    } else {
        None
    };
    let report = report(&cfg, &transcript, &laws, &phi, gains)?;
    io::write_rows(&dir.join(AUDIT_FILE), &report.rows)?;
    Ok(report)
}

/// Recomputes each logged gain from the transcript and returns the largest
/// absolute deviation.
pub fn replay_gains(
    cfg: &ExperimentConfig,
    transcript: &Transcript,
    logged: &[GainRow],
) -> Result<GainCheck> {
    let class = std::sync::Arc::new(cfg.build_class()?);
    let grid = transcript.grid;
    let bins = grid.bins();
    let horizon = grid.horizon() as f64;
    let mut learners: Vec<AgnosticLearner> = match cfg.engine {
        Engine::Efficient => (0..2 * bins)
            .map(|_| AgnosticLearner::new(class.clone()))
            .collect(),
        Engine::Inefficient => Vec::new(),
    };
    let members = match cfg.engine {
        Engine::Efficient => 1,
        Engine::Inefficient => class.feature_len(),
    };

    let mut features = Vec::new();
    let mut next = 0;
    let mut max_error: f64 = 0.0;
    for (round, x) in transcript.rounds.iter().zip(&transcript.contexts) {
        class.features_into(x, &mut features)?;
        let d = &round.distribution;
        while next < logged.len() && logged[next].t == round.t {
            let row = logged[next];
            next += 1;
            if row.expert >= 2 * bins * members {
                return Err(argument(format!(
                    "round {}: expert {} out of range",
                    row.t, row.expert
                )));
            }
            let sigma = if row.expert.is_multiple_of(2) {
                1.0
            } else {
                -1.0
            };
            let bin = (row.expert / 2) % bins + 1;
            let multiplier = match cfg.engine {
                Engine::Efficient => learners[row.expert].predict_features(&features),
                Engine::Inefficient => features[row.expert / (2 * bins)],
            };
            let residual: f64 = d
                .support()
                .filter(|&(m, _)| grid.bin_of_index(m) == bin)
                .map(|(m, prob)| prob * cfg.property.identify(m as f64 / horizon, round.y))
                .sum();
            max_error = max_error.max((sigma * multiplier * residual - row.gain).abs());
        }
        if next < logged.len() && logged[next].t < round.t {
            return Err(argument(format!(
                "gain rows out of order at round {}",
                logged[next].t
            )));
        }
        if !learners.is_empty() {
            let v = cfg.property.identify(round.p, round.y);
            let base = (round.bin - 1) * 2;
            learners[base].observe_features(&features, v)?;
            learners[base + 1].observe_features(&features, -v)?;
        }
    }
    if next != logged.len() {
        return Err(argument(format!(
            "gain row for round {} beyond the transcript",
            logged[next].t
        )));
    }
    Ok(GainCheck {
        checked: logged.len(),
        max_error,
    })
}
