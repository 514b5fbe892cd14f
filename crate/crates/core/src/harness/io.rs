//! CSV row types and readers/writers for run directories.
//!
//! Floats are written in shortest round-trip form, so every file parses back
//! to the values that were written.

use std::fs::File;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{argument, Error, Result};
use crate::forecaster::{GridConfig, RoundRecord, TwoPointDistribution};
use crate::hypothesis::Context;
use crate::metrics::Transcript;
use crate::property::LabelLaw;

pub const CONFIG_FILE: &str = "config.toml";
pub const TRANSCRIPT_FILE: &str = "transcript.csv";
pub const CONTEXTS_FILE: &str = "contexts.csv";
pub const LAWS_FILE: &str = "laws.csv";
pub const GAINS_FILE: &str = "gains.csv";
pub const METRICS_FILE: &str = "metrics.csv";
pub const BINS_FILE: &str = "bins.csv";
pub const TIMING_FILE: &str = "timing.csv";
pub const AUDIT_FILE: &str = "audit.csv";
pub const SWEEP_FILE: &str = "sweep.csv";
pub const FIT_FILE: &str = "fit.csv";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TranscriptRow {
    pub t: u64,
    pub p_tilde: f64,
    pub bin: usize,
    pub p: f64,
    pub y: f64,
    pub support_lo: u64,
    pub support_hi: u64,
    pub prob_lo: f64,
}

impl From<&RoundRecord> for TranscriptRow {
    fn from(r: &RoundRecord) -> Self {
        Self {
            t: r.t,
            p_tilde: r.p_tilde,
            bin: r.bin,
            p: r.p,
            y: r.y,
            support_lo: r.distribution.lo_index(),
            support_hi: r.distribution.hi_index(),
            prob_lo: r.distribution.prob_lo(),
        }
    }
}

impl TranscriptRow {
    pub fn to_record(&self, horizon: u64) -> Result<RoundRecord> {
        Ok(RoundRecord {
            t: self.t,
            p_tilde: self.p_tilde,
            bin: self.bin,
            p: self.p,
            y: self.y,
            distribution: TwoPointDistribution::from_parts(
                horizon,
                self.support_lo,
                self.support_hi,
                self.prob_lo,
            )?,
        })
    }
}

/// Per-round label law and the audit profile at the support points.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LawRow {
    pub t: u64,
    pub kind: String,
    pub mu: Option<f64>,
    pub a: Option<f64>,
    pub b: Option<f64>,
    pub point: Option<f64>,
    pub phi_lo: f64,
    pub phi_hi: f64,
}

impl LawRow {
    pub fn new(t: u64, law: &LabelLaw, phi_lo: f64, phi_hi: f64) -> Self {
        let mut row = Self {
            t,
            kind: String::new(),
            mu: None,
            a: None,
            b: None,
            point: None,
            phi_lo,
            phi_hi,
        };
        match *law {
            LabelLaw::Bernoulli { mu } => {
                row.kind = "bernoulli".into();
                row.mu = Some(mu);
            }
            LabelLaw::Beta { a, b } => {
                row.kind = "beta".into();
                row.a = Some(a);
                row.b = Some(b);
            }
            LabelLaw::PointMass { y } => {
                row.kind = "point_mass".into();
                row.point = Some(y);
            }
        }
        row
    }

    pub fn law(&self) -> Result<LabelLaw> {
        let missing = |field: &str| {
            argument(format!(
                "round {}: {} law without `{field}`",
                self.t, self.kind
            ))
        };
        let law = match self.kind.as_str() {
            "bernoulli" => LabelLaw::Bernoulli {
                mu: self.mu.ok_or_else(|| missing("mu"))?,
            },
            "beta" => LabelLaw::Beta {
                a: self.a.ok_or_else(|| missing("a"))?,
                b: self.b.ok_or_else(|| missing("b"))?,
            },
            "point_mass" => LabelLaw::PointMass {
                y: self.point.ok_or_else(|| missing("point"))?,
            },
            other => return Err(argument(format!("round {}: unknown law `{other}`", self.t))),
        };
        law.validate()?;
        Ok(law)
    }
}

/// One expert gain in a bin the round's distribution touched.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GainRow {
    pub t: u64,
    pub expert: usize,
    pub gain: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    pub config_hash: String,
    pub seed: u64,
    pub horizon: u64,
    pub bins: usize,
    pub r: f64,
    pub cal: f64,
    pub mcal: f64,
    /// False when `mcal` is a lower bound (linear class, `r != 2`).
    pub mcal_exact: bool,
    pub smcal: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinTableRow {
    pub r: f64,
    pub bin: usize,
    pub point: f64,
    pub count: u64,
    pub sup_correlation: f64,
    /// `n_i (sup_f |S_{i,f}| / n_i)^r`.
    pub smcal_term: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimingRow {
    pub rounds: u64,
    pub wall_seconds: f64,
    pub rounds_per_second: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditRow {
    pub t: u64,
    pub value: f64,
    pub bound: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub horizon: u64,
    pub bins: usize,
    pub seed: u64,
    pub r: f64,
    pub smcal: f64,
    pub mcal: f64,
    pub cal: f64,
    pub wall_seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitRow {
    pub r: f64,
    pub points: usize,
    pub slope: f64,
    pub intercept: f64,
    pub std_error: f64,
    pub residual: f64,
}

pub fn write_rows<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_rows<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let mut r = csv::Reader::from_reader(File::open(path)?);
    r.deserialize()
        .map(|row| row.map_err(Error::from))
        .collect()
}

pub fn write_contexts(path: &Path, contexts: &[Context]) -> Result<()> {
    let dim = contexts.first().map_or(0, Context::dim);
    let mut w = csv::Writer::from_path(path)?;
    let header: Vec<String> = std::iter::once("t".to_string())
        .chain((1..=dim).map(|j| format!("x{j}")))
        .collect();
    w.write_record(&header)?;
    for (t, x) in contexts.iter().enumerate() {
        let mut rec = csv::StringRecord::new();
        rec.push_field(&(t + 1).to_string());
        for v in x.features() {
            rec.push_field(&v.to_string());
        }
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_contexts(path: &Path) -> Result<Vec<Context>> {
    let mut r = csv::Reader::from_reader(File::open(path)?);
    let mut out = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec?;
        let t: usize = rec
            .get(0)
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| argument(format!("contexts row {}: bad round index", i + 1)))?;
        if t != i + 1 {
            return Err(argument(format!(
                "contexts row {}: expected round {}, found {t}",
                i + 1,
                i + 1
            )));
        }
        let x = rec
            .iter()
            .skip(1)
            .map(|s| {
                s.parse::<f64>()
                    .map_err(|_| argument(format!("round {t}: bad context entry `{s}`")))
            })
            .collect::<Result<Vec<_>>>()?;
        out.push(Context::new(x)?);
    }
    Ok(out)
}

pub fn write_transcript(dir: &Path, transcript: &Transcript) -> Result<()> {
    let rows: Vec<TranscriptRow> = transcript.rounds.iter().map(TranscriptRow::from).collect();
    write_rows(&dir.join(TRANSCRIPT_FILE), &rows)?;
    write_contexts(&dir.join(CONTEXTS_FILE), &transcript.contexts)
}

pub fn read_transcript(dir: &Path, grid: GridConfig) -> Result<Transcript> {
    let rows: Vec<TranscriptRow> = read_rows(&dir.join(TRANSCRIPT_FILE))?;
    let contexts = read_contexts(&dir.join(CONTEXTS_FILE))?;
    if rows.len() != contexts.len() {
        return Err(argument(format!(
            "{} transcript rows but {} contexts",
            rows.len(),
            contexts.len()
        )));
    }
    let mut transcript = Transcript::new(grid);
    for (row, x) in rows.iter().zip(contexts) {
        if row.bin == 0 || row.bin > grid.bins() {
            return Err(argument(format!(
                "round {}: bin {} outside the grid",
                row.t, row.bin
            )));
        }
        transcript.push(row.to_record(grid.horizon())?, x);
    }
    Ok(transcript)
}
