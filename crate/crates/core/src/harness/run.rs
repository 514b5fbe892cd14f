//! Seeded execution of a single experiment.

use std::path::Path;
use std::sync::Arc;
use std::time::{Duration, Instant};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::config::{Engine, ExperimentConfig};
use super::io::{
    self, BinTableRow, GainRow, LawRow, MetricRow, TimingRow, BINS_FILE, CONFIG_FILE, GAINS_FILE,
    LAWS_FILE, METRICS_FILE, TIMING_FILE,
};
use crate::adversary::Adversary;
use crate::error::Result;
use crate::forecaster::Forecaster;
use crate::metrics::{aggregate, cal, mcal, per_bin, smcal, Transcript};
use crate::property::LabelLaw;

/// Stream identifiers for [`component_rng`].
pub mod stream {
    pub const ENGINE: u64 = 0;
    pub const CONTEXTS: u64 = 1;
    pub const LABELS: u64 = 2;
}

/// Independent generator for one component: the global seed selects the key,
/// the component selects the ChaCha stream.
pub fn component_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// What to keep beyond the transcript.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RunOptions {
    /// Label laws and the audit profile at the support points.
    pub log_laws: bool,
    /// Gains of every expert in the bins each round touched.
    pub log_gains: bool,
}

impl RunOptions {
    pub const FULL: Self = Self {
        log_laws: true,
        log_gains: true,
    };
    pub const TRANSCRIPT_ONLY: Self = Self {
        log_laws: false,
        log_gains: false,
    };
}

#[derive(Debug, Clone)]
pub struct RunResult {
    pub transcript: Transcript,
    pub laws: Vec<LabelLaw>,
    /// `(Phi_t(lo), Phi_t(hi))` at the support of `P_t`.
    pub phi_support: Vec<(f64, f64)>,
    pub gains: Vec<GainRow>,
    pub elapsed: Duration,
}

impl RunResult {
    pub fn rounds_per_second(&self) -> f64 {
        self.transcript.len() as f64 / self.elapsed.as_secs_f64().max(1e-12)
    }
}

pub fn build_engine(cfg: &ExperimentConfig) -> Result<Forecaster> {
    let grid = cfg.grid()?;
    let class = Arc::new(cfg.build_class()?);
    match cfg.engine {
        Engine::Efficient => Forecaster::oracle_efficient(grid, cfg.property.clone(), class),
        Engine::Inefficient => Forecaster::enumerating(grid, cfg.property.clone(), class),
    }
}

/// Runs all `horizon` rounds in memory.
pub fn simulate(cfg: &ExperimentConfig, opts: RunOptions) -> Result<RunResult> {
    cfg.validate()?;
    let mut engine = build_engine(cfg)?;
    let grid = *engine.grid();
    let mut adversary = Adversary::new(cfg.adversary.clone(), cfg.property.clone())?;
    let mut engine_rng = component_rng(cfg.seed, stream::ENGINE);
    let mut context_rng = component_rng(cfg.seed, stream::CONTEXTS);
    let mut label_rng = component_rng(cfg.seed, stream::LABELS);
    let per_bin_experts = engine.experts().experts() / (2 * grid.bins());

    let capacity = if opts.log_laws {
        cfg.horizon as usize
    } else {
        0
    };
    let mut result = RunResult {
        transcript: Transcript::new(grid),
        laws: Vec::with_capacity(capacity),
        phi_support: Vec::with_capacity(capacity),
        gains: Vec::new(),
        elapsed: Duration::ZERO,
    };
    let start = Instant::now();
    for _ in 0..cfg.horizon {
        let x = adversary.next_context(&mut context_rng);
        let law = adversary.next_label_law(&x);
        let out = engine.step(&x, &mut engine_rng, |_| {
            adversary.sample_label(&law, &mut label_rng)
        })?;
        adversary.observe(&out.record);

        let dist = &out.record.distribution;
        if opts.log_laws {
            result.laws.push(law);
            result.phi_support.push((
                out.phi.at_index(dist.lo_index(), &grid),
                out.phi.at_index(dist.hi_index(), &grid),
            ));
        }
        if opts.log_gains {
            let lo_bin = grid.bin_of_index(dist.lo_index());
            let hi_bin = grid.bin_of_index(dist.hi_index());
            let touched: &[usize] = if lo_bin == hi_bin {
                &[lo_bin]
            } else {
                &[lo_bin, hi_bin]
            };
            for f in 0..per_bin_experts {
                for &bin in touched {
                    for sigma in 0..2 {
                        let expert = (f * grid.bins() + bin - 1) * 2 + sigma;
                        result.gains.push(GainRow {
                            t: out.record.t,
                            expert,
                            gain: out.gains[expert],
                        });
                    }
                }
            }
        }
        result.transcript.push(out.record, x);
    }
    result.elapsed = start.elapsed();
    Ok(result)
}

/// One metric row per exponent.
pub fn compute_metrics(
    cfg: &ExperimentConfig,
    transcript: &Transcript,
    rs: &[f64],
) -> Result<Vec<MetricRow>> {
    let class = cfg.build_class()?;
    let agg = aggregate(transcript, &cfg.property, &class)?;
    let hash = cfg.hash();
    rs.iter()
        .map(|&r| {
            let m = mcal(&agg, r)?;
            Ok(MetricRow {
                config_hash: hash.clone(),
                seed: cfg.seed,
                horizon: cfg.horizon,
                bins: transcript.grid.bins(),
                r,
                cal: cal(transcript, &cfg.property, r)?,
                mcal: m.value,
                mcal_exact: m.exact,
                smcal: smcal(&agg, r)?,
            })
        })
        .collect()
}

pub fn bin_table(
    cfg: &ExperimentConfig,
    transcript: &Transcript,
    rs: &[f64],
) -> Result<Vec<BinTableRow>> {
    let class = cfg.build_class()?;
    let agg = aggregate(transcript, &cfg.property, &class)?;
    let rows = per_bin(&agg, &transcript.grid)?;
    let mut out = Vec::with_capacity(rs.len() * rows.len());
    for &r in rs {
        for row in &rows {
            let term = if row.count == 0 {
                0.0
            } else {
                row.count as f64 * (row.sup_correlation / row.count as f64).powf(r)
            };
            out.push(BinTableRow {
                r,
                bin: row.bin,
                point: row.point,
                count: row.count,
                sup_correlation: row.sup_correlation,
                smcal_term: term,
            });
        }
    }
    Ok(out)
}

/// Files written for a run.
pub fn write_run(
    dir: &Path,
    cfg: &ExperimentConfig,
    result: &RunResult,
    metrics: &[MetricRow],
) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    std::fs::write(dir.join(CONFIG_FILE), cfg.to_toml_string())?;
    io::write_transcript(dir, &result.transcript)?;
    if !result.laws.is_empty() {
        let rows: Vec<LawRow> = result
            .laws
            .iter()
            .zip(&result.phi_support)
            .enumerate()
            .map(|(i, (law, &(lo, hi)))| LawRow::new(i as u64 + 1, law, lo, hi))
            .collect();
        io::write_rows(&dir.join(LAWS_FILE), &rows)?;
    }
    if !result.gains.is_empty() {
        io::write_rows(&dir.join(GAINS_FILE), &result.gains)?;
    }
    io::write_rows(&dir.join(METRICS_FILE), metrics)?;
    io::write_rows(
        &dir.join(TIMING_FILE),
        &[TimingRow {
            rounds: result.transcript.len() as u64,
            wall_seconds: result.elapsed.as_secs_f64(),
            rounds_per_second: result.rounds_per_second(),
        }],
    )
}

/// Simulates with full logging and persists everything under `dir`.
pub fn run(cfg: &ExperimentConfig, dir: &Path) -> Result<(RunResult, Vec<MetricRow>)> {
    let result = simulate(cfg, RunOptions::FULL)?;
    let metrics = compute_metrics(cfg, &result.transcript, &[cfg.r])?;
    write_run(dir, cfg, &result, &metrics)?;
    Ok((result, metrics))
}

/// Loads a run directory's config and transcript.
pub fn load_run(dir: &Path) -> Result<(ExperimentConfig, Transcript)> {
    let cfg = ExperimentConfig::load(&dir.join(CONFIG_FILE))?;
    let transcript = io::read_transcript(dir, cfg.grid()?)?;
    Ok((cfg, transcript))
}

/// Recomputes metrics of a stored run for several exponents; optionally
/// writes the per-bin table.
pub fn rescore(dir: &Path, rs: &[f64], per_bin_table: bool) -> Result<Vec<MetricRow>> {
    let (cfg, transcript) = load_run(dir)?;
    let metrics = compute_metrics(&cfg, &transcript, rs)?;
    io::write_rows(&dir.join(METRICS_FILE), &metrics)?;
    if per_bin_table {
        io::write_rows(&dir.join(BINS_FILE), &bin_table(&cfg, &transcript, rs)?)?;
    }
    Ok(metrics)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::adversary::{AdversarySpec, ContextLaw};
    use crate::hypothesis::ClassSpec;
    use crate::property::Property;

    fn config(horizon: u64) -> ExperimentConfig {
        ExperimentConfig {
            engine: Engine::Efficient,
            property: Property::mean(),
            class: ClassSpec::Groups {
                groups: 4,
                dim: 3,
                seed: 1,
            },
            adversary: AdversarySpec::Logistic {
                weights: vec![1.0, -1.0, 0.5],
                context: ContextLaw::Cube,
            },
            horizon,
            r: 2.0,
            bins: None,
            seed: 11,
            out: None,
        }
    }

    #[test]
    fn single_round_smoke() {
        let cfg = config(1);
        let res = simulate(&cfg, RunOptions::FULL).unwrap();
        assert_eq!(res.transcript.len(), 1);
        let m = compute_metrics(&cfg, &res.transcript, &[1.0, 2.0]).unwrap();
        assert!(m
            .iter()
            .all(|row| row.cal.is_finite() && row.mcal.is_finite() && row.smcal.is_finite()));
    }

    #[test]
    fn default_bins_follow_horizon() {
        assert_eq!(config(1000).grid().unwrap().bins(), 10);
    }

    #[test]
    fn streams_are_independent() {
        use rand::Rng;
        let a: u64 = component_rng(5, stream::ENGINE).random();
        let b: u64 = component_rng(5, stream::CONTEXTS).random();
        let c: u64 = component_rng(5, stream::ENGINE).random();
        assert_ne!(a, b);
        assert_eq!(a, c);
    }

    #[test]
    fn gains_cover_touched_bins() {
        let mut cfg = config(200);
        cfg.engine = Engine::Inefficient;
        let res = simulate(&cfg, RunOptions::FULL).unwrap();
        let first: Vec<_> = res.gains.iter().filter(|g| g.t == 1).collect();
        let d = res.transcript.rounds[0].distribution;
        let grid = res.transcript.grid;
        let touched = if grid.bin_of_index(d.lo_index()) == grid.bin_of_index(d.hi_index()) {
            1
        } else {
            2
        };
        assert_eq!(first.len(), 4 * 2 * touched);
    }

    #[test]
    fn run_directory_reloads() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = config(300);
        let (res, metrics) = run(&cfg, dir.path()).unwrap();
        let (cfg2, transcript) = load_run(dir.path()).unwrap();
        assert_eq!(cfg, cfg2);
        assert_eq!(transcript, res.transcript);
        assert_eq!(rescore(dir.path(), &[2.0], true).unwrap(), metrics);
        assert!(dir.path().join(BINS_FILE).exists());
    }
}
