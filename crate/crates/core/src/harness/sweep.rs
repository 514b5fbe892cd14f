//! Horizon sweeps and power-law fits of error growth.

use std::path::Path;
use std::time::Instant;

use rayon::prelude::*;

use super::config::ExperimentConfig;
use super::io::{self, FitRow, SweepRow, FIT_FILE, SWEEP_FILE};
use super::run::{compute_metrics, simulate, RunOptions};
use crate::error::{argument, domain, Result};

/// Ordinary least squares of `ln y` on `ln x`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PowerFit {
    pub points: usize,
    pub slope: f64,
    pub intercept: f64,
    /// Standard error of the slope; zero with exactly collinear points.
    pub std_error: f64,
    /// Residual sum of squares in log space.
    pub residual: f64,
}

pub fn fit_power_law(xs: &[f64], ys: &[f64]) -> Result<PowerFit> {
    if xs.len() != ys.len() {
        return Err(argument("x and y lengths differ"));
    }
    if xs.iter().chain(ys).any(|v| !(*v > 0.0 && v.is_finite())) {
        return Err(domain("power-law fit needs positive finite data"));
    }
    let mut distinct: Vec<f64> = xs.to_vec();
    distinct.sort_by(f64::total_cmp);
    distinct.dedup();
    if distinct.len() < 3 {
        return Err(argument("a fit needs at least 3 distinct x values"));
    }
    let lx: Vec<f64> = xs.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|v| v.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxx: f64 = lx.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let residual: f64 = lx
        .iter()
        .zip(&ly)
        .map(|(x, y)| (y - intercept - slope * x).powi(2))
        .sum();
    let dof = lx.len().saturating_sub(2).max(1) as f64;
    Ok(PowerFit {
        points: lx.len(),
        slope,
        intercept,
        std_error: (residual / dof / sxx).sqrt(),
        residual,
    })
}

/// Fit of one exponent's mean SMCal against the horizon.
#[derive(Debug, Clone, PartialEq)]
pub struct ExponentFit {
    pub r: f64,
    /// `(horizon, mean smcal over seeds)`.
    pub means: Vec<(u64, f64)>,
    pub fit: PowerFit,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepReport {
    /// One row per `(horizon, seed, r)`, in that order.
    pub rows: Vec<SweepRow>,
    pub fits: Vec<ExponentFit>,
}

impl SweepReport {
    pub fn fit(&self, r: f64) -> Option<&ExponentFit> {
        self.fits.iter().find(|f| f.r == r)
    }
}

/// Runs every `(horizon, seed)` cell in parallel with the default bin count
/// for each horizon, scores each transcript at every exponent in `rs`, and
/// fits `ln mean-smcal` against `ln T` per exponent. When `out` is given,
/// `sweep.csv` is written even if a cell fails.
pub fn sweep(
    base: &ExperimentConfig,
    horizons: &[u64],
    seeds: &[u64],
    rs: &[f64],
    out: Option<&Path>,
) -> Result<SweepReport> {
    let mut distinct = horizons.to_vec();
    distinct.sort_unstable();
    distinct.dedup();
    if distinct.len() < 3 {
        return Err(argument("a sweep needs at least 3 distinct horizons"));
    }
    if seeds.is_empty() || rs.is_empty() {
        return Err(argument("a sweep needs at least one seed and one exponent"));
    }
    let cells: Vec<(u64, u64)> = horizons
        .iter()
        .flat_map(|&t| seeds.iter().map(move |&s| (t, s)))
        .collect();
    let results: Vec<Result<Vec<SweepRow>>> = cells
        .par_iter()
        .map(|&(horizon, seed)| {
            let cfg = ExperimentConfig {
                seed,
                ..base.at_horizon(horizon)
            };
            let start = Instant::now();
            let res = simulate(&cfg, RunOptions::TRANSCRIPT_ONLY)?;
            let metrics = compute_metrics(&cfg, &res.transcript, rs)?;
            let wall = start.elapsed().as_secs_f64();
            Ok(metrics
                .into_iter()
                .map(|m| SweepRow {
                    horizon,
                    bins: m.bins,
                    seed,
                    r: m.r,
                    smcal: m.smcal,
                    mcal: m.mcal,
                    cal: m.cal,
                    wall_seconds: wall,
                })
                .collect())
        })
        .collect();

    let mut rows = Vec::new();
    let mut failure = None;
    for r in results {
        match r {
            Ok(mut cell) => rows.append(&mut cell),
            Err(e) => {
                failure.get_or_insert(e);
            }
        }
    }
    if let Some(dir) = out {
        std::fs::create_dir_all(dir)?;
        io::write_rows(&dir.join(SWEEP_FILE), &rows)?;
    }
    if let Some(e) = failure {
        return Err(e);
    }

    let mut fits = Vec::new();
    for &r in rs {
        let means: Vec<(u64, f64)> = distinct
            .iter()
            .map(|&t| {
                let vals: Vec<f64> = rows
                    .iter()
                    .filter(|row| row.horizon == t && row.r == r)
                    .map(|row| row.smcal)
                    .collect();
                (t, vals.iter().sum::<f64>() / vals.len() as f64)
            })
            .collect();
        let xs: Vec<f64> = means.iter().map(|&(t, _)| t as f64).collect();
        let ys: Vec<f64> = means.iter().map(|&(_, m)| m).collect();
        let fit = fit_power_law(&xs, &ys)?;
        fits.push(ExponentFit { r, means, fit });
    }
    if let Some(dir) = out {
        let fit_rows: Vec<FitRow> = fits
            .iter()
            .map(|e| FitRow {
                r: e.r,
                points: e.fit.points,
                slope: e.fit.slope,
                intercept: e.fit.intercept,
                std_error: e.fit.std_error,
                residual: e.fit.residual,
            })
            .collect();
        io::write_rows(&dir.join(FIT_FILE), &fit_rows)?;
    }
    Ok(SweepReport { rows, fits })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::adversary::{AdversarySpec, ContextLaw};
    use crate::harness::config::Engine;
    use crate::hypothesis::ClassSpec;
    use crate::property::Property;

    #[test]
    fn exact_cube_root_fit() {
        let xs = [1000.0, 8000.0, 27000.0, 64000.0];
        let ys: Vec<f64> = xs.iter().map(|x: &f64| x.cbrt()).collect();
        let f = fit_power_law(&xs, &ys).unwrap();
        assert!((f.slope - 1.0 / 3.0).abs() < 1e-9);
        assert!(f.residual < 1e-18);
    }

    #[test]
    fn constant_data_has_zero_slope() {
        let f = fit_power_law(&[10.0, 20.0, 40.0], &[3.0, 3.0, 3.0]).unwrap();
        assert!(f.slope.abs() < 1e-12);
    }

    #[test]
    fn fit_needs_three_horizons() {
        assert!(fit_power_law(&[10.0, 10.0, 20.0], &[1.0, 2.0, 3.0]).is_err());
        assert!(fit_power_law(&[10.0, 20.0, 30.0], &[1.0, 0.0, 3.0]).is_err());
    }

    #[test]
    fn small_sweep_runs() {
        let base = ExperimentConfig {
            engine: Engine::Efficient,
            property: Property::mean(),
            class: ClassSpec::Groups {
                groups: 2,
                dim: 2,
                seed: 0,
            },
            adversary: AdversarySpec::Logistic {
                weights: vec![1.0, 1.0],
                context: ContextLaw::Cube,
            },
            horizon: 10,
            r: 2.0,
            bins: Some(3),
            seed: 0,
            out: None,
        };
        let dir = tempfile::tempdir().unwrap();
        let rep = sweep(
            &base,
            &[64, 128, 256],
            &[1, 2],
            &[1.0, 2.0],
            Some(dir.path()),
        )
        .unwrap();
        assert_eq!(rep.rows.len(), 12);
        assert_eq!(rep.rows[0].bins, 4);
        assert!(rep.fit(2.0).is_some() && rep.fit(1.0).is_some());
        let back: Vec<SweepRow> = io::read_rows(&dir.path().join(SWEEP_FILE)).unwrap();
        assert_eq!(back, rep.rows);
        assert!(sweep(&base, &[64, 128], &[1], &[2.0], None).is_err());
    }
}
