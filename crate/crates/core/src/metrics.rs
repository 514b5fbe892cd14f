//! Calibration, multicalibration, and swap-multicalibration errors.
//!
//! For a transcript with `n_i` rounds predicting `z_i` and per-bin correlations
//! `S_{i,f} = sum_{t: p_t = z_i} f(x_t) V(p_t, y_t)`:
//!
//! ```text
//! MCal_r  = sup_f  sum_i n_i |S_{i,f} / n_i|^r
//! SMCal_r = sum_i n_i (sup_f |S_{i,f}| / n_i)^r
//! Cal_r   = MCal_r with F = {1}
//! ```
//!
//! Empty bins contribute zero. For the linear class `S_{i,theta} = <theta, v_i>`
//! with `v_i = sum_{t: p_t = z_i} x_t V(p_t, y_t)`, so the swap supremum is
//! `|v_i|`. The non-swap supremum over `theta` is found by the ascent
//! `theta <- grad / |grad|`, which is exact (power iteration) for `r = 2` and a
//! certified lower bound otherwise.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{argument, domain, Result};
use crate::forecaster::{GridConfig, RoundRecord};
use crate::hypothesis::{dot, l2_norm, Context, HypothesisClass, Witness};
use crate::property::Property;

/// Supported range of the exponent `r`.
pub const MAX_R: f64 = 8.0;

const POWER_TOL: f64 = 1e-10;
const POWER_MAX_ITERS: usize = 10_000;
const RESTARTS: usize = 32;

/// The full record of a run.
#[derive(Debug, Clone, PartialEq)]
pub struct Transcript {
    pub grid: GridConfig,
    pub rounds: Vec<RoundRecord>,
    pub contexts: Vec<Context>,
}

impl Transcript {
    pub fn new(grid: GridConfig) -> Self {
        Self {
            grid,
            rounds: Vec::new(),
            contexts: Vec::new(),
        }
    }

    pub fn push(&mut self, record: RoundRecord, context: Context) {
        self.rounds.push(record);
        self.contexts.push(context);
    }

    pub fn len(&self) -> usize {
        self.rounds.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rounds.is_empty()
    }

    /// Rounds per bin, `n_1..n_N`.
    pub fn bin_counts(&self) -> Vec<u64> {
        let mut counts = vec![0; self.grid.bins()];
        for r in &self.rounds {
            counts[r.bin - 1] += 1;
        }
        counts
    }
}

/// Per-bin sufficient statistics for every error in this module.
#[derive(Debug, Clone, PartialEq)]
pub struct BinAggregate {
    class: HypothesisClass,
    counts: Vec<u64>,
    /// Row `i` holds `S_{i,f}` for each member, or `v_i` for the linear class.
    sums: Vec<Vec<f64>>,
}

impl BinAggregate {
    pub fn class(&self) -> &HypothesisClass {
        &self.class
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn sums(&self, bin: usize) -> &[f64] {
        &self.sums[bin - 1]
    }

    pub fn bins(&self) -> usize {
        self.counts.len()
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    /// `sup_f |S_{i,f}|` and its maximizer for bin `i`.
    pub fn bin_supremum(&self, bin: usize) -> Result<(f64, Witness)> {
        self.class.sup_correlation(&self.sums[bin - 1])
    }
}

/// Single pass over the transcript.
pub fn aggregate(
    transcript: &Transcript,
    property: &Property,
    class: &HypothesisClass,
) -> Result<BinAggregate> {
    if transcript.is_empty() {
        return Err(argument("cannot aggregate an empty transcript"));
    }
    if transcript.contexts.len() != transcript.rounds.len() {
        return Err(argument(format!(
            "{} contexts for {} rounds",
            transcript.contexts.len(),
            transcript.rounds.len()
        )));
    }
    let bins = transcript.grid.bins();
    let width = class.feature_len();
    let mut counts = vec![0u64; bins];
    let mut sums = vec![vec![0.0; width]; bins];
    let mut features = Vec::with_capacity(width);
    for (round, x) in transcript.rounds.iter().zip(&transcript.contexts) {
        if round.bin == 0 || round.bin > bins {
            return Err(argument(format!(
                "round {} has bin {} outside 1..={bins}",
                round.t, round.bin
            )));
        }
        let residual = property.eval_identification(round.p, round.y)?;
        class.features_into(x, &mut features)?;
        counts[round.bin - 1] += 1;
        for (s, f) in sums[round.bin - 1].iter_mut().zip(&features) {
            *s += f * residual;
        }
    }
    Ok(BinAggregate {
        class: class.clone(),
        counts,
        sums,
    })
}

fn check_r(r: f64) -> Result<()> {
    if r.is_finite() && (1.0..=MAX_R).contains(&r) {
        Ok(())
    } else {
        Err(domain(format!(
            "r = {r} outside the supported range [1, {MAX_R}]"
        )))
    }
}

/// `n |s / n|^r`, zero for empty bins.
fn bin_term(n: u64, s: f64, r: f64) -> f64 {
    if n == 0 {
        return 0.0;
    }
    let n = n as f64;
    n * (s.abs() / n).powf(r)
}

/// Value of a multicalibration supremum, with whether it is exact.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McalValue {
    pub value: f64,
    /// `false` when the value is a lower bound from ascent over the sphere.
    pub exact: bool,
}

pub fn mcal(agg: &BinAggregate, r: f64) -> Result<McalValue> {
    check_r(r)?;
    match &agg.class {
        HypothesisClass::Finite(members) => {
            let value = (0..members.len())
                .map(|f| {
                    agg.counts
                        .iter()
                        .zip(&agg.sums)
                        .map(|(&n, row)| bin_term(n, row[f], r))
                        .sum::<f64>()
                })
                .fold(0.0, f64::max);
            Ok(McalValue { value, exact: true })
        }
        HypothesisClass::Linear { dim } => {
            let value = linear_mcal(agg, *dim, r);
            Ok(McalValue {
                value,
                exact: r == 2.0,
            })
        }
    }
}

pub fn smcal(agg: &BinAggregate, r: f64) -> Result<f64> {
    check_r(r)?;
    let mut total = 0.0;
    for (bin, &n) in agg.counts.iter().enumerate() {
        if n == 0 {
            continue;
        }
        let (sup, _) = agg.bin_supremum(bin + 1)?;
        total += bin_term(n, sup, r);
    }
    Ok(total)
}

/// Plain `l_r` calibration error of the property.
pub fn cal(transcript: &Transcript, property: &Property, r: f64) -> Result<f64> {
    let agg = aggregate(transcript, property, &HypothesisClass::singleton())?;
    Ok(mcal(&agg, r)?.value)
}

/// `sup_{|theta| <= 1} sum_i n_i^(1-r) |<theta, v_i>|^r`.
fn linear_mcal(agg: &BinAggregate, dim: usize, r: f64) -> f64 {
    let active: Vec<(f64, &[f64])> = agg
        .counts
        .iter()
        .zip(&agg.sums)
        .filter(|(&n, v)| n > 0 && l2_norm(v) > 0.0)
        .map(|(&n, v)| ((n as f64).powf(1.0 - r), v.as_slice()))
        .collect();
    if active.is_empty() {
        return 0.0;
    }
    let objective = |theta: &[f64]| -> f64 {
        active
            .iter()
            .map(|(scale, v)| scale * dot(theta, v).abs().powf(r))
            .sum()
    };

    let mut starts: Vec<Vec<f64>> = Vec::new();
    let mut ranked: Vec<&(f64, &[f64])> = active.iter().collect();
    ranked.sort_by(|a, b| {
        let wa = a.0 * l2_norm(a.1).powf(r);
        let wb = b.0 * l2_norm(b.1).powf(r);
        wb.total_cmp(&wa)
    });
    let mut sum = vec![0.0; dim];
    for (_, v) in &active {
        sum.iter_mut().zip(v.iter()).for_each(|(s, x)| *s += x);
    }
    starts.push(sum);
    for (_, v) in ranked.iter().take(RESTARTS / 2) {
        starts.push(v.to_vec());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    while starts.len() < RESTARTS {
        starts.push((0..dim).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect());
    }

    let mut best = 0.0f64;
    for start in starts {
        let norm = l2_norm(&start);
        if norm == 0.0 {
            continue;
        }
        let mut theta: Vec<f64> = start.iter().map(|v| v / norm).collect();
        let mut value = objective(&theta);
        for _ in 0..POWER_MAX_ITERS {
            let mut grad = vec![0.0; dim];
            for (scale, v) in &active {
                let a = dot(&theta, v);
                let coeff = scale * a.abs().powf(r - 1.0) * a.signum();
                grad.iter_mut()
                    .zip(v.iter())
                    .for_each(|(g, x)| *g += coeff * x);
            }
            let gnorm = l2_norm(&grad);
            if gnorm == 0.0 {
                break;
            }
            let next: Vec<f64> = grad.iter().map(|g| g / gnorm).collect();
            let next_value = objective(&next);
            if next_value <= value {
                break;
            }
            let done = next_value - value <= POWER_TOL * next_value.max(1e-300);
            theta = next;
            value = next_value;
            if done {
                break;
            }
        }
        best = best.max(value);
    }
    best
}

/// One line of the optional per-bin table.
#[derive(Debug, Clone, PartialEq)]
pub struct BinRow {
    pub bin: usize,
    pub point: f64,
    pub count: u64,
    pub sup_correlation: f64,
    pub witness: Witness,
}

pub fn per_bin(agg: &BinAggregate, grid: &GridConfig) -> Result<Vec<BinRow>> {
    (1..=agg.bins())
        .map(|bin| {
            let (sup, witness) = agg.bin_supremum(bin)?;
            Ok(BinRow {
                bin,
                point: grid.point(bin),
                count: agg.counts[bin - 1],
                sup_correlation: sup,
                witness,
            })
        })
        .collect()
}
