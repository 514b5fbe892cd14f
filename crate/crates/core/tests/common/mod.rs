//! Shared fixtures: brute-force metric oracles and random transcripts.
#![allow(dead_code)]

use rand::Rng;
use swapcal::{
    Context, GridConfig, Property, RoundRecord, TestFunction, Transcript, TwoPointDistribution,
};

/// Direct evaluation of `(MCal_r, SMCal_r)` for a finite class, looping over
/// bins, members, and rounds without any shared aggregation.
pub fn brute_force(
    transcript: &Transcript,
    property: &Property,
    members: &[TestFunction],
    r: f64,
) -> (f64, f64) {
    let bins = transcript.grid.bins();
    let mut per_member = vec![0.0f64; members.len()];
    let mut swap = 0.0;
    for bin in 1..=bins {
        let rounds: Vec<usize> = (0..transcript.len())
            .filter(|&t| transcript.rounds[t].bin == bin)
            .collect();
        if rounds.is_empty() {
            continue;
        }
        let n = rounds.len() as f64;
        let mut best = 0.0f64;
        for (f, member) in members.iter().enumerate() {
            let mut s = 0.0;
            for &t in &rounds {
                let rec = &transcript.rounds[t];
                let fx = member.evaluate(&transcript.contexts[t]).unwrap();
                s += fx * property.eval_identification(rec.p, rec.y).unwrap();
            }
            per_member[f] += n * (s.abs() / n).powf(r);
            best = best.max(s.abs());
        }
        swap += n * (best / n).powf(r);
    }
    (per_member.into_iter().fold(0.0, f64::max), swap)
}

/// A transcript with uniformly random bins, labels in `{0, 1/2, 1}` or
/// uniform, and contexts in the unit ball of dimension `dim`.
pub fn random_transcript<R: Rng>(
    rng: &mut R,
    rounds: usize,
    bins: usize,
    dim: usize,
) -> Transcript {
    let horizon = rounds.max(bins) as u64;
    let grid = GridConfig::new(bins, horizon).unwrap();
    let mut transcript = Transcript::new(grid);
    for t in 0..rounds {
        let bin = rng.random_range(1..=bins);
        let p = grid.point(bin);
        let idx = ((p * horizon as f64).round() as u64).min(horizon);
        let y = if rng.random::<bool>() {
            [0.0, 0.5, 1.0][rng.random_range(0..3)]
        } else {
            rng.random()
        };
        let mut x: Vec<f64> = (0..dim).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect();
        let norm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm > 1.0 {
            x.iter_mut().for_each(|v| *v /= norm);
        }
        transcript.push(
            RoundRecord {
                t: t as u64 + 1,
                p_tilde: idx as f64 / horizon as f64,
                bin,
                p,
                y,
                distribution: TwoPointDistribution::point_mass(idx, horizon).unwrap(),
            },
            Context::new(x).unwrap(),
        );
    }
    transcript
}
