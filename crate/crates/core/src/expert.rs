//! Expert-problem subroutine with per-expert second-order regret.
//!
//! Two layers of multiplicative weights with a second-order correction term.
//! Each sub-instance `j` runs over all `K` experts at a fixed rate
//! `eta_j = min(1/4, 2^-j)`, `j = 1..=max(1, ceil(log2 T))`, with update
//!
//! ```text
//! w'(k) ∝ w(k) · exp(eta_j g_k - eta_j^2 g_k^2)
//! ```
//!
//! and a master mixes the sub-instances with the same update applied to each
//! sub-instance's expected gain `G_j = <w_j, g>`, starting from a prior
//! proportional to `eta_j^2`. The played distribution is the master-weighted
//! mixture of the sub-instance distributions.
//!
//! The correction term gives a sub-instance at rate `eta` regret at most
//! `ln K / eta + eta * sum_t g_{t,k}^2` against expert `k`; the rate grid lets
//! the master track whichever rate is tuned to `sum_t g_{t,k}^2`.
//!
//! Weights live in log-space and are renormalized after each update.

use crate::error::{argument, domain, Result};

/// Largest learning rate in the grid.
pub const MAX_RATE: f64 = 0.25;

/// Slack allowed on `|gain| <= 1` for floating-point rounding upstream.
const GAIN_TOL: f64 = 1e-12;

#[derive(Debug, Clone)]
pub struct ExpertState {
    experts: usize,
    horizon: u64,
    rates: Vec<f64>,
    /// Row-major `rates.len() x experts` log-probabilities.
    log_weights: Vec<f64>,
    log_master: Vec<f64>,
    /// Cached `exp` of the two tables above.
    weights: Vec<f64>,
    master: Vec<f64>,
    round: u64,
}

/// Number of rates used for horizon `T`: `max(1, ceil(log2 T))`.
pub fn rate_count(horizon: u64) -> usize {
    let bits = if horizon <= 1 {
        0
    } else {
        64 - (horizon - 1).leading_zeros() as usize
    };
    bits.max(1)
}

impl ExpertState {
    pub fn new(experts: usize, horizon: u64) -> Result<Self> {
        if experts == 0 {
            return Err(argument("expert count must be positive"));
        }
        if horizon == 0 {
            return Err(argument("horizon must be positive"));
        }
        let rates: Vec<f64> = (1..=rate_count(horizon))
            .map(|j| MAX_RATE.min(0.5f64.powi(j as i32)))
            .collect();
        let uniform = -(experts as f64).ln();
        let log_weights = vec![uniform; rates.len() * experts];
        let mut log_master: Vec<f64> = rates.iter().map(|eta| 2.0 * eta.ln()).collect();
        normalize_log(&mut log_master);
        let mut state = Self {
            experts,
            horizon,
            weights: vec![0.0; log_weights.len()],
            master: vec![0.0; rates.len()],
            rates,
            log_weights,
            log_master,
            round: 0,
        };
        state.refresh();
        Ok(state)
    }

    pub fn experts(&self) -> usize {
        self.experts
    }

    pub fn horizon(&self) -> u64 {
        self.horizon
    }

    pub fn rates(&self) -> &[f64] {
        &self.rates
    }

    pub fn round(&self) -> u64 {
        self.round
    }

    pub fn master_weights(&self) -> &[f64] {
        &self.master
    }

    /// Distribution of sub-instance `j` over experts.
    pub fn rate_weights(&self, j: usize) -> &[f64] {
        &self.weights[j * self.experts..(j + 1) * self.experts]
    }

    /// Marginal distribution over experts.
    pub fn weights(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.experts];
        self.weights_into(&mut out);
        out
    }

    pub fn weights_into(&self, out: &mut [f64]) {
        debug_assert_eq!(out.len(), self.experts);
        out.iter_mut().for_each(|v| *v = 0.0);
        for (row, m) in self.weights.chunks_exact(self.experts).zip(&self.master) {
            for (o, w) in out.iter_mut().zip(row) {
                *o += m * w;
            }
        }
    }

    pub fn update(&mut self, gains: &[f64]) -> Result<()> {
        if gains.len() != self.experts {
            return Err(argument(format!(
                "gain vector has length {}, expected {}",
                gains.len(),
                self.experts
            )));
        }
        if let Some(g) = gains
            .iter()
            .find(|g| g.is_nan() || g.abs() > 1.0 + GAIN_TOL)
        {
            return Err(domain(format!("gain {g} outside [-1, 1]")));
        }
        let k = self.experts;
        for (j, &eta) in self.rates.iter().enumerate() {
            let row = j * k..(j + 1) * k;
            let expected: f64 = self.weights[row.clone()]
                .iter()
                .zip(gains)
                .map(|(w, g)| w * g)
                .sum();
            for (lw, &g) in self.log_weights[row.clone()].iter_mut().zip(gains) {
                *lw += eta * g - eta * eta * g * g;
            }
            normalize_log(&mut self.log_weights[row]);
            self.log_master[j] += eta * expected - eta * eta * expected * expected;
        }
        normalize_log(&mut self.log_master);
        self.refresh();
        self.round += 1;
        Ok(())
    }

    fn refresh(&mut self) {
        for (w, lw) in self.weights.iter_mut().zip(&self.log_weights) {
            *w = lw.exp();
        }
        for (m, lm) in self.master.iter_mut().zip(&self.log_master) {
            *m = lm.exp();
        }
    }
}

/// Shifts `v` so that `sum exp(v) = 1`.
fn normalize_log(v: &mut [f64]) {
    let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + v.iter().map(|x| (x - max).exp()).sum::<f64>().ln();
    v.iter_mut().for_each(|x| *x -= lse);
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::error::Error;

    #[test]
    fn rate_grid_sizes() {
        assert_eq!(rate_count(1), 1);
        assert_eq!(rate_count(2), 1);
        assert_eq!(rate_count(3), 2);
        assert_eq!(rate_count(16), 4);
        assert_eq!(rate_count(17), 5);
        assert_eq!(rate_count(1 << 15), 15);
        let s = ExpertState::new(2, 1).unwrap();
        assert_eq!(s.rates(), &[0.25]);
        assert_eq!(s.weights(), vec![0.5, 0.5]);
    }

    #[test]
    fn rates_are_capped() {
        let s = ExpertState::new(3, 1000).unwrap();
        assert_eq!(s.rates().len(), 10);
        assert!(s.rates().iter().all(|&e| e > 0.0 && e <= MAX_RATE));
        assert_eq!(s.rates()[0], 0.25);
        assert_eq!(s.rates()[2], 0.125);
        let m = s.master_weights();
        assert!((m.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!((m[2] / m[3] - 4.0).abs() < 1e-9);
    }

    #[test]
    fn init_examples() {
        let single = ExpertState::new(1, 50).unwrap();
        assert!((single.weights()[0] - 1.0).abs() < 1e-12);
        let four = ExpertState::new(4, 16).unwrap();
        for w in four.weights() {
            assert!((w - 0.25).abs() < 1e-12);
        }
        let three = ExpertState::new(3, 9).unwrap();
        for w in three.weights() {
            assert!((w - 1.0 / 3.0).abs() < 1e-12);
        }
        assert!(matches!(ExpertState::new(0, 5), Err(Error::Argument(_))));
        assert!(matches!(ExpertState::new(5, 0), Err(Error::Argument(_))));
    }

    #[test]
    fn single_rate_update_matches_hand_substitution() {
        let mut s = ExpertState::new(2, 1).unwrap();
        s.update(&[1.0, -1.0]).unwrap();
        let a = 0.1875f64.exp();
        let b = (-0.3125f64).exp();
        let w = s.weights();
        assert!((w[0] - a / (a + b)).abs() < 1e-12);
        assert!((w[1] - b / (a + b)).abs() < 1e-12);
        assert_eq!(s.round(), 1);
    }

    #[test]
    fn zero_and_equal_gains_leave_marginal_unchanged() {
        let mut s = ExpertState::new(3, 64).unwrap();
        let before = s.weights();
        s.update(&[0.0; 3]).unwrap();
        for (a, b) in before.iter().zip(s.weights()) {
            assert!((a - b).abs() < 1e-12);
        }
        s.update(&[0.7; 3]).unwrap();
        for (a, b) in before.iter().zip(s.weights()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn favoured_expert_gains_weight() {
        let mut s = ExpertState::new(3, 64).unwrap();
        s.update(&[0.0, 1.0, 0.2]).unwrap();
        let w = s.weights();
        assert!(w[1] > w[0] && w[1] > w[2]);
    }

    #[test]
    fn rejects_bad_gains() {
        let mut s = ExpertState::new(2, 4).unwrap();
        assert!(matches!(s.update(&[1.5, 0.0]), Err(Error::Domain(_))));
        assert!(matches!(s.update(&[f64::NAN, 0.0]), Err(Error::Domain(_))));
        assert!(matches!(s.update(&[0.0]), Err(Error::Argument(_))));
        assert_eq!(s.round(), 0);
    }
}
