//! The two forecasting engines.
//!
//! Each round both engines build a piecewise-constant audit function `Phi_t`
//! from the expert weights, pick a distribution `P_t` over the `1/T` grid
//! that makes `E_{p ~ P_t}[Phi_t(p) V(p, Y)]` at most `rho / T` for every label
//! law satisfying the identification assumption, sample from it, and snap the
//! draw to the right endpoint `i/N` of its bin.
//!
//! * [`Forecaster::enumerating`] runs one expert per `(f, i, sigma)` for every
//!   member `f` of a finite class (`2 N |F|` experts).
//! * [`Forecaster::oracle_efficient`] runs one expert per `(i, sigma)` and
//!   replaces `f` by the current output of an online agnostic learner
//!   `OAL_{i, sigma}`; only the two learners of the realized bin are fed.
//!
//! Expert indices enumerate `sigma = +1, -1` innermost, then the bin `i`, then
//! the member `f`.

use std::sync::Arc;

use rand::Rng;

use crate::error::{argument, domain, Error, Result};
use crate::expert::ExpertState;
use crate::hypothesis::{Context, HypothesisClass};
use crate::learner::AgnosticLearner;
use crate::property::Property;

/// Prediction grid: `N` bins over a horizon of `T` rounds.
///
/// Bins are `I_i = [(i-1)/N, i/N)` for `i < N` and `I_N = [(N-1)/N, 1]`;
/// predictions are `z_i = i/N`. Bin indices are 1-based throughout.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GridConfig {
    bins: usize,
    horizon: u64,
}

impl GridConfig {
    pub fn new(bins: usize, horizon: u64) -> Result<Self> {
        if bins == 0 || horizon == 0 {
            return Err(argument("bins and horizon must be positive"));
        }
        if bins as u64 > horizon {
            return Err(argument(format!(
                "bins ({bins}) must not exceed the horizon ({horizon})"
            )));
        }
        Ok(Self { bins, horizon })
    }

    /// Grid with the default bin count `ceil(T^(1/(r+1)))`.
    pub fn with_default_bins(horizon: u64, r: f64) -> Result<Self> {
        Self::new(default_bins(horizon, r)?, horizon)
    }

    pub fn bins(&self) -> usize {
        self.bins
    }

    pub fn horizon(&self) -> u64 {
        self.horizon
    }

    /// `z_i = i / N`.
    pub fn point(&self, bin: usize) -> f64 {
        bin as f64 / self.bins as f64
    }

    /// Bin containing the grid point `m / T`, computed in integers.
    pub fn bin_of_index(&self, m: u64) -> usize {
        debug_assert!(m <= self.horizon);
        let b = (u128::from(m) * self.bins as u128 / u128::from(self.horizon)) as usize;
        b.min(self.bins - 1) + 1
    }

    /// Bin containing an arbitrary `p` in `[0, 1]`.
    pub fn bin_of(&self, p: f64) -> usize {
        let b = (p * self.bins as f64).floor();
        (b.max(0.0) as usize).min(self.bins - 1) + 1
    }
}

/// `ceil(T^(1/(r+1)))`, clamped to `[1, T]`.
pub fn default_bins(horizon: u64, r: f64) -> Result<usize> {
    if !(r >= 1.0 && r.is_finite()) {
        return Err(domain(format!("r = {r} must be at least 1")));
    }
    if horizon == 0 {
        return Err(argument("horizon must be positive"));
    }
    let exponent = 1.0 / (r + 1.0);
    let approx = (horizon as f64).powf(exponent).ceil() as u64;
    // Float powers can land just above an exact integer root.
    let mut n = approx.max(1);
    while n > 1 && ((n - 1) as f64).powf(r + 1.0) >= horizon as f64 * (1.0 - 1e-12) {
        n -= 1;
    }
    Ok(n.min(horizon) as usize)
}

/// Values of `Phi_t` on each bin.
#[derive(Debug, Clone, PartialEq)]
pub struct PhiProfile(Vec<f64>);

impl PhiProfile {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(argument("phi profile needs at least one bin"));
        }
        if let Some(v) = values.iter().find(|v| v.is_nan() || v.abs() > 1.0 + 1e-12) {
            return Err(domain(format!("phi value {v} outside [-1, 1]")));
        }
        Ok(Self(values))
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn bins(&self) -> usize {
        self.0.len()
    }

    /// `Phi(m / T)`.
    pub fn at_index(&self, m: u64, grid: &GridConfig) -> f64 {
        self.0[grid.bin_of_index(m) - 1]
    }

    pub fn at(&self, p: f64, grid: &GridConfig) -> f64 {
        self.0[grid.bin_of(p) - 1]
    }
}

/// `v_i = sum_{f, sigma} w_{f,i,sigma} sigma f(x)`.
pub fn phi_from_class(weights: &[f64], member_values: &[f64], bins: usize) -> Result<PhiProfile> {
    let members = member_values.len();
    if weights.len() != 2 * bins * members {
        return Err(argument(format!(
            "expected {} weights for {members} members and {bins} bins, got {}",
            2 * bins * members,
            weights.len()
        )));
    }
    let mut v = vec![0.0; bins];
    for (f, fx) in member_values.iter().enumerate() {
        let block = &weights[f * 2 * bins..(f + 1) * 2 * bins];
        for (vi, pair) in v.iter_mut().zip(block.chunks_exact(2)) {
            *vi += (pair[0] - pair[1]) * fx;
        }
    }
    PhiProfile::new(v)
}

/// `v_i = w_{i,+1} q_{i,+1}(x) - w_{i,-1} q_{i,-1}(x)`.
pub fn phi_from_learners(weights: &[f64], q_values: &[f64]) -> Result<PhiProfile> {
    if weights.len() != q_values.len() || !weights.len().is_multiple_of(2) || weights.is_empty() {
        return Err(argument(format!(
            "need matching even-length weights and q-values, got {} and {}",
            weights.len(),
            q_values.len()
        )));
    }
    let v = weights
        .chunks_exact(2)
        .zip(q_values.chunks_exact(2))
        .map(|(w, q)| w[0] * q[0] - w[1] * q[1])
        .collect();
    PhiProfile::new(v)
}

/// A distribution on one grid point or two adjacent points of `{0, 1/T, ..., 1}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TwoPointDistribution {
    horizon: u64,
    lo: u64,
    hi: u64,
    prob_lo: f64,
}

impl TwoPointDistribution {
    pub fn point_mass(index: u64, horizon: u64) -> Result<Self> {
        if index > horizon {
            return Err(argument(format!(
                "grid index {index} beyond horizon {horizon}"
            )));
        }
        Ok(Self {
            horizon,
            lo: index,
            hi: index,
            prob_lo: 1.0,
        })
    }

    pub fn two_point(lo: u64, prob_lo: f64, horizon: u64) -> Result<Self> {
        if lo >= horizon {
            return Err(argument(format!(
                "left point {lo} must be below horizon {horizon}"
            )));
        }
        if !(prob_lo > 0.0 && prob_lo < 1.0) {
            return Err(domain(format!(
                "two-point probability {prob_lo} must lie in (0, 1)"
            )));
        }
        Ok(Self {
            horizon,
            lo,
            hi: lo + 1,
            prob_lo,
        })
    }

    /// Rebuilds a distribution from its serialized support and left mass.
    pub fn from_parts(horizon: u64, lo: u64, hi: u64, prob_lo: f64) -> Result<Self> {
        if lo == hi || prob_lo == 1.0 {
            if lo != hi || prob_lo != 1.0 {
                return Err(argument(
                    "point mass must have equal support points and mass 1",
                ));
            }
            Self::point_mass(lo, horizon)
        } else if hi == lo + 1 {
            Self::two_point(lo, prob_lo, horizon)
        } else {
            Err(argument(format!(
                "support points {lo}/{horizon} and {hi}/{horizon} are not adjacent"
            )))
        }
    }

    pub fn horizon(&self) -> u64 {
        self.horizon
    }

    pub fn is_point_mass(&self) -> bool {
        self.lo == self.hi
    }

    pub fn lo_index(&self) -> u64 {
        self.lo
    }

    pub fn hi_index(&self) -> u64 {
        self.hi
    }

    pub fn prob_lo(&self) -> f64 {
        self.prob_lo
    }

    pub fn prob_hi(&self) -> f64 {
        if self.is_point_mass() {
            0.0
        } else {
            1.0 - self.prob_lo
        }
    }

    pub fn lo_point(&self) -> f64 {
        self.lo as f64 / self.horizon as f64
    }

    pub fn hi_point(&self) -> f64 {
        self.hi as f64 / self.horizon as f64
    }

    /// `(grid index, probability)` pairs with positive mass.
    pub fn support(&self) -> impl Iterator<Item = (u64, f64)> + '_ {
        let hi = (!self.is_point_mass()).then_some((self.hi, 1.0 - self.prob_lo));
        std::iter::once((self.lo, self.prob_lo)).chain(hi)
    }

    /// `E_{p ~ P}[g(p)]` for a function of the grid point `p = m / T`.
    pub fn expect(&self, mut g: impl FnMut(f64) -> f64) -> f64 {
        let lo = self.prob_lo * g(self.lo_point());
        if self.is_point_mass() {
            lo
        } else {
            lo + (1.0 - self.prob_lo) * g(self.hi_point())
        }
    }
}

/// Picks `P_t` for a given audit profile: a point mass at 0 when `Phi(0) > 0`,
/// a point mass at 1 when `Phi(1) <= 0`, and otherwise the inverse-magnitude
/// mix of an adjacent grid pair across which `Phi` changes sign.
///
/// The pair is found by bisection on the `1/T` grid holding
/// `Phi(lo) <= 0 < Phi(hi)`, which is valid for non-monotone `Phi`.
pub fn solve_distribution(phi: &PhiProfile, grid: &GridConfig) -> Result<TwoPointDistribution> {
    if phi.bins() != grid.bins() {
        return Err(argument(format!(
            "phi has {} bins, grid has {}",
            phi.bins(),
            grid.bins()
        )));
    }
    let horizon = grid.horizon();
    let values = phi.values();
    if values[0] > 0.0 {
        return TwoPointDistribution::point_mass(0, horizon);
    }
    if values[grid.bins() - 1] <= 0.0 {
        return TwoPointDistribution::point_mass(horizon, horizon);
    }
    let (mut lo, mut hi) = (0u64, horizon);
    while hi - lo > 1 {
        let mid = lo + (hi - lo) / 2;
        if phi.at_index(mid, grid) <= 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let a = phi.at_index(lo, grid).abs();
    let b = phi.at_index(hi, grid).abs();
    let prob_lo = if a + b == 0.0 { 0.5 } else { b / (a + b) };
    if prob_lo >= 1.0 {
        TwoPointDistribution::point_mass(lo, horizon)
    } else if prob_lo <= 0.0 {
        TwoPointDistribution::point_mass(hi, horizon)
    } else {
        TwoPointDistribution::two_point(lo, prob_lo, horizon)
    }
}

/// Outcome of sampling `P_t` and snapping to the prediction grid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Prediction {
    pub p_tilde_index: u64,
    pub p_tilde: f64,
    pub bin: usize,
    pub p: f64,
}

/// Draws `p_tilde ~ P_t` from a single uniform variate and rounds it to its
/// bin's prediction point.
pub fn sample_and_round<R: Rng + ?Sized>(
    dist: &TwoPointDistribution,
    grid: &GridConfig,
    rng: &mut R,
) -> Prediction {
    let u: f64 = rng.random();
    let index = if dist.is_point_mass() || u < dist.prob_lo() {
        dist.lo_index()
    } else {
        dist.hi_index()
    };
    let bin = grid.bin_of_index(index);
    Prediction {
        p_tilde_index: index,
        p_tilde: index as f64 / grid.horizon() as f64,
        bin,
        p: grid.point(bin),
    }
}

/// `E_{p ~ P}[1[p in I_i] V(p, y)]` for every bin `i`; at most two are nonzero.
fn bin_residuals(
    dist: &TwoPointDistribution,
    grid: &GridConfig,
    property: &Property,
    y: f64,
) -> [(usize, f64); 2] {
    let mut out = [(0usize, 0.0); 2];
    for (slot, (m, prob)) in out.iter_mut().zip(dist.support()) {
        let p = m as f64 / grid.horizon() as f64;
        *slot = (grid.bin_of_index(m), prob * property.identify(p, y));
    }
    out
}

/// Gains for the `(f, i, sigma)` experts:
/// `sigma f(x) E_{p ~ P}[1[p in I_i] V(p, y)]`.
pub fn gains_inefficient(
    dist: &TwoPointDistribution,
    grid: &GridConfig,
    property: &Property,
    member_values: &[f64],
    y: f64,
) -> Result<Vec<f64>> {
    let mut out = vec![0.0; 2 * grid.bins() * member_values.len()];
    fill_gains_inefficient(dist, grid, property, member_values, y, &mut out)?;
    Ok(out)
}

fn fill_gains_inefficient(
    dist: &TwoPointDistribution,
    grid: &GridConfig,
    property: &Property,
    member_values: &[f64],
    y: f64,
    out: &mut [f64],
) -> Result<()> {
    check_label(y)?;
    let bins = grid.bins();
    out.iter_mut().for_each(|g| *g = 0.0);
    for (bin, residual) in bin_residuals(dist, grid, property, y) {
        if bin == 0 {
            continue;
        }
        for (f, fx) in member_values.iter().enumerate() {
            let base = (f * bins + bin - 1) * 2;
            out[base] += fx * residual;
            out[base + 1] -= fx * residual;
        }
    }
    Ok(())
}

/// Gains for the `(i, sigma)` experts: `sigma q_{i,sigma}(x) E_{p ~ P}[1[p in I_i] V(p, y)]`.
pub fn gains_efficient(
    dist: &TwoPointDistribution,
    grid: &GridConfig,
    property: &Property,
    q_values: &[f64],
    y: f64,
) -> Result<Vec<f64>> {
    if q_values.len() != 2 * grid.bins() {
        return Err(argument(format!(
            "expected {} q-values, got {}",
            2 * grid.bins(),
            q_values.len()
        )));
    }
    let mut out = vec![0.0; q_values.len()];
    fill_gains_efficient(dist, grid, property, q_values, y, &mut out)?;
    Ok(out)
}

fn fill_gains_efficient(
    dist: &TwoPointDistribution,
    grid: &GridConfig,
    property: &Property,
    q_values: &[f64],
    y: f64,
    out: &mut [f64],
) -> Result<()> {
    check_label(y)?;
    out.iter_mut().for_each(|g| *g = 0.0);
    for (bin, residual) in bin_residuals(dist, grid, property, y) {
        if bin == 0 {
            continue;
        }
        let base = (bin - 1) * 2;
        out[base] += q_values[base] * residual;
        out[base + 1] -= q_values[base + 1] * residual;
    }
    Ok(())
}

fn check_label(y: f64) -> Result<()> {
    if y.is_finite() && (0.0..=1.0).contains(&y) {
        Ok(())
    } else {
        Err(domain(format!("label {y} outside [0, 1]")))
    }
}

/// One executed round.
#[derive(Debug, Clone, PartialEq)]
pub struct RoundRecord {
    /// 1-based round index.
    pub t: u64,
    pub p_tilde: f64,
    pub bin: usize,
    pub p: f64,
    pub y: f64,
    pub distribution: TwoPointDistribution,
}

impl RoundRecord {
    pub fn p_tilde_index(&self) -> u64 {
        (self.p_tilde * self.distribution.horizon() as f64).round() as u64
    }
}

/// Everything the engine computed in a round, for audits and replay.
#[derive(Debug, Clone)]
pub struct RoundOutput {
    pub record: RoundRecord,
    pub phi: PhiProfile,
    /// Gain vector fed to the expert subroutine.
    pub gains: Vec<f64>,
    /// `q_{i,sigma}(x_t)` for the oracle-efficient engine.
    pub q_values: Option<Vec<f64>>,
}

#[derive(Debug, Clone)]
enum Auditor {
    /// Experts over `(f, i, sigma)`.
    Enumerated,
    /// Experts over `(i, sigma)`, each backed by its own learner.
    Learners(Vec<AgnosticLearner>),
}

/// A forecasting engine; one instance runs a single sequential transcript.
#[derive(Debug, Clone)]
pub struct Forecaster {
    grid: GridConfig,
    property: Property,
    class: Arc<HypothesisClass>,
    experts: ExpertState,
    auditor: Auditor,
    round: u64,
    features: Vec<f64>,
    weights: Vec<f64>,
}

impl Forecaster {
    /// Engine that enumerates a finite class (`2 N |F|` experts).
    pub fn enumerating(
        grid: GridConfig,
        property: Property,
        class: Arc<HypothesisClass>,
    ) -> Result<Self> {
        let members = class
            .members()
            .ok_or_else(|| argument("the enumerating engine needs a finite hypothesis class"))?
            .len();
        let experts = ExpertState::new(2 * grid.bins() * members, grid.horizon())?;
        Ok(Self::assemble(
            grid,
            property,
            class,
            experts,
            Auditor::Enumerated,
        ))
    }

    /// Engine backed by `2 N` online agnostic learners (`2 N` experts).
    pub fn oracle_efficient(
        grid: GridConfig,
        property: Property,
        class: Arc<HypothesisClass>,
    ) -> Result<Self> {
        let experts = ExpertState::new(2 * grid.bins(), grid.horizon())?;
        let learners = (0..2 * grid.bins())
            .map(|_| AgnosticLearner::new(class.clone()))
            .collect();
        Ok(Self::assemble(
            grid,
            property,
            class,
            experts,
            Auditor::Learners(learners),
        ))
    }

    fn assemble(
        grid: GridConfig,
        property: Property,
        class: Arc<HypothesisClass>,
        experts: ExpertState,
        auditor: Auditor,
    ) -> Self {
        let k = experts.experts();
        Self {
            grid,
            property,
            class,
            experts,
            auditor,
            round: 0,
            features: Vec::new(),
            weights: vec![0.0; k],
        }
    }

    pub fn grid(&self) -> &GridConfig {
        &self.grid
    }

    pub fn property(&self) -> &Property {
        &self.property
    }

    pub fn class(&self) -> &HypothesisClass {
        &self.class
    }

    pub fn experts(&self) -> &ExpertState {
        &self.experts
    }

    /// Rounds executed so far.
    pub fn round(&self) -> u64 {
        self.round
    }

    /// Learner for bin `i` (1-based) and sign `sigma`, oracle-efficient engine only.
    pub fn learner(&self, bin: usize, sigma: i8) -> Option<&AgnosticLearner> {
        match &self.auditor {
            Auditor::Learners(l) => l.get((bin - 1) * 2 + usize::from(sigma < 0)),
            Auditor::Enumerated => None,
        }
    }

    pub fn is_oracle_efficient(&self) -> bool {
        matches!(self.auditor, Auditor::Learners(_))
    }

    /// Runs one round. `rng` supplies exactly one uniform variate for
    /// sampling; `label` is called after the prediction is fixed and returns
    /// `y_t`.
    pub fn step<R, F>(&mut self, x: &Context, rng: &mut R, label: F) -> Result<RoundOutput>
    where
        R: Rng + ?Sized,
        F: FnOnce(&Prediction) -> f64,
    {
        if self.round >= self.grid.horizon() {
            return Err(Error::State(format!(
                "horizon of {} rounds exhausted",
                self.grid.horizon()
            )));
        }
        self.class.features_into(x, &mut self.features)?;
        self.experts.weights_into(&mut self.weights);

        let (phi, q_values) = match &self.auditor {
            Auditor::Enumerated => (
                phi_from_class(&self.weights, &self.features, self.grid.bins())?,
                None,
            ),
            Auditor::Learners(learners) => {
                let q: Vec<f64> = learners
                    .iter()
                    .map(|l| l.predict_features(&self.features))
                    .collect();
                (phi_from_learners(&self.weights, &q)?, Some(q))
            }
        };
        let distribution = solve_distribution(&phi, &self.grid)?;
        let prediction = sample_and_round(&distribution, &self.grid, rng);
        let y = label(&prediction);

        let mut gains = vec![0.0; self.experts.experts()];
        match &q_values {
            None => fill_gains_inefficient(
                &distribution,
                &self.grid,
                &self.property,
                &self.features,
                y,
                &mut gains,
            )?,
            Some(q) => {
                fill_gains_efficient(&distribution, &self.grid, &self.property, q, y, &mut gains)?
            }
        }
        self.experts.update(&gains)?;

        if let Auditor::Learners(learners) = &mut self.auditor {
            let residual = self.property.identify(prediction.p, y);
            let base = (prediction.bin - 1) * 2;
            learners[base].observe_features(&self.features, residual)?;
            learners[base + 1].observe_features(&self.features, -residual)?;
        }

        self.round += 1;
        let record = RoundRecord {
            t: self.round,
            p_tilde: prediction.p_tilde,
            bin: prediction.bin,
            p: prediction.p,
            y,
            distribution,
        };
        Ok(RoundOutput {
            record,
            phi,
            gains,
            q_values,
        })
    }
}
