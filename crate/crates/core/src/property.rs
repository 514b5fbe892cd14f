//! Elicitable properties described by their identification functions.
//!
//! A property is carried as an identification function `V(p, y)` whose
//! expectation under a label law vanishes exactly at the property value, plus
//! a Lipschitz constant `rho` for the marginal `p -> E[V(p, Y)]`. All built-in
//! identification functions take values in `[-1, 1]` on `[0, 1]^2`:
//!
//! | property            | `V(p, y)`                                        |
//! |---------------------|--------------------------------------------------|
//! | mean                | `p - y`                                          |
//! | quantile `q`        | `1[y <= p] - q`                                  |
//! | expectile `tau`     | `(p - y)(1 - tau)` if `p >= y`, else `(p - y)tau` |
//! | raw moment `k`      | `p - y^k`                                        |
//!
//! The raw-moment function is the derivative of the squared loss
//! `(p - y^k)^2` divided by two, which is the scaling that keeps its range in
//! `[-1, 1]`.
//!
//! `rho` is metadata for audits and adversaries. Forecasters never read it.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use statrs::function::beta::{beta_reg, inv_beta_reg, ln_beta};

use crate::error::{argument, config, domain, Error, Result};

/// The identification family of a property.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PropertyKind {
    Mean,
    Quantile { q: f64 },
    Expectile { tau: f64 },
    RawMoment { k: u32 },
}

/// An elicitable property packaged with its Lipschitz metadata.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Property {
    pub name: String,
    pub kind: PropertyKind,
    pub lipschitz_rho: f64,
}

impl Property {
    pub fn new(kind: PropertyKind, lipschitz_rho: f64) -> Result<Self> {
        match kind {
            PropertyKind::Mean => {}
            PropertyKind::Quantile { q } => {
                if !(0.0..=1.0).contains(&q) {
                    return Err(domain(format!("quantile level {q} outside [0, 1]")));
                }
            }
            PropertyKind::Expectile { tau } => {
                if !(tau > 0.0 && tau < 1.0) {
                    return Err(domain(format!("expectile level {tau} outside (0, 1)")));
                }
            }
            PropertyKind::RawMoment { k } => {
                if k == 0 {
                    return Err(domain("raw moment order must be positive"));
                }
            }
        }
        if !(lipschitz_rho.is_finite() && lipschitz_rho > 0.0) {
            return Err(domain(format!(
                "lipschitz constant {lipschitz_rho} must be positive"
            )));
        }
        let name = canonical_name(&kind);
        Ok(Self {
            name,
            kind,
            lipschitz_rho,
        })
    }

    pub fn mean() -> Self {
        Self::new(PropertyKind::Mean, 1.0).expect("valid")
    }

    pub fn quantile(q: f64, rho: f64) -> Result<Self> {
        Self::new(PropertyKind::Quantile { q }, rho)
    }

    pub fn expectile(tau: f64) -> Result<Self> {
        Self::new(
            PropertyKind::Expectile { tau },
            default_rho(&PropertyKind::Expectile { tau }),
        )
    }

    pub fn raw_moment(k: u32) -> Result<Self> {
        Self::new(PropertyKind::RawMoment { k }, 1.0)
    }

    /// Identification function `V(p, y)`.
    pub fn eval_identification(&self, p: f64, y: f64) -> Result<f64> {
        check_unit("p", p)?;
        check_unit("y", y)?;
        Ok(self.identify(p, y))
    }

    /// Unchecked `V(p, y)`; callers guarantee `p, y` in `[0, 1]`.
    #[inline]
    pub(crate) fn identify(&self, p: f64, y: f64) -> f64 {
        match self.kind {
            PropertyKind::Mean => p - y,
            PropertyKind::Quantile { q } => {
                if y <= p {
                    1.0 - q
                } else {
                    -q
                }
            }
            PropertyKind::Expectile { tau } => {
                if p >= y {
                    (p - y) * (1.0 - tau)
                } else {
                    (p - y) * tau
                }
            }
            PropertyKind::RawMoment { k } => p - y.powi(k as i32),
        }
    }

    /// Closed-form marginal `E_{y ~ law}[V(p, y)]`.
    pub fn marginal_identification(&self, p: f64, law: &LabelLaw) -> Result<f64> {
        check_unit("p", p)?;
        law.validate()?;
        Ok(self.marginal(p, law))
    }

    pub(crate) fn marginal(&self, p: f64, law: &LabelLaw) -> f64 {
        match self.kind {
            PropertyKind::Mean => p - law.mean(),
            PropertyKind::Quantile { q } => law.cdf(p) - q,
            PropertyKind::Expectile { tau } => {
                let below = law.cdf(p);
                let partial = law.partial_mean_below(p);
                let lower = p * below - partial;
                let upper = p * (1.0 - below) - (law.mean() - partial);
                (1.0 - tau) * lower + tau * upper
            }
            PropertyKind::RawMoment { k } => p - law.raw_moment(k),
        }
    }

    /// Checks Assumption-style conditions on a set of label laws: Lipschitz
    /// marginal (estimated on a uniform grid with `grid_size` intervals),
    /// `V(0, Y) <= 0`, `V(1, Y) >= 0`, and `|V| <= 1`.
    pub fn check_assumption(
        &self,
        laws: &[LabelLaw],
        grid_size: usize,
    ) -> Result<AssumptionReport> {
        if laws.is_empty() {
            return Err(argument("check_assumption needs at least one label law"));
        }
        if grid_size < 2 {
            return Err(argument("grid_size must be at least 2"));
        }
        for law in laws {
            law.validate()?;
        }
        let step = 1.0 / grid_size as f64;
        let mut lipschitz_estimate: f64 = 0.0;
        let mut max_abs: f64 = 0.0;
        let mut value_at_zero = f64::NEG_INFINITY;
        let mut value_at_one = f64::INFINITY;
        for law in laws {
            let mut prev = self.marginal(0.0, law);
            value_at_zero = value_at_zero.max(prev);
            max_abs = max_abs.max(prev.abs());
            for i in 1..=grid_size {
                let p = if i == grid_size { 1.0 } else { i as f64 * step };
                let cur = self.marginal(p, law);
                lipschitz_estimate = lipschitz_estimate.max((cur - prev).abs() / step);
                max_abs = max_abs.max(cur.abs());
                prev = cur;
            }
            value_at_one = value_at_one.min(prev);
        }
        let mut violations = Vec::new();
        if lipschitz_estimate > self.lipschitz_rho + ASSUMPTION_TOL {
            violations.push(AssumptionClause::Lipschitz);
        }
        if value_at_zero > ASSUMPTION_TOL {
            violations.push(AssumptionClause::SignAtZero);
        }
        if value_at_one < -ASSUMPTION_TOL {
            violations.push(AssumptionClause::SignAtOne);
        }
        if max_abs > 1.0 + ASSUMPTION_TOL {
            violations.push(AssumptionClause::Range);
        }
        Ok(AssumptionReport {
            lipschitz_estimate,
            max_value_at_zero: value_at_zero,
            min_value_at_one: value_at_one,
            max_abs_marginal: max_abs,
            violations,
        })
    }
}

const ASSUMPTION_TOL: f64 = 1e-9;

fn default_rho(kind: &PropertyKind) -> f64 {
    match *kind {
        PropertyKind::Expectile { tau } => tau.max(1.0 - tau),
        _ => 1.0,
    }
}

fn canonical_name(kind: &PropertyKind) -> String {
    match *kind {
        PropertyKind::Mean => "mean".to_string(),
        PropertyKind::Quantile { q } => format!("quantile:q={q}"),
        PropertyKind::Expectile { tau } => format!("expectile:tau={tau}"),
        PropertyKind::RawMoment { k } => format!("moment:k={k}"),
    }
}

fn check_unit(name: &str, v: f64) -> Result<()> {
    if v.is_finite() && (0.0..=1.0).contains(&v) {
        Ok(())
    } else {
        Err(domain(format!("{name} = {v} outside [0, 1]")))
    }
}

impl fmt::Display for Property {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name)?;
        if (self.lipschitz_rho - default_rho(&self.kind)).abs() > 0.0 {
            let sep = if matches!(self.kind, PropertyKind::Mean) {
                ":"
            } else {
                ","
            };
            write!(f, "{sep}rho={}", self.lipschitz_rho)?;
        }
        Ok(())
    }
}

/// Parses `mean`, `quantile:q=0.5`, `expectile:tau=0.3`, `moment:k=2`, each
/// with an optional `rho=` override.
impl FromStr for Property {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (head, rest) = match s.split_once(':') {
            Some((h, r)) => (h.trim(), r),
            None => (s.trim(), ""),
        };
        let params = parse_params("property", rest)?;
        let get = |key: &str| params.iter().find(|(k, _)| k == key).map(|(_, v)| *v);
        let allowed: &[&str] = match head {
            "mean" => &["rho"],
            "quantile" => &["q", "rho"],
            "expectile" => &["tau", "rho"],
            "moment" => &["k", "rho"],
            other => return Err(config("property", format!("unknown property `{other}`"))),
        };
        if let Some((k, _)) = params.iter().find(|(k, _)| !allowed.contains(&k.as_str())) {
            return Err(config(
                "property",
                format!("unknown parameter `{k}` for {head}"),
            ));
        }
        let require = |key: &str| {
            get(key).ok_or_else(|| config("property", format!("{head} requires `{key}=`")))
        };
        let kind = match head {
            "mean" => PropertyKind::Mean,
            "quantile" => PropertyKind::Quantile { q: require("q")? },
            "expectile" => PropertyKind::Expectile {
                tau: require("tau")?,
            },
            _ => {
                let k = require("k")?;
                if k.fract() != 0.0 || k < 1.0 || k > u32::MAX as f64 {
                    return Err(config(
                        "property",
                        "moment order must be a positive integer",
                    ));
                }
                PropertyKind::RawMoment { k: k as u32 }
            }
        };
        let rho = get("rho").unwrap_or_else(|| default_rho(&kind));
        Property::new(kind, rho).map_err(|e| config("property", e.to_string()))
    }
}

/// Splits `a=1,b=2` into `(key, value)` pairs.
pub(crate) fn parse_params(path: &str, s: &str) -> Result<Vec<(String, f64)>> {
    let mut out = Vec::new();
    for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        let (k, v) = part
            .split_once('=')
            .ok_or_else(|| config(path, format!("expected key=value, got `{part}`")))?;
        let v: f64 = v
            .trim()
            .parse()
            .map_err(|_| config(path, format!("`{}` is not a number", v.trim())))?;
        out.push((k.trim().to_string(), v));
    }
    Ok(out)
}

/// Which clause of the identification assumption failed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AssumptionClause {
    Lipschitz,
    SignAtZero,
    SignAtOne,
    Range,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AssumptionReport {
    /// Largest finite-difference slope of the marginal over the grid.
    pub lipschitz_estimate: f64,
    pub max_value_at_zero: f64,
    pub min_value_at_one: f64,
    pub max_abs_marginal: f64,
    pub violations: Vec<AssumptionClause>,
}

impl AssumptionReport {
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn violates(&self, clause: AssumptionClause) -> bool {
        self.violations.contains(&clause)
    }
}

/// A label distribution on `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LabelLaw {
    Bernoulli { mu: f64 },
    Beta { a: f64, b: f64 },
    PointMass { y: f64 },
}

impl LabelLaw {
    pub fn validate(&self) -> Result<()> {
        match *self {
            LabelLaw::Bernoulli { mu } => check_unit("bernoulli mean", mu),
            LabelLaw::Beta { a, b } => {
                if a.is_finite() && b.is_finite() && a > 0.0 && b > 0.0 {
                    Ok(())
                } else {
                    Err(domain(format!("beta shapes ({a}, {b}) must be positive")))
                }
            }
            LabelLaw::PointMass { y } => check_unit("point mass", y),
        }
    }

    /// `P(y <= p)`.
    pub fn cdf(&self, p: f64) -> f64 {
        match *self {
            LabelLaw::Bernoulli { mu } => {
                if p >= 1.0 {
                    1.0
                } else if p >= 0.0 {
                    1.0 - mu
                } else {
                    0.0
                }
            }
            LabelLaw::Beta { a, b } => {
                if p <= 0.0 {
                    0.0
                } else if p >= 1.0 {
                    1.0
                } else {
                    beta_reg(a, b, p)
                }
            }
            LabelLaw::PointMass { y } => {
                if y <= p {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }

    pub fn mean(&self) -> f64 {
        self.raw_moment(1)
    }

    /// `E[y^k]`.
    pub fn raw_moment(&self, k: u32) -> f64 {
        match *self {
            LabelLaw::Bernoulli { mu } => mu,
            LabelLaw::Beta { a, b } => (0..k).fold(1.0, |acc, j| {
                let j = j as f64;
                acc * (a + j) / (a + b + j)
            }),
            LabelLaw::PointMass { y } => y.powi(k as i32),
        }
    }

    /// `E[y 1[y <= p]]`.
    pub fn partial_mean_below(&self, p: f64) -> f64 {
        match *self {
            LabelLaw::Bernoulli { mu } => {
                if p >= 1.0 {
                    mu
                } else {
                    0.0
                }
            }
            LabelLaw::Beta { a, b } => a / (a + b) * LabelLaw::Beta { a: a + 1.0, b }.cdf(p),
            LabelLaw::PointMass { y } => {
                if y <= p {
                    y
                } else {
                    0.0
                }
            }
        }
    }

    /// Lipschitz constant of the CDF, `None` when the law has atoms or an
    /// unbounded density.
    pub fn density_bound(&self) -> Option<f64> {
        match *self {
            LabelLaw::Beta { a, b } => {
                if a < 1.0 || b < 1.0 {
                    return None;
                }
                if a == 1.0 && b == 1.0 {
                    return Some(1.0);
                }
                let mode = (a - 1.0) / (a + b - 2.0);
                let log_kernel = |v: f64, shape: f64| {
                    if shape == 1.0 {
                        0.0
                    } else {
                        (shape - 1.0) * v.ln()
                    }
                };
                Some((log_kernel(mode, a) + log_kernel(1.0 - mode, b) - ln_beta(a, b)).exp())
            }
            _ => None,
        }
    }

    /// Inverse-CDF draw from a single uniform variate `u` in `[0, 1)`.
    pub fn sample_with(&self, u: f64) -> f64 {
        match *self {
            LabelLaw::Bernoulli { mu } => {
                if u < mu {
                    1.0
                } else {
                    0.0
                }
            }
            LabelLaw::Beta { a, b } => inv_beta_reg(a, b, u.clamp(0.0, 1.0)).clamp(0.0, 1.0),
            LabelLaw::PointMass { y } => y,
        }
    }

    /// Draws one label, consuming exactly one uniform variate.
    pub fn sample<R: rand::Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let u: f64 = rng.random();
        self.sample_with(u)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64) -> bool {
        (a - b).abs() < 1e-12
    }

    #[test]
    fn identification_examples() {
        let mean = Property::mean();
        assert!(close(mean.eval_identification(0.3, 1.0).unwrap(), -0.7));
        let quant = Property::quantile(0.25, 1.0).unwrap();
        assert!(close(quant.eval_identification(0.7, 0.2).unwrap(), 0.75));
        let expectile = Property::expectile(0.5).unwrap();
        assert!(close(
            expectile.eval_identification(0.8, 0.3).unwrap(),
            0.25
        ));
        let moment = Property::raw_moment(2).unwrap();
        assert!(close(moment.eval_identification(0.5, 0.5).unwrap(), 0.25));
    }

    #[test]
    fn identification_rejects_out_of_range() {
        let mean = Property::mean();
        assert!(matches!(
            mean.eval_identification(1.2, 0.0),
            Err(Error::Domain(_))
        ));
        assert!(matches!(
            mean.eval_identification(0.5, -0.1),
            Err(Error::Domain(_))
        ));
        assert!(mean.eval_identification(f64::NAN, 0.0).is_err());
    }

    #[test]
    fn expectile_tie_is_zero() {
        let e = Property::expectile(0.3).unwrap();
        assert_eq!(e.eval_identification(0.4, 0.4).unwrap(), 0.0);
    }

    #[test]
    fn marginal_examples() {
        let mean = Property::mean();
        let half = LabelLaw::Bernoulli { mu: 0.5 };
        assert!(close(
            mean.marginal_identification(0.0, &half).unwrap(),
            -0.5
        ));
        assert!(close(
            mean.marginal_identification(0.5, &LabelLaw::PointMass { y: 0.5 })
                .unwrap(),
            0.0
        ));
        let median = Property::quantile(0.5, 1.0).unwrap();
        for law in [
            half,
            LabelLaw::Beta { a: 2.0, b: 3.0 },
            LabelLaw::PointMass { y: 1.0 },
        ] {
            assert!(close(
                median.marginal_identification(1.0, &law).unwrap(),
                0.5
            ));
        }
    }

    #[test]
    fn expectile_marginal_matches_bernoulli_hand_computation() {
        let tau = 0.3;
        let e = Property::expectile(tau).unwrap();
        let mu = 0.6;
        let p = 0.4;
        let expected = (1.0 - mu) * p * (1.0 - tau) + mu * (p - 1.0) * tau;
        let got = e
            .marginal_identification(p, &LabelLaw::Bernoulli { mu })
            .unwrap();
        assert!(close(got, expected));
    }

    #[test]
    fn check_assumption_examples() {
        let mean = Property::mean();
        let rep = mean
            .check_assumption(&[LabelLaw::Bernoulli { mu: 0.5 }], 101)
            .unwrap();
        assert!(rep.passed());
        assert!((rep.lipschitz_estimate - 1.0).abs() < 1e-9);

        let median = Property::quantile(0.5, 1.0).unwrap();
        let rep = median
            .check_assumption(&[LabelLaw::PointMass { y: 0.3 }], 101)
            .unwrap();
        assert!(rep.violates(AssumptionClause::Lipschitz));
        assert!(rep.lipschitz_estimate >= 101.0 - 1e-9);

        let rep = mean
            .check_assumption(&[LabelLaw::PointMass { y: 0.0 }], 101)
            .unwrap();
        assert!(!rep.violates(AssumptionClause::SignAtZero));
        assert_eq!(rep.max_value_at_zero, 0.0);

        assert!(matches!(
            mean.check_assumption(&[], 101),
            Err(Error::Argument(_))
        ));
    }

    #[test]
    fn beta_two_two_density_bound() {
        let rho = LabelLaw::Beta { a: 2.0, b: 2.0 }.density_bound().unwrap();
        assert!((rho - 1.5).abs() < 1e-12);
        assert_eq!(LabelLaw::Beta { a: 0.5, b: 2.0 }.density_bound(), None);
        assert_eq!(LabelLaw::Bernoulli { mu: 0.3 }.density_bound(), None);
    }

    #[test]
    fn quantile_with_beta_passes_at_density_bound() {
        let median = Property::quantile(0.5, 1.5).unwrap();
        let rep = median
            .check_assumption(&[LabelLaw::Beta { a: 2.0, b: 2.0 }], 1000)
            .unwrap();
        assert!(rep.passed(), "{rep:?}");
    }

    #[test]
    fn parse_and_display() {
        for s in ["mean", "quantile:q=0.5", "expectile:tau=0.3", "moment:k=2"] {
            let p: Property = s.parse().unwrap();
            assert_eq!(p.to_string(), s);
            assert_eq!(p.to_string().parse::<Property>().unwrap(), p);
        }
        let q: Property = "quantile:q=0.5,rho=1.5".parse().unwrap();
        assert_eq!(q.lipschitz_rho, 1.5);
        assert_eq!(q.to_string().parse::<Property>().unwrap(), q);
        assert!("quantile".parse::<Property>().is_err());
        assert!("mode".parse::<Property>().is_err());
        assert!("mean:q=1".parse::<Property>().is_err());
        assert!("moment:k=1.5".parse::<Property>().is_err());
        assert!("expectile:tau=1".parse::<Property>().is_err());
    }

    #[test]
    fn sampling_edges() {
        assert_eq!(LabelLaw::PointMass { y: 0.3 }.sample_with(0.9), 0.3);
        assert_eq!(LabelLaw::Bernoulli { mu: 1.0 }.sample_with(0.999), 1.0);
        assert_eq!(LabelLaw::Bernoulli { mu: 0.0 }.sample_with(0.0), 0.0);
    }
}
