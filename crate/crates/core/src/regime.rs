//! Scaling-regime classification, particle Reynolds numbers and predicted
//! convergence exponents for the exponent pair (α, γ).
//!
//! Boundary comparisons are exact whenever both exponents are rationals with
//! moderate denominators (this covers every decimal literal a user is likely
//! to type); otherwise a relative tolerance of 1e-12 is applied.

use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use num_rational::Rational64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const MAX_DENOMINATOR: i64 = 1_000_000;
const REL_TOL: f64 = 1e-12;

/// A real exponent together with its exact rational value when one exists.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Exponent {
    value: f64,
    exact: Option<Rational64>,
}

impl Exponent {
    /// Wraps a float, detecting exact rationals with denominator at most 10^6
    /// that round-trip to the same float.
    pub fn new(value: f64) -> Self {
        Exponent {
            value,
            exact: rational_round_trip(value),
        }
    }

    pub fn from_rational(r: Rational64) -> Self {
        Exponent {
            value: *r.numer() as f64 / *r.denom() as f64,
            exact: Some(r),
        }
    }

    pub fn value(&self) -> f64 {
        self.value
    }

    pub fn exact(&self) -> Option<Rational64> {
        self.exact
    }
}

impl From<f64> for Exponent {
    fn from(v: f64) -> Self {
        Exponent::new(v)
    }
}

impl FromStr for Exponent {
    type Err = Error;

    /// Accepts `p/q`, decimal literals (`1.25`, `-0.5`) and general floats
    /// (`1e-3`). Fractions and plain decimals are kept exact.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let bad = || Error::Config(format!("cannot parse number `{s}`"));
        if let Some((p, q)) = s.split_once('/') {
            let p: i64 = p.trim().parse().map_err(|_| bad())?;
            let q: i64 = q.trim().parse().map_err(|_| bad())?;
            if q == 0 {
                return Err(bad());
            }
            return Ok(Exponent::from_rational(Rational64::new(p, q)));
        }
        if let Some(r) = parse_decimal(s) {
            return Ok(Exponent::from_rational(r));
        }
        let v: f64 = s.parse().map_err(|_| bad())?;
        if !v.is_finite() {
            return Err(bad());
        }
        Ok(Exponent::new(v))
    }
}

fn parse_decimal(s: &str) -> Option<Rational64> {
    let (neg, body) = match s.strip_prefix('-') {
        Some(rest) => (true, rest),
        None => (false, s.strip_prefix('+').unwrap_or(s)),
    };
    let (int, frac) = body.split_once('.').unwrap_or((body, ""));
    if int.is_empty() && frac.is_empty() {
        return None;
    }
    if !int.chars().chain(frac.chars()).all(|c| c.is_ascii_digit()) || frac.len() > 12 {
        return None;
    }
    let digits = format!("{int}{frac}");
    let numer: i64 = digits.parse().ok()?;
    let denom = 10i64.checked_pow(frac.len() as u32)?;
    let r = Rational64::new(numer, denom);
    Some(if neg { -r } else { r })
}

fn rational_round_trip(x: f64) -> Option<Rational64> {
    if !x.is_finite() || x.abs() > 1e9 {
        return None;
    }
    // Continued-fraction convergents of x, stopping at the denominator cap.
    let (mut h0, mut h1) = (0i64, 1i64);
    let (mut k0, mut k1) = (1i64, 0i64);
    let mut rest = x;
    for _ in 0..64 {
        let a = rest.floor();
        if a.abs() > 1e12 {
            break;
        }
        let a = a as i64;
        let h2 = a.checked_mul(h1)?.checked_add(h0)?;
        let k2 = a.checked_mul(k1)?.checked_add(k0)?;
        if k2 > MAX_DENOMINATOR {
            break;
        }
        (h0, h1, k0, k1) = (h1, h2, k1, k2);
        if h1 as f64 / k1 as f64 == x {
            return Some(Rational64::new(h1, k1));
        }
        let frac = rest - a as f64;
        if frac == 0.0 {
            break;
        }
        rest = 1.0 / frac;
    }
    None
}

/// Physical parameters of the dilute-suspension scaling.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RegimeParams {
    pub alpha: Exponent,
    pub gamma: Exponent,
    pub mu0: f64,
    pub epsilon: Option<f64>,
}

impl RegimeParams {
    pub fn new(alpha: impl Into<Exponent>, gamma: impl Into<Exponent>, mu0: f64) -> Result<Self> {
        let p = RegimeParams {
            alpha: alpha.into(),
            gamma: gamma.into(),
            mu0,
            epsilon: None,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn with_epsilon(mut self, epsilon: f64) -> Result<Self> {
        self.epsilon = Some(epsilon);
        self.validate()?;
        Ok(self)
    }

    pub fn alpha(&self) -> f64 {
        self.alpha.value
    }

    pub fn gamma(&self) -> f64 {
        self.gamma.value
    }

    pub fn validate(&self) -> Result<()> {
        if !self.alpha.value.is_finite()
            || self.sign(1, 0, Rational64::from(-1)) != Ordering::Greater
        {
            return Err(Error::Domain(format!(
                "alpha = {} must exceed 1",
                self.alpha.value
            )));
        }
        if !self.gamma.value.is_finite()
            || self.sign(0, 1, Rational64::from(0)) != Ordering::Greater
        {
            return Err(Error::Domain(format!(
                "gamma = {} must be positive",
                self.gamma.value
            )));
        }
        if !(self.mu0 > 0.0 && self.mu0.is_finite()) {
            return Err(Error::Domain(format!(
                "mu0 = {} must be positive",
                self.mu0
            )));
        }
        if let Some(e) = self.epsilon {
            if !(e > 0.0 && e < 1.0) {
                return Err(Error::Domain(format!("epsilon = {e} must lie in (0, 1)")));
            }
        }
        Ok(())
    }

    /// Sign of a·α + b·γ + c, exact for rational inputs.
    fn sign(&self, a: i64, b: i64, c: Rational64) -> Ordering {
        if let (Some(al), Some(ga)) = (self.alpha.exact, self.gamma.exact) {
            let d = al * a + ga * b + c;
            return d.cmp(&Rational64::from(0));
        }
        let ta = a as f64 * self.alpha.value;
        let tb = b as f64 * self.gamma.value;
        let tc = *c.numer() as f64 / *c.denom() as f64;
        let d = ta + tb + tc;
        let scale = ta.abs().max(tb.abs()).max(tc.abs()).max(1.0);
        if d.abs() <= REL_TOL * scale {
            Ordering::Equal
        } else if d > 0.0 {
            Ordering::Greater
        } else {
            Ordering::Less
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum RegimeLabel {
    Critical,
    Subcritical,
    SubcriticalNeedsLargeViscosity,
    Supercritical,
    OutOfScope,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum LimitSystem {
    EulerBrinkman,
    Euler,
    Darcy,
    None,
}

impl fmt::Display for RegimeLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

impl fmt::Display for LimitSystem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RegimeClass {
    pub label: RegimeLabel,
    pub limit_system: LimitSystem,
}

impl RegimeClass {
    fn new(label: RegimeLabel) -> Self {
        let limit_system = match label {
            RegimeLabel::Critical => LimitSystem::EulerBrinkman,
            RegimeLabel::Subcritical | RegimeLabel::SubcriticalNeedsLargeViscosity => {
                LimitSystem::Euler
            }
            RegimeLabel::Supercritical => LimitSystem::Darcy,
            RegimeLabel::OutOfScope => LimitSystem::None,
        };
        RegimeClass {
            label,
            limit_system,
        }
    }

    pub fn is_subcritical(&self) -> bool {
        matches!(
            self.label,
            RegimeLabel::Subcritical | RegimeLabel::SubcriticalNeedsLargeViscosity
        )
    }
}

fn r(n: i64, d: i64) -> Rational64 {
    Rational64::new(n, d)
}

/// Assigns the unique regime label of a parameter point.
pub fn classify(params: &RegimeParams) -> Result<RegimeClass> {
    params.validate()?;
    use Ordering::*;
    let sum = params.sign(1, 1, r(-3, 1));
    let a_gt_3_2 = params.sign(1, 0, r(-3, 2)) == Greater;
    let a_lt_3 = params.sign(1, 0, r(-3, 1)) == Less;
    let label = if sum == Equal && a_gt_3_2 && a_lt_3 {
        RegimeLabel::Critical
    } else if a_gt_3_2 && sum == Greater && params.sign(-1, 1, r(0, 1)) != Greater {
        if params.sign(-1, 1, r(0, 1)) == Equal {
            RegimeLabel::SubcriticalNeedsLargeViscosity
        } else {
            RegimeLabel::Subcritical
        }
    } else if a_lt_3 && sum == Less && params.sign(0, 1, r(-3, 2)) == Less {
        RegimeLabel::Supercritical
    } else {
        RegimeLabel::OutOfScope
    };
    Ok(RegimeClass::new(label))
}

/// Particle Reynolds number (particle diameter × fluid velocity / viscosity).
pub fn particle_reynolds(params: &RegimeParams, regime: &RegimeClass) -> Result<f64> {
    let eps = params
        .epsilon
        .ok_or_else(|| Error::Precondition("particle Reynolds number needs epsilon".into()))?;
    let (a, g) = (params.alpha(), params.gamma());
    match regime.label {
        RegimeLabel::Critical
        | RegimeLabel::Subcritical
        | RegimeLabel::SubcriticalNeedsLargeViscosity => Ok(eps.powf(a - g) / params.mu0),
        RegimeLabel::Supercritical => Ok(eps.powf(3.0 - 2.0 * g) / params.mu0),
        RegimeLabel::OutOfScope => Err(Error::OutOfScope(
            "particle Reynolds number is only defined inside the theorem regimes".into(),
        )),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RatePrediction {
    /// Exponent of the squared L² error (space-time for the supercritical regime).
    pub exponent: f64,
    pub contributing_terms: Vec<(String, f64)>,
}

/// Predicted convergence exponents of the three quantitative theorems.
pub fn predicted_rate(params: &RegimeParams) -> Result<RatePrediction> {
    let class = classify(params)?;
    let (a, g) = (params.alpha(), params.gamma());
    let terms: Vec<(String, f64)> = match class.label {
        RegimeLabel::Critical => vec![
            ("eps^(2alpha-3)".into(), 2.0 * a - 3.0),
            ("eps^(6-2alpha)".into(), 6.0 - 2.0 * a),
        ],
        RegimeLabel::Subcritical | RegimeLabel::SubcriticalNeedsLargeViscosity => vec![
            ("eps^(2alpha+2gamma-6)".into(), 2.0 * a + 2.0 * g - 6.0),
            ("eps^(2alpha-3)".into(), 2.0 * a - 3.0),
            ("eps^(2gamma)".into(), 2.0 * g),
        ],
        RegimeLabel::Supercritical => vec![
            ("eps^((6-4gamma)/3)".into(), (6.0 - 4.0 * g) / 3.0),
            ("eps^(alpha-1)".into(), a - 1.0),
            ("eps^(9-3alpha)".into(), 9.0 - 3.0 * a),
        ],
        RegimeLabel::OutOfScope => return Err(Error::OutOfScope(violated_hypothesis(params))),
    };
    let exponent = terms.iter().map(|t| t.1).fold(f64::INFINITY, f64::min);
    Ok(RatePrediction {
        exponent,
        contributing_terms: terms,
    })
}

fn violated_hypothesis(params: &RegimeParams) -> String {
    let (a, g) = (params.alpha(), params.gamma());
    if params.sign(1, 0, r(-3, 2)) != Ordering::Greater
        && params.sign(1, 1, r(-3, 1)) != Ordering::Less
    {
        format!("alpha = {a} <= 3/2 with alpha + gamma >= 3: no theorem covers gamma >= max(alpha, 3/2)")
    } else if params.sign(-1, 1, r(0, 1)) == Ordering::Greater {
        format!("gamma = {g} > alpha = {a}: particle Reynolds number does not vanish")
    } else {
        format!("alpha = {a}, gamma = {g}: supercritical theorem needs gamma < 3/2 and alpha < 3")
    }
}

/// Choice of the intermediate exponent β (η = ε^β) used in the proofs, clamped
/// to the admissible range [1, α].
pub fn beta_preset(params: &RegimeParams) -> Result<f64> {
    let class = classify(params)?;
    let (a, g) = (params.alpha(), params.gamma());
    let beta = match class.label {
        RegimeLabel::Critical => g,
        RegimeLabel::Subcritical | RegimeLabel::SubcriticalNeedsLargeViscosity => g.min(1.0),
        RegimeLabel::Supercritical => 0.5 * ((a + 2.0 * g - 3.0).max(1.0) + a),
        RegimeLabel::OutOfScope => return Err(Error::OutOfScope(violated_hypothesis(params))),
    };
    Ok(beta.clamp(1.0, a))
}

/// One node of a regime diagram.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiagramNode {
    pub alpha: f64,
    pub gamma: f64,
    pub class: RegimeClass,
}

/// Samples the rectangle (α0, α1] × (γ0, γ1] at `n_alpha × n_gamma` nodes
/// α_i = α0 + (i+1)(α1−α0)/n_alpha (likewise for γ), α varying slowest.
pub fn regime_diagram(
    alpha_range: (Exponent, Exponent),
    gamma_range: (Exponent, Exponent),
    n_alpha: usize,
    n_gamma: usize,
) -> Result<Vec<DiagramNode>> {
    if n_alpha == 0 || n_gamma == 0 {
        return Err(Error::Domain(
            "regime diagram needs at least one node per axis".into(),
        ));
    }
    let (a0, a1) = alpha_range;
    let (g0, g1) = gamma_range;
    if !(a1.value > a0.value && g1.value > g0.value) {
        return Err(Error::Domain("regime diagram rectangle is empty".into()));
    }
    if a0.value < 1.0 || a1.value > 5.0 || g0.value < 0.0 || g1.value > 3.0 {
        return Err(Error::Domain(
            "regime diagram must lie within alpha in (1, 5], gamma in (0, 3]".into(),
        ));
    }
    let node = |lo: Exponent, hi: Exponent, i: usize, n: usize| -> Exponent {
        match (lo.exact, hi.exact) {
            (Some(l), Some(h)) => {
                Exponent::from_rational(l + (h - l) * Rational64::new(i as i64 + 1, n as i64))
            }
            _ => Exponent::new(lo.value + (i + 1) as f64 * (hi.value - lo.value) / n as f64),
        }
    };
    let mut out = Vec::with_capacity(n_alpha * n_gamma);
    for i in 0..n_alpha {
        let alpha = node(a0, a1, i, n_alpha);
        for j in 0..n_gamma {
            let gamma = node(g0, g1, j, n_gamma);
            let params = RegimeParams {
                alpha,
                gamma,
                mu0: 1.0,
                epsilon: None,
            };
            out.push(DiagramNode {
                alpha: alpha.value,
                gamma: gamma.value,
                class: classify(&params)?,
            });
        }
    }
    Ok(out)
}

/// Classifies an explicit list of (α, γ) points.
pub fn classify_points(points: &[(f64, f64)]) -> Result<Vec<DiagramNode>> {
    points
        .iter()
        .map(|&(a, g)| {
            let params = RegimeParams::new(a, g, 1.0)?;
            Ok(DiagramNode {
                alpha: a,
                gamma: g,
                class: classify(&params)?,
            })
        })
        .collect()
}

/// CSV rendering with header `alpha,gamma,label,limit_system`.
pub fn diagram_csv(nodes: &[DiagramNode]) -> String {
    let mut s = String::from("alpha,gamma,label,limit_system\n");
    for n in nodes {
        s.push_str(&format!(
            "{},{},{},{}\n",
            n.alpha, n.gamma, n.class.label, n.class.limit_system
        ));
    }
    s
}
