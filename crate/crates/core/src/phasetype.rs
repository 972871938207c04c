//! The `C(p, θ)` acyclic phase-type family.
//!
//! A random variable `Z ~ C(p, θ)` is the sum of `h` independent terms
//! `X_f · Y_f` where `X_f ~ Bernoulli(p_f)` and `Y_f ~ Exp(θ_f)`. With
//! pairwise-distinct rates its ccdf is the finite exponential mixture
//!
//! ```text
//! P(Z > t) = Σ_f c_f e^{-θ_f t},   c_f = p_f Π_{g≠f} (1 + p_g θ_f / (θ_g - θ_f))
//! ```
//!
//! and the law carries a point mass `Q = Π_f (1 - p_f)` at zero.
//!
//! Rates that coincide make the mixture coefficients singular. At
//! construction any rate within [`RATE_COLLISION_TOLERANCE`] (relative) of an
//! earlier one is nudged by a factor `1 + k·`[`RATE_PERTURBATION`], `k` being
//! the collision index. Density and tail evaluation use the nudged rates;
//! moments and sampling use the nominal ones.
//!
//! When the mixture cancels badly (near-tied rates, tiny `t`), the value is
//! recomputed by uniformizing the underlying Markov chain on the nominal
//! rates.

use rand::Rng;
use thiserror::Error;

use crate::rng::exponential;

/// Relative distance under which two rates count as equal.
pub const RATE_COLLISION_TOLERANCE: f64 = 1e-9;
/// Relative step applied per collision.
pub const RATE_PERTURBATION: f64 = 1e-6;
/// Relative tolerance for the single-phase collapse condition.
pub const COLLAPSE_TOLERANCE: f64 = 1e-9;
/// A mixture sum smaller than this fraction of the sum of its absolute
/// terms has lost too many digits and is evaluated another way.
pub const CANCELLATION_LIMIT: f64 = 1e-6;
const UNIFORMIZATION_MAX_TERMS: usize = 10_000_000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PhaseTypeError {
    #[error("phase-type parameters must have at least one phase")]
    Empty,
    #[error("probability list has {probs} entries but rate list has {rates}")]
    DimensionMismatch { probs: usize, rates: usize },
    #[error("phase {index}: probability {value} is outside [0, 1]")]
    ProbabilityOutOfRange { index: usize, value: f64 },
    #[error("phase {index}: rate {value} must be positive and finite")]
    NonPositiveRate { index: usize, value: f64 },
    #[error("evaluation point {0} is negative")]
    NegativeTime(f64),
    #[error("collapse needs single-phase operands, got {0} and {1} phases")]
    NotSinglePhase(usize, usize),
    #[error("collapse condition θ2 - θ1 = p1·θ2 does not hold")]
    CollapseConditionNotMet,
}

/// Special cases of the family.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Classification {
    /// One phase, `p = 0`: all mass at zero.
    Degenerate,
    /// One phase, `p = 1`.
    Exponential,
    /// Every `p = 1`, pairwise-distinct rates.
    Hypoexponential,
    /// Every `p = 1`, all rates equal.
    Erlang,
    General,
}

impl std::fmt::Display for Classification {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            Classification::Degenerate => "degenerate",
            Classification::Exponential => "exponential",
            Classification::Hypoexponential => "hypoexponential",
            Classification::Erlang => "erlang",
            Classification::General => "general",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PhaseTypeSummary {
    pub mean: f64,
    pub variance: f64,
    pub atom_at_zero: f64,
    pub classification: Classification,
}

/// Density at a point: the continuous part and, separately, the mass of the
/// atom sitting at `t = 0`. The atom is never folded into `continuous`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PdfValue {
    pub continuous: f64,
    pub atom: f64,
}

/// Validated `(p, θ)` parameters. Immutable once built.
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseTypeParams {
    probs: Vec<f64>,
    nominal_rates: Vec<f64>,
    rates: Vec<f64>,
    // c_f; zero for phases with p_f = 0
    coefficients: Vec<f64>,
}

impl PhaseTypeParams {
    pub fn new(probs: Vec<f64>, rates: Vec<f64>) -> Result<Self, PhaseTypeError> {
        if probs.len() != rates.len() {
            return Err(PhaseTypeError::DimensionMismatch {
                probs: probs.len(),
                rates: rates.len(),
            });
        }
        if probs.is_empty() {
            return Err(PhaseTypeError::Empty);
        }
        for (index, &value) in probs.iter().enumerate() {
            if !(0.0..=1.0).contains(&value) {
                return Err(PhaseTypeError::ProbabilityOutOfRange { index, value });
            }
        }
        for (index, &value) in rates.iter().enumerate() {
            if !(value > 0.0 && value.is_finite()) {
                return Err(PhaseTypeError::NonPositiveRate { index, value });
            }
        }

        let perturbed = separate_rates(&rates);
        let coefficients = mixture_coefficients(&probs, &perturbed);
        Ok(Self {
            probs,
            nominal_rates: rates,
            rates: perturbed,
            coefficients,
        })
    }

    /// Number of phases `h`.
    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    /// Rates used for density and tail evaluation (after collision nudging).
    pub fn rates(&self) -> &[f64] {
        &self.rates
    }

    /// Rates exactly as supplied.
    pub fn nominal_rates(&self) -> &[f64] {
        &self.nominal_rates
    }

    /// Mixture coefficients `c_f = 1/P_f` of the tail.
    pub fn coefficients(&self) -> &[f64] {
        &self.coefficients
    }

    /// Mass of the point at zero, `Π (1 - p_f)`.
    pub fn atom_at_zero(&self) -> f64 {
        self.probs.iter().map(|p| 1.0 - p).product()
    }

    pub fn pdf(&self, t: f64) -> Result<PdfValue, PhaseTypeError> {
        check_time(t)?;
        let continuous = self
            .mixture(t, true)
            .or_else(|| self.ln_uniformized(t, true).map(f64::exp))
            .unwrap_or(0.0);
        Ok(PdfValue {
            continuous,
            atom: self.atom_at_zero(),
        })
    }

    /// Natural log of the continuous density at `t`, or `None` when the
    /// density is not strictly positive there.
    ///
    /// The mixture terms are combined as a signed log-sum-exp so deep-tail
    /// points that underflow a direct evaluation still get a finite value.
    /// Where the signed terms cancel (near `t = 0`, or around nudged rates)
    /// the value comes from uniformization of the phase chain instead,
    /// which only adds non-negative terms.
    pub fn ln_pdf(&self, t: f64) -> Result<Option<f64>, PhaseTypeError> {
        check_time(t)?;
        Ok(self
            .ln_mixture(t, true)
            .or_else(|| self.ln_uniformized(t, true)))
    }

    /// `P(Z > t)`, clamped to `[0, 1]` against rounding. At `t = 0` this is
    /// exactly `1 - Q`.
    pub fn ccdf(&self, t: f64) -> Result<f64, PhaseTypeError> {
        check_time(t)?;
        if t == 0.0 {
            return Ok(1.0 - self.atom_at_zero());
        }
        let s = self
            .mixture(t, false)
            .or_else(|| self.ln_uniformized(t, false).map(f64::exp))
            .unwrap_or(0.0);
        Ok(s.clamp(0.0, 1.0))
    }

    /// Direct `Σ a_f e^{-θ_f t}`, see [`Self::ln_mixture`]. Zero when every
    /// term underflows.
    fn mixture(&self, t: f64, density: bool) -> Option<f64> {
        let terms: Vec<f64> = self
            .coefficients
            .iter()
            .zip(&self.rates)
            .filter(|(c, _)| **c != 0.0)
            .map(|(&c, &theta)| if density { c * theta } else { c } * (-theta * t).exp())
            .collect();
        if terms.is_empty() {
            return None;
        }
        let sum = compensated_sum(terms.iter().copied());
        let magnitude: f64 = terms.iter().map(|x| x.abs()).sum();
        if magnitude == 0.0 {
            return Some(0.0);
        }
        (sum > CANCELLATION_LIMIT * magnitude).then_some(sum)
    }

    /// `ln Σ a_f e^{-θ_f t}` with `a_f = c_f θ_f` (density) or `c_f` (tail);
    /// `None` if the sum is not positive or cancels past [`CANCELLATION_LIMIT`].
    fn ln_mixture(&self, t: f64, density: bool) -> Option<f64> {
        let terms: Vec<(f64, f64)> = self
            .coefficients
            .iter()
            .zip(&self.rates)
            .filter(|(c, _)| **c != 0.0)
            .map(|(&c, &theta)| {
                let a = if density { c * theta } else { c };
                (a.abs().ln() - theta * t, a.signum())
            })
            .collect();
        let max = terms.iter().map(|(a, _)| *a).reduce(f64::max)?;
        let scaled = compensated_sum(terms.iter().map(|(a, s)| s * (a - max).exp()));
        let magnitude: f64 = terms.iter().map(|(a, _)| (a - max).exp()).sum();
        (scaled > CANCELLATION_LIMIT * magnitude).then(|| max + scaled.ln())
    }

    /// Same quantity by uniformization of the acyclic chain on the nominal
    /// rates: `Σ_k Poisson(k; Λt) · α P^k w` with `P = I + T/Λ`.
    fn ln_uniformized(&self, t: f64, density: bool) -> Option<f64> {
        let active: Vec<(f64, f64)> = self
            .probs
            .iter()
            .zip(&self.nominal_rates)
            .filter(|(p, _)| **p > 0.0)
            .map(|(&p, &theta)| (p, theta))
            .collect();
        let m = active.len();
        if m == 0 {
            return None;
        }
        // skip[f][g]: probability that none of the phases strictly between
        // f and g is entered
        let q = |j: usize| 1.0 - active[j].0;
        let lambda = active.iter().map(|a| a.1).fold(0.0, f64::max);
        let mut jump = vec![vec![0.0; m]; m];
        let mut exit = vec![0.0; m];
        for f in 0..m {
            jump[f][f] = 1.0 - active[f].1 / lambda;
            let mut skip = 1.0;
            for g in f + 1..m {
                jump[f][g] = active[f].1 / lambda * active[g].0 * skip;
                skip *= q(g);
            }
            exit[f] = active[f].1 * skip;
        }
        let w: Vec<f64> = if density { exit } else { vec![1.0; m] };
        let w_max = w.iter().cloned().fold(0.0, f64::max);
        if w_max == 0.0 {
            return None;
        }

        let mut v = vec![0.0; m];
        let mut reach = 1.0;
        for g in 0..m {
            v[g] = active[g].0 * reach;
            reach *= q(g);
        }
        let lt = lambda * t;
        let ln_lt = lt.ln();
        let mut ln_weight = -lt;
        let mut ln_scale = 0.0;
        let mut logs: Vec<f64> = Vec::new();
        let mut best = f64::NEG_INFINITY;
        for k in 0..UNIFORMIZATION_MAX_TERMS {
            let mass: f64 = v.iter().sum();
            if mass == 0.0 {
                break;
            }
            let dot: f64 = v.iter().zip(&w).map(|(a, b)| a * b).sum();
            if dot > 0.0 {
                let term = ln_weight + ln_scale + dot.ln();
                logs.push(term);
                best = best.max(term);
            }
            let bound = ln_weight + ln_scale + (mass * w_max).ln();
            if k as f64 > lt && bound < best - 40.0 {
                break;
            }
            let mut next = vec![0.0; m];
            for f in 0..m {
                for g in f..m {
                    next[g] += v[f] * jump[f][g];
                }
            }
            let top = next.iter().cloned().fold(0.0, f64::max);
            if top == 0.0 {
                break;
            }
            for x in &mut next {
                *x /= top;
            }
            ln_scale += top.ln();
            v = next;
            ln_weight += ln_lt - ((k + 1) as f64).ln();
        }
        if best == f64::NEG_INFINITY {
            return None;
        }
        let sum: f64 = logs.iter().map(|l| (l - best).exp()).sum();
        Some(best + sum.ln())
    }

    pub fn mean(&self) -> f64 {
        self.probs
            .iter()
            .zip(&self.nominal_rates)
            .map(|(p, theta)| p / theta)
            .sum()
    }

    pub fn variance(&self) -> f64 {
        self.probs
            .iter()
            .zip(&self.nominal_rates)
            .map(|(p, theta)| 2.0 * p / (theta * theta) - (p / theta).powi(2))
            .sum()
    }

    pub fn std_dev(&self) -> f64 {
        self.variance().sqrt()
    }

    /// One draw of `Σ X_f Y_f`.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let mut z = 0.0;
        for (&p, &theta) in self.probs.iter().zip(&self.nominal_rates) {
            let u: f64 = rng.random();
            if u < p {
                z += exponential(rng, theta);
            }
        }
        z
    }

    /// Classification on the nominal (un-nudged) parameters.
    pub fn classify(&self) -> Classification {
        let h = self.len();
        if h == 1 {
            return match self.probs[0] {
                0.0 => Classification::Degenerate,
                1.0 => Classification::Exponential,
                _ => Classification::General,
            };
        }
        if self.probs.iter().any(|&p| p != 1.0) {
            return Classification::General;
        }
        let r = &self.nominal_rates;
        let all_equal = r.iter().all(|&x| x == r[0]);
        let all_distinct = (0..h).all(|i| (i + 1..h).all(|j| r[i] != r[j]));
        if all_equal {
            Classification::Erlang
        } else if all_distinct {
            Classification::Hypoexponential
        } else {
            Classification::General
        }
    }

    pub fn summary(&self) -> PhaseTypeSummary {
        PhaseTypeSummary {
            mean: self.mean(),
            variance: self.variance(),
            atom_at_zero: self.atom_at_zero(),
            classification: self.classify(),
        }
    }
}

/// Sum of two independent single-phase variables when it is again single
/// phase: requires `θ2 - θ1 = p1·θ2`, and yields `C(p, θ1)` with
/// `p = (Δ·p1 + p1·p2·θ1) / Δ`, `Δ = θ2 - θ1`.
pub fn collapse(
    a: &PhaseTypeParams,
    b: &PhaseTypeParams,
) -> Result<PhaseTypeParams, PhaseTypeError> {
    if a.len() != 1 || b.len() != 1 {
        return Err(PhaseTypeError::NotSinglePhase(a.len(), b.len()));
    }
    let (p1, theta1) = (a.probs[0], a.nominal_rates[0]);
    let (p2, theta2) = (b.probs[0], b.nominal_rates[0]);
    let delta = theta2 - theta1;
    let scale = theta1.max(theta2);
    if delta == 0.0 || (delta - p1 * theta2).abs() > COLLAPSE_TOLERANCE * scale {
        return Err(PhaseTypeError::CollapseConditionNotMet);
    }
    let p = ((delta * p1 + p1 * p2 * theta1) / delta).clamp(0.0, 1.0);
    PhaseTypeParams::new(vec![p], vec![theta1])
}

fn check_time(t: f64) -> Result<(), PhaseTypeError> {
    if t < 0.0 || t.is_nan() {
        Err(PhaseTypeError::NegativeTime(t))
    } else {
        Ok(())
    }
}

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= RATE_COLLISION_TOLERANCE * a.abs().max(b.abs())
}

/// Nudge rates so that all are pairwise distinct, scanning in order.
fn separate_rates(nominal: &[f64]) -> Vec<f64> {
    let mut out: Vec<f64> = Vec::with_capacity(nominal.len());
    let mut collisions = 0u32;
    for &rate in nominal {
        if !out.iter().any(|&r| close(r, rate)) {
            out.push(rate);
            continue;
        }
        let mut candidate;
        loop {
            collisions += 1;
            candidate = rate * (1.0 + f64::from(collisions) * RATE_PERTURBATION);
            if !out.iter().any(|&r| close(r, candidate)) {
                break;
            }
        }
        out.push(candidate);
    }
    out
}

fn mixture_coefficients(probs: &[f64], rates: &[f64]) -> Vec<f64> {
    (0..probs.len())
        .map(|f| {
            if probs[f] == 0.0 {
                return 0.0;
            }
            let theta_f = rates[f];
            probs
                .iter()
                .zip(rates)
                .enumerate()
                .filter(|(g, _)| *g != f)
                .fold(probs[f], |acc, (_, (&p_g, &theta_g))| {
                    acc * (1.0 + p_g * theta_f / (theta_g - theta_f))
                })
        })
        .collect()
}

/// Neumaier summation; the mixture terms alternate in sign and can be large.
fn compensated_sum(values: impl Iterator<Item = f64>) -> f64 {
    let mut sum = 0.0f64;
    let mut comp = 0.0f64;
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            comp += (sum - t) + v;
        } else {
            comp += (v - t) + sum;
        }
        sum = t;
    }
    sum + comp
}
