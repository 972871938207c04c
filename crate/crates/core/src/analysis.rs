//! Approximation versus simulation: jitter errors, likelihoods, empirical
//! tails and region classification.

use serde::Serialize;
use thiserror::Error;

use crate::approx::FlowApproximation;
use crate::phasetype::{PhaseTypeError, PhaseTypeParams};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AnalysisError {
    #[error("simulated jitter is zero")]
    ZeroJitter,
    #[error("no samples")]
    EmptySamples,
    #[error("negative delay sample {0}")]
    NegativeSample(f64),
    #[error("model density is not positive at t = {0}; the samples do not fit the model")]
    NonPositiveDensity(f64),
    #[error(transparent)]
    PhaseType(#[from] PhaseTypeError),
}

/// `|approx - sim| / sim`.
pub fn relative_error(approx_jitter: f64, sim_jitter: f64) -> Result<f64, AnalysisError> {
    if sim_jitter == 0.0 {
        return Err(AnalysisError::ZeroJitter);
    }
    Ok((approx_jitter - sim_jitter).abs() / sim_jitter.abs())
}

pub fn sample_mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Sample standard deviation with the `n - 1` divisor.
pub fn sample_std(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    let m = sample_mean(xs);
    let ss: f64 = xs.iter().map(|x| (x - m).powi(2)).sum();
    (ss / (xs.len() - 1) as f64).sqrt()
}

/// Standard error of the mean of a correlated sequence, from `batches`
/// non-overlapping batch means. A trailing partial batch is ignored.
pub fn batch_means_se(xs: &[f64], batches: usize) -> f64 {
    let batches = batches.max(2);
    let size = xs.len() / batches;
    if size == 0 {
        return f64::NAN;
    }
    let means: Vec<f64> = xs.chunks_exact(size).take(batches).map(sample_mean).collect();
    sample_std(&means) / (batches as f64).sqrt()
}

/// `-Σ log L(z_i)`: continuous density for positive samples, the atom for
/// exact zeros. Infinite if a zero sample meets a model without an atom.
pub fn nll(params: &PhaseTypeParams, samples: &[f64]) -> Result<f64, AnalysisError> {
    if samples.is_empty() {
        return Err(AnalysisError::EmptySamples);
    }
    let log_atom = params.atom_at_zero().ln();
    let mut total = 0.0;
    let mut comp = 0.0;
    for &z in samples {
        let term = if z > 0.0 {
            match params.ln_pdf(z)? {
                Some(l) => -l,
                None => return Err(AnalysisError::NonPositiveDensity(z)),
            }
        } else if z == 0.0 {
            if log_atom == f64::NEG_INFINITY {
                return Ok(f64::INFINITY);
            }
            -log_atom
        } else {
            return Err(AnalysisError::NegativeSample(z));
        };
        // Neumaier: the sum runs over millions of samples
        let t = total + term;
        if total.abs() >= term.abs() {
            comp += (total - t) + term;
        } else {
            comp += (term - t) + total;
        }
        total = t;
    }
    Ok(total + comp)
}

/// Right-continuous step function `t -> #{z > t} / n`.
#[derive(Debug, Clone)]
pub struct EmpiricalCcdf {
    sorted: Vec<f64>,
}

impl EmpiricalCcdf {
    pub fn new(samples: &[f64]) -> Result<Self, AnalysisError> {
        if samples.is_empty() {
            return Err(AnalysisError::EmptySamples);
        }
        let mut sorted = samples.to_vec();
        sorted.sort_by(f64::total_cmp);
        Ok(Self { sorted })
    }

    pub fn len(&self) -> usize {
        self.sorted.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sorted.is_empty()
    }

    pub fn eval(&self, t: f64) -> f64 {
        let at_or_below = self.sorted.partition_point(|&z| z <= t);
        (self.sorted.len() - at_or_below) as f64 / self.sorted.len() as f64
    }

    /// Kolmogorov-Smirnov distance to a continuous model ccdf.
    pub fn ks_distance(&self, model_ccdf: impl Fn(f64) -> f64) -> f64 {
        let n = self.sorted.len() as f64;
        self.sorted
            .iter()
            .enumerate()
            .map(|(i, &z)| {
                let cdf = 1.0 - model_ccdf(z);
                let above = (i + 1) as f64 / n - cdf;
                let below = cdf - i as f64 / n;
                above.max(below)
            })
            .fold(0.0, f64::max)
    }
}

/// Asymptotic one-sample KS critical value at level `alpha`.
pub fn ks_critical_value(n: usize, alpha: f64) -> f64 {
    (-(alpha / 2.0).ln() / 2.0).sqrt() / (n as f64).sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Region {
    High,
    Low,
    /// One-hop flow: both approximations are the same distribution.
    IdenticalByConstruction,
}

impl std::fmt::Display for Region {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Region::High => "high",
            Region::Low => "low",
            Region::IdenticalByConstruction => "identical-by-construction",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FlowReport {
    pub flow_id: usize,
    pub hops: usize,
    pub samples: usize,
    pub sim_mean: f64,
    pub sim_jitter: f64,
    pub akia_mean: f64,
    pub akia_jitter: f64,
    pub kia_mean: f64,
    pub kia_jitter: f64,
    pub eps_akia: f64,
    pub eps_kia: f64,
    pub nll_akia: f64,
    pub nll_kia: f64,
    /// `nll_kia - nll_akia`
    pub delta_nll: f64,
    pub region: Region,
}

/// Both likelihoods are evaluated on the same `samples`.
pub fn flow_report(
    samples: &[f64],
    akia: &FlowApproximation,
    kia: &FlowApproximation,
) -> Result<FlowReport, AnalysisError> {
    if samples.is_empty() {
        return Err(AnalysisError::EmptySamples);
    }
    let sim_jitter = sample_std(samples);
    let eps_akia = relative_error(akia.jitter, sim_jitter)?;
    let eps_kia = relative_error(kia.jitter, sim_jitter)?;
    let nll_akia = nll(&akia.params, samples)?;
    let nll_kia = nll(&kia.params, samples)?;
    let hops = kia.hops();
    let region = if hops == 1 {
        Region::IdenticalByConstruction
    } else if eps_akia < eps_kia {
        Region::High
    } else {
        Region::Low
    };
    Ok(FlowReport {
        flow_id: akia.flow_id,
        hops,
        samples: samples.len(),
        sim_mean: sample_mean(samples),
        sim_jitter,
        akia_mean: akia.mean,
        akia_jitter: akia.jitter,
        kia_mean: kia.mean,
        kia_jitter: kia.jitter,
        eps_akia,
        eps_kia,
        nll_akia,
        nll_kia,
        delta_nll: nll_kia - nll_akia,
        region,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RegionSummary {
    pub flows: usize,
    pub high: usize,
    pub low: usize,
    pub identical: usize,
    /// Share of multi-hop flows in the high region.
    pub high_fraction: f64,
    /// Share of multi-hop flows with `delta_nll > 0`.
    pub positive_delta_fraction: f64,
    pub eps_akia_range: Option<(f64, f64)>,
    pub eps_kia_range: Option<(f64, f64)>,
}

pub fn region_classify(reports: &[FlowReport]) -> RegionSummary {
    let multi: Vec<&FlowReport> = reports
        .iter()
        .filter(|r| r.region != Region::IdenticalByConstruction)
        .collect();
    let count = |region| multi.iter().filter(|r| r.region == region).count();
    let (high, low) = (count(Region::High), count(Region::Low));
    let frac = |k: usize| {
        if multi.is_empty() {
            f64::NAN
        } else {
            k as f64 / multi.len() as f64
        }
    };
    let range = |f: fn(&FlowReport) -> f64| {
        multi.iter().map(|r| f(r)).fold(None, |acc: Option<(f64, f64)>, x| {
            Some(acc.map_or((x, x), |(lo, hi)| (lo.min(x), hi.max(x))))
        })
    };
    RegionSummary {
        flows: reports.len(),
        high,
        low,
        identical: reports.len() - multi.len(),
        high_fraction: frac(high),
        positive_delta_fraction: frac(multi.iter().filter(|r| r.delta_nll > 0.0).count()),
        eps_akia_range: range(|r| r.eps_akia),
        eps_kia_range: range(|r| r.eps_kia),
    }
}

/// First point where `diff` turns from negative to non-negative, located by
/// linear interpolation between neighbouring grid points.
pub fn crossing_point(xs: &[f64], diff: &[f64]) -> Option<f64> {
    assert_eq!(xs.len(), diff.len());
    xs.windows(2).zip(diff.windows(2)).find_map(|(x, d)| {
        if d[0] < 0.0 && d[1] >= 0.0 {
            Some(x[0] + (x[1] - x[0]) * (-d[0]) / (d[1] - d[0]))
        } else {
            None
        }
    })
}

/// `n` points from `lo` to `hi` inclusive, evenly spaced in log scale.
pub fn log_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    assert!(lo > 0.0 && hi > lo && n >= 2);
    let (a, b) = (lo.ln(), hi.ln());
    (0..n)
        .map(|i| (a + (b - a) * i as f64 / (n - 1) as f64).exp())
        .collect()
}
