use super::{HarnessError, ObservableRecord, OutcomeDistribution};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};
use std::collections::BTreeSet;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CompareMode {
    Exact,
    Mc,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Thresholds {
    /// EXACT: equal iff total variation is at most this.
    pub tvd: f64,
    /// MC: equal iff the chi-square p-value is at least this.
    pub p_value: f64,
}

impl Default for Thresholds {
    fn default() -> Self {
        Self {
            tvd: 1e-9,
            p_value: 0.01,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonVerdict {
    pub mode: CompareMode,
    pub total_variation: f64,
    pub chi_square_p: Option<f64>,
    pub equal: bool,
}

pub fn compare(
    a: &OutcomeDistribution,
    b: &OutcomeDistribution,
    mode: CompareMode,
) -> Result<ComparisonVerdict, HarnessError> {
    compare_with(a, b, mode, &Thresholds::default())
}

pub fn compare_with(
    a: &OutcomeDistribution,
    b: &OutcomeDistribution,
    mode: CompareMode,
    th: &Thresholds,
) -> Result<ComparisonVerdict, HarnessError> {
    if a.is_empty() || b.is_empty() {
        return Err(HarnessError::EmptyDistribution);
    }
    let keys: BTreeSet<&ObservableRecord> =
        a.probabilities.keys().chain(b.probabilities.keys()).collect();
    let tvd = 0.5
        * keys
            .iter()
            .map(|k| (a.probability(k) - b.probability(k)).abs())
            .sum::<f64>();
    match mode {
        CompareMode::Exact => Ok(ComparisonVerdict {
            mode,
            total_variation: tvd,
            chi_square_p: None,
            equal: tvd <= th.tvd,
        }),
        CompareMode::Mc => {
            let p = chi_square_p(a, b, &keys)?;
            Ok(ComparisonVerdict {
                mode,
                total_variation: tvd,
                chi_square_p: Some(p),
                equal: p >= th.p_value,
            })
        }
    }
}

/// Two-sample chi-square homogeneity test when both sides carry sample
/// counts; goodness of fit against the exact side when only one does.
fn chi_square_p(
    a: &OutcomeDistribution,
    b: &OutcomeDistribution,
    keys: &BTreeSet<&ObservableRecord>,
) -> Result<f64, HarnessError> {
    let (stat, cells) = match (a.samples, b.samples) {
        (Some(na), Some(nb)) => {
            let (na, nb) = (na as f64, nb as f64);
            let mut stat = 0.0;
            let mut cells = 0usize;
            for k in keys {
                let ca = (a.probability(k) * na).round();
                let cb = (b.probability(k) * nb).round();
                if ca + cb == 0.0 {
                    continue;
                }
                cells += 1;
                let d = ca * (nb / na).sqrt() - cb * (na / nb).sqrt();
                stat += d * d / (ca + cb);
            }
            (stat, cells)
        }
        (Some(n), None) => goodness_of_fit(a, b, n, keys),
        (None, Some(n)) => goodness_of_fit(b, a, n, keys),
        (None, None) => {
            return Err(HarnessError::InvalidArgument(
                "MC comparison needs at least one sampled distribution".into(),
            ))
        }
    };
    if cells <= 1 {
        return Ok(if stat == 0.0 { 1.0 } else { 0.0 });
    }
    if !stat.is_finite() {
        return Ok(0.0);
    }
    let dist = ChiSquared::new((cells - 1) as f64)
        .map_err(|e| HarnessError::InvalidArgument(e.to_string()))?;
    Ok(1.0 - dist.cdf(stat))
}

fn goodness_of_fit(
    sampled: &OutcomeDistribution,
    exact: &OutcomeDistribution,
    n: u64,
    keys: &BTreeSet<&ObservableRecord>,
) -> (f64, usize) {
    let n = n as f64;
    let mut stat = 0.0;
    let mut cells = 0usize;
    for k in keys {
        let expected = exact.probability(k) * n;
        let observed = (sampled.probability(k) * n).round();
        if expected <= 0.0 {
            if observed > 0.0 {
                return (f64::INFINITY, cells.max(2));
            }
            continue;
        }
        cells += 1;
        stat += (observed - expected).powi(2) / expected;
    }
    (stat, cells)
}
