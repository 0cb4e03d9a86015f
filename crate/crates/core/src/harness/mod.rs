//! Running scenarios under both regimes, exactly and by sampling, and
//! comparing what observers would record.

mod compare;
mod enumerate;
mod trials;

pub use compare::{compare, compare_with, CompareMode, ComparisonVerdict, Thresholds};
pub use enumerate::{enumerate_outcomes, enumerate_with, EnumerateOptions, Enumeration};
pub use trials::{run_trials, trial_seed};

use crate::rules::{apply_hit, Acquisition, RuleError, RuleSet};
use crate::scenario::ScenarioError;
use crate::state::Superposition;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fmt;
use thiserror::Error;

/// Weight below which a component is not reported as surviving.
pub const SURVIVAL_EPS: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("enumeration exceeded {cap} branches")]
    StateExplosion { cap: usize },
    #[error("distribution is empty")]
    EmptyDistribution,
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error(transparent)]
    Rule(#[from] RuleError),
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
}

/// What observers can know about a run: each observer's sequence of newly
/// conscious states, and the labels of whatever survives at the end.
/// Environment tags, rule identities and hit times are not part of it.
#[derive(Debug, Clone, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ObservableRecord {
    pub acquisitions: BTreeMap<String, Vec<String>>,
    pub final_labels: Vec<String>,
}

impl ObservableRecord {
    pub fn from_run(state: &Superposition, acquisitions: &[Acquisition]) -> Self {
        let mut by_observer: BTreeMap<String, Vec<String>> = BTreeMap::new();
        for a in acquisitions {
            by_observer
                .entry(a.observer.clone())
                .or_default()
                .push(format!("{}|{}|{}", a.particle, a.detector, a.brain));
        }
        let mut final_labels: Vec<String> = state
            .components
            .iter()
            .filter(|c| c.alive && c.weight > SURVIVAL_EPS)
            .map(|c| c.observable_label())
            .collect();
        final_labels.sort();
        final_labels.dedup();
        Self {
            acquisitions: by_observer,
            final_labels,
        }
    }

    /// Single-line form used as a map key in JSON and CSV output.
    pub fn key(&self) -> String {
        self.to_string()
    }
}

impl fmt::Display for ObservableRecord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (obs, seq) in &self.acquisitions {
            write!(f, "{obs}=[{}] ", seq.join("; "))?;
        }
        write!(f, "final={{{}}}", self.final_labels.join(", "))
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct OutcomeDistribution {
    pub probabilities: BTreeMap<ObservableRecord, f64>,
    /// Number of trials behind an empirical distribution; `None` for exact ones.
    pub samples: Option<u64>,
}

impl OutcomeDistribution {
    pub fn point(record: ObservableRecord) -> Self {
        let mut probabilities = BTreeMap::new();
        probabilities.insert(record, 1.0);
        Self {
            probabilities,
            samples: None,
        }
    }

    pub fn total(&self) -> f64 {
        self.probabilities.values().sum()
    }

    pub fn probability(&self, record: &ObservableRecord) -> f64 {
        self.probabilities.get(record).copied().unwrap_or(0.0)
    }

    /// Probability mass on records satisfying `pred`.
    pub fn mass(&self, pred: impl Fn(&ObservableRecord) -> bool) -> f64 {
        self.probabilities
            .iter()
            .filter(|(r, _)| pred(r))
            .map(|(_, p)| p)
            .sum::<f64>()
            + 0.0
    }

    pub fn len(&self) -> usize {
        self.probabilities.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probabilities.is_empty()
    }

    pub fn to_json(&self) -> serde_json::Value {
        let outcomes: Vec<_> = self
            .probabilities
            .iter()
            .map(|(r, p)| {
                serde_json::json!({
                    "record": r,
                    "key": r.key(),
                    "probability": p,
                })
            })
            .collect();
        serde_json::json!({ "samples": self.samples, "outcomes": outcomes })
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("record,probability\n");
        for (r, p) in &self.probabilities {
            out.push_str(&format!("\"{}\",{}\n", r.key().replace('"', "\"\""), p));
        }
        out
    }
}

/// Accumulated facts along one run.
#[derive(Debug, Clone)]
pub(crate) struct Run {
    pub state: Superposition,
    pub acquisitions: Vec<Acquisition>,
}

impl Run {
    pub fn new(state: Superposition) -> Self {
        Self {
            state,
            acquisitions: Vec::new(),
        }
    }

    pub fn hit(&self, at: &Superposition, index: usize, time: f64, rules: &RuleSet) -> Result<Run, RuleError> {
        let (state, _event, acq) = apply_hit(at, index, time, rules)?;
        let mut acquisitions = self.acquisitions.clone();
        acquisitions.extend(acq);
        Ok(Run {
            state,
            acquisitions,
        })
    }

    pub fn record(&self) -> ObservableRecord {
        ObservableRecord::from_run(&self.state, &self.acquisitions)
    }
}
