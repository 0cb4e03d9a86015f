//! Scenario definitions: the `.rsc` text format, its parser and printer,
//! validation, and the shipped catalog.
//!
//! See `scenarios/GRAMMAR.md` in this crate for the grammar.

mod parser;
mod validate;

pub use parser::parse;
pub use validate::{validate, Diagnostic, Severity};

use crate::state::{
    BrainLabel, Component, FlowEdge, FlowGraph, RateProfile, Superposition, Window,
};
use serde::{Deserialize, Serialize};
use std::fmt::{self, Write as _};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ScenarioError {
    #[error("{line}:{column}: syntax error: found {found}, expected {}", expected.join(" or "))]
    Syntax {
        line: usize,
        column: usize,
        found: String,
        expected: Vec<String>,
    },
    #[error("{line}:{column}: unknown reference '{name}'")]
    UnknownReference {
        name: String,
        line: usize,
        column: usize,
    },
    #[error("{line}:{column}: negative rate {value}")]
    NegativeRate {
        value: f64,
        line: usize,
        column: usize,
    },
    #[error("{line}:{column}: duplicate definition of '{name}'")]
    Duplicate {
        name: String,
        line: usize,
        column: usize,
    },
    #[error("ramp fractions leaving '{source_id}' over {window} sum to {total}, more than 1")]
    RampOverflow {
        source_id: String,
        window: Window,
        total: f64,
    },
    #[error("initial weights sum to {0}, expected 1")]
    BadNormalization(f64),
    #[error("unknown scenario '{0}'")]
    UnknownScenario(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InteractionKind {
    ParticleDetector,
    Physiological,
    DetectorDetector,
}

impl InteractionKind {
    pub fn keyword(self) -> &'static str {
        match self {
            InteractionKind::ParticleDetector => "particle_detector",
            InteractionKind::Physiological => "physiological",
            InteractionKind::DetectorDetector => "detector_detector",
        }
    }

    pub fn from_keyword(s: &str) -> Option<Self> {
        match s {
            "particle_detector" => Some(InteractionKind::ParticleDetector),
            "physiological" => Some(InteractionKind::Physiological),
            "detector_detector" => Some(InteractionKind::DetectorDetector),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FlowProfile {
    Ramp { fraction: f64 },
    Constant { rate: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Flow {
    pub source: String,
    pub target: String,
    pub profile: FlowProfile,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Interaction {
    pub kind: InteractionKind,
    pub window: Window,
    pub observer: Option<String>,
    pub flows: Vec<Flow>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComponentDecl {
    pub id: String,
    pub weight: f64,
    pub particle: String,
    pub detector: String,
    pub env: String,
    pub brains: Vec<BrainLabel>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub name: String,
    pub observers: Vec<String>,
    pub components: Vec<ComponentDecl>,
    pub interactions: Vec<Interaction>,
}

impl Scenario {
    pub fn index_of(&self, id: &str) -> Option<usize> {
        self.components.iter().position(|c| c.id == id)
    }

    pub fn initial_state(&self) -> Superposition {
        let components = self
            .components
            .iter()
            .map(|d| {
                let mut c = Component::new(d.id.clone(), d.weight)
                    .with_particle(d.particle.clone())
                    .with_detector(d.detector.clone())
                    .with_env(d.env.clone());
                for b in &d.brains {
                    c.set_brain(b.clone());
                }
                c
            })
            .collect();
        Superposition::new(components, self.start_time())
    }

    pub fn start_time(&self) -> f64 {
        self.interactions
            .iter()
            .map(|i| i.window.start)
            .fold(f64::INFINITY, f64::min)
            .min(0.0)
    }

    /// End of the last finite window; the natural run length.
    pub fn horizon(&self) -> f64 {
        self.interactions
            .iter()
            .flat_map(|i| [i.window.start, i.window.end])
            .filter(|t| t.is_finite())
            .fold(self.start_time(), f64::max)
    }

    /// Flow edges with ramp groups resolved: ramps leaving the same source
    /// over the same window drain it jointly.
    pub fn flow_graph(&self) -> FlowGraph {
        let mut edges = Vec::new();
        for inter in &self.interactions {
            for f in &inter.flows {
                let (Some(source), Some(target)) = (self.index_of(&f.source), self.index_of(&f.target))
                else {
                    continue;
                };
                let profile = match f.profile {
                    FlowProfile::Constant { rate } => RateProfile::Constant { rate },
                    FlowProfile::Ramp { fraction } => RateProfile::Ramp {
                        fraction,
                        group: self.ramp_group(&f.source, inter.window),
                    },
                };
                edges.push(FlowEdge::new(source, target, profile, inter.window));
            }
        }
        FlowGraph::new(edges)
    }

    pub(crate) fn ramp_group(&self, source: &str, window: Window) -> f64 {
        self.interactions
            .iter()
            .filter(|i| i.window == window)
            .flat_map(|i| &i.flows)
            .filter(|f| f.source == source)
            .map(|f| match f.profile {
                FlowProfile::Ramp { fraction } => fraction,
                FlowProfile::Constant { .. } => 0.0,
            })
            .sum()
    }

    /// Canonical source text. Parsing it yields an equal scenario.
    pub fn format(&self) -> String {
        self.to_string()
    }
}

fn num(x: f64) -> String {
    if x == f64::INFINITY {
        "inf".into()
    } else {
        format!("{x}")
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut out = String::new();
        writeln!(out, "scenario {}", self.name)?;
        for o in &self.observers {
            writeln!(out, "observer {o}")?;
        }
        for c in &self.components {
            write!(
                out,
                "component {} weight {} particle {} detector {} env {}",
                c.id,
                num(c.weight),
                c.particle,
                c.detector,
                c.env
            )?;
            for b in &c.brains {
                write!(out, " brain {} {} {}", b.observer, b.name, b.kind.keyword())?;
            }
            out.push('\n');
        }
        for i in &self.interactions {
            write!(
                out,
                "interaction {} from {} to {}",
                i.kind.keyword(),
                num(i.window.start),
                num(i.window.end)
            )?;
            if let Some(o) = &i.observer {
                write!(out, " observer {o}")?;
            }
            out.push('\n');
            for fl in &i.flows {
                let profile = match fl.profile {
                    FlowProfile::Ramp { fraction } => format!("ramp {}", num(fraction)),
                    FlowProfile::Constant { rate } => format!("constant {}", num(rate)),
                };
                writeln!(out, "  flow {} -> {} {}", fl.source, fl.target, profile)?;
            }
            out.push_str("end\n");
        }
        f.write_str(&out)
    }
}

/// Names of the shipped scenarios, in catalog order.
pub const CATALOG: [&str; 14] = [
    "eq1-detector",
    "eq3-entangled-observer",
    "eq5-terminal-observer",
    "intermediate-observer",
    "outside-terminal-observer",
    "intermediate-outside-observer",
    "drift-consciousness",
    "sequential-interactions",
    "cat-v1",
    "cat-v1-outside",
    "cat-v2",
    "cat-v2-outside",
    "cat-v2-wakeup",
    "nondemolition",
];

/// Source text of a shipped scenario.
pub fn builtin_source(name: &str) -> Option<&'static str> {
    Some(match name {
        "eq1-detector" => include_str!("../../scenarios/eq1-detector.rsc"),
        "eq3-entangled-observer" => include_str!("../../scenarios/eq3-entangled-observer.rsc"),
        "eq5-terminal-observer" => include_str!("../../scenarios/eq5-terminal-observer.rsc"),
        "intermediate-observer" => include_str!("../../scenarios/intermediate-observer.rsc"),
        "outside-terminal-observer" => {
            include_str!("../../scenarios/outside-terminal-observer.rsc")
        }
        "intermediate-outside-observer" => {
            include_str!("../../scenarios/intermediate-outside-observer.rsc")
        }
        "drift-consciousness" => include_str!("../../scenarios/drift-consciousness.rsc"),
        "sequential-interactions" => include_str!("../../scenarios/sequential-interactions.rsc"),
        "cat-v1" => include_str!("../../scenarios/cat-v1.rsc"),
        "cat-v1-outside" => include_str!("../../scenarios/cat-v1-outside.rsc"),
        "cat-v2" => include_str!("../../scenarios/cat-v2.rsc"),
        "cat-v2-outside" => include_str!("../../scenarios/cat-v2-outside.rsc"),
        "cat-v2-wakeup" => include_str!("../../scenarios/cat-v2-wakeup.rsc"),
        "nondemolition" => include_str!("../../scenarios/nondemolition.rsc"),
        _ => return None,
    })
}

pub fn builtin(name: &str) -> Result<Scenario, ScenarioError> {
    let src = builtin_source(name).ok_or_else(|| ScenarioError::UnknownScenario(name.into()))?;
    parse(src)
}
