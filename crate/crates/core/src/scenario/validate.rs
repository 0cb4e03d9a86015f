use super::Scenario;
use crate::rules::rule4_filter;
use crate::state::BrainKind;
use serde::Serialize;
use std::fmt;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Severity {
    Info,
    Warning,
    Violation,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Diagnostic {
    pub severity: Severity,
    pub code: &'static str,
    pub message: String,
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let tag = match self.severity {
            Severity::Info => "info",
            Severity::Warning => "warning",
            Severity::Violation => "violation",
        };
        write!(f, "{tag}[{}]: {}", self.code, self.message)
    }
}

/// Static checks on a parsed scenario. Violations mean the scenario breaks
/// a selection rule; infos and warnings describe its structure.
pub fn validate(s: &Scenario) -> Vec<Diagnostic> {
    let mut out = Vec::new();

    // Rule 2: an interaction involving an observer may only create that
    // observer's brain state as READY.
    for inter in &s.interactions {
        let Some(obs) = &inter.observer else { continue };
        for f in &inter.flows {
            let Some(t) = s.index_of(&f.target) else { continue };
            let target = &s.components[t];
            let Some(src) = s.index_of(&f.source) else { continue };
            let before = s.components[src].brains.iter().find(|b| &b.observer == obs);
            let after = target.brains.iter().find(|b| &b.observer == obs);
            if let Some(b) = after {
                let created = before.is_none_or(|p| p.name != b.name);
                if created && b.kind == BrainKind::Conscious {
                    out.push(Diagnostic {
                        severity: Severity::Violation,
                        code: "rule-2",
                        message: format!(
                            "{} interaction {} -> {} creates conscious state {} for {obs} directly",
                            inter.kind.keyword(),
                            f.source,
                            f.target,
                            b.name
                        ),
                    });
                }
            }
        }
    }

    let state = s.initial_state();
    let graph = s.flow_graph();
    let kept = rule4_filter(&graph, &state);
    let removed: Vec<_> = graph.edges.iter().filter(|e| !kept.edges.contains(e)).collect();
    if removed.is_empty() {
        out.push(Diagnostic {
            severity: Severity::Info,
            code: "rule-4",
            message: "no edges removed".into(),
        });
    }
    for e in removed {
        out.push(Diagnostic {
            severity: Severity::Info,
            code: "rule-4",
            message: format!(
                "edge {} -> {} over {} removed while its source is ready (anomalous capture)",
                s.components[e.source].id, s.components[e.target].id, e.window
            ),
        });
    }

    for (i, c) in s.components.iter().enumerate() {
        if c.weight == 0.0 && !graph.edges.iter().any(|e| e.target == i) {
            out.push(Diagnostic {
                severity: Severity::Warning,
                code: "unreachable",
                message: format!("component {} starts empty and receives no current", c.id),
            });
        }
    }
    out
}
