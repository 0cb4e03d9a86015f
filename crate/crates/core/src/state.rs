//! Superpositions as weighted, labelled components and the probability
//! current that moves squared amplitude between them.

use serde::{Deserialize, Serialize};
use std::fmt;
use thiserror::Error;

/// Tolerance on `total_weight` for accepting a state as normalized.
pub const NORMALIZATION_TOLERANCE: f64 = 1e-6;

/// Weights at or below this are treated as unoccupied.
pub const OCCUPIED_EPS: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StateError {
    #[error("time step must be positive, got {0}")]
    NegativeDt(f64),
    #[error("state is not normalized: total weight {0}")]
    UnnormalizedInput(f64),
    #[error("component {0} is not alive")]
    DeadComponent(String),
    #[error("no component with index {0}")]
    NoSuchComponent(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BrainKind {
    Absent,
    UnknownX,
    Ready,
    Conscious,
}

impl BrainKind {
    /// Whether a label may move from `self` to `next`.
    /// Allowed path: ABSENT/UNKNOWN_X -> READY -> CONSCIOUS.
    pub fn can_become(self, next: BrainKind) -> bool {
        use BrainKind::*;
        matches!(
            (self, next),
            (Absent, Ready) | (UnknownX, Ready) | (Ready, Conscious)
        ) || self == next
    }

    pub fn keyword(self) -> &'static str {
        match self {
            BrainKind::Absent => "absent",
            BrainKind::UnknownX => "unknown",
            BrainKind::Ready => "ready",
            BrainKind::Conscious => "conscious",
        }
    }
}

/// One observer's brain state inside a component. `name` is the symbol
/// the state goes by (`B_0`, `C_N`, `X`).
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct BrainLabel {
    pub observer: String,
    pub name: String,
    pub kind: BrainKind,
}

impl BrainLabel {
    pub fn new(observer: impl Into<String>, name: impl Into<String>, kind: BrainKind) -> Self {
        Self {
            observer: observer.into(),
            name: name.into(),
            kind,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Component {
    pub id: String,
    pub weight: f64,
    pub particle: String,
    pub detector: String,
    pub brains: Vec<BrainLabel>,
    pub env: String,
    pub alive: bool,
}

impl Component {
    pub fn new(id: impl Into<String>, weight: f64) -> Self {
        Self {
            id: id.into(),
            weight,
            particle: "-".into(),
            detector: "-".into(),
            brains: Vec::new(),
            env: String::new(),
            alive: true,
        }
    }

    pub fn with_particle(mut self, p: impl Into<String>) -> Self {
        self.particle = p.into();
        self
    }

    pub fn with_detector(mut self, d: impl Into<String>) -> Self {
        self.detector = d.into();
        self
    }

    pub fn with_env(mut self, env: impl Into<String>) -> Self {
        self.env = env.into();
        self
    }

    pub fn with_brain(mut self, label: BrainLabel) -> Self {
        self.set_brain(label);
        self
    }

    /// Replaces any existing label for the same observer.
    pub fn set_brain(&mut self, label: BrainLabel) {
        match self.brains.iter_mut().find(|b| b.observer == label.observer) {
            Some(slot) => *slot = label,
            None => self.brains.push(label),
        }
    }

    pub fn brain(&self, observer: &str) -> Option<&BrainLabel> {
        self.brains.iter().find(|b| b.observer == observer)
    }

    pub fn ready_observers(&self) -> impl Iterator<Item = &str> {
        self.brains
            .iter()
            .filter(|b| b.kind == BrainKind::Ready)
            .map(|b| b.observer.as_str())
    }

    pub fn has_ready(&self) -> bool {
        self.brains.iter().any(|b| b.kind == BrainKind::Ready)
    }

    pub fn is_occupied(&self) -> bool {
        self.alive && self.weight > OCCUPIED_EPS
    }

    /// Everything an observer could in principle report about this
    /// component; the environment tag is deliberately absent.
    pub fn observable_label(&self) -> String {
        let mut out = format!("{}|{}", self.particle, self.detector);
        let mut brains: Vec<_> = self
            .brains
            .iter()
            .filter(|b| b.kind != BrainKind::Absent)
            .collect();
        brains.sort();
        for b in brains {
            let mark = match b.kind {
                BrainKind::Conscious => "!",
                BrainKind::Ready => "?",
                _ => "",
            };
            out.push_str(&format!("|{}:{}{}", b.observer, b.name, mark));
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Superposition {
    pub components: Vec<Component>,
    pub time: f64,
}

impl Superposition {
    pub fn new(components: Vec<Component>, time: f64) -> Self {
        Self { components, time }
    }

    pub fn index_of(&self, id: &str) -> Option<usize> {
        self.components.iter().position(|c| c.id == id)
    }

    pub fn get(&self, index: usize) -> Result<&Component, StateError> {
        self.components
            .get(index)
            .ok_or(StateError::NoSuchComponent(index))
    }

    /// Sum of weights over alive components.
    pub fn total_weight(&self) -> f64 {
        self.components
            .iter()
            .filter(|c| c.alive)
            .map(|c| c.weight)
            .sum()
    }

    pub fn is_normalized(&self) -> bool {
        (self.total_weight() - 1.0).abs() <= NORMALIZATION_TOLERANCE
    }

    pub fn occupied(&self) -> impl Iterator<Item = (usize, &Component)> {
        self.components
            .iter()
            .enumerate()
            .filter(|(_, c)| c.is_occupied())
    }

    /// Forward-Euler step: each active edge moves `rate(t) * dt` of its
    /// source's current weight (capped at all of it) to the target.
    pub fn evolve_step(&self, graph: &FlowGraph, dt: f64) -> Result<Superposition, StateError> {
        if !(dt > 0.0) {
            return Err(StateError::NegativeDt(dt));
        }
        let total = self.total_weight();
        if (total - 1.0).abs() > NORMALIZATION_TOLERANCE {
            return Err(StateError::UnnormalizedInput(total));
        }
        let t = self.time;
        let mut next = self.clone();
        let mut delta = vec![0.0; self.components.len()];
        for (src, edges) in graph.by_source(self) {
            let w = self.components[src].weight;
            let rates: Vec<f64> = edges.iter().map(|e| e.rate(t).max(0.0)).collect();
            let total_rate: f64 = rates.iter().sum();
            if total_rate <= 0.0 || w <= 0.0 {
                continue;
            }
            let moved = w * (total_rate * dt).min(1.0);
            delta[src] -= moved;
            for (e, r) in edges.iter().zip(&rates) {
                delta[e.target] += moved * r / total_rate;
            }
        }
        apply_delta(&mut next, &delta);
        next.time = t + dt;
        Ok(next)
    }

    /// Advances the clock to `t_end` using the closed-form transfer of
    /// each profile. Exact for components that are only sources or only
    /// targets within a window segment; segments where a component is
    /// both are split into short substeps.
    pub fn evolve_to(&self, graph: &FlowGraph, t_end: f64) -> Superposition {
        let mut state = self.clone();
        if t_end <= state.time {
            return state;
        }
        let w = self.weights_at(graph, t_end);
        for (c, w) in state.components.iter_mut().zip(w) {
            c.weight = w;
        }
        state.time = t_end;
        state
    }

    /// Component weights after exact evolution to `t_end`, leaving labels alone.
    pub fn weights_at(&self, graph: &FlowGraph, t_end: f64) -> Vec<f64> {
        let mut w: Vec<f64> = self.components.iter().map(|c| c.weight).collect();
        if t_end <= self.time {
            return w;
        }
        let mut cuts: Vec<f64> = graph
            .breakpoints()
            .into_iter()
            .filter(|&b| b > self.time && b < t_end)
            .collect();
        cuts.push(t_end);
        let mut a = self.time;
        for b in cuts {
            let steps = if graph.has_relay(self, a, b) { RELAY_SUBSTEPS } else { 1 };
            for k in 0..steps {
                let s0 = a + (b - a) * k as f64 / steps as f64;
                let s1 = if k + 1 == steps {
                    b
                } else {
                    a + (b - a) * (k + 1) as f64 / steps as f64
                };
                self.transfer_exact(graph, s0, s1, &mut w);
            }
            a = b;
        }
        w
    }

    fn transfer_exact(&self, graph: &FlowGraph, a: f64, b: f64, weights: &mut [f64]) {
        let mut delta = vec![0.0; weights.len()];
        for (src, edges) in graph.by_source_in(self, a, b) {
            let w = weights[src];
            if w <= 0.0 {
                continue;
            }
            let integrals: Vec<f64> = edges.iter().map(|e| e.integrated_rate(a, b)).collect();
            let total: f64 = integrals.iter().sum();
            if total <= 0.0 {
                continue;
            }
            let moved = w * (1.0 - (-total).exp());
            delta[src] -= moved;
            if total.is_finite() {
                for (e, r) in edges.iter().zip(&integrals) {
                    delta[e.target] += moved * r / total;
                }
            } else {
                // Fully drained ramp group: split by declared fractions.
                let inf: Vec<_> = edges
                    .iter()
                    .zip(&integrals)
                    .filter(|(_, r)| r.is_infinite())
                    .map(|(e, _)| e)
                    .collect();
                let f: f64 = inf.iter().map(|e| e.profile.fraction()).sum();
                for e in inf {
                    delta[e.target] += moved * e.profile.fraction() / f;
                }
            }
        }
        for (w, d) in weights.iter_mut().zip(&delta) {
            if *d != 0.0 {
                *w = (*w + d).max(0.0);
            }
        }
    }

    /// Keeps `keep`, rescaled to weight 1, and zeroes every other occupied
    /// component. Unoccupied components stay alive so later interactions
    /// can still feed them.
    pub fn zero_others(&self, keep: usize) -> Result<Superposition, StateError> {
        let c = self.get(keep)?;
        if !c.alive {
            return Err(StateError::DeadComponent(c.id.clone()));
        }
        let mut next = self.clone();
        for (i, c) in next.components.iter_mut().enumerate() {
            if i == keep {
                c.weight = 1.0;
            } else if c.weight > 0.0 {
                c.weight = 0.0;
                c.alive = false;
            }
        }
        Ok(next)
    }

    /// Zeroes the listed components and rescales the survivors to unit norm.
    pub fn zero_and_renormalize(&self, zeroed: &[usize]) -> Superposition {
        let mut next = self.clone();
        for &i in zeroed {
            let c = &mut next.components[i];
            c.weight = 0.0;
            c.alive = false;
        }
        let total = next.total_weight();
        if total > 0.0 {
            for c in next.components.iter_mut().filter(|c| c.alive) {
                c.weight /= total;
            }
        }
        next
    }
}

const RELAY_SUBSTEPS: usize = 64;

fn apply_delta(state: &mut Superposition, delta: &[f64]) {
    for (c, d) in state.components.iter_mut().zip(delta) {
        if *d != 0.0 {
            c.weight = (c.weight + d).max(0.0);
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Window {
    pub start: f64,
    pub end: f64,
}

impl Window {
    pub fn new(start: f64, end: f64) -> Self {
        Self { start, end }
    }

    pub fn contains(&self, t: f64) -> bool {
        t >= self.start && t < self.end
    }

    pub fn len(&self) -> f64 {
        self.end - self.start
    }
}

impl fmt::Display for Window {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{}, {}]", self.start, self.end)
    }
}

/// Relative transfer rate of an edge: the fraction of the source's
/// current weight moved per unit time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RateProfile {
    Constant { rate: f64 },
    /// Source weight falls linearly so that `fraction` of it has moved
    /// to this target by the end of the window. `group` is the summed
    /// fraction of all ramps leaving the same source over the same window.
    Ramp { fraction: f64, group: f64 },
}

impl RateProfile {
    pub fn ramp(fraction: f64) -> Self {
        RateProfile::Ramp {
            fraction,
            group: fraction,
        }
    }

    pub fn fraction(&self) -> f64 {
        match *self {
            RateProfile::Constant { .. } => 0.0,
            RateProfile::Ramp { fraction, .. } => fraction,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlowEdge {
    pub source: usize,
    pub target: usize,
    pub profile: RateProfile,
    pub window: Window,
}

impl FlowEdge {
    pub fn new(source: usize, target: usize, profile: RateProfile, window: Window) -> Self {
        Self {
            source,
            target,
            profile,
            window,
        }
    }

    /// Rate at time `t`; zero outside the window.
    pub fn rate(&self, t: f64) -> f64 {
        if !self.window.contains(t) {
            return 0.0;
        }
        match self.profile {
            RateProfile::Constant { rate } => rate,
            RateProfile::Ramp { fraction, group } => {
                let eps = self.window.len();
                fraction / (eps - group * (t - self.window.start))
            }
        }
    }

    /// Integral of `rate` over `[a, b]`, clipped to the window.
    pub fn integrated_rate(&self, a: f64, b: f64) -> f64 {
        let lo = a.max(self.window.start);
        let hi = b.min(self.window.end);
        if hi <= lo {
            return 0.0;
        }
        match self.profile {
            RateProfile::Constant { rate } => rate * (hi - lo),
            RateProfile::Ramp { fraction, group } => {
                let eps = self.window.len();
                let left = eps - group * (lo - self.window.start);
                let right = eps - group * (hi - self.window.start);
                if right <= 0.0 {
                    f64::INFINITY
                } else {
                    fraction / group * (left / right).ln()
                }
            }
        }
    }

    pub fn active_during(&self, a: f64, b: f64) -> bool {
        self.window.start < b && self.window.end > a
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FlowGraph {
    pub edges: Vec<FlowEdge>,
}

impl FlowGraph {
    pub fn new(edges: Vec<FlowEdge>) -> Self {
        Self { edges }
    }

    pub fn breakpoints(&self) -> Vec<f64> {
        let mut pts: Vec<f64> = self
            .edges
            .iter()
            .flat_map(|e| [e.window.start, e.window.end])
            .filter(|t| t.is_finite())
            .collect();
        pts.sort_by(f64::total_cmp);
        pts.dedup();
        pts
    }

    fn usable<'a>(&'a self, e: &'a FlowEdge, s: &Superposition) -> bool {
        e.source != e.target
            && s.components.get(e.source).is_some_and(|c| c.alive)
            && s.components.get(e.target).is_some_and(|c| c.alive)
    }

    fn by_source(&self, s: &Superposition) -> Vec<(usize, Vec<&FlowEdge>)> {
        let t = s.time;
        self.group(s, |e| e.window.contains(t))
    }

    fn by_source_in(&self, s: &Superposition, a: f64, b: f64) -> Vec<(usize, Vec<&FlowEdge>)> {
        self.group(s, |e| e.active_during(a, b))
    }

    fn group(
        &self,
        s: &Superposition,
        keep: impl Fn(&FlowEdge) -> bool,
    ) -> Vec<(usize, Vec<&FlowEdge>)> {
        let mut out: Vec<(usize, Vec<&FlowEdge>)> = Vec::new();
        for e in self.edges.iter().filter(|e| self.usable(e, s) && keep(e)) {
            match out.iter_mut().find(|(src, _)| *src == e.source) {
                Some((_, v)) => v.push(e),
                None => out.push((e.source, vec![e])),
            }
        }
        out
    }

    /// True when some alive component both sends and receives during `[a, b]`.
    fn has_relay(&self, s: &Superposition, a: f64, b: f64) -> bool {
        let active: Vec<&FlowEdge> = self
            .edges
            .iter()
            .filter(|e| self.usable(e, s) && e.active_during(a, b))
            .collect();
        active
            .iter()
            .any(|e| active.iter().any(|f| f.target == e.source))
    }

    /// Whether `index` has an outbound edge that can still carry current
    /// at or after `t`.
    pub fn sends_after(&self, s: &Superposition, index: usize, t: f64) -> bool {
        self.edges
            .iter()
            .any(|e| e.source == index && e.window.end > t && self.usable(e, s))
    }

    /// Inbound absolute current `Σ rate(t) · w_source` into `index`.
    pub fn inflow(&self, s: &Superposition, index: usize, t: f64) -> f64 {
        self.edges
            .iter()
            .filter(|e| e.target == index && self.usable(e, s))
            .map(|e| e.rate(t).max(0.0) * s.components[e.source].weight)
            .filter(|j| j.is_finite())
            .sum()
    }
}
