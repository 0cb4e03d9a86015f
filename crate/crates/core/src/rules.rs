//! The stochastic trigger, the reduction rules and the two selection
//! rules, applied under either the observer or the objective regime.
//!
//! Hit intensity: a component that can be chosen, and is not itself
//! passing current on, is hit at rate `J_in(t) / U(t)`, where `J_in` is
//! its absolute inbound current and `U` is the alive weight not yet held
//! by such components. With a single source `U` is the source weight and
//! the intensity is just the edge's relative rate. The survival
//! probability over any interval is then `U(end) / U(start)`, so a
//! component's chance of being chosen first equals the weight it
//! receives.

use crate::state::{BrainKind, BrainLabel, Component, FlowGraph, StateError, Superposition};
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::fmt;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RuleError {
    #[error("component {0} carries no ready brain state")]
    NoReadyBrain(String),
    #[error(transparent)]
    State(#[from] StateError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Rule {
    #[serde(rename = "1")]
    Trigger,
    #[serde(rename = "1a")]
    ObjectiveReduction,
    #[serde(rename = "2")]
    ReadyCreation,
    #[serde(rename = "3")]
    ObserverReduction,
    #[serde(rename = "3mod")]
    ConsciousOnly,
    #[serde(rename = "4")]
    NoReadyToReady,
}

impl Rule {
    pub fn id(self) -> &'static str {
        match self {
            Rule::Trigger => "1",
            Rule::ObjectiveReduction => "1a",
            Rule::ReadyCreation => "2",
            Rule::ObserverReduction => "3",
            Rule::ConsciousOnly => "3mod",
            Rule::NoReadyToReady => "4",
        }
    }
}

impl fmt::Display for Rule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.id())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Regime {
    Observer,
    Objective,
}

impl fmt::Display for Regime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Regime::Observer => "observer",
            Regime::Objective => "objective",
        })
    }
}

impl std::str::FromStr for Regime {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "observer" => Ok(Regime::Observer),
            "objective" => Ok(Regime::Objective),
            other => Err(format!("unknown regime '{other}'")),
        }
    }
}

/// A regime plus the two mutations used to check that the harness can
/// tell rule sets apart. Both mutations are off in the real rule sets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RuleSet {
    pub regime: Regime,
    pub rule4: bool,
    /// Mutant: rule 1a also zeroes components coherent with the chosen one.
    pub coherent_1a: bool,
}

impl RuleSet {
    pub fn observer() -> Self {
        Self::of(Regime::Observer)
    }

    pub fn objective() -> Self {
        Self::of(Regime::Objective)
    }

    pub fn of(regime: Regime) -> Self {
        Self {
            regime,
            rule4: true,
            coherent_1a: false,
        }
    }

    pub fn without_rule4(mut self) -> Self {
        self.rule4 = false;
        self
    }

    pub fn with_coherent_1a(mut self) -> Self {
        self.coherent_1a = true;
        self
    }

    pub fn active_rules(&self) -> Vec<Rule> {
        let mut rules = match self.regime {
            Regime::Observer => vec![Rule::Trigger, Rule::ReadyCreation, Rule::ObserverReduction],
            Regime::Objective => vec![
                Rule::Trigger,
                Rule::ObjectiveReduction,
                Rule::ReadyCreation,
                Rule::ConsciousOnly,
            ],
        };
        if self.rule4 {
            rules.push(Rule::NoReadyToReady);
        }
        rules
    }

    /// Whether a hit on `index` would have any effect under this rule set.
    pub fn can_choose(&self, s: &Superposition, index: usize) -> bool {
        let c = &s.components[index];
        if !c.alive {
            return false;
        }
        if c.has_ready() {
            return true;
        }
        match self.regime {
            Regime::Observer => false,
            Regime::Objective => s.occupied().any(|(j, other)| {
                j != index && (self.coherent_1a || locally_incoherent(c, other))
            }),
        }
    }
}

/// Which components the trigger may select.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Candidacy {
    /// Every component receiving current.
    Any,
    Rules(RuleSet),
}

impl Candidacy {
    pub fn is_candidate(&self, s: &Superposition, index: usize) -> bool {
        match self {
            Candidacy::Any => s.components[index].alive,
            Candidacy::Rules(r) => r.can_choose(s, index),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StochasticEvent {
    pub time: f64,
    pub chosen: String,
    pub applied_rules: Vec<Rule>,
    pub reduced: bool,
}

impl StochasticEvent {
    pub fn new(time: f64, chosen: impl Into<String>) -> Self {
        Self {
            time,
            chosen: chosen.into(),
            applied_rules: vec![Rule::Trigger],
            reduced: false,
        }
    }
}

/// Components differ in environment class.
pub fn locally_incoherent(a: &Component, b: &Component) -> bool {
    a.env != b.env
}

/// Drops every edge whose source and target both hold a ready state of
/// the same observer.
pub fn rule4_filter(g: &FlowGraph, s: &Superposition) -> FlowGraph {
    let edges = g
        .edges
        .iter()
        .filter(|e| !ready_to_ready(&s.components[e.source], &s.components[e.target]))
        .cloned()
        .collect();
    FlowGraph::new(edges)
}

fn ready_to_ready(src: &Component, dst: &Component) -> bool {
    src.ready_observers()
        .any(|o| dst.brain(o).is_some_and(|b| b.kind == BrainKind::Ready))
}

/// The graph the trigger sees under `rules` for the current labels.
pub fn effective_graph(g: &FlowGraph, s: &Superposition, rules: &RuleSet) -> FlowGraph {
    if rules.rule4 {
        rule4_filter(g, s)
    } else {
        g.clone()
    }
}

/// A new physiological branch of `parent`: same particle and detector,
/// the observer's brain READY, zero weight.
pub fn rule2_create(
    parent: &Component,
    observer: &str,
    id: impl Into<String>,
    brain_name: impl Into<String>,
    env: Option<String>,
) -> Component {
    let mut c = parent.clone();
    c.id = id.into();
    c.weight = 0.0;
    c.alive = true;
    c.set_brain(BrainLabel::new(observer, brain_name, BrainKind::Ready));
    if let Some(env) = env {
        c.env = env;
    }
    c
}

fn chosen_index(s: &Superposition, e: &StochasticEvent) -> Result<usize, RuleError> {
    s.index_of(&e.chosen)
        .ok_or_else(|| RuleError::State(StateError::DeadComponent(e.chosen.clone())))
}

fn make_conscious(c: &mut Component) {
    for b in c.brains.iter_mut().filter(|b| b.kind == BrainKind::Ready) {
        b.kind = BrainKind::Conscious;
    }
}

/// Rule 3: the chosen ready brain becomes conscious and every other
/// component is zeroed.
pub fn apply_rule3(s: &Superposition, e: &StochasticEvent) -> Result<Superposition, RuleError> {
    let i = chosen_index(s, e)?;
    if !s.components[i].has_ready() {
        return Err(RuleError::NoReadyBrain(e.chosen.clone()));
    }
    let mut next = s.zero_others(i)?;
    make_conscious(&mut next.components[i]);
    Ok(next)
}

/// Rule 3mod: ready becomes conscious; no weight changes.
pub fn apply_rule3mod(s: &Superposition, e: &StochasticEvent) -> Result<Superposition, RuleError> {
    let i = chosen_index(s, e)?;
    if !s.components[i].has_ready() {
        return Err(RuleError::NoReadyBrain(e.chosen.clone()));
    }
    let mut next = s.clone();
    make_conscious(&mut next.components[i]);
    Ok(next)
}

/// Rule 1a: zero every occupied component locally incoherent with the
/// chosen one and renormalize. Returns the zeroed indices.
pub fn apply_rule1a(
    s: &Superposition,
    e: &StochasticEvent,
) -> Result<(Superposition, Vec<usize>), RuleError> {
    rule1a_with(s, e, false)
}

fn rule1a_with(
    s: &Superposition,
    e: &StochasticEvent,
    ignore_coherence: bool,
) -> Result<(Superposition, Vec<usize>), RuleError> {
    let i = chosen_index(s, e)?;
    let chosen = &s.components[i];
    if !chosen.alive {
        return Err(StateError::DeadComponent(chosen.id.clone()).into());
    }
    let zeroed: Vec<usize> = s
        .occupied()
        .filter(|&(j, c)| j != i && (ignore_coherence || locally_incoherent(chosen, c)))
        .map(|(j, _)| j)
        .collect();
    if zeroed.is_empty() {
        return Ok((s.clone(), zeroed));
    }
    Ok((s.zero_and_renormalize(&zeroed), zeroed))
}

/// One observer's new conscious state, as the observer would report it.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Acquisition {
    pub observer: String,
    pub brain: String,
    pub particle: String,
    pub detector: String,
}

/// Applies the active regime to a hit on `index` at `time`.
pub fn apply_hit(
    s: &Superposition,
    index: usize,
    time: f64,
    rules: &RuleSet,
) -> Result<(Superposition, StochasticEvent, Vec<Acquisition>), RuleError> {
    let c = s.get(index)?;
    let mut event = StochasticEvent::new(time, c.id.clone());
    let acquisitions: Vec<Acquisition> = c
        .brains
        .iter()
        .filter(|b| b.kind == BrainKind::Ready)
        .map(|b| Acquisition {
            observer: b.observer.clone(),
            brain: b.name.clone(),
            particle: c.particle.clone(),
            detector: c.detector.clone(),
        })
        .collect();
    let next = match rules.regime {
        Regime::Observer => {
            if c.has_ready() {
                event.applied_rules.push(Rule::ObserverReduction);
                event.reduced = true;
                apply_rule3(s, &event)?
            } else {
                s.clone()
            }
        }
        Regime::Objective => {
            let (mut next, zeroed) = rule1a_with(s, &event, rules.coherent_1a)?;
            if !zeroed.is_empty() {
                event.applied_rules.push(Rule::ObjectiveReduction);
                event.reduced = true;
            }
            if c.has_ready() {
                event.applied_rules.push(Rule::ConsciousOnly);
                next = apply_rule3mod(&next, &event)?;
            }
            next
        }
    };
    Ok((next, event, acquisitions))
}

/// Alive weight not held by absorbing components, evaluated at `t`.
pub fn unresolved_weight(s: &Superposition, g: &FlowGraph, t: f64, who: &Candidacy) -> f64 {
    s.components
        .iter()
        .enumerate()
        .filter(|(i, c)| c.alive && !absorbing(s, g, *i, t, who))
        .map(|(_, c)| c.weight)
        .sum()
}

/// A component that can be chosen and will never pass weight on again.
pub fn absorbing(s: &Superposition, g: &FlowGraph, i: usize, t: f64, who: &Candidacy) -> bool {
    who.is_candidate(s, i) && !g.sends_after(s, i, t)
}

/// Instantaneous hit rate for component `index`, every receiving
/// component counting as selectable.
pub fn hazard(s: &Superposition, g: &FlowGraph, index: usize, t: f64) -> f64 {
    hazard_for(s, g, index, t, &Candidacy::Any)
}

pub fn hazard_for(s: &Superposition, g: &FlowGraph, index: usize, t: f64, who: &Candidacy) -> f64 {
    if !absorbing(s, g, index, t, who) {
        return 0.0;
    }
    let j = g.inflow(s, index, t);
    if j <= 0.0 {
        return 0.0;
    }
    let u = unresolved_weight(s, g, t, who);
    if u <= 0.0 {
        f64::INFINITY
    } else {
        j / u
    }
}

/// Step length used to march through unbounded windows.
const OPEN_STEP: f64 = 1.0;
const BISECT_ITERS: usize = 48;

/// First hit of the trigger after `s.time` and before `until`, sampled
/// in continuous time. Returns the state at the hit (or at `until`) and
/// the chosen component with its time.
pub fn next_hit<R: Rng + ?Sized>(
    s: &Superposition,
    g: &FlowGraph,
    until: f64,
    who: &Candidacy,
    rng: &mut R,
) -> (Superposition, Option<(f64, usize)>) {
    let threshold = -(1.0 - rng.random::<f64>()).ln();
    let mut spent = 0.0;
    let mut cur = s.clone();
    let last_edge_end = g
        .edges
        .iter()
        .map(|e| e.window.end)
        .fold(f64::NEG_INFINITY, f64::max);
    let stop = until.min(last_edge_end);
    let cuts = g.breakpoints();
    while cur.time < stop {
        let a = cur.time;
        let mut b = cuts.iter().copied().find(|&c| c > a).unwrap_or(stop).min(stop);
        if !b.is_finite() {
            b = a + OPEN_STEP;
        }
        let probe = 0.5 * (a + b);
        let held: Vec<bool> = (0..cur.components.len())
            .map(|i| cur.components[i].alive && !absorbing(&cur, g, i, probe, who))
            .collect();
        let unresolved = |w: &[f64]| -> f64 {
            w.iter().zip(&held).filter(|(_, h)| **h).map(|(w, _)| w).sum()
        };
        let u_a = unresolved(&cur.components.iter().map(|c| c.weight).collect::<Vec<_>>());
        let gain = log_ratio(u_a, unresolved(&cur.weights_at(g, b)));
        if spent + gain < threshold {
            spent += gain;
            cur = cur.evolve_to(g, b);
            continue;
        }
        let need = threshold - spent;
        let (mut lo, mut hi) = (a, b);
        for _ in 0..BISECT_ITERS {
            let mid = 0.5 * (lo + hi);
            if log_ratio(u_a, unresolved(&cur.weights_at(g, mid))) < need {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let t_hit = hi;
        let at = cur.evolve_to(g, t_hit);
        let pick = pick_target(&cur, &at, g, t_hit, probe, who, rng);
        return match pick {
            Some(i) => (at, Some((t_hit, i))),
            None => (at, None),
        };
    }
    let end = if until.is_finite() { cur.evolve_to(g, until) } else { cur };
    (end, None)
}

fn log_ratio(u_a: f64, u_b: f64) -> f64 {
    if u_a <= 0.0 {
        return 0.0;
    }
    if u_b <= 0.0 {
        return f64::INFINITY;
    }
    (u_a / u_b).ln().max(0.0)
}

fn pick_target<R: Rng + ?Sized>(
    before: &Superposition,
    at: &Superposition,
    g: &FlowGraph,
    t: f64,
    probe: f64,
    who: &Candidacy,
    rng: &mut R,
) -> Option<usize> {
    let absorbers: Vec<usize> = (0..at.components.len())
        .filter(|&i| absorbing(before, g, i, probe, who))
        .collect();
    let mut weights: Vec<f64> = absorbers.iter().map(|&i| g.inflow(at, i, t)).collect();
    if weights.iter().all(|w| *w <= 0.0 || !w.is_finite()) {
        weights = absorbers
            .iter()
            .map(|&i| (at.components[i].weight - before.components[i].weight).max(0.0))
            .collect();
    }
    let total: f64 = weights.iter().sum();
    if !(total > 0.0) {
        return None;
    }
    let mut x = rng.random::<f64>() * total;
    for (i, w) in absorbers.iter().zip(&weights) {
        if x < *w {
            return Some(*i);
        }
        x -= w;
    }
    absorbers.last().copied()
}

/// Window-bounded hit sampling with every receiving component
/// selectable, seeded for reproducibility.
pub fn sample_hit(
    s: &Superposition,
    g: &FlowGraph,
    window: (f64, f64),
    rng_seed: u64,
) -> Option<StochasticEvent> {
    use rand::SeedableRng;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(rng_seed);
    let mut start = s.evolve_to(g, window.0);
    start.time = start.time.max(window.0);
    let (at, hit) = next_hit(&start, g, window.1, &Candidacy::Any, &mut rng);
    hit.map(|(t, i)| StochasticEvent::new(t, at.components[i].id.clone()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::state::{FlowEdge, RateProfile, Window};

    fn eq1() -> (Superposition, FlowGraph) {
        let s = Superposition::new(
            vec![
                Component::new("c1", 1.0)
                    .with_particle("psi")
                    .with_detector("D_0")
                    .with_env("e1"),
                Component::new("c2", 0.0).with_detector("D_1").with_env("e2"),
            ],
            0.0,
        );
        let g = FlowGraph::new(vec![FlowEdge::new(
            0,
            1,
            RateProfile::ramp(1.0),
            Window::new(0.0, 1.0),
        )]);
        (s, g)
    }

    #[test]
    fn hazard_zero_without_inbound() {
        let (s, g) = eq1();
        assert_eq!(hazard(&s, &g, 0, 0.5), 0.0);
    }

    #[test]
    fn hazard_constant_edge() {
        let (s, _) = eq1();
        let g = FlowGraph::new(vec![FlowEdge::new(
            0,
            1,
            RateProfile::Constant { rate: 0.25 },
            Window::new(0.0, 4.0),
        )]);
        assert!((hazard(&s, &g, 1, 1.0) - 0.25).abs() < 1e-15);
        assert_eq!(hazard(&s, &g, 1, 5.0), 0.0);
    }

    #[test]
    fn rule_ids_serialize_as_strings() {
        let json = serde_json::to_string(&RuleSet::objective().active_rules()).unwrap();
        assert_eq!(json, r#"["1","1a","2","3mod","4"]"#);
        let json = serde_json::to_string(&RuleSet::observer().active_rules()).unwrap();
        assert_eq!(json, r#"["1","2","3","4"]"#);
    }

    #[test]
    fn incoherence_is_env_inequality() {
        let (s, _) = eq1();
        let a = &s.components[0];
        assert!(!locally_incoherent(a, a));
        assert!(locally_incoherent(a, &s.components[1]));
        let twin = a.clone().with_env("e1");
        assert!(!locally_incoherent(a, &twin));
    }

    #[test]
    fn rule1a_on_eq1_leaves_d1() {
        let (s, g) = eq1();
        let mid = s.evolve_to(&g, 0.5);
        let (after, zeroed) = apply_rule1a(&mid, &StochasticEvent::new(0.5, "c2")).unwrap();
        assert_eq!(zeroed, vec![0]);
        assert_eq!(after.components[1].weight, 1.0);
        assert!(!after.components[0].alive);
    }

    #[test]
    fn rule1a_partial_coherence_renormalizes() {
        let s = Superposition::new(
            vec![
                Component::new("a", 0.2).with_env("x"),
                Component::new("b", 0.3).with_env("x"),
                Component::new("c", 0.5).with_env("y"),
            ],
            0.0,
        );
        let (after, zeroed) = apply_rule1a(&s, &StochasticEvent::new(0.0, "a")).unwrap();
        assert_eq!(zeroed, vec![2]);
        assert!((after.components[0].weight - 0.4).abs() < 1e-15);
        assert!((after.components[1].weight - 0.6).abs() < 1e-15);
        assert!((after.total_weight() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn rule1a_coherent_branches_untouched() {
        let s = Superposition::new(
            vec![
                Component::new("up", 0.5).with_detector("D_10").with_env("shared"),
                Component::new("down", 0.5).with_detector("D_10").with_env("shared"),
            ],
            0.0,
        );
        let (after, zeroed) = apply_rule1a(&s, &StochasticEvent::new(0.0, "up")).unwrap();
        assert!(zeroed.is_empty());
        assert_eq!(after, s);
    }

    #[test]
    fn rule3_requires_ready() {
        let (s, _) = eq1();
        assert_eq!(
            apply_rule3(&s, &StochasticEvent::new(0.0, "c2")),
            Err(RuleError::NoReadyBrain("c2".into()))
        );
        assert!(apply_rule3mod(&s, &StochasticEvent::new(0.0, "c1")).is_err());
    }

    #[test]
    fn rule3_single_ready_component() {
        let s = Superposition::new(
            vec![Component::new("only", 1.0).with_brain(BrainLabel::new("ob", "B_1", BrainKind::Ready))],
            0.0,
        );
        let r = apply_rule3(&s, &StochasticEvent::new(0.0, "only")).unwrap();
        assert_eq!(r.components[0].weight, 1.0);
        assert_eq!(r.components[0].brains[0].kind, BrainKind::Conscious);
    }

    #[test]
    fn rule3mod_keeps_weights() {
        let s = Superposition::new(
            vec![
                Component::new("a", 0.5).with_brain(BrainLabel::new("ob", "B_0", BrainKind::Ready)),
                Component::new("b", 0.5),
            ],
            0.0,
        );
        let r = apply_rule3mod(&s, &StochasticEvent::new(0.0, "a")).unwrap();
        assert_eq!(r.components[0].weight, 0.5);
        assert_eq!(r.components[1].weight, 0.5);
        assert_eq!(r.components[0].brains[0].kind, BrainKind::Conscious);
    }

    #[test]
    fn rule2_makes_ready_from_unknown() {
        let parent = Component::new("p", 0.4)
            .with_detector("D_1")
            .with_brain(BrainLabel::new("ob", "X", BrainKind::UnknownX));
        let c = rule2_create(&parent, "ob", "p'", "B_1", Some("e9".into()));
        assert_eq!(c.weight, 0.0);
        assert_eq!(c.brain("ob").unwrap().kind, BrainKind::Ready);
        assert_eq!(c.brains.len(), 1);
        assert_eq!(c.env, "e9");
        assert_eq!(c.detector, "D_1");
    }

    #[test]
    fn rule4_only_same_observer() {
        let ready = |o: &str, n: &str| BrainLabel::new(o, n, BrainKind::Ready);
        let s = Superposition::new(
            vec![
                Component::new("a", 1.0).with_brain(ready("k1", "B_0")),
                Component::new("b", 0.0).with_brain(ready("k1", "B_1")),
                Component::new("c", 0.0).with_brain(ready("k2", "C_1")),
            ],
            0.0,
        );
        let w = Window::new(0.0, 1.0);
        let g = FlowGraph::new(vec![
            FlowEdge::new(0, 1, RateProfile::ramp(0.5), w),
            FlowEdge::new(0, 2, RateProfile::ramp(0.5), w),
        ]);
        let f = rule4_filter(&g, &s);
        assert_eq!(f.edges.len(), 1);
        assert_eq!(f.edges[0].target, 2);
        let (plain, pg) = eq1();
        assert_eq!(rule4_filter(&pg, &plain), pg);
    }

    #[test]
    fn sample_hit_none_without_current() {
        let (s, _) = eq1();
        assert!(sample_hit(&s, &FlowGraph::default(), (0.0, 10.0), 3).is_none());
    }

    #[test]
    fn sample_hit_eq1_lands_on_d1() {
        let (s, g) = eq1();
        for seed in 0..200 {
            let e = sample_hit(&s, &g, (0.0, 1.0), seed).expect("full transfer forces a hit");
            assert_eq!(e.chosen, "c2");
            assert!(e.time > 0.0 && e.time <= 1.0);
        }
        assert_eq!(sample_hit(&s, &g, (0.0, 1.0), 9), sample_hit(&s, &g, (0.0, 1.0), 9));
    }

    #[test]
    fn ramp_hit_time_is_uniform() {
        // Full linear ramp: survival U(t) = 1 - t, so hit times are U(0,1).
        let (s, g) = eq1();
        let n = 4000;
        let mean: f64 = (0..n)
            .map(|k| sample_hit(&s, &g, (0.0, 1.0), k).unwrap().time)
            .sum::<f64>()
            / n as f64;
        assert!((mean - 0.5).abs() < 0.02, "{mean}");
    }
}
