//! Simulation of stochastic state-reduction rules under two regimes: an
//! observer regime, where only a ready brain state being chosen reduces
//! the state, and an objective regime, where any locally incoherent
//! component being chosen does. The harness checks that what an observer
//! can record is distributed identically under both.

pub mod harness;
pub mod nondemolition;
pub mod rules;
pub mod scenario;
pub mod state;

pub use harness::{
    compare, enumerate_outcomes, run_trials, CompareMode, ComparisonVerdict, ObservableRecord,
    OutcomeDistribution,
};
pub use rules::{Regime, Rule, RuleSet};
pub use scenario::{builtin, parse, validate, Scenario};
pub use state::{BrainKind, BrainLabel, Component, FlowEdge, FlowGraph, Superposition};
