use super::{HarnessError, ObservableRecord, OutcomeDistribution, Run};
use crate::rules::{effective_graph, next_hit, Candidacy, RuleSet};
use crate::scenario::Scenario;
use crate::state::FlowGraph;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use std::collections::BTreeMap;

/// Per-trial seed: splitmix64 of the run seed and trial index.
pub fn trial_seed(seed: u64, trial: u64) -> u64 {
    let mut z = seed ^ trial.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn one_trial(
    s: &Scenario,
    graph: &FlowGraph,
    rules: &RuleSet,
    seed: u64,
) -> Result<ObservableRecord, HarnessError> {
    let horizon = s.horizon();
    let who = Candidacy::Rules(*rules);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut run = Run::new(s.initial_state());
    loop {
        let eff = effective_graph(graph, &run.state, rules);
        let (at, hit) = next_hit(&run.state, &eff, horizon, &who, &mut rng);
        match hit {
            Some((t, i)) => run = run.hit(&at, i, t, rules)?,
            None => {
                run.state = at;
                return Ok(run.record());
            }
        }
    }
}

/// `n` independent continuous-time runs. Deterministic in `(n, seed)`
/// regardless of thread count.
pub fn run_trials(
    s: &Scenario,
    rules: RuleSet,
    n: u64,
    seed: u64,
) -> Result<OutcomeDistribution, HarnessError> {
    if n == 0 {
        return Err(HarnessError::InvalidArgument("n must be at least 1".into()));
    }
    let graph = s.flow_graph();
    let counts = (0..n)
        .into_par_iter()
        .map(|k| one_trial(s, &graph, &rules, trial_seed(seed, k)).map(|r| BTreeMap::from([(r, 1u64)])))
        .try_reduce(BTreeMap::new, |mut a, b| {
            for (r, c) in b {
                *a.entry(r).or_insert(0) += c;
            }
            Ok(a)
        })?;
    Ok(OutcomeDistribution {
        probabilities: counts
            .into_iter()
            .map(|(r, c)| (r, c as f64 / n as f64))
            .collect(),
        samples: Some(n),
    })
}
