use super::{HarnessError, OutcomeDistribution, Run};
use crate::rules::{absorbing, effective_graph, unresolved_weight, Candidacy, RuleSet};
use crate::scenario::Scenario;
use std::collections::hash_map::Entry;
use std::collections::{BTreeMap, HashMap};

#[derive(Debug, Clone, Copy)]
pub struct EnumerateOptions {
    /// Slices per segment between consecutive window boundaries.
    pub slices: usize,
    pub branch_cap: usize,
    /// Branches lighter than this are dropped and the result renormalized.
    pub prune_below: f64,
}

impl Default for EnumerateOptions {
    fn default() -> Self {
        Self {
            slices: 64,
            branch_cap: 10_000_000,
            prune_below: 1e-12,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Enumeration {
    pub distribution: OutcomeDistribution,
    pub pruned_mass: f64,
    pub branches: usize,
}

/// Exact outcome distribution up to time discretization: every slice
/// branches into "no hit" and "hit on component c" for each component
/// that can be chosen, weighted by the slice's survival ratio.
pub fn enumerate_outcomes(
    s: &Scenario,
    rules: RuleSet,
    time_slices: usize,
) -> Result<OutcomeDistribution, HarnessError> {
    let opts = EnumerateOptions {
        slices: time_slices,
        ..Default::default()
    };
    Ok(enumerate_with(s, rules, &opts)?.distribution)
}

pub fn enumerate_with(
    s: &Scenario,
    rules: RuleSet,
    opts: &EnumerateOptions,
) -> Result<Enumeration, HarnessError> {
    if opts.slices == 0 {
        return Err(HarnessError::InvalidArgument("time_slices must be at least 1".into()));
    }
    let graph = s.flow_graph();
    let grid = time_grid(s, opts.slices);
    let who = Candidacy::Rules(rules);

    let mut pruned = 0.0;
    let mut branches = 0usize;
    let mut layer: Vec<(Run, f64)> = vec![(Run::new(s.initial_state()), 1.0)];

    for step in 0..grid.len() - 1 {
        let (a, b) = (grid[step], grid[step + 1]);
        let probe = 0.5 * (a + b);
        let mut next: Vec<(Run, f64)> = Vec::new();
        let mut seen: HashMap<String, usize> = HashMap::new();
        let mut push = |run: Run, p: f64, pruned: &mut f64| {
            if p < opts.prune_below {
                *pruned += p;
                return;
            }
            match seen.entry(branch_key(&run)) {
                Entry::Occupied(e) => next[*e.get()].1 += p,
                Entry::Vacant(e) => {
                    e.insert(next.len());
                    next.push((run, p));
                }
            }
        };
        for (run, prob) in layer {
            let eff = effective_graph(&graph, &run.state, &rules);
            let absorbers: Vec<usize> = (0..run.state.components.len())
                .filter(|&i| absorbing(&run.state, &eff, i, probe, &who))
                .collect();
            let u_a = unresolved_weight(&run.state, &eff, probe, &who);
            let end = run.state.evolve_to(&eff, b);
            let u_b = unresolved_weight(&end, &eff, probe, &who);

            let gains: Vec<f64> = absorbers
                .iter()
                .map(|&i| (end.components[i].weight - run.state.components[i].weight).max(0.0))
                .collect();
            let total_gain: f64 = gains.iter().sum();
            let p_hit = if u_a > 0.0 && total_gain > 0.0 {
                (1.0 - u_b / u_a).clamp(0.0, 1.0)
            } else {
                0.0
            };

            for (&i, g) in absorbers.iter().zip(&gains) {
                if *g > 0.0 {
                    let hit = run.hit(&end, i, b, &rules)?;
                    push(hit, prob * p_hit * g / total_gain, &mut pruned);
                }
            }
            let quiet = Run {
                state: end,
                acquisitions: run.acquisitions,
            };
            push(quiet, prob * (1.0 - p_hit), &mut pruned);
        }
        branches += next.len();
        if branches > opts.branch_cap {
            return Err(HarnessError::StateExplosion {
                cap: opts.branch_cap,
            });
        }
        layer = next;
    }

    let mut out: BTreeMap<_, f64> = BTreeMap::new();
    for (run, p) in layer {
        *out.entry(run.record()).or_default() += p;
    }
    let total: f64 = out.values().sum();
    if total > 0.0 {
        for p in out.values_mut() {
            *p /= total;
        }
    }
    Ok(Enumeration {
        distribution: OutcomeDistribution {
            probabilities: out,
            samples: None,
        },
        pruned_mass: pruned,
        branches,
    })
}

fn time_grid(s: &Scenario, slices: usize) -> Vec<f64> {
    let start = s.start_time();
    let horizon = s.horizon();
    let mut cuts: Vec<f64> = s
        .flow_graph()
        .breakpoints()
        .into_iter()
        .filter(|&t| t > start && t < horizon)
        .collect();
    cuts.insert(0, start);
    cuts.push(horizon);
    let mut grid = vec![start];
    for w in cuts.windows(2) {
        for k in 1..=slices {
            grid.push(if k == slices {
                w[1]
            } else {
                w[0] + (w[1] - w[0]) * k as f64 / slices as f64
            });
        }
    }
    grid
}

/// Branches with the same history and, to 1e-12, the same state are merged.
fn branch_key(run: &Run) -> String {
    let mut key = format!("{:?}|", run.acquisitions);
    for c in &run.state.components {
        let kinds: Vec<_> = c.brains.iter().map(|b| b.kind.keyword()).collect();
        key.push_str(&format!(
            "{}:{}:{:?}:{};",
            c.alive as u8,
            (c.weight * 1e12).round() as i64,
            kinds,
            c.env
        ));
    }
    key
}
