//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any fails.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rulesim::harness::{compare, enumerate_outcomes, run_trials, CompareMode, ObservableRecord};
use rulesim::nondemolition::{self, DetectorPrep, Event};
use rulesim::rules::{apply_hit, effective_graph, next_hit, Candidacy};
use rulesim::scenario::{builtin, builtin_source, parse, CATALOG};
use rulesim::state::{Component, FlowEdge, FlowGraph, RateProfile, Superposition, Window};
use rulesim::RuleSet;
use std::panic;
use std::process::ExitCode;
use std::time::Instant;

const SLICES: usize = 64;

struct Outcome {
    pass: bool,
    detail: String,
}

fn check(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn has_final(r: &ObservableRecord, label: &str) -> bool {
    r.final_labels == [label.to_string()]
}

fn indistinguishability() -> Outcome {
    let t = Instant::now();
    let mut worst = (0.0f64, "");
    for name in CATALOG {
        let s = builtin(name).unwrap();
        let a = enumerate_outcomes(&s, RuleSet::observer(), SLICES).unwrap();
        let b = enumerate_outcomes(&s, RuleSet::objective(), SLICES).unwrap();
        let v = compare(&a, &b, CompareMode::Exact).unwrap();
        if v.total_variation >= worst.0 {
            worst = (v.total_variation, name);
        }
    }
    let secs = t.elapsed().as_secs_f64();
    check(
        worst.0 <= 1e-9 && secs < 60.0,
        format!(
            "max TVD {:.2e} ({}) over {} scenarios in {secs:.1} s",
            worst.0,
            worst.1,
            CATALOG.len()
        ),
    )
}

fn eq1_reduction() -> Outcome {
    let d = enumerate_outcomes(&builtin("eq1-detector").unwrap(), RuleSet::objective(), SLICES).unwrap();
    let p = d.mass(|r| has_final(r, "-|D_1") && r.acquisitions.is_empty());
    check((p - 1.0).abs() <= 1e-12, format!("P(record D_1) = {p:.15}"))
}

fn eq3_to_eq4() -> Outcome {
    let d = enumerate_outcomes(
        &builtin("eq3-entangled-observer").unwrap(),
        RuleSet::observer(),
        SLICES,
    )
    .unwrap();
    let p = d.mass(|r| {
        has_final(r, "-|D_1|ob:B_1!") && r.acquisitions.get("ob") == Some(&vec!["-|D_1|B_1".into()])
    });
    check((p - 1.0).abs() <= 1e-12, format!("P(conscious B_1 with D_1) = {p:.15}"))
}

fn rule4_exclusion() -> Outcome {
    let s = builtin("outside-terminal-observer").unwrap();
    // Capture by D_1 chosen while the observer is still ready in B_0.
    let anomalous = |r: &ObservableRecord| {
        r.acquisitions
            .get("ob")
            .and_then(|seq| seq.first())
            .is_some_and(|first| first.ends_with("|B_1"))
    };
    let obs = enumerate_outcomes(&s, RuleSet::observer(), SLICES).unwrap().mass(anomalous);
    let obj = enumerate_outcomes(&s, RuleSet::objective(), SLICES).unwrap().mass(anomalous);
    let mutant = enumerate_outcomes(&s, RuleSet::objective().without_rule4(), SLICES)
        .unwrap()
        .mass(anomalous);
    let witness = compare(
        &enumerate_outcomes(&s, RuleSet::observer(), SLICES).unwrap(),
        &enumerate_outcomes(&s, RuleSet::objective().without_rule4(), SLICES).unwrap(),
        CompareMode::Exact,
    )
    .unwrap();
    check(
        obs == 0.0 && obj == 0.0 && mutant > 0.0 && witness.total_variation > 0.1,
        format!(
            "anomalous P observer {obs}, objective {obj}, rule-4-off mutant {mutant:.4} (TVD {:.4})",
            witness.total_variation
        ),
    )
}

fn nondemolition_suite() -> Outcome {
    let prep = DetectorPrep::default();
    let mut worst_fid = 0.0f64;
    for rules in [RuleSet::observer(), RuleSet::objective()] {
        for (p, s) in nondemolition::final_branches(&rules, prep).unwrap() {
            worst_fid = worst_fid.max(p * (1.0 - s.fidelity_with_singlet_d11()).abs());
        }
    }
    let table = nondemolition::eligibility_table(prep).unwrap();
    let expected = [(Event::O, true), (Event::A, false), (Event::B, false), (Event::P, true)];
    let table_ok = table.iter().map(|(e, b)| (*e, *b)).collect::<Vec<_>>() == expected;
    let mut s = nondemolition::prepare(prep).unwrap();
    s = nondemolition::apply_event(&s, Event::O).unwrap();
    s = nondemolition::apply_event(&s, Event::A).unwrap();
    let td = s.branch_trace_distance();
    let mutant = nondemolition::nondemolition_distribution(&RuleSet::objective().with_coherent_1a(), prep)
        .unwrap();
    let plain = nondemolition::nondemolition_distribution(&RuleSet::observer(), prep).unwrap();
    let witness = compare(&plain, &mutant, CompareMode::Exact).unwrap().total_variation;
    let fmt_table: Vec<String> = table
        .iter()
        .map(|(e, b)| format!("{e}:{}", if *b { "yes" } else { "no" }))
        .collect();
    check(
        worst_fid <= 1e-12 && table_ok && td <= 1e-12,
        format!(
            "1 - fidelity {worst_fid:.1e}; eligible {{{}}}; trace distance at A {td:.1e}; coherent-1a mutant TVD {witness:.2}",
            fmt_table.join(", ")
        ),
    )
}

fn trigger_law() -> Outcome {
    let n = 100_000;
    let state = Superposition::new(
        vec![
            Component::new("a", 1.0).with_env("e0"),
            Component::new("b", 0.0).with_env("e1"),
        ],
        0.0,
    );
    let g = FlowGraph::new(vec![FlowEdge::new(
        0,
        1,
        RateProfile::Constant { rate: 1.0 },
        Window::new(0.0, f64::INFINITY),
    )]);
    let mut rng = ChaCha8Rng::seed_from_u64(20);
    let mut times: Vec<f64> = (0..n)
        .map(|_| {
            next_hit(&state, &g, f64::INFINITY, &Candidacy::Any, &mut rng)
                .1
                .expect("constant current always hits")
                .0
        })
        .collect();
    times.sort_by(f64::total_cmp);
    let ks = times
        .iter()
        .enumerate()
        .map(|(i, &t)| {
            let f = 1.0 - (-t).exp();
            (f - i as f64 / n as f64).max((i + 1) as f64 / n as f64 - f)
        })
        .fold(0.0, f64::max);
    check(ks < 0.01, format!("KS distance to Exp(1) {ks:.5} at n = {n}"))
}

fn conservation() -> Outcome {
    let mut worst = 0.0f64;
    let mut runs = 0;
    for name in CATALOG {
        let s = builtin(name).unwrap();
        let graph = s.flow_graph();
        for rules in [RuleSet::observer(), RuleSet::objective()] {
            let who = Candidacy::Rules(rules);
            for seed in 0..200 {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let mut state = s.initial_state();
                worst = worst.max((state.total_weight() - 1.0).abs());
                loop {
                    let eff = effective_graph(&graph, &state, &rules);
                    let (at, hit) = next_hit(&state, &eff, s.horizon(), &who, &mut rng);
                    worst = worst.max((at.total_weight() - 1.0).abs());
                    let Some((t, i)) = hit else { break };
                    state = apply_hit(&at, i, t, &rules).unwrap().0;
                    worst = worst.max((state.total_weight() - 1.0).abs());
                }
                runs += 1;
            }
        }
    }
    let mut norm_worst = 0.0f64;
    let mut s = nondemolition::prepare(DetectorPrep::default()).unwrap();
    for e in Event::SEQUENCE {
        s = nondemolition::apply_event(&s, e).unwrap();
        norm_worst = norm_worst.max((s.norm() - 1.0).abs());
    }
    check(
        worst <= 1e-9 && norm_worst <= 1e-12,
        format!("max |total weight - 1| {worst:.1e} over {runs} runs; max 2-norm drift {norm_worst:.1e}"),
    )
}

fn oracle_agreement() -> Outcome {
    let n = 100_000;
    let mut worst = (0.0f64, String::new());
    for name in CATALOG {
        let s = builtin(name).unwrap();
        for rules in [RuleSet::observer(), RuleSet::objective()] {
            let exact = enumerate_outcomes(&s, rules, SLICES).unwrap();
            let mc = run_trials(&s, rules, n, 1).unwrap();
            let tvd = compare(&mc, &exact, CompareMode::Exact).unwrap().total_variation;
            if tvd >= worst.0 {
                worst = (tvd, format!("{name}/{}", rules.regime));
            }
        }
    }
    check(
        worst.0 < 5e-3,
        format!("max TVD {:.2e} ({}) at n = {n}", worst.0, worst.1),
    )
}

fn mutate(src: &[u8], rng: &mut ChaCha8Rng) -> Vec<u8> {
    let mut out = src.to_vec();
    for _ in 0..rng.random_range(1..8) {
        if out.is_empty() {
            out.push(rng.random());
            continue;
        }
        let at = rng.random_range(0..out.len());
        match rng.random_range(0..4) {
            0 => {
                out.remove(at);
            }
            1 => out.insert(at, rng.random()),
            2 => out[at] = rng.random(),
            _ => {
                let end = (at + rng.random_range(1..20)).min(out.len());
                let chunk: Vec<u8> = out[at..end].to_vec();
                let dest = rng.random_range(0..out.len());
                out.splice(dest..dest, chunk);
            }
        }
    }
    out
}

fn parser_robustness() -> Outcome {
    let cases = 100_000;
    let sources: Vec<&str> = CATALOG.iter().map(|n| builtin_source(n).unwrap()).collect();
    let words = [
        "scenario", "observer", "component", "weight", "particle", "detector", "env", "brain",
        "interaction", "from", "to", "flow", "->", "ramp", "constant", "end", "inf", "ready",
        "unknown", "conscious", "absent", "physiological", "particle_detector", "-1", "0.5", "1e400",
        "NaN", "\n", "#", "ob", "x",
    ];
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let prev = panic::take_hook();
    panic::set_hook(Box::new(|_| {}));
    let mut crashes = 0;
    let mut accepted = 0;
    for k in 0..cases {
        let input: Vec<u8> = match k % 3 {
            0 => (0..rng.random_range(0..200)).map(|_| rng.random()).collect(),
            1 => (0..rng.random_range(0..60))
                .map(|_| words[rng.random_range(0..words.len())])
                .collect::<Vec<_>>()
                .join(" ")
                .into_bytes(),
            _ => mutate(sources[rng.random_range(0..sources.len())].as_bytes(), &mut rng),
        };
        let text = String::from_utf8_lossy(&input).into_owned();
        match panic::catch_unwind(|| parse(&text).is_ok()) {
            Ok(true) => accepted += 1,
            Ok(false) => {}
            Err(_) => crashes += 1,
        }
    }
    panic::set_hook(prev);
    let round_trip = CATALOG.iter().all(|n| {
        let s = builtin(n).unwrap();
        parse(&s.format()).is_ok_and(|t| t == s)
    });
    check(
        crashes == 0 && round_trip,
        format!(
            "{crashes} crashes in {cases} cases ({accepted} parsed); catalog round trip {}",
            if round_trip { "holds" } else { "broken" }
        ),
    )
}

fn main() -> ExitCode {
    let criteria: [(&str, fn() -> Outcome); 9] = [
        ("indistinguishability", indistinguishability),
        ("eq1 reduction", eq1_reduction),
        ("eq3 to eq4", eq3_to_eq4),
        ("rule 4 exclusion", rule4_exclusion),
        ("nondemolition", nondemolition_suite),
        ("trigger law", trigger_law),
        ("conservation", conservation),
        ("oracle agreement", oracle_agreement),
        ("parser robustness", parser_robustness),
    ];
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let t = Instant::now();
        let o = run();
        if !o.pass {
            failed += 1;
        }
        println!(
            "[{}] {} {name}: {} ({:.1} s)",
            if o.pass { "PASS" } else { "FAIL" },
            i + 1,
            o.detail,
            t.elapsed().as_secs_f64()
        );
    }
    println!("acceptance: {} of {} criteria pass", criteria.len() - failed, criteria.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
