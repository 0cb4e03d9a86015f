use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rulesim::harness::{compare, enumerate_outcomes, enumerate_with, run_trials, CompareMode, EnumerateOptions};
use rulesim::rules::{next_hit, Candidacy};
use rulesim::scenario::{builtin, CATALOG};
use rulesim::state::{Component, FlowEdge, FlowGraph, RateProfile, Superposition, Window};
use rulesim::RuleSet;

#[test]
fn eq5_split_within_three_sigma() {
    let s = builtin("eq5-terminal-observer").unwrap();
    let n = 100_000;
    let mc = run_trials(&s, RuleSet::observer(), n, 5).unwrap();
    let exact = enumerate_outcomes(&s, RuleSet::observer(), 64).unwrap();
    // The declared weights are the Born weights of the two records.
    for (tag, p) in [("B_0!", 0.3), ("B_1!", 0.7)] {
        let pick = |r: &rulesim::ObservableRecord| r.final_labels.iter().any(|l| l.ends_with(tag));
        let e = exact.mass(pick);
        assert!((e - p).abs() < 1e-12, "{tag}: exact {e}");
        let sigma = (p * (1.0 - p) / n as f64).sqrt();
        let m = mc.mass(pick);
        assert!((m - p).abs() < 3.0 * sigma, "{tag}: {m} vs {p}");
    }
}

#[test]
fn drift_weights_follow_ramp_fractions() {
    let s = builtin("drift-consciousness").unwrap();
    for rules in [RuleSet::observer(), RuleSet::objective()] {
        let d = enumerate_outcomes(&s, rules, 32).unwrap();
        for (tag, p) in [("B_a!", 0.2), ("B_b!", 0.3), ("B_c!", 0.5)] {
            let got = d.mass(|r| r.final_labels.iter().any(|l| l.ends_with(tag)));
            assert!((got - p).abs() < 1e-12, "{tag}: {got}");
        }
    }
}

#[test]
fn single_trial_is_point_mass() {
    let d = run_trials(&builtin("eq1-detector").unwrap(), RuleSet::objective(), 1, 0).unwrap();
    assert_eq!(d.len(), 1);
    assert_eq!(d.total(), 1.0);
}

#[test]
fn trials_deterministic_across_thread_counts() {
    let s = builtin("intermediate-outside-observer").unwrap();
    let run = |threads| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| run_trials(&s, RuleSet::objective(), 3000, 11).unwrap())
    };
    let one = run(1);
    assert_eq!(one, run(4));
    assert_eq!(one, run_trials(&s, RuleSet::objective(), 3000, 11).unwrap());
    assert_ne!(one, run_trials(&s, RuleSet::objective(), 3000, 12).unwrap());
}

#[test]
fn richardson_bound_on_catalog() {
    for name in CATALOG {
        let s = builtin(name).unwrap();
        for rules in [RuleSet::observer(), RuleSet::objective()] {
            let k = enumerate_outcomes(&s, rules, 16).unwrap();
            let k2 = enumerate_outcomes(&s, rules, 32).unwrap();
            let tvd = compare(&k, &k2, CompareMode::Exact).unwrap().total_variation;
            assert!(tvd < 1e-9, "{name}: {tvd}");
        }
    }
}

#[test]
fn branch_cap_reports_explosion() {
    let s = builtin("cat-v2-outside").unwrap();
    let opts = EnumerateOptions {
        slices: 16,
        branch_cap: 10,
        ..Default::default()
    };
    assert!(matches!(
        enumerate_with(&s, RuleSet::observer(), &opts),
        Err(rulesim::harness::HarnessError::StateExplosion { cap: 10 })
    ));
}

#[test]
fn constant_hazard_mean_hit_time() {
    let rate = 0.25;
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
        RateProfile::Constant { rate },
        Window::new(0.0, f64::INFINITY),
    )]);
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let n = 20_000;
    let mean: f64 = (0..n)
        .map(|_| next_hit(&state, &g, f64::INFINITY, &Candidacy::Any, &mut rng).1.unwrap().0)
        .sum::<f64>()
        / n as f64;
    // Exponential with rate 1/4: mean 4, standard error 4 / sqrt(n).
    assert!((mean - 4.0).abs() < 4.0 * 4.0 / (n as f64).sqrt(), "{mean}");
}

#[test]
fn regimes_agree_in_mc_mode() {
    let s = builtin("cat-v2-outside").unwrap();
    let a = run_trials(&s, RuleSet::observer(), 20_000, 1).unwrap();
    let b = run_trials(&s, RuleSet::objective(), 20_000, 2).unwrap();
    let v = compare(&a, &b, CompareMode::Mc).unwrap();
    assert!(v.equal, "{v:?}");
}

#[test]
fn rule4_mutant_detected_in_mc_mode() {
    let s = builtin("outside-terminal-observer").unwrap();
    let a = run_trials(&s, RuleSet::observer(), 5_000, 1).unwrap();
    let b = run_trials(&s, RuleSet::objective().without_rule4(), 5_000, 2).unwrap();
    let v = compare(&a, &b, CompareMode::Mc).unwrap();
    assert!(!v.equal && v.total_variation > 0.1, "{v:?}");
}
