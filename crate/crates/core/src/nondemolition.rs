//! Amplitude-level model of a zero-spin particle pair measured by two
//! detectors whose internal variables were jointly prepared.
//!
//! Subsystems, in index order: spin 1, spin 2, detector register m1,
//! detector register m2, readout at O, readout at P. Each readout starts
//! blank and records the joined detector value m1 + m2 when its event runs.

use crate::harness::{ObservableRecord, OutcomeDistribution};
use crate::rules::{Regime, RuleSet};
use nalgebra::{Complex, DMatrix};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use std::collections::BTreeMap;
use std::fmt;
use thiserror::Error;

pub type C64 = Complex<f64>;

/// Overlap below which two local environment states count as orthogonal.
pub const ORTHOGONAL_EPS: f64 = 1e-9;

const UP: usize = 0;
const DOWN: usize = 1;
const BLANK: usize = 0;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum NondemolitionError {
    #[error("register of size {size} cannot hold a support of {support} around sum {sum}")]
    RegisterTooSmall { size: usize, support: usize, sum: i64 },
    #[error("shift moves register {register} to {value}, outside 0..{size}")]
    ShiftOutOfRange { register: usize, value: i64, size: usize },
    #[error("unknown event '{0}' (expected O, A, B or P)")]
    UnknownEvent(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub enum Event {
    O,
    A,
    B,
    P,
}

impl Event {
    pub const SEQUENCE: [Event; 4] = [Event::O, Event::A, Event::B, Event::P];

    /// Subsystem the event's interaction writes into.
    pub fn local_env(self) -> Subsystem {
        match self {
            Event::O => Subsystem::ReadoutO,
            Event::A => Subsystem::Detector1,
            Event::B => Subsystem::Detector2,
            Event::P => Subsystem::ReadoutP,
        }
    }

    /// Spin whose branches the event could separate.
    pub fn engaged_spin(self) -> Subsystem {
        match self {
            Event::B => Subsystem::Spin2,
            _ => Subsystem::Spin1,
        }
    }
}

impl fmt::Display for Event {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self:?}")
    }
}

impl std::str::FromStr for Event {
    type Err = NondemolitionError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "O" | "o" => Ok(Event::O),
            "A" | "a" => Ok(Event::A),
            "B" | "b" => Ok(Event::B),
            "P" | "p" => Ok(Event::P),
            other => Err(NondemolitionError::UnknownEvent(other.to_string())),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Subsystem {
    Spin1 = 0,
    Spin2 = 1,
    Detector1 = 2,
    Detector2 = 3,
    ReadoutO = 4,
    ReadoutP = 5,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct DetectorPrep {
    pub register_size: usize,
    /// Jointly prepared value of m1 + m2 (taken modulo the size on a ring).
    pub correlation_sum: i64,
    /// Number of admissible m1 values.
    pub support: usize,
    /// Registers wrap around. With full support the shifted detector state
    /// equals the prepared one, which is what lets the pair factorize again.
    pub ring: bool,
}

impl Default for DetectorPrep {
    fn default() -> Self {
        Self::ring(5, 0)
    }
}

impl DetectorPrep {
    pub fn ring(register_size: usize, correlation_sum: i64) -> Self {
        Self {
            register_size,
            correlation_sum,
            support: register_size,
            ring: true,
        }
    }

    /// Open registers, `support` values of m1 centred away from the edges.
    pub fn interior(register_size: usize, support: usize, correlation_sum: i64) -> Self {
        Self {
            register_size,
            correlation_sum,
            support,
            ring: false,
        }
    }

    fn first_m1(&self) -> usize {
        if self.ring {
            0
        } else {
            (self.register_size.saturating_sub(self.support)) / 2
        }
    }

    fn readout_size(&self) -> usize {
        2 * self.register_size
    }

    /// Value the joined detector variables show for given registers.
    fn joined(&self, m1: usize, m2: usize) -> usize {
        if self.ring {
            (m1 + m2) % self.register_size
        } else {
            m1 + m2
        }
    }

    /// The definite joined value the preparation fixes.
    pub fn definite_sum(&self) -> i64 {
        if self.ring {
            self.correlation_sum.rem_euclid(self.register_size as i64)
        } else {
            self.correlation_sum
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpinPairState {
    pub prep: DetectorPrep,
    pub amplitudes: Vec<C64>,
}

impl SpinPairState {
    pub fn dims(&self) -> [usize; 6] {
        let d = self.prep.register_size;
        let r = self.prep.readout_size();
        [2, 2, d, d, r, r]
    }

    fn strides(&self) -> [usize; 6] {
        let dims = self.dims();
        let mut s = [1usize; 6];
        for f in (0..5).rev() {
            s[f] = s[f + 1] * dims[f + 1];
        }
        s
    }

    pub fn index(&self, coords: [usize; 6]) -> usize {
        coords.iter().zip(self.strides()).map(|(c, s)| c * s).sum()
    }

    pub fn coords(&self, mut i: usize) -> [usize; 6] {
        let mut out = [0usize; 6];
        for (f, s) in self.strides().iter().enumerate() {
            out[f] = i / s;
            i %= s;
        }
        out
    }

    pub fn norm(&self) -> f64 {
        self.amplitudes.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt()
    }

    /// Weight of each spin basis sector.
    pub fn sector_weights(&self) -> BTreeMap<String, f64> {
        let mut out = BTreeMap::new();
        for s1 in [UP, DOWN] {
            for s2 in [UP, DOWN] {
                out.insert(format!("{}{}", arrow(s1), arrow(s2)), 0.0);
            }
        }
        for (i, a) in self.amplitudes.iter().enumerate() {
            let c = self.coords(i);
            *out.get_mut(&format!("{}{}", arrow(c[0]), arrow(c[1]))).unwrap() += a.norm_sqr();
        }
        out
    }

    /// Squared norm of the projection onto the singlet, per remaining
    /// basis state, summed.
    fn singlet_amplitudes(&self) -> BTreeMap<[usize; 4], C64> {
        let h = std::f64::consts::FRAC_1_SQRT_2;
        let mut out: BTreeMap<[usize; 4], C64> = BTreeMap::new();
        for (i, a) in self.amplitudes.iter().enumerate() {
            let c = self.coords(i);
            let sign = match (c[0], c[1]) {
                (UP, DOWN) => h,
                (DOWN, UP) => -h,
                _ => continue,
            };
            *out.entry([c[2], c[3], c[4], c[5]]).or_default() += a * sign;
        }
        out
    }

    /// Probability the pair is found with total spin zero.
    pub fn singlet_weight(&self) -> f64 {
        self.singlet_amplitudes().values().map(|a| a.norm_sqr()).sum()
    }

    /// Distribution of the joined detector value.
    pub fn sum_distribution(&self) -> BTreeMap<usize, f64> {
        let mut out = BTreeMap::new();
        for (i, a) in self.amplitudes.iter().enumerate() {
            let p = a.norm_sqr();
            if p > 0.0 {
                let c = self.coords(i);
                *out.entry(self.prep.joined(c[2], c[3])).or_insert(0.0) += p;
            }
        }
        out
    }

    /// Reduced density matrix of one subsystem.
    pub fn reduced(&self, sub: Subsystem) -> DMatrix<C64> {
        let f = sub as usize;
        let n = self.dims()[f];
        let stride = self.strides()[f];
        let mut rest: BTreeMap<usize, Vec<C64>> = BTreeMap::new();
        for (i, a) in self.amplitudes.iter().enumerate() {
            if a.norm_sqr() == 0.0 {
                continue;
            }
            let local = (i / stride) % n;
            let key = i - local * stride;
            rest.entry(key).or_insert_with(|| vec![C64::default(); n])[local] = *a;
        }
        let mut rho = DMatrix::<C64>::zeros(n, n);
        for v in rest.values() {
            for r in 0..n {
                for c in 0..n {
                    rho[(r, c)] += v[r] * v[c].conj();
                }
            }
        }
        rho
    }

    /// Normalized projection onto `value` of subsystem `sub`, with its weight.
    pub fn conditioned(&self, sub: Subsystem, value: usize) -> Option<(f64, SpinPairState)> {
        let f = sub as usize;
        let mut out = self.clone();
        for (i, a) in out.amplitudes.iter_mut().enumerate() {
            if self.coords(i)[f] != value {
                *a = C64::default();
            }
        }
        let w = out.norm().powi(2);
        if w <= 1e-15 {
            return None;
        }
        let s = w.sqrt();
        for a in &mut out.amplitudes {
            *a /= s;
        }
        Some((w, out))
    }

    /// Fidelity of the spin and detector part with singlet times the
    /// prepared detector state; readouts are traced out.
    pub fn fidelity_with_singlet_d11(&self) -> f64 {
        let d11 = detector_state(&self.prep);
        let mut per_readout: BTreeMap<(usize, usize), C64> = BTreeMap::new();
        for ([m1, m2, ro, rp], a) in self.singlet_amplitudes() {
            let reference = d11.get(&(m1, m2)).copied().unwrap_or(0.0);
            *per_readout.entry((ro, rp)).or_default() += a * reference;
        }
        per_readout.values().map(|a| a.norm_sqr()).sum()
    }

    /// Trace distance between the states of detector 1 attached to the two
    /// branches of spin 1.
    pub fn branch_trace_distance(&self) -> f64 {
        match (
            self.conditioned(Subsystem::Spin1, UP),
            self.conditioned(Subsystem::Spin1, DOWN),
        ) {
            (Some((_, u)), Some((_, d))) => {
                trace_distance(&u.reduced(Subsystem::Detector1), &d.reduced(Subsystem::Detector1))
            }
            _ => 0.0,
        }
    }
}

fn arrow(s: usize) -> &'static str {
    if s == UP {
        "↑"
    } else {
        "↓"
    }
}

/// Real amplitudes of the jointly prepared detector pair, keyed by (m1, m2).
fn detector_state(prep: &DetectorPrep) -> BTreeMap<(usize, usize), f64> {
    let d = prep.register_size as i64;
    let amp = 1.0 / (prep.support as f64).sqrt();
    let mut out = BTreeMap::new();
    for m1 in prep.first_m1()..prep.first_m1() + prep.support {
        let m2 = prep.correlation_sum - m1 as i64;
        let m2 = if prep.ring { m2.rem_euclid(d) } else { m2 };
        out.insert((m1, m2 as usize), amp);
    }
    out
}

/// Singlet spins times the jointly prepared detector pair, readouts blank.
pub fn prepare(prep: DetectorPrep) -> Result<SpinPairState, NondemolitionError> {
    let d = prep.register_size;
    let too_small = NondemolitionError::RegisterTooSmall {
        size: d,
        support: prep.support,
        sum: prep.correlation_sum,
    };
    if d < 5 || prep.support == 0 || prep.support > d {
        return Err(too_small);
    }
    if !prep.ring {
        let lo = prep.first_m1() as i64;
        let hi = lo + prep.support as i64 - 1;
        let m2_lo = prep.correlation_sum - hi;
        let m2_hi = prep.correlation_sum - lo;
        if m2_lo < 0 || m2_hi >= d as i64 {
            return Err(too_small);
        }
    }
    let dims = {
        let r = prep.readout_size();
        [2, 2, d, d, r, r]
    };
    let mut state = SpinPairState {
        prep,
        amplitudes: vec![C64::default(); dims.iter().product()],
    };
    let h = std::f64::consts::FRAC_1_SQRT_2;
    for ((m1, m2), amp) in detector_state(&prep) {
        let up_down = state.index([UP, DOWN, m1, m2, BLANK, BLANK]);
        let down_up = state.index([DOWN, UP, m1, m2, BLANK, BLANK]);
        state.amplitudes[up_down] = C64::new(h * amp, 0.0);
        state.amplitudes[down_up] = C64::new(-h * amp, 0.0);
    }
    Ok(state)
}

/// Register `reg` moves by +1 where spin `control` is up and by -1 where down.
fn controlled_shift(
    s: &SpinPairState,
    control: Subsystem,
    reg: Subsystem,
) -> Result<SpinPairState, NondemolitionError> {
    let d = s.prep.register_size as i64;
    let mut out = s.clone();
    out.amplitudes.iter_mut().for_each(|a| *a = C64::default());
    for (i, a) in s.amplitudes.iter().enumerate() {
        if a.norm_sqr() == 0.0 {
            continue;
        }
        let mut c = s.coords(i);
        let delta = if c[control as usize] == UP { 1 } else { -1 };
        let moved = c[reg as usize] as i64 + delta;
        let moved = if s.prep.ring {
            moved.rem_euclid(d)
        } else if (0..d).contains(&moved) {
            moved
        } else {
            return Err(NondemolitionError::ShiftOutOfRange {
                register: if reg == Subsystem::Detector1 { 1 } else { 2 },
                value: moved,
                size: d as usize,
            });
        };
        c[reg as usize] = moved as usize;
        out.amplitudes[s.index(c)] = *a;
    }
    Ok(out)
}

/// First detector engages the first particle.
pub fn interact_a(s: &SpinPairState) -> Result<SpinPairState, NondemolitionError> {
    controlled_shift(s, Subsystem::Spin1, Subsystem::Detector1)
}

/// Second detector engages the second particle.
pub fn interact_b(s: &SpinPairState) -> Result<SpinPairState, NondemolitionError> {
    controlled_shift(s, Subsystem::Spin2, Subsystem::Detector2)
}

/// Detectors brought together: the readout swaps blank with the joined value.
fn join_readout(s: &SpinPairState, readout: Subsystem) -> SpinPairState {
    let f = readout as usize;
    let mut out = s.clone();
    out.amplitudes.iter_mut().for_each(|a| *a = C64::default());
    for (i, a) in s.amplitudes.iter().enumerate() {
        if a.norm_sqr() == 0.0 {
            continue;
        }
        let mut c = s.coords(i);
        let value = 1 + s.prep.joined(c[2], c[3]);
        c[f] = match c[f] {
            BLANK => value,
            r if r == value => BLANK,
            r => r,
        };
        out.amplitudes[s.index(c)] = *a;
    }
    out
}

pub fn apply_event(s: &SpinPairState, event: Event) -> Result<SpinPairState, NondemolitionError> {
    match event {
        Event::O => Ok(join_readout(s, Subsystem::ReadoutO)),
        Event::A => interact_a(s),
        Event::B => interact_b(s),
        Event::P => Ok(join_readout(s, Subsystem::ReadoutP)),
    }
}

/// Normalized Hilbert-Schmidt overlap of two density matrices.
pub fn overlap(rho: &DMatrix<C64>, sigma: &DMatrix<C64>) -> f64 {
    let cross = (rho * sigma).trace().re;
    let a = (rho * rho).trace().re;
    let b = (sigma * sigma).trace().re;
    if a <= 0.0 || b <= 0.0 {
        return 0.0;
    }
    cross / (a * b).sqrt()
}

pub fn trace_distance(rho: &DMatrix<C64>, sigma: &DMatrix<C64>) -> f64 {
    let diff = rho - sigma;
    0.5 * diff
        .symmetric_eigen()
        .eigenvalues
        .iter()
        .map(|l| l.abs())
        .sum::<f64>()
}

/// Von Neumann entropy in nats.
pub fn entropy(rho: &DMatrix<C64>) -> f64 {
    rho.clone()
        .symmetric_eigen()
        .eigenvalues
        .iter()
        .filter(|&&l| l > 1e-15)
        .map(|&l| -l * l.ln())
        .sum()
}

/// Whether a hit during `event` could reduce the state under rule 1a: the
/// event's local environment either ends up orthogonal to what it was, or
/// ends up in orthogonal states on the two branches of the engaged spin.
pub fn rule1a_eligibility(s: &SpinPairState, event: Event) -> Result<bool, NondemolitionError> {
    let after = apply_event(s, event)?;
    let env = event.local_env();
    let pre_post = overlap(&s.reduced(env), &after.reduced(env));
    let spin = event.engaged_spin();
    let branches = match (after.conditioned(spin, UP), after.conditioned(spin, DOWN)) {
        (Some((_, u)), Some((_, d))) => overlap(&u.reduced(env), &d.reduced(env)),
        _ => 1.0,
    };
    Ok(pre_post < ORTHOGONAL_EPS || branches < ORTHOGONAL_EPS)
}

/// Eligibility at each event along O, A, B, P.
pub fn eligibility_table(prep: DetectorPrep) -> Result<BTreeMap<Event, bool>, NondemolitionError> {
    let mut s = prepare(prep)?;
    let mut out = BTreeMap::new();
    for e in Event::SEQUENCE {
        out.insert(e, rule1a_eligibility(&s, e)?);
        s = apply_event(&s, e)?;
    }
    Ok(out)
}

/// Split a state by the values of one subsystem.
fn project_all(s: &SpinPairState, sub: Subsystem) -> Vec<(f64, SpinPairState)> {
    (0..s.dims()[sub as usize])
        .filter_map(|v| s.conditioned(sub, v))
        .collect()
}

/// Weighted final states after running O, A, B, P with reductions wired
/// to the rule set. The observer regime reduces only at the observed
/// readouts; the objective regime reduces wherever rule 1a is eligible,
/// and the coherent mutant also reduces on the spin branches at A and B.
pub fn final_branches(
    rules: &RuleSet,
    prep: DetectorPrep,
) -> Result<Vec<(f64, SpinPairState)>, NondemolitionError> {
    let mut branches = vec![(1.0, prepare(prep)?)];
    for e in Event::SEQUENCE {
        let mut next = Vec::new();
        for (p, s) in branches {
            let after = apply_event(&s, e)?;
            let split_on = match rules.regime {
                Regime::Observer => matches!(e, Event::O | Event::P).then(|| e.local_env()),
                Regime::Objective => {
                    if rule1a_eligibility(&s, e)? {
                        Some(e.local_env())
                    } else if rules.coherent_1a {
                        Some(e.engaged_spin())
                    } else {
                        None
                    }
                }
            };
            match split_on {
                Some(sub) => next.extend(project_all(&after, sub).into_iter().map(|(w, b)| (p * w, b))),
                None => next.push((p, after)),
            }
        }
        branches = next;
    }
    Ok(branches)
}

fn outcome_record(outcome: &str, detector: &str) -> ObservableRecord {
    let label = format!("{outcome}|{detector}");
    ObservableRecord {
        acquisitions: BTreeMap::from([("ob".to_string(), vec![label.clone()])]),
        final_labels: vec![label],
    }
}

/// Exact distribution of the final observation: total spin of the pair
/// and the joined detector value.
pub fn nondemolition_distribution(
    rules: &RuleSet,
    prep: DetectorPrep,
) -> Result<OutcomeDistribution, NondemolitionError> {
    let mut out: BTreeMap<ObservableRecord, f64> = BTreeMap::new();
    for (p, s) in final_branches(rules, prep)? {
        let mut by_sum: BTreeMap<usize, (f64, f64)> = BTreeMap::new();
        for ([m1, m2, _, _], a) in s.singlet_amplitudes() {
            by_sum.entry(s.prep.joined(m1, m2)).or_default().0 += a.norm_sqr();
        }
        for (sum, w) in s.sum_distribution() {
            by_sum.entry(sum).or_default().1 += w;
        }
        for (sum, (singlet, total)) in by_sum {
            let detector = if sum as i64 == prep.definite_sum() {
                "D_11".to_string()
            } else {
                format!("D_sum={sum}")
            };
            for (outcome, w) in [("J2=0", singlet), ("J2=2", total - singlet)] {
                if w * p > 1e-12 {
                    *out.entry(outcome_record(outcome, &detector)).or_insert(0.0) += w * p;
                }
            }
        }
    }
    let total: f64 = out.values().sum();
    out.values_mut().for_each(|p| *p /= total);
    Ok(OutcomeDistribution {
        probabilities: out,
        samples: None,
    })
}

/// One seeded run of the protocol with the default preparation.
pub fn run_nondemolition(rules: &RuleSet, seed: u64) -> Result<ObservableRecord, NondemolitionError> {
    let dist = nondemolition_distribution(rules, DetectorPrep::default())?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(sample(&dist, &mut rng))
}

/// `n` seeded runs collected into an empirical distribution.
pub fn nondemolition_trials(
    rules: &RuleSet,
    n: u64,
    seed: u64,
) -> Result<OutcomeDistribution, NondemolitionError> {
    let dist = nondemolition_distribution(rules, DetectorPrep::default())?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut counts: BTreeMap<ObservableRecord, u64> = BTreeMap::new();
    for _ in 0..n {
        *counts.entry(sample(&dist, &mut rng)).or_insert(0) += 1;
    }
    Ok(OutcomeDistribution {
        probabilities: counts
            .into_iter()
            .map(|(r, c)| (r, c as f64 / n as f64))
            .collect(),
        samples: Some(n),
    })
}

fn sample(dist: &OutcomeDistribution, rng: &mut impl Rng) -> ObservableRecord {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    let mut last = None;
    for (r, p) in &dist.probabilities {
        acc += p;
        last = Some(r);
        if u < acc {
            return r.clone();
        }
    }
    last.cloned().unwrap_or_default()
}

#[derive(Debug, Clone, Serialize)]
pub struct StageSnapshot {
    pub stage: String,
    pub norm: f64,
    pub singlet_weight: f64,
    pub sector_weights: BTreeMap<String, f64>,
    pub sum_distribution: BTreeMap<usize, f64>,
    pub detector1_entropy: f64,
    pub branch_trace_distance: f64,
    pub fidelity_singlet_d11: f64,
    /// Rule 1a eligibility of the event that produced this stage.
    pub eligible: Option<bool>,
}

fn round12(x: f64) -> f64 {
    let r = (x * 1e12).round() / 1e12;
    if r == 0.0 {
        0.0
    } else {
        r
    }
}

fn snapshot(stage: &str, s: &SpinPairState, eligible: Option<bool>) -> StageSnapshot {
    StageSnapshot {
        stage: stage.to_string(),
        norm: round12(s.norm()),
        singlet_weight: round12(s.singlet_weight()),
        sector_weights: s.sector_weights().into_iter().map(|(k, v)| (k, round12(v))).collect(),
        sum_distribution: s.sum_distribution().into_iter().map(|(k, v)| (k, round12(v))).collect(),
        detector1_entropy: round12(entropy(&s.reduced(Subsystem::Detector1))),
        branch_trace_distance: round12(s.branch_trace_distance()),
        fidelity_singlet_d11: round12(s.fidelity_with_singlet_d11()),
        eligible,
    }
}

/// Snapshots after preparation and after each event, values rounded to
/// twelve decimals so they can be compared as text.
pub fn stages(prep: DetectorPrep) -> Result<Vec<StageSnapshot>, NondemolitionError> {
    let mut s = prepare(prep)?;
    let mut out = vec![snapshot("prepare", &s, None)];
    for e in Event::SEQUENCE {
        let eligible = rule1a_eligibility(&s, e)?;
        s = apply_event(&s, e)?;
        out.push(snapshot(&e.to_string(), &s, Some(eligible)));
    }
    Ok(out)
}
