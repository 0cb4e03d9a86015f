use clap::{Args, Parser, Subcommand, ValueEnum};
use rulesim::harness::{
    compare_with, enumerate_outcomes, run_trials, CompareMode, OutcomeDistribution, Thresholds,
};
use rulesim::nondemolition::{self, DetectorPrep};
use rulesim::scenario::{self, Severity, CATALOG};
use rulesim::{Regime, RuleSet, Scenario};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "rulesim", version, about = "Observer vs objective reduction rules")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sample a scenario by Monte Carlo.
    Run {
        scenario: String,
        #[command(flatten)]
        rules: RuleArgs,
        #[arg(long, default_value_t = 10_000)]
        trials: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Exact outcome distribution by branch enumeration.
    Enumerate {
        scenario: String,
        #[command(flatten)]
        rules: RuleArgs,
        #[arg(long, default_value_t = 64)]
        slices: usize,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Compare the observer and objective regimes on one scenario.
    Compare {
        scenario: String,
        #[arg(long, value_enum, default_value_t = ModeArg::Exact)]
        mode: ModeArg,
        #[arg(long, default_value_t = 64)]
        slices: usize,
        #[arg(long, default_value_t = 10_000)]
        trials: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 1e-9)]
        tvd_threshold: f64,
        #[arg(long, default_value_t = 0.01)]
        p_threshold: f64,
        /// Disable rule 4 in the objective regime.
        #[arg(long)]
        no_rule4: bool,
        /// Let rule 1a fire on coherent components in the objective regime.
        #[arg(long)]
        coherent_1a: bool,
    },
    /// Amplitude-level run of the spin-pair nondemolition experiment.
    Nondemolition {
        #[arg(long, default_value = "observer")]
        regime: Regime,
        #[arg(long)]
        coherent_1a: bool,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 5)]
        register_size: usize,
        /// Include per-stage snapshots.
        #[arg(long)]
        stages: bool,
    },
    /// List the shipped scenarios.
    List,
    /// Parse and check a scenario file.
    Validate { file: PathBuf },
}

#[derive(Args)]
struct RuleArgs {
    #[arg(long, default_value = "observer")]
    regime: Regime,
    #[arg(long)]
    no_rule4: bool,
    #[arg(long)]
    coherent_1a: bool,
}

impl RuleArgs {
    fn ruleset(&self) -> RuleSet {
        mutate(RuleSet::of(self.regime), self.no_rule4, self.coherent_1a)
    }
}

fn mutate(mut r: RuleSet, no_rule4: bool, coherent_1a: bool) -> RuleSet {
    if no_rule4 {
        r = r.without_rule4();
    }
    if coherent_1a {
        r = r.with_coherent_1a();
    }
    r
}

#[derive(Args)]
struct OutputArgs {
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Json)]
    format: Format,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Json,
    Csv,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Exact,
    Mc,
}

fn load(name: &str) -> Result<Scenario, String> {
    if CATALOG.contains(&name) {
        return scenario::builtin(name).map_err(|e| e.to_string());
    }
    let path = Path::new(name);
    let src = std::fs::read_to_string(path)
        .map_err(|e| format!("{name}: not a shipped scenario and not readable ({e})"))?;
    scenario::parse(&src).map_err(|e| format!("{name}: {e}"))
}

fn emit(dist: &OutcomeDistribution, out: &OutputArgs) -> Result<(), String> {
    let text = match out.format {
        Format::Json => serde_json::to_string_pretty(&dist.to_json()).unwrap(),
        Format::Csv => dist.to_csv(),
    };
    match &out.out {
        Some(p) => std::fs::write(p, text).map_err(|e| format!("{}: {e}", p.display())),
        None => {
            println!("{text}");
            Ok(())
        }
    }
}

fn execute(cmd: Command) -> Result<bool, String> {
    match cmd {
        Command::Run {
            scenario,
            rules,
            trials,
            seed,
            output,
        } => {
            let s = load(&scenario)?;
            let dist = run_trials(&s, rules.ruleset(), trials, seed).map_err(|e| e.to_string())?;
            emit(&dist, &output)?;
            Ok(true)
        }
        Command::Enumerate {
            scenario,
            rules,
            slices,
            output,
        } => {
            let s = load(&scenario)?;
            let dist = enumerate_outcomes(&s, rules.ruleset(), slices).map_err(|e| e.to_string())?;
            emit(&dist, &output)?;
            Ok(true)
        }
        Command::Compare {
            scenario,
            mode,
            slices,
            trials,
            seed,
            tvd_threshold,
            p_threshold,
            no_rule4,
            coherent_1a,
        } => {
            let s = load(&scenario)?;
            let observer = RuleSet::observer();
            let objective = mutate(RuleSet::objective(), no_rule4, coherent_1a);
            let (a, b, mode) = match mode {
                ModeArg::Exact => (
                    enumerate_outcomes(&s, observer, slices),
                    enumerate_outcomes(&s, objective, slices),
                    CompareMode::Exact,
                ),
                ModeArg::Mc => (
                    run_trials(&s, observer, trials, seed),
                    run_trials(&s, objective, trials, seed.wrapping_add(1)),
                    CompareMode::Mc,
                ),
            };
            let (a, b) = (a.map_err(|e| e.to_string())?, b.map_err(|e| e.to_string())?);
            let th = Thresholds {
                tvd: tvd_threshold,
                p_value: p_threshold,
            };
            let v = compare_with(&a, &b, mode, &th).map_err(|e| e.to_string())?;
            let report = serde_json::json!({
                "scenario": s.name,
                "verdict": v,
                "observer": a.to_json(),
                "objective": b.to_json(),
            });
            println!("{}", serde_json::to_string_pretty(&report).unwrap());
            Ok(v.equal)
        }
        Command::Nondemolition {
            regime,
            coherent_1a,
            seed,
            register_size,
            stages,
        } => {
            let rules = mutate(RuleSet::of(regime), false, coherent_1a);
            let prep = DetectorPrep::ring(register_size, 0);
            let err = |e: nondemolition::NondemolitionError| e.to_string();
            let record = nondemolition::run_nondemolition(&rules, seed).map_err(err)?;
            let dist = nondemolition::nondemolition_distribution(&rules, prep).map_err(err)?;
            let table = nondemolition::eligibility_table(prep).map_err(err)?;
            let mut report = serde_json::json!({
                "regime": regime,
                "record": record,
                "distribution": dist.to_json(),
                "rule1a_eligible": table,
            });
            if stages {
                report["stages"] = serde_json::to_value(nondemolition::stages(prep).map_err(err)?).unwrap();
            }
            println!("{}", serde_json::to_string_pretty(&report).unwrap());
            Ok(true)
        }
        Command::List => {
            for name in CATALOG {
                println!("{name}");
            }
            Ok(true)
        }
        Command::Validate { file } => {
            let src = std::fs::read_to_string(&file).map_err(|e| format!("{}: {e}", file.display()))?;
            let s = scenario::parse(&src).map_err(|e| format!("{}: {e}", file.display()))?;
            let diags = scenario::validate(&s);
            for d in &diags {
                println!("{d}");
            }
            Ok(diags.iter().all(|d| d.severity != Severity::Violation))
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli.command) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
