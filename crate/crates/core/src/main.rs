use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};

use catl::harness::{builtin, emit_plots, evaluate, sample_initial_states, PlotInputs, Scenario};
use catl::monitor::{io, outer_rho, outer_sat, RobustnessConfig};
use catl::normalizer::{to_dnf, DnfOptions};
use catl::policy::{GateMode, Policy};
use catl::repair::{repair, RepairConfig};
use catl::spec::{parse_inner, parse_spec, OuterFormula};
use catl::synth::{synthesize, SynthesisConfig, SynthesisRequest};
use catl::trainer::{train, TrainConfig};
use catl::{CatlError, Result};

#[derive(Parser)]
#[command(name = "catl", version, about = "Capability temporal logic tools for heterogeneous teams")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Problem {
    /// Scenario JSON file, or a bundled name: case_study, reduced, toy, repair_toy.
    #[arg(long)]
    scenario: String,
    /// Specification file; defaults to the bundled one for bundled scenarios.
    #[arg(long)]
    spec: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Parse a specification and print it with its horizon.
    Parse {
        #[arg(long)]
        spec: PathBuf,
        /// Also check capabilities, regions and counts against a scenario.
        #[arg(long)]
        scenario: Option<String>,
    },
    /// Check a team trajectory; exits with status 2 on violation.
    Monitor {
        #[command(flatten)]
        problem: Problem,
        #[arg(long)]
        traj: PathBuf,
        /// Also report smooth robustness at this temperature.
        #[arg(long)]
        tau: Option<f64>,
    },
    /// Print the disjunctive normal form of a specification.
    Dnf {
        #[command(flatten)]
        problem: Problem,
        #[arg(long, default_value_t = catl::normalizer::DEFAULT_CLAUSE_CAP)]
        cap: usize,
    },
    /// Synthesize one agent's trajectory for an inner formula.
    Synth {
        #[arg(long)]
        scenario: String,
        /// Inner formula text, e.g. "F[0,8] in(C)".
        #[arg(long)]
        formula: String,
        #[arg(long)]
        agent: usize,
        /// Initial state `x,y`; sampled from the agent's initial region if absent.
        #[arg(long, value_parser = parse_point, allow_hyphen_values = true)]
        x0: Option<[f64; 2]>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Repair a violating team trajectory.
    Repair {
        #[command(flatten)]
        problem: Problem,
        #[arg(long)]
        traj: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Repaired trajectory (CSV with sidecar, or JSON by extension).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Also write the original and repaired trajectories as plots here.
        #[arg(long)]
        plots: Option<PathBuf>,
    },
    /// Run the training pipeline.
    Train {
        #[command(flatten)]
        problem: Problem,
        /// Training configuration JSON; missing fields take defaults.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Overrides the configuration seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Evaluate a checkpoint from random initial states.
    Eval {
        #[command(flatten)]
        problem: Problem,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long, default_value_t = 1000)]
        trials: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value = "learned")]
        gate: GateMode,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Render a map, trajectories and a communication mask.
    Plot {
        #[arg(long)]
        scenario: String,
        #[arg(long)]
        traj: Option<PathBuf>,
        /// Drawn dashed beneath `--traj`.
        #[arg(long)]
        original: Option<PathBuf>,
        /// Roll out this checkpoint from a seeded initial state instead of `--traj`.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value = "learned")]
        gate: GateMode,
        #[arg(long)]
        out: PathBuf,
    },
}

fn parse_point(s: &str) -> std::result::Result<[f64; 2], String> {
    let parts: Vec<&str> = s.split(',').collect();
    match parts.as_slice() {
        [a, b] => Ok([
            a.trim().parse().map_err(|e| format!("{e}"))?,
            b.trim().parse().map_err(|e| format!("{e}"))?,
        ]),
        _ => Err("expected `x,y`".into()),
    }
}

fn load_scenario(name: &str) -> Result<(Scenario, Option<OuterFormula>)> {
    if let Some((s, phi)) = builtin(name) {
        return Ok((s, Some(phi)));
    }
    Ok((Scenario::load(Path::new(name))?, None))
}

fn load_problem(p: &Problem) -> Result<(Scenario, OuterFormula)> {
    let (scenario, bundled) = load_scenario(&p.scenario)?;
    let phi = match (&p.spec, bundled) {
        (Some(path), _) => scenario.parse_spec(&std::fs::read_to_string(path)?)?,
        (None, Some(phi)) => phi,
        (None, None) => return Err(CatlError::Invalid("--spec is required for scenario files".into())),
    };
    Ok((scenario, phi))
}

fn print_json(value: &impl serde::Serialize) -> Result<()> {
    println!("{}", serde_json::to_string_pretty(value)?);
    Ok(())
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Parse { spec, scenario } => {
            let text = std::fs::read_to_string(&spec)?;
            let phi = match scenario {
                Some(name) => load_scenario(&name)?.0.parse_spec(&text)?,
                None => parse_spec(&text)?,
            };
            println!("{phi}");
            println!("horizon {}", phi.horizon());
        }
        Command::Monitor { problem, traj, tau } => {
            let (scenario, phi) = load_problem(&problem)?;
            let team = io::load(&traj)?;
            scenario.check_team(&team)?;
            let satisfied = outer_sat(&team, &phi, 0, &scenario.regions)?;
            let rho = outer_rho(&team, &phi, 0, &RobustnessConfig::classical(), &scenario.regions)?;
            let smooth = tau
                .map(|t| outer_rho(&team, &phi, 0, &RobustnessConfig::smooth(t), &scenario.regions))
                .transpose()?;
            print_json(&serde_json::json!({ "satisfied": satisfied, "robustness": rho, "smooth_robustness": smooth }))?;
            if !satisfied {
                return Ok(ExitCode::from(2));
            }
        }
        Command::Dnf { problem, cap } => {
            let (scenario, phi) = load_problem(&problem)?;
            let dnf = to_dnf(&phi, &scenario, DnfOptions { clause_cap: cap })?;
            let mut value = serde_json::to_value(&dnf)?;
            value["count"] = dnf.len().into();
            print_json(&value)?;
        }
        Command::Synth {
            scenario,
            formula,
            agent,
            x0,
            seed,
            out,
        } => {
            let (scenario, _) = load_scenario(&scenario)?;
            let target = parse_inner(&formula)?;
            let spec = scenario
                .agents
                .iter()
                .find(|a| a.id == agent)
                .ok_or_else(|| CatlError::Invalid(format!("no agent with id {agent}")))?;
            let x0 = match x0 {
                Some(x) => x,
                None => {
                    let j = scenario.agents.iter().position(|a| a.id == agent).expect("found above");
                    sample_initial_states(&scenario, 1, seed)[0][j]
                }
            };
            let res = synthesize(&SynthesisRequest {
                x0,
                horizon: scenario.horizon,
                u_max: spec.u_max,
                target,
                regions: &scenario.regions,
                config: SynthesisConfig {
                    seed,
                    ..SynthesisConfig::default()
                },
                warm_start: None,
            })?;
            if let Some(path) = out {
                std::fs::write(path, serde_json::to_string_pretty(&res.trajectory)?)?;
            }
            print_json(&serde_json::json!({
                "success": res.success,
                "robustness": res.robustness,
                "iterations": res.iterations,
                "controls": res.controls,
                "states": res.trajectory.states,
            }))?;
        }
        Command::Repair {
            problem,
            traj,
            seed,
            out,
            plots,
        } => {
            let (scenario, phi) = load_problem(&problem)?;
            let team = io::load(&traj)?;
            let mut cfg = RepairConfig::default();
            cfg.synthesis.seed = seed;
            let outcome = repair(&team, &phi, &scenario, &cfg)?;
            if let Some(path) = out {
                io::save(&outcome.trajectory, &path)?;
            }
            if let Some(dir) = plots {
                emit_plots(
                    &scenario,
                    &PlotInputs {
                        trajectory: Some(&outcome.trajectory),
                        original: Some(&team),
                        ..PlotInputs::default()
                    },
                    &dir,
                )?;
            }
            print_json(&serde_json::json!({
                "verdict": outcome.verdict,
                "clause": outcome.clause,
                "clause_tasks": outcome.clause_tasks,
                "robustness": outcome.robustness,
                "clauses_tried": outcome.clauses_tried,
                "flagged": outcome.flagged,
                "syntheses": outcome.syntheses,
            }))?;
        }
        Command::Train {
            problem,
            config,
            out,
            seed,
        } => {
            let (scenario, phi) = load_problem(&problem)?;
            let mut cfg = match config {
                Some(path) => TrainConfig::from_json(&std::fs::read_to_string(path)?)?,
                None => TrainConfig::default(),
            };
            if let Some(s) = seed {
                cfg.seed = s;
            }
            let started = Instant::now();
            let outcome = train(&scenario, &phi, &cfg)?;
            outcome.write(&out)?;
            for stage in &outcome.log.stages {
                eprintln!(
                    "stage {}: {} steps, best validation success {:.2}% at step {}",
                    stage.name,
                    stage.steps_run,
                    100.0 * stage.best_success_rate,
                    stage.best_step
                );
            }
            eprintln!("dataset size {}", outcome.log.dataset_size);
            eprintln!("wall clock {:.1} s", started.elapsed().as_secs_f64());
        }
        Command::Eval {
            problem,
            checkpoint,
            trials,
            seed,
            gate,
            out,
        } => {
            let (scenario, phi) = load_problem(&problem)?;
            let policy = Policy::load(&checkpoint)?;
            let started = Instant::now();
            let report = evaluate(&policy, &scenario, &phi, trials, seed, gate)?;
            let elapsed = started.elapsed().as_secs_f64();
            let text = serde_json::to_string_pretty(&report)?;
            if let Some(path) = out {
                std::fs::write(path, &text)?;
            }
            println!("{text}");
            eprintln!("wall clock per rollout {:.3} ms", 1e3 * elapsed / trials.max(1) as f64);
        }
        Command::Plot {
            scenario,
            traj,
            original,
            checkpoint,
            seed,
            gate,
            out,
        } => {
            let (scenario, _) = load_scenario(&scenario)?;
            let original = original.map(|p| io::load(&p)).transpose()?;
            let (team, comm) = match (traj, checkpoint) {
                (Some(p), _) => (Some(io::load(&p)?), None),
                (None, Some(c)) => {
                    let policy = Policy::load(&c)?;
                    let x0 = sample_initial_states(&scenario, 1, seed).remove(0);
                    let r = policy.rollout(&scenario, &x0, scenario.horizon, gate)?;
                    (Some(r.team), Some(r.comm))
                }
                (None, None) => (None, None),
            };
            let written = emit_plots(
                &scenario,
                &PlotInputs {
                    trajectory: team.as_ref(),
                    original: original.as_ref(),
                    comm: comm.as_ref(),
                    report: None,
                },
                &out,
            )?;
            for p in written {
                println!("{}", p.display());
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
