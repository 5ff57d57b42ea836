//! Training pipeline for the distributed controller.
//!
//! * Stage A: full communication, cost-penalized robustness.
//! * Stage B: rounds of rollout, repair and dataset aggregation, each
//!   followed by training on the robustness/imitation mix.
//! * Stage C: a no-communication policy on the final dataset.
//! * Stage D: gate labels from single (agent, time) channel ablations, then
//!   classifier training.
//! * Stage E: retraining with the learned gate in the loop.

mod dataset;
mod gate;
mod matching;
mod objective;

use std::path::Path;

use catl_neural::{AdamConfig, AdamState, Tape};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{CatlError, Result};
use crate::harness::{evaluate_states, sample_initial_states, Scenario};
use crate::monitor::TeamTrajectory;
use crate::policy::{GateMode, Policy};
use crate::repair::RepairConfig;
use crate::spec::OuterFormula;

pub use dataset::{aggregate_dataset, AggregateReport, Dataset, DatasetEntry};
pub use gate::{
    build_gate_dataset, gate_threshold, train_gate, GateDataset, GateReport, GateSample, GateTrainConfig,
    THRESHOLD_SWEEP,
};
pub use matching::{identical_groups, match_identical_agents, min_cost_assignment};
pub use objective::{
    eq6_rows, eq7_on_tape, gamma_bound, imitation_rows, initial_state, mean_rows, objective_eq6, objective_eq7,
    ObjectiveSettings, RowTerms,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Stage {
    A,
    B,
    C,
    D,
    E,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub seed: u64,
    pub n_c: usize,
    pub hidden: usize,
    /// Smoothing temperature of the training robustness.
    pub tau: f64,
    /// Cost weight; `None` uses [`gamma_bound`].
    pub gamma: Option<f64>,
    pub lr: f64,
    /// Initial states per optimizer step.
    pub batch: usize,
    /// Rollouts per aggregation round.
    pub rollouts_per_round: usize,
    pub beta: f64,
    /// Aggregation rounds; stops early once a round's rollouts reach `target_success`.
    pub rounds: usize,
    pub stage_a_steps: usize,
    /// Optimizer steps after each aggregation round.
    pub stage_b_steps: usize,
    pub stage_c_steps: usize,
    pub stage_e_steps: usize,
    pub eval_every: usize,
    pub validation_trials: usize,
    /// Fraction of dataset entries held out for checkpoint selection.
    pub validation_fraction: f64,
    /// A stage stops early once validation success reaches this rate.
    pub target_success: f64,
    /// Initial states ablated for the gate dataset.
    pub gate_samples: usize,
    pub gate_factor: f64,
    pub gate: GateTrainConfig,
    pub repair: RepairConfig,
    pub last_stage: Stage,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            seed: 0,
            n_c: 8,
            hidden: 32,
            tau: 10.0,
            gamma: None,
            lr: 0.003,
            batch: 16,
            rollouts_per_round: 64,
            beta: 0.005,
            rounds: 3,
            stage_a_steps: 1000,
            stage_b_steps: 300,
            stage_c_steps: 300,
            stage_e_steps: 300,
            eval_every: 50,
            validation_trials: 100,
            validation_fraction: 0.2,
            target_success: 1.0,
            gate_samples: 16,
            gate_factor: 0.05,
            gate: GateTrainConfig::default(),
            repair: RepairConfig::default(),
            last_stage: Stage::E,
        }
    }
}

impl TrainConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: TrainConfig = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(CatlError::Invalid(format!("train config: {m}")));
        if !(0.0..=1.0).contains(&self.beta) {
            return bad("beta must lie in [0, 1]");
        }
        if self.batch == 0 || self.eval_every == 0 || self.validation_trials == 0 {
            return bad("batch, eval_every and validation_trials must be positive");
        }
        if !(self.tau > 0.0 && self.lr > 0.0) {
            return bad("tau and lr must be positive");
        }
        if self.gamma.is_some_and(|g| g < 0.0) {
            return bad("gamma must be nonnegative");
        }
        if !(0.0..1.0).contains(&self.validation_fraction) {
            return bad("validation_fraction must lie in [0, 1)");
        }
        Ok(())
    }

    pub fn gamma_for(&self, scenario: &Scenario) -> f64 {
        self.gamma.unwrap_or_else(|| gamma_bound(scenario))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationPoint {
    pub step: usize,
    pub success_rate: f64,
    pub mean_robustness: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageLog {
    pub name: String,
    pub mode: GateMode,
    pub steps_run: usize,
    /// Objective before each update.
    pub objective: Vec<f64>,
    pub validation: Vec<ValidationPoint>,
    pub best_step: usize,
    pub best_success_rate: f64,
    /// The step budget ran out before validation reached the target rate.
    pub budget_exhausted: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainLog {
    pub config: TrainConfig,
    pub gamma: f64,
    pub parameter_count: usize,
    pub stages: Vec<StageLog>,
    pub rounds: Vec<AggregateReport>,
    pub dataset_size: usize,
    pub gate: Option<GateReport>,
}

/// Where a stage draws its training initial states from.
enum Source<'a> {
    Random,
    Dataset(&'a [&'a TeamTrajectory]),
}

struct StagePlan<'a> {
    name: &'a str,
    steps: usize,
    mode: GateMode,
    beta: f64,
    source: Source<'a>,
    validation: &'a [Vec<[f64; 2]>],
    seed: u64,
}

fn validate_policy(
    policy: &Policy,
    scenario: &Scenario,
    phi: &OuterFormula,
    x0: &[Vec<[f64; 2]>],
    mode: GateMode,
    step: usize,
) -> Result<ValidationPoint> {
    let (report, _) = evaluate_states(policy, scenario, phi, x0, mode)?;
    Ok(ValidationPoint {
        step,
        success_rate: report.success_rate,
        mean_robustness: report.robustness.mean,
    })
}

fn better(a: &ValidationPoint, b: &ValidationPoint) -> bool {
    (a.success_rate, a.mean_robustness) > (b.success_rate, b.mean_robustness)
}

/// Adam ascent on the stage objective. The policy ends at the best
/// validated parameters.
fn run_stage(
    policy: &mut Policy,
    scenario: &Scenario,
    phi: &OuterFormula,
    cfg: &TrainConfig,
    plan: StagePlan<'_>,
) -> Result<StageLog> {
    let mut rng = ChaCha8Rng::seed_from_u64(plan.seed);
    let settings = ObjectiveSettings {
        tau: cfg.tau,
        gamma: cfg.gamma_for(scenario),
        beta: plan.beta,
        mode: plan.mode,
    };
    let mut adam = AdamState::new(&policy.params, AdamConfig::with_lr(cfg.lr));
    let mut log = StageLog {
        name: plan.name.to_string(),
        mode: plan.mode,
        steps_run: 0,
        objective: Vec::with_capacity(plan.steps),
        validation: Vec::new(),
        best_step: 0,
        best_success_rate: 0.0,
        budget_exhausted: false,
    };
    let mut best = validate_policy(policy, scenario, phi, plan.validation, plan.mode, 0)?;
    let mut best_params = policy.params.clone();
    log.validation.push(best.clone());

    let mut step = 0;
    while step < plan.steps && best.success_rate < cfg.target_success {
        let (x0, targets): (Vec<Vec<[f64; 2]>>, Option<Vec<&TeamTrajectory>>) = match &plan.source {
            Source::Random => (sample_initial_states(scenario, cfg.batch, rng.gen()), None),
            Source::Dataset(d) => {
                let picks: Vec<&TeamTrajectory> = (0..cfg.batch).map(|_| d[rng.gen_range(0..d.len())]).collect();
                (picks.iter().map(|t| initial_state(t)).collect(), Some(picks))
            }
        };
        let mut tape = Tape::new();
        let p = policy.bind(&mut tape, true, false);
        let (value, _) = eq7_on_tape(&mut tape, &p, policy, scenario, phi, &x0, targets.as_deref(), &settings)?;
        log.objective.push(tape.value(value).item());
        let mut g = tape.backward(value);
        let mut grads = p.collect_grads(&mut g);
        for gr in grads.iter_mut().flatten() {
            for v in gr.data_mut() {
                *v = -*v;
            }
        }
        adam.update(&mut policy.params, &grads);
        step += 1;

        if step % cfg.eval_every == 0 || step == plan.steps {
            let point = validate_policy(policy, scenario, phi, plan.validation, plan.mode, step)?;
            if better(&point, &best) {
                best = point.clone();
                best_params = policy.params.clone();
            }
            log.validation.push(point);
        }
    }
    policy.params = best_params;
    log.steps_run = step;
    log.best_step = best.step;
    log.best_success_rate = best.success_rate;
    log.budget_exhausted = best.success_rate < cfg.target_success;
    Ok(log)
}

/// Everything produced by [`train`].
#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub stage_a: Policy,
    pub stage_b: Option<Policy>,
    pub stage_c: Option<Policy>,
    pub final_policy: Policy,
    pub dataset: Dataset,
    pub gate_dataset: Option<GateDataset>,
    pub log: TrainLog,
}

fn stage_seed(seed: u64, tag: u64) -> u64 {
    seed.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ tag
}

/// Dataset entries used for training and for validation, every fifth
/// entry (for the default fraction) going to validation.
fn split_dataset(dataset: &Dataset, fraction: f64) -> (Vec<&TeamTrajectory>, Vec<Vec<[f64; 2]>>) {
    let mut train = Vec::new();
    let mut held = Vec::new();
    let period = if fraction > 0.0 { (1.0 / fraction).round() as usize } else { usize::MAX };
    for (i, e) in dataset.entries().iter().enumerate() {
        if period != usize::MAX && i % period == period - 1 {
            held.push(initial_state(&e.team));
        } else {
            train.push(&e.team);
        }
    }
    (train, held)
}

/// Runs stages A through `cfg.last_stage`.
pub fn train(scenario: &Scenario, phi: &OuterFormula, cfg: &TrainConfig) -> Result<TrainOutcome> {
    cfg.validate()?;
    scenario.bind(phi)?;
    if phi.horizon() > scenario.horizon {
        return Err(CatlError::TrajectoryTooShort {
            needed: phi.horizon() + 1,
            available: scenario.horizon + 1,
        });
    }
    let gamma = cfg.gamma_for(scenario);
    let mut policy = Policy::for_scenario(scenario, cfg.n_c, cfg.hidden, cfg.seed);
    let fixed_validation = sample_initial_states(scenario, cfg.validation_trials, stage_seed(cfg.seed, 0xA11));
    let mut log = TrainLog {
        config: cfg.clone(),
        gamma,
        parameter_count: policy.num_scalars(),
        stages: Vec::new(),
        rounds: Vec::new(),
        dataset_size: 0,
        gate: None,
    };

    log.stages.push(run_stage(
        &mut policy,
        scenario,
        phi,
        cfg,
        StagePlan {
            name: "A",
            steps: cfg.stage_a_steps,
            mode: GateMode::Full,
            beta: 0.0,
            source: Source::Random,
            validation: &fixed_validation,
            seed: stage_seed(cfg.seed, 0xA),
        },
    )?);
    let stage_a = policy.clone();
    let mut outcome = TrainOutcome {
        stage_a: stage_a.clone(),
        stage_b: None,
        stage_c: None,
        final_policy: stage_a,
        dataset: Dataset::new(),
        gate_dataset: None,
        log: log.clone(),
    };
    if cfg.last_stage == Stage::A {
        outcome.log = log;
        return Ok(outcome);
    }

    let mut dataset = Dataset::new();
    let mut agg_rng = ChaCha8Rng::seed_from_u64(stage_seed(cfg.seed, 0xB));
    for round in 0..cfg.rounds {
        let report = aggregate_dataset(
            &policy,
            scenario,
            phi,
            cfg.rollouts_per_round,
            GateMode::Full,
            &cfg.repair,
            round,
            &mut agg_rng,
            &mut dataset,
        )?;
        let rate = report.success_rate;
        log.rounds.push(report);
        if rate >= cfg.target_success {
            break;
        }
        let (train_set, held) = split_dataset(&dataset, cfg.validation_fraction);
        let validation: Vec<Vec<[f64; 2]>> = fixed_validation.iter().cloned().chain(held).collect();
        let source = if train_set.is_empty() {
            Source::Random
        } else {
            Source::Dataset(&train_set)
        };
        log.stages.push(run_stage(
            &mut policy,
            scenario,
            phi,
            cfg,
            StagePlan {
                name: &format!("B{round}"),
                steps: cfg.stage_b_steps,
                mode: GateMode::Full,
                beta: cfg.beta,
                source,
                validation: &validation,
                seed: stage_seed(cfg.seed, 0xB0 + round as u64),
            },
        )?);
    }
    log.dataset_size = dataset.len();
    let stage_b = policy.clone();
    outcome.stage_b = Some(stage_b.clone());
    outcome.final_policy = stage_b.clone();
    if cfg.last_stage == Stage::B {
        outcome.dataset = dataset;
        outcome.log = log;
        return Ok(outcome);
    }

    let (train_set, held) = split_dataset(&dataset, cfg.validation_fraction);
    let validation: Vec<Vec<[f64; 2]>> = fixed_validation.iter().cloned().chain(held).collect();
    let source = || {
        if train_set.is_empty() {
            Source::Random
        } else {
            Source::Dataset(&train_set)
        }
    };
    let mut nocomm = stage_b.clone();
    log.stages.push(run_stage(
        &mut nocomm,
        scenario,
        phi,
        cfg,
        StagePlan {
            name: "C",
            steps: cfg.stage_c_steps,
            mode: GateMode::None,
            beta: cfg.beta,
            source: source(),
            validation: &validation,
            seed: stage_seed(cfg.seed, 0xC),
        },
    )?);
    outcome.stage_c = Some(nocomm.clone());
    if cfg.last_stage == Stage::C {
        outcome.dataset = dataset;
        outcome.log = log;
        return Ok(outcome);
    }

    let gate_states = sample_initial_states(scenario, cfg.gate_samples, stage_seed(cfg.seed, 0xD));
    let gate_data = build_gate_dataset(&stage_b, &nocomm, scenario, phi, &gate_states, cfg.tau, cfg.gate_factor)?;
    let mut gated = stage_b.clone();
    let gate_cfg = GateTrainConfig {
        seed: stage_seed(cfg.seed, 0xD1),
        ..cfg.gate
    };
    log.gate = Some(train_gate(&mut gated, &gate_data, &gate_cfg)?);
    outcome.gate_dataset = Some(gate_data);
    if cfg.last_stage == Stage::D {
        outcome.final_policy = gated;
        outcome.dataset = dataset;
        outcome.log = log;
        return Ok(outcome);
    }

    log.stages.push(run_stage(
        &mut gated,
        scenario,
        phi,
        cfg,
        StagePlan {
            name: "E",
            steps: cfg.stage_e_steps,
            mode: GateMode::Learned,
            beta: cfg.beta,
            source: source(),
            validation: &validation,
            seed: stage_seed(cfg.seed, 0xE),
        },
    )?);
    outcome.final_policy = gated;
    outcome.dataset = dataset;
    outcome.log = log;
    Ok(outcome)
}

impl TrainOutcome {
    /// Writes checkpoints, datasets and the log into `dir`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        self.stage_a.save(&dir.join("stage_a.json"))?;
        if let Some(p) = &self.stage_b {
            p.save(&dir.join("stage_b.json"))?;
        }
        if let Some(p) = &self.stage_c {
            p.save(&dir.join("stage_c.json"))?;
        }
        self.final_policy.save(&dir.join("final.json"))?;
        std::fs::write(dir.join("dataset.json"), self.dataset.to_json())?;
        if let Some(g) = &self.gate_dataset {
            std::fs::write(dir.join("gate_dataset.json"), g.to_json())?;
        }
        std::fs::write(dir.join("train_log.json"), serde_json::to_string_pretty(&self.log)?)?;
        Ok(())
    }
}
