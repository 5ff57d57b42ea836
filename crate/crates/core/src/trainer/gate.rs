//! Labels for the communication gate and its classifier training.
//!
//! A label asks whether cutting one agent off the channel at one time step,
//! and letting it act with the no-communication policy instead, lowers the
//! team's smooth robustness by more than a threshold.

use catl_neural::{AdamConfig, AdamState, Tape, Tensor};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::harness::Scenario;
use crate::monitor::{RobustnessConfig, TapeSemantics};
use crate::policy::{Ablation, GateMode, Policy, COMMUNICATE};
use crate::spec::OuterFormula;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GateSample {
    pub thought: Vec<f64>,
    /// `1` when the agent should communicate.
    pub label: u8,
    pub agent: usize,
    pub t: usize,
    /// Smooth robustness of the unablated rollout.
    pub eta_full: f64,
    /// `eta_full` minus the ablated rollout's smooth robustness.
    pub drop: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GateDataset {
    pub samples: Vec<GateSample>,
    /// Threshold factor used for the labels.
    pub factor: f64,
}

/// Relative thresholds reported alongside the chosen one.
pub const THRESHOLD_SWEEP: [f64; 3] = [0.01, 0.05, 0.1];

/// Label threshold for a rollout with smooth robustness `eta_full`.
pub fn gate_threshold(factor: f64, eta_full: f64) -> f64 {
    factor * eta_full.abs().max(0.1)
}

impl GateDataset {
    pub fn positives(&self) -> usize {
        self.samples.iter().filter(|s| s.label == 1).count()
    }

    /// Fraction of positive labels had the threshold factor been `factor`.
    pub fn positive_fraction_at(&self, factor: f64) -> f64 {
        let n = self.samples.len().max(1) as f64;
        self.samples
            .iter()
            .filter(|s| s.drop > gate_threshold(factor, s.eta_full))
            .count() as f64
            / n
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("gate dataset serializes")
    }
}

/// Ablates every (agent, time) pair of every initial state.
pub fn build_gate_dataset(
    full: &Policy,
    nocomm: &Policy,
    scenario: &Scenario,
    phi: &OuterFormula,
    x0: &[Vec<[f64; 2]>],
    tau: f64,
    factor: f64,
) -> Result<GateDataset> {
    let n = scenario.num_agents();
    let h = scenario.horizon;
    let mut rows: Vec<Option<(usize, usize)>> = vec![None];
    for j in 0..n {
        for t in 0..h {
            rows.push(Some((j, t)));
        }
    }
    let b = rows.len();
    let mut samples = Vec::with_capacity(x0.len() * n * h);
    for start in x0 {
        let mut tape = Tape::new();
        let p = full.bind(&mut tape, false, false);
        let q = nocomm.bind(&mut tape, false, false);
        let ablation = Ablation {
            policy: nocomm,
            bound: &q,
            rows: &rows,
        };
        let batch = vec![start.clone(); b];
        let r = full.rollout_on_tape(&mut tape, &p, scenario, &batch, h, GateMode::Full, Some(&ablation))?;
        let eta = TapeSemantics::new(
            &mut tape,
            &r.states,
            scenario.capability_lists(),
            &scenario.regions,
            RobustnessConfig::smooth(tau),
        )
        .outer(phi, 0);
        let eta = tape.value(eta).data().to_vec();
        for (k, row) in rows.iter().enumerate().skip(1) {
            let (j, t) = row.expect("ablated row");
            let drop = eta[0] - eta[k];
            samples.push(GateSample {
                thought: r.thoughts[t].row_slice(j * b).to_vec(),
                label: u8::from(drop > gate_threshold(factor, eta[0])),
                agent: scenario.agents[j].id,
                t,
                eta_full: eta[0],
                drop,
            });
        }
    }
    Ok(GateDataset { samples, factor })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GateTrainConfig {
    pub steps: usize,
    pub lr: f64,
    pub holdout: f64,
    pub seed: u64,
}

impl Default for GateTrainConfig {
    fn default() -> Self {
        GateTrainConfig {
            steps: 500,
            lr: 0.01,
            holdout: 0.2,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GateReport {
    pub samples: usize,
    pub positives: usize,
    /// Only one class present; the classifier can only learn a constant.
    pub degenerate: bool,
    pub initial_loss: f64,
    pub final_loss: f64,
    pub train_accuracy: f64,
    pub holdout_accuracy: f64,
    /// `(threshold factor, positive fraction)`.
    pub threshold_sweep: Vec<(f64, f64)>,
}

fn class_of(label: u8) -> usize {
    if label == 1 {
        COMMUNICATE
    } else {
        1 - COMMUNICATE
    }
}

fn accuracy(policy: &Policy, samples: &[&GateSample]) -> f64 {
    if samples.is_empty() {
        return f64::NAN;
    }
    let hits = samples
        .iter()
        .filter(|s| policy.gate(&Tensor::row(&s.thought), GateMode::Learned) == (s.label == 1))
        .count();
    hits as f64 / samples.len() as f64
}

/// Full-batch cross-entropy minimization over the gate parameters only.
pub fn train_gate(policy: &mut Policy, data: &GateDataset, cfg: &GateTrainConfig) -> Result<GateReport> {
    let mut order: Vec<usize> = (0..data.samples.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(cfg.seed));
    let n_hold = ((data.samples.len() as f64) * cfg.holdout).round() as usize;
    let (hold, train) = order.split_at(n_hold.min(order.len()));
    let train: Vec<&GateSample> = train.iter().map(|&i| &data.samples[i]).collect();
    let hold: Vec<&GateSample> = hold.iter().map(|&i| &data.samples[i]).collect();
    let positives = data.positives();
    let mut report = GateReport {
        samples: data.samples.len(),
        positives,
        degenerate: positives == 0 || positives == data.samples.len(),
        initial_loss: f64::NAN,
        final_loss: f64::NAN,
        train_accuracy: f64::NAN,
        holdout_accuracy: f64::NAN,
        threshold_sweep: THRESHOLD_SWEEP.iter().map(|&f| (f, data.positive_fraction_at(f))).collect(),
    };
    if train.is_empty() {
        return Ok(report);
    }
    let x = Tensor::from_rows(&train.iter().map(|s| s.thought.clone()).collect::<Vec<_>>());
    let labels: Vec<usize> = train.iter().map(|s| class_of(s.label)).collect();
    let mut adam = AdamState::new(&policy.params, AdamConfig::with_lr(cfg.lr));
    for step in 0..=cfg.steps {
        let mut tape = Tape::new();
        let p = policy.bind(&mut tape, false, true);
        let xv = tape.constant(x.clone());
        let logits = policy.gate_logits(&mut tape, &p, xv);
        let loss = tape.cross_entropy(logits, &labels);
        let value = tape.value(loss).item();
        if step == 0 {
            report.initial_loss = value;
        }
        report.final_loss = value;
        if step == cfg.steps {
            break;
        }
        let mut g = tape.backward(loss);
        let grads = p.collect_grads(&mut g);
        adam.update(&mut policy.params, &grads);
    }
    report.train_accuracy = accuracy(policy, &train);
    report.holdout_accuracy = accuracy(policy, &hold);
    Ok(report)
}
