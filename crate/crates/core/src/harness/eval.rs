//! Monte-Carlo evaluation of a policy from random initial states.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{CatlError, Result};
use crate::monitor::{outer_rho, RobustnessConfig};
use crate::policy::{GateMode, Policy, Rollout};
use crate::spec::OuterFormula;

use super::Scenario;

/// Rollouts per forward batch.
const CHUNK: usize = 256;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RobustnessSummary {
    pub min: f64,
    pub max: f64,
    pub mean: f64,
    pub median: f64,
    pub p05: f64,
    pub p95: f64,
    /// Ten equal-width bins over `[min, max]`: `(lower edge, count)`.
    pub histogram: Vec<(f64, usize)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub trials: usize,
    pub successes: usize,
    pub success_rate: f64,
    pub gate: GateMode,
    pub robustness: RobustnessSummary,
    pub mean_communications: f64,
    pub max_communications: usize,
    /// `|J| * H`, the count under full communication.
    pub full_communications: usize,
}

impl RobustnessSummary {
    pub fn from_values(values: &[f64]) -> Self {
        let mut v = values.to_vec();
        v.sort_by(f64::total_cmp);
        let n = v.len();
        let q = |p: f64| v[((n - 1) as f64 * p).round() as usize];
        let (min, max) = (v[0], v[n - 1]);
        let width = (max - min) / 10.0;
        let mut counts = [0usize; 10];
        for &x in &v {
            let k = if width > 0.0 { (((x - min) / width) as usize).min(9) } else { 0 };
            counts[k] += 1;
        }
        RobustnessSummary {
            min,
            max,
            mean: v.iter().sum::<f64>() / n as f64,
            median: q(0.5),
            p05: q(0.05),
            p95: q(0.95),
            histogram: (0..10).map(|k| (min + k as f64 * width, counts[k])).collect(),
        }
    }
}

/// Classical robustness of each rollout.
pub fn rollout_robustness(rollouts: &[Rollout], phi: &OuterFormula, scenario: &Scenario) -> Result<Vec<f64>> {
    let cfg = RobustnessConfig::classical();
    rollouts
        .iter()
        .map(|r| outer_rho(&r.team, phi, 0, &cfg, &scenario.regions))
        .collect()
}

/// Rolls out from each initial state; success is classical robustness `>= 0`.
pub fn evaluate_states(
    policy: &Policy,
    scenario: &Scenario,
    phi: &OuterFormula,
    x0: &[Vec<[f64; 2]>],
    mode: GateMode,
) -> Result<(EvalReport, Vec<Rollout>)> {
    if x0.is_empty() {
        return Err(CatlError::Invalid("evaluation needs at least one trial".into()));
    }
    scenario.bind(phi)?;
    let mut rollouts = Vec::with_capacity(x0.len());
    for chunk in x0.chunks(CHUNK) {
        rollouts.extend(policy.rollout_batch(scenario, chunk, scenario.horizon, mode)?);
    }
    let rho = rollout_robustness(&rollouts, phi, scenario)?;
    let successes = rho.iter().filter(|&&r| r >= 0.0).count();
    let comms: Vec<usize> = rollouts.iter().map(|r| r.comm.count()).collect();
    let report = EvalReport {
        trials: x0.len(),
        successes,
        success_rate: successes as f64 / x0.len() as f64,
        gate: mode,
        robustness: RobustnessSummary::from_values(&rho),
        mean_communications: comms.iter().sum::<usize>() as f64 / x0.len() as f64,
        max_communications: comms.iter().copied().max().unwrap_or(0),
        full_communications: scenario.num_agents() * scenario.horizon,
    };
    Ok((report, rollouts))
}

/// Initial states for `trials` seeded trials.
pub fn sample_initial_states(scenario: &Scenario, trials: usize, seed: u64) -> Vec<Vec<[f64; 2]>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..trials).map(|_| scenario.sample_initial(&mut rng)).collect()
}

pub fn evaluate(
    policy: &Policy,
    scenario: &Scenario,
    phi: &OuterFormula,
    trials: usize,
    seed: u64,
    mode: GateMode,
) -> Result<EvalReport> {
    let x0 = sample_initial_states(scenario, trials, seed);
    Ok(evaluate_states(policy, scenario, phi, &x0, mode)?.0)
}
