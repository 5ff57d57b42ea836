//! Satisfying team trajectories collected from policy rollouts and repairs.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{CatlError, Result};
use crate::harness::{sample_initial_states, Scenario};
use crate::monitor::{outer_sat, TeamTrajectory};
use crate::policy::{GateMode, Policy};
use crate::repair::{repair, RepairConfig, Verdict};
use crate::spec::OuterFormula;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetEntry {
    pub round: usize,
    /// Whether the trajectory came out of the repair step.
    pub repaired: bool,
    pub team: TeamTrajectory,
}

/// Every member satisfies the specification; checked on insertion.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    entries: Vec<DatasetEntry>,
}

impl Dataset {
    pub fn new() -> Self {
        Dataset::default()
    }

    pub fn entries(&self) -> &[DatasetEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn insert(&mut self, entry: DatasetEntry, phi: &OuterFormula, scenario: &Scenario) -> Result<()> {
        scenario.check_team(&entry.team)?;
        if !outer_sat(&entry.team, phi, 0, &scenario.regions)? {
            return Err(CatlError::Trajectory("dataset trajectories must satisfy the specification".into()));
        }
        self.entries.push(entry);
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("dataset serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateReport {
    pub round: usize,
    pub rollouts: usize,
    /// Rollouts that satisfied the specification without repair.
    pub satisfying: usize,
    pub repaired: usize,
    pub failed_repairs: usize,
    pub success_rate: f64,
    pub dataset_size: usize,
}

/// Rolls out `n` random initial states, repairs the violators and appends
/// every satisfying result to `dataset`.
#[allow(clippy::too_many_arguments)]
pub fn aggregate_dataset(
    policy: &Policy,
    scenario: &Scenario,
    phi: &OuterFormula,
    n: usize,
    mode: GateMode,
    repair_config: &RepairConfig,
    round: usize,
    rng: &mut impl Rng,
    dataset: &mut Dataset,
) -> Result<AggregateReport> {
    let x0 = sample_initial_states(scenario, n, rng.gen());
    let rollouts = policy.rollout_batch(scenario, &x0, scenario.horizon, mode)?;
    let (mut satisfying, mut repaired, mut failed) = (0, 0, 0);
    for (i, r) in rollouts.into_iter().enumerate() {
        if outer_sat(&r.team, phi, 0, &scenario.regions)? {
            satisfying += 1;
            dataset.insert(
                DatasetEntry {
                    round,
                    repaired: false,
                    team: r.team,
                },
                phi,
                scenario,
            )?;
            continue;
        }
        let mut cfg = *repair_config;
        cfg.synthesis.seed = repair_config.synthesis.seed ^ ((round as u64) << 32 | i as u64);
        let out = repair(&r.team, phi, scenario, &cfg)?;
        if out.verdict == Verdict::Success {
            repaired += 1;
            dataset.insert(
                DatasetEntry {
                    round,
                    repaired: true,
                    team: out.trajectory,
                },
                phi,
                scenario,
            )?;
        } else {
            failed += 1;
        }
    }
    Ok(AggregateReport {
        round,
        rollouts: n,
        satisfying,
        repaired,
        failed_repairs: failed,
        success_rate: satisfying as f64 / n.max(1) as f64,
        dataset_size: dataset.len(),
    })
}
