//! Training objectives on the tape.
//!
//! Per rollout, `eta - gamma * max(eta, 0) * cost` with `cost` the summed
//! squared control norms. The imitation term is the squared distance to a
//! matched dataset trajectory, summed over agents and time.

use catl_neural::{BoundParams, Tape, Tensor, Var};

use crate::error::Result;
use crate::harness::Scenario;
use crate::monitor::{RobustnessConfig, TapeSemantics, TeamTrajectory};
use crate::policy::{GateMode, Policy, TapeRollout};
use crate::spec::OuterFormula;

use super::matching::match_states;

/// Largest `gamma` keeping the objective's sign equal to the robustness
/// sign, with a 1.1 safety factor: `1 / (1.1 * sup cost)`.
pub fn gamma_bound(scenario: &Scenario) -> f64 {
    let sup = scenario.max_control_cost();
    if sup > 0.0 {
        1.0 / (1.1 * sup)
    } else {
        0.0
    }
}

/// Per-row terms of a batched rollout, each `B x 1`.
pub struct RowTerms {
    pub eta: Var,
    pub cost: Var,
    pub objective: Var,
}

/// Smooth robustness and cost-penalized objective of every batch row.
pub fn eq6_rows(
    tape: &mut Tape,
    rollout: &TapeRollout,
    scenario: &Scenario,
    phi: &OuterFormula,
    tau: f64,
    gamma: f64,
) -> RowTerms {
    let eta = TapeSemantics::new(
        tape,
        &rollout.states,
        scenario.capability_lists(),
        &scenario.regions,
        RobustnessConfig::smooth(tau),
    )
    .outer(phi, 0);
    let mut terms = Vec::new();
    for us in &rollout.controls {
        for &u in us {
            let sq = tape.square(u);
            terms.push(tape.sum_cols(sq));
        }
    }
    let rows = tape.shape(eta)[0];
    let cost = match terms.len() {
        0 => tape.constant(Tensor::zeros(rows, 1)),
        _ => {
            let all = tape.concat_cols(&terms);
            tape.sum_cols(all)
        }
    };
    let pos = tape.relu(eta);
    let pen = tape.mul(pos, cost);
    let pen = tape.scale(pen, gamma);
    let objective = tape.sub(eta, pen);
    RowTerms { eta, cost, objective }
}

pub fn mean_rows(tape: &mut Tape, v: Var) -> Var {
    let n = tape.shape(v)[0] as f64;
    let s = tape.sum_all(v);
    tape.scale(s, 1.0 / n)
}

/// Per-row squared distance to `targets`, after matching identical agents
/// on the rollout's current values. Returns a `B x 1` variable.
pub fn imitation_rows(
    tape: &mut Tape,
    rollout: &TapeRollout,
    scenario: &Scenario,
    targets: &[&TeamTrajectory],
) -> Result<Var> {
    let n = rollout.states.len();
    let b = targets.len();
    let h = rollout.states[0].len() - 1;
    let groups = scenario.identical_groups();
    let mut perms = Vec::with_capacity(b);
    for (r, target) in targets.iter().enumerate() {
        let own: Vec<Vec<[f64; 2]>> = (0..n)
            .map(|j| {
                (0..=h)
                    .map(|t| {
                        let v = tape.value(rollout.states[j][t]);
                        [v.get(r, 0), v.get(r, 1)]
                    })
                    .collect()
            })
            .collect();
        perms.push(match_states(&own, target, &groups)?);
    }
    let mut terms = Vec::with_capacity(n * h);
    for j in 0..n {
        for t in 1..=h {
            let rows: Vec<Vec<f64>> = (0..b)
                .map(|r| targets[r].state(perms[r][j], t).to_vec())
                .collect();
            let goal = tape.constant(Tensor::from_rows(&rows));
            let d = tape.sub(rollout.states[j][t], goal);
            let sq = tape.square(d);
            terms.push(tape.sum_cols(sq));
        }
    }
    let all = tape.concat_cols(&terms);
    Ok(tape.sum_cols(all))
}

/// Settings shared by the objective evaluations.
#[derive(Debug, Clone, Copy)]
pub struct ObjectiveSettings {
    pub tau: f64,
    pub gamma: f64,
    pub beta: f64,
    pub mode: GateMode,
}

/// Value of the cost-penalized robustness objective, averaged over `x0`.
pub fn objective_eq6(
    policy: &Policy,
    scenario: &Scenario,
    phi: &OuterFormula,
    x0: &[Vec<[f64; 2]>],
    s: &ObjectiveSettings,
) -> Result<f64> {
    let mut tape = Tape::new();
    let p = policy.bind(&mut tape, false, false);
    let (v, _) = eq7_on_tape(&mut tape, &p, policy, scenario, phi, x0, None, &ObjectiveSettings { beta: 0.0, ..*s })?;
    Ok(tape.value(v).item())
}

/// Value of the mixed objective with rollouts from the dataset initial states.
pub fn objective_eq7(
    policy: &Policy,
    scenario: &Scenario,
    phi: &OuterFormula,
    targets: &[&TeamTrajectory],
    s: &ObjectiveSettings,
) -> Result<f64> {
    let x0: Vec<Vec<[f64; 2]>> = targets.iter().map(|t| initial_state(t)).collect();
    let mut tape = Tape::new();
    let p = policy.bind(&mut tape, false, false);
    let (v, _) = eq7_on_tape(&mut tape, &p, policy, scenario, phi, &x0, Some(targets), s)?;
    Ok(tape.value(v).item())
}

pub fn initial_state(team: &TeamTrajectory) -> Vec<[f64; 2]> {
    (0..team.len()).map(|j| team.state(j, 0)).collect()
}

/// `(1 - beta) * mean objective - beta * mean imitation`, recorded on the
/// tape. Without targets the imitation term is absent and `beta` is
/// ignored. Also returns the rollout.
#[allow(clippy::too_many_arguments)]
pub fn eq7_on_tape(
    tape: &mut Tape,
    p: &BoundParams,
    policy: &Policy,
    scenario: &Scenario,
    phi: &OuterFormula,
    x0: &[Vec<[f64; 2]>],
    targets: Option<&[&TeamTrajectory]>,
    s: &ObjectiveSettings,
) -> Result<(Var, TapeRollout)> {
    let rollout = policy.rollout_on_tape(tape, p, scenario, x0, scenario.horizon, s.mode, None)?;
    let terms = eq6_rows(tape, &rollout, scenario, phi, s.tau, s.gamma);
    let l = mean_rows(tape, terms.objective);
    let value = match targets {
        Some(targets) if s.beta > 0.0 => {
            let imit = imitation_rows(tape, &rollout, scenario, targets)?;
            let imit = mean_rows(tape, imit);
            let a = tape.scale(l, 1.0 - s.beta);
            let b = tape.scale(imit, s.beta);
            tape.sub(a, b)
        }
        _ => l,
    };
    Ok((value, rollout))
}
