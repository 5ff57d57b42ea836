//! Clause-by-clause trajectory repair.
//!
//! Clauses of the negation-free DNF are tried from most to least robust.
//! Within a clause, tasks that are violated or only just satisfied are
//! assigned to the best-placed agents, violators among them are flagged and
//! re-planned one at a time, and tasks whose count falls to exactly `m` are
//! reassigned after each re-plan. A clause only counts as repaired when the
//! final team trajectory passes the monitor for the full formula.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::error::{CatlError, Result};
use crate::harness::Scenario;
use crate::monitor::{
    check_outer, count, inner_rho_all, inner_sat, outer_rho, outer_sat, task_rho, RobustnessConfig, TeamTrajectory,
    DEFAULT_TOP,
};
use crate::normalizer::{to_dnf, DnfForm, DnfOptions};
use crate::spec::{InnerFormula, OuterFormula, TimedTask};
use crate::synth::{synthesize_conjunction, SynthesisConfig};

/// Indices ordering `values` from largest to smallest, ties by index.
pub fn sort_desc(values: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&a, &b| values[b].total_cmp(&values[a]).then(a.cmp(&b)));
    idx
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RepairConfig {
    pub synthesis: SynthesisConfig,
    pub dnf: DnfOptions,
    /// Most clauses attempted before giving up.
    pub max_clauses: usize,
}

impl Default for RepairConfig {
    fn default() -> Self {
        RepairConfig {
            synthesis: SynthesisConfig::default(),
            dnf: DnfOptions::default(),
            max_clauses: 16,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthesisLog {
    pub clause: usize,
    pub agent: usize,
    /// Pinned formulas, printed as `F[t,t] phi`.
    pub formulas: Vec<String>,
    pub robustness: f64,
    pub success: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Success,
    Fail,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepairOutcome {
    pub trajectory: TeamTrajectory,
    /// Per-agent control sequences, in member order.
    pub controls: Vec<Vec<[f64; 2]>>,
    pub verdict: Verdict,
    /// Index of the repaired clause in the DNF.
    pub clause: Option<usize>,
    pub clause_tasks: Vec<String>,
    /// Classical robustness of the returned trajectory.
    pub robustness: f64,
    pub clauses_tried: usize,
    pub flagged: Vec<usize>,
    pub syntheses: Vec<SynthesisLog>,
}

impl RepairOutcome {
    pub fn success(&self) -> bool {
        self.verdict == Verdict::Success
    }
}

/// Working state while repairing one clause.
#[derive(Debug, Clone)]
pub struct RepairState {
    /// Task indices assigned to each member.
    pub assignments: Vec<BTreeSet<usize>>,
    pub flags: Vec<bool>,
    pub clause: usize,
    pub team: TeamTrajectory,
    /// Members replaced so far, in repair order.
    pub repaired: Vec<usize>,
}

fn controls_of(team: &TeamTrajectory) -> Vec<Vec<[f64; 2]>> {
    team.members()
        .iter()
        .map(|m| match &m.trajectory.controls {
            Some(u) => u.clone(),
            None => m.trajectory.states.windows(2).map(|w| [w[1][0] - w[0][0], w[1][1] - w[0][1]]).collect(),
        })
        .collect()
}

fn task_count(team: &TeamTrajectory, tt: &TimedTask, scenario: &Scenario) -> Result<usize> {
    count(team, &tt.task.capability, &tt.task.inner, tt.time, &scenario.regions)
}

/// Classical robustness of each clause.
pub fn clause_robustness(team: &TeamTrajectory, dnf: &DnfForm, scenario: &Scenario) -> Result<Vec<f64>> {
    let cfg = RobustnessConfig::classical();
    let mut cache = std::collections::HashMap::new();
    dnf.clauses
        .iter()
        .map(|clause| {
            let mut rho = DEFAULT_TOP;
            for tt in clause {
                let key = tt.to_string();
                let v = match cache.get(&key) {
                    Some(v) => *v,
                    None => {
                        let v = task_rho(team, &tt.task, tt.time, &cfg, &scenario.regions)?;
                        cache.insert(key, v);
                        v
                    }
                };
                rho = rho.min(v);
            }
            Ok(rho)
        })
        .collect()
}

/// Repairs `team` so that it satisfies `phi`, if the clause heuristics and
/// the synthesis oracle allow it.
pub fn repair(team: &TeamTrajectory, phi: &OuterFormula, scenario: &Scenario, config: &RepairConfig) -> Result<RepairOutcome> {
    scenario.check_team(team)?;
    check_outer(phi, 0, team, &scenario.regions)?;
    let dnf = to_dnf(phi, scenario, config.dnf)?;
    let classical = RobustnessConfig::classical();
    let mut syntheses = Vec::new();

    if outer_sat(team, phi, 0, &scenario.regions)? {
        return Ok(RepairOutcome {
            trajectory: team.clone(),
            controls: controls_of(team),
            verdict: Verdict::Success,
            clause: None,
            clause_tasks: Vec::new(),
            robustness: outer_rho(team, phi, 0, &classical, &scenario.regions)?,
            clauses_tried: 0,
            flagged: Vec::new(),
            syntheses,
        });
    }

    let order = sort_desc(&clause_robustness(team, &dnf, scenario)?);
    let mut tried = 0;
    let mut best_attempt: Option<(f64, RepairState)> = None;
    for &k in order.iter().take(config.max_clauses) {
        tried += 1;
        let state = repair_clause(team, &dnf.clauses[k], k, scenario, config, &mut syntheses)?;
        let Some(state) = state else { continue };
        let rho = outer_rho(&state.team, phi, 0, &classical, &scenario.regions)?;
        if outer_sat(&state.team, phi, 0, &scenario.regions)? {
            return Ok(RepairOutcome {
                controls: controls_of(&state.team),
                verdict: Verdict::Success,
                clause: Some(k),
                clause_tasks: dnf.clauses[k].iter().map(|t| t.to_string()).collect(),
                robustness: rho,
                clauses_tried: tried,
                flagged: flagged_ids(&state),
                syntheses,
                trajectory: state.team,
            });
        }
        if best_attempt.as_ref().map_or(true, |(b, _)| rho > *b) {
            best_attempt = Some((rho, state));
        }
    }
    let (trajectory, clause, flagged) = match best_attempt {
        Some((_, s)) => {
            let flagged = flagged_ids(&s);
            (s.team, Some(s.clause), flagged)
        }
        None => (team.clone(), None, Vec::new()),
    };
    Ok(RepairOutcome {
        controls: controls_of(&trajectory),
        robustness: outer_rho(&trajectory, phi, 0, &classical, &scenario.regions)?,
        verdict: Verdict::Fail,
        clause_tasks: clause.map_or_else(Vec::new, |k| dnf.clauses[k].iter().map(|t| t.to_string()).collect()),
        clause,
        clauses_tried: tried,
        flagged,
        syntheses,
        trajectory,
    })
}

fn flagged_ids(state: &RepairState) -> Vec<usize> {
    (0..state.flags.len())
        .filter(|&j| state.flags[j])
        .map(|j| state.team.member(j).id)
        .collect()
}

/// Runs the assignment and re-planning steps for one clause, starting from
/// `original`. Returns `None` when some flagged agent could not be repaired.
pub fn repair_clause(
    original: &TeamTrajectory,
    clause: &[TimedTask],
    k: usize,
    scenario: &Scenario,
    config: &RepairConfig,
    log: &mut Vec<SynthesisLog>,
) -> Result<Option<RepairState>> {
    let n = original.len();
    let mut st = RepairState {
        assignments: vec![BTreeSet::new(); n],
        flags: vec![false; n],
        clause: k,
        team: original.clone(),
        repaired: Vec::new(),
    };
    let classical = RobustnessConfig::classical();

    for (i, tt) in clause.iter().enumerate() {
        let task = &tt.task;
        if task_count(&st.team, tt, scenario)? > task.count {
            continue;
        }
        let agents = st.team.agents_with(&task.capability);
        let rho_all = inner_rho_all(&st.team, &task.inner, tt.time, &classical, &scenario.regions)?;
        let rho: Vec<f64> = agents.iter().map(|&j| rho_all[j]).collect();
        for pos in sort_desc(&rho).into_iter().take(task.count) {
            let j = agents[pos];
            st.assignments[j].insert(i);
            if !inner_sat(&st.team.member(j).trajectory, &task.inner, tt.time, &scenario.regions)? {
                st.flags[j] = true;
            }
        }
    }

    let flagged: Vec<usize> = {
        let mut v: Vec<usize> = (0..n).filter(|&j| st.flags[j]).collect();
        v.sort_by_key(|&j| st.team.member(j).id);
        v
    };
    let controls = controls_of(&st.team);
    for j in flagged {
        if !st.flags[j] {
            continue;
        }
        let formulas: Vec<(usize, InnerFormula)> = st.assignments[j]
            .iter()
            .map(|&i| (clause[i].time, clause[i].task.inner.clone()))
            .collect();
        let agent = &scenario.agents[j];
        let mut synth_cfg = config.synthesis;
        synth_cfg.seed = synth_cfg
            .seed
            .wrapping_mul(0x9E37_79B9_7F4A_7C15)
            .wrapping_add((k as u64) << 20 | agent.id as u64);
        let x0 = st.team.state(j, 0);
        let res = synthesize_conjunction(
            x0,
            scenario.horizon.min(st.team.horizon()),
            agent.u_max,
            &formulas,
            &scenario.regions,
            synth_cfg,
            Some(controls[j].clone()),
        )?;
        log.push(SynthesisLog {
            clause: k,
            agent: agent.id,
            formulas: formulas.iter().map(|(t, f)| format!("F[{t},{t}] {f}")).collect(),
            robustness: res.robustness,
            success: res.success,
        });
        if !res.success {
            return Ok(None);
        }
        let mut traj = res.trajectory;
        if traj.states.len() != st.team.horizon() + 1 {
            return Err(CatlError::Trajectory("synthesized trajectory has the wrong length".into()));
        }
        traj.controls = Some(res.controls);
        st.team.set_trajectory(j, traj)?;

        st.repaired.push(j);

        for (i, tt) in clause.iter().enumerate() {
            if task_count(&st.team, tt, scenario)? != tt.task.count {
                continue;
            }
            for a in st.team.agents_with(&tt.task.capability) {
                if inner_sat(&st.team.member(a).trajectory, &tt.task.inner, tt.time, &scenario.regions)? {
                    st.assignments[a].insert(i);
                } else {
                    st.assignments[a].remove(&i);
                }
            }
        }
        for a in 0..n {
            if st.flags[a] && st.assignments[a].is_empty() && !st.repaired.contains(&a) {
                st.flags[a] = false;
            }
        }
    }
    Ok(Some(st))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sort_desc_examples() {
        assert_eq!(sort_desc(&[0.5, 2.0, -1.0]), vec![1, 0, 2]);
        assert_eq!(sort_desc(&[1.0; 4]), vec![0, 1, 2, 3]);
        assert!(sort_desc(&[]).is_empty());
    }
}
