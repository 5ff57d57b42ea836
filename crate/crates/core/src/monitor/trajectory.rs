use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::error::{CatlError, Result};

/// States `x(0..=H)` of one agent, with the controls that produced them
/// when known.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndividualTrajectory {
    pub states: Vec<[f64; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub controls: Option<Vec<[f64; 2]>>,
}

impl IndividualTrajectory {
    pub fn from_states(states: Vec<[f64; 2]>) -> Self {
        IndividualTrajectory {
            states,
            controls: None,
        }
    }

    /// Integrates `x(t+1) = x(t) + u(t)` from `x0`.
    pub fn from_controls(x0: [f64; 2], controls: Vec<[f64; 2]>) -> Self {
        let mut states = Vec::with_capacity(controls.len() + 1);
        states.push(x0);
        for u in &controls {
            let x = states[states.len() - 1];
            states.push([x[0] + u[0], x[1] + u[1]]);
        }
        IndividualTrajectory {
            states,
            controls: Some(controls),
        }
    }

    pub fn constant(x: [f64; 2], horizon: usize) -> Self {
        Self::from_controls(x, vec![[0.0; 2]; horizon])
    }

    /// Last time index `H`.
    pub fn horizon(&self) -> usize {
        self.states.len().saturating_sub(1)
    }

    pub fn check_dynamics(&self, tol: f64) -> Result<()> {
        let Some(us) = &self.controls else { return Ok(()) };
        if us.len() + 1 != self.states.len() {
            return Err(CatlError::Trajectory(format!(
                "{} controls for {} states",
                us.len(),
                self.states.len()
            )));
        }
        for (t, u) in us.iter().enumerate() {
            let (a, b) = (self.states[t], self.states[t + 1]);
            if (0..2).any(|k| (a[k] + u[k] - b[k]).abs() > tol) {
                return Err(CatlError::Trajectory(format!("dynamics violated at t={t}")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentTrajectory {
    pub id: usize,
    pub capabilities: BTreeSet<String>,
    #[serde(flatten)]
    pub trajectory: IndividualTrajectory,
}

/// Trajectories of a whole team, all of the same length.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "TeamRepr", into = "TeamRepr")]
pub struct TeamTrajectory {
    members: Vec<AgentTrajectory>,
}

#[derive(Serialize, Deserialize)]
struct TeamRepr {
    agents: Vec<AgentTrajectory>,
}

impl TryFrom<TeamRepr> for TeamTrajectory {
    type Error = CatlError;

    fn try_from(r: TeamRepr) -> Result<Self> {
        TeamTrajectory::new(r.agents)
    }
}

impl From<TeamTrajectory> for TeamRepr {
    fn from(t: TeamTrajectory) -> Self {
        TeamRepr { agents: t.members }
    }
}

impl TeamTrajectory {
    pub fn new(members: Vec<AgentTrajectory>) -> Result<Self> {
        if let Some(first) = members.first() {
            let len = first.trajectory.states.len();
            if len == 0 {
                return Err(CatlError::Trajectory("empty trajectory".into()));
            }
            if members.iter().any(|m| m.trajectory.states.len() != len) {
                return Err(CatlError::Trajectory("members differ in length".into()));
            }
        }
        let ids: BTreeSet<usize> = members.iter().map(|m| m.id).collect();
        if ids.len() != members.len() {
            return Err(CatlError::Trajectory("duplicate agent id".into()));
        }
        Ok(TeamTrajectory { members })
    }

    pub fn members(&self) -> &[AgentTrajectory] {
        &self.members
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn member(&self, j: usize) -> &AgentTrajectory {
        &self.members[j]
    }

    /// Replaces the trajectory of the member at position `j`.
    pub fn set_trajectory(&mut self, j: usize, traj: IndividualTrajectory) -> Result<()> {
        if traj.states.len() != self.members[j].trajectory.states.len() {
            return Err(CatlError::Trajectory("replacement differs in length".into()));
        }
        self.members[j].trajectory = traj;
        Ok(())
    }

    /// Last time index `H`, or 0 for an empty team.
    pub fn horizon(&self) -> usize {
        self.members.first().map_or(0, |m| m.trajectory.horizon())
    }

    /// Member positions whose capability set contains `cap`.
    pub fn agents_with(&self, cap: &str) -> Vec<usize> {
        (0..self.members.len())
            .filter(|&j| self.members[j].capabilities.contains(cap))
            .collect()
    }

    pub fn capability_counts(&self) -> BTreeMap<String, usize> {
        let mut out = BTreeMap::new();
        for m in &self.members {
            for c in &m.capabilities {
                *out.entry(c.clone()).or_insert(0) += 1;
            }
        }
        out
    }

    pub fn state(&self, j: usize, t: usize) -> [f64; 2] {
        self.members[j].trajectory.states[t]
    }
}
