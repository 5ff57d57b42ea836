use std::collections::{BTreeMap, BTreeSet};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{CatlError, Result};
use crate::geometry::{find_region, Rect, Region};
use crate::monitor::{AgentTrajectory, IndividualTrajectory, TeamTrajectory};
use crate::spec::{parse_spec_checked, OuterFormula};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentSpec {
    pub id: usize,
    pub capabilities: BTreeSet<String>,
    /// Per-axis control bound: `|u_i| <= u_max_i`.
    pub u_max: [f64; 2],
    /// Region the initial state is drawn from, uniformly.
    pub init: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub workspace: Rect,
    pub regions: Vec<Region>,
    pub capabilities: Vec<String>,
    pub agents: Vec<AgentSpec>,
    pub horizon: usize,
}

impl Scenario {
    pub fn from_json(text: &str) -> Result<Self> {
        let s: Scenario = serde_json::from_str(text)?;
        s.validate()?;
        Ok(s)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("scenario serializes")
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(CatlError::Scenario(m));
        if self.agents.is_empty() {
            return bad("no agents".into());
        }
        let names: BTreeSet<&str> = self.regions.iter().map(|r| r.name.as_str()).collect();
        if names.len() != self.regions.len() {
            return bad("duplicate region name".into());
        }
        let vocab: BTreeSet<&str> = self.capabilities.iter().map(String::as_str).collect();
        if vocab.len() != self.capabilities.len() {
            return bad("duplicate capability".into());
        }
        let ids: BTreeSet<usize> = self.agents.iter().map(|a| a.id).collect();
        if ids.len() != self.agents.len() {
            return bad("duplicate agent id".into());
        }
        let mut used = BTreeSet::new();
        for a in &self.agents {
            if !(a.u_max[0] > 0.0 && a.u_max[1] > 0.0 && a.u_max.iter().all(|v| v.is_finite())) {
                return bad(format!("agent {}: control bounds must be positive", a.id));
            }
            if !names.contains(a.init.as_str()) {
                return bad(format!("agent {}: unknown initial region {}", a.id, a.init));
            }
            for c in &a.capabilities {
                if !vocab.contains(c.as_str()) {
                    return Err(CatlError::UnknownCapability(c.clone()));
                }
                used.insert(c.as_str());
            }
        }
        if used != vocab {
            return bad("every capability must belong to some agent".into());
        }
        let w = &self.workspace;
        if !(w.min[0] < w.max[0] && w.min[1] < w.max[1]) {
            return bad("empty workspace".into());
        }
        Ok(())
    }

    pub fn region(&self, name: &str) -> Result<&Region> {
        find_region(&self.regions, name).ok_or_else(|| CatlError::UnknownRegion(name.to_string()))
    }

    pub fn num_agents(&self) -> usize {
        self.agents.len()
    }

    pub fn capability_counts(&self) -> BTreeMap<String, usize> {
        let mut out: BTreeMap<String, usize> = self.capabilities.iter().map(|c| (c.clone(), 0)).collect();
        for a in &self.agents {
            for c in &a.capabilities {
                *out.get_mut(c).expect("validated") += 1;
            }
        }
        out
    }

    /// Positions of agents with identical capability sets, grouped.
    pub fn identical_groups(&self) -> Vec<Vec<usize>> {
        let mut groups: BTreeMap<&BTreeSet<String>, Vec<usize>> = BTreeMap::new();
        for (j, a) in self.agents.iter().enumerate() {
            groups.entry(&a.capabilities).or_default().push(j);
        }
        let mut out: Vec<Vec<usize>> = groups.into_values().collect();
        out.sort();
        out
    }

    /// Checks that `phi` only mentions known capabilities and regions,
    /// asks for no more agents than exist and fits in the horizon.
    pub fn bind(&self, phi: &OuterFormula) -> Result<()> {
        let counts = self.capability_counts();
        for task in phi.tasks() {
            let available = *counts
                .get(&task.capability)
                .ok_or_else(|| CatlError::UnknownCapability(task.capability.clone()))?;
            if task.count > available {
                return Err(CatlError::TaskCountExceeds {
                    capability: task.capability.clone(),
                    count: task.count,
                    available,
                });
            }
            for r in task.inner.regions() {
                self.region(r)?;
            }
        }
        if phi.horizon() > self.horizon {
            return Err(CatlError::Scenario(format!(
                "specification horizon {} exceeds scenario horizon {}",
                phi.horizon(),
                self.horizon
            )));
        }
        Ok(())
    }

    /// Parses and binds a specification.
    pub fn parse_spec(&self, text: &str) -> Result<OuterFormula> {
        let phi = parse_spec_checked(text, &self.capabilities)?;
        self.bind(&phi)?;
        Ok(phi)
    }

    /// One joint initial state, each agent uniform in its initial region.
    pub fn sample_initial(&self, rng: &mut impl Rng) -> Vec<[f64; 2]> {
        self.agents
            .iter()
            .map(|a| self.region(&a.init).expect("validated").sample(rng))
            .collect()
    }

    pub fn sample_initial_seeded(&self, seed: u64) -> Vec<[f64; 2]> {
        self.sample_initial(&mut ChaCha8Rng::seed_from_u64(seed))
    }

    /// Team trajectory generated by per-agent control sequences.
    pub fn team_from_controls(&self, x0: &[[f64; 2]], controls: Vec<Vec<[f64; 2]>>) -> Result<TeamTrajectory> {
        assert_eq!(x0.len(), self.agents.len());
        assert_eq!(controls.len(), self.agents.len());
        let members = self
            .agents
            .iter()
            .zip(x0)
            .zip(controls)
            .map(|((a, x), us)| AgentTrajectory {
                id: a.id,
                capabilities: a.capabilities.clone(),
                trajectory: IndividualTrajectory::from_controls(*x, us),
            })
            .collect();
        TeamTrajectory::new(members)
    }

    /// Every agent holding its initial position for the whole horizon.
    pub fn idle_team(&self, x0: &[[f64; 2]]) -> TeamTrajectory {
        let controls = vec![vec![[0.0; 2]; self.horizon]; self.agents.len()];
        self.team_from_controls(x0, controls).expect("consistent lengths")
    }

    /// Checks that a trajectory belongs to this roster.
    pub fn check_team(&self, team: &TeamTrajectory) -> Result<()> {
        if team.len() != self.agents.len()
            || team
                .members()
                .iter()
                .zip(&self.agents)
                .any(|(m, a)| m.id != a.id || m.capabilities != a.capabilities)
        {
            return Err(CatlError::Trajectory("trajectory roster does not match the scenario".into()));
        }
        Ok(())
    }

    /// Affine map taking the workspace to `[-1, 1]^2`: `(x - center) / half`.
    pub fn normalization(&self) -> ([f64; 2], [f64; 2]) {
        let w = &self.workspace;
        let c = w.center();
        (c, [0.5 * (w.max[0] - w.min[0]), 0.5 * (w.max[1] - w.min[1])])
    }

    /// Capability names of each agent, in roster order.
    pub fn capability_lists(&self) -> Vec<Vec<String>> {
        self.agents.iter().map(|a| a.capabilities.iter().cloned().collect()).collect()
    }

    /// Largest total control cost `sum_j sum_t ||u_j(t)||^2` over the control boxes.
    pub fn max_control_cost(&self) -> f64 {
        self.agents
            .iter()
            .map(|a| self.horizon as f64 * (a.u_max[0] * a.u_max[0] + a.u_max[1] * a.u_max[1]))
            .sum()
    }
}
