//! Trajectory files.
//!
//! CSV rows are `t,agent,x0,x1[,u0,u1]`, with `agent` the agent id and the
//! control columns empty on the final step. Capability sets live in a
//! sidecar JSON `{"agents": [{"id": 1, "capabilities": [..]}]}`. The single
//! file JSON form is `{"agents": [{"id", "capabilities", "states", "controls"?}]}`.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{CatlError, Result};

use super::trajectory::{AgentTrajectory, IndividualTrajectory, TeamTrajectory};

#[derive(Debug, Serialize, Deserialize)]
struct Row {
    t: usize,
    agent: usize,
    x0: f64,
    x1: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    u0: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    u1: Option<f64>,
}

#[derive(Debug, Serialize, Deserialize)]
struct Sidecar {
    agents: Vec<SidecarAgent>,
}

#[derive(Debug, Serialize, Deserialize)]
struct SidecarAgent {
    id: usize,
    capabilities: BTreeSet<String>,
}

/// Sidecar path used next to a CSV trajectory: `run.csv` → `run.agents.json`.
pub fn sidecar_path(csv: &Path) -> PathBuf {
    csv.with_extension("agents.json")
}

pub fn to_csv_string(team: &TeamTrajectory) -> Result<String> {
    let with_controls = team.members().iter().all(|m| m.trajectory.controls.is_some()) && !team.is_empty();
    let mut w = csv::Writer::from_writer(Vec::new());
    if with_controls {
        w.write_record(["t", "agent", "x0", "x1", "u0", "u1"])?;
    } else {
        w.write_record(["t", "agent", "x0", "x1"])?;
    }
    for t in 0..=team.horizon() {
        for m in team.members() {
            let x = m.trajectory.states[t];
            let mut rec = vec![t.to_string(), m.id.to_string(), x[0].to_string(), x[1].to_string()];
            if with_controls {
                let us = m.trajectory.controls.as_ref().expect("checked above");
                match us.get(t) {
                    Some(u) => rec.extend([u[0].to_string(), u[1].to_string()]),
                    None => rec.extend([String::new(), String::new()]),
                }
            }
            w.write_record(&rec)?;
        }
    }
    let bytes = w.into_inner().map_err(|e| CatlError::Io(e.into_error()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

pub fn sidecar_string(team: &TeamTrajectory) -> String {
    let side = Sidecar {
        agents: team
            .members()
            .iter()
            .map(|m| SidecarAgent {
                id: m.id,
                capabilities: m.capabilities.clone(),
            })
            .collect(),
    };
    serde_json::to_string_pretty(&side).expect("sidecar serializes")
}

pub fn from_csv_str(csv_text: &str, sidecar_json: &str) -> Result<TeamTrajectory> {
    let side: Sidecar = serde_json::from_str(sidecar_json)?;
    let mut rows: BTreeMap<usize, BTreeMap<usize, Row>> = BTreeMap::new();
    let mut r = csv::Reader::from_reader(csv_text.as_bytes());
    for row in r.deserialize() {
        let row: Row = row?;
        let (agent, t) = (row.agent, row.t);
        if rows.entry(agent).or_default().insert(t, row).is_some() {
            return Err(CatlError::Trajectory(format!("duplicate row t={t} agent={agent}")));
        }
    }
    let mut members = Vec::new();
    for a in side.agents {
        let steps = rows
            .remove(&a.id)
            .ok_or_else(|| CatlError::Trajectory(format!("no rows for agent {}", a.id)))?;
        if steps.keys().copied().ne(0..steps.len()) {
            return Err(CatlError::Trajectory(format!("agent {} has gaps in t", a.id)));
        }
        let states: Vec<[f64; 2]> = steps.values().map(|r| [r.x0, r.x1]).collect();
        let n = states.len();
        let us: Vec<Option<[f64; 2]>> = steps
            .values()
            .take(n.saturating_sub(1))
            .map(|r| r.u0.zip(r.u1).map(|(a, b)| [a, b]))
            .collect();
        let controls = if n > 1 && us.iter().all(Option::is_some) {
            Some(us.into_iter().map(|u| u.expect("checked")).collect())
        } else {
            None
        };
        members.push(AgentTrajectory {
            id: a.id,
            capabilities: a.capabilities,
            trajectory: IndividualTrajectory { states, controls },
        });
    }
    if let Some(id) = rows.keys().next() {
        return Err(CatlError::Trajectory(format!("agent {id} is missing from the sidecar")));
    }
    TeamTrajectory::new(members)
}

pub fn to_json_string(team: &TeamTrajectory) -> String {
    serde_json::to_string_pretty(team).expect("team serializes")
}

pub fn from_json_str(text: &str) -> Result<TeamTrajectory> {
    Ok(serde_json::from_str(text)?)
}

/// Reads `.json` as the single-file form and anything else as CSV plus sidecar.
pub fn load(path: &Path) -> Result<TeamTrajectory> {
    let text = std::fs::read_to_string(path)?;
    if path.extension().is_some_and(|e| e == "json") {
        from_json_str(&text)
    } else {
        let side = std::fs::read_to_string(sidecar_path(path))?;
        from_csv_str(&text, &side)
    }
}

/// Writes `.json` as the single-file form and anything else as CSV plus sidecar.
pub fn save(team: &TeamTrajectory, path: &Path) -> Result<()> {
    if path.extension().is_some_and(|e| e == "json") {
        std::fs::write(path, to_json_string(team))?;
    } else {
        std::fs::write(path, to_csv_string(team)?)?;
        std::fs::write(sidecar_path(path), sidecar_string(team))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn team() -> TeamTrajectory {
        TeamTrajectory::new(vec![
            AgentTrajectory {
                id: 3,
                capabilities: ["A".to_string()].into(),
                trajectory: IndividualTrajectory::from_controls([0.1, 0.2], vec![[1.0, -0.5], [0.25, 0.0]]),
            },
            AgentTrajectory {
                id: 7,
                capabilities: ["A".to_string(), "B".to_string()].into(),
                trajectory: IndividualTrajectory::from_controls([1.0 / 3.0, 2.0], vec![[0.0, 0.0], [-1.0, 1.0]]),
            },
        ])
        .unwrap()
    }

    #[test]
    fn csv_round_trip_is_exact() {
        let t = team();
        let back = from_csv_str(&to_csv_string(&t).unwrap(), &sidecar_string(&t)).unwrap();
        assert_eq!(back, t);
    }

    #[test]
    fn json_round_trip_is_exact() {
        let t = team();
        assert_eq!(from_json_str(&to_json_string(&t)).unwrap(), t);
    }

    #[test]
    fn states_only_csv() {
        let csv = "t,agent,x0,x1\n0,1,0,0\n1,1,1,0\n";
        let side = r#"{"agents":[{"id":1,"capabilities":["A"]}]}"#;
        let t = from_csv_str(csv, side).unwrap();
        assert_eq!(t.member(0).trajectory.states, vec![[0.0, 0.0], [1.0, 0.0]]);
        assert!(t.member(0).trajectory.controls.is_none());
        assert!(from_csv_str("t,agent,x0,x1\n0,1,0,0\n2,1,1,0\n", side).is_err());
    }
}
