//! Matching agents with identical capabilities to dataset trajectories.

use pathfinding::kuhn_munkres::kuhn_munkres_min;
use pathfinding::matrix::Matrix;

use crate::error::{CatlError, Result};
use crate::monitor::TeamTrajectory;

/// Integer resolution of the scaled costs handed to the solver.
const RESOLUTION: f64 = 1e12;

/// Square assignment minimizing the total cost; `out[r]` is the column of row `r`.
pub fn min_cost_assignment(cost: &[Vec<f64>]) -> Vec<usize> {
    let n = cost.len();
    if n == 0 {
        return Vec::new();
    }
    let top = cost.iter().flatten().fold(0.0f64, |m, &c| m.max(c.abs()));
    let scale = if top > 0.0 { RESOLUTION / top } else { 0.0 };
    let m = Matrix::from_rows(cost.iter().map(|row| row.iter().map(|&c| (c * scale).round() as i64).collect::<Vec<_>>()))
        .expect("square cost matrix");
    kuhn_munkres_min(&m).1
}

/// Groups of member indices sharing a capability set, in first-seen order.
pub fn identical_groups(team: &TeamTrajectory) -> Vec<Vec<usize>> {
    let mut groups: Vec<Vec<usize>> = Vec::new();
    for j in 0..team.len() {
        let caps = &team.member(j).capabilities;
        match groups.iter_mut().find(|g| &team.member(g[0]).capabilities == caps) {
            Some(g) => g.push(j),
            None => groups.push(vec![j]),
        }
    }
    groups
}

/// Permutation `p` with `p[j]` the dataset member matched to rollout member
/// `j`, minimizing the summed squared distance within each group.
pub fn match_identical_agents(rollout: &TeamTrajectory, dataset: &TeamTrajectory) -> Result<Vec<usize>> {
    if rollout.len() != dataset.len()
        || rollout
            .members()
            .iter()
            .zip(dataset.members())
            .any(|(a, b)| a.capabilities != b.capabilities)
    {
        return Err(CatlError::Trajectory("rosters differ".into()));
    }
    let own: Vec<Vec<[f64; 2]>> = rollout.members().iter().map(|m| m.trajectory.states.clone()).collect();
    match_states(&own, dataset, &identical_groups(rollout))
}

pub(crate) fn match_states(own: &[Vec<[f64; 2]>], dataset: &TeamTrajectory, groups: &[Vec<usize>]) -> Result<Vec<usize>> {
    let h = dataset.horizon();
    if own.len() != dataset.len() || own.iter().any(|s| s.len() != h + 1) {
        return Err(CatlError::Trajectory("trajectory shapes differ".into()));
    }
    let mut perm: Vec<usize> = (0..own.len()).collect();
    for g in groups {
        if g.len() < 2 {
            continue;
        }
        let cost: Vec<Vec<f64>> = g
            .iter()
            .map(|&a| {
                g.iter()
                    .map(|&d| {
                        own[a]
                            .iter()
                            .zip(&dataset.member(d).trajectory.states)
                            .map(|(x, y)| (x[0] - y[0]).powi(2) + (x[1] - y[1]).powi(2))
                            .sum()
                    })
                    .collect()
            })
            .collect();
        for (k, col) in min_cost_assignment(&cost).into_iter().enumerate() {
            perm[g[k]] = g[col];
        }
    }
    Ok(perm)
}
