//! Qualitative semantics by direct recursion.

use crate::error::Result;
use crate::geometry::Region;
use crate::spec::{Formula, InnerFormula, OuterAtom, OuterFormula, Predicate, Task};

use super::trajectory::{IndividualTrajectory, TeamTrajectory};
use super::validate::{check_inner, check_outer, predicate_value};

fn sat<A>(f: &Formula<A>, t: usize, atom: &mut dyn FnMut(&A, usize) -> bool) -> bool {
    match f {
        Formula::True => true,
        Formula::Atom(a) => atom(a, t),
        Formula::Not(x) => !sat(x, t, atom),
        Formula::And(xs) => xs.iter().all(|x| sat(x, t, atom)),
        Formula::Or(xs) => xs.iter().any(|x| sat(x, t, atom)),
        Formula::Eventually(i, x) => (t + i.lo..=t + i.hi).any(|s| sat(x, s, atom)),
        Formula::Always(i, x) => (t + i.lo..=t + i.hi).all(|s| sat(x, s, atom)),
        Formula::Until(i, a, b) => (t + i.lo..=t + i.hi)
            .any(|s| sat(b, s, atom) && (t..s).all(|r| sat(a, r, atom))),
    }
}

fn inner_sat_unchecked(x: &IndividualTrajectory, phi: &InnerFormula, t: usize, regions: &[Region]) -> bool {
    sat(phi, t, &mut |p: &Predicate, s| predicate_value(p, x.states[s], regions) >= 0.0)
}

fn count_unchecked(team: &TeamTrajectory, task: &Task, t: usize, regions: &[Region]) -> usize {
    team.agents_with(&task.capability)
        .into_iter()
        .filter(|&j| inner_sat_unchecked(&team.member(j).trajectory, &task.inner, t, regions))
        .count()
}

/// Whether `(x, t)` satisfies `phi`; a predicate holds when its margin is `>= 0`.
pub fn inner_sat(x: &IndividualTrajectory, phi: &InnerFormula, t: usize, regions: &[Region]) -> Result<bool> {
    check_inner(phi, t, x.horizon(), regions)?;
    Ok(inner_sat_unchecked(x, phi, t, regions))
}

/// Number of agents with capability `cap` whose trajectories satisfy `phi` at `t`.
pub fn count(team: &TeamTrajectory, cap: &str, phi: &InnerFormula, t: usize, regions: &[Region]) -> Result<usize> {
    check_inner(phi, t, team.horizon(), regions)?;
    let task = Task {
        inner: phi.clone(),
        capability: cap.to_string(),
        count: 1,
    };
    Ok(count_unchecked(team, &task, t, regions))
}

pub fn outer_sat(team: &TeamTrajectory, phi: &OuterFormula, t: usize, regions: &[Region]) -> Result<bool> {
    check_outer(phi, t, team, regions)?;
    Ok(sat(phi, t, &mut |a: &OuterAtom, s| match a {
        OuterAtom::Task(task) => count_unchecked(team, task, s, regions) >= task.count,
        OuterAtom::Timed(tt) => count_unchecked(team, &tt.task, s + tt.time, regions) >= tt.task.count,
    }))
}
