use crate::error::{CatlError, Result};
use crate::geometry::{find_region, Region};
use crate::spec::{InnerFormula, OuterFormula, Predicate};

use super::trajectory::TeamTrajectory;

pub(crate) fn predicate_value(p: &Predicate, x: [f64; 2], regions: &[Region]) -> f64 {
    match p {
        Predicate::InRegion(name) => find_region(regions, name)
            .expect("regions are validated before evaluation")
            .margin(x),
        Predicate::HalfPlane { normal, offset } => normal[0] * x[0] + normal[1] * x[1] - offset,
    }
}

pub(crate) fn check_regions(phi: &InnerFormula, regions: &[Region]) -> Result<()> {
    for name in phi.regions() {
        if find_region(regions, name).is_none() {
            return Err(CatlError::UnknownRegion(name.to_string()));
        }
    }
    Ok(())
}

pub(crate) fn check_span(needed_last: usize, available_last: usize) -> Result<()> {
    if needed_last > available_last {
        return Err(CatlError::TrajectoryTooShort {
            needed: needed_last + 1,
            available: available_last + 1,
        });
    }
    Ok(())
}

pub(crate) fn check_inner(phi: &InnerFormula, t: usize, last: usize, regions: &[Region]) -> Result<()> {
    check_regions(phi, regions)?;
    check_span(t + phi.horizon(), last)
}

/// Checks regions, task counts and trajectory length for evaluating `phi` at `t`.
pub(crate) fn check_outer(phi: &OuterFormula, t: usize, team: &TeamTrajectory, regions: &[Region]) -> Result<()> {
    for task in phi.tasks() {
        check_regions(&task.inner, regions)?;
        let available = team.agents_with(&task.capability).len();
        if task.count > available {
            return Err(CatlError::TaskCountExceeds {
                capability: task.capability.clone(),
                count: task.count,
                available,
            });
        }
    }
    check_span(t + phi.horizon(), team.horizon())
}
