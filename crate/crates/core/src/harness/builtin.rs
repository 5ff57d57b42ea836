//! Scenarios shipped with the crate.

use crate::error::Result;
use crate::spec::OuterFormula;

use super::scenario::Scenario;

fn load(scenario: &str, spec: &str) -> Result<(Scenario, OuterFormula)> {
    let s = Scenario::from_json(scenario)?;
    let phi = s.parse_spec(spec)?;
    Ok((s, phi))
}

/// Earthquake response: 4 ground and 2 aerial vehicles, six requirements, `H = 25`.
pub fn case_study() -> (Scenario, OuterFormula) {
    load(
        include_str!("../../scenarios/case_study.json"),
        include_str!("../../scenarios/case_study.catl"),
    )
    .expect("bundled case study is valid")
}

/// Two ground and two aerial vehicles with the pickup, delivery,
/// river-avoidance and map requirements only.
pub fn reduced_case_study() -> (Scenario, OuterFormula) {
    load(
        include_str!("../../scenarios/reduced.json"),
        include_str!("../../scenarios/reduced.catl"),
    )
    .expect("bundled reduced case study is valid")
}

/// One agent that must reach a goal while avoiding an obstacle.
pub fn toy() -> (Scenario, OuterFormula) {
    load(include_str!("../../scenarios/toy.json"), include_str!("../../scenarios/toy.catl"))
        .expect("bundled toy scenario is valid")
}

/// Three agents with overlapping capabilities, used to exercise repair.
pub fn repair_toy() -> (Scenario, OuterFormula) {
    load(
        include_str!("../../scenarios/repair_toy.json"),
        include_str!("../../scenarios/repair_toy.catl"),
    )
    .expect("bundled repair toy is valid")
}

/// Looks up a bundled scenario by name.
pub fn builtin(name: &str) -> Option<(Scenario, OuterFormula)> {
    match name {
        "case_study" => Some(case_study()),
        "reduced" => Some(reduced_case_study()),
        "toy" => Some(toy()),
        "repair_toy" => Some(repair_toy()),
        _ => None,
    }
}
