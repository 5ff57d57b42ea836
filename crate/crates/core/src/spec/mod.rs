//! Syntax of the two-layer logic: inner formulas over one agent and outer
//! formulas whose atoms count agents with a given capability.

mod ast;
mod parser;

pub use ast::{
    AtomHorizon, Formula, InnerFormula, Interval, OuterAtom, OuterFormula, Predicate, Task, TimedTask,
};
pub use parser::{parse_inner, parse_spec, parse_spec_checked};

use crate::error::{CatlError, Result};

/// Indicator vector of `caps` over the ordered `vocabulary`.
pub fn capability_vector<S: AsRef<str>>(caps: &[S], vocabulary: &[String]) -> Result<Vec<f64>> {
    let mut v = vec![0.0; vocabulary.len()];
    for c in caps {
        let c = c.as_ref();
        let i = vocabulary
            .iter()
            .position(|x| x == c)
            .ok_or_else(|| CatlError::UnknownCapability(c.to_string()))?;
        v[i] = 1.0;
    }
    Ok(v)
}
