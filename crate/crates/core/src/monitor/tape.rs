//! Differentiable robustness over batched states recorded on a tape.

use std::collections::HashMap;

use catl_neural::{Tape, Tensor, Var};

use crate::geometry::Region;
use crate::geometry::find_region;
use crate::spec::{InnerFormula, OuterFormula, Predicate};

use super::robust::{inner_signal, outer_signal, Algebra, RobustnessConfig, Smoothing, TeamSemantics};

/// Team states as tape variables: `states[j][t]` is a `B x 2` batch of
/// positions of member `j` at time `t`. Robustness values are `B x 1`.
pub struct TapeSemantics<'a> {
    pub tape: &'a mut Tape,
    states: &'a [Vec<Var>],
    capabilities: Vec<Vec<String>>,
    regions: &'a [Region],
    config: RobustnessConfig,
    top: Option<Var>,
    cache: HashMap<(usize, usize, usize), Var>,
}

impl<'a> TapeSemantics<'a> {
    pub fn new(
        tape: &'a mut Tape,
        states: &'a [Vec<Var>],
        capabilities: Vec<Vec<String>>,
        regions: &'a [Region],
        config: RobustnessConfig,
    ) -> Self {
        assert_eq!(states.len(), capabilities.len(), "one capability set per member");
        TapeSemantics {
            tape,
            states,
            capabilities,
            regions,
            config,
            top: None,
            cache: HashMap::new(),
        }
    }

    fn rows(&self) -> usize {
        self.tape.shape(self.states[0][0])[0]
    }

    /// Outer robustness at `t`, as a `B x 1` variable.
    ///
    /// The caller is responsible for validating `phi` against the team.
    pub fn outer(&mut self, phi: &OuterFormula, t: usize) -> Var {
        outer_signal(self, phi, t, 1)[0]
    }

    pub fn inner(&mut self, agent: usize, phi: &InnerFormula, t: usize) -> Var {
        inner_signal(self, agent, phi, t, 1)[0]
    }
}

impl Algebra for TapeSemantics<'_> {
    type V = Var;

    fn top(&mut self) -> Var {
        if let Some(v) = self.top {
            return v;
        }
        let v = self.tape.constant(Tensor::filled(self.rows(), 1, self.config.top));
        self.top = Some(v);
        v
    }

    fn neg(&mut self, v: Var) -> Var {
        self.tape.neg(v)
    }

    fn min(&mut self, vs: &[Var]) -> Var {
        match self.config.smoothing {
            Smoothing::Classical => self.tape.min_list(vs),
            Smoothing::Smooth { tau } => self.tape.softmin_list(vs, tau),
        }
    }

    fn max(&mut self, vs: &[Var]) -> Var {
        match self.config.smoothing {
            Smoothing::Classical => self.tape.max_list(vs),
            Smoothing::Smooth { tau } => self.tape.softmax_list(vs, tau),
        }
    }

    fn kth_largest(&mut self, vs: &[Var], k: usize) -> Var {
        self.tape.kth_largest(vs, k)
    }
}

impl TeamSemantics for TapeSemantics<'_> {
    fn predicate(&mut self, agent: usize, t: usize, p: &Predicate) -> Var {
        let key = (agent, t, p as *const Predicate as usize);
        if let Some(&v) = self.cache.get(&key) {
            return v;
        }
        let x = self.states[agent][t];
        let v = match p {
            Predicate::InRegion(name) => {
                let region = find_region(self.regions, name).expect("regions are validated before evaluation");
                self.tape.rect_union_margin(x, region.raw_rects())
            }
            Predicate::HalfPlane { normal, offset } => {
                let n = self.tape.constant(Tensor::column(normal));
                let d = self.tape.matmul(x, n);
                self.tape.add_scalar(d, -offset)
            }
        };
        self.cache.insert(key, v);
        v
    }

    fn agents_with(&self, cap: &str) -> Vec<usize> {
        (0..self.capabilities.len())
            .filter(|&j| self.capabilities[j].iter().any(|c| c == cap))
            .collect()
    }
}
