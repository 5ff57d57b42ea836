use rand::Rng;

use crate::tape::{Gradients, Tape, Var};
use crate::tensor::Tensor;

/// Index of a parameter block inside a [`ParamSet`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(pub(crate) usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParamBlock {
    pub name: String,
    pub value: Tensor,
}

/// Ordered collection of named parameter tensors.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParamSet {
    blocks: Vec<ParamBlock>,
}

impl ParamSet {
    pub fn new() -> Self {
        ParamSet { blocks: Vec::new() }
    }

    pub fn add(&mut self, name: impl Into<String>, value: Tensor) -> ParamId {
        let name = name.into();
        assert!(self.find(&name).is_none(), "duplicate parameter block {name}");
        self.blocks.push(ParamBlock { name, value });
        ParamId(self.blocks.len() - 1)
    }

    /// Weight matrix `fan_in x fan_out` drawn from `U(-1/sqrt(fan_in), 1/sqrt(fan_in))`.
    pub fn add_weight(
        &mut self,
        name: impl Into<String>,
        fan_in: usize,
        fan_out: usize,
        rng: &mut impl Rng,
    ) -> ParamId {
        let bound = 1.0 / (fan_in as f64).sqrt();
        let data = (0..fan_in * fan_out)
            .map(|_| rng.gen_range(-bound..=bound))
            .collect();
        self.add(name, Tensor::from_vec(fan_in, fan_out, data))
    }

    pub fn add_bias(&mut self, name: impl Into<String>, width: usize) -> ParamId {
        self.add(name, Tensor::zeros(1, width))
    }

    pub fn find(&self, name: &str) -> Option<ParamId> {
        self.blocks.iter().position(|b| b.name == name).map(ParamId)
    }

    pub fn get(&self, id: ParamId) -> &Tensor {
        &self.blocks[id.0].value
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Tensor {
        &mut self.blocks[id.0].value
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.blocks[id.0].name
    }

    pub fn len(&self) -> usize {
        self.blocks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.blocks.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.blocks.len()).map(ParamId)
    }

    pub fn blocks(&self) -> &[ParamBlock] {
        &self.blocks
    }

    /// Total number of scalars.
    pub fn num_scalars(&self) -> usize {
        self.blocks.iter().map(|b| b.value.len()).sum()
    }

    /// Sets every scalar to zero.
    pub fn zero_all(&mut self) {
        for b in &mut self.blocks {
            b.value.data_mut().fill(0.0);
        }
    }

    /// Puts every block on `tape`. Blocks for which `trainable` is false are
    /// recorded as constants.
    pub fn bind(&self, tape: &mut Tape, trainable: impl Fn(ParamId) -> bool) -> BoundParams {
        let vars = self
            .ids()
            .map(|id| {
                let v = self.get(id).clone();
                if trainable(id) {
                    tape.leaf(v)
                } else {
                    tape.constant(v)
                }
            })
            .collect();
        BoundParams { vars }
    }
}

/// Parameter blocks recorded on a particular tape.
#[derive(Debug, Clone)]
pub struct BoundParams {
    vars: Vec<Var>,
}

impl BoundParams {
    pub fn var(&self, id: ParamId) -> Var {
        self.vars[id.0]
    }

    /// Per-block gradients in block order; `None` where nothing flowed.
    pub fn collect_grads(&self, grads: &mut Gradients) -> Vec<Option<Tensor>> {
        self.vars.iter().map(|&v| grads.take(v)).collect()
    }
}
