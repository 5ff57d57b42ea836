//! Dense layers, the gated recurrent cell and the bidirectional scan.

use rand::Rng;

use crate::params::{BoundParams, ParamId, ParamSet};
use crate::tape::{Tape, Var};
use crate::tensor::Tensor;
use crate::NeuralError;

/// Affine map `x W + b` on `rows x in` inputs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Dense {
    pub w: ParamId,
    pub b: ParamId,
    pub input_dim: usize,
    pub output_dim: usize,
}

impl Dense {
    pub fn new(
        params: &mut ParamSet,
        name: &str,
        input_dim: usize,
        output_dim: usize,
        rng: &mut impl Rng,
    ) -> Self {
        let w = params.add_weight(format!("{name}.w"), input_dim, output_dim, rng);
        let b = params.add_bias(format!("{name}.b"), output_dim);
        Dense {
            w,
            b,
            input_dim,
            output_dim,
        }
    }

    pub fn forward(&self, tape: &mut Tape, p: &BoundParams, x: Var) -> Var {
        let xw = tape.matmul(x, p.var(self.w));
        tape.add_row(xw, p.var(self.b))
    }
}

/// Two dense layers with a `tanh` hidden activation and a linear output.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Mlp {
    pub hidden: Dense,
    pub out: Dense,
}

impl Mlp {
    pub fn new(
        params: &mut ParamSet,
        name: &str,
        input_dim: usize,
        hidden_dim: usize,
        output_dim: usize,
        rng: &mut impl Rng,
    ) -> Self {
        Mlp {
            hidden: Dense::new(params, &format!("{name}.0"), input_dim, hidden_dim, rng),
            out: Dense::new(params, &format!("{name}.1"), hidden_dim, output_dim, rng),
        }
    }

    pub fn forward(&self, tape: &mut Tape, p: &BoundParams, x: Var) -> Var {
        let h = self.hidden.forward(tape, p, x);
        let h = tape.tanh(h);
        self.out.forward(tape, p, h)
    }

    pub fn params(&self) -> [ParamId; 4] {
        [self.hidden.w, self.hidden.b, self.out.w, self.out.b]
    }
}

/// Hidden and cell state of a recurrent cell, each `rows x hidden`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LstmState {
    pub h: Var,
    pub c: Var,
}

impl LstmState {
    pub fn zeros(tape: &mut Tape, rows: usize, hidden: usize) -> Self {
        let h = tape.constant(Tensor::zeros(rows, hidden));
        let c = tape.constant(Tensor::zeros(rows, hidden));
        LstmState { h, c }
    }
}

/// Long short-term memory cell.
///
/// One weight matrix `(input + hidden) x 4*hidden` holds the input, forget,
/// candidate and output gates in that column order.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LstmCell {
    pub w: ParamId,
    pub b: ParamId,
    pub input_dim: usize,
    pub hidden_dim: usize,
}

impl LstmCell {
    pub fn new(
        params: &mut ParamSet,
        name: &str,
        input_dim: usize,
        hidden_dim: usize,
        rng: &mut impl Rng,
    ) -> Self {
        let w = params.add_weight(
            format!("{name}.w"),
            input_dim + hidden_dim,
            4 * hidden_dim,
            rng,
        );
        let b = params.add_bias(format!("{name}.b"), 4 * hidden_dim);
        LstmCell {
            w,
            b,
            input_dim,
            hidden_dim,
        }
    }

    pub fn params(&self) -> [ParamId; 2] {
        [self.w, self.b]
    }

    pub fn step(
        &self,
        tape: &mut Tape,
        p: &BoundParams,
        x: Var,
        state: LstmState,
    ) -> Result<LstmState, NeuralError> {
        let [rows, xin] = tape.shape(x);
        let [hr, hd] = tape.shape(state.h);
        if xin != self.input_dim || hd != self.hidden_dim || hr != rows {
            return Err(NeuralError::Shape(format!(
                "lstm step: input {rows}x{xin}, hidden {hr}x{hd}, cell expects {}->{}",
                self.input_dim, self.hidden_dim
            )));
        }
        let n = self.hidden_dim;
        let xh = tape.concat_cols(&[x, state.h]);
        let z = tape.matmul(xh, p.var(self.w));
        let z = tape.add_row(z, p.var(self.b));
        let zi = tape.slice_cols(z, 0, n);
        let zf = tape.slice_cols(z, n, n);
        let zg = tape.slice_cols(z, 2 * n, n);
        let zo = tape.slice_cols(z, 3 * n, n);
        let i = tape.sigmoid(zi);
        let f = tape.sigmoid(zf);
        let g = tape.tanh(zg);
        let o = tape.sigmoid(zo);
        let fc = tape.mul(f, state.c);
        let ig = tape.mul(i, g);
        let c = tape.add(fc, ig);
        let tc = tape.tanh(c);
        let h = tape.mul(o, tc);
        Ok(LstmState { h, c })
    }
}

/// Participation of one sequence position in a masked scan.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Participation {
    /// Every batch row takes part.
    All,
    /// No batch row takes part; the position is skipped.
    Skip,
    /// `rows x 1` constant of zeros and ones selecting the participating rows.
    Rows(Var),
}

/// Runs `fwd` left-to-right and `bwd` right-to-left over `inputs` and sums
/// the two directional hidden states at each position.
pub fn bidirectional_scan(
    tape: &mut Tape,
    p: &BoundParams,
    fwd: &LstmCell,
    bwd: &LstmCell,
    inputs: &[Var],
) -> Result<Vec<Var>, NeuralError> {
    let mask = vec![Participation::All; inputs.len()];
    let out = masked_bidirectional_scan(tape, p, fwd, bwd, inputs, &mask)?;
    Ok(out.into_iter().map(|o| o.expect("all positions participate")).collect())
}

/// Bidirectional scan in which each position may be absent for some or all
/// batch rows. An absent position leaves the running state untouched in
/// both directions, which is the same as deleting it from that row's
/// sequence. Returns `None` for fully skipped positions and zeroes the
/// output rows of partially absent ones.
pub fn masked_bidirectional_scan(
    tape: &mut Tape,
    p: &BoundParams,
    fwd: &LstmCell,
    bwd: &LstmCell,
    inputs: &[Var],
    mask: &[Participation],
) -> Result<Vec<Option<Var>>, NeuralError> {
    if inputs.is_empty() {
        return Err(NeuralError::EmptySequence);
    }
    assert_eq!(inputs.len(), mask.len(), "one participation entry per input");
    let rows = tape.shape(inputs[0])[0];
    let forward = directional(tape, p, fwd, inputs, mask, rows, false)?;
    let backward = directional(tape, p, bwd, inputs, mask, rows, true)?;
    let mut out = Vec::with_capacity(inputs.len());
    for ((f, b), m) in forward.into_iter().zip(backward).zip(mask) {
        out.push(match (f, b, m) {
            (Some(f), Some(b), Participation::All) => Some(tape.add(f, b)),
            (Some(f), Some(b), Participation::Rows(col)) => {
                let s = tape.add(f, b);
                Some(tape.mul_col(s, *col))
            }
            _ => None,
        });
    }
    Ok(out)
}

fn directional(
    tape: &mut Tape,
    p: &BoundParams,
    cell: &LstmCell,
    inputs: &[Var],
    mask: &[Participation],
    rows: usize,
    reverse: bool,
) -> Result<Vec<Option<Var>>, NeuralError> {
    let mut state = LstmState::zeros(tape, rows, cell.hidden_dim);
    let mut out = vec![None; inputs.len()];
    let order: Vec<usize> = if reverse {
        (0..inputs.len()).rev().collect()
    } else {
        (0..inputs.len()).collect()
    };
    for i in order {
        match mask[i] {
            Participation::Skip => {}
            Participation::All => {
                state = cell.step(tape, p, inputs[i], state)?;
                out[i] = Some(state.h);
            }
            Participation::Rows(m) => {
                let cand = cell.step(tape, p, inputs[i], state)?;
                state = LstmState {
                    h: blend(tape, m, cand.h, state.h),
                    c: blend(tape, m, cand.c, state.c),
                };
                out[i] = Some(state.h);
            }
        }
    }
    Ok(out)
}

/// `prev + m * (next - prev)` row-wise.
fn blend(tape: &mut Tape, m: Var, next: Var, prev: Var) -> Var {
    let d = tape.sub(next, prev);
    let d = tape.mul_col(d, m);
    tape.add(prev, d)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn zero_cell_outputs_zero_hidden_state() {
        let mut params = ParamSet::new();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let cell = LstmCell::new(&mut params, "cell", 3, 4, &mut rng);
        params.zero_all();
        let mut tape = Tape::new();
        let p = params.bind(&mut tape, |_| true);
        let x = tape.constant(Tensor::from_rows(&[vec![0.3, -1.0, 2.0]]));
        let s0 = LstmState::zeros(&mut tape, 1, 4);
        let s1 = cell.step(&mut tape, &p, x, s0).unwrap();
        assert!(tape.value(s1.h).data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn zero_input_zero_bias_keeps_cell_state_zero() {
        let mut params = ParamSet::new();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let cell = LstmCell::new(&mut params, "cell", 2, 3, &mut rng);
        let mut tape = Tape::new();
        let p = params.bind(&mut tape, |_| true);
        let x = tape.constant(Tensor::zeros(1, 2));
        let s0 = LstmState::zeros(&mut tape, 1, 3);
        let s1 = cell.step(&mut tape, &p, x, s0).unwrap();
        assert!(tape.value(s1.c).data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn empty_sequence_is_rejected() {
        let mut params = ParamSet::new();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let f = LstmCell::new(&mut params, "f", 2, 2, &mut rng);
        let b = LstmCell::new(&mut params, "b", 2, 2, &mut rng);
        let mut tape = Tape::new();
        let p = params.bind(&mut tape, |_| true);
        assert!(matches!(
            bidirectional_scan(&mut tape, &p, &f, &b, &[]),
            Err(NeuralError::EmptySequence)
        ));
    }

    #[test]
    fn shape_mismatch_is_reported() {
        let mut params = ParamSet::new();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let cell = LstmCell::new(&mut params, "cell", 2, 3, &mut rng);
        let mut tape = Tape::new();
        let p = params.bind(&mut tape, |_| true);
        let x = tape.constant(Tensor::zeros(1, 5));
        let s0 = LstmState::zeros(&mut tape, 1, 3);
        assert!(matches!(cell.step(&mut tape, &p, x, s0), Err(NeuralError::Shape(_))));
    }
}
