//! Central finite-difference gradients, used as an oracle for the tape.
//!
//! The difference quotients only ever look at forward values, so they are
//! independent of the adjoint rules being checked.

use crate::tensor::Tensor;

/// Central differences of `f` with respect to every scalar of every input.
pub fn finite_difference(
    f: &mut impl FnMut(&[Tensor]) -> f64,
    inputs: &[Tensor],
    step: f64,
) -> Vec<Tensor> {
    let mut work: Vec<Tensor> = inputs.to_vec();
    let mut out = Vec::with_capacity(inputs.len());
    for k in 0..inputs.len() {
        let mut g = Tensor::zeros(inputs[k].rows(), inputs[k].cols());
        for e in 0..inputs[k].len() {
            let orig = work[k].data()[e];
            work[k].data_mut()[e] = orig + step;
            let up = f(&work);
            work[k].data_mut()[e] = orig - step;
            let down = f(&work);
            work[k].data_mut()[e] = orig;
            g.data_mut()[e] = (up - down) / (2.0 * step);
        }
        out.push(g);
    }
    out
}

/// `||a - b|| / max(||a||, ||b||)` over all blocks; `0` when both vanish.
pub fn relative_error(a: &[Tensor], b: &[Tensor]) -> f64 {
    assert_eq!(a.len(), b.len());
    let (mut diff, mut na, mut nb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        assert_eq!(x.shape(), y.shape());
        for (u, v) in x.data().iter().zip(y.data()) {
            diff += (u - v) * (u - v);
            na += u * u;
            nb += v * v;
        }
    }
    let scale = na.sqrt().max(nb.sqrt());
    if scale == 0.0 {
        0.0
    } else {
        diff.sqrt() / scale
    }
}
