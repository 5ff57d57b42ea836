//! Single-agent synthesis by gradient ascent on smooth robustness.
//!
//! Controls are `u(t) = u_max * tanh(w(t))`, so every candidate respects the
//! box bound. Restarts run as rows of one batch; the best restart is picked
//! by classical robustness.

use catl_neural::{AdamConfig, AdamState, ParamSet, Tape, Tensor, Var};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{CatlError, Result};
use crate::geometry::Region;
use crate::monitor::{inner_rho, IndividualTrajectory, RobustnessConfig, TapeSemantics, DEFAULT_TOP};
use crate::spec::{Formula, InnerFormula};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthesisConfig {
    pub iterations: usize,
    pub restarts: usize,
    pub lr: f64,
    pub tau_start: f64,
    pub tau_max: f64,
    /// The temperature doubles after this many iterations.
    pub tau_period: usize,
    /// Stop early once the best classical robustness reaches this value.
    pub stop_margin: f64,
    pub seed: u64,
}

impl Default for SynthesisConfig {
    fn default() -> Self {
        SynthesisConfig {
            iterations: 500,
            restarts: 8,
            lr: 0.05,
            tau_start: 2.0,
            tau_max: 32.0,
            tau_period: 100,
            stop_margin: 0.1,
            seed: 0,
        }
    }
}

impl SynthesisConfig {
    pub fn tau_at(&self, iteration: usize) -> f64 {
        let doublings = (iteration / self.tau_period.max(1)).min(30) as i32;
        (self.tau_start * 2f64.powi(doublings)).min(self.tau_max)
    }
}

#[derive(Debug, Clone)]
pub struct SynthesisRequest<'a> {
    pub x0: [f64; 2],
    pub horizon: usize,
    pub u_max: [f64; 2],
    pub target: InnerFormula,
    pub regions: &'a [Region],
    pub config: SynthesisConfig,
    /// Controls used to initialize one extra restart.
    pub warm_start: Option<Vec<[f64; 2]>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthesisResult {
    pub trajectory: IndividualTrajectory,
    pub controls: Vec<[f64; 2]>,
    /// Classical robustness of the target at time 0.
    pub robustness: f64,
    pub success: bool,
    pub iterations: usize,
    /// Best smooth robustness seen so far, one entry per iteration.
    pub best_smooth: Vec<f64>,
}

fn controls_from_w(w: &Tensor, row: usize, u_max: [f64; 2]) -> Vec<[f64; 2]> {
    w.row_slice(row)
        .chunks_exact(2)
        .map(|c| [u_max[0] * c[0].tanh(), u_max[1] * c[1].tanh()])
        .collect()
}

pub fn synthesize(req: &SynthesisRequest<'_>) -> Result<SynthesisResult> {
    let h = req.horizon;
    if req.target.horizon() > h {
        return Err(CatlError::TrajectoryTooShort {
            needed: req.target.horizon() + 1,
            available: h + 1,
        });
    }
    if !(req.u_max[0] > 0.0 && req.u_max[1] > 0.0) {
        return Err(CatlError::Invalid("control bounds must be positive".into()));
    }
    let cfg = req.config;
    let evaluate = |controls: Vec<[f64; 2]>| -> Result<(IndividualTrajectory, f64)> {
        let traj = IndividualTrajectory::from_controls(req.x0, controls);
        let rho = inner_rho(&traj, &req.target, 0, &RobustnessConfig::classical(), req.regions)?;
        Ok((traj, rho))
    };
    if req.target == Formula::True || h == 0 {
        let controls = vec![[0.0; 2]; h];
        let (trajectory, robustness) = evaluate(controls.clone())?;
        let robustness = if req.target == Formula::True { DEFAULT_TOP } else { robustness };
        return Ok(SynthesisResult {
            trajectory,
            controls,
            robustness,
            success: robustness > 0.0,
            iterations: 0,
            best_smooth: Vec::new(),
        });
    }

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let warm = req.warm_start.as_ref().filter(|u| u.len() == h);
    let rows = cfg.restarts.max(1) + usize::from(warm.is_some());
    let mut w0 = Tensor::zeros(rows, 2 * h);
    for r in 0..rows {
        for k in 0..2 * h {
            let v = match warm {
                Some(u) if r == 0 => {
                    let ratio = (u[k / 2][k % 2] / req.u_max[k % 2]).clamp(-0.995, 0.995);
                    ratio.atanh()
                }
                _ => rng.gen_range(-1.0..1.0),
            };
            w0.set(r, k, v);
        }
    }
    let mut params = ParamSet::new();
    let w_id = params.add("w", w0);
    let mut adam = AdamState::new(&params, AdamConfig::with_lr(cfg.lr));
    let scale = Tensor::from_rows(&[vec![req.u_max[0], 0.0], vec![0.0, req.u_max[1]]]);
    let start = Tensor::from_vec(rows, 2, (0..rows).flat_map(|_| req.x0).collect());

    let mut best: Option<(f64, Vec<[f64; 2]>)> = None;
    let mut best_smooth = Vec::with_capacity(cfg.iterations);
    let mut best_smooth_so_far = f64::NEG_INFINITY;
    let mut iterations = 0;
    for it in 0..cfg.iterations {
        iterations = it + 1;
        let tau = cfg.tau_at(it);
        let mut tape = Tape::new();
        let bound = params.bind(&mut tape, |_| true);
        let w = bound.var(w_id);
        let s = tape.constant(scale.clone());
        let mut states: Vec<Var> = vec![tape.constant(start.clone())];
        for t in 0..h {
            let wt = tape.slice_cols(w, 2 * t, 2);
            let th = tape.tanh(wt);
            let u = tape.matmul(th, s);
            let next = tape.add(states[t], u);
            states.push(next);
        }
        let all = vec![states];
        let rho = {
            let mut sem = TapeSemantics::new(&mut tape, &all, vec![vec![]], req.regions, RobustnessConfig::smooth(tau));
            sem.inner(0, &req.target, 0)
        };
        let smooth_vals = tape.value(rho).data().to_vec();
        for &v in &smooth_vals {
            best_smooth_so_far = best_smooth_so_far.max(v);
        }
        best_smooth.push(best_smooth_so_far);

        let wv = params.get(w_id).clone();
        for r in 0..rows {
            let (_, classical) = evaluate(controls_from_w(&wv, r, req.u_max))?;
            if best.as_ref().map_or(true, |(b, _)| classical > *b) {
                best = Some((classical, controls_from_w(&wv, r, req.u_max)));
            }
        }
        if best.as_ref().is_some_and(|(b, _)| *b >= cfg.stop_margin) {
            break;
        }

        let total = tape.sum_all(rho);
        let mut grads = tape.backward(total);
        let mut g = bound.collect_grads(&mut grads);
        for gi in g.iter_mut().flatten() {
            for v in gi.data_mut() {
                *v = -*v;
            }
        }
        adam.update(&mut params, &g);
    }
    let (_, controls) = best.expect("at least one iteration ran");
    let (trajectory, robustness) = evaluate(controls.clone())?;
    Ok(SynthesisResult {
        trajectory,
        controls,
        robustness,
        success: robustness > 0.0,
        iterations,
        best_smooth,
    })
}

/// `F[t,t] phi` for every pinned `(t, phi)`, conjoined.
pub fn pinned_conjunction(formulas: &[(usize, InnerFormula)]) -> InnerFormula {
    Formula::and(
        formulas
            .iter()
            .map(|(t, phi)| Formula::eventually(*t, *t, phi.clone()))
            .collect(),
    )
}

/// Synthesis for a conjunction of formulas pinned to given times.
pub fn synthesize_conjunction(
    x0: [f64; 2],
    horizon: usize,
    u_max: [f64; 2],
    formulas: &[(usize, InnerFormula)],
    regions: &[Region],
    config: SynthesisConfig,
    warm_start: Option<Vec<[f64; 2]>>,
) -> Result<SynthesisResult> {
    synthesize(&SynthesisRequest {
        x0,
        horizon,
        u_max,
        target: pinned_conjunction(formulas),
        regions,
        config,
        warm_start,
    })
}
