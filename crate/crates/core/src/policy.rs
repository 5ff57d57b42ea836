//! The distributed controller: a capability network seeds a recurrent
//! encoder whose hidden state (the thought) feeds a communication gate, a
//! bidirectional channel over the communicating agents, and an output
//! network producing bounded controls. One parameter set serves every agent.

use std::collections::BTreeMap;
use std::path::Path;

use catl_neural::{
    masked_bidirectional_scan, BoundParams, Checkpoint, LstmCell, LstmState, Mlp, ParamId, ParamSet, Participation,
    Tape, Tensor, Var,
};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{CatlError, Result};
use crate::harness::Scenario;
use crate::monitor::{AgentTrajectory, IndividualTrajectory, TeamTrajectory};
use crate::spec::capability_vector;

/// Gate class meaning "join the channel".
pub const COMMUNICATE: usize = 0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PolicyDims {
    pub n_x: usize,
    pub n_u: usize,
    /// Thought and message width.
    pub n_c: usize,
    pub n_cap: usize,
    /// Hidden width of the dense networks.
    pub hidden: usize,
}

impl PolicyDims {
    pub fn new(n_cap: usize, n_c: usize, hidden: usize) -> Self {
        PolicyDims {
            n_x: 2,
            n_u: 2,
            n_c,
            n_cap,
            hidden,
        }
    }

    fn to_map(self) -> BTreeMap<String, usize> {
        BTreeMap::from([
            ("n_x".to_string(), self.n_x),
            ("n_u".to_string(), self.n_u),
            ("n_c".to_string(), self.n_c),
            ("n_cap".to_string(), self.n_cap),
            ("hidden".to_string(), self.hidden),
        ])
    }

    fn from_map(map: &BTreeMap<String, usize>) -> Result<Self> {
        let get = |k: &str| {
            map.get(k)
                .copied()
                .ok_or_else(|| CatlError::Invalid(format!("checkpoint lacks dimension {k}")))
        };
        let dims = PolicyDims {
            n_x: get("n_x")?,
            n_u: get("n_u")?,
            n_c: get("n_c")?,
            n_cap: get("n_cap")?,
            hidden: get("hidden")?,
        };
        if dims.n_x != 2 || dims.n_u != 2 {
            return Err(CatlError::Invalid("only planar single-integrator agents are supported".into()));
        }
        Ok(dims)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GateMode {
    Full,
    None,
    Learned,
}

impl std::str::FromStr for GateMode {
    type Err = CatlError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "full" => Ok(GateMode::Full),
            "none" => Ok(GateMode::None),
            "learned" => Ok(GateMode::Learned),
            _ => Err(CatlError::Invalid(format!("unknown gate mode {s}"))),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Policy {
    pub dims: PolicyDims,
    pub params: ParamSet,
    cap: Mlp,
    encoder: LstmCell,
    channel_fwd: LstmCell,
    channel_bwd: LstmCell,
    out: Mlp,
    gate: Mlp,
}

/// Per-agent recurrent state for step-by-step execution.
#[derive(Debug, Clone, PartialEq)]
pub struct AgentRuntime {
    pub capability: Vec<f64>,
    h: Tensor,
    c: Tensor,
    pub last_thought: Option<Tensor>,
}

/// Which agents joined the channel: `comm[t][j]`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CommMask {
    pub agents: Vec<usize>,
    pub comm: Vec<Vec<bool>>,
}

impl CommMask {
    pub fn count(&self) -> usize {
        self.comm.iter().flatten().filter(|&&c| c).count()
    }

    pub fn horizon(&self) -> usize {
        self.comm.len()
    }

    /// CSV with header `t,agent,comm`.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("t,agent,comm\n");
        for (t, row) in self.comm.iter().enumerate() {
            for (j, &c) in row.iter().enumerate() {
                s.push_str(&format!("{t},{},{}\n", self.agents[j], u8::from(c)));
            }
        }
        s
    }
}

/// One closed-loop rollout.
#[derive(Debug, Clone, PartialEq)]
pub struct Rollout {
    pub team: TeamTrajectory,
    pub comm: CommMask,
}

/// Agents that, in the given batch rows, act with a second policy at one
/// time step and stay out of the channel there.
pub struct Ablation<'a> {
    pub policy: &'a Policy,
    pub bound: &'a BoundParams,
    /// Per batch row, the member index and time to override.
    pub rows: &'a [Option<(usize, usize)>],
}

/// Rollout recorded on a tape. Batch rows are initial states.
pub struct TapeRollout {
    /// `states[j][t]`, each `B x 2`.
    pub states: Vec<Vec<Var>>,
    /// `controls[j][t]`, each `B x 2`.
    pub controls: Vec<Vec<Var>>,
    /// `comm[b][t][j]`.
    pub comm: Vec<Vec<Vec<bool>>>,
    /// Thought values per time, `(J*B) x n_c` with row `j*B + b`.
    pub thoughts: Vec<Tensor>,
}

/// Per-step pieces shared by the batched rollout and the runtime API.
struct StepInputs {
    norm: Var,
    shift: Var,
}

impl Policy {
    pub fn new(dims: PolicyDims, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = ParamSet::new();
        let cap = Mlp::new(&mut params, "cap", dims.n_cap, dims.hidden, dims.n_c, &mut rng);
        let encoder = LstmCell::new(&mut params, "encoder", dims.n_x, dims.n_c, &mut rng);
        let channel_fwd = LstmCell::new(&mut params, "channel.fwd", dims.n_c, dims.n_c, &mut rng);
        let channel_bwd = LstmCell::new(&mut params, "channel.bwd", dims.n_c, dims.n_c, &mut rng);
        let out = Mlp::new(&mut params, "out", 2 * dims.n_c, dims.hidden, dims.n_u, &mut rng);
        let gate = Mlp::new(&mut params, "gate", dims.n_c, dims.hidden, 2, &mut rng);
        Policy {
            dims,
            params,
            cap,
            encoder,
            channel_fwd,
            channel_bwd,
            out,
            gate,
        }
    }

    pub fn for_scenario(scenario: &Scenario, n_c: usize, hidden: usize, seed: u64) -> Self {
        Self::new(PolicyDims::new(scenario.capabilities.len(), n_c, hidden), seed)
    }

    pub fn gate_params(&self) -> [ParamId; 4] {
        self.gate.params()
    }

    pub fn is_gate_param(&self, id: ParamId) -> bool {
        self.gate.params().contains(&id)
    }

    pub fn num_scalars(&self) -> usize {
        self.params.num_scalars()
    }

    pub fn checkpoint(&self) -> Checkpoint {
        Checkpoint::from_params(&self.params, self.dims.to_map())
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self> {
        let dims = PolicyDims::from_map(&ck.dims)?;
        let mut policy = Policy::new(dims, 0);
        ck.restore_into(&mut policy.params)?;
        Ok(policy)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.checkpoint().to_json())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_checkpoint(&Checkpoint::from_json(&std::fs::read_to_string(path)?)?)
    }

    /// Binds the parameters; the gate is trainable only when `train_gate` is
    /// set and the rest only when `train_policy` is.
    pub fn bind(&self, tape: &mut Tape, train_policy: bool, train_gate: bool) -> BoundParams {
        self.params.bind(tape, |id| {
            if self.is_gate_param(id) {
                train_gate
            } else {
                train_policy
            }
        })
    }

    fn step_inputs(&self, tape: &mut Tape, scenario: &Scenario) -> StepInputs {
        let (center, half) = scenario.normalization();
        let norm = tape.constant(Tensor::from_rows(&[vec![1.0 / half[0], 0.0], vec![0.0, 1.0 / half[1]]]));
        let shift = tape.constant(Tensor::row(&[-center[0], -center[1]]));
        StepInputs { norm, shift }
    }

    fn normalize(&self, tape: &mut Tape, si: &StepInputs, x: Var) -> Var {
        let shifted = tape.add_row(x, si.shift);
        tape.matmul(shifted, si.norm)
    }

    fn initial_state(&self, tape: &mut Tape, p: &BoundParams, caps: Var) -> LstmState {
        let h = self.cap.forward(tape, p, caps);
        let rows = tape.shape(caps)[0];
        let c = tape.constant(Tensor::zeros(rows, self.dims.n_c));
        LstmState { h, c }
    }

    fn control(&self, tape: &mut Tape, p: &BoundParams, h: Var, h_tilde: Var, u_max: Var) -> Var {
        let z = tape.concat_cols(&[h, h_tilde]);
        let z = self.out.forward(tape, p, z);
        let z = tape.tanh(z);
        tape.mul(z, u_max)
    }

    /// Runs the channel over `thoughts` (one `B x n_c` entry per agent in
    /// id order) with `comm[b][j]` participation. Absent agents get zeros.
    fn channel_on_tape(&self, tape: &mut Tape, p: &BoundParams, thoughts: &[Var], comm: &[Vec<bool>]) -> Result<Vec<Var>> {
        let rows = comm.len();
        let mask: Vec<Participation> = (0..thoughts.len())
            .map(|j| {
                let on = comm.iter().filter(|c| c[j]).count();
                if on == rows {
                    Participation::All
                } else if on == 0 {
                    Participation::Skip
                } else {
                    let col: Vec<f64> = comm.iter().map(|c| f64::from(u8::from(c[j]))).collect();
                    Participation::Rows(tape.constant(Tensor::column(&col)))
                }
            })
            .collect();
        let outs = masked_bidirectional_scan(tape, p, &self.channel_fwd, &self.channel_bwd, thoughts, &mask)?;
        Ok(outs
            .into_iter()
            .map(|o| o.unwrap_or_else(|| tape.constant(Tensor::zeros(rows, self.dims.n_c))))
            .collect())
    }

    /// Gate logits for a batch of thoughts; column [`COMMUNICATE`] is the
    /// "join the channel" class.
    pub fn gate_logits(&self, tape: &mut Tape, p: &BoundParams, thoughts: Var) -> Var {
        self.gate.forward(tape, p, thoughts)
    }

    fn gate_decisions(&self, tape: &mut Tape, p: &BoundParams, thought: Var) -> Vec<bool> {
        let logits = self.gate.forward(tape, p, thought);
        let v = tape.value(logits);
        (0..v.rows()).map(|r| v.get(r, COMMUNICATE) >= v.get(r, 1 - COMMUNICATE)).collect()
    }

    /// Closed-loop rollout of `x0.len()` initial states for `horizon` steps.
    pub fn rollout_on_tape(
        &self,
        tape: &mut Tape,
        p: &BoundParams,
        scenario: &Scenario,
        x0: &[Vec<[f64; 2]>],
        horizon: usize,
        mode: GateMode,
        ablation: Option<&Ablation<'_>>,
    ) -> Result<TapeRollout> {
        let b = x0.len();
        let n = scenario.num_agents();
        if b == 0 {
            return Err(CatlError::Invalid("rollout needs at least one initial state".into()));
        }
        if x0.iter().any(|x| x.len() != n) {
            return Err(CatlError::Invalid("initial state does not match the roster".into()));
        }
        if self.dims.n_cap != scenario.capabilities.len() {
            return Err(CatlError::Invalid(format!(
                "policy expects {} capabilities, scenario has {}",
                self.dims.n_cap,
                scenario.capabilities.len()
            )));
        }
        if let Some(a) = ablation {
            if a.rows.len() != b {
                return Err(CatlError::Invalid("one ablation entry per batch row".into()));
            }
        }
        let si = self.step_inputs(tape, scenario);

        let mut cap_rows = Vec::with_capacity(n * b);
        let mut umax_rows = Vec::with_capacity(n * b);
        for a in &scenario.agents {
            let caps: Vec<&String> = a.capabilities.iter().collect();
            let v = capability_vector(&caps, &scenario.capabilities)?;
            for _ in 0..b {
                cap_rows.push(v.clone());
                umax_rows.push(a.u_max.to_vec());
            }
        }
        let caps = tape.constant(Tensor::from_rows(&cap_rows));
        let u_max = tape.constant(Tensor::from_rows(&umax_rows));

        let mut state = self.initial_state(tape, p, caps);
        let mut alt_state = ablation.map(|a| a.policy.initial_state(tape, a.bound, caps));
        let alt_si = ablation.map(|a| a.policy.step_inputs(tape, scenario));

        let mut states: Vec<Vec<Var>> = (0..n)
            .map(|j| {
                let rows: Vec<Vec<f64>> = x0.iter().map(|x| x[j].to_vec()).collect();
                vec![tape.constant(Tensor::from_rows(&rows))]
            })
            .collect();
        let mut controls: Vec<Vec<Var>> = vec![Vec::with_capacity(horizon); n];
        let mut comm = vec![Vec::with_capacity(horizon); b];
        let mut thoughts = Vec::with_capacity(horizon);

        for t in 0..horizon {
            let xs: Vec<Var> = (0..n).map(|j| states[j][t]).collect();
            let x = tape.concat_rows(&xs);
            let xn = self.normalize(tape, &si, x);
            state = self.encoder.step(tape, p, xn, state)?;
            let h = state.h;
            thoughts.push(tape.value(h).clone());

            let learned = match mode {
                GateMode::Learned => Some(self.gate_decisions(tape, p, h)),
                _ => None,
            };
            let step_comm: Vec<Vec<bool>> = (0..b)
                .map(|r| {
                    (0..n)
                        .map(|j| {
                            let ablated = ablation.is_some_and(|a| a.rows[r] == Some((j, t)));
                            !ablated
                                && match mode {
                                    GateMode::Full => true,
                                    GateMode::None => false,
                                    GateMode::Learned => learned.as_ref().expect("computed")[j * b + r],
                                }
                        })
                        .collect()
                })
                .collect();

            let per_agent: Vec<Var> = (0..n).map(|j| tape.slice_rows(h, j * b, b)).collect();
            let integrated = if step_comm.iter().flatten().any(|&c| c) {
                let outs = self.channel_on_tape(tape, p, &per_agent, &step_comm)?;
                tape.concat_rows(&outs)
            } else {
                tape.constant(Tensor::zeros(n * b, self.dims.n_c))
            };
            let mut u = self.control(tape, p, h, integrated, u_max);

            if let (Some(a), Some(alt), Some(asi)) = (ablation, alt_state.as_mut(), alt_si.as_ref()) {
                let xa = a.policy.normalize(tape, asi, x);
                *alt = a.policy.encoder.step(tape, a.bound, xa, *alt)?;
                let select: Vec<f64> = (0..n)
                    .flat_map(|j| (0..b).map(move |r| (j, r)))
                    .map(|(j, r)| f64::from(u8::from(a.rows[r] == Some((j, t)))))
                    .collect();
                if select.iter().any(|&s| s > 0.0) {
                    let zeros = tape.constant(Tensor::zeros(n * b, a.policy.dims.n_c));
                    let u_alt = a.policy.control(tape, a.bound, alt.h, zeros, u_max);
                    let keep: Vec<f64> = select.iter().map(|s| 1.0 - s).collect();
                    let s = tape.constant(Tensor::column(&select));
                    let k = tape.constant(Tensor::column(&keep));
                    let u_keep = tape.mul_col(u, k);
                    let u_swap = tape.mul_col(u_alt, s);
                    u = tape.add(u_keep, u_swap);
                }
            }

            for j in 0..n {
                let uj = tape.slice_rows(u, j * b, b);
                let next = tape.add(states[j][t], uj);
                controls[j].push(uj);
                states[j].push(next);
            }
            for (r, c) in step_comm.into_iter().enumerate() {
                comm[r].push(c);
            }
        }
        Ok(TapeRollout {
            states,
            controls,
            comm,
            thoughts,
        })
    }

    /// Batched rollout without gradients.
    pub fn rollout_batch(
        &self,
        scenario: &Scenario,
        x0: &[Vec<[f64; 2]>],
        horizon: usize,
        mode: GateMode,
    ) -> Result<Vec<Rollout>> {
        let mut tape = Tape::new();
        let p = self.bind(&mut tape, false, false);
        let r = self.rollout_on_tape(&mut tape, &p, scenario, x0, horizon, mode, None)?;
        Ok(materialize(&tape, &r, scenario, x0))
    }

    pub fn rollout(&self, scenario: &Scenario, x0: &[[f64; 2]], horizon: usize, mode: GateMode) -> Result<Rollout> {
        Ok(self
            .rollout_batch(scenario, &[x0.to_vec()], horizon, mode)?
            .pop()
            .expect("one rollout"))
    }

    fn with_tape<T>(&self, f: impl FnOnce(&mut Tape, &BoundParams) -> Result<T>) -> Result<T> {
        let mut tape = Tape::new();
        let p = self.bind(&mut tape, false, false);
        f(&mut tape, &p)
    }

    /// Fresh runtime whose hidden state is the capability network output.
    pub fn init_runtime(&self, capability: &[f64]) -> Result<AgentRuntime> {
        if capability.len() != self.dims.n_cap {
            return Err(CatlError::Invalid("capability vector has the wrong length".into()));
        }
        self.with_tape(|tape, p| {
            let caps = tape.constant(Tensor::row(capability));
            let s = self.initial_state(tape, p, caps);
            Ok(AgentRuntime {
                capability: capability.to_vec(),
                h: tape.value(s.h).clone(),
                c: tape.value(s.c).clone(),
                last_thought: None,
            })
        })
    }

    /// One encoder step on the state `x`; returns the thought (`1 x n_c`).
    pub fn encode(&self, rt: &mut AgentRuntime, scenario: &Scenario, x: [f64; 2]) -> Result<Tensor> {
        self.with_tape(|tape, p| {
            let si = self.step_inputs(tape, scenario);
            let xv = tape.constant(Tensor::row(&x));
            let xn = self.normalize(tape, &si, xv);
            let s = LstmState {
                h: tape.constant(rt.h.clone()),
                c: tape.constant(rt.c.clone()),
            };
            let s = self.encoder.step(tape, p, xn, s)?;
            rt.h = tape.value(s.h).clone();
            rt.c = tape.value(s.c).clone();
            rt.last_thought = Some(rt.h.clone());
            Ok(rt.h.clone())
        })
    }

    /// Softmax of the gate output.
    pub fn gate_probabilities(&self, h: &Tensor) -> [f64; 2] {
        self.with_tape(|tape, p| {
            let hv = tape.constant(h.clone());
            let z = self.gate.forward(tape, p, hv);
            let z = tape.value(z).row_slice(0).to_vec();
            let m = z[0].max(z[1]);
            let e = [(z[0] - m).exp(), (z[1] - m).exp()];
            let s = e[0] + e[1];
            Ok([e[0] / s, e[1] / s])
        })
        .expect("gate forward cannot fail")
    }

    pub fn gate(&self, h: &Tensor, mode: GateMode) -> bool {
        match mode {
            GateMode::Full => true,
            GateMode::None => false,
            GateMode::Learned => self.with_tape(|tape, p| {
                let hv = tape.constant(h.clone());
                Ok(self.gate_decisions(tape, p, hv)[0])
            })
            .expect("gate forward cannot fail"),
        }
    }

    /// Integrated thoughts for the communicating agents, in the given order.
    pub fn channel(&self, thoughts: &[Tensor]) -> Result<Vec<Tensor>> {
        if thoughts.is_empty() {
            return Ok(Vec::new());
        }
        self.with_tape(|tape, p| {
            let vs: Vec<Var> = thoughts.iter().map(|h| tape.constant(h.clone())).collect();
            let outs = self.channel_on_tape(tape, p, &vs, &[vec![true; thoughts.len()]])?;
            Ok(outs.iter().map(|&o| tape.value(o).clone()).collect())
        })
    }

    /// Bounded control from a thought and its integrated thought.
    pub fn act(&self, h: &Tensor, h_tilde: &Tensor, u_max: [f64; 2]) -> [f64; 2] {
        self.with_tape(|tape, p| {
            let hv = tape.constant(h.clone());
            let ht = tape.constant(h_tilde.clone());
            let um = tape.constant(Tensor::row(&u_max));
            let u = self.control(tape, p, hv, ht, um);
            let u = tape.value(u);
            Ok([u.get(0, 0), u.get(0, 1)])
        })
        .expect("control forward cannot fail")
    }

    /// Step-by-step execution with one runtime per agent, the way a deployed
    /// team would run it.
    pub fn execute(&self, scenario: &Scenario, x0: &[[f64; 2]], horizon: usize, mode: GateMode) -> Result<Rollout> {
        let mut runtimes = scenario
            .agents
            .iter()
            .map(|a| {
                let caps: Vec<&String> = a.capabilities.iter().collect();
                self.init_runtime(&capability_vector(&caps, &scenario.capabilities)?)
            })
            .collect::<Result<Vec<_>>>()?;
        let n = scenario.num_agents();
        let mut x = x0.to_vec();
        let mut controls = vec![Vec::with_capacity(horizon); n];
        let mut comm = Vec::with_capacity(horizon);
        for _ in 0..horizon {
            let hs = runtimes
                .iter_mut()
                .zip(&x)
                .map(|(rt, xj)| self.encode(rt, scenario, *xj))
                .collect::<Result<Vec<_>>>()?;
            let on: Vec<bool> = hs.iter().map(|h| self.gate(h, mode)).collect();
            let members: Vec<usize> = (0..n).filter(|&j| on[j]).collect();
            let merged = self.channel(&members.iter().map(|&j| hs[j].clone()).collect::<Vec<_>>())?;
            let mut tilde = vec![Tensor::zeros(1, self.dims.n_c); n];
            for (k, &j) in members.iter().enumerate() {
                tilde[j] = merged[k].clone();
            }
            for j in 0..n {
                let u = self.act(&hs[j], &tilde[j], scenario.agents[j].u_max);
                x[j] = [x[j][0] + u[0], x[j][1] + u[1]];
                controls[j].push(u);
            }
            comm.push(on);
        }
        let team = scenario.team_from_controls(x0, controls)?;
        Ok(Rollout {
            comm: CommMask {
                agents: scenario.agents.iter().map(|a| a.id).collect(),
                comm,
            },
            team,
        })
    }
}

/// Converts a tape rollout into per-row team trajectories.
pub fn materialize(tape: &Tape, r: &TapeRollout, scenario: &Scenario, x0: &[Vec<[f64; 2]>]) -> Vec<Rollout> {
    let agents: Vec<usize> = scenario.agents.iter().map(|a| a.id).collect();
    (0..x0.len())
        .map(|b| {
            let members = scenario
                .agents
                .iter()
                .enumerate()
                .map(|(j, a)| {
                    let us = r.controls[j]
                        .iter()
                        .map(|&u| {
                            let v = tape.value(u);
                            [v.get(b, 0), v.get(b, 1)]
                        })
                        .collect();
                    AgentTrajectory {
                        id: a.id,
                        capabilities: a.capabilities.clone(),
                        trajectory: IndividualTrajectory::from_controls(x0[b][j], us),
                    }
                })
                .collect();
            Rollout {
                team: TeamTrajectory::new(members).expect("consistent roster"),
                comm: CommMask {
                    agents: agents.clone(),
                    comm: r.comm[b].clone(),
                },
            }
        })
        .collect()
}
