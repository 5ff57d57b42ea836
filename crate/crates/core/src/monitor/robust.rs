//! Quantitative semantics.
//!
//! One evaluator computes robustness signals over a window of start times
//! for any [`Algebra`]; plain floats give the classical and log-sum-exp
//! smoothed values, the tape algebra gives differentiable ones.

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::geometry::Region;
use crate::spec::{Formula, InnerFormula, OuterAtom, OuterFormula, Predicate, Task};

use super::trajectory::{IndividualTrajectory, TeamTrajectory};
use super::validate::{check_inner, check_outer, predicate_value};

pub const DEFAULT_TOP: f64 = 1e6;
pub const DEFAULT_TAU: f64 = 10.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "lowercase")]
pub enum Smoothing {
    Classical,
    /// Log-sum-exp min/max with temperature `tau`.
    Smooth { tau: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RobustnessConfig {
    pub smoothing: Smoothing,
    /// Robustness of `true`.
    pub top: f64,
}

impl RobustnessConfig {
    pub fn classical() -> Self {
        RobustnessConfig {
            smoothing: Smoothing::Classical,
            top: DEFAULT_TOP,
        }
    }

    pub fn smooth(tau: f64) -> Self {
        assert!(tau > 0.0, "temperature must be positive");
        RobustnessConfig {
            smoothing: Smoothing::Smooth { tau },
            top: DEFAULT_TOP,
        }
    }
}

impl Default for RobustnessConfig {
    fn default() -> Self {
        Self::classical()
    }
}

/// Value domain for robustness evaluation.
pub trait Algebra {
    type V: Copy;
    fn top(&mut self) -> Self::V;
    fn neg(&mut self, v: Self::V) -> Self::V;
    fn min(&mut self, vs: &[Self::V]) -> Self::V;
    fn max(&mut self, vs: &[Self::V]) -> Self::V;
    /// `k`-th largest (1-based), ties ordered by position.
    fn kth_largest(&mut self, vs: &[Self::V], k: usize) -> Self::V;
}

/// An algebra that can also read predicates off the team's states.
pub trait TeamSemantics: Algebra {
    fn predicate(&mut self, agent: usize, t: usize, p: &Predicate) -> Self::V;
    /// Member positions carrying `cap`.
    fn agents_with(&self, cap: &str) -> Vec<usize>;
}

type Leaf<'a, S, A> = dyn FnMut(&mut S, &A, usize, usize) -> Vec<<S as Algebra>::V> + 'a;

/// Robustness of `f` at times `start..start + n`.
fn signal<S: Algebra, A>(s: &mut S, f: &Formula<A>, start: usize, n: usize, leaf: &mut Leaf<'_, S, A>) -> Vec<S::V> {
    match f {
        Formula::True => {
            let v = s.top();
            vec![v; n]
        }
        Formula::Atom(a) => leaf(s, a, start, n),
        Formula::Not(x) => {
            let sig = signal(s, x, start, n, leaf);
            sig.into_iter().map(|v| s.neg(v)).collect()
        }
        Formula::And(xs) | Formula::Or(xs) => {
            let sigs: Vec<Vec<S::V>> = xs.iter().map(|x| signal(s, x, start, n, leaf)).collect();
            let conj = matches!(f, Formula::And(_));
            let mut col = Vec::with_capacity(xs.len());
            (0..n)
                .map(|i| {
                    col.clear();
                    col.extend(sigs.iter().map(|sg| sg[i]));
                    if conj {
                        s.min(&col)
                    } else {
                        s.max(&col)
                    }
                })
                .collect()
        }
        Formula::Eventually(iv, x) | Formula::Always(iv, x) => {
            let w = iv.width();
            let sig = signal(s, x, start + iv.lo, n + w - 1, leaf);
            let always = matches!(f, Formula::Always(..));
            (0..n)
                .map(|i| {
                    let win = &sig[i..i + w];
                    if always {
                        s.min(win)
                    } else {
                        s.max(win)
                    }
                })
                .collect()
        }
        Formula::Until(iv, a, b) => {
            let rb = signal(s, b, start + iv.lo, n + iv.hi - iv.lo, leaf);
            let ra = if iv.hi > 0 {
                signal(s, a, start, n + iv.hi - 1, leaf)
            } else {
                Vec::new()
            };
            let mut terms = Vec::with_capacity(iv.hi + 1);
            let mut outer = Vec::with_capacity(iv.width());
            (0..n)
                .map(|i| {
                    outer.clear();
                    for off in iv.lo..=iv.hi {
                        terms.clear();
                        terms.push(rb[i + off - iv.lo]);
                        if off > 0 {
                            terms.extend_from_slice(&ra[i..i + off]);
                        }
                        let v = s.min(&terms);
                        outer.push(v);
                    }
                    s.max(&outer)
                })
                .collect()
        }
    }
}

pub(crate) fn inner_signal<S: TeamSemantics>(s: &mut S, agent: usize, phi: &InnerFormula, start: usize, n: usize) -> Vec<S::V> {
    let mut leaf = |s: &mut S, p: &Predicate, st: usize, k: usize| (0..k).map(|i| s.predicate(agent, st + i, p)).collect();
    signal(s, phi, start, n, &mut leaf)
}

pub(crate) fn task_signal<S: TeamSemantics>(s: &mut S, task: &Task, start: usize, n: usize) -> Vec<S::V> {
    let agents = s.agents_with(&task.capability);
    let sigs: Vec<Vec<S::V>> = agents
        .iter()
        .map(|&j| inner_signal(s, j, &task.inner, start, n))
        .collect();
    let mut col = Vec::with_capacity(agents.len());
    (0..n)
        .map(|i| {
            col.clear();
            col.extend(sigs.iter().map(|sg| sg[i]));
            s.kth_largest(&col, task.count)
        })
        .collect()
}

pub(crate) fn outer_signal<S: TeamSemantics>(s: &mut S, phi: &OuterFormula, start: usize, n: usize) -> Vec<S::V> {
    let mut leaf = |s: &mut S, a: &OuterAtom, st: usize, k: usize| match a {
        OuterAtom::Task(task) => task_signal(s, task, st, k),
        OuterAtom::Timed(tt) => task_signal(s, &tt.task, st + tt.time, k),
    };
    signal(s, phi, start, n, &mut leaf)
}

/// Evaluates a plain-float robustness over a team.
pub struct FloatSemantics<'a> {
    team: &'a TeamTrajectory,
    regions: &'a [Region],
    config: RobustnessConfig,
}

impl<'a> FloatSemantics<'a> {
    pub fn new(team: &'a TeamTrajectory, regions: &'a [Region], config: RobustnessConfig) -> Self {
        FloatSemantics { team, regions, config }
    }
}

pub(crate) fn kth_largest_f64(vs: &[f64], k: usize) -> f64 {
    assert!(k >= 1 && k <= vs.len(), "k-th largest out of range");
    let mut idx: Vec<usize> = (0..vs.len()).collect();
    idx.sort_by(|&a, &b| vs[b].total_cmp(&vs[a]).then(a.cmp(&b)));
    vs[idx[k - 1]]
}

impl Algebra for FloatSemantics<'_> {
    type V = f64;

    fn top(&mut self) -> f64 {
        self.config.top
    }

    fn neg(&mut self, v: f64) -> f64 {
        -v
    }

    fn min(&mut self, vs: &[f64]) -> f64 {
        match self.config.smoothing {
            _ if vs.len() == 1 => vs[0],
            Smoothing::Classical => vs.iter().copied().fold(f64::INFINITY, f64::min),
            Smoothing::Smooth { tau } => catl_neural::log_sum_exp(vs.iter().copied(), -tau),
        }
    }

    fn max(&mut self, vs: &[f64]) -> f64 {
        match self.config.smoothing {
            _ if vs.len() == 1 => vs[0],
            Smoothing::Classical => vs.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            Smoothing::Smooth { tau } => catl_neural::log_sum_exp(vs.iter().copied(), tau),
        }
    }

    fn kth_largest(&mut self, vs: &[f64], k: usize) -> f64 {
        kth_largest_f64(vs, k)
    }
}

impl TeamSemantics for FloatSemantics<'_> {
    fn predicate(&mut self, agent: usize, t: usize, p: &Predicate) -> f64 {
        predicate_value(p, self.team.state(agent, t), self.regions)
    }

    fn agents_with(&self, cap: &str) -> Vec<usize> {
        self.team.agents_with(cap)
    }
}

/// Robustness of `phi` over one trajectory at time `t`.
pub fn inner_rho(
    x: &IndividualTrajectory,
    phi: &InnerFormula,
    t: usize,
    config: &RobustnessConfig,
    regions: &[Region],
) -> Result<f64> {
    check_inner(phi, t, x.horizon(), regions)?;
    let team = TeamTrajectory::new(vec![super::AgentTrajectory {
        id: 0,
        capabilities: Default::default(),
        trajectory: x.clone(),
    }])?;
    let mut s = FloatSemantics::new(&team, regions, *config);
    Ok(inner_signal(&mut s, 0, phi, t, 1)[0])
}

/// The `m`-th largest inner robustness among agents carrying the capability.
pub fn task_rho(team: &TeamTrajectory, task: &Task, t: usize, config: &RobustnessConfig, regions: &[Region]) -> Result<f64> {
    let phi = Formula::Atom(OuterAtom::Task(task.clone()));
    check_outer(&phi, t, team, regions)?;
    let mut s = FloatSemantics::new(team, regions, *config);
    Ok(task_signal(&mut s, task, t, 1)[0])
}

pub fn outer_rho(team: &TeamTrajectory, phi: &OuterFormula, t: usize, config: &RobustnessConfig, regions: &[Region]) -> Result<f64> {
    check_outer(phi, t, team, regions)?;
    let mut s = FloatSemantics::new(team, regions, *config);
    Ok(outer_signal(&mut s, phi, t, 1)[0])
}

/// Robustness of every agent's trajectory against `phi` at `t`, in member order.
pub fn inner_rho_all(team: &TeamTrajectory, phi: &InnerFormula, t: usize, config: &RobustnessConfig, regions: &[Region]) -> Result<Vec<f64>> {
    check_inner(phi, t, team.horizon(), regions)?;
    let mut s = FloatSemantics::new(team, regions, *config);
    Ok((0..team.len()).map(|j| inner_signal(&mut s, j, phi, t, 1)[0]).collect())
}

/// Number of nested smoothed reductions and their largest operand count.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SmoothLevels {
    pub depth: usize,
    pub fan_in: usize,
}

fn levels<A>(f: &Formula<A>, atom: &dyn Fn(&A) -> SmoothLevels) -> SmoothLevels {
    let combine = |kids: &[SmoothLevels], extra: usize, width: usize| SmoothLevels {
        depth: extra + kids.iter().map(|k| k.depth).max().unwrap_or(0),
        fan_in: kids.iter().map(|k| k.fan_in).max().unwrap_or(1).max(width),
    };
    match f {
        Formula::True => SmoothLevels { depth: 0, fan_in: 1 },
        Formula::Atom(a) => atom(a),
        Formula::Not(x) => levels(x, atom),
        Formula::And(xs) | Formula::Or(xs) => {
            let kids: Vec<_> = xs.iter().map(|x| levels(x, atom)).collect();
            combine(&kids, 1, xs.len())
        }
        Formula::Eventually(iv, x) | Formula::Always(iv, x) => {
            let w = iv.width();
            combine(&[levels(x, atom)], usize::from(w > 1), w)
        }
        Formula::Until(iv, a, b) => {
            let kids = [levels(a, atom), levels(b, atom)];
            let width = iv.width().max(iv.hi + 1);
            let extra = usize::from(iv.width() > 1) + usize::from(iv.hi > 0);
            combine(&kids, extra, width)
        }
    }
}

pub fn inner_levels(phi: &InnerFormula) -> SmoothLevels {
    levels(phi, &|_| SmoothLevels { depth: 0, fan_in: 1 })
}

pub fn outer_levels(phi: &OuterFormula) -> SmoothLevels {
    levels(phi, &|a| match a {
        OuterAtom::Task(t) => inner_levels(&t.inner),
        OuterAtom::Timed(t) => inner_levels(&t.task.inner),
    })
}

/// Upper bound on `|smooth - classical|` robustness at temperature `tau`:
/// each log-sum-exp level adds at most `ln(W) / tau`.
pub fn smooth_error_bound(levels: SmoothLevels, tau: f64) -> f64 {
    levels.depth as f64 * (levels.fan_in as f64).ln() / tau
}
