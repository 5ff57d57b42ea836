//! Test-only oracles and random instance generators.
//!
//! The boolean oracle works bottom-up: it tabulates the truth value of every
//! subformula at every time index, with `None` where the value would need
//! states past the end of the trajectory. It shares no code with the
//! library's evaluators.
#![allow(dead_code)]

use std::collections::BTreeSet;

use catl::geometry::{Rect, Region};
use catl::monitor::{AgentTrajectory, IndividualTrajectory, TeamTrajectory};
use catl::spec::{Formula, InnerFormula, Interval, OuterAtom, OuterFormula, Predicate, Task, TimedTask};
use rand::seq::SliceRandom;
use rand::Rng;

pub const CAPS: [&str; 2] = ["A", "B"];

pub fn oracle_region_contains(r: &Region, p: [f64; 2]) -> bool {
    r.rects().any(|q| q.min[0] <= p[0] && p[0] <= q.max[0] && q.min[1] <= p[1] && p[1] <= q.max[1])
}

fn oracle_predicate(p: &Predicate, x: [f64; 2], regions: &[Region]) -> bool {
    match p {
        Predicate::InRegion(name) => {
            let r = regions.iter().find(|r| &r.name == name).expect("known region");
            oracle_region_contains(r, x)
        }
        Predicate::HalfPlane { normal, offset } => normal[0] * x[0] + normal[1] * x[1] >= *offset,
    }
}

/// Truth table of `f` over `0..len`, given truth tables for atoms.
fn table<A>(f: &Formula<A>, len: usize, atom: &mut dyn FnMut(&A) -> Vec<Option<bool>>) -> Vec<Option<bool>> {
    match f {
        Formula::True => vec![Some(true); len],
        Formula::Atom(a) => atom(a),
        Formula::Not(x) => table(x, len, atom).into_iter().map(|v| v.map(|b| !b)).collect(),
        Formula::And(xs) | Formula::Or(xs) => {
            let is_and = matches!(f, Formula::And(_));
            let kids: Vec<_> = xs.iter().map(|x| table(x, len, atom)).collect();
            (0..len)
                .map(|t| {
                    let mut acc = is_and;
                    for k in &kids {
                        let v = k[t]?;
                        acc = if is_and { acc && v } else { acc || v };
                    }
                    Some(acc)
                })
                .collect()
        }
        Formula::Eventually(Interval { lo, hi }, x) | Formula::Always(Interval { lo, hi }, x) => {
            let is_g = matches!(f, Formula::Always(..));
            let k = table(x, len, atom);
            (0..len)
                .map(|t| {
                    let mut acc = is_g;
                    for s in t + lo..=t + hi {
                        let v = (*k.get(s)?)?;
                        acc = if is_g { acc && v } else { acc || v };
                    }
                    Some(acc)
                })
                .collect()
        }
        Formula::Until(Interval { lo, hi }, a, b) => {
            let ka = table(a, len, atom);
            let kb = table(b, len, atom);
            (0..len)
                .map(|t| {
                    let mut found = false;
                    for s in t + lo..=t + hi {
                        let witness = (*kb.get(s)?)?;
                        let mut held = true;
                        for r in t..s {
                            held &= (*ka.get(r)?)?;
                        }
                        found |= witness && held;
                    }
                    Some(found)
                })
                .collect()
        }
    }
}

pub fn oracle_inner(x: &IndividualTrajectory, phi: &InnerFormula, regions: &[Region]) -> Vec<Option<bool>> {
    let len = x.states.len();
    table(phi, len, &mut |p| x.states.iter().map(|&s| Some(oracle_predicate(p, s, regions))).collect())
}

pub fn oracle_count(team: &TeamTrajectory, task: &Task, regions: &[Region]) -> Vec<Option<usize>> {
    let len = team.horizon() + 1;
    let mut out = vec![Some(0); len];
    for m in team.members() {
        if !m.capabilities.contains(&task.capability) {
            continue;
        }
        let tab = oracle_inner(&m.trajectory, &task.inner, regions);
        for t in 0..len {
            out[t] = match (out[t], tab[t]) {
                (Some(c), Some(v)) => Some(c + usize::from(v)),
                _ => None,
            };
        }
    }
    out
}

pub fn oracle_outer(team: &TeamTrajectory, phi: &OuterFormula, regions: &[Region]) -> Vec<Option<bool>> {
    let len = team.horizon() + 1;
    table(phi, len, &mut |a| {
        let (task, shift) = match a {
            OuterAtom::Task(t) => (t, 0),
            OuterAtom::Timed(t) => (&t.task, t.time),
        };
        let counts = oracle_count(team, task, regions);
        (0..len)
            .map(|t| counts.get(t + shift).copied().flatten().map(|c| c >= task.count))
            .collect()
    })
}

/// Random regions `R0..R{n-1}` inside `[0, 4]^2`, the last one a union.
pub fn random_regions(rng: &mut impl Rng, n: usize) -> Vec<Region> {
    let rect = |rng: &mut dyn rand::RngCore| {
        let x0: f64 = rng.gen_range(0.0..3.0);
        let y0: f64 = rng.gen_range(0.0..3.0);
        Rect::new([x0, y0], [x0 + rng.gen_range(0.3..2.0), y0 + rng.gen_range(0.3..2.0)])
    };
    (0..n)
        .map(|i| {
            let rects = if i + 1 == n { vec![rect(rng), rect(rng)] } else { vec![rect(rng)] };
            Region::union(format!("R{i}"), rects).unwrap()
        })
        .collect()
}

pub fn random_team(rng: &mut impl Rng, agents: usize, horizon: usize) -> TeamTrajectory {
    let members = (0..agents)
        .map(|j| {
            let mut caps = BTreeSet::new();
            while caps.is_empty() {
                for c in CAPS {
                    if rng.gen_bool(0.6) {
                        caps.insert(c.to_string());
                    }
                }
            }
            let x0 = [rng.gen_range(0.0..4.0), rng.gen_range(0.0..4.0)];
            let us = (0..horizon).map(|_| [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)]).collect();
            AgentTrajectory {
                id: j + 1,
                capabilities: caps,
                trajectory: IndividualTrajectory::from_controls(x0, us),
            }
        })
        .collect();
    TeamTrajectory::new(members).unwrap()
}

fn interval(rng: &mut impl Rng, budget: usize) -> Interval {
    let hi = rng.gen_range(0..=budget.min(2));
    let lo = rng.gen_range(0..=hi);
    Interval { lo, hi }
}

/// Random inner formula of nesting depth at most `depth` whose horizon is at most `budget`.
pub fn random_inner(rng: &mut impl Rng, depth: usize, budget: usize, regions: &[Region]) -> InnerFormula {
    if depth == 0 || rng.gen_bool(0.25) {
        return match rng.gen_range(0..10) {
            0 => Formula::True,
            1 | 2 => Formula::Atom(Predicate::HalfPlane {
                normal: [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)],
                offset: rng.gen_range(-1.0..1.0),
            }),
            _ => InnerFormula::in_region(regions.choose(rng).unwrap().name.clone()),
        };
    }
    let d = depth - 1;
    match rng.gen_range(0..6) {
        0 => Formula::not(random_inner(rng, d, budget, regions)),
        1 | 2 => {
            let kids = (0..rng.gen_range(2..=3)).map(|_| random_inner(rng, d, budget, regions)).collect();
            if rng.gen_bool(0.5) { Formula::And(kids) } else { Formula::Or(kids) }
        }
        3 => {
            let i = interval(rng, budget);
            let b = random_inner(rng, d, budget - i.hi, regions);
            if rng.gen_bool(0.5) { Formula::Eventually(i, Box::new(b)) } else { Formula::Always(i, Box::new(b)) }
        }
        _ => {
            let i = interval(rng, budget);
            let a = random_inner(rng, d, budget - i.hi, regions);
            let b = random_inner(rng, d, budget - i.hi, regions);
            Formula::Until(i, Box::new(a), Box::new(b))
        }
    }
}

pub struct OuterGen<'a> {
    pub regions: &'a [Region],
    pub team: &'a TeamTrajectory,
    pub inner_depth: usize,
    pub timed: bool,
    /// Probability of wrapping a task in a negation.
    pub negate_tasks: f64,
}

impl OuterGen<'_> {
    pub fn task(&self, rng: &mut impl Rng, budget: usize) -> OuterFormula {
        let counts = self.team.capability_counts();
        let caps: Vec<_> = counts.keys().cloned().collect();
        let cap = caps.choose(rng).unwrap().clone();
        let count = rng.gen_range(1..=counts[&cap]);
        let time = if self.timed && budget > 0 && rng.gen_bool(0.3) { rng.gen_range(0..=budget.min(2)) } else { 0 };
        let inner = random_inner(rng, self.inner_depth, budget - time, self.regions);
        let task = Task { inner, capability: cap, count };
        let atom = if time > 0 || (self.timed && rng.gen_bool(0.1)) {
            Formula::Atom(OuterAtom::Timed(TimedTask { task, time }))
        } else {
            Formula::Atom(OuterAtom::Task(task))
        };
        if rng.gen_bool(self.negate_tasks) { Formula::not(atom) } else { atom }
    }

    pub fn formula(&self, rng: &mut impl Rng, depth: usize, budget: usize) -> OuterFormula {
        if depth == 0 || rng.gen_bool(0.25) {
            return if rng.gen_bool(0.05) { Formula::True } else { self.task(rng, budget) };
        }
        let d = depth - 1;
        match rng.gen_range(0..6) {
            0 => Formula::not(self.formula(rng, d, budget)),
            1 | 2 => {
                let kids = (0..rng.gen_range(2..=3)).map(|_| self.formula(rng, d, budget)).collect();
                if rng.gen_bool(0.5) { Formula::And(kids) } else { Formula::Or(kids) }
            }
            3 => {
                let i = interval(rng, budget);
                let b = self.formula(rng, d, budget - i.hi);
                if rng.gen_bool(0.5) { Formula::Eventually(i, Box::new(b)) } else { Formula::Always(i, Box::new(b)) }
            }
            _ => {
                let i = interval(rng, budget);
                let a = self.formula(rng, d, budget - i.hi);
                let b = self.formula(rng, d, budget - i.hi);
                Formula::Until(i, Box::new(a), Box::new(b))
            }
        }
    }
}

/// A random monitoring instance: regions, team and outer formula.
pub struct Instance {
    pub regions: Vec<Region>,
    pub team: TeamTrajectory,
    pub formula: OuterFormula,
}

pub fn random_instance(rng: &mut impl Rng) -> Instance {
    let regions = random_regions(rng, 3);
    let agents = rng.gen_range(1..=3);
    let horizon = rng.gen_range(0..=6);
    let team = random_team(rng, agents, horizon);
    let gen = OuterGen {
        regions: &regions,
        team: &team,
        inner_depth: 1,
        timed: true,
        negate_tasks: 0.2,
    };
    let formula = gen.formula(rng, 2, horizon);
    assert!(formula.horizon() <= horizon);
    Instance { regions, team, formula }
}
