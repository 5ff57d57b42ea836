use std::fmt;

use serde::{Deserialize, Serialize};

/// Closed integer interval `[lo, hi]` of time offsets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Interval {
    pub lo: usize,
    pub hi: usize,
}

impl Interval {
    pub fn new(lo: usize, hi: usize) -> Self {
        assert!(lo <= hi, "interval [{lo},{hi}] is reversed");
        Interval { lo, hi }
    }

    /// Number of integer instants covered.
    pub fn width(&self) -> usize {
        self.hi - self.lo + 1
    }
}

/// Bounded temporal formula over atoms `A`.
///
/// Inner formulas use [`Predicate`] atoms over one agent's trajectory;
/// outer formulas use [`OuterAtom`] tasks over the whole team.
#[derive(Debug, Clone, PartialEq)]
pub enum Formula<A> {
    True,
    Atom(A),
    Not(Box<Formula<A>>),
    And(Vec<Formula<A>>),
    Or(Vec<Formula<A>>),
    Until(Interval, Box<Formula<A>>, Box<Formula<A>>),
    Eventually(Interval, Box<Formula<A>>),
    Always(Interval, Box<Formula<A>>),
}

#[derive(Debug, Clone, PartialEq)]
pub enum Predicate {
    /// Membership in a named region of the scenario.
    InRegion(String),
    /// `normal . x - offset >= 0`.
    HalfPlane { normal: [f64; 2], offset: f64 },
}

pub type InnerFormula = Formula<Predicate>;

/// At least `count` agents with `capability` satisfy `inner`.
#[derive(Debug, Clone, PartialEq)]
pub struct Task {
    pub inner: InnerFormula,
    pub capability: String,
    pub count: usize,
}

/// A task anchored `time` steps after the evaluation instant.
#[derive(Debug, Clone, PartialEq)]
pub struct TimedTask {
    pub task: Task,
    pub time: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub enum OuterAtom {
    Task(Task),
    Timed(TimedTask),
}

pub type OuterFormula = Formula<OuterAtom>;

/// Latest time offset an atom reads, relative to its evaluation instant.
pub trait AtomHorizon {
    fn atom_horizon(&self) -> usize;
}

impl AtomHorizon for Predicate {
    fn atom_horizon(&self) -> usize {
        0
    }
}

impl AtomHorizon for Task {
    fn atom_horizon(&self) -> usize {
        self.inner.horizon()
    }
}

impl AtomHorizon for TimedTask {
    fn atom_horizon(&self) -> usize {
        self.time + self.task.atom_horizon()
    }
}

impl AtomHorizon for OuterAtom {
    fn atom_horizon(&self) -> usize {
        match self {
            OuterAtom::Task(t) => t.atom_horizon(),
            OuterAtom::Timed(t) => t.atom_horizon(),
        }
    }
}

impl<A> Formula<A> {
    pub fn not(f: Formula<A>) -> Self {
        Formula::Not(Box::new(f))
    }

    pub fn eventually(lo: usize, hi: usize, f: Formula<A>) -> Self {
        Formula::Eventually(Interval::new(lo, hi), Box::new(f))
    }

    pub fn always(lo: usize, hi: usize, f: Formula<A>) -> Self {
        Formula::Always(Interval::new(lo, hi), Box::new(f))
    }

    pub fn until(lo: usize, hi: usize, a: Formula<A>, b: Formula<A>) -> Self {
        Formula::Until(Interval::new(lo, hi), Box::new(a), Box::new(b))
    }

    /// Conjunction that collapses zero or one operands.
    pub fn and(mut fs: Vec<Formula<A>>) -> Self {
        match fs.len() {
            0 => Formula::True,
            1 => fs.pop().expect("one operand"),
            _ => Formula::And(fs),
        }
    }

    pub fn or(mut fs: Vec<Formula<A>>) -> Self {
        match fs.len() {
            0 => Formula::not(Formula::True),
            1 => fs.pop().expect("one operand"),
            _ => Formula::Or(fs),
        }
    }

    pub fn depth(&self) -> usize {
        match self {
            Formula::True | Formula::Atom(_) => 0,
            Formula::Not(f) | Formula::Eventually(_, f) | Formula::Always(_, f) => 1 + f.depth(),
            Formula::And(fs) | Formula::Or(fs) => 1 + fs.iter().map(|f| f.depth()).max().unwrap_or(0),
            Formula::Until(_, a, b) => 1 + a.depth().max(b.depth()),
        }
    }

    /// Visits every atom in left-to-right order.
    pub fn atoms(&self) -> Vec<&A> {
        let mut out = Vec::new();
        self.collect_atoms(&mut out);
        out
    }

    fn collect_atoms<'a>(&'a self, out: &mut Vec<&'a A>) {
        match self {
            Formula::True => {}
            Formula::Atom(a) => out.push(a),
            Formula::Not(f) | Formula::Eventually(_, f) | Formula::Always(_, f) => f.collect_atoms(out),
            Formula::And(fs) | Formula::Or(fs) => fs.iter().for_each(|f| f.collect_atoms(out)),
            Formula::Until(_, a, b) => {
                a.collect_atoms(out);
                b.collect_atoms(out);
            }
        }
    }
}

impl<A: AtomHorizon> Formula<A> {
    /// Latest time offset needed to decide satisfaction.
    pub fn horizon(&self) -> usize {
        match self {
            Formula::True => 0,
            Formula::Atom(a) => a.atom_horizon(),
            Formula::Not(f) => f.horizon(),
            Formula::And(fs) | Formula::Or(fs) => fs.iter().map(|f| f.horizon()).max().unwrap_or(0),
            Formula::Until(i, a, b) => i.hi + a.horizon().max(b.horizon()),
            Formula::Eventually(i, f) | Formula::Always(i, f) => i.hi + f.horizon(),
        }
    }
}

impl OuterFormula {
    pub fn task(inner: InnerFormula, capability: impl Into<String>, count: usize) -> Self {
        Formula::Atom(OuterAtom::Task(Task {
            inner,
            capability: capability.into(),
            count,
        }))
    }

    /// Every task referenced by the formula, timed or not.
    pub fn tasks(&self) -> Vec<&Task> {
        self.atoms()
            .into_iter()
            .map(|a| match a {
                OuterAtom::Task(t) => t,
                OuterAtom::Timed(t) => &t.task,
            })
            .collect()
    }
}

impl InnerFormula {
    pub fn in_region(name: impl Into<String>) -> Self {
        Formula::Atom(Predicate::InRegion(name.into()))
    }

    pub fn regions(&self) -> Vec<&str> {
        self.atoms()
            .into_iter()
            .filter_map(|p| match p {
                Predicate::InRegion(r) => Some(r.as_str()),
                Predicate::HalfPlane { .. } => None,
            })
            .collect()
    }
}

impl fmt::Display for Interval {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{},{}]", self.lo, self.hi)
    }
}

impl fmt::Display for Predicate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Predicate::InRegion(r) => write!(f, "in({r})"),
            Predicate::HalfPlane { normal, offset } => {
                write!(f, "halfplane({}, {}, {})", normal[0], normal[1], offset)
            }
        }
    }
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "task({}, {}, {})", self.inner, self.capability, self.count)
    }
}

impl fmt::Display for TimedTask {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}@{}", self.task, self.time)
    }
}

impl fmt::Display for OuterAtom {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            OuterAtom::Task(t) => t.fmt(f),
            OuterAtom::Timed(t) => t.fmt(f),
        }
    }
}

/// Prints in the surface grammar. Binary and n-ary nodes are always
/// parenthesized, so printing then parsing gives back the same tree.
impl<A: fmt::Display> fmt::Display for Formula<A> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Formula::True => f.write_str("true"),
            Formula::Atom(a) => a.fmt(f),
            Formula::Not(x) => write!(f, "!{x}"),
            Formula::And(xs) | Formula::Or(xs) => {
                let sep = if matches!(self, Formula::And(_)) { " & " } else { " | " };
                f.write_str("(")?;
                for (i, x) in xs.iter().enumerate() {
                    if i > 0 {
                        f.write_str(sep)?;
                    }
                    x.fmt(f)?;
                }
                f.write_str(")")
            }
            Formula::Until(i, a, b) => write!(f, "({a} U{i} {b})"),
            Formula::Eventually(i, x) => write!(f, "F{i} {x}"),
            Formula::Always(i, x) => write!(f, "G{i} {x}"),
        }
    }
}
