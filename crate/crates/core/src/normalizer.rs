//! Negation-free disjunctive normal form over timed tasks.
//!
//! Temporal operators are unrolled into boolean combinations of timed
//! tasks, negations are pushed onto tasks and absorbed by complementing the
//! count, and conjunction is distributed over disjunction.

use std::collections::{BTreeMap, HashMap, HashSet};

use serde::{Deserialize, Serialize};

use crate::error::{CatlError, Result};
use crate::geometry::Region;
use crate::harness::Scenario;
use crate::monitor::{outer_sat, TeamTrajectory};
use crate::spec::{Formula, OuterAtom, OuterFormula, Task, TimedTask};

pub const DEFAULT_CLAUSE_CAP: usize = 10_000;

#[derive(Debug, Clone, PartialEq)]
pub enum BoolExpr {
    True,
    False,
    Atom(TimedTask),
    Not(Box<BoolExpr>),
    And(Vec<BoolExpr>),
    Or(Vec<BoolExpr>),
}

/// Unrolls every temporal operator of `phi`, anchored at `offset`.
pub fn expand_temporal(phi: &OuterFormula, offset: usize) -> BoolExpr {
    match phi {
        Formula::True => BoolExpr::True,
        Formula::Atom(OuterAtom::Task(task)) => BoolExpr::Atom(TimedTask {
            task: task.clone(),
            time: offset,
        }),
        Formula::Atom(OuterAtom::Timed(tt)) => BoolExpr::Atom(TimedTask {
            task: tt.task.clone(),
            time: offset + tt.time,
        }),
        Formula::Not(x) => BoolExpr::Not(Box::new(expand_temporal(x, offset))),
        Formula::And(xs) => BoolExpr::And(xs.iter().map(|x| expand_temporal(x, offset)).collect()),
        Formula::Or(xs) => BoolExpr::Or(xs.iter().map(|x| expand_temporal(x, offset)).collect()),
        Formula::Eventually(i, x) => BoolExpr::Or((i.lo..=i.hi).map(|s| expand_temporal(x, offset + s)).collect()),
        Formula::Always(i, x) => BoolExpr::And((i.lo..=i.hi).map(|s| expand_temporal(x, offset + s)).collect()),
        Formula::Until(i, a, b) => BoolExpr::Or(
            (i.lo..=i.hi)
                .map(|s| {
                    let mut conj = vec![expand_temporal(b, offset + s)];
                    conj.extend((0..s).map(|r| expand_temporal(a, offset + r)));
                    BoolExpr::And(conj)
                })
                .collect(),
        ),
    }
}

/// `not <phi, c, m>_t` as `<not phi, c, |J_c| - m + 1>_t`, with `not not phi`
/// collapsed to `phi`.
pub fn complement(tt: &TimedTask, available: usize) -> Result<TimedTask> {
    let m = tt.task.count;
    if m == 0 || m > available {
        return Err(CatlError::TaskCountExceeds {
            capability: tt.task.capability.clone(),
            count: m,
            available,
        });
    }
    let inner = match &tt.task.inner {
        Formula::Not(x) => (**x).clone(),
        other => Formula::Not(Box::new(other.clone())),
    };
    Ok(TimedTask {
        task: Task {
            inner,
            capability: tt.task.capability.clone(),
            count: available - m + 1,
        },
        time: tt.time,
    })
}

/// Pushes negations to the atoms and replaces negated tasks by their
/// complements. The result contains no `Not`.
pub fn eliminate_negation(e: &BoolExpr, counts: &BTreeMap<String, usize>) -> Result<BoolExpr> {
    push(e, false, counts)
}

fn push(e: &BoolExpr, neg: bool, counts: &BTreeMap<String, usize>) -> Result<BoolExpr> {
    Ok(match e {
        BoolExpr::True if neg => BoolExpr::False,
        BoolExpr::False if neg => BoolExpr::True,
        BoolExpr::True | BoolExpr::False => e.clone(),
        BoolExpr::Atom(tt) => {
            let available = counts.get(&tt.task.capability).copied().unwrap_or(0);
            if tt.task.count > available {
                return Err(CatlError::TaskCountExceeds {
                    capability: tt.task.capability.clone(),
                    count: tt.task.count,
                    available,
                });
            }
            if neg {
                BoolExpr::Atom(complement(tt, available)?)
            } else {
                e.clone()
            }
        }
        BoolExpr::Not(x) => push(x, !neg, counts)?,
        BoolExpr::And(xs) | BoolExpr::Or(xs) => {
            let kids = xs.iter().map(|x| push(x, neg, counts)).collect::<Result<Vec<_>>>()?;
            if matches!(e, BoolExpr::And(_)) != neg {
                BoolExpr::And(kids)
            } else {
                BoolExpr::Or(kids)
            }
        }
    })
}

/// Disjunction of clauses, each a conjunction of timed tasks. No clauses
/// means `false`; an empty clause means `true`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DnfForm {
    #[serde(serialize_with = "ser_clauses", deserialize_with = "de_clauses")]
    pub clauses: Vec<Vec<TimedTask>>,
}

fn ser_clauses<S: serde::Serializer>(c: &[Vec<TimedTask>], s: S) -> std::result::Result<S::Ok, S::Error> {
    use serde::ser::SerializeSeq;
    let mut seq = s.serialize_seq(Some(c.len()))?;
    for clause in c {
        let printed: Vec<String> = clause.iter().map(|t| t.to_string()).collect();
        seq.serialize_element(&printed)?;
    }
    seq.end()
}

fn de_clauses<'de, D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Vec<Vec<TimedTask>>, D::Error> {
    let raw: Vec<Vec<String>> = Deserialize::deserialize(d)?;
    raw.into_iter()
        .map(|clause| {
            clause
                .into_iter()
                .map(|s| match crate::spec::parse_spec(&s) {
                    Ok(Formula::Atom(OuterAtom::Timed(tt))) => Ok(tt),
                    _ => Err(serde::de::Error::custom(format!("not a timed task: {s}"))),
                })
                .collect()
        })
        .collect()
}

impl DnfForm {
    pub fn len(&self) -> usize {
        self.clauses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.clauses.is_empty()
    }

    /// The clause as a conjunction of timed-task atoms.
    pub fn clause_formula(clause: &[TimedTask]) -> OuterFormula {
        Formula::and(clause.iter().map(|t| Formula::Atom(OuterAtom::Timed(t.clone()))).collect())
    }

    pub fn to_formula(&self) -> OuterFormula {
        if self.clauses.is_empty() {
            return Formula::not(Formula::True);
        }
        Formula::or(self.clauses.iter().map(|c| Self::clause_formula(c)).collect())
    }

    /// Whether some clause has all of its timed tasks satisfied at time 0.
    pub fn holds(&self, team: &TeamTrajectory, regions: &[Region]) -> Result<bool> {
        for c in &self.clauses {
            if outer_sat(team, &Self::clause_formula(c), 0, regions)? {
                return Ok(true);
            }
        }
        Ok(false)
    }

    /// Timed tasks that appear anywhere, deduplicated by printed form.
    pub fn distinct_atoms(&self) -> Vec<&TimedTask> {
        let mut seen = HashSet::new();
        self.clauses
            .iter()
            .flatten()
            .filter(|t| seen.insert(t.to_string()))
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DnfOptions {
    pub clause_cap: usize,
}

impl Default for DnfOptions {
    fn default() -> Self {
        DnfOptions {
            clause_cap: DEFAULT_CLAUSE_CAP,
        }
    }
}

/// Clauses as sorted atom ids, with a 64-bit membership signature.
#[derive(Clone, PartialEq, Eq, Hash)]
struct Clause {
    atoms: Vec<u32>,
    sig: u64,
}

impl Clause {
    fn new(mut atoms: Vec<u32>) -> Self {
        atoms.sort_unstable();
        atoms.dedup();
        let sig = atoms.iter().fold(0u64, |s, a| s | 1u64 << (a % 64));
        Clause { atoms, sig }
    }

    fn subset_of(&self, other: &Clause) -> bool {
        if self.sig & !other.sig != 0 || self.atoms.len() > other.atoms.len() {
            return false;
        }
        let mut it = other.atoms.iter();
        self.atoms.iter().all(|a| it.any(|b| b == a))
    }
}

/// Removes duplicates and clauses that contain another clause.
fn simplify(mut cs: Vec<Clause>) -> Vec<Clause> {
    let mut seen = HashSet::new();
    cs.retain(|c| seen.insert(c.clone()));
    cs.sort_by(|a, b| a.atoms.len().cmp(&b.atoms.len()).then_with(|| a.atoms.cmp(&b.atoms)));
    let mut kept: Vec<Clause> = Vec::with_capacity(cs.len());
    for c in cs {
        if !kept.iter().any(|k| k.subset_of(&c)) {
            kept.push(c);
        }
    }
    kept
}

struct Distributor {
    ids: HashMap<String, u32>,
    atoms: Vec<TimedTask>,
    cap: usize,
}

impl Distributor {
    fn run(&mut self, e: &BoolExpr) -> Result<Vec<Clause>> {
        match e {
            BoolExpr::True => Ok(vec![Clause::new(vec![])]),
            BoolExpr::False => Ok(vec![]),
            BoolExpr::Atom(tt) => {
                let key = tt.to_string();
                let next = self.atoms.len() as u32;
                let id = *self.ids.entry(key).or_insert(next);
                if id == next {
                    self.atoms.push(tt.clone());
                }
                Ok(vec![Clause::new(vec![id])])
            }
            BoolExpr::Not(_) => Err(CatlError::Invalid("negation left after elimination".into())),
            BoolExpr::Or(xs) => {
                let mut out = Vec::new();
                for x in xs {
                    out.extend(self.run(x)?);
                    if out.len() > self.cap {
                        out = simplify(out);
                    }
                    self.check(out.len() as f64)?;
                }
                Ok(simplify(out))
            }
            BoolExpr::And(xs) => {
                let mut acc = vec![Clause::new(vec![])];
                for x in xs {
                    let rhs = self.run(x)?;
                    self.check(acc.len() as f64 * rhs.len() as f64)?;
                    let mut next = Vec::with_capacity(acc.len() * rhs.len());
                    for a in &acc {
                        for b in &rhs {
                            let mut atoms = a.atoms.clone();
                            atoms.extend_from_slice(&b.atoms);
                            next.push(Clause::new(atoms));
                        }
                    }
                    acc = simplify(next);
                    if acc.is_empty() {
                        break;
                    }
                }
                Ok(acc)
            }
        }
    }

    fn check(&self, estimate: f64) -> Result<()> {
        if estimate > self.cap as f64 {
            return Err(CatlError::ClauseCapExceeded {
                estimate,
                cap: self.cap,
            });
        }
        Ok(())
    }
}

/// DNF of `phi` for a team with the given number of agents per capability.
pub fn to_dnf_with_counts(phi: &OuterFormula, counts: &BTreeMap<String, usize>, options: DnfOptions) -> Result<DnfForm> {
    let expanded = expand_temporal(phi, 0);
    let nnf = eliminate_negation(&expanded, counts)?;
    let mut d = Distributor {
        ids: HashMap::new(),
        atoms: Vec::new(),
        cap: options.clause_cap,
    };
    let clauses = d.run(&nnf)?;
    Ok(DnfForm {
        clauses: clauses
            .into_iter()
            .map(|c| c.atoms.iter().map(|&a| d.atoms[a as usize].clone()).collect())
            .collect(),
    })
}

pub fn to_dnf(phi: &OuterFormula, scenario: &Scenario, options: DnfOptions) -> Result<DnfForm> {
    scenario.bind(phi)?;
    to_dnf_with_counts(phi, &scenario.capability_counts(), options)
}
