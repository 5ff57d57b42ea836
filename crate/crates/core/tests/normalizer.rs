mod common;

use std::collections::{BTreeMap, HashMap};

use catl::geometry::Region;
use catl::monitor::{outer_sat, AgentTrajectory, IndividualTrajectory, TeamTrajectory};
use catl::normalizer::{
    complement, eliminate_negation, expand_temporal, to_dnf, to_dnf_with_counts, BoolExpr, DnfForm, DnfOptions,
};
use catl::spec::{parse_spec, Formula, OuterAtom, OuterFormula, TimedTask};
use common::*;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn eval_assignment(e: &BoolExpr, truth: &HashMap<String, bool>) -> bool {
    match e {
        BoolExpr::True => true,
        BoolExpr::False => false,
        BoolExpr::Atom(t) => truth[&t.to_string()],
        BoolExpr::Not(x) => !eval_assignment(x, truth),
        BoolExpr::And(xs) => xs.iter().all(|x| eval_assignment(x, truth)),
        BoolExpr::Or(xs) => xs.iter().any(|x| eval_assignment(x, truth)),
    }
}

#[test]
fn until_expansion_matches_by_enumeration() {
    let phi = parse_spec("task(in(P), A, 1) U[1,2] task(in(Q), A, 1)").unwrap();
    let e = expand_temporal(&phi, 0);
    let names: Vec<String> = ["P", "Q"]
        .iter()
        .flat_map(|r| (0..3).map(move |t| format!("task(in({r}), A, 1)@{t}")))
        .collect();
    for bits in 0u32..(1 << names.len()) {
        let truth: HashMap<String, bool> = names.iter().enumerate().map(|(i, n)| (n.clone(), bits >> i & 1 == 1)).collect();
        let t1 = |t: usize| truth[&format!("task(in(P), A, 1)@{t}")];
        let t2 = |t: usize| truth[&format!("task(in(Q), A, 1)@{t}")];
        let expected = (t2(1) && t1(0)) || (t2(2) && t1(0) && t1(1));
        assert_eq!(eval_assignment(&e, &truth), expected, "pattern {bits:b}");
    }
}

/// Team where agent `j` stands inside `P` iff bit `j` of `pattern` is set.
fn pattern_team(n: usize, pattern: u32, p: &Region) -> TeamTrajectory {
    let inside = p.bounding_box().center();
    let members = (0..n)
        .map(|j| AgentTrajectory {
            id: j + 1,
            capabilities: ["A".to_string()].into(),
            trajectory: IndividualTrajectory::from_states(vec![if pattern >> j & 1 == 1 { inside } else { [-5.0, -5.0] }]),
        })
        .collect();
    TeamTrajectory::new(members).unwrap()
}

#[test]
fn complemented_count_is_exact_over_all_patterns() {
    let p = Region::rect("P", [0.0, 0.0], [1.0, 1.0]).unwrap();
    for n in 1..=5usize {
        for m in 1..=n {
            let neg = parse_spec(&format!("!task(in(P), A, {m})")).unwrap();
            let Formula::Not(inner) = &neg else { unreachable!() };
            let Formula::Atom(OuterAtom::Task(task)) = &**inner else { unreachable!() };
            let comp = complement(&TimedTask { task: task.clone(), time: 0 }, n).unwrap();
            assert_eq!(comp.task.count, n - m + 1);
            let comp_formula = Formula::Atom(OuterAtom::Timed(comp));
            for pattern in 0u32..(1 << n) {
                let satisfied = pattern.count_ones() as usize;
                let expected = !(satisfied >= m);
                assert_eq!(n - satisfied >= n - m + 1, expected);
                let team = pattern_team(n, pattern, &p);
                let regions = [p.clone()];
                assert_eq!(outer_sat(&team, &neg, 0, &regions).unwrap(), expected);
                assert_eq!(outer_sat(&team, &comp_formula, 0, &regions).unwrap(), expected);
            }
        }
    }
}

#[test]
fn bridge_load_example() {
    let counts = BTreeMap::from([("Ground".to_string(), 4)]);
    let e = expand_temporal(&parse_spec("!task(in(B), Ground, 2)").unwrap(), 0);
    let out = eliminate_negation(&e, &counts).unwrap();
    let BoolExpr::Atom(t) = out else { panic!("{out:?}") };
    assert_eq!(t.to_string(), "task(!in(B), Ground, 3)@0");
}

#[test]
fn case_study_expands_only_the_outer_until() {
    let (scenario, phi) = catl::harness::case_study();
    let d = to_dnf(&phi, &scenario, DnfOptions::default()).unwrap();
    assert_eq!(d.len(), 6);
    for c in &d.clauses {
        assert!(c.iter().all(|t| t.task.count <= scenario.capability_counts()[&t.task.capability]));
    }
}

fn has_outer_not(f: &OuterFormula) -> bool {
    match f {
        Formula::Not(_) => true,
        Formula::And(xs) | Formula::Or(xs) => xs.iter().any(has_outer_not),
        _ => false,
    }
}

fn clause_set(d: &DnfForm) -> Vec<Vec<String>> {
    let mut v: Vec<Vec<String>> = d
        .clauses
        .iter()
        .map(|c| {
            let mut s: Vec<String> = c.iter().map(|t| t.to_string()).collect();
            s.sort();
            s
        })
        .collect();
    v.sort();
    v
}

proptest! {
    #![proptest_config(ProptestConfig { failure_persistence: None, ..ProptestConfig::with_cases(200) })]

    #[test]
    fn dnf_is_equivalent_and_negation_free(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let inst = random_instance(&mut rng);
        let counts = inst.team.capability_counts();
        let d = to_dnf_with_counts(&inst.formula, &counts, DnfOptions::default()).unwrap();
        let expect = outer_sat(&inst.team, &inst.formula, 0, &inst.regions).unwrap();
        prop_assert_eq!(d.holds(&inst.team, &inst.regions).unwrap(), expect);
        let rebuilt = d.to_formula();
        if !d.is_empty() {
            prop_assert!(!has_outer_not(&rebuilt));
        }
        let again = to_dnf_with_counts(&rebuilt, &counts, DnfOptions::default()).unwrap();
        prop_assert_eq!(clause_set(&again), clause_set(&d));
        for t in d.distinct_atoms() {
            prop_assert!(t.time + t.task.inner.horizon() <= inst.formula.horizon());
        }
    }
}
