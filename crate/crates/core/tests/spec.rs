use catl::spec::{
    capability_vector, parse_inner, parse_spec, Formula, InnerFormula, Interval, OuterAtom, OuterFormula, Predicate,
    Task, TimedTask,
};
use proptest::prelude::*;

fn interval() -> impl Strategy<Value = Interval> {
    (0usize..6, 0usize..6).prop_map(|(a, w)| Interval { lo: a, hi: a + w })
}

fn finite() -> impl Strategy<Value = f64> {
    prop_oneof![(-1000i32..1000).prop_map(f64::from), -1e3f64..1e3, Just(-0.0)]
}

fn predicate() -> impl Strategy<Value = Predicate> {
    prop_oneof![
        "[A-Z][a-z0-9_]{0,5}".prop_map(Predicate::InRegion),
        (finite(), finite(), finite()).prop_map(|(a, b, c)| Predicate::HalfPlane { normal: [a, b], offset: c }),
    ]
}

fn formula<A: Clone + std::fmt::Debug + 'static>(
    leaf: impl Strategy<Value = A> + 'static,
    depth: u32,
) -> impl Strategy<Value = Formula<A>> {
    let leaf = prop_oneof![1 => Just(Formula::True), 4 => leaf.prop_map(Formula::Atom)];
    leaf.prop_recursive(depth, 48, 3, |inner| {
        prop_oneof![
            inner.clone().prop_map(|f| Formula::Not(Box::new(f))),
            prop::collection::vec(inner.clone(), 2..4).prop_map(Formula::And),
            prop::collection::vec(inner.clone(), 2..4).prop_map(Formula::Or),
            (interval(), inner.clone(), inner.clone()).prop_map(|(i, a, b)| Formula::Until(i, Box::new(a), Box::new(b))),
            (interval(), inner.clone()).prop_map(|(i, f)| Formula::Eventually(i, Box::new(f))),
            (interval(), inner).prop_map(|(i, f)| Formula::Always(i, Box::new(f))),
        ]
    })
}

fn inner_formula(depth: u32) -> impl Strategy<Value = InnerFormula> {
    formula(predicate(), depth)
}

fn outer_formula() -> impl Strategy<Value = OuterFormula> {
    let task = (inner_formula(2), "[A-Z][a-zA-Z]{0,6}", 1usize..8)
        .prop_map(|(inner, capability, count)| Task { inner, capability, count });
    let atom = (task, prop::option::of(0usize..10)).prop_map(|(task, time)| match time {
        Some(time) => OuterAtom::Timed(TimedTask { task, time }),
        None => OuterAtom::Task(task),
    });
    formula(atom, 5)
}

/// Structural equality that also distinguishes `0.0` from `-0.0`.
fn same_bits(a: &str, b: &OuterFormula) -> bool {
    a == b.to_string()
}

proptest! {
    #[test]
    fn print_then_parse_is_identity(phi in outer_formula()) {
        let text = phi.to_string();
        let back = parse_spec(&text).unwrap();
        prop_assert_eq!(&back, &phi);
        prop_assert!(same_bits(&text, &back));
    }

    #[test]
    fn inner_print_then_parse_is_identity(phi in inner_formula(5)) {
        prop_assert_eq!(parse_inner(&phi.to_string()).unwrap(), phi);
    }

    #[test]
    fn horizon_is_structural(phi in outer_formula(), psi in outer_formula(), a in 0usize..5, w in 0usize..5) {
        let f = Formula::Eventually(Interval { lo: a, hi: a + w }, Box::new(phi.clone()));
        prop_assert_eq!(f.horizon(), a + w + phi.horizon());
        let g = Formula::Always(Interval { lo: a, hi: a + w }, Box::new(phi.clone()));
        prop_assert_eq!(g.horizon(), a + w + phi.horizon());
        let c = Formula::And(vec![phi.clone(), psi.clone()]);
        prop_assert_eq!(c.horizon(), phi.horizon().max(psi.horizon()));
    }

    #[test]
    fn capability_vector_has_one_entry_per_capability(mask in prop::collection::vec(any::<bool>(), 5)) {
        let vocab: Vec<String> = (0..5).map(|i| format!("C{i}")).collect();
        let caps: Vec<&String> = vocab.iter().zip(&mask).filter(|(_, m)| **m).map(|(c, _)| c).collect();
        let v = capability_vector(&caps, &vocab).unwrap();
        prop_assert_eq!(v.iter().filter(|x| **x == 1.0).count(), caps.len());
        prop_assert!(v.iter().all(|x| *x == 0.0 || *x == 1.0));
    }
}

#[test]
fn case_study_horizon_is_25() {
    let text = include_str!("../scenarios/case_study.catl");
    assert_eq!(parse_spec(text).unwrap().horizon(), 25);
}
