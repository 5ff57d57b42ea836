use catl::harness::{repair_toy, Scenario};
use catl::monitor::{count, outer_sat, TeamTrajectory};
use catl::normalizer::{to_dnf, DnfOptions};
use catl::repair::{repair, repair_clause, sort_desc, RepairConfig, Verdict};
use catl::spec::OuterFormula;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_team(scenario: &Scenario, rng: &mut ChaCha8Rng) -> TeamTrajectory {
    let x0 = scenario.sample_initial(rng);
    let controls = scenario
        .agents
        .iter()
        .map(|a| {
            (0..scenario.horizon)
                .map(|_| [rng.gen_range(-a.u_max[0]..=a.u_max[0]), rng.gen_range(-a.u_max[1]..=a.u_max[1])])
                .collect()
        })
        .collect();
    scenario.team_from_controls(&x0, controls).unwrap()
}

fn violating_teams(scenario: &Scenario, phi: &OuterFormula, n: usize, seed: u64) -> Vec<TeamTrajectory> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    while out.len() < n {
        let team = random_team(scenario, &mut rng);
        if !outer_sat(&team, phi, 0, &scenario.regions).unwrap() {
            out.push(team);
        }
    }
    out
}

fn quick_config(seed: u64) -> RepairConfig {
    let mut cfg = RepairConfig::default();
    cfg.synthesis.iterations = 300;
    cfg.synthesis.restarts = 4;
    cfg.synthesis.seed = seed;
    cfg
}

#[test]
fn randomized_repairs_are_sound() {
    let (scenario, phi) = repair_toy();
    let teams = violating_teams(&scenario, &phi, 100, 7);
    let mut successes = 0;
    for (i, team) in teams.iter().enumerate() {
        let out = repair(team, &phi, &scenario, &quick_config(i as u64)).unwrap();
        if out.verdict == Verdict::Success {
            successes += 1;
            assert!(outer_sat(&out.trajectory, &phi, 0, &scenario.regions).unwrap(), "instance {i}");
            assert!(out.robustness >= 0.0);
        }
        for (j, m) in out.trajectory.members().iter().enumerate() {
            if !out.flagged.contains(&m.id) {
                assert_eq!(m.trajectory.states, team.member(j).trajectory.states, "instance {i}, agent {}", m.id);
            }
        }
        out.trajectory.members().iter().for_each(|m| m.trajectory.check_dynamics(1e-9).unwrap());
    }
    eprintln!("repair success verdicts: {successes}/100");
    assert!(successes > 0);
}

#[test]
fn satisfying_team_is_returned_unchanged() {
    let (scenario, phi) = repair_toy();
    let teams = violating_teams(&scenario, &phi, 5, 11);
    for (i, team) in teams.iter().enumerate() {
        let out = repair(team, &phi, &scenario, &quick_config(i as u64)).unwrap();
        if out.verdict != Verdict::Success {
            continue;
        }
        let again = repair(&out.trajectory, &phi, &scenario, &quick_config(99)).unwrap();
        assert_eq!(again.verdict, Verdict::Success);
        assert!(again.flagged.is_empty() && again.syntheses.is_empty());
        assert_eq!(again.trajectory, out.trajectory);
    }
}

#[test]
fn clause_runs_keep_assignment_cardinality_and_change_one_agent_at_a_time() {
    let (scenario, phi) = repair_toy();
    let dnf = to_dnf(&phi, &scenario, DnfOptions::default()).unwrap();
    for (i, team) in violating_teams(&scenario, &phi, 30, 23).iter().enumerate() {
        for (k, clause) in dnf.clauses.iter().enumerate() {
            let mut log = Vec::new();
            let Some(st) = repair_clause(team, clause, k, &scenario, &quick_config(i as u64), &mut log).unwrap() else {
                continue;
            };
            for (t, tt) in clause.iter().enumerate() {
                let assigned = st.assignments.iter().filter(|a| a.contains(&t)).count();
                assert!(assigned == 0 || assigned == tt.task.count, "task {tt} has {assigned} agents");
            }
            for j in 0..team.len() {
                if !st.repaired.contains(&j) {
                    assert_eq!(st.team.member(j), team.member(j));
                } else {
                    assert!(st.flags[j] && !st.assignments[j].is_empty());
                }
            }
            let ids: Vec<usize> = st.repaired.iter().map(|&j| team.member(j).id).collect();
            let sorted = {
                let mut v = ids.clone();
                v.sort();
                v
            };
            assert_eq!(ids, sorted);

            // Replaying the repairs in order, no task count ever drops by more than one.
            let mut work = team.clone();
            for &j in &st.repaired {
                let before: Vec<usize> = clause
                    .iter()
                    .map(|tt| count(&work, &tt.task.capability, &tt.task.inner, tt.time, &scenario.regions).unwrap())
                    .collect();
                work.set_trajectory(j, st.team.member(j).trajectory.clone()).unwrap();
                for (tt, b) in clause.iter().zip(before) {
                    let a = count(&work, &tt.task.capability, &tt.task.inner, tt.time, &scenario.regions).unwrap();
                    assert!(a + 1 >= b);
                }
            }
        }
    }
}

#[test]
fn same_seed_same_repair() {
    let (scenario, phi) = repair_toy();
    let team = &violating_teams(&scenario, &phi, 1, 3)[0];
    let a = repair(team, &phi, &scenario, &quick_config(5)).unwrap();
    let b = repair(team, &phi, &scenario, &quick_config(5)).unwrap();
    assert_eq!(a.trajectory, b.trajectory);
    assert_eq!(a.verdict, b.verdict);
}

proptest! {
    #![proptest_config(ProptestConfig { failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn sort_desc_is_a_sorted_stable_permutation(v in prop::collection::vec(-5i32..5, 0..40)) {
        let vals: Vec<f64> = v.iter().map(|&x| x as f64 * 0.5).collect();
        let p = sort_desc(&vals);
        let mut seen = p.clone();
        seen.sort();
        prop_assert_eq!(seen, (0..vals.len()).collect::<Vec<_>>());
        for w in p.windows(2) {
            prop_assert!(vals[w[0]] > vals[w[1]] || (vals[w[0]] == vals[w[1]] && w[0] < w[1]));
        }
    }
}
