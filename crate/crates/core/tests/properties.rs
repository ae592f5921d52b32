use std::collections::BTreeSet;

use proptest::prelude::*;

use hrc_core::gen::{random_instance, RandomSpec};
use hrc_core::io::{parse_csp_text, parse_dimacs_col, serialize_csp_text};
use hrc_core::kb::NogoodStore;
use hrc_core::metrics::RunReport;
use hrc_core::model::complete_graph_coloring;
use hrc_core::{
    brute_force_solve, compare_reports, emit_report, entails, generate_full, is_false_nogood, run_async,
    run_synchronous, subsumes, CspInstance, Literal, Nogood, Outcome, Policy, ReportFormat, SatStatus, UpdateStatus,
    Value, VarId,
};

/// Smaller than the acceptance sweep so that baseline runs stay cheap.
fn small_spec() -> RandomSpec {
    RandomSpec {
        vars: 2..=4,
        domain: 2..=3,
        nogoods: 1..=8,
        arity: 1..=3,
    }
}

const DOMAINS: [u32; 3] = [3, 2, 3];

/// Nogoods over three variables with the domains above, each mentioning x1.
/// Literals may repeat a variable, so false nogoods show up too.
fn owner_nogood() -> impl Strategy<Value = Nogood> {
    let lit = (0u32..3).prop_flat_map(|v| (Just(v), 1..=DOMAINS[v as usize]));
    (1..=DOMAINS[0], proptest::collection::vec(lit, 0..3)).prop_map(|(d, rest)| {
        let mut lits = vec![Literal::new(0, d)];
        lits.extend(rest.into_iter().map(|(v, d)| Literal::new(v, d)));
        lits.into_iter().collect()
    })
}

fn domains() -> Vec<Vec<Value>> {
    DOMAINS.iter().map(|&m| (1..=m).map(Value).collect()).collect()
}

fn as_instance(nogoods: impl IntoIterator<Item = Nogood>) -> CspInstance {
    CspInstance::new(domains(), nogoods)
}

fn fill(policy: Policy, nogoods: &[Nogood]) -> (NogoodStore, Vec<usize>) {
    let mut store = NogoodStore::empty(VarId(0), &domains()[0]);
    let mut sizes = vec![store.store_size()];
    for n in nogoods {
        let outcome = store.update(n.clone(), policy).expect("mentions the owner");
        if outcome.status == UpdateStatus::Added {
            for e in &outcome.eliminated {
                assert!(subsumes(n, e), "{n} eliminated {e} without subsuming it");
            }
        } else {
            assert!(outcome.eliminated.is_empty());
        }
        sizes.push(store.store_size());
    }
    (store, sizes)
}

fn model_set(inst: &CspInstance) -> BTreeSet<Vec<u32>> {
    let mut models = BTreeSet::new();
    let sizes: Vec<u32> = inst.domains().iter().map(|d| d.len() as u32).collect();
    let mut point = vec![0u32; sizes.len()];
    loop {
        let values: Vec<Value> = point.iter().map(|&i| Value(i + 1)).collect();
        if inst.nogoods().iter().all(|n| !n.violated_by(&values)) {
            models.insert(point.clone());
        }
        let mut i = sizes.len();
        loop {
            if i == 0 {
                return models;
            }
            i -= 1;
            point[i] += 1;
            if point[i] < sizes[i] {
                break;
            }
            point[i] = 0;
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn ekbm_store_stays_subsumption_free(nogoods in proptest::collection::vec(owner_nogood(), 0..20)) {
        let (store, _) = fill(Policy::Ekbm, &nogoods);
        prop_assert!(store.is_coherent());
        for a in store.stored() {
            prop_assert!(!is_false_nogood(a));
            for b in store.stored() {
                prop_assert!(a == b || !subsumes(a, b), "{a} subsumes {b}");
            }
        }
    }

    #[test]
    fn baseline_store_only_grows(nogoods in proptest::collection::vec(owner_nogood(), 0..20)) {
        let (store, sizes) = fill(Policy::Baseline, &nogoods);
        prop_assert!(store.is_coherent());
        prop_assert!(sizes.windows(2).all(|w| w[0] <= w[1]));
        let distinct: BTreeSet<&Nogood> = nogoods.iter().collect();
        prop_assert_eq!(store.store_size(), distinct.len());
    }

    #[test]
    fn policies_keep_the_same_models(nogoods in proptest::collection::vec(owner_nogood(), 0..20)) {
        let (base, _) = fill(Policy::Baseline, &nogoods);
        let (ekbm, _) = fill(Policy::Ekbm, &nogoods);
        prop_assert_eq!(
            model_set(&as_instance(base.stored().iter().cloned())),
            model_set(&as_instance(ekbm.stored().iter().cloned()))
        );
    }

    #[test]
    fn resolvents_are_entailed(nogoods in proptest::collection::vec(owner_nogood(), 0..12)) {
        for policy in [Policy::Baseline, Policy::Ekbm] {
            let (store, _) = fill(policy, &nogoods);
            let inst = as_instance(store.stored().iter().cloned());
            let batch = generate_full(&store, policy);
            for n in batch.distinct() {
                prop_assert!(entails(&inst, n).unwrap(), "{policy}: {n} not entailed");
                if policy == Policy::Ekbm {
                    prop_assert!(!n.mentions(VarId(0)), "ekbm resolvent {n} mentions the owner");
                }
            }
        }
    }

    #[test]
    fn schedulers_agree_with_the_oracle(seed in any::<u64>(), run_seed in 0u64..4) {
        let inst = random_instance(&small_spec(), seed);
        let expected = match brute_force_solve(&inst).unwrap().status {
            SatStatus::Sat => Outcome::Saturated,
            SatStatus::Unsat => Outcome::Refuted,
        };
        for policy in [Policy::Baseline, Policy::Ekbm] {
            let sync = run_synchronous(&inst, policy, 10_000).unwrap();
            let async_ = run_async(&inst, policy, run_seed, 3, 5_000_000).unwrap();
            prop_assert!(!sync.truncated() && !async_.truncated());
            prop_assert_eq!(sync.verdict.outcome, expected);
            prop_assert_eq!(async_.verdict.outcome, expected);
        }
    }

    #[test]
    fn runs_are_deterministic(seed in any::<u64>(), run_seed in any::<u64>()) {
        let inst = random_instance(&small_spec(), seed);
        let a = run_synchronous(&inst, Policy::Ekbm, 10_000).unwrap();
        let b = run_synchronous(&inst, Policy::Ekbm, 10_000).unwrap();
        prop_assert_eq!(emit_report(&a.report, ReportFormat::Csv), emit_report(&b.report, ReportFormat::Csv));
        prop_assert_eq!(a.trace.to_jsonl(), b.trace.to_jsonl());
        let a = run_async(&inst, Policy::Ekbm, run_seed, 4, 5_000_000).unwrap();
        let b = run_async(&inst, Policy::Ekbm, run_seed, 4, 5_000_000).unwrap();
        prop_assert_eq!(a.trace.to_jsonl(), b.trace.to_jsonl());
        prop_assert_eq!(a.trace.fifo_violations(), 0);
    }

    #[test]
    fn text_format_round_trips(seed in any::<u64>()) {
        let inst = random_instance(&small_spec(), seed);
        let text = serialize_csp_text(&inst);
        prop_assert_eq!(parse_csp_text(&text).unwrap(), inst);
    }

    #[test]
    fn dimacs_edge_order_does_not_matter(
        edges in proptest::collection::btree_set((1u32..=5, 1u32..=5), 1..10),
        seed in any::<u64>(),
    ) {
        let edges: Vec<(u32, u32)> = edges.into_iter().filter(|(u, v)| u != v).collect();
        let render = |es: &[(u32, u32)]| {
            let mut s = format!("c test\np edge 5 {}\n", es.len());
            for (u, v) in es {
                s.push_str(&format!("e {u} {v}\n"));
            }
            s
        };
        let mut shuffled = edges.clone();
        let mut rng = <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(seed);
        rand::seq::SliceRandom::shuffle(shuffled.as_mut_slice(), &mut rng);
        let a = parse_dimacs_col(&render(&edges), 3).unwrap().instance;
        let b = parse_dimacs_col(&render(&shuffled), 3).unwrap().instance;
        prop_assert_eq!(a, b);
    }

    #[test]
    fn reports_are_byte_stable(seed in any::<u64>()) {
        let inst = random_instance(&small_spec(), seed);
        let run = run_synchronous(&inst, Policy::Ekbm, 10_000).unwrap();
        for format in [ReportFormat::Csv, ReportFormat::Json] {
            prop_assert_eq!(emit_report(&run.report, format), emit_report(&run.report.clone(), format));
        }
        let json = emit_report(&run.report, ReportFormat::Json);
        let back: RunReport = serde_json::from_str(&json).unwrap();
        prop_assert_eq!(back, run.report);
    }
}

#[test]
fn comparison_of_worked_example() {
    let inst = complete_graph_coloring(3, 2);
    let base = run_synchronous(&inst, Policy::Baseline, 100).unwrap();
    let ekbm = run_synchronous(&inst, Policy::Ekbm, 100).unwrap();
    let cmp = compare_reports(&base.report, &ekbm.report).unwrap();
    assert!(cmp.verdicts_agree);
    for t in &cmp.totals {
        assert_eq!((t.generated_a, t.generated_b), (36, 13), "{}", t.agent);
    }
    let same = compare_reports(&ekbm.report, &ekbm.report).unwrap();
    assert!(same
        .rows
        .iter()
        .all(|r| r.generated_a == r.generated_b && r.kb_size_a == r.kb_size_b));
}

#[test]
fn csv_has_the_final_ekbm_rows() {
    let inst = complete_graph_coloring(3, 2);
    let run = run_synchronous(&inst, Policy::Ekbm, 100).unwrap();
    let csv = emit_report(&run.report, ReportFormat::Csv);
    let mut lines = csv.lines();
    assert_eq!(
        lines.next(),
        Some("# policy=ekbm verdict=refuted rounds=3 truncated=false")
    );
    assert_eq!(
        lines.next(),
        Some("round,agent,generated,sent,received,added,dropped_duplicate,dropped_subsumed,eliminated,kb_size_after")
    );
    for agent in ["x1", "x2", "x3"] {
        let row: Vec<&str> = csv
            .lines()
            .find(|l| l.starts_with(&format!("2,{agent},")))
            .expect("round 2 row")
            .split(',')
            .collect();
        // generated, added, eliminated, kb_size_after
        assert_eq!((row[2], row[5], row[8], row[9]), ("1", "2", "8", "2"), "{agent}");
    }
}
