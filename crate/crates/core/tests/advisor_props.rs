mod common;

use std::collections::{BTreeMap, BTreeSet};

use campaign_dss::advisor::{
    decision_path, reachable, suggest, what_if, EvidencePanel, Scenario, Status,
};
use campaign_dss::cart::{grow, GrowParams, NodeKind, Outcome, Tree};
use campaign_dss::dataset::{Dataset, EncodedRecord, Evidence, Label, Predicate, Schema};
use campaign_dss::fixture::{self, SAMPLE_CUSTOMER};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn binary_case() -> impl Strategy<Value = (usize, Vec<(u8, bool)>, Vec<u8>)> {
    (1usize..=4).prop_flat_map(|k| {
        (Just(k), prop::collection::vec((0u8..16, any::<bool>()), 2..40), prop::collection::vec(0u8..5, k))
    })
}

fn binary_tree(ds: &Dataset) -> Tree {
    grow(ds, &GrowParams { min_parent: 2, ..Default::default() }).unwrap()
}

fn used_attributes(t: &Tree) -> BTreeSet<usize> {
    t.nodes.iter().filter_map(|n| n.split().map(|s| s.attribute)).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn reachable_equals_completion_enumeration((k, rows, spec) in binary_case()) {
        let ds = common::binary_data(k, &rows);
        let t = binary_tree(&ds);
        let ev = common::binary_evidence(&spec);
        let (_, leaves, forks) = common::visited(&t, &ev, k);
        let got = reachable(&t, &EvidencePanel::new(ev, &ds.schema));
        prop_assert_eq!(got.leaves(), leaves);
        prop_assert_eq!(got.paths.len(), got.leaves().len());
        for p in &got.paths {
            prop_assert_eq!(&p.rule_id, &t.leaf_id(p.leaf));
            prop_assert_eq!(p.segments.last().unwrap().node, p.leaf);
            let mut forked = false;
            for seg in &p.segments {
                forked |= forks.contains(&seg.node);
                let want = if forked { Status::Suggested } else { Status::Decided };
                prop_assert_eq!(seg.status, want);
            }
            let on_path_forks = p.segments.iter().filter(|s| forks.contains(&s.node)).count();
            prop_assert_eq!(p.choices.len(), on_path_forks);
        }
    }

    #[test]
    fn fully_specified_evidence_is_the_decision_path((k, rows, _) in binary_case(), bits in 0u8..16) {
        let ds = common::binary_data(k, &rows);
        let t = binary_tree(&ds);
        let x: Vec<i64> = (0..k).map(|i| i64::from(bits >> i & 1)).collect();
        let mut ev = Evidence::new();
        for (a, &v) in x.iter().enumerate() {
            ev = ev.with(a, Predicate::Equals(v)).unwrap();
        }
        let got = reachable(&t, &EvidencePanel::new(ev, &ds.schema));
        prop_assert_eq!(got.paths.len(), 1);
        prop_assert_eq!(&got.paths[0].segments, &decision_path(&t, &x));
        prop_assert!(got.paths[0].choices.is_empty());
    }

    #[test]
    fn tightening_evidence_never_adds_leaves((k, rows, spec) in binary_case(), extra in 0usize..4, value in 0i64..2) {
        let ds = common::binary_data(k, &rows);
        let t = binary_tree(&ds);
        let loose = common::binary_evidence(&spec);
        let a = extra % k;
        let mut tight = loose.clone();
        let narrowed = match tight.get(a) {
            None => Predicate::Equals(value),
            Some(p) => Predicate::OneOf([value].into_iter().filter(|&v| p.matches(v)).collect()),
        };
        tight.constraints.insert(a, narrowed);
        let wide = reachable(&t, &EvidencePanel::new(loose, &ds.schema)).leaves();
        let narrow = reachable(&t, &EvidencePanel::new(tight, &ds.schema)).leaves();
        prop_assert!(narrow.is_subset(&wide));
    }

    #[test]
    fn suggestions_replay_to_their_leaf((k, rows, spec) in binary_case()) {
        let ds = common::binary_data(k, &rows);
        let t = binary_tree(&ds);
        let ev = common::binary_evidence(&spec);
        let panel = EvidencePanel { evidence: ev.clone(), actionable: (0..k).step_by(2).collect(), prospective: BTreeSet::new() };
        let advice = suggest(&t, &panel, &ds);
        let reach = reachable(&t, &panel);
        let yes: BTreeSet<usize> = reach.paths.iter().filter(|p| p.outcome == Outcome::Yes).map(|p| p.leaf).collect();
        prop_assert_eq!(advice.suggestions.iter().map(|s| s.leaf).collect::<BTreeSet<_>>(), yes);
        for s in &advice.suggestions {
            let chosen: Vec<Vec<i64>> = common::completions(k)
                .filter(|x| ev.matches(x, None))
                .filter(|x| s.conditions.iter().chain(&s.assumptions).all(|c| c.holds(x)))
                .collect();
            prop_assert!(!chosen.is_empty());
            for x in chosen {
                prop_assert_eq!(t.route(&x).leaf, s.leaf);
            }
            prop_assert!(s.conditions.iter().all(|c| panel.actionable.contains(&c.attribute)));
            prop_assert!(s.assumptions.iter().all(|c| !panel.actionable.contains(&c.attribute)));
        }
        prop_assert!(advice.suggestions.windows(2).all(|w| w[0].score >= w[1].score));
    }

    #[test]
    fn what_if_equals_merge_oracle(seed in any::<u64>(), picks in prop::collection::btree_map(0usize..16, any::<u32>(), 0..4)) {
        let ds = common::bank_like(400, seed);
        let t = grow(&ds, &GrowParams::default()).unwrap();
        let base = ds.records[(seed % 400) as usize].x.clone();
        let donor = &ds.records[(seed / 400 % 400) as usize].x;
        let overrides: BTreeMap<String, i64> = picks
            .keys()
            .map(|&a| (ds.schema.name(a).to_string(), donor[a]))
            .collect();
        let mut merged = base.clone();
        for &a in picks.keys() {
            merged[a] = donor[a];
        }
        let w = what_if(&t, &Scenario { base: base.clone(), overrides }).unwrap();
        let r = t.route(&merged);
        prop_assert_eq!(&w.record, &merged);
        prop_assert_eq!(w.label, r.label);
        prop_assert_eq!(&w.rule_id, &t.leaf_id(r.leaf));
        prop_assert_eq!(w.base_label, t.predict(&base));
        prop_assert_eq!(w.changed, r.label != t.predict(&base));
        prop_assert_eq!(&w.path, &decision_path(&t, &merged));
    }

    #[test]
    fn overrides_on_untested_attributes_change_nothing(seed in any::<u64>(), depth in 1usize..4) {
        let ds = common::bank_like(400, seed);
        let t = grow(&ds, &GrowParams { max_depth: Some(depth), ..Default::default() }).unwrap();
        let used = used_attributes(&t);
        let base = ds.records[0].x.clone();
        let donor = &ds.records[1].x;
        let overrides: BTreeMap<String, i64> = (0..16)
            .filter(|a| !used.contains(a))
            .map(|a| (ds.schema.name(a).to_string(), donor[a]))
            .collect();
        let w = what_if(&t, &Scenario { base, overrides }).unwrap();
        prop_assert!(!w.changed);
        prop_assert_eq!(w.rule_id, w.base_rule_id);
    }
}

#[test]
fn support_counts_equal_linear_scan_on_100_panels() {
    let ds = common::bank_like(4000, 11);
    let t = grow(&ds, &GrowParams { max_depth: Some(6), ..Default::default() }).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let mut with_suggestions = 0;
    for _ in 0..100 {
        let ev = common::bank_panel(&ds, &mut rng);
        let panel = EvidencePanel::new(ev.clone(), &ds.schema);
        let advice = suggest(&t, &panel, &ds);
        let scan = |extra: &dyn Fn(&[i64]) -> bool| {
            ds.records.iter().filter(|r| ev.matches(&r.x, Some(r.y)) && extra(&r.x)).count()
        };
        assert_eq!(advice.evidence_matches, scan(&|_| true));
        for s in &advice.suggestions {
            let counted: Vec<_> = s.conditions.iter().filter(|c| !panel.prospective.contains(&c.attribute)).collect();
            assert_eq!(s.support_count, scan(&|x| counted.iter().all(|c| c.holds(x))), "rule {}", s.rule_id);
            let leaf = t.node(s.leaf).counts;
            assert_eq!(s.leaf_yes_rate, leaf.yes as f64 / leaf.total() as f64);
        }
        with_suggestions += usize::from(!advice.suggestions.is_empty());
    }
    assert!(with_suggestions > 10);
}

#[test]
fn fixture_advice_for_known_poutcome() {
    let t = fixture::engine_tree();
    let schema = Schema::bank();
    let ev = Evidence::parse("poutcome=success", &schema).unwrap();
    let ds = Dataset::from_records(schema.clone(), vec![EncodedRecord { x: SAMPLE_CUSTOMER.to_vec(), y: Label::No }]).unwrap();
    let mut tree = t.clone();
    tree.refit_counts(&ds.records);
    let advice = suggest(&tree, &EvidencePanel::new(ev, &schema), &ds);
    let ids: BTreeSet<&str> = advice.suggestions.iter().map(|s| s.rule_id.as_str()).collect();
    assert_eq!(ids, BTreeSet::from(["1 - 3", "1 - 6"]));
    for s in &advice.suggestions {
        assert!(s.segments.iter().all(|seg| seg.status == Status::Suggested));
    }
    assert!(matches!(tree.node(0).kind, NodeKind::Internal { .. }));
}
