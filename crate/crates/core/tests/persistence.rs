mod common;

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::io::Write;

use campaign_dss::baselines::{self, BaselineConfig, BaselineKind};
use campaign_dss::cart::{grow, GrowParams};
use campaign_dss::kb::{tags, ArtifactKind, KbError, Store, JOURNAL, OBJECTS};
use campaign_dss::model::{self, Model};
use campaign_dss::rules::{extract_rules, Engine};
use proptest::prelude::*;

fn all_models() -> (campaign_dss::dataset::Dataset, Vec<Model>) {
    let ds = common::bank_like(1500, 21);
    let tree = grow(&ds, &GrowParams::default()).unwrap();
    let mut models = vec![Model::Rules(Engine::Rules(extract_rules(&tree))), Model::Tree(tree)];
    for kind in [BaselineKind::Nb, BaselineKind::Lr, BaselineKind::Knn] {
        models.push(Model::Baseline(baselines::train(kind, &ds, &BaselineConfig::default()).unwrap()));
    }
    (ds, models)
}

#[test]
fn saved_models_predict_identically() {
    let (ds, models) = all_models();
    let dir = tempfile::tempdir().unwrap();
    let probe = common::bank_like(500, 22);
    for m in models {
        let path = dir.path().join(format!("{}.json", m.kind()));
        model::save(&m, Some(ds.provenance.digest.clone()), &path).unwrap();
        let back = model::load(&path).unwrap();
        assert_eq!(back.kind(), m.kind());
        for r in ds.records.iter().chain(&probe.records) {
            assert_eq!(back.predict(&r.x).unwrap(), m.predict(&r.x).unwrap(), "{}", m.kind());
        }
    }
}

#[test]
fn store_survives_restart() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = {
        let mut s = Store::open(dir.path()).unwrap();
        let a = s.put(ArtifactKind::Model, b"{\"m\":1}", tags(["kind:tree"])).unwrap();
        let b = s.put(ArtifactKind::CampaignPlan, b"call in march", tags(["q1"])).unwrap();
        s.update(&b, b"call in march and june", None).unwrap();
        (a, b)
    };
    let s = Store::open(dir.path()).unwrap();
    assert_eq!(s.len(), 2);
    assert_eq!(s.get(&a).unwrap().payload, b"{\"m\":1}");
    let got = s.get(&b).unwrap();
    assert_eq!((got.payload.as_slice(), got.meta.revision), (&b"call in march and june"[..], 2));
    assert!(got.meta.tags.contains("q1"));
}

#[test]
fn interrupted_put_leaves_no_artifact() {
    let dir = tempfile::tempdir().unwrap();
    let kept = {
        let mut s = Store::open(dir.path()).unwrap();
        s.put(ArtifactKind::Note, b"kept", BTreeSet::new()).unwrap()
    };
    // crash after the temp write, after the rename, and halfway through the journal append
    fs::write(dir.path().join(OBJECTS).join(".tmp-20990101T000000000000-deadbeef.1"), b"half").unwrap();
    fs::write(dir.path().join(OBJECTS).join("20990101T000000000000-cafef00d.1"), b"orphan").unwrap();
    let journal = dir.path().join(JOURNAL);
    let before = fs::read(&journal).unwrap();
    fs::OpenOptions::new().append(true).open(&journal).unwrap().write_all(b"{\"id\":\"20990101T0000").unwrap();

    let mut s = Store::open(dir.path()).unwrap();
    assert_eq!(s.len(), 1);
    assert_eq!(s.query(None, None).len(), 1);
    assert_eq!(s.get(&kept).unwrap().payload, b"kept");
    assert!(matches!(s.get("20990101T000000000000-cafef00d"), Err(KbError::NotFound(_))));
    assert_eq!(fs::read(&journal).unwrap(), before);
    let leftovers: Vec<String> = fs::read_dir(dir.path().join(OBJECTS))
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .filter(|n| n.starts_with(".tmp-"))
        .collect();
    assert!(leftovers.is_empty());

    let next = s.put(ArtifactKind::Note, b"after", BTreeSet::new()).unwrap();
    drop(s);
    let s = Store::open(dir.path()).unwrap();
    assert_eq!(s.len(), 2);
    assert_eq!(s.get(&next).unwrap().payload, b"after");
}

#[test]
fn corrupted_payload_is_reported() {
    let dir = tempfile::tempdir().unwrap();
    let mut s = Store::open(dir.path()).unwrap();
    let id = s.put(ArtifactKind::Report, b"report", BTreeSet::new()).unwrap();
    let file = dir.path().join(&s.meta(&id).unwrap().file);
    fs::write(file, b"rep0rt").unwrap();
    assert!(matches!(s.get(&id), Err(KbError::Corrupt(_))));
}

#[derive(Debug, Clone)]
enum Op {
    Put(usize, Vec<u8>),
    Update(usize, Option<Vec<u8>>),
}

const TAG_POOL: [&str; 4] = ["a", "b", "c", "d"];

fn ops() -> impl Strategy<Value = Vec<Op>> {
    let tagset = prop::collection::vec(0u8..4, 0..3);
    prop::collection::vec(
        prop_oneof![
            (0usize..6, tagset.clone()).prop_map(|(k, t)| Op::Put(k, t)),
            (0usize..16, prop::option::of(tagset)).prop_map(|(i, t)| Op::Update(i, t)),
        ],
        1..20,
    )
}

fn tagset(t: &[u8]) -> BTreeSet<String> {
    t.iter().map(|&i| TAG_POOL[i as usize].to_string()).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn query_equals_full_scan(ops in ops(), kind in prop::option::of(0usize..6), tag in prop::option::of(0usize..4)) {
        let dir = tempfile::tempdir().unwrap();
        let mut s = Store::open(dir.path()).unwrap();
        // oracle state: id -> (kind, tags, write sequence)
        let mut state: BTreeMap<String, (ArtifactKind, BTreeSet<String>, usize)> = BTreeMap::new();
        let mut ids = Vec::new();
        for (seq, op) in ops.iter().enumerate() {
            match op {
                Op::Put(k, t) => {
                    let kind = ArtifactKind::ALL[*k];
                    let id = s.put(kind, format!("payload {seq}").as_bytes(), tagset(t)).unwrap();
                    state.insert(id.clone(), (kind, tagset(t), seq));
                    ids.push(id);
                }
                Op::Update(i, t) if !ids.is_empty() => {
                    let id = &ids[i % ids.len()];
                    s.update(id, format!("payload {seq}").as_bytes(), t.as_deref().map(tagset)).unwrap();
                    let entry = state.get_mut(id).unwrap();
                    if let Some(t) = t {
                        entry.1 = tagset(t);
                    }
                    entry.2 = seq;
                }
                Op::Update(..) => {}
            }
        }
        let kind = kind.map(|k| ArtifactKind::ALL[k]);
        let tag = tag.map(|t| TAG_POOL[t]);
        let mut want: Vec<(usize, String)> = state
            .iter()
            .filter(|(_, (k, t, _))| kind.is_none_or(|want| *k == want) && tag.is_none_or(|want| t.contains(want)))
            .map(|(id, (_, _, seq))| (*seq, id.clone()))
            .collect();
        want.sort_by(|a, b| b.cmp(a));
        let got: Vec<String> = s.query(kind, tag).into_iter().map(|m| m.id).collect();
        prop_assert_eq!(&got, &want.into_iter().map(|(_, id)| id).collect::<Vec<_>>());
        drop(s);
        let reopened = Store::open(dir.path()).unwrap();
        let again: Vec<String> = reopened.query(kind, tag).into_iter().map(|m| m.id).collect();
        prop_assert_eq!(again, got);
    }
}
