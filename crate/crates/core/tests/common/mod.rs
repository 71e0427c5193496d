#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};
use std::path::PathBuf;

use campaign_dss::cart::{Side, Tree};
use campaign_dss::dataset::{self, Attribute, Dataset, Dialect, EncodedRecord, Evidence, Label, Predicate, Schema};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// The full UCI file, from `BANK_FULL_CSV` or `data/bank-full.csv` under the
/// workspace root.
pub fn bank_full_path() -> Option<PathBuf> {
    if let Ok(p) = std::env::var("BANK_FULL_CSV") {
        let p = PathBuf::from(p);
        return p.is_file().then_some(p);
    }
    let p = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data/bank-full.csv");
    p.is_file().then_some(p)
}

pub fn bank_full() -> Option<Dataset> {
    let p = bank_full_path()?;
    Some(dataset::load_path(&p, Dialect::default(), &Schema::bank()).expect("bank-full.csv loads"))
}

fn pick(rng: &mut ChaCha8Rng, weights: &[u32]) -> i64 {
    let total: u32 = weights.iter().sum();
    let mut r = rng.random_range(0..total);
    for (i, &w) in weights.iter().enumerate() {
        if r < w {
            return i as i64 + 1;
        }
        r -= w;
    }
    weights.len() as i64
}

/// Random valid bank record; the response leans on duration, poutcome and
/// month the way the real campaign data does.
pub fn bank_record(rng: &mut ChaCha8Rng) -> EncodedRecord {
    let age = rng.random_range(18..=95);
    let job = rng.random_range(1..=12);
    let marital = pick(rng, &[60, 12, 28]);
    let education = pick(rng, &[4, 51, 15, 30]);
    let default = i64::from(rng.random_bool(0.02));
    let balance = rng.random_range(-2000..=20000) / rng.random_range(1..=8);
    let housing = i64::from(rng.random_bool(0.55));
    let loan = i64::from(rng.random_bool(0.16));
    let contact = pick(rng, &[29, 6, 65]);
    let day = rng.random_range(1..=31);
    let month = pick(rng, &[3, 6, 1, 7, 30, 12, 15, 14, 1, 2, 9, 1]);
    let duration = (rng.random::<f64>().powi(2) * 1500.0) as i64;
    let campaign = 1 + (rng.random::<f64>().powi(3) * 20.0) as i64;
    let (pdays, previous, poutcome) = if rng.random_bool(0.8) {
        (-1, 0, 1)
    } else {
        (rng.random_range(1..=400), rng.random_range(1..=10), pick(rng, &[0, 20, 55, 25]))
    };
    let mut z = -4.2 + duration as f64 / 220.0 - 0.08 * campaign as f64 - 0.5 * housing as f64;
    if poutcome == 4 {
        z += 2.6;
    }
    if matches!(month, 3 | 9 | 10 | 12) {
        z += 1.4;
    }
    if contact == 1 {
        z -= 0.9;
    }
    let y = if rng.random::<f64>() < 1.0 / (1.0 + (-z).exp()) { Label::Yes } else { Label::No };
    EncodedRecord {
        x: vec![
            age, job, marital, education, default, balance, housing, loan, contact, day, month, duration, campaign,
            pdays, previous, poutcome,
        ],
        y,
    }
}

pub fn bank_like(n: usize, seed: u64) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let recs = (0..n).map(|_| bank_record(&mut rng)).collect();
    Dataset::from_records(Schema::bank(), recs).unwrap()
}

/// Semicolon-separated file in the published layout.
pub fn to_csv(ds: &Dataset) -> String {
    let q = |s: &str| format!("\"{s}\"");
    let mut out: Vec<String> = ds.schema.attributes.iter().map(|a| q(&a.name)).collect();
    out.push(q(&ds.schema.target));
    let mut text = out.join(";") + "\n";
    for r in &ds.records {
        let mut row: Vec<String> = ds
            .schema
            .decode(&r.x)
            .into_iter()
            .zip(&ds.schema.attributes)
            .map(|(v, a)| if a.is_categorical() || matches!(a.kind, dataset::AttributeKind::Flag) { q(&v) } else { v })
            .collect();
        row.push(q(r.y.as_str()));
        text.push_str(&row.join(";"));
        text.push('\n');
    }
    text
}

/// Small schema used by the exhaustive oracles: a numeric, a flag and a
/// four-code categorical attribute.
pub fn toy_schema() -> Schema {
    Schema::new(vec![
        Attribute::numeric("n"),
        Attribute::flag("f").actionable(),
        Attribute::categorical("c", &["a", "b", "c", "d"]).actionable(),
    ])
}

/// Binary attributes only, for completion enumeration.
pub fn binary_schema(k: usize) -> Schema {
    Schema::new((0..k).map(|i| {
        let a = Attribute::flag(&format!("b{i}"));
        if i % 2 == 0 { a.actionable() } else { a }
    }).collect())
}

pub fn binary_data(k: usize, rows: &[(u8, bool)]) -> Dataset {
    let recs = rows
        .iter()
        .map(|&(bits, y)| EncodedRecord {
            x: (0..k).map(|i| i64::from(bits >> i & 1)).collect(),
            y: if y { Label::Yes } else { Label::No },
        })
        .collect();
    Dataset::from_records(binary_schema(k), recs).unwrap()
}

pub fn completions(k: usize) -> impl Iterator<Item = Vec<i64>> {
    (0u32..1 << k).map(move |m| (0..k).map(|i| i64::from(m >> i & 1)).collect())
}

/// Per attribute: 0 free, 1 `= 0`, 2 `= 1`, 3 `in {}`, 4 `in {0,1}`.
pub fn binary_evidence(spec: &[u8]) -> Evidence {
    let mut ev = Evidence::new();
    for (a, &s) in spec.iter().enumerate() {
        let p = match s {
            1 => Predicate::Equals(0),
            2 => Predicate::Equals(1),
            3 => Predicate::OneOf(BTreeSet::new()),
            4 => Predicate::OneOf([0, 1].into()),
            _ => continue,
        };
        ev = ev.with(a, p).unwrap();
    }
    ev
}

/// Node ids visited by some completion consistent with the evidence, and
/// the forks among them.
pub fn visited(t: &Tree, ev: &Evidence, k: usize) -> (BTreeSet<usize>, BTreeSet<usize>, BTreeSet<usize>) {
    let mut nodes = BTreeSet::new();
    let mut leaves = BTreeSet::new();
    let mut sides: BTreeMap<usize, BTreeSet<Side>> = BTreeMap::new();
    for x in completions(k).filter(|x| ev.matches(x, None)) {
        let r = t.route(&x);
        leaves.insert(r.leaf);
        for (id, side) in r.path {
            nodes.insert(id);
            if let Some(s) = side {
                sides.entry(id).or_default().insert(s);
            }
        }
    }
    let forks = sides.into_iter().filter(|(_, s)| s.len() == 2).map(|(id, _)| id).collect();
    (nodes, leaves, forks)
}

/// A random panel over the bank schema drawn around real record values.
pub fn bank_panel(ds: &Dataset, rng: &mut ChaCha8Rng) -> Evidence {
    let mut ev = Evidence::new();
    let n = rng.random_range(0..=3);
    for _ in 0..n {
        let a = rng.random_range(0..ds.schema.len());
        if ev.get(a).is_some() {
            continue;
        }
        let v = ds.records[rng.random_range(0..ds.len())].x[a];
        let attr = &ds.schema.attributes[a];
        let p = if attr.is_categorical() {
            if rng.random_bool(0.5) {
                Predicate::Equals(v)
            } else {
                let mut s: BTreeSet<i64> = [v].into();
                s.extend(attr.codes().into_iter().filter(|_| rng.random_bool(0.3)));
                Predicate::OneOf(s)
            }
        } else {
            match rng.random_range(0..3) {
                0 => Predicate::Equals(v),
                1 => Predicate::Range { min: Some(v as f64), below: None },
                _ => Predicate::Range { min: None, below: Some(v as f64 + 0.5) },
            }
        };
        ev = ev.with(a, p).unwrap();
    }
    if rng.random_bool(0.1) {
        ev = ev.with_outcome(Label::Yes);
    }
    ev
}
