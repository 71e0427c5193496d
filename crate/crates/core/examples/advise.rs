//! Strategy advice from partial evidence about a customer.
//!
//! `cargo run --example advise [-- "poutcome=success;age>=40"]`

use campaign_dss::advisor::{render, suggest, EvidencePanel};
use campaign_dss::cart::{grow, GrowParams};
use campaign_dss::dataset::{load_path, Dialect, Evidence, Schema};

const SAMPLE: &str = concat!(env!("CARGO_MANIFEST_DIR"), "/examples/data/bank-sample.csv");

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let evidence = std::env::args().nth(1).unwrap_or_else(|| "poutcome=success".to_string());
    let ds = load_path(SAMPLE.as_ref(), Dialect::default(), &Schema::bank())?;
    let tree = grow(&ds, &GrowParams { max_depth: Some(5), ..Default::default() })?;

    let panel = EvidencePanel::new(Evidence::parse(&evidence, &ds.schema)?, &ds.schema);
    let advice = suggest(&tree, &panel, &ds);
    println!("evidence: {evidence}\n");
    println!("{}", render(&advice, &ds.schema));

    for s in advice.suggestions.iter().take(3) {
        let path: Vec<String> = s.segments.iter().map(|seg| format!("{}:{:?}", seg.node, seg.status)).collect();
        println!("rule {} path {}", s.rule_id, path.join(" > "));
    }
    Ok(())
}
