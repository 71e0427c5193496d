//! Flattens a grown tree into if-then rules and checks the engine against
//! the tree on every training record.

use campaign_dss::cart::{grow, GrowParams};
use campaign_dss::dataset::{load_path, Dialect, Schema};
use campaign_dss::rules::{extract_rules, RuleSet};

const SAMPLE: &str = concat!(env!("CARGO_MANIFEST_DIR"), "/examples/data/bank-sample.csv");

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let path = std::env::args().nth(1).unwrap_or_else(|| SAMPLE.to_string());
    let ds = load_path(path.as_ref(), Dialect::default(), &Schema::bank())?;
    let tree = grow(&ds, &GrowParams { max_depth: Some(4), ..Default::default() })?;
    let rules = extract_rules(&tree);
    print!("{}", rules.to_text());

    let mut disagreements = 0;
    for r in &ds.records {
        if rules.infer(&r.x)?.label != tree.predict(&r.x) {
            disagreements += 1;
        }
    }
    println!("\n{} rules, {disagreements} disagreements with the tree over {} records", rules.len(), ds.len());

    // the text form parses back into an equivalent engine
    let reread = RuleSet::from_text(&rules.to_text(), &ds.schema)?;
    let json = serde_json::to_string(&rules)?;
    println!("text round trip: {} rules; json export: {} bytes", reread.len(), json.len());
    Ok(())
}
