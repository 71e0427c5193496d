//! Holdout comparison of the tree against naive Bayes, logistic regression
//! and k-nearest neighbours.
//!
//! `cargo run --release --example compare_models [-- path/to/bank-full.csv]`

use campaign_dss::dataset::{load_path, Dialect, Schema};
use campaign_dss::metrics::{compare, CompareConfig, ModelKind};

const SAMPLE: &str = concat!(env!("CARGO_MANIFEST_DIR"), "/examples/data/bank-sample.csv");

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let path = std::env::args().nth(1).unwrap_or_else(|| SAMPLE.to_string());
    let ds = load_path(path.as_ref(), Dialect::default(), &Schema::bank())?;
    let kinds = [ModelKind::Dt, ModelKind::Nb, ModelKind::Lr, ModelKind::Knn];
    let c = compare(&ds, &kinds, 0.4, 7, &CompareConfig::default())?;
    print!("{}", c.to_text());
    Ok(())
}
