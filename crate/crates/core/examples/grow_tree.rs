//! Grows a tree with each split criterion and walks its pruning sequence.
//!
//! `cargo run --example grow_tree [-- path/to/bank-full.csv]`

use campaign_dss::cart::{grow, importance, prune, prune_sequence_len, Criterion, GrowParams};
use campaign_dss::dataset::{load_path, Dialect, Schema};

const SAMPLE: &str = concat!(env!("CARGO_MANIFEST_DIR"), "/examples/data/bank-sample.csv");

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let path = std::env::args().nth(1).unwrap_or_else(|| SAMPLE.to_string());
    let ds = load_path(path.as_ref(), Dialect::default(), &Schema::bank())?;
    println!("{} records from {path}", ds.len());

    for criterion in [Criterion::Gini, Criterion::Deviance, Criterion::Twoing] {
        let tree = grow(&ds, &GrowParams::with_criterion(criterion))?;
        let top: Vec<String> = importance(&tree).iter().take(5).map(|i| format!("{} {:.4}", i.name, i.score)).collect();
        println!("{criterion:?}: {} nodes, {} leaves, depth {}", tree.len(), tree.leaf_count(), tree.depth());
        println!("  importance: {}", top.join(", "));
    }

    let tree = grow(&ds, &GrowParams::default())?;
    let steps = prune_sequence_len(&tree);
    for level in (0..=steps).step_by((steps / 5).max(1)) {
        let t = prune(&tree, level);
        let errors = ds.records.iter().filter(|r| t.predict(&r.x) != r.y).count();
        println!("prune level {level:>3}: {:>4} leaves, {errors} training errors", t.leaf_count());
    }
    Ok(())
}
