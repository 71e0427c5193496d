//! Stores a model, a rule export and a campaign plan, then reopens the
//! store and queries it.

use campaign_dss::cart::{grow, GrowParams};
use campaign_dss::dataset::{load_path, Dialect, Schema};
use campaign_dss::kb::{tags, ArtifactKind, Store};
use campaign_dss::model::{self, Model};
use campaign_dss::rules::extract_rules;

const SAMPLE: &str = concat!(env!("CARGO_MANIFEST_DIR"), "/examples/data/bank-sample.csv");

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = tempfile::tempdir()?;
    let ds = load_path(SAMPLE.as_ref(), Dialect::default(), &Schema::bank())?;
    let tree = grow(&ds, &GrowParams { max_depth: Some(4), ..Default::default() })?;
    let rules = extract_rules(&tree).to_text();

    let model_id = {
        let mut store = Store::open(dir.path())?;
        let file = model::to_json(&Model::Tree(tree), Some(ds.provenance.digest.clone()));
        let id = store.put(ArtifactKind::Model, file.as_bytes(), tags(["kind:tree"]))?;
        store.put(ArtifactKind::Ruleset, rules.as_bytes(), tags([format!("from:{id}")]))?;
        let plan = store.put(ArtifactKind::CampaignPlan, b"call previous successes in march", tags(["q1"]))?;
        store.update(&plan, b"call previous successes in march and september", None)?;
        id
    };

    let store = Store::open(dir.path())?;
    for meta in store.query(None, None) {
        println!("{} {:<14} rev {} tags {:?}", meta.id, meta.kind.as_str(), meta.revision, meta.tags);
    }
    let back = model::from_json(std::str::from_utf8(&store.get(&model_id)?.payload)?)?;
    println!("reloaded a {} model", back.kind());
    Ok(())
}
