//! Changes one campaign attribute of a customer and reports whether the
//! answer flips.

use std::collections::BTreeMap;

use campaign_dss::advisor::{what_if, Scenario};
use campaign_dss::dataset::Schema;
use campaign_dss::fixture::{engine_tree, SAMPLE_CUSTOMER};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let tree = engine_tree();
    let schema = Schema::bank();
    let month = schema.position("month").expect("bank schema has month");

    for label in ["may", "jun", "sep", "feb"] {
        let code = schema.attributes[month].code_of(label).expect("month label");
        let scenario = Scenario { base: SAMPLE_CUSTOMER.to_vec(), overrides: BTreeMap::from([("month".to_string(), code)]) };
        let w = what_if(&tree, &scenario)?;
        println!(
            "month={label}: {} (rule \"{}\") -> {} (rule \"{}\"){}",
            w.base_label.as_str(),
            w.base_rule_id,
            w.label.as_str(),
            w.rule_id,
            if w.changed { ", changed" } else { "" }
        );
    }
    Ok(())
}
