//! The hand-written reference rule set and its sample customer.

use campaign_dss::dataset::Schema;
use campaign_dss::fixture::{engine_rules, SAMPLE_CUSTOMER};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let rules = engine_rules();
    print!("{}", rules.to_text());

    let schema = Schema::bank();
    let v = rules.infer(&SAMPLE_CUSTOMER)?;
    println!("\ncustomer: {}", schema.decode(&SAMPLE_CUSTOMER).join(", "));
    println!("verdict: {} (rule \"{}\")", v.label.as_str(), v.rule_id);

    // the engine leaves some months undecided
    let mut x = SAMPLE_CUSTOMER.to_vec();
    for month in ["feb", "mar", "may", "jun"] {
        x[10] = schema.attribute(10).and_then(|a| a.code_of(month)).expect("month label");
        let v = rules.infer(&x)?;
        println!("  month {month}: {} (rule \"{}\")", v.raw_outcome.as_str(), v.rule_id);
    }
    Ok(())
}
