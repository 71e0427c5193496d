//! The HTTP service. Answers one request in process, then listens if given
//! an address.
//!
//! `cargo run --example serve [-- 127.0.0.1:8080]`

use axum::body::Body;
use axum::http::Request;
use campaign_dss::dataset::Dialect;
use campaign_dss::interfaces::http::{router, serve, AppState, ServiceConfig};
use http_body_util::BodyExt;
use tower::ServiceExt;

const SAMPLE: &str = concat!(env!("CARGO_MANIFEST_DIR"), "/examples/data/bank-sample.csv");

#[tokio::main]
async fn main() -> Result<(), Box<dyn std::error::Error>> {
    let store = tempfile::tempdir()?;
    let config = ServiceConfig {
        bind: std::env::args().nth(1).unwrap_or_default(),
        store: store.path().to_path_buf(),
        dataset: Some(SAMPLE.into()),
        dialect: Dialect::default(),
        seed: 7,
    };

    let app = router(AppState::new(config.clone())?);
    let body = r#"{"model":"fixture","record":"41,7,3,2,0,270,1,0,1,5,5,222,1,-1,0,1","overrides":{"month":"jun"}}"#;
    let req = Request::post("/whatif").header("content-type", "application/json").body(Body::from(body))?;
    let resp = app.oneshot(req).await?;
    println!("POST /whatif -> {}", resp.status());
    println!("{}", String::from_utf8(resp.into_body().collect().await?.to_bytes().to_vec())?);

    if !config.bind.is_empty() {
        println!("listening on {}", config.bind);
        serve(config).await?;
    }
    Ok(())
}
