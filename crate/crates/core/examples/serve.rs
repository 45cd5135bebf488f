//! Build a small demo corpus with images and serve it.
//!
//! `cargo run --release --example serve -- 8080` then open
//! `http://127.0.0.1:8080/api/meta`. Without a port argument the example
//! issues a few requests in-process and exits.

use std::net::SocketAddr;
use std::sync::Arc;

use axum::body::Body;
use axum::http::Request;
use boxsearch::index::{CatalogParams, IndexCatalog};
use boxsearch::query::{EngineConfig, ModelKind, SearchRequest};
use boxsearch::service::{self, router, AppState, ServiceConfig, DEFAULT_PATCH_CAP};
use boxsearch::store::FeatureStore;
use boxsearch::synth::{generate, write_dataset, SynthParams};
use http_body_util::BodyExt;
use tower::ServiceExt;

#[tokio::main]
async fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = tempfile::tempdir()?;
    let root = dir.path().to_path_buf();
    let ds = generate(&SynthParams { n_patches: 2_500, n_dims: 32, planted_fractions: vec![0.01], seed: 6, ..SynthParams::default() })?;
    write_dataset(&ds, &root, true)?;
    let store = Arc::new(FeatureStore::open(&root)?);
    let catalog = IndexCatalog::build(&store, CatalogParams { n_indexes: 10, subset_size: 4, seed: 0, leaf_size: 32 })?;
    catalog.save(root.join("catalog"))?;

    if let Some(port) = std::env::args().nth(1).and_then(|p| p.parse::<u16>().ok()) {
        let config = ServiceConfig {
            data_root: root.clone(),
            store: root.clone(),
            catalog: root.join("catalog"),
            addr: SocketAddr::from(([127, 0, 0, 1], port)),
            engine: EngineConfig::default(),
            patch_cap: DEFAULT_PATCH_CAP,
        };
        service::serve(config).await?;
        return Ok(());
    }

    let app = router(AppState::new(store, Arc::new(catalog), &root, EngineConfig::default(), DEFAULT_PATCH_CAP)?);
    let call = |req: Request<Body>| {
        let app = app.clone();
        async move {
            let resp = app.oneshot(req).await.unwrap();
            let status = resp.status();
            (status, resp.into_body().collect().await.unwrap().to_bytes())
        }
    };

    let (status, body) = call(Request::get("/api/meta").body(Body::empty())?).await;
    println!("GET /api/meta -> {status}\n{}", String::from_utf8_lossy(&body));

    let negatives: Vec<u64> = (0..2_500).filter(|i| ds.labels[*i as usize].is_none()).take(50).collect();
    let request = SearchRequest::new(ds.ground_truth.classes[1].ids[..10].to_vec(), negatives, ModelKind::Dbranch);
    let req = Request::post("/api/search")
        .header("content-type", "application/json")
        .body(Body::from(serde_json::to_string(&request)?))?;
    let (status, body) = call(req).await;
    let v: serde_json::Value = serde_json::from_slice(&body)?;
    println!("POST /api/search -> {status}, stats {}", v["stats"]);

    let (status, body) = call(Request::get("/api/patch/0").body(Body::empty())?).await;
    println!("GET /api/patch/0 -> {status}, {} bytes starting {:02X?}", body.len(), &body[..4]);

    let (status, body) = call(Request::get("/api/patches?min_row=0&max_row=0&min_col=0&max_col=3").body(Body::empty())?).await;
    println!("GET /api/patches -> {status}\n{}", String::from_utf8_lossy(&body));
    Ok(())
}
