#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use axum::body::Body;
use axum::http::{Method, Request, StatusCode};
use axum::Router;
use http_body_util::BodyExt;
use serde_json::Value;
use tower::ServiceExt;
use twai_core::double_check::{FixtureSearch, SearchHit};
use twai_core::gateway::{MockFixture, MockProvider, ProviderRegistry, ProviderSpec};
use twai_core::store::Store;
use twai_core::{VerificationSettings, Workbench};

pub const NETFLIX_PICK: &str =
    "I'd like to redesign the UI of Netflix. Can you select one problem that I need to redesign?";
pub const NETFLIX_CRITICAL: &str = "Tell me about the most critical problem of Netflix's UI.";

pub fn fixtures_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures")
}

/// A mock answering every prompt with `text`.
pub fn echo_mock(id: &str, text: &str) -> MockProvider {
    MockProvider::new(
        ProviderSpec::mock(id),
        MockFixture::new().with("*", vec![text.to_owned()]),
    )
}

pub fn hit(url: &str, snippet: &str) -> SearchHit {
    SearchHit {
        url: url.into(),
        title: url.into(),
        snippet: snippet.into(),
    }
}

pub fn workbench(root: &Path, mocks: Vec<MockProvider>, search: FixtureSearch) -> Workbench {
    let registry = ProviderRegistry::new(Duration::from_secs(10));
    for m in mocks {
        registry.register(Arc::new(m)).unwrap();
    }
    Workbench::open(
        Store::open(root).unwrap(),
        registry,
        Arc::new(search),
        VerificationSettings::default(),
    )
    .unwrap()
}

/// Workbench wired to the bundled fixtures (three mocks, search fixture, metrics).
pub fn fixture_workbench(root: &Path) -> Workbench {
    let settings = twai_api::config::resolve(
        &twai_api::config::Flags {
            workspace: Some(root.to_path_buf()),
            config: Some(fixtures_dir().join("twai.toml")),
            ..Default::default()
        },
        |_| None,
    )
    .unwrap();
    twai_api::config::open_workbench(&settings).unwrap()
}

pub struct Reply {
    pub status: StatusCode,
    pub body: Value,
    pub bytes: Vec<u8>,
}

impl Reply {
    pub fn code(&self) -> &str {
        self.body["code"].as_str().unwrap_or("")
    }
}

pub async fn send(app: &Router, method: Method, uri: &str, body: Option<Value>) -> Reply {
    let req = Request::builder().method(method).uri(uri);
    let req = match body {
        Some(v) => req
            .header("content-type", "application/json")
            .body(Body::from(v.to_string())),
        None => req.body(Body::empty()),
    }
    .unwrap();
    send_request(app, req).await
}

pub async fn send_request(app: &Router, req: Request<Body>) -> Reply {
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes().to_vec();
    let body = serde_json::from_slice(&bytes).unwrap_or(Value::Null);
    Reply { status, body, bytes }
}

pub async fn get(app: &Router, uri: &str) -> Reply {
    send(app, Method::GET, uri, None).await
}

pub async fn post(app: &Router, uri: &str, body: Value) -> Reply {
    send(app, Method::POST, uri, Some(body)).await
}

pub async fn put(app: &Router, uri: &str, body: Value) -> Reply {
    send(app, Method::PUT, uri, Some(body)).await
}
