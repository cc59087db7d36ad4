#![allow(dead_code)]

use std::sync::Arc;
use std::time::Duration;

use serde_json::Value;
use storybolt_core::session::{SessionConfig, StoryManifest};
use storybolt_gateway::service::{serve, AppState};
use storybolt_gateway::sessions::Registry;

pub struct Server {
    pub base: String,
    pub registry: Arc<Registry>,
    pub client: reqwest::Client,
}

/// Starts the API on an ephemeral port with two short synthetic stories.
pub async fn start_server(wizard_timeout_s: f64) -> Server {
    let config = SessionConfig { wizard_timeout_s, ..SessionConfig::default() };
    let stories = vec![StoryManifest::synthetic("short", 4, 1.0, 2), StoryManifest::synthetic("long", 400, 8.0, 1)];
    let registry = Arc::new(Registry::new(config, None, stories, None).unwrap());
    let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
    let addr = listener.local_addr().unwrap();
    tokio::spawn(serve(listener, AppState::new(Arc::clone(&registry))));
    Server { base: format!("http://{addr}"), registry, client: reqwest::Client::new() }
}

impl Server {
    pub fn url(&self, path: &str) -> String {
        format!("{}{}", self.base, path)
    }

    pub fn ws_url(&self, path: &str) -> String {
        format!("{}{}", self.base.replacen("http://", "ws://", 1), path)
    }

    pub async fn get(&self, path: &str) -> (u16, Value) {
        let r = self.client.get(self.url(path)).send().await.unwrap();
        let status = r.status().as_u16();
        (status, r.json().await.unwrap())
    }

    pub async fn post(&self, path: &str, body: &str) -> (u16, Value) {
        let r = self
            .client
            .post(self.url(path))
            .header("content-type", "application/json")
            .body(body.to_string())
            .send()
            .await
            .unwrap();
        let status = r.status().as_u16();
        (status, r.json().await.unwrap())
    }

    /// Polls the descriptor until `pred` holds.
    pub async fn wait_for(&self, id: &str, pred: impl Fn(&Value) -> bool) -> Value {
        for _ in 0..600 {
            let (_, d) = self.get(&format!("/sessions/{id}")).await;
            if pred(&d) {
                return d;
            }
            tokio::time::sleep(Duration::from_millis(25)).await;
        }
        panic!("session {id} never reached the expected state");
    }
}
