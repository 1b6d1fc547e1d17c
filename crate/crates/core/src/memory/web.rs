use std::collections::BTreeMap;
use std::path::Path;
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use crate::backend::{load_script, BackendError, JsonHttpClient, RemoteSettings};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WebDoc {
    pub title: String,
    pub snippet: String,
    pub url: String,
}

pub trait WebSearchBackend: Send + Sync {
    fn name(&self) -> &str;

    fn search(&self, query: &str) -> Result<Vec<WebDoc>, BackendError>;
}

/// Results per exact query, else `default`.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct WebScript {
    pub queries: BTreeMap<String, Vec<WebDoc>>,
    pub default: Vec<WebDoc>,
}

#[derive(Debug)]
pub struct MockWeb {
    script: WebScript,
    log: Mutex<Vec<String>>,
}

impl MockWeb {
    pub fn new(script: WebScript) -> Self {
        Self {
            script,
            log: Mutex::new(Vec::new()),
        }
    }

    pub fn from_script(path: &Path) -> Result<Self, BackendError> {
        Ok(Self::new(load_script("web", path)?))
    }

    pub fn queries(&self) -> Vec<String> {
        self.log.lock().expect("mock log poisoned").clone()
    }
}

impl WebSearchBackend for MockWeb {
    fn name(&self) -> &str {
        "mock-web"
    }

    fn search(&self, query: &str) -> Result<Vec<WebDoc>, BackendError> {
        self.log.lock().expect("mock log poisoned").push(query.to_string());
        Ok(self
            .script
            .queries
            .get(query)
            .unwrap_or(&self.script.default)
            .clone())
    }
}

#[derive(Serialize)]
struct SearchRequest<'a> {
    query: &'a str,
}

#[derive(Deserialize)]
struct SearchResponse {
    results: Vec<WebDoc>,
}

/// `POST {query}` → `{results: [{title, snippet, url}]}`.
#[derive(Debug, Clone)]
pub struct RemoteWeb {
    client: JsonHttpClient,
}

impl RemoteWeb {
    pub fn new(endpoint: &str, settings: RemoteSettings) -> Self {
        Self {
            client: JsonHttpClient::new("web", endpoint, settings),
        }
    }
}

impl WebSearchBackend for RemoteWeb {
    fn name(&self) -> &str {
        "remote-web"
    }

    fn search(&self, query: &str) -> Result<Vec<WebDoc>, BackendError> {
        let resp: SearchResponse = self.client.post(&SearchRequest { query })?;
        Ok(resp.results)
    }
}
