//! Warning collection for degraded-but-recoverable conditions.

use std::collections::BTreeMap;
use std::sync::{Arc, Mutex};

use serde::Serialize;

/// One distinct warning message and how many times it was raised.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Warning {
    pub message: String,
    pub count: u64,
}

/// Shared, clonable sink for warnings.
///
/// Every warning is also forwarded to `log::warn!`. Identical messages are
/// folded together and keep their first-seen order.
#[derive(Debug, Clone, Default)]
pub struct Diagnostics {
    inner: Arc<Mutex<Vec<Warning>>>,
}

impl Diagnostics {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn warn(&self, message: impl Into<String>) {
        let message = message.into();
        log::warn!("{message}");
        let mut warnings = self.inner.lock().expect("diagnostics lock poisoned");
        match warnings.iter_mut().find(|w| w.message == message) {
            Some(w) => w.count += 1,
            None => warnings.push(Warning { message, count: 1 }),
        }
    }

    pub fn warnings(&self) -> Vec<Warning> {
        self.inner.lock().expect("diagnostics lock poisoned").clone()
    }

    pub fn is_empty(&self) -> bool {
        self.inner.lock().expect("diagnostics lock poisoned").is_empty()
    }

    /// Total number of raised warnings, counting repeats.
    pub fn total(&self) -> u64 {
        self.inner
            .lock()
            .expect("diagnostics lock poisoned")
            .iter()
            .map(|w| w.count)
            .sum()
    }
}

/// Per-label backend call counter (e.g. `translator`, `asr`, `web`).
#[derive(Debug, Clone, Default)]
pub struct CallStats {
    inner: Arc<Mutex<BTreeMap<String, u64>>>,
}

impl CallStats {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn record(&self, label: &str) {
        let mut counts = self.inner.lock().expect("call stats lock poisoned");
        *counts.entry(label.to_string()).or_insert(0) += 1;
    }

    pub fn get(&self, label: &str) -> u64 {
        self.inner
            .lock()
            .expect("call stats lock poisoned")
            .get(label)
            .copied()
            .unwrap_or(0)
    }

    pub fn snapshot(&self) -> BTreeMap<String, u64> {
        self.inner.lock().expect("call stats lock poisoned").clone()
    }
}
