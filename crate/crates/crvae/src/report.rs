//! Metric reports: one `name<TAB>value<TAB>config_hash` line per metric,
//! followed by a single-line JSON summary.

use std::fmt::Write as _;

use serde::Serialize;

use crate::manifest::sha256_hex;

/// First 16 hex digits of the SHA-256 of the compact JSON form of `config`.
pub fn config_hash<T: Serialize>(config: &T) -> String {
    let json = serde_json::to_vec(config).expect("config serializes");
    sha256_hex(&json)[..16].to_owned()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Report {
    pub command: String,
    pub config_hash: String,
    pub config: serde_json::Value,
    pub metrics: Vec<(String, f64)>,
}

impl Report {
    pub fn new<T: Serialize>(command: &str, config: &T) -> Self {
        Report {
            command: command.into(),
            config_hash: config_hash(config),
            config: serde_json::to_value(config).expect("config serializes"),
            metrics: Vec::new(),
        }
    }

    pub fn push(&mut self, name: &str, value: f64) {
        self.metrics.push((name.into(), value));
    }

    pub fn get(&self, name: &str) -> Option<f64> {
        self.metrics.iter().find(|(n, _)| n == name).map(|&(_, v)| v)
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        for (name, value) in &self.metrics {
            let _ = writeln!(out, "{name}\t{value}\t{}", self.config_hash);
        }
        let metrics: serde_json::Map<String, serde_json::Value> =
            self.metrics.iter().map(|(n, v)| (n.clone(), serde_json::json!(v))).collect();
        let summary = serde_json::json!({
            "command": self.command,
            "config_hash": self.config_hash,
            "config": self.config,
            "metrics": metrics,
        });
        let _ = writeln!(out, "{summary}");
        out
    }
}
