//! Run manifests: enough provenance to re-run an experiment and check that
//! the regenerated CSV bodies are byte-identical.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::path::Path;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StageSeed {
    pub stage: String,
    pub seed: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub experiment: String,
    /// SHA-256 of the raw config text.
    pub config_sha256: String,
    pub code_version: String,
    pub seed: u64,
    pub stage_seeds: Vec<StageSeed>,
    /// Wall time lives here, never in the CSV bodies, so reruns stay
    /// byte-identical.
    pub wall_time_secs: f64,
    /// Every file this run produced, relative to the output directory.
    pub outputs: Vec<String>,
}

pub fn config_hash(source: &str) -> String {
    let mut h = Sha256::new();
    h.update(source.as_bytes());
    let digest = h.finalize();
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

impl RunManifest {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("manifest serializes")
    }

    pub fn from_path(path: &Path) -> Result<Self, String> {
        let text = std::fs::read_to_string(path).map_err(|e| e.to_string())?;
        serde_json::from_str(&text).map_err(|e| e.to_string())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hash_is_stable_hex() {
        let h = config_hash("experiment = \"zvonkin\"\n");
        assert_eq!(h.len(), 64);
        assert_eq!(h, config_hash("experiment = \"zvonkin\"\n"));
        assert_ne!(h, config_hash("experiment = \"picard\"\n"));
    }

    #[test]
    fn manifest_round_trips() {
        let m = RunManifest {
            experiment: "zvonkin".into(),
            config_sha256: config_hash("x"),
            code_version: "0.1.0".into(),
            seed: 7,
            stage_seeds: vec![StageSeed { stage: "sweep".into(), seed: 9 }],
            wall_time_secs: 0.25,
            outputs: vec!["metrics.csv".into()],
        };
        let back: RunManifest = serde_json::from_str(&m.to_json()).unwrap();
        assert_eq!(back.experiment, "zvonkin");
        assert_eq!(back.outputs, vec!["metrics.csv".to_string()]);
    }
}
