//! Run manifests and the stage DAG.
//!
//! Every stage writes `manifests/<stage>.json` recording the SHA-256 of each
//! file it read and wrote. Before a stage runs, its ancestors are checked:
//! each must have a manifest, its outputs must still hash to the recorded
//! values, and its own inputs must match what it consumed.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::PipelineConfig;
use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Stage {
    Synth,
    TrainLm,
    Label,
    Filter,
    TrainHead,
    DtTrain,
    Decode,
    Eval,
    Report,
}

impl Stage {
    pub const ALL: [Stage; 9] = [
        Stage::Synth,
        Stage::TrainLm,
        Stage::Label,
        Stage::Filter,
        Stage::TrainHead,
        Stage::DtTrain,
        Stage::Decode,
        Stage::Eval,
        Stage::Report,
    ];

    /// The command that produces this stage.
    pub fn command(self) -> &'static str {
        match self {
            Stage::Synth => "synth",
            Stage::TrainLm => "train-lm",
            Stage::Label => "label",
            Stage::Filter => "filter",
            Stage::TrainHead => "train-head",
            Stage::DtTrain => "dt-train",
            Stage::Decode => "decode",
            Stage::Eval => "eval",
            Stage::Report => "report",
        }
    }

    pub fn upstream(self, config: &PipelineConfig) -> Vec<Stage> {
        match self {
            Stage::Synth => vec![],
            Stage::TrainLm => vec![Stage::Synth],
            Stage::Label => vec![Stage::Synth, Stage::TrainLm],
            Stage::Filter => vec![Stage::Label],
            Stage::TrainHead => vec![Stage::Synth, Stage::TrainLm, Stage::Filter],
            Stage::DtTrain if config.dt.use_predicted => vec![Stage::Synth, Stage::Filter, Stage::TrainHead],
            Stage::DtTrain => vec![Stage::Synth, Stage::Filter],
            Stage::Decode if config.decode.include_dt => vec![Stage::Synth, Stage::TrainHead, Stage::DtTrain],
            Stage::Decode => vec![Stage::Synth, Stage::TrainHead],
            Stage::Eval => vec![Stage::Decode],
            Stage::Report => vec![Stage::Eval],
        }
    }

    pub fn manifest_path(self, out: &Path) -> PathBuf {
        out.join("manifests").join(format!("{}.json", self.command()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Timings {
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub version: u32,
    pub stage: String,
    pub seed: u64,
    pub config_hash: String,
    /// Relative path to SHA-256 of every upstream file.
    pub inputs: BTreeMap<String, String>,
    pub outputs: BTreeMap<String, String>,
    pub stats: serde_json::Value,
    pub timings: Timings,
}

pub const MANIFEST_VERSION: u32 = 1;

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn hash_file(path: &Path) -> CliResult<String> {
    let bytes = std::fs::read(path).map_err(|source| CliError::Io {
        path: path.display().to_string(),
        source,
    })?;
    Ok(sha256_hex(&bytes))
}

pub fn config_hash(config: &PipelineConfig) -> String {
    sha256_hex(serde_json::to_string(config).expect("config serializes").as_bytes())
}

/// `path` relative to `out`, with forward slashes.
pub fn rel(out: &Path, path: &Path) -> String {
    let r = path.strip_prefix(out).unwrap_or(path);
    r.components()
        .map(|c| c.as_os_str().to_string_lossy().into_owned())
        .collect::<Vec<_>>()
        .join("/")
}

pub fn load_manifest(out: &Path, stage: Stage) -> CliResult<Manifest> {
    let path = stage.manifest_path(out);
    if !path.exists() {
        return Err(CliError::Missing(format!(
            "{} has not been run in {} (run `dds {}` first)",
            stage.command(),
            out.display(),
            stage.command()
        )));
    }
    let text = std::fs::read_to_string(&path).map_err(|source| CliError::Io {
        path: path.display().to_string(),
        source,
    })?;
    serde_json::from_str(&text).map_err(|source| CliError::Json {
        path: path.display().to_string(),
        source,
    })
}

fn check_one(out: &Path, stage: Stage, config: &PipelineConfig, allow_stale: bool, seen: &mut BTreeSet<Stage>) -> CliResult<()> {
    if !seen.insert(stage) {
        return Ok(());
    }
    let m = load_manifest(out, stage)?;
    for (file, recorded) in m.outputs.iter().chain(&m.inputs) {
        let path = out.join(file);
        if !path.exists() {
            return Err(CliError::Missing(format!(
                "{file} is gone (run `dds {}` again)",
                stage.command()
            )));
        }
        if !allow_stale && &hash_file(&path)? != recorded {
            return Err(CliError::Stale(format!(
                "{file} changed since `dds {}` ran",
                stage.command()
            )));
        }
    }
    for up in stage.upstream(config) {
        check_one(out, up, config, allow_stale, seen)?;
    }
    Ok(())
}

/// Verifies every ancestor of `stage` and returns the hashes of the files
/// they produced, which become `stage`'s recorded inputs.
pub fn check_upstream(out: &Path, stage: Stage, config: &PipelineConfig, allow_stale: bool) -> CliResult<BTreeMap<String, String>> {
    let mut seen = BTreeSet::new();
    let mut inputs = BTreeMap::new();
    for up in stage.upstream(config) {
        check_one(out, up, config, allow_stale, &mut seen)?;
        let m = load_manifest(out, up)?;
        for file in m.outputs.keys() {
            inputs.insert(file.clone(), hash_file(&out.join(file))?);
        }
    }
    Ok(inputs)
}

pub fn write_manifest(out: &Path, stage: Stage, manifest: &Manifest) -> CliResult<()> {
    let path = stage.manifest_path(out);
    crate::io::write_json(&path, manifest)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn known_digest() {
        assert_eq!(
            sha256_hex(b"abc"),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }

    #[test]
    fn dag_is_acyclic_and_ordered() {
        let c = PipelineConfig::default();
        for (i, s) in Stage::ALL.iter().enumerate() {
            for up in s.upstream(&c) {
                assert!(Stage::ALL.iter().position(|x| *x == up).unwrap() < i);
            }
        }
    }

    #[test]
    fn relative_paths_use_forward_slashes() {
        let out = Path::new("/tmp/run");
        assert_eq!(rel(out, &out.join("decode").join("a.jsonl")), "decode/a.jsonl");
    }
}
