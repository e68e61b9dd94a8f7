//! Dialogue records and their encoded form.

use std::fmt;
use std::io::{BufRead, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, DdsError, Result};
use crate::vocab::{Vocabulary, BOS, EOS};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scenario {
    Qa,
    Chitchat,
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Scenario::Qa => "qa",
            Scenario::Chitchat => "chitchat",
        })
    }
}

/// One line of a dataset file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DialogueRecord {
    pub context: String,
    pub response: String,
    pub scenario: Scenario,
}

/// A record after tokenization: `context = <bos> .. <eos>`, `response = .. <eos>`.
#[derive(Debug, Clone, PartialEq)]
pub struct DialogueExample {
    pub context: Vec<usize>,
    pub response: Vec<usize>,
    pub scenario: Scenario,
}

impl DialogueExample {
    pub fn new(context: Vec<usize>, response: Vec<usize>, scenario: Scenario) -> Result<Self> {
        if context.len() < 3 || context[0] != BOS || context[context.len() - 1] != EOS {
            return invalid("context must be <bos>, at least one token, <eos>");
        }
        if response.len() < 2 || response[response.len() - 1] != EOS {
            return invalid("response must hold at least one token and end with <eos>");
        }
        Ok(Self {
            context,
            response,
            scenario,
        })
    }

    pub fn encode(record: &DialogueRecord, vocab: &Vocabulary) -> Result<Self> {
        Self::new(
            vocab.encode_context(&record.context),
            vocab.encode_response(&record.response),
            record.scenario,
        )
    }

    /// Context followed by response.
    pub fn sequence(&self) -> Vec<usize> {
        let mut seq = self.context.clone();
        seq.extend_from_slice(&self.response);
        seq
    }
}

pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let file = std::fs::File::open(path)?;
    let mut out = Vec::new();
    for (n, line) in std::io::BufReader::new(file).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let row = serde_json::from_str(&line).map_err(|e| {
            DdsError::InvalidInput(format!("{}:{}: {e}", path.display(), n + 1))
        })?;
        out.push(row);
    }
    Ok(out)
}

pub fn write_jsonl<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut buf = Vec::new();
    for row in rows {
        serde_json::to_writer(&mut buf, row)?;
        buf.push(b'\n');
    }
    let mut file = std::fs::File::create(path)?;
    file.write_all(&buf)?;
    Ok(())
}
