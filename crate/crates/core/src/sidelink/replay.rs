use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{Message, MessageKind};
use crate::error::{Error, Result};

/// One message as serialized for replay: a single JSON object per line.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WireRecord {
    pub sender: usize,
    pub epoch: u64,
    pub kind: String,
    pub values: Vec<f64>,
}

impl From<&Message> for WireRecord {
    fn from(msg: &Message) -> Self {
        WireRecord {
            sender: msg.sender(),
            epoch: msg.epoch(),
            kind: msg.kind().name().to_string(),
            values: msg.values(),
        }
    }
}

impl WireRecord {
    pub fn into_message(self) -> Result<Message> {
        let kind = match self.kind.as_str() {
            "coop" => MessageKind::Coop,
            "fed" => MessageKind::Fed,
            other => return Err(Error::Codec(format!("unknown message kind {other:?}"))),
        };
        Message::from_values(kind, self.sender, self.epoch, self.values)
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string(self).map_err(|e| Error::Codec(e.to_string()))
    }
}

/// Streaming JSON-lines message log.
pub struct ReplayWriter {
    path: PathBuf,
    out: BufWriter<File>,
}

impl ReplayWriter {
    pub fn create(path: &Path) -> Result<Self> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        Ok(Self {
            path: path.to_path_buf(),
            out: BufWriter::new(file),
        })
    }

    /// Append one message; returns the bytes written including the newline.
    pub fn write(&mut self, msg: &Message) -> Result<u64> {
        let line = WireRecord::from(msg).to_json()?;
        writeln!(self.out, "{line}").map_err(|e| Error::io(&self.path, e))?;
        Ok(line.len() as u64 + 1)
    }

    pub fn finish(mut self) -> Result<()> {
        self.out.flush().map_err(|e| Error::io(&self.path, e))
    }
}

pub fn write_replay(path: &Path, messages: &[Message]) -> Result<()> {
    let mut w = ReplayWriter::create(path)?;
    for m in messages {
        w.write(m)?;
    }
    w.finish()
}

pub fn read_replay(path: &Path) -> Result<Vec<Message>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (n, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: WireRecord = serde_json::from_str(&line).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            message: format!("line {}: {e}", n + 1),
        })?;
        out.push(rec.into_message().map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            message: format!("line {}: {e}", n + 1),
        })?);
    }
    Ok(out)
}
