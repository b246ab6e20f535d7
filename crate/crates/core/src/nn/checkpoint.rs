use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{AdamState, Mlp, MlpSnapshot, Schedule};
use crate::corpus::{read_text, write_bytes};
use crate::error::{Error, Result};

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    /// Backbone only.
    Encoder,
    /// Backbone plus sigmoid classification head.
    Classifier,
}

/// `model.json`: layer widths and row-major parameters plus training metadata.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format_version: u32,
    pub kind: ModelKind,
    /// Pair strategy used for pre-training, or `scratch`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub origin: Option<String>,
    pub backbone: MlpSnapshot,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub head: Option<MlpSnapshot>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tags: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub schedule: Option<Schedule>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub optimizer: Option<Vec<AdamState>>,
    pub seed: u64,
}

impl Checkpoint {
    pub fn encoder(backbone: &Mlp, origin: impl Into<String>, schedule: Option<Schedule>, seed: u64) -> Self {
        Checkpoint {
            format_version: FORMAT_VERSION,
            kind: ModelKind::Encoder,
            origin: Some(origin.into()),
            backbone: backbone.snapshot(),
            head: None,
            tags: None,
            schedule,
            optimizer: None,
            seed,
        }
    }

    pub fn backbone(&self) -> Result<Mlp> {
        Mlp::from_snapshot(&self.backbone)
    }

    pub fn head(&self) -> Result<Mlp> {
        match &self.head {
            Some(h) => Mlp::from_snapshot(h),
            None => Err(Error::Validation("checkpoint has no classification head".into())),
        }
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut v = serde_json::to_vec(self)?;
        v.push(b'\n');
        Ok(v)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_bytes(path, &self.to_bytes()?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let c: Checkpoint = serde_json::from_str(&read_text(path)?)?;
        if c.format_version != FORMAT_VERSION {
            return Err(Error::Validation(format!(
                "{}: unsupported checkpoint format {}",
                path.display(),
                c.format_version
            )));
        }
        c.backbone()?;
        if c.head.is_some() {
            c.head()?;
        }
        Ok(c)
    }
}
