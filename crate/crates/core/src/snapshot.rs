//! Warm-start snapshots: everything needed to resume estimator training at
//! the next control step — network weights, the raw rate parameter, and the
//! per-phase Adam moments. Serialized with bincode behind a magic/version
//! header so stale or foreign files fail loudly instead of deserializing
//! into garbage weights.

use crate::error::{Error, Result};
use crate::estimators::EstimatorVariant;
use crate::neural::{AdamState, Mlp};
use serde::{Deserialize, Serialize};
use std::fs;
use std::path::Path;

const MAGIC: &[u8; 8] = b"SIRSNAP1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimatorSnapshot {
    pub variant: EstimatorVariant,
    /// The day k this snapshot was trained at.
    pub step: usize,
    /// Epochs actually run per phase, e.g. [("stage1", 4500), ("stage2", 5000)].
    pub epochs_run: Vec<(String, usize)>,
    pub s_net: Mlp,
    pub i_net: Mlp,
    pub u_net: Mlp,
    /// Pre-sigmoid rate parameter (β̂ or γ̂ depending on the variant).
    pub rate_raw: f64,
    /// Optimizer state per phase, restored on warm start.
    pub adams: Vec<(String, AdamState)>,
}

impl EstimatorSnapshot {
    /// Canonical file name: snapshot_<variant>_k<step>.bin
    pub fn file_name(&self) -> String {
        format!("snapshot_{}_k{}.bin", self.variant.name(), self.step)
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut out = MAGIC.to_vec();
        let body = bincode::serialize(self)
            .map_err(|e| Error::Snapshot(format!("encode failed: {e}")))?;
        out.extend_from_slice(&body);
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < MAGIC.len() || &bytes[..MAGIC.len()] != MAGIC {
            return Err(Error::Snapshot(
                "missing or unrecognized snapshot header".into(),
            ));
        }
        bincode::deserialize(&bytes[MAGIC.len()..])
            .map_err(|e| Error::Snapshot(format!("decode failed: {e}")))
    }

    pub fn save(&self, dir: &Path) -> Result<std::path::PathBuf> {
        let path = dir.join(self.file_name());
        fs::write(&path, self.to_bytes()?)?;
        Ok(path)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_bytes(&fs::read(path)?)
    }
}
