//! JSON persistence for tree policies. Floats are written in shortest
//! round-trip form, so parameters reload bit-for-bit.

use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::network::Mlp;
use super::{Moments, Params, TabularEntry, TreePolicy};
use crate::error::{Error, Result};
use crate::tree::{ActionTree, Player};

const FORMAT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CheckpointFile {
    format_version: u32,
    player: Player,
    fingerprint: String,
    mask_width: usize,
    params: StoredParams,
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
enum StoredParams {
    Tabular { nodes: Vec<(Vec<u32>, Vec<f64>)> },
    Network { net: Mlp },
}

impl TreePolicy {
    pub fn to_checkpoint_json(&self) -> Result<String> {
        let params = match &self.params {
            Params::Tabular(t) => StoredParams::Tabular {
                nodes: t.iter().map(|(k, e)| (k.clone(), e.logits.clone())).collect(),
            },
            Params::Network { net, .. } => StoredParams::Network { net: net.clone() },
        };
        let file = CheckpointFile {
            format_version: FORMAT_VERSION,
            player: self.player(),
            fingerprint: self.tree.game().fingerprint(),
            mask_width: self.tree.mask_width(),
            params,
        };
        Ok(serde_json::to_string(&file)?)
    }

    /// Restores a policy for `tree`, refusing checkpoints from another
    /// instance or player.
    pub fn from_checkpoint_json(text: &str, tree: Arc<ActionTree>) -> Result<Self> {
        let file: CheckpointFile = serde_json::from_str(text)?;
        if file.format_version != FORMAT_VERSION {
            return Err(Error::Checkpoint(format!(
                "unsupported format version {}",
                file.format_version
            )));
        }
        if file.player != tree.player() {
            return Err(Error::Checkpoint(format!(
                "checkpoint holds a {} policy",
                file.player.name()
            )));
        }
        if file.fingerprint != tree.game().fingerprint() || file.mask_width != tree.mask_width() {
            return Err(Error::Checkpoint(
                "checkpoint was trained on a different instance".into(),
            ));
        }
        let width = tree.mask_width();
        let params = match file.params {
            StoredParams::Tabular { nodes } => {
                if nodes.iter().any(|(_, l)| l.len() != width) {
                    return Err(Error::Checkpoint("logit vector of wrong width".into()));
                }
                Params::Tabular(
                    nodes
                        .into_iter()
                        .map(|(k, logits)| {
                            (
                                k,
                                TabularEntry {
                                    logits,
                                    moments: Moments::zeros(width),
                                },
                            )
                        })
                        .collect(),
                )
            }
            StoredParams::Network { net } => {
                if net.out_dim != width {
                    return Err(Error::Checkpoint("network output width mismatch".into()));
                }
                let moments = net.blocks().iter().map(|b| Moments::zeros(b.len())).collect();
                Params::Network { net, moments }
            }
        };
        Ok(TreePolicy { tree, params })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_checkpoint_json()?)?;
        Ok(())
    }

    pub fn load(path: &Path, tree: Arc<ActionTree>) -> Result<Self> {
        Self::from_checkpoint_json(&std::fs::read_to_string(path)?, tree)
    }
}
