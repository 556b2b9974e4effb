//! TOML scenario files.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::baselines::{flat_defaults, DoConfig};
use crate::error::{Error, Result};
use crate::game::{CandidateRule, DefenderSpec, Game, DEFAULT_ENUMERATION_CAP};
use crate::graph::{generate_graph, Placement, Topology};
use crate::tso::Hyperparameters;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GraphSection {
    pub topology: Topology,
    pub placement: Placement,
    /// Seed of the instance generator, kept apart from the run seed so that
    /// repeated runs share one instance.
    #[serde(default)]
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DefenderSection {
    pub count: usize,
    pub candidates: CandidateRule,
    #[serde(default = "yes")]
    pub allow_duplicates: bool,
}

fn yes() -> bool {
    true
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalSection {
    /// Whether exact evaluation (enumeration, duality gap, double oracle,
    /// flat NAL) is allowed on this instance.
    pub enumerable: bool,
    pub enumeration_cap: usize,
    pub winrate_rollouts: usize,
}

impl Default for EvalSection {
    fn default() -> Self {
        EvalSection {
            enumerable: true,
            enumeration_cap: DEFAULT_ENUMERATION_CAP,
            winrate_rollouts: 1000,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub name: String,
    /// Run seed: sampling, initialization and double-oracle pool seeding.
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    pub graph: GraphSection,
    pub defenders: DefenderSection,
    #[serde(default)]
    pub eval: EvalSection,
    #[serde(default)]
    pub tso: Hyperparameters,
    /// Keys left out take the flat-learner defaults, not the tree defaults.
    #[serde(default = "flat_defaults", deserialize_with = "over_flat_defaults")]
    pub nal: Hyperparameters,
    #[serde(default, rename = "double_oracle")]
    pub double_oracle: DoConfig,
}

fn over_flat_defaults<'de, D: serde::Deserializer<'de>>(de: D) -> std::result::Result<Hyperparameters, D::Error> {
    use serde::de::Error as _;
    let given = toml::Table::deserialize(de)?;
    let mut merged = toml::Table::try_from(flat_defaults()).map_err(D::Error::custom)?;
    merged.extend(given);
    Hyperparameters::deserialize(toml::Value::Table(merged)).map_err(D::Error::custom)
}

impl ScenarioConfig {
    /// Parses and fully validates a scenario; nothing is generated yet.
    pub fn parse(text: &str) -> Result<Self> {
        let cfg: ScenarioConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if self.name.trim().is_empty() {
            return bad("name must not be empty".into());
        }
        if self.defenders.count == 0 {
            return bad("defenders.count must be at least 1".into());
        }
        let p = &self.graph.placement;
        if p.max_path_length < 2 {
            return bad("placement.max_path_length must be at least 2".into());
        }
        if p.num_starts == 0 || p.num_targets == 0 {
            return bad("placement needs at least one start and one target".into());
        }
        if p.target_values.len() > 1 && p.target_values.len() != p.num_targets {
            return bad(format!(
                "{} target values for {} targets",
                p.target_values.len(),
                p.num_targets
            ));
        }
        if self.eval.enumeration_cap == 0 {
            return bad("eval.enumeration_cap must be positive".into());
        }
        match &self.graph.topology {
            Topology::Grid { rows, cols } if rows * cols < 2 => {
                return bad("grid needs at least two vertices".into())
            }
            Topology::Random { nodes, edges, .. } if *edges + 1 < *nodes => {
                return bad(format!("{edges} edges cannot connect {nodes} vertices"))
            }
            _ => {}
        }
        for (label, h) in [("tso", &self.tso), ("nal", &self.nal)] {
            h.validate().map_err(|e| Error::Config(format!("[{label}] {e}")))?;
        }
        if self.double_oracle.tolerance <= 0.0 || self.double_oracle.max_iterations == 0 {
            return bad("double_oracle needs a positive tolerance and iteration cap".into());
        }
        Ok(())
    }

    /// Canonical TOML text. Parsing it back yields an equal config.
    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    /// Hex SHA-256 of the canonical text.
    pub fn hash(&self) -> Result<String> {
        Ok(hex::encode(Sha256::digest(self.to_toml()?.as_bytes())))
    }

    /// Generates the graph and defender spec.
    pub fn build_game(&self) -> Result<Arc<Game>> {
        let graph = generate_graph(&self.graph.topology, &self.graph.placement, self.graph.seed)?;
        let candidates = self.defenders.candidates.select(&graph, self.graph.seed)?;
        let spec = DefenderSpec::shared(
            &graph,
            self.defenders.count,
            &candidates,
            self.defenders.allow_duplicates,
        )?;
        Ok(Game::with_cap(graph, spec, self.eval.enumeration_cap))
    }

    pub fn require_enumerable(&self, what: &str) -> Result<()> {
        if self.eval.enumerable {
            Ok(())
        } else {
            Err(Error::Config(format!(
                "scenario `{}` is marked non-enumerable; {what} needs the full action lists",
                self.name
            )))
        }
    }
}
