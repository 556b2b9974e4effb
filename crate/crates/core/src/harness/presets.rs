//! The bundled scenario files. The TOML sources live in `presets/` at the
//! workspace root and are compiled in so the binary works from any directory.

use crate::error::{Error, Result};
use crate::game::CandidateRule;
use crate::graph::Topology;

use super::ScenarioConfig;

pub const PRESETS: [(&str, &str); 6] = [
    ("S-1", include_str!("../../../../presets/S-1.toml")),
    ("M-1", include_str!("../../../../presets/M-1.toml")),
    ("M-2", include_str!("../../../../presets/M-2.toml")),
    ("M-3", include_str!("../../../../presets/M-3.toml")),
    ("M-4", include_str!("../../../../presets/M-4.toml")),
    ("L-1", include_str!("../../../../presets/L-1.toml")),
];

pub fn preset_names() -> Vec<&'static str> {
    PRESETS.iter().map(|(n, _)| *n).collect()
}

pub fn preset(name: &str) -> Result<ScenarioConfig> {
    let (_, text) = PRESETS
        .iter()
        .find(|(n, _)| n.eq_ignore_ascii_case(name))
        .ok_or_else(|| {
            Error::Config(format!("unknown preset `{name}`; known: {}", preset_names().join(", ")))
        })?;
    ScenarioConfig::parse(text)
}

/// Shape of a scenario as read from its configuration, before generation.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PresetSummary {
    pub name: String,
    pub nodes: Option<usize>,
    pub edges: Option<usize>,
    pub exits: usize,
    pub max_path_length: usize,
    pub defenders: usize,
    /// `None` when every road is a candidate and the road count is unknown.
    pub locations: Option<usize>,
}

impl PresetSummary {
    pub fn of(cfg: &ScenarioConfig) -> Self {
        let (nodes, edges) = match &cfg.graph.topology {
            Topology::Random { nodes, edges, .. } => (Some(*nodes), Some(*edges)),
            Topology::Grid { rows, cols } => (
                Some(rows * cols),
                Some(rows * cols.saturating_sub(1) + cols * rows.saturating_sub(1)),
            ),
            Topology::File { .. } => (None, None),
        };
        let locations = match &cfg.defenders.candidates {
            CandidateRule::All => edges,
            CandidateRule::NearTargets { count } | CandidateRule::Random { count } => Some(*count),
            CandidateRule::Explicit { edges } => Some(edges.len()),
        };
        PresetSummary {
            name: cfg.name.clone(),
            nodes,
            edges,
            exits: cfg.graph.placement.num_targets,
            max_path_length: cfg.graph.placement.max_path_length,
            defenders: cfg.defenders.count,
            locations,
        }
    }

    pub fn describe(&self) -> String {
        let opt = |v: Option<usize>| v.map_or_else(|| "?".to_string(), |v| v.to_string());
        format!(
            "{}: {} nodes/{} edges/{} exit(s)/max-len {}/{} defenders x{}",
            self.name,
            opt(self.nodes),
            opt(self.edges),
            self.exits,
            self.max_path_length,
            self.defenders,
            opt(self.locations)
        )
    }
}
