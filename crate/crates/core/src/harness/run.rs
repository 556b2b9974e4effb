use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::time::Instant;

use log::info;
use serde::{Deserialize, Serialize};

use crate::baselines::{double_oracle, FlatTrainer};
use crate::error::{Error, Result};
use crate::eval::EnumeratedGame;
use crate::metrics::{CsvSink, MetricsRow, MetricsSink};
use crate::tso::Trainer;

use super::ScenarioConfig;

pub const VERSION: &str = env!("TSO_BUILD_VERSION");

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    Tso,
    /// Flat NAL on the enumerated game.
    Nal,
    DoubleOracle,
}

impl Algorithm {
    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Tso => "tso",
            Algorithm::Nal => "nal",
            Algorithm::DoubleOracle => "double_oracle",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    Ok,
    Failed,
}

/// Written as `manifest.json` next to the run's outputs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub scenario: String,
    pub algorithm: Algorithm,
    pub status: RunStatus,
    pub error: Option<String>,
    pub config_hash: String,
    pub seed: u64,
    pub version: String,
    pub wallclock_ms: u64,
    pub instance_fingerprint: Option<String>,
    pub attacker_actions: Option<usize>,
    pub defender_actions: Option<usize>,
    pub samples: Option<u64>,
    pub final_duality_gap: Option<f64>,
    pub min_duality_gap: Option<f64>,
    /// Output files relative to the run directory.
    pub files: Vec<String>,
}

/// Keeps every row in memory while streaming it to a CSV file.
struct Recorder {
    csv: CsvSink<BufWriter<File>>,
    rows: Vec<MetricsRow>,
}

impl MetricsSink for Recorder {
    fn record(&mut self, row: &MetricsRow) -> Result<()> {
        self.csv.record(row)?;
        self.rows.push(row.clone());
        Ok(())
    }
}

#[derive(Serialize)]
struct WeightedAction {
    action: String,
    probability: f64,
}

#[derive(Serialize)]
struct StrategyFile {
    attacker: Vec<WeightedAction>,
    defender: Vec<WeightedAction>,
}

fn strategy_file(e: &EnumeratedGame, x: &[f64], y: &[f64]) -> StrategyFile {
    let keep = |label: String, p: f64| (p > 0.0).then_some(WeightedAction { action: label, probability: p });
    StrategyFile {
        attacker: e
            .attacker
            .iter()
            .zip(x)
            .filter_map(|(a, &p)| keep(a.to_string(), p))
            .collect(),
        defender: e
            .defender
            .iter()
            .zip(y)
            .filter_map(|(d, &p)| keep(e.game.describe_defender(d), p))
            .collect(),
    }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    fs::write(path, serde_json::to_string_pretty(value)?)?;
    Ok(())
}

/// Runs one algorithm on one scenario and writes `config.toml`,
/// `metrics.csv`, `manifest.json` and the final strategies into `out`.
/// On failure the manifest is still written, marked failed, and the error is
/// returned.
pub fn run_experiment(cfg: &ScenarioConfig, algorithm: Algorithm, out: &Path) -> Result<RunManifest> {
    cfg.validate()?;
    if algorithm != Algorithm::Tso {
        cfg.require_enumerable(algorithm.name())?;
    }
    fs::create_dir_all(out)?;
    let start = Instant::now();
    let mut manifest = RunManifest {
        scenario: cfg.name.clone(),
        algorithm,
        status: RunStatus::Ok,
        error: None,
        config_hash: cfg.hash()?,
        seed: cfg.seed,
        version: VERSION.to_string(),
        wallclock_ms: 0,
        instance_fingerprint: None,
        attacker_actions: None,
        defender_actions: None,
        samples: None,
        final_duality_gap: None,
        min_duality_gap: None,
        files: vec!["config.toml".into(), "metrics.csv".into()],
    };
    fs::write(out.join("config.toml"), cfg.to_toml()?)?;
    let result = execute(cfg, algorithm, out, &mut manifest);
    manifest.wallclock_ms = start.elapsed().as_millis() as u64;
    manifest.files.push("manifest.json".into());
    if let Err(e) = &result {
        manifest.status = RunStatus::Failed;
        manifest.error = Some(e.to_string());
    }
    write_json(&out.join("manifest.json"), &manifest)?;
    result.map(|()| manifest)
}

fn execute(cfg: &ScenarioConfig, algorithm: Algorithm, out: &Path, m: &mut RunManifest) -> Result<()> {
    let game = cfg.build_game()?;
    m.instance_fingerprint = Some(game.fingerprint());
    let enumerated = if cfg.eval.enumerable {
        let e = EnumeratedGame::new(game.clone())?;
        m.attacker_actions = Some(e.attacker.len());
        m.defender_actions = Some(e.defender.len());
        info!("{}: {} x {} actions", cfg.name, e.attacker.len(), e.defender.len());
        Some(e)
    } else {
        None
    };
    let mut rec = Recorder {
        csv: CsvSink::new(BufWriter::new(File::create(out.join("metrics.csv"))?))?,
        rows: Vec::new(),
    };
    match algorithm {
        Algorithm::Tso => {
            let mut trainer = Trainer::new(game, cfg.tso.clone(), cfg.seed)?;
            trainer.run(enumerated.as_ref(), &mut rec)?;
            let [att, def] = trainer.into_policies();
            att.save(&out.join("attacker.json"))?;
            def.save(&out.join("defender.json"))?;
            m.files.extend(["attacker.json".into(), "defender.json".into()]);
        }
        Algorithm::Nal => {
            let e = enumerated.as_ref().expect("checked enumerable");
            let mut trainer = FlatTrainer::new(e, cfg.nal.clone(), cfg.seed)?;
            trainer.run(&mut rec)?;
            let [x, y] = trainer.strategies();
            write_json(&out.join("strategies.json"), &strategy_file(e, x.probs(), y.probs()))?;
            m.files.push("strategies.json".into());
        }
        Algorithm::DoubleOracle => {
            let e = enumerated.as_ref().expect("checked enumerable");
            let outcome = double_oracle(e, &cfg.double_oracle, cfg.seed, &mut rec)?;
            if outcome.solver_warning {
                log::warn!("some restricted solves stopped short of the tolerance");
            }
            write_json(&out.join("pools.json"), &outcome.pools)?;
            write_json(
                &out.join("strategies.json"),
                &strategy_file(e, outcome.attacker.probs(), outcome.defender.probs()),
            )?;
            m.files.extend(["pools.json".into(), "strategies.json".into()]);
        }
    }
    let last = rec.rows.last();
    m.samples = last.map(|r| r.samples);
    m.final_duality_gap = last.and_then(|r| r.duality_gap);
    m.min_duality_gap = rec
        .rows
        .iter()
        .filter_map(|r| r.duality_gap)
        .reduce(f64::min);
    Ok(())
}

/// One cell of the decay-schedule grid.
#[derive(Clone, Debug, PartialEq)]
pub struct SweepPoint {
    pub tau: f64,
    pub update_rate: f64,
    pub weight_tau: f64,
    pub dir: PathBuf,
    pub manifest: RunManifest,
}

pub const SWEEP_TAU: [f64; 3] = [0.2, 0.1, 0.05];
pub const SWEEP_UPDATE_RATE: [f64; 3] = [0.1, 0.05, 0.025];
pub const SWEEP_WEIGHT_TAU: [f64; 3] = [0.9, 0.7, 0.5];

/// The full 27-run grid over initial tau, update rate (decay period as a
/// fraction of the run) and tau decay weight.
pub fn sweep(cfg: &ScenarioConfig, out: &Path) -> Result<Vec<SweepPoint>> {
    sweep_grid(cfg, out, &SWEEP_TAU, &SWEEP_UPDATE_RATE, &SWEEP_WEIGHT_TAU)
}

/// TSO runs over the product grid, one directory each, plus `summary.csv`.
pub fn sweep_grid(
    cfg: &ScenarioConfig,
    out: &Path,
    taus: &[f64],
    update_rates: &[f64],
    weights: &[f64],
) -> Result<Vec<SweepPoint>> {
    let mut points = Vec::new();
    let mut summary = String::from("tau,update_rate,weight_tau,samples,final_duality_gap,min_duality_gap,dir\n");
    for &tau in taus {
        for &update_rate in update_rates {
            for &weight_tau in weights {
                let mut run = cfg.clone();
                run.tso.tau = tau;
                run.tso.decay_fraction = update_rate;
                run.tso.tau_decay = weight_tau;
                let name = format!("tau{tau}_rate{update_rate}_weight{weight_tau}");
                let dir = out.join(&name);
                info!("sweep point {name}");
                let manifest = run_experiment(&run, Algorithm::Tso, &dir)?;
                let opt = |v: Option<f64>| v.map_or_else(String::new, |v| v.to_string());
                summary.push_str(&format!(
                    "{tau},{update_rate},{weight_tau},{},{},{},{name}\n",
                    manifest.samples.unwrap_or(0),
                    opt(manifest.final_duality_gap),
                    opt(manifest.min_duality_gap),
                ));
                points.push(SweepPoint {
                    tau,
                    update_rate,
                    weight_tau,
                    dir,
                    manifest,
                });
            }
        }
    }
    fs::write(out.join("summary.csv"), summary)?;
    Ok(points)
}

/// Paired TSO runs that differ only in whether sample-and-prune is on.
/// Returns `(with, without)`.
pub fn ablate_sp(cfg: &ScenarioConfig, out: &Path) -> Result<(RunManifest, RunManifest)> {
    let mut with = cfg.clone();
    with.tso.ablate_prune = false;
    let mut without = cfg.clone();
    without.tso.ablate_prune = true;
    let a = run_experiment(&with, Algorithm::Tso, &out.join("with_sp"))?;
    let b = run_experiment(&without, Algorithm::Tso, &out.join("without_sp"))?;
    let opt = |v: Option<f64>| v.map_or_else(String::new, |v| v.to_string());
    fs::write(
        out.join("summary.csv"),
        format!(
            "variant,samples,final_duality_gap,min_duality_gap\nwith_sp,{},{},{}\nwithout_sp,{},{},{}\n",
            a.samples.unwrap_or(0),
            opt(a.final_duality_gap),
            opt(a.min_duality_gap),
            b.samples.unwrap_or(0),
            opt(b.final_duality_gap),
            opt(b.min_duality_gap),
        ),
    )?;
    Ok((a, b))
}

/// Reads a run directory's manifest.
pub fn read_manifest(dir: &Path) -> Result<RunManifest> {
    let text = fs::read_to_string(dir.join("manifest.json"))?;
    serde_json::from_str(&text).map_err(Error::from)
}
