use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};
use log::info;

use tso_core::eval::{win_rate_matrix, EnumeratedGame};
use tso_core::harness::{self, preset, preset_names, Algorithm, PresetSummary, ScenarioConfig};
use tso_core::policy::{PolicyConfig, TreePolicy};
use tso_core::tree::{ActionTree, Player};
use tso_core::Error;

#[derive(Parser)]
#[command(name = "tso", version, about = "Equilibrium solvers for urban network security games")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// Scenario TOML file.
    #[arg(long, conflicts_with = "preset")]
    config: Option<PathBuf>,
    /// Bundled scenario by name (see `tso presets`).
    #[arg(long)]
    preset: Option<String>,
    /// Overrides the run seed from the scenario.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory; defaults to the scenario's `output_dir` or `runs/<name>`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads for sampling and evaluation.
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the scenario's graph and write it in the text graph format.
    GenGraph(Common),
    /// Train tree policies with TSO.
    TrainTso(Common),
    /// Train flat NAL strategies on the enumerated game.
    TrainNal(Common),
    /// Run exact double oracle.
    RunDo(Common),
    /// Exact duality gap of saved TSO checkpoints.
    EvalGap {
        #[command(flatten)]
        common: Common,
        /// Run directory holding attacker.json and defender.json.
        #[arg(long)]
        run: PathBuf,
    },
    /// Attacker win rates between saved policies.
    EvalWinrate {
        #[command(flatten)]
        common: Common,
        /// `label=run_dir`, repeatable; each run contributes both sides.
        #[arg(long = "policy", value_parser = parse_policy_arg)]
        policies: Vec<(String, PathBuf)>,
        /// Add untrained (per-node uniform) policies as extra rows/columns.
        #[arg(long)]
        uniform: bool,
        /// Rollouts per cell; defaults to the scenario's `winrate_rollouts`.
        #[arg(long)]
        rollouts: Option<usize>,
    },
    /// Paired TSO runs with and without sample-and-prune.
    AblateSp(Common),
    /// TSO over the 27-point tau / update-rate / weight grid.
    Sweep(Common),
    /// List the bundled scenarios, or print one.
    Presets {
        /// Print this preset's TOML instead of the list.
        #[arg(long)]
        show: Option<String>,
    },
}

fn parse_policy_arg(s: &str) -> Result<(String, PathBuf), String> {
    let (label, dir) = s
        .split_once('=')
        .ok_or_else(|| format!("expected label=dir, got `{s}`"))?;
    if label.is_empty() || label.contains(',') {
        return Err(format!("bad label `{label}`"));
    }
    Ok((label.to_string(), PathBuf::from(dir)))
}

/// Config problems exit with 2, everything else with 3.
enum Failure {
    Config(String),
    Runtime(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Config(_)
            | Error::Parse { .. }
            | Error::InvalidGraph(_)
            | Error::InvalidDefenderSpec(_)
            | Error::Infeasible(_) => Failure::Config(e.to_string()),
            other => Failure::Runtime(other.to_string()),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Runtime(e.to_string())
    }
}

fn load(common: &Common) -> Result<ScenarioConfig, Failure> {
    let mut cfg = match (&common.config, &common.preset) {
        (Some(path), _) => ScenarioConfig::load(path)?,
        (None, Some(name)) => preset(name)?,
        (None, None) => return Err(Failure::Config("pass --config <file> or --preset <name>".into())),
    };
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    if let Some(n) = common.threads {
        if n == 0 {
            return Err(Failure::Config("--threads must be positive".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Failure::Runtime(e.to_string()))?;
    }
    Ok(cfg)
}

fn out_dir(common: &Common, cfg: &ScenarioConfig, leaf: &str) -> PathBuf {
    common
        .out
        .clone()
        .or_else(|| cfg.output_dir.clone())
        .unwrap_or_else(|| Path::new("runs").join(&cfg.name).join(leaf))
}

fn report(m: &harness::RunManifest, dir: &Path) {
    let gap = m
        .final_duality_gap
        .map_or_else(|| "n/a".to_string(), |g| format!("{g:.6}"));
    println!(
        "{} on {}: samples {}, final duality gap {gap}, {} ms -> {}",
        m.algorithm.name(),
        m.scenario,
        m.samples.unwrap_or(0),
        m.wallclock_ms,
        dir.display()
    );
}

fn load_pair(game: &Arc<tso_core::Game>, dir: &Path) -> Result<[TreePolicy; 2], Failure> {
    let att = TreePolicy::load(&dir.join("attacker.json"), Arc::new(ActionTree::attacker(game.clone())))?;
    let def = TreePolicy::load(&dir.join("defender.json"), Arc::new(ActionTree::defender(game.clone())))?;
    Ok([att, def])
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Presets { show } => match show {
            Some(name) => {
                let (_, text) = harness::PRESETS
                    .iter()
                    .find(|(n, _)| n.eq_ignore_ascii_case(&name))
                    .ok_or_else(|| Failure::Config(format!("unknown preset `{name}`")))?;
                print!("{text}");
            }
            None => {
                for name in preset_names() {
                    println!("{}", PresetSummary::of(&preset(name)?).describe());
                }
            }
        },
        Command::GenGraph(common) => {
            let cfg = load(&common)?;
            let game = cfg.build_game()?;
            let path = match &common.out {
                Some(p) if p.extension().is_some() => p.clone(),
                _ => out_dir(&common, &cfg, "graph").join("graph.txt"),
            };
            if let Some(parent) = path.parent() {
                std::fs::create_dir_all(parent)?;
            }
            std::fs::write(&path, game.graph.to_text())?;
            println!(
                "{}: {} vertices, {} roads -> {}",
                cfg.name,
                game.graph.vertex_count(),
                game.graph.edge_count(),
                path.display()
            );
        }
        Command::TrainTso(common) => train(&common, Algorithm::Tso)?,
        Command::TrainNal(common) => train(&common, Algorithm::Nal)?,
        Command::RunDo(common) => train(&common, Algorithm::DoubleOracle)?,
        Command::EvalGap { common, run } => {
            let cfg = load(&common)?;
            cfg.require_enumerable("eval-gap")?;
            let game = cfg.build_game()?;
            let [att, def] = load_pair(&game, &run)?;
            let e = EnumeratedGame::new(game)?;
            println!("duality_gap {}", e.policy_gap(&att, &def)?);
        }
        Command::EvalWinrate {
            common,
            policies,
            uniform,
            rollouts,
        } => {
            let cfg = load(&common)?;
            if policies.is_empty() && !uniform {
                return Err(Failure::Config("give at least one --policy or --uniform".into()));
            }
            let game = cfg.build_game()?;
            let mut pairs: Vec<(String, [TreePolicy; 2])> = Vec::new();
            for (label, dir) in &policies {
                pairs.push((label.clone(), load_pair(&game, dir)?));
            }
            if uniform {
                let tab = |p: Player| {
                    TreePolicy::new(Arc::new(ActionTree::new(game.clone(), p)), &PolicyConfig::Tabular, 0)
                };
                pairs.push(("uniform".into(), [tab(Player::Attacker), tab(Player::Defender)]));
            }
            let attackers: Vec<(String, &TreePolicy)> =
                pairs.iter().map(|(l, p)| (l.clone(), &p[0])).collect();
            let defenders: Vec<(String, &TreePolicy)> =
                pairs.iter().map(|(l, p)| (l.clone(), &p[1])).collect();
            let n = rollouts.unwrap_or(cfg.eval.winrate_rollouts);
            let matrix = win_rate_matrix(&game, &attackers, &defenders, n, cfg.seed)?;
            let dir = out_dir(&common, &cfg, "winrate");
            std::fs::create_dir_all(&dir)?;
            let path = dir.join("winrate.csv");
            std::fs::write(&path, matrix.to_csv())?;
            print!("{}", matrix.to_csv());
            info!("win rates written to {}", path.display());
        }
        Command::AblateSp(common) => {
            let cfg = load(&common)?;
            let dir = out_dir(&common, &cfg, "ablate-sp");
            let (with, without) = harness::ablate_sp(&cfg, &dir)?;
            report(&with, &dir.join("with_sp"));
            report(&without, &dir.join("without_sp"));
        }
        Command::Sweep(common) => {
            let cfg = load(&common)?;
            let dir = out_dir(&common, &cfg, "sweep");
            let points = harness::sweep(&cfg, &dir)?;
            for p in &points {
                report(&p.manifest, &p.dir);
            }
            println!("summary -> {}", dir.join("summary.csv").display());
        }
    }
    Ok(())
}

fn train(common: &Common, algorithm: Algorithm) -> Result<(), Failure> {
    let cfg = load(common)?;
    let dir = out_dir(common, &cfg, algorithm.name());
    let manifest = harness::run_experiment(&cfg, algorithm, &dir)?;
    report(&manifest, &dir);
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(msg)) => {
            eprintln!("config error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(3)
        }
    }
}
