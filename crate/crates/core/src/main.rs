use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use forest_cslam::config::Settings;
use forest_cslam::eval::{
    clear_csv, clear_trial, detect_csv, detect_row, fusion_csv, fusion_trial, glarot_csv, glarot_row, scene_forest,
    side_by_side, single_agent, slam_csv, slam_trial, sweep_csv, epsilon_sweep, FusionConfig, SlamEvalConfig,
};
use forest_cslam::explore::run_mission;
use forest_cslam::pipeline::{order_payloads, report_tables, split_stream, PipelineState};
use forest_cslam::sim::{generate_forest, DEFAULT_RADIUS_RANGE};
use forest_cslam::{Error, Result, RngSeed};

#[derive(Parser)]
#[command(name = "fcslam", version, about = "Multi-agent forest CSLAM workbench")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone, Default)]
struct Common {
    /// `key = value` config file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override one config key; repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    #[arg(long)]
    seed: Option<u64>,
    /// Number of seeds or trials.
    #[arg(long)]
    seeds: Option<u64>,
    #[arg(long)]
    density: Option<f64>,
    /// Plot size as WxH meters.
    #[arg(long)]
    region: Option<String>,
    /// Output file (CSV commands, default stdout) or directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Also write wall-clock timing tables.
    #[arg(long)]
    timings: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum Planner {
    Proposed,
    Baseline,
}

#[derive(Clone, Copy, ValueEnum)]
enum AssocMode {
    /// CLEAR on corrupted synthetic instances.
    Synthetic,
    /// ε_CG sweep over simulated two-agent missions.
    Missions,
}

#[derive(Subcommand)]
enum Command {
    /// Sample a forest and write it as text.
    ForestGen(Common),
    /// Run an exploration mission and write its logs into a directory.
    Mission {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        planner: Option<Planner>,
        #[arg(long)]
        agents: Option<usize>,
    },
    /// Tree-detection precision over noise and density sweeps.
    DetectEval(Common),
    /// GLAROT distance of overlapping vs disjoint scan pairs.
    GlarotEval(Common),
    /// Association precision with and without CLEAR.
    AssocEval {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum, default_value = "synthetic")]
        mode: AssocMode,
    },
    /// Drifted missions through the full pipeline: ATE or two-agent fusion.
    SlamEval {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        agents: Option<usize>,
    },
    /// Replay recorded submap streams through the ground station.
    PipelineReplay {
        #[command(flatten)]
        common: Common,
        /// Mission output directory.
        #[arg(long)]
        input: PathBuf,
    },
    /// Payload (and with --timings, runtime) tables of a recorded mission.
    Report {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        input: PathBuf,
    },
}

fn settings(common: &Common, extra: &[(&str, String)]) -> Result<Settings> {
    let mut s = Settings::default();
    if let Some(path) = &common.config {
        s.apply_text(&std::fs::read_to_string(path)?)?;
    }
    for o in &common.set {
        s.apply_override(o)?;
    }
    let flags = [
        ("seed", common.seed.map(|v| v.to_string())),
        ("seeds", common.seeds.map(|v| v.to_string())),
        ("density", common.density.map(|v| v.to_string())),
        ("region", common.region.clone()),
    ];
    for (k, v) in flags.into_iter().filter_map(|(k, v)| v.map(|v| (k, v))) {
        s.set(k, &v)?;
    }
    for (k, v) in extra {
        s.set(k, v)?;
    }
    Ok(s)
}

fn emit(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(p) => {
            if let Some(dir) = p.parent().filter(|d| !d.as_os_str().is_empty()) {
                std::fs::create_dir_all(dir)?;
            }
            std::fs::write(p, text)?;
        }
        None => print!("{text}"),
    }
    Ok(())
}

fn out_dir(common: &Common) -> Result<&Path> {
    common.out.as_deref().ok_or_else(|| Error::Config("--out DIR is required".into()))
}

/// Reads every `agent*_submaps.bin` stream in `dir`, in receive order.
fn read_streams(dir: &Path) -> Result<Vec<Vec<u8>>> {
    let mut files: Vec<PathBuf> = std::fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.file_name().and_then(|n| n.to_str()).is_some_and(|n| n.starts_with("agent") && n.ends_with("_submaps.bin")))
        .collect();
    files.sort();
    if files.is_empty() {
        return Err(Error::Config(format!("no agent*_submaps.bin in {}", dir.display())));
    }
    let mut all = Vec::new();
    for f in files {
        all.extend(split_stream(&std::fs::read(f)?)?);
    }
    order_payloads(all)
}

fn replay(dir: &Path, s: &Settings) -> Result<PipelineState> {
    let mut st = PipelineState::new(s.pipeline);
    for b in read_streams(dir)? {
        st.ingest(&b)?;
    }
    Ok(st)
}

enum Failure {
    Usage(Error),
    Runtime(Error),
}

fn run(command: Command) -> std::result::Result<(), Failure> {
    use Failure::{Runtime, Usage};
    let (common, extra): (Common, Vec<(&str, String)>) = match &command {
        Command::ForestGen(c) | Command::DetectEval(c) | Command::GlarotEval(c) => (c.clone(), vec![]),
        Command::Mission { common, planner, agents } => {
            let mut e = vec![];
            if let Some(p) = planner {
                e.push(("planner", match p { Planner::Proposed => "proposed", Planner::Baseline => "baseline" }.to_string()));
            }
            if let Some(a) = agents {
                e.push(("agents", a.to_string()));
            }
            (common.clone(), e)
        }
        Command::SlamEval { common, agents } => (common.clone(), agents.map(|a| vec![("agents", a.to_string())]).unwrap_or_default()),
        Command::AssocEval { common, .. } | Command::PipelineReplay { common, .. } | Command::Report { common, .. } => {
            (common.clone(), vec![])
        }
    };
    let s = settings(&common, &extra).map_err(Usage)?;
    if matches!(command, Command::Mission { .. } | Command::PipelineReplay { .. } | Command::Report { .. }) {
        out_dir(&common).map_err(Usage)?;
    }
    let out = common.out.as_deref();
    let seed = RngSeed(s.seed);
    let result: Result<()> = (|| match &command {
        Command::ForestGen(_) => {
            let forest = generate_forest(s.density, s.region_rect(), DEFAULT_RADIUS_RANGE, seed)?;
            emit(out, &forest.to_text())
        }
        Command::Mission { .. } => {
            let dir = out_dir(&common)?;
            let agents = match s.agents {
                1 => vec![single_agent(s.region.0, s.region.1)],
                _ => side_by_side(s.region.0, s.region.1).to_vec(),
            };
            let forest = scene_forest(&agents, s.density, seed)?;
            let logs = run_mission(&forest, &agents, &s.mission, seed.derive("mission"))?;
            std::fs::create_dir_all(dir)?;
            std::fs::write(dir.join("forest.txt"), forest.to_text())?;
            std::fs::write(dir.join("settings.txt"), s.to_text())?;
            for log in &logs {
                log.write_dir(dir)?;
                print!("{}", log.summary_text());
            }
            Ok(())
        }
        Command::DetectEval(_) => {
            let mut rows = Vec::new();
            for &sigma in &s.sigmas {
                rows.push(detect_row(s.density, sigma, s.seeds, seed.derive("sigma-sweep"))?);
            }
            for &density in &s.densities {
                rows.push(detect_row(density, s.sigma, s.seeds, seed.derive("density-sweep"))?);
            }
            emit(out, &detect_csv(&rows))
        }
        Command::GlarotEval(_) => {
            let rows = s
                .densities
                .iter()
                .map(|&d| glarot_row(d, &s.pipeline.glare, s.seeds, seed.derive("glarot")))
                .collect::<Result<Vec<_>>>()?;
            emit(out, &glarot_csv(&rows))
        }
        Command::AssocEval { mode: AssocMode::Synthetic, .. } => {
            let trials = (0..s.seeds)
                .map(|k| clear_trial(s.corrupt_min, s.corrupt_max, &s.pipeline.clear, seed.derive("clear").nth(k)))
                .collect::<Result<Vec<_>>>()?;
            emit(out, &clear_csv(&trials))
        }
        Command::AssocEval { mode: AssocMode::Missions, .. } => {
            let cfg = FusionConfig { density: s.density, duration: s.eval_duration, drift: s.mission.drift, pipeline: s.pipeline };
            let mut text = String::new();
            for k in 0..s.seeds {
                let (_, logs) = forest_cslam::eval::fusion_logs(&cfg, seed.nth(k))?;
                let csv = sweep_csv(&epsilon_sweep(&logs, &s.epsilons, &s.pipeline)?);
                for (i, line) in csv.lines().enumerate() {
                    match (i, k) {
                        (0, 0) => text.push_str(&format!("seed,{line}\n")),
                        (0, _) => {}
                        _ => text.push_str(&format!("{},{line}\n", s.seed + k)),
                    }
                }
            }
            emit(out, &text)
        }
        Command::SlamEval { .. } => {
            if s.agents == 2 {
                let cfg = FusionConfig { density: s.density, duration: s.eval_duration, drift: s.mission.drift, pipeline: s.pipeline };
                let trials = (0..s.seeds)
                    .map(|k| fusion_trial(&cfg, seed.nth(k)).map(|t| (s.seed + k, t)))
                    .collect::<Result<Vec<_>>>()?;
                emit(out, &fusion_csv(&trials))
            } else {
                let cfg = SlamEvalConfig { duration: s.eval_duration, density: s.density, drift: s.mission.drift, pipeline: s.pipeline };
                let trials = (0..s.seeds)
                    .map(|k| slam_trial(&cfg, seed.nth(k)).map(|t| (s.seed + k, t)))
                    .collect::<Result<Vec<_>>>()?;
                emit(out, &slam_csv(&trials))
            }
        }
        Command::PipelineReplay { input, .. } => {
            let dir = out_dir(&common)?;
            let mut st = replay(input, &s)?;
            st.solve_now()?;
            std::fs::create_dir_all(dir)?;
            std::fs::write(dir.join("state.txt"), st.dump())?;
            let rows: Vec<_> = st.pairwise();
            std::fs::write(dir.join("associations.csv"), forest_cslam::cg::associations_csv(&rows))?;
            let labels: Vec<(u8, u16)> = st.submaps.iter().map(|m| (m.id.agent, m.id.seq)).collect();
            if let Some(g) = &st.global {
                std::fs::write(dir.join("global_association.csv"), g.to_csv(&labels))?;
            }
            if let Some(g) = &st.graph {
                std::fs::write(dir.join("graph.txt"), g.to_text())?;
            }
            println!("submaps = {}", st.submaps.len());
            println!("associations = {}", st.associations.len());
            println!("inter_agent_associations = {}", st.inter_agent_associations());
            println!("payload_bytes = {}", st.total_payload());
            Ok(())
        }
        Command::Report { input, .. } => {
            let dir = out_dir(&common)?;
            let st = replay(input, &s)?;
            let (runtime, payload) = report_tables(&st.ledger);
            std::fs::create_dir_all(dir)?;
            std::fs::write(dir.join("payload.csv"), payload)?;
            if common.timings {
                std::fs::write(dir.join("runtime.csv"), runtime)?;
            }
            println!("submaps = {}", st.submaps.len());
            println!("payload_bytes = {}", st.total_payload());
            Ok(())
        }
    })();
    result.map_err(Runtime)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = e.print();
                return ExitCode::SUCCESS;
            }
            let text = e.to_string();
            let first = text.lines().next().unwrap_or("").trim_start_matches("error: ");
            eprintln!("error: Usage: {first}");
            return ExitCode::from(2);
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(e)) => {
            eprintln!("error: {}: {e}", e.kind());
            ExitCode::from(2)
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("error: {}: {e}", e.kind());
            ExitCode::from(1)
        }
    }
}
