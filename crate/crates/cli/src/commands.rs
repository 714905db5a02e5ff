use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use grasp_cascade::demonstrations::{self, DemoMetadata, DemonstrationSet, EpisodeEnd};
use grasp_cascade::environment::{Environment, TerminalCause};
use grasp_cascade::experiment::{self, evaluate_controller, EvalReport, Mode};
use grasp_cascade::kinematics::EE_INDEX;
use grasp_cascade::rewards::RewardSchedule;
use grasp_cascade::solver::ScriptedSolver;
use grasp_cascade::teleop::SessionConfig;
use serde::Serialize;

use crate::{load_config, load_env, plot, server, write_json, CliResult, Failure};

#[derive(Parser, Debug)]
#[command(name = "grasp", version, about = "Task-divided grasp learning")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Serve a teleoperation session over a websocket.
    Teleop(TeleopArgs),
    /// Generate, validate or import demonstration files.
    #[command(subcommand)]
    Demos(DemosCommand),
    /// Train in cascade, gail_only or rl_only mode.
    Train(TrainArgs),
    /// Evaluate a checkpoint (or the scripted oracle) on seeded episodes.
    Eval(EvalArgs),
    /// Replay demonstration episodes and dump their trajectories.
    Replay(ReplayArgs),
    /// Plot reward and episode-length curves from a metrics log.
    Plot(PlotArgs),
}

/// Where the scene and chain come from: explicit files win over the config's.
#[derive(Args, Debug, Clone, Default)]
pub struct EnvArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub scene: Option<PathBuf>,
    #[arg(long)]
    pub chain: Option<PathBuf>,
}

impl EnvArgs {
    fn env(&self) -> CliResult<Environment> {
        load_env(self.config.as_deref(), self.scene.as_ref(), self.chain.as_ref())
    }
}

#[derive(Args, Debug)]
pub struct TeleopArgs {
    #[arg(long, default_value_t = 8080)]
    pub port: u16,
    #[arg(long)]
    pub scene: Option<PathBuf>,
    #[arg(long)]
    pub chain: Option<PathBuf>,
    #[arg(long, default_value_t = 30.0)]
    pub tick_hz: f64,
    /// Demonstration file recorded episodes are appended to.
    #[arg(long)]
    pub demo_out: Option<PathBuf>,
    #[arg(long)]
    pub static_dir: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Subcommand, Debug)]
pub enum DemosCommand {
    /// Record scripted-oracle episodes.
    Generate {
        #[command(flatten)]
        env: EnvArgs,
        #[arg(long, default_value_t = 50)]
        count: usize,
        #[arg(long, default_value_t = 1_000_000)]
        seed: u64,
        /// Use the fast solver instead of the slower operator-like one.
        #[arg(long)]
        fast: bool,
        #[arg(long)]
        out: PathBuf,
    },
    /// Check hashes, dimensions and bitwise replay of every episode.
    Validate {
        #[command(flatten)]
        env: EnvArgs,
        file: PathBuf,
    },
    /// Re-stamp episodes for this scene and chain, keeping those that replay exactly.
    Import {
        #[command(flatten)]
        env: EnvArgs,
        files: Vec<PathBuf>,
        /// Keep only episodes that end in success.
        #[arg(long)]
        successful_only: bool,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    /// Experiment config; the toy profile when absent.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub mode: Option<String>,
    #[arg(long)]
    pub max_steps: Option<u64>,
    #[arg(long)]
    pub workers: Option<usize>,
    #[arg(long)]
    pub demos: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    /// Continue from `out/checkpoints/latest.json` if present.
    #[arg(long)]
    pub resume: bool,
}

#[derive(Args, Debug)]
pub struct EvalArgs {
    #[command(flatten)]
    pub env: EnvArgs,
    /// Checkpoint to evaluate; its run directory supplies the scene and chain
    /// unless given explicitly.
    #[arg(long, required_unless_present = "oracle")]
    pub checkpoint: Option<PathBuf>,
    /// Evaluate the scripted solver instead of a checkpoint.
    #[arg(long)]
    pub oracle: bool,
    #[arg(long, default_value_t = 100)]
    pub episodes: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct ReplayArgs {
    #[command(flatten)]
    pub env: EnvArgs,
    pub file: PathBuf,
    #[arg(long)]
    pub episode: Option<usize>,
    /// Trajectory lines go here; stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct PlotArgs {
    pub metrics: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = plot::BIN_STEPS)]
    pub bin_steps: u64,
}

pub fn run(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::Teleop(a) => teleop(a),
        Command::Demos(d) => demos(d),
        Command::Train(a) => train(a),
        Command::Eval(a) => eval(a),
        Command::Replay(a) => replay(a),
        Command::Plot(a) => {
            let report = plot::plot_metrics(&a.metrics, &a.out, a.bin_steps)?;
            println!(
                "{} records, {} bins, {} warnings",
                report.records,
                report.bins.len(),
                report.warnings()
            );
            write_json(&a.out.join("plot_report.json"), &report)
        }
    }
}

fn teleop(a: TeleopArgs) -> CliResult<()> {
    let env = EnvArgs { config: None, scene: a.scene, chain: a.chain }.env()?;
    let session = SessionConfig { tick_hz: a.tick_hz, seed: a.seed, ..SessionConfig::default() };
    if !(a.tick_hz > 0.0 && a.tick_hz.is_finite()) {
        return Err(Failure::config("--tick-hz must be positive"));
    }
    let config = server::ServerConfig { env, session, demo_out: a.demo_out, static_dir: a.static_dir };
    let rt = tokio::runtime::Runtime::new()?;
    rt.block_on(async {
        let listener = tokio::net::TcpListener::bind(("127.0.0.1", a.port)).await?;
        println!("listening on http://{}", listener.local_addr()?);
        server::serve(listener, config).await
    })
    .map_err(|e| Failure { code: crate::EXIT_OTHER, message: e.to_string() })
}

fn now() -> u64 {
    std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map_or(0, |d| d.as_secs())
}

fn demos(cmd: DemosCommand) -> CliResult<()> {
    match cmd {
        DemosCommand::Generate { env, count, seed, fast, out } => {
            let env = env.env()?;
            let mut solver = if fast { ScriptedSolver::default() } else { ScriptedSolver::teleoperator() };
            let meta = DemoMetadata::for_env(&env, "scripted", now());
            let set = demonstrations::record_scripted(&env, &mut solver, count, seed, meta)?;
            demonstrations::save(&set, &out)?;
            println!("{} episodes, mean length {:.1}", set.episodes.len(), set.mean_length());
            Ok(())
        }
        DemosCommand::Validate { env, file } => {
            let env = env.env()?;
            let set = demonstrations::load(&file, &env)?;
            println!(
                "{}: {} episodes, {} steps, mean length {:.1}: ok",
                file.display(),
                set.episodes.len(),
                set.total_steps(),
                set.mean_length()
            );
            Ok(())
        }
        DemosCommand::Import { env, files, successful_only, out } => {
            let env = env.env()?;
            let mut episodes = Vec::new();
            let mut dropped = 0;
            for f in &files {
                let set = demonstrations::read(f)?;
                for (i, mut ep) in set.episodes.into_iter().enumerate() {
                    let keep = !successful_only || ep.end == EpisodeEnd::Terminal(TerminalCause::Success);
                    match demonstrations::replay(&env, i, &mut ep) {
                        Ok(()) if keep => episodes.push(ep),
                        Ok(()) => dropped += 1,
                        Err(e) => {
                            log::warn!("{}: dropping episode {i}: {e}", f.display());
                            dropped += 1;
                        }
                    }
                }
            }
            let set = DemonstrationSet { metadata: DemoMetadata::for_env(&env, "import", now()), episodes };
            demonstrations::save(&set, &out)?;
            println!("imported {} episodes, dropped {dropped}", set.episodes.len());
            Ok(())
        }
    }
}

fn train(a: TrainArgs) -> CliResult<()> {
    let mut config = load_config(a.config.as_deref())?;
    if let Some(s) = a.seed {
        config.seed = s;
    }
    if let Some(m) = &a.mode {
        config.mode = m.parse::<Mode>().map_err(Failure::config)?;
    }
    if let Some(n) = a.max_steps {
        config.max_steps = n;
    }
    if let Some(w) = a.workers {
        config.workers = w.max(1);
    }
    if let Some(d) = a.demos {
        config.demos = Some(d);
    }
    config.validate().map_err(Failure::config)?;
    std::fs::create_dir_all(&a.out).map_err(|e| Failure::data(format!("{}: {e}", a.out.display())))?;
    let report = experiment::cmd_train(&config, &a.out, a.resume)?;
    println!(
        "{} iterations, {} env steps, {:.0} s",
        report.iterations, report.env_steps, report.wall_seconds
    );
    if let Some(e) = &report.eval {
        print_eval(e);
    }
    Ok(())
}

/// Scene and chain for evaluating `checkpoint`: explicit arguments, else the
/// copies in its run directory, else the defaults.
fn eval_env(args: &EnvArgs, checkpoint: Option<&Path>) -> CliResult<Environment> {
    if args.config.is_some() || args.scene.is_some() || args.chain.is_some() {
        return args.env();
    }
    let run_dir = checkpoint.and_then(|c| c.parent()).and_then(|p| p.parent());
    match run_dir {
        Some(d) if d.join("scene.toml").exists() => EnvArgs {
            config: None,
            scene: Some(d.join("scene.toml")),
            chain: Some(d.join("chain.toml")).filter(|p| p.exists()),
        }
        .env(),
        _ => args.env(),
    }
}

fn print_eval(e: &EvalReport) {
    println!(
        "success {:.2} / {:.2} / {:.2}, mean length {:.1}, mean return {:.2}",
        e.success_rate[0], e.success_rate[1], e.success_rate[2], e.mean_length, e.mean_return
    );
}

fn eval(a: EvalArgs) -> CliResult<()> {
    let env = eval_env(&a.env, a.checkpoint.as_deref())?;
    let report = if a.oracle {
        let mut sched = RewardSchedule::new(Default::default());
        sched.enter_whole_motion();
        evaluate_controller(&env, &mut ScriptedSolver::default(), a.episodes, a.seed, &sched)?
    } else {
        let ck = a.checkpoint.as_ref().expect("required unless --oracle");
        experiment::cmd_eval(ck, &env, a.episodes, a.seed)?
    };
    print_eval(&report);
    match &a.out {
        Some(p) => write_json(p, &report),
        None => Ok(()),
    }
}

#[derive(Serialize)]
struct TrajectoryLine<'a> {
    episode: usize,
    t: usize,
    task: grasp_cascade::environment::TaskId,
    ee: [f64; 7],
    action: &'a [f64],
    events: Vec<String>,
}

fn replay(a: ReplayArgs) -> CliResult<()> {
    let env = a.env.env()?;
    let mut set = demonstrations::load(&a.file, &env)?;
    let mut out: Box<dyn Write> = match &a.out {
        Some(p) => Box::new(std::io::BufWriter::new(std::fs::File::create(p)?)),
        None => Box::new(std::io::stdout().lock()),
    };
    let chosen: Vec<usize> = match a.episode {
        Some(i) if i < set.episodes.len() => vec![i],
        Some(i) => return Err(Failure::data(format!("episode {i} out of range ({} episodes)", set.episodes.len()))),
        None => (0..set.episodes.len()).collect(),
    };
    for i in chosen {
        let ep = &mut set.episodes[i];
        let mut state = ep.initial_state.clone();
        for (t, step) in ep.steps.iter().enumerate() {
            let mut act = [0.0; 7];
            act.copy_from_slice(&step.action);
            let line = TrajectoryLine {
                episode: i,
                t,
                task: step.task,
                ee: env.poses(&state)[EE_INDEX].to_array(),
                action: &step.action,
                events: step.events.iter().map(|e| format!("{:?}", e.tag)).collect(),
            };
            writeln!(out, "{}", serde_json::to_string(&line).map_err(Failure::data)?)?;
            env.step(&mut state, &grasp_cascade::environment::Action(act))?;
        }
        log::info!("episode {i}: {} steps, {:?}", ep.len(), ep.end);
    }
    out.flush()?;
    Ok(())
}
