//! Toy-profile training run on scripted teleoperator demonstrations.
//!
//! cargo run --release -p grasp-cascade --example toy_train -- [cascade|gail_only|rl_only] [seed] [config.toml]

use grasp_cascade::demonstrations::{record_scripted, DemoMetadata};
use grasp_cascade::experiment::{ExperimentConfig, Mode, Trainer};
use grasp_cascade::solver::ScriptedSolver;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let args: Vec<String> = std::env::args().collect();
    let mode: Mode = args.get(1).map_or("cascade", |s| s.as_str()).parse()?;
    let seed: u64 = args.get(2).map_or(Ok(0), |s| s.parse())?;
    let mut config = match args.get(3) {
        Some(p) => ExperimentConfig::load(std::path::Path::new(p))?,
        None => ExperimentConfig::toy(),
    };
    config.mode = mode;
    config.seed = seed;
    config.eval_every = 10;
    config.eval_episodes = 20;
    config.demos = Some("unused".into());
    let env = config.load_env()?;
    let demos = record_scripted(&env, &mut ScriptedSolver::teleoperator(), 50, 1_000_000, DemoMetadata::for_env(&env, "scripted", 0))?;
    println!("demos: {} episodes, mean length {:.1}", demos.episodes.len(), demos.mean_length());
    let mut trainer = Trainer::new(config.clone(), env, config.load_rewards()?, Some(&demos))?;
    let t0 = std::time::Instant::now();
    while let Some(r) = trainer.iterate()? {
        println!(
            "{:4} {:7} {:?} {:?} eps {:3} succ {:.2}/{:.2} len {:5.1} ret {:8.2} env {:8.2} H {:6.2} kl {:.4} d {:?} mix {:.2} {:?} {:?} {:.0}s",
            r.iteration, r.env_steps, r.task, r.phase, r.episodes, r.success_rate, r.window_success_rate,
            r.mean_episode_length, r.mean_return, r.mean_env_return, r.entropy, r.approx_kl,
            r.disc_accuracy.map(|a| (a * 100.0).round() / 100.0), r.gail_mix, r.eval_success, r.events,
            t0.elapsed().as_secs_f64()
        );
        println!("     {:?}", r.event_means.iter().map(|(k, v)| format!("{k}={v:.2}")).collect::<Vec<_>>());
    }
    let rep = trainer.evaluate(100)?;
    println!("final eval: {rep:?}");
    Ok(())
}
