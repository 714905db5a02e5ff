use std::io::Write;

use grasp_cascade::demonstrations::*;
use grasp_cascade::environment::*;
use grasp_cascade::kinematics::KinematicChain;
use grasp_cascade::rewards::{RewardConfig, RewardSchedule};
use grasp_cascade::solver::ScriptedSolver;
use grasp_cascade::Error;

fn env() -> Environment {
    Environment::new(KinematicChain::generic_6r(), Scene::default()).unwrap()
}

fn scripted(env: &Environment, n: usize) -> DemonstrationSet {
    let meta = DemoMetadata::for_env(env, "scripted", 1_700_000_000);
    record_scripted(env, &mut ScriptedSolver::teleoperator(), n, 100, meta).unwrap()
}

fn bits(set: &DemonstrationSet) -> Vec<u64> {
    set.episodes
        .iter()
        .flat_map(|e| e.steps.iter().flat_map(|s| s.observation.iter().chain(&s.action)))
        .map(|v| v.to_bits())
        .collect()
}

#[test]
fn three_steps_then_close() {
    let env = env();
    let mut state = env.reset(1, TaskId::Task1, TaskId::Task3, &mut []).unwrap();
    let mut rec = Recorder::new("t");
    rec.open(&state).unwrap();
    for _ in 0..3 {
        let obs = env.observe(&state);
        let task = state.active_task;
        let out = env.step(&mut state, &Action([0.1; 7])).unwrap();
        assert!(rec.record_step(&obs, task, &out).unwrap().is_none());
    }
    let ep = rec.close().unwrap();
    assert_eq!(ep.len(), 3);
    assert_eq!(ep.end, EpisodeEnd::Stopped);
    let obs = env.observe(&state);
    let out = env.step(&mut state, &Action([0.0; 7])).unwrap();
    assert!(matches!(rec.record_step(&obs, TaskId::Task1, &out), Err(Error::Recorder(_))));
}

#[test]
fn terminal_closes_with_cause_and_actions_are_clipped() {
    let env = env();
    let mut state = env.reset(2, TaskId::Task1, TaskId::Task3, &mut []).unwrap();
    let mut rec = Recorder::new("t");
    rec.open(&state).unwrap();
    let mut closed = None;
    for _ in 0..1000 {
        let obs = env.observe(&state);
        let task = state.active_task;
        let out = env.step(&mut state, &Action([5.0, 5.0, 0.0, 0.0, 0.0, 0.0, 0.0])).unwrap();
        if let Some(ep) = rec.record_step(&obs, task, &out).unwrap() {
            closed = Some(ep);
            break;
        }
    }
    let ep = closed.expect("the simulator terminates");
    assert!(matches!(ep.end, EpisodeEnd::Terminal(_)));
    assert!(!rec.is_open());
    assert_eq!(ep.steps[0].action[0], env.chain.max_speed(0));
}

#[test]
fn replay_reproduces_recording_bitwise() {
    let env = env();
    let set = scripted(&env, 5);
    for (i, ep) in set.episodes.iter().enumerate() {
        let mut copy = ep.clone();
        copy.steps.iter_mut().for_each(|s| s.events.clear());
        replay(&env, i, &mut copy).unwrap();
        assert_eq!(&copy, ep);
    }
}

#[test]
fn fifty_episode_round_trip_is_bitwise() {
    let env = env();
    let set = scripted(&env, 50);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("demos.jsonl");
    save(&set, &path).unwrap();
    let back = load(&path, &env).unwrap();
    assert_eq!(back, set);
    assert_eq!(bits(&back), bits(&set));
    assert_eq!(back.episodes.len(), 50);
}

#[test]
fn tampered_scene_hash_rejected() {
    let env = env();
    let mut set = scripted(&env, 1);
    set.metadata.scene_hash = "0".repeat(64);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("d.jsonl");
    save(&set, &path).unwrap();
    assert!(matches!(load(&path, &env), Err(Error::HashMismatch { what: "scene", .. })));
}

#[test]
fn different_scene_rejected() {
    let env = env();
    let set = scripted(&env, 1);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("d.jsonl");
    save(&set, &path).unwrap();
    let mut scene = Scene::default();
    scene.thresholds.episode_cap += 1;
    let other = Environment::new(KinematicChain::generic_6r(), scene).unwrap();
    assert!(matches!(load(&path, &other), Err(Error::HashMismatch { .. })));
}

#[test]
fn short_observation_names_episode_and_step() {
    let env = env();
    let mut set = scripted(&env, 3);
    set.episodes[2].steps[7].observation.pop();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("d.jsonl");
    save(&set, &path).unwrap();
    match read(&path) {
        Err(Error::Dimension {
            episode,
            step,
            what,
            found,
            expected,
        }) => {
            assert_eq!((episode, step, what, found, expected), (2, 7, "observation", 62, 63));
        }
        other => panic!("{other:?}"),
    }
}

#[test]
fn truncated_and_wrong_version_files() {
    let env = env();
    let set = scripted(&env, 2);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("d.jsonl");
    save(&set, &path).unwrap();
    let text = std::fs::read_to_string(&path).unwrap();

    let cut = dir.path().join("cut.jsonl");
    std::fs::write(&cut, &text[..text.len() - 40]).unwrap();
    assert!(matches!(read(&cut), Err(Error::Truncated(_))));

    let lines: Vec<&str> = text.lines().collect();
    let missing_end = dir.path().join("noend.jsonl");
    let mut f = std::fs::File::create(&missing_end).unwrap();
    for l in &lines[..lines.len() - 1] {
        writeln!(f, "{l}").unwrap();
    }
    drop(f);
    assert!(matches!(read(&missing_end), Err(Error::Truncated(_))));

    let v2 = dir.path().join("v2.jsonl");
    std::fs::write(&v2, text.replacen("\"format_version\":1", "\"format_version\":2", 1)).unwrap();
    assert!(matches!(read(&v2), Err(Error::Version { found: 2, expected: 1 })));

    let empty = dir.path().join("empty.jsonl");
    std::fs::write(&empty, "").unwrap();
    assert!(matches!(read(&empty), Err(Error::Truncated(_))));
}

#[test]
fn edited_action_fails_replay() {
    let env = env();
    let mut set = scripted(&env, 1);
    set.episodes[0].steps[3].action[1] += 1e-9;
    assert!(matches!(validate(&env, &mut set), Err(Error::CorruptEpisode { episode: 0, .. })));
}

#[test]
fn task1_only_episode_is_one_segment() {
    let env = env();
    let mut state = env.reset(3, TaskId::Task1, TaskId::Task3, &mut []).unwrap();
    let mut rec = Recorder::new("t");
    rec.open(&state).unwrap();
    for _ in 0..4 {
        let obs = env.observe(&state);
        let out = env.step(&mut state, &Action([0.0, 0.0, 0.0, 0.0, 0.2, 0.0, 0.0])).unwrap();
        rec.record_step(&obs, TaskId::Task1, &out).unwrap();
    }
    let ep = rec.close().unwrap();
    let sched = RewardSchedule::new(RewardConfig::default());
    let segs = segment_by_task(0, &ep, &sched).unwrap();
    assert_eq!(segs.len(), 1);
    assert_eq!(segs[0].range, 0..4);
}

#[test]
fn scripted_segments_match_logged_transitions() {
    let env = env();
    let sched = RewardSchedule::new(RewardConfig::default());
    for seed in 0..10 {
        let mut solver = ScriptedSolver::teleoperator();
        let mut state = env.reset(seed, TaskId::Task1, TaskId::Task3, &mut []).unwrap();
        let mut rec = Recorder::new("t");
        rec.open(&state).unwrap();
        let mut log = Vec::new();
        let ep = loop {
            let obs = env.observe(&state);
            let task = state.active_task;
            let a = solver.act(&env, &state, &obs);
            let out = env.step(&mut state, &a).unwrap();
            if out.task_transition.is_some() {
                log.push(state.step_count as usize);
            }
            if let Some(ep) = rec.record_step(&obs, task, &out).unwrap() {
                break ep;
            }
        };
        let segs = segment_by_task(0, &ep, &sched).unwrap();
        assert_eq!(segs.len(), 3);
        let ends: Vec<usize> = segs.iter().map(|s| s.range.end).collect();
        assert_eq!(ends, log);
        for s in &segs {
            let brute: f64 = ep.steps[s.range.clone()]
                .iter()
                .map(|st| {
                    st.events
                        .iter()
                        .map(|e| sched.weight(st.task, e.tag) * e.magnitude)
                        .sum::<f64>()
                })
                .sum();
            assert_eq!(s.reward_sum, brute);
        }
    }
}

#[test]
fn decreasing_task_ids_rejected() {
    let env = env();
    let mut set = scripted(&env, 1);
    let n = set.episodes[0].steps.len();
    set.episodes[0].steps[n - 1].task = TaskId::Task1;
    let sched = RewardSchedule::new(RewardConfig::default());
    assert!(matches!(
        segment_by_task(0, &set.episodes[0], &sched),
        Err(Error::CorruptEpisode { .. })
    ));
    assert!(matches!(check_structure(0, &set.episodes[0]), Err(Error::CorruptEpisode { .. })));
}
