use super::*;
use crate::collision::SignedDistance;
use crate::solver::ScriptedSolver;

fn env() -> Environment {
    Environment::new(KinematicChain::generic_6r(), Scene::default()).unwrap()
}

fn run_to_end(env: &Environment, state: &mut WorldState, ctrl: &mut dyn Controller) -> TerminalCause {
    ctrl.begin_episode();
    loop {
        let obs = env.observe(state);
        let a = ctrl.act(env, state, &obs);
        if let Some(c) = env.step(state, &a).unwrap().terminal {
            return c;
        }
    }
}

/// Joint angles placing the hand at `target` via iterated IK (test helper).
fn solve_to(env: &Environment, state: &mut WorldState, target: &Pose) {
    let ik = crate::kinematics::IkConfig::default();
    for _ in 0..2000 {
        let d = crate::kinematics::ik_step(&env.chain, &state.joint_state, target, &ik).unwrap();
        for i in 0..6 {
            state.joint_state.angles[i] += d[i];
        }
    }
}

fn aligned_target(env: &Environment, state: &WorldState, back: f64) -> Pose {
    let ee = env.poses(state)[EE_INDEX];
    let dir = state.grasp_direction.into_inner();
    Pose::new(
        state.grasp_point - dir * back,
        crate::solver::aligned_orientation(&ee, &dir),
    )
}

#[test]
fn reset_is_deterministic() {
    let e = env();
    let a = e.reset(42, TaskId::Task1, TaskId::Task3, &mut []).unwrap();
    let b = e.reset(42, TaskId::Task1, TaskId::Task3, &mut []).unwrap();
    assert_eq!(a, b);
    let c = e.reset(43, TaskId::Task1, TaskId::Task3, &mut []).unwrap();
    assert_ne!(a.object_pose, c.object_pose);
}

#[test]
fn reset_needs_priors_for_later_tasks() {
    let e = env();
    assert!(e.reset(1, TaskId::Task2, TaskId::Task2, &mut []).is_err());
}

#[test]
fn reset_task2_with_scripted_prior_satisfies_task1() {
    let e = env();
    let mut s1 = ScriptedSolver::default();
    for seed in 0..10 {
        let st = e.reset(seed, TaskId::Task2, TaskId::Task2, &mut [&mut s1]).unwrap();
        assert_eq!(st.active_task, TaskId::Task2);
        assert_eq!(st.step_count, 0);
        assert_eq!(e.task_predicate(&st, TaskId::Task1), TaskStatus::Success);
    }
}

#[test]
fn reset_task3_hand_at_grasp_point_open() {
    let e = env();
    let mut s1 = ScriptedSolver::default();
    let mut s2 = ScriptedSolver::default();
    for seed in 0..10 {
        let st = e
            .reset(seed, TaskId::Task3, TaskId::Task3, &mut [&mut s1, &mut s2])
            .unwrap();
        let g = e.geometry(&st);
        assert!(g.point_distance < e.thresholds().near_distance);
        assert!(g.alignment < e.thresholds().align_deg.to_radians());
        assert_eq!(g.closed_fraction, 0.0);
        assert_eq!(e.task_predicate(&st, TaskId::Task2), TaskStatus::Success);
    }
}

#[test]
fn failing_prior_is_setup_error() {
    struct Idle;
    impl Controller for Idle {
        fn act(&mut self, _: &Environment, _: &WorldState, _: &Observation) -> Action {
            Action::default()
        }
    }
    let mut scene = Scene::default();
    scene.thresholds.episode_cap = 5;
    scene.thresholds.reset_retries = 3;
    let e = Environment::new(KinematicChain::generic_6r(), scene).unwrap();
    assert!(matches!(
        e.reset(0, TaskId::Task2, TaskId::Task2, &mut [&mut Idle]),
        Err(Error::Setup { task: TaskId::Task1, attempts: 3 })
    ));
}

#[test]
fn scripted_solver_completes_whole_motion_across_region() {
    let e = env();
    for solver in [ScriptedSolver::default(), ScriptedSolver::teleoperator()] {
        let mut ok = 0;
        for seed in 0..100 {
            let mut s = solver.clone();
            let mut st = e.reset(seed, TaskId::Task1, TaskId::Task3, &mut []).unwrap();
            if run_to_end(&e, &mut st, &mut s) == TerminalCause::Success {
                ok += 1;
            }
        }
        assert_eq!(ok, 100, "solver {solver:?}");
    }
}

#[test]
fn zero_action_keeps_pose() {
    let e = env();
    let mut st = e.reset(1, TaskId::Task1, TaskId::Task3, &mut []).unwrap();
    let before = st.joint_state.angles;
    let out = e.step(&mut st, &Action::default()).unwrap();
    assert_eq!(st.joint_state.angles, before);
    assert_eq!(st.step_count, 1);
    assert!(out.terminal.is_none());
}

#[test]
fn step_is_deterministic_and_rejects_nan() {
    let e = env();
    let st0 = e.reset(5, TaskId::Task1, TaskId::Task3, &mut []).unwrap();
    let a = Action([0.3, -0.2, 0.5, 0.1, -0.4, 0.9, 1.0]);
    let (mut s1, mut s2) = (st0.clone(), st0.clone());
    let o1 = e.step(&mut s1, &a).unwrap();
    let o2 = e.step(&mut s2, &a).unwrap();
    assert_eq!(o1, o2);
    assert_eq!(s1, s2);
    let mut s3 = st0.clone();
    let bad = Action([f64::NAN, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0]);
    assert!(e.step(&mut s3, &bad).is_err());
    assert_eq!(s3, st0);
}

#[test]
fn action_clipped_to_speed_limits() {
    let e = env();
    let mut st = e.reset(5, TaskId::Task1, TaskId::Task3, &mut []).unwrap();
    let out = e.step(&mut st, &Action([10.0; 7])).unwrap();
    for i in 0..7 {
        assert_eq!(out.applied.0[i], e.chain.max_speed(i));
    }
}

#[test]
fn episode_cap_times_out() {
    let mut scene = Scene::default();
    scene.thresholds.episode_cap = 3;
    let e = Environment::new(KinematicChain::generic_6r(), scene).unwrap();
    let mut st = e.reset(1, TaskId::Task1, TaskId::Task3, &mut []).unwrap();
    e.step(&mut st, &Action::default()).unwrap();
    e.step(&mut st, &Action::default()).unwrap();
    let out = e.step(&mut st, &Action::default()).unwrap();
    assert_eq!(out.terminal, Some(TerminalCause::Timeout));
    assert!(out.events.iter().any(|ev| ev.tag == EventTag::StepLimit));
    assert!(matches!(e.step(&mut st, &Action::default()), Err(Error::Terminated)));
}

#[test]
fn driving_into_cup_collides() {
    let e = env();
    let mut st = e.reset(2, TaskId::Task1, TaskId::Task3, &mut []).unwrap();
    // hover just outside the cup wall, hand pointing at the cup axis from the -x side
    let ee = e.poses(&st)[EE_INDEX];
    let center = st.object_pose.position + Vec3::new(0.0, 0.0, 0.06);
    let dir = Vec3::x();
    let target = Pose::new(
        center - dir * (e.scene.object.body_radius + e.scene.collision.gripper_radius + 0.004),
        crate::solver::aligned_orientation(&ee, &dir),
    );
    solve_to(&e, &mut st, &target);
    assert!(e.check_collision(&st).is_empty(), "{:?}", e.check_collision(&st));
    let mut ctrl = ScriptedSolver::default();
    let mut cause = None;
    for _ in 0..20 {
        let tgt = Pose::new(center, target.orientation);
        let d = crate::kinematics::ik_step(&e.chain, &st.joint_state, &tgt, &ctrl.ik).unwrap();
        let mut a = [0.0; 7];
        for i in 0..6 {
            a[i] = d[i] / e.thresholds().dt;
        }
        let out = e.step(&mut st, &Action(a)).unwrap();
        if out.terminal.is_some() {
            assert!(out.events.iter().any(|ev| ev.tag == EventTag::Collision));
            cause = out.terminal;
            break;
        }
    }
    let _ = &mut ctrl;
    assert_eq!(cause, Some(TerminalCause::Collision));
}

#[test]
fn observation_layout() {
    let e = env();
    let st = e.reset(9, TaskId::Task1, TaskId::Task3, &mut []).unwrap();
    let obs = e.observe(&st);
    assert_eq!(obs.0.len(), 63);
    assert_eq!(obs.entity(8), &st.object_pose.to_array());
    for i in 0..OBS_ENTITIES {
        let q = &obs.entity(i)[3..];
        let n: f64 = q.iter().map(|v| v * v).sum::<f64>().sqrt();
        assert!((n - 1.0).abs() < 1e-12);
    }
}

#[test]
fn observation_gripper_locality() {
    let e = env();
    let st = e.reset(9, TaskId::Task1, TaskId::Task3, &mut []).unwrap();
    let mut other = st.clone();
    other.joint_state.angles[GRIPPER_INDEX] = 0.5;
    let a = e.observe(&st);
    let b = e.observe(&other);
    for i in 0..OBS_ENTITIES {
        if i == GRIPPER_INDEX {
            assert_ne!(a.entity(i), b.entity(i));
        } else {
            assert_eq!(a.entity(i), b.entity(i), "entity {i}");
        }
    }
}

#[test]
fn predicate_constructed_configurations() {
    let e = env();
    let mut st = e.reset(3, TaskId::Task1, TaskId::Task3, &mut []).unwrap();
    let t = e.thresholds().clone();
    // aligned on the ray, 5 cm back
    let target = aligned_target(&e, &st, 0.05);
    solve_to(&e, &mut st, &target);
    assert_eq!(e.task_predicate(&st, TaskId::Task1), TaskStatus::Success);
    assert_eq!(e.task_predicate(&st, TaskId::Task2), TaskStatus::InProgress);

    // at the grasp point, gripper open
    let target = aligned_target(&e, &st, 0.0);
    solve_to(&e, &mut st, &target);
    assert_eq!(e.task_predicate(&st, TaskId::Task2), TaskStatus::Success);
    assert_eq!(e.task_predicate(&st, TaskId::Task3), TaskStatus::InProgress);

    st.joint_state.angles[GRIPPER_INDEX] = e.chain.gripper.upper * t.closure_fraction + 0.01;
    assert_eq!(e.task_predicate(&st, TaskId::Task3), TaskStatus::Success);

    // misaligned by twice the threshold
    let ee = e.poses(&st)[EE_INDEX];
    let tilt = UnitQuaternion::from_axis_angle(&Vec3::x_axis(), 2.0 * t.align_deg.to_radians());
    let tilted = Pose::new(ee.position, tilt * ee.orientation);
    solve_to(&e, &mut st, &tilted);
    assert_eq!(e.task_predicate(&st, TaskId::Task2), TaskStatus::Violated);
}

#[test]
fn task2_success_implies_task1_alignment() {
    let e = env();
    let mut s1 = ScriptedSolver::default();
    for seed in 0..20 {
        let mut st = e.reset(seed, TaskId::Task2, TaskId::Task2, &mut [&mut s1]).unwrap();
        let mut s2 = ScriptedSolver::default();
        loop {
            let obs = e.observe(&st);
            let a = s2.act(&e, &st, &obs);
            let out = e.step(&mut st, &a).unwrap();
            if e.task_predicate(&st, TaskId::Task2) == TaskStatus::Success {
                assert_eq!(e.task_predicate(&st, TaskId::Task1), TaskStatus::Success);
            }
            if out.terminal.is_some() {
                break;
            }
        }
    }
}

#[test]
fn home_configuration_collision_free() {
    let e = env();
    for seed in 0..50 {
        let st = e.reset(seed, TaskId::Task1, TaskId::Task3, &mut []).unwrap();
        assert!(e.check_collision(&st).is_empty());
    }
}

#[test]
fn hand_inside_cup_reports_gripper_object() {
    let e = env();
    let mut st = e.reset(4, TaskId::Task1, TaskId::Task3, &mut []).unwrap();
    let ee = e.poses(&st)[EE_INDEX];
    let center = st.object_pose.position + Vec3::new(0.0, 0.0, 0.06);
    let dir = Vec3::new(0.0, 0.0, -1.0);
    let target = Pose::new(center, crate::solver::aligned_orientation(&ee, &dir));
    solve_to(&e, &mut st, &target);
    assert!((e.poses(&st)[EE_INDEX].position - center).norm() < 1e-6);
    assert!(e.check_collision(&st).contains(&(Body::Gripper, Body::Object)));
}

/// Independent point-to-primitive distances for the sampling oracle.
fn oracle_point_cylinder(p: &Vec3, c: &Cylinder) -> f64 {
    let l = c.pose.inverse().transform_point(p);
    let r = l.x.hypot(l.y);
    let dz = l.z.abs() - c.half_height;
    let dr = r - c.radius;
    if dr <= 0.0 && dz <= 0.0 {
        dr.max(dz)
    } else {
        dr.max(0.0).hypot(dz.max(0.0))
    }
}

#[test]
fn grazing_contact_matches_sampling_oracle() {
    let e = env();
    let mut st = e.reset(6, TaskId::Task1, TaskId::Task3, &mut []).unwrap();
    // hand pointing down alongside the cup wall, gripper capsule tangent to it
    let side = st.object_pose.transform_vector(&Vec3::y());
    let dir = -Vec3::z();
    let ee0 = e.poses(&st)[EE_INDEX];
    let target = Pose::new(
        st.object_pose.position
            + Vec3::new(0.0, 0.0, 0.05)
            + side * (e.scene.object.body_radius + e.scene.collision.gripper_radius),
        crate::solver::aligned_orientation(&ee0, &dir),
    );
    solve_to(&e, &mut st, &target);
    let poses = e.poses(&st);
    let (body, _) = e.object_shapes(&st.object_pose);
    let seg = Segment::new(poses[GRIPPER_INDEX].position, poses[EE_INDEX].position);
    let n = 1_000_000;
    let sampled = (0..=n)
        .map(|i| oracle_point_cylinder(&seg.point(i as f64 / n as f64), &body))
        .fold(f64::INFINITY, f64::min)
        - e.scene.collision.gripper_radius;
    let analytic = e
        .pair_distances(&st)
        .into_iter()
        .find(|(p, _)| *p == (Body::Gripper, Body::Object))
        .unwrap()
        .1;
    assert!(analytic.abs() < 1e-6, "touching distance {analytic}");
    assert!((sampled - analytic).abs() < 1e-6, "{sampled} vs {analytic}");
    // the analytic point distance agrees with the oracle's
    let p = seg.point(0.3);
    assert!((body.point_distance(&p) - oracle_point_cylinder(&p, &body)).abs() < 1e-12);
}

#[test]
fn events_follow_active_task() {
    let e = env();
    let mut st = e.reset(8, TaskId::Task1, TaskId::Task3, &mut []).unwrap();
    let mut s = ScriptedSolver::default();
    let mut saw = std::collections::BTreeSet::new();
    let mut transitions = vec![];
    loop {
        let obs = e.observe(&st);
        let a = s.act(&e, &st, &obs);
        let task = st.active_task;
        let out = e.step(&mut st, &a).unwrap();
        for ev in &out.events {
            saw.insert((task, ev.tag));
        }
        if let Some(t) = out.task_transition {
            transitions.push(t);
        }
        if let Some(c) = out.terminal {
            assert_eq!(c, TerminalCause::Success);
            break;
        }
    }
    assert_eq!(transitions, vec![TaskId::Task1, TaskId::Task2, TaskId::Task3]);
    assert!(saw.contains(&(TaskId::Task1, EventTag::DirectionApproach)));
    assert!(saw.contains(&(TaskId::Task1, EventTag::ReachedDirection)));
    assert!(saw.contains(&(TaskId::Task2, EventTag::GraspPointApproach)));
    assert!(saw.contains(&(TaskId::Task3, EventTag::HandClosedAtGraspPoint)));
    assert!(saw.contains(&(TaskId::Task3, EventTag::TaskSuccess(TaskId::Task3))));
}

#[test]
fn reached_direction_paid_once_per_episode() {
    let e = env();
    let mut st = e.reset(3, TaskId::Task1, TaskId::Task1, &mut []).unwrap();
    // turn the hand in place; the position stays off the ray so the task cannot succeed
    let ik = crate::kinematics::IkConfig::default();
    let dt = e.thresholds().dt;
    let mut path = vec![];
    loop {
        let ee = e.poses(&st)[EE_INDEX];
        let dir = st.grasp_direction.into_inner();
        let target = Pose::new(ee.position, crate::solver::aligned_orientation(&ee, &dir));
        let d = crate::kinematics::ik_step(&e.chain, &st.joint_state, &target, &ik).unwrap();
        let mut a = Action([0.0; 7]);
        for i in 0..6 {
            a.0[i] = d[i] / dt;
        }
        let a = e.clip_action(&a);
        let out = e.step(&mut st, &a).unwrap();
        assert!(out.terminal.is_none());
        path.push(a);
        if out.events.iter().any(|ev| ev.tag == EventTag::ReachedDirection) {
            break;
        }
    }
    // retrace the path backwards, then forwards again across the threshold
    let back: Vec<Action> = path.iter().rev().map(|a| Action(a.0.map(|v| -v))).collect();
    let mut count = 0;
    for a in back.iter().chain(path.iter()) {
        let out = e.step(&mut st, a).unwrap();
        count += out.events.iter().filter(|ev| ev.tag == EventTag::ReachedDirection).count();
        if out.terminal.is_some() {
            break;
        }
    }
    assert!(e.geometry(&st).alignment < e.thresholds().align_deg.to_radians());
    assert_eq!(count, 0);
}

#[test]
fn misalignment_penalty_fires_on_onset() {
    let e = env();
    let mut s1 = ScriptedSolver::default();
    let mut st = e.reset(4, TaskId::Task2, TaskId::Task2, &mut [&mut s1]).unwrap();
    let mut a = Action([0.0; 7]);
    a.0[4] = 0.5;
    let mut violated_steps = 0;
    let mut fired = 0;
    for _ in 0..20 {
        let out = e.step(&mut st, &a).unwrap();
        if e.task_predicate(&st, TaskId::Task2) == TaskStatus::Violated {
            violated_steps += 1;
        }
        fired += out.events.iter().filter(|ev| ev.tag == EventTag::MisalignedDuringTask2).count();
        if out.terminal.is_some() {
            break;
        }
    }
    assert!(violated_steps > 1);
    assert_eq!(fired, 1);
}
