//! Development probe: run single planning cells with verbose diagnostics.

use std::time::Instant;

use pivoplan::load_scene;
use pivoplan::scene_file::{place_pose, set_desk_height};
use pivoplan_core::planner::{plan, AngleSpec, PlanRequest, PlannerConfig};

fn main() {
    env_logger::init();
    let args: Vec<String> = std::env::args().collect();
    let height: f64 = args.get(1).map(|s| s.parse().unwrap()).unwrap_or(0.2);
    let alpha_s: Option<f64> = args.get(2).and_then(|s| s.parse().ok());
    let alpha_g: Option<f64> = args.get(3).and_then(|s| s.parse().ok());
    let pivot = args.get(4).map(|s| s != "nopivot").unwrap_or(true);

    let mut scene = load_scene("scenes/desk.toml").expect("scene loads");
    set_desk_height(&mut scene, height);
    let object = scene.object("E").unwrap().clone();
    let desk = scene.obstacle("desk").unwrap();
    let front = desk.pose.translation.x - desk.half_extents.x;
    let goal = place_pose(&object, front + 0.02, 0.0, height, 0.02);
    println!(
        "desk h={height} goal grasp at ({:.3}, {:.3}, {:.3})",
        goal.translation.x, goal.translation.y, goal.translation.z
    );

    let mut req = PlanRequest::new("E", goal);
    req.start_grasp_angle = alpha_s.map(AngleSpec::Fixed).unwrap_or(AngleSpec::Free);
    req.goal_angle = alpha_g.map(AngleSpec::Fixed).unwrap_or(AngleSpec::Free);
    req.pivoting_enabled = pivot;

    let t0 = Instant::now();
    let result = plan(&scene, &req, &PlannerConfig::default()).expect("no solver error");
    let dt = t0.elapsed().as_secs_f64();
    println!(
        "outcome {:?} in {:.2}s wall; chosen start {:?} goal {:?}",
        result.outcome, dt, result.chosen_start_angle, result.chosen_goal_angle
    );
    if let Some(traj) = &result.trajectory {
        println!(
            "trajectory: {:.2}s sim, {} samples, final pivot {:.3}",
            traj.duration(),
            traj.samples.len(),
            traj.samples.last().unwrap().values[traj.pivot_index.unwrap()]
        );
    }
}
