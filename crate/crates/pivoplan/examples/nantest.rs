use pivoplan::experiments::{execute_shelf_case, ExperimentSpec};
use pivoplan::load_scene;
use pivoplan::scene_file::set_shelf_layers;

fn main() {
    env_logger::init();
    let name = std::env::args().nth(1).unwrap_or("B".into());
    let h: f64 = std::env::args()
        .nth(2)
        .map(|s| s.parse().unwrap())
        .unwrap_or(0.6);
    let mut scene = load_scene("scenes/shelf.toml").unwrap();
    set_shelf_layers(&mut scene, &[0.2, 0.6, 0.93, 1.31]);
    let spec = ExperimentSpec::default();
    match execute_shelf_case(&scene, &name, h, &spec) {
        Ok(Some(case)) => println!(
            "executed {}: dev {:.3}, {} GP intervals, slipped {}",
            case.name,
            case.result.summary.final_deviation,
            case.result.summary.gp_intervals.len(),
            case.result.summary.slipped_out
        ),
        Ok(None) => println!("case did not plan"),
        Err(e) => println!("ERROR {e}"),
    }
}
