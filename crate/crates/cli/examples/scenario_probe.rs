//! Short-run probe for any preset: timing and basic diagnostics.

use interfem_cli::presets;
use interfem_cli::runner::Simulation;
use std::time::Instant;

fn main() {
    faer::set_global_parallelism(faer::Par::Seq);
    let args: Vec<String> = std::env::args().collect();
    let name = args.get(1).map(String::as_str).unwrap_or("shear");
    let t_end: f64 = args.get(2).map(|s| s.parse().unwrap()).unwrap_or(0.2);
    let kr: f64 = args.get(3).map(|s| s.parse().unwrap()).unwrap_or(1.0);
    let mut sc = match name {
        "shear" => presets::shear(kr),
        "rising-bubble" => presets::rising_bubble(kr),
        other => presets::by_name(other).unwrap(),
    };
    sc.t_end = t_end;
    let mut sim = Simulation::new(sc).unwrap();
    sim.check_invariants = true;
    let n = sim.n_steps();
    let t0 = Instant::now();
    for k in 0..n {
        let info = sim.step().unwrap();
        if k % (n / 5).max(1) == 0 {
            let rec = sim.diagnostics();
            eprintln!(
                "t={:.3} max_u={:.3e} c_d={:.4} y_c={:+.4} v_c={:+.4e} minG={:.3} picard={} regen={}",
                sim.time, rec.max_u, rec.c_d, rec.y_c, rec.v_c, rec.min_gamma,
                info.picard_iterations, sim.regen_events
            );
        }
    }
    let rec = sim.diagnostics();
    println!(
        "{name} kr={kr}: t={:.3} c_d={:.5} y_c={:+.5} v_c={:+.5e} wall={:?} ({:?}/step)",
        sim.time,
        rec.c_d,
        rec.y_c,
        rec.v_c,
        t0.elapsed(),
        t0.elapsed() / n as u32
    );
}
