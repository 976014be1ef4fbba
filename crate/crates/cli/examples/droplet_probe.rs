//! Droplet-migration probe: stability and x_c trend at a coarser time step.

use interfem_cli::presets;
use interfem_cli::runner::Simulation;
use std::time::Instant;

fn main() {
    faer::set_global_parallelism(faer::Par::Seq);
    let args: Vec<String> = std::env::args().collect();
    let dt: f64 = args.get(1).map(|s| s.parse().unwrap()).unwrap_or(5e-3);
    let t_end: f64 = args.get(2).map(|s| s.parse().unwrap()).unwrap_or(10.0);
    let bi: f64 = args.get(3).map(|s| s.parse().unwrap()).unwrap_or(0.8);
    let mut sc = presets::droplet_marangoni();
    sc.dt = dt;
    sc.t_end = t_end;
    sc.physics.bi = Some(bi);
    let mut sim = Simulation::new(sc).unwrap();
    let n = sim.n_steps();
    let t0 = Instant::now();
    let mut x_prev = f64::MIN;
    let mut monotone = true;
    for k in 0..n {
        sim.step().unwrap();
        let rec = sim.diagnostics();
        if rec.x_c < x_prev - 1e-12 {
            monotone = false;
        }
        x_prev = rec.x_c;
        if k % (n / 10).max(1) == 0 {
            eprintln!(
                "t={:.2} x_c={:+.5e} max_u={:.3e} minG={:.4} A_max={:.4}",
                sim.time,
                rec.x_c,
                rec.max_u,
                rec.min_gamma,
                sim
                    .mesh
                    .interfaces[0]
                    .verts
                    .iter()
                    .enumerate()
                    .map(|(i, _)| sim.species.values[sim.layout.surf_dof(0, i)])
                    .fold(f64::MIN, f64::max)
            );
        }
    }
    let rec = sim.diagnostics();
    println!(
        "dt={dt} bi={bi}: x_c({t_end}) = {:+.6e}, monotone={monotone}, wall={:?}, regen={}",
        rec.x_c,
        t0.elapsed(),
        sim.regen_events
    );
}
