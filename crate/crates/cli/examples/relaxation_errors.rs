//! Full relaxation run at a given resolution: reports conservation drift,
//! energy monotonicity, Table-1 errors, and wall time.

use interfem_cli::presets;
use interfem_cli::runner::Simulation;
use interfem_core::diagnostics::equilibrium_oracle;
use std::time::Instant;

fn main() {
    faer::set_global_parallelism(faer::Par::Seq);
    let args: Vec<String> = std::env::args().collect();
    let j: usize = args.get(1).map(|s| s.parse().unwrap()).unwrap_or(16);
    let tol: f64 = args.get(2).map(|s| s.parse().unwrap()).unwrap_or(1e-12);
    let mut sc = presets::relaxation(j);
    sc.picard_tol = tol;
    let dt = sc.dt;
    let mut sim = Simulation::new(sc).unwrap();

    let area0 = sim.diagnostics().areas[0];
    let ms0 = sim.ms_values();
    let mut e_prev = sim.diagnostics().e_tot;
    let mut max_area_drift = 0.0f64;
    let mut max_ms_drift = 0.0f64;
    let mut energy_violation = 0.0f64;
    let t_end: f64 = args.get(3).map(|s| s.parse().unwrap()).unwrap_or(10.0);
    let n = (t_end / dt).round() as usize;
    let t0 = Instant::now();
    let mut picard_total = 0;
    for k in 0..n {
        let info = sim.step().unwrap();
        picard_total += info.picard_iterations;
        let rec = sim.diagnostics();
        max_area_drift = max_area_drift.max(((rec.areas[0] - area0) / area0).abs());
        for (m, m0) in rec.ms.iter().zip(&ms0) {
            max_ms_drift = max_ms_drift.max(((m - m0) / m0).abs());
        }
        energy_violation = energy_violation.max(rec.e_tot - e_prev);
        e_prev = rec.e_tot;
        if k % (n / 10).max(1) == 0 {
            eprintln!(
                "t={:.2} area_drift={max_area_drift:.2e} ms_drift={max_ms_drift:.2e}",
                sim.time
            );
        }
    }
    let elapsed = t0.elapsed();
    let rec = sim.diagnostics();

    // Table-1 style errors vs the continuum equilibrium oracle.
    let l0 = 1.629_520_867_107_118_4;
    let eq = equilibrium_oracle(
        std::f64::consts::PI * 0.0625,
        1.0,
        1.6 * l0,
        1.6 * l0 + 0.8,
        &sim.params,
    )
    .unwrap();
    let l_err = (rec.perimeters[0] - eq.l_e).abs();
    // Max dof errors per species.
    let surf_err = |s: usize, target: f64| -> f64 {
        let n = sim.mesh.interfaces[0].verts.len();
        (0..n)
            .map(|k| (sim.species.values[sim.layout.surf_dof(s, k)] - target).abs())
            .fold(0.0f64, f64::max)
    };
    let mut c_err = 0.0f64;
    for slot in 0..2 {
        for &v in sim.layout.bulk_vertices(0, slot) {
            let val = sim.species.values[sim.layout.bulk_dof(0, slot, v).unwrap()];
            c_err = c_err.max((val - eq.c_bulk).abs());
        }
    }
    println!("J={j} tol={tol:.1e} wall={elapsed:?} picard_avg={:.2}", picard_total as f64 / n as f64);
    println!("area_drift={max_area_drift:.3e} ms_drift={max_ms_drift:.3e} energy_violation={energy_violation:.3e}");
    println!(
        "L_err={l_err:.3e} A_err={:.3e} B_err={:.3e} CG_err={:.3e} C_err={c_err:.3e}",
        surf_err(0, eq.a_gamma),
        surf_err(1, eq.b_gamma),
        surf_err(2, eq.c_gamma),
    );
    let (solves, refines, refactors) = sim.fluid_solver_stats();
    println!("solves={solves} refinements={refines} refactorizations={refactors}");
    println!("final max_u = {:.3e}", sim.fluid.max_velocity);
    {
        let mut cmin = f64::MAX;
        let mut cmax = f64::MIN;
        for slot in 0..2 {
            for &v in sim.layout.bulk_vertices(0, slot) {
                let val = sim.species.values[sim.layout.bulk_dof(0, slot, v).unwrap()];
                cmin = cmin.min(val);
                cmax = cmax.max(val);
            }
        }
        println!("C: min={cmin:.10} max={cmax:.10} spread={:.3e}", cmax - cmin);
    }
    for (s, name) in [(0usize, "A"), (1, "B"), (2, "CG")] {
        let n = sim.mesh.interfaces[0].verts.len();
        let vals: Vec<f64> = (0..n).map(|k| sim.species.values[sim.layout.surf_dof(s, k)]).collect();
        let min = vals.iter().cloned().fold(f64::MAX, f64::min);
        let max = vals.iter().cloned().fold(f64::MIN, f64::max);
        println!("{name}: min={min:.10} max={max:.10} spread={:.3e}", max - min);
    }
}
