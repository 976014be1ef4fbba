use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use clap::{Parser, Subcommand};

use interfem_cli::config::{self, Scenario};
use interfem_cli::io::{self, Checkpoint, CsvWriter};
use interfem_cli::presets;
use interfem_cli::runner::Simulation;

#[derive(Parser)]
#[command(
    name = "interfem",
    about = "Moving-mesh finite elements for two-phase flow with reactive, semi-permeable interfaces"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario from a preset name or a config file.
    Run {
        /// Path to a scenario config file.
        #[arg(long, conflicts_with = "scenario")]
        config: Option<PathBuf>,
        /// Name of a shipped preset (see `list-scenarios`).
        #[arg(long)]
        scenario: Option<String>,
        /// Output directory (created if missing).
        #[arg(long, default_value = "out")]
        out: PathBuf,
        /// Override the end time.
        #[arg(long)]
        until: Option<f64>,
        /// Override the time step.
        #[arg(long)]
        dt: Option<f64>,
        /// Write field snapshots every N steps (0 = never).
        #[arg(long)]
        snapshot_every: Option<usize>,
        /// Write restart checkpoints every N steps (0 = never).
        #[arg(long)]
        checkpoint_every: Option<usize>,
        /// Worker threads for the factorization (1 = deterministic).
        #[arg(long, default_value_t = 1)]
        threads: usize,
        /// Run the invariant suite after every step (slower).
        #[arg(long)]
        check: bool,
        /// Restart from a checkpoint file written by a previous run.
        #[arg(long)]
        restart: Option<PathBuf>,
        /// Override [physics] keys, e.g. `--set bi=0.4` (repeatable).
        #[arg(long = "set", value_name = "KEY=VALUE")]
        sets: Vec<String>,
    },
    /// List the shipped scenario presets.
    ListScenarios,
    /// Print a scenario as a config file.
    Describe {
        #[arg(long, conflicts_with = "scenario")]
        config: Option<PathBuf>,
        #[arg(long)]
        scenario: Option<String>,
    },
}

fn load_scenario(config: &Option<PathBuf>, scenario: &Option<String>) -> Result<Scenario> {
    match (config, scenario) {
        (Some(path), None) => {
            let text = std::fs::read_to_string(path)
                .with_context(|| format!("reading {}", path.display()))?;
            let name = path
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| "config".into());
            Ok(config::parse(&text, &name)?)
        }
        (None, Some(name)) => {
            presets::by_name(name).ok_or_else(|| anyhow!("unknown scenario `{name}`"))
        }
        _ => bail!("exactly one of --config or --scenario is required"),
    }
}

#[allow(clippy::too_many_arguments)]
fn run(
    mut sc: Scenario,
    out_dir: &Path,
    until: Option<f64>,
    dt: Option<f64>,
    snapshot_every: Option<usize>,
    checkpoint_every: Option<usize>,
    threads: usize,
    check: bool,
    restart: Option<PathBuf>,
    sets: Vec<String>,
) -> Result<()> {
    for s in &sets {
        let (k, v) = s
            .split_once('=')
            .ok_or_else(|| anyhow!("--set wants KEY=VALUE, got `{s}`"))?;
        config::apply_physics_override(&mut sc, k, v)?;
    }
    if let Some(t) = until {
        sc.t_end = t;
    }
    if let Some(x) = dt {
        sc.dt = x;
    }
    if let Some(n) = snapshot_every {
        sc.snapshot_every = n;
    }
    if let Some(n) = checkpoint_every {
        sc.checkpoint_every = n;
    }
    if threads > 1 {
        faer::set_global_parallelism(faer::Par::rayon(threads));
    } else {
        faer::set_global_parallelism(faer::Par::Seq);
    }

    std::fs::create_dir_all(out_dir)
        .with_context(|| format!("creating {}", out_dir.display()))?;

    let mut sim = match restart {
        Some(path) => {
            let ck = Checkpoint::load(&path)?;
            Simulation::from_checkpoint(sc, ck)?
        }
        None => Simulation::new(sc)?,
    };
    sim.check_invariants = check;

    let mut csv = CsvWriter::create(&out_dir.join("diagnostics.csv"), &sim.csv_header())?;
    let rec = sim.diagnostics();
    csv.row(sim.step_index, 0, &rec)?;

    let write_snapshot = |sim: &Simulation, out_dir: &Path| -> Result<()> {
        let tag = format!("{:08}", sim.step_index);
        io::write_bulk_vtk(
            &out_dir.join(format!("bulk_{tag}.vtk")),
            &sim.mesh,
            &sim.p2,
            &sim.fluid,
            &sim.network,
            &sim.layout,
            &sim.species,
        )?;
        io::write_interface_vtk(
            &out_dir.join(format!("interface_{tag}.vtk")),
            &sim.mesh,
            &sim.network,
            &sim.layout,
            &sim.species,
            &sim.surface_tensions(),
        )?;
        Ok(())
    };
    if sim.scenario.snapshot_every > 0 {
        write_snapshot(&sim, out_dir)?;
    }

    let total = sim.n_steps();
    while sim.time < sim.scenario.t_end - 0.5 * sim.scenario.dt {
        let info = match sim.step() {
            Ok(info) => info,
            Err(e) => {
                // Abort with a machine-readable error and the last valid step.
                csv.flush()?;
                eprintln!("error code=step-failed step={} detail={e:#}", sim.step_index);
                std::process::exit(2);
            }
        };
        let rec = sim.diagnostics();
        csv.row(sim.step_index, info.picard_iterations, &rec)?;
        if let Some(jumps) = &info.regenerated {
            eprintln!(
                "step {}: mesh regenerated (bulk mass jumps {:?})",
                sim.step_index, jumps
            );
        }
        if sim.scenario.snapshot_every > 0
            && sim.step_index % sim.scenario.snapshot_every as u64 == 0
        {
            write_snapshot(&sim, out_dir)?;
        }
        if sim.scenario.checkpoint_every > 0
            && sim.step_index % sim.scenario.checkpoint_every as u64 == 0
        {
            sim.checkpoint()
                .save(&out_dir.join(format!("checkpoint_{:08}.json", sim.step_index)))?;
        }
        if sim.step_index % (total / 20).max(1) == 0 {
            eprintln!(
                "t = {:.4} ({}/{} steps), max|u| = {:.3e}, picard = {}",
                sim.time, sim.step_index, total, sim.fluid.max_velocity, info.picard_iterations
            );
        }
    }
    sim.checkpoint().save(&out_dir.join("checkpoint_final.json"))?;
    csv.flush()?;
    eprintln!(
        "done: t = {:.4}, {} steps, {} regenerations, {} clipped tilde values",
        sim.time, sim.step_index, sim.regen_events, sim.clipped_tilde
    );
    Ok(())
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    match cli.command {
        Command::Run {
            config,
            scenario,
            out,
            until,
            dt,
            snapshot_every,
            checkpoint_every,
            threads,
            check,
            restart,
            sets,
        } => {
            let sc = load_scenario(&config, &scenario)?;
            run(
                sc,
                &out,
                until,
                dt,
                snapshot_every,
                checkpoint_every,
                threads,
                check,
                restart,
                sets,
            )
        }
        Command::ListScenarios => {
            for name in presets::NAMES {
                println!("{name:<20} {}", presets::summary(name));
            }
            Ok(())
        }
        Command::Describe { config, scenario } => {
            let sc = load_scenario(&config, &scenario)?;
            print!("{}", config::describe(&sc));
            Ok(())
        }
    }
}
