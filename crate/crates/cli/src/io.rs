//! File formats: the diagnostics CSV (RFC 4180 with a header row), field
//! snapshots in legacy-VTK text, and the JSON checkpoint used for restarts.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};

use interfem_core::diagnostics::DiagnosticsRecord;
use interfem_core::fem::P2Connectivity;
use interfem_core::fluid::FluidState;
use interfem_core::mesh::{FittedMesh, MeshMotionRecord};
use interfem_core::params::CheckedNetwork;
use interfem_core::transport::{SpeciesLayout, SpeciesState};

fn fmt(v: f64) -> String {
    // 15 significant digits.
    format!("{v:.14e}")
}

pub struct CsvWriter {
    out: BufWriter<File>,
}

impl CsvWriter {
    pub fn create(path: &Path, header: &[String]) -> Result<Self> {
        let file = File::create(path).with_context(|| format!("creating {}", path.display()))?;
        let mut out = BufWriter::new(file);
        writeln!(out, "{}", header.join(","))?;
        Ok(CsvWriter { out })
    }

    pub fn row(&mut self, step: u64, picard: usize, rec: &DiagnosticsRecord) -> Result<()> {
        let mut fields = vec![fmt(rec.t), step.to_string(), picard.to_string()];
        for (a, p) in rec.areas.iter().zip(&rec.perimeters) {
            fields.push(fmt(*a));
            fields.push(fmt(*p));
        }
        fields.extend(rec.ms.iter().map(|v| fmt(*v)));
        for v in [
            rec.e_tot,
            rec.max_u,
            rec.min_gamma,
            rec.x_c,
            rec.y_c,
            rec.v_c,
            rec.c_d,
            rec.gate_min,
            rec.gate_max,
            rec.marangoni_x,
        ] {
            fields.push(fmt(v));
        }
        fields.extend(rec.species_masses.iter().map(|v| fmt(*v)));
        writeln!(self.out, "{}", fields.join(","))?;
        Ok(())
    }

    pub fn flush(&mut self) -> Result<()> {
        self.out.flush()?;
        Ok(())
    }
}

/// Bulk snapshot: unstructured triangle grid with per-region species point
/// data (zero outside the species' regions), the velocity vector field, and
/// per-cell pressure and region id.
pub fn write_bulk_vtk(
    path: &Path,
    mesh: &FittedMesh,
    _p2: &P2Connectivity,
    fluid: &FluidState,
    network: &CheckedNetwork,
    layout: &SpeciesLayout,
    species: &SpeciesState,
) -> Result<()> {
    let file = File::create(path).with_context(|| format!("creating {}", path.display()))?;
    let mut w = BufWriter::new(file);
    let nv = mesh.vertices.len();
    let nt = mesh.triangles.len();
    writeln!(w, "# vtk DataFile Version 3.0")?;
    writeln!(w, "bulk fields")?;
    writeln!(w, "ASCII")?;
    writeln!(w, "DATASET UNSTRUCTURED_GRID")?;
    writeln!(w, "POINTS {nv} double")?;
    for v in &mesh.vertices {
        writeln!(w, "{} {} 0", fmt(v[0]), fmt(v[1]))?;
    }
    writeln!(w, "CELLS {nt} {}", 4 * nt)?;
    for t in &mesh.triangles {
        writeln!(w, "3 {} {} {}", t.v[0], t.v[1], t.v[2])?;
    }
    writeln!(w, "CELL_TYPES {nt}")?;
    for _ in 0..nt {
        writeln!(w, "5")?;
    }
    writeln!(w, "POINT_DATA {nv}")?;
    writeln!(w, "VECTORS velocity double")?;
    for v in 0..nv {
        writeln!(
            w,
            "{} {} 0",
            fmt(fluid.velocity[2 * v]),
            fmt(fluid.velocity[2 * v + 1])
        )?;
    }
    for (s, b) in network.bulk.iter().enumerate() {
        for (slot, &region) in b.regions.iter().enumerate() {
            writeln!(
                w,
                "SCALARS {}_{} double 1",
                b.name, mesh.region_names[region].replace(':', "_")
            )?;
            writeln!(w, "LOOKUP_TABLE default")?;
            for v in 0..nv {
                let val = layout
                    .bulk_dof(s, slot, v)
                    .map(|d| species.values[d])
                    .unwrap_or(0.0);
                writeln!(w, "{}", fmt(val))?;
            }
        }
    }
    writeln!(w, "CELL_DATA {nt}")?;
    writeln!(w, "SCALARS pressure double 1")?;
    writeln!(w, "LOOKUP_TABLE default")?;
    for (o, t) in mesh.triangles.iter().enumerate() {
        let p1 = (fluid.pressure[t.v[0]] + fluid.pressure[t.v[1]] + fluid.pressure[t.v[2]]) / 3.0;
        writeln!(w, "{}", fmt(p1 + fluid.pressure[nv + o]))?;
    }
    writeln!(w, "SCALARS region int 1")?;
    writeln!(w, "LOOKUP_TABLE default")?;
    for t in &mesh.triangles {
        writeln!(w, "{}", t.region)?;
    }
    w.flush()?;
    Ok(())
}

/// Interface snapshot: closed polylines with per-vertex surface species and
/// surface tension.
pub fn write_interface_vtk(
    path: &Path,
    mesh: &FittedMesh,
    network: &CheckedNetwork,
    layout: &SpeciesLayout,
    species: &SpeciesState,
    gammas: &[Vec<f64>],
) -> Result<()> {
    let file = File::create(path).with_context(|| format!("creating {}", path.display()))?;
    let mut w = BufWriter::new(file);
    let total: usize = mesh.interfaces.iter().map(|i| i.verts.len()).sum();
    writeln!(w, "# vtk DataFile Version 3.0")?;
    writeln!(w, "interface fields")?;
    writeln!(w, "ASCII")?;
    writeln!(w, "DATASET POLYDATA")?;
    writeln!(w, "POINTS {total} double")?;
    for f in 0..mesh.interfaces.len() {
        for p in mesh.interface_positions(f) {
            writeln!(w, "{} {} 0", fmt(p[0]), fmt(p[1]))?;
        }
    }
    let n_lines: usize = mesh.interfaces.iter().map(|i| i.verts.len()).sum();
    writeln!(w, "LINES {n_lines} {}", 3 * n_lines)?;
    let mut offset = 0usize;
    for iface in &mesh.interfaces {
        let n = iface.verts.len();
        for k in 0..n {
            writeln!(w, "2 {} {}", offset + k, offset + (k + 1) % n)?;
        }
        offset += n;
    }
    writeln!(w, "POINT_DATA {total}")?;
    for (s, sp) in network.surface.iter().enumerate() {
        writeln!(w, "SCALARS {} double 1", sp.name)?;
        writeln!(w, "LOOKUP_TABLE default")?;
        for (f, iface) in mesh.interfaces.iter().enumerate() {
            for k in 0..iface.verts.len() {
                if sp.interface == f {
                    writeln!(w, "{}", fmt(species.values[layout.surf_dof(s, k)]))?;
                } else {
                    writeln!(w, "0")?;
                }
            }
        }
    }
    writeln!(w, "SCALARS gamma double 1")?;
    writeln!(w, "LOOKUP_TABLE default")?;
    for g in gammas {
        for v in g {
            writeln!(w, "{}", fmt(*v))?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Full simulation state for restarts; floating-point values round-trip
/// exactly through the JSON encoding.
#[derive(Serialize, Deserialize)]
pub struct Checkpoint {
    pub scenario_name: String,
    pub time: f64,
    pub step_index: u64,
    pub mesh: FittedMesh,
    pub fluid: FluidState,
    pub species: SpeciesState,
    pub motion: MeshMotionRecord,
    /// Interface positions one step back (Picard warm-start state).
    #[serde(default)]
    pub prev_interface_positions: Option<Vec<Vec<[f64; 2]>>>,
}

impl Checkpoint {
    pub fn save(&self, path: &Path) -> Result<()> {
        let file = File::create(path).with_context(|| format!("creating {}", path.display()))?;
        serde_json::to_writer(BufWriter::new(file), self)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Checkpoint> {
        let file = File::open(path).with_context(|| format!("opening {}", path.display()))?;
        Ok(serde_json::from_reader(std::io::BufReader::new(file))?)
    }
}
