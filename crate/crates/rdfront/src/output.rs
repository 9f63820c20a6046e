//! Simulation outputs: the observables CSV and legacy ASCII VTK snapshots.
//!
//! Numbers are written with the shortest representation that parses back to
//! the same bits, so identical runs produce byte-identical files.

use crate::decomp::{OverlapDecomposition, Partition};
use crate::error::Result;
use crate::mesh::Mesh;
use std::io::Write;
use std::path::Path;

/// One row of `observables.csv`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ObservablesRow {
    pub time_h: f64,
    pub mass_lost_g: f64,
    pub hydrogen: f64,
    pub area_mm2: f64,
    pub solid_volume_mm3: f64,
}

pub const OBSERVABLES_HEADER: &str = "time_h,mass_lost_g,hydrogen,area_mm2,solid_volume_mm3";

impl ObservablesRow {
    pub fn to_csv_line(&self) -> String {
        format!(
            "{},{},{},{},{}",
            self.time_h, self.mass_lost_g, self.hydrogen, self.area_mm2, self.solid_volume_mm3
        )
    }
}

/// Append-oriented writer for `observables.csv`.
pub struct ObservablesWriter {
    file: std::io::BufWriter<std::fs::File>,
}

impl ObservablesWriter {
    pub fn create(path: impl AsRef<Path>) -> Result<ObservablesWriter> {
        let mut file = std::io::BufWriter::new(std::fs::File::create(path)?);
        writeln!(file, "{OBSERVABLES_HEADER}")?;
        Ok(ObservablesWriter { file })
    }

    pub fn append(&mut self, row: &ObservablesRow) -> Result<()> {
        writeln!(self.file, "{}", row.to_csv_line())?;
        Ok(())
    }

    pub fn flush(&mut self) -> Result<()> {
        self.file.flush()?;
        Ok(())
    }
}

/// Legacy ASCII VTK unstructured grid with point and cell scalar fields.
pub fn write_vtk(
    path: impl AsRef<Path>,
    mesh: &Mesh,
    point_scalars: &[(&str, &[f64])],
    cell_scalars: &[(&str, &[f64])],
) -> Result<()> {
    write_vtk_raw(path, mesh.nodes(), mesh.tets(), point_scalars, cell_scalars)
}

fn write_vtk_raw(
    path: impl AsRef<Path>,
    nodes: &[[f64; 3]],
    tets: &[[usize; 4]],
    point_scalars: &[(&str, &[f64])],
    cell_scalars: &[(&str, &[f64])],
) -> Result<()> {
    let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(w, "# vtk DataFile Version 3.0")?;
    writeln!(w, "rdfront snapshot")?;
    writeln!(w, "ASCII")?;
    writeln!(w, "DATASET UNSTRUCTURED_GRID")?;
    writeln!(w, "POINTS {} double", nodes.len())?;
    for p in nodes {
        writeln!(w, "{} {} {}", p[0], p[1], p[2])?;
    }
    writeln!(w, "CELLS {} {}", tets.len(), tets.len() * 5)?;
    for t in tets {
        writeln!(w, "4 {} {} {} {}", t[0], t[1], t[2], t[3])?;
    }
    writeln!(w, "CELL_TYPES {}", tets.len())?;
    for _ in 0..tets.len() {
        writeln!(w, "10")?;
    }
    if !point_scalars.is_empty() {
        writeln!(w, "POINT_DATA {}", nodes.len())?;
        for (name, data) in point_scalars {
            assert_eq!(data.len(), nodes.len());
            writeln!(w, "SCALARS {name} double 1")?;
            writeln!(w, "LOOKUP_TABLE default")?;
            for v in *data {
                writeln!(w, "{v}")?;
            }
        }
    }
    if !cell_scalars.is_empty() {
        writeln!(w, "CELL_DATA {}", tets.len())?;
        for (name, data) in cell_scalars {
            assert_eq!(data.len(), tets.len());
            writeln!(w, "SCALARS {name} double 1")?;
            writeln!(w, "LOOKUP_TABLE default")?;
            for v in *data {
                writeln!(w, "{v}")?;
            }
        }
    }
    Ok(())
}

/// Whole-mesh view of a partition, one cell scalar with the part id.
pub fn export_partition_vtk(
    mesh: &Mesh,
    partition: &Partition,
    path: impl AsRef<Path>,
) -> Result<()> {
    let parts: Vec<f64> = partition.part_of_element().iter().map(|&p| p as f64).collect();
    write_vtk(path, mesh, &[], &[("subdomain", &parts)])
}

/// One file per subdomain showing its overlap mesh; `ghost` marks overlap
/// elements contributed by neighbors.
pub fn export_subdomains_vtk(
    mesh: &Mesh,
    dec: &OverlapDecomposition,
    dir: impl AsRef<Path>,
) -> Result<()> {
    std::fs::create_dir_all(&dir)?;
    for (i, sub) in dec.subdomains().iter().enumerate() {
        // Build the local submesh with compact node numbering.
        let nodes: Vec<[f64; 3]> = sub.local_nodes.iter().map(|&g| mesh.nodes()[g]).collect();
        let tets: Vec<[usize; 4]> = sub
            .local_elements
            .iter()
            .map(|&e| {
                mesh.tets()[e].map(|g| sub.local_index_of(g).expect("node of local element"))
            })
            .collect();
        let ghost: Vec<f64> = (0..sub.local_elements.len())
            .map(|k| if sub.is_ghost_element(k) { 1.0 } else { 0.0 })
            .collect();
        let path = dir.as_ref().join(format!("subdomain_{i:03}.vtk"));
        write_vtk_raw(path, &nodes, &tets, &[], &[("ghost", &ghost)])?;
    }
    Ok(())
}
