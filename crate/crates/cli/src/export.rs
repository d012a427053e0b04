//! Artifact writers: convergence log, VTK fields, PGM snapshots, stage table.

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::Path;

use spacetime_topopt::fields::RHO_MIN;
use spacetime_topopt::material::material_orientation;
use spacetime_topopt::optimizer::IterationRecord;
use spacetime_topopt::problems::StageRow;
use spacetime_topopt::{Domain, Evaluation, FieldState};

/// Per-cell fields of one design, every array `nx * ny` long.
#[derive(Debug, Clone, PartialEq)]
pub struct CellFields {
    pub nx: usize,
    pub ny: usize,
    pub spacing: f64,
    pub density: Vec<f64>,
    /// Filtered time; -1 off the design domain.
    pub time: Vec<f64>,
    /// Stage that deposits the cell (first `j` with truncated time >= 0.5);
    /// 0 off the design domain.
    pub stage: Vec<f64>,
    /// Material orientation, degrees; 0 off the design domain.
    pub orientation: Vec<f64>,
    /// Overhang contribution `P_e^j`, one array per stage.
    pub overhang: Vec<Vec<f64>>,
}

impl CellFields {
    pub fn new(domain: &Domain, eval: &Evaluation, theta: &[f64]) -> Self {
        let f = &eval.fields;
        let n_stages = f.t_bar.len() - 1;
        let stage: Vec<f64> = (0..domain.n_design())
            .map(|e| {
                (1..=n_stages)
                    .find(|&j| f.t_bar[j][e] >= 0.5)
                    .unwrap_or(n_stages) as f64
            })
            .collect();
        let phi = eval
            .phi
            .clone()
            .unwrap_or_else(|| material_orientation(&f.t_bar, theta));
        let phi_deg: Vec<f64> = phi.iter().map(|p| p.to_degrees()).collect();
        Self {
            nx: domain.grid.nx,
            ny: domain.grid.ny,
            spacing: domain.grid.element_size,
            density: domain.to_cells(&f.rho, RHO_MIN, 1.0),
            time: domain.to_cells(&f.t_filtered, -1.0, -1.0),
            stage: domain.to_cells(&stage, 0.0, 0.0),
            orientation: domain.to_cells(&phi_deg, 0.0, 0.0),
            overhang: eval
                .overhang
                .per_element
                .iter()
                .map(|p| domain.to_cells(p, 0.0, 0.0))
                .collect(),
        }
    }

    fn arrays(&self) -> Vec<(String, &[f64])> {
        let mut out: Vec<(String, &[f64])> = vec![
            ("density".into(), &self.density),
            ("time".into(), &self.time),
            ("stage_index".into(), &self.stage),
            ("orientation".into(), &self.orientation),
        ];
        for (j, p) in self.overhang.iter().enumerate() {
            out.push((format!("overhang_stage_{}", j + 1), p));
        }
        out
    }
}

/// Legacy ASCII VTK structured points with one CELL_DATA scalar per field.
pub fn write_vtk(path: &Path, fields: &CellFields) -> io::Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    let (nx, ny) = (fields.nx, fields.ny);
    writeln!(w, "# vtk DataFile Version 3.0")?;
    writeln!(w, "space-time design fields")?;
    writeln!(w, "ASCII")?;
    writeln!(w, "DATASET STRUCTURED_POINTS")?;
    writeln!(w, "DIMENSIONS {} {} 1", nx + 1, ny + 1)?;
    writeln!(w, "ORIGIN 0 0 0")?;
    writeln!(w, "SPACING {} {} 1", fields.spacing, fields.spacing)?;
    writeln!(w, "CELL_DATA {}", nx * ny)?;
    for (name, values) in fields.arrays() {
        writeln!(w, "SCALARS {name} double 1")?;
        writeln!(w, "LOOKUP_TABLE default")?;
        for row in values.chunks(nx) {
            let line: Vec<String> = row.iter().map(|v| v.to_string()).collect();
            writeln!(w, "{}", line.join(" "))?;
        }
    }
    w.flush()
}

/// Plain (ASCII) PGM, top row first. `value` maps a cell to `[0, 1]`, where
/// 1 is drawn black; `None` cells are drawn white.
pub fn write_pgm(
    path: &Path,
    nx: usize,
    ny: usize,
    value: impl Fn(usize) -> Option<f64>,
) -> io::Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "P2\n{nx} {ny}\n255")?;
    for iy in (0..ny).rev() {
        let row: Vec<String> = (0..nx)
            .map(|ix| {
                let level = match value(ix + iy * nx) {
                    Some(v) => (255.0 * (1.0 - v.clamp(0.0, 1.0))).round() as u8,
                    None => 255,
                };
                level.to_string()
            })
            .collect();
        writeln!(w, "{}", row.join(" "))?;
    }
    w.flush()
}

pub fn write_density_pgm(path: &Path, fields: &CellFields) -> io::Result<()> {
    write_pgm(path, fields.nx, fields.ny, |c| Some(fields.density[c]))
}

/// Time drawn dark (early) to light (late); cells off the design domain
/// and cells without material are white.
pub fn write_time_pgm(path: &Path, fields: &CellFields) -> io::Result<()> {
    write_pgm(path, fields.nx, fields.ny, |c| {
        let t = fields.time[c];
        (t >= 0.0 && fields.density[c] >= 0.5).then(|| 1.0 - 0.8 * t)
    })
}

/// Density and time PGMs of an intermediate iterate, named by iteration.
pub fn write_snapshot(dir: &Path, iteration: usize, domain: &Domain, fs: &FieldState) -> io::Result<()> {
    let (nx, ny) = (domain.grid.nx, domain.grid.ny);
    let density = domain.to_cells(&fs.rho, RHO_MIN, 1.0);
    let time = domain.to_cells(&fs.t_filtered, -1.0, -1.0);
    write_pgm(&dir.join(format!("density_{iteration:04}.pgm")), nx, ny, |c| Some(density[c]))?;
    write_pgm(&dir.join(format!("time_{iteration:04}.pgm")), nx, ny, |c| {
        (time[c] >= 0.0 && density[c] >= 0.5).then(|| 1.0 - 0.8 * time[c])
    })
}

pub fn convergence_header(n_stages: usize) -> Vec<String> {
    let mut h: Vec<String> = [
        "iteration",
        "compliance",
        "volume",
        "continuity",
        "overhang",
        "beta_d",
        "beta_t",
        "max_change",
        "max_violation",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();
    h.extend((1..=n_stages).map(|j| format!("stage_volume_{j}")));
    h
}

pub fn write_convergence_csv(
    path: &Path,
    records: &[IterationRecord],
    n_stages: usize,
) -> csv::Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(convergence_header(n_stages))?;
    for r in records {
        let m = &r.metrics;
        let mut row = vec![
            r.iteration.to_string(),
            m.compliance.to_string(),
            m.volume.to_string(),
            m.continuity.to_string(),
            m.overhang.to_string(),
            r.beta_d.to_string(),
            r.beta_t.to_string(),
            r.max_change.to_string(),
            r.max_violation.to_string(),
        ];
        row.extend(m.stage_volumes.iter().map(|v| v.to_string()));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_stage_report(path: &Path, rows: &[StageRow]) -> csv::Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> io::Result<()> {
    let w = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(w, value).map_err(io::Error::other)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> CellFields {
        CellFields {
            nx: 3,
            ny: 2,
            spacing: 0.5,
            density: vec![1.0, 0.0, 0.5, 1.0, 1.0, 0.001],
            time: vec![0.0, -1.0, 0.2, 0.4, 0.6, 1.0],
            stage: vec![1.0, 0.0, 1.0, 2.0, 2.0, 3.0],
            orientation: vec![0.0; 6],
            overhang: vec![vec![0.0; 6], vec![0.1; 6]],
        }
    }

    #[test]
    fn vtk_arrays_cover_every_cell() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("f.vtk");
        write_vtk(&p, &small()).unwrap();
        let text = std::fs::read_to_string(&p).unwrap();
        assert!(text.contains("DIMENSIONS 4 3 1"));
        assert!(text.contains("CELL_DATA 6"));
        let mut lines = text.lines();
        let mut arrays = 0;
        while let Some(l) = lines.next() {
            if l.starts_with("SCALARS") {
                arrays += 1;
                lines.next();
                let n: usize = (0..2)
                    .map(|_| lines.next().unwrap().split_whitespace().count())
                    .sum();
                assert_eq!(n, 6, "{l}");
            }
        }
        assert_eq!(arrays, 6);
    }

    #[test]
    fn pgm_is_top_row_first() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("d.pgm");
        write_density_pgm(&p, &small()).unwrap();
        let text = std::fs::read_to_string(&p).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[..3], ["P2", "3 2", "255"]);
        // top row is iy = 1: densities 1, 1, 0.001
        assert_eq!(lines[3], "0 0 255");
        assert_eq!(lines[4], "0 255 128");
    }

    #[test]
    fn convergence_columns_are_stable() {
        let h = convergence_header(2);
        assert_eq!(h[0], "iteration");
        assert_eq!(h[7], "max_change");
        assert_eq!(h[9..], ["stage_volume_1", "stage_volume_2"]);
    }
}
