//! CSV schemas: trajectories `beam,x,t,v1..v6,z1..z6`, time series `t,c1..cN`,
//! centerlines `beam,x,t,p1,p2,p3`. Numbers use a fixed significant-digit format.

use std::path::Path;

use beamnet::kinematics::*;
use beamnet::solver::{BeamField, TimeGrid, Trajectory};
use beamnet::geb::BeamGeometry;
use nalgebra::SVector;

use crate::error::{CliError, CliResult};

/// Scientific notation with `digits` significant digits.
pub fn number(x: f64, digits: usize) -> String {
    format!("{:.*e}", digits.saturating_sub(1), x)
}

fn writer(path: &Path) -> CliResult<csv::Writer<std::fs::File>> {
    csv::Writer::from_path(path).map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))
}

fn finish(mut w: csv::Writer<std::fs::File>, path: &Path) -> CliResult<()> {
    w.flush().map_err(|e| CliError::io(path, e))
}

fn write_row(w: &mut csv::Writer<std::fs::File>, path: &Path, row: Vec<String>) -> CliResult<()> {
    w.write_record(&row).map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))
}

fn trajectory_header() -> Vec<String> {
    let mut h = vec!["beam".to_string(), "x".into(), "t".into()];
    h.extend((1..=6).map(|k| format!("v{k}")));
    h.extend((1..=6).map(|k| format!("z{k}")));
    h
}

pub fn write_trajectory(path: &Path, traj: &Trajectory, digits: usize) -> CliResult<()> {
    let mut w = writer(path)?;
    write_row(&mut w, path, trajectory_header())?;
    for (b, f) in traj.beams.iter().enumerate() {
        for l in 0..f.n_levels() {
            let t = f.level_time(l);
            for j in 0..=f.n_cells {
                let mut row = vec![(b + 1).to_string(), number(f.x(j), digits), number(t, digits)];
                row.extend(f.y(l, j).iter().map(|v| number(*v, digits)));
                write_row(&mut w, path, row)?;
            }
        }
    }
    finish(w, path)
}

pub fn write_series<const N: usize>(path: &Path, times: &[f64], values: &[SVector<f64, N>], digits: usize) -> CliResult<()> {
    let mut w = writer(path)?;
    let mut header = vec!["t".to_string()];
    header.extend((1..=N).map(|k| format!("c{k}")));
    write_row(&mut w, path, header)?;
    for (t, v) in times.iter().zip(values) {
        let mut row = vec![number(*t, digits)];
        row.extend(v.iter().map(|c| number(*c, digits)));
        write_row(&mut w, path, row)?;
    }
    finish(w, path)
}

pub fn write_centerlines(path: &Path, geoms: &[BeamGeometry], digits: usize) -> CliResult<()> {
    let mut w = writer(path)?;
    write_row(&mut w, path, ["beam", "x", "t", "p1", "p2", "p3"].map(String::from).to_vec())?;
    for (b, g) in geoms.iter().enumerate() {
        for l in 0..g.n_levels() {
            for j in 0..=g.n_cells {
                let p = g.positions[l][j];
                let mut row = vec![(b + 1).to_string(), number(g.x(j), digits), number(g.dt * l as f64, digits)];
                row.extend(p.iter().map(|c| number(*c, digits)));
                write_row(&mut w, path, row)?;
            }
        }
    }
    finish(w, path)
}

fn read_rows(path: &Path, expected: &[String]) -> CliResult<Vec<Vec<f64>>> {
    let parse = |msg: String| CliError::Parse(format!("{}: {msg}", path.display()));
    if !path.exists() {
        return Err(parse("file not found".into()));
    }
    let mut r = csv::Reader::from_path(path).map_err(|e| parse(e.to_string()))?;
    let header: Vec<String> = r.headers().map_err(|e| parse(e.to_string()))?.iter().map(|s| s.trim().to_string()).collect();
    if header != expected {
        return Err(parse(format!("header {:?}, expected {:?}", header.join(","), expected.join(","))));
    }
    let mut rows = Vec::new();
    for (k, rec) in r.records().enumerate() {
        let rec = rec.map_err(|e| parse(e.to_string()))?;
        let line = k + 2;
        let row = rec
            .iter()
            .map(|s| s.trim().parse::<f64>().map_err(|_| parse(format!("line {line}: '{s}' is not a number"))))
            .collect::<CliResult<Vec<f64>>>()?;
        rows.push(row);
    }
    Ok(rows)
}

/// Time series with `N` components; times must increase.
pub fn read_series<const N: usize>(path: &Path) -> CliResult<(Vec<f64>, Vec<SVector<f64, N>>)> {
    let mut header = vec!["t".to_string()];
    header.extend((1..=N).map(|k| format!("c{k}")));
    let rows = read_rows(path, &header)?;
    if rows.len() < 2 {
        return Err(CliError::Parse(format!("{}: a time series needs at least two rows", path.display())));
    }
    if rows.windows(2).any(|w| !(w[1][0] > w[0][0])) {
        return Err(CliError::Parse(format!("{}: times must increase", path.display())));
    }
    Ok((rows.iter().map(|r| r[0]).collect(), rows.iter().map(|r| SVector::from_column_slice(&r[1..])).collect()))
}

/// Per-beam samples `[level][j]` with their times, keyed by 1-based beam index.
pub struct TrajectoryTable {
    pub beams: Vec<(Vec<f64>, Vec<Vec<Vec12>>)>,
}

pub fn read_trajectory(path: &Path) -> CliResult<TrajectoryTable> {
    let rows = read_rows(path, &trajectory_header())?;
    let parse = |msg: String| CliError::Parse(format!("{}: {msg}", path.display()));
    let mut beams: Vec<(Vec<f64>, Vec<Vec<Vec12>>)> = Vec::new();
    for (k, r) in rows.iter().enumerate() {
        let b = r[0] as usize;
        if r[0] != b as f64 || b == 0 || b > beams.len() + 1 {
            return Err(parse(format!("line {}: beams must be numbered 1, 2, … in order", k + 2)));
        }
        if b == beams.len() + 1 {
            beams.push((Vec::new(), Vec::new()));
        }
        let (times, levels) = &mut beams[b - 1];
        if times.last() != Some(&r[2]) {
            times.push(r[2]);
            levels.push(Vec::new());
        }
        levels.last_mut().unwrap().push(Vec12::from_column_slice(&r[3..]));
    }
    Ok(TrajectoryTable { beams })
}

impl TrajectoryTable {
    /// Fields on uniform time grids, one per beam.
    pub fn fields(&self, lengths: &[f64]) -> CliResult<Vec<BeamField>> {
        if lengths.len() != self.beams.len() {
            return Err(CliError::Validation(format!("trajectory has {} beams, network {}", self.beams.len(), lengths.len())));
        }
        self.beams
            .iter()
            .zip(lengths)
            .enumerate()
            .map(|(b, ((times, levels), &len))| {
                if times.len() < 2 {
                    return Err(CliError::Validation(format!("beam {}: fewer than two time levels", b + 1)));
                }
                let n_steps = times.len() - 1;
                let dt = times[n_steps] / n_steps as f64;
                if times.iter().enumerate().any(|(l, &t)| (t - dt * l as f64).abs() > 1e-9 * (1.0 + t.abs())) {
                    return Err(CliError::Validation(format!("beam {}: time levels are not uniform from 0", b + 1)));
                }
                let grid = TimeGrid { dt, n_steps };
                Ok(BeamField::from_levels(len, grid, (0..=n_steps).collect(), levels.clone())?)
            })
            .collect()
    }
}
