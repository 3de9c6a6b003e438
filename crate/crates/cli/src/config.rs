//! TOML run configuration: network, simulation, initial state, control and plan blocks.

use std::path::{Path, PathBuf};

use beamnet::beam::{BeamSpec, MatrixField, RotationField};
use beamnet::interp::{Series, Spline};
use beamnet::kinematics::*;
use beamnet::network::{validate, End, NetworkSpec, NodeKind, NodeRecord};
use beamnet::planner::PlanInput;
use serde::Deserialize;

use crate::csvio::read_series;
use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    simulation: SimulationBlock,
    #[serde(default)]
    initial: InitialBlock,
    beams: Vec<RawBeam>,
    nodes: Vec<RawNode>,
    control: Option<RawControl>,
    plan: Option<RawPlan>,
    #[serde(default)]
    io: IoBlock,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationBlock {
    /// Cells per beam.
    #[serde(default = "default_nx")]
    pub nx: usize,
    #[serde(default = "default_cfl")]
    pub cfl: f64,
    pub horizon: f64,
}

fn default_nx() -> usize {
    40
}

fn default_cfl() -> f64 {
    0.9
}

#[derive(Debug, Clone, Default, Deserialize, PartialEq)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum InitialBlock {
    #[default]
    Zero,
    /// Rigid translation with the given global velocity.
    Rigid { velocity: [f64; 3] },
    /// Trajectory CSV holding the t = 0 level of every beam.
    File { path: PathBuf },
}

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
enum RawMatrix {
    /// Row-major 6×6.
    Full(Vec<f64>),
    /// Uniform samples along the beam, each row-major 6×6.
    Table(Vec<Vec<f64>>),
    Diagonal { diagonal: Vec<f64> },
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawRotation {
    x: f64,
    axis: [f64; 3],
    angle: f64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawBeam {
    length: f64,
    mass: RawMatrix,
    flex: RawMatrix,
    /// Axis-angle table on uniform x from 0 to the length; a single row is constant.
    #[serde(default)]
    rotation: Vec<RawRotation>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawEnd {
    beam: usize,
    end: String,
    sign: Option<i8>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawNode {
    kind: String,
    ends: Vec<RawEnd>,
    /// Constant nodal data.
    load: Option<[f64; 6]>,
    /// Time series CSV `t,c1..c6`.
    data: Option<PathBuf>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawControl {
    profiles: Vec<PathBuf>,
    t_star: f64,
    horizon: f64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawPlan {
    charged: Vec<usize>,
    controlled: Vec<usize>,
    path_edges: Vec<usize>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IoBlock {
    pub out_dir: Option<PathBuf>,
    #[serde(default = "default_precision")]
    pub precision: usize,
}

impl Default for IoBlock {
    fn default() -> Self {
        Self { out_dir: None, precision: default_precision() }
    }
}

fn default_precision() -> usize {
    17
}

/// Profiles at the charged nodes with the control window.
#[derive(Debug, Clone, PartialEq)]
pub struct ControlBlock {
    /// One per incident beam of each charged node, in file order.
    pub profiles: Vec<Series<12>>,
    pub t_star: f64,
    pub horizon: f64,
}

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub simulation: SimulationBlock,
    pub initial: InitialBlock,
    pub control: Option<ControlBlock>,
    pub plan: Option<PlanInput>,
    pub io: IoBlock,
    /// Directory relative paths are resolved against.
    pub base_dir: PathBuf,
}

fn parse_err(path: &Path, msg: impl std::fmt::Display) -> CliError {
    let one_line = msg.to_string().split_whitespace().collect::<Vec<_>>().join(" ");
    CliError::Parse(format!("{}: {one_line}", path.display()))
}

fn matrix(path: &Path, what: &str, raw: &RawMatrix, length: f64) -> CliResult<MatrixField> {
    let full = |v: &[f64]| -> CliResult<Mat6> {
        if v.len() != 36 {
            return Err(parse_err(path, format!("{what}: expected 36 entries, found {}", v.len())));
        }
        Ok(Mat6::from_row_slice(v))
    };
    match raw {
        RawMatrix::Full(v) => Ok(MatrixField::Constant(full(v)?)),
        RawMatrix::Diagonal { diagonal } => {
            if diagonal.len() != 6 {
                return Err(parse_err(path, format!("{what}: diagonal needs 6 entries")));
            }
            Ok(MatrixField::Constant(Mat6::from_diagonal(&Vec6::from_column_slice(diagonal))))
        }
        RawMatrix::Table(rows) => {
            let samples = rows.iter().map(|r| full(r)).collect::<CliResult<Vec<_>>>()?;
            if samples.len() < 2 {
                return Err(parse_err(path, format!("{what}: a table needs at least two samples")));
            }
            MatrixField::sampled(length, samples).map_err(|e| parse_err(path, format!("{what}: {e}")))
        }
    }
}

fn axis_angle(axis: &[f64; 3], angle: f64) -> Mat3 {
    let a = Vec3::from_column_slice(axis);
    let n = a.norm();
    if n == 0.0 {
        return Mat3::identity();
    }
    exp_so3(&(a * (angle / n)))
}

fn rotation(path: &Path, label: &str, rows: &[RawRotation], length: f64) -> CliResult<RotationField> {
    match rows {
        [] => Ok(RotationField::Constant(Mat3::identity())),
        [r] => Ok(RotationField::Constant(axis_angle(&r.axis, r.angle))),
        _ => {
            let h = length / (rows.len() - 1) as f64;
            if rows.iter().enumerate().any(|(j, r)| (r.x - h * j as f64).abs() > 1e-9 * (1.0 + length)) {
                return Err(parse_err(path, format!("{label}: rotation x values must be uniform on [0, length]")));
            }
            let rots = rows.iter().map(|r| axis_angle(&r.axis, r.angle)).collect();
            RotationField::sampled(length, rots).map_err(|e| parse_err(path, format!("{label}: {e}")))
        }
    }
}

fn node(path: &Path, base: &Path, n: usize, raw: &RawNode, n_beams: usize) -> CliResult<NodeRecord> {
    let label = format!("node {}", n + 1);
    let kind = match raw.kind.as_str() {
        "multiple" => NodeKind::MultipleKirchhoff,
        "neumann" => NodeKind::SimpleNeumann,
        "dirichlet" => NodeKind::SimpleDirichlet,
        k => return Err(parse_err(path, format!("{label}: unknown kind '{k}' (multiple, neumann, dirichlet)"))),
    };
    let mut ends = Vec::new();
    let mut signs = Vec::new();
    for e in &raw.ends {
        if e.beam == 0 || e.beam > n_beams {
            return Err(parse_err(path, format!("{label}: beam {} does not exist", e.beam)));
        }
        let end = match e.end.as_str() {
            "start" => End::Start,
            "finish" => End::Finish,
            s => return Err(parse_err(path, format!("{label}: unknown end '{s}' (start, finish)"))),
        };
        ends.push((e.beam - 1, end));
        signs.push((e.beam - 1, e.sign));
    }
    let data = match (&raw.load, &raw.data) {
        (Some(_), Some(_)) => return Err(parse_err(path, format!("{label}: give either load or data"))),
        (Some(q), None) => Series::constant(Vec6::from_column_slice(q)),
        (None, Some(file)) => {
            let (t, v) = read_series::<6>(&base.join(file))?;
            Spline::new(t, v).map_err(|e| parse_err(path, format!("{label}: {e}")))?
        }
        (None, None) => Series::zeros(),
    };
    let mut rec = NodeRecord::new(kind, &ends, data);
    // explicit signs are kept so that validation can flag inconsistent ones
    for inc in rec.incidences.iter_mut() {
        if let Some((_, Some(s))) = signs.iter().find(|(b, _)| *b == inc.beam) {
            inc.tau = *s;
        }
    }
    Ok(rec)
}

/// Parse and validate a configuration file.
pub fn load_config(path: &Path) -> CliResult<(RunConfig, NetworkSpec)> {
    let text = std::fs::read_to_string(path).map_err(|e| parse_err(path, e))?;
    let raw: RawConfig = toml::from_str(&text).map_err(|e| parse_err(path, e))?;
    let base = path.parent().map(Path::to_path_buf).unwrap_or_default();

    let mut beams = Vec::new();
    for (b, rb) in raw.beams.iter().enumerate() {
        let label = format!("beam {}", b + 1);
        beams.push(BeamSpec {
            length: rb.length,
            mass: matrix(path, &format!("{label} mass"), &rb.mass, rb.length)?,
            flex: matrix(path, &format!("{label} flex"), &rb.flex, rb.length)?,
            rotation: rotation(path, &label, &rb.rotation, rb.length)?,
        });
    }
    let nodes = raw
        .nodes
        .iter()
        .enumerate()
        .map(|(n, rn)| node(path, &base, n, rn, beams.len()))
        .collect::<CliResult<Vec<_>>>()?;
    let spec = NetworkSpec { beams, nodes };

    let control = match &raw.control {
        None => None,
        Some(c) => {
            let mut profiles = Vec::new();
            for p in &c.profiles {
                let (t, v) = read_series::<12>(&base.join(p))?;
                profiles.push(Spline::new(t, v).map_err(|e| parse_err(path, e))?);
            }
            Some(ControlBlock { profiles, t_star: c.t_star, horizon: c.horizon })
        }
    };
    let one_based = |v: &[usize], what: &str| -> CliResult<Vec<usize>> {
        v.iter().map(|&i| i.checked_sub(1).ok_or_else(|| parse_err(path, format!("plan {what}: indices start at 1")))).collect()
    };
    let plan = match &raw.plan {
        None => None,
        Some(p) => Some(PlanInput {
            charged: one_based(&p.charged, "charged")?,
            controlled: one_based(&p.controlled, "controlled")?,
            path_edges: one_based(&p.path_edges, "path_edges")?,
        }),
    };

    let mut problems = validate(&spec).violations;
    let sim = &raw.simulation;
    if sim.nx < 2 {
        problems.push(format!("simulation nx = {} must be at least 2", sim.nx));
    }
    if !(sim.cfl > 0.0 && sim.cfl <= 1.0) {
        problems.push(format!("simulation cfl = {} must lie in (0, 1]", sim.cfl));
    }
    if !(sim.horizon > 0.0 && sim.horizon.is_finite()) {
        problems.push(format!("simulation horizon = {} must be positive", sim.horizon));
    }
    if !(1..=17).contains(&raw.io.precision) {
        problems.push(format!("io precision = {} must lie in 1..=17", raw.io.precision));
    }
    if !problems.is_empty() {
        return Err(CliError::Validation(problems.join("; ")));
    }
    let config = RunConfig {
        simulation: raw.simulation,
        initial: raw.initial,
        control,
        plan,
        io: raw.io,
        base_dir: base,
    };
    Ok((config, spec))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
        let p = dir.join(name);
        std::fs::write(&p, text).unwrap();
        p
    }

    const ONE_BEAM: &str = r#"
[simulation]
nx = 8
horizon = 1.0

[[beams]]
length = 2.0
mass = { diagonal = [1, 1, 1, 2, 2, 2] }
flex = { diagonal = [1, 1, 1, 1, 1, 1] }

[[nodes]]
kind = "neumann"
ends = [{ beam = 1, end = "start" }]

[[nodes]]
kind = "dirichlet"
ends = [{ beam = 1, end = "finish" }]
load = [0, 0, 0, 0, 0, 0]
"#;

    #[test]
    fn parses_one_beam() {
        let dir = tempfile::tempdir().unwrap();
        let (cfg, spec) = load_config(&write(dir.path(), "a.cfg", ONE_BEAM)).unwrap();
        assert_eq!(cfg.simulation.nx, 8);
        assert_eq!(cfg.simulation.cfl, 0.9);
        assert_eq!(cfg.initial, InitialBlock::Zero);
        assert_eq!(spec.beams[0].length, 2.0);
        assert_eq!(spec.beams[0].mass.at(0.3)[(4, 4)], 2.0);
        assert_eq!(spec.nodes[1].kind, NodeKind::SimpleDirichlet);
    }

    #[test]
    fn non_spd_mass_names_the_beam() {
        let dir = tempfile::tempdir().unwrap();
        let text = ONE_BEAM.replace("[1, 1, 1, 2, 2, 2]", "[1, 1, 1, 2, -2, 2]");
        match load_config(&write(dir.path(), "a.cfg", &text)) {
            Err(CliError::Validation(msg)) => assert!(msg.contains("beam 1") && msg.contains("mass"), "{msg}"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn syntax_errors_are_parse_errors_on_one_line() {
        let dir = tempfile::tempdir().unwrap();
        let text = ONE_BEAM.replace("nx = 8", "nx = = 8");
        let err = load_config(&write(dir.path(), "a.cfg", &text)).unwrap_err();
        assert_eq!(err.exit_code(), 2);
        assert!(!err.to_string().contains('\n'));
        assert!(err.to_string().contains("line"), "{err}");
    }

    #[test]
    fn missing_profiles_file_is_a_parse_error() {
        let dir = tempfile::tempdir().unwrap();
        let text = format!("{ONE_BEAM}\n[control]\nprofiles = [\"nope.csv\"]\nt_star = 2.5\nhorizon = 3.5\n");
        assert!(matches!(load_config(&write(dir.path(), "a.cfg", &text)), Err(CliError::Parse(_))));
    }

    #[test]
    fn inconsistent_sign_fails_validation() {
        let dir = tempfile::tempdir().unwrap();
        let text = ONE_BEAM.replace("{ beam = 1, end = \"start\" }", "{ beam = 1, end = \"start\", sign = 1 }");
        assert!(matches!(load_config(&write(dir.path(), "a.cfg", &text)), Err(CliError::Validation(_))));
    }
}
