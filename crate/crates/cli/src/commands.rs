//! The five subcommands. Each returns the summary lines printed on stdout.

use std::path::{Path, PathBuf};

use beamnet::beam::DiagonalizedBeam;
use beamnet::control::{closed_loop, is_a_network, series_on_grid, synthesize, tracking_error, verify_initial_recovery, ControlProblem};
use beamnet::geb::{check_first_order_compat, default_anchor_end, geb_residual, joint_mismatch, reconstruct, rest_centerline, rest_origins, Anchor};
use beamnet::kinematics::*;
use beamnet::network::{End, NetworkSpec};
use beamnet::planner::{build_plan, check_sufficient_conditions, execute_plan, PlanProblem};
use beamnet::solver::{cfl_dt, solve_forward, SolverOptions, TimeGrid, Trajectory};

use crate::config::{InitialBlock, RunConfig};
use crate::csvio::{number, read_trajectory, write_centerlines, write_series, write_trajectory};
use crate::error::{CliError, CliResult};

/// Configuration plus command-line overrides.
pub struct Context {
    pub config: RunConfig,
    pub spec: NetworkSpec,
    pub nx: usize,
    pub cfl: f64,
    /// Verification tolerance of `control`, compatibility threshold of `check`.
    pub tol: Option<f64>,
    pub out_dir: PathBuf,
    pub input: Option<PathBuf>,
}

/// Closed-loop tracking bound used by `control` when `--tol` is absent.
pub const DEFAULT_TRACKING_TOL: f64 = 1e-4;

impl Context {
    fn digits(&self) -> usize {
        self.config.io.precision
    }

    fn opts(&self) -> SolverOptions {
        let mut o = SolverOptions { cfl: self.cfl, ..Default::default() };
        if let Some(t) = self.tol {
            o.compat_tol = t;
        }
        o
    }

    fn diagonalize(&self, nx: usize) -> CliResult<Vec<DiagonalizedBeam>> {
        Ok(self.spec.diagonalize_uniform(nx, self.opts().execution)?)
    }

    fn out(&self, name: &str) -> CliResult<PathBuf> {
        std::fs::create_dir_all(&self.out_dir).map_err(|e| CliError::io(&self.out_dir, e))?;
        Ok(self.out_dir.join(name))
    }

    fn write_text(&self, name: &str, lines: &[String]) -> CliResult<()> {
        let path = self.out(name)?;
        let mut text = lines.join("\n");
        text.push('\n');
        std::fs::write(&path, text).map_err(|e| CliError::io(&path, e))
    }

    fn initial(&self, dbs: &[DiagonalizedBeam]) -> CliResult<Vec<Vec<Vec12>>> {
        Ok(match &self.config.initial {
            InitialBlock::Zero => dbs.iter().map(|db| vec![Vec12::zeros(); db.n_cells() + 1]).collect(),
            InitialBlock::Rigid { velocity } => {
                let v = Vec3::from_column_slice(velocity);
                self.spec
                    .beams
                    .iter()
                    .zip(dbs)
                    .map(|(b, db)| {
                        (0..=db.n_cells())
                            .map(|j| stack6(&stack3(&(b.rotation.at(db.x(j)).transpose() * v), &Vec3::zeros()), &Vec6::zeros()))
                            .collect()
                    })
                    .collect()
            }
            InitialBlock::File { path } => {
                let path = self.config.base_dir.join(path);
                let table = read_trajectory(&path)?;
                if table.beams.len() != dbs.len() {
                    return Err(CliError::Validation(format!("{}: {} beams, network has {}", path.display(), table.beams.len(), dbs.len())));
                }
                let mut out = Vec::new();
                for (b, ((times, levels), db)) in table.beams.iter().zip(dbs).enumerate() {
                    if times[0] != 0.0 || levels[0].len() != db.n_cells() + 1 {
                        return Err(CliError::Validation(format!(
                            "{}: beam {} needs a t = 0 level with {} samples",
                            path.display(),
                            b + 1,
                            db.n_cells() + 1
                        )));
                    }
                    out.push(levels[0].clone());
                }
                out
            }
        })
    }
}

fn warn_all(warnings: &[String]) {
    for w in warnings {
        log::warn!("{w}");
    }
}

fn verdict(ok: bool) -> &'static str {
    if ok {
        "PASS"
    } else {
        "FAIL"
    }
}

pub fn simulate(ctx: &Context) -> CliResult<Vec<String>> {
    let dbs = ctx.diagonalize(ctx.nx)?;
    let y0 = ctx.initial(&dbs)?;
    let opts = ctx.opts();
    let grid = TimeGrid::for_horizon(ctx.config.simulation.horizon, cfl_dt(&dbs, opts.cfl));
    log::info!("simulate: {} steps of {:.3e}", grid.n_steps, grid.dt);
    let traj = solve_forward(&ctx.spec, &dbs, &y0, &grid, &opts, None)?;
    warn_all(&traj.warnings);
    let path = ctx.out("trajectory.csv")?;
    write_trajectory(&path, &traj, ctx.digits())?;
    let d = ctx.digits();
    Ok(vec![
        format!("steps {} dt {}", grid.n_steps, number(grid.dt, d)),
        format!("max_abs {}", number(traj.max_abs(), d)),
        format!("wrote {}", path.display()),
    ])
}

/// Closed-loop traces at the charged nodes against the profiles on `[T*, T]`.
fn plan_tracking(problem: &PlanProblem, traj: &Trajectory) -> f64 {
    let grid = traj.grid();
    let mut worst: f64 = 0.0;
    for (&n, profiles) in problem.input.charged.iter().zip(&problem.profiles) {
        for (inc, p) in problem.network.nodes[n].ordered().iter().zip(profiles) {
            for m in 0..=grid.n_steps {
                let t = grid.time(m);
                if t >= problem.t_star {
                    worst = worst.max((traj.beams[inc.beam].trace(inc.end)[m] - p.eval(t)).amax());
                }
            }
        }
    }
    worst
}

pub fn control(ctx: &Context) -> CliResult<Vec<String>> {
    let block = ctx.config.control.as_ref().ok_or_else(|| CliError::Validation("config has no [control] block".into()))?;
    let dbs = ctx.diagonalize(ctx.nx)?;
    let initial = ctx.initial(&dbs)?;
    let opts = ctx.opts();
    let tol = ctx.tol.unwrap_or(DEFAULT_TRACKING_TOL);
    let d = ctx.digits();
    let mut report = Vec::new();

    let (grid, controls, trajectory) = if is_a_network(&ctx.spec) && ctx.config.plan.is_none() {
        let [p1, p2]: [_; 2] = block
            .profiles
            .clone()
            .try_into()
            .map_err(|_| CliError::Validation("the A-shaped network takes two profiles".into()))?;
        let problem = ControlProblem { network: ctx.spec.clone(), initial, profiles: [p1, p2], t_star: block.t_star, horizon: block.horizon };
        let result = synthesize(&problem, &dbs, &opts)?;
        warn_all(&result.report.warnings);
        let resim = closed_loop(&problem, &dbs, &result, &opts)?;
        let closed = tracking_error(&problem, &resim);
        let recovery = verify_initial_recovery(&result, &dbs).max();
        report.push(format!("minimal_time {}", number(result.report.t_bar, d)));
        report.push(format!("bridge_start {}", number(result.report.bridge_start, d)));
        report.push(format!("tracking_error {}", number(result.report.tracking_error, d)));
        report.push(format!("closed_loop_tracking_error {}", number(closed, d)));
        report.push(format!("node_residual {}", number(result.report.node_residual, d)));
        report.push(format!("initial_recovery {}", number(recovery, d)));
        report.push(format!("verification {} (tolerance {})", verdict(closed <= tol), number(tol, d)));
        let controls = vec![(3, result.controls[0].clone()), (4, result.controls[1].clone())];
        (result.grid, controls, result.trajectory)
    } else {
        let input = ctx.config.plan.clone().ok_or_else(|| CliError::Validation("control on this network needs a [plan] block".into()))?;
        let mut profiles = Vec::new();
        let mut rest = block.profiles.iter().cloned();
        for &n in &input.charged {
            let k = ctx.spec.nodes.get(n).map(|r| r.degree()).unwrap_or(0);
            let chunk: Vec<_> = rest.by_ref().take(k).collect();
            if chunk.len() != k {
                return Err(CliError::Validation(format!("node {} needs {k} profiles", n + 1)));
            }
            profiles.push(chunk);
        }
        if rest.next().is_some() {
            return Err(CliError::Validation("more profiles than incident beams of the charged nodes".into()));
        }
        let problem = PlanProblem { network: ctx.spec.clone(), initial, input, profiles, t_star: block.t_star, horizon: block.horizon };
        let out = execute_plan(&problem, &dbs, &opts)?;
        warn_all(&out.warnings);
        let mut net = problem.network.clone();
        for (n, q) in &out.controls {
            net.nodes[*n].data = series_on_grid(&out.grid, q.clone())?;
        }
        let resim = solve_forward(&net, &dbs, &problem.initial, &out.grid, &opts, None)?;
        let synth = plan_tracking(&problem, &out.trajectory);
        let closed = plan_tracking(&problem, &resim);
        report.push(format!("minimal_time {}", number(out.plan_time, d)));
        report.push(format!("tracking_error {}", number(synth, d)));
        report.push(format!("closed_loop_tracking_error {}", number(closed, d)));
        report.push(format!("verification {} (tolerance {})", verdict(closed <= tol), number(tol, d)));
        (out.grid, out.controls, out.trajectory)
    };

    let times = grid.times();
    let mut lines = Vec::new();
    for (n, q) in &controls {
        let path = ctx.out(&format!("control_node{}.csv", n + 1))?;
        write_series(&path, &times, q, d)?;
        lines.push(format!("wrote {}", path.display()));
    }
    let path = ctx.out("trajectory.csv")?;
    write_trajectory(&path, &trajectory, d)?;
    lines.push(format!("wrote {}", path.display()));
    ctx.write_text("control_report.txt", &report)?;
    report.extend(lines);
    Ok(report)
}

fn anchor(spec: &NetworkSpec, origins: &[Vec3], b: usize, nx: usize) -> Anchor {
    let beam = &spec.beams[b];
    let end = default_anchor_end(spec, b);
    let (position, x) = match end {
        End::Start => (origins[b], 0.0),
        End::Finish => (*rest_centerline(beam, origins[b], nx).last().unwrap(), beam.length),
    };
    Anchor { end, position, rotation: beam.rotation.at(x) }
}

pub fn reconstruct_cmd(ctx: &Context) -> CliResult<Vec<String>> {
    let input = ctx.input.clone().unwrap_or_else(|| ctx.out_dir.join("trajectory.csv"));
    let table = read_trajectory(&input)?;
    let lengths: Vec<f64> = ctx.spec.beams.iter().map(|b| b.length).collect();
    let fields = table.fields(&lengths)?;
    let nx = fields.first().map(|f| f.n_cells).unwrap_or(ctx.nx);
    if fields.iter().any(|f| f.n_cells != nx) {
        return Err(CliError::Validation(format!("{}: beams must share one cell count", input.display())));
    }
    let dbs = ctx.diagonalize(nx)?;
    let origins = rest_origins(&ctx.spec);
    let d = ctx.digits();
    let mut report = Vec::new();
    let mut geoms = Vec::new();
    for (b, (f, db)) in fields.iter().zip(&dbs).enumerate() {
        let r = reconstruct(f, db, &anchor(&ctx.spec, &origins, b, nx))?;
        warn_all(&r.warnings);
        let residual = geb_residual(&r.geometry, &ctx.spec.beams[b])?.iter().flatten().copied().fold(0.0, f64::max);
        report.push(format!(
            "beam {} strain_compat {} rotation_drift {} geb_residual {}",
            b + 1,
            number(r.compat_residual, d),
            number(r.geometry.max_drift(), d),
            number(residual, d)
        ));
        geoms.push(r.geometry);
    }
    let (pos, rot) = joint_mismatch(&ctx.spec, &geoms);
    report.push(format!("joint_mismatch position {} rotation {}", number(pos, d), number(rot, d)));
    let path = ctx.out("centerline.csv")?;
    write_centerlines(&path, &geoms, d)?;
    ctx.write_text("reconstruct_report.txt", &report)?;
    report.push(format!("wrote {}", path.display()));
    Ok(report)
}

pub fn plan(ctx: &Context) -> CliResult<Vec<String>> {
    let input = ctx.config.plan.as_ref().ok_or_else(|| CliError::Validation("config has no [plan] block".into()))?;
    let plan = build_plan(&ctx.spec, input)?;
    let lines: Vec<String> = plan.to_string().lines().map(String::from).collect();
    ctx.write_text("plan.txt", &lines)?;
    Ok(lines)
}

pub fn check(ctx: &Context) -> CliResult<Vec<String>> {
    let dbs = ctx.diagonalize(ctx.nx)?;
    let y0 = ctx.initial(&dbs)?;
    let tol = ctx.opts().compat_tol;
    let d = ctx.digits();
    let mut lines = vec!["validation OK".to_string()];
    let report = check_first_order_compat(&ctx.spec, &dbs, &y0);
    for e in &report.entries {
        lines.push(format!("compat node {} {} {}", e.node + 1, e.condition.replace(' ', "_"), number(e.residual, d)));
    }
    let worst = report.max_residual();
    lines.push(format!("compat max {} {} (tolerance {})", number(worst, d), verdict(worst <= tol), number(tol, d)));
    if let Some(input) = &ctx.config.plan {
        let s = check_sufficient_conditions(&ctx.spec, input)?;
        if s.holds() {
            lines.push("sufficient_conditions PASS".into());
        } else {
            lines.extend(s.violations.iter().map(|v| format!("sufficient_conditions FAIL {v}")));
        }
    }
    ctx.write_text("check_report.txt", &lines)?;
    Ok(lines)
}

/// Where outputs go: flag, then config, then `./out`.
pub fn out_dir(flag: Option<&Path>, config: &RunConfig) -> PathBuf {
    match (flag, &config.io.out_dir) {
        (Some(p), _) => p.to_path_buf(),
        (None, Some(p)) => config.base_dir.join(p),
        (None, None) => PathBuf::from("out"),
    }
}
