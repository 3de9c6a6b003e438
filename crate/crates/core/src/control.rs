//! Nodal-profile control synthesis on the A-shaped network, plus the
//! transmission times and checks that go with it.

use crate::beam::DiagonalizedBeam;
use crate::error::{Error, Result};
use crate::geb::initial_rate;
use crate::interp::{diff_uniform, hermite, hermite_derivative, trapezoid, Linear, Series, Spline};
use crate::kinematics::*;
use crate::network::{node_residual, End, NetworkSpec, NodeKind, NodeRecord};
use crate::solver::{
    cfl_dt, characteristic_curve, restrict_to_characteristic_domain, slowness, solve_forward, solve_sidewise, BeamField,
    Direction, SidewiseData, SolverOptions, TimeGrid, Trajectory,
};

/// Travel time of the slowest characteristic across the beam.
pub fn transmission_time(db: &DiagonalizedBeam) -> f64 {
    trapezoid(&slowness(db), db.dx())
}

/// max(T₁, T₂) + max(T₄, T₅) from the five transmission times in beam order.
pub fn controllability_time_from(times: &[f64; 5]) -> f64 {
    times[0].max(times[1]) + times[3].max(times[4])
}

pub fn controllability_time(dbs: &[DiagonalizedBeam]) -> f64 {
    let t: Vec<f64> = dbs.iter().map(transmission_time).collect();
    controllability_time_from(&[t[0], t[1], t[2], t[3], t[4]])
}

/// Cubic joining `(value, slope)` pairs at `t0` and `t1`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HermiteBridge<T> {
    pub t0: f64,
    pub t1: f64,
    left: (T, T),
    right: (T, T),
}

pub fn hermite_bridge<T: Linear>(t0: f64, left: (T, T), t1: f64, right: (T, T)) -> HermiteBridge<T> {
    HermiteBridge { t0, t1, left, right }
}

impl<T: Linear> HermiteBridge<T> {
    fn parts(&self, t: f64) -> (f64, f64) {
        let h = self.t1 - self.t0;
        (((t - self.t0) / h).clamp(0.0, 1.0), h)
    }

    pub fn eval(&self, t: f64) -> T {
        let (s, h) = self.parts(t);
        hermite(self.left.0, self.left.1 * h, self.right.0, self.right.1 * h, s)
    }

    pub fn derivative(&self, t: f64) -> T {
        let (s, h) = self.parts(t);
        hermite_derivative(self.left.0, self.left.1 * h, self.right.0, self.right.1 * h, s) * (1.0 / h)
    }
}

/// Series through gridded samples.
pub fn series_on_grid<const N: usize>(grid: &TimeGrid, values: Vec<nalgebra::SVector<f64, N>>) -> Result<Series<N>> {
    Spline::new(grid.times(), values)
}

/// Load at a free end that is compatible to first order with `y0`: τ(z⁰ + t z¹),
/// linear on `[0, horizon]`.
pub fn placeholder_load(spec: &NetworkSpec, dbs: &[DiagonalizedBeam], y0: &[Vec<Vec12>], node: usize, horizon: f64) -> Result<Series<6>> {
    let rec = &spec.nodes[node];
    if rec.kind != NodeKind::SimpleNeumann {
        return Err(Error::InvalidInput(format!("node {} is not a free end", node + 1)));
    }
    let i = rec.incidences[0];
    let j = if i.end.is_finish() { y0[i.beam].len() - 1 } else { 0 };
    let value = bottom6(&y0[i.beam][j]) * i.end.tau();
    let rate = bottom6(&initial_rate(&dbs[i.beam], &y0[i.beam], j)) * i.end.tau();
    Spline::new(vec![0.0, horizon], vec![value, value + rate * horizon])
}

/// Forward trace up to the first level at or after `t_bar`, the profile from
/// `t_star` on, and a cubic bridge between.
pub fn bridged_trace(forward: &[Vec12], grid: &TimeGrid, t_bar: f64, profile: &Series<12>, t_star: f64) -> Result<Vec<Vec12>> {
    let n_bar = forward.len() - 1;
    let t0 = grid.time(n_bar);
    if n_bar < 2 || t0 < t_bar * (1.0 - 1e-12) {
        return Err(Error::TraceUnavailable(format!("forward trace ends at {t0} before {t_bar}")));
    }
    if !(t0 < t_star) {
        return Err(Error::InvalidInput(format!("bridge start {t0} is not before T* = {t_star}")));
    }
    let slope = diff_uniform(forward, n_bar, grid.dt);
    let bridge = hermite_bridge(t0, (forward[n_bar], slope), t_star, (profile.eval(t_star), profile.derivative(t_star)));
    Ok((0..=grid.n_steps)
        .map(|m| {
            let t = grid.time(m);
            if m <= n_bar {
                forward[m]
            } else if t >= t_star {
                profile.eval(t)
            } else {
                bridge.eval(t)
            }
        })
        .collect())
}

/// Terminal forces z(x, T) continued linearly from the trace's starting corner,
/// with the x-slope the equations imply there (keeps the corner compatible).
pub fn terminal_forces(db: &DiagonalizedBeam, trace: &[Vec12], direction: Direction, dt: f64) -> Vec<Vec6> {
    let n = db.n_cells();
    let m = trace.len() - 1;
    let start = if direction == Direction::Rightward { 0 } else { n };
    let c = &db.samples[start];
    let y = trace[m];
    let dy_t = diff_uniform(trace, m, dt);
    let residual = dy_t + c.bbar * y - crate::beam::gbar_section(&c.section, &y);
    let slope = c.section.mass * top6(&residual);
    let x0 = db.x(start);
    (0..=n).map(|j| bottom6(&y) + slope * (db.x(j) - x0)).collect()
}

/// Sidewise solve from a trace at the starting end, with the initial velocities
/// of `y0` at t = 0 and [`terminal_forces`] at t = T.
pub fn sidewise_from_trace(
    db: &DiagonalizedBeam,
    beam: usize,
    y0: &[Vec12],
    trace: &[Vec12],
    direction: Direction,
    grid: &TimeGrid,
    opts: &SolverOptions,
) -> Result<BeamField> {
    if trace.len() != grid.n_steps + 1 || trace.len() < 3 {
        return Err(Error::TraceDimensionMismatch(format!("beam {}: trace has {} samples", beam + 1, trace.len())));
    }
    let v0: Vec<Vec6> = y0.iter().map(top6).collect();
    let z_t = terminal_forces(db, trace, direction, grid.dt);
    let data = SidewiseData { trace, v_initial: &v0, z_terminal: &z_t };
    solve_sidewise(db, beam, direction, data, grid, opts, None)
}

/// Forward solve on one beam with Dirichlet velocities at both ends.
pub fn clamped_forward(
    spec: &NetworkSpec,
    dbs: &[DiagonalizedBeam],
    beam: usize,
    y0: &[Vec12],
    v_start: Vec<Vec6>,
    v_finish: Vec<Vec6>,
    grid: &TimeGrid,
    opts: &SolverOptions,
) -> Result<BeamField> {
    let sub = NetworkSpec {
        beams: vec![spec.beams[beam].clone()],
        nodes: vec![
            NodeRecord::new(NodeKind::SimpleDirichlet, &[(0, End::Start)], series_on_grid(grid, v_start)?),
            NodeRecord::new(NodeKind::SimpleDirichlet, &[(0, End::Finish)], series_on_grid(grid, v_finish)?),
        ],
    };
    let traj = solve_forward(&sub, std::slice::from_ref(&dbs[beam]), &[y0.to_vec()], grid, opts, None)?;
    Ok(traj.beams.into_iter().next().unwrap())
}

/// Expected incidences of the A-shaped network, node by node.
fn a_topology() -> Vec<(NodeKind, Vec<(usize, End)>)> {
    use End::*;
    use NodeKind::*;
    vec![
        (MultipleKirchhoff, vec![(0, Start), (1, Start)]),
        (MultipleKirchhoff, vec![(0, Finish), (2, Start), (3, Start)]),
        (MultipleKirchhoff, vec![(1, Finish), (2, Finish), (4, Start)]),
        (SimpleNeumann, vec![(3, Finish)]),
        (SimpleNeumann, vec![(4, Finish)]),
    ]
}

pub fn is_a_network(spec: &NetworkSpec) -> bool {
    let expected = a_topology();
    spec.beams.len() == 5
        && spec.nodes.len() == expected.len()
        && spec.nodes.iter().zip(&expected).all(|(node, (kind, ends))| {
            let mut got: Vec<(usize, bool)> = node.incidences.iter().map(|i| (i.beam, i.end.is_finish())).collect();
            let mut want: Vec<(usize, bool)> = ends.iter().map(|(b, e)| (*b, e.is_finish())).collect();
            got.sort();
            want.sort();
            node.kind == *kind && got == want
        })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ControlProblem {
    /// A-shaped network; data of nodes 1-3 are used, data of the free ends are ignored.
    pub network: NetworkSpec,
    /// Initial state of every beam on its diagonalization grid.
    pub initial: Vec<Vec<Vec12>>,
    /// Prescribed traces of beams 1 and 2 at node 1, on `[t_star, horizon]`.
    pub profiles: [Series<12>; 2],
    pub t_star: f64,
    pub horizon: f64,
}

/// Tolerance of the transmission conditions the profiles must satisfy.
pub const PROFILE_TOL: f64 = 1e-8;

/// Velocity continuity and load balance of the profiles at node 1, sampled on the grid.
pub fn profile_residual(problem: &ControlProblem, dbs: &[DiagonalizedBeam], grid: &TimeGrid) -> f64 {
    let node = &problem.network.nodes[0];
    let mut worst: f64 = 0.0;
    for t in grid.times().into_iter().filter(|&t| t >= problem.t_star) {
        let y = |b: usize, _: End| problem.profiles[b].eval(t);
        let r = node_residual(&problem.network, dbs, 0, y, &node.data.eval(t));
        worst = worst.max(r.max());
    }
    worst
}

#[derive(Debug, Clone, PartialEq)]
pub struct ControlReport {
    pub t_bar: f64,
    /// First time level of the bridge.
    pub bridge_start: f64,
    /// Node-1 trace of the synthesized trajectory against the profiles on `[T*, T]`.
    pub tracking_error: f64,
    /// Largest node condition residual at nodes 1-3 over all steps.
    pub node_residual: f64,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ControlResult {
    pub grid: TimeGrid,
    /// Loads at the free ends 4 and 5 at every time level.
    pub controls: [Vec<Vec6>; 2],
    pub trajectory: Trajectory,
    /// Whole-network forward solution up to the bridge start.
    pub preliminary: Trajectory,
    pub report: ControlReport,
}

impl ControlResult {
    pub fn control_series(&self, k: usize) -> Result<Series<6>> {
        series_on_grid(&self.grid, self.controls[k].clone())
    }
}

fn check_problem(problem: &ControlProblem, dbs: &[DiagonalizedBeam]) -> Result<f64> {
    if !is_a_network(&problem.network) {
        return Err(Error::InvalidInput("control synthesis needs the A-shaped topology".into()));
    }
    if dbs.len() != 5 || problem.initial.len() != 5 {
        return Err(Error::TraceDimensionMismatch("expected five beams".into()));
    }
    let t_bar = controllability_time(dbs);
    if !(problem.t_star > t_bar && problem.horizon > problem.t_star) {
        return Err(Error::InvalidInput(format!(
            "need T = {} > T* = {} > minimal time {t_bar}",
            problem.horizon, problem.t_star
        )));
    }
    Ok(t_bar)
}

/// Largest node residual at the nodes in `nodes` over every step of `traj`.
pub fn trajectory_node_residual(spec: &NetworkSpec, dbs: &[DiagonalizedBeam], traj: &Trajectory, nodes: &[usize]) -> f64 {
    let grid = traj.grid();
    let mut worst: f64 = 0.0;
    for m in 0..=grid.n_steps {
        let t = grid.time(m);
        for &n in nodes {
            let y = |b: usize, e: End| traj.beams[b].trace(e)[m];
            worst = worst.max(node_residual(spec, dbs, n, y, &spec.nodes[n].data.eval(t)).max());
        }
    }
    worst
}

/// Node-1 traces of beams 1, 2 against the profiles on `[T*, T]`.
pub fn tracking_error(problem: &ControlProblem, traj: &Trajectory) -> f64 {
    let grid = traj.grid();
    let mut worst: f64 = 0.0;
    for m in 0..=grid.n_steps {
        let t = grid.time(m);
        if t < problem.t_star {
            continue;
        }
        for b in 0..2 {
            worst = worst.max((traj.beams[b].trace(End::Start)[m] - problem.profiles[b].eval(t)).amax());
        }
    }
    worst
}

/// Beam-2 trace at node 1 implied by the beam-1 trace: rotated velocity, balanced load.
pub fn partner_trace(spec: &NetworkSpec, dbs: &[DiagonalizedBeam], grid: &TimeGrid, first: &[Vec12]) -> Vec<Vec12> {
    let (r1, r2) = (dbs[0].rbar_end(false), dbs[1].rbar_end(false));
    let q1 = &spec.nodes[0].data;
    first
        .iter()
        .enumerate()
        .map(|(m, y)| {
            let v = r2.transpose() * r1 * top6(y);
            let z = -(r2.transpose() * (r1 * bottom6(y) + q1.eval(grid.time(m))));
            stack6(&v, &z)
        })
        .collect()
}

/// Run the synthesis on the grid set by `opts.cfl`.
pub fn synthesize(problem: &ControlProblem, dbs: &[DiagonalizedBeam], opts: &SolverOptions) -> Result<ControlResult> {
    let t_bar = check_problem(problem, dbs)?;
    let grid = TimeGrid::for_horizon(problem.horizon, cfl_dt(dbs, opts.cfl));
    let residual = profile_residual(problem, dbs, &grid);
    if residual > PROFILE_TOL {
        return Err(Error::ProfileIncompatible { residual });
    }
    let spec = &problem.network;
    let y0 = &problem.initial;
    let exec = opts.execution;

    // preliminary forward solve with compatible placeholder loads at the free ends
    let short = grid.truncated(t_bar);
    let mut preliminary_net = spec.clone();
    for n in [3, 4] {
        preliminary_net.nodes[n].data = placeholder_load(spec, dbs, y0, n, short.horizon())?;
    }
    let preliminary = solve_forward(&preliminary_net, dbs, y0, &short, opts, None)?;
    let mut warnings = preliminary.warnings.clone();

    // node-1 data on the whole interval
    let first = bridged_trace(preliminary.beams[0].trace(End::Start), &grid, t_bar, &problem.profiles[0], problem.t_star)?;
    let second = partner_trace(spec, dbs, &grid, &first);

    // beams 1, 2 sidewise from node 1
    let traces = [first, second];
    let mut upper = exec.map(&[0usize, 1], |_, &b| {
        sidewise_from_trace(&dbs[b], b, &y0[b], &traces[b], Direction::Rightward, &grid, opts)
    });
    let f2 = upper.pop().unwrap()?;
    let f1 = upper.pop().unwrap()?;

    // beam 3 forward with velocities matched to beams 1, 2
    let r3 = [dbs[2].rbar_end(false), dbs[2].rbar_end(true)];
    let (r1, r2) = (dbs[0].rbar_end(true), dbs[1].rbar_end(true));
    let v3_start: Vec<Vec6> = f1.trace(End::Finish).iter().map(|y| r3[0].transpose() * r1 * top6(y)).collect();
    let v3_finish: Vec<Vec6> = f2.trace(End::Finish).iter().map(|y| r3[1].transpose() * r2 * top6(y)).collect();
    let f3 = clamped_forward(spec, dbs, 2, &y0[2], v3_start, v3_finish, &grid, opts)?;

    // beams 4, 5 sidewise from nodes 2, 3 with completed loads
    let r4 = dbs[3].rbar_end(false);
    let r5 = dbs[4].rbar_end(false);
    let (q2, q3) = (&spec.nodes[1].data, &spec.nodes[2].data);
    let t4: Vec<Vec12> = (0..=grid.n_steps)
        .map(|m| {
            let (a, c) = (f1.trace(End::Finish)[m], f3.trace(End::Start)[m]);
            let v = r4.transpose() * r1 * top6(&a);
            let z = r4.transpose() * (r1 * bottom6(&a) - r3[0] * bottom6(&c) - q2.eval(grid.time(m)));
            stack6(&v, &z)
        })
        .collect();
    let t5: Vec<Vec12> = (0..=grid.n_steps)
        .map(|m| {
            let (b, c) = (f2.trace(End::Finish)[m], f3.trace(End::Finish)[m]);
            let v = r5.transpose() * r2 * top6(&b);
            let z = r5.transpose() * (r2 * bottom6(&b) + r3[1] * bottom6(&c) - q3.eval(grid.time(m)));
            stack6(&v, &z)
        })
        .collect();
    let traces = [t4, t5];
    let mut lower = exec.map(&[3usize, 4], |k, &b| {
        sidewise_from_trace(&dbs[b], b, &y0[b], &traces[k], Direction::Rightward, &grid, opts)
    });
    let f5 = lower.pop().unwrap()?;
    let f4 = lower.pop().unwrap()?;

    // controls are the loads at the free ends
    let controls = [
        f4.trace(End::Finish).iter().map(bottom6).collect(),
        f5.trace(End::Finish).iter().map(bottom6).collect(),
    ];
    let beams = vec![f1, f2, f3, f4, f5];
    for b in &beams {
        warnings.extend(b.warnings.iter().cloned());
    }
    let trajectory = Trajectory { beams, warnings: warnings.clone() };
    let report = ControlReport {
        t_bar,
        bridge_start: short.horizon(),
        tracking_error: tracking_error(problem, &trajectory),
        node_residual: trajectory_node_residual(spec, dbs, &trajectory, &[0, 1, 2]),
        warnings,
    };
    Ok(ControlResult { grid, controls, trajectory, preliminary, report })
}

/// Forward solve of the whole network driven by the synthesized controls.
pub fn closed_loop(problem: &ControlProblem, dbs: &[DiagonalizedBeam], result: &ControlResult, opts: &SolverOptions) -> Result<Trajectory> {
    let mut net = problem.network.clone();
    net.nodes[3].data = result.control_series(0)?;
    net.nodes[4].data = result.control_series(1)?;
    solve_forward(&net, dbs, &problem.initial, &result.grid, opts, None)
}

#[derive(Debug, Clone, PartialEq)]
pub struct RecoveryReport {
    /// Largest deviation from the preliminary solution on each beam's domain.
    pub per_beam: Vec<f64>,
    /// Number of compared samples on each beam.
    pub samples: Vec<usize>,
}

impl RecoveryReport {
    pub fn max(&self) -> f64 {
        self.per_beam.iter().copied().fold(0.0, f64::max)
    }
}

/// Compare the synthesized trajectory with the preliminary one where the
/// construction says they coincide.
pub fn verify_initial_recovery(result: &ControlResult, dbs: &[DiagonalizedBeam]) -> RecoveryReport {
    let times: Vec<f64> = dbs.iter().map(transmission_time).collect();
    let lower = times[3].max(times[4]);
    let mut per_beam = Vec::new();
    let mut samples = Vec::new();
    for (b, db) in dbs.iter().enumerate() {
        let synth = &result.trajectory.beams[b];
        let pre = &result.preliminary.beams[b];
        let curve = match b {
            0 | 1 => characteristic_curve(db, times[b] + lower),
            2 => vec![lower; db.samples.len()],
            _ => characteristic_curve(db, times[b]),
        };
        let mask = restrict_to_characteristic_domain(synth, &curve);
        let mut worst: f64 = 0.0;
        let mut count = 0;
        for (l, j) in mask.samples() {
            if let Some(lp) = pre.level_of_step(synth.levels[l]) {
                worst = worst.max((synth.y(l, j) - pre.y(lp, j)).amax());
                count += 1;
            }
        }
        per_beam.push(worst);
        samples.push(count);
    }
    RecoveryReport { per_beam, samples }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::beam::BeamSpec;
    use crate::fixtures;
    use crate::par::Execution;

    fn rigid_problem(net: NetworkSpec, dbs: &[DiagonalizedBeam], v: Vec3) -> ControlProblem {
        let n = dbs[0].n_cells();
        let initial: Vec<Vec<Vec12>> = dbs
            .iter()
            .map(|db| vec![stack6(&stack3(&(db.rotation_ends[0].transpose() * v), &Vec3::zeros()), &Vec6::zeros()); n + 1])
            .collect();
        let profiles = [Series::constant(initial[0][0]), Series::constant(initial[1][0])];
        ControlProblem { network: net, initial, profiles, t_star: 2.5, horizon: 3.5 }
    }

    #[test]
    fn transmission_examples() {
        let unit = NetworkSpec { beams: vec![fixtures::unit_beam(Mat3::identity())], nodes: vec![] };
        let db = &unit.diagonalize_uniform(20, Execution::Sequential).unwrap()[0];
        assert!((transmission_time(db) - 1.0).abs() < 1e-14);
        let slow = BeamSpec::uniform(2.0, Mat6::identity(), Mat6::identity() * 4.0, Mat3::identity());
        let net = NetworkSpec { beams: vec![slow], nodes: vec![] };
        let db = &net.diagonalize_uniform(20, Execution::Sequential).unwrap()[0];
        assert!((transmission_time(db) - 4.0).abs() < 1e-13);
        assert_eq!(controllability_time_from(&[1.0, 3.0, 100.0, 2.0, 1.0]), 5.0);
        let a = fixtures::unit_a_network();
        assert!((controllability_time(&a.diagonalize_uniform(10, Execution::Sequential).unwrap()) - 2.0).abs() < 1e-13);
    }

    #[test]
    fn graded_flexibility_transmission() {
        let samples = |n: usize| (0..=n).map(|j| Mat6::identity() * (1.0 + 3.0 * j as f64 / n as f64)).collect::<Vec<_>>();
        let flex = crate::beam::MatrixField::sampled(2.0, samples(64)).unwrap();
        let spec = BeamSpec { flex, ..BeamSpec::uniform(2.0, Mat6::identity(), Mat6::identity(), Mat3::identity()) };
        let net = NetworkSpec { beams: vec![spec], nodes: vec![] };
        let t = |n: usize| transmission_time(&net.diagonalize_uniform(n, Execution::Sequential).unwrap()[0]);
        let (coarse, fine) = (t(500), t(5000));
        assert!(coarse > 2.0 && coarse < 4.0);
        assert!((coarse - fine).abs() < 1e-6, "{coarse} {fine}");
    }

    #[test]
    fn bridge_examples() {
        let zero = hermite_bridge(0.0, (0.0, 0.0), 1.0, (0.0, 0.0));
        assert_eq!(zero.eval(0.3), 0.0);
        let one = hermite_bridge(2.0, (1.0, 0.0), 3.0, (1.0, 0.0));
        assert!((one.eval(2.7) - 1.0).abs() < 1e-15);
        let b = hermite_bridge(0.0, (0.0, 1.0), 1.0, (1.0, 0.0));
        // h(t) = t + t² − t³ for these data
        let t: f64 = 0.5;
        assert!((b.eval(t) - (t + t * t - t * t * t)).abs() < 1e-15);
        assert_eq!((b.eval(0.0), b.eval(1.0)), (0.0, 1.0));
        assert!((b.derivative(0.0) - 1.0).abs() < 1e-14 && b.derivative(1.0).abs() < 1e-14);
    }

    #[test]
    fn rejects_bad_times_and_topology() {
        let net = fixtures::unit_a_network();
        let dbs = net.diagonalize_uniform(10, Execution::Sequential).unwrap();
        let mut p = rigid_problem(net.clone(), &dbs, Vec3::zeros());
        p.t_star = 1.5;
        assert!(matches!(synthesize(&p, &dbs, &SolverOptions::default()), Err(Error::InvalidInput(_))));
        let mut p = rigid_problem(fixtures::path_network(2), &dbs, Vec3::zeros());
        p.network.beams.truncate(2);
        assert!(matches!(synthesize(&p, &dbs, &SolverOptions::default()), Err(Error::InvalidInput(_))));
    }

    #[test]
    fn incompatible_profiles_rejected() {
        let net = fixtures::unit_a_network();
        let dbs = net.diagonalize_uniform(10, Execution::Sequential).unwrap();
        let mut p = rigid_problem(net, &dbs, Vec3::zeros());
        p.profiles[1] = Series::constant(Vec12::repeat(1e-3));
        assert!(matches!(synthesize(&p, &dbs, &SolverOptions::default()), Err(Error::ProfileIncompatible { .. })));
    }

    #[test]
    fn zero_problem_needs_no_control() {
        let net = fixtures::unit_a_network();
        let dbs = net.diagonalize_uniform(20, Execution::Sequential).unwrap();
        let p = rigid_problem(net, &dbs, Vec3::zeros());
        let r = synthesize(&p, &dbs, &SolverOptions::default()).unwrap();
        assert!(r.controls.iter().flatten().all(|q| q.amax() == 0.0));
        assert_eq!(r.trajectory.max_abs(), 0.0);
        assert_eq!(verify_initial_recovery(&r, &dbs).max(), 0.0);
    }

    #[test]
    fn rigid_translation_needs_no_control() {
        let net = fixtures::unit_a_network();
        let dbs = net.diagonalize_uniform(20, Execution::Sequential).unwrap();
        let p = rigid_problem(net, &dbs, Vec3::new(0.01, 0.0, 0.0));
        let opts = SolverOptions::default();
        let r = synthesize(&p, &dbs, &opts).unwrap();
        assert!(r.controls.iter().flatten().all(|q| q.amax() < 1e-12));
        assert!(r.report.tracking_error < 1e-9 && r.report.node_residual < 1e-12);
        assert!(verify_initial_recovery(&r, &dbs).max() < 1e-9);
        let resim = closed_loop(&p, &dbs, &r, &opts).unwrap();
        assert!(tracking_error(&p, &resim) < 1e-9);
    }

    #[test]
    fn parallel_matches_sequential() {
        let net = fixtures::unit_a_network();
        let dbs = net.diagonalize_uniform(12, Execution::Sequential).unwrap();
        let p = rigid_problem(net, &dbs, Vec3::new(0.0, 0.01, 0.0));
        let a = synthesize(&p, &dbs, &SolverOptions { execution: Execution::Sequential, ..Default::default() }).unwrap();
        let b = synthesize(&p, &dbs, &SolverOptions::default()).unwrap();
        assert_eq!(a, b);
    }
}
