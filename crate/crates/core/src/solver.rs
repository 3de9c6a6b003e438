//! Method-of-characteristics integration: forward in time on a network, and
//! sidewise (in x) on single beams.

use crate::beam::{Coefficients, DiagonalizedBeam};
use crate::error::{Error, Result};
use crate::interp::trapezoid;
use crate::kinematics::*;
use crate::network::{assemble_all, End, NetworkSpec, NodeCoupling};
use crate::par::Execution;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    pub cfl: f64,
    /// Largest admissible |r| component.
    pub blowup_bound: f64,
    /// Store every `store_stride`-th time level of the interior (end traces are always full).
    pub store_stride: usize,
    /// Threshold for first-order compatibility and sidewise corner warnings.
    pub compat_tol: f64,
    /// Turn compatibility warnings into errors.
    pub strict_compat: bool,
    pub execution: Execution,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self { cfl: 0.9, blowup_bound: 1e6, store_stride: 1, compat_tol: 1e-6, strict_compat: false, execution: Execution::default() }
    }
}

/// Uniform time levels `t_n = n dt`, `n = 0..=n_steps`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeGrid {
    pub dt: f64,
    pub n_steps: usize,
}

impl TimeGrid {
    /// Smallest number of steps of size at most `dt_max` reaching `horizon`.
    pub fn for_horizon(horizon: f64, dt_max: f64) -> Self {
        let n_steps = ((horizon / dt_max) * (1.0 - 1e-12)).ceil().max(1.0) as usize;
        Self { dt: horizon / n_steps as f64, n_steps }
    }

    pub fn time(&self, n: usize) -> f64 {
        self.dt * n as f64
    }

    pub fn horizon(&self) -> f64 {
        self.time(self.n_steps)
    }

    pub fn times(&self) -> Vec<f64> {
        (0..=self.n_steps).map(|n| self.time(n)).collect()
    }

    /// Same step, truncated to the first level at or after `t`.
    pub fn truncated(&self, t: f64) -> Self {
        let n = ((t / self.dt) * (1.0 - 1e-12)).ceil().max(1.0) as usize;
        Self { dt: self.dt, n_steps: n.min(self.n_steps) }
    }
}

/// cfl · min over beams and samples of dx / max |λ|.
pub fn cfl_dt(dbs: &[DiagonalizedBeam], cfl: f64) -> f64 {
    dbs.iter().map(|db| db.dx() / db.max_speed()).fold(f64::INFINITY, f64::min) * cfl
}

/// Additional physical source `F(beam, x, t)` added to the right-hand side.
pub type Forcing<'a> = &'a (dyn Fn(usize, f64, f64) -> Vec12 + Sync);

/// Physical state of one beam on the (x, t) grid.
#[derive(Debug, Clone, PartialEq)]
pub struct BeamField {
    pub length: f64,
    pub n_cells: usize,
    pub grid: TimeGrid,
    /// Stored step indices, ascending, always containing 0 and `n_steps`.
    pub levels: Vec<usize>,
    values: Vec<Vec12>,
    /// y(0, t_n) and y(ℓ, t_n) for every step.
    traces: [Vec<Vec12>; 2],
    pub warnings: Vec<String>,
}

impl BeamField {
    fn new(length: f64, n_cells: usize, grid: TimeGrid, stride: usize) -> Self {
        let stride = stride.max(1);
        let mut levels: Vec<usize> = (0..=grid.n_steps).step_by(stride).collect();
        if *levels.last().unwrap() != grid.n_steps {
            levels.push(grid.n_steps);
        }
        let values = vec![Vec12::zeros(); levels.len() * (n_cells + 1)];
        let traces = [vec![Vec12::zeros(); grid.n_steps + 1], vec![Vec12::zeros(); grid.n_steps + 1]];
        Self { length, n_cells, grid, levels, values, traces, warnings: Vec::new() }
    }

    /// Build from fully stored samples `values[level][j]` at the given step indices.
    pub fn from_levels(length: f64, grid: TimeGrid, levels: Vec<usize>, values: Vec<Vec<Vec12>>) -> Result<Self> {
        let n_cells = values.first().map(|v| v.len()).unwrap_or(0).saturating_sub(1);
        if values.len() != levels.len() || values.iter().any(|v| v.len() != n_cells + 1) || n_cells == 0 {
            return Err(Error::TraceDimensionMismatch("ragged field samples".into()));
        }
        let traces = [values.iter().map(|v| v[0]).collect(), values.iter().map(|v| v[n_cells]).collect()];
        Ok(Self { length, n_cells, grid, levels, values: values.into_iter().flatten().collect(), traces, warnings: Vec::new() })
    }

    pub fn n_levels(&self) -> usize {
        self.levels.len()
    }

    pub fn dx(&self) -> f64 {
        self.length / self.n_cells as f64
    }

    pub fn x(&self, j: usize) -> f64 {
        self.dx() * j as f64
    }

    pub fn level_time(&self, level: usize) -> f64 {
        self.grid.time(self.levels[level])
    }

    pub fn y(&self, level: usize, j: usize) -> Vec12 {
        self.values[level * (self.n_cells + 1) + j]
    }

    fn set(&mut self, level: usize, j: usize, y: Vec12) {
        let n = self.n_cells + 1;
        self.values[level * n + j] = y;
    }

    /// y at one end for every step when the field was produced by a solver, or
    /// for every stored level when it was loaded from samples.
    pub fn trace(&self, end: End) -> &[Vec12] {
        &self.traces[end.is_finish() as usize]
    }

    /// Whether end traces hold every time step.
    pub fn has_full_traces(&self) -> bool {
        self.traces[0].len() == self.grid.n_steps + 1
    }

    pub fn level_of_step(&self, step: usize) -> Option<usize> {
        self.levels.binary_search(&step).ok()
    }

    /// Largest |y| entry over stored samples.
    pub fn max_abs(&self) -> f64 {
        self.values.iter().map(|v| v.amax()).fold(0.0, f64::max)
    }

    /// Riemann view r = L y at a stored sample (needs the beam's coefficients on the same x-grid).
    pub fn riemann(&self, db: &DiagonalizedBeam, level: usize, j: usize) -> Vec12 {
        db.samples[j].l * self.y(level, j)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub beams: Vec<BeamField>,
    pub warnings: Vec<String>,
}

impl Trajectory {
    pub fn grid(&self) -> TimeGrid {
        self.beams[0].grid
    }

    /// Largest |y| entry over every stored sample.
    pub fn max_abs(&self) -> f64 {
        self.beams.iter().map(BeamField::max_abs).fold(0.0, f64::max)
    }
}

fn check_dims(dbs: &[DiagonalizedBeam], y0: &[Vec<Vec12>]) -> Result<()> {
    if y0.len() != dbs.len() {
        return Err(Error::TraceDimensionMismatch(format!("{} initial fields for {} beams", y0.len(), dbs.len())));
    }
    for (i, (db, y)) in dbs.iter().zip(y0).enumerate() {
        if y.len() != db.samples.len() {
            return Err(Error::TraceDimensionMismatch(format!(
                "beam {}: initial field has {} samples, grid has {}",
                i + 1,
                y.len(),
                db.samples.len()
            )));
        }
    }
    Ok(())
}

/// Linear interpolation of component `k` of `v` at fractional index `pos`.
#[inline]
fn lerp_component(v: &[Vec12], pos: f64, k: usize) -> f64 {
    let last = v.len() - 1;
    let i = (pos.floor().max(0.0) as usize).min(last.saturating_sub(1));
    let w = pos - i as f64;
    if w <= 0.0 {
        return v[i][k];
    }
    if i + 1 > last {
        return v[last][k];
    }
    v[i][k] * (1.0 - w) + v[i + 1][k] * w
}

/// Feet of the characteristics through every grid point, as fractional indices.
fn forward_feet(db: &DiagonalizedBeam, dt: f64) -> Vec<[f64; 12]> {
    let n = db.n_cells();
    let dx = db.dx();
    let speeds: Vec<Vec12> = db.samples.iter().map(Coefficients::speeds).collect();
    (0..=n)
        .map(|j| {
            let mut feet = [0.0; 12];
            for (k, foot) in feet.iter_mut().enumerate() {
                let mid = j as f64 - 0.5 * dt * speeds[j][k] / dx;
                let lam = lerp_component(&speeds, mid.clamp(0.0, n as f64), k);
                *foot = (j as f64 - dt * lam / dx).clamp(0.0, n as f64);
            }
            feet
        })
        .collect()
}

/// Whether component `k` at grid index `j` is set by the node rather than traced.
#[inline]
fn is_outgoing(j: usize, n: usize, k: usize) -> bool {
    (j == 0 && k >= 6) || (j == n && k < 6)
}

struct BeamState {
    r: Vec<Vec12>,
    src: Vec<Vec12>,
    base: Vec<Vec12>,
    src_base: Vec<Vec12>,
    feet: Vec<[f64; 12]>,
}

impl BeamState {
    fn source(&mut self, db: &DiagonalizedBeam, beam: usize, t: f64, forcing: Option<Forcing>) {
        for (j, c) in db.samples.iter().enumerate() {
            let mut s = c.rhs(&self.r[j]);
            if let Some(f) = forcing {
                s += c.l * f(beam, db.x(j), t);
            }
            self.src[j] = s;
        }
    }

    fn trace(&mut self, dt: f64) {
        let n = self.r.len() - 1;
        for j in 0..=n {
            for k in 0..12 {
                if is_outgoing(j, n, k) {
                    continue;
                }
                let pos = self.feet[j][k];
                self.base[j][k] = lerp_component(&self.r, pos, k);
                self.src_base[j][k] = lerp_component(&self.src, pos, k);
            }
        }
        for j in 0..=n {
            for k in 0..12 {
                if !is_outgoing(j, n, k) {
                    self.r[j][k] = self.base[j][k] + dt * self.src_base[j][k];
                }
            }
        }
    }

    fn correct(&mut self, dt: f64) {
        let n = self.r.len() - 1;
        for j in 0..=n {
            for k in 0..12 {
                if !is_outgoing(j, n, k) {
                    self.r[j][k] = self.base[j][k] + 0.5 * dt * (self.src_base[j][k] + self.src[j][k]);
                }
            }
        }
    }
}

fn close_nodes(spec: &NetworkSpec, couplings: &[NodeCoupling], states: &mut [BeamState], t: f64) {
    for c in couplings {
        let ends: Vec<Vec12> = c
            .order
            .iter()
            .map(|o| {
                let r = &states[o.beam].r;
                if o.end.is_finish() {
                    r[r.len() - 1]
                } else {
                    r[0]
                }
            })
            .collect();
        let (_, r_in) = c.split_out_in(&ends);
        let out = c.apply(&r_in, &spec.nodes[c.node].data.eval(t));
        for (o, r) in c.order.iter().zip(c.merge(&out, &r_in)) {
            let beam = &mut states[o.beam].r;
            let j = if o.end.is_finish() { beam.len() - 1 } else { 0 };
            beam[j] = r;
        }
    }
}

fn blowup_check(beam: usize, r: &[Vec12], t: f64, bound: f64) -> Result<()> {
    let magnitude = r.iter().map(|v| v.amax()).fold(0.0, f64::max);
    if !(magnitude <= bound) {
        return Err(Error::BlowUp { beam, t, magnitude });
    }
    Ok(())
}

/// Integrate the network forward on `grid` from the physical initial fields `y0`
/// (sampled on each beam's grid) with nodal data taken from `spec`.
pub fn solve_forward(
    spec: &NetworkSpec,
    dbs: &[DiagonalizedBeam],
    y0: &[Vec<Vec12>],
    grid: &TimeGrid,
    opts: &SolverOptions,
    forcing: Option<Forcing>,
) -> Result<Trajectory> {
    check_dims(dbs, y0)?;
    let limit = cfl_dt(dbs, 1.0);
    if grid.dt > limit * (1.0 + 1e-9) {
        return Err(Error::InvalidInput(format!("time step {} exceeds the CFL limit {limit}", grid.dt)));
    }
    let mut warnings = Vec::new();
    let compat = crate::geb::check_first_order_compat(spec, dbs, y0);
    let worst = compat.max_residual();
    if worst > opts.compat_tol {
        let msg = format!("first-order compatibility residual {worst:.3e} at t = 0");
        if opts.strict_compat {
            return Err(Error::Compatibility(msg));
        }
        log::warn!("{msg}");
        warnings.push(msg);
    }
    let couplings = assemble_all(spec, dbs)?;
    let exec = opts.execution;
    let mut states: Vec<BeamState> = dbs
        .iter()
        .zip(y0)
        .map(|(db, y)| {
            let n = db.samples.len();
            BeamState {
                r: db.samples.iter().zip(y).map(|(c, y)| c.l * y).collect(),
                src: vec![Vec12::zeros(); n],
                base: vec![Vec12::zeros(); n],
                src_base: vec![Vec12::zeros(); n],
                feet: forward_feet(db, grid.dt),
            }
        })
        .collect();
    let mut fields: Vec<BeamField> =
        dbs.iter().map(|db| BeamField::new(db.length, db.n_cells(), *grid, opts.store_stride)).collect();
    let store = |fields: &mut [BeamField], states: &[BeamState], step: usize| {
        for ((f, s), db) in fields.iter_mut().zip(states).zip(dbs) {
            let y = |j: usize| db.samples[j].l_inv * s.r[j];
            let n = s.r.len() - 1;
            f.traces[0][step] = y(0);
            f.traces[1][step] = y(n);
            if let Some(level) = f.level_of_step(step) {
                for j in 0..=n {
                    f.set(level, j, y(j));
                }
            }
        }
    };
    store(&mut fields, &states, 0);
    let dt = grid.dt;
    for step in 0..grid.n_steps {
        let (t0, t1) = (grid.time(step), grid.time(step + 1));
        exec.for_each_mut(&mut states, |b, s| {
            s.source(&dbs[b], b, t0, forcing);
            s.trace(dt);
        });
        close_nodes(spec, &couplings, &mut states, t1);
        exec.for_each_mut(&mut states, |b, s| {
            s.source(&dbs[b], b, t1, forcing);
            s.correct(dt);
        });
        close_nodes(spec, &couplings, &mut states, t1);
        for (b, s) in states.iter().enumerate() {
            blowup_check(b, &s.r, t1, opts.blowup_bound)?;
        }
        store(&mut fields, &states, step + 1);
    }
    Ok(Trajectory { beams: fields, warnings })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    /// March from x = 0 to x = ℓ.
    Rightward,
    /// March from x = ℓ to x = 0.
    Leftward,
}

impl Direction {
    pub fn start(self) -> End {
        match self {
            Direction::Rightward => End::Start,
            Direction::Leftward => End::Finish,
        }
    }

    fn sign(self) -> f64 {
        match self {
            Direction::Rightward => 1.0,
            Direction::Leftward => -1.0,
        }
    }
}

/// Data of a sidewise problem on one beam.
#[derive(Debug, Clone, Copy)]
pub struct SidewiseData<'a> {
    /// Physical y at the starting end for every time level.
    pub trace: &'a [Vec12],
    /// Velocities v(x, 0) on the beam grid.
    pub v_initial: &'a [Vec6],
    /// Forces z(x, T) on the beam grid.
    pub z_terminal: &'a [Vec6],
}

fn lerp_grid(v: &[Vec6], pos: f64) -> Vec6 {
    crate::interp::lerp_index(v, pos)
}

/// Integrate one beam in x from a full time trace at one end; `beam` labels the
/// forcing call and error messages.
pub fn solve_sidewise(
    db: &DiagonalizedBeam,
    beam: usize,
    direction: Direction,
    data: SidewiseData,
    grid: &TimeGrid,
    opts: &SolverOptions,
    forcing: Option<Forcing>,
) -> Result<BeamField> {
    let n = db.n_cells();
    let m_last = grid.n_steps;
    if data.trace.len() != m_last + 1 {
        return Err(Error::TraceDimensionMismatch(format!(
            "beam {}: trace has {} samples, time grid has {}",
            beam + 1,
            data.trace.len(),
            m_last + 1
        )));
    }
    if data.v_initial.len() != n + 1 || data.z_terminal.len() != n + 1 {
        return Err(Error::TraceDimensionMismatch(format!("beam {}: edge data must have {} samples", beam + 1, n + 1)));
    }
    let dt = grid.dt;
    let dx = db.dx();
    let sigma = direction.sign();
    let substeps = ((dx / (dt * db.min_speed())) * (1.0 - 1e-12)).ceil().max(1.0) as usize;
    let h = dx / substeps as f64;
    let mut field = BeamField::new(db.length, n, *grid, opts.store_stride);
    let start_j = if direction == Direction::Rightward { 0 } else { n };
    let start = &db.samples[start_j];

    let mut mismatch: f64 = 0.0;
    mismatch = mismatch.max((top6(&data.trace[0]) - data.v_initial[start_j]).amax());
    mismatch = mismatch.max((bottom6(&data.trace[m_last]) - data.z_terminal[start_j]).amax());
    if mismatch > opts.compat_tol {
        let msg = format!("beam {}: sidewise corner mismatch {mismatch:.3e}", beam + 1);
        log::warn!("{msg}");
        field.warnings.push(msg);
    }

    let mut col: Vec<Vec12> = data.trace.iter().map(|y| start.l * y).collect();
    let mut src = vec![Vec12::zeros(); m_last + 1];
    let mut base = vec![Vec12::zeros(); m_last + 1];
    let mut src_base = vec![Vec12::zeros(); m_last + 1];
    let store = |field: &mut BeamField, col: &[Vec12], j: usize| {
        let c = &db.samples[j];
        let ys: Vec<Vec12> = col.iter().map(|r| c.l_inv * r).collect();
        if j == 0 {
            field.traces[0].copy_from_slice(&ys);
        }
        if j == n {
            field.traces[1].copy_from_slice(&ys);
        }
        for level in 0..field.levels.len() {
            let y = ys[field.levels[level]];
            field.set(level, j, y);
        }
    };
    store(&mut field, &col, start_j);

    let compute_src = |src: &mut [Vec12], col: &[Vec12], c: &Coefficients, x: f64| {
        let inv_speed = c.speeds().map(|s| sigma / s);
        for (m, (s, r)) in src.iter_mut().zip(col).enumerate() {
            let mut rhs = c.rhs(r);
            if let Some(f) = forcing {
                rhs += c.l * f(beam, x, grid.time(m));
            }
            *s = rhs.component_mul(&inv_speed);
        }
    };
    let close = |col: &mut [Vec12], c: &Coefficients, pos: f64| {
        let v0 = lerp_grid(data.v_initial, pos);
        let z_t = lerp_grid(data.z_terminal, pos);
        let w = c.l_velocity() * v0 * 2.0;
        let zeta = c.l_force() * z_t * 2.0;
        let (first, last) = (col[0], col[col.len() - 1]);
        match direction {
            Direction::Rightward => col[0].fixed_rows_mut::<6>(6).copy_from(&(w - top6(&first))),
            Direction::Leftward => col[0].fixed_rows_mut::<6>(0).copy_from(&(w - bottom6(&first))),
        }
        let m = col.len() - 1;
        match direction {
            Direction::Rightward => col[m].fixed_rows_mut::<6>(0).copy_from(&(bottom6(&last) + zeta)),
            Direction::Leftward => col[m].fixed_rows_mut::<6>(6).copy_from(&(top6(&last) - zeta)),
        }
    };

    let mut x = db.x(start_j);
    for cell in 0..n {
        for _ in 0..substeps {
            let x_next = (x + sigma * h).clamp(0.0, db.length);
            let c = db.coefficients_at(x);
            let c_next = db.coefficients_at(x_next);
            let speed = (c.speeds() + c_next.speeds()) * 0.5;
            // t-shift of each foot in index units
            let shift: Vec12 = speed.map(|s| sigma * h / (s * dt));
            let traced = |m: usize, k: usize| !((m == 0 && shift[k] > 0.0) || (m == m_last && shift[k] < 0.0));
            compute_src(&mut src, &col, &c, x);
            for m in 0..=m_last {
                for k in 0..12 {
                    if traced(m, k) {
                        let pos = (m as f64 - shift[k]).clamp(0.0, m_last as f64);
                        base[m][k] = lerp_component(&col, pos, k);
                        src_base[m][k] = lerp_component(&src, pos, k);
                    }
                }
            }
            let pos_next = x_next / dx;
            for m in 0..=m_last {
                for k in 0..12 {
                    if traced(m, k) {
                        col[m][k] = base[m][k] + h * src_base[m][k];
                    }
                }
            }
            close(&mut col, &c_next, pos_next);
            compute_src(&mut src, &col, &c_next, x_next);
            for m in 0..=m_last {
                for k in 0..12 {
                    if traced(m, k) {
                        col[m][k] = base[m][k] + 0.5 * h * (src_base[m][k] + src[m][k]);
                    }
                }
            }
            close(&mut col, &c_next, pos_next);
            x = x_next;
        }
        let j = if direction == Direction::Rightward { cell + 1 } else { n - cell - 1 };
        x = db.x(j);
        blowup_check(beam, &col, x, opts.blowup_bound)?;
        store(&mut field, &col, j);
    }
    Ok(field)
}

/// 1 / min_k |λ_k| at every sample.
pub fn slowness(db: &DiagonalizedBeam) -> Vec<f64> {
    db.samples.iter().map(|c| 1.0 / c.d.min()).collect()
}

/// t(x_j) = t0 − ∫₀^{x_j} Λ on the beam grid.
pub fn characteristic_curve(db: &DiagonalizedBeam, t0: f64) -> Vec<f64> {
    let lam = slowness(db);
    let dx = db.dx();
    (0..lam.len()).map(|j| t0 - trapezoid(&lam[..=j], dx)).collect()
}

/// Stored samples of a field lying in {0 ≤ t ≤ t_curve(x)}.
#[derive(Debug, Clone, PartialEq)]
pub struct MaskedField<'a> {
    pub field: &'a BeamField,
    /// `inside[level][j]`.
    pub inside: Vec<Vec<bool>>,
}

impl MaskedField<'_> {
    pub fn samples(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.inside
            .iter()
            .enumerate()
            .flat_map(|(l, row)| row.iter().enumerate().filter(|(_, &b)| b).map(move |(j, _)| (l, j)))
    }

    pub fn count(&self) -> usize {
        self.samples().count()
    }
}

pub fn restrict_to_characteristic_domain<'a>(field: &'a BeamField, t_curve: &[f64]) -> MaskedField<'a> {
    let inside = (0..field.n_levels())
        .map(|l| {
            let t = field.level_time(l);
            t_curve.iter().map(|&tc| t <= tc + 1e-12 * (1.0 + tc.abs())).collect()
        })
        .collect();
    MaskedField { field, inside }
}

/// Area of {(x, t): 0 ≤ t ≤ min(t_curve(x), horizon)} by the trapezoid rule.
pub fn domain_area(t_curve: &[f64], dx: f64, horizon: f64) -> f64 {
    let clipped: Vec<f64> = t_curve.iter().map(|t| t.clamp(0.0, horizon)).collect();
    trapezoid(&clipped, dx)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::beam::BeamSpec;
    use crate::fixtures;
    use crate::interp::Series;
    use crate::network::{NodeKind, NodeRecord};

    fn single_beam(flex: f64) -> NetworkSpec {
        NetworkSpec {
            beams: vec![BeamSpec::uniform(1.0, Mat6::identity(), Mat6::identity() * flex, Mat3::identity())],
            nodes: vec![
                NodeRecord::new(NodeKind::SimpleNeumann, &[(0, End::Start)], Series::zeros()),
                NodeRecord::new(NodeKind::SimpleNeumann, &[(0, End::Finish)], Series::zeros()),
            ],
        }
    }

    fn smooth_y0(db: &DiagonalizedBeam, amp: f64) -> Vec<Vec12> {
        // velocity bump vanishing with its derivative at both ends (compatible with zero data)
        (0..=db.n_cells())
            .map(|j| {
                let x = db.x(j) / db.length;
                let bump = (x * (1.0 - x)).powi(3) * 64.0 * amp;
                Vec12::from_fn(|k, _| if k < 6 { bump * (1.0 + 0.1 * k as f64) } else { 0.0 })
            })
            .collect()
    }

    #[test]
    fn cfl_examples() {
        let net = fixtures::unit_a_network();
        let dbs = net.diagonalize_uniform(100, Execution::Sequential).unwrap();
        assert!((cfl_dt(&dbs, 0.9) - 0.009).abs() < 1e-15);
        let net = single_beam(4.0);
        let dbs = net.diagonalize_uniform(100, Execution::Sequential).unwrap();
        assert!((cfl_dt(&dbs, 0.9) - 0.018).abs() < 1e-15);
    }

    #[test]
    fn zero_state_is_preserved() {
        let net = fixtures::unit_a_network();
        let dbs = net.diagonalize_uniform(20, Execution::Sequential).unwrap();
        let y0 = vec![vec![Vec12::zeros(); 21]; 5];
        let grid = TimeGrid::for_horizon(1.0, cfl_dt(&dbs, 0.9));
        let traj = solve_forward(&net, &dbs, &y0, &grid, &SolverOptions::default(), None).unwrap();
        assert_eq!(traj.max_abs(), 0.0);
        assert!(traj.warnings.is_empty());
    }

    #[test]
    fn rejects_bad_dimensions_and_cfl() {
        let net = single_beam(1.0);
        let dbs = net.diagonalize_uniform(10, Execution::Sequential).unwrap();
        let grid = TimeGrid::for_horizon(1.0, 0.05);
        let bad = vec![vec![Vec12::zeros(); 5]];
        assert!(matches!(
            solve_forward(&net, &dbs, &bad, &grid, &SolverOptions::default(), None),
            Err(Error::TraceDimensionMismatch(_))
        ));
        let y0 = vec![vec![Vec12::zeros(); 11]];
        let too_big = TimeGrid::for_horizon(1.0, 0.5);
        assert!(solve_forward(&net, &dbs, &y0, &too_big, &SolverOptions::default(), None).is_err());
    }

    #[test]
    fn blowup_detected() {
        let net = single_beam(1.0);
        let dbs = net.diagonalize_uniform(10, Execution::Sequential).unwrap();
        let y0 = vec![smooth_y0(&dbs[0], 1.0)];
        let grid = TimeGrid::for_horizon(0.5, cfl_dt(&dbs, 0.9));
        let opts = SolverOptions { blowup_bound: 1e-3, ..Default::default() };
        assert!(matches!(solve_forward(&net, &dbs, &y0, &grid, &opts, None), Err(Error::BlowUp { .. })));
    }

    #[test]
    fn stride_keeps_full_traces() {
        let net = single_beam(1.0);
        let dbs = net.diagonalize_uniform(10, Execution::Sequential).unwrap();
        let y0 = vec![smooth_y0(&dbs[0], 1e-3)];
        let grid = TimeGrid::for_horizon(1.0, cfl_dt(&dbs, 0.9));
        let full = solve_forward(&net, &dbs, &y0, &grid, &SolverOptions::default(), None).unwrap();
        let opts = SolverOptions { store_stride: 4, ..Default::default() };
        let thin = solve_forward(&net, &dbs, &y0, &grid, &opts, None).unwrap();
        assert_eq!(full.beams[0].trace(End::Start), thin.beams[0].trace(End::Start));
        let last = thin.beams[0].n_levels() - 1;
        assert_eq!(thin.beams[0].levels[last], grid.n_steps);
        assert_eq!(thin.beams[0].y(last, 5), full.beams[0].y(grid.n_steps, 5));
        // Riemann view consistent with the physical one
        let r = full.beams[0].riemann(&dbs[0], 3, 4);
        assert!((dbs[0].samples[4].l_inv * r - full.beams[0].y(3, 4)).norm() < 1e-15);
    }

    #[test]
    fn parallel_and_sequential_agree_bitwise() {
        let net = fixtures::unit_a_network();
        let dbs = net.diagonalize_uniform(16, Execution::Sequential).unwrap();
        let y0: Vec<Vec<Vec12>> = dbs.iter().map(|db| smooth_y0(db, 1e-3)).collect();
        let grid = TimeGrid::for_horizon(0.5, cfl_dt(&dbs, 0.9));
        let seq = SolverOptions { execution: Execution::Sequential, ..Default::default() };
        let a = solve_forward(&net, &dbs, &y0, &grid, &seq, None).unwrap();
        let b = solve_forward(&net, &dbs, &y0, &grid, &SolverOptions::default(), None).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn sidewise_zero_and_equilibrium() {
        let net = single_beam(1.0);
        let dbs = net.diagonalize_uniform(10, Execution::Sequential).unwrap();
        let grid = TimeGrid::for_horizon(1.0, cfl_dt(&dbs, 0.9));
        let zeros6 = vec![Vec6::zeros(); 11];
        let trace = vec![Vec12::zeros(); grid.n_steps + 1];
        let data = SidewiseData { trace: &trace, v_initial: &zeros6, z_terminal: &zeros6 };
        let f = solve_sidewise(&dbs[0], 0, Direction::Rightward, data, &grid, &SolverOptions::default(), None).unwrap();
        assert_eq!(f.max_abs(), 0.0);
        let v = stack3(&Vec3::new(0.01, 0.0, 0.0), &Vec3::zeros());
        let trace = vec![stack6(&v, &Vec6::zeros()); grid.n_steps + 1];
        let vs = vec![v; 11];
        for dir in [Direction::Rightward, Direction::Leftward] {
            let data = SidewiseData { trace: &trace, v_initial: &vs, z_terminal: &zeros6 };
            let f = solve_sidewise(&dbs[0], 0, dir, data, &grid, &SolverOptions::default(), None).unwrap();
            for l in 0..f.n_levels() {
                for j in 0..=10 {
                    assert!((f.y(l, j) - trace[0]).amax() < 1e-15);
                }
            }
        }
    }

    #[test]
    fn sidewise_rejects_bad_trace() {
        let net = single_beam(1.0);
        let dbs = net.diagonalize_uniform(10, Execution::Sequential).unwrap();
        let grid = TimeGrid::for_horizon(1.0, 0.05);
        let zeros6 = vec![Vec6::zeros(); 11];
        let trace = vec![Vec12::zeros(); 3];
        let data = SidewiseData { trace: &trace, v_initial: &zeros6, z_terminal: &zeros6 };
        assert!(matches!(
            solve_sidewise(&dbs[0], 0, Direction::Rightward, data, &grid, &SolverOptions::default(), None),
            Err(Error::TraceDimensionMismatch(_))
        ));
    }

    #[test]
    fn sidewise_reproduces_forward_solution() {
        // forward solve with free ends, then march its x = 0 trace to the right
        let err = |n: usize| {
            let net = single_beam(1.0);
            let dbs = net.diagonalize_uniform(n, Execution::Sequential).unwrap();
            let y0 = vec![smooth_y0(&dbs[0], 1e-3)];
            let grid = TimeGrid::for_horizon(1.0, cfl_dt(&dbs, 0.7));
            let fwd = solve_forward(&net, &dbs, &y0, &grid, &SolverOptions::default(), None).unwrap();
            let b = &fwd.beams[0];
            let v0: Vec<Vec6> = y0[0].iter().map(top6).collect();
            let last = b.n_levels() - 1;
            let z_t: Vec<Vec6> = (0..=n).map(|j| bottom6(&b.y(last, j))).collect();
            let data = SidewiseData { trace: b.trace(End::Start), v_initial: &v0, z_terminal: &z_t };
            let side = solve_sidewise(&dbs[0], 0, Direction::Rightward, data, &grid, &SolverOptions::default(), None).unwrap();
            let mut e: f64 = 0.0;
            for l in 0..b.n_levels() {
                for j in 0..=n {
                    e = e.max((side.y(l, j) - b.y(l, j)).amax());
                }
            }
            e
        };
        let (e1, e2) = (err(40), err(80));
        assert!(e1 < 2e-4 && e2 < 0.7 * e1, "{e1} {e2}");
    }

    #[test]
    fn characteristic_domain_geometry() {
        let net = single_beam(1.0);
        let dbs = net.diagonalize_uniform(50, Execution::Sequential).unwrap();
        let t = characteristic_curve(&dbs[0], 1.0);
        assert!((t[50]).abs() < 1e-14);
        assert!((domain_area(&t, dbs[0].dx(), 5.0) - 0.5).abs() < 1e-12);
        let strip = characteristic_curve(&dbs[0], 1.5);
        let grid = TimeGrid::for_horizon(2.0, 0.02);
        let field = BeamField::new(1.0, 50, grid, 1);
        let mask = restrict_to_characteristic_domain(&field, &strip);
        for l in 0..field.n_levels() {
            for j in 0..=50 {
                if field.level_time(l) <= 0.5 {
                    assert!(mask.inside[l][j]);
                }
            }
        }
        let tri = restrict_to_characteristic_domain(&field, &t);
        assert!(tri.inside[0].iter().all(|&b| b));
        assert!(!tri.inside[1][50]);
    }

    #[test]
    fn perturbation_outside_domain_does_not_leak() {
        // data changed only for x > 0.6 cannot reach x < 0.2 before t = 0.3 (speed 1, CFL widening included)
        let net = single_beam(1.0);
        let dbs = net.diagonalize_uniform(50, Execution::Sequential).unwrap();
        let grid = TimeGrid::for_horizon(0.3, cfl_dt(&dbs, 0.9));
        let y0 = vec![vec![Vec12::zeros(); 51]];
        let mut y1 = y0.clone();
        for j in 31..=50 {
            y1[0][j] = Vec12::repeat(1e-3);
        }
        let opts = SolverOptions { compat_tol: f64::INFINITY, ..Default::default() };
        let a = solve_forward(&net, &dbs, &y0, &grid, &opts, None).unwrap();
        let b = solve_forward(&net, &dbs, &y1, &grid, &opts, None).unwrap();
        for l in 0..a.beams[0].n_levels() {
            for j in 0..=10 {
                assert!((a.beams[0].y(l, j) - b.beams[0].y(l, j)).amax() <= 1e-9);
            }
        }
    }

    /// Exact field ε sin(x − t + φ) w with the forcing that makes it a solution.
    struct Manufactured {
        eps: f64,
        w: Vec12,
        coeffs: Coefficients,
    }

    impl Manufactured {
        fn new(db: &DiagonalizedBeam) -> Self {
            let w = Vec12::from_fn(|k, _| 1.0 / (1.0 + k as f64) * if k % 2 == 0 { 1.0 } else { -1.0 });
            Self { eps: 1e-2, w, coeffs: db.samples[0].clone() }
        }

        fn y(&self, x: f64, t: f64) -> Vec12 {
            self.w * (self.eps * (x - t + 0.3).sin())
        }

        fn forcing(&self, x: f64, t: f64) -> Vec12 {
            let c = &self.coeffs;
            let y = self.y(x, t);
            let dy = self.w * (self.eps * (x - t + 0.3).cos());
            -dy + c.a * dy + c.bbar * y - crate::beam::gbar_section(&c.section, &y)
        }

        fn loads(&self, end: End, length: f64, horizon: f64) -> Series<6> {
            let x = if end.is_finish() { length } else { 0.0 };
            let n = 4000;
            let values = (0..=n).map(|m| bottom6(&self.y(x, horizon * m as f64 / n as f64)) * end.tau()).collect();
            Series::uniform(0.0, horizon, values).unwrap()
        }
    }

    fn manufactured_errors(n: usize) -> (f64, f64) {
        let mut net = single_beam(1.0);
        let dbs = net.diagonalize_uniform(n, Execution::Sequential).unwrap();
        let exact = Manufactured::new(&dbs[0]);
        let horizon = 1.0;
        net.nodes[0].data = exact.loads(End::Start, 1.0, horizon);
        net.nodes[1].data = exact.loads(End::Finish, 1.0, horizon);
        let forcing = |_: usize, x: f64, t: f64| exact.forcing(x, t);
        let y0 = vec![(0..=n).map(|j| exact.y(dbs[0].x(j), 0.0)).collect::<Vec<_>>()];
        let opts = SolverOptions { compat_tol: f64::INFINITY, ..Default::default() };
        let grid = TimeGrid::for_horizon(horizon, cfl_dt(&dbs, 0.5));
        let fwd = solve_forward(&net, &dbs, &y0, &grid, &opts, Some(&forcing)).unwrap();
        let b = &fwd.beams[0];
        let mut e_fwd: f64 = 0.0;
        for l in 0..b.n_levels() {
            for j in 0..=n {
                e_fwd = e_fwd.max((b.y(l, j) - exact.y(b.x(j), b.level_time(l))).amax());
            }
        }
        let grid = TimeGrid::for_horizon(horizon, cfl_dt(&dbs, 0.7));
        let trace: Vec<Vec12> = grid.times().iter().map(|&t| exact.y(0.0, t)).collect();
        let v0: Vec<Vec6> = (0..=n).map(|j| top6(&exact.y(dbs[0].x(j), 0.0))).collect();
        let z_t: Vec<Vec6> = (0..=n).map(|j| bottom6(&exact.y(dbs[0].x(j), horizon))).collect();
        let data = SidewiseData { trace: &trace, v_initial: &v0, z_terminal: &z_t };
        let side = solve_sidewise(&dbs[0], 0, Direction::Rightward, data, &grid, &opts, Some(&forcing)).unwrap();
        let mut e_side: f64 = 0.0;
        for l in 0..side.n_levels() {
            for j in 0..=n {
                e_side = e_side.max((side.y(l, j) - exact.y(side.x(j), side.level_time(l))).amax());
            }
        }
        (e_fwd, e_side)
    }

    #[test]
    fn manufactured_solution_first_order() {
        let (f1, s1) = manufactured_errors(50);
        let (f2, s2) = manufactured_errors(100);
        let (rf, rs) = (f1 / f2, s1 / s2);
        assert!((1.7..=2.3).contains(&rf), "forward {f1} {f2}");
        assert!((1.7..=2.3).contains(&rs), "sidewise {s1} {s2}");
    }
}
