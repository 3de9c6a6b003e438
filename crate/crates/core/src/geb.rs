//! Conversion between centerline/rotation fields and intrinsic velocity/strain
//! states, compatibility checks and reconstruction.

use crate::beam::{gbar_section, BeamSpec, DiagonalizedBeam};
use crate::error::{Error, Result};
use crate::interp::diff_uniform;
use crate::kinematics::*;
use crate::network::{node_residual, End, NetworkSpec, NodeKind};
use crate::solver::BeamField;

/// Position and rotation of one beam sampled on a uniform (x, t) grid.
#[derive(Debug, Clone, PartialEq)]
pub struct BeamGeometry {
    pub length: f64,
    pub n_cells: usize,
    /// Uniform spacing of the time levels.
    pub dt: f64,
    /// `positions[level][j]`.
    pub positions: Vec<Vec<Vec3>>,
    pub rotations: Vec<Vec<Mat3>>,
}

impl BeamGeometry {
    pub fn from_fn(length: f64, n_cells: usize, dt: f64, n_levels: usize, f: impl Fn(f64, f64) -> (Vec3, Mat3)) -> Self {
        let mut positions = Vec::with_capacity(n_levels);
        let mut rotations = Vec::with_capacity(n_levels);
        for l in 0..n_levels {
            let (p, r): (Vec<Vec3>, Vec<Mat3>) =
                (0..=n_cells).map(|j| f(length * j as f64 / n_cells as f64, dt * l as f64)).unzip();
            positions.push(p);
            rotations.push(r);
        }
        Self { length, n_cells, dt, positions, rotations }
    }

    pub fn n_levels(&self) -> usize {
        self.positions.len()
    }

    pub fn dx(&self) -> f64 {
        self.length / self.n_cells as f64
    }

    pub fn x(&self, j: usize) -> f64 {
        self.dx() * j as f64
    }

    /// Largest deviation of any stored rotation from SO(3).
    pub fn max_drift(&self) -> f64 {
        self.rotations.iter().flatten().map(orthonormality_drift).fold(0.0, f64::max)
    }

    fn check(&self) -> Result<()> {
        if self.n_cells < 2 || self.n_levels() < 3 {
            return Err(Error::InvalidInput("geometry needs at least 3 samples in x and t".into()));
        }
        if self.positions.iter().chain(std::iter::empty()).any(|p| p.len() != self.n_cells + 1)
            || self.rotations.len() != self.n_levels()
            || self.rotations.iter().any(|r| r.len() != self.n_cells + 1)
        {
            return Err(Error::TraceDimensionMismatch("ragged geometry samples".into()));
        }
        let drift = self.max_drift();
        if drift > 1e-7 {
            return Err(Error::NotRotation { drift });
        }
        Ok(())
    }
}

/// vec of a finite-difference generator, allowing the symmetric part the stencil leaves behind.
fn vec_fd(m: &Mat3, h: f64) -> Result<Vec3> {
    let scale = 1.0 + m.norm();
    vec_tol(m, 1e-8 * scale + 10.0 * h * h * scale * scale)
}

/// Strain of a section from ∂x p, ∂x R: (Rᵀ∂x p − e₁; vec(Rᵀ∂x R) − curvature).
fn strain(r: &Mat3, dp: &Vec3, dr: &Mat3, curvature: &Vec3, h: f64) -> Result<Vec6> {
    Ok(stack3(&(r.transpose() * dp - e1()), &(vec_fd(&(r.transpose() * dr), h)? - curvature)))
}

/// Intrinsic state y = (V, W, Φ, Ψ) of a geometry, `[level][j]`.
pub fn transform(geom: &BeamGeometry, spec: &BeamSpec) -> Result<Vec<Vec<Vec12>>> {
    geom.check()?;
    let (dx, dt) = (geom.dx(), geom.dt);
    let n = geom.n_cells;
    let sections: Vec<_> = (0..=n).map(|j| spec.section(geom.x(j))).collect::<Result<_>>()?;
    let curv: Vec<Vec3> = (0..=n).map(|j| spec.rotation.curvature_at(geom.x(j))).collect();
    (0..geom.n_levels())
        .map(|l| {
            (0..=n)
                .map(|j| {
                    let r = &geom.rotations[l][j];
                    let p_t: Vec<Vec3> = geom.positions.iter().map(|p| p[j]).collect();
                    let r_t: Vec<Mat3> = geom.rotations.iter().map(|r| r[j]).collect();
                    let v = r.transpose() * diff_uniform(&p_t, l, dt);
                    let w = vec_fd(&(r.transpose() * diff_uniform(&r_t, l, dt)), dt)?;
                    let dp = diff_uniform(&geom.positions[l], j, dx);
                    let dr = diff_uniform(&geom.rotations[l], j, dx);
                    let z = sections[j].flex_inv * strain(r, &dp, &dr, &curv[j], dx)?;
                    Ok(stack6(&stack3(&v, &w), &z))
                })
                .collect()
        })
        .collect()
}

/// Initial data of one beam in the position/rotation description.
#[derive(Debug, Clone, PartialEq)]
pub struct GebInitial {
    pub length: f64,
    pub p0: Vec<Vec3>,
    pub r0: Vec<Mat3>,
    /// Initial linear velocity, fixed frame.
    pub p1: Vec<Vec3>,
    /// Initial angular velocity, fixed frame.
    pub w0: Vec<Vec3>,
}

impl GebInitial {
    fn n_cells(&self) -> usize {
        self.p0.len() - 1
    }

    fn dx(&self) -> f64 {
        self.length / self.n_cells() as f64
    }

    fn check(&self) -> Result<()> {
        let n = self.p0.len();
        if n < 3 || self.r0.len() != n || self.p1.len() != n || self.w0.len() != n {
            return Err(Error::TraceDimensionMismatch("initial data need equal lengths of at least 3".into()));
        }
        let drift = self.r0.iter().map(orthonormality_drift).fold(0.0, f64::max);
        if drift > 1e-8 {
            return Err(Error::NotRotation { drift });
        }
        Ok(())
    }

    /// Strain (not yet multiplied by C⁻¹) at sample `j`.
    fn strain(&self, spec: &BeamSpec, j: usize) -> Result<Vec6> {
        let dx = self.dx();
        let dp = diff_uniform(&self.p0, j, dx);
        let dr = diff_uniform(&self.r0, j, dx);
        strain(&self.r0[j], &dp, &dr, &spec.rotation.curvature_at(dx * j as f64), dx)
    }
}

/// Undeformed configuration at rest starting from `origin`.
pub fn rest_initial(spec: &BeamSpec, origin: Vec3, n_cells: usize) -> GebInitial {
    let dx = spec.length / n_cells as f64;
    let r0: Vec<Mat3> = (0..=n_cells).map(|j| spec.rotation.at(dx * j as f64)).collect();
    let p0 = rest_centerline(spec, origin, n_cells);
    GebInitial { length: spec.length, p0, r0, p1: vec![Vec3::zeros(); n_cells + 1], w0: vec![Vec3::zeros(); n_cells + 1] }
}

/// p(x) = origin + ∫₀ˣ R e₁ with the rotation refined 8× for the quadrature.
pub fn rest_centerline(spec: &BeamSpec, origin: Vec3, n_cells: usize) -> Vec<Vec3> {
    const REFINE: usize = 8;
    let dx = spec.length / n_cells as f64;
    let h = dx / REFINE as f64;
    let mut p = vec![origin];
    let mut acc = origin;
    let mut prev = spec.rotation.at(0.0) * e1();
    for j in 0..n_cells {
        for s in 1..=REFINE {
            let next = spec.rotation.at(j as f64 * dx + s as f64 * h) * e1();
            acc += (prev + next) * (0.5 * h);
            prev = next;
        }
        p.push(acc);
    }
    p
}

/// Placement of every beam's x = 0 end so that incident ends coincide at rest.
pub fn rest_origins(spec: &NetworkSpec) -> Vec<Vec3> {
    let nb = spec.beams.len();
    let mut origin: Vec<Option<Vec3>> = vec![None; nb];
    let mut node_pos: Vec<Option<Vec3>> = vec![None; spec.nodes.len()];
    let chord = |b: usize| rest_centerline(&spec.beams[b], Vec3::zeros(), 64).last().copied().unwrap_or_default();
    while origin.iter().any(Option::is_none) {
        let seed = node_pos.iter().position(Option::is_some).unwrap_or_else(|| {
            let b = origin.iter().position(Option::is_none).unwrap();
            spec.node_at(b, End::Start).unwrap_or(0)
        });
        if node_pos[seed].is_none() {
            node_pos[seed] = Some(Vec3::zeros());
        }
        let mut changed = true;
        while changed {
            changed = false;
            for b in 0..nb {
                if origin[b].is_some() {
                    continue;
                }
                let [s, f] = spec.beam_nodes(b);
                let start = s.and_then(|n| node_pos[n]);
                let finish = f.and_then(|n| node_pos[n]);
                let o = match (start, finish) {
                    (Some(p), _) => p,
                    (None, Some(p)) => p - chord(b),
                    _ => continue,
                };
                origin[b] = Some(o);
                if let Some(n) = s {
                    node_pos[n].get_or_insert(o);
                }
                if let Some(n) = f {
                    node_pos[n].get_or_insert(o + chord(b));
                }
                changed = true;
            }
        }
        if let Some(b) = origin.iter().position(Option::is_none) {
            // disconnected component
            let n = spec.node_at(b, End::Start).or(spec.node_at(b, End::Finish));
            match n {
                Some(n) if node_pos[n].is_none() => node_pos[n] = Some(Vec3::zeros()),
                _ => origin[b] = Some(Vec3::zeros()),
            }
        }
    }
    origin.into_iter().map(Option::unwrap).collect()
}

/// Intrinsic initial state from initial positions, rotations and velocities.
pub fn igeb_initial_from_geb(data: &GebInitial, spec: &BeamSpec) -> Result<Vec<Vec12>> {
    data.check()?;
    (0..data.p0.len())
        .map(|j| {
            let r = data.r0[j].transpose();
            let v = stack3(&(r * data.p1[j]), &(r * data.w0[j]));
            let z = spec.section(data.dx() * j as f64)?.flex_inv * data.strain(spec, j)?;
            Ok(stack6(&v, &z))
        })
        .collect()
}

/// Body-frame velocity data of a prescribed node motion sampled every `dt`.
pub fn qn_from_dirichlet(positions: &[Vec3], rotations: &[Mat3], dt: f64) -> Result<Vec<Vec6>> {
    if positions.len() != rotations.len() || positions.len() < 3 {
        return Err(Error::TraceDimensionMismatch("nodal motion needs equal lengths of at least 3".into()));
    }
    (0..positions.len())
        .map(|m| {
            let rt = rotations[m].transpose();
            let lin = rt * diff_uniform(positions, m, dt);
            let ang = vec_fd(&(rt * diff_uniform(rotations, m, dt)), dt)?;
            Ok(stack3(&lin, &ang))
        })
        .collect()
}

/// Fixed-frame nodal load from body-frame data: `reference_rest` is the undeformed
/// rotation of the reference beam at the node (ignored at Neumann nodes).
pub fn fn_from_qn(kind: NodeKind, q: &[Vec6], r_trace: &[Mat3], reference_rest: &Mat3) -> Vec<Vec6> {
    q.iter()
        .zip(r_trace)
        .map(|(q, r)| {
            let frame = match kind {
                NodeKind::MultipleKirchhoff => r * reference_rest.transpose(),
                _ => *r,
            };
            rbar(&frame) * q
        })
        .collect()
}

/// One evaluated node condition.
#[derive(Debug, Clone, PartialEq)]
pub struct CompatEntry {
    pub node: usize,
    pub condition: &'static str,
    pub residual: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct CompatReport {
    pub entries: Vec<CompatEntry>,
}

impl CompatReport {
    pub fn max_residual(&self) -> f64 {
        self.entries.iter().map(|e| e.residual).fold(0.0, f64::max)
    }

    fn push(&mut self, node: usize, condition: &'static str, residual: f64) {
        self.entries.push(CompatEntry { node, condition, residual });
    }
}

/// Time derivative of the initial state implied by the equations.
pub fn initial_rate(db: &DiagonalizedBeam, y0: &[Vec12], j: usize) -> Vec12 {
    let c = &db.samples[j];
    let dy = diff_uniform(y0, j, db.dx());
    -c.a * dy - c.bbar * y0[j] + gbar_section(&c.section, &y0[j])
}

/// Node conditions for `y0` with q(0) and for its implied rate with q'(0).
pub fn check_first_order_compat(spec: &NetworkSpec, dbs: &[DiagonalizedBeam], y0: &[Vec<Vec12>]) -> CompatReport {
    let mut report = CompatReport::default();
    let end_index = |b: usize, end: End| if end.is_finish() { y0[b].len() - 1 } else { 0 };
    for (n, node) in spec.nodes.iter().enumerate() {
        let r0 = node_residual(spec, dbs, n, |b, e| y0[b][end_index(b, e)], &node.data.eval(0.0));
        let r1 = node_residual(
            spec,
            dbs,
            n,
            |b, e| initial_rate(&dbs[b], &y0[b], end_index(b, e)),
            &node.data.derivative(0.0),
        );
        report.push(n, "velocity", r0.velocity);
        report.push(n, "force", r0.force);
        report.push(n, "velocity rate", r1.velocity);
        report.push(n, "force rate", r1.force);
    }
    report
}

/// Prescribed motion of a Dirichlet node sampled every `dt` from t = 0.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeMotion {
    pub dt: f64,
    pub positions: Vec<Vec3>,
    pub rotations: Vec<Mat3>,
}

/// Initial data and node data of a network in the position/rotation description.
#[derive(Debug, Clone, PartialEq)]
pub struct GebData {
    pub initial: Vec<GebInitial>,
    /// Indexed by node; only read at Dirichlet nodes.
    pub motions: Vec<Option<NodeMotion>>,
}

/// Compatibility of position/rotation data with the nodal conditions at t = 0.
pub fn check_geb_compat(data: &GebData, spec: &NetworkSpec) -> Result<CompatReport> {
    for d in &data.initial {
        d.check()?;
    }
    let mut report = CompatReport::default();
    let at = |b: usize, end: End| if end.is_finish() { data.initial[b].p0.len() - 1 } else { 0 };
    for (n, node) in spec.nodes.iter().enumerate() {
        let q0 = node.data.eval(0.0);
        match node.kind {
            NodeKind::SimpleDirichlet => {
                let i = node.incidences[0];
                let d = &data.initial[i.beam];
                let j = at(i.beam, i.end);
                let Some(m) = data.motions.get(n).and_then(Option::as_ref) else {
                    return Err(Error::InvalidInput(format!("node {} has no prescribed motion", n + 1)));
                };
                if m.positions.len() < 3 || m.rotations.len() != m.positions.len() {
                    return Err(Error::TraceDimensionMismatch("nodal motion needs equal lengths of at least 3".into()));
                }
                report.push(n, "initial position", (m.positions[0] - d.p0[j]).amax());
                report.push(n, "initial rotation", (m.rotations[0] - d.r0[j]).amax());
                let dp = diff_uniform(&m.positions, 0, m.dt);
                let dr = diff_uniform(&m.rotations, 0, m.dt);
                report.push(n, "initial velocity", (dp - d.p1[j]).amax());
                let w = vec_fd(&(dr * m.rotations[0].transpose()), m.dt)?;
                report.push(n, "initial angular velocity", (w - d.w0[j]).amax());
            }
            NodeKind::SimpleNeumann => {
                let i = node.incidences[0];
                let j = at(i.beam, i.end);
                let spec_b = &spec.beams[i.beam];
                let x = data.initial[i.beam].dx() * j as f64;
                let z = spec_b.section(x)?.flex_inv * data.initial[i.beam].strain(spec_b, j)?;
                report.push(n, "load", (z * i.end.tau() - q0).amax());
            }
            NodeKind::MultipleKirchhoff => {
                let r = node.incidences[0];
                let (dr, jr) = (&data.initial[r.beam], at(r.beam, r.end));
                let rest = |b: usize, j: usize| spec.beams[b].rotation.at(data.initial[b].dx() * j as f64);
                let frame_ref = dr.r0[jr] * rest(r.beam, jr).transpose();
                let (mut pos, mut rot, mut vel, mut ang): (f64, f64, f64, f64) = (0.0, 0.0, 0.0, 0.0);
                let mut balance = -q0;
                for i in &node.incidences {
                    let d = &data.initial[i.beam];
                    let j = at(i.beam, i.end);
                    pos = pos.max((d.p0[j] - dr.p0[jr]).amax());
                    rot = rot.max((d.r0[j] * rest(i.beam, j).transpose() - frame_ref).amax());
                    vel = vel.max((d.p1[j] - dr.p1[jr]).amax());
                    ang = ang.max((d.w0[j] - dr.w0[jr]).amax());
                    let spec_b = &spec.beams[i.beam];
                    let z = spec_b.section(d.dx() * j as f64)?.flex_inv * d.strain(spec_b, j)?;
                    balance += rbar(&rest(i.beam, j)) * z * i.end.tau();
                }
                report.push(n, "position continuity", pos);
                report.push(n, "rigid joint", rot);
                report.push(n, "velocity continuity", vel);
                report.push(n, "angular velocity continuity", ang);
                report.push(n, "load balance", balance.amax());
            }
        }
    }
    Ok(report)
}

/// Where reconstruction starts on one beam.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Anchor {
    pub end: End,
    pub position: Vec3,
    pub rotation: Mat3,
}

/// The beam end whose node has the smallest index.
pub fn default_anchor_end(spec: &NetworkSpec, beam: usize) -> End {
    match spec.beam_nodes(beam) {
        [Some(s), Some(f)] if f < s => End::Finish,
        [None, Some(_)] => End::Finish,
        _ => End::Start,
    }
}

/// Residual of the strain-velocity compatibility equations, interior samples only.
pub fn strain_rate_residual(field: &BeamField, db: &DiagonalizedBeam) -> f64 {
    let n = field.n_cells;
    if field.n_levels() < 3 || n < 2 {
        return 0.0;
    }
    let dt = field.level_time(1) - field.level_time(0);
    let dx = field.dx();
    let strains = strains_of(field, db);
    let mut worst: f64 = 0.0;
    for l in 1..field.n_levels() - 1 {
        let dt_l = 0.5 * (field.level_time(l + 1) - field.level_time(l - 1));
        if (dt_l - dt).abs() > 1e-9 * dt {
            continue;
        }
        for j in 1..n {
            let u = &strains[l][j];
            let du_t = (strains[l + 1][j] - strains[l - 1][j]) * (0.5 / dt);
            let du_x = (strains[l][j + 1] - strains[l][j - 1]) * (0.5 / dx);
            let (u1, u2, u3, u4) = (part3(u, 0), part3(u, 1), part3(u, 2), part3(u, 3));
            let k = db.samples[j].curvature;
            let lin = part3(&du_t, 2) - part3(&du_x, 0) - k.cross(&u1) - e1().cross(&u2) - u2.cross(&u3) - u1.cross(&u4);
            let ang = part3(&du_t, 3) - part3(&du_x, 1) - k.cross(&u2) - u2.cross(&u4);
            worst = worst.max(lin.amax()).max(ang.amax());
        }
    }
    worst
}

/// u = diag(I, C) y at every stored sample.
fn strains_of(field: &BeamField, db: &DiagonalizedBeam) -> Vec<Vec<Vec12>> {
    (0..field.n_levels())
        .map(|l| {
            (0..=field.n_cells)
                .map(|j| {
                    let y = field.y(l, j);
                    stack6(&top6(&y), &(db.samples[j].section.flex * bottom6(&y)))
                })
                .collect()
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct Reconstruction {
    pub geometry: BeamGeometry,
    /// Residual of the strain-velocity compatibility equations.
    pub compat_residual: f64,
    pub warnings: Vec<String>,
}

/// Threshold above which reconstruction warns about incompatible strains.
pub const STRAIN_COMPAT_WARN: f64 = 1e-3;

/// Rebuild position and rotation of one beam from its intrinsic trajectory
/// (requires uniformly spaced stored levels).
pub fn reconstruct(field: &BeamField, db: &DiagonalizedBeam, anchor: &Anchor) -> Result<Reconstruction> {
    let n = field.n_cells;
    let n_levels = field.n_levels();
    if db.samples.len() != n + 1 {
        return Err(Error::TraceDimensionMismatch("field and beam grids differ".into()));
    }
    if n_levels < 2 {
        return Err(Error::InvalidInput("reconstruction needs at least two time levels".into()));
    }
    let dt = field.level_time(1) - field.level_time(0);
    if (1..n_levels).any(|l| ((field.level_time(l) - field.level_time(l - 1)) - dt).abs() > 1e-9 * dt) {
        return Err(Error::InvalidInput("reconstruction needs uniformly spaced time levels".into()));
    }
    let dx = field.dx();
    let u = strains_of(field, db);
    let ja = if anchor.end.is_finish() { n } else { 0 };

    // anchor rotation along t, then along x for each level
    let mut anchor_q = Vec::with_capacity(n_levels);
    let mut q = rot_to_quat(&anchor.rotation);
    anchor_q.push(q);
    for l in 1..n_levels {
        let omega = (part3(&u[l - 1][ja], 1) + part3(&u[l][ja], 1)) * 0.5;
        q = quat_step(&q, &omega, dt);
        anchor_q.push(q);
    }
    let bend = |l: usize, j: usize| part3(&u[l][j], 3) + db.samples[j].curvature;
    let rotations: Vec<Vec<Mat3>> = (0..n_levels)
        .map(|l| {
            let mut qs = vec![anchor_q[l]; n + 1];
            if ja == 0 {
                for j in 1..=n {
                    qs[j] = quat_step(&qs[j - 1], &((bend(l, j - 1) + bend(l, j)) * 0.5), dx);
                }
            } else {
                for j in (0..n).rev() {
                    qs[j] = quat_step(&qs[j + 1], &((bend(l, j) + bend(l, j + 1)) * 0.5), -dx);
                }
            }
            qs.iter().map(quat_to_rot).collect()
        })
        .collect();

    // p(x,t) = p(x,0) + ∫₀ᵗ R u₁ dτ, with p(x,0) = p_anchor + ∫ R (u₃ + e₁) ds at t = 0
    let tangent = |j: usize| rotations[0][j] * (part3(&u[0][j], 2) + e1());
    let mut p_initial = vec![anchor.position; n + 1];
    if ja == 0 {
        for j in 1..=n {
            p_initial[j] = p_initial[j - 1] + (tangent(j - 1) + tangent(j)) * (0.5 * dx);
        }
    } else {
        for j in (0..n).rev() {
            p_initial[j] = p_initial[j + 1] - (tangent(j) + tangent(j + 1)) * (0.5 * dx);
        }
    }
    let mut positions = vec![p_initial];
    for l in 1..n_levels {
        let prev = &positions[l - 1];
        let next: Vec<Vec3> = (0..=n)
            .map(|j| {
                let a = rotations[l - 1][j] * part3(&u[l - 1][j], 0);
                let b = rotations[l][j] * part3(&u[l][j], 0);
                prev[j] + (a + b) * (0.5 * dt)
            })
            .collect();
        positions.push(next);
    }
    let geometry = BeamGeometry { length: field.length, n_cells: n, dt, positions, rotations };
    let drift = geometry.max_drift();
    if drift > 1e-6 {
        return Err(Error::NotRotation { drift });
    }
    let compat_residual = strain_rate_residual(field, db);
    let mut warnings = Vec::new();
    if compat_residual > STRAIN_COMPAT_WARN {
        let msg = format!("strain-velocity compatibility residual {compat_residual:.3e}");
        log::warn!("{msg}");
        warnings.push(msg);
    }
    Ok(Reconstruction { geometry, compat_residual, warnings })
}

/// Pointwise norm of the momentum balance residual of the position/rotation equations, `[level][j]`.
pub fn geb_residual(geom: &BeamGeometry, spec: &BeamSpec) -> Result<Vec<Vec<f64>>> {
    let y = transform(geom, spec)?;
    let n = geom.n_cells;
    let mass: Vec<Mat6> = (0..=n).map(|j| spec.section(geom.x(j)).map(|s| s.mass)).collect::<Result<_>>()?;
    let momentum: Vec<Vec<Vec6>> = (0..geom.n_levels())
        .map(|l| (0..=n).map(|j| rbar(&geom.rotations[l][j]) * mass[j] * top6(&y[l][j])).collect())
        .collect();
    let stress: Vec<Vec<Vec6>> = (0..geom.n_levels())
        .map(|l| (0..=n).map(|j| rbar(&geom.rotations[l][j]) * bottom6(&y[l][j])).collect())
        .collect();
    Ok((0..geom.n_levels())
        .map(|l| {
            (0..=n)
                .map(|j| {
                    let m_t: Vec<Vec6> = momentum.iter().map(|m| m[j]).collect();
                    let lhs = diff_uniform(&m_t, l, geom.dt);
                    let ds = diff_uniform(&stress[l], j, geom.dx());
                    let dp = diff_uniform(&geom.positions[l], j, geom.dx());
                    let couple = dp.cross(&head3(&stress[l][j]));
                    let rhs = ds + stack3(&Vec3::zeros(), &couple);
                    (lhs - rhs).norm()
                })
                .collect()
        })
        .collect())
}

/// Samples next to the grid boundary excluded by [`interior_max`]: the nested
/// one-sided stencils there lose one order.
pub const RESIDUAL_MARGIN: usize = 2;

/// Largest entry of a `[level][j]` residual away from the grid boundary.
pub fn interior_max(residual: &[Vec<f64>]) -> f64 {
    let m = RESIDUAL_MARGIN;
    let levels = residual.len().saturating_sub(m);
    (m..levels)
        .flat_map(|l| {
            let row = &residual[l];
            let hi = row.len().saturating_sub(m);
            row[m.min(hi)..hi].iter().copied()
        })
        .fold(0.0, f64::max)
}

/// Largest mismatch of positions and of R·(rest R)ᵀ across beams at every multiple node.
pub fn joint_mismatch(spec: &NetworkSpec, geoms: &[BeamGeometry]) -> (f64, f64) {
    let (mut pos, mut rot): (f64, f64) = (0.0, 0.0);
    for node in spec.nodes.iter().filter(|n| n.kind == NodeKind::MultipleKirchhoff) {
        let at = |b: usize, end: End| if end.is_finish() { geoms[b].n_cells } else { 0 };
        let frame = |b: usize, end: End, l: usize| {
            let j = at(b, end);
            geoms[b].rotations[l][j] * spec.beams[b].rotation.at(geoms[b].x(j)).transpose()
        };
        let r = node.incidences[0];
        let n_levels = node.incidences.iter().map(|i| geoms[i.beam].n_levels()).min().unwrap_or(0);
        for l in 0..n_levels {
            let p_ref = geoms[r.beam].positions[l][at(r.beam, r.end)];
            let f_ref = frame(r.beam, r.end, l);
            for i in &node.incidences[1..] {
                pos = pos.max((geoms[i.beam].positions[l][at(i.beam, i.end)] - p_ref).amax());
                rot = rot.max((frame(i.beam, i.end, l) - f_ref).amax());
            }
        }
    }
    (pos, rot)
}
