//! Network topology, nodal data, and the node coupling in Riemann variables.

use nalgebra::{DMatrix, DVector};

use crate::beam::{diagonalize, BeamSpec, DiagonalizedBeam};
use crate::error::{Error, Result};
use crate::interp::Series;
use crate::kinematics::*;
use crate::par::Execution;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum NodeKind {
    /// Rigid joint: velocity continuity plus Kirchhoff balance.
    MultipleKirchhoff,
    /// Free end with prescribed force/moment.
    SimpleNeumann,
    /// End with prescribed velocity.
    SimpleDirichlet,
}

/// Which end of a beam touches a node.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum End {
    /// x = 0
    Start,
    /// x = ℓ
    Finish,
}

impl End {
    pub fn tau(self) -> f64 {
        match self {
            End::Start => -1.0,
            End::Finish => 1.0,
        }
    }

    pub fn is_finish(self) -> bool {
        self == End::Finish
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Incidence {
    pub beam: usize,
    pub end: End,
    /// Outward orientation sign, −1 at x = 0 and +1 at x = ℓ.
    pub tau: i8,
}

impl Incidence {
    pub fn new(beam: usize, end: End) -> Self {
        Self { beam, end, tau: end.tau() as i8 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NodeRecord {
    pub kind: NodeKind,
    /// Sorted by beam index.
    pub incidences: Vec<Incidence>,
    /// Number of incident beams ending (x = ℓ) here.
    pub ending_count: usize,
    /// q_n(t).
    pub data: Series<6>,
}

impl NodeRecord {
    pub fn new(kind: NodeKind, ends: &[(usize, End)], data: Series<6>) -> Self {
        let mut incidences: Vec<Incidence> = ends.iter().map(|&(b, e)| Incidence::new(b, e)).collect();
        incidences.sort_by_key(|i| (i.beam, i.end));
        let ending_count = incidences.iter().filter(|i| i.end.is_finish()).count();
        Self { kind, incidences, ending_count, data }
    }

    pub fn degree(&self) -> usize {
        self.incidences.len()
    }

    /// i^n, the smallest incident beam index.
    pub fn reference_beam(&self) -> usize {
        self.incidences[0].beam
    }

    pub fn incidence_of(&self, beam: usize) -> Option<Incidence> {
        self.incidences.iter().copied().find(|i| i.beam == beam)
    }

    /// Stacking order of the node coupling: ending beams ascending, then starting beams ascending.
    pub fn ordered(&self) -> Vec<Incidence> {
        let mut out: Vec<Incidence> = self.incidences.iter().copied().filter(|i| i.end.is_finish()).collect();
        out.extend(self.incidences.iter().copied().filter(|i| !i.end.is_finish()));
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NetworkSpec {
    pub beams: Vec<BeamSpec>,
    pub nodes: Vec<NodeRecord>,
}

impl NetworkSpec {
    /// Node holding the given beam end.
    pub fn node_at(&self, beam: usize, end: End) -> Option<usize> {
        self.nodes.iter().position(|n| n.incidences.iter().any(|i| i.beam == beam && i.end == end))
    }

    pub fn beam_nodes(&self, beam: usize) -> [Option<usize>; 2] {
        [self.node_at(beam, End::Start), self.node_at(beam, End::Finish)]
    }

    /// Diagonalize every beam with `n_cells[i] + 1` samples.
    pub fn diagonalize(&self, n_cells: &[usize], exec: Execution) -> Result<Vec<DiagonalizedBeam>> {
        if n_cells.len() != self.beams.len() {
            return Err(Error::InvalidInput(format!("{} cell counts for {} beams", n_cells.len(), self.beams.len())));
        }
        exec.map(&self.beams, |i, b| diagonalize(b, n_cells[i] + 1)).into_iter().collect()
    }

    pub fn diagonalize_uniform(&self, n_cells: usize, exec: Execution) -> Result<Vec<DiagonalizedBeam>> {
        self.diagonalize(&vec![n_cells; self.beams.len()], exec)
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ValidationReport {
    pub violations: Vec<String>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }
}

pub fn validate(spec: &NetworkSpec) -> ValidationReport {
    let mut v = Vec::new();
    for (i, b) in spec.beams.iter().enumerate() {
        v.extend(b.validate().into_iter().map(|m| format!("beam {}: {m}", i + 1)));
    }
    let mut seen = vec![[0usize; 2]; spec.beams.len()];
    for (n, node) in spec.nodes.iter().enumerate() {
        let label = n + 1;
        let k = node.degree();
        if k == 0 {
            v.push(format!("node {label}: no incident beams"));
            continue;
        }
        match node.kind {
            NodeKind::MultipleKirchhoff if k < 2 => v.push(format!("node {label}: multiple node with degree {k}")),
            NodeKind::SimpleNeumann | NodeKind::SimpleDirichlet if k != 1 => {
                v.push(format!("node {label}: simple node with degree {k}"))
            }
            _ => {}
        }
        if node.incidences.windows(2).any(|w| w[0].beam >= w[1].beam) {
            v.push(format!("node {label}: incidences not strictly ascending (a beam may touch a node once)"));
        }
        for inc in &node.incidences {
            if inc.beam >= spec.beams.len() {
                v.push(format!("node {label}: unknown beam {}", inc.beam + 1));
                continue;
            }
            if (inc.tau == -1) != (inc.end == End::Start) || inc.tau.abs() != 1 {
                v.push(format!("node {label}: sign {} inconsistent with endpoint of beam {}", inc.tau, inc.beam + 1));
            }
            seen[inc.beam][inc.end as usize] += 1;
        }
        let ending = node.incidences.iter().filter(|i| i.end.is_finish()).count();
        if ending != node.ending_count {
            v.push(format!("node {label}: ending count {} but {ending} beams end here", node.ending_count));
        }
    }
    for (i, s) in seen.iter().enumerate() {
        for (e, name) in [(0, "x = 0"), (1, "x = l")] {
            if s[e] != 1 {
                v.push(format!("beam {} endpoint {name} belongs to {} nodes", i + 1, s[e]));
            }
        }
    }
    ValidationReport { violations: v }
}

fn end_sample(db: &DiagonalizedBeam, end: End) -> &crate::beam::Coefficients {
    match end {
        End::Start => &db.samples[0],
        End::Finish => db.samples.last().unwrap(),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NodeMatrices {
    pub incidence: Incidence,
    pub gamma: Mat6,
    pub sigma: Mat6,
}

/// γ and σ of every incident beam, in coupling order.
pub fn node_matrices(spec: &NetworkSpec, dbs: &[DiagonalizedBeam], n: usize) -> Result<Vec<NodeMatrices>> {
    spec.nodes[n]
        .ordered()
        .into_iter()
        .map(|inc| {
            let db = &dbs[inc.beam];
            let c = end_sample(db, inc.end);
            let rb = db.rbar_end(inc.end.is_finish());
            let dinv = Mat6::from_diagonal(&c.d.map(|d| 1.0 / d));
            let gamma = rb * c.flex_sqrt * c.u.transpose();
            let left = rb * c.flex_inv_sqrt * c.u.transpose();
            let sigma = left * dinv * left.transpose();
            let identity = (sigma * gamma - left * dinv).norm();
            if identity > 1e-9 * (1.0 + sigma.norm() * gamma.norm()) || sigma.cholesky().is_none() {
                return Err(Error::NotSpd { what: format!("sigma of beam {} at node {}", inc.beam + 1, n + 1) });
            }
            Ok(NodeMatrices { incidence: inc, gamma, sigma })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct NodeCoupling {
    pub node: usize,
    pub kind: NodeKind,
    pub order: Vec<Incidence>,
    pub gammas: Vec<Mat6>,
    pub sigmas: Vec<Mat6>,
    /// ℬ_n, size 6k × 6k.
    pub bcal: DMatrix<f64>,
    /// The first six columns of 𝒬_n, size 6k × 6.
    pub qcal: DMatrix<f64>,
}

fn checked_solve(a: &DMatrix<f64>, b: &DMatrix<f64>, node: usize) -> Result<DMatrix<f64>> {
    let x = a.clone().lu().solve(b).ok_or(Error::SingularNodeMatrix { node, residual: f64::INFINITY })?;
    let residual = (a * &x - b).norm() / (1.0 + b.norm());
    if !(residual <= 1e-8) {
        return Err(Error::SingularNodeMatrix { node, residual });
    }
    Ok(x)
}

fn put(m: &mut DMatrix<f64>, bi: usize, bj: usize, block: &Mat6) {
    m.view_mut((6 * bi, 6 * bj), (6, 6)).copy_from(block);
}

pub fn assemble_coupling(spec: &NetworkSpec, dbs: &[DiagonalizedBeam], n: usize) -> Result<NodeCoupling> {
    let node = &spec.nodes[n];
    let mats = node_matrices(spec, dbs, n)?;
    let k = mats.len();
    let order: Vec<Incidence> = mats.iter().map(|m| m.incidence).collect();
    let gammas: Vec<Mat6> = mats.iter().map(|m| m.gamma).collect();
    let sigmas: Vec<Mat6> = mats.iter().map(|m| m.sigma).collect();
    let (bcal, qcal) = match node.kind {
        NodeKind::MultipleKirchhoff => {
            let i6 = Mat6::identity();
            let mut a = DMatrix::zeros(6 * k, 6 * k);
            let mut b = DMatrix::zeros(6 * k, 6 * k);
            let mut g = DMatrix::zeros(6 * k, 6 * k);
            for (alpha, s) in sigmas.iter().enumerate() {
                put(&mut a, 0, alpha, s);
                put(&mut b, 0, alpha, s);
                put(&mut g, alpha, alpha, &gammas[alpha]);
                if alpha > 0 {
                    put(&mut a, alpha, 0, &(-i6));
                    put(&mut a, alpha, alpha, &i6);
                    put(&mut b, alpha, 0, &i6);
                    put(&mut b, alpha, alpha, &(-i6));
                }
            }
            let a_inv_bg = checked_solve(&a, &(&b * &g), n)?;
            let bcal = checked_solve(&g, &a_inv_bg, n)?;
            let mut pad = DMatrix::zeros(6 * k, 6);
            pad.view_mut((0, 0), (6, 6)).fill_with_identity();
            let a_inv_pad = checked_solve(&a, &(pad * 2.0), n)?;
            (bcal, checked_solve(&g, &a_inv_pad, n)?)
        }
        NodeKind::SimpleNeumann | NodeKind::SimpleDirichlet => {
            let c = end_sample(&dbs[order[0].beam], order[0].end);
            let neumann = node.kind == NodeKind::SimpleNeumann;
            let sign = if neumann { 1.0 } else { -1.0 };
            // out = ±in + 2 (DUC^{1/2}) q for Neumann, 2 (UC^{-1/2}) q for Dirichlet, on either side
            let block = if neumann { c.l_force() } else { c.l_velocity() } * 2.0;
            (DMatrix::identity(6, 6) * sign, DMatrix::from_fn(6, 6, |r, s| block[(r, s)]))
        }
    };
    Ok(NodeCoupling { node: n, kind: node.kind, order, gammas, sigmas, bcal, qcal })
}

pub fn assemble_all(spec: &NetworkSpec, dbs: &[DiagonalizedBeam]) -> Result<Vec<NodeCoupling>> {
    (0..spec.nodes.len()).map(|n| assemble_coupling(spec, dbs, n)).collect()
}

impl NodeCoupling {
    /// Stack (r_out, r_in) from the endpoint Riemann states given in coupling order.
    pub fn split_out_in(&self, states: &[Vec12]) -> (DVector<f64>, DVector<f64>) {
        let k = self.order.len();
        let mut out = DVector::zeros(6 * k);
        let mut inc = DVector::zeros(6 * k);
        for (alpha, (o, r)) in self.order.iter().zip(states).enumerate() {
            let (leaving, entering) = if o.end.is_finish() { (top6(r), bottom6(r)) } else { (bottom6(r), top6(r)) };
            out.rows_mut(6 * alpha, 6).copy_from(&leaving);
            inc.rows_mut(6 * alpha, 6).copy_from(&entering);
        }
        (out, inc)
    }

    /// Inverse of [`split_out_in`].
    pub fn merge(&self, out: &DVector<f64>, inc: &DVector<f64>) -> Vec<Vec12> {
        self.order
            .iter()
            .enumerate()
            .map(|(alpha, o)| {
                let leaving: Vec6 = out.fixed_rows::<6>(6 * alpha).into_owned();
                let entering: Vec6 = inc.fixed_rows::<6>(6 * alpha).into_owned();
                if o.end.is_finish() {
                    stack6(&leaving, &entering)
                } else {
                    stack6(&entering, &leaving)
                }
            })
            .collect()
    }

    /// r_out = ℬ r_in + 𝒬 (q; 0).
    pub fn apply(&self, r_in: &DVector<f64>, q: &Vec6) -> DVector<f64> {
        let qv = DVector::from_column_slice(q.as_slice());
        &self.bcal * r_in + &self.qcal * qv
    }
}

pub fn split_out_in(coupling: &NodeCoupling, states: &[Vec12]) -> (DVector<f64>, DVector<f64>) {
    coupling.split_out_in(states)
}

pub fn apply_node(coupling: &NodeCoupling, r_in: &DVector<f64>, q: &Vec6) -> DVector<f64> {
    coupling.apply(r_in, q)
}

/// Residuals of the physical node conditions.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct NodeResidual {
    /// Velocity continuity (or the Dirichlet condition).
    pub velocity: f64,
    /// Kirchhoff balance (or the Neumann condition).
    pub force: f64,
}

impl NodeResidual {
    pub fn max(&self) -> f64 {
        self.velocity.max(self.force)
    }
}

/// Evaluate the physical conditions at node `n` for endpoint states `y(beam, end)` and data `q`.
pub fn node_residual(
    spec: &NetworkSpec,
    dbs: &[DiagonalizedBeam],
    n: usize,
    y: impl Fn(usize, End) -> Vec12,
    q: &Vec6,
) -> NodeResidual {
    let node = &spec.nodes[n];
    match node.kind {
        NodeKind::SimpleNeumann => {
            let i = node.incidences[0];
            NodeResidual { velocity: 0.0, force: (bottom6(&y(i.beam, i.end)) * i.end.tau() - q).amax() }
        }
        NodeKind::SimpleDirichlet => {
            let i = node.incidences[0];
            NodeResidual { velocity: (top6(&y(i.beam, i.end)) - q).amax(), force: 0.0 }
        }
        NodeKind::MultipleKirchhoff => {
            let r = node.incidences[0];
            let v_ref = dbs[r.beam].rbar_end(r.end.is_finish()) * top6(&y(r.beam, r.end));
            let mut velocity: f64 = 0.0;
            let mut balance = -q;
            for i in &node.incidences {
                let rb = dbs[i.beam].rbar_end(i.end.is_finish());
                let yi = y(i.beam, i.end);
                velocity = velocity.max((rb * top6(&yi) - v_ref).amax());
                balance += rb * bottom6(&yi) * i.end.tau();
            }
            NodeResidual { velocity, force: balance.amax() }
        }
    }
}
