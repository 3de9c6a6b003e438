//! Control-path scheduling on general networks: which edges are solved
//! forward in time, which sidewise from a node, and in what order.

use std::collections::BTreeSet;
use std::fmt;

use crate::beam::DiagonalizedBeam;
use crate::control::{bridged_trace, placeholder_load, series_on_grid, sidewise_from_trace, transmission_time, PROFILE_TOL};
use crate::error::{Error, Result};
use crate::interp::Series;
use crate::kinematics::*;
use crate::network::{node_residual, End, Incidence, NetworkSpec, NodeKind, NodeRecord};
use crate::solver::{cfl_dt, solve_forward, BeamField, Direction, SolverOptions, TimeGrid, Trajectory};

/// Charged nodes carry prescribed profiles, controlled nodes carry the
/// unknown loads, and path edges are solved sidewise.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PlanInput {
    pub charged: Vec<usize>,
    pub controlled: Vec<usize>,
    pub path_edges: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Solve {
    /// Connected subgraph solved forward in time.
    Forward { nodes: Vec<usize>, edges: Vec<usize> },
    /// One edge solved in x starting from `anchor`.
    Sidewise { edge: usize, anchor: usize },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Phase {
    pub step: usize,
    pub solves: Vec<Solve>,
}

impl Phase {
    pub fn is_sidewise(&self) -> bool {
        self.solves.iter().any(|s| matches!(s, Solve::Sidewise { .. }))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Plan {
    pub phases: Vec<Phase>,
}

impl fmt::Display for Plan {
    /// One line per phase, 1-based indices.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for phase in &self.phases {
            let parts: Vec<String> = phase
                .solves
                .iter()
                .map(|s| match s {
                    Solve::Forward { nodes, edges } => format!("forward edges {} on nodes {}", one_based(edges), one_based(nodes)),
                    Solve::Sidewise { edge, anchor } => format!("sidewise edge {} from node {}", edge + 1, anchor + 1),
                })
                .collect();
            writeln!(f, "step {}: {}", phase.step, parts.join("; "))?;
        }
        Ok(())
    }
}

fn one_based(ix: &[usize]) -> String {
    let v: Vec<String> = ix.iter().map(|i| (i + 1).to_string()).collect();
    format!("{{{}}}", v.join(", "))
}

/// Edge endpoints as node indices, start first.
fn edge_ends(spec: &NetworkSpec) -> Result<Vec<[usize; 2]>> {
    (0..spec.beams.len())
        .map(|b| match spec.beam_nodes(b) {
            [Some(a), Some(c)] => Ok([a, c]),
            _ => Err(Error::InvalidInput(format!("beam {} has an end without a node", b + 1))),
        })
        .collect()
}

fn check_input(spec: &NetworkSpec, input: &PlanInput) -> Result<()> {
    let (nn, ne) = (spec.nodes.len(), spec.beams.len());
    if let Some(n) = input.charged.iter().chain(&input.controlled).find(|&&n| n >= nn) {
        return Err(Error::InvalidInput(format!("node {} does not exist", n + 1)));
    }
    if let Some(e) = input.path_edges.iter().find(|&&e| e >= ne) {
        return Err(Error::InvalidInput(format!("edge {} does not exist", e + 1)));
    }
    if let Some(n) = input.charged.iter().find(|n| input.controlled.contains(n)) {
        return Err(Error::InvalidInput(format!("node {} is both charged and controlled", n + 1)));
    }
    Ok(())
}

/// Simple path along path edges from a charged node to a controlled node.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ControlPath {
    pub nodes: Vec<usize>,
    pub edges: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Violation {
    /// Controlled nodes must match the total degree of the charged nodes.
    ControlCount { controlled: usize, required: usize },
    /// No set of paths with distinct targets and only the charged node in common.
    MissingPaths { node: usize },
    /// Every charged node has its paths, but not without crossing another's.
    SharedPaths,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::ControlCount { controlled, required } => {
                write!(f, "{controlled} controlled nodes, the charged nodes need {required}")
            }
            Violation::MissingPaths { node } => write!(f, "node {} lacks disjoint control paths", node + 1),
            Violation::SharedPaths => write!(f, "control paths of different charged nodes intersect"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SufficiencyReport {
    pub violations: Vec<Violation>,
    /// A valid choice of paths, grouped by charged node, when there are no violations.
    pub paths: Vec<Vec<ControlPath>>,
}

impl SufficiencyReport {
    pub fn holds(&self) -> bool {
        self.violations.is_empty()
    }
}

const MAX_CANDIDATE_PATHS: usize = 4096;

fn candidate_paths(ends: &[[usize; 2]], input: &PlanInput, from: usize) -> Vec<ControlPath> {
    let in_s: BTreeSet<usize> = input.path_edges.iter().copied().collect();
    let mut out = Vec::new();
    let mut stack = vec![ControlPath { nodes: vec![from], edges: vec![] }];
    while let Some(p) = stack.pop() {
        if out.len() >= MAX_CANDIDATE_PATHS {
            break;
        }
        let at = *p.nodes.last().unwrap();
        if at != from {
            if input.controlled.contains(&at) {
                out.push(p);
                continue;
            }
            if input.charged.contains(&at) {
                continue;
            }
        }
        for &e in in_s.iter().rev() {
            let [a, b] = ends[e];
            let next = if a == at { b } else if b == at { a } else { continue };
            if p.nodes.contains(&next) {
                continue;
            }
            let mut q = p.clone();
            q.nodes.push(next);
            q.edges.push(e);
            stack.push(q);
        }
    }
    out.sort_by(|a, b| a.edges.cmp(&b.edges));
    out
}

/// Pick `need[i]` paths from `cands[i]` for every i, all node-disjoint apart
/// from each group's own charged node.
fn select(cands: &[Vec<ControlPath>], need: &[usize]) -> Option<Vec<Vec<ControlPath>>> {
    fn go(
        cands: &[Vec<ControlPath>],
        need: &[usize],
        group: usize,
        from: usize,
        used: &mut BTreeSet<usize>,
        chosen: &mut Vec<Vec<ControlPath>>,
    ) -> bool {
        if group == cands.len() {
            return true;
        }
        if chosen[group].len() == need[group] {
            return go(cands, need, group + 1, 0, used, chosen);
        }
        for (k, p) in cands[group].iter().enumerate().skip(from) {
            let tail = &p.nodes[1..];
            if tail.iter().any(|n| used.contains(n)) {
                continue;
            }
            used.extend(tail.iter().copied());
            chosen[group].push(p.clone());
            if go(cands, need, group, k + 1, used, chosen) {
                return true;
            }
            chosen[group].pop();
            for n in tail {
                used.remove(n);
            }
        }
        false
    }
    let mut used: BTreeSet<usize> = BTreeSet::new();
    // a group's charged node may not lie on any other path
    for c in cands {
        if let Some(p) = c.first() {
            used.insert(p.nodes[0]);
        }
    }
    let mut chosen = vec![Vec::new(); cands.len()];
    go(cands, need, 0, 0, &mut used, &mut chosen).then_some(chosen)
}

/// Check the sufficient conditions for the planner to succeed: enough
/// controlled nodes, and disjoint control paths from every charged node.
pub fn check_sufficient_conditions(spec: &NetworkSpec, input: &PlanInput) -> Result<SufficiencyReport> {
    check_input(spec, input)?;
    let ends = edge_ends(spec)?;
    let mut violations = Vec::new();
    let required: usize = input.charged.iter().map(|&n| spec.nodes[n].degree()).sum();
    let controlled = input.controlled.iter().collect::<BTreeSet<_>>().len();
    if controlled != required {
        violations.push(Violation::ControlCount { controlled, required });
    }
    let cands: Vec<Vec<ControlPath>> = input.charged.iter().map(|&n| candidate_paths(&ends, input, n)).collect();
    let need: Vec<usize> = input.charged.iter().map(|&n| spec.nodes[n].degree()).collect();
    let mut each_ok = true;
    for (g, &n) in input.charged.iter().enumerate() {
        if select(&cands[g..=g], &need[g..=g]).is_none() {
            violations.push(Violation::MissingPaths { node: n });
            each_ok = false;
        }
    }
    let joint = if each_ok { select(&cands, &need) } else { None };
    if each_ok && joint.is_none() {
        violations.push(Violation::SharedPaths);
    }
    let paths = if violations.is_empty() { joint.unwrap_or_default() } else { Vec::new() };
    Ok(SufficiencyReport { violations, paths })
}

/// Schedule the solves. Forward subgraphs are taken as connected components
/// with at least one edge; ties go to the smaller index.
pub fn build_plan(spec: &NetworkSpec, input: &PlanInput) -> Result<Plan> {
    check_input(spec, input)?;
    let ends = edge_ends(spec)?;
    let (nn, ne) = (spec.nodes.len(), spec.beams.len());
    let in_s: Vec<bool> = (0..ne).map(|e| input.path_edges.contains(&e)).collect();
    let degree: Vec<usize> = spec.nodes.iter().map(NodeRecord::degree).collect();
    let mut count: Vec<usize> = (0..nn).map(|n| if input.charged.contains(&n) { degree[n].saturating_sub(1) } else { 0 }).collect();
    let mut known: Vec<bool> = (0..nn).map(|n| input.charged.contains(&n)).collect();
    for n in 0..nn {
        if !(0..ne).any(|e| in_s[e] && ends[e].contains(&n)) {
            known[n] = true;
        }
    }
    let mut solved = vec![false; ne];
    let mut phases = Vec::new();
    let mut step = 1;
    while solved.iter().any(|s| !s) {
        let before = solved.iter().filter(|s| **s).count();

        // forward on subgraphs with known data at every node
        let eligible: Vec<usize> = (0..ne).filter(|&e| !in_s[e] && !solved[e] && ends[e].iter().all(|&n| known[n])).collect();
        let mut solves = Vec::new();
        for comp in components(&ends, &eligible) {
            let nodes: BTreeSet<usize> = comp.iter().flat_map(|&e| ends[e]).collect();
            for &n in &nodes {
                count[n] += 1;
            }
            for &e in &comp {
                solved[e] = true;
            }
            solves.push(Solve::Forward { nodes: nodes.into_iter().collect(), edges: comp });
        }
        if !solves.is_empty() {
            phases.push(Phase { step, solves });
            step += 1;
        }

        // sidewise from nodes that have all but one trace
        let snapshot: Vec<usize> = (0..nn).filter(|&n| known[n]).collect();
        let mut solves = Vec::new();
        for n in snapshot {
            if degree[n] == 0 || count[n] != degree[n] - 1 {
                continue;
            }
            let todo: Vec<usize> = (0..ne).filter(|&e| in_s[e] && !solved[e] && ends[e].contains(&n)).collect();
            for e in todo {
                solved[e] = true;
                for m in ends[e] {
                    known[m] = true;
                    count[m] += 1;
                }
                solves.push(Solve::Sidewise { edge: e, anchor: n });
            }
        }
        if !solves.is_empty() {
            phases.push(Phase { step, solves });
            step += 1;
        }

        let after = solved.iter().filter(|s| **s).count();
        if after == before {
            return Err(Error::PlanStalled { step, unsolved: ne - after });
        }
    }
    Ok(Plan { phases })
}

/// Connected components of the given edges, each sorted, ordered by first edge.
fn components(ends: &[[usize; 2]], edges: &[usize]) -> Vec<Vec<usize>> {
    let mut comps: Vec<(BTreeSet<usize>, Vec<usize>)> = Vec::new();
    for &e in edges {
        let touching: Vec<usize> = (0..comps.len()).filter(|&c| ends[e].iter().any(|n| comps[c].0.contains(n))).collect();
        let mut merged = (ends[e].iter().copied().collect::<BTreeSet<_>>(), vec![e]);
        for &c in touching.iter().rev() {
            let (nodes, es) = comps.remove(c);
            merged.0.extend(nodes);
            merged.1.extend(es);
        }
        comps.push(merged);
    }
    let mut out: Vec<Vec<usize>> = comps
        .into_iter()
        .map(|(_, mut es)| {
            es.sort();
            es
        })
        .collect();
    out.sort();
    out
}

/// Sum over the sidewise phases of their slowest transmission time.
pub fn plan_time(plan: &Plan, dbs: &[DiagonalizedBeam]) -> f64 {
    plan.phases
        .iter()
        .map(|p| {
            p.solves
                .iter()
                .filter_map(|s| match s {
                    Solve::Sidewise { edge, .. } => Some(transmission_time(&dbs[*edge])),
                    Solve::Forward { .. } => None,
                })
                .fold(0.0, f64::max)
        })
        .sum()
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlanProblem {
    pub network: NetworkSpec,
    pub initial: Vec<Vec<Vec12>>,
    pub input: PlanInput,
    /// For each charged node, one profile per incidence in stacking order,
    /// valid on `[t_star, horizon]`.
    pub profiles: Vec<Vec<Series<12>>>,
    pub t_star: f64,
    pub horizon: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlanOutcome {
    pub grid: TimeGrid,
    pub plan: Plan,
    pub plan_time: f64,
    /// Loads at each controlled node, at every time level.
    pub controls: Vec<(usize, Vec<Vec6>)>,
    pub trajectory: Trajectory,
    pub preliminary: Trajectory,
    pub warnings: Vec<String>,
}

/// Trace of `target` implied at a multiple node by the traces of the other
/// incident beams: velocity rotated from the first known beam, load from the balance.
fn complete_trace(
    dbs: &[DiagonalizedBeam],
    target: Incidence,
    known: &[(Incidence, &[Vec12])],
    q: &Series<6>,
    grid: &TimeGrid,
) -> Vec<Vec12> {
    let rbar = |i: Incidence| dbs[i.beam].rbar_end(i.end.is_finish());
    let rt = rbar(target).transpose();
    let (ri, rv) = known[0];
    (0..=grid.n_steps)
        .map(|m| {
            let v = rt * (rbar(ri) * top6(&rv[m]));
            let mut rest = q.eval(grid.time(m));
            for (i, tr) in known {
                rest -= rbar(*i) * bottom6(&tr[m]) * i.end.tau();
            }
            stack6(&v, &(rt * rest * target.end.tau()))
        })
        .collect()
}

fn unavailable(what: String) -> Error {
    Error::TraceUnavailable(what)
}

struct Executor<'a> {
    problem: &'a PlanProblem,
    dbs: &'a [DiagonalizedBeam],
    grid: TimeGrid,
    opts: &'a SolverOptions,
    fields: Vec<Option<BeamField>>,
    /// Node traces of the charged nodes, in stacking order.
    charged: Vec<(usize, Vec<(Incidence, Vec<Vec12>)>)>,
}

impl Executor<'_> {
    fn spec(&self) -> &NetworkSpec {
        &self.problem.network
    }

    fn solved_trace(&self, i: Incidence) -> Option<&[Vec12]> {
        self.fields[i.beam].as_ref().map(|f| f.trace(i.end))
    }

    fn anchor_trace(&self, edge: usize, anchor: usize) -> Result<(Vec<Vec12>, Direction)> {
        let rec = &self.spec().nodes[anchor];
        let target = rec.incidence_of(edge).ok_or_else(|| unavailable(format!("edge {} misses node {}", edge + 1, anchor + 1)))?;
        let direction = if target.end.is_finish() { Direction::Leftward } else { Direction::Rightward };
        if let Some((_, traces)) = self.charged.iter().find(|(n, _)| *n == anchor) {
            let (_, tr) = traces.iter().find(|(i, _)| i.beam == edge).unwrap();
            return Ok((tr.clone(), direction));
        }
        if rec.kind != NodeKind::MultipleKirchhoff {
            return Err(unavailable(format!("node {} is a free or clamped end without profile", anchor + 1)));
        }
        let mut known = Vec::new();
        for i in rec.ordered().into_iter().filter(|i| i.beam != edge) {
            let tr = self
                .solved_trace(i)
                .ok_or_else(|| unavailable(format!("edge {} at node {} is not solved yet", i.beam + 1, anchor + 1)))?;
            known.push((i, tr));
        }
        Ok((complete_trace(self.dbs, target, &known, &rec.data, &self.grid), direction))
    }

    fn run_sidewise(&mut self, pending: Vec<(usize, usize)>) -> Result<()> {
        let mut pending = pending;
        while !pending.is_empty() {
            let mut ready = Vec::new();
            let mut later = Vec::new();
            for (edge, anchor) in pending {
                match self.anchor_trace(edge, anchor) {
                    Ok((tr, dir)) => ready.push((edge, tr, dir)),
                    Err(Error::TraceUnavailable(msg)) => later.push((edge, anchor, msg)),
                    Err(e) => return Err(e),
                }
            }
            if ready.is_empty() {
                let (_, _, msg) = later.swap_remove(0);
                return Err(Error::TraceUnavailable(msg));
            }
            let (p, dbs, grid, opts) = (self.problem, self.dbs, &self.grid, self.opts);
            let out = opts.execution.map(&ready, |_, (e, tr, dir)| sidewise_from_trace(&dbs[*e], *e, &p.initial[*e], tr, *dir, grid, opts));
            for ((e, _, _), f) in ready.iter().zip(out) {
                self.fields[*e] = Some(f?);
            }
            pending = later.into_iter().map(|(e, a, _)| (e, a)).collect();
        }
        Ok(())
    }

    fn run_forward(&mut self, edges: &[usize]) -> Result<()> {
        let spec = self.spec();
        let local = |b: usize| edges.iter().position(|&e| e == b);
        let mut nodes = Vec::new();
        let mut seen = BTreeSet::new();
        for &e in edges {
            for n in spec.beam_nodes(e).into_iter().flatten() {
                if !seen.insert(n) {
                    continue;
                }
                let rec = &spec.nodes[n];
                if rec.incidences.iter().all(|i| local(i.beam).is_some()) {
                    if self.problem.input.controlled.contains(&n) {
                        return Err(unavailable(format!("controlled node {} inside a forward subgraph", n + 1)));
                    }
                    let ends: Vec<(usize, End)> = rec.incidences.iter().map(|i| (local(i.beam).unwrap(), i.end)).collect();
                    nodes.push(NodeRecord::new(rec.kind, &ends, rec.data.clone()));
                    continue;
                }
                // velocities at the boundary of the subgraph come from a solved neighbor
                let (ri, rv) = rec
                    .ordered()
                    .into_iter()
                    .find_map(|i| self.solved_trace(i).map(|t| (i, t)))
                    .ok_or_else(|| unavailable(format!("no solved edge at node {}", n + 1)))?;
                let rref = self.dbs[ri.beam].rbar_end(ri.end.is_finish());
                for i in rec.incidences.iter().filter(|i| local(i.beam).is_some()) {
                    let rt = self.dbs[i.beam].rbar_end(i.end.is_finish()).transpose();
                    let v: Vec<Vec6> = rv.iter().map(|y| rt * (rref * top6(y))).collect();
                    let data = series_on_grid(&self.grid, v)?;
                    nodes.push(NodeRecord::new(NodeKind::SimpleDirichlet, &[(local(i.beam).unwrap(), i.end)], data));
                }
            }
        }
        let sub = NetworkSpec { beams: edges.iter().map(|&e| spec.beams[e].clone()).collect(), nodes };
        let sub_dbs: Vec<DiagonalizedBeam> = edges.iter().map(|&e| self.dbs[e].clone()).collect();
        let sub_y0: Vec<Vec<Vec12>> = edges.iter().map(|&e| self.problem.initial[e].clone()).collect();
        let traj = solve_forward(&sub, &sub_dbs, &sub_y0, &self.grid, self.opts, None)?;
        for (&e, mut f) in edges.iter().zip(traj.beams) {
            f.warnings.extend(traj.warnings.iter().cloned());
            self.fields[e] = Some(f);
        }
        Ok(())
    }
}

fn check_profiles(problem: &PlanProblem, dbs: &[DiagonalizedBeam], grid: &TimeGrid) -> Result<()> {
    let spec = &problem.network;
    if problem.profiles.len() != problem.input.charged.len() {
        return Err(Error::InvalidInput("one profile set per charged node is required".into()));
    }
    let mut worst: f64 = 0.0;
    for (&n, profiles) in problem.input.charged.iter().zip(&problem.profiles) {
        let order = spec.nodes[n].ordered();
        if profiles.len() != order.len() {
            return Err(Error::InvalidInput(format!("node {} needs {} profiles", n + 1, order.len())));
        }
        if spec.nodes[n].kind == NodeKind::SimpleDirichlet {
            return Err(Error::InvalidInput(format!("charged node {} is clamped", n + 1)));
        }
        for t in grid.times().into_iter().filter(|&t| t >= problem.t_star) {
            let y = |b: usize, _: End| profiles[order.iter().position(|i| i.beam == b).unwrap()].eval(t);
            worst = worst.max(node_residual(spec, dbs, n, y, &spec.nodes[n].data.eval(t)).max());
        }
    }
    if worst > PROFILE_TOL {
        return Err(Error::ProfileIncompatible { residual: worst });
    }
    Ok(())
}

/// Build the plan and run it: a preliminary forward solve up to the plan
/// time, bridged traces at the charged nodes, then the phases in order.
pub fn execute_plan(problem: &PlanProblem, dbs: &[DiagonalizedBeam], opts: &SolverOptions) -> Result<PlanOutcome> {
    let spec = &problem.network;
    if dbs.len() != spec.beams.len() || problem.initial.len() != spec.beams.len() {
        return Err(Error::TraceDimensionMismatch(format!("expected {} beams", spec.beams.len())));
    }
    let plan = build_plan(spec, &problem.input)?;
    let t_bar = plan_time(&plan, dbs);
    if !(problem.t_star > t_bar && problem.horizon > problem.t_star) {
        return Err(Error::InvalidInput(format!(
            "need T = {} > T* = {} > plan time {t_bar}",
            problem.horizon, problem.t_star
        )));
    }
    let grid = TimeGrid::for_horizon(problem.horizon, cfl_dt(dbs, opts.cfl));
    check_profiles(problem, dbs, &grid)?;

    let short = grid.truncated(t_bar);
    let mut pre_net = spec.clone();
    for &n in &problem.input.controlled {
        pre_net.nodes[n].data = placeholder_load(spec, dbs, &problem.initial, n, short.horizon())?;
    }
    let preliminary = solve_forward(&pre_net, dbs, &problem.initial, &short, opts, None)?;

    let mut charged = Vec::new();
    for (&n, profiles) in problem.input.charged.iter().zip(&problem.profiles) {
        let rec = &spec.nodes[n];
        let order = rec.ordered();
        let k = order.len();
        let mut traces: Vec<(Incidence, Vec<Vec12>)> = Vec::new();
        for (i, profile) in order.iter().zip(profiles).take(k.max(2) - 1) {
            let tr = bridged_trace(preliminary.beams[i.beam].trace(i.end), &grid, t_bar, profile, problem.t_star)?;
            traces.push((*i, tr));
        }
        if k == 1 {
            // a free end: measured load replaces the bridged one
            let (i, tr) = &mut traces[0];
            for (m, y) in tr.iter_mut().enumerate() {
                *y = stack6(&top6(y), &(rec.data.eval(grid.time(m)) * i.end.tau()));
            }
        } else {
            let known: Vec<(Incidence, &[Vec12])> = traces.iter().map(|(i, t)| (*i, t.as_slice())).collect();
            let last = complete_trace(dbs, order[k - 1], &known, &rec.data, &grid);
            traces.push((order[k - 1], last));
        }
        charged.push((n, traces));
    }

    let mut ex = Executor { problem, dbs, grid, opts, fields: vec![None; spec.beams.len()], charged };
    for phase in &plan.phases {
        let mut sidewise = Vec::new();
        for s in &phase.solves {
            match s {
                Solve::Forward { edges, .. } => ex.run_forward(edges)?,
                Solve::Sidewise { edge, anchor } => sidewise.push((*edge, *anchor)),
            }
        }
        ex.run_sidewise(sidewise)?;
    }

    let beams: Vec<BeamField> = ex
        .fields
        .into_iter()
        .enumerate()
        .map(|(b, f)| f.ok_or_else(|| unavailable(format!("edge {} was never solved", b + 1))))
        .collect::<Result<_>>()?;
    let mut controls = Vec::new();
    for &n in &problem.input.controlled {
        let rec = &spec.nodes[n];
        if rec.kind != NodeKind::SimpleNeumann {
            return Err(Error::InvalidInput(format!("controlled node {} is not a free end", n + 1)));
        }
        let i = rec.incidences[0];
        controls.push((n, beams[i.beam].trace(i.end).iter().map(|y| bottom6(y) * i.end.tau()).collect()));
    }
    let mut warnings = preliminary.warnings.clone();
    for b in &beams {
        for w in &b.warnings {
            if !warnings.contains(w) {
                warnings.push(w.clone());
            }
        }
    }
    let trajectory = Trajectory { beams, warnings: warnings.clone() };
    Ok(PlanOutcome { grid, plan, plan_time: t_bar, controls, trajectory, preliminary, warnings })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::control::{synthesize, ControlProblem};
    use crate::fixtures;
    use crate::par::Execution;
    use proptest::prelude::*;

    fn a_input() -> PlanInput {
        PlanInput { charged: vec![0], controlled: vec![3, 4], path_edges: vec![0, 1, 3, 4] }
    }

    fn sidewise(edge: usize, anchor: usize) -> Solve {
        Solve::Sidewise { edge, anchor }
    }

    /// Two charged leaves routed through one hub towards two controlled leaves.
    fn crossing() -> (NetworkSpec, PlanInput) {
        let z = Series::zeros;
        let beams = vec![fixtures::unit_beam(Mat3::identity()); 4];
        let nodes = vec![
            NodeRecord::new(NodeKind::SimpleNeumann, &[(0, End::Start)], z()),
            NodeRecord::new(NodeKind::SimpleNeumann, &[(1, End::Start)], z()),
            NodeRecord::new(NodeKind::MultipleKirchhoff, &[(0, End::Finish), (1, End::Finish), (2, End::Start), (3, End::Start)], z()),
            NodeRecord::new(NodeKind::SimpleNeumann, &[(2, End::Finish)], z()),
            NodeRecord::new(NodeKind::SimpleNeumann, &[(3, End::Finish)], z()),
        ];
        (NetworkSpec { beams, nodes }, PlanInput { charged: vec![0, 1], controlled: vec![3, 4], path_edges: vec![0, 1, 2, 3] })
    }

    #[test]
    fn a_network_plan() {
        let plan = build_plan(&fixtures::unit_a_network(), &a_input()).unwrap();
        let expected = vec![
            Phase { step: 1, solves: vec![sidewise(0, 0), sidewise(1, 0)] },
            Phase { step: 2, solves: vec![Solve::Forward { nodes: vec![1, 2], edges: vec![2] }] },
            Phase { step: 3, solves: vec![sidewise(3, 1), sidewise(4, 2)] },
        ];
        assert_eq!(plan.phases, expected);
        let listing = plan.to_string();
        assert_eq!(
            listing,
            "step 1: sidewise edge 1 from node 1; sidewise edge 2 from node 1\n\
             step 2: forward edges {3} on nodes {2, 3}\n\
             step 3: sidewise edge 4 from node 2; sidewise edge 5 from node 3\n"
        );
        let dbs = fixtures::unit_a_network().diagonalize_uniform(10, Execution::Sequential).unwrap();
        assert!((plan_time(&plan, &dbs) - 2.0).abs() < 1e-13);
    }

    #[test]
    fn path_and_star_plans() {
        let path = fixtures::path_network(2);
        let input = PlanInput { charged: vec![0], controlled: vec![2], path_edges: vec![0, 1] };
        let plan = build_plan(&path, &input).unwrap();
        assert_eq!(
            plan.phases,
            vec![Phase { step: 1, solves: vec![sidewise(0, 0)] }, Phase { step: 2, solves: vec![sidewise(1, 1)] }]
        );
        let star = fixtures::star_network(3);
        let input = PlanInput { charged: vec![0], controlled: vec![1, 2, 3], path_edges: vec![0, 1, 2] };
        let plan = build_plan(&star, &input).unwrap();
        assert_eq!(plan.phases, vec![Phase { step: 1, solves: vec![sidewise(0, 0), sidewise(1, 0), sidewise(2, 0)] }]);
    }

    #[test]
    fn sufficient_conditions_fixtures() {
        let holds = |spec: &NetworkSpec, input: &PlanInput| check_sufficient_conditions(spec, input).unwrap();
        let a = holds(&fixtures::unit_a_network(), &a_input());
        assert!(a.holds());
        assert_eq!(a.paths[0].iter().map(|p| p.edges.clone()).collect::<Vec<_>>(), vec![vec![0, 3], vec![1, 4]]);
        let path_input = PlanInput { charged: vec![0], controlled: vec![2], path_edges: vec![0, 1] };
        assert!(holds(&fixtures::path_network(2), &path_input).holds());
        let star_input = PlanInput { charged: vec![0], controlled: vec![1, 2, 3], path_edges: vec![0, 1, 2] };
        assert!(holds(&fixtures::star_network(3), &star_input).holds());

        let few = PlanInput { controlled: vec![3], ..a_input() };
        assert!(holds(&fixtures::unit_a_network(), &few).violations.contains(&Violation::ControlCount { controlled: 1, required: 2 }));
        let short = PlanInput { path_edges: vec![0], ..path_input };
        assert_eq!(holds(&fixtures::path_network(2), &short).violations, vec![Violation::MissingPaths { node: 0 }]);
        let (net, input) = crossing();
        assert_eq!(holds(&net, &input).violations, vec![Violation::SharedPaths]);
    }

    #[test]
    fn stalls_are_reported() {
        let path = fixtures::path_network(2);
        let input = PlanInput { charged: vec![0], controlled: vec![2], path_edges: vec![1] };
        assert!(matches!(build_plan(&path, &input), Err(Error::PlanStalled { unsolved: 2, .. })));
        let bad = PlanInput { charged: vec![7], ..input };
        assert!(matches!(build_plan(&path, &bad), Err(Error::InvalidInput(_))));
    }

    #[test]
    fn crossing_paths_stall() {
        // the hub is left with two unknown traces
        let (net, input) = crossing();
        assert!(matches!(build_plan(&net, &input), Err(Error::PlanStalled { step: 2, unsolved: 2 })));
    }

    fn a_problem(v: Vec3, dbs: &[DiagonalizedBeam]) -> (ControlProblem, PlanProblem) {
        let net = fixtures::unit_a_network();
        let n = dbs[0].n_cells();
        let initial: Vec<Vec<Vec12>> = dbs
            .iter()
            .enumerate()
            .map(|(b, db)| {
                (0..=n)
                    .map(|j| {
                        let w = 1e-3 * ((b + 1) as f64 * db.x(j)).sin();
                        stack6(&stack3(&(db.rotation_ends[0].transpose() * v), &Vec3::new(0.0, 0.0, w)), &Vec6::zeros())
                    })
                    .collect()
            })
            .collect();
        let profiles = [Series::constant(Vec12::zeros()), Series::constant(Vec12::zeros())];
        let control = ControlProblem { network: net.clone(), initial: initial.clone(), profiles: profiles.clone(), t_star: 2.5, horizon: 3.5 };
        let plan = PlanProblem { network: net, initial, input: a_input(), profiles: vec![profiles.to_vec()], t_star: 2.5, horizon: 3.5 };
        (control, plan)
    }

    #[test]
    fn execution_matches_a_network_synthesis() {
        let net = fixtures::unit_a_network();
        let dbs = net.diagonalize_uniform(16, Execution::Sequential).unwrap();
        let (control, plan) = a_problem(Vec3::zeros(), &dbs);
        let opts = SolverOptions::default();
        let a = synthesize(&control, &dbs, &opts).unwrap();
        let b = execute_plan(&plan, &dbs, &opts).unwrap();
        assert!(a.trajectory.max_abs() > 1e-5);
        assert_eq!(a.grid, b.grid);
        for k in 0..2 {
            assert_eq!(b.controls[k].0, 3 + k);
            for (x, y) in a.controls[k].iter().zip(&b.controls[k].1) {
                assert!((x - y).amax() < 1e-12);
            }
        }
        for (fa, fb) in a.trajectory.beams.iter().zip(&b.trajectory.beams) {
            assert_eq!(fa.n_levels(), fb.n_levels());
            for l in 0..fa.n_levels() {
                for j in 0..=fa.n_cells {
                    assert!((fa.y(l, j) - fb.y(l, j)).amax() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn execution_on_a_path() {
        let net = fixtures::path_network(2);
        let dbs = net.diagonalize_uniform(16, Execution::Sequential).unwrap();
        let initial = vec![vec![Vec12::zeros(); 17]; 2];
        let input = PlanInput { charged: vec![0], controlled: vec![2], path_edges: vec![0, 1] };
        let problem = PlanProblem { network: net, initial, input, profiles: vec![vec![Series::constant(Vec12::zeros())]], t_star: 2.5, horizon: 3.0 };
        let out = execute_plan(&problem, &dbs, &SolverOptions::default()).unwrap();
        assert_eq!(out.plan_time, 2.0);
        assert!(out.controls[0].1.iter().all(|q| q.amax() == 0.0));
        assert_eq!(out.trajectory.max_abs(), 0.0);
    }

    proptest! {
        #[test]
        fn chain_plans_walk_the_path(edges in 1usize..7) {
            let net = fixtures::path_network(edges);
            let input = PlanInput { charged: vec![0], controlled: vec![edges], path_edges: (0..edges).collect() };
            let plan = build_plan(&net, &input).unwrap();
            prop_assert_eq!(plan.phases.len(), edges);
            for (k, p) in plan.phases.iter().enumerate() {
                prop_assert_eq!(&p.solves, &vec![sidewise(k, k)]);
                prop_assert_eq!(p.step, k + 1);
            }
            prop_assert!(check_sufficient_conditions(&net, &input).unwrap().holds());
        }

        #[test]
        fn every_edge_solved_once(k in 1usize..6, charged_center in any::<bool>()) {
            let net = fixtures::star_network(k);
            let input = if charged_center {
                PlanInput { charged: vec![0], controlled: (1..=k).collect(), path_edges: (0..k).collect() }
            } else {
                PlanInput { charged: vec![1], controlled: vec![], path_edges: vec![0] }
            };
            if let Ok(plan) = build_plan(&net, &input) {
                let mut seen = vec![0; k];
                for s in plan.phases.iter().flat_map(|p| &p.solves) {
                    match s {
                        Solve::Sidewise { edge, .. } => seen[*edge] += 1,
                        Solve::Forward { edges, .. } => edges.iter().for_each(|e| seen[*e] += 1),
                    }
                }
                prop_assert!(seen.iter().all(|&c| c == 1));
            }
        }
    }
}
