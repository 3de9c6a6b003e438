//! Per-beam coefficients of the intrinsic system and their Riemann (diagonal) form.

use nalgebra::{Cholesky, SymmetricEigen, U6};

use crate::error::{Error, Result};
use crate::interp::{diff_uniform, Spline};
use crate::kinematics::*;

/// Overlap below which eigenvector continuity is declared lost.
pub const MIN_OVERLAP: f64 = 0.9;
/// Relative gap below which eigenvalues are treated as one cluster.
const CLUSTER_GAP: f64 = 1e-8;

/// A 6×6 coefficient field along a beam.
#[derive(Debug, Clone, PartialEq)]
pub enum MatrixField {
    Constant(Mat6),
    /// Uniform samples on `[0, length]`, interpolated cubically.
    Sampled(Spline<Mat6>),
}

impl MatrixField {
    pub fn sampled(length: f64, samples: Vec<Mat6>) -> Result<Self> {
        Ok(Self::Sampled(Spline::uniform(0.0, length, samples)?))
    }

    pub fn at(&self, x: f64) -> Mat6 {
        match self {
            Self::Constant(m) => *m,
            Self::Sampled(s) => s.eval(x),
        }
    }

    pub fn is_constant(&self) -> bool {
        matches!(self, Self::Constant(_))
    }

    fn samples(&self) -> Vec<Mat6> {
        match self {
            Self::Constant(m) => vec![*m],
            Self::Sampled(s) => s.values().to_vec(),
        }
    }
}

/// Rotation of the undeformed cross sections along a beam.
#[derive(Debug, Clone, PartialEq)]
pub enum RotationField {
    Constant(Mat3),
    Sampled(SampledRotation),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SampledRotation {
    length: f64,
    rotations: Vec<Mat3>,
    curvature: Spline<Vec3>,
}

impl RotationField {
    /// Uniform samples on `[0, length]`; at least three.
    pub fn sampled(length: f64, rotations: Vec<Mat3>) -> Result<Self> {
        if rotations.len() < 3 {
            return Err(Error::InvalidInput("sampled rotation needs at least 3 samples".into()));
        }
        if let Some(j) = rotations.iter().position(|r| !is_rotation(r, 1e-8)) {
            return Err(Error::InvalidInput(format!("rotation sample {j} is not in SO(3)")));
        }
        let curv = sampled_curvature(length, &rotations)?;
        Ok(Self::Sampled(SampledRotation { length, rotations, curvature: Spline::uniform(0.0, length, curv)? }))
    }

    pub fn from_fn(length: f64, n: usize, f: impl Fn(f64) -> Mat3) -> Result<Self> {
        let rotations = (0..n).map(|j| f(length * j as f64 / (n - 1) as f64)).collect();
        Self::sampled(length, rotations)
    }

    pub fn at(&self, x: f64) -> Mat3 {
        match self {
            Self::Constant(r) => *r,
            Self::Sampled(s) => {
                let n = s.rotations.len();
                let pos = (x / s.length * (n - 1) as f64).clamp(0.0, (n - 1) as f64);
                let k = (pos.floor() as usize).min(n - 2);
                let w = pos - k as f64;
                let (a, b) = (&s.rotations[k], &s.rotations[k + 1]);
                a * exp_so3(&(w * log_so3(&(a.transpose() * b))))
            }
        }
    }

    /// vec(Rᵀ dR/dx) at `x`.
    pub fn curvature_at(&self, x: f64) -> Vec3 {
        match self {
            Self::Constant(_) => Vec3::zeros(),
            Self::Sampled(s) => s.curvature.eval(x),
        }
    }
}

/// Curvature at the samples from logarithms of neighbouring relative rotations.
fn sampled_curvature(length: f64, r: &[Mat3]) -> Result<Vec<Vec3>> {
    let n = r.len();
    let h = length / (n - 1) as f64;
    let rel = |j: usize, k: usize| log_so3(&(r[j].transpose() * r[k]));
    let mut out = Vec::with_capacity(n);
    for j in 0..n {
        let d = diff_uniform(r, j, h);
        let dm = r[j].transpose() * d;
        let dn = dm.norm();
        // the centered product is skew up to O(h²) for a smooth field
        let asymmetry = (dm + dm.transpose()).norm();
        if asymmetry > 1e-6 + h * h * (1.0 + dn).powi(3) {
            return Err(Error::NotSkew { asymmetry });
        }
        let k = if j == 0 {
            (4.0 * rel(0, 1) - rel(0, 2)) / (2.0 * h)
        } else if j == n - 1 {
            -(4.0 * rel(n - 1, n - 2) - rel(n - 1, n - 3)) / (2.0 * h)
        } else {
            (rel(j, j + 1) - rel(j, j - 1)) / (2.0 * h)
        };
        out.push(k);
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct BeamSpec {
    pub length: f64,
    pub mass: MatrixField,
    pub flex: MatrixField,
    pub rotation: RotationField,
}

/// Mass and flexibility at one cross section with their inverses.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Section {
    pub mass: Mat6,
    pub flex: Mat6,
    pub mass_inv: Mat6,
    pub flex_inv: Mat6,
}

impl Section {
    pub fn new(mass: Mat6, flex: Mat6) -> Result<Self> {
        Ok(Self { mass, flex, mass_inv: spd_inverse(&mass, "mass matrix")?, flex_inv: spd_inverse(&flex, "flexibility matrix")? })
    }
}

fn spd_inverse(m: &Mat6, what: &str) -> Result<Mat6> {
    if (m - m.transpose()).norm() > 1e-10 * (1.0 + m.norm()) {
        return Err(Error::NotSpd { what: what.into() });
    }
    Cholesky::<f64, U6>::new(*m).map(|c| c.inverse()).ok_or_else(|| Error::NotSpd { what: what.into() })
}

impl BeamSpec {
    pub fn uniform(length: f64, mass: Mat6, flex: Mat6, rotation: Mat3) -> Self {
        Self { length, mass: MatrixField::Constant(mass), flex: MatrixField::Constant(flex), rotation: RotationField::Constant(rotation) }
    }

    pub fn section(&self, x: f64) -> Result<Section> {
        Section::new(self.mass.at(x), self.flex.at(x))
    }

    /// Violations of the beam invariants, empty when valid.
    pub fn validate(&self) -> Vec<String> {
        let mut out = Vec::new();
        if !(self.length > 0.0 && self.length.is_finite()) {
            out.push(format!("length {} must be positive", self.length));
        }
        for (name, field) in [("mass", &self.mass), ("flex", &self.flex)] {
            for (j, m) in field.samples().iter().enumerate() {
                if (m - m.transpose()).norm() > 1e-10 * (1.0 + m.norm()) {
                    out.push(format!("{name} sample {j} is not symmetric"));
                    continue;
                }
                let min = SymmetricEigen::new(*m).eigenvalues.min();
                if !(min > 1e-10) {
                    out.push(format!("{name} sample {j} is not positive definite (min eigenvalue {min:.3e})"));
                }
            }
        }
        if let RotationField::Constant(r) = &self.rotation {
            if !is_rotation(r, 1e-8) {
                out.push("undeformed rotation is not in SO(3)".into());
            }
        }
        out
    }
}

/// Curvature samples of the undeformed beam (a single zero for a constant rotation).
pub fn curvature(spec: &BeamSpec) -> Vec<Vec3> {
    match &spec.rotation {
        RotationField::Constant(_) => vec![Vec3::zeros()],
        RotationField::Sampled(s) => s.curvature.values().to_vec(),
    }
}

pub fn assemble_a(spec: &BeamSpec, x: f64) -> Result<Mat12> {
    Ok(a_matrix(&spec.section(x)?))
}

pub fn assemble_bbar(spec: &BeamSpec, x: f64) -> Result<Mat12> {
    Ok(bbar_matrix(&spec.section(x)?, &spec.rotation.curvature_at(x)))
}

pub fn gbar(spec: &BeamSpec, x: f64, u: &Vec12) -> Result<Vec12> {
    Ok(gbar_section(&spec.section(x)?, u))
}

fn a_matrix(s: &Section) -> Mat12 {
    -blocks6(&Mat6::zeros(), &s.mass_inv, &s.flex_inv, &Mat6::zeros())
}

pub fn e_matrix(curv: &Vec3) -> Mat6 {
    let mut e = Mat6::zeros();
    let k = hat(curv);
    e.fixed_view_mut::<3, 3>(0, 0).copy_from(&k);
    e.fixed_view_mut::<3, 3>(3, 0).copy_from(&hat(&e1()));
    e.fixed_view_mut::<3, 3>(3, 3).copy_from(&k);
    e
}

fn bbar_matrix(s: &Section, curv: &Vec3) -> Mat12 {
    let e = e_matrix(curv);
    blocks6(&Mat6::zeros(), &(-s.mass_inv * e), &(s.flex_inv * e.transpose()), &Mat6::zeros())
}

/// The quadratic source of the physical system.
pub fn gbar_section(s: &Section, u: &Vec12) -> Vec12 {
    let (u1, u2, u3, u4) = (part3(u, 0), part3(u, 1), part3(u, 2), part3(u, 3));
    let m = stack6(&(s.mass * top6(u)), &(s.flex * bottom6(u)));
    let (m1, m2, m3, m4) = (part3(&m, 0), part3(&m, 1), part3(&m, 2), part3(&m, 3));
    let k_top = stack3(&(u2.cross(&m1) + u3.cross(&m4)), &(u1.cross(&m1) + u2.cross(&m2) + u3.cross(&m3) + u4.cross(&m4)));
    let k_bot = stack3(&(u2.cross(&m3) + u1.cross(&m4)), &u2.cross(&m4));
    -stack6(&(s.mass_inv * k_top), &(s.flex_inv * k_bot))
}

/// All coefficients at one cross section.
#[derive(Debug, Clone, PartialEq)]
pub struct Coefficients {
    pub section: Section,
    pub flex_sqrt: Mat6,
    pub flex_inv_sqrt: Mat6,
    /// Orthogonal U with Θ = Uᵀ D² U.
    pub u: Mat6,
    /// Positive diagonal of D, ascending.
    pub d: Vec6,
    pub a: Mat12,
    pub bbar: Mat12,
    pub l: Mat12,
    pub l_inv: Mat12,
    /// Riemann coefficient L B̄ L⁻¹ + L A d(L⁻¹)/dx.
    pub b: Mat12,
    pub curvature: Vec3,
}

impl Coefficients {
    /// Characteristic speeds (−D, D).
    pub fn speeds(&self) -> Vec12 {
        stack6(&-self.d, &self.d)
    }

    /// g(x, r) = L ḡ(x, L⁻¹ r).
    pub fn riemann_source(&self, r: &Vec12) -> Vec12 {
        self.l * gbar_section(&self.section, &(self.l_inv * r))
    }

    /// Right-hand side −B r + g(r) of the Riemann system.
    pub fn rhs(&self, r: &Vec12) -> Vec12 {
        self.riemann_source(r) - self.b * r
    }

    /// `U C^{-1/2}`, the velocity block of L.
    pub fn l_velocity(&self) -> Mat6 {
        self.l.fixed_view::<6, 6>(0, 0).into_owned()
    }

    /// `D U C^{1/2}`, the force block of L.
    pub fn l_force(&self) -> Mat6 {
        self.l.fixed_view::<6, 6>(0, 6).into_owned()
    }

    fn lerp(a: &Self, b: &Self, w: f64) -> Self {
        if w == 0.0 {
            return a.clone();
        }
        let v = 1.0 - w;
        let section = Section {
            mass: a.section.mass * v + b.section.mass * w,
            flex: a.section.flex * v + b.section.flex * w,
            mass_inv: a.section.mass_inv * v + b.section.mass_inv * w,
            flex_inv: a.section.flex_inv * v + b.section.flex_inv * w,
        };
        Self {
            section,
            flex_sqrt: a.flex_sqrt * v + b.flex_sqrt * w,
            flex_inv_sqrt: a.flex_inv_sqrt * v + b.flex_inv_sqrt * w,
            u: a.u * v + b.u * w,
            d: a.d * v + b.d * w,
            a: a.a * v + b.a * w,
            bbar: a.bbar * v + b.bbar * w,
            l: a.l * v + b.l * w,
            l_inv: a.l_inv * v + b.l_inv * w,
            b: a.b * v + b.b * w,
            curvature: a.curvature * v + b.curvature * w,
        }
    }
}

/// Sampled Riemann form of one beam on a uniform grid.
#[derive(Debug, Clone, PartialEq)]
pub struct DiagonalizedBeam {
    pub length: f64,
    pub samples: Vec<Coefficients>,
    /// Undeformed rotation at x = 0 and x = ℓ.
    pub rotation_ends: [Mat3; 2],
}

impl DiagonalizedBeam {
    pub fn n_cells(&self) -> usize {
        self.samples.len() - 1
    }

    pub fn dx(&self) -> f64 {
        self.length / self.n_cells() as f64
    }

    pub fn x(&self, j: usize) -> f64 {
        self.length * j as f64 / self.n_cells() as f64
    }

    pub fn max_speed(&self) -> f64 {
        self.samples.iter().map(|c| c.d.max()).fold(0.0, f64::max)
    }

    pub fn min_speed(&self) -> f64 {
        self.samples.iter().map(|c| c.d.min()).fold(f64::INFINITY, f64::min)
    }

    /// Coefficients at any `x`, linear between samples.
    pub fn coefficients_at(&self, x: f64) -> Coefficients {
        let n = self.n_cells();
        let pos = (x / self.length * n as f64).clamp(0.0, n as f64);
        let k = (pos.floor() as usize).min(n - 1);
        let w = pos - k as f64;
        if w < 1e-13 {
            return self.samples[k].clone();
        }
        if w > 1.0 - 1e-13 {
            return self.samples[k + 1].clone();
        }
        Coefficients::lerp(&self.samples[k], &self.samples[k + 1], w)
    }

    /// diag(R, R) of the undeformed beam at an end (`false`: x = 0, `true`: x = ℓ).
    pub fn rbar_end(&self, at_end: bool) -> Mat6 {
        rbar(&self.rotation_ends[at_end as usize])
    }
}

/// g(x, r) at any `x` of the beam.
pub fn riemann_source(db: &DiagonalizedBeam, x: f64, r: &Vec12) -> Vec12 {
    db.coefficients_at(x).riemann_source(r)
}

struct Eigen {
    /// Columns are eigenvectors of Θ, matched to the ascending `mu`.
    vectors: Mat6,
    mu: Vec6,
}

fn sym_sqrt(m: &Mat6, what: &str) -> Result<(Mat6, Mat6)> {
    let eig = SymmetricEigen::new(*m);
    if !(eig.eigenvalues.min() > 1e-10) {
        return Err(Error::NotSpd { what: what.into() });
    }
    let q = eig.eigenvectors;
    let s = Mat6::from_diagonal(&eig.eigenvalues.map(f64::sqrt));
    let si = Mat6::from_diagonal(&eig.eigenvalues.map(|v| 1.0 / v.sqrt()));
    Ok((q * s * q.transpose(), q * si * q.transpose()))
}

fn clusters(mu: &Vec6) -> Vec<Vec<usize>> {
    let mut out: Vec<Vec<usize>> = vec![vec![0]];
    for k in 1..6 {
        let last = *out.last().unwrap().last().unwrap();
        if (mu[k] - mu[last]).abs() <= CLUSTER_GAP * mu[k].abs().max(1.0) {
            out.last_mut().unwrap().push(k);
        } else {
            out.push(vec![k]);
        }
    }
    out
}

/// Rotate each eigen-cluster of `raw` onto the reference columns (orthogonal Procrustes).
/// Returns the matched vectors and the worst overlap singular value.
fn match_columns(raw: &Mat6, mu: &Vec6, reference: &Mat6) -> (Mat6, f64) {
    let mut out = *raw;
    let mut worst = f64::INFINITY;
    for cl in clusters(mu) {
        let m = cl.len();
        let vn = nalgebra::DMatrix::from_fn(6, m, |r, c| raw[(r, cl[c])]);
        let p = nalgebra::DMatrix::from_fn(6, m, |r, c| reference[(r, cl[c])]);
        let o = vn.transpose() * &p;
        let svd = o.clone().svd(true, true);
        worst = worst.min(svd.singular_values.min());
        let w = svd.u.unwrap() * svd.v_t.unwrap();
        let matched = vn * w;
        for (c, &k) in cl.iter().enumerate() {
            for r in 0..6 {
                out[(r, k)] = matched[(r, c)];
            }
        }
    }
    (out, worst)
}

/// Reference columns for the first sample: the canonical vectors closest to each cluster.
fn canonical_reference(raw: &Mat6, mu: &Vec6) -> Mat6 {
    let mut reference = Mat6::zeros();
    let mut used = [false; 6];
    for cl in clusters(mu) {
        let mut weights: Vec<(usize, f64)> = (0..6)
            .filter(|&e| !used[e])
            .map(|e| (e, cl.iter().map(|&k| raw[(e, k)].powi(2)).sum::<f64>()))
            .collect();
        weights.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
        let mut picked: Vec<usize> = weights.iter().take(cl.len()).map(|w| w.0).collect();
        picked.sort();
        for (&k, &e) in cl.iter().zip(&picked) {
            used[e] = true;
            reference[(e, k)] = 1.0;
        }
    }
    reference
}

fn theta_eigen(sec: &Section, flex_sqrt: &Mat6) -> Eigen {
    // Θ = S⁻¹ with S = C^{1/2} M C^{1/2}; Θ's ascending spectrum is S's descending one
    let s = flex_sqrt * sec.mass * flex_sqrt;
    let s = (s + s.transpose()) * 0.5;
    let eig = SymmetricEigen::new(s);
    let mut order: Vec<usize> = (0..6).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].partial_cmp(&eig.eigenvalues[a]).unwrap());
    let mut vectors = Mat6::zeros();
    let mut mu = Vec6::zeros();
    for (k, &o) in order.iter().enumerate() {
        vectors.set_column(k, &eig.eigenvectors.column(o));
        mu[k] = 1.0 / eig.eigenvalues[o];
    }
    Eigen { vectors, mu }
}

fn l_matrices(u: &Mat6, d: &Vec6, c_half: &Mat6, c_inv_half: &Mat6) -> (Mat12, Mat12) {
    let dm = Mat6::from_diagonal(d);
    let dinv = Mat6::from_diagonal(&d.map(|v| 1.0 / v));
    let vel = u * c_inv_half;
    let force = dm * u * c_half;
    let l = blocks6(&vel, &force, &vel, &(-force));
    let top = c_half * u.transpose();
    let bot = c_inv_half * u.transpose() * dinv;
    let l_inv = blocks6(&top, &top, &bot, &(-bot)) * 0.5;
    (l, l_inv)
}

/// Diagonalize the beam on `n_samples` uniform samples of `[0, ℓ]`.
pub fn diagonalize(spec: &BeamSpec, n_samples: usize) -> Result<DiagonalizedBeam> {
    if n_samples < 3 {
        return Err(Error::InvalidInput(format!("diagonalize needs at least 3 samples, got {n_samples}")));
    }
    let n = n_samples - 1;
    let h = spec.length / n as f64;
    let constant_section = spec.mass.is_constant() && spec.flex.is_constant();
    let mut partial: Vec<(Section, Mat6, Mat6, Mat6, Vec6)> = Vec::with_capacity(n_samples);
    let mut previous: Option<Mat6> = None;
    for j in 0..=n {
        if constant_section && j > 0 {
            partial.push(partial[0]);
            continue;
        }
        let x = h * j as f64;
        let sec = spec.section(x)?;
        let (c_half, c_inv_half) = sym_sqrt(&sec.flex, "flexibility matrix")?;
        let eig = theta_eigen(&sec, &c_half);
        let reference = match &previous {
            Some(p) => *p,
            None => canonical_reference(&eig.vectors, &eig.mu),
        };
        let (vectors, overlap) = match_columns(&eig.vectors, &eig.mu, &reference);
        if previous.is_some() && overlap < MIN_OVERLAP {
            return Err(Error::EigenSplitFailure { x, overlap });
        }
        previous = Some(vectors);
        partial.push((sec, c_half, c_inv_half, vectors.transpose(), eig.mu.map(f64::sqrt)));
    }
    let mut samples: Vec<Coefficients> = partial
        .iter()
        .enumerate()
        .map(|(j, (sec, c_half, c_inv_half, u, d))| {
            let curvature = spec.rotation.curvature_at(h * j as f64);
            let (l, l_inv) = l_matrices(u, d, c_half, c_inv_half);
            Coefficients {
                section: *sec,
                flex_sqrt: *c_half,
                flex_inv_sqrt: *c_inv_half,
                u: *u,
                d: *d,
                a: a_matrix(sec),
                bbar: bbar_matrix(sec, &curvature),
                l,
                l_inv,
                b: Mat12::zeros(),
                curvature,
            }
        })
        .collect();
    let l_invs: Vec<Mat12> = samples.iter().map(|c| c.l_inv).collect();
    for (j, c) in samples.iter_mut().enumerate() {
        let dlinv = if constant_section { Mat12::zeros() } else { diff_uniform(&l_invs, j, h) };
        c.b = c.l * c.bbar * c.l_inv + c.l * c.a * dlinv;
        let sim = (c.l * c.a * c.l_inv - Mat12::from_diagonal(&c.speeds())).norm();
        let inv = (c.l * c.l_inv - Mat12::identity()).norm();
        if sim > 1e-9 * (1.0 + c.a.norm()) || inv > 1e-10 {
            return Err(Error::InvalidInput(format!(
                "diagonalization residuals too large at x = {} (similarity {sim:.3e}, inverse {inv:.3e})",
                h * j as f64
            )));
        }
    }
    Ok(DiagonalizedBeam { length: spec.length, samples, rotation_ends: [spec.rotation.at(0.0), spec.rotation.at(spec.length)] })
}
