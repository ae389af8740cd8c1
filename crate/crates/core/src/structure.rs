//! Geometrically nonlinear structural dynamics in the plane: corotational
//! Euler-Bernoulli beams, total-Lagrangian St. Venant-Kirchhoff membrane
//! triangles, lumped masses, explicit central differences, a static Newton
//! solver and one-sided penalty contact.
//!
//! Every node carries three degrees of freedom `(ux, uy, theta)`. Rotations
//! only have stiffness and inertia at nodes touched by a beam; elsewhere they
//! are inert and stay at zero.

use std::f64::consts::PI;
use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector, Matrix2, Matrix3};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geom::{add, dot, norm, rotate, sub, wrap_angle, Vec2};

pub type Dofs = [f64; 3];

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StructureError {
    #[error("material {id}: {msg}")]
    Material { id: usize, msg: String },
    #[error("element {0} has zero reference length or area")]
    Degenerate(usize),
    #[error("membrane {element} is inverted (det F = {det:e})")]
    Inverted { element: usize, det: f64 },
    #[error("index out of range in {0}")]
    Index(String),
    #[error("time step {dt:e} exceeds the critical estimate {critical:e}")]
    Unstable { dt: f64, critical: f64 },
    #[error("non-finite state at node {0}")]
    NonFinite(usize),
    #[error("static Newton stalled after {iterations} iterations, residual {residual:e}")]
    Newton { iterations: usize, residual: f64 },
    #[error("tangent stiffness is singular")]
    Singular,
    #[error("fold angle {0} degrees outside (0, 90)")]
    FoldAngle(f64),
    #[error("structure file line {line}: {msg}")]
    Parse { line: usize, msg: String },
}

/// Cross-section of an element.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Section {
    Membrane { thickness: f64 },
    Beam { area: f64, inertia: f64, half_depth: f64 },
}

impl Section {
    /// Unit-depth strip of a sheet of the given thickness.
    pub fn strip(th: f64) -> Self {
        Section::Beam { area: th, inertia: th.powi(3) / 12.0, half_depth: 0.5 * th }
    }

    /// Solid circular rod.
    pub fn rod(d: f64) -> Self {
        Section::Beam { area: PI * d * d / 4.0, inertia: PI * d.powi(4) / 64.0, half_depth: 0.5 * d }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Material {
    pub e: f64,
    pub nu: f64,
    pub rho: f64,
    pub section: Section,
}

impl Material {
    pub fn validate(&self, id: usize) -> Result<(), StructureError> {
        let bad = |msg: &str| Err(StructureError::Material { id, msg: msg.into() });
        if !(self.e > 0.0) {
            return bad("Young's modulus must be positive");
        }
        if !(0.0..0.5).contains(&self.nu) {
            return bad("Poisson ratio must lie in [0, 0.5)");
        }
        if !(self.rho > 0.0) {
            return bad("density must be positive");
        }
        match self.section {
            Section::Membrane { thickness } if !(thickness > 0.0) => bad("thickness must be positive"),
            Section::Beam { area, inertia, half_depth } if !(area > 0.0 && inertia >= 0.0 && half_depth >= 0.0) => {
                bad("beam section needs area > 0, inertia >= 0, half depth >= 0")
            }
            _ => Ok(()),
        }
    }

    /// Plane-stress Lame pair `(lambda*, mu)`.
    pub fn plane_stress_lame(&self) -> (f64, f64) {
        let mu = self.e / (2.0 * (1.0 + self.nu));
        let lam = self.e * self.nu / (1.0 - self.nu * self.nu);
        (lam, mu)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Beam {
    pub nodes: [usize; 2],
    pub material: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Membrane {
    pub nodes: [usize; 3],
    pub material: usize,
}

/// Prescribed motion of one degree of freedom at constant rate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Constraint {
    pub node: usize,
    pub dof: usize,
    pub rate: f64,
}

/// Node-to-segment candidate; the node must stay on the side the segment's
/// right-hand normal points to.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ContactPair {
    pub node: usize,
    pub segment: [usize; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContactSettings {
    pub stiffness: f64,
    /// Penetrations deeper than this are ignored so far-side nodes are not
    /// pulled through.
    pub band: f64,
    pub pairs: Vec<ContactPair>,
}

impl Default for ContactSettings {
    fn default() -> Self {
        ContactSettings { stiffness: 0.0, band: f64::MAX, pairs: Vec::new() }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct StructuralModel {
    pub nodes: Vec<Vec2>,
    pub materials: Vec<Material>,
    pub beams: Vec<Beam>,
    pub membranes: Vec<Membrane>,
    pub point_masses: Vec<(usize, f64)>,
    pub constraints: Vec<Constraint>,
    pub contact: ContactSettings,
    /// Mass-proportional damping coefficient (1/s).
    pub damping: f64,
}

impl StructuralModel {
    /// Clamp all three degrees of freedom of `node`.
    pub fn clamp(&mut self, node: usize) {
        for dof in 0..3 {
            self.constraints.push(Constraint { node, dof, rate: 0.0 });
        }
    }

    /// Chain of beams through consecutive points; returns the node ids.
    pub fn add_chain(&mut self, points: &[Vec2], material: usize) -> Vec<usize> {
        let first = self.nodes.len();
        self.nodes.extend_from_slice(points);
        for k in 1..points.len() {
            self.beams.push(Beam { nodes: [first + k - 1, first + k], material });
        }
        (first..first + points.len()).collect()
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct BeamRef {
    length: f64,
    angle: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct MembraneRef {
    area: f64,
    dm_inv: [[f64; 2]; 2],
}

/// Nodal displacements, velocities and accelerations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StructuralState {
    pub u: Vec<Dofs>,
    pub v: Vec<Dofs>,
    pub a: Vec<Dofs>,
    pub t: f64,
}

impl StructuralState {
    pub fn zeros(n: usize) -> Self {
        StructuralState { u: vec![[0.0; 3]; n], v: vec![[0.0; 3]; n], a: vec![[0.0; 3]; n], t: 0.0 }
    }
}

/// Stress record of a membrane triangle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ElementStress {
    pub s: Matrix2<f64>,
    pub green: Matrix2<f64>,
    pub f: Matrix2<f64>,
    pub cauchy: Matrix2<f64>,
    pub von_mises: f64,
}

/// Corotational beam resultants in the element frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BeamResultant {
    pub axial: f64,
    pub m1: f64,
    pub m2: f64,
    /// Extreme fibre stress magnitude.
    pub fibre_stress: f64,
}

/// A validated model with reference geometry and lumped masses.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Structure {
    pub model: StructuralModel,
    beam_ref: Vec<BeamRef>,
    membrane_ref: Vec<MembraneRef>,
    pub mass: Vec<Dofs>,
    /// Degree of freedom follows a prescribed rate.
    pub prescribed: Vec<[Option<f64>; 3]>,
    /// Rotation has stiffness (node belongs to a beam).
    pub has_rotation: Vec<bool>,
    pub dt_crit: f64,
}

/// Plane-stress von Mises value of a 2x2 Cauchy stress.
pub fn von_mises_plane(s: &Matrix2<f64>) -> f64 {
    let (a, b, c) = (s[(0, 0)], s[(1, 1)], 0.5 * (s[(0, 1)] + s[(1, 0)]));
    (a * a - a * b + b * b + 3.0 * c * c).max(0.0).sqrt()
}

/// Von Mises value of a full 3x3 Cauchy stress.
pub fn von_mises(s: &Matrix3<f64>) -> f64 {
    let d = |i: usize, j: usize| s[(i, i)] - s[(j, j)];
    let sh = |i: usize, j: usize| 0.5 * (s[(i, j)] + s[(j, i)]);
    let v = 0.5 * (d(0, 1).powi(2) + d(1, 2).powi(2) + d(2, 0).powi(2))
        + 3.0 * (sh(0, 1).powi(2) + sh(1, 2).powi(2) + sh(0, 2).powi(2));
    v.max(0.0).sqrt()
}

fn beam_section(m: &Material) -> (f64, f64, f64) {
    match m.section {
        Section::Beam { area, inertia, half_depth } => (area, inertia, half_depth),
        Section::Membrane { thickness } => {
            let s = Section::strip(thickness);
            beam_section(&Material { section: s, ..*m })
        }
    }
}

fn membrane_thickness(m: &Material) -> f64 {
    match m.section {
        Section::Membrane { thickness } => thickness,
        Section::Beam { area, .. } => area,
    }
}

/// Internal force (energy gradient) of a corotational beam with respect to
/// `(x1, y1, th1, x2, y2, th2)`, plus its resultants.
fn beam_kernel(x1: Vec2, x2: Vec2, th: [f64; 2], r: &BeamRef, m: &Material) -> ([f64; 6], BeamResultant, f64) {
    let (area, inertia, c_fibre) = beam_section(m);
    let d = sub(x2, x1);
    let l = norm(d);
    let (c, s) = (d[0] / l, d[1] / l);
    let alpha = wrap_angle(d[1].atan2(d[0]) - r.angle);
    let t1 = wrap_angle(th[0] - alpha);
    let t2 = wrap_angle(th[1] - alpha);
    let ea = m.e * area / r.length;
    let ei = m.e * inertia / r.length;
    let stretch = l - r.length;
    let n = ea * stretch;
    let m1 = ei * (4.0 * t1 + 2.0 * t2);
    let m2 = ei * (2.0 * t1 + 4.0 * t2);
    let rr = [-c, -s, 0.0, c, s, 0.0];
    let zz = [s, -c, 0.0, -s, c, 0.0];
    let mut f = [0.0; 6];
    for k in 0..6 {
        f[k] = n * rr[k] - (m1 + m2) * zz[k] / l;
    }
    f[2] += m1;
    f[5] += m2;
    let energy = 0.5 * ea * stretch * stretch + ei * (2.0 * t1 * t1 + 2.0 * t1 * t2 + 2.0 * t2 * t2);
    let fibre = if inertia > 0.0 { m1.abs().max(m2.abs()) * c_fibre / inertia } else { 0.0 };
    (f, BeamResultant { axial: n, m1, m2, fibre_stress: n.abs() / area + fibre }, energy)
}

/// Deformation gradient, PK2 stress, nodal gradient and energy of a membrane.
fn membrane_kernel(
    x: [Vec2; 3],
    r: &MembraneRef,
    m: &Material,
    element: usize,
) -> Result<([f64; 6], ElementStress, f64), StructureError> {
    let dm_inv = Matrix2::new(r.dm_inv[0][0], r.dm_inv[0][1], r.dm_inv[1][0], r.dm_inv[1][1]);
    let e1 = sub(x[1], x[0]);
    let e2 = sub(x[2], x[0]);
    let ds = Matrix2::new(e1[0], e2[0], e1[1], e2[1]);
    let f = ds * dm_inv;
    let det = f.determinant();
    if !(det > 0.0) {
        return Err(StructureError::Inverted { element, det });
    }
    let green = 0.5 * (f.transpose() * f - Matrix2::identity());
    let (lam, mu) = m.plane_stress_lame();
    let tr = green.trace();
    let s = Matrix2::identity() * (lam * tr) + green * (2.0 * mu);
    let th = membrane_thickness(m);
    let p = f * s;
    let h = p * dm_inv.transpose() * (r.area * th);
    let g = [h[(0, 0)], h[(1, 0)], h[(0, 1)], h[(1, 1)]];
    let forces = [-g[0] - g[2], -g[1] - g[3], g[0], g[1], g[2], g[3]];
    let energy = r.area * th * (0.5 * lam * tr * tr + mu * (green.component_mul(&green)).sum());
    let cauchy = f * s * f.transpose() / det;
    let vm = von_mises_plane(&cauchy);
    Ok((forces, ElementStress { s, green, f, cauchy, von_mises: vm }, energy))
}

fn contact_gap(x: Vec2, a: Vec2, b: Vec2) -> Option<(f64, f64, Vec2)> {
    let ab = sub(b, a);
    let l2 = dot(ab, ab);
    if l2 == 0.0 {
        return None;
    }
    let s = dot(sub(x, a), ab) / l2;
    if !(0.0..=1.0).contains(&s) {
        return None;
    }
    let l = l2.sqrt();
    let n = [ab[1] / l, -ab[0] / l];
    Some((dot(sub(x, a), n), s, n))
}

impl Structure {
    pub fn new(model: StructuralModel) -> Result<Self, StructureError> {
        let nn = model.nodes.len();
        for (i, m) in model.materials.iter().enumerate() {
            m.validate(i)?;
        }
        let nm = model.materials.len();
        let mut mass = vec![[0.0; 3]; nn];
        let mut has_rotation = vec![false; nn];
        let mut beam_ref = Vec::with_capacity(model.beams.len());
        for (k, b) in model.beams.iter().enumerate() {
            if b.nodes.iter().any(|&n| n >= nn) || b.material >= nm {
                return Err(StructureError::Index(format!("beam {k}")));
            }
            let d = sub(model.nodes[b.nodes[1]], model.nodes[b.nodes[0]]);
            let length = norm(d);
            if !(length > 0.0) {
                return Err(StructureError::Degenerate(k));
            }
            let mat = &model.materials[b.material];
            let (area, inertia, _) = beam_section(mat);
            let m = mat.rho * area * length;
            let j = mat.rho * length * (area * length * length / 12.0 + inertia);
            for &n in &b.nodes {
                mass[n][0] += 0.5 * m;
                mass[n][1] += 0.5 * m;
                mass[n][2] += 0.5 * j;
                has_rotation[n] = true;
            }
            beam_ref.push(BeamRef { length, angle: d[1].atan2(d[0]) });
        }
        let mut membrane_ref = Vec::with_capacity(model.membranes.len());
        for (k, e) in model.membranes.iter().enumerate() {
            if e.nodes.iter().any(|&n| n >= nn) || e.material >= nm {
                return Err(StructureError::Index(format!("membrane {k}")));
            }
            let x = e.nodes.map(|n| model.nodes[n]);
            let e1 = sub(x[1], x[0]);
            let e2 = sub(x[2], x[0]);
            let dm = Matrix2::new(e1[0], e2[0], e1[1], e2[1]);
            let area = 0.5 * dm.determinant();
            if !(area > 0.0) {
                return Err(StructureError::Degenerate(k));
            }
            let inv = dm.try_inverse().ok_or(StructureError::Degenerate(k))?;
            let mat = &model.materials[e.material];
            let m = mat.rho * membrane_thickness(mat) * area / 3.0;
            for &n in &e.nodes {
                mass[n][0] += m;
                mass[n][1] += m;
            }
            membrane_ref.push(MembraneRef { area, dm_inv: [[inv[(0, 0)], inv[(0, 1)]], [inv[(1, 0)], inv[(1, 1)]]] });
        }
        for &(n, m) in &model.point_masses {
            if n >= nn {
                return Err(StructureError::Index("point mass".into()));
            }
            mass[n][0] += m;
            mass[n][1] += m;
        }
        let mut prescribed = vec![[None; 3]; nn];
        for c in &model.constraints {
            if c.node >= nn || c.dof > 2 {
                return Err(StructureError::Index("constraint".into()));
            }
            prescribed[c.node][c.dof] = Some(c.rate);
        }
        for p in &model.contact.pairs {
            if p.node >= nn || p.segment.iter().any(|&n| n >= nn) {
                return Err(StructureError::Index("contact pair".into()));
            }
        }
        let mut s = Structure { model, beam_ref, membrane_ref, mass, prescribed, has_rotation, dt_crit: f64::INFINITY };
        s.dt_crit = s.critical_dt(&StructuralState::zeros(nn));
        Ok(s)
    }

    pub fn num_nodes(&self) -> usize {
        self.model.nodes.len()
    }

    pub fn position(&self, state: &StructuralState, n: usize) -> Vec2 {
        add(self.model.nodes[n], [state.u[n][0], state.u[n][1]])
    }

    pub fn positions(&self, state: &StructuralState) -> Vec<Vec2> {
        (0..self.num_nodes()).map(|n| self.position(state, n)).collect()
    }

    fn par(&self) -> bool {
        self.model.beams.len() + self.model.membranes.len() > 256
    }

    pub fn beam_force(&self, k: usize, state: &StructuralState) -> ([f64; 6], BeamResultant) {
        let b = &self.model.beams[k];
        let (f, r, _) = beam_kernel(
            self.position(state, b.nodes[0]),
            self.position(state, b.nodes[1]),
            [state.u[b.nodes[0]][2], state.u[b.nodes[1]][2]],
            &self.beam_ref[k],
            &self.model.materials[b.material],
        );
        (f, r)
    }

    pub fn membrane_force(&self, k: usize, state: &StructuralState) -> Result<([f64; 6], ElementStress), StructureError> {
        let e = &self.model.membranes[k];
        let x = e.nodes.map(|n| self.position(state, n));
        let (f, s, _) = membrane_kernel(x, &self.membrane_ref[k], &self.model.materials[e.material], k)?;
        Ok((f, s))
    }

    /// Resisting nodal forces: the gradient of the stored energy, including
    /// the contact penalty.
    pub fn internal_forces(&self, state: &StructuralState) -> Result<Vec<Dofs>, StructureError> {
        let nn = self.num_nodes();
        let mut out = vec![[0.0; 3]; nn];
        let beams: Vec<[f64; 6]> = if self.par() {
            (0..self.model.beams.len()).into_par_iter().map(|k| self.beam_force(k, state).0).collect()
        } else {
            (0..self.model.beams.len()).map(|k| self.beam_force(k, state).0).collect()
        };
        for (b, f) in self.model.beams.iter().zip(&beams) {
            for (j, &n) in b.nodes.iter().enumerate() {
                for d in 0..3 {
                    out[n][d] += f[3 * j + d];
                }
            }
        }
        let membranes: Vec<[f64; 6]> = if self.par() {
            (0..self.model.membranes.len())
                .into_par_iter()
                .map(|k| self.membrane_force(k, state).map(|r| r.0))
                .collect::<Result<_, _>>()?
        } else {
            (0..self.model.membranes.len()).map(|k| self.membrane_force(k, state).map(|r| r.0)).collect::<Result<_, _>>()?
        };
        for (e, f) in self.model.membranes.iter().zip(&membranes) {
            for (j, &n) in e.nodes.iter().enumerate() {
                out[n][0] += f[2 * j];
                out[n][1] += f[2 * j + 1];
            }
        }
        for (n, f) in self.contact_forces(state) {
            out[n][0] -= f[0];
            out[n][1] -= f[1];
        }
        Ok(out)
    }

    /// Penalty contact reactions as `(node, force)` pairs; they push the
    /// penetrating node back along the segment normal and never pull.
    pub fn contact_forces(&self, state: &StructuralState) -> Vec<(usize, Vec2)> {
        let c = &self.model.contact;
        let mut out = Vec::new();
        if c.stiffness <= 0.0 {
            return out;
        }
        for p in &c.pairs {
            let x = self.position(state, p.node);
            let a = self.position(state, p.segment[0]);
            let b = self.position(state, p.segment[1]);
            if let Some((g, s, n)) = contact_gap(x, a, b) {
                if g < 0.0 && -g < c.band {
                    let f = [c.stiffness * -g * n[0], c.stiffness * -g * n[1]];
                    out.push((p.node, f));
                    out.push((p.segment[0], [-(1.0 - s) * f[0], -(1.0 - s) * f[1]]));
                    out.push((p.segment[1], [-s * f[0], -s * f[1]]));
                }
            }
        }
        out
    }

    pub fn strain_energy(&self, state: &StructuralState) -> Result<f64, StructureError> {
        let mut w = 0.0;
        for (k, b) in self.model.beams.iter().enumerate() {
            let (_, _, e) = beam_kernel(
                self.position(state, b.nodes[0]),
                self.position(state, b.nodes[1]),
                [state.u[b.nodes[0]][2], state.u[b.nodes[1]][2]],
                &self.beam_ref[k],
                &self.model.materials[b.material],
            );
            w += e;
        }
        for (k, e) in self.model.membranes.iter().enumerate() {
            let x = e.nodes.map(|n| self.position(state, n));
            w += membrane_kernel(x, &self.membrane_ref[k], &self.model.materials[e.material], k)?.2;
        }
        let c = &self.model.contact;
        if c.stiffness > 0.0 {
            for p in &c.pairs {
                let x = self.position(state, p.node);
                let a = self.position(state, p.segment[0]);
                let b = self.position(state, p.segment[1]);
                if let Some((g, _, _)) = contact_gap(x, a, b) {
                    if g < 0.0 && -g < c.band {
                        w += 0.5 * c.stiffness * g * g;
                    }
                }
            }
        }
        Ok(w)
    }

    pub fn kinetic_energy(&self, state: &StructuralState) -> f64 {
        let mut k = 0.0;
        for (m, v) in self.mass.iter().zip(&state.v) {
            for d in 0..3 {
                k += 0.5 * m[d] * v[d] * v[d];
            }
        }
        k
    }

    pub fn linear_momentum(&self, state: &StructuralState) -> Vec2 {
        let mut p = [0.0; 2];
        for (m, v) in self.mass.iter().zip(&state.v) {
            p[0] += m[0] * v[0];
            p[1] += m[1] * v[1];
        }
        p
    }

    /// Element-wise von Mises values, beams first then membranes.
    pub fn element_von_mises(&self, state: &StructuralState) -> Result<Vec<f64>, StructureError> {
        let mut out: Vec<f64> = (0..self.model.beams.len()).map(|k| self.beam_force(k, state).1.fibre_stress).collect();
        for k in 0..self.model.membranes.len() {
            out.push(self.membrane_force(k, state)?.1.von_mises);
        }
        Ok(out)
    }

    /// Upper bound of the highest natural frequency by Gershgorin row sums of
    /// the element stiffnesses at `state` over the lumped masses, turned into
    /// the central-difference stability limit `2 / omega`.
    pub fn critical_dt(&self, state: &StructuralState) -> f64 {
        let nn = self.num_nodes();
        let mut rows = vec![[0.0f64; 3]; nn];
        let scale = self.length_scale();
        for (k, b) in self.model.beams.iter().enumerate() {
            let q0 = self.beam_dofs(k, state);
            let kf = |q: &[f64; 6]| {
                beam_kernel([q[0], q[1]], [q[3], q[4]], [q[2], q[5]], &self.beam_ref[k], &self.model.materials[b.material]).0
            };
            let km = fd_jacobian(q0, kf, [scale, scale, 1.0, scale, scale, 1.0]);
            for i in 0..6 {
                let n = b.nodes[i / 3];
                rows[n][i % 3] += km[i].iter().map(|x| x.abs()).sum::<f64>();
            }
        }
        for (k, e) in self.model.membranes.iter().enumerate() {
            let mut q0 = [0.0; 6];
            for (j, &n) in e.nodes.iter().enumerate() {
                let x = self.position(state, n);
                q0[2 * j] = x[0];
                q0[2 * j + 1] = x[1];
            }
            let mat = &self.model.materials[e.material];
            let r = &self.membrane_ref[k];
            let kf = |q: &[f64; 6]| {
                membrane_kernel([[q[0], q[1]], [q[2], q[3]], [q[4], q[5]]], r, mat, k).map(|x| x.0).unwrap_or([0.0; 6])
            };
            let km = fd_jacobian(q0, kf, [scale; 6]);
            for i in 0..6 {
                rows[e.nodes[i / 2]][i % 2] += km[i].iter().map(|x| x.abs()).sum::<f64>();
            }
        }
        let kc = self.model.contact.stiffness;
        if kc > 0.0 {
            for p in &self.model.contact.pairs {
                for n in [p.node, p.segment[0], p.segment[1]] {
                    rows[n][0] += 2.0 * kc;
                    rows[n][1] += 2.0 * kc;
                }
            }
        }
        let mut w2 = 0.0f64;
        for n in 0..nn {
            for d in 0..3 {
                if self.prescribed[n][d].is_none() && self.mass[n][d] > 0.0 {
                    w2 = w2.max(rows[n][d] / self.mass[n][d]);
                }
            }
        }
        if w2 > 0.0 {
            2.0 / w2.sqrt()
        } else {
            f64::INFINITY
        }
    }

    pub fn refresh_critical_dt(&mut self, state: &StructuralState) {
        self.dt_crit = self.critical_dt(state);
    }

    fn beam_dofs(&self, k: usize, state: &StructuralState) -> [f64; 6] {
        let b = &self.model.beams[k];
        let x1 = self.position(state, b.nodes[0]);
        let x2 = self.position(state, b.nodes[1]);
        [x1[0], x1[1], state.u[b.nodes[0]][2], x2[0], x2[1], state.u[b.nodes[1]][2]]
    }

    fn length_scale(&self) -> f64 {
        let mut lo = [f64::INFINITY; 2];
        let mut hi = [f64::NEG_INFINITY; 2];
        for p in &self.model.nodes {
            for d in 0..2 {
                lo[d] = lo[d].min(p[d]);
                hi[d] = hi[d].max(p[d]);
            }
        }
        let l = (hi[0] - lo[0]).max(hi[1] - lo[1]);
        if l.is_finite() && l > 0.0 {
            l
        } else {
            1.0
        }
    }

    fn dof_free(&self, n: usize, d: usize) -> bool {
        self.prescribed[n][d].is_none() && (d < 2 || self.has_rotation[n])
    }

    fn accelerations(&self, state: &StructuralState, f_ext: &[Dofs]) -> Result<Vec<Dofs>, StructureError> {
        let fi = self.internal_forces(state)?;
        let c = self.model.damping;
        let mut a = vec![[0.0; 3]; self.num_nodes()];
        for n in 0..self.num_nodes() {
            for d in 0..3 {
                if self.dof_free(n, d) && self.mass[n][d] > 0.0 {
                    a[n][d] = (f_ext[n][d] - fi[n][d]) / self.mass[n][d] - c * state.v[n][d];
                }
            }
        }
        Ok(a)
    }

    /// State with displacement `u`, velocity `v` and the matching
    /// accelerations under `f_ext`.
    pub fn initial_state(&self, u: Vec<Dofs>, v: Vec<Dofs>, f_ext: &[Dofs]) -> Result<StructuralState, StructureError> {
        let mut s = StructuralState { u, v, a: Vec::new(), t: 0.0 };
        for n in 0..self.num_nodes() {
            for d in 0..3 {
                if let Some(rate) = self.prescribed[n][d] {
                    s.v[n][d] = rate;
                }
            }
        }
        s.a = self.accelerations(&s, f_ext)?;
        Ok(s)
    }

    /// One central-difference step in velocity-Verlet form. `f_ext` is the
    /// external load at the end of the step.
    pub fn step(&self, state: &StructuralState, f_ext: &[Dofs], dt: f64) -> Result<StructuralState, StructureError> {
        if dt > self.dt_crit * (1.0 + 1e-12) {
            return Err(StructureError::Unstable { dt, critical: self.dt_crit });
        }
        let nn = self.num_nodes();
        let mut next = state.clone();
        let mut half = vec![[0.0; 3]; nn];
        for n in 0..nn {
            for d in 0..3 {
                match self.prescribed[n][d] {
                    Some(rate) => {
                        half[n][d] = rate;
                        next.u[n][d] = state.u[n][d] + dt * rate;
                    }
                    None => {
                        half[n][d] = state.v[n][d] + 0.5 * dt * state.a[n][d];
                        next.u[n][d] = state.u[n][d] + dt * half[n][d];
                    }
                }
            }
        }
        next.t = state.t + dt;
        next.v = half.clone();
        let a = self.accelerations(&next, f_ext)?;
        // damping acted on the half-step velocity; correct the implicit part
        let c = self.model.damping;
        for n in 0..nn {
            for d in 0..3 {
                if self.prescribed[n][d].is_some() {
                    next.v[n][d] = half[n][d];
                    next.a[n][d] = 0.0;
                    continue;
                }
                let a_el = a[n][d] + c * half[n][d];
                let v = (half[n][d] + 0.5 * dt * a_el) / (1.0 + 0.5 * dt * c);
                next.v[n][d] = v;
                next.a[n][d] = a_el - c * v;
                if !(v.is_finite() && next.u[n][d].is_finite()) {
                    return Err(StructureError::NonFinite(n));
                }
            }
        }
        Ok(next)
    }

    /// Static equilibrium under `f_ext` by Newton's method with a
    /// finite-difference tangent. Prescribed degrees of freedom keep the
    /// values they have in `state`.
    pub fn solve_static(
        &self,
        state: &StructuralState,
        f_ext: &[Dofs],
        tol: f64,
        max_iter: usize,
    ) -> Result<(StructuralState, usize), StructureError> {
        let free: Vec<(usize, usize)> =
            (0..self.num_nodes()).flat_map(|n| (0..3).map(move |d| (n, d))).filter(|&(n, d)| self.dof_free(n, d)).collect();
        let nf = free.len();
        let load_scale = f_ext.iter().flat_map(|f| f.iter()).map(|x| x.abs()).fold(0.0, f64::max).max(1e-300);
        let scale = self.length_scale();
        let residual = |s: &StructuralState| -> Result<DVector<f64>, StructureError> {
            let fi = self.internal_forces(s)?;
            Ok(DVector::from_iterator(nf, free.iter().map(|&(n, d)| fi[n][d] - f_ext[n][d])))
        };
        let mut s = state.clone();
        let mut r = residual(&s)?;
        for it in 0..max_iter {
            if r.amax() <= tol * load_scale {
                return Ok((s, it));
            }
            let mut k = DMatrix::zeros(nf, nf);
            for (col, &(n, d)) in free.iter().enumerate() {
                let h = 1e-7 * if d < 2 { scale } else { 1.0 };
                let mut sp = s.clone();
                sp.u[n][d] += h;
                let rp = residual(&sp)?;
                sp.u[n][d] -= 2.0 * h;
                let rm = residual(&sp)?;
                k.set_column(col, &((rp - rm) / (2.0 * h)));
            }
            let du = k.lu().solve(&(-&r)).ok_or(StructureError::Singular)?;
            for (i, &(n, d)) in free.iter().enumerate() {
                s.u[n][d] += du[i];
            }
            r = residual(&s)?;
            // increments at roundoff level of the coordinates end the iteration
            if du.amax() <= 1e-13 * scale {
                return Ok((s, it + 1));
            }
        }
        if r.amax() <= tol * load_scale {
            return Ok((s, max_iter));
        }
        Err(StructureError::Newton { iterations: max_iter, residual: r.amax() })
    }
}

fn fd_jacobian(q0: [f64; 6], f: impl Fn(&[f64; 6]) -> [f64; 6], scale: [f64; 6]) -> [[f64; 6]; 6] {
    let mut k = [[0.0; 6]; 6];
    for j in 0..6 {
        let h = 1e-6 * scale[j];
        let mut qp = q0;
        qp[j] += h;
        let fp = f(&qp);
        qp[j] -= 2.0 * h;
        let fm = f(&qp);
        for i in 0..6 {
            k[i][j] = (fp[i] - fm[i]) / (2.0 * h);
        }
    }
    k
}

// ---------------------------------------------------------------------------
// folded canopy

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LineShape {
    Straight,
    Catenary,
}

/// Two-dimensional disk-gap-band cross-section. The axis is `+x`; the canopy
/// sits downstream of the confluence point, which is clamped.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CanopyGeometry {
    pub confluence: Vec2,
    pub line_length: f64,
    pub disk_diameter: f64,
    pub vent_diameter: f64,
    pub gap_height: f64,
    pub band_height: f64,
    /// Angles from the centre line after folding, degrees.
    pub inner_fold_deg: f64,
    pub outer_fold_deg: f64,
    /// Radial position of the fold between inner and outer panels as a
    /// fraction of the disk annulus.
    pub fold_fraction: f64,
    pub line_shape: LineShape,
    /// Target element length.
    pub element_length: f64,
}

impl Default for CanopyGeometry {
    fn default() -> Self {
        CanopyGeometry {
            confluence: [0.0, 0.0],
            line_length: 35.826,
            disk_diameter: 15.447,
            vent_diameter: 1.576,
            gap_height: 0.904,
            band_height: 2.580,
            inner_fold_deg: 23.5,
            outer_fold_deg: 27.5,
            fold_fraction: 0.5,
            line_shape: LineShape::Straight,
            element_length: 0.5,
        }
    }
}

/// Node ranges of one canopy half.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CanopyHalf {
    /// Vent edge to disk edge.
    pub disk: Vec<usize>,
    /// Disk edge to band trailing edge.
    pub gap: Vec<usize>,
    /// Band trailing edge to skirt.
    pub band: Vec<usize>,
    /// Skirt to confluence (the last entry is the shared confluence node).
    pub line: Vec<usize>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FoldedCanopy {
    pub structure: Structure,
    /// Displacement and rotation of the folded configuration.
    pub initial: Vec<Dofs>,
    pub halves: [CanopyHalf; 2],
    pub confluence: usize,
    /// Beams of the canopy fabric (disk and band).
    pub canopy_beams: Vec<usize>,
    pub gap_beams: Vec<usize>,
    pub line_beams: Vec<usize>,
}

fn linspace(a: Vec2, b: Vec2, n: usize) -> Vec<Vec2> {
    (0..=n).map(|k| crate::geom::lerp(a, b, k as f64 / n as f64)).collect()
}

fn subdivide(a: Vec2, b: Vec2, h: f64) -> Vec<Vec2> {
    linspace(a, b, ((norm(sub(b, a)) / h - 1e-9).ceil() as usize).max(1))
}

/// Points of a catenary of arc length `len` hanging between `a` and `b`,
/// sagging towards `side` (a unit vector), sampled at `n + 1` equal arc
/// lengths. Falls back to a straight line when the chord is not shorter than
/// the length.
fn catenary(a: Vec2, b: Vec2, len: f64, side: Vec2, n: usize) -> Vec<Vec2> {
    let ch = sub(b, a);
    let d = norm(ch);
    if d >= len * (1.0 - 1e-12) {
        return linspace(a, b, n);
    }
    let t = [ch[0] / d, ch[1] / d];
    let mut p = [-t[1], t[0]];
    if dot(p, side) < 0.0 {
        p = [-p[0], -p[1]];
    }
    // len = 2 c sinh(d / 2c), monotone decreasing in c
    let (mut lo, mut hi) = (1e-6 * d, 1e6 * d);
    for _ in 0..200 {
        let c = (lo * hi).sqrt();
        if 2.0 * c * (d / (2.0 * c)).sinh() > len {
            lo = c;
        } else {
            hi = c;
        }
    }
    let c = (lo * hi).sqrt();
    let s0 = c * (d / (2.0 * c)).sinh();
    (0..=n)
        .map(|k| {
            let s = len * k as f64 / n as f64;
            let xi = d / 2.0 + c * ((s - s0) / c).asinh();
            let eta = c * (d / (2.0 * c)).cosh() - c * ((xi - d / 2.0) / c).cosh();
            add(add(a, [t[0] * xi, t[1] * xi]), [p[0] * eta, p[1] * eta])
        })
        .collect()
}

/// As-built canopy cross-section plus its folded line-stretch configuration.
/// Each disk panel is rotated rigidly about the vent edge chain so that it
/// makes the configured angle with the centre line; gap and band translate
/// with the disk edge. Nodes shared by differently rotated panels take the
/// mean rotation, which leaves bending prestress in the adjacent elements
/// only.
pub fn folded_geometry(g: &CanopyGeometry, fabric: Material, line: Material) -> Result<FoldedCanopy, StructureError> {
    for a in [g.inner_fold_deg, g.outer_fold_deg] {
        if !(a > 0.0 && a < 90.0) {
            return Err(StructureError::FoldAngle(a));
        }
    }
    folded_geometry_raw(g, fabric, line)
}

/// Like [`folded_geometry`] but accepts 90 degree folds, which reproduce the
/// as-built shape.
pub fn folded_geometry_raw(g: &CanopyGeometry, fabric: Material, line: Material) -> Result<FoldedCanopy, StructureError> {
    let rv = 0.5 * g.vent_diameter;
    let rd = 0.5 * g.disk_diameter;
    let rf = rv + g.fold_fraction * (rd - rv);
    let h = g.element_length;
    let skirt_axial = (g.line_length * g.line_length - rd * rd).sqrt();
    let x_disk = g.confluence[0] + skirt_axial + g.band_height + g.gap_height;

    let mut model = StructuralModel { materials: vec![fabric, line], ..Default::default() };
    let mut initial: Vec<Dofs> = Vec::new();
    let mut canopy_beams = Vec::new();
    let mut gap_beams = Vec::new();
    let mut line_beams = Vec::new();
    let confluence = 0usize;
    model.nodes.push(g.confluence);
    initial.push([0.0; 3]);
    model.clamp(confluence);

    let fold = |deg: f64| (90.0 - deg).to_radians();
    let mut halves = Vec::new();
    for sign in [1.0, -1.0] {
        let y = |r: f64| sign * r;
        // reference polyline pieces
        let disk_in = subdivide([x_disk, y(rv)], [x_disk, y(rf)], h);
        let disk_out = subdivide([x_disk, y(rf)], [x_disk, y(rd)], h);
        let gap = subdivide([x_disk, y(rd)], [x_disk - g.gap_height, y(rd)], h);
        let band = subdivide([x_disk - g.gap_height, y(rd)], [x_disk - g.gap_height - g.band_height, y(rd)], h);
        // folded placement: rotate each disk panel about its inner end
        let rot_in = sign * fold(g.inner_fold_deg);
        let rot_out = sign * fold(g.outer_fold_deg);
        let p_in = |p: Vec2| add(disk_in[0], rotate(sub(p, disk_in[0]), rot_in));
        let fold_pt = p_in(disk_in[disk_in.len() - 1]);
        let p_out = |p: Vec2| add(fold_pt, rotate(sub(p, disk_out[0]), rot_out));
        let edge_ref = disk_out[disk_out.len() - 1];
        let shift = sub(p_out(edge_ref), edge_ref);

        let mut disk_ids = Vec::new();
        let push = |model: &mut StructuralModel, initial: &mut Vec<Dofs>, p: Vec2, q: Vec2, th: f64| {
            model.nodes.push(p);
            initial.push([q[0] - p[0], q[1] - p[1], th]);
            model.nodes.len() - 1
        };
        for (k, &p) in disk_in.iter().enumerate() {
            let th = if k + 1 == disk_in.len() { 0.5 * (rot_in + rot_out) } else { rot_in };
            disk_ids.push(push(&mut model, &mut initial, p, p_in(p), th));
        }
        for (k, &p) in disk_out.iter().enumerate().skip(1) {
            let th = if k + 1 == disk_out.len() { 0.5 * rot_out } else { rot_out };
            disk_ids.push(push(&mut model, &mut initial, p, p_out(p), th));
        }
        let mut gap_ids = vec![*disk_ids.last().unwrap()];
        for &p in gap.iter().skip(1) {
            gap_ids.push(push(&mut model, &mut initial, p, add(p, shift), 0.0));
        }
        let mut band_ids = vec![*gap_ids.last().unwrap()];
        for &p in band.iter().skip(1) {
            band_ids.push(push(&mut model, &mut initial, p, add(p, shift), 0.0));
        }
        for w in disk_ids.windows(2).chain(band_ids.windows(2)) {
            canopy_beams.push(model.beams.len());
            model.beams.push(Beam { nodes: [w[0], w[1]], material: 0 });
        }
        for w in gap_ids.windows(2) {
            gap_beams.push(model.beams.len());
            model.beams.push(Beam { nodes: [w[0], w[1]], material: 0 });
        }
        halves.push((disk_ids, gap_ids, band_ids, shift));
    }

    // straight lines keep full length by sliding the whole canopy downstream
    let skirt_r_folded = rd + halves[0].3[1];
    let slide = match g.line_shape {
        LineShape::Straight => {
            let ax = (g.line_length * g.line_length - skirt_r_folded * skirt_r_folded).sqrt();
            ax - skirt_axial - halves[0].3[0]
        }
        LineShape::Catenary => 0.0,
    };
    for q in initial.iter_mut().skip(1) {
        q[0] += slide;
    }

    let mut out_halves = Vec::new();
    for (s, (disk, gap, band, _)) in halves.into_iter().enumerate() {
        let skirt = *band.last().unwrap();
        let skirt_ref = model.nodes[skirt];
        let skirt_now = add(skirt_ref, [initial[skirt][0], initial[skirt][1]]);
        let n = ((g.line_length / h).ceil() as usize).max(1);
        let reference = linspace(skirt_ref, g.confluence, n);
        let folded = match g.line_shape {
            LineShape::Straight => linspace(skirt_now, g.confluence, n),
            LineShape::Catenary => {
                let side = if s == 0 { [0.0, 1.0] } else { [0.0, -1.0] };
                catenary(skirt_now, g.confluence, g.line_length, side, n)
            }
        };
        let mut ids = vec![skirt];
        for k in 1..n {
            model.nodes.push(reference[k]);
            initial.push([folded[k][0] - reference[k][0], folded[k][1] - reference[k][1], 0.0]);
            ids.push(model.nodes.len() - 1);
        }
        ids.push(confluence);
        // line nodal rotations follow the local chord so straight lines are
        // stress free
        for k in 1..n {
            let ang_ref = {
                let d = sub(reference[k + 1], reference[k - 1]);
                d[1].atan2(d[0])
            };
            let d = sub(folded[k + 1], folded[k - 1]);
            initial[ids[k]][2] = wrap_angle(d[1].atan2(d[0]) - ang_ref);
        }
        for w in ids.windows(2) {
            line_beams.push(model.beams.len());
            model.beams.push(Beam { nodes: [w[0], w[1]], material: 1 });
        }
        out_halves.push(CanopyHalf { disk, gap, band, line: ids });
    }
    let structure = Structure::new(model)?;
    let [a, b]: [CanopyHalf; 2] = out_halves.try_into().expect("two halves");
    Ok(FoldedCanopy { structure, initial, halves: [a, b], confluence, canopy_beams, gap_beams, line_beams })
}

// ---------------------------------------------------------------------------
// text format

fn section_kw(m: &Section) -> String {
    match *m {
        Section::Membrane { thickness } => format!("membrane {thickness:e}"),
        Section::Beam { area, inertia, half_depth } => format!("beam {area:e} {inertia:e} {half_depth:e}"),
    }
}

pub fn write_model(m: &StructuralModel) -> String {
    let mut s = String::new();
    writeln!(s, "# fsikit structure v1").unwrap();
    writeln!(s, "nodes {}", m.nodes.len()).unwrap();
    for (i, p) in m.nodes.iter().enumerate() {
        writeln!(s, "{i} {:e} {:e}", p[0], p[1]).unwrap();
    }
    writeln!(s, "materials {}", m.materials.len()).unwrap();
    for (i, mat) in m.materials.iter().enumerate() {
        writeln!(s, "{i} {:e} {:e} {:e} {}", mat.e, mat.nu, mat.rho, section_kw(&mat.section)).unwrap();
    }
    writeln!(s, "beams {}", m.beams.len()).unwrap();
    for (i, b) in m.beams.iter().enumerate() {
        writeln!(s, "{i} {} {} {}", b.nodes[0], b.nodes[1], b.material).unwrap();
    }
    writeln!(s, "membranes {}", m.membranes.len()).unwrap();
    for (i, e) in m.membranes.iter().enumerate() {
        writeln!(s, "{i} {} {} {} {}", e.nodes[0], e.nodes[1], e.nodes[2], e.material).unwrap();
    }
    writeln!(s, "masses {}", m.point_masses.len()).unwrap();
    for &(n, mass) in &m.point_masses {
        writeln!(s, "{n} {mass:e}").unwrap();
    }
    writeln!(s, "constraints {}", m.constraints.len()).unwrap();
    for c in &m.constraints {
        writeln!(s, "{} {} {:e}", c.node, c.dof, c.rate).unwrap();
    }
    writeln!(s, "contact {} {:e} {:e}", m.contact.pairs.len(), m.contact.stiffness, m.contact.band).unwrap();
    for p in &m.contact.pairs {
        writeln!(s, "{} {} {}", p.node, p.segment[0], p.segment[1]).unwrap();
    }
    writeln!(s, "damping {:e}", m.damping).unwrap();
    s
}

struct Lines<'a> {
    it: Box<dyn Iterator<Item = (usize, &'a str)> + 'a>,
}

impl<'a> Lines<'a> {
    fn new(text: &'a str) -> Self {
        Lines {
            it: Box::new(
                text.lines().enumerate().map(|(i, l)| (i + 1, l.trim())).filter(|(_, l)| !l.is_empty() && !l.starts_with('#')),
            ),
        }
    }

    fn next(&mut self, what: &str) -> Result<(usize, Vec<&'a str>), StructureError> {
        self.it
            .next()
            .map(|(n, l)| (n, l.split_whitespace().collect()))
            .ok_or_else(|| StructureError::Parse { line: 0, msg: format!("unexpected end of file in {what}") })
    }

    fn header(&mut self, name: &str) -> Result<(usize, Vec<&'a str>), StructureError> {
        let (ln, f) = self.next(name)?;
        if f.first() != Some(&name) || f.len() < 2 {
            return Err(perr(ln, format!("expected `{name} <count>`")));
        }
        Ok((ln, f))
    }
}

fn perr(line: usize, msg: impl Into<String>) -> StructureError {
    StructureError::Parse { line, msg: msg.into() }
}

fn num<T: std::str::FromStr>(ln: usize, s: &str) -> Result<T, StructureError> {
    s.parse().map_err(|_| perr(ln, format!("cannot parse `{s}`")))
}

pub fn read_model(text: &str) -> Result<StructuralModel, StructureError> {
    let mut l = Lines::new(text);
    let mut m = StructuralModel::default();
    let rows = |l: &mut Lines<'_>, name: &str, width: usize| -> Result<Vec<(usize, Vec<String>)>, StructureError> {
        let (ln, h) = l.header(name)?;
        let n: usize = num(ln, h[1])?;
        let mut out = Vec::with_capacity(n);
        for _ in 0..n {
            let (ln, f) = l.next(name)?;
            if f.len() < width {
                return Err(perr(ln, format!("{name} rows need {width} fields")));
            }
            out.push((ln, f.iter().map(|s| s.to_string()).collect()));
        }
        Ok(out)
    };
    for (ln, f) in rows(&mut l, "nodes", 3)? {
        m.nodes.push([num(ln, &f[1])?, num(ln, &f[2])?]);
    }
    for (ln, f) in rows(&mut l, "materials", 5)? {
        let section = match (f[4].as_str(), f.len()) {
            ("membrane", 6) => Section::Membrane { thickness: num(ln, &f[5])? },
            ("beam", 8) => Section::Beam { area: num(ln, &f[5])?, inertia: num(ln, &f[6])?, half_depth: num(ln, &f[7])? },
            _ => return Err(perr(ln, "section is `membrane th` or `beam A I c`")),
        };
        m.materials.push(Material { e: num(ln, &f[1])?, nu: num(ln, &f[2])?, rho: num(ln, &f[3])?, section });
    }
    for (ln, f) in rows(&mut l, "beams", 4)? {
        m.beams.push(Beam { nodes: [num(ln, &f[1])?, num(ln, &f[2])?], material: num(ln, &f[3])? });
    }
    for (ln, f) in rows(&mut l, "membranes", 5)? {
        m.membranes.push(Membrane { nodes: [num(ln, &f[1])?, num(ln, &f[2])?, num(ln, &f[3])?], material: num(ln, &f[4])? });
    }
    for (ln, f) in rows(&mut l, "masses", 2)? {
        m.point_masses.push((num(ln, &f[0])?, num(ln, &f[1])?));
    }
    for (ln, f) in rows(&mut l, "constraints", 3)? {
        m.constraints.push(Constraint { node: num(ln, &f[0])?, dof: num(ln, &f[1])?, rate: num(ln, &f[2])? });
    }
    let (ln, h) = l.header("contact")?;
    if h.len() != 4 {
        return Err(perr(ln, "expected `contact <count> <stiffness> <band>`"));
    }
    let n: usize = num(ln, h[1])?;
    m.contact.stiffness = num(ln, h[2])?;
    m.contact.band = num(ln, h[3])?;
    for _ in 0..n {
        let (ln, f) = l.next("contact")?;
        if f.len() != 3 {
            return Err(perr(ln, "contact rows are `node a b`"));
        }
        m.contact.pairs.push(ContactPair { node: num(ln, f[0])?, segment: [num(ln, f[1])?, num(ln, f[2])?] });
    }
    let (ln, f) = l.next("damping")?;
    if f.len() != 2 || f[0] != "damping" {
        return Err(perr(ln, "expected `damping <c>`"));
    }
    m.damping = num(ln, f[1])?;
    Ok(m)
}

/// Columnar per-element stress table: `element kind axial_or_s11 s22 s12 von_mises`.
pub fn write_element_stresses(s: &Structure, state: &StructuralState) -> Result<String, StructureError> {
    let mut out = String::from("element kind s11 s22 s12 von_mises\n");
    for k in 0..s.model.beams.len() {
        let (_, r) = s.beam_force(k, state);
        let (area, _, _) = beam_section(&s.model.materials[s.model.beams[k].material]);
        writeln!(out, "{k} beam {:e} 0 0 {:e}", r.axial / area, r.fibre_stress).unwrap();
    }
    for k in 0..s.model.membranes.len() {
        let (_, st) = s.membrane_force(k, state)?;
        let c = st.cauchy;
        writeln!(out, "{} membrane {:e} {:e} {:e} {:e}", s.model.beams.len() + k, c[(0, 0)], c[(1, 1)], c[(0, 1)], st.von_mises)
            .unwrap();
    }
    Ok(out)
}
