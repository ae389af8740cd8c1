//! Staggered fluid-structure coupling: surface motion from the structure,
//! master-slave cable kinematics, load transfer back to the structure and the
//! coupled time step with its interface work audit.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::embedded::{classify, interface_power, surface_loads, EmbeddedSurface, FacetKind, GeometryError, InterfaceStatus, LoadReport};
use crate::fluid::{Domain, FluidError, FluidSolution, FluidSolver, Integrator, State};
use crate::gas::Conservative;
use crate::geom::{add, closest_on_segment, cross, dot, lerp, norm, rotate, sub, Vec2};
use crate::mesh::{DualMesh, Mesh};
use crate::structure::{Dofs, StructuralState, Structure, StructureError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CouplingError {
    #[error("slave node {node} is {distance:e} m from the nearest master, more than ten cable radii ({radius:e} m)")]
    Pairing { node: usize, distance: f64, radius: f64 },
    #[error("surface node {0} of a {1} facet has no structural counterpart")]
    Gap(usize, &'static str),
    #[error("surface node {0} refers to structural node {1} which does not exist")]
    Dangling(usize, usize),
    #[error("coupled step {step} at t = {t:e}: fluid: {source}")]
    Fluid { step: usize, t: f64, source: FluidError },
    #[error("coupled step {step} at t = {t:e}: structure: {source}")]
    Structure { step: usize, t: f64, source: StructureError },
    #[error("coupled step {step} at t = {t:e}: geometry: {source}")]
    Geometry { step: usize, t: f64, source: GeometryError },
}

/// Closest point on a master beam for one slave node.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MasterPoint {
    pub beam: usize,
    /// Parameter along the beam from its first node.
    pub s: f64,
    /// Slave position minus master position at pairing time.
    pub offset: Vec2,
    /// Master rotation at pairing time.
    pub theta0: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct MasterSlaveMap {
    /// `(surface node, master point)`.
    pub slaves: Vec<(usize, MasterPoint)>,
}

/// Kinematics of a master point: position, velocity, rotation and angular
/// velocity interpolated linearly along the beam.
fn master_state(structure: &Structure, state: &StructuralState, m: &MasterPoint) -> (Vec2, Vec2, f64, f64) {
    let [a, b] = structure.model.beams[m.beam].nodes;
    let x = lerp(structure.position(state, a), structure.position(state, b), m.s);
    let va = [state.v[a][0], state.v[a][1]];
    let vb = [state.v[b][0], state.v[b][1]];
    let v = lerp(va, vb, m.s);
    let th = (1.0 - m.s) * state.u[a][2] + m.s * state.u[b][2];
    let om = (1.0 - m.s) * state.v[a][2] + m.s * state.v[b][2];
    (x, v, th, om)
}

/// Pairs every node of cable-slave facets with the closest point on the
/// given beams. Equidistant candidates go to the lower beam id.
pub fn pair_slaves(
    surface: &EmbeddedSurface,
    structure: &Structure,
    state: &StructuralState,
    beams: &[usize],
    radius: f64,
) -> Result<MasterSlaveMap, CouplingError> {
    let mut is_slave = vec![false; surface.nodes.len()];
    for f in &surface.facets {
        if f.kind == FacetKind::CableSlave {
            for &n in &f.nodes {
                is_slave[n] = true;
            }
        }
    }
    let mut sorted = beams.to_vec();
    sorted.sort_unstable();
    sorted.dedup();
    let mut map = MasterSlaveMap::default();
    for (node, _) in is_slave.iter().enumerate().filter(|(_, s)| **s) {
        let p = surface.nodes[node];
        let mut best: Option<(f64, usize, f64)> = None;
        for &k in &sorted {
            let [a, b] = structure.model.beams[k].nodes;
            let (s, d2) = closest_on_segment(p, structure.position(state, a), structure.position(state, b));
            let d = d2.sqrt();
            let tie = 1e-12 * radius.max(d);
            if best.map_or(true, |(bd, _, _)| d < bd - tie) {
                best = Some((d, k, s));
            }
        }
        let Some((d, beam, s)) = best else {
            return Err(CouplingError::Pairing { node, distance: f64::INFINITY, radius });
        };
        if d > 10.0 * radius {
            return Err(CouplingError::Pairing { node, distance: d, radius });
        }
        let m = MasterPoint { beam, s, offset: [0.0; 2], theta0: 0.0 };
        let (x, _, th, _) = master_state(structure, state, &m);
        map.slaves.push((node, MasterPoint { offset: sub(p, x), theta0: th, ..m }));
    }
    Ok(map)
}

/// Slave displacement (relative to the pairing configuration) and velocity:
/// `u_S = u_M + R d - d`, `v_S = v_M + omega x R d`.
pub fn slave_kinematics(map: &MasterSlaveMap, structure: &Structure, state: &StructuralState, paired: &[Vec2]) -> Vec<(usize, Vec2, Vec2)> {
    map.slaves
        .iter()
        .map(|(node, m)| {
            let (x, v, th, om) = master_state(structure, state, m);
            let rd = rotate(m.offset, th - m.theta0);
            let pos = add(x, rd);
            (*node, sub(pos, paired[*node]), add(v, [-om * rd[1], om * rd[0]]))
        })
        .collect()
}

/// Resultant force and moment of the slave loads at each master point,
/// split to the beam nodes with the interpolation weights.
pub fn slave_forces_to_master(map: &MasterSlaveMap, structure: &Structure, state: &StructuralState, nodal: &[Vec2]) -> Vec<Dofs> {
    let mut out = vec![[0.0; 3]; structure.num_nodes()];
    for (node, m) in &map.slaves {
        let (_, _, th, _) = master_state(structure, state, m);
        let rd = rotate(m.offset, th - m.theta0);
        let f = nodal[*node];
        let mm = cross(rd, f);
        let [a, b] = structure.model.beams[m.beam].nodes;
        for (n, w) in [(a, 1.0 - m.s), (b, m.s)] {
            out[n][0] += w * f[0];
            out[n][1] += w * f[1];
            out[n][2] += w * mm;
        }
    }
    out
}

/// Hexagonal cable cross-sections (circumradius `radius`) centred on
/// stations spaced `spacing` apart along the given beams. Two vertices of each
/// hexagon sit on the station normal, so the polygon spans the cable diameter
/// across the flow.
pub fn cable_hexagons(structure: &Structure, state: &StructuralState, beams: &[usize], radius: f64, spacing: f64) -> EmbeddedSurface {
    let mut out = EmbeddedSurface::default();
    let mut carry = 0.5 * spacing;
    for &k in beams {
        let [a, b] = structure.model.beams[k].nodes;
        let (pa, pb) = (structure.position(state, a), structure.position(state, b));
        let len = norm(sub(pb, pa));
        let dir = sub(pb, pa);
        let ang = dir[1].atan2(dir[0]);
        let mut s = carry;
        while s < len {
            let c = lerp(pa, pb, s / len);
            let pts: Vec<Vec2> = (0..6).map(|i| add(c, rotate([radius, 0.0], ang + (0.5 + i as f64 / 3.0) * std::f64::consts::PI))).collect();
            let mut hex = EmbeddedSurface::polygon(&pts, 0.0, FacetKind::CableSlave);
            for f in hex.facets.iter_mut() {
                f.element = Some(k);
            }
            out.merge(&hex);
            s += spacing;
        }
        carry = s - len;
    }
    out
}

/// How every surface node follows the structure.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct InterfaceMap {
    /// Surface node coincides with a structural node.
    pub direct: Vec<Option<usize>>,
    pub slaves: MasterSlaveMap,
    /// Surface positions at pairing time.
    pub paired: Vec<Vec2>,
}

impl InterfaceMap {
    /// Checks that canopy facets sit on structural nodes and cable facets on
    /// paired slaves. Rigid facets may stay unmapped.
    pub fn new(surface: &EmbeddedSurface, structure: &Structure, direct: Vec<Option<usize>>, slaves: MasterSlaveMap) -> Result<Self, CouplingError> {
        let nn = surface.nodes.len();
        let mut direct = direct;
        direct.resize(nn, None);
        for (i, d) in direct.iter().enumerate() {
            if let Some(n) = d {
                if *n >= structure.num_nodes() {
                    return Err(CouplingError::Dangling(i, *n));
                }
            }
        }
        let mut slave = vec![false; nn];
        for (n, _) in &slaves.slaves {
            slave[*n] = true;
        }
        for f in &surface.facets {
            for &n in &f.nodes {
                match f.kind {
                    FacetKind::Canopy if direct[n].is_none() => return Err(CouplingError::Gap(n, "canopy")),
                    FacetKind::CableSlave if !slave[n] => return Err(CouplingError::Gap(n, "cable")),
                    _ => {}
                }
            }
        }
        Ok(InterfaceMap { direct, slaves, paired: surface.nodes.clone() })
    }

    /// Places the surface at the structural configuration.
    pub fn apply(&self, structure: &Structure, state: &StructuralState, surface: &mut EmbeddedSurface) {
        for (i, d) in self.direct.iter().enumerate() {
            if let Some(n) = *d {
                surface.nodes[i] = structure.position(state, n);
                surface.velocities[i] = [state.v[n][0], state.v[n][1]];
            }
        }
        for (node, du, v) in slave_kinematics(&self.slaves, structure, state, &self.paired) {
            surface.nodes[node] = add(self.paired[node], du);
            surface.velocities[node] = v;
        }
    }

    /// Structural load vector from nodal surface forces.
    pub fn loads(&self, structure: &Structure, state: &StructuralState, nodal: &[Vec2]) -> Vec<Dofs> {
        let mut out = slave_forces_to_master(&self.slaves, structure, state, nodal);
        for (i, d) in self.direct.iter().enumerate() {
            if let Some(n) = *d {
                out[n][0] += nodal[i][0];
                out[n][1] += nodal[i][1];
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CouplingConfig {
    /// Coupling step.
    pub dt: f64,
    /// Fluid steps per coupling step; 0 picks the smallest count that meets
    /// the fluid stability limit (explicit) or 1 (implicit).
    pub fluid_substeps: usize,
    /// Fraction of the structural critical step used by the subcycles.
    pub safety: f64,
    /// More subcycles than this shrink the coupling step instead.
    pub max_subcycles: usize,
    /// Steps between refreshes of the structural critical step.
    pub refresh_every: usize,
}

impl Default for CouplingConfig {
    fn default() -> Self {
        CouplingConfig { dt: 1e-5, fluid_substeps: 0, safety: 0.8, max_subcycles: 200, refresh_every: 10 }
    }
}

/// One coupled step's diagnostics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepReport {
    pub t: f64,
    pub dt: f64,
    pub fluid_steps: usize,
    pub subcycles: usize,
    pub uncovered: usize,
    /// Cumulative work done by the fluid on the surface, fluid side.
    pub work_fluid: f64,
    /// Cumulative work received by the structure.
    pub work_structure: f64,
}

/// Fluid, structure and interface advanced together.
#[derive(Debug, Clone)]
pub struct Coupled {
    pub mesh: Mesh,
    pub dual: DualMesh,
    pub surface: EmbeddedSurface,
    pub status: InterfaceStatus,
    pub fluid: FluidSolution,
    pub solver: FluidSolver,
    pub structure: Structure,
    pub state: StructuralState,
    pub map: InterfaceMap,
    /// Structural loads at the current time.
    pub loads: Vec<Dofs>,
    /// Facet forces at the current time.
    pub facet_forces: Vec<Vec2>,
    pub config: CouplingConfig,
    pub step: usize,
    pub work_fluid: f64,
    pub work_structure: f64,
    /// When set the surface stays where it is and the structure is not advanced.
    pub frozen: bool,
}

/// Everything a coupled run needs to continue, minus what can be rebuilt
/// from the mesh.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CoupledSnapshot {
    pub mesh: Mesh,
    pub surface: EmbeddedSurface,
    pub status: InterfaceStatus,
    pub fluid: FluidSolution,
    pub solver: FluidSolver,
    pub structure: Structure,
    pub state: StructuralState,
    pub map: InterfaceMap,
    pub loads: Vec<Dofs>,
    pub facet_forces: Vec<Vec2>,
    pub config: CouplingConfig,
    pub step: usize,
    pub work_fluid: f64,
    pub work_structure: f64,
    pub frozen: bool,
}

impl CoupledSnapshot {
    pub fn restore(self) -> Result<Coupled, crate::mesh::MeshError> {
        let dual = crate::mesh::build_dual(&self.mesh)?;
        Ok(Coupled {
            mesh: self.mesh,
            dual,
            surface: self.surface,
            status: self.status,
            fluid: self.fluid,
            solver: self.solver,
            structure: self.structure,
            state: self.state,
            map: self.map,
            loads: self.loads,
            facet_forces: self.facet_forces,
            config: self.config,
            step: self.step,
            work_fluid: self.work_fluid,
            work_structure: self.work_structure,
            frozen: self.frozen,
        })
    }
}

fn as_conservative(w: &[State]) -> Vec<Conservative> {
    w.iter().map(|w| Conservative::from_array(*w)).collect()
}

impl Coupled {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        mesh: Mesh,
        dual: DualMesh,
        surface: EmbeddedSurface,
        fluid: FluidSolution,
        solver: FluidSolver,
        structure: Structure,
        state: StructuralState,
        map: InterfaceMap,
        config: CouplingConfig,
    ) -> Result<Self, CouplingError> {
        let status = classify(&mesh, &dual, &surface).map_err(|source| CouplingError::Geometry { step: 0, t: fluid.t, source })?;
        let nf = surface.facets.len();
        let ns = structure.num_nodes();
        let mut c = Coupled {
            mesh,
            dual,
            surface,
            status,
            fluid,
            solver,
            structure,
            state,
            map,
            loads: vec![[0.0; 3]; ns],
            facet_forces: vec![[0.0; 2]; nf],
            config,
            step: 0,
            work_fluid: 0.0,
            work_structure: 0.0,
            frozen: false,
        };
        let report = c.compute_loads().map_err(|source| CouplingError::Geometry { step: 0, t: c.fluid.t, source })?;
        c.facet_forces = report.forces;
        Ok(c)
    }

    pub fn snapshot(&self) -> CoupledSnapshot {
        CoupledSnapshot {
            mesh: self.mesh.clone(),
            surface: self.surface.clone(),
            status: self.status.clone(),
            fluid: self.fluid.clone(),
            solver: self.solver.clone(),
            structure: self.structure.clone(),
            state: self.state.clone(),
            map: self.map.clone(),
            loads: self.loads.clone(),
            facet_forces: self.facet_forces.clone(),
            config: self.config,
            step: self.step,
            work_fluid: self.work_fluid,
            work_structure: self.work_structure,
            frozen: self.frozen,
        }
    }

    /// Rebuilds the interface status after a mesh or surface change.
    pub fn reclassify(&mut self) -> Result<(), GeometryError> {
        self.status = classify(&self.mesh, &self.dual, &self.surface)?;
        Ok(())
    }

    pub fn domain(&self) -> Domain<'_> {
        Domain { mesh: &self.mesh, dual: &self.dual, status: &self.status, surface: &self.surface }
    }

    fn compute_loads(&mut self) -> Result<LoadReport, GeometryError> {
        let w = as_conservative(&self.fluid.w);
        let r = surface_loads(&self.mesh, &self.dual, &self.status, &w, &self.surface, &self.solver.gas, &self.solver.config.interface)?;
        let nodal = r.nodal(&self.surface);
        self.loads = self.map.loads(&self.structure, &self.state, &nodal);
        Ok(r)
    }

    fn power(&self) -> Result<f64, GeometryError> {
        let w = as_conservative(&self.fluid.w);
        interface_power(&self.dual, &self.status, &w, &self.surface, &self.solver.gas, &self.solver.config.interface)
    }

    /// Structural state moved ahead by `dt` with constant acceleration, used
    /// to place the surface during the fluid step.
    fn predict(&self, dt: f64, velocity_at: f64) -> StructuralState {
        let mut p = self.state.clone();
        for n in 0..p.u.len() {
            for d in 0..3 {
                let (v, a) = (self.state.v[n][d], self.state.a[n][d]);
                p.u[n][d] += dt * v + 0.5 * dt * dt * a;
                p.v[n][d] = v + velocity_at * dt * a;
            }
        }
        p
    }

    /// One staggered step: predicted surface motion, fluid advance, interface
    /// loads, subcycled structure.
    pub fn advance(&mut self) -> Result<StepReport, CouplingError> {
        let step = self.step;
        let t0 = self.fluid.t;
        let geo = |source| CouplingError::Geometry { step, t: t0, source };
        let fl = |source| CouplingError::Fluid { step, t: t0, source };
        let st = |source| CouplingError::Structure { step, t: t0, source };

        // subcycle count, shrinking the coupling step if needed
        if !self.frozen && self.config.refresh_every > 0 && step % self.config.refresh_every == 0 {
            self.structure.refresh_critical_dt(&self.state);
        }
        let sub_dt = self.config.safety * self.structure.dt_crit;
        let mut dt = self.config.dt;
        let mut subcycles = if self.frozen { 0 } else { (dt / sub_dt).ceil().max(1.0) as usize };
        if subcycles > self.config.max_subcycles {
            subcycles = self.config.max_subcycles;
            dt = subcycles as f64 * sub_dt;
            self.config.dt = dt;
        }

        // surface at the predicted end-of-step position, moving with the
        // predicted mid-step velocity
        let old_active = self.status.active.clone();
        if !self.frozen {
            let mid = self.predict(dt, 0.5);
            self.map.apply(&self.structure, &mid, &mut self.surface);
            self.status = classify(&self.mesh, &self.dual, &self.surface).map_err(geo)?;
        }
        let uncovered = {
            let mut w = std::mem::take(&mut self.fluid.w);
            let n = self.solver.fill_uncovered(&self.domain(), &old_active, &mut w);
            self.fluid.w = w;
            n
        };
        if uncovered > 0 {
            // the previous level is no longer consistent with the node status
            self.fluid.w_prev = None;
        }

        // fluid
        let m = match (self.config.fluid_substeps, self.solver.config.integrator) {
            (0, Integrator::Bdf2) => 1,
            (0, Integrator::SspRk2) => {
                let limit = self.solver.stable_dt(&self.domain(), &self.fluid.w);
                (dt / limit).ceil().max(1.0) as usize
            }
            (m, _) => m,
        };
        let h = dt / m as f64;
        let mut p0 = if self.frozen { 0.0 } else { self.power().map_err(geo)? };
        for k in 0..m {
            let mut sol = std::mem::replace(&mut self.fluid, FluidSolution { w: Vec::new(), t: 0.0, dt: 0.0, w_prev: None });
            let target = t0 + (k + 1) as f64 * h;
            let r = {
                let dom = self.domain();
                let mut res = Ok(());
                let mut taken = 0.0;
                while taken < h * (1.0 - 1e-12) {
                    let step_dt = h - taken;
                    let info = match self.solver.config.integrator {
                        Integrator::SspRk2 => self.solver.advance_explicit(&dom, &mut sol, step_dt),
                        Integrator::Bdf2 => self.solver.advance_bdf2(&dom, &mut sol, step_dt),
                    };
                    match info {
                        Ok(info) => taken += info.dt,
                        Err(e) => {
                            res = Err(e);
                            break;
                        }
                    }
                }
                res
            };
            sol.t = target;
            self.fluid = sol;
            r.map_err(fl)?;
            if !self.frozen {
                let p1 = self.power().map_err(geo)?;
                self.work_fluid += 0.5 * (p0 + p1) * h;
                p0 = p1;
            }
        }

        // loads at the end of the step, wall moving with the predicted
        // end-of-step velocity
        let old_loads = self.loads.clone();
        if !self.frozen {
            let end = self.predict(dt, 1.0);
            self.map.apply(&self.structure, &end, &mut self.surface);
        }
        let report = self.compute_loads().map_err(geo)?;
        self.facet_forces = report.forces;

        // structure subcycles with interpolated loads
        if !self.frozen {
            let hs = dt / subcycles as f64;
            let start = old_loads;
            let mut f_prev = start.clone();
            for k in 0..subcycles {
                let w = (k + 1) as f64 / subcycles as f64;
                let f: Vec<Dofs> = start
                    .iter()
                    .zip(&self.loads)
                    .map(|(a, b)| std::array::from_fn(|d| a[d] + w * (b[d] - a[d])))
                    .collect();
                let next = self.structure.step(&self.state, &f, hs).map_err(st)?;
                for n in 0..next.u.len() {
                    for d in 0..3 {
                        self.work_structure += 0.5 * (f_prev[n][d] + f[n][d]) * (next.u[n][d] - self.state.u[n][d]);
                    }
                }
                self.state = next;
                f_prev = f;
            }
            self.state.t = self.fluid.t;
            self.map.apply(&self.structure, &self.state, &mut self.surface);
        }
        self.step += 1;
        Ok(StepReport {
            t: self.fluid.t,
            dt,
            fluid_steps: m,
            subcycles,
            uncovered,
            work_fluid: self.work_fluid,
            work_structure: self.work_structure,
        })
    }

    /// Plain-text dump of the coupled state for post-mortem analysis.
    pub fn diagnostics(&self) -> String {
        use std::fmt::Write as _;
        let mut s = String::new();
        writeln!(s, "step {} t {:e} dt {:e}", self.step, self.fluid.t, self.config.dt).unwrap();
        writeln!(s, "nodes {} inactive {} cut edges {}", self.mesh.vertices.len(), self.status.num_inactive(), self.status.num_intersected())
            .unwrap();
        writeln!(s, "structure nodes {} critical dt {:e}", self.structure.num_nodes(), self.structure.dt_crit).unwrap();
        writeln!(s, "work fluid {:e} structure {:e}", self.work_fluid, self.work_structure).unwrap();
        for (i, u) in self.state.u.iter().enumerate() {
            if u.iter().chain(&self.state.v[i]).any(|x| !x.is_finite()) {
                writeln!(s, "non-finite structural node {i}").unwrap();
            }
        }
        s
    }
}

/// Spring-mounted porous piston across a closed gas-filled tube: the model
/// problem for the interface work audit and the coupling-step convergence
/// study.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PistonProblem {
    pub cells: usize,
    pub gamma: f64,
    pub rho: f64,
    pub p: f64,
    pub alpha: f64,
    /// Piston mass per unit depth.
    pub mass: f64,
    /// Spring stiffness per unit depth.
    pub stiffness: f64,
    /// Initial displacement as a fraction of the cell size.
    pub amplitude: f64,
    pub dt: f64,
    pub fluid_substeps: usize,
}

impl Default for PistonProblem {
    fn default() -> Self {
        PistonProblem {
            cells: 100,
            gamma: 1.4,
            rho: 1.0,
            p: 1.0,
            alpha: 0.08,
            mass: 0.012,
            stiffness: 0.05,
            amplitude: 0.2,
            dt: 2e-3,
            fluid_substeps: 1,
        }
    }
}

impl PistonProblem {
    pub fn cell(&self) -> f64 {
        1.0 / self.cells as f64
    }

    /// Piston rest position, midway between two mesh columns.
    pub fn rest(&self) -> f64 {
        (self.cells / 2) as f64 * self.cell() + 0.5 * self.cell()
    }

    pub fn build(&self) -> Result<Coupled, Box<dyn std::error::Error + Send + Sync>> {
        use crate::fluid::FluidConfig;
        use crate::gas::{GasModel, Primitive};
        use crate::mesh::{build_dual, build_kuhn_grid, BoundaryKind, SideKinds};
        use crate::structure::{Constraint, Material, Section, StructuralModel};

        let h = self.cell();
        let mesh = build_kuhn_grid([0.0, 0.0], [1.0, h], self.cells, 1, SideKinds::all(BoundaryKind::SlipWall))?;
        let dual = build_dual(&mesh)?;
        let gas = GasModel::ideal(self.gamma);
        let rest = Primitive::new(self.rho, [0.0, 0.0], self.p);
        let fluid = FluidSolution::uniform(mesh.vertices.len(), &rest, &gas);
        let solver = FluidSolver::new(gas, FluidConfig::default(), rest);

        // spring as a massless truss from a clamped anchor
        let xp = self.rest();
        let ym = 0.5 * h;
        let spring = Material { e: self.stiffness, nu: 0.0, rho: 1e-12, section: Section::Beam { area: 1.0, inertia: 0.0, half_depth: 0.0 } };
        let mut model = StructuralModel {
            nodes: vec![[xp - 1.0, ym], [xp, ym]],
            materials: vec![spring],
            point_masses: vec![(1, self.mass)],
            ..Default::default()
        };
        model.beams.push(crate::structure::Beam { nodes: [0, 1], material: 0 });
        model.clamp(0);
        model.constraints.push(Constraint { node: 1, dof: 1, rate: 0.0 });
        model.constraints.push(Constraint { node: 1, dof: 2, rate: 0.0 });
        let structure = Structure::new(model)?;
        let eps = 1e-6 * h;
        let mut surface = EmbeddedSurface::polyline(&[[xp, -eps], [xp, h + eps]], self.alpha, FacetKind::CableSlave);
        surface.facets[0].element = Some(0);
        let st0 = StructuralState::zeros(2);
        let slaves = pair_slaves(&surface, &structure, &st0, &[0], h)?;
        let map = InterfaceMap::new(&surface, &structure, Vec::new(), slaves)?;
        let mut u0 = vec![[0.0; 3]; 2];
        u0[1][0] = self.amplitude * h;
        let state = structure.initial_state(u0, vec![[0.0; 3]; 2], &[[0.0; 3]; 2])?;
        let mut surface = surface;
        map.apply(&structure, &state, &mut surface);
        let config = CouplingConfig { dt: self.dt, fluid_substeps: self.fluid_substeps, ..Default::default() };
        let mut c = Coupled::new(mesh, dual, surface, fluid, solver, structure, state, map, config)?;
        // start from the loads of the initial configuration
        c.state = c.structure.initial_state(c.state.u.clone(), c.state.v.clone(), &c.loads)?;
        Ok(c)
    }
}

/// Per-cycle interface work balance of the piston: for every full
/// oscillation, the largest gap between the fluid-side and structure-side
/// cumulative work, relative to the largest structure-side work exchanged in
/// that cycle.
#[derive(Debug, Clone, PartialEq)]
pub struct WorkAudit {
    pub cycles: Vec<f64>,
    pub period: f64,
}

pub fn piston_work_audit(problem: &PistonProblem, cycles: usize) -> Result<WorkAudit, Box<dyn std::error::Error + Send + Sync>> {
    let mut c = problem.build()?;
    let x0 = c.state.u[1][0];
    // track up-crossings of the displacement through zero
    let mut prev = x0;
    let mut marks: Vec<(f64, usize)> = Vec::new();
    let mut history: Vec<(f64, f64)> = vec![(0.0, 0.0)];
    let max_steps = 2_000_000;
    for _ in 0..max_steps {
        let r = c.advance()?;
        let x = c.state.u[1][0];
        history.push((r.work_fluid, r.work_structure));
        if prev < 0.0 && x >= 0.0 {
            marks.push((r.t, history.len() - 1));
            if marks.len() > cycles {
                break;
            }
        }
        prev = x;
    }
    if marks.len() < 2 {
        return Err("piston did not complete a cycle".into());
    }
    let mut out = Vec::new();
    for w in marks.windows(2) {
        let (a, b) = (w[0].1, w[1].1);
        let (f0, s0) = history[a];
        let mut gap = 0.0f64;
        let mut swing = 0.0f64;
        for &(f, s) in &history[a..=b] {
            gap = gap.max(((f - f0) - (s - s0)).abs());
            swing = swing.max((s - s0).abs());
        }
        out.push(gap / swing);
    }
    let period = (marks[marks.len() - 1].0 - marks[0].0) / (marks.len() - 1) as f64;
    Ok(WorkAudit { cycles: out, period })
}

/// Piston displacement at time `t_end` for each coupling step in `dts`.
pub fn piston_displacements(problem: &PistonProblem, dts: &[f64], t_end: f64) -> Result<Vec<f64>, Box<dyn std::error::Error + Send + Sync>> {
    let mut out = Vec::new();
    for &dt in dts {
        let mut c = PistonProblem { dt, ..*problem }.build()?;
        let n = (t_end / dt).round() as usize;
        for _ in 0..n {
            c.advance()?;
        }
        out.push(c.state.u[1][0]);
    }
    Ok(out)
}

/// Observed orders from three or more successively halved step sizes.
pub fn observed_orders(values: &[f64]) -> Vec<f64> {
    values.windows(3).map(|w| ((w[0] - w[1]).abs() / (w[1] - w[2]).abs()).log2()).collect()
}

/// Rigid motion `x -> c + R(theta)(x - c) + shift` applied to a point.
pub fn rigid_point(x: Vec2, c: Vec2, theta: f64, shift: Vec2) -> Vec2 {
    add(add(c, rotate(sub(x, c), theta)), shift)
}

/// Work of slave forces against a rigid virtual motion `(du, dtheta)` about
/// `c`, evaluated at the slave positions.
pub fn slave_virtual_work(positions: &[Vec2], forces: &[Vec2], nodes: &[usize], c: Vec2, du: Vec2, dtheta: f64) -> f64 {
    nodes
        .iter()
        .map(|&n| {
            let r = sub(positions[n], c);
            let v = add(du, [-dtheta * r[1], dtheta * r[0]]);
            dot(forces[n], v)
        })
        .sum()
}
