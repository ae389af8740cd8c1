//! The shipped verification cases that do not need the phased runner.

use std::f64::consts::PI;

use crate::embedded::{classify, surface_loads, EmbeddedSurface, FacetKind, GeometryError, InterfaceStatus, LoadReport};
use crate::fluid::{write_field, Domain, FluidError, FluidSolution, FluidSolver, Integrator, State};
use crate::gas::{Conservative, Primitive};
use crate::geom::{lerp, norm, sub, Vec2};
use crate::mesh::{adapt, build_dual, build_kuhn_grid, hessian_indicator, AdaptLimits, BoundaryKind, DualMesh, Mesh, SideKinds};
use crate::riemann::{exact_riemann, State1d};
use crate::structure::{write_element_stresses, Constraint, Membrane, StructuralModel, StructuralState, Structure};

use super::config::{BodyConfig, BodyShape, Grips, ScenarioConfig};
use super::history::{drag_history, top_k_mean, HistoryRow, TimeHistory};
use super::{BoxError, Output, Phase, ScenarioError};

/// A flow solve on a fixed mesh around a fixed surface.
#[derive(Debug, Clone)]
pub struct Flow {
    pub mesh: Mesh,
    pub dual: DualMesh,
    pub surface: EmbeddedSurface,
    pub status: InterfaceStatus,
    pub solver: FluidSolver,
    pub sol: FluidSolution,
    pub steps: usize,
}

impl Flow {
    pub fn new(mesh: Mesh, surface: EmbeddedSurface, solver: FluidSolver, init: impl Fn(Vec2) -> Primitive) -> Result<Self, BoxError> {
        let w: Vec<State> =
            mesh.vertices.iter().map(|&x| crate::gas::to_conservative(&init(x), &solver.gas).to_array()).collect();
        Self::with_field(mesh, surface, solver, w, 0.0, None)
    }

    /// Flow from a nodal field. Nodes that are active now but were not in
    /// `old_active` (shorter vectors count missing entries as inactive) take
    /// neighbour averages.
    pub fn with_field(
        mesh: Mesh,
        surface: EmbeddedSurface,
        solver: FluidSolver,
        w: Vec<State>,
        t: f64,
        old_active: Option<&[bool]>,
    ) -> Result<Self, BoxError> {
        let dual = build_dual(&mesh)?;
        let status = classify(&mesh, &dual, &surface)?;
        let mut flow = Flow { mesh, dual, surface, status, solver, sol: FluidSolution { w, t, dt: 0.0, w_prev: None }, steps: 0 };
        if let Some(old) = old_active {
            let mut prev = old.to_vec();
            prev.resize(flow.mesh.vertices.len(), false);
            let mut w = std::mem::take(&mut flow.sol.w);
            flow.solver.fill_uncovered(&flow.domain(), &prev, &mut w);
            flow.sol.w = w;
        }
        Ok(flow)
    }

    pub fn domain(&self) -> Domain<'_> {
        Domain { mesh: &self.mesh, dual: &self.dual, status: &self.status, surface: &self.surface }
    }

    /// One step of at most the stable size, not beyond `t_end`.
    pub fn step_towards(&mut self, t_end: f64) -> Result<f64, FluidError> {
        let dom = Domain { mesh: &self.mesh, dual: &self.dual, status: &self.status, surface: &self.surface };
        let limit = self.solver.stable_dt(&dom, &self.sol.w);
        let left = t_end - self.sol.t;
        let dt = step_size(limit, left);
        let t0 = self.sol.t;
        match self.solver.config.integrator {
            Integrator::SspRk2 => self.solver.advance_explicit(&dom, &mut self.sol, dt)?,
            Integrator::Bdf2 => self.solver.advance_bdf2(&dom, &mut self.sol, dt)?,
        };
        if left <= limit * (1.0 + 1e-9) && self.sol.t - t0 == dt {
            self.sol.t = t_end;
        }
        self.steps += 1;
        Ok(self.sol.t - t0)
    }

    pub fn done(&self, t_end: f64) -> bool {
        self.sol.t >= t_end - 1e-12 * t_end.abs().max(1e-300)
    }

    pub fn loads(&self) -> Result<LoadReport, GeometryError> {
        let w: Vec<Conservative> = self.sol.w.iter().map(|w| Conservative::from_array(*w)).collect();
        surface_loads(&self.mesh, &self.dual, &self.status, &w, &self.surface, &self.solver.gas, &self.solver.config.interface)
    }

    pub fn density(&self) -> Vec<f64> {
        self.sol.w.iter().map(|w| w[0]).collect()
    }
}

/// Stable step, stretched to land exactly on the end of the interval when
/// it is within rounding of it.
pub(crate) fn step_size(limit: f64, left: f64) -> f64 {
    if left <= limit * (1.0 + 1e-9) {
        left
    } else {
        limit
    }
}

pub(crate) fn base_mesh(cfg: &ScenarioConfig) -> Result<Mesh, ScenarioError> {
    let d = &cfg.domain;
    build_kuhn_grid(d.lo, d.hi, d.nx, d.ny, d.sides).map_err(|e| ScenarioError::Config(e.to_string()))
}

/// Background grid refined towards `segments` for the configured number of
/// rounds.
pub(crate) fn refined_mesh(cfg: &ScenarioConfig, segments: &[[Vec2; 2]]) -> Result<Mesh, ScenarioError> {
    let mut mesh = base_mesh(cfg)?;
    let limits = AdaptLimits { hessian_threshold: f64::INFINITY, ..cfg.amr.limits };
    for _ in 0..cfg.amr.initial_rounds {
        let n = mesh.vertices.len();
        let a = adapt::<0>(&mesh, &[], segments, &limits, &vec![[]; n])
            .map_err(|e| ScenarioError::numerical(Phase::Setup, 0, 0.0, e))?;
        if a.marked == 0 {
            break;
        }
        mesh = a.mesh;
    }
    Ok(mesh)
}

pub(crate) fn sod_mesh(cfg: &ScenarioConfig) -> Result<Mesh, ScenarioError> {
    let n = cfg.sod.cells;
    build_kuhn_grid([0.0, 0.0], [1.0, 1.0 / n as f64], n, 1, SideKinds::all(BoundaryKind::SlipWall))
        .map_err(|e| ScenarioError::Config(e.to_string()))
}

fn subdivide_into(points: &mut Vec<Vec2>, a: Vec2, b: Vec2, h: f64) {
    let n = ((norm(sub(b, a)) / h).ceil() as usize).max(1);
    for k in 0..n {
        points.push(lerp(a, b, k as f64 / n as f64));
    }
}

/// Closed counter-clockwise polygon of the forebody, tagged rigid.
pub fn body_surface(b: &BodyConfig) -> Result<EmbeddedSurface, ScenarioError> {
    let [x0, y0] = b.nose;
    let mut pts = Vec::new();
    match b.shape {
        BodyShape::Cylinder => {
            let r = 0.5 * b.diameter;
            let n = ((PI * b.diameter / b.element).ceil() as usize).max(12);
            for k in 0..n {
                let a = PI + 2.0 * PI * k as f64 / n as f64;
                pts.push([x0 + r + r * a.cos(), y0 + r * a.sin()]);
            }
        }
        BodyShape::Capsule => {
            let th = b.cone_half_angle_deg.to_radians();
            let rn = b.nose_radius;
            let c = [x0 + rn, y0];
            let (a0, a1) = (0.5 * PI + th, 1.5 * PI - th);
            let arc = ((rn * (a1 - a0) / b.element).ceil() as usize).max(2);
            for k in 0..arc {
                let a = a0 + (a1 - a0) * k as f64 / arc as f64;
                pts.push([c[0] + rn * a.cos(), c[1] + rn * a.sin()]);
            }
            let t_low = [c[0] + rn * a1.cos(), c[1] + rn * a1.sin()];
            let half = 0.5 * b.diameter;
            let xs = t_low[0] + (half - (y0 - t_low[1])) / th.tan();
            let xr = x0 + b.length;
            if xs >= xr {
                return Err(ScenarioError::Config("body.length is shorter than the heat shield".into()));
            }
            let rr = 0.5 * b.rear_diameter;
            let corners = [t_low, [xs, y0 - half], [xr, y0 - rr], [xr, y0 + rr], [xs, y0 + half], [t_low[0], 2.0 * y0 - t_low[1]]];
            for w in corners.windows(2) {
                subdivide_into(&mut pts, w[0], w[1], b.element);
            }
        }
    }
    let s = EmbeddedSurface::polygon(&pts, 0.0, FacetKind::RigidBody);
    s.validate().map_err(|e| ScenarioError::Config(e.to_string()))?;
    Ok(s)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SodResult {
    pub cells: usize,
    pub steps: usize,
    /// Profile along the bottom row of nodes.
    pub x: Vec<f64>,
    pub rho: Vec<f64>,
    pub exact: Vec<f64>,
    /// Volume-weighted density error per unit tube length.
    pub l1: f64,
}

pub fn run_sod(cfg: &ScenarioConfig) -> Result<SodResult, ScenarioError> {
    let s = &cfg.sod;
    let mesh = sod_mesh(cfg)?;
    let height = 1.0 / s.cells as f64;
    let gas = cfg.gas;
    let left = Primitive::new(s.left[0], [s.left[1], 0.0], s.left[2]);
    let right = Primitive::new(s.right[0], [s.right[1], 0.0], s.right[2]);
    let solver = FluidSolver::new(gas, cfg.fluid, left);
    let setup = |e: BoxError| ScenarioError::numerical(Phase::Setup, 0, 0.0, e);
    let mut flow = Flow::new(mesh, EmbeddedSurface::default(), solver, |x| if x[0] < s.diaphragm { left } else { right })
        .map_err(setup)?;
    while !flow.done(s.t_end) {
        flow.step_towards(s.t_end).map_err(|e| ScenarioError::numerical(Phase::Rigid, flow.steps, flow.sol.t, e))?;
    }
    let exact = exact_riemann(&State1d::new(left.rho, left.v[0], left.p), &State1d::new(right.rho, right.v[0], right.p), gas.gamma)
        .map_err(|e| ScenarioError::Config(e.to_string()))?;
    let rho_exact = |x: f64| exact.sample((x - s.diaphragm) / s.t_end).0.rho;
    let mut l1 = 0.0;
    let mut profile = Vec::new();
    for (i, p) in flow.mesh.vertices.iter().enumerate() {
        let (r, e) = (flow.sol.w[i][0], rho_exact(p[0]));
        l1 += flow.dual.volumes[i] * (r - e).abs() / height;
        if p[1] == 0.0 {
            profile.push((p[0], r, e));
        }
    }
    profile.sort_by(|a, b| a.0.total_cmp(&b.0));
    Ok(SodResult {
        cells: s.cells,
        steps: flow.steps,
        x: profile.iter().map(|p| p.0).collect(),
        rho: profile.iter().map(|p| p.1).collect(),
        exact: profile.iter().map(|p| p.2).collect(),
        l1,
    })
}

/// Distance from `nose_x` upstream to where the density on the line
/// `y = axis_y` first climbs through `rho_mid`.
pub fn standoff_distance(mesh: &Mesh, w: &[State], active: &[bool], axis_y: f64, nose_x: f64, rho_mid: f64) -> Option<f64> {
    let tol = 1e-9 * (1.0 + axis_y.abs() + nose_x.abs());
    let mut line: Vec<(f64, f64)> = mesh
        .vertices
        .iter()
        .enumerate()
        .filter(|(i, p)| active[*i] && (p[1] - axis_y).abs() <= tol && p[0] < nose_x)
        .map(|(i, p)| (p[0], w[i][0]))
        .collect();
    line.sort_by(|a, b| a.0.total_cmp(&b.0));
    for k in 1..line.len() {
        let ((xa, ra), (xb, rb)) = (line[k - 1], line[k]);
        if ra <= rho_mid && rb > rho_mid {
            let x = xa + (rho_mid - ra) / (rb - ra) * (xb - xa);
            return Some(nose_x - x);
        }
    }
    None
}

#[derive(Debug, Clone, PartialEq)]
pub struct BluffLevel {
    pub level: usize,
    pub nodes: usize,
    pub h_min: f64,
    pub standoff: Option<f64>,
    pub drag: f64,
    pub t: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BluffResult {
    pub levels: Vec<BluffLevel>,
    pub history: TimeHistory,
    /// Density behind a normal shock at the freestream Mach number.
    pub shock_density: f64,
}

fn body_row(flow: &Flow, dir: Vec2, phase: Phase) -> Result<HistoryRow, ScenarioError> {
    let loads = flow.loads().map_err(|e| ScenarioError::numerical(phase, flow.steps, flow.sol.t, e))?;
    let d = drag_history(&loads.forces, &flow.surface, dir);
    Ok(HistoryRow { t: flow.sol.t, drag_total: d.total, drag_body: d.body, drag_canopy: d.canopy, drag_cables: d.cables, ..Default::default() })
}

/// Rigid forebody in a uniform stream with solution-adaptive refinement
/// levels. Each level ends with a bow shock standoff measurement.
pub fn run_bluffbody(cfg: &ScenarioConfig, out: &mut Output) -> Result<BluffResult, ScenarioError> {
    let surface = body_surface(&cfg.body)?;
    let segments = surface.segments();
    let mesh = refined_mesh(cfg, &segments)?;
    let gas = cfg.gas;
    let inf = cfg.freestream.primitive(&gas);
    let dir = cfg.freestream.direction();
    let solver = FluidSolver::new(gas, cfg.fluid, inf);
    let mut flow = Flow::new(mesh, surface, solver, |_| inf).map_err(|e| ScenarioError::numerical(Phase::Setup, 0, 0.0, e))?;
    let (g, m2) = (gas.gamma, cfg.freestream.mach.powi(2));
    let shock_density = inf.rho * (g + 1.0) * m2 / ((g - 1.0) * m2 + 2.0);
    let rho_mid = inf.rho + 0.5 * (shock_density - inf.rho);
    let [nose_x, axis_y] = cfg.body.nose;

    let mut history = TimeHistory::default();
    let mut levels = Vec::new();
    let mut t_end = cfg.phases.rigid;
    for level in 0..=cfg.amr.levels {
        if level > 0 {
            for _ in 0..cfg.amr.rounds_per_level {
                flow = refine_on_density(flow, cfg, &segments)?;
            }
            t_end += cfg.amr.level_time;
        }
        out.log(format!("level {level}: {} nodes, {} triangles", flow.mesh.vertices.len(), flow.mesh.triangles.len()));
        while !flow.done(t_end) {
            flow.step_towards(t_end).map_err(|e| ScenarioError::numerical(Phase::Rigid, flow.steps, flow.sol.t, e))?;
            if flow.steps % cfg.output.history_every == 0 {
                history.push_new(body_row(&flow, dir, Phase::Rigid)?)?;
            }
        }
        let row = body_row(&flow, dir, Phase::Rigid)?;
        history.push_new(row)?;
        let standoff = standoff_distance(&flow.mesh, &flow.sol.w, &flow.status.active, axis_y, nose_x, rho_mid);
        let h_min = (0..flow.mesh.triangles.len()).map(|t| flow.mesh.diameter(t)).fold(f64::INFINITY, f64::min);
        out.log(format!("level {level}: t = {:.6e}, standoff {standoff:?}, drag {:.6e}", flow.sol.t, row.drag_body));
        if out.has_dir() {
            out.write(&format!("field_level{level}.txt"), &write_field(&flow.mesh, &flow.sol, &flow.status.active, &gas))?;
        }
        levels.push(BluffLevel { level, nodes: flow.mesh.vertices.len(), h_min, standoff, drag: row.drag_body, t: flow.sol.t });
    }
    Ok(BluffResult { levels, history, shock_density })
}

fn refine_on_density(flow: Flow, cfg: &ScenarioConfig, segments: &[[Vec2; 2]]) -> Result<Flow, ScenarioError> {
    let rho = flow.density();
    let mut scores = hessian_indicator(&flow.mesh, &flow.dual, &rho);
    for (t, tri) in flow.mesh.triangles.iter().enumerate() {
        if tri.iter().any(|&v| !flow.status.active[v]) {
            scores[t] = 0.0;
        }
    }
    let max = scores.iter().cloned().fold(0.0, f64::max);
    let limits = AdaptLimits { hessian_threshold: cfg.amr.hessian_fraction * max, ..cfg.amr.limits };
    let a = adapt(&flow.mesh, &scores, segments, &limits, &flow.sol.w)
        .map_err(|e| ScenarioError::numerical(Phase::Rigid, flow.steps, flow.sol.t, e))?;
    let steps = flow.steps;
    let t = flow.sol.t;
    let mut next = Flow::with_field(a.mesh, flow.surface, flow.solver, a.field, t, Some(&flow.status.active))
        .map_err(|e| ScenarioError::numerical(Phase::Rigid, steps, t, e))?;
    next.steps = steps;
    Ok(next)
}

#[derive(Debug, Clone, PartialEq)]
pub struct PorousResult {
    pub alphas: Vec<f64>,
    /// Time-averaged mass flux through the sheet, per unit depth.
    pub flux: Vec<f64>,
    /// History of the last sweep member.
    pub history: TimeHistory,
}

/// Channel flow through a porous sheet for each configured porosity.
pub fn run_porous_membrane(cfg: &ScenarioConfig, out: &mut Output) -> Result<PorousResult, ScenarioError> {
    let m = &cfg.membrane;
    let gas = cfg.gas;
    let inf = cfg.freestream.primitive(&gas);
    let dir = cfg.freestream.direction();
    let (lo, hi) = (cfg.domain.lo, cfg.domain.hi);
    let eps = 1e-3 * (hi[1] - lo[1]);
    let mut flux = Vec::new();
    let mut history = TimeHistory::default();
    for &alpha in &m.alphas {
        let surface = EmbeddedSurface::polyline(&[[m.x, lo[1] - eps], [m.x, hi[1] + eps]], alpha, FacetKind::Canopy);
        let solver = FluidSolver::new(gas, cfg.fluid, inf);
        let mut flow = Flow::new(base_mesh(cfg)?, surface, solver, |_| inf)
            .map_err(|e| ScenarioError::numerical(Phase::Setup, 0, 0.0, e))?;
        let fail = |flow: &Flow, e: BoxError| ScenarioError::numerical(Phase::Fixed, flow.steps, flow.sol.t, e);
        let start = (1.0 - m.average) * m.t_end;
        let (mut acc, mut span) = (0.0, 0.0);
        history = TimeHistory::default();
        while !flow.done(m.t_end) {
            let dt = flow.step_towards(m.t_end).map_err(|e| fail(&flow, e.into()))?;
            if flow.sol.t > start {
                let f = flow.solver.interface_mass_flux(&flow.domain(), &flow.sol.w, dir).map_err(|e| fail(&flow, e.into()))?;
                acc += f * dt;
                span += dt;
            }
            if flow.steps % cfg.output.history_every == 0 || flow.done(m.t_end) {
                let loads = flow.loads().map_err(|e| fail(&flow, e.into()))?;
                let d = drag_history(&loads.forces, &flow.surface, dir);
                history.push_new(HistoryRow {
                    t: flow.sol.t,
                    drag_total: d.total,
                    drag_body: d.body,
                    drag_canopy: d.canopy,
                    drag_cables: d.cables,
                    ..Default::default()
                })?;
            }
        }
        let mean = if span > 0.0 { acc / span } else { 0.0 };
        out.log(format!("alpha {alpha}: {} steps, transmitted mass flux {mean:.9e}", flow.steps));
        out.write(&format!("history_alpha_{alpha}.csv"), &history.to_csv())?;
        flux.push(mean);
    }
    Ok(PorousResult { alphas: m.alphas.clone(), flux, history })
}

#[derive(Debug, Clone, PartialEq)]
pub struct CouponResult {
    pub grips: Grips,
    pub steps: usize,
    /// Regression slope of centre axial stress on centre axial strain.
    pub modulus: f64,
    pub expected: f64,
    pub modulus_error: f64,
    /// Largest `| vm - |s22| | / |s22|` over the probe region at the end.
    pub vm_error: f64,
    pub probe_elements: usize,
    pub center_strain: f64,
    pub center_stress: f64,
    pub history: TimeHistory,
}

/// Triangulated coupon, bottom edge held, top edge pulled along `+y`.
pub(crate) fn coupon_structure(cfg: &ScenarioConfig) -> Result<Structure, ScenarioError> {
    let c = &cfg.coupon;
    let (w, h) = (c.width.0, c.height.0);
    let (nx, ny) = (c.nx, c.ny);
    let id = |i: usize, j: usize| j * (nx + 1) + i;
    let mut model = StructuralModel { materials: vec![c.fabric.membrane()], damping: c.damping, ..Default::default() };
    for j in 0..=ny {
        for i in 0..=nx {
            model.nodes.push([w * i as f64 / nx as f64, h * j as f64 / ny as f64]);
        }
    }
    for j in 0..ny {
        for i in 0..nx {
            let (a, b, cc, d) = (id(i, j), id(i + 1, j), id(i + 1, j + 1), id(i, j + 1));
            model.membranes.push(Membrane { nodes: [a, b, cc], material: 0 });
            model.membranes.push(Membrane { nodes: [a, cc, d], material: 0 });
        }
    }
    for i in 0..=nx {
        let (bottom, top) = (id(i, 0), id(i, ny));
        model.constraints.push(Constraint { node: bottom, dof: 1, rate: 0.0 });
        model.constraints.push(Constraint { node: top, dof: 1, rate: c.rate.0 });
        if c.grips == Grips::Clamped {
            model.constraints.push(Constraint { node: bottom, dof: 0, rate: 0.0 });
            model.constraints.push(Constraint { node: top, dof: 0, rate: 0.0 });
        }
    }
    if c.grips == Grips::Sliding {
        model.constraints.push(Constraint { node: id(0, 0), dof: 0, rate: 0.0 });
    }
    Structure::new(model).map_err(|e| ScenarioError::Config(e.to_string()))
}

/// Constant-rate tensile pull by damped explicit dynamics.
pub fn run_coupon(cfg: &ScenarioConfig, out: &mut Output) -> Result<CouponResult, ScenarioError> {
    let c = &cfg.coupon;
    let (w, h) = (c.width.0, c.height.0);
    let structure = coupon_structure(cfg)?;
    let nn = structure.num_nodes();
    let zeros = vec![[0.0; 3]; nn];
    let fail = |step: usize, t: f64, e: crate::structure::StructureError| ScenarioError::numerical(Phase::Coupled, step, t, e);
    let mut state: StructuralState = structure.initial_state(zeros.clone(), zeros.clone(), &zeros).map_err(|e| fail(0, 0.0, e))?;
    let t_end = c.strain * h / c.rate.0;
    let steps = (t_end / (c.safety * structure.dt_crit)).ceil() as usize;
    let dt = t_end / steps as f64;

    let centroid = |k: usize| {
        let [a, b, d] = structure.model.membranes[k].nodes.map(|n| structure.model.nodes[n]);
        [(a[0] + b[0] + d[0]) / 3.0, (a[1] + b[1] + d[1]) / 3.0]
    };
    let centre = [0.5 * w, 0.5 * h];
    let ne = structure.model.membranes.len();
    let probe_el = (0..ne)
        .min_by(|&a, &b| norm(sub(centroid(a), centre)).total_cmp(&norm(sub(centroid(b), centre))))
        .expect("coupon has elements");
    let probe: Vec<usize> = (0..ne)
        .filter(|&k| {
            let p = centroid(k);
            (p[0] - centre[0]).abs() <= 0.5 * c.probe * w && (p[1] - centre[1]).abs() <= 0.5 * c.probe * h
        })
        .collect();

    let mut samples: Vec<(f64, f64)> = Vec::new();
    let mut history = TimeHistory::default();
    for k in 1..=steps {
        state = structure.step(&state, &zeros, dt).map_err(|e| fail(k, state.t, e))?;
        if state.t >= 0.25 * t_end {
            let (_, st) = structure.membrane_force(probe_el, &state).map_err(|e| fail(k, state.t, e))?;
            samples.push((st.green[(1, 1)], st.cauchy[(1, 1)]));
        }
        if k % cfg.output.history_every == 0 || k == steps {
            let vm = structure.element_von_mises(&state).map_err(|e| fail(k, state.t, e))?;
            history.push(HistoryRow {
                t: state.t,
                vm_max: vm.iter().cloned().fold(0.0, f64::max),
                vm_topk: top_k_mean(&vm, cfg.output.top_k),
                ..Default::default()
            })?;
        }
    }
    let n = samples.len() as f64;
    let (me, ms) = samples.iter().fold((0.0, 0.0), |a, s| (a.0 + s.0 / n, a.1 + s.1 / n));
    let (sxy, sxx) = samples.iter().fold((0.0, 0.0), |a, s| (a.0 + (s.0 - me) * (s.1 - ms), a.1 + (s.0 - me).powi(2)));
    let modulus = sxy / sxx;
    let expected = c.fabric.e;

    let mut vm_error: f64 = 0.0;
    for &k in &probe {
        let (_, st) = structure.membrane_force(k, &state).map_err(|e| fail(steps, state.t, e))?;
        let axial = st.cauchy[(1, 1)].abs();
        vm_error = vm_error.max((st.von_mises - axial).abs() / axial);
    }
    let (_, centre_stress) = structure.membrane_force(probe_el, &state).map_err(|e| fail(steps, state.t, e))?;
    out.log(format!("coupon {}: {steps} steps of {dt:.3e} s, modulus {modulus:.6e}, probe error {vm_error:.3e}", c.grips.as_str()));
    if out.has_dir() {
        let text = write_element_stresses(&structure, &state).map_err(|e| fail(steps, state.t, e))?;
        out.write("stress.txt", &text)?;
    }
    Ok(CouponResult {
        grips: c.grips,
        steps,
        modulus,
        expected,
        modulus_error: (modulus - expected).abs() / expected,
        vm_error,
        probe_elements: probe.len(),
        center_strain: centre_stress.green[(1, 1)],
        center_stress: centre_stress.cauchy[(1, 1)],
        history,
    })
}

