//! Embedded discrete interfaces: exact edge/facet intersection, node status,
//! interface fluxes for impermeable and porous walls, ghost values for the
//! viscous terms, and surface loads.

use std::collections::VecDeque;
use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gas::{to_primitive, Conservative, GasModel, Primitive};
use crate::geom::{dot, lerp, norm, scale, sub, Vec2};
use crate::mesh::{segment_box, BoxGrid, DualMesh, Mesh};
use crate::riemann::{half_riemann_wall_limited, roe_flux_prim, Flux, HalfRiemannMode, RiemannError, WallRiemann};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("facet {0} is degenerate")]
    DegenerateFacet(usize),
    #[error("facet {facet} has porosity {alpha} outside [0, 1]")]
    Porosity { facet: usize, alpha: f64 },
    #[error("rigid-body surface leaks: node {node} has {degree} incident rigid facets")]
    Leak { node: usize, degree: usize },
    #[error("facet {facet} references missing node {node}")]
    MissingNode { facet: usize, node: usize },
    #[error("surface file line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error(transparent)]
    Riemann(#[from] RiemannError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FacetKind {
    Canopy,
    CableSlave,
    RigidBody,
}

impl FacetKind {
    pub fn as_str(self) -> &'static str {
        match self {
            FacetKind::Canopy => "canopy",
            FacetKind::CableSlave => "cable",
            FacetKind::RigidBody => "rigid",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "canopy" => Some(FacetKind::Canopy),
            "cable" => Some(FacetKind::CableSlave),
            "rigid" => Some(FacetKind::RigidBody),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Facet {
    pub nodes: [usize; 2],
    pub alpha: f64,
    pub kind: FacetKind,
    /// Structural element this facet is attached to, if any.
    pub element: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct EmbeddedSurface {
    pub nodes: Vec<Vec2>,
    pub velocities: Vec<Vec2>,
    pub facets: Vec<Facet>,
}

impl EmbeddedSurface {
    /// Closed polygon through `points` (counter-clockwise for an outward normal).
    pub fn polygon(points: &[Vec2], alpha: f64, kind: FacetKind) -> Self {
        let n = points.len();
        let facets = (0..n)
            .map(|k| Facet { nodes: [k, (k + 1) % n], alpha, kind, element: None })
            .collect();
        Self { nodes: points.to_vec(), velocities: vec![[0.0; 2]; n], facets }
    }

    /// Open polyline through `points`.
    pub fn polyline(points: &[Vec2], alpha: f64, kind: FacetKind) -> Self {
        let facets = (0..points.len().saturating_sub(1))
            .map(|k| Facet { nodes: [k, k + 1], alpha, kind, element: Some(k) })
            .collect();
        Self { nodes: points.to_vec(), velocities: vec![[0.0; 2]; points.len()], facets }
    }

    /// Appends `other`, renumbering its nodes.
    pub fn merge(&mut self, other: &EmbeddedSurface) {
        let off = self.nodes.len();
        self.nodes.extend_from_slice(&other.nodes);
        self.velocities.extend_from_slice(&other.velocities);
        self.facets.extend(other.facets.iter().map(|f| Facet { nodes: [f.nodes[0] + off, f.nodes[1] + off], ..*f }));
    }

    pub fn segment(&self, f: usize) -> [Vec2; 2] {
        let [a, b] = self.facets[f].nodes;
        [self.nodes[a], self.nodes[b]]
    }

    pub fn segments(&self) -> Vec<[Vec2; 2]> {
        (0..self.facets.len()).map(|f| self.segment(f)).collect()
    }

    pub fn length(&self, f: usize) -> f64 {
        let [a, b] = self.segment(f);
        norm(sub(b, a))
    }

    /// Unit normal `(dy, -dx) / L`, pointing to the right of `a -> b`.
    pub fn normal(&self, f: usize) -> Vec2 {
        let [a, b] = self.segment(f);
        let d = sub(b, a);
        scale([d[1], -d[0]], 1.0 / norm(d))
    }

    /// Velocity at parameter `s` along facet `f`.
    pub fn velocity_at(&self, f: usize, s: f64) -> Vec2 {
        let [a, b] = self.facets[f].nodes;
        lerp(self.velocities[a], self.velocities[b], s)
    }

    pub fn validate(&self) -> Result<(), GeometryError> {
        let mut degree = vec![0usize; self.nodes.len()];
        for (i, f) in self.facets.iter().enumerate() {
            for &n in &f.nodes {
                if n >= self.nodes.len() {
                    return Err(GeometryError::MissingNode { facet: i, node: n });
                }
            }
            if !(0.0..=1.0).contains(&f.alpha) {
                return Err(GeometryError::Porosity { facet: i, alpha: f.alpha });
            }
            if self.length(i) == 0.0 {
                return Err(GeometryError::DegenerateFacet(i));
            }
            if f.kind == FacetKind::RigidBody {
                degree[f.nodes[0]] += 1;
                degree[f.nodes[1]] += 1;
            }
        }
        if let Some((node, &d)) = degree.iter().enumerate().find(|(_, &d)| d != 0 && d != 2) {
            return Err(GeometryError::Leak { node, degree: d });
        }
        Ok(())
    }

    pub fn translate(&mut self, by: Vec2) {
        for p in &mut self.nodes {
            p[0] += by[0];
            p[1] += by[1];
        }
    }
}

fn sign(x: f64) -> i8 {
    if x > 0.0 {
        1
    } else if x < 0.0 {
        -1
    } else {
        0
    }
}

#[inline]
fn orient_exact(a: Vec2, b: Vec2, c: Vec2) -> f64 {
    robust::orient2d(
        robust::Coord { x: a[0], y: a[1] },
        robust::Coord { x: b[0], y: b[1] },
        robust::Coord { x: c[0], y: c[1] },
    )
}

/// Side of point `p` relative to segment `ab` after translating the segment by
/// the infinitesimal `(eps, eps^2)`; never zero for a non-degenerate segment.
pub fn side_of_facet(a: Vec2, b: Vec2, p: Vec2) -> i8 {
    let o = sign(orient_exact(a, b, p));
    if o != 0 {
        return o;
    }
    let d = sub(b, a);
    if d[1] != 0.0 {
        sign(d[1])
    } else {
        sign(-d[0])
    }
}

/// Side of the translated facet endpoint `a` relative to the edge `pq`.
fn side_of_edge(p: Vec2, q: Vec2, a: Vec2) -> i8 {
    let o = sign(orient_exact(p, q, a));
    if o != 0 {
        return o;
    }
    let d = sub(q, p);
    if d[1] != 0.0 {
        sign(-d[1])
    } else {
        sign(d[0])
    }
}

/// Exact crossing test between mesh edge `pq` and facet `ab` (with the
/// symbolic perturbation of the facet). Returns the parameters along the edge
/// and along the facet.
pub fn segments_cross(p: Vec2, q: Vec2, a: Vec2, b: Vec2) -> Option<(f64, f64)> {
    let sp = side_of_facet(a, b, p);
    let sq = side_of_facet(a, b, q);
    if sp == sq {
        return None;
    }
    let sa = side_of_edge(p, q, a);
    let sb = side_of_edge(p, q, b);
    if sa == sb {
        return None;
    }
    let op = orient_exact(a, b, p);
    let oq = orient_exact(a, b, q);
    let t = if op == oq { 0.5 } else { (op / (op - oq)).clamp(0.0, 1.0) };
    let oa = orient_exact(p, q, a);
    let ob = orient_exact(p, q, b);
    let s = if oa == ob { 0.5 } else { (oa / (oa - ob)).clamp(0.0, 1.0) };
    Some((t, s))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Crossing {
    pub facet: usize,
    /// Parameter along the edge, measured from its first node.
    pub t: f64,
    /// Parameter along the facet.
    pub s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EdgeIntersection {
    pub count: usize,
    /// Crossing closest to the first node of the edge.
    pub near_i: Crossing,
    /// Crossing closest to the second node.
    pub near_j: Crossing,
    /// Product of the porosities of all crossings.
    pub alpha: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct InterfaceStatus {
    pub active: Vec<bool>,
    /// Indexed like `DualMesh::edges`.
    pub edges: Vec<Option<EdgeIntersection>>,
}

impl InterfaceStatus {
    pub fn is_intersected(&self, e: usize) -> bool {
        self.edges[e].is_some()
    }

    pub fn num_intersected(&self) -> usize {
        self.edges.iter().filter(|e| e.is_some()).count()
    }

    pub fn num_inactive(&self) -> usize {
        self.active.iter().filter(|a| !**a).count()
    }
}

/// Intersects every dual edge with the surface and flood-fills node status
/// from the boundary of the mesh. Regions reachable only through impermeable
/// facets are inactive.
pub fn classify(mesh: &Mesh, dual: &DualMesh, surface: &EmbeddedSurface) -> Result<InterfaceStatus, GeometryError> {
    surface.validate()?;
    let n = mesh.vertices.len();
    if surface.facets.is_empty() {
        return Ok(InterfaceStatus { active: vec![true; n], edges: vec![None; dual.edges.len()] });
    }
    let boxes: Vec<_> = surface.segments().iter().map(|s| segment_box(s[0], s[1])).collect();
    let grid = BoxGrid::new(&boxes, 2);
    let edges: Vec<Option<EdgeIntersection>> = dual
        .edges
        .par_iter()
        .map_init(Vec::new, |hits, e| {
            let (p, q) = (mesh.vertices[e[0]], mesh.vertices[e[1]]);
            let bb = segment_box(p, q);
            grid.query(bb[0], bb[1], hits);
            let mut found: Option<EdgeIntersection> = None;
            for &f in hits.iter() {
                let [a, b] = surface.segment(f);
                if let Some((t, s)) = segments_cross(p, q, a, b) {
                    let c = Crossing { facet: f, t, s };
                    let alpha = surface.facets[f].alpha;
                    found = Some(match found {
                        None => EdgeIntersection { count: 1, near_i: c, near_j: c, alpha },
                        Some(mut x) => {
                            x.count += 1;
                            x.alpha *= alpha;
                            if t < x.near_i.t {
                                x.near_i = c;
                            }
                            if t > x.near_j.t {
                                x.near_j = c;
                            }
                            x
                        }
                    });
                }
            }
            found
        })
        .collect();

    let mut active = vec![false; n];
    let mut queue = VecDeque::new();
    for f in &dual.boundary_facets {
        if !active[f.node] {
            active[f.node] = true;
            queue.push_back(f.node);
        }
    }
    while let Some(i) = queue.pop_front() {
        for &(e, j) in dual.neighbors(i) {
            if active[j] {
                continue;
            }
            let open = match &edges[e] {
                None => true,
                Some(x) => x.alpha > 0.0,
            };
            if open {
                active[j] = true;
                queue.push_back(j);
            }
        }
    }
    Ok(InterfaceStatus { active, edges })
}

/// Which flux is used against the wall state.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WallFlux {
    /// Exact Riemann flux sampled at the interface.
    #[default]
    Godunov,
    /// Roe flux between the fluid state and the wall state.
    Roe,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct InterfaceOptions {
    pub half_riemann: HalfRiemannMode,
    pub wall_flux: WallFlux,
    pub entropy_fix: f64,
}

impl Default for InterfaceOptions {
    fn default() -> Self {
        Self { half_riemann: HalfRiemannMode::Exact, wall_flux: WallFlux::Godunov, entropy_fix: 0.05 }
    }
}

/// Godunov flux of the one-sided problem at the fixed interface, evaluated in
/// the normal frame so that an impermeable stationary wall carries no mass.
pub fn wall_godunov_flux(wr: &WallRiemann, nu: Vec2) -> Flux {
    let area = norm(nu);
    let g = wr.gamma;
    let s = {
        let v = wr.sample(0.0);
        // recover the 1D normal velocity exactly when the star state is sampled
        let un = if v.rho == wr.star.rho && v.p == wr.star.p { wr.star.u } else { dot(v.v, wr.normal) };
        (v, un)
    };
    let (v, un) = s;
    let e = v.p / (g - 1.0) + 0.5 * v.rho * dot(v.v, v.v);
    let m = v.rho * un * area;
    [m, m * v.v[0] + v.p * nu[0], m * v.v[1] + v.p * nu[1], (e + v.p) * un * area]
}

/// Flux `Phi(W_i, W_i^R, nu)` across a wall moving with normal velocity
/// `wall_vn` (measured along `nu`).
pub fn wall_flux(
    wi: &Primitive,
    nu: Vec2,
    wall_vn: f64,
    gas: &GasModel,
    opts: &InterfaceOptions,
) -> Result<(Flux, WallRiemann), RiemannError> {
    let n = scale(nu, 1.0 / norm(nu));
    let wr = half_riemann_wall_limited(wi, n, wall_vn, gas, opts.half_riemann)?;
    let flux = match opts.wall_flux {
        WallFlux::Godunov => wall_godunov_flux(&wr, nu),
        WallFlux::Roe => roe_flux_prim(wi, &wr.star_primitive(), nu, gas, opts.entropy_fix)?,
    };
    Ok((flux, wr))
}

/// Porous-wall blend `(1 - alpha) Phi(W_i, W_i^R, nu) + alpha Phi(W_i, W_j, nu)`.
pub fn interface_convective_flux(
    wi: &Primitive,
    wj: &Primitive,
    nu: Vec2,
    wall_vn: f64,
    alpha: f64,
    gas: &GasModel,
    opts: &InterfaceOptions,
) -> Result<Flux, RiemannError> {
    let ws = if alpha < 1.0 { wall_flux(wi, nu, wall_vn, gas, opts)?.0 } else { [0.0; 4] };
    let ff = if alpha > 0.0 { roe_flux_prim(wi, wj, nu, gas, opts.entropy_fix)? } else { [0.0; 4] };
    Ok(blend(&ws, &ff, alpha))
}

pub fn blend(ws: &Flux, ff: &Flux, alpha: f64) -> Flux {
    let mut out = [0.0; 4];
    for k in 0..4 {
        out[k] = (1.0 - alpha) * ws[k] + alpha * ff[k];
    }
    out
}

/// `alpha V_j + (1 - alpha) V_j^g`, componentwise.
pub fn porous_ghost_average<const N: usize>(real: &[f64; N], ghost: &[f64; N], alpha: f64) -> [f64; N] {
    let mut out = [0.0; N];
    for k in 0..N {
        out[k] = alpha * real[k] + (1.0 - alpha) * ghost[k];
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Extrapolation {
    #[default]
    Constant,
    Linear,
}

/// Ghost velocity at a node across the interface, seen from a real node with
/// velocity `v_real`; the interface sits at fraction `t` of the way from the
/// real node to the ghost node and moves with `v_wall`.
pub fn ghost_velocity(v_real: Vec2, v_wall: Vec2, t: f64, mode: Extrapolation) -> Vec2 {
    match mode {
        Extrapolation::Constant => v_wall,
        Extrapolation::Linear if t >= 0.1 => {
            let k = 1.0 / t;
            [v_real[0] + (v_wall[0] - v_real[0]) * k, v_real[1] + (v_wall[1] - v_real[1]) * k]
        }
        Extrapolation::Linear => v_wall,
    }
}

/// Velocity and temperature values used by node `viewer` for the nodes of
/// triangle `tri`: real values on its side of the interface, ghosts across it
/// (blended with the real value on porous crossings), adiabatic temperature.
pub fn populate_ghosts(
    dual: &DualMesh,
    status: &InterfaceStatus,
    surface: &EmbeddedSurface,
    tri: &[usize; 3],
    viewer: usize,
    vel: &[Vec2],
    temp: &[f64],
    mode: Extrapolation,
) -> [[f64; 3]; 3] {
    let mut out = [[0.0; 3]; 3];
    for (k, &m) in tri.iter().enumerate() {
        let real = [vel[m][0], vel[m][1], temp[m]];
        if m == viewer {
            out[k] = real;
            continue;
        }
        let e = dual.neighbors(viewer).iter().find(|&&(_, j)| j == m).map(|&(e, _)| e);
        let crossing = e.and_then(|e| status.edges[e].as_ref().map(|x| (e, x)));
        out[k] = match crossing {
            None if status.active[m] => real,
            None => [vel[viewer][0], vel[viewer][1], temp[viewer]],
            Some((e, x)) => {
                let forward = dual.edges[e][0] == viewer;
                let c = if forward { x.near_i } else { x.near_j };
                let t = if forward { c.t } else { 1.0 - c.t };
                let vw = surface.velocity_at(c.facet, c.s);
                let g = ghost_velocity(vel[viewer], vw, t, mode);
                let ghost = [g[0], g[1], temp[viewer]];
                if status.active[m] && x.alpha > 0.0 {
                    porous_ghost_average(&real, &ghost, x.alpha)
                } else {
                    ghost
                }
            }
        };
    }
    out
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct LoadReport {
    pub forces: Vec<Vec2>,
    /// Facet sides with no active fluid nearby.
    pub unwetted_sides: usize,
}

impl LoadReport {
    /// Work-equivalent split of facet forces to surface nodes.
    pub fn nodal(&self, surface: &EmbeddedSurface) -> Vec<Vec2> {
        let mut out = vec![[0.0; 2]; surface.nodes.len()];
        for (f, force) in surface.facets.iter().zip(&self.forces) {
            for &n in &f.nodes {
                out[n][0] += 0.5 * force[0];
                out[n][1] += 0.5 * force[1];
            }
        }
        out
    }

    pub fn total(&self) -> Vec2 {
        self.forces.iter().fold([0.0, 0.0], |a, f| [a[0] + f[0], a[1] + f[1]])
    }
}

/// Pressure force on every facet from the fluid on both of its sides.
///
/// The side pressure is the mean half-Riemann pressure over the edges that the
/// facet cuts from an active node on that side; without such edges the
/// nearest visible active node on that side within a few facet lengths is used.
pub fn surface_loads(
    mesh: &Mesh,
    dual: &DualMesh,
    status: &InterfaceStatus,
    state: &[Conservative],
    surface: &EmbeddedSurface,
    gas: &GasModel,
    opts: &InterfaceOptions,
) -> Result<LoadReport, GeometryError> {
    let nf = surface.facets.len();
    // [left, right] accumulated pressure and weight
    let mut acc = vec![[[0.0f64; 2]; 2]; nf];
    for (e, x) in status.edges.iter().enumerate() {
        let Some(x) = x else { continue };
        let [i, j] = dual.edges[e];
        let nu = dual.normals[e];
        for (node, c, dir) in [(i, x.near_i, 1.0), (j, x.near_j, -1.0)] {
            if !status.active[node] {
                continue;
            }
            let w = to_primitive(&state[node], gas).map_err(|_| RiemannError::InvalidState { rho: state[node].rho, p: f64::NAN })?;
            let nvec = scale(nu, dir / norm(nu));
            let vw = dot(surface.velocity_at(c.facet, c.s), nvec);
            let wr = half_riemann_wall_limited(&w, nvec, vw, gas, opts.half_riemann)?;
            let [a, b] = surface.segment(c.facet);
            let side = if side_of_facet(a, b, mesh.vertices[node]) > 0 { 0 } else { 1 };
            acc[c.facet][side][0] += wr.star.p;
            acc[c.facet][side][1] += 1.0;
        }
    }

    let node_boxes: Vec<_> = mesh.vertices.iter().map(|&p| [p, p]).collect();
    let grid = BoxGrid::new(&node_boxes, 4);
    let mut hits = Vec::new();
    let facet_boxes: Vec<_> = surface.segments().iter().map(|s| segment_box(s[0], s[1])).collect();
    let facet_grid = BoxGrid::new(&facet_boxes, 2);
    let mut blockers = Vec::new();
    let mut report = LoadReport { forces: vec![[0.0; 2]; nf], unwetted_sides: 0 };
    for f in 0..nf {
        let [a, b] = surface.segment(f);
        let len = surface.length(f);
        let n = surface.normal(f);
        let mut p_side = [None, None];
        for side in 0..2 {
            if acc[f][side][1] > 0.0 {
                p_side[side] = Some(acc[f][side][0] / acc[f][side][1]);
            }
        }
        if p_side.iter().any(Option::is_none) {
            let mid = lerp(a, b, 0.5);
            for side in 0..2 {
                let want = if side == 0 { 1 } else { -1 };
                // widen the search until some node on this side is in range;
                // if none of those is visible the side is dry
                let mut r = 3.0 * len;
                for _ in 0..6 {
                    if p_side[side].is_some() {
                        break;
                    }
                    grid.query([mid[0] - r, mid[1] - r], [mid[0] + r, mid[1] + r], &mut hits);
                    let mut cands: Vec<(f64, usize)> = hits
                        .iter()
                        .filter(|&&v| status.active[v] && side_of_facet(a, b, mesh.vertices[v]) == want)
                        .map(|&v| {
                            let d = sub(mesh.vertices[v], mid);
                            (dot(d, d), v)
                        })
                        .filter(|&(d2, _)| d2 <= r * r)
                        .collect();
                    if cands.is_empty() {
                        r *= 2.0;
                        continue;
                    }
                    cands.sort_by(|x, y| x.0.total_cmp(&y.0).then(x.1.cmp(&y.1)));
                    // first candidate visible from the facet midpoint
                    let best = cands.into_iter().find(|&(_, v)| {
                        let p = mesh.vertices[v];
                        let bb = segment_box(mid, p);
                        facet_grid.query(bb[0], bb[1], &mut blockers);
                        blockers.iter().all(|&g| {
                            g == f || {
                                let [c, d] = surface.segment(g);
                                segments_cross(mid, p, c, d).is_none()
                            }
                        })
                    });
                    if let Some((_, v)) = best {
                        let w = to_primitive(&state[v], gas)
                            .map_err(|_| RiemannError::InvalidState { rho: state[v].rho, p: f64::NAN })?;
                        p_side[side] = Some(w.p);
                    }
                    break;
                }
            }
        }
        let mut dp = 0.0;
        // the fluid on the left of a -> b pushes along +n
        match p_side[0] {
            Some(p) => dp += p,
            None => report.unwetted_sides += 1,
        }
        match p_side[1] {
            Some(p) => dp -= p,
            None => report.unwetted_sides += 1,
        }
        let k = (1.0 - surface.facets[f].alpha) * dp * len;
        report.forces[f] = scale(n, k);
    }
    Ok(report)
}

/// Rate of work done by the fluid on the moving surface as the discrete
/// interface fluxes see it: the half-Riemann pressure on every cut edge side
/// times the wall velocity along the edge, weighted by the solid fraction.
pub fn interface_power(
    dual: &DualMesh,
    status: &InterfaceStatus,
    state: &[Conservative],
    surface: &EmbeddedSurface,
    gas: &GasModel,
    opts: &InterfaceOptions,
) -> Result<f64, GeometryError> {
    let mut power = 0.0;
    for (e, x) in status.edges.iter().enumerate() {
        let Some(x) = x else { continue };
        let [i, j] = dual.edges[e];
        let nu = dual.normals[e];
        let area = norm(nu);
        for (node, c, dir) in [(i, x.near_i, 1.0), (j, x.near_j, -1.0)] {
            if !status.active[node] {
                continue;
            }
            let w = to_primitive(&state[node], gas).map_err(|_| RiemannError::InvalidState { rho: state[node].rho, p: f64::NAN })?;
            let nvec = scale(nu, dir / area);
            let vw = dot(surface.velocity_at(c.facet, c.s), nvec);
            if vw == 0.0 {
                continue;
            }
            let wr = half_riemann_wall_limited(&w, nvec, vw, gas, opts.half_riemann)?;
            power += (1.0 - x.alpha) * wr.star.p * vw * area;
        }
    }
    Ok(power)
}

/// Plain-text surface file.
pub fn write_surface(s: &EmbeddedSurface) -> String {
    let mut out = String::new();
    writeln!(out, "# fsikit surface v1").unwrap();
    writeln!(out, "nodes {}", s.nodes.len()).unwrap();
    for (i, (p, v)) in s.nodes.iter().zip(&s.velocities).enumerate() {
        writeln!(out, "{i} {:e} {:e} {:e} {:e}", p[0], p[1], v[0], v[1]).unwrap();
    }
    writeln!(out, "facets {}", s.facets.len()).unwrap();
    for (i, f) in s.facets.iter().enumerate() {
        let el = f.element.map_or(-1, |e| e as i64);
        writeln!(out, "{i} {} {} {} {} {el}", f.nodes[0], f.nodes[1], f.alpha, f.kind.as_str()).unwrap();
    }
    out
}

fn parse_err(line: usize, msg: impl Into<String>) -> GeometryError {
    GeometryError::Parse { line, msg: msg.into() }
}

fn section_count<'a>(cursor: &mut impl Iterator<Item = (usize, &'a str)>, name: &str) -> Result<usize, GeometryError> {
    let (ln, l) = cursor.next().ok_or_else(|| parse_err(0, format!("missing `{name}` section")))?;
    let mut it = l.split_whitespace();
    if it.next() != Some(name) {
        return Err(parse_err(ln, format!("expected `{name} <count>`")));
    }
    it.next().and_then(|c| c.parse().ok()).ok_or_else(|| parse_err(ln, "bad count"))
}

pub fn read_surface(text: &str) -> Result<EmbeddedSurface, GeometryError> {
    let mut cursor = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'));
    let nn = section_count(&mut cursor, "nodes")?;
    let mut s = EmbeddedSurface::default();
    for _ in 0..nn {
        let (ln, l) = cursor.next().ok_or_else(|| parse_err(0, "truncated node table"))?;
        let f: Vec<f64> = l
            .split_whitespace()
            .skip(1)
            .map(str::parse)
            .collect::<Result<_, _>>()
            .map_err(|_| parse_err(ln, "bad number"))?;
        if f.len() != 4 {
            return Err(parse_err(ln, "node rows are `id x y vx vy`"));
        }
        s.nodes.push([f[0], f[1]]);
        s.velocities.push([f[2], f[3]]);
    }
    let nf = section_count(&mut cursor, "facets")?;
    for _ in 0..nf {
        let (ln, l) = cursor.next().ok_or_else(|| parse_err(0, "truncated facet table"))?;
        let f: Vec<&str> = l.split_whitespace().collect();
        if f.len() != 6 {
            return Err(parse_err(ln, "facet rows are `id a b alpha kind element`"));
        }
        let a: usize = f[1].parse().map_err(|_| parse_err(ln, "bad node index"))?;
        let b: usize = f[2].parse().map_err(|_| parse_err(ln, "bad node index"))?;
        let alpha: f64 = f[3].parse().map_err(|_| parse_err(ln, "bad porosity"))?;
        let kind = FacetKind::parse(f[4]).ok_or_else(|| parse_err(ln, "kind must be canopy, cable or rigid"))?;
        let el: i64 = f[5].parse().map_err(|_| parse_err(ln, "bad element id"))?;
        s.facets.push(Facet { nodes: [a, b], alpha, kind, element: usize::try_from(el).ok() });
    }
    s.validate()?;
    Ok(s)
}
