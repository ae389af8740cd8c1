//! Vertex-centred finite-volume discretization on the median dual: residual
//! assembly, stable time step, explicit SSP-RK2 and implicit BDF2 integration.
//!
//! The semi-discrete system is `|C_i| dW_i/dt + R_i(W) = 0`.

use std::fmt::Write as _;

use nalgebra::Matrix2;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::embedded::{
    populate_ghosts, wall_flux, interface_convective_flux, EmbeddedSurface, Extrapolation, InterfaceOptions,
    InterfaceStatus,
};
use crate::gas::{
    conductivity, mach_number, sound_speed, sutherland_viscosity, temperature, to_conservative, viscous_stress,
    vreman_eddy_viscosity, GasModel, Primitive,
};
use crate::geom::{dot, norm, scale, sub, Vec2};
use crate::mesh::{element_gradient, BoundaryKind, DualMesh, Mesh};
use crate::riemann::{farfield_flux, hlle_flux_prim, muscl_reconstruct, roe_flux_prim, Flux, Limiter, RiemannError};

pub type State = [f64; 4];

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FluidError {
    #[error("non-physical state at node {node} ({x:.4e}, {y:.4e}): rho = {rho:e}, p = {p:e}")]
    NonPhysical { node: usize, x: f64, y: f64, rho: f64, p: f64 },
    #[error("flux failure on edge ({i}, {j}): {source}")]
    Flux { i: usize, j: usize, source: RiemannError },
    #[error("step rejected after {retries} retries (last dt = {dt:e}); {last}")]
    StepRejected { retries: usize, dt: f64, last: Box<FluidError> },
    #[error("Newton iteration diverged; residual trace {trace:?}")]
    NewtonDiverged { trace: Vec<f64> },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Integrator {
    #[default]
    SspRk2,
    Bdf2,
}

/// Flux across interior edges.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FluxScheme {
    #[default]
    Roe,
    Hlle,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FluidConfig {
    pub cfl: f64,
    pub integrator: Integrator,
    pub limiter: Limiter,
    pub flux: FluxScheme,
    /// 1 for piecewise-constant states, 2 for MUSCL reconstruction.
    pub order: u8,
    pub entropy_fix: f64,
    pub extrapolation: Extrapolation,
    pub interface: InterfaceOptions,
    pub viscous: bool,
    pub turbulence: bool,
    pub max_retries: usize,
    pub newton_tol: f64,
    pub newton_max_iter: usize,
    pub gmres_restart: usize,
}

impl Default for FluidConfig {
    fn default() -> Self {
        Self {
            cfl: 0.5,
            integrator: Integrator::SspRk2,
            limiter: Limiter::VanAlbada,
            flux: FluxScheme::Roe,
            order: 2,
            entropy_fix: 0.05,
            extrapolation: Extrapolation::Constant,
            interface: InterfaceOptions::default(),
            viscous: false,
            turbulence: false,
            max_retries: 5,
            newton_tol: 1e-8,
            newton_max_iter: 12,
            gmres_restart: 40,
        }
    }
}

/// Conservative nodal state and its time level.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FluidSolution {
    pub w: Vec<State>,
    pub t: f64,
    pub dt: f64,
    /// Previous level for the two-step implicit scheme.
    pub w_prev: Option<Vec<State>>,
}

impl FluidSolution {
    pub fn uniform(n: usize, v: &Primitive, gas: &GasModel) -> Self {
        let w = to_conservative(v, gas).to_array();
        Self { w: vec![w; n], t: 0.0, dt: 0.0, w_prev: None }
    }

    pub fn primitive(&self, i: usize, gas: &GasModel) -> Primitive {
        prim(&self.w[i], gas)
    }

    /// Sum of `|C_i| W_i` over nodes accepted by `keep`.
    pub fn totals(&self, dual: &DualMesh, keep: impl Fn(usize) -> bool) -> State {
        let mut s = [0.0; 4];
        for (i, (w, v)) in self.w.iter().zip(&dual.volumes).enumerate() {
            if keep(i) {
                for k in 0..4 {
                    s[k] += v * w[k];
                }
            }
        }
        s
    }
}

#[inline]
fn prim(w: &State, gas: &GasModel) -> Primitive {
    let rho = w[0];
    let v = [w[1] / rho, w[2] / rho];
    Primitive { rho, v, p: (gas.gamma - 1.0) * (w[3] - 0.5 * rho * dot(v, v)) }
}

/// Geometry and interface data a residual evaluation needs.
#[derive(Clone, Copy)]
pub struct Domain<'a> {
    pub mesh: &'a Mesh,
    pub dual: &'a DualMesh,
    pub status: &'a InterfaceStatus,
    pub surface: &'a EmbeddedSurface,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepInfo {
    pub dt: f64,
    pub retries: usize,
    pub newton_iterations: usize,
    /// Set when the implicit step failed and an explicit step was taken instead.
    pub fell_back: bool,
    /// Set when the step was taken by a first-order fallback.
    pub first_order: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FluidSolver {
    pub gas: GasModel,
    pub config: FluidConfig,
    pub freestream: Primitive,
}

impl FluidSolver {
    pub fn new(gas: GasModel, config: FluidConfig, freestream: Primitive) -> Self {
        Self { gas, config, freestream }
    }

    fn primitives(&self, dom: &Domain, w: &[State]) -> Result<Vec<Primitive>, FluidError> {
        let gas = &self.gas;
        let out: Vec<Primitive> = w
            .par_iter()
            .enumerate()
            .map(|(i, w)| if dom.status.active[i] { prim(w, gas) } else { self.freestream })
            .collect();
        if let Some((i, v)) = out.iter().enumerate().find(|(i, v)| dom.status.active[*i] && !v.is_valid()) {
            let x = dom.mesh.vertices[i];
            return Err(FluidError::NonPhysical { node: i, x: x[0], y: x[1], rho: v.rho, p: v.p });
        }
        Ok(out)
    }

    /// Residual `R(W)`; inactive nodes get zero.
    pub fn residual(&self, dom: &Domain, w: &[State]) -> Result<Vec<State>, FluidError> {
        let n = w.len();
        let gas = &self.gas;
        let cfg = &self.config;
        let status = dom.status;
        let dual = dom.dual;
        let mesh = dom.mesh;
        let v = self.primitives(dom, w)?;
        let va: Vec<State> = v.iter().map(|p| [p.rho, p.v[0], p.v[1], p.p]).collect();

        let grads: Vec<[Vec2; 4]> = if cfg.order >= 2 {
            (0..n)
                .into_par_iter()
                .map(|i| {
                    if !status.active[i] {
                        return [[0.0; 2]; 4];
                    }
                    dual.gradient_masked(mesh, &va, i, |e, j| status.active[j] && !status.is_intersected(e))
                })
                .collect()
        } else {
            Vec::new()
        };

        let edge_flux: Vec<Result<(Option<Flux>, Option<Flux>), FluidError>> = dual
            .edges
            .par_iter()
            .enumerate()
            .map(|(e, &[i, j])| {
                let (ai, aj) = (status.active[i], status.active[j]);
                if !ai && !aj {
                    return Ok((None, None));
                }
                let nu = dual.normals[e];
                let err = |source| FluidError::Flux { i, j, source };
                let flux = |l: &Primitive, r: &Primitive| match cfg.flux {
                    FluxScheme::Roe => roe_flux_prim(l, r, nu, gas, cfg.entropy_fix),
                    FluxScheme::Hlle => hlle_flux_prim(l, r, nu, gas),
                };
                match &status.edges[e] {
                    None if ai && aj => {
                        let f = if cfg.order >= 2 {
                            let d = sub(mesh.vertices[j], mesh.vertices[i]);
                            let (l, r) = muscl_reconstruct(&va[i], &va[j], &grads[i], &grads[j], d, cfg.limiter);
                            let (pl, pr) = (Primitive::from_array(l), Primitive::from_array(r));
                            if pl.is_valid() && pr.is_valid() {
                                flux(&pl, &pr)
                            } else {
                                flux(&v[i], &v[j])
                            }
                        } else {
                            flux(&v[i], &v[j])
                        }
                        .map_err(err)?;
                        Ok((Some(f), Some(f.map(|x| -x))))
                    }
                    // one side covered without a recorded crossing: treat as a stationary wall
                    None => {
                        let (k, dir) = if ai { (i, 1.0) } else { (j, -1.0) };
                        let f = wall_flux(&v[k], scale(nu, dir), 0.0, gas, &cfg.interface).map_err(err)?.0;
                        Ok(if ai { (Some(f), None) } else { (None, Some(f)) })
                    }
                    Some(x) => {
                        let unit = scale(nu, 1.0 / norm(nu));
                        let fi = if ai {
                            let vw = dot(dom.surface.velocity_at(x.near_i.facet, x.near_i.s), unit);
                            let alpha = if aj { x.alpha } else { 0.0 };
                            Some(
                                interface_convective_flux(&v[i], &v[j], nu, vw, alpha, gas, &cfg.interface)
                                    .map_err(err)?,
                            )
                        } else {
                            None
                        };
                        let fj = if aj {
                            let vw = -dot(dom.surface.velocity_at(x.near_j.facet, x.near_j.s), unit);
                            let alpha = if ai { x.alpha } else { 0.0 };
                            Some(
                                interface_convective_flux(&v[j], &v[i], scale(nu, -1.0), vw, alpha, gas, &cfg.interface)
                                    .map_err(err)?,
                            )
                        } else {
                            None
                        };
                        Ok((fi, fj))
                    }
                }
            })
            .collect();

        let mut r = vec![[0.0; 4]; n];
        for (e, res) in edge_flux.into_iter().enumerate() {
            let (fi, fj) = res?;
            let [i, j] = dual.edges[e];
            if let Some(f) = fi {
                add4(&mut r[i], &f);
            }
            if let Some(f) = fj {
                add4(&mut r[j], &f);
            }
        }

        for bf in &dual.boundary_facets {
            let i = bf.node;
            if !status.active[i] {
                continue;
            }
            let f = match bf.kind {
                BoundaryKind::FarField => farfield_flux(&v[i], &self.freestream, bf.normal, gas),
                BoundaryKind::SlipWall => wall_flux(&v[i], bf.normal, 0.0, gas, &cfg.interface)
                    .map_err(|source| FluidError::Flux { i, j: i, source })?
                    .0,
            };
            add4(&mut r[i], &f);
        }

        if cfg.viscous {
            self.add_viscous(dom, &v, &mut r);
        }
        Ok(r)
    }

    /// Mass flux through porous facets, summed over cut edges with active
    /// nodes on both sides and counted positive along `dir`. Uses
    /// first-order states.
    pub fn interface_mass_flux(&self, dom: &Domain, w: &[State], dir: Vec2) -> Result<f64, FluidError> {
        let gas = &self.gas;
        let mut total = 0.0;
        for (e, x) in dom.status.edges.iter().enumerate() {
            let Some(x) = x else { continue };
            let [i, j] = dom.dual.edges[e];
            if !(dom.status.active[i] && dom.status.active[j]) || x.alpha == 0.0 {
                continue;
            }
            let nu = dom.dual.normals[e];
            let unit = scale(nu, 1.0 / norm(nu));
            let (vi, vj) = (prim(&w[i], gas), prim(&w[j], gas));
            let err = |source| FluidError::Flux { i, j, source };
            let wi = dot(dom.surface.velocity_at(x.near_i.facet, x.near_i.s), unit);
            let wj = -dot(dom.surface.velocity_at(x.near_j.facet, x.near_j.s), unit);
            let fi = interface_convective_flux(&vi, &vj, nu, wi, x.alpha, gas, &self.config.interface).map_err(err)?;
            let fj = interface_convective_flux(&vj, &vi, scale(nu, -1.0), wj, x.alpha, gas, &self.config.interface)
                .map_err(err)?;
            total += 0.5 * (fi[0] - fj[0]) * dot(unit, dir).signum();
        }
        Ok(total)
    }

    fn add_viscous(&self, dom: &Domain, v: &[Primitive], r: &mut [State]) {
        let mesh = dom.mesh;
        let status = dom.status;
        let gas = &self.gas;
        let cfg = &self.config;
        let vel: Vec<Vec2> = v.iter().map(|p| p.v).collect();
        let temp: Vec<f64> = v.iter().map(|p| temperature(p, gas)).collect();
        let contributions: Vec<[(usize, State); 3]> = mesh
            .triangles
            .par_iter()
            .enumerate()
            .map(|(t, tri)| {
                let mut out = [(usize::MAX, [0.0; 4]); 3];
                let area = mesh.signed_area(t);
                let regular = tri.iter().all(|&k| status.active[k])
                    && (0..3).all(|k| {
                        let (a, b) = (tri[k], tri[(k + 1) % 3]);
                        dom.dual.neighbors(a).iter().find(|&&(_, j)| j == b).is_none_or(|&(e, _)| !status.is_intersected(e))
                    });
                let rho = tri.iter().map(|&k| v[k].rho).sum::<f64>() / 3.0;
                let delta = (tri.iter().map(|&k| dom.dual.volumes[k]).sum::<f64>() / 3.0).sqrt();
                let grads_phi: [Vec2; 3] = std::array::from_fn(|k| {
                    let mut f = [0.0; 3];
                    f[k] = 1.0;
                    element_gradient(mesh, t, f)
                });
                for (slot, &viewer) in tri.iter().enumerate() {
                    if !status.active[viewer] {
                        continue;
                    }
                    let vals = if regular {
                        tri.map(|k| [vel[k][0], vel[k][1], temp[k]])
                    } else {
                        populate_ghosts(dom.dual, status, dom.surface, tri, viewer, &vel, &temp, cfg.extrapolation)
                    };
                    let mut gv = Matrix2::zeros();
                    let mut gt = [0.0; 2];
                    let mut vbar = [0.0; 2];
                    let mut tbar = 0.0;
                    for k in 0..3 {
                        for a in 0..2 {
                            for b in 0..2 {
                                gv[(a, b)] += vals[k][a] * grads_phi[k][b];
                            }
                            gt[a] += vals[k][2] * grads_phi[k][a];
                            vbar[a] += vals[k][a] / 3.0;
                        }
                        tbar += vals[k][2] / 3.0;
                    }
                    let mu = sutherland_viscosity(tbar.max(1e-300), gas);
                    let mu_t = if cfg.turbulence { vreman_eddy_viscosity(&gv, rho, delta, gas) } else { 0.0 };
                    let tau = viscous_stress(&gv, mu + mu_t, gas.mu_v_ratio * mu);
                    let kappa = conductivity(mu, gas) + gas.cp() * mu_t / gas.pr_t;
                    let g = grads_phi[slot];
                    let m0 = tau[(0, 0)] * g[0] + tau[(0, 1)] * g[1];
                    let m1 = tau[(1, 0)] * g[0] + tau[(1, 1)] * g[1];
                    let en = m0 * vbar[0] + m1 * vbar[1] + kappa * (gt[0] * g[0] + gt[1] * g[1]);
                    out[slot] = (viewer, [0.0, area * m0, area * m1, area * en]);
                }
                out
            })
            .collect();
        for c in contributions {
            for (node, f) in c {
                if node != usize::MAX {
                    add4(&mut r[node], &f);
                }
            }
        }
    }

    /// `dt = CFL * min_i min(h_i / (|v_i| + a_i), h_i^2 rho_i / (2 (mu + mu_v)))`
    /// with `h_i` the shortest edge incident to node `i`.
    pub fn stable_dt(&self, dom: &Domain, w: &[State]) -> f64 {
        let gas = &self.gas;
        let viscous = self.config.viscous;
        let dt = (0..w.len())
            .into_par_iter()
            .filter(|&i| dom.status.active[i])
            .map(|i| {
                let v = prim(&w[i], gas);
                let h = dom.dual.min_edge_length(dom.mesh, i);
                let mut dt = h / (norm(v.v) + sound_speed(&v, gas));
                if viscous {
                    let mu = sutherland_viscosity(temperature(&v, gas), gas);
                    let nu = mu * (1.0 + gas.mu_v_ratio);
                    if nu > 0.0 {
                        dt = dt.min(h * h * v.rho / (2.0 * nu));
                    }
                }
                dt
            })
            .reduce(|| f64::INFINITY, f64::min);
        self.config.cfl * dt
    }

    fn rates(&self, dom: &Domain, w: &[State]) -> Result<Vec<State>, FluidError> {
        let mut r = self.residual(dom, w)?;
        for (i, ri) in r.iter_mut().enumerate() {
            let s = -1.0 / dom.dual.volumes[i];
            for x in ri.iter_mut() {
                *x *= s;
            }
        }
        Ok(r)
    }

    fn check(&self, dom: &Domain, w: &[State]) -> Result<(), FluidError> {
        self.primitives(dom, w).map(|_| ())
    }

    /// One two-stage SSP Runge-Kutta step. On a non-physical intermediate or
    /// final state (or a failed flux) the step is repeated with
    /// piecewise-constant states, then with the HLLE flux, then retried with
    /// half the time step.
    pub fn advance_explicit(&self, dom: &Domain, sol: &mut FluidSolution, dt: f64) -> Result<StepInfo, FluidError> {
        let mut dt_try = dt;
        let mut fallbacks = Vec::new();
        if self.config.order >= 2 {
            let mut s = self.clone();
            s.config.order = 1;
            fallbacks.push(s);
        }
        if self.config.flux != FluxScheme::Hlle {
            let mut s = self.clone();
            s.config.order = 1;
            s.config.flux = FluxScheme::Hlle;
            fallbacks.push(s);
        }
        for retries in 0..=self.config.max_retries {
            let mut attempt = self.ssp_rk2(dom, &sol.w, dt_try).map(|w| (w, false));
            for low in &fallbacks {
                if !matches!(attempt, Err(FluidError::NonPhysical { .. }) | Err(FluidError::Flux { .. })) {
                    break;
                }
                if let Ok(w) = low.ssp_rk2(dom, &sol.w, dt_try) {
                    attempt = Ok((w, true));
                }
            }
            match attempt {
                Ok((w, lowered)) => {
                    sol.w_prev = Some(std::mem::replace(&mut sol.w, w));
                    sol.t += dt_try;
                    sol.dt = dt_try;
                    return Ok(StepInfo { dt: dt_try, retries, newton_iterations: 0, fell_back: false, first_order: lowered });
                }
                Err(FluidError::NonPhysical { .. } | FluidError::Flux { .. }) if retries < self.config.max_retries => {
                    dt_try *= 0.5
                }
                Err(e @ (FluidError::NonPhysical { .. } | FluidError::Flux { .. })) => {
                    return Err(FluidError::StepRejected { retries, dt: dt_try, last: Box::new(e) })
                }
                Err(e) => return Err(e),
            }
        }
        unreachable!("the last retry returns")
    }

    fn ssp_rk2(&self, dom: &Domain, w0: &[State], dt: f64) -> Result<Vec<State>, FluidError> {
        let active = &dom.status.active;
        let k1 = self.rates(dom, w0)?;
        let w1: Vec<State> = w0
            .iter()
            .zip(&k1)
            .enumerate()
            .map(|(i, (w, k))| if active[i] { std::array::from_fn(|c| w[c] + dt * k[c]) } else { *w })
            .collect();
        self.check(dom, &w1)?;
        let k2 = self.rates(dom, &w1)?;
        let w2: Vec<State> = w0
            .iter()
            .zip(&w1)
            .zip(&k2)
            .enumerate()
            .map(|(i, ((a, b), k))| {
                if active[i] {
                    std::array::from_fn(|c| 0.5 * a[c] + 0.5 * (b[c] + dt * k[c]))
                } else {
                    *a
                }
            })
            .collect();
        self.check(dom, &w2)?;
        Ok(w2)
    }

    /// One implicit step: BDF2 when the previous level is available with the
    /// same step size, BDF1 otherwise. The nonlinear system is solved by
    /// matrix-free Newton-GMRES; on failure an explicit step is taken.
    pub fn advance_bdf2(&self, dom: &Domain, sol: &mut FluidSolution, dt: f64) -> Result<StepInfo, FluidError> {
        let prev = sol.w_prev.as_ref().filter(|_| (sol.dt - dt).abs() <= 1e-12 * dt);
        match self.bdf_solve(dom, &sol.w, prev.map(|p| p.as_slice()), dt) {
            Ok((w, iters)) => {
                sol.w_prev = Some(std::mem::replace(&mut sol.w, w));
                sol.t += dt;
                sol.dt = dt;
                Ok(StepInfo { dt, retries: 0, newton_iterations: iters, fell_back: false, first_order: false })
            }
            Err(_) => {
                let dt_explicit = self.stable_dt(dom, &sol.w).min(dt);
                let mut taken = 0.0;
                let mut info = StepInfo { dt, retries: 0, newton_iterations: 0, fell_back: true, first_order: false };
                while taken < dt * (1.0 - 1e-12) {
                    let h = dt_explicit.min(dt - taken);
                    let prev_w = sol.w.clone();
                    let s = self.advance_explicit(dom, sol, h)?;
                    sol.w_prev = Some(prev_w);
                    info.retries += s.retries;
                    info.first_order |= s.first_order;
                    taken += s.dt;
                }
                sol.dt = dt;
                Ok(info)
            }
        }
    }

    fn bdf_solve(&self, dom: &Domain, wn: &[State], wnm1: Option<&[State]>, dt: f64) -> Result<(Vec<State>, usize), FluidError> {
        let active = &dom.status.active;
        let n = wn.len();
        // per-component scaling keeps the finite-difference Jacobian well posed
        let mut scale_c = [0.0f64; 4];
        for (i, w) in wn.iter().enumerate() {
            if active[i] {
                for c in 0..4 {
                    scale_c[c] = scale_c[c].max(w[c].abs());
                }
            }
        }
        // momentum is measured against rho * a, which stays finite at rest
        let mom_ref = (scale_c[0] * scale_c[3]).sqrt();
        scale_c[1] = scale_c[1].max(mom_ref);
        scale_c[2] = scale_c[2].max(mom_ref);
        let scale_c = scale_c.map(|s| if s > 0.0 { s } else { 1.0 });
        let (a0, rhs): (f64, Vec<State>) = match wnm1 {
            Some(p) => (
                2.0 / 3.0,
                (0..n).map(|i| std::array::from_fn(|c| (4.0 * wn[i][c] - p[i][c]) / 3.0)).collect(),
            ),
            None => (1.0, wn.to_vec()),
        };
        // F(X) = (X - rhs) / s + a0 dt R(X) / (|C| s)
        let func = |x: &[State]| -> Result<Vec<f64>, FluidError> {
            let r = self.residual(dom, x)?;
            let mut out = vec![0.0; 4 * n];
            for i in 0..n {
                if !active[i] {
                    continue;
                }
                for c in 0..4 {
                    out[4 * i + c] = ((x[i][c] - rhs[i][c]) + a0 * dt * r[i][c] / dom.dual.volumes[i]) / scale_c[c];
                }
            }
            Ok(out)
        };
        let mut x = wn.to_vec();
        let mut fx = func(&x)?;
        let mut trace = vec![l2(&fx)];
        let tol = self.config.newton_tol;
        for it in 1..=self.config.newton_max_iter {
            let fnorm = l2(&fx);
            if fnorm <= tol * (n as f64).sqrt() {
                return Ok((x, it - 1));
            }
            let xs = x.clone();
            let jv = |v: &[f64]| -> Result<Vec<f64>, FluidError> {
                let vn = l2(v);
                if vn == 0.0 {
                    return Ok(vec![0.0; v.len()]);
                }
                let eps = 1e-7 / vn;
                let xp: Vec<State> = (0..n)
                    .map(|i| std::array::from_fn(|c| xs[i][c] + eps * v[4 * i + c] * scale_c[c]))
                    .collect();
                let fp = func(&xp)?;
                Ok(fp.iter().zip(&fx).map(|(a, b)| (a - b) / eps).collect())
            };
            let minus_f: Vec<f64> = fx.iter().map(|x| -x).collect();
            let dx = gmres(&jv, &minus_f, self.config.gmres_restart, 1e-3 * fnorm, 3)?;
            // damped update
            let mut lambda = 1.0;
            let mut accepted = false;
            for _ in 0..6 {
                let xn: Vec<State> = (0..n)
                    .map(|i| std::array::from_fn(|c| x[i][c] + lambda * dx[4 * i + c] * scale_c[c]))
                    .collect();
                if let Ok(fnew) = func(&xn) {
                    if l2(&fnew) < fnorm {
                        x = xn;
                        fx = fnew;
                        accepted = true;
                        break;
                    }
                }
                lambda *= 0.5;
            }
            trace.push(l2(&fx));
            if !accepted {
                return Err(FluidError::NewtonDiverged { trace });
            }
        }
        if l2(&fx) <= tol * (n as f64).sqrt() {
            Ok((x, self.config.newton_max_iter))
        } else {
            Err(FluidError::NewtonDiverged { trace })
        }
    }

    /// Fills nodes that became active since `old` by averaging neighbours that
    /// were already active and are not separated by the interface.
    pub fn fill_uncovered(&self, dom: &Domain, old_active: &[bool], w: &mut [State]) -> usize {
        let status = dom.status;
        let mut known: Vec<bool> = (0..w.len()).map(|i| old_active[i] && status.active[i]).collect();
        let mut pending: Vec<usize> = (0..w.len()).filter(|&i| status.active[i] && !old_active[i]).collect();
        let total = pending.len();
        while !pending.is_empty() {
            let mut filled = Vec::new();
            for &i in &pending {
                let mut acc = [0.0; 4];
                let mut cnt = 0.0;
                for &(e, j) in dom.dual.neighbors(i) {
                    if known[j] && !status.is_intersected(e) {
                        add4(&mut acc, &w[j]);
                        cnt += 1.0;
                    }
                }
                if cnt > 0.0 {
                    filled.push((i, acc.map(|x| x / cnt)));
                }
            }
            if filled.is_empty() {
                let fs = to_conservative(&self.freestream, &self.gas).to_array();
                for &i in &pending {
                    w[i] = fs;
                }
                break;
            }
            for &(i, val) in &filled {
                w[i] = val;
                known[i] = true;
            }
            pending.retain(|&i| !known[i]);
        }
        total
    }
}

fn add4(a: &mut State, b: &State) {
    for k in 0..4 {
        a[k] += b[k];
    }
}

fn l2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Restarted GMRES for `A x = b` with `A` given as a closure; zero initial guess.
fn gmres<F>(a: &F, b: &[f64], m: usize, tol: f64, restarts: usize) -> Result<Vec<f64>, FluidError>
where
    F: Fn(&[f64]) -> Result<Vec<f64>, FluidError>,
{
    let n = b.len();
    let mut x = vec![0.0; n];
    for _ in 0..restarts.max(1) {
        let ax = a(&x)?;
        let r: Vec<f64> = b.iter().zip(&ax).map(|(b, a)| b - a).collect();
        let beta = l2(&r);
        if beta <= tol {
            break;
        }
        let mut v = vec![r.iter().map(|x| x / beta).collect::<Vec<f64>>()];
        let mut h = vec![vec![0.0; m]; m + 1];
        let (mut cs, mut sn) = (vec![0.0; m], vec![0.0; m]);
        let mut g = vec![0.0; m + 1];
        g[0] = beta;
        let mut k_used = 0;
        for k in 0..m {
            let mut w = a(&v[k])?;
            for j in 0..=k {
                h[j][k] = dot_n(&w, &v[j]);
                for (wi, vi) in w.iter_mut().zip(&v[j]) {
                    *wi -= h[j][k] * vi;
                }
            }
            h[k + 1][k] = l2(&w);
            for j in 0..k {
                let t = cs[j] * h[j][k] + sn[j] * h[j + 1][k];
                h[j + 1][k] = -sn[j] * h[j][k] + cs[j] * h[j + 1][k];
                h[j][k] = t;
            }
            let d = h[k][k].hypot(h[k + 1][k]);
            if d == 0.0 {
                k_used = k;
                break;
            }
            cs[k] = h[k][k] / d;
            sn[k] = h[k + 1][k] / d;
            h[k][k] = d;
            h[k + 1][k] = 0.0;
            g[k + 1] = -sn[k] * g[k];
            g[k] *= cs[k];
            k_used = k + 1;
            let hk1 = l2(&w);
            if g[k + 1].abs() <= tol || hk1 == 0.0 {
                break;
            }
            v.push(w.iter().map(|x| x / hk1).collect());
        }
        let mut y = vec![0.0; k_used];
        for i in (0..k_used).rev() {
            let mut s = g[i];
            for j in i + 1..k_used {
                s -= h[i][j] * y[j];
            }
            y[i] = s / h[i][i];
        }
        for (j, yj) in y.iter().enumerate() {
            for (xi, vi) in x.iter_mut().zip(&v[j]) {
                *xi += yj * vi;
            }
        }
        if g[k_used].abs() <= tol {
            break;
        }
    }
    Ok(x)
}

fn dot_n(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Columnar field snapshot: `node x y rho u v p mach active`.
pub fn write_field(mesh: &Mesh, sol: &FluidSolution, active: &[bool], gas: &GasModel) -> String {
    let mut s = String::new();
    writeln!(s, "# fsikit field v1 t={:e}", sol.t).unwrap();
    writeln!(s, "# node x y rho u v p mach active").unwrap();
    for (i, (x, w)) in mesh.vertices.iter().zip(&sol.w).enumerate() {
        let v = prim(w, gas);
        let ma = if v.is_valid() { mach_number(&v, gas) } else { f64::NAN };
        writeln!(
            s,
            "{i} {:e} {:e} {:e} {:e} {:e} {:e} {:e} {}",
            x[0],
            x[1],
            v.rho,
            v.v[0],
            v.v[1],
            v.p,
            ma,
            u8::from(active[i])
        )
        .unwrap();
    }
    s
}
