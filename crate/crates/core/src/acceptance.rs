//! Acceptance checks. Each criterion is a function returning a pass flag and a
//! one-line measurement summary; `fsikit check` and the `acceptance` test
//! target both run them through [`run_all`].

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::couple::{
    cable_hexagons, observed_orders, pair_slaves, piston_displacements, piston_work_audit, rigid_point,
    slave_forces_to_master, slave_kinematics, slave_virtual_work, PistonProblem,
};
use crate::embedded::{blend, classify, EmbeddedSurface, FacetKind};
use crate::fluid::{Domain, FluidConfig, FluidSolution, FluidSolver};
use crate::gas::{to_conservative, GasModel, Primitive};
use crate::geom::{add, norm, rotate, sub, Vec2};
use crate::mesh::{adapt, build_dual, build_kuhn_grid, hessian_indicator, AdaptLimits, BoundaryKind, SideKinds};
use crate::riemann::{euler_flux, exact_riemann, pressure_function, roe_flux_prim, State1d};
use crate::scenario::{
    run_bluffbody, run_coupon, run_porous_membrane, run_sod, Case, Freestream, Grips, Output, ScenarioConfig,
};
use crate::structure::{
    Beam, Constraint, Dofs, Material, Membrane, Section, StructuralModel, StructuralState, Structure,
};

type BoxError = Box<dyn std::error::Error + Send + Sync>;

/// Criteria that fail with the current implementation; the README explains
/// why.
pub const KNOWN_FAILURES: &[usize] = &[9];

#[derive(Debug, Clone, PartialEq)]
pub struct Report {
    pub id: usize,
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
    pub seconds: f64,
}

impl Report {
    pub fn line(&self) -> String {
        format!(
            "{} criterion {:>2} {}: {} ({:.1} s)",
            if self.passed { "PASS" } else { "FAIL" },
            self.id,
            self.name,
            self.detail,
            self.seconds
        )
    }
}

struct Check {
    passed: bool,
    detail: String,
}

type Criterion = fn() -> Result<Check, BoxError>;

const CRITERIA: [(usize, &str, Criterion); 12] = [
    (1, "sod shock tube", sod),
    (2, "exact riemann solver", riemann),
    (3, "flux properties", flux_properties),
    (4, "freestream preservation", freestream),
    (5, "conservation", conservation),
    (6, "nvb adaptation", nvb),
    (7, "master-slave transfer", master_slave),
    (8, "structure", structure),
    (9, "coupon", coupon),
    (10, "porous membrane sweep", porous),
    (11, "bluff body", bluff_body),
    (12, "coupled energy audit", piston),
];

pub fn ids() -> Vec<usize> {
    CRITERIA.iter().map(|c| c.0).collect()
}

/// Runs one criterion; errors count as failures.
pub fn run(id: usize) -> Option<Report> {
    let &(id, name, f) = CRITERIA.iter().find(|c| c.0 == id)?;
    let start = Instant::now();
    let (passed, detail) = match f() {
        Ok(c) => (c.passed, c.detail),
        Err(e) => (false, format!("error: {e}")),
    };
    Some(Report { id, name, passed, detail, seconds: start.elapsed().as_secs_f64() })
}

pub fn run_all() -> Vec<Report> {
    ids().into_iter().filter_map(run).collect()
}

fn sod() -> Result<Check, BoxError> {
    let mut cfg = ScenarioConfig::new(Case::Sod);
    let start = Instant::now();
    let fine = run_sod(&cfg)?;
    let seconds = start.elapsed().as_secs_f64();
    cfg.sod.cells /= 2;
    let coarse = run_sod(&cfg)?;
    let ratio = coarse.l1 / fine.l1;
    Ok(Check {
        passed: fine.l1 < 0.02 && ratio >= 1.4 && seconds < 60.0,
        detail: format!(
            "L1 {:.3e} at {} cells, {:.3e} at {}, ratio {ratio:.2}, {seconds:.2} s",
            fine.l1, fine.cells, coarse.l1, coarse.cells
        ),
    })
}

fn pressure_part(p: f64, s: &State1d, g: f64) -> (f64, f64) {
    let a = (g * s.p / s.rho).sqrt();
    if p > s.p {
        let aa = 2.0 / ((g + 1.0) * s.rho);
        let bb = (g - 1.0) / (g + 1.0) * s.p;
        let q = (aa / (p + bb)).sqrt();
        ((p - s.p) * q, q * (1.0 - 0.5 * (p - s.p) / (bb + p)))
    } else {
        let r = p / s.p;
        (2.0 * a / (g - 1.0) * (r.powf((g - 1.0) / (2.0 * g)) - 1.0), r.powf(-(g + 1.0) / (2.0 * g)) / (s.rho * a))
    }
}

/// Star pressure by Newton iteration kept inside a sign-change bracket,
/// bisecting whenever a Newton step would leave it.
fn safeguarded_star_pressure(l: &State1d, r: &State1d, g: f64) -> f64 {
    let f = |p: f64| {
        let (fl, dl) = pressure_part(p, l, g);
        let (fr, dr) = pressure_part(p, r, g);
        (fl + fr + r.u - l.u, dl + dr)
    };
    let mut lo = 0.0;
    let mut hi = l.p.max(r.p);
    while f(hi).0 < 0.0 {
        hi *= 2.0;
    }
    let mut p = 0.5 * (l.p + r.p);
    for _ in 0..200 {
        let (v, d) = f(p);
        if v < 0.0 {
            lo = p;
        } else {
            hi = p;
        }
        let mut next = p - v / d;
        if !(next > lo && next < hi) {
            next = 0.5 * (lo + hi);
        }
        if (next - p).abs() <= 1e-16 * p {
            return next;
        }
        p = next;
    }
    p
}

fn riemann() -> Result<Check, BoxError> {
    let g = 1.4;
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst: f64 = 0.0;
    let mut vacuum = 0;
    for _ in 0..10_000 {
        let l = State1d::new(rng.gen_range(0.1..10.0), rng.gen_range(-3.0..3.0), rng.gen_range(0.1..10.0));
        let r = State1d::new(rng.gen_range(0.1..10.0), rng.gen_range(-3.0..3.0), rng.gen_range(0.1..10.0));
        match exact_riemann(&l, &r, g) {
            Ok(s) => worst = worst.max(pressure_function(s.p_star, &l, &r, g).abs()),
            Err(_) => vacuum += 1,
        }
    }
    let (l, r) = (State1d::new(1.0, 0.0, 1.0), State1d::new(0.125, 0.0, 0.1));
    let p = exact_riemann(&l, &r, g)?.p_star;
    let oracle = safeguarded_star_pressure(&l, &r, g);
    let diff = (p - oracle).abs();
    Ok(Check {
        passed: worst < 1e-12 && diff < 1e-10,
        detail: format!("max residual {worst:.2e} ({vacuum} vacuum pairs skipped), sod p* {p:.12} vs oracle {oracle:.12}"),
    })
}

fn random_state(rng: &mut ChaCha8Rng) -> Primitive {
    Primitive::new(rng.gen_range(0.1..10.0), [rng.gen_range(-3.0..3.0), rng.gen_range(-3.0..3.0)], rng.gen_range(0.1..10.0))
}

fn flux_properties() -> Result<Check, BoxError> {
    let gas = GasModel::ideal(1.4);
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let (mut consistency, mut antisymmetry): (f64, f64) = (0.0, 0.0);
    let mut blend_exact = true;
    for _ in 0..1000 {
        let (a, b) = (random_state(&mut rng), random_state(&mut rng));
        let nu = [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)];
        let f = roe_flux_prim(&a, &a, nu, &gas, 0.05)?;
        let e = euler_flux(&a, nu, &gas);
        let fab = roe_flux_prim(&a, &b, nu, &gas, 0.05)?;
        let fba = roe_flux_prim(&b, &a, [-nu[0], -nu[1]], &gas, 0.05)?;
        for k in 0..4 {
            consistency = consistency.max((f[k] - e[k]).abs() / e[k].abs().max(1.0));
            antisymmetry = antisymmetry.max((fab[k] + fba[k]).abs() / fab[k].abs().max(1.0));
        }
        for alpha in [0.0, 0.08, 1.0] {
            let got = blend(&e, &fab, alpha);
            for k in 0..4 {
                blend_exact &= got[k] == (1.0 - alpha) * e[k] + alpha * fab[k];
            }
            if alpha == 0.0 {
                blend_exact &= got == e;
            }
            if alpha == 1.0 {
                blend_exact &= got == fab;
            }
        }
    }
    Ok(Check {
        passed: consistency < 1e-10 && antisymmetry < 1e-10 && blend_exact,
        detail: format!("consistency {consistency:.2e}, antisymmetry {antisymmetry:.2e}, blend exact {blend_exact}"),
    })
}

fn freestream() -> Result<Check, BoxError> {
    let gas = GasModel::mars_co2();
    let fs = Freestream::scenario1().primitive(&gas);
    let mut mesh = build_kuhn_grid([-1.0, -1.0], [1.0, 1.0], 12, 12, SideKinds::all(BoundaryKind::FarField))?;
    // adapt on a synthetic ring so the mesh mixes refinement levels
    for _ in 0..3 {
        let dual = build_dual(&mesh)?;
        let ring: Vec<f64> = mesh.vertices.iter().map(|v| (-((norm(*v) - 0.5) / 0.1).powi(2)).exp()).collect();
        let scores = hessian_indicator(&mesh, &dual, &ring);
        let top = scores.iter().cloned().fold(0.0, f64::max);
        let limits = AdaptLimits { hessian_threshold: 0.3 * top, ..Default::default() };
        let field: Vec<[f64; 1]> = ring.iter().map(|&r| [r]).collect();
        mesh = adapt(&mesh, &scores, &[], &limits, &field)?.mesh;
    }
    let dual = build_dual(&mesh)?;
    let surface = EmbeddedSurface::default();
    let status = classify(&mesh, &dual, &surface)?;
    let dom = Domain { mesh: &mesh, dual: &dual, status: &status, surface: &surface };
    let solver = FluidSolver::new(gas, FluidConfig::default(), fs);
    let mut sol = FluidSolution::uniform(mesh.vertices.len(), &fs, &gas);
    let w0 = sol.w.clone();
    let scale = fs.rho * norm(fs.v);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let r = solver.residual(&dom, &sol.w)?;
        for (ri, vol) in r.iter().zip(&dual.volumes) {
            worst = worst.max(ri[0].abs() / (vol.sqrt() * scale));
        }
        let dt = solver.stable_dt(&dom, &sol.w);
        solver.advance_explicit(&dom, &mut sol, dt)?;
    }
    let drift = sol
        .w
        .iter()
        .zip(&w0)
        .flat_map(|(a, b)| (0..4).map(move |k| (a[k] - b[k]).abs() / b[k].abs().max(b[0])))
        .fold(0.0, f64::max);
    Ok(Check {
        passed: worst < 1e-12 && drift < 1e-12,
        detail: format!("{} nodes, max scaled residual {worst:.2e}, state drift {drift:.2e}", mesh.vertices.len()),
    })
}

fn gaussian_state(x: Vec2, c: Vec2, gas: &GasModel) -> [f64; 4] {
    let r2 = (x[0] - c[0]).powi(2) + (x[1] - c[1]).powi(2);
    let b = (-r2 / 0.01).exp();
    to_conservative(&Primitive::new(1.0 + 0.5 * b, [0.1, -0.2], 1.0 + 2.0 * b), gas).to_array()
}

fn conservation() -> Result<Check, BoxError> {
    let gas = GasModel::ideal(1.4);
    let v0 = Primitive::new(1.0, [0.0, 0.0], 1.0);
    let solver = FluidSolver::new(gas, FluidConfig::default(), v0);

    let mesh = build_kuhn_grid([0.0, 0.0], [1.0, 1.0], 16, 16, SideKinds::all(BoundaryKind::SlipWall))?;
    let dual = build_dual(&mesh)?;
    let none = EmbeddedSurface::default();
    let status = classify(&mesh, &dual, &none)?;
    let dom = Domain { mesh: &mesh, dual: &dual, status: &status, surface: &none };
    let mut sol = FluidSolution::uniform(mesh.vertices.len(), &v0, &gas);
    for (w, x) in sol.w.iter_mut().zip(&mesh.vertices) {
        *w = gaussian_state(*x, [0.4, 0.5], &gas);
    }
    let mut mass = sol.totals(&dual, |_| true)[0];
    let mut box_worst: f64 = 0.0;
    for _ in 0..200 {
        let dt = solver.stable_dt(&dom, &sol.w);
        solver.advance_explicit(&dom, &mut sol, dt)?;
        let next = sol.totals(&dual, |_| true)[0];
        box_worst = box_worst.max(((next - mass) / mass).abs());
        mass = next;
    }

    // closed impermeable body inside the box, pulse outside it
    let mesh = build_kuhn_grid([0.0, 0.0], [1.0, 1.0], 24, 24, SideKinds::all(BoundaryKind::SlipWall))?;
    let dual = build_dual(&mesh)?;
    let body = EmbeddedSurface::polygon(&[[0.58, 0.31], [0.83, 0.42], [0.71, 0.73], [0.55, 0.61]], 0.0, FacetKind::RigidBody);
    let status = classify(&mesh, &dual, &body)?;
    let dom = Domain { mesh: &mesh, dual: &dual, status: &status, surface: &body };
    let mut sol = FluidSolution::uniform(mesh.vertices.len(), &v0, &gas);
    for (w, x) in sol.w.iter_mut().zip(&mesh.vertices) {
        *w = gaussian_state(*x, [0.3, 0.5], &gas);
    }
    let exterior = |sol: &FluidSolution| sol.totals(&dual, |i| status.active[i])[0];
    let m0 = exterior(&sol);
    let mut body_worst: f64 = 0.0;
    for _ in 0..1000 {
        let dt = solver.stable_dt(&dom, &sol.w);
        solver.advance_explicit(&dom, &mut sol, dt)?;
        body_worst = body_worst.max(((exterior(&sol) - m0) / m0).abs());
    }
    Ok(Check {
        passed: box_worst < 1e-12 && body_worst < 1e-10,
        detail: format!("box per-step {box_worst:.2e}, exterior of closed body over 1000 steps {body_worst:.2e}"),
    })
}

fn nvb() -> Result<Check, BoxError> {
    let mut mesh = build_kuhn_grid([0.0, 0.0], [1.0, 1.0], 8, 8, SideKinds::all(BoundaryKind::FarField))?;
    let initial = mesh.global_min_angle();
    for round in 0..8 {
        // oblique shock sweeping across the square
        let xs = 0.2 + 0.08 * round as f64;
        let shock = |v: Vec2| (((v[0] + 0.3 * v[1]) - xs) / 0.02).tanh();
        let dual = build_dual(&mesh)?;
        let field: Vec<f64> = mesh.vertices.iter().map(|&v| shock(v)).collect();
        let scores = hessian_indicator(&mesh, &dual, &field);
        let top = scores.iter().cloned().fold(0.0, f64::max);
        let limits = AdaptLimits { hessian_threshold: 0.05 * top, ..Default::default() };
        let packed: Vec<[f64; 1]> = field.iter().map(|&f| [f]).collect();
        mesh = adapt(&mesh, &scores, &[], &limits, &packed)?.mesh;
    }
    let conforming = mesh.audit();
    let ratio = mesh.global_min_angle() / initial;
    Ok(Check {
        passed: conforming.is_ok() && ratio >= 0.5,
        detail: format!(
            "{} triangles, audit {}, min angle ratio {ratio:.3}",
            mesh.triangles.len(),
            conforming.map_or_else(|e| e.to_string(), |_| "ok".into())
        ),
    })
}

fn master_slave() -> Result<Check, BoxError> {
    let mat = Material { e: 2.951e10, nu: 0.4, rho: 1154.25, section: Section::rod(0.01) };
    let mut model = StructuralModel { materials: vec![mat], ..Default::default() };
    let pts: Vec<Vec2> = (0..=4).map(|k| [0.5 * k as f64, 0.1 * k as f64]).collect();
    model.add_chain(&pts, 0);
    let s = Structure::new(model)?;
    let st0 = StructuralState::zeros(s.num_nodes());
    let beams = [0, 1, 2, 3];
    let r = 0.02;
    let hex = cable_hexagons(&s, &st0, &beams, r, 2.0 * r);
    let map = pair_slaves(&hex, &s, &st0, &beams, r)?;
    let paired = hex.nodes.clone();
    let nodes: Vec<usize> = map.slaves.iter().map(|(n, _)| *n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let (mut motion, mut work): (f64, f64) = (0.0, 0.0);
    for _ in 0..200 {
        let c = [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)];
        let theta = rng.gen_range(-3.0..3.0);
        let shift = [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)];
        let mut st = st0.clone();
        for (n, p) in s.model.nodes.iter().enumerate() {
            let q = rigid_point(*p, c, theta, shift);
            st.u[n] = [q[0] - p[0], q[1] - p[1], theta];
        }
        for (node, du, _) in slave_kinematics(&map, &s, &st, &paired) {
            let got = add(paired[node], du);
            motion = motion.max(norm(sub(got, rigid_point(paired[node], c, theta, shift))));
        }
        let pos: Vec<Vec2> = paired.iter().map(|p| rigid_point(*p, c, theta, shift)).collect();
        let forces: Vec<Vec2> = pos.iter().map(|_| [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)]).collect();
        let loads = slave_forces_to_master(&map, &s, &st, &forces);
        let (du, dth) = ([rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)], rng.gen_range(-1.0..1.0));
        let vc = [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)];
        let slave_w = slave_virtual_work(&pos, &forces, &nodes, vc, du, dth);
        let master_w: f64 = (0..s.num_nodes())
            .map(|n| {
                let rr = sub(s.position(&st, n), vc);
                let v = add(du, [-dth * rr[1], dth * rr[0]]);
                loads[n][0] * v[0] + loads[n][1] * v[1] + loads[n][2] * dth
            })
            .sum();
        let scale: f64 = forces.iter().map(|f| norm(*f)).sum();
        work = work.max((slave_w - master_w).abs() / scale);
    }
    Ok(Check {
        passed: motion < 1e-12 && work < 1e-10,
        detail: format!("{} slaves, rigid motion error {motion:.2e}, virtual work error {work:.2e}", nodes.len()),
    })
}

fn membrane_and_beam() -> Result<[Structure; 2], BoxError> {
    let fabric = Material { e: 9.448e8, nu: 0.4, rho: 1154.25, section: Section::Membrane { thickness: 7.6073e-5 } };
    let steel = Material { e: 2e11, nu: 0.3, rho: 7800.0, section: Section::Beam { area: 1e-4, inertia: 1e-8, half_depth: 0.01 } };
    let membrane = StructuralModel {
        nodes: vec![[0.0, 0.0], [1.0, 0.1], [0.2, 0.9]],
        materials: vec![fabric],
        membranes: vec![Membrane { nodes: [0, 1, 2], material: 0 }],
        ..Default::default()
    };
    let beam = StructuralModel {
        nodes: vec![[0.1, 0.2], [1.1, 0.7]],
        materials: vec![steel],
        beams: vec![Beam { nodes: [0, 1], material: 0 }],
        ..Default::default()
    };
    Ok([Structure::new(membrane)?, Structure::new(beam)?])
}

fn structure() -> Result<Check, BoxError> {
    let elements = membrane_and_beam()?;
    let mut rng = ChaCha8Rng::seed_from_u64(8);

    let mut objectivity: f64 = 0.0;
    for s in &elements {
        let scale = s.model.materials[0].e * 1e-4;
        for _ in 0..50 {
            let theta = rng.gen_range(-3.1..3.1);
            let shift = [rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0)];
            let mut st = StructuralState::zeros(s.num_nodes());
            for (n, p) in s.model.nodes.iter().enumerate() {
                let q = add(rotate(*p, theta), shift);
                st.u[n] = [q[0] - p[0], q[1] - p[1], theta];
            }
            let f = s.internal_forces(&st)?;
            objectivity = objectivity.max(f.iter().flatten().fold(0.0f64, |a, x| a.max(x.abs())) / scale);
        }
    }

    let mut gradient: f64 = 0.0;
    for s in &elements {
        for _ in 0..20 {
            let mut st = StructuralState::zeros(s.num_nodes());
            for u in st.u.iter_mut() {
                *u = [rng.gen_range(-0.05..0.05), rng.gen_range(-0.05..0.05), rng.gen_range(-0.2..0.2)];
            }
            let f = s.internal_forces(&st)?;
            let dir: Vec<Dofs> = (0..s.num_nodes()).map(|_| [rng.gen(), rng.gen(), rng.gen()]).collect();
            let h = 1e-6;
            let energy = |sign: f64| {
                let mut x = st.clone();
                for (u, d) in x.u.iter_mut().zip(&dir) {
                    for k in 0..3 {
                        u[k] += sign * h * d[k];
                    }
                }
                s.strain_energy(&x)
            };
            let fd = (energy(1.0)? - energy(-1.0)?) / (2.0 * h);
            let an: f64 = f.iter().zip(&dir).map(|(a, b)| a[0] * b[0] + a[1] * b[1] + a[2] * b[2]).sum();
            let floor = 1e-3 * f.iter().flatten().map(|x| x.abs()).sum::<f64>();
            gradient = gradient.max((fd - an).abs() / an.abs().max(floor));
        }
    }

    // cantilever, 50 elements, tip load
    let (n, len, p) = (50, 2.0, 10.0);
    let steel = elements[1].model.materials[0];
    let pts: Vec<Vec2> = (0..=n).map(|k| [len * k as f64 / n as f64, 0.0]).collect();
    let mut model = StructuralModel { materials: vec![steel], ..Default::default() };
    model.add_chain(&pts, 0);
    model.clamp(0);
    let s = Structure::new(model)?;
    let mut f = vec![[0.0; 3]; n + 1];
    f[n][1] = -p;
    let (st, _) = s.solve_static(&StructuralState::zeros(n + 1), &f, 1e-8, 20)?;
    let exact = p * len.powi(3) / (3.0 * 2e11 * 1e-8);
    let cantilever = (-st.u[n][1] - exact).abs() / exact;

    // truss spring with a point mass
    let spring = Material { e: 1e3, nu: 0.0, rho: 1e-9, section: Section::Beam { area: 1.0, inertia: 0.0, half_depth: 0.0 } };
    let mut model = StructuralModel {
        nodes: vec![[0.0, 0.0], [1.0, 0.0]],
        materials: vec![spring],
        beams: vec![Beam { nodes: [0, 1], material: 0 }],
        point_masses: vec![(1, 2.0)],
        ..Default::default()
    };
    model.clamp(0);
    model.constraints.push(Constraint { node: 1, dof: 1, rate: 0.0 });
    model.constraints.push(Constraint { node: 1, dof: 2, rate: 0.0 });
    let s = Structure::new(model)?;
    let w = (1e3 / s.mass[1][0]).sqrt();
    let dt = 0.1 / w;
    let zero = vec![[0.0; 3]; 2];
    let mut u0 = vec![[0.0; 3]; 2];
    u0[1][0] = 0.01;
    let mut st = s.initial_state(u0, zero.clone(), &zero)?;
    let energy = |st: &StructuralState| -> Result<f64, BoxError> { Ok(s.kinetic_energy(st) + s.strain_energy(st)?) };
    let e0 = energy(&st)?;
    let period = (2.0 * std::f64::consts::PI / w / dt).round() as usize;
    let steps = 10_000;
    let (mut first, mut last) = (0.0, 0.0);
    for i in 0..steps {
        st = s.step(&st, &zero, dt)?;
        if i < period {
            first += energy(&st)? / period as f64;
        }
        if i >= steps - period {
            last += energy(&st)? / period as f64;
        }
    }
    let drift = (last - first).abs() / e0;

    Ok(Check {
        passed: objectivity < 1e-10 && gradient < 1e-6 && cantilever < 0.01 && drift < 1e-3,
        detail: format!(
            "objectivity {objectivity:.2e}, gradient {gradient:.2e}, cantilever {cantilever:.2e}, energy drift {drift:.2e}"
        ),
    })
}

fn coupon() -> Result<Check, BoxError> {
    let mut cfg = ScenarioConfig::new(Case::Coupon);
    let start = Instant::now();
    let clamped = run_coupon(&cfg, &mut Output::discard())?;
    let seconds = start.elapsed().as_secs_f64();
    // same pull with free lateral contraction, for comparison only
    cfg.coupon.grips = Grips::Sliding;
    let sliding = run_coupon(&cfg, &mut Output::discard())?;
    Ok(Check {
        passed: clamped.modulus_error < 0.02 && clamped.vm_error < 1e-10 && seconds < 120.0,
        detail: format!(
            "clamped: modulus error {:.2e}, von Mises error {:.2e} over {} probe elements, {seconds:.2} s; sliding grips: {:.2e} / {:.2e}",
            clamped.modulus_error, clamped.vm_error, clamped.probe_elements, sliding.modulus_error, sliding.vm_error
        ),
    })
}

fn porous() -> Result<Check, BoxError> {
    let cfg = ScenarioConfig::new(Case::PorousMembrane);
    let start = Instant::now();
    let r = run_porous_membrane(&cfg, &mut Output::discard())?;
    let seconds = start.elapsed().as_secs_f64();
    let monotone = r.flux.windows(2).all(|w| w[1] > w[0]);
    let (first, last) = (r.flux[0], r.flux[r.flux.len() - 1]);
    let sealed = r.alphas[0] == 0.0 && first.abs() < 1e-10 * last.abs();
    let list: Vec<String> = r.alphas.iter().zip(&r.flux).map(|(a, f)| format!("{a}: {f:.4e}")).collect();
    Ok(Check {
        passed: monotone && sealed && seconds < 300.0,
        detail: format!("flux {}, {seconds:.1} s", list.join(", ")),
    })
}

fn bluff_body() -> Result<Check, BoxError> {
    let cfg = ScenarioConfig::new(Case::Bluffbody);
    let start = Instant::now();
    let r = run_bluffbody(&cfg, &mut Output::discard())?;
    let seconds = start.elapsed().as_secs_f64();
    let standoffs: Vec<f64> = r.levels.iter().filter_map(|l| l.standoff).collect();
    let detached = standoffs.len() == r.levels.len() && standoffs.iter().all(|&d| d > 0.0);
    let change = match standoffs.as_slice() {
        [.., a, b] => (b - a).abs() / b,
        _ => f64::INFINITY,
    };
    let drag_ok = r.history.rows().iter().all(|row| row.drag_total.is_finite() && row.drag_total > 0.0);
    let list: Vec<String> = standoffs.iter().map(|d| format!("{d:.3}")).collect();
    Ok(Check {
        passed: detached && change < 0.1 && drag_ok && seconds < 1800.0,
        detail: format!(
            "standoff by level [{}] m, last change {:.1}%, drag finite and positive {drag_ok}, final drag {:.3e} N/m, {seconds:.1} s",
            list.join(", "),
            100.0 * change,
            r.levels.last().map_or(f64::NAN, |l| l.drag)
        ),
    })
}

fn piston() -> Result<Check, BoxError> {
    let problem = PistonProblem::default();
    let audit = piston_work_audit(&problem, 3)?;
    let worst = audit.cycles.iter().cloned().fold(0.0, f64::max);
    let d = piston_displacements(&problem, &[2e-3, 1e-3, 5e-4, 2.5e-4], 0.5)?;
    let orders = observed_orders(&d);
    let second = orders.iter().all(|&q| q > 1.8);
    let list: Vec<String> = orders.iter().map(|q| format!("{q:.2}")).collect();
    Ok(Check {
        passed: worst < 0.02 && second,
        detail: format!("worst cycle imbalance {:.2e} over {} cycles, observed orders [{}]", worst, audit.cycles.len(), list.join(", ")),
    })
}
