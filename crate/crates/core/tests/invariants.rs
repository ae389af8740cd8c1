//! Randomized invariants spanning several modules.

use std::collections::BTreeSet;

use fsikit::embedded::{EmbeddedSurface, FacetKind};
use fsikit::fluid::{FluidConfig, FluidSolver};
use fsikit::gas::{GasModel, Primitive};
use fsikit::geom::{add, norm, rotate, sub, Vec2};
use fsikit::mesh::{build_dual, build_kuhn_grid, nvb_refine, BoundaryKind, SideKinds};
use fsikit::scenario::{Case, Flow, HistoryRow, ScenarioConfig, TimeHistory};
use fsikit::structure::{Material, Membrane, Section, StructuralModel, StructuralState, Structure};
use proptest::prelude::*;

/// Star-shaped polygon around `c`, counter-clockwise.
fn star(c: Vec2, radii: &[f64], phase: f64) -> Vec<Vec2> {
    let n = radii.len();
    (0..n)
        .map(|k| {
            let a = phase + 2.0 * std::f64::consts::PI * k as f64 / n as f64;
            [c[0] + radii[k] * a.cos(), c[1] + radii[k] * a.sin()]
        })
        .collect()
}

fn star_strategy() -> impl Strategy<Value = Vec<Vec2>> {
    (-0.05f64..0.05, -0.05f64..0.05, proptest::collection::vec(0.12f64..0.28, 5..12), 0.0f64..1.0)
        .prop_map(|(dx, dy, radii, phase)| star([0.5 + dx, 0.5 + dy], &radii, phase))
}

fn quiet_flow(n: usize, surface: EmbeddedSurface, init: impl Fn(Vec2) -> Primitive) -> Flow {
    let mesh = build_kuhn_grid([0.0, 0.0], [1.0, 1.0], n, n, SideKinds::all(BoundaryKind::SlipWall)).unwrap();
    let gas = GasModel::ideal(1.4);
    let solver = FluidSolver::new(gas, FluidConfig::default(), Primitive::new(1.0, [0.0, 0.0], 1.0));
    Flow::new(mesh, surface, solver, init).unwrap()
}

fn fabric() -> Material {
    Material { e: 9.448e8, nu: 0.4, rho: 1154.25, section: Section::Membrane { thickness: 7.6073e-5 } }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn nvb_keeps_conformity_area_and_angles(marks in proptest::collection::vec(proptest::collection::vec(0usize..100_000, 1..20), 1..6)) {
        let mut m = build_kuhn_grid([0.0, 0.0], [2.0, 1.0], 6, 3, SideKinds::all(BoundaryKind::FarField)).unwrap();
        let (area, angle) = (m.total_area(), m.global_min_angle());
        for round in marks {
            let set: BTreeSet<usize> = round.iter().map(|k| k % m.triangles.len()).collect();
            let next = nvb_refine(&m, &set);
            prop_assert!(next.triangles.len() >= m.triangles.len() + set.len());
            m = next;
            prop_assert!(m.audit().is_ok());
        }
        prop_assert!((m.total_area() - area).abs() < 1e-12 * area);
        prop_assert!(m.global_min_angle() >= 0.5 * angle - 1e-12);
        let d = build_dual(&m).unwrap();
        let vol: f64 = d.volumes.iter().sum();
        prop_assert!((vol - area).abs() < 1e-12 * area);
    }

    #[test]
    fn uniform_pressure_on_closed_body_has_no_net_force(pts in star_strategy(), n in 16usize..40) {
        let surface = EmbeddedSurface::polygon(&pts, 0.0, FacetKind::RigidBody);
        let perimeter: f64 = (0..pts.len()).map(|k| norm(sub(pts[(k + 1) % pts.len()], pts[k]))).sum();
        let p = 3.0;
        let flow = quiet_flow(n, surface, |_| Primitive::new(1.2, [0.0, 0.0], p));
        let loads = flow.loads().unwrap();
        // every outer side is wetted, every inner side dry
        prop_assert_eq!(loads.unwetted_sides, pts.len());
        let f = loads.total();
        prop_assert!(norm(f) < 1e-12 * p * perimeter, "{f:?}");
    }

    #[test]
    fn sealed_body_conserves_exterior_mass(pts in star_strategy()) {
        let surface = EmbeddedSurface::polygon(&pts, 0.0, FacetKind::RigidBody);
        let mut flow = quiet_flow(24, surface, |x| {
            let r2 = (x[0] - 0.15).powi(2) + (x[1] - 0.2).powi(2);
            Primitive::new(1.0 + 0.4 * (-r2 / 0.005).exp(), [0.2, 0.1], 1.0 + (-r2 / 0.005).exp())
        });
        let active = flow.status.active.clone();
        let mass = |flow: &Flow| flow.sol.totals(&flow.dual, |i| active[i])[0];
        let m0 = mass(&flow);
        for _ in 0..100 {
            flow.step_towards(f64::INFINITY).unwrap();
        }
        prop_assert!(((mass(&flow) - m0) / m0).abs() < 1e-12);
    }

    #[test]
    fn membrane_forces_are_objective(theta in -3.14f64..3.14, sx in -2.0f64..2.0, sy in -2.0f64..2.0,
                                     stretch in proptest::array::uniform6(-0.01f64..0.01)) {
        let nodes = vec![[0.0, 0.0], [1.0, 0.1], [0.2, 0.9]];
        let s = Structure::new(StructuralModel {
            nodes: nodes.clone(),
            materials: vec![fabric()],
            membranes: vec![Membrane { nodes: [0, 1, 2], material: 0 }],
            ..Default::default()
        })
        .unwrap();
        // deform, then rotate and shift the deformed shape
        let deformed: Vec<Vec2> = nodes.iter().enumerate().map(|(k, p)| add(*p, [stretch[2 * k], stretch[2 * k + 1]])).collect();
        let at = |pos: &[Vec2], th: f64| {
            let mut st = StructuralState::zeros(3);
            for (k, p) in pos.iter().enumerate() {
                st.u[k] = [p[0] - nodes[k][0], p[1] - nodes[k][1], th];
            }
            st
        };
        let f0 = s.internal_forces(&at(&deformed, 0.0)).unwrap();
        let moved: Vec<Vec2> = deformed.iter().map(|p| add(rotate(*p, theta), [sx, sy])).collect();
        let f1 = s.internal_forces(&at(&moved, theta)).unwrap();
        let scale = f0.iter().map(|f| norm([f[0], f[1]])).fold(1e-3, f64::max);
        for (a, b) in f0.iter().zip(&f1) {
            let r = rotate([a[0], a[1]], theta);
            prop_assert!(norm(sub(r, [b[0], b[1]])) < 1e-9 * scale);
        }
        // and the energy is unchanged
        let e0 = s.strain_energy(&at(&deformed, 0.0)).unwrap();
        let e1 = s.strain_energy(&at(&moved, theta)).unwrap();
        prop_assert!((e0 - e1).abs() <= 1e-9 * e0.max(1e-12));
    }

    #[test]
    fn config_round_trips(case in 0usize..5, nx in 4usize..200, cfl in 0.05f64..0.9, seed in 0u64..1_000_000) {
        let case = [Case::Sod, Case::Bluffbody, Case::PorousMembrane, Case::Coupon, Case::Parachute2d][case];
        let mut cfg = ScenarioConfig::new(case);
        cfg.domain.nx = nx;
        cfg.fluid.cfl = cfl;
        cfg.seed = seed;
        let text = cfg.to_toml();
        let back = ScenarioConfig::from_toml(&text).unwrap();
        prop_assert_eq!(&back, &cfg);
        prop_assert_eq!(back.to_toml(), text);
    }

    #[test]
    fn history_csv_round_trips(rows in proptest::collection::vec(proptest::array::uniform7(-1e9f64..1e9), 0..30)) {
        let mut h = TimeHistory::default();
        for (k, r) in rows.iter().enumerate() {
            h.push(HistoryRow {
                t: k as f64 * 0.37 + 1e-3,
                drag_total: r[0],
                drag_body: r[1],
                drag_canopy: r[2],
                drag_cables: r[3],
                vm_max: r[4].abs(),
                vm_topk: r[5].abs(),
                interface_work: r[6],
            })
            .unwrap();
        }
        let back = TimeHistory::read_csv(h.to_csv().as_bytes()).unwrap();
        prop_assert_eq!(back, h);
    }
}
