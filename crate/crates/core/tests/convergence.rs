//! Order of accuracy on a smooth entropy wave: a density bump carried by a
//! uniform stream at constant pressure. The exact solution is the translated
//! initial profile, so the spatial study needs no source terms.

use fsikit::embedded::{classify, EmbeddedSurface};
use fsikit::fluid::{Domain, FluidConfig, FluidSolution, FluidSolver, Integrator};
use fsikit::gas::{to_conservative, GasModel, Primitive};
use fsikit::geom::Vec2;
use fsikit::mesh::{build_dual, build_kuhn_grid, BoundaryKind, SideKinds};
use fsikit::riemann::Limiter;

const U: Vec2 = [1.0, 0.5];
const C0: Vec2 = [0.35, 0.4];

fn bump(x: Vec2, t: f64) -> f64 {
    let c = [C0[0] + U[0] * t, C0[1] + U[1] * t];
    let r2 = (x[0] - c[0]).powi(2) + (x[1] - c[1]).powi(2);
    1.0 + 0.2 * (-r2 / 0.01).exp()
}

struct Run {
    /// Volume-weighted density error over the disc the bump moves through.
    l1: f64,
    rho: Vec<f64>,
}

fn solve(n: usize, cfg: FluidConfig, dt: Option<f64>, t_end: f64) -> Run {
    let gas = GasModel::ideal(1.4);
    let far = Primitive::new(1.0, U, 1.0);
    let mesh = build_kuhn_grid([0.0, 0.0], [1.0, 1.0], n, n, SideKinds::all(BoundaryKind::FarField)).unwrap();
    let dual = build_dual(&mesh).unwrap();
    let surface = EmbeddedSurface::default();
    let status = classify(&mesh, &dual, &surface).unwrap();
    let dom = Domain { mesh: &mesh, dual: &dual, status: &status, surface: &surface };
    let solver = FluidSolver::new(gas, cfg, far);
    let mut sol = FluidSolution::uniform(mesh.vertices.len(), &far, &gas);
    for (w, x) in sol.w.iter_mut().zip(&mesh.vertices) {
        *w = to_conservative(&Primitive::new(bump(*x, 0.0), U, 1.0), &gas).to_array();
    }
    while sol.t < t_end * (1.0 - 1e-12) {
        let left = t_end - sol.t;
        match dt {
            Some(h) => {
                solver.advance_bdf2(&dom, &mut sol, h.min(left)).unwrap();
            }
            None => {
                let h = solver.stable_dt(&dom, &sol.w).min(left);
                solver.advance_explicit(&dom, &mut sol, h).unwrap();
            }
        }
    }
    let mut l1 = 0.0;
    for (i, x) in mesh.vertices.iter().enumerate() {
        let c = [C0[0] + U[0] * t_end, C0[1] + U[1] * t_end];
        if (x[0] - c[0]).hypot(x[1] - c[1]) < 0.3 {
            l1 += dual.volumes[i] * (sol.w[i][0] - bump(*x, t_end)).abs();
        }
    }
    Run { l1, rho: sol.w.iter().map(|w| w[0]).collect() }
}

#[test]
fn unlimited_muscl_is_second_order_in_space() {
    let cfg = FluidConfig { limiter: Limiter::None, cfl: 0.4, ..Default::default() };
    let errors: Vec<f64> = [16, 32, 64].iter().map(|&n| solve(n, cfg, None, 0.2).l1).collect();
    let orders: Vec<f64> = errors.windows(2).map(|w| (w[0] / w[1]).log2()).collect();
    println!("errors {errors:?} orders {orders:?}");
    assert!(orders[1] > 1.8, "{errors:?} {orders:?}");
}

#[test]
fn limited_muscl_beats_first_order() {
    let limited = FluidConfig { cfl: 0.4, ..Default::default() };
    let first = FluidConfig { cfl: 0.4, order: 1, ..Default::default() };
    let e2: Vec<f64> = [32, 64].iter().map(|&n| solve(n, limited, None, 0.2).l1).collect();
    let e1: Vec<f64> = [32, 64].iter().map(|&n| solve(n, first, None, 0.2).l1).collect();
    let (q2, q1) = ((e2[0] / e2[1]).log2(), (e1[0] / e1[1]).log2());
    println!("limited {e2:?} ({q2:.2}), first order {e1:?} ({q1:.2})");
    assert!(e2[1] < e1[1] && q2 > q1, "{e2:?} {e1:?}");
}

/// Self-convergence of the two-step implicit integrator: with the mesh held
/// fixed, halving the step should quarter the difference to the next level.
#[test]
fn bdf2_is_second_order_in_time() {
    let cfg = FluidConfig { integrator: Integrator::Bdf2, newton_tol: 1e-12, newton_max_iter: 30, ..Default::default() };
    let t_end = 0.1;
    let runs: Vec<Vec<f64>> = [0.02, 0.01, 0.005, 0.0025].iter().map(|&h| solve(24, cfg, Some(h), t_end).rho).collect();
    let diff = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
    let d: Vec<f64> = runs.windows(2).map(|w| diff(&w[0], &w[1])).collect();
    let orders: Vec<f64> = d.windows(2).map(|w| (w[0] / w[1]).log2()).collect();
    println!("differences {d:?} orders {orders:?}");
    assert!(orders.iter().all(|&q| q > 1.7), "{d:?} {orders:?}");
}
