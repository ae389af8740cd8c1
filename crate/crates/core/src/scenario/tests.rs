use super::*;
use crate::embedded::{EmbeddedSurface, FacetKind};
use crate::fluid::FluidSolver;
use crate::gas::Primitive;

const CONFIGS: [(&str, &str); 6] = [
    ("sod", include_str!("../../../../configs/sod.toml")),
    ("bluffbody", include_str!("../../../../configs/bluffbody.toml")),
    ("porous_membrane", include_str!("../../../../configs/porous_membrane.toml")),
    ("coupon", include_str!("../../../../configs/coupon.toml")),
    ("parachute2d_s1", include_str!("../../../../configs/parachute2d_s1.toml")),
    ("parachute2d_s4", include_str!("../../../../configs/parachute2d_s4.toml")),
];

#[test]
fn shipped_configs_parse_and_round_trip() {
    for (name, text) in CONFIGS {
        let cfg = ScenarioConfig::from_toml(text).unwrap_or_else(|e| panic!("{name}: {e}"));
        let again = ScenarioConfig::from_toml(&cfg.to_toml()).unwrap();
        assert_eq!(cfg, again, "{name}");
    }
    for case in [Case::Sod, Case::Bluffbody, Case::PorousMembrane, Case::Coupon, Case::Parachute2d] {
        let cfg = ScenarioConfig::new(case);
        assert_eq!(ScenarioConfig::from_toml(&cfg.to_toml()).unwrap(), cfg);
    }
}

#[test]
fn missing_keys_take_case_defaults() {
    let cfg = ScenarioConfig::from_toml("case = \"parachute2d\"").unwrap();
    assert_eq!(cfg, ScenarioConfig::new(Case::Parachute2d));
    let cfg = ScenarioConfig::from_toml("case = \"porous_membrane\"\n[membrane]\nt_end = 2.0").unwrap();
    assert_eq!(cfg.domain, ScenarioConfig::new(Case::PorousMembrane).domain);
    assert_eq!(cfg.membrane.t_end, 2.0);
}

#[test]
fn unknown_keys_are_errors() {
    for text in [
        "case = \"sod\"\nbogus = 1",
        "case = \"sod\"\n[sod]\ncels = 10",
        "case = \"coupon\"\n[coupon.fabric]\nyoung = 1.0",
        "case = \"parachute2d\"\n[canopy.geometry]\nline_lenght = 3.0",
        "case = \"teacup\"",
        "seed = 3",
    ] {
        let e = ScenarioConfig::from_toml(text).unwrap_err();
        assert!(matches!(e, ScenarioError::Config(_)), "{text}: {e}");
        assert_eq!(e.exit_code(), 2);
    }
}

#[test]
fn invalid_values_are_errors() {
    for text in [
        "case = \"sod\"\n[sod]\ncells = 1",
        "case = \"porous_membrane\"\n[membrane]\nalphas = [0.5, 1.5]",
        "case = \"coupon\"\n[coupon]\nwidth = \"3 furlongs\"",
        "case = \"bluffbody\"\n[freestream]\nrho = -1.0",
    ] {
        assert!(matches!(ScenarioConfig::from_toml(text), Err(ScenarioError::Config(_))), "{text}");
    }
}

#[test]
fn inch_inputs_convert_to_si() {
    let cfg = ScenarioConfig::from_toml(CONFIGS[3].1).unwrap();
    assert!((cfg.coupon.width.0 - 0.0762).abs() < 1e-15);
    assert!((cfg.coupon.height.0 - 0.1524).abs() < 1e-15);
    assert!((cfg.coupon.rate.0 - 5.08e-3).abs() < 1e-17);
    let cfg = ScenarioConfig::from_toml("case = \"coupon\"\n[coupon]\nwidth = 0.05\nrate = \"1 mm/s\"").unwrap();
    assert_eq!(cfg.coupon.width.0, 0.05);
    assert!((cfg.coupon.rate.0 - 1e-3).abs() < 1e-18);
}

#[test]
fn scenario_one_and_four_differ_only_in_freestream() {
    let s1 = ScenarioConfig::from_toml(CONFIGS[4].1).unwrap();
    let mut s4 = ScenarioConfig::from_toml(CONFIGS[5].1).unwrap();
    assert_eq!(s1.freestream, Freestream::scenario1());
    assert_eq!(s4.freestream, Freestream::scenario4());
    s4.freestream = s1.freestream;
    assert_eq!(s1, s4);
}

fn quiescent(p: f64) -> Primitive {
    Primitive::new(1.0, [0.0, 0.0], p)
}

fn at_rest_flow(cfg: &ScenarioConfig, surface: EmbeddedSurface, init: impl Fn(crate::geom::Vec2) -> Primitive) -> Flow {
    let solver = FluidSolver::new(cfg.gas, cfg.fluid, quiescent(1.0));
    Flow::new(cases::base_mesh(cfg).unwrap(), surface, solver, init).unwrap()
}

#[test]
fn uniform_pressure_on_closed_body_gives_no_drag() {
    let cfg = ScenarioConfig::new(Case::Bluffbody);
    let body = body_surface(&cfg.body).unwrap();
    let flow = at_rest_flow(&cfg, body, |_| quiescent(260.0));
    let loads = flow.loads().unwrap();
    let d = drag_history(&loads.forces, &flow.surface, [1.0, 0.0]);
    assert!(d.total.abs() < 1e-10 * 260.0 * cfg.body.diameter, "{d:?}");
    assert_eq!(d.total, d.body);
    let lift = drag_history(&loads.forces, &flow.surface, [0.0, 1.0]);
    assert!(lift.total.abs() < 1e-10 * 260.0 * cfg.body.diameter);
}

#[test]
fn flat_plate_drag_is_pressure_jump_times_length() {
    let mut cfg = ScenarioConfig::new(Case::PorousMembrane);
    cfg.domain.ny = 20;
    let (x, y0, y1) = (2.025, 0.15, 0.85);
    let plate = EmbeddedSurface::polyline(&[[x, y0], [x, 0.5], [x, y1]], 0.0, FacetKind::Canopy);
    let (p_up, p_down) = (3.0, 1.25);
    let flow = at_rest_flow(&cfg, plate, |q| quiescent(if q[0] < x { p_up } else { p_down }));
    let loads = flow.loads().unwrap();
    let d = drag_history(&loads.forces, &flow.surface, [1.0, 0.0]);
    let want = (p_up - p_down) * (y1 - y0);
    assert!((d.canopy - want).abs() < 1e-12 * want, "{} vs {want}", d.canopy);
    assert_eq!(d.total, d.canopy);
}

#[test]
fn drag_groups_partition_the_total() {
    let mut s = EmbeddedSurface::polygon(&[[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]], 0.0, FacetKind::RigidBody);
    s.merge(&EmbeddedSurface::polyline(&[[2.0, 0.0], [2.0, 1.0], [2.0, 2.0]], 0.1, FacetKind::Canopy));
    s.merge(&EmbeddedSurface::polygon(&[[3.0, 0.0], [3.1, 0.0], [3.0, 0.1]], 0.0, FacetKind::CableSlave));
    let forces: Vec<_> = (0..s.facets.len()).map(|k| [1.0 + k as f64, 0.5 - k as f64]).collect();
    let dir = [0.6, 0.8];
    let d = drag_history(&forces, &s, dir);
    let along = |r: std::ops::Range<usize>| r.map(|k| forces[k][0] * dir[0] + forces[k][1] * dir[1]).sum::<f64>();
    assert_eq!(d.body, along(0..3));
    assert_eq!(d.canopy, along(3..5));
    assert_eq!(d.cables, along(5..8));
    assert_eq!(d.total, d.body + d.canopy + d.cables);
}

#[test]
fn history_csv_round_trips() {
    let mut h = TimeHistory::default();
    for k in 0..5 {
        let t = 0.1 * k as f64 + 1e-17;
        h.push(HistoryRow { t, drag_total: 1.0 / 3.0 + t, vm_max: 2e7 * t, interface_work: -t, ..Default::default() }).unwrap();
    }
    let back = TimeHistory::read_csv(h.to_csv().as_bytes()).unwrap();
    assert_eq!(back, h);
    assert!(h.push(HistoryRow { t: 0.0, ..Default::default() }).is_err());
    assert!(TimeHistory::read_csv("t,drag\n0,1\n".as_bytes()).is_err());
    let table = postprocess(&h);
    assert!(table.contains("peak total drag"));
    assert_eq!(table.lines().filter(|l| !l.starts_with('#')).count(), 5);
}

/// Coarse parachute with short phases.
fn small_parachute(rigid: f64, fixed: f64, coupled: f64) -> ScenarioConfig {
    let mut cfg = ScenarioConfig::new(Case::Parachute2d);
    cfg.domain.nx = 20;
    cfg.domain.ny = 16;
    cfg.amr.initial_rounds = 2;
    cfg.phases = Phases { rigid, fixed, coupled };
    cfg.output.history_every = 5;
    cfg.canopy.perturbation = 0.05;
    cfg.seed = 11;
    cfg
}

#[test]
fn zero_fixed_and_coupled_phases_reduce_to_rigid_solve() {
    let cfg = small_parachute(4e-3, 0.0, 0.0);
    let a = run(&cfg, RunOptions::default()).unwrap();
    let ckpt = a.checkpoint.unwrap();

    let setup = parachute_setup(&cfg).unwrap();
    let inf = cfg.freestream.primitive(&cfg.gas);
    let solver = FluidSolver::new(cfg.gas, cfg.fluid, inf);
    let mut flow = Flow::new(setup.mesh, setup.body, solver, |_| inf).unwrap();
    while !flow.done(cfg.phases.rigid) {
        flow.step_towards(cfg.phases.rigid).unwrap();
    }
    assert_eq!(ckpt.coupled.fluid.w, flow.sol.w);
    assert_eq!(ckpt.coupled.step, flow.steps);
    assert!(a.history.rows().iter().all(|r| r.drag_canopy == 0.0 && r.drag_cables == 0.0));
    assert!(a.history.all_finite());
}

#[test]
fn restart_from_fixed_checkpoint_is_bit_for_bit() {
    let cfg = small_parachute(2e-3, 2e-3, 3e-4);
    let direct = run(&cfg, RunOptions::default()).unwrap();
    let stopped = run(&cfg, RunOptions { out: None, stop_after: Some(Phase::Fixed) }).unwrap();
    let ckpt = stopped.checkpoint.unwrap();
    assert_eq!(ckpt.next, Phase::Coupled);
    let ckpt = Checkpoint::from_json(&ckpt.to_json()).unwrap();
    let resumed = resume(ckpt, RunOptions::default()).unwrap();

    assert_eq!(resumed.history, direct.history);
    assert_eq!(resumed.summary, direct.summary);
    let (a, b) = (resumed.checkpoint.unwrap(), direct.checkpoint.unwrap());
    assert_eq!(a.coupled.fluid, b.coupled.fluid);
    assert_eq!(a.coupled.state, b.coupled.state);
    assert_eq!(a.coupled.surface, b.coupled.surface);

    // the coupled phase did move the canopy and every column stayed finite
    assert!(direct.history.all_finite());
    assert!(direct.history.rows().iter().any(|r| r.drag_canopy != 0.0));
    assert_ne!(a.coupled.state.u, a.state0.u);
}

#[test]
fn runs_are_deterministic() {
    let cfg = small_parachute(1e-3, 1e-3, 2e-4);
    let a = run(&cfg, RunOptions::default()).unwrap();
    let b = run(&cfg, RunOptions::default()).unwrap();
    assert_eq!(a.history, b.history);
    assert_eq!(a.summary, b.summary);
}

#[test]
fn bad_checkpoints_are_rejected() {
    let e = Checkpoint::from_json("{\"config\": 3}").unwrap_err();
    assert!(matches!(e, ScenarioError::Checkpoint(_)));
    assert_eq!(e.exit_code(), 2);
}

#[test]
fn run_writes_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = ScenarioConfig::new(Case::Sod);
    cfg.sod.cells = 50;
    let a = run(&cfg, RunOptions { out: Some(dir.path()), stop_after: None }).unwrap();
    for f in ["history.csv", "summary.txt", "profile.txt", "run.log"] {
        assert!(dir.path().join(f).is_file(), "{f}");
    }
    assert_eq!(a.files.len(), 4);
    let h = TimeHistory::read_csv(std::fs::File::open(dir.path().join("history.csv")).unwrap()).unwrap();
    assert_eq!(h, a.history);
}
