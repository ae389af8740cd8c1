//! Phased two-dimensional parachute run: rigid forebody, then the folded
//! canopy held fixed, then the coupled release.

use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::couple::{cable_hexagons, pair_slaves, Coupled, CoupledSnapshot, InterfaceMap, MasterSlaveMap};
use crate::embedded::{write_surface, EmbeddedSurface, Facet, FacetKind};
use crate::fluid::{write_field, FluidSolution, FluidSolver};
use crate::mesh::{build_dual, Mesh};
use crate::structure::{folded_geometry, ContactPair, FoldedCanopy, StructuralState, Structure};

use super::cases::{body_surface, refined_mesh, step_size};
use super::config::ScenarioConfig;
use super::history::{drag_history, top_k_mean, HistoryRow, TimeHistory};
use super::{Output, Phase, ScenarioError};

/// Geometry and structure of the parachute case before any flow is run.
#[derive(Debug, Clone)]
pub struct ParachuteSetup {
    pub mesh: Mesh,
    pub body: EmbeddedSurface,
    /// Body, canopy fabric and cable cross-sections, in that order.
    pub full: EmbeddedSurface,
    pub canopy: FoldedCanopy,
    pub structure: Structure,
    pub map: InterfaceMap,
    /// Folded configuration at rest.
    pub state: StructuralState,
}

/// Everything needed to continue a phased run at a phase boundary.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Checkpoint {
    /// Stored as embedded TOML text, which keeps infinite limits intact.
    #[serde(with = "config_toml")]
    pub config: ScenarioConfig,
    /// Phase the run continues with.
    pub next: Phase,
    pub coupled: CoupledSnapshot,
    pub history: TimeHistory,
    pub full: EmbeddedSurface,
    pub map: InterfaceMap,
    pub state0: StructuralState,
}

impl Checkpoint {
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("checkpoint serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, ScenarioError> {
        let c: Checkpoint = serde_json::from_str(text).map_err(|e| ScenarioError::Checkpoint(e.to_string()))?;
        c.config.validate()?;
        Ok(c)
    }
}

mod config_toml {
    use super::ScenarioConfig;
    use serde::{de::Error as _, ser::Error as _, Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(c: &ScenarioConfig, s: S) -> Result<S::Ok, S::Error> {
        let text = toml::to_string(c).map_err(S::Error::custom)?;
        s.serialize_str(&text)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<ScenarioConfig, D::Error> {
        let text = String::deserialize(d)?;
        toml::from_str(&text).map_err(D::Error::custom)
    }
}

fn config_err(e: impl std::fmt::Display) -> ScenarioError {
    ScenarioError::Config(e.to_string())
}

/// Builds the forebody, the folded canopy behind it, the embedded surface and
/// its map to the structure, and a background mesh refined towards all of it.
pub fn parachute_setup(cfg: &ScenarioConfig) -> Result<ParachuteSetup, ScenarioError> {
    let c = &cfg.canopy;
    let body = body_surface(&cfg.body)?;
    let rear = body.nodes.iter().map(|p| p[0]).fold(f64::NEG_INFINITY, f64::max);
    let mut geometry = c.geometry.clone();
    geometry.confluence = [rear + c.riser, cfg.body.nose[1]];
    let canopy = folded_geometry(&geometry, c.fabric.strip(), c.line.material()).map_err(config_err)?;

    let mut model = canopy.structure.model.clone();
    model.damping = c.damping;
    if c.contact_stiffness > 0.0 {
        model.contact.stiffness = c.contact_stiffness;
        model.contact.band = c.contact_band;
    }
    let zeros = vec![[0.0; 3]; model.nodes.len()];
    let probe = Structure::new(model.clone()).map_err(config_err)?;
    let folded = probe.initial_state(canopy.initial.clone(), zeros.clone(), &zeros).map_err(config_err)?;
    if c.contact_stiffness > 0.0 {
        model.contact.pairs = contact_pairs(&canopy, &probe, &folded);
    }
    let structure = Structure::new(model).map_err(config_err)?;
    let state = structure.initial_state(canopy.initial.clone(), zeros.clone(), &zeros).map_err(config_err)?;

    // canopy fabric facets sit on the structural nodes
    let mut full = body.clone();
    let mut direct: Vec<Option<usize>> = vec![None; body.nodes.len()];
    let mut index: HashMap<usize, usize> = HashMap::new();
    let band: Vec<bool> = {
        let mut b = vec![false; structure.num_nodes()];
        for h in &canopy.halves {
            for &n in &h.band {
                b[n] = true;
            }
        }
        b
    };
    for &k in &canopy.canopy_beams {
        let ends = structure.model.beams[k].nodes;
        let ids = ends.map(|n| {
            *index.entry(n).or_insert_with(|| {
                full.nodes.push(structure.position(&state, n));
                full.velocities.push([0.0; 2]);
                direct.push(Some(n));
                full.nodes.len() - 1
            })
        });
        let alpha = if band[ends[0]] && band[ends[1]] { c.porosity.band } else { c.porosity.disk };
        full.facets.push(Facet { nodes: ids, alpha, kind: FacetKind::Canopy, element: Some(k) });
    }

    // gap tapes and suspension lines as slaved hexagonal cross-sections
    let cables: Vec<usize> = canopy.gap_beams.iter().chain(&canopy.line_beams).copied().collect();
    let radius = 0.5 * c.line.diameter;
    let hex = cable_hexagons(&structure, &state, &cables, radius, c.cable_spacing);
    let slaves = pair_slaves(&hex, &structure, &state, &cables, radius).map_err(config_err)?;
    let offset = full.nodes.len();
    let slaves = MasterSlaveMap { slaves: slaves.slaves.into_iter().map(|(n, m)| (n + offset, m)).collect() };
    full.merge(&hex);
    full.validate().map_err(config_err)?;
    let map = InterfaceMap::new(&full, &structure, direct, slaves).map_err(config_err)?;

    let (lo, hi) = (cfg.domain.lo, cfg.domain.hi);
    if full.nodes.iter().any(|p| !(p[0] > lo[0] && p[0] < hi[0] && p[1] > lo[1] && p[1] < hi[1])) {
        return Err(ScenarioError::Config("the forebody and canopy do not fit inside the domain".into()));
    }
    let mesh = refined_mesh(cfg, &full.segments())?;
    Ok(ParachuteSetup { mesh, body, full, canopy, structure, map, state })
}

/// Canopy nodes of each half against the canopy segments of the other,
/// oriented so that every node starts on the admissible side.
fn contact_pairs(canopy: &FoldedCanopy, s: &Structure, st: &StructuralState) -> Vec<ContactPair> {
    let chain = |h: usize| -> Vec<usize> {
        let half = &canopy.halves[h];
        let mut v = half.disk.clone();
        v.extend(half.band.iter().skip(1));
        v
    };
    let mut pairs = Vec::new();
    for h in 0..2 {
        let nodes = chain(h);
        let other = chain(1 - h);
        for &n in &nodes {
            let p = s.position(st, n);
            for w in other.windows(2) {
                let (a, b) = (s.position(st, w[0]), s.position(st, w[1]));
                let d = crate::geom::sub(b, a);
                let r = crate::geom::sub(p, a);
                // right-hand normal of a -> b is (d1, -d0)
                let side = r[0] * d[1] - r[1] * d[0];
                let segment = if side >= 0.0 { [w[0], w[1]] } else { [w[1], w[0]] };
                pairs.push(ContactPair { node: n, segment });
            }
        }
    }
    pairs
}

fn coupling_err(phase: Phase, c: &Coupled, e: impl Into<super::BoxError>) -> ScenarioError {
    ScenarioError::numerical(phase, c.step, c.fluid.t, e)
}

fn row(c: &Coupled, cfg: &ScenarioConfig, phase: Phase) -> Result<HistoryRow, ScenarioError> {
    let d = drag_history(&c.facet_forces, &c.surface, cfg.freestream.direction());
    let vm = c.structure.element_von_mises(&c.state).map_err(|e| coupling_err(phase, c, e))?;
    let r = HistoryRow {
        t: c.fluid.t,
        drag_total: d.total,
        drag_body: d.body,
        drag_canopy: d.canopy,
        drag_cables: d.cables,
        vm_max: vm.iter().cloned().fold(0.0, f64::max),
        vm_topk: top_k_mean(&vm, cfg.output.top_k),
        interface_work: c.work_fluid,
    };
    if !r.is_finite() {
        return Err(coupling_err(phase, c, format!("non-finite history row {r:?}")));
    }
    Ok(r)
}

/// Advances `c` to `t_end`, recording history and snapshots.
fn run_phase(
    c: &mut Coupled,
    cfg: &ScenarioConfig,
    phase: Phase,
    t_end: f64,
    history: &mut TimeHistory,
    out: &mut Output,
) -> Result<(), ScenarioError> {
    let tol = 1e-12 * t_end.abs().max(1e-300);
    let first = c.step;
    while c.fluid.t < t_end - tol {
        let left = t_end - c.fluid.t;
        if c.frozen {
            c.config.fluid_substeps = 1;
            c.config.dt = step_size(c.solver.stable_dt(&c.domain(), &c.fluid.w), left);
        } else if c.config.dt > left {
            c.config.dt = left;
        }
        c.advance().map_err(|e| coupling_err(phase, c, e))?;
        if c.step % cfg.output.history_every == 0 {
            history.push_new(row(c, cfg, phase)?)?;
        }
        if cfg.output.snapshot_every > 0 && c.step % cfg.output.snapshot_every == 0 {
            snapshot(c, out)?;
        }
    }
    history.push_new(row(c, cfg, phase)?)?;
    out.log(format!("{phase} phase: steps {first}..{}, t = {:.6e} s", c.step, c.fluid.t));
    Ok(())
}

fn snapshot(c: &Coupled, out: &mut Output) -> Result<(), ScenarioError> {
    if !out.has_dir() {
        return Ok(());
    }
    out.write(&format!("field_{:07}.txt", c.step), &write_field(&c.mesh, &c.fluid, &c.status.active, &c.solver.gas))?;
    out.write(&format!("surface_{:07}.txt", c.step), &write_surface(&c.surface))
}

struct Run {
    coupled: Coupled,
    history: TimeHistory,
    full: EmbeddedSurface,
    map: InterfaceMap,
    state0: StructuralState,
}

impl Run {
    fn checkpoint(&self, cfg: &ScenarioConfig, next: Phase) -> Checkpoint {
        Checkpoint {
            config: cfg.clone(),
            next,
            coupled: self.coupled.snapshot(),
            history: self.history.clone(),
            full: self.full.clone(),
            map: self.map.clone(),
            state0: self.state0.clone(),
        }
    }
}

type PhasedOutput = (TimeHistory, String, Option<Box<Checkpoint>>);

pub(crate) fn run(cfg: &ScenarioConfig, stop_after: Option<Phase>, out: &mut Output) -> Result<PhasedOutput, ScenarioError> {
    let setup = parachute_setup(cfg)?;
    out.log(format!(
        "mesh {} nodes, surface {} facets, structure {} nodes",
        setup.mesh.vertices.len(),
        setup.full.facets.len(),
        setup.structure.num_nodes()
    ));
    let fail = |e: crate::mesh::MeshError| ScenarioError::numerical(Phase::Setup, 0, 0.0, e);
    let dual = build_dual(&setup.mesh).map_err(fail)?;
    let gas = cfg.gas;
    let inf = cfg.freestream.primitive(&gas);
    let fluid = FluidSolution::uniform(setup.mesh.vertices.len(), &inf, &gas);
    let solver = FluidSolver::new(gas, cfg.fluid, inf);
    let body_map = InterfaceMap::new(&setup.body, &setup.structure, Vec::new(), MasterSlaveMap::default()).map_err(config_err)?;
    let mut coupled = Coupled::new(
        setup.mesh,
        dual,
        setup.body,
        fluid,
        solver,
        setup.structure,
        setup.state.clone(),
        body_map,
        cfg.coupling,
    )
    .map_err(|e| ScenarioError::numerical(Phase::Setup, 0, 0.0, e))?;
    coupled.frozen = true;
    let run = Run { coupled, history: TimeHistory::default(), full: setup.full, map: setup.map, state0: setup.state };
    continue_from(run, cfg, Phase::Rigid, stop_after, out)
}

pub(crate) fn resume(ckpt: Checkpoint, stop_after: Option<Phase>, out: &mut Output) -> Result<PhasedOutput, ScenarioError> {
    let cfg = ckpt.config;
    let coupled = ckpt.coupled.restore().map_err(|e| ScenarioError::Checkpoint(e.to_string()))?;
    let run = Run { coupled, history: ckpt.history, full: ckpt.full, map: ckpt.map, state0: ckpt.state0 };
    continue_from(run, &cfg, ckpt.next, stop_after, out)
}

fn continue_from(mut run: Run, cfg: &ScenarioConfig, next: Phase, stop_after: Option<Phase>, out: &mut Output) -> Result<PhasedOutput, ScenarioError> {
    let p = cfg.phases;
    let ends = [(Phase::Rigid, p.rigid), (Phase::Fixed, p.rigid + p.fixed), (Phase::Coupled, p.rigid + p.fixed + p.coupled)];
    let mut last = None;
    for (phase, t_end) in ends {
        if rank(phase) < rank(next) {
            continue;
        }
        match phase {
            Phase::Fixed => enter_fixed(&mut run, cfg)?,
            Phase::Coupled => release(&mut run, cfg)?,
            _ => {}
        }
        run_phase(&mut run.coupled, cfg, phase, t_end, &mut run.history, out)?;
        let following = match phase {
            Phase::Rigid => Phase::Fixed,
            _ => Phase::Coupled,
        };
        let ckpt = run.checkpoint(cfg, following);
        if cfg.output.checkpoints && out.has_dir() {
            out.write(&format!("checkpoint_{phase}.json"), &ckpt.to_json())?;
        }
        last = Some(Box::new(ckpt));
        if stop_after == Some(phase) {
            break;
        }
    }
    let summary = summary(&run, cfg);
    Ok((run.history, summary, last))
}

fn rank(p: Phase) -> u8 {
    match p {
        Phase::Setup => 0,
        Phase::Rigid => 1,
        Phase::Fixed => 2,
        Phase::Coupled => 3,
    }
}

/// Swaps the forebody-only surface for the full one with the canopy in its
/// folded configuration, still frozen.
fn enter_fixed(run: &mut Run, cfg: &ScenarioConfig) -> Result<(), ScenarioError> {
    let c = &run.coupled;
    let old_active = c.status.active.clone();
    let mut fluid = c.fluid.clone();
    fluid.w_prev = None;
    let step = c.step;
    let mut next = Coupled::new(
        c.mesh.clone(),
        c.dual.clone(),
        run.full.clone(),
        fluid,
        c.solver.clone(),
        c.structure.clone(),
        run.state0.clone(),
        run.map.clone(),
        cfg.coupling,
    )
    .map_err(|e| coupling_err(Phase::Fixed, c, e))?;
    next.frozen = true;
    next.step = step;
    let mut w = std::mem::take(&mut next.fluid.w);
    next.solver.fill_uncovered(&next.domain(), &old_active, &mut w);
    next.fluid.w = w;
    run.coupled = next;
    Ok(())
}

/// Lets the structure go: coupling step from the configuration, loads as the
/// initial acceleration and an optional seeded velocity perturbation.
fn release(run: &mut Run, cfg: &ScenarioConfig) -> Result<(), ScenarioError> {
    let c = &mut run.coupled;
    if !c.frozen {
        return Ok(());
    }
    c.frozen = false;
    c.config = cfg.coupling;
    let mut v = c.state.v.clone();
    let amp = cfg.canopy.perturbation;
    if amp > 0.0 {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        for (n, vn) in v.iter_mut().enumerate() {
            for d in 0..2 {
                let kick: f64 = rng.gen_range(-1.0..1.0);
                if c.structure.prescribed[n][d].is_none() {
                    vn[d] += amp * kick;
                }
            }
        }
    }
    let mut state = c.structure.initial_state(c.state.u.clone(), v, &c.loads).map_err(|e| coupling_err(Phase::Coupled, c, e))?;
    state.t = c.fluid.t;
    c.state = state;
    c.structure.refresh_critical_dt(&c.state);
    Ok(())
}

fn summary(run: &Run, cfg: &ScenarioConfig) -> String {
    let c = &run.coupled;
    let h = run.history.rows();
    let peak = |f: fn(&HistoryRow) -> f64| h.iter().map(f).fold(f64::NEG_INFINITY, f64::max);
    format!(
        "case {}\nseed {}\nt {:.9e}\nsteps {}\nhistory_rows {}\npeak_drag_total {:.9e}\npeak_drag_canopy {:.9e}\npeak_vm_max {:.9e}\ninterface_work_fluid {:.9e}\ninterface_work_structure {:.9e}\n",
        cfg.case.as_str(),
        cfg.seed,
        c.fluid.t,
        c.step,
        h.len(),
        peak(|r| r.drag_total),
        peak(|r| r.drag_canopy),
        peak(|r| r.vm_max),
        c.work_fluid,
        c.work_structure,
    )
}
