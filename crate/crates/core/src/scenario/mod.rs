//! Scenario configuration, phased runs, the shipped cases and their time
//! histories.

use std::fmt;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

mod cases;
pub mod config;
pub mod history;
mod parachute;
#[cfg(test)]
mod tests;

pub use cases::{
    body_surface, run_bluffbody, run_coupon, run_porous_membrane, run_sod, standoff_distance, BluffLevel, BluffResult,
    CouponResult, Flow, PorousResult, SodResult,
};
pub use config::*;
pub use history::{drag_history, postprocess, top_k_mean, DragSplit, HistoryRow, TimeHistory};
pub use parachute::{parachute_setup, Checkpoint, ParachuteSetup};

use crate::mesh::Mesh;

/// Stage of a phased run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Setup,
    /// Flow around the rigid forebody alone.
    Rigid,
    /// Full surface held in its initial configuration.
    Fixed,
    Coupled,
}

impl fmt::Display for Phase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Phase::Setup => "setup",
            Phase::Rigid => "rigid",
            Phase::Fixed => "fixed",
            Phase::Coupled => "coupled",
        })
    }
}

type BoxError = Box<dyn std::error::Error + Send + Sync>;

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("configuration: {0}")]
    Config(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{phase} phase, step {step}, t = {t:.6e} s: {source}")]
    Numerical {
        phase: Phase,
        step: usize,
        t: f64,
        #[source]
        source: BoxError,
    },
    #[error("history: {0}")]
    History(String),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
}

impl ScenarioError {
    /// Process exit code: 2 for input problems, 3 for numerical failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            ScenarioError::Config(_) | ScenarioError::Io { .. } | ScenarioError::Checkpoint(_) | ScenarioError::History(_) => 2,
            ScenarioError::Numerical { .. } => 3,
        }
    }

    pub(crate) fn numerical(phase: Phase, step: usize, t: f64, source: impl Into<BoxError>) -> Self {
        ScenarioError::Numerical { phase, step, t, source: source.into() }
    }
}

/// Artifact directory plus the run log.
#[derive(Debug, Default)]
pub struct Output {
    dir: Option<PathBuf>,
    pub log: Vec<String>,
    pub files: Vec<PathBuf>,
}

impl Output {
    pub fn new(dir: Option<&Path>) -> Result<Self, ScenarioError> {
        if let Some(d) = dir {
            fs::create_dir_all(d).map_err(|source| ScenarioError::Io { path: d.to_path_buf(), source })?;
        }
        Ok(Output { dir: dir.map(Path::to_path_buf), log: Vec::new(), files: Vec::new() })
    }

    pub fn discard() -> Self {
        Output::default()
    }

    pub fn log(&mut self, msg: impl Into<String>) {
        self.log.push(msg.into());
    }

    pub fn write(&mut self, name: &str, contents: &str) -> Result<(), ScenarioError> {
        let Some(dir) = &self.dir else { return Ok(()) };
        let path = dir.join(name);
        fs::write(&path, contents).map_err(|source| ScenarioError::Io { path: path.clone(), source })?;
        self.files.push(path);
        Ok(())
    }

    pub fn has_dir(&self) -> bool {
        self.dir.is_some()
    }

    fn flush_log(&mut self) -> Result<(), ScenarioError> {
        let Some(dir) = &self.dir else { return Ok(()) };
        let path = dir.join("run.log");
        let mut f = fs::File::create(&path).map_err(|source| ScenarioError::Io { path: path.clone(), source })?;
        for line in &self.log {
            writeln!(f, "{line}").map_err(|source| ScenarioError::Io { path: path.clone(), source })?;
        }
        self.files.push(path);
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct RunOptions<'a> {
    pub out: Option<&'a Path>,
    /// Stop once this phase has finished (phased cases only).
    pub stop_after: Option<Phase>,
}

#[derive(Debug)]
pub struct Artifacts {
    pub history: TimeHistory,
    pub summary: String,
    pub files: Vec<PathBuf>,
    pub log: Vec<String>,
    /// Most recent checkpoint of a phased run.
    pub checkpoint: Option<Box<Checkpoint>>,
}

/// Runs a scenario, writing `history.csv`, `summary.txt`, `run.log` and
/// case-specific files to `opts.out` when given.
pub fn run(cfg: &ScenarioConfig, opts: RunOptions) -> Result<Artifacts, ScenarioError> {
    cfg.validate()?;
    let mut out = Output::new(opts.out)?;
    out.log(format!("case {} seed {}", cfg.case.as_str(), cfg.seed));
    let result = run_case(cfg, opts, &mut out);
    if let Err(e) = &result {
        out.log(format!("error: {e}"));
    }
    out.flush_log()?;
    let (history, summary, checkpoint) = result?;
    out.write("history.csv", &history.to_csv())?;
    out.write("summary.txt", &summary)?;
    Ok(Artifacts { history, summary, files: out.files, log: out.log, checkpoint })
}

/// Continues a phased run from a checkpoint.
pub fn resume(ckpt: Checkpoint, opts: RunOptions) -> Result<Artifacts, ScenarioError> {
    let mut out = Output::new(opts.out)?;
    out.log(format!("resume {} at the {} phase", ckpt.config.case.as_str(), ckpt.next));
    let result = parachute::resume(ckpt, opts.stop_after, &mut out);
    if let Err(e) = &result {
        out.log(format!("error: {e}"));
    }
    out.flush_log()?;
    let (history, summary, checkpoint) = result?;
    out.write("history.csv", &history.to_csv())?;
    out.write("summary.txt", &summary)?;
    Ok(Artifacts { history, summary, files: out.files, log: out.log, checkpoint })
}

type CaseOutput = (TimeHistory, String, Option<Box<Checkpoint>>);

fn run_case(cfg: &ScenarioConfig, opts: RunOptions, out: &mut Output) -> Result<CaseOutput, ScenarioError> {
    match cfg.case {
        Case::Sod => {
            let r = run_sod(cfg)?;
            let mut s = String::from("# x rho rho_exact\n");
            for k in 0..r.x.len() {
                s.push_str(&format!("{:.9e} {:.9e} {:.9e}\n", r.x[k], r.rho[k], r.exact[k]));
            }
            out.write("profile.txt", &s)?;
            let mut h = TimeHistory::default();
            h.push(HistoryRow { t: cfg.sod.t_end, ..Default::default() })?;
            Ok((h, format!("sod cells {} steps {} density L1 error {:.6e}\n", r.cells, r.steps, r.l1), None))
        }
        Case::Bluffbody => {
            let r = run_bluffbody(cfg, out)?;
            let mut s = String::from("# level nodes h_min standoff drag t\n");
            for l in &r.levels {
                s.push_str(&format!(
                    "{} {} {:.6e} {} {:.6e} {:.6e}\n",
                    l.level,
                    l.nodes,
                    l.h_min,
                    l.standoff.map_or("none".to_string(), |d| format!("{d:.6e}")),
                    l.drag,
                    l.t
                ));
            }
            Ok((r.history, s, None))
        }
        Case::PorousMembrane => {
            let r = run_porous_membrane(cfg, out)?;
            let mut s = String::from("# alpha transmitted_mass_flux\n");
            for (a, f) in r.alphas.iter().zip(&r.flux) {
                s.push_str(&format!("{a} {f:.9e}\n"));
            }
            Ok((r.history, s, None))
        }
        Case::Coupon => {
            let r = run_coupon(cfg, out)?;
            let s = format!(
                "grips {}\nsteps {}\nmodulus {:.9e}\nexpected {:.9e}\nmodulus_error {:.6e}\nvon_mises_probe_error {:.6e}\nprobe_elements {}\n",
                r.grips.as_str(), r.steps, r.modulus, r.expected, r.modulus_error, r.vm_error, r.probe_elements
            );
            Ok((r.history, s, None))
        }
        Case::Parachute2d => parachute::run(cfg, opts.stop_after, out),
    }
}

/// Background mesh of a case after geometry-driven refinement.
pub fn scenario_mesh(cfg: &ScenarioConfig) -> Result<Mesh, ScenarioError> {
    cfg.validate()?;
    match cfg.case {
        Case::Sod => cases::sod_mesh(cfg),
        Case::Bluffbody => {
            let surface = body_surface(&cfg.body)?;
            cases::refined_mesh(cfg, &surface.segments())
        }
        Case::PorousMembrane => cases::base_mesh(cfg),
        Case::Coupon => Err(ScenarioError::Config("the coupon case has no fluid mesh".into())),
        Case::Parachute2d => Ok(parachute_setup(cfg)?.mesh),
    }
}

pub fn read_config(path: &Path) -> Result<ScenarioConfig, ScenarioError> {
    let text = fs::read_to_string(path).map_err(|source| ScenarioError::Io { path: path.to_path_buf(), source })?;
    ScenarioConfig::from_toml(&text)
}
