//! Time histories of drag, stress and interface work.

use std::fmt::Write as _;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::embedded::{EmbeddedSurface, FacetKind};
use crate::geom::{dot, Vec2};

use super::ScenarioError;

/// One history sample. Forces are per unit depth (N/m), work per unit depth
/// (J/m), stresses in Pa.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct HistoryRow {
    pub t: f64,
    pub drag_total: f64,
    pub drag_body: f64,
    pub drag_canopy: f64,
    pub drag_cables: f64,
    pub vm_max: f64,
    pub vm_topk: f64,
    pub interface_work: f64,
}

impl HistoryRow {
    pub fn is_finite(&self) -> bool {
        [self.t, self.drag_total, self.drag_body, self.drag_canopy, self.drag_cables, self.vm_max, self.vm_topk, self.interface_work]
            .iter()
            .all(|x| x.is_finite())
    }
}

/// Rows with strictly increasing time stamps.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TimeHistory {
    rows: Vec<HistoryRow>,
}

impl TimeHistory {
    pub fn rows(&self) -> &[HistoryRow] {
        &self.rows
    }

    pub fn last(&self) -> Option<&HistoryRow> {
        self.rows.last()
    }

    pub fn push(&mut self, row: HistoryRow) -> Result<(), ScenarioError> {
        if let Some(last) = self.rows.last() {
            if !(row.t > last.t) {
                return Err(ScenarioError::History(format!("time {} does not follow {}", row.t, last.t)));
            }
        }
        self.rows.push(row);
        Ok(())
    }

    /// Appends unless a row at the same time is already present.
    pub fn push_new(&mut self, row: HistoryRow) -> Result<(), ScenarioError> {
        match self.rows.last() {
            Some(last) if last.t == row.t => Ok(()),
            _ => self.push(row),
        }
    }

    pub fn all_finite(&self) -> bool {
        self.rows.iter().all(HistoryRow::is_finite)
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<(), ScenarioError> {
        let mut wr = csv::Writer::from_writer(w);
        for r in &self.rows {
            wr.serialize(r).map_err(|e| ScenarioError::History(e.to_string()))?;
        }
        if self.rows.is_empty() {
            wr.write_record(HEADER).map_err(|e| ScenarioError::History(e.to_string()))?;
        }
        wr.flush().map_err(|e| ScenarioError::History(e.to_string()))
    }

    pub fn to_csv(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("in-memory write");
        String::from_utf8(buf).expect("ascii")
    }

    pub fn read_csv<R: Read>(r: R) -> Result<Self, ScenarioError> {
        let mut rd = csv::Reader::from_reader(r);
        let header = rd.headers().map_err(|e| ScenarioError::History(e.to_string()))?.clone();
        if header.iter().ne(HEADER.iter().copied()) {
            return Err(ScenarioError::History(format!("unexpected columns {:?}", header.iter().collect::<Vec<_>>())));
        }
        let mut h = TimeHistory::default();
        for row in rd.deserialize() {
            h.push(row.map_err(|e| ScenarioError::History(e.to_string()))?)?;
        }
        Ok(h)
    }
}

const HEADER: [&str; 8] =
    ["t", "drag_total", "drag_body", "drag_canopy", "drag_cables", "vm_max", "vm_topk", "interface_work"];

/// Flow-aligned force summed per facet tag.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct DragSplit {
    pub total: f64,
    pub body: f64,
    pub canopy: f64,
    pub cables: f64,
}

/// Splits facet forces into body, canopy and cable drag along `dir` (a unit
/// vector). The total is the sum of the three groups.
pub fn drag_history(forces: &[Vec2], surface: &EmbeddedSurface, dir: Vec2) -> DragSplit {
    let mut d = DragSplit::default();
    for (f, facet) in forces.iter().zip(&surface.facets) {
        let x = dot(*f, dir);
        match facet.kind {
            FacetKind::RigidBody => d.body += x,
            FacetKind::Canopy => d.canopy += x,
            FacetKind::CableSlave => d.cables += x,
        }
    }
    d.total = d.body + d.canopy + d.cables;
    d
}

/// Mean of the `k` largest values (all of them when there are fewer).
pub fn top_k_mean(values: &[f64], k: usize) -> f64 {
    if values.is_empty() || k == 0 {
        return 0.0;
    }
    let mut v = values.to_vec();
    v.sort_by(|a, b| b.total_cmp(a));
    let k = k.min(v.len());
    v[..k].iter().sum::<f64>() / k as f64
}

/// Plot-ready whitespace table in engineering units (kN/m, MPa, kJ/m) with
/// a summary in comment lines.
pub fn postprocess(h: &TimeHistory) -> String {
    let mut s = String::new();
    let rows = h.rows();
    if let Some(peak) = rows.iter().max_by(|a, b| a.drag_total.total_cmp(&b.drag_total)) {
        writeln!(s, "# rows {}", rows.len()).unwrap();
        writeln!(s, "# peak total drag {:.6e} kN/m at t = {:.6e} s", peak.drag_total * 1e-3, peak.t).unwrap();
    }
    if let Some(vm) = rows.iter().max_by(|a, b| a.vm_max.total_cmp(&b.vm_max)) {
        writeln!(s, "# peak von Mises {:.6e} MPa at t = {:.6e} s", vm.vm_max * 1e-6, vm.t).unwrap();
    }
    writeln!(s, "# t_s drag_total_kN drag_body_kN drag_canopy_kN drag_cables_kN vm_max_MPa vm_topk_MPa work_kJ").unwrap();
    for r in rows {
        writeln!(
            s,
            "{:.9e} {:.9e} {:.9e} {:.9e} {:.9e} {:.9e} {:.9e} {:.9e}",
            r.t,
            r.drag_total * 1e-3,
            r.drag_body * 1e-3,
            r.drag_canopy * 1e-3,
            r.drag_cables * 1e-3,
            r.vm_max * 1e-6,
            r.vm_topk * 1e-6,
            r.interface_work * 1e-3
        )
        .unwrap();
    }
    s
}
