//! The worked examples in `docs/` must stay readable by the current parsers.

use fsikit::embedded::{read_surface, write_surface, FacetKind};
use fsikit::mesh::{read_mesh, write_mesh, BoundaryKind};
use fsikit::scenario::{ScenarioConfig, TimeHistory};
use fsikit::structure::{read_model, write_model, Section};

fn doc(name: &str) -> String {
    std::fs::read_to_string(format!("{}/../../docs/{name}", env!("CARGO_MANIFEST_DIR"))).unwrap()
}

/// Fenced blocks of `text`, in order.
fn blocks(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut cur: Option<String> = None;
    for line in text.lines() {
        if line.starts_with("```") {
            match cur.take() {
                Some(b) => out.push(b),
                None => cur = Some(String::new()),
            }
        } else if let Some(b) = &mut cur {
            b.push_str(line);
            b.push('\n');
        }
    }
    out
}

fn block_starting(name: &str, head: &str) -> String {
    blocks(&doc(name)).into_iter().find(|b| b.starts_with(head)).unwrap_or_else(|| panic!("no `{head}` block in {name}"))
}

#[test]
fn mesh_example_round_trips() {
    let text = block_starting("formats.md", "# fsikit mesh v1");
    let m = read_mesh(&text).unwrap();
    assert_eq!((m.vertices.len(), m.triangles.len()), (4, 2));
    assert_eq!(m.boundary[&(0, 1)], BoundaryKind::SlipWall);
    assert_eq!(write_mesh(&m), text);
}

#[test]
fn surface_example_round_trips() {
    let text = block_starting("formats.md", "# fsikit surface v1");
    let s = read_surface(&text).unwrap();
    assert_eq!(s.facets[1].kind, FacetKind::Canopy);
    assert_eq!(s.facets[1].element, Some(4));
    assert_eq!(s.velocities[2], [0.0, -0.25]);
    assert_eq!(write_surface(&s), text);
}

#[test]
fn structure_example_round_trips() {
    let text = block_starting("formats.md", "# fsikit structure v1");
    let m = read_model(&text).unwrap();
    assert!(matches!(m.materials[1].section, Section::Beam { .. }));
    assert_eq!(m.constraints.len(), 3);
    assert_eq!(m.contact.pairs.len(), 1);
    assert_eq!(write_model(&m), text);
}

#[test]
fn history_example_parses() {
    let text = block_starting("formats.md", "t,drag_total");
    let h = TimeHistory::read_csv(text.as_bytes()).unwrap();
    assert_eq!(h.rows().len(), 2);
}

#[test]
fn config_examples_parse() {
    let mut n = 0;
    for b in blocks(&doc("configuration.md")) {
        if b.contains('=') {
            // fragments are checked on top of a case line
            let text = if b.contains("case =") { b } else { format!("case = \"parachute2d\"\n{b}") };
            ScenarioConfig::from_toml(&text).unwrap_or_else(|e| panic!("{e}\n{text}"));
            n += 1;
        }
    }
    assert!(n >= 4);
}

#[test]
fn shipped_configs_parse() {
    let dir = format!("{}/../../configs", env!("CARGO_MANIFEST_DIR"));
    for entry in std::fs::read_dir(dir).unwrap() {
        let path = entry.unwrap().path();
        ScenarioConfig::from_toml(&std::fs::read_to_string(&path).unwrap()).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
    }
}
