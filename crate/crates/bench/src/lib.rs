//! Shared fixtures for the benchmarks.

use fsikit::embedded::EmbeddedSurface;
use fsikit::mesh::{build_kuhn_grid, BoundaryKind, Mesh, SideKinds};
use fsikit::scenario::{body_surface, BodyConfig};

/// Kuhn grid on the unit square with far-field sides.
pub fn unit_grid(n: usize) -> Mesh {
    build_kuhn_grid([0.0, 0.0], [1.0, 1.0], n, n, SideKinds::all(BoundaryKind::FarField)).expect("valid grid")
}

/// Default capsule scaled into the unit square.
pub fn capsule_in_unit_square() -> EmbeddedSurface {
    let body = BodyConfig {
        nose: [0.3, 0.5],
        diameter: 0.3,
        length: 0.18,
        nose_radius: 0.075,
        rear_diameter: 0.15,
        element: 0.01,
        ..Default::default()
    };
    body_surface(&body).expect("valid body")
}
