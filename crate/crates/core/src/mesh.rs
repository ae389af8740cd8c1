//! Triangular primal mesh, median-dual control volumes and newest-vertex
//! bisection refinement.
//!
//! Triangles are stored as `[v0, v1, v2]` in counter-clockwise order with `v0`
//! the newest vertex; the refinement edge is `(v1, v2)`.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geom::{dot, midpoint, norm, orient, sub, Vec2};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MeshError {
    #[error("triangle {id} is degenerate or inverted (signed area {area:e})")]
    Degenerate { id: usize, area: f64 },
    #[error("edge ({0}, {1}) is shared by {2} triangles")]
    NonManifold(usize, usize, usize),
    #[error("edge ({0}, {1}) lies on the hull of the mesh but carries no boundary tag")]
    Hanging(usize, usize),
    #[error("resolution must be positive, got {0}x{1}")]
    Resolution(usize, usize),
    #[error("mesh file line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("vertex budget of {0} exhausted")]
    Budget(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundaryKind {
    FarField,
    SlipWall,
}

impl BoundaryKind {
    fn as_str(self) -> &'static str {
        match self {
            BoundaryKind::FarField => "farfield",
            BoundaryKind::SlipWall => "wall",
        }
    }

    fn parse(s: &str) -> Option<Self> {
        match s {
            "farfield" => Some(BoundaryKind::FarField),
            "wall" => Some(BoundaryKind::SlipWall),
            _ => None,
        }
    }
}

/// Boundary kinds of the four sides of a rectangle.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SideKinds {
    pub left: BoundaryKind,
    pub right: BoundaryKind,
    pub bottom: BoundaryKind,
    pub top: BoundaryKind,
}

impl SideKinds {
    pub fn all(kind: BoundaryKind) -> Self {
        Self { left: kind, right: kind, bottom: kind, top: kind }
    }
}

#[inline]
pub fn edge_key(a: usize, b: usize) -> (usize, usize) {
    if a < b {
        (a, b)
    } else {
        (b, a)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mesh {
    pub vertices: Vec<Vec2>,
    pub triangles: Vec<[usize; 3]>,
    #[serde(with = "edge_list")]
    pub boundary: BTreeMap<(usize, usize), BoundaryKind>,
    /// For vertices created by bisection, the endpoints of the split edge.
    pub parents: Vec<Option<[usize; 2]>>,
}

/// Boundary edges as a list of `[(a, b), kind]` pairs; tuple keys have no
/// JSON object form.
mod edge_list {
    use super::{BTreeMap, BoundaryKind};
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(m: &BTreeMap<(usize, usize), BoundaryKind>, s: S) -> Result<S::Ok, S::Error> {
        s.collect_seq(m.iter())
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<BTreeMap<(usize, usize), BoundaryKind>, D::Error> {
        Ok(Vec::<((usize, usize), BoundaryKind)>::deserialize(d)?.into_iter().collect())
    }
}

/// Structured `nx` by `ny` grid over `[x0, x1] x [y0, y1]`, each cell split
/// along its rising diagonal; the diagonal is the refinement edge of both
/// halves.
pub fn build_kuhn_grid(lo: Vec2, hi: Vec2, nx: usize, ny: usize, sides: SideKinds) -> Result<Mesh, MeshError> {
    if nx == 0 || ny == 0 || !(hi[0] > lo[0] && hi[1] > lo[1]) {
        return Err(MeshError::Resolution(nx, ny));
    }
    let id = |i: usize, j: usize| j * (nx + 1) + i;
    let mut vertices = Vec::with_capacity((nx + 1) * (ny + 1));
    for j in 0..=ny {
        for i in 0..=nx {
            let x = if i == nx { hi[0] } else { lo[0] + (hi[0] - lo[0]) * i as f64 / nx as f64 };
            let y = if j == ny { hi[1] } else { lo[1] + (hi[1] - lo[1]) * j as f64 / ny as f64 };
            vertices.push([x, y]);
        }
    }
    let mut triangles = Vec::with_capacity(2 * nx * ny);
    for j in 0..ny {
        for i in 0..nx {
            let a = id(i, j);
            let b = id(i + 1, j);
            let c = id(i + 1, j + 1);
            let d = id(i, j + 1);
            triangles.push([b, c, a]);
            triangles.push([d, a, c]);
        }
    }
    let mut boundary = BTreeMap::new();
    for i in 0..nx {
        boundary.insert(edge_key(id(i, 0), id(i + 1, 0)), sides.bottom);
        boundary.insert(edge_key(id(i, ny), id(i + 1, ny)), sides.top);
    }
    for j in 0..ny {
        boundary.insert(edge_key(id(0, j), id(0, j + 1)), sides.left);
        boundary.insert(edge_key(id(nx, j), id(nx, j + 1)), sides.right);
    }
    let parents = vec![None; vertices.len()];
    Ok(Mesh { vertices, triangles, boundary, parents })
}

impl Mesh {
    pub fn num_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn signed_area(&self, t: usize) -> f64 {
        let [a, b, c] = self.triangles[t];
        0.5 * orient(self.vertices[a], self.vertices[b], self.vertices[c])
    }

    pub fn total_area(&self) -> f64 {
        (0..self.triangles.len()).map(|t| self.signed_area(t)).sum()
    }

    /// Longest edge length of triangle `t`.
    pub fn diameter(&self, t: usize) -> f64 {
        let [a, b, c] = self.triangles[t].map(|v| self.vertices[v]);
        norm(sub(a, b)).max(norm(sub(b, c))).max(norm(sub(c, a)))
    }

    /// Smallest interior angle of triangle `t`, in radians.
    pub fn min_angle(&self, t: usize) -> f64 {
        let p = self.triangles[t].map(|v| self.vertices[v]);
        (0..3)
            .map(|k| {
                let u = sub(p[(k + 1) % 3], p[k]);
                let w = sub(p[(k + 2) % 3], p[k]);
                (dot(u, w) / (norm(u) * norm(w))).clamp(-1.0, 1.0).acos()
            })
            .fold(f64::INFINITY, f64::min)
    }

    pub fn global_min_angle(&self) -> f64 {
        (0..self.triangles.len()).map(|t| self.min_angle(t)).fold(f64::INFINITY, f64::min)
    }

    /// Map from sorted edge to incident triangles.
    pub fn edge_triangles(&self) -> BTreeMap<(usize, usize), Vec<usize>> {
        let mut map: BTreeMap<(usize, usize), Vec<usize>> = BTreeMap::new();
        for (t, tri) in self.triangles.iter().enumerate() {
            for k in 0..3 {
                map.entry(edge_key(tri[k], tri[(k + 1) % 3])).or_default().push(t);
            }
        }
        map
    }

    pub fn edges(&self) -> Vec<(usize, usize)> {
        self.edge_triangles().into_keys().collect()
    }

    /// Checks orientation and conformity: every edge has one or two incident
    /// triangles and the single-incidence edges are exactly the tagged
    /// boundary edges.
    pub fn audit(&self) -> Result<(), MeshError> {
        for t in 0..self.triangles.len() {
            let area = self.signed_area(t);
            if !(area > 0.0) {
                return Err(MeshError::Degenerate { id: t, area });
            }
        }
        let incidence = self.edge_triangles();
        for (&(a, b), tris) in &incidence {
            match tris.len() {
                1 if !self.boundary.contains_key(&(a, b)) => return Err(MeshError::Hanging(a, b)),
                1 | 2 => {}
                n => return Err(MeshError::NonManifold(a, b, n)),
            }
        }
        for &(a, b) in self.boundary.keys() {
            if incidence.get(&(a, b)).map_or(0, Vec::len) != 1 {
                return Err(MeshError::NonManifold(a, b, incidence.get(&(a, b)).map_or(0, Vec::len)));
            }
        }
        Ok(())
    }

    fn refinement_edge(tri: &[usize; 3]) -> (usize, usize) {
        edge_key(tri[1], tri[2])
    }
}

/// Newest-vertex bisection of the `marked` triangles with conforming closure.
pub fn nvb_refine(mesh: &Mesh, marked: &BTreeSet<usize>) -> Mesh {
    let mut split: BTreeSet<(usize, usize)> = marked.iter().map(|&t| Mesh::refinement_edge(&mesh.triangles[t])).collect();
    if split.is_empty() {
        return mesh.clone();
    }
    // closure: any triangle touching a split edge also splits its refinement edge
    loop {
        let mut grew = false;
        for tri in &mesh.triangles {
            let r = Mesh::refinement_edge(tri);
            if split.contains(&r) {
                continue;
            }
            let touches = (0..3).any(|k| split.contains(&edge_key(tri[k], tri[(k + 1) % 3])));
            if touches {
                split.insert(r);
                grew = true;
            }
        }
        if !grew {
            break;
        }
    }

    let mut out = Mesh {
        vertices: mesh.vertices.clone(),
        triangles: Vec::with_capacity(mesh.triangles.len() + 2 * split.len()),
        boundary: BTreeMap::new(),
        parents: mesh.parents.clone(),
    };
    let mut mids: HashMap<(usize, usize), usize> = HashMap::with_capacity(split.len());
    for &(a, b) in &split {
        let m = out.vertices.len();
        out.vertices.push(midpoint(mesh.vertices[a], mesh.vertices[b]));
        out.parents.push(Some([a, b]));
        mids.insert((a, b), m);
    }
    let mut stack = Vec::new();
    for tri in &mesh.triangles {
        stack.push(*tri);
        while let Some(t) = stack.pop() {
            let r = Mesh::refinement_edge(&t);
            match mids.get(&r) {
                Some(&m) => {
                    // push in reverse so the first child is emitted first
                    stack.push([m, t[2], t[0]]);
                    stack.push([m, t[0], t[1]]);
                }
                None => out.triangles.push(t),
            }
        }
    }
    for (&(a, b), &kind) in &mesh.boundary {
        match mids.get(&(a, b)) {
            Some(&m) => {
                out.boundary.insert(edge_key(a, m), kind);
                out.boundary.insert(edge_key(m, b), kind);
            }
            None => {
                out.boundary.insert((a, b), kind);
            }
        }
    }
    out
}

/// Median-dual control volumes.
#[derive(Debug, Clone)]
pub struct DualMesh {
    pub volumes: Vec<f64>,
    /// Sorted primal edges `(i, j)` with `i < j`.
    pub edges: Vec<[usize; 2]>,
    /// Area-weighted normal of the dual facet of each edge, oriented `i -> j`.
    pub normals: Vec<Vec2>,
    pub boundary_facets: Vec<BoundaryFacet>,
    /// CSR adjacency: neighbours of node `i` are `adj[offsets[i]..offsets[i+1]]`
    /// as `(edge index, neighbour)`.
    pub offsets: Vec<usize>,
    pub adj: Vec<(usize, usize)>,
    lsq_inverse: Vec<[f64; 3]>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundaryFacet {
    pub node: usize,
    /// Outward, area-weighted.
    pub normal: Vec2,
    pub kind: BoundaryKind,
    pub edge: (usize, usize),
}

pub fn build_dual(mesh: &Mesh) -> Result<DualMesh, MeshError> {
    let n = mesh.vertices.len();
    let mut volumes = vec![0.0; n];
    let mut index: BTreeMap<(usize, usize), Vec2> = BTreeMap::new();
    for (t, tri) in mesh.triangles.iter().enumerate() {
        let area = mesh.signed_area(t);
        if !(area > 0.0) {
            return Err(MeshError::Degenerate { id: t, area });
        }
        let p = tri.map(|v| mesh.vertices[v]);
        let g = [(p[0][0] + p[1][0] + p[2][0]) / 3.0, (p[0][1] + p[1][1] + p[2][1]) / 3.0];
        for k in 0..3 {
            volumes[tri[k]] += area / 3.0;
            let (a, b) = (tri[k], tri[(k + 1) % 3]);
            let key = edge_key(a, b);
            let m = midpoint(mesh.vertices[a], mesh.vertices[b]);
            let s = sub(g, m);
            let mut nu = [s[1], -s[0]];
            let d = sub(mesh.vertices[key.1], mesh.vertices[key.0]);
            if dot(nu, d) < 0.0 {
                nu = [-nu[0], -nu[1]];
            }
            let e = index.entry(key).or_insert([0.0, 0.0]);
            e[0] += nu[0];
            e[1] += nu[1];
        }
    }
    let edges: Vec<[usize; 2]> = index.keys().map(|&(a, b)| [a, b]).collect();
    let normals: Vec<Vec2> = index.values().copied().collect();

    // boundary facets: half of the outward edge normal to each endpoint
    let mut boundary_facets = Vec::with_capacity(2 * mesh.boundary.len());
    let incidence = mesh.edge_triangles();
    for (&(a, b), &kind) in &mesh.boundary {
        let t = incidence.get(&(a, b)).and_then(|v| v.first()).copied();
        let Some(t) = t else {
            return Err(MeshError::Hanging(a, b));
        };
        let tri = mesh.triangles[t];
        // find orientation of (a, b) within the counter-clockwise triangle
        let (p, q) = if (0..3).any(|k| tri[k] == a && tri[(k + 1) % 3] == b) { (a, b) } else { (b, a) };
        let d = sub(mesh.vertices[q], mesh.vertices[p]);
        let out = [0.5 * d[1], -0.5 * d[0]];
        boundary_facets.push(BoundaryFacet { node: a, normal: out, kind, edge: (a, b) });
        boundary_facets.push(BoundaryFacet { node: b, normal: out, kind, edge: (a, b) });
    }

    let mut counts = vec![0usize; n + 1];
    for e in &edges {
        counts[e[0] + 1] += 1;
        counts[e[1] + 1] += 1;
    }
    for i in 0..n {
        counts[i + 1] += counts[i];
    }
    let offsets = counts.clone();
    let mut fill = counts;
    let mut adj = vec![(0, 0); 2 * edges.len()];
    for (k, e) in edges.iter().enumerate() {
        adj[fill[e[0]]] = (k, e[1]);
        fill[e[0]] += 1;
        adj[fill[e[1]]] = (k, e[0]);
        fill[e[1]] += 1;
    }

    let mut lsq_inverse = vec![[0.0; 3]; n];
    for i in 0..n {
        let (mut a, mut b, mut c) = (0.0, 0.0, 0.0);
        for &(_, j) in &adj[offsets[i]..offsets[i + 1]] {
            let d = sub(mesh.vertices[j], mesh.vertices[i]);
            a += d[0] * d[0];
            b += d[0] * d[1];
            c += d[1] * d[1];
        }
        let det = a * c - b * b;
        lsq_inverse[i] = if det > 0.0 { [c / det, -b / det, a / det] } else { [0.0; 3] };
    }

    Ok(DualMesh { volumes, edges, normals, boundary_facets, offsets, adj, lsq_inverse })
}

impl DualMesh {
    pub fn neighbors(&self, i: usize) -> &[(usize, usize)] {
        &self.adj[self.offsets[i]..self.offsets[i + 1]]
    }

    pub fn num_nodes(&self) -> usize {
        self.volumes.len()
    }

    /// Unweighted least-squares gradient of a nodal scalar.
    pub fn gradient(&self, mesh: &Mesh, f: &[f64], i: usize) -> Vec2 {
        let (mut bx, mut by) = (0.0, 0.0);
        for &(_, j) in self.neighbors(i) {
            let d = sub(mesh.vertices[j], mesh.vertices[i]);
            let df = f[j] - f[i];
            bx += d[0] * df;
            by += d[1] * df;
        }
        let m = self.lsq_inverse[i];
        [m[0] * bx + m[1] * by, m[1] * bx + m[2] * by]
    }

    /// Least-squares gradient restricted to neighbours accepted by `keep`.
    /// Falls back to zero when the retained stencil is rank-deficient.
    pub fn gradient_masked<const N: usize>(
        &self,
        mesh: &Mesh,
        f: &[[f64; N]],
        i: usize,
        mut keep: impl FnMut(usize, usize) -> bool,
    ) -> [Vec2; N] {
        let (mut a, mut b, mut c) = (0.0, 0.0, 0.0);
        let mut rhs = [[0.0; 2]; N];
        for &(e, j) in self.neighbors(i) {
            if !keep(e, j) {
                continue;
            }
            let d = sub(mesh.vertices[j], mesh.vertices[i]);
            a += d[0] * d[0];
            b += d[0] * d[1];
            c += d[1] * d[1];
            for k in 0..N {
                let df = f[j][k] - f[i][k];
                rhs[k][0] += d[0] * df;
                rhs[k][1] += d[1] * df;
            }
        }
        let det = a * c - b * b;
        if !(det > 1e-12 * (a + c) * (a + c)) {
            return [[0.0; 2]; N];
        }
        let mut out = [[0.0; 2]; N];
        for k in 0..N {
            out[k] = [(c * rhs[k][0] - b * rhs[k][1]) / det, (a * rhs[k][1] - b * rhs[k][0]) / det];
        }
        out
    }

    /// Minimum length of the edges incident to node `i`.
    pub fn min_edge_length(&self, mesh: &Mesh, i: usize) -> f64 {
        self.neighbors(i)
            .iter()
            .map(|&(_, j)| norm(sub(mesh.vertices[j], mesh.vertices[i])))
            .fold(f64::INFINITY, f64::min)
    }
}

/// P1 gradient of nodal values on triangle `t`.
pub fn element_gradient(mesh: &Mesh, t: usize, f: [f64; 3]) -> Vec2 {
    let p = mesh.triangles[t].map(|v| mesh.vertices[v]);
    let two_a = orient(p[0], p[1], p[2]);
    let mut g = [0.0; 2];
    for k in 0..3 {
        let a = p[(k + 1) % 3];
        let b = p[(k + 2) % 3];
        // gradient of the barycentric coordinate of vertex k
        let gk = [(a[1] - b[1]) / two_a, (b[0] - a[0]) / two_a];
        g[0] += f[k] * gk[0];
        g[1] += f[k] * gk[1];
    }
    g
}

/// Recovered-Hessian error indicator per triangle: Frobenius norm of the
/// symmetrized element gradient of the least-squares nodal gradient, times
/// the squared longest edge.
pub fn hessian_indicator(mesh: &Mesh, dual: &DualMesh, field: &[f64]) -> Vec<f64> {
    let grads: Vec<Vec2> = (0..mesh.vertices.len()).map(|i| dual.gradient(mesh, field, i)).collect();
    (0..mesh.triangles.len())
        .map(|t| {
            let tri = mesh.triangles[t];
            let gx = element_gradient(mesh, t, tri.map(|v| grads[v][0]));
            let gy = element_gradient(mesh, t, tri.map(|v| grads[v][1]));
            let off = 0.5 * (gx[1] + gy[0]);
            let h = mesh.diameter(t);
            (gx[0] * gx[0] + gy[1] * gy[1] + 2.0 * off * off).sqrt() * h * h
        })
        .collect()
}

/// Uniform bucket grid over axis-aligned boxes, for segment queries.
#[derive(Debug, Clone)]
pub struct BoxGrid {
    lo: Vec2,
    cell: Vec2,
    dims: [usize; 2],
    buckets: Vec<Vec<usize>>,
}

impl BoxGrid {
    pub fn new(boxes: &[[Vec2; 2]], target_per_cell: usize) -> Self {
        let mut lo = [f64::INFINITY; 2];
        let mut hi = [f64::NEG_INFINITY; 2];
        for b in boxes {
            for k in 0..2 {
                lo[k] = lo[k].min(b[0][k]);
                hi[k] = hi[k].max(b[1][k]);
            }
        }
        if boxes.is_empty() {
            lo = [0.0, 0.0];
            hi = [1.0, 1.0];
        }
        let ext = [(hi[0] - lo[0]).max(1e-300), (hi[1] - lo[1]).max(1e-300)];
        let cells = (boxes.len() / target_per_cell.max(1)).max(1) as f64;
        // keep the bucket count near `cells` for flat or degenerate extents
        let aspect = (ext[0] / ext[1]).clamp(1.0 / cells, cells);
        let nx = ((cells * aspect).sqrt().ceil() as usize).clamp(1, 4096);
        let ny = ((cells / aspect).sqrt().ceil() as usize).clamp(1, 4096);
        let cell = [ext[0] / nx as f64, ext[1] / ny as f64];
        let mut grid = Self { lo, cell, dims: [nx, ny], buckets: vec![Vec::new(); nx * ny] };
        for (id, b) in boxes.iter().enumerate() {
            let (i0, j0) = grid.locate(b[0]);
            let (i1, j1) = grid.locate(b[1]);
            for j in j0..=j1 {
                for i in i0..=i1 {
                    grid.buckets[j * nx + i].push(id);
                }
            }
        }
        grid
    }

    fn locate(&self, p: Vec2) -> (usize, usize) {
        let f = |k: usize| (((p[k] - self.lo[k]) / self.cell[k]).floor().max(0.0) as usize).min(self.dims[k] - 1);
        (f(0), f(1))
    }

    /// Ids whose boxes may overlap `[lo, hi]`, sorted and unique.
    pub fn query(&self, lo: Vec2, hi: Vec2, out: &mut Vec<usize>) {
        out.clear();
        let (i0, j0) = self.locate(lo);
        let (i1, j1) = self.locate(hi);
        for j in j0..=j1 {
            for i in i0..=i1 {
                out.extend_from_slice(&self.buckets[j * self.dims[0] + i]);
            }
        }
        out.sort_unstable();
        out.dedup();
    }
}

pub fn segment_box(a: Vec2, b: Vec2) -> [Vec2; 2] {
    [[a[0].min(b[0]), a[1].min(b[1])], [a[0].max(b[0]), a[1].max(b[1])]]
}

/// Primal edges crossed by two or more of the given surface segments.
pub fn doubly_intersected_edges(mesh: &Mesh, segments: &[[Vec2; 2]]) -> BTreeSet<(usize, usize)> {
    let edges = mesh.edges();
    let boxes: Vec<_> = segments.iter().map(|s| segment_box(s[0], s[1])).collect();
    let grid = BoxGrid::new(&boxes, 2);
    let mut hits = Vec::new();
    let mut out = BTreeSet::new();
    for &(a, b) in &edges {
        let (p, q) = (mesh.vertices[a], mesh.vertices[b]);
        let bb = segment_box(p, q);
        grid.query(bb[0], bb[1], &mut hits);
        let count = hits
            .iter()
            .filter(|&&s| crate::embedded::segments_cross(p, q, segments[s][0], segments[s][1]).is_some())
            .count();
        if count >= 2 {
            out.insert((a, b));
        }
    }
    out
}

/// Distance from `p` to the nearest segment (infinite if there are none).
pub fn distance_to_segments(p: Vec2, segments: &[[Vec2; 2]]) -> f64 {
    segments
        .iter()
        .map(|s| crate::geom::closest_on_segment(p, s[0], s[1]).1)
        .fold(f64::INFINITY, f64::min)
        .sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AdaptLimits {
    /// Triangles with indicator above this are refined.
    pub hessian_threshold: f64,
    /// Triangles within this distance of the surface are refined ...
    pub wall_distance: f64,
    /// ... until their longest edge is below this.
    pub wall_h: f64,
    /// No triangle is refined below this diameter.
    pub min_h: f64,
    pub max_vertices: usize,
    /// Refine edges crossed twice by the surface.
    pub double_intersection: bool,
}

impl Default for AdaptLimits {
    fn default() -> Self {
        Self {
            hessian_threshold: f64::INFINITY,
            wall_distance: 0.0,
            wall_h: 0.0,
            min_h: 0.0,
            max_vertices: 200_000,
            double_intersection: true,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Adapted<const N: usize> {
    pub mesh: Mesh,
    pub dual: DualMesh,
    pub field: Vec<[f64; N]>,
    pub marked: usize,
    pub budget_exhausted: bool,
}

/// Linear interpolation of nodal data onto vertices created since `old_len`.
pub fn interpolate_new_vertices<const N: usize>(mesh: &Mesh, old: &[[f64; N]]) -> Vec<[f64; N]> {
    let mut f = old.to_vec();
    f.reserve(mesh.vertices.len() - old.len());
    for v in old.len()..mesh.vertices.len() {
        let [a, b] = mesh.parents[v].expect("refined vertex without parents");
        let mut x = [0.0; N];
        for k in 0..N {
            x[k] = 0.5 * (f[a][k] + f[b][k]);
        }
        f.push(x);
    }
    f
}

/// One round of adaptation driven by per-triangle `scores`, wall distance and
/// doubly-intersected edges of `segments`.
pub fn adapt<const N: usize>(
    mesh: &Mesh,
    scores: &[f64],
    segments: &[[Vec2; 2]],
    limits: &AdaptLimits,
    field: &[[f64; N]],
) -> Result<Adapted<N>, MeshError> {
    let mut priority: Vec<(f64, usize)> = Vec::new();
    let double = if limits.double_intersection && !segments.is_empty() {
        doubly_intersected_edges(mesh, segments)
    } else {
        BTreeSet::new()
    };
    let incidence = if double.is_empty() { BTreeMap::new() } else { mesh.edge_triangles() };
    let mut forced = BTreeSet::new();
    for e in &double {
        for &t in &incidence[e] {
            forced.insert(t);
        }
    }
    for t in 0..mesh.triangles.len() {
        let h = mesh.diameter(t);
        if h <= limits.min_h {
            continue;
        }
        if forced.contains(&t) {
            priority.push((f64::INFINITY, t));
            continue;
        }
        if scores.get(t).is_some_and(|&s| s > limits.hessian_threshold) {
            priority.push((scores[t], t));
            continue;
        }
        if limits.wall_distance > 0.0 && h > limits.wall_h && !segments.is_empty() {
            let [a, b, c] = mesh.triangles[t].map(|v| mesh.vertices[v]);
            let g = [(a[0] + b[0] + c[0]) / 3.0, (a[1] + b[1] + c[1]) / 3.0];
            if distance_to_segments(g, segments) < limits.wall_distance + h {
                priority.push((f64::MAX, t));
            }
        }
    }
    priority.sort_by(|x, y| y.0.total_cmp(&x.0).then(x.1.cmp(&y.1)));

    let mut keep = priority.len();
    let mut budget_exhausted = false;
    loop {
        let marked: BTreeSet<usize> = priority[..keep].iter().map(|p| p.1).collect();
        let refined = nvb_refine(mesh, &marked);
        if refined.vertices.len() <= limits.max_vertices || keep == 0 {
            if keep == 0 && !priority.is_empty() {
                budget_exhausted = true;
            }
            let dual = build_dual(&refined)?;
            let field = interpolate_new_vertices(&refined, field);
            return Ok(Adapted { mesh: refined, dual, field, marked: keep, budget_exhausted });
        }
        budget_exhausted = true;
        keep /= 2;
    }
}

/// Plain-text mesh snapshot.
pub fn write_mesh(mesh: &Mesh) -> String {
    let mut s = String::new();
    writeln!(s, "# fsikit mesh v1").unwrap();
    writeln!(s, "vertices {}", mesh.vertices.len()).unwrap();
    for (i, v) in mesh.vertices.iter().enumerate() {
        writeln!(s, "{i} {:e} {:e}", v[0], v[1]).unwrap();
    }
    writeln!(s, "triangles {}", mesh.triangles.len()).unwrap();
    for (i, t) in mesh.triangles.iter().enumerate() {
        writeln!(s, "{i} {} {} {}", t[0], t[1], t[2]).unwrap();
    }
    writeln!(s, "boundary {}", mesh.boundary.len()).unwrap();
    for (&(a, b), k) in &mesh.boundary {
        writeln!(s, "{a} {b} {}", k.as_str()).unwrap();
    }
    s
}

fn parse_err(line: usize, msg: impl Into<String>) -> MeshError {
    MeshError::Parse { line, msg: msg.into() }
}

fn section_count<'a>(cursor: &mut impl Iterator<Item = (usize, &'a str)>, name: &str) -> Result<usize, MeshError> {
    let (ln, l) = cursor.next().ok_or_else(|| parse_err(0, format!("missing `{name}` section")))?;
    let mut it = l.split_whitespace();
    if it.next() != Some(name) {
        return Err(parse_err(ln, format!("expected `{name} <count>`")));
    }
    it.next().and_then(|c| c.parse().ok()).ok_or_else(|| parse_err(ln, "bad count"))
}

pub fn read_mesh(text: &str) -> Result<Mesh, MeshError> {
    let mut cursor = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'));
    let err = parse_err;
    let nv = section_count(&mut cursor, "vertices")?;
    let mut vertices = Vec::with_capacity(nv);
    for _ in 0..nv {
        let (ln, l) = cursor.next().ok_or_else(|| err(0, "truncated vertex table"))?;
        let f: Vec<&str> = l.split_whitespace().collect();
        if f.len() != 3 {
            return Err(err(ln, "vertex rows are `id x y`"));
        }
        let x: f64 = f[1].parse().map_err(|_| err(ln, "bad x"))?;
        let y: f64 = f[2].parse().map_err(|_| err(ln, "bad y"))?;
        vertices.push([x, y]);
    }
    let nt = section_count(&mut cursor, "triangles")?;
    let mut triangles = Vec::with_capacity(nt);
    for _ in 0..nt {
        let (ln, l) = cursor.next().ok_or_else(|| err(0, "truncated triangle table"))?;
        let f: Vec<usize> = l.split_whitespace().map(|x| x.parse()).collect::<Result<_, _>>().map_err(|_| err(ln, "bad index"))?;
        if f.len() != 4 || f[1..].iter().any(|&v| v >= nv) {
            return Err(err(ln, "triangle rows are `id v0 v1 v2` with valid vertex ids"));
        }
        triangles.push([f[1], f[2], f[3]]);
    }
    let nb = section_count(&mut cursor, "boundary")?;
    let mut boundary = BTreeMap::new();
    for _ in 0..nb {
        let (ln, l) = cursor.next().ok_or_else(|| err(0, "truncated boundary table"))?;
        let f: Vec<&str> = l.split_whitespace().collect();
        if f.len() != 3 {
            return Err(err(ln, "boundary rows are `a b kind`"));
        }
        let a: usize = f[0].parse().map_err(|_| err(ln, "bad index"))?;
        let b: usize = f[1].parse().map_err(|_| err(ln, "bad index"))?;
        let kind = BoundaryKind::parse(f[2]).ok_or_else(|| err(ln, "kind must be `farfield` or `wall`"))?;
        boundary.insert(edge_key(a, b), kind);
    }
    let parents = vec![None; vertices.len()];
    Ok(Mesh { vertices, triangles, boundary, parents })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn unit(n: usize) -> Mesh {
        build_kuhn_grid([0.0, 0.0], [1.0, 1.0], n, n, SideKinds::all(BoundaryKind::FarField)).unwrap()
    }

    #[test]
    fn kuhn_counts_and_area() {
        let m = unit(1);
        assert_eq!(m.triangles.len(), 2);
        assert!((m.total_area() - 1.0).abs() < 1e-15);
        let m = unit(7);
        assert_eq!(m.triangles.len(), 98);
        m.audit().unwrap();
        assert!((m.total_area() - 1.0).abs() < 1e-13);
    }

    #[test]
    fn uniform_refinement_keeps_shape() {
        let mut m = unit(2);
        let initial = m.global_min_angle();
        for _ in 0..6 {
            let all: BTreeSet<usize> = (0..m.triangles.len()).collect();
            m = nvb_refine(&m, &all);
            m.audit().unwrap();
        }
        assert_eq!(m.triangles.len(), 8 << 6);
        assert!(m.global_min_angle() >= 0.5 * initial - 1e-12);
        assert!((m.total_area() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn empty_marking_is_identity() {
        let m = unit(3);
        assert_eq!(nvb_refine(&m, &BTreeSet::new()), m);
    }

    /// Both triangles of the unit square share the diagonal as refinement
    /// edge, so marking one bisects the pair at the square's centre.
    #[test]
    fn single_mark_on_two_triangles() {
        let m = unit(1);
        let r = nvb_refine(&m, &BTreeSet::from([0]));
        assert_eq!(r.triangles.len(), 4);
        assert_eq!(r.vertices.len(), 5);
        assert_eq!(r.vertices[4], [0.5, 0.5]);
        r.audit().unwrap();
    }

    /// Marking a corner triangle of a 2x2 grid forces the closure to bisect
    /// its neighbour across a leg, which in turn splits that neighbour's
    /// diagonal partner.
    #[test]
    fn closure_propagates() {
        let m = unit(2);
        let r = nvb_refine(&m, &BTreeSet::from([0]));
        r.audit().unwrap();
        let r2 = nvb_refine(&r, &BTreeSet::from([0]));
        r2.audit().unwrap();
        assert!(r2.triangles.len() > r.triangles.len());
        assert!((r2.total_area() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn boundary_tags_follow_refinement() {
        let sides = SideKinds {
            left: BoundaryKind::FarField,
            right: BoundaryKind::FarField,
            bottom: BoundaryKind::SlipWall,
            top: BoundaryKind::SlipWall,
        };
        let mut m = build_kuhn_grid([0.0, 0.0], [2.0, 1.0], 2, 1, sides).unwrap();
        for _ in 0..3 {
            let all: BTreeSet<usize> = (0..m.triangles.len()).collect();
            m = nvb_refine(&m, &all);
        }
        m.audit().unwrap();
        let wall_len: f64 = m
            .boundary
            .iter()
            .filter(|(_, &k)| k == BoundaryKind::SlipWall)
            .map(|(&(a, b), _)| norm(sub(m.vertices[a], m.vertices[b])))
            .sum();
        assert!((wall_len - 4.0).abs() < 1e-12);
    }

    fn shoelace(poly: &[Vec2]) -> f64 {
        let n = poly.len();
        0.5 * (0..n).map(|k| crate::geom::cross(poly[k], poly[(k + 1) % n])).sum::<f64>()
    }

    #[test]
    fn single_triangle_dual() {
        let m = Mesh {
            vertices: vec![[0.0, 0.0], [2.0, 0.0], [0.5, 1.5]],
            triangles: vec![[0, 1, 2]],
            boundary: [((0, 1), BoundaryKind::SlipWall), ((1, 2), BoundaryKind::SlipWall), ((0, 2), BoundaryKind::SlipWall)]
                .into_iter()
                .collect(),
            parents: vec![None; 3],
        };
        let d = build_dual(&m).unwrap();
        for v in &d.volumes {
            assert!((v - 0.5).abs() < 1e-15);
        }
    }

    /// Brute-force median-dual polygons of the two-triangle square, built
    /// from the midpoints and centroids around each corner.
    #[test]
    fn two_triangle_dual_matches_polygons() {
        let m = unit(1);
        let d = build_dual(&m).unwrap();
        let g1 = [2.0 / 3.0, 1.0 / 3.0];
        let g2 = [1.0 / 3.0, 2.0 / 3.0];
        let c = [0.5, 0.5];
        let polys: [Vec<Vec2>; 4] = [
            vec![[0.0, 0.0], [0.5, 0.0], g1, c, g2, [0.0, 0.5]],
            vec![[1.0, 0.0], [1.0, 0.5], g1, [0.5, 0.0]],
            vec![[0.0, 1.0], [0.0, 0.5], g2, [0.5, 1.0]],
            vec![[1.0, 1.0], [0.5, 1.0], g2, c, g1, [1.0, 0.5]],
        ];
        for (i, p) in polys.iter().enumerate() {
            assert!((d.volumes[i] - shoelace(p)).abs() < 1e-15, "node {i}");
        }
    }

    fn closure_residual(m: &Mesh, d: &DualMesh) -> f64 {
        let mut sums = vec![[0.0; 2]; m.vertices.len()];
        for (e, nu) in d.edges.iter().zip(&d.normals) {
            sums[e[0]][0] += nu[0];
            sums[e[0]][1] += nu[1];
            sums[e[1]][0] -= nu[0];
            sums[e[1]][1] -= nu[1];
        }
        for f in &d.boundary_facets {
            sums[f.node][0] += f.normal[0];
            sums[f.node][1] += f.normal[1];
        }
        sums.iter().map(|s| norm(*s)).fold(0.0, f64::max)
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]
        #[test]
        fn dual_identities_after_random_refinement(seed in proptest::collection::vec(0usize..10_000, 1..30)) {
            let mut m = unit(3);
            for s in seed {
                let t = s % m.triangles.len();
                m = nvb_refine(&m, &BTreeSet::from([t]));
            }
            m.audit().unwrap();
            let d = build_dual(&m).unwrap();
            prop_assert!(closure_residual(&m, &d) < 1e-14);
            prop_assert!((d.volumes.iter().sum::<f64>() - 1.0).abs() < 1e-13);
        }
    }

    #[test]
    fn hessian_of_linear_vanishes_and_quadratic_scales() {
        for n in [8, 16] {
            let m = unit(n);
            let d = build_dual(&m).unwrap();
            let lin: Vec<f64> = m.vertices.iter().map(|v| 3.0 * v[0] - 2.0 * v[1] + 1.0).collect();
            assert!(hessian_indicator(&m, &d, &lin).iter().all(|s| s.abs() < 1e-12));
        }
        let score = |n: usize| {
            let m = unit(n);
            let d = build_dual(&m).unwrap();
            let q: Vec<f64> = m.vertices.iter().map(|v| v[0] * v[0]).collect();
            let s = hessian_indicator(&m, &d, &q);
            // triangles whose vertices are all at least two layers in
            let h = 1.0 / n as f64;
            let interior: Vec<f64> = (0..m.triangles.len())
                .filter(|&t| m.triangles[t].iter().all(|&v| {
                    let p = m.vertices[v];
                    p[0] > 1.5 * h && p[0] < 1.0 - 1.5 * h && p[1] > 1.5 * h && p[1] < 1.0 - 1.5 * h
                }))
                .map(|t| s[t])
                .collect();
            let mean = interior.iter().sum::<f64>() / interior.len() as f64;
            assert!(interior.iter().all(|x| (x - mean).abs() < 0.1 * mean));
            mean
        };
        let coarse = score(8);
        let fine = score(16);
        assert!((coarse / fine - 4.0).abs() < 1e-9, "{}", coarse / fine);
    }

    #[test]
    fn double_intersection_of_thin_polygon() {
        let m = unit(4);
        assert!(doubly_intersected_edges(&m, &[[[5.0, 5.0], [6.0, 5.0]]]).is_empty());
        // small hexagon straddling the bottom edge (0,0)-(0.25,0)... placed on an
        // interior horizontal edge y = 0.5 between x = 0.25 and 0.5
        let c = [0.37, 0.5];
        let r = 0.03;
        let hex: Vec<Vec2> = (0..6)
            .map(|k| {
                let a = std::f64::consts::PI / 3.0 * k as f64 + 0.1;
                [c[0] + r * a.cos(), c[1] + r * a.sin()]
            })
            .collect();
        let segs: Vec<[Vec2; 2]> = (0..6).map(|k| [hex[k], hex[(k + 1) % 6]]).collect();
        let e = doubly_intersected_edges(&m, &segs);
        assert!(e.contains(&edge_key(m.vertices.iter().position(|v| *v == [0.25, 0.5]).unwrap(), m.vertices.iter().position(|v| *v == [0.5, 0.5]).unwrap())));
        // refine until no edge is crossed twice
        let mut mesh = m;
        for _ in 0..40 {
            let e = doubly_intersected_edges(&mesh, &segs);
            if e.is_empty() {
                break;
            }
            let inc = mesh.edge_triangles();
            let marks: BTreeSet<usize> = e.iter().flat_map(|k| inc[k].clone()).collect();
            mesh = nvb_refine(&mesh, &marks);
        }
        assert!(doubly_intersected_edges(&mesh, &segs).is_empty());
        mesh.audit().unwrap();
        // every crossing now belongs to a distinct edge, and there are at least two
        let crossed = mesh
            .edges()
            .into_iter()
            .filter(|&(a, b)| segs.iter().any(|s| crate::embedded::segments_cross(mesh.vertices[a], mesh.vertices[b], s[0], s[1]).is_some()))
            .count();
        assert!(crossed >= 2);
    }

    #[test]
    fn adapt_below_threshold_is_identity_and_linear_exact() {
        let m = unit(4);
        let field: Vec<[f64; 1]> = m.vertices.iter().map(|v| [2.0 * v[0] + v[1]]).collect();
        let scores = vec![0.0; m.triangles.len()];
        let limits = AdaptLimits { hessian_threshold: 1.0, ..Default::default() };
        let a = adapt(&m, &scores, &[], &limits, &field).unwrap();
        assert_eq!(a.mesh, m);
        let scores: Vec<f64> = (0..m.triangles.len()).map(|t| if t % 3 == 0 { 2.0 } else { 0.0 }).collect();
        let a = adapt(&m, &scores, &[], &limits, &field).unwrap();
        assert!(a.mesh.vertices.len() > m.vertices.len());
        for (v, f) in a.mesh.vertices.iter().zip(&a.field) {
            assert!((f[0] - (2.0 * v[0] + v[1])).abs() < 1e-14);
        }
    }

    #[test]
    fn adapt_respects_budget() {
        let m = unit(4);
        let field = vec![[0.0]; m.vertices.len()];
        let scores = vec![1.0; m.triangles.len()];
        let limits = AdaptLimits { hessian_threshold: 0.5, max_vertices: 30, ..Default::default() };
        let a = adapt(&m, &scores, &[], &limits, &field).unwrap();
        assert!(a.mesh.vertices.len() <= 30);
        assert!(a.budget_exhausted);
        a.mesh.audit().unwrap();
    }

    #[test]
    fn adapt_mass_change_on_gaussian_bump() {
        let m = unit(24);
        let d = build_dual(&m).unwrap();
        let rho = |v: Vec2| 1.0 + 0.5 * (-((v[0] - 0.5).powi(2) + (v[1] - 0.5).powi(2)) / 0.02).exp();
        let field: Vec<[f64; 1]> = m.vertices.iter().map(|&v| [rho(v)]).collect();
        let scalar: Vec<f64> = field.iter().map(|f| f[0]).collect();
        let scores = hessian_indicator(&m, &d, &scalar);
        let mut s = scores.clone();
        s.sort_by(f64::total_cmp);
        let limits = AdaptLimits { hessian_threshold: s[s.len() / 2], ..Default::default() };
        let a = adapt(&m, &scores, &[], &limits, &field).unwrap();
        let mass = |dual: &DualMesh, f: &[[f64; 1]]| dual.volumes.iter().zip(f).map(|(v, x)| v * x[0]).sum::<f64>();
        let before = mass(&d, &field);
        let after = mass(&a.dual, &a.field);
        assert!(((after - before) / before).abs() < 5e-3, "{}", (after - before) / before);
    }

    #[test]
    fn text_round_trip() {
        let mut m = unit(2);
        m = nvb_refine(&m, &BTreeSet::from([1, 5]));
        let text = write_mesh(&m);
        let back = read_mesh(&text).unwrap();
        assert_eq!(back.vertices, m.vertices);
        assert_eq!(back.triangles, m.triangles);
        assert_eq!(back.boundary, m.boundary);
        assert!(matches!(read_mesh("vertices 1\n0 0.0\n"), Err(MeshError::Parse { line: 2, .. })));
    }

    #[test]
    fn lsq_gradient_exact_for_linear() {
        let mut m = unit(3);
        m = nvb_refine(&m, &BTreeSet::from([0, 4, 7]));
        let d = build_dual(&m).unwrap();
        let f: Vec<f64> = m.vertices.iter().map(|v| 0.3 * v[0] - 1.7 * v[1]).collect();
        for i in 0..m.vertices.len() {
            let g = d.gradient(&m, &f, i);
            assert!((g[0] - 0.3).abs() < 1e-12 && (g[1] + 1.7).abs() < 1e-12);
        }
    }
}
