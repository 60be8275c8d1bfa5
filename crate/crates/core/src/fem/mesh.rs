//! Conforming meshes of the three model domains.
//!
//! Square domains use axis-aligned quadrilaterals, the disc uses triangles
//! obtained by red refinement of a ring mesh with boundary nodes projected
//! onto the circle. All cells are counter-clockwise.

use std::collections::HashMap;
use std::io::Write;

use crate::error::{Error, Result};
use crate::field::Point;
use crate::sampling::Domain;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CellKind {
    Quad,
    Tri,
}

impl CellKind {
    pub fn nodes(self) -> usize {
        match self {
            CellKind::Quad => 4,
            CellKind::Tri => 3,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BoundaryEdge {
    /// Endpoints, ordered counter-clockwise along ∂Ω.
    pub nodes: [usize; 2],
    /// Outward unit normal of the straight edge.
    pub normal: Point,
    pub length: f64,
    /// The single cell containing this edge.
    pub cell: usize,
}

#[derive(Clone, Debug)]
pub struct Mesh {
    pub domain: Domain,
    pub level: usize,
    pub kind: CellKind,
    pub nodes: Vec<Point>,
    connectivity: Vec<usize>,
    pub boundary_edges: Vec<BoundaryEdge>,
    pub is_boundary_node: Vec<bool>,
    /// Largest cell diameter.
    pub h: f64,
    locator: Locator,
}

/// Number of rings in the level-0 disc mesh (24 boundary segments).
const DISC_RINGS: usize = 4;

impl Mesh {
    pub fn cell_count(&self) -> usize {
        self.connectivity.len() / self.kind.nodes()
    }

    pub fn cell(&self, c: usize) -> &[usize] {
        let n = self.kind.nodes();
        &self.connectivity[n * c..n * (c + 1)]
    }

    pub fn cells(&self) -> impl Iterator<Item = &[usize]> {
        self.connectivity.chunks_exact(self.kind.nodes())
    }

    pub fn cell_coords(&self, c: usize) -> [Point; 4] {
        let mut out = [[0.0; 2]; 4];
        for (o, &n) in out.iter_mut().zip(self.cell(c)) {
            *o = self.nodes[n];
        }
        out
    }

    pub fn cell_diameter(&self, c: usize) -> f64 {
        let nodes = self.cell(c);
        let mut d: f64 = 0.0;
        for (i, &a) in nodes.iter().enumerate() {
            for &b in &nodes[i + 1..] {
                d = d.max(dist(self.nodes[a], self.nodes[b]));
            }
        }
        d
    }

    /// Longest cell edge (for the square meshes, the side length).
    pub fn max_edge_length(&self) -> f64 {
        let n = self.kind.nodes();
        self.cells()
            .flat_map(|c| (0..n).map(move |i| (c[i], c[(i + 1) % n])))
            .map(|(a, b)| dist(self.nodes[a], self.nodes[b]))
            .fold(0.0, f64::max)
    }

    pub fn cell_area(&self, c: usize) -> f64 {
        let nodes = self.cell(c);
        let n = nodes.len();
        0.5 * (0..n)
            .map(|i| {
                let (p, q) = (self.nodes[nodes[i]], self.nodes[nodes[(i + 1) % n]]);
                p[0] * q[1] - q[0] * p[1]
            })
            .sum::<f64>()
    }

    pub fn area(&self) -> f64 {
        (0..self.cell_count()).map(|c| self.cell_area(c)).sum()
    }

    /// Finds a cell containing `p` (with a small tolerance) and the
    /// reference coordinates of `p` in it.
    pub fn locate(&self, p: Point) -> Option<(usize, [f64; 2])> {
        self.locator.locate(self, p)
    }

    /// Index of the boundary edge nearest to `p`.
    pub fn nearest_boundary_edge(&self, p: Point) -> usize {
        let mut best = (f64::INFINITY, 0);
        for (i, e) in self.boundary_edges.iter().enumerate() {
            let (a, b) = (self.nodes[e.nodes[0]], self.nodes[e.nodes[1]]);
            let (dx, dy) = (b[0] - a[0], b[1] - a[1]);
            let t = (((p[0] - a[0]) * dx + (p[1] - a[1]) * dy) / (dx * dx + dy * dy)).clamp(0.0, 1.0);
            let d = dist(p, [a[0] + t * dx, a[1] + t * dy]);
            if d < best.0 {
                best = (d, i);
            }
        }
        best.1
    }

    fn from_parts(domain: Domain, level: usize, kind: CellKind, nodes: Vec<Point>, connectivity: Vec<usize>) -> Mesh {
        let n = kind.nodes();
        let mut edge_count: HashMap<(usize, usize), (usize, usize, usize)> = HashMap::new();
        for (c, cell) in connectivity.chunks_exact(n).enumerate() {
            for i in 0..n {
                let (a, b) = (cell[i], cell[(i + 1) % n]);
                let key = (a.min(b), a.max(b));
                edge_count.entry(key).and_modify(|e| e.0 += 1).or_insert((1, c, i));
            }
        }
        let mut boundary_edges: Vec<BoundaryEdge> = edge_count
            .into_iter()
            .filter(|(_, (count, _, _))| *count == 1)
            .map(|(_, (_, c, i))| {
                let cell = &connectivity[n * c..n * (c + 1)];
                let (a, b) = (cell[i], cell[(i + 1) % n]);
                let (pa, pb) = (nodes[a], nodes[b]);
                let length = dist(pa, pb);
                BoundaryEdge {
                    nodes: [a, b],
                    normal: [(pb[1] - pa[1]) / length, -(pb[0] - pa[0]) / length],
                    length,
                    cell: c,
                }
            })
            .collect();
        boundary_edges.sort_by_key(|e| (e.nodes[0], e.nodes[1]));
        let mut is_boundary_node = vec![false; nodes.len()];
        for e in &boundary_edges {
            is_boundary_node[e.nodes[0]] = true;
            is_boundary_node[e.nodes[1]] = true;
        }
        let mut mesh = Mesh {
            domain,
            level,
            kind,
            nodes,
            connectivity,
            boundary_edges,
            is_boundary_node,
            h: 0.0,
            locator: Locator::default(),
        };
        mesh.h = (0..mesh.cell_count()).map(|c| mesh.cell_diameter(c)).fold(0.0, f64::max);
        mesh.locator = Locator::build(&mesh);
        mesh
    }

    /// Mesh dump: `$nodes / id x y / $cells / id n1 n2 n3 [n4] / $bedges / n1 n2 nx ny`.
    pub fn write_dump<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "$nodes")?;
        for (i, p) in self.nodes.iter().enumerate() {
            writeln!(w, "{i} {:?} {:?}", p[0], p[1])?;
        }
        writeln!(w, "$cells")?;
        for (i, c) in self.cells().enumerate() {
            let ids: Vec<String> = c.iter().map(|n| n.to_string()).collect();
            writeln!(w, "{i} {}", ids.join(" "))?;
        }
        writeln!(w, "$bedges")?;
        for e in &self.boundary_edges {
            writeln!(w, "{} {} {:?} {:?}", e.nodes[0], e.nodes[1], e.normal[0], e.normal[1])?;
        }
        Ok(())
    }
}

fn dist(a: Point, b: Point) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt()
}

/// Uniform mesh of `domain` at refinement `level`.
///
/// * UnitSquare: `4^level` squares of side `2^-level`.
/// * LShape: `3·4^level` squares of side `2^-level`.
/// * UnitDisc: `96·4^level` triangles; 24 boundary segments at level 0.
pub fn build_mesh(domain: Domain, level: usize) -> Mesh {
    match domain {
        Domain::UnitSquare => structured_quads(domain, level, [0.0, 0.0], 1.0, 1 << level, |_, _| true),
        Domain::LShape => {
            let n = 2usize << level;
            structured_quads(domain, level, [-1.0, -1.0], 2.0, n, move |i, j| !(2 * i >= n && 2 * j >= n))
        }
        Domain::UnitDisc => disc(level),
    }
}

fn structured_quads(
    domain: Domain,
    level: usize,
    origin: Point,
    side: f64,
    n: usize,
    keep: impl Fn(usize, usize) -> bool,
) -> Mesh {
    let h = side / n as f64;
    let mut id = vec![usize::MAX; (n + 1) * (n + 1)];
    let mut nodes = Vec::new();
    let mut connectivity = Vec::new();
    let mut node = |i: usize, j: usize, nodes: &mut Vec<Point>| {
        let k = j * (n + 1) + i;
        if id[k] == usize::MAX {
            id[k] = nodes.len();
            nodes.push([origin[0] + i as f64 * h, origin[1] + j as f64 * h]);
        }
        id[k]
    };
    for j in 0..n {
        for i in 0..n {
            if !keep(i, j) {
                continue;
            }
            let c = [
                node(i, j, &mut nodes),
                node(i + 1, j, &mut nodes),
                node(i + 1, j + 1, &mut nodes),
                node(i, j + 1, &mut nodes),
            ];
            connectivity.extend_from_slice(&c);
        }
    }
    Mesh::from_parts(domain, level, CellKind::Quad, nodes, connectivity)
}

fn disc(level: usize) -> Mesh {
    let m = DISC_RINGS;
    let mut nodes: Vec<Point> = vec![[0.0, 0.0]];
    let mut ring_start = vec![0usize];
    for k in 1..=m {
        ring_start.push(nodes.len());
        let r = k as f64 / m as f64;
        for i in 0..6 * k {
            let th = 2.0 * std::f64::consts::PI * i as f64 / (6 * k) as f64;
            nodes.push([r * th.cos(), r * th.sin()]);
        }
    }
    let ring = |k: usize, i: usize| -> usize {
        if k == 0 {
            0
        } else {
            ring_start[k] + i % (6 * k)
        }
    };
    let mut tris: Vec<[usize; 3]> = Vec::new();
    for k in 1..=m {
        for s in 0..6 {
            // Sector s: outer nodes s*k ..= s*k + k, inner nodes s*(k-1) ..= s*(k-1) + k - 1.
            for j in 0..k {
                let o0 = ring(k, s * k + j);
                let o1 = ring(k, s * k + j + 1);
                let i0 = ring(k - 1, s * (k - 1) + j);
                tris.push([i0, o0, o1]);
                if j + 1 < k {
                    let i1 = ring(k - 1, s * (k - 1) + j + 1);
                    tris.push([i0, o1, i1]);
                }
            }
        }
    }
    for _ in 0..level {
        let (n2, t2) = red_refine(&nodes, &tris);
        nodes = n2;
        tris = t2;
    }
    let mut connectivity = Vec::with_capacity(3 * tris.len());
    for mut t in tris {
        let (a, b, c) = (nodes[t[0]], nodes[t[1]], nodes[t[2]]);
        if (b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1]) < 0.0 {
            t.swap(1, 2);
        }
        connectivity.extend_from_slice(&t);
    }
    Mesh::from_parts(Domain::UnitDisc, level, CellKind::Tri, nodes, connectivity)
}

/// Splits every triangle into four; midpoints of boundary edges are
/// projected radially onto the unit circle.
fn red_refine(nodes: &[Point], tris: &[[usize; 3]]) -> (Vec<Point>, Vec<[usize; 3]>) {
    let mut count: HashMap<(usize, usize), usize> = HashMap::new();
    for t in tris {
        for i in 0..3 {
            let (a, b) = (t[i], t[(i + 1) % 3]);
            *count.entry((a.min(b), a.max(b))).or_insert(0) += 1;
        }
    }
    let mut nodes = nodes.to_vec();
    let mut mid: HashMap<(usize, usize), usize> = HashMap::new();
    let mut midpoint = |a: usize, b: usize, nodes: &mut Vec<Point>| -> usize {
        let key = (a.min(b), a.max(b));
        *mid.entry(key).or_insert_with(|| {
            let (p, q) = (nodes[a], nodes[b]);
            let mut m = [0.5 * (p[0] + q[0]), 0.5 * (p[1] + q[1])];
            if count[&key] == 1 {
                let r = (m[0] * m[0] + m[1] * m[1]).sqrt();
                m = [m[0] / r, m[1] / r];
            }
            nodes.push(m);
            nodes.len() - 1
        })
    };
    let mut out = Vec::with_capacity(4 * tris.len());
    for &[a, b, c] in tris {
        let ab = midpoint(a, b, &mut nodes);
        let bc = midpoint(b, c, &mut nodes);
        let ca = midpoint(c, a, &mut nodes);
        out.push([a, ab, ca]);
        out.push([ab, b, bc]);
        out.push([ca, bc, c]);
        out.push([ab, bc, ca]);
    }
    (nodes, out)
}

/// Bucket grid over cell bounding boxes.
#[derive(Clone, Debug, Default)]
struct Locator {
    origin: Point,
    inv_cell: [f64; 2],
    dims: [usize; 2],
    buckets: Vec<Vec<usize>>,
}

const LOCATE_TOL: f64 = 1e-10;

impl Locator {
    fn build(mesh: &Mesh) -> Locator {
        let (mut lo, mut hi) = ([f64::INFINITY; 2], [f64::NEG_INFINITY; 2]);
        for p in &mesh.nodes {
            for k in 0..2 {
                lo[k] = lo[k].min(p[k]);
                hi[k] = hi[k].max(p[k]);
            }
        }
        let nc = mesh.cell_count().max(1);
        let per_side = ((nc as f64).sqrt().ceil() as usize).max(1);
        let dims = [per_side, per_side];
        let size = [(hi[0] - lo[0]).max(1e-300) / per_side as f64, (hi[1] - lo[1]).max(1e-300) / per_side as f64];
        let mut loc = Locator {
            origin: lo,
            inv_cell: [1.0 / size[0], 1.0 / size[1]],
            dims,
            buckets: vec![Vec::new(); dims[0] * dims[1]],
        };
        for c in 0..mesh.cell_count() {
            let (mut clo, mut chi) = ([f64::INFINITY; 2], [f64::NEG_INFINITY; 2]);
            for &n in mesh.cell(c) {
                for k in 0..2 {
                    clo[k] = clo[k].min(mesh.nodes[n][k]);
                    chi[k] = chi[k].max(mesh.nodes[n][k]);
                }
            }
            let (i0, j0) = loc.bucket_of([clo[0] - LOCATE_TOL, clo[1] - LOCATE_TOL]);
            let (i1, j1) = loc.bucket_of([chi[0] + LOCATE_TOL, chi[1] + LOCATE_TOL]);
            for j in j0..=j1 {
                for i in i0..=i1 {
                    loc.buckets[j * dims[0] + i].push(c);
                }
            }
        }
        loc
    }

    fn bucket_of(&self, p: Point) -> (usize, usize) {
        let f = |k: usize| -> usize {
            let v = ((p[k] - self.origin[k]) * self.inv_cell[k]).floor();
            (v.max(0.0) as usize).min(self.dims[k] - 1)
        };
        (f(0), f(1))
    }

    fn locate(&self, mesh: &Mesh, p: Point) -> Option<(usize, [f64; 2])> {
        if self.buckets.is_empty() {
            return None;
        }
        let (i, j) = self.bucket_of(p);
        let mut best: Option<(f64, usize, [f64; 2])> = None;
        for &c in &self.buckets[j * self.dims[0] + i] {
            if let Some((xi, outside)) = super::element::inverse_map(mesh, c, p) {
                if outside <= LOCATE_TOL {
                    return Some((c, xi));
                }
                if outside < 1e-7 && best.is_none_or(|b| outside < b.0) {
                    best = Some((outside, c, xi));
                }
            }
        }
        best.map(|(_, c, xi)| (c, xi))
    }
}

/// Validates that `p` lies in the mesh, returning a typed error otherwise.
pub fn locate_or_err(mesh: &Mesh, p: Point) -> Result<(usize, [f64; 2])> {
    mesh.locate(p).ok_or(Error::PointOutsideMesh(p[0], p[1]))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lshape_counts() {
        let m1 = build_mesh(Domain::LShape, 1);
        assert_eq!(m1.cell_count(), 12);
        assert_eq!(m1.max_edge_length(), 0.5);
        assert_eq!(build_mesh(Domain::LShape, 4).cell_count(), 768);
        let interior = m1.is_boundary_node.iter().filter(|b| !**b).count();
        assert_eq!(interior, 5);
        for l in 0..5 {
            assert_eq!(build_mesh(Domain::LShape, l).cell_count(), 3 * 4usize.pow(l as u32));
        }
    }

    #[test]
    fn unit_square_sizes() {
        for l in 0..5 {
            let m = build_mesh(Domain::UnitSquare, l);
            assert_eq!(m.cell_count(), 4usize.pow(l as u32));
            assert!((m.h - 2f64.sqrt() * 0.5f64.powi(l as i32)).abs() < 1e-14);
        }
    }

    #[test]
    fn boundary_measures() {
        for (d, per, area) in [(Domain::UnitSquare, 4.0, 1.0), (Domain::LShape, 8.0, 3.0)] {
            let m = build_mesh(d, 3);
            let p: f64 = m.boundary_edges.iter().map(|e| e.length).sum();
            assert!((p - per).abs() < 1e-12);
            assert!((m.area() - area).abs() < 1e-12);
        }
    }

    #[test]
    fn boundary_edges_form_closed_loops() {
        for d in [Domain::UnitSquare, Domain::LShape, Domain::UnitDisc] {
            let m = build_mesh(d, 2);
            let mut out_deg = vec![0; m.nodes.len()];
            let mut in_deg = vec![0; m.nodes.len()];
            for e in &m.boundary_edges {
                out_deg[e.nodes[0]] += 1;
                in_deg[e.nodes[1]] += 1;
            }
            assert_eq!(out_deg, in_deg, "{d}");
            assert!(out_deg.iter().all(|&k| k <= 1));
        }
    }

    #[test]
    fn outward_normals_point_out() {
        for d in [Domain::UnitSquare, Domain::LShape, Domain::UnitDisc] {
            let m = build_mesh(d, 2);
            for e in &m.boundary_edges {
                let (a, b) = (m.nodes[e.nodes[0]], m.nodes[e.nodes[1]]);
                let mid = [0.5 * (a[0] + b[0]), 0.5 * (a[1] + b[1])];
                let probe = [mid[0] + 1e-6 * e.normal[0], mid[1] + 1e-6 * e.normal[1]];
                assert!(!d.contains(probe) || d == Domain::UnitDisc);
                let inner = [mid[0] - 1e-6 * e.normal[0], mid[1] - 1e-6 * e.normal[1]];
                assert!(d.contains(inner), "{d} {mid:?}");
            }
        }
    }

    #[test]
    fn disc_geometry() {
        let m0 = build_mesh(Domain::UnitDisc, 0);
        assert_eq!(m0.boundary_edges.len(), 24);
        assert_eq!(m0.cell_count(), 96);
        let mut prev = m0.h;
        for l in 1..4 {
            let m = build_mesh(Domain::UnitDisc, l);
            for (i, p) in m.nodes.iter().enumerate() {
                if m.is_boundary_node[i] {
                    assert!(((p[0] * p[0] + p[1] * p[1]).sqrt() - 1.0).abs() < 1e-12);
                }
            }
            assert!((0..m.cell_count()).all(|c| m.cell_area(c) > 0.0));
            let ratio = m.h / prev;
            assert!((0.45..=0.55).contains(&ratio), "ratio {ratio}");
            prev = m.h;
        }
    }

    #[test]
    fn square_refinement_halves_h() {
        for d in [Domain::UnitSquare, Domain::LShape] {
            for l in 0..4 {
                let r = build_mesh(d, l + 1).h / build_mesh(d, l).h;
                assert!((0.49..=0.51).contains(&r));
            }
        }
    }

    #[test]
    fn locate_points() {
        let m = build_mesh(Domain::LShape, 2);
        let (c, xi) = m.locate([0.5, -0.5]).unwrap();
        assert!(m.cell(c).iter().any(|&n| m.nodes[n] == [0.5, -0.5]));
        assert!(xi.iter().all(|v| (-1e-12..=1.0 + 1e-12).contains(v)));
        assert!(m.locate([0.5, 0.5]).is_none());
        assert!(matches!(locate_or_err(&m, [2.0, 0.0]), Err(Error::PointOutsideMesh(..))));
        let d = build_mesh(Domain::UnitDisc, 2);
        assert!(d.locate([0.3, 0.4]).is_some());
    }

    #[test]
    fn dump_sections() {
        let m = build_mesh(Domain::UnitSquare, 1);
        let mut buf = Vec::new();
        m.write_dump(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "$nodes");
        assert_eq!(lines[10], "$cells");
        assert_eq!(lines[15], "$bedges");
        assert_eq!(lines.len(), 16 + 8);
    }
}
