//! Conforming triangular meshes, barycentric geometry and patch connectivity.
//!
//! Triangles are stored counter-clockwise. Edges are derived from the
//! triangle list and carry their one or two adjacent triangles; boundary
//! flags are always recomputed from that adjacency.

use std::collections::HashMap;
use std::fmt::Write as _;

use nalgebra::{Point2, Vector2};

use crate::error::{Error, Result};

/// Relative area threshold below which a triangle is treated as degenerate.
pub const DEGENERACY_TOLERANCE: f64 = 1e-14;

/// Header line of the mesh text format.
pub const MESH_FORMAT_HEADER: &str = "nnem-mesh v1";

#[derive(Debug, Clone, PartialEq)]
pub struct Edge {
    /// Endpoints, smaller vertex index first.
    pub vertices: [usize; 2],
    /// One (boundary) or two (interior) adjacent triangles, ascending.
    pub triangles: Vec<usize>,
}

impl Edge {
    pub fn is_boundary(&self) -> bool {
        self.triangles.len() == 1
    }
}

/// How a generated mesh was built. Loaded meshes carry `Loaded`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum MeshOrigin {
    /// Structured unit square; every cell split from lower-left to upper-right.
    UnitSquare { n: usize },
    /// L-shaped domain `[0,2]^2` minus the upper-right unit square.
    LShape { n: usize },
    Loaded,
}

#[derive(Debug, Clone)]
pub struct Mesh {
    pub vertices: Vec<Point2<f64>>,
    pub triangles: Vec<[usize; 3]>,
    pub edges: Vec<Edge>,
    /// `triangle_edges[t][k]` is the edge opposite local vertex `k` of triangle `t`.
    pub triangle_edges: Vec<[usize; 3]>,
    pub boundary_vertex: Vec<bool>,
    pub boundary_edge: Vec<bool>,
    /// Maximum edge length.
    pub h: f64,
    pub origin: MeshOrigin,
}

impl PartialEq for Mesh {
    fn eq(&self, other: &Self) -> bool {
        self.vertices == other.vertices
            && self.triangles == other.triangles
            && self.edges == other.edges
            && self.triangle_edges == other.triangle_edges
            && self.boundary_vertex == other.boundary_vertex
            && self.boundary_edge == other.boundary_edge
            && self.h == other.h
    }
}

fn signed_area(a: &Point2<f64>, b: &Point2<f64>, c: &Point2<f64>) -> f64 {
    0.5 * ((b.x - a.x) * (c.y - a.y) - (c.x - a.x) * (b.y - a.y))
}

impl Mesh {
    /// Builds a mesh from vertices and CCW triangles and validates every invariant.
    pub fn from_parts(vertices: Vec<Point2<f64>>, triangles: Vec<[usize; 3]>) -> Result<Mesh> {
        if triangles.is_empty() {
            return Err(Error::InvalidArgument("mesh has no triangles".into()));
        }
        for (t, tri) in triangles.iter().enumerate() {
            for &v in tri {
                if v >= vertices.len() {
                    return Err(Error::InvalidArgument(format!(
                        "triangle {t} references vertex {v} but only {} vertices exist",
                        vertices.len()
                    )));
                }
            }
            if tri[0] == tri[1] || tri[1] == tri[2] || tri[0] == tri[2] {
                return Err(Error::DegenerateTriangle { triangle: t, area: 0.0 });
            }
        }

        let verts = &vertices;
        let h = triangles
            .iter()
            .flat_map(|tri| (0..3).map(move |k| (verts[tri[k]] - verts[tri[(k + 1) % 3]]).norm()))
            .fold(0.0, f64::max);

        for (t, tri) in triangles.iter().enumerate() {
            let area = signed_area(&vertices[tri[0]], &vertices[tri[1]], &vertices[tri[2]]);
            if area.abs() < DEGENERACY_TOLERANCE * h * h {
                return Err(Error::DegenerateTriangle { triangle: t, area });
            }
            if area < 0.0 {
                return Err(Error::Orientation { triangle: t, area });
            }
        }

        let mut edge_lookup: HashMap<[usize; 2], usize> = HashMap::new();
        let mut edges: Vec<Edge> = Vec::new();
        // Orientation in which the first adjacent triangle traverses each edge.
        let mut first_direction: Vec<bool> = Vec::new();
        let mut triangle_edges = Vec::with_capacity(triangles.len());
        for (t, tri) in triangles.iter().enumerate() {
            let mut local = [0usize; 3];
            for k in 0..3 {
                let a = tri[(k + 1) % 3];
                let b = tri[(k + 2) % 3];
                let key = if a < b { [a, b] } else { [b, a] };
                let forward = a < b;
                let e = match edge_lookup.get(&key) {
                    Some(&e) => {
                        if edges[e].triangles.len() >= 2 {
                            return Err(Error::NonConforming(format!(
                                "edge ({}, {}) is shared by more than two triangles",
                                key[0], key[1]
                            )));
                        }
                        if first_direction[e] == forward {
                            return Err(Error::NonConforming(format!(
                                "triangles {} and {t} overlap across edge ({}, {})",
                                edges[e].triangles[0], key[0], key[1]
                            )));
                        }
                        edges[e].triangles.push(t);
                        e
                    }
                    None => {
                        edges.push(Edge { vertices: key, triangles: vec![t] });
                        first_direction.push(forward);
                        edge_lookup.insert(key, edges.len() - 1);
                        edges.len() - 1
                    }
                };
                local[k] = e;
            }
            triangle_edges.push(local);
        }

        let boundary_edge: Vec<bool> = edges.iter().map(Edge::is_boundary).collect();
        let mut boundary_vertex = vec![false; vertices.len()];
        for e in edges.iter().filter(|e| e.is_boundary()) {
            boundary_vertex[e.vertices[0]] = true;
            boundary_vertex[e.vertices[1]] = true;
        }

        // A hanging node always shows up on an edge with a single neighbour.
        for e in edges.iter().filter(|e| e.is_boundary()) {
            let a = vertices[e.vertices[0]];
            let b = vertices[e.vertices[1]];
            let d = b - a;
            let len2 = d.norm_squared();
            for (v, p) in vertices.iter().enumerate() {
                if v == e.vertices[0] || v == e.vertices[1] {
                    continue;
                }
                let s = (p - a).dot(&d) / len2;
                if s <= 1e-12 || s >= 1.0 - 1e-12 {
                    continue;
                }
                let cross = d.x * (p.y - a.y) - d.y * (p.x - a.x);
                if cross.abs() <= 1e-12 * len2 {
                    return Err(Error::NonConforming(format!(
                        "vertex {v} lies inside edge ({}, {})",
                        e.vertices[0], e.vertices[1]
                    )));
                }
            }
        }

        Ok(Mesh {
            vertices,
            triangles,
            edges,
            triangle_edges,
            boundary_vertex,
            boundary_edge,
            h,
            origin: MeshOrigin::Loaded,
        })
    }

    /// Structured `n x n` mesh of the unit square, each cell split along
    /// its lower-left to upper-right diagonal.
    pub fn unit_square(n: usize) -> Result<Mesh> {
        if n == 0 {
            return Err(Error::InvalidArgument("unit square needs n >= 1".into()));
        }
        let nf = n as f64;
        let mut vertices = Vec::with_capacity((n + 1) * (n + 1));
        for j in 0..=n {
            for i in 0..=n {
                vertices.push(Point2::new(i as f64 / nf, j as f64 / nf));
            }
        }
        let id = |i: usize, j: usize| j * (n + 1) + i;
        let mut triangles = Vec::with_capacity(2 * n * n);
        for j in 0..n {
            for i in 0..n {
                let ll = id(i, j);
                let lr = id(i + 1, j);
                let ur = id(i + 1, j + 1);
                let ul = id(i, j + 1);
                triangles.push([ll, lr, ur]);
                triangles.push([ll, ur, ul]);
            }
        }
        let mut mesh = Mesh::from_parts(vertices, triangles)?;
        mesh.origin = MeshOrigin::UnitSquare { n };
        Ok(mesh)
    }

    /// L-shaped domain with legs of length 2. At `n = 1` this is the six
    /// triangle mesh with five interior edges; larger `n` splits every
    /// coarse triangle into `n^2` similar ones.
    pub fn l_shape(n: usize) -> Result<Mesh> {
        if n == 0 {
            return Err(Error::InvalidArgument("L-shape needs n >= 1".into()));
        }
        let coarse_vertices = [
            (0, 0),
            (1, 0),
            (2, 0),
            (0, 1),
            (1, 1),
            (2, 1),
            (0, 2),
            (1, 2),
        ];
        let coarse_triangles: [[usize; 3]; 6] = [
            [3, 7, 6], // upper cell, split (0,1)-(1,2)
            [3, 4, 7],
            [1, 4, 3], // lower-left cell, split (1,0)-(0,1)
            [0, 1, 3],
            [1, 5, 4], // lower-right cell, split (1,0)-(2,1)
            [1, 2, 5],
        ];

        // Integer lattice coordinates scaled by n keep vertex dedup exact.
        let mut lookup: HashMap<(i64, i64), usize> = HashMap::new();
        let mut vertices = Vec::new();
        let mut vertex_id = |p: (i64, i64), vertices: &mut Vec<Point2<f64>>| -> usize {
            *lookup.entry(p).or_insert_with(|| {
                vertices.push(Point2::new(p.0 as f64 / n as f64, p.1 as f64 / n as f64));
                vertices.len() - 1
            })
        };
        let ni = n as i64;
        let mut triangles = Vec::with_capacity(6 * n * n);
        for tri in &coarse_triangles {
            let a = coarse_vertices[tri[0]];
            let b = coarse_vertices[tri[1]];
            let c = coarse_vertices[tri[2]];
            let lattice = |i: i64, j: i64| {
                (
                    a.0 * ni + i * (b.0 - a.0) + j * (c.0 - a.0),
                    a.1 * ni + i * (b.1 - a.1) + j * (c.1 - a.1),
                )
            };
            for j in 0..ni {
                for i in 0..(ni - j) {
                    let p0 = vertex_id(lattice(i, j), &mut vertices);
                    let p1 = vertex_id(lattice(i + 1, j), &mut vertices);
                    let p2 = vertex_id(lattice(i, j + 1), &mut vertices);
                    triangles.push([p0, p1, p2]);
                    if i + j + 1 < ni {
                        let p3 = vertex_id(lattice(i + 1, j + 1), &mut vertices);
                        triangles.push([p1, p3, p2]);
                    }
                }
            }
        }
        let mut mesh = Mesh::from_parts(vertices, triangles)?;
        mesh.origin = MeshOrigin::LShape { n };
        Ok(mesh)
    }

    /// Parses the `nnem-mesh v1` text format. Declared vertex boundary flags
    /// must agree with the flags implied by edge adjacency.
    pub fn load(text: &str) -> Result<Mesh> {
        let lines: Vec<(usize, &str)> = text
            .lines()
            .enumerate()
            .map(|(i, l)| (i + 1, l.trim()))
            .filter(|(_, l)| !l.is_empty())
            .collect();
        let last_line = text.lines().count().max(1);
        let parse_err = |line: usize, message: String| Error::MeshParse { line, message };
        let mut cursor = 0usize;
        let mut next = |what: &str| -> Result<(usize, &str)> {
            let item = lines
                .get(cursor)
                .copied()
                .ok_or_else(|| parse_err(last_line, format!("unexpected end of file, expected {what}")))?;
            cursor += 1;
            Ok(item)
        };

        let (line, header) = next("header")?;
        if header != MESH_FORMAT_HEADER {
            return Err(parse_err(line, format!("expected `{MESH_FORMAT_HEADER}`, found `{header}`")));
        }

        let section = |(line, l): (usize, &str), keyword: &str| -> Result<usize> {
            let tok: Vec<&str> = l.split_whitespace().collect();
            if tok.len() != 2 || tok[0] != keyword {
                return Err(parse_err(line, format!("expected `{keyword} <count>`")));
            }
            tok[1]
                .parse::<usize>()
                .map_err(|_| parse_err(line, format!("bad {keyword} count `{}`", tok[1])))
        };

        let nv = section(next("vertices section")?, "vertices")?;
        let mut vertices = Vec::with_capacity(nv);
        let mut flags = Vec::with_capacity(nv);
        for _ in 0..nv {
            let (line, l) = next("vertex record")?;
            let tok: Vec<&str> = l.split_whitespace().collect();
            if tok.len() != 3 {
                return Err(parse_err(line, "expected `x y b`".into()));
            }
            let coord = |s: &str| -> Result<f64> {
                s.parse::<f64>()
                    .ok()
                    .filter(|x| x.is_finite())
                    .ok_or_else(|| parse_err(line, format!("bad coordinate `{s}`")))
            };
            let b = match tok[2] {
                "0" => false,
                "1" => true,
                other => return Err(parse_err(line, format!("boundary flag must be 0 or 1, got `{other}`"))),
            };
            vertices.push(Point2::new(coord(tok[0])?, coord(tok[1])?));
            flags.push(b);
        }

        let nt = section(next("triangles section")?, "triangles")?;
        let mut triangles = Vec::with_capacity(nt);
        for _ in 0..nt {
            let (line, l) = next("triangle record")?;
            let tok: Vec<&str> = l.split_whitespace().collect();
            if tok.len() != 3 {
                return Err(parse_err(line, "expected `i j k`".into()));
            }
            let mut tri = [0usize; 3];
            for k in 0..3 {
                tri[k] = tok[k]
                    .parse()
                    .map_err(|_| parse_err(line, format!("bad vertex index `{}`", tok[k])))?;
                if tri[k] >= nv {
                    return Err(parse_err(line, format!("vertex index {} out of range", tri[k])));
                }
            }
            triangles.push(tri);
        }
        if let Ok((line, _)) = next("end of file") {
            return Err(parse_err(line, "trailing content after triangles".into()));
        }

        let mesh = Mesh::from_parts(vertices, triangles)?;
        let bad: Vec<usize> = (0..nv).filter(|&v| flags[v] != mesh.boundary_vertex[v]).collect();
        if !bad.is_empty() {
            return Err(Error::BoundaryFlags(format!(
                "declared flags disagree with edge adjacency at vertices {bad:?}"
            )));
        }
        Ok(mesh)
    }

    /// Serializes to `nnem-mesh v1` with 17 significant digits.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        writeln!(s, "{MESH_FORMAT_HEADER}").unwrap();
        writeln!(s, "vertices {}", self.vertices.len()).unwrap();
        for (p, &b) in self.vertices.iter().zip(&self.boundary_vertex) {
            writeln!(s, "{:.16e} {:.16e} {}", p.x, p.y, b as u8).unwrap();
        }
        writeln!(s, "triangles {}", self.triangles.len()).unwrap();
        for t in &self.triangles {
            writeln!(s, "{} {} {}", t[0], t[1], t[2]).unwrap();
        }
        s
    }

    pub fn n_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn n_triangles(&self) -> usize {
        self.triangles.len()
    }

    pub fn n_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn triangle_vertices(&self, t: usize) -> [Point2<f64>; 3] {
        let tri = self.triangles[t];
        [self.vertices[tri[0]], self.vertices[tri[1]], self.vertices[tri[2]]]
    }

    pub fn triangle_area(&self, t: usize) -> f64 {
        let [a, b, c] = self.triangle_vertices(t);
        signed_area(&a, &b, &c)
    }

    pub fn area(&self) -> f64 {
        (0..self.n_triangles()).map(|t| self.triangle_area(t)).sum()
    }

    /// Finds a triangle containing `p` and the barycentric coordinates of
    /// `p` in it. Linear scan; the first triangle wins on shared edges.
    pub fn locate(&self, p: &Point2<f64>) -> Option<(usize, [f64; 3])> {
        let mut best: Option<(usize, [f64; 3], f64)> = None;
        for t in 0..self.n_triangles() {
            let lam = barycentric(&self.triangle_vertices(t), p).ok()?;
            let worst = lam.iter().cloned().fold(f64::INFINITY, f64::min);
            if worst >= -1e-12 {
                return Some((t, lam));
            }
            if best.as_ref().is_none_or(|b| worst > b.2) {
                best = Some((t, lam, worst));
            }
        }
        best.filter(|b| b.2 >= -1e-9).map(|b| (b.0, b.1))
    }

    /// Smallest interior angle over all triangles, in radians.
    pub fn min_angle(&self) -> f64 {
        let mut min = f64::INFINITY;
        for t in 0..self.n_triangles() {
            let v = self.triangle_vertices(t);
            for k in 0..3 {
                let a = v[(k + 1) % 3] - v[k];
                let b = v[(k + 2) % 3] - v[k];
                let cos = (a.dot(&b) / (a.norm() * b.norm())).clamp(-1.0, 1.0);
                min = min.min(cos.acos());
            }
        }
        min
    }

    /// Largest ratio of triangle diameter to inscribed-circle diameter.
    pub fn shape_regularity(&self) -> f64 {
        (0..self.n_triangles())
            .map(|t| {
                let v = self.triangle_vertices(t);
                let l: Vec<f64> = (0..3).map(|k| (v[(k + 1) % 3] - v[k]).norm()).collect();
                let perimeter: f64 = l.iter().sum();
                let inradius = 2.0 * self.triangle_area(t) / perimeter;
                l.iter().cloned().fold(0.0, f64::max) / (2.0 * inradius)
            })
            .fold(0.0, f64::max)
    }

    /// Checks every structural invariant of an already built mesh.
    pub fn validate(&self) -> Result<()> {
        let rebuilt = Mesh::from_parts(self.vertices.clone(), self.triangles.clone())?;
        if rebuilt != *self {
            return Err(Error::NonConforming("stored connectivity is stale".into()));
        }
        Ok(())
    }
}

/// Barycentric coordinates of `p` with respect to triangle `v`.
pub fn barycentric(v: &[Point2<f64>; 3], p: &Point2<f64>) -> Result<[f64; 3]> {
    let area2 = 2.0 * signed_area(&v[0], &v[1], &v[2]);
    let scale = (v[1] - v[0]).norm_squared().max((v[2] - v[0]).norm_squared());
    if area2.abs() <= 2.0 * DEGENERACY_TOLERANCE * scale {
        return Err(Error::InvalidArgument("degenerate triangle".into()));
    }
    let l1 = 2.0 * signed_area(p, &v[1], &v[2]) / area2;
    let l2 = 2.0 * signed_area(&v[0], p, &v[2]) / area2;
    let l3 = 2.0 * signed_area(&v[0], &v[1], p) / area2;
    Ok([l1, l2, l3])
}

/// Constant gradients of the three barycentric coordinates.
pub fn barycentric_gradients(v: &[Point2<f64>; 3]) -> Result<[Vector2<f64>; 3]> {
    let area2 = 2.0 * signed_area(&v[0], &v[1], &v[2]);
    let scale = (v[1] - v[0]).norm_squared().max((v[2] - v[0]).norm_squared());
    if area2.abs() <= 2.0 * DEGENERACY_TOLERANCE * scale {
        return Err(Error::InvalidArgument("degenerate triangle".into()));
    }
    // grad(lambda_k) is the inward normal of the opposite edge over twice the area.
    let grad = |a: &Point2<f64>, b: &Point2<f64>| Vector2::new(a.y - b.y, b.x - a.x) / area2;
    Ok([grad(&v[1], &v[2]), grad(&v[2], &v[0]), grad(&v[0], &v[1])])
}

/// Maps barycentric coordinates to the physical point.
pub fn to_physical(v: &[Point2<f64>; 3], lam: &[f64; 3]) -> Point2<f64> {
    Point2::new(
        lam[0] * v[0].x + lam[1] * v[1].x + lam[2] * v[2].x,
        lam[0] * v[0].y + lam[1] * v[1].y + lam[2] * v[2].y,
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PatchKind {
    Vertex,
    Edge,
    Element,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PatchMember {
    pub triangle: usize,
    /// Triangle-local vertex indices in patch numbering. For a vertex
    /// patch `local[0]` is the patch vertex; for an edge patch `local[1]`
    /// and `local[2]` are the edge endpoints.
    pub local: [usize; 3],
}

#[derive(Debug, Clone, PartialEq)]
pub struct Patch {
    pub kind: PatchKind,
    pub members: Vec<PatchMember>,
    pub diameter: f64,
}

impl Patch {
    pub fn member(&self, triangle: usize) -> Option<&PatchMember> {
        self.members.iter().find(|m| m.triangle == triangle)
    }

    pub fn contains(&self, triangle: usize) -> bool {
        self.member(triangle).is_some()
    }

    pub fn triangles(&self) -> impl Iterator<Item = usize> + '_ {
        self.members.iter().map(|m| m.triangle)
    }
}

#[derive(Debug, Clone)]
pub struct Patches {
    pub vertex: Vec<Patch>,
    pub edge: Vec<Patch>,
    pub element: Vec<Patch>,
}

fn patch_diameter(mesh: &Mesh, members: &[PatchMember]) -> f64 {
    let mut pts: Vec<usize> = members
        .iter()
        .flat_map(|m| mesh.triangles[m.triangle])
        .collect();
    pts.sort_unstable();
    pts.dedup();
    let mut d: f64 = 0.0;
    for (i, &a) in pts.iter().enumerate() {
        for &b in &pts[i + 1..] {
            d = d.max((mesh.vertices[a] - mesh.vertices[b]).norm());
        }
    }
    d
}

/// Vertex, edge and element patches with their local vertex numbering.
pub fn build_patches(mesh: &Mesh) -> Patches {
    let mut vertex_members: Vec<Vec<PatchMember>> = vec![Vec::new(); mesh.n_vertices()];
    for (t, tri) in mesh.triangles.iter().enumerate() {
        for k in 0..3 {
            vertex_members[tri[k]].push(PatchMember {
                triangle: t,
                local: [k, (k + 1) % 3, (k + 2) % 3],
            });
        }
    }
    let vertex = vertex_members
        .into_iter()
        .map(|members| Patch {
            kind: PatchKind::Vertex,
            diameter: patch_diameter(mesh, &members),
            members,
        })
        .collect();

    let edge = mesh
        .edges
        .iter()
        .map(|e| {
            let members: Vec<PatchMember> = e
                .triangles
                .iter()
                .map(|&t| {
                    let tri = mesh.triangles[t];
                    let a = tri.iter().position(|&v| v == e.vertices[0]).unwrap();
                    let b = tri.iter().position(|&v| v == e.vertices[1]).unwrap();
                    PatchMember { triangle: t, local: [3 - a - b, a, b] }
                })
                .collect();
            Patch {
                kind: PatchKind::Edge,
                diameter: patch_diameter(mesh, &members),
                members,
            }
        })
        .collect();

    let element = (0..mesh.n_triangles())
        .map(|t| {
            let members = vec![PatchMember { triangle: t, local: [0, 1, 2] }];
            Patch {
                kind: PatchKind::Element,
                diameter: patch_diameter(mesh, &members),
                members,
            }
        })
        .collect();

    Patches { vertex, edge, element }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn reference() -> [Point2<f64>; 3] {
        [Point2::new(0.0, 0.0), Point2::new(1.0, 0.0), Point2::new(0.0, 1.0)]
    }

    #[test]
    fn unit_square_counts() {
        let m = Mesh::unit_square(2).unwrap();
        assert_eq!(m.n_vertices(), 9);
        assert_eq!(m.n_triangles(), 8);
        assert_relative_eq!(m.h, 2f64.sqrt() / 2.0, epsilon = 1e-15);
        let m = Mesh::unit_square(1).unwrap();
        assert_eq!((m.n_vertices(), m.n_triangles()), (4, 2));
        assert_relative_eq!(m.h, 2f64.sqrt(), epsilon = 1e-15);
        let m = Mesh::unit_square(8).unwrap();
        assert_relative_eq!(m.h, 2f64.sqrt() / 8.0, epsilon = 1e-15);
        assert!(Mesh::unit_square(0).is_err());
    }

    #[test]
    fn unit_square_boundary_flags() {
        let m = Mesh::unit_square(3).unwrap();
        for (p, &b) in m.vertices.iter().zip(&m.boundary_vertex) {
            let on = p.x == 0.0 || p.y == 0.0 || p.x == 1.0 || p.y == 1.0;
            assert_eq!(on, b);
        }
        assert_eq!(m.boundary_edge.iter().filter(|&&b| b).count(), 12);
    }

    #[test]
    fn refinement_halves_h() {
        for n in 1..6 {
            let a = Mesh::unit_square(n).unwrap();
            let b = Mesh::unit_square(2 * n).unwrap();
            assert_relative_eq!(b.h, a.h / 2.0, max_relative = 1e-15);
        }
    }

    #[test]
    fn l_shape_coarse_topology() {
        let m = Mesh::l_shape(1).unwrap();
        assert_eq!(m.n_vertices(), 8);
        assert_eq!(m.n_triangles(), 6);
        assert_eq!(m.edges.iter().filter(|e| !e.is_boundary()).count(), 5);
        assert_eq!(m.boundary_vertex.iter().filter(|&&b| !b).count(), 0);
        assert_relative_eq!(m.area(), 3.0, epsilon = 1e-14);
        assert!(Mesh::l_shape(0).is_err());
    }

    #[test]
    fn l_shape_refined() {
        let m = Mesh::l_shape(2).unwrap();
        assert_eq!(m.n_triangles(), 24);
        m.validate().unwrap();
        let m = Mesh::l_shape(3).unwrap();
        assert_eq!(m.n_triangles(), 54);
        assert_relative_eq!(m.area(), 3.0, epsilon = 1e-13);
    }

    #[test]
    fn generated_meshes_validate() {
        for n in [1, 2, 5] {
            Mesh::unit_square(n).unwrap().validate().unwrap();
            Mesh::l_shape(n).unwrap().validate().unwrap();
        }
    }

    #[test]
    fn text_round_trip() {
        let m = Mesh::unit_square(2).unwrap();
        let back = Mesh::load(&m.to_text()).unwrap();
        assert_eq!(m, back);
        let m = Mesh::l_shape(3).unwrap();
        assert_eq!(m, Mesh::load(&m.to_text()).unwrap());
    }

    #[test]
    fn load_rejects_clockwise_triangle() {
        let text = "nnem-mesh v1\nvertices 4\n0 0 1\n1 0 1\n1 1 1\n0 1 1\ntriangles 2\n0 1 2\n0 3 2\n";
        match Mesh::load(text) {
            Err(Error::Orientation { triangle, .. }) => assert_eq!(triangle, 1),
            other => panic!("expected orientation error, got {other:?}"),
        }
    }

    #[test]
    fn load_rejects_wrong_boundary_flags() {
        let m = Mesh::unit_square(2).unwrap();
        let text = m.to_text().replace("5.0000000000000000e-1 5.0000000000000000e-1 0", "5.0000000000000000e-1 5.0000000000000000e-1 1");
        assert!(matches!(Mesh::load(&text), Err(Error::BoundaryFlags(_))));
    }

    #[test]
    fn load_rejects_hanging_node() {
        // Two cells on the left, one big triangle pair on the right sharing a split edge.
        let text = "nnem-mesh v1\nvertices 6\n0 0 1\n1 0 1\n1 1 1\n0 1 1\n1 0.5 1\n2 0.5 1\n\
                    triangles 4\n0 1 4\n0 4 2\n0 2 3\n1 5 2\n";
        assert!(matches!(Mesh::load(text), Err(Error::NonConforming(_))));
    }

    #[test]
    fn load_reports_line_numbers() {
        let text = "nnem-mesh v1\nvertices 1\n0 zero 1\ntriangles 0\n";
        match Mesh::load(text) {
            Err(Error::MeshParse { line, .. }) => assert_eq!(line, 3),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn barycentric_examples() {
        let v = reference();
        let l = barycentric(&v, &Point2::new(0.0, 0.0)).unwrap();
        assert_eq!(l, [1.0, 0.0, 0.0]);
        let l = barycentric(&v, &Point2::new(1.0 / 3.0, 1.0 / 3.0)).unwrap();
        for x in l {
            assert_relative_eq!(x, 1.0 / 3.0, epsilon = 1e-15);
        }
        let l = barycentric(&v, &Point2::new(0.5, 0.5)).unwrap();
        assert_relative_eq!(l[0], 0.0, epsilon = 1e-15);
        assert_relative_eq!(l[1], 0.5, epsilon = 1e-15);
        assert_relative_eq!(l[2], 0.5, epsilon = 1e-15);
        let flat = [Point2::new(0.0, 0.0), Point2::new(1.0, 0.0), Point2::new(2.0, 0.0)];
        assert!(barycentric(&flat, &Point2::new(0.0, 0.0)).is_err());
        assert!(barycentric_gradients(&flat).is_err());
    }

    #[test]
    fn barycentric_gradient_examples() {
        let g = barycentric_gradients(&reference()).unwrap();
        assert_eq!(g[0], Vector2::new(-1.0, -1.0));
        assert_eq!(g[1], Vector2::new(1.0, 0.0));
        assert_eq!(g[2], Vector2::new(0.0, 1.0));
        let scaled = reference().map(|p| Point2::new(2.0 * p.x, 2.0 * p.y));
        let gs = barycentric_gradients(&scaled).unwrap();
        for k in 0..3 {
            assert_relative_eq!(gs[k], g[k] / 2.0, epsilon = 1e-15);
        }
    }

    #[test]
    fn center_vertex_patch_has_six_triangles() {
        let m = Mesh::unit_square(2).unwrap();
        let p = build_patches(&m);
        let center = m.vertices.iter().position(|v| *v == Point2::new(0.5, 0.5)).unwrap();
        // Oracle: enumerate triangles touching the vertex directly.
        let direct = m.triangles.iter().filter(|t| t.contains(&center)).count();
        assert_eq!(direct, 6);
        assert_eq!(p.vertex[center].members.len(), 6);
    }

    #[test]
    fn patch_local_numbering() {
        let m = Mesh::l_shape(2).unwrap();
        let p = build_patches(&m);
        for (v, patch) in p.vertex.iter().enumerate() {
            for mem in &patch.members {
                assert_eq!(m.triangles[mem.triangle][mem.local[0]], v);
            }
            let direct: Vec<usize> = (0..m.n_triangles()).filter(|&t| m.triangles[t].contains(&v)).collect();
            assert_eq!(patch.triangles().collect::<Vec<_>>(), direct);
        }
        for (e, patch) in p.edge.iter().enumerate() {
            let edge = &m.edges[e];
            assert_eq!(patch.members.len(), if edge.is_boundary() { 1 } else { 2 });
            for mem in &patch.members {
                let tri = m.triangles[mem.triangle];
                assert_eq!(tri[mem.local[1]], edge.vertices[0]);
                assert_eq!(tri[mem.local[2]], edge.vertices[1]);
            }
        }
    }

    #[test]
    fn patch_diameter_is_max_vertex_distance() {
        let m = Mesh::unit_square(2).unwrap();
        let p = build_patches(&m);
        assert_relative_eq!(p.element[0].diameter, 2f64.sqrt() / 2.0, epsilon = 1e-15);
        let center = m.vertices.iter().position(|v| *v == Point2::new(0.5, 0.5)).unwrap();
        assert_relative_eq!(p.vertex[center].diameter, 2f64.sqrt(), epsilon = 1e-15);
    }

    #[test]
    fn quality_metrics() {
        let m = Mesh::unit_square(4).unwrap();
        assert_relative_eq!(m.min_angle(), std::f64::consts::FRAC_PI_4, epsilon = 1e-12);
        assert!(m.shape_regularity() > 1.0);
    }

    #[test]
    fn locate_finds_containing_triangle() {
        let m = Mesh::unit_square(3).unwrap();
        let p = Point2::new(0.71, 0.12);
        let (t, lam) = m.locate(&p).unwrap();
        assert!(lam.iter().all(|&l| l >= -1e-12));
        let back = to_physical(&m.triangle_vertices(t), &lam);
        assert_relative_eq!(back, p, epsilon = 1e-14);
        assert!(m.locate(&Point2::new(1.5, 0.5)).is_none());
    }
}
