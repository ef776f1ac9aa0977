//! Triangulations of the imaging domain and the phantoms drawn on them.
//!
//! The domain is a disk centered at the origin. Its boundary loop is split
//! into `n_arcs` labeled arcs, one per excitation coil.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::data::io::LineReader;
use crate::fem::RealField;
use crate::{Error, Result};

/// A boundary edge, oriented so that the domain lies to its left.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BoundaryEdge {
    pub nodes: [usize; 2],
    pub arc: usize,
}

/// Immutable 2D triangulation with a labeled boundary loop.
#[derive(Debug, Clone, PartialEq)]
pub struct Mesh {
    nodes: Vec<[f64; 2]>,
    triangles: Vec<[usize; 3]>,
    /// Boundary edges in loop order (counterclockwise), starting at the
    /// first edge of arc 0.
    boundary_edges: Vec<BoundaryEdge>,
    boundary_position: Vec<Option<usize>>,
    n_arcs: usize,
    h: f64,
}

pub(crate) fn signed_area(a: [f64; 2], b: [f64; 2], c: [f64; 2]) -> f64 {
    0.5 * ((b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1]))
}

fn dist(a: [f64; 2], b: [f64; 2]) -> f64 {
    (a[0] - b[0]).hypot(a[1] - b[1])
}

impl Mesh {
    /// Builds a mesh and checks every structural invariant.
    ///
    /// `boundary_edges` may be given in any order and orientation; they are
    /// re-oriented counterclockwise and sorted into loop order. Each edge
    /// carries an arc label; labels must be `0..n_arcs` and each label must
    /// occupy one contiguous run of the loop.
    pub fn new(
        nodes: Vec<[f64; 2]>,
        triangles: Vec<[usize; 3]>,
        boundary_edges: Vec<BoundaryEdge>,
    ) -> Result<Self> {
        let n = nodes.len();
        if n < 3 || triangles.is_empty() {
            return Err(Error::InvalidMesh(
                "mesh needs at least one triangle".into(),
            ));
        }
        let mut h: f64 = 0.0;
        let mut edge_count: HashMap<(usize, usize), (usize, [usize; 2])> = HashMap::new();
        for (t, tri) in triangles.iter().enumerate() {
            if tri.iter().any(|&i| i >= n) {
                return Err(Error::InvalidMesh(format!(
                    "triangle {t} has an out-of-range node"
                )));
            }
            let area = signed_area(nodes[tri[0]], nodes[tri[1]], nodes[tri[2]]);
            if !(area > 0.0) {
                return Err(Error::InvalidMesh(format!(
                    "triangle {t} has non-positive signed area {area:e}"
                )));
            }
            for e in 0..3 {
                let (a, b) = (tri[e], tri[(e + 1) % 3]);
                h = h.max(dist(nodes[a], nodes[b]));
                let entry = edge_count
                    .entry((a.min(b), a.max(b)))
                    .or_insert((0, [a, b]));
                entry.0 += 1;
            }
        }
        if let Some((e, _)) = edge_count.iter().find(|(_, (c, _))| *c > 2) {
            return Err(Error::InvalidMesh(format!(
                "edge {e:?} shared by more than two triangles"
            )));
        }
        // Directed boundary edges of the triangulation, keyed by start node.
        let mut next: HashMap<usize, usize> = HashMap::new();
        for (_, (count, dir)) in edge_count.iter() {
            if *count == 1 && next.insert(dir[0], dir[1]).is_some() {
                return Err(Error::InvalidMesh(format!(
                    "boundary is not a simple loop at node {}",
                    dir[0]
                )));
            }
        }
        if next.len() != boundary_edges.len() {
            return Err(Error::InvalidMesh(format!(
                "{} boundary edges given, triangulation has {}",
                boundary_edges.len(),
                next.len()
            )));
        }
        let mut labels: HashMap<(usize, usize), usize> = HashMap::new();
        for e in &boundary_edges {
            let [a, b] = e.nodes;
            let key = (a.min(b), a.max(b));
            match edge_count.get(&key) {
                Some((1, _)) => {}
                _ => {
                    return Err(Error::InvalidMesh(format!(
                        "edge ({a}, {b}) is not on the boundary of the triangulation"
                    )))
                }
            }
            if labels.insert(key, e.arc).is_some() {
                return Err(Error::InvalidMesh(format!(
                    "boundary edge ({a}, {b}) listed twice"
                )));
            }
        }

        // Walk the loop.
        let [a0, b0] = boundary_edges[0].nodes;
        let start = if next.get(&a0) == Some(&b0) { a0 } else { b0 };
        let mut ordered = Vec::with_capacity(next.len());
        let mut a = start;
        loop {
            let b = *next
                .get(&a)
                .ok_or_else(|| Error::InvalidMesh(format!("boundary loop is open at node {a}")))?;
            let arc = labels[&(a.min(b), a.max(b))];
            ordered.push(BoundaryEdge { nodes: [a, b], arc });
            a = b;
            if a == start || ordered.len() > next.len() {
                break;
            }
        }
        if ordered.len() != next.len() || a != start {
            return Err(Error::InvalidMesh(
                "boundary edges do not form a single closed loop".into(),
            ));
        }

        let n_arcs = ordered.iter().map(|e| e.arc).max().unwrap_or(0) + 1;
        let m = ordered.len();
        // Rotate so the loop starts where arc 0 begins.
        if n_arcs > 1 {
            let begin = (0..m)
                .find(|&i| ordered[i].arc == 0 && ordered[(i + m - 1) % m].arc != 0)
                .ok_or_else(|| Error::InvalidMesh("arc 0 covers the whole loop".into()))?;
            ordered.rotate_left(begin);
        }
        let mut runs = vec![0usize; n_arcs];
        for i in 0..m {
            if i == 0 || ordered[i].arc != ordered[i - 1].arc {
                runs[ordered[i].arc] += 1;
            }
        }
        if let Some(label) = runs.iter().position(|&r| r != 1) {
            return Err(Error::InvalidMesh(format!(
                "arc {label} is {} (each arc must be one contiguous, non-empty run)",
                if runs[label] == 0 { "empty" } else { "split" }
            )));
        }

        let mut boundary_position = vec![None; n];
        for (i, e) in ordered.iter().enumerate() {
            boundary_position[e.nodes[0]] = Some(i);
        }
        Ok(Mesh {
            nodes,
            triangles,
            boundary_edges: ordered,
            boundary_position,
            n_arcs,
            h,
        })
    }

    pub fn nodes(&self) -> &[[f64; 2]] {
        &self.nodes
    }

    pub fn n_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn triangles(&self) -> &[[usize; 3]] {
        &self.triangles
    }

    /// Boundary edges in counterclockwise loop order.
    pub fn boundary_edges(&self) -> &[BoundaryEdge] {
        &self.boundary_edges
    }

    /// Boundary nodes in loop order; node `i` is the start of edge `i`.
    pub fn boundary_nodes(&self) -> Vec<usize> {
        self.boundary_edges.iter().map(|e| e.nodes[0]).collect()
    }

    pub fn n_boundary(&self) -> usize {
        self.boundary_edges.len()
    }

    /// Position of a node in the boundary loop, if it lies on the boundary.
    pub fn boundary_position(&self, node: usize) -> Option<usize> {
        self.boundary_position[node]
    }

    pub fn is_boundary(&self, node: usize) -> bool {
        self.boundary_position[node].is_some()
    }

    pub fn n_arcs(&self) -> usize {
        self.n_arcs
    }

    /// Maximum edge length.
    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn triangle_area(&self, t: usize) -> f64 {
        let [a, b, c] = self.triangles[t];
        signed_area(self.nodes[a], self.nodes[b], self.nodes[c])
    }

    pub fn area(&self) -> f64 {
        (0..self.triangles.len())
            .map(|t| self.triangle_area(t))
            .sum()
    }

    pub fn edge_length(&self, e: &BoundaryEdge) -> f64 {
        dist(self.nodes[e.nodes[0]], self.nodes[e.nodes[1]])
    }

    pub fn boundary_edge_lengths(&self) -> Vec<f64> {
        self.boundary_edges
            .iter()
            .map(|e| self.edge_length(e))
            .collect()
    }

    pub fn perimeter(&self) -> f64 {
        self.boundary_edge_lengths().iter().sum()
    }

    pub fn arc_length(&self, arc: usize) -> f64 {
        self.boundary_edges
            .iter()
            .filter(|e| e.arc == arc)
            .map(|e| self.edge_length(e))
            .sum()
    }

    /// Largest distance of a boundary node from the origin; the radius for
    /// disk meshes.
    pub fn extent(&self) -> f64 {
        self.boundary_edges
            .iter()
            .map(|e| {
                let p = self.nodes[e.nodes[0]];
                p[0].hypot(p[1])
            })
            .fold(0.0, f64::max)
    }

    /// Writes the plain-text mesh format.
    pub fn write<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "# tscm-mesh v1")?;
        writeln!(
            w,
            "nodes {} triangles {} bedges {}",
            self.nodes.len(),
            self.triangles.len(),
            self.boundary_edges.len()
        )?;
        for p in &self.nodes {
            writeln!(w, "{:e} {:e}", p[0], p[1])?;
        }
        for t in &self.triangles {
            writeln!(w, "{} {} {}", t[0], t[1], t[2])?;
        }
        for e in &self.boundary_edges {
            writeln!(w, "{} {} {}", e.nodes[0], e.nodes[1], e.arc)?;
        }
        Ok(())
    }

    /// Reads the plain-text mesh format. The version comment line is
    /// optional so hand-written files with only the counts header load too.
    pub fn read<R: BufRead>(r: R) -> Result<Self> {
        let mut lines = LineReader::new(r);
        let (mut no, mut line) = lines.next_line()?;
        if line.starts_with('#') {
            if line.trim() != "# tscm-mesh v1" {
                return Err(Error::Version {
                    expected: "# tscm-mesh v1".into(),
                    found: line,
                });
            }
            (no, line) = lines.next_line()?;
        }
        let tok: Vec<&str> = line.split_whitespace().collect();
        if tok.len() != 6 || tok[0] != "nodes" || tok[2] != "triangles" || tok[4] != "bedges" {
            return Err(Error::parse(no, "expected `nodes N triangles T bedges B`"));
        }
        let count = |s: &str| {
            s.parse::<usize>()
                .map_err(|e| Error::parse(no, e.to_string()))
        };
        let (nn, nt, nb) = (count(tok[1])?, count(tok[3])?, count(tok[5])?);
        let mut nodes = Vec::with_capacity(nn);
        for _ in 0..nn {
            let v: [f64; 2] = lines.parse_fixed()?;
            nodes.push(v);
        }
        let mut triangles = Vec::with_capacity(nt);
        for _ in 0..nt {
            let v: [usize; 3] = lines.parse_fixed()?;
            triangles.push(v);
        }
        let mut bedges = Vec::with_capacity(nb);
        for _ in 0..nb {
            let v: [usize; 3] = lines.parse_fixed()?;
            bedges.push(BoundaryEdge {
                nodes: [v[0], v[1]],
                arc: v[2],
            });
        }
        Mesh::new(nodes, triangles, bedges)
    }
}

/// Ring-based triangulation of a disk centered at the origin.
///
/// Ring `j` sits at radius `j * radius / M` with `M = ceil(radius / target_h)`
/// and carries roughly `2 pi r_j / target_h` equally spaced nodes; adjacent
/// rings are stitched by advancing along whichever ring has the smaller next
/// angle. The boundary ring count is a multiple of `n_arcs` so every arc has
/// the same number of edges.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DiskMeshBuilder {
    pub radius: f64,
    pub target_h: f64,
    pub n_arcs: usize,
    /// Make every ring count a multiple of `n_arcs`, so that rotating by one
    /// arc maps the mesh onto itself.
    pub symmetric: bool,
}

impl DiskMeshBuilder {
    pub fn new(radius: f64, target_h: f64, n_arcs: usize) -> Self {
        DiskMeshBuilder {
            radius,
            target_h,
            n_arcs,
            symmetric: false,
        }
    }

    pub fn symmetric(mut self, yes: bool) -> Self {
        self.symmetric = yes;
        self
    }

    pub fn build(&self) -> Result<Mesh> {
        let DiskMeshBuilder {
            radius,
            target_h,
            n_arcs,
            symmetric,
        } = *self;
        if !(radius > 0.0) || !(target_h > 0.0) || target_h >= radius {
            return Err(Error::InvalidArgument(format!(
                "need 0 < target_h < radius, got target_h={target_h}, radius={radius}"
            )));
        }
        if n_arcs == 0 {
            return Err(Error::InvalidArgument("n_arcs must be at least 1".into()));
        }
        let n_bnd_raw = (2.0 * PI * radius / target_h).ceil() as usize;
        if n_bnd_raw < n_arcs {
            return Err(Error::InvalidArgument(format!(
                "target_h={target_h} gives {n_bnd_raw} boundary nodes, fewer than {n_arcs} arcs"
            )));
        }
        let round_up = |n: usize, m: usize| n.div_ceil(m) * m;
        // Ring spacing and arc spacing are kept below target_h so that the
        // diagonals created by stitching stay within 1.5 target_h.
        let spacing = 0.8 * target_h;
        let rings = (radius / spacing - 1e-9).ceil().max(1.0) as usize;
        let mut counts = Vec::with_capacity(rings);
        for j in 1..=rings {
            let r = radius * j as f64 / rings as f64;
            let mut c = ((2.0 * PI * r / spacing - 1e-9).ceil() as usize).max(6);
            if j == rings || symmetric {
                c = round_up(c, n_arcs);
            }
            counts.push(c);
        }

        let mut nodes = vec![[0.0, 0.0]];
        let mut offsets = Vec::with_capacity(rings);
        for (j, &c) in counts.iter().enumerate() {
            offsets.push(nodes.len());
            let r = radius * (j + 1) as f64 / rings as f64;
            for k in 0..c {
                let theta = 2.0 * PI * k as f64 / c as f64;
                nodes.push([r * theta.cos(), r * theta.sin()]);
            }
        }

        let mut triangles = Vec::new();
        let (c1, o1) = (counts[0], offsets[0]);
        for k in 0..c1 {
            triangles.push([0, o1 + k, o1 + (k + 1) % c1]);
        }
        for j in 1..rings {
            let (na, oa) = (counts[j - 1], offsets[j - 1]);
            let (nb, ob) = (counts[j], offsets[j]);
            let (mut i, mut k) = (0usize, 0usize);
            while i < na || k < nb {
                // Compare next angles (i+1)/na and (k+1)/nb exactly.
                let advance_inner = k == nb || (i < na && (i + 1) * nb < (k + 1) * na);
                if advance_inner {
                    triangles.push([oa + i % na, ob + k % nb, oa + (i + 1) % na]);
                    i += 1;
                } else {
                    triangles.push([oa + i % na, ob + k % nb, ob + (k + 1) % nb]);
                    k += 1;
                }
            }
        }

        let (nb, ob) = (counts[rings - 1], offsets[rings - 1]);
        let per_arc = nb / n_arcs;
        let bedges = (0..nb)
            .map(|k| BoundaryEdge {
                nodes: [ob + k, ob + (k + 1) % nb],
                arc: k / per_arc,
            })
            .collect();
        Mesh::new(nodes, triangles, bedges)
    }
}

/// Disk of the given radius centered at the origin, boundary split into
/// `n_arcs` equal arcs.
pub fn build_disk_mesh(radius: f64, target_h: f64, n_arcs: usize) -> Result<Mesh> {
    DiskMeshBuilder::new(radius, target_h, n_arcs).build()
}

/// Geometric building blocks of an inclusion set.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum Primitive {
    Disk {
        center: [f64; 2],
        radius: f64,
    },
    Annulus {
        center: [f64; 2],
        inner: f64,
        outer: f64,
    },
}

impl Primitive {
    /// Signed distance to the primitive's boundary, positive inside.
    pub fn signed_distance(&self, p: [f64; 2]) -> f64 {
        match *self {
            Primitive::Disk { center, radius } => radius - dist(p, center),
            Primitive::Annulus {
                center,
                inner,
                outer,
            } => {
                let rho = dist(p, center);
                (rho - inner).min(outer - rho)
            }
        }
    }

    pub fn area(&self) -> f64 {
        match *self {
            Primitive::Disk { radius, .. } => PI * radius * radius,
            Primitive::Annulus { inner, outer, .. } => PI * (outer * outer - inner * inner),
        }
    }

    pub fn perimeter(&self) -> f64 {
        match *self {
            Primitive::Disk { radius, .. } => 2.0 * PI * radius,
            Primitive::Annulus { inner, outer, .. } => 2.0 * PI * (inner + outer),
        }
    }

    fn center_and_outer(&self) -> ([f64; 2], f64) {
        match *self {
            Primitive::Disk { center, radius } => (center, radius),
            Primitive::Annulus { center, outer, .. } => (center, outer),
        }
    }
}

/// Two-phase conductivity: `sigma1` inside the union of inclusions,
/// `sigma2` elsewhere.
#[derive(Debug, Clone, PartialEq)]
pub struct PhantomSpec {
    pub inclusions: Vec<Primitive>,
    pub sigma1: f64,
    pub sigma2: f64,
}

impl PhantomSpec {
    pub fn new(inclusions: Vec<Primitive>, sigma1: f64, sigma2: f64) -> Self {
        PhantomSpec {
            inclusions,
            sigma1,
            sigma2,
        }
    }

    /// Checks the phantom against a disk domain of the given radius.
    pub fn validate(&self, domain_radius: f64, sigma_min: f64) -> Result<()> {
        if self.sigma1 == self.sigma2 {
            return Err(Error::InvalidArgument(
                "sigma1 must differ from sigma2".into(),
            ));
        }
        if !(self.sigma1 >= sigma_min && self.sigma2 >= sigma_min && sigma_min > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "phase conductivities must be >= sigma_min = {sigma_min} > 0"
            )));
        }
        for (i, p) in self.inclusions.iter().enumerate() {
            let ok = match *p {
                Primitive::Disk { radius, .. } => radius > 0.0,
                Primitive::Annulus { inner, outer, .. } => inner > 0.0 && outer > inner,
            };
            let (c, r) = p.center_and_outer();
            if !ok || c[0].hypot(c[1]) + r >= domain_radius {
                return Err(Error::InvalidArgument(format!(
                    "inclusion {i} is degenerate or not strictly inside the domain"
                )));
            }
        }
        Ok(())
    }

    /// Signed distance to the boundary of the inclusion union, or `None` if
    /// there are no inclusions.
    pub fn signed_distance(&self, p: [f64; 2]) -> Option<f64> {
        self.inclusions
            .iter()
            .map(|q| q.signed_distance(p))
            .reduce(f64::max)
    }

    pub fn contains(&self, p: [f64; 2]) -> bool {
        self.signed_distance(p).is_some_and(|d| d > 0.0)
    }

    pub fn conductivity(&self, p: [f64; 2]) -> f64 {
        if self.contains(p) {
            self.sigma1
        } else {
            self.sigma2
        }
    }

    /// Total inclusion area, assuming the primitives are disjoint.
    pub fn inclusion_area(&self) -> f64 {
        self.inclusions.iter().map(Primitive::area).sum()
    }
}

/// Node-wise exact two-phase conductivity.
pub fn indicator_field(mesh: &Mesh, phantom: &PhantomSpec) -> RealField {
    RealField::from_vec(
        mesh.nodes()
            .iter()
            .map(|&p| phantom.conductivity(p))
            .collect(),
    )
}

/// Node-wise signed distance to the inclusion boundary: positive inside,
/// negative outside. With no inclusions the field is the constant
/// `-extent(mesh)`.
pub fn signed_distance_field(mesh: &Mesh, phantom: &PhantomSpec) -> RealField {
    let far = -mesh.extent();
    RealField::from_vec(
        mesh.nodes()
            .iter()
            .map(|&p| phantom.signed_distance(p).unwrap_or(far))
            .collect(),
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn four_arc_mesh_is_valid() {
        let mesh = build_disk_mesh(1.0, 0.5, 4).unwrap();
        assert_eq!(mesh.n_arcs(), 4);
        for t in 0..mesh.triangles().len() {
            assert!(mesh.triangle_area(t) > 0.0);
        }
        let lengths: Vec<f64> = (0..4).map(|a| mesh.arc_length(a)).collect();
        for l in &lengths {
            assert!((l - lengths[0]).abs() < 1e-12);
        }
    }

    #[test]
    fn twenty_eight_coils() {
        let mesh = build_disk_mesh(1.0, 0.05, 28).unwrap();
        assert_eq!(mesh.n_arcs(), 28);
        assert_eq!(mesh.n_boundary() % 28, 0);
        assert!(mesh.h() <= 1.5 * 0.05, "h = {}", mesh.h());
    }

    #[test]
    fn arcs_equal_within_one_edge() {
        for &(h, n) in &[(0.3, 5), (0.1, 28), (0.07, 14)] {
            let mesh = build_disk_mesh(1.0, h, n).unwrap();
            let edge = mesh.boundary_edge_lengths().into_iter().fold(0.0, f64::max);
            let lens: Vec<f64> = (0..n).map(|a| mesh.arc_length(a)).collect();
            let (lo, hi) = lens
                .iter()
                .fold((f64::MAX, 0.0f64), |(lo, hi), &l| (lo.min(l), hi.max(l)));
            assert!(hi - lo <= edge);
        }
    }

    #[test]
    fn too_many_arcs_rejected() {
        assert!(build_disk_mesh(1.0, 0.9, 20).is_err());
        assert!(build_disk_mesh(1.0, 1.5, 2).is_err());
        assert!(build_disk_mesh(1.0, 0.5, 0).is_err());
    }

    #[test]
    fn h_is_max_edge() {
        let mesh = build_disk_mesh(1.0, 0.2, 4).unwrap();
        let mut h: f64 = 0.0;
        for t in mesh.triangles() {
            for e in 0..3 {
                h = h.max(dist(mesh.nodes()[t[e]], mesh.nodes()[t[(e + 1) % 3]]));
            }
        }
        assert_eq!(h, mesh.h());
        assert!(mesh.h() <= 1.5 * 0.2);
    }

    #[test]
    fn boundary_loop_is_closed_and_ccw() {
        let mesh = build_disk_mesh(1.0, 0.25, 3).unwrap();
        let edges = mesh.boundary_edges();
        for i in 0..edges.len() {
            assert_eq!(edges[i].nodes[1], edges[(i + 1) % edges.len()].nodes[0]);
        }
        // Counterclockwise: shoelace area of the boundary polygon is positive
        // and equals the mesh area.
        let poly: f64 = edges
            .iter()
            .map(|e| {
                let a = mesh.nodes()[e.nodes[0]];
                let b = mesh.nodes()[e.nodes[1]];
                0.5 * (a[0] * b[1] - b[0] * a[1])
            })
            .sum();
        assert!((poly - mesh.area()).abs() < 1e-12);
        assert_eq!(edges[0].arc, 0);
    }

    #[test]
    fn rejects_inverted_triangle() {
        let nodes = vec![[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]];
        let bedges = vec![
            BoundaryEdge {
                nodes: [0, 1],
                arc: 0,
            },
            BoundaryEdge {
                nodes: [1, 2],
                arc: 0,
            },
            BoundaryEdge {
                nodes: [2, 0],
                arc: 0,
            },
        ];
        assert!(Mesh::new(nodes.clone(), vec![[0, 1, 2]], bedges.clone()).is_ok());
        assert!(Mesh::new(nodes, vec![[0, 2, 1]], bedges).is_err());
    }

    #[test]
    fn rejects_split_arc() {
        let nodes = vec![[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]];
        let tris = vec![[0, 1, 2], [0, 2, 3]];
        let bedge = |a, b, arc| BoundaryEdge { nodes: [a, b], arc };
        let split = vec![
            bedge(0, 1, 0),
            bedge(1, 2, 1),
            bedge(2, 3, 0),
            bedge(3, 0, 1),
        ];
        assert!(Mesh::new(nodes.clone(), tris.clone(), split).is_err());
        let gap = vec![
            bedge(0, 1, 0),
            bedge(1, 2, 0),
            bedge(2, 3, 2),
            bedge(3, 0, 2),
        ];
        assert!(Mesh::new(nodes.clone(), tris.clone(), gap).is_err());
        let fine = vec![
            bedge(0, 1, 1),
            bedge(1, 2, 0),
            bedge(2, 3, 0),
            bedge(3, 0, 1),
        ];
        let mesh = Mesh::new(nodes, tris, fine).unwrap();
        assert_eq!(mesh.n_arcs(), 2);
        assert_eq!(mesh.boundary_edges()[0].nodes, [1, 2]);
    }

    #[test]
    fn text_round_trip() {
        let mesh = build_disk_mesh(1.0, 0.3, 6).unwrap();
        let mut buf = Vec::new();
        mesh.write(&mut buf).unwrap();
        let back = Mesh::read(buf.as_slice()).unwrap();
        assert_eq!(back, mesh);
        // Without the version line.
        let text = String::from_utf8(buf).unwrap();
        let stripped: String = text.lines().skip(1).map(|l| format!("{l}\n")).collect();
        assert_eq!(Mesh::read(stripped.as_bytes()).unwrap(), mesh);
        let truncated: String = text.lines().take(10).map(|l| format!("{l}\n")).collect();
        assert!(matches!(
            Mesh::read(truncated.as_bytes()),
            Err(Error::Parse { .. })
        ));
    }

    #[test]
    fn empty_phantom_fields() {
        let mesh = build_disk_mesh(1.0, 0.25, 4).unwrap();
        let ph = PhantomSpec::new(vec![], 20.0, 2.0);
        assert!(indicator_field(&mesh, &ph)
            .values()
            .iter()
            .all(|&v| v == 2.0));
        let sd = signed_distance_field(&mesh, &ph);
        assert!(sd.values().iter().all(|&v| (v + 1.0).abs() < 1e-12));
    }

    #[test]
    fn covering_disk_gives_sigma1() {
        let mesh = build_disk_mesh(1.0, 0.25, 4).unwrap();
        let ph = PhantomSpec::new(
            vec![Primitive::Disk {
                center: [0.0, 0.0],
                radius: 1.5,
            }],
            20.0,
            2.0,
        );
        assert!(indicator_field(&mesh, &ph)
            .values()
            .iter()
            .all(|&v| v == 20.0));
    }

    #[test]
    fn single_disk_signed_distance() {
        let mesh = build_disk_mesh(1.0, 0.25, 4).unwrap();
        let c = [0.0, 0.0];
        let r = 0.4;
        let ph = PhantomSpec::new(
            vec![Primitive::Disk {
                center: c,
                radius: r,
            }],
            20.0,
            2.0,
        );
        let sd = signed_distance_field(&mesh, &ph);
        assert!((sd[0] - r).abs() < 1e-15);
        for &b in &mesh.boundary_nodes() {
            let p = mesh.nodes()[b];
            assert!((sd[b] + (dist(p, c) - r)).abs() < 1e-12);
        }
    }

    #[test]
    fn annulus_hole_is_background() {
        let mesh = build_disk_mesh(1.0, 0.1, 4).unwrap();
        let ph = PhantomSpec::new(
            vec![Primitive::Annulus {
                center: [0.0, 0.0],
                inner: 0.3,
                outer: 0.6,
            }],
            20.0,
            2.0,
        );
        let f = indicator_field(&mesh, &ph);
        assert_eq!(f[0], 2.0);
        let sd = signed_distance_field(&mesh, &ph);
        assert!((sd[0] + 0.3).abs() < 1e-12);
    }

    #[test]
    fn phantom_validation() {
        let inside = PhantomSpec::new(
            vec![Primitive::Disk {
                center: [0.3, 0.0],
                radius: 0.5,
            }],
            20.0,
            2.0,
        );
        assert!(inside.validate(1.0, 0.01).is_ok());
        let poking_out = PhantomSpec::new(
            vec![Primitive::Disk {
                center: [0.6, 0.0],
                radius: 0.5,
            }],
            20.0,
            2.0,
        );
        assert!(poking_out.validate(1.0, 0.01).is_err());
        let equal = PhantomSpec::new(vec![], 2.0, 2.0);
        assert!(equal.validate(1.0, 0.01).is_err());
    }
}
