//! Conforming triangulations with region and boundary tags.
//!
//! A [`Mesh`] is immutable. Refinement ([`refine_bisect`], [`uniform_refine`])
//! returns a new mesh that keeps every coarse vertex at its old index and
//! appends new vertices, each recorded as the midpoint of a coarse edge. That
//! genealogy is what makes exact P1 prolongation possible.

mod build;
mod quality;
mod refine;

pub use build::{build_device_mesh, build_rectangle_mesh, StructuredGrid};
pub use quality::{mesh_quality, MeshQuality};
pub use refine::{refine_bisect, uniform_refine};

use crate::error::{Error, Result};
use crate::math;
use alloc::format;
use alloc::vec::Vec;
use core::sync::atomic::{AtomicU64, Ordering};

/// Position in nanometres.
pub type Point = [f64; 2];

/// Sentinel for the missing second neighbour of a boundary edge.
pub const NO_ELEMENT: u32 = u32::MAX;

static NEXT_MESH_ID: AtomicU64 = AtomicU64::new(1);

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum RegionTag {
    Silicon,
    Oxide,
}

impl RegionTag {
    pub fn name(self) -> &'static str {
        match self {
            RegionTag::Silicon => "silicon",
            RegionTag::Oxide => "oxide",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        match s {
            "silicon" => Some(RegionTag::Silicon),
            "oxide" => Some(RegionTag::Oxide),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum BoundaryTag {
    DirichletSource,
    DirichletDrain,
    DirichletGate,
    Neumann,
    Interface,
}

impl BoundaryTag {
    pub fn is_dirichlet(self) -> bool {
        matches!(
            self,
            BoundaryTag::DirichletSource | BoundaryTag::DirichletDrain | BoundaryTag::DirichletGate
        )
    }

    pub fn name(self) -> &'static str {
        match self {
            BoundaryTag::DirichletSource => "source",
            BoundaryTag::DirichletDrain => "drain",
            BoundaryTag::DirichletGate => "gate",
            BoundaryTag::Neumann => "neumann",
            BoundaryTag::Interface => "interface",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        match s {
            "source" => Some(BoundaryTag::DirichletSource),
            "drain" => Some(BoundaryTag::DirichletDrain),
            "gate" => Some(BoundaryTag::DirichletGate),
            "neumann" => Some(BoundaryTag::Neumann),
            "interface" => Some(BoundaryTag::Interface),
            _ => None,
        }
    }
}

/// A triangle. Local edge `k` is the edge opposite local vertex `k`.
#[derive(Debug, Clone, PartialEq)]
pub struct Element {
    /// Vertex indices in counterclockwise order.
    pub vertices: [u32; 3],
    pub region: RegionTag,
    /// Local index of the edge bisected first by newest-vertex bisection.
    pub refinement_edge: u8,
    /// Element of the previous mesh this one was cut from.
    pub parent: Option<u32>,
    pub area: f64,
    pub diameter: f64,
}

impl Element {
    pub fn local_edge(&self, k: usize) -> [u32; 2] {
        [self.vertices[(k + 1) % 3], self.vertices[(k + 2) % 3]]
    }
}

/// Input record for [`Mesh::new`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ElementSpec {
    pub vertices: [u32; 3],
    pub region: RegionTag,
    pub refinement_edge: u8,
    pub parent: Option<u32>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TaggedEdge {
    pub vertices: [u32; 2],
    pub tag: BoundaryTag,
}

/// Unique edge of the triangulation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Edge {
    /// Endpoints, smaller index first.
    pub vertices: [u32; 2],
    /// Incident elements; the second is [`NO_ELEMENT`] on the boundary.
    pub elements: [u32; 2],
    pub tag: Option<BoundaryTag>,
}

impl Edge {
    pub fn is_boundary(&self) -> bool {
        self.elements[1] == NO_ELEMENT
    }
}

/// Link from a refined mesh to the mesh it was produced from.
#[derive(Debug, Clone, PartialEq)]
pub struct Lineage {
    pub parent_id: u64,
    pub parent_vertex_count: usize,
    /// For every appended vertex, the two parent-mesh vertices it bisects.
    pub midpoint_of: Vec<[u32; 2]>,
}

#[derive(Debug, Clone)]
pub struct Mesh {
    vertices: Vec<Point>,
    elements: Vec<Element>,
    tagged_edges: Vec<TaggedEdge>,
    edges: Vec<Edge>,
    element_edges: Vec<[u32; 3]>,
    level: usize,
    id: u64,
    lineage: Option<Lineage>,
}

pub(crate) fn signed_area(a: Point, b: Point, c: Point) -> f64 {
    0.5 * ((b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1]))
}

pub(crate) fn distance(a: Point, b: Point) -> f64 {
    math::hypot(a[0] - b[0], a[1] - b[1])
}

fn sorted_pair(a: u32, b: u32) -> [u32; 2] {
    if a < b {
        [a, b]
    } else {
        [b, a]
    }
}

impl Mesh {
    /// Builds a mesh and its edge structure, validating orientation, conformity
    /// and tags.
    pub fn new(
        vertices: Vec<Point>,
        elements: Vec<ElementSpec>,
        tagged_edges: Vec<TaggedEdge>,
    ) -> Result<Self> {
        Self::assemble(vertices, elements, tagged_edges, 0, None)
    }

    pub(crate) fn assemble(
        vertices: Vec<Point>,
        specs: Vec<ElementSpec>,
        tagged_edges: Vec<TaggedEdge>,
        level: usize,
        lineage: Option<Lineage>,
    ) -> Result<Self> {
        let nv = vertices.len();
        let mut elements = Vec::with_capacity(specs.len());
        for (t, s) in specs.iter().enumerate() {
            if s.vertices.iter().any(|&v| v as usize >= nv) {
                return Err(Error::Geometry(format!("element {t} references a missing vertex")));
            }
            if s.refinement_edge > 2 {
                return Err(Error::Geometry(format!("element {t} has refinement edge {}", s.refinement_edge)));
            }
            let [a, b, c] = s.vertices.map(|v| vertices[v as usize]);
            let area = signed_area(a, b, c);
            if !(area > 0.0) {
                return Err(Error::Geometry(format!(
                    "element {t} is degenerate or clockwise (signed area {area})"
                )));
            }
            let diameter = distance(a, b).max(distance(b, c)).max(distance(c, a));
            elements.push(Element {
                vertices: s.vertices,
                region: s.region,
                refinement_edge: s.refinement_edge,
                parent: s.parent,
                area,
                diameter,
            });
        }

        // (edge key, element, local edge)
        let mut half: Vec<([u32; 2], u32, u8)> = Vec::with_capacity(3 * elements.len());
        for (t, e) in elements.iter().enumerate() {
            for k in 0..3 {
                let [a, b] = e.local_edge(k);
                half.push((sorted_pair(a, b), t as u32, k as u8));
            }
        }
        half.sort_unstable();
        let mut edges: Vec<Edge> = Vec::with_capacity(half.len() / 2 + 1);
        let mut element_edges = alloc::vec![[u32::MAX; 3]; elements.len()];
        let mut i = 0;
        while i < half.len() {
            let key = half[i].0;
            let mut j = i + 1;
            while j < half.len() && half[j].0 == key {
                j += 1;
            }
            if j - i > 2 {
                return Err(Error::Geometry(format!(
                    "edge {:?} is shared by {} elements",
                    key,
                    j - i
                )));
            }
            let id = edges.len() as u32;
            let mut inc = [NO_ELEMENT; 2];
            for (slot, h) in half[i..j].iter().enumerate() {
                inc[slot] = h.1;
                element_edges[h.1 as usize][h.2 as usize] = id;
            }
            edges.push(Edge { vertices: key, elements: inc, tag: None });
            i = j;
        }

        for te in &tagged_edges {
            let key = sorted_pair(te.vertices[0], te.vertices[1]);
            let idx = edges
                .binary_search_by(|e| e.vertices.cmp(&key))
                .map_err(|_| Error::Geometry(format!("tagged edge {:?} is not a mesh edge", te.vertices)))?;
            let edge = &mut edges[idx];
            if edge.tag.is_some() {
                return Err(Error::Geometry(format!("edge {:?} is tagged twice", te.vertices)));
            }
            edge.tag = Some(te.tag);
        }
        for e in &edges {
            if e.is_boundary() {
                match e.tag {
                    None => {
                        return Err(Error::Geometry(format!(
                            "boundary edge {:?} has no tag (hanging node or missing tag)",
                            e.vertices
                        )))
                    }
                    Some(BoundaryTag::Interface) => {
                        return Err(Error::Geometry(format!(
                            "boundary edge {:?} is tagged as interface",
                            e.vertices
                        )))
                    }
                    Some(_) => {}
                }
            } else {
                let r0 = elements[e.elements[0] as usize].region;
                let r1 = elements[e.elements[1] as usize].region;
                match (r0 != r1, e.tag) {
                    (true, Some(BoundaryTag::Interface)) | (false, None) => {}
                    (true, _) => {
                        return Err(Error::Geometry(format!(
                            "edge {:?} separates regions but is not tagged interface",
                            e.vertices
                        )))
                    }
                    (false, Some(tag)) => {
                        return Err(Error::Geometry(format!(
                            "interior edge {:?} carries tag {}",
                            e.vertices,
                            tag.name()
                        )))
                    }
                }
            }
        }

        Ok(Mesh {
            vertices,
            elements,
            tagged_edges,
            edges,
            element_edges,
            level,
            id: NEXT_MESH_ID.fetch_add(1, Ordering::Relaxed),
            lineage,
        })
    }

    pub fn vertices(&self) -> &[Point] {
        &self.vertices
    }

    pub fn vertex(&self, v: usize) -> Point {
        self.vertices[v]
    }

    pub fn elements(&self) -> &[Element] {
        &self.elements
    }

    pub fn element(&self, t: usize) -> &Element {
        &self.elements[t]
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    /// Edge ids of element `t`, indexed by local edge.
    pub fn element_edges(&self, t: usize) -> [u32; 3] {
        self.element_edges[t]
    }

    pub fn tagged_edges(&self) -> &[TaggedEdge] {
        &self.tagged_edges
    }

    pub fn num_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn num_elements(&self) -> usize {
        self.elements.len()
    }

    /// Refinement depth counted from the initial mesh.
    pub fn level(&self) -> usize {
        self.level
    }

    /// Process-unique identity used to check nesting.
    pub fn id(&self) -> u64 {
        self.id
    }

    pub fn lineage(&self) -> Option<&Lineage> {
        self.lineage.as_ref()
    }

    /// True when `self` was produced by one refinement step of `coarse`.
    pub fn is_child_of(&self, coarse: &Mesh) -> bool {
        self.lineage
            .as_ref()
            .is_some_and(|l| l.parent_id == coarse.id && l.parent_vertex_count == coarse.num_vertices())
    }

    pub fn edge_between(&self, a: u32, b: u32) -> Option<usize> {
        let key = sorted_pair(a, b);
        self.edges.binary_search_by(|e| e.vertices.cmp(&key)).ok()
    }

    pub fn element_points(&self, t: usize) -> [Point; 3] {
        self.elements[t].vertices.map(|v| self.vertices[v as usize])
    }

    pub fn centroid(&self, t: usize) -> Point {
        let [a, b, c] = self.element_points(t);
        [(a[0] + b[0] + c[0]) / 3.0, (a[1] + b[1] + c[1]) / 3.0]
    }

    pub fn edge_length(&self, e: usize) -> f64 {
        let [a, b] = self.edges[e].vertices;
        distance(self.vertices[a as usize], self.vertices[b as usize])
    }

    /// Largest element diameter.
    pub fn max_diameter(&self) -> f64 {
        self.elements.iter().map(|e| e.diameter).fold(0.0, f64::max)
    }

    /// Per-vertex region membership: bit 0 silicon, bit 1 oxide.
    pub fn vertex_regions(&self) -> Vec<u8> {
        let mut mask = alloc::vec![0u8; self.vertices.len()];
        for e in &self.elements {
            let bit = match e.region {
                RegionTag::Silicon => 1,
                RegionTag::Oxide => 2,
            };
            for &v in &e.vertices {
                mask[v as usize] |= bit;
            }
        }
        mask
    }

    /// Vertices lying on an edge with the given tag, sorted and deduplicated.
    pub fn vertices_with_tag(&self, tag: BoundaryTag) -> Vec<u32> {
        let mut out: Vec<u32> = self
            .tagged_edges
            .iter()
            .filter(|e| e.tag == tag)
            .flat_map(|e| e.vertices)
            .collect();
        out.sort_unstable();
        out.dedup();
        out
    }

    /// Total area of the elements in `region` (all elements for `None`).
    pub fn area(&self, region: Option<RegionTag>) -> f64 {
        self.elements
            .iter()
            .filter(|e| region.is_none_or(|r| e.region == r))
            .map(|e| e.area)
            .sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn two_triangles() -> Mesh {
        let v = vec![[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]];
        let el = vec![
            ElementSpec { vertices: [0, 1, 2], region: RegionTag::Silicon, refinement_edge: 1, parent: None },
            ElementSpec { vertices: [0, 2, 3], region: RegionTag::Silicon, refinement_edge: 2, parent: None },
        ];
        let tags = [[0, 1], [1, 2], [2, 3], [3, 0]]
            .into_iter()
            .map(|vertices| TaggedEdge { vertices, tag: BoundaryTag::Neumann })
            .collect();
        Mesh::new(v, el, tags).unwrap()
    }

    #[test]
    fn edges_and_incidence() {
        let m = two_triangles();
        assert_eq!(m.edges().len(), 5);
        let diag = m.edge_between(0, 2).unwrap();
        assert!(!m.edges()[diag].is_boundary());
        assert_eq!(m.edges().iter().filter(|e| e.is_boundary()).count(), 4);
        for t in 0..2 {
            for k in 0..3 {
                let e = &m.edges()[m.element_edges(t)[k] as usize];
                let mut le = m.element(t).local_edge(k);
                le.sort_unstable();
                assert_eq!(e.vertices, le);
            }
        }
    }

    #[test]
    fn rejects_clockwise_element() {
        let v = vec![[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]];
        let el = vec![ElementSpec { vertices: [0, 2, 1], region: RegionTag::Silicon, refinement_edge: 0, parent: None }];
        assert!(matches!(Mesh::new(v, el, vec![]), Err(Error::Geometry(_))));
    }

    #[test]
    fn rejects_untagged_boundary() {
        let v = vec![[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]];
        let el = vec![ElementSpec { vertices: [0, 1, 2], region: RegionTag::Silicon, refinement_edge: 0, parent: None }];
        let tags = vec![TaggedEdge { vertices: [0, 1], tag: BoundaryTag::Neumann }];
        assert!(Mesh::new(v, el, tags).is_err());
    }

    #[test]
    fn region_change_requires_interface_tag() {
        let v = vec![[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]];
        let el = vec![
            ElementSpec { vertices: [0, 1, 2], region: RegionTag::Silicon, refinement_edge: 1, parent: None },
            ElementSpec { vertices: [0, 2, 3], region: RegionTag::Oxide, refinement_edge: 2, parent: None },
        ];
        let mut tags: Vec<TaggedEdge> = [[0, 1], [1, 2], [2, 3], [3, 0]]
            .into_iter()
            .map(|vertices| TaggedEdge { vertices, tag: BoundaryTag::Neumann })
            .collect();
        assert!(Mesh::new(v.clone(), el.clone(), tags.clone()).is_err());
        tags.push(TaggedEdge { vertices: [2, 0], tag: BoundaryTag::Interface });
        assert!(Mesh::new(v, el, tags).is_ok());
    }
}
