//! Newest-vertex bisection and red refinement.

use super::{ElementSpec, Lineage, Mesh, Point, TaggedEdge};
use crate::error::Result;
use alloc::vec;
use alloc::vec::Vec;

fn midpoint(a: Point, b: Point) -> Point {
    [(a[0] + b[0]) / 2.0, (a[1] + b[1]) / 2.0]
}

/// Rotates the element so that its refinement edge is local edge 0; the
/// first vertex is then the newest vertex.
fn normalized(vertices: [u32; 3], refinement_edge: u8) -> [u32; 3] {
    let k = refinement_edge as usize;
    [vertices[k], vertices[(k + 1) % 3], vertices[(k + 2) % 3]]
}

/// Refines by newest-vertex bisection. Every marked element is bisected at
/// least once; further bisections are added until the mesh is conforming.
/// Each refined element is split into two or three children.
///
/// Out-of-range ids are ignored. An empty marking returns a copy of `mesh`.
pub fn refine_bisect(mesh: &Mesh, marked: &[usize]) -> Result<Mesh> {
    let ne = mesh.num_elements();
    let mut edge_marked = vec![false; mesh.edges().len()];
    let mut work: Vec<usize> = Vec::new();
    for &t in marked.iter().filter(|&&t| t < ne) {
        let e = mesh.element_edges(t)[mesh.element(t).refinement_edge as usize] as usize;
        if !edge_marked[e] {
            edge_marked[e] = true;
            work.push(e);
        }
    }
    // Closure: an element with any marked edge must have its refinement edge marked.
    while let Some(e) = work.pop() {
        for &t in mesh.edges()[e].elements.iter().filter(|&&t| t != super::NO_ELEMENT) {
            let t = t as usize;
            let r = mesh.element_edges(t)[mesh.element(t).refinement_edge as usize] as usize;
            if !edge_marked[r] {
                edge_marked[r] = true;
                work.push(r);
            }
        }
    }
    if !edge_marked.iter().any(|&m| m) {
        return Ok(mesh.clone());
    }
    split(mesh, &edge_marked, |mesh, t, mid, out| {
        let el = mesh.element(t);
        let [a, b, c] = normalized(el.vertices, el.refinement_edge);
        let m = mid(b, c).expect("refinement edge is marked");
        // Children (m, a, b) and (m, c, a); their refinement edges (a, b) and
        // (c, a) are edges of the parent.
        for [x, y] in [[a, b], [c, a]] {
            match mid(x, y) {
                None => out.push([m, x, y]),
                Some(m2) => {
                    out.push([m2, m, x]);
                    out.push([m2, y, m]);
                }
            }
        }
        0
    })
}

/// Red refinement: every element is cut into four similar children by joining
/// its edge midpoints. Children inherit the local refinement-edge index of
/// their parent under the similarity map, so bisection stays well defined.
pub fn uniform_refine(mesh: &Mesh) -> Result<Mesh> {
    let all = vec![true; mesh.edges().len()];
    split(mesh, &all, |mesh, t, mid, out| {
        let el = mesh.element(t);
        let [v0, v1, v2] = el.vertices;
        let m0 = mid(v1, v2).unwrap();
        let m1 = mid(v2, v0).unwrap();
        let m2 = mid(v0, v1).unwrap();
        out.extend_from_slice(&[[v0, m2, m1], [m2, v1, m0], [m1, m0, v2], [m0, m1, m2]]);
        el.refinement_edge
    })
}

/// Shared driver: creates one midpoint per marked edge, lets `cut` produce the
/// children of each element, splits tagged edges and assembles the fine mesh.
/// `cut` returns the local refinement edge for its children.
fn split(
    mesh: &Mesh,
    edge_marked: &[bool],
    cut: impl Fn(&Mesh, usize, &dyn Fn(u32, u32) -> Option<u32>, &mut Vec<[u32; 3]>) -> u8,
) -> Result<Mesh> {
    let mut vertices = mesh.vertices().to_vec();
    let mut edge_mid = vec![u32::MAX; mesh.edges().len()];
    let mut midpoint_of = Vec::new();
    for (e, edge) in mesh.edges().iter().enumerate() {
        if edge_marked[e] {
            let [a, b] = edge.vertices;
            edge_mid[e] = vertices.len() as u32;
            vertices.push(midpoint(vertices[a as usize], vertices[b as usize]));
            midpoint_of.push([a, b]);
        }
    }
    let mid = |a: u32, b: u32| -> Option<u32> {
        let e = mesh.edge_between(a, b).expect("edge of the coarse mesh");
        edge_marked[e].then_some(edge_mid[e])
    };

    let mut specs = Vec::with_capacity(mesh.num_elements() * 2);
    let mut children = Vec::with_capacity(4);
    for (t, el) in mesh.elements().iter().enumerate() {
        let refined = mesh.element_edges(t).iter().any(|&e| edge_marked[e as usize]);
        if !refined {
            specs.push(ElementSpec {
                vertices: el.vertices,
                region: el.region,
                refinement_edge: el.refinement_edge,
                parent: Some(t as u32),
            });
            continue;
        }
        children.clear();
        let refinement_edge = cut(mesh, t, &mid, &mut children);
        for &vertices in &children {
            specs.push(ElementSpec { vertices, region: el.region, refinement_edge, parent: Some(t as u32) });
        }
    }

    let mut tags = Vec::with_capacity(mesh.tagged_edges().len() * 2);
    for te in mesh.tagged_edges() {
        let [a, b] = te.vertices;
        match mid(a, b) {
            None => tags.push(*te),
            Some(m) => {
                tags.push(TaggedEdge { vertices: [a, m], tag: te.tag });
                tags.push(TaggedEdge { vertices: [m, b], tag: te.tag });
            }
        }
    }
    let lineage = Lineage { parent_id: mesh.id(), parent_vertex_count: mesh.num_vertices(), midpoint_of };
    Mesh::assemble(vertices, specs, tags, mesh.level() + 1, Some(lineage))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::device::DeviceSpec;
    use crate::mesh::{build_device_mesh, mesh_quality, BoundaryTag, RegionTag};

    fn square() -> Mesh {
        build_device_mesh(&DeviceSpec::unit_square(), 1.0).unwrap()
    }

    fn assert_conforming(m: &Mesh) {
        // Every interior edge has two elements and every element edge is a mesh edge.
        let mut count = vec![0usize; m.edges().len()];
        for t in 0..m.num_elements() {
            for e in m.element_edges(t) {
                count[e as usize] += 1;
            }
        }
        for (e, c) in m.edges().iter().zip(count) {
            assert_eq!(c, if e.is_boundary() { 1 } else { 2 });
        }
        // No vertex lies in the interior of an edge (hanging node).
        for edge in m.edges() {
            let [a, b] = edge.vertices.map(|v| m.vertex(v as usize));
            for (v, p) in m.vertices().iter().enumerate() {
                if edge.vertices.contains(&(v as u32)) {
                    continue;
                }
                let cross = (b[0] - a[0]) * (p[1] - a[1]) - (b[1] - a[1]) * (p[0] - a[0]);
                let dot = (p[0] - a[0]) * (b[0] - a[0]) + (p[1] - a[1]) * (b[1] - a[1]);
                let len2 = (b[0] - a[0]).powi(2) + (b[1] - a[1]).powi(2);
                assert!(!(cross.abs() < 1e-12 && dot > 1e-12 && dot < len2 - 1e-12), "hanging vertex {v}");
            }
        }
    }

    #[test]
    fn empty_marking_is_identity() {
        let m = square();
        let r = refine_bisect(&m, &[]).unwrap();
        assert_eq!(r.vertices(), m.vertices());
        assert_eq!(r.elements(), m.elements());
    }

    #[test]
    fn bisect_both_square_triangles() {
        let m = square();
        let r = refine_bisect(&m, &[0, 1]).unwrap();
        assert!(r.num_elements() >= 4);
        assert_conforming(&r);
        assert!(r.is_child_of(&m));
        assert!((r.area(None) - 1.0).abs() < 1e-14);
    }

    #[test]
    fn single_mark_closure_is_conforming() {
        let mut m = build_device_mesh(&DeviceSpec::default(), 5.0).unwrap();
        for step in 0..8 {
            let marked = [step * 7 % m.num_elements()];
            m = refine_bisect(&m, &marked).unwrap();
            assert_conforming(&m);
        }
    }

    #[test]
    fn interface_band_refinement_is_local() {
        let spec = DeviceSpec::default();
        let m = build_device_mesh(&spec, 2.5).unwrap();
        let marked: Vec<usize> = (0..m.num_elements())
            .filter(|&t| {
                m.element_edges(t)
                    .iter()
                    .any(|&e| m.edges()[e as usize].tag == Some(BoundaryTag::Interface))
            })
            .collect();
        let r = refine_bisect(&m, &marked).unwrap();
        assert_conforming(&r);
        let mut kids = vec![0usize; m.num_elements()];
        for el in r.elements() {
            kids[el.parent.unwrap() as usize] += 1;
        }
        for &t in &marked {
            assert!(kids[t] >= 2);
        }
        // Refined but unmarked elements form the closure; each of them shares
        // an edge with another refined element.
        for t in (0..m.num_elements()).filter(|t| kids[*t] > 1 && !marked.contains(t)) {
            let neighbour_refined = m.element_edges(t).iter().any(|&e| {
                m.edges()[e as usize].elements.iter().any(|&s| s != u32::MAX && s as usize != t && kids[s as usize] > 1)
            });
            assert!(neighbour_refined);
        }
        // Untouched elements keep their exact vertices.
        for el in r.elements().iter().filter(|e| kids[e.parent.unwrap() as usize] == 1) {
            assert_eq!(el.vertices, m.element(el.parent.unwrap() as usize).vertices);
        }
        assert!(kids.iter().filter(|&&k| k == 1).count() > m.num_elements() / 2);
        for el in r.elements() {
            assert_eq!(el.region, m.element(el.parent.unwrap() as usize).region);
        }
    }

    #[test]
    fn red_refinement_counts_and_angles() {
        let m = square();
        let r = uniform_refine(&m).unwrap();
        assert_eq!(r.num_elements(), 8);
        assert_conforming(&r);
        let m = build_device_mesh(&DeviceSpec::default(), 2.5).unwrap();
        let r = uniform_refine(&m).unwrap();
        assert_eq!(r.num_elements(), 4 * m.num_elements());
        let (q0, q1) = (mesh_quality(&m), mesh_quality(&r));
        assert!((q0.min_angle_deg - q1.min_angle_deg).abs() < 1e-9);
        assert_eq!(r.vertices_with_tag(BoundaryTag::Interface).len(), 2 * m.vertices_with_tag(BoundaryTag::Interface).len() - 2);
        assert!((r.area(Some(RegionTag::Oxide)) - m.area(Some(RegionTag::Oxide))).abs() < 1e-9);
    }

    #[test]
    fn shape_regularity_bounded_over_six_levels() {
        let m0 = build_device_mesh(&DeviceSpec::default(), 5.0).unwrap();
        let g0 = mesh_quality(&m0).max_gamma;
        let mut m = m0;
        for level in 0..6 {
            // Refine near the source contact corner to force deep grading.
            let marked: Vec<usize> = (0..m.num_elements())
                .filter(|&t| {
                    let c = m.centroid(t);
                    c[0] < 10.0 / (level + 1) as f64 && c[1] < 5.0
                })
                .collect();
            m = refine_bisect(&m, &marked).unwrap();
            assert!(mesh_quality(&m).max_gamma <= 2.0 * g0);
        }
        let mut m = build_device_mesh(&DeviceSpec::default(), 5.0).unwrap();
        for _ in 0..4 {
            m = uniform_refine(&m).unwrap();
            assert!(mesh_quality(&m).max_gamma <= 2.0 * g0 + 1e-12);
        }
    }

    #[test]
    fn nesting_vertices_are_kept() {
        let m = build_device_mesh(&DeviceSpec::default(), 5.0).unwrap();
        let r = refine_bisect(&m, &[0, 3, 10]).unwrap();
        assert_eq!(&r.vertices()[..m.num_vertices()], m.vertices());
        let lin = r.lineage().unwrap();
        for (k, [a, b]) in lin.midpoint_of.iter().enumerate() {
            let p = r.vertex(m.num_vertices() + k);
            let q = midpoint(m.vertex(*a as usize), m.vertex(*b as usize));
            assert_eq!(p, q);
        }
    }
}
