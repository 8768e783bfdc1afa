use super::{BoundaryTag, Mesh};
use crate::math;
use alloc::vec;

/// Shape and size summary of a mesh.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeshQuality {
    /// Smallest interior angle in degrees.
    pub min_angle_deg: f64,
    /// Smallest `gamma` with `diam(T) <= gamma * |T|^(1/2)` for all elements.
    pub max_gamma: f64,
    pub elements: usize,
    pub vertices: usize,
    /// Free potential unknowns (vertices not on source, drain or gate).
    pub poisson_dofs: usize,
    /// Free unknowns per carrier field (silicon vertices off the ohmic contacts).
    pub dd_dofs: usize,
}

impl MeshQuality {
    /// Combined unknown count `N_P + 2 N_DD`.
    pub fn combined_dofs(&self) -> usize {
        self.poisson_dofs + 2 * self.dd_dofs
    }
}

pub fn mesh_quality(mesh: &Mesh) -> MeshQuality {
    let mut min_angle = f64::INFINITY;
    let mut max_gamma: f64 = 0.0;
    for (t, el) in mesh.elements().iter().enumerate() {
        let p = mesh.element_points(t);
        for k in 0..3 {
            let (a, b, c) = (p[k], p[(k + 1) % 3], p[(k + 2) % 3]);
            let u = [b[0] - a[0], b[1] - a[1]];
            let w = [c[0] - a[0], c[1] - a[1]];
            let cos = (u[0] * w[0] + u[1] * w[1]) / (math::hypot(u[0], u[1]) * math::hypot(w[0], w[1]));
            min_angle = min_angle.min(math::acos(cos.clamp(-1.0, 1.0)));
        }
        max_gamma = max_gamma.max(el.diameter / math::sqrt(el.area));
    }

    let mut fixed_v = vec![false; mesh.num_vertices()];
    let mut fixed_c = vec![false; mesh.num_vertices()];
    for e in mesh.tagged_edges() {
        for v in e.vertices {
            if e.tag.is_dirichlet() {
                fixed_v[v as usize] = true;
            }
            if matches!(e.tag, BoundaryTag::DirichletSource | BoundaryTag::DirichletDrain) {
                fixed_c[v as usize] = true;
            }
        }
    }
    let regions = mesh.vertex_regions();
    let poisson_dofs = fixed_v.iter().filter(|&&f| !f).count();
    let dd_dofs = (0..mesh.num_vertices())
        .filter(|&v| regions[v] & 1 != 0 && !fixed_c[v])
        .count();
    MeshQuality {
        min_angle_deg: min_angle * 180.0 / math::PI,
        max_gamma,
        elements: mesh.num_elements(),
        vertices: mesh.num_vertices(),
        poisson_dofs,
        dd_dofs,
    }
}
