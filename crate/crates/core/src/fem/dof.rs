use crate::mesh::{BoundaryTag, Mesh, RegionTag};
use alloc::vec;
use alloc::vec::Vec;

/// The three unknown fields of the drift-diffusion-Poisson system.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Field {
    Potential,
    Electrons,
    Holes,
}

const FIXED: u32 = u32::MAX - 1;
const ABSENT: u32 = u32::MAX;

/// Numbering of the free vertices of a P1 space. Vertices outside the
/// subdomain are absent; Dirichlet vertices are fixed and eliminated.
#[derive(Debug, Clone, PartialEq)]
pub struct DofMap {
    slot: Vec<u32>,
    free: Vec<u32>,
    region: Option<RegionTag>,
}

impl DofMap {
    /// Space on the elements of `region` (all elements for `None`) with
    /// Dirichlet conditions on edges carrying any of `fixed_tags`.
    pub fn new(mesh: &Mesh, region: Option<RegionTag>, fixed_tags: &[BoundaryTag]) -> Self {
        let mut slot = vec![ABSENT; mesh.num_vertices()];
        for el in mesh.elements().iter().filter(|e| region.is_none_or(|r| e.region == r)) {
            for &v in &el.vertices {
                slot[v as usize] = 0;
            }
        }
        for e in mesh.tagged_edges().iter().filter(|e| fixed_tags.contains(&e.tag)) {
            for v in e.vertices {
                if slot[v as usize] != ABSENT {
                    slot[v as usize] = FIXED;
                }
            }
        }
        let mut free = Vec::new();
        for (v, s) in slot.iter_mut().enumerate() {
            if *s == 0 {
                *s = free.len() as u32;
                free.push(v as u32);
            }
        }
        DofMap { slot, free, region }
    }

    /// Standard space for `field`: the potential lives on the whole device with
    /// all contacts fixed; carriers live in silicon with ohmic contacts fixed.
    pub fn for_field(mesh: &Mesh, field: Field) -> Self {
        match field {
            Field::Potential => Self::new(
                mesh,
                None,
                &[BoundaryTag::DirichletSource, BoundaryTag::DirichletDrain, BoundaryTag::DirichletGate],
            ),
            Field::Electrons | Field::Holes => Self::new(
                mesh,
                Some(RegionTag::Silicon),
                &[BoundaryTag::DirichletSource, BoundaryTag::DirichletDrain],
            ),
        }
    }

    pub fn num_dofs(&self) -> usize {
        self.free.len()
    }

    pub fn num_vertices(&self) -> usize {
        self.slot.len()
    }

    pub fn region(&self) -> Option<RegionTag> {
        self.region
    }

    pub fn covers(&self, region: RegionTag) -> bool {
        self.region.is_none_or(|r| r == region)
    }

    /// Global unknown of vertex `v`, if it is free.
    #[inline]
    pub fn dof(&self, v: usize) -> Option<usize> {
        let s = self.slot[v];
        (s < FIXED).then_some(s as usize)
    }

    pub fn is_fixed(&self, v: usize) -> bool {
        self.slot[v] == FIXED
    }

    pub fn is_present(&self, v: usize) -> bool {
        self.slot[v] != ABSENT
    }

    /// Vertex of every unknown.
    pub fn free_vertices(&self) -> &[u32] {
        &self.free
    }

    pub fn gather(&self, nodal: &[f64]) -> Vec<f64> {
        self.free.iter().map(|&v| nodal[v as usize]).collect()
    }

    pub fn scatter(&self, x: &[f64], nodal: &mut [f64]) {
        for (&v, &xi) in self.free.iter().zip(x) {
            nodal[v as usize] = xi;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::device::DeviceSpec;
    use crate::mesh::{build_device_mesh, mesh_quality};

    #[test]
    fn device_spaces_match_quality_counts() {
        let m = build_device_mesh(&DeviceSpec::default(), 2.5).unwrap();
        let q = mesh_quality(&m);
        let v = DofMap::for_field(&m, Field::Potential);
        let u = DofMap::for_field(&m, Field::Electrons);
        assert_eq!(v.num_dofs(), q.poisson_dofs);
        assert_eq!(u.num_dofs(), q.dd_dofs);
        for (k, &vert) in u.free_vertices().iter().enumerate() {
            assert_eq!(u.dof(vert as usize), Some(k));
        }
        for vert in m.vertices_with_tag(BoundaryTag::DirichletGate) {
            assert!(v.is_fixed(vert as usize));
            assert!(!u.is_present(vert as usize));
        }
    }
}
