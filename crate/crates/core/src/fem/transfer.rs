use crate::error::{Error, Result};
use crate::mesh::Mesh;
use alloc::vec::Vec;

/// Interpolates a nodal field from `coarse` onto its refinement `fine`. New
/// vertices take the mean of the two vertices of the bisected edge, which is
/// the exact P1 interpolant; `fine` may also be `coarse` itself.
pub fn prolong(field: &[f64], coarse: &Mesh, fine: &Mesh) -> Result<Vec<f64>> {
    if field.len() != coarse.num_vertices() {
        return Err(Error::MeshMismatch);
    }
    if fine.id() == coarse.id() {
        return Ok(field.to_vec());
    }
    if !fine.is_child_of(coarse) {
        return Err(Error::NotNested);
    }
    let lineage = fine.lineage().expect("child meshes carry a lineage");
    let mut out = Vec::with_capacity(fine.num_vertices());
    out.extend_from_slice(field);
    for &[a, b] in &lineage.midpoint_of {
        out.push(0.5 * (field[a as usize] + field[b as usize]));
    }
    Ok(out)
}

/// Prolongs across several refinement steps; `chain[0]` is the mesh `field`
/// lives on and every later mesh refines its predecessor.
pub fn prolong_chain(field: &[f64], chain: &[&Mesh]) -> Result<Vec<f64>> {
    let mut f = field.to_vec();
    for w in chain.windows(2) {
        f = prolong(&f, w[0], w[1])?;
    }
    Ok(f)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::device::DeviceSpec;
    use crate::fem::norms::norms;
    use crate::mesh::{build_device_mesh, refine_bisect, uniform_refine};

    #[test]
    fn linear_fields_reproduced_and_norms_kept() {
        let m0 = build_device_mesh(&DeviceSpec::default(), 5.0).unwrap();
        let m1 = refine_bisect(&m0, &[0, 5, 17, 40]).unwrap();
        let m2 = uniform_refine(&m1).unwrap();
        let lin = |m: &Mesh| -> Vec<f64> { m.vertices().iter().map(|p| 0.3 * p[0] - 2.0 * p[1] + 1.0).collect() };
        let f = prolong_chain(&lin(&m0), &[&m0, &m1, &m2]).unwrap();
        for (a, b) in f.iter().zip(lin(&m2)) {
            assert!((a - b).abs() < 1e-12);
        }
        let c = prolong(&alloc::vec![2.5; m0.num_vertices()], &m0, &m1).unwrap();
        assert!(c.iter().all(|&x| x == 2.5));

        let g: Vec<f64> = m0.vertices().iter().map(|p| libm::sin(p[0]) * p[1]).collect();
        let pg = prolong_chain(&g, &[&m0, &m1, &m2]).unwrap();
        let (n0, n2) = (norms(&m0, &g, None), norms(&m2, &pg, None));
        assert!((n0.l2 - n2.l2).abs() < 1e-12 * n0.l2);
        assert!((n0.h1_semi - n2.h1_semi).abs() < 1e-12 * n0.h1_semi);
    }

    #[test]
    fn unrelated_meshes_rejected() {
        let a = build_device_mesh(&DeviceSpec::default(), 5.0).unwrap();
        let b = build_device_mesh(&DeviceSpec::default(), 5.0).unwrap();
        let f = alloc::vec![0.0; a.num_vertices()];
        assert_eq!(prolong(&f, &a, &b), Err(Error::NotNested));
        let bb = uniform_refine(&uniform_refine(&a).unwrap()).unwrap();
        assert_eq!(prolong(&f, &a, &bb), Err(Error::NotNested));
    }
}
