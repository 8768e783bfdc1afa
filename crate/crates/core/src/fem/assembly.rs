use super::dof::DofMap;
use super::quadrature::{subdivided, DEGREE5, EDGE_MIDPOINT};
use super::sparse::{CsrMatrix, Pattern};
use crate::device::{doping_at, DeviceSpec, DopantSample};
use crate::error::{Error, Result};
use crate::math;
use crate::mesh::{Mesh, Point, RegionTag};
use alloc::vec;
use alloc::vec::Vec;

/// Area and barycentric gradients of a triangle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ElementGeometry {
    pub area: f64,
    pub grads: [[f64; 2]; 3],
}

impl ElementGeometry {
    pub fn new(p: [Point; 3]) -> Self {
        let area = crate::mesh::signed_area(p[0], p[1], p[2]);
        let mut grads = [[0.0; 2]; 3];
        for (k, g) in grads.iter_mut().enumerate() {
            let (b, c) = (p[(k + 1) % 3], p[(k + 2) % 3]);
            *g = [(b[1] - c[1]) / (2.0 * area), (c[0] - b[0]) / (2.0 * area)];
        }
        ElementGeometry { area, grads }
    }

    /// `int grad phi_a . grad phi_b`.
    #[inline]
    pub fn stiffness(&self) -> [[f64; 3]; 3] {
        let mut k = [[0.0; 3]; 3];
        for a in 0..3 {
            for b in 0..3 {
                let (ga, gb) = (self.grads[a], self.grads[b]);
                k[a][b] = self.area * (ga[0] * gb[0] + ga[1] * gb[1]);
            }
        }
        k
    }

    /// Gradient of the P1 function with vertex values `f`.
    #[inline]
    pub fn gradient(&self, f: [f64; 3]) -> [f64; 2] {
        let g = &self.grads;
        [
            f[0] * g[0][0] + f[1] * g[1][0] + f[2] * g[2][0],
            f[0] * g[0][1] + f[1] * g[1][1] + f[2] * g[2][1],
        ]
    }
}

pub fn geometry_table(mesh: &Mesh) -> Vec<ElementGeometry> {
    (0..mesh.num_elements()).map(|t| ElementGeometry::new(mesh.element_points(t))).collect()
}

/// Element average of `exp(sign * f)` by the edge-midpoint rule applied to the
/// linear interpolant of `f`.
#[inline]
pub fn exp_coefficient(f: [f64; 3], sign: f64) -> f64 {
    (math::exp(sign * 0.5 * (f[1] + f[2])) + math::exp(sign * 0.5 * (f[0] + f[2])) + math::exp(sign * 0.5 * (f[0] + f[1])))
        / 3.0
}

#[inline]
pub fn local_values(mesh: &Mesh, t: usize, nodal: &[f64]) -> [f64; 3] {
    mesh.element(t).vertices.map(|v| nodal[v as usize])
}

/// Matrix and right-hand side on the free unknowns of a space.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearSystem {
    pub matrix: CsrMatrix,
    pub rhs: Vec<f64>,
}

/// Generic P1 assembly. `local(t, matrix, load)` fills the element matrix and
/// load vector of every element in the space; Dirichlet columns are moved to
/// the right-hand side using the nodal values `fixed`.
pub fn assemble_system(
    mesh: &Mesh,
    dofs: &DofMap,
    pattern: &Pattern,
    fixed: &[f64],
    mut local: impl FnMut(usize, &mut [[f64; 3]; 3], &mut [f64; 3]),
) -> LinearSystem {
    let mut matrix = pattern.zero_matrix();
    let mut rhs = vec![0.0; dofs.num_dofs()];
    for (t, el) in mesh.elements().iter().enumerate() {
        if !dofs.covers(el.region) {
            continue;
        }
        let mut k = [[0.0; 3]; 3];
        let mut f = [0.0; 3];
        local(t, &mut k, &mut f);
        pattern.add_element(t, &k, &mut matrix.values);
        for a in 0..3 {
            let Some(i) = dofs.dof(el.vertices[a] as usize) else { continue };
            let mut r = f[a];
            for b in 0..3 {
                let vb = el.vertices[b] as usize;
                if dofs.is_fixed(vb) {
                    r -= k[a][b] * fixed[vb];
                }
            }
            rhs[i] += r;
        }
    }
    LinearSystem { matrix, rhs }
}

/// Coefficient of a weighted stiffness matrix.
#[derive(Debug, Clone, Copy)]
pub enum Coefficient<'a> {
    Constant(f64),
    /// One value per element.
    PerElement(&'a [f64]),
    /// `exp(sign * f)` of a nodal field, by edge-midpoint quadrature.
    NodalExp { field: &'a [f64], sign: f64 },
}

impl Coefficient<'_> {
    pub fn on_element(&self, mesh: &Mesh, t: usize) -> f64 {
        match *self {
            Coefficient::Constant(c) => c,
            Coefficient::PerElement(c) => c[t],
            Coefficient::NodalExp { field, sign } => exp_coefficient(local_values(mesh, t, field), sign),
        }
    }
}

/// `sum_T kappa_T int_T grad phi_i . grad phi_j` over the free unknowns.
pub fn assemble_weighted_stiffness(
    mesh: &Mesh,
    dofs: &DofMap,
    pattern: &Pattern,
    coeff: Coefficient<'_>,
) -> Result<CsrMatrix> {
    let mut matrix = pattern.zero_matrix();
    for (t, el) in mesh.elements().iter().enumerate() {
        if !dofs.covers(el.region) {
            continue;
        }
        let kappa = coeff.on_element(mesh, t);
        if !(kappa > 0.0) || !kappa.is_finite() {
            return Err(Error::NonPositiveCoefficient { element: t, value: kappa });
        }
        let mut k = ElementGeometry::new(mesh.element_points(t)).stiffness();
        for row in &mut k {
            for x in row.iter_mut() {
                *x *= kappa;
            }
        }
        pattern.add_element(t, &k, &mut matrix.values);
    }
    Ok(matrix)
}

/// Rejects potentials whose exponentials would leave the safe range.
pub fn check_clamp(psi: &[f64], clamp: f64) -> Result<()> {
    for (v, &p) in psi.iter().enumerate() {
        if !(p.abs() <= clamp) {
            return Err(Error::ExponentClamp { vertex: v, value: p, clamp });
        }
    }
    Ok(())
}

/// Space charge term of the scaled Poisson equation,
/// `lambda (exp(psi) u - exp(-psi) v - c)`, on silicon.
#[derive(Debug, Clone, PartialEq)]
pub struct ChargeTerm {
    /// `lambda int (exp(psi) u - exp(-psi) v) phi_i - load_i` per free unknown.
    pub residual: Vec<f64>,
    /// Derivative of `residual` with respect to the free nodal `psi`, laid out
    /// on the pattern of the space.
    pub jacobian: Vec<f64>,
}

#[allow(clippy::too_many_arguments)]
/// Edge-midpoint quadrature of the charge term. `load` holds `lambda int c phi_i`
/// per vertex; `psi` is checked against `clamp` first.
pub fn assemble_charge_term(
    mesh: &Mesh,
    dofs: &DofMap,
    pattern: &Pattern,
    lambda: f64,
    psi: &[f64],
    u: &[f64],
    v: &[f64],
    load: &[f64],
    clamp: f64,
) -> Result<ChargeTerm> {
    check_clamp(psi, clamp)?;
    let mut residual: Vec<f64> = dofs.free_vertices().iter().map(|&w| -load[w as usize]).collect();
    let mut jacobian = vec![0.0; pattern.col_idx.len()];
    for (t, el) in mesh.elements().iter().enumerate() {
        if el.region != RegionTag::Silicon {
            continue;
        }
        let (p, uu, vv) = (local_values(mesh, t, psi), local_values(mesh, t, u), local_values(mesh, t, v));
        let w = lambda * el.area / 3.0;
        let mut f = [0.0; 3];
        let mut k = [[0.0; 3]; 3];
        for (bary, _) in EDGE_MIDPOINT {
            let pq = bary[0] * p[0] + bary[1] * p[1] + bary[2] * p[2];
            let uq = bary[0] * uu[0] + bary[1] * uu[1] + bary[2] * uu[2];
            let vq = bary[0] * vv[0] + bary[1] * vv[1] + bary[2] * vv[2];
            let (ep, em) = (math::exp(pq), math::exp(-pq));
            let g = ep * uq - em * vq;
            let dg = ep * uq + em * vq;
            for a in 0..3 {
                f[a] += w * g * bary[a];
                for b in 0..3 {
                    k[a][b] += w * dg * bary[a] * bary[b];
                }
            }
        }
        pattern.add_element(t, &k, &mut jacobian);
        for a in 0..3 {
            if let Some(i) = dofs.dof(el.vertices[a] as usize) {
                residual[i] += f[a];
            }
        }
    }
    Ok(ChargeTerm { residual, jacobian })
}

/// Quadrature rule index for an element: 0 for the plain degree-5 rule,
/// otherwise the subdivision factor needed to resolve dopant bumps.
pub fn dopant_subdivision(mesh: &Mesh, t: usize, sample: &DopantSample, spec: &DeviceSpec) -> usize {
    let el = mesh.element(t);
    let c = mesh.centroid(t);
    let reach = el.diameter + 10.0 * spec.sigma_dopant;
    let near = sample.positions.iter().any(|p| math::hypot(p[0] - c[0], p[1] - c[1]) < reach);
    if !near {
        return 0;
    }
    (math::ceil(2.0 * el.diameter / spec.sigma_dopant) as usize).clamp(1, 24)
}

/// Quadrature points of element `t` in barycentric form: the degree-5 rule,
/// or a subdivided rule when dopants are close.
pub fn doping_rule(mesh: &Mesh, t: usize, sample: &DopantSample, spec: &DeviceSpec) -> Vec<([f64; 3], f64)> {
    match dopant_subdivision(mesh, t, sample, spec) {
        0 => DEGREE5.to_vec(),
        k => subdivided(k),
    }
}

pub fn bary_point(p: &[Point; 3], b: [f64; 3]) -> Point {
    [b[0] * p[0][0] + b[1] * p[1][0] + b[2] * p[2][0], b[0] * p[0][1] + b[1] * p[1][1] + b[2] * p[2][1]]
}

/// `lambda int_Si (C / n_i) phi_i` for every vertex.
pub fn doping_load(mesh: &Mesh, sample: &DopantSample, spec: &DeviceSpec, lambda: f64) -> Vec<f64> {
    let mut load = vec![0.0; mesh.num_vertices()];
    let scale = lambda / spec.n_i;
    for (t, el) in mesh.elements().iter().enumerate() {
        if el.region != RegionTag::Silicon {
            continue;
        }
        let pts = mesh.element_points(t);
        for (b, w) in doping_rule(mesh, t, sample, spec) {
            let c = doping_at(bary_point(&pts, b), sample, spec) * scale * w * el.area;
            for a in 0..3 {
                load[el.vertices[a] as usize] += c * b[a];
            }
        }
    }
    load
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::device::DeviceSpec;
    use crate::fem::dof::Field;
    use crate::mesh::build_device_mesh;

    #[test]
    fn reference_stiffness() {
        let g = ElementGeometry::new([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]]);
        let k = g.stiffness();
        let expect = [[1.0, -0.5, -0.5], [-0.5, 0.5, 0.0], [-0.5, 0.0, 0.5]];
        for a in 0..3 {
            for b in 0..3 {
                assert!((k[a][b] - expect[a][b]).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn stiffness_symmetric_with_constant_null_space() {
        let m = build_device_mesh(&DeviceSpec::default(), 5.0).unwrap();
        let dofs = DofMap::new(&m, None, &[]);
        let pat = Pattern::new(&m, &dofs);
        let eps: Vec<f64> =
            m.elements().iter().map(|e| if e.region == RegionTag::Silicon { 11.7 } else { 3.9 }).collect();
        let k = assemble_weighted_stiffness(&m, &dofs, &pat, Coefficient::PerElement(&eps)).unwrap();
        assert_eq!(k.asymmetry(), 0.0);
        let ones = vec![1.0; k.n()];
        let mut r = vec![0.0; k.n()];
        k.mul_vec(&ones, &mut r);
        assert!(r.iter().all(|x| x.abs() < 1e-12));
        assert!(matches!(
            assemble_weighted_stiffness(&m, &dofs, &pat, Coefficient::Constant(0.0)),
            Err(Error::NonPositiveCoefficient { .. })
        ));
    }

    #[test]
    fn charge_term_vanishes_at_equilibrium() {
        let m = build_device_mesh(&DeviceSpec::default(), 5.0).unwrap();
        let dofs = DofMap::for_field(&m, Field::Potential);
        let pat = Pattern::new(&m, &dofs);
        let n = m.num_vertices();
        let z = vec![0.0; n];
        let one = vec![1.0; n];
        let c = assemble_charge_term(&m, &dofs, &pat, 1.0, &z, &one, &one, &z, 60.0).unwrap();
        assert!(c.residual.iter().all(|&x| x == 0.0));
        let mut big = z.clone();
        big[3] = 61.0;
        assert!(matches!(
            assemble_charge_term(&m, &dofs, &pat, 1.0, &big, &one, &one, &z, 60.0),
            Err(Error::ExponentClamp { vertex: 3, .. })
        ));
    }
}
