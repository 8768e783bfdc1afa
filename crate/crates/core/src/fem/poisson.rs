//! Linear model problem `-div(eps grad w) = f` with Dirichlet data on every
//! edge tagged Dirichlet and zero flux elsewhere.

use super::assembly::{assemble_system, bary_point, ElementGeometry};
use super::dof::DofMap;
use super::quadrature::DEGREE5;
use super::solve::{solve_sparse, LinearSolver};
use super::sparse::Pattern;
use crate::error::Result;
use crate::mesh::{BoundaryTag, Mesh, Point};
use alloc::vec;
use alloc::vec::Vec;

const DIRICHLET: [BoundaryTag; 3] = [BoundaryTag::DirichletSource, BoundaryTag::DirichletDrain, BoundaryTag::DirichletGate];

/// Nodal P1 solution. `eps` holds one value per element.
pub fn solve_linear_poisson(
    mesh: &Mesh,
    eps: &[f64],
    source: impl Fn(Point) -> f64,
    dirichlet: impl Fn(Point) -> f64,
    solver: LinearSolver,
) -> Result<Vec<f64>> {
    let dofs = DofMap::new(mesh, None, &DIRICHLET);
    let pattern = Pattern::new(mesh, &dofs);
    let mut w = vec![0.0; mesh.num_vertices()];
    for (v, x) in w.iter_mut().enumerate() {
        if dofs.is_fixed(v) {
            *x = dirichlet(mesh.vertex(v));
        }
    }
    let sys = assemble_system(mesh, &dofs, &pattern, &w, |t, k, f| {
        let pts = mesh.element_points(t);
        let geo = ElementGeometry::new(pts);
        let s = geo.stiffness();
        for a in 0..3 {
            for b in 0..3 {
                k[a][b] = eps[t] * s[a][b];
            }
        }
        for (bq, wq) in DEGREE5 {
            let val = wq * geo.area * source(bary_point(&pts, bq));
            for a in 0..3 {
                f[a] += val * bq[a];
            }
        }
    });
    let x = solve_sparse(&sys.matrix, &sys.rhs, solver)?;
    dofs.scatter(&x, &mut w);
    Ok(w)
}
