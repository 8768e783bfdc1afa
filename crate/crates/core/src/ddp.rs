//! Per-sample solver for the drift-diffusion-Poisson system in Slotboom
//! variables.
//!
//! Scaled unknowns are `psi = V / U_T` on the whole device and the Slotboom
//! variables `u`, `v` on silicon, with `n = n_i e^psi u` and
//! `p = n_i e^-psi v`. Dividing by `U_T mu / L^2` the equations read
//!
//! ```text
//! -div(eps_r grad psi) = lambda (c - e^psi u + e^-psi v)     (zero in oxide)
//!  div(e^psi grad u)   = R / k_n
//!  div(e^-psi grad v)  = R / k_p,   R = (u v - 1) / (tau_p (e^psi u + 1) + tau_n (e^-psi v + 1))
//! ```
//!
//! They are solved by Gummel iteration: Newton on the potential with frozen
//! carriers, then one linear solve per carrier with the recombination term
//! lagged.

use crate::device::{boundary_values, BoundaryData, DeviceSpec, DopantSample, Scaling};
use crate::error::{Error, Result};
use crate::fem::assembly::{
    assemble_charge_term, assemble_system, check_clamp, doping_load, exp_coefficient, local_values, ElementGeometry,
};
use crate::fem::quadrature::EDGE_MIDPOINT;
use crate::fem::{CholeskySymbolic, CsrMatrix, DofMap, Field, LinearSolver, Pattern};
use crate::math;
use crate::mesh::{BoundaryTag, Mesh, Point, RegionTag};
use alloc::vec;
use alloc::vec::Vec;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GummelConfig {
    /// Stop when the sup-norm of the potential update is below this (units of U_T).
    pub tolerance: f64,
    pub max_iterations: usize,
    /// Relaxation of the potential update, in (0, 1].
    pub damping: f64,
    /// Drop the relaxation to 0.3 once the update grows between sweeps.
    pub auto_damping: bool,
    /// Sup-norm of the scaled Poisson residual.
    pub newton_tolerance: f64,
    pub newton_max_iterations: usize,
    /// Largest admissible `|psi|`.
    pub exp_clamp: f64,
    pub solver: LinearSolver,
}

impl Default for GummelConfig {
    fn default() -> Self {
        GummelConfig {
            tolerance: 1e-6,
            max_iterations: 100,
            damping: 1.0,
            auto_damping: true,
            newton_tolerance: 1e-10,
            newton_max_iterations: 50,
            exp_clamp: 60.0,
            solver: LinearSolver::Cholesky,
        }
    }
}

impl GummelConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |name, reason: &str| Err(Error::InvalidParameter { name, reason: reason.into() });
        if !(self.tolerance > 0.0) {
            return bad("gummel_tolerance", "must be positive");
        }
        if !(self.damping > 0.0 && self.damping <= 1.0) {
            return bad("damping", "must lie in (0, 1]");
        }
        if !(self.newton_tolerance > 0.0) {
            return bad("newton_tolerance", "must be positive");
        }
        if !(self.exp_clamp > 0.0) {
            return bad("exp_clamp", "must be positive");
        }
        Ok(())
    }
}

/// Shockley-Read-Hall rate in scaled form.
#[inline]
pub fn srh_rate(psi: f64, u: f64, v: f64, tau_n: f64, tau_p: f64) -> f64 {
    let d = tau_p * (math::exp(psi) * u + 1.0) + tau_n * (math::exp(-psi) * v + 1.0);
    (u * v - 1.0) / d
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Carrier {
    Electrons,
    Holes,
}

/// Everything about one mesh that does not depend on the dopant sample.
/// Shared read-only by all samples solved on that mesh.
#[derive(Debug)]
pub struct Discretization<'m> {
    pub mesh: &'m Mesh,
    pub spec: DeviceSpec,
    pub scaling: Scaling,
    pub bc: BoundaryData,
    pub dofs_v: DofMap,
    pub dofs_c: DofMap,
    pub pattern_v: Pattern,
    pub pattern_c: Pattern,
    pub geometry: Vec<ElementGeometry>,
    /// Relative permittivity per element.
    pub eps: Vec<f64>,
    /// Nodal Dirichlet data (zero away from contacts).
    pub fixed_psi: Vec<f64>,
    pub fixed_u: Vec<f64>,
    pub fixed_v: Vec<f64>,
    /// Permittivity stiffness on the free potential unknowns and its lifting.
    stiffness_v: CsrMatrix,
    lift_v: Vec<f64>,
    chol_v: CholeskySymbolic,
    chol_c: CholeskySymbolic,
    pub drain_vertices: Vec<u32>,
}

fn coords(mesh: &Mesh, dofs: &DofMap) -> Vec<Point> {
    dofs.free_vertices().iter().map(|&v| mesh.vertex(v as usize)).collect()
}

impl<'m> Discretization<'m> {
    pub fn new(mesh: &'m Mesh, spec: &DeviceSpec) -> Result<Self> {
        spec.validate()?;
        let scaling = spec.scaling();
        let bc = boundary_values(spec)?;
        let dofs_v = DofMap::for_field(mesh, Field::Potential);
        let dofs_c = DofMap::for_field(mesh, Field::Electrons);
        let pattern_v = Pattern::new(mesh, &dofs_v);
        let pattern_c = Pattern::new(mesh, &dofs_c);
        let geometry = crate::fem::assembly::geometry_table(mesh);
        let eps: Vec<f64> = mesh
            .elements()
            .iter()
            .map(|e| match e.region {
                RegionTag::Silicon => scaling.eps_si,
                RegionTag::Oxide => scaling.eps_ox,
            })
            .collect();

        let n = mesh.num_vertices();
        let (mut fixed_psi, mut fixed_u, mut fixed_v) = (vec![0.0; n], vec![0.0; n], vec![0.0; n]);
        for e in mesh.tagged_edges() {
            for w in e.vertices.map(|w| w as usize) {
                match e.tag {
                    BoundaryTag::DirichletSource => {
                        (fixed_psi[w], fixed_u[w], fixed_v[w]) = (bc.source.psi, bc.source.u, bc.source.v)
                    }
                    BoundaryTag::DirichletDrain => {
                        (fixed_psi[w], fixed_u[w], fixed_v[w]) = (bc.drain.psi, bc.drain.u, bc.drain.v)
                    }
                    BoundaryTag::DirichletGate => fixed_psi[w] = bc.psi_gate,
                    _ => {}
                }
            }
        }

        let sys = assemble_system(mesh, &dofs_v, &pattern_v, &fixed_psi, |t, k, _| {
            let s = geometry[t].stiffness();
            for a in 0..3 {
                for b in 0..3 {
                    k[a][b] = eps[t] * s[a][b];
                }
            }
        });
        let chol_v = CholeskySymbolic::new(&pattern_v.row_ptr, &pattern_v.col_idx, Some(&coords(mesh, &dofs_v)));
        let chol_c = CholeskySymbolic::new(&pattern_c.row_ptr, &pattern_c.col_idx, Some(&coords(mesh, &dofs_c)));
        Ok(Discretization {
            mesh,
            spec: spec.clone(),
            scaling,
            bc,
            dofs_v,
            dofs_c,
            pattern_v,
            pattern_c,
            geometry,
            eps,
            fixed_psi,
            fixed_u,
            fixed_v,
            stiffness_v: sys.matrix,
            lift_v: sys.rhs,
            chol_v,
            chol_c,
            drain_vertices: mesh.vertices_with_tag(BoundaryTag::DirichletDrain),
        })
    }

    fn linear_solve(&self, carrier_space: bool, a: &CsrMatrix, b: &[f64], solver: LinearSolver) -> Result<Vec<f64>> {
        match solver {
            LinearSolver::Cholesky => {
                let sym = if carrier_space { &self.chol_c } else { &self.chol_v };
                Ok(sym.factor(&a.values)?.solve(b))
            }
            LinearSolver::Pcg { tol, max_iter } => crate::fem::pcg(a, b, None, tol, max_iter).map(|r| r.0),
        }
    }

    /// `lambda int c phi_i` per vertex for a dopant sample.
    pub fn doping_load(&self, sample: &DopantSample) -> Vec<f64> {
        doping_load(self.mesh, sample, &self.spec, self.scaling.lambda)
    }

    /// Residual of the scaled Poisson equation on the free potential unknowns,
    /// and its Jacobian (on `pattern_v`).
    pub fn poisson_residual(
        &self,
        psi: &[f64],
        u: &[f64],
        v: &[f64],
        load: &[f64],
        clamp: f64,
    ) -> Result<(Vec<f64>, CsrMatrix)> {
        let charge =
            assemble_charge_term(self.mesh, &self.dofs_v, &self.pattern_v, self.scaling.lambda, psi, u, v, load, clamp)?;
        let free = self.dofs_v.gather(psi);
        let mut r = vec![0.0; free.len()];
        self.stiffness_v.mul_vec(&free, &mut r);
        for i in 0..r.len() {
            r[i] += charge.residual[i] - self.lift_v[i];
        }
        let mut jac = self.stiffness_v.clone();
        for (j, c) in jac.values.iter_mut().zip(&charge.jacobian) {
            *j += c;
        }
        Ok((r, jac))
    }

    /// Damped Newton for the potential with `u`, `v` frozen. Returns the new
    /// potential and the sup-norm residual of every iterate.
    pub fn solve_nonlinear_poisson(
        &self,
        psi0: &[f64],
        u: &[f64],
        v: &[f64],
        load: &[f64],
        cfg: &GummelConfig,
    ) -> Result<(Vec<f64>, Vec<f64>)> {
        let sup = |x: &[f64]| x.iter().fold(0.0f64, |m, y| m.max(y.abs()));
        let l2 = |x: &[f64]| x.iter().map(|y| y * y).sum::<f64>();
        let mut psi = psi0.to_vec();
        for (w, p) in psi.iter_mut().enumerate() {
            if self.dofs_v.is_fixed(w) {
                *p = self.fixed_psi[w];
            }
        }
        let (mut r, mut jac) = self.poisson_residual(&psi, u, v, load, cfg.exp_clamp)?;
        let mut trace = vec![sup(&r)];
        for _ in 0..cfg.newton_max_iterations {
            if *trace.last().unwrap() <= cfg.newton_tolerance {
                return Ok((psi, trace));
            }
            let rhs: Vec<f64> = r.iter().map(|x| -x).collect();
            let delta = self.linear_solve(false, &jac, &rhs, cfg.solver)?;
            let step = sup(&delta);
            let f0 = l2(&r);
            let mut t = 1.0;
            let mut accepted = None;
            for _ in 0..40 {
                let mut trial = psi.clone();
                for (k, &w) in self.dofs_v.free_vertices().iter().enumerate() {
                    trial[w as usize] += t * delta[k];
                }
                if check_clamp(&trial, cfg.exp_clamp).is_ok() {
                    let (r1, j1) = self.poisson_residual(&trial, u, v, load, cfg.exp_clamp)?;
                    if l2(&r1) <= (1.0 - 1e-4 * t) * f0 {
                        accepted = Some((trial, r1, j1));
                        break;
                    }
                }
                t *= 0.5;
            }
            match accepted {
                Some((p1, r1, j1)) => {
                    (psi, r, jac) = (p1, r1, j1);
                    trace.push(sup(&r));
                }
                // No decrease possible: the residual sits at round-off level.
                None if step <= 1e-10 => return Ok((psi, trace)),
                None => return Err(Error::NewtonDiverged { trace }),
            }
            if t == 1.0 && step <= 1e-13 {
                return Ok((psi, trace));
            }
        }
        if *trace.last().unwrap() <= cfg.newton_tolerance {
            Ok((psi, trace))
        } else {
            Err(Error::NewtonDiverged { trace })
        }
    }

    /// Linear solve for one carrier with the recombination term linearised
    /// around the lagged `u_lag`, `v_lag`.
    pub fn solve_continuity(
        &self,
        psi: &[f64],
        carrier: Carrier,
        u_lag: &[f64],
        v_lag: &[f64],
        solver: LinearSolver,
    ) -> Result<Vec<f64>> {
        let sc = &self.scaling;
        let (sign, k_rate, fixed) = match carrier {
            Carrier::Electrons => (1.0, sc.k_n, &self.fixed_u),
            Carrier::Holes => (-1.0, sc.k_p, &self.fixed_v),
        };
        let sys = assemble_system(self.mesh, &self.dofs_c, &self.pattern_c, fixed, |t, k, f| {
            let p = local_values(self.mesh, t, psi);
            let (uu, vv) = (local_values(self.mesh, t, u_lag), local_values(self.mesh, t, v_lag));
            let kappa = exp_coefficient(p, sign);
            let s = self.geometry[t].stiffness();
            for a in 0..3 {
                for b in 0..3 {
                    k[a][b] = kappa * s[a][b];
                }
            }
            let w = self.geometry[t].area / 3.0;
            for (bary, _) in EDGE_MIDPOINT {
                let dot = |x: [f64; 3]| bary[0] * x[0] + bary[1] * x[1] + bary[2] * x[2];
                let (pq, uq, vq) = (dot(p), dot(uu), dot(vv));
                let d = sc.tau_p * (math::exp(pq) * uq + 1.0) + sc.tau_n * (math::exp(-pq) * vq + 1.0);
                let partner = match carrier {
                    Carrier::Electrons => vq,
                    Carrier::Holes => uq,
                };
                let react = partner / (k_rate * d);
                let src = 1.0 / (k_rate * d);
                for a in 0..3 {
                    f[a] += w * src * bary[a];
                    for b in 0..3 {
                        k[a][b] += w * react * bary[a] * bary[b];
                    }
                }
            }
        });
        let x = self.linear_solve(true, &sys.matrix, &sys.rhs, solver)?;
        let mut out = vec![0.0; self.mesh.num_vertices()];
        for w in 0..out.len() {
            if self.dofs_c.is_fixed(w) {
                out[w] = fixed[w];
            }
        }
        self.dofs_c.scatter(&x, &mut out);
        Ok(out)
    }

    /// Starting guess: carriers interpolated log-linearly between the contacts,
    /// potential from local charge neutrality in silicon and the gate value in
    /// the oxide.
    pub fn initial_guess(&self, sample: &DopantSample) -> SolutionTriple {
        let n = self.mesh.num_vertices();
        let regions = self.mesh.vertex_regions();
        let length = self.spec.total_length();
        let (mut psi, mut u, mut v) = (vec![0.0; n], vec![0.0; n], vec![0.0; n]);
        let (s, d) = (self.bc.source, self.bc.drain);
        for w in 0..n {
            let x = self.mesh.vertex(w);
            if regions[w] & 1 == 0 {
                psi[w] = self.bc.psi_gate;
                continue;
            }
            let t = (x[0] / length).clamp(0.0, 1.0);
            u[w] = math::exp((1.0 - t) * math::ln(s.u) + t * math::ln(d.u));
            v[w] = math::exp((1.0 - t) * math::ln(s.v) + t * math::ln(d.v));
            let c = crate::device::doping_at(x, sample, &self.spec) / self.spec.n_i;
            // u e^{2 psi} - c e^psi - v = 0
            let e = (c + math::sqrt(c * c + 4.0 * u[w] * v[w])) / (2.0 * u[w]);
            psi[w] = math::ln(e).clamp(-50.0, 50.0);
        }
        self.apply_dirichlet(&mut psi, &mut u, &mut v);
        SolutionTriple::new(self.mesh, psi, u, v)
    }

    fn apply_dirichlet(&self, psi: &mut [f64], u: &mut [f64], v: &mut [f64]) {
        for w in 0..psi.len() {
            if self.dofs_v.is_fixed(w) {
                psi[w] = self.fixed_psi[w];
            }
            if self.dofs_c.is_fixed(w) {
                u[w] = self.fixed_u[w];
                v[w] = self.fixed_v[w];
            }
            if !self.dofs_c.is_present(w) {
                u[w] = 0.0;
                v[w] = 0.0;
            }
        }
    }

    fn check_positive(&self, field: &'static str, x: &[f64]) -> Result<()> {
        for w in 0..x.len() {
            if self.dofs_c.is_present(w) && !(x[w] > 0.0) {
                return Err(Error::Positivity { field, vertex: w });
            }
        }
        Ok(())
    }

    /// Gummel iteration for one dopant sample. `initial`, when given, must live
    /// on this mesh (prolong it first). Running out of iterations is not an
    /// error: the result comes back with `converged == false`.
    pub fn gummel_solve(
        &self,
        sample: &DopantSample,
        initial: Option<&SolutionTriple>,
        cfg: &GummelConfig,
    ) -> Result<SolutionTriple> {
        cfg.validate()?;
        let load = self.doping_load(sample);
        self.gummel_with_load(&load, sample, initial, cfg)
    }

    pub fn gummel_with_load(
        &self,
        load: &[f64],
        sample: &DopantSample,
        initial: Option<&SolutionTriple>,
        cfg: &GummelConfig,
    ) -> Result<SolutionTriple> {
        let mut sol = match initial {
            Some(s) if s.mesh_id == self.mesh.id() => s.clone(),
            Some(_) => return Err(Error::MeshMismatch),
            None => self.initial_guess(sample),
        };
        self.apply_dirichlet(&mut sol.psi, &mut sol.u, &mut sol.v);
        sol.converged = false;
        sol.iterations = 0;
        sol.updates.clear();
        let mut omega = cfg.damping;
        let mut previous = f64::INFINITY;
        for it in 1..=cfg.max_iterations {
            let (psi_new, _) = self.solve_nonlinear_poisson(&sol.psi, &sol.u, &sol.v, load, cfg)?;
            let delta = psi_new.iter().zip(&sol.psi).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
            if cfg.auto_damping && omega > 0.3 && delta > previous {
                omega = 0.3;
                log::debug!("gummel: update grew ({previous:.3e} -> {delta:.3e}), damping set to 0.3");
            }
            if omega == 1.0 {
                sol.psi = psi_new;
            } else {
                for (p, q) in sol.psi.iter_mut().zip(&psi_new) {
                    *p += omega * (q - *p);
                }
            }
            let u = self.solve_continuity(&sol.psi, Carrier::Electrons, &sol.u, &sol.v, cfg.solver)?;
            self.check_positive("u", &u)?;
            let v = self.solve_continuity(&sol.psi, Carrier::Holes, &u, &sol.v, cfg.solver)?;
            self.check_positive("v", &v)?;
            sol.u = u;
            sol.v = v;
            sol.iterations = it;
            sol.updates.push(delta);
            if delta <= cfg.tolerance {
                sol.converged = true;
                break;
            }
            previous = delta;
        }
        Ok(sol)
    }

    /// Carrier densities (cm^-3) and the drain current.
    pub fn densities_and_current(&self, sol: &SolutionTriple) -> Densities {
        let sc = &self.scaling;
        let n_i = self.spec.n_i;
        let n: Vec<f64> = sol.psi.iter().zip(&sol.u).map(|(p, u)| n_i * math::exp(*p) * u).collect();
        let p: Vec<f64> = sol.psi.iter().zip(&sol.v).map(|(p, v)| n_i * math::exp(-*p) * v).collect();
        let (s_n, s_p) = self.drain_fluxes(sol);
        let i_n = sc.current_n * s_n;
        let i_p = -sc.current_p * s_p;
        Densities { n, p, electron_current: -i_n, hole_current: -i_p, current: -(i_n + i_p) }
    }

    /// Outward fluxes `int e^{+-psi} d(u, v)/dnu` through the drain, evaluated
    /// variationally from the discrete equations.
    fn drain_fluxes(&self, sol: &SolutionTriple) -> (f64, f64) {
        let mesh = self.mesh;
        let mut on_drain = vec![false; mesh.num_vertices()];
        for &w in &self.drain_vertices {
            on_drain[w as usize] = true;
        }
        let sc = &self.scaling;
        let (mut s_n, mut s_p) = (0.0, 0.0);
        for (t, el) in mesh.elements().iter().enumerate() {
            if el.region != RegionTag::Silicon || !el.vertices.iter().any(|&w| on_drain[w as usize]) {
                continue;
            }
            let p = local_values(mesh, t, &sol.psi);
            let (uu, vv) = (local_values(mesh, t, &sol.u), local_values(mesh, t, &sol.v));
            let geo = &self.geometry[t];
            let (gu, gv) = (geo.gradient(uu), geo.gradient(vv));
            let (kn, kp) = (exp_coefficient(p, 1.0), exp_coefficient(p, -1.0));
            for a in 0..3 {
                if !on_drain[el.vertices[a] as usize] {
                    continue;
                }
                let ga = geo.grads[a];
                s_n += kn * geo.area * (gu[0] * ga[0] + gu[1] * ga[1]);
                s_p += kp * geo.area * (gv[0] * ga[0] + gv[1] * ga[1]);
                for (bary, _) in EDGE_MIDPOINT {
                    let dot = |x: [f64; 3]| bary[0] * x[0] + bary[1] * x[1] + bary[2] * x[2];
                    let r = srh_rate(dot(p), dot(uu), dot(vv), sc.tau_n, sc.tau_p);
                    s_n += geo.area / 3.0 * r / sc.k_n * bary[a];
                    s_p += geo.area / 3.0 * r / sc.k_p * bary[a];
                }
            }
        }
        (s_n, s_p)
    }
}

/// Nodal solution of one sample on one mesh. Carrier values are zero on
/// vertices outside silicon.
#[derive(Debug, Clone, PartialEq)]
pub struct SolutionTriple {
    /// Potential over `U_T`.
    pub psi: Vec<f64>,
    pub u: Vec<f64>,
    pub v: Vec<f64>,
    pub mesh_id: u64,
    pub level: usize,
    pub iterations: usize,
    pub converged: bool,
    /// Sup-norm potential update of every Gummel sweep.
    pub updates: Vec<f64>,
}

impl SolutionTriple {
    pub fn new(mesh: &Mesh, psi: Vec<f64>, u: Vec<f64>, v: Vec<f64>) -> Self {
        SolutionTriple {
            psi,
            u,
            v,
            mesh_id: mesh.id(),
            level: mesh.level(),
            iterations: 0,
            converged: false,
            updates: Vec::new(),
        }
    }

    /// Interpolates all three fields onto a refinement of the current mesh.
    pub fn prolong(&self, coarse: &Mesh, fine: &Mesh) -> Result<SolutionTriple> {
        if coarse.id() != self.mesh_id {
            return Err(Error::MeshMismatch);
        }
        let p = |f: &[f64]| crate::fem::prolong(f, coarse, fine);
        let mut s = SolutionTriple::new(fine, p(&self.psi)?, p(&self.u)?, p(&self.v)?);
        s.converged = self.converged;
        Ok(s)
    }

    pub fn potential_volts(&self, u_t: f64) -> Vec<f64> {
        self.psi.iter().map(|p| p * u_t).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Densities {
    /// cm^-3
    pub n: Vec<f64>,
    pub p: Vec<f64>,
    /// Current into the device through the drain contact, A per metre of
    /// device depth.
    pub electron_current: f64,
    pub hole_current: f64,
    pub current: f64,
}
