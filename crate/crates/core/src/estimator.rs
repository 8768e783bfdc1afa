//! Residual a-posteriori error indicators.
//!
//! Element residuals of the three equations and normal-flux jumps across edges
//! are combined per element as
//!
//! ```text
//! eta_T^2 = h_T^2 (c1 |r1|^2 + c2 |r2|^2 + c3 |r3|^2)
//!         + sum_{edges} share * h_e^p (c4 |[eps dpsi/dn]|^2 + c5 |[e^psi du/dn]|^2 + c6 |[e^-psi dv/dn]|^2)
//! ```
//!
//! with L2 norms on the element or edge, `p = 1` by default and `share` 1/2 on
//! edges between two elements of the field's domain and 1 otherwise.
//!
//! By default the carrier residuals and jumps are divided by their diffusion
//! coefficient (`CarrierWeighting::Normalized`). In the literal form the hole
//! terms carry a factor `e^-psi`, which is below 1e-10 in the doped contact
//! regions where the hole variable varies most, so they never drive marking.

use crate::ddp::{srh_rate, Discretization, SolutionTriple};
use crate::device::{doping_at, DopantSample};
use crate::error::{Error, Result};
use crate::fem::assembly::{bary_point, doping_rule, local_values, ElementGeometry};
use crate::fem::quadrature::DEGREE5;
use crate::math;
use crate::mesh::{BoundaryTag, Mesh, RegionTag, NO_ELEMENT};
use alloc::vec;
use alloc::vec::Vec;

/// Exponent of `h_e` multiplying squared L2 norms of edge jumps.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EdgeWeight {
    /// `h_e |j|^2_{L2(e)}`.
    Length,
    /// `h_e^2 |j|^2_{L2(e)}`.
    LengthSquared,
}

/// How the continuity residuals and jumps are weighted.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CarrierWeighting {
    /// Fluxes `e^psi grad u` and `e^-psi grad v` as they stand.
    Literal,
    /// Residuals and jumps divided by the diffusion coefficient `e^(+-psi)`,
    /// so that the carrier terms measure `grad u` and `grad v` themselves.
    Normalized,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EstimatorConfig {
    /// Weights of r1, r2, r3 and of the potential, electron and hole jumps.
    pub weights: [f64; 6],
    pub edge_weight: EdgeWeight,
    pub carrier_weighting: CarrierWeighting,
}

impl Default for EstimatorConfig {
    fn default() -> Self {
        EstimatorConfig {
            weights: [1.0; 6],
            edge_weight: EdgeWeight::Length,
            carrier_weighting: CarrierWeighting::Normalized,
        }
    }
}

/// Squared L2 norms of the three residuals on every element.
pub fn element_residuals(
    disc: &Discretization<'_>,
    sol: &SolutionTriple,
    sample: &DopantSample,
    weighting: CarrierWeighting,
) -> Vec<[f64; 3]> {
    let mesh = disc.mesh;
    let sc = &disc.scaling;
    let c_scale = 1.0 / disc.spec.n_i;
    let mut out = vec![[0.0; 3]; mesh.num_elements()];
    for (t, el) in mesh.elements().iter().enumerate() {
        if el.region != RegionTag::Silicon {
            continue;
        }
        let pts = mesh.element_points(t);
        let geo = &disc.geometry[t];
        let p = local_values(mesh, t, &sol.psi);
        let (uu, vv) = (local_values(mesh, t, &sol.u), local_values(mesh, t, &sol.v));
        let (gp, gu, gv) = (geo.gradient(p), geo.gradient(uu), geo.gradient(vv));
        let (gpu, gpv) = (gp[0] * gu[0] + gp[1] * gu[1], gp[0] * gv[0] + gp[1] * gv[1]);
        let at = |b: [f64; 3], f: [f64; 3]| b[0] * f[0] + b[1] * f[1] + b[2] * f[2];

        let mut r1 = 0.0;
        for (b, w) in doping_rule(mesh, t, sample, &disc.spec) {
            let (pq, uq, vq) = (at(b, p), at(b, uu), at(b, vv));
            let c = doping_at(bary_point(&pts, b), sample, &disc.spec) * c_scale;
            let r = sc.lambda * (math::exp(pq) * uq - math::exp(-pq) * vq - c);
            r1 += w * r * r;
        }
        let (mut r2, mut r3) = (0.0, 0.0);
        for (b, w) in DEGREE5 {
            let (pq, uq, vq) = (at(b, p), at(b, uu), at(b, vv));
            let rate = srh_rate(pq, uq, vq, sc.tau_n, sc.tau_p);
            let (a, c) = match weighting {
                CarrierWeighting::Literal => (math::exp(pq) * gpu - rate / sc.k_n, -math::exp(-pq) * gpv - rate / sc.k_p),
                CarrierWeighting::Normalized => {
                    (gpu - math::exp(-pq) * rate / sc.k_n, -gpv - math::exp(pq) * rate / sc.k_p)
                }
            };
            r2 += w * a * a;
            r3 += w * c * c;
        }
        out[t] = [r1 * el.area, r2 * el.area, r3 * el.area];
    }
    out
}

/// `int_0^1 exp(2 (a + (b - a) s)) ds`.
fn mean_exp2(a: f64, b: f64) -> f64 {
    let d = 2.0 * (b - a);
    if d.abs() < 1e-8 {
        math::exp(2.0 * a) * (1.0 + d / 2.0)
    } else {
        math::exp(2.0 * a) * math::expm1(d) / d
    }
}

/// Squared L2 norms over every edge of the normal-flux jumps of the potential,
/// electron and hole equations. Edges on Dirichlet boundaries contribute zero;
/// Neumann edges and, for the carriers, silicon/oxide interfaces use the
/// one-sided flux.
pub fn edge_jumps(disc: &Discretization<'_>, sol: &SolutionTriple, weighting: CarrierWeighting) -> Vec<[f64; 3]> {
    let mesh = disc.mesh;
    let mut out = vec![[0.0; 3]; mesh.edges().len()];
    for (e, edge) in mesh.edges().iter().enumerate() {
        if edge.tag.is_some_and(BoundaryTag::is_dirichlet) {
            continue;
        }
        let [a, b] = edge.vertices.map(|w| w as usize);
        let (pa, pb) = (mesh.vertex(a), mesh.vertex(b));
        let len = math::hypot(pb[0] - pa[0], pb[1] - pa[1]);
        let nu = [(pb[1] - pa[1]) / len, -(pb[0] - pa[0]) / len];
        let sides: Vec<usize> = edge.elements.iter().filter(|&&t| t != NO_ELEMENT).map(|&t| t as usize).collect();

        // Potential: eps grad psi . nu, summed with opposite signs.
        let flux = |t: usize, f: &[f64]| {
            let g = disc.geometry[t].gradient(local_values(mesh, t, f));
            g[0] * nu[0] + g[1] * nu[1]
        };
        let jv = match sides.as_slice() {
            [t] => disc.eps[*t] * flux(*t, &sol.psi),
            [t, s] => disc.eps[*t] * flux(*t, &sol.psi) - disc.eps[*s] * flux(*s, &sol.psi),
            _ => 0.0,
        };
        out[e][0] = jv * jv * len;

        let si: Vec<usize> =
            sides.iter().copied().filter(|&t| mesh.element(t).region == RegionTag::Silicon).collect();
        let (ju, jp) = match si.as_slice() {
            [t] => (flux(*t, &sol.u), flux(*t, &sol.v)),
            [t, s] => (flux(*t, &sol.u) - flux(*s, &sol.u), flux(*t, &sol.v) - flux(*s, &sol.v)),
            _ => continue,
        };
        let (wu, wp) = match weighting {
            CarrierWeighting::Literal => (mean_exp2(sol.psi[a], sol.psi[b]), mean_exp2(-sol.psi[a], -sol.psi[b])),
            CarrierWeighting::Normalized => (1.0, 1.0),
        };
        out[e][1] = ju * ju * len * wu;
        out[e][2] = jp * jp * len * wp;
    }
    out
}

/// Per-element indicators with their breakdown.
#[derive(Debug, Clone, PartialEq)]
pub struct IndicatorField {
    pub mesh_id: u64,
    /// Weighted contributions r1, r2, r3, potential jump, electron jump, hole jump.
    pub parts: Vec<[f64; 6]>,
    /// Sum of the six parts per element.
    pub eta2: Vec<f64>,
}

impl IndicatorField {
    /// Global `eta^2`.
    pub fn total(&self) -> f64 {
        self.eta2.iter().sum()
    }
}

pub fn local_indicators(
    mesh: &Mesh,
    residuals: &[[f64; 3]],
    jumps: &[[f64; 3]],
    cfg: &EstimatorConfig,
) -> IndicatorField {
    let c = cfg.weights;
    let mut parts = vec![[0.0; 6]; mesh.num_elements()];
    for (t, el) in mesh.elements().iter().enumerate() {
        let h2 = el.diameter * el.diameter;
        parts[t][0] = c[0] * h2 * residuals[t][0];
        parts[t][1] = c[1] * h2 * residuals[t][1];
        parts[t][2] = c[2] * h2 * residuals[t][2];
    }
    for (e, edge) in mesh.edges().iter().enumerate() {
        let len = mesh.edge_length(e);
        let h = match cfg.edge_weight {
            EdgeWeight::Length => len,
            EdgeWeight::LengthSquared => len * len,
        };
        let sides: Vec<usize> = edge.elements.iter().filter(|&&t| t != NO_ELEMENT).map(|&t| t as usize).collect();
        let share = 1.0 / sides.len() as f64;
        for &t in &sides {
            parts[t][3] += share * h * c[3] * jumps[e][0];
        }
        let si: Vec<usize> =
            sides.iter().copied().filter(|&t| mesh.element(t).region == RegionTag::Silicon).collect();
        for &t in &si {
            let share = 1.0 / si.len() as f64;
            parts[t][4] += share * h * c[4] * jumps[e][1];
            parts[t][5] += share * h * c[5] * jumps[e][2];
        }
    }
    let eta2 = parts.iter().map(|p| p.iter().sum()).collect();
    IndicatorField { mesh_id: mesh.id(), parts, eta2 }
}

/// Residuals, jumps and indicators in one call.
pub fn indicators(
    disc: &Discretization<'_>,
    sol: &SolutionTriple,
    sample: &DopantSample,
    cfg: &EstimatorConfig,
) -> IndicatorField {
    let r = element_residuals(disc, sol, sample, cfg.carrier_weighting);
    let j = edge_jumps(disc, sol, cfg.carrier_weighting);
    local_indicators(disc.mesh, &r, &j, cfg)
}

/// Indicators of the linear model problem `-div(eps grad w) = f` solved by
/// `fem::poisson::solve_linear_poisson`, with the same weighting as the device
/// estimator. Only the first and fourth parts are nonzero.
pub fn poisson_indicators(
    mesh: &Mesh,
    eps: &[f64],
    w: &[f64],
    source: impl Fn(crate::mesh::Point) -> f64,
    cfg: &EstimatorConfig,
) -> IndicatorField {
    let geo: Vec<ElementGeometry> = (0..mesh.num_elements()).map(|t| ElementGeometry::new(mesh.element_points(t))).collect();
    let mut residuals = vec![[0.0; 3]; mesh.num_elements()];
    for (t, r) in residuals.iter_mut().enumerate() {
        let pts = mesh.element_points(t);
        let s: f64 = DEGREE5.iter().map(|&(b, wq)| wq * { let f = source(bary_point(&pts, b)); f * f }).sum();
        r[0] = s * geo[t].area;
    }
    let mut jumps = vec![[0.0; 3]; mesh.edges().len()];
    for (e, edge) in mesh.edges().iter().enumerate() {
        if edge.tag.is_some_and(BoundaryTag::is_dirichlet) {
            continue;
        }
        let [a, b] = edge.vertices.map(|v| v as usize);
        let (pa, pb) = (mesh.vertex(a), mesh.vertex(b));
        let len = math::hypot(pb[0] - pa[0], pb[1] - pa[1]);
        let nu = [(pb[1] - pa[1]) / len, -(pb[0] - pa[0]) / len];
        let flux = |t: usize| {
            let g = geo[t].gradient(local_values(mesh, t, w));
            eps[t] * (g[0] * nu[0] + g[1] * nu[1])
        };
        let j = match edge.elements {
            [t, NO_ELEMENT] | [NO_ELEMENT, t] => flux(t as usize),
            [t, s] => flux(t as usize) - flux(s as usize),
        };
        jumps[e][0] = j * j * len;
    }
    local_indicators(mesh, &residuals, &jumps, cfg)
}

/// Sample mean of per-element indicators on a common mesh.
#[derive(Debug, Clone, PartialEq)]
pub struct ExpectedIndicatorField {
    pub mesh_id: u64,
    pub eta2: Vec<f64>,
    pub parts: Vec<[f64; 6]>,
    pub samples: usize,
}

impl ExpectedIndicatorField {
    pub fn total(&self) -> f64 {
        self.eta2.iter().sum()
    }
}

/// Running sum of indicator fields, so samples need not be kept.
#[derive(Debug, Clone, PartialEq)]
pub struct IndicatorAccumulator {
    mesh_id: u64,
    parts: Vec<[f64; 6]>,
    samples: usize,
}

impl IndicatorAccumulator {
    pub fn new(mesh: &Mesh) -> Self {
        IndicatorAccumulator { mesh_id: mesh.id(), parts: vec![[0.0; 6]; mesh.num_elements()], samples: 0 }
    }

    pub fn add(&mut self, f: &IndicatorField) -> Result<()> {
        if f.mesh_id != self.mesh_id || f.parts.len() != self.parts.len() {
            return Err(Error::MeshMismatch);
        }
        for (acc, p) in self.parts.iter_mut().zip(&f.parts) {
            for k in 0..6 {
                acc[k] += p[k];
            }
        }
        self.samples += 1;
        Ok(())
    }

    pub fn mean(&self) -> Result<ExpectedIndicatorField> {
        if self.samples == 0 {
            return Err(Error::EmptySamples);
        }
        let m = self.samples as f64;
        let parts: Vec<[f64; 6]> = self.parts.iter().map(|p| p.map(|x| x / m)).collect();
        let eta2 = parts.iter().map(|p| p.iter().sum()).collect();
        Ok(ExpectedIndicatorField { mesh_id: self.mesh_id, eta2, parts, samples: self.samples })
    }
}

pub fn expected_indicators(fields: &[IndicatorField]) -> Result<ExpectedIndicatorField> {
    let first = fields.first().ok_or(Error::EmptySamples)?;
    let mut acc = IndicatorAccumulator {
        mesh_id: first.mesh_id,
        parts: vec![[0.0; 6]; first.parts.len()],
        samples: 0,
    };
    for f in fields {
        acc.add(f)?;
    }
    acc.mean()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ddp::GummelConfig;
    use crate::device::DeviceSpec;
    use crate::mesh::{build_device_mesh, ElementSpec, TaggedEdge};

    #[test]
    fn equilibrium_has_zero_indicators() {
        let spec = DeviceSpec::unit_square();
        let mesh = build_device_mesh(&spec, 0.25).unwrap();
        let disc = Discretization::new(&mesh, &spec).unwrap();
        let s = DopantSample::empty();
        let sol = disc.gummel_solve(&s, None, &GummelConfig::default()).unwrap();
        let f = indicators(&disc, &sol, &s, &EstimatorConfig::default());
        assert!(f.eta2.iter().all(|&x| x.abs() < 1e-20));
    }

    #[test]
    fn two_material_jump_uses_each_permittivity() {
        let v = vec![[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]];
        let el = vec![
            ElementSpec { vertices: [0, 1, 2], region: RegionTag::Silicon, refinement_edge: 1, parent: None },
            ElementSpec { vertices: [0, 2, 3], region: RegionTag::Oxide, refinement_edge: 2, parent: None },
        ];
        let mut tags: Vec<TaggedEdge> = [[0, 1], [1, 2], [2, 3], [3, 0]]
            .into_iter()
            .map(|vertices| TaggedEdge { vertices, tag: BoundaryTag::Neumann })
            .collect();
        tags.push(TaggedEdge { vertices: [0, 2], tag: BoundaryTag::Interface });
        let mesh = Mesh::new(v, el, tags).unwrap();
        let spec = DeviceSpec::unit_square();
        let disc = Discretization::new(&mesh, &spec).unwrap();
        // psi = x: grad (1, 0) on both sides; normal of the diagonal is (1, -1)/sqrt 2.
        let psi: Vec<f64> = mesh.vertices().iter().map(|p| p[0]).collect();
        let sol = SolutionTriple::new(&mesh, psi, vec![1.0; 4], vec![1.0; 4]);
        let j = edge_jumps(&disc, &sol, CarrierWeighting::Literal);
        let diag = mesh.edge_between(0, 2).unwrap();
        let len = math::sqrt(2.0);
        let expect = (11.7 - 3.9) / len;
        assert!((j[diag][0] - expect * expect * len).abs() < 1e-12);
        // Neumann edge x = 1 of the silicon triangle carries the one-sided flux 11.7.
        let right = mesh.edge_between(1, 2).unwrap();
        assert!((j[right][0] - 11.7 * 11.7).abs() < 1e-12);
        assert_eq!(j[right][1], 0.0);
    }

    #[test]
    fn expected_of_one_is_itself() {
        let f = IndicatorField { mesh_id: 3, parts: vec![[1.0, 0.0, 0.0, 0.5, 0.0, 0.0]; 2], eta2: vec![1.5; 2] };
        let e = expected_indicators(core::slice::from_ref(&f)).unwrap();
        assert_eq!(e.eta2, f.eta2);
        let g = IndicatorField { mesh_id: 4, ..f.clone() };
        assert_eq!(expected_indicators(&[f, g]), Err(Error::MeshMismatch));
        assert_eq!(expected_indicators(&[]), Err(Error::EmptySamples));
    }

    #[test]
    fn edge_exponential_integral() {
        let exact = (libm::exp(2.0 * 1.3) - libm::exp(2.0 * 0.4)) / (2.0 * 0.9);
        assert!((mean_exp2(0.4, 1.3) - exact).abs() < 1e-12 * exact);
        assert!((mean_exp2(0.7, 0.7) - libm::exp(1.4)).abs() < 1e-12);
    }
}
