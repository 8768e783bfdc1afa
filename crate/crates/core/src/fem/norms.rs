use super::assembly::{bary_point, ElementGeometry};
use super::quadrature::DEGREE5;
use crate::math;
use crate::mesh::{Mesh, Point, RegionTag};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Norms {
    pub l2: f64,
    pub h1_semi: f64,
}

fn in_region(mesh: &Mesh, t: usize, region: Option<RegionTag>) -> bool {
    region.is_none_or(|r| mesh.element(t).region == r)
}

/// `int f g` for P1 fields, exact (element mass matrices).
pub fn l2_inner(mesh: &Mesh, f: &[f64], g: &[f64], region: Option<RegionTag>) -> f64 {
    let mut s = 0.0;
    for (t, el) in mesh.elements().iter().enumerate() {
        if !in_region(mesh, t, region) {
            continue;
        }
        let [a, b, c] = el.vertices.map(|v| v as usize);
        let (fa, fb, fc) = (f[a], f[b], f[c]);
        let (ga, gb, gc) = (g[a], g[b], g[c]);
        s += el.area / 12.0 * (fa * ga + fb * gb + fc * gc + (fa + fb + fc) * (ga + gb + gc));
    }
    s
}

/// L2 norm and H1 seminorm of a P1 field over `region`.
pub fn norms(mesh: &Mesh, f: &[f64], region: Option<RegionTag>) -> Norms {
    let mut h1 = 0.0;
    for (t, el) in mesh.elements().iter().enumerate() {
        if !in_region(mesh, t, region) {
            continue;
        }
        let geo = ElementGeometry::new(mesh.element_points(t));
        let g = geo.gradient(el.vertices.map(|v| f[v as usize]));
        h1 += el.area * (g[0] * g[0] + g[1] * g[1]);
    }
    Norms { l2: math::sqrt(l2_inner(mesh, f, f, region).max(0.0)), h1_semi: math::sqrt(h1) }
}

/// Errors of a P1 field against an exact solution and its gradient, by
/// degree-5 quadrature.
pub fn error_norms(
    mesh: &Mesh,
    f: &[f64],
    exact: impl Fn(Point) -> f64,
    exact_grad: impl Fn(Point) -> [f64; 2],
    region: Option<RegionTag>,
) -> Norms {
    let (mut l2, mut h1) = (0.0, 0.0);
    for (t, el) in mesh.elements().iter().enumerate() {
        if !in_region(mesh, t, region) {
            continue;
        }
        let pts = mesh.element_points(t);
        let geo = ElementGeometry::new(pts);
        let local = el.vertices.map(|v| f[v as usize]);
        let g = geo.gradient(local);
        for (b, w) in DEGREE5 {
            let x = bary_point(&pts, b);
            let fh = b[0] * local[0] + b[1] * local[1] + b[2] * local[2];
            let e = exact(x) - fh;
            let ge = exact_grad(x);
            l2 += w * el.area * e * e;
            h1 += w * el.area * ((ge[0] - g[0]) * (ge[0] - g[0]) + (ge[1] - g[1]) * (ge[1] - g[1]));
        }
    }
    Norms { l2: math::sqrt(l2), h1_semi: math::sqrt(h1) }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::device::DeviceSpec;
    use crate::mesh::{build_device_mesh, uniform_refine};
    use alloc::vec::Vec;

    #[test]
    fn zero_and_linear_fields() {
        let m = build_device_mesh(&DeviceSpec::unit_square(), 0.25).unwrap();
        let z = alloc::vec![0.0; m.num_vertices()];
        assert_eq!(norms(&m, &z, None), Norms { l2: 0.0, h1_semi: 0.0 });
        let x: Vec<f64> = m.vertices().iter().map(|p| p[0]).collect();
        let n = norms(&m, &x, None);
        assert!((n.l2 - math::sqrt(1.0 / 3.0)).abs() < 1e-14);
        assert!((n.h1_semi - 1.0).abs() < 1e-14);
    }

    #[test]
    fn interpolation_error_quarters() {
        let pi = math::PI;
        let f = |p: Point| libm::sin(pi * p[0]) * libm::sin(pi * p[1]);
        let g = |p: Point| {
            [pi * libm::cos(pi * p[0]) * libm::sin(pi * p[1]), pi * libm::sin(pi * p[0]) * libm::cos(pi * p[1])]
        };
        let mut m = build_device_mesh(&DeviceSpec::unit_square(), 0.125).unwrap();
        let mut last: Option<f64> = None;
        for _ in 0..3 {
            let vals: Vec<f64> = m.vertices().iter().map(|&p| f(p)).collect();
            let e = error_norms(&m, &vals, f, g, None).l2;
            if let Some(prev) = last {
                let ratio = prev / e;
                assert!((ratio - 4.0).abs() < 0.2, "{ratio}");
            }
            last = Some(e);
            m = uniform_refine(&m).unwrap();
        }
    }
}
