//! Structured seed triangulations of rectangle decompositions.

use super::{BoundaryTag, ElementSpec, Mesh, Point, RegionTag, TaggedEdge};
use crate::device::{DeviceSpec, Geometry};
use crate::error::{Error, Result};
use crate::math;
use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

/// Tensor-product grid over breakpoint lists. Every segment between two
/// breakpoints is split into `ceil(len / target_h)` equal cells, so region
/// boundaries are always resolved by mesh lines.
#[derive(Debug, Clone, PartialEq)]
pub struct StructuredGrid {
    pub x_breaks: Vec<f64>,
    pub y_breaks: Vec<f64>,
    pub target_h: f64,
}

impl StructuredGrid {
    fn lines(breaks: &[f64], h: f64) -> Result<Vec<f64>> {
        if breaks.len() < 2 {
            return Err(Error::Geometry("need at least two breakpoints".into()));
        }
        let mut out = vec![breaks[0]];
        for w in breaks.windows(2) {
            let len = w[1] - w[0];
            if !(len > 0.0) || !len.is_finite() {
                return Err(Error::Geometry(format!("segment [{}, {}] has non-positive length", w[0], w[1])));
            }
            let n = (math::ceil(len / h - 1e-9) as usize).max(1);
            for k in 1..=n {
                out.push(if k == n { w[1] } else { w[0] + len * k as f64 / n as f64 });
            }
        }
        Ok(out)
    }

    /// Triangulates every cell whose centre `region` classifies, cutting each
    /// cell along its south-west/north-east diagonal. Boundary edges are tagged
    /// by `boundary_tag(midpoint)`; edges between regions become interfaces.
    pub fn triangulate(
        &self,
        region: impl Fn(Point) -> Option<RegionTag>,
        boundary_tag: impl Fn(Point) -> BoundaryTag,
    ) -> Result<Mesh> {
        if !(self.target_h > 0.0) || !self.target_h.is_finite() {
            return Err(Error::Geometry(format!("target mesh width {} must be positive", self.target_h)));
        }
        let gx = Self::lines(&self.x_breaks, self.target_h)?;
        let gy = Self::lines(&self.y_breaks, self.target_h)?;
        let (nx, ny) = (gx.len() - 1, gy.len() - 1);
        let cell = |i: usize, j: usize| -> Option<RegionTag> {
            region([(gx[i] + gx[i + 1]) / 2.0, (gy[j] + gy[j + 1]) / 2.0])
        };
        let cells: Vec<Option<RegionTag>> =
            (0..ny).flat_map(|j| (0..nx).map(move |i| (i, j))).map(|(i, j)| cell(i, j)).collect();
        let at = |i: isize, j: isize| -> Option<RegionTag> {
            if i < 0 || j < 0 || i >= nx as isize || j >= ny as isize {
                None
            } else {
                cells[j as usize * nx + i as usize]
            }
        };

        let mut id = vec![u32::MAX; (nx + 1) * (ny + 1)];
        let mut vertices = Vec::new();
        for j in 0..=ny {
            for i in 0..=nx {
                let used = [(0, 0), (-1, 0), (0, -1), (-1, -1)]
                    .iter()
                    .any(|&(di, dj)| at(i as isize + di, j as isize + dj).is_some());
                if used {
                    id[j * (nx + 1) + i] = vertices.len() as u32;
                    vertices.push([gx[i], gy[j]]);
                }
            }
        }
        let vid = |i: usize, j: usize| id[j * (nx + 1) + i];

        let mut elements = Vec::new();
        let mut tagged = Vec::new();
        for j in 0..ny {
            for i in 0..nx {
                let Some(r) = at(i as isize, j as isize) else { continue };
                let (a, b, c, d) = (vid(i, j), vid(i + 1, j), vid(i + 1, j + 1), vid(i, j + 1));
                let diag_longest = |p: [u32; 3]| {
                    let pts = p.map(|v| vertices[v as usize]);
                    (0..3)
                        .max_by(|&x, &y| {
                            let lx = super::distance(pts[(x + 1) % 3], pts[(x + 2) % 3]);
                            let ly = super::distance(pts[(y + 1) % 3], pts[(y + 2) % 3]);
                            lx.partial_cmp(&ly).unwrap().then(y.cmp(&x))
                        })
                        .unwrap() as u8
                };
                for tri in [[a, b, c], [a, c, d]] {
                    elements.push(ElementSpec { vertices: tri, region: r, refinement_edge: diag_longest(tri), parent: None });
                }
                // (neighbour offset, edge endpoints in counterclockwise cell order)
                let sides = [((0, -1), [a, b]), ((1, 0), [b, c]), ((0, 1), [c, d]), ((-1, 0), [d, a])];
                for ((di, dj), [p, q]) in sides {
                    match at(i as isize + di, j as isize + dj) {
                        None => {
                            let (pp, qp) = (vertices[p as usize], vertices[q as usize]);
                            let mid = [(pp[0] + qp[0]) / 2.0, (pp[1] + qp[1]) / 2.0];
                            tagged.push(TaggedEdge { vertices: [p, q], tag: boundary_tag(mid) });
                        }
                        // Record each interface once, from its south/west cell.
                        Some(other) if other != r && (di, dj) >= (0, 0) => {
                            tagged.push(TaggedEdge { vertices: [p, q], tag: BoundaryTag::Interface });
                        }
                        Some(_) => {}
                    }
                }
            }
        }
        if elements.is_empty() {
            return Err(Error::Geometry("no cells inside the domain".into()));
        }
        Mesh::new(vertices, elements, tagged)
    }
}

/// Silicon rectangle `[0, width] x [0, height]` with one tag per side
/// (left, right, bottom, top).
pub fn build_rectangle_mesh(width: f64, height: f64, target_h: f64, sides: [BoundaryTag; 4]) -> Result<Mesh> {
    let grid = StructuredGrid { x_breaks: vec![0.0, width], y_breaks: vec![0.0, height], target_h };
    let tol = 1e-9 * width.max(height);
    grid.triangulate(
        |_| Some(RegionTag::Silicon),
        |m| {
            if m[0].abs() < tol {
                sides[0]
            } else if (m[0] - width).abs() < tol {
                sides[1]
            } else if m[1].abs() < tol {
                sides[2]
            } else {
                sides[3]
            }
        },
    )
}

/// Initial triangulation of the device with cell sides at most `target_h` (nm).
///
/// The double-gate geometry is the silicon bar `[0, 2 L_SD + L_g] x [0, W]`
/// (source, channel, drain) plus two oxide strips of thickness `t_ox` above
/// and below the channel. Gates sit on the outer oxide faces, source and drain
/// contacts on the bar ends; everything else is zero-Neumann.
pub fn build_device_mesh(spec: &DeviceSpec, target_h: f64) -> Result<Mesh> {
    spec.validate_geometry()?;
    match spec.geometry {
        Geometry::DoubleGate => {
            let (lsd, lg, w, tox) =
                (spec.source_drain_length, spec.gate_length, spec.channel_width, spec.oxide_thickness);
            let xmax = 2.0 * lsd + lg;
            let tol = 1e-9 * xmax;
            let grid = StructuredGrid {
                x_breaks: vec![0.0, lsd, lsd + lg, xmax],
                y_breaks: vec![-tox, 0.0, w, w + tox],
                target_h,
            };
            grid.triangulate(
                |p| {
                    if p[1] > 0.0 && p[1] < w {
                        Some(RegionTag::Silicon)
                    } else if p[0] > lsd && p[0] < lsd + lg {
                        Some(RegionTag::Oxide)
                    } else {
                        None
                    }
                },
                |m| {
                    if m[0].abs() < tol {
                        BoundaryTag::DirichletSource
                    } else if (m[0] - xmax).abs() < tol {
                        BoundaryTag::DirichletDrain
                    } else if (m[1] + tox).abs() < tol || (m[1] - w - tox).abs() < tol {
                        BoundaryTag::DirichletGate
                    } else {
                        BoundaryTag::Neumann
                    }
                },
            )
        }
        Geometry::Slab { length, width } => {
            let tol = 1e-9 * length;
            let grid = StructuredGrid { x_breaks: vec![0.0, length], y_breaks: vec![0.0, width], target_h };
            grid.triangulate(
                |_| Some(RegionTag::Silicon),
                |m| {
                    if m[0].abs() < tol {
                        BoundaryTag::DirichletSource
                    } else if (m[0] - length).abs() < tol {
                        BoundaryTag::DirichletDrain
                    } else {
                        BoundaryTag::Neumann
                    }
                },
            )
        }
    }
}
