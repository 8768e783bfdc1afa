//! Plain-text output formats.
//!
//! Floats are written with Rust's shortest round-trip representation, so a
//! file read back parses to the exact values that were written.

use amlmc_core::adapt::MeshHierarchy;
use amlmc_core::ddp::{Densities, SolutionTriple};
use amlmc_core::estimator::IndicatorField;
use amlmc_core::mesh::{BoundaryTag, ElementSpec, Mesh, RegionTag, TaggedEdge};
use amlmc_core::mlmc::{MlmcEstimate, RateFit};
use std::fmt::Write as _;
use std::io::{self, BufRead};

#[derive(Debug, thiserror::Error)]
pub enum FormatError {
    #[error("line {line}: {reason}")]
    Parse { line: usize, reason: String },
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error(transparent)]
    Core(#[from] amlmc_core::Error),
}

fn bad(line: usize, reason: impl Into<String>) -> FormatError {
    FormatError::Parse { line, reason: reason.into() }
}

/// `vertices N elements M`, then `id x y`, `id v0 v1 v2 region` and
/// `v0 v1 tag` lines.
pub fn mesh_text(mesh: &Mesh) -> String {
    let mut s = String::new();
    writeln!(s, "vertices {} elements {}", mesh.num_vertices(), mesh.num_elements()).unwrap();
    for (i, p) in mesh.vertices().iter().enumerate() {
        writeln!(s, "{i} {} {}", p[0], p[1]).unwrap();
    }
    for (t, el) in mesh.elements().iter().enumerate() {
        let [a, b, c] = el.vertices;
        writeln!(s, "{t} {a} {b} {c} {}", el.region.name()).unwrap();
    }
    for e in mesh.tagged_edges() {
        writeln!(s, "{} {} {}", e.vertices[0], e.vertices[1], e.tag.name()).unwrap();
    }
    s
}

/// Inverse of [`mesh_text`]. Refinement edges and lineage are not stored, so
/// the result is a fresh level-0 mesh with the same geometry and tags.
pub fn read_mesh<R: BufRead>(r: R) -> Result<Mesh, FormatError> {
    let mut lines = r.lines().enumerate();
    let (_, head) = lines.next().ok_or_else(|| bad(1, "empty file"))?;
    let head = head?;
    let f: Vec<&str> = head.split_whitespace().collect();
    let (nv, ne) = match f.as_slice() {
        ["vertices", n, "elements", m] => (
            n.parse::<usize>().map_err(|_| bad(1, "vertex count"))?,
            m.parse::<usize>().map_err(|_| bad(1, "element count"))?,
        ),
        _ => return Err(bad(1, "expected `vertices N elements M`")),
    };
    let mut vertices = Vec::with_capacity(nv);
    let mut elements = Vec::with_capacity(ne);
    let mut tagged = Vec::new();
    for (i, line) in lines {
        let line = line?;
        let no = i + 1;
        let f: Vec<&str> = line.split_whitespace().collect();
        if f.is_empty() {
            continue;
        }
        let num = |k: usize| -> Result<f64, FormatError> { f[k].parse().map_err(|_| bad(no, "number expected")) };
        let idx = |k: usize| -> Result<u32, FormatError> { f[k].parse().map_err(|_| bad(no, "index expected")) };
        if vertices.len() < nv {
            if f.len() != 3 || idx(0)? as usize != vertices.len() {
                return Err(bad(no, "expected `id x y`"));
            }
            vertices.push([num(1)?, num(2)?]);
        } else if elements.len() < ne {
            if f.len() != 5 || idx(0)? as usize != elements.len() {
                return Err(bad(no, "expected `id v0 v1 v2 region`"));
            }
            let region = RegionTag::from_name(f[4]).ok_or_else(|| bad(no, "unknown region"))?;
            elements.push(ElementSpec { vertices: [idx(1)?, idx(2)?, idx(3)?], region, refinement_edge: 0, parent: None });
        } else {
            if f.len() != 3 {
                return Err(bad(no, "expected `v0 v1 tag`"));
            }
            let tag = BoundaryTag::from_name(f[2]).ok_or_else(|| bad(no, "unknown boundary tag"))?;
            tagged.push(TaggedEdge { vertices: [idx(0)?, idx(1)?], tag });
        }
    }
    if vertices.len() < nv || elements.len() < ne {
        return Err(bad(0, "file ends early"));
    }
    Ok(Mesh::new(vertices, elements, tagged)?)
}

/// `vertex,x,y,V,u,v,n,p` with V in volts and densities in cm^-3.
pub fn solution_csv(mesh: &Mesh, sol: &SolutionTriple, dens: &Densities, u_t: f64) -> String {
    let mut s = String::from("vertex,x,y,V,u,v,n,p\n");
    for (i, p) in mesh.vertices().iter().enumerate() {
        writeln!(
            s,
            "{i},{},{},{},{},{},{},{}",
            p[0],
            p[1],
            sol.psi[i] * u_t,
            sol.u[i],
            sol.v[i],
            dens.n[i],
            dens.p[i]
        )
        .unwrap();
    }
    s
}

/// `element,eta2,r1,r2,r3,jumpV,jumpU,jumpP` with the weighted contributions.
pub fn indicator_csv(ind: &IndicatorField) -> String {
    let mut s = String::from("element,eta2,r1,r2,r3,jumpV,jumpU,jumpP\n");
    for (t, (e, p)) in ind.eta2.iter().zip(&ind.parts).enumerate() {
        writeln!(s, "{t},{e},{},{},{},{},{},{}", p[0], p[1], p[2], p[3], p[4], p[5]).unwrap();
    }
    s
}

/// A header row and numeric records.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl Table {
    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let k = self.header.iter().position(|h| h == name)?;
        Some(self.rows.iter().map(|r| r[k]).collect())
    }
}

/// Reads a numeric CSV, skipping `#` lines. Empty cells read as NaN.
pub fn read_csv(text: &str) -> Result<Table, FormatError> {
    let mut header = None;
    let mut rows = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let cells: Vec<&str> = line.split(',').map(str::trim).collect();
        match &header {
            None => header = Some(cells.iter().map(|c| c.to_string()).collect::<Vec<_>>()),
            Some(h) => {
                if cells.len() != h.len() {
                    return Err(bad(i + 1, format!("{} cells, header has {}", cells.len(), h.len())));
                }
                let row = cells
                    .iter()
                    .map(|c| if c.is_empty() { Ok(f64::NAN) } else { c.parse().map_err(|_| bad(i + 1, format!("`{c}`"))) })
                    .collect::<Result<Vec<f64>, _>>()?;
                rows.push(row);
            }
        }
    }
    Ok(Table { header: header.ok_or_else(|| bad(0, "no header"))?, rows })
}

fn opt(x: Option<f64>) -> String {
    x.map(|v| v.to_string()).unwrap_or_default()
}

/// Level table of a hierarchy behind a few `# key = value` lines.
pub fn manifest_text(h: &MeshHierarchy) -> String {
    let mut s = String::new();
    writeln!(s, "# mode = {}", h.mode.name()).unwrap();
    writeln!(s, "# theta = {}", h.theta).unwrap();
    writeln!(s, "# pilot_samples = {}", h.pilot_samples).unwrap();
    writeln!(s, "# seed = {}", h.seed).unwrap();
    writeln!(s, "# epsilon = {}", h.epsilon).unwrap();
    writeln!(s, "# alpha = {}", h.alpha).unwrap();
    writeln!(s, "# converged = {}", h.converged).unwrap();
    s.push_str(
        "level,elements,vertices,N_P,N_DD,N,eta2,eta2_r1,eta2_r2,eta2_r3,eta2_jV,eta2_jU,eta2_jP,\
         difference,disc_error,var_Y,qoi_mean,qoi_var,current_mean,samples,failed,gummel_iterations\n",
    );
    for r in &h.levels {
        let p = r.eta2_parts;
        writeln!(
            s,
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            r.level,
            r.elements,
            r.vertices,
            r.poisson_dofs,
            r.dd_dofs,
            r.dofs,
            r.eta2,
            p[0],
            p[1],
            p[2],
            p[3],
            p[4],
            p[5],
            opt(r.difference),
            r.disc_error,
            r.variance,
            r.qoi_mean,
            r.qoi_variance,
            r.current_mean,
            r.samples_used,
            r.samples_failed,
            r.mean_gummel_iterations
        )
        .unwrap();
    }
    s
}

/// Value of a `# key = value` line.
pub fn header_value<'a>(text: &'a str, key: &str) -> Option<&'a str> {
    text.lines().filter_map(|l| l.strip_prefix('#')).find_map(|l| {
        let (k, v) = l.split_once('=')?;
        (k.trim() == key).then(|| v.trim())
    })
}

/// `level,N,M,mean_qoi,var_Y,cost`, where `cost` is `M N`.
pub fn mlmc_csv(est: &MlmcEstimate) -> String {
    let mut s = String::from("level,N,M,mean_qoi,var_Y,cost\n");
    for l in &est.levels {
        writeln!(s, "{},{},{},{},{},{}", l.level, l.dofs, l.samples, l.mean_qoi, l.variance, l.cost * l.samples as f64)
            .unwrap();
    }
    s
}

/// JSON-like summary block of one MLMC run. Wall time is left out so the
/// block is reproducible; it goes to the timing file instead.
pub fn mlmc_summary(est: &MlmcEstimate, fit: Option<&RateFit>) -> String {
    let mut s = String::from("{\n");
    let mut field = |k: &str, v: String| writeln!(s, "  \"{k}\": {v},").unwrap();
    field("epsilon", est.epsilon.to_string());
    field("L", est.finest_level.to_string());
    let f = |g: fn(&RateFit) -> f64| fit.map(|r| g(r).to_string()).unwrap_or_else(|| "null".into());
    field("alpha", f(|r| r.alpha));
    field("beta", f(|r| r.beta));
    field("C0", f(|r| r.c0));
    field("C1", f(|r| r.c1));
    field("C2", f(|r| r.c2));
    field("qoi", est.qoi.to_string());
    field("statistical_error2", est.statistical_error2.to_string());
    field("discretization_error2", est.discretization_error2.to_string());
    field("rounds", est.rounds.to_string());
    field("failed", est.levels.iter().map(|l| l.failed).sum::<usize>().to_string());
    writeln!(s, "  \"total_cost\": {}", est.total_cost).unwrap();
    s.push_str("}\n");
    s
}

/// `mode=...` block of fitted rates.
pub fn rates_block(mode: &str, fit: &RateFit, levels: usize) -> String {
    format!(
        "mode={mode}\nlevels = {levels}\nalpha = {}\nbeta = {}\nC0 = {}\nC1 = {}\nC2 = {}\nalpha_residual = {}\nbeta_residual = {}\n",
        fit.alpha, fit.beta, fit.c0, fit.c1, fit.c2, fit.alpha_residual, fit.beta_residual
    )
}

/// Parses blocks written by [`rates_block`] into `(mode, key, value)` triples.
pub fn read_rates(text: &str) -> Vec<(String, String, f64)> {
    let mut mode = String::new();
    let mut out = Vec::new();
    for l in text.lines() {
        if let Some(m) = l.strip_prefix("mode=") {
            mode = m.trim().to_string();
        } else if let Some((k, v)) = l.split_once('=') {
            if let Ok(x) = v.trim().parse() {
                out.push((mode.clone(), k.trim().to_string(), x));
            }
        }
    }
    out
}

/// Two-column `x y` curve.
pub fn curve_text(points: &[(f64, f64)]) -> String {
    let mut s = String::new();
    for (x, y) in points {
        writeln!(s, "{x} {y}").unwrap();
    }
    s
}

pub fn read_curve(text: &str) -> Result<Vec<(f64, f64)>, FormatError> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty() && !l.starts_with('#'))
        .map(|(i, l)| {
            let mut f = l.split_whitespace().map(str::parse::<f64>);
            match (f.next(), f.next(), f.next()) {
                (Some(Ok(x)), Some(Ok(y)), None) => Ok((x, y)),
                _ => Err(bad(i + 1, "expected `x y`")),
            }
        })
        .collect()
}

/// One curve entry of the plot manifest.
#[derive(Debug, Clone, PartialEq)]
pub struct CurveEntry {
    pub file: String,
    pub figure: String,
    pub label: String,
    pub x: String,
    pub y: String,
}

/// `file,figure,label,x,y` lines.
pub fn curve_manifest(entries: &[CurveEntry]) -> String {
    let mut s = String::from("file,figure,label,x,y\n");
    for e in entries {
        writeln!(s, "{},{},{},{},{}", e.file, e.figure, e.label, e.x, e.y).unwrap();
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_round_trip() {
        let t = read_csv("# c\na,b\n1,0.1\n2,\n").unwrap();
        assert_eq!(t.column("a").unwrap(), vec![1.0, 2.0]);
        assert!(t.rows[1][1].is_nan());
        assert!(read_csv("a,b\n1\n").is_err());
    }

    #[test]
    fn curve_round_trip() {
        let p = vec![(1.0, 0.1 + 0.2), (1e-300, -3.5e7)];
        assert_eq!(read_curve(&curve_text(&p)).unwrap(), p);
    }

    #[test]
    fn rates_round_trip() {
        let fit = RateFit { alpha: 1.5, beta: 2.25, c0: 3.0, c1: 4.0, c2: 5.0, alpha_residual: 0.1, beta_residual: 0.2 };
        let text = rates_block("adaptive", &fit, 5) + &rates_block("uniform", &fit, 4);
        let r = read_rates(&text);
        assert!(r.contains(&("uniform".into(), "levels".into(), 4.0)));
        assert!(r.contains(&("adaptive".into(), "beta".into(), 2.25)));
    }

    #[test]
    fn header_values() {
        assert_eq!(header_value("# mode = uniform\nx\n", "mode"), Some("uniform"));
        assert_eq!(header_value("# mode = uniform\n", "seed"), None);
    }
}
