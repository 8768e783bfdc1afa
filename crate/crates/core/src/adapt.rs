//! Dörfler marking and construction of the mesh hierarchy from pilot samples.

use crate::ddp::{Discretization, GummelConfig, SolutionTriple};
use crate::device::{sample_dopants, DeviceSpec};
use crate::error::{Error, Result};
use crate::estimator::{indicators, EstimatorConfig};
use crate::exec::Executor;
use crate::fem::prolong;
use crate::math;
use crate::mesh::{build_device_mesh, mesh_quality, refine_bisect, uniform_refine, Mesh};
use crate::mlmc::{combined_norm, fit_line, physical_fields, FieldStats, Fields, ScalarStats};
use crate::rng::sample_stream;
use alloc::vec;
use alloc::vec::Vec;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MarkingConfig {
    pub theta: f64,
}

impl Default for MarkingConfig {
    fn default() -> Self {
        MarkingConfig { theta: 0.6 }
    }
}

/// Smallest set of elements whose indicators sum to at least `theta` times the
/// total. Elements are taken by decreasing indicator, ties by increasing id.
pub fn dorfler_mark(eta2: &[f64], cfg: &MarkingConfig) -> Result<Vec<usize>> {
    if !(0.0..=1.0).contains(&cfg.theta) {
        return Err(Error::InvalidParameter { name: "theta", reason: alloc::format!("{} not in [0, 1]", cfg.theta) });
    }
    if let Some(&bad) = eta2.iter().find(|x| !(x.is_finite() && **x >= 0.0)) {
        return Err(Error::NonPositiveData { what: "indicator", value: bad });
    }
    let mut order: Vec<usize> = (0..eta2.len()).collect();
    order.sort_by(|&a, &b| eta2[b].total_cmp(&eta2[a]).then(a.cmp(&b)));
    let total: f64 = order.iter().map(|&t| eta2[t]).sum();
    let target = cfg.theta * total;
    let mut acc = 0.0;
    let mut marked = Vec::new();
    for &t in &order {
        if acc >= target && !(cfg.theta == 1.0 && eta2[t] > 0.0) {
            break;
        }
        if eta2[t] == 0.0 {
            break;
        }
        acc += eta2[t];
        marked.push(t);
    }
    Ok(marked)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RefinementMode {
    Adaptive,
    Uniform,
}

impl RefinementMode {
    pub fn name(self) -> &'static str {
        match self {
            RefinementMode::Adaptive => "adaptive",
            RefinementMode::Uniform => "uniform",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HierarchyConfig {
    pub mode: RefinementMode,
    pub marking: MarkingConfig,
    pub pilot_samples: usize,
    pub epsilon: f64,
    pub max_levels: usize,
    pub seed: u64,
    /// Cell size of the initial structured mesh (nm).
    pub initial_h: f64,
    /// Rate used for extrapolation until two level differences are known.
    pub default_alpha: f64,
    pub estimator: EstimatorConfig,
    pub gummel: GummelConfig,
}

impl Default for HierarchyConfig {
    fn default() -> Self {
        HierarchyConfig {
            mode: RefinementMode::Adaptive,
            marking: MarkingConfig::default(),
            pilot_samples: 100,
            epsilon: 1e-3,
            max_levels: 6,
            seed: 1,
            initial_h: 2.5,
            default_alpha: 1.0,
            estimator: EstimatorConfig::default(),
            gummel: GummelConfig::default(),
        }
    }
}

/// Pilot statistics of one level.
#[derive(Debug, Clone, PartialEq)]
pub struct LevelRecord {
    pub level: usize,
    pub elements: usize,
    pub vertices: usize,
    pub poisson_dofs: usize,
    pub dd_dofs: usize,
    /// `N_P + 2 N_DD`.
    pub dofs: usize,
    /// Sample mean of the global `eta^2`.
    pub eta2: f64,
    /// The same split into r1, r2, r3 and the three jump terms.
    pub eta2_parts: [f64; 6],
    /// `|E[w_l] - E[w_{l-1}]|`; absent on level 0.
    pub difference: Option<f64>,
    /// Estimated `|E[w] - E[w_l]|`.
    pub disc_error: f64,
    /// `sigma^2[Y_l]` in the combined field norm.
    pub variance: f64,
    /// Mean and variance of the drain-current difference.
    pub qoi_mean: f64,
    pub qoi_variance: f64,
    pub current_mean: f64,
    pub samples_used: usize,
    pub samples_failed: usize,
    pub mean_gummel_iterations: f64,
    pub seconds: Option<f64>,
}

/// Nested meshes with the pilot statistics that produced them.
#[derive(Debug, Clone)]
pub struct MeshHierarchy {
    pub mode: RefinementMode,
    pub meshes: Vec<Mesh>,
    pub levels: Vec<LevelRecord>,
    /// Pilot means of (V in volts, u, v) per level.
    pub mean_fields: Vec<Fields>,
    /// Estimated error of every level is below `epsilon / sqrt 2` on the last one.
    pub converged: bool,
    /// Rate used to extrapolate the discretization error.
    pub alpha: f64,
    pub theta: f64,
    pub pilot_samples: usize,
    pub seed: u64,
    pub epsilon: f64,
}

impl MeshHierarchy {
    pub fn len(&self) -> usize {
        self.meshes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.meshes.is_empty()
    }

    pub fn dofs(&self) -> Vec<f64> {
        self.levels.iter().map(|l| l.dofs as f64).collect()
    }

    pub fn disc_errors(&self) -> Vec<f64> {
        self.levels.iter().map(|l| l.disc_error).collect()
    }

    pub fn variances(&self) -> Vec<f64> {
        self.levels.iter().map(|l| l.variance).collect()
    }

    /// `|E[w_l] - E[w_L]|` against the finest pilot mean, for every level.
    pub fn reference_errors(&self) -> Result<Vec<f64>> {
        let last = self.len() - 1;
        let mut out = Vec::with_capacity(self.len());
        for l in 0..self.len() {
            let mut f = self.mean_fields[l].clone();
            for k in l..last {
                f = prolong_fields(&f, &self.meshes[k], &self.meshes[k + 1])?;
            }
            out.push(difference_norm(&self.meshes[last], &self.mean_fields[last], &f));
        }
        Ok(out)
    }
}

pub(crate) fn prolong_fields(f: &Fields, coarse: &Mesh, fine: &Mesh) -> Result<Fields> {
    Ok([prolong(&f[0], coarse, fine)?, prolong(&f[1], coarse, fine)?, prolong(&f[2], coarse, fine)?])
}

fn difference_norm(mesh: &Mesh, a: &Fields, b: &Fields) -> f64 {
    let d: Fields = core::array::from_fn(|k| a[k].iter().zip(&b[k]).map(|(x, y)| x - y).collect());
    combined_norm(mesh, &d)
}

/// Discretization error per level from the differences `d_l` of consecutive
/// mean solutions (`d[0]` belongs to level 1) and the unknown counts `n`.
///
/// With `r_l = (N_{l+1} / N_l)^(-alpha)` the error of level `l` is estimated by
/// the geometric tail `d_{l+1} / (1 - r_l)`; the last level uses
/// `r d_L / (1 - r)`. `alpha` is fitted to the `d_l` when at least two are
/// known and clamped to `[0.25, 4]`. Returns the errors and the rate.
pub fn extrapolate_errors(n: &[f64], d: &[f64], default_alpha: f64) -> Result<(Vec<f64>, f64)> {
    if n.len() < 2 || d.len() != n.len() - 1 {
        return Err(Error::InsufficientData { what: "discretization error estimate", needed: 2, got: n.len() });
    }
    let alpha = if d.len() >= 2 && d.iter().all(|&x| x > 0.0) {
        let x: Vec<f64> = n[1..].iter().map(|v| math::ln(*v)).collect();
        let y: Vec<f64> = d.iter().map(|v| math::ln(*v)).collect();
        -fit_line(&x, &y).0
    } else {
        default_alpha
    };
    let alpha = alpha.clamp(0.25, 4.0);
    let r = |a: f64, b: f64| math::powf(b / a, -alpha);
    let mut e = Vec::with_capacity(n.len());
    for l in 0..n.len() - 1 {
        e.push(d[l] / (1.0 - r(n[l], n[l + 1])));
    }
    let last = n.len() - 1;
    let rl = r(n[last - 1], n[last]);
    e.push(rl * d[last - 1] / (1.0 - rl));
    Ok((e, alpha))
}

/// Discretization errors of a solved hierarchy prefix from its pilot means.
pub fn estimate_discretization_error(meshes: &[Mesh], means: &[Fields], default_alpha: f64) -> Result<(Vec<f64>, f64)> {
    if meshes.len() < 2 || means.len() != meshes.len() {
        return Err(Error::InsufficientData { what: "discretization error estimate", needed: 2, got: meshes.len() });
    }
    let mut d = Vec::with_capacity(meshes.len() - 1);
    for l in 1..meshes.len() {
        let p = prolong_fields(&means[l - 1], &meshes[l - 1], &meshes[l])?;
        d.push(difference_norm(&meshes[l], &means[l], &p));
    }
    let n: Vec<f64> = meshes.iter().map(|m| mesh_quality(m).combined_dofs() as f64).collect();
    extrapolate_errors(&n, &d, default_alpha)
}

struct PilotOutcome {
    sol: Option<SolutionTriple>,
    current: f64,
    eta2: Vec<f64>,
    parts: [f64; 6],
}

/// Solves every pilot sample on `mesh`, warm-started from the previous level.
fn solve_pilots<E: Executor>(
    mesh: &Mesh,
    spec: &DeviceSpec,
    cfg: &HierarchyConfig,
    previous: Option<(&Mesh, &[Option<SolutionTriple>])>,
    exec: &E,
) -> Result<Vec<PilotOutcome>> {
    let disc = Discretization::new(mesh, spec)?;
    let outcomes = exec.map(cfg.pilot_samples, |i| {
        let sample = sample_dopants(spec, &mut sample_stream(cfg.seed, 0, i as u64));
        let warm = match previous {
            Some((coarse, sols)) => sols[i].as_ref().and_then(|s| s.prolong(coarse, mesh).ok()),
            None => None,
        };
        let sol = match disc.gummel_solve(&sample, warm.as_ref(), &cfg.gummel) {
            Ok(s) => s,
            Err(e) => {
                log::warn!("pilot sample {i} failed on level {}: {e}", mesh.level());
                return PilotOutcome { sol: None, current: f64::NAN, eta2: Vec::new(), parts: [0.0; 6] };
            }
        };
        let ind = indicators(&disc, &sol, &sample, &cfg.estimator);
        let mut parts = [0.0; 6];
        for p in &ind.parts {
            for k in 0..6 {
                parts[k] += p[k];
            }
        }
        let current = disc.densities_and_current(&sol).current;
        PilotOutcome { sol: Some(sol), current, eta2: ind.eta2, parts }
    });
    Ok(outcomes)
}

struct SolvedLevel {
    record: LevelRecord,
    mean: Fields,
    mean_eta2: Vec<f64>,
    sols: Vec<Option<SolutionTriple>>,
    currents: Vec<f64>,
}

fn summarize(
    mesh: &Mesh,
    spec: &DeviceSpec,
    outcomes: Vec<PilotOutcome>,
    previous: Option<(&Mesh, &SolvedLevel)>,
    seconds: Option<f64>,
) -> Result<SolvedLevel> {
    let q = mesh_quality(mesh);
    let u_t = spec.u_t;
    let mut fields = FieldStats::new(mesh);
    let mut diffs = FieldStats::new(mesh);
    let mut qoi = ScalarStats::default();
    let mut current = ScalarStats::default();
    let mut eta_sum = vec![0.0; mesh.num_elements()];
    let mut parts = [0.0; 6];
    let (mut used, mut failed, mut iterations) = (0usize, 0usize, 0usize);
    let mut sols = Vec::with_capacity(outcomes.len());
    let mut currents = Vec::with_capacity(outcomes.len());
    for (i, o) in outcomes.into_iter().enumerate() {
        currents.push(o.current);
        let ok = o.sol.as_ref().is_some_and(|s| s.converged);
        let coarse_ok = previous.is_none_or(|(_, p)| p.sols[i].as_ref().is_some_and(|s| s.converged));
        if let Some(s) = &o.sol {
            iterations += s.iterations;
        }
        if !(ok && coarse_ok) {
            failed += 1;
            sols.push(o.sol);
            continue;
        }
        let sol = o.sol.as_ref().unwrap();
        let w = physical_fields(sol, u_t);
        fields.push(&w)?;
        for (acc, x) in eta_sum.iter_mut().zip(&o.eta2) {
            *acc += x;
        }
        for k in 0..6 {
            parts[k] += o.parts[k];
        }
        current.push(o.current);
        match previous {
            None => {
                diffs.push(&w)?;
                qoi.push(o.current);
            }
            Some((coarse, p)) => {
                let c = physical_fields(p.sols[i].as_ref().unwrap(), u_t);
                let c = prolong_fields(&c, coarse, mesh)?;
                let y: Fields = core::array::from_fn(|k| w[k].iter().zip(&c[k]).map(|(a, b)| a - b).collect());
                diffs.push(&y)?;
                qoi.push(o.current - p.currents[i]);
            }
        }
        used += 1;
        sols.push(o.sol);
    }
    if used == 0 {
        return Err(Error::EmptySamples);
    }
    let m = used as f64;
    eta_sum.iter_mut().for_each(|x| *x /= m);
    let parts = parts.map(|x| x / m);
    let record = LevelRecord {
        level: mesh.level(),
        elements: q.elements,
        vertices: q.vertices,
        poisson_dofs: q.poisson_dofs,
        dd_dofs: q.dd_dofs,
        dofs: q.combined_dofs(),
        eta2: parts.iter().sum(),
        eta2_parts: parts,
        difference: None,
        disc_error: f64::NAN,
        variance: diffs.variance(),
        qoi_mean: qoi.mean(),
        qoi_variance: qoi.variance(),
        current_mean: current.mean(),
        samples_used: used,
        samples_failed: failed,
        mean_gummel_iterations: iterations as f64 / sols.len() as f64,
        seconds,
    };
    Ok(SolvedLevel { record, mean: fields.mean(), mean_eta2: eta_sum, sols, currents })
}

/// Builds the hierarchy level by level from the pilot samples until the
/// estimated discretization error drops below `epsilon / sqrt 2` or
/// `max_levels` meshes exist.
///
/// The stopping test for level `l` needs the mean solution of level `l + 1`,
/// so one level beyond the returned hierarchy is always solved; its data only
/// enters the error estimate.
pub fn build_hierarchy<E: Executor>(spec: &DeviceSpec, cfg: &HierarchyConfig, exec: &E) -> Result<MeshHierarchy> {
    if cfg.pilot_samples < 2 {
        return Err(Error::InvalidParameter { name: "pilot_samples", reason: "at least 2 are needed".into() });
    }
    if !(cfg.epsilon > 0.0) {
        return Err(Error::InfeasibleTolerance(cfg.epsilon));
    }
    if cfg.max_levels == 0 {
        return Err(Error::InvalidParameter { name: "max_levels", reason: "must be positive".into() });
    }
    cfg.gummel.validate()?;
    let tol = cfg.epsilon / math::sqrt(2.0);

    let mut meshes = vec![build_device_mesh(spec, cfg.initial_h)?];
    let mut solved: Vec<SolvedLevel> = Vec::new();
    let mut accepted = None;
    loop {
        let l = meshes.len() - 1;
        let t0 = exec.seconds();
        let prev = solved.last().map(|s: &SolvedLevel| (&meshes[l - 1], s.sols.as_slice()));
        let outcomes = solve_pilots(&meshes[l], spec, cfg, prev, exec)?;
        let secs = exec.seconds().zip(t0).map(|(a, b)| a - b);
        let level = summarize(&meshes[l], spec, outcomes, solved.last().map(|s| (&meshes[l - 1], s)), secs)?;
        log::info!(
            "{} level {l}: {} elements, N = {}, eta^2 = {:.4e}, sigma^2[Y] = {:.4e}, {} failed",
            cfg.mode.name(),
            level.record.elements,
            level.record.dofs,
            level.record.eta2,
            level.record.variance,
            level.record.samples_failed
        );
        solved.push(level);

        if l >= 1 {
            let means: Vec<Fields> = solved.iter().map(|s| s.mean.clone()).collect();
            let (e, _) = estimate_discretization_error(&meshes, &means, cfg.default_alpha)?;
            if e[l - 1] <= tol {
                accepted = Some(l);
                break;
            }
        }
        if meshes.len() == cfg.max_levels {
            break;
        }
        let next = match cfg.mode {
            RefinementMode::Adaptive => {
                let marked = dorfler_mark(&solved[l].mean_eta2, &cfg.marking)?;
                refine_bisect(&meshes[l], &marked)?
            }
            RefinementMode::Uniform => uniform_refine(&meshes[l])?,
        };
        meshes.push(next);
    }

    let means: Vec<Fields> = solved.iter().map(|s| s.mean.clone()).collect();
    let (errors, alpha) = if meshes.len() >= 2 {
        estimate_discretization_error(&meshes, &means, cfg.default_alpha)?
    } else {
        (vec![f64::INFINITY], cfg.default_alpha)
    };
    let keep = accepted.unwrap_or(meshes.len());
    let converged = accepted.is_some() || errors.last().is_some_and(|&e| e <= tol);
    let mut levels: Vec<LevelRecord> = Vec::with_capacity(keep);
    for (l, s) in solved.iter().enumerate().take(keep) {
        let mut r = s.record.clone();
        r.disc_error = errors[l];
        if l >= 1 {
            let p = prolong_fields(&solved[l - 1].mean, &meshes[l - 1], &meshes[l])?;
            r.difference = Some(difference_norm(&meshes[l], &s.mean, &p));
        }
        levels.push(r);
    }
    meshes.truncate(keep);
    let mut mean_fields = means;
    mean_fields.truncate(keep);
    Ok(MeshHierarchy {
        mode: cfg.mode,
        meshes,
        levels,
        mean_fields,
        converged,
        alpha,
        theta: cfg.marking.theta,
        pilot_samples: cfg.pilot_samples,
        seed: cfg.seed,
        epsilon: cfg.epsilon,
    })
}
