//! Monte Carlo and multilevel Monte Carlo estimation on a frozen hierarchy.

use crate::adapt::{prolong_fields, MeshHierarchy};
use crate::ddp::{Discretization, GummelConfig, SolutionTriple};
use crate::device::{sample_dopants, DeviceSpec};
use crate::error::{Error, Result};
use crate::exec::Executor;
use crate::fem::l2_inner;
use crate::math;
use crate::mesh::{Mesh, RegionTag};
use crate::rng::sample_stream;
use alloc::vec;
use alloc::vec::Vec;

/// Potential in volts and the two Slotboom variables, as nodal fields.
pub type Fields = [Vec<f64>; 3];

pub fn physical_fields(sol: &SolutionTriple, u_t: f64) -> Fields {
    [sol.potential_volts(u_t), sol.u.clone(), sol.v.clone()]
}

/// `(V, V')_D + (u, u')_Si + (v, v')_Si`.
pub fn combined_inner(mesh: &Mesh, a: &Fields, b: &Fields) -> f64 {
    l2_inner(mesh, &a[0], &b[0], None)
        + l2_inner(mesh, &a[1], &b[1], Some(RegionTag::Silicon))
        + l2_inner(mesh, &a[2], &b[2], Some(RegionTag::Silicon))
}

pub fn combined_norm(mesh: &Mesh, a: &Fields) -> f64 {
    math::sqrt(combined_inner(mesh, a, a).max(0.0))
}

/// Streaming mean and variance of scalars (Welford).
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct ScalarStats {
    n: usize,
    mean: f64,
    m2: f64,
}

impl ScalarStats {
    pub fn push(&mut self, x: f64) {
        self.n += 1;
        let d = x - self.mean;
        self.mean += d / self.n as f64;
        self.m2 += d * (x - self.mean);
    }

    pub fn count(&self) -> usize {
        self.n
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    /// Unbiased sample variance; zero below two samples.
    pub fn variance(&self) -> f64 {
        if self.n < 2 {
            0.0
        } else {
            (self.m2 / (self.n - 1) as f64).max(0.0)
        }
    }
}

/// Streaming mean of nodal fields and their variance in the combined norm,
/// `1/(M-1) sum |w_i - mean|^2`.
#[derive(Debug, Clone)]
pub struct FieldStats<'m> {
    mesh: &'m Mesh,
    n: usize,
    mean: Fields,
    m2: f64,
}

impl<'m> FieldStats<'m> {
    pub fn new(mesh: &'m Mesh) -> Self {
        let z = vec![0.0; mesh.num_vertices()];
        FieldStats { mesh, n: 0, mean: [z.clone(), z.clone(), z], m2: 0.0 }
    }

    pub fn push(&mut self, w: &Fields) -> Result<()> {
        if w.iter().any(|f| f.len() != self.mesh.num_vertices()) {
            return Err(Error::MeshMismatch);
        }
        self.n += 1;
        let inv = 1.0 / self.n as f64;
        let before: Fields = core::array::from_fn(|k| w[k].iter().zip(&self.mean[k]).map(|(x, m)| x - m).collect());
        for k in 0..3 {
            for (m, d) in self.mean[k].iter_mut().zip(&before[k]) {
                *m += d * inv;
            }
        }
        let after: Fields = core::array::from_fn(|k| w[k].iter().zip(&self.mean[k]).map(|(x, m)| x - m).collect());
        self.m2 += combined_inner(self.mesh, &before, &after);
        Ok(())
    }

    pub fn count(&self) -> usize {
        self.n
    }

    pub fn mean(&self) -> Fields {
        self.mean.clone()
    }

    pub fn variance(&self) -> f64 {
        if self.n < 2 {
            0.0
        } else {
            (self.m2 / (self.n - 1) as f64).max(0.0)
        }
    }
}

/// Arithmetic mean of field samples on a common mesh.
pub fn mc_mean(samples: &[Fields]) -> Result<Fields> {
    let first = samples.first().ok_or(Error::EmptySamples)?;
    let mut out: Fields = core::array::from_fn(|k| vec![0.0; first[k].len()]);
    for s in samples {
        for k in 0..3 {
            if s[k].len() != out[k].len() {
                return Err(Error::MeshMismatch);
            }
            for (o, x) in out[k].iter_mut().zip(&s[k]) {
                *o += x;
            }
        }
    }
    let m = samples.len() as f64;
    for f in &mut out {
        f.iter_mut().for_each(|x| *x /= m);
    }
    Ok(out)
}

/// Least-squares line `y = slope x + intercept`; also returns the RMS residual.
pub fn fit_line(x: &[f64], y: &[f64]) -> (f64, f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let rss: f64 = x.iter().zip(y).map(|(a, b)| (b - slope * a - intercept) * (b - slope * a - intercept)).sum();
    (slope, intercept, math::sqrt(rss / n))
}

/// `E_l^2 ~ C1 N^(-2 alpha)`, `sigma^2[Y_l] ~ C2 N^(-beta)` for `l >= 1`, `C0 = sigma^2[Y_0]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateFit {
    pub alpha: f64,
    pub beta: f64,
    pub c0: f64,
    pub c1: f64,
    pub c2: f64,
    /// RMS residuals of the two log-log fits.
    pub alpha_residual: f64,
    pub beta_residual: f64,
}

pub fn fit_rates(disc_errors: &[f64], variances: &[f64], n: &[f64]) -> Result<RateFit> {
    let levels = n.len();
    if levels < 3 || disc_errors.len() != levels || variances.len() != levels {
        return Err(Error::InsufficientData { what: "rate fit", needed: 3, got: levels });
    }
    for (what, data) in [("discretization error", disc_errors), ("variance", variances), ("unknown count", n)] {
        if let Some(&bad) = data.iter().find(|x| !(x.is_finite() && **x > 0.0)) {
            return Err(Error::NonPositiveData { what, value: bad });
        }
    }
    let ln = |v: &[f64]| v.iter().map(|x| math::ln(*x)).collect::<Vec<_>>();
    let (sa, ia, ra) = fit_line(&ln(n), &ln(disc_errors));
    let (sb, ib, rb) = fit_line(&ln(&n[1..]), &ln(&variances[1..]));
    Ok(RateFit {
        alpha: -sa,
        beta: -sb,
        c0: variances[0],
        c1: math::exp(2.0 * ia),
        c2: math::exp(ib),
        alpha_residual: ra,
        beta_residual: rb,
    })
}

/// Sample counts minimizing `sum M_l C_l` subject to `sum V_l / M_l <= eps^2 / 2`:
/// the Lagrange optimum `M_l = 2/eps^2 sqrt(V_l / C_l) sum_k sqrt(V_k C_k)`,
/// rounded up. Levels with zero variance get one sample.
pub fn optimal_allocation(variances: &[f64], costs: &[f64], epsilon: f64) -> Result<Vec<usize>> {
    if !(epsilon > 0.0 && epsilon.is_finite()) {
        return Err(Error::InfeasibleTolerance(epsilon));
    }
    if variances.is_empty() || variances.len() != costs.len() {
        return Err(Error::InsufficientData { what: "sample allocation", needed: 1, got: variances.len() });
    }
    if let Some(&bad) = variances.iter().find(|x| !(x.is_finite() && **x >= 0.0)) {
        return Err(Error::NonPositiveData { what: "variance", value: bad });
    }
    if let Some(&bad) = costs.iter().find(|x| !(x.is_finite() && **x > 0.0)) {
        return Err(Error::NonPositiveData { what: "cost", value: bad });
    }
    let budget = epsilon * epsilon / 2.0;
    let s: f64 = variances.iter().zip(costs).map(|(v, c)| math::sqrt(v * c)).sum();
    let mut m: Vec<usize> = variances
        .iter()
        .zip(costs)
        .map(|(v, c)| (math::ceil(math::sqrt(v / c) * s / budget) as usize).max(1))
        .collect();
    // Guard against rounding in the last digit.
    while variances.iter().zip(&m).map(|(v, &k)| v / k as f64).sum::<f64>() > budget {
        for k in &mut m {
            *k += 1;
        }
    }
    Ok(m)
}

/// Allocation from fitted rates: `V_0 = C0`, `V_l = C2 N_l^(-beta)`, cost `N_l`.
pub fn optimize_samples(fit: &RateFit, n: &[f64], epsilon: f64) -> Result<Vec<usize>> {
    let v: Vec<f64> =
        n.iter().enumerate().map(|(l, &x)| if l == 0 { fit.c0 } else { fit.c2 * math::powf(x, -fit.beta) }).collect();
    optimal_allocation(&v, n, epsilon)
}

/// Constraint value `sum V_l / M_l` of an allocation under fitted rates.
pub fn allocation_variance(fit: &RateFit, n: &[f64], m: &[usize]) -> f64 {
    n.iter()
        .zip(m)
        .enumerate()
        .map(|(l, (&x, &k))| if l == 0 { fit.c0 } else { fit.c2 * math::powf(x, -fit.beta) } / k as f64)
        .sum()
}

/// One draw of `Y_l = w_l - P w_{l-1}` (or `w_0`) and of the current difference.
#[derive(Debug, Clone, PartialEq)]
pub struct LevelSample {
    pub level: usize,
    pub y: Fields,
    pub qoi: f64,
    pub converged: bool,
}

/// Discretizations of every level of a frozen hierarchy.
pub struct LevelSampler<'h> {
    pub hierarchy: &'h MeshHierarchy,
    discs: Vec<Discretization<'h>>,
    gummel: GummelConfig,
}

impl<'h> LevelSampler<'h> {
    pub fn new(hierarchy: &'h MeshHierarchy, spec: &DeviceSpec, gummel: &GummelConfig) -> Result<Self> {
        gummel.validate()?;
        let discs = hierarchy.meshes.iter().map(|m| Discretization::new(m, spec)).collect::<Result<Vec<_>>>()?;
        Ok(LevelSampler { hierarchy, discs, gummel: *gummel })
    }

    pub fn discretization(&self, level: usize) -> &Discretization<'h> {
        &self.discs[level]
    }

    /// Solves the same dopant sample on levels `l` and `l - 1`.
    pub fn sample(&self, level: usize, seed: u64, domain: u32, index: u64) -> Result<LevelSample> {
        if level >= self.discs.len() {
            return Err(Error::InvalidParameter { name: "level", reason: alloc::format!("{level} beyond hierarchy") });
        }
        let spec = &self.discs[level].spec;
        let u_t = spec.u_t;
        let sample = sample_dopants(spec, &mut sample_stream(seed, domain, index));
        if level == 0 {
            let d = &self.discs[0];
            let s = d.gummel_solve(&sample, None, &self.gummel)?;
            let qoi = d.densities_and_current(&s).current;
            return Ok(LevelSample { level, y: physical_fields(&s, u_t), qoi, converged: s.converged });
        }
        let (dc, df) = (&self.discs[level - 1], &self.discs[level]);
        let coarse = dc.gummel_solve(&sample, None, &self.gummel)?;
        let warm = coarse.prolong(dc.mesh, df.mesh)?;
        let fine = df.gummel_solve(&sample, Some(&warm), &self.gummel)?;
        let wf = physical_fields(&fine, u_t);
        let wc = prolong_fields(&physical_fields(&coarse, u_t), dc.mesh, df.mesh)?;
        let y = core::array::from_fn(|k| wf[k].iter().zip(&wc[k]).map(|(a, b)| a - b).collect());
        let qoi = df.densities_and_current(&fine).current - dc.densities_and_current(&coarse).current;
        Ok(LevelSample { level, y, qoi, converged: coarse.converged && fine.converged })
    }
}

pub fn level_difference_sample(sampler: &LevelSampler<'_>, level: usize, seed: u64, index: u64) -> Result<LevelSample> {
    sampler.sample(level, seed, 1 + level as u32, index)
}

/// What drives the sample allocation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Quantity {
    /// Combined L2 norm of the three fields.
    Fields,
    /// Drain current.
    Current,
}

/// Where the initial level variances come from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VarianceSource {
    /// Rates fitted to the pilot statistics (pilot values when fewer than three levels).
    Fitted,
    /// Pilot variances level by level.
    Pilot,
    /// A fixed number of fresh samples per level.
    Warmup(usize),
}

#[derive(Debug, Clone, PartialEq)]
pub struct MlmcConfig {
    pub epsilon: f64,
    pub seed: u64,
    pub quantity: Quantity,
    pub variances: VarianceSource,
    /// Re-allocation rounds with measured variances after the first draw.
    pub max_rounds: usize,
    /// Use the same dopant samples on every level.
    pub shared_seeds: bool,
    /// Tasks handed to the executor at once.
    pub batch: usize,
}

impl Default for MlmcConfig {
    fn default() -> Self {
        MlmcConfig {
            epsilon: 1e-2,
            seed: 2,
            quantity: Quantity::Fields,
            variances: VarianceSource::Fitted,
            max_rounds: 5,
            shared_seeds: false,
            batch: 256,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LevelStats {
    pub level: usize,
    pub dofs: usize,
    pub samples: usize,
    pub failed: usize,
    pub mean_qoi: f64,
    pub var_qoi: f64,
    /// `sigma^2[Y_l]` in the combined field norm.
    pub variance: f64,
    /// Cost proxy per sample (`N_l`).
    pub cost: f64,
    pub seconds_per_sample: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MlmcEstimate {
    pub epsilon: f64,
    pub finest_level: usize,
    pub levels: Vec<LevelStats>,
    /// Mean of (V in volts, u, v) on the finest mesh used.
    pub mean_fields: Fields,
    pub qoi: f64,
    /// `sum sigma^2[Y_l] / M_l` of the driving quantity.
    pub statistical_error2: f64,
    /// `E_L^2` from the hierarchy.
    pub discretization_error2: f64,
    /// `sum M_l N_l`.
    pub total_cost: f64,
    pub rounds: usize,
    pub seconds: Option<f64>,
}

impl MlmcEstimate {
    pub fn samples(&self) -> Vec<usize> {
        self.levels.iter().map(|l| l.samples).collect()
    }
}

/// Levels needed so that `E_L <= epsilon / sqrt 2`.
pub fn select_finest_level(h: &MeshHierarchy, epsilon: f64) -> Result<usize> {
    let tol = epsilon / math::sqrt(2.0);
    if let Some(l) = h.levels.iter().position(|r| r.disc_error <= tol) {
        return Ok(l);
    }
    let last = h.levels.last().ok_or(Error::EmptySamples)?;
    let additional = if h.len() >= 2 && last.disc_error.is_finite() && last.disc_error > 0.0 {
        let r = math::powf(last.dofs as f64 / h.levels[h.len() - 2].dofs as f64, -h.alpha);
        (math::ceil(math::ln(tol / last.disc_error) / math::ln(r)) as usize).max(1)
    } else {
        1
    };
    Err(Error::HierarchyTooShallow { levels: h.len(), additional })
}

fn initial_variances<E: Executor>(
    h: &MeshHierarchy,
    finest: usize,
    cfg: &MlmcConfig,
    sampler: &LevelSampler<'_>,
    acc: &mut [Accumulator<'_>],
    exec: &E,
) -> Result<Vec<f64>> {
    let n = h.dofs();
    let pilot = |l: usize| match cfg.quantity {
        Quantity::Fields => h.levels[l].variance,
        Quantity::Current => h.levels[l].qoi_variance,
    };
    Ok(match cfg.variances {
        VarianceSource::Warmup(k) => {
            let target = vec![k.max(2); finest + 1];
            draw(sampler, cfg, &target, acc, exec)?;
            acc.iter().map(|a| a.variance(cfg.quantity)).collect()
        }
        VarianceSource::Pilot => (0..=finest).map(pilot).collect(),
        VarianceSource::Fitted => {
            let qv: Vec<f64> = (0..h.len()).map(pilot).collect();
            match fit_rates(&h.disc_errors(), &qv, &n) {
                Ok(fit) => (0..=finest)
                    .map(|l| if l == 0 { fit.c0 } else { fit.c2 * math::powf(n[l], -fit.beta) })
                    .collect(),
                Err(_) => qv[..=finest].to_vec(),
            }
        }
    })
}

struct Accumulator<'m> {
    fields: FieldStats<'m>,
    qoi: ScalarStats,
    failed: usize,
    drawn: usize,
    seconds: f64,
}

impl Accumulator<'_> {
    fn variance(&self, q: Quantity) -> f64 {
        match q {
            Quantity::Fields => self.fields.variance(),
            Quantity::Current => self.qoi.variance(),
        }
    }
}

/// Draws samples until every level has `target[l]` of them.
fn draw<E: Executor>(
    sampler: &LevelSampler<'_>,
    cfg: &MlmcConfig,
    target: &[usize],
    acc: &mut [Accumulator<'_>],
    exec: &E,
) -> Result<()> {
    let mut tasks: Vec<(usize, u64)> = Vec::new();
    for (l, &t) in target.iter().enumerate() {
        for i in acc[l].drawn..t {
            tasks.push((l, i as u64));
        }
    }
    for chunk in tasks.chunks(cfg.batch.max(1)) {
        let results = exec.map(chunk.len(), |k| {
            let (l, i) = chunk[k];
            let domain = if cfg.shared_seeds { 1 } else { 1 + l as u32 };
            let t0 = exec.seconds();
            let r = sampler.sample(l, cfg.seed, domain, i);
            (r, exec.seconds().zip(t0).map(|(a, b)| a - b))
        });
        for (&(l, i), (r, secs)) in chunk.iter().zip(results) {
            let a = &mut acc[l];
            a.drawn += 1;
            a.seconds += secs.unwrap_or(0.0);
            match r {
                Ok(s) if s.converged => {
                    a.fields.push(&s.y)?;
                    a.qoi.push(s.qoi);
                }
                Ok(_) => {
                    log::warn!("sample {i} on level {l} did not converge; excluded");
                    a.failed += 1;
                }
                Err(e) => {
                    log::warn!("sample {i} on level {l} failed: {e}; excluded");
                    a.failed += 1;
                }
            }
        }
    }
    Ok(())
}

/// Multilevel estimate of the expected solution and drain current with mean
/// squared error below `epsilon^2`, split evenly between bias and variance.
pub fn mlmc_run<E: Executor>(
    h: &MeshHierarchy,
    spec: &DeviceSpec,
    gummel: &GummelConfig,
    cfg: &MlmcConfig,
    exec: &E,
) -> Result<MlmcEstimate> {
    if !(cfg.epsilon > 0.0) {
        return Err(Error::InfeasibleTolerance(cfg.epsilon));
    }
    let start = exec.seconds();
    let finest = select_finest_level(h, cfg.epsilon)?;
    let sampler = LevelSampler::new(h, spec, gummel)?;
    let n: Vec<f64> = h.dofs()[..=finest].to_vec();
    let mut acc = accumulators(h, finest);
    let budget = cfg.epsilon * cfg.epsilon / 2.0;

    let mut variances = initial_variances(h, finest, cfg, &sampler, &mut acc, exec)?;
    let mut rounds = 0;
    loop {
        let alloc = optimal_allocation(&variances, &n, cfg.epsilon)?;
        let target: Vec<usize> = alloc.iter().zip(&acc).map(|(&m, a)| m.max(a.drawn).max(2)).collect();
        draw(&sampler, cfg, &target, &mut acc, exec)?;
        rounds += 1;
        variances = acc.iter().map(|a| a.variance(cfg.quantity)).collect();
        let stat: f64 = variances.iter().zip(&acc).map(|(v, a)| v / a.fields.count().max(1) as f64).sum();
        log::info!("mlmc eps {:.3e} round {rounds}: M = {:?}, stat err^2 = {stat:.3e}", cfg.epsilon, target);
        if stat <= budget || rounds > cfg.max_rounds {
            break;
        }
    }
    finish(h, cfg, finest, acc, rounds, start, exec)
}

/// MLMC with prescribed sample counts per level (`samples.len() - 1` is the
/// finest level). With `shared_seeds` every level sees the same dopant draws.
pub fn mlmc_fixed<E: Executor>(
    h: &MeshHierarchy,
    spec: &DeviceSpec,
    gummel: &GummelConfig,
    cfg: &MlmcConfig,
    samples: &[usize],
    exec: &E,
) -> Result<MlmcEstimate> {
    if samples.is_empty() || samples.len() > h.len() {
        return Err(Error::InvalidParameter { name: "samples", reason: alloc::format!("{} levels requested", samples.len()) });
    }
    let start = exec.seconds();
    let finest = samples.len() - 1;
    let sampler = LevelSampler::new(h, spec, gummel)?;
    let mut acc = accumulators(h, finest);
    draw(&sampler, cfg, samples, &mut acc, exec)?;
    finish(h, cfg, finest, acc, 1, start, exec)
}

fn accumulators(h: &MeshHierarchy, finest: usize) -> Vec<Accumulator<'_>> {
    h.meshes[..=finest]
        .iter()
        .map(|m| Accumulator { fields: FieldStats::new(m), qoi: ScalarStats::default(), failed: 0, drawn: 0, seconds: 0.0 })
        .collect()
}

fn finish<E: Executor>(
    h: &MeshHierarchy,
    cfg: &MlmcConfig,
    finest: usize,
    acc: Vec<Accumulator<'_>>,
    rounds: usize,
    start: Option<f64>,
    exec: &E,
) -> Result<MlmcEstimate> {
    let n = h.dofs();
    if let Some(l) = acc.iter().position(|a| a.fields.count() == 0) {
        return Err(Error::InvalidParameter { name: "samples", reason: alloc::format!("no converged sample on level {l}") });
    }

    let mut mean = acc[0].fields.mean();
    for l in 1..=finest {
        mean = prolong_fields(&mean, &h.meshes[l - 1], &h.meshes[l])?;
        let y = acc[l].fields.mean();
        for k in 0..3 {
            for (m, d) in mean[k].iter_mut().zip(&y[k]) {
                *m += d;
            }
        }
    }
    let levels: Vec<LevelStats> = acc
        .iter()
        .enumerate()
        .map(|(l, a)| LevelStats {
            level: l,
            dofs: h.levels[l].dofs,
            samples: a.fields.count(),
            failed: a.failed,
            mean_qoi: a.qoi.mean(),
            var_qoi: a.qoi.variance(),
            variance: a.fields.variance(),
            cost: n[l],
            seconds_per_sample: start.map(|_| a.seconds / a.drawn.max(1) as f64),
        })
        .collect();
    let statistical_error2 = levels
        .iter()
        .map(|s| match cfg.quantity {
            Quantity::Fields => s.variance,
            Quantity::Current => s.var_qoi,
        } / s.samples as f64)
        .sum();
    let total_cost = levels.iter().map(|s| s.samples as f64 * s.cost).sum();
    let e = h.levels[finest].disc_error;
    Ok(MlmcEstimate {
        epsilon: cfg.epsilon,
        finest_level: finest,
        qoi: levels.iter().map(|s| s.mean_qoi).sum(),
        levels,
        mean_fields: mean,
        statistical_error2,
        discretization_error2: e * e,
        total_cost,
        rounds,
        seconds: exec.seconds().zip(start).map(|(a, b)| a - b),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn welford_matches_two_pass() {
        let xs: Vec<f64> = (0..1000).map(|i| libm::sin(i as f64 * 0.37) * 3.0 + 1e3).collect();
        let mut s = ScalarStats::default();
        xs.iter().for_each(|&x| s.push(x));
        let m = xs.iter().sum::<f64>() / 1000.0;
        let v = xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / 999.0;
        assert!((s.mean() - m).abs() < 1e-12 * m.abs());
        assert!((s.variance() - v).abs() < 1e-9 * v);
    }

    #[test]
    fn exact_power_laws() {
        let n = [100.0, 400.0, 1600.0, 6400.0];
        let e: Vec<f64> = n.iter().map(|x| 1.0 / x).collect();
        let v: Vec<f64> = n.iter().map(|x| 4.0 / (x * x)).collect();
        let f = fit_rates(&e, &v, &n).unwrap();
        assert!((f.alpha - 1.0).abs() < 1e-12);
        assert!((f.beta - 2.0).abs() < 1e-12);
        assert!((f.c2 / 4.0 - 1.0).abs() < 1e-10);
        assert!((f.c1 - 1.0).abs() < 1e-10);
        assert!(fit_rates(&e[..2], &v[..2], &n[..2]).is_err());
        assert!(fit_rates(&[1.0, 0.0, 1.0], &v[..3], &n[..3]).is_err());
    }

    #[test]
    fn single_level_allocation() {
        let fit = RateFit { alpha: 1.0, beta: 2.0, c0: 0.041, c1: 1.0, c2: 1.0, alpha_residual: 0.0, beta_residual: 0.0 };
        assert_eq!(optimize_samples(&fit, &[1000.0], 0.08).unwrap(), vec![13]);
        assert!(optimize_samples(&fit, &[1000.0], 0.0).is_err());
    }

    #[test]
    fn mean_of_opposite_fields_is_zero() {
        let f: Fields = [vec![1.0, -2.0], vec![0.5, 3.0], vec![4.0, 1.0]];
        let g: Fields = core::array::from_fn(|k| f[k].iter().map(|x| -x).collect());
        let m = mc_mean(&[f.clone(), g]).unwrap();
        assert!(m.iter().flatten().all(|&x| x == 0.0));
        assert_eq!(mc_mean(&[f.clone(), f.clone()]).unwrap(), f);
        assert_eq!(mc_mean(&[]), Err(Error::EmptySamples));
    }
}
