//! The four subcommands. Each one computes everything first and then hands
//! the results to a single writer.

use crate::config::{parse_mode, RunConfig};
use crate::formats::{self, CurveEntry, FormatError};
use amlmc_core::adapt::{build_hierarchy, dorfler_mark, MeshHierarchy, RefinementMode};
use amlmc_core::ddp::{Discretization, SolutionTriple};
use amlmc_core::device::sample_dopants;
use amlmc_core::estimator::{indicators, IndicatorField};
use amlmc_core::mesh::{build_device_mesh, refine_bisect, uniform_refine, Mesh};
use amlmc_core::mlmc::{fit_rates, mlmc_run, MlmcConfig, MlmcEstimate, RateFit};
use amlmc_core::rng::sample_stream;
use amlmc_core::Executor;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error(transparent)]
    Core(#[from] amlmc_core::Error),
    #[error("Gummel iteration did not converge in {iterations} sweeps; updates {trace:?}")]
    NotConverged { iterations: usize, trace: Vec<f64> },
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: {source}")]
    Format { path: PathBuf, source: FormatError },
    #[error("{0} of the requested tolerances failed")]
    Tolerances(usize),
}

fn write(dir: &Path, name: &str, text: &str) -> Result<(), RunError> {
    let path = dir.join(name);
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|source| RunError::Io { path: parent.to_owned(), source })?;
    }
    fs::write(&path, text).map_err(|source| RunError::Io { path, source })
}

fn read(path: &Path) -> Result<String, RunError> {
    fs::read_to_string(path).map_err(|source| RunError::Io { path: path.to_owned(), source })
}

pub struct SolveReport {
    pub mesh: Mesh,
    pub solution: SolutionTriple,
    pub indicators: IndicatorField,
    pub current: f64,
    /// Convergence log, one line per level and sweep.
    pub log: String,
}

/// One sample solved on `cfg.level` refinements of the initial mesh. Uniform
/// mode refines every element; adaptive mode marks with this sample's own
/// indicators. Each level starts from the prolonged previous solution.
pub fn solve(cfg: &RunConfig) -> Result<SolveReport, RunError> {
    let spec = &cfg.spec;
    let sample = sample_dopants(spec, &mut sample_stream(cfg.hierarchy.seed, 0, cfg.sample));
    let mut mesh = build_device_mesh(spec, cfg.hierarchy.initial_h)?;
    let mut previous: Option<(Mesh, SolutionTriple)> = None;
    let mut log = String::new();
    writeln!(log, "seed = {}\nsample = {}\nmode = {}", cfg.hierarchy.seed, cfg.sample, cfg.hierarchy.mode.name()).unwrap();
    for level in 0..=cfg.level {
        let disc = Discretization::new(&mesh, spec)?;
        let start = match &previous {
            Some((coarse, s)) => Some(s.prolong(coarse, &mesh)?),
            None => None,
        };
        let sol = disc.gummel_solve(&sample, start.as_ref(), &cfg.gummel)?;
        for (k, u) in sol.updates.iter().enumerate() {
            writeln!(log, "level {level} sweep {} update {u:e}", k + 1).unwrap();
        }
        let ind = indicators(&disc, &sol, &sample, &cfg.hierarchy.estimator);
        writeln!(log, "level {level} vertices {} elements {} eta2 = {}", mesh.num_vertices(), mesh.num_elements(), ind.total())
            .unwrap();
        if !sol.converged {
            return Err(RunError::NotConverged { iterations: sol.iterations, trace: sol.updates });
        }
        if level == cfg.level {
            let current = disc.densities_and_current(&sol).current;
            writeln!(log, "current = {current}").unwrap();
            return Ok(SolveReport { mesh, solution: sol, indicators: ind, current, log });
        }
        let fine = match cfg.hierarchy.mode {
            RefinementMode::Uniform => uniform_refine(&mesh)?,
            RefinementMode::Adaptive => refine_bisect(&mesh, &dorfler_mark(&ind.eta2, &cfg.hierarchy.marking)?)?,
        };
        previous = Some((std::mem::replace(&mut mesh, fine), sol));
    }
    unreachable!("the loop returns on the last level")
}

pub fn write_solve(cfg: &RunConfig, r: &SolveReport) -> Result<(), RunError> {
    let out = &cfg.out;
    write(out, "solve.log", &r.log)?;
    if cfg.dump_mesh {
        write(out, "mesh.txt", &formats::mesh_text(&r.mesh))?;
    }
    if cfg.dump_solution {
        let disc = Discretization::new(&r.mesh, &cfg.spec)?;
        let dens = disc.densities_and_current(&r.solution);
        write(out, "solution.csv", &formats::solution_csv(&r.mesh, &r.solution, &dens, cfg.spec.u_t))?;
    }
    if cfg.dump_indicators {
        write(out, "indicators.csv", &formats::indicator_csv(&r.indicators))?;
    }
    Ok(())
}

pub struct Study {
    pub adaptive: MeshHierarchy,
    pub uniform: MeshHierarchy,
}

impl Study {
    pub fn hierarchies(&self) -> [&MeshHierarchy; 2] {
        [&self.adaptive, &self.uniform]
    }
}

/// Rates of one hierarchy from its estimated errors and pilot variances.
pub fn hierarchy_rates(h: &MeshHierarchy) -> amlmc_core::Result<RateFit> {
    fit_rates(&h.disc_errors(), &h.variances(), &h.dofs())
}

/// Adaptive and uniform hierarchies from the same pilot samples.
pub fn adapt_study<E: Executor>(cfg: &RunConfig, exec: &E) -> Result<Study, RunError> {
    let build = |mode| {
        let mut hc = amlmc_core::adapt::HierarchyConfig { mode, ..cfg.hierarchy.clone() };
        if mode == RefinementMode::Uniform {
            hc.max_levels = cfg.uniform_max_levels.unwrap_or(hc.max_levels);
        }
        log::info!("building the {} hierarchy", mode.name());
        build_hierarchy(&cfg.spec, &hc, exec)
    };
    Ok(Study { adaptive: build(RefinementMode::Adaptive)?, uniform: build(RefinementMode::Uniform)? })
}

fn timing_lines(h: &MeshHierarchy) -> String {
    let mut s = String::new();
    for r in &h.levels {
        if let Some(t) = r.seconds {
            writeln!(s, "{} level {} seconds {t:.3}", h.mode.name(), r.level).unwrap();
        }
    }
    s
}

fn hierarchy_curves(h: &MeshHierarchy, entries: &mut Vec<CurveEntry>, files: &mut Vec<(String, String)>) {
    let mode = h.mode.name();
    let n = h.dofs();
    let mut add = |name: &str, figure: &str, y: &str, pts: Vec<(f64, f64)>| {
        let file = format!("curves/{mode}_{name}.xy");
        files.push((file.clone(), formats::curve_text(&pts)));
        entries.push(CurveEntry { file, figure: figure.into(), label: mode.into(), x: "N".into(), y: y.into() });
    };
    add("disc_error", "discretization_error", "E_l", n.iter().copied().zip(h.disc_errors()).collect());
    add("eta", "discretization_error", "eta", n.iter().zip(&h.levels).map(|(&x, r)| (x, r.eta2.sqrt())).collect());
    if let Ok(re) = h.reference_errors() {
        let pts = n.iter().copied().zip(re).take(h.len().saturating_sub(1)).collect();
        add("reference_error", "discretization_error", "|E[w_l]-E[w_L]|", pts);
    }
    add(
        "variance",
        "statistical_error",
        "var_Y",
        n.iter().zip(&h.levels).skip(1).map(|(&x, r)| (x, r.variance)).collect(),
    );
}

pub fn write_study(cfg: &RunConfig, study: &Study) -> Result<(), RunError> {
    let out = &cfg.out;
    let mut entries = Vec::new();
    let mut files = Vec::new();
    let mut rates = String::new();
    let mut timings = String::new();
    for h in study.hierarchies() {
        files.push((format!("hierarchy_{}.csv", h.mode.name()), formats::manifest_text(h)));
        hierarchy_curves(h, &mut entries, &mut files);
        match hierarchy_rates(h) {
            Ok(fit) => rates.push_str(&formats::rates_block(h.mode.name(), &fit, h.len())),
            Err(e) => writeln!(rates, "mode={}\nlevels = {}\nerror: {e}", h.mode.name(), h.len()).unwrap(),
        }
        timings.push_str(&timing_lines(h));
    }
    let mut dofs = String::from("level,adaptive_N_P,adaptive_N_DD,adaptive_N,uniform_N_P,uniform_N_DD,uniform_N\n");
    for l in 0..study.adaptive.len().max(study.uniform.len()) {
        write!(dofs, "{l}").unwrap();
        for h in study.hierarchies() {
            match h.levels.get(l) {
                Some(r) => write!(dofs, ",{},{},{}", r.poisson_dofs, r.dd_dofs, r.dofs).unwrap(),
                None => dofs.push_str(",,,"),
            }
        }
        dofs.push('\n');
    }
    files.push(("dofs.csv".into(), dofs));
    files.push(("curves.csv".into(), formats::curve_manifest(&entries)));
    files.push(("rates.txt".into(), rates));
    files.push(("timings.txt".into(), timings));
    for (name, text) in files {
        write(out, &name, &text)?;
    }
    Ok(())
}

/// Refits the rates from the manifests an earlier `adapt-study` left in `out`.
pub fn rates(out: &Path) -> Result<String, RunError> {
    let mut text = String::new();
    for mode in ["adaptive", "uniform"] {
        let path = out.join(format!("hierarchy_{mode}.csv"));
        let raw = read(&path)?;
        let fmt = |source| RunError::Format { path: path.clone(), source };
        if formats::header_value(&raw, "mode").and_then(parse_mode).map(|m| m.name()) != Some(mode) {
            return Err(fmt(FormatError::Parse { line: 1, reason: format!("not a {mode} manifest") }));
        }
        let t = formats::read_csv(&raw).map_err(fmt)?;
        let col = |c: &str| {
            t.column(c).ok_or_else(|| fmt(FormatError::Parse { line: 1, reason: format!("missing column {c}") }))
        };
        let fit = fit_rates(&col("disc_error")?, &col("var_Y")?, &col("N")?)?;
        text.push_str(&formats::rates_block(mode, &fit, t.rows.len()));
    }
    write(out, "rates.txt", &text)?;
    Ok(text)
}

pub struct MlmcStudy {
    pub hierarchy: MeshHierarchy,
    pub fit: Option<RateFit>,
    pub runs: Vec<(f64, Result<MlmcEstimate, amlmc_core::Error>)>,
}

impl MlmcStudy {
    pub fn failures(&self) -> usize {
        self.runs.iter().filter(|(_, r)| r.is_err()).count()
    }
}

/// One hierarchy deep enough for the smallest tolerance, then one MLMC run
/// per tolerance. A tolerance the hierarchy cannot reach is reported and the
/// remaining ones still run.
pub fn mlmc<E: Executor>(cfg: &RunConfig, exec: &E) -> Result<MlmcStudy, RunError> {
    let eps_min = cfg.epsilons.iter().copied().fold(f64::INFINITY, f64::min);
    let hc = amlmc_core::adapt::HierarchyConfig { epsilon: eps_min, ..cfg.hierarchy.clone() };
    let hierarchy = build_hierarchy(&cfg.spec, &hc, exec)?;
    Ok(mlmc_on(cfg, hierarchy, exec))
}

pub fn mlmc_on<E: Executor>(cfg: &RunConfig, hierarchy: MeshHierarchy, exec: &E) -> MlmcStudy {
    let fit = hierarchy_rates(&hierarchy).ok();
    let runs = cfg
        .epsilons
        .iter()
        .map(|&epsilon| {
            let mc = MlmcConfig { epsilon, ..cfg.mlmc.clone() };
            let r = mlmc_run(&hierarchy, &cfg.spec, &cfg.gummel, &mc, exec);
            if let Err(e) = &r {
                log::warn!("epsilon {epsilon}: {e}");
            }
            (epsilon, r)
        })
        .collect();
    MlmcStudy { hierarchy, fit, runs }
}

pub fn write_mlmc(cfg: &RunConfig, study: &MlmcStudy) -> Result<(), RunError> {
    let out = &cfg.out;
    let h = &study.hierarchy;
    let mut summary = String::new();
    let mut timings = timing_lines(h);
    let mut cost = Vec::new();
    let mut samples = String::from("epsilon,L");
    for l in 0..h.len() {
        write!(samples, ",M_{l}").unwrap();
    }
    samples.push('\n');
    write(out, &format!("hierarchy_{}.csv", h.mode.name()), &formats::manifest_text(h))?;
    for (i, (eps, r)) in study.runs.iter().enumerate() {
        match r {
            Ok(est) => {
                write(out, &format!("mlmc_eps{i}.csv"), &formats::mlmc_csv(est))?;
                summary.push_str(&formats::mlmc_summary(est, study.fit.as_ref()));
                cost.push((*eps, est.total_cost));
                write!(samples, "{eps},{}", est.finest_level).unwrap();
                for l in 0..h.len() {
                    match est.levels.get(l) {
                        Some(s) => write!(samples, ",{}", s.samples).unwrap(),
                        None => samples.push(','),
                    }
                }
                samples.push('\n');
                if let Some(t) = est.seconds {
                    writeln!(timings, "epsilon {eps} seconds {t:.3}").unwrap();
                }
            }
            Err(e) => writeln!(summary, "{{\n  \"epsilon\": {eps},\n  \"error\": \"{e}\"\n}}").unwrap(),
        }
    }
    let entries = [CurveEntry {
        file: "curves/cost.xy".into(),
        figure: "computational_cost".into(),
        label: h.mode.name().into(),
        x: "epsilon".into(),
        y: "cost".into(),
    }];
    write(out, "curves/cost.xy", &formats::curve_text(&cost))?;
    write(out, "curves.csv", &formats::curve_manifest(&entries))?;
    write(out, "samples.csv", &samples)?;
    write(out, "mlmc_summary.txt", &summary)?;
    write(out, "timings.txt", &timings)?;
    Ok(())
}
