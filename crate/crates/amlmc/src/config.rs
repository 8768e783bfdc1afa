//! Flat `key = value` run configuration.
//!
//! Blank lines and everything after `#` are ignored. Every key maps to one
//! field; unknown keys and out-of-range values are errors.

use amlmc_core::adapt::{HierarchyConfig, RefinementMode};
use amlmc_core::ddp::GummelConfig;
use amlmc_core::device::{DeviceSpec, Geometry};
use amlmc_core::estimator::{CarrierWeighting, EdgeWeight};
use amlmc_core::fem::LinearSolver;
use amlmc_core::mlmc::{MlmcConfig, Quantity, VarianceSource};
use std::path::{Path, PathBuf};
use std::str::FromStr;

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("line {line}: expected `key = value`")]
    Syntax { line: usize },
    #[error("line {line}: unknown key `{key}`")]
    UnknownKey { line: usize, key: String },
    #[error("line {line}: key `{key}` given twice")]
    Duplicate { line: usize, key: String },
    #[error("`{key}`: cannot parse `{value}`")]
    Value { key: String, value: String },
    #[error("`{key}`: {reason}")]
    Range { key: &'static str, reason: String },
    #[error(transparent)]
    Core(#[from] amlmc_core::Error),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub spec: DeviceSpec,
    /// Copied into `hierarchy.gummel` by the parser.
    pub gummel: GummelConfig,
    /// Hierarchy construction. Its `mode` is the one `solve` and `mlmc` use.
    pub hierarchy: HierarchyConfig,
    pub mlmc: MlmcConfig,
    /// Depth of the uniform hierarchy in `adapt-study`; `max_levels` when unset.
    pub uniform_max_levels: Option<usize>,
    /// Tolerances of the `mlmc` subcommand.
    pub epsilons: Vec<f64>,
    /// Refinement steps applied by `solve`.
    pub level: usize,
    /// Sample index drawn by `solve`.
    pub sample: u64,
    /// Worker threads; 0 picks the number of cores.
    pub threads: usize,
    pub out: PathBuf,
    pub dump_mesh: bool,
    pub dump_solution: bool,
    pub dump_indicators: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            spec: DeviceSpec::default(),
            gummel: GummelConfig::default(),
            hierarchy: HierarchyConfig { max_levels: 5, ..Default::default() },
            mlmc: MlmcConfig::default(),
            uniform_max_levels: None,
            epsilons: vec![16.0, 8.0, 4.0, 2.0],
            level: 0,
            sample: 0,
            threads: 0,
            out: PathBuf::from("out"),
            dump_mesh: false,
            dump_solution: false,
            dump_indicators: false,
        }
    }
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T, ConfigError> {
    value.parse().map_err(|_| ConfigError::Value { key: key.into(), value: value.into() })
}

fn parse_bool(key: &str, value: &str) -> Result<bool, ConfigError> {
    match value {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        _ => Err(ConfigError::Value { key: key.into(), value: value.into() }),
    }
}

pub fn parse_mode(value: &str) -> Option<RefinementMode> {
    match value {
        "adaptive" => Some(RefinementMode::Adaptive),
        "uniform" => Some(RefinementMode::Uniform),
        _ => None,
    }
}

impl RunConfig {
    pub fn from_file(path: &Path) -> Result<Self, ConfigError> {
        let text =
            std::fs::read_to_string(path).map_err(|source| ConfigError::Io { path: path.to_owned(), source })?;
        Self::parse(&text)
    }

    /// Defaults overridden by the entries of `text`, then validated.
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut cfg = RunConfig::default();
        let mut seen = std::collections::HashSet::new();
        // Slab dimensions may come in any order relative to `geometry`.
        let mut slab = (None, None, false);
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or(ConfigError::Syntax { line: i + 1 })?;
            let (key, value) = (key.trim(), value.trim());
            if key.is_empty() {
                return Err(ConfigError::Syntax { line: i + 1 });
            }
            if !seen.insert(key.to_owned()) {
                return Err(ConfigError::Duplicate { line: i + 1, key: key.into() });
            }
            match key {
                "slab_length" => slab.0 = Some(parse(key, value)?),
                "slab_width" => slab.1 = Some(parse(key, value)?),
                "geometry" => match value {
                    "double_gate" => slab.2 = false,
                    "slab" => slab.2 = true,
                    _ => return Err(ConfigError::Value { key: key.into(), value: value.into() }),
                },
                _ => {
                    if !cfg.set(key, value)? {
                        return Err(ConfigError::UnknownKey { line: i + 1, key: key.into() });
                    }
                }
            }
        }
        if slab.2 {
            match slab {
                (Some(length), Some(width), _) => cfg.spec.geometry = Geometry::Slab { length, width },
                _ => {
                    return Err(ConfigError::Range {
                        key: "geometry",
                        reason: "slab needs slab_length and slab_width".into(),
                    })
                }
            }
        } else if slab.0.is_some() || slab.1.is_some() {
            return Err(ConfigError::Range { key: "geometry", reason: "slab dimensions given without geometry = slab".into() });
        }
        cfg.hierarchy.gummel = cfg.gummel;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Assigns one entry; `false` when the key is unknown.
    fn set(&mut self, key: &str, value: &str) -> Result<bool, ConfigError> {
        let s = &mut self.spec;
        let g = &mut self.gummel;
        let h = &mut self.hierarchy;
        let m = &mut self.mlmc;
        match key {
            "gate_length" => s.gate_length = parse(key, value)?,
            "oxide_thickness" => s.oxide_thickness = parse(key, value)?,
            "channel_width" => s.channel_width = parse(key, value)?,
            "source_drain_length" => s.source_drain_length = parse(key, value)?,
            "permittivity_si" => s.permittivity_si = parse(key, value)?,
            "permittivity_ox" => s.permittivity_ox = parse(key, value)?,
            "a0" => s.a0 = parse(key, value)?,
            "n_i" => s.n_i = parse(key, value)?,
            "u_t" => s.u_t = parse(key, value)?,
            "v_gate" => s.v_gate = parse(key, value)?,
            "v_sd" => s.v_sd = parse(key, value)?,
            "doping_sd" => s.doping_sd = parse(key, value)?,
            "doping_channel" => s.doping_channel = parse(key, value)?,
            "doping_max" => s.doping_max = parse(key, value)?,
            "tau_n" => s.tau_n = parse(key, value)?,
            "tau_p" => s.tau_p = parse(key, value)?,
            "mu_n" => s.mu_n = parse(key, value)?,
            "mu_p" => s.mu_p = parse(key, value)?,
            "q" => s.q = parse(key, value)?,
            "sigma_dopant" => s.sigma_dopant = parse(key, value)?,
            "dopants_per_region" => s.dopants_per_region = parse(key, value)?,
            "gaussian_exponent_3d" => s.gaussian_exponent_3d = parse_bool(key, value)?,
            "background_in_sd" => s.background_in_sd = parse_bool(key, value)?,

            "gummel_tolerance" => g.tolerance = parse(key, value)?,
            "gummel_max_iterations" => g.max_iterations = parse(key, value)?,
            "damping" => g.damping = parse(key, value)?,
            "auto_damping" => g.auto_damping = parse_bool(key, value)?,
            "newton_tolerance" => g.newton_tolerance = parse(key, value)?,
            "newton_max_iterations" => g.newton_max_iterations = parse(key, value)?,
            "exp_clamp" => g.exp_clamp = parse(key, value)?,
            "linear_solver" => {
                g.solver = match value {
                    "cholesky" => LinearSolver::Cholesky,
                    "pcg" => LinearSolver::Pcg { tol: 1e-12, max_iter: 20_000 },
                    _ => return Err(ConfigError::Value { key: key.into(), value: value.into() }),
                }
            }

            "mode" => h.mode = parse_mode(value).ok_or(ConfigError::Value { key: key.into(), value: value.into() })?,
            "theta" => h.marking.theta = parse(key, value)?,
            "pilot_samples" => h.pilot_samples = parse(key, value)?,
            "hierarchy_epsilon" => h.epsilon = parse(key, value)?,
            "max_levels" => h.max_levels = parse(key, value)?,
            "uniform_max_levels" => self.uniform_max_levels = Some(parse(key, value)?),
            "seed" => h.seed = parse(key, value)?,
            "initial_h" => h.initial_h = parse(key, value)?,
            "default_alpha" => h.default_alpha = parse(key, value)?,
            "c1" | "c2" | "c3" | "c4" | "c5" | "c6" => {
                let k: usize = key[1..].parse().expect("digit");
                h.estimator.weights[k - 1] = parse(key, value)?;
            }
            "edge_weight" => {
                h.estimator.edge_weight = match value {
                    "length" => EdgeWeight::Length,
                    "length_squared" => EdgeWeight::LengthSquared,
                    _ => return Err(ConfigError::Value { key: key.into(), value: value.into() }),
                }
            }
            "carrier_weighting" => {
                h.estimator.carrier_weighting = match value {
                    "literal" => CarrierWeighting::Literal,
                    "normalized" => CarrierWeighting::Normalized,
                    _ => return Err(ConfigError::Value { key: key.into(), value: value.into() }),
                }
            }

            "epsilons" => {
                self.epsilons = value.split(',').map(|x| parse(key, x.trim())).collect::<Result<_, _>>()?;
            }
            "mlmc_seed" => m.seed = parse(key, value)?,
            "quantity" => {
                m.quantity = match value {
                    "fields" => Quantity::Fields,
                    "current" => Quantity::Current,
                    _ => return Err(ConfigError::Value { key: key.into(), value: value.into() }),
                }
            }
            "variances" => {
                m.variances = match value {
                    "fitted" => VarianceSource::Fitted,
                    "pilot" => VarianceSource::Pilot,
                    _ => match value.strip_prefix("warmup:") {
                        Some(k) => VarianceSource::Warmup(parse(key, k)?),
                        None => return Err(ConfigError::Value { key: key.into(), value: value.into() }),
                    },
                }
            }
            "max_rounds" => m.max_rounds = parse(key, value)?,
            "shared_seeds" => m.shared_seeds = parse_bool(key, value)?,
            "batch" => m.batch = parse(key, value)?,

            "level" => self.level = parse(key, value)?,
            "sample" => self.sample = parse(key, value)?,
            "threads" => self.threads = parse(key, value)?,
            "out" => self.out = PathBuf::from(value),
            "dump_mesh" => self.dump_mesh = parse_bool(key, value)?,
            "dump_solution" => self.dump_solution = parse_bool(key, value)?,
            "dump_indicators" => self.dump_indicators = parse_bool(key, value)?,
            _ => return Ok(false),
        }
        Ok(true)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        self.spec.validate()?;
        self.gummel.validate()?;
        let range = |key: &'static str, ok: bool, reason: &str| {
            if ok {
                Ok(())
            } else {
                Err(ConfigError::Range { key, reason: reason.into() })
            }
        };
        let h = &self.hierarchy;
        range("theta", h.marking.theta > 0.0 && h.marking.theta <= 1.0, "must lie in (0, 1]")?;
        range("pilot_samples", h.pilot_samples >= 2, "at least 2 are needed for a variance")?;
        range("max_levels", (1..=12).contains(&h.max_levels), "must lie in 1..=12")?;
        range("uniform_max_levels", self.uniform_max_levels.is_none_or(|l| (1..=12).contains(&l)), "must lie in 1..=12")?;
        range("hierarchy_epsilon", h.epsilon > 0.0, "must be positive")?;
        range("initial_h", h.initial_h > 0.0 && h.initial_h.is_finite(), "must be positive")?;
        range("default_alpha", h.default_alpha > 0.0, "must be positive")?;
        range("c1..c6", h.estimator.weights.iter().all(|w| *w >= 0.0 && w.is_finite()), "must be non-negative")?;
        range("epsilons", !self.epsilons.is_empty(), "at least one tolerance is needed")?;
        range("epsilons", self.epsilons.iter().all(|e| *e > 0.0 && e.is_finite()), "must be positive")?;
        range("batch", self.mlmc.batch >= 1, "must be at least 1")?;
        range("level", self.level <= 8, "must lie in 0..=8")?;
        if let VarianceSource::Warmup(k) = self.mlmc.variances {
            range("variances", k >= 2, "warmup needs at least 2 samples")?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_text_gives_defaults() {
        assert_eq!(RunConfig::parse("# nothing\n\n").unwrap(), RunConfig::default());
    }

    #[test]
    fn entries_override_defaults() {
        let c = RunConfig::parse("theta = 0.5\nepsilons = 4, 2\nvariances = warmup:10 # comment\nc3=2\nuniform_max_levels = 4").unwrap();
        assert_eq!(c.uniform_max_levels, Some(4));
        assert_eq!(c.hierarchy.marking.theta, 0.5);
        assert_eq!(c.epsilons, vec![4.0, 2.0]);
        assert_eq!(c.mlmc.variances, VarianceSource::Warmup(10));
        assert_eq!(c.hierarchy.estimator.weights[2], 2.0);
    }

    #[test]
    fn rejects_unknown_and_bad_values() {
        assert!(matches!(RunConfig::parse("tehta = 0.5"), Err(ConfigError::UnknownKey { line: 1, .. })));
        assert!(matches!(RunConfig::parse("theta = 1.5"), Err(ConfigError::Range { key: "theta", .. })));
        assert!(matches!(RunConfig::parse("theta = x"), Err(ConfigError::Value { .. })));
        assert!(matches!(RunConfig::parse("theta"), Err(ConfigError::Syntax { line: 1 })));
        assert!(matches!(RunConfig::parse("seed = 1\nseed = 2"), Err(ConfigError::Duplicate { line: 2, .. })));
        assert!(matches!(RunConfig::parse("mu_n = -1"), Err(ConfigError::Core(_))));
    }

    #[test]
    fn slab_geometry() {
        let c = RunConfig::parse("geometry = slab\nslab_length = 100\nslab_width = 4").unwrap();
        assert_eq!(c.spec.geometry, Geometry::Slab { length: 100.0, width: 4.0 });
        assert!(RunConfig::parse("geometry = slab").is_err());
    }
}
