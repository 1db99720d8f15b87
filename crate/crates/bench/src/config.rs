//! Experiment configuration files.
//!
//! Line-oriented `key = value` pairs under `[section]` headers; `#` and `;`
//! start comments. Unknown sections and keys are errors. Relative paths are
//! resolved against the directory of the configuration file.
//!
//! ```text
//! [problem]
//! kind = swe            # swe | gray-scott | linear-test
//! grid = 32
//! t_final = 0.5
//!
//! [method]
//! tableau = rok4a       # built-in name or path to a tableau file
//!
//! [configurations]
//! labels = M=4, LM=4, LR=tol
//!
//! [sweep]
//! h0 = 0.0025
//! halvings = 4
//!
//! [reference]
//! file = swe32.ref
//! ```

use std::collections::HashSet;
use std::path::{Path, PathBuf};

use borok::integrator::{load_tableau, MethodTableau, TableauError};
use borok::problem::{GrayScottParams, ShallowWaterParams};
use borok::stepcontrol::ControllerConfig;
use ini::Ini;
use thiserror::Error;

use crate::label::{Configuration, LabelError};
use crate::problems::{LinearTestParams, ProblemSpec};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("syntax error: {0}")]
    Syntax(String),
    #[error("missing key `{key}` in [{section}]")]
    Missing { section: &'static str, key: &'static str },
    #[error("[{section}] {key}: {message}")]
    Invalid { section: String, key: String, message: String },
    #[error("unknown key `{key}` in [{section}]")]
    UnknownKey { section: String, key: String },
    #[error("unknown section [{0}]")]
    UnknownSection(String),
    #[error(transparent)]
    Label(#[from] LabelError),
    #[error("duplicate configuration label {0:?}")]
    DuplicateLabel(String),
    #[error("tableau: {0}")]
    Tableau(#[from] TableauError),
    #[error("{0}")]
    Other(String),
}

/// Controller settings other than the tolerance, which comes from the sweep.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ControllerOverrides {
    pub h_init: Option<f64>,
    pub h_min: Option<f64>,
    pub h_max: Option<f64>,
    pub safety: Option<f64>,
    pub fac_min: Option<f64>,
    pub fac_max: Option<f64>,
    pub max_steps: Option<usize>,
}

impl ControllerOverrides {
    pub fn controller(&self, tol: f64) -> ControllerConfig {
        let mut c = ControllerConfig::with_tol(tol);
        c.h_init = self.h_init;
        c.h_max = self.h_max;
        if let Some(v) = self.h_min {
            c.h_min = v;
        }
        if let Some(v) = self.safety {
            c.safety = v;
        }
        if let Some(v) = self.fac_min {
            c.fac_min = v;
        }
        if let Some(v) = self.fac_max {
            c.fac_max = v;
        }
        if let Some(v) = self.max_steps {
            c.max_steps = v;
        }
        c
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ReferenceSpec {
    /// Where the reference is read from, or written to when absent.
    pub file: Option<PathBuf>,
    /// Step of the reference run; defaults to the smallest sweep step over 16.
    pub h_ref: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub problem: ProblemSpec,
    pub tableau: MethodTableau,
    /// Labels in file order, each with its parsed configuration.
    pub configurations: Vec<(String, Configuration)>,
    pub step_sizes: Vec<f64>,
    pub tolerances: Vec<f64>,
    pub controller: ControllerOverrides,
    pub reference: ReferenceSpec,
}

impl ExperimentConfig {
    pub fn from_file(path: &Path) -> Result<Self, ConfigError> {
        let text =
            std::fs::read_to_string(path).map_err(|source| ConfigError::Io { path: path.to_path_buf(), source })?;
        Self::parse(&text, path.parent().unwrap_or(Path::new(".")))
    }

    pub fn parse(text: &str, base_dir: &Path) -> Result<Self, ConfigError> {
        let ini = Ini::load_from_str(text).map_err(|e| ConfigError::Syntax(e.to_string()))?;
        let mut problem = Section::new("problem");
        let mut method = Section::new("method");
        let mut configurations = Section::new("configurations");
        let mut sweep = Section::new("sweep");
        let mut controller = Section::new("controller");
        let mut reference = Section::new("reference");
        for (name, props) in ini.iter() {
            let target = match name {
                None if props.is_empty() => continue,
                None => {
                    let key = props.iter().next().map(|(k, _)| k.to_string()).unwrap_or_default();
                    return Err(ConfigError::Other(format!("key `{key}` appears before any [section]")));
                }
                Some("problem") => &mut problem,
                Some("method") => &mut method,
                Some("configurations") => &mut configurations,
                Some("sweep") => &mut sweep,
                Some("controller") => &mut controller,
                Some("reference") => &mut reference,
                Some(other) => return Err(ConfigError::UnknownSection(other.to_string())),
            };
            for (k, v) in props.iter() {
                target.entries.push((k.trim().to_string(), v.trim().to_string()));
            }
        }

        let problem_spec = parse_problem(problem)?;
        let tableau = match method.take("tableau") {
            None => MethodTableau::rok4a(),
            Some(t) => match MethodTableau::builtin(&t) {
                Ok(tab) => tab,
                Err(TableauError::Unknown(_)) => {
                    let path = base_dir.join(&t);
                    let src = std::fs::read_to_string(&path)
                        .map_err(|source| ConfigError::Io { path: path.clone(), source })?;
                    load_tableau(&src)?
                }
                Err(e) => return Err(e.into()),
            },
        };
        let m_min: Option<usize> = method.parse("m_min")?;
        let m_max: Option<usize> = method.parse("m_max")?;
        method.finish()?;

        let labels =
            configurations.take("labels").ok_or(ConfigError::Missing { section: "configurations", key: "labels" })?;
        configurations.finish()?;
        let mut configs = Vec::new();
        let mut seen = HashSet::new();
        for raw in labels.split(',').map(str::trim).filter(|s| !s.is_empty()) {
            let mut c: Configuration = raw.parse()?;
            if let Some(m) = m_min {
                c.strategy = c.strategy.with_m_min(m);
            }
            if let Some(m) = m_max {
                c.strategy = c.strategy.with_m_max(m);
            }
            c.strategy.validate(tableau.order, c.integrator).map_err(|e| ConfigError::Invalid {
                section: "configurations".into(),
                key: raw.into(),
                message: e.to_string(),
            })?;
            let label = c.label();
            if !seen.insert(label.clone()) {
                return Err(ConfigError::DuplicateLabel(label));
            }
            configs.push((label, c));
        }
        if configs.is_empty() {
            return Err(ConfigError::Missing { section: "configurations", key: "labels" });
        }

        let mut step_sizes: Vec<f64> = sweep.parse_list("step_sizes")?.unwrap_or_default();
        let h0: Option<f64> = sweep.parse("h0")?;
        let halvings: Option<usize> = sweep.parse("halvings")?;
        match (h0, halvings) {
            (Some(h0), Some(k)) if step_sizes.is_empty() => {
                step_sizes = (0..=k).map(|i| h0 / 2f64.powi(i as i32)).collect();
            }
            (None, None) => {}
            _ => return Err(ConfigError::Other("[sweep] give either step_sizes or both h0 and halvings".into())),
        }
        let tolerances: Vec<f64> = sweep.parse_list("tolerances")?.unwrap_or_default();
        sweep.finish()?;
        if step_sizes.is_empty() && tolerances.is_empty() {
            return Err(ConfigError::Other("[sweep] needs step sizes or tolerances".into()));
        }
        for &v in step_sizes.iter().chain(&tolerances) {
            if !(v > 0.0 && v.is_finite()) {
                return Err(ConfigError::Other(format!("[sweep] values must be positive, got {v}")));
            }
        }

        let overrides = ControllerOverrides {
            h_init: controller.parse("h_init")?,
            h_min: controller.parse("h_min")?,
            h_max: controller.parse("h_max")?,
            safety: controller.parse("safety")?,
            fac_min: controller.parse("fac_min")?,
            fac_max: controller.parse("fac_max")?,
            max_steps: controller.parse("max_steps")?,
        };
        controller.finish()?;
        for &tol in &tolerances {
            overrides.controller(tol).validate().map_err(|e| ConfigError::Invalid {
                section: "controller".into(),
                key: "-".into(),
                message: e.to_string(),
            })?;
        }

        let reference_spec =
            ReferenceSpec { file: reference.take("file").map(|f| base_dir.join(f)), h_ref: reference.parse("h_ref")? };
        reference.finish()?;
        if let Some(h) = reference_spec.h_ref {
            if !(h > 0.0 && h.is_finite()) {
                return Err(ConfigError::Other(format!("[reference] h_ref must be positive, got {h}")));
            }
        }

        Ok(Self {
            problem: problem_spec,
            tableau,
            configurations: configs,
            step_sizes,
            tolerances,
            controller: overrides,
            reference: reference_spec,
        })
    }

    /// Overrides the problem seed.
    pub fn set_seed(&mut self, seed: u64) {
        self.problem.set_seed(seed);
    }

    /// Keeps only configurations whose label matches `pattern`.
    pub fn filter_labels(&mut self, pattern: &glob::Pattern) {
        self.configurations.retain(|(label, _)| pattern.matches(label));
    }
}

fn parse_problem(mut s: Section) -> Result<ProblemSpec, ConfigError> {
    let kind = s.take("kind").ok_or(ConfigError::Missing { section: "problem", key: "kind" })?;
    let t_start: Option<f64> = s.parse("t_start")?;
    let t_final: Option<f64> = s.parse("t_final")?;
    let span = |default: (f64, f64)| (t_start.unwrap_or(default.0), t_final.unwrap_or(default.1));
    let seed: Option<u64> = s.parse("seed")?;
    let spec = match kind.as_str() {
        "swe" => {
            let d = ShallowWaterParams::default();
            ProblemSpec::Swe(ShallowWaterParams {
                grid_n: s.parse("grid")?.unwrap_or(d.grid_n),
                gravity: s.parse("gravity")?.unwrap_or(d.gravity),
                bump_height: s.parse("bump_height")?.unwrap_or(d.bump_height),
                bump_width: s.parse("bump_width")?.unwrap_or(d.bump_width),
                t_span: span(d.t_span),
            })
        }
        "gray-scott" => {
            let d = GrayScottParams::default();
            ProblemSpec::GrayScott(GrayScottParams {
                grid_n: s.parse("grid")?.unwrap_or(d.grid_n),
                eps1: s.parse("eps1")?.unwrap_or(d.eps1),
                eps2: s.parse("eps2")?.unwrap_or(d.eps2),
                feed: s.parse("feed")?.unwrap_or(d.feed),
                kill: s.parse("kill")?.unwrap_or(d.kill),
                domain: s.parse("domain")?.unwrap_or(d.domain),
                perturbation: s.parse("perturbation")?.unwrap_or(d.perturbation),
                seed: seed.unwrap_or(d.seed),
                t_span: span(d.t_span),
            })
        }
        "linear-test" => {
            let d = LinearTestParams::default();
            ProblemSpec::LinearTest(LinearTestParams {
                size: s.parse("size")?.unwrap_or(d.size),
                stiffness: s.parse("stiffness")?.unwrap_or(d.stiffness),
                seed: seed.unwrap_or(d.seed),
                t_span: span(d.t_span),
            })
        }
        other => {
            return Err(ConfigError::Invalid {
                section: "problem".into(),
                key: "kind".into(),
                message: format!("unknown problem {other:?} (expected swe, gray-scott or linear-test)"),
            })
        }
    };
    s.finish()?;
    let (t0, tf) = spec.t_span();
    if !(t0 < tf) {
        return Err(ConfigError::Other(format!("[problem] need t_start < t_final, got {t0} and {tf}")));
    }
    spec.build().map_err(|e| ConfigError::Other(format!("[problem] {e}")))?;
    Ok(spec)
}

/// Keys of one section, consumed as they are read.
struct Section {
    name: &'static str,
    entries: Vec<(String, String)>,
}

impl Section {
    fn new(name: &'static str) -> Self {
        Self { name, entries: Vec::new() }
    }

    fn take(&mut self, key: &str) -> Option<String> {
        let pos = self.entries.iter().rposition(|(k, _)| k == key)?;
        let (_, v) = self.entries.remove(pos);
        self.entries.retain(|(k, _)| k != key);
        Some(v)
    }

    fn parse<T: std::str::FromStr>(&mut self, key: &str) -> Result<Option<T>, ConfigError> {
        match self.take(key) {
            None => Ok(None),
            Some(v) => v.parse().map(Some).map_err(|_| ConfigError::Invalid {
                section: self.name.into(),
                key: key.into(),
                message: format!("cannot parse {v:?}"),
            }),
        }
    }

    fn parse_list<T: std::str::FromStr>(&mut self, key: &str) -> Result<Option<Vec<T>>, ConfigError> {
        let Some(v) = self.take(key) else { return Ok(None) };
        v.split(',')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(|x| {
                x.parse().map_err(|_| ConfigError::Invalid {
                    section: self.name.into(),
                    key: key.into(),
                    message: format!("cannot parse {x:?}"),
                })
            })
            .collect::<Result<Vec<T>, _>>()
            .map(Some)
    }

    fn finish(self) -> Result<(), ConfigError> {
        match self.entries.into_iter().next() {
            None => Ok(()),
            Some((key, _)) => Err(ConfigError::UnknownKey { section: self.name.into(), key }),
        }
    }
}
