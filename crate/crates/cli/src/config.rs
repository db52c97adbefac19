//! Experiment configuration.
//!
//! One TOML file describes a run. Values are layered: built-in defaults for
//! the chosen budget, then the file, then the `MMNLSE_OUTPUT_DIR` /
//! `MMNLSE_THREADS` environment overrides, then command-line overrides
//! (`--set section.key=value` and the dedicated flags). The fully resolved
//! configuration, with fiber and pulse written out, is stored next to every
//! run's outputs.
//!
//! ```toml
//! kind = "train"            # analytic | ssf | train | compare | tables
//! preset = "desk-single"    # case1..case6, desk-single
//! budget = "desk"           # full | desk: default network and training sizes
//! seed = 7
//! scaling = "on"            # on | off: δβ₀ scaling before normalization
//! output_dir = "runs/desk"
//! write_csv = false
//!
//! [network]
//! n_blocks = 3
//! width = 64
//!
//! [train]                   # every TrainConfig field
//! max_iterations = 10000
//! batch_size = 128
//!
//! [ssf]                     # omitted fields follow the step-count rule
//! n_t = 4096
//!
//! [compare]
//! checkpoint = "runs/desk/net"
//! reference = "runs/ssf/fields.bin"
//! ```

use std::path::PathBuf;

use mmnlse::exec::ExecPolicy;
use mmnlse::fiber::{FiberSpec, PulseSpec};
use mmnlse::net::NetworkSpec;
use mmnlse::pinn::TrainConfig;
use mmnlse::presets::preset;
use mmnlse::ssf::SsfConfig;
use mmnlse::transforms::Scaling;
use serde::{Deserialize, Serialize};
use toml::{Table, Value};

use crate::error::{CliError, CliResult};

pub const ENV_OUTPUT_DIR: &str = "MMNLSE_OUTPUT_DIR";
pub const ENV_THREADS: &str = "MMNLSE_THREADS";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RunKind {
    Analytic,
    Ssf,
    Train,
    Compare,
    Tables,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Budget {
    #[default]
    Full,
    Desk,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkSection {
    pub n_blocks: usize,
    pub width: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct SsfSection {
    pub n_z: Option<usize>,
    pub n_t: Option<usize>,
    pub checkpoint_stride: Option<usize>,
    pub exec: ExecPolicy,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CompareSection {
    pub checkpoint: PathBuf,
    pub reference: PathBuf,
}

/// Pulse parameters; peak power is derived.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PulseSection {
    pub energy: f64,
    pub t0: f64,
    pub time_window: f64,
    #[serde(default)]
    pub energy_split: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub kind: RunKind,
    #[serde(default)]
    pub preset: Option<String>,
    #[serde(default)]
    pub budget: Budget,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_scaling")]
    pub scaling: Scaling,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    #[serde(default)]
    pub write_csv: bool,
    /// Overrides the preset's fiber.
    #[serde(default)]
    pub fiber: Option<FiberSpec>,
    /// Overrides the fiber length only.
    #[serde(default)]
    pub length: Option<f64>,
    #[serde(default)]
    pub pulse: Option<PulseSection>,
    #[serde(default)]
    pub ssf: SsfSection,
    pub network: NetworkSection,
    pub train: TrainConfig,
    #[serde(default)]
    pub compare: Option<CompareSection>,
}

fn default_scaling() -> Scaling {
    Scaling::On
}

/// Fiber, pulse and solver settings after presets and overrides.
#[derive(Debug, Clone, PartialEq)]
pub struct Resolved {
    pub config: ExperimentConfig,
    pub fiber: FiberSpec,
    pub pulse: PulseSpec,
    pub output_dir: PathBuf,
}

impl Resolved {
    pub fn network_spec(&self) -> NetworkSpec {
        NetworkSpec::new(self.config.network.n_blocks, self.config.network.width, self.fiber.n_modes())
    }

    pub fn ssf_config(&self) -> CliResult<SsfConfig> {
        let mut c = SsfConfig::for_problem(&self.fiber, &self.pulse)?;
        let s = &self.config.ssf;
        if let Some(n) = s.n_z {
            c.n_z = n;
            c.checkpoint_stride = (n / 100).max(1);
        }
        if let Some(n) = s.n_t {
            c.n_t = n;
        }
        if let Some(k) = s.checkpoint_stride {
            c.checkpoint_stride = k;
        }
        c.exec = s.exec;
        c.validate()?;
        Ok(c)
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            seed: self.config.seed,
            ..self.config.train.clone()
        }
    }

    /// The configuration with fiber and pulse written out, so it re-creates
    /// this run without the preset table.
    pub fn explicit(&self) -> ExperimentConfig {
        let mut c = self.config.clone();
        c.fiber = Some(self.fiber.clone());
        c.length = None;
        c.pulse = Some(PulseSection {
            energy: self.pulse.energy,
            t0: self.pulse.t0,
            time_window: self.pulse.time_window,
            energy_split: Some(self.pulse.energy_split.clone()),
        });
        c.output_dir = Some(self.output_dir.clone());
        c.train.seed = c.seed;
        c
    }
}

fn budget_defaults(budget: Budget) -> Table {
    let (network, train) = match budget {
        Budget::Full => (NetworkSection { n_blocks: 6, width: 150 }, TrainConfig::default()),
        Budget::Desk => (NetworkSection { n_blocks: 3, width: 64 }, TrainConfig::desk()),
    };
    let mut t = Table::new();
    t.insert("network".into(), Value::try_from(network).expect("network section serializes"));
    t.insert("train".into(), Value::try_from(train).expect("train section serializes"));
    t
}

/// Recursively overlay `top` onto `base`.
fn merge(base: &mut Table, top: Table) {
    for (k, v) in top {
        match (base.get_mut(&k), v) {
            (Some(Value::Table(b)), Value::Table(t)) => merge(b, t),
            (_, v) => {
                base.insert(k, v);
            }
        }
    }
}

/// Parse a `--set` right-hand side: TOML scalar/array if it parses, else a
/// bare string.
fn parse_value(raw: &str) -> Value {
    let probe = format!("v = {raw}");
    match probe.parse::<Table>() {
        Ok(mut t) => t.remove("v").unwrap_or_else(|| Value::String(raw.into())),
        Err(_) => Value::String(raw.into()),
    }
}

/// Apply `section.key=value` at its dotted path.
pub fn apply_override(table: &mut Table, assignment: &str) -> CliResult<()> {
    let (path, raw) = assignment
        .split_once('=')
        .ok_or_else(|| CliError::Config(format!("override `{assignment}` is not key=value")))?;
    let keys: Vec<&str> = path.trim().split('.').collect();
    if keys.iter().any(|k| k.is_empty()) {
        return Err(CliError::Config(format!("override `{assignment}` has an empty key")));
    }
    let mut cur = table;
    for k in &keys[..keys.len() - 1] {
        let entry = cur.entry(k.to_string()).or_insert_with(|| Value::Table(Table::new()));
        cur = entry
            .as_table_mut()
            .ok_or_else(|| CliError::Config(format!("override `{path}`: `{k}` is not a section")))?;
    }
    cur.insert(keys[keys.len() - 1].to_string(), parse_value(raw.trim()));
    Ok(())
}

/// Layered sources for one run.
#[derive(Debug, Clone, Default)]
pub struct Sources {
    pub file: Option<String>,
    /// `MMNLSE_OUTPUT_DIR`, `MMNLSE_THREADS` as read from the environment.
    pub env_output_dir: Option<String>,
    /// `key=value` assignments, applied in order.
    pub overrides: Vec<String>,
}

impl Sources {
    pub fn from_env(file: Option<String>, overrides: Vec<String>) -> Self {
        Sources {
            file,
            env_output_dir: std::env::var(ENV_OUTPUT_DIR).ok(),
            overrides,
        }
    }
}

/// Build the configuration table from all layers, then type-check it.
pub fn load(sources: &Sources) -> CliResult<ExperimentConfig> {
    let mut user = match &sources.file {
        Some(text) => text
            .parse::<Table>()
            .map_err(|e| CliError::Config(format!("config file: {e}")))?,
        None => Table::new(),
    };
    if let Some(dir) = &sources.env_output_dir {
        user.insert("output_dir".into(), Value::String(dir.clone()));
    }
    for o in &sources.overrides {
        apply_override(&mut user, o)?;
    }
    let budget = match user.get("budget") {
        Some(v) => v
            .clone()
            .try_into::<Budget>()
            .map_err(|e| CliError::Config(format!("budget: {e}")))?,
        None => Budget::default(),
    };
    let mut table = budget_defaults(budget);
    merge(&mut table, user);
    let cfg: ExperimentConfig = Value::Table(table)
        .try_into()
        .map_err(|e: toml::de::Error| CliError::Config(format!("config: {}", e.to_string().trim())))?;
    Ok(cfg)
}

/// Fill fiber and pulse from the preset and explicit sections and validate.
pub fn resolve(config: ExperimentConfig) -> CliResult<Resolved> {
    let p = match &config.preset {
        Some(name) => Some(preset(name).ok_or_else(|| {
            CliError::Config(format!(
                "preset: unknown `{name}` (known: {})",
                mmnlse::presets::PRESETS.iter().map(|p| p.name).collect::<Vec<_>>().join(", ")
            ))
        })?),
        None => None,
    };
    let mut fiber = match (&config.fiber, p) {
        (Some(f), _) => f.clone(),
        (None, Some(p)) => p.fiber(),
        (None, None) if config.kind == RunKind::Tables => mmnlse::presets::canonical_fiber(5.0),
        (None, None) => return Err(CliError::Config("fiber: give `preset` or a [fiber] section".into())),
    };
    if let Some(l) = config.length {
        fiber = fiber.with_length(l);
    }
    fiber.validate()?;
    let n = fiber.n_modes();
    let pulse = match (&config.pulse, p) {
        (Some(s), _) => {
            let mut pulse = PulseSpec::gaussian(s.energy, s.t0, s.time_window, n)?;
            if let Some(split) = &s.energy_split {
                pulse.energy_split = split.clone();
            }
            pulse
        }
        (None, Some(p)) => p.pulse(),
        (None, None) => PulseSpec::gaussian(10.0, mmnlse::presets::T0, mmnlse::presets::TIME_WINDOW, n)?,
    };
    pulse.validate(n)?;
    config.train.validate()?;
    NetworkSpec::new(config.network.n_blocks, config.network.width, n).validate()?;
    if config.kind == RunKind::Compare && config.compare.is_none() {
        return Err(CliError::Config("compare: kind = \"compare\" needs a [compare] section".into()));
    }
    if config.kind == RunKind::Analytic && !fiber.is_linear() {
        return Err(CliError::Config("kind: the analytic solution covers linear fibers only".into()));
    }
    let output_dir = config.output_dir.clone().unwrap_or_else(|| {
        let stem = config.preset.clone().unwrap_or_else(|| format!("{:?}", config.kind).to_lowercase());
        PathBuf::from("runs").join(stem)
    });
    Ok(Resolved {
        config,
        fiber,
        pulse,
        output_dir,
    })
}

/// Serialize a configuration as TOML.
pub fn to_toml(config: &ExperimentConfig) -> CliResult<String> {
    toml::to_string_pretty(config).map_err(|e| CliError::Config(format!("serialize config: {e}")))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sources(file: &str, overrides: &[&str]) -> Sources {
        Sources {
            file: Some(file.into()),
            env_output_dir: None,
            overrides: overrides.iter().map(|s| s.to_string()).collect(),
        }
    }

    #[test]
    fn budget_sets_defaults_and_file_overrides_them() {
        let c = load(&sources("kind = \"train\"\nbudget = \"desk\"\n[train]\nlr = 0.01\n", &[])).unwrap();
        assert_eq!((c.network.n_blocks, c.network.width), (3, 64));
        assert_eq!(c.train.n_interior, 20_000);
        assert_eq!(c.train.lr, 0.01);
        let c = load(&sources("kind = \"ssf\"", &[])).unwrap();
        assert_eq!((c.network.n_blocks, c.network.width), (6, 150));
        assert_eq!(c.train.n_interior, 240_000);
    }

    #[test]
    fn flags_beat_file_and_env_beats_file() {
        let mut s = sources("kind = \"train\"\noutput_dir = \"a\"\n[train]\nbatch_size = 10\n", &["train.batch_size=20", "seed=3"]);
        s.env_output_dir = Some("b".into());
        let c = load(&s).unwrap();
        assert_eq!(c.train.batch_size, 20);
        assert_eq!(c.seed, 3);
        assert_eq!(c.output_dir, Some(PathBuf::from("b")));
        s.overrides.push("output_dir=c".into());
        assert_eq!(load(&s).unwrap().output_dir, Some(PathBuf::from("c")));
    }

    #[test]
    fn every_train_field_is_overridable() {
        let t = Value::try_from(TrainConfig::default()).unwrap();
        for (k, v) in t.as_table().unwrap() {
            let c = load(&sources("kind = \"train\"", &[&format!("train.{k}={v}")]));
            assert!(c.is_ok(), "train.{k}: {c:?}");
        }
    }

    #[test]
    fn errors_name_the_field() {
        let e = load(&sources("kind = \"train\"\n[train]\nlrr = 1\n", &[])).unwrap_err();
        assert!(e.to_string().contains("lrr"), "{e}");
        let e = load(&sources("kind = \"bogus\"", &[])).unwrap_err();
        assert!(e.to_string().contains("bogus"), "{e}");
        let c = load(&sources("kind = \"ssf\"\npreset = \"case9\"", &[])).unwrap();
        assert!(resolve(c).unwrap_err().to_string().contains("case9"));
        let c = load(&sources("kind = \"train\"\npreset = \"case1\"\n[train]\nfactor = 2.0", &[])).unwrap();
        assert!(resolve(c).unwrap_err().to_string().contains("train.factor"));
    }

    #[test]
    fn explicit_config_round_trips() {
        let c = load(&sources("kind = \"ssf\"\npreset = \"case4\"\nlength = 2.0", &[])).unwrap();
        let r = resolve(c).unwrap();
        assert_eq!(r.fiber.length, 2.0);
        let text = to_toml(&r.explicit()).unwrap();
        let again = resolve(load(&sources(&text, &[])).unwrap()).unwrap();
        assert_eq!(again.fiber, r.fiber);
        assert_eq!(again.pulse, r.pulse);
        assert_eq!(again.explicit(), r.explicit());
    }

    #[test]
    fn analytic_needs_linear_fiber() {
        let c = load(&sources("kind = \"analytic\"\npreset = \"case4\"", &[])).unwrap();
        assert!(resolve(c).is_err());
    }
}
