//! Experiment configuration: strict JSON, validated in full before any
//! computation starts.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use zdmix_core::billiard::ValidationOptions;
use zdmix_core::oracle::{Edge, MarkovSpec};
use zdmix_core::{BilliardTable, Cell, MarkovExtension, ObservableSpec, ScattererSpec};

use crate::CliError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Experiment {
    Validate,
    Sigma,
    Llt,
    Mixing,
    Tail,
    OracleIdentities,
    PropScan,
}

impl Experiment {
    pub fn name(self) -> &'static str {
        match self {
            Experiment::Validate => "validate",
            Experiment::Sigma => "sigma",
            Experiment::Llt => "llt",
            Experiment::Mixing => "mixing",
            Experiment::Tail => "tail",
            Experiment::OracleIdentities => "oracle-identities",
            Experiment::PropScan => "prop-scan",
        }
    }
}

impl fmt::Display for Experiment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SystemConfig {
    Billiard {
        #[serde(default = "BilliardTable::default_scatterers")]
        scatterers: Vec<ScattererSpec>,
        #[serde(default = "default_corridor_directions")]
        corridor_directions: i64,
        #[serde(default = "default_flight_samples")]
        flight_samples: usize,
    },
    SimpleRandomWalk,
    LazyWalk {
        hold: f64,
    },
    RandomChain {
        n_states: usize,
        seed: u64,
    },
    Markov {
        states: Vec<Vec<Edge>>,
        #[serde(default = "default_dim")]
        dim: usize,
    },
}

fn default_corridor_directions() -> i64 {
    ValidationOptions::default().n_dirs
}

fn default_flight_samples() -> usize {
    ValidationOptions::default().n_rays
}

fn default_dim() -> usize {
    2
}

/// Run parameters. Every field is optional in the file; experiments fill
/// in their own defaults and reject what they need but did not get.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Params {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub n_grid: Vec<usize>,
    /// Number of trajectories `N`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n_samples: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cap: Option<usize>,
    /// Worker hint; never affects results.
    #[serde(skip_serializing)]
    pub workers: Option<usize>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub cells: Vec<Cell>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sigma_steps: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sigma_samples: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n_integral: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub u: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub v: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub k: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cell: Option<Cell>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n_max: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub budget: Option<usize>,
    #[serde(flatten, skip_serializing)]
    unknown: BTreeMap<String, Value>,
}

#[derive(Debug, Deserialize)]
struct RawConfig {
    system: Option<Value>,
    #[serde(default)]
    observables: BTreeMap<String, Value>,
    experiment: Option<Value>,
    params: Option<Value>,
    output: Option<PathBuf>,
    #[serde(flatten)]
    unknown: BTreeMap<String, Value>,
}

/// The built system a config describes.
pub enum System {
    Billiard(BilliardTable),
    Markov(MarkovExtension),
}

/// Facts established while validating the system.
#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(untagged)]
pub enum Derived {
    Billiard {
        horizon_bound: f64,
        max_psi: i64,
        free_area: f64,
        total_perimeter: f64,
    },
    Markov {
        n_states: usize,
        period: usize,
        stationary: Vec<f64>,
    },
}

/// A fully validated configuration. Serializes to the config echo written
/// into every bundle; the output path and worker hint are left out so that
/// bundles compare equal across runs.
#[derive(Serialize)]
pub struct ExperimentConfig {
    pub system: SystemConfig,
    pub derived: Derived,
    pub observables: BTreeMap<String, ObservableSpec>,
    pub experiment: Experiment,
    pub params: Params,
    #[serde(skip)]
    pub output: Option<PathBuf>,
    #[serde(skip)]
    pub built: Option<System>,
}

impl ExperimentConfig {
    pub fn seed(&self) -> u64 {
        self.params.seed.expect("validated configs carry a seed")
    }

    pub fn system(&self) -> &System {
        self.built.as_ref().expect("validated configs carry a built system")
    }
}

#[derive(Default)]
struct Violations(Vec<String>);

impl Violations {
    fn push(&mut self, msg: impl Into<String>) {
        self.0.push(msg.into());
    }

    fn parse<T: DeserializeOwned>(&mut self, what: &str, value: Value) -> Option<T> {
        match serde_json::from_value(value) {
            Ok(t) => Some(t),
            Err(e) => {
                self.push(format!("{what}: {e}"));
                None
            }
        }
    }

    fn unknown(&mut self, prefix: &str, keys: &BTreeMap<String, Value>) {
        for k in keys.keys() {
            self.push(format!("{prefix}{k}: unknown key"));
        }
    }
}

/// Reads and validates a config. `experiment` comes from the subcommand and
/// must agree with the file when both name one.
pub fn load(path: &Path, experiment: Option<Experiment>) -> Result<ExperimentConfig, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Schema(vec![format!("{}: {e}", path.display())]))?;
    parse(&text, experiment)
}

pub fn parse(text: &str, experiment: Option<Experiment>) -> Result<ExperimentConfig, CliError> {
    let mut v = Violations::default();
    let raw: RawConfig = serde_json::from_str(text).map_err(|e| CliError::Schema(vec![e.to_string()]))?;
    v.unknown("", &raw.unknown);

    let system: Option<SystemConfig> = match raw.system {
        Some(s) => v.parse("system", s),
        None => {
            v.push("system: missing");
            None
        }
    };
    if let Some(s) = &system {
        check_system(s, &mut v);
    }

    let mut observables = BTreeMap::new();
    for (name, spec) in raw.observables {
        if let Some(spec) = v.parse::<ObservableSpec>(&format!("observables.{name}"), spec) {
            observables.insert(name, spec);
        }
    }

    let from_file: Option<Experiment> = raw.experiment.and_then(|e| v.parse("experiment", e));
    let experiment = match (from_file, experiment) {
        (Some(a), Some(b)) if a != b => {
            v.push(format!("experiment: config names {a} but the {b} subcommand was used"));
            None
        }
        (a, b) => a.or(b),
    };
    if experiment.is_none() && from_file.is_none() {
        v.push("experiment: missing (name it in the config or use its subcommand)");
    }

    let params: Option<Params> = v.parse("params", raw.params.unwrap_or_else(|| Value::Object(Default::default())));
    if let Some(p) = &params {
        v.unknown("params.", &p.unknown);
        check_params(p, &observables, experiment, &mut v);
    }

    if !v.0.is_empty() {
        return Err(CliError::Schema(v.0));
    }
    let (system, experiment, params) = (system.unwrap(), experiment.unwrap(), params.unwrap());
    let (built, derived) = build_system(&system, params.seed.unwrap())?;
    if experiment == Experiment::OracleIdentities && matches!(built, System::Billiard(_)) {
        return Err(CliError::Schema(vec!["experiment: oracle-identities needs a Markov system".into()]));
    }
    Ok(ExperimentConfig {
        system,
        derived,
        observables,
        experiment,
        params,
        output: raw.output,
        built: Some(built),
    })
}

fn check_system(s: &SystemConfig, v: &mut Violations) {
    match s {
        SystemConfig::Billiard {
            scatterers,
            corridor_directions,
            flight_samples,
        } => {
            if scatterers.is_empty() {
                v.push("system.scatterers: at least one scatterer is required");
            }
            for (i, sc) in scatterers.iter().enumerate() {
                if !(sc.radius > 0.0 && sc.radius < 0.5) {
                    v.push(format!("system.scatterers[{i}].radius: {} is outside (0, 1/2)", sc.radius));
                }
                if !sc.center.iter().all(|c| c.is_finite()) {
                    v.push(format!("system.scatterers[{i}].center: not finite"));
                }
            }
            if *corridor_directions < 1 {
                v.push("system.corridor_directions: must be at least 1");
            }
            if *flight_samples == 0 {
                v.push("system.flight_samples: must be positive");
            }
        }
        SystemConfig::SimpleRandomWalk => {}
        SystemConfig::LazyWalk { hold } => {
            if !(0.0..1.0).contains(hold) {
                v.push(format!("system.hold: {hold} is outside [0, 1)"));
            }
        }
        SystemConfig::RandomChain { n_states, .. } => {
            if *n_states == 0 {
                v.push("system.n_states: must be positive");
            }
        }
        SystemConfig::Markov { states, dim } => {
            if states.is_empty() {
                v.push("system.states: at least one state is required");
            }
            if !(1..=2).contains(dim) {
                v.push(format!("system.dim: {dim} is not 1 or 2"));
            }
        }
    }
}

fn check_params(p: &Params, observables: &BTreeMap<String, ObservableSpec>, experiment: Option<Experiment>, v: &mut Violations) {
    if p.seed.is_none() {
        v.push("params.seed: missing (seeds are mandatory)");
    }
    for (name, value) in [("n_samples", p.n_samples), ("cap", p.cap), ("workers", p.workers), ("sigma_steps", p.sigma_steps)] {
        if value == Some(0) {
            v.push(format!("params.{name}: must be positive"));
        }
    }
    if p.n_grid.contains(&0) {
        v.push("params.n_grid: entries must be positive");
    }
    for (name, value) in [("u", &p.u), ("v", &p.v)] {
        if let Some(obs) = value {
            if !observables.contains_key(obs) {
                v.push(format!("params.{name}: no observable named {obs:?}"));
            }
        }
    }
    let Some(experiment) = experiment else { return };
    let needs_grid = matches!(experiment, Experiment::Llt | Experiment::Mixing | Experiment::PropScan);
    if needs_grid && p.n_grid.is_empty() {
        v.push(format!("params.n_grid: required by {experiment}"));
    }
    if matches!(experiment, Experiment::Mixing | Experiment::PropScan) && p.u.is_none() {
        v.push(format!("params.u: required by {experiment}"));
    }
    if experiment == Experiment::PropScan && p.k.is_none() {
        v.push("params.k: required by prop-scan");
    }
    if experiment == Experiment::Tail && p.cap.is_none() {
        v.push("params.cap: required by tail");
    }
}

fn build_system(s: &SystemConfig, seed: u64) -> Result<(System, Derived), CliError> {
    let chain = match s {
        SystemConfig::Billiard {
            scatterers,
            corridor_directions,
            flight_samples,
        } => {
            let opts = ValidationOptions {
                n_dirs: *corridor_directions,
                n_rays: *flight_samples,
                seed,
            };
            let table = BilliardTable::validate(scatterers.clone(), &opts).map_err(CliError::Validation)?;
            let derived = Derived::Billiard {
                horizon_bound: table.horizon_bound(),
                max_psi: table.max_psi(),
                free_area: table.free_area(),
                total_perimeter: table.total_perimeter(),
            };
            return Ok((System::Billiard(table), derived));
        }
        SystemConfig::SimpleRandomWalk => Ok(MarkovExtension::simple_random_walk()),
        SystemConfig::LazyWalk { hold } => MarkovExtension::lazy_walk(*hold),
        SystemConfig::RandomChain { n_states, seed } => Ok(MarkovExtension::random(*n_states, *seed)),
        SystemConfig::Markov { states, dim } => MarkovExtension::from_spec(&MarkovSpec {
            states: states.clone(),
            dim: *dim,
        }),
    }
    .map_err(CliError::Validation)?;
    let derived = Derived::Markov {
        n_states: chain.n_states(),
        period: chain.period(),
        stationary: chain.stationary().to_vec(),
    };
    Ok((System::Markov(chain), derived))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn schema_errors(text: &str) -> Vec<String> {
        match parse(text, None) {
            Err(CliError::Schema(v)) => v,
            Err(e) => panic!("expected a schema error, got {e}"),
            Ok(_) => panic!("expected a schema error"),
        }
    }

    #[test]
    fn every_violation_is_listed() {
        let errs = schema_errors(
            r#"{"system": {"kind": "billiard", "scatterers": [{"center": [0, 0], "radius": 0.6}]},
                "experiment": "mixing", "colour": "red", "params": {"n_grid": [10], "bogus": 1}}"#,
        );
        let has = |s: &str| errs.iter().any(|e| e.contains(s));
        assert!(has("radius"), "{errs:?}");
        assert!(has("colour"), "{errs:?}");
        assert!(has("params.bogus"), "{errs:?}");
        assert!(has("params.seed"), "{errs:?}");
        assert!(has("params.u"), "{errs:?}");
    }

    #[test]
    fn subcommand_must_agree_with_file() {
        let text = r#"{"system": {"kind": "simple_random_walk"}, "experiment": "llt", "params": {"seed": 1, "n_grid": [4]}}"#;
        assert!(parse(text, Some(Experiment::Llt)).is_ok());
        assert!(matches!(parse(text, Some(Experiment::Tail)), Err(CliError::Schema(_))));
    }

    #[test]
    fn echo_omits_worker_hint() {
        let text = r#"{"system": {"kind": "lazy_walk", "hold": 0.5}, "experiment": "validate", "params": {"seed": 3, "workers": 4}}"#;
        let cfg = parse(text, None).unwrap();
        let echo = serde_json::to_value(&cfg).unwrap();
        assert!(echo["params"].get("workers").is_none());
        assert_eq!(echo["params"]["seed"], 3);
        assert_eq!(echo["derived"]["period"], 1);
    }

    #[test]
    fn overlapping_table_is_a_validation_error() {
        let text = r#"{"system": {"kind": "billiard", "scatterers": [{"center": [0, 0], "radius": 0.45}, {"center": [0.5, 0.5], "radius": 0.3}]},
                       "experiment": "validate", "params": {"seed": 1}}"#;
        assert!(matches!(parse(text, None), Err(CliError::Validation(_))));
    }
}
