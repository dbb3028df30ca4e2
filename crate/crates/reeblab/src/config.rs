//! Experiment configuration.
//!
//! Files are either JSON or a flat `key = value` list:
//!
//! ```text
//! # comment
//! model = s3
//! N = 256
//! rule = theta
//! theta = 1.0
//! initial.kind = perturbed
//! initial.base_point = [1, 0, 0, 0]
//! tolerances.roundtrip = 1e-3
//! ```
//!
//! Dotted keys open nested tables. A value is read as JSON when it parses
//! (numbers, `true`/`false`, `[..]` lists, quoted strings) and as a bare
//! string otherwise. Keys are exactly the field names of [`ExperimentConfig`];
//! anything else is rejected.

use std::fs;
use std::path::{Path, PathBuf};

use reeblab_core::{init, Ambient, DiscreteLoop, FlowConfig, Model, ScalingRule};
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::error::{LabError, Result};
use crate::io::{parse_integrator, RuleSpec};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RuleKind {
    Theta,
    Rabinowitz,
    Area,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    Flow,
    Bijection,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitialKind {
    Constant,
    ReebOrbit,
    Perturbed,
}

/// Initial loop. `constant` uses `r0`, `reeb_orbit` uses `k` (period `2πk`,
/// at `r ≡ 2πk`), `perturbed` perturbs whichever of the two `base` names.
/// Without `base_point` a point is drawn from the seed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct InitialConfig {
    pub kind: InitialKind,
    pub base: InitialKind,
    pub r0: f64,
    pub k: i64,
    pub base_point: Option<Vec<f64>>,
    pub modes: usize,
    pub amplitude: f64,
    /// Shift `r` so that a delay flow starts with `∂_sτ = 0` (delay rule only).
    pub balance_tau: bool,
}

impl Default for InitialConfig {
    fn default() -> Self {
        InitialConfig {
            kind: InitialKind::Perturbed,
            base: InitialKind::Constant,
            r0: 0.0,
            k: 0,
            base_point: None,
            modes: 2,
            amplitude: 0.05,
            balance_tau: true,
        }
    }
}

/// Pass thresholds for `verify` and `bijection`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Tolerances {
    pub der: f64,
    pub laplacian: f64,
    pub rab2: f64,
    pub roundtrip: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            der: 1e-3,
            laplacian: 1e-2,
            rab2: 1e-3,
            roundtrip: 1e-3,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub model: String,
    #[serde(rename = "N")]
    pub n: usize,
    pub rule: RuleKind,
    pub theta: f64,
    pub tau0: f64,
    pub integrator: String,
    pub ds: f64,
    pub grad_tol: f64,
    pub max_steps: usize,
    pub record_every: usize,
    pub seed: u64,
    pub initial: InitialConfig,
    pub output_dir: PathBuf,
    pub task: Task,
    pub tolerances: Tolerances,
}

/// A short delay-flow window from a balanced perturbation of the rest loop.
/// Forward flows of `t`-dependent data are ill-posed, so long windows diverge.
impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            model: "s3".into(),
            n: 256,
            rule: RuleKind::Theta,
            theta: 1.0,
            tau0: 0.0,
            integrator: "rk4".into(),
            ds: 1e-3,
            grad_tol: 1e-8,
            max_steps: 50,
            record_every: 1,
            seed: 0,
            initial: InitialConfig::default(),
            output_dir: PathBuf::from("out"),
            task: Task::Flow,
            tolerances: Tolerances::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn model(&self) -> Result<Model> {
        Ok(self.model.parse()?)
    }

    pub fn rule_spec(&self) -> RuleSpec {
        match self.rule {
            RuleKind::Theta => RuleSpec::Theta { theta: self.theta },
            RuleKind::Rabinowitz => RuleSpec::Rabinowitz { tau0: self.tau0 },
            RuleKind::Area => RuleSpec::Area,
        }
    }

    pub fn flow_config(&self) -> Result<FlowConfig> {
        let mut c = FlowConfig::new(self.rule_spec().to_rule());
        c.ds = self.ds;
        c.grad_tol = self.grad_tol;
        c.max_steps = self.max_steps;
        c.record_every = self.record_every;
        c.integrator = parse_integrator(&self.integrator)?;
        Ok(c)
    }

    /// Checks everything that can be checked without running a flow.
    pub fn validate(&self) -> Result<()> {
        let model = self.model()?;
        if self.n < 8 || !self.n.is_multiple_of(2) {
            return Err(LabError::Config(format!("N must be even and >= 8, got {}", self.n)));
        }
        self.flow_config()?.validate().map_err(|e| LabError::Config(e.to_string()))?;
        let ic = &self.initial;
        if ic.base == InitialKind::Perturbed {
            return Err(LabError::Config("initial.base must be constant or reeb_orbit".into()));
        }
        if let Some(p) = &ic.base_point {
            if p.len() != model.dim() {
                return Err(LabError::Config(format!(
                    "initial.base_point has {} coordinates, model {model} needs {}",
                    p.len(),
                    model.dim()
                )));
            }
        }
        if ic.amplitude.is_nan() || ic.amplitude < 0.0 {
            return Err(LabError::Config(format!("initial.amplitude must be >= 0, got {}", ic.amplitude)));
        }
        if ic.modes > self.n / 8 {
            return Err(LabError::Config(format!("initial.modes must be <= N/8 = {}", self.n / 8)));
        }
        let t = self.tolerances;
        for (name, x) in [("der", t.der), ("laplacian", t.laplacian), ("rab2", t.rab2), ("roundtrip", t.roundtrip)] {
            if x.is_nan() || x < 0.0 {
                return Err(LabError::Config(format!("tolerances.{name} must be >= 0, got {x}")));
            }
        }
        Ok(())
    }

    fn base_point(&self, model: Model) -> Ambient {
        match &self.initial.base_point {
            Some(p) => {
                let mut c = Ambient::zeros();
                c.as_mut_slice()[..p.len()].copy_from_slice(p);
                c
            }
            None => *model.random_point(&mut init::rng(self.seed)).coords(),
        }
    }

    /// The initial loop; projected onto `∫eʳ = 1` for the `area` rule.
    pub fn initial_loop(&self) -> Result<DiscreteLoop> {
        let model = self.model()?;
        let ic = &self.initial;
        let base_point = self.base_point(model);
        let build = |kind| -> Result<DiscreteLoop> {
            Ok(match kind {
                InitialKind::ReebOrbit => init::reeb_orbit(model, self.n, ic.k, &base_point)?,
                _ => init::constant_loop(model, self.n, ic.r0, &base_point)?,
            })
        };
        let mut v = match ic.kind {
            InitialKind::Perturbed => init::perturbed(&build(ic.base)?, ic.modes, ic.amplitude, self.seed)?,
            kind => build(kind)?,
        };
        if ic.balance_tau && ic.kind == InitialKind::Perturbed && self.is_delay() {
            v = init::balance_tau(&v);
        }
        if self.rule == RuleKind::Area {
            v = v.project_pi();
        }
        Ok(v)
    }

    /// Whether the rule is `A_θ` with `θ = 1`.
    pub fn is_delay(&self) -> bool {
        matches!(self.rule_spec().to_rule(), ScalingRule::Theta(t) if t == 1.0)
    }
}

/// Parses the flat `key = value` grammar into a JSON tree.
pub fn parse_flat(text: &str) -> Result<Value> {
    let mut root = Map::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let err = |msg: String| LabError::Config(format!("line {}: {msg}", lineno + 1));
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| err(format!("expected `key = value`, got {line:?}")))?;
        let key = key.trim();
        let value = value.trim();
        if key.is_empty() || key.split('.').any(str::is_empty) {
            return Err(err(format!("malformed key {key:?}")));
        }
        let parsed = serde_json::from_str::<Value>(value).unwrap_or_else(|_| Value::String(value.to_string()));

        let mut parts: Vec<&str> = key.split('.').collect();
        let leaf = parts.pop().expect("split yields at least one part");
        let mut table = &mut root;
        for p in parts {
            let slot = table.entry(p.to_string()).or_insert_with(|| Value::Object(Map::new()));
            table = slot.as_object_mut().ok_or_else(|| err(format!("{p:?} is both a value and a table")))?;
        }
        if table.contains_key(leaf) {
            return Err(err(format!("duplicate key {key:?}")));
        }
        table.insert(leaf.to_string(), parsed);
    }
    Ok(Value::Object(root))
}

/// Parses JSON when the text starts with `{`, the flat grammar otherwise,
/// and validates the result.
pub fn parse_config(text: &str) -> Result<ExperimentConfig> {
    let tree = if text.trim_start().starts_with('{') {
        serde_json::from_str(text)?
    } else {
        parse_flat(text)?
    };
    let cfg: ExperimentConfig = serde_json::from_value(tree).map_err(|e| LabError::Config(e.to_string()))?;
    cfg.validate()?;
    Ok(cfg)
}

pub fn load_config(path: &Path) -> Result<ExperimentConfig> {
    let text = fs::read_to_string(path).map_err(LabError::io(path))?;
    parse_config(&text).map_err(|e| match e {
        LabError::Config(msg) => LabError::Config(format!("{}: {msg}", path.display())),
        other => other,
    })
}
