//! Runners behind the subcommands. Each returns an [`Outcome`]: a JSON
//! report and the process exit code.

use std::fs;
use std::path::{Path, PathBuf};

use reeblab_core::correspondence::{
    gradrab2_residual, lift_shift, pushforward_pi, roundtrip_check, shift_ode_residual, verify_der, verify_laplacian,
    verify_lemma2,
};
use reeblab_core::{integrate, Error as CoreError, Model, ScalingRule, Trajectory};
use serde::Serialize;
use serde_json::{json, Value};

use crate::config::{ExperimentConfig, Task, Tolerances};
use crate::error::{LabError, Result};
use crate::io::{self, TrajectoryFiles};

pub const EXIT_OK: i32 = 0;
/// A check ran and failed.
pub const EXIT_FAIL: i32 = 1;
/// Bad input: unknown model, unparseable file, wrong rule for the check.
pub const EXIT_USAGE: i32 = 2;
/// The flow diverged; the partial trajectory was written.
pub const EXIT_DIVERGED: i32 = 3;

/// Samples used by `validate`.
pub const VALIDATION_SAMPLES: usize = 10_000;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Outcome {
    pub exit_code: i32,
    pub report: Value,
}

impl Outcome {
    fn new(exit_code: i32, report: Value) -> Self {
        Outcome { exit_code, report }
    }

    pub fn passed(&self) -> bool {
        self.exit_code == EXIT_OK
    }
}

/// Exit code for an error that escaped a runner.
pub fn error_code(e: &LabError) -> i32 {
    match e {
        LabError::Core(CoreError::Divergence { .. }) => EXIT_DIVERGED,
        LabError::Core(CoreError::WrongRule { .. } | CoreError::UnknownModel(_)) => EXIT_USAGE,
        LabError::Core(_) => EXIT_FAIL,
        LabError::Io { .. } | LabError::Json(_) | LabError::Csv(_) | LabError::Config(_) | LabError::Format(_) => {
            EXIT_USAGE
        }
    }
}

/// Folds an error into an outcome carrying its message.
pub fn from_error(e: &LabError) -> Outcome {
    Outcome::new(error_code(e), json!({ "error": e.to_string() }))
}

fn write_report(dir: &Path, report: &Value) -> Result<PathBuf> {
    let path = dir.join("report.json");
    fs::write(&path, io::to_string_pretty_sci(report)? + "\n").map_err(LabError::io(&path))?;
    Ok(path)
}

pub fn run_validate(model_id: &str) -> Outcome {
    let model: Model = match model_id.parse() {
        Ok(m) => m,
        Err(e) => return from_error(&LabError::Core(e)),
    };
    let r = model.validate(VALIDATION_SAMPLES, 0);
    let passed = r.passed();
    log::info!("validate {model}: passed = {passed}");
    let report = json!({
        "model": model.id(),
        "samples": r.samples,
        "max_lambda_reeb_residual": r.max_lambda_reeb_residual,
        "max_dlambda_reeb": r.max_dlambda_reeb,
        "max_j_squared_residual": r.max_j_squared_residual,
        "min_compatibility": r.min_compatibility,
        "passed": passed,
    });
    Outcome::new(if passed { EXIT_OK } else { EXIT_FAIL }, report)
}

/// Integrates, keeping the partial trajectory on divergence.
fn flow(cfg: &ExperimentConfig) -> Result<(Trajectory, Option<String>)> {
    let v0 = cfg.initial_loop()?;
    let fc = cfg.flow_config()?;
    log::info!(
        "integrating {} N={} rule={:?} ds={} max_steps={}",
        cfg.model,
        cfg.n,
        fc.rule,
        fc.ds,
        fc.max_steps
    );
    match integrate(&v0, &fc) {
        Ok(t) => Ok((t, None)),
        Err(CoreError::Divergence { s, halvings, partial }) => {
            let msg = format!("flow diverged at s = {s} after {halvings} consecutive step halvings");
            log::warn!("{msg}");
            Ok((*partial, Some(msg)))
        }
        Err(e) => Err(e.into()),
    }
}

fn files_json(f: &TrajectoryFiles) -> Value {
    json!({
        "jsonl": f.jsonl.display().to_string(),
        "meta": f.meta.display().to_string(),
        "csv": f.csv.display().to_string(),
    })
}

fn summary(traj: &Trajectory) -> Value {
    let last = traj.len() - 1;
    json!({
        "slices": traj.len(),
        "steps": ((traj.s_values[last] - traj.s_values[0]) / traj.config.ds).round() as u64,
        "s_final": traj.s_values[last],
        "initial_action": traj.actions[0],
        "final_action": traj.actions[last],
        "final_grad_norm": traj.grad_norms[last],
        "converged": traj.converged,
    })
}

/// `flow`: writes `trajectory.{jsonl,meta.json,csv}`, `initial.json` and
/// `report.json` into `out`.
pub fn run_flow(cfg: &ExperimentConfig, out: &Path) -> Result<Outcome> {
    fs::create_dir_all(out).map_err(LabError::io(out))?;
    io::write_loop_json(&out.join("initial.json"), &cfg.initial_loop()?)?;
    let (traj, diverged) = flow(cfg)?;
    let files = io::write_trajectory(out, "trajectory", &traj, Some(cfg.seed))?;
    let mut report = summary(&traj);
    report["files"] = files_json(&files);
    report["diverged"] = json!(diverged);
    write_report(out, &report)?;
    let code = if diverged.is_some() { EXIT_DIVERGED } else { EXIT_OK };
    Ok(Outcome::new(code, report))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Check {
    Der,
    Lemma2,
    Laplacian,
    Rab2,
    Roundtrip,
}

impl Check {
    pub fn name(self) -> &'static str {
        match self {
            Check::Der => "der",
            Check::Lemma2 => "lemma2",
            Check::Laplacian => "laplacian",
            Check::Rab2 => "rab2",
            Check::Roundtrip => "roundtrip",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        [Check::Der, Check::Lemma2, Check::Laplacian, Check::Rab2, Check::Roundtrip]
            .into_iter()
            .find(|c| c.name() == s)
    }

    fn accepts(self, rule: ScalingRule) -> bool {
        match self {
            Check::Der | Check::Lemma2 | Check::Laplacian => rule.is_delay(),
            Check::Rab2 => rule == ScalingRule::ConstrainedArea,
            Check::Roundtrip => rule.is_delay() || rule == ScalingRule::ConstrainedArea,
        }
    }

    fn expected(self) -> &'static str {
        match self {
            Check::Der | Check::Lemma2 | Check::Laplacian => "a theta = 1 trajectory",
            Check::Rab2 => "an area trajectory",
            Check::Roundtrip => "a theta = 1 or area trajectory",
        }
    }
}

/// `verify`: runs one correspondence check on a trajectory file.
pub fn run_verify(path: &Path, check: Check, tol: &Tolerances) -> Outcome {
    let traj = match io::read_trajectory(path) {
        Ok((t, _)) => t,
        Err(e) => return from_error(&e),
    };
    let rule = traj.rule();
    if !check.accepts(rule) {
        return Outcome::new(
            EXIT_USAGE,
            json!({
                "which": check.name(),
                "error": format!("{} needs {}, file has rule {:?}", check.name(), check.expected(), rule),
            }),
        );
    }
    let result = (|| -> reeblab_core::Result<(bool, Value)> {
        Ok(match check {
            Check::Der => {
                let residual = verify_der(&traj)?;
                (residual <= tol.der, json!({ "der_residual_max": residual, "tolerance": tol.der }))
            }
            Check::Lemma2 => {
                let r = verify_lemma2(&traj)?;
                let report = json!({
                    "min_dtau": r.min_dtau,
                    "strict_bound_ok": r.strict_bound_ok,
                    "window_bound": r.window_bound,
                    "window_bound_ok": r.window_bound_ok,
                    "der_residual_max": r.der_residual_max,
                });
                (r.strict_bound_ok, report)
            }
            Check::Laplacian => {
                let min = verify_laplacian(&traj)?;
                let bound = -1.0 - tol.laplacian;
                (min >= bound, json!({ "min_laplacian": min, "bound": bound }))
            }
            Check::Rab2 => {
                let residual = gradrab2_residual(&traj)?;
                (residual <= tol.rab2, json!({ "gradrab2_residual": residual, "tolerance": tol.rab2 }))
            }
            Check::Roundtrip => {
                let d = roundtrip_check(&traj)?;
                (d <= tol.roundtrip, json!({ "roundtrip_distance": d, "tolerance": tol.roundtrip }))
            }
        })
    })();
    match result {
        Ok((passed, mut report)) => {
            report["which"] = json!(check.name());
            report["passed"] = json!(passed);
            log::info!("verify {}: passed = {passed}", check.name());
            Outcome::new(if passed { EXIT_OK } else { EXIT_FAIL }, report)
        }
        Err(e) => {
            // Off-constraint input and too-short windows are failed checks, not usage errors.
            let code = match e {
                CoreError::WrongRule { .. } => EXIT_USAGE,
                _ => EXIT_FAIL,
            };
            Outcome::new(code, json!({ "which": check.name(), "error": e.to_string(), "passed": false }))
        }
    }
}

/// `bijection`: `A₁` flow, `Π_*`, the `A₃` residual, the lift `R` and both
/// roundtrips. Writes `a1.*`, `a3.*`, `shift.csv` and `report.json`.
pub fn run_bijection(cfg: &ExperimentConfig, out: &Path) -> Result<Outcome> {
    if !cfg.is_delay() {
        return Err(LabError::Config("bijection needs rule = theta with theta = 1".into()));
    }
    fs::create_dir_all(out).map_err(LabError::io(out))?;
    let (traj, diverged) = flow(cfg)?;
    let a1 = io::write_trajectory(out, "a1", &traj, Some(cfg.seed))?;
    if let Some(msg) = diverged {
        let report = json!({ "diverged": msg, "files": { "a1": files_json(&a1) }, "passed": false });
        write_report(out, &report)?;
        return Ok(Outcome::new(EXIT_DIVERGED, report));
    }

    let pushed = pushforward_pi(&traj)?;
    let a3 = io::write_trajectory(out, "a3", &pushed, Some(cfg.seed))?;
    let rab2 = gradrab2_residual(&pushed)?;
    let rho = lift_shift(&pushed)?;
    io::write_series_csv(&out.join("shift.csv"), &rho)?;
    let shift_residual = shift_ode_residual(&rho, &pushed);
    let lift_after_push = roundtrip_check(&traj)?;
    let push_after_lift = roundtrip_check(&pushed)?;
    let der = verify_der(&traj)?;

    let tol = cfg.tolerances;
    let passed = rab2 <= tol.rab2 && lift_after_push <= tol.roundtrip && push_after_lift <= tol.roundtrip;
    log::info!("bijection: rab2 = {rab2:e}, R∘Π_* = {lift_after_push:e}, Π_*∘R = {push_after_lift:e}");
    let mut report = summary(&traj);
    report["gradrab2_residual"] = json!(rab2);
    report["roundtrip_lift_after_push"] = json!(lift_after_push);
    report["roundtrip_push_after_lift"] = json!(push_after_lift);
    report["shift_ode_residual"] = json!(shift_residual);
    report["der_residual_max"] = json!(der);
    report["tolerances"] = json!({ "rab2": tol.rab2, "roundtrip": tol.roundtrip });
    report["files"] = json!({
        "a1": files_json(&a1),
        "a3": files_json(&a3),
        "shift": out.join("shift.csv").display().to_string(),
    });
    report["passed"] = json!(passed);
    write_report(out, &report)?;
    Ok(Outcome::new(if passed { EXIT_OK } else { EXIT_FAIL }, report))
}

/// Runs the config's task into `out`, folding errors into the outcome.
pub fn run_experiment(cfg: &ExperimentConfig, out: &Path) -> Outcome {
    let result = match cfg.task {
        Task::Flow => run_flow(cfg, out),
        Task::Bijection => run_bijection(cfg, out),
    };
    result.unwrap_or_else(|e| from_error(&e))
}
