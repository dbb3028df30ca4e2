//! On-disk formats: loops as JSON, trajectories as JSON lines plus a metadata
//! file, scalar series as CSV.
//!
//! Every float is written in scientific notation with 17 significant digits,
//! which round-trips `f64` exactly.

use std::fs::{self, File};
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use reeblab_core::{
    init, Ambient, Direction, DiscreteLoop, FlowConfig, Integrator, Model, ScalarSeries, ScalingRule, SigmaPoint,
    SymplPoint, Trajectory,
};
use serde::{Deserialize, Serialize};
use serde_json::ser::Formatter;

use crate::error::{LabError, Result};

/// JSON formatter writing floats as `{:.16e}`.
#[derive(Clone, Copy, Debug, Default)]
pub struct SciFormatter;

impl Formatter for SciFormatter {
    fn write_f64<W: ?Sized + Write>(&mut self, writer: &mut W, value: f64) -> io::Result<()> {
        write!(writer, "{value:.16e}")
    }
}

pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

/// Serializes compactly with [`SciFormatter`].
pub fn to_writer_sci<W: Write, T: Serialize + ?Sized>(writer: W, value: &T) -> Result<()> {
    let mut ser = serde_json::Serializer::with_formatter(writer, SciFormatter);
    value.serialize(&mut ser)?;
    Ok(())
}

pub fn to_string_sci<T: Serialize + ?Sized>(value: &T) -> Result<String> {
    let mut buf = Vec::new();
    to_writer_sci(&mut buf, value)?;
    Ok(String::from_utf8(buf).expect("serde_json emits UTF-8"))
}

/// Indented JSON with [`SciFormatter`] floats, for reports.
pub fn to_string_pretty_sci<T: Serialize + ?Sized>(value: &T) -> Result<String> {
    let mut out = Vec::new();
    let fmt = serde_json::ser::PrettyFormatter::with_indent(b"  ");
    let mut ser = serde_json::Serializer::with_formatter(&mut out, PrettySci(fmt));
    value.serialize(&mut ser)?;
    Ok(String::from_utf8(out).expect("serde_json emits UTF-8"))
}

struct PrettySci<'a>(serde_json::ser::PrettyFormatter<'a>);

macro_rules! forward {
    ($($name:ident($($arg:ident: $ty:ty),*);)*) => {
        $(fn $name<W: ?Sized + Write>(&mut self, w: &mut W $(, $arg: $ty)*) -> io::Result<()> {
            self.0.$name(w $(, $arg)*)
        })*
    };
}

impl Formatter for PrettySci<'_> {
    fn write_f64<W: ?Sized + Write>(&mut self, writer: &mut W, value: f64) -> io::Result<()> {
        write!(writer, "{value:.16e}")
    }

    forward! {
        begin_array();
        end_array();
        begin_array_value(first: bool);
        end_array_value();
        begin_object();
        end_object();
        begin_object_key(first: bool);
        begin_object_value();
        end_object_value();
    }
}

/// `{"model", "N", "r", "z"}` with `z` as `N` rows of ambient coordinates
/// (one for the circle, four for the sphere).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LoopRecord {
    pub model: String,
    #[serde(rename = "N")]
    pub n: usize,
    pub r: Vec<f64>,
    pub z: Vec<Vec<f64>>,
}

impl LoopRecord {
    pub fn from_loop(v: &DiscreteLoop) -> Self {
        let model = v.model();
        LoopRecord {
            model: model.id().to_string(),
            n: v.len(),
            r: v.r().collect(),
            z: v.points().iter().map(|p| p.z.coords().as_slice()[..model.dim()].to_vec()).collect(),
        }
    }

    pub fn to_loop(&self) -> Result<DiscreteLoop> {
        let model: Model = self.model.parse()?;
        if self.r.len() != self.n || self.z.len() != self.n {
            return Err(LabError::Format(format!(
                "loop declares N = {} but has {} r values and {} z rows",
                self.n,
                self.r.len(),
                self.z.len()
            )));
        }
        let mut points = Vec::with_capacity(self.n);
        for (k, (r, row)) in self.r.iter().zip(&self.z).enumerate() {
            if row.len() != model.dim() {
                return Err(LabError::Format(format!(
                    "z[{k}] has {} coordinates, model {} needs {}",
                    row.len(),
                    model,
                    model.dim()
                )));
            }
            let mut c = Ambient::zeros();
            c.as_mut_slice()[..row.len()].copy_from_slice(row);
            points.push(SymplPoint {
                r: *r,
                z: SigmaPoint::new_unchecked(c),
            });
        }
        Ok(DiscreteLoop::new(model, points)?)
    }
}

pub fn write_loop_json(path: &Path, v: &DiscreteLoop) -> Result<()> {
    let text = to_string_sci(&LoopRecord::from_loop(v))?;
    fs::write(path, text + "\n").map_err(LabError::io(path))
}

pub fn read_loop_json(path: &Path) -> Result<DiscreteLoop> {
    let text = fs::read_to_string(path).map_err(LabError::io(path))?;
    let rec: LoopRecord = serde_json::from_str(&text)?;
    rec.to_loop()
}

/// The rule as stored in metadata and accepted in configs.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum RuleSpec {
    Theta { theta: f64 },
    Rabinowitz { tau0: f64 },
    Area,
}

impl RuleSpec {
    pub fn to_rule(self) -> ScalingRule {
        match self {
            RuleSpec::Theta { theta } => ScalingRule::Theta(theta),
            RuleSpec::Rabinowitz { tau0 } => ScalingRule::RabinowitzMultiplier(tau0),
            RuleSpec::Area => ScalingRule::ConstrainedArea,
        }
    }

    pub fn from_rule(rule: ScalingRule) -> Self {
        match rule {
            ScalingRule::Theta(theta) => RuleSpec::Theta { theta },
            ScalingRule::RabinowitzMultiplier(tau0) => RuleSpec::Rabinowitz { tau0 },
            ScalingRule::ConstrainedArea => RuleSpec::Area,
        }
    }
}

pub fn integrator_name(i: Integrator) -> &'static str {
    match i {
        Integrator::Euler => "euler",
        Integrator::Rk4 => "rk4",
    }
}

pub fn parse_integrator(s: &str) -> Result<Integrator> {
    match s {
        "euler" => Ok(Integrator::Euler),
        "rk4" => Ok(Integrator::Rk4),
        other => Err(LabError::Config(format!("unknown integrator {other:?} (euler, rk4)"))),
    }
}

fn direction_name(d: Direction) -> &'static str {
    match d {
        Direction::Descent => "descent",
        Direction::Ascent => "ascent",
    }
}

fn parse_direction(s: &str) -> Result<Direction> {
    match s {
        "descent" => Ok(Direction::Descent),
        "ascent" => Ok(Direction::Ascent),
        other => Err(LabError::Format(format!("unknown direction {other:?}"))),
    }
}

/// Contents of `<stem>.meta.json`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrajectoryMeta {
    pub model: String,
    #[serde(rename = "N")]
    pub n: usize,
    pub rule: RuleSpec,
    pub integrator: String,
    pub ds: f64,
    pub max_steps: usize,
    pub grad_tol: f64,
    pub record_every: usize,
    pub reproject: bool,
    pub direction: String,
    pub slices: usize,
    pub converged: bool,
    pub generator: String,
    pub seed: Option<u64>,
}

impl TrajectoryMeta {
    pub fn new(traj: &Trajectory, seed: Option<u64>) -> Self {
        let c = &traj.config;
        let first = traj.loops.first();
        TrajectoryMeta {
            model: first.map_or("", |v| v.model().id()).to_string(),
            n: first.map_or(0, DiscreteLoop::len),
            rule: RuleSpec::from_rule(c.rule),
            integrator: integrator_name(c.integrator).to_string(),
            ds: c.ds,
            max_steps: c.max_steps,
            grad_tol: c.grad_tol,
            record_every: c.record_every,
            reproject: c.reproject,
            direction: direction_name(c.direction).to_string(),
            slices: traj.len(),
            converged: traj.converged,
            generator: init::GENERATOR_ID.to_string(),
            seed,
        }
    }

    pub fn flow_config(&self) -> Result<FlowConfig> {
        Ok(FlowConfig {
            rule: self.rule.to_rule(),
            ds: self.ds,
            max_steps: self.max_steps,
            grad_tol: self.grad_tol,
            integrator: parse_integrator(&self.integrator)?,
            record_every: self.record_every,
            reproject: self.reproject,
            direction: parse_direction(&self.direction)?,
        })
    }
}

/// The scaling factor of slice `i` when it does not depend on `t`: the
/// multiplier for `A₂`, `−A₃` for `A₃`, `ln∫eʳ` for the delay flow.
pub fn slice_tau(traj: &Trajectory, i: usize) -> Option<f64> {
    match traj.config.rule {
        ScalingRule::RabinowitzMultiplier(_) => traj.multiplier.as_ref().map(|m| m[i]),
        ScalingRule::ConstrainedArea => Some(-traj.actions[i]),
        ScalingRule::Theta(1.0) => Some(traj.loops[i].mean_exp_r().ln()),
        ScalingRule::Theta(_) => None,
    }
}

#[derive(Serialize)]
struct RecordOut<'a> {
    s: f64,
    action: f64,
    grad_norm: f64,
    tau: Option<f64>,
    dissipation: f64,
    #[serde(rename = "loop")]
    v: &'a LoopRecord,
}

#[derive(Deserialize)]
struct RecordIn {
    s: f64,
    tau: Option<f64>,
    #[serde(rename = "loop")]
    v: LoopRecord,
}

#[derive(Clone, Debug)]
pub struct TrajectoryFiles {
    pub jsonl: PathBuf,
    pub meta: PathBuf,
    pub csv: PathBuf,
}

/// `<dir>/<stem>.meta.json` next to `<dir>/<stem>.jsonl`.
pub fn meta_path(jsonl: &Path) -> PathBuf {
    let stem = jsonl.file_stem().and_then(|s| s.to_str()).unwrap_or("trajectory");
    jsonl.with_file_name(format!("{stem}.meta.json"))
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path).map_err(LabError::io(path))?))
}

/// Writes `<stem>.jsonl`, `<stem>.meta.json` and `<stem>.csv` into `dir`.
pub fn write_trajectory(dir: &Path, stem: &str, traj: &Trajectory, seed: Option<u64>) -> Result<TrajectoryFiles> {
    fs::create_dir_all(dir).map_err(LabError::io(dir))?;
    let files = TrajectoryFiles {
        jsonl: dir.join(format!("{stem}.jsonl")),
        meta: dir.join(format!("{stem}.meta.json")),
        csv: dir.join(format!("{stem}.csv")),
    };

    let mut w = create(&files.jsonl)?;
    for i in 0..traj.len() {
        let v = LoopRecord::from_loop(&traj.loops[i]);
        let rec = RecordOut {
            s: traj.s_values[i],
            action: traj.actions[i],
            grad_norm: traj.grad_norms[i],
            tau: slice_tau(traj, i),
            dissipation: traj.dissipation[i],
            v: &v,
        };
        to_writer_sci(&mut w, &rec)?;
        w.write_all(b"\n").map_err(LabError::io(&files.jsonl))?;
    }
    w.flush().map_err(LabError::io(&files.jsonl))?;

    let meta = to_string_pretty_sci(&TrajectoryMeta::new(traj, seed))?;
    fs::write(&files.meta, meta + "\n").map_err(LabError::io(&files.meta))?;

    write_trajectory_csv(&files.csv, traj)?;
    Ok(files)
}

pub fn write_trajectory_csv(path: &Path, traj: &Trajectory) -> Result<()> {
    let mut w = csv::Writer::from_writer(create(path)?);
    w.write_record(["s", "action", "grad_norm", "tau"])?;
    for i in 0..traj.len() {
        let tau = slice_tau(traj, i).map(fmt_f64).unwrap_or_default();
        w.write_record([fmt_f64(traj.s_values[i]), fmt_f64(traj.actions[i]), fmt_f64(traj.grad_norms[i]), tau])?;
    }
    w.flush().map_err(LabError::io(path))?;
    Ok(())
}

pub fn write_series_csv(path: &Path, series: &ScalarSeries) -> Result<()> {
    let mut w = csv::Writer::from_writer(create(path)?);
    w.write_record(["s", "value"])?;
    for (s, x) in series.s_values().iter().zip(series.values()) {
        w.write_record([fmt_f64(*s), fmt_f64(*x)])?;
    }
    w.flush().map_err(LabError::io(path))?;
    Ok(())
}

pub fn read_series_csv(path: &Path) -> Result<ScalarSeries> {
    let mut r = csv::Reader::from_path(path)?;
    let (mut s, mut x) = (Vec::new(), Vec::new());
    for row in r.deserialize() {
        let (a, b): (f64, f64) = row?;
        s.push(a);
        x.push(b);
    }
    Ok(ScalarSeries::new(s, x)?)
}

/// Reads a trajectory written by [`write_trajectory`]; actions, gradient
/// norms and dissipation are recomputed from the loops.
pub fn read_trajectory(jsonl: &Path) -> Result<(Trajectory, TrajectoryMeta)> {
    let mpath = meta_path(jsonl);
    let meta_text = fs::read_to_string(&mpath).map_err(LabError::io(&mpath))?;
    let meta: TrajectoryMeta = serde_json::from_str(&meta_text)?;
    let config = meta.flow_config()?;

    let file = File::open(jsonl).map_err(LabError::io(jsonl))?;
    let (mut s_values, mut loops, mut taus) = (Vec::new(), Vec::new(), Vec::new());
    for (lineno, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(LabError::io(jsonl))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: RecordIn = serde_json::from_str(&line)
            .map_err(|e| LabError::Format(format!("{}:{}: {e}", jsonl.display(), lineno + 1)))?;
        if rec.v.model != meta.model || rec.v.n != meta.n {
            return Err(LabError::Format(format!(
                "{}:{}: loop does not match metadata ({} N={})",
                jsonl.display(),
                lineno + 1,
                meta.model,
                meta.n
            )));
        }
        s_values.push(rec.s);
        loops.push(rec.v.to_loop()?);
        taus.push(rec.tau);
    }
    if loops.len() != meta.slices {
        return Err(LabError::Format(format!(
            "{} has {} slices, metadata says {}",
            jsonl.display(),
            loops.len(),
            meta.slices
        )));
    }
    let multiplier = match config.rule {
        ScalingRule::RabinowitzMultiplier(_) => Some(
            taus.into_iter()
                .collect::<Option<Vec<f64>>>()
                .ok_or_else(|| LabError::Format("Rabinowitz trajectory with a missing multiplier".into()))?,
        ),
        _ => None,
    };
    let mut traj = Trajectory::from_slices(config, s_values, loops, multiplier)?;
    traj.converged = meta.converged;
    Ok((traj, meta))
}
