//! Scenario files: one TOML document naming a kind, the robot configuration
//! and kind-specific parameters. Running one writes CSV/JSONL artifacts plus
//! `summary.json` into the output directory.
//!
//! ```toml
//! kind = "closed_loop"
//! config = "robot.toml"     # or an inline [robot] table
//! output = "runs/triangle"  # relative to this file
//!
//! [params]
//! tilt = "19 deg"
//! ```

use std::collections::BTreeSet;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::Deserialize;
use serde_json::{json, Value};

use crate::config::{config_from_table, load_config, parse_quantity, Dim, RobotConfig};
use crate::control::{
    run_closed_loop, triangle_trajectory, ClosedLoopOptions, RunLog, TrackingSummary, TriangleSpec,
};
use crate::environment::{indentation_sweep, safety_report, IndentationOptions};
use crate::error::{Result, SeeError};
use crate::mechanics::Vec3;
use crate::model::SeeModel;
use crate::session::{read_inbound_log, replay, InboundRecord, Session};
use crate::workspace::{coverage, force_deflection, map_workspace, Coverage};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScenarioKind {
    WorkspaceMap,
    ClosedLoop,
    OpenLoopTeleop,
    StiffnessSweep,
    IndentationSweep,
    SafetyReport,
}

impl ScenarioKind {
    pub fn name(self) -> &'static str {
        match self {
            ScenarioKind::WorkspaceMap => "workspace_map",
            ScenarioKind::ClosedLoop => "closed_loop",
            ScenarioKind::OpenLoopTeleop => "open_loop_teleop",
            ScenarioKind::StiffnessSweep => "stiffness_sweep",
            ScenarioKind::IndentationSweep => "indentation_sweep",
            ScenarioKind::SafetyReport => "safety_report",
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawScenario {
    kind: ScenarioKind,
    config: Option<String>,
    output: Option<String>,
    robot: Option<toml::Table>,
    #[serde(default)]
    params: toml::Table,
}

/// Parsed scenario ready to run.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub kind: ScenarioKind,
    pub config: RobotConfig,
    /// Output directory as written in the file, if any.
    pub output: Option<PathBuf>,
    pub params: toml::Table,
    /// Directory relative paths resolve against.
    pub base_dir: PathBuf,
    pub name: String,
}

pub fn load_scenario(path: impl AsRef<Path>) -> Result<Scenario> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| SeeError::io(path, e))?;
    let base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
    let name = path
        .file_stem()
        .map_or_else(|| "scenario".to_string(), |s| s.to_string_lossy().into_owned());
    parse_scenario(&text, &base_dir, &name).map_err(|e| e.context(path.display().to_string()))
}

pub fn parse_scenario(text: &str, base_dir: &Path, name: &str) -> Result<Scenario> {
    let raw: RawScenario = toml::from_str(text).map_err(|e| {
        let at = e.span().map(|s| format!(" at byte {}", s.start)).unwrap_or_default();
        SeeError::config("scenario", format!("{}{at}", e.message()))
    })?;
    let config = match (&raw.config, raw.robot) {
        (Some(_), Some(_)) => return Err(SeeError::config("config", "give either config or [robot], not both")),
        (Some(p), None) => load_config(base_dir.join(p))?,
        (None, Some(t)) => config_from_table(t).map_err(|e| e.context("robot"))?,
        (None, None) => RobotConfig::default(),
    };
    Ok(Scenario {
        kind: raw.kind,
        config,
        output: raw.output.map(PathBuf::from),
        params: raw.params,
        base_dir: base_dir.to_path_buf(),
        name: name.to_string(),
    })
}

impl Scenario {
    /// `output` from the file (relative to the file), else `<log_dir or file dir>/<name>`.
    pub fn output_dir(&self, log_dir: Option<&Path>) -> PathBuf {
        match &self.output {
            Some(p) if p.is_absolute() => p.clone(),
            Some(p) => self.base_dir.join(p),
            None => log_dir.unwrap_or(&self.base_dir).join(&self.name),
        }
    }
}

/// Artifacts of a finished run.
#[derive(Debug, Clone)]
pub struct ScenarioOutcome {
    pub output_dir: PathBuf,
    pub files: Vec<PathBuf>,
    pub summary: Value,
}

/// Typed access to `[params]` that rejects keys nobody read.
struct Params {
    table: toml::Table,
    used: BTreeSet<String>,
}

impl Params {
    fn new(table: toml::Table) -> Self {
        Params {
            table,
            used: BTreeSet::new(),
        }
    }

    fn take(&mut self, key: &str) -> Option<toml::Value> {
        self.used.insert(key.to_string());
        self.table.get(key).cloned()
    }

    fn quantity(&mut self, key: &str, dim: Dim, default: f64) -> Result<f64> {
        let path = format!("params.{key}");
        match self.take(key) {
            None => Ok(default),
            Some(toml::Value::String(s)) => parse_quantity(&s, dim, &path),
            Some(_) => Err(SeeError::config(path, "expected a quantity string such as \"5 mm\"")),
        }
    }

    fn quantities(&mut self, key: &str, dim: Dim, default: &[f64]) -> Result<Vec<f64>> {
        let path = format!("params.{key}");
        match self.take(key) {
            None => Ok(default.to_vec()),
            Some(toml::Value::Array(items)) => items
                .iter()
                .enumerate()
                .map(|(i, v)| match v {
                    toml::Value::String(s) => parse_quantity(s, dim, &format!("{path}[{i}]")),
                    _ => Err(SeeError::config(format!("{path}[{i}]"), "expected a quantity string")),
                })
                .collect(),
            Some(_) => Err(SeeError::config(path, "expected an array of quantity strings")),
        }
    }

    fn number(&mut self, key: &str, default: f64) -> Result<f64> {
        let path = format!("params.{key}");
        match self.take(key) {
            None => Ok(default),
            Some(toml::Value::Float(x)) => Ok(x),
            Some(toml::Value::Integer(x)) => Ok(x as f64),
            Some(_) => Err(SeeError::config(path, "expected a number")),
        }
    }

    fn numbers(&mut self, key: &str, default: &[f64]) -> Result<Vec<f64>> {
        let path = format!("params.{key}");
        match self.take(key) {
            None => Ok(default.to_vec()),
            Some(toml::Value::Array(items)) => items
                .iter()
                .enumerate()
                .map(|(i, v)| match v {
                    toml::Value::Float(x) => Ok(*x),
                    toml::Value::Integer(x) => Ok(*x as f64),
                    _ => Err(SeeError::config(format!("{path}[{i}]"), "expected a number")),
                })
                .collect(),
            Some(_) => Err(SeeError::config(path, "expected an array of numbers")),
        }
    }

    fn integer(&mut self, key: &str, default: u64) -> Result<u64> {
        let path = format!("params.{key}");
        match self.take(key) {
            None => Ok(default),
            Some(toml::Value::Integer(x)) if x >= 0 => Ok(x as u64),
            Some(_) => Err(SeeError::config(path, "expected a non-negative integer")),
        }
    }

    fn fraction(&mut self, key: &str, default: f64) -> Result<f64> {
        let x = self.number(key, default)?;
        if !(0.0..=1.0).contains(&x) {
            return Err(SeeError::config(format!("params.{key}"), "must lie in [0, 1]"));
        }
        Ok(x)
    }

    fn string(&mut self, key: &str) -> Result<Option<String>> {
        match self.take(key) {
            None => Ok(None),
            Some(toml::Value::String(s)) => Ok(Some(s)),
            Some(_) => Err(SeeError::config(format!("params.{key}"), "expected a string")),
        }
    }

    fn array(&mut self, key: &str) -> Result<Option<Vec<toml::Value>>> {
        match self.take(key) {
            None => Ok(None),
            Some(toml::Value::Array(a)) => Ok(Some(a)),
            Some(_) => Err(SeeError::config(format!("params.{key}"), "expected an array")),
        }
    }

    fn finish(&self, kind: ScenarioKind) -> Result<()> {
        if let Some(k) = self.table.keys().find(|k| !self.used.contains(*k)) {
            return Err(SeeError::config(
                format!("params.{k}"),
                format!("unknown parameter for {}", kind.name()),
            ));
        }
        Ok(())
    }
}

/// Closed-loop triangle run settings.
#[derive(Debug, Clone, PartialEq)]
pub struct ClosedLoopParams {
    /// `z0` is filled from `inflation` when left `None`.
    pub triangle: TriangleSpec,
    pub z0: Option<f64>,
    /// Operating point, fraction of `V_max` on every actuator.
    pub inflation: f64,
    pub settle_time: f64,
    pub hold_time: f64,
    pub noise_sigma: f64,
    pub seed: u64,
    pub repeats: usize,
}

impl ClosedLoopParams {
    pub fn from_config(config: &RobotConfig) -> Self {
        let d = ClosedLoopOptions::default();
        ClosedLoopParams {
            triangle: TriangleSpec::default(),
            z0: None,
            inflation: 0.5,
            settle_time: d.settle_time,
            hold_time: d.hold_time,
            noise_sigma: config.noise_sigma,
            seed: config.seed,
            repeats: 1,
        }
    }
}

/// Result of one closed-loop repetition.
#[derive(Debug, Clone)]
pub struct TriangleRun {
    pub log: RunLog,
    pub summary: TrackingSummary,
}

/// Tracks the triangle `repeats` times (seeds `seed`, `seed + 1`, ...).
///
/// Any configured environment is anchored at the first waypoint.
pub fn triangle_runs(config: &RobotConfig, p: &ClosedLoopParams) -> std::result::Result<Vec<TriangleRun>, (Vec<TriangleRun>, RunLog, SeeError)> {
    let model = SeeModel::new(config.geometry.clone()).map_err(|e| (vec![], RunLog::default(), e))?;
    let n = model.n();
    let v0 = vec![p.inflation * config.geometry.max_volume; n];
    let setup = || -> Result<_> {
        let start = model.state_at(&v0)?;
        let mut spec = p.triangle;
        spec.z0 = p.z0.unwrap_or(start.position.z);
        let trajectory = triangle_trajectory(&spec, config.control.target_rate)?;
        let env = config.build_environment(trajectory[0].position)?;
        Ok((trajectory, env))
    };
    let (trajectory, env) = setup().map_err(|e| (vec![], RunLog::default(), e))?;
    let mut runs = Vec::with_capacity(p.repeats);
    for r in 0..p.repeats {
        let opts = ClosedLoopOptions {
            initial_volumes: v0.clone(),
            settle_time: p.settle_time,
            hold_time: p.hold_time,
            noise_sigma: p.noise_sigma,
            seed: p.seed.wrapping_add(r as u64),
        };
        match run_closed_loop(&model, &config.control, &trajectory, env.as_deref(), &opts) {
            Ok(log) => match log.summary() {
                Ok(summary) => runs.push(TriangleRun { log, summary }),
                Err(e) => return Err((runs, log, e)),
            },
            Err(f) => return Err((runs, f.log, f.error.context(format!("repeat {r}")))),
        }
    }
    Ok(runs)
}

/// Constrained and vented tip stiffness at one uniform inflation.
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct StiffnessPoint {
    pub inflation: f64,
    /// Transversal stiffness with volumes held [N/m].
    pub transversal: f64,
    pub transversal_y: f64,
    /// Axial stiffness with volumes held; `None` where the direction is locked [N/m].
    pub axial: Option<f64>,
    /// Stiffness with the actuator volume constraint released (vented chambers) [N/m].
    pub axial_vented: f64,
    pub transversal_vented: f64,
}

pub fn stiffness_sweep(model: &SeeModel, levels: &[f64]) -> Result<Vec<StiffnessPoint>> {
    let mut out = Vec::with_capacity(levels.len());
    for &level in levels {
        if !(0.0..=1.0).contains(&level) {
            return Err(SeeError::invalid("levels", "must lie in [0, 1]"));
        }
        let state = model.state_at(&vec![level * model.geometry().max_volume; model.n()])?;
        let axial = match model.effective_tip_stiffness(&state, &Vec3::z()) {
            Ok(k) => Some(k),
            Err(SeeError::LockedDirection) => None,
            Err(e) => return Err(e),
        };
        out.push(StiffnessPoint {
            inflation: level,
            transversal: model.effective_tip_stiffness(&state, &Vec3::x())?,
            transversal_y: model.effective_tip_stiffness(&state, &Vec3::y())?,
            axial,
            axial_vented: model.unconstrained_tip_stiffness(&state, &Vec3::z())?,
            transversal_vented: model.unconstrained_tip_stiffness(&state, &Vec3::x())?,
        });
    }
    Ok(out)
}

fn is_non_increasing(x: &[f64]) -> bool {
    x.windows(2).all(|w| w[1] <= w[0])
}

fn coverage_json(c: &Coverage) -> Value {
    json!({
        "translation": c.translation,
        "orientation": c.orientation,
        "fraction": c.fraction(),
        "centre_mm": c.centre,
    })
}

fn tracking_json(s: &TrackingSummary) -> Value {
    json!({
        "samples": s.samples,
        "mean_abs_mm": s.mean,
        "std_abs_mm": s.std,
        "max_abs_mm": s.max,
        "euclidean_mean_mm": s.euclidean_mean,
        "euclidean_std_mm": s.euclidean_std,
        "euclidean_max_mm": s.euclidean_max,
    })
}

struct Output {
    dir: PathBuf,
    files: Vec<PathBuf>,
}

impl Output {
    fn new(dir: PathBuf) -> Result<Self> {
        std::fs::create_dir_all(&dir).map_err(|e| SeeError::io(&dir, e))?;
        Ok(Output { dir, files: Vec::new() })
    }

    fn write(&mut self, name: &str, f: impl FnOnce(&mut BufWriter<File>) -> Result<()>) -> Result<()> {
        let path = self.dir.join(name);
        let file = File::create(&path).map_err(|e| SeeError::io(&path, e))?;
        let mut w = BufWriter::new(file);
        f(&mut w)?;
        w.flush().map_err(|e| SeeError::io(&path, e))?;
        self.files.push(path);
        Ok(())
    }

    fn json(&mut self, name: &str, value: &Value) -> Result<()> {
        let text = serde_json::to_string_pretty(value).expect("serializable");
        self.write(name, |w| writeln!(w, "{text}").map_err(|e| SeeError::Format(e.to_string())))
    }
}

/// A run that failed after producing partial artifacts.
#[derive(Debug, thiserror::Error)]
#[error("{error}")]
pub struct ScenarioFailure {
    pub error: SeeError,
    /// Files written before the failure.
    pub files: Vec<PathBuf>,
}

impl From<SeeError> for ScenarioFailure {
    fn from(error: SeeError) -> Self {
        ScenarioFailure { error, files: vec![] }
    }
}

/// Runs a scenario and writes its artifacts into `output_dir`.
pub fn run_scenario(s: &Scenario, output_dir: &Path) -> std::result::Result<ScenarioOutcome, ScenarioFailure> {
    let mut params = Params::new(s.params.clone());
    let mut out = Output::new(output_dir.to_path_buf())?;
    let body = match s.kind {
        ScenarioKind::WorkspaceMap => workspace_map(s, &mut params, &mut out),
        ScenarioKind::ClosedLoop => closed_loop(s, &mut params, &mut out),
        ScenarioKind::OpenLoopTeleop => open_loop_teleop(s, &mut params, &mut out),
        ScenarioKind::StiffnessSweep => stiffness(s, &mut params, &mut out),
        ScenarioKind::IndentationSweep => indentation(s, &mut params, &mut out),
        ScenarioKind::SafetyReport => safety(s, &mut params, &mut out),
    };
    let body = match body {
        Ok(b) => b,
        Err(error) => {
            let diag = json!({"kind": s.kind.name(), "status": "failed", "error": error.to_string()});
            let _ = out.json("summary.json", &diag);
            return Err(ScenarioFailure { error, files: out.files });
        }
    };
    let mut summary = json!({"kind": s.kind.name(), "status": "ok"});
    summary["result"] = body;
    out.json("summary.json", &summary).map_err(ScenarioFailure::from)?;
    Ok(ScenarioOutcome {
        output_dir: out.dir,
        files: out.files,
        summary,
    })
}

/// Loads and runs a scenario file. `log_dir` is the fallback output base.
pub fn run_scenario_file(path: &Path, log_dir: Option<&Path>) -> std::result::Result<ScenarioOutcome, ScenarioFailure> {
    let s = load_scenario(path)?;
    let dir = s.output_dir(log_dir);
    run_scenario(&s, &dir)
}

fn workspace_map(s: &Scenario, p: &mut Params, out: &mut Output) -> Result<Value> {
    let increments = p.integer("increments", 10)? as usize;
    p.finish(s.kind)?;
    let model = SeeModel::new(s.config.geometry.clone())?;
    let cloud = map_workspace(&model, increments)?;
    out.write("workspace.csv", |w| cloud.write_csv(w))?;
    let ws = cloud.summary()?;
    let req = &s.config.requirement;
    let fd = force_deflection(&s.config.k_min, req)?;
    let unloaded = coverage(&cloud, req)?;
    let loaded = coverage(&cloud, &fd.adjusted)?;
    Ok(json!({
        "poses": cloud.len(),
        "max_extension_mm": ws.max_extension * 1e3,
        "max_deflection_mm": ws.max_deflection * 1e3,
        "max_tilt_deg": ws.max_tilt.to_degrees(),
        "max_twist_deg": ws.max_twist.to_degrees(),
        "force_deflection": {
            "axial_mm": fd.axial * 1e3,
            "transversal_mm": fd.transversal * 1e3,
            "adjusted_radial_mm": fd.adjusted.radial_translation * 1e3,
            "adjusted_axial_mm": fd.adjusted.axial_translation * 1e3,
        },
        "coverage_unloaded": coverage_json(&unloaded),
        "coverage_loaded": coverage_json(&loaded),
    }))
}

fn closed_loop(s: &Scenario, p: &mut Params, out: &mut Output) -> Result<Value> {
    let mut cl = ClosedLoopParams::from_config(&s.config);
    let d = cl.triangle;
    cl.triangle = TriangleSpec {
        base: p.quantity("base", Dim::Length, d.base)?,
        height: p.quantity("height", Dim::Length, d.height)?,
        tilt: p.quantity("tilt", Dim::Angle, d.tilt)?,
        speed: p.quantity("speed", Dim::Speed, d.speed)?,
        z0: 0.0,
    };
    if p.table.contains_key("z0") {
        cl.z0 = Some(p.quantity("z0", Dim::Length, 0.0)?);
    }
    cl.inflation = p.fraction("inflation", cl.inflation)?;
    cl.settle_time = p.quantity("settle_time", Dim::Time, cl.settle_time)?;
    cl.hold_time = p.quantity("hold_time", Dim::Time, cl.hold_time)?;
    cl.noise_sigma = p.quantity("noise", Dim::Length, cl.noise_sigma)?;
    cl.seed = p.integer("seed", cl.seed)?;
    cl.repeats = p.integer("repeats", 1)?.max(1) as usize;
    p.finish(s.kind)?;
    let name = |i: usize, n: usize| if n == 1 { "runlog.csv".to_string() } else { format!("runlog-{}.csv", i + 1) };
    let runs = match triangle_runs(&s.config, &cl) {
        Ok(runs) => runs,
        Err((done, partial, error)) => {
            let total = cl.repeats;
            for (i, r) in done.iter().enumerate() {
                out.write(&name(i, total), |w| r.log.write_csv(w))?;
            }
            if !partial.rows.is_empty() {
                out.write(&format!("partial-{}", name(done.len(), total)), |w| partial.write_csv(w))?;
            }
            return Err(error);
        }
    };
    for (i, r) in runs.iter().enumerate() {
        out.write(&name(i, runs.len()), |w| r.log.write_csv(w))?;
    }
    let means: Vec<f64> = runs.iter().map(|r| r.summary.euclidean_mean).collect();
    let m = means.iter().sum::<f64>() / means.len() as f64;
    let spread = if means.len() > 1 {
        (means.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (means.len() - 1) as f64).sqrt()
    } else {
        0.0
    };
    Ok(json!({
        "loaded": !matches!(s.config.environment, crate::config::EnvironmentConfig::None),
        "triangle": {
            "base_mm": cl.triangle.base * 1e3,
            "height_mm": cl.triangle.height * 1e3,
            "tilt_deg": cl.triangle.tilt.to_degrees(),
            "speed_mm_s": cl.triangle.speed * 1e3,
        },
        "noise_mm": cl.noise_sigma * 1e3,
        "runs": runs.iter().map(|r| tracking_json(&r.summary)).collect::<Vec<_>>(),
        "euclidean_mean_mm": m,
        "euclidean_mean_spread_mm": spread,
    }))
}

fn open_loop_teleop(s: &Scenario, p: &mut Params, out: &mut Output) -> Result<Value> {
    let inflation = p.fraction("inflation", 0.0)?;
    let log = p.string("inbound_log")?;
    let commands = p.array("commands")?;
    let duration = p.quantity("duration", Dim::Time, 5.0)?;
    p.finish(s.kind)?;
    let mut session = Session::new(&s.config, inflation)?;
    let dt = session.dt();
    let records = match (log, commands) {
        (Some(_), Some(_)) => {
            return Err(SeeError::config("params", "give either inbound_log or commands, not both"))
        }
        (Some(path), None) => read_inbound_log(&s.base_dir.join(path))?,
        (None, cmds) => {
            let mut recs = Vec::new();
            for (i, c) in cmds.unwrap_or_default().iter().enumerate() {
                let path = format!("params.commands[{i}]");
                let t = c
                    .as_table()
                    .ok_or_else(|| SeeError::config(&path, "expected a table"))?;
                let mut cp = Params::new(t.clone());
                let at = cp.quantity("at", Dim::Time, 0.0).map_err(|e| e.context(&path))?;
                let vz = cp.quantity("vz", Dim::Speed, 0.0).map_err(|e| e.context(&path))?;
                let wx = cp.quantity("wx", Dim::AngularRate, 0.0).map_err(|e| e.context(&path))?;
                let wy = cp.quantity("wy", Dim::AngularRate, 0.0).map_err(|e| e.context(&path))?;
                if let Some(k) = t.keys().find(|k| !cp.used.contains(*k)) {
                    return Err(SeeError::config(format!("{path}.{k}"), "unknown command field"));
                }
                let msg = serde_json::to_string(&json!({
                    "v": 1, "type": "joystick",
                    "vz": vz * 1e3, "wx": wx.to_degrees(), "wy": wy.to_degrees(), "t": at,
                }))
                .expect("serializable");
                recs.push(InboundRecord {
                    tick: (at / dt).round() as u64,
                    msg: Some(msg),
                    end: false,
                });
            }
            recs.sort_by_key(|r| r.tick);
            recs.push(InboundRecord {
                tick: (duration / dt).round() as u64,
                msg: None,
                end: true,
            });
            recs
        }
    };
    let frames = replay(&mut session, &records);
    out.write("frames.jsonl", |w| {
        frames
            .iter()
            .try_for_each(|f| writeln!(w, "{f}"))
            .map_err(|e| SeeError::Format(e.to_string()))
    })?;
    let errors = frames.iter().filter(|f| f.contains(r#""type":"error""#)).count();
    let last = session.state();
    let result = json!({
        "ticks": session.ticks(),
        "frames": frames.len(),
        "error_frames": errors,
        "final_position_mm": [last.position.x * 1e3, last.position.y * 1e3, last.position.z * 1e3],
        "final_volumes_ml": last.volumes.iter().map(|v| v * 1e6).collect::<Vec<_>>(),
    });
    if session.is_failed() {
        return Err(SeeError::Context {
            context: "teleop replay".into(),
            source: Box::new(SeeError::Format(frames.last().cloned().unwrap_or_default())),
        });
    }
    Ok(result)
}

fn stiffness(s: &Scenario, p: &mut Params, out: &mut Output) -> Result<Value> {
    let levels = p.numbers("levels", &[0.0, 0.25, 0.5, 0.75, 1.0])?;
    p.finish(s.kind)?;
    let model = SeeModel::new(s.config.geometry.clone())?;
    let points = stiffness_sweep(&model, &levels)?;
    out.write("stiffness.csv", |w| {
        let mut c = csv::Writer::from_writer(w);
        let err = |e: csv::Error| SeeError::Format(e.to_string());
        c.write_record(["inflation", "kx", "ky", "kz", "kz_vented", "kx_vented"]).map_err(err)?;
        for q in &points {
            c.write_record([
                q.inflation.to_string(),
                (q.transversal * 1e-3).to_string(),
                (q.transversal_y * 1e-3).to_string(),
                q.axial.map_or_else(|| "locked".to_string(), |k| (k * 1e-3).to_string()),
                (q.axial_vented * 1e-3).to_string(),
                (q.transversal_vented * 1e-3).to_string(),
            ])
            .map_err(err)?;
        }
        c.flush().map_err(|e| SeeError::Format(e.to_string()))
    })?;
    let kx: Vec<f64> = points.iter().map(|q| q.transversal).collect();
    let kzv: Vec<f64> = points.iter().map(|q| q.axial_vented).collect();
    let min = |x: &[f64]| x.iter().copied().fold(f64::INFINITY, f64::min);
    Ok(json!({
        "units": "N/mm",
        "levels": levels,
        "transversal": kx.iter().map(|k| k * 1e-3).collect::<Vec<_>>(),
        "axial": points.iter().map(|q| q.axial.map(|k| k * 1e-3)).collect::<Vec<_>>(),
        "axial_vented": kzv.iter().map(|k| k * 1e-3).collect::<Vec<_>>(),
        "transversal_min": min(&kx) * 1e-3,
        "axial_vented_min": min(&kzv) * 1e-3,
        "transversal_decreasing": is_non_increasing(&kx),
        "axial_vented_decreasing": is_non_increasing(&kzv),
        "axial_locked": points.iter().all(|q| q.axial.is_none()),
        "k_min_axial": s.config.k_min.axial * 1e-3,
        "k_min_transversal": s.config.k_min.transversal * 1e-3,
    }))
}

fn indentation(s: &Scenario, p: &mut Params, out: &mut Output) -> Result<Value> {
    let d = IndentationOptions::default();
    let opts = IndentationOptions {
        inflation: p.fraction("inflation", d.inflation)?,
        travel: p.quantity("travel", Dim::Length, d.travel)?,
        depths: p.quantities("depths", Dim::Length, &d.depths)?,
        calibration_target: p.number("calibration_target", d.calibration_target)?,
        steps: p.integer("steps", d.steps as u64)?.max(1) as usize,
    };
    p.finish(s.kind)?;
    let model = SeeModel::new(s.config.geometry.clone())?;
    let report = indentation_sweep(&model, &opts)?;
    out.write("indentation.csv", |w| {
        let mut c = csv::Writer::from_writer(w);
        let err = |e: csv::Error| SeeError::Format(e.to_string());
        c.write_record(["depth_mm", "spring_N_per_mm", "force_N", "displacement_pct", "tilt_pct"]).map_err(err)?;
        for q in &report.points {
            c.write_record([
                (q.depth * 1e3).to_string(),
                (q.spring * 1e-3).to_string(),
                q.lateral_force.to_string(),
                q.displacement_pct.to_string(),
                q.tilt_pct.to_string(),
            ])
            .map_err(err)?;
        }
        c.flush().map_err(|e| SeeError::Format(e.to_string()))
    })?;
    Ok(json!({
        "spring_per_depth_N_per_mm2": report.spring_per_depth * 1e-6,
        "displacement_slope_pct_per_N": report.displacement_slope,
        "tilt_slope_pct_per_N": report.tilt_slope,
        "displacement_attenuates_faster": report.displacement_slope > report.tilt_slope,
        "deepest_displacement_pct": report.points.last().map(|q| q.displacement_pct),
        "deepest_tilt_pct": report.points.last().map(|q| q.tilt_pct),
    }))
}

fn safety(s: &Scenario, p: &mut Params, out: &mut Output) -> Result<Value> {
    let c = &s.config;
    let displacement = p.quantity("displacement", Dim::Length, 10e-3)?;
    let see = p.quantity("see_stiffness", Dim::Stiffness, c.k_min.transversal)?;
    let k_vis = p.quantity("tissue_stiffness", Dim::Stiffness, c.printed_tissue_stiffness)?;
    p.finish(s.kind)?;
    let r = safety_report(&c.tissue, k_vis, see, displacement)?;
    let _ = out;
    Ok(json!({
        "displacement_mm": r.displacement * 1e3,
        "see_stiffness_N_per_mm": r.see_stiffness * 1e-3,
        "tissue_stiffness_N_per_mm": r.k_vis * 1e-3,
        "combined_stiffness_N_per_mm": r.k_comb * 1e-3,
        "rigid_force_N": r.rigid_force,
        "compliant_force_N": r.compliant_force,
        "tissue_stiffness_formula_N_per_mm": r.k_vis_formula * 1e-3,
        "combined_stiffness_formula_N_per_mm": r.k_comb_formula * 1e-3,
        "rigid_force_formula_N": r.rigid_force_formula,
        "compliant_force_formula_N": r.compliant_force_formula,
    }))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scenario(text: &str) -> Scenario {
        parse_scenario(text, Path::new("."), "t").unwrap()
    }

    #[test]
    fn unknown_parameter_is_rejected() {
        let s = scenario("kind = \"safety_report\"\n[params]\ndisplacment = \"10 mm\"\n");
        let dir = tempfile::tempdir().unwrap();
        let err = run_scenario(&s, dir.path()).unwrap_err();
        assert!(err.to_string().contains("params.displacment"), "{err}");
        assert!(err.error.is_input_error());
    }

    #[test]
    fn unknown_kind_is_rejected() {
        assert!(parse_scenario("kind = \"dance\"\n", Path::new("."), "t").is_err());
    }

    #[test]
    fn safety_report_values() {
        let s = scenario("kind = \"safety_report\"\n");
        let dir = tempfile::tempdir().unwrap();
        let o = run_scenario(&s, dir.path()).unwrap();
        let r = &o.summary["result"];
        assert!((r["rigid_force_N"].as_f64().unwrap() - 393.7).abs() < 1e-9);
        assert!((r["compliant_force_N"].as_f64().unwrap() - 14.54).abs() < 0.01);
    }

    #[test]
    fn output_dir_resolution() {
        let s = parse_scenario("kind = \"safety_report\"\n", Path::new("/a/b"), "x").unwrap();
        assert_eq!(s.output_dir(None), PathBuf::from("/a/b/x"));
        assert_eq!(s.output_dir(Some(Path::new("/logs"))), PathBuf::from("/logs/x"));
        let s = parse_scenario("kind = \"safety_report\"\noutput = \"o\"\n", Path::new("/a/b"), "x").unwrap();
        assert_eq!(s.output_dir(Some(Path::new("/logs"))), PathBuf::from("/a/b/o"));
    }

    #[test]
    fn scripted_teleop_moves_and_stops() {
        let s = scenario(
            "kind = \"open_loop_teleop\"\n[params]\nduration = \"2 s\"\ncommands = [{at = \"0 s\", vz = \"1 mm/s\"}]\n",
        );
        let dir = tempfile::tempdir().unwrap();
        let o = run_scenario(&s, dir.path()).unwrap();
        assert_eq!(o.summary["result"]["ticks"].as_u64(), Some(60));
        let text = std::fs::read_to_string(dir.path().join("frames.jsonl")).unwrap();
        assert_eq!(text.lines().count(), 60);
    }

    #[test]
    fn stiffness_sweep_reports_lock() {
        let s = scenario("kind = \"stiffness_sweep\"\n[params]\nlevels = [0.0, 1.0]\n");
        let dir = tempfile::tempdir().unwrap();
        let o = run_scenario(&s, dir.path()).unwrap();
        let r = &o.summary["result"];
        assert_eq!(r["axial_locked"], Value::Bool(true));
        assert_eq!(r["transversal_decreasing"], Value::Bool(true));
    }
}
