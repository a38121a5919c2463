//! Actuation maps and controllers.
//!
//! The position loop integrates pump rates: each control step injects
//! `ΔV = J_tᵀ (k_P e + k_I ∫e dt) · dt`, where `J_t` holds the translational
//! rows of `J_V`.

use std::io::{Read, Write};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Result, SeeError};
use crate::mechanics::{Vec3, Vec6, Wrench};
use crate::model::{Environment, SeeModel, SeeState};
use crate::workspace::csv_error;

/// Length-volume fit of one actuator, `ΔL = slope·V + intercept` above the
/// linear-region onset. Volumes are total syringe volumes.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct ActuatorFit {
    /// [m/m³]
    pub slope: f64,
    /// [m]
    pub intercept: f64,
    /// [m³]
    pub linear_region_start: f64,
    /// [m²]
    pub channel_area: f64,
}

impl Default for ActuatorFit {
    fn default() -> Self {
        ActuatorFit {
            slope: 6.61e-3 / 1e-6,
            intercept: -5.52e-3,
            linear_region_start: 1.25e-6,
            channel_area: std::f64::consts::PI * 6.9e-3 * 6.9e-3,
        }
    }
}

impl ActuatorFit {
    pub fn validate(&self) -> Result<()> {
        if !(self.slope > 0.0) || !self.slope.is_finite() {
            return Err(SeeError::invalid("actuator.slope", "must be positive"));
        }
        if !self.intercept.is_finite() {
            return Err(SeeError::invalid("actuator.intercept", "must be finite"));
        }
        if !(self.linear_region_start >= 0.0) {
            return Err(SeeError::invalid("actuator.linear_region_start", "must be non-negative"));
        }
        if !(self.channel_area > 0.0) {
            return Err(SeeError::invalid("actuator.channel_area", "must be positive"));
        }
        Ok(())
    }

    /// Slope implied by an ideal channel, `1/a` [m/m³].
    pub fn ideal_slope(&self) -> f64 {
        1.0 / self.channel_area
    }
}

/// Length change for a total syringe volume `v`; clamped to the onset value below the linear region.
pub fn volume_extension(fit: &ActuatorFit, v: f64) -> Result<f64> {
    if v < 0.0 {
        return Err(SeeError::NegativeVolume(v));
    }
    if !v.is_finite() {
        return Err(SeeError::NonFinite("volume"));
    }
    Ok(fit.slope * v.max(fit.linear_region_start) + fit.intercept)
}

/// Position-loop settings (SI units).
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct ControlConfig {
    /// [m³/m]
    pub k_p: f64,
    /// [m³/(m·s)]
    pub k_i: f64,
    /// Target update rate [Hz].
    pub target_rate: f64,
    /// Controller and model update rate [Hz].
    pub control_rate: f64,
    /// Largest pump rate [m³/s].
    pub pump_rate_limit: f64,
    /// Allowed injected volume range [m³].
    pub volume_limits: (f64, f64),
    /// Bound on the error integral norm [m·s].
    pub integral_limit: f64,
}

impl Default for ControlConfig {
    fn default() -> Self {
        ControlConfig {
            k_p: 0.3e-6 / 1e-3,
            k_i: 0.03e-6 / 1e-3,
            target_rate: 2.0,
            control_rate: 30.0,
            pump_rate_limit: 0.5e-6,
            volume_limits: (0.0, 3.75e-6),
            integral_limit: 5e-3,
        }
    }
}

impl ControlConfig {
    pub fn validate(&self) -> Result<()> {
        let nonneg = [("control.k_p", self.k_p), ("control.k_i", self.k_i)];
        for (name, v) in nonneg {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(SeeError::invalid(name, "must be finite and non-negative"));
            }
        }
        let pos = [
            ("control.target_rate", self.target_rate),
            ("control.control_rate", self.control_rate),
            ("control.pump_rate_limit", self.pump_rate_limit),
            ("control.integral_limit", self.integral_limit),
        ];
        for (name, v) in pos {
            if !(v > 0.0) || !v.is_finite() {
                return Err(SeeError::invalid(name, "must be positive"));
            }
        }
        let (lo, hi) = self.volume_limits;
        if !(lo >= 0.0 && hi > lo) {
            return Err(SeeError::invalid("control.volume_limits", "need 0 <= min < max"));
        }
        Ok(())
    }

    pub fn dt(&self) -> f64 {
        1.0 / self.control_rate
    }
}

/// Open-loop pump rates with the saturation flag.
#[derive(Debug, Clone, PartialEq)]
pub struct PumpRates {
    /// [m³/s]
    pub rates: Vec<f64>,
    /// True when the command was scaled down to the pump limit.
    pub saturated: bool,
}

/// `V̇ = a·J_Vᵀ v_cart`, uniformly scaled so no pump exceeds `limit`.
///
/// `v_cart` is `[linear velocity; angular velocity]` at the tip.
pub fn open_loop_rates(model: &SeeModel, state: &SeeState, v_cart: &Vec6, limit: f64) -> PumpRates {
    let a = model.channel_area();
    let raw = model.jacobian_v(state).transpose() * v_cart * a;
    let mut rates: Vec<f64> = raw.iter().copied().collect();
    let (scale, saturated) = saturation_scale(&rates, limit);
    rates.iter_mut().for_each(|r| *r *= scale);
    PumpRates { rates, saturated }
}

fn saturation_scale(values: &[f64], limit: f64) -> (f64, bool) {
    let peak = values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if peak > limit {
        (limit / peak, true)
    } else {
        (1.0, false)
    }
}

/// One PI update.
#[derive(Debug, Clone, PartialEq)]
pub struct PiOutput {
    /// Volume change to inject this step [m³].
    pub dv: Vec<f64>,
    /// Error integral after the update [m·s].
    pub integral: Vec3,
    /// Per-pump saturation (rate or volume limit).
    pub saturated: Vec<bool>,
}

/// PI position law with conditional integration.
///
/// The integral is advanced by `error·dt` unless the resulting command would
/// saturate any pump, and its norm is clamped to `integral_limit`.
pub fn pi_step(
    error: &Vec3,
    integral: &Vec3,
    cfg: &ControlConfig,
    model: &SeeModel,
    state: &SeeState,
    dt: f64,
) -> PiOutput {
    let jt = model.jacobian_v(state).fixed_rows::<3>(0).transpose();
    let command = |integral: &Vec3| -> (Vec<f64>, Vec<bool>) {
        let u = cfg.k_p * error + cfg.k_i * integral;
        let raw: Vec<f64> = (&jt * u * dt).iter().copied().collect();
        let (scale, rate_sat) = saturation_scale(&raw, cfg.pump_rate_limit * dt);
        let (lo, hi) = cfg.volume_limits;
        let mut dv = Vec::with_capacity(raw.len());
        let mut sat = Vec::with_capacity(raw.len());
        for (i, r) in raw.iter().enumerate() {
            let v = state.volumes[i];
            let wanted = v + r * scale;
            let target = wanted.clamp(lo, hi);
            sat.push(rate_sat || target != wanted);
            dv.push(target - v);
        }
        (dv, sat)
    };
    let mut candidate = integral + error * dt;
    let norm = candidate.norm();
    if norm > cfg.integral_limit {
        candidate *= cfg.integral_limit / norm;
    }
    let (dv, saturated) = command(&candidate);
    if saturated.iter().any(|s| *s) {
        let (dv, saturated) = command(integral);
        return PiOutput {
            dv,
            integral: *integral,
            saturated,
        };
    }
    PiOutput {
        dv,
        integral: candidate,
        saturated,
    }
}

/// Timed target position.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Waypoint {
    /// [s]
    pub t: f64,
    /// [m]
    pub position: Vec3,
}

/// Isosceles triangle path; tilted variants rotate the plane about the base edge.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct TriangleSpec {
    /// [m]
    pub base: f64,
    /// [m]
    pub height: f64,
    /// Rotation of the triangle plane about its base [rad].
    pub tilt: f64,
    /// Traversal speed along the perimeter [m/s].
    pub speed: f64,
    /// Height of the base edge [m].
    pub z0: f64,
}

impl Default for TriangleSpec {
    fn default() -> Self {
        TriangleSpec {
            base: 12.33e-3,
            height: 10e-3,
            tilt: 0.0,
            speed: 0.5e-3,
            z0: 0.0,
        }
    }
}

impl TriangleSpec {
    pub fn vertices(&self) -> [Vec3; 3] {
        let (s, c) = self.tilt.sin_cos();
        let lift = |x: f64, y: f64| Vec3::new(x, y * c, self.z0 + y * s);
        [
            lift(-0.5 * self.base, 0.0),
            lift(0.5 * self.base, 0.0),
            lift(0.0, self.height),
        ]
    }

    pub fn perimeter(&self) -> f64 {
        self.base + 2.0 * (0.25 * self.base * self.base + self.height * self.height).sqrt()
    }
}

/// Waypoints around the triangle at `rate`, closing at the first vertex.
///
/// Each edge is split into equal pieces no longer than `speed / rate`, so
/// every vertex is a waypoint.
pub fn triangle_trajectory(spec: &TriangleSpec, rate: f64) -> Result<Vec<Waypoint>> {
    for (name, v) in [
        ("triangle.base", spec.base),
        ("triangle.height", spec.height),
        ("triangle.speed", spec.speed),
        ("rate", rate),
    ] {
        if !(v > 0.0) || !v.is_finite() {
            return Err(SeeError::invalid(name, "must be positive"));
        }
    }
    let v = spec.vertices();
    let max_step = spec.speed / rate;
    let mut points = vec![v[0]];
    for e in 0..3 {
        let (a, b) = (v[e], v[(e + 1) % 3]);
        let pieces = ((b - a).norm() / max_step).ceil().max(1.0) as usize;
        for k in 1..=pieces {
            points.push(a + (b - a) * (k as f64 / pieces as f64));
        }
    }
    Ok(points
        .into_iter()
        .enumerate()
        .map(|(k, position)| Waypoint {
            t: k as f64 / rate,
            position,
        })
        .collect())
}

/// Piecewise-constant target held until the next waypoint.
pub fn target_at(trajectory: &[Waypoint], t: f64) -> Option<Vec3> {
    let idx = trajectory.partition_point(|w| w.t <= t);
    if idx == 0 {
        trajectory.first().map(|w| w.position)
    } else {
        Some(trajectory[idx - 1].position)
    }
}

/// Closed-loop run settings beyond the controller gains.
#[derive(Debug, Clone, PartialEq)]
pub struct ClosedLoopOptions {
    /// Volumes the run starts from [m³].
    pub initial_volumes: Vec<f64>,
    /// Unlogged convergence onto the first waypoint [s].
    pub settle_time: f64,
    /// Logged hold after the last waypoint [s].
    pub hold_time: f64,
    /// Per-axis measurement noise [m].
    pub noise_sigma: f64,
    pub seed: u64,
}

impl Default for ClosedLoopOptions {
    fn default() -> Self {
        ClosedLoopOptions {
            initial_volumes: vec![0.5 * 3.75e-6; 3],
            settle_time: 20.0,
            hold_time: 2.0,
            noise_sigma: 0.0,
            seed: 0,
        }
    }
}

/// One control-step record (SI units).
#[derive(Debug, Clone, PartialEq)]
pub struct LogRow {
    pub t: f64,
    pub target: Vec3,
    pub measured: Vec3,
    pub position: Vec3,
    pub volumes: Vec<f64>,
    /// Volume change commanded in this step [m³].
    pub control: Vec<f64>,
    /// Environment force on the tip [N].
    pub force: Vec3,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct RunLog {
    pub rows: Vec<LogRow>,
}

/// Closed-loop run that stopped on a solver error.
#[derive(Debug, thiserror::Error)]
#[error("closed-loop run aborted after {} rows: {error}", log.rows.len())]
pub struct ClosedLoopFailure {
    pub log: RunLog,
    #[source]
    pub error: SeeError,
}

const CSV_HEADER: [&str; 16] = [
    "t", "x_d", "y_d", "z_d", "x_m", "y_m", "z_m", "x", "y", "z", "V1", "V2", "V3", "Fx", "Fy", "Fz",
];

impl RunLog {
    /// Rows converted to CSV units: s, mm, ml, N.
    fn display_rows(&self) -> Vec<Vec<f64>> {
        self.rows
            .iter()
            .map(|r| {
                let mut row = vec![r.t];
                for p in [&r.target, &r.measured, &r.position] {
                    row.extend(p.iter().map(|x| x * 1e3));
                }
                row.extend(r.volumes.iter().map(|v| v * 1e6));
                row.extend(r.force.iter().copied());
                row
            })
            .collect()
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let n = self.rows.first().map_or(3, |r| r.volumes.len());
        let mut w = csv::Writer::from_writer(out);
        w.write_record(header(n)).map_err(csv_error)?;
        for row in self.display_rows() {
            w.write_record(row.iter().map(|x| x.to_string())).map_err(csv_error)?;
        }
        w.flush().map_err(|e| SeeError::Format(e.to_string()))?;
        Ok(())
    }

    /// Tracking statistics against the held target.
    pub fn summary(&self) -> Result<TrackingSummary> {
        summarize(&self.display_rows())
    }
}

fn header(n: usize) -> Vec<String> {
    let mut h: Vec<String> = CSV_HEADER[..10].iter().map(|s| s.to_string()).collect();
    h.extend((1..=n).map(|i| format!("V{i}")));
    h.extend(["Fx", "Fy", "Fz"].map(String::from));
    h
}

/// Reads a RunLog CSV back and recomputes its summary.
pub fn summarize_csv<R: Read>(input: R) -> Result<TrackingSummary> {
    let mut r = csv::Reader::from_reader(input);
    let head = r.headers().map_err(csv_error)?.clone();
    let cols: Vec<&str> = head.iter().collect();
    if cols.len() < 14 || cols[..10] != CSV_HEADER[..10] || cols[cols.len() - 3..] != CSV_HEADER[13..] {
        return Err(SeeError::Format(format!("unexpected RunLog header: {}", cols.join(","))));
    }
    let mut rows = Vec::new();
    for (line, rec) in r.records().enumerate() {
        let rec = rec.map_err(csv_error)?;
        let row = rec
            .iter()
            .map(|f| f.trim().parse::<f64>())
            .collect::<std::result::Result<Vec<f64>, _>>()
            .map_err(|e| SeeError::Format(format!("row {}: {e}", line + 2)))?;
        rows.push(row);
    }
    summarize(&rows)
}

/// Per-axis and Euclidean tracking errors in mm.
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct TrackingSummary {
    pub samples: usize,
    /// Mean absolute error per axis [mm].
    pub mean: [f64; 3],
    pub std: [f64; 3],
    pub max: [f64; 3],
    /// Euclidean error statistics [mm].
    pub euclidean_mean: f64,
    pub euclidean_std: f64,
    pub euclidean_max: f64,
}

fn summarize(rows: &[Vec<f64>]) -> Result<TrackingSummary> {
    if rows.is_empty() {
        return Err(SeeError::Format("run log has no rows".into()));
    }
    let m = rows.len() as f64;
    let mut axis: [Vec<f64>; 3] = Default::default();
    let mut euclid = Vec::with_capacity(rows.len());
    for r in rows {
        let e = [r[1] - r[7], r[2] - r[8], r[3] - r[9]];
        for k in 0..3 {
            axis[k].push(e[k].abs());
        }
        euclid.push((e[0] * e[0] + e[1] * e[1] + e[2] * e[2]).sqrt());
    }
    let stats = |x: &[f64]| -> (f64, f64, f64) {
        let mean = x.iter().sum::<f64>() / m;
        let var = x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / m;
        (mean, var.sqrt(), x.iter().fold(0.0f64, |a, b| a.max(*b)))
    };
    let mut out = TrackingSummary {
        samples: rows.len(),
        mean: [0.0; 3],
        std: [0.0; 3],
        max: [0.0; 3],
        euclidean_mean: 0.0,
        euclidean_std: 0.0,
        euclidean_max: 0.0,
    };
    for k in 0..3 {
        (out.mean[k], out.std[k], out.max[k]) = stats(&axis[k]);
    }
    (out.euclidean_mean, out.euclidean_std, out.euclidean_max) = stats(&euclid);
    Ok(out)
}

/// Closed-loop position control against the quasi-static plant.
///
/// Starts from `initial_volumes`, converges onto the first waypoint for
/// `settle_time` without logging, then tracks the zero-order-held targets and
/// logs every control step.
pub fn run_closed_loop(
    model: &SeeModel,
    cfg: &ControlConfig,
    trajectory: &[Waypoint],
    env: Option<&dyn Environment>,
    opts: &ClosedLoopOptions,
) -> std::result::Result<RunLog, ClosedLoopFailure> {
    let mut log = RunLog::default();
    let fail = |log: RunLog, error: SeeError| ClosedLoopFailure { log, error };
    if let Err(e) = cfg.validate() {
        return Err(fail(log, e));
    }
    if trajectory.is_empty() {
        return Err(fail(log, SeeError::invalid("trajectory", "no waypoints")));
    }
    if !(opts.noise_sigma >= 0.0) {
        return Err(fail(log, SeeError::invalid("noise_sigma", "must be non-negative")));
    }
    let noise = Normal::new(0.0, opts.noise_sigma).expect("valid sigma");
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut state = match model.state_at(&opts.initial_volumes) {
        Ok(s) => s,
        Err(e) => return Err(fail(log, e.context("initial volumes"))),
    };
    let dt = cfg.dt();
    let mut integral = Vec3::zeros();
    let settle_steps = (opts.settle_time / dt).round() as usize;
    let end = trajectory.last().map_or(0.0, |w| w.t) + opts.hold_time;
    let run_steps = (end / dt).floor() as usize + 1;
    for k in 0..settle_steps + run_steps {
        let logging = k >= settle_steps;
        let t = if logging { (k - settle_steps) as f64 * dt } else { 0.0 };
        let target = target_at(trajectory, t).expect("non-empty");
        let measured = if opts.noise_sigma > 0.0 {
            state.position + Vec3::from_fn(|_, _| noise.sample(&mut rng))
        } else {
            state.position
        };
        let out = pi_step(&(target - measured), &integral, cfg, model, &state, dt);
        integral = out.integral;
        if let Err(e) = model.advance(&mut state, &out.dv, &Wrench::zero(), env, 1, &mut |_| {}) {
            return Err(fail(log, e.context(format!("control step {k}"))));
        }
        if logging {
            let force = env.map_or(Vec3::zeros(), |e| e.wrench(&state).force);
            log.rows.push(LogRow {
                t,
                target,
                measured,
                position: state.position,
                volumes: state.volumes.clone(),
                control: out.dv,
                force,
            });
        }
    }
    Ok(log)
}

/// Steps the plant with open-loop rates for a Cartesian velocity command.
pub fn apply_open_loop(
    model: &SeeModel,
    state: &mut SeeState,
    v_cart: &Vec6,
    cfg: &ControlConfig,
    dt: f64,
    env: Option<&dyn Environment>,
) -> Result<OpenLoopStep> {
    let rates = open_loop_rates(model, state, v_cart, cfg.pump_rate_limit);
    let (lo, hi) = cfg.volume_limits;
    let mut saturated = vec![rates.saturated; rates.rates.len()];
    let dv: Vec<f64> = rates
        .rates
        .iter()
        .enumerate()
        .map(|(i, r)| {
            let v = state.volumes[i];
            let target = (v + r * dt).clamp(lo, hi);
            if target != v + r * dt {
                saturated[i] = true;
            }
            target - v
        })
        .collect();
    model.advance(state, &dv, &Wrench::zero(), env, 1, &mut |_| {})?;
    Ok(OpenLoopStep { dv, saturated })
}

#[derive(Debug, Clone, PartialEq)]
pub struct OpenLoopStep {
    pub dv: Vec<f64>,
    pub saturated: Vec<bool>,
}
