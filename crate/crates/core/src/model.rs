//! Incremental kinetostatic model of the three-actuator end-effector.
//!
//! Each increment solves the saddle-point system
//!
//! ```text
//! [ K     J_V ] [ δx_tip ]   [ Δw_ext ]
//! [ J_Vᵀ  0   ] [ Δτ_V   ] = [ ΔV / a ]
//! ```
//!
//! where `K = Σ J_θⁱ K_θⁱ J_θⁱᵀ` is the lumped actuator stiffness at the tip and
//! the columns of `J_V` are the axial wrench directions of the actuators.
//! Tip displacement and wrenches are expressed at the probe tip with axes
//! aligned to the base frame.

use nalgebra::{DMatrix, DVector, Matrix6xX};

use crate::error::{Result, SeeError};
use crate::mechanics::{
    block_rotation, rot_y, rot_z, rotation_log, rotation_update, timoshenko_stiffness,
    wrench_adjoint, FramePlacement, Mat3, Mat6, SfaParams, SmallDisplacement, Vec3, Vec6, Wrench,
};

/// Condition estimate above which an augmented system is declared singular.
pub const SINGULARITY_THRESHOLD: f64 = 1e12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TiltDirection {
    /// Actuator axes lean towards the probe axis from base to platform.
    #[default]
    Inward,
    Outward,
}

/// Platform layout of the parallel mechanism (SI units).
#[derive(Debug, Clone, PartialEq)]
pub struct SeeGeometry {
    pub n_sfa: usize,
    /// Radius of the actuator base centres around the probe axis [m].
    pub placement_radius: f64,
    /// Angular pitch between actuators [rad].
    pub angular_spacing: f64,
    /// Actuator tilt from the probe axis [rad].
    pub tilt_angle: f64,
    pub tilt_direction: TiltDirection,
    /// Distance from the distal attachment plane to the probe tip along the probe axis [m].
    pub tip_offset: f64,
    /// Injectable volume per actuator above the pre-fill [m³].
    pub max_volume: f64,
    pub sfa: SfaParams,
}

impl Default for SeeGeometry {
    fn default() -> Self {
        SeeGeometry {
            n_sfa: 3,
            placement_radius: 25e-3,
            angular_spacing: 2.0 * std::f64::consts::PI / 3.0,
            tilt_angle: 15f64.to_radians(),
            tilt_direction: TiltDirection::Inward,
            tip_offset: DEFAULT_TIP_OFFSET,
            max_volume: 3.75e-6,
            sfa: SfaParams::default(),
        }
    }
}

/// Default probe-tip offset above the distal attachment plane [m].
pub const DEFAULT_TIP_OFFSET: f64 = 40e-3;

impl SeeGeometry {
    pub fn validate(&self) -> Result<()> {
        if self.n_sfa < 3 {
            return Err(SeeError::invalid("n_sfa", "at least three actuators are required"));
        }
        if !(self.placement_radius > 0.0) {
            return Err(SeeError::invalid("placement_radius", "must be positive"));
        }
        if !(self.angular_spacing > 0.0) {
            return Err(SeeError::invalid("angular_spacing", "must be positive"));
        }
        if !(0.0..std::f64::consts::FRAC_PI_2).contains(&self.tilt_angle) {
            return Err(SeeError::invalid("tilt_angle", "must lie in [0, 90) deg"));
        }
        if !self.tip_offset.is_finite() {
            return Err(SeeError::invalid("tip_offset", "must be finite"));
        }
        if !(self.max_volume > 0.0) {
            return Err(SeeError::invalid("max_volume", "must be positive"));
        }
        self.sfa.validate()
    }

    fn azimuth(&self, i: usize) -> f64 {
        i as f64 * self.angular_spacing
    }

    /// Orientation of actuator `i`: z along its axis, x in the radial plane.
    fn sfa_rotation(&self, i: usize) -> Mat3 {
        let lean = match self.tilt_direction {
            TiltDirection::Inward => -self.tilt_angle,
            TiltDirection::Outward => self.tilt_angle,
        };
        rot_z(self.azimuth(i)) * rot_y(lean)
    }
}

/// Distal actuator frames relative to the tip frame in the pre-filled state.
pub fn build_sfa_frames(g: &SeeGeometry) -> Vec<FramePlacement> {
    let l0 = g.sfa.length;
    let distal: Vec<(Mat3, Vec3)> = (0..g.n_sfa)
        .map(|i| {
            let phi = g.azimuth(i);
            let base = Vec3::new(g.placement_radius * phi.cos(), g.placement_radius * phi.sin(), 0.0);
            let rot = g.sfa_rotation(i);
            (rot, base + l0 * rot.column(2))
        })
        .collect();
    let platform_height = l0 * g.tilt_angle.cos();
    let tip = Vec3::new(0.0, 0.0, platform_height + g.tip_offset);
    distal
        .into_iter()
        .map(|(rot, p)| FramePlacement::new(rot, p - tip))
        .collect()
}

/// Quasi-static state of the mechanism.
#[derive(Debug, Clone, PartialEq)]
pub struct SeeState {
    /// Injected volume above the pre-fill per actuator [m³].
    pub volumes: Vec<f64>,
    /// Tip position relative to the pre-filled state [m].
    pub position: Vec3,
    /// Tip orientation relative to the pre-filled state.
    pub rotation: Mat3,
    /// Axial constraint reactions [N].
    pub tau_v: DVector<f64>,
    /// External wrench currently in equilibrium at the tip (applied + environment).
    pub wrench: Wrench,
    /// Cumulative wrench applied by the load schedule, excluding environment loads.
    pub applied: Wrench,
}

impl SeeState {
    pub fn deflated(n: usize) -> Self {
        SeeState {
            volumes: vec![0.0; n],
            position: Vec3::zeros(),
            rotation: Mat3::identity(),
            tau_v: DVector::zeros(n),
            wrench: Wrench::zero(),
            applied: Wrench::zero(),
        }
    }

    /// Rotation vector of the tip orientation [rad].
    pub fn tilt(&self) -> Vec3 {
        rotation_log(&self.rotation)
    }

    pub fn is_finite(&self) -> bool {
        self.position.iter().all(|x| x.is_finite())
            && self.rotation.iter().all(|x| x.is_finite())
            && self.tau_v.iter().all(|x| x.is_finite())
            && self.volumes.iter().all(|x| x.is_finite())
    }
}

/// Saddle-point matrix of one increment.
#[derive(Debug, Clone)]
pub struct AugmentedSystem {
    pub matrix: DMatrix<f64>,
    pub n: usize,
}

/// Stacks `[[K, J_V], [J_Vᵀ, 0]]`.
pub fn assemble_augmented(k: &Mat6, jv: &Matrix6xX<f64>) -> AugmentedSystem {
    let n = jv.ncols();
    let mut m = DMatrix::zeros(6 + n, 6 + n);
    m.view_mut((0, 0), (6, 6)).copy_from(k);
    m.view_mut((0, 6), (6, n)).copy_from(jv);
    m.view_mut((6, 0), (n, 6)).copy_from(&jv.transpose());
    AugmentedSystem { matrix: m, n }
}

/// Dense LU solution of a square system with symmetric equilibration,
/// a 1-norm condition estimate and one step of iterative refinement.
#[derive(Debug, Clone)]
pub struct DenseSolve {
    pub solution: DVector<f64>,
    pub condition: f64,
    pub relative_residual: f64,
}

pub fn solve_dense(m: &DMatrix<f64>, rhs: &DVector<f64>) -> Result<DenseSolve> {
    if !m.iter().chain(rhs.iter()).all(|x| x.is_finite()) {
        return Err(SeeError::NonFinite("linear system"));
    }
    let dim = m.nrows();
    let scale = DVector::from_iterator(
        dim,
        m.row_iter().map(|row| {
            let peak = row.amax();
            if peak > 0.0 {
                1.0 / peak.sqrt()
            } else {
                1.0
            }
        }),
    );
    let scaled = DMatrix::from_fn(dim, dim, |i, j| scale[i] * m[(i, j)] * scale[j]);
    let lu = scaled.clone().lu();
    let inverse = lu
        .try_inverse()
        .ok_or(SeeError::Singular { condition: f64::INFINITY })?;
    let condition = norm1(&scaled) * norm1(&inverse);
    if !condition.is_finite() || condition > SINGULARITY_THRESHOLD {
        return Err(SeeError::Singular { condition });
    }
    let solve_scaled = |b: &DVector<f64>| -> DVector<f64> {
        let sb = b.component_mul(&scale);
        let y = lu.solve(&sb).unwrap_or_else(|| &inverse * &sb);
        y.component_mul(&scale)
    };
    let mut x = solve_scaled(rhs);
    let r = rhs - m * &x;
    x += solve_scaled(&r);
    let r = rhs - m * &x;
    let denom = rhs.norm().max(f64::MIN_POSITIVE);
    let relative_residual = if rhs.norm() == 0.0 { r.norm() } else { r.norm() / denom };
    Ok(DenseSolve {
        solution: x,
        condition,
        relative_residual,
    })
}

fn norm1(m: &DMatrix<f64>) -> f64 {
    m.column_iter()
        .map(|c| c.iter().map(|x| x.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// Result of one kinetostatic increment.
#[derive(Debug, Clone)]
pub struct IncrementSolution {
    pub displacement: SmallDisplacement,
    pub reaction: DVector<f64>,
    pub condition: f64,
    pub relative_residual: f64,
}

/// Solves one increment for an external wrench change and actuator volume changes.
pub fn solve_increment(
    sys: &AugmentedSystem,
    dw: &Wrench,
    dv: &[f64],
    channel_area: f64,
) -> Result<IncrementSolution> {
    if dv.len() != sys.n {
        return Err(SeeError::invalid(
            "dv",
            format!("expected {} volume increments, got {}", sys.n, dv.len()),
        ));
    }
    if !dw.is_finite() || !dv.iter().all(|x| x.is_finite()) {
        return Err(SeeError::NonFinite("increment input"));
    }
    let mut rhs = DVector::zeros(6 + sys.n);
    rhs.rows_mut(0, 6).copy_from(&dw.to_vector());
    for (i, v) in dv.iter().enumerate() {
        rhs[6 + i] = v / channel_area;
    }
    let solved = solve_dense(&sys.matrix, &rhs)?;
    let dx = Vec6::from_iterator(solved.solution.rows(0, 6).iter().copied());
    Ok(IncrementSolution {
        displacement: SmallDisplacement::from_vector(&dx),
        reaction: solved.solution.rows(6, sys.n).into_owned(),
        condition: solved.condition,
        relative_residual: solved.relative_residual,
    })
}

/// Load model acting on the tip, evaluated at a state.
pub trait Environment: Send + Sync {
    /// Wrench applied by the environment to the tip.
    fn wrench(&self, state: &SeeState) -> Wrench;
    /// Tangent stiffness `-∂w/∂x` of the environment at `state`.
    fn stiffness(&self, state: &SeeState) -> Mat6;
}

/// Sub-stepping limits for the incremental solver.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepPolicy {
    /// Largest per-actuator volume change in one increment [m³].
    pub max_volume_step: f64,
    /// Largest tip rotation in one increment [rad].
    pub max_rotation_step: f64,
}

impl Default for StepPolicy {
    fn default() -> Self {
        StepPolicy {
            max_volume_step: 1e-8,
            max_rotation_step: 0.01,
        }
    }
}

/// Diagnostics of one applied increment.
#[derive(Debug, Clone)]
pub struct StepReport {
    pub displacement: SmallDisplacement,
    pub reaction: DVector<f64>,
    /// External wrench change equilibrated by the step (applied + environment).
    pub external: Wrench,
    /// Applied (scheduled) wrench change of the step.
    pub applied: Wrench,
    /// Volume change of the step [m³].
    pub dv: Vec<f64>,
    pub relative_residual: f64,
    pub condition: f64,
}

/// The mechanism with its constant frame data.
#[derive(Debug, Clone)]
pub struct SeeModel {
    geometry: SeeGeometry,
    frames: Vec<FramePlacement>,
    adjoints: Vec<Mat6>,
    policy: StepPolicy,
}

impl SeeModel {
    pub fn new(geometry: SeeGeometry) -> Result<Self> {
        geometry.validate()?;
        let frames = build_sfa_frames(&geometry);
        let adjoints = frames.iter().map(wrench_adjoint).collect();
        Ok(SeeModel {
            geometry,
            frames,
            adjoints,
            policy: StepPolicy::default(),
        })
    }

    pub fn with_policy(mut self, policy: StepPolicy) -> Self {
        self.policy = policy;
        self
    }

    pub fn geometry(&self) -> &SeeGeometry {
        &self.geometry
    }

    pub fn policy(&self) -> StepPolicy {
        self.policy
    }

    pub fn n(&self) -> usize {
        self.geometry.n_sfa
    }

    pub fn channel_area(&self) -> f64 {
        self.geometry.sfa.channel_area
    }

    /// Frames relative to the tip in the pre-filled state.
    pub fn frames(&self) -> &[FramePlacement] {
        &self.frames
    }

    pub fn deflated_state(&self) -> SeeState {
        SeeState::deflated(self.n())
    }

    /// Current actuator frames in the base frame.
    pub fn sfa_frames(&self, state: &SeeState) -> Vec<FramePlacement> {
        let tip = FramePlacement::new(state.rotation, state.position);
        self.frames.iter().map(|f| tip.compose(f)).collect()
    }

    /// Current actuator lengths: pre-fill length plus injected volume over channel area.
    pub fn sfa_lengths(&self, state: &SeeState) -> Vec<f64> {
        let g = &self.geometry;
        state
            .volumes
            .iter()
            .map(|v| g.sfa.length + v / g.sfa.channel_area)
            .collect()
    }

    pub fn jacobian_theta(&self, state: &SeeState, i: usize) -> Mat6 {
        block_rotation(&state.rotation) * self.adjoints[i]
    }

    pub fn jacobian_v(&self, state: &SeeState) -> Matrix6xX<f64> {
        let rot = block_rotation(&state.rotation);
        let mut jv = Matrix6xX::zeros(self.n());
        for (i, ad) in self.adjoints.iter().enumerate() {
            jv.set_column(i, &(rot * ad.column(2)));
        }
        jv
    }

    pub fn lumped_stiffness(&self, state: &SeeState) -> Result<Mat6> {
        let mut k = Mat6::zeros();
        for (i, len) in self.sfa_lengths(state).into_iter().enumerate() {
            let k_local = timoshenko_stiffness(&self.geometry.sfa.with_length(len))?;
            let jt = self.jacobian_theta(state, i);
            k += jt * k_local * jt.transpose();
        }
        Ok(0.5 * (k + k.transpose()))
    }

    pub fn augmented(&self, state: &SeeState) -> Result<AugmentedSystem> {
        Ok(assemble_augmented(&self.lumped_stiffness(state)?, &self.jacobian_v(state)))
    }

    /// Solves one increment from `state` without mutating it.
    ///
    /// The environment tangent is added to `K`; the right-hand side carries the
    /// applied wrench change plus any out-of-balance load at the current pose.
    pub fn solve_step(
        &self,
        state: &SeeState,
        dv: &[f64],
        dw_applied: &Wrench,
        env: Option<&dyn Environment>,
    ) -> Result<StepReport> {
        let k = self.lumped_stiffness(state)?;
        let jv = self.jacobian_v(state);
        let (k_env, imbalance) = match env {
            Some(e) => (e.stiffness(state), e.wrench(state) + state.applied - state.wrench),
            None => (Mat6::zeros(), state.applied - state.wrench),
        };
        let sys = assemble_augmented(&(k + k_env), &jv);
        let rhs = *dw_applied + imbalance;
        let sol = solve_increment(&sys, &rhs, dv, self.channel_area())?;
        let dx = sol.displacement.to_vector();
        let external = Wrench::from_vector(&(rhs.to_vector() - k_env * dx));
        Ok(StepReport {
            applied: *dw_applied,
            displacement: sol.displacement,
            reaction: sol.reaction,
            external,
            dv: dv.to_vec(),
            relative_residual: sol.relative_residual,
            condition: sol.condition,
        })
    }

    /// Applies a solved increment to `state`.
    pub fn apply_step(&self, state: &mut SeeState, step: &StepReport) -> Result<()> {
        state.position += step.displacement.translation;
        state.rotation = rotation_update(&state.rotation, &step.displacement.rotation)?;
        for (v, dv) in state.volumes.iter_mut().zip(&step.dv) {
            *v += dv;
        }
        state.tau_v += &step.reaction;
        state.wrench = state.wrench + step.external;
        state.applied = state.applied + step.applied;
        if !state.is_finite() {
            return Err(SeeError::NonFinite("state after increment"));
        }
        Ok(())
    }

    /// Moves `state` by a total volume change and applied-wrench change,
    /// subdividing according to the step policy.
    pub fn advance(
        &self,
        state: &mut SeeState,
        dv_total: &[f64],
        dw_total: &Wrench,
        env: Option<&dyn Environment>,
        min_steps: usize,
        observer: &mut dyn FnMut(&StepReport),
    ) -> Result<usize> {
        if dv_total.len() != self.n() {
            return Err(SeeError::invalid("volume schedule", "wrong number of actuators"));
        }
        let peak = dv_total.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let by_volume = (peak / self.policy.max_volume_step).ceil() as usize;
        let pieces = by_volume.max(min_steps).max(1);
        let dv: Vec<f64> = dv_total.iter().map(|v| v / pieces as f64).collect();
        let dw = Wrench::from_vector(&(dw_total.to_vector() / pieces as f64));
        let mut count = 0;
        for _ in 0..pieces {
            count += self.advance_piece(state, &dv, &dw, env, 0, observer)?;
        }
        Ok(count)
    }

    fn advance_piece(
        &self,
        state: &mut SeeState,
        dv: &[f64],
        dw: &Wrench,
        env: Option<&dyn Environment>,
        depth: usize,
        observer: &mut dyn FnMut(&StepReport),
    ) -> Result<usize> {
        let step = self.solve_step(state, dv, dw, env)?;
        let rot = step.displacement.rotation.norm();
        if rot > self.policy.max_rotation_step {
            if depth >= 24 {
                return Err(SeeError::StepTooLarge {
                    magnitude: rot,
                    limit: self.policy.max_rotation_step,
                });
            }
            let half: Vec<f64> = dv.iter().map(|v| 0.5 * v).collect();
            let half_w = Wrench::from_vector(&(dw.to_vector() * 0.5));
            let a = self.advance_piece(state, &half, &half_w, env, depth + 1, observer)?;
            let b = self.advance_piece(state, &half, &half_w, env, depth + 1, observer)?;
            return Ok(a + b);
        }
        self.apply_step(state, &step)?;
        observer(&step);
        Ok(1)
    }

    /// Moves from the pre-filled state to the given injected volumes with no load.
    pub fn state_at(&self, volumes: &[f64]) -> Result<SeeState> {
        let mut state = self.deflated_state();
        self.advance(&mut state, volumes, &Wrench::zero(), None, 1, &mut |_| {})?;
        Ok(state)
    }
}

/// Failed quasi-static run with the states reached before the failure.
#[derive(Debug, thiserror::Error)]
#[error("simulation aborted after {} states: {error}", partial.len())]
pub struct SimulationFailure {
    pub partial: Vec<SeeState>,
    #[source]
    pub error: SeeError,
}

impl SimulationFailure {
    pub fn into_error(self) -> SeeError {
        self.error
    }
}

impl SeeModel {
    /// Follows piecewise-linear volume and applied-wrench schedules.
    ///
    /// `volume_path[k]` and `wrench_path[k]` are absolute targets of waypoint
    /// `k`; each segment is split into at least `steps` increments and further
    /// subdivided by the step policy. Returns the deflated state followed by the
    /// state at every waypoint.
    pub fn simulate_quasistatic(
        &self,
        volume_path: &[Vec<f64>],
        wrench_path: &[Wrench],
        steps: usize,
        env: Option<&dyn Environment>,
    ) -> std::result::Result<Vec<SeeState>, SimulationFailure> {
        let mut states = vec![self.deflated_state()];
        let fail = |states: Vec<SeeState>, error| SimulationFailure { partial: states, error };
        if volume_path.len() != wrench_path.len() {
            return Err(fail(
                states,
                SeeError::invalid("wrench_path", "schedules must have the same length"),
            ));
        }
        let vmax = self.geometry.max_volume;
        for (k, target) in volume_path.iter().enumerate() {
            if let Err(e) = self.check_volumes(target) {
                return Err(fail(states, e.context(format!("waypoint {k}"))));
            }
            let mut state = states.last().cloned().expect("non-empty");
            let dv: Vec<f64> = target.iter().zip(&state.volumes).map(|(t, v)| t - v).collect();
            let dw = wrench_path[k] - state.applied;
            match self.advance(&mut state, &dv, &dw, env, steps, &mut |_| {}) {
                Ok(_) => {
                    for v in state.volumes.iter_mut() {
                        *v = v.clamp(0.0, vmax);
                    }
                    states.push(state);
                }
                Err(e) => return Err(fail(states, e.context(format!("waypoint {k}")))),
            }
        }
        Ok(states)
    }

    /// Rejects volume vectors of the wrong size or outside `[0, V_max]`.
    pub fn check_volumes(&self, volumes: &[f64]) -> Result<()> {
        if volumes.len() != self.n() {
            return Err(SeeError::invalid(
                "volumes",
                format!("expected {} values, got {}", self.n(), volumes.len()),
            ));
        }
        let vmax = self.geometry.max_volume;
        for &v in volumes {
            if !v.is_finite() {
                return Err(SeeError::NonFinite("volumes"));
            }
            if v < 0.0 {
                return Err(SeeError::NegativeVolume(v));
            }
            if v > vmax * (1.0 + 1e-9) {
                return Err(SeeError::invalid(
                    "volumes",
                    format!("{v:.4e} m^3 exceeds the maximum of {vmax:.4e} m^3"),
                ));
            }
        }
        Ok(())
    }

    /// Tip stiffness along a unit translation at fixed volumes [N/m].
    ///
    /// Imposes `±s` tip displacement along `direction` with the remaining
    /// coordinates free, solves the bordered system
    ///
    /// ```text
    /// [ K     J_V  -d ] [ δx ]   [ 0 ]
    /// [ J_Vᵀ  0     0 ] [ Δτ ] = [ 0 ]
    /// [ dᵀ    0     0 ] [ f  ]   [ s ]
    /// ```
    ///
    /// and returns the central difference of the reaction force.
    pub fn effective_tip_stiffness(&self, state: &SeeState, direction: &Vec3) -> Result<f64> {
        let d = self.unit_direction(direction)?;
        let k = self.lumped_stiffness(state)?;
        let jv = self.jacobian_v(state);
        if self.is_locked(&jv, &d) {
            return Err(SeeError::LockedDirection);
        }
        let n = self.n();
        let dim = 7 + n;
        let mut m = DMatrix::zeros(dim, dim);
        m.view_mut((0, 0), (6, 6)).copy_from(&k);
        m.view_mut((0, 6), (6, n)).copy_from(&jv);
        m.view_mut((6, 0), (n, 6)).copy_from(&jv.transpose());
        for r in 0..6 {
            m[(r, 6 + n)] = -d[r];
            m[(6 + n, r)] = d[r];
        }
        let probe = 1e-6;
        let reaction = |s: f64| -> Result<f64> {
            let mut rhs = DVector::zeros(dim);
            rhs[6 + n] = s;
            Ok(solve_dense(&m, &rhs)?.solution[6 + n])
        };
        let stiffness = (reaction(probe)? - reaction(-probe)?) / (2.0 * probe);
        if !stiffness.is_finite() {
            return Err(SeeError::NonFinite("tip stiffness"));
        }
        Ok(stiffness)
    }

    /// Elastic stiffness along `direction` with the volume constraints
    /// released, `1 / (dᵀ K⁻¹ d)` [N/m]. Finite in every direction.
    pub fn unconstrained_tip_stiffness(&self, state: &SeeState, direction: &Vec3) -> Result<f64> {
        let d = self.unit_direction(direction)?;
        let k = self.lumped_stiffness(state)?;
        let kd = DMatrix::from_iterator(6, 6, k.iter().copied());
        let solved = solve_dense(&kd, &DVector::from_iterator(6, d.iter().copied()))?;
        let compliance = d.iter().zip(solved.solution.iter()).map(|(a, b)| a * b).sum::<f64>();
        Ok(1.0 / compliance)
    }

    fn unit_direction(&self, direction: &Vec3) -> Result<Vec6> {
        let norm = direction.norm();
        if !norm.is_finite() || (norm - 1.0).abs() > 1e-6 {
            return Err(SeeError::invalid("direction", "must be a unit vector"));
        }
        let u = direction / norm;
        Ok(Vec6::new(u.x, u.y, u.z, 0.0, 0.0, 0.0))
    }

    /// True when `d` lies in the span of the constraint columns, so every
    /// admissible motion at fixed volumes is orthogonal to it.
    fn is_locked(&self, jv: &Matrix6xX<f64>, d: &Vec6) -> bool {
        let svd = jv.clone().svd(true, false);
        let u = svd.u.expect("left singular vectors");
        let smax = svd.singular_values.max();
        let mut projected = Vec6::zeros();
        for (c, s) in svd.singular_values.iter().enumerate() {
            if *s > 1e-12 * smax {
                let col = u.column(c);
                projected += col * col.dot(d);
            }
        }
        (d - projected).norm() < 1e-9
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mechanics::rot_x;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn model() -> SeeModel {
        SeeModel::new(SeeGeometry::default()).unwrap()
    }

    /// Plain Gauss-Jordan inverse with partial pivoting, independent of nalgebra's LU.
    fn gauss_jordan_inverse(m: &DMatrix<f64>) -> DMatrix<f64> {
        let n = m.nrows();
        let mut a: Vec<Vec<f64>> = (0..n)
            .map(|i| {
                let mut row: Vec<f64> = (0..n).map(|j| m[(i, j)]).collect();
                row.extend((0..n).map(|j| if i == j { 1.0 } else { 0.0 }));
                row
            })
            .collect();
        for c in 0..n {
            let p = (c..n).max_by(|&x, &y| a[x][c].abs().total_cmp(&a[y][c].abs())).unwrap();
            a.swap(c, p);
            let piv = a[c][c];
            for v in a[c].iter_mut() {
                *v /= piv;
            }
            for r in 0..n {
                if r != c {
                    let f = a[r][c];
                    let pivot_row = a[c].clone();
                    for (v, pv) in a[r].iter_mut().zip(pivot_row) {
                        *v -= f * pv;
                    }
                }
            }
        }
        DMatrix::from_fn(n, n, |i, j| a[i][n + j])
    }

    fn random_volumes(rng: &mut impl Rng, m: &SeeModel) -> Vec<f64> {
        (0..m.n()).map(|_| rng.random_range(0.0..m.geometry().max_volume)).collect()
    }

    #[test]
    fn untilted_frames_sit_on_the_circle() {
        let g = SeeGeometry {
            tilt_angle: 0.0,
            ..Default::default()
        };
        let frames = build_sfa_frames(&g);
        for (i, f) in frames.iter().enumerate() {
            let phi = i as f64 * 2.0 * std::f64::consts::PI / 3.0;
            assert_relative_eq!(f.translation.x, 25e-3 * phi.cos(), epsilon = 1e-15);
            assert_relative_eq!(f.translation.y, 25e-3 * phi.sin(), epsilon = 1e-15);
            assert_relative_eq!(f.axis(), Vec3::z(), epsilon = 1e-15);
        }
    }

    #[test]
    fn tilted_axes_make_the_tilt_angle_with_z() {
        let frames = build_sfa_frames(&SeeGeometry::default());
        for f in &frames {
            assert_relative_eq!(f.axis().dot(&Vec3::z()), 15f64.to_radians().cos(), epsilon = 1e-14);
            // inward: the axis leans towards the probe axis
            let radial = Vec3::new(f.translation.x, f.translation.y, 0.0).normalize();
            assert!(f.axis().dot(&radial) < 0.0);
        }
    }

    #[test]
    fn rotating_the_layout_permutes_frames() {
        let frames = build_sfa_frames(&SeeGeometry::default());
        let r = rot_z(2.0 * std::f64::consts::PI / 3.0);
        for i in 0..3 {
            let j = (i + 1) % 3;
            assert_relative_eq!(r * frames[i].translation, frames[j].translation, epsilon = 1e-15);
            assert_relative_eq!(r * frames[i].rotation, frames[j].rotation, epsilon = 1e-14);
        }
    }

    #[test]
    fn deflated_jacobians() {
        let m = model();
        let s = m.deflated_state();
        let jv = m.jacobian_v(&s);
        for i in 0..3 {
            let jt = m.jacobian_theta(&s, i);
            assert_eq!(jt, wrench_adjoint(&m.frames()[i]));
            assert_eq!(jv.column(i), jt.column(2));
            assert_relative_eq!(jv[(2, i)], 15f64.to_radians().cos(), epsilon = 1e-14);
        }
        let sum = jv.column_sum();
        assert!(sum[0].abs() < 1e-15 && sum[1].abs() < 1e-15);
    }

    #[test]
    fn jacobian_theta_rotates_with_the_tip() {
        let m = model();
        let mut s = m.deflated_state();
        s.rotation = rot_z(0.3);
        let jt = m.jacobian_theta(&s, 1);
        let manual = block_rotation(&rot_z(0.3)) * wrench_adjoint(&m.frames()[1]);
        assert_relative_eq!(jt, manual, epsilon = 1e-15);
        assert!(jt.determinant().abs() > 0.5);
    }

    #[test]
    fn single_actuator_identity_frame_gives_element_stiffness() {
        let g = SeeGeometry::default();
        let k = timoshenko_stiffness(&g.sfa).unwrap();
        let jt = block_rotation(&Mat3::identity()) * wrench_adjoint(&FramePlacement::identity());
        assert_eq!(jt * k * jt.transpose(), k);
    }

    #[test]
    fn lumped_stiffness_is_symmetric_and_isotropic_in_xy() {
        let m = model();
        let k = m.lumped_stiffness(&m.deflated_state()).unwrap();
        assert_relative_eq!(k, k.transpose(), epsilon = 1e-9 * k.amax());
        assert_relative_eq!(k[(0, 0)], k[(1, 1)], max_relative = 1e-9);
        assert_relative_eq!(k[(3, 3)], k[(4, 4)], max_relative = 1e-9);
        assert!(k.symmetric_eigenvalues().min() > 0.0);
    }

    #[test]
    fn augmented_structure() {
        let m = model();
        let sys = m.augmented(&m.deflated_state()).unwrap();
        assert_eq!(sys.matrix.shape(), (9, 9));
        assert!(sys.matrix.view((6, 6), (3, 3)).iter().all(|x| *x == 0.0));
        assert_relative_eq!(sys.matrix, sys.matrix.transpose(), epsilon = 1e-12);
        // rank on the equilibrated matrix: raw entries span eight decades
        let d = DVector::from_iterator(9, sys.matrix.row_iter().map(|r| 1.0 / r.amax().sqrt()));
        let scaled = DMatrix::from_fn(9, 9, |i, j| d[i] * sys.matrix[(i, j)] * d[j]);
        assert_eq!(scaled.rank(1e-9), 9);
    }

    #[test]
    fn homogeneous_increment_is_zero() {
        let m = model();
        let sys = m.augmented(&m.deflated_state()).unwrap();
        let sol = solve_increment(&sys, &Wrench::zero(), &[0.0; 3], m.channel_area()).unwrap();
        assert_eq!(sol.displacement.to_vector(), Vec6::zeros());
        assert!(sol.reaction.iter().all(|x| *x == 0.0));
    }

    #[test]
    fn equal_volume_increment_is_axial() {
        let m = model();
        let sys = m.augmented(&m.deflated_state()).unwrap();
        let sol = solve_increment(&sys, &Wrench::zero(), &[1e-8; 3], m.channel_area()).unwrap();
        let dx = sol.displacement;
        assert!(dx.translation.x.abs() < 1e-9 && dx.translation.y.abs() < 1e-9);
        assert!(dx.rotation.norm() < 1e-9);
        assert!(dx.translation.z > 0.0);
    }

    #[test]
    fn increments_match_dense_inverse_oracle() {
        let m = model();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..20 {
            let s = m.state_at(&random_volumes(&mut rng, &m)).unwrap();
            let sys = m.augmented(&s).unwrap();
            let dw = Wrench::new(
                Vec3::from_fn(|_, _| rng.random_range(-1.0..1.0)),
                Vec3::from_fn(|_, _| rng.random_range(-0.02..0.02)),
            );
            let dv: Vec<f64> = (0..3).map(|_| rng.random_range(-1e-8..1e-8)).collect();
            let sol = solve_increment(&sys, &dw, &dv, m.channel_area()).unwrap();
            let mut rhs = DVector::zeros(9);
            rhs.rows_mut(0, 6).copy_from(&dw.to_vector());
            for i in 0..3 {
                rhs[6 + i] = dv[i] / m.channel_area();
            }
            let oracle = gauss_jordan_inverse(&sys.matrix) * rhs;
            let got = sol.displacement.to_vector();
            for r in 0..6 {
                assert_relative_eq!(got[r], oracle[r], epsilon = 1e-9 * oracle.amax());
            }
            for i in 0..3 {
                assert_relative_eq!(sol.reaction[i], oracle[6 + i], epsilon = 1e-9 * oracle.amax());
            }
        }
    }

    #[test]
    fn singular_and_non_finite_systems_are_rejected() {
        let zero = AugmentedSystem {
            matrix: DMatrix::zeros(9, 9),
            n: 3,
        };
        let err = solve_increment(&zero, &Wrench::zero(), &[1e-9; 3], 1e-4).unwrap_err();
        assert!(matches!(err, SeeError::Singular { .. }));
        let m = model();
        let sys = m.augmented(&m.deflated_state()).unwrap();
        let err = solve_increment(&sys, &Wrench::zero(), &[f64::NAN, 0.0, 0.0], 1e-4).unwrap_err();
        assert!(matches!(err, SeeError::NonFinite(_)));
    }

    #[test]
    fn full_inflation_extension_band() {
        let m = model();
        let v = m.geometry().max_volume;
        let s = m.state_at(&[v; 3]).unwrap();
        let z = s.position.z * 1e3;
        assert!((20.0..=27.0).contains(&z), "z = {z} mm");
        assert!(s.position.xy().norm() < 1e-9);
        assert!(s.tilt().norm() < 1e-9);
    }

    #[test]
    fn step_halving_converges() {
        let vmax = SeeGeometry::default().max_volume;
        let target = [vmax, 0.4 * vmax, 0.1 * vmax];
        let pose = |step: f64| {
            let m = model().with_policy(StepPolicy {
                max_volume_step: step,
                max_rotation_step: 1.0,
            });
            m.state_at(&target).unwrap().position
        };
        let coarse = pose(4e-8);
        let mid = pose(2e-8);
        let fine = pose(1e-8);
        let d1 = (coarse - mid).norm();
        let d2 = (mid - fine).norm();
        assert!(d2 < 0.6 * d1, "{d1} {d2}");
        assert!(d2 / fine.norm() < 1e-3);
    }

    #[test]
    fn cyclic_permutation_rotates_pose() {
        let m = model();
        let vmax = m.geometry().max_volume;
        let v = [0.9 * vmax, 0.3 * vmax, 0.1 * vmax];
        let a = m.state_at(&v).unwrap();
        let b = m.state_at(&[v[2], v[0], v[1]]).unwrap();
        let r = rot_z(2.0 * std::f64::consts::PI / 3.0);
        assert_relative_eq!(r * a.position, b.position, epsilon = 1e-9);
        assert_relative_eq!(r * a.rotation * r.transpose(), b.rotation, epsilon = 1e-9);
    }

    #[test]
    fn simulation_of_zero_schedule_stays_deflated() {
        let m = model();
        let states = m
            .simulate_quasistatic(&vec![vec![0.0; 3]; 4], &[Wrench::zero(); 4], 3, None)
            .unwrap();
        assert_eq!(states.len(), 5);
        for s in &states {
            assert_eq!(s.position, Vec3::zeros());
            assert_eq!(s.rotation, Mat3::identity());
        }
    }

    #[test]
    fn simulation_reports_partial_trajectory() {
        let m = model();
        let v = m.geometry().max_volume;
        let path = vec![vec![0.5 * v; 3], vec![-1e-7, 0.0, 0.0]];
        let failure = m
            .simulate_quasistatic(&path, &[Wrench::zero(); 2], 1, None)
            .unwrap_err();
        assert_eq!(failure.partial.len(), 2);
        assert!(failure.into_error().is_input_error());
        let mismatch = m.simulate_quasistatic(&path, &[Wrench::zero()], 1, None).unwrap_err();
        assert!(mismatch.partial.len() == 1);
    }

    #[test]
    fn transversal_stiffness_matches_schur_oracle() {
        let m = model();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..5 {
            let s = m.state_at(&random_volumes(&mut rng, &m)).unwrap();
            let a: f64 = rng.random_range(0.0..std::f64::consts::TAU);
            let dir = Vec3::new(a.cos(), a.sin(), 0.0);
            let k = m.effective_tip_stiffness(&s, &dir).unwrap();
            let inv = gauss_jordan_inverse(&m.augmented(&s).unwrap().matrix);
            let d = Vec6::new(dir.x, dir.y, 0.0, 0.0, 0.0, 0.0);
            let c = inv.view((0, 0), (6, 6));
            let compliance = (d.transpose() * c * d)[(0, 0)];
            assert_relative_eq!(k, 1.0 / compliance, max_relative = 1e-6);
        }
    }

    #[test]
    fn transversal_stiffness_is_symmetric_at_rest() {
        let m = model();
        let s = m.deflated_state();
        let a = 2.0 * std::f64::consts::PI / 3.0;
        let k0 = m.effective_tip_stiffness(&s, &Vec3::x()).unwrap();
        let k120 = m.effective_tip_stiffness(&s, &Vec3::new(a.cos(), a.sin(), 0.0)).unwrap();
        assert_relative_eq!(k0, k120, max_relative = 1e-9);
        assert!(k0 > 0.0);
    }

    #[test]
    fn axial_direction_is_locked_at_fixed_volumes() {
        let m = model();
        let s = m.state_at(&[1e-6; 3]).unwrap();
        assert!(matches!(
            m.effective_tip_stiffness(&s, &Vec3::z()),
            Err(SeeError::LockedDirection)
        ));
        let vented = m.unconstrained_tip_stiffness(&s, &Vec3::z()).unwrap();
        assert!(vented > 0.0);
        assert!(m.effective_tip_stiffness(&s, &Vec3::new(2.0, 0.0, 0.0)).is_err());
    }

    #[test]
    fn transversal_load_curve_is_monotone() {
        let m = model();
        let mut s = m.state_at(&[2e-6; 3]).unwrap();
        let mut last = s.position.x;
        for _ in 0..20 {
            m.advance(&mut s, &[0.0; 3], &Wrench::from_force(Vec3::new(0.1, 0.0, 0.0)), None, 5, &mut |_| {})
                .unwrap();
            assert!(s.position.x > last);
            last = s.position.x;
        }
    }

    #[test]
    fn rotation_steps_are_subdivided() {
        let m = model();
        let vmax = m.geometry().max_volume;
        let mut s = m.deflated_state();
        let mut peak = 0.0f64;
        m.advance(&mut s, &[vmax, 0.0, 0.0], &Wrench::zero(), None, 1, &mut |r| {
            peak = peak.max(r.displacement.rotation.norm())
        })
        .unwrap();
        assert!(peak <= m.policy().max_rotation_step);
        let _ = rot_x(0.0);
    }
}
