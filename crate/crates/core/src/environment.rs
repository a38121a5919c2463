//! Tip load models and the clamping-safety spring calculus.

use crate::error::{Result, SeeError};
use crate::mechanics::{Mat3, Mat6, Vec3, Vec6, Wrench};
use crate::model::{Environment, SeeModel, SeeState};

/// Constant wrench at the tip.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConstantWrench(pub Wrench);

impl Environment for ConstantWrench {
    fn wrench(&self, _state: &SeeState) -> Wrench {
        self.0
    }

    fn stiffness(&self, _state: &SeeState) -> Mat6 {
        Mat6::zeros()
    }
}

/// Unilateral elastic contact patch.
///
/// `contact_normal` is the direction of the force the patch exerts on the
/// tip. Penetration grows as the tip moves against it from `reference`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ElasticPatch {
    /// [N/m]
    pub normal_stiffness: f64,
    /// Penetration at `reference` [m].
    pub preload_displacement: f64,
    pub contact_normal: Vec3,
    /// Coulomb coefficient; 0 for a lubricated patch.
    pub friction: f64,
    /// Tip position at which the preload is defined [m].
    pub reference: Vec3,
}

impl ElasticPatch {
    /// Patch pushing along `-z` with the given preload force at `reference`.
    pub fn with_preload(normal_stiffness: f64, preload_force: f64, reference: Vec3) -> Result<Self> {
        if !(normal_stiffness > 0.0) {
            return Err(SeeError::invalid("patch.normal_stiffness", "must be positive"));
        }
        if !(preload_force >= 0.0) {
            return Err(SeeError::invalid("patch.preload", "must be non-negative"));
        }
        Ok(ElasticPatch {
            normal_stiffness,
            preload_displacement: preload_force / normal_stiffness,
            contact_normal: -Vec3::z(),
            friction: 0.0,
            reference,
        })
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.normal_stiffness >= 0.0) {
            return Err(SeeError::invalid("patch.normal_stiffness", "must be non-negative"));
        }
        if !((self.contact_normal.norm() - 1.0).abs() < 1e-9) {
            return Err(SeeError::invalid("patch.contact_normal", "must be a unit vector"));
        }
        if !(self.friction >= 0.0) {
            return Err(SeeError::invalid("patch.friction", "must be non-negative"));
        }
        Ok(())
    }

    fn penetration(&self, position: &Vec3) -> f64 {
        self.preload_displacement - self.contact_normal.dot(&(position - self.reference))
    }

    fn tangential_motion(&self, position: &Vec3) -> Vec3 {
        let d = position - self.reference;
        d - self.contact_normal * self.contact_normal.dot(&d)
    }
}

/// Contact wrench of the patch for a tip position.
///
/// With friction, the tangential force is a stick spring of the normal
/// stiffness capped at the Coulomb limit.
pub fn patch_wrench(patch: &ElasticPatch, position: &Vec3) -> Wrench {
    let depth = patch.penetration(position);
    if depth <= 0.0 {
        return Wrench::zero();
    }
    let normal = patch.normal_stiffness * depth;
    let mut force = patch.contact_normal * normal;
    if patch.friction > 0.0 {
        let slip = patch.tangential_motion(position);
        let stick = patch.normal_stiffness * slip.norm();
        let limit = patch.friction * normal;
        if stick > 0.0 {
            force -= slip / slip.norm() * stick.min(limit);
        }
    }
    Wrench::from_force(force)
}

impl Environment for ElasticPatch {
    fn wrench(&self, state: &SeeState) -> Wrench {
        patch_wrench(self, &state.position)
    }

    fn stiffness(&self, state: &SeeState) -> Mat6 {
        let mut k = Mat6::zeros();
        let depth = self.penetration(&state.position);
        if depth <= 0.0 {
            return k;
        }
        let n = self.contact_normal;
        let mut kt: Mat3 = self.normal_stiffness * n * n.transpose();
        if self.friction > 0.0 {
            let slip = self.tangential_motion(&state.position);
            if self.normal_stiffness * slip.norm() < self.friction * self.normal_stiffness * depth {
                kt += self.normal_stiffness * (Mat3::identity() - n * n.transpose());
            }
        }
        k.fixed_view_mut::<3, 3>(0, 0).copy_from(&kt);
        k
    }
}

/// Lateral (x/y) linear spring anchored at a tip position.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LateralSpring {
    /// [N/m]
    pub stiffness: f64,
    pub anchor: Vec3,
}

impl Environment for LateralSpring {
    fn wrench(&self, state: &SeeState) -> Wrench {
        let d = state.position - self.anchor;
        Wrench::from_force(Vec3::new(-self.stiffness * d.x, -self.stiffness * d.y, 0.0))
    }

    fn stiffness(&self, _state: &SeeState) -> Mat6 {
        let mut k = Mat6::zeros();
        k[(0, 0)] = self.stiffness;
        k[(1, 1)] = self.stiffness;
        k
    }
}

/// Soft-tissue block under the probe.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct TissueParams {
    /// [Pa]
    pub youngs_modulus: f64,
    /// [m]
    pub contact_radius: f64,
    /// [m]
    pub thickness: f64,
}

impl Default for TissueParams {
    fn default() -> Self {
        TissueParams {
            youngs_modulus: 8.42e3,
            contact_radius: 10e-3,
            thickness: 10e-3,
        }
    }
}

impl TissueParams {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("tissue.youngs_modulus", self.youngs_modulus),
            ("tissue.contact_radius", self.contact_radius),
            ("tissue.thickness", self.thickness),
        ] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(SeeError::invalid(name, "must be positive"));
            }
        }
        Ok(())
    }
}

/// `E·π·r²/d` [N/m].
pub fn visceral_stiffness(t: &TissueParams) -> Result<f64> {
    t.validate()?;
    Ok(t.youngs_modulus * std::f64::consts::PI * t.contact_radius.powi(2) / t.thickness)
}

/// Series combination `(1/k1 + 1/k2)⁻¹`; an infinite spring is rigid.
pub fn serial_stiffness(k1: f64, k2: f64) -> Result<f64> {
    for (name, k) in [("k1", k1), ("k2", k2)] {
        if !(k > 0.0) {
            return Err(SeeError::invalid(name, "stiffness must be positive"));
        }
    }
    Ok(1.0 / (1.0 / k1 + 1.0 / k2))
}

/// Force of a spring `k` compressed by `dx` [N].
pub fn clamp_contact_force(k: f64, dx: f64) -> Result<f64> {
    if !(dx >= 0.0) {
        return Err(SeeError::invalid("dx", "must be non-negative"));
    }
    if !(k >= 0.0) {
        return Err(SeeError::invalid("k", "must be non-negative"));
    }
    Ok(k * dx)
}

/// Stiffness printed alongside the tissue constants [N/m]; not reproducible from them.
pub const PRINTED_VISCERAL_STIFFNESS: f64 = 39.37e3;

/// Patient-motion clamping comparison between a rigid and a compliant holder.
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct SafetyReport {
    pub tissue: TissueParams,
    /// Transversal stiffness of the end-effector [N/m].
    pub see_stiffness: f64,
    /// Patient displacement [m].
    pub displacement: f64,
    /// `E·π·r²/d` [N/m].
    pub k_vis_formula: f64,
    /// Tissue stiffness used for the force figures [N/m].
    pub k_vis: f64,
    /// [N/m]
    pub k_comb: f64,
    /// Rigid holder: `k_vis·Δx` [N].
    pub rigid_force: f64,
    /// Compliant holder: `k_comb·Δx` [N].
    pub compliant_force: f64,
    /// Same figures with the formula stiffness.
    pub k_comb_formula: f64,
    pub rigid_force_formula: f64,
    pub compliant_force_formula: f64,
}

pub fn safety_report(
    tissue: &TissueParams,
    k_vis: f64,
    see_stiffness: f64,
    displacement: f64,
) -> Result<SafetyReport> {
    let k_vis_formula = visceral_stiffness(tissue)?;
    let k_comb = serial_stiffness(k_vis, see_stiffness)?;
    let k_comb_formula = serial_stiffness(k_vis_formula, see_stiffness)?;
    Ok(SafetyReport {
        tissue: *tissue,
        see_stiffness,
        displacement,
        k_vis_formula,
        k_vis,
        k_comb,
        rigid_force: clamp_contact_force(k_vis, displacement)?,
        compliant_force: clamp_contact_force(k_comb, displacement)?,
        k_comb_formula,
        rigid_force_formula: clamp_contact_force(k_vis_formula, displacement)?,
        compliant_force_formula: clamp_contact_force(k_comb_formula, displacement)?,
    })
}

/// Settings of the lateral-constraint sweep.
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct IndentationOptions {
    /// Uniform inflation of the operating point, fraction of `V_max`.
    pub inflation: f64,
    /// Free lateral travel commanded along x [m].
    pub travel: f64,
    /// Indentation depths [m].
    pub depths: Vec<f64>,
    /// Normalised displacement targeted at the deepest indentation.
    pub calibration_target: f64,
    /// Volume-step split of the line trajectory.
    pub steps: usize,
}

impl Default for IndentationOptions {
    fn default() -> Self {
        IndentationOptions {
            inflation: 0.6,
            travel: 5e-3,
            depths: vec![0.0, 3e-3, 6e-3, 9e-3, 12e-3, 15e-3],
            calibration_target: 0.2784,
            steps: 50,
        }
    }
}

/// Response at one indentation depth.
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct IndentationPoint {
    /// [m]
    pub depth: f64,
    /// Lateral spring constant [N/m].
    pub spring: f64,
    /// Lateral force at the end of the line [N].
    pub lateral_force: f64,
    /// Tip displacement relative to the free run [%].
    pub displacement_pct: f64,
    /// Tip tilt relative to the free run [%].
    pub tilt_pct: f64,
}

#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct IndentationReport {
    /// Spring constant per unit depth [N/m²].
    pub spring_per_depth: f64,
    pub points: Vec<IndentationPoint>,
    /// Least-squares attenuation `-d(%)/dF` of displacement [%/N].
    pub displacement_slope: f64,
    /// Least-squares attenuation `-d(%)/dF` of tilt [%/N].
    pub tilt_slope: f64,
}

struct LineResponse {
    displacement: f64,
    tilt: f64,
    force: f64,
}

fn line_response(
    model: &SeeModel,
    start: &SeeState,
    opts: &IndentationOptions,
    spring: f64,
) -> Result<LineResponse> {
    let cmd = Vec6::new(opts.travel, 0.0, 0.0, 0.0, 0.0, 0.0);
    let dv: Vec<f64> = (model.jacobian_v(start).transpose() * cmd * model.channel_area())
        .iter()
        .copied()
        .collect();
    let env = LateralSpring {
        stiffness: spring,
        anchor: start.position,
    };
    let mut state = start.clone();
    model.advance(&mut state, &dv, &Wrench::zero(), Some(&env), opts.steps, &mut |_| {})?;
    let force = env.wrench(&state).force.xy().norm();
    Ok(LineResponse {
        displacement: (state.position - start.position).xy().norm(),
        tilt: (state.tilt() - start.tilt()).xy().norm(),
        force,
    })
}

/// Runs the line trajectory against a lateral spring `κ·depth` for each depth.
///
/// `κ` is found by bisection so the deepest indentation attenuates the
/// displacement to `calibration_target` of the free run.
pub fn indentation_sweep(model: &SeeModel, opts: &IndentationOptions) -> Result<IndentationReport> {
    if opts.depths.iter().any(|d| !(*d >= 0.0)) {
        return Err(SeeError::invalid("depths", "must be non-negative"));
    }
    if !(0.0..=1.0).contains(&opts.inflation) {
        return Err(SeeError::invalid("inflation", "must lie in [0, 1]"));
    }
    if !(opts.calibration_target > 0.0 && opts.calibration_target < 1.0) {
        return Err(SeeError::invalid("calibration_target", "must lie in (0, 1)"));
    }
    let v0 = opts.inflation * model.geometry().max_volume;
    let start = model.state_at(&vec![v0; model.n()])?;
    let free = line_response(model, &start, opts, 0.0)?;
    if !(free.displacement > 0.0) || !(free.tilt > 0.0) {
        return Err(SeeError::invalid("travel", "free run does not move the tip"));
    }
    let deepest = opts.depths.iter().copied().fold(0.0, f64::max);
    let spring_per_depth = if deepest > 0.0 {
        let ratio = |k: f64| -> Result<f64> { Ok(line_response(model, &start, opts, k)?.displacement / free.displacement) };
        // bracket in log space, then bisect
        let (mut lo, mut hi) = (1e-3f64, 1e3f64);
        while ratio(hi)? > opts.calibration_target {
            hi *= 10.0;
            if hi > 1e12 {
                return Err(SeeError::invalid("calibration_target", "not reachable with a lateral spring"));
            }
        }
        for _ in 0..60 {
            let mid = (lo * hi).sqrt();
            if ratio(mid)? > opts.calibration_target {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        (lo * hi).sqrt() / deepest
    } else {
        0.0
    };
    let mut points = Vec::with_capacity(opts.depths.len());
    for &depth in &opts.depths {
        let spring = spring_per_depth * depth;
        let r = line_response(model, &start, opts, spring)?;
        points.push(IndentationPoint {
            depth,
            spring,
            lateral_force: r.force,
            displacement_pct: 100.0 * r.displacement / free.displacement,
            tilt_pct: 100.0 * r.tilt / free.tilt,
        });
    }
    let forces: Vec<f64> = points.iter().map(|p| p.lateral_force).collect();
    let disp: Vec<f64> = points.iter().map(|p| p.displacement_pct).collect();
    let tilt: Vec<f64> = points.iter().map(|p| p.tilt_pct).collect();
    Ok(IndentationReport {
        spring_per_depth,
        displacement_slope: -fit_slope(&forces, &disp),
        tilt_slope: -fit_slope(&forces, &tilt),
        points,
    })
}

/// Least-squares slope of `y` on `x`; zero for a degenerate abscissa.
pub fn fit_slope(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    if x.len() < 2 {
        return 0.0;
    }
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|v| (v - mx).powi(2)).sum();
    if sxx == 0.0 {
        return 0.0;
    }
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    sxy / sxx
}
