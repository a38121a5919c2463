//! Frame algebra and the actuator beam element.
//!
//! Wrenches are ordered `[F; M]` and small displacements `[u; v]`
//! (translation, then rotation vector), both six-vectors in SI units.

use nalgebra::{Matrix3, Matrix6, Vector3, Vector6};

use crate::error::{Result, SeeError};

pub type Vec3 = Vector3<f64>;
pub type Mat3 = Matrix3<f64>;
pub type Vec6 = Vector6<f64>;
pub type Mat6 = Matrix6<f64>;

/// Largest rotation increment accepted by [`rotation_update`].
pub const MAX_ROTATION_STEP: f64 = 0.2;

/// Lengths enter the shear-correction coefficient in millimetres.
///
/// The coefficient `12EI / ((A/α) G L³)` carries a dimension of inverse
/// length; the tuned Table constants were obtained with lengths in mm, so the
/// SI value is scaled by 1 mm to recover the dimensionless number.
pub const PHI_REFERENCE_LENGTH: f64 = 1e-3;

/// Frame in which a wrench or displacement is expressed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Frame {
    /// Origin at the probe tip, axes aligned with the base frame.
    #[default]
    Tip,
    /// Distal frame of actuator `i`.
    Sfa(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Wrench {
    pub force: Vec3,
    pub moment: Vec3,
    pub frame: Frame,
}

impl Wrench {
    pub fn new(force: Vec3, moment: Vec3) -> Self {
        Wrench {
            force,
            moment,
            frame: Frame::Tip,
        }
    }

    pub fn zero() -> Self {
        Self::default()
    }

    pub fn from_force(force: Vec3) -> Self {
        Self::new(force, Vec3::zeros())
    }

    pub fn to_vector(&self) -> Vec6 {
        Vec6::new(
            self.force.x,
            self.force.y,
            self.force.z,
            self.moment.x,
            self.moment.y,
            self.moment.z,
        )
    }

    pub fn from_vector(v: &Vec6) -> Self {
        Self::new(v.fixed_rows::<3>(0).into(), v.fixed_rows::<3>(3).into())
    }

    pub fn is_finite(&self) -> bool {
        self.force.iter().chain(self.moment.iter()).all(|x| x.is_finite())
    }
}

impl std::ops::Sub for Wrench {
    type Output = Wrench;
    fn sub(self, rhs: Wrench) -> Wrench {
        Wrench::new(self.force - rhs.force, self.moment - rhs.moment)
    }
}

impl std::ops::Add for Wrench {
    type Output = Wrench;
    fn add(self, rhs: Wrench) -> Wrench {
        Wrench::new(self.force + rhs.force, self.moment + rhs.moment)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct SmallDisplacement {
    pub translation: Vec3,
    pub rotation: Vec3,
    pub frame: Frame,
}

impl SmallDisplacement {
    pub fn from_vector(v: &Vec6) -> Self {
        SmallDisplacement {
            translation: v.fixed_rows::<3>(0).into(),
            rotation: v.fixed_rows::<3>(3).into(),
            frame: Frame::Tip,
        }
    }

    pub fn to_vector(&self) -> Vec6 {
        Vec6::new(
            self.translation.x,
            self.translation.y,
            self.translation.z,
            self.rotation.x,
            self.rotation.y,
            self.rotation.z,
        )
    }
}

/// Rigid placement of a frame: rotation `R₀` and origin `d₀`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FramePlacement {
    pub rotation: Mat3,
    pub translation: Vec3,
}

impl FramePlacement {
    pub fn new(rotation: Mat3, translation: Vec3) -> Self {
        FramePlacement {
            rotation,
            translation,
        }
    }

    pub fn identity() -> Self {
        Self::new(Mat3::identity(), Vec3::zeros())
    }

    /// `self ∘ other`: `other` is expressed in `self`'s frame.
    pub fn compose(&self, other: &FramePlacement) -> FramePlacement {
        FramePlacement::new(
            self.rotation * other.rotation,
            self.translation + self.rotation * other.translation,
        )
    }

    pub fn inverse(&self) -> FramePlacement {
        let rt = self.rotation.transpose();
        FramePlacement::new(rt, -(rt * self.translation))
    }

    /// Local z-axis expressed in the parent frame.
    pub fn axis(&self) -> Vec3 {
        self.rotation.column(2).into()
    }
}

impl Default for FramePlacement {
    fn default() -> Self {
        Self::identity()
    }
}

/// Skew-symmetric matrix `[d]×` such that `[d]× v = d × v`.
pub fn cross_matrix(d: &Vec3) -> Mat3 {
    Mat3::new(0.0, -d.z, d.y, d.z, 0.0, -d.x, -d.y, d.x, 0.0)
}

/// Wrench transformation from a local frame into its parent:
/// `[[R₀, 0], [D₀R₀, R₀]]`.
pub fn wrench_adjoint(p: &FramePlacement) -> Mat6 {
    let r = p.rotation;
    let dr = cross_matrix(&p.translation) * r;
    let mut ad = Mat6::zeros();
    ad.fixed_view_mut::<3, 3>(0, 0).copy_from(&r);
    ad.fixed_view_mut::<3, 3>(3, 0).copy_from(&dr);
    ad.fixed_view_mut::<3, 3>(3, 3).copy_from(&r);
    ad
}

/// `blockdiag(R, R)`.
pub fn block_rotation(r: &Mat3) -> Mat6 {
    let mut m = Mat6::zeros();
    m.fixed_view_mut::<3, 3>(0, 0).copy_from(r);
    m.fixed_view_mut::<3, 3>(3, 3).copy_from(r);
    m
}

/// Material and geometric constants of one fluidic actuator (SI units).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SfaParams {
    /// Length at the pre-filled state [m].
    pub length: f64,
    /// Cross-sectional area [m²].
    pub area: f64,
    /// Fluid channel area [m²].
    pub channel_area: f64,
    /// Young's modulus [Pa].
    pub youngs_modulus: f64,
    /// Effective area moment of inertia [m⁴]; a tuned value, not the geometric one.
    pub area_moment: f64,
    /// Shear modulus [Pa].
    pub shear_modulus: f64,
    /// Torsion constant [m⁴].
    pub torsion_constant: f64,
    /// Shear correction coefficient.
    pub alpha: f64,
}

impl Default for SfaParams {
    fn default() -> Self {
        let pi = std::f64::consts::PI;
        let e = 301.51e3;
        SfaParams {
            length: 45e-3,
            area: pi * 10e-3 * 10e-3,
            channel_area: pi * 6.9e-3 * 6.9e-3,
            youngs_modulus: e,
            area_moment: 1200e-8,
            shear_modulus: 0.5 * e,
            torsion_constant: 0.5 * pi * 1e-8,
            alpha: 5.0 / 6.0,
        }
    }
}

impl SfaParams {
    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("length", self.length),
            ("area", self.area),
            ("channel_area", self.channel_area),
            ("youngs_modulus", self.youngs_modulus),
            ("area_moment", self.area_moment),
            ("shear_modulus", self.shear_modulus),
            ("torsion_constant", self.torsion_constant),
            ("alpha", self.alpha),
        ];
        for (name, value) in fields {
            if !value.is_finite() || value <= 0.0 {
                return Err(SeeError::invalid(name, format!("must be positive, got {value}")));
            }
        }
        if self.alpha > 1.0 {
            return Err(SeeError::invalid("alpha", "must lie in (0, 1]"));
        }
        Ok(())
    }

    pub fn with_length(&self, length: f64) -> SfaParams {
        SfaParams { length, ..*self }
    }
}

/// Shear-deformation coefficient `Φ = 12EI / ((A/α) G L³)` (lengths in mm).
pub fn timoshenko_phi(p: &SfaParams) -> Result<f64> {
    p.validate()?;
    Ok(phi_unchecked(p))
}

fn phi_unchecked(p: &SfaParams) -> f64 {
    12.0 * p.youngs_modulus * p.area_moment
        / ((p.area / p.alpha) * p.shear_modulus * p.length.powi(3))
        * PHI_REFERENCE_LENGTH
}

/// 6×6 beam-element stiffness of one actuator in its local frame.
///
/// The off-diagonal bending/rotation couplings follow the sign pattern
/// `K[x,θy] = +6EI/((1+Φ)L²)`, `K[y,θx] = −6EI/((1+Φ)L²)`.
pub fn timoshenko_stiffness(p: &SfaParams) -> Result<Mat6> {
    p.validate()?;
    let phi = phi_unchecked(p);
    let (e, i, l) = (p.youngs_modulus, p.area_moment, p.length);
    let ei = e * i;
    let bend = 12.0 * ei / ((1.0 + phi) * l.powi(3));
    let couple = 6.0 * ei / ((1.0 + phi) * l * l);
    let rot = (4.0 + phi) * ei / ((1.0 + phi) * l);

    let mut k = Mat6::zeros();
    k[(0, 0)] = bend;
    k[(1, 1)] = bend;
    k[(2, 2)] = e * p.area / l;
    k[(3, 3)] = rot;
    k[(4, 4)] = rot;
    k[(5, 5)] = p.shear_modulus * p.torsion_constant / l;
    k[(0, 4)] = couple;
    k[(4, 0)] = couple;
    k[(1, 3)] = -couple;
    k[(3, 1)] = -couple;
    Ok(k)
}

/// Rodrigues exponential of a rotation vector.
pub fn rotation_exp(v: &Vec3) -> Mat3 {
    let theta = v.norm();
    let k = cross_matrix(v);
    if theta < 1e-8 {
        return Mat3::identity() + k + 0.5 * k * k;
    }
    Mat3::identity() + (theta.sin() / theta) * k + ((1.0 - theta.cos()) / (theta * theta)) * k * k
}

/// Rotation vector of a rotation matrix (principal branch).
pub fn rotation_log(r: &Mat3) -> Vec3 {
    let rot = nalgebra::Rotation3::from_matrix_unchecked(*r);
    rot.scaled_axis()
}

/// Gram-Schmidt re-orthonormalization keeping the z column direction.
pub fn orthonormalize(r: &Mat3) -> Mat3 {
    let z = r.column(2).normalize();
    let x0: Vec3 = r.column(0).into();
    let x = (x0 - z * z.dot(&x0)).normalize();
    let y = z.cross(&x);
    Mat3::from_columns(&[x, y, z])
}

/// Applies a small world-frame rotation increment: `exp([v]×)·R`.
pub fn rotation_update(r: &Mat3, v: &Vec3) -> Result<Mat3> {
    if !v.iter().all(|x| x.is_finite()) {
        return Err(SeeError::NonFinite("rotation increment"));
    }
    let magnitude = v.norm();
    if magnitude >= MAX_ROTATION_STEP {
        return Err(SeeError::StepTooLarge {
            magnitude,
            limit: MAX_ROTATION_STEP,
        });
    }
    Ok(orthonormalize(&(rotation_exp(v) * r)))
}

/// Rotation about the z axis.
pub fn rot_z(angle: f64) -> Mat3 {
    let (s, c) = angle.sin_cos();
    Mat3::new(c, -s, 0.0, s, c, 0.0, 0.0, 0.0, 1.0)
}

/// Rotation about the y axis.
pub fn rot_y(angle: f64) -> Mat3 {
    let (s, c) = angle.sin_cos();
    Mat3::new(c, 0.0, s, 0.0, 1.0, 0.0, -s, 0.0, c)
}

/// Rotation about the x axis.
pub fn rot_x(angle: f64) -> Mat3 {
    let (s, c) = angle.sin_cos();
    Mat3::new(1.0, 0.0, 0.0, 0.0, c, -s, 0.0, s, c)
}
