//! Robot configuration documents.
//!
//! Every dimensional value is a string carrying its unit, e.g.
//! `tilt_angle = "15 deg"` or `k_i = "0.03 ml/(mm*s)"`. Missing keys take the
//! built-in defaults; unknown keys are rejected.

use std::path::Path;

use serde::Deserialize;

use crate::control::{ActuatorFit, ControlConfig};
use crate::environment::{TissueParams, PRINTED_VISCERAL_STIFFNESS};
use crate::error::{Result, SeeError};
use crate::mechanics::{SfaParams, Vec3};
use crate::model::{SeeGeometry, TiltDirection};
use crate::workspace::{KminEstimate, Requirement};

/// Physical dimension of a configuration value.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Dim {
    Length,
    Area,
    Volume,
    AreaMoment,
    Pressure,
    Angle,
    Force,
    Stiffness,
    Frequency,
    VolumeRate,
    AngularRate,
    Speed,
    Time,
    VolumePerLength,
    VolumePerLengthTime,
    LengthTime,
    LengthPerVolume,
}

impl Dim {
    fn units(self) -> &'static [(&'static str, f64)] {
        match self {
            Dim::Length => &[("m", 1.0), ("cm", 1e-2), ("mm", 1e-3), ("um", 1e-6)],
            Dim::Area => &[("m2", 1.0), ("cm2", 1e-4), ("mm2", 1e-6)],
            Dim::Volume => &[("m3", 1.0), ("l", 1e-3), ("ml", 1e-6), ("cm3", 1e-6), ("ul", 1e-9)],
            Dim::AreaMoment => &[("m4", 1.0), ("cm4", 1e-8), ("mm4", 1e-12)],
            Dim::Pressure => &[("Pa", 1.0), ("kPa", 1e3), ("MPa", 1e6), ("GPa", 1e9)],
            Dim::Angle => &[("rad", 1.0), ("deg", std::f64::consts::PI / 180.0)],
            Dim::Force => &[("N", 1.0), ("mN", 1e-3)],
            Dim::Stiffness => &[("N/m", 1.0), ("N/mm", 1e3)],
            Dim::Frequency => &[("Hz", 1.0)],
            Dim::VolumeRate => &[("m3/s", 1.0), ("ml/s", 1e-6), ("ml/min", 1e-6 / 60.0)],
            Dim::AngularRate => &[("rad/s", 1.0), ("deg/s", std::f64::consts::PI / 180.0)],
            Dim::Speed => &[("m/s", 1.0), ("mm/s", 1e-3)],
            Dim::Time => &[("s", 1.0), ("ms", 1e-3)],
            Dim::VolumePerLength => &[("m3/m", 1.0), ("ml/mm", 1e-3)],
            Dim::VolumePerLengthTime => &[
                ("m3/(m*s)", 1.0),
                ("m3/m/s", 1.0),
                ("ml/(mm*s)", 1e-3),
                ("ml/mm/s", 1e-3),
            ],
            Dim::LengthTime => &[("m*s", 1.0), ("mm*s", 1e-3)],
            Dim::LengthPerVolume => &[("m/m3", 1.0), ("mm/ml", 1e3)],
        }
    }
}

/// Parses `"<number> <unit>"` into SI.
pub fn parse_quantity(text: &str, dim: Dim, path: &str) -> Result<f64> {
    let s = text.trim();
    let split = s
        .char_indices()
        .find(|(_, c)| !(c.is_ascii_digit() || matches!(c, '+' | '-' | '.' | 'e' | 'E')))
        .map_or(s.len(), |(i, _)| i);
    let (num, unit) = s.split_at(split);
    let value: f64 = num
        .parse()
        .map_err(|_| SeeError::config(path, format!("cannot parse a number from {text:?}")))?;
    let unit: String = unit
        .chars()
        .filter(|c| !c.is_whitespace())
        .map(|c| match c {
            '²' => '2',
            '³' => '3',
            '⁴' => '4',
            '·' => '*',
            c => c,
        })
        .filter(|c| *c != '^')
        .collect();
    let units = dim.units();
    if unit.is_empty() {
        return Err(SeeError::config(
            path,
            format!("missing unit in {text:?}; expected one of {}", unit_list(units)),
        ));
    }
    let factor = units
        .iter()
        .find(|(u, _)| *u == unit)
        .map(|(_, f)| *f)
        .ok_or_else(|| {
            SeeError::config(
                path,
                format!("unit {unit:?} does not fit {dim:?}; expected one of {}", unit_list(units)),
            )
        })?;
    let si = value * factor;
    if !si.is_finite() {
        return Err(SeeError::config(path, "value is not finite"));
    }
    Ok(si)
}

fn unit_list(units: &[(&str, f64)]) -> String {
    units.iter().map(|(u, _)| *u).collect::<Vec<_>>().join(", ")
}

fn quantity(raw: &Option<String>, path: &str, dim: Dim, default: f64) -> Result<f64> {
    match raw {
        Some(s) => parse_quantity(s, dim, path),
        None => Ok(default),
    }
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawDocument {
    #[serde(default)]
    geometry: RawGeometry,
    #[serde(default)]
    sfa: RawSfa,
    #[serde(default)]
    actuator: RawActuator,
    #[serde(default)]
    control: RawControl,
    #[serde(default)]
    environment: RawEnvironment,
    #[serde(default)]
    teleop: RawTeleop,
    #[serde(default)]
    noise: RawNoise,
    #[serde(default)]
    requirement: RawRequirement,
    #[serde(default)]
    k_min: RawKmin,
    #[serde(default)]
    tissue: RawTissue,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawGeometry {
    n_sfa: Option<usize>,
    placement_radius: Option<String>,
    angular_spacing: Option<String>,
    tilt_angle: Option<String>,
    tilt_direction: Option<TiltDirection>,
    tip_offset: Option<String>,
    max_volume: Option<String>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSfa {
    length: Option<String>,
    area: Option<String>,
    channel_area: Option<String>,
    youngs_modulus: Option<String>,
    area_moment: Option<String>,
    shear_modulus: Option<String>,
    torsion_constant: Option<String>,
    alpha: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawActuator {
    slope: Option<String>,
    intercept: Option<String>,
    linear_region_start: Option<String>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawControl {
    k_p: Option<String>,
    k_i: Option<String>,
    target_rate: Option<String>,
    control_rate: Option<String>,
    pump_rate_limit: Option<String>,
    volume_min: Option<String>,
    volume_max: Option<String>,
    integral_limit: Option<String>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawEnvironment {
    kind: Option<String>,
    normal_stiffness: Option<String>,
    preload: Option<String>,
    friction: Option<f64>,
    force: Option<[String; 3]>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawTeleop {
    max_axial_rate: Option<String>,
    max_tilt_rate: Option<String>,
    deadman: Option<String>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawNoise {
    sigma: Option<String>,
    seed: Option<u64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawRequirement {
    radial_translation: Option<String>,
    axial_translation: Option<String>,
    tilt: Option<String>,
    normal_force: Option<String>,
    tangential_force: Option<String>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawKmin {
    axial: Option<String>,
    transversal: Option<String>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawTissue {
    youngs_modulus: Option<String>,
    contact_radius: Option<String>,
    thickness: Option<String>,
    printed_stiffness: Option<String>,
}

/// Load model selected by the configuration.
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EnvironmentConfig {
    None,
    /// Elastic patch pushing along `-z` on the tip.
    Patch {
        normal_stiffness: f64,
        preload: f64,
        friction: f64,
    },
    ConstantWrench { force: [f64; 3] },
}

/// Live-steering limits.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct TeleopLimits {
    /// [m/s]
    pub max_axial_rate: f64,
    /// [rad/s]
    pub max_tilt_rate: f64,
    /// Command staleness after which rates drop to zero [s].
    pub deadman: f64,
}

impl Default for TeleopLimits {
    fn default() -> Self {
        TeleopLimits {
            max_axial_rate: 2e-3,
            max_tilt_rate: 2f64.to_radians(),
            deadman: 0.5,
        }
    }
}

/// Fully validated configuration in SI units.
#[derive(Debug, Clone, PartialEq)]
pub struct RobotConfig {
    pub geometry: SeeGeometry,
    pub actuator: ActuatorFit,
    pub control: ControlConfig,
    pub environment: EnvironmentConfig,
    pub teleop: TeleopLimits,
    /// Per-axis position-sensor noise [m].
    pub noise_sigma: f64,
    pub seed: u64,
    pub requirement: Requirement,
    pub k_min: KminEstimate,
    pub tissue: TissueParams,
    /// Tissue stiffness used for the clamp-force figures [N/m].
    pub printed_tissue_stiffness: f64,
}

impl Default for RobotConfig {
    fn default() -> Self {
        parse_config("").expect("defaults are valid")
    }
}

/// Reads and validates a configuration file.
pub fn load_config(path: impl AsRef<Path>) -> Result<RobotConfig> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| SeeError::io(path, e))?;
    parse_config(&text).map_err(|e| e.context(path.display().to_string()))
}

/// Parses a configuration document.
pub fn parse_config(text: &str) -> Result<RobotConfig> {
    let raw: RawDocument = toml::from_str(text).map_err(|e| {
        let at = e.span().map(|s| format!(" at byte {}", s.start)).unwrap_or_default();
        SeeError::config("document", format!("{}{at}", e.message()))
    })?;
    from_raw(&raw)
}

/// Parses a configuration already held as a TOML table.
pub fn config_from_table(table: toml::Table) -> Result<RobotConfig> {
    let raw: RawDocument = toml::Value::Table(table)
        .try_into()
        .map_err(|e: toml::de::Error| SeeError::config("robot", e.message().to_string()))?;
    from_raw(&raw)
}

fn from_raw(raw: &RawDocument) -> Result<RobotConfig> {
    let d = SfaParams::default();
    let s = &raw.sfa;
    let youngs_modulus = quantity(&s.youngs_modulus, "sfa.youngs_modulus", Dim::Pressure, d.youngs_modulus)?;
    let sfa = SfaParams {
        length: quantity(&s.length, "sfa.length", Dim::Length, d.length)?,
        area: quantity(&s.area, "sfa.area", Dim::Area, d.area)?,
        channel_area: quantity(&s.channel_area, "sfa.channel_area", Dim::Area, d.channel_area)?,
        youngs_modulus,
        area_moment: quantity(&s.area_moment, "sfa.area_moment", Dim::AreaMoment, d.area_moment)?,
        shear_modulus: quantity(&s.shear_modulus, "sfa.shear_modulus", Dim::Pressure, 0.5 * youngs_modulus)?,
        torsion_constant: quantity(
            &s.torsion_constant,
            "sfa.torsion_constant",
            Dim::AreaMoment,
            d.torsion_constant,
        )?,
        alpha: s.alpha.unwrap_or(d.alpha),
    };
    sfa.validate().map_err(|e| prefix("sfa", e))?;

    let dg = SeeGeometry::default();
    let g = &raw.geometry;
    let geometry = SeeGeometry {
        n_sfa: g.n_sfa.unwrap_or(dg.n_sfa),
        placement_radius: quantity(&g.placement_radius, "geometry.placement_radius", Dim::Length, dg.placement_radius)?,
        angular_spacing: quantity(&g.angular_spacing, "geometry.angular_spacing", Dim::Angle, dg.angular_spacing)?,
        tilt_angle: quantity(&g.tilt_angle, "geometry.tilt_angle", Dim::Angle, dg.tilt_angle)?,
        tilt_direction: g.tilt_direction.unwrap_or(dg.tilt_direction),
        tip_offset: quantity(&g.tip_offset, "geometry.tip_offset", Dim::Length, dg.tip_offset)?,
        max_volume: quantity(&g.max_volume, "geometry.max_volume", Dim::Volume, dg.max_volume)?,
        sfa,
    };
    geometry.validate().map_err(|e| prefix("geometry", e))?;

    let da = ActuatorFit::default();
    let a = &raw.actuator;
    let actuator = ActuatorFit {
        slope: quantity(&a.slope, "actuator.slope", Dim::LengthPerVolume, da.slope)?,
        intercept: quantity(&a.intercept, "actuator.intercept", Dim::Length, da.intercept)?,
        linear_region_start: quantity(
            &a.linear_region_start,
            "actuator.linear_region_start",
            Dim::Volume,
            da.linear_region_start,
        )?,
        channel_area: sfa.channel_area,
    };
    actuator.validate().map_err(|e| as_config(e))?;

    let dc = ControlConfig::default();
    let c = &raw.control;
    let control = ControlConfig {
        k_p: quantity(&c.k_p, "control.k_p", Dim::VolumePerLength, dc.k_p)?,
        k_i: quantity(&c.k_i, "control.k_i", Dim::VolumePerLengthTime, dc.k_i)?,
        target_rate: quantity(&c.target_rate, "control.target_rate", Dim::Frequency, dc.target_rate)?,
        control_rate: quantity(&c.control_rate, "control.control_rate", Dim::Frequency, dc.control_rate)?,
        pump_rate_limit: quantity(&c.pump_rate_limit, "control.pump_rate_limit", Dim::VolumeRate, dc.pump_rate_limit)?,
        volume_limits: (
            quantity(&c.volume_min, "control.volume_min", Dim::Volume, 0.0)?,
            quantity(&c.volume_max, "control.volume_max", Dim::Volume, geometry.max_volume)?,
        ),
        integral_limit: quantity(&c.integral_limit, "control.integral_limit", Dim::LengthTime, dc.integral_limit)?,
    };
    control.validate().map_err(as_config)?;
    if control.volume_limits.1 > geometry.max_volume * (1.0 + 1e-12) {
        return Err(SeeError::config("control.volume_max", "exceeds geometry.max_volume"));
    }

    let e = &raw.environment;
    let environment = match e.kind.as_deref().unwrap_or("none") {
        "none" => EnvironmentConfig::None,
        "patch" => {
            let friction = e.friction.unwrap_or(0.0);
            if !(friction >= 0.0) {
                return Err(SeeError::config("environment.friction", "must be non-negative"));
            }
            let normal_stiffness =
                quantity(&e.normal_stiffness, "environment.normal_stiffness", Dim::Stiffness, 2e3)?;
            if !(normal_stiffness > 0.0) {
                return Err(SeeError::config("environment.normal_stiffness", "must be positive"));
            }
            let preload = quantity(&e.preload, "environment.preload", Dim::Force, 5.0)?;
            if !(preload >= 0.0) {
                return Err(SeeError::config("environment.preload", "must be non-negative"));
            }
            EnvironmentConfig::Patch {
                normal_stiffness,
                preload,
                friction,
            }
        }
        "constant_wrench" => {
            let f = e
                .force
                .as_ref()
                .ok_or_else(|| SeeError::config("environment.force", "required for constant_wrench"))?;
            let mut force = [0.0; 3];
            for (k, v) in f.iter().enumerate() {
                force[k] = parse_quantity(v, Dim::Force, &format!("environment.force[{k}]"))?;
            }
            EnvironmentConfig::ConstantWrench { force }
        }
        other => {
            return Err(SeeError::config(
                "environment.kind",
                format!("unknown kind {other:?}; expected none, patch or constant_wrench"),
            ))
        }
    };

    let dt = TeleopLimits::default();
    let t = &raw.teleop;
    let teleop = TeleopLimits {
        max_axial_rate: quantity(&t.max_axial_rate, "teleop.max_axial_rate", Dim::Speed, dt.max_axial_rate)?,
        max_tilt_rate: quantity(&t.max_tilt_rate, "teleop.max_tilt_rate", Dim::AngularRate, dt.max_tilt_rate)?,
        deadman: quantity(&t.deadman, "teleop.deadman", Dim::Time, dt.deadman)?,
    };
    for (name, v) in [
        ("teleop.max_axial_rate", teleop.max_axial_rate),
        ("teleop.max_tilt_rate", teleop.max_tilt_rate),
        ("teleop.deadman", teleop.deadman),
    ] {
        if !(v > 0.0) {
            return Err(SeeError::config(name, "must be positive"));
        }
    }

    let noise_sigma = quantity(&raw.noise.sigma, "noise.sigma", Dim::Length, 0.2e-3)?;
    if !(noise_sigma >= 0.0) {
        return Err(SeeError::config("noise.sigma", "must be non-negative"));
    }

    let dr = Requirement::default();
    let r = &raw.requirement;
    let requirement = Requirement {
        radial_translation: quantity(&r.radial_translation, "requirement.radial_translation", Dim::Length, dr.radial_translation)?,
        axial_translation: quantity(&r.axial_translation, "requirement.axial_translation", Dim::Length, dr.axial_translation)?,
        tilt: quantity(&r.tilt, "requirement.tilt", Dim::Angle, dr.tilt)?,
        normal_force: quantity(&r.normal_force, "requirement.normal_force", Dim::Force, dr.normal_force)?,
        tangential_force: quantity(&r.tangential_force, "requirement.tangential_force", Dim::Force, dr.tangential_force)?,
    };
    requirement.validate().map_err(|e| prefix("requirement", e))?;

    let dk = KminEstimate::default();
    let k_min = KminEstimate {
        axial: quantity(&raw.k_min.axial, "k_min.axial", Dim::Stiffness, dk.axial)?,
        transversal: quantity(&raw.k_min.transversal, "k_min.transversal", Dim::Stiffness, dk.transversal)?,
    };
    for (name, v) in [("k_min.axial", k_min.axial), ("k_min.transversal", k_min.transversal)] {
        if !(v > 0.0) {
            return Err(SeeError::config(name, "must be positive"));
        }
    }

    let dtis = TissueParams::default();
    let ti = &raw.tissue;
    let tissue = TissueParams {
        youngs_modulus: quantity(&ti.youngs_modulus, "tissue.youngs_modulus", Dim::Pressure, dtis.youngs_modulus)?,
        contact_radius: quantity(&ti.contact_radius, "tissue.contact_radius", Dim::Length, dtis.contact_radius)?,
        thickness: quantity(&ti.thickness, "tissue.thickness", Dim::Length, dtis.thickness)?,
    };
    tissue.validate().map_err(as_config)?;
    let printed_tissue_stiffness = quantity(
        &ti.printed_stiffness,
        "tissue.printed_stiffness",
        Dim::Stiffness,
        PRINTED_VISCERAL_STIFFNESS,
    )?;
    if !(printed_tissue_stiffness > 0.0) {
        return Err(SeeError::config("tissue.printed_stiffness", "must be positive"));
    }

    Ok(RobotConfig {
        geometry,
        actuator,
        control,
        environment,
        teleop,
        noise_sigma,
        seed: raw.noise.seed.unwrap_or(0),
        requirement,
        k_min,
        tissue,
        printed_tissue_stiffness,
    })
}

fn prefix(section: &str, e: SeeError) -> SeeError {
    match e {
        SeeError::InvalidParameter { name, reason } => SeeError::config(format!("{section}.{name}"), reason),
        other => other,
    }
}

fn as_config(e: SeeError) -> SeeError {
    match e {
        SeeError::InvalidParameter { name, reason } => SeeError::config(name, reason),
        other => other,
    }
}

impl RobotConfig {
    /// Builds the environment model, anchoring the patch preload at `reference`.
    pub fn build_environment(&self, reference: Vec3) -> Result<Option<Box<dyn crate::model::Environment>>> {
        use crate::environment::{ConstantWrench, ElasticPatch};
        use crate::mechanics::Wrench;
        Ok(match &self.environment {
            EnvironmentConfig::None => None,
            EnvironmentConfig::Patch {
                normal_stiffness,
                preload,
                friction,
            } => {
                let mut p = ElasticPatch::with_preload(*normal_stiffness, *preload, reference)?;
                p.friction = *friction;
                Some(Box::new(p))
            }
            EnvironmentConfig::ConstantWrench { force } => {
                Some(Box::new(ConstantWrench(Wrench::from_force(Vec3::from_column_slice(force)))))
            }
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn empty_document_gives_defaults() {
        let c = parse_config("").unwrap();
        assert_eq!(c.geometry, SeeGeometry::default());
        assert_relative_eq!(c.geometry.sfa.length, 45e-3);
        assert_relative_eq!(c.geometry.sfa.youngs_modulus, 301.51e3);
        assert_eq!(c.control, ControlConfig::default());
        assert_eq!(c.actuator, ActuatorFit::default());
        assert_eq!(c.environment, EnvironmentConfig::None);
        assert_relative_eq!(c.noise_sigma, 0.2e-3);
    }

    #[test]
    fn unit_conversion() {
        let c = parse_config("[geometry]\ntilt_angle = \"15 deg\"\n").unwrap();
        assert_relative_eq!(c.geometry.tilt_angle, 0.2618, epsilon = 1e-4);
        assert_relative_eq!(parse_quantity("1200 cm4", Dim::AreaMoment, "x").unwrap(), 1.2e-5, max_relative = 1e-12);
        assert_relative_eq!(parse_quantity("0.03 ml/(mm*s)", Dim::VolumePerLengthTime, "x").unwrap(), 3e-5, max_relative = 1e-12);
        assert_relative_eq!(parse_quantity("314.16mm²", Dim::Area, "x").unwrap(), 314.16e-6, max_relative = 1e-12);
        assert_relative_eq!(parse_quantity("-5.52 mm", Dim::Length, "x").unwrap(), -5.52e-3, max_relative = 1e-12);
        assert_relative_eq!(parse_quantity("1.5e3 N/m", Dim::Stiffness, "x").unwrap(), 1.5e3);
    }

    #[test]
    fn shear_modulus_follows_youngs_modulus() {
        let c = parse_config("[sfa]\nyoungs_modulus = \"200 kPa\"\n").unwrap();
        assert_relative_eq!(c.geometry.sfa.shear_modulus, 100e3);
    }

    #[test]
    fn negative_area_names_the_field() {
        let err = parse_config("[sfa]\narea = \"-3 mm2\"\n").unwrap_err();
        assert!(err.to_string().contains("sfa.area"), "{err}");
        assert!(err.is_input_error());
    }

    #[test]
    fn unit_mismatch_and_missing_units() {
        let err = parse_config("[geometry]\ntilt_angle = \"15 mm\"\n").unwrap_err();
        assert!(err.to_string().contains("geometry.tilt_angle"), "{err}");
        let err = parse_config("[control]\nk_i = \"0.03 ml*s/mm\"\n").unwrap_err();
        assert!(err.to_string().contains("control.k_i"), "{err}");
        let err = parse_config("[sfa]\nlength = \"45\"\n").unwrap_err();
        assert!(err.to_string().contains("missing unit"), "{err}");
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(parse_config("[geometry]\nradius = \"3 mm\"\n").is_err());
        assert!(parse_config("[bogus]\n").is_err());
        assert!(parse_config("[environment]\nkind = \"lava\"\n").is_err());
    }

    #[test]
    fn environment_sections() {
        let c = parse_config("[environment]\nkind = \"patch\"\nnormal_stiffness = \"2 N/mm\"\npreload = \"5 N\"\n").unwrap();
        assert_eq!(
            c.environment,
            EnvironmentConfig::Patch {
                normal_stiffness: 2e3,
                preload: 5.0,
                friction: 0.0
            }
        );
        assert!(c.build_environment(Vec3::zeros()).unwrap().is_some());
        let c = parse_config("[environment]\nkind = \"constant_wrench\"\nforce = [\"0 N\", \"0 N\", \"-1 N\"]\n").unwrap();
        assert_eq!(c.environment, EnvironmentConfig::ConstantWrench { force: [0.0, 0.0, -1.0] });
    }

    #[test]
    fn volume_limit_cannot_exceed_geometry() {
        assert!(parse_config("[control]\nvolume_max = \"10 ml\"\n").is_err());
    }
}
