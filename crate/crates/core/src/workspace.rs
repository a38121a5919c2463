//! Reachable-pose mapping, clinical requirement volumes and coverage.

use std::io::Write;

use rayon::prelude::*;
use statrs::distribution::{ChiSquared, ContinuousCDF, Normal};

use crate::error::{Result, SeeError};
use crate::mechanics::Vec3;
use crate::model::SeeModel;

/// Voxel edge used to discretise the requirement cylinder [m].
pub const VOXEL_SIZE: f64 = 0.25e-3;

/// Clinical workspace and contact-force demand.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct Requirement {
    /// Cylinder radius [m].
    pub radial_translation: f64,
    /// Cylinder height [m].
    pub axial_translation: f64,
    /// Tilt cone half-angle [rad].
    pub tilt: f64,
    /// Axial contact force [N].
    pub normal_force: f64,
    /// Transversal contact force [N].
    pub tangential_force: f64,
}

impl Default for Requirement {
    fn default() -> Self {
        Requirement {
            radial_translation: 7.75e-3,
            axial_translation: 5.22e-3,
            tilt: 5.08f64.to_radians(),
            normal_force: 8.01,
            tangential_force: 4.42,
        }
    }
}

impl Requirement {
    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("radial_translation", self.radial_translation),
            ("axial_translation", self.axial_translation),
            ("tilt", self.tilt),
            ("normal_force", self.normal_force),
            ("tangential_force", self.tangential_force),
        ];
        for (name, v) in fields {
            if !v.is_finite() || v < 0.0 {
                return Err(SeeError::invalid(name, "must be finite and non-negative"));
            }
        }
        Ok(())
    }
}

/// Lowest stiffness of the mechanism over its workspace.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct KminEstimate {
    /// [N/m]
    pub axial: f64,
    /// [N/m]
    pub transversal: f64,
}

impl Default for KminEstimate {
    fn default() -> Self {
        KminEstimate {
            axial: 14.41e3,
            transversal: 1.51e3,
        }
    }
}

/// Compliance-induced deflection and the enlarged requirement.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct ForceDeflection {
    /// [m]
    pub axial: f64,
    /// [m]
    pub transversal: f64,
    /// Requirement widened by the deflections.
    pub adjusted: Requirement,
}

/// `δ_f = K_min⁻¹ f_req` componentwise, and `δ̂ = δ_req + δ_f`.
pub fn force_deflection(k: &KminEstimate, req: &Requirement) -> Result<ForceDeflection> {
    req.validate()?;
    for (name, v) in [("k_min.axial", k.axial), ("k_min.transversal", k.transversal)] {
        if !v.is_finite() || v <= 0.0 {
            return Err(SeeError::invalid(name, "stiffness must be positive"));
        }
    }
    let axial = req.normal_force / k.axial;
    let transversal = req.tangential_force / k.transversal;
    Ok(ForceDeflection {
        axial,
        transversal,
        adjusted: Requirement {
            axial_translation: req.axial_translation + axial,
            radial_translation: req.radial_translation + transversal,
            ..*req
        },
    })
}

/// One reached pose.
#[derive(Debug, Clone, PartialEq)]
pub struct PoseSample {
    /// Injected volumes [m³].
    pub volumes: Vec<f64>,
    /// Tip position [m].
    pub position: Vec3,
    /// Rotation vector components about x, y, z [rad].
    pub tilt: Vec3,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct PoseCloud {
    pub samples: Vec<PoseSample>,
}

impl PoseCloud {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Writes `V1..Vn [ml], x,y,z [mm], rx,ry,rz [deg]`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let n = self.samples.first().map_or(3, |s| s.volumes.len());
        let mut w = csv::Writer::from_writer(out);
        let mut header: Vec<String> = (1..=n).map(|i| format!("V{i}")).collect();
        header.extend(["x", "y", "z", "rx", "ry", "rz"].map(String::from));
        w.write_record(&header).map_err(csv_error)?;
        for s in &self.samples {
            let mut row: Vec<String> = s.volumes.iter().map(|v| (v * 1e6).to_string()).collect();
            row.extend(s.position.iter().map(|p| (p * 1e3).to_string()));
            row.extend(s.tilt.iter().map(|r| r.to_degrees().to_string()));
            w.write_record(&row).map_err(csv_error)?;
        }
        w.flush().map_err(|e| SeeError::Format(e.to_string()))?;
        Ok(())
    }

    pub fn summary(&self) -> Result<WorkspaceSummary> {
        if self.is_empty() {
            return Err(SeeError::EmptyCloud);
        }
        let mut s = WorkspaceSummary::default();
        for p in &self.samples {
            s.max_extension = s.max_extension.max(p.position.z);
            s.max_deflection = s.max_deflection.max(p.position.xy().norm());
            s.max_tilt = s.max_tilt.max(p.tilt.xy().norm());
            s.max_twist = s.max_twist.max(p.tilt.z.abs());
        }
        Ok(s)
    }
}

pub(crate) fn csv_error(e: csv::Error) -> SeeError {
    SeeError::Format(e.to_string())
}

/// Extremes of a pose cloud (SI units).
#[derive(Debug, Clone, Copy, PartialEq, Default, serde::Serialize)]
pub struct WorkspaceSummary {
    pub max_extension: f64,
    pub max_deflection: f64,
    pub max_tilt: f64,
    pub max_twist: f64,
}

/// Simulates every volume combination on a regular grid from the deflated state.
///
/// Grid index `k` enumerates actuator 1 fastest.
pub fn map_workspace(model: &SeeModel, increments: usize) -> Result<PoseCloud> {
    if increments < 2 {
        return Err(SeeError::invalid("increments", "at least 2 required"));
    }
    let n = model.n();
    let levels = increments + 1;
    let total = levels
        .checked_pow(n as u32)
        .ok_or_else(|| SeeError::invalid("increments", "grid too large"))?;
    let vmax = model.geometry().max_volume;
    let results: Vec<Result<PoseSample>> = (0..total)
        .into_par_iter()
        .map(|index| {
            let mut rem = index;
            let volumes: Vec<f64> = (0..n)
                .map(|_| {
                    let level = rem % levels;
                    rem /= levels;
                    vmax * level as f64 / increments as f64
                })
                .collect();
            model
                .state_at(&volumes)
                .map(|s| PoseSample {
                    position: s.position,
                    tilt: s.tilt(),
                    volumes: volumes.clone(),
                })
                .map_err(|e| SeeError::GridPoint {
                    index,
                    volumes_ml: volumes.iter().map(|v| v * 1e6).collect(),
                    source: Box::new(e),
                })
        })
        .collect();
    let samples = results.into_iter().collect::<Result<Vec<_>>>()?;
    Ok(PoseCloud { samples })
}

/// Convex hull as a set of outward half-spaces `n·x ≤ c`.
#[derive(Debug, Clone)]
pub struct Hull {
    planes: Vec<(Vec<f64>, f64)>,
    centroid: Vec<f64>,
    volume: f64,
}

impl Hull {
    /// Builds the hull of 2-D or 3-D points.
    pub fn new(points: &[Vec<f64>]) -> Result<Self> {
        if points.is_empty() {
            return Err(SeeError::EmptyCloud);
        }
        let dim = points[0].len();
        if !(2..=3).contains(&dim) {
            return Err(SeeError::Hull(format!("unsupported dimension {dim}")));
        }
        // exact integer arithmetic; the float variant fails on near-coplanar facets
        let hull = chull::ConvexHullWrapper::try_new(points, None)
            .map_err(|e| SeeError::Hull(e.to_string()))?;
        let (raw_verts, idx) = hull.vertices_indices();
        // chull's facet order varies between runs; sort so the sums below are reproducible
        let mut order: Vec<usize> = (0..raw_verts.len()).collect();
        order.sort_by(|&a, &b| {
            raw_verts[a]
                .iter()
                .zip(&raw_verts[b])
                .map(|(x, y)| x.total_cmp(y))
                .find(|o| o.is_ne())
                .unwrap_or(std::cmp::Ordering::Equal)
        });
        let mut rank = vec![0; raw_verts.len()];
        for (r, &i) in order.iter().enumerate() {
            rank[i] = r;
        }
        let verts: Vec<Vec<f64>> = order.iter().map(|&i| raw_verts[i].clone()).collect();
        let mut facets: Vec<Vec<usize>> = idx
            .chunks(dim)
            .map(|f| {
                let mut f: Vec<usize> = f.iter().map(|&i| rank[i]).collect();
                let lead = (0..f.len()).min_by_key(|&k| f[k]).unwrap_or(0);
                f.rotate_left(lead);
                f
            })
            .collect();
        facets.sort();
        let interior: Vec<f64> = (0..dim)
            .map(|k| verts.iter().map(|v| v[k]).sum::<f64>() / verts.len() as f64)
            .collect();
        let mut planes = Vec::new();
        let mut volume = 0.0;
        let mut moment = vec![0.0; dim];
        for facet in &facets {
            let a = &verts[facet[0]];
            let normal = if dim == 3 {
                let b = &verts[facet[1]];
                let c = &verts[facet[2]];
                let u = Vec3::new(b[0] - a[0], b[1] - a[1], b[2] - a[2]);
                let v = Vec3::new(c[0] - a[0], c[1] - a[1], c[2] - a[2]);
                let n = u.cross(&v);
                vec![n.x, n.y, n.z]
            } else {
                let b = &verts[facet[1]];
                vec![b[1] - a[1], a[0] - b[0]]
            };
            let mut normal = normal;
            let mut offset = dot(&normal, a);
            if dot(&normal, &interior) > offset {
                normal.iter_mut().for_each(|x| *x = -*x);
                offset = -offset;
            }
            let norm = dot(&normal, &normal).sqrt();
            if norm == 0.0 {
                continue;
            }
            // signed simplex with the interior point as apex
            let height = offset / norm - dot(&normal, &interior) / norm;
            let base = if dim == 3 { 0.5 * norm } else { norm };
            let simplex = base * height / dim as f64;
            volume += simplex;
            for (k, m) in moment.iter_mut().enumerate() {
                let mean = facet.iter().map(|&i| verts[i][k]).sum::<f64>() + interior[k];
                *m += simplex * mean / (dim + 1) as f64;
            }
            planes.push((normal.iter().map(|x| x / norm).collect(), offset / norm));
        }
        if !(volume > 0.0) {
            return Err(SeeError::Hull("degenerate point set".into()));
        }
        let centroid = moment.iter().map(|m| m / volume).collect();
        Ok(Hull {
            planes,
            centroid,
            volume,
        })
    }

    pub fn contains(&self, p: &[f64]) -> bool {
        self.planes.iter().all(|(n, c)| dot(n, p) <= c + 1e-12)
    }

    /// Volume (area in 2-D) of the hull.
    pub fn volume(&self) -> f64 {
        self.volume
    }

    pub fn centroid(&self) -> &[f64] {
        &self.centroid
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Fractions of the translational and orientational requirement inside the reachable set.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct Coverage {
    pub translation: f64,
    pub orientation: f64,
    /// Requirement cylinder centre [m].
    pub centre: [f64; 3],
}

impl Coverage {
    /// Combined figure: the smaller of the two fractions.
    pub fn fraction(&self) -> f64 {
        self.translation.min(self.orientation)
    }
}

/// Voxel coverage of the requirement cylinder and disk sampling of the tilt cone.
///
/// The cylinder is axis-aligned with z and centred on the position hull's
/// centroid; the tilt cone is centred on zero tilt and uses only the x/y tilt
/// components.
pub fn coverage(cloud: &PoseCloud, req: &Requirement) -> Result<Coverage> {
    if cloud.is_empty() {
        return Err(SeeError::EmptyCloud);
    }
    req.validate()?;
    // hull in mm keeps chull's tolerances meaningful
    let positions: Vec<Vec<f64>> = cloud
        .samples
        .iter()
        .map(|s| s.position.iter().map(|x| x * 1e3).collect())
        .collect();
    let hull = Hull::new(&positions)?;
    let c = hull.centroid().to_vec();
    let translation = cylinder_fraction(
        &hull,
        &c,
        req.radial_translation * 1e3,
        req.axial_translation * 1e3,
        VOXEL_SIZE * 1e3,
    );

    let tilts: Vec<Vec<f64>> = cloud
        .samples
        .iter()
        .map(|s| vec![s.tilt.x.to_degrees(), s.tilt.y.to_degrees()])
        .collect();
    let orientation = match Hull::new(&tilts) {
        Ok(tilt_hull) => disk_fraction(&tilt_hull, req.tilt.to_degrees()),
        Err(_) if req.tilt == 0.0 => 1.0,
        Err(_) => 0.0,
    };
    Ok(Coverage {
        translation,
        orientation,
        centre: [c[0] * 1e-3, c[1] * 1e-3, c[2] * 1e-3],
    })
}

/// Fraction of voxel centres of a z-aligned cylinder lying inside `hull`.
pub fn cylinder_fraction(hull: &Hull, centre: &[f64], radius: f64, height: f64, voxel: f64) -> f64 {
    if radius <= 0.0 || height <= 0.0 {
        return if hull.contains(centre) { 1.0 } else { 0.0 };
    }
    let nr = (radius / voxel).ceil() as i64;
    let nz = ((0.5 * height) / voxel).ceil() as i64;
    let (mut inside, mut total) = (0usize, 0usize);
    for i in -nr..nr {
        let x = (i as f64 + 0.5) * voxel;
        for j in -nr..nr {
            let y = (j as f64 + 0.5) * voxel;
            if x * x + y * y > radius * radius {
                continue;
            }
            for k in -nz..nz {
                let z = (k as f64 + 0.5) * voxel;
                if z.abs() > 0.5 * height {
                    continue;
                }
                total += 1;
                if hull.contains(&[centre[0] + x, centre[1] + y, centre[2] + z]) {
                    inside += 1;
                }
            }
        }
    }
    if total == 0 {
        return if hull.contains(centre) { 1.0 } else { 0.0 };
    }
    inside as f64 / total as f64
}

fn disk_fraction(hull: &Hull, radius: f64) -> f64 {
    if radius <= 0.0 {
        return if hull.contains(&[0.0, 0.0]) { 1.0 } else { 0.0 };
    }
    let cells = 100i64;
    let h = radius / cells as f64;
    let (mut inside, mut total) = (0usize, 0usize);
    for i in -cells..cells {
        for j in -cells..cells {
            let (x, y) = ((i as f64 + 0.5) * h, (j as f64 + 0.5) * h);
            if x * x + y * y > radius * radius {
                continue;
            }
            total += 1;
            if hull.contains(&[x, y]) {
                inside += 1;
            }
        }
    }
    inside as f64 / total as f64
}

/// Spread of repeated measurements of one configuration.
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct ConfigurationStats {
    pub samples: usize,
    /// Mean Euclidean position error from the configuration mean [m].
    pub position_mean: f64,
    pub position_std: f64,
    /// Mean tilt error from the configuration mean [rad].
    pub orientation_mean: f64,
    pub orientation_std: f64,
    /// Per-axis standard deviation of position [m].
    pub axis_std: [f64; 3],
}

#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct RepeatabilityReport {
    pub configurations: Vec<ConfigurationStats>,
    /// χ² normal-fit p-values of the pooled per-axis position deviations;
    /// `None` below 20 pooled deviations.
    pub normality_p: [Option<f64>; 3],
}

/// Repeatability of grouped samples around their per-group mean.
pub fn repeatability_stats(groups: &[Vec<PoseSample>]) -> Result<RepeatabilityReport> {
    let mut configurations = Vec::with_capacity(groups.len());
    let mut pooled: [Vec<f64>; 3] = Default::default();
    for (index, group) in groups.iter().enumerate() {
        if group.len() < 2 {
            return Err(SeeError::InsufficientSamples {
                index,
                found: group.len(),
                required: 2,
            });
        }
        let n = group.len() as f64;
        let mean_p = group.iter().fold(Vec3::zeros(), |a, s| a + s.position) / n;
        let mean_t = group.iter().fold(Vec3::zeros(), |a, s| a + s.tilt) / n;
        let pos_err: Vec<f64> = group.iter().map(|s| (s.position - mean_p).norm()).collect();
        let tilt_err: Vec<f64> = group.iter().map(|s| (s.tilt - mean_t).norm()).collect();
        let mut axis_std = [0.0; 3];
        for (k, sd) in axis_std.iter_mut().enumerate() {
            let dev: Vec<f64> = group.iter().map(|s| s.position[k] - mean_p[k]).collect();
            *sd = (dev.iter().map(|d| d * d).sum::<f64>() / (n - 1.0)).sqrt();
            pooled[k].extend(dev);
        }
        let (position_mean, position_std) = mean_std(&pos_err);
        let (orientation_mean, orientation_std) = mean_std(&tilt_err);
        configurations.push(ConfigurationStats {
            samples: group.len(),
            position_mean,
            position_std,
            orientation_mean,
            orientation_std,
            axis_std,
        });
    }
    let normality_p = pooled.map(|d| chi_square_normality(&d));
    Ok(RepeatabilityReport {
        configurations,
        normality_p,
    })
}

fn mean_std(x: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let var = if x.len() > 1 {
        x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    (mean, var.sqrt())
}

/// χ² goodness-of-fit of `x` against a normal with fitted mean and σ,
/// using equiprobable bins.
pub fn chi_square_normality(x: &[f64]) -> Option<f64> {
    if x.len() < 20 {
        return None;
    }
    let (mean, sd) = mean_std(x);
    if !(sd > 0.0) {
        return None;
    }
    let bins = (x.len() / 5).clamp(4, 20);
    let normal = Normal::new(0.0, 1.0).ok()?;
    let mut counts = vec![0usize; bins];
    for v in x {
        let u = normal.cdf((v - mean) / sd);
        let b = ((u * bins as f64) as usize).min(bins - 1);
        counts[b] += 1;
    }
    let expected = x.len() as f64 / bins as f64;
    let stat: f64 = counts
        .iter()
        .map(|&o| (o as f64 - expected).powi(2) / expected)
        .sum();
    let dof = (bins - 3) as f64;
    let chi = ChiSquared::new(dof).ok()?;
    Some(1.0 - chi.cdf(stat))
}
