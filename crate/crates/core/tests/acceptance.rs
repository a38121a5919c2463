//! Acceptance suite: one PASS/FAIL line per criterion, non-zero exit on any FAIL.

mod common;

use std::time::Instant;

use nalgebra::{DVector, Vector6};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use seesim::config::{EnvironmentConfig, RobotConfig};
use seesim::environment::{
    clamp_contact_force, indentation_sweep, serial_stiffness, visceral_stiffness, IndentationOptions, TissueParams,
};
use seesim::mechanics::{rot_z, Vec3, Wrench};
use seesim::model::{solve_increment, SeeGeometry, SeeModel};
use seesim::scenario::{parse_scenario, run_scenario, stiffness_sweep, triangle_runs, ClosedLoopParams};
use seesim::workspace::{coverage, force_deflection, map_workspace, KminEstimate, Requirement};
use seesim::SeeError;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn model() -> SeeModel {
    SeeModel::new(SeeGeometry::default()).unwrap()
}

const VMAX: f64 = 3.75e-6;

fn equilibrium() -> Outcome {
    let m = model();
    let a = m.channel_area();
    let mut rng = ChaCha8Rng::seed_from_u64(1000);
    let start = Instant::now();
    let (mut worst_res, mut worst_con) = (0.0f64, 0.0f64);
    let mut count = 0;
    for _ in 0..20 {
        let mut s = m.state_at(&common::random_volumes(&mut rng, &m)).unwrap();
        for _ in 0..50 {
            let dv: Vec<f64> = s
                .volumes
                .iter()
                .map(|v| (v + rng.random_range(-1e-8..1e-8)).clamp(0.0, VMAX) - v)
                .collect();
            let dw = Wrench::new(
                Vec3::from_fn(|_, _| rng.random_range(-0.05..0.05)) - s.applied.force * 0.1,
                Vec3::from_fn(|_, _| rng.random_range(-1e-3..1e-3)) - s.applied.moment * 0.1,
            );
            let step = match m.solve_step(&s, &dv, &dw, None) {
                Ok(st) => st,
                Err(e) => return outcome(false, format!("solve failed: {e}")),
            };
            worst_res = worst_res.max(step.relative_residual);
            let dx = step.displacement.to_vector();
            let lhs: DVector<f64> = m.jacobian_v(&s).transpose() * dx;
            let rhs = DVector::from_iterator(3, dv.iter().map(|v| v / a));
            let scale = rhs.norm().max(dx.norm()).max(f64::MIN_POSITIVE);
            worst_con = worst_con.max((lhs - rhs).norm() / scale);
            m.apply_step(&mut s, &step).unwrap();
            count += 1;
        }
    }
    let secs = start.elapsed().as_secs_f64();
    outcome(
        worst_res < 1e-10 && worst_con < 1e-10 && secs < 10.0,
        format!("{count} increments, max residual {worst_res:.2e}, max constraint error {worst_con:.2e}, {secs:.2} s"),
    )
}

fn symmetry() -> Outcome {
    let m = model();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let r = rot_z(2.0 * std::f64::consts::PI / 3.0);
    let (mut lateral, mut tilt, mut perm) = (0.0f64, 0.0f64, 0.0f64);
    for _ in 0..50 {
        let v = rng.random_range(0.0..VMAX);
        let s = m.state_at(&[v; 3]).unwrap();
        lateral = lateral.max(s.position.x.abs()).max(s.position.y.abs());
        tilt = tilt.max(s.tilt().norm());
        let w = common::random_volumes(&mut rng, &m);
        let a = m.state_at(&w).unwrap();
        let b = m.state_at(&[w[2], w[0], w[1]]).unwrap();
        perm = perm
            .max((r * a.position - b.position).norm())
            .max((r * a.tilt() - b.tilt()).norm());
    }
    outcome(
        lateral < 1e-9 && tilt < 1e-9 && perm < 1e-9,
        format!("max |x|,|y| {lateral:.1e} m, tilt {tilt:.1e} rad, permutation mismatch {perm:.1e}"),
    )
}

fn oracle() -> Outcome {
    let m = model();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let s = m.state_at(&common::random_volumes(&mut rng, &m)).unwrap();
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
        let want = common::gauss_jordan_inverse(&sys.matrix) * rhs;
        let mut got = DVector::zeros(9);
        got.rows_mut(0, 6).copy_from(&sol.displacement.to_vector());
        got.rows_mut(6, 3).copy_from(&sol.reaction);
        // Displacement and reaction blocks differ in scale by orders of magnitude.
        let e_dx = (got.rows(0, 6) - want.rows(0, 6)).amax() / want.rows(0, 6).amax();
        let e_tau = (got.rows(6, 3) - want.rows(6, 3)).amax() / want.rows(6, 3).amax();
        worst = worst.max(e_dx).max(e_tau);
    }
    outcome(worst < 1e-9, format!("100 systems, max relative deviation {worst:.2e}"))
}

fn stiffness() -> Outcome {
    let m = model();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut worst = 0.0f64;
    for _ in 0..20 {
        let s = m.state_at(&common::random_volumes(&mut rng, &m)).unwrap();
        let d = Vec3::from_fn(|_, _| rng.random_range(-1.0..1.0)).normalize();
        let k = match m.effective_tip_stiffness(&s, &d) {
            Ok(k) => k,
            Err(e) => return outcome(false, format!("Schur check failed: {e}")),
        };
        let inv = common::gauss_jordan_inverse(&m.augmented(&s).unwrap().matrix);
        let d6 = Vector6::new(d.x, d.y, d.z, 0.0, 0.0, 0.0);
        let c = inv.view((0, 0), (6, 6));
        let schur = 1.0 / (d6.transpose() * c * d6)[(0, 0)];
        worst = worst.max((k - schur).abs() / schur);
    }
    let schur_ok = worst < 1e-6;
    let levels = [0.25, 0.5, 0.75, 1.0];
    let sweep = stiffness_sweep(&m, &levels).unwrap();
    let axial: Option<Vec<f64>> = sweep.iter().map(|p| p.axial).collect();
    let vented: Vec<String> = sweep.iter().map(|p| format!("{:.2}", p.axial_vented * 1e-3)).collect();
    let (axial_ok, axial_detail) = match axial {
        Some(k) => (
            k.windows(2).all(|w| w[1] < w[0]),
            format!("axial {:?} N/mm", k.iter().map(|x| x * 1e-3).collect::<Vec<_>>()),
        ),
        None => (
            false,
            format!(
                "axial stiffness unbounded at fixed volumes (direction locked by the volume constraints); \
                 vented diagnostic {} N/mm at 25..100%",
                vented.join(" > ")
            ),
        ),
    };
    let probe = m.state_at(&[0.5 * VMAX; 3]).unwrap();
    let locked = matches!(m.effective_tip_stiffness(&probe, &Vec3::z()), Err(SeeError::LockedDirection));
    outcome(
        schur_ok && axial_ok,
        format!(
            "Schur oracle at 20 states max rel {worst:.1e} ({}); monotone axial decrease: {} ({axial_detail}{})",
            if schur_ok { "ok" } else { "FAIL" },
            if axial_ok { "ok" } else { "FAIL" },
            if locked { "" } else { "; lock not reproduced" },
        ),
    )
}

fn extension() -> Outcome {
    let m = model();
    let start = Instant::now();
    let s = m.state_at(&[VMAX; 3]).unwrap();
    let secs = start.elapsed().as_secs_f64();
    let z = s.position.z * 1e3;
    outcome(
        (20.0..=27.0).contains(&z) && secs < 1.0,
        format!("z = {z:.3} mm in {secs:.3} s"),
    )
}

fn requirement() -> Outcome {
    let fd = force_deflection(&KminEstimate::default(), &Requirement::default()).unwrap();
    let (a, t) = (fd.axial * 1e3, fd.transversal * 1e3);
    let (ha, hr) = (fd.adjusted.axial_translation * 1e3, fd.adjusted.radial_translation * 1e3);
    let ok = (a - 0.56).abs() <= 0.005 && (t - 2.93).abs() <= 0.05 && (ha - 5.78).abs() <= 0.005 && (hr - 10.68).abs() <= 0.005;
    outcome(
        ok,
        format!("delta_f = ({a:.4}, {t:.4}) mm, adjusted = ({ha:.4}, {hr:.4}) mm"),
    )
}

fn coverage_check() -> Outcome {
    let m = model();
    let cloud = map_workspace(&m, 10).unwrap();
    let req = Requirement::default();
    let fd = force_deflection(&KminEstimate::default(), &req).unwrap();
    let unloaded = coverage(&cloud, &req).unwrap();
    let loaded = coverage(&cloud, &fd.adjusted).unwrap();
    let (u, l) = (unloaded.fraction(), loaded.fraction());
    outcome(
        (u - 1.0).abs() < 1e-12 && (0.90..=1.00).contains(&l),
        format!(
            "unloaded {u:.4} (translation {:.4}, orientation {:.4}), loaded {l:.4} (translation {:.4}, orientation {:.4})",
            unloaded.translation, unloaded.orientation, loaded.translation, loaded.orientation
        ),
    )
}

fn closed_loop() -> Outcome {
    let mut cfg = RobotConfig::default();
    let mut p = ClosedLoopParams::from_config(&cfg);
    p.noise_sigma = 0.0;
    let timed = |cfg: &RobotConfig| {
        let start = Instant::now();
        let r = triangle_runs(cfg, &p).map_err(|(_, _, e)| e);
        (r, start.elapsed().as_secs_f64())
    };
    let (free, t_free) = timed(&cfg);
    cfg.environment = EnvironmentConfig::Patch {
        normal_stiffness: 2e3,
        preload: 5.0,
        friction: 0.0,
    };
    let (loaded, t_loaded) = timed(&cfg);
    let (free, loaded) = match (free, loaded) {
        (Ok(f), Ok(l)) => (f[0].summary.euclidean_mean, l[0].summary.euclidean_mean),
        (Err(e), _) | (_, Err(e)) => return outcome(false, format!("run failed: {e}")),
    };
    let ratio = loaded / free;
    outcome(
        free <= 0.5 && ratio <= 1.5 && t_free < 30.0 && t_loaded < 30.0,
        format!(
            "unloaded {free:.3} mm ({t_free:.1} s), loaded 5 N preload {loaded:.3} mm ({t_loaded:.1} s), ratio {ratio:.3}"
        ),
    )
}

fn safety() -> Outcome {
    let k = serial_stiffness(39.37e3, 1.51e3).unwrap() * 1e-3;
    let f = clamp_contact_force(39.37e3, 10e-3).unwrap();
    let kv = visceral_stiffness(&TissueParams::default()).unwrap();
    outcome(
        (k - 1.454).abs() <= 0.001 && (f - 393.7).abs() <= 1e-9 * 393.7 && (kv - 264.5).abs() <= 0.1,
        format!("K_comb {k:.4} N/mm, rigid clamp force {f} N, K_vis formula {kv:.2} N/m"),
    )
}

fn determinism() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let docs = [
        ("closed_loop", "kind = \"closed_loop\"\n[robot.noise]\nsigma = \"0.2 mm\"\nseed = 11\n[params]\nsettle_time = \"5 s\"\ntilt = \"19 deg\"\n"),
        ("workspace_map", "kind = \"workspace_map\"\n[params]\nincrements = 6\n"),
        ("stiffness_sweep", "kind = \"stiffness_sweep\"\n"),
        ("open_loop_teleop", "kind = \"open_loop_teleop\"\n[params]\nduration = \"3 s\"\ncommands = [{at = \"0 s\", vz = \"2 mm/s\"}, {at = \"1 s\", wx = \"2 deg/s\"}]\n"),
        ("indentation_sweep", "kind = \"indentation_sweep\"\n"),
        ("safety_report", "kind = \"safety_report\"\n"),
    ];
    let mut compared = 0;
    for (name, text) in docs {
        let s = parse_scenario(text, dir.path(), name).unwrap();
        let a = dir.path().join(format!("{name}-a"));
        let b = dir.path().join(format!("{name}-b"));
        let (oa, _) = match (run_scenario(&s, &a), run_scenario(&s, &b)) {
            (Ok(x), Ok(y)) => (x, y),
            (Err(e), _) | (_, Err(e)) => return outcome(false, format!("{name} failed: {e}")),
        };
        for f in &oa.files {
            let rel = f.strip_prefix(&a).unwrap();
            if std::fs::read(f).unwrap() != std::fs::read(b.join(rel)).unwrap() {
                return outcome(false, format!("{name}: {} differs", rel.display()));
            }
            compared += 1;
        }
    }
    outcome(true, format!("6 scenario kinds rerun, {compared} artifacts bit-identical"))
}

fn indentation() -> Outcome {
    let r = indentation_sweep(&model(), &IndentationOptions::default()).unwrap();
    let deepest = r.points.last().unwrap();
    outcome(
        r.displacement_slope > r.tilt_slope,
        format!(
            "displacement {:.3} %/N vs tilt {:.3} %/N (deepest: {:.1}% / {:.1}%)",
            r.displacement_slope, r.tilt_slope, deepest.displacement_pct, deepest.tilt_pct
        ),
    )
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 11] = [
        ("equilibrium-constraint", equilibrium),
        ("symmetry", symmetry),
        ("oracle-equivalence", oracle),
        ("stiffness", stiffness),
        ("extension-magnitude", extension),
        ("requirement-arithmetic", requirement),
        ("coverage", coverage_check),
        ("closed-loop-tracking", closed_loop),
        ("safety-arithmetic", safety),
        ("determinism", determinism),
        ("indentation-ordering", indentation),
    ];
    let mut failed = 0;
    for (name, check) in criteria {
        let o = check();
        if !o.pass {
            failed += 1;
        }
        println!("{} {name}: {}", if o.pass { "PASS" } else { "FAIL" }, o.detail);
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
