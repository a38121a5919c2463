use std::fs;
use std::path::Path;

use seesim::config::{load_config, RobotConfig};
use seesim::control::summarize_csv;
use seesim::scenario::{load_scenario, run_scenario, run_scenario_file};
use seesim::session::{replay, InboundRecord, Session, StateFrame};

fn write(dir: &Path, name: &str, text: &str) -> std::path::PathBuf {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p
}

#[test]
fn config_file_errors_name_file_and_field() {
    let dir = tempfile::tempdir().unwrap();
    let p = write(dir.path(), "robot.toml", "[geometry]\ntilt_angle = \"15 N\"\n");
    let err = load_config(&p).unwrap_err().to_string();
    assert!(err.contains("robot.toml") && err.contains("geometry.tilt_angle"), "{err}");
    assert!(load_config(dir.path().join("missing.toml")).is_err());
}

#[test]
fn scenario_reads_config_relative_to_itself() {
    let dir = tempfile::tempdir().unwrap();
    write(dir.path(), "robot.toml", "[sfa]\nlength = \"50 mm\"\n");
    let s = write(dir.path(), "s.toml", "kind = \"safety_report\"\nconfig = \"robot.toml\"\n");
    let s = load_scenario(s).unwrap();
    assert!((s.config.geometry.sfa.length - 50e-3).abs() < 1e-15);
}

#[test]
fn workspace_map_writes_grid_and_coverage() {
    let dir = tempfile::tempdir().unwrap();
    let s = write(dir.path(), "ws.toml", "kind = \"workspace_map\"\noutput = \"out\"\n");
    let o = run_scenario_file(&s, None).unwrap();
    let csv = fs::read_to_string(dir.path().join("out/workspace.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1332);
    assert!(csv.starts_with("V1,V2,V3,x,y,z,rx,ry,rz"));
    let r = &o.summary["result"];
    assert_eq!(r["poses"].as_u64(), Some(1331));
    assert_eq!(r["coverage_unloaded"]["fraction"].as_f64(), Some(1.0));
    assert!(r["coverage_loaded"]["fraction"].as_f64().unwrap() >= 0.9);
}

const TRIANGLE: &str = "kind = \"closed_loop\"\n\
[robot.noise]\nsigma = \"0.2 mm\"\nseed = 3\n\
[params]\ntilt = \"19 deg\"\nsettle_time = \"5 s\"\nrepeats = 2\n";

#[test]
fn closed_loop_is_deterministic_and_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let s = write(dir.path(), "tri.toml", TRIANGLE);
    let scenario = load_scenario(&s).unwrap();
    let a = run_scenario(&scenario, &dir.path().join("a")).unwrap();
    let b = run_scenario(&scenario, &dir.path().join("b")).unwrap();
    for name in ["runlog-1.csv", "runlog-2.csv", "summary.json"] {
        let x = fs::read(dir.path().join("a").join(name)).unwrap();
        let y = fs::read(dir.path().join("b").join(name)).unwrap();
        assert!(x == y, "{name} differs between reruns");
    }
    let run1 = fs::read(dir.path().join("a/runlog-1.csv")).unwrap();
    let run2 = fs::read(dir.path().join("a/runlog-2.csv")).unwrap();
    assert_ne!(run1, run2, "repeats use different seeds");
    let back = summarize_csv(run1.as_slice()).unwrap();
    let recorded = &a.summary["result"]["runs"][0];
    assert_eq!(recorded["euclidean_mean_mm"].as_f64(), Some(back.euclidean_mean));
    assert_eq!(recorded["max_abs_mm"][2].as_f64(), Some(back.max[2]));
    assert_eq!(a.summary, b.summary);
}

fn joystick(vz: f64, wx: f64, t: f64) -> String {
    format!(r#"{{"v":1,"type":"joystick","vz":{vz},"wx":{wx},"wy":0,"t":{t}}}"#)
}

fn frames(records: &[InboundRecord]) -> Vec<StateFrame> {
    let mut s = Session::new(&RobotConfig::default(), 0.0).unwrap();
    replay(&mut s, records)
        .iter()
        .filter_map(|f| serde_json::from_str(f).ok())
        .collect()
}

/// Commands resent at 15 Hz, like a steady client.
fn stream(duration_ticks: u64, cmd: impl Fn(f64) -> (f64, f64)) -> Vec<InboundRecord> {
    let mut recs: Vec<InboundRecord> = (0..duration_ticks)
        .step_by(2)
        .map(|tick| {
            let t = tick as f64 / 30.0;
            let (vz, wx) = cmd(t);
            InboundRecord {
                tick,
                msg: Some(joystick(vz, wx, t)),
                end: false,
            }
        })
        .collect();
    recs.push(InboundRecord {
        tick: duration_ticks,
        msg: None,
        end: true,
    });
    recs
}

#[test]
fn idle_session_stays_deflated() {
    let f = frames(&[InboundRecord {
        tick: 60,
        msg: None,
        end: true,
    }]);
    assert_eq!(f.len(), 60);
    assert!(f.iter().all(|x| x.position == [0.0; 3] && x.volumes == vec![0.0; 3]));
}

#[test]
fn constant_rise_is_monotone_until_saturation() {
    // 2 mm/s at the default pump limit needs about ten seconds to fill.
    let f = frames(&stream(30 * 20, |_| (2.0, 0.0)));
    let first_sat = f.iter().position(|x| x.saturated.iter().any(|s| *s)).expect("saturates");
    for w in f[..first_sat].windows(2) {
        assert!(w[1].position[2] > w[0].position[2]);
    }
    let last = f.last().unwrap();
    assert!(last.volumes.iter().all(|v| (v - 3.75).abs() < 1e-9), "{:?}", last.volumes);
    assert!(last.saturated.iter().all(|s| *s));
}

#[test]
fn alternating_tilt_oscillates_with_bounded_amplitude() {
    let mut recs = vec![];
    // Rise to mid-stroke first so the tilt has room both ways.
    recs.extend(stream(30 * 4, |_| (2.0, 0.0)).into_iter().filter(|r| !r.end));
    let offset = 30 * 4;
    let tail = stream(30 * 6, |t| (0.0, if (t % 1.0) < 0.5 { 2.0 } else { -2.0 }));
    recs.extend(tail.into_iter().map(|mut r| {
        r.tick += offset;
        if let Some(m) = &r.msg {
            let t = r.tick as f64 / 30.0;
            let v: serde_json::Value = serde_json::from_str(m).unwrap();
            r.msg = Some(joystick(0.0, v["wx"].as_f64().unwrap(), t));
        }
        r
    }));
    let f = frames(&recs);
    let rx: Vec<f64> = f[offset as usize..].iter().map(|x| x.tilt[0]).collect();
    let max = rx.iter().copied().fold(f64::MIN, f64::max);
    let min = rx.iter().copied().fold(f64::MAX, f64::min);
    // The transpose map under-reaches the commanded 1 deg swing but must stay bounded.
    assert!(max - min > 0.05 && max - min < 1.5, "range {min}..{max}");
    // Count sign changes of the tilt rate: two per period over six periods.
    let rates: Vec<f64> = rx.windows(2).map(|w| w[1] - w[0]).filter(|d| d.abs() > 1e-9).collect();
    let flips = rates.windows(2).filter(|w| w[0].signum() != w[1].signum()).count();
    assert!(flips >= 10, "{flips} flips");
}

#[test]
fn teleop_scenario_replays_recorded_log() {
    let dir = tempfile::tempdir().unwrap();
    let recs = stream(90, |t| (1.0, if t < 1.0 { 1.0 } else { -1.0 }));
    let log: String = recs.iter().map(|r| serde_json::to_string(r).unwrap() + "\n").collect();
    write(dir.path(), "in.jsonl", &log);
    let s = write(
        dir.path(),
        "replay.toml",
        "kind = \"open_loop_teleop\"\noutput = \"out\"\n[params]\ninbound_log = \"in.jsonl\"\n",
    );
    run_scenario_file(&s, None).unwrap();
    let text = fs::read_to_string(dir.path().join("out/frames.jsonl")).unwrap();
    let mut session = Session::new(&RobotConfig::default(), 0.0).unwrap();
    let expected: String = replay(&mut session, &recs).iter().map(|f| f.clone() + "\n").collect();
    assert_eq!(text, expected);
}

#[test]
fn indentation_scenario_orders_slopes() {
    let dir = tempfile::tempdir().unwrap();
    let s = write(dir.path(), "ind.toml", "kind = \"indentation_sweep\"\noutput = \"o\"\n");
    let o = run_scenario_file(&s, None).unwrap();
    assert_eq!(o.summary["result"]["displacement_attenuates_faster"], serde_json::Value::Bool(true));
    let csv = fs::read_to_string(dir.path().join("o/indentation.csv")).unwrap();
    assert_eq!(csv.lines().count(), 7);
}

#[test]
fn solver_failure_keeps_partial_output() {
    let dir = tempfile::tempdir().unwrap();
    let s = write(
        dir.path(),
        "f.toml",
        "kind = \"closed_loop\"\noutput = \"o\"\n[robot.environment]\nkind = \"constant_wrench\"\nforce = [\"1e6 N\", \"0 N\", \"0 N\"]\n[params]\nsettle_time = \"1 s\"\n",
    );
    let err = run_scenario_file(&s, None).unwrap_err();
    assert!(!err.error.is_input_error());
    let summary = fs::read_to_string(dir.path().join("o/summary.json")).unwrap();
    assert!(summary.contains("\"failed\""));
}
