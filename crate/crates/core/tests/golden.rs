//! Full-length episode under a scripted action sequence, checked against a
//! recorded trajectory. Set `DOLLY_BLESS=1` to rewrite the recording.

use std::path::PathBuf;

use dolly_core::simenv::{ActionVector, EnvConfig, Environment, SimEnv, StartPosition, WorldState};

const SEED: u64 = 42;
const EVERY: usize = 100;
const TOL: f64 = 1e-9;

fn golden_path() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/data/golden_trajectory.csv")
}

fn cfg() -> EnvConfig {
    EnvConfig {
        start_position: StartPosition::Left,
        ..EnvConfig::default()
    }
}

fn scripted(t: usize) -> [f64; 4] {
    let t = t as f64;
    [
        0.6 * (t / 40.0).sin(),
        0.5 * (t / 55.0).cos(),
        0.3 * (t / 70.0).sin(),
        0.2 * (t / 90.0).cos(),
    ]
}

fn row(w: &WorldState, area: f64) -> [f64; 7] {
    [w.t as f64, w.robot_x, w.robot_y, w.robot_heading, w.pan, w.tilt, area]
}

fn run() -> Vec<[f64; 7]> {
    let mut env = SimEnv::new(cfg()).unwrap();
    env.reset(SEED).unwrap();
    let mut rows = vec![row(env.world(), env.metrics().area_frac)];
    let mut t = 0;
    loop {
        let out = env.step(&ActionVector::full(scripted(t)).unwrap()).unwrap();
        t += 1;
        if t % EVERY == 0 || out.done {
            rows.push(row(env.world(), out.metrics.area_frac));
        }
        if out.done {
            break;
        }
    }
    rows
}

#[test]
fn first_steps_match_hand_integration() {
    let c = cfg();
    let mut env = SimEnv::new(c.clone()).unwrap();
    env.reset(SEED).unwrap();
    let mut w = *env.world();
    for t in 0..3 {
        let a = scripted(t);
        let (v, om) = (a[0] * c.max_speed, a[1] * c.max_turn_rate);
        w.robot_x += v * w.robot_heading.cos() * c.dt;
        w.robot_y += v * w.robot_heading.sin() * c.dt;
        w.robot_heading += om * c.dt;
        w.pan += a[2] * c.max_pan_rate * c.dt;
        w.tilt += a[3] * c.max_tilt_rate * c.dt;
        env.step(&ActionVector::full(a).unwrap()).unwrap();
        let g = env.world();
        for (x, y) in [
            (g.robot_x, w.robot_x),
            (g.robot_y, w.robot_y),
            (g.robot_heading, w.robot_heading),
            (g.pan, w.pan),
            (g.tilt, w.tilt),
        ] {
            assert!((x - y).abs() < 1e-12, "step {t}: {x} vs {y}");
        }
    }
}

#[test]
fn full_episode_matches_recording() {
    let rows = run();
    assert_eq!(rows.last().unwrap()[0], 1500.0);
    let path = golden_path();
    if std::env::var_os("DOLLY_BLESS").is_some() {
        let mut w = csv::Writer::from_path(&path).unwrap();
        w.write_record(["t", "robot_x", "robot_y", "robot_heading", "pan", "tilt", "area_frac"]).unwrap();
        for r in &rows {
            w.write_record(r.iter().map(|v| format!("{v:?}"))).unwrap();
        }
        w.flush().unwrap();
    }
    let mut rdr = csv::Reader::from_path(&path).unwrap();
    let recorded: Vec<Vec<f64>> = rdr
        .records()
        .map(|r| r.unwrap().iter().map(|v| v.parse().unwrap()).collect())
        .collect();
    assert_eq!(recorded.len(), rows.len());
    for (got, want) in rows.iter().zip(&recorded) {
        for (g, w) in got.iter().zip(want) {
            assert!((g - w).abs() <= TOL, "t={}: {got:?} vs {want:?}", got[0]);
        }
    }
}
