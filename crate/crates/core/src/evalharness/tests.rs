use proptest::prelude::*;

use super::*;
use crate::baseline::{PDGains, PdController};
use crate::rewards::RewardConfig;
use crate::simenv::EnvConfig;

fn env() -> EnvConfig {
    EnvConfig {
        episode_len: 60,
        ..EnvConfig::default()
    }
}

fn task(kind: RewardKind) -> EvalTask {
    EvalTask::new(kind, RewardConfig::default().weights(kind, &env()).unwrap())
}

fn spec(n: usize, starts: StartScheme) -> TrialSpec {
    TrialSpec {
        env: env(),
        perturbation: None,
        task: task(RewardKind::Combined),
        n,
        starts,
        base_seed: 100,
        record_trace: true,
        jobs: 1,
    }
}

fn fake(values: &[f64]) -> Vec<TrialResult> {
    values
        .iter()
        .enumerate()
        .map(|(i, &v)| TrialResult {
            policy: "p".into(),
            trial: i,
            start: StartPosition::FIXED[i % 3],
            seed: i as u64,
            cumulative_reward: v,
            final_area_pct: v,
            mean_area_pct: v,
            final_centroid_x: v,
            final_centroid_y: v,
            steps: 1,
            trace: Vec::new(),
        })
        .collect()
}

#[test]
fn repeated_trial_is_identical() {
    let pd = PdController::new(PDGains::default(), env()).unwrap();
    let a = run_trials(&pd, &spec(1, StartScheme::Mixed)).unwrap();
    let b = run_trials(&pd, &spec(1, StartScheme::Mixed)).unwrap();
    assert_eq!(a, b);
    assert_eq!(a[0].trace.len(), 60);
    assert_eq!(a[0].seed, 100);
}

#[test]
fn zero_policy_accumulates_constant_reward() {
    let zero = ZeroPolicy { active: [true; 4] };
    let s = spec(3, StartScheme::Fixed(StartPosition::Left));
    for r in run_trials(&zero, &s).unwrap() {
        let first = r.trace[0].reward.total;
        assert!(first < 0.0);
        assert!(r.trace.iter().all(|row| row.reward.total == first));
        assert!((r.cumulative_reward - 60.0 * first).abs() < 1e-9);
    }
}

#[test]
fn start_schemes_assign_positions() {
    let count = |scheme: StartScheme, n: usize| {
        let mut c = [0usize; 3];
        for i in 0..n {
            let p = scheme.position(i);
            c[StartPosition::FIXED.iter().position(|q| *q == p).unwrap()] += 1;
        }
        c
    };
    assert_eq!(count(StartScheme::Mixed, 30), [10, 10, 10]);
    assert_eq!(count(StartScheme::PerPosition(10), 30), [10, 10, 10]);
    let grouped: Vec<_> = (0..30).map(|i| StartScheme::PerPosition(10).position(i)).collect();
    assert!(grouped[..10].iter().all(|p| *p == StartPosition::Left));
    assert!(grouped[20..].iter().all(|p| *p == StartPosition::Centre));
    assert_eq!("per-position-10".parse::<StartScheme>().unwrap(), StartScheme::PerPosition(10));
    assert_eq!("mixed".parse::<StartScheme>().unwrap(), StartScheme::Mixed);
    assert!("per-position-0".parse::<StartScheme>().is_err());
}

#[test]
fn parallel_fan_matches_serial() {
    let pd = PdController::new(PDGains::default(), env()).unwrap();
    let serial = run_trials(&pd, &spec(7, StartScheme::Mixed)).unwrap();
    let mut par = spec(7, StartScheme::Mixed);
    par.jobs = 3;
    assert_eq!(run_trials(&pd, &par).unwrap(), serial);
}

#[test]
fn zero_trials_rejected() {
    let zero = ZeroPolicy { active: [true; 4] };
    assert!(matches!(run_trials(&zero, &spec(0, StartScheme::Mixed)), Err(Error::Config(_))));
}

#[test]
fn summary_examples() {
    let s = summarize_values(&[1.0, 2.0, 3.0, 4.0, 5.0]).unwrap();
    assert_eq!((s.median, s.q1, s.q3, s.iqr), (3.0, 2.0, 4.0, 2.0));
    assert_eq!((s.min, s.max, s.mean), (1.0, 5.0, 3.0));
    assert_eq!(summarize_values(&[-120.0, -160.0]).unwrap().mean, -140.0);
    assert_eq!(summarize_values(&[7.0; 4]).unwrap().iqr, 0.0);
    assert!(summarize_values(&[]).is_err());
    let q = summarize_values(&[1.0, 2.0, 3.0, 4.0]).unwrap();
    assert_eq!((q.q1, q.median, q.q3), (1.75, 2.5, 3.25));
}

#[test]
fn pearson_examples() {
    // x = (1, 2, 3), y = (1, 3, 2): sxy = 1, sxx = syy = 2, r = 0.5
    let r = pearson(&[1.0, 2.0, 3.0], &[1.0, 3.0, 2.0]).unwrap().value().unwrap();
    assert!((r - 0.5).abs() < 1e-12);
    assert_eq!(pearson(&[1.0, 2.0, 3.0], &[4.0, 4.0, 4.0]).unwrap(), Correlation::Undefined);
    assert!(pearson(&[1.0], &[1.0]).is_err());
    assert!(pearson(&[1.0, 2.0], &[1.0]).is_err());
    // Spearman of a monotone but non-linear relation is exactly 1.
    let rho = spearman(&[1.0, 2.0, 3.0, 4.0], &[1.0, 8.0, 27.0, 64.0]).unwrap().value().unwrap();
    assert!((rho - 1.0).abs() < 1e-12);
}

#[test]
fn srcc_of_identical_runs_is_one() {
    let runs = fake(&[1.0, 4.0, 2.0, 8.0, 3.0, 9.0, 5.0, 1.5, 7.0]);
    let report = srcc(&runs, &runs, Estimator::Pearson).unwrap();
    assert_eq!(report.groups.len(), 3);
    for g in &report.groups {
        assert_eq!(g.n, 3);
        for m in &g.metrics {
            assert!((m.correlation.unwrap() - 1.0).abs() < 1e-9);
        }
    }
    assert!(report.to_toml().unwrap().contains("nominal_mean"));
}

#[test]
fn srcc_flags_constant_series_and_rejects_unpaired_runs() {
    let a = fake(&[1.0, 4.0, 2.0, 8.0, 3.0, 9.0]);
    let b = fake(&[5.0; 6]);
    let report = srcc(&a, &b, Estimator::Pearson).unwrap();
    assert!(report.groups.iter().flat_map(|g| &g.metrics).all(|m| !m.defined));
    let mut shifted = a.clone();
    shifted[0].seed = 99;
    assert!(srcc(&a, &shifted, Estimator::Pearson).is_err());
    assert!(srcc(&a, &a[..3], Estimator::Pearson).is_err());
}

#[test]
fn zero_perturbation_srcc_is_one_on_the_simulator() {
    let pd = PdController::new(PDGains::default(), env()).unwrap();
    let nominal = run_trials(&pd, &spec(9, StartScheme::PerPosition(3))).unwrap();
    let mut p = spec(9, StartScheme::PerPosition(3));
    p.perturbation = Some(PerturbationConfig::none());
    let perturbed = run_trials(&pd, &p).unwrap();
    let report = srcc(&nominal, &perturbed, Estimator::Pearson).unwrap();
    for g in &report.groups {
        for m in &g.metrics {
            if let Some(r) = m.correlation {
                assert!((r - 1.0).abs() < 1e-9, "{} {}", g.start, m.metric);
            }
        }
    }
}

#[test]
fn comparing_a_policy_with_itself_gives_identical_columns() {
    let pd = PdController::new(PDGains::default(), env()).unwrap();
    let cmp = compare(&[&pd, &pd], &spec(4, StartScheme::Mixed)).unwrap();
    assert_eq!(cmp.rows[0].1, cmp.rows[1].1);
    let mut csv = Vec::new();
    write_comparison_csv(&mut csv, &cmp).unwrap();
    assert_eq!(String::from_utf8(csv).unwrap().lines().count(), 1 + 2 * 5);
}

#[test]
fn pd_beats_zero_policy() {
    let pd = PdController::new(PDGains::default(), env()).unwrap();
    let zero = ZeroPolicy { active: [true; 4] };
    let mut s = spec(6, StartScheme::Mixed);
    s.env.episode_len = 200;
    let cmp = compare(&[&pd, &zero], &s).unwrap();
    assert!(cmp.rows[0].1.cumulative_reward.mean > cmp.rows[1].1.cumulative_reward.mean);
}

#[test]
fn trial_csv_has_one_row_per_trial() {
    let zero = ZeroPolicy { active: [true; 4] };
    let res = run_trials(&zero, &spec(5, StartScheme::Mixed)).unwrap();
    let mut out = Vec::new();
    write_trials_csv(&mut out, &res).unwrap();
    let text = String::from_utf8(out).unwrap();
    assert_eq!(text.lines().count(), 6);
    assert!(text.starts_with("policy,trial,start,seed"));
}

proptest! {
    #[test]
    fn summarize_is_permutation_invariant(mut v in proptest::collection::vec(-1e3f64..1e3, 1..30), seed in any::<u64>()) {
        let a = summarize_values(&v).unwrap();
        let n = v.len();
        let mut s = seed;
        for i in (1..n).rev() {
            s = crate::simenv::mix_seed(s, i as u64);
            v.swap(i, (s % (i as u64 + 1)) as usize);
        }
        let b = summarize_values(&v).unwrap();
        prop_assert_eq!(a.median, b.median);
        prop_assert_eq!(a.q1, b.q1);
        prop_assert_eq!(a.q3, b.q3);
        prop_assert!((a.mean - b.mean).abs() < 1e-9);
    }

    #[test]
    fn pearson_is_symmetric_and_affine_invariant(
        pairs in proptest::collection::vec((-100f64..100.0, -100f64..100.0), 3..20),
        scale in 0.1f64..10.0,
        shift in -50f64..50.0,
    ) {
        let x: Vec<f64> = pairs.iter().map(|p| p.0).collect();
        let y: Vec<f64> = pairs.iter().map(|p| p.1).collect();
        let xy = pearson(&x, &y).unwrap();
        let yx = pearson(&y, &x).unwrap();
        prop_assert_eq!(xy.value().is_some(), yx.value().is_some());
        if let (Some(a), Some(b)) = (xy.value(), yx.value()) {
            prop_assert!((a - b).abs() < 1e-12);
            prop_assert!((-1.0..=1.0).contains(&a));
            let x2: Vec<f64> = x.iter().map(|v| scale * v + shift).collect();
            let c = pearson(&x2, &y).unwrap().value().unwrap();
            prop_assert!((a - c).abs() < 1e-9);
        }
    }
}
