use mbg_core::harness::{
    aggregate_table, checkpoints, fit_rate, read_records_csv, run_experiment, write_records_csv,
    write_summary_json, Algorithm, CellRuns, DataSource, ExperimentConfig, GameSpec,
    ScheduleChoice,
};
use mbg_core::Error;

fn small(algorithm: Algorithm, horizon: u64, trials: usize) -> ExperimentConfig {
    ExperimentConfig::new(GameSpec::random_cournot(5, 10.0, 0.1, 3), algorithm, horizon, trials, 11)
}

#[test]
fn runs_are_reproducible_and_worker_independent() {
    let mut cfg = small(Algorithm::Barrier, 2_000, 3);
    let a = run_experiment(&cfg).unwrap();
    cfg.workers = 3;
    let b = run_experiment(&cfg).unwrap();
    assert_eq!(a.records, b.records);
    cfg.seed += 1;
    let c = run_experiment(&cfg).unwrap();
    assert_ne!(a.records, c.records);
}

#[test]
fn records_cover_every_checkpoint_of_every_trial() {
    let result = run_experiment(&small(Algorithm::Fkm, 500, 2)).unwrap();
    let marks = checkpoints(500);
    assert_eq!(result.records.len(), 2 * marks.len());
    for trial in 0..2 {
        let ts: Vec<u64> = result.records.iter().filter(|r| r.trial == trial).map(|r| r.t).collect();
        assert_eq!(ts, marks);
    }
    assert_eq!(result.finals().len(), 2);
    assert!(result.summary.diagnostics.is_none());
}

#[test]
fn barrier_beats_baseline_on_a_small_market() {
    let barrier = run_experiment(&small(Algorithm::Barrier, 20_000, 2)).unwrap();
    let fkm = run_experiment(&small(Algorithm::Fkm, 20_000, 2)).unwrap();
    assert!(barrier.summary.final_mean < fkm.summary.final_mean);
    let diag = barrier.summary.diagnostics.unwrap();
    assert_eq!(diag.descent_violations, 0);
    assert_eq!(diag.local_step_violations, 0);
    assert!(fit_rate(&barrier.records).unwrap().slope < -0.3);
}

#[test]
fn theory_schedule_runs_on_kelly() {
    let mut cfg = ExperimentConfig::new(GameSpec::random_kelly(4, 2, 0.5, 5), Algorithm::Barrier, 300, 1, 1);
    cfg.schedule = ScheduleChoice::Theory;
    let result = run_experiment(&cfg).unwrap();
    assert!(result.summary.final_mean.is_finite());
}

#[test]
fn theory_schedule_rejects_unbounded_payoffs() {
    let game = GameSpec::Logistic { data: DataSource::Synthetic { samples: 30, dim: 4, seed: 1 }, mu: 0.01 };
    let mut cfg = ExperimentConfig::new(game, Algorithm::Barrier, 10, 1, 1);
    cfg.schedule = ScheduleChoice::Theory;
    assert!(matches!(run_experiment(&cfg), Err(Error::Param(_))));
}

#[test]
fn logistic_runs_for_both_algorithms() {
    let game = GameSpec::Logistic { data: DataSource::Synthetic { samples: 50, dim: 5, seed: 2 }, mu: 0.01 };
    let built = game.build().unwrap();
    assert_eq!(built.game().num_players(), 5);
    for algorithm in [Algorithm::Barrier, Algorithm::Fkm] {
        let result = run_experiment(&ExperimentConfig::new(game.clone(), algorithm, 200, 2, 4)).unwrap();
        assert!(result.finals().iter().all(|v| v.is_finite()));
    }
}

#[test]
fn invalid_configs_are_rejected() {
    let mut cfg = small(Algorithm::Barrier, 0, 1);
    assert!(matches!(run_experiment(&cfg), Err(Error::Param(_))));
    cfg.horizon = 5;
    cfg.trials = 0;
    assert!(matches!(run_experiment(&cfg), Err(Error::Param(_))));
    let missing = GameSpec::Logistic {
        data: DataSource::Libsvm { path: "/nonexistent/data.libsvm".into(), dim: None },
        mu: 0.1,
    };
    let err = run_experiment(&ExperimentConfig::new(missing, Algorithm::Fkm, 5, 1, 1)).unwrap_err();
    assert!(err.is_config());
}

#[test]
fn outputs_serialize() {
    let result = run_experiment(&small(Algorithm::Barrier, 100, 2)).unwrap();
    let mut csv = Vec::new();
    write_records_csv(&mut csv, &result.records).unwrap();
    let text = String::from_utf8(csv.clone()).unwrap();
    assert!(text.starts_with("trial,t,dist_sq_played,dist_sq_pivot,warnings\n"));
    assert_eq!(read_records_csv(csv.as_slice()).unwrap(), result.records);

    let mut json = Vec::new();
    write_summary_json(&mut json, &result.summary).unwrap();
    let value: serde_json::Value = serde_json::from_slice(&json).unwrap();
    for key in ["game", "algorithm", "T", "trials", "seed", "final_mean", "final_std", "runtime_seconds"] {
        assert!(value.get(key).is_some(), "missing {key}");
    }
    assert_eq!(value["T"], 100);
    assert_eq!(value["algorithm"], "barrier");
}

#[test]
fn tables_from_runs() {
    let mut runs = Vec::new();
    for (n, b) in [(3usize, 0.05), (4, 0.1)] {
        for algorithm in [Algorithm::Fkm, Algorithm::Barrier] {
            let cfg = ExperimentConfig::new(GameSpec::random_cournot(n, 10.0, b, 1), algorithm, 200, 2, 9);
            let result = run_experiment(&cfg).unwrap();
            runs.push(CellRuns { key: vec![n as f64, 10.0, b], algorithm, horizon: 200, finals: result.finals() });
        }
    }
    let table = aggregate_table(&["N", "a", "b"], &runs).unwrap();
    assert_eq!(table.columns, vec![Algorithm::Barrier, Algorithm::Fkm]);
    assert_eq!(table.rows.len(), 2);
    let text = table.to_text();
    assert!(text.lines().next().unwrap().starts_with("N"));
    assert!(text.contains(" ± "));
    let csv = table.to_csv().unwrap();
    assert_eq!(csv.lines().next().unwrap(), "N,a,b,barrier_mean,barrier_std,fkm_mean,fkm_std");

    runs.pop();
    assert!(matches!(aggregate_table(&["N", "a", "b"], &runs), Err(Error::MissingCell(_))));
}
