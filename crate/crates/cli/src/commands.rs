use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use mbg_core::games::{CournotParams, KellyParams, LibsvmOptions};
use mbg_core::harness::{
    aggregate_table, cournot_grid, kelly_grid, loglog_slope, regret_by_horizon, run_experiment,
    run_regret_experiment, sci, write_records_csv, write_summary_json, Adversary, Algorithm,
    CellRuns, DataSource, ExperimentConfig, GameSpec, RegretConfig, RegretSchedule,
    ScheduleChoice,
};
use mbg_core::{Error, Result};
use serde_json::json;

use crate::args::{
    Algo, AdversaryKind, Family, Format, GameArgs, GridFamily, InspectArgs, RegretArgs, RegretStep,
    RunArgs, Schedule, SolveArgs, TableArgs,
};

fn param(msg: impl Into<String>) -> Error {
    Error::Param(msg.into())
}

/// `synthetic:MxN[:seed]` or a file path.
pub fn parse_data(spec: &str, dim: Option<usize>) -> Result<DataSource> {
    let Some(rest) = spec.strip_prefix("synthetic:") else {
        return Ok(DataSource::Libsvm { path: spec.into(), dim });
    };
    let bad = || param(format!("expected synthetic:MxN[:seed], got `{spec}`"));
    let mut parts = rest.split(':');
    let (m, n) = parts.next().and_then(|s| s.split_once('x')).ok_or_else(bad)?;
    let samples = m.parse().map_err(|_| bad())?;
    let dim = n.parse().map_err(|_| bad())?;
    let seed = match parts.next() {
        Some(s) => s.parse().map_err(|_| bad())?,
        None => 0,
    };
    if parts.next().is_some() {
        return Err(bad());
    }
    Ok(DataSource::Synthetic { samples, dim, seed })
}

fn filled(values: &Option<Vec<f64>>, n: usize, default: f64) -> Vec<f64> {
    values.clone().unwrap_or_else(|| vec![default; n])
}

pub fn game_spec(g: &GameArgs, seed: u64) -> Result<GameSpec> {
    let instance_seed = g.instance_seed.unwrap_or(seed);
    match g.game {
        Family::Cournot => match &g.costs {
            Some(costs) => {
                let params = CournotParams {
                    a: g.a,
                    b: g.b,
                    capacities: filled(&g.capacities, costs.len(), 1.0),
                    costs: costs.clone(),
                };
                params.validate()?;
                Ok(GameSpec::Cournot { params })
            }
            None => {
                let spec = GameSpec::random_cournot(g.n, g.a, g.b, instance_seed);
                if let GameSpec::Cournot { params } = &spec {
                    params.validate()?;
                }
                Ok(spec)
            }
        },
        Family::Kelly => match (&g.gains, &g.quantities, &g.entry) {
            (Some(gains), Some(quantities), Some(entry)) => {
                let params = KellyParams {
                    gains: gains.clone(),
                    quantities: quantities.clone(),
                    entry: entry.clone(),
                    budgets: filled(&g.budgets, gains.len(), 1.0),
                };
                params.validate()?;
                Ok(GameSpec::Kelly { params })
            }
            (None, None, None) => {
                if g.n == 0 || g.s == 0 || !(g.dbar > 0.0) {
                    return Err(param("Kelly needs N ≥ 1, S ≥ 1 and dbar > 0"));
                }
                Ok(GameSpec::random_kelly(g.n, g.s, g.dbar, instance_seed))
            }
            _ => Err(param("--gains, --quantities and --entry must be given together")),
        },
        Family::Logistic => {
            let data = g.data.as_deref().ok_or_else(|| param("--data is required for the logistic game"))?;
            Ok(GameSpec::Logistic { data: parse_data(data, g.dim)?, mu: g.mu })
        }
    }
}

fn algorithm(a: Algo) -> Algorithm {
    match a {
        Algo::Barrier => Algorithm::Barrier,
        Algo::Fkm => Algorithm::Fkm,
    }
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| Error::Io(format!("{}: {e}", path.display())))
}

pub fn run(args: &RunArgs) -> Result<()> {
    let game = game_spec(&args.game, args.common.seed)?;
    let mut cfg = ExperimentConfig::new(game, algorithm(args.algo), args.horizon, args.trials, args.common.seed);
    cfg.schedule = match args.schedule {
        Schedule::Tuned => ScheduleChoice::Tuned,
        Schedule::Theory => ScheduleChoice::Theory,
        Schedule::TheoryNoisy => ScheduleChoice::TheoryNoisy,
    };
    cfg.noise_sigma = args.sigma;
    cfg.workers = args.common.workers;
    let result = run_experiment(&cfg)?;

    let mut csv = create(&args.out)?;
    write_records_csv(&mut csv, &result.records)?;
    csv.flush()?;
    let json_path = args.out.with_extension("json");
    let mut js = create(&json_path)?;
    write_summary_json(&mut js, &result.summary)?;
    js.flush()?;

    let s = &result.summary;
    let slope = s.slope.map_or("n/a".to_string(), |v| format!("{v:.3}"));
    println!(
        "{} T={} trials={}: final dist_sq {} ± {}, tail slope {slope}",
        s.algorithm.name(),
        s.horizon,
        s.trials,
        sci(s.final_mean),
        sci(s.final_std)
    );
    println!("wrote {} and {}", args.out.display(), json_path.display());
    Ok(())
}

pub fn solve_ne(args: &SolveArgs) -> Result<()> {
    let spec = game_spec(&args.game, args.common.seed)?;
    let built = spec.build()?;
    let sol = built.solve_ne_tol(args.tol)?;
    let x_star: Vec<Vec<f64>> = sol.x_star.iter().map(|x| x.iter().copied().collect()).collect();
    let out = json!({
        "x_star": x_star,
        "residual": sol.residual,
        "solver": sol.solver,
        "iterations": sol.iterations,
    });
    println!("{}", serde_json::to_string_pretty(&out)?);
    Ok(())
}

pub fn regret(args: &RegretArgs) -> Result<()> {
    let adversary = match args.adversary {
        AdversaryKind::Uniform => Adversary::Uniform { low: args.low, high: args.high },
        AdversaryKind::Constant => Adversary::Constant {
            theta: args.theta.clone().ok_or_else(|| param("--theta is required for the constant adversary"))?,
        },
    };
    let cfg = RegretConfig {
        dim: args.dim,
        beta: args.beta,
        adversary,
        horizons: args.horizons.clone(),
        trials: args.trials,
        seed: args.common.seed,
        schedule: match args.step {
            RegretStep::FixedHorizon => RegretSchedule::FixedHorizon,
            RegretStep::Anytime => RegretSchedule::Anytime,
        },
        workers: args.common.workers,
    };
    let records = run_regret_experiment(&cfg)?;
    let by_h = regret_by_horizon(&records);
    println!("T,regret_mean,regret_std");
    for (h, m, s) in &by_h {
        println!("{h},{m},{s}");
    }
    if by_h.len() >= 2 {
        let pts: Vec<(f64, f64)> = by_h.iter().map(|(h, m, _)| (*h as f64, *m)).collect();
        match loglog_slope(&pts) {
            Ok((slope, _)) => eprintln!("log-log slope {slope:.3}"),
            Err(e) => eprintln!("no slope: {e}"),
        }
    }
    if let Some(path) = &args.out {
        let mut w = create(path)?;
        writeln!(w, "horizon,trial,realized,realized_played,best,regret,regret_played")?;
        for r in &records {
            writeln!(
                w,
                "{},{},{},{},{},{},{}",
                r.horizon, r.trial, r.realized, r.realized_played, r.best, r.regret, r.regret_played
            )?;
        }
        w.flush()?;
    }
    Ok(())
}

pub fn table(args: &TableArgs) -> Result<()> {
    let seed = args.common.seed;
    let instance_seed = args.instance_seed.unwrap_or(seed);
    let cells: Vec<(Vec<f64>, GameSpec)> = match args.family {
        GridFamily::Cournot => cournot_grid()
            .into_iter()
            .filter(|(n, _, _)| *n <= args.max_n)
            .map(|(n, a, b)| (vec![n as f64, a, b], GameSpec::random_cournot(n, a, b, instance_seed)))
            .collect(),
        GridFamily::Kelly => kelly_grid()
            .into_iter()
            .filter(|(n, _, _)| *n <= args.max_n)
            .map(|(n, s, d)| (vec![n as f64, s as f64, d], GameSpec::random_kelly(n, s, d, instance_seed)))
            .collect(),
    };
    let mut runs = Vec::new();
    for (key, spec) in cells {
        for algo in [Algorithm::Barrier, Algorithm::Fkm] {
            let mut cfg = ExperimentConfig::new(spec.clone(), algo, args.horizon, args.trials, seed);
            cfg.workers = args.common.workers;
            let result = run_experiment(&cfg)?;
            runs.push(CellRuns { key: key.clone(), algorithm: algo, horizon: args.horizon, finals: result.finals() });
        }
    }
    let names: &[&str] = match args.family {
        GridFamily::Cournot => &["N", "a", "b"],
        GridFamily::Kelly => &["N", "S", "dbar"],
    };
    let table = aggregate_table(names, &runs)?;
    match args.format {
        Format::Text => print!("{}", table.to_text()),
        Format::Csv => print!("{}", table.to_csv()?),
    }
    Ok(())
}

pub fn inspect_data(args: &InspectArgs) -> Result<()> {
    let data = match parse_data(&args.data, args.dim)? {
        DataSource::Libsvm { path, dim } => {
            mbg_core::games::load_libsvm(&path, &LibsvmOptions { dim, ..Default::default() })?
        }
        synthetic => synthetic.load()?,
    };
    let m = data.samples();
    let positives = data.positives();
    let out = json!({
        "samples": m,
        "features": data.dim(),
        "positives": positives,
        "negatives": m - positives,
        "positive_fraction": if m > 0 { Some(positives as f64 / m as f64) } else { None },
    });
    println!("{}", serde_json::to_string_pretty(&out)?);
    Ok(())
}
