use std::path::Path;

use finopt_core::geometry::read_geometry;
use finopt_core::runner::{
    read_fields_csv, read_ledger, run_baseline, run_calibrate, run_evaluate, run_optimize, run_resume, BaselineStatus,
    BestRecord, Checkpoint, EvaluateInput, LedgerRow, RunConfig, RunError, RunOptions,
};
use tempfile::tempdir;

const SMALL: &str = "\
seed = 5
[domain]
nx = 64
ny = 32
[penalty]
T_cons = 500.0
[cmaes]
lambda = 4
max_generations = 4
[output]
svg = false
checkpoint_every = 2
";

fn small_config(dir: &Path) -> RunConfig {
    let mut cfg = RunConfig::from_toml(SMALL, &[]).unwrap();
    cfg.output.dir = dir.to_path_buf();
    cfg
}

fn opts() -> RunOptions {
    RunOptions {
        workers: 2,
        ..RunOptions::default()
    }
}

/// Ledger rows with the run-dependent columns blanked.
fn comparable(rows: Vec<LedgerRow>) -> Vec<LedgerRow> {
    rows.into_iter()
        .map(|mut r| {
            r.wall_time = 0.0;
            r.timestamp = 0.0;
            r
        })
        .collect()
}

fn without_timing(b: Option<BestRecord>) -> Option<BestRecord> {
    b.map(|mut b| {
        if let Some(r) = &mut b.result {
            r.wall_time = 0.0;
        }
        b
    })
}

fn read(path: &Path) -> String {
    std::fs::read_to_string(path).unwrap()
}

#[test]
fn campaign_artifacts_are_consistent_and_resumable() {
    let root = tempdir().unwrap();
    let full_dir = root.path().join("full");
    let full = run_optimize(&small_config(&full_dir), &opts()).unwrap();
    assert_eq!(full.generations, 4);
    assert!(full.termination.is_some());

    let ledger = read_ledger(&full_dir).unwrap();
    assert_eq!(ledger.len(), full.evaluations);
    assert_eq!(ledger.iter().filter(|r| r.stage == "search").count(), 16);
    assert_eq!(ledger.iter().filter(|r| r.stage == "final").count(), 1);

    let log = read(&full_dir.join("generations.csv"));
    let best_j: Vec<f64> = csv::Reader::from_reader(log.as_bytes())
        .deserialize::<finopt_core::cmaes::GenerationRecord>()
        .map(|r| r.unwrap().best_j)
        .collect();
    assert_eq!(best_j.len(), 4);
    assert!(best_j.windows(2).all(|w| w[1] <= w[0]), "{best_j:?}");
    let best = full.best.as_ref().unwrap();
    let min_j = ledger
        .iter()
        .filter(|r| r.stage == "search")
        .map(|r| r.j)
        .fold(f64::INFINITY, f64::min);
    assert_eq!(best.cost.j, min_j);

    let feasible_dp = ledger
        .iter()
        .filter(|r| r.stage == "search" && r.status == "ok" && r.p_geom == 0.0 && r.p_thermal == 0.0)
        .filter_map(|r| r.dp_loss)
        .fold(None, |m: Option<f64>, d| Some(m.map_or(d, |m| m.min(d))));
    assert_eq!(full.best_feasible.as_ref().and_then(|b| b.cost.dp_loss), feasible_dp);

    let cfg_back = RunConfig::from_toml(&read(&full_dir.join("config.toml")), &[]).unwrap();
    assert_eq!(cfg_back, small_config(&full_dir));
    let ck = Checkpoint::load(&full_dir.join("checkpoint.json")).unwrap();
    assert_eq!(Checkpoint::from_json(&ck.to_json()).unwrap(), ck);
    assert_eq!(ck.state.generation, 4);
    let samples = cfg_back.geometry.samples_per_segment;
    let best_geo = read_geometry(&read(&full_dir.join("best.geo")), samples).unwrap();
    assert_eq!(best_geo.len(), cfg_back.geometry.n_fins);
    let mut elites = 0;
    for entry in std::fs::read_dir(&full_dir).unwrap() {
        let p = entry.unwrap().path();
        if p.file_name().unwrap().to_string_lossy().starts_with("elite_g") {
            read_geometry(&read(&p), samples).unwrap();
            elites += 1;
        }
    }
    assert!(elites >= 1);
    let fields = read_fields_csv(read(&full_dir.join("fields.csv")).as_bytes()).unwrap();
    assert_eq!(fields.len(), 64 * 32);

    for stop in [2, 3] {
        let dir = root.path().join(format!("stopped{stop}"));
        let partial = run_optimize(
            &small_config(&dir),
            &RunOptions {
                stop_after: Some(stop),
                ..opts()
            },
        )
        .unwrap();
        assert!(partial.termination.is_none());
        let resumed = run_resume(&dir.join("checkpoint.json"), &opts()).unwrap();
        assert_eq!(resumed.generations, 4);
        assert_eq!(read(&dir.join("generations.csv")), log, "stopped after {stop}");
        assert_eq!(
            comparable(read_ledger(&dir).unwrap()),
            comparable(ledger.clone()),
            "stopped after {stop}"
        );
        assert_eq!(without_timing(resumed.best), without_timing(full.best.clone()));
        assert_eq!(
            without_timing(resumed.best_feasible),
            without_timing(full.best_feasible.clone())
        );
    }
}

#[test]
fn identical_runs_write_identical_ledgers() {
    let root = tempdir().unwrap();
    let mut cfg = small_config(&root.path().join("a"));
    cfg.cmaes.max_generations = 2;
    run_optimize(&cfg, &opts()).unwrap();
    cfg.output.dir = root.path().join("b");
    run_optimize(&cfg, &RunOptions { workers: 1, ..opts() }).unwrap();
    let a = comparable(read_ledger(&root.path().join("a")).unwrap());
    let b = comparable(read_ledger(&root.path().join("b")).unwrap());
    assert_eq!(a, b);
}

#[test]
fn empty_geometry_file_has_no_pressure_loss() {
    let dir = tempdir().unwrap();
    let cfg = small_config(dir.path());
    let r = run_evaluate(&cfg, &EvaluateInput::Geometry("# nothing here\n".into()), &opts()).unwrap();
    assert!(r.result.dp_loss.abs() < 1e-6, "{}", r.result.dp_loss);
    assert_eq!(r.fins, 0);
    for f in ["result.json", "design.geo", "fields.csv", "fields.vtk"] {
        assert!(dir.path().join(f).exists(), "{f}");
    }
}

#[test]
fn malformed_geometry_file_names_the_line() {
    let dir = tempdir().unwrap();
    let text = "fin 0\n0 0 1e-3 0 1e-3 1e-3 0 1e-3\nnot numbers\n";
    match run_evaluate(
        &small_config(dir.path()),
        &EvaluateInput::Geometry(text.into()),
        &opts(),
    ) {
        Err(RunError::Config { line, message }) => assert_eq!(line, Some(3), "{message}"),
        other => panic!("{other:?}"),
    }
}

#[test]
fn slack_temperature_limit_takes_the_smallest_fin() {
    let dir = tempdir().unwrap();
    let mut cfg = small_config(dir.path());
    cfg.baseline.t_cons = vec![10000.0];
    let rows = run_baseline(&cfg, &opts()).unwrap();
    assert_eq!(rows.len(), 1);
    assert_eq!(rows[0].status, BaselineStatus::SmallestFin);
    assert_eq!(rows[0].width, Some(cfg.baseline.w_min));
    assert!(rows[0].dp_sf.unwrap() < 0.1, "{:?}", rows[0].dp_sf);
}

#[test]
fn calibration_files() {
    let dir = tempdir().unwrap();
    let header = "region,q_dot_W,area_m2,T_surf_K,T_bulk_K\n";
    let write = |name: &str, body: &str| {
        let p = dir.path().join(name);
        std::fs::write(&p, body).unwrap();
        p
    };

    let empty = run_calibrate(&write("empty.csv", ""), None).unwrap();
    assert_eq!((empty.h_f, empty.h_s), (80.0, 44500.0));

    let single = run_calibrate(
        &write("single.csv", &format!("{header}fin_free,50,0.5,302,300\n")),
        None,
    )
    .unwrap();
    assert_eq!((single.h_f, single.h_s), (50.0, 44500.0));

    let mixed = format!("{header}fin_free,70,1,301,300\nfin_attached,40,1e-3,301,300\nfin_free,90,1,301,300\n");
    let fragment = dir.path().join("h.toml");
    let c = run_calibrate(&write("mixed.csv", &mixed), Some(&fragment)).unwrap();
    assert_eq!((c.h_f, c.h_s), (80.0, 40000.0));
    let cfg = RunConfig::from_toml(&read(&fragment), &[]).unwrap();
    assert_eq!((cfg.physics.h_f, cfg.physics.h_s), (80.0, 40000.0));

    let bad = write(
        "bad.csv",
        &format!("{header}fin_free,70,1,301,300\nfin_free,70,-1,301,300\n"),
    );
    match run_calibrate(&bad, None) {
        Err(RunError::Config { line, .. }) => assert_eq!(line, Some(3)),
        other => panic!("{other:?}"),
    }
    assert!(matches!(
        run_calibrate(&dir.path().join("missing.csv"), None),
        Err(RunError::Io { .. })
    ));
}
