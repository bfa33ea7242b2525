use std::path::Path;
use std::process::{Command, Output};

use tempfile::tempdir;

const SMALL: &str = "[domain]\nnx = 64\nny = 32\n[output]\nsvg = false\n";

fn finopt(dir: &Path, args: &[&str], env: &[(&str, &str)]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_finopt"));
    cmd.current_dir(dir).args(args);
    for (k, _) in std::env::vars().filter(|(k, _)| k.starts_with("FINOPT_")) {
        cmd.env_remove(k);
    }
    cmd.envs(env.iter().copied());
    cmd.output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn invalid_config_exits_with_2_and_names_the_line() {
    let dir = tempdir().unwrap();
    std::fs::write(dir.path().join("bad.toml"), "seed = 1\n[domain]\nnx = \"many\"\n").unwrap();
    let o = finopt(dir.path(), &["--config", "bad.toml", "baseline"], &[]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
    assert!(stderr(&o).contains("line 3"), "{}", stderr(&o));
}

#[test]
fn missing_files_exit_with_4() {
    let dir = tempdir().unwrap();
    let o = finopt(dir.path(), &["--config", "absent.toml", "optimize"], &[]);
    assert_eq!(o.status.code(), Some(4), "{}", stderr(&o));
    let o = finopt(dir.path(), &["calibrate", "absent.csv"], &[]);
    assert_eq!(o.status.code(), Some(4), "{}", stderr(&o));
}

#[test]
fn solver_failure_exits_with_3_and_reports_residuals() {
    let dir = tempdir().unwrap();
    std::fs::write(dir.path().join("run.toml"), SMALL).unwrap();
    let env = [("FINOPT_PHYSICS__H_F", "0"), ("FINOPT_PHYSICS__H_S", "0")];
    let o = finopt(
        dir.path(),
        &["--config", "run.toml", "evaluate", "--twin-rectangles"],
        &env,
    );
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
    assert!(stderr(&o).contains("residual history"), "{}", stderr(&o));
}

#[test]
fn evaluate_empty_geometry() {
    let dir = tempdir().unwrap();
    std::fs::write(dir.path().join("run.toml"), SMALL).unwrap();
    std::fs::write(dir.path().join("empty.geo"), "").unwrap();
    let o = finopt(
        dir.path(),
        &[
            "--config",
            "run.toml",
            "--out",
            "out",
            "evaluate",
            "--geometry",
            "empty.geo",
        ],
        &[],
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let dp: f64 = stdout(&o)
        .lines()
        .find_map(|l| l.strip_prefix("dp_loss: "))
        .and_then(|v| v.trim_end_matches(" Pa").parse().ok())
        .unwrap();
    assert!(dp.abs() < 1e-6, "{dp}");
    assert!(dir.path().join("out/fields.vtk").exists());
}

#[test]
fn malformed_geometry_names_file_and_line() {
    let dir = tempdir().unwrap();
    std::fs::write(dir.path().join("run.toml"), SMALL).unwrap();
    std::fs::write(dir.path().join("bad.geo"), "fin 0\n1 2 3\n").unwrap();
    let o = finopt(
        dir.path(),
        &["--config", "run.toml", "evaluate", "--geometry", "bad.geo"],
        &[],
    );
    assert_eq!(o.status.code(), Some(2));
    let err = stderr(&o);
    assert!(err.contains("line 2") && err.contains("bad.geo"), "{err}");
}

#[test]
fn calibrate_prints_coefficients_and_writes_fragment() {
    let dir = tempdir().unwrap();
    std::fs::write(
        dir.path().join("s.csv"),
        "region,q_dot_W,area_m2,T_surf_K,T_bulk_K\nfin_free,60,1,301,300\nfin_attached,50,1e-3,301,300\n",
    )
    .unwrap();
    let o = finopt(dir.path(), &["calibrate", "s.csv", "--write", "h.toml"], &[]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).contains("h_f: 60"), "{}", stdout(&o));
    assert!(stdout(&o).contains("h_s: 50000"), "{}", stdout(&o));
    let fragment = std::fs::read_to_string(dir.path().join("h.toml")).unwrap();
    assert!(fragment.starts_with("[physics]"));

    std::fs::write(dir.path().join("empty.csv"), "").unwrap();
    let o = finopt(dir.path(), &["calibrate", "empty.csv"], &[]);
    assert!(
        stdout(&o).contains("h_f: 80") && stdout(&o).contains("h_s: 44500"),
        "{}",
        stdout(&o)
    );
}

#[test]
fn environment_overrides_reach_the_run() {
    let dir = tempdir().unwrap();
    std::fs::write(dir.path().join("run.toml"), "[output]\nsvg = false\n").unwrap();
    let env = [
        ("FINOPT_DOMAIN__NX", "64"),
        ("FINOPT_DOMAIN__NY", "32"),
        ("FINOPT_BASELINE__T_CONS", "[10000.0]"),
    ];
    let o = finopt(dir.path(), &["--config", "run.toml", "--out", "out", "baseline"], &env);
    assert!(o.status.success(), "{}", stderr(&o));
    let table = stdout(&o);
    assert!(table.contains("10000") && table.contains("SmallestFin"), "{table}");
    let o = finopt(
        dir.path(),
        &["--config", "run.toml", "baseline"],
        &[("FINOPT_DOMAIN__NX", "zero")],
    );
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
}

#[test]
fn optimize_stop_and_resume_then_plot() {
    let dir = tempdir().unwrap();
    let cfg = format!("{SMALL}checkpoint_every = 1\n[cmaes]\nlambda = 4\nmax_generations = 2\n");
    std::fs::write(dir.path().join("run.toml"), cfg).unwrap();
    let base = ["--config", "run.toml", "--out", "out", "--workers", "1"];
    let o = finopt(
        dir.path(),
        &[&base[..], &["optimize", "--stop-after", "1"]].concat(),
        &[],
    );
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).contains("stopped early"));
    let o = finopt(
        dir.path(),
        &[&base[..], &["--checkpoint", "out/checkpoint.json", "resume"]].concat(),
        &[],
    );
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).contains("generations: 2"), "{}", stdout(&o));
    let o = finopt(dir.path(), &["plot", "out"], &[]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(dir.path().join("out/convergence.svg").exists());
}
