use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn pnr(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pnr"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn ok(o: Output) -> Output {
    assert!(
        o.status.success(),
        "exit {:?}\n{}",
        o.status.code(),
        stderr(&o)
    );
    o
}

#[test]
fn default_simulation_writes_full_bundle() {
    let tmp = tempfile::tempdir().unwrap();
    ok(pnr(
        tmp.path(),
        &["simulate", "--trials", "50", "--format", "text"],
    ));
    let text = fs::read_to_string(tmp.path().join("pnr-out/data/manifest.toml")).unwrap();
    let m: toml::Value = toml::from_str(&text).unwrap();
    let states = m["states"].as_array().unwrap();
    assert_eq!(states.len(), 122);
    assert!(tmp.path().join("pnr-out/data/state_121.txt").is_file());
    assert!(tmp
        .path()
        .join("pnr-out/data/state_121.truth.csv")
        .is_file());
}

fn chi2(path: &Path) -> f64 {
    let v: toml::Value = toml::from_str(&fs::read_to_string(path).unwrap()).unwrap();
    v.get("chi_squared")
        .or_else(|| v["quality"].get("chi_squared"))
        .unwrap()
        .as_float()
        .unwrap()
}

#[test]
fn emg_fits_emg_data_better_than_gaussians() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    ok(pnr(
        d,
        &["simulate", "--states", "10", "--trials", "100000"],
    ));
    let o = ok(pnr(d, &["fit", "--model", "emg"]));
    assert!(stdout(&o).contains("fit emg"));
    ok(pnr(d, &["fit", "--model", "gaussian"]));
    let (e, g) = (
        chi2(&d.join("pnr-out/fit_emg.toml")),
        chi2(&d.join("pnr-out/fit_gaussian.toml")),
    );
    assert!(e < g, "emg {e} gaussian {g}");
}

#[test]
fn pulse_duration_reports_table_values() {
    let tmp = tempfile::tempdir().unwrap();
    let o = ok(pnr(
        tmp.path(),
        &[
            "pulse-duration",
            "--bandwidth-nm",
            "2.66",
            "--fiber-m",
            "32",
        ],
    ));
    let v: toml::Value = toml::from_str(&stdout(&o)).unwrap();
    let d = v["dispersed_ps"].as_float().unwrap();
    assert!((d - 2.9).abs() <= 0.3, "{d}");
    assert_eq!(v["disagrees_with_empirical"].as_bool(), Some(false));

    let o = ok(pnr(
        tmp.path(),
        &["pulse-duration", "--bandwidth-nm", "0.01"],
    ));
    let v: toml::Value = toml::from_str(&stdout(&o)).unwrap();
    assert!(v["transform_limited_ps"].as_float().unwrap() > 300.0);
    assert_eq!(v["disagrees_with_empirical"].as_bool(), Some(true));
    assert_eq!(v["empirical_ps"].as_float(), Some(60.0));
}

#[test]
fn exit_codes_follow_error_class() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    fs::write(d.join("bad.toml"), "[tomo]\ngamma = 1e-6\ngama = 3\n").unwrap();
    let o = pnr(d, &["--config", "bad.toml", "pulse-duration"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(
        stderr(&o).contains("line 3") && stderr(&o).contains("gama"),
        "{}",
        stderr(&o)
    );

    assert_eq!(
        pnr(d, &["--config", "missing.toml", "pulse-duration"])
            .status
            .code(),
        Some(2)
    );
    assert_eq!(
        pnr(d, &["--jobs", "0", "pulse-duration"]).status.code(),
        Some(2)
    );
    assert_eq!(
        pnr(d, &["pulse-duration", "--bandwidth-nm", "0"])
            .status
            .code(),
        Some(2)
    );
    assert_eq!(pnr(d, &["fit", "--eta", "1.5"]).status.code(), Some(2));
    assert_eq!(pnr(d, &["fit", "--data", "nowhere"]).status.code(), Some(2));

    fs::create_dir(d.join("empty")).unwrap();
    assert_eq!(pnr(d, &["fit", "--data", "empty"]).status.code(), Some(3));
    fs::write(d.join("empty/manifest.toml"), "seed = [").unwrap();
    assert_eq!(pnr(d, &["fit", "--data", "empty"]).status.code(), Some(3));

    // A detector that never clicks leaves nothing to fit.
    fs::write(d.join("dark.toml"), "[simulate.model]\neta = 0.0\n").unwrap();
    ok(pnr(
        d,
        &[
            "--config",
            "dark.toml",
            "--out-dir",
            "dark",
            "simulate",
            "--states",
            "10",
            "--trials",
            "100",
        ],
    ));
    let o = pnr(d, &["--config", "dark.toml", "--out-dir", "dark", "fit"]);
    assert_eq!(o.status.code(), Some(4), "{}", stderr(&o));
}

#[test]
fn flags_override_file_and_tables_carry_provenance() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    fs::write(
        d.join("run.toml"),
        "out_dir = \"run\"\n[simulate]\nseed = 5\n[tomo]\ngamma = 1e-3\nstates = 20\n",
    )
    .unwrap();
    ok(pnr(
        d,
        &[
            "--config", "run.toml", "simulate", "--states", "20", "--trials", "20000",
        ],
    ));
    ok(pnr(d, &["--config", "run.toml", "tomo"]));
    let povm = fs::read_to_string(d.join("run/povm.csv")).unwrap();
    assert!(
        povm.lines().next().unwrap().contains(" gamma=0.001 "),
        "{}",
        povm.lines().next().unwrap()
    );

    ok(pnr(
        d,
        &[
            "--config", "run.toml", "--jobs", "2", "tomo", "--gamma", "1e-5",
        ],
    ));
    let povm = fs::read_to_string(d.join("run/povm.csv")).unwrap();
    let header = povm.lines().next().unwrap();
    assert!(header.contains(" gamma=0.00001 "), "{header}");

    let mut tables = 0;
    for e in fs::read_dir(d.join("run")).unwrap() {
        let p = e.unwrap().path();
        if p.extension().is_some_and(|x| x == "csv") {
            let first = fs::read_to_string(&p)
                .unwrap()
                .lines()
                .next()
                .unwrap()
                .to_string();
            assert!(first.starts_with("# rows="), "{}", p.display());
            for key in ["config_sha256=", "seed=5", "pnr_core=", "pnr="] {
                assert!(first.contains(key), "{} lacks {key}", p.display());
            }
            tables += 1;
        }
    }
    assert!(tables >= 10, "{tables}");
    assert!(d.join("run/povm.svg").is_file());
}
