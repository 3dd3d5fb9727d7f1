use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

const IS: &str = "2015-01-01:2016-02-04";
const OS: &str = "2016-02-05:2016-03-06";

fn gpx(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_gpx"))
        .args(args)
        .current_dir(cwd)
        .env("RUST_LOG", "error")
        .output()
        .expect("binary runs")
}

fn ok(out: &Output) {
    assert!(
        out.status.success(),
        "exit {:?}\nstderr: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stderr)
    );
}

fn error_json(out: &Output) -> serde_json::Value {
    let text = String::from_utf8_lossy(&out.stderr);
    let line = text.lines().last().expect("stderr line");
    serde_json::from_str(line).expect("error JSON on stderr")
}

/// Short synthetic panel: 400 in-sample days then 30 out-of-sample days.
fn workspace() -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(
        dir.path().join("run.toml"),
        format!(
            "input = \"sim/panel.csv\"\nis_range = \"{IS}\"\nos_range = \"{OS}\"\nbootstrap_replicas = 4\n\n\
             [simulate]\nstart = \"2015-01-01\"\nn_in_sample = 400\nn_out_of_sample = 30\nseed = 0\n\n\
             [simulate.glm]\nintercept = 1.17\ntrend = -4.36e-5\ncos_year = 0.103\nsin_year = 0.034\n\
             saturday = 0.022\nsunday = 0.047\ngamma = 0.819\n\n\
             [simulate.gp]\nsigma = 0.02\nsigma_f = 0.05\nsigma_l = 1.8\n"
        ),
    )
    .unwrap();
    ok(&gpx(
        &[
            "simulate", "--config", "run.toml", "--out", "sim", "--seed", "2",
        ],
        dir.path(),
    ));
    dir
}

fn snapshot(dir: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut files = BTreeMap::new();
    for entry in std::fs::read_dir(dir).unwrap() {
        let p = entry.unwrap().path();
        files.insert(p.clone(), std::fs::read(&p).unwrap());
    }
    files
}

fn csv_rows(path: &Path) -> Vec<BTreeMap<String, String>> {
    let mut rdr = csv::Reader::from_path(path).unwrap();
    let headers = rdr.headers().unwrap().clone();
    rdr.records()
        .map(|r| {
            let r = r.unwrap();
            headers
                .iter()
                .zip(r.iter())
                .map(|(h, v)| (h.to_string(), v.to_string()))
                .collect()
        })
        .collect()
}

#[test]
fn every_command_is_byte_deterministic() {
    let ws = workspace();
    let dir = ws.path();
    let runs: [&[&str]; 5] = [
        &[
            "simulate", "--config", "run.toml", "--out", "sim2", "--seed", "5",
        ],
        &["calibrate", "--config", "run.toml", "--out", "cal"],
        &["forecast", "--config", "run.toml", "--out", "cal"],
        &["evaluate", "--config", "run.toml", "--out", "cal"],
        &[
            "compare",
            "--config",
            "run.toml",
            "--out",
            "cmp",
            "--replicas",
            "0",
        ],
    ];
    for args in runs {
        ok(&gpx(args, dir));
    }
    let first: Vec<_> = ["sim2", "cal", "cmp"]
        .iter()
        .map(|d| snapshot(&dir.join(d)))
        .collect();
    for args in runs {
        ok(&gpx(args, dir));
    }
    for (k, d) in ["sim2", "cal", "cmp"].iter().enumerate() {
        let again = snapshot(&dir.join(d));
        assert_eq!(
            first[k].keys().collect::<Vec<_>>(),
            again.keys().collect::<Vec<_>>()
        );
        for (path, bytes) in &first[k] {
            assert!(
                bytes == &again[path],
                "{} changed between runs",
                path.display()
            );
        }
    }
}

#[test]
fn calibrate_writes_parseable_artifacts() {
    let ws = workspace();
    let dir = ws.path();
    ok(&gpx(
        &["calibrate", "--config", "run.toml", "--out", "cal"],
        dir,
    ));
    let read = |name: &str| -> serde_json::Value {
        serde_json::from_str(&std::fs::read_to_string(dir.join("cal").join(name)).unwrap()).unwrap()
    };
    let gp = read("gp_params.json");
    for key in ["sigma", "sigma_f", "sigma_l"] {
        let v = gp["params"][key].as_f64().unwrap();
        assert!(v.is_finite() && v >= 0.0, "{key} = {v}");
    }
    assert_eq!(gp["bootstrap"]["replicas"], 4);
    let glm = read("glm_report.json");
    let names: Vec<&str> = glm["parameters"]
        .as_array()
        .unwrap()
        .iter()
        .map(|p| p["name"].as_str().unwrap())
        .collect();
    assert!(names.contains(&"gamma"));
    assert_eq!(read("model.json")["model"], "gpx");
    let trace = csv_rows(&dir.join("cal/optimizer_trace.csv"));
    assert!(!trace.is_empty() && trace[0].contains_key("log_likelihood"));

    // the echoed config reproduces the run
    let echoed = dir.join("cal/config.toml");
    ok(&gpx(
        &["calibrate", "--config", echoed.to_str().unwrap()],
        dir,
    ));
}

#[test]
fn forecast_rows_have_nested_positive_bands() {
    let ws = workspace();
    let dir = ws.path();
    ok(&gpx(
        &[
            "calibrate",
            "--config",
            "run.toml",
            "--out",
            "cal",
            "--model",
            "arx",
        ],
        dir,
    ));
    ok(&gpx(
        &["forecast", "--config", "run.toml", "--out", "cal"],
        dir,
    ));
    let rows = csv_rows(&dir.join("cal/forecast.csv"));
    assert_eq!(rows.len(), 30);
    let f = |r: &BTreeMap<String, String>, k: &str| r[k].parse::<f64>().unwrap();
    for r in &rows {
        assert!(f(r, "lo_99") > 0.0);
        assert!(f(r, "lo_99") <= f(r, "lo_95") && f(r, "lo_95") <= f(r, "lo_90"));
        assert!(f(r, "lo_90") <= f(r, "point_mwh") && f(r, "point_mwh") <= f(r, "hi_90"));
        assert!(f(r, "hi_90") <= f(r, "hi_95") && f(r, "hi_95") <= f(r, "hi_99"));
    }

    // a one-day horizon gives a single row
    ok(&gpx(
        &[
            "forecast",
            "--config",
            "run.toml",
            "--out",
            "one",
            "--os-range",
            "2016-02-05:2016-02-05",
            "--artifact",
            "cal/model.json",
        ],
        dir,
    ));
    let rows = csv_rows(&dir.join("one/forecast.csv"));
    assert_eq!(rows.len(), 1);
    assert!(f(&rows[0], "lo_90") > 0.0);
}

#[test]
fn perfect_forecast_scores_zero_error() {
    let dir = tempfile::tempdir().unwrap();
    let mut panel = String::from(
        "date,consumption,temperature,wind_speed,precipitation,chill,solar_radiation,humidity,cloud_cover\n",
    );
    let mut forecast = String::from("date,log_mean,log_var\n");
    let start = chrono_like_dates(60);
    for (i, date) in start.iter().enumerate() {
        let log_y = 6.5 + 0.1 * (i as f64 * 0.3).sin();
        let t = 8.0 + 5.0 * (i as f64 * 0.1).cos() + 0.5 * ((i * 7) % 5) as f64;
        let wind = 3.0 + ((i * 3) % 4) as f64;
        panel.push_str(&format!(
            "{date},{},{t},{wind},{},{},{},{},{}\n",
            log_y.exp(),
            ((i * 5) % 3) as f64,
            t - 2.0 - 0.3 * wind,
            3000.0 + 50.0 * ((i * 11) % 7) as f64,
            70.0 + ((i * 13) % 9) as f64,
            ((i * 17) % 8) as f64,
        ));
        if i >= 40 {
            forecast.push_str(&format!("{date},{log_y},0\n"));
        }
    }
    std::fs::write(dir.path().join("panel.csv"), panel).unwrap();
    std::fs::write(dir.path().join("perfect.csv"), forecast).unwrap();
    let out = gpx(
        &[
            "evaluate",
            "--input",
            "panel.csv",
            "--forecast",
            "perfect.csv",
            "--out",
            "ev",
            "--is-range",
            &format!("{}:{}", start[0], start[39]),
            "--os-range",
            &format!("{}:{}", start[40], start[59]),
        ],
        dir.path(),
    );
    ok(&out);
    let report: serde_json::Value = serde_json::from_str(
        &std::fs::read_to_string(dir.path().join("ev/evaluation.json")).unwrap(),
    )
    .unwrap();
    assert_eq!(report["rmse"], 0.0);
    assert_eq!(report["mape"], 0.0);
    for row in report["coverage"].as_array().unwrap() {
        assert_eq!(row["coverage"], 1.0);
    }
    // no violations: nothing to cluster, so the independence part vanishes
    assert_eq!(report["backtest"]["lr_cc"], report["backtest"]["lr_uc"]);
}

fn chrono_like_dates(n: usize) -> Vec<String> {
    // 2015-03-01 onwards; no month boundary tricks needed beyond 31/30 days
    let months = [(3, 31), (4, 30), (5, 31)];
    let mut out = Vec::new();
    for (m, days) in months {
        for d in 1..=days {
            out.push(format!("2015-{m:02}-{d:02}"));
        }
    }
    out.truncate(n);
    out
}

#[test]
fn misaligned_forecast_is_rejected() {
    let ws = workspace();
    let dir = ws.path();
    ok(&gpx(
        &[
            "calibrate",
            "--config",
            "run.toml",
            "--out",
            "cal",
            "--model",
            "glm",
        ],
        dir,
    ));
    ok(&gpx(
        &["forecast", "--config", "run.toml", "--out", "cal"],
        dir,
    ));
    let out = gpx(
        &[
            "evaluate",
            "--config",
            "run.toml",
            "--out",
            "cal",
            "--os-range",
            "2016-02-05:2016-03-05",
            "--is-range",
            "2015-01-01:2016-02-04",
        ],
        dir,
    );
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(error_json(&out)["error"], "length_mismatch");

    // same length, shifted by one day
    let text = std::fs::read_to_string(dir.join("cal/forecast.csv")).unwrap();
    let shifted = text.replacen("2016-02-05", "2016-02-04", 1);
    std::fs::write(dir.join("shifted.csv"), shifted).unwrap();
    let out = gpx(
        &[
            "evaluate",
            "--config",
            "run.toml",
            "--out",
            "cal",
            "--forecast",
            "shifted.csv",
        ],
        dir,
    );
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(error_json(&out)["error"], "date_mismatch");
}

#[test]
fn missing_input_exits_with_input_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = gpx(
        &[
            "calibrate",
            "--input",
            "nope.csv",
            "--is-range",
            IS,
            "--out",
            "o",
        ],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(2));
    let err = error_json(&out);
    assert_eq!(err["error"], "io");
    assert!(err["path"].as_str().unwrap().ends_with("nope.csv"));
    assert!(err["message"].as_str().unwrap().contains("nope.csv"));
}

#[test]
fn bad_config_exits_with_input_error() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("bad.toml"), "levels = [0.9, 0.5]\n").unwrap();
    let out = gpx(
        &[
            "compare",
            "--config",
            "bad.toml",
            "--input",
            "x.csv",
            "--is-range",
            IS,
        ],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(2));
    std::fs::write(dir.path().join("typo.toml"), "sead = 1\n").unwrap();
    let out = gpx(&["simulate", "--config", "typo.toml"], dir.path());
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(error_json(&out)["error"], "config");
}

#[test]
fn optimizer_failure_exits_with_numerical_error() {
    let ws = workspace();
    let dir = ws.path();
    let mut cfg = std::fs::read_to_string(dir.join("run.toml")).unwrap();
    // a minimum step above the first trial step leaves no admissible move
    cfg = cfg.replacen(
        "bootstrap_replicas = 4\n",
        "bootstrap_replicas = 0\n\n[optimizer]\nmin_step = 10.0\n",
        1,
    );
    std::fs::write(dir.join("stuck.toml"), cfg).unwrap();
    let out = gpx(
        &["calibrate", "--config", "stuck.toml", "--out", "cal"],
        dir,
    );
    assert_eq!(
        out.status.code(),
        Some(3),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    assert_eq!(error_json(&out)["error"], "optimizer");
}
