use std::path::Path;

use serde::Serialize;

use gpx_core::data::{load_panel, save_panel};
use gpx_core::evaluation::{
    check_aligned, evaluate as score, write_comparison_csv, write_coverage_csv, write_curves_csv,
    EvaluationReport,
};
use gpx_core::forecast::{load_forecast_csv, save_forecast_csv, to_consumption_units};
use gpx_core::glm::{calibrate_glm, GlmReport};
use gpx_core::model::{compare_models, ModelArtifact, ModelKind, ModelRegistry, Prepared};
use gpx_core::simulate::simulate_panel;
use gpx_core::Error;

use crate::config::{ConfigError, RunConfig};
use crate::{CliError, RunArgs};

type Result<T> = std::result::Result<T, CliError>;

/// Resolve the effective config, create the output directory and echo the
/// config into it.
fn setup(args: &RunArgs) -> Result<RunConfig> {
    let cfg = RunConfig::from_args(args)?;
    std::fs::create_dir_all(&cfg.out).map_err(|e| Error::io(&cfg.out, e))?;
    write_file(&cfg.out.join("config.toml"), cfg.to_toml()?.as_bytes())?;
    log::info!("effective config:\n{}", cfg.to_toml()?);
    Ok(cfg)
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))?;
    Ok(())
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(Error::from)?;
    text.push('\n');
    write_file(path, text.as_bytes())
}

fn write_csv(path: &Path, f: impl FnOnce(&mut Vec<u8>) -> gpx_core::Result<()>) -> Result<()> {
    let mut buf = Vec::new();
    f(&mut buf)?;
    write_file(path, &buf)
}

fn prepare(cfg: &RunConfig, with_out_of_sample: bool) -> Result<Prepared> {
    let panel = load_panel(cfg.input()?, &cfg.columns)?;
    let os = if with_out_of_sample {
        Some(
            cfg.out_of_sample()?
                .ok_or(ConfigError::Missing("os_range"))?,
        )
    } else {
        None
    };
    Ok(Prepared::new(panel, cfg.in_sample()?, os, cfg.outlier_k())?)
}

pub fn calibrate(args: &RunArgs) -> Result<()> {
    let cfg = setup(args)?;
    let data = prepare(&cfg, false)?;
    let model = ModelRegistry::builtin().create(&cfg.model, &cfg.model_config())?;
    let artifact = model.calibrate(&data)?.artifact();

    let glm = calibrate_glm(&data.in_sample_panel(), &data.outliers)?;
    write_json(&cfg.out.join("glm_report.json"), &GlmReport::new(&glm))?;
    if let ModelArtifact::Gpx(a) = &artifact {
        #[derive(Serialize)]
        struct GpReport<'a> {
            params: &'a gpx_core::gp::GpParams,
            fit: &'a gpx_core::gp::GpFit,
            bootstrap: &'a Option<gpx_core::model::CalibrationBootstrap>,
        }
        write_json(
            &cfg.out.join("gp_params.json"),
            &GpReport {
                params: &a.gp,
                fit: &a.fit,
                bootstrap: &a.bootstrap,
            },
        )?;
        write_csv(&cfg.out.join("optimizer_trace.csv"), |buf| {
            let mut w = csv::Writer::from_writer(buf);
            for t in &a.fit.trace {
                w.serialize(t)?;
            }
            w.flush().map_err(|e| Error::io("optimizer_trace.csv", e))
        })?;
    }
    write_json(&cfg.out.join("model.json"), &artifact)
}

pub fn forecast(args: &RunArgs) -> Result<()> {
    let cfg = setup(args)?;
    let data = prepare(&cfg, true)?;
    let path = cfg.artifact_path();
    let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let artifact: ModelArtifact = serde_json::from_str(&text).map_err(Error::from)?;
    let fc = artifact.into_model().forecast(&data)?;
    let banded = to_consumption_units(&fc, &cfg.levels, cfg.point)?;
    save_forecast_csv(&banded, cfg.out.join("forecast.csv"))?;
    Ok(())
}

fn write_reports(cfg: &RunConfig, reports: &[EvaluationReport]) -> Result<()> {
    write_csv(&cfg.out.join("curves.csv"), |b| {
        write_curves_csv(reports, b)
    })?;
    write_csv(&cfg.out.join("coverage.csv"), |b| {
        write_coverage_csv(reports, b)
    })?;
    write_csv(&cfg.out.join("comparison.csv"), |b| {
        write_comparison_csv(reports, b)
    })
}

pub fn evaluate(args: &RunArgs) -> Result<()> {
    let cfg = setup(args)?;
    let settings = cfg.evaluation()?;
    let data = prepare(&cfg, true)?;
    let fc = load_forecast_csv(cfg.forecast_path())?;
    check_aligned(&fc.dates, &data.os_dates())?;
    let kind: ModelKind = cfg.model.parse()?;
    let report = score(kind, &fc, &data.os_consumption(), &settings)?;
    write_json(&cfg.out.join("evaluation.json"), &report)?;
    write_reports(&cfg, std::slice::from_ref(&report))
}

pub fn compare(args: &RunArgs) -> Result<()> {
    let cfg = setup(args)?;
    let settings = cfg.evaluation()?;
    let data = prepare(&cfg, true)?;
    let registry = ModelRegistry::builtin();
    let models = ModelKind::ALL
        .iter()
        .map(|k| registry.create(k.name(), &cfg.model_config()))
        .collect::<gpx_core::Result<Vec<_>>>()?;
    let runs = compare_models(&models, &data, &settings)?;
    for run in &runs {
        let name = run.report.model.name();
        let banded = to_consumption_units(&run.forecast, &cfg.levels, cfg.point)?;
        save_forecast_csv(&banded, cfg.out.join(format!("forecast_{name}.csv")))?;
        write_json(
            &cfg.out.join(format!("model_{name}.json")),
            &run.calibrated.artifact(),
        )?;
    }
    let reports: Vec<EvaluationReport> = runs.into_iter().map(|r| r.report).collect();
    write_json(&cfg.out.join("reports.json"), &reports)?;
    write_reports(&cfg, &reports)
}

pub fn simulate(args: &RunArgs) -> Result<()> {
    let cfg = setup(args)?;
    let mut spec = cfg.simulate.clone();
    spec.seed = cfg.seed;
    let sim = simulate_panel(&spec)?;
    save_panel(&sim.panel, cfg.out.join("panel.csv"))?;

    #[derive(Serialize)]
    struct Truth<'a> {
        spec: &'a gpx_core::simulate::SyntheticSpec,
        is_range: String,
        os_range: String,
        residuals: &'a [f64],
    }
    write_json(
        &cfg.out.join("truth.json"),
        &Truth {
            spec: &spec,
            is_range: sim.split.in_sample.to_string(),
            os_range: sim.split.out_of_sample.to_string(),
            residuals: &sim.residuals,
        },
    )
}
