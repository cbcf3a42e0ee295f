//! Deterministic experiment pipeline: simulate -> forward -> reconstruct ->
//! evaluate, plus parameter sweeps, diagnostics and plot-data export.
//!
//! Every run writes into one artifact directory:
//! `screens/layer_XX.grid`, `wavefronts/star_XX.grid`,
//! `recon/layer_XX.grid`, `residuals.csv` (iterative solvers),
//! `report.csv` and `manifest.json`. All data artifacts are byte-identical
//! across reruns of the same resolved config and seed.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;

use crate::config::{ExperimentConfig, SolverConfig};
use crate::error::{Error, Result};
use crate::forward::{apply_forward, LayerStack, WavefrontSet};
use crate::frame::{gradient_solve, iterative_fd, SolverOptions};
use crate::io::{read_grid, write_csv, write_grid};
use crate::metrics::{evaluate_quality, QualityReport};
use crate::svtd::{
    decompose_all, picard_diagnostic, reconstruct, wellposedness_scan, FilterSpec, PicardOptions,
    PicardVerdict, SvtdCache,
};
use crate::system::TomoSystem;
use crate::turbulence::generate_screens;

/// Environment variable overriding the SVD cache directory.
pub const CACHE_DIR_ENV: &str = "ATMOTOMO_CACHE_DIR";

// ---------------------------------------------------------------------------
// Artifact layout
// ---------------------------------------------------------------------------

/// Path of one stored turbulence screen.
pub fn screen_path(dir: &Path, layer: usize) -> PathBuf {
    dir.join("screens").join(format!("layer_{layer:02}.grid"))
}

/// Path of one stored guide-star wavefront.
pub fn wavefront_path(dir: &Path, star: usize) -> PathBuf {
    dir.join("wavefronts").join(format!("star_{star:02}.grid"))
}

/// Path of one stored reconstructed layer.
pub fn recon_path(dir: &Path, layer: usize) -> PathBuf {
    dir.join("recon").join(format!("layer_{layer:02}.grid"))
}

fn write_stack(dir: &Path, subdir: &str, stack: &LayerStack) -> Result<()> {
    for (l, field) in stack.layers.iter().enumerate() {
        write_grid(&dir.join(subdir).join(format!("layer_{l:02}.grid")), field)?;
    }
    Ok(())
}

fn read_stack(sys: &TomoSystem, dir: &Path, subdir: &str) -> Result<LayerStack> {
    let mut layers = Vec::with_capacity(sys.num_layers());
    for l in 0..sys.num_layers() {
        let path = dir.join(subdir).join(format!("layer_{l:02}.grid"));
        if !path.exists() {
            return Err(Error::Format(format!(
                "missing artifact {} (run the earlier pipeline stages first)",
                path.display()
            )));
        }
        layers.push(read_grid(&path)?);
    }
    let stack = LayerStack { layers };
    sys.check_stack(&stack)?;
    Ok(stack)
}

fn write_waves(dir: &Path, waves: &WavefrontSet) -> Result<()> {
    for (g, field) in waves.waves.iter().enumerate() {
        write_grid(&wavefront_path(dir, g), field)?;
    }
    Ok(())
}

fn read_waves(sys: &TomoSystem, dir: &Path) -> Result<WavefrontSet> {
    let mut waves = Vec::with_capacity(sys.num_stars());
    for g in 0..sys.num_stars() {
        let path = wavefront_path(dir, g);
        if !path.exists() {
            return Err(Error::Format(format!(
                "missing artifact {} (run `forward` first)",
                path.display()
            )));
        }
        waves.push(read_grid(&path)?);
    }
    let set = WavefrontSet {
        waves,
        mask: sys.aperture_mask.clone(),
    };
    sys.check_waves(&set)?;
    Ok(set)
}

// ---------------------------------------------------------------------------
// SVD cache handling
// ---------------------------------------------------------------------------

/// Cache directory: `ATMOTOMO_CACHE_DIR` if set, else `<out>/cache`.
pub fn cache_dir(config: &ExperimentConfig) -> PathBuf {
    std::env::var_os(CACHE_DIR_ENV)
        .map(PathBuf::from)
        .unwrap_or_else(|| config.output_dir.join("cache"))
}

/// Loads a matching cache from disk or decomposes and stores a fresh one.
pub fn load_or_build_cache(sys: &TomoSystem, s: f64, dir: &Path) -> Result<SvtdCache> {
    let name = format!(
        "svtd_{:016x}_s{}_n{}.bin",
        sys.geometry.content_hash(),
        s,
        sys.n()
    );
    let path = dir.join(name);
    if path.exists() {
        match SvtdCache::read_from(&path) {
            Ok(cache) if cache.matches(&sys.geometry, s, sys.n()).is_ok() => return Ok(cache),
            Ok(_) | Err(_) => {
                log::warn!("cache {} does not match, rebuilding", path.display());
            }
        }
    }
    let cache = decompose_all(&sys.geometry, s, sys.n())?;
    cache.write_to(&path)?;
    Ok(cache)
}

// ---------------------------------------------------------------------------
// Solver dispatch
// ---------------------------------------------------------------------------

/// Runs the configured reconstructor; iterative solvers also return their
/// residual history.
pub fn run_solver(
    sys: &TomoSystem,
    solver: &SolverConfig,
    waves: &WavefrontSet,
    cache: Option<&SvtdCache>,
) -> Result<(LayerStack, Option<Vec<f64>>)> {
    match solver {
        SolverConfig::Svtd { filter, .. } => {
            let cache = cache.ok_or_else(|| {
                Error::Config("svtd solver needs a decomposed cache".into())
            })?;
            let stack = reconstruct(sys, waves, cache, filter)?;
            Ok((stack, None))
        }
        SolverConfig::Fd => {
            let options = SolverOptions {
                iterations: 1,
                step_scale: 1.0,
                record_residuals: true,
            };
            let result = iterative_fd(sys, waves, &options)?;
            Ok((result.stack, Some(result.residuals)))
        }
        SolverConfig::IterativeFd {
            iterations,
            step_scale,
        } => {
            let options = SolverOptions {
                iterations: *iterations,
                step_scale: *step_scale,
                record_residuals: true,
            };
            let result = iterative_fd(sys, waves, &options)?;
            Ok((result.stack, Some(result.residuals)))
        }
        SolverConfig::Gradient {
            iterations,
            step_scale,
        } => {
            let options = SolverOptions {
                iterations: *iterations,
                step_scale: *step_scale,
                record_residuals: true,
            };
            let result = gradient_solve(sys, waves, &options)?;
            Ok((result.stack, Some(result.residuals)))
        }
    }
}

fn cache_for(config: &ExperimentConfig, sys: &TomoSystem) -> Result<Option<SvtdCache>> {
    match &config.solver {
        SolverConfig::Svtd { s, .. } => {
            Ok(Some(load_or_build_cache(sys, *s, &cache_dir(config))?))
        }
        _ => Ok(None),
    }
}

// ---------------------------------------------------------------------------
// Report writing
// ---------------------------------------------------------------------------

const REPORT_HEADER: &str = "metric,layer,theta_x_arcsec,theta_y_arcsec,value";

fn report_rows(report: &QualityReport) -> Vec<Vec<String>> {
    let mut rows = Vec::new();
    for (l, err) in report.layer_errors.iter().enumerate() {
        rows.push(vec![
            "layer_rel_error".into(),
            l.to_string(),
            String::new(),
            String::new(),
            err.to_string(),
        ]);
    }
    let arcsec = crate::geometry::ARCSEC;
    for (i, &(tx, ty)) in report.directions.iter().enumerate() {
        rows.push(vec![
            "residual_rms".into(),
            String::new(),
            (tx / arcsec).to_string(),
            (ty / arcsec).to_string(),
            report.residual_rms[i].to_string(),
        ]);
        rows.push(vec![
            "strehl_proxy".into(),
            String::new(),
            (tx / arcsec).to_string(),
            (ty / arcsec).to_string(),
            report.strehl[i].to_string(),
        ]);
    }
    for (name, value) in [
        ("mean_residual_rms", report.mean_residual_rms),
        ("mean_strehl", report.mean_strehl),
        ("center_residual_rms", report.center_residual_rms),
        ("center_strehl", report.center_strehl),
    ] {
        rows.push(vec![
            name.into(),
            String::new(),
            String::new(),
            String::new(),
            value.to_string(),
        ]);
    }
    rows
}

fn write_residuals(dir: &Path, residuals: &[f64]) -> Result<()> {
    let rows: Vec<Vec<String>> = residuals
        .iter()
        .enumerate()
        .map(|(i, r)| vec![i.to_string(), r.to_string()])
        .collect();
    write_csv(&dir.join("residuals.csv"), "iteration,residual", &rows)
}

#[derive(Serialize)]
struct Manifest<'a> {
    code_version: &'static str,
    config_hash: String,
    seed: u64,
    strehl_model: &'static str,
    timings_ms: BTreeMap<&'static str, f64>,
    config: &'a ExperimentConfig,
}

// ---------------------------------------------------------------------------
// Pipeline stages
// ---------------------------------------------------------------------------

/// Generates turbulence screens and writes them to the artifact directory.
pub fn cmd_simulate(config: &ExperimentConfig) -> Result<()> {
    config.validate()?;
    let sys = config.build_system()?;
    let screens = generate_screens(&sys, &config.turbulence_params())?;
    write_stack(&config.output_dir, "screens", &screens.stack)
}

/// Applies the forward operator to the stored screens.
pub fn cmd_forward(config: &ExperimentConfig) -> Result<()> {
    config.validate()?;
    let sys = config.build_system()?;
    let stack = read_stack(&sys, &config.output_dir, "screens")?;
    let waves = apply_forward(&sys, &stack)?;
    write_waves(&config.output_dir, &waves)
}

/// Reconstructs the layers from the stored wavefronts.
pub fn cmd_reconstruct(config: &ExperimentConfig) -> Result<()> {
    config.validate()?;
    let sys = config.build_system()?;
    let waves = read_waves(&sys, &config.output_dir)?;
    let cache = cache_for(config, &sys)?;
    let (stack, residuals) = run_solver(&sys, &config.solver, &waves, cache.as_ref())?;
    write_stack(&config.output_dir, "recon", &stack)?;
    if let Some(residuals) = residuals {
        write_residuals(&config.output_dir, &residuals)?;
    }
    Ok(())
}

/// Compares the stored reconstruction against the stored screens.
pub fn cmd_evaluate(config: &ExperimentConfig) -> Result<QualityReport> {
    config.validate()?;
    let sys = config.build_system()?;
    let truth = read_stack(&sys, &config.output_dir, "screens")?;
    let recon = read_stack(&sys, &config.output_dir, "recon")?;
    let report = evaluate_quality(&sys, &recon, &truth, &config.evaluation_grid())?;
    write_csv(
        &config.output_dir.join("report.csv"),
        REPORT_HEADER,
        &report_rows(&report),
    )?;
    Ok(report)
}

pub struct PipelineSummary {
    pub out_dir: PathBuf,
    pub report: QualityReport,
    pub residuals: Option<Vec<f64>>,
}

/// The full deterministic pipeline with a manifest of resolved defaults,
/// config hash and timings.
pub fn run_pipeline(config: &ExperimentConfig) -> Result<PipelineSummary> {
    config.validate()?;
    let sys = config.build_system()?;
    let dir = config.output_dir.clone();
    let mut timings: BTreeMap<&'static str, f64> = BTreeMap::new();
    let ms = |t: Instant| t.elapsed().as_secs_f64() * 1e3;

    let t = Instant::now();
    let screens = generate_screens(&sys, &config.turbulence_params())?;
    write_stack(&dir, "screens", &screens.stack)?;
    timings.insert("simulate", ms(t));

    let t = Instant::now();
    let waves = apply_forward(&sys, &screens.stack)?;
    write_waves(&dir, &waves)?;
    timings.insert("forward", ms(t));

    let t = Instant::now();
    let cache = cache_for(config, &sys)?;
    let (stack, residuals) = run_solver(&sys, &config.solver, &waves, cache.as_ref())?;
    write_stack(&dir, "recon", &stack)?;
    if let Some(ref residuals) = residuals {
        write_residuals(&dir, residuals)?;
    }
    timings.insert("reconstruct", ms(t));

    let t = Instant::now();
    let report = evaluate_quality(&sys, &stack, &screens.stack, &config.evaluation_grid())?;
    write_csv(&dir.join("report.csv"), REPORT_HEADER, &report_rows(&report))?;
    timings.insert("evaluate", ms(t));

    let manifest = Manifest {
        code_version: env!("CARGO_PKG_VERSION"),
        config_hash: config.content_hash(),
        seed: config.seed,
        strehl_model: report.strehl_model,
        timings_ms: timings,
        config,
    };
    std::fs::create_dir_all(&dir)?;
    std::fs::write(
        dir.join("manifest.json"),
        serde_json::to_string_pretty(&manifest)? + "\n",
    )?;
    Ok(PipelineSummary {
        out_dir: dir,
        report,
        residuals,
    })
}

// ---------------------------------------------------------------------------
// Sweep
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepParameter {
    /// Tikhonov regularization strength (svtd solver only).
    Alpha,
    /// Iteration count of the iterative solvers.
    Iterations,
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepRow {
    pub value: f64,
    pub layer_errors: Vec<f64>,
    pub mean_residual_rms: f64,
    pub mean_strehl: f64,
}

fn solver_with(config: &SolverConfig, parameter: SweepParameter, value: f64) -> Result<SolverConfig> {
    match (parameter, config) {
        (SweepParameter::Alpha, SolverConfig::Svtd { s, filter }) => match filter {
            FilterSpec::Tikhonov { .. } => Ok(SolverConfig::Svtd {
                s: *s,
                filter: FilterSpec::Tikhonov { alpha: value },
            }),
            _ => Err(Error::Config(
                "alpha sweep requires the tikhonov filter".into(),
            )),
        },
        (SweepParameter::Iterations, SolverConfig::IterativeFd { step_scale, .. }) => {
            Ok(SolverConfig::IterativeFd {
                iterations: as_iterations(value)?,
                step_scale: *step_scale,
            })
        }
        (SweepParameter::Iterations, SolverConfig::Gradient { step_scale, .. }) => {
            Ok(SolverConfig::Gradient {
                iterations: as_iterations(value)?,
                step_scale: *step_scale,
            })
        }
        (SweepParameter::Alpha, _) => {
            Err(Error::Config("alpha sweep requires the svtd solver".into()))
        }
        (SweepParameter::Iterations, _) => Err(Error::Config(
            "iterations sweep requires an iterative solver".into(),
        )),
    }
}

fn as_iterations(value: f64) -> Result<usize> {
    if value < 0.0 || value.fract() != 0.0 || !value.is_finite() {
        return Err(Error::Config(format!(
            "iteration sweep values must be non-negative integers, got {value}"
        )));
    }
    Ok(value as usize)
}

/// One pipeline run per value, reusing screens, wavefronts and the SVD
/// cache; writes `sweep.csv` and returns the rows.
pub fn sweep(
    config: &ExperimentConfig,
    parameter: SweepParameter,
    values: &[f64],
) -> Result<Vec<SweepRow>> {
    if values.is_empty() {
        return Err(Error::Config("sweep needs at least one value".into()));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::Config("sweep values must be finite".into()));
    }
    config.validate()?;
    let sys = config.build_system()?;
    let screens = generate_screens(&sys, &config.turbulence_params())?;
    write_stack(&config.output_dir, "screens", &screens.stack)?;
    let waves = apply_forward(&sys, &screens.stack)?;
    write_waves(&config.output_dir, &waves)?;
    let cache = cache_for(config, &sys)?;
    let eval_grid = config.evaluation_grid();

    let mut rows = Vec::with_capacity(values.len());
    for &value in values {
        let solver = solver_with(&config.solver, parameter, value)?;
        let (stack, _) = run_solver(&sys, &solver, &waves, cache.as_ref())?;
        let report = evaluate_quality(&sys, &stack, &screens.stack, &eval_grid)?;
        rows.push(SweepRow {
            value,
            layer_errors: report.layer_errors,
            mean_residual_rms: report.mean_residual_rms,
            mean_strehl: report.mean_strehl,
        });
    }

    let mut header = String::from("value");
    for l in 0..sys.num_layers() {
        header.push_str(&format!(",layer_rel_error_{l}"));
    }
    header.push_str(",mean_residual_rms,mean_strehl");
    let csv_rows: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            let mut row = vec![r.value.to_string()];
            row.extend(r.layer_errors.iter().map(|e| e.to_string()));
            row.push(r.mean_residual_rms.to_string());
            row.push(r.mean_strehl.to_string());
            row
        })
        .collect();
    write_csv(&config.output_dir.join("sweep.csv"), &header, &csv_rows)?;
    Ok(rows)
}

// ---------------------------------------------------------------------------
// Diagnostics
// ---------------------------------------------------------------------------

#[derive(Debug, Serialize)]
pub struct DiagnoseSummary {
    pub picard_verdict: PicardVerdict,
    pub picard_growth: f64,
    pub min_sigma: f64,
    pub argmin: (i64, i64),
}

/// Runs the Picard diagnostic on freshly simulated range-consistent data and
/// the zero-order well-posedness scan; writes `diagnose.json` and
/// `picard.csv`.
pub fn diagnose(config: &ExperimentConfig) -> Result<DiagnoseSummary> {
    config.validate()?;
    let sys = config.build_system()?;
    if !sys.geometry.single_kind() {
        return Err(Error::MixedStarKinds);
    }
    let s = match &config.solver {
        SolverConfig::Svtd { s, .. } => *s,
        _ => 1.0,
    };
    let screens = generate_screens(&sys, &config.turbulence_params())?;
    let waves = apply_forward(&sys, &screens.stack)?;
    let cache = load_or_build_cache(&sys, s, &cache_dir(config))?;
    let picard = picard_diagnostic(&sys, &waves, &cache, &PicardOptions::default())?;
    let scan = wellposedness_scan(&sys.geometry, 0.0, sys.n())?;

    let rows: Vec<Vec<String>> = picard
        .sigmas
        .iter()
        .zip(&picard.partial_sums)
        .map(|(s, p)| vec![s.to_string(), p.to_string()])
        .collect();
    write_csv(
        &config.output_dir.join("picard.csv"),
        "sigma,partial_sum",
        &rows,
    )?;

    let summary = DiagnoseSummary {
        picard_verdict: picard.verdict,
        picard_growth: picard.last_decade_growth,
        min_sigma: scan.min_sigma,
        argmin: scan.argmin,
    };
    #[derive(Serialize)]
    struct DiagnoseFile<'a> {
        picard_verdict: PicardVerdict,
        picard_last_decade_growth: f64,
        min_sigma: f64,
        argmin_j: i64,
        argmin_k: i64,
        histogram: &'a [crate::svtd::HistogramBin],
        shift_ratios: &'a [crate::svtd::FrequencyRatio],
    }
    std::fs::create_dir_all(&config.output_dir)?;
    std::fs::write(
        config.output_dir.join("diagnose.json"),
        serde_json::to_string_pretty(&DiagnoseFile {
            picard_verdict: summary.picard_verdict,
            picard_last_decade_growth: summary.picard_growth,
            min_sigma: summary.min_sigma,
            argmin_j: summary.argmin.0,
            argmin_k: summary.argmin.1,
            histogram: &scan.histogram,
            shift_ratios: &scan.shift_ratios,
        })? + "\n",
    )?;
    Ok(summary)
}

// ---------------------------------------------------------------------------
// Plot data export
// ---------------------------------------------------------------------------

fn parse_report(path: &Path) -> Result<Vec<(String, Vec<Option<f64>>)>> {
    if !path.exists() {
        return Err(Error::Format(format!(
            "missing artifact {} (run `evaluate` or `pipeline` first)",
            path.display()
        )));
    }
    let text = std::fs::read_to_string(path)?;
    let mut lines = text.lines();
    let header = lines.next().unwrap_or_default();
    if header != REPORT_HEADER {
        return Err(Error::Format(format!(
            "{}: unexpected report header {header}",
            path.display()
        )));
    }
    let mut rows = Vec::new();
    for line in lines {
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 5 {
            return Err(Error::Format(format!("{}: bad row {line}", path.display())));
        }
        let values = fields[1..]
            .iter()
            .map(|f| {
                if f.is_empty() {
                    Ok(None)
                } else {
                    f.parse::<f64>().map(Some).map_err(|_| {
                        Error::Format(format!("{}: bad number {f}", path.display()))
                    })
                }
            })
            .collect::<Result<Vec<Option<f64>>>>()?;
        rows.push((fields[0].to_string(), values));
    }
    Ok(rows)
}

/// Emits long-format plot tables from a completed artifact directory:
/// residual and Strehl proxy against field separation, per-layer errors, and
/// (when present) the solver residual history.
pub fn export_plotdata(dir: &Path) -> Result<()> {
    let rows = parse_report(&dir.join("report.csv"))?;
    let plotdir = dir.join("plotdata");

    // direction table keyed by (theta_x, theta_y)
    let mut directions: Vec<(f64, f64, Option<f64>, Option<f64>)> = Vec::new();
    for (metric, v) in &rows {
        let (tx, ty) = match (v[1], v[2]) {
            (Some(tx), Some(ty)) => (tx, ty),
            _ => continue,
        };
        let entry = match directions.iter_mut().find(|(x, y, _, _)| *x == tx && *y == ty) {
            Some(e) => e,
            None => {
                directions.push((tx, ty, None, None));
                directions.last_mut().expect("just pushed")
            }
        };
        match metric.as_str() {
            "residual_rms" => entry.2 = v[3],
            "strehl_proxy" => entry.3 = v[3],
            _ => {}
        }
    }
    let dir_rows: Vec<Vec<String>> = directions
        .iter()
        .map(|&(tx, ty, rms, strehl)| {
            vec![
                tx.to_string(),
                ty.to_string(),
                tx.hypot(ty).to_string(),
                rms.map(|v| v.to_string()).unwrap_or_default(),
                strehl.map(|v| v.to_string()).unwrap_or_default(),
            ]
        })
        .collect();
    write_csv(
        &plotdir.join("error_vs_separation.csv"),
        "theta_x_arcsec,theta_y_arcsec,separation_arcsec,residual_rms,strehl_proxy",
        &dir_rows,
    )?;

    let layer_rows: Vec<Vec<String>> = rows
        .iter()
        .filter(|(metric, _)| metric == "layer_rel_error")
        .filter_map(|(_, v)| {
            Some(vec![(v[0]? as usize).to_string(), v[3]?.to_string()])
        })
        .collect();
    write_csv(
        &plotdir.join("layer_errors.csv"),
        "layer,rel_error",
        &layer_rows,
    )?;

    let residuals = dir.join("residuals.csv");
    if residuals.exists() {
        let text = std::fs::read_to_string(&residuals)?;
        let rows: Vec<Vec<String>> = text
            .lines()
            .skip(1)
            .filter(|l| !l.is_empty())
            .map(|l| l.split(',').map(str::to_string).collect())
            .collect();
        write_csv(
            &plotdir.join("residual_vs_iteration.csv"),
            "iteration,residual",
            &rows,
        )?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::preset;

    fn preset_in(dir: &Path, name: &str) -> ExperimentConfig {
        let mut config = preset(name).unwrap();
        config.grid.n = 32;
        config.output_dir = dir.to_path_buf();
        config
    }

    #[test]
    fn pipeline_produces_artifacts() {
        let tmp = tempfile::tempdir().unwrap();
        let config = preset_in(tmp.path(), "ngs6");
        let summary = run_pipeline(&config).unwrap();
        assert_eq!(summary.report.layer_errors.len(), 3);
        assert_eq!(summary.report.residual_rms.len(), 25);
        for l in 0..3 {
            assert!(screen_path(tmp.path(), l).exists());
            assert!(recon_path(tmp.path(), l).exists());
        }
        for g in 0..6 {
            assert!(wavefront_path(tmp.path(), g).exists());
        }
        assert!(tmp.path().join("report.csv").exists());
        assert!(tmp.path().join("manifest.json").exists());
        let manifest = std::fs::read_to_string(tmp.path().join("manifest.json")).unwrap();
        // manifest carries the fully resolved config
        assert!(manifest.contains("fried_parameter_m"));
        assert!(manifest.contains("config_hash"));
    }

    #[test]
    fn staged_commands_match_pipeline() {
        let tmp_a = tempfile::tempdir().unwrap();
        let tmp_b = tempfile::tempdir().unwrap();
        let config_a = preset_in(tmp_a.path(), "ngs6");
        let config_b = preset_in(tmp_b.path(), "ngs6");
        run_pipeline(&config_a).unwrap();
        cmd_simulate(&config_b).unwrap();
        cmd_forward(&config_b).unwrap();
        cmd_reconstruct(&config_b).unwrap();
        cmd_evaluate(&config_b).unwrap();
        for l in 0..3 {
            let a = std::fs::read(recon_path(tmp_a.path(), l)).unwrap();
            let b = std::fs::read(recon_path(tmp_b.path(), l)).unwrap();
            assert_eq!(a, b, "staged and one-shot runs differ at layer {l}");
        }
        let a = std::fs::read(tmp_a.path().join("report.csv")).unwrap();
        let b = std::fs::read(tmp_b.path().join("report.csv")).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn mixed_preset_pipeline_runs() {
        let tmp = tempfile::tempdir().unwrap();
        let config = preset_in(tmp.path(), "mixed");
        let summary = run_pipeline(&config).unwrap();
        assert!(summary.residuals.is_some());
        assert!(tmp.path().join("residuals.csv").exists());
    }

    #[test]
    fn svtd_on_mixed_kind_fails_with_config_error() {
        let tmp = tempfile::tempdir().unwrap();
        let mut config = preset_in(tmp.path(), "mixed");
        config.solver = SolverConfig::Svtd {
            s: 1.0,
            filter: FilterSpec::Tikhonov { alpha: 1e-3 },
        };
        assert!(matches!(
            run_pipeline(&config),
            Err(Error::MixedStarKinds)
        ));
    }

    #[test]
    fn sweep_rows_and_csv() {
        let tmp = tempfile::tempdir().unwrap();
        let config = preset_in(tmp.path(), "ngs6");
        let values = [1e-6, 1e-4, 1e-2];
        let rows = sweep(&config, SweepParameter::Alpha, &values).unwrap();
        assert_eq!(rows.len(), 3);
        let text = std::fs::read_to_string(tmp.path().join("sweep.csv")).unwrap();
        assert!(text.starts_with(
            "value,layer_rel_error_0,layer_rel_error_1,layer_rel_error_2,mean_residual_rms"
        ));
        assert_eq!(text.lines().count(), 4);

        // single value equals the pipeline result
        let single = sweep(&config, SweepParameter::Alpha, &[1e-4]).unwrap();
        assert_eq!(single[0].layer_errors, rows[1].layer_errors);

        assert!(sweep(&config, SweepParameter::Alpha, &[]).is_err());
        assert!(sweep(&config, SweepParameter::Iterations, &[2.0]).is_err());
    }

    #[test]
    fn iteration_sweep_improves_with_more_steps() {
        let tmp = tempfile::tempdir().unwrap();
        let mut config = preset_in(tmp.path(), "ngs6");
        config.solver = SolverConfig::IterativeFd {
            iterations: 5,
            step_scale: 1.0,
        };
        let rows = sweep(&config, SweepParameter::Iterations, &[1.0, 5.0]).unwrap();
        for l in 0..3 {
            assert!(
                rows[1].layer_errors[l] < rows[0].layer_errors[l],
                "layer {l}: 5 iterations {} vs 1 iteration {}",
                rows[1].layer_errors[l],
                rows[0].layer_errors[l]
            );
        }
    }

    #[test]
    fn diagnose_runs_on_preset() {
        let tmp = tempfile::tempdir().unwrap();
        let config = preset_in(tmp.path(), "ngs6");
        let summary = diagnose(&config).unwrap();
        assert!(summary.min_sigma > 0.0);
        assert!(tmp.path().join("diagnose.json").exists());
        assert!(tmp.path().join("picard.csv").exists());
    }

    #[test]
    fn export_plotdata_round_trip() {
        let tmp = tempfile::tempdir().unwrap();
        let config = preset_in(tmp.path(), "ngs6");
        run_pipeline(&config).unwrap();
        export_plotdata(tmp.path()).unwrap();
        let text =
            std::fs::read_to_string(tmp.path().join("plotdata/error_vs_separation.csv")).unwrap();
        assert_eq!(text.lines().count(), 26); // header + 25 directions
        let first_data = text.lines().nth(1).unwrap();
        let fields: Vec<&str> = first_data.split(',').collect();
        let tx: f64 = fields[0].parse().unwrap();
        let ty: f64 = fields[1].parse().unwrap();
        let sep: f64 = fields[2].parse().unwrap();
        assert!((sep - tx.hypot(ty)).abs() < 1e-12);

        let layers =
            std::fs::read_to_string(tmp.path().join("plotdata/layer_errors.csv")).unwrap();
        assert_eq!(layers.lines().count(), 4);
    }

    #[test]
    fn export_plotdata_empty_directions() {
        let tmp = tempfile::tempdir().unwrap();
        let mut config = preset_in(tmp.path(), "ngs6");
        config.evaluation.directions_arcsec.clear();
        run_pipeline(&config).unwrap();
        export_plotdata(tmp.path()).unwrap();
        let text =
            std::fs::read_to_string(tmp.path().join("plotdata/error_vs_separation.csv")).unwrap();
        assert_eq!(text.lines().count(), 1, "header-only CSV expected");
    }

    #[test]
    fn export_plotdata_missing_artifacts() {
        let tmp = tempfile::tempdir().unwrap();
        assert!(export_plotdata(tmp.path()).is_err());
    }
}
