//! Command implementations. Each command reads its inputs, delegates to the
//! core library and writes its outputs from this thread only.

use std::fs::File;
use std::io::Write;
use std::path::{Path, PathBuf};

use diffmig_core::estimate::{
    bootstrap_collective, bootstrap_effective, compare_models, correct_for_error, estimate_collective,
    fit_effective, qq_pairs, standardized_pools,
};
use diffmig_core::proportions::proportion_matrix;
use diffmig_core::rng::derive_seed;
use diffmig_core::simulate::{add_noise, simulate_free_ensemble};
use diffmig_core::{
    Axis, BootstrapResult, CollectiveParams, ComparisonRow, EffectiveParams, MotionParams, PathIncrements,
    ProportionMatrix, TrackSeries,
};
use serde::Serialize;

use crate::config::{ParamsSource, RunConfig};
use crate::error::{io_err, CliError, CliResult};
use crate::ingest::{read_tracks, write_tracks_file, IngestOptions};
use crate::validate::{run_all, Check};

pub const TOOL: &str = "diffmig";
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Inputs shared by every command.
#[derive(Debug, Clone)]
pub struct Invocation {
    pub config: RunConfig,
    pub data: Option<PathBuf>,
    pub out: PathBuf,
}

impl Invocation {
    fn ingest_options(&self) -> IngestOptions {
        let offset = self
            .config
            .domain
            .as_ref()
            .map_or((0.0, 0.0), |d| (d.x_offset, d.y_offset));
        IngestOptions {
            project_lonlat: self.config.project_lonlat,
            offset,
        }
    }

    fn tracks(&self, command: &str) -> CliResult<Vec<TrackSeries>> {
        let path = self
            .data
            .as_ref()
            .ok_or_else(|| CliError::Usage(format!("{command} requires --data")))?;
        let tracks = read_tracks(path, &self.ingest_options())?;
        if tracks.is_empty() {
            return Err(CliError::Usage(format!(
                "{}: no path has at least 2 observations",
                path.display()
            )));
        }
        Ok(tracks)
    }

    fn output(&self, name: &str) -> CliResult<PathBuf> {
        std::fs::create_dir_all(&self.out).map_err(|e| io_err(&self.out, e))?;
        Ok(self.out.join(name))
    }

    fn data_label(&self) -> Option<String> {
        self.data.as_ref().map(|p| p.display().to_string())
    }
}

/// Envelope of every JSON report.
#[derive(Debug, Serialize)]
pub struct Report<'a, T: Serialize> {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: &'static str,
    pub data: Option<String>,
    pub config: &'a RunConfig,
    #[serde(flatten)]
    pub body: T,
}

fn write_report<T: Serialize>(inv: &Invocation, command: &'static str, name: &str, body: T) -> CliResult<PathBuf> {
    let report = Report {
        tool: TOOL,
        version: VERSION,
        command,
        data: inv.data_label(),
        config: &inv.config,
        body,
    };
    let path = inv.output(name)?;
    let mut text = serde_json::to_string_pretty(&report).map_err(|e| CliError::Io(e.to_string()))?;
    text.push('\n');
    std::fs::write(&path, text).map_err(|e| io_err(&path, e))?;
    Ok(path)
}

fn csv_writer(path: &Path) -> CliResult<csv::Writer<File>> {
    csv::Writer::from_path(path).map_err(|e| io_err(path, e))
}

fn finish_csv(mut w: csv::Writer<File>, path: &Path) -> CliResult<()> {
    w.flush().map_err(|e| io_err(path, e))
}

fn row(w: &mut csv::Writer<File>, path: &Path, fields: Vec<String>) -> CliResult<()> {
    w.write_record(&fields).map_err(|e| io_err(path, e))
}

/// Writes synthetic tracks; the config is echoed as `#` comment lines.
pub fn cmd_simulate(inv: &Invocation) -> CliResult<PathBuf> {
    let sim = inv
        .config
        .simulate
        .as_ref()
        .ok_or_else(|| CliError::Usage("simulate requires a \"simulate\" section in the config".into()))?;
    let clean = simulate_free_ensemble(
        "p",
        sim.paths,
        sim.beta,
        &sim.law,
        &sim.intervals,
        sim.increments,
        (sim.start[0], sim.start[1]),
        sim.seed,
    )?;
    let tracks: Vec<TrackSeries> = clean
        .iter()
        .enumerate()
        .map(|(k, t)| add_noise(t, &sim.noise, derive_seed(sim.seed ^ 0xa5a5, k as u64)))
        .collect::<Result<_, _>>()?;
    let mut comments = vec![format!("{TOOL} {VERSION} simulate")];
    comments.extend(inv.config.to_json().lines().map(str::to_owned));
    let path = inv.output("tracks.csv")?;
    write_tracks_file(&path, &tracks, &comments)?;
    log::info!("wrote {} tracks to {}", tracks.len(), path.display());
    Ok(path)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AxisPair<T> {
    pub x: T,
    pub y: T,
}

impl<T: Copy> AxisPair<T> {
    fn get(&self, axis: Axis) -> T {
        match axis {
            Axis::X => self.x,
            Axis::Y => self.y,
        }
    }
}

#[derive(Debug, Serialize)]
pub struct PathReport {
    #[serde(flatten)]
    pub params: EffectiveParams,
    /// `D - σ0²/ΔT`; present when an error variance is configured.
    pub d_corrected: Option<AxisPair<f64>>,
    pub bootstrap: BootstrapResult,
}

#[derive(Debug, Serialize)]
pub struct CollectiveReport {
    #[serde(flatten)]
    pub params: CollectiveParams,
    pub d_corrected: Option<AxisPair<f64>>,
    /// Two-stage bootstrap; needs at least two paths.
    pub bootstrap: Option<BootstrapResult>,
    /// False when the collective drift interval contains zero.
    pub drift_significant: Option<AxisPair<bool>>,
}

#[derive(Debug, Serialize)]
pub struct EstimateReport {
    pub paths: Vec<PathReport>,
    pub collective: CollectiveReport,
    pub comparison: Vec<ComparisonRow>,
}

/// Effective fits of every path, with the corrected copies used downstream.
struct Fits {
    increments: Vec<PathIncrements>,
    effective: Vec<EffectiveParams>,
    corrected: Vec<EffectiveParams>,
}

fn fit_all(cfg: &RunConfig, tracks: &[TrackSeries]) -> CliResult<Fits> {
    let increments: Vec<PathIncrements> = tracks
        .iter()
        .map(PathIncrements::from_track)
        .collect::<Result<_, _>>()?;
    let mut effective = Vec::with_capacity(increments.len());
    let mut corrected = Vec::with_capacity(increments.len());
    for p in &increments {
        let e = fit_effective(p, &p.groups(cfg.rel_tol)?, cfg.diffusion_sum)?;
        for axis in Axis::BOTH {
            if e.axis(axis).d_nonpositive {
                log::warn!("path {}: D_{axis} = {} is not positive", e.path_id, e.axis(axis).d);
            }
        }
        let mut c = e.clone();
        if cfg.error_variance > 0.0 {
            c.x.d = correct_for_error(e.x.d, cfg.error_variance, e.duration)?;
            c.y.d = correct_for_error(e.y.d, cfg.error_variance, e.duration)?;
            c.x.d_nonpositive = c.x.d <= 0.0;
            c.y.d_nonpositive = c.y.d <= 0.0;
        }
        effective.push(e);
        corrected.push(c);
    }
    Ok(Fits {
        increments,
        effective,
        corrected,
    })
}

fn corrected_pair(cfg: &RunConfig, c: &EffectiveParams) -> Option<AxisPair<f64>> {
    (cfg.error_variance > 0.0).then_some(AxisPair { x: c.x.d, y: c.y.d })
}

/// Per-path and collective estimates with bootstrap intervals and the
/// per-path vs collective comparison table.
pub fn cmd_estimate(inv: &Invocation) -> CliResult<PathBuf> {
    let cfg = &inv.config;
    let tracks = inv.tracks("estimate")?;
    let fits = fit_all(cfg, &tracks)?;
    let settings = cfg.bootstrap.settings();

    let mut paths = Vec::with_capacity(tracks.len());
    for (k, (p, (e, c))) in fits
        .increments
        .iter()
        .zip(fits.effective.iter().zip(&fits.corrected))
        .enumerate()
    {
        let s = diffmig_core::BootstrapSettings {
            seed: derive_seed(settings.seed, k as u64 + 1),
            ..settings
        };
        let bootstrap = bootstrap_effective(p, &p.groups(cfg.rel_tol)?, &s, cfg.diffusion_sum)?;
        paths.push(PathReport {
            params: e.clone(),
            d_corrected: corrected_pair(cfg, c),
            bootstrap,
        });
    }

    let collective = estimate_collective(&fits.effective)?;
    let collective_corrected = estimate_collective(&fits.corrected)?;
    let (coll_boot, comparison) = if fits.increments.len() >= 2 {
        let b = bootstrap_collective(&fits.increments, cfg.rel_tol, &settings, cfg.diffusion_sum)?;
        let boots: Vec<BootstrapResult> = paths.iter().map(|p| p.bootstrap.clone()).collect();
        let rows = compare_models(&fits.effective, &boots, &collective)?;
        (Some(b), rows)
    } else {
        log::info!("single path: collective bootstrap and comparison skipped");
        (None, vec![])
    };
    let drift_significant = coll_boot.as_ref().map(|b| AxisPair {
        x: !b.beta_x.contains(0.0),
        y: !b.beta_y.contains(0.0),
    });
    let report = EstimateReport {
        collective: CollectiveReport {
            params: collective,
            d_corrected: (cfg.error_variance > 0.0).then_some(AxisPair {
                x: collective_corrected.x.d,
                y: collective_corrected.y.d,
            }),
            bootstrap: coll_boot,
            drift_significant,
        },
        paths,
        comparison,
    };

    write_estimates_csv(inv, &report)?;
    write_comparison_csv(inv, &report.comparison)?;
    write_report(inv, "estimate", "report.json", report)
}

fn write_estimates_csv(inv: &Invocation, report: &EstimateReport) -> CliResult<()> {
    let path = inv.output("estimates.csv")?;
    let mut w = csv_writer(&path)?;
    row(
        &mut w,
        &path,
        [
            "path_id", "axis", "n", "duration", "beta", "beta_lo", "beta_hi", "d", "d_lo", "d_hi",
            "d_corrected", "d_nonpositive",
        ]
        .map(String::from)
        .to_vec(),
    )?;
    let fmt = |v: f64| v.to_string();
    let mut emit = |id: &str,
                    n: String,
                    duration: f64,
                    axis: Axis,
                    est: &diffmig_core::AxisEstimate,
                    boot: Option<&BootstrapResult>,
                    corr: Option<AxisPair<f64>>|
     -> CliResult<()> {
        let ci = |param| {
            boot.map_or((String::new(), String::new()), |b: &BootstrapResult| {
                let c = b.ci(axis, param);
                (fmt(c.lower), fmt(c.upper))
            })
        };
        let (bl, bh) = ci(diffmig_core::Parameter::Beta);
        let (dl, dh) = ci(diffmig_core::Parameter::D);
        row(
            &mut w,
            &path,
            vec![
                id.to_string(),
                axis.to_string(),
                n,
                fmt(duration),
                fmt(est.beta),
                bl,
                bh,
                fmt(est.d),
                dl,
                dh,
                corr.map_or(String::new(), |c| fmt(c.get(axis))),
                est.d_nonpositive.to_string(),
            ],
        )
    };
    for p in &report.paths {
        for axis in Axis::BOTH {
            emit(
                &p.params.path_id,
                p.params.n.to_string(),
                p.params.duration,
                axis,
                p.params.axis(axis),
                Some(&p.bootstrap),
                p.d_corrected,
            )?;
        }
    }
    let c = &report.collective;
    for axis in Axis::BOTH {
        emit(
            "collective",
            String::new(),
            c.params.duration,
            axis,
            c.params.axis(axis),
            c.bootstrap.as_ref(),
            c.d_corrected,
        )?;
    }
    finish_csv(w, &path)
}

fn write_comparison_csv(inv: &Invocation, rows: &[ComparisonRow]) -> CliResult<()> {
    let path = inv.output("comparison.csv")?;
    let mut w = csv_writer(&path)?;
    row(
        &mut w,
        &path,
        ["path_id", "axis", "parameter", "effective", "collective", "standard_error", "z", "p_value"]
            .map(String::from)
            .to_vec(),
    )?;
    for r in rows {
        row(
            &mut w,
            &path,
            vec![
                r.path_id.clone(),
                r.axis.to_string(),
                r.parameter.as_str().to_string(),
                r.effective.to_string(),
                r.collective.to_string(),
                r.standard_error.to_string(),
                r.z.to_string(),
                r.p_value.to_string(),
            ],
        )?;
    }
    finish_csv(w, &path)
}

#[derive(Debug, Serialize)]
pub struct LabelledMatrix {
    /// `explicit`, `collective`, or a path id.
    pub source: String,
    #[serde(flatten)]
    pub matrix: ProportionMatrix,
}

#[derive(Debug, Serialize)]
pub struct ProportionsReport {
    pub matrices: Vec<LabelledMatrix>,
}

fn motion_from(c: &EffectiveParams) -> MotionParams {
    MotionParams::new(c.x.beta, c.y.beta, c.x.d, c.y.d)
}

/// Migration-proportion matrices over the configured areas at the horizon.
pub fn cmd_proportions(inv: &Invocation) -> CliResult<PathBuf> {
    let cfg = &inv.config;
    let domain = cfg.domain_rect()?;
    let horizon = cfg
        .horizon
        .ok_or_else(|| CliError::Usage("proportions requires \"horizon\" in the config".into()))?;
    if cfg.areas.is_empty() {
        return Err(CliError::Usage("proportions requires at least one area".into()));
    }
    let sources: Vec<(String, MotionParams)> = match &cfg.params {
        ParamsSource::Explicit(p) => vec![("explicit".into(), *p)],
        ParamsSource::Collective => {
            let fits = fit_all(cfg, &inv.tracks("proportions")?)?;
            let c = estimate_collective(&fits.corrected)?;
            vec![("collective".into(), MotionParams::from_collective(&c))]
        }
        ParamsSource::PerPath => {
            let fits = fit_all(cfg, &inv.tracks("proportions")?)?;
            fits.corrected
                .iter()
                .map(|c| (c.path_id.clone(), motion_from(c)))
                .collect()
        }
    };
    let mut matrices = Vec::with_capacity(sources.len());
    for (source, params) in sources {
        let matrix = proportion_matrix(
            &cfg.areas,
            cfg.final_areas(),
            &params,
            horizon,
            &domain,
            &cfg.image_sum,
            cfg.require_partition,
        )
        .map_err(|e| CliError::from(e).context(&source))?;
        matrices.push(LabelledMatrix { source, matrix });
    }

    let path = inv.output("proportions.csv")?;
    let mut w = csv_writer(&path)?;
    let mut header = vec!["source".to_string(), "initial".to_string()];
    header.extend(cfg.final_areas().iter().map(|a| a.name.clone()));
    header.push("row_sum".into());
    row(&mut w, &path, header)?;
    for m in &matrices {
        for (i, a) in m.matrix.initial.iter().enumerate() {
            let mut fields = vec![m.source.clone(), a.clone()];
            fields.extend(m.matrix.entries[i].iter().map(|v| v.to_string()));
            fields.push(m.matrix.row_sums[i].to_string());
            row(&mut w, &path, fields)?;
        }
    }
    finish_csv(w, &path)?;
    write_report(inv, "proportions", "proportions.json", ProportionsReport { matrices })
}

/// Standardized increments under per-path and collective parameters, and
/// their matched quantiles.
pub fn cmd_standardize(inv: &Invocation) -> CliResult<PathBuf> {
    let cfg = &inv.config;
    let tracks = inv.tracks("standardize")?;
    let fits = fit_all(cfg, &tracks)?;
    let collective = estimate_collective(&fits.corrected)?;
    let error_variance = (cfg.error_variance > 0.0).then_some(cfg.error_variance);

    let path = inv.output("standardized.csv")?;
    let mut w = csv_writer(&path)?;
    row(
        &mut w,
        &path,
        ["path_id", "axis", "index", "t", "dt", "u_effective", "u_collective"]
            .map(String::from)
            .to_vec(),
    )?;
    let qq_path = inv.output("qq.csv")?;
    let mut qq = csv_writer(&qq_path)?;
    row(
        &mut qq,
        &qq_path,
        ["axis", "k", "effective", "collective"].map(String::from).to_vec(),
    )?;
    for axis in Axis::BOTH {
        let (eff, coll) = standardized_pools(&fits.increments, &fits.corrected, &collective, axis, error_variance)?;
        let mut at = 0;
        for (p, track) in fits.increments.iter().zip(&tracks) {
            let times = track.times();
            for (i, inc) in p.axis(axis).increments().iter().enumerate() {
                row(
                    &mut w,
                    &path,
                    vec![
                        p.path_id.clone(),
                        axis.to_string(),
                        i.to_string(),
                        times[i + 1].to_string(),
                        inc.dt.to_string(),
                        eff[at].to_string(),
                        coll[at].to_string(),
                    ],
                )?;
                at += 1;
            }
        }
        for (k, (a, b)) in qq_pairs(&eff, &coll).into_iter().enumerate() {
            row(
                &mut qq,
                &qq_path,
                vec![axis.to_string(), (k + 1).to_string(), a.to_string(), b.to_string()],
            )?;
        }
    }
    finish_csv(w, &path)?;
    finish_csv(qq, &qq_path)?;
    Ok(path)
}

#[derive(Debug, Serialize)]
pub struct ValidationReport {
    pub passed: bool,
    pub checks: Vec<Check>,
}

/// Runs every oracle check; fails with a validation error when any check
/// fails, after the report is written.
pub fn cmd_validate(inv: &Invocation) -> CliResult<PathBuf> {
    let checks = run_all(&inv.config.validate);
    let stdout = std::io::stdout();
    let mut out = stdout.lock();
    for c in &checks {
        writeln!(out, "{}", c.summary_line()).map_err(|e| CliError::Io(e.to_string()))?;
    }
    let failed: Vec<String> = checks.iter().filter(|c| !c.passed).map(|c| c.id.clone()).collect();
    let path = write_report(
        inv,
        "validate",
        "validation.json",
        ValidationReport {
            passed: failed.is_empty(),
            checks,
        },
    )?;
    if failed.is_empty() {
        Ok(path)
    } else {
        Err(CliError::Validation(format!("failed checks: {}", failed.join(", "))))
    }
}
