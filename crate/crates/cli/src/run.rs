//! Subcommand execution: compute, write CSV, return a one-line summary.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use thiserror::Error;

use qudit_core::control::rabi_map;
use qudit_core::epr::{derivative_spectrum, powder_spectrum};
use qudit_core::observables::{chi_t_curve, entropy_from_heat_capacity, heat_capacity, ThermalGrid};
use qudit_core::pulse::{fit_many, nutation_fft, DecayFit};
use qudit_core::units::ghz_to_kelvin;
use qudit_core::universality::universality_test;

use crate::config::{ConfigError, RunConfig};
use crate::ingest::{ingest_path, IngestReport};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Process exit codes.
pub mod exit {
    pub const OK: i32 = 0;
    pub const CONFIG: i32 = 2;
    pub const MISSING_DATA: i32 = 3;
    pub const MALFORMED_DATA: i32 = 4;
    pub const FIT_FAILED: i32 = 5;
    /// Some inputs failed, the rest were processed and written.
    pub const PARTIAL: i32 = 6;
    pub const COMPUTE: i32 = 7;
    pub const IO: i32 = 8;
}

#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("missing data: {0}")]
    MissingData(String),
    #[error("malformed data: {0}")]
    MalformedData(String),
    #[error("fit failed: {0}")]
    FitFailed(String),
    #[error("computation failed: {0}")]
    Compute(#[from] qudit_core::Error),
    #[error("i/o error: {0}")]
    Io(String),
}

impl RunError {
    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::Config(_) => exit::CONFIG,
            RunError::MissingData(_) => exit::MISSING_DATA,
            RunError::MalformedData(_) => exit::MALFORMED_DATA,
            RunError::FitFailed(_) => exit::FIT_FAILED,
            RunError::Compute(_) => exit::COMPUTE,
            RunError::Io(_) => exit::IO,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Task {
    Spectrum,
    Heatcap,
    Chi,
    Levels,
    RabiMap,
    Universality,
    FitDecay,
    Nutation,
}

impl Task {
    pub const ALL: [Task; 8] =
        [Task::Spectrum, Task::Heatcap, Task::Chi, Task::Levels, Task::RabiMap, Task::Universality, Task::FitDecay, Task::Nutation];

    pub fn name(self) -> &'static str {
        match self {
            Task::Spectrum => "spectrum",
            Task::Heatcap => "heatcap",
            Task::Chi => "chi",
            Task::Levels => "levels",
            Task::RabiMap => "rabi-map",
            Task::Universality => "universality",
            Task::FitDecay => "fit-decay",
            Task::Nutation => "nutation",
        }
    }

    pub fn needs_data(self) -> bool {
        matches!(self, Task::FitDecay | Task::Nutation)
    }
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Task {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        Task::ALL.into_iter().find(|t| t.name() == s).ok_or_else(|| format!("unknown subcommand `{s}`"))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOutcome {
    pub files: Vec<PathBuf>,
    pub summary: String,
    /// Per-input failures that did not abort the run.
    pub failures: Vec<String>,
}

impl RunOutcome {
    pub fn exit_code(&self) -> i32 {
        if self.failures.is_empty() {
            exit::OK
        } else {
            exit::PARTIAL
        }
    }
}

/// `<task>_<preset>_<hash>.csv`, with the first 12 hex digits of the config hash.
pub fn output_name(task: &str, preset: &str, hash: &str) -> String {
    format!("{task}_{preset}_{}.csv", &hash[..12])
}

struct Writer<'a> {
    cfg: &'a RunConfig,
    hash: String,
    out_dir: &'a Path,
    files: Vec<PathBuf>,
}

impl<'a> Writer<'a> {
    fn new(cfg: &'a RunConfig, out_dir: &'a Path) -> Result<Self, RunError> {
        fs::create_dir_all(out_dir).map_err(|e| RunError::Io(format!("{}: {e}", out_dir.display())))?;
        Ok(Self { cfg, hash: cfg.hash(), out_dir, files: Vec::new() })
    }

    fn comments(&self, task: &str) -> Vec<String> {
        vec![
            format!("config_hash={}", self.hash),
            format!("version={VERSION}"),
            format!("task={task}"),
            format!("preset={}", self.cfg.preset),
        ]
    }

    fn write(&mut self, task: &str, body: impl FnOnce(&[String]) -> String) -> Result<(), RunError> {
        let path = self.out_dir.join(output_name(task, &self.cfg.preset, &self.hash));
        let text = body(&self.comments(task));
        fs::write(&path, text).map_err(|e| RunError::Io(format!("{}: {e}", path.display())))?;
        self.files.push(path);
        Ok(())
    }
}

fn table(comments: &[String], header: &str, rows: impl IntoIterator<Item = String>) -> String {
    let mut out = String::new();
    for c in comments {
        out.push_str(&format!("# {c}\n"));
    }
    out.push_str(header);
    out.push('\n');
    for r in rows {
        out.push_str(&r);
        out.push('\n');
    }
    out
}

fn thermal_grid(cfg: &RunConfig) -> Result<ThermalGrid, RunError> {
    let t = &cfg.thermal;
    Ok(ThermalGrid::log_spaced(t.t_min_k, t.t_max_k, t.n_points, cfg.field())?)
}

fn load_traces(data: Option<&Path>) -> Result<IngestReport, RunError> {
    let path = data.ok_or_else(|| RunError::MissingData("a trace file or directory is required".into()))?;
    let report = ingest_path(path)?;
    if report.traces.is_empty() {
        let detail: Vec<String> = report.failures.iter().map(|(p, r)| format!("{}: {r}", p.display())).collect();
        return Err(RunError::MalformedData(detail.join("; ")));
    }
    Ok(report)
}

fn trace_label(path: &Path) -> String {
    path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default()
}

/// Run one task, writing outputs to `out_dir`.
pub fn run_task(task: Task, cfg: &RunConfig, data: Option<&Path>, out_dir: &Path) -> Result<RunOutcome, RunError> {
    let mut w = Writer::new(cfg, out_dir)?;
    let mut failures = Vec::new();
    let summary = match task {
        Task::Spectrum => {
            let mut s = powder_spectrum(&cfg.spin_system(), &cfg.ensemble(), &cfg.spectrometer()?)?;
            if cfg.spectrometer.derivative {
                s = derivative_spectrum(&s)?;
            }
            w.write(task.name(), |c| s.to_csv(c))?;
            format!("kind={} peak_mT={:.3} integral={:.6e}", s.kind.as_str(), s.peak_field() * 1e3, s.integral())
        }
        Task::Heatcap => {
            let grid = thermal_grid(cfg)?;
            let c = heat_capacity(&cfg.spin_system(), &cfg.ensemble(), &grid)?;
            let (imax, cmax) = c.iter().copied().enumerate().fold((0, f64::MIN), |a, (i, v)| if v > a.1 { (i, v) } else { a });
            let entropy = entropy_from_heat_capacity(&grid.temperatures, &c);
            w.write(task.name(), |cm| {
                table(cm, "T_K,c_over_R", grid.temperatures.iter().zip(&c).map(|(t, v)| format!("{t:.9e},{v:.9e}")))
            })?;
            format!("c_max_over_R={cmax:.6} T_max_K={:.6} entropy_over_R={entropy:.6}", grid.temperatures[imax])
        }
        Task::Chi => {
            let grid = thermal_grid(cfg)?;
            let chi = chi_t_curve(&cfg.spin_system(), &cfg.ensemble(), &grid, cfg.thermal.probe_b_t)?;
            w.write(task.name(), |cm| {
                table(cm, "T_K,chiT_emu_K_per_mol", grid.temperatures.iter().zip(&chi).map(|(t, v)| format!("{t:.9e},{v:.9e}")))
            })?;
            let last = chi.len() - 1;
            format!("chiT_at_T_min={:.6} chiT_at_T_max={:.6}", chi[0], chi[last])
        }
        Task::Levels => {
            let es = cfg.spin_system().eigensystem(&cfg.field())?;
            let e = &es.energies;
            w.write(task.name(), |cm| {
                table(cm, "level,E_GHz,E_K", e.iter().enumerate().map(|(i, v)| format!("{},{v:.12e},{:.12e}", i + 1, ghz_to_kelvin(*v))))
            })?;
            format!("levels={} span_K={:.6}", e.len(), ghz_to_kelvin(e[e.len() - 1] - e[0]))
        }
        Task::RabiMap => {
            let sys = cfg.spin_system();
            let es = sys.eigensystem(&cfg.field())?;
            let map = rabi_map(&es, &sys, cfg.universality.drive_direction, sys.g())?;
            w.write(task.name(), |cm| map.to_csv(cm))?;
            let max = map.rate.iter().copied().fold(0.0, f64::max);
            format!("pairs_above_10_MHz_per_mT={} max_rate_MHz_per_mT={max:.4}", map.count_above(10.0))
        }
        Task::Universality => {
            let report = universality_test(&cfg.spin_system(), &cfg.field(), &cfg.universality_options())?;
            w.write(task.name(), |cm| {
                let mut c = cm.to_vec();
                c.push(format!("allowed_edges={} addressable_edges={}", report.allowed.len(), report.addressable.len()));
                report.result.to_csv(&c)
            })?;
            report.result.verdict()
        }
        Task::FitDecay => {
            let ingest = load_traces(data)?;
            failures.extend(ingest.failures.iter().map(|(p, r)| format!("{}: {r}", p.display())));
            let traces: Vec<_> = ingest.traces.iter().map(|(_, t)| t.clone()).collect();
            let fits = fit_many(&traces);
            let mut rows: Vec<(String, f64, DecayFit)> = Vec::new();
            for ((path, trace), fit) in ingest.traces.iter().zip(fits) {
                match fit {
                    Ok(f) => rows.push((trace_label(path), trace.field, f)),
                    Err(e) => failures.push(format!("{}: {e}", path.display())),
                }
            }
            if rows.is_empty() {
                return Err(RunError::FitFailed(failures.join("; ")));
            }
            let flagged = rows.iter().filter(|r| r.2.is_flagged()).count();
            w.write(task.name(), |cm| {
                table(cm, &format!("trace,{}", DecayFit::csv_header()), rows.iter().map(|(name, field, f)| format!("{name},{}", f.csv_row(*field))))
            })?;
            format!("fitted={} flagged={flagged} failed={}", rows.len(), failures.len())
        }
        Task::Nutation => {
            let ingest = load_traces(data)?;
            failures.extend(ingest.failures.iter().map(|(p, r)| format!("{}: {r}", p.display())));
            let opts = cfg.nutation_options();
            let mut results = Vec::new();
            for (path, trace) in &ingest.traces {
                match nutation_fft(trace, &opts) {
                    Ok(r) => results.push((trace_label(path), trace.field, r)),
                    Err(e) => failures.push(format!("{}: {e}", path.display())),
                }
            }
            if results.is_empty() {
                return Err(RunError::MalformedData(failures.join("; ")));
            }
            w.write(task.name(), |cm| {
                let rows = results.iter().flat_map(|(name, field, r)| {
                    r.peaks.iter().map(move |p| {
                        let cands: Vec<&str> = p.candidates.iter().map(|l| l.as_str()).collect();
                        format!("{name},{field},{:.6},{:.9e},{},{},{:.6}", p.freq, p.magnitude, p.label.as_str(), cands.join(";"), r.resolution)
                    })
                });
                table(cm, "trace,field_mT,freq_MHz,magnitude,label,candidates,resolution_MHz", rows)
            })?;
            w.write("nutation-spectrum", |cm| {
                let rows = results.iter().flat_map(|(name, _, r)| {
                    r.freq_axis.iter().zip(&r.magnitude).map(move |(f, m)| format!("{name},{f:.9e},{m:.9e}"))
                });
                table(cm, "trace,freq_MHz,magnitude", rows)
            })?;
            let peaks: usize = results.iter().map(|r| r.2.peaks.len()).sum();
            let ambiguous: usize = results.iter().map(|r| r.2.ambiguous_peaks().count()).sum();
            format!("traces={} peaks={peaks} ambiguous={ambiguous} failed={}", results.len(), failures.len())
        }
    };
    Ok(RunOutcome { files: w.files, summary, failures })
}
