//! Subcommand implementations. Every run writes into its own directory:
//!
//! | file            | content                                                  |
//! |-----------------|----------------------------------------------------------|
//! | `config.toml`   | resolved configuration with fiber and pulse written out  |
//! | `manifest.json` | config hash, seed, versions, execution settings, outputs |
//! | `run.log`       | human-readable log including wall time and warnings      |
//! | `fields.bin`    | field history, binary layout of `mmnlse::io`             |
//! | `fields.csv`    | same, columns `z,T,mode,re,im` (with `write_csv`)        |
//! | `l2.csv`        | `z,l2,rel_drift` per SSF checkpoint                      |
//! | `loss.csv`      | `iteration,total,pde,ic,lr` per training iteration       |
//! | `eval_loss.csv` | same columns, full collocation set every `eval_every`    |
//! | `net.bin/json`  | network checkpoint                                       |
//! | `metrics.csv`   | `mode,mse_abs,mse_re,mse_im,max_err` (normalized units)  |
//! | `errors.csv`    | `z,T,mode,abs_err,re_err,im_err` per grid point          |
//! | `tables.csv`    | `table,row,column,computed,printed,rel_dev,tolerance,gated,pass,note` |

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Instant;

use mmnlse::io::{load_field, save_field};
use mmnlse::net::{checkpoint, xavier_init, NetworkState};
use mmnlse::pinn::metrics::{field_errors, network_field};
use mmnlse::pinn::{analytic_reference, mse_vs_reference, train, LossRecord, ModeError, StopReason, TrainReport};
use mmnlse::spectral::TimeGrid;
use mmnlse::ssf::{gaussian_initial, propagate, ComplexFieldGrid};
use mmnlse::tables::{failures, reproduce_tables, TableCell, Tolerance};
use mmnlse::transforms::{frame_for, normalized_coefficients, NormalizedSystem};
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::config::{to_toml, Resolved, RunKind};
use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Manifest {
    pub tool: &'static str,
    pub version: &'static str,
    pub core_version: &'static str,
    pub kind: RunKind,
    pub preset: Option<String>,
    pub seed: u64,
    /// SHA-256 of `config.toml`.
    pub config_hash: String,
    pub config_file: &'static str,
    pub parallel_build: bool,
    pub threads: usize,
    /// True when the run's reductions are order-fixed, so re-running the
    /// config reproduces every output bit for bit.
    pub deterministic: bool,
    pub rerun: String,
    pub outputs: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOutcome {
    pub output_dir: PathBuf,
    pub outputs: Vec<String>,
    pub summary: String,
}

pub fn threads() -> usize {
    #[cfg(feature = "parallel")]
    {
        rayon::current_num_threads()
    }
    #[cfg(not(feature = "parallel"))]
    {
        1
    }
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

struct RunDir {
    dir: PathBuf,
    outputs: Vec<String>,
    log: String,
}

impl RunDir {
    fn create(dir: &Path) -> CliResult<Self> {
        fs::create_dir_all(dir).map_err(|e| CliError::Config(format!("output_dir {}: {e}", dir.display())))?;
        Ok(RunDir {
            dir: dir.to_path_buf(),
            outputs: Vec::new(),
            log: String::new(),
        })
    }

    fn path(&mut self, name: &str) -> PathBuf {
        if !self.outputs.iter().any(|o| o == name) {
            self.outputs.push(name.to_string());
        }
        self.dir.join(name)
    }

    fn log(&mut self, line: impl AsRef<str>) {
        self.log.push_str(line.as_ref());
        self.log.push('\n');
    }

    fn csv<S: Serialize>(&mut self, name: &str, rows: impl IntoIterator<Item = S>) -> CliResult<()> {
        let mut w = csv::Writer::from_path(self.path(name))?;
        for r in rows {
            w.serialize(r)?;
        }
        w.flush()?;
        Ok(())
    }

    fn field(&mut self, stem: &str, f: &ComplexFieldGrid, write_csv: bool) -> CliResult<()> {
        save_field(&self.path(&format!("{stem}.bin")), f)?;
        if write_csv {
            save_field(&self.path(&format!("{stem}.csv")), f)?;
        }
        Ok(())
    }

    fn finish(mut self, r: &Resolved, deterministic: bool) -> CliResult<RunOutcome> {
        let text = to_toml(&r.explicit())?;
        fs::write(self.path("config.toml"), &text)?;
        let manifest = Manifest {
            tool: "mmnlse",
            version: env!("CARGO_PKG_VERSION"),
            core_version: mmnlse::VERSION,
            kind: r.config.kind,
            preset: r.config.preset.clone(),
            seed: r.config.seed,
            config_hash: hex(&Sha256::digest(text.as_bytes())),
            config_file: "config.toml",
            parallel_build: cfg!(feature = "parallel"),
            threads: threads(),
            deterministic,
            rerun: format!("mmnlse run --config {}", self.dir.join("config.toml").display()),
            outputs: Vec::new(),
        };
        self.path("manifest.json");
        self.path("run.log");
        let manifest = Manifest {
            outputs: self.outputs.clone(),
            ..manifest
        };
        fs::write(self.dir.join("manifest.json"), serde_json::to_string_pretty(&manifest)?)?;
        fs::write(self.dir.join("run.log"), &self.log)?;
        Ok(RunOutcome {
            output_dir: self.dir,
            outputs: self.outputs,
            summary: self.log,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TablesOutcome {
    pub cells: Vec<TableCell>,
    pub report: String,
    pub n_failed: usize,
}

fn tolerance_text(t: &Tolerance) -> String {
    match t {
        Tolerance::Relative { rel } => format!("rel {rel}"),
        Tolerance::RelativeOrHalfDigit { rel } => format!("rel {rel} or half digit"),
        Tolerance::Absolute { abs } => format!("abs {abs}"),
        Tolerance::LastDigit { units } => format!("{units} last digit"),
        Tolerance::PeriodSlack { abs, period } => format!("abs {abs} +-1 period ({period:.6})"),
    }
}

/// Recompute the coefficient and scaling tables and compare with the printed
/// values.
pub fn cmd_tables() -> CliResult<TablesOutcome> {
    let cells = reproduce_tables()?;
    let n_failed = failures(&cells).len();
    let mut report = String::new();
    let _ = writeln!(report, "{:<5} {:<22} {:<18} {:>16} {:>12} {:>9}  verdict", "table", "row", "column", "computed", "printed", "rel.dev");
    for c in &cells {
        let verdict = match (c.gated, c.passes()) {
            (false, _) => "reported",
            (true, true) => "ok",
            (true, false) => "FAIL",
        };
        let _ = writeln!(
            report,
            "{:<5} {:<22} {:<18} {:>16.8e} {:>12} {:>8.3}%  {verdict} [{}]{}",
            c.table,
            c.row,
            c.column,
            c.computed,
            c.printed,
            100.0 * c.relative_deviation(),
            tolerance_text(&c.tolerance),
            if c.note.is_empty() { String::new() } else { format!(" {}", c.note) }
        );
    }
    let _ = writeln!(report, "{} cells, {} outside tolerance", cells.len(), n_failed);
    Ok(TablesOutcome { cells, report, n_failed })
}

#[derive(Serialize)]
struct TableRow<'a> {
    table: u8,
    row: &'a str,
    column: &'a str,
    computed: f64,
    printed: &'a str,
    rel_dev: f64,
    tolerance: String,
    gated: bool,
    pass: bool,
    note: &'a str,
}

fn write_tables(dir: &mut RunDir, t: &TablesOutcome) -> CliResult<()> {
    dir.csv(
        "tables.csv",
        t.cells.iter().map(|c| TableRow {
            table: c.table,
            row: &c.row,
            column: c.column,
            computed: c.computed,
            printed: c.printed,
            rel_dev: c.relative_deviation(),
            tolerance: tolerance_text(&c.tolerance),
            gated: c.gated,
            pass: c.passes(),
            note: c.note,
        }),
    )
}

#[derive(Serialize)]
struct L2Row {
    z: f64,
    l2: f64,
    rel_drift: f64,
}

#[derive(Serialize)]
struct ErrorRow {
    z: f64,
    #[serde(rename = "T")]
    t: f64,
    mode: usize,
    abs_err: f64,
    re_err: f64,
    im_err: f64,
}

fn system(r: &Resolved) -> CliResult<NormalizedSystem> {
    let frame = frame_for(&r.fiber, &r.pulse)?;
    Ok(normalized_coefficients(&r.fiber, &r.pulse, &frame, r.config.scaling)?)
}

fn mode_errors_csv(dir: &mut RunDir, errors: &[ModeError]) -> CliResult<()> {
    dir.csv("metrics.csv", errors.iter().copied())
}

fn error_grid_csv(dir: &mut RunDir, a: &ComplexFieldGrid, b: &ComplexFieldGrid, scale: f64) -> CliResult<()> {
    let times = a.grid.times();
    let mut rows = Vec::with_capacity(a.n_modes() * a.n_z() * a.n_t());
    for p in 0..a.n_modes() {
        for (iz, z) in a.z.iter().enumerate() {
            for ((x, y), t) in a.slice(p, iz).iter().zip(b.slice(p, iz)).zip(&times) {
                let (x, y) = (x / scale, y / scale);
                rows.push(ErrorRow {
                    z: *z,
                    t: *t,
                    mode: p + 1,
                    abs_err: x.norm() - y.norm(),
                    re_err: x.re - y.re,
                    im_err: x.im - y.im,
                });
            }
        }
    }
    dir.csv("errors.csv", rows)
}

fn run_ssf(r: &Resolved, dir: &mut RunDir) -> CliResult<()> {
    let cfg = r.ssf_config()?;
    let grid = TimeGrid::new(cfg.n_t, r.pulse.time_window)?;
    let start = Instant::now();
    let out = propagate(&gaussian_initial(&r.fiber, &r.pulse, &grid), &r.fiber, &grid, &cfg)?;
    dir.log(format!("ssf: n_z = {}, n_t = {}, {} checkpoints, {:.2} s", cfg.n_z, cfg.n_t, out.n_z(), start.elapsed().as_secs_f64()));
    dir.log(format!("ssf: L2 relative drift {:.3e}", out.l2_drift()));
    for w in &out.warnings {
        dir.log(format!("warning: {w}"));
    }
    let h = out.l2_history();
    dir.csv(
        "l2.csv",
        out.z.iter().zip(&h).map(|(z, e)| L2Row {
            z: *z,
            l2: *e,
            rel_drift: (e - h[0]) / h[0],
        }),
    )?;
    dir.field("fields", &out, r.config.write_csv)
}

fn run_analytic(r: &Resolved, dir: &mut RunDir) -> CliResult<()> {
    let cfg = r.ssf_config()?;
    let grid = TimeGrid::new(cfg.n_t, r.pulse.time_window)?;
    let out = analytic_reference(&r.fiber, &r.pulse, grid, &cfg.checkpoints(r.fiber.length))?;
    dir.log(format!("analytic: {} checkpoints on the SSF lattice, n_t = {}", out.n_z(), out.n_t()));
    dir.field("fields", &out, r.config.write_csv)
}

fn loss_rows(h: &[LossRecord]) -> impl Iterator<Item = LossRecord> + '_ {
    h.iter().copied()
}

fn run_train(r: &Resolved, dir: &mut RunDir) -> CliResult<()> {
    let sys = system(r)?;
    let cfg = r.train_config();
    let spec = r.network_spec();
    dir.log(format!(
        "train: {} blocks x {}, {} params, scaling {:?}, max |coefficient| {:.4e}",
        spec.n_blocks,
        spec.width,
        spec.n_params(),
        r.config.scaling,
        sys.max_abs_coefficient()
    ));
    let (state, report) = train(xavier_init(spec, r.config.seed), &sys, &cfg, |_| {})?;
    dir.csv("loss.csv", loss_rows(&report.history))?;
    dir.csv("eval_loss.csv", loss_rows(&report.eval_history))?;
    let last = report.history.last().copied();
    checkpoint::save(
        &dir.path("net.bin").with_extension(""),
        &state,
        report.history.len(),
        report.final_loss.or(last).map_or(f64::NAN, |l| l.total),
        report.final_loss.or(last).map_or(cfg.lr, |l| l.lr),
    )?;
    dir.path("net.json");
    fs::write(dir.path("report.json"), serde_json::to_string_pretty(&TrainSummary::of(&report))?)?;
    dir.log(format!("train: {} iterations in {:.1} s, stop {:?}", report.history.len(), report.wall_time_s, report.stop));
    if let Some(f) = report.final_loss {
        dir.log(format!("train: final loss {:.6e} (pde {:.6e}, ic {:.6e})", f.total, f.pde, f.ic));
    }
    if let StopReason::Aborted(e) = &report.stop {
        return Err(CliError::Numerical(format!("training aborted: {e}")));
    }
    if r.fiber.is_linear() {
        let z: Vec<f64> = (0..=20).map(|i| r.fiber.length * i as f64 / 20.0).collect();
        let reference = analytic_reference(&r.fiber, &r.pulse, TimeGrid::new(256, r.pulse.time_window)?, &z)?;
        let errors = mse_vs_reference(&state, &reference, &sys, &r.pulse, cfg.exec)?;
        for e in &errors {
            dir.log(format!("train: mode {} MSE |U| vs analytic {:.4e}", e.mode, e.mse_abs));
        }
        mode_errors_csv(dir, &errors)?;
    }
    Ok(())
}

#[derive(Serialize)]
struct TrainSummary<'a> {
    iterations: usize,
    wall_time_s: f64,
    stop: &'a StopReason,
    final_loss: Option<LossRecord>,
    tail_improvement_20pct: Option<f64>,
}

impl<'a> TrainSummary<'a> {
    fn of(r: &'a TrainReport) -> Self {
        TrainSummary {
            iterations: r.history.len(),
            wall_time_s: r.wall_time_s,
            stop: &r.stop,
            final_loss: r.final_loss,
            tail_improvement_20pct: r.tail_improvement(0.2),
        }
    }
}

fn is_field_file(path: &Path) -> bool {
    match path.extension().and_then(|e| e.to_str()) {
        Some("csv") => true,
        Some("bin") => fs::read(path).map(|b| b.starts_with(&mmnlse::io::FIELD_MAGIC)).unwrap_or(false),
        _ => false,
    }
}

fn load_network(path: &Path) -> CliResult<NetworkState> {
    let stem = path.with_extension("");
    let (state, _) = checkpoint::load(&stem).map_err(|e| CliError::Config(format!("compare.checkpoint {}: {e}", path.display())))?;
    Ok(state)
}

fn run_compare(r: &Resolved, dir: &mut RunDir) -> CliResult<()> {
    let c = r.config.compare.as_ref().expect("checked at resolve");
    let reference = load_field(&c.reference).map_err(|e| CliError::Config(format!("compare.reference {}: {e}", c.reference.display())))?;
    let scale = r.pulse.peak_power.sqrt();
    let candidate = if is_field_file(&c.checkpoint) {
        load_field(&c.checkpoint).map_err(|e| CliError::Config(format!("compare.checkpoint {}: {e}", c.checkpoint.display())))?
    } else {
        let state = load_network(&c.checkpoint)?;
        if state.spec.n_modes() != reference.n_modes() {
            return Err(CliError::Config(format!(
                "compare: checkpoint has {} modes, reference has {}",
                state.spec.n_modes(),
                reference.n_modes()
            )));
        }
        let sys = system(r)?;
        network_field(&state, &sys, r.pulse.peak_power, reference.grid, &reference.z, true, r.config.train.exec)?
    };
    let errors = field_errors(&candidate, &reference, scale)?;
    for e in &errors {
        dir.log(format!(
            "compare: mode {} MSE |U| {:.4e}, Re {:.4e}, Im {:.4e}, max {:.4e}",
            e.mode, e.mse_abs, e.mse_re, e.mse_im, e.max_err
        ));
    }
    mode_errors_csv(dir, &errors)?;
    error_grid_csv(dir, &candidate, &reference, scale)
}

/// Execute one resolved run.
pub fn cmd_run(r: &Resolved) -> CliResult<RunOutcome> {
    let mut dir = RunDir::create(&r.output_dir)?;
    let deterministic = r.config.train.reduction == mmnlse::exec::Reduction::Deterministic;
    let result = match r.config.kind {
        RunKind::Tables => {
            let t = cmd_tables()?;
            write_tables(&mut dir, &t)?;
            dir.log(&t.report);
            if t.n_failed > 0 {
                Err(CliError::Tolerance(format!("{} table cells outside tolerance", t.n_failed)))
            } else {
                Ok(())
            }
        }
        RunKind::Ssf => run_ssf(r, &mut dir),
        RunKind::Analytic => run_analytic(r, &mut dir),
        RunKind::Train => run_train(r, &mut dir),
        RunKind::Compare => run_compare(r, &mut dir),
    };
    if let Err(e) = &result {
        dir.log(format!("error: {e}"));
    }
    let outcome = dir.finish(r, deterministic)?;
    result.map(|_| outcome)
}

/// Run independent configurations on up to `jobs` threads. Output
/// directories must be distinct.
pub fn run_many(runs: &[Resolved], jobs: usize) -> CliResult<Vec<CliResult<RunOutcome>>> {
    let mut dirs: Vec<&PathBuf> = runs.iter().map(|r| &r.output_dir).collect();
    dirs.sort();
    if dirs.windows(2).any(|w| w[0] == w[1]) {
        return Err(CliError::Config("output_dir: parallel runs need distinct output directories".into()));
    }
    let next = AtomicUsize::new(0);
    let results: Mutex<Vec<Option<CliResult<RunOutcome>>>> = Mutex::new((0..runs.len()).map(|_| None).collect());
    std::thread::scope(|s| {
        for _ in 0..jobs.clamp(1, runs.len().max(1)) {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                if i >= runs.len() {
                    break;
                }
                let out = cmd_run(&runs[i]);
                results.lock().expect("no panics while holding the lock")[i] = Some(out);
            });
        }
    });
    Ok(results
        .into_inner()
        .expect("threads joined")
        .into_iter()
        .map(|r| r.expect("every run executed"))
        .collect())
}
