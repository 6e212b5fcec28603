//! Scenario commands: read the configuration, call the library, emit a CSV
//! and a summary. Every command returns its summary so sweeps can merge them.

use std::path::{Path, PathBuf};

use lmem::adiabatic::{
    adiabatic_retrieve, adiabatic_store, optimal_decayless_mode, shape_retrieval_control, shape_storage_control,
    ShapingConfig,
};
use lmem::fast::{fast_retrieve, fast_store};
use lmem::kernels::retrieval_efficiency;
use lmem::model::{flip_spin_wave, gaussian_like_input, ControlField, FieldMode, Grid, Params, SpinWave};
use lmem::optimizer::{
    optimal_backward_mode_with, optimal_forward_mode, optimal_nondegenerate_mode, time_reversal_iterate, Direction,
    ModeOptions, OptimResult,
};
use lmem::solver::{energy_ledger, simulate, SimResult, StageSpec};
use lmem::C64;
use rayon::prelude::*;

use crate::cache::KernelCache;
use crate::config::Config;
use crate::error::CliError;
use crate::output::{emit, read_complex_csv, Summary, Table};

/// Largest accepted energy-ledger defect of a solver run.
pub const DEFECT_LIMIT: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Profile {
    Fast,
    Reference,
}

impl Profile {
    pub fn name(self) -> &'static str {
        match self {
            Profile::Fast => "fast",
            Profile::Reference => "reference",
        }
    }

    pub fn nz(self) -> usize {
        match self {
            Profile::Fast => 101,
            Profile::Reference => 201,
        }
    }

    pub fn nt(self) -> usize {
        match self {
            Profile::Fast => 1001,
            Profile::Reference => 4001,
        }
    }

    pub fn mode_options(self) -> ModeOptions {
        match self {
            Profile::Fast => ModeOptions { nz: 101, tol_value: 1e-8, tol_mode: 1e-6, max_iters: 500 },
            Profile::Reference => ModeOptions::default(),
        }
    }
}

pub struct Ctx {
    pub cfg: Config,
    pub profile: Profile,
    pub cache: KernelCache,
}

pub const COMMANDS: &[&str] = &["retrieve", "store", "store-retrieve", "optimize-mode", "shape-control"];

impl Ctx {
    pub fn params(&self) -> Result<Params, CliError> {
        let c = &self.cfg;
        let d = c.f64_or("params", "d", 10.0)?;
        if d <= 0.0 {
            return Err(c.error_at("params", "d", format!("optical depth must be positive, got {d}")));
        }
        let gamma_s = c.f64_or("params", "gamma_s", 0.0)?;
        if gamma_s < 0.0 {
            return Err(c.error_at("params", "gamma_s", format!("spin decay must be non-negative, got {gamma_s}")));
        }
        let delta = c.f64_or("params", "delta", 0.0)?;
        let dk = c.f64_or("params", "dk", 0.0)?;
        Ok(Params::new(d, delta, gamma_s, dk)?)
    }

    pub fn grid(&self) -> Result<Grid, CliError> {
        let c = &self.cfg;
        let nz = c.usize_or("grid", "nz", self.profile.nz())?;
        let nt = c.usize_or("grid", "nt", self.profile.nt())?;
        let t_win = c.f64_or("grid", "t_win", 10.0)?;
        if t_win <= 0.0 {
            return Err(c.error_at("grid", "t_win", format!("window must be positive, got {t_win}")));
        }
        if nz < 3 {
            return Err(c.error_at("grid", "nz", "need at least 3 points"));
        }
        if nt < 3 {
            return Err(c.error_at("grid", "nt", "need at least 3 points"));
        }
        Ok(Grid::new(nz, nt, t_win)?)
    }

    fn direction(&self) -> Result<Direction, CliError> {
        Ok(match self.cfg.choice("run", "direction", "backward", &["backward", "forward"])? {
            "forward" => Direction::Forward,
            _ => Direction::Backward,
        })
    }

    fn method(&self) -> Result<&str, CliError> {
        self.cfg.choice("run", "method", "solver", &["solver", "adiabatic", "fast"])
    }

    pub fn shaping(&self, p: &Params) -> Result<ShapingConfig, CliError> {
        let c = &self.cfg;
        let mut s = ShapingConfig::for_params(p);
        s.complete_factor = c.f64_or("control", "complete_factor", s.complete_factor)?;
        s.h_total = c.f64_or("control", "h_total", s.complete_factor * p.completeness_scale() / p.d)?;
        s.omega_cap = c.f64_or("control", "omega_cap", s.omega_cap)?;
        s.eps_div = c.f64_or("control", "eps_div", s.eps_div)?;
        s.validate(p).map_err(|e| self.cfg.error_at("control", "h_total", e.to_string()))?;
        Ok(s)
    }

    /// Fixed-shape control scaled to the configured control energy.
    fn plain_control(&self, p: &Params, grid: &Grid) -> Result<ControlField, CliError> {
        let c = &self.cfg;
        let factor = c.f64_or("control", "complete_factor", 10.0)?;
        let h = c.f64_or("control", "h_total", factor * p.completeness_scale() / p.d)?;
        if h <= 0.0 {
            return Err(c.error_at("control", "h_total", "control energy must be positive"));
        }
        let t_win = grid.t_win;
        let shape = c.choice("control", "shape", "constant", &["constant", "ramp", "sin2", "shaped"])?;
        let f: fn(f64) -> f64 = match shape {
            "ramp" => |u| u,
            "sin2" => |u| (std::f64::consts::PI * u).sin().powi(2),
            "shaped" => return Err(c.error_at("control", "shape", "`shaped` controls apply to storage only")),
            _ => |_| 1.0,
        };
        let raw = ControlField::from_fn(grid.nt, t_win, |t| C64::new(f(t / t_win), 0.0));
        Ok(raw.scaled((h / raw.h_total()).sqrt()))
    }

    fn backward_optimum(&self, d: f64) -> Result<OptimResult, CliError> {
        let k = self.cache.kernel(d)?;
        Ok(optimal_backward_mode_with(&k, &self.profile.mode_options())?)
    }

    /// Spin wave in stored coordinates (z measured from the input face).
    fn spin(&self, p: &Params, nz: usize, direction: Direction) -> Result<SpinWave, CliError> {
        let c = &self.cfg;
        let s = match c.choice("spin", "kind", "optimal", &["optimal", "flat", "linear", "parabola", "file"])? {
            "flat" => SpinWave::flat(nz),
            "linear" => SpinWave::linear(nz),
            "parabola" => SpinWave::parabola(nz),
            "file" => {
                let path =
                    c.entry("spin", "path").ok_or_else(|| c.error_at("spin", "kind", "`file` needs [spin] path"))?;
                let (_, v) = read_complex_csv(Path::new(&path.value))?;
                SpinWave::new(v).resampled(nz)
            }
            _ => {
                // The optimum for the chosen direction, read from the input face.
                let m = self.backward_optimum(p.d)?.mode.resampled(nz);
                match direction {
                    Direction::Forward => m,
                    Direction::Backward => flip_spin_wave(&m, 0.0),
                }
            }
        };
        if s.norm_sq() <= 0.0 {
            return Err(c.error_at("spin", "kind", "spin wave is identically zero"));
        }
        Ok(s.normalized())
    }

    /// Normalized input pulse on the grid.
    fn input(&self, grid: &Grid) -> Result<FieldMode, CliError> {
        let c = &self.cfg;
        let e = match c.choice("input", "kind", "gaussian", &["gaussian", "file"])? {
            "file" => {
                let path =
                    c.entry("input", "path").ok_or_else(|| c.error_at("input", "kind", "`file` needs [input] path"))?;
                let (t, v) = read_complex_csv(Path::new(&path.value))?;
                let span = t[t.len() - 1] - t[0];
                if span <= 0.0 {
                    return Err(c.error_at("input", "path", "time column must increase"));
                }
                FieldMode::new(v, span).resampled(grid.nt)
            }
            _ => gaussian_like_input(grid.t_win, grid.nt)?,
        };
        if e.norm_sq() <= 0.0 {
            return Err(c.error_at("input", "kind", "input pulse is identically zero"));
        }
        Ok(e.normalized())
    }

    fn record_params(&self, s: &mut Summary, p: &Params) {
        s.text("profile", self.profile.name());
        s.num("d", p.d);
        s.num("delta", p.delta);
        s.num("gamma_s", p.gamma_s);
        s.num("dk", p.dk);
    }
}

/// Spin wave seen by a forward-geometry retrieval in `direction`.
fn retrieval_view(s: &SpinWave, direction: Direction, dk: f64) -> SpinWave {
    match direction {
        Direction::Forward => s.clone(),
        Direction::Backward => flip_spin_wave(s, dk),
    }
}

fn direction_name(d: Direction) -> &'static str {
    match d {
        Direction::Backward => "backward",
        Direction::Forward => "forward",
    }
}

/// Records the energy ledger and collects a violation, if any.
fn ledger(s: &mut Summary, prefix: &str, r: &SimResult, failures: &mut Vec<String>) {
    let l = energy_ledger(r);
    s.num(format!("{prefix}leak"), l.leak);
    s.num(format!("{prefix}loss"), l.loss);
    s.num(format!("{prefix}residual"), l.residual);
    s.num(format!("{prefix}defect"), l.defect());
    if l.defect() >= DEFECT_LIMIT {
        failures.push(format!("{prefix}defect {:e} >= {DEFECT_LIMIT:e}", l.defect()));
    }
}

fn finish(
    dir: &Path,
    stem: &str,
    table: &Table,
    mut summary: Summary,
    failures: Vec<String>,
) -> Result<Summary, CliError> {
    summary.flag("tolerance_met", failures.is_empty());
    emit(dir, stem, table, &summary)?;
    if failures.is_empty() {
        Ok(summary)
    } else {
        Err(CliError::Tolerance(failures.join("; ")))
    }
}

fn z_column(n: usize) -> Vec<f64> {
    (0..n).map(|i| i as f64 / (n - 1) as f64).collect()
}

fn t_column(f: &FieldMode) -> Vec<f64> {
    (0..f.len()).map(|n| f.t(n)).collect()
}

pub fn run(ctx: &Ctx, command: &str, dir: &Path) -> Result<Summary, CliError> {
    match command {
        "retrieve" => retrieve(ctx, dir),
        "store" => store(ctx, dir),
        "store-retrieve" => store_retrieve(ctx, dir),
        "optimize-mode" => optimize_mode(ctx, dir),
        "shape-control" => shape_control(ctx, dir),
        other => Err(CliError::Invalid(format!("unknown command `{other}`"))),
    }
}

fn retrieve(ctx: &Ctx, dir: &Path) -> Result<Summary, CliError> {
    let p = ctx.params()?;
    let grid = ctx.grid()?;
    let direction = ctx.direction()?;
    let method = ctx.method()?;
    let s = ctx.spin(&p, grid.nz, direction)?;
    let view = retrieval_view(&s, direction, p.dk);
    let mut summary = Summary::new();
    summary.text("command", "retrieve");
    ctx.record_params(&mut summary, &p);
    summary.text("method", method);
    summary.text("direction", direction_name(direction));
    let mut failures = Vec::new();
    let output = match method {
        "fast" => fast_retrieve(&view, p.d, grid.nt),
        "adiabatic" => adiabatic_retrieve(&view, &ctx.plain_control(&p, &grid)?, &p),
        _ => {
            let control = ctx.plain_control(&p, &grid)?;
            let stage = match direction {
                Direction::Forward => StageSpec::retrieval_forward(control, s),
                Direction::Backward => StageSpec::retrieval_backward(control, s),
            };
            let r = simulate(&p, &grid, &stage)?;
            ledger(&mut summary, "", &r, &mut failures);
            r.output
        }
    };
    summary.num("eta", output.norm_sq());
    summary.num("kernel_eta", retrieval_efficiency(&view, p.d));
    let mut table = Table::new();
    table.push("t", t_column(&output));
    table.push_complex("e_out", &output.samples);
    finish(dir, "retrieve", &table, summary, failures)
}

/// Stored spin wave, the storage efficiency and any ledger violations.
fn run_storage(
    ctx: &Ctx,
    p: &Params,
    grid: &Grid,
    summary: &mut Summary,
    failures: &mut Vec<String>,
) -> Result<SpinWave, CliError> {
    let method = ctx.method()?;
    let input = ctx.input(grid)?;
    summary.text("method", method);
    if method == "fast" {
        return Ok(fast_store(&input, p.d, grid.nz));
    }
    let shaped = ctx.cfg.choice("control", "shape", "constant", &["constant", "ramp", "sin2", "shaped"])? == "shaped";
    let control = if shaped {
        let tol = ctx.cfg.f64_or("run", "tol", 1e-12)?;
        let mode = optimal_decayless_mode(p.d, tol)?.mode;
        shape_storage_control(&input, &mode, p, &ctx.shaping(p)?)?
    } else {
        ctx.plain_control(p, grid)?
    };
    summary.num("control_h_total", control.h_total());
    summary.num("control_max_abs", control.max_abs());
    if method == "adiabatic" {
        return Ok(adiabatic_store(&input, &control, p, grid.nz));
    }
    let r = simulate(p, grid, &StageSpec::storage(control, input))?;
    ledger(summary, "", &r, failures);
    Ok(r.final_spin)
}

fn store(ctx: &Ctx, dir: &Path) -> Result<Summary, CliError> {
    let p = ctx.params()?;
    let grid = ctx.grid()?;
    let mut summary = Summary::new();
    summary.text("command", "store");
    ctx.record_params(&mut summary, &p);
    let mut failures = Vec::new();
    let stored = run_storage(ctx, &p, &grid, &mut summary, &mut failures)?;
    summary.num("eta", stored.norm_sq());
    summary.num("total_backward", retrieval_efficiency(&flip_spin_wave(&stored, p.dk), p.d));
    summary.num("total_forward", retrieval_efficiency(&stored, p.d));
    let mut table = Table::new();
    table.push("z", z_column(stored.len()));
    table.push_complex("s", &stored.samples);
    finish(dir, "store", &table, summary, failures)
}

fn store_retrieve(ctx: &Ctx, dir: &Path) -> Result<Summary, CliError> {
    let p = ctx.params()?;
    let grid = ctx.grid()?;
    let direction = ctx.direction()?;
    let mut summary = Summary::new();
    summary.text("command", "store-retrieve");
    ctx.record_params(&mut summary, &p);
    summary.text("direction", direction_name(direction));
    let mut failures = Vec::new();
    let stored = run_storage(ctx, &p, &grid, &mut summary, &mut failures)?;
    let view = retrieval_view(&stored, direction, p.dk);
    // Complete retrieval with a constant control over the same window.
    let h = 10.0 * p.completeness_scale() / p.d;
    let control = ControlField::constant(grid.nt, grid.t_win, (h / grid.t_win).sqrt());
    let output = match ctx.method()? {
        "fast" => fast_retrieve(&view, p.d, grid.nt),
        "adiabatic" => adiabatic_retrieve(&view, &control, &p),
        _ => {
            let stage = match direction {
                Direction::Forward => StageSpec::retrieval_forward(control, stored.clone()),
                Direction::Backward => StageSpec::retrieval_backward(control, stored.clone()),
            };
            let r = simulate(&p, &grid, &stage)?;
            ledger(&mut summary, "retrieval_", &r, &mut failures);
            r.output
        }
    };
    let optimum = match direction {
        Direction::Backward => ctx.backward_optimum(p.d)?.efficiency.powi(2),
        Direction::Forward => optimal_forward_mode(p.d, &ctx.profile.mode_options())?.efficiency,
    };
    summary.num("eta_storage", stored.norm_sq());
    summary.num("eta_total", output.norm_sq());
    summary.num("kernel_total", retrieval_efficiency(&view, p.d));
    summary.num("optimum_total", optimum);
    let mut table = Table::new();
    table.push("t", t_column(&output));
    table.push_complex("e_out", &output.samples);
    finish(dir, "store_retrieve", &table, summary, failures)
}

fn optimize_mode(ctx: &Ctx, dir: &Path) -> Result<Summary, CliError> {
    let p = ctx.params()?;
    let opts = ctx.profile.mode_options();
    let kind = ctx.cfg.choice(
        "run",
        "kind",
        "backward",
        &["backward", "forward", "nondegenerate", "decayless", "time-reversal"],
    )?;
    let mut summary = Summary::new();
    summary.text("command", "optimize-mode");
    summary.text("kind", kind);
    ctx.record_params(&mut summary, &p);
    let mut table = Table::new();
    let mut failures = Vec::new();
    let record = |summary: &mut Summary, table: &mut Table, r: &OptimResult| {
        summary.num("efficiency", r.efficiency);
        summary.num("eigenvalue_re", r.eigenvalue.re);
        summary.num("eigenvalue_im", r.eigenvalue.im);
        summary.num("iterations", r.iterations as f64);
        summary.num("residual", r.residual);
        table.push("z", z_column(r.mode.len()));
        table.push_complex("s", &r.mode.samples);
    };
    match kind {
        "backward" => record(&mut summary, &mut table, &ctx.backward_optimum(p.d)?),
        "forward" => record(&mut summary, &mut table, &optimal_forward_mode(p.d, &opts)?),
        "nondegenerate" => record(&mut summary, &mut table, &optimal_nondegenerate_mode(p.d, p.dk, &opts)?),
        "decayless" => {
            let tol = ctx.cfg.f64_or("run", "tol", 1e-12)?;
            let o = optimal_decayless_mode(p.d, tol)?;
            summary.num("efficiency", o.efficiency);
            summary.num("iterations", o.iterations as f64);
            summary.num("tail_mass", o.tail_mass);
            summary.num("z_max", o.mode.z_max);
            table.push("z", (0..o.mode.len()).map(|i| o.mode.z(i)).collect());
            table.push_complex("s", &o.mode.samples);
        }
        _ => {
            let grid = ctx.grid()?;
            let direction = ctx.direction()?;
            let seed = ctx.input(&grid)?;
            let control = ctx.plain_control(&p, &grid)?;
            let max_iters = ctx.cfg.usize_or("run", "max_iters", 30)?;
            let tol = ctx.cfg.f64_or("run", "tol", 1e-4)?;
            let r =
                time_reversal_iterate(&p, &grid, &control, &control.time_reversed(), &seed, direction, max_iters, tol)?;
            let predicted = match direction {
                Direction::Backward => ctx.backward_optimum(p.d)?.efficiency.powi(2),
                Direction::Forward => optimal_forward_mode(p.d, &opts)?.efficiency,
            };
            summary.text("direction", direction_name(direction));
            summary.num("efficiency", r.efficiency);
            summary.num("kernel_prediction", predicted);
            summary.num("iterations", r.iterations as f64);
            summary.num("residual", r.residual);
            summary.list("history", &r.history);
            if r.residual > tol {
                failures.push(format!(
                    "time reversal residual {:e} > {tol:e} after {} iterations",
                    r.residual, r.iterations
                ));
            }
            table.push("t", t_column(&r.input));
            table.push_complex("e_in", &r.input.samples);
        }
    }
    finish(dir, "optimize_mode", &table, summary, failures)
}

fn shape_control(ctx: &Ctx, dir: &Path) -> Result<Summary, CliError> {
    let p = ctx.params()?;
    let grid = ctx.grid()?;
    let cfg = ctx.shaping(&p)?;
    let stage = ctx.cfg.choice("run", "stage", "storage", &["storage", "retrieval"])?;
    let field = ctx.input(&grid)?;
    let mut summary = Summary::new();
    summary.text("command", "shape-control");
    summary.text("stage", stage);
    ctx.record_params(&mut summary, &p);
    summary.num("h_total", cfg.h_total);
    summary.num("omega_cap", cfg.omega_cap);
    let control = if stage == "retrieval" {
        let direction = ctx.direction()?;
        let view = retrieval_view(&ctx.spin(&p, grid.nz, direction)?, direction, p.dk);
        let c = shape_retrieval_control(&view, &field, &p, &cfg)?;
        let out = adiabatic_retrieve(&view, &c, &p);
        summary.text("direction", direction_name(direction));
        summary.num("overlap", out.overlap(&field));
        summary.num("eta", out.norm_sq());
        summary.num("kernel_eta", retrieval_efficiency(&view, p.d));
        c
    } else {
        let tol = ctx.cfg.f64_or("run", "tol", 1e-12)?;
        let mode = optimal_decayless_mode(p.d, tol)?.mode;
        let c = shape_storage_control(&field, &mode, &p, &cfg)?;
        let stored = adiabatic_store(&field, &c, &p, grid.nz);
        summary.num("eta_storage", stored.norm_sq());
        summary.num("total_backward", retrieval_efficiency(&flip_spin_wave(&stored, p.dk), p.d));
        summary.num("optimum_total", ctx.backward_optimum(p.d)?.efficiency.powi(2));
        c
    };
    summary.num("control_max_abs", control.max_abs());
    let mut table = Table::new();
    table.push("t", (0..control.len()).map(|n| control.t(n)).collect());
    table.push_complex("omega", &control.samples);
    table.push("h", control.h_cum.clone());
    finish(dir, "shape_control", &table, summary, Vec::new())
}

/// Config location of a swept parameter.
fn sweep_target(param: &str) -> Option<(&'static str, &'static str)> {
    Some(match param {
        "d" => ("params", "d"),
        "delta" => ("params", "delta"),
        "gamma_s" => ("params", "gamma_s"),
        "dk" => ("params", "dk"),
        "t_win" => ("grid", "t_win"),
        "nz" => ("grid", "nz"),
        "nt" => ("grid", "nt"),
        "h_total" => ("control", "h_total"),
        "complete_factor" => ("control", "complete_factor"),
        "omega_cap" => ("control", "omega_cap"),
        _ => return None,
    })
}

/// Runs every point on the current thread pool; each point writes its own
/// files under `points/`, and the merged table follows the value order.
pub fn sweep(ctx: &Ctx, dir: &Path) -> Result<Summary, CliError> {
    let c = &ctx.cfg;
    let command = c.choice("sweep", "command", "store-retrieve", COMMANDS)?;
    let param = c.str_or("sweep", "param", "d");
    let (section, key) =
        sweep_target(param).ok_or_else(|| c.error_at("sweep", "param", format!("cannot sweep `{param}`")))?;
    let values = c.list_or("sweep", "values", &[])?;
    if values.is_empty() {
        return Err(c.error_at("sweep", "values", "need at least one value"));
    }
    let results: Vec<Result<Summary, CliError>> = values
        .par_iter()
        .enumerate()
        .map(|(i, v)| {
            let mut cfg = c.clone();
            let text = if matches!(key, "nz" | "nt") { format!("{}", *v as usize) } else { crate::output::fmt_num(*v) };
            cfg.set(section, key, text);
            let point = Ctx { cfg, profile: ctx.profile, cache: ctx.cache.clone() };
            run(&point, command, &point_dir(dir, i))
        })
        .collect();
    let mut summaries = Vec::with_capacity(results.len());
    for r in results {
        summaries.push(r?);
    }
    let keys: Vec<String> = summaries[0].numeric().into_iter().map(|(k, _)| k).filter(|k| k != param).collect();
    let mut table = Table::new();
    table.push(param, values.clone());
    for k in &keys {
        table.push(
            k.clone(),
            summaries.iter().map(|s| s.get(k).and_then(|v| v.parse().ok()).unwrap_or(f64::NAN)).collect(),
        );
    }
    let mut summary = Summary::new();
    summary.text("command", "sweep");
    summary.text("point_command", command);
    summary.text("param", param);
    summary.list("values", &values);
    summary.num("points", values.len() as f64);
    summary.text("profile", ctx.profile.name());
    emit(dir, "sweep", &table, &summary)?;
    Ok(summary)
}

pub fn point_dir(dir: &Path, i: usize) -> PathBuf {
    dir.join("points").join(format!("point_{i:04}"))
}
