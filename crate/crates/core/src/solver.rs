//! Direct integration of the dimensionless propagation equations
//!
//! ```text
//! dE/dz = i sqrt(d) P
//! dP/dt = -(1 + i delta) P + i sqrt(d) E + i Omega S
//! dS/dt = i Omega* P - gamma_s S
//! ```
//!
//! in the comoving frame. E lives on the `nz` grid nodes, P and S on the
//! `nz - 1` cell centers. Each time step is an implicit midpoint step in t
//! with midpoint quadrature in z; because E at the left edge of a cell only
//! depends on cells further left, the implicit step reduces to one sweep
//! in z. The scheme satisfies a discrete energy balance exactly:
//!
//! ```text
//! sum dz (|P|^2 + |S|^2) changes by h (|E_in|^2 - |E_out|^2)
//!     - 2 h dz sum |P|^2 - 2 h gamma_s dz sum |S|^2
//! ```
//!
//! with all right-hand quantities at step midpoints.

use crate::error::{Error, Result};
use crate::model::{flip_spin_wave, ControlField, FieldMode, Grid, Params, SpinWave};
use crate::quad::Spline;
use num_complex::Complex64 as C64;

const ZERO: C64 = C64 { re: 0.0, im: 0.0 };
const I: C64 = C64 { re: 0.0, im: 1.0 };

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StageKind {
    Storage,
    RetrievalForward,
    RetrievalBackward,
    /// Free absorption with no control, then an ideal pi pulse at the end.
    FastStorage,
    /// Ideal pi pulse at t = 0, then free emission with no control.
    FastRetrieval,
}

impl StageKind {
    pub fn is_storage(self) -> bool {
        matches!(self, StageKind::Storage | StageKind::FastStorage)
    }
}

#[derive(Debug, Clone)]
pub struct StageSpec {
    pub kind: StageKind,
    pub control: ControlField,
    pub input: Option<FieldMode>,
    pub spin: Option<SpinWave>,
}

impl StageSpec {
    pub fn storage(control: ControlField, input: FieldMode) -> StageSpec {
        StageSpec { kind: StageKind::Storage, control, input: Some(input), spin: None }
    }

    pub fn retrieval_forward(control: ControlField, spin: SpinWave) -> StageSpec {
        StageSpec { kind: StageKind::RetrievalForward, control, input: None, spin: Some(spin) }
    }

    /// The spin wave is flipped (with the nondegeneracy phase) before the run.
    pub fn retrieval_backward(control: ControlField, spin: SpinWave) -> StageSpec {
        StageSpec { kind: StageKind::RetrievalBackward, control, input: None, spin: Some(spin) }
    }

    pub fn fast_storage(input: FieldMode) -> StageSpec {
        let control = ControlField::zero(2, input.t_win);
        StageSpec { kind: StageKind::FastStorage, control, input: Some(input), spin: None }
    }

    pub fn fast_retrieval(spin: SpinWave, t_win: f64) -> StageSpec {
        let control = ControlField::zero(2, t_win);
        StageSpec { kind: StageKind::FastRetrieval, control, input: None, spin: Some(spin) }
    }

    pub fn validate(&self) -> Result<()> {
        if self.kind.is_storage() && self.input.is_none() {
            return Err(Error::InvalidParameter("storage stage requires an input mode".into()));
        }
        if !self.kind.is_storage() && self.spin.is_none() {
            return Err(Error::InvalidParameter("retrieval stage requires a spin wave".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct SolverOptions {
    /// Substep size is at most `theta / max(|Omega|, |delta|, d, 1)`.
    pub theta: f64,
    /// Control samples above this magnitude are clipped.
    pub omega_cap: f64,
    /// Largest allowed `d * dz`.
    pub max_cell_depth: f64,
    /// Keep E, P, S on the full grid (otherwise only the output line).
    pub record_fields: bool,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions { theta: 0.05, omega_cap: 1e3, max_cell_depth: 1.0, record_fields: true }
    }
}

/// Atomic coherences sampled on the z nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct AtomicState {
    pub p: Vec<C64>,
    pub s: Vec<C64>,
}

impl AtomicState {
    pub fn vacuum(nz: usize) -> AtomicState {
        AtomicState { p: vec![ZERO; nz], s: vec![ZERO; nz] }
    }

    pub fn from_spin(s: &SpinWave) -> AtomicState {
        AtomicState { p: vec![ZERO; s.len()], s: s.samples.clone() }
    }
}

/// Ideal instantaneous pi pulse: P -> i S, S -> i P.
pub fn apply_pi_pulse(state: &AtomicState) -> AtomicState {
    AtomicState { p: state.s.iter().map(|v| I * v).collect(), s: state.p.iter().map(|v| I * v).collect() }
}

#[derive(Debug, Clone)]
pub struct SimResult {
    pub kind: StageKind,
    pub times: Vec<f64>,
    pub z: Vec<f64>,
    /// `e_field[n][i] = E(z_i, t_n)`; empty unless fields were recorded.
    pub e_field: Vec<Vec<C64>>,
    pub p_field: Vec<Vec<C64>>,
    pub s_field: Vec<Vec<C64>>,
    /// E(1, t) on the time grid.
    pub output: FieldMode,
    /// S(z, T) on the z grid (after the pi pulse for fast storage).
    pub final_spin: SpinWave,
    pub final_state: AtomicState,
    /// Stored fraction (storage) or emitted fraction (retrieval).
    pub eta: f64,
    /// Input energy escaping through z = 1 during storage.
    pub leak: f64,
    /// 2 int int |P|^2.
    pub loss: f64,
    /// 2 gamma_s int int |S|^2.
    pub spin_loss: f64,
    /// Excitation left in the medium that is not counted in `eta`.
    pub residual: f64,
    /// Input energy, or initial excitation for retrieval.
    pub input_norm: f64,
    /// l(z) = 2 int |P(z, t)|^2 dt on the z nodes.
    pub loss_density: Vec<f64>,
    pub substeps: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnergyLedger {
    pub eta: f64,
    pub leak: f64,
    /// Polarization and spin decay combined.
    pub loss: f64,
    pub residual: f64,
    pub input_norm: f64,
}

impl EnergyLedger {
    pub fn total(&self) -> f64 {
        self.eta + self.leak + self.loss + self.residual
    }

    /// Conservation defect relative to the input norm.
    pub fn defect(&self) -> f64 {
        (self.total() - self.input_norm).abs() / self.input_norm.max(f64::MIN_POSITIVE)
    }
}

pub fn energy_ledger(result: &SimResult) -> EnergyLedger {
    EnergyLedger {
        eta: result.eta,
        leak: result.leak,
        loss: result.loss + result.spin_loss,
        residual: result.residual,
        input_norm: result.input_norm,
    }
}

pub fn simulate(params: &Params, grid: &Grid, stage: &StageSpec) -> Result<SimResult> {
    simulate_with(params, grid, stage, &SolverOptions::default())
}

fn node_to_cell(nodes: &[C64]) -> Vec<C64> {
    let n = nodes.len();
    let dz = 1.0 / (n - 1) as f64;
    let sp = Spline::new(0.0, 1.0, nodes);
    (0..n - 1).map(|c| sp.eval((c as f64 + 0.5) * dz)).collect()
}

fn cell_to_node(cells: &[C64]) -> Vec<C64> {
    let nc = cells.len();
    if nc == 1 {
        return vec![cells[0]; 2];
    }
    let dz = 1.0 / nc as f64;
    let sp = Spline::new(0.5 * dz, 1.0 - 0.5 * dz, cells);
    (0..=nc).map(|i| sp.eval(i as f64 * dz)).collect()
}

fn cell_to_node_real(cells: &[f64]) -> Vec<f64> {
    let c: Vec<C64> = cells.iter().map(|&v| C64::new(v, 0.0)).collect();
    cell_to_node(&c).into_iter().map(|v| v.re).collect()
}

fn clip(w: C64, cap: f64) -> C64 {
    let a = w.norm();
    if a > cap {
        w * (cap / a)
    } else {
        w
    }
}

pub fn simulate_with(params: &Params, grid: &Grid, stage: &StageSpec, opts: &SolverOptions) -> Result<SimResult> {
    params.validate()?;
    stage.validate()?;
    let nz = grid.nz;
    let nc = nz - 1;
    let dz = grid.dz();
    let d = params.d;
    let sd = d.sqrt();
    if d * dz > opts.max_cell_depth {
        return Err(Error::GridTooCoarse {
            detail: format!("d * dz = {:.3} exceeds {} (nz = {nz})", d * dz, opts.max_cell_depth),
            ratio: d * dz,
        });
    }
    let fast = matches!(stage.kind, StageKind::FastStorage | StageKind::FastRetrieval);
    let cap = opts.omega_cap;
    let omega_at = |t: f64| -> C64 {
        if fast {
            ZERO
        } else {
            clip(stage.control.eval_linear(t), cap)
        }
    };
    let input = stage.input.as_ref();
    let e_in_at = |t: f64| -> C64 { input.map_or(ZERO, |f| f.eval_linear(t)) };

    // Initial cell state.
    let (mut p, mut s) = match stage.kind {
        StageKind::Storage | StageKind::FastStorage => (vec![ZERO; nc], vec![ZERO; nc]),
        StageKind::RetrievalForward | StageKind::RetrievalBackward | StageKind::FastRetrieval => {
            let spin = stage.spin.as_ref().unwrap();
            let spin = if spin.len() == nz { spin.clone() } else { spin.resampled(nz) };
            let spin = match stage.kind {
                StageKind::RetrievalBackward => flip_spin_wave(&spin, params.dk),
                _ => spin,
            };
            let cells = node_to_cell(&spin.samples);
            if stage.kind == StageKind::FastRetrieval {
                let st = apply_pi_pulse(&AtomicState { p: vec![ZERO; nc], s: cells });
                (st.p, st.s)
            } else {
                (vec![ZERO; nc], cells)
            }
        }
    };
    let initial_excitation: f64 = dz * p.iter().chain(s.iter()).map(|v| v.norm_sqr()).sum::<f64>();

    let nt = grid.nt;
    let dt = grid.dt();
    let times: Vec<f64> = (0..nt).map(|n| grid.t(n)).collect();
    let z: Vec<f64> = (0..nz).map(|i| grid.z(i)).collect();
    let mut e_field = Vec::new();
    let mut p_field = Vec::new();
    let mut s_field = Vec::new();
    let mut output = Vec::with_capacity(nt);

    let e_nodes = |p: &[C64], e0: C64| -> Vec<C64> {
        let mut e = Vec::with_capacity(nz);
        let mut acc = e0;
        e.push(acc);
        for pc in p {
            acc += I * sd * dz * pc;
            e.push(acc);
        }
        e
    };
    let mut record = |p: &[C64], s: &[C64], t: f64, out: &mut Vec<C64>| {
        let e = e_nodes(p, e_in_at(t));
        out.push(e[nz - 1]);
        if opts.record_fields {
            e_field.push(e);
            p_field.push(cell_to_node(p));
            s_field.push(cell_to_node(s));
        }
    };
    record(&p, &s, 0.0, &mut output);

    let mut in_energy = 0.0;
    let mut out_energy = 0.0;
    let mut loss_cells = vec![0.0; nc];
    let mut spin_loss = 0.0;
    let mut substeps = 0usize;
    let one_id = C64::new(1.0, params.delta);
    let gs = params.gamma_s;

    for n in 0..nt - 1 {
        let t0 = times[n];
        let omega_peak = if fast {
            0.0
        } else {
            let a = omega_at(t0).norm().max(omega_at(times[n + 1]).norm());
            // Include interior samples when the control grid is finer.
            let c = &stage.control;
            let k0 = ((t0 / c.t_win) * (c.len() - 1) as f64).floor().max(0.0) as usize;
            let k1 = (((times[n + 1]) / c.t_win) * (c.len() - 1) as f64).ceil() as usize;
            let mut m = a;
            for k in k0..=k1.min(c.len() - 1) {
                m = m.max(c.samples[k].norm().min(cap));
            }
            m
        };
        let rate = omega_peak.max(params.delta.abs()).max(d).max(1.0);
        let m = ((dt * rate / opts.theta).ceil() as usize).max(1);
        let h = dt / m as f64;
        let a = 2.0 / h;
        for k in 0..m {
            let tm = t0 + (k as f64 + 0.5) * h;
            let om = omega_at(tm);
            let ein = e_in_at(tm);
            let om2 = om.norm_sqr();
            let denom = C64::new(a, 0.0) + one_id + 0.5 * d * dz + om2 / (a + gs);
            let mut q = ZERO;
            let mut cell_s2 = 0.0;
            for c in 0..nc {
                let rhs = a * p[c] + I * sd * ein - d * dz * q + I * om * a * s[c] / (a + gs);
                let pbar = rhs / denom;
                let sbar = (a * s[c] + I * om.conj() * pbar) / (a + gs);
                p[c] = 2.0 * pbar - p[c];
                s[c] = 2.0 * sbar - s[c];
                q += pbar;
                loss_cells[c] += 2.0 * h * pbar.norm_sqr();
                cell_s2 += sbar.norm_sqr();
            }
            let eout = ein + I * sd * dz * q;
            in_energy += h * ein.norm_sqr();
            out_energy += h * eout.norm_sqr();
            spin_loss += 2.0 * h * gs * dz * cell_s2;
        }
        substeps += m;
        if let Some(c) = p.iter().chain(s.iter()).position(|v| !v.is_finite()) {
            let c = c % nc;
            return Err(Error::NotFinite { z: (c as f64 + 0.5) * dz, t: times[n + 1] });
        }
        record(&p, &s, times[n + 1], &mut output);
    }

    let loss: f64 = dz * loss_cells.iter().sum::<f64>();
    let p_end: f64 = dz * p.iter().map(|v| v.norm_sqr()).sum::<f64>();
    let s_end: f64 = dz * s.iter().map(|v| v.norm_sqr()).sum::<f64>();

    if stage.kind == StageKind::FastStorage {
        let st = apply_pi_pulse(&AtomicState { p: p.clone(), s: s.clone() });
        p = st.p;
        s = st.s;
    }
    let final_state = AtomicState { p: cell_to_node(&p), s: cell_to_node(&s) };
    let final_spin = SpinWave::new(final_state.s.clone());
    let (eta, leak, residual, input_norm) = match stage.kind {
        StageKind::Storage => (s_end, out_energy, p_end, in_energy),
        // After the swap the stored excitation is the former polarization.
        StageKind::FastStorage => (p_end, out_energy, s_end, in_energy),
        _ => (out_energy, 0.0, p_end + s_end, initial_excitation + in_energy),
    };

    Ok(SimResult {
        kind: stage.kind,
        times,
        z,
        e_field,
        p_field,
        s_field,
        output: FieldMode::new(output, grid.t_win),
        final_spin,
        final_state,
        eta,
        leak,
        loss,
        spin_loss,
        residual,
        input_norm,
        loss_density: cell_to_node_real(&loss_cells),
        substeps,
    })
}
