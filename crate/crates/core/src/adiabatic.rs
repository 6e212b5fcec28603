//! Adiabatic (P eliminated) storage and retrieval, the decayless storage map,
//! control shaping, and the effective EIT window.
//!
//! With `c = 1 / (1 + i delta)` the retrieval propagator is
//!
//! ```text
//! E(1, t) = Omega(t) R(h(0, t)),
//! R(H) = -sqrt(d) int_0^1 c e^{-c (H + d z)} I0(2 c sqrt(H d z)) S(1 - z) dz,
//! ```
//!
//! evaluated as `c e^{-c (sqrt H - sqrt(d z))^2} i0e(2 c sqrt(H d z))` so that
//! nothing overflows. All z integrals substitute `z = u^2`, which turns the
//! square-root structure of the kernels into plain Gaussians in `u`.

use crate::bessel::{i0e, i0e_complex, j0};
use crate::error::{Error, Result};
use crate::model::{segment_energy, ControlField, DecaylessMode, FieldMode, Params, SpinWave};
use crate::optimizer::{dominant_symmetric, ModeOptions};
use crate::quad::{self, gauss_legendre, Mesh, Spline, PANEL_ORDER};
use num_complex::Complex64 as C64;
use rayon::prelude::*;

const ZERO: C64 = C64 { re: 0.0, im: 0.0 };
const I: C64 = C64 { re: 0.0, im: 1.0 };
/// Below this |delta| the decayless machinery uses its resonant limit.
pub const RESONANT_DELTA: f64 = 1e-3;
/// Nodes of the cumulative h tables used by the shaping routines.
pub const H_TABLE_NODES: usize = 4096;

/// Gauss-Legendre mesh on `[0, z_max]` in the variable `u = sqrt(z)`, with
/// the Jacobian folded into the weights.
fn sqrt_mesh(z_max: f64, panels: usize) -> Mesh {
    let m = Mesh::uniform(0.0, z_max.sqrt(), panels.max(1), PANEL_ORDER);
    Mesh {
        nodes: m.nodes.iter().map(|u| u * u).collect(),
        weights: m.nodes.iter().zip(&m.weights).map(|(u, w)| 2.0 * u * w).collect(),
    }
}

/// Retrieval propagator R(H) for a fixed spin wave.
#[derive(Debug, Clone)]
pub struct Propagator {
    d: f64,
    c: C64,
    /// z nodes and weights, with S(1 - z) at each node.
    z: Vec<f64>,
    w: Vec<f64>,
    s_flip: Vec<C64>,
}

impl Propagator {
    pub fn new(s: &SpinWave, d: f64, delta: f64) -> Propagator {
        let c = C64::new(1.0, delta).inv();
        let sd = d.sqrt();
        // Gaussian width in u is ~1/sqrt(d Re c); the phase Im c (sqrt H - sqrt(d) u)^2
        // is handled per evaluation by `panels_for`.
        let panels = ((1.0 / (0.4 / sd.max(1.0)).min(0.05)).ceil() as usize).max(20);
        let m = sqrt_mesh(1.0, panels);
        let sp = s.spline();
        let s_flip = m.nodes.iter().map(|&z| sp.eval(1.0 - z)).collect();
        Propagator { d, c, z: m.nodes, w: m.weights, s_flip }
    }

    pub fn eval(&self, h: f64) -> C64 {
        let d = self.d;
        let sh = h.max(0.0).sqrt();
        let mut acc = ZERO;
        for ((&z, &w), s) in self.z.iter().zip(&self.w).zip(&self.s_flip) {
            let sz = (d * z).sqrt();
            let x = sh - sz;
            let arg = self.c * (2.0 * sh * sz);
            acc += s * w * (-self.c * x * x).exp() * i0e_complex(arg);
        }
        -acc * self.c * d.sqrt()
    }
}

/// E(1, t) = Omega(t) e^{-gamma_s t} R(h(0, t)) on the control grid.
pub fn adiabatic_retrieve(s: &SpinWave, control: &ControlField, params: &Params) -> FieldMode {
    let prop = Propagator::new(s, params.d, params.delta);
    let gs = params.gamma_s;
    let samples = (0..control.len())
        .into_par_iter()
        .map(|n| {
            let om = control.samples[n];
            if om == ZERO {
                return ZERO;
            }
            om * (-gs * control.t(n)).exp() * prop.eval(control.h_cum[n])
        })
        .collect();
    FieldMode::new(samples, control.t_win)
}

/// h(0, t) inside grid interval `n` at fraction `u`, interpolated with the
/// exact energy profile of the linear control segment and rescaled to the
/// tabulated increment.
fn h_within(control: &ControlField, n: usize, u: f64) -> f64 {
    let (a, b) = (control.samples[n], control.samples[n + 1]);
    let (h0, h1) = (control.h_cum[n], control.h_cum[n + 1]);
    let full = segment_energy(a, b);
    let frac = if full > 0.0 {
        let db = b - a;
        (a.norm_sqr() * u + (a.conj() * db).re * u * u + db.norm_sqr() * u * u * u / 3.0) / full
    } else {
        u
    };
    h0 + (h1 - h0) * frac.clamp(0.0, 1.0)
}

/// Quadrature points `(t, dt weight, h(0, t), Omega(t))` over the control
/// window, with each grid interval split so that h advances by at most
/// `scale(h)` per panel.
fn time_nodes(control: &ControlField, scale: impl Fn(f64) -> f64) -> Vec<(f64, f64, f64, C64)> {
    let (gx, gw) = gauss_legendre(PANEL_ORDER);
    let dt = control.dt();
    let mut out = Vec::new();
    for n in 0..control.len() - 1 {
        let dh = control.h_cum[n + 1] - control.h_cum[n];
        let m = ((dh / scale(control.h_cum[n])).ceil() as usize).clamp(1, 256);
        for k in 0..m {
            let (u0, u1) = (k as f64 / m as f64, (k + 1) as f64 / m as f64);
            for (x, w) in gx.iter().zip(&gw) {
                let u = 0.5 * (u0 + u1) + 0.5 * (u1 - u0) * x;
                let om = control.samples[n] * (1.0 - u) + control.samples[n + 1] * u;
                out.push((control.t(n) + u * dt, 0.5 * (u1 - u0) * w * dt, h_within(control, n, u), om));
            }
        }
    }
    out
}

/// S(z, T) = -sqrt(d) int dt Omega*(t) e^{-gamma_s (T - t)} c e^{-c (h(t,T) + d z)}
/// I0(2 c sqrt(h(t,T) d z)) E_in(t), on `nz` points.
pub fn adiabatic_store(e_in: &FieldMode, control: &ControlField, params: &Params, nz: usize) -> SpinWave {
    let d = params.d;
    let c = C64::new(1.0, params.delta).inv();
    let total = control.h_total();
    let t_win = control.t_win;
    let nodes: Vec<(f64, C64)> = time_nodes(control, |h| h.sqrt().max(1.0).min(C64::new(1.0, params.delta).norm()))
        .into_iter()
        .filter(|(_, _, _, om)| *om != ZERO)
        .map(|(t, w, h0t, om)| {
            let e = e_in.eval_linear(t);
            (total - h0t, om.conj() * e * w * (-params.gamma_s * (t_win - t)).exp())
        })
        .filter(|(_, v)| *v != ZERO)
        .collect();
    let sd = d.sqrt();
    let samples = quad::linspace(0.0, 1.0, nz)
        .into_par_iter()
        .map(|z| {
            let sz = (d * z).sqrt();
            let mut acc = ZERO;
            for &(h, v) in &nodes {
                let sh = h.max(0.0).sqrt();
                let x = sh - sz;
                acc += v * (-c * x * x).exp() * i0e_complex(c * (2.0 * sh * sz));
            }
            -acc * c * sd
        })
        .collect();
    SpinWave::new(samples)
}

/// Kernel of the decayless map without the control and input factors:
/// `(i sqrt(d) / delta) e^{i (h + d z)/delta} J0(2 sqrt(h d z)/delta)`.
fn decayless_kernel(h: f64, z: f64, d: f64, delta: f64) -> C64 {
    let ph = (h + d * z) / delta;
    I * (d.sqrt() / delta) * C64::from_polar(1.0, ph) * j0(2.0 * (h * d * z).max(0.0).sqrt() / delta)
}

/// Decayless spin wave `s(z) = int q(z, t) E_in(t) dt` on `[0, z_max]`.
/// With `|delta| < RESONANT_DELTA` the kernel collapses to
/// `s(z) = -sqrt(d) E_in(t*)/Omega(t*)` with `h(t*, T) = d z`.
pub fn decayless_store(
    e_in: &FieldMode,
    control: &ControlField,
    d: f64,
    delta: f64,
    nz: usize,
) -> Result<DecaylessMode> {
    if d.is_nan() || d <= 0.0 {
        return Err(Error::InvalidParameter(format!("d = {d} must be > 0")));
    }
    let total = control.h_total();
    if delta.abs() < RESONANT_DELTA {
        let z_max = (total / d).max(1.0);
        let samples = quad::linspace(0.0, z_max, nz)
            .into_iter()
            .map(|z| {
                let target = d * z;
                if target > total {
                    return ZERO;
                }
                match time_at_h(control, target) {
                    Some((t, om)) if om != ZERO => -d.sqrt() * e_in.eval_linear(t) / om,
                    _ => ZERO,
                }
            })
            .collect();
        return Ok(DecaylessMode::new(samples, z_max));
    }
    // Kernel phase rate in h is (1 + sqrt(d z / h)) / |delta|; keep ~2 rad per panel up to z_top.
    let z_top = 2.0 * total / d + 1.0;
    let nodes: Vec<(f64, C64)> =
        time_nodes(control, |h| 2.0 * delta.abs() / (1.0 + (d * z_top / h.max(1e-300)).sqrt()))
            .into_iter()
            .map(|(t, w, h0t, om)| (total - h0t, om.conj() * e_in.eval_linear(t) * w))
            .filter(|(_, v)| *v != ZERO)
            .collect();
    let eval = |z: f64| -> C64 { nodes.iter().map(|&(h, v)| v * decayless_kernel(h, z, d, delta)).sum() };
    // The map sends h(t, T) to roughly d z; probe on a sqrt-spaced grid that
    // resolves small z and trim the tail carrying < 1e-6 of the mass.
    let mut z_hi = z_top;
    let z_max = loop {
        let k = 1600;
        let zs: Vec<f64> = (0..=k).map(|i| z_hi * (i as f64 / k as f64).powi(2)).collect();
        let mag: Vec<f64> = zs.par_iter().map(|&z| eval(z).norm_sqr()).collect();
        let pieces: Vec<f64> = (0..k).map(|i| 0.5 * (zs[i + 1] - zs[i]) * (mag[i] + mag[i + 1])).collect();
        let mass: f64 = pieces.iter().sum();
        let mut tail = 0.0;
        let mut cut = k;
        while cut > 1 && tail + pieces[cut - 1] <= 1e-6 * mass {
            tail += pieces[cut - 1];
            cut -= 1;
        }
        if cut < k || z_hi > 64.0 * (total / d + 1.0) {
            break zs[cut].max(1.0);
        }
        z_hi *= 2.0;
    };
    let samples = quad::linspace(0.0, z_max, nz).into_par_iter().map(eval).collect();
    Ok(DecaylessMode::new(samples, z_max))
}

/// t with h(t, T) = `target` and the control there.
fn time_at_h(control: &ControlField, target: f64) -> Option<(f64, C64)> {
    let total = control.h_total();
    let want = total - target;
    let h = &control.h_cum;
    let n = h.partition_point(|&v| v < want);
    if n == 0 {
        return Some((0.0, control.samples[0]));
    }
    if n >= h.len() {
        return None;
    }
    let k = n - 1;
    let (h0, h1) = (h[k], h[k + 1]);
    let mut lo = 0.0;
    let mut hi = 1.0;
    if h1 > h0 {
        for _ in 0..60 {
            let mid = 0.5 * (lo + hi);
            if h_within(control, k, mid) < want {
                lo = mid;
            } else {
                hi = mid;
            }
        }
    }
    let u = 0.5 * (lo + hi);
    let om = control.samples[k] * (1.0 - u) + control.samples[k + 1] * u;
    Some((control.t(k) + u * control.dt(), om))
}

/// `Q(h)` with `E_in(t) = Omega(t) Q(h(t, T))` for a decayless mode `s`.
#[derive(Debug, Clone)]
struct StorageKernel {
    d: f64,
    delta: f64,
    z_max: f64,
    spline: Spline,
    s: DecaylessMode,
}

impl StorageKernel {
    fn new(s: &DecaylessMode, d: f64, delta: f64) -> StorageKernel {
        StorageKernel { d, delta, z_max: s.z_max, spline: s.spline(), s: s.clone() }
    }

    fn eval(&self, h: f64) -> C64 {
        let (d, delta) = (self.d, self.delta);
        if delta.abs() < RESONANT_DELTA {
            return -self.s.eval(&self.spline, h / d) / d.sqrt();
        }
        // Phase rate in u = sqrt(z): 2 sqrt(h d)/|delta| + 2 u d/|delta|.
        let umax = self.z_max.sqrt();
        let rate = 2.0 * ((h * d).sqrt() + umax * d) / delta.abs();
        let panels = ((umax * rate).ceil() as usize).max(self.s.len() / 4).max(16);
        let m = sqrt_mesh(self.z_max, panels);
        let integral: C64 = m
            .nodes
            .iter()
            .zip(&m.weights)
            .map(|(&z, &w)| {
                C64::from_polar(w, -d * z / delta) * j0(2.0 * (h * d * z).sqrt() / delta) * self.s.eval(&self.spline, z)
            })
            .sum();
        -I * (d.sqrt() / delta) * C64::from_polar(1.0, -h / delta) * integral
    }
}

/// Inverse decayless map `E_in(t) = int q*(z, t) s(z) dz` on the control grid.
pub fn decayless_release(s: &DecaylessMode, control: &ControlField, d: f64, delta: f64) -> FieldMode {
    let q = StorageKernel::new(s, d, delta);
    let total = control.h_total();
    let samples = (0..control.len())
        .into_par_iter()
        .map(|n| {
            let om = control.samples[n];
            if om == ZERO {
                ZERO
            } else {
                om * q.eval(total - control.h_cum[n])
            }
        })
        .collect();
    FieldMode::new(samples, control.t_win)
}

/// Dressing kernel `d e^{-d (z + y)} I0(2 d sqrt(z y))` in scaled form.
fn dress_kernel(z: f64, y: f64, d: f64) -> f64 {
    let (a, b) = (z.sqrt(), y.sqrt());
    d * (-d * (a - b) * (a - b)).exp() * i0e(2.0 * d * a * b)
}

fn dress_mesh(z_max: f64, d: f64) -> Mesh {
    let width = (0.25 / d.sqrt()).min(0.05);
    sqrt_mesh(z_max, (z_max.sqrt() / width).ceil() as usize)
}

/// Physical spin wave after storage, `S(z) = int_0^inf D(z, y) s(y) dy`, on `nz` points.
pub fn decay_dress(s: &DecaylessMode, d: f64, nz: usize) -> SpinWave {
    let m = dress_mesh(s.z_max, d);
    let sp = s.spline();
    let vals: Vec<C64> = m.nodes.iter().zip(&m.weights).map(|(&y, &w)| s.eval(&sp, y) * w).collect();
    let samples = quad::linspace(0.0, 1.0, nz)
        .into_par_iter()
        .map(|z| m.nodes.iter().zip(&vals).map(|(&y, v)| v * dress_kernel(z, y, d)).sum())
        .collect();
    SpinWave::new(samples)
}

#[derive(Debug, Clone)]
pub struct DecaylessOptimum {
    pub mode: DecaylessMode,
    /// Storage efficiency of the mode, ||dress(s)||^2.
    pub efficiency: f64,
    pub iterations: usize,
    pub tail_mass: f64,
}

/// Normalized decayless mode whose dressed spin wave has the largest norm.
pub fn optimal_decayless_mode(d: f64, tol: f64) -> Result<DecaylessOptimum> {
    if !(d > 0.0 && d.is_finite()) {
        return Err(Error::InvalidParameter(format!("d = {d} must be > 0")));
    }
    let km = Mesh::unit_graded(d);
    let sqx: Vec<f64> = km.weights.iter().map(|w| w.sqrt()).collect();
    let nx = km.len();
    let mut z_max = 1.0 + 6.0 / d.max(1.0).sqrt();
    for _ in 0..30 {
        let ym = dress_mesh(z_max, d);
        let ny = ym.len();
        let sqy: Vec<f64> = ym.weights.iter().map(|w| w.sqrt()).collect();
        // B[i][j] = sqrt(w_i) D(x_i, y_j) sqrt(v_j); iterate on B B^T.
        let b: Vec<f64> = (0..nx)
            .into_par_iter()
            .flat_map_iter(|i| {
                let x = km.nodes[i];
                let si = sqx[i];
                ym.nodes.iter().zip(&sqy).map(move |(&y, &sj)| si * dress_kernel(x, y, d) * sj).collect::<Vec<_>>()
            })
            .collect();
        let bbt: Vec<f64> = (0..nx)
            .into_par_iter()
            .flat_map_iter(|i| {
                let bi = &b[i * ny..(i + 1) * ny];
                (0..nx)
                    .map(|k| bi.iter().zip(&b[k * ny..(k + 1) * ny]).map(|(p, q)| p * q).sum::<f64>())
                    .collect::<Vec<_>>()
            })
            .collect();
        let opts = ModeOptions { nz: 3, tol_value: tol, tol_mode: tol.sqrt().max(1e-8), max_iters: 500 };
        let (v, mu, iterations) = dominant_symmetric(nx, &bbt, &opts, "decayless mode")?;
        // s(y) = B^T v / sqrt(mu) in weighted form; as a function of y:
        // s(y) = sum_i D(x_i, y) sqrt(w_i) v_i / sqrt(mu).
        let coef: Vec<f64> = v.iter().zip(&sqx).map(|(a, s)| a * s / mu.sqrt()).collect();
        let s_at = |y: f64| -> f64 { km.nodes.iter().zip(&coef).map(|(&x, c)| c * dress_kernel(x, y, d)).sum() };
        let tail_mesh = dress_mesh(4.0 * z_max, d);
        let tail: f64 = tail_mesh
            .nodes
            .iter()
            .zip(&tail_mesh.weights)
            .filter(|(&y, _)| y > z_max)
            .map(|(&y, &w)| w * s_at(y).powi(2))
            .sum();
        if tail < 1e-6 {
            let nz = ((4.0 * z_max * d.max(1.0)).ceil() as usize + 1).clamp(401, 20001);
            let raw = DecaylessMode::from_fn(nz, z_max, |y| C64::new(s_at(y), 0.0));
            let mean: f64 = raw.samples.iter().map(|v| v.re).sum();
            let sg = if mean < 0.0 { -1.0 } else { 1.0 };
            let mode = DecaylessMode::new(raw.samples.iter().map(|v| v * sg).collect(), z_max).normalized();
            return Ok(DecaylessOptimum { mode, efficiency: mu, iterations, tail_mass: tail });
        }
        z_max = 1.0 + 2.0 * (z_max - 1.0);
    }
    Err(Error::NoConvergence { what: "decayless mode support", iterations: 30, residual: z_max })
}

#[derive(Debug, Clone)]
pub struct ShapingConfig {
    /// Control energy h(0, T) at which the shaping integral is truncated.
    pub h_total: f64,
    pub omega_cap: f64,
    /// Relative floor below which the shaping denominator counts as zero.
    pub eps_div: f64,
    /// Required `d h / |d + i delta|^2`.
    pub complete_factor: f64,
}

impl ShapingConfig {
    /// Default configuration: `h_total = complete_factor |d + i delta|^2 / d` with factor 10.
    pub fn for_params(params: &Params) -> ShapingConfig {
        let complete_factor = 10.0;
        ShapingConfig {
            h_total: complete_factor * params.completeness_scale() / params.d,
            omega_cap: 1e3,
            eps_div: 1e-6,
            complete_factor,
        }
    }

    pub fn validate(&self, params: &Params) -> Result<()> {
        if !(self.h_total > 0.0 && self.h_total.is_finite()) {
            return Err(Error::InvalidParameter(format!("h_total = {} must be finite and > 0", self.h_total)));
        }
        if self.complete_factor.is_nan() || self.complete_factor < 1.0 {
            return Err(Error::InvalidParameter("complete_factor must be >= 1".into()));
        }
        let need = self.complete_factor * params.completeness_scale() / params.d;
        if self.h_total < need * (1.0 - 1e-12) {
            return Err(Error::InvalidParameter(format!(
                "h_total = {} below the completeness threshold {need}",
                self.h_total
            )));
        }
        Ok(())
    }
}

/// Cumulative `C(H) = int_0^H f` on `H = H_max (k/K)^2`.
#[derive(Debug, Clone)]
struct CumTable {
    h: Vec<f64>,
    cum: Vec<f64>,
    dens: Vec<f64>,
}

impl CumTable {
    fn build(h_max: f64, f: impl Fn(f64) -> f64 + Sync) -> CumTable {
        let k = H_TABLE_NODES;
        let h: Vec<f64> = (0..=k).map(|i| h_max * (i as f64 / k as f64).powi(2)).collect();
        let (gx, gw) = gauss_legendre(4);
        let dens: Vec<f64> = h.par_iter().map(|&x| f(x)).collect();
        let pieces: Vec<f64> = (0..k)
            .into_par_iter()
            .map(|i| {
                let (a, b) = (h[i], h[i + 1]);
                let hw = 0.5 * (b - a);
                gx.iter().zip(&gw).map(|(x, w)| w * hw * f(0.5 * (a + b) + hw * x)).sum()
            })
            .collect();
        let mut cum = Vec::with_capacity(k + 1);
        cum.push(0.0);
        for p in pieces {
            let last = *cum.last().unwrap();
            cum.push(last + p);
        }
        CumTable { h, cum, dens }
    }

    fn total(&self) -> f64 {
        *self.cum.last().unwrap()
    }

    fn peak_density(&self) -> f64 {
        self.dens.iter().cloned().fold(0.0, f64::max)
    }

    /// H with C(H) = target, by bisection on the cubic Hermite interpolant.
    fn invert(&self, target: f64) -> f64 {
        if target <= 0.0 {
            return 0.0;
        }
        if target >= self.total() {
            return *self.h.last().unwrap();
        }
        let i = self.cum.partition_point(|&c| c < target).max(1) - 1;
        let (h0, h1) = (self.h[i], self.h[i + 1]);
        let (c0, c1) = (self.cum[i], self.cum[i + 1]);
        let (m0, m1) = (self.dens[i], self.dens[i + 1]);
        let dh = h1 - h0;
        let herm = |u: f64| {
            let (u2, u3) = (u * u, u * u * u);
            (2.0 * u3 - 3.0 * u2 + 1.0) * c0
                + (u3 - 2.0 * u2 + u) * dh * m0
                + (-2.0 * u3 + 3.0 * u2) * c1
                + (u3 - u2) * dh * m1
        };
        let (mut lo, mut hi) = (0.0, 1.0);
        for _ in 0..100 {
            let mid = 0.5 * (lo + hi);
            if herm(mid) < target {
                lo = mid;
            } else {
                hi = mid;
            }
            if (hi - lo) * dh < 1e-14 * h1.max(1.0) {
                break;
            }
        }
        h0 + 0.5 * (lo + hi) * dh
    }
}

/// Normalized cumulative energy fractions of a field on its grid.
fn cumulative_fraction(f: &FieldMode) -> Vec<f64> {
    let dt = f.dt();
    let mut out = Vec::with_capacity(f.len());
    out.push(0.0);
    for w in f.samples.windows(2) {
        let last = *out.last().unwrap();
        out.push(last + 0.5 * dt * (w[0].norm_sqr() + w[1].norm_sqr()));
    }
    let total = *out.last().unwrap();
    if total > 0.0 {
        out.iter_mut().for_each(|v| *v /= total);
    }
    out
}

/// Divide `numer` by `denom`, zeroing tiny denominators and clipping; fails
/// when clipping would discard more than 1e-3 of the field energy.
fn control_from_ratio(numer: &FieldMode, denom: &[C64], peak: f64, cfg: &ShapingConfig) -> Result<Vec<C64>> {
    let dt = numer.dt();
    let mut clipped_energy = 0.0;
    let mut window: Option<(f64, f64)> = None;
    let samples: Vec<C64> = numer
        .samples
        .iter()
        .zip(denom)
        .enumerate()
        .map(|(n, (e, q))| {
            if q.norm() < cfg.eps_div * peak || *e == ZERO {
                return ZERO;
            }
            let om = e / q;
            if om.norm() > cfg.omega_cap {
                clipped_energy += dt * e.norm_sqr();
                let t = n as f64 * dt;
                window = Some(window.map_or((t, t), |(a, _)| (a, t)));
                om * (cfg.omega_cap / om.norm())
            } else {
                om
            }
        })
        .collect();
    if clipped_energy > 1e-3 * numer.norm_sq() {
        let (t0, t1) = window.unwrap();
        return Err(Error::ShapingTooFast { t0, t1 });
    }
    Ok(samples)
}

/// Control that retrieves `s` into `target` (up to the efficiency).
pub fn shape_retrieval_control(
    s: &SpinWave,
    target: &FieldMode,
    params: &Params,
    cfg: &ShapingConfig,
) -> Result<ControlField> {
    params.validate()?;
    cfg.validate(params)?;
    let target =
        if params.gamma_s > 0.0 { rescale_retrieval_target(target, params.gamma_s).0 } else { target.normalized() };
    let prop = Propagator::new(s, params.d, params.delta);
    let table = CumTable::build(cfg.h_total, |h| prop.eval(h).norm_sqr());
    let eta = table.total();
    let frac = cumulative_fraction(&target);
    let mut h_cum: Vec<f64> = frac.par_iter().map(|&f| table.invert(eta * f)).collect();
    h_cum[0] = 0.0;
    for n in 1..h_cum.len() {
        h_cum[n] = h_cum[n].max(h_cum[n - 1]);
    }
    let denom: Vec<C64> = h_cum.par_iter().map(|&h| prop.eval(h)).collect();
    let numer = FieldMode::new(target.samples.iter().map(|e| e * eta.sqrt()).collect(), target.t_win);
    let peak = table.peak_density().sqrt();
    let samples = control_from_ratio(&numer, &denom, peak, cfg)?;
    ControlField::with_h_cum(samples, target.t_win, h_cum)
}

/// Control that maps `e_in` onto the decayless mode `s`.
pub fn shape_storage_control(
    e_in: &FieldMode,
    s: &DecaylessMode,
    params: &Params,
    cfg: &ShapingConfig,
) -> Result<ControlField> {
    params.validate()?;
    cfg.validate(params)?;
    let input = if params.gamma_s > 0.0 { rescale_storage_input(e_in, params.gamma_s).0 } else { e_in.normalized() };
    let q = StorageKernel::new(&s.normalized(), params.d, params.delta);
    let table = CumTable::build(cfg.h_total, |h| q.eval(h).norm_sqr());
    let total = table.total();
    let frac = cumulative_fraction(&input);
    // h(t, T) solves C(h) = C(H) (1 - F(t)).
    let h_rev: Vec<f64> = frac.par_iter().map(|&f| table.invert(total * (1.0 - f))).collect();
    let h_top = cfg.h_total;
    let mut h_cum: Vec<f64> = h_rev.iter().map(|h| (h_top - h).max(0.0)).collect();
    h_cum[0] = 0.0;
    for n in 1..h_cum.len() {
        h_cum[n] = h_cum[n].max(h_cum[n - 1]);
    }
    let denom: Vec<C64> = h_cum.par_iter().map(|&h| q.eval(h_top - h)).collect();
    let numer = FieldMode::new(input.samples.iter().map(|e| e * total.sqrt()).collect(), input.t_win);
    let peak = table.peak_density().sqrt();
    let samples = control_from_ratio(&numer, &denom, peak, cfg)?;
    ControlField::with_h_cum(samples, input.t_win, h_cum)
}

/// Normalized `E2(t) e^{gamma_s t}` and the factor `1 / int |E2|^2 e^{2 gamma_s t}`
/// that multiplies the retrieval efficiency.
pub fn rescale_retrieval_target(target: &FieldMode, gamma_s: f64) -> (FieldMode, f64) {
    let norm = target.norm_sq();
    let raw = FieldMode::new(
        target.samples.iter().enumerate().map(|(n, e)| e * (gamma_s * target.t(n)).exp() / norm.sqrt()).collect(),
        target.t_win,
    );
    let weight = raw.norm_sq();
    (raw.normalized(), 1.0 / weight)
}

/// Normalized `E_in(t) e^{-gamma_s (T - t)}` and the factor
/// `int |E_in|^2 e^{-2 gamma_s (T - t)}` that multiplies the storage efficiency.
pub fn rescale_storage_input(e_in: &FieldMode, gamma_s: f64) -> (FieldMode, f64) {
    let norm = e_in.norm_sq();
    let t_win = e_in.t_win;
    let raw = FieldMode::new(
        e_in.samples
            .iter()
            .enumerate()
            .map(|(n, e)| e * (-gamma_s * (t_win - e_in.t(n))).exp() / norm.sqrt())
            .collect(),
        t_win,
    );
    let weight = raw.norm_sq();
    (raw.normalized(), weight)
}

/// Efficiency factor for spin decay during a storage interval of `duration`.
pub fn storage_interval_decay(gamma_s: f64, duration: f64) -> f64 {
    (-2.0 * gamma_s * duration).exp()
}

#[derive(Debug, Clone)]
pub struct EitDiagnostics {
    /// Gaussian-window retrieval efficiency estimate.
    pub efficiency: f64,
    pub error: f64,
    pub tau: Vec<f64>,
    /// Window width sqrt(d / tau) in dimensionless momentum.
    pub width: Vec<f64>,
    /// Integrand |...|^2 per tau.
    pub density: Vec<f64>,
}

/// Retrieval efficiency estimated through the effective momentum-space
/// window: `int dtau |int S(z) G_sigma(1 - tau - z) dz|^2` with a normalized
/// Gaussian `G` of variance `sigma^2 = 2 tau / d`, which equals
/// `int dtau |int dk e^{ik(1-tau)} e^{-k^2 tau/d} S(k)|^2`.
pub fn eit_window_diagnostics(s: &SpinWave, d: f64) -> EitDiagnostics {
    let sp = s.spline();
    let s_at = |z: f64| if (0.0..=1.0).contains(&z) { sp.eval(z) } else { ZERO };
    // Integrand negligible once d (tau - 1)^2 / (4 tau) > 50.
    let b = 2.0 + 200.0 / d;
    let tau_max = 0.5 * (b + (b * b - 4.0).sqrt());
    let mut breaks = quad::unit_graded_breaks(d);
    let mut t = 1.0;
    while t < tau_max {
        let step = (0.5 * (t / d).sqrt()).max(1e-3);
        t = (t + step).min(tau_max);
        breaks.push(t);
    }
    let tm = Mesh::composite(&breaks, PANEL_ORDER);
    let inv = 1.0 / (2.0 * std::f64::consts::PI).sqrt();
    let density: Vec<f64> = tm
        .nodes
        .par_iter()
        .map(|&tau| {
            let sigma = (2.0 * tau / d).sqrt();
            let c = 1.0 - tau;
            let (lo, hi) = ((c - 10.0 * sigma).max(0.0), (c + 10.0 * sigma).min(1.0));
            if hi <= lo {
                return 0.0;
            }
            let panels = (((hi - lo) / (0.5 * sigma)).ceil() as usize).clamp(1, 400);
            let m = Mesh::uniform(lo, hi, panels, PANEL_ORDER);
            let v: C64 = m
                .nodes
                .iter()
                .zip(&m.weights)
                .map(|(&z, &w)| s_at(z) * (w * inv / sigma * (-(c - z) * (c - z) / (2.0 * sigma * sigma)).exp()))
                .sum();
            v.norm_sqr()
        })
        .collect();
    let efficiency: f64 = density.iter().zip(&tm.weights).map(|(v, w)| v * w).sum();
    EitDiagnostics {
        efficiency,
        error: s.norm_sq() - efficiency,
        width: tm.nodes.iter().map(|t| (d / t).sqrt()).collect(),
        tau: tm.nodes,
        density,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::retrieval_efficiency;
    use crate::model::{gaussian_like_input, time_reverse};

    #[test]
    fn zero_control_gives_zero() {
        let p = Params::resonant(10.0);
        let c = ControlField::zero(101, 5.0);
        let out = adiabatic_retrieve(&SpinWave::linear(101), &c, &p);
        assert!(out.samples.iter().all(|v| *v == ZERO));
        let e = gaussian_like_input(5.0, 101).unwrap();
        let s = adiabatic_store(&e, &c, &p, 51);
        assert!(s.samples.iter().all(|v| *v == ZERO));
    }

    #[test]
    fn complete_retrieval_matches_kernel() {
        let s = SpinWave::linear(201);
        let d = 10.0;
        let want = retrieval_efficiency(&s, d);
        for delta in [0.0, 100.0] {
            let p = Params::new(d, delta, 0.0, 0.0).unwrap();
            let cfg = ShapingConfig::for_params(&p);
            let om = (cfg.h_total / 10.0).sqrt();
            let c = ControlField::constant(8001, 10.0, om);
            let out = adiabatic_retrieve(&s, &c, &p);
            assert!((out.norm_sq() - want).abs() < 1e-3, "delta {delta}: {} vs {want}", out.norm_sq());
        }
    }

    #[test]
    fn eit_limit_is_identity() {
        let s = SpinWave::linear(201);
        let e = eit_window_diagnostics(&s, 1e6).efficiency;
        assert!((e - 1.0).abs() < 1e-2, "{e}");
    }
    #[test]
    fn dressing_decayless_storage_matches_adiabatic_storage() {
        let (d, t_win, nt) = (10.0, 5.0, 1001);
        let e = gaussian_like_input(t_win, nt).unwrap();
        for delta in [0.0, 20.0] {
            let p = Params::new(d, delta, 0.0, 0.0).unwrap();
            let om = (3.0 * p.completeness_scale() / d / t_win).sqrt();
            let c = ControlField::constant(nt, t_win, om);
            let direct = adiabatic_store(&e, &c, &p, 201);
            let s = decayless_store(&e, &c, d, delta, 4001).unwrap();
            let dressed = decay_dress(&s, d, 201);
            assert!(direct.overlap(&dressed) > 0.9999, "delta {delta}: {}", direct.overlap(&dressed));
            assert!((direct.norm_sq() - dressed.norm_sq()).abs() < 1e-3);
        }
    }

    #[test]
    fn optimal_decayless_mode_dresses_to_backward_optimum() {
        let d = 10.0;
        let o = optimal_decayless_mode(d, 1e-12).unwrap();
        let b = crate::optimizer::optimal_backward_mode(d, &ModeOptions::default()).unwrap();
        assert!((o.efficiency - b.efficiency).abs() < 1e-6);
        let dressed = decay_dress(&o.mode, d, 401);
        let f = crate::model::flip_spin_wave(&b.mode, 0.0).resampled(401);
        assert!(dressed.normalized().overlap(&f) > 1.0 - 1e-6);
    }

    #[test]
    fn decay_rescaling_favours_storage() {
        let e = gaussian_like_input(4.0, 401).unwrap();
        let (_, store) = rescale_storage_input(&e, 0.3);
        let (_, retrieve) = rescale_retrieval_target(&time_reverse(&e), 0.3);
        assert!(store < 1.0 && retrieve < 1.0);
        assert!(store >= retrieve);
        assert!((storage_interval_decay(0.5, 2.0) - (-2.0f64).exp()).abs() < 1e-15);
    }

    #[test]
    fn incomplete_h_total_is_rejected() {
        let p = Params::resonant(10.0);
        let mut cfg = ShapingConfig::for_params(&p);
        cfg.h_total = 1.0;
        assert!(cfg.validate(&p).is_err());
    }
}
