//! Fast (photon-echo) storage and retrieval through a perfect pi pulse.
//!
//! ```text
//! E_out(t) = -sqrt(d) e^{-t} int_0^1 J0(2 sqrt(d t z)) S(1 - z) dz
//! S(z)     = -sqrt(d) int_0^T e^{-(T - t)} J0(2 sqrt(d (T - t) z)) E_in(t) dt
//! ```
//!
//! Storing the time reverse of a retrieved field gives `K flip(s*)` with `K`
//! the retrieval kernel, so the optimal inputs follow from the kernel modes.

use crate::bessel::j0;
use crate::error::Result;
use crate::model::{time_reverse, FieldMode, SpinWave};
use crate::optimizer::{optimal_backward_mode, optimal_forward_mode, Direction, ModeOptions};
use crate::quad::{self, gauss_legendre, Mesh, PANEL_ORDER};
use num_complex::Complex64 as C64;
use rayon::prelude::*;
use std::collections::VecDeque;

const ZERO: C64 = C64 { re: 0.0, im: 0.0 };
/// Relative energy below which the retrieval tail is dropped.
pub const TAIL_TOL: f64 = 1e-6;
/// Output samples per unit of `t max(d, 1)`.
const SAMPLES_PER_UNIT: f64 = 40.0;
const MAX_SAMPLES: usize = 200_001;

/// Evaluator for the fast retrieval output of a fixed spin wave.
struct Retriever {
    d: f64,
    spline: quad::Spline,
}

impl Retriever {
    fn new(s: &SpinWave, d: f64) -> Retriever {
        Retriever { d, spline: s.spline() }
    }

    fn eval(&self, t: f64) -> C64 {
        let d = self.d;
        // In u = sqrt(z) the Bessel factor oscillates at 2 sqrt(d t) per unit u.
        let rate = 2.0 * (d * t).sqrt();
        let panels = (rate.ceil() as usize).max(16) + (d.sqrt().ceil() as usize);
        let m = Mesh::uniform(0.0, 1.0, panels, PANEL_ORDER);
        let v: C64 = m
            .nodes
            .iter()
            .zip(&m.weights)
            .map(|(&u, &w)| {
                let z = u * u;
                self.spline.eval(1.0 - z) * (2.0 * u * w * j0(rate * u))
            })
            .sum();
        -v * d.sqrt() * (-t).exp()
    }
}

/// Output window [0, t_max] whose omitted tail holds < `TAIL_TOL` of the energy.
fn retrieval_window(r: &Retriever) -> f64 {
    let (gx, gw) = gauss_legendre(PANEL_ORDER);
    let scale = 1.0 / r.d.max(1.0);
    let mut t0 = 0.0;
    let mut width = 0.25 * scale;
    let mut total = 0.0;
    // Recent panel energies; the output decays like e^{-2t} times a Bessel
    // oscillation, so a single small panel can sit on a node.
    let mut ring: VecDeque<f64> = VecDeque::with_capacity(4);
    loop {
        let t1 = t0 + width;
        let e: f64 = gx
            .iter()
            .zip(&gw)
            .map(|(x, w)| 0.5 * width * w * r.eval(0.5 * (t0 + t1) + 0.5 * width * x).norm_sqr())
            .sum();
        total += e;
        if ring.len() == 4 {
            ring.pop_front();
        }
        ring.push_back(e);
        t0 = t1;
        if ring.len() == 4 && ring.iter().sum::<f64>() < TAIL_TOL * total.max(1e-300) {
            return t0;
        }
        if t0 > 60.0 {
            return t0;
        }
        width = (width * 1.25).min(0.5);
    }
}

/// Fast retrieval output on an automatically sized window; at least `nt` samples.
pub fn fast_retrieve(s: &SpinWave, d: f64, nt: usize) -> FieldMode {
    let r = Retriever::new(s, d);
    let t_max = retrieval_window(&r);
    let want = (SAMPLES_PER_UNIT * t_max * d.max(1.0)).ceil() as usize + 1;
    let n = nt.max(want).min(MAX_SAMPLES);
    let samples = quad::linspace(0.0, t_max, n).into_par_iter().map(|t| r.eval(t)).collect();
    FieldMode::new(samples, t_max)
}

/// Fast retrieval output on a caller-fixed window.
pub fn fast_retrieve_on(s: &SpinWave, d: f64, nt: usize, t_win: f64) -> FieldMode {
    let r = Retriever::new(s, d);
    let samples = quad::linspace(0.0, t_win, nt).into_par_iter().map(|t| r.eval(t)).collect();
    FieldMode::new(samples, t_win)
}

/// Spin wave left by a perfect pi pulse at the end of the input window.
pub fn fast_store(e_in: &FieldMode, d: f64, nz: usize) -> SpinWave {
    let sp = e_in.spline();
    let t_win = e_in.t_win;
    let dt = e_in.dt();
    let (gx, gw) = gauss_legendre(PANEL_ORDER);
    let samples = quad::linspace(0.0, 1.0, nz)
        .into_par_iter()
        .map(|z| {
            let mut acc = ZERO;
            for n in 0..e_in.len() - 1 {
                let (a, b) = (n as f64 * dt, (n + 1) as f64 * dt);
                // Bessel phase 2 sqrt(d tau z) advances by this much over the interval.
                let (ta, tb) = (t_win - b, t_win - a);
                let dphase = 2.0 * (d * z).sqrt() * (tb.max(0.0).sqrt() - ta.max(0.0).sqrt());
                let m = ((dphase / 2.0).ceil() as usize).clamp(1, 64);
                let h = (b - a) / m as f64;
                for k in 0..m {
                    let c = a + (k as f64 + 0.5) * h;
                    for (x, w) in gx.iter().zip(&gw) {
                        let t = c + 0.5 * h * x;
                        let tau = t_win - t;
                        acc += sp.eval(t) * (0.5 * h * w * (-tau).exp() * j0(2.0 * (d * tau * z).sqrt()));
                    }
                }
            }
            -acc * d.sqrt()
        })
        .collect();
    SpinWave::new(samples)
}

/// Normalized input that fast storage maps onto the optimal mode for `direction`.
pub fn fast_optimal_input(d: f64, direction: Direction, nt: usize) -> Result<FieldMode> {
    let opts = ModeOptions::default();
    let mode = match direction {
        Direction::Backward => optimal_backward_mode(d, &opts)?.mode,
        Direction::Forward => optimal_forward_mode(d, &opts)?.mode,
    };
    Ok(time_reverse(&fast_retrieve(&mode, d, nt)).normalized())
}

/// Time between the 10% and 90% points of the cumulative energy.
pub fn energy_width(f: &FieldMode) -> f64 {
    let dt = f.dt();
    let mut cum = vec![0.0];
    for w in f.samples.windows(2) {
        let last = *cum.last().unwrap();
        cum.push(last + 0.5 * dt * (w[0].norm_sqr() + w[1].norm_sqr()));
    }
    let total = *cum.last().unwrap();
    let at = |frac: f64| {
        let target = frac * total;
        let i = cum.partition_point(|&c| c < target).clamp(1, cum.len() - 1);
        let (c0, c1) = (cum[i - 1], cum[i]);
        let u = if c1 > c0 { (target - c0) / (c1 - c0) } else { 0.0 };
        (i as f64 - 1.0 + u) * dt
    };
    at(0.9) - at(0.1)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::{retrieval_efficiency, KernelMatrix};
    use crate::model::flip_spin_wave;

    #[test]
    fn retrieval_energy_is_the_kernel_efficiency() {
        for d in [1.0, 10.0, 100.0] {
            for s in [SpinWave::flat(201), SpinWave::linear(201)] {
                let out = fast_retrieve(&s, d, 2001);
                let want = retrieval_efficiency(&s, d);
                assert!((out.norm_sq() - want).abs() < 1e-4, "d {d}: {} vs {want}", out.norm_sq());
            }
        }
    }

    #[test]
    fn store_of_reversed_output_applies_the_kernel() {
        let d = 10.0;
        let s = SpinWave::parabola(201);
        let out = fast_retrieve(&s, d, 4001);
        let stored = fast_store(&time_reverse(&out), d, 101);
        let k = KernelMatrix::new(d);
        let f = flip_spin_wave(&s, 0.0);
        let sp = f.spline();
        let want: Vec<C64> = (0..101)
            .map(|i| {
                let z = i as f64 / 100.0;
                k.mesh
                    .nodes
                    .iter()
                    .zip(&k.mesh.weights)
                    .map(|(&x, &w)| sp.eval(x) * w * crate::kernels::kr(z, x, d))
                    .sum()
            })
            .collect();
        let err = stored.samples.iter().zip(&want).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
        assert!(err < 1e-3, "{err}");
    }

    #[test]
    fn width_of_a_box() {
        let f = FieldMode::from_fn(10001, 10.0, |t| C64::new(if (2.0..4.0).contains(&t) { 1.0 } else { 0.0 }, 0.0));
        assert!((energy_width(&f) - 1.6).abs() < 1e-2);
    }
}
