//! Optimal spin waves as dominant eigenvectors of kernel operators, and the
//! physical time-reversal iteration run through the solver.
//!
//! All kernel problems are discretized on the graded Gauss-Legendre mesh in
//! symmetric form `v = sqrt(w) f`, so the backward problem is a symmetric
//! positive semidefinite matrix and the others are similar to one. Power
//! iteration runs on `M^16` (four squarings) to survive the small spectral
//! gaps at large `d`; the Rayleigh quotient is always taken with `M`.

use crate::error::{Error, Result};
use crate::kernels::{kr, KernelMatrix};
use crate::model::{time_reverse, ControlField, FieldMode, Grid, Params, SpinWave};
use crate::solver::{simulate_with, SolverOptions, StageSpec};
use num_complex::Complex64 as C64;
use rayon::prelude::*;

const ZERO: C64 = C64 { re: 0.0, im: 0.0 };
const SQUARINGS: usize = 4;

#[derive(Debug, Clone)]
pub struct ModeOptions {
    /// Samples of the returned uniform-grid mode.
    pub nz: usize,
    /// Eigenvalue change tolerance.
    pub tol_value: f64,
    /// Mode L2 change tolerance.
    pub tol_mode: f64,
    pub max_iters: usize,
}

impl Default for ModeOptions {
    fn default() -> Self {
        ModeOptions { nz: 201, tol_value: 1e-10, tol_mode: 1e-8, max_iters: 500 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModeKind {
    Backward,
    Forward,
    Nondegenerate,
}

/// Continuous representation of a converged mode through the kernel:
/// `S(z) = sum_j k(arg(z), x_j) c_j`.
#[derive(Debug, Clone)]
pub struct NystromMode {
    kind: ModeKind,
    d: f64,
    nodes: Vec<f64>,
    coeffs: Vec<C64>,
}

impl NystromMode {
    pub fn eval(&self, z: f64) -> C64 {
        let arg = match self.kind {
            ModeKind::Backward => 1.0 - z,
            ModeKind::Forward | ModeKind::Nondegenerate => z,
        };
        self.nodes.iter().zip(&self.coeffs).map(|(&x, c)| c * kr(arg, x, self.d)).sum()
    }
}

#[derive(Debug, Clone)]
pub struct OptimResult {
    pub kind: ModeKind,
    /// Normalized mode on a uniform grid, global phase fixed.
    pub mode: SpinWave,
    pub eigenvalue: C64,
    /// lambda (backward), lambda^2 (forward) or |lambda|^2 (nondegenerate).
    pub efficiency: f64,
    pub iterations: usize,
    pub residual: f64,
    /// Rayleigh quotient after each accelerated step.
    pub history: Vec<f64>,
    /// The same mode as a function, unit norm in the mesh quadrature.
    pub continuous: NystromMode,
}

impl OptimResult {
    pub fn eval(&self, z: f64) -> C64 {
        self.continuous.eval(z)
    }
}

/// Dense complex row-major matrix.
#[derive(Debug, Clone)]
struct CMat {
    n: usize,
    a: Vec<C64>,
}

impl CMat {
    fn from_real(n: usize, a: &[f64]) -> CMat {
        CMat { n, a: a.iter().map(|&v| C64::new(v, 0.0)).collect() }
    }

    fn mul(&self, other: &CMat) -> CMat {
        let n = self.n;
        let a: Vec<C64> = (0..n)
            .into_par_iter()
            .flat_map_iter(|i| {
                let mut row = vec![ZERO; n];
                for k in 0..n {
                    let x = self.a[i * n + k];
                    if x == ZERO {
                        continue;
                    }
                    let b = &other.a[k * n..(k + 1) * n];
                    for (r, y) in row.iter_mut().zip(b) {
                        *r += x * y;
                    }
                }
                row
            })
            .collect();
        CMat { n, a }
    }

    fn apply(&self, v: &[C64]) -> Vec<C64> {
        let n = self.n;
        (0..n).into_par_iter().map(|i| self.a[i * n..(i + 1) * n].iter().zip(v).map(|(x, y)| x * y).sum()).collect()
    }

    fn scale_to_unit(&mut self) {
        let m = self.a.iter().map(|v| v.norm()).fold(0.0, f64::max);
        if m > 0.0 {
            for v in &mut self.a {
                *v /= m;
            }
        }
    }
}

fn vnorm(v: &[C64]) -> f64 {
    v.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt()
}

fn vdot(a: &[C64], b: &[C64]) -> C64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

/// Distance between unit vectors after aligning the global phase.
fn phase_distance(a: &[C64], b: &[C64]) -> f64 {
    let ip = vdot(a, b);
    let ph = if ip.norm() > 0.0 { ip / ip.norm() } else { C64::new(1.0, 0.0) };
    a.iter().zip(b).map(|(x, y)| (x * ph - y).norm_sqr()).sum::<f64>().sqrt()
}

struct Dominant {
    vector: Vec<C64>,
    value: f64,
    iterations: usize,
    residual: f64,
    history: Vec<f64>,
}

/// Dominant eigenpair of `m`, assumed similar to a Hermitian PSD matrix.
fn dominant(m: &CMat, start: Vec<C64>, opts: &ModeOptions, what: &'static str) -> Result<Dominant> {
    let mut p = m.clone();
    p.scale_to_unit();
    for _ in 0..SQUARINGS {
        p = p.mul(&p);
        p.scale_to_unit();
    }
    let mut v = start;
    let nv = vnorm(&v);
    v.iter_mut().for_each(|x| *x /= nv);
    let rayleigh = |v: &[C64]| vdot(v, &m.apply(v)).re / vdot(v, v).re;
    let mut value = rayleigh(&v);
    let mut history = vec![value];
    let mut residual = f64::INFINITY;
    for it in 1..=opts.max_iters {
        let mut w = p.apply(&v);
        let nw = vnorm(&w);
        if nw == 0.0 || !nw.is_finite() {
            return Err(Error::NoConvergence { what, iterations: it, residual });
        }
        w.iter_mut().for_each(|x| *x /= nw);
        let next = rayleigh(&w);
        residual = phase_distance(&v, &w);
        let dv = (next - value).abs();
        v = w;
        value = next;
        history.push(value);
        if residual < opts.tol_mode && dv < opts.tol_value {
            return Ok(Dominant { vector: v, value, iterations: it, residual, history });
        }
    }
    Err(Error::NoConvergence { what, iterations: opts.max_iters, residual })
}

/// Dominant eigenpair of a real symmetric PSD row-major `n x n` matrix.
pub(crate) fn dominant_symmetric(
    n: usize,
    a: &[f64],
    opts: &ModeOptions,
    what: &'static str,
) -> Result<(Vec<f64>, f64, usize)> {
    let m = CMat::from_real(n, a);
    let dom = dominant(&m, vec![C64::new(1.0, 0.0); n], opts, what)?;
    let v = fix_sign(dom.vector);
    Ok((v, dom.value, dom.iterations))
}

/// Real part after rotating the largest entry onto the positive real axis.
fn fix_sign(v: Vec<C64>) -> Vec<f64> {
    let big = v.iter().cloned().fold(ZERO, |a, b| if b.norm() > a.norm() { b } else { a });
    let ph = if big.norm() > 0.0 { big.conj() / big.norm() } else { C64::new(1.0, 0.0) };
    v.iter().map(|x| (x * ph).re).collect()
}

fn check_d(d: f64) -> Result<()> {
    if !(d > 0.0 && d.is_finite()) {
        return Err(Error::InvalidParameter(format!("d = {d} must be > 0")));
    }
    Ok(())
}

/// Rotate so the largest-magnitude sample is real and positive.
pub fn fix_phase(s: &SpinWave) -> SpinWave {
    let k = (0..s.len()).max_by(|&a, &b| s.samples[a].norm().total_cmp(&s.samples[b].norm())).unwrap();
    let v = s.samples[k];
    if v.norm() == 0.0 {
        return s.clone();
    }
    let out = s.scaled(v.conj() / v.norm());
    if s.is_normalized() {
        out.normalized()
    } else {
        out
    }
}

/// Uniform-grid samples of a Nystrom mode, normalized.
fn sample_mode(cont: &NystromMode, nz: usize) -> SpinWave {
    SpinWave::from_fn(nz, |z| cont.eval(z)).normalized()
}

/// Maximal single-pass backward retrieval: `eta S(1 - z) = int k(z, z') S(1 - z') dz'`.
pub fn optimal_backward_mode(d: f64, opts: &ModeOptions) -> Result<OptimResult> {
    check_d(d)?;
    let k = KernelMatrix::new(d);
    optimal_backward_mode_with(&k, opts)
}

pub fn optimal_backward_mode_with(k: &KernelMatrix, opts: &ModeOptions) -> Result<OptimResult> {
    let n = k.n();
    let m = CMat::from_real(n, &k.entries);
    let start: Vec<C64> = k.sqrt_w.iter().map(|&s| C64::new(s, 0.0)).collect();
    let dom = dominant(&m, start, opts, "backward mode")?;
    let lambda = dom.value;
    // f at nodes from v = sqrt(w) f; f(x) = (1/lambda) sum_j k(x, x_j) w_j f_j.
    let sign = {
        let s: C64 = dom.vector.iter().zip(&k.sqrt_w).map(|(v, w)| v * w).sum();
        if s.norm() > 0.0 {
            s.conj() / s.norm()
        } else {
            C64::new(1.0, 0.0)
        }
    };
    let coeffs: Vec<C64> = dom.vector.iter().zip(&k.sqrt_w).map(|(v, w)| v * w * sign / lambda).collect();
    let continuous = NystromMode { kind: ModeKind::Backward, d: k.d, nodes: k.nodes().to_vec(), coeffs };
    let mode = fix_real(sample_mode(&continuous, opts.nz));
    Ok(OptimResult {
        kind: ModeKind::Backward,
        mode,
        eigenvalue: C64::new(lambda, 0.0),
        efficiency: lambda,
        iterations: dom.iterations,
        residual: dom.residual,
        history: dom.history,
        continuous,
    })
}

/// Drop rounding-level imaginary parts of a real mode and make its mean positive.
fn fix_real(s: SpinWave) -> SpinWave {
    let mean: f64 = s.samples.iter().map(|v| v.re).sum();
    let sg = if mean < 0.0 { -1.0 } else { 1.0 };
    SpinWave::new(s.samples.iter().map(|v| C64::new(sg * v.re, 0.0)).collect()).normalized()
}

/// Optimal mode for storage followed by forward retrieval:
/// `lambda S(z) = int k(z, 1 - z') S(z') dz'`, total efficiency lambda^2.
pub fn optimal_forward_mode(d: f64, opts: &ModeOptions) -> Result<OptimResult> {
    check_d(d)?;
    let k = KernelMatrix::new(d);
    let n = k.n();
    // Mesh is symmetric about 1/2, so 1 - x_j = x_{n-1-j} and w is symmetric.
    let mut aj = vec![ZERO; n * n];
    for i in 0..n {
        for j in 0..n {
            aj[i * n + j] = C64::new(k.entries[i * n + (n - 1 - j)], 0.0);
        }
    }
    let m1 = CMat { n, a: aj };
    let m2 = m1.mul(&m1);
    let start: Vec<C64> = k.sqrt_w.iter().map(|&s| C64::new(s, 0.0)).collect();
    let dom = dominant(&m2, start, opts, "forward mode")?;
    let v = dom.vector;
    let av = m1.apply(&v);
    let lambda = vdot(&v, &av).re / vdot(&v, &v).re;
    // S(z) = (1/lambda) sum_j k(z, 1 - x_j) w_j S(x_j) = (1/lambda) sum_j k(z, x_j) w_j S(1 - x_j).
    let coeffs: Vec<C64> = (0..n).map(|j| v[n - 1 - j] * k.sqrt_w[j] / lambda).collect();
    let continuous = NystromMode { kind: ModeKind::Forward, d, nodes: k.nodes().to_vec(), coeffs };
    let mode = fix_real(sample_mode(&continuous, opts.nz));
    Ok(OptimResult {
        kind: ModeKind::Forward,
        mode,
        eigenvalue: C64::new(lambda, 0.0),
        efficiency: lambda * lambda,
        iterations: dom.iterations,
        residual: dom.residual,
        history: dom.history,
        continuous,
    })
}

/// Two-step operator `A Phi A Phi*` of the nondegenerate iteration
/// `S2 = int k(z, z') e^{-2 i dk z'} S1*(z') dz'`.
fn nondegenerate_parts(k: &KernelMatrix, dk: f64) -> (CMat, Vec<C64>) {
    let n = k.n();
    let phi: Vec<C64> = k.nodes().iter().map(|&x| C64::from_polar(1.0, -2.0 * dk * x)).collect();
    let a = CMat::from_real(n, &k.entries);
    let mut a_phi = a.clone();
    let mut a_phic = a;
    for i in 0..n {
        for (j, p) in phi.iter().enumerate() {
            a_phi.a[i * n + j] *= p;
            a_phic.a[i * n + j] *= p.conj();
        }
    }
    (a_phi.mul(&a_phic), phi)
}

/// Optimal spin wave for storage followed by backward retrieval when the
/// metastable states are split (`dk != 0`). The returned mode is the stored
/// spin wave; at `dk = 0` it is the backward optimum reflected, and the
/// efficiency is the total (squared) efficiency.
pub fn optimal_nondegenerate_mode(d: f64, dk: f64, opts: &ModeOptions) -> Result<OptimResult> {
    check_d(d)?;
    if !(dk >= 0.0 && dk.is_finite()) {
        return Err(Error::InvalidParameter(format!("dk = {dk} must be >= 0")));
    }
    let k = KernelMatrix::new(d);
    let n = k.n();
    let (m, phi) = nondegenerate_parts(&k, dk);
    let start: Vec<C64> = k.sqrt_w.iter().map(|&s| C64::new(s, 0.0)).collect();
    let dom = dominant(&m, start, opts, "nondegenerate mode")?;
    let v = dom.vector;
    // One antilinear step T v = A Phi v*; on the dominant space T v = c v.
    let vc: Vec<C64> = v.iter().zip(&phi).map(|(x, p)| x.conj() * p).collect();
    let a = CMat::from_real(n, &k.entries);
    let tv = a.apply(&vc);
    let c = vdot(&v, &tv);
    // f(x) = (1/c) sum_j k(x, x_j) w_j Phi_j f_j^*, with f_j = v_j / sqrt(w_j).
    let coeffs: Vec<C64> = (0..n).map(|j| vc[j] * k.sqrt_w[j] / c).collect();
    let continuous = NystromMode { kind: ModeKind::Nondegenerate, d, nodes: k.nodes().to_vec(), coeffs };
    let mode = fix_phase(&sample_mode(&continuous, opts.nz));
    Ok(OptimResult {
        kind: ModeKind::Nondegenerate,
        mode,
        eigenvalue: C64::new(c.norm(), 0.0),
        efficiency: dom.value,
        iterations: dom.iterations,
        residual: dom.residual,
        history: dom.history,
        continuous,
    })
}

/// Total optimal efficiency |lambda|^2 of storage plus backward retrieval at `dk`.
pub fn nondegenerate_efficiency(k: &KernelMatrix, dk: f64, opts: &ModeOptions) -> Result<f64> {
    let (m, _) = nondegenerate_parts(k, dk);
    let start: Vec<C64> = k.sqrt_w.iter().map(|&s| C64::new(s, 0.0)).collect();
    Ok(dominant(&m, start, opts, "nondegenerate efficiency")?.value)
}

/// First root of `f(x) = 1/2` on `(0, hi]` for `f(0) = 1`: scan then bisect.
fn half_crossing(mut f: impl FnMut(f64) -> Result<f64>, hi: f64, steps: usize, tol: f64) -> Result<f64> {
    let mut lo = 0.0;
    let mut found = None;
    for k in 1..=steps {
        let x = hi * k as f64 / steps as f64;
        if f(x)? <= 0.5 {
            found = Some(x);
            break;
        }
        lo = x;
    }
    let Some(mut up) = found else {
        return Err(Error::Bracket(format!("ratio stays above 1/2 on [0, {hi}]")));
    };
    while up - lo > tol {
        let mid = 0.5 * (lo + up);
        if f(mid)? <= 0.5 {
            up = mid;
        } else {
            lo = mid;
        }
    }
    Ok(0.5 * (lo + up))
}

/// The dk at which the forward-retrieval efficiency of `s e^{-2 i dk z}`
/// halves, for a fixed mode.
pub fn halfwidth_dk(s: &SpinWave, d: f64) -> Result<f64> {
    check_d(d)?;
    let k = KernelMatrix::new(d);
    let sp = s.spline();
    let eff = |dk: f64| k.efficiency_fn(|z| sp.eval(z) * C64::from_polar(1.0, -2.0 * dk * z));
    let e0 = eff(0.0);
    if e0 <= 0.0 {
        return Err(Error::Bracket("zero efficiency at dk = 0".into()));
    }
    half_crossing(|dk| Ok(eff(dk) / e0), 20.0 * d.sqrt().max(1.0), 400, 1e-4)
}

/// The dk at which the reoptimized total efficiency halves.
pub fn reoptimized_halfwidth_dk(d: f64, opts: &ModeOptions) -> Result<f64> {
    check_d(d)?;
    let k = KernelMatrix::new(d);
    let e0 = nondegenerate_efficiency(&k, 0.0, opts)?;
    let hi = 20.0 * d.sqrt().max(1.0) + d;
    half_crossing(|dk| Ok(nondegenerate_efficiency(&k, dk, opts)? / e0), hi, 200, 1e-4)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Backward,
    Forward,
}

#[derive(Debug, Clone)]
pub struct TimeReversalResult {
    pub input: FieldMode,
    pub spin: SpinWave,
    pub efficiency: f64,
    /// Total efficiency after each forward pass.
    pub history: Vec<f64>,
    pub iterations: usize,
    pub residual: f64,
}

/// Store with `storage_control`, retrieve with `retrieval_control`, then
/// run the time-reversed process (store the conjugate-reversed output with
/// the reversed retrieval control, retrieve with the reversed storage
/// control) and conjugate-reverse again. Each round is one power step of
/// `M^dagger M` for the storage-retrieval map `M`.
#[allow(clippy::too_many_arguments)]
pub fn time_reversal_iterate(
    params: &Params,
    grid: &Grid,
    storage_control: &ControlField,
    retrieval_control: &ControlField,
    seed_input: &FieldMode,
    direction: Direction,
    max_iters: usize,
    tol: f64,
) -> Result<TimeReversalResult> {
    let opts = SolverOptions { record_fields: false, ..SolverOptions::default() };
    let rev_storage = retrieval_control.time_reversed();
    let rev_retrieval = storage_control.time_reversed();
    let run = |input: &FieldMode, sc: &ControlField, rc: &ControlField| -> Result<(f64, SpinWave, FieldMode)> {
        let st = simulate_with(params, grid, &StageSpec::storage(sc.clone(), input.clone()), &opts)?;
        let spin = st.final_spin.clone();
        let stage = match direction {
            Direction::Backward => StageSpec::retrieval_backward(rc.clone(), spin.clone()),
            Direction::Forward => StageSpec::retrieval_forward(rc.clone(), spin.clone()),
        };
        let rt = simulate_with(params, grid, &stage, &opts)?;
        Ok((rt.eta / st.input_norm, spin, rt.output))
    };
    let mut input = seed_input.normalized();
    let mut history = Vec::new();
    let mut residual = f64::INFINITY;
    for it in 1..=max_iters {
        let (eff, _, out) = run(&input, storage_control, retrieval_control)?;
        if let Some(&prev) = history.last() {
            if eff < prev - 1e-6 {
                return Err(Error::EfficiencyDecrease { iteration: it, before: prev, after: eff });
            }
        }
        history.push(eff);
        let (_, _, back) = run(&time_reverse(&out).normalized(), &rev_storage, &rev_retrieval)?;
        let next = time_reverse(&back).normalized();
        let ip = input.inner(&next);
        let ph = if ip.norm() > 0.0 { ip.conj() / ip.norm() } else { C64::new(1.0, 0.0) };
        let aligned = FieldMode::new(next.samples.iter().map(|v| v * ph).collect(), next.t_win).normalized();
        let diff: Vec<C64> = input.samples.iter().zip(&aligned.samples).map(|(a, b)| a - b).collect();
        residual = crate::quad::trapezoid_norm_sq(&diff, input.dt()).sqrt();
        input = aligned;
        if residual < tol {
            let (eff, spin, _) = run(&input, storage_control, retrieval_control)?;
            history.push(eff);
            return Ok(TimeReversalResult { input, spin, efficiency: eff, history, iterations: it, residual });
        }
    }
    Err(Error::NoConvergence { what: "time-reversal iteration", iterations: max_iters, residual })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn backward_limits() {
        let o = ModeOptions::default();
        let big = optimal_backward_mode(1000.0, &o).unwrap();
        assert!(big.mode.l2_distance(&SpinWave::linear(201)) < 0.1);
        let small = optimal_backward_mode(0.01, &o).unwrap();
        assert!(small.mode.l2_distance(&SpinWave::flat(201)) < 0.05);
        let mid = optimal_backward_mode(100.0, &o).unwrap();
        let err = 1.0 - mid.efficiency;
        assert!((err - 0.029).abs() < 0.15 * 0.029, "err = {err}");
    }

    #[test]
    fn backward_is_self_consistent() {
        let r = optimal_backward_mode(10.0, &ModeOptions::default()).unwrap();
        let k = KernelMatrix::new(10.0);
        let e = k.efficiency_fn(|z| r.eval(z));
        assert!((e - r.efficiency).abs() < 1e-10, "{e} vs {}", r.efficiency);
        assert!((k.efficiency(&r.mode) - r.efficiency).abs() < 1e-4);
        assert!(r.history.windows(2).all(|w| w[1] >= w[0] - 1e-15));
        assert!(r.residual < 1e-8);
    }

    #[test]
    fn forward_is_below_backward_and_agrees_at_small_d() {
        let o = ModeOptions::default();
        for d in [0.01, 1.0, 10.0, 100.0] {
            let f = optimal_forward_mode(d, &o).unwrap();
            let b = optimal_backward_mode(d, &o).unwrap();
            assert!(f.efficiency <= b.efficiency * b.efficiency + 1e-12, "d = {d}");
            if d == 0.01 {
                assert!((f.efficiency.sqrt() - b.efficiency).abs() < 1e-3);
            }
        }
    }

    #[test]
    fn nondegenerate_reduces_to_backward_at_zero_dk() {
        let o = ModeOptions::default();
        let b = optimal_backward_mode(10.0, &o).unwrap();
        let n = optimal_nondegenerate_mode(10.0, 0.0, &o).unwrap();
        assert!((n.efficiency - b.efficiency * b.efficiency).abs() < 1e-8);
        let flipped = crate::model::flip_spin_wave(&b.mode, 0.0);
        assert!(n.mode.l2_distance(&flipped) < 1e-6);
    }

    #[test]
    fn halfwidth_at_zero_and_bracket() {
        assert!(halfwidth_dk(&SpinWave::flat(201), 25.0).unwrap() > 0.0);
        assert!(halfwidth_dk(&SpinWave::flat(201), -1.0).is_err());
    }
}
