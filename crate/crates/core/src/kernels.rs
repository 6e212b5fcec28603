//! Closed-form retrieval kernel and the quantities derived from it.
//!
//! Forward retrieval from a spin wave S has efficiency
//! `eta = int int k(z, z') S(1 - z) S*(1 - z') dz dz'` with
//! `k(z, z') = (d/2) e^{-d (z + z')/2} I0(d sqrt(z z'))`, independent of the
//! control field and detuning.

use crate::bessel::{i0e, i1e, i1e_over_x};
use crate::model::SpinWave;
use crate::quad::{self, Mesh};
use num_complex::Complex64 as C64;
use rayon::prelude::*;

/// Retrieval kernel, evaluated as `(d/2) e^{-d (sqrt z - sqrt z')^2 / 2} i0e(d sqrt(z z'))`.
pub fn kr(z: f64, zp: f64, d: f64) -> f64 {
    let (a, b) = (z.max(0.0).sqrt(), zp.max(0.0).sqrt());
    0.5 * d * (-0.5 * d * (a - b) * (a - b)).exp() * i0e(d * a * b)
}

/// Kernel sampled on a graded Gauss-Legendre mesh, symmetrically weighted:
/// `entries[i][j] = sqrt(w_i) k(x_i, x_j) sqrt(w_j)`.
#[derive(Debug, Clone)]
pub struct KernelMatrix {
    pub d: f64,
    pub mesh: Mesh,
    pub sqrt_w: Vec<f64>,
    /// Row-major n x n.
    pub entries: Vec<f64>,
}

impl KernelMatrix {
    pub fn new(d: f64) -> KernelMatrix {
        let mesh = Mesh::unit_graded(d);
        let n = mesh.len();
        let sqrt_w: Vec<f64> = mesh.weights.iter().map(|w| w.sqrt()).collect();
        let rows: Vec<Vec<f64>> = (0..n)
            .into_par_iter()
            .map(|i| (0..=i).map(|j| sqrt_w[i] * kr(mesh.nodes[i], mesh.nodes[j], d) * sqrt_w[j]).collect())
            .collect();
        let mut entries = vec![0.0; n * n];
        for (i, row) in rows.iter().enumerate() {
            for (j, &v) in row.iter().enumerate() {
                entries[i * n + j] = v;
                entries[j * n + i] = v;
            }
        }
        KernelMatrix { d, mesh, sqrt_w, entries }
    }

    /// Rebuild from stored parts (used by on-disk caches).
    pub fn from_parts(d: f64, entries: Vec<f64>) -> Option<KernelMatrix> {
        let mesh = Mesh::unit_graded(d);
        let n = mesh.len();
        if entries.len() != n * n {
            return None;
        }
        let sqrt_w = mesh.weights.iter().map(|w| w.sqrt()).collect();
        Some(KernelMatrix { d, mesh, sqrt_w, entries })
    }

    pub fn n(&self) -> usize {
        self.sqrt_w.len()
    }

    pub fn nodes(&self) -> &[f64] {
        &self.mesh.nodes
    }

    pub fn apply(&self, v: &[C64]) -> Vec<C64> {
        let n = self.n();
        (0..n)
            .into_par_iter()
            .map(|i| {
                let row = &self.entries[i * n..(i + 1) * n];
                row.iter().zip(v).map(|(a, x)| x * a).sum()
            })
            .collect()
    }

    pub fn apply_real(&self, v: &[f64]) -> Vec<f64> {
        let n = self.n();
        (0..n)
            .into_par_iter()
            .map(|i| {
                let row = &self.entries[i * n..(i + 1) * n];
                row.iter().zip(v).map(|(a, x)| a * x).sum()
            })
            .collect()
    }

    /// Re(g^H A g) for g given at the mesh nodes in the kernel's own
    /// coordinate (g(x) = S(1 - x) for forward retrieval from S).
    pub fn quadratic_form(&self, g: &[C64]) -> f64 {
        let gw: Vec<C64> = g.iter().zip(&self.sqrt_w).map(|(v, s)| v * s).collect();
        let ag = self.apply(&gw);
        gw.iter().zip(&ag).map(|(a, b)| (a.conj() * b).re).sum()
    }

    /// Forward-retrieval efficiency of the spin wave `f(z)`.
    pub fn efficiency_fn(&self, f: impl Fn(f64) -> C64) -> f64 {
        let g: Vec<C64> = self.nodes().iter().map(|&x| f(1.0 - x)).collect();
        self.quadratic_form(&g)
    }

    /// Forward-retrieval efficiency of a sampled spin wave (cubic interpolation).
    pub fn efficiency(&self, s: &SpinWave) -> f64 {
        let sp = s.spline();
        self.efficiency_fn(|z| sp.eval(z))
    }
}

/// Forward-retrieval efficiency of `s`: the kernel quadratic form with
/// flipped arguments. For an unnormalized `s` this is the total efficiency.
pub fn retrieval_efficiency(s: &SpinWave, d: f64) -> f64 {
    KernelMatrix::new(d).efficiency(s)
}

/// Same as [`retrieval_efficiency`] for a spin wave given as a function,
/// with no interpolation error (useful for discontinuous test waves; the
/// graded mesh always has a breakpoint at z = 1/2).
pub fn retrieval_efficiency_fn(f: impl Fn(f64) -> C64, d: f64) -> f64 {
    KernelMatrix::new(d).efficiency_fn(f)
}

/// Exact retrieval error of the flat spin wave, e^{-d} (I0(d) + I1(d)).
pub fn flat_wave_error(d: f64) -> f64 {
    if d <= 0.0 {
        return 1.0;
    }
    i0e(d) + i1e(d)
}

/// Large-d error contributed by an amplitude step of height `height` at `z`:
/// height^2 sqrt(2/pi) sqrt(1 - z) / sqrt(d).
pub fn step_error_estimate(height: f64, z: f64, d: f64) -> f64 {
    height * height * (2.0 / std::f64::consts::PI).sqrt() * (1.0 - z).max(0.0).sqrt() / d.sqrt()
}

/// Experimental: the same law applied to a phase jump `phi` on a wave of
/// local magnitude `amplitude`, using the jump |amplitude (1 - e^{i phi})|
/// as the step height. Not validated.
pub fn phase_step_error_estimate(amplitude: f64, phi: f64, z: f64, d: f64) -> f64 {
    step_error_estimate(2.0 * amplitude * (0.5 * phi).sin().abs(), z, d)
}

fn inner_mesh(z: f64, d: f64) -> Mesh {
    let sd = d.sqrt();
    Mesh::adaptive(0.0, z, |x| (0.5 * (1.0 / d).max(2.0 * x.sqrt() / sd)).min(0.1), &[])
}

/// Loss per unit length l(z) during complete forward retrieval from the spin
/// wave `f`; integrates to 1 - eta for unit-norm `f`.
pub fn loss_density_at(f: &(dyn Fn(f64) -> C64 + Sync), d: f64, z: f64) -> f64 {
    let s = f(z);
    let first = s.norm_sqr();
    if z <= 0.0 {
        return first;
    }
    let m = inner_mesh(z, d);
    let vals: Vec<C64> = m.nodes.iter().map(|&x| f(z - x)).collect();
    let conv: C64 =
        m.nodes.iter().zip(&m.weights).zip(&vals).map(|((&x, &w), v)| v.conj() * ((-0.5 * d * x).exp() * w)).sum();
    let second = -(s * conv * d).re;
    let n = m.len();
    let mut third = 0.0;
    for i in 0..n {
        let (xi, wi) = (m.nodes[i], m.weights[i]);
        let ai = xi.sqrt();
        let mut row = C64::new(0.0, 0.0);
        for ((&xj, &wj), vj) in m.nodes.iter().zip(&m.weights).zip(&vals) {
            let aj = xj.sqrt();
            let arg = d * ai * aj;
            let k = 0.25
                * d
                * d
                * (-0.5 * d * (ai - aj) * (ai - aj)).exp()
                * (2.0 * i0e(arg) - (xi + xj) * d * i1e_over_x(arg));
            row += vj.conj() * (k * wj);
        }
        third += (vals[i] * row * wi).re;
    }
    first + second + third
}

/// l(z) at the sample points of `s`.
pub fn loss_density(s: &SpinWave, d: f64) -> Vec<f64> {
    let sp = s.spline();
    let f = move |z: f64| sp.eval(z);
    (0..s.len()).into_par_iter().map(|i| loss_density_at(&f, d, s.z(i))).collect()
}

/// l(z) at arbitrary points.
pub fn loss_density_points(s: &SpinWave, d: f64, z: &[f64]) -> Vec<f64> {
    let sp = s.spline();
    let f = move |x: f64| sp.eval(x);
    z.par_iter().map(|&x| loss_density_at(&f, d, x)).collect()
}

/// int_0^1 l(z) dz for the cubic interpolant of `s`.
pub fn loss_integral(s: &SpinWave, d: f64) -> f64 {
    let sp = s.spline();
    loss_integral_fn(&move |x: f64| sp.eval(x), d)
}

/// int_0^1 l(z) dz for a spin wave given as a function.
pub fn loss_integral_fn(f: &(dyn Fn(f64) -> C64 + Sync), d: f64) -> f64 {
    let m = Mesh::unit_graded(d);
    let vals: Vec<f64> = m.nodes.par_iter().map(|&z| loss_density_at(f, d, z)).collect();
    vals.iter().zip(&m.weights).map(|(v, w)| v * w).sum()
}

/// Norm squared of the cubic interpolant of `s` (as opposed to the
/// trapezoid norm of its samples).
pub fn interpolant_norm_sq(s: &SpinWave) -> f64 {
    let sp = s.spline();
    let n = s.len() - 1;
    Mesh::uniform(0.0, 1.0, n, 4).integrate(|z| sp.eval(z).norm_sqr())
}

/// Trapezoid integral of a sampled l(z) profile on a uniform grid.
pub fn integrate_profile(l: &[f64]) -> f64 {
    quad::trapezoid(l, 1.0 / (l.len() - 1) as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn kernel_trivial_values() {
        for d in [0.1, 1.0, 10.0, 1000.0] {
            assert!((kr(0.0, 0.0, d) - d / 2.0).abs() < 1e-14 * d);
        }
    }

    #[test]
    fn flat_error_values() {
        assert_eq!(flat_wave_error(0.0), 1.0);
        // e^{-100}(I0(100) + I1(100)) from 40-digit evaluation.
        assert!((flat_wave_error(100.0) - 0.07968853232422694).abs() < 1e-15);
        let asym = (2.0 / std::f64::consts::PI).sqrt() / 10.0;
        assert!((flat_wave_error(100.0) / asym - 1.0).abs() < 0.01);
    }

    #[test]
    fn flat_quadrature_matches_closed_form() {
        for d in [1.0, 10.0, 100.0] {
            let eta = retrieval_efficiency(&SpinWave::flat(101), d);
            assert!((1.0 - eta - flat_wave_error(d)).abs() < 1e-6, "d={d}");
        }
        let eta = retrieval_efficiency_fn(|_| C64::new(1.0, 0.0), 10.0);
        assert!((1.0 - eta - flat_wave_error(10.0)).abs() < 1e-12);
    }

    #[test]
    fn kernel_matrix_symmetric_nonnegative() {
        let k = KernelMatrix::new(50.0);
        let n = k.n();
        for i in 0..n {
            for j in 0..n {
                assert_eq!(k.entries[i * n + j], k.entries[j * n + i]);
                assert!(k.entries[i * n + j] >= 0.0);
            }
        }
    }

    #[test]
    fn step_estimate_examples() {
        let v = step_error_estimate(1.0, 0.0, 100.0);
        assert!((v - (2.0 / std::f64::consts::PI).sqrt() / 10.0).abs() < 1e-15);
        assert_eq!(step_error_estimate(1.0, 1.0, 100.0), 0.0);
    }

    #[test]
    fn loss_density_small_d_is_local() {
        let s = SpinWave::linear(41);
        let l = loss_density(&s, 1e-6);
        for (i, v) in l.iter().enumerate() {
            assert!((v - s.samples[i].norm_sqr()).abs() < 1e-4);
        }
    }

    #[test]
    fn loss_integrates_to_one_minus_eta() {
        let f = |z: f64| C64::new(3f64.sqrt() * z, 0.0);
        let total = loss_integral_fn(&f, 10.0) + retrieval_efficiency_fn(f, 10.0);
        assert!((total - 1.0).abs() < 1e-6, "total = {total}");
        let s = SpinWave::linear(201);
        let total = loss_integral(&s, 10.0) + retrieval_efficiency(&s, 10.0);
        assert!((total - interpolant_norm_sq(&s)).abs() < 1e-6, "total = {total}");
    }

    fn wave(coeffs: &[(f64, f64)]) -> SpinWave {
        SpinWave::from_fn(61, |z| coeffs.iter().enumerate().map(|(k, &(a, b))| C64::new(a, b) * z.powi(k as i32)).sum())
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]
        #[test]
        fn efficiency_bounded_and_conjugation_invariant(
            coeffs in proptest::collection::vec((-1.0f64..1.0, -1.0f64..1.0), 1..5),
            d in 0.05f64..200.0,
        ) {
            let s = wave(&coeffs);
            prop_assume!(s.norm_sq() > 1e-3);
            let s = s.normalized();
            let k = KernelMatrix::new(d);
            let e = k.efficiency(&s);
            let ec = k.efficiency(&s.conj());
            prop_assert!(e > 0.0 && e < 1.0);
            prop_assert!((e - ec).abs() < 1e-12);
        }
    }
}
