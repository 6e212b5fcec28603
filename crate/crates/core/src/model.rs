//! Dimensionless domain types shared by every module.
//!
//! Lengths are in units of the ensemble length, times in units of the inverse
//! optical polarization decay rate. Sampled objects live on uniform grids that
//! include both endpoints.

use crate::error::{Error, Result};
use crate::quad::{self, Mesh, Spline};
use num_complex::Complex64 as C64;

/// Physical configuration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Params {
    /// Optical depth.
    pub d: f64,
    /// One-photon detuning.
    pub delta: f64,
    /// Spin-wave decay rate.
    pub gamma_s: f64,
    /// Momentum mismatch written on the spin wave in backward retrieval.
    pub dk: f64,
}

impl Params {
    pub fn new(d: f64, delta: f64, gamma_s: f64, dk: f64) -> Result<Params> {
        let p = Params { d, delta, gamma_s, dk };
        p.validate()?;
        Ok(p)
    }

    /// Resonant, decay-free, degenerate configuration.
    pub fn resonant(d: f64) -> Params {
        Params { d, delta: 0.0, gamma_s: 0.0, dk: 0.0 }
    }

    pub fn with_delta(self, delta: f64) -> Params {
        Params { delta, ..self }
    }

    pub fn validate(&self) -> Result<()> {
        let all = [self.d, self.delta, self.gamma_s, self.dk];
        if all.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter("parameters must be finite".into()));
        }
        if self.d <= 0.0 {
            return Err(Error::InvalidParameter(format!("d = {} must be > 0", self.d)));
        }
        if self.gamma_s < 0.0 {
            return Err(Error::InvalidParameter(format!("gamma_s = {} must be >= 0", self.gamma_s)));
        }
        if self.dk < 0.0 {
            return Err(Error::InvalidParameter(format!("dk = {} must be >= 0", self.dk)));
        }
        Ok(())
    }

    /// |d + i delta|^2, the scale the control energy must exceed for complete
    /// retrieval.
    pub fn completeness_scale(&self) -> f64 {
        self.d * self.d + self.delta * self.delta
    }
}

/// Space-time discretization.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid {
    pub nz: usize,
    pub nt: usize,
    pub t_win: f64,
}

impl Grid {
    pub fn new(nz: usize, nt: usize, t_win: f64) -> Result<Grid> {
        if nz < 2 || nt < 2 {
            return Err(Error::InvalidParameter(format!("grid needs nz >= 2 and nt >= 2, got {nz} x {nt}")));
        }
        if !(t_win > 0.0 && t_win.is_finite()) {
            return Err(Error::InvalidParameter(format!("t_win = {t_win} must be > 0")));
        }
        Ok(Grid { nz, nt, t_win })
    }

    pub fn dz(&self) -> f64 {
        1.0 / (self.nz - 1) as f64
    }

    pub fn dt(&self) -> f64 {
        self.t_win / (self.nt - 1) as f64
    }

    pub fn z(&self, i: usize) -> f64 {
        i as f64 * self.dz()
    }

    pub fn t(&self, n: usize) -> f64 {
        n as f64 * self.dt()
    }
}

/// Spin-wave amplitude S(z) on a uniform grid over [0, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct SpinWave {
    pub samples: Vec<C64>,
    normalized: bool,
}

impl SpinWave {
    pub fn new(samples: Vec<C64>) -> SpinWave {
        assert!(samples.len() >= 2, "spin wave needs at least two samples");
        SpinWave { samples, normalized: false }
    }

    pub fn from_fn(nz: usize, f: impl Fn(f64) -> C64) -> SpinWave {
        SpinWave::new(quad::linspace(0.0, 1.0, nz).into_iter().map(f).collect())
    }

    /// S = 1.
    pub fn flat(nz: usize) -> SpinWave {
        SpinWave::from_fn(nz, |_| C64::new(1.0, 0.0)).normalized()
    }

    /// S = sqrt(3) z, the large-d optimum for retrieval.
    pub fn linear(nz: usize) -> SpinWave {
        SpinWave::from_fn(nz, |z| C64::new(3f64.sqrt() * z, 0.0)).normalized()
    }

    /// sqrt(15/8) (1 - 4 (z - 1/2)^2), the large-d optimum for storage
    /// followed by forward retrieval.
    pub fn parabola(nz: usize) -> SpinWave {
        SpinWave::from_fn(nz, |z| C64::new((15.0f64 / 8.0).sqrt() * (1.0 - 4.0 * (z - 0.5) * (z - 0.5)), 0.0))
            .normalized()
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn dz(&self) -> f64 {
        1.0 / (self.samples.len() - 1) as f64
    }

    pub fn z(&self, i: usize) -> f64 {
        i as f64 * self.dz()
    }

    pub fn is_normalized(&self) -> bool {
        self.normalized
    }

    pub fn norm_sq(&self) -> f64 {
        quad::trapezoid_norm_sq(&self.samples, self.dz())
    }

    /// Copy rescaled to unit trapezoid norm. A zero wave stays zero and
    /// unflagged.
    pub fn normalized(&self) -> SpinWave {
        let n = self.norm_sq().sqrt();
        if n == 0.0 {
            return SpinWave::new(self.samples.clone());
        }
        SpinWave { samples: self.samples.iter().map(|v| v / n).collect(), normalized: true }
    }

    pub fn scaled(&self, c: C64) -> SpinWave {
        SpinWave::new(self.samples.iter().map(|v| v * c).collect())
    }

    pub fn conj(&self) -> SpinWave {
        SpinWave { samples: self.samples.iter().map(|v| v.conj()).collect(), normalized: self.normalized }
    }

    pub fn spline(&self) -> Spline {
        Spline::new(0.0, 1.0, &self.samples)
    }

    /// Resample onto `nz` uniform points by cubic interpolation.
    pub fn resampled(&self, nz: usize) -> SpinWave {
        let sp = self.spline();
        SpinWave::from_fn(nz, |z| sp.eval(z))
    }

    pub fn inner(&self, other: &SpinWave) -> C64 {
        if other.len() == self.len() {
            quad::trapezoid_inner(&self.samples, &other.samples, self.dz())
        } else {
            quad::trapezoid_inner(&self.samples, &other.resampled(self.len()).samples, self.dz())
        }
    }

    /// |<a, b>| / (|a| |b|).
    pub fn overlap(&self, other: &SpinWave) -> f64 {
        self.inner(other).norm() / (self.norm_sq() * other.norm_sq()).sqrt()
    }

    /// L2 distance ||a - b|| without phase alignment.
    pub fn l2_distance(&self, other: &SpinWave) -> f64 {
        let o = if other.len() == self.len() { other.clone() } else { other.resampled(self.len()) };
        let diff: Vec<C64> = self.samples.iter().zip(&o.samples).map(|(a, b)| a - b).collect();
        quad::trapezoid_norm_sq(&diff, self.dz()).sqrt()
    }
}

/// Temporal envelope E(t) on a uniform grid over [0, t_win].
#[derive(Debug, Clone, PartialEq)]
pub struct FieldMode {
    pub samples: Vec<C64>,
    pub t_win: f64,
    normalized: bool,
}

impl FieldMode {
    pub fn new(samples: Vec<C64>, t_win: f64) -> FieldMode {
        assert!(samples.len() >= 2, "field mode needs at least two samples");
        FieldMode { samples, t_win, normalized: false }
    }

    pub fn from_fn(nt: usize, t_win: f64, f: impl Fn(f64) -> C64) -> FieldMode {
        FieldMode::new(quad::linspace(0.0, t_win, nt).into_iter().map(f).collect(), t_win)
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn dt(&self) -> f64 {
        self.t_win / (self.samples.len() - 1) as f64
    }

    pub fn t(&self, n: usize) -> f64 {
        n as f64 * self.dt()
    }

    pub fn is_normalized(&self) -> bool {
        self.normalized
    }

    pub fn norm_sq(&self) -> f64 {
        quad::trapezoid_norm_sq(&self.samples, self.dt())
    }

    pub fn normalized(&self) -> FieldMode {
        let n = self.norm_sq().sqrt();
        if n == 0.0 {
            return FieldMode::new(self.samples.clone(), self.t_win);
        }
        FieldMode { samples: self.samples.iter().map(|v| v / n).collect(), t_win: self.t_win, normalized: true }
    }

    pub fn spline(&self) -> Spline {
        Spline::new(0.0, self.t_win, &self.samples)
    }

    /// Linear interpolation; zero outside the window.
    pub fn eval_linear(&self, t: f64) -> C64 {
        interp_linear(&self.samples, self.t_win, t)
    }

    pub fn resampled(&self, nt: usize) -> FieldMode {
        let sp = self.spline();
        FieldMode::from_fn(nt, self.t_win, |t| sp.eval(t))
    }

    pub fn inner(&self, other: &FieldMode) -> C64 {
        if other.len() == self.len() && other.t_win == self.t_win {
            quad::trapezoid_inner(&self.samples, &other.samples, self.dt())
        } else {
            let o: Vec<C64> = (0..self.len()).map(|n| other.eval_linear(self.t(n))).collect();
            quad::trapezoid_inner(&self.samples, &o, self.dt())
        }
    }

    pub fn overlap(&self, other: &FieldMode) -> f64 {
        self.inner(other).norm() / (self.norm_sq() * other.norm_sq()).sqrt()
    }
}

/// Control Rabi envelope with its cumulative energy h(0, t_n).
#[derive(Debug, Clone, PartialEq)]
pub struct ControlField {
    pub samples: Vec<C64>,
    pub t_win: f64,
    pub h_cum: Vec<f64>,
}

impl ControlField {
    /// Control whose h is integrated exactly for the piecewise-linear
    /// interpolant of the samples.
    pub fn new(samples: Vec<C64>, t_win: f64) -> ControlField {
        assert!(samples.len() >= 2, "control needs at least two samples");
        let dt = t_win / (samples.len() - 1) as f64;
        let mut h_cum = Vec::with_capacity(samples.len());
        h_cum.push(0.0);
        for w in samples.windows(2) {
            let last = *h_cum.last().unwrap();
            h_cum.push(last + dt * segment_energy(w[0], w[1]));
        }
        ControlField { samples, t_win, h_cum }
    }

    pub fn from_fn(nt: usize, t_win: f64, f: impl Fn(f64) -> C64) -> ControlField {
        ControlField::new(quad::linspace(0.0, t_win, nt).into_iter().map(f).collect(), t_win)
    }

    /// Control with an externally computed cumulative energy table.
    pub fn with_h_cum(samples: Vec<C64>, t_win: f64, h_cum: Vec<f64>) -> Result<ControlField> {
        if h_cum.len() != samples.len() {
            return Err(Error::InvalidParameter("h_cum length must match samples".into()));
        }
        if h_cum[0] != 0.0 {
            return Err(Error::InvalidParameter("h_cum[0] must be 0".into()));
        }
        if h_cum.windows(2).any(|w| w[1] < w[0]) || h_cum.iter().any(|h| !h.is_finite()) {
            return Err(Error::InvalidParameter("h_cum must be finite and nondecreasing".into()));
        }
        Ok(ControlField { samples, t_win, h_cum })
    }

    pub fn zero(nt: usize, t_win: f64) -> ControlField {
        ControlField::new(vec![C64::new(0.0, 0.0); nt], t_win)
    }

    /// Constant real control.
    pub fn constant(nt: usize, t_win: f64, omega: f64) -> ControlField {
        ControlField::new(vec![C64::new(omega, 0.0); nt], t_win)
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn dt(&self) -> f64 {
        self.t_win / (self.samples.len() - 1) as f64
    }

    pub fn t(&self, n: usize) -> f64 {
        n as f64 * self.dt()
    }

    /// h(0, t_win).
    pub fn h_total(&self) -> f64 {
        *self.h_cum.last().unwrap()
    }

    pub fn eval_linear(&self, t: f64) -> C64 {
        interp_linear(&self.samples, self.t_win, t)
    }

    pub fn max_abs(&self) -> f64 {
        self.samples.iter().map(|v| v.norm()).fold(0.0, f64::max)
    }

    /// Omega*(T - t) with h recomputed from the reversed table.
    pub fn time_reversed(&self) -> ControlField {
        let n = self.samples.len();
        let total = self.h_total();
        let samples = self.samples.iter().rev().map(|v| v.conj()).collect();
        let h_cum = (0..n).map(|i| (total - self.h_cum[n - 1 - i]).max(0.0)).collect::<Vec<_>>();
        let mut h_cum: Vec<f64> = h_cum;
        h_cum[0] = 0.0;
        for i in 1..n {
            if h_cum[i] < h_cum[i - 1] {
                h_cum[i] = h_cum[i - 1];
            }
        }
        ControlField { samples, t_win: self.t_win, h_cum }
    }

    /// Same samples scaled by a real factor, h rescaled accordingly.
    pub fn scaled(&self, c: f64) -> ControlField {
        ControlField {
            samples: self.samples.iter().map(|v| v * c).collect(),
            t_win: self.t_win,
            h_cum: self.h_cum.iter().map(|h| h * c * c).collect(),
        }
    }
}

/// Decayless spin wave s(z) on a uniform grid over [0, z_max].
#[derive(Debug, Clone, PartialEq)]
pub struct DecaylessMode {
    pub samples: Vec<C64>,
    pub z_max: f64,
    normalized: bool,
}

impl DecaylessMode {
    pub fn new(samples: Vec<C64>, z_max: f64) -> DecaylessMode {
        assert!(samples.len() >= 2 && z_max >= 1.0, "decayless mode needs z_max >= 1");
        DecaylessMode { samples, z_max, normalized: false }
    }

    pub fn from_fn(nz: usize, z_max: f64, f: impl Fn(f64) -> C64) -> DecaylessMode {
        DecaylessMode::new(quad::linspace(0.0, z_max, nz).into_iter().map(f).collect(), z_max)
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn dz(&self) -> f64 {
        self.z_max / (self.samples.len() - 1) as f64
    }

    pub fn z(&self, i: usize) -> f64 {
        i as f64 * self.dz()
    }

    pub fn is_normalized(&self) -> bool {
        self.normalized
    }

    pub fn norm_sq(&self) -> f64 {
        quad::trapezoid_norm_sq(&self.samples, self.dz())
    }

    pub fn normalized(&self) -> DecaylessMode {
        let n = self.norm_sq().sqrt();
        if n == 0.0 {
            return DecaylessMode::new(self.samples.clone(), self.z_max);
        }
        DecaylessMode { samples: self.samples.iter().map(|v| v / n).collect(), z_max: self.z_max, normalized: true }
    }

    pub fn spline(&self) -> Spline {
        Spline::new(0.0, self.z_max, &self.samples)
    }

    /// Cubic interpolation inside [0, z_max], zero beyond.
    pub fn eval(&self, sp: &Spline, z: f64) -> C64 {
        if z < 0.0 || z > self.z_max {
            C64::new(0.0, 0.0)
        } else {
            sp.eval(z)
        }
    }

    /// Mass beyond `z`.
    pub fn tail_mass(&self, z: f64) -> f64 {
        let dz = self.dz();
        let k = ((z / dz).ceil() as usize).min(self.len() - 1);
        quad::trapezoid_norm_sq(&self.samples[k..], dz)
    }

    pub fn inner(&self, other: &DecaylessMode) -> C64 {
        let sp = other.spline();
        let o: Vec<C64> = (0..self.len()).map(|i| other.eval(&sp, self.z(i))).collect();
        quad::trapezoid_inner(&self.samples, &o, self.dz())
    }

    pub fn overlap(&self, other: &DecaylessMode) -> f64 {
        self.inner(other).norm() / (self.norm_sq() * other.norm_sq()).sqrt()
    }
}

/// Exact integral of |a + (b - a) s|^2 over s in [0, 1].
pub fn segment_energy(a: C64, b: C64) -> f64 {
    (a.norm_sqr() + b.norm_sqr() + (a * b.conj()).re) / 3.0
}

fn interp_linear(samples: &[C64], t_win: f64, t: f64) -> C64 {
    let n = samples.len();
    if !(0.0..=t_win).contains(&t) {
        return C64::new(0.0, 0.0);
    }
    let u = t / t_win * (n - 1) as f64;
    let i = (u.floor() as usize).min(n - 2);
    let f = u - i as f64;
    samples[i] * (1.0 - f) + samples[i + 1] * f
}

/// Amplitude A of the continuous Gaussian-like shape on the unit window,
/// (e^{-30 (u - 1/2)^2} - e^{-15/2}) with unit L2 norm.
pub fn gaussian_like_amplitude() -> f64 {
    let m = Mesh::uniform(0.0, 1.0, 16, quad::PANEL_ORDER);
    let n = m.integrate(|u| {
        let g = (-30.0 * (u - 0.5) * (u - 0.5)).exp() - (-7.5f64).exp();
        g * g
    });
    1.0 / n.sqrt()
}

/// A (e^{-30 (t/T - 1/2)^2} - e^{-15/2}) / sqrt(T), renormalized on the grid.
/// Vanishes exactly at both window edges.
pub fn gaussian_like_input(t_win: f64, nt: usize) -> Result<FieldMode> {
    if !(t_win > 0.0 && t_win.is_finite()) {
        return Err(Error::InvalidParameter(format!("t_win = {t_win} must be > 0")));
    }
    if nt < 2 {
        return Err(Error::InvalidParameter("need at least two time samples".into()));
    }
    let a = gaussian_like_amplitude();
    let mut f = FieldMode::from_fn(nt, t_win, |t| {
        let u = t / t_win;
        C64::new(a * ((-30.0 * (u - 0.5) * (u - 0.5)).exp() - (-7.5f64).exp()) / t_win.sqrt(), 0.0)
    });
    f.samples[0] = C64::new(0.0, 0.0);
    f.samples[nt - 1] = C64::new(0.0, 0.0);
    // Symmetric by construction: mirror to remove rounding asymmetry.
    for n in 0..nt / 2 {
        f.samples[nt - 1 - n] = f.samples[n];
    }
    Ok(f.normalized())
}

/// E*(T - t).
pub fn time_reverse(mode: &FieldMode) -> FieldMode {
    FieldMode {
        samples: mode.samples.iter().rev().map(|v| v.conj()).collect(),
        t_win: mode.t_win,
        normalized: mode.normalized,
    }
}

/// S(1 - z) e^{-2 i dk z}, by index reversal on the uniform grid.
pub fn flip_spin_wave(s: &SpinWave, dk: f64) -> SpinWave {
    let n = s.len();
    let dz = s.dz();
    let samples = (0..n)
        .map(|i| {
            let v = s.samples[n - 1 - i];
            if dk == 0.0 {
                v
            } else {
                v * C64::from_polar(1.0, -2.0 * dk * i as f64 * dz)
            }
        })
        .collect();
    SpinWave { samples, normalized: s.normalized }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gaussian_like_edges_and_amplitude() {
        let f = gaussian_like_input(1.0, 401).unwrap();
        assert_eq!(f.samples[0], C64::new(0.0, 0.0));
        assert_eq!(f.samples[400], C64::new(0.0, 0.0));
        assert!((f.norm_sq() - 1.0).abs() < 1e-10);
        assert!((gaussian_like_amplitude() - 2.09).abs() < 0.005);
        for n in 0..401 {
            assert_eq!(f.samples[n], f.samples[400 - n]);
        }
        assert!(gaussian_like_input(0.0, 10).is_err());
        assert!(gaussian_like_input(-1.0, 10).is_err());
    }

    #[test]
    fn time_reverse_examples() {
        let g = gaussian_like_input(2.0, 101).unwrap();
        assert_eq!(time_reverse(&g), g);
        let w = 3.0;
        let t_win = 2.0;
        let ramp = FieldMode::from_fn(101, t_win, |t| C64::from_polar(1.0, w * t));
        let r = time_reverse(&ramp);
        for n in 0..101 {
            let t = ramp.t(n);
            assert!((r.samples[n] - C64::from_polar(1.0, w * (t - t_win))).norm() < 1e-12);
        }
        assert_eq!(time_reverse(&time_reverse(&ramp)), ramp);
        assert_eq!(r.norm_sq(), ramp.norm_sq());
    }

    #[test]
    fn flip_examples() {
        let s = SpinWave::from_fn(11, |z| C64::new(3f64.sqrt() * z, 0.0));
        let f = flip_spin_wave(&s, 0.0);
        for i in 0..11 {
            let z = s.z(i);
            assert!((f.samples[i].re - 3f64.sqrt() * (1.0 - z)).abs() < 1e-15);
        }
        let flat = SpinWave::flat(21);
        assert_eq!(flip_spin_wave(&flat, 0.0), flat);
        let pi = std::f64::consts::PI;
        let ph = flip_spin_wave(&flat, pi);
        for i in 0..21 {
            assert!((ph.samples[i] - C64::from_polar(1.0, -2.0 * pi * flat.z(i))).norm() < 1e-14);
        }
    }

    #[test]
    fn params_validation() {
        assert!(Params::new(0.0, 0.0, 0.0, 0.0).is_err());
        assert!(Params::new(1.0, 0.0, -0.1, 0.0).is_err());
        assert!(Params::new(1.0, f64::NAN, 0.0, 0.0).is_err());
        assert!(Params::new(1.0, 5.0, 0.1, 2.0).is_ok());
        assert!(Grid::new(1, 10, 1.0).is_err());
        assert!(Grid::new(10, 10, 0.0).is_err());
    }

    #[test]
    fn control_energy_is_exact_for_linear_pieces() {
        let c = ControlField::from_fn(11, 1.0, |t| C64::new(t, 0.0));
        assert!((c.h_total() - 1.0 / 3.0).abs() < 1e-14);
        let r = c.time_reversed();
        assert!((r.h_total() - c.h_total()).abs() < 1e-14);
        assert!(ControlField::with_h_cum(vec![C64::new(1.0, 0.0); 3], 1.0, vec![0.0, 0.5, 0.4]).is_err());
    }
}
