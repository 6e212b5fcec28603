//! Modified Bessel functions I0, I1 and the ordinary J0, real and complex.
//!
//! Everything is computed in exponentially scaled form, `i0e(x) = e^{-|x|} I0(x)`
//! for real arguments and `e^{-w} I0(w)` for complex `w` with `Re w >= 0`, so
//! kernels at large optical depth never overflow.

use num_complex::Complex64 as C64;
use std::f64::consts::PI;

const ASYMPTOTIC_REAL: f64 = 30.0;
const ASYMPTOTIC_COMPLEX: f64 = 17.0;
const SERIES_CANCELLATION: f64 = 8.0;

/// Power series sum_k (x^2/4)^k / (k! (k+nu)!) for nu in {0, 1}; positive terms.
fn series_real(x: f64, nu: u32) -> f64 {
    let q = 0.25 * x * x;
    let mut term = 1.0;
    let mut sum = 1.0;
    let mut k = 1.0;
    loop {
        term *= q / (k * (k + nu as f64));
        sum += term;
        if term < sum * 1e-17 {
            break;
        }
        k += 1.0;
    }
    sum
}

/// Hankel expansion sum_k (-1)^k a_k(nu) / x^k, stopped at the smallest term.
fn hankel_real(x: f64, nu: u32) -> f64 {
    let mu = 4.0 * (nu * nu) as f64;
    let mut t = 1.0;
    let mut sum = 1.0;
    for k in 1..200 {
        let kf = k as f64;
        let next = t * (mu - (2.0 * kf - 1.0) * (2.0 * kf - 1.0)) / (8.0 * kf * x);
        if next.abs() >= t.abs() {
            break;
        }
        t = next;
        sum += if k % 2 == 0 { t } else { -t };
        if t.abs() < 1e-17 {
            break;
        }
    }
    sum / (2.0 * PI * x).sqrt()
}

/// e^{-|x|} I0(x).
pub fn i0e(x: f64) -> f64 {
    let a = x.abs();
    if a < ASYMPTOTIC_REAL {
        series_real(a, 0) * (-a).exp()
    } else {
        hankel_real(a, 0)
    }
}

/// e^{-|x|} I1(x).
pub fn i1e(x: f64) -> f64 {
    let a = x.abs();
    let v = if a < ASYMPTOTIC_REAL { 0.5 * a * series_real(a, 1) * (-a).exp() } else { hankel_real(a, 1) };
    v.copysign(x)
}

/// e^{-|x|} I1(x) / x, finite at x = 0 where it equals 1/2.
pub fn i1e_over_x(x: f64) -> f64 {
    let a = x.abs();
    if a < ASYMPTOTIC_REAL {
        0.5 * series_real(a, 1) * (-a).exp()
    } else {
        hankel_real(a, 1) / a
    }
}

/// I0(x); overflows to infinity past x ~ 713.
pub fn i0(x: f64) -> f64 {
    let a = x.abs();
    if a < ASYMPTOTIC_REAL {
        series_real(a, 0)
    } else {
        hankel_real(a, 0) * a.exp()
    }
}

/// I1(x); overflows to infinity past x ~ 713.
pub fn i1(x: f64) -> f64 {
    let a = x.abs();
    let v = if a < ASYMPTOTIC_REAL { 0.5 * a * series_real(a, 1) } else { hankel_real(a, 1) * a.exp() };
    v.copysign(x)
}

/// J0(x) = I0(ix).
pub fn j0(x: f64) -> f64 {
    let a = x.abs();
    if a <= 12.0 {
        // Largest series term is ~4e3, so cancellation costs under 4 digits.
        let q = -0.25 * a * a;
        let (mut term, mut sum) = (1.0, 1.0);
        for k in 1..80 {
            term *= q / (k * k) as f64;
            sum += term;
            if term.abs() < 1e-17 * sum.abs().max(1e-300) {
                break;
            }
        }
        return sum;
    }
    // Hankel expansion; the smallest term at x = 12 is ~1e-11.
    let (mut p, mut q) = (1.0, 0.0);
    let mut t = 1.0;
    for k in 1..60 {
        let next = t * ((2 * k - 1) * (2 * k - 1)) as f64 / (8.0 * k as f64 * a);
        if next.abs() >= t.abs() || next < 1e-17 {
            break;
        }
        t = next;
        // P = 1 - t2 + t4 - ..., Q = -t1 + t3 - ...
        let sign = if (k / 2) % 2 == 0 { 1.0 } else { -1.0 };
        if k % 2 == 0 {
            p += sign * t;
        } else {
            q -= sign * t;
        }
    }
    let ph = a - std::f64::consts::FRAC_PI_4;
    (2.0 / (std::f64::consts::PI * a)).sqrt() * (p * ph.cos() - q * ph.sin())
}

/// e^{-w} I0(w) for complex `w`; `Re w < 0` is reflected through I0(-w) = I0(w).
pub fn i0e_complex(w: C64) -> C64 {
    if w.re < 0.0 {
        // e^{-w} I0(w) = e^{-2w} e^{w} I0(-w): only sensible for small |Re w|.
        return i0e_complex(-w) * (-2.0 * w).exp();
    }
    let r = w.norm();
    if r >= ASYMPTOTIC_COMPLEX {
        hankel_complex(w)
    } else if r - w.re <= SERIES_CANCELLATION {
        series_complex(w) * (-w).exp()
    } else {
        trapezoid_complex(w)
    }
}

/// I0(w) for complex `w` without scaling.
pub fn i0_complex(w: C64) -> C64 {
    if w.re < 0.0 {
        return i0_complex(-w);
    }
    i0e_complex(w) * w.exp()
}

fn series_complex(w: C64) -> C64 {
    let q = w * w * 0.25;
    let mut term = C64::new(1.0, 0.0);
    let mut sum = term;
    let mut k = 1.0;
    let scale = (0.5 * w.norm()).powi(2);
    let mut mag = 1.0;
    loop {
        term = term * q / (k * k);
        mag *= scale / (k * k);
        sum += term;
        if mag < 1e-18 * sum.norm().max(1e-300) && k > scale.sqrt() {
            break;
        }
        k += 1.0;
        if k > 500.0 {
            break;
        }
    }
    sum
}

/// (1/2pi) int_0^{2pi} e^{w (cos t - 1)} dt by the periodic trapezoid rule.
fn trapezoid_complex(w: C64) -> C64 {
    let m = (2.0 * w.norm()) as usize + 40;
    let mut acc = C64::new(0.0, 0.0);
    for k in 0..m {
        let t = 2.0 * PI * k as f64 / m as f64;
        acc += (w * (t.cos() - 1.0)).exp();
    }
    acc / m as f64
}

/// Hankel expansion with the recessive exponential kept, valid for
/// |arg w| < pi/2 + pi.
fn hankel_complex(w: C64) -> C64 {
    let inv = w.inv();
    let mut t = C64::new(1.0, 0.0);
    let mut dominant = t;
    let mut recessive = t;
    let mut k = 1.0;
    let mut prev = f64::INFINITY;
    loop {
        // a_k(0) = a_{k-1}(0) * (-(2k-1)^2) / (8k)
        let next = t * inv * (-(2.0 * k - 1.0) * (2.0 * k - 1.0) / (8.0 * k));
        let mag = next.norm();
        if mag >= prev || mag < 1e-17 {
            break;
        }
        prev = mag;
        t = next;
        let sign = if (k as i64) % 2 == 0 { 1.0 } else { -1.0 };
        dominant += t * sign;
        recessive += t;
        k += 1.0;
        if k > 200.0 {
            break;
        }
    }
    let pref = (w * 2.0 * PI).sqrt().inv();
    let mut out = dominant * pref;
    if w.im != 0.0 {
        let s = if w.im > 0.0 { 1.0 } else { -1.0 };
        out += C64::new(0.0, s) * (-2.0 * w).exp() * recessive * pref;
    }
    out
}
