//! Quadrature rules and interpolation on uniform grids.
//!
//! Kernel integrals use composite Gauss-Legendre panels; norms of sampled
//! functions on uniform grids use the trapezoid rule.

use num_complex::Complex64 as C64;

/// Gauss-Legendre nodes and weights on [-1, 1].
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1);
    if n == 1 {
        return (vec![0.0], vec![2.0]);
    }
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    let m = n.div_ceil(2);
    for i in 0..m {
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, z);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * z * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            dp = n as f64 * (z * p1 - p0) / (z * z - 1.0);
            let dz = p1 / dp;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        x[i] = -z;
        x[n - 1 - i] = z;
        let wi = 2.0 / ((1.0 - z * z) * dp * dp);
        w[i] = wi;
        w[n - 1 - i] = wi;
    }
    (x, w)
}

/// A set of quadrature nodes and weights.
#[derive(Debug, Clone)]
pub struct Mesh {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

/// Panel order used by every composite rule in the crate.
pub const PANEL_ORDER: usize = 8;

impl Mesh {
    /// Composite Gauss-Legendre rule over consecutive breakpoints.
    pub fn composite(breaks: &[f64], order: usize) -> Mesh {
        let (gx, gw) = gauss_legendre(order);
        let mut nodes = Vec::with_capacity(order * breaks.len());
        let mut weights = Vec::with_capacity(order * breaks.len());
        for p in breaks.windows(2) {
            let (a, b) = (p[0], p[1]);
            if b <= a {
                continue;
            }
            let (c, h) = (0.5 * (a + b), 0.5 * (b - a));
            for (xi, wi) in gx.iter().zip(&gw) {
                nodes.push(c + h * xi);
                weights.push(h * wi);
            }
        }
        Mesh { nodes, weights }
    }

    /// Gauss-Legendre panels of equal width.
    pub fn uniform(a: f64, b: f64, panels: usize, order: usize) -> Mesh {
        let breaks: Vec<f64> = (0..=panels).map(|k| a + (b - a) * k as f64 / panels as f64).collect();
        Mesh::composite(&breaks, order)
    }

    /// Mesh on [0, 1] resolving the length scales 1/sqrt(d) in the bulk and
    /// 1/d at both ends. Symmetric under z -> 1 - z with an even number of
    /// uniform panels, so 1/2 is always a breakpoint.
    pub fn unit_graded(d: f64) -> Mesh {
        Mesh::composite(&unit_graded_breaks(d), PANEL_ORDER)
    }

    /// Panels on [a, b] whose width follows `width(x)` evaluated at each
    /// left edge; `extra` breakpoints are inserted verbatim.
    pub fn adaptive(a: f64, b: f64, width: impl Fn(f64) -> f64, extra: &[f64]) -> Mesh {
        let mut breaks = vec![a];
        let mut x = a;
        while x < b {
            let w = width(x).max(1e-12);
            x = (x + w).min(b);
            if b - x < 0.25 * w {
                x = b;
            }
            breaks.push(x);
        }
        for &e in extra {
            if e > a && e < b {
                breaks.push(e);
            }
        }
        breaks.sort_by(|p, q| p.partial_cmp(q).unwrap());
        breaks.dedup_by(|p, q| (*p - *q).abs() < 1e-14);
        Mesh::composite(&breaks, PANEL_ORDER)
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn integrate(&self, f: impl Fn(f64) -> f64) -> f64 {
        self.nodes.iter().zip(&self.weights).map(|(&x, &w)| w * f(x)).sum()
    }

    pub fn integrate_c(&self, f: impl Fn(f64) -> C64) -> C64 {
        self.nodes.iter().zip(&self.weights).map(|(&x, &w)| f(x) * w).sum()
    }
}

/// Breakpoints of [`Mesh::unit_graded`].
pub fn unit_graded_breaks(d: f64) -> Vec<f64> {
    let mut n_u = d.max(0.0).sqrt().ceil() as usize + 8;
    if n_u % 2 == 1 {
        n_u += 1;
    }
    let h = 1.0 / n_u as f64;
    let mut breaks: Vec<f64> = (0..=n_u).map(|k| k as f64 * h).collect();
    let floor = 0.5 / d.max(1.0);
    let mut x = 0.5 * h;
    while x > floor {
        breaks.push(x);
        breaks.push(1.0 - x);
        x *= 0.5;
    }
    breaks.sort_by(|p, q| p.partial_cmp(q).unwrap());
    breaks
}

/// Uniform grid of `n` points covering [a, b] inclusive.
pub fn linspace(a: f64, b: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![a];
    }
    (0..n).map(|i| a + (b - a) * i as f64 / (n - 1) as f64).collect()
}

/// Trapezoid rule for samples on a uniform grid with spacing `h`.
pub fn trapezoid(values: &[f64], h: f64) -> f64 {
    let n = values.len();
    if n < 2 {
        return 0.0;
    }
    let inner: f64 = values[1..n - 1].iter().sum();
    h * (inner + 0.5 * (values[0] + values[n - 1]))
}

/// Trapezoid norm squared of complex samples.
/// Terms are summed in mirrored pairs, so reversing `values` leaves the result
/// bit-identical.
pub fn trapezoid_norm_sq(values: &[C64], h: f64) -> f64 {
    let n = values.len();
    if n < 2 {
        return 0.0;
    }
    let sq = |i: usize| values[i].norm_sqr();
    let mut acc = 0.5 * (sq(0) + sq(n - 1));
    for i in 1..n / 2 {
        acc += sq(i) + sq(n - 1 - i);
    }
    if n % 2 == 1 && n > 2 {
        acc += sq(n / 2);
    }
    acc * h
}

/// Trapezoid inner product <a, b> = sum conj(a) b.
pub fn trapezoid_inner(a: &[C64], b: &[C64], h: f64) -> C64 {
    let n = a.len().min(b.len());
    if n < 2 {
        return C64::new(0.0, 0.0);
    }
    let mut acc = C64::new(0.0, 0.0);
    for i in 0..n {
        let f = if i == 0 || i == n - 1 { 0.5 } else { 1.0 };
        acc += a[i].conj() * b[i] * f;
    }
    acc * h
}

/// Not-a-knot cubic spline through complex samples on a uniform grid.
/// Falls back to linear interpolation below four samples. Evaluation outside
/// the grid extends the end cubics.
#[derive(Debug, Clone)]
pub struct Spline {
    x0: f64,
    h: f64,
    y: Vec<C64>,
    m: Vec<C64>,
}

impl Spline {
    pub fn new(x0: f64, x1: f64, y: &[C64]) -> Spline {
        let n = y.len();
        assert!(n >= 2, "spline needs at least two samples");
        let h = (x1 - x0) / (n - 1) as f64;
        let mut m = vec![C64::new(0.0, 0.0); n];
        if n >= 4 {
            let rhs: Vec<C64> = (0..n)
                .map(|i| {
                    if i == 0 || i == n - 1 {
                        C64::new(0.0, 0.0)
                    } else {
                        (y[i + 1] - y[i] * 2.0 + y[i - 1]) * (6.0 / (h * h))
                    }
                })
                .collect();
            // Not-a-knot pins the second interior moments directly.
            m[1] = rhs[1] / 6.0;
            m[n - 2] = rhs[n - 2] / 6.0;
            // Tridiagonal solve for rows 2..n-3: m[i-1] + 4 m[i] + m[i+1] = rhs[i].
            if n > 4 {
                let lo = 2;
                let hi = n - 3;
                let k = hi + 1 - lo;
                let mut c = vec![0.0; k];
                let mut dd = vec![C64::new(0.0, 0.0); k];
                for j in 0..k {
                    let i = lo + j;
                    let mut r = rhs[i];
                    if i == lo {
                        r -= m[1];
                    }
                    if i == hi {
                        r -= m[n - 2];
                    }
                    let denom = if j == 0 { 4.0 } else { 4.0 - c[j - 1] };
                    c[j] = 1.0 / denom;
                    dd[j] = if j == 0 { r / denom } else { (r - dd[j - 1]) / denom };
                }
                for j in (0..k).rev() {
                    let next = if j + 1 < k { m[lo + j + 1] } else { C64::new(0.0, 0.0) };
                    m[lo + j] = if j + 1 < k { dd[j] - next * c[j] } else { dd[j] };
                }
            }
            m[0] = m[1] * 2.0 - m[2];
            m[n - 1] = m[n - 2] * 2.0 - m[n - 3];
        }
        Spline { x0, h, y: y.to_vec(), m }
    }

    pub fn eval(&self, x: f64) -> C64 {
        let n = self.y.len();
        let u = (x - self.x0) / self.h;
        let i = (u.floor().max(0.0) as usize).min(n - 2);
        let t = u - i as f64;
        let s = 1.0 - t;
        let lin = self.y[i] * s + self.y[i + 1] * t;
        if n < 4 {
            return lin;
        }
        let h2 = self.h * self.h / 6.0;
        lin + (self.m[i] * (s * s * s - s) + self.m[i + 1] * (t * t * t - t)) * h2
    }

    /// Derivative of the interpolant.
    pub fn deriv(&self, x: f64) -> C64 {
        let n = self.y.len();
        let u = (x - self.x0) / self.h;
        let i = (u.floor().max(0.0) as usize).min(n - 2);
        let t = u - i as f64;
        let s = 1.0 - t;
        let lin = (self.y[i + 1] - self.y[i]) / self.h;
        if n < 4 {
            return lin;
        }
        lin + (self.m[i + 1] * (3.0 * t * t - 1.0) - self.m[i] * (3.0 * s * s - 1.0)) * (self.h / 6.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gl_integrates_polynomials_exactly() {
        for n in 1..=12 {
            let (x, w) = gauss_legendre(n);
            for p in 0..(2 * n) {
                let q: f64 = x.iter().zip(&w).map(|(xi, wi)| wi * xi.powi(p as i32)).sum();
                let exact = if p % 2 == 1 { 0.0 } else { 2.0 / (p as f64 + 1.0) };
                assert!((q - exact).abs() < 1e-13, "n={n} p={p} q={q}");
            }
        }
    }

    #[test]
    fn graded_mesh_is_symmetric_and_contains_half() {
        for d in [0.01, 1.0, 25.0, 1000.0] {
            let b = unit_graded_breaks(d);
            assert!(b.iter().any(|&x| (x - 0.5).abs() < 1e-15));
            let m = Mesh::unit_graded(d);
            let n = m.len();
            for i in 0..n {
                assert!((m.nodes[i] + m.nodes[n - 1 - i] - 1.0).abs() < 1e-14);
                assert!((m.weights[i] - m.weights[n - 1 - i]).abs() < 1e-15);
            }
            assert!((m.weights.iter().sum::<f64>() - 1.0).abs() < 1e-13);
        }
    }

    #[test]
    fn spline_reproduces_cubics() {
        let f = |x: f64| C64::new(x * x * x - 2.0 * x, 0.5 * x * x + 1.0);
        let xs = linspace(0.0, 1.0, 11);
        let y: Vec<C64> = xs.iter().map(|&x| f(x)).collect();
        let s = Spline::new(0.0, 1.0, &y);
        for k in 0..=50 {
            let x = k as f64 / 50.0;
            assert!((s.eval(x) - f(x)).norm() < 1e-12);
            let df = C64::new(3.0 * x * x - 2.0, x);
            assert!((s.deriv(x) - df).norm() < 1e-11);
        }
    }

    #[test]
    fn trapezoid_of_linear_is_exact() {
        let xs = linspace(0.0, 2.0, 7);
        let v: Vec<f64> = xs.iter().map(|x| 3.0 * x + 1.0).collect();
        assert!((trapezoid(&v, 2.0 / 6.0) - 8.0).abs() < 1e-14);
    }
}
