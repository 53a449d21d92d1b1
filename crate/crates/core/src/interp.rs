//! Periodic cubic Hermite interpolation and a bracketed maximiser.

use std::f64::consts::TAU;

/// Cubic Hermite interpolant through periodic samples with known slopes.
///
/// Abscissae must be strictly increasing and span less than one period.
#[derive(Debug, Clone)]
pub(crate) struct PeriodicHermite {
    s: Vec<f64>,
    f: Vec<f64>,
    df: Vec<f64>,
}

impl PeriodicHermite {
    pub(crate) fn new(s: Vec<f64>, f: Vec<f64>, df: Vec<f64>) -> Self {
        debug_assert!(s.windows(2).all(|w| w[1] > w[0]));
        debug_assert!(s[s.len() - 1] < s[0] + TAU);
        PeriodicHermite { s, f, df }
    }

    pub(crate) fn eval(&self, theta: f64) -> f64 {
        let m = self.s.len();
        let s0 = self.s[0];
        let th = s0 + (theta - s0).rem_euclid(TAU);
        // last k with s[k] <= th
        let k = match self.s.partition_point(|&v| v <= th) {
            0 => 0,
            p => p - 1,
        };
        let (x0, f0, d0) = (self.s[k], self.f[k], self.df[k]);
        let (x1, f1, d1) = if k + 1 < m {
            (self.s[k + 1], self.f[k + 1], self.df[k + 1])
        } else {
            (self.s[0] + TAU, self.f[0], self.df[0])
        };
        let h = x1 - x0;
        let t = (th - x0) / h;
        let t2 = t * t;
        let t3 = t2 * t;
        (2.0 * t3 - 3.0 * t2 + 1.0) * f0
            + (t3 - 2.0 * t2 + t) * h * d0
            + (-2.0 * t3 + 3.0 * t2) * f1
            + (t3 - t2) * h * d1
    }
}

/// Fourth-order first derivative of uniformly spaced periodic samples.
pub(crate) fn periodic_d1(v: &[f64], h: f64) -> Vec<f64> {
    let m = v.len() as isize;
    let at = |j: isize| v[j.rem_euclid(m) as usize];
    (0..m)
        .map(|i| (-at(i + 2) + 8.0 * at(i + 1) - 8.0 * at(i - 1) + at(i - 2)) / (12.0 * h))
        .collect()
}

/// Golden-section maximisation of a unimodal function on `[a, b]`.
pub(crate) fn golden_max(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64, tol: f64) -> (f64, f64) {
    let g = (5.0_f64.sqrt() - 1.0) / 2.0;
    let mut c = b - g * (b - a);
    let mut d = a + g * (b - a);
    let mut fc = f(c);
    let mut fd = f(d);
    while (b - a).abs() > tol {
        if fc > fd {
            b = d;
            d = c;
            fd = fc;
            c = b - g * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + g * (b - a);
            fd = f(d);
        }
    }
    let x = 0.5 * (a + b);
    (x, f(x))
}
