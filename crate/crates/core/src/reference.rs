//! Shrinking geodesic spheres: closed forms and an adaptive RK4 oracle.

use crate::error::{FlowError, Result};
use crate::spaceform::Kappa;

/// Local error tolerance of the adaptive integrator.
pub const ODE_TOLERANCE: f64 = 1e-10;

pub const ORACLE_HEADER: &str = "tau,radius";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RadiusKind {
    /// Geodesic radius ρ in the space form.
    Geodesic,
    /// Euclidean radius `r` of the projected sphere.
    Projected,
}

#[derive(Debug, Clone)]
enum Law {
    /// `r = (r0^p - pτ)^(1/p)`.
    Power { p: f64 },
    /// `cos ρ = cos ρ0 · e^τ`.
    CosExp,
    /// `tan ρ` with ρ from [`Law::CosExp`].
    TanCosExp,
    /// Accepted RK4 nodes `(τ, y)`.
    Numeric { nodes: Vec<(f64, f64)> },
}

/// Radius of a shrinking sphere as a function of τ.
#[derive(Debug, Clone)]
pub struct SphereSolution {
    pub kappa: Kappa,
    pub n: usize,
    pub alpha: f64,
    pub kind: RadiusKind,
    /// Initial radius (ρ₀, or r₀ for the projected/Euclidean radius).
    pub r0: f64,
    pub t_star: f64,
    law: Law,
}

impl SphereSolution {
    fn rate(&self, y: f64) -> f64 {
        rate(self.kappa, self.kind, self.n as f64 * self.alpha, y)
    }

    /// Radius at time `tau`; zero at and after extinction.
    pub fn radius(&self, tau: f64) -> f64 {
        if tau <= 0.0 {
            return self.r0;
        }
        if tau >= self.t_star {
            return 0.0;
        }
        match &self.law {
            Law::Power { p } => (self.r0.powf(*p) - p * tau).max(0.0).powf(1.0 / p),
            Law::CosExp => (self.r0.cos() * tau.exp()).min(1.0).acos(),
            Law::TanCosExp => (self.r0.atan().cos() * tau.exp()).min(1.0).acos().tan(),
            Law::Numeric { nodes } => {
                let k = nodes.partition_point(|&(t, _)| t <= tau) - 1;
                let (t0, y0) = nodes[k];
                if k + 1 == nodes.len() {
                    // beyond the last node the sphere is tiny: y' ≈ -y^(-nα)
                    let p = self.n as f64 * self.alpha + 1.0;
                    return (y0.powf(p) - p * (tau - t0)).max(0.0).powf(1.0 / p);
                }
                let m = 8;
                let h = (tau - t0) / m as f64;
                let mut y = y0;
                for _ in 0..m {
                    y = rk4_step(|v| self.rate(v), y, h);
                }
                y
            }
        }
    }

    /// `(τ, radius)` at `count` evenly spaced times in `[0, T*]`.
    pub fn table(&self, count: usize) -> Vec<(f64, f64)> {
        let count = count.max(2);
        (0..count)
            .map(|i| {
                let tau = if i + 1 == count {
                    self.t_star
                } else {
                    self.t_star * i as f64 / (count - 1) as f64
                };
                (tau, self.radius(tau))
            })
            .collect()
    }
}

/// `dy/dτ`.
fn rate(kappa: Kappa, kind: RadiusKind, na: f64, y: f64) -> f64 {
    match (kind, kappa) {
        (_, Kappa::Flat) => -y.powf(-na),
        (RadiusKind::Geodesic, Kappa::Sphere) => -(y.cos() / y.sin()).powf(na),
        (RadiusKind::Geodesic, Kappa::Hyperbolic) => -(y.cosh() / y.sinh()).powf(na),
        (RadiusKind::Projected, k) => -(1.0 + k.value() * y * y) * y.powf(-na),
    }
}

fn rk4_step(f: impl Fn(f64) -> f64, y: f64, h: f64) -> f64 {
    let k1 = f(y);
    let k2 = f(y + 0.5 * h * k1);
    let k3 = f(y + 0.5 * h * k2);
    let k4 = f(y + h * k3);
    y + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
}

/// Adaptive step-doubling RK4 until the radius falls below `1e-7·y0`;
/// steps that would overshoot zero are halved.
fn integrate(f: impl Fn(f64) -> f64, y0: f64, na: f64) -> Result<(Vec<(f64, f64)>, f64)> {
    let y_stop = 1e-7 * y0;
    let mut nodes = vec![(0.0, y0)];
    let (mut t, mut y) = (0.0, y0);
    let mut h = 1e-3 * y0 / f(y0).abs();
    for _ in 0..10_000_000 {
        if y < y_stop {
            let p = na + 1.0;
            return Ok((nodes, t + y.powf(p) / p));
        }
        let big = rk4_step(&f, y, h);
        let half = rk4_step(&f, y, 0.5 * h);
        let small = rk4_step(&f, half, 0.5 * h);
        if !(big > 0.0 && half > 0.0 && small > 0.0) {
            h *= 0.5;
            continue;
        }
        let err = (small - big).abs() / 15.0;
        let tol = ODE_TOLERANCE * y;
        if err <= tol {
            t += h;
            y = small + (small - big) / 15.0;
            nodes.push((t, y));
        }
        let grow = if err > 0.0 { 0.9 * (tol / err).powf(0.2) } else { 2.0 };
        h *= grow.clamp(0.2, 2.0);
        if h < 1e-300 {
            break;
        }
    }
    Err(FlowError::NoConvergence {
        iterations: nodes.len(),
        residual: y,
    })
}

fn check_positive(x: f64, what: &str) -> Result<()> {
    if !(x > 0.0 && x.is_finite()) {
        return Err(FlowError::OutOfDomain(format!("{what} = {x} must be positive")));
    }
    Ok(())
}

fn solve(kappa: Kappa, n: usize, alpha: f64, y0: f64, kind: RadiusKind) -> Result<SphereSolution> {
    if !(alpha > 0.0) || !(n == 1 || n == 2) {
        return Err(FlowError::OutOfDomain(format!("n = {n}, alpha = {alpha}")));
    }
    let na = n as f64 * alpha;
    let p = na + 1.0;
    let closed = |law, t_star| SphereSolution {
        kappa,
        n,
        alpha,
        kind,
        r0: y0,
        t_star,
        law,
    };
    if kappa == Kappa::Flat {
        return Ok(closed(Law::Power { p }, y0.powf(p) / p));
    }
    if kappa == Kappa::Sphere && n == 1 && alpha == 1.0 {
        return Ok(match kind {
            RadiusKind::Geodesic => closed(Law::CosExp, -y0.cos().ln()),
            RadiusKind::Projected => closed(Law::TanCosExp, -y0.atan().cos().ln()),
        });
    }
    let (nodes, t_star) = integrate(|y| rate(kappa, kind, na, y), y0, na)?;
    Ok(closed(Law::Numeric { nodes }, t_star))
}

/// Geodesic sphere of radius `rho0` (Euclidean radius for κ = 0).
pub fn sphere_ode(kappa: Kappa, n: usize, alpha: f64, rho0: f64) -> Result<SphereSolution> {
    check_positive(rho0, "rho0")?;
    if kappa == Kappa::Sphere && rho0 >= std::f64::consts::FRAC_PI_2 {
        return Err(FlowError::OutOfDomain(format!(
            "rho0 = {rho0} is not inside a hemisphere"
        )));
    }
    solve(kappa, n, alpha, rho0, RadiusKind::Geodesic)
}

/// Centred sphere of projected radius `r0`, driven by `r' = -(1+κr²) r^(-nα)`.
pub fn projected_sphere_ode(kappa: Kappa, n: usize, alpha: f64, r0: f64) -> Result<SphereSolution> {
    check_positive(r0, "r0")?;
    if kappa == Kappa::Hyperbolic && r0 >= 1.0 {
        return Err(FlowError::OutOfDomain(format!(
            "r0 = {r0} outside the unit ball"
        )));
    }
    solve(kappa, n, alpha, r0, RadiusKind::Projected)
}
