//! Discrete calculus for support functions on S^1 and axisymmetric S^2.
//!
//! Both dimensions are handled through a planar *profile*: for `n = 1` the
//! profile is the curve itself with normal `(cos θ, sin θ)`; for the
//! axisymmetric `n = 2` case it is the meridian in `(z, ϱ)` coordinates
//! (axis first, cylindrical radius second) with normal `(cos φ, sin φ)`,
//! `φ` the polar angle. The staggered polar grid extends to a uniform
//! periodic grid of `2N` points by reflection across the axis, which is how
//! the pole ghost points of the derivative stencils are realised.

use std::f64::consts::PI;
use std::sync::Arc;

use crate::error::{FlowError, Result};

/// Smallest admissible resolution.
pub const MIN_RESOLUTION: usize = 16;

/// Relative floor on principal radii, scaled by the current circumradius.
pub const EIGEN_FLOOR: f64 = 1e-10;

pub type Point2 = [f64; 2];

#[inline]
pub(crate) fn dot2(a: Point2, b: Point2) -> f64 {
    a[0] * b[0] + a[1] * b[1]
}

#[inline]
pub(crate) fn norm2(a: Point2) -> f64 {
    a[0].hypot(a[1])
}

/// Dimension of the parameter sphere S^n.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Dim {
    /// n = 1, periodic grid on [0, 2π).
    Circle,
    /// n = 2, axisymmetric bodies on a staggered polar grid.
    Axisymmetric,
}

impl Dim {
    pub fn from_n(n: usize) -> Result<Self> {
        match n {
            1 => Ok(Dim::Circle),
            2 => Ok(Dim::Axisymmetric),
            _ => Err(FlowError::InvalidGrid(format!(
                "n = {n} unsupported (only 1 and axisymmetric 2)"
            ))),
        }
    }

    pub fn n(self) -> usize {
        match self {
            Dim::Circle => 1,
            Dim::Axisymmetric => 2,
        }
    }

    /// |S^n|.
    pub fn sphere_area(self) -> f64 {
        match self {
            Dim::Circle => 2.0 * PI,
            Dim::Axisymmetric => 4.0 * PI,
        }
    }

    /// |B(1)| in R^(n+1).
    pub fn unit_ball_volume(self) -> f64 {
        self.sphere_area() / (self.n() as f64 + 1.0)
    }
}

/// Grid geometry shared by every field of the same shape.
#[derive(Debug)]
pub struct Grid {
    dim: Dim,
    len: usize,
    h: f64,
    angles: Vec<f64>,
    cos: Vec<f64>,
    sin: Vec<f64>,
    weights: Vec<f64>,
}

impl PartialEq for Grid {
    fn eq(&self, other: &Self) -> bool {
        self.dim == other.dim && self.len == other.len
    }
}

impl Grid {
    pub fn new(dim: Dim, len: usize) -> Result<Arc<Self>> {
        if len < MIN_RESOLUTION {
            return Err(FlowError::InvalidGrid(format!(
                "resolution {len} below minimum {MIN_RESOLUTION}"
            )));
        }
        if dim == Dim::Circle && len % 2 != 0 {
            return Err(FlowError::InvalidGrid(format!(
                "periodic resolution {len} must be even"
            )));
        }
        let h = match dim {
            Dim::Circle => 2.0 * PI / len as f64,
            Dim::Axisymmetric => PI / len as f64,
        };
        let angles: Vec<f64> = (0..len)
            .map(|i| match dim {
                Dim::Circle => i as f64 * h,
                Dim::Axisymmetric => (i as f64 + 0.5) * h,
            })
            .collect();
        let cos = angles.iter().map(|a| a.cos()).collect();
        let sin = angles.iter().map(|a| a.sin()).collect();
        let weights = match dim {
            Dim::Circle => vec![h; len],
            Dim::Axisymmetric => fejer_weights(&angles)
                .into_iter()
                .map(|w| 2.0 * PI * w)
                .collect(),
        };
        Ok(Arc::new(Grid {
            dim,
            len,
            h,
            angles,
            cos,
            sin,
            weights,
        }))
    }

    pub fn dim(&self) -> Dim {
        self.dim
    }

    pub fn n(&self) -> usize {
        self.dim.n()
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// Angular spacing.
    pub fn spacing(&self) -> f64 {
        self.h
    }

    pub fn angles(&self) -> &[f64] {
        &self.angles
    }

    /// Unit normal of grid point `i` in profile coordinates.
    #[inline]
    pub fn normal(&self, i: usize) -> Point2 {
        [self.cos[i], self.sin[i]]
    }

    /// Derivative of the normal with respect to the grid angle.
    #[inline]
    pub fn tangent(&self, i: usize) -> Point2 {
        [-self.sin[i], self.cos[i]]
    }

    pub fn cos(&self) -> &[f64] {
        &self.cos
    }

    pub fn sin(&self) -> &[f64] {
        &self.sin
    }

    /// Quadrature weights for integrals over S^n (they sum to |S^n|).
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Index of the antipodal direction `-x_i`.
    pub fn antipode(&self, i: usize) -> usize {
        match self.dim {
            Dim::Circle => (i + self.len / 2) % self.len,
            Dim::Axisymmetric => self.len - 1 - i,
        }
    }

    /// Length of the periodic extension (`2N` for the axisymmetric grid).
    pub(crate) fn periodic_len(&self) -> usize {
        match self.dim {
            Dim::Circle => self.len,
            Dim::Axisymmetric => 2 * self.len,
        }
    }

    /// Angle of point `j` of the periodic extension.
    pub(crate) fn periodic_angle(&self, j: usize) -> f64 {
        match self.dim {
            Dim::Circle => j as f64 * self.h,
            Dim::Axisymmetric => (j as f64 + 0.5) * self.h,
        }
    }

    /// Maps an index of the periodic extension (any integer) back to a grid index.
    #[inline]
    pub(crate) fn wrap(&self, j: isize) -> usize {
        let m = self.periodic_len() as isize;
        let j = j.rem_euclid(m) as usize;
        match self.dim {
            Dim::Circle => j,
            Dim::Axisymmetric => {
                if j < self.len {
                    j
                } else {
                    2 * self.len - 1 - j
                }
            }
        }
    }

    /// Values on the periodic extension.
    pub(crate) fn extend(&self, v: &[f64]) -> Vec<f64> {
        (0..self.periodic_len())
            .map(|j| v[self.wrap(j as isize)])
            .collect()
    }

    /// Fourth-order central first and second derivatives in the grid angle.
    pub fn derivatives(&self, v: &[f64]) -> Derivatives {
        let h = self.h;
        let mut d1 = vec![0.0; self.len];
        let mut d2 = vec![0.0; self.len];
        for i in 0..self.len {
            let ii = i as isize;
            let vm2 = v[self.wrap(ii - 2)];
            let vm1 = v[self.wrap(ii - 1)];
            let vp1 = v[self.wrap(ii + 1)];
            let vp2 = v[self.wrap(ii + 2)];
            d1[i] = (-vp2 + 8.0 * vp1 - 8.0 * vm1 + vm2) / (12.0 * h);
            d2[i] = (-vp2 + 16.0 * vp1 - 30.0 * v[i] + 16.0 * vm1 - vm2) / (12.0 * h * h);
        }
        Derivatives { d1, d2 }
    }

    /// Integral over S^n.
    pub fn integrate(&self, f: &[f64]) -> Result<f64> {
        debug_assert_eq!(f.len(), self.len);
        let mut acc = 0.0;
        for (w, v) in self.weights.iter().zip(f) {
            if !v.is_finite() {
                return Err(FlowError::NonFinite("integrand"));
            }
            acc += w * v;
        }
        Ok(acc)
    }

    /// Mean value over S^n.
    pub fn mean(&self, f: &[f64]) -> Result<f64> {
        Ok(self.integrate(f)? / self.dim.sphere_area())
    }
}

/// Fejér's first rule on the Chebyshev angles `(i + 1/2)π/N` for `∫_{-1}^{1} F(cos φ)`.
fn fejer_weights(angles: &[f64]) -> Vec<f64> {
    let n = angles.len();
    angles
        .iter()
        .map(|&phi| {
            let mut s = 0.0;
            for j in 1..=n / 2 {
                let jf = j as f64;
                s += (2.0 * jf * phi).cos() / (4.0 * jf * jf - 1.0);
            }
            2.0 / n as f64 * (1.0 - 2.0 * s)
        })
        .collect()
}

/// Integral over S^n of a field sampled on `grid`.
pub fn integrate_sphere(grid: &Grid, f: &[f64]) -> Result<f64> {
    grid.integrate(f)
}

/// Mean over S^n of a field sampled on `grid`.
pub fn mean_integral(grid: &Grid, f: &[f64]) -> Result<f64> {
    grid.mean(f)
}

#[derive(Debug, Clone)]
pub struct Derivatives {
    pub d1: Vec<f64>,
    pub d2: Vec<f64>,
}

/// Discrete support function of a convex body.
///
/// `values` are support values about the frame origin; `center` records
/// where that origin sits in the parent frame (profile coordinates).
#[derive(Debug, Clone)]
pub struct SupportField {
    grid: Arc<Grid>,
    values: Vec<f64>,
    center: Point2,
}

impl SupportField {
    pub fn new(grid: Arc<Grid>, values: Vec<f64>, center: Point2) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(FlowError::InvalidGrid(format!(
                "{} values for a grid of {}",
                values.len(),
                grid.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(FlowError::NonFinite("support values"));
        }
        if grid.dim() == Dim::Axisymmetric && center[1] != 0.0 {
            return Err(FlowError::InvalidGrid(
                "axisymmetric center must lie on the axis".into(),
            ));
        }
        Ok(SupportField {
            grid,
            values,
            center,
        })
    }

    /// Samples `f(normal)` on a fresh grid.
    pub fn from_fn(dim: Dim, len: usize, f: impl Fn(Point2) -> f64) -> Result<Self> {
        let grid = Grid::new(dim, len)?;
        let values = (0..len).map(|i| f(grid.normal(i))).collect();
        Self::new(grid, values, [0.0, 0.0])
    }

    pub fn ball(dim: Dim, len: usize, radius: f64) -> Result<Self> {
        Self::from_fn(dim, len, |_| radius)
    }

    /// Ball of `radius` centred at `offset` (profile coordinates).
    pub fn translated_ball(dim: Dim, len: usize, radius: f64, offset: Point2) -> Result<Self> {
        Self::from_fn(dim, len, |x| radius + dot2(offset, x))
    }

    /// Ellipse (n = 1) or spheroid (n = 2) with semi-axis `a` along the first
    /// profile axis and `b` along the second.
    pub fn ellipse(dim: Dim, len: usize, a: f64, b: f64) -> Result<Self> {
        Self::from_fn(dim, len, |x| (a * a * x[0] * x[0] + b * b * x[1] * x[1]).sqrt())
    }

    /// Seeded smooth convex body of size about `radius`: a rotated ellipse
    /// with a few small higher modes and a small offset (n = 1), or an
    /// axially offset spheroid (n = 2).
    pub fn random(dim: Dim, len: usize, radius: f64, seed: u64) -> Result<Self> {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let a = radius * rng.gen_range(0.6..1.0);
        let b = radius * rng.gen_range(0.6..1.0);
        let shift = radius * rng.gen_range(-0.1..0.1);
        match dim {
            Dim::Circle => {
                let rot = rng.gen_range(0.0..PI);
                let shift_y = radius * rng.gen_range(-0.1..0.1);
                // Σ (k²-1)|c_k| stays below 0.06·radius, well under the ellipse's b²/a
                let modes: Vec<(f64, f64, f64)> = (3..=5)
                    .map(|k| {
                        let k = k as f64;
                        let c = 0.02 * radius / (k * k - 1.0);
                        (k, c * rng.gen_range(-1.0..1.0), c * rng.gen_range(-1.0..1.0))
                    })
                    .collect();
                Self::from_fn(dim, len, |x| {
                    let th = x[1].atan2(x[0]);
                    let (c, s) = ((th - rot).cos(), (th - rot).sin());
                    let mut u = (a * a * c * c + b * b * s * s).sqrt() + shift * x[0] + shift_y * x[1];
                    for &(k, p, q) in &modes {
                        u += p * (k * th).cos() + q * (k * th).sin();
                    }
                    u
                })
            }
            Dim::Axisymmetric => Self::from_fn(dim, len, |x| {
                (a * a * x[0] * x[0] + b * b * x[1] * x[1]).sqrt() + shift * x[0]
            }),
        }
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn dim(&self) -> Dim {
        self.grid.dim()
    }

    pub fn n(&self) -> usize {
        self.grid.n()
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn center(&self) -> Point2 {
        self.center
    }

    pub fn set_center(&mut self, center: Point2) {
        self.center = center;
    }

    /// Same grid and center, new values.
    pub fn with_values(&self, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), self.values.len());
        SupportField {
            grid: Arc::clone(&self.grid),
            values,
            center: self.center,
        }
    }

    /// Support function `u + ⟨offset, x⟩` (the body translated by `offset`).
    pub fn translated(&self, offset: Point2) -> Self {
        let values = (0..self.len())
            .map(|i| self.values[i] + dot2(offset, self.grid.normal(i)))
            .collect();
        self.with_values(values)
    }

    pub fn scaled(&self, factor: f64) -> Self {
        self.with_values(self.values.iter().map(|v| v * factor).collect())
    }

    pub fn derivatives(&self) -> Derivatives {
        self.grid.derivatives(&self.values)
    }
}

/// Principal radii and curvatures on the grid.
#[derive(Debug, Clone)]
pub struct CurvatureField {
    /// `principal_radii[k][i]` is λ_(k+1) at grid point `i`.
    pub principal_radii: Vec<Vec<f64>>,
    pub sigma_n: Vec<f64>,
    pub gauss_k: Vec<f64>,
    pub mean_h: Vec<f64>,
}

impl CurvatureField {
    pub fn min_radius(&self) -> f64 {
        self.principal_radii
            .iter()
            .flatten()
            .fold(f64::INFINITY, |m, &v| m.min(v))
    }

    /// Smallest principal radius at each grid point.
    pub fn min_radius_per_point(&self) -> Vec<f64> {
        let len = self.sigma_n.len();
        (0..len)
            .map(|i| {
                self.principal_radii
                    .iter()
                    .fold(f64::INFINITY, |m, r| m.min(r[i]))
            })
            .collect()
    }
}

/// Circumradius about the frame origin, `max |∇u + u x|`.
pub(crate) fn max_radius(values: &[f64], d1: &[f64]) -> f64 {
    values
        .iter()
        .zip(d1)
        .fold(0.0_f64, |m, (u, g)| m.max((u * u + g * g).sqrt()))
}

/// Evaluates `W = ∇²u + u·Id` and the derived curvatures.
pub fn eval_weingarten(u: &SupportField) -> Result<CurvatureField> {
    let d = u.derivatives();
    weingarten_from(u, &d)
}

pub(crate) fn weingarten_from(u: &SupportField, d: &Derivatives) -> Result<CurvatureField> {
    let grid = u.grid();
    let v = u.values();
    if d.d1.iter().chain(&d.d2).any(|x| !x.is_finite()) {
        return Err(FlowError::NonFinite("support derivatives"));
    }
    let floor = EIGEN_FLOOR * max_radius(v, &d.d1);
    let len = v.len();
    let lam1: Vec<f64> = (0..len).map(|i| d.d2[i] + v[i]).collect();
    let lam2: Option<Vec<f64>> = match grid.dim() {
        Dim::Circle => None,
        Dim::Axisymmetric => Some(
            (0..len)
                .map(|i| d.d1[i] * grid.cos()[i] / grid.sin()[i] + v[i])
                .collect(),
        ),
    };
    for (i, &l) in lam1.iter().enumerate() {
        if !(l > floor) {
            return Err(FlowError::ConvexityLost {
                index: i,
                radius: l,
                floor,
            });
        }
    }
    if let Some(l2) = &lam2 {
        for (i, &l) in l2.iter().enumerate() {
            if !(l > floor) {
                return Err(FlowError::ConvexityLost {
                    index: i,
                    radius: l,
                    floor,
                });
            }
        }
    }
    let (sigma_n, mean_h): (Vec<f64>, Vec<f64>) = match &lam2 {
        None => lam1.iter().map(|&l| (l, 1.0 / l)).unzip(),
        Some(l2) => lam1
            .iter()
            .zip(l2)
            .map(|(&a, &b)| (a * b, 1.0 / a + 1.0 / b))
            .unzip(),
    };
    let gauss_k = sigma_n.iter().map(|s| 1.0 / s).collect();
    let mut principal_radii = vec![lam1];
    if let Some(l2) = lam2 {
        principal_radii.push(l2);
    }
    Ok(CurvatureField {
        principal_radii,
        sigma_n,
        gauss_k,
        mean_h,
    })
}

/// Boundary points `∇u + u x` in profile coordinates; the outward normal at
/// point `i` is the grid normal `x_i`.
pub fn boundary_points(u: &SupportField) -> Result<Vec<Point2>> {
    let d = u.derivatives();
    weingarten_from(u, &d)?;
    Ok(points_from(u, &d.d1))
}

pub(crate) fn points_from(u: &SupportField, d1: &[f64]) -> Vec<Point2> {
    let grid = u.grid();
    (0..u.len())
        .map(|i| {
            let x = grid.normal(i);
            let t = grid.tangent(i);
            [
                u.values()[i] * x[0] + d1[i] * t[0],
                u.values()[i] * x[1] + d1[i] * t[1],
            ]
        })
        .collect()
}

/// Volume, radii, widths and Steiner point of a convex body.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BodyGeometry {
    pub volume: f64,
    pub r_minus: f64,
    pub r_plus: f64,
    pub width_min: f64,
    pub width_max: f64,
    pub steiner_point: Point2,
}

impl BodyGeometry {
    /// `c r₋^n r₊ ≤ vol ≤ C r₊^(n+1)` with `c = |B^n|/(n+1)` and `C = |B^(n+1)|`.
    pub fn satisfies_volume_radius_bounds(&self, dim: Dim) -> bool {
        let n = dim.n() as i32;
        let ball_n = match dim {
            Dim::Circle => 2.0,
            Dim::Axisymmetric => PI,
        };
        let lower = ball_n / (n as f64 + 1.0) * self.r_minus.powi(n) * self.r_plus;
        let upper = dim.unit_ball_volume() * self.r_plus.powi(n + 1);
        self.r_minus <= self.r_plus
            && self.width_min <= self.width_max
            && self.volume > 0.0
            && lower <= self.volume * (1.0 + 1e-9)
            && self.volume <= upper * (1.0 + 1e-9)
    }
}

/// Enclosed volume `(1/(n+1)) ∫ u σ_n`.
pub fn volume(u: &SupportField) -> Result<f64> {
    let c = eval_weingarten(u)?;
    volume_from(u, &c)
}

pub(crate) fn volume_from(u: &SupportField, c: &CurvatureField) -> Result<f64> {
    let f: Vec<f64> = u
        .values()
        .iter()
        .zip(&c.sigma_n)
        .map(|(a, b)| a * b)
        .collect();
    Ok(u.grid().integrate(&f)? / (u.n() as f64 + 1.0))
}

/// Steiner point `((n+1)/|S^n|) ∫ u x`, exact for translated balls.
pub fn steiner_point(u: &SupportField) -> Result<Point2> {
    let grid = u.grid();
    let fx: Vec<f64> = (0..u.len()).map(|i| u.values()[i] * grid.cos()[i]).collect();
    let c = (u.n() as f64 + 1.0) / u.dim().sphere_area();
    let sx = c * grid.integrate(&fx)?;
    let sy = match u.dim() {
        Dim::Circle => {
            let fy: Vec<f64> = (0..u.len()).map(|i| u.values()[i] * grid.sin()[i]).collect();
            c * grid.integrate(&fy)?
        }
        Dim::Axisymmetric => 0.0,
    };
    Ok([sx, sy])
}

/// Geometry with radii measured about the frame origin.
pub fn body_geometry(u: &SupportField) -> Result<BodyGeometry> {
    body_geometry_about(u, [0.0, 0.0])
}

/// Geometry with radii measured about `point`.
pub fn body_geometry_about(u: &SupportField, point: Point2) -> Result<BodyGeometry> {
    let d = u.derivatives();
    let c = weingarten_from(u, &d)?;
    geometry_from(u, &d, &c, point)
}

pub(crate) fn geometry_from(
    u: &SupportField,
    d: &Derivatives,
    c: &CurvatureField,
    point: Point2,
) -> Result<BodyGeometry> {
    let grid = u.grid();
    let volume = volume_from(u, c)?;
    let pts = points_from(u, &d.d1);
    let mut r_minus = f64::INFINITY;
    let mut r_plus = 0.0_f64;
    for (i, p) in pts.iter().enumerate() {
        r_minus = r_minus.min(u.values()[i] - dot2(point, grid.normal(i)));
        r_plus = r_plus.max(norm2([p[0] - point[0], p[1] - point[1]]));
    }
    let mut width_min = f64::INFINITY;
    let mut width_max = 0.0_f64;
    for i in 0..u.len() {
        let w = u.values()[i] + u.values()[grid.antipode(i)];
        width_min = width_min.min(w);
        width_max = width_max.max(w);
    }
    Ok(BodyGeometry {
        volume,
        r_minus,
        r_plus,
        width_min,
        width_max,
        steiner_point: steiner_point(u)?,
    })
}
