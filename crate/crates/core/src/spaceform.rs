//! Space forms, the gnomonic-type projections `π_p`, radial graphs and the
//! curvature relation between a body and its projected image.

use std::f64::consts::{FRAC_PI_2, TAU};
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use crate::error::{FlowError, Result};
use crate::interp::{golden_max, periodic_d1, PeriodicHermite};
use crate::sphere::{
    dot2, norm2, points_from, weingarten_from, Dim, Grid, Point2, SupportField,
};

/// Sign of the ambient sectional curvature.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Kappa {
    Hyperbolic,
    Flat,
    Sphere,
}

impl Kappa {
    pub fn from_int(k: i32) -> Result<Self> {
        match k {
            -1 => Ok(Kappa::Hyperbolic),
            0 => Ok(Kappa::Flat),
            1 => Ok(Kappa::Sphere),
            _ => Err(FlowError::Parse(format!("kappa must be -1, 0 or 1, got {k}"))),
        }
    }

    pub fn as_int(self) -> i32 {
        match self {
            Kappa::Hyperbolic => -1,
            Kappa::Flat => 0,
            Kappa::Sphere => 1,
        }
    }

    pub fn value(self) -> f64 {
        self.as_int() as f64
    }

    /// Header token used in radial snapshot files.
    pub fn ambient_token(self) -> &'static str {
        match self {
            Kappa::Hyperbolic => "hyperbolic",
            Kappa::Flat => "euclidean",
            Kappa::Sphere => "sphere",
        }
    }
}

impl fmt::Display for Kappa {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.as_int())
    }
}

/// Warped-product data of `N^(n+1)(κ)` in geodesic polar coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpaceformParams {
    pub kappa: Kappa,
}

impl SpaceformParams {
    pub fn new(kappa: Kappa) -> Self {
        SpaceformParams { kappa }
    }

    pub fn phi(&self, rho: f64) -> f64 {
        match self.kappa {
            Kappa::Sphere => rho.sin(),
            Kappa::Flat => rho,
            Kappa::Hyperbolic => rho.sinh(),
        }
    }

    pub fn dphi(&self, rho: f64) -> f64 {
        match self.kappa {
            Kappa::Sphere => rho.cos(),
            Kappa::Flat => 1.0,
            Kappa::Hyperbolic => rho.cosh(),
        }
    }

    pub fn ddphi(&self, rho: f64) -> f64 {
        -self.kappa.value() * self.phi(rho)
    }
}

/// Where a radial graph lives.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Ambient {
    Spaceform(Kappa),
    Euclidean,
}

impl Ambient {
    pub fn token(self) -> &'static str {
        match self {
            Ambient::Spaceform(k) => k.ambient_token(),
            Ambient::Euclidean => "euclidean",
        }
    }

    fn params(self) -> SpaceformParams {
        match self {
            Ambient::Spaceform(k) => SpaceformParams::new(k),
            Ambient::Euclidean => SpaceformParams::new(Kappa::Flat),
        }
    }
}

impl FromStr for Ambient {
    type Err = FlowError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sphere" => Ok(Ambient::Spaceform(Kappa::Sphere)),
            "hyperbolic" => Ok(Ambient::Spaceform(Kappa::Hyperbolic)),
            "euclidean" => Ok(Ambient::Euclidean),
            other => Err(FlowError::Parse(format!("unknown ambient token `{other}`"))),
        }
    }
}

/// Radial function over the direction grid: geodesic radius `ρ(z)` in a
/// space form or Euclidean radius `r(z)`.
#[derive(Debug, Clone)]
pub struct RadialGraph {
    ambient: Ambient,
    grid: Arc<Grid>,
    values: Vec<f64>,
    center: Point2,
}

impl RadialGraph {
    pub fn new(ambient: Ambient, grid: Arc<Grid>, values: Vec<f64>, center: Point2) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(FlowError::InvalidGrid(format!(
                "{} values for a grid of {}",
                values.len(),
                grid.len()
            )));
        }
        for &v in &values {
            if !v.is_finite() {
                return Err(FlowError::NonFinite("radial values"));
            }
            if v <= 0.0 {
                return Err(FlowError::OutOfDomain(format!("radius {v} not positive")));
            }
            if ambient == Ambient::Spaceform(Kappa::Sphere) && v >= FRAC_PI_2 {
                return Err(FlowError::OutOfDomain(format!(
                    "geodesic radius {v} leaves the open hemisphere"
                )));
            }
        }
        Ok(RadialGraph {
            ambient,
            grid,
            values,
            center,
        })
    }

    pub fn from_fn(
        ambient: Ambient,
        dim: Dim,
        len: usize,
        f: impl Fn(Point2) -> f64,
    ) -> Result<Self> {
        let grid = Grid::new(dim, len)?;
        let values = (0..len).map(|i| f(grid.normal(i))).collect();
        Self::new(ambient, grid, values, [0.0, 0.0])
    }

    pub fn ambient(&self) -> Ambient {
        self.ambient
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn center(&self) -> Point2 {
        self.center
    }

    pub fn n(&self) -> usize {
        self.grid.n()
    }
}

/// Maps a space-form radial graph to the Euclidean radial graph of its
/// projected image: `r = φ/φ′`.
pub fn project(g: &RadialGraph) -> Result<RadialGraph> {
    let kappa = match g.ambient {
        Ambient::Spaceform(k) => k,
        Ambient::Euclidean => {
            return Err(FlowError::OutOfDomain("graph is already Euclidean".into()))
        }
    };
    let values = g
        .values
        .iter()
        .map(|&rho| match kappa {
            Kappa::Sphere if rho >= FRAC_PI_2 => Err(FlowError::OutOfDomain(format!(
                "geodesic radius {rho} >= π/2"
            ))),
            Kappa::Sphere => Ok(rho.tan()),
            Kappa::Flat => Ok(rho),
            Kappa::Hyperbolic => Ok(rho.tanh()),
        })
        .collect::<Result<Vec<_>>>()?;
    RadialGraph::new(Ambient::Euclidean, Arc::clone(&g.grid), values, g.center)
}

/// Inverse of [`project`].
pub fn lift(g: &RadialGraph, kappa: Kappa) -> Result<RadialGraph> {
    if g.ambient != Ambient::Euclidean {
        return Err(FlowError::OutOfDomain("lift expects a Euclidean graph".into()));
    }
    let values = g
        .values
        .iter()
        .map(|&r| match kappa {
            Kappa::Sphere => Ok(r.atan()),
            Kappa::Flat => Ok(r),
            Kappa::Hyperbolic if r >= 1.0 => Err(FlowError::OutOfDomain(format!(
                "Euclidean radius {r} outside the unit ball"
            ))),
            Kappa::Hyperbolic => Ok(r.atanh()),
        })
        .collect::<Result<Vec<_>>>()?;
    RadialGraph::new(Ambient::Spaceform(kappa), Arc::clone(&g.grid), values, g.center)
}

/// `((1 + κ(u² + g)) / (1 + κu²))^((n+2)/2)` with `g = |∇u|²`.
pub fn curvature_factor(u: f64, grad_norm_sq: f64, kappa: Kappa, n: usize) -> Result<f64> {
    let k = kappa.value();
    let top = 1.0 + k * (u * u + grad_norm_sq);
    let bottom = 1.0 + k * u * u;
    if !(top > 0.0 && bottom > 0.0) {
        return Err(FlowError::OutOfDomain(format!(
            "curvature factor bases {top:e}, {bottom:e} not positive"
        )));
    }
    Ok((top / bottom).powf((n as f64 + 2.0) / 2.0))
}

/// Per-point first and second derivatives and the graph-curvature numerator
/// factors, shared by the space-form and Euclidean formulas.
fn graph_curvature(g: &RadialGraph, params: SpaceformParams) -> Result<Vec<f64>> {
    let grid = &g.grid;
    let d = grid.derivatives(&g.values);
    let n = grid.n();
    let mut out = Vec::with_capacity(g.values.len());
    for i in 0..g.values.len() {
        let rho = g.values[i];
        let (p, dp) = (params.phi(rho), params.dphi(rho));
        let (r1, r11) = (d.d1[i], d.d2[i]);
        if !(r1.is_finite() && r11.is_finite()) {
            return Err(FlowError::NonFinite("radial derivatives"));
        }
        let e11 = -p * r11 + 2.0 * dp * r1 * r1 + p * p * dp;
        let base = p * p + r1 * r1;
        let k = match n {
            1 => {
                if !(e11 > 0.0) {
                    return Err(FlowError::ConvexityLost {
                        index: i,
                        radius: e11,
                        floor: 0.0,
                    });
                }
                e11 / base.powf(1.5)
            }
            _ => {
                let cot = grid.cos()[i] / grid.sin()[i];
                let e22 = -p * cot * r1 + p * p * dp;
                if !(e11 > 0.0 && e22 > 0.0) {
                    return Err(FlowError::ConvexityLost {
                        index: i,
                        radius: e11.min(e22),
                        floor: 0.0,
                    });
                }
                e11 * e22 / (base * base * p * p)
            }
        };
        out.push(k);
    }
    Ok(out)
}

/// Gauss curvature of a radial graph in the space form it lives in.
pub fn gauss_curvature_spaceform_graph(g: &RadialGraph) -> Result<Vec<f64>> {
    graph_curvature(g, g.ambient.params())
}

/// Gauss curvature of a Euclidean radial graph.
pub fn gauss_curvature_euclidean_graph(g: &RadialGraph) -> Result<Vec<f64>> {
    if g.ambient != Ambient::Euclidean && g.ambient != Ambient::Spaceform(Kappa::Flat) {
        return Err(FlowError::OutOfDomain("expected a Euclidean graph".into()));
    }
    graph_curvature(g, SpaceformParams::new(Kappa::Flat))
}

/// Space-form curvature of a graph computed by projecting it, evaluating the
/// Euclidean curvature of the image and multiplying by [`curvature_factor`]
/// at the matching normal.
pub fn gauss_curvature_via_projection(g: &RadialGraph) -> Result<Vec<f64>> {
    let kappa = match g.ambient {
        Ambient::Spaceform(k) => k,
        Ambient::Euclidean => Kappa::Flat,
    };
    let proj = if kappa == Kappa::Flat {
        RadialGraph::new(Ambient::Euclidean, Arc::clone(&g.grid), g.values.clone(), g.center)?
    } else {
        project(g)?
    };
    let k_hat = gauss_curvature_euclidean_graph(&proj)?;
    let d = proj.grid.derivatives(&proj.values);
    let n = g.n();
    proj.values
        .iter()
        .zip(&d.d1)
        .zip(&k_hat)
        .map(|((&r, &r1), &kh)| {
            // û = r²/√(r² + |∇r|²) and û² + |∇û|² = r².
            let u = r * r / (r * r + r1 * r1).sqrt();
            let grad_sq = (r * r - u * u).max(0.0);
            Ok(curvature_factor(u, grad_sq, kappa, n)? * kh)
        })
        .collect()
}

/// Euclidean radial graph of the body with support `u`, about the frame origin.
pub fn support_to_radial(u: &SupportField) -> Result<RadialGraph> {
    let grid = Arc::clone(u.grid());
    let d = u.derivatives();
    weingarten_from(u, &d)?;
    let pts = points_from(u, &d.d1);
    let m = grid.periodic_len();
    // boundary point, its polar angle and the normal on the periodic extension
    let mut s = Vec::with_capacity(m);
    let mut r = Vec::with_capacity(m);
    let mut dr = Vec::with_capacity(m);
    let mut prev = f64::NEG_INFINITY;
    for j in 0..m {
        let i = grid.wrap(j as isize);
        let (p, normal) = if j < grid.len() {
            (pts[i], grid.normal(i))
        } else {
            let q = pts[i];
            let nn = grid.normal(i);
            ([q[0], -q[1]], [nn[0], -nn[1]])
        };
        let rad = norm2(p);
        if !(rad > 0.0) {
            return Err(FlowError::NotStarShaped(j));
        }
        let mut ang = p[1].atan2(p[0]);
        if j == 0 {
            let ref_ang = grid.periodic_angle(0);
            ang += TAU * ((ref_ang - ang) / TAU).round();
        } else {
            ang += TAU * ((prev - ang) / TAU).round();
        }
        if j > 0 && ang <= prev {
            return Err(FlowError::NotStarShaped(j));
        }
        let dir = [p[0] / rad, p[1] / rad];
        let dperp = [-dir[1], dir[0]];
        let cos_t = dot2(normal, dir);
        if !(cos_t > 0.0) {
            return Err(FlowError::NotStarShaped(j));
        }
        s.push(ang);
        r.push(rad);
        dr.push(-rad * dot2(normal, dperp) / cos_t);
        prev = ang;
    }
    if s[m - 1] >= s[0] + TAU {
        return Err(FlowError::NotStarShaped(m - 1));
    }
    let interp = PeriodicHermite::new(s, r, dr);
    let values = (0..grid.len())
        .map(|i| interp.eval(grid.angles()[i]))
        .collect();
    RadialGraph::new(Ambient::Euclidean, grid, values, u.center())
}

/// Support function of the body bounded by a Euclidean radial graph.
pub fn radial_to_support(g: &RadialGraph) -> Result<SupportField> {
    if g.ambient != Ambient::Euclidean {
        return Err(FlowError::OutOfDomain("expected a Euclidean graph".into()));
    }
    let grid = Arc::clone(&g.grid);
    let m = grid.periodic_len();
    let ext = grid.extend(&g.values);
    let s: Vec<f64> = (0..m).map(|j| grid.periodic_angle(j)).collect();
    let ds = periodic_d1(&ext, grid.spacing());
    let interp = PeriodicHermite::new(s.clone(), ext.clone(), ds);
    let h = grid.spacing();
    let mut values = Vec::with_capacity(grid.len());
    for i in 0..grid.len() {
        let th = grid.angles()[i];
        let f = |z: f64| interp.eval(z) * (z - th).cos();
        let mut best = 0;
        let mut best_v = f64::NEG_INFINITY;
        for (j, (&sj, &rj)) in s.iter().zip(&ext).enumerate() {
            let v = rj * (sj - th).cos();
            if v > best_v {
                best_v = v;
                best = j;
            }
        }
        let (_, val) = golden_max(f, s[best] - h, s[best] + h, 1e-13);
        values.push(val.max(best_v));
    }
    SupportField::new(grid, values, g.center)
}

/// Projective change of frame that moves the projection centre.
///
/// Homogeneous coordinates `(a, b, w)` of the tangent plane: the point
/// `(a/w, b/w)`. For κ = 1 the frame change is a rotation of the sphere,
/// for κ = −1 a Lorentz boost, for κ = 0 a translation.
fn shift_matrix(kappa: Kappa, c: Point2, inverse: bool) -> [[f64; 3]; 3] {
    let m = norm2(c);
    if m == 0.0 {
        return IDENTITY;
    }
    let sign = if inverse { -1.0 } else { 1.0 };
    if kappa == Kappa::Flat {
        return [
            [1.0, 0.0, -sign * c[0]],
            [0.0, 1.0, -sign * c[1]],
            [0.0, 0.0, 1.0],
        ];
    }
    let e = [c[0] / m, c[1] / m];
    let (ch, sh) = match kappa {
        Kappa::Sphere => {
            let th = m.atan();
            (th.cos(), th.sin())
        }
        _ => {
            let beta = m.atanh();
            (beta.cosh(), beta.sinh())
        }
    };
    // par' = ch·par - sign·sh·w, w' = κ·sign·sh·par + ch·w; the component
    // orthogonal to c is unchanged
    let k = kappa.value();
    let par_row = [ch, -sign * sh];
    let w_row = [k * sign * sh, ch];
    let mut a = [[0.0; 3]; 3];
    let ep = [-e[1], e[0]];
    for (r, row) in a.iter_mut().take(2).enumerate() {
        for j in 0..2 {
            row[j] = e[r] * e[j] * par_row[0] + ep[r] * ep[j];
        }
        row[2] = e[r] * par_row[1];
    }
    a[2][0] = w_row[0] * e[0];
    a[2][1] = w_row[0] * e[1];
    a[2][2] = w_row[1];
    a
}

const IDENTITY: [[f64; 3]; 3] = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];

fn mat_vec(a: &[[f64; 3]; 3], v: [f64; 3]) -> [f64; 3] {
    [
        a[0][0] * v[0] + a[0][1] * v[1] + a[0][2] * v[2],
        a[1][0] * v[0] + a[1][1] * v[1] + a[1][2] * v[2],
        a[2][0] * v[0] + a[2][1] * v[1] + a[2][2] * v[2],
    ]
}

fn mat_mul(a: &[[f64; 3]; 3], b: &[[f64; 3]; 3]) -> [[f64; 3]; 3] {
    let mut c = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            c[i][j] = (0..3).map(|k| a[i][k] * b[k][j]).sum();
        }
    }
    c
}

fn mat_inv(a: &[[f64; 3]; 3]) -> [[f64; 3]; 3] {
    let det = a[0][0] * (a[1][1] * a[2][2] - a[1][2] * a[2][1])
        - a[0][1] * (a[1][0] * a[2][2] - a[1][2] * a[2][0])
        + a[0][2] * (a[1][0] * a[2][1] - a[1][1] * a[2][0]);
    let mut inv = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            let (r0, r1) = ((j + 1) % 3, (j + 2) % 3);
            let (c0, c1) = ((i + 1) % 3, (i + 2) % 3);
            inv[i][j] = (a[r0][c0] * a[r1][c1] - a[r0][c1] * a[r1][c0]) / det;
        }
    }
    inv
}

/// Accumulated projection frame: maps homogeneous coordinates of the current
/// tangent-plane chart to those of the original chart.
#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    kappa: Kappa,
    to_original: [[f64; 3]; 3],
}

impl Frame {
    pub fn identity(kappa: Kappa) -> Self {
        Frame {
            kappa,
            to_original: IDENTITY,
        }
    }

    pub fn kappa(&self) -> Kappa {
        self.kappa
    }

    /// Frame whose origin is the point `c` of this frame.
    pub fn shifted(&self, c: Point2) -> Self {
        Frame {
            kappa: self.kappa,
            to_original: mat_mul(&self.to_original, &shift_matrix(self.kappa, c, true)),
        }
    }

    /// Coordinates in `other` of the point `p` of this frame.
    pub fn map_to(&self, other: &Frame, p: Point2) -> Result<Point2> {
        let h = mat_vec(&self.to_original, [p[0], p[1], 1.0]);
        let h = mat_vec(&mat_inv(&other.to_original), h);
        if !(h[2] > 0.0) {
            return Err(FlowError::OutOfDomain(
                "point outside the target chart".into(),
            ));
        }
        Ok([h[0] / h[2], h[1] / h[2]])
    }

    /// Ambient coordinates of the point `p` of this chart: `R^(n+1)` for
    /// κ = 0, the unit sphere or the hyperboloid in `R^(n+2)` otherwise
    /// (the original projection centre is the last basis vector).
    pub fn ambient_point(&self, dim: Dim, p: Point2) -> Result<Vec<f64>> {
        let h = mat_vec(&self.to_original, [p[0], p[1], 1.0]);
        let spatial = match dim {
            Dim::Circle => vec![h[0], h[1]],
            // profile (z, ϱ) sits in the meridian plane y = 0
            Dim::Axisymmetric => vec![h[1], 0.0, h[0]],
        };
        match self.kappa {
            Kappa::Flat => Ok(spatial.iter().map(|v| v / h[2]).collect()),
            Kappa::Sphere => {
                let norm = (h[0] * h[0] + h[1] * h[1] + h[2] * h[2]).sqrt();
                let mut out: Vec<f64> = spatial.iter().map(|v| v / norm).collect();
                out.push(h[2] / norm);
                Ok(out)
            }
            Kappa::Hyperbolic => {
                let q = h[2] * h[2] - h[0] * h[0] - h[1] * h[1];
                if !(q > 0.0) {
                    return Err(FlowError::OutOfDomain(
                        "point outside the hyperboloid chart".into(),
                    ));
                }
                let s = q.sqrt() * h[2].signum();
                let mut out: Vec<f64> = spatial.iter().map(|v| v / s).collect();
                out.push(h[2] / s);
                Ok(out)
            }
        }
    }
}

/// Re-projects a projected body about the point `c` of its current chart.
///
/// For κ = 0 this is the exact translation `u - ⟨c, x⟩`. Otherwise each
/// boundary point and its tangent are pushed through the projective frame
/// change and the new support values are Hermite-interpolated (with exact
/// slopes) back onto the grid.
pub fn recenter(u: &SupportField, kappa: Kappa, c: Point2) -> Result<SupportField> {
    let grid = Arc::clone(u.grid());
    if grid.dim() == Dim::Axisymmetric && c[1] != 0.0 {
        return Err(FlowError::InvalidGrid(
            "axisymmetric bodies can only be recentred along the axis".into(),
        ));
    }
    if kappa == Kappa::Flat {
        let mut out = u.translated([-c[0], -c[1]]);
        out.set_center([u.center()[0] + c[0], u.center()[1] + c[1]]);
        return Ok(out);
    }
    if kappa == Kappa::Hyperbolic && norm2(c) >= 1.0 {
        return Err(FlowError::OutOfDomain(format!(
            "new centre {c:?} outside the unit ball"
        )));
    }
    let a = shift_matrix(kappa, c, false);
    let d = u.derivatives();
    weingarten_from(u, &d)?;
    let pts = points_from(u, &d.d1);
    let m = grid.periodic_len();
    let mut s = Vec::with_capacity(m);
    let mut f = Vec::with_capacity(m);
    let mut df = Vec::with_capacity(m);
    let mut prev = f64::NEG_INFINITY;
    for j in 0..m {
        let i = grid.wrap(j as isize);
        let (p, t) = if j < grid.len() {
            (pts[i], grid.tangent(i))
        } else {
            let q = pts[i];
            let tt = grid.tangent(i);
            // mirror across the axis reverses the angle orientation
            ([q[0], -q[1]], [-tt[0], tt[1]])
        };
        let hv = mat_vec(&a, [p[0], p[1], 1.0]);
        let dh = mat_vec(&a, [t[0], t[1], 0.0]);
        if !(hv[2] > 0.0) {
            return Err(FlowError::OutOfDomain(
                "body leaves the chart of the new centre".into(),
            ));
        }
        let xp = [hv[0] / hv[2], hv[1] / hv[2]];
        let dx = [
            (dh[0] * hv[2] - hv[0] * dh[2]) / (hv[2] * hv[2]),
            (dh[1] * hv[2] - hv[1] * dh[2]) / (hv[2] * hv[2]),
        ];
        let len = norm2(dx);
        let normal = [dx[1] / len, -dx[0] / len];
        let tangent = [-normal[1], normal[0]];
        let mut ang = normal[1].atan2(normal[0]);
        if j == 0 {
            ang += TAU * ((grid.periodic_angle(0) - ang) / TAU).round();
        } else {
            ang += TAU * ((prev - ang) / TAU).round();
            if ang <= prev {
                return Err(FlowError::ConvexityLost {
                    index: i,
                    radius: ang - prev,
                    floor: 0.0,
                });
            }
        }
        s.push(ang);
        f.push(dot2(xp, normal));
        df.push(dot2(xp, tangent));
        prev = ang;
    }
    let interp = PeriodicHermite::new(s, f, df);
    let values = (0..grid.len())
        .map(|i| interp.eval(grid.angles()[i]))
        .collect();
    SupportField::new(grid, values, [0.0, 0.0])
}
