//! Power-mean entropy of a convex body, its maximising point, and the
//! corrected monotone quantity along normalized runs.

use crate::error::{FlowError, Result};
use crate::sphere::{
    body_geometry, dot2, norm2, steiner_point, Dim, Point2, SupportField,
};

/// Below this distance from 1 the exponent is treated as exactly 1.
pub const LOG_FORM_BAND: f64 = 1e-4;

/// Per-step increase treated as rounding noise when fitting the correction constant.
pub const MONOTONE_SLACK: f64 = 1e-12;

const MAX_NEWTON: usize = 200;

fn uses_log_form(alpha: f64) -> bool {
    (alpha - 1.0).abs() < LOG_FORM_BAND
}

fn check_point(u: &SupportField, z0: Point2) -> Result<()> {
    if u.dim() == Dim::Axisymmetric && z0[1] != 0.0 {
        return Err(FlowError::InvalidGrid(
            "axisymmetric entropy points lie on the axis".into(),
        ));
    }
    Ok(())
}

fn shifted(u: &SupportField, z0: Point2) -> Result<Vec<f64>> {
    let grid = u.grid();
    let mut v = Vec::with_capacity(u.len());
    for i in 0..u.len() {
        let s = u.values()[i] - dot2(z0, grid.normal(i));
        if !(s > 0.0) {
            return Err(FlowError::PointNotInterior {
                index: i,
                min_value: s,
            });
        }
        v.push(s);
    }
    Ok(v)
}

/// `E_α(Ω, z₀)`: `(α/(α-1)) log ⨍ u_z^(1-1/α)`, or `⨍ log u_z` at α = 1.
pub fn entropy_at(u: &SupportField, z0: Point2, alpha: f64) -> Result<f64> {
    check_point(u, z0)?;
    let v = shifted(u, z0)?;
    let grid = u.grid();
    if uses_log_form(alpha) {
        let l: Vec<f64> = v.iter().map(|x| x.ln()).collect();
        return grid.mean(&l);
    }
    let beta = 1.0 - 1.0 / alpha;
    let p: Vec<f64> = v.iter().map(|x| x.powf(beta)).collect();
    Ok(grid.mean(&p)?.ln() / beta)
}

/// Value, gradient and Hessian of `z ↦ E_α(Ω, z)`.
fn local_model(u: &SupportField, z: Point2, alpha: f64) -> Result<(f64, [f64; 2], [[f64; 2]; 2])> {
    let v = shifted(u, z)?;
    let grid = u.grid();
    let w = grid.weights();
    let area = u.dim().sphere_area();
    let mut g = [0.0; 2];
    let mut h = [[0.0; 2]; 2];
    let value;
    if uses_log_form(alpha) {
        let mut e = 0.0;
        for i in 0..v.len() {
            let x = grid.normal(i);
            let wi = w[i] / area;
            e += wi * v[i].ln();
            for a in 0..2 {
                g[a] -= wi * x[a] / v[i];
                for b in 0..2 {
                    h[a][b] -= wi * x[a] * x[b] / (v[i] * v[i]);
                }
            }
        }
        value = e;
    } else {
        let beta = 1.0 - 1.0 / alpha;
        let mut m = 0.0;
        let mut gg = [0.0; 2];
        let mut s = [[0.0; 2]; 2];
        for i in 0..v.len() {
            let x = grid.normal(i);
            let wi = w[i] / area;
            let pb = v[i].powf(beta);
            m += wi * pb;
            for a in 0..2 {
                gg[a] += wi * pb / v[i] * x[a];
                for b in 0..2 {
                    s[a][b] += wi * pb / (v[i] * v[i]) * x[a] * x[b];
                }
            }
        }
        value = m.ln() / beta;
        for a in 0..2 {
            g[a] = -gg[a] / m;
            for b in 0..2 {
                h[a][b] = (beta - 1.0) / m * s[a][b] - beta / (m * m) * gg[a] * gg[b];
            }
        }
    }
    if u.dim() == Dim::Axisymmetric {
        g[1] = 0.0;
        h[0][1] = 0.0;
        h[1][0] = 0.0;
        h[1][1] = -1.0;
    }
    Ok((value, g, h))
}

/// Ascent direction: regularised Newton where `-H` is positive definite,
/// the gradient otherwise.
fn ascent_direction(g: [f64; 2], h: [[f64; 2]; 2]) -> [f64; 2] {
    let scale = h[0][0].abs().max(h[1][1].abs());
    let mu = 1e-12 * scale;
    let a = [[-h[0][0] + mu, -h[0][1]], [-h[1][0], -h[1][1] + mu]];
    let det = a[0][0] * a[1][1] - a[0][1] * a[1][0];
    if a[0][0] > 0.0 && det > 0.0 {
        [
            (a[1][1] * g[0] - a[0][1] * g[1]) / det,
            (a[0][0] * g[1] - a[1][0] * g[0]) / det,
        ]
    } else {
        g
    }
}

/// Maximises `E_α(Ω, ·)` starting from `start`.
pub fn entropy_point_from(u: &SupportField, alpha: f64, start: Point2) -> Result<(Point2, f64)> {
    check_point(u, start)?;
    let r_plus = body_geometry(u)?.r_plus.max(f64::MIN_POSITIVE);
    let mut z = start;
    let (mut e, mut g, mut h) = local_model(u, z, alpha)?;
    for _ in 0..MAX_NEWTON {
        if norm2(g) * r_plus < 1e-10 {
            return Ok((z, e));
        }
        let d = ascent_direction(g, h);
        let gain = dot2(g, d);
        let mut t = 1.0;
        let mut moved = false;
        for _ in 0..60 {
            let trial = [z[0] + t * d[0], z[1] + t * d[1]];
            if let Ok((et, gt, ht)) = local_model(u, trial, alpha) {
                // once the predicted gain is below rounding, accept any interior step
                let tiny = 0.5 * gain * t <= 1e-14 * (1.0 + e.abs());
                if tiny || et >= e + 1e-4 * t * gain {
                    z = trial;
                    e = et;
                    g = gt;
                    h = ht;
                    moved = true;
                    break;
                }
            }
            t *= 0.5;
        }
        if !moved {
            break;
        }
    }
    Err(FlowError::NoConvergence {
        iterations: MAX_NEWTON,
        residual: norm2(g) * r_plus,
    })
}

/// The entropy point `z_e` and `E_α(Ω) = E_α(Ω, z_e)`, started from the Steiner point.
pub fn entropy_point(u: &SupportField, alpha: f64) -> Result<(Point2, f64)> {
    let s = steiner_point(u)?;
    entropy_point_from(u, alpha, s)
}

/// `E_α(Ω) ≥ 0` (to 1e-8) for a body of unit-ball volume.
pub fn entropy_lower_bound_check(u: &SupportField, alpha: f64) -> Result<bool> {
    Ok(entropy_point(u, alpha)?.1 >= -1e-8)
}

/// Smallest certificate `C` making `e(t) + C e^(-2(n+1)t/(2n+1))` non-increasing.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MonotoneFit {
    pub c_fit: f64,
    pub t0_fit: f64,
    /// Largest per-step increase of the corrected sequence after `t0_fit`.
    pub max_violation: f64,
}

/// Correction weight `e^(-2(n+1)t/(2n+1))`.
pub fn correction_weight(t: f64, n: usize) -> f64 {
    let n = n as f64;
    (-2.0 * (n + 1.0) * t / (2.0 * n + 1.0)).exp()
}

/// Fits `C ≥ 0` and an onset index in the first half of the samples so that
/// the corrected sequence increases by at most `slack` per step afterwards.
///
/// For a fixed onset the feasible set is `C ≥ max_k (Δe_k - slack)/(-Δw_k)`,
/// so the minimal `C` is available in closed form; the onset minimising it
/// (earliest on ties) is reported.
pub fn monotone_quantity_trace(entropy: &[f64], t: &[f64], n: usize, slack: f64) -> Result<MonotoneFit> {
    let len = entropy.len().min(t.len());
    if len < 20 {
        return Err(FlowError::InsufficientData {
            needed: 20,
            got: len,
        });
    }
    let w: Vec<f64> = t[..len].iter().map(|&s| correction_weight(s, n)).collect();
    // required C per step, then suffix maxima
    let need: Vec<f64> = (0..len - 1)
        .map(|k| {
            let de = entropy[k + 1] - entropy[k] - slack;
            let dw = w[k] - w[k + 1];
            if de <= 0.0 {
                0.0
            } else if dw > 0.0 {
                de / dw
            } else {
                f64::INFINITY
            }
        })
        .collect();
    let mut suffix = vec![0.0_f64; len];
    for k in (0..len - 1).rev() {
        suffix[k] = suffix[k + 1].max(need[k]);
    }
    let mut best = 0;
    for k0 in 0..len / 2 {
        if suffix[k0] < suffix[best] {
            best = k0;
        }
    }
    let c = suffix[best];
    if !c.is_finite() {
        return Err(FlowError::NoConvergence {
            iterations: len,
            residual: c,
        });
    }
    let max_violation = (best..len - 1)
        .map(|k| (entropy[k + 1] + c * w[k + 1]) - (entropy[k] + c * w[k]))
        .fold(0.0_f64, f64::max);
    Ok(MonotoneFit {
        c_fit: c,
        t0_fit: t[best],
        max_violation,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct EntropyReport {
    pub alpha: f64,
    pub value: f64,
    pub entropy_point: Point2,
    /// `(t, E_α)` samples.
    pub trace: Vec<(f64, f64)>,
    pub fit: Option<MonotoneFit>,
}

impl EntropyReport {
    /// Flat `key=value` lines.
    pub fn to_key_values(&self) -> String {
        let mut out = String::new();
        let mut put = |k: &str, v: String| {
            out.push_str(k);
            out.push('=');
            out.push_str(&v);
            out.push('\n');
        };
        put("entropy.alpha", format!("{:.16e}", self.alpha));
        put("entropy.value", format!("{:.16e}", self.value));
        put("entropy.point_x", format!("{:.16e}", self.entropy_point[0]));
        put("entropy.point_y", format!("{:.16e}", self.entropy_point[1]));
        put("entropy.samples", self.trace.len().to_string());
        if let Some(f) = self.fit {
            put("entropy.c_fit", format!("{:.16e}", f.c_fit));
            put("entropy.t0_fit", format!("{:.16e}", f.t0_fit));
            put("entropy.max_violation", format!("{:.16e}", f.max_violation));
        }
        out
    }
}
