//! The volume-normalized flow `û_t = û - ψK^α / ⨍ψK^(α-1)` and its
//! convergence diagnostics.

use std::sync::Arc;

use crate::entropy::{correction_weight, entropy_point_from, monotone_quantity_trace, MonotoneFit, MONOTONE_SLACK};
use crate::error::{FlowError, Result};
use crate::flow::{cfl_from, evaluate, k_pow, min_max, Evaluation, ExtinctionReport, FlowConfig};
use crate::spaceform::{recenter, Frame, Kappa};
use crate::sphere::{dot2, geometry_from, norm2, steiner_point, volume, BodyGeometry, Dim, Point2, SupportField};

/// `t = log(|B(1)|/vol) / (n+1)`.
pub fn time_map(volume_unnormalized: f64, n: usize) -> Result<f64> {
    if !(volume_unnormalized > 0.0 && volume_unnormalized.is_finite()) {
        return Err(FlowError::NonFinite("volume for the time map"));
    }
    let dim = Dim::from_n(n)?;
    Ok((dim.unit_ball_volume() / volume_unnormalized).ln() / (n as f64 + 1.0))
}

/// Scales `u` to unit-ball volume.
fn pin_volume(u: &SupportField) -> Result<SupportField> {
    let target = u.dim().unit_ball_volume();
    let v = volume(u)?;
    Ok(u.scaled((target / v).powf(1.0 / (u.n() as f64 + 1.0))))
}

/// `max |λv - K^α| / max K^α` with `v` the support about the Steiner point
/// and `λ = ⨍K^(α-1)`.
fn residual_from(u: &SupportField, ev: &Evaluation, alpha: f64, s: Point2) -> Result<f64> {
    let grid = u.grid();
    let ka: Vec<f64> = ev.curv.sigma_n.iter().map(|&sg| k_pow(sg, alpha)).collect();
    let km1: Vec<f64> = ev.curv.sigma_n.iter().map(|&sg| k_pow(sg, alpha - 1.0)).collect();
    let lambda = grid.mean(&km1)?;
    let mut num = 0.0_f64;
    let mut den = 0.0_f64;
    for i in 0..u.len() {
        let v = u.values()[i] - dot2(s, grid.normal(i));
        num = num.max((lambda * v - ka[i]).abs());
        den = den.max(ka[i]);
    }
    Ok(num / den)
}

/// Soliton residual of a support field, ignoring `ψ`.
pub fn soliton_residual(u: &SupportField, alpha: f64) -> Result<f64> {
    let cfg = FlowConfig::new(alpha, Kappa::Flat);
    let ev = evaluate(u, &cfg, None)?;
    residual_from(u, &ev, alpha, steiner_point(u)?)
}

/// `(r₊ - r₋)/r₊` about the Steiner point.
pub fn roundness(geometry: &BodyGeometry) -> f64 {
    (geometry.r_plus - geometry.r_minus) / geometry.r_plus
}

#[derive(Debug, Clone)]
pub struct NormalizedState {
    /// `û`, pinned to unit-ball volume.
    pub field: SupportField,
    pub t: f64,
    /// Unnormalized time reached.
    pub tau: f64,
    pub step_count: usize,
    pub geometry: BodyGeometry,
    pub roundness: f64,
    pub soliton_residual: f64,
    pub psi_min: f64,
    pub psi_max: f64,
    /// `⨍ψK^(α-1)`.
    pub nonlocal_mean: f64,
    pub frame: Frame,
    pub last_dt: f64,
    /// Consecutive steps that had to be shortened after convexity loss.
    pub retry_streak: u32,
    eval: Evaluation,
}

impl NormalizedState {
    /// Normalized body at time `t` (volume is pinned first).
    pub fn new(field: SupportField, t: f64, tau: f64, frame: Frame, cfg: &FlowConfig) -> Result<Self> {
        let field = pin_volume(&field)?;
        let eval = evaluate(&field, cfg, Some(t))?;
        Self::from_eval(field, eval, t, tau, 0, frame, 0.0, cfg)
    }

    /// `û = e^t ũ` with `t` from the time map of the unnormalized body `ũ`.
    pub fn from_unnormalized(u: &SupportField, tau: f64, frame: Frame, cfg: &FlowConfig) -> Result<Self> {
        let t = time_map(volume(u)?, u.n())?;
        Self::new(u.scaled(t.exp()), t, tau, frame, cfg)
    }

    #[allow(clippy::too_many_arguments)]
    fn from_eval(
        field: SupportField,
        eval: Evaluation,
        t: f64,
        tau: f64,
        step_count: usize,
        frame: Frame,
        last_dt: f64,
        cfg: &FlowConfig,
    ) -> Result<Self> {
        let s = steiner_point(&field)?;
        let geometry = geometry_from(&field, &eval.d, &eval.curv, s)?;
        let soliton_residual = residual_from(&field, &eval, cfg.alpha, s)?;
        let (psi_min, psi_max) = min_max(&eval.psi);
        let nonlocal_mean = nonlocal_mean(&field, &eval)?;
        Ok(NormalizedState {
            roundness: roundness(&geometry),
            field,
            t,
            tau,
            step_count,
            geometry,
            soliton_residual,
            psi_min,
            psi_max,
            nonlocal_mean,
            frame,
            last_dt,
            retry_streak: 0,
            eval,
        })
    }

    /// The unnormalized body `e^(-t) û`.
    pub fn unnormalized(&self) -> SupportField {
        self.field.scaled((-self.t).exp())
    }

    pub fn volume_error(&self) -> f64 {
        let b = self.field.dim().unit_ball_volume();
        (self.geometry.volume - b).abs() / b
    }
}

fn nonlocal_mean(u: &SupportField, ev: &Evaluation) -> Result<f64> {
    let f: Vec<f64> = ev.speed.iter().zip(&ev.curv.sigma_n).map(|(s, sg)| s * sg).collect();
    u.grid().mean(&f)
}

/// Stable step in `t`.
pub fn normalized_cfl(state: &NormalizedState, cfg: &FlowConfig) -> f64 {
    cfl_from(
        &state.field,
        &state.eval,
        cfg,
        state.geometry.steiner_point,
        state.nonlocal_mean,
    )
}

/// `(û_t, dτ/dt)` for a stage.
fn stage(u: &SupportField, ev: &Evaluation, t: f64, alpha: f64) -> Result<(Vec<f64>, f64)> {
    let m = nonlocal_mean(u, ev)?;
    let rhs = u
        .values()
        .iter()
        .zip(&ev.speed)
        .map(|(v, s)| v - s / m)
        .collect();
    let dtau = (-(u.n() as f64 * alpha + 1.0) * t).exp() / m;
    Ok((rhs, dtau))
}

fn rk4(state: &NormalizedState, cfg: &FlowConfig, dt: f64) -> Result<NormalizedState> {
    let u = &state.field;
    let t = state.t;
    let a = cfg.alpha;
    let with = |k: &[f64], c: f64| -> Result<SupportField> {
        SupportField::new(
            Arc::clone(u.grid()),
            u.values().iter().zip(k).map(|(v, d)| v + c * d).collect(),
            u.center(),
        )
    };
    let (k1, s1) = stage(u, &state.eval, t, a)?;
    let f2 = with(&k1, 0.5 * dt)?;
    let (k2, s2) = stage(&f2, &evaluate(&f2, cfg, Some(t + 0.5 * dt))?, t + 0.5 * dt, a)?;
    let f3 = with(&k2, 0.5 * dt)?;
    let (k3, s3) = stage(&f3, &evaluate(&f3, cfg, Some(t + 0.5 * dt))?, t + 0.5 * dt, a)?;
    let f4 = with(&k3, dt)?;
    let (k4, s4) = stage(&f4, &evaluate(&f4, cfg, Some(t + dt))?, t + dt, a)?;
    let next: Vec<f64> = (0..u.len())
        .map(|i| u.values()[i] + dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]))
        .collect();
    let field = pin_volume(&u.with_values(next))?;
    let eval = evaluate(&field, cfg, Some(t + dt))?;
    let tau = state.tau + dt / 6.0 * (s1 + 2.0 * s2 + 2.0 * s3 + s4);
    NormalizedState::from_eval(
        field,
        eval,
        t + dt,
        tau,
        state.step_count + 1,
        state.frame.clone(),
        dt,
        cfg,
    )
}

/// One RK4 step of size at most `dt` followed by volume pinning; halves on convexity loss.
pub fn normalized_step_with(state: &NormalizedState, cfg: &FlowConfig, dt: f64) -> Result<NormalizedState> {
    let mut dt = dt;
    let mut attempt = 0;
    let mut last_loss = None;
    loop {
        if !(dt > 0.0) || state.t + dt == state.t {
            return Err(FlowError::StalledFlow {
                tau: state.tau,
                reason: format!("normalized step {dt:e} underflows at t = {}", state.t),
            });
        }
        match rk4(state, cfg, dt) {
            Err(e @ FlowError::ConvexityLost { .. }) => {
                if attempt >= cfg.max_retries {
                    return Err(e);
                }
                attempt += 1;
                dt *= 0.5;
                last_loss = Some(e);
            }
            Ok(mut next) => {
                next.retry_streak = if attempt > 0 { state.retry_streak + 1 } else { 0 };
                // Shortening on every step means the step rule itself is unstable.
                if cfg.max_retries > 0 && next.retry_streak >= cfg.max_retries {
                    return Err(last_loss.expect("a retry records its failure"));
                }
                return Ok(next);
            }
            other => return other,
        }
    }
}

/// One step at the CFL step size.
pub fn normalized_step(state: &NormalizedState, cfg: &FlowConfig) -> Result<NormalizedState> {
    normalized_step_with(state, cfg, normalized_cfl(state, cfg))
}

/// Re-centres at the Steiner point once it drifts beyond `fraction·r₊`.
fn recentered(state: &NormalizedState, cfg: &FlowConfig, fraction: f64) -> Result<Option<NormalizedState>> {
    let s = state.geometry.steiner_point;
    if norm2(s) <= fraction * state.geometry.r_plus {
        return Ok(None);
    }
    let (field, frame) = if cfg.kappa == Kappa::Flat {
        (recenter(&state.field, Kappa::Flat, s)?, state.frame.shifted(s))
    } else {
        let shrink = (-state.t).exp();
        let c = [s[0] * shrink, s[1] * shrink];
        let moved = recenter(&state.unnormalized(), cfg.kappa, c)?;
        (moved.scaled(state.t.exp()), state.frame.shifted(c))
    };
    let mut next = NormalizedState::new(field, state.t, state.tau, frame, cfg)?;
    next.step_count = state.step_count;
    next.retry_streak = state.retry_streak;
    next.last_dt = state.last_dt;
    Ok(Some(next))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormalizedTraceRow {
    pub t: f64,
    pub tau: f64,
    pub volume: f64,
    pub r_minus: f64,
    pub r_plus: f64,
    pub roundness: f64,
    pub soliton_residual: f64,
    /// NaN when not sampled.
    pub entropy: f64,
    /// Corrected entropy `e + C w(t)`; NaN when not sampled.
    pub monotone_q: f64,
    pub psi_min: f64,
    pub psi_max: f64,
    /// Width ratio `ω_max/ω_min`.
    pub aspect: f64,
}

pub const NORMALIZED_TRACE_HEADER: &str =
    "t,tau,volume,r_minus,r_plus,roundness,soliton_residual,entropy,monotone_q,psi_min,psi_max";

impl NormalizedTraceRow {
    fn of(state: &NormalizedState, entropy: f64) -> Self {
        NormalizedTraceRow {
            t: state.t,
            tau: state.tau,
            volume: state.geometry.volume,
            r_minus: state.geometry.r_minus,
            r_plus: state.geometry.r_plus,
            roundness: state.roundness,
            soliton_residual: state.soliton_residual,
            entropy,
            monotone_q: f64::NAN,
            psi_min: state.psi_min,
            psi_max: state.psi_max,
            aspect: state.geometry.width_max / state.geometry.width_min,
        }
    }

    /// Values in header order.
    pub fn values(&self) -> [f64; 11] {
        [
            self.t,
            self.tau,
            self.volume,
            self.r_minus,
            self.r_plus,
            self.roundness,
            self.soliton_residual,
            self.entropy,
            self.monotone_q,
            self.psi_min,
            self.psi_max,
        ]
    }
}

#[derive(Debug, Clone)]
pub struct NormalizedRunConfig {
    /// Length of the run in normalized time.
    pub duration: f64,
    /// Entropy sampling period in steps; 0 disables it.
    pub entropy_every: usize,
    pub recenter_fraction: f64,
    pub converge_roundness: f64,
    pub converge_residual: f64,
    /// Consecutive steps both witnesses must hold.
    pub converge_window: usize,
    pub stop_on_convergence: bool,
    pub max_steps: usize,
}

impl Default for NormalizedRunConfig {
    fn default() -> Self {
        NormalizedRunConfig {
            duration: 10.0,
            entropy_every: 1,
            recenter_fraction: 0.01,
            converge_roundness: 1e-3,
            converge_residual: 1e-4,
            converge_window: 100,
            stop_on_convergence: false,
            max_steps: 20_000_000,
        }
    }
}

#[derive(Debug, Clone)]
pub struct NormalizedRun {
    pub trace: Vec<NormalizedTraceRow>,
    pub final_state: NormalizedState,
    pub converged: bool,
    /// Time at which the convergence window was first completed.
    pub converged_at: Option<f64>,
    pub max_volume_error: f64,
    pub monotone: Option<MonotoneFit>,
    pub entropy_point: Option<Point2>,
    pub recenterings: usize,
}

/// Runs the normalized flow for `run.duration` starting at `init.t`.
pub fn run_normalized(init: NormalizedState, cfg: &FlowConfig, run: &NormalizedRunConfig) -> Result<NormalizedRun> {
    cfg.validate()?;
    let alpha = cfg.alpha;
    let t_end = init.t + run.duration;
    let mut state = init;
    let mut z = steiner_point(&state.field)?;
    let entropy_of = |s: &NormalizedState, z: &mut Point2| -> Result<f64> {
        let start = if s.field.dim() == Dim::Axisymmetric { [z[0], 0.0] } else { *z };
        let (p, e) = match entropy_point_from(&s.field, alpha, start) {
            Ok(r) => r,
            // warm start left the body after a recentering
            Err(FlowError::PointNotInterior { .. }) => entropy_point_from(&s.field, alpha, steiner_point(&s.field)?)?,
            Err(e) => return Err(e),
        };
        *z = p;
        Ok(e)
    };
    let sample = |k: usize| run.entropy_every > 0 && k % run.entropy_every == 0;
    let e0 = if sample(0) { entropy_of(&state, &mut z)? } else { f64::NAN };
    let mut trace = vec![NormalizedTraceRow::of(&state, e0)];
    let mut max_volume_error = state.volume_error();
    let mut streak = 0;
    let mut converged_at = None;
    let mut recenterings = 0;
    let mut k = 0;
    while state.t < t_end - 1e-12 {
        if k >= run.max_steps {
            return Err(FlowError::StalledFlow {
                tau: state.tau,
                reason: format!("normalized step limit {} reached", run.max_steps),
            });
        }
        if let Some(next) = recentered(&state, cfg, run.recenter_fraction)? {
            state = next;
            recenterings += 1;
            z = steiner_point(&state.field)?;
        }
        let dt = normalized_cfl(&state, cfg).min(t_end - state.t);
        state = normalized_step_with(&state, cfg, dt)?;
        k += 1;
        max_volume_error = max_volume_error.max(state.volume_error());
        if state.roundness < run.converge_roundness && state.soliton_residual < run.converge_residual {
            streak += 1;
            if streak >= run.converge_window && converged_at.is_none() {
                converged_at = Some(state.t);
            }
        } else {
            streak = 0;
            converged_at = None;
        }
        let e = if sample(k) { entropy_of(&state, &mut z)? } else { f64::NAN };
        trace.push(NormalizedTraceRow::of(&state, e));
        if run.stop_on_convergence && converged_at.is_some() {
            break;
        }
    }
    let (et, tt): (Vec<f64>, Vec<f64>) = trace
        .iter()
        .filter(|r| r.entropy.is_finite())
        .map(|r| (r.entropy, r.t))
        .unzip();
    let monotone = if et.len() >= 20 {
        let n = state.field.n();
        let fit = monotone_quantity_trace(&et, &tt, n, MONOTONE_SLACK)?;
        for r in trace.iter_mut().filter(|r| r.entropy.is_finite()) {
            r.monotone_q = r.entropy + fit.c_fit * correction_weight(r.t, n);
        }
        Some(fit)
    } else {
        None
    };
    Ok(NormalizedRun {
        converged: converged_at.is_some(),
        converged_at,
        trace,
        max_volume_error,
        monotone,
        entropy_point: (run.entropy_every > 0).then_some(z),
        recenterings,
        final_state: state,
    })
}

/// Steps until `t_target` exactly, without recentering or diagnostics.
pub fn advance_to_time(mut state: NormalizedState, cfg: &FlowConfig, t_target: f64) -> Result<NormalizedState> {
    while state.t < t_target {
        let dt = normalized_cfl(&state, cfg).min(t_target - state.t);
        state = normalized_step_with(&state, cfg, dt)?;
        if (state.t - t_target).abs() <= 1e-14 * t_target.abs().max(1.0) {
            state.t = t_target;
        }
    }
    Ok(state)
}

/// Normalized start from the restart snapshot of an extinction run,
/// re-projected about the extinction point estimate.
pub fn restart_from_extinction(report: &ExtinctionReport, cfg: &FlowConfig) -> Result<NormalizedState> {
    let snap = report.restart.as_ref().ok_or(FlowError::InsufficientData { needed: 1, got: 0 })?;
    let last = &report.final_state;
    let q0 = last.frame.map_to(&snap.frame, last.geometry.steiner_point)?;
    let (field, frame) = if norm2(q0) > 0.0 {
        (recenter(&snap.field, cfg.kappa, q0)?, snap.frame.shifted(q0))
    } else {
        (snap.field.clone(), snap.frame.clone())
    };
    let cfg = cfg.resolved_for(&field)?;
    NormalizedState::from_unnormalized(&field, snap.tau, frame, &cfg)
}

/// Least-squares slopes of `log r₋` and `log r₊` against `t` over the trailing half.
pub fn decay_exponent_fit(r_minus: &[f64], r_plus: &[f64], t: &[f64]) -> Result<(f64, f64)> {
    let len = r_minus.len().min(r_plus.len()).min(t.len());
    let start = len / 2;
    if len - start < 20 {
        return Err(FlowError::InsufficientData {
            needed: 40,
            got: len,
        });
    }
    let slope = |y: &[f64]| -> Result<f64> {
        let m = (len - start) as f64;
        let xs = &t[start..len];
        let ys: Vec<f64> = y[start..len].iter().map(|v| v.ln()).collect();
        if ys.iter().any(|v| !v.is_finite()) {
            return Err(FlowError::NonFinite("radius in decay fit"));
        }
        let mx = xs.iter().sum::<f64>() / m;
        let my = ys.iter().sum::<f64>() / m;
        let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
        let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
        Ok(sxy / sxx)
    };
    Ok((slope(r_minus)?, slope(r_plus)?))
}

/// Unnormalized radii `e^(-t) r̂` from a normalized trace.
pub fn unnormalized_radii(trace: &[NormalizedTraceRow]) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let rm = trace.iter().map(|r| r.r_minus * (-r.t).exp()).collect();
    let rp = trace.iter().map(|r| r.r_plus * (-r.t).exp()).collect();
    let t = trace.iter().map(|r| r.t).collect();
    (rm, rp, t)
}
