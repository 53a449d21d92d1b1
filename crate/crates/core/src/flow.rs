//! The contracting flow `u_τ = -ψ K^α` and its extinction driver.

use std::f64::consts::FRAC_PI_2;
use std::fmt;
use std::sync::Arc;

use crate::error::{FlowError, Result};
use crate::spaceform::{recenter, Frame, Kappa};
use crate::sphere::{
    dot2, geometry_from, max_radius, norm2, weingarten_from, BodyGeometry, CurvatureField,
    Derivatives, Point2, SupportField,
};

/// Custom speed factor `ψ(u, |∇u|², x)`.
pub type PsiFn = dyn Fn(f64, f64, Point2) -> f64 + Send + Sync;

#[derive(Clone)]
pub enum PsiKind {
    /// The factor induced by projecting a space-form flow to the tangent plane.
    Projected,
    /// `ψ ≡ 1`, the Euclidean flow.
    ConstantOne,
    Custom(Arc<PsiFn>),
}

impl fmt::Debug for PsiKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PsiKind::Projected => f.write_str("Projected"),
            PsiKind::ConstantOne => f.write_str("ConstantOne"),
            PsiKind::Custom(_) => f.write_str("Custom(..)"),
        }
    }
}

#[derive(Debug, Clone)]
pub struct FlowConfig {
    pub alpha: f64,
    pub kappa: Kappa,
    pub psi_kind: PsiKind,
    /// `ψ` must stay in `[1/A, A]`; `None` derives `A` from the initial body.
    pub psi_bound_a: Option<f64>,
    pub cfl_safety: f64,
    /// Integration stops once `r₊` drops below this.
    pub extinction_radius: f64,
    pub max_steps: usize,
    /// Step halvings allowed after a convexity failure.
    pub max_retries: u32,
    /// Re-project once `r₊` exceeds this fraction of the distance to the chart boundary.
    pub recenter_threshold: f64,
    /// The restart snapshot is taken when `r₊` first falls below this fraction of its initial value.
    pub restart_fraction: f64,
}

impl FlowConfig {
    pub fn new(alpha: f64, kappa: Kappa) -> Self {
        FlowConfig {
            alpha,
            kappa,
            psi_kind: if kappa == Kappa::Flat {
                PsiKind::ConstantOne
            } else {
                PsiKind::Projected
            },
            psi_bound_a: None,
            cfl_safety: 0.25,
            extinction_radius: 1e-3,
            max_steps: 20_000_000,
            max_retries: 8,
            recenter_threshold: 0.5,
            restart_fraction: 0.1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |key: &str, msg: &str| Err(FlowError::config(key, 0, msg));
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return bad("alpha", "must be positive and finite");
        }
        if let Some(a) = self.psi_bound_a {
            if !(a >= 1.0) {
                return bad("psi_bound_a", "must be at least 1");
            }
        }
        if !(self.cfl_safety > 0.0 && self.cfl_safety.is_finite()) {
            return bad("cfl_safety", "must be positive");
        }
        if !(self.extinction_radius > 0.0) {
            return bad("extinction_radius", "must be positive");
        }
        if !(self.recenter_threshold > 0.0 && self.recenter_threshold < 1.0) {
            return bad("recenter_threshold", "must lie in (0, 1)");
        }
        if !(self.restart_fraction > 0.0 && self.restart_fraction < 1.0) {
            return bad("restart_fraction", "must lie in (0, 1)");
        }
        Ok(())
    }

    /// Copy with `psi_bound_a` filled in from the body `u` when unset.
    pub fn resolved_for(&self, u: &SupportField) -> Result<FlowConfig> {
        self.validate()?;
        let mut out = self.clone();
        if out.psi_bound_a.is_none() && matches!(out.psi_kind, PsiKind::Projected) {
            let d = u.derivatives();
            let r = max_radius(u.values(), &d.d1);
            out.psi_bound_a = Some(psi_bound_for(self.kappa, u.n(), self.alpha, r)?);
        }
        Ok(out)
    }
}

/// Twice the extreme value of the projected `ψ` over bodies inside the ball of radius `r_max`.
///
/// Writing `ψ = (1+κu²)·((1+κ|X|²)/(1+κu²))^(a+1/2)` with `a = (n+2)α/2` and
/// `u ≤ |X| ≤ r_max` gives `1 ≤ ψ ≤ (1+r²)^(a+3/2)` for κ = 1 and the
/// reciprocal bound for κ = -1.
pub fn psi_bound_for(kappa: Kappa, n: usize, alpha: f64, r_max: f64) -> Result<f64> {
    let e = (n as f64 + 2.0) * alpha / 2.0 + 1.5;
    match kappa {
        Kappa::Flat => Ok(1.0),
        Kappa::Sphere => Ok(2.0 * (1.0 + r_max * r_max).powf(e)),
        Kappa::Hyperbolic => {
            if r_max >= 1.0 {
                return Err(FlowError::OutOfDomain(format!(
                    "body reaches radius {r_max} outside the unit ball"
                )));
            }
            Ok(2.0 * (1.0 - r_max * r_max).powf(-e))
        }
    }
}

fn psi_point(cfg: &FlowConfig, n: usize, u: f64, g: f64, x: Point2, scale: f64) -> Result<f64> {
    match &cfg.psi_kind {
        PsiKind::ConstantOne => Ok(1.0),
        PsiKind::Custom(f) => Ok(f(u, g, x)),
        PsiKind::Projected => {
            if cfg.kappa == Kappa::Flat {
                return Ok(1.0);
            }
            let k = cfg.kappa.value() * scale;
            let a = (n as f64 + 2.0) * cfg.alpha / 2.0;
            let top = 1.0 + k * (u * u + g);
            let bottom = 1.0 + k * u * u;
            if !(top > 0.0 && bottom > 0.0) {
                return Err(FlowError::OutOfDomain(format!(
                    "psi bases {top:e}, {bottom:e} not positive"
                )));
            }
            Ok(top.powf(a + 0.5) * bottom.powf(0.5 - a))
        }
    }
}

/// Pointwise `ψ`; `t_rescale = Some(t)` scales the arguments by `e^(-2t)`
/// as in the normalized flow.
pub fn eval_psi(
    u: &SupportField,
    grad_u_sq: &[f64],
    cfg: &FlowConfig,
    t_rescale: Option<f64>,
) -> Result<Vec<f64>> {
    let scale = t_rescale.map_or(1.0, |t| (-2.0 * t).exp());
    let grid = u.grid();
    let mut out = Vec::with_capacity(u.len());
    for i in 0..u.len() {
        let p = psi_point(cfg, u.n(), u.values()[i], grad_u_sq[i], grid.normal(i), scale)?;
        if !p.is_finite() {
            return Err(FlowError::NonFinite("psi"));
        }
        if let Some(a) = cfg.psi_bound_a {
            if !(p >= 1.0 / a && p <= a) {
                return Err(FlowError::PsiBoundViolated {
                    index: i,
                    value: p,
                    bound: a,
                });
            }
        }
        out.push(p);
    }
    Ok(out)
}

/// Derivatives, curvature and speed of one support field.
#[derive(Debug, Clone)]
pub(crate) struct Evaluation {
    pub d: Derivatives,
    pub curv: CurvatureField,
    pub psi: Vec<f64>,
    /// `ψ K^α`.
    pub speed: Vec<f64>,
}

pub(crate) fn evaluate(u: &SupportField, cfg: &FlowConfig, t_rescale: Option<f64>) -> Result<Evaluation> {
    let d = u.derivatives();
    let curv = weingarten_from(u, &d)?;
    let g: Vec<f64> = d.d1.iter().map(|v| v * v).collect();
    let psi = eval_psi(u, &g, cfg, t_rescale)?;
    let speed = psi
        .iter()
        .zip(&curv.sigma_n)
        .map(|(p, s)| p * k_pow(*s, cfg.alpha))
        .collect();
    Ok(Evaluation { d, curv, psi, speed })
}

/// `K^α = σ^(-α)`.
pub(crate) fn k_pow(sigma: f64, alpha: f64) -> f64 {
    if alpha == 1.0 {
        1.0 / sigma
    } else {
        sigma.powf(-alpha)
    }
}

/// Right-hand side `-ψ K^α`.
pub fn flow_rhs(u: &SupportField, cfg: &FlowConfig) -> Result<Vec<f64>> {
    Ok(evaluate(u, cfg, None)?.speed.iter().map(|s| -s).collect())
}

/// Diffusive and advective step limits; `speed_scale` divides the speed
/// (the normalized flow passes its nonlocal mean).
pub(crate) fn cfl_from(
    u: &SupportField,
    ev: &Evaluation,
    cfg: &FlowConfig,
    point: Point2,
    speed_scale: f64,
) -> f64 {
    let h = u.grid().spacing();
    let lam_min = ev.curv.min_radius_per_point();
    let mut diff = 0.0_f64;
    let mut adv = f64::INFINITY;
    for i in 0..u.len() {
        let s = ev.speed[i] / speed_scale;
        diff = diff.max(cfg.alpha * s / lam_min[i]);
        let uc = (u.values()[i] - dot2(point, u.grid().normal(i))).abs();
        adv = adv.min(uc / s / 10.0);
    }
    cfg.cfl_safety * (h * h / diff).min(adv)
}

/// Current state of an unnormalized run.
#[derive(Debug, Clone)]
pub struct FlowState {
    pub field: SupportField,
    pub tau: f64,
    pub step_count: usize,
    /// Radii are measured about the Steiner point.
    pub geometry: BodyGeometry,
    pub k_min: f64,
    pub k_max: f64,
    pub psi_min: f64,
    pub psi_max: f64,
    /// Chart of `field` relative to the initial projection.
    pub frame: Frame,
    pub last_dt: f64,
    /// Consecutive steps that had to be shortened after convexity loss.
    pub retry_streak: u32,
    pub(crate) eval: Evaluation,
}

impl FlowState {
    pub fn new(field: SupportField, cfg: &FlowConfig) -> Result<Self> {
        Self::with_frame(field, 0.0, Frame::identity(cfg.kappa), cfg)
    }

    pub fn with_frame(field: SupportField, tau: f64, frame: Frame, cfg: &FlowConfig) -> Result<Self> {
        let eval = evaluate(&field, cfg, None)?;
        Self::from_eval(field, eval, tau, 0, frame, 0.0)
    }

    fn from_eval(
        field: SupportField,
        eval: Evaluation,
        tau: f64,
        step_count: usize,
        frame: Frame,
        last_dt: f64,
    ) -> Result<Self> {
        let s = crate::sphere::steiner_point(&field)?;
        let geometry = geometry_from(&field, &eval.d, &eval.curv, s)?;
        let (k_min, k_max) = min_max(&eval.curv.gauss_k);
        let (psi_min, psi_max) = min_max(&eval.psi);
        Ok(FlowState {
            field,
            tau,
            step_count,
            geometry,
            k_min,
            k_max,
            psi_min,
            psi_max,
            frame,
            last_dt,
            retry_streak: 0,
            eval,
        })
    }

    /// `r₊² / r₋`.
    pub fn pinching(&self) -> f64 {
        self.geometry.r_plus * self.geometry.r_plus / self.geometry.r_minus
    }

    pub fn trace_row(&self) -> FlowTraceRow {
        FlowTraceRow {
            tau: self.tau,
            volume: self.geometry.volume,
            r_minus: self.geometry.r_minus,
            r_plus: self.geometry.r_plus,
            k_min: self.k_min,
            k_max: self.k_max,
            pinching: self.pinching(),
            dt: self.last_dt,
        }
    }

    pub fn mean_psi(&self) -> f64 {
        self.eval.psi.iter().sum::<f64>() / self.eval.psi.len() as f64
    }
}

pub(crate) fn min_max(v: &[f64]) -> (f64, f64) {
    v.iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &x| (a.min(x), b.max(x)))
}

/// Stable step size for `state`.
pub fn cfl(state: &FlowState, cfg: &FlowConfig) -> f64 {
    cfl_from(
        &state.field,
        &state.eval,
        cfg,
        state.geometry.steiner_point,
        1.0,
    )
}

fn axpy(u: &[f64], c: f64, k: &[f64]) -> Vec<f64> {
    u.iter().zip(k).map(|(a, b)| a - c * b).collect()
}

fn rk4(state: &FlowState, cfg: &FlowConfig, dt: f64) -> Result<FlowState> {
    let u = state.field.values();
    let k1 = &state.eval.speed;
    let e2 = evaluate(&state.field.with_values(axpy(u, 0.5 * dt, k1)), cfg, None)?;
    let e3 = evaluate(&state.field.with_values(axpy(u, 0.5 * dt, &e2.speed)), cfg, None)?;
    let e4 = evaluate(&state.field.with_values(axpy(u, dt, &e3.speed)), cfg, None)?;
    let next: Vec<f64> = (0..u.len())
        .map(|i| u[i] - dt / 6.0 * (k1[i] + 2.0 * e2.speed[i] + 2.0 * e3.speed[i] + e4.speed[i]))
        .collect();
    let field = SupportField::new(Arc::clone(state.field.grid()), next, state.field.center())?;
    let eval = evaluate(&field, cfg, None)?;
    FlowState::from_eval(
        field,
        eval,
        state.tau + dt,
        state.step_count + 1,
        state.frame.clone(),
        dt,
    )
}

/// One RK4 step at the CFL step size.
pub fn step(state: &FlowState, cfg: &FlowConfig) -> Result<FlowState> {
    step_with(state, cfg, cfl(state, cfg))
}

/// One RK4 step of size at most `dt`, halving on convexity loss.
pub fn step_with(state: &FlowState, cfg: &FlowConfig, dt: f64) -> Result<FlowState> {
    let mut dt = dt;
    let mut attempt = 0;
    let mut last_loss = None;
    loop {
        if !(dt > 0.0) || state.tau + dt == state.tau {
            return Err(FlowError::StalledFlow {
                tau: state.tau,
                reason: format!("time step {dt:e} underflows"),
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

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FlowTraceRow {
    pub tau: f64,
    pub volume: f64,
    pub r_minus: f64,
    pub r_plus: f64,
    pub k_min: f64,
    pub k_max: f64,
    pub pinching: f64,
    pub dt: f64,
}

pub const FLOW_TRACE_HEADER: &str = "tau,volume,r_minus,r_plus,k_min,k_max,pinching,dt";

impl FlowTraceRow {
    pub fn values(&self) -> [f64; 8] {
        [
            self.tau,
            self.volume,
            self.r_minus,
            self.r_plus,
            self.k_min,
            self.k_max,
            self.pinching,
            self.dt,
        ]
    }
}

/// Body captured shortly before extinction, used to start the normalized flow.
#[derive(Debug, Clone)]
pub struct RestartSnapshot {
    pub field: SupportField,
    pub tau: f64,
    pub frame: Frame,
}

#[derive(Debug, Clone)]
pub struct ExtinctionReport {
    pub t_star: f64,
    /// Limit point in ambient coordinates (see [`Frame::ambient_point`]).
    pub extinction_point: Vec<f64>,
    pub pinching_max: f64,
    pub restarts: usize,
    pub restart: Option<RestartSnapshot>,
    pub final_state: FlowState,
}

/// Whether the body has drifted far enough from the chart origin to re-project.
pub(crate) fn needs_recenter(kappa: Kappa, s: Point2, r_plus: f64, threshold: f64) -> bool {
    let ds = norm2(s);
    if ds <= 0.05 * r_plus {
        return false;
    }
    if ds > r_plus {
        return true;
    }
    let ratio = match kappa {
        Kappa::Flat => 0.0,
        Kappa::Hyperbolic => r_plus / (1.0 - ds),
        Kappa::Sphere => ((ds + r_plus).atan() - ds.atan()) / (FRAC_PI_2 - ds.atan()),
    };
    ratio > threshold
}

fn recentered(state: &FlowState, cfg: &FlowConfig) -> Result<Option<FlowState>> {
    let s = state.geometry.steiner_point;
    if !needs_recenter(cfg.kappa, s, state.geometry.r_plus, cfg.recenter_threshold) {
        return Ok(None);
    }
    let field = recenter(&state.field, cfg.kappa, s)?;
    let mut next = FlowState::with_frame(field, state.tau, state.frame.shifted(s), cfg)?;
    next.step_count = state.step_count;
    next.retry_streak = state.retry_streak;
    next.last_dt = state.last_dt;
    Ok(Some(next))
}

/// Steps until `stop` holds or `tau_target` is reached, recentering as
/// needed and appending one trace row per accepted step.
fn drive(
    mut state: FlowState,
    cfg: &FlowConfig,
    tau_target: Option<f64>,
    trace: &mut Vec<FlowTraceRow>,
    mut on_step: impl FnMut(&FlowState) -> bool,
    restarts: &mut usize,
) -> Result<FlowState> {
    loop {
        if on_step(&state) {
            return Ok(state);
        }
        if let Some(t) = tau_target {
            if state.tau >= t {
                return Ok(state);
            }
        }
        if state.step_count >= cfg.max_steps {
            return Err(FlowError::StalledFlow {
                tau: state.tau,
                reason: format!("step limit {} reached", cfg.max_steps),
            });
        }
        if let Some(next) = recentered(&state, cfg)? {
            state = next;
            *restarts += 1;
        }
        let mut dt = cfl(&state, cfg);
        if let Some(t) = tau_target {
            dt = dt.min(t - state.tau);
        }
        state = step_with(&state, cfg, dt)?;
        if tau_target.is_some_and(|t| (state.tau - t).abs() <= 1e-14 * t.abs().max(1.0)) {
            state.tau = tau_target.unwrap_or(state.tau);
        }
        trace.push(state.trace_row());
    }
}

/// Integrates until `tau_target` (exactly) or extinction, whichever comes first.
pub fn advance_to(
    state: FlowState,
    cfg: &FlowConfig,
    tau_target: f64,
    trace: &mut Vec<FlowTraceRow>,
) -> Result<FlowState> {
    let rx = cfg.extinction_radius;
    let mut restarts = 0;
    drive(
        state,
        cfg,
        Some(tau_target),
        trace,
        |s| s.geometry.r_plus < rx,
        &mut restarts,
    )
}

/// Runs the flow from `u0` until `r₊ < extinction_radius` and extrapolates
/// the remaining time with the centred-sphere law.
pub fn run_to_extinction(
    u0: &SupportField,
    cfg: &FlowConfig,
) -> Result<(ExtinctionReport, Vec<FlowTraceRow>)> {
    let cfg = cfg.resolved_for(u0)?;
    let state = FlowState::new(u0.clone(), &cfg)?;
    let r0 = state.geometry.r_plus;
    let mut trace = vec![state.trace_row()];
    let mut restart: Option<RestartSnapshot> = None;
    let mut restarts = 0;
    let rx = cfg.extinction_radius;
    let frac = cfg.restart_fraction;
    let last = drive(
        state,
        &cfg,
        None,
        &mut trace,
        |s| {
            if restart.is_none() && s.geometry.r_plus < frac * r0 {
                restart = Some(RestartSnapshot {
                    field: s.field.clone(),
                    tau: s.tau,
                    frame: s.frame.clone(),
                });
            }
            s.geometry.r_plus < rx
        },
        &mut restarts,
    )?;
    let na1 = last.field.n() as f64 * cfg.alpha + 1.0;
    let t_star = last.tau + last.geometry.r_plus.powf(na1) / (na1 * last.mean_psi());
    let extinction_point = last
        .frame
        .ambient_point(last.field.dim(), last.geometry.steiner_point)?;
    let report = ExtinctionReport {
        t_star,
        extinction_point,
        pinching_max: pinching_diagnostic(&trace)?,
        restarts,
        restart,
        final_state: last,
    };
    Ok((report, trace))
}

/// Largest `r₊²/r₋` along a trace.
pub fn pinching_diagnostic(trace: &[FlowTraceRow]) -> Result<f64> {
    if trace.is_empty() {
        return Err(FlowError::InsufficientData { needed: 1, got: 0 });
    }
    Ok(trace.iter().fold(f64::NEG_INFINITY, |m, r| m.max(r.pinching)))
}
