//! Acceptance suite. Runs every criterion at its pinned tolerance, prints one
//! PASS/FAIL line per criterion followed by the measured values, and exits
//! non-zero when any criterion fails.

use std::f64::consts::{FRAC_PI_3, PI};
use std::fmt::Write as _;
use std::process::ExitCode;
use std::thread;
use std::time::Instant;

use gaussflow::entropy::entropy_point;
use gaussflow::flow::{advance_to, run_to_extinction, FlowConfig, FlowState, FlowTraceRow};
use gaussflow::normalized::{
    decay_exponent_fit, restart_from_extinction, run_normalized, unnormalized_radii, NormalizedRun,
    NormalizedRunConfig, NormalizedState,
};
use gaussflow::reference::sphere_ode;
use gaussflow::spaceform::{
    gauss_curvature_spaceform_graph, gauss_curvature_via_projection, Ambient, Frame, Kappa, RadialGraph,
};
use gaussflow::sphere::{Dim, SupportField};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

// Tolerances.
const CIRCLE_TSTAR_TOL: f64 = 1e-3;
const CIRCLE_FIELD_TOL: f64 = 1e-5;
const SPHERE_TSTAR_TOL: f64 = 2e-3;
const ROUTE_ORDER: f64 = 4.0;
const ROUTE_ORDER_TOL: f64 = 0.4;
const ROUTE_SAMPLES: usize = 20;
const ROUNDNESS_TOL: f64 = 1e-3;
const RESIDUAL_TOL: f64 = 1e-4;
const FLAT_VIOLATION_TOL: f64 = 1e-10;
const CURVED_VIOLATION_TOL: f64 = 1e-8;
const DECAY_FIT_TOL: f64 = 0.05;
const ECCENTRICITY_DRIFT_TOL: f64 = 0.01;
const RESIDUAL_VARIATION_TOL: f64 = 0.05;
const PINCHING_GROWTH: f64 = 10.0;
const ENTROPY_POINT_TOL: f64 = 1e-6;
const ENTROPY_VALUE_TOL: f64 = 1e-8;
const VOLUME_TOL: f64 = 1e-6;

/// Outcome of one criterion: overall verdict plus one line per measurement.
struct Verdict {
    pass: bool,
    lines: Vec<String>,
}

impl Verdict {
    fn new() -> Self {
        Verdict {
            pass: true,
            lines: Vec::new(),
        }
    }

    fn check(&mut self, ok: bool, what: impl Into<String>) {
        self.pass &= ok;
        self.lines.push(format!("{} {}", if ok { "ok  " } else { "FAIL" }, what.into()));
    }

    fn error(&mut self, what: &str, e: impl std::fmt::Display) {
        self.check(false, format!("{what}: {e}"));
    }
}

fn pinching_growth(rows: &[FlowTraceRow]) -> f64 {
    let p0 = rows[0].pinching;
    rows.iter().map(|r| r.pinching).fold(0.0, f64::max) / p0
}

/// Unnormalized pinching `r₊²/r₋` along a normalized run, relative to its start.
fn normalized_pinching_growth(run: &NormalizedRun) -> f64 {
    let (rm, rp, _) = unnormalized_radii(&run.trace);
    let p: Vec<f64> = rm.iter().zip(&rp).map(|(a, b)| b * b / a).collect();
    p.iter().fold(0.0, |m: f64, v| m.max(*v)) / p[0]
}

struct FlowCase {
    label: String,
    pinching: f64,
}

struct NormalizedCase {
    label: &'static str,
    kappa: Kappa,
    n: usize,
    alpha: f64,
    /// Extinction phase preceding a curved restart.
    extinction: Option<FlowCase>,
    run: Result<NormalizedRun, String>,
    seconds: f64,
}

impl NormalizedCase {
    fn flat(label: &'static str, u: SupportField, alpha: f64, duration: f64) -> Self {
        let clock = Instant::now();
        let n = u.n();
        let cfg = FlowConfig::new(alpha, Kappa::Flat);
        let rc = NormalizedRunConfig {
            duration,
            ..Default::default()
        };
        let run = NormalizedState::new(u, 0.0, 0.0, Frame::identity(Kappa::Flat), &cfg)
            .and_then(|st| run_normalized(st, &cfg, &rc))
            .map_err(|e| e.to_string());
        NormalizedCase {
            label,
            kappa: Kappa::Flat,
            n,
            alpha,
            extinction: None,
            run,
            seconds: clock.elapsed().as_secs_f64(),
        }
    }

    /// Unnormalized flow to near extinction, then ten units of normalized time.
    fn curved(label: &'static str, kappa: Kappa, u: SupportField) -> Self {
        let clock = Instant::now();
        let n = u.n();
        let cfg = FlowConfig::new(1.0, kappa);
        let mut extinction = None;
        let run = (|| {
            let (rep, rows) = run_to_extinction(&u, &cfg)?;
            extinction = Some(FlowCase {
                label: format!("{label} extinction phase"),
                pinching: pinching_growth(&rows),
            });
            let st = restart_from_extinction(&rep, &cfg)?;
            let rcfg = cfg.resolved_for(&st.unnormalized())?;
            run_normalized(st, &rcfg, &NormalizedRunConfig::default())
        })()
        .map_err(|e| e.to_string());
        NormalizedCase {
            label,
            kappa,
            n,
            alpha: 1.0,
            extinction,
            run,
            seconds: clock.elapsed().as_secs_f64(),
        }
    }
}

struct Shared {
    converge: Vec<NormalizedCase>,
    affine: NormalizedCase,
}

fn shared_runs() -> Shared {
    thread::scope(|s| {
        let flat = |label, dim, len, alpha| {
            s.spawn(move || NormalizedCase::flat(label, SupportField::ellipse(dim, len, 2.0, 1.0).unwrap(), alpha, 10.0))
        };
        let handles = vec![
            flat("flat ellipse alpha=1", Dim::Circle, 256, 1.0),
            flat("flat ellipse alpha=0.5", Dim::Circle, 256, 0.5),
            flat("flat ellipse alpha=2", Dim::Circle, 256, 2.0),
            flat("flat spheroid n=2 alpha=1", Dim::Axisymmetric, 128, 1.0),
            s.spawn(|| {
                let u = SupportField::ellipse(Dim::Circle, 256, 0.4, 0.2).unwrap().translated([0.2, 0.1]);
                NormalizedCase::curved("spherical restart", Kappa::Sphere, u)
            }),
            s.spawn(|| {
                let u = SupportField::ellipse(Dim::Circle, 256, 0.4, 0.2).unwrap().translated([0.2, 0.1]);
                NormalizedCase::curved("hyperbolic restart", Kappa::Hyperbolic, u)
            }),
        ];
        let affine = s.spawn(|| {
            NormalizedCase::flat(
                "flat ellipse alpha=1/3",
                SupportField::ellipse(Dim::Circle, 256, 2.0, 1.0).unwrap(),
                1.0 / 3.0,
                5.0,
            )
        });
        Shared {
            converge: handles.into_iter().map(|h| h.join().unwrap()).collect(),
            affine: affine.join().unwrap(),
        }
    })
}

fn circle_collapse(v: &mut Verdict, flows: &mut Vec<FlowCase>) {
    let u = SupportField::ball(Dim::Circle, 256, 1.0).unwrap();
    let cfg = FlowConfig::new(1.0, Kappa::Flat);
    match run_to_extinction(&u, &cfg) {
        Ok((rep, rows)) => {
            let err = (rep.t_star - 0.5).abs();
            v.check(err <= CIRCLE_TSTAR_TOL, format!("|T* - 0.5| = {err:.3e} (tol {CIRCLE_TSTAR_TOL:e})"));
            flows.push(FlowCase {
                label: "unit circle".into(),
                pinching: pinching_growth(&rows),
            });
        }
        Err(e) => v.error("circle extinction", e),
    }
    let mut rows = Vec::new();
    let st = FlowState::new(u, &cfg).and_then(|st| advance_to(st, &cfg, 0.4, &mut rows));
    match st {
        Ok(st) => {
            let r = (1.0_f64 - 0.8).sqrt();
            let err = st.field.values().iter().map(|h| (h - r).abs()).fold(0.0, f64::max);
            v.check(
                err <= CIRCLE_FIELD_TOL,
                format!("max |u - sqrt(1 - 2 tau)| at tau = 0.4: {err:.3e} (tol {CIRCLE_FIELD_TOL:e})"),
            );
        }
        Err(e) => v.error("advance to tau = 0.4", e),
    }
}

fn geodesic_ball_extinction(kappa: Kappa, rho0: f64) -> gaussflow::Result<(f64, f64, Vec<FlowTraceRow>)> {
    let r = match kappa {
        Kappa::Sphere => rho0.tan(),
        Kappa::Hyperbolic => rho0.tanh(),
        Kappa::Flat => rho0,
    };
    let u = SupportField::ball(Dim::Circle, 256, r)?;
    let (rep, rows) = run_to_extinction(&u, &FlowConfig::new(1.0, kappa))?;
    let oracle = sphere_ode(kappa, 1, 1.0, rho0)?;
    Ok((rep.t_star, oracle.t_star, rows))
}

fn spaceform_spheres(v: &mut Verdict, flows: &mut Vec<FlowCase>) {
    match geodesic_ball_extinction(Kappa::Sphere, FRAC_PI_3) {
        Ok((t, _, rows)) => {
            let err = (t - 2.0_f64.ln()).abs();
            v.check(
                err <= SPHERE_TSTAR_TOL,
                format!("spherical rho0 = pi/3: T* = {t:.6}, |T* - ln 2| = {err:.3e} (tol {SPHERE_TSTAR_TOL:e})"),
            );
            flows.push(FlowCase {
                label: "spherical geodesic disc".into(),
                pinching: pinching_growth(&rows),
            });
        }
        Err(e) => v.error("spherical disc", e),
    }
    match geodesic_ball_extinction(Kappa::Hyperbolic, 0.8) {
        Ok((t, oracle, rows)) => {
            let err = (t - oracle).abs();
            v.check(
                err <= SPHERE_TSTAR_TOL,
                format!("hyperbolic rho0 = 0.8: T* = {t:.6}, oracle {oracle:.6}, gap {err:.3e} (tol {SPHERE_TSTAR_TOL:e})"),
            );
            flows.push(FlowCase {
                label: "hyperbolic geodesic disc".into(),
                pinching: pinching_growth(&rows),
            });
        }
        Err(e) => v.error("hyperbolic disc", e),
    }
}

/// Smooth convex perturbation of a geodesic circle.
struct RandomGraph {
    rho0: f64,
    modes: Vec<(f64, f64, f64)>,
}

impl RandomGraph {
    fn draw(rng: &mut ChaCha8Rng) -> Self {
        let rho0 = rng.gen_range(0.3..0.9);
        let modes = (2..=6)
            .map(|k| {
                let k = k as f64;
                (rng.gen_range(-0.08..0.08) * rho0 / (k * k), k, rng.gen_range(0.0..2.0 * PI))
            })
            .collect();
        RandomGraph { rho0, modes }
    }

    fn on(&self, kappa: Kappa, len: usize) -> gaussflow::Result<RadialGraph> {
        RadialGraph::from_fn(Ambient::Spaceform(kappa), Dim::Circle, len, |x| {
            let th = x[1].atan2(x[0]);
            self.rho0 + self.modes.iter().map(|(c, k, p)| c * (k * th + p).cos()).sum::<f64>()
        })
    }
}

fn route_gap(g: &RadialGraph) -> gaussflow::Result<(f64, f64)> {
    let direct = gauss_curvature_spaceform_graph(g)?;
    let routed = gauss_curvature_via_projection(g)?;
    let gap = direct.iter().zip(&routed).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    let k_min = direct.iter().copied().fold(f64::INFINITY, f64::min);
    Ok((gap, k_min))
}

fn curvature_routes(v: &mut Verdict) {
    let mut rng = ChaCha8Rng::seed_from_u64(20_240_601);
    for kappa in [Kappa::Sphere, Kappa::Hyperbolic] {
        let mut orders = Vec::new();
        let mut convex = true;
        for _ in 0..ROUTE_SAMPLES {
            let body = RandomGraph::draw(&mut rng);
            let gaps: gaussflow::Result<Vec<(f64, f64)>> =
                [128, 256, 512].iter().map(|&len| body.on(kappa, len).and_then(|g| route_gap(&g))).collect();
            match gaps {
                Ok(g) => {
                    convex &= g.iter().all(|(_, k)| *k > 0.0);
                    orders.push((g[0].0 / g[1].0).log2());
                    orders.push((g[1].0 / g[2].0).log2());
                }
                Err(e) => v.error(&format!("{kappa:?} graph"), e),
            }
        }
        let lo = orders.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = orders.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        v.check(convex, format!("{kappa:?}: all {ROUTE_SAMPLES} graphs strictly convex"));
        v.check(
            (lo - ROUTE_ORDER).abs() <= ROUTE_ORDER_TOL && (hi - ROUTE_ORDER).abs() <= ROUTE_ORDER_TOL,
            format!("{kappa:?}: observed orders in [{lo:.3}, {hi:.3}] (want {ROUTE_ORDER} +- {ROUTE_ORDER_TOL})"),
        );
    }
}

fn normalized_convergence(v: &mut Verdict, shared: &Shared) {
    for case in &shared.converge {
        match &case.run {
            Ok(run) => {
                let f = &run.final_state;
                v.check(
                    run.converged && f.roundness <= ROUNDNESS_TOL && f.soliton_residual <= RESIDUAL_TOL,
                    format!(
                        "{}: t = {:.3}, roundness {:.3e}, soliton residual {:.3e}, converged at {} ({:.1} s)",
                        case.label,
                        f.t,
                        f.roundness,
                        f.soliton_residual,
                        run.converged_at.map_or("never".into(), |t| format!("t = {t:.3}")),
                        case.seconds
                    ),
                );
            }
            Err(e) => v.error(case.label, e),
        }
    }
}

fn all_cases(shared: &Shared) -> impl Iterator<Item = &NormalizedCase> {
    shared.converge.iter().chain(std::iter::once(&shared.affine))
}

fn monotone_quantity(v: &mut Verdict, shared: &Shared) {
    for case in all_cases(shared) {
        let Ok(run) = &case.run else {
            v.check(false, format!("{}: run failed", case.label));
            continue;
        };
        let Some(fit) = run.monotone else {
            v.check(false, format!("{}: no entropy trace", case.label));
            continue;
        };
        if case.kappa == Kappa::Flat {
            let e: Vec<f64> = run.trace.iter().map(|r| r.entropy).filter(|e| e.is_finite()).collect();
            let rise = e.windows(2).map(|w| w[1] - w[0]).fold(f64::NEG_INFINITY, f64::max);
            v.check(
                fit.c_fit == 0.0 && fit.max_violation <= FLAT_VIOLATION_TOL && rise <= FLAT_VIOLATION_TOL,
                format!(
                    "{}: C_fit = {:e}, max violation {:.3e}, largest per-step change {rise:.3e} (tol {FLAT_VIOLATION_TOL:e})",
                    case.label, fit.c_fit, fit.max_violation
                ),
            );
        } else {
            v.check(
                fit.c_fit.is_finite() && fit.max_violation <= CURVED_VIOLATION_TOL,
                format!(
                    "{}: C_fit = {:e} from t0 = {:.3}, max violation {:.3e} (tol {CURVED_VIOLATION_TOL:e})",
                    case.label, fit.c_fit, fit.t0_fit, fit.max_violation
                ),
            );
        }
    }
}

fn decay_bracket(v: &mut Verdict, shared: &Shared) {
    for case in all_cases(shared) {
        let Ok(run) = &case.run else {
            v.check(false, format!("{}: run failed", case.label));
            continue;
        };
        let n = case.n as f64;
        let lo = -2.0 * (n + 1.0) / (n + 2.0) - DECAY_FIT_TOL;
        let hi = -(n + 1.0) / (2.0 * n + 1.0) + DECAY_FIT_TOL;
        let (rm, rp, t) = unnormalized_radii(&run.trace);
        match decay_exponent_fit(&rm, &rp, &t) {
            Ok((a, b)) => v.check(
                (lo..=hi).contains(&a) && (lo..=hi).contains(&b),
                format!("{}: slopes {a:.4} (inner), {b:.4} (outer); bracket [{lo:.4}, {hi:.4}]", case.label),
            ),
            Err(e) => v.error(case.label, e),
        }
    }
}

fn eccentricity(aspect: f64) -> f64 {
    (1.0 - 1.0 / (aspect * aspect)).max(0.0).sqrt()
}

fn affine_soliton(v: &mut Verdict, shared: &Shared) {
    let case = &shared.affine;
    let run = match &case.run {
        Ok(r) => r,
        Err(e) => return v.error(case.label, e),
    };
    let tr = &run.trace;
    let e0 = eccentricity(tr[0].aspect);
    let drift = tr.iter().map(|r| (eccentricity(r.aspect) - e0).abs() / e0).fold(0.0, f64::max);
    v.check(
        drift <= ECCENTRICITY_DRIFT_TOL,
        format!(
            "eccentricity {e0:.6} -> {:.6}, max relative drift {drift:.3e} (tol {ECCENTRICITY_DRIFT_TOL})",
            eccentricity(tr[tr.len() - 1].aspect)
        ),
    );
    let r0 = tr[0].soliton_residual;
    let (lo, hi) = tr
        .iter()
        .fold((f64::INFINITY, 0.0_f64), |(a, b), r| (a.min(r.soliton_residual), b.max(r.soliton_residual)));
    let variation = tr.iter().map(|r| (r.soliton_residual - r0).abs() / r0).fold(0.0, f64::max);
    v.check(
        variation <= RESIDUAL_VARIATION_TOL,
        format!(
            "soliton residual in [{lo:.3e}, {hi:.3e}], start {r0:.3e}, max relative variation {variation:.3e} (tol {RESIDUAL_VARIATION_TOL})"
        ),
    );
}

fn pinching(v: &mut Verdict, shared: &Shared, flows: &[FlowCase]) {
    let curved = shared.converge.iter().filter_map(|c| c.extinction.as_ref());
    for f in flows.iter().chain(curved) {
        v.check(
            f.pinching <= PINCHING_GROWTH,
            format!("{}: max/initial pinching {:.4}", f.label, f.pinching),
        );
    }
    for case in all_cases(shared) {
        match &case.run {
            Ok(run) => {
                let g = normalized_pinching_growth(run);
                v.check(g <= PINCHING_GROWTH, format!("{}: max/initial pinching {g:.4}", case.label));
            }
            Err(_) => v.check(false, format!("{}: run failed", case.label)),
        }
    }
}

fn entropy_oracle(v: &mut Verdict) {
    let u = SupportField::translated_ball(Dim::Circle, 256, 1.0, [0.3, 0.0]).unwrap();
    for alpha in [0.5, 1.0, 3.0] {
        match entropy_point(&u, alpha) {
            Ok((z, e)) => {
                let dz = ((z[0] - 0.3).powi(2) + z[1] * z[1]).sqrt();
                v.check(
                    dz <= ENTROPY_POINT_TOL && e.abs() <= ENTROPY_VALUE_TOL,
                    format!(
                        "alpha = {alpha}: |z - (0.3, 0)| = {dz:.3e} (tol {ENTROPY_POINT_TOL:e}), |E| = {:.3e} (tol {ENTROPY_VALUE_TOL:e})",
                        e.abs()
                    ),
                );
            }
            Err(e) => v.error(&format!("alpha = {alpha}"), e),
        }
    }
}

fn volume_and_ordering(v: &mut Verdict, shared: &Shared) {
    for case in all_cases(shared) {
        match &case.run {
            Ok(run) => v.check(
                run.max_volume_error <= VOLUME_TOL,
                format!(
                    "{} (alpha = {}): max relative volume error {:.3e} (tol {VOLUME_TOL:e})",
                    case.label, case.alpha, run.max_volume_error
                ),
            ),
            Err(_) => v.check(false, format!("{}: run failed", case.label)),
        }
    }
    let t: Vec<gaussflow::Result<f64>> = thread::scope(|s| {
        let hs: Vec<_> = [Kappa::Sphere, Kappa::Flat, Kappa::Hyperbolic]
            .into_iter()
            .map(|kappa| {
                s.spawn(move || {
                    let u = SupportField::ball(Dim::Circle, 256, 0.5)?;
                    run_to_extinction(&u, &FlowConfig::new(1.0, kappa)).map(|(r, _)| r.t_star)
                })
            })
            .collect();
        hs.into_iter().map(|h| h.join().unwrap()).collect()
    });
    match (&t[0], &t[1], &t[2]) {
        (Ok(s), Ok(f), Ok(h)) => v.check(
            s < f && f < h,
            format!("T*: spherical {s:.6} < flat {f:.6} < hyperbolic {h:.6}"),
        ),
        _ => v.check(false, "extinction failed for radius 0.5"),
    }
}

fn main() -> ExitCode {
    let clock = Instant::now();
    let (shared, early) = thread::scope(|s| {
        let shared = s.spawn(shared_runs);
        let mut flows = Vec::new();
        let mut c1 = Verdict::new();
        circle_collapse(&mut c1, &mut flows);
        let mut c2 = Verdict::new();
        spaceform_spheres(&mut c2, &mut flows);
        let mut c3 = Verdict::new();
        curvature_routes(&mut c3);
        let mut c9 = Verdict::new();
        entropy_oracle(&mut c9);
        (shared.join().unwrap(), (c1, c2, c3, c9, flows))
    });
    let (c1, c2, c3, c9, flows) = early;
    let mut c4 = Verdict::new();
    normalized_convergence(&mut c4, &shared);
    let mut c5 = Verdict::new();
    monotone_quantity(&mut c5, &shared);
    let mut c6 = Verdict::new();
    decay_bracket(&mut c6, &shared);
    let mut c7 = Verdict::new();
    affine_soliton(&mut c7, &shared);
    let mut c8 = Verdict::new();
    pinching(&mut c8, &shared, &flows);
    let mut c10 = Verdict::new();
    volume_and_ordering(&mut c10, &shared);

    let criteria = [
        ("circle collapse against the closed form", c1),
        ("geodesic discs against the sphere oracle", c2),
        ("curvature routes agree at fourth order", c3),
        ("normalized flow converges to a round sphere", c4),
        ("corrected entropy is non-increasing", c5),
        ("radius decay rates lie in the bracket", c6),
        ("affine-critical ellipse is stationary", c7),
        ("pinching stays bounded", c8),
        ("entropy point of a translated ball", c9),
        ("volume pinning and extinction-time ordering", c10),
    ];
    let mut summary = String::new();
    let mut details = String::new();
    let mut failed = 0;
    for (k, (name, verdict)) in criteria.iter().enumerate() {
        let tag = if verdict.pass { "PASS" } else { "FAIL" };
        failed += usize::from(!verdict.pass);
        let _ = writeln!(summary, "criterion {:>2} {tag}  {name}", k + 1);
        let _ = writeln!(details, "criterion {:>2}  {name}", k + 1);
        for l in &verdict.lines {
            let _ = writeln!(details, "    {l}");
        }
    }
    println!("\n{details}");
    println!("{summary}");
    println!(
        "acceptance: {} passed, {failed} failed in {:.1} s",
        criteria.len() - failed,
        clock.elapsed().as_secs_f64()
    );
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
