//! Command execution and artifact emission for the `gaussflow` binary.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use crate::config::{parse_args, parse_config, Command, InitialBody, RunConfig};
use crate::entropy::{entropy_lower_bound_check, entropy_point, monotone_quantity_trace, EntropyReport, MONOTONE_SLACK};
use crate::error::{FlowError, Result};
use crate::flow::{advance_to, pinching_diagnostic, run_to_extinction, FlowState, FlowTraceRow, FLOW_TRACE_HEADER};
use crate::io::{csv_string, fmt_f64, parse_csv, write_radial_snapshot};
use crate::normalized::{
    decay_exponent_fit, restart_from_extinction, run_normalized, unnormalized_radii, NormalizedRunConfig,
    NormalizedState, NORMALIZED_TRACE_HEADER,
};
use crate::reference::{projected_sphere_ode, sphere_ode, ORACLE_HEADER};
use crate::spaceform::{
    gauss_curvature_spaceform_graph, gauss_curvature_via_projection, lift, support_to_radial, Frame,
};
use crate::sphere::volume;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Manifest under construction: ordered `key=value` lines.
#[derive(Debug, Default)]
struct Manifest(String);

impl Manifest {
    fn put(&mut self, key: &str, value: impl std::fmt::Display) {
        let _ = writeln!(self.0, "{key}={value}");
    }

    fn num(&mut self, key: &str, v: f64) {
        self.put(key, fmt_f64(v));
    }
}

/// Paths of the files written by a run.
#[derive(Debug, Clone, PartialEq)]
pub struct Artifacts {
    pub dir: PathBuf,
    pub files: Vec<PathBuf>,
}

fn keep_every<T: Copy>(rows: &[T], k: usize) -> Vec<T> {
    let mut out: Vec<T> = rows.iter().step_by(k).copied().collect();
    if (rows.len() - 1) % k != 0 {
        out.push(rows[rows.len() - 1]);
    }
    out
}

/// Gnuplot script plotting columns of `trace.csv` against the first one.
fn plot_script(title: &str, header: &str, columns: &[&str], log_y: bool) -> String {
    let names: Vec<&str> = header.split(',').collect();
    let mut s = String::new();
    let _ = writeln!(s, "set datafile separator ','");
    let _ = writeln!(s, "set key autotitle columnhead");
    let _ = writeln!(s, "set title '{title}'");
    let _ = writeln!(s, "set xlabel '{}'", names[0]);
    if log_y {
        let _ = writeln!(s, "set logscale y");
    }
    let parts: Vec<String> = columns
        .iter()
        .filter_map(|c| names.iter().position(|n| n == c))
        .enumerate()
        .map(|(k, idx)| {
            let file = if k == 0 { "'trace.csv'" } else { "''" };
            format!("{file} using 1:{} with lines", idx + 1)
        })
        .collect();
    let _ = writeln!(s, "plot {}", parts.join(", \\\n     "));
    s
}

struct Output {
    trace: String,
    manifest: Manifest,
    snapshot: Option<String>,
    plot: String,
}

fn write_output(dir: &Path, cfg: &RunConfig, out: Output) -> Result<Artifacts> {
    fs::create_dir_all(dir)?;
    let mut files = Vec::new();
    let mut put = |name: &str, body: &str| -> Result<()> {
        let p = dir.join(name);
        fs::write(&p, body)?;
        files.push(p);
        Ok(())
    };
    put("trace.csv", &out.trace)?;
    let mut manifest = format!("gaussflow.version={VERSION}\n");
    manifest.push_str(&cfg.echo());
    manifest.push_str(&out.manifest.0);
    put("manifest.txt", &manifest)?;
    if let Some(s) = &out.snapshot {
        put("snapshot.txt", s)?;
    }
    put("plot.gp", &out.plot)?;
    Ok(Artifacts {
        dir: dir.to_path_buf(),
        files,
    })
}

fn flow_rows(rows: &[FlowTraceRow], every: usize) -> String {
    let kept = keep_every(rows, every);
    csv_string(FLOW_TRACE_HEADER, kept.iter().map(|r| r.values()))
}

fn run_flow(cfg: &RunConfig) -> Result<Output> {
    let u0 = cfg.initial_field()?;
    let fc = cfg.flow_config().resolved_for(&u0)?;
    let mut m = Manifest::default();
    let (rows, last): (Vec<FlowTraceRow>, FlowState) = match cfg.t_max {
        Some(t) => {
            let st = FlowState::new(u0, &fc)?;
            let mut rows = vec![st.trace_row()];
            let last = advance_to(st, &fc, t, &mut rows)?;
            m.put("result.stopped_at", "t_max");
            (rows, last)
        }
        None => {
            let (rep, rows) = run_to_extinction(&u0, &fc)?;
            m.put("result.stopped_at", "extinction");
            m.num("result.t_star", rep.t_star);
            let pt: Vec<String> = rep.extinction_point.iter().map(|v| fmt_f64(*v)).collect();
            m.put("result.extinction_point", pt.join(" "));
            m.put("result.restarts", rep.restarts);
            (rows, rep.final_state)
        }
    };
    m.num("result.psi_bound_a", fc.psi_bound_a.unwrap_or(1.0));
    m.num("result.tau", last.tau);
    m.put("result.steps", last.step_count);
    m.num("result.pinching_max", pinching_diagnostic(&rows)?);
    m.num("result.pinching_initial", rows[0].pinching);
    m.num("result.volume", last.geometry.volume);
    m.num("result.r_minus", last.geometry.r_minus);
    m.num("result.r_plus", last.geometry.r_plus);
    Ok(Output {
        trace: flow_rows(&rows, cfg.trace_every),
        manifest: m,
        snapshot: Some(crate::io::support_snapshot_string(&last.field)),
        plot: plot_script("unnormalized flow", FLOW_TRACE_HEADER, &["r_minus", "r_plus", "volume"], true),
    })
}

fn run_normalized_cmd(cfg: &RunConfig) -> Result<Output> {
    let u0 = cfg.initial_field()?;
    let fc = cfg.flow_config().resolved_for(&u0)?;
    let mut m = Manifest::default();
    let (init, run_cfg) = if cfg.kappa == crate::spaceform::Kappa::Flat {
        (NormalizedState::from_unnormalized(&u0, 0.0, Frame::identity(fc.kappa), &fc)?, fc.clone())
    } else {
        let (rep, _) = run_to_extinction(&u0, &fc)?;
        m.num("result.t_star", rep.t_star);
        let st = restart_from_extinction(&rep, &fc)?;
        let mut rc = fc.clone();
        rc.psi_bound_a = None;
        let rc = rc.resolved_for(&st.unnormalized())?;
        (st, rc)
    };
    m.num("result.t_start", init.t);
    let rc = NormalizedRunConfig {
        duration: cfg.t_max.unwrap_or(10.0),
        entropy_every: cfg.entropy_every,
        max_steps: cfg.max_steps,
        ..Default::default()
    };
    let run = run_normalized(init, &run_cfg, &rc)?;
    let f = &run.final_state;
    m.put("result.converged", run.converged);
    match run.converged_at {
        Some(t) => m.num("result.converged_at", t),
        None => m.put("result.converged_at", "none"),
    }
    m.num("result.t", f.t);
    m.num("result.tau", f.tau);
    m.put("result.steps", f.step_count);
    m.num("result.roundness", f.roundness);
    m.num("result.soliton_residual", f.soliton_residual);
    m.num("result.max_volume_error", run.max_volume_error);
    m.put("result.recenterings", run.recenterings);
    let (rm, rp, t) = unnormalized_radii(&run.trace);
    if let Ok((a, b)) = decay_exponent_fit(&rm, &rp, &t) {
        m.num("result.decay_slope_minus", a);
        m.num("result.decay_slope_plus", b);
    }
    let samples: Vec<(f64, f64)> = run
        .trace
        .iter()
        .filter(|r| r.entropy.is_finite())
        .map(|r| (r.t, r.entropy))
        .collect();
    if let (Some(z), Some(&(_, value))) = (run.entropy_point, samples.last()) {
        let report = EntropyReport {
            alpha: cfg.alpha,
            value,
            entropy_point: z,
            trace: samples,
            fit: run.monotone,
        };
        m.0.push_str(&report.to_key_values());
    }
    let kept = keep_every(&run.trace, cfg.trace_every);
    Ok(Output {
        trace: csv_string(NORMALIZED_TRACE_HEADER, kept.iter().map(|r| r.values())),
        manifest: m,
        snapshot: Some(crate::io::support_snapshot_string(&f.field)),
        plot: plot_script(
            "normalized flow",
            NORMALIZED_TRACE_HEADER,
            &["roundness", "soliton_residual"],
            true,
        ),
    })
}

fn run_entropy(cfg: &RunConfig) -> Result<Output> {
    let u0 = cfg.initial_field()?;
    let (z, e) = entropy_point(&u0, cfg.alpha)?;
    let b = u0.dim().unit_ball_volume();
    let pinned = u0.scaled((b / volume(&u0)?).powf(1.0 / (u0.n() as f64 + 1.0)));
    let (_, e_norm) = entropy_point(&pinned, cfg.alpha)?;
    let mut m = Manifest::default();
    m.put("result.lower_bound_holds", entropy_lower_bound_check(&pinned, cfg.alpha)?);
    let report = EntropyReport {
        alpha: cfg.alpha,
        value: e,
        entropy_point: z,
        trace: vec![(0.0, e)],
        fit: None,
    };
    m.0.push_str(&report.to_key_values());
    m.num("entropy.value_volume_normalized", e_norm);
    let header = "alpha,entropy,z_1,z_2,entropy_normalized";
    Ok(Output {
        trace: csv_string(header, [[cfg.alpha, e, z[0], z[1], e_norm]]),
        manifest: m,
        snapshot: Some(crate::io::support_snapshot_string(&u0)),
        plot: plot_script("entropy", header, &["entropy"], false),
    })
}

fn run_project(cfg: &RunConfig, dir: &Path) -> Result<Output> {
    let u0 = cfg.initial_field()?;
    let euclid = support_to_radial(&u0)?;
    let graph = lift(&euclid, cfg.kappa)?;
    let direct = gauss_curvature_spaceform_graph(&graph)?;
    let routed = gauss_curvature_via_projection(&graph)?;
    let kmax = direct.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    let gap = direct
        .iter()
        .zip(&routed)
        .fold(0.0_f64, |m, (a, b)| m.max((a - b).abs()))
        / kmax;
    let angles = graph.grid().angles();
    let header = "angle,r,rho,k_direct,k_via_projection";
    let rows: Vec<[f64; 5]> = (0..angles.len())
        .map(|i| [angles[i], euclid.values()[i], graph.values()[i], direct[i], routed[i]])
        .collect();
    let mut m = Manifest::default();
    m.num("result.curvature_route_gap", gap);
    write_radial_snapshot(&dir.join("radial.txt"), &graph)?;
    m.put("result.radial_snapshot", "radial.txt");
    Ok(Output {
        trace: csv_string(header, rows),
        manifest: m,
        snapshot: Some(crate::io::radial_snapshot_string(&graph)),
        plot: plot_script("radial graph", header, &["rho", "k_direct"], false),
    })
}

fn run_oracle(cfg: &RunConfig) -> Result<Output> {
    let sol = match cfg.initial {
        InitialBody::Ball(r) => projected_sphere_ode(cfg.kappa, cfg.n, cfg.alpha, r)?,
        InitialBody::GeoBall(rho) => sphere_ode(cfg.kappa, cfg.n, cfg.alpha, rho)?,
        _ => {
            return Err(FlowError::config(
                "initial",
                0,
                "the oracle needs a centred ball (ball:R or geoball:rho)",
            ))
        }
    };
    let mut m = Manifest::default();
    m.num("result.t_star", sol.t_star);
    m.put("result.radius_kind", format!("{:?}", sol.kind).to_lowercase());
    let table = sol.table(cfg.samples);
    Ok(Output {
        trace: csv_string(ORACLE_HEADER, table.iter().map(|(a, b)| [*a, *b])),
        manifest: m,
        snapshot: Some(crate::io::support_snapshot_string(&cfg.initial_field()?)),
        plot: plot_script("sphere oracle", ORACLE_HEADER, &["radius"], false),
    })
}

fn column<'a>(header: &[String], rows: &'a [Vec<f64>], name: &str) -> Option<Vec<f64>> {
    let k = header.iter().position(|h| h == name)?;
    Some(rows.iter().map(|r: &'a Vec<f64>| r[k]).collect())
}

/// Summarises an existing trace; writes `report.txt` and `plot.gp`.
fn run_report(cfg: &RunConfig) -> Result<Artifacts> {
    let input = cfg
        .input
        .clone()
        .unwrap_or_else(|| cfg.output_dir.join("trace.csv"));
    let text = fs::read_to_string(&input)
        .map_err(|e| FlowError::config("input", 0, format!("{}: {e}", input.display())))?;
    let (header, rows) = parse_csv(&text)?;
    let joined = header.join(",");
    let mut m = Manifest::default();
    m.put("report.input", input.display());
    m.put("report.rows", rows.len());
    let plot;
    if joined == FLOW_TRACE_HEADER {
        m.put("report.kind", "flow");
        let p = column(&header, &rows, "pinching").unwrap_or_default();
        m.num("report.pinching_max", p.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b)));
        if let Some(t) = column(&header, &rows, "tau") {
            m.num("report.tau_final", *t.last().unwrap_or(&0.0));
        }
        plot = plot_script("unnormalized flow", FLOW_TRACE_HEADER, &["r_minus", "r_plus"], true);
    } else if joined == NORMALIZED_TRACE_HEADER {
        m.put("report.kind", "normalized");
        let t = column(&header, &rows, "t").unwrap_or_default();
        let rm = column(&header, &rows, "r_minus").unwrap_or_default();
        let rp = column(&header, &rows, "r_plus").unwrap_or_default();
        let scale: Vec<f64> = t.iter().map(|s| (-s).exp()).collect();
        let rm: Vec<f64> = rm.iter().zip(&scale).map(|(a, b)| a * b).collect();
        let rp: Vec<f64> = rp.iter().zip(&scale).map(|(a, b)| a * b).collect();
        if let Ok((a, b)) = decay_exponent_fit(&rm, &rp, &t) {
            m.num("report.decay_slope_minus", a);
            m.num("report.decay_slope_plus", b);
        }
        let e = column(&header, &rows, "entropy").unwrap_or_default();
        let (et, tt): (Vec<f64>, Vec<f64>) =
            e.iter().zip(&t).filter(|(v, _)| v.is_finite()).map(|(a, b)| (*a, *b)).unzip();
        let n = if cfg.n == 2 { 2 } else { 1 };
        if let Ok(fit) = monotone_quantity_trace(&et, &tt, n, MONOTONE_SLACK) {
            m.num("report.c_fit", fit.c_fit);
            m.num("report.t0_fit", fit.t0_fit);
            m.num("report.max_violation", fit.max_violation);
        }
        plot = plot_script("normalized flow", NORMALIZED_TRACE_HEADER, &["roundness", "soliton_residual"], true);
    } else if joined == ORACLE_HEADER {
        m.put("report.kind", "oracle");
        if let Some(t) = column(&header, &rows, "tau") {
            m.num("report.tau_final", *t.last().unwrap_or(&0.0));
        }
        plot = plot_script("sphere oracle", ORACLE_HEADER, &["radius"], false);
    } else {
        return Err(FlowError::Parse(format!("unrecognised trace header `{joined}`")));
    }
    let dir = &cfg.output_dir;
    fs::create_dir_all(dir)?;
    let report = dir.join("report.txt");
    fs::write(&report, format!("gaussflow.version={VERSION}\n{}", m.0))?;
    let plot_path = dir.join("plot.gp");
    fs::write(&plot_path, plot)?;
    Ok(Artifacts {
        dir: dir.clone(),
        files: vec![report, plot_path],
    })
}

/// Executes `cfg` and writes its artifacts into `cfg.output_dir`.
pub fn run(cfg: &RunConfig) -> Result<Artifacts> {
    cfg.validate()?;
    let dir = cfg.output_dir.clone();
    let out = match cfg.command {
        Command::Flow => run_flow(cfg)?,
        Command::Normalized => run_normalized_cmd(cfg)?,
        Command::Entropy => run_entropy(cfg)?,
        Command::Project => {
            fs::create_dir_all(&dir)?;
            run_project(cfg, &dir)?
        }
        Command::Oracle => run_oracle(cfg)?,
        Command::Report => return run_report(cfg),
    };
    write_output(&dir, cfg, out)
}

pub const USAGE: &str = "\
usage: gaussflow <flow|normalized|entropy|project|oracle|report> [--config FILE] [--key value]...

keys: kappa n alpha N initial cfl_safety extinction_radius t_max output_dir
      seed trace_every entropy_every restart_fraction max_steps samples input
bodies: ball:R  translated_ball:R:a1[:a2]  ellipse:a:b  geoball:rho  random:R  file:PATH";

/// Entry point shared by the binary; returns the process exit code.
pub fn main_with_args(args: &[String]) -> i32 {
    if args.is_empty() || args.iter().any(|a| a == "--help" || a == "-h") {
        eprintln!("{USAGE}");
        return if args.is_empty() { 2 } else { 0 };
    }
    let result = parse_args(args)
        .and_then(|p| parse_config(p.config_file.as_deref(), &p.settings))
        .and_then(|cfg| run(&cfg));
    match result {
        Ok(a) => {
            for f in &a.files {
                println!("{}", f.display());
            }
            0
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
