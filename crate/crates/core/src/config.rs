//! Run configuration: flat `key=value` files and `--key value` flags.

use std::collections::BTreeMap;
use std::f64::consts::FRAC_PI_2;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::error::{FlowError, Result};
use crate::flow::FlowConfig;
use crate::io::read_support_snapshot;
use crate::spaceform::Kappa;
use crate::sphere::{Dim, Point2, SupportField, MIN_RESOLUTION};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Flow,
    Normalized,
    Entropy,
    Project,
    Oracle,
    Report,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Flow => "flow",
            Command::Normalized => "normalized",
            Command::Entropy => "entropy",
            Command::Project => "project",
            Command::Oracle => "oracle",
            Command::Report => "report",
        }
    }
}

impl FromStr for Command {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        Ok(match s {
            "flow" => Command::Flow,
            "normalized" => Command::Normalized,
            "entropy" => Command::Entropy,
            "project" => Command::Project,
            "oracle" => Command::Oracle,
            "report" => Command::Report,
            _ => return Err(format!("unknown command `{s}`")),
        })
    }
}

/// Initial body, in coordinates of the projected chart.
#[derive(Debug, Clone, PartialEq)]
pub enum InitialBody {
    Ball(f64),
    TranslatedBall { radius: f64, offset: Point2 },
    Ellipse { a: f64, b: f64 },
    /// Geodesic ball of the given radius in the space form.
    GeoBall(f64),
    /// Seeded random convex body of about this size (uses `seed`).
    Random(f64),
    File(PathBuf),
}

impl FromStr for InitialBody {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        let (kind, rest) = s.split_once(':').ok_or("expected kind:parameters")?;
        if kind == "file" {
            return Ok(InitialBody::File(PathBuf::from(rest)));
        }
        let nums = rest
            .split(':')
            .map(|t| t.parse::<f64>().map_err(|_| format!("bad number `{t}`")))
            .collect::<std::result::Result<Vec<f64>, String>>()?;
        let want = |k: usize| {
            if nums.len() == k {
                Ok(())
            } else {
                Err(format!("{kind} takes {k} parameter(s), got {}", nums.len()))
            }
        };
        match kind {
            "ball" => want(1).map(|_| InitialBody::Ball(nums[0])),
            "geoball" => want(1).map(|_| InitialBody::GeoBall(nums[0])),
            "random" => want(1).map(|_| InitialBody::Random(nums[0])),
            "ellipse" => want(2).map(|_| InitialBody::Ellipse { a: nums[0], b: nums[1] }),
            "translated_ball" => match nums.len() {
                2 => Ok(InitialBody::TranslatedBall {
                    radius: nums[0],
                    offset: [nums[1], 0.0],
                }),
                3 => Ok(InitialBody::TranslatedBall {
                    radius: nums[0],
                    offset: [nums[1], nums[2]],
                }),
                k => Err(format!("translated_ball takes 2 or 3 parameters, got {k}")),
            },
            _ => Err(format!("unknown body kind `{kind}`")),
        }
    }
}

impl fmt::Display for InitialBody {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            InitialBody::Ball(r) => write!(f, "ball:{r}"),
            InitialBody::TranslatedBall { radius, offset } => {
                write!(f, "translated_ball:{radius}:{}:{}", offset[0], offset[1])
            }
            InitialBody::Ellipse { a, b } => write!(f, "ellipse:{a}:{b}"),
            InitialBody::GeoBall(r) => write!(f, "geoball:{r}"),
            InitialBody::Random(r) => write!(f, "random:{r}"),
            InitialBody::File(p) => write!(f, "file:{}", p.display()),
        }
    }
}

/// One `key=value` assignment and the line it came from (0 for flags).
#[derive(Debug, Clone, PartialEq)]
pub struct Setting {
    pub key: String,
    pub value: String,
    pub line: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub command: Command,
    pub kappa: Kappa,
    pub n: usize,
    pub alpha: f64,
    /// Grid resolution `N`.
    pub len: usize,
    pub initial: InitialBody,
    pub cfl_safety: f64,
    pub extinction_radius: f64,
    /// Stop time: τ for `flow`, normalized duration for `normalized`.
    pub t_max: Option<f64>,
    pub output_dir: PathBuf,
    pub seed: u64,
    /// Keep every k-th trace row (the last row is always kept).
    pub trace_every: usize,
    /// Entropy sampling period in normalized steps (0 disables it).
    pub entropy_every: usize,
    pub restart_fraction: f64,
    pub max_steps: usize,
    /// Rows in the oracle table.
    pub samples: usize,
    /// Trace read by the `report` command.
    pub input: Option<PathBuf>,
}

const KEYS: &[&str] = &[
    "command",
    "kappa",
    "n",
    "alpha",
    "N",
    "initial",
    "cfl_safety",
    "extinction_radius",
    "t_max",
    "output_dir",
    "seed",
    "trace_every",
    "entropy_every",
    "restart_fraction",
    "max_steps",
    "samples",
    "input",
];

/// Splits config text into settings; `#` starts a comment and a line may
/// hold several whitespace-separated assignments.
pub fn parse_config_text(text: &str) -> Result<Vec<Setting>> {
    let mut out = Vec::new();
    for (k, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("");
        for tok in line.split_whitespace() {
            let (key, value) = tok
                .split_once('=')
                .ok_or_else(|| FlowError::config(tok, k + 1, "expected key=value"))?;
            out.push(Setting {
                key: key.to_owned(),
                value: value.to_owned(),
                line: k + 1,
            });
        }
    }
    Ok(out)
}

/// Command-line arguments: an optional leading command word, `--config path`,
/// and `--key value` or `--key=value` overrides.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParsedArgs {
    pub config_file: Option<PathBuf>,
    pub settings: Vec<Setting>,
}

pub fn parse_args(args: &[String]) -> Result<ParsedArgs> {
    let mut out = ParsedArgs::default();
    let mut i = 0;
    while i < args.len() {
        let a = &args[i];
        if let Some(flag) = a.strip_prefix("--") {
            let (key, value) = match flag.split_once('=') {
                Some((k, v)) => (k.to_owned(), v.to_owned()),
                None => {
                    i += 1;
                    let v = args
                        .get(i)
                        .ok_or_else(|| FlowError::config(flag, 0, "flag needs a value"))?;
                    (flag.to_owned(), v.clone())
                }
            };
            if key == "config" {
                out.config_file = Some(PathBuf::from(value));
            } else {
                out.settings.push(Setting { key, value, line: 0 });
            }
        } else if i == 0 {
            out.settings.push(Setting {
                key: "command".into(),
                value: a.clone(),
                line: 0,
            });
        } else {
            return Err(FlowError::config(a.as_str(), 0, "unexpected positional argument"));
        }
        i += 1;
    }
    Ok(out)
}

/// Reads the optional config file and applies flag overrides on top.
pub fn parse_config(file: Option<&Path>, flags: &[Setting]) -> Result<RunConfig> {
    let mut settings = match file {
        Some(p) => {
            let text = std::fs::read_to_string(p)
                .map_err(|e| FlowError::config("config", 0, format!("{}: {e}", p.display())))?;
            parse_config_text(&text)?
        }
        None => Vec::new(),
    };
    settings.extend_from_slice(flags);
    RunConfig::from_settings(&settings)
}

fn parse_value<T: FromStr>(s: &Setting) -> Result<T>
where
    T::Err: fmt::Display,
{
    s.value
        .parse::<T>()
        .map_err(|e| FlowError::config(&s.key, s.line, format!("cannot parse `{}`: {e}", s.value)))
}

impl RunConfig {
    /// Builds and validates a config; later settings override earlier ones.
    pub fn from_settings(settings: &[Setting]) -> Result<Self> {
        let mut map: BTreeMap<&str, &Setting> = BTreeMap::new();
        for s in settings {
            if !KEYS.contains(&s.key.as_str()) {
                return Err(FlowError::config(&s.key, s.line, "unknown key"));
            }
            map.insert(s.key.as_str(), s);
        }
        let command_setting = map
            .get("command")
            .ok_or_else(|| FlowError::config("command", 0, "no command given"))?;
        let mut cfg = RunConfig {
            command: parse_value(command_setting)?,
            kappa: Kappa::Flat,
            n: 1,
            alpha: 1.0,
            len: 256,
            initial: InitialBody::Ball(1.0),
            cfl_safety: 0.25,
            extinction_radius: 1e-3,
            t_max: None,
            output_dir: PathBuf::from("out"),
            seed: 0,
            trace_every: 1,
            entropy_every: 1,
            restart_fraction: 0.1,
            max_steps: 20_000_000,
            samples: 201,
            input: None,
        };
        for (&key, &s) in &map {
            match key {
                "kappa" => {
                    let k: i32 = parse_value(s)?;
                    cfg.kappa = Kappa::from_int(k)
                        .map_err(|_| FlowError::config(key, s.line, "kappa must be -1, 0 or 1"))?;
                }
                "n" => cfg.n = parse_value(s)?,
                "alpha" => cfg.alpha = parse_value(s)?,
                "N" => cfg.len = parse_value(s)?,
                "initial" => cfg.initial = parse_value(s)?,
                "cfl_safety" => cfg.cfl_safety = parse_value(s)?,
                "extinction_radius" => cfg.extinction_radius = parse_value(s)?,
                "t_max" => cfg.t_max = Some(parse_value(s)?),
                "output_dir" => cfg.output_dir = PathBuf::from(&s.value),
                "seed" => cfg.seed = parse_value(s)?,
                "trace_every" => cfg.trace_every = parse_value(s)?,
                "entropy_every" => cfg.entropy_every = parse_value(s)?,
                "restart_fraction" => cfg.restart_fraction = parse_value(s)?,
                "max_steps" => cfg.max_steps = parse_value(s)?,
                "samples" => cfg.samples = parse_value(s)?,
                "input" => cfg.input = Some(PathBuf::from(&s.value)),
                _ => {}
            }
        }
        let line = |k: &str| map.get(k).map_or(0, |s| s.line);
        cfg.validate_with(&line)?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.validate_with(&|_| 0)
    }

    fn validate_with(&self, line: &dyn Fn(&str) -> usize) -> Result<()> {
        let err = |k: &str, m: String| Err(FlowError::config(k, line(k), m));
        if !(self.n == 1 || self.n == 2) {
            return err("n", format!("n must be 1 or 2, got {}", self.n));
        }
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return err("alpha", format!("alpha must be positive, got {}", self.alpha));
        }
        if self.len < MIN_RESOLUTION || self.len % 2 != 0 {
            return err("N", format!("N must be even and at least {MIN_RESOLUTION}, got {}", self.len));
        }
        // values above 1 are allowed so that instability can be provoked on purpose
        if !(self.cfl_safety > 0.0 && self.cfl_safety.is_finite()) {
            return err("cfl_safety", format!("cfl_safety must be positive, got {}", self.cfl_safety));
        }
        if !(self.extinction_radius > 0.0) {
            return err("extinction_radius", "extinction_radius must be positive".into());
        }
        if let Some(t) = self.t_max {
            if !(t > 0.0 && t.is_finite()) {
                return err("t_max", format!("t_max must be positive, got {t}"));
            }
        }
        if self.trace_every == 0 {
            return err("trace_every", "trace_every must be at least 1".into());
        }
        if !(self.restart_fraction > 0.0 && self.restart_fraction < 1.0) {
            return err("restart_fraction", "restart_fraction must lie in (0, 1)".into());
        }
        if self.samples < 2 {
            return err("samples", "samples must be at least 2".into());
        }
        self.validate_body().or_else(|m| err("initial", m))
    }

    /// Positivity and projection-domain checks for the initial body.
    fn validate_body(&self) -> std::result::Result<(), String> {
        let pos = |v: f64, what: &str| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(format!("{what} must be positive, got {v}"))
            }
        };
        // largest distance of the projected body from the chart origin
        let reach = match &self.initial {
            InitialBody::Ball(r) => {
                pos(*r, "radius")?;
                *r
            }
            InitialBody::TranslatedBall { radius, offset } => {
                pos(*radius, "radius")?;
                if self.n == 2 && offset[1] != 0.0 {
                    return Err("axisymmetric offsets must lie on the axis".into());
                }
                let d = offset[0].hypot(offset[1]);
                if d >= *radius {
                    return Err("offset must stay inside the ball so the origin is interior".into());
                }
                radius + d
            }
            InitialBody::Ellipse { a, b } => {
                pos(*a, "a")?;
                pos(*b, "b")?;
                a.max(*b)
            }
            InitialBody::GeoBall(rho) => {
                pos(*rho, "geodesic radius")?;
                if self.kappa == Kappa::Sphere && *rho >= FRAC_PI_2 {
                    return Err(format!("geodesic radius {rho} does not fit in a hemisphere"));
                }
                0.0
            }
            InitialBody::Random(r) => {
                pos(*r, "size")?;
                1.2 * r
            }
            InitialBody::File(p) => {
                if !p.exists() {
                    return Err(format!("snapshot {} does not exist", p.display()));
                }
                0.0
            }
        };
        if self.kappa == Kappa::Hyperbolic && reach >= 1.0 {
            return Err(format!(
                "body reaches radius {reach}, outside the unit-ball projection domain"
            ));
        }
        Ok(())
    }

    pub fn dim(&self) -> Dim {
        if self.n == 1 {
            Dim::Circle
        } else {
            Dim::Axisymmetric
        }
    }

    /// Support function of the initial body in the projected chart.
    pub fn initial_field(&self) -> Result<SupportField> {
        let dim = self.dim();
        match &self.initial {
            InitialBody::Ball(r) => SupportField::ball(dim, self.len, *r),
            InitialBody::TranslatedBall { radius, offset } => {
                SupportField::translated_ball(dim, self.len, *radius, *offset)
            }
            InitialBody::Ellipse { a, b } => SupportField::ellipse(dim, self.len, *a, *b),
            InitialBody::GeoBall(rho) => {
                let r = match self.kappa {
                    Kappa::Sphere => rho.tan(),
                    Kappa::Flat => *rho,
                    Kappa::Hyperbolic => rho.tanh(),
                };
                SupportField::ball(dim, self.len, r)
            }
            InitialBody::Random(r) => SupportField::random(dim, self.len, *r, self.seed),
            InitialBody::File(p) => {
                let u = read_support_snapshot(p)?;
                if u.dim() != dim {
                    return Err(FlowError::config("initial", 0, "snapshot dimension differs from n"));
                }
                Ok(u)
            }
        }
    }

    pub fn flow_config(&self) -> FlowConfig {
        let mut f = FlowConfig::new(self.alpha, self.kappa);
        f.cfl_safety = self.cfl_safety;
        f.extinction_radius = self.extinction_radius;
        f.max_steps = self.max_steps;
        f.restart_fraction = self.restart_fraction;
        f
    }

    /// `config.key=value` lines in a fixed order.
    pub fn echo(&self) -> String {
        let mut lines = vec![
            format!("config.command={}", self.command.name()),
            format!("config.kappa={}", self.kappa.as_int()),
            format!("config.n={}", self.n),
            format!("config.alpha={}", self.alpha),
            format!("config.N={}", self.len),
            format!("config.initial={}", self.initial),
            format!("config.cfl_safety={}", self.cfl_safety),
            format!("config.extinction_radius={}", self.extinction_radius),
        ];
        if let Some(t) = self.t_max {
            lines.push(format!("config.t_max={t}"));
        }
        lines.push(format!("config.seed={}", self.seed));
        lines.push(format!("config.trace_every={}", self.trace_every));
        lines.push(format!("config.entropy_every={}", self.entropy_every));
        lines.push(format!("config.restart_fraction={}", self.restart_fraction));
        lines.push(format!("config.max_steps={}", self.max_steps));
        lines.push(format!("config.samples={}", self.samples));
        let mut s = lines.join("\n");
        s.push('\n');
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn from_text(text: &str) -> Result<RunConfig> {
        RunConfig::from_settings(&parse_config_text(text)?)
    }

    #[test]
    fn one_line_config_is_valid() {
        let c = from_text("command=flow kappa=1 n=1 alpha=1.0 N=256 initial=ball:0.5").unwrap();
        assert_eq!(c.kappa, Kappa::Sphere);
        assert_eq!(c.initial, InitialBody::Ball(0.5));
        assert_eq!(c.len, 256);
    }

    #[test]
    fn zero_alpha_is_rejected_with_line() {
        let e = from_text("command=flow\n# comment\nalpha=0\n").unwrap_err();
        assert_eq!(e, FlowError::config("alpha", 3, "alpha must be positive, got 0"));
        assert_eq!(e.exit_code(), 2);
    }

    #[test]
    fn hyperbolic_domain_is_enforced() {
        let e = from_text("command=flow kappa=-1 initial=ball:1.5").unwrap_err();
        assert!(matches!(e, FlowError::Config { ref key, line: 1, .. } if key == "initial"));
    }

    #[test]
    fn unknown_keys_and_bad_tokens_fail() {
        assert!(matches!(from_text("command=flow\nspeed=3"), Err(FlowError::Config { line: 2, .. })));
        assert!(from_text("command=flow oops").is_err());
        assert!(from_text("kappa=0").is_err());
        assert!(from_text("command=fly").is_err());
        assert!(from_text("command=flow N=17").is_err());
        assert!(from_text("command=flow kappa=2").is_err());
        assert!(from_text("command=flow n=2 initial=translated_ball:1:0.1:0.1").is_err());
    }

    #[test]
    fn flags_override_file_settings() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.cfg");
        std::fs::write(&path, "command=flow\nalpha=2\nN=64\n").unwrap();
        let args: Vec<String> = ["oracle", "--alpha", "0.5", "--N=32"].iter().map(|s| s.to_string()).collect();
        let parsed = parse_args(&args).unwrap();
        let c = parse_config(Some(&path), &parsed.settings).unwrap();
        assert_eq!(c.command, Command::Oracle);
        assert_eq!(c.alpha, 0.5);
        assert_eq!(c.len, 32);
    }

    #[test]
    fn body_syntax() {
        assert_eq!(
            "translated_ball:1:0.3".parse::<InitialBody>().unwrap(),
            InitialBody::TranslatedBall {
                radius: 1.0,
                offset: [0.3, 0.0]
            }
        );
        assert!("ellipse:2".parse::<InitialBody>().is_err());
        let b = InitialBody::Ellipse { a: 2.0, b: 1.0 };
        assert_eq!(b.to_string().parse::<InitialBody>().unwrap(), b);
    }
}
