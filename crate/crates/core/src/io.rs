//! Snapshot and CSV text formats.
//!
//! Numbers are written with 17 significant digits so files round-trip
//! bit-exactly. A support snapshot is a header line `n N c1 .. c_(n+1)`
//! followed by one value per line; a radial snapshot prefixes the header with
//! the ambient token.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::sync::Arc;

use crate::error::{FlowError, Result};
use crate::spaceform::{Ambient, RadialGraph};
use crate::sphere::{Dim, Grid, Point2, SupportField};

/// Full-precision rendering used in every emitted file.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

/// CSV text with `header` and one line per row.
pub fn csv_string<I, R>(header: &str, rows: I) -> String
where
    I: IntoIterator<Item = R>,
    R: AsRef<[f64]>,
{
    let mut out = String::with_capacity(1024);
    out.push_str(header);
    out.push('\n');
    for row in rows {
        let mut first = true;
        for v in row.as_ref() {
            if !first {
                out.push(',');
            }
            first = false;
            out.push_str(&fmt_f64(*v));
        }
        out.push('\n');
    }
    out
}

/// Parses CSV written by [`csv_string`] into its header and rows.
pub fn parse_csv(text: &str) -> Result<(Vec<String>, Vec<Vec<f64>>)> {
    let mut lines = text.lines();
    let header: Vec<String> = lines
        .next()
        .ok_or_else(|| FlowError::Parse("empty csv".into()))?
        .split(',')
        .map(str::to_owned)
        .collect();
    let mut rows = Vec::new();
    for (k, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let row = line
            .split(',')
            .map(|s| {
                s.trim()
                    .parse::<f64>()
                    .map_err(|e| FlowError::Parse(format!("csv line {}: {e}", k + 2)))
            })
            .collect::<Result<Vec<f64>>>()?;
        if row.len() != header.len() {
            return Err(FlowError::Parse(format!(
                "csv line {} has {} fields, header has {}",
                k + 2,
                row.len(),
                header.len()
            )));
        }
        rows.push(row);
    }
    Ok((header, rows))
}

/// Profile center written as ambient coordinates (`(0, 0, z)` for n = 2).
fn center_coords(dim: Dim, c: Point2) -> Vec<f64> {
    match dim {
        Dim::Circle => vec![c[0], c[1]],
        Dim::Axisymmetric => vec![0.0, 0.0, c[0]],
    }
}

fn header_line(dim: Dim, len: usize, c: Point2) -> String {
    let mut s = format!("{} {}", dim.n(), len);
    for v in center_coords(dim, c) {
        s.push(' ');
        s.push_str(&fmt_f64(v));
    }
    s
}

fn body_lines(out: &mut String, values: &[f64]) {
    for v in values {
        let _ = writeln!(out, "{}", fmt_f64(*v));
    }
}

pub fn support_snapshot_string(u: &SupportField) -> String {
    let mut out = header_line(u.dim(), u.len(), u.center());
    out.push('\n');
    body_lines(&mut out, u.values());
    out
}

pub fn radial_snapshot_string(g: &RadialGraph) -> String {
    let grid = g.grid();
    let mut out = format!(
        "{} {}\n",
        g.ambient().token(),
        header_line(grid.dim(), grid.len(), g.center())
    );
    body_lines(&mut out, g.values());
    out
}

fn parse_num<T: std::str::FromStr>(tok: Option<&str>, what: &str) -> Result<T> {
    tok.ok_or_else(|| FlowError::Parse(format!("missing {what}")))?
        .parse::<T>()
        .map_err(|_| FlowError::Parse(format!("bad {what}")))
}

/// Header tokens after any ambient prefix; returns grid, center and values.
fn parse_body<'a>(
    mut head: impl Iterator<Item = &'a str>,
    lines: impl Iterator<Item = &'a str>,
) -> Result<(Arc<Grid>, Point2, Vec<f64>)> {
    let n: usize = parse_num(head.next(), "dimension n")?;
    let len: usize = parse_num(head.next(), "resolution N")?;
    let dim = Dim::from_n(n).map_err(|e| FlowError::Parse(e.to_string()))?;
    let coords = head
        .map(|t| t.parse::<f64>().map_err(|_| FlowError::Parse(format!("bad center coordinate {t}"))))
        .collect::<Result<Vec<f64>>>()?;
    if coords.len() != n + 1 {
        return Err(FlowError::Parse(format!(
            "expected {} center coordinates, got {}",
            n + 1,
            coords.len()
        )));
    }
    let center = match dim {
        Dim::Circle => [coords[0], coords[1]],
        Dim::Axisymmetric => {
            if coords[0] != 0.0 || coords[1] != 0.0 {
                return Err(FlowError::Parse("axisymmetric center must lie on the axis".into()));
            }
            [coords[2], 0.0]
        }
    };
    let values = lines
        .filter(|l| !l.trim().is_empty())
        .enumerate()
        .map(|(k, l)| {
            l.trim()
                .parse::<f64>()
                .map_err(|_| FlowError::Parse(format!("bad value on data line {}", k + 1)))
        })
        .collect::<Result<Vec<f64>>>()?;
    if values.len() != len {
        return Err(FlowError::Parse(format!("header says {len} values, found {}", values.len())));
    }
    let grid = Grid::new(dim, len)?;
    Ok((grid, center, values))
}

pub fn parse_support_snapshot(text: &str) -> Result<SupportField> {
    let mut lines = text.lines();
    let head = lines.next().ok_or_else(|| FlowError::Parse("empty snapshot".into()))?;
    let (grid, center, values) = parse_body(head.split_whitespace(), lines)?;
    SupportField::new(grid, values, center)
}

pub fn parse_radial_snapshot(text: &str) -> Result<RadialGraph> {
    let mut lines = text.lines();
    let head = lines.next().ok_or_else(|| FlowError::Parse("empty snapshot".into()))?;
    let mut toks = head.split_whitespace();
    let ambient: Ambient = toks
        .next()
        .ok_or_else(|| FlowError::Parse("missing ambient token".into()))?
        .parse()?;
    let (grid, center, values) = parse_body(toks, lines)?;
    RadialGraph::new(ambient, grid, values, center)
}

pub fn read_support_snapshot(path: &Path) -> Result<SupportField> {
    parse_support_snapshot(&fs::read_to_string(path)?)
}

pub fn write_support_snapshot(path: &Path, u: &SupportField) -> Result<()> {
    fs::write(path, support_snapshot_string(u))?;
    Ok(())
}

pub fn read_radial_snapshot(path: &Path) -> Result<RadialGraph> {
    parse_radial_snapshot(&fs::read_to_string(path)?)
}

pub fn write_radial_snapshot(path: &Path, g: &RadialGraph) -> Result<()> {
    fs::write(path, radial_snapshot_string(g))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spaceform::Kappa;

    #[test]
    fn support_snapshot_roundtrips_bitwise() {
        let u = SupportField::translated_ball(Dim::Circle, 32, 0.7, [0.1, 1.0 / 3.0]).unwrap();
        let s = support_snapshot_string(&u);
        assert!(s.starts_with("1 32 "));
        let back = parse_support_snapshot(&s).unwrap();
        assert_eq!(back.values(), u.values());
        assert_eq!(back.center(), u.center());
        let mut ax = SupportField::ellipse(Dim::Axisymmetric, 16, 1.0, 0.5).unwrap();
        ax.set_center([0.25, 0.0]);
        let back = parse_support_snapshot(&support_snapshot_string(&ax)).unwrap();
        assert_eq!(back.values(), ax.values());
        assert_eq!(back.center(), [0.25, 0.0]);
    }

    #[test]
    fn radial_snapshot_has_ambient_token() {
        let grid = Grid::new(Dim::Circle, 16).unwrap();
        let g = RadialGraph::new(Ambient::Spaceform(Kappa::Hyperbolic), grid, vec![0.4; 16], [0.0, 0.0]).unwrap();
        let s = radial_snapshot_string(&g);
        assert!(s.starts_with("hyperbolic 1 16 "));
        let back = parse_radial_snapshot(&s).unwrap();
        assert_eq!(back.values(), g.values());
        assert_eq!(back.ambient(), g.ambient());
    }

    #[test]
    fn malformed_snapshots_are_parse_errors() {
        assert!(matches!(parse_support_snapshot(""), Err(FlowError::Parse(_))));
        assert!(matches!(parse_support_snapshot("1 16 0 0\n1\n"), Err(FlowError::Parse(_))));
        assert!(matches!(parse_support_snapshot("3 16 0 0\n"), Err(FlowError::Parse(_))));
        assert!(parse_radial_snapshot("torus 1 16 0 0\n").is_err());
    }

    #[test]
    fn csv_roundtrip() {
        let rows = vec![[1.0, f64::NAN], [0.1, -2.5e-300]];
        let s = csv_string("a,b", rows.iter());
        let (h, r) = parse_csv(&s).unwrap();
        assert_eq!(h, vec!["a", "b"]);
        assert_eq!(r[1], vec![0.1, -2.5e-300]);
        assert!(r[0][1].is_nan());
    }
}
