//! Legacy ASCII VTK `STRUCTURED_POINTS` files. `ORIGIN` is the center of the
//! first cell, so it sits half a spacing inside the grid's corner.

use std::fmt::Write as _;

use crate::error::{Result, ScreenError};
use crate::geometry::{GridSpec, ScalarField};

/// Largest point count the reader accepts.
pub const MAX_POINTS: usize = 1 << 27;

#[derive(Clone, Debug, PartialEq)]
pub struct VtkFields {
    pub grid: GridSpec,
    pub fields: Vec<(String, Vec<f64>)>,
}

impl VtkFields {
    pub fn field(&self, name: &str) -> Option<ScalarField> {
        self.fields
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, v)| ScalarField { grid: self.grid.clone(), values: v.clone() })
    }
}

/// 17 significant digits: exact round trip for every finite double.
pub fn fmt_f64(v: f64) -> String {
    if v == 0.0 {
        return "0".into();
    }
    format!("{v:.16e}")
}

pub fn write_vtk(title: &str, grid: &GridSpec, fields: &[(&str, &[f64])]) -> Result<String> {
    if title.contains('\n') || title.len() > 255 {
        return Err(ScreenError::Precondition("VTK title must be one line of at most 255 bytes".into()));
    }
    let n = grid.len();
    for (name, v) in fields {
        if v.len() != n {
            return Err(ScreenError::GridMismatch(format!("field {name} has {} values for {n} points", v.len())));
        }
        if name.is_empty() || name.chars().any(|c| c.is_whitespace()) {
            return Err(ScreenError::Precondition(format!("invalid VTK field name {name:?}")));
        }
    }
    let h = grid.spacing;
    let c = grid.center(0, 0, 0);
    let mut out = String::with_capacity(64 + fields.len() * n * 24);
    out.push_str("# vtk DataFile Version 3.0\n");
    out.push_str(title);
    out.push('\n');
    out.push_str("ASCII\nDATASET STRUCTURED_POINTS\n");
    let [nx, ny, nz] = grid.dims;
    let _ = writeln!(out, "DIMENSIONS {nx} {ny} {nz}");
    let _ = writeln!(out, "ORIGIN {} {} {}", fmt_f64(c[0]), fmt_f64(c[1]), fmt_f64(c[2]));
    let _ = writeln!(out, "SPACING {} {} {}", fmt_f64(h), fmt_f64(h), fmt_f64(h));
    let _ = writeln!(out, "POINT_DATA {n}");
    for (name, v) in fields {
        let _ = writeln!(out, "SCALARS {name} double 1");
        out.push_str("LOOKUP_TABLE default\n");
        for x in v.iter() {
            out.push_str(&fmt_f64(*x));
            out.push('\n');
        }
    }
    Ok(out)
}

struct Lines<'a> {
    inner: std::iter::Enumerate<std::str::Lines<'a>>,
    line: usize,
}

impl<'a> Lines<'a> {
    fn next_nonempty(&mut self) -> Option<&'a str> {
        for (i, l) in self.inner.by_ref() {
            self.line = i + 1;
            let t = l.trim();
            if !t.is_empty() {
                return Some(t);
            }
        }
        None
    }

    fn err(&self, msg: impl Into<String>) -> ScreenError {
        ScreenError::Parse { line: self.line, msg: msg.into() }
    }

    fn expect(&mut self, what: &str) -> Result<&'a str> {
        self.next_nonempty().ok_or_else(|| self.err(format!("unexpected end of file, expected {what}")))
    }

    fn keyword<const N: usize>(&mut self, key: &str) -> Result<[&'a str; N]> {
        let l = self.expect(key)?;
        let mut parts = l.split_whitespace();
        if !parts.next().is_some_and(|k| k.eq_ignore_ascii_case(key)) {
            return Err(self.err(format!("expected {key}, found {l:?}")));
        }
        let args: Vec<&str> = parts.collect();
        if args.len() != N {
            return Err(self.err(format!("{key} takes {N} values, found {}", args.len())));
        }
        Ok(std::array::from_fn(|i| args[i]))
    }
}

fn parse_num<T: std::str::FromStr>(lines: &Lines<'_>, s: &str, what: &str) -> Result<T> {
    s.parse().map_err(|_| lines.err(format!("invalid {what} {s:?}")))
}

pub fn read_vtk(text: &str) -> Result<VtkFields> {
    let mut lines = Lines { inner: text.lines().enumerate(), line: 0 };
    let header = lines.expect("header")?;
    if !header.starts_with("# vtk DataFile") {
        return Err(lines.err("missing '# vtk DataFile' header"));
    }
    // the title line may be blank
    match lines.inner.next() {
        Some((i, _)) => lines.line = i + 1,
        None => return Err(lines.err("unexpected end of file, expected title")),
    }
    let fmt = lines.expect("ASCII")?;
    if !fmt.eq_ignore_ascii_case("ASCII") {
        return Err(lines.err(format!("only ASCII files are supported, found {fmt:?}")));
    }
    let [kind] = lines.keyword::<1>("DATASET")?;
    if !kind.eq_ignore_ascii_case("STRUCTURED_POINTS") {
        return Err(lines.err(format!("unsupported dataset {kind:?}")));
    }
    let dims_s = lines.keyword::<3>("DIMENSIONS")?;
    let mut dims = [0usize; 3];
    for a in 0..3 {
        dims[a] = parse_num(&lines, dims_s[a], "dimension")?;
    }
    let origin_s = lines.keyword::<3>("ORIGIN")?;
    let mut origin = [0.0; 3];
    for a in 0..3 {
        origin[a] = parse_num(&lines, origin_s[a], "origin")?;
    }
    let spacing_s = lines.keyword::<3>("SPACING")?;
    let mut spacing = [0.0f64; 3];
    for a in 0..3 {
        spacing[a] = parse_num(&lines, spacing_s[a], "spacing")?;
    }
    if spacing[1] != spacing[0] || spacing[2] != spacing[0] {
        return Err(lines.err("only cubic cells are supported"));
    }
    let h = spacing[0];
    let corner = [origin[0] - 0.5 * h, origin[1] - 0.5 * h, origin[2] - 0.5 * h];
    let grid = GridSpec::new(corner, h, dims).map_err(|e| lines.err(e.to_string()))?;
    let n = dims
        .iter()
        .try_fold(1usize, |a, &d| a.checked_mul(d))
        .filter(|&n| n <= MAX_POINTS)
        .ok_or_else(|| lines.err(format!("grid {dims:?} exceeds {MAX_POINTS} points")))?;
    let [count] = lines.keyword::<1>("POINT_DATA")?;
    let count: usize = parse_num(&lines, count, "point count")?;
    if count != n {
        return Err(lines.err(format!("POINT_DATA {count} does not match dimensions ({n} points)")));
    }
    let mut fields: Vec<(String, Vec<f64>)> = Vec::new();
    while let Some(l) = lines.next_nonempty() {
        let parts: Vec<&str> = l.split_whitespace().collect();
        if !parts[0].eq_ignore_ascii_case("SCALARS") || !(3..=4).contains(&parts.len()) {
            return Err(lines.err(format!("expected SCALARS <name> <type> [1], found {l:?}")));
        }
        if !matches!(parts[2], "double" | "float") {
            return Err(lines.err(format!("unsupported scalar type {:?}", parts[2])));
        }
        if parts.len() == 4 && parts[3] != "1" {
            return Err(lines.err("only single-component scalars are supported"));
        }
        let name = parts[1].to_string();
        if fields.iter().any(|(f, _)| *f == name) {
            return Err(lines.err(format!("duplicate field {name:?}")));
        }
        let [table] = lines.keyword::<1>("LOOKUP_TABLE")?;
        let _ = table;
        let mut values = Vec::with_capacity(n.min(1 << 16));
        while values.len() < n {
            let l = lines.expect("scalar values")?;
            for tok in l.split_whitespace() {
                if values.len() == n {
                    return Err(lines.err(format!("field {name:?} has more than {n} values")));
                }
                let v: f64 = parse_num(&lines, tok, "value")?;
                if !v.is_finite() {
                    return Err(lines.err(format!("non-finite value {tok:?}")));
                }
                values.push(v);
            }
        }
        fields.push((name, values));
    }
    if fields.is_empty() {
        return Err(lines.err("no SCALARS blocks"));
    }
    Ok(VtkFields { grid, fields })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid() -> GridSpec {
        GridSpec::new([-1.0, -0.5, 0.25], 0.125, [5, 4, 6]).unwrap()
    }

    #[test]
    fn round_trip_is_exact() {
        let g = grid();
        let a: Vec<f64> = (0..g.len()).map(|i| (i as f64 * 0.1).sin() / 3.0).collect();
        let b: Vec<f64> = (0..g.len()).map(|i| if i % 3 == 0 { 0.0 } else { 1e-300 * i as f64 }).collect();
        let text = write_vtk("test", &g, &[("u", &a), ("phi", &b)]).unwrap();
        let back = read_vtk(&text).unwrap();
        assert_eq!(back.fields[0], ("u".to_string(), a));
        assert_eq!(back.fields[1], ("phi".to_string(), b));
        assert_eq!(back.grid.dims, g.dims);
        for k in 0..3 {
            assert!((back.grid.origin[k] - g.origin[k]).abs() < 1e-15);
        }
    }

    #[test]
    fn header_places_origin_at_first_cell_center() {
        let g = grid();
        let text = write_vtk("t", &g, &[("u", &vec![0.0; g.len()])]).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "# vtk DataFile Version 3.0");
        assert_eq!(lines[3], "DATASET STRUCTURED_POINTS");
        assert_eq!(lines[4], "DIMENSIONS 5 4 6");
        assert_eq!(lines[5], "ORIGIN -9.3750000000000000e-1 -4.3750000000000000e-1 3.1250000000000000e-1");
        assert_eq!(lines[6], "SPACING 1.2500000000000000e-1 1.2500000000000000e-1 1.2500000000000000e-1");
        assert_eq!(lines[7], "POINT_DATA 120");
    }

    #[test]
    fn rejects_malformed_input_with_line_numbers() {
        let g = grid();
        let good = write_vtk("t", &g, &[("u", &vec![1.0; g.len()])]).unwrap();
        let cases = [
            (good.replace("STRUCTURED_POINTS", "POLYDATA"), 4),
            (good.replace("POINT_DATA 120", "POINT_DATA 121"), 8),
            (good.replace("DIMENSIONS 5 4 6", "DIMENSIONS 5 4"), 5),
            (good.replacen("1.0000000000000000e0", "nan", 1), 11),
        ];
        for (text, line) in cases {
            match read_vtk(&text) {
                Err(ScreenError::Parse { line: l, .. }) => assert_eq!(l, line, "{text:.200}"),
                other => panic!("{other:?}"),
            }
        }
        let truncated: String = good.lines().take(20).collect::<Vec<_>>().join("\n");
        assert!(read_vtk(&truncated).is_err());
        assert!(read_vtk("").is_err());
        let huge = good.replace("DIMENSIONS 5 4 6", "DIMENSIONS 100000 100000 100000");
        assert!(read_vtk(&huge).is_err());
    }

    #[test]
    fn writer_rejects_bad_names_and_lengths() {
        let g = grid();
        assert!(write_vtk("t", &g, &[("a b", &vec![0.0; g.len()])]).is_err());
        assert!(write_vtk("t", &g, &[("a", &[0.0])]).is_err());
        assert!(write_vtk("two\nlines", &g, &[]).is_err());
    }
}
