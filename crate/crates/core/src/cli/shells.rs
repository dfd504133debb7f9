//! Text form of concentric shell configurations: comma-separated entries
//! `r_inner:r_outer:sign`, sign `+` or `-`, sorted outward.
//! Example: `0:1:+, 1:1.2599210498948732:-`.

use crate::error::{Result, ScreenError};
use crate::spherical::{RadialConfig, Shell};

pub const MAX_SHELLS: usize = 4096;

fn err(col: usize, msg: impl std::fmt::Display) -> ScreenError {
    ScreenError::Parse { line: 1, msg: format!("column {col}: {msg}") }
}

pub fn parse_shell_list(text: &str) -> Result<RadialConfig> {
    if text.contains('\n') {
        return Err(ScreenError::Parse { line: 1, msg: "shell list must be a single line".into() });
    }
    let mut shells = Vec::new();
    let mut col = 1;
    for entry in text.split(',') {
        let start = col + (entry.len() - entry.trim_start().len());
        col += entry.chars().count() + 1;
        let e = entry.trim();
        if e.is_empty() {
            return Err(err(start, "empty entry"));
        }
        if shells.len() == MAX_SHELLS {
            return Err(err(start, format!("more than {MAX_SHELLS} shells")));
        }
        let parts: Vec<&str> = e.split(':').map(str::trim).collect();
        if parts.len() != 3 {
            return Err(err(start, format!("expected r_inner:r_outer:sign, found {e:?}")));
        }
        let radius = |s: &str| -> Result<f64> {
            let v: f64 = s.parse().map_err(|_| err(start, format!("invalid radius {s:?}")))?;
            if !v.is_finite() {
                return Err(err(start, format!("radius {s:?} is not finite")));
            }
            Ok(v)
        };
        let sign = match parts[2] {
            "+" | "+1" => 1,
            "-" | "-1" => -1,
            s => return Err(err(start, format!("sign must be + or -, found {s:?}"))),
        };
        shells.push(Shell { r_inner: radius(parts[0])?, r_outer: radius(parts[1])?, sign });
    }
    RadialConfig::new(shells).map_err(|e| ScreenError::Parse { line: 1, msg: e.to_string() })
}

pub fn format_shell_list(config: &RadialConfig) -> String {
    config
        .shells
        .iter()
        .map(|s| format!("{}:{}:{}", s.r_inner, s.r_outer, if s.sign > 0 { '+' } else { '-' }))
        .collect::<Vec<_>>()
        .join(",")
}
