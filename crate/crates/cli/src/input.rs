//! Readers for plain data files.

use std::path::Path;

use anyhow::Result;

use crate::failure;

pub fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| failure::data(format!("cannot read {}: {e}", path.display())))
}

/// One number per line; blank and `#` lines are skipped and a non-numeric
/// first line is taken as a header.
pub fn read_numbers(path: &Path) -> Result<Vec<f64>> {
    let text = read_text(path)?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let t = line.trim();
        if t.is_empty() || t.starts_with('#') {
            continue;
        }
        match t.parse::<f64>() {
            Ok(v) if v.is_finite() => out.push(v),
            _ if out.is_empty() && i == 0 => {}
            _ => return Err(failure::data(format!("{}:{}: '{t}' is not a number", path.display(), i + 1))),
        }
    }
    if out.is_empty() {
        return Err(failure::data(format!("{} holds no observations", path.display())));
    }
    Ok(out)
}

pub fn read_counts(path: &Path) -> Result<Vec<u64>> {
    read_numbers(path)?
        .into_iter()
        .map(|v| {
            if v >= 0.0 && v.fract() == 0.0 {
                Ok(v as u64)
            } else {
                Err(failure::data(format!("{}: count {v} is not a nonnegative integer", path.display())))
            }
        })
        .collect()
}

/// Two-column CSV `x,y` with a header.
pub fn read_pairs(path: &Path) -> Result<Vec<[f64; 2]>> {
    let text = read_text(path)?;
    let mut rows = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty() && !l.starts_with('#'));
    let Some((_, header)) = rows.next() else {
        return Err(failure::data(format!("{} is empty", path.display())));
    };
    let cols: Vec<&str> = header.split(',').map(str::trim).collect();
    let (xi, yi) = match (cols.iter().position(|c| *c == "x"), cols.iter().position(|c| *c == "y")) {
        (Some(x), Some(y)) => (x, y),
        _ => return Err(failure::data(format!("{}: expected columns x,y", path.display()))),
    };
    rows.map(|(i, line)| {
        let f: Vec<&str> = line.split(',').map(str::trim).collect();
        let get = |k: usize| -> Result<f64> {
            f.get(k)
                .and_then(|s| s.parse::<f64>().ok())
                .filter(|v| v.is_finite())
                .ok_or_else(|| failure::data(format!("{}:{}: bad row '{line}'", path.display(), i + 1)))
        };
        Ok([get(xi)?, get(yi)?])
    })
    .collect()
}
