//! Plain-text grid files: a header line `N d`, then `N` rows of `d` numbers.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use super::QuantGrid;
use crate::error::{Error, Result};

/// Text form with 17 significant digits per coordinate.
pub fn write_grid(grid: &QuantGrid) -> String {
    let mut out = String::with_capacity(grid.points().len() * 25 + 16);
    let _ = writeln!(out, "{} {}", grid.len(), grid.dim());
    for i in 0..grid.len() {
        let row: Vec<String> = grid.point(i).iter().map(|v| format!("{v:.16e}")).collect();
        out.push_str(&row.join(" "));
        out.push('\n');
    }
    out
}

pub fn parse_grid(text: &str) -> Result<QuantGrid> {
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let header = lines
        .next()
        .ok_or_else(|| Error::format("empty grid file"))?;
    let fields: Vec<&str> = header.split_whitespace().collect();
    let [n, d] = fields.as_slice() else {
        return Err(Error::format(format!(
            "grid header must be `N d`, got `{header}`"
        )));
    };
    let n: usize = n
        .parse()
        .map_err(|_| Error::format(format!("bad grid size `{n}`")))?;
    let d: usize = d
        .parse()
        .map_err(|_| Error::format(format!("bad grid dimension `{d}`")))?;
    if n == 0 || d == 0 {
        return Err(Error::format("grid header needs N >= 1 and d >= 1"));
    }

    let mut points = Vec::with_capacity(n * d);
    let mut rows = 0;
    for (lineno, line) in lines.enumerate() {
        rows += 1;
        if rows > n {
            return Err(Error::format(format!(
                "grid declares {n} rows but has more"
            )));
        }
        let before = points.len();
        for tok in line.split_whitespace() {
            let v: f64 = tok
                .parse()
                .map_err(|_| Error::format(format!("row {}: bad number `{tok}`", lineno + 1)))?;
            if !v.is_finite() {
                return Err(Error::format(format!(
                    "row {}: non-finite value",
                    lineno + 1
                )));
            }
            points.push(v);
        }
        if points.len() - before != d {
            return Err(Error::format(format!(
                "row {} has {} values, expected {d}",
                lineno + 1,
                points.len() - before
            )));
        }
    }
    if rows != n {
        return Err(Error::format(format!(
            "grid declares {n} rows but has {rows}"
        )));
    }
    QuantGrid::new(d, points).map_err(|e| Error::format(e.to_string()))
}

pub fn save_grid(grid: &QuantGrid, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path.as_ref(), write_grid(grid)).map_err(Error::at_path(path.as_ref()))?;
    Ok(())
}

pub fn load_grid(path: impl AsRef<Path>) -> Result<QuantGrid> {
    parse_grid(&fs::read_to_string(path.as_ref()).map_err(Error::at_path(path.as_ref()))?)
}
