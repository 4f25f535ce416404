//! Point-set CSV files: one point per row, `d` columns, no header.

use crate::error::{CoreError, Result};
use std::path::Path;

pub fn points_to_csv(points: &[Vec<f64>]) -> String {
    let mut out = String::new();
    for p in points {
        let cells: Vec<String> = p.iter().map(|v| format!("{v:.17e}")).collect();
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    out
}

pub fn points_from_csv(text: &str) -> Result<Vec<Vec<f64>>> {
    let mut points = Vec::new();
    let mut dim = None;
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let row: Result<Vec<f64>> = line
            .split(',')
            .map(|c| {
                c.trim()
                    .parse::<f64>()
                    .map_err(|_| CoreError::Parse(format!("line {}: bad float `{c}`", lineno + 1)))
            })
            .collect();
        let row = row?;
        match dim {
            None => dim = Some(row.len()),
            Some(d) if d != row.len() => {
                return Err(CoreError::DimensionMismatch {
                    expected: d,
                    got: row.len(),
                })
            }
            _ => {}
        }
        points.push(row);
    }
    if points.is_empty() {
        return Err(CoreError::EmptyBatch);
    }
    Ok(points)
}

pub fn write_points(path: impl AsRef<Path>, points: &[Vec<f64>]) -> Result<()> {
    std::fs::write(path, points_to_csv(points))?;
    Ok(())
}

pub fn read_points(path: impl AsRef<Path>) -> Result<Vec<Vec<f64>>> {
    points_from_csv(&std::fs::read_to_string(path)?)
}
