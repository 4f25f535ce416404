//! Plain-text model checkpoints.
//!
//! The format is line-oriented and self-describing: a version header,
//! schedule kind, architecture, then each parameter tensor as row-major
//! decimal floats. Floats are written in scientific notation with 18
//! significant digits, which round-trips every f64 exactly; a loaded model
//! therefore reproduces outputs bit for bit.

use crate::error::{CoreError, Result};
use crate::model::{Activation, ParamSet, VelocityModel};
use crate::schedule::ScheduleKind;
use ndarray::{Array1, Array2};
use std::fmt::Write as _;
use std::path::Path;

const FORMAT_VERSION: u32 = 1;

fn schedule_name(kind: ScheduleKind) -> &'static str {
    match kind {
        ScheduleKind::OptimalTransport => "optimal_transport",
    }
}

fn parse_schedule(name: &str) -> Result<ScheduleKind> {
    match name {
        "optimal_transport" => Ok(ScheduleKind::OptimalTransport),
        other => Err(CoreError::CheckpointFormat(format!(
            "unknown schedule kind `{other}`"
        ))),
    }
}

pub fn checkpoint_to_string(model: &VelocityModel, schedule: ScheduleKind) -> String {
    let mut out = String::new();
    writeln!(out, "flowsteer-checkpoint {FORMAT_VERSION}").unwrap();
    writeln!(out, "schedule {}", schedule_name(schedule)).unwrap();
    writeln!(out, "data_dim {}", model.data_dim()).unwrap();
    let widths: Vec<String> = model.hidden().iter().map(|w| w.to_string()).collect();
    writeln!(out, "hidden {}", widths.join(" ")).unwrap();
    writeln!(out, "activation {}", model.activation().name()).unwrap();
    writeln!(out, "score_head {}", model.has_score_head()).unwrap();
    for (i, w) in model.params.weights.iter().enumerate() {
        writeln!(out, "tensor weight {i} {} {}", w.nrows(), w.ncols()).unwrap();
        for row in w.outer_iter() {
            let cells: Vec<String> = row.iter().map(|v| format!("{v:.17e}")).collect();
            writeln!(out, "{}", cells.join(" ")).unwrap();
        }
    }
    for (i, b) in model.params.biases.iter().enumerate() {
        writeln!(out, "tensor bias {i} 1 {}", b.len()).unwrap();
        let cells: Vec<String> = b.iter().map(|v| format!("{v:.17e}")).collect();
        writeln!(out, "{}", cells.join(" ")).unwrap();
    }
    writeln!(out, "end").unwrap();
    out
}

pub fn checkpoint_from_string(text: &str) -> Result<(VelocityModel, ScheduleKind)> {
    let mut lines = text.lines();
    let bad = |msg: &str| CoreError::CheckpointFormat(msg.to_string());

    let header = lines.next().ok_or_else(|| bad("empty checkpoint"))?;
    let mut hp = header.split_whitespace();
    if hp.next() != Some("flowsteer-checkpoint") {
        return Err(bad("missing checkpoint header"));
    }
    let version: u32 = hp
        .next()
        .ok_or_else(|| bad("missing version"))?
        .parse()
        .map_err(|_| bad("bad version"))?;
    if version != FORMAT_VERSION {
        return Err(CoreError::CheckpointFormat(format!(
            "unsupported version {version}"
        )));
    }

    let mut schedule = None;
    let mut data_dim = None;
    let mut hidden: Option<Vec<usize>> = None;
    let mut activation = None;
    let mut score_head = None;
    let mut weights: Vec<Array2<f64>> = Vec::new();
    let mut biases: Vec<Array1<f64>> = Vec::new();

    while let Some(line) = lines.next() {
        let mut parts = line.split_whitespace();
        match parts.next() {
            Some("schedule") => {
                schedule = Some(parse_schedule(
                    parts.next().ok_or_else(|| bad("schedule missing value"))?,
                )?);
            }
            Some("data_dim") => {
                data_dim = Some(
                    parts
                        .next()
                        .ok_or_else(|| bad("data_dim missing value"))?
                        .parse::<usize>()
                        .map_err(|_| bad("bad data_dim"))?,
                );
            }
            Some("hidden") => {
                let ws: std::result::Result<Vec<usize>, _> =
                    parts.map(|p| p.parse::<usize>()).collect();
                hidden = Some(ws.map_err(|_| bad("bad hidden widths"))?);
            }
            Some("activation") => {
                activation = Some(Activation::parse(
                    parts.next().ok_or_else(|| bad("activation missing value"))?,
                )?);
            }
            Some("score_head") => {
                score_head = Some(
                    parts
                        .next()
                        .ok_or_else(|| bad("score_head missing value"))?
                        .parse::<bool>()
                        .map_err(|_| bad("bad score_head flag"))?,
                );
            }
            Some("tensor") => {
                let kind = parts.next().ok_or_else(|| bad("tensor missing kind"))?;
                let index: usize = parts
                    .next()
                    .ok_or_else(|| bad("tensor missing index"))?
                    .parse()
                    .map_err(|_| bad("bad tensor index"))?;
                let rows: usize = parts
                    .next()
                    .ok_or_else(|| bad("tensor missing rows"))?
                    .parse()
                    .map_err(|_| bad("bad tensor rows"))?;
                let cols: usize = parts
                    .next()
                    .ok_or_else(|| bad("tensor missing cols"))?
                    .parse()
                    .map_err(|_| bad("bad tensor cols"))?;
                let mut data = Vec::with_capacity(rows * cols);
                for _ in 0..rows {
                    let row = lines.next().ok_or_else(|| bad("tensor truncated"))?;
                    for cell in row.split_whitespace() {
                        data.push(
                            cell.parse::<f64>()
                                .map_err(|_| bad(&format!("bad float `{cell}`")))?,
                        );
                    }
                }
                if data.len() != rows * cols {
                    return Err(bad("tensor cell count mismatch"));
                }
                match kind {
                    "weight" => {
                        if index != weights.len() {
                            return Err(bad("weight tensors out of order"));
                        }
                        weights.push(
                            Array2::from_shape_vec((rows, cols), data)
                                .map_err(|_| bad("bad tensor shape"))?,
                        );
                    }
                    "bias" => {
                        if index != biases.len() {
                            return Err(bad("bias tensors out of order"));
                        }
                        biases.push(Array1::from_vec(data));
                    }
                    other => {
                        return Err(CoreError::CheckpointFormat(format!(
                            "unknown tensor kind `{other}`"
                        )))
                    }
                }
            }
            Some("end") => break,
            Some(other) => {
                return Err(CoreError::CheckpointFormat(format!(
                    "unknown directive `{other}`"
                )))
            }
            None => continue,
        }
    }

    let schedule = schedule.ok_or_else(|| bad("missing schedule"))?;
    let data_dim = data_dim.ok_or_else(|| bad("missing data_dim"))?;
    let hidden = hidden.ok_or_else(|| bad("missing hidden"))?;
    let activation = activation.ok_or_else(|| bad("missing activation"))?;
    let score_head = score_head.ok_or_else(|| bad("missing score_head"))?;

    let expected_tensors = hidden.len() + 1 + usize::from(score_head);
    if weights.len() != expected_tensors || biases.len() != expected_tensors {
        return Err(bad("tensor count does not match architecture"));
    }
    // Shape validation against the declared architecture.
    let mut dims = vec![data_dim + 1];
    dims.extend_from_slice(&hidden);
    for (i, w) in weights.iter().take(hidden.len()).enumerate() {
        if w.nrows() != dims[i] || w.ncols() != dims[i + 1] {
            return Err(bad("trunk tensor shape mismatch"));
        }
    }
    let last = *dims.last().unwrap();
    for w in weights.iter().skip(hidden.len()) {
        if w.nrows() != last || w.ncols() != data_dim {
            return Err(bad("head tensor shape mismatch"));
        }
    }

    let model = VelocityModel::from_parts(
        data_dim,
        hidden,
        activation,
        score_head,
        ParamSet { weights, biases },
    );
    Ok((model, schedule))
}

pub fn save_checkpoint(
    path: impl AsRef<Path>,
    model: &VelocityModel,
    schedule: ScheduleKind,
) -> Result<()> {
    std::fs::write(path, checkpoint_to_string(model, schedule))?;
    Ok(())
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<(VelocityModel, ScheduleKind)> {
    let text = std::fs::read_to_string(path)?;
    checkpoint_from_string(&text)
}
