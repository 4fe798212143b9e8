use std::fs::File;
use std::io::Write;
use std::path::Path;

use crate::models::TrajectoryLog;
use crate::{Error, Result};

fn io_err(e: impl std::fmt::Display) -> Error {
    Error::Io(e.to_string())
}

// 17 significant digits round-trip every f64.
fn num(v: f64) -> String {
    format!("{v:.16e}")
}

/// One row per step and seed:
/// `seed, t, x_true_*, y_*, <filter>_mean_*, <filter>_sd_*`.
///
/// Measurement cells are empty on predict-only steps and filter cells are
/// empty after divergence. Rows are sorted by `(seed, t)`.
pub fn write_csv<W: Write>(logs: &[(u64, TrajectoryLog)], writer: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(writer);
    let Some((_, first)) = logs.first() else {
        return Err(Error::Argument("no runs to write".into()));
    };
    let nx = first.initial_state.len();
    let ny = first
        .measurements
        .iter()
        .flatten()
        .next()
        .map_or(0, |y| y.len());
    let names: Vec<&str> = first.tracks.iter().map(|t| t.name.as_str()).collect();

    let mut header = vec!["seed".to_string(), "t".to_string()];
    header.extend((0..nx).map(|i| format!("x_true_{i}")));
    header.extend((0..ny).map(|i| format!("y_{i}")));
    for name in &names {
        header.extend((0..nx).map(|i| format!("{name}_mean_{i}")));
        header.extend((0..nx).map(|i| format!("{name}_sd_{i}")));
    }
    out.write_record(&header).map_err(io_err)?;

    let mut order: Vec<usize> = (0..logs.len()).collect();
    order.sort_by_key(|&i| logs[i].0);
    for i in order {
        let (seed, log) = &logs[i];
        let track_names: Vec<&str> = log.tracks.iter().map(|t| t.name.as_str()).collect();
        if track_names != names {
            return Err(Error::Argument("runs have different filter sets".into()));
        }
        for (step, state) in log.states.iter().enumerate() {
            let mut row = Vec::with_capacity(header.len());
            row.push(seed.to_string());
            row.push((step + 1).to_string());
            row.extend(state.iter().map(|v| num(*v)));
            match &log.measurements[step] {
                Some(y) => row.extend(y.iter().map(|v| num(*v))),
                None => row.extend(std::iter::repeat_n(String::new(), ny)),
            }
            for track in &log.tracks {
                match (track.means.get(step), track.covariances.get(step)) {
                    (Some(m), Some(c)) => {
                        row.extend(m.iter().map(|v| num(*v)));
                        row.extend(c.diagonal().iter().map(|v| num(v.max(0.0).sqrt())));
                    }
                    _ => row.extend(std::iter::repeat_n(String::new(), 2 * nx)),
                }
            }
            out.write_record(&row).map_err(io_err)?;
        }
    }
    out.flush().map_err(io_err)
}

pub fn write_csv_file(logs: &[(u64, TrajectoryLog)], path: &Path) -> Result<()> {
    let file = File::create(path).map_err(|e| io_err(format!("{}: {e}", path.display())))?;
    write_csv(logs, std::io::BufWriter::new(file))
}
