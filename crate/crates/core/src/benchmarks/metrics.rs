use serde::Serialize;

use crate::models::{FilterTrack, TrajectoryLog};
use crate::{Error, Result};

/// Error statistics of one filter on one trajectory.
///
/// Only the steps before divergence are evaluated.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FilterMetrics {
    pub filter: String,
    /// Per state dimension.
    pub rmse: Vec<f64>,
    /// Root of the mean squared error averaged over dimensions.
    pub rmse_total: f64,
    /// Median of `|error|` over all steps and dimensions.
    pub median_abs_error: f64,
    /// Euclidean error over the position dimensions, per step.
    #[serde(skip)]
    pub position_error: Vec<f64>,
    pub mean_position_error: f64,
    /// Largest position error within one step of each tail-drawn measurement.
    pub outlier_spikes: Vec<f64>,
    pub max_outlier_spike: Option<f64>,
    pub steps_evaluated: usize,
    pub diverged_at: Option<usize>,
    pub divergence_reason: Option<String>,
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

/// Median with `None` standing for a diverged run (ranked as +∞).
pub fn median_with_divergence(values: &[Option<f64>]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v: Vec<f64> = values.iter().map(|x| x.unwrap_or(f64::INFINITY)).collect();
    let m = median(&mut v);
    m.is_finite().then_some(m)
}

fn track_metrics(log: &TrajectoryLog, track: &FilterTrack, position_dims: &[usize]) -> Result<FilterMetrics> {
    let n = track.means.len().min(log.len());
    if n == 0 {
        return Err(Error::Argument(format!("filter '{}' has no estimates", track.name)));
    }
    let dim = log.states[0].len();
    if position_dims.iter().any(|&d| d >= dim) {
        return Err(Error::Argument("position dimension out of range".into()));
    }
    let mut sq = vec![0.0; dim];
    let mut abs = Vec::with_capacity(n * dim);
    let mut position_error = Vec::with_capacity(n);
    for (truth, mean) in log.states.iter().zip(&track.means).take(n) {
        Error::check_dim("estimate", dim, mean.len())?;
        let e = mean - truth;
        for (i, v) in e.iter().enumerate() {
            sq[i] += v * v;
            abs.push(v.abs());
        }
        position_error.push(position_dims.iter().map(|&d| e[d] * e[d]).sum::<f64>().sqrt());
    }
    let rmse: Vec<f64> = sq.iter().map(|s| (s / n as f64).sqrt()).collect();
    let rmse_total = (rmse.iter().map(|r| r * r).sum::<f64>() / dim as f64).sqrt();
    let outlier_spikes: Vec<f64> = log
        .from_tail
        .iter()
        .enumerate()
        .filter(|&(i, &tail)| tail && i < n)
        .map(|(i, _)| {
            let lo = i.saturating_sub(1);
            let hi = (i + 1).min(n - 1);
            position_error[lo..=hi].iter().copied().fold(0.0, f64::max)
        })
        .collect();
    Ok(FilterMetrics {
        filter: track.name.clone(),
        rmse,
        rmse_total,
        median_abs_error: median(&mut abs),
        mean_position_error: position_error.iter().sum::<f64>() / n as f64,
        position_error,
        max_outlier_spike: outlier_spikes.iter().copied().reduce(f64::max),
        outlier_spikes,
        steps_evaluated: n,
        diverged_at: track.diverged_at,
        divergence_reason: track.divergence_reason.clone(),
    })
}

/// Metrics of every filter track in `log`.
pub fn compute_metrics(log: &TrajectoryLog, position_dims: &[usize]) -> Result<Vec<FilterMetrics>> {
    if log.is_empty() {
        return Err(Error::Argument("cannot compute metrics of an empty log".into()));
    }
    if log.tracks.is_empty() {
        return Err(Error::Argument("log has no filter tracks".into()));
    }
    log.tracks
        .iter()
        .map(|t| track_metrics(log, t, position_dims))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::{Matrix, Vector};

    fn log_with(truth: &[[f64; 2]], est: &[[f64; 2]], tails: &[bool]) -> TrajectoryLog {
        TrajectoryLog {
            initial_state: Vector::zeros(2),
            states: truth.iter().map(|s| Vector::from_row_slice(s)).collect(),
            measurements: vec![None; truth.len()],
            from_tail: tails.to_vec(),
            tracks: vec![FilterTrack {
                name: "f".into(),
                means: est.iter().map(|s| Vector::from_row_slice(s)).collect(),
                covariances: vec![Matrix::identity(2, 2); est.len()],
                diverged_at: None,
                divergence_reason: None,
            }],
        }
    }

    #[test]
    fn perfect_estimates() {
        let t = [[1.0, 2.0], [3.0, 4.0], [5.0, 6.0]];
        let m = &compute_metrics(&log_with(&t, &t, &[false, true, false]), &[0, 1]).unwrap()[0];
        assert_eq!(m.rmse, vec![0.0, 0.0]);
        assert_eq!(m.rmse_total, 0.0);
        assert_eq!(m.median_abs_error, 0.0);
        assert_eq!(m.mean_position_error, 0.0);
        assert_eq!(m.outlier_spikes, vec![0.0]);
    }

    #[test]
    fn constant_offset() {
        let t = [[1.0, 2.0], [3.0, 4.0], [5.0, 6.0], [7.0, 8.0]];
        let e = [[2.0, 2.0], [4.0, 4.0], [6.0, 6.0], [8.0, 8.0]];
        let m = &compute_metrics(&log_with(&t, &e, &[false; 4]), &[0]).unwrap()[0];
        assert_eq!(m.rmse, vec![1.0, 0.0]);
        assert_eq!(m.mean_position_error, 1.0);
        assert_eq!(m.median_abs_error, 0.5);
        assert_eq!(m.max_outlier_spike, None);
    }

    #[test]
    fn hand_computed_run() {
        // errors on dim 0: 0, 3, -4, 1; dim 1: 0
        let t = [[0.0, 0.0]; 4];
        let e = [[0.0, 0.0], [3.0, 0.0], [-4.0, 0.0], [1.0, 0.0]];
        let m = &compute_metrics(&log_with(&t, &e, &[true, false, false, true]), &[0, 1]).unwrap()[0];
        assert!((m.rmse[0] - (26.0_f64 / 4.0).sqrt()).abs() < 1e-15);
        assert!((m.rmse_total - (26.0_f64 / 8.0).sqrt()).abs() < 1e-15);
        assert_eq!(m.mean_position_error, 2.0);
        // windows {0,1} and {2,3}
        assert_eq!(m.outlier_spikes, vec![3.0, 4.0]);
        assert_eq!(m.max_outlier_spike, Some(4.0));
    }

    #[test]
    fn truncated_track() {
        let t = [[0.0, 0.0]; 4];
        let mut log = log_with(&t, &[[1.0, 0.0], [1.0, 0.0]], &[false, false, true, false]);
        log.tracks[0].diverged_at = Some(3);
        let m = &compute_metrics(&log, &[0]).unwrap()[0];
        assert_eq!(m.steps_evaluated, 2);
        assert!(m.outlier_spikes.is_empty());
        assert_eq!(m.diverged_at, Some(3));
    }

    #[test]
    fn empty_log_rejected() {
        assert!(matches!(
            compute_metrics(&TrajectoryLog::default(), &[0]),
            Err(Error::Argument(_))
        ));
    }

    #[test]
    fn divergence_ranks_last() {
        assert_eq!(median_with_divergence(&[Some(1.0), None, Some(3.0)]), Some(3.0));
        assert_eq!(median_with_divergence(&[Some(1.0), None, None]), None);
        assert_eq!(median_with_divergence(&[Some(1.0), Some(2.0)]), Some(1.5));
    }
}
