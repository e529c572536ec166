//! Per-step filter records shared by the classical and learned filters.

use std::io::Write;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord {
    /// `x̂_{t|t-1}`
    pub x_pred: DVector<f64>,
    /// `x̂_{t|t}`
    pub x_corr: DVector<f64>,
    /// `P_{t|t-1}`; the learned filter never forms it.
    pub p_pred: Option<DMatrix<f64>>,
    /// `P_{t|t}`
    pub p_corr: DMatrix<f64>,
    pub gain: DMatrix<f64>,
    pub innovation: DVector<f64>,
    pub innovation_cov: Option<DMatrix<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FilterRun {
    pub estimator_id: String,
    pub episode_id: u64,
    pub steps: Vec<StepRecord>,
}

impl FilterRun {
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn state_dim(&self) -> usize {
        self.steps.first().map_or(0, |s| s.x_corr.len())
    }

    pub fn meas_dim(&self) -> usize {
        self.steps.first().map_or(0, |s| s.innovation.len())
    }
}

fn upper_pairs(m: usize) -> impl Iterator<Item = (usize, usize)> {
    (0..m).flat_map(move |i| (i..m).map(move |j| (i, j)))
}

fn csv_header(m: usize, n: usize) -> Vec<String> {
    let mut cols = vec!["episode_id".to_string(), "t".into(), "phase".into()];
    cols.extend((0..m).map(|i| format!("x_hat{i}")));
    cols.extend(upper_pairs(m).map(|(i, j)| format!("P{i}{j}")));
    cols.extend((0..m).flat_map(|i| (0..n).map(move |j| format!("K{i}{j}"))));
    cols.extend((0..n).map(|i| format!("y{i}")));
    cols.extend(upper_pairs(n).map(|(i, j)| format!("S{i}{j}")));
    cols
}

/// Writes one row per step and phase. Predicted rows carry `x̂_{t|t-1}`,
/// `P_{t|t-1}`, the innovation and its covariance; corrected rows carry
/// `x̂_{t|t}`, `P_{t|t}` and the gain. Unavailable fields are left empty.
/// `preamble` lines are emitted first as `#` comments.
pub fn write_runs_csv<W: Write>(runs: &[FilterRun], preamble: &[String], w: W) -> Result<()> {
    let (m, n) = runs.first().map_or((0, 0), |r| (r.state_dim(), r.meas_dim()));
    let mut w = w;
    for line in preamble {
        writeln!(w, "# {line}")?;
    }
    let mut out = csv::Writer::from_writer(w);
    let csv_err = |e: csv::Error| Error::Internal(e.to_string());
    out.write_record(csv_header(m, n)).map_err(csv_err)?;
    let empty = |k: usize| std::iter::repeat_n(String::new(), k);
    for run in runs {
        if run.state_dim() != m || run.meas_dim() != n {
            return Err(Error::dim("runs with different dimensions in one export"));
        }
        for (t, s) in run.steps.iter().enumerate() {
            let mut row = vec![run.episode_id.to_string(), t.to_string(), "predicted".into()];
            row.extend(s.x_pred.iter().map(f64::to_string));
            match &s.p_pred {
                Some(p) => row.extend(upper_pairs(m).map(|(i, j)| p[(i, j)].to_string())),
                None => row.extend(empty(m * (m + 1) / 2)),
            }
            row.extend(empty(m * n));
            row.extend(s.innovation.iter().map(f64::to_string));
            match &s.innovation_cov {
                Some(c) => row.extend(upper_pairs(n).map(|(i, j)| c[(i, j)].to_string())),
                None => row.extend(empty(n * (n + 1) / 2)),
            }
            out.write_record(&row).map_err(csv_err)?;

            let mut row = vec![run.episode_id.to_string(), t.to_string(), "corrected".into()];
            row.extend(s.x_corr.iter().map(f64::to_string));
            row.extend(upper_pairs(m).map(|(i, j)| s.p_corr[(i, j)].to_string()));
            row.extend((0..m).flat_map(|i| (0..n).map(move |j| (i, j))).map(|(i, j)| s.gain[(i, j)].to_string()));
            row.extend(empty(n + n * (n + 1) / 2));
            out.write_record(&row).map_err(csv_err)?;
        }
    }
    out.flush()?;
    Ok(())
}
