//! Test-set metrics: mean squared error, covariance-normalized error, the
//! chi-square consistency band, mean gain traces and error/innovation
//! decorrelation.

use std::fmt::Write as _;
use std::io::{Read, Write};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::spd_cholesky;
use crate::run::FilterRun;
use crate::ssm::Episode;

/// Probe times of the comparison table (array indices).
pub const DEFAULT_PROBES: [usize; 2] = [70, 80];
/// Trailing window pooled by [`decorrelation_stat`].
pub const DECORRELATION_WINDOW: usize = 50;

fn check_aligned(runs: &[FilterRun], truths: &[Episode]) -> Result<usize> {
    if runs.is_empty() {
        return Err(Error::invalid("no runs"));
    }
    if runs.len() != truths.len() {
        return Err(Error::dim(format!("{} runs for {} episodes", runs.len(), truths.len())));
    }
    let len = runs[0].len();
    for (r, e) in runs.iter().zip(truths) {
        if r.len() != len || e.len() != len {
            return Err(Error::dim(format!("episode {} has mismatched length", e.episode_id)));
        }
        if r.episode_id != e.episode_id {
            return Err(Error::dim(format!("run for episode {} paired with episode {}", r.episode_id, e.episode_id)));
        }
    }
    Ok(len)
}

fn error_at(run: &FilterRun, ep: &Episode, t: usize) -> Vec<f64> {
    ep.x[t].iter().zip(run.steps[t].x_corr.iter()).map(|(a, b)| a - b).collect()
}

/// `EQM(t) = (1/N) Σ_k ‖x_t − x̂_{t|t}‖²`
pub fn eqm(runs: &[FilterRun], truths: &[Episode]) -> Result<Vec<f64>> {
    let len = check_aligned(runs, truths)?;
    let n = runs.len() as f64;
    Ok((0..len)
        .map(|t| {
            runs.iter()
                .zip(truths)
                .map(|(r, e)| error_at(r, e, t).iter().map(|v| v * v).sum::<f64>())
                .sum::<f64>()
                / n
        })
        .collect())
}

/// `10 log10(v)`; zero maps to negative infinity.
pub fn to_db(v: f64) -> f64 {
    if v == 0.0 {
        f64::NEG_INFINITY
    } else {
        10.0 * v.log10()
    }
}

/// `EQM_n(t) = (1/N) Σ_k eᵀ P_{t|t}⁻¹ e`
///
/// Accumulates in the same order as [`eqm`], so `P = I` reproduces it bit for bit.
pub fn eqm_normalized(runs: &[FilterRun], truths: &[Episode]) -> Result<Vec<f64>> {
    let len = check_aligned(runs, truths)?;
    let n = runs.len() as f64;
    (0..len)
        .map(|t| {
            let mut total = 0.0;
            for (r, e) in runs.iter().zip(truths) {
                let err = error_at(r, e, t);
                let chol = spd_cholesky(&r.steps[t].p_corr, "corrected covariance")
                    .map_err(|err| err.at_step(Some(e.episode_id), t))?;
                let sol = chol.solve(&nalgebra::DVector::from_column_slice(&err));
                total += err.iter().zip(sol.iter()).map(|(a, b)| a * b).sum::<f64>();
            }
            Ok(total / n)
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Chi2Band {
    pub mean: f64,
    pub variance: f64,
    pub low: f64,
    pub high: f64,
}

impl Chi2Band {
    pub fn contains(&self, v: f64) -> bool {
        v >= self.low && v <= self.high
    }
}

/// Normal approximation of the average of `N` chi-square variables with `m`
/// degrees of freedom: mean `m`, variance `2m/N`, band `mean ± k σ`.
pub fn chi2_band(m: usize, n: usize, k_sigma: f64) -> Result<Chi2Band> {
    if m == 0 || n == 0 {
        return Err(Error::invalid("m and N must be at least 1"));
    }
    let mean = m as f64;
    let variance = 2.0 * mean / n as f64;
    let half = k_sigma * variance.sqrt();
    Ok(Chi2Band { mean, variance, low: mean - half, high: mean + half })
}

/// Per-step mean gain over the runs.
pub fn gain_trace(runs: &[FilterRun]) -> Result<Vec<DMatrix<f64>>> {
    let first = runs.first().ok_or_else(|| Error::invalid("no runs"))?;
    let len = first.len();
    if runs.iter().any(|r| r.len() != len) {
        return Err(Error::dim("runs of different lengths"));
    }
    let n = runs.len() as f64;
    Ok((0..len)
        .map(|t| {
            let mut acc = DMatrix::zeros(first.steps[t].gain.nrows(), first.steps[t].gain.ncols());
            for r in runs {
                acc += &r.steps[t].gain;
            }
            acc / n
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct Decorrelation {
    /// Pooled estimate of `E[(x_t − x̂_{t|t}) ŷ_tᵀ]`, `m x n`.
    pub cross_cov: DMatrix<f64>,
    pub std_err: DMatrix<f64>,
    pub samples: usize,
}

impl Decorrelation {
    /// Largest `|estimate| / standard error` over the entries.
    pub fn max_z_score(&self) -> f64 {
        self.cross_cov
            .iter()
            .zip(self.std_err.iter())
            .map(|(c, s)| if *s > 0.0 { c.abs() / s } else if *c == 0.0 { 0.0 } else { f64::INFINITY })
            .fold(0.0, f64::max)
    }
}

/// Pools error/innovation products over the last `window` steps of every run.
pub fn decorrelation_stat(runs: &[FilterRun], truths: &[Episode], window: usize) -> Result<Decorrelation> {
    let len = check_aligned(runs, truths)?;
    let start = len.saturating_sub(window.max(1));
    let (m, n) = (runs[0].state_dim(), runs[0].meas_dim());
    let mut sum = DMatrix::<f64>::zeros(m, n);
    let mut sum_sq = DMatrix::<f64>::zeros(m, n);
    let mut count = 0usize;
    for (r, e) in runs.iter().zip(truths) {
        for t in start..len {
            let err = error_at(r, e, t);
            let y = &r.steps[t].innovation;
            for i in 0..m {
                for j in 0..n {
                    let p = err[i] * y[j];
                    sum[(i, j)] += p;
                    sum_sq[(i, j)] += p * p;
                }
            }
            count += 1;
        }
    }
    let c = count as f64;
    let mean = &sum / c;
    let std_err = DMatrix::from_fn(m, n, |i, j| {
        let var = if count > 1 { ((sum_sq[(i, j)] - c * mean[(i, j)].powi(2)) / (c - 1.0)).max(0.0) } else { 0.0 };
        (var / c).sqrt()
    });
    Ok(Decorrelation { cross_cov: mean, std_err, samples: count })
}

/// Per-step metrics of one estimator over a test set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub estimator_id: String,
    pub n: usize,
    pub eqm: Vec<f64>,
    pub eqm_n: Vec<f64>,
    pub k_pos: Vec<f64>,
    pub k_vel: Vec<f64>,
    /// Root mean of the estimated position variance.
    pub pos_std_est: Vec<f64>,
    /// Root mean squared position error.
    pub pos_std_emp: Vec<f64>,
}

impl MetricsReport {
    pub fn build(estimator_id: &str, runs: &[FilterRun], truths: &[Episode]) -> Result<Self> {
        let eqm_series = eqm(runs, truths)?;
        let eqm_n = eqm_normalized(runs, truths)?;
        let gains = gain_trace(runs)?;
        let len = eqm_series.len();
        let n = runs.len() as f64;
        let pos_std_est = (0..len)
            .map(|t| (runs.iter().map(|r| r.steps[t].p_corr[(0, 0)]).sum::<f64>() / n).sqrt())
            .collect();
        let pos_std_emp = (0..len)
            .map(|t| (runs.iter().zip(truths).map(|(r, e)| error_at(r, e, t)[0].powi(2)).sum::<f64>() / n).sqrt())
            .collect();
        Ok(Self {
            estimator_id: estimator_id.to_string(),
            n: runs.len(),
            eqm: eqm_series,
            eqm_n,
            k_pos: gains.iter().map(|k| k[(0, 0)]).collect(),
            k_vel: gains.iter().map(|k| if k.nrows() > 1 { k[(1, 0)] } else { f64::NAN }).collect(),
            pos_std_est,
            pos_std_emp,
        })
    }

    pub fn len(&self) -> usize {
        self.eqm.len()
    }

    pub fn is_empty(&self) -> bool {
        self.eqm.is_empty()
    }

    pub fn eqm_db(&self, t: usize) -> f64 {
        to_db(self.eqm[t])
    }
}

pub const METRICS_COLUMNS: [&str; 9] =
    ["estimator_id", "t", "eqm", "eqm_db", "eqmn", "k_pos_mean", "k_vel_mean", "pos_std_est", "pos_std_emp"];

/// Writes reports as metrics CSV rows, after `#` comment lines.
pub fn write_metrics_csv<W: Write>(reports: &[MetricsReport], preamble: &[String], mut w: W) -> Result<()> {
    for line in preamble {
        writeln!(w, "# {line}")?;
    }
    let mut out = csv::Writer::from_writer(w);
    let err = |e: csv::Error| Error::Internal(e.to_string());
    out.write_record(METRICS_COLUMNS).map_err(err)?;
    for r in reports {
        for t in 0..r.len() {
            out.write_record([
                r.estimator_id.clone(),
                t.to_string(),
                r.eqm[t].to_string(),
                r.eqm_db(t).to_string(),
                r.eqm_n[t].to_string(),
                r.k_pos[t].to_string(),
                r.k_vel[t].to_string(),
                r.pos_std_est[t].to_string(),
                r.pos_std_emp[t].to_string(),
            ])
            .map_err(err)?;
        }
    }
    out.flush()?;
    Ok(())
}

/// Reads metrics CSV back into per-estimator reports (in first-seen order).
/// Rows of one estimator must be contiguous with `t = 0, 1, 2, ...`.
pub fn read_metrics_csv<R: Read>(r: R) -> Result<Vec<MetricsReport>> {
    let mut rdr = csv::ReaderBuilder::new().comment(Some(b'#')).flexible(false).from_reader(r);
    let headers = rdr.headers().map_err(|e| csv_parse(&e))?.clone();
    if headers.is_empty() {
        return Err(Error::Parse { line: 1, message: "empty metrics file".into() });
    }
    if headers.len() < METRICS_COLUMNS.len() || headers.iter().zip(METRICS_COLUMNS).any(|(a, b)| a != b) {
        return Err(Error::Parse { line: 1, message: format!("unexpected header {:?}", headers.iter().collect::<Vec<_>>()) });
    }
    let mut reports: Vec<MetricsReport> = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| csv_parse(&e))?;
        let line = rec.position().map_or(0, |p| p.line() as usize);
        let num = |i: usize| -> Result<f64> {
            rec[i].trim().parse::<f64>().map_err(|_| Error::Parse {
                line,
                message: format!("field `{}`: {:?} is not a number", METRICS_COLUMNS[i], &rec[i]),
            })
        };
        let id = rec[0].to_string();
        let t: usize = rec[1]
            .parse()
            .map_err(|_| Error::Parse { line, message: format!("field `t`: {:?} is not an index", &rec[1]) })?;
        let report = match reports.last_mut() {
            Some(r) if r.estimator_id == id => r,
            _ => {
                if reports.iter().any(|r| r.estimator_id == id) {
                    return Err(Error::Parse { line, message: format!("rows of estimator {id:?} are not contiguous") });
                }
                reports.push(MetricsReport {
                    estimator_id: id,
                    n: 0,
                    eqm: vec![],
                    eqm_n: vec![],
                    k_pos: vec![],
                    k_vel: vec![],
                    pos_std_est: vec![],
                    pos_std_emp: vec![],
                });
                reports.last_mut().expect("just pushed")
            }
        };
        if t != report.len() {
            return Err(Error::Parse { line, message: format!("field `t`: expected {}, found {t}", report.len()) });
        }
        report.eqm.push(num(2)?);
        report.eqm_n.push(num(4)?);
        report.k_pos.push(num(5)?);
        report.k_vel.push(num(6)?);
        report.pos_std_est.push(num(7)?);
        report.pos_std_emp.push(num(8)?);
    }
    if reports.is_empty() {
        return Err(Error::Parse { line: 1, message: "no metric rows".into() });
    }
    Ok(reports)
}

fn csv_parse(e: &csv::Error) -> Error {
    let line = e.position().map_or(0, |p| p.line() as usize);
    Error::Parse { line, message: e.to_string() }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonRow {
    pub estimator_id: String,
    /// `(EQM in dB, EQM_n)` per probe.
    pub cells: Vec<(f64, f64)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonTable {
    pub probes: Vec<usize>,
    pub rows: Vec<ComparisonRow>,
}

pub fn compare(reports: &[MetricsReport], probes: &[usize]) -> Result<ComparisonTable> {
    let first = reports.first().ok_or_else(|| Error::invalid("no reports to compare"))?;
    let len = first.len();
    if reports.iter().any(|r| r.len() != len) {
        return Err(Error::invalid("reports cover different horizons"));
    }
    if probes.is_empty() {
        return Err(Error::invalid("no probe times"));
    }
    if let Some(&p) = probes.iter().find(|&&p| p >= len) {
        return Err(Error::invalid(format!("probe t = {p} is beyond the horizon T = {len}")));
    }
    Ok(ComparisonTable {
        probes: probes.to_vec(),
        rows: reports
            .iter()
            .map(|r| ComparisonRow {
                estimator_id: r.estimator_id.clone(),
                cells: probes.iter().map(|&t| (r.eqm_db(t), r.eqm_n[t])).collect(),
            })
            .collect(),
    })
}

impl ComparisonTable {
    pub fn columns(&self) -> Vec<String> {
        let mut cols = vec!["estimator".to_string()];
        for t in &self.probes {
            cols.push(format!("eqm_db@{t}"));
            cols.push(format!("eqmn@{t}"));
        }
        cols
    }

    pub fn write_csv<W: Write>(&self, preamble: &[String], mut w: W) -> Result<()> {
        for line in preamble {
            writeln!(w, "# {line}")?;
        }
        writeln!(w, "{}", self.columns().join(","))?;
        for row in &self.rows {
            let mut fields = vec![row.estimator_id.clone()];
            for (db, n) in &row.cells {
                fields.push(db.to_string());
                fields.push(n.to_string());
            }
            writeln!(w, "{}", fields.join(","))?;
        }
        Ok(())
    }

    /// Fixed-width text rendering (EQM in dB to one decimal, EQM_n to two).
    pub fn render(&self) -> String {
        let id_w = self.rows.iter().map(|r| r.estimator_id.len()).max().unwrap_or(0).max(9);
        let mut s = String::new();
        let _ = write!(s, "{:<id_w$}", "estimator");
        for t in &self.probes {
            let _ = write!(s, " | {:>9} {:>9}", format!("EQM({t})"), format!("EQMn({t})"));
        }
        s.push('\n');
        let _ = writeln!(s, "{}", "-".repeat(id_w + self.probes.len() * 22));
        for row in &self.rows {
            let _ = write!(s, "{:<id_w$}", row.estimator_id);
            for (db, n) in &row.cells {
                let _ = write!(s, " | {:>9} {:>9}", format!("{db:.1} dB"), format!("{n:.2}"));
            }
            s.push('\n');
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::run::StepRecord;
    use crate::ssm::{NoiseSchedule, ScenarioId};
    use nalgebra::DVector;

    fn episode(id: u64, x: Vec<Vec<f64>>) -> Episode {
        let len = x.len();
        Episode {
            episode_id: id,
            seed: 0,
            schedule: NoiseSchedule::with_scenario(vec![1.0; len], ScenarioId::Custom).unwrap(),
            z: vec![vec![0.0]; len],
            x,
        }
    }

    fn run(id: u64, est: Vec<Vec<f64>>, p: DMatrix<f64>) -> FilterRun {
        FilterRun {
            estimator_id: "t".into(),
            episode_id: id,
            steps: est
                .into_iter()
                .map(|x| StepRecord {
                    x_pred: DVector::from_vec(x.clone()),
                    x_corr: DVector::from_vec(x),
                    p_pred: None,
                    p_corr: p.clone(),
                    gain: DMatrix::from_row_slice(2, 1, &[0.5, 0.1]),
                    innovation: DVector::from_column_slice(&[1.0]),
                    innovation_cov: None,
                })
                .collect(),
        }
    }

    #[test]
    fn eqm_cases() {
        let eps = vec![episode(0, vec![vec![3.0, 4.0], vec![1.0, 1.0]])];
        let perfect = vec![run(0, vec![vec![3.0, 4.0], vec![1.0, 1.0]], DMatrix::identity(2, 2))];
        let v = eqm(&perfect, &eps).unwrap();
        assert_eq!(v, vec![0.0, 0.0]);
        assert_eq!(to_db(v[0]), f64::NEG_INFINITY);
        let off = vec![run(0, vec![vec![0.0, 0.0], vec![1.0, 1.0]], DMatrix::identity(2, 2))];
        let v = eqm(&off, &eps).unwrap();
        assert_eq!(v[0], 25.0);
        assert!((to_db(v[0]) - 13.979_400_086_720_377).abs() < 1e-12);
        assert!(eqm(&off, &[]).is_err());
    }

    #[test]
    fn normalized_cases() {
        let eps = vec![episode(0, vec![vec![2.0, 0.0]])];
        let r = vec![run(0, vec![vec![0.0, 0.0]], DMatrix::from_row_slice(2, 2, &[4.0, 0.0, 0.0, 1.0]))];
        assert!((eqm_normalized(&r, &eps).unwrap()[0] - 1.0).abs() < 1e-15);
        let r = vec![run(0, vec![vec![2.0, 0.0]], DMatrix::identity(2, 2))];
        assert_eq!(eqm_normalized(&r, &eps).unwrap()[0], 0.0);
        let bad = vec![run(0, vec![vec![2.0, 0.0]], DMatrix::zeros(2, 2))];
        let err = eqm_normalized(&bad, &eps).unwrap_err();
        assert!(err.to_string().contains("episode 0"), "{err}");
    }

    #[test]
    fn band_cases() {
        let b = chi2_band(2, 1000, 4.0).unwrap();
        assert_eq!(b.mean, 2.0);
        assert!((b.variance - 0.004).abs() < 1e-15);
        assert!((b.low - 1.747).abs() < 1e-3 && (b.high - 2.253).abs() < 1e-3);
        let b = chi2_band(1, 1, 1.0).unwrap();
        assert_eq!((b.mean, b.variance), (1.0, 2.0));
        assert!(chi2_band(0, 1, 1.0).is_err());
    }

    #[test]
    fn identical_runs_gain_trace() {
        let r = run(0, vec![vec![0.0, 0.0]; 3], DMatrix::identity(2, 2));
        let tr = gain_trace(&[r.clone(), r.clone(), r.clone()]).unwrap();
        for (t, k) in tr.iter().enumerate() {
            assert!((k - &r.steps[t].gain).amax() < 1e-15);
        }
    }

    #[test]
    fn decorrelation_single_episode() {
        let eps = vec![episode(0, vec![vec![1.0, 0.0], vec![-1.0, 0.0], vec![0.5, 0.0]])];
        let r = vec![run(0, vec![vec![0.0, 0.0]; 3], DMatrix::identity(2, 2))];
        let d = decorrelation_stat(&r, &eps, 50).unwrap();
        assert_eq!(d.samples, 3);
        assert!(d.std_err.iter().all(|s| s.is_finite()));
    }

    #[test]
    fn compare_cases() {
        let eps = vec![episode(0, vec![vec![1.0, 0.0]; 150])];
        let r = vec![run(0, vec![vec![0.0, 0.0]; 150], DMatrix::identity(2, 2))];
        let rep = MetricsReport::build("a", &r, &eps).unwrap();
        let t = compare(std::slice::from_ref(&rep), &[70]).unwrap();
        assert_eq!(t.rows.len(), 1);
        assert_eq!(t.rows[0].cells.len(), 1);
        assert!(matches!(compare(&[rep], &[200]), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn metrics_csv_round_trip() {
        let eps = vec![episode(0, vec![vec![1.0, 0.0]; 4])];
        let r = vec![run(0, vec![vec![0.0, 0.0]; 4], DMatrix::identity(2, 2))];
        let mut rep = MetricsReport::build("a", &r, &eps).unwrap();
        rep.eqm[1] = 0.0;
        rep.eqm_n[2] = 0.1 + 0.2;
        let mut buf = Vec::new();
        write_metrics_csv(std::slice::from_ref(&rep), &["cmd".into()], &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.contains(",-inf,"));
        let back = read_metrics_csv(text.as_bytes()).unwrap();
        assert_eq!(back[0].eqm, rep.eqm);
        assert_eq!(back[0].eqm_n, rep.eqm_n);
        assert!(read_metrics_csv("".as_bytes()).is_err());
        assert!(read_metrics_csv(&b"estimator_id,t\n"[..]).is_err());
    }
}
